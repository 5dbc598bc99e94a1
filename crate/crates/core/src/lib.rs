pub mod blocks;
pub mod cemit;
pub mod cli;
pub mod directives;
pub mod error;
pub mod irinterp;
pub mod matval;
pub mod model;
pub mod optimizer;
pub mod trace;
pub mod validate;

pub use error::{Error, Result};
pub use matval::{BinOp, CmpOp, Dtype, MathFn, MatValue};
pub use trace::{numerics, BVar, TraceContext, Tracer, Val};
