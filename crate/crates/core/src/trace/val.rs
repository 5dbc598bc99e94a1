//! Operator-overloaded front end for writing block behaviors.
//!
//! A [`Tracer`] owns a [`TraceContext`]; [`Val`]s borrow it and implement
//! `+ - * /` and unary `-`. Because operators cannot return `Result`, the
//! first error is kept in the tracer and every later operation becomes a
//! no-op; [`Tracer::check`] reports it.

use std::cell::{Ref, RefCell, RefMut};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{BVar, TraceContext};
use crate::error::{Error, Result};
use crate::matval::{CmpOp, Dtype, MathFn, MatValue};

pub struct Tracer {
    ctx: RefCell<TraceContext>,
    error: RefCell<Option<Error>>,
}

impl Default for Tracer {
    fn default() -> Self {
        Self::new(TraceContext::new())
    }
}

impl Tracer {
    pub fn new(ctx: TraceContext) -> Self {
        Tracer {
            ctx: RefCell::new(ctx),
            error: RefCell::new(None),
        }
    }

    pub fn ctx(&self) -> Ref<'_, TraceContext> {
        self.ctx.borrow()
    }

    pub fn ctx_mut(&self) -> RefMut<'_, TraceContext> {
        self.ctx.borrow_mut()
    }

    pub fn into_inner(self) -> Result<TraceContext> {
        if let Some(e) = self.error.into_inner() {
            return Err(e);
        }
        Ok(self.ctx.into_inner())
    }

    /// The first error raised by an operator, if any.
    pub fn check(&self) -> Result<()> {
        match &*self.error.borrow() {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    pub fn failed(&self) -> bool {
        self.error.borrow().is_some()
    }

    pub fn fail(&self, e: Error) {
        let mut slot = self.error.borrow_mut();
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    pub fn wrap(&self, b: BVar) -> Val<'_> {
        Val { t: self, b }
    }

    pub fn num(&self, v: MatValue) -> Val<'_> {
        self.wrap(BVar::numeric(v))
    }

    /// A numeric f64 scalar.
    pub fn scalar(&self, x: f64) -> Val<'_> {
        self.num(MatValue::scalar(x))
    }

    /// A numeric f64 matrix from row-major rows.
    pub fn mat<R: AsRef<[f64]>>(&self, rows: &[R]) -> Val<'_> {
        match MatValue::from_rows(Dtype::F64, rows) {
            Ok(v) => self.num(v),
            Err(e) => self.poisoned(e),
        }
    }

    pub fn eye(&self, n: usize) -> Val<'_> {
        self.num(MatValue::eye(n))
    }

    pub fn symbolic(&self, v: MatValue, name: &str) -> Val<'_> {
        let r = self.ctx_mut().symbolics(v.clone(), Some(name));
        match r {
            Ok(b) => self.wrap(b),
            Err(e) => self.poisoned_like(e, v),
        }
    }

    fn poisoned(&self, e: Error) -> Val<'_> {
        self.poisoned_like(e, MatValue::empty())
    }

    fn poisoned_like(&self, e: Error, v: MatValue) -> Val<'_> {
        self.fail(e);
        self.num(v)
    }

    /// Run one context operation unless already failed.
    pub(crate) fn apply(
        &self,
        fallback: &BVar,
        f: impl FnOnce(&mut TraceContext) -> Result<BVar>,
    ) -> Val<'_> {
        if self.failed() {
            return self.wrap(fallback.clone());
        }
        let r = f(&mut self.ctx_mut());
        match r {
            Ok(b) => self.wrap(b),
            Err(e) => {
                self.fail(e);
                self.wrap(fallback.clone())
            }
        }
    }

    /// `atan2(y, x)` elementwise.
    pub fn atan2<'t>(&'t self, y: &Val<'t>, x: &Val<'t>) -> Val<'t> {
        self.apply(&y.b, |c| c.bv_math(MathFn::Atan2, &[&y.b, &x.b]))
    }
}

/// A [`BVar`] bound to its tracer.
#[derive(Clone)]
pub struct Val<'t> {
    t: &'t Tracer,
    b: BVar,
}

impl<'t> Val<'t> {
    pub fn bvar(&self) -> &BVar {
        &self.b
    }

    pub fn into_bvar(self) -> BVar {
        self.b
    }

    pub fn tracer(&self) -> &'t Tracer {
        self.t
    }

    pub fn is_symbolic(&self) -> bool {
        self.b.is_symbolic()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.b.shape()
    }

    pub fn dtype(&self) -> Dtype {
        self.b.dtype()
    }

    /// Numeric value, or `None` when symbolic.
    pub fn value(&self) -> Option<&MatValue> {
        self.b.as_numeric()
    }

    fn op(&self, f: impl FnOnce(&mut TraceContext) -> Result<BVar>) -> Val<'t> {
        self.t.apply(&self.b, f)
    }

    /// Transpose.
    pub fn t(&self) -> Val<'t> {
        self.op(|c| c.bv_transpose(&self.b))
    }

    /// Element `(i, j)`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> Val<'t> {
        self.op(|c| c.bv_get(&self.b, i, j))
    }

    /// Set element `(i, j)`, 1-based.
    pub fn set(&mut self, i: usize, j: usize, v: &Val<'t>) {
        if self.t.failed() {
            return;
        }
        let r = self.t.ctx_mut().bv_set(&mut self.b, i, j, &v.b);
        if let Err(e) = r {
            self.t.fail(e);
        }
    }

    /// `[self; other]`.
    pub fn vcat(&self, other: &Val<'t>) -> Val<'t> {
        self.op(|c| c.bv_vcat(&self.b, &other.b))
    }

    /// `[self, other]`.
    pub fn hcat(&self, other: &Val<'t>) -> Val<'t> {
        self.op(|c| c.bv_hcat(&self.b, &other.b))
    }

    pub fn sqrt(&self) -> Val<'t> {
        self.op(|c| c.bv_math(MathFn::Sqrt, &[&self.b]))
    }

    pub fn sin(&self) -> Val<'t> {
        self.op(|c| c.bv_math(MathFn::Sin, &[&self.b]))
    }

    pub fn cos(&self) -> Val<'t> {
        self.op(|c| c.bv_math(MathFn::Cos, &[&self.b]))
    }

    pub fn sum(&self) -> Val<'t> {
        self.op(|c| c.bv_sum(&self.b))
    }

    pub fn convert(&self, to: Dtype) -> Val<'t> {
        self.op(|c| c.bv_convert(&self.b, to))
    }

    pub fn cmp(&self, op: CmpOp, other: &Val<'t>) -> Val<'t> {
        let fallback = BVar::numeric(MatValue::bool(false));
        self.t
            .apply(&fallback, |c| c.bv_compare(op, &self.b, &other.b))
    }

    pub fn inv(&self) -> Val<'t> {
        self.op(|c| c.bv_inverse(&self.b))
    }

    /// Truth value for host control flow; fails on a symbolic.
    pub fn to_bool(&self, what: &str) -> Result<bool> {
        self.t.check()?;
        self.t.ctx().bv_is_true(&self.b, what)
    }
}

macro_rules! binary {
    ($tr:ident, $m:ident, $call:ident) => {
        impl<'t> $tr<&Val<'t>> for &Val<'t> {
            type Output = Val<'t>;
            fn $m(self, rhs: &Val<'t>) -> Val<'t> {
                self.op(|c| c.$call(&self.b, &rhs.b))
            }
        }
        impl<'t> $tr<Val<'t>> for Val<'t> {
            type Output = Val<'t>;
            fn $m(self, rhs: Val<'t>) -> Val<'t> {
                (&self).$m(&rhs)
            }
        }
        impl<'t> $tr<&Val<'t>> for Val<'t> {
            type Output = Val<'t>;
            fn $m(self, rhs: &Val<'t>) -> Val<'t> {
                (&self).$m(rhs)
            }
        }
        impl<'t> $tr<Val<'t>> for &Val<'t> {
            type Output = Val<'t>;
            fn $m(self, rhs: Val<'t>) -> Val<'t> {
                self.$m(&rhs)
            }
        }
        impl<'t> $tr<f64> for &Val<'t> {
            type Output = Val<'t>;
            fn $m(self, rhs: f64) -> Val<'t> {
                let r = self.t.num(MatValue::scalar(rhs));
                self.$m(&r)
            }
        }
        impl<'t> $tr<f64> for Val<'t> {
            type Output = Val<'t>;
            fn $m(self, rhs: f64) -> Val<'t> {
                (&self).$m(rhs)
            }
        }
    };
}

binary!(Add, add, bv_add);
binary!(Sub, sub, bv_sub);
binary!(Mul, mul, bv_matmul);
binary!(Div, div, bv_div);

impl<'t> Neg for &Val<'t> {
    type Output = Val<'t>;
    fn neg(self) -> Val<'t> {
        self.op(|c| c.bv_neg(&self.b))
    }
}

impl<'t> Neg for Val<'t> {
    type Output = Val<'t>;
    fn neg(self) -> Val<'t> {
        -&self
    }
}
