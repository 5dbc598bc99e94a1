//! Randomized checks shared by the property tests and the acceptance suite.

use std::collections::HashMap;

use blockgen::cemit::{c_type, emit_program, EmitConfig};
use blockgen::irinterp::run_code;
use blockgen::optimizer::{code_optimize, OptOptions};
use blockgen::trace::{Instr, Storage};
use blockgen::{CmpOp, Dtype, MatValue, Tracer, Val};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

#[derive(Clone, Copy, Debug)]
pub enum Op {
    AddY,
    SubX,
    MulY,
    MulX,
    Neg,
    Transpose,
    HalfDiv,
    Sin,
    AddScalar(f64),
}

/// Operations that end a sequence: they change the shape or type.
#[derive(Clone, Copy, Debug)]
pub enum Leaf {
    Sum,
    Get,
    Gt,
    Vcat,
    ToI32,
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::AddY),
        Just(Op::SubX),
        Just(Op::MulY),
        Just(Op::MulX),
        Just(Op::Neg),
        Just(Op::Transpose),
        Just(Op::HalfDiv),
        Just(Op::Sin),
        (-3.0..3.0f64).prop_map(Op::AddScalar),
    ]
}

pub fn leaf() -> impl Strategy<Value = Leaf> {
    prop_oneof![Just(Leaf::Sum), Just(Leaf::Get), Just(Leaf::Gt), Just(Leaf::Vcat), Just(Leaf::ToI32)]
}

/// Square f64 matrix with small entries; exact zeros and ones exercise
/// folding.
fn square(n: usize) -> impl Strategy<Value = MatValue> {
    let entry = prop_oneof![Just(0.0), Just(1.0), -5.0..5.0f64];
    proptest::collection::vec(entry, n * n).prop_map(move |d| MatValue::new(Dtype::F64, n, n, d).unwrap())
}

/// Two same-sized square operands, 1x1 to 3x3 (3x3 products use helpers).
pub fn operands() -> impl Strategy<Value = (MatValue, MatValue)> {
    (1usize..=3).prop_flat_map(|n| (square(n), square(n)))
}

pub fn apply<'t>(op: Op, acc: &Val<'t>, x: &Val<'t>, y: &Val<'t>) -> Val<'t> {
    match op {
        Op::AddY => acc + y,
        Op::SubX => acc - x,
        Op::MulY => acc * y,
        Op::MulX => acc * x,
        Op::Neg => -acc,
        Op::Transpose => acc.t(),
        Op::HalfDiv => acc / 2.0,
        Op::Sin => acc.sin(),
        Op::AddScalar(c) => acc + c,
    }
}

pub fn apply_leaf<'t>(l: Leaf, acc: &Val<'t>, y: &Val<'t>) -> Val<'t> {
    match l {
        Leaf::Sum => acc.sum(),
        Leaf::Get => acc.get(1, 1),
        Leaf::Gt => acc.cmp(CmpOp::Gt, y),
        Leaf::Vcat => acc.vcat(y),
        Leaf::ToI32 => acc.convert(Dtype::I32),
    }
}

/// Exact for integer and bool values, within 1e-12 relative for f64.
pub fn close(a: &MatValue, b: &MatValue) -> bool {
    a.same_type(b)
        && a.data().iter().zip(b.data()).all(|(&x, &y)| {
            x == y
                || (x.is_nan() && y.is_nan())
                || (a.dtype() == Dtype::F64 && (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
        })
}

fn bindings(x: &MatValue) -> HashMap<String, MatValue> {
    HashMap::from([("x".to_string(), x.clone())])
}

pub type Closure = ((MatValue, MatValue), Vec<Op>, Leaf);

pub fn closure_case() -> impl Strategy<Value = Closure> {
    (operands(), proptest::collection::vec(op(), 1..8), leaf())
}

/// All-numeric operation sequences record no instruction.
pub fn numeric_closure(((xv, yv), ops, l): Closure) -> Result<(), TestCaseError> {
    let t = Tracer::default();
    let (x, y) = (t.num(xv), t.num(yv));
    let mut acc = x.clone();
    for o in &ops {
        acc = apply(*o, &acc, &x, &y);
    }
    let r = apply_leaf(l, &acc, &y);
    t.check().map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(!r.is_symbolic());
    prop_assert_eq!(t.ctx().code().len(), 0);
    prop_assert_eq!(t.ctx().declarations().len(), 0);
    Ok(())
}

pub type Single = ((MatValue, MatValue), Op, Option<Leaf>);

pub fn single_case() -> impl Strategy<Value = Single> {
    (operands(), op(), proptest::option::of(leaf()))
}

/// One operation on a symbolic input: executing the recorded code gives the
/// value the numeric operation computes.
pub fn trace_faithful(((xv, yv), o, l): Single) -> Result<(), TestCaseError> {
    let sym = Tracer::default();
    let x = sym.symbolic(xv.clone(), "x");
    let y = sym.num(yv.clone());
    let r = match l {
        None => apply(o, &x, &x, &y),
        Some(l) => apply_leaf(l, &x, &y),
    };
    sym.check().map_err(|e| TestCaseError::fail(e.to_string()))?;

    let num = Tracer::default();
    let (nx, ny) = (num.num(xv.clone()), num.num(yv));
    let expect = match l {
        None => apply(o, &nx, &nx, &ny),
        Some(l) => apply_leaf(l, &nx, &ny),
    };
    let expect = expect.value().expect("numeric").clone();

    let got = match r.value() {
        Some(v) => v.clone(),
        None => {
            let ctx = sym.ctx();
            let vals = run_code(ctx.code(), ctx.declarations(), &bindings(&xv))
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            vals[r.bvar().name()].clone()
        }
    };
    prop_assert!(close(&got, &expect), "{:?} vs {:?}", got, expect);
    Ok(())
}

pub type Chain = ((MatValue, MatValue), Vec<Op>, bool, bool);

pub fn chain_case() -> impl Strategy<Value = Chain> {
    (operands(), proptest::collection::vec(op(), 1..10), any::<bool>(), any::<bool>())
}

/// Optimizing a trace keeps the result value and a second run is a no-op.
pub fn optimizer_sound(((xv, yv), ops, fold, copy_propagation): Chain) -> Result<(), TestCaseError> {
    let t = Tracer::default();
    let x = t.symbolic(xv.clone(), "x");
    let y = t.num(yv);
    let mut acc = x.clone();
    for o in &ops {
        acc = apply(*o, &acc, &x, &y);
    }
    t.check().map_err(|e| TestCaseError::fail(e.to_string()))?;
    if !acc.is_symbolic() {
        return Ok(());
    }
    let result = acc.bvar().name().to_string();
    let ctx = t.ctx();
    let fail = |e: blockgen::Error| TestCaseError::fail(e.to_string());
    let raw = run_code(ctx.code(), ctx.declarations(), &bindings(&xv)).map_err(fail)?;

    let opts = OptOptions {
        fold,
        copy_propagation,
        ..OptOptions::default()
    }
    .keep([result.clone()]);
    let (code, decls) =
        code_optimize(ctx.code(), ctx.declarations(), ctx.top_declarations(), &[], &opts).map_err(fail)?;
    prop_assert!(code.len() <= ctx.code().len());
    let opt = run_code(&code, &decls, &bindings(&xv)).map_err(fail)?;
    prop_assert!(close(&opt[&result], &raw[&result]), "{:?} vs {:?}", opt[&result], raw[&result]);

    let (again, again_decls) = code_optimize(&code, &decls, ctx.top_declarations(), &[], &opts).map_err(fail)?;
    prop_assert_eq!(&again, &code);
    prop_assert_eq!(again_decls, decls);
    Ok(())
}

/// Scalars are declared and accessed as scalars, arrays with brackets, and
/// whole-array copies of more than one element use memcpy.
pub fn emission_rules() -> String {
    let mut copies = 0;
    for name in super::FIXTURES {
        let (_, g) = super::generated(name);
        let c = emit_program(&g.program, &EmitConfig::fragment());
        for d in g.program.statics.values() {
            assert_eq!(d.storage, Storage::Static);
            let ty = c_type(d.dtype);
            let decl = if d.is_scalar() {
                format!("static {ty} {}=", d.name)
            } else {
                format!("static {ty} {}[]=", d.name)
            };
            assert!(c.contains(&decl), "{name}: `{decl}` missing in\n{c}");
        }
        for f in &g.program.functions {
            for i in &f.code {
                if let Instr::Copy { dst, len, .. } = i {
                    assert!(*len > 1, "{name}: 1-element copy into {dst} should be an assignment");
                    assert!(c.contains(&format!("memcpy({dst},")), "{name}: copy into {dst}");
                    copies += 1;
                }
            }
            for p in f.params.iter().filter(|p| p.len() == 1) {
                assert!(!c.contains(&format!("{}[", p.name)), "{name}: scalar {} indexed", p.name);
            }
        }
    }
    format!("{} fixtures, {copies} block copies", super::FIXTURES.len())
}
