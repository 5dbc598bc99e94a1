//! Directives a generation script uses to shape the emitted program:
//! session lifecycle, function boundaries, persistent variables, function
//! arguments, local constants and conditionals.

use indexmap::IndexMap;

use crate::cemit::{self, EmitConfig};
use crate::error::{Error, Result};
use crate::matval::{CmpOp, Dtype, MatValue};
use crate::optimizer::{self, OptOptions};
use crate::trace::{BVar, CallTarget, Decl, Expr, Function, Instr, Param, Program, Storage, TraceContext};

/// A fresh recording session.
pub fn codegen_init() -> TraceContext {
    TraceContext::new()
}

/// Persistent variables: each used entry becomes one top-level static.
#[derive(Clone, Debug, Default)]
pub struct PersistentPool {
    entries: IndexMap<String, BVar>,
}

impl PersistentPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn persistent_create() -> PersistentPool {
    PersistentPool::new()
}

/// First insert of `name` registers a static holding `v` as its default.
/// Re-inserting stores `v` into the static: a block copy for 2 or more
/// elements, an assignment for a scalar.
pub fn persistent_insert(
    ctx: &mut TraceContext,
    pool: &mut PersistentPool,
    name: &str,
    v: &BVar,
) -> Result<()> {
    if let Some(handle) = pool.entries.get(name) {
        return ctx.emit_store(handle, v);
    }
    if v.is_symbolic() {
        ctx.warn(format!(
            "persistent `{name}` registered from a symbolic; its nominal value is the default"
        ));
    }
    let (r, c) = v.shape();
    ctx.declare(name, v.dtype(), r, c, Some(v.value().clone()), Storage::Static)?;
    pool.entries
        .insert(name.to_string(), BVar::handle(v.value().clone(), name));
    Ok(())
}

/// Symbolic handle on a registered persistent.
pub fn persistent_extract(pool: &PersistentPool, name: &str) -> Result<BVar> {
    pool.entries
        .get(name)
        .cloned()
        .ok_or_else(|| Error::UnknownName(name.to_string()))
}

/// Ordered function arguments.
#[derive(Clone, Debug, Default)]
pub struct IoSeq {
    entries: IndexMap<String, BVar>,
}

impl IoSeq {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Result<BVar> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Argument names in parameter order.
    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn params(&self) -> Vec<Param> {
        self.entries
            .values()
            .map(|b| {
                let (rows, cols) = b.shape();
                Param {
                    name: b.name().to_string(),
                    dtype: b.dtype(),
                    rows,
                    cols,
                }
            })
            .collect()
    }

    /// A call passing these arguments through to `function`.
    pub fn call(&self, function: &str) -> CallTarget {
        CallTarget::new(function, self.names())
    }
}

pub fn inouts() -> IoSeq {
    IoSeq::new()
}

/// First insert declares an argument shaped like `v`; re-insert stores `v`
/// into the argument.
pub fn inouts_insert(ctx: &mut TraceContext, io: &mut IoSeq, name: &str, v: &BVar) -> Result<()> {
    if let Some(handle) = io.entries.get(name) {
        return ctx.emit_store(handle, v);
    }
    if let Some((f, _)) = ctx.open_function() {
        return Err(Error::UnknownName(format!(
            "argument `{name}` added while `{f}` is open"
        )));
    }
    if name.is_empty() || ctx.is_declared(name) {
        return Err(Error::DuplicateName(name.to_string()));
    }
    io.entries
        .insert(name.to_string(), BVar::handle(v.value().clone(), name));
    Ok(())
}

pub fn start_function(ctx: &mut TraceContext, name: &str, io: &IoSeq) -> Result<()> {
    ctx.start_function(name, io.params())
}

pub fn end_function(ctx: &mut TraceContext, name: &str) -> Result<()> {
    ctx.end_function(name)
}

/// Local variable with an initializer. An empty name picks a fresh one.
pub fn constant(ctx: &mut TraceContext, v: &MatValue, name: &str) -> Result<BVar> {
    let name = (!name.is_empty()).then_some(name);
    ctx.local_constant(v, name)
}

/// A fresh `m`x`n` variable of `input`'s dtype filled with its value.
pub fn expand(ctx: &mut TraceContext, input: &BVar, m: usize, n: usize) -> Result<BVar> {
    if !input.is_scalar() {
        return Err(Error::ShapeMismatch(format!(
            "expand needs a 1x1 input, got {}x{}",
            input.shape().0,
            input.shape().1
        )));
    }
    if !input.is_symbolic() {
        // The numeric input takes a name of its own, as a materialized
        // value would.
        ctx.getunique();
    }
    let init = MatValue::filled(input.dtype(), m, n, input.value().at(0))?;
    let out = ctx.local_constant(&init, None)?;
    if input.is_symbolic() {
        let src = TraceContext::operand(input, 0);
        if out.is_scalar() {
            ctx.push(Instr::Assign {
                name: out.name().to_string(),
                expr: src,
            });
        } else {
            for index in 0..m * n {
                ctx.push(Instr::SetElem {
                    name: out.name().to_string(),
                    index,
                    expr: src.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// A fresh variable shaped like `input`, declared with its (nominal) value.
pub fn bvarempty(ctx: &mut TraceContext, input: &BVar) -> Result<BVar> {
    ctx.local_constant(input.value(), None)
}

/// Like [`bvarempty`], followed by a copy of `input` into the new variable.
pub fn bvarcopy(ctx: &mut TraceContext, input: &BVar) -> Result<BVar> {
    let src = if input.is_symbolic() {
        input.clone()
    } else {
        ctx.local_constant(input.value(), None)?
    };
    let out = ctx.local_constant(input.value(), None)?;
    ctx.emit_store(&out, &src)?;
    Ok(out)
}

pub fn put_annotation(ctx: &mut TraceContext, text: &str) {
    ctx.push(Instr::Annotation(text.to_string()));
}

/// Append a raw instruction.
pub fn code_insert(ctx: &mut TraceContext, instr: Instr) {
    ctx.push(instr);
}

/// `cond ? e1 : e2`. Both branches are already evaluated; a symbolic
/// condition yields an elementwise select, never control flow.
pub fn if_exp(ctx: &mut TraceContext, cond: &BVar, e1: &BVar, e2: &BVar) -> Result<BVar> {
    if !cond.is_scalar() {
        return Err(Error::ShapeMismatch("if_exp condition must be 1x1".into()));
    }
    if e1.shape() != e2.shape() {
        return Err(Error::ShapeMismatch(format!(
            "if_exp branches are {}x{} and {}x{}",
            e1.shape().0,
            e1.shape().1,
            e2.shape().0,
            e2.shape().1
        )));
    }
    ctx.bv_select(cond, e1, e2)
}

/// `choices[selector - 1]`, as a chain of [`if_exp`] over equality tests.
/// A symbolic selector outside `1..=n` yields the last choice.
pub fn select_exp(ctx: &mut TraceContext, selector: &BVar, choices: &[BVar]) -> Result<BVar> {
    let Some(last) = choices.last() else {
        return Err(Error::InvalidValue("select_exp without choices".into()));
    };
    if !selector.is_scalar() {
        return Err(Error::ShapeMismatch("selector must be 1x1".into()));
    }
    if !selector.is_symbolic() {
        let k = selector.value().at(0);
        if k < 1.0 || k > choices.len() as f64 || k.fract() != 0.0 {
            return Err(Error::IndexOutOfRange(format!(
                "selector {k} with {} choices",
                choices.len()
            )));
        }
        return Ok(choices[k as usize - 1].clone());
    }
    let mut out = last.clone();
    for (i, choice) in choices.iter().enumerate().rev().skip(1) {
        let k = BVar::numeric(MatValue::scalar_of(selector.dtype(), (i + 1) as f64)?);
        let hit = ctx.bv_compare(CmpOp::Eq, selector, &k)?;
        out = if_exp(ctx, &hit, choice, &out)?;
    }
    Ok(out)
}

/// Structural conditional: calls `f1` when `input > 0`, `f2` otherwise.
/// A numeric input picks the call at generation time.
pub fn if_cos(ctx: &mut TraceContext, input: &BVar, f1: CallTarget, f2: CallTarget) -> Result<()> {
    if !input.is_scalar() {
        return Err(Error::ShapeMismatch("if_cos input must be 1x1".into()));
    }
    let zero = BVar::numeric(MatValue::scalar_of(input.dtype(), 0.0)?);
    let cond = ctx.bv_compare(CmpOp::Gt, input, &zero)?;
    if !cond.is_symbolic() {
        ctx.push(Instr::Call(if cond.value().is_true() { f1 } else { f2 }));
        return Ok(());
    }
    ctx.push(Instr::IfExpr {
        cond: Expr::Var(cond.name().to_string()),
        then: f1,
        other: f2,
    });
    Ok(())
}

/// How [`finalize_program`] post-processes a session.
#[derive(Clone, Debug, Default)]
pub struct FinalizeOptions {
    pub opt: OptOptions,
    /// Appended to `initialize`.
    pub suffix: String,
}

/// Optimize every function, drop unused statics and prepend the
/// `initialize` function resetting the remaining ones.
pub fn finalize_program(ctx: &mut TraceContext, opts: &FinalizeOptions) -> Result<Program> {
    ctx.check_balanced()?;
    let mut program = Program {
        statics: ctx.top_declarations.clone(),
        functions: ctx.functions.clone(),
    };
    optimizer::optimize_program(&mut program, &opts.opt)?;
    let init = build_initialize(ctx, &program.statics, &format!("initialize{}", opts.suffix))?;
    program.functions.insert(0, init);
    Ok(program)
}

fn build_initialize(
    ctx: &mut TraceContext,
    statics: &IndexMap<String, Decl>,
    name: &str,
) -> Result<Function> {
    let mut decls = IndexMap::new();
    let mut code = Vec::new();
    for s in statics.values().filter(|s| !s.is_empty()) {
        let tmp = ctx.getunique();
        let value = s.initial_value();
        decls.insert(
            tmp.clone(),
            Decl {
                name: tmp.clone(),
                dtype: s.dtype,
                rows: s.rows,
                cols: s.cols,
                init: Some(value),
                storage: Storage::LocalStatic,
            },
        );
        code.push(if s.is_scalar() {
            Instr::Assign {
                name: s.name.clone(),
                expr: Expr::Var(tmp),
            }
        } else {
            Instr::Copy {
                dst: s.name.clone(),
                src: tmp,
                len: s.len(),
                dtype: s.dtype,
            }
        });
    }
    Ok(Function {
        name: name.to_string(),
        params: Vec::new(),
        decls,
        code,
    })
}

/// Finalize with default options and print the bare C fragment: statics,
/// `initialize()` and every recorded function.
pub fn codegen_finalize(ctx: &mut TraceContext) -> Result<String> {
    codegen_finalize_with(ctx, &FinalizeOptions::default())
}

pub fn codegen_finalize_with(ctx: &mut TraceContext, opts: &FinalizeOptions) -> Result<String> {
    let program = finalize_program(ctx, opts)?;
    Ok(cemit::emit_program(&program, &EmitConfig::fragment()))
}

/// Print the session's top-level code with its declarations, without
/// optimization.
pub fn code_printer_c(ctx: &TraceContext) -> String {
    cemit::emit_body(ctx.code(), ctx.declarations(), &[], 0)
}

/// Optimize the session's top-level code and print it. Only writes
/// reaching `results` (or a persistent) are kept.
pub fn code_printer_c_optimized(ctx: &TraceContext, results: &[&str]) -> Result<String> {
    let opts = OptOptions::default().keep(results.iter().copied());
    let (code, decls) =
        optimizer::code_optimize(ctx.code(), ctx.declarations(), ctx.top_declarations(), &[], &opts)?;
    Ok(cemit::emit_body(&code, &decls, &[], 0))
}

/// Shorthand for a scalar numeric of the given dtype.
pub fn scalar_of(dtype: Dtype, x: f64) -> Result<BVar> {
    Ok(BVar::numeric(MatValue::scalar_of(dtype, x)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(xs: &[f64]) -> BVar {
        BVar::numeric(MatValue::row(Dtype::F64, xs).unwrap())
    }

    #[test]
    fn persistent_reinsert_emits_copy_or_assign() {
        let mut ctx = codegen_init();
        let mut pool = persistent_create();
        persistent_insert(&mut ctx, &mut pool, "x1", &row(&[1.0, 2.0, 3.0])).unwrap();
        persistent_insert(&mut ctx, &mut pool, "x2", &row(&[7.0])).unwrap();
        assert!(ctx.code().is_empty());
        start_function(&mut ctx, "foo", &inouts()).unwrap();
        persistent_insert(&mut ctx, &mut pool, "x1", &row(&[4.0, 5.0, 6.0])).unwrap();
        persistent_insert(&mut ctx, &mut pool, "x2", &row(&[8.0])).unwrap();
        assert!(matches!(&ctx.code()[0], Instr::Copy { dst, src, len: 3, .. } if dst == "x1" && src == "tmp_1"));
        assert!(matches!(&ctx.code()[1], Instr::Assign { name, expr: Expr::Lit(_, x) } if name == "x2" && *x == 8.0));
        end_function(&mut ctx, "foo").unwrap();
    }

    #[test]
    fn reinsert_shape_mismatch() {
        let mut ctx = codegen_init();
        let mut pool = persistent_create();
        persistent_insert(&mut ctx, &mut pool, "x1", &row(&[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(
            persistent_insert(&mut ctx, &mut pool, "x1", &row(&[1.0, 2.0])),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(persistent_extract(&pool, "nope"), Err(Error::UnknownName(_))));
    }

    #[test]
    fn function_nesting_rules() {
        let mut ctx = codegen_init();
        let io = inouts();
        start_function(&mut ctx, "f", &io).unwrap();
        assert!(matches!(start_function(&mut ctx, "g", &io), Err(Error::NestedFunction { .. })));
        assert!(matches!(end_function(&mut ctx, "g"), Err(Error::NoOpenFunction(_))));
        assert!(matches!(ctx.check_balanced(), Err(Error::UnbalancedFunction(_))));
        end_function(&mut ctx, "f").unwrap();
        assert!(matches!(end_function(&mut ctx, "f"), Err(Error::NoOpenFunction(_))));
    }

    #[test]
    fn bvarcopy_materializes_numeric_input() {
        let mut ctx = codegen_init();
        let v = BVar::numeric(MatValue::zeros(Dtype::F64, 2, 3));
        let out = bvarcopy(&mut ctx, &v).unwrap();
        assert_eq!(out.name(), "tmp_2");
        assert!(matches!(&ctx.code()[0], Instr::Copy { dst, src, len: 6, .. } if dst == "tmp_2" && src == "tmp_1"));
        let e = bvarempty(&mut ctx, &v).unwrap();
        assert_eq!(ctx.code().len(), 1);
        assert!(ctx.declarations()[e.name()].init.is_some());
    }

    #[test]
    fn expand_numeric_names_result_tmp_2() {
        let mut ctx = codegen_init();
        let out = expand(&mut ctx, &BVar::numeric(MatValue::bool(true)), 2, 3).unwrap();
        assert_eq!(out.name(), "tmp_2");
        assert_eq!(out.shape(), (2, 3));
        assert_eq!(out.dtype(), Dtype::Bool);
        assert!(ctx.code().is_empty());
    }

    #[test]
    fn if_cos_numeric_is_a_plain_call() {
        let mut ctx = codegen_init();
        let f1 = CallTarget::new("f1", vec![]);
        let f2 = CallTarget::new("f2", vec![]);
        if_cos(&mut ctx, &BVar::numeric(MatValue::scalar(1.0)), f1.clone(), f2.clone()).unwrap();
        if_cos(&mut ctx, &BVar::numeric(MatValue::scalar(0.0)), f1.clone(), f2.clone()).unwrap();
        assert_eq!(ctx.code(), &[Instr::Call(f1.clone()), Instr::Call(f2.clone())]);
        let x = ctx.symbolics(MatValue::scalar(0.0), Some("x")).unwrap();
        if_cos(&mut ctx, &x, f1, f2).unwrap();
        assert!(matches!(&ctx.code()[2], Instr::Def { .. }));
        assert!(matches!(&ctx.code()[3], Instr::IfExpr { .. }));
    }

    #[test]
    fn select_exp_numeric_and_range() {
        let mut ctx = codegen_init();
        let cs = [row(&[1.0]), row(&[2.0]), row(&[3.0])];
        let s = select_exp(&mut ctx, &row(&[2.0]), &cs).unwrap();
        assert_eq!(s.value().at(0), 2.0);
        assert!(select_exp(&mut ctx, &row(&[4.0]), &cs).is_err());
    }

    #[test]
    fn if_exp_shape_mismatch() {
        let mut ctx = codegen_init();
        let c = BVar::numeric(MatValue::bool(true));
        assert!(if_exp(&mut ctx, &c, &row(&[1.0, 2.0]), &row(&[1.0])).is_err());
        assert_eq!(if_exp(&mut ctx, &c, &row(&[1.0]), &row(&[2.0])).unwrap().value().at(0), 1.0);
    }
}
