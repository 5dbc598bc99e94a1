//! The built-in block palette.

use crate::directives::{if_cos, put_annotation, select_exp};
use crate::error::{Error, Result};
use crate::matval::{self, CmpOp, MatValue};
use crate::trace::{BVar, CallTarget, Tracer};

use super::{Arity, BlockKind, BlockRecord, Flag, Registry};

pub fn register(r: &mut Registry) {
    r.register(
        BlockKind::UnitDelay,
        Arity {
            feedthrough: false,
            ..Arity::fixed(1, 1, 1)
        },
        unit_delay,
    );
    r.register(BlockKind::Gain, Arity::fixed(1, 1, 0), gain);
    r.register(
        BlockKind::Summation,
        Arity {
            max_inputs: None,
            ..Arity::fixed(1, 1, 0)
        },
        summation,
    );
    r.register(
        BlockKind::Mux,
        Arity {
            max_inputs: None,
            ..Arity::fixed(2, 1, 0)
        },
        mux,
    );
    r.register(BlockKind::RelationalOp, Arity::fixed(2, 1, 0), relational_op);
    r.register(
        BlockKind::Select,
        Arity {
            max_inputs: None,
            ..Arity::fixed(2, 1, 0)
        },
        select,
    );
    r.register(BlockKind::IfThenElse, Arity::fixed(1, 0, 0), |_, _, _| Ok(()));
    r.register(BlockKind::Const, Arity::fixed(0, 1, 0), constant);
}

/// `1/z`: the output is the state; the state takes the input.
/// Parameter `p1` is the initial state; a scalar fills the input's shape.
pub fn unit_delay(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    match flag {
        Flag::Output => {
            let z = state(blk, 0)?.clone();
            blk.set_output(0, z)
        }
        Flag::State => {
            let u = blk.input(0)?.clone();
            if blk.state.is_empty() {
                return Err(Error::Param("delay state read before initialization".into()));
            }
            blk.state[0] = u;
            Ok(())
        }
        Flag::Init => {
            let u = blk.input(0)?;
            let (dtype, (rows, cols)) = (u.dtype(), u.shape());
            let p1 = blk.param("p1")?;
            let mut z = convert_param(t, p1, dtype);
            if z.is_scalar() {
                z = MatValue::filled(dtype, rows, cols, z.at(0))?;
            }
            if z.shape() != (rows, cols) {
                return Err(Error::Param(format!(
                    "initial state is {}x{}, input is {rows}x{cols}",
                    z.rows(),
                    z.cols()
                )));
            }
            blk.state = vec![BVar::numeric(z)];
            Ok(())
        }
    }
}

/// Output = converted gain times input, with matrix-product semantics.
pub fn gain(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let u = blk.input(0)?.clone();
    let k = BVar::numeric(convert_param(t, blk.param("p1")?, u.dtype()));
    let mut ctx = t.ctx_mut();
    put_annotation(&mut ctx, "Gain block begins.");
    let y = ctx.bv_matmul(&k, &u)?;
    put_annotation(&mut ctx, "Gain block ends.");
    drop(ctx);
    blk.set_output(0, y)
}

/// One input: signed sum of its entries. Several inputs: signed
/// elementwise accumulation. Signs come from `p2`, each +1 or -1.
pub fn summation(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let vars = blk.inputs().to_vec();
    let nin = vars.len();
    let sgns = blk.param("p2")?.data().to_vec();
    if sgns.len() != nin {
        return Err(Error::Param(format!("{} signs for {nin} inputs", sgns.len())));
    }
    let sign = |s: f64| -> Result<bool> {
        match s {
            -1.0 => Ok(false),
            1.0 => Ok(true),
            s => Err(Error::Param(format!("wrong sign: {s}"))),
        }
    };
    let mut ctx = t.ctx_mut();
    put_annotation(&mut ctx, &format!("Sum block begins with {nin} inputs."));
    let out = if nin == 1 {
        put_annotation(&mut ctx, "Using the sum function.");
        let s = ctx.bv_sum(&vars[0])?;
        if sign(sgns[0])? {
            s
        } else {
            ctx.bv_neg(&s)?
        }
    } else {
        let mut out = if sign(sgns[0])? {
            vars[0].clone()
        } else {
            ctx.bv_neg(&vars[0])?
        };
        for (v, &s) in vars.iter().zip(&sgns).skip(1) {
            out = if sign(s)? {
                ctx.bv_add(&out, v)?
            } else {
                ctx.bv_sub(&out, v)?
            };
        }
        out
    };
    drop(ctx);
    blk.set_output(0, out)
}

/// Row concatenation of all inputs in port order.
pub fn mux(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let vars = blk.inputs().to_vec();
    let mut ctx = t.ctx_mut();
    put_annotation(&mut ctx, &format!("MUX block begins with {} inputs.", vars.len()));
    let mut y = vars[0].clone();
    for v in &vars[1..] {
        y = ctx.bv_vcat(&y, v)?;
    }
    put_annotation(&mut ctx, "MUX block ends.");
    drop(ctx);
    blk.set_output(0, y)
}

/// Elementwise comparison selected by the `op` code (0 `==`, 1 `!=`,
/// 2 `<`, 3 `<=`, 4 `>`, 5 `>=`); the result takes the inputs' dtype.
pub fn relational_op(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let code = blk.param("op")?;
    let op = if code.is_scalar() {
        CmpOp::from_code(code.at(0) as i64).filter(|_| code.at(0).fract() == 0.0)
    } else {
        None
    };
    let op = op.ok_or_else(|| Error::Param(format!("bad comparison code {:?}", code.data())))?;
    let (a, b) = (blk.input(0)?.clone(), blk.input(1)?.clone());
    let mut ctx = t.ctx_mut();
    put_annotation(&mut ctx, "RELATIONALOP block starts");
    let c = ctx.bv_compare(op, &a, &b)?;
    let y = ctx.bv_convert(&c, a.dtype())?;
    put_annotation(&mut ctx, "RELATIONALOP block ends");
    drop(ctx);
    blk.set_output(0, y)
}

/// Merge of conditional branches. The record carries the 1-based branch
/// selector as its first input, supplied by the model driver, followed by
/// the data inputs; the output is the selected data input.
pub fn select(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let sel = blk.input(0)?.clone();
    let data = blk.inputs()[1..].to_vec();
    let mut ctx = t.ctx_mut();
    put_annotation(&mut ctx, "Selct block starts");
    let y = select_exp(&mut ctx, &sel, &data)?;
    put_annotation(&mut ctx, "Selct block ends");
    drop(ctx);
    blk.set_output(0, y)
}

/// Output = `p1`.
pub fn constant(_: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let v = blk.param("p1")?.clone();
    blk.set_output(0, BVar::numeric(v))
}

/// The IfThenElse control: call `f1` when `cond > 0`, `f2` otherwise.
/// A numeric condition selects the call at generation time.
pub fn ifthenelse(t: &Tracer, cond: &BVar, f1: CallTarget, f2: CallTarget) -> Result<()> {
    if_cos(&mut t.ctx_mut(), cond, f1, f2)
}

fn state(blk: &BlockRecord, k: usize) -> Result<&BVar> {
    blk.state
        .get(k)
        .ok_or_else(|| Error::Param(format!("state {} of block {} not initialized", k + 1, blk.id)))
}

/// Parameter conversion wraps like `convert`, with a warning when a value
/// does not fit.
fn convert_param(t: &Tracer, p: &MatValue, to: matval::Dtype) -> MatValue {
    if p.data().iter().any(|&x| !to.representable(x)) && p.dtype() != to {
        t.ctx_mut()
            .warn(format!("parameter {:?} does not fit {to}; wrapped", p.data()));
    }
    matval::convert(p, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::run_block;
    use crate::matval::Dtype;
    use crate::trace::Instr;

    fn num(x: f64) -> BVar {
        BVar::numeric(MatValue::scalar(x))
    }

    fn run(kind: BlockKind, rec: &mut BlockRecord, flag: Flag) -> Result<Tracer> {
        let reg = Registry::standard();
        let t = Tracer::default();
        run_block(&t, reg.get(&kind).unwrap(), rec, flag)?;
        Ok(t)
    }

    #[test]
    fn delay_expands_scalar_parameter() {
        let u = BVar::numeric(MatValue::zeros(Dtype::I16, 2, 1));
        let mut r = BlockRecord::new(1, vec![u], 1).with_param("p1", MatValue::scalar(3.0));
        run(BlockKind::UnitDelay, &mut r, Flag::Init).unwrap();
        assert_eq!(r.state[0].value(), &MatValue::filled(Dtype::I16, 2, 1, 3.0).unwrap());
        run(BlockKind::UnitDelay, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value().data(), &[3.0, 3.0]);
        let bad = BVar::numeric(MatValue::zeros(Dtype::F64, 3, 1));
        let mut r = BlockRecord::new(1, vec![bad], 1)
            .with_param("p1", MatValue::col(Dtype::F64, &[1.0, 2.0]).unwrap());
        assert!(run(BlockKind::UnitDelay, &mut r, Flag::Init).is_err());
    }

    #[test]
    fn delay_flags_are_pure() {
        let mut r = BlockRecord::new(1, vec![num(5.0)], 1).with_param("p1", MatValue::scalar(0.0));
        run(BlockKind::UnitDelay, &mut r, Flag::Init).unwrap();
        let before = r.state[0].value().clone();
        run(BlockKind::UnitDelay, &mut r, Flag::Output).unwrap();
        assert_eq!(r.state[0].value(), &before);
        let out = r.output(0).unwrap().value().clone();
        run(BlockKind::UnitDelay, &mut r, Flag::State).unwrap();
        assert_eq!(r.output(0).unwrap().value(), &out);
        assert_eq!(r.state[0].value().at(0), 5.0);
    }

    #[test]
    fn parameter_wraps_with_warning() {
        let u = BVar::numeric(MatValue::zeros(Dtype::I8, 1, 1));
        let mut r = BlockRecord::new(1, vec![u], 1).with_param("p1", MatValue::scalar(257.0));
        let t = run(BlockKind::UnitDelay, &mut r, Flag::Init).unwrap();
        assert_eq!(r.state[0].value().at(0), 1.0);
        assert_eq!(t.ctx().warnings().len(), 1);
    }

    #[test]
    fn gain_matrix_times_vector() {
        let u = BVar::numeric(MatValue::col(Dtype::F64, &[1.0, 2.0]).unwrap());
        let k = MatValue::from_rows(Dtype::F64, &[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let mut r = BlockRecord::new(1, vec![u], 1).with_param("p1", k);
        let t = run(BlockKind::Gain, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value().data(), &[5.0, 11.0]);
        let notes: Vec<_> = t
            .ctx()
            .code()
            .iter()
            .filter_map(|i| match i {
                Instr::Annotation(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(notes, ["Gain block begins.", "Gain block ends."]);
    }

    #[test]
    fn summation_modes() {
        let v = BVar::numeric(MatValue::col(Dtype::F64, &[1.0, 2.0, 3.0]).unwrap());
        let mut r = BlockRecord::new(1, vec![v], 1).with_param("p2", MatValue::scalar(1.0));
        run(BlockKind::Summation, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value().at(0), 6.0);
        let mut r = BlockRecord::new(1, vec![num(5.0), num(2.0), num(1.0)], 1)
            .with_param("p2", MatValue::row(Dtype::F64, &[-1.0, 1.0, -1.0]).unwrap());
        run(BlockKind::Summation, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value().at(0), -4.0);
        let mut r = BlockRecord::new(1, vec![num(5.0)], 1).with_param("p2", MatValue::scalar(0.0));
        let e = run(BlockKind::Summation, &mut r, Flag::Output).err().unwrap();
        assert!(e.to_string().contains("wrong sign: 0"), "{e}");
    }

    #[test]
    fn mux_concatenates() {
        let two = BVar::numeric(MatValue::col(Dtype::F64, &[2.0, 3.0]).unwrap());
        let mut r = BlockRecord::new(1, vec![num(1.0), two, num(4.0)], 1);
        run(BlockKind::Mux, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value().shape(), (4, 1));
        assert_eq!(r.output(0).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn relational_op_keeps_input_dtype() {
        let a = BVar::numeric(MatValue::scalar_of(Dtype::I32, 3.0).unwrap());
        let b = BVar::numeric(MatValue::scalar_of(Dtype::I32, 4.0).unwrap());
        let mut r = BlockRecord::new(1, vec![a.clone(), b], 1).with_param("op", MatValue::scalar(2.0));
        run(BlockKind::RelationalOp, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value(), &MatValue::scalar_of(Dtype::I32, 1.0).unwrap());
        let mut r = BlockRecord::new(1, vec![a.clone(), a], 1).with_param("op", MatValue::scalar(0.0));
        run(BlockKind::RelationalOp, &mut r, Flag::Output).unwrap();
        assert!(r.output(0).unwrap().value().is_true());
        let mut r = BlockRecord::new(1, vec![num(1.0), num(1.0)], 1).with_param("op", MatValue::scalar(9.0));
        assert!(run(BlockKind::RelationalOp, &mut r, Flag::Output).is_err());
    }

    #[test]
    fn select_picks_branch() {
        let sel = BVar::numeric(MatValue::scalar_of(Dtype::I32, 2.0).unwrap());
        let mut r = BlockRecord::new(1, vec![sel, num(10.0), num(20.0)], 1);
        run(BlockKind::Select, &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().value().at(0), 20.0);
    }

    #[test]
    fn symbolic_delay_emits_nothing_for_output() {
        let t = Tracer::default();
        let z = t.ctx_mut().symbolics(MatValue::scalar(0.0), Some("z")).unwrap();
        let u = t.ctx_mut().symbolics(MatValue::scalar(0.0), Some("u")).unwrap();
        let mut r = BlockRecord::new(1, vec![u], 1);
        r.state = vec![z];
        let reg = Registry::standard();
        run_block(&t, reg.get(&BlockKind::UnitDelay).unwrap(), &mut r, Flag::Output).unwrap();
        assert_eq!(r.output(0).unwrap().name(), "z");
        assert!(t.ctx().code().is_empty());
    }
}
