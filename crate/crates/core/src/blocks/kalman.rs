//! Extended Kalman filter for range/bearing tracking, written as a user
//! block with overloaded operators.
//!
//! State `x = [x_pos; x_vel; y_pos; y_vel]`, measurement
//! `y = [range; bearing]`. Inputs: measurement (2x1), previous estimate
//! (4x1), previous covariance (4x4). Outputs: new estimate and covariance.

use crate::error::Result;
use crate::matval::MatValue;
use crate::trace::Tracer;

use super::{Arity, BlockRecord, Flag};

/// Sample period.
pub const DT: f64 = 0.1;

pub fn arity() -> Arity {
    Arity::fixed(3, 2, 0)
}

pub fn behavior(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    if flag != Flag::Output {
        return Ok(());
    }
    let meas = t.wrap(blk.input(0)?.clone());
    let xhat = t.wrap(blk.input(1)?.clone());
    let p = t.wrap(blk.input(2)?.clone());

    let q = t.num(MatValue::diag(&[0.0, 0.1, 0.0, 0.1]));
    let r = t.num(MatValue::diag(&[50.0 * 50.0, 0.005 * 0.005]));
    // Jacobians of the state and measurement equations.
    let f = t.mat(&[
        [1.0, DT, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, DT],
        [0.0, 0.0, 0.0, 1.0],
    ]);
    let (px, py) = (xhat.get(1, 1), xhat.get(3, 1));
    let range_hat = (&px * &px + &py * &py).sqrt();
    let bearing_hat = t.atan2(&py, &px);
    let yhat = range_hat.vcat(&bearing_hat);
    let (c, s) = (bearing_hat.cos(), bearing_hat.sin());
    let zero = t.scalar(0.0);
    let h = c
        .hcat(&zero)
        .hcat(&s)
        .hcat(&zero)
        .vcat(&(-&s / &range_hat).hcat(&zero).hcat(&(&c / &range_hat)).hcat(&zero));

    // Propagate the state and covariance.
    let xhat = &f * &xhat;
    let p = &f * &p * f.t() + &q;
    // Kalman gain; H' is formed once.
    let ht = h.t();
    let k = &p * &ht / (&h * &p * &ht + &r);
    let resid = &meas - &yhat;
    let xhat = &xhat + &k * &resid;
    let p = (t.eye(4) - &k * &h) * &p;

    t.check()?;
    blk.set_output(0, xhat.into_bvar())?;
    blk.set_output(1, p.into_bvar())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{run_block, BlockKind, Registry};
    use crate::matval::Dtype;
    use crate::trace::{BVar, Helper, Instr};

    fn record(t: &Tracer, symbolic: bool) -> BlockRecord {
        let meas = MatValue::col(Dtype::F64, &[1000.0, 0.8]).unwrap();
        let x = MatValue::col(Dtype::F64, &[-900.0, 80.0, 950.0, 20.0]).unwrap();
        let p = MatValue::eye(4);
        let inputs = if symbolic {
            let mut c = t.ctx_mut();
            vec![
                c.symbolics(meas, Some("meas")).unwrap(),
                c.symbolics(x, Some("x")).unwrap(),
                c.symbolics(p, Some("p")).unwrap(),
            ]
        } else {
            vec![BVar::numeric(meas), BVar::numeric(x), BVar::numeric(p)]
        };
        BlockRecord::new(1, inputs, 2)
    }

    #[test]
    fn helpers_only_for_large_results() {
        let t = Tracer::default();
        let mut r = record(&t, true);
        let reg = Registry::standard();
        let def = reg.get(&BlockKind::SciBlk("ekf".into())).unwrap();
        run_block(&t, def, &mut r, Flag::Output).unwrap();
        let count = |h: Helper| {
            t.ctx()
                .code()
                .iter()
                .filter(|i| matches!(i, Instr::HelperCall { helper, .. } if *helper == h))
                .count()
        };
        // F*P, (F*P)*F', P*H', H*P, (P*H')*inv(S), K*H, (I-K*H)*P.
        assert_eq!(count(Helper::Mult), 7);
        assert_eq!(count(Helper::Quote), 1);
        assert_eq!(count(Helper::Inverse), 0);
        assert_eq!(r.output(1).unwrap().shape(), (4, 4));
    }

    #[test]
    fn numeric_run_emits_nothing() {
        let t = Tracer::default();
        let mut r = record(&t, false);
        behavior(&t, &mut r, Flag::Output).unwrap();
        assert!(t.ctx().code().is_empty());
        assert!(!r.output(0).unwrap().is_symbolic());
        let p = r.output(1).unwrap().value();
        for i in 0..4 {
            for j in 0..4 {
                assert!((p.get(i, j) - p.get(j, i)).abs() < 1e-9 * p.get(i, i).abs().max(1.0));
            }
        }
    }
}
