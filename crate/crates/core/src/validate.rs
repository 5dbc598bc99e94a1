//! Equivalence checking between direct simulation and the generated
//! program, plus input stimuli.

use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::irinterp::Machine;
use crate::matval::{Dtype, MatValue};
use crate::model::{generate, simulate, Compiled, GenerateOptions, Generated, Sig};

/// Largest accepted f64 deviation, relative to `max(|a|, |b|, 1)`.
pub const F64_TOLERANCE: f64 = 1e-12;

/// Uniform stimuli: f64 in [-10, 10], signed ints in [-3, 3], unsigned ints
/// in [0, 3], bools by fair coin.
pub fn random_inputs(sigs: &[Sig], steps: usize, seed: u64) -> Vec<Vec<MatValue>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..steps)
        .map(|_| sigs.iter().map(|s| random_value(&mut rng, s, false)).collect())
        .collect()
}

/// Like [`random_inputs`] but integer and bool entries are 0 or 1.
pub fn binary_inputs(sigs: &[Sig], steps: usize, seed: u64) -> Vec<Vec<MatValue>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..steps)
        .map(|_| sigs.iter().map(|s| random_value(&mut rng, s, true)).collect())
        .collect()
}

fn random_value(rng: &mut StdRng, s: &Sig, binary: bool) -> MatValue {
    let data = (0..s.rows * s.cols)
        .map(|_| match s.dtype {
            Dtype::F64 => rng.random_range(-10.0..=10.0),
            Dtype::Bool => f64::from(rng.random_bool(0.5)),
            _ if binary => f64::from(rng.random_bool(0.5)),
            d if d.is_signed() => f64::from(rng.random_range(-3i32..=3)),
            _ => f64::from(rng.random_range(0u32..=3)),
        })
        .collect();
    MatValue::new(s.dtype, s.rows, s.cols, data).expect("generated within range")
}

/// Noisy range/bearing measurements of a target moving at constant
/// velocity from (-1000, 1000) with velocity (80, 20), sampled every 0.1.
pub fn kalman_trajectory(steps: usize, seed: u64) -> Vec<Vec<MatValue>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let range_noise = Normal::new(0.0, 50.0).expect("valid deviation");
    let bearing_noise = Normal::new(0.0, 0.005).expect("valid deviation");
    (0..steps)
        .map(|k| {
            let t = k as f64 * crate::blocks::kalman::DT;
            let (x, y) = (-1000.0 + 80.0 * t, 1000.0 + 20.0 * t);
            let range = (x * x + y * y).sqrt() + range_noise.sample(&mut rng);
            let bearing = y.atan2(x) + bearing_noise.sample(&mut rng);
            vec![MatValue::col(Dtype::F64, &[range, bearing]).expect("f64")]
        })
        .collect()
}

/// Run the generated program in the IR interpreter: initialize, then one
/// output/state step per input.
pub fn run_generated(c: &Compiled, g: &Generated, inputs: &[Vec<MatValue>]) -> Result<Vec<Vec<MatValue>>> {
    let mut m = Machine::new(&g.program);
    m.run_init()?;
    let outputs: Vec<MatValue> = c.output_sigs().iter().map(Sig::zeros).collect();
    m.run_steps(&g.dispatch.output_fn, &g.dispatch.state_fn, inputs, &outputs)
}

/// First disagreement between two output sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub step: usize,
    /// 1-based output port.
    pub port: usize,
    /// Column-major element index.
    pub index: usize,
    pub simulated: f64,
    pub generated: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub steps: usize,
    /// Largest f64 deviation, relative to `max(|a|, |b|, 1)`.
    pub max_deviation: f64,
    pub mismatch: Option<Mismatch>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.mismatch.is_none()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "steps={} max_deviation={:e}", self.steps, self.max_deviation)?;
        match &self.mismatch {
            None => write!(f, " equivalent"),
            Some(m) => write!(
                f,
                " MISMATCH at step {} port {} element {}: simulated {:?}, generated {:?}",
                m.step, m.port, m.index, m.simulated, m.generated
            ),
        }
    }
}

/// Compare outputs: exact for int and bool ports, within
/// [`F64_TOLERANCE`] for f64.
pub fn compare(simulated: &[Vec<MatValue>], generated: &[Vec<MatValue>]) -> Result<Report> {
    if simulated.len() != generated.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} simulated steps, {} generated",
            simulated.len(),
            generated.len()
        )));
    }
    let mut report = Report {
        steps: simulated.len(),
        max_deviation: 0.0,
        mismatch: None,
    };
    for (step, (s, g)) in simulated.iter().zip(generated).enumerate() {
        for (port, (a, b)) in s.iter().zip(g).enumerate() {
            if !a.same_type(b) {
                return Err(Error::ShapeMismatch(format!("output port {} differs in type", port + 1)));
            }
            for (index, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
                let bad = if a.dtype() == Dtype::F64 {
                    let dev = deviation(x, y);
                    report.max_deviation = report.max_deviation.max(dev);
                    dev > F64_TOLERANCE
                } else {
                    x != y
                };
                if bad && report.mismatch.is_none() {
                    report.mismatch = Some(Mismatch {
                        step,
                        port: port + 1,
                        index,
                        simulated: x,
                        generated: y,
                    });
                }
            }
        }
    }
    Ok(report)
}

fn deviation(x: f64, y: f64) -> f64 {
    if x == y || (x.is_nan() && y.is_nan()) {
        return 0.0;
    }
    let d = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

/// Simulate, generate and execute the generated program on `inputs`.
pub fn validate(c: &Compiled, inputs: &[Vec<MatValue>], opts: &GenerateOptions) -> Result<Report> {
    let sim = simulate(c, inputs)?;
    let g = generate(c, opts)?;
    let gen = run_generated(c, &g, inputs)?;
    compare(&sim, &gen)
}
