//! An extended Kalman filter written as a user block with overloaded
//! operators. Large f64 products and transposes call helper functions.

use blockgen::model::{generate, Compiled, GenerateOptions};
use blockgen::trace::{Helper, Instr};
use blockgen::validate::{kalman_trajectory, validate};

fn main() -> blockgen::Result<()> {
    let c = Compiled::from_text(include_str!("../fixtures/kalman.json"))?;
    let g = generate(&c, &GenerateOptions::default())?;
    let f = g.program.function(&g.dispatch.output_fn).expect("output function");
    let count = |h: Helper| {
        f.code
            .iter()
            .filter(|i| matches!(i, Instr::HelperCall { helper, .. } if *helper == h))
            .count()
    };
    println!("statics: {:?}", g.program.statics.keys().collect::<Vec<_>>());
    println!("initial estimate: {:?}", g.program.statics["z_10021"].initial_value().data());
    println!(
        "{} instructions in {}, {} mult calls, {} quote calls, {} bytes of C",
        f.code.len(),
        f.name,
        count(Helper::Mult),
        count(Helper::Quote),
        g.c.len()
    );
    let report = validate(&c, &kalman_trajectory(100, 1), &GenerateOptions::default())?;
    println!("simulation vs generated code: {report}");
    Ok(())
}
