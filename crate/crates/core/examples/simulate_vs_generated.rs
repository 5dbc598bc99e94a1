//! Validate every fixture: direct simulation against the generated program
//! executed by the IR interpreter, on random inputs.

use blockgen::model::{Compiled, GenerateOptions};
use blockgen::validate::{binary_inputs, kalman_trajectory, random_inputs, validate};

fn main() -> blockgen::Result<()> {
    let fixtures = [
        ("fig2", include_str!("../fixtures/fig2.json")),
        ("coding", include_str!("../fixtures/coding.json")),
        ("kalman", include_str!("../fixtures/kalman.json")),
    ];
    for (name, text) in fixtures {
        let c = Compiled::from_text(text)?;
        let inputs = match name {
            "coding" => binary_inputs(c.input_sigs(), 200, 42),
            "kalman" => kalman_trajectory(100, 42),
            _ => random_inputs(c.input_sigs(), 100, 42),
        };
        let report = validate(&c, &inputs, &GenerateOptions::default())?;
        println!("{name:>7}: {report}");
    }
    Ok(())
}
