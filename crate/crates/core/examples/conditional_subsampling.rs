//! An IfThenElse/Select region becomes two branch functions and one `if`.
//! The model counts runs of equal consecutive inputs.

use blockgen::model::{generate, simulate, Compiled, GenerateOptions};
use blockgen::{Dtype, MatValue};

fn main() -> blockgen::Result<()> {
    let c = Compiled::from_text(include_str!("../fixtures/coding.json"))?;
    let g = generate(&c, &GenerateOptions::default())?;
    print!("{}", g.c);

    let bits = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let inputs: Vec<Vec<MatValue>> = bits
        .iter()
        .map(|&b| vec![MatValue::scalar_of(Dtype::I32, b).expect("i32")])
        .collect();
    let counts: Vec<f64> = simulate(&c, &inputs)?.iter().map(|o| o[0].at(0)).collect();
    println!("/* inputs {bits:?} -> run lengths (one step late) {counts:?} */");
    Ok(())
}
