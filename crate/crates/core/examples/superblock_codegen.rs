//! Generating C for a Super Block: two delays, a gain, a sum and a mux.

use blockgen::model::{generate, Compiled, GenerateOptions};

fn main() -> blockgen::Result<()> {
    let c = Compiled::from_text(include_str!("../fixtures/fig2.json"))?;
    println!("/* output order: {:?} */", c.schedule.output_blocks());
    let g = generate(&c, &GenerateOptions::default())?;
    print!("{}", g.c);
    Ok(())
}
