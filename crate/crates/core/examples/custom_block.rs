//! Registering a user block: an exponential moving average with its own
//! state, written with overloaded operators.

use blockgen::blocks::{Arity, BlockRecord, Flag, Registry};
use blockgen::model::{generate, parse_model, Compiled, GenerateOptions};
use blockgen::validate::{random_inputs, validate};
use blockgen::{BVar, Result, Tracer};

/// y = state; state <- state + alpha * (u - state).
fn ema(t: &Tracer, blk: &mut BlockRecord, flag: Flag) -> Result<()> {
    match flag {
        Flag::Init => {
            let u = blk.input(0)?;
            blk.state = vec![BVar::numeric(blockgen::MatValue::zeros(u.dtype(), u.shape().0, u.shape().1))];
        }
        Flag::Output => {
            let s = blk.state[0].clone();
            blk.set_output(0, s)?;
        }
        Flag::State => {
            let alpha = t.num(blk.param("alpha")?.clone());
            let u = t.wrap(blk.input(0)?.clone());
            let s = t.wrap(blk.state[0].clone());
            let next = &s + &alpha * (&u - &s);
            t.check()?;
            blk.state[0] = next.into_bvar();
        }
    }
    Ok(())
}

const MODEL: &str = r#"{
  "id": 2000,
  "ports": {"inputs": [{"dtype": "f64", "rows": 3, "cols": 1}], "outputs": [null]},
  "blocks": [
    {"id": 1, "kind": "sciblk:ema", "params": {"alpha": 0.25}},
    {"id": 2, "kind": "Gain", "params": {"p1": 2}}
  ],
  "links": [
    {"id": 1, "from": "in.1", "to": ["1.1"]},
    {"id": 2, "from": "1.1", "to": ["2.1"]},
    {"id": 3, "from": "2.1", "to": ["out.1"]}
  ]
}"#;

fn main() -> Result<()> {
    let mut reg = Registry::standard();
    reg.register_sciblk(
        "ema",
        Arity {
            feedthrough: false,
            ..Arity::fixed(1, 1, 1)
        },
        ema,
    );
    let c = Compiled::new(parse_model(MODEL)?, reg)?;
    let g = generate(&c, &GenerateOptions::default())?;
    print!("{}", g.c);
    let report = validate(&c, &random_inputs(c.input_sigs(), 50, 9), &GenerateOptions::default())?;
    println!("/* {report} */");
    Ok(())
}
