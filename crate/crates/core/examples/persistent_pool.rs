//! Persistent variables: registered with a default, re-inserted inside a
//! function, reset by the generated `initialize`.

use blockgen::directives::*;
use blockgen::irinterp::Machine;
use blockgen::{BVar, Dtype, MatValue};

fn row(xs: &[f64]) -> BVar {
    BVar::numeric(MatValue::row(Dtype::F64, xs).expect("f64 row"))
}

fn main() -> blockgen::Result<()> {
    let mut ctx = codegen_init();
    let mut pool = persistent_create();
    persistent_insert(&mut ctx, &mut pool, "x1", &row(&[1.0, 2.0, 3.0]))?;
    persistent_insert(&mut ctx, &mut pool, "x2", &row(&[7.0]))?;
    // Never used inside a function: no static is emitted.
    persistent_insert(&mut ctx, &mut pool, "x3", &row(&[0.0]))?;

    start_function(&mut ctx, "foo", &inouts())?;
    put_annotation(&mut ctx, "copy [4:6] into x1 with memcpy");
    persistent_insert(&mut ctx, &mut pool, "x1", &row(&[4.0, 5.0, 6.0]))?;
    put_annotation(&mut ctx, "copy with assign since x2 is 1x1");
    persistent_insert(&mut ctx, &mut pool, "x2", &row(&[8.0]))?;
    end_function(&mut ctx, "foo")?;

    let program = finalize_program(&mut ctx, &FinalizeOptions::default())?;
    print!("{}", blockgen::cemit::emit_program(&program, &blockgen::cemit::EmitConfig::fragment()));

    let mut m = Machine::new(&program);
    m.run_function("foo", &mut [])?;
    println!("after foo: x1={:?} x2={:?}", m.static_value("x1").map(|v| v.data()), m.static_value("x2").map(|v| v.data()));
    m.run_init()?;
    println!("after initialize: x1={:?} x2={:?}", m.static_value("x1").map(|v| v.data()), m.static_value("x2").map(|v| v.data()));
    Ok(())
}
