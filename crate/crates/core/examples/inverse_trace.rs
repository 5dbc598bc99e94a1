//! Tracing a 2x2 inverse on a symbolic matrix: the operation is unrolled
//! into scalar code with the determinant computed once.

use blockgen::directives::{code_printer_c, code_printer_c_optimized};
use blockgen::{Dtype, MatValue, Tracer};

fn main() -> blockgen::Result<()> {
    let t = Tracer::default();
    let a = t.symbolic(MatValue::zeros(Dtype::F64, 2, 2), "a");
    let b = a.inv();
    t.check()?;

    println!("/* raw trace */");
    print!("{}", code_printer_c(&t.ctx()));
    println!("/* after optimization, result in {} */", b.bvar().name());
    print!("{}", code_printer_c_optimized(&t.ctx(), &[b.bvar().name()])?);

    // Numeric operands fold completely and emit nothing.
    let n = t.mat(&[[4.0, 7.0], [2.0, 6.0]]).inv();
    println!("/* numeric inverse: {:?} */", n.value().map(|v| v.to_rows()));
    Ok(())
}
