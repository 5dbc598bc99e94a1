//! The operator front end: the same expression folds on numeric values and
//! records code on symbolic ones. Expression-level conditionals become
//! selects; branching on a symbolic value is an error.

use blockgen::directives::{code_printer_c, if_exp};
use blockgen::{CmpOp, Dtype, MatValue, Tracer};

fn main() {
    let t = Tracer::default();
    let x = t.symbolic(MatValue::col(Dtype::F64, &[0.0, 0.0]).expect("f64"), "x");
    let k = t.mat(&[[1.0, 2.0], [3.0, 4.0]]);
    let y = &k * &x + 1.0;
    let n = &k * t.mat(&[[1.0], [1.0]]) + 1.0;
    println!("/* numeric: {:?} */", n.value().map(|v| v.data().to_vec()));

    let s = y.get(1, 1);
    let positive = s.cmp(CmpOp::Gt, &t.scalar(0.0));
    let clipped = {
        let mut ctx = t.ctx_mut();
        if_exp(&mut ctx, positive.bvar(), s.bvar(), t.scalar(0.0).bvar())
    };
    println!("/* clipped result: {:?} */", clipped.map(|b| b.name().to_string()));
    print!("{}", code_printer_c(&t.ctx()));

    match positive.to_bool("s > 0") {
        Ok(_) => println!("/* unexpected */"),
        Err(e) => println!("/* {e} */"),
    }
}
