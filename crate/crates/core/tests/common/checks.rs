//! Structural checks shared by the golden tests and the acceptance suite.
//! Each panics on failure and returns a short summary on success.

use std::collections::HashMap;

use blockgen::cemit::{emit_program, EmitConfig};
use blockgen::directives::*;
use blockgen::irinterp::{run_code, Machine};
use blockgen::model::GenerateOptions;
use blockgen::trace::{Helper, Instr, Storage};
use blockgen::validate::{binary_inputs, kalman_trajectory, validate};
use blockgen::{BVar, Dtype, MatValue, Tracer};

use super::{generated, normalize_temps};

/// Statement lines of a C body: no blank lines, comments or declarations.
pub fn statements(c: &str) -> Vec<String> {
    c.lines()
        .map(str::trim)
        .filter(|l| {
            !l.is_empty()
                && !l.starts_with("/*")
                && !l.starts_with("double ")
                && !l.starts_with("int ")
                && !l.starts_with("static ")
        })
        .map(str::to_string)
        .collect()
}

/// Statements of the C function `name`, temporaries renumbered.
pub fn function_body(c: &str, name: &str) -> Vec<String> {
    let start = c.find(&format!("void {name}(")).unwrap_or_else(|| panic!("no function {name} in\n{c}"));
    let open = start + c[start..].find('{').expect("body");
    let close = open + c[open..].find("\n}\n").expect("end of body");
    statements(&normalize_temps(&c[open + 1..close]))
}

pub fn superblock() -> String {
    let (_, g) = generated("fig2.json");
    let statics: Vec<&str> = g.program.statics.keys().map(String::as_str).collect();
    assert_eq!(statics, ["z_10001", "z_10002", "link10004"]);
    for s in g.program.statics.values() {
        assert_eq!(s.storage, Storage::Static);
        assert_eq!(s.initial_value().data(), [0.0]);
    }
    let names: Vec<&str> = g.program.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["initialize1000", "updateOutput10001", "updateState10001"]);

    let c = &g.c;
    assert!(c.contains("static double z_10001=0;"), "{c}");
    assert!(c.contains("void updateOutput10001(double *inouts1,double *inouts2)"), "{c}");
    assert_eq!(
        function_body(c, "updateOutput10001"),
        [
            "t1=z_10001;",
            "link10004=(t1-z_10002);",
            "t2[0]=t1;",
            "t2[1]=*inouts1;",
            "memcpy(inouts2,t2,2*sizeof(double));",
        ]
    );
    assert_eq!(function_body(c, "updateState10001"), ["z_10001=link10004;", "z_10002=*inouts1;"]);
    let dispatch = function_body(c, "toto1000");
    for needle in ["if (flag == 1) {", "else if (flag == 2) {", "else if (flag == 4) {", "initialize1000();"] {
        assert!(dispatch.iter().any(|l| l == needle), "dispatcher lacks `{needle}`: {dispatch:?}");
    }
    format!("{} statics, {} functions", g.program.statics.len(), g.program.functions.len())
}

pub fn inverse() -> String {
    let t = Tracer::default();
    let a = t.symbolic(MatValue::zeros(Dtype::F64, 2, 2), "a");
    let b = a.inv();
    t.check().unwrap();
    let text = code_printer_c_optimized(&t.ctx(), &[b.bvar().name()]).unwrap();
    let lines = statements(&normalize_temps(&text));
    assert_eq!(
        lines,
        [
            "t1[0]=(a[3]);",
            "t1[3]=(a[0]);",
            "t1[2]=(-(a[2]));",
            "t1[1]=(-(a[1]));",
            "t2=(((a[0])*(a[3]))-((a[2])*(a[1])));",
            "t3[0]=((t1[0])/t2);",
            "t3[2]=((t1[2])/t2);",
            "t3[1]=((t1[1])/t2);",
            "t3[3]=((t1[3])/t2);",
        ]
    );

    // Executing the trace agrees with the numeric inverse.
    let m = MatValue::from_rows(Dtype::F64, &[[4.0, 7.0], [2.0, 6.0]]).unwrap();
    let ctx = t.ctx();
    let vals = run_code(ctx.code(), ctx.declarations(), &HashMap::from([("a".to_string(), m.clone())])).unwrap();
    let expect = blockgen::matval::invert(&m).unwrap();
    for (x, y) in vals[b.bvar().name()].data().iter().zip(expect.data()) {
        assert!((x - y).abs() < 1e-15);
    }
    format!("{} instructions", lines.len())
}

fn row(xs: &[f64]) -> BVar {
    BVar::numeric(MatValue::row(Dtype::F64, xs).unwrap())
}

pub fn persistent_replay() -> String {
    let mut ctx = codegen_init();
    let mut pool = persistent_create();
    persistent_insert(&mut ctx, &mut pool, "x1", &row(&[1.0, 2.0, 3.0])).unwrap();
    persistent_insert(&mut ctx, &mut pool, "x2", &row(&[7.0])).unwrap();
    persistent_insert(&mut ctx, &mut pool, "x3", &row(&[0.0])).unwrap();
    start_function(&mut ctx, "foo", &inouts()).unwrap();
    persistent_insert(&mut ctx, &mut pool, "x1", &row(&[4.0, 5.0, 6.0])).unwrap();
    persistent_insert(&mut ctx, &mut pool, "x2", &row(&[8.0])).unwrap();
    end_function(&mut ctx, "foo").unwrap();
    let p = finalize_program(&mut ctx, &FinalizeOptions::default()).unwrap();

    assert!(p.statics.contains_key("x1") && p.statics.contains_key("x2"));
    assert!(!p.statics.contains_key("x3"), "unused persistent must not be emitted");
    let c = emit_program(&p, &EmitConfig::fragment());
    assert!(c.contains("static double x1[]={ 1, 2, 3 };"), "{c}");
    assert!(c.contains("static double x2=7;"), "{c}");
    assert!(!c.contains("x3"), "{c}");
    let body = function_body(&c, "foo");
    assert!(body.iter().any(|l| l.starts_with("memcpy(x1,") && l.ends_with(",3*sizeof(double));")), "{body:?}");
    assert!(body.iter().any(|l| l == "x2=8;"), "{body:?}");

    let mut m = Machine::new(&p);
    m.run_function("foo", &mut []).unwrap();
    assert_eq!(m.static_value("x1").unwrap().data(), [4.0, 5.0, 6.0]);
    assert_eq!(m.static_value("x2").unwrap().data(), [8.0]);
    m.run_init().unwrap();
    assert_eq!(m.static_value("x1").unwrap().data(), [1.0, 2.0, 3.0]);
    assert_eq!(m.static_value("x2").unwrap().data(), [7.0]);
    "x3 dropped, x1 memcpy, x2 assign, initialize restores".to_string()
}

pub fn conditional_region() -> String {
    let (c, g) = generated("coding.json");
    let names: Vec<&str> = g.program.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(
        names,
        ["initialize1004", "updateOutput10041", "updateOutput10042", "updateOutput10043", "updateState10043"]
    );
    let main = g.program.function("updateOutput10043").unwrap();
    let ifs: Vec<&Instr> = main.code.iter().filter(|i| matches!(i, Instr::IfExpr { .. })).collect();
    assert_eq!(ifs.len(), 1);
    let Instr::IfExpr { cond, then, other } = ifs[0] else { unreachable!() };
    let cond = cond.to_string();
    let def = main
        .code
        .iter()
        .find(|i| matches!(i, Instr::Def { name, .. } if *name == cond))
        .map(ToString::to_string)
        .unwrap_or(cond.clone());
    assert!(def.contains(" > 0"), "{def}");
    assert_eq!((then.function.as_str(), other.function.as_str()), ("updateOutput10041", "updateOutput10042"));
    let ifs_in_c = g.c.matches("if (").count() - g.c.matches("if (flag").count();
    assert_eq!(ifs_in_c, 1, "{}", g.c);
    assert_eq!(function_body(&g.c, "updateOutput10041"), ["link10046=0;"]);
    assert_eq!(function_body(&g.c, "updateOutput10042"), ["link10046=*inouts2;"]);

    let report = validate(&c, &binary_inputs(c.input_sigs(), 200, 2024), &GenerateOptions::default()).unwrap();
    assert!(report.passed() && report.max_deviation == 0.0, "{report}");
    report.to_string()
}

pub fn kalman() -> String {
    let (c, g) = generated("kalman.json");
    let statics: Vec<&str> = g.program.statics.keys().map(String::as_str).collect();
    assert_eq!(statics, ["z_10021", "z_10022", "link10024"]);
    assert_eq!(g.program.statics["z_10021"].initial_value().data(), [-900.0, 80.0, 950.0, 20.0]);
    assert_eq!(g.program.statics["z_10022"].initial_value().data(), [0.0; 16]);

    let f = g.program.function(&g.dispatch.output_fn).unwrap();
    let mut counts: HashMap<Helper, usize> = HashMap::new();
    for i in &f.code {
        if let Instr::HelperCall { helper, res, .. } = i {
            *counts.entry(*helper).or_default() += 1;
            assert!(f.decls[res].len() > 6, "helper call producing {res} of size {}", f.decls[res].len());
        }
    }
    assert_eq!(counts.get(&Helper::Mult), Some(&7));
    assert_eq!(counts.get(&Helper::Quote), Some(&1));
    assert_eq!(counts.get(&Helper::Inverse), None);
    assert!(g.c.contains("void mult(") && g.c.contains("void quote("));

    let report = validate(&c, &kalman_trajectory(100, 7), &GenerateOptions::default()).unwrap();
    assert!(report.passed(), "{report}");
    format!("7 mult, 1 quote; {report}")
}
