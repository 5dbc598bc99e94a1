//! C source printing for finalized programs.
//!
//! Expressions are fully parenthesized: `(a-b)`, `(-(x))`, `(x[k])`.
//! Scalar arguments are read and written through `*name`; 1x1 locals and
//! statics use scalar C types, everything else arrays.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write;

use indexmap::IndexMap;

use crate::matval::{Dtype, MatValue};
use crate::trace::{Decl, Expr, Function, Helper, Instr, Param, Program, Storage};

/// How the translation unit is wrapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitMode {
    /// Statics and functions only, no includes, markers or entry point.
    Fragment,
    /// Includes the runtime header; the entry reads ports from the block.
    Runtime,
    /// Self-contained; the entry takes the port arrays directly.
    Freestanding,
}

/// Functions the flag dispatcher routes to, and the ports it passes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch {
    pub output_fn: String,
    pub state_fn: String,
    pub init_fn: String,
    pub inputs: Vec<Param>,
    pub outputs: Vec<Param>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmitConfig {
    pub block_id: u64,
    pub entry_name: String,
    pub mode: EmitMode,
    pub dispatch: Option<Dispatch>,
}

impl EmitConfig {
    pub fn fragment() -> Self {
        EmitConfig {
            block_id: 0,
            entry_name: String::new(),
            mode: EmitMode::Fragment,
            dispatch: None,
        }
    }

    /// Full translation unit with entry point `toto<id>`.
    pub fn unit(block_id: u64, mode: EmitMode, dispatch: Dispatch) -> Self {
        EmitConfig {
            block_id,
            entry_name: format!("toto{block_id}"),
            mode,
            dispatch: Some(dispatch),
        }
    }
}

pub fn c_type(d: Dtype) -> &'static str {
    match d {
        Dtype::F64 => "double",
        Dtype::Bool => "int",
        Dtype::I8 => "int8_t",
        Dtype::I16 => "int16_t",
        Dtype::I32 => "int32_t",
        Dtype::U8 => "uint8_t",
        Dtype::U16 => "uint16_t",
        Dtype::U32 => "uint32_t",
    }
}

/// Port accessor family of the runtime header (`Get<X>InPortPtrs`).
pub fn port_accessor(d: Dtype) -> &'static str {
    match d {
        Dtype::F64 => "Real",
        Dtype::Bool => "Bool",
        Dtype::I8 => "int8",
        Dtype::I16 => "int16",
        Dtype::I32 => "int32",
        Dtype::U8 => "uint8",
        Dtype::U16 => "uint16",
        Dtype::U32 => "uint32",
    }
}

/// Literal as it appears inside an expression.
pub fn literal(d: Dtype, x: f64) -> String {
    let s = bare_literal(d, x);
    if s.starts_with('-') {
        format!("({s})")
    } else {
        s
    }
}

fn bare_literal(d: Dtype, x: f64) -> String {
    if d != Dtype::F64 {
        return format!("{}", x as i64);
    }
    if x.is_nan() {
        return "NAN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "INFINITY".into() } else { "-INFINITY".into() };
    }
    if x.fract() == 0.0 && x.abs() < 1e15 && !(x == 0.0 && x.is_sign_negative()) {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

/// Element as it appears in an initializer list.
fn init_literal(d: Dtype, x: f64) -> String {
    match d {
        Dtype::Bool => if x != 0.0 { "TRUE" } else { "FALSE" }.into(),
        _ => bare_literal(d, x),
    }
}

fn init_list(v: &MatValue) -> String {
    let items: Vec<String> = v.data().iter().map(|&x| init_literal(v.dtype(), x)).collect();
    format!("{{ {} }}", items.join(", "))
}

fn declaration(d: &Decl) -> Option<String> {
    if d.is_empty() || d.storage == Storage::External {
        return None;
    }
    let prefix = match d.storage {
        Storage::LocalStatic | Storage::Static => "static ",
        _ => "",
    };
    let ty = c_type(d.dtype);
    let init = match (d.storage, &d.init) {
        (Storage::Static, _) => Some(d.initial_value()),
        (_, init) => init.clone(),
    };
    Some(match (d.is_scalar(), init) {
        (true, Some(v)) => format!("{prefix}{ty} {}={};", d.name, init_literal(d.dtype, v.at(0))),
        (true, None) => format!("{prefix}{ty} {};", d.name),
        (false, Some(v)) => format!("{prefix}{ty} {}[]={};", d.name, init_list(&v)),
        (false, None) => format!("{prefix}{ty} {}[{}];", d.name, d.len()),
    })
}

/// Which names print as scalars, and which need a dereference.
#[derive(Default)]
struct Names {
    scalars: HashSet<String>,
    scalar_params: HashSet<String>,
}

impl Names {
    fn new(decls: &IndexMap<String, Decl>, params: &[Param], statics: Option<&IndexMap<String, Decl>>) -> Self {
        let mut n = Names::default();
        for d in decls.values().chain(statics.into_iter().flat_map(|s| s.values())) {
            if d.is_scalar() {
                n.scalars.insert(d.name.clone());
            }
        }
        for p in params {
            if p.len() == 1 {
                n.scalar_params.insert(p.name.clone());
            } else {
                n.scalars.remove(&p.name);
            }
        }
        n
    }

    fn lvalue(&self, name: &str) -> String {
        if self.scalar_params.contains(name) {
            format!("*{name}")
        } else {
            name.to_string()
        }
    }

    fn is_scalar(&self, name: &str) -> bool {
        self.scalars.contains(name) || self.scalar_params.contains(name)
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Lit(d, x) => literal(*d, *x),
            Expr::Var(n) => self.lvalue(n),
            Expr::Elem(n, k) => {
                if self.is_scalar(n) {
                    self.lvalue(n)
                } else {
                    format!("({n}[{k}])")
                }
            }
            Expr::Neg(d, a) => wrap_narrow(*d, format!("(-{})", self.expr(a))),
            Expr::Bin { op, dtype, lhs, rhs } => wrap_narrow(
                *dtype,
                format!("({}{}{})", self.expr(lhs), op.symbol(), self.expr(rhs)),
            ),
            Expr::Cmp { op, lhs, rhs } => {
                format!("({}{}{})", self.expr(lhs), op.symbol(), self.expr(rhs))
            }
            Expr::Math(f, args) => {
                let args: Vec<String> = args.iter().map(|a| self.expr(a)).collect();
                format!("{}({})", f.name(), args.join(","))
            }
            // A C comparison already has type int with value 0 or 1.
            Expr::Cast {
                from: Dtype::Bool,
                to: Dtype::I32,
                arg,
            } => self.expr(arg),
            Expr::Cast { to, arg, .. } => cast(*to, &self.expr(arg)),
            Expr::Select {
                cond, then, other, ..
            } => format!(
                "({} ? {} : {})",
                self.expr(cond),
                self.expr(then),
                self.expr(other)
            ),
        }
    }
}

fn cast(to: Dtype, x: &str) -> String {
    match to {
        Dtype::Bool => format!("({x}!=0)"),
        Dtype::F64 => format!("((double)({x}))"),
        d => format!("(({})({x}))", c_type(d)),
    }
}

/// C promotes types narrower than `int`; wrap each operation back.
fn wrap_narrow(d: Dtype, s: String) -> String {
    match d {
        Dtype::I8 | Dtype::I16 | Dtype::U8 | Dtype::U16 => format!("(({}){s})", c_type(d)),
        _ => s,
    }
}

fn instr(out: &mut String, names: &Names, i: &Instr, ind: &str) {
    match i {
        Instr::Def { name, expr } | Instr::Assign { name, expr } => {
            let _ = writeln!(out, "{ind}{}={};", names.lvalue(name), names.expr(expr));
        }
        Instr::SetElem { name, index, expr } => {
            if names.is_scalar(name) {
                let _ = writeln!(out, "{ind}{}={};", names.lvalue(name), names.expr(expr));
            } else {
                let _ = writeln!(out, "{ind}{name}[{index}]={};", names.expr(expr));
            }
        }
        Instr::Copy {
            dst,
            src,
            len,
            dtype,
        } => {
            if *len == 1 {
                let rhs = if names.is_scalar(src) {
                    names.lvalue(src)
                } else {
                    format!("{src}[0]")
                };
                let lhs = if names.is_scalar(dst) {
                    names.lvalue(dst)
                } else {
                    format!("{dst}[0]")
                };
                let _ = writeln!(out, "{ind}{lhs}={rhs};");
            } else if *len > 1 {
                let _ = writeln!(out, "{ind}memcpy({dst},{src},{len}*sizeof({}));", c_type(*dtype));
            }
        }
        Instr::Annotation(t) => {
            let _ = writeln!(out, "{ind}/* {}*/", t.replace("*/", "* /"));
        }
        Instr::IfExpr { cond, then, other } => {
            let _ = writeln!(out, "{ind}if ({}) {{", names.expr(cond));
            let _ = writeln!(out, "{ind}  {}({});", then.function, then.args.join(","));
            let _ = writeln!(out, "{ind}}} else {{");
            let _ = writeln!(out, "{ind}  {}({});", other.function, other.args.join(","));
            let _ = writeln!(out, "{ind}}}");
        }
        Instr::Call(t) => {
            let _ = writeln!(out, "{ind}{}({});", t.function, t.args.join(","));
        }
        Instr::HelperCall {
            helper,
            res,
            operands,
            dims,
        } => {
            let mut args = vec![res.clone()];
            args.extend(operands.iter().cloned());
            args.extend(dims.iter().map(|d| format!("&{d}")));
            let _ = writeln!(out, "{ind}{}({});", helper.name(), args.join(","));
        }
    }
}

/// Declarations followed by statements, each line indented by `indent`
/// levels of two spaces.
pub fn emit_body(code: &[Instr], decls: &IndexMap<String, Decl>, params: &[Param], indent: usize) -> String {
    emit_body_with(code, decls, params, None, indent)
}

fn emit_body_with(
    code: &[Instr],
    decls: &IndexMap<String, Decl>,
    params: &[Param],
    statics: Option<&IndexMap<String, Decl>>,
    indent: usize,
) -> String {
    let ind = "  ".repeat(indent);
    let names = Names::new(decls, params, statics);
    let mut out = String::new();
    for d in decls.values() {
        if let Some(line) = declaration(d) {
            let _ = writeln!(out, "{ind}{line}");
        }
    }
    for i in code {
        instr(&mut out, &names, i, &ind);
    }
    out
}

fn signature(f: &Function) -> String {
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| format!("{} *{}", c_type(p.dtype), p.name))
        .collect();
    format!("void {}({})", f.name, params.join(","))
}

pub fn emit_function(f: &Function, statics: &IndexMap<String, Decl>) -> String {
    let mut out = format!("{}{{\n", signature(f));
    out.push_str(&emit_body_with(&f.code, &f.decls, &f.params, Some(statics), 1));
    out.push_str("}\n");
    out
}

const QUOTE: &str = "void quote(double *res, double *a, double *dm,double *dn)
{
 int i,j, m1=(int) (*dm), n1 = (int) (*dn) ;
 for (i = 0 ; i < (m1); i++)
   for (j = 0 ; j < (n1); j++)
     {
       res[j+(n1)*i]= a[i+(m1)*j];
     }
}
";

const MULT: &str = "void mult(double *res, double *a, double *b,double *md1,double *nd1,double *md2,double *nd2)
{
 int i,j,k,m1=(int) (*md1),n1= (int) (*nd1),m2= (int) (*md2),n2=(int) (*nd2);
 for (i = 0 ; i < m1; i++)
   for (j = 0 ; j < n2; j++)
     {
       res[i+m1*j]=0;
       for (k = 0 ; k < n1; k++)
         res[i+(m1)*j] += a[i+(m1)*k]*b[k+(m2)*j];
     }
}
";

const INVERSE: &str = "void inverse(double *res, double *a, double *dn)
{
 int i,j,k,p,ip,n=(int) (*dn);
 double lu[n*n], x[n], s, l, t;
 int perm[n];
 for (k = 0 ; k < n*n; k++) lu[k] = a[k];
 for (i = 0 ; i < n; i++) perm[i] = i;
 for (k = 0 ; k < n; k++)
   {
     p = k;
     for (i = k+1 ; i < n; i++)
       if (fabs(lu[i+n*k]) > fabs(lu[p+n*k])) p = i;
     if (p != k)
       {
         for (j = 0 ; j < n; j++) { t = lu[k+n*j]; lu[k+n*j] = lu[p+n*j]; lu[p+n*j] = t; }
         ip = perm[k]; perm[k] = perm[p]; perm[p] = ip;
       }
     for (i = k+1 ; i < n; i++)
       {
         lu[i+n*k] /= lu[k+n*k];
         l = lu[i+n*k];
         for (j = k+1 ; j < n; j++) lu[i+n*j] -= l*lu[k+n*j];
       }
   }
 for (j = 0 ; j < n; j++)
   {
     for (i = 0 ; i < n; i++)
       {
         s = (perm[i] == j) ? 1.0 : 0.0;
         for (k = 0 ; k < i; k++) s -= lu[i+n*k]*x[k];
         x[i] = s;
       }
     for (i = n-1 ; i >= 0; i--)
       {
         s = x[i];
         for (k = i+1 ; k < n; k++) s -= lu[i+n*k]*x[k];
         x[i] = s/lu[i+n*i];
       }
     for (i = 0 ; i < n; i++) res[i+n*j] = x[i];
   }
}
";

/// Fixed source of a helper.
pub fn emit_helper(h: Helper) -> &'static str {
    match h {
        Helper::Quote => QUOTE,
        Helper::Mult => MULT,
        Helper::Inverse => INVERSE,
    }
}

/// Helpers a program calls, in emission order.
pub fn helpers_used(program: &Program) -> Vec<Helper> {
    let used: BTreeSet<Helper> = program
        .functions
        .iter()
        .flat_map(|f| &f.code)
        .filter_map(|i| match i {
            Instr::HelperCall { helper, .. } => Some(*helper),
            _ => None,
        })
        .collect();
    [Helper::Quote, Helper::Mult, Helper::Inverse]
        .into_iter()
        .filter(|h| used.contains(h))
        .collect()
}

const INCLUDES: &str = "#include <string.h>
#include <stdio.h>
#include <stdlib.h>
#include <stdint.h>
#include <math.h>
#ifndef TRUE
#define TRUE 1
#endif
#ifndef FALSE
#define FALSE 0
#endif
typedef int boolean;
";

fn dispatcher(cfg: &EmitConfig, d: &Dispatch) -> String {
    let args: Vec<String> = match cfg.mode {
        EmitMode::Runtime => {
            let ins = d.inputs.iter().enumerate().map(|(k, p)| {
                format!("(Get{}InPortPtrs(block,{}))", port_accessor(p.dtype), k + 1)
            });
            let outs = d.outputs.iter().enumerate().map(|(k, p)| {
                format!("(Get{}OutPortPtrs(block,{}))", port_accessor(p.dtype), k + 1)
            });
            ins.chain(outs).collect()
        }
        _ => d.inputs.iter().chain(&d.outputs).map(|p| p.name.clone()).collect(),
    };
    let args = args.join(",");
    let head = match cfg.mode {
        EmitMode::Runtime => format!("void {}(scicos_block *block,int flag)", cfg.entry_name),
        _ => {
            let mut ps = vec!["int flag".to_string()];
            ps.extend(
                d.inputs
                    .iter()
                    .chain(&d.outputs)
                    .map(|p| format!("{} *{}", c_type(p.dtype), p.name)),
            );
            format!("void {}({})", cfg.entry_name, ps.join(","))
        }
    };
    format!(
        "{head}\n  {{\n  if (flag == 1) {{\n   {}({args});\n  }}\n  else if (flag == 2) {{\n   {}({args});\n  }}\n  else if (flag == 4) {{\n     {}();\n  }}\n}}\n",
        d.output_fn, d.state_fn, d.init_fn
    )
}

/// Print a finalized program.
pub fn emit_program(program: &Program, cfg: &EmitConfig) -> String {
    let mut out = String::new();
    let unit = cfg.mode != EmitMode::Fragment;
    if unit {
        if cfg.mode == EmitMode::Runtime {
            out.push_str("#include <scicos/scicos_block4.h>\n");
        }
        out.push_str(INCLUDES);
        let _ = writeln!(out, "/* Start{}*/", cfg.block_id);
        for h in helpers_used(program) {
            out.push_str(emit_helper(h));
            out.push('\n');
        }
    } else {
        for h in helpers_used(program) {
            out.push_str(emit_helper(h));
            out.push('\n');
        }
    }
    let mut any_static = false;
    for d in program.statics.values() {
        if let Some(line) = declaration(d) {
            let _ = writeln!(out, "{line}");
            any_static = true;
        }
    }
    if any_static {
        out.push('\n');
    }
    for f in &program.functions {
        out.push_str(&emit_function(f, &program.statics));
        out.push('\n');
    }
    if unit {
        let _ = writeln!(out, "/* End{}*/", cfg.block_id);
        if let Some(d) = &cfg.dispatch {
            out.push('\n');
            out.push_str(&dispatcher(cfg, d));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matval::BinOp;

    #[test]
    fn literals() {
        assert_eq!(literal(Dtype::F64, 4.0), "4");
        assert_eq!(literal(Dtype::F64, 0.1), "0.1");
        assert_eq!(literal(Dtype::F64, -2.5), "(-2.5)");
        assert_eq!(literal(Dtype::F64, 2.5e-5), "2.5e-5");
        assert_eq!(literal(Dtype::I32, -3.0), "(-3)");
        assert_eq!(init_literal(Dtype::Bool, 1.0), "TRUE");
        assert_eq!(literal(Dtype::F64, f64::INFINITY), "INFINITY");
    }

    #[test]
    fn constant_declaration_is_column_major() {
        let v = MatValue::from_rows(Dtype::F64, &[[5.0, 0.0], [7.0, 8.0]]).unwrap();
        let d = Decl {
            name: "x1".into(),
            dtype: Dtype::F64,
            rows: 2,
            cols: 2,
            init: Some(v),
            storage: Storage::Local,
        };
        assert_eq!(declaration(&d).unwrap(), "double x1[]={ 5, 7, 0, 8 };");
    }

    #[test]
    fn expressions_are_parenthesized() {
        let n = Names::default();
        let e = Expr::bin(
            BinOp::Sub,
            Dtype::F64,
            Expr::bin(
                BinOp::Mul,
                Dtype::F64,
                Expr::Elem("a".into(), 0),
                Expr::Elem("a".into(), 3),
            ),
            Expr::Var("z".into()),
        );
        assert_eq!(n.expr(&e), "(((a[0])*(a[3]))-z)");
        assert_eq!(n.expr(&Expr::neg(Dtype::F64, Expr::Elem("t".into(), 2))), "(-(t[2]))");
        let e = Expr::bin(BinOp::Add, Dtype::I8, Expr::Var("a".into()), Expr::Var("b".into()));
        assert_eq!(n.expr(&e), "((int8_t)(a+b))");
    }

    #[test]
    fn scalar_params_dereference() {
        let params = vec![Param {
            name: "inouts1".into(),
            dtype: Dtype::F64,
            rows: 1,
            cols: 1,
        }];
        let names = Names::new(&IndexMap::new(), &params, None);
        let mut out = String::new();
        instr(
            &mut out,
            &names,
            &Instr::Assign {
                name: "inouts1".into(),
                expr: Expr::Lit(Dtype::F64, 1.0),
            },
            "",
        );
        assert_eq!(out, "*inouts1=1;\n");
    }

    #[test]
    fn helper_sources() {
        assert!(emit_helper(Helper::Quote).contains("res[j+(n1)*i]= a[i+(m1)*j];"));
        assert!(emit_helper(Helper::Mult).contains("res[i+m1*j]=0;"));
    }
}
