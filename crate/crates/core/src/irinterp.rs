//! Reference executor for finalized programs, standing in for compiling and
//! running the emitted C.
//!
//! Arithmetic uses the same scalar kernels as [`crate::matval`], so results
//! agree bit for bit with numeric simulation whenever the operation order is
//! the same. Integer division by zero is an error; f64 follows IEEE-754.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::matval::{self, BinOp, Dtype, MatValue};
use crate::trace::{CallTarget, Decl, Expr, Function, Helper, Instr, Program, Storage};

const MAX_DEPTH: usize = 64;

/// Statics of one program instance.
pub struct Machine<'p> {
    program: &'p Program,
    statics: HashMap<String, MatValue>,
}

impl<'p> Machine<'p> {
    /// Statics start at their declared defaults.
    pub fn new(program: &'p Program) -> Self {
        let statics = program
            .statics
            .values()
            .map(|d| (d.name.clone(), d.initial_value()))
            .collect();
        Machine { program, statics }
    }

    pub fn program(&self) -> &Program {
        self.program
    }

    pub fn static_value(&self, name: &str) -> Option<&MatValue> {
        self.statics.get(name)
    }

    pub fn statics(&self) -> &HashMap<String, MatValue> {
        &self.statics
    }

    /// Overwrite a static, e.g. to inject a fault in tests.
    pub fn set_static(&mut self, name: &str, v: MatValue) -> Result<()> {
        match self.statics.get_mut(name) {
            Some(slot) if slot.same_type(&v) => {
                *slot = v;
                Ok(())
            }
            Some(_) => Err(Error::ShapeMismatch(format!("static `{name}`"))),
            None => Err(Error::UnboundName(name.to_string())),
        }
    }

    /// Run the program's `initialize*` function, if any.
    pub fn run_init(&mut self) -> Result<()> {
        let name = self
            .program
            .functions
            .iter()
            .find(|f| f.name.starts_with("initialize"))
            .map(|f| f.name.clone());
        match name {
            Some(n) => self.run_function(&n, &mut []),
            None => Ok(()),
        }
    }

    /// Execute `name`; `args` are read and written in place.
    pub fn run_function(&mut self, name: &str, args: &mut [MatValue]) -> Result<()> {
        call(self.program, &mut self.statics, name, args, 0)
    }

    /// One step per entry of `inputs`: the output function, then the state
    /// function, on shared port buffers. Output buffers start at zero and
    /// persist across steps. Returns the outputs after each output phase.
    pub fn run_steps(
        &mut self,
        output_fn: &str,
        state_fn: &str,
        inputs: &[Vec<MatValue>],
        outputs: &[MatValue],
    ) -> Result<Vec<Vec<MatValue>>> {
        let mut outs: Vec<MatValue> = outputs.to_vec();
        let mut result = Vec::with_capacity(inputs.len());
        for step in inputs {
            let mut args: Vec<MatValue> = step.iter().cloned().chain(outs.iter().cloned()).collect();
            self.run_function(output_fn, &mut args)?;
            let n_in = step.len();
            result.push(args[n_in..].to_vec());
            self.run_function(state_fn, &mut args)?;
            outs = args[n_in..].to_vec();
        }
        Ok(result)
    }
}

fn call(
    program: &Program,
    statics: &mut HashMap<String, MatValue>,
    name: &str,
    args: &mut [MatValue],
    depth: usize,
) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::MalformedIR(format!("call depth exceeded in `{name}`")));
    }
    let f: &Function = program
        .function(name)
        .ok_or_else(|| Error::UnknownName(format!("function `{name}`")))?;
    if f.params.len() != args.len() {
        return Err(Error::ShapeMismatch(format!(
            "`{name}` takes {} arguments, got {}",
            f.params.len(),
            args.len()
        )));
    }
    for (p, a) in f.params.iter().zip(args.iter()) {
        if p.dtype != a.dtype() || p.len() != a.len() {
            return Err(Error::ShapeMismatch(format!(
                "argument `{}` of `{name}` expects {} {}x{}",
                p.name, p.dtype, p.rows, p.cols
            )));
        }
    }
    let params: HashMap<&str, usize> = f
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), i))
        .collect();
    let mut frame = Frame {
        locals: locals_of(&f.decls, &HashMap::new())?,
        params,
        args,
        statics,
    };
    for instr in &f.code {
        match instr {
            Instr::IfExpr { cond, then, other } => {
                let target = if frame.eval(cond)? != 0.0 { then } else { other };
                frame.forward(program, target, depth)?;
            }
            Instr::Call(target) => frame.forward(program, target, depth)?,
            other => frame.exec(other)?,
        }
    }
    Ok(())
}

fn locals_of(
    decls: &IndexMap<String, Decl>,
    bindings: &HashMap<String, MatValue>,
) -> Result<HashMap<String, MatValue>> {
    let mut out = HashMap::new();
    for d in decls.values() {
        let v = if d.storage == Storage::External {
            let v = bindings
                .get(&d.name)
                .ok_or_else(|| Error::UnboundName(d.name.clone()))?;
            if v.dtype() != d.dtype || v.shape() != (d.rows, d.cols) {
                return Err(Error::ShapeMismatch(format!("binding for `{}`", d.name)));
            }
            v.clone()
        } else {
            d.initial_value()
        };
        out.insert(d.name.clone(), v);
    }
    Ok(out)
}

struct Frame<'a> {
    locals: HashMap<String, MatValue>,
    params: HashMap<&'a str, usize>,
    args: &'a mut [MatValue],
    statics: &'a mut HashMap<String, MatValue>,
}

impl Frame<'_> {
    fn get(&self, name: &str) -> Result<&MatValue> {
        if let Some(v) = self.locals.get(name) {
            return Ok(v);
        }
        if let Some(&i) = self.params.get(name) {
            return Ok(&self.args[i]);
        }
        self.statics
            .get(name)
            .ok_or_else(|| Error::UnboundName(name.to_string()))
    }

    fn get_mut(&mut self, name: &str) -> Result<&mut MatValue> {
        if let Some(v) = self.locals.get_mut(name) {
            return Ok(v);
        }
        if let Some(&i) = self.params.get(name) {
            return Ok(&mut self.args[i]);
        }
        self.statics
            .get_mut(name)
            .ok_or_else(|| Error::UnboundName(name.to_string()))
    }

    fn elem(&self, name: &str, k: usize) -> Result<f64> {
        let v = self.get(name)?;
        if k >= v.len() {
            return Err(Error::IndexOutOfRange(format!("{name}[{k}] of {}", v.len())));
        }
        Ok(v.at(k))
    }

    fn store(&mut self, name: &str, k: usize, x: f64) -> Result<()> {
        let v = self.get_mut(name)?;
        if k >= v.len() {
            return Err(Error::IndexOutOfRange(format!("{name}[{k}] of {}", v.len())));
        }
        v.set_at(k, x)
    }

    fn eval(&self, e: &Expr) -> Result<f64> {
        Ok(match e {
            Expr::Lit(_, x) => *x,
            Expr::Var(n) => self.elem(n, 0)?,
            Expr::Elem(n, k) => self.elem(n, *k)?,
            Expr::Neg(d, a) => matval::scalar_neg(*d, self.eval(a)?)?,
            Expr::Bin { op, dtype, lhs, rhs } => {
                matval::scalar_binop(*op, *dtype, self.eval(lhs)?, self.eval(rhs)?)?
            }
            Expr::Cmp { op, lhs, rhs } => {
                matval::scalar_compare(*op, self.eval(lhs)?, self.eval(rhs)?)
            }
            Expr::Math(f, args) => {
                let xs = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>>>()?;
                matval::scalar_math(*f, &xs)
            }
            Expr::Cast { from, to, arg } => matval::scalar_convert(*from, *to, self.eval(arg)?),
            Expr::Select {
                cond, then, other, ..
            } => {
                if self.eval(cond)? != 0.0 {
                    self.eval(then)?
                } else {
                    self.eval(other)?
                }
            }
        })
    }

    /// Call `target` passing this frame's values by name, copied back after.
    fn forward(&mut self, program: &Program, target: &CallTarget, depth: usize) -> Result<()> {
        let mut passed = target
            .args
            .iter()
            .map(|a| self.get(a).cloned())
            .collect::<Result<Vec<_>>>()?;
        call(program, self.statics, &target.function, &mut passed, depth + 1)?;
        for (a, v) in target.args.iter().zip(passed) {
            *self.get_mut(a)? = v;
        }
        Ok(())
    }

    fn dims(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                let x = self.elem(n, 0)?;
                if x < 0.0 || x.fract() != 0.0 {
                    return Err(Error::InvalidValue(format!("dimension `{n}` = {x}")));
                }
                Ok(x as usize)
            })
            .collect()
    }

    fn operand(&self, name: &str, rows: usize, cols: usize) -> Result<MatValue> {
        let v = self.get(name)?;
        if v.len() < rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "`{name}` has {} elements, helper reads {}",
                v.len(),
                rows * cols
            )));
        }
        MatValue::new(Dtype::F64, rows, cols, v.data()[..rows * cols].to_vec())
    }

    fn write_all(&mut self, name: &str, data: &[f64]) -> Result<()> {
        for (k, &x) in data.iter().enumerate() {
            self.store(name, k, x)?;
        }
        Ok(())
    }

    fn exec(&mut self, instr: &Instr) -> Result<()> {
        match instr {
            Instr::Def { name, expr } | Instr::Assign { name, expr } => {
                let x = self.eval(expr)?;
                self.store(name, 0, x)
            }
            Instr::SetElem { name, index, expr } => {
                let x = self.eval(expr)?;
                self.store(name, *index, x)
            }
            Instr::Copy { dst, src, len, .. } => {
                let s = self.get(src)?;
                if s.len() < *len {
                    return Err(Error::IndexOutOfRange(format!("copy of {len} from `{src}`")));
                }
                let data = s.data()[..*len].to_vec();
                self.write_all(dst, &data)
            }
            Instr::Annotation(_) => Ok(()),
            Instr::HelperCall {
                helper,
                res,
                operands,
                dims,
            } => {
                let d = self.dims(dims)?;
                let out = match (helper, operands.as_slice(), d.as_slice()) {
                    (Helper::Mult, [a, b], &[m1, n1, m2, n2]) => {
                        let a = self.operand(a, m1, n1)?;
                        let b = self.operand(b, m2, n2)?;
                        mult(&a, &b, n2)
                    }
                    (Helper::Quote, [a], &[m1, n1]) => matval::transpose(&self.operand(a, m1, n1)?),
                    (Helper::Inverse, [a], &[n]) => matval::lu_inverse_raw(&self.operand(a, n, n)?)?,
                    _ => {
                        return Err(Error::MalformedIR(format!(
                            "bad arguments to helper `{}`",
                            helper.name()
                        )))
                    }
                };
                self.write_all(res, out.data())
            }
            Instr::IfExpr { .. } | Instr::Call(_) => Err(Error::UnsupportedInstr(format!(
                "`{instr}` outside a program"
            ))),
        }
    }
}

/// The `mult` helper: `a` is m1 x n1, `b` has n2 columns and is read with
/// its own row stride; each entry accumulates from zero.
fn mult(a: &MatValue, b: &MatValue, n2: usize) -> MatValue {
    let (m1, n1) = a.shape();
    let m2 = b.rows();
    let mut data = vec![0.0; m1 * n2];
    for i in 0..m1 {
        for j in 0..n2 {
            let mut acc = 0.0;
            for k in 0..n1 {
                acc += a.at(i + m1 * k) * b.at(k + m2 * j);
            }
            data[i + m1 * j] = acc;
        }
    }
    MatValue::new(Dtype::F64, m1, n2, data).expect("sizes match")
}

/// Execute top-level code (no calls). Free symbolic inputs are taken from
/// `bindings`; returns every declared name's final value.
pub fn run_code(
    code: &[Instr],
    decls: &IndexMap<String, Decl>,
    bindings: &HashMap<String, MatValue>,
) -> Result<HashMap<String, MatValue>> {
    run_code_with_statics(code, decls, &IndexMap::new(), bindings).map(|(l, _)| l)
}

/// Like [`run_code`], also binding `statics` to their defaults. Returns the
/// locals and the statics.
pub fn run_code_with_statics(
    code: &[Instr],
    decls: &IndexMap<String, Decl>,
    statics: &IndexMap<String, Decl>,
    bindings: &HashMap<String, MatValue>,
) -> Result<(HashMap<String, MatValue>, HashMap<String, MatValue>)> {
    let mut st: HashMap<String, MatValue> = statics
        .values()
        .map(|d| (d.name.clone(), d.initial_value()))
        .collect();
    let mut frame = Frame {
        locals: locals_of(decls, bindings)?,
        params: HashMap::new(),
        args: &mut [],
        statics: &mut st,
    };
    for instr in code {
        frame.exec(instr)?;
    }
    let locals = frame.locals;
    Ok((locals, st))
}

/// Binary elementwise op on values, for tests that need the interpreter's
/// exact scalar semantics on whole matrices.
pub fn elementwise(op: BinOp, a: &MatValue, b: &MatValue) -> Result<MatValue> {
    matval::elem_binop(op, a, b)
}
