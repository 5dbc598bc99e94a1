//! The pseudo-code recorded while block behaviors run on symbolic values.

use std::collections::BTreeSet;
use std::fmt;

use crate::matval::{self, BinOp, CmpOp, Dtype, MatValue, MathFn};

/// A scalar-valued expression over named storage.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Lit(Dtype, f64),
    /// Whole 1x1 variable.
    Var(String),
    /// Element of an array, 0-based column-major index.
    Elem(String, usize),
    Neg(Dtype, Box<Expr>),
    Bin {
        op: BinOp,
        dtype: Dtype,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Cmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Math(MathFn, Vec<Expr>),
    Cast {
        from: Dtype,
        to: Dtype,
        arg: Box<Expr>,
    },
    /// `cond ? a : b` with both branches already evaluated.
    Select {
        dtype: Dtype,
        cond: Box<Expr>,
        then: Box<Expr>,
        other: Box<Expr>,
    },
}

impl Expr {
    pub fn lit(dtype: Dtype, x: f64) -> Expr {
        Expr::Lit(dtype, x)
    }

    pub fn as_lit(&self) -> Option<f64> {
        match self {
            Expr::Lit(_, x) => Some(*x),
            _ => None,
        }
    }

    /// Negation with literal folding.
    pub fn neg(dtype: Dtype, e: Expr) -> Expr {
        if let Expr::Lit(_, x) = e {
            if let Ok(v) = matval::scalar_neg(dtype, x) {
                return Expr::Lit(dtype, v);
            }
        }
        Expr::Neg(dtype, Box::new(e))
    }

    /// Binary arithmetic with literal folding and the identities
    /// `x+0`, `0+x`, `x-0`, `0-x`, `x*1`, `1*x`, `x*0`, `0*x`, `x/1`.
    pub fn bin(op: BinOp, dtype: Dtype, lhs: Expr, rhs: Expr) -> Expr {
        match (op, lhs.as_lit(), rhs.as_lit()) {
            (_, Some(a), Some(b)) => {
                if let Ok(v) = matval::scalar_binop(op, dtype, a, b) {
                    return Expr::Lit(dtype, v);
                }
            }
            (BinOp::Add, Some(0.0), _) => return rhs,
            (BinOp::Add | BinOp::Sub, _, Some(0.0)) => return lhs,
            (BinOp::Sub, Some(0.0), _) => return Expr::neg(dtype, rhs),
            (BinOp::Mul, Some(1.0), _) => return rhs,
            (BinOp::Mul | BinOp::Div, _, Some(1.0)) => return lhs,
            (BinOp::Mul, Some(a), _) | (BinOp::Mul, _, Some(a)) if a == 0.0 => {
                return Expr::Lit(dtype, 0.0)
            }
            _ => {}
        }
        Expr::Bin {
            op,
            dtype,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Expr {
        if let (Some(a), Some(b)) = (lhs.as_lit(), rhs.as_lit()) {
            return Expr::Lit(Dtype::Bool, matval::scalar_compare(op, a, b));
        }
        Expr::Cmp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn math(f: MathFn, args: Vec<Expr>) -> Expr {
        if let Some(xs) = args.iter().map(Expr::as_lit).collect::<Option<Vec<_>>>() {
            return Expr::Lit(Dtype::F64, matval::scalar_math(f, &xs));
        }
        Expr::Math(f, args)
    }

    pub fn cast(from: Dtype, to: Dtype, arg: Expr) -> Expr {
        if from == to {
            return arg;
        }
        if let Some(x) = arg.as_lit() {
            return Expr::Lit(to, matval::scalar_convert(from, to, x));
        }
        Expr::Cast {
            from,
            to,
            arg: Box::new(arg),
        }
    }

    pub fn select(dtype: Dtype, cond: Expr, then: Expr, other: Expr) -> Expr {
        if let Some(c) = cond.as_lit() {
            return if c != 0.0 { then } else { other };
        }
        Expr::Select {
            dtype,
            cond: Box::new(cond),
            then: Box::new(then),
            other: Box::new(other),
        }
    }

    /// Names read by this expression.
    pub fn reads(&self, out: &mut BTreeSet<String>) {
        self.visit(&mut |e| match e {
            Expr::Var(n) | Expr::Elem(n, _) => {
                out.insert(n.clone());
            }
            _ => {}
        });
    }

    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Lit(..) | Expr::Var(_) | Expr::Elem(..) => {}
            Expr::Neg(_, a) | Expr::Cast { arg: a, .. } => a.visit(f),
            Expr::Bin { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::Math(_, args) => args.iter().for_each(|a| a.visit(f)),
            Expr::Select {
                cond, then, other, ..
            } => {
                cond.visit(f);
                then.visit(f);
                other.visit(f);
            }
        }
    }

    /// Rewrite bottom-up.
    pub fn rewrite(self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let e = match self {
            e @ (Expr::Lit(..) | Expr::Var(_) | Expr::Elem(..)) => e,
            Expr::Neg(d, a) => Expr::Neg(d, Box::new(a.rewrite(f))),
            Expr::Cast { from, to, arg } => Expr::Cast {
                from,
                to,
                arg: Box::new(arg.rewrite(f)),
            },
            Expr::Bin {
                op,
                dtype,
                lhs,
                rhs,
            } => Expr::Bin {
                op,
                dtype,
                lhs: Box::new(lhs.rewrite(f)),
                rhs: Box::new(rhs.rewrite(f)),
            },
            Expr::Cmp { op, lhs, rhs } => Expr::Cmp {
                op,
                lhs: Box::new(lhs.rewrite(f)),
                rhs: Box::new(rhs.rewrite(f)),
            },
            Expr::Math(m, args) => Expr::Math(m, args.into_iter().map(|a| a.rewrite(f)).collect()),
            Expr::Select {
                dtype,
                cond,
                then,
                other,
            } => Expr::Select {
                dtype,
                cond: Box::new(cond.rewrite(f)),
                then: Box::new(then.rewrite(f)),
                other: Box::new(other.rewrite(f)),
            },
        };
        f(e)
    }

    /// Count of `Var(name)` occurrences.
    pub fn count_var(&self, name: &str) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e, Expr::Var(v) if v == name) {
                n += 1;
            }
        });
        n
    }

    /// Whether every literal folds: no names at all.
    pub fn is_closed(&self) -> bool {
        let mut closed = true;
        self.visit(&mut |e| {
            if matches!(e, Expr::Var(_) | Expr::Elem(..)) {
                closed = false;
            }
        });
        closed
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(d, x) => write!(f, "{x}:{d}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Elem(n, k) => write!(f, "{n}[{k}]"),
            Expr::Neg(_, a) => write!(f, "(-{a})"),
            Expr::Bin { op, lhs, rhs, .. } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Cmp { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Math(m, args) => {
                write!(f, "{}(", m.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Cast { to, arg, .. } => write!(f, "{to}({arg})"),
            Expr::Select {
                cond, then, other, ..
            } => write!(f, "({cond} ? {then} : {other})"),
        }
    }
}

/// A call to a generated function with the enclosing function's arguments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallTarget {
    pub function: String,
    pub args: Vec<String>,
}

impl CallTarget {
    pub fn new(function: impl Into<String>, args: Vec<String>) -> Self {
        CallTarget {
            function: function.into(),
            args,
        }
    }
}

/// Fixed C helpers invoked for large matrix operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Helper {
    Mult,
    Quote,
    Inverse,
}

impl Helper {
    pub fn name(self) -> &'static str {
        match self {
            Helper::Mult => "mult",
            Helper::Quote => "quote",
            Helper::Inverse => "inverse",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    /// Bind a fresh scalar temporary.
    Def { name: String, expr: Expr },
    /// `name[index] = expr`, 0-based.
    SetElem {
        name: String,
        index: usize,
        expr: Expr,
    },
    /// Store into an existing scalar (static, argument or temporary).
    Assign { name: String, expr: Expr },
    /// Whole-array copy of `len` elements.
    Copy {
        dst: String,
        src: String,
        len: usize,
        dtype: Dtype,
    },
    Annotation(String),
    /// Real control flow: one of two generated functions runs.
    IfExpr {
        cond: Expr,
        then: CallTarget,
        other: CallTarget,
    },
    Call(CallTarget),
    /// `helper(res, operands..., &dims...)`; operands and dims are names.
    HelperCall {
        helper: Helper,
        res: String,
        operands: Vec<String>,
        dims: Vec<String>,
    },
}

/// Sentinel in [`Instr::writes`] meaning "may write any non-local".
pub const ANY: &str = "*";

impl Instr {
    /// Names this instruction may modify.
    pub fn writes(&self) -> Vec<&str> {
        match self {
            Instr::Def { name, .. } | Instr::SetElem { name, .. } | Instr::Assign { name, .. } => {
                vec![name]
            }
            Instr::Copy { dst, .. } => vec![dst],
            Instr::HelperCall { res, .. } => vec![res],
            Instr::IfExpr { .. } | Instr::Call(_) => vec![ANY],
            Instr::Annotation(_) => vec![],
        }
    }

    /// Names this instruction reads.
    pub fn reads(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match self {
            Instr::Def { expr, .. } | Instr::SetElem { expr, .. } | Instr::Assign { expr, .. } => {
                expr.reads(&mut out)
            }
            Instr::Copy { src, .. } => {
                out.insert(src.clone());
            }
            Instr::IfExpr { cond, then, other } => {
                cond.reads(&mut out);
                out.extend(then.args.iter().cloned());
                out.extend(other.args.iter().cloned());
            }
            Instr::Call(t) => out.extend(t.args.iter().cloned()),
            Instr::HelperCall { operands, dims, .. } => {
                out.extend(operands.iter().cloned());
                out.extend(dims.iter().cloned());
            }
            Instr::Annotation(_) => {}
        }
        out
    }

    pub fn expr_mut(&mut self) -> Option<&mut Expr> {
        match self {
            Instr::Def { expr, .. } | Instr::SetElem { expr, .. } | Instr::Assign { expr, .. } => {
                Some(expr)
            }
            Instr::IfExpr { cond, .. } => Some(cond),
            _ => None,
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Instr::Def { expr, .. } | Instr::SetElem { expr, .. } | Instr::Assign { expr, .. } => {
                Some(expr)
            }
            Instr::IfExpr { cond, .. } => Some(cond),
            _ => None,
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Def { name, expr } => write!(f, "def {name} = {expr}"),
            Instr::SetElem { name, index, expr } => write!(f, "{name}[{index}] <- {expr}"),
            Instr::Assign { name, expr } => write!(f, "{name} <- {expr}"),
            Instr::Copy { dst, src, len, .. } => write!(f, "copy {dst} <- {src} ({len})"),
            Instr::Annotation(t) => write!(f, "// {t}"),
            Instr::IfExpr { cond, then, other } => write!(
                f,
                "if {cond} then {}({}) else {}({})",
                then.function,
                then.args.join(", "),
                other.function,
                other.args.join(", ")
            ),
            Instr::Call(t) => write!(f, "call {}({})", t.function, t.args.join(", ")),
            Instr::HelperCall {
                helper,
                res,
                operands,
                dims,
            } => write!(
                f,
                "{res} <- {}({}; {})",
                helper.name(),
                operands.join(", "),
                dims.join(", ")
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    /// Automatic variable of the enclosing function (or session).
    Local,
    /// `static` variable local to a function.
    LocalStatic,
    /// Top-level static (a persistent variable).
    Static,
    /// A free symbolic input bound from outside the trace.
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decl {
    pub name: String,
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
    pub init: Option<MatValue>,
    pub storage: Storage,
}

impl Decl {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn initial_value(&self) -> MatValue {
        self.init
            .clone()
            .unwrap_or_else(|| MatValue::zeros(self.dtype, self.rows, self.cols))
    }
}

/// A function argument: always passed by address in the emitted C.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
}

impl Param {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A sealed generated function.
#[derive(Clone, Debug, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub decls: indexmap::IndexMap<String, Decl>,
    pub code: Vec<Instr>,
}

impl Function {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Everything one session produces: top-level statics and the sealed
/// functions, in emission order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub statics: indexmap::IndexMap<String, Decl>,
    pub functions: Vec<Function>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let storage = match self.storage {
            Storage::Local => "local",
            Storage::LocalStatic => "local static",
            Storage::Static => "static",
            Storage::External => "external",
        };
        write!(f, "{storage} {} {}x{} {}", self.dtype, self.rows, self.cols, self.name)?;
        if let Some(v) = &self.init {
            write!(f, " = {:?}", v.data())?;
        }
        Ok(())
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{} {}x{} {}", p.dtype, p.rows, p.cols, p.name))
            .collect();
        writeln!(f, "fn {}({}) {{", self.name, params.join(", "))?;
        for d in self.decls.values() {
            writeln!(f, "  {d}")?;
        }
        for i in &self.code {
            writeln!(f, "  {i}")?;
        }
        writeln!(f, "}}")
    }
}

impl Program {
    /// Instructions over all functions.
    pub fn instr_count(&self) -> usize {
        self.functions.iter().map(|f| f.code.len()).sum()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.statics.values() {
            writeln!(f, "{d}")?;
        }
        for func in &self.functions {
            write!(f, "\n{func}")?;
        }
        Ok(())
    }
}
