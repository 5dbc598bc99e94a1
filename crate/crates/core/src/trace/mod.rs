//! Partially evaluated values and the recording session.
//!
//! A [`BVar`] is either numeric (its value is known and operations fold) or
//! symbolic (only its dtype and shape are meaningful). Operations in
//! [`ops`] fold numeric operands and append [`Instr`]s to the
//! [`TraceContext`] whenever a symbolic operand is involved.

pub mod ir;
mod ops;
mod val;

use indexmap::IndexMap;

pub use ir::{CallTarget, Decl, Expr, Function, Helper, Instr, Param, Program, Storage};
pub use val::{Tracer, Val};

use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};

/// Results with more elements than this are computed by a helper call
/// instead of unrolled scalar code (matrix product and transpose only).
pub const UNROLL_THRESHOLD: usize = 6;

/// A block variable: a matrix value tagged numeric or symbolic.
#[derive(Clone, Debug, PartialEq)]
pub struct BVar {
    sym: bool,
    value: MatValue,
    name: String,
}

impl BVar {
    pub fn numeric(value: MatValue) -> Self {
        BVar {
            sym: false,
            value,
            name: String::new(),
        }
    }

    /// Symbolic handle to existing storage; nothing is declared.
    pub(crate) fn handle(value: MatValue, name: impl Into<String>) -> Self {
        BVar {
            sym: true,
            value,
            name: name.into(),
        }
    }

    pub fn is_symbolic(&self) -> bool {
        self.sym
    }

    /// Actual value when numeric, nominal value when symbolic.
    pub fn value(&self) -> &MatValue {
        &self.value
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> Dtype {
        self.value.dtype()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.value.is_scalar()
    }

    /// `size(x)`: always numeric, even for symbolic values.
    pub fn size(&self) -> MatValue {
        let (r, c) = self.shape();
        MatValue::row(Dtype::F64, &[r as f64, c as f64]).expect("sizes are finite")
    }

    /// `datatype(x)`: always known.
    pub fn datatype(&self) -> Dtype {
        self.dtype()
    }

    /// Numeric value, or `None` for a symbolic.
    pub fn as_numeric(&self) -> Option<&MatValue> {
        (!self.sym).then_some(&self.value)
    }
}

impl From<MatValue> for BVar {
    fn from(v: MatValue) -> Self {
        BVar::numeric(v)
    }
}

/// Wrap a known value.
pub fn numerics(v: MatValue) -> BVar {
    BVar::numeric(v)
}

#[derive(Clone, Debug)]
struct OpenFunction {
    name: String,
    params: Vec<Param>,
    outer_code: Vec<Instr>,
    outer_decls: IndexMap<String, Decl>,
}

/// One recording session.
#[derive(Clone, Debug, Default)]
pub struct TraceContext {
    pub(crate) code: Vec<Instr>,
    pub(crate) declarations: IndexMap<String, Decl>,
    pub(crate) top_declarations: IndexMap<String, Decl>,
    counter: u64,
    pub(crate) functions: Vec<Function>,
    open: Option<OpenFunction>,
    warnings: Vec<String>,
}

impl TraceContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Instructions recorded in the current scope (the open function, or the
    /// session's top level).
    pub fn code(&self) -> &[Instr] {
        &self.code
    }

    pub fn declarations(&self) -> &IndexMap<String, Decl> {
        &self.declarations
    }

    pub fn top_declarations(&self) -> &IndexMap<String, Decl> {
        &self.top_declarations
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Next fresh temporary name, `tmp_<n>`.
    pub fn getunique(&mut self) -> String {
        self.counter += 1;
        format!("tmp_{}", self.counter)
    }

    pub(crate) fn open_function(&self) -> Option<(&str, &[Param])> {
        self.open.as_ref().map(|o| (o.name.as_str(), o.params.as_slice()))
    }

    /// Begin recording the body of `name`; `params` become its arguments.
    pub fn start_function(&mut self, name: &str, params: Vec<Param>) -> Result<()> {
        if let Some(o) = &self.open {
            return Err(Error::NestedFunction {
                outer: o.name.clone(),
                inner: name.to_string(),
            });
        }
        if self.functions.iter().any(|f| f.name == name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        self.open = Some(OpenFunction {
            name: name.to_string(),
            params,
            outer_code: std::mem::take(&mut self.code),
            outer_decls: std::mem::take(&mut self.declarations),
        });
        Ok(())
    }

    /// Seal the open function, restoring the enclosing scope.
    pub fn end_function(&mut self, name: &str) -> Result<()> {
        match &self.open {
            None => return Err(Error::NoOpenFunction(format!(" to end `{name}`"))),
            Some(o) if o.name != name => {
                return Err(Error::NoOpenFunction(format!(
                    " named `{name}` (`{}` is open)",
                    o.name
                )))
            }
            Some(_) => {}
        }
        let o = self.open.take().expect("checked above");
        let code = std::mem::replace(&mut self.code, o.outer_code);
        let decls = std::mem::replace(&mut self.declarations, o.outer_decls);
        self.functions.push(Function {
            name: o.name,
            params: o.params,
            decls,
            code,
        });
        Ok(())
    }

    /// Fail if a function was started but not ended.
    pub fn check_balanced(&self) -> Result<()> {
        match &self.open {
            Some(o) => Err(Error::UnbalancedFunction(o.name.clone())),
            None => Ok(()),
        }
    }

    /// Take the top-level code and declarations, leaving them empty.
    pub fn take_code(&mut self) -> (Vec<Instr>, IndexMap<String, Decl>) {
        (
            std::mem::take(&mut self.code),
            std::mem::take(&mut self.declarations),
        )
    }

    pub fn push(&mut self, instr: Instr) {
        self.code.push(instr);
    }

    pub(crate) fn is_declared(&self, name: &str) -> bool {
        self.declarations.contains_key(name)
            || self.top_declarations.contains_key(name)
            || self
                .open
                .as_ref()
                .is_some_and(|o| o.params.iter().any(|p| p.name == name))
    }

    pub(crate) fn declare(
        &mut self,
        name: &str,
        dtype: Dtype,
        rows: usize,
        cols: usize,
        init: Option<MatValue>,
        storage: Storage,
    ) -> Result<()> {
        if self.is_declared(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        let decl = Decl {
            name: name.to_string(),
            dtype,
            rows,
            cols,
            init,
            storage,
        };
        if storage == Storage::Static {
            self.top_declarations.insert(name.to_string(), decl);
        } else {
            self.declarations.insert(name.to_string(), decl);
        }
        Ok(())
    }

    /// `symbolics(v, name)`: a free symbolic input with nominal value `v`.
    /// Without a name a fresh `tmp_<n>` is used.
    pub fn symbolics(&mut self, v: MatValue, name: Option<&str>) -> Result<BVar> {
        let name = match name {
            Some("") => return Err(Error::UnknownName("empty symbolic name".into())),
            Some(n) => n.to_string(),
            None => self.getunique(),
        };
        let (r, c) = v.shape();
        self.declare(&name, v.dtype(), r, c, None, Storage::External)?;
        Ok(BVar::handle(v, name))
    }

    /// Local variable with an initializer; returns its symbolic handle.
    pub(crate) fn local_constant(&mut self, v: &MatValue, name: Option<&str>) -> Result<BVar> {
        let name = match name {
            Some(n) => n.to_string(),
            None => self.getunique(),
        };
        let (r, c) = v.shape();
        self.declare(&name, v.dtype(), r, c, Some(v.clone()), Storage::Local)?;
        Ok(BVar::handle(v.clone(), name))
    }

    /// Expression for element `k` of `b` (a 1x1 broadcasts).
    pub(crate) fn operand(b: &BVar, k: usize) -> Expr {
        let k = if b.is_scalar() { 0 } else { k };
        if !b.sym {
            Expr::Lit(b.dtype(), b.value.at(k))
        } else if b.is_scalar() {
            Expr::Var(b.name.clone())
        } else {
            Expr::Elem(b.name.clone(), k)
        }
    }

    /// Bind a scalar expression. Literal results stay numeric.
    pub(crate) fn emit_scalar(&mut self, dtype: Dtype, expr: Expr) -> Result<BVar> {
        if let Expr::Lit(_, x) = expr {
            return Ok(BVar::numeric(MatValue::scalar_of(dtype, x)?));
        }
        let name = self.getunique();
        self.declare(&name, dtype, 1, 1, None, Storage::Local)?;
        self.push(Instr::Def {
            name: name.clone(),
            expr,
        });
        Ok(BVar::handle(MatValue::zeros(dtype, 1, 1), name))
    }

    /// Bind a fresh array filled element by element, rows outer and columns
    /// inner. A 1x1 result becomes a scalar definition.
    pub(crate) fn emit_array(
        &mut self,
        dtype: Dtype,
        rows: usize,
        cols: usize,
        mut elem: impl FnMut(usize, usize) -> Expr,
    ) -> Result<BVar> {
        if rows * cols == 0 {
            return Ok(BVar::numeric(MatValue::zeros(dtype, rows, cols)));
        }
        if rows * cols == 1 {
            return self.emit_scalar(dtype, elem(0, 0));
        }
        let exprs: Vec<(usize, Expr)> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| (i + rows * j, elem(i, j)))
            .collect();
        let name = self.getunique();
        self.declare(&name, dtype, rows, cols, None, Storage::Local)?;
        for (index, expr) in exprs {
            self.push(Instr::SetElem {
                name: name.clone(),
                index,
                expr,
            });
        }
        Ok(BVar::handle(MatValue::zeros(dtype, rows, cols), name))
    }

    /// Name of an array holding `b`, declaring a local constant for numerics.
    pub(crate) fn materialize(&mut self, b: &BVar) -> Result<String> {
        if b.sym {
            Ok(b.name.clone())
        } else {
            Ok(self.local_constant(&b.value, None)?.name)
        }
    }

    /// Emit the store of `value` into the existing storage `dst`: a block
    /// copy for 2 or more elements, a scalar assignment otherwise.
    pub(crate) fn emit_store(&mut self, dst: &BVar, value: &BVar) -> Result<()> {
        if !dst.value.same_type(&value.value) {
            let (r, c) = dst.shape();
            let (vr, vc) = value.shape();
            if dst.dtype() != value.dtype() {
                return Err(Error::DtypeMismatch(format!(
                    "storing {} into {} `{}`",
                    value.dtype(),
                    dst.dtype(),
                    dst.name
                )));
            }
            return Err(Error::ShapeMismatch(format!(
                "storing {vr}x{vc} into {r}x{c} `{}`",
                dst.name
            )));
        }
        if value.sym && value.name == dst.name {
            return Ok(());
        }
        match dst.len() {
            0 => {}
            1 => self.push(Instr::Assign {
                name: dst.name.clone(),
                expr: Self::operand(value, 0),
            }),
            len => {
                let src = self.materialize(value)?;
                self.push(Instr::Copy {
                    dst: dst.name.clone(),
                    src,
                    len,
                    dtype: dst.dtype(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_names_are_monotone() {
        let mut ctx = TraceContext::new();
        assert_eq!(ctx.getunique(), "tmp_1");
        let a = ctx.getunique();
        let b = ctx.getunique();
        assert_ne!(a, b);
        assert!(ctx.counter() == 3);
    }

    #[test]
    fn numeric_wrapping() {
        let v = MatValue::row(Dtype::F64, &[4.0, 8.0, 9.0]).unwrap();
        let b = numerics(v.clone());
        assert!(!b.is_symbolic());
        assert_eq!(b.value(), &v);
    }

    #[test]
    fn symbolic_creation() {
        let mut ctx = TraceContext::new();
        let a = ctx.symbolics(MatValue::scalar(67.0), Some("x")).unwrap();
        assert!(a.is_symbolic());
        assert_eq!(a.name(), "x");
        assert_eq!(a.value().data(), &[67.0]);
        assert!(matches!(
            ctx.symbolics(MatValue::scalar(1.0), Some("x")),
            Err(Error::DuplicateName(_))
        ));
        let z = ctx.symbolics(MatValue::zeros(Dtype::F64, 2, 3), None).unwrap();
        assert!(z.name().starts_with("tmp_"));
        assert_eq!(z.size().data(), &[2.0, 3.0]);
        assert_eq!(z.datatype(), Dtype::F64);
        assert!(ctx.code().is_empty());
    }
}
