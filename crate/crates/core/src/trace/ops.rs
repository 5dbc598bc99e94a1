//! Overloaded operations on [`BVar`]s.
//!
//! Every operation folds when all operands are numeric and records code
//! otherwise. Element loops run rows outer, columns inner.

use super::{BVar, Expr, Helper, Instr, Storage, TraceContext, UNROLL_THRESHOLD};
use crate::error::{Error, Result};
use crate::matval::{self, BinOp, CmpOp, Dtype, MathFn, MatValue};

fn all_numeric(xs: &[&BVar]) -> bool {
    xs.iter().all(|x| !x.is_symbolic())
}

impl TraceContext {
    /// Elementwise `+ - .* ./` with scalar broadcast.
    pub fn bv_binop(&mut self, op: BinOp, a: &BVar, b: &BVar) -> Result<BVar> {
        let (d, r, c) = matval::binop_type(op, a.value(), b.value())?;
        if all_numeric(&[a, b]) {
            return Ok(matval::elem_binop(op, a.value(), b.value())?.into());
        }
        self.emit_array(d, r, c, |i, j| {
            let k = i + r * j;
            Expr::bin(op, d, Self::operand(a, k), Self::operand(b, k))
        })
    }

    pub fn bv_add(&mut self, a: &BVar, b: &BVar) -> Result<BVar> {
        self.bv_binop(BinOp::Add, a, b)
    }

    pub fn bv_sub(&mut self, a: &BVar, b: &BVar) -> Result<BVar> {
        self.bv_binop(BinOp::Sub, a, b)
    }

    pub fn bv_neg(&mut self, a: &BVar) -> Result<BVar> {
        if a.dtype() == Dtype::Bool {
            return Err(Error::DtypeMismatch(
                "bool arithmetic requires an explicit conversion".into(),
            ));
        }
        if !a.is_symbolic() {
            return Ok(matval::neg(a.value())?.into());
        }
        let (r, c) = a.shape();
        let d = a.dtype();
        self.emit_array(d, r, c, |i, j| Expr::neg(d, Self::operand(a, i + r * j)))
    }

    /// Matrix product; a 1x1 operand scales elementwise.
    pub fn bv_matmul(&mut self, a: &BVar, b: &BVar) -> Result<BVar> {
        if a.is_scalar() || b.is_scalar() {
            return self.bv_binop(BinOp::Mul, a, b);
        }
        let (d, m, n) = matval::matmul_type(a.value(), b.value())?;
        if all_numeric(&[a, b]) {
            return Ok(matval::matmul(a.value(), b.value())?.into());
        }
        let p = a.shape().1;
        if d == Dtype::F64 && m * n > UNROLL_THRESHOLD {
            self.push(Instr::Annotation(format!(
                "Product of matrices resulting size {}>{UNROLL_THRESHOLD}: calling external function",
                m * n
            )));
            return self.helper_call(Helper::Mult, &[a, b], &[m, p, p, n], (m, n));
        }
        self.emit_array(d, m, n, |i, j| {
            (0..p).fold(Expr::Lit(d, 0.0), |acc, k| {
                let prod = Expr::bin(
                    BinOp::Mul,
                    d,
                    Self::operand(a, i + m * k),
                    Self::operand(b, k + p * j),
                );
                Expr::bin(BinOp::Add, d, acc, prod)
            })
        })
    }

    pub fn bv_transpose(&mut self, a: &BVar) -> Result<BVar> {
        if !a.is_symbolic() {
            return Ok(matval::transpose(a.value()).into());
        }
        let (r, c) = a.shape();
        if a.is_scalar() || a.is_empty() {
            return Ok(BVar::handle(MatValue::zeros(a.dtype(), c, r), a.name()));
        }
        if a.dtype() != Dtype::F64 || a.len() <= UNROLL_THRESHOLD {
            return self.emit_array(a.dtype(), c, r, |i, j| Self::operand(a, j + r * i));
        }
        self.push(Instr::Annotation(format!(
            "Transpose of matrix of size {}>{UNROLL_THRESHOLD}: calling external function",
            a.len()
        )));
        let out = self.helper_call(Helper::Quote, &[a], &[r, c], (c, r))?;
        self.push(Instr::Annotation("End of Transpose".into()));
        Ok(out)
    }

    /// Declare the result, materialize numeric operands, assign the
    /// dimension arguments, then call the helper.
    fn helper_call(
        &mut self,
        helper: Helper,
        args: &[&BVar],
        dims: &[usize],
        (rows, cols): (usize, usize),
    ) -> Result<BVar> {
        let res = self.getunique();
        self.declare(&res, Dtype::F64, rows, cols, None, Storage::Local)?;
        let operands = args
            .iter()
            .map(|b| self.materialize(b))
            .collect::<Result<Vec<_>>>()?;
        let mut dim_names = Vec::with_capacity(dims.len());
        for &n in dims {
            let name = self.getunique();
            self.declare(&name, Dtype::F64, 1, 1, None, Storage::Local)?;
            self.push(Instr::Def {
                name: name.clone(),
                expr: Expr::Lit(Dtype::F64, n as f64),
            });
            dim_names.push(name);
        }
        self.push(Instr::HelperCall {
            helper,
            res: res.clone(),
            operands,
            dims: dim_names,
        });
        Ok(BVar::handle(MatValue::zeros(Dtype::F64, rows, cols), res))
    }

    /// `[a; b]`.
    pub fn bv_vcat(&mut self, a: &BVar, b: &BVar) -> Result<BVar> {
        let (d, r, c) = matval::concat_rows_type(a.value(), b.value())?;
        if all_numeric(&[a, b]) {
            return Ok(matval::concat_rows(a.value(), b.value())?.into());
        }
        if a.is_empty() {
            return Ok(b.clone());
        }
        if b.is_empty() {
            return Ok(a.clone());
        }
        let ar = a.shape().0;
        let br = b.shape().0;
        self.emit_array(d, r, c, |i, j| {
            if i < ar {
                Self::operand(a, i + ar * j)
            } else {
                Self::operand(b, (i - ar) + br * j)
            }
        })
    }

    /// `[a, b]`.
    pub fn bv_hcat(&mut self, a: &BVar, b: &BVar) -> Result<BVar> {
        let (d, r, c) = matval::concat_cols_type(a.value(), b.value())?;
        if all_numeric(&[a, b]) {
            return Ok(matval::concat_cols(a.value(), b.value())?.into());
        }
        if a.is_empty() {
            return Ok(b.clone());
        }
        if b.is_empty() {
            return Ok(a.clone());
        }
        let ac = a.shape().1;
        self.emit_array(d, r, c, |i, j| {
            if j < ac {
                Self::operand(a, i + r * j)
            } else {
                Self::operand(b, i + r * (j - ac))
            }
        })
    }

    pub fn bv_convert(&mut self, a: &BVar, to: Dtype) -> Result<BVar> {
        if a.dtype() == to {
            return Ok(a.clone());
        }
        if !a.is_symbolic() {
            return Ok(matval::convert(a.value(), to).into());
        }
        let (r, c) = a.shape();
        let from = a.dtype();
        self.emit_array(to, r, c, |i, j| {
            Expr::cast(from, to, Self::operand(a, i + r * j))
        })
    }

    /// Sum of all elements, accumulated from zero in storage order.
    pub fn bv_sum(&mut self, a: &BVar) -> Result<BVar> {
        if !a.is_symbolic() {
            return Ok(matval::sum_all(a.value())?.into());
        }
        let d = a.dtype();
        if d == Dtype::Bool {
            return Err(Error::DtypeMismatch("sum of bool".into()));
        }
        let e = (0..a.len()).fold(Expr::Lit(d, 0.0), |acc, k| {
            Expr::bin(BinOp::Add, d, acc, Self::operand(a, k))
        });
        self.emit_scalar(d, e)
    }

    pub fn bv_compare(&mut self, op: CmpOp, a: &BVar, b: &BVar) -> Result<BVar> {
        let (r, c) = matval::compare_type(a.value(), b.value())?;
        if all_numeric(&[a, b]) {
            return Ok(matval::compare(op, a.value(), b.value())?.into());
        }
        self.emit_array(Dtype::Bool, r, c, |i, j| {
            let k = i + r * j;
            Expr::cmp(op, Self::operand(a, k), Self::operand(b, k))
        })
    }

    pub fn bv_math(&mut self, f: MathFn, args: &[&BVar]) -> Result<BVar> {
        let vals: Vec<&MatValue> = args.iter().map(|a| a.value()).collect();
        let (r, c) = matval::math_type(f, &vals)?;
        if all_numeric(args) {
            return Ok(matval::elem_math(f, &vals)?.into());
        }
        self.emit_array(Dtype::F64, r, c, |i, j| {
            let k = i + r * j;
            Expr::math(f, args.iter().map(|a| Self::operand(a, k)).collect())
        })
    }

    /// Elementwise `cond ? a : b` with broadcast over all three.
    pub fn bv_select(&mut self, cond: &BVar, a: &BVar, b: &BVar) -> Result<BVar> {
        if a.dtype() != b.dtype() {
            return Err(Error::DtypeMismatch(format!(
                "branches are {} and {}",
                a.dtype(),
                b.dtype()
            )));
        }
        let (r, c) = matval::broadcast_shape(a.value(), b.value())?;
        let (r, c) = matval::broadcast_shape(&MatValue::zeros(a.dtype(), r, c), cond.value())?;
        if !cond.is_symbolic() {
            let pick = |k: usize| {
                let ck = if cond.is_scalar() { 0 } else { k };
                cond.value().at(ck) != 0.0
            };
            if all_numeric(&[a, b]) || cond.is_scalar() {
                let chosen = if pick(0) { a } else { b };
                if chosen.shape() == (r, c) {
                    return Ok(chosen.clone());
                }
            }
            if all_numeric(&[a, b]) {
                let mut out = MatValue::zeros(a.dtype(), r, c);
                for k in 0..r * c {
                    let src = if pick(k) { a } else { b };
                    out.set_at(k, src.value().at(if src.is_scalar() { 0 } else { k }))?;
                }
                return Ok(out.into());
            }
        }
        let d = a.dtype();
        self.emit_array(d, r, c, |i, j| {
            let k = i + r * j;
            Expr::select(
                d,
                Self::operand(cond, k),
                Self::operand(a, k),
                Self::operand(b, k),
            )
        })
    }

    /// `a(i, j)` with 1-based indices.
    pub fn bv_get(&mut self, a: &BVar, i: usize, j: usize) -> Result<BVar> {
        let (r, c) = a.shape();
        if i == 0 || j == 0 || i > r || j > c {
            return Err(Error::IndexOutOfRange(format!("({i},{j}) of {r}x{c}")));
        }
        let k = (i - 1) + r * (j - 1);
        if !a.is_symbolic() {
            return Ok(MatValue::scalar_of(a.dtype(), a.value().at(k))?.into());
        }
        if a.is_scalar() {
            return Ok(a.clone());
        }
        self.emit_scalar(a.dtype(), Self::operand(a, k))
    }

    /// `a(i, j) = v` with 1-based indices. A numeric `a` receiving a
    /// symbolic value is first materialized as a local.
    pub fn bv_set(&mut self, a: &mut BVar, i: usize, j: usize, v: &BVar) -> Result<()> {
        let (r, c) = a.shape();
        if i == 0 || j == 0 || i > r || j > c {
            return Err(Error::IndexOutOfRange(format!("({i},{j}) of {r}x{c}")));
        }
        if !v.is_scalar() {
            return Err(Error::ShapeMismatch("assigned value must be 1x1".into()));
        }
        if v.dtype() != a.dtype() {
            return Err(Error::DtypeMismatch(format!(
                "storing {} into {}",
                v.dtype(),
                a.dtype()
            )));
        }
        let k = (i - 1) + r * (j - 1);
        if !a.is_symbolic() && !v.is_symbolic() {
            let mut m = a.value().clone();
            m.set_at(k, v.value().at(0))?;
            *a = m.into();
            return Ok(());
        }
        if !a.is_symbolic() {
            *a = self.local_constant(&a.value().clone(), None)?;
        }
        let expr = Self::operand(v, 0);
        if a.is_scalar() {
            self.push(Instr::Assign {
                name: a.name().to_string(),
                expr,
            });
        } else {
            self.push(Instr::SetElem {
                name: a.name().to_string(),
                index: k,
                expr,
            });
        }
        Ok(())
    }

    /// Matrix inverse of a square f64 operand.
    pub fn bv_inverse(&mut self, a: &BVar) -> Result<BVar> {
        let n = matval::check_square_f64(a.value())?;
        if !a.is_symbolic() {
            return Ok(matval::invert(a.value())?.into());
        }
        match n {
            0 => Ok(a.clone()),
            1 => self.emit_scalar(
                Dtype::F64,
                Expr::bin(BinOp::Div, Dtype::F64, Expr::Lit(Dtype::F64, 1.0), Self::operand(a, 0)),
            ),
            2 => self.inverse_2x2(a),
            _ => self.helper_call(Helper::Inverse, &[a], &[n], (n, n)),
        }
    }

    /// Adjugate over determinant, traced one element at a time.
    fn inverse_2x2(&mut self, a: &BVar) -> Result<BVar> {
        let name = self.getunique();
        self.declare(&name, Dtype::F64, 2, 2, None, Storage::Local)?;
        let mut out = BVar::handle(MatValue::zeros(Dtype::F64, 2, 2), name);
        let v = self.bv_get(a, 2, 2)?;
        self.bv_set(&mut out, 1, 1, &v)?;
        let v = self.bv_get(a, 1, 1)?;
        self.bv_set(&mut out, 2, 2, &v)?;
        let v = self.bv_get(a, 1, 2)?;
        let v = self.bv_neg(&v)?;
        self.bv_set(&mut out, 1, 2, &v)?;
        let v = self.bv_get(a, 2, 1)?;
        let v = self.bv_neg(&v)?;
        self.bv_set(&mut out, 2, 1, &v)?;
        let a11 = self.bv_get(a, 1, 1)?;
        let a22 = self.bv_get(a, 2, 2)?;
        let p = self.bv_binop(BinOp::Mul, &a11, &a22)?;
        let a12 = self.bv_get(a, 1, 2)?;
        let a21 = self.bv_get(a, 2, 1)?;
        let q = self.bv_binop(BinOp::Mul, &a12, &a21)?;
        let det = self.bv_sub(&p, &q)?;
        self.bv_binop(BinOp::Div, &out, &det)
    }

    /// Right division `a / b`: elementwise when `b` is 1x1, otherwise
    /// `a * inv(b)` for square `b`.
    pub fn bv_div(&mut self, a: &BVar, b: &BVar) -> Result<BVar> {
        if b.is_scalar() {
            return self.bv_binop(BinOp::Div, a, b);
        }
        let (r, c) = b.shape();
        if r != c {
            return Err(Error::NonSquare);
        }
        let inv = self.bv_inverse(b)?;
        self.bv_matmul(a, &inv)
    }

    /// Truth value of a numeric; a symbolic cannot be branched on while
    /// tracing.
    pub fn bv_is_true(&self, a: &BVar, what: &str) -> Result<bool> {
        if a.is_symbolic() {
            return Err(Error::SymbolicCondition(what.to_string()));
        }
        Ok(a.value().is_true())
    }
}
