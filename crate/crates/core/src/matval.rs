//! Concrete matrix values and their numeric semantics.
//!
//! Every element is stored as an `f64`, which represents all supported
//! dtypes exactly (bool and integers up to 32 bits). Integer arithmetic is
//! carried out in `i64` and wrapped back to the dtype width, matching the
//! two's complement behavior of the emitted C.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    Bool,
    I8,
    I16,
    I32,
    U8,
    U16,
    U32,
}

impl Dtype {
    pub const ALL: [Dtype; 8] = [
        Dtype::F64,
        Dtype::Bool,
        Dtype::I8,
        Dtype::I16,
        Dtype::I32,
        Dtype::U8,
        Dtype::U16,
        Dtype::U32,
    ];

    pub fn is_int(self) -> bool {
        !matches!(self, Dtype::F64 | Dtype::Bool)
    }

    pub fn is_signed(self) -> bool {
        matches!(self, Dtype::I8 | Dtype::I16 | Dtype::I32)
    }

    /// Bit width of an integer dtype.
    pub fn bits(self) -> u32 {
        match self {
            Dtype::I8 | Dtype::U8 => 8,
            Dtype::I16 | Dtype::U16 => 16,
            Dtype::I32 | Dtype::U32 => 32,
            Dtype::Bool => 1,
            Dtype::F64 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F64 => "f64",
            Dtype::Bool => "bool",
            Dtype::I8 => "i8",
            Dtype::I16 => "i16",
            Dtype::I32 => "i32",
            Dtype::U8 => "u8",
            Dtype::U16 => "u16",
            Dtype::U32 => "u32",
        }
    }

    /// Reduce an integer to this dtype's range modulo 2^bits.
    pub fn wrap_int(self, x: i64) -> f64 {
        match self {
            Dtype::I8 => x as i8 as f64,
            Dtype::I16 => x as i16 as f64,
            Dtype::I32 => x as i32 as f64,
            Dtype::U8 => x as u8 as f64,
            Dtype::U16 => x as u16 as f64,
            Dtype::U32 => x as u32 as f64,
            Dtype::Bool => (x != 0) as i64 as f64,
            Dtype::F64 => x as f64,
        }
    }

    pub fn representable(self, x: f64) -> bool {
        match self {
            Dtype::F64 => true,
            Dtype::Bool => x == 0.0 || x == 1.0,
            _ => x.fract() == 0.0 && self.wrap_int(x as i64) == x,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dtype::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown dtype `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// Operator code used by relational blocks: 0 `==`, 1 `!=`, 2 `<`,
    /// 3 `<=`, 4 `>`, 5 `>=`.
    pub fn from_code(code: i64) -> Option<CmpOp> {
        Some(match code {
            0 => CmpOp::Eq,
            1 => CmpOp::Ne,
            2 => CmpOp::Lt,
            3 => CmpOp::Le,
            4 => CmpOp::Gt,
            5 => CmpOp::Ge,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MathFn {
    Sqrt,
    Sin,
    Cos,
    Atan2,
}

impl MathFn {
    pub fn name(self) -> &'static str {
        match self {
            MathFn::Sqrt => "sqrt",
            MathFn::Sin => "sin",
            MathFn::Cos => "cos",
            MathFn::Atan2 => "atan2",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            MathFn::Atan2 => 2,
            _ => 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Scalar kernels. Shared by the matrix operations, the IR interpreter and the
// optimizer's constant folding so all three agree bit for bit.

pub fn scalar_binop(op: BinOp, dtype: Dtype, x: f64, y: f64) -> Result<f64> {
    match dtype {
        Dtype::F64 => Ok(match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        }),
        Dtype::Bool => Err(Error::DtypeMismatch(
            "bool arithmetic requires an explicit conversion".into(),
        )),
        d => {
            let (a, b) = (x as i64, y as i64);
            let r = match op {
                BinOp::Add => a.wrapping_add(b),
                BinOp::Sub => a.wrapping_sub(b),
                BinOp::Mul => a.wrapping_mul(b),
                BinOp::Div => {
                    if b == 0 {
                        return Err(Error::DivisionByZero);
                    }
                    a.wrapping_div(b)
                }
            };
            Ok(d.wrap_int(r))
        }
    }
}

pub fn scalar_neg(dtype: Dtype, x: f64) -> Result<f64> {
    match dtype {
        Dtype::F64 => Ok(-x),
        Dtype::Bool => Err(Error::DtypeMismatch(
            "bool arithmetic requires an explicit conversion".into(),
        )),
        d => Ok(d.wrap_int((x as i64).wrapping_neg())),
    }
}

pub fn scalar_compare(op: CmpOp, x: f64, y: f64) -> f64 {
    let r = match op {
        CmpOp::Eq => x == y,
        CmpOp::Ne => x != y,
        CmpOp::Lt => x < y,
        CmpOp::Le => x <= y,
        CmpOp::Gt => x > y,
        CmpOp::Ge => x >= y,
    };
    r as i64 as f64
}

pub fn scalar_math(f: MathFn, args: &[f64]) -> f64 {
    match f {
        MathFn::Sqrt => args[0].sqrt(),
        MathFn::Sin => args[0].sin(),
        MathFn::Cos => args[0].cos(),
        MathFn::Atan2 => args[0].atan2(args[1]),
    }
}

/// Cast one element. Floats truncate toward zero, integers wrap, and any
/// value converts to bool as `x != 0`.
pub fn scalar_convert(from: Dtype, to: Dtype, x: f64) -> f64 {
    if from == to {
        return x;
    }
    match to {
        Dtype::F64 => x,
        Dtype::Bool => (x != 0.0) as i64 as f64,
        d => {
            if !x.is_finite() {
                return 0.0;
            }
            let t = x.trunc();
            let modulus = 2f64.powi(d.bits() as i32);
            let mut m = t.rem_euclid(modulus);
            if d.is_signed() && m >= modulus / 2.0 {
                m -= modulus;
            }
            m
        }
    }
}

// ---------------------------------------------------------------------------

/// A rectangular matrix stored in column-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct MatValue {
    dtype: Dtype,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatValue {
    /// Build from column-major data, checking length and representability.
    pub fn new(dtype: Dtype, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(x) = data.iter().find(|&&x| !dtype.representable(x)) {
            return Err(Error::InvalidValue(format!("{x} as {dtype}")));
        }
        Ok(MatValue {
            dtype,
            rows,
            cols,
            data,
        })
    }

    fn raw(dtype: Dtype, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        MatValue {
            dtype,
            rows,
            cols,
            data,
        }
    }

    /// Build from row-major rows (the way matrix literals are written).
    pub fn from_rows<R: AsRef<[f64]>>(dtype: Dtype, rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != ncols) {
            return Err(Error::ShapeMismatch("ragged matrix literal".into()));
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for r in rows {
                data.push(r.as_ref()[j]);
            }
        }
        MatValue::new(dtype, nrows, ncols, data)
    }

    pub fn scalar(x: f64) -> Self {
        MatValue::raw(Dtype::F64, 1, 1, vec![x])
    }

    pub fn scalar_of(dtype: Dtype, x: f64) -> Result<Self> {
        MatValue::new(dtype, 1, 1, vec![x])
    }

    pub fn bool(b: bool) -> Self {
        MatValue::raw(Dtype::Bool, 1, 1, vec![b as i64 as f64])
    }

    pub fn col(dtype: Dtype, data: &[f64]) -> Result<Self> {
        MatValue::new(dtype, data.len(), 1, data.to_vec())
    }

    pub fn row(dtype: Dtype, data: &[f64]) -> Result<Self> {
        MatValue::new(dtype, 1, data.len(), data.to_vec())
    }

    pub fn zeros(dtype: Dtype, rows: usize, cols: usize) -> Self {
        MatValue::raw(dtype, rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(dtype: Dtype, rows: usize, cols: usize, x: f64) -> Result<Self> {
        MatValue::new(dtype, rows, cols, vec![x; rows * cols])
    }

    pub fn empty() -> Self {
        MatValue::raw(Dtype::F64, 0, 0, Vec::new())
    }

    pub fn eye(n: usize) -> Self {
        let mut m = MatValue::zeros(Dtype::F64, n, n);
        for i in 0..n {
            m.data[i + n * i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = MatValue::zeros(Dtype::F64, n, n);
        for (i, &x) in d.iter().enumerate() {
            m.data[i + n * i] = x;
        }
        m
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    /// Column-major element storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Element at 0-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.rows * j]
    }

    pub fn at(&self, k: usize) -> f64 {
        self.data[k]
    }

    pub fn set_at(&mut self, k: usize, x: f64) -> Result<()> {
        if !self.dtype.representable(x) {
            return Err(Error::InvalidValue(format!("{x} as {}", self.dtype)));
        }
        self.data[k] = x;
        Ok(())
    }

    /// Row-major copy of the elements.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Self> {
        MatValue::new(self.dtype, rows, cols, self.data.clone())
    }

    /// Every element nonzero (an empty matrix is false).
    pub fn is_true(&self) -> bool {
        !self.data.is_empty() && self.data.iter().all(|&x| x != 0.0)
    }

    pub fn same_type(&self, other: &MatValue) -> bool {
        self.dtype == other.dtype && self.shape() == other.shape()
    }
}

impl fmt::Display for MatValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.dtype)?;
        for i in 0..self.rows {
            if i > 0 {
                f.write_str(";")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        f.write_str("]")
    }
}

// ---------------------------------------------------------------------------
// Shape rules, shared with the tracing layer which needs result types without
// touching values.

fn same_dtype(a: &MatValue, b: &MatValue) -> Result<Dtype> {
    if a.dtype != b.dtype {
        return Err(Error::DtypeMismatch(format!("{} vs {}", a.dtype, b.dtype)));
    }
    Ok(a.dtype)
}

/// Result shape of an elementwise operation with scalar broadcast.
pub fn broadcast_shape(a: &MatValue, b: &MatValue) -> Result<(usize, usize)> {
    if a.shape() == b.shape() || b.is_scalar() {
        Ok(a.shape())
    } else if a.is_scalar() {
        Ok(b.shape())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )))
    }
}

pub fn binop_type(op: BinOp, a: &MatValue, b: &MatValue) -> Result<(Dtype, usize, usize)> {
    let d = same_dtype(a, b)?;
    if d == Dtype::Bool {
        return Err(Error::DtypeMismatch(format!(
            "`{}` on bool requires an explicit conversion",
            op.symbol()
        )));
    }
    let (r, c) = broadcast_shape(a, b)?;
    Ok((d, r, c))
}

pub fn matmul_type(a: &MatValue, b: &MatValue) -> Result<(Dtype, usize, usize)> {
    if a.is_scalar() || b.is_scalar() {
        return binop_type(BinOp::Mul, a, b);
    }
    let d = same_dtype(a, b)?;
    if d == Dtype::Bool {
        return Err(Error::DtypeMismatch("matrix product of bool".into()));
    }
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "product of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok((d, a.rows, b.cols))
}

pub fn concat_rows_type(a: &MatValue, b: &MatValue) -> Result<(Dtype, usize, usize)> {
    if a.is_empty() && a.cols == 0 {
        return Ok((b.dtype, b.rows, b.cols));
    }
    if b.is_empty() && b.cols == 0 {
        return Ok((a.dtype, a.rows, a.cols));
    }
    let d = same_dtype(a, b)?;
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "row concatenation of {} and {} columns",
            a.cols, b.cols
        )));
    }
    Ok((d, a.rows + b.rows, a.cols))
}

pub fn concat_cols_type(a: &MatValue, b: &MatValue) -> Result<(Dtype, usize, usize)> {
    if a.is_empty() && a.rows == 0 {
        return Ok((b.dtype, b.rows, b.cols));
    }
    if b.is_empty() && b.rows == 0 {
        return Ok((a.dtype, a.rows, a.cols));
    }
    let d = same_dtype(a, b)?;
    if a.rows != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "column concatenation of {} and {} rows",
            a.rows, b.rows
        )));
    }
    Ok((d, a.rows, a.cols + b.cols))
}

pub fn compare_type(a: &MatValue, b: &MatValue) -> Result<(usize, usize)> {
    same_dtype(a, b)?;
    broadcast_shape(a, b)
}

pub fn math_type(f: MathFn, args: &[&MatValue]) -> Result<(usize, usize)> {
    if args.len() != f.arity() {
        return Err(Error::ShapeMismatch(format!(
            "{} takes {} arguments",
            f.name(),
            f.arity()
        )));
    }
    if let Some(a) = args.iter().find(|a| a.dtype != Dtype::F64) {
        return Err(Error::DtypeMismatch(format!("{} of {}", f.name(), a.dtype)));
    }
    match args {
        [a] => Ok(a.shape()),
        [a, b] => broadcast_shape(a, b),
        _ => unreachable!(),
    }
}

pub fn check_square_f64(a: &MatValue) -> Result<usize> {
    if a.rows != a.cols {
        return Err(Error::NonSquare);
    }
    if a.dtype != Dtype::F64 {
        return Err(Error::DtypeMismatch(format!("inverse of {}", a.dtype)));
    }
    Ok(a.rows)
}

// ---------------------------------------------------------------------------
// Matrix operations.

fn bcast(m: &MatValue, k: usize) -> f64 {
    if m.is_scalar() {
        m.data[0]
    } else {
        m.data[k]
    }
}

pub fn elem_binop(op: BinOp, a: &MatValue, b: &MatValue) -> Result<MatValue> {
    let (d, r, c) = binop_type(op, a, b)?;
    let data = (0..r * c)
        .map(|k| scalar_binop(op, d, bcast(a, k), bcast(b, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatValue::raw(d, r, c, data))
}

pub fn neg(a: &MatValue) -> Result<MatValue> {
    let data = a
        .data
        .iter()
        .map(|&x| scalar_neg(a.dtype, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatValue::raw(a.dtype, a.rows, a.cols, data))
}

/// Matrix product; a 1x1 operand scales the other elementwise.
///
/// Each entry accumulates from zero over `k` in order, the same sequence the
/// `mult` helper of the emitted C performs.
pub fn matmul(a: &MatValue, b: &MatValue) -> Result<MatValue> {
    if a.is_scalar() || b.is_scalar() {
        return elem_binop(BinOp::Mul, a, b);
    }
    let (d, m, n) = matmul_type(a, b)?;
    let mut out = MatValue::zeros(d, m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..a.cols {
                let p = scalar_binop(BinOp::Mul, d, a.get(i, k), b.get(k, j))?;
                acc = scalar_binop(BinOp::Add, d, acc, p)?;
            }
            out.data[i + m * j] = acc;
        }
    }
    Ok(out)
}

pub fn transpose(a: &MatValue) -> MatValue {
    let mut data = Vec::with_capacity(a.len());
    for i in 0..a.rows {
        for j in 0..a.cols {
            data.push(a.get(i, j));
        }
    }
    MatValue::raw(a.dtype, a.cols, a.rows, data)
}

pub fn concat_rows(a: &MatValue, b: &MatValue) -> Result<MatValue> {
    let (d, r, c) = concat_rows_type(a, b)?;
    let mut data = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            data.push(if i < a.rows { a.get(i, j) } else { b.get(i - a.rows, j) });
        }
    }
    Ok(MatValue::raw(d, r, c, data))
}

pub fn concat_cols(a: &MatValue, b: &MatValue) -> Result<MatValue> {
    let (d, r, c) = concat_cols_type(a, b)?;
    let mut data = Vec::with_capacity(r * c);
    data.extend_from_slice(if a.rows == 0 && a.is_empty() { &[] } else { &a.data });
    data.extend_from_slice(if b.rows == 0 && b.is_empty() { &[] } else { &b.data });
    Ok(MatValue::raw(d, r, c, data))
}

pub fn convert(a: &MatValue, to: Dtype) -> MatValue {
    let data = a
        .data
        .iter()
        .map(|&x| scalar_convert(a.dtype, to, x))
        .collect();
    MatValue::raw(to, a.rows, a.cols, data)
}

pub fn sum_all(a: &MatValue) -> Result<MatValue> {
    if a.dtype == Dtype::Bool {
        return Err(Error::DtypeMismatch("sum of bool".into()));
    }
    let mut acc = 0.0;
    for &x in &a.data {
        acc = scalar_binop(BinOp::Add, a.dtype, acc, x)?;
    }
    Ok(MatValue::raw(a.dtype, 1, 1, vec![acc]))
}

pub fn compare(op: CmpOp, a: &MatValue, b: &MatValue) -> Result<MatValue> {
    let (r, c) = compare_type(a, b)?;
    let data = (0..r * c)
        .map(|k| scalar_compare(op, bcast(a, k), bcast(b, k)))
        .collect();
    Ok(MatValue::raw(Dtype::Bool, r, c, data))
}

pub fn elem_math(f: MathFn, args: &[&MatValue]) -> Result<MatValue> {
    let (r, c) = math_type(f, args)?;
    let data = (0..r * c)
        .map(|k| {
            let xs: Vec<f64> = args.iter().map(|a| bcast(a, k)).collect();
            scalar_math(f, &xs)
        })
        .collect();
    Ok(MatValue::raw(Dtype::F64, r, c, data))
}

/// Determinant of a 2x2 as `a00*a11 - a01*a10`.
fn det2(a: &MatValue) -> f64 {
    (a.data[0] * a.data[3]) - (a.data[2] * a.data[1])
}

/// Matrix inverse with singularity diagnostics.
///
/// 1x1 and 2x2 use the closed forms the tracer emits; larger matrices use
/// LU with partial pivoting.
pub fn invert(a: &MatValue) -> Result<MatValue> {
    let n = check_square_f64(a)?;
    match n {
        0 => Ok(a.clone()),
        1 => {
            if a.data[0].abs() < 1e-300 {
                return Err(Error::Singular);
            }
            Ok(MatValue::scalar(1.0 / a.data[0]))
        }
        2 => {
            let det = det2(a);
            if det.abs() < 1e-300 {
                return Err(Error::Singular);
            }
            Ok(inverse_2x2(a, det))
        }
        _ => {
            let max = a.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            lu_inverse(a, 1e-12 * max)
        }
    }
}

fn inverse_2x2(a: &MatValue, det: f64) -> MatValue {
    let d = &a.data;
    // Entries in the order the tracer fills them: (1,1) (2,2) (1,2) (2,1).
    let adj = [d[3], -d[1], -d[2], d[0]];
    MatValue::raw(Dtype::F64, 2, 2, adj.iter().map(|x| x / det).collect())
}

/// LU inverse without a tolerance check: the exact arithmetic sequence of
/// the emitted `inverse` helper, which divides by whatever pivot it finds.
pub fn lu_inverse_raw(a: &MatValue) -> Result<MatValue> {
    check_square_f64(a)?;
    lu_inverse(a, -1.0)
}

fn lu_inverse(a: &MatValue, tol: f64) -> Result<MatValue> {
    let n = a.rows;
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if lu[i + n * k].abs() > lu[p + n * k].abs() {
                p = i;
            }
        }
        if lu[p + n * k].abs() <= tol {
            return Err(Error::Singular);
        }
        if p != k {
            for j in 0..n {
                lu.swap(k + n * j, p + n * j);
            }
            perm.swap(k, p);
        }
        for i in k + 1..n {
            lu[i + n * k] /= lu[k + n * k];
            let l = lu[i + n * k];
            for j in k + 1..n {
                lu[i + n * j] -= l * lu[k + n * j];
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut s = if perm[i] == j { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= lu[i + n * k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= lu[i + n * k] * x[k];
            }
            x[i] = s / lu[i + n * i];
        }
        out[n * j..n * j + n].copy_from_slice(&x);
    }
    Ok(MatValue::raw(Dtype::F64, n, n, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> MatValue {
        MatValue::from_rows(Dtype::F64, rows).unwrap()
    }

    #[test]
    fn add_elementwise() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[10.0, 10.0], &[10.0, 10.0]]);
        assert_eq!(
            elem_binop(BinOp::Add, &a, &b).unwrap(),
            m(&[&[11.0, 12.0], &[13.0, 14.0]])
        );
    }

    #[test]
    fn scalar_broadcast() {
        let r = elem_binop(BinOp::Mul, &MatValue::scalar(2.0), &m(&[&[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(r, m(&[&[2.0, 4.0, 6.0]]));
        let r = matmul(&MatValue::scalar(3.0), &m(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(r, m(&[&[3.0, 6.0], &[9.0, 12.0]]));
    }

    #[test]
    fn shape_and_dtype_errors() {
        let a = m(&[&[1.0, 2.0]]);
        let b = m(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(elem_binop(BinOp::Add, &a, &b), Err(Error::ShapeMismatch(_))));
        let i = MatValue::row(Dtype::I32, &[1.0, 2.0]).unwrap();
        assert!(matches!(elem_binop(BinOp::Add, &a, &i), Err(Error::DtypeMismatch(_))));
        assert!(matches!(matmul(&a, &a), Err(Error::ShapeMismatch(_))));
        assert!(matches!(sum_all(&MatValue::bool(true)), Err(Error::DtypeMismatch(_))));
    }

    #[test]
    fn kalman_state_propagation() {
        let dt = 0.1;
        let f = m(&[
            &[1.0, dt, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, dt],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let x = MatValue::col(Dtype::F64, &[-900.0, 80.0, 950.0, 20.0]).unwrap();
        // -900 + 0.1*80 = -892, 950 + 0.1*20 = 952
        assert_eq!(
            matmul(&f, &x).unwrap(),
            MatValue::col(Dtype::F64, &[-892.0, 80.0, 952.0, 20.0]).unwrap()
        );
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&MatValue::eye(2), &a).unwrap(), a);
    }

    #[test]
    fn transpose_and_concat() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(transpose(&a), m(&[&[1.0, 3.0], &[2.0, 4.0]]));
        assert_eq!(transpose(&transpose(&a)), a);
        let h = MatValue::zeros(Dtype::F64, 2, 4);
        assert_eq!(transpose(&h).shape(), (4, 2));
        let v = concat_rows(&MatValue::scalar(1.0), &MatValue::scalar(2.0)).unwrap();
        assert_eq!(v, MatValue::col(Dtype::F64, &[1.0, 2.0]).unwrap());
        let e = MatValue::zeros(Dtype::F64, 0, 1);
        assert_eq!(concat_rows(&e, &v).unwrap(), v);
        assert_eq!(concat_rows(&MatValue::empty(), &v).unwrap(), v);
        assert_eq!(
            concat_cols(&MatValue::scalar(1.0), &MatValue::scalar(2.0)).unwrap(),
            m(&[&[1.0, 2.0]])
        );
    }

    #[test]
    fn conversions() {
        let x = MatValue::row(Dtype::F64, &[1.9, -1.9]).unwrap();
        assert_eq!(convert(&x, Dtype::I32).data(), &[1.0, -1.0]);
        assert_eq!(convert(&x, Dtype::F64), x);
        let b = convert(&MatValue::row(Dtype::F64, &[0.0, 3.0]).unwrap(), Dtype::Bool);
        assert_eq!(b.data(), &[0.0, 1.0]);
        assert_eq!(b.dtype(), Dtype::Bool);
        assert_eq!(convert(&MatValue::scalar(257.0), Dtype::I8).data(), &[1.0]);
        assert_eq!(convert(&MatValue::scalar(-1.0), Dtype::U8).data(), &[255.0]);
        assert_eq!(convert(&MatValue::scalar(200.0), Dtype::I8).data(), &[-56.0]);
    }

    #[test]
    fn integer_ops_wrap() {
        let a = MatValue::scalar_of(Dtype::I8, 127.0).unwrap();
        let b = MatValue::scalar_of(Dtype::I8, 1.0).unwrap();
        assert_eq!(elem_binop(BinOp::Add, &a, &b).unwrap().data(), &[-128.0]);
        let u = MatValue::scalar_of(Dtype::U32, 4294967295.0).unwrap();
        assert_eq!(elem_binop(BinOp::Mul, &u, &u).unwrap().data(), &[1.0]);
        let z = MatValue::scalar_of(Dtype::I32, 0.0).unwrap();
        assert_eq!(elem_binop(BinOp::Div, &b.clone(), &b), elem_binop(BinOp::Div, &b, &b));
        let one = MatValue::scalar_of(Dtype::I32, 1.0).unwrap();
        assert_eq!(elem_binop(BinOp::Div, &one, &z), Err(Error::DivisionByZero));
        let seven = MatValue::scalar_of(Dtype::I32, -7.0).unwrap();
        let two = MatValue::scalar_of(Dtype::I32, 2.0).unwrap();
        assert_eq!(elem_binop(BinOp::Div, &seven, &two).unwrap().data(), &[-3.0]);
    }

    #[test]
    fn sums_and_comparisons() {
        assert_eq!(sum_all(&m(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap().data(), &[10.0]);
        assert_eq!(sum_all(&MatValue::empty()).unwrap().data(), &[0.0]);
        assert_eq!(sum_all(&MatValue::scalar(7.0)).unwrap().data(), &[7.0]);
        let r = compare(CmpOp::Gt, &m(&[&[1.0, 5.0]]), &MatValue::scalar(2.0)).unwrap();
        assert_eq!(r.data(), &[0.0, 1.0]);
        let r = compare(CmpOp::Ne, &MatValue::scalar(3.0), &MatValue::scalar(3.0)).unwrap();
        assert!(!r.is_true());
    }

    #[test]
    fn inverses() {
        assert_eq!(invert(&MatValue::eye(3)).unwrap(), MatValue::eye(3));
        let a = m(&[&[4.0, 7.0], &[2.0, 6.0]]);
        let inv = invert(&a).unwrap();
        let p = matmul(&inv, &a).unwrap();
        for (x, y) in p.data().iter().zip(MatValue::eye(2).data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(invert(&m(&[&[1.0, 2.0]])), Err(Error::NonSquare));
        assert_eq!(invert(&m(&[&[1.0, 2.0], &[2.0, 4.0]])), Err(Error::Singular));
        assert_eq!(
            invert(&m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[1.0, 0.0, 1.0]])),
            Err(Error::Singular)
        );
    }

    #[test]
    fn math_functions() {
        assert_eq!(elem_math(MathFn::Sqrt, &[&MatValue::scalar(4.0)]).unwrap().data(), &[2.0]);
        assert_eq!(elem_math(MathFn::Cos, &[&MatValue::scalar(0.0)]).unwrap().data(), &[1.0]);
        let b = elem_math(
            MathFn::Atan2,
            &[&MatValue::scalar(950.0), &MatValue::scalar(-900.0)],
        )
        .unwrap();
        assert_eq!(b.data(), &[950f64.atan2(-900.0)]);
        let i = MatValue::scalar_of(Dtype::I32, 4.0).unwrap();
        assert!(elem_math(MathFn::Sqrt, &[&i]).is_err());
    }

    #[test]
    fn construction_checks() {
        assert!(MatValue::new(Dtype::F64, 2, 2, vec![1.0]).is_err());
        assert!(MatValue::scalar_of(Dtype::U8, 256.0).is_err());
        assert!(MatValue::scalar_of(Dtype::I32, 1.5).is_err());
        let x1 = m(&[&[5.0, 0.0], &[7.0, 8.0]]);
        assert_eq!(x1.data(), &[5.0, 7.0, 0.0, 8.0]);
        assert_eq!(x1.to_rows(), vec![vec![5.0, 0.0], vec![7.0, 8.0]]);
    }
}
