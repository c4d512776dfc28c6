//! Prime-field arithmetic and dense linear algebra over `F_q`.
//!
//! Entries are stored as canonical residues in `[0, q)`. Products go through
//! `u128`, so any prime below `2^63` is usable.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GfError {
    #[error("modulus {0} is not a prime")]
    NotPrime(u64),
    #[error("modulus {0} is too large (must be below 2^63)")]
    ModulusTooLarge(u64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("vandermonde point {0} is repeated modulo {1}")]
    RepeatedPoint(u64, u64),
    #[error("field of size {q} cannot hold {needed} distinct points")]
    FieldTooSmall { q: u64, needed: usize },
}

/// Deterministic Miller-Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// The field `F_q`; carries the modulus for scalar operations on raw residues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field {
    q: u64,
}

impl Field {
    pub fn new(q: u64) -> Result<Self, GfError> {
        if q >= 1 << 63 {
            return Err(GfError::ModulusTooLarge(q));
        }
        if !is_prime(q) {
            return Err(GfError::NotPrime(q));
        }
        Ok(Field { q })
    }

    pub fn modulus(self) -> u64 {
        self.q
    }

    pub fn elem(self, value: u64) -> FieldElem {
        FieldElem {
            value: value % self.q,
            q: self.q,
        }
    }

    /// Maps a signed integer to its residue.
    pub fn from_i64(self, value: i64) -> u64 {
        value.rem_euclid(self.q as i64) as u64
    }

    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    pub fn mul(self, a: u64, b: u64) -> u64 {
        mul_mod(a, b, self.q)
    }

    pub fn pow(self, a: u64, e: u64) -> u64 {
        pow_mod(a, e, self.q)
    }

    /// Multiplicative inverse; `a` must be nonzero.
    pub fn inv(self, a: u64) -> u64 {
        assert!(!a.is_multiple_of(self.q), "inverse of zero");
        pow_mod(a, self.q - 2, self.q)
    }
}

/// A single element of `F_q` together with its modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElem {
    value: u64,
    q: u64,
}

impl FieldElem {
    pub fn value(self) -> u64 {
        self.value
    }

    pub fn modulus(self) -> u64 {
        self.q
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn inv(self) -> Option<FieldElem> {
        (self.value != 0).then(|| FieldElem {
            value: pow_mod(self.value, self.q - 2, self.q),
            q: self.q,
        })
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElem {
    type Output = FieldElem;
    fn add(self, rhs: FieldElem) -> FieldElem {
        assert_eq!(self.q, rhs.q, "mixed moduli");
        FieldElem {
            value: Field { q: self.q }.add(self.value, rhs.value),
            q: self.q,
        }
    }
}

impl Sub for FieldElem {
    type Output = FieldElem;
    fn sub(self, rhs: FieldElem) -> FieldElem {
        assert_eq!(self.q, rhs.q, "mixed moduli");
        FieldElem {
            value: Field { q: self.q }.sub(self.value, rhs.value),
            q: self.q,
        }
    }
}

impl Mul for FieldElem {
    type Output = FieldElem;
    fn mul(self, rhs: FieldElem) -> FieldElem {
        assert_eq!(self.q, rhs.q, "mixed moduli");
        FieldElem {
            value: mul_mod(self.value, rhs.value, self.q),
            q: self.q,
        }
    }
}

impl Neg for FieldElem {
    type Output = FieldElem;
    fn neg(self) -> FieldElem {
        FieldElem {
            value: Field { q: self.q }.neg(self.value),
            q: self.q,
        }
    }
}

/// Dense row-major matrix over `F_q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    field: Field,
    data: Vec<u64>,
}

impl Matrix {
    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            field,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        let mut m = Matrix::zeros(field, n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds a matrix from unsigned rows, reducing entries mod q.
    pub fn from_rows(field: Field, cols: usize, rows: &[Vec<u64>]) -> Result<Self, GfError> {
        let mut m = Matrix::zeros(field, rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(GfError::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                m.set(i, j, x % field.q);
            }
        }
        Ok(m)
    }

    /// Builds a matrix from signed rows, mapping negatives to their residues.
    pub fn from_signed_rows(field: Field, cols: usize, rows: &[Vec<i64>]) -> Result<Self, GfError> {
        let unsigned: Vec<Vec<u64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| field.from_i64(x)).collect())
            .collect();
        Matrix::from_rows(field, cols, &unsigned)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn elem(&self, i: usize, j: usize) -> FieldElem {
        self.field.elem(self.get(i, j))
    }

    pub fn set(&mut self, i: usize, j: usize, value: u64) {
        debug_assert!(value < self.field.q);
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vecs(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.field, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Stacks matrices vertically; all must share the column count.
    pub fn vstack(field: Field, cols: usize, parts: &[&Matrix]) -> Result<Matrix, GfError> {
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols || p.field != field {
                return Err(GfError::Dimension(format!(
                    "cannot stack a {}x{} block into {cols} columns",
                    p.rows, p.cols
                )));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix {
            rows,
            cols,
            field,
            data,
        })
    }

    /// Appends the rows of `other` below `self`.
    pub fn push_rows(&mut self, other: &Matrix) {
        assert_eq!(self.cols, other.cols, "column mismatch");
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
    }

    pub fn push_row(&mut self, row: &[u64]) {
        assert_eq!(self.cols, row.len(), "column mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Places `block` at the given column offset of a `block.rows x cols` zero matrix.
    pub fn embed_columns(&self, cols: usize, offset: usize) -> Matrix {
        assert!(offset + self.cols <= cols, "embedding out of range");
        let mut m = Matrix::zeros(self.field, self.rows, cols);
        for i in 0..self.rows {
            m.data[i * cols + offset..i * cols + offset + self.cols].copy_from_slice(self.row(i));
        }
        m
    }

    pub fn mul(&self, rhs: &Matrix) -> Result<Matrix, GfError> {
        if self.cols != rhs.rows {
            return Err(GfError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let f = self.field;
        let mut out = Matrix::zeros(f, self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    let cur = out.get(i, j);
                    out.set(i, j, f.add(cur, f.mul(a, rhs.get(k, j))));
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[u64]) -> Vec<u64> {
        assert_eq!(self.cols, x.len(), "vector length mismatch");
        let f = self.field;
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)))
            })
            .collect()
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix, GfError> {
        self.zip_with(rhs, |f, a, b| f.add(a, b))
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix, GfError> {
        self.zip_with(rhs, |f, a, b| f.sub(a, b))
    }

    pub fn neg(&self) -> Matrix {
        let f = self.field;
        Matrix {
            data: self.data.iter().map(|&a| f.neg(a)).collect(),
            ..self.clone()
        }
    }

    fn zip_with(
        &self,
        rhs: &Matrix,
        op: impl Fn(Field, u64, u64) -> u64,
    ) -> Result<Matrix, GfError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(GfError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let f = self.field;
        Ok(Matrix {
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| op(f, a, b))
                .collect(),
            ..self.clone()
        })
    }

    /// Reduced row echelon form and the pivot columns.
    pub fn rref(&self) -> (Matrix, Vec<usize>) {
        let f = self.field;
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| m.get(i, c) != 0) else {
                continue;
            };
            m.swap_rows(r, p);
            let inv = f.inv(m.get(r, c));
            for j in c..m.cols {
                let v = f.mul(m.get(r, j), inv);
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                let factor = m.get(i, c);
                if i != r && factor != 0 {
                    for j in c..m.cols {
                        let v = f.sub(m.get(i, j), f.mul(factor, m.get(r, j)));
                        m.set(i, j, v);
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    /// Rank by forward elimination.
    pub fn rank(&self) -> usize {
        let f = self.field;
        let mut m = self.clone();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| m.get(i, c) != 0) else {
                continue;
            };
            m.swap_rows(r, p);
            let inv = f.inv(m.get(r, c));
            for i in r + 1..m.rows {
                let factor = f.mul(m.get(i, c), inv);
                if factor != 0 {
                    for j in c..m.cols {
                        let v = f.sub(m.get(i, j), f.mul(factor, m.get(r, j)));
                        m.set(i, j, v);
                    }
                }
            }
            r += 1;
        }
        r
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    /// Basis of the right nullspace, one basis vector per column.
    pub fn nullspace(&self) -> Matrix {
        let f = self.field;
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Matrix::zeros(f, self.cols, free.len());
        for (k, &fc) in free.iter().enumerate() {
            basis.set(fc, k, 1);
            for (i, &pc) in pivots.iter().enumerate() {
                basis.set(pc, k, f.neg(r.get(i, fc)));
            }
        }
        basis
    }
}

/// `rows x points.len()` Vandermonde block with entry `(i, j) = points[j]^i`.
///
/// Any `k <= rows` columns are linearly independent, and so are any `k` rows
/// of its transpose.
pub fn vandermonde(field: Field, points: &[u64], rows: usize) -> Result<Matrix, GfError> {
    if points.len() as u64 > field.q {
        return Err(GfError::FieldTooSmall {
            q: field.q,
            needed: points.len(),
        });
    }
    let reduced: Vec<u64> = points.iter().map(|p| p % field.q).collect();
    for (i, p) in reduced.iter().enumerate() {
        if reduced[..i].contains(p) {
            return Err(GfError::RepeatedPoint(*p, field.q));
        }
    }
    let mut m = Matrix::zeros(field, rows, points.len());
    for (j, &p) in reduced.iter().enumerate() {
        let mut x = 1 % field.q;
        for i in 0..rows {
            m.set(i, j, x);
            x = field.mul(x, p);
        }
    }
    Ok(m)
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}
