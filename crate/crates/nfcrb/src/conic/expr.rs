//! Affine expressions over the real scalar parameters of a conic program.
//!
//! Parameters are always real; coefficients and constants are complex, so a
//! single expression can describe one entry of a complex matrix constraint.

use crate::{C64, CMat};

/// `constant + Σ coef_i · x_i` with real parameters `x_i`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub constant: C64,
    pub terms: Vec<(usize, C64)>,
}

impl LinExpr {
    pub fn constant(c: C64) -> Self {
        LinExpr { constant: c, terms: Vec::new() }
    }

    pub fn real_constant(c: f64) -> Self {
        Self::constant(C64::new(c, 0.0))
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(idx: usize, coef: C64) -> Self {
        LinExpr { constant: C64::new(0.0, 0.0), terms: vec![(idx, coef)] }
    }

    pub fn add_term(&mut self, idx: usize, coef: C64) {
        if coef != C64::new(0.0, 0.0) {
            self.terms.push((idx, coef));
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        LinExpr {
            constant: self.constant * c,
            terms: self.terms.iter().map(|&(i, v)| (i, v * c)).collect(),
        }
    }

    pub fn add(&self, other: &LinExpr) -> Self {
        let mut out = self.clone();
        out.constant += other.constant;
        out.terms.extend_from_slice(&other.terms);
        out
    }

    pub fn sub(&self, other: &LinExpr) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn add_constant(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    /// Complex conjugate (valid because the parameters are real).
    pub fn conj(&self) -> Self {
        LinExpr {
            constant: self.constant.conj(),
            terms: self.terms.iter().map(|&(i, v)| (i, v.conj())).collect(),
        }
    }

    /// Real part as an expression with real coefficients.
    pub fn re(&self) -> Self {
        LinExpr {
            constant: C64::new(self.constant.re, 0.0),
            terms: self.terms.iter().map(|&(i, v)| (i, C64::new(v.re, 0.0))).collect(),
        }
    }

    /// Imaginary part as an expression with real coefficients.
    pub fn im(&self) -> Self {
        LinExpr {
            constant: C64::new(self.constant.im, 0.0),
            terms: self.terms.iter().map(|&(i, v)| (i, C64::new(v.im, 0.0))).collect(),
        }
    }

    /// Merges duplicate parameter indices.
    pub fn compress(&mut self) {
        if self.terms.len() < 2 {
            return;
        }
        self.terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, C64)> = Vec::with_capacity(self.terms.len());
        for &(i, v) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|&(_, v)| v.norm_sqr() > 0.0);
        self.terms = out;
    }

    /// Evaluates at a full parameter vector.
    pub fn eval(&self, x: &[f64]) -> C64 {
        let mut acc = self.constant;
        for &(i, c) in &self.terms {
            acc += c * x[i];
        }
        acc
    }

    /// Largest imaginary magnitude over constant and coefficients.
    pub fn imag_magnitude(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, c)| c.im.abs())
            .fold(self.constant.im.abs(), f64::max)
    }

    pub fn max_param_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

/// Dense matrix of affine expressions, column-major.
#[derive(Debug, Clone)]
pub struct MatExpr {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<LinExpr>,
}

impl MatExpr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        MatExpr { nrows, ncols, entries: vec![LinExpr::zero(); nrows * ncols] }
    }

    pub fn from_const(m: &CMat) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out.set(i, j, LinExpr::constant(m[(i, j)]));
            }
        }
        out
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i + j * self.nrows]
    }

    pub fn set(&mut self, i: usize, j: usize, e: LinExpr) {
        self.entries[i + j * self.nrows] = e;
    }

    pub fn add(&self, other: &MatExpr) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = Self::zeros(self.nrows, self.ncols);
        for k in 0..self.entries.len() {
            out.entries[k] = self.entries[k].add(&other.entries[k]);
        }
        out
    }

    pub fn sub(&self, other: &MatExpr) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = Self::zeros(self.nrows, self.ncols);
        for k in 0..self.entries.len() {
            out.entries[k] = self.entries[k].sub(&other.entries[k]);
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            *e = e.scale(c);
        }
        out
    }

    pub fn add_const(&self, m: &CMat) -> Self {
        assert_eq!((self.nrows, self.ncols), m.shape());
        let mut out = self.clone();
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                let e = out.entry(i, j).add_constant(m[(i, j)]);
                out.set(i, j, e);
            }
        }
        out
    }

    /// `A · self` for a constant left factor.
    pub fn left_mul(&self, a: &CMat) -> Self {
        assert_eq!(a.ncols(), self.nrows);
        let mut out = Self::zeros(a.nrows(), self.ncols);
        for j in 0..self.ncols {
            for p in 0..a.nrows() {
                let mut acc = LinExpr::zero();
                for i in 0..self.nrows {
                    let c = a[(p, i)];
                    if c != C64::new(0.0, 0.0) {
                        acc = acc.add(&self.entry(i, j).scale(c));
                    }
                }
                acc.compress();
                out.set(p, j, acc);
            }
        }
        out
    }

    /// `self · B` for a constant right factor.
    pub fn right_mul(&self, b: &CMat) -> Self {
        assert_eq!(self.ncols, b.nrows());
        let mut out = Self::zeros(self.nrows, b.ncols());
        for q in 0..b.ncols() {
            for i in 0..self.nrows {
                let mut acc = LinExpr::zero();
                for j in 0..self.ncols {
                    let c = b[(j, q)];
                    if c != C64::new(0.0, 0.0) {
                        acc = acc.add(&self.entry(i, j).scale(c));
                    }
                }
                acc.compress();
                out.set(i, q, acc);
            }
        }
        out
    }

    /// Entrywise product with a constant matrix.
    pub fn hadamard(&self, m: &CMat) -> Self {
        assert_eq!((self.nrows, self.ncols), m.shape());
        let mut out = self.clone();
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                let e = out.entry(i, j).scale(m[(i, j)]);
                out.set(i, j, e);
            }
        }
        out
    }

    /// Trace of a square expression matrix.
    pub fn trace(&self) -> LinExpr {
        assert_eq!(self.nrows, self.ncols);
        let mut acc = LinExpr::zero();
        for i in 0..self.nrows {
            acc = acc.add(self.entry(i, i));
        }
        acc.compress();
        acc
    }

    /// All entries in column-major order.
    pub fn vec_entries(&self) -> Vec<LinExpr> {
        self.entries.clone()
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.nrows, self.ncols, |i, j| self.entry(i, j).eval(x))
    }
}
