//! Dense third-order tensors, row-major matrices, observation sets and the
//! multilinear products used by the CP and Tucker models.
//!
//! Everything is 0-based and row-major: entry `(i, j, k)` of a tensor with
//! dims `[n1, n2, n3]` lives at `(i * n2 + j) * n3 + k`.

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn ones(dims: [usize; 3]) -> Self {
        Self::filled(dims, 1.0)
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("tensor dims must be positive, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor of dims {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("tensor values must be finite".into()));
        }
        Ok(Self { dims, data })
    }

    /// Builds a tensor by evaluating `f(i, j, k)` at every position.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    /// `d x d x d` tensor with ones on the superdiagonal, the core that turns
    /// a Tucker model into a CP model.
    pub fn superdiagonal(d: usize) -> Self {
        Self::from_fn([d, d, d], |p, q, t| if p == q && q == t { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn in_bounds(&self, i: usize, j: usize, k: usize) -> bool {
        i < self.dims[0] && j < self.dims[1] && k < self.dims[2]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dims must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Row-major construction from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The set of observed positions of a tensor.
///
/// Triples keep their insertion order; SGD passes permute a copy of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSet {
    dims: [usize; 3],
    triples: Vec<[usize; 3]>,
}

impl ObservationSet {
    /// Validates bounds and uniqueness.
    pub fn new(dims: [usize; 3], triples: Vec<[usize; 3]>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(triples.len());
        for &[i, j, k] in &triples {
            if i >= dims[0] || j >= dims[1] || k >= dims[2] {
                return Err(Error::Index { i, j, k, dims });
            }
            if !seen.insert([i, j, k]) {
                return Err(Error::Data(format!(
                    "duplicate observation ({i}, {j}, {k})"
                )));
            }
        }
        Ok(Self { dims, triples })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            triples: Vec::new(),
        }
    }

    /// Every position of a tensor with the given dims, in row-major order.
    pub fn full(dims: [usize; 3]) -> Self {
        let mut triples = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    triples.push([i, j, k]);
                }
            }
        }
        Self { dims, triples }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[[usize; 3]] {
        &self.triples
    }

    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.triples.iter().copied()
    }

    fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Shape(format!(
                "observation set built for {:?}, tensor has {dims:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// Observed entries of a tensor stored as positions plus values, never
/// densified. This is how training data reaches the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTensor {
    omega: ObservationSet,
    values: Vec<f64>,
}

impl ObservedTensor {
    pub fn new(omega: ObservationSet, values: Vec<f64>) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} observations but {} values",
                omega.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("observed values must be finite".into()));
        }
        Ok(Self { omega, values })
    }

    /// Reads the entries of `x` at the positions in `omega`.
    pub fn gather(x: &Tensor3, omega: &ObservationSet) -> Result<Self> {
        omega.check_dims(x.dims())?;
        let values = omega.iter().map(|[i, j, k]| x.get(i, j, k)).collect();
        Ok(Self {
            omega: omega.clone(),
            values,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.omega.dims
    }

    pub fn omega(&self) -> &ObservationSet {
        &self.omega
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = ([usize; 3], f64)> + '_ {
        self.omega.iter().zip(self.values.iter().copied())
    }

    /// Same positions, values replaced by `f(position, value)`.
    pub fn map_values(&self, mut f: impl FnMut([usize; 3], f64) -> f64) -> Result<Self> {
        let values = self.entries().map(|(t, v)| f(t, v)).collect();
        Self::new(self.omega.clone(), values)
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Writes the observed values into a dense tensor, zero elsewhere.
    pub fn to_dense(&self) -> Tensor3 {
        let mut out = Tensor3::zeros(self.dims());
        for ([i, j, k], v) in self.entries() {
            out.set(i, j, k, v);
        }
        out
    }
}

pub fn hadamard(x: &Tensor3, y: &Tensor3) -> Result<Tensor3> {
    if x.dims != y.dims {
        return Err(Error::Shape(format!(
            "hadamard product of {:?} and {:?}",
            x.dims, y.dims
        )));
    }
    Ok(Tensor3 {
        dims: x.dims,
        data: x.data.iter().zip(&y.data).map(|(a, b)| a * b).collect(),
    })
}

/// Columnwise Kronecker product; output is `(a.rows * b.rows) x cols`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.cols, b.cols
        )));
    }
    let cols = a.cols;
    let mut out = Matrix::zeros(a.rows * b.rows, cols);
    for i in 0..a.rows {
        for j in 0..b.rows {
            let dst = out.row_mut(i * b.rows + j);
            for ((o, &x), &y) in dst.iter_mut().zip(a.row(i)).zip(b.row(j)) {
                *o = x * y;
            }
        }
    }
    Ok(out)
}

/// Mode-`mode` product `x ×_mode u` with `mode` in `0..3`: contracts
/// dimension `mode` of `x` against the columns of `u`, which replaces that
/// dimension by `u.rows()`.
pub fn mode_n_product(x: &Tensor3, u: &Matrix, mode: usize) -> Result<Tensor3> {
    if mode > 2 {
        return Err(Error::Shape(format!("mode must be 0, 1 or 2, got {mode}")));
    }
    if u.cols != x.dims[mode] {
        return Err(Error::Shape(format!(
            "mode-{mode} product needs {} matrix columns, got {}",
            x.dims[mode], u.cols
        )));
    }
    let mut dims = x.dims;
    dims[mode] = u.rows;
    let mut out = Tensor3::zeros(dims);
    let [n1, n2, n3] = x.dims;
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let v = x.get(i, j, k);
                if v == 0.0 {
                    continue;
                }
                for r in 0..u.rows {
                    let (oi, oj, ok, col) = match mode {
                        0 => (r, j, k, i),
                        1 => (i, r, k, j),
                        _ => (i, j, r, k),
                    };
                    let o = out.offset(oi, oj, ok);
                    out.data[o] += v * u.get(r, col);
                }
            }
        }
    }
    Ok(out)
}

/// `[[A, B, C]]`: the sum over `r` of outer products of column `r` of each factor.
pub fn cp_reconstruct(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    if a.cols != b.cols || b.cols != c.cols {
        return Err(Error::Shape(format!(
            "cp factors need equal rank, got {}, {}, {}",
            a.cols, b.cols, c.cols
        )));
    }
    let dims = [a.rows, b.rows, c.rows];
    let mut out = Tensor3::zeros(dims);
    let mut ab = vec![0.0; a.cols];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for (w, (&x, &y)) in ab.iter_mut().zip(a.row(i).iter().zip(b.row(j))) {
                *w = x * y;
            }
            for k in 0..dims[2] {
                let v: f64 = ab.iter().zip(c.row(k)).map(|(w, z)| w * z).sum();
                out.set(i, j, k, v);
            }
        }
    }
    Ok(out)
}

/// `[[G; A, B, C]]` contracted mode 3 first, then 2, then 1.
pub fn tucker_reconstruct(g: &Tensor3, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    let [p_dim, q_dim, t_dim] = g.dims;
    if [a.cols, b.cols, c.cols] != g.dims {
        return Err(Error::Shape(format!(
            "core {:?} does not match factor ranks ({}, {}, {})",
            g.dims, a.cols, b.cols, c.cols
        )));
    }
    let (n1, n2, n3) = (a.rows, b.rows, c.rows);
    // gc[p, q, k] = sum_t g[p, q, t] c[k, t]
    let mut gc = vec![0.0; p_dim * q_dim * n3];
    for p in 0..p_dim {
        for q in 0..q_dim {
            let core = &g.data[(p * q_dim + q) * t_dim..(p * q_dim + q + 1) * t_dim];
            for k in 0..n3 {
                gc[(p * q_dim + q) * n3 + k] = core.iter().zip(c.row(k)).map(|(x, y)| x * y).sum();
            }
        }
    }
    // gbc[p, j, k] = sum_q b[j, q] gc[p, q, k]
    let mut gbc = vec![0.0; p_dim * n2 * n3];
    for p in 0..p_dim {
        for j in 0..n2 {
            let brow = b.row(j);
            for k in 0..n3 {
                let mut s = 0.0;
                for (q, &bq) in brow.iter().enumerate() {
                    s += bq * gc[(p * q_dim + q) * n3 + k];
                }
                gbc[(p * n2 + j) * n3 + k] = s;
            }
        }
    }
    let mut out = Tensor3::zeros([n1, n2, n3]);
    for i in 0..n1 {
        let arow = a.row(i);
        for j in 0..n2 {
            for k in 0..n3 {
                let mut s = 0.0;
                for (p, &ap) in arow.iter().enumerate() {
                    s += ap * gbc[(p * n2 + j) * n3 + k];
                }
                out.set(i, j, k, s);
            }
        }
    }
    Ok(out)
}

/// Sampling operator: keeps entries at positions in `omega`, zeroes the rest.
pub fn project(x: &Tensor3, omega: &ObservationSet) -> Result<Tensor3> {
    omega.check_dims(x.dims)?;
    let mut out = Tensor3::zeros(x.dims);
    for [i, j, k] in omega.iter() {
        let o = x.offset(i, j, k);
        out.data[o] = x.data[o];
    }
    Ok(out)
}
