//! Dense row-major matrices over `f64`.
//!
//! Only what the networks need: construction, elementwise combinators, and
//! the three matrix-product layouts used by forward and backward passes. All
//! arithmetic is 64-bit; kernel outputs are expected to stay finite and the
//! optimizers check this before committing updates.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                op: "Tensor2::from_vec",
                detail: format!("{} values for {rows}x{cols}", data.len()),
            });
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// 1×n row vector.
    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor2 {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline(always)]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline(always)]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline(always)]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Tensor2) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Result<Tensor2> {
        if !self.same_shape(other) {
            return Err(CoreError::ShapeMismatch {
                op: "Tensor2::zip_map",
                detail: format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += scale * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &Tensor2, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(CoreError::ShapeMismatch {
                op: "Tensor2::add_scaled",
                detail: format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale_inplace(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Classic product: `self (m×k) · other (k×n) → m×n`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "Tensor2::matmul",
                detail: format!(
                    "{}x{} · {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2::zeros(m, n);
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (p, &a) in a_row.iter().enumerate().take(k) {
                let b_row = other.row(p);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self (m×k) · otherᵀ (n×k) → m×n`; both operands read row-contiguous.
    pub fn matmul_bt(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                op: "Tensor2::matmul_bt",
                detail: format!(
                    "{}x{} · ({}x{})ᵀ",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let (m, n) = (self.rows, other.rows);
        let mut out = Tensor2::zeros(m, n);
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (j, o) in out_row.iter_mut().enumerate().take(n) {
                *o = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ (k×m) · other (k×n) → m×n`.
    pub fn matmul_at(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "Tensor2::matmul_at",
                detail: format!(
                    "({}x{})ᵀ · {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2::zeros(m, n);
        for p in 0..k {
            let a_row = self.row(p);
            let b_row = other.row(p);
            for (i, &a) in a_row.iter().enumerate().take(m) {
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Contiguous dot product; the hot inner kernel of every forward pass.
#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators so the loop pipelines FMAs.
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for p in 0..a.cols() {
                    acc += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn random_tensor(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor2 {
        let mut t = Tensor2::zeros(rows, cols);
        for v in t.as_mut_slice() {
            *v = rng.next_uniform(-1.0, 1.0);
        }
        t
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = RngStream::new(11, 0);
        for trial in 0..20 {
            let a = random_tensor(&mut rng, 8, 8);
            let b = random_tensor(&mut rng, 8, 8);
            let fast = a.matmul(&b).unwrap();
            let slow = naive_matmul(&a, &b);
            for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
                let rel = (x - y).abs() / y.abs().max(1e-300);
                assert!(rel < 1e-12, "trial {trial}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let mut rng = RngStream::new(13, 0);
        let a = random_tensor(&mut rng, 5, 7);
        let b = random_tensor(&mut rng, 6, 7);
        // a · bᵀ
        let mut bt = Tensor2::zeros(7, 6);
        for i in 0..6 {
            for j in 0..7 {
                bt.set(j, i, b.get(i, j));
            }
        }
        let direct = a.matmul_bt(&b).unwrap();
        let via_t = a.matmul(&bt).unwrap();
        for (x, y) in direct.as_slice().iter().zip(via_t.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        // aᵀ · c
        let c = random_tensor(&mut rng, 5, 3);
        let mut at = Tensor2::zeros(7, 5);
        for i in 0..5 {
            for j in 0..7 {
                at.set(j, i, a.get(i, j));
            }
        }
        let direct = a.matmul_at(&c).unwrap();
        let via_t = at.matmul(&c).unwrap();
        for (x, y) in direct.as_slice().iter().zip(via_t.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
        assert!(Tensor2::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
