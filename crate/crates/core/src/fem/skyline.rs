//! Symmetric profile (skyline) matrix with an in-place LDLᵀ factorization.
//!
//! No pivoting is done; the factorization reports the pivots so that callers
//! can read off the inertia and extract directions of negative curvature.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Skyline {
    n: usize,
    /// First stored row of each column.
    first: Vec<usize>,
    /// Offset of each column's first stored entry; `ptr[n]` is the total.
    ptr: Vec<usize>,
    vals: Vec<f64>,
}

impl Skyline {
    /// Builds an empty matrix whose column `j` stores rows `first[j]..=j`.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for (j, &f) in first.iter().enumerate() {
            assert!(f <= j, "profile row {f} below diagonal in column {j}");
            ptr.push(ptr[j] + j - f + 1);
        }
        let total = ptr[n];
        Self { n, first, ptr, vals: vec![0.0; total] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && i >= self.first[j]);
        self.ptr[j] + i - self.first[j]
    }

    /// Adds `v` to entry `(i, j)`; only the upper triangle is addressed, so
    /// callers add each off-diagonal pair once.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if i < self.first[j] {
            0.0
        } else {
            self.vals[self.idx(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.vals[self.idx(j, j)]).collect()
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        for j in 0..self.n {
            let k = self.idx(j, j);
            self.vals[k] += shift;
        }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let base = self.ptr[j];
            for (off, i) in (self.first[j]..=j).enumerate() {
                let a = self.vals[base + off];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
    }

    /// LDLᵀ factorization. Fails only on an exactly zero or non-finite pivot.
    pub fn factor(&self) -> Result<Ldlt> {
        self.factor_pinned(None)
    }

    /// LDLᵀ factorization in which pivots with `|d| <= pin` are replaced by
    /// infinity, which removes the corresponding direction from solves.
    pub fn factor_pinned(&self, pin: Option<f64>) -> Result<Ldlt> {
        let mut m = self.clone();
        let mut d = vec![0.0; self.n];
        for j in 0..self.n {
            let fj = m.first[j];
            let base_j = m.ptr[j];
            // g_ij = a_ij − Σ_k l_ki g_kj, overwriting column j
            for i in fj..j {
                let fi = m.first[i];
                let k0 = fi.max(fj);
                let base_i = m.ptr[i];
                let mut s = 0.0;
                for k in k0..i {
                    s += m.vals[base_i + k - fi] * m.vals[base_j + k - fj];
                }
                m.vals[base_j + i - fj] -= s;
            }
            let mut djj = m.vals[base_j + j - fj];
            for i in fj..j {
                let g = m.vals[base_j + i - fj];
                let l = g / d[i];
                djj -= l * g;
                m.vals[base_j + i - fj] = l;
            }
            if pin.is_some_and(|p| djj.abs() <= p) {
                djj = f64::INFINITY;
            } else if djj == 0.0 || !djj.is_finite() {
                return Err(Error::Numerical(format!("zero or non-finite pivot {djj} at row {j}")));
            }
            d[j] = djj;
            m.vals[base_j + j - fj] = 1.0;
        }
        Ok(Ldlt { l: m, d })
    }
}

/// Factors `L` (unit diagonal, stored by columns of `Lᵀ`) and `D`.
#[derive(Clone, Debug)]
pub struct Ldlt {
    l: Skyline,
    pub d: Vec<f64>,
}

impl Ldlt {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let mut x = b.to_vec();
        for j in 0..l.n {
            let (fj, base) = (l.first[j], l.ptr[j]);
            let mut s = 0.0;
            for i in fj..j {
                s += l.vals[base + i - fj] * x[i];
            }
            x[j] -= s;
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..l.n).rev() {
            let (fj, base) = (l.first[j], l.ptr[j]);
            let xj = x[j];
            for i in fj..j {
                x[i] -= l.vals[base + i - fj] * xj;
            }
        }
        x
    }

    /// Number of pivots replaced by [`Skyline::factor_pinned`].
    pub fn pinned(&self) -> usize {
        self.d.iter().filter(|d| d.is_infinite()).count()
    }

    /// Number of pivots below `-tol`.
    pub fn negative_pivots(&self, tol: f64) -> usize {
        self.d.iter().filter(|&&d| d < -tol).count()
    }

    /// Most negative pivot and a vector `v` with `vᵀ K v` equal to it.
    pub fn negative_curvature(&self) -> Option<(f64, Vec<f64>)> {
        let (j, &dj) = self.d.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        if dj >= 0.0 {
            return None;
        }
        let l = &self.l;
        let mut v = vec![0.0; l.n];
        v[j] = 1.0;
        for c in (0..=j).rev() {
            let (fc, base) = (l.first[c], l.ptr[c]);
            let vc = v[c];
            if vc == 0.0 {
                continue;
            }
            for i in fc..c {
                v[i] -= l.vals[base + i - fc] * vc;
            }
        }
        Some((dj, v))
    }
}
