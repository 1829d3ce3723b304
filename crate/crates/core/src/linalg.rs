//! Banded LU factorization with partial pivoting.
//!
//! P1 systems on the meshes used here have small dof bandwidth, so a banded
//! factorization is both fast and exact enough; it also yields the sign of
//! the determinant needed for degree counting.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square matrix with `kl` sub- and `ku` super-diagonals. Storage leaves room
/// for the `kl` extra super-diagonals created by row pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![T::zero(); n * width] }
    }

    pub fn symmetric_band(n: usize, bandwidth: usize) -> Self {
        Self::zeros(n, bandwidth, bandwidth)
    }

    pub fn dense(n: usize) -> Self {
        let b = n.saturating_sub(1);
        Self::zeros(n, b, b)
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let mut m = Self::dense(rows.len());
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width).then(|| i * self.width + off as usize)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self.slot(i, j) {
            Some(k) => self.data[k],
            None => T::zero(),
        }
    }

    /// Panics when `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let k = self.slot(i, j).unwrap();
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let k = self.slot(i, j).unwrap();
        self.data[k] = self.data[k] + v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Factorizes in place; fails on an exactly zero pivot.
    pub fn lu(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let mut swaps = 0usize;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == T::zero() || !best.is_finite() {
                return Err(Error::DegenerateJacobian { det: 0.0 });
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                swaps += 1;
                for j in k..=last_col {
                    let a = self.slot(k, j).unwrap();
                    let b = self.slot(p, j).unwrap();
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let ik = self.slot(i, k).unwrap();
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.data[self.slot(k, j).unwrap()];
                    let ij = self.slot(i, j).unwrap();
                    self.data[ij] = self.data[ij] - l * kj;
                }
            }
        }
        Ok(BandLu { a: self, piv, swaps })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu<T> {
    a: BandMatrix<T>,
    piv: Vec<usize>,
    swaps: usize,
}

impl<T: Real> BandLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let a = &self.a;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + a.kl).min(n.saturating_sub(1)) {
                x[i] = x[i] - a.get(i, k) * xk;
            }
        }
        for k in (0..n).rev() {
            let last = (k + a.kl + a.ku).min(n - 1);
            let s: T = (k + 1..=last).map(|j| a.get(k, j) * x[j]).sum();
            x[k] = (x[k] - s) / a.get(k, k);
        }
        x
    }

    /// Sign of the determinant: `1`, or `-1`.
    pub fn det_sign(&self) -> i32 {
        let mut s = if self.swaps % 2 == 0 { 1 } else { -1 };
        for k in 0..self.a.n {
            if self.a.get(k, k) < T::zero() {
                s = -s;
            }
        }
        s
    }

    pub fn log_abs_det(&self) -> T {
        (0..self.a.n).map(|k| self.a.get(k, k).abs().ln()).sum()
    }

    /// Smallest `|u_kk| / max |u_kk|`, a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> T {
        let d: Vec<T> = (0..self.a.n).map(|k| self.a.get(k, k).abs()).collect();
        let max = d.iter().copied().fold(T::zero(), T::max);
        let min = d.iter().copied().fold(T::infinity(), T::min);
        if max == T::zero() {
            T::zero()
        } else {
            min / max
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn random_band(n: usize, kl: usize, ku: usize, seed: &[f64]) -> BandMatrix<f64> {
        let mut m = BandMatrix::zeros(n, kl, ku);
        let mut k = 0;
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                m.set(i, j, seed[k % seed.len()] * (1.0 + (i * 7 + j * 3) as f64 % 5.0) - 0.7);
                k += 1;
            }
        }
        m
    }

    #[test]
    fn solves_tridiagonal_poisson() {
        let n = 50;
        let mut m = BandMatrix::symmetric_band(n, 1);
        for i in 0..n {
            m.set(i, i, 2.0);
            if i > 0 {
                m.set(i, i - 1, -1.0);
                m.set(i - 1, i, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = m.mul_vec(&x_true);
        let lu = m.lu().unwrap();
        let x = lu.solve(&b);
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-11);
        }
        assert_eq!(lu.det_sign(), 1);
        // det = n + 1
        assert!((lu.log_abs_det() - (n as f64 + 1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let m = BandMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let lu = m.lu().unwrap();
        assert_eq!(lu.det_sign(), -1);
        assert_eq!(lu.solve(&[2.0, 3.0]), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let m = BandMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.lu().is_err());
    }

    #[test]
    fn single_precision() {
        let m = BandMatrix::<f32>::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = m.lu().unwrap().solve(&[1.0, 2.0]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-6 && (x[1] - 7.0 / 11.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn agrees_with_dense_oracle(
            n in 1usize..14, kl in 0usize..4, ku in 0usize..4,
            seed in proptest::collection::vec(-1.0f64..1.0, 8..20),
        ) {
            let m = random_band(n, kl, ku, &seed);
            let dense = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
            let det = dense.determinant();
            prop_assume!(det.abs() > 1e-8);
            let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let lu = m.clone().lu().unwrap();
            let x = lu.solve(&b);
            let oracle = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let scale = oracle.amax().max(1.0);
            for i in 0..n {
                prop_assert!((x[i] - oracle[i]).abs() < 1e-8 * scale);
            }
            prop_assert_eq!(lu.det_sign(), if det > 0.0 { 1 } else { -1 });
            prop_assert!((lu.log_abs_det() - det.abs().ln()).abs() < 1e-8);
        }
    }
}
