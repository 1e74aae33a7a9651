//! Banded matrices and LU factorization with partial pivoting.

use crate::error::{Result, ZkError};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage reserves `kl` extra super-diagonals for pivoting fill-in.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Half-bandwidth `max(kl, ku)`.
    pub fn half_bandwidth(&self) -> usize {
        self.kl.max(self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Sets an entry inside the declared band; panics outside it.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i.abs_diff(j) <= if j >= i { self.ku } else { self.kl },
            "entry ({i}, {j}) outside band"
        );
        let s = self.slot(i, j).expect("band slot");
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// `a * self + b * other`; both must share the band shape.
    pub fn combine(&self, a: f64, other: &BandMatrix, b: f64) -> BandMatrix {
        assert_eq!((self.n, self.kl, self.ku), (other.n, other.kl, other.ku));
        let mut out = self.clone();
        for (o, x) in out.data.iter_mut().zip(&other.data) {
            *o = a * *o + b * x;
        }
        out
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// LU factorization with partial pivoting. `label` names the system in
    /// error messages.
    pub fn factorize(&self, label: &str) -> Result<BandLu> {
        let n = self.n;
        let mut a = self.clone();
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 && n > 0 {
            return Err(ZkError::SingularSystem {
                mode: label.to_string(),
                detail: "zero matrix".into(),
            });
        }
        let upper = self.kl + self.ku;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = a.get(k, k).abs();
            for i in k + 1..=last {
                let v = a.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-14) {
                return Err(ZkError::SingularSystem {
                    mode: label.to_string(),
                    detail: format!("pivot {best:e} at column {k}"),
                });
            }
            piv[k] = p;
            let jmax = (k + upper).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let t = a.get(k, j);
                    let s = a.get(p, j);
                    a.put(k, j, s);
                    a.put(p, j, t);
                }
            }
            let d = a.get(k, k);
            for i in k + 1..=last {
                let l = a.get(i, k) / d;
                if l == 0.0 {
                    continue;
                }
                a.put(i, k, l);
                for j in k + 1..=jmax {
                    let v = a.get(i, j) - l * a.get(k, j);
                    a.put(i, j, v);
                }
            }
        }
        Ok(BandLu { lu: a, piv })
    }

    /// Unchecked store used by the factorization (fill-in region allowed).
    #[inline]
    fn put(&mut self, i: usize, j: usize, v: f64) {
        match self.slot(i, j) {
            Some(s) => self.data[s] = v,
            None => debug_assert!(v == 0.0, "fill outside storage at ({i}, {j})"),
        }
    }
}

/// Factorized band matrix.
#[derive(Clone, Debug)]
pub struct BandLu {
    lu: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.lu.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let a = &self.lu;
        let n = a.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + a.kl).min(n.saturating_sub(1));
            for i in k + 1..=last {
                b[i] -= a.get(i, k) * b[k];
            }
        }
        let upper = a.kl + a.ku;
        for k in (0..n).rev() {
            let jmax = (k + upper).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s -= a.get(k, j) * b[j];
            }
            b[k] = s / a.get(k, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample_matrix(n: usize) -> BandMatrix {
        let mut m = BandMatrix::zeros(n, 3, 2);
        for i in 0..n {
            for j in i.saturating_sub(3)..=(i + 2).min(n - 1) {
                let v = ((i * 7 + j * 3) % 11) as f64 - 5.0;
                m.set(i, j, v);
            }
        }
        m
    }

    #[test]
    fn solve_recovers_known_vector() {
        let n = 40;
        let m = sample_matrix(n);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        m.matvec(&x, &mut b);
        let lu = m.factorize("test").unwrap();
        lu.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert_abs_diff_eq!(*a, *e, epsilon = 1e-9);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 2, 1.0);
        m.set(2, 1, 1.0);
        m.set(2, 2, 1.0);
        let lu = m.factorize("perm").unwrap();
        let mut b = vec![2.0, 4.0, 5.0];
        lu.solve(&mut b);
        // x = (1, 2, 3)
        assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b[2], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_matrix_names_the_system() {
        let m = BandMatrix::zeros(4, 1, 1);
        let err = m.factorize("mode (3, 0)").unwrap_err();
        assert!(err.to_string().contains("mode (3, 0)"));
        let mut m = BandMatrix::identity(4, 1, 1);
        m.set(2, 2, 0.0);
        assert!(m.factorize("x").is_err());
    }

    #[test]
    fn identity_solve_is_exact() {
        let m = BandMatrix::identity(5, 2, 2);
        let lu = m.factorize("id").unwrap();
        let mut b = vec![1.0, -2.0, 3.5, 0.0, 1e-300];
        let orig = b.clone();
        lu.solve(&mut b);
        assert_eq!(b, orig);
    }
}
