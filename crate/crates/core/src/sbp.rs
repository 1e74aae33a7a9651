//! Summation-by-parts x operators used by the time stepper.
//!
//! `H` is the trapezoidal norm and `D` the second-order first derivative with
//! first-order boundary rows, so that `H D + D^T H = diag(-1, 0, ..., 0, 1)`.
//! The third and fourth derivatives are defined weakly,
//!
//! ```text
//! H D3 = -D^T H D D,        H D4 = (D D)^T H D D,
//! ```
//!
//! which gives, for `u` with `u_0 = u_n = 0` and `(D u)_n = 0`,
//! `<u, D3 u>_H = (D u)_0^2 / 2` and `<u, D4 u>_H = |D D u|_H^2` exactly.
//! The condition `u_x(1) = 0` is imposed as `u_{n-1} = 0`; `u_xx(0) = 0` is
//! the natural condition of the fourth-order form.
//!
//! The unknowns of the reduced system are the free nodes `1..=n-2`.

use crate::banded::BandMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SbpX {
    /// Number of intervals.
    pub n: usize,
    pub h: f64,
}

impl SbpX {
    pub fn new(n: usize) -> Self {
        SbpX { n, h: 1.0 / n as f64 }
    }

    /// Trapezoidal weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Free node indices of the constrained space.
    pub fn free(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n - 2
    }

    pub fn n_free(&self) -> usize {
        self.n - 2
    }

    /// `out = D v`.
    pub fn d(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = self.h;
        out[0] = (v[1] - v[0]) / h;
        for i in 1..n {
            out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        }
        out[n] = (v[n] - v[n - 1]) / h;
    }

    /// `out = D^T v`.
    pub fn dt(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = self.h;
        out.iter_mut().for_each(|o| *o = 0.0);
        out[0] -= v[0] / h;
        out[1] += v[0] / h;
        for i in 1..n {
            out[i - 1] -= v[i] / (2.0 * h);
            out[i + 1] += v[i] / (2.0 * h);
        }
        out[n - 1] -= v[n] / h;
        out[n] += v[n] / h;
    }

    fn dd(&self, v: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; v.len()];
        let mut b = vec![0.0; v.len()];
        self.d(v, &mut a);
        self.d(&a, &mut b);
        b
    }

    fn h_scale(&self, v: &mut [f64]) {
        for (i, x) in v.iter_mut().enumerate() {
            *x *= self.weight(i);
        }
    }

    fn h_inv_scale(&self, v: &mut [f64]) {
        for (i, x) in v.iter_mut().enumerate() {
            *x /= self.weight(i);
        }
    }

    /// `-D^T H D D v` (stiffness form of the third derivative).
    pub fn s3(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.dd(v);
        self.h_scale(&mut w);
        let mut out = vec![0.0; v.len()];
        self.dt(&w, &mut out);
        out.iter_mut().for_each(|x| *x = -*x);
        out
    }

    /// `H D v`.
    pub fn s1(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.d(v, &mut out);
        self.h_scale(&mut out);
        out
    }

    /// `(D D)^T H D D v`.
    pub fn s4(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.dd(v);
        self.h_scale(&mut w);
        let mut a = vec![0.0; v.len()];
        let mut out = vec![0.0; v.len()];
        self.dt(&w, &mut a);
        self.dt(&a, &mut out);
        out
    }

    /// Strong form `H^{-1} s3 v` of the third derivative.
    pub fn d3(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.s3(v);
        self.h_inv_scale(&mut out);
        out
    }

    /// Strong form `H^{-1} s4 v` of the fourth derivative.
    pub fn d4(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.s4(v);
        self.h_inv_scale(&mut out);
        out
    }

    /// `<a, b>_H`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| self.weight(i) * x * y)
            .sum()
    }

    /// `(D v)_0`, the discrete trace of `v_x` at `x = 0`.
    pub fn flux0(&self, v: &[f64]) -> f64 {
        (v[1] - v[0]) / self.h
    }

    /// `|D D v|_H^2`.
    pub fn d2_norm2(&self, v: &[f64]) -> f64 {
        let w = self.dd(v);
        self.inner(&w, &w)
    }

    /// Split nonlinearity `(u D u + D(u^2)) / 3`; `<u, N>_H = 0` whenever
    /// `u_0 = u_n = 0`.
    pub fn nonlinear_split(&self, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let mut du = vec![0.0; m];
        self.d(u, &mut du);
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let mut dsq = vec![0.0; m];
        self.d(&sq, &mut dsq);
        for i in 0..m {
            out[i] = (u[i] * du[i] + dsq[i]) / 3.0;
        }
    }

    /// Band matrix of a linear map restricted to the free nodes, obtained
    /// by probing with interleaved unit vectors.
    fn assemble(&self, half_bw: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> BandMatrix {
        let nf = self.n_free();
        let mut m = BandMatrix::zeros(nf, half_bw, half_bw);
        let stride = 2 * half_bw + 1;
        let mut probe = vec![0.0; self.n + 1];
        for phase in 0..stride {
            probe.iter_mut().for_each(|p| *p = 0.0);
            let cols: Vec<usize> = (phase..nf).step_by(stride).collect();
            for &c in &cols {
                probe[c + 1] = 1.0;
            }
            let img = op(&probe);
            for &c in &cols {
                let lo = c.saturating_sub(half_bw);
                let hi = (c + half_bw).min(nf - 1);
                for r in lo..=hi {
                    let v = img[r + 1];
                    if v != 0.0 {
                        m.set(r, c, v);
                    }
                }
            }
        }
        m
    }

    /// Band matrices `(S3, S1, S4)` on the free nodes.
    pub fn stiffness_parts(&self) -> (BandMatrix, BandMatrix, BandMatrix) {
        let b = 4;
        (
            self.assemble(b, |v| self.s3(v)),
            self.assemble(b, |v| self.s1(v)),
            self.assemble(b, |v| self.s4(v)),
        )
    }
}
