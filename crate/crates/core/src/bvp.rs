//! The singular two-point problem `u_xxx + eps u_xxxx = g` on `[0, 1]`.
//!
//! Boundary conditions `u(0) = u(1) = u_x(1) = 0`, plus `u_xx(0) = 0` when
//! `eps > 0`. The layer of the regularized problem sits at `x = 0`.
//!
//! Discretization on the nodes `x_i = i / n`:
//! - `eps > 0`: centered five-point `D3 + eps D4` at nodes `2..=n-2`;
//! - `eps = 0`: the four-point `D3` at the midpoints `x_{i+1/2}`, `i = 1..=n-2`,
//!   which has no parasitic modes;
//! - `u_x(1)` uses the four-point third-order closure, `u_xx(0)` the
//!   four-point second-order one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Result, ZkError};
use crate::stencil;

pub const MIN_N: usize = 16;
/// Left end of the window used for `|u^eps - u^0|`.
pub const LAYER_DELTA: f64 = 0.1;
pub const PICARD_RELAXATION: f64 = 0.5;
pub const PICARD_MAX_ITER: usize = 200;
pub const PICARD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BvpProblem {
    /// Samples of `g` at `x_i = i / n`, `i = 0..=n`.
    pub g: Vec<f64>,
    pub epsilon: f64,
    /// Adds `u u_x` to the left-hand side.
    pub nonlinear: bool,
}

impl BvpProblem {
    pub fn from_fn(n: usize, epsilon: f64, g: impl Fn(f64) -> f64) -> Self {
        BvpProblem {
            g: (0..=n).map(|i| g(i as f64 / n as f64)).collect(),
            epsilon,
            nonlinear: false,
        }
    }

    pub fn constant(n: usize, epsilon: f64, g: f64) -> Self {
        Self::from_fn(n, epsilon, |_| g)
    }

    pub fn n(&self) -> usize {
        self.g.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        check_samples(&self.g)?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(ZkError::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn check_samples(g: &[f64]) -> Result<()> {
    if g.len() < MIN_N + 1 {
        return Err(ZkError::GridTooCoarse(format!(
            "BVP needs n >= {MIN_N}, got {}",
            g.len().saturating_sub(1)
        )));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(ZkError::NonFiniteSample {
            x: i as f64 / (g.len() - 1) as f64,
            y: 0.0,
            z: 0.0,
            value: g[i],
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpSolution {
    pub epsilon: f64,
    pub u: Vec<f64>,
    pub ux0: f64,
    pub ux1: f64,
    pub uxx0: f64,
    pub uxx1: f64,
    pub uxxx1: f64,
    pub sup_uxx: f64,
    /// Picard iterations (0 for linear solves).
    pub iterations: usize,
}

impl BvpSolution {
    pub fn n(&self) -> usize {
        self.u.len() - 1
    }

    pub fn x(&self) -> Vec<f64> {
        let n = self.n();
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    /// Second-order `u_xx` at every node.
    pub fn uxx(&self) -> Vec<f64> {
        nodal_derivative(&self.u, 2)
    }

    /// `[u(0), u(1), u_x(1), u_xx(0)]` from the one-sided traces.
    pub fn bc_residuals(&self) -> [f64; 4] {
        [self.u[0], self.u[self.n()], self.ux1, self.uxx0]
    }
}

fn nodal_derivative(u: &[f64], order: usize) -> Vec<f64> {
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    (0..=n)
        .map(|i| stencil::second_order(i, n, order, h).apply(|k| u[k]))
        .collect()
}

/// One-sided trace on at least four nodes, matching the imposed closures and
/// exact on cubics.
fn end_derivative(u: &[f64], at_right: bool, order: usize) -> f64 {
    let n = u.len() - 1;
    let width = (order + 2).max(4);
    let (at, start) = if at_right { (n, n + 1 - width) } else { (0, 0) };
    stencil::uniform(at, start, width, order, 1.0 / n as f64).apply(|k| u[k])
}

fn finish(u: Vec<f64>, epsilon: f64, iterations: usize) -> BvpSolution {
    let uxx = nodal_derivative(&u, 2);
    BvpSolution {
        epsilon,
        ux0: end_derivative(&u, false, 1),
        ux1: end_derivative(&u, true, 1),
        uxx0: end_derivative(&u, false, 2),
        uxx1: end_derivative(&u, true, 2),
        uxxx1: end_derivative(&u, true, 3),
        sup_uxx: uxx.iter().fold(0.0, |m, v| m.max(v.abs())),
        u,
        iterations,
    }
}

/// Factorized operator; rows are scaled by `h^3` (interior), `h` or `h^2`
/// (boundary) so all entries are O(1).
struct LinearBvp {
    n: usize,
    epsilon: f64,
    lu: BandLu,
}

impl LinearBvp {
    fn new(n: usize, epsilon: f64) -> Result<Self> {
        let h = 1.0 / n as f64;
        let mut a = BandMatrix::zeros(n + 1, 2, 2);
        a.set(0, 0, 1.0);
        a.set(n, n, 1.0);
        for (k, w) in [-2.0, 9.0, -18.0, 11.0].iter().enumerate() {
            a.set(n - 1, n - 3 + k, w / 6.0);
        }
        if epsilon > 0.0 {
            for (k, w) in [2.0, -5.0, 4.0, -1.0].iter().enumerate() {
                a.set(1, k, *w);
            }
            let r = epsilon / h;
            let d3 = [-0.5, 1.0, 0.0, -1.0, 0.5];
            let d4 = [1.0, -4.0, 6.0, -4.0, 1.0];
            for i in 2..=n - 2 {
                for k in 0..5 {
                    a.set(i, i + k - 2, d3[k] + r * d4[k]);
                }
            }
        } else {
            for i in 1..=n - 2 {
                for (k, w) in [-1.0, 3.0, -3.0, 1.0].iter().enumerate() {
                    a.set(i, i + k - 1, *w);
                }
            }
        }
        let lu = a.factorize(&format!("bvp(eps = {epsilon:e}, n = {n})"))?;
        Ok(LinearBvp { n, epsilon, lu })
    }

    /// Solves with right-hand side samples `rhs` at the nodes.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h3 = (1.0 / n as f64).powi(3);
        let mut b = vec![0.0; n + 1];
        if self.epsilon > 0.0 {
            for i in 2..=n - 2 {
                b[i] = h3 * rhs[i];
            }
        } else {
            for i in 1..=n - 2 {
                b[i] = h3 * 0.5 * (rhs[i] + rhs[i + 1]);
            }
        }
        self.lu.solve(&mut b);
        b
    }
}

/// Banded direct solve; the nonlinear variant runs a relaxed Picard
/// iteration on `g - u u_x`.
pub fn solve_bvp(p: &BvpProblem) -> Result<BvpSolution> {
    p.validate()?;
    let op = LinearBvp::new(p.n(), p.epsilon)?;
    let u = op.solve(&p.g);
    if !p.nonlinear {
        return Ok(finish(u, p.epsilon, 0));
    }
    let mut u = u;
    for it in 1..=PICARD_MAX_ITER {
        let ux = nodal_derivative(&u, 1);
        let rhs: Vec<f64> = p.g.iter().zip(&u).zip(&ux).map(|((g, u), ux)| g - u * ux).collect();
        let v = op.solve(&rhs);
        let residual = v.iter().zip(&u).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if !residual.is_finite() {
            break;
        }
        if residual < PICARD_TOL {
            return Ok(finish(v, p.epsilon, it));
        }
        for (ui, vi) in u.iter_mut().zip(&v) {
            *ui = (1.0 - PICARD_RELAXATION) * *ui + PICARD_RELAXATION * vi;
        }
    }
    Err(ZkError::NumericalFault {
        t: 0.0,
        detail: format!("Picard iteration did not reach {PICARD_TOL:e} in {PICARD_MAX_ITER} iterations"),
    })
}

/// Solves `u_xxx = g` with `u(0) = u(1) = u_x(1) = 0` by integrating the
/// piecewise-linear interpolant of `g` exactly three times and fitting the
/// two free constants of `a x^2 + b x` to the conditions at `x = 1`.
pub fn limit_solution(g: &[f64]) -> Result<BvpSolution> {
    check_samples(g)?;
    let n = g.len() - 1;
    let h = 1.0 / n as f64;
    let (mut g1, mut g2, mut g3) = (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]);
    for i in 0..n {
        let m = (g[i + 1] - g[i]) / h;
        g1[i + 1] = g1[i] + g[i] * h + m * h * h / 2.0;
        g2[i + 1] = g2[i] + g1[i] * h + g[i] * h * h / 2.0 + m * h.powi(3) / 6.0;
        g3[i + 1] = g3[i] + g2[i] * h + g1[i] * h * h / 2.0 + g[i] * h.powi(3) / 6.0 + m * h.powi(4) / 24.0;
    }
    let a = g3[n] - g2[n];
    let b = g2[n] - 2.0 * g3[n];
    let u: Vec<f64> = (0..=n)
        .map(|i| {
            let x = i as f64 * h;
            g3[i] + a * x * x + b * x
        })
        .collect();
    let uxx: Vec<f64> = g1.iter().map(|v| v + 2.0 * a).collect();
    Ok(BvpSolution {
        epsilon: 0.0,
        ux0: g2[0] + b,
        ux1: g2[n] + 2.0 * a + b,
        uxx0: uxx[0],
        uxx1: uxx[n],
        uxxx1: g[n],
        sup_uxx: uxx.iter().fold(0.0, |m, v| m.max(v.abs())),
        u,
        iterations: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub sup_uxx: f64,
    /// `max |u^eps - u^0|` over `[LAYER_DELTA, 1]`.
    pub err_outside_layer: f64,
    /// `-1 / slope` of `log |u_xx - u^0_xx|` near `x = 0`; `None` when the
    /// deviation does not decay there.
    pub layer_width: Option<f64>,
    pub ux0: f64,
    pub uxx1: f64,
    pub uxxx1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub limit: BvpSolution,
    /// `max sup|u_xx| / min sup|u_xx|` over the sweep.
    pub uxx_ratio: f64,
}

/// Least-squares slope of `log |d|` over the leading nodes where the
/// deviation stays above `1e-6 |d_0|`, capped at `x <= LAYER_DELTA`.
fn layer_width(dev: &[f64]) -> Option<f64> {
    let n = dev.len() - 1;
    let h = 1.0 / n as f64;
    let d0 = dev[0].abs();
    if !(d0 > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = dev
        .iter()
        .enumerate()
        .take_while(|(i, d)| (*i as f64 * h) <= LAYER_DELTA && d.abs() > 1e-6 * d0)
        .map(|(i, d)| (i as f64 * h, d.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    let slope = num / den;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// One solve per `eps` (in parallel), compared against the `eps = 0`
/// solution on the same nodes.
pub fn trace_sweep(g: &[f64], eps_list: &[f64], nonlinear: bool) -> Result<SweepReport> {
    check_samples(g)?;
    if eps_list.is_empty() {
        return Err(ZkError::InvalidArgument("empty epsilon list".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(ZkError::InvalidArgument(
            "epsilon list must be strictly decreasing and positive".into(),
        ));
    }
    let limit = if nonlinear {
        solve_bvp(&BvpProblem {
            g: g.to_vec(),
            epsilon: 0.0,
            nonlinear: true,
        })?
    } else {
        limit_solution(g)?
    };
    let limit_uxx = if nonlinear {
        limit.uxx()
    } else {
        limit_uxx_exact(g, &limit)
    };
    let n = g.len() - 1;
    let first = (LAYER_DELTA * n as f64 - 1e-9).ceil() as usize;
    let records = eps_list
        .par_iter()
        .map(|&eps| {
            let s = solve_bvp(&BvpProblem {
                g: g.to_vec(),
                epsilon: eps,
                nonlinear,
            })?;
            let err = (first..=n).fold(0.0_f64, |m, i| m.max((s.u[i] - limit.u[i]).abs()));
            let dev: Vec<f64> = s.uxx().iter().zip(&limit_uxx).map(|(a, b)| a - b).collect();
            Ok(SweepRecord {
                epsilon: eps,
                sup_uxx: s.sup_uxx,
                err_outside_layer: err,
                layer_width: layer_width(&dev),
                ux0: s.ux0,
                uxx1: s.uxx1,
                uxxx1: s.uxxx1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = records.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| {
        (lo.min(r.sup_uxx), hi.max(r.sup_uxx))
    });
    let uxx_ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    Ok(SweepReport {
        records,
        limit,
        uxx_ratio,
    })
}

fn limit_uxx_exact(g: &[f64], limit: &BvpSolution) -> Vec<f64> {
    // u_xx of the limit is uxx0 + the running integral of g.
    let n = g.len() - 1;
    let h = 1.0 / n as f64;
    let mut out = vec![limit.uxx0; n + 1];
    for i in 0..n {
        out[i + 1] = out[i] + 0.5 * h * (g[i] + g[i + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form for `g = 6`, `eps > 0`.
    fn oracle(x: f64, eps: f64) -> (f64, f64) {
        let e = (-1.0 / eps).exp();
        let a = 2.0 / (eps * eps - eps * e * (1.0 + eps) - 0.5);
        let c = -3.0 - a * (1.0 + eps * e);
        let d = a * eps * eps;
        let u = x.powi(3) + a * (x * x / 2.0 - eps * eps * (-x / eps).exp()) + c * x + d;
        let uxx = 6.0 * x + a * (1.0 - (-x / eps).exp());
        (u, uxx)
    }

    fn max_err(s: &BvpSolution, f: impl Fn(f64) -> f64) -> f64 {
        s.x().iter().zip(&s.u).fold(0.0, |m, (x, u)| m.max((u - f(*x)).abs()))
    }

    #[test]
    fn zero_data_give_zero() {
        for eps in [0.0, 1e-3] {
            let s = solve_bvp(&BvpProblem::constant(64, eps, 0.0)).unwrap();
            assert!(s.u.iter().all(|v| *v == 0.0));
        }
        let s = limit_solution(&[0.0; 65]).unwrap();
        assert!(s.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn limit_problem_is_exact_on_cubics() {
        let s = solve_bvp(&BvpProblem::constant(256, 0.0, 6.0)).unwrap();
        assert!(max_err(&s, |x| x * (x - 1.0).powi(2)) < 1e-10);
        assert!((s.ux0 - 1.0).abs() < 1e-8);
        assert!((s.uxx1 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn limit_solution_by_integration() {
        let l = limit_solution(&vec![6.0; 129]).unwrap();
        assert!(max_err(&l, |x| x * (x - 1.0).powi(2)) < 1e-13);
        assert!((l.ux0 - 1.0).abs() < 1e-13 && (l.uxx1 - 2.0).abs() < 1e-13);
        // g = 24 x: u = x^4 - 3 x^2 + 2 x.
        let g: Vec<f64> = (0..=128).map(|i| 24.0 * i as f64 / 128.0).collect();
        let l = limit_solution(&g).unwrap();
        assert!(max_err(&l, |x| x.powi(4) - 3.0 * x * x + 2.0 * x) < 1e-13);
        assert!(l.ux1.abs() < 1e-13);
    }

    #[test]
    fn regularized_solve_matches_closed_form() {
        let eps = 0.1;
        let mut prev = f64::INFINITY;
        for n in [64, 128, 256] {
            let s = solve_bvp(&BvpProblem::constant(n, eps, 6.0)).unwrap();
            let e = max_err(&s, |x| oracle(x, eps).0);
            assert!(prev / e > 3.5 || prev.is_infinite(), "{prev} {e}");
            prev = e;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn bc_residuals_vanish_and_converge_under_refinement() {
        let eps = 0.05;
        let five_point: Vec<f64> = [256, 512]
            .iter()
            .map(|&n| {
                let s = solve_bvp(&BvpProblem::constant(n, eps, 6.0)).unwrap();
                assert!(
                    s.bc_residuals().iter().all(|r| r.abs() < 1e-6),
                    "{:?}",
                    s.bc_residuals()
                );
                // Independent five-point readings of u_x(1) and u_xx(0).
                let h = 1.0 / n as f64;
                let ux1 = stencil::uniform(n, n - 4, 5, 1, h).apply(|k| s.u[k]);
                let uxx0 = stencil::uniform(0, 0, 5, 2, h).apply(|k| s.u[k]);
                ux1.abs().max(uxx0.abs())
            })
            .collect();
        assert!(five_point[0] / five_point[1] > 3.5, "{five_point:?}");
    }

    #[test]
    fn small_eps_layer_is_near_zero() {
        let s = solve_bvp(&BvpProblem::constant(2048, 1e-3, 6.0)).unwrap();
        let l = limit_solution(&vec![6.0; 2049]).unwrap();
        let err: f64 = (205..=2048).fold(0.0, |m, i| m.max((s.u[i] - l.u[i]).abs()));
        assert!(err < 1e-4, "{err}");
        assert!(s.uxx0.abs() < 1e-6);
        assert!(s.sup_uxx <= 4.5, "{}", s.sup_uxx);
    }

    #[test]
    fn layer_width_tracks_eps() {
        let g = vec![6.0; 2049];
        let rep = trace_sweep(&g, &[2e-2, 1e-2], false).unwrap();
        for r in &rep.records {
            let w = r.layer_width.unwrap();
            assert!((w / r.epsilon - 1.0).abs() < 0.2, "{} {}", r.epsilon, w);
        }
    }

    #[test]
    fn sweep_of_zero_is_zero() {
        let rep = trace_sweep(&[0.0; 65], &[1e-1, 1e-2], false).unwrap();
        assert!(rep
            .records
            .iter()
            .all(|r| r.sup_uxx == 0.0 && r.err_outside_layer == 0.0));
        assert_eq!(rep.uxx_ratio, 1.0);
        assert!(trace_sweep(&[0.0; 65], &[1e-2, 1e-1], false).is_err());
        assert!(trace_sweep(&[0.0; 65], &[1e-2, 0.0], false).is_err());
    }

    #[test]
    fn nonlinear_picard_converges() {
        let p = BvpProblem {
            nonlinear: true,
            ..BvpProblem::constant(256, 1e-2, 6.0)
        };
        let s = solve_bvp(&p).unwrap();
        assert!(s.iterations > 1 && s.iterations <= PICARD_MAX_ITER);
        // The discrete equation holds at an interior node.
        let n = 256;
        let h = 1.0 / n as f64;
        let i = n / 2;
        let u = &s.u;
        let d3 = (-u[i - 2] + 2.0 * u[i - 1] - 2.0 * u[i + 1] + u[i + 2]) / (2.0 * h.powi(3));
        let d4 = (u[i - 2] - 4.0 * u[i - 1] + 6.0 * u[i] - 4.0 * u[i + 1] + u[i + 2]) / h.powi(4);
        let ux = (u[i + 1] - u[i - 1]) / (2.0 * h);
        assert!((d3 + 1e-2 * d4 + u[i] * ux - 6.0).abs() < 1e-5);
        let rep = trace_sweep(&vec![6.0; 257], &[1e-1, 1e-2], true).unwrap();
        assert!(rep.records.iter().all(|r| r.sup_uxx.is_finite()));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_bvp(&BvpProblem::constant(8, 0.1, 1.0)).is_err());
        assert!(solve_bvp(&BvpProblem::constant(32, -0.1, 1.0)).is_err());
        let mut p = BvpProblem::constant(32, 0.1, 1.0);
        p.g[3] = f64::NAN;
        assert!(solve_bvp(&p).is_err());
    }
}
