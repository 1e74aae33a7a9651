//! Norms, traces and estimate constants of a solution, and the checks built
//! on them: the Gronwall timescale and the `|u_x|^2 <= |u_t|^2 + kappa`
//! surrogate. Multiplier identities live in [`crate::balance`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::geometry::Field;
use crate::model::{forcing_eval, rhs, ForcingComponent, ModelParams};
use crate::operators::{derivative, norm, transverse_norm, x_trace, Axis, Closure, Weight, XEnd};
use crate::stepper::SolverState;

/// One row of diagnostics. `u_t` entries are absent when no time
/// derivative is available.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub l2: f64,
    pub l2_weighted_x: f64,
    pub l2_weighted_1px: f64,
    pub ux_l2: f64,
    pub grad_l2: f64,
    pub uxx_l2: f64,
    pub uyy_l2: f64,
    pub uzz_l2: f64,
    pub xi_norm: f64,
    pub trace_ux0: f64,
    pub trace_uxx1: f64,
    pub ut_l2: Option<f64>,
    pub ut_weighted: Option<f64>,
    pub grad_ut_l2: Option<f64>,
    pub sigma: f64,
    pub nonlin_l2: f64,
    pub f_l2: f64,
    pub ft_l2: f64,
}

impl DiagnosticsRecord {
    /// Column names in serialization order.
    pub const COLUMNS: [&'static str; 19] = [
        "t",
        "l2",
        "l2_weighted_x",
        "l2_weighted_1px",
        "ux_l2",
        "grad_l2",
        "uxx_l2",
        "uyy_l2",
        "uzz_l2",
        "xi_norm",
        "trace_ux0",
        "trace_uxx1",
        "ut_l2",
        "ut_weighted",
        "grad_ut_l2",
        "sigma",
        "nonlin_l2",
        "f_l2",
        "ft_l2",
    ];

    /// Values in column order.
    pub fn values(&self) -> [Option<f64>; 19] {
        [
            Some(self.t),
            Some(self.l2),
            Some(self.l2_weighted_x),
            Some(self.l2_weighted_1px),
            Some(self.ux_l2),
            Some(self.grad_l2),
            Some(self.uxx_l2),
            Some(self.uyy_l2),
            Some(self.uzz_l2),
            Some(self.xi_norm),
            Some(self.trace_ux0),
            Some(self.trace_uxx1),
            self.ut_l2,
            self.ut_weighted,
            self.grad_ut_l2,
            Some(self.sigma),
            Some(self.nonlin_l2),
            Some(self.f_l2),
            Some(self.ft_l2),
        ]
    }

    /// Inverse of [`DiagnosticsRecord::values`]; `None` for required
    /// columns is an error.
    pub fn from_values(v: &[Option<f64>]) -> Result<Self> {
        if v.len() != 19 {
            return Err(ZkError::InvalidArgument(format!(
                "expected 19 columns, got {}",
                v.len()
            )));
        }
        let req =
            |i: usize| v[i].ok_or_else(|| ZkError::InvalidArgument(format!("column {} is required", Self::COLUMNS[i])));
        Ok(DiagnosticsRecord {
            t: req(0)?,
            l2: req(1)?,
            l2_weighted_x: req(2)?,
            l2_weighted_1px: req(3)?,
            ux_l2: req(4)?,
            grad_l2: req(5)?,
            uxx_l2: req(6)?,
            uyy_l2: req(7)?,
            uzz_l2: req(8)?,
            xi_norm: req(9)?,
            trace_ux0: req(10)?,
            trace_uxx1: req(11)?,
            ut_l2: v[12],
            ut_weighted: v[13],
            grad_ut_l2: v[14],
            sigma: req(15)?,
            nonlin_l2: req(16)?,
            f_l2: req(17)?,
            ft_l2: req(18)?,
        })
    }
}

/// `|grad u|` with the closures of `u`'s tag.
pub fn grad_norm(u: &Field) -> Result<f64> {
    let c = Closure::for_tag(u.bc_tag);
    let mut s = norm(&derivative(u, Axis::X, 1, c)?, Weight::One).powi(2);
    s += norm(&derivative(u, Axis::Y, 1, c)?, Weight::One).powi(2);
    if u.grid.spec.d == 2 {
        s += norm(&derivative(u, Axis::Z, 1, c)?, Weight::One).powi(2);
    }
    Ok(s.sqrt())
}

/// Diagnostics of `state`. `ut` overrides the differenced time derivative.
pub fn record(state: &SolverState, params: &ModelParams, ut: Option<&Field>) -> Result<DiagnosticsRecord> {
    let u = &state.u;
    let g = &u.grid;
    let c = Closure::for_tag(u.bc_tag);
    let ux = derivative(u, Axis::X, 1, c)?;
    let uxx = derivative(u, Axis::X, 2, c)?;
    let uyy = derivative(u, Axis::Y, 2, c)?;
    let uzz_l2 = if g.spec.d == 2 {
        norm(&derivative(u, Axis::Z, 2, c)?, Weight::One)
    } else {
        0.0
    };
    let l2 = norm(u, Weight::One);
    let ux_l2 = norm(&ux, Weight::One);
    let uxx_l2 = norm(&uxx, Weight::One);
    let uyy_l2 = norm(&uyy, Weight::One);
    let diff = state.time_difference();
    let ut = ut.or(diff.as_ref());
    let (ut_l2, ut_weighted, grad_ut_l2) = match ut {
        Some(v) => (
            Some(norm(v, Weight::One)),
            Some(norm(v, Weight::OnePlusX)),
            Some(grad_norm(v)?),
        ),
        None => (None, None, None),
    };
    let f = forcing_eval(&params.forcing, g, state.t, ForcingComponent::F)?;
    let ft = forcing_eval(&params.forcing, g, state.t, ForcingComponent::Ft)?;
    Ok(DiagnosticsRecord {
        t: state.t,
        l2,
        l2_weighted_x: norm(u, Weight::X),
        l2_weighted_1px: norm(u, Weight::OnePlusX),
        ux_l2,
        grad_l2: grad_norm(u)?,
        uxx_l2,
        uyy_l2,
        uzz_l2,
        xi_norm: (uxx_l2.powi(2) + uyy_l2.powi(2) + uzz_l2.powi(2)).sqrt(),
        trace_ux0: transverse_norm(g, &x_trace(u, XEnd::Left, 1)),
        trace_uxx1: transverse_norm(g, &x_trace(u, XEnd::Right, 2)),
        ut_l2,
        ut_weighted,
        grad_ut_l2,
        sigma: ux_l2 + l2,
        nonlin_l2: norm(&u.mul(&ux), Weight::One),
        f_l2: norm(&f, Weight::One),
        ft_l2: norm(&ft, Weight::One),
    })
}

/// `f^2 + c' nu^2 + c' nu^6 + u0x^2`.
pub fn kappa(nu: f64, f_sup_l2: f64, u0x_l2: f64, c_prime: f64) -> Result<f64> {
    for (name, v) in [
        ("nu", nu),
        ("f_sup_l2", f_sup_l2),
        ("u0x_l2", u0x_l2),
        ("c_prime", c_prime),
    ] {
        if !(v >= 0.0) {
            return Err(ZkError::InvalidArgument(format!("{name} must be >= 0, got {v}")));
        }
    }
    Ok(f_sup_l2.powi(2) + c_prime * nu.powi(2) + c_prime * nu.powi(6) + u0x_l2.powi(2))
}

/// `u_t(0) = f(0) - A u0 - u0 u0_x - eps L u0`.
pub fn initial_time_derivative(u0: &Field, params: &ModelParams) -> Result<Field> {
    rhs(u0, 0.0, params)
}

/// `(|u_t(0)|, |L u0| + |A u0 + u0 u0_x - f(0)|)`: the norm of the initial
/// time derivative and its epsilon-free bound (valid for `eps <= 1`).
pub fn initial_time_derivative_bound(u0: &Field, params: &ModelParams) -> Result<(f64, f64)> {
    let ut0 = initial_time_derivative(u0, params)?;
    let limit = ModelParams {
        epsilon: 0.0,
        ..params.clone()
    };
    let rest = rhs(u0, 0.0, &limit)?;
    let l = crate::operators::op_l(u0)?;
    Ok((
        norm(&ut0, Weight::One),
        norm(&l, Weight::One) + norm(&rest, Weight::One),
    ))
}

/// `c3 / mu^4`.
pub fn existence_time(mu: f64, c3: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(ZkError::InvalidArgument(format!("mu must be > 0, got {mu}")));
    }
    if !(c3 > 0.0) {
        return Err(ZkError::InvalidArgument(format!("c3 must be > 0, got {c3}")));
    }
    Ok(c3 / mu.powi(4))
}

/// `min(T, T1)`.
pub fn horizon(t_end: f64, t1: f64) -> f64 {
    t_end.min(t1)
}

/// Outcome of [`gronwall_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    /// `3 / (8 c2 mu0^4)`.
    pub t_star: f64,
    /// First time at which `dY/dt <= c2 Y^3` fails, if any.
    pub derivative_violation: Option<f64>,
    /// First time `t <= t_star` at which `Y <= 2 mu0^2` fails, if any.
    pub bound_violation: Option<f64>,
    /// `max Y / (2 mu0^2)` over samples with `t <= t_star`.
    pub max_bound_ratio: f64,
    /// `|Y(t_star) - 2 mu0^2|` interpolated from the samples, when the series
    /// reaches `t_star`.
    pub residual_at_t_star: Option<f64>,
    pub passed: bool,
}

impl GronwallReport {
    pub fn first_violation(&self) -> Option<f64> {
        match (self.derivative_violation, self.bound_violation) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Checks `dY/dt <= c2 Y^3` on every sampling interval (with relative
/// slack, against the larger endpoint value) and `Y <= 2 mu0^2` up to
/// `t_star = 3 / (8 c2 mu0^4)`.
pub fn gronwall_check(t: &[f64], y: &[f64], c2: f64, mu0: f64, slack: f64) -> Result<GronwallReport> {
    if t.is_empty() || t.len() != y.len() {
        return Err(ZkError::InvalidArgument("empty or ragged Y series".into()));
    }
    if !(c2 > 0.0 && mu0 > 0.0) {
        return Err(ZkError::InvalidArgument("c2 and mu0 must be > 0".into()));
    }
    let t_star = 3.0 / (8.0 * c2 * mu0.powi(4));
    let bound = 2.0 * mu0 * mu0;
    let mut derivative_violation = None;
    for i in 0..t.len().saturating_sub(1) {
        let dt = t[i + 1] - t[i];
        if dt <= 0.0 {
            return Err(ZkError::InvalidArgument("time samples must increase".into()));
        }
        let rate = (y[i + 1] - y[i]) / dt;
        let cap = c2 * (1.0 + slack) * y[i].max(y[i + 1]).powi(3);
        if rate > cap {
            derivative_violation = Some(t[i + 1]);
            break;
        }
    }
    let mut bound_violation = None;
    let mut max_ratio = 0.0_f64;
    for (&ti, &yi) in t.iter().zip(y) {
        if ti > t_star * (1.0 + 1e-12) {
            break;
        }
        max_ratio = max_ratio.max(yi / bound);
        if yi > bound * (1.0 + slack) && bound_violation.is_none() {
            bound_violation = Some(ti);
        }
    }
    let residual_at_t_star = t.windows(2).zip(y.windows(2)).find_map(|(tw, yw)| {
        (tw[0] <= t_star && t_star <= tw[1]).then(|| {
            let s = (t_star - tw[0]) / (tw[1] - tw[0]);
            ((1.0 - s) * yw[0] + s * yw[1] - bound).abs()
        })
    });
    Ok(GronwallReport {
        t_star,
        derivative_violation,
        bound_violation,
        max_bound_ratio: max_ratio,
        residual_at_t_star,
        passed: derivative_violation.is_none() && bound_violation.is_none(),
    })
}

/// `Y(t) = mu0^2 (1 - 2 c2 mu0^4 t)^{-1/2}`, the solution of `Y' = c2 Y^3`.
pub fn extremal_series(mu0: f64, c2: f64, t: f64) -> f64 {
    mu0 * mu0 / (1.0 - 2.0 * c2 * mu0.powi(4) * t).sqrt()
}

/// `Y = |sqrt(1+x) u_t|^2 + 1` from records that carry `u_t`.
pub fn y_series(records: &[DiagnosticsRecord]) -> (Vec<f64>, Vec<f64>) {
    records
        .iter()
        .filter_map(|r| r.ut_weighted.map(|w| (r.t, w * w + 1.0)))
        .unzip()
}

/// Least-squares fit of `log(dY/dt) = log c2 + 3 log Y` with the slope held
/// at 3, over intervals where `Y` increases.
pub fn fit_c2(t: &[f64], y: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..t.len().saturating_sub(1) {
        let dy = y[i + 1] - y[i];
        let dt = t[i + 1] - t[i];
        if dy > 0.0 && dt > 0.0 {
            let ym = 0.5 * (y[i] + y[i + 1]);
            acc += (dy / dt).ln() - 3.0 * ym.ln();
            count += 1;
        }
    }
    (count > 0).then(|| (acc / count as f64).exp())
}

/// Constants of the local existence argument, as functions of `c'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConstants {
    pub c_prime: f64,
    /// `max_t |u|` over the records.
    pub nu: f64,
    pub f_sup: f64,
    pub ft_sup: f64,
    pub u0x: f64,
    pub kappa: f64,
    /// `sqrt(Y(0))`.
    pub mu0: f64,
    /// `mu0 + sqrt(kappa)`.
    pub mu: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    /// `c3 / mu^4`.
    pub t1: Option<f64>,
}

/// Estimates the constants from a trajectory's records.
pub fn estimate_constants(records: &[DiagnosticsRecord], c_prime: f64) -> Result<EstimateConstants> {
    let first = records
        .first()
        .ok_or_else(|| ZkError::InvalidArgument("no records".into()))?;
    let nu = records.iter().fold(0.0_f64, |m, r| m.max(r.l2));
    let f_sup = records.iter().fold(0.0_f64, |m, r| m.max(r.f_l2));
    let ft_sup = records.iter().fold(0.0_f64, |m, r| m.max(r.ft_l2));
    let u0x = first.ux_l2;
    let kappa = kappa(nu, f_sup, u0x, c_prime)?;
    let y0 = first.ut_weighted.map_or(1.0, |w| w * w + 1.0);
    let mu0 = y0.sqrt();
    let mu = mu0 + kappa.sqrt();
    let (ts, ys) = y_series(records);
    let c2 = fit_c2(&ts, &ys);
    let c1 = c2.map(|c| c - ft_sup * ft_sup);
    let c3 = c2.map(|c| 3.0 * mu.powi(4) / (8.0 * c * mu0.powi(4)));
    let t1 = c3.map(|c| c / mu.powi(4));
    Ok(EstimateConstants {
        c_prime,
        nu,
        f_sup,
        ft_sup,
        u0x,
        kappa,
        mu0,
        mu,
        c1,
        c2,
        c3,
        t1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UxBoundFailure {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of [`ux_bound_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UxBoundReport {
    pub checked: usize,
    pub failures: Vec<UxBoundFailure>,
    /// Smallest `c'` for which every record passes.
    pub c_prime_min: f64,
}

/// Checks `|u_x|^2 <= |u_t|^2 + kappa` on every record carrying `u_t`, with
/// `nu` the running maximum of `|u|`, `|f|` its sup over the records and
/// `|u_0x|` taken from the first record.
pub fn ux_bound_check(records: &[DiagnosticsRecord], c_prime: f64) -> Result<UxBoundReport> {
    let first = records
        .first()
        .ok_or_else(|| ZkError::InvalidArgument("no records".into()))?;
    let u0x = first.ux_l2;
    let f_sup = records.iter().fold(0.0_f64, |m, r| m.max(r.f_l2));
    let mut nu = 0.0_f64;
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut c_min = 0.0_f64;
    for r in records {
        nu = nu.max(r.l2);
        let Some(ut) = r.ut_l2 else { continue };
        checked += 1;
        let lhs = r.ux_l2.powi(2);
        let rhs = ut * ut + kappa(nu, f_sup, u0x, c_prime)?;
        if lhs > rhs {
            failures.push(UxBoundFailure { t: r.t, lhs, rhs });
        }
        let free = lhs - ut * ut - f_sup * f_sup - u0x * u0x;
        if free > 0.0 {
            let w = nu.powi(2) + nu.powi(6);
            c_min = c_min.max(if w > 0.0 { free / w } else { f64::INFINITY });
        }
    }
    Ok(UxBoundReport {
        checked,
        failures,
        c_prime_min: c_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, sample, GridSpec, TransverseBc};
    use crate::model::poly;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(0.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(kappa(1.0, 2.0, 3f64.sqrt(), 1.0).unwrap(), 9.0, epsilon = 1e-14);
        assert_eq!(kappa(2.0, 0.0, 0.0, 1.0).unwrap(), 68.0);
        assert!(kappa(-1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn existence_time_examples() {
        assert_eq!(existence_time(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(existence_time(2.0, 2.0).unwrap(), 0.125);
        assert_abs_diff_eq!(existence_time(10.0, 1.0).unwrap(), 1e-4, epsilon = 1e-18);
        assert!(existence_time(0.0, 1.0).is_err());
        assert_eq!(horizon(2.0, 0.5), 0.5);
    }

    #[test]
    fn zero_field_record_is_zero() {
        let g = make_grid(GridSpec::new(1, 16, 8, 0, TransverseBc::Dirichlet)).unwrap();
        let p = ModelParams::new(1.0, 0.0);
        let s = SolverState::new(&Field::zeros(&g), &p, 1e-3);
        let z = Field::zeros(&g);
        let r = record(&s, &p, Some(&z)).unwrap();
        for v in r.values().iter().skip(1) {
            assert_eq!(*v, Some(0.0));
        }
    }

    #[test]
    fn record_of_polynomial_profile() {
        // periodic walls so that a y-constant profile is representable
        let g = make_grid(GridSpec::new(1, 256, 8, 0, TransverseBc::Periodic)).unwrap();
        let u = sample(&g, |x, _, _| poly::x0(x)).unwrap();
        let p = ModelParams::new(1.0, 0.0);
        let s = SolverState {
            t: 0.0,
            u,
            u_prev: None,
            dt: 1e-3,
            dt_prev: 0.0,
            nl_prev: None,
            step_index: 0,
        };
        let r = record(&s, &p, None).unwrap();
        let exact = PI * (1.0 / 7.0 - 4.0 / 8.0 + 6.0 / 9.0 - 4.0 / 10.0 + 1.0 / 11.0);
        assert_abs_diff_eq!(r.l2 * r.l2, exact, epsilon = 1e-7);
        assert_eq!(r.ut_l2, None);
        assert_abs_diff_eq!(
            r.xi_norm.powi(2),
            r.uxx_l2.powi(2) + r.uyy_l2.powi(2) + r.uzz_l2.powi(2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cosine_mode_has_equal_l2_and_uyy() {
        let g = make_grid(GridSpec::new(1, 32, 12, 0, TransverseBc::Dirichlet)).unwrap();
        let u = sample(&g, |x, y, _| y.cos() * x * (1.0 - x).powi(2)).unwrap();
        let s = SolverState {
            t: 0.0,
            u,
            u_prev: None,
            dt: 1e-3,
            dt_prev: 0.0,
            nl_prev: None,
            step_index: 0,
        };
        let r = record(&s, &ModelParams::new(1.0, 0.0), None).unwrap();
        assert_abs_diff_eq!(r.uyy_l2, r.l2, epsilon = 1e-12);
    }

    #[test]
    fn gronwall_constant_series_passes() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let y = vec![1.0; 100];
        let r = gronwall_check(&t, &y, 1.0, 1.0, 1e-9).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn gronwall_extremal_series_meets_bound_at_t_star() {
        let n = 10_000;
        let t: Vec<f64> = (0..=n).map(|i| 0.375 * i as f64 / n as f64).collect();
        let y: Vec<f64> = t.iter().map(|&s| extremal_series(1.0, 1.0, s)).collect();
        let r = gronwall_check(&t, &y, 1.0, 1.0, 1e-9).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.residual_at_t_star.unwrap() <= 1e-6);
    }

    #[test]
    fn gronwall_reports_first_violation() {
        let n = 1000;
        let t: Vec<f64> = (0..=n).map(|i| 0.375 * i as f64 / n as f64).collect();
        let jump = 1.0 / 8.0;
        let y: Vec<f64> = t
            .iter()
            .map(|&s| {
                if s >= jump - 1e-12 {
                    3.0
                } else {
                    extremal_series(1.0, 1.0, s)
                }
            })
            .collect();
        let r = gronwall_check(&t, &y, 1.0, 1.0, 1e-9).unwrap();
        assert!(!r.passed);
        let first = r.first_violation().unwrap();
        let expected = *t.iter().find(|&&s| s >= jump - 1e-12).unwrap();
        assert_eq!(first, expected);
        assert!(gronwall_check(&[], &[], 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn c2_fit_recovers_ode_constant() {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 1e-4).collect();
        let y: Vec<f64> = t.iter().map(|&s| extremal_series(1.0, 2.0, s)).collect();
        let c2 = fit_c2(&t, &y).unwrap();
        assert!((c2 - 2.0).abs() < 1e-3, "{c2}");
    }

    #[test]
    fn ux_bound_with_no_gradient_has_no_failures() {
        let r = DiagnosticsRecord {
            ut_l2: Some(0.0),
            ..Default::default()
        };
        let rep = ux_bound_check(&[r.clone(), r], 1.0).unwrap();
        assert_eq!(rep.checked, 2);
        assert!(rep.failures.is_empty());
    }

    #[test]
    fn initial_time_derivative_bound_dominates() {
        let g = make_grid(GridSpec::new(1, 64, 8, 0, TransverseBc::Dirichlet)).unwrap();
        let u0 = crate::model::initial_data("poly-bump", 2.0, &g)
            .unwrap()
            .with_tag(crate::geometry::BcTag::ZkRegularized);
        let (n, b) = initial_time_derivative_bound(&u0, &ModelParams::new(1.0, 0.25)).unwrap();
        assert!(n <= b);
    }
}
