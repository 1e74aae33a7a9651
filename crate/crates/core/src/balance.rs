//! Multiplier identities evaluated on discrete states.
//!
//! Energy balances are per-interval residuals of the identities obtained by
//! multiplying the equation by `u`, `x u`, `(1+x) u_t`, `(1+x) u_yy` and
//! `(1+x) u_yyyy`. The `u` balance uses the summation-by-parts forms of the
//! stepper and is exact for the linear Crank–Nicolson scheme; the others are
//! assembled from pointwise operators and are consistent to `O(h^2 + dt^2)`.
//!
//! The x-slice identities hold per transverse point for
//! `u_xxx + u u_x + eps u_xxxx = g` with
//! `g = -u_t - Delta_perp u_x - c u_x - eps u_yyyy - eps u_zzzz + f`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::geometry::{BcTag, Field};
use crate::model::{forcing_eval, ForcingComponent, ModelParams};
use crate::operators::{
    derivative, inner, integrate, norm, transverse_laplacian, transverse_norm, x_trace, Axis, Closure, Weight, XEnd,
};
use crate::sbp::SbpX;
use crate::stepper::StateSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceKind {
    U,
    Xu,
    OnePxUt,
    OnePxUyy,
    OnePxUyyyy,
}

impl std::str::FromStr for BalanceKind {
    type Err = ZkError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "u" => BalanceKind::U,
            "xu" => BalanceKind::Xu,
            "one_px_ut" => BalanceKind::OnePxUt,
            "one_px_uyy" => BalanceKind::OnePxUyy,
            "one_px_uyyyy" => BalanceKind::OnePxUyyyy,
            other => return Err(ZkError::InvalidArgument(format!("unknown balance kind {other}"))),
        })
    }
}

fn d(u: &Field, axis: Axis, order: usize) -> Result<Field> {
    derivative(u, axis, order, Closure::for_tag(u.bc_tag))
}

fn sq(u: &Field, w: Weight) -> f64 {
    norm(u, w).powi(2)
}

/// `|| trace ||^2` over the transverse section.
fn trace_sq(u: &Field, end: XEnd, order: usize) -> f64 {
    transverse_norm(&u.grid, &x_trace(u, end, order)).powi(2)
}

fn midpoint(a: &Field, b: &Field, tag: BcTag) -> Field {
    a.add(b).scale(0.5).with_tag(tag)
}

/// SBP terms of the `u` balance at `ub`: flux `(D u)_0^2` and `|D2 u|_H^2`,
/// both integrated over the transverse section.
fn sbp_terms(ub: &Field) -> (f64, f64) {
    let g = &ub.grid;
    let sbp = SbpX::new(g.nx());
    let (_, ny, nz) = g.shape();
    let mut flux = 0.0;
    let mut dd = 0.0;
    for j in 0..ny {
        for k in 0..nz {
            let col: Vec<f64> = ub.values.slice(ndarray::s![.., j, k]).to_vec();
            let w = g.transverse_weight(j, k);
            flux += w * sbp.flux0(&col).powi(2);
            dd += w * sbp.d2_norm2(&col);
        }
    }
    (flux, dd)
}

fn transverse_sq(u: &Field, order: usize, w: Weight) -> Result<f64> {
    let mut s = sq(&derivative(u, Axis::Y, order, Closure::InteriorOnly)?, w);
    if u.grid.spec.d == 2 {
        s += sq(&derivative(u, Axis::Z, order, Closure::InteriorOnly)?, w);
    }
    Ok(s)
}

/// Signed per-interval residuals of the chosen balance (per middle state for
/// `OnePxUt`). `theta` locates the forcing evaluation inside each interval.
pub fn energy_balance_residual(
    states: &[StateSample],
    params: &ModelParams,
    theta: f64,
    kind: BalanceKind,
) -> Result<Vec<f64>> {
    let need = if kind == BalanceKind::OnePxUt { 3 } else { 2 };
    if states.len() < need {
        return Err(ZkError::InvalidArgument(format!(
            "balance {kind:?} needs at least {need} states, got {}",
            states.len()
        )));
    }
    let tag = params.bc_tag();
    let eps = params.epsilon;
    let c = params.c;
    let mut out = Vec::with_capacity(states.len());
    if kind == BalanceKind::OnePxUt {
        for w in states.windows(3) {
            out.push(balance_ut(&w[0], &w[1], &w[2], params)?);
        }
        return Ok(out);
    }
    for w in states.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) {
            return Err(ZkError::InvalidArgument(
                "states must be strictly increasing in t".into(),
            ));
        }
        let ub = midpoint(&a.u, &b.u, tag);
        let f = forcing_eval(&params.forcing, &ub.grid, a.t + theta * dt, ForcingComponent::F)?;
        let r = match kind {
            BalanceKind::U => {
                let time = 0.5 * (sq(&b.u, Weight::One) - sq(&a.u, Weight::One)) / dt;
                let (flux, dd) = sbp_terms(&ub);
                let reg = if eps > 0.0 {
                    eps * (dd + transverse_sq(&ub, 2, Weight::One)?)
                } else {
                    0.0
                };
                time + 0.5 * flux + reg - inner(&f, &ub, Weight::One)
            }
            BalanceKind::Xu => {
                let time = 0.5 * (sq(&b.u, Weight::X) - sq(&a.u, Weight::X)) / dt;
                let ux = d(&ub, Axis::X, 1)?;
                let grad_perp = transverse_sq(&ub, 1, Weight::One)?;
                let cubic = if params.nonlinear {
                    integrate(&ub.mul(&ub).mul(&ub), Weight::One) / 3.0
                } else {
                    0.0
                };
                let reg = if eps > 0.0 {
                    eps * (sq(&d(&ub, Axis::X, 2)?, Weight::X) - trace_sq(&ub, XEnd::Left, 1)
                        + transverse_sq(&ub, 2, Weight::X)?)
                } else {
                    0.0
                };
                time + 1.5 * sq(&ux, Weight::One) + 0.5 * grad_perp - 0.5 * c * sq(&ub, Weight::One) - cubic + reg
                    - inner(&f, &ub, Weight::X)
            }
            BalanceKind::OnePxUyy => {
                let time = -0.5
                    * (sq(&d(&b.u, Axis::Y, 1)?, Weight::OnePlusX) - sq(&d(&a.u, Axis::Y, 1)?, Weight::OnePlusX))
                    / dt;
                time - y_multiplier_terms(&ub, 1, c, eps)? + nonlinear_against(&ub, &d(&ub, Axis::Y, 2)?, params)
                    - inner(&f, &d(&ub, Axis::Y, 2)?, Weight::OnePlusX)
            }
            BalanceKind::OnePxUyyyy => {
                let time = 0.5
                    * (sq(&d(&b.u, Axis::Y, 2)?, Weight::OnePlusX) - sq(&d(&a.u, Axis::Y, 2)?, Weight::OnePlusX))
                    / dt;
                let uyyyy = d(&ub, Axis::Y, 4)?;
                time + y_multiplier_terms(&ub, 2, c, eps)? + nonlinear_against(&ub, &uyyyy, params)
                    - inner(&f, &uyyyy, Weight::OnePlusX)
            }
            BalanceKind::OnePxUt => unreachable!(),
        };
        out.push(r);
    }
    Ok(out)
}

/// Running time integral `sum_k dt_k r_k` of per-interval residuals: the
/// accumulated defect of the integrated balance at each state after the
/// first.
pub fn cumulative_defect(states: &[StateSample], residuals: &[f64]) -> Result<Vec<f64>> {
    if residuals.len() + 1 != states.len() {
        return Err(ZkError::InvalidArgument(format!(
            "{} residuals for {} states",
            residuals.len(),
            states.len()
        )));
    }
    let mut acc = 0.0;
    Ok(states
        .windows(2)
        .zip(residuals)
        .map(|(w, r)| {
            acc += (w[1].t - w[0].t) * r;
            acc
        })
        .collect())
}

/// Linear terms of the `(1+x) w` multiplier, `w = d_y^m u`, applied to the
/// equation for `w`:
/// `(3/2)|w_x|^2 + (1/2)|w_x(0)|^2 + (1/2)|grad_perp w|^2 - (c/2)|w|^2
/// + eps (|sqrt(1+x) w_xx|^2 - |w_x(0)|^2 + |sqrt(1+x) w_yy|^2 + |sqrt(1+x) w_zz|^2)`.
///
/// Transverse derivatives of `w` are taken from `u` directly, since odd
/// y derivatives leave the Dirichlet basis.
fn y_multiplier_terms(u: &Field, m: usize, c: f64, eps: f64) -> Result<f64> {
    let tag = u.bc_tag;
    let cl = Closure::InteriorOnly;
    let w = derivative(u, Axis::Y, m, cl)?.with_tag(tag);
    let wx = d(&w, Axis::X, 1)?;
    let flux = trace_sq(&w, XEnd::Left, 1);
    let d2 = u.grid.spec.d == 2;
    let mut perp1 = sq(&derivative(u, Axis::Y, m + 1, cl)?, Weight::One);
    let mut perp2 = sq(&derivative(u, Axis::Y, m + 2, cl)?, Weight::OnePlusX);
    if d2 {
        perp1 += sq(&derivative(&w, Axis::Z, 1, cl)?, Weight::One);
        perp2 += sq(&derivative(&w, Axis::Z, 2, cl)?, Weight::OnePlusX);
    }
    let mut s = 1.5 * sq(&wx, Weight::One) + 0.5 * flux + 0.5 * perp1 - 0.5 * c * sq(&w, Weight::One);
    if eps > 0.0 {
        s += eps * (sq(&d(&w, Axis::X, 2)?, Weight::OnePlusX) - flux + perp2);
    }
    Ok(s)
}

/// `int (1+x) u u_x m`.
fn nonlinear_against(u: &Field, m: &Field, params: &ModelParams) -> f64 {
    if !params.nonlinear {
        return 0.0;
    }
    let ux = derivative(u, Axis::X, 1, Closure::OneSided).expect("x derivative");
    inner(&u.mul(&ux), m, Weight::OnePlusX)
}

/// Residual of the `(1+x) u_t` balance at the middle of three states.
fn balance_ut(a: &StateSample, b: &StateSample, c3: &StateSample, params: &ModelParams) -> Result<f64> {
    let (dm, dp) = (b.t - a.t, c3.t - b.t);
    if !(dm > 0.0 && dp > 0.0) {
        return Err(ZkError::InvalidArgument(
            "states must be strictly increasing in t".into(),
        ));
    }
    let tag = params.bc_tag();
    let vm = b.u.sub(&a.u).scale(1.0 / dm).with_tag(tag);
    let vp = c3.u.sub(&b.u).scale(1.0 / dp).with_tag(tag);
    let time = 0.5 * (sq(&vp, Weight::OnePlusX) - sq(&vm, Weight::OnePlusX)) / (0.5 * (dm + dp));
    let v = midpoint(&vm, &vp, tag);
    let u = b.u.clone().with_tag(tag);
    let mut r = time + y_multiplier_terms(&v, 0, params.c, params.epsilon)?;
    if params.nonlinear {
        let ux = d(&u, Axis::X, 1)?;
        let v2 = v.mul(&v);
        r += 0.5 * inner(&ux, &v2, Weight::OnePlusX) - 0.5 * inner(&u, &v2, Weight::One);
    }
    let ft = forcing_eval(&params.forcing, &u.grid, b.t, ForcingComponent::Ft)?;
    Ok(r - inner(&ft, &v, Weight::OnePlusX))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    BalanceU,
    BalanceXu,
    Balance1pxUt,
    Balance1pxUyy,
    Balance1pxUyyyy,
    EqXMoment,
    EqPartialIntegral,
    UxxInequality,
}

impl From<BalanceKind> for IdentityId {
    fn from(k: BalanceKind) -> Self {
        match k {
            BalanceKind::U => IdentityId::BalanceU,
            BalanceKind::Xu => IdentityId::BalanceXu,
            BalanceKind::OnePxUt => IdentityId::Balance1pxUt,
            BalanceKind::OnePxUyy => IdentityId::Balance1pxUyy,
            BalanceKind::OnePxUyyyy => IdentityId::Balance1pxUyyyy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub id: IdentityId,
    /// Max-abs residual over transverse points (or intervals).
    pub residual: f64,
    /// `nx` of the grid.
    pub resolution: usize,
    pub tolerance: f64,
    pub passed: bool,
    pub xtilde: Option<f64>,
    /// Smallest constant for which the inequality holds.
    pub c_prime_min: Option<f64>,
}

/// Relative size below which an inequality excess is rounding noise.
const ROUNDOFF: f64 = 1e-12;

/// Value at `xt` of the piecewise-linear interpolant of `v` on `0..=n`.
fn interp(v: &[f64], n: usize, xt: f64) -> f64 {
    let s = xt * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let a = s - i as f64;
    (1.0 - a) * v[i] + a * v[i + 1]
}

/// `int_{xt}^1` of the piecewise-linear interpolant of `v`.
fn tail_integral(v: &[f64], n: usize, xt: f64) -> f64 {
    let h = 1.0 / n as f64;
    let s = xt * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let vt = interp(v, n, xt);
    let mut acc = 0.5 * (vt + v[i + 1]) * ((i + 1) as f64 * h - xt);
    for m in i + 1..n {
        acc += 0.5 * (v[m] + v[m + 1]) * h;
    }
    acc
}

/// Residuals of the x-moment identity, the partial-integral identity at
/// `xtilde` and the `u_xx` inequality with constant `c_prime`.
///
/// `ut` is the time derivative at the same instant (zero for steady fields).
pub fn identity_residuals(
    u: &Field,
    ut: &Field,
    f: &Field,
    params: &ModelParams,
    xtilde: f64,
    c_prime: f64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    if !(xtilde > 0.0 && xtilde <= 1.0) {
        return Err(ZkError::InvalidArgument(format!(
            "xtilde must lie in (0, 1], got {xtilde}"
        )));
    }
    u.check_same_grid(ut)?;
    u.check_same_grid(f)?;
    let g = &u.grid;
    let n = g.nx();
    let h = g.hx;
    let eps = params.epsilon;
    let cl = Closure::OneSided;
    let ux = derivative(u, Axis::X, 1, cl)?;
    let uxx = derivative(u, Axis::X, 2, cl)?;
    let uxxx = derivative(u, Axis::X, 3, cl)?;
    let mut gf = f.sub(ut).sub(&transverse_laplacian(&ux)?).sub(&ux.scale(params.c));
    if eps > 0.0 {
        let mut l4 = derivative(u, Axis::Y, 4, cl)?;
        if g.spec.d == 2 {
            l4 = l4.add(&derivative(u, Axis::Z, 4, cl)?);
        }
        gf = gf.sub(&l4.scale(eps));
    }
    let ux0 = x_trace(u, XEnd::Left, 1);
    let uxx1 = x_trace(u, XEnd::Right, 2);
    let uxxx1 = x_trace(u, XEnd::Right, 3);
    let (_, ny, nz) = g.shape();
    let xw = g.x_weights();
    let nl = if params.nonlinear { 1.0 } else { 0.0 };
    let mut r_moment = 0.0_f64;
    let mut r_partial = 0.0_f64;
    // (left - |h|^2 / 2, eps u_x(0)^2, left + |h|^2 / 2) per column.
    let mut ineq = Vec::with_capacity(ny * nz);
    for j in 0..ny {
        for k in 0..nz {
            let col = |fld: &Field| -> Vec<f64> { fld.values.slice(ndarray::s![.., j, k]).to_vec() };
            let (uc, uxxc, uxxxc, gc) = (col(u), col(&uxx), col(&uxxx), col(&gf));
            let int_u2: f64 = (0..=n).map(|i| xw[i] * uc[i] * uc[i]).sum();
            let int_gx: f64 = (0..=n).map(|i| xw[i] * gc[i] * g.x_nodes[i]).sum();
            let (a0, b1, c1) = (ux0[[j, k]], uxx1[[j, k]], uxxx1[[j, k]]);
            let lhs = a0 + b1 - 0.5 * nl * int_u2 - eps * b1 + eps * c1;
            r_moment = r_moment.max((lhs - int_gx).abs());
            let lhs_p = b1 - interp(&uxxc, n, xtilde) - 0.5 * nl * interp(&uc, n, xtilde).powi(2) + eps * c1
                - eps * interp(&uxxxc, n, xtilde);
            r_partial = r_partial.max((lhs_p - tail_integral(&gc, n, xtilde)).abs());
            // h(x) = -u_x(0) + (1/2) int u^2 - (1/2) u^2 + int g x - int_x^1 g
            let hx: Vec<f64> = (0..=n)
                .map(|i| {
                    let tail = if i == n {
                        0.0
                    } else {
                        tail_integral(&gc, n, i as f64 * h)
                    };
                    -a0 + nl * (0.5 * int_u2 - 0.5 * uc[i] * uc[i]) + int_gx - tail
                })
                .collect();
            let h2: f64 = (0..=n).map(|i| xw[i] * hx[i] * hx[i]).sum();
            let uxx2: f64 = (0..=n).map(|i| xw[i] * uxxc[i] * uxxc[i]).sum();
            let left = 0.5 * uxx2 + 0.25 * eps * b1 * b1;
            ineq.push((left - 0.5 * h2, eps * a0 * a0, left + 0.5 * h2));
        }
    }
    // Excesses below rounding of the largest column (e.g. on transverse walls,
    // where the field vanishes) are not violations.
    let floor = ROUNDOFF * ineq.iter().fold(0.0_f64, |m, v| m.max(v.2));
    let mut c_min = 0.0_f64;
    let mut ineq_excess = 0.0_f64;
    for &(free, w, _) in &ineq {
        let excess = free - c_prime * w;
        if excess > floor {
            ineq_excess = ineq_excess.max(excess);
        }
        if free > floor {
            c_min = c_min.max(if w > 0.0 { free / w } else { f64::INFINITY });
        }
    }
    Ok(vec![
        IdentityReport {
            id: IdentityId::EqXMoment,
            residual: r_moment,
            resolution: n,
            tolerance: tol,
            passed: r_moment <= tol,
            xtilde: None,
            c_prime_min: None,
        },
        IdentityReport {
            id: IdentityId::EqPartialIntegral,
            residual: r_partial,
            resolution: n,
            tolerance: tol,
            passed: r_partial <= tol,
            xtilde: Some(xtilde),
            c_prime_min: None,
        },
        IdentityReport {
            id: IdentityId::UxxInequality,
            residual: ineq_excess.max(0.0),
            resolution: n,
            tolerance: 0.0,
            passed: ineq_excess <= 0.0,
            xtilde: None,
            c_prime_min: Some(c_min),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, GridSpec, TransverseBc};
    use crate::model::{manufactured_forcing, ManufacturedSolution};
    use approx::assert_abs_diff_eq;

    fn exact_states(nx: usize, eps: f64, kind_dt: f64, n: usize) -> (Vec<StateSample>, ModelParams) {
        let g = make_grid(GridSpec::new(1, nx, 8, 0, TransverseBc::Dirichlet)).unwrap();
        let ex = ManufacturedSolution::preset("poly-decay", 1.0, 1, TransverseBc::Dirichlet).unwrap();
        let p = ModelParams::new(1.0, eps);
        let p = p.clone().with_forcing(manufactured_forcing(&ex, &p));
        let states = (0..n)
            .map(|i| {
                let t = i as f64 * kind_dt;
                StateSample {
                    t,
                    u: ex.sample(&g, t).unwrap(),
                }
            })
            .collect();
        (states, p)
    }

    #[test]
    fn interpolation_helpers() {
        let v: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        assert_abs_diff_eq!(interp(&v, 4, 0.3), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(tail_integral(&v, 4, 0.3), 0.5 * (1.0 - 0.09), epsilon = 1e-15);
        assert_abs_diff_eq!(tail_integral(&v, 4, 1.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_trajectory_has_zero_residuals() {
        let g = make_grid(GridSpec::new(1, 16, 8, 0, TransverseBc::Dirichlet)).unwrap();
        let states: Vec<StateSample> = (0..4)
            .map(|i| StateSample {
                t: i as f64 * 0.1,
                u: Field::zeros(&g),
            })
            .collect();
        let p = ModelParams::new(1.0, 0.01);
        for kind in [
            BalanceKind::U,
            BalanceKind::Xu,
            BalanceKind::OnePxUt,
            BalanceKind::OnePxUyy,
            BalanceKind::OnePxUyyyy,
        ] {
            let r = energy_balance_residual(&states, &p, 0.5, kind).unwrap();
            assert!(r.iter().all(|v| *v == 0.0), "{kind:?}");
            if kind != BalanceKind::OnePxUt {
                assert!(cumulative_defect(&states, &r).unwrap().iter().all(|v| *v == 0.0));
            }
        }
        assert!(energy_balance_residual(&states[..1], &p, 0.5, BalanceKind::U).is_err());
    }

    #[test]
    fn pointwise_balances_converge_on_exact_trajectories() {
        for kind in [
            BalanceKind::Xu,
            BalanceKind::OnePxUt,
            BalanceKind::OnePxUyy,
            BalanceKind::OnePxUyyyy,
        ] {
            let mut prev = None;
            for nx in [32, 64, 128] {
                let dt = 1.0 / nx as f64;
                let (s, p) = exact_states(nx, 0.01, dt, 4);
                let r = energy_balance_residual(&s, &p, 0.5, kind).unwrap();
                let m = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if let Some(q) = prev {
                    assert!(q / m > 3.0, "{kind:?} ratio {}", q / m);
                }
                prev = Some(m);
            }
        }
    }

    #[test]
    fn identities_vanish_for_zero_field() {
        let g = make_grid(GridSpec::new(1, 16, 8, 0, TransverseBc::Dirichlet)).unwrap();
        let z = Field::zeros(&g);
        let rep = identity_residuals(&z, &z, &z, &ModelParams::new(1.0, 0.01), 0.5, 1.0, 1e-12).unwrap();
        assert!(rep.iter().all(|r| r.passed && r.residual == 0.0));
        assert!(identity_residuals(&z, &z, &z, &ModelParams::new(1.0, 0.01), 0.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn partial_identity_at_right_end_is_boundary_only() {
        let (s, p) = exact_states(64, 0.01, 0.1, 1);
        let u = &s[0].u;
        let ut = ManufacturedSolution::preset("poly-decay", 1.0, 1, TransverseBc::Dirichlet)
            .unwrap()
            .sample_t(&u.grid, 0.0)
            .unwrap();
        let f = forcing_eval(&p.forcing, &u.grid, 0.0, ForcingComponent::F).unwrap();
        let at1 = identity_residuals(u, &ut, &f, &p, 1.0, 1.0, 1.0).unwrap()[1].residual;
        let near = identity_residuals(u, &ut, &f, &p, 1.0 - 1e-9, 1.0, 1.0).unwrap()[1].residual;
        assert_abs_diff_eq!(at1, near, epsilon = 1e-6);
    }

    #[test]
    fn steady_identities_converge_and_inequality_holds() {
        let ex = ManufacturedSolution::preset("steady-poly", 1.0, 1, TransverseBc::Dirichlet).unwrap();
        let p = ModelParams::new(1.0, 0.01);
        let p = p.clone().with_forcing(manufactured_forcing(&ex, &p));
        let mut prev: Option<Vec<IdentityReport>> = None;
        for nx in [32, 64, 128] {
            let g = make_grid(GridSpec::new(1, nx, 16, 0, TransverseBc::Dirichlet)).unwrap();
            let u = ex.sample(&g, 0.0).unwrap();
            let ut = ex.sample_t(&g, 0.0).unwrap();
            let f = forcing_eval(&p.forcing, &g, 0.0, ForcingComponent::F).unwrap();
            let rep = identity_residuals(&u, &ut, &f, &p, 0.5, 1.0, 1.0).unwrap();
            assert!(rep[2].passed && rep[2].c_prime_min.unwrap() <= 1.0);
            if let Some(q) = prev {
                assert!(q[0].residual / rep[0].residual > 3.5);
                assert!(q[1].residual / rep[1].residual > 3.5);
            }
            prev = Some(rep);
        }
    }
}
