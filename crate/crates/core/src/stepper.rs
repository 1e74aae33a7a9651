//! IMEX time stepping: Crank–Nicolson-type implicit linear part, explicit
//! (Adams–Bashforth 2) split nonlinearity, per-transverse-mode banded solves.
//!
//! In each transverse mode with Laplacian eigenvalue `lambda` and
//! `q = k_y^4 + k_z^4` the x problem is
//!
//! ```text
//! H w_t + S w = H (f - N),   S = S3 + (lambda + c) S1 + eps (S4 + q H)
//! ```
//!
//! on the free nodes `1..=nx-2` (see [`crate::sbp`]). The symmetric part of
//! `S` is positive semi-definite, so the linear scheme is unconditionally
//! stable for `theta >= 1/2`.

use std::sync::Arc;

use ndarray::{Array2, Array3, Axis as NdAxis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::config::RunConfig;
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Result, ZkError};
use crate::geometry::{make_grid, BcTag, Field, Grid, GridSpec};
use crate::model::{forcing_eval, ForcingComponent, ModelParams};
use crate::operators::{norm, Weight};
use crate::sbp::SbpX;

/// How the explicit nonlinear term is extrapolated to `t + theta dt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Variable-step AB2 after an explicit Euler first step.
    Ab2,
    /// Explicit Euler on every step.
    ExplicitEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub theta: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub extrapolation: Extrapolation,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            theta: 0.5,
            cfl: 1.0,
            dt_max: 1e-2,
            dt_min: 1e-8,
            extrapolation: Extrapolation::Ab2,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(ZkError::InvalidArgument(format!(
                "theta must lie in [1/2, 1], got {}",
                self.theta
            )));
        }
        if !(self.cfl > 0.0) {
            return Err(ZkError::InvalidArgument("cfl must be > 0".into()));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(ZkError::InvalidArgument(format!(
                "need 0 < dt_min <= dt_max, got {} and {}",
                self.dt_min, self.dt_max
            )));
        }
        Ok(())
    }
}

/// `clamp(cfl h / (1 + max|u|), dt_min, dt_max)`.
pub fn select_dt(u: &Field, grid: &Grid, cfg: &StepConfig) -> f64 {
    let raw = cfg.cfl * grid.hx / (1.0 + u.max_abs());
    raw.clamp(cfg.dt_min, cfg.dt_max)
}

/// Physical values to modal coefficients, slab by slab in x.
pub fn to_modal(grid: &Grid, values: &Array3<f64>) -> Array3<f64> {
    let (n1, _, _) = values.dim();
    let (_, my, mz) = grid.modal_shape();
    let mut out = Array3::zeros((n1, my, mz));
    for (i, slab) in values.outer_iter().enumerate() {
        let c = grid.y.to_modal.dot(&slab).dot(&grid.z.to_modal.t());
        out.index_axis_mut(NdAxis(0), i).assign(&c);
    }
    out
}

/// Modal coefficients to physical values.
pub fn to_phys(grid: &Grid, modal: &Array3<f64>) -> Array3<f64> {
    let (n1, ny, nz) = grid.shape();
    let mut out = Array3::zeros((n1, ny, nz));
    for (i, slab) in modal.outer_iter().enumerate() {
        let v = grid.y.to_phys.dot(&slab).dot(&grid.z.to_phys.t());
        out.index_axis_mut(NdAxis(0), i).assign(&v);
    }
    out
}

/// Projection onto the discrete solution space: transverse basis, and
/// `u_0 = u_{n-1} = u_n = 0` in x.
pub fn project(u: &Field, tag: BcTag) -> Field {
    let g = &u.grid;
    let n = g.nx();
    let mut modal = to_modal(g, &u.values);
    for i in [0, n - 1, n] {
        modal.index_axis_mut(NdAxis(0), i).fill(0.0);
    }
    Field {
        grid: g.clone(),
        values: to_phys(g, &modal),
        bc_tag: tag,
    }
}

/// Split nonlinearity with the SBP first derivative, column by column.
pub fn sbp_nonlinearity(u: &Field) -> Field {
    let sbp = SbpX::new(u.grid.nx());
    let values = crate::operators::map_x_columns(&u.values, |col, out| {
        let v: Vec<f64> = col.to_vec();
        sbp.nonlinear_split(&v, out);
    });
    Field {
        grid: u.grid.clone(),
        values,
        bc_tag: BcTag::Unconstrained,
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub t: f64,
    pub u: Field,
    /// State before the last accepted step.
    pub u_prev: Option<Field>,
    /// Step size used for the next step.
    pub dt: f64,
    /// Step size of the last accepted step.
    pub dt_prev: f64,
    /// Nonlinearity evaluated at `u_prev`.
    pub nl_prev: Option<Field>,
    pub step_index: usize,
}

impl SolverState {
    /// Initial state; `u0` is projected onto the discrete solution space.
    pub fn new(u0: &Field, params: &ModelParams, dt: f64) -> Self {
        SolverState {
            t: 0.0,
            u: project(u0, params.bc_tag()),
            u_prev: None,
            dt,
            dt_prev: 0.0,
            nl_prev: None,
            step_index: 0,
        }
    }

    /// `(u - u_prev) / dt_prev`, centred at the previous half step.
    pub fn time_difference(&self) -> Option<Field> {
        self.u_prev.as_ref().map(|p| self.u.sub(p).scale(1.0 / self.dt_prev))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct CacheKey {
    dt: f64,
    theta: f64,
    c: f64,
    epsilon: f64,
    grid: GridSpec,
}

#[derive(Clone, Debug)]
struct ModeSystem {
    lambda: f64,
    q: f64,
    lu: BandLu,
}

/// Per-mode factorizations of `h I + dt theta S`.
#[derive(Clone, Debug)]
pub struct LinearSystemCache {
    key: CacheKey,
    sbp: SbpX,
    s3: BandMatrix,
    s1: BandMatrix,
    s4: BandMatrix,
    modes: Vec<ModeSystem>,
    my: usize,
    mz: usize,
}

impl LinearSystemCache {
    pub fn matches(&self, dt: f64, theta: f64, params: &ModelParams, grid: &Grid) -> bool {
        self.key
            == CacheKey {
                dt,
                theta,
                c: params.c,
                epsilon: params.epsilon,
                grid: grid.spec,
            }
    }

    pub fn dt(&self) -> f64 {
        self.key.dt
    }

    /// Half-bandwidth of the factorized x systems.
    pub fn half_bandwidth(&self) -> usize {
        self.s4.half_bandwidth()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// `y = S w` for mode `m` on the free nodes.
    fn apply_s(&self, m: usize, w: &[f64], y: &mut [f64]) {
        let ms = &self.modes[m];
        let nf = w.len();
        let mut tmp = vec![0.0; nf];
        self.s3.matvec(w, y);
        self.s1.matvec(w, &mut tmp);
        let a = ms.lambda + self.key.c;
        for i in 0..nf {
            y[i] += a * tmp[i];
        }
        let eps = self.key.epsilon;
        if eps > 0.0 {
            self.s4.matvec(w, &mut tmp);
            let h = self.sbp.h;
            for i in 0..nf {
                y[i] += eps * (tmp[i] + ms.q * h * w[i]);
            }
        }
    }

    /// Solves `(I + dt theta H^{-1} S) x = b` for mode `m`.
    pub fn solve_mode(&self, m: usize, b: &[f64]) -> Vec<f64> {
        let h = self.sbp.h;
        let mut x: Vec<f64> = b.iter().map(|v| v * h).collect();
        self.modes[m].lu.solve(&mut x);
        x
    }
}

#[allow(clippy::too_many_arguments)]
fn mode_system_matrix(
    s3: &BandMatrix,
    s1: &BandMatrix,
    s4: &BandMatrix,
    sbp: &SbpX,
    lambda: f64,
    q: f64,
    params: &ModelParams,
    dt: f64,
    theta: f64,
) -> BandMatrix {
    let k = dt * theta;
    let mut m = s3.combine(k, s1, k * (lambda + params.c));
    if params.epsilon > 0.0 {
        m = m.combine(1.0, s4, k * params.epsilon);
    }
    let diag = sbp.h * (1.0 + k * params.epsilon * q);
    for i in 0..m.n() {
        m.add(i, i, diag);
    }
    m
}

/// Factorizes the implicit operator for every transverse mode.
pub fn build_implicit_operator(params: &ModelParams, grid: &Grid, dt: f64, theta: f64) -> Result<LinearSystemCache> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(ZkError::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    let sbp = SbpX::new(grid.nx());
    let (s3, s1, s4) = sbp.stiffness_parts();
    let (_, my, mz) = grid.modal_shape();
    let pairs: Vec<(usize, usize)> = (0..my).flat_map(|a| (0..mz).map(move |b| (a, b))).collect();
    let modes = pairs
        .par_iter()
        .map(|&(a, b)| {
            let ky = grid.y.wavenumbers[a];
            let kz = grid.z.wavenumbers[b];
            let lambda = -(ky * ky + kz * kz);
            let q = ky.powi(4) + kz.powi(4);
            let m = mode_system_matrix(&s3, &s1, &s4, &sbp, lambda, q, params, dt, theta);
            let lu = m.factorize(&format!("(k_y, k_z) = ({ky}, {kz})"))?;
            Ok(ModeSystem { lambda, q, lu })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearSystemCache {
        key: CacheKey {
            dt,
            theta,
            c: params.c,
            epsilon: params.epsilon,
            grid: grid.spec,
        },
        sbp,
        s3,
        s1,
        s4,
        modes,
        my,
        mz,
    })
}

/// Relative tolerance on the linear-solve residual.
const SOLVE_TOL: f64 = 1e-8;

/// Advances `state` by `state.dt`.
pub fn imex_step(
    state: &SolverState,
    cache: &LinearSystemCache,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<SolverState> {
    let grid = state.u.grid.clone();
    let dt = state.dt;
    let theta = cfg.theta;
    if !cache.matches(dt, theta, params, &grid) {
        return Err(ZkError::StaleCache(format!(
            "cache built for dt = {}, step requests dt = {dt}",
            cache.dt()
        )));
    }
    let nl = if params.nonlinear {
        Some(sbp_nonlinearity(&state.u))
    } else {
        None
    };
    let nl_star = match (&nl, &state.nl_prev, cfg.extrapolation) {
        (Some(n), Some(p), Extrapolation::Ab2) if state.dt_prev > 0.0 => {
            let r = theta * dt / state.dt_prev;
            Some(n.scale(1.0 + r).sub(&p.scale(r)))
        }
        (Some(n), _, _) => Some(n.clone()),
        (None, _, _) => None,
    };
    let f = forcing_eval(&params.forcing, &grid, state.t + theta * dt, ForcingComponent::F)?;
    let g = match &nl_star {
        Some(n) => n.sub(&f),
        None => f.scale(-1.0),
    };
    let gm = to_modal(&grid, &g.values);
    let um = to_modal(&grid, &state.u.values);
    let n = grid.nx();
    let nf = cache.sbp.n_free();
    let pairs: Vec<(usize, usize)> = (0..cache.my).flat_map(|a| (0..cache.mz).map(move |b| (a, b))).collect();
    let columns = pairs
        .par_iter()
        .enumerate()
        .map(|(m, &(a, b))| {
            let w: Vec<f64> = (1..=nf).map(|i| um[[i, a, b]]).collect();
            let mut sw = vec![0.0; nf];
            cache.apply_s(m, &w, &mut sw);
            let h = cache.sbp.h;
            // rhs in H^{-1}-scaled form
            let rhs: Vec<f64> = (0..nf)
                .map(|i| w[i] - dt * (1.0 - theta) * sw[i] / h - dt * gm[[i + 1, a, b]])
                .collect();
            let x = cache.solve_mode(m, &rhs);
            let mut sx = vec![0.0; nf];
            cache.apply_s(m, &x, &mut sx);
            let mut res = 0.0_f64;
            let mut scale = 0.0_f64;
            for i in 0..nf {
                res = res.max((x[i] + dt * theta * sx[i] / h - rhs[i]).abs());
                scale = scale.max(rhs[i].abs());
            }
            if res > SOLVE_TOL * scale.max(f64::MIN_POSITIVE) && res > 1e-300 {
                return Err(ZkError::NumericalFault {
                    t: state.t,
                    detail: format!("linear solve residual {res:e} in mode ({a}, {b})"),
                });
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut modal = Array3::zeros((n + 1, cache.my, cache.mz));
    for (m, &(a, b)) in pairs.iter().enumerate() {
        for i in 0..nf {
            modal[[i + 1, a, b]] = columns[m][i];
        }
    }
    let values = to_phys(&grid, &modal);
    let t_new = state.t + dt;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ZkError::NumericalFault {
            t: t_new,
            detail: "non-finite solution value".into(),
        });
    }
    Ok(SolverState {
        t: t_new,
        u: Field {
            grid,
            values,
            bc_tag: params.bc_tag(),
        },
        u_prev: Some(state.u.clone()),
        dt,
        dt_prev: dt,
        nl_prev: nl,
        step_index: state.step_index + 1,
    })
}

/// Norm watched by the blowup guard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardNorm {
    /// `|u|`.
    L2,
    /// `|grad u|`.
    Grad,
    /// `max |u|`.
    Sup,
}

impl GuardNorm {
    pub fn eval(self, u: &Field) -> Result<f64> {
        Ok(match self {
            GuardNorm::L2 => norm(u, Weight::One),
            GuardNorm::Grad => diagnostics::grad_norm(u)?,
            GuardNorm::Sup => u.max_abs(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowupSuspected { t: f64, norm: f64, threshold: f64 },
}

/// A stored state of a trajectory.
#[derive(Clone, Debug)]
pub struct StateSample {
    pub t: f64,
    pub u: Field,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    /// Every accepted state when `keep_states` is set.
    pub states: Vec<StateSample>,
    /// States at snapshot times.
    pub snapshots: Vec<StateSample>,
    pub status: RunStatus,
    /// State at `t_reached`.
    pub final_u: Field,
    pub t_reached: f64,
    pub steps: usize,
    pub params: ModelParams,
    pub theta: f64,
}

/// Runs one trajectory from the configured initial data.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let grid = make_grid(config.grid)?;
    let u0 = config.initial_field(&grid)?;
    run_from(config, &grid, &u0)
}

/// Largest `dt_max / 2^k` not exceeding `target`, floored at `dt_min`.
fn quantized_dt(target: f64, cfg: &StepConfig) -> f64 {
    let mut dt = cfg.dt_max;
    while dt > target && dt / 2.0 >= cfg.dt_min {
        dt /= 2.0;
    }
    dt.max(cfg.dt_min)
}

const TIME_EPS: f64 = 1e-12;

/// Runs one trajectory from `u0`.
pub fn run_from(config: &RunConfig, grid: &Arc<Grid>, u0: &Field) -> Result<Trajectory> {
    let params = &config.params;
    params.validate()?;
    config.step.validate()?;
    let cfg = &config.step;
    let mut state = SolverState::new(u0, params, 0.0);
    state.dt = quantized_dt(select_dt(&state.u, grid, cfg), cfg);
    let mut cache = build_implicit_operator(params, grid, state.dt, cfg.theta)?;
    // The projection perturbs high-order x-derivatives near x = 1, so u_t(0)
    // comes from the data as given.
    let ut0 = diagnostics::initial_time_derivative(&u0.clone().with_tag(params.bc_tag()), params)?;
    let mut records = vec![diagnostics::record(&state, params, Some(&ut0))?];
    let mut states = Vec::new();
    let mut snapshots = Vec::new();
    if config.keep_states {
        states.push(StateSample {
            t: 0.0,
            u: state.u.clone(),
        });
    }
    if config.snapshot_interval > 0.0 {
        snapshots.push(StateSample {
            t: 0.0,
            u: state.u.clone(),
        });
    }
    let guard_ref = config.guard_norm.eval(&state.u)?;
    let threshold = config.guard_factor * guard_ref;
    let mut next_record = config.record_interval;
    let mut next_snapshot = config.snapshot_interval;
    let mut status = RunStatus::Completed;
    while state.t < config.t_end - TIME_EPS {
        let mut dt = quantized_dt(select_dt(&state.u, grid, cfg), cfg).min(state.dt.max(cfg.dt_min));
        if state.t + dt > config.t_end - TIME_EPS {
            dt = config.t_end - state.t;
        }
        state.dt = dt;
        if !cache.matches(dt, cfg.theta, params, grid) {
            cache = build_implicit_operator(params, grid, dt, cfg.theta)?;
        }
        state = imex_step(&state, &cache, params, cfg)?;
        if config.keep_states {
            states.push(StateSample {
                t: state.t,
                u: state.u.clone(),
            });
        }
        let at_end = state.t >= config.t_end - TIME_EPS;
        if state.t >= next_record - TIME_EPS || at_end {
            records.push(diagnostics::record(&state, params, None)?);
            while next_record <= state.t + TIME_EPS {
                next_record += config.record_interval;
            }
        }
        if config.snapshot_interval > 0.0 && (state.t >= next_snapshot - TIME_EPS || at_end) {
            snapshots.push(StateSample {
                t: state.t,
                u: state.u.clone(),
            });
            while next_snapshot <= state.t + TIME_EPS {
                next_snapshot += config.snapshot_interval;
            }
        }
        if guard_ref > 0.0 && config.guard_factor > 0.0 {
            let g = config.guard_norm.eval(&state.u)?;
            if g > threshold {
                if records.last().map(|r| r.t) != Some(state.t) {
                    records.push(diagnostics::record(&state, params, None)?);
                }
                status = RunStatus::BlowupSuspected {
                    t: state.t,
                    norm: g,
                    threshold,
                };
                break;
            }
        }
    }
    Ok(Trajectory {
        records,
        states,
        snapshots,
        status,
        final_u: state.u,
        t_reached: state.t,
        steps: state.step_index,
        params: params.clone(),
        theta: cfg.theta,
    })
}

/// Modal norm weights `|phi_a|^2 |phi_b|^2` of the transverse basis.
pub fn modal_weights(grid: &Grid) -> Array2<f64> {
    let (_, my, mz) = grid.modal_shape();
    let wy: Vec<f64> = (0..my)
        .map(|a| {
            (0..grid.y.len())
                .map(|j| grid.y.weights[j] * grid.y.to_phys[[j, a]].powi(2))
                .sum()
        })
        .collect();
    let wz: Vec<f64> = (0..mz)
        .map(|b| {
            (0..grid.z.len())
                .map(|k| grid.z.weights[k] * grid.z.to_phys[[k, b]].powi(2))
                .sum()
        })
        .collect();
    Array2::from_shape_fn((my, mz), |(a, b)| wy[a] * wz[b])
}
