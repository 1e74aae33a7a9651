//! Experiment drivers behind the `zk` subcommands. Each driver returns its
//! report and, given an output layout, writes the data files and a manifest.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{cumulative_defect, energy_balance_residual, identity_residuals, BalanceKind, IdentityReport};
use crate::bvp::{limit_solution, solve_bvp, trace_sweep, BvpProblem, SweepReport};
use crate::config::{CompatibilityPolicy, RunConfig, RunMode};
use crate::diagnostics::{
    estimate_constants, gronwall_check, ux_bound_check, y_series, EstimateConstants, GronwallReport, UxBoundReport,
};
use crate::error::{Result, ZkError};
use crate::geometry::{check_compatibility, make_grid, CompatibilityReport};
use crate::io::{write_diagnostics_csv, write_snapshot, write_table, Manifest, OutputLayout};
use crate::model::{forcing_eval, manufactured_forcing, ForcingComponent, ManufacturedSolution};
use crate::operators::{norm, Weight};
use crate::stepper::{run_from, RunStatus, Trajectory};

fn to_json_err(e: serde_json::Error) -> ZkError {
    ZkError::InvalidArgument(e.to_string())
}

fn write_json(layout: &OutputLayout, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let path = layout.file(name);
    let text = serde_json::to_string_pretty(value).map_err(to_json_err)?;
    fs::write(&path, text + "\n").map_err(|e| ZkError::io(&path, e))?;
    Ok(path)
}

fn status_label(status: &RunStatus) -> &'static str {
    match status {
        RunStatus::Completed => "completed",
        RunStatus::BlowupSuspected { .. } => "blowup_suspected",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub t_reached: f64,
    pub steps: usize,
    pub compatibility: CompatibilityReport,
    pub constants: Option<EstimateConstants>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

/// Runs one trajectory after the compatibility check. With
/// `CompatibilityPolicy::Enforce` a failed check is a configuration error.
pub fn run_experiment(cfg: &RunConfig, out: Option<&OutputLayout>) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut manifest = out.map(|l| Manifest::begin(l, "run", cfg)).transpose()?;
    let grid = make_grid(cfg.grid)?;
    let u0 = cfg.initial_field(&grid)?;
    let compatibility = check_compatibility(&u0, &cfg.params, cfg.tolerances.compatibility)?;
    if cfg.compatibility == CompatibilityPolicy::Enforce && !compatibility.passed {
        return Err(ZkError::Config(format!(
            "initial data fail the compatibility conditions at tolerance {:e}",
            cfg.tolerances.compatibility
        )));
    }
    let trajectory = run_from(cfg, &grid, &u0)?;
    let constants = match cfg.mode {
        RunMode::Estimate => Some(estimate_constants(&trajectory.records, cfg.c_prime)?),
        RunMode::Simulate => None,
    };
    let summary = RunSummary {
        status: trajectory.status.clone(),
        t_reached: trajectory.t_reached,
        steps: trajectory.steps,
        compatibility,
        constants,
    };
    if let (Some(layout), Some(m)) = (out, manifest.as_mut()) {
        let mut files = vec![layout.diagnostics_csv()];
        write_diagnostics_csv(&files[0], &trajectory.records)?;
        if !trajectory.snapshots.is_empty() {
            let dir = layout.root.join("snapshots");
            fs::create_dir_all(&dir).map_err(|e| ZkError::io(&dir, e))?;
        }
        for (i, s) in trajectory.snapshots.iter().enumerate() {
            let p = layout.snapshot(i);
            write_snapshot(&p, &s.u)?;
            files.push(p);
        }
        files.push(write_json(layout, "summary.json", &summary)?);
        m.finish(layout, &files, status_label(&summary.status))?;
    }
    Ok(RunOutcome { trajectory, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsMember {
    pub epsilon: f64,
    /// `max_t |u|` over the records.
    pub sup_l2: f64,
    /// Trapezoidal `int |grad u|^2 dt` over the records.
    pub grad_sq_integral: f64,
    pub t_reached: f64,
    pub completed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSweepReport {
    pub members: Vec<EpsMember>,
    /// `|u^{eps_i} - u^{eps_{i+1}}|` at the final time.
    pub pairwise: Vec<f64>,
    /// `(max - min) / min` of `sup_l2` across the sweep.
    pub sup_spread: f64,
    /// `(max - min) / min` of `grad_sq_integral` across the sweep.
    pub grad_spread: f64,
    pub pairwise_decreasing: bool,
    /// Surrogate check on every member's records.
    pub ux_bound: Vec<UxBoundReport>,
}

fn spread(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if hi == 0.0 {
        0.0
    } else {
        (hi - lo) / lo
    }
}

/// Runs the configured problem once per `sweep.epsilons` entry, in
/// parallel, and compares the members.
pub fn sweep_eps(cfg: &RunConfig, out: Option<&OutputLayout>) -> Result<(EpsSweepReport, Vec<Trajectory>)> {
    cfg.validate()?;
    if cfg.sweep.epsilons.len() < 2 {
        return Err(ZkError::Config("sweep.epsilons needs at least two values".into()));
    }
    let mut manifest = out.map(|l| Manifest::begin(l, "sweep-eps", cfg)).transpose()?;
    let runs: Vec<(RunConfig, Trajectory)> = cfg
        .sweep
        .epsilons
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let mut member = cfg.clone();
            member.params.epsilon = eps;
            if let Some(ex) = &cfg.exact {
                member.params.forcing = manufactured_forcing(ex, &member.params);
            }
            let sub = out.map(|l| l.subdir(&format!("eps_{i:02}"))).transpose()?;
            let outcome = run_experiment(&member, sub.as_ref())?;
            Ok((member, outcome.trajectory))
        })
        .collect::<Result<_>>()?;
    let members: Vec<EpsMember> = runs
        .iter()
        .map(|(m, tr)| {
            let sup_l2 = tr.records.iter().fold(0.0_f64, |a, r| a.max(r.l2));
            let grad_sq_integral = tr
                .records
                .windows(2)
                .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].grad_l2.powi(2) + w[1].grad_l2.powi(2)))
                .sum();
            EpsMember {
                epsilon: m.params.epsilon,
                sup_l2,
                grad_sq_integral,
                t_reached: tr.t_reached,
                completed: tr.status == RunStatus::Completed,
            }
        })
        .collect();
    let pairwise: Vec<f64> = runs
        .windows(2)
        .map(|w| norm(&w[0].1.final_u.sub(&w[1].1.final_u), Weight::One))
        .collect();
    let ux_bound = runs
        .iter()
        .map(|(m, tr)| ux_bound_check(&tr.records, m.c_prime))
        .collect::<Result<Vec<_>>>()?;
    let report = EpsSweepReport {
        sup_spread: spread(members.iter().map(|m| m.sup_l2)),
        grad_spread: spread(members.iter().map(|m| m.grad_sq_integral)),
        pairwise_decreasing: pairwise.windows(2).all(|w| w[1] < w[0]),
        members,
        pairwise,
        ux_bound,
    };
    if let (Some(layout), Some(m)) = (out, manifest.as_mut()) {
        let path = layout.file("sweep.csv");
        let rows: Vec<Vec<Option<f64>>> = report
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                vec![
                    Some(m.epsilon),
                    Some(m.sup_l2),
                    Some(m.grad_sq_integral),
                    report.pairwise.get(i).copied(),
                    Some(m.t_reached),
                ]
            })
            .collect();
        write_table(
            &path,
            "# zk-sweep-eps-csv v1",
            &["epsilon", "sup_l2", "grad_sq_integral", "diff_to_next", "t_reached"],
            &rows,
        )?;
        let json = write_json(layout, "sweep.json", &report)?;
        m.finish(layout, &[path, json], "completed")?;
    }
    Ok((report, runs.into_iter().map(|(_, t)| t).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpReport {
    pub n: usize,
    pub g: f64,
    /// `max |u - u^0|` between the `eps = 0` banded solve and the
    /// integrated limit solution.
    pub zero_eps_vs_limit: f64,
    pub sweep: SweepReport,
}

pub const BVP_COLUMNS: [&str; 7] = [
    "epsilon",
    "sup_uxx",
    "err_outside_layer",
    "layer_width",
    "ux0",
    "uxx1",
    "uxxx1",
];

/// The `eps`-sweep of the singular problem with constant `g`.
pub fn bvp_experiment(cfg: &RunConfig, out: Option<&OutputLayout>) -> Result<BvpReport> {
    cfg.validate()?;
    let b = &cfg.bvp;
    let mut manifest = out.map(|l| Manifest::begin(l, "bvp", cfg)).transpose()?;
    let g = vec![b.g; b.n + 1];
    let zero = solve_bvp(&BvpProblem {
        g: g.clone(),
        epsilon: 0.0,
        nonlinear: b.nonlinear,
    })?;
    let limit = if b.nonlinear { zero.clone() } else { limit_solution(&g)? };
    let zero_eps_vs_limit = zero
        .u
        .iter()
        .zip(&limit.u)
        .fold(0.0_f64, |m, (a, c)| m.max((a - c).abs()));
    let sweep = trace_sweep(&g, &b.epsilons, b.nonlinear)?;
    let report = BvpReport {
        n: b.n,
        g: b.g,
        zero_eps_vs_limit,
        sweep,
    };
    if let (Some(layout), Some(m)) = (out, manifest.as_mut()) {
        let path = layout.file("bvp_sweep.csv");
        let rows: Vec<Vec<Option<f64>>> = report
            .sweep
            .records
            .iter()
            .map(|r| {
                vec![
                    Some(r.epsilon),
                    Some(r.sup_uxx),
                    Some(r.err_outside_layer),
                    r.layer_width,
                    Some(r.ux0),
                    Some(r.uxx1),
                    Some(r.uxxx1),
                ]
            })
            .collect();
        write_table(&path, "# zk-bvp-sweep-csv v1", &BVP_COLUMNS, &rows)?;
        let json = write_json(layout, "bvp.json", &report)?;
        m.finish(layout, &[path, json], "completed")?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub kind: BalanceKind,
    pub max_residual: f64,
    /// Largest accumulated defect of the integrated balance (two-state
    /// kinds only).
    pub max_cumulative: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub status: RunStatus,
    /// `|u(0)|^2`, the scale for the balance residuals.
    pub u0_sq: f64,
    pub balances: Vec<BalanceSummary>,
    pub ux_bound: UxBoundReport,
    pub gronwall: Option<GronwallReport>,
    pub identities: Vec<IdentityReport>,
}

const VERIFY_KINDS: [BalanceKind; 5] = [
    BalanceKind::U,
    BalanceKind::Xu,
    BalanceKind::OnePxUt,
    BalanceKind::OnePxUyy,
    BalanceKind::OnePxUyyyy,
];

/// Replays a trajectory through the balance residuals, the `u_x` bound
/// surrogate, the Gronwall check (with the fitted `c2`) and the
/// identities at the final state.
pub fn verify(cfg: &RunConfig, out: Option<&OutputLayout>) -> Result<VerifyReport> {
    let mut run_cfg = cfg.clone();
    run_cfg.keep_states = true;
    run_cfg.validate()?;
    let mut manifest = out.map(|l| Manifest::begin(l, "verify", cfg)).transpose()?;
    let grid = make_grid(cfg.grid)?;
    let u0 = cfg.initial_field(&grid)?;
    let tr = run_from(&run_cfg, &grid, &u0)?;
    let states = &tr.states;
    let u0_sq = norm(&states[0].u, Weight::One).powi(2);
    let mut balances = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for kind in VERIFY_KINDS {
        if states.len() < 3 {
            break;
        }
        let r = energy_balance_residual(states, &cfg.params, tr.theta, kind)?;
        let max_cumulative = if kind == BalanceKind::OnePxUt {
            None
        } else {
            Some(
                cumulative_defect(states, &r)?
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs())),
            )
        };
        balances.push(BalanceSummary {
            kind,
            max_residual: r.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            max_cumulative,
        });
        columns.push(r);
    }
    let ux_bound = ux_bound_check(&tr.records, cfg.c_prime)?;
    let (ts, ys) = y_series(&tr.records);
    let gronwall = match estimate_constants(&tr.records, cfg.c_prime)?.c2 {
        Some(c2) if ts.len() >= 2 => Some(gronwall_check(
            &ts,
            &ys,
            c2,
            ys[0].sqrt(),
            cfg.tolerances.gronwall_slack,
        )?),
        _ => None,
    };
    let last = states.last().expect("at least the initial state");
    let ut = tr
        .states
        .len()
        .checked_sub(2)
        .map(|i| last.u.sub(&states[i].u).scale(1.0 / (last.t - states[i].t)))
        .unwrap_or_else(|| last.u.scale(0.0));
    let f = forcing_eval(&cfg.params.forcing, &grid, last.t, ForcingComponent::F)?;
    let identities = identity_residuals(
        &last.u,
        &ut,
        &f,
        &cfg.params,
        cfg.verify.xtilde,
        cfg.c_prime,
        cfg.tolerances.identity,
    )?;
    let report = VerifyReport {
        status: tr.status.clone(),
        u0_sq,
        balances,
        ux_bound,
        gronwall,
        identities,
    };
    if let (Some(layout), Some(m)) = (out, manifest.as_mut()) {
        let path = layout.file("balance.csv");
        // OnePxUt residuals sit at middle states; align them with the
        // interval that ends there.
        let rows: Vec<Vec<Option<f64>>> = (0..states.len().saturating_sub(1))
            .map(|i| {
                let mut row = vec![Some(states[i + 1].t)];
                for (kind, col) in VERIFY_KINDS.iter().zip(&columns) {
                    let v = if *kind == BalanceKind::OnePxUt {
                        i.checked_sub(1).and_then(|j| col.get(j)).copied()
                    } else {
                        col.get(i).copied()
                    };
                    row.push(v);
                }
                row.resize(1 + VERIFY_KINDS.len(), None);
                row
            })
            .collect();
        write_table(
            &path,
            "# zk-balance-csv v1",
            &["t", "u", "xu", "one_px_ut", "one_px_uyy", "one_px_uyyyy"],
            &rows,
        )?;
        let json = write_json(layout, "verify.json", &report)?;
        m.finish(layout, &[path, json], "completed")?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub epsilon: f64,
    pub nx: usize,
    pub dt: f64,
    /// `|u - u_exact|` at `t_end`.
    pub error: f64,
    /// Observed order against the previous rung of the same `epsilon`.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub exact: ManufacturedSolution,
    pub rows: Vec<MmsRow>,
}

impl MmsReport {
    /// Orders of every rung after the first.
    /// Observed order per epsilon: the one between the two finest resolutions.
    pub fn orders(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for r in &self.rows {
            if let Some(o) = r.order {
                match out.last_mut() {
                    Some(last) if last.0 == r.epsilon => last.1 = o,
                    _ => out.push((r.epsilon, o)),
                }
            }
        }
        out
    }
}

/// Refinement ladder against the manufactured solution with `dt = dt_per_h h`.
pub fn mms(cfg: &RunConfig, out: Option<&OutputLayout>) -> Result<MmsReport> {
    cfg.validate()?;
    let exact = match cfg.exact {
        Some(e) => e,
        None => ManufacturedSolution::preset("poly-decay", 1.0, cfg.grid.d, cfg.grid.transverse_bc)?,
    };
    let mut manifest = out.map(|l| Manifest::begin(l, "mms", cfg)).transpose()?;
    let jobs: Vec<(f64, usize)> = cfg
        .mms
        .epsilons
        .iter()
        .flat_map(|&e| cfg.mms.nx.iter().map(move |&n| (e, n)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(eps, nx)| {
            let mut c = cfg.clone();
            c.grid.nx = nx;
            c.params.epsilon = eps;
            c.params.forcing = manufactured_forcing(&exact, &c.params);
            c.exact = Some(exact);
            c.initial.preset = "exact".into();
            c.initial.amplitude = 1.0;
            let dt = cfg.mms.dt_per_h / nx as f64;
            c.step.dt_max = dt;
            c.step.dt_min = c.step.dt_min.min(dt);
            c.step.cfl = f64::MAX;
            c.guard_factor = 0.0;
            c.record_interval = c.t_end;
            let grid = make_grid(c.grid)?;
            let u0 = c.initial_field(&grid)?;
            let tr = run_from(&c, &grid, &u0)?;
            let ue = exact.sample(&grid, tr.t_reached)?;
            Ok((eps, nx, dt, norm(&tr.final_u.sub(&ue), Weight::One)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MmsRow> = Vec::new();
    for (eps, nx, dt, error) in results {
        let order = rows
            .last()
            .filter(|p| p.epsilon == eps)
            .map(|p| (p.error / error).ln() / (nx as f64 / p.nx as f64).ln());
        rows.push(MmsRow {
            epsilon: eps,
            nx,
            dt,
            error,
            order,
        });
    }
    let report = MmsReport { exact, rows };
    if let (Some(layout), Some(m)) = (out, manifest.as_mut()) {
        let path = layout.file("mms.csv");
        let rows: Vec<Vec<Option<f64>>> = report
            .rows
            .iter()
            .map(|r| vec![Some(r.epsilon), Some(r.nx as f64), Some(r.dt), Some(r.error), r.order])
            .collect();
        write_table(
            &path,
            "# zk-mms-csv v1",
            &["epsilon", "nx", "dt", "error", "order"],
            &rows,
        )?;
        let json = write_json(layout, "mms.json", &report)?;
        m.finish(layout, &[path, json], "completed")?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn zero_run_writes_zero_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let layout = OutputLayout::create(dir.path()).unwrap();
        let cfg = parse_config("[grid]\nnx = 16\nny = 4\n[time]\nt_end = 0.01\ndt_max = 1e-3\n").unwrap();
        let out = run_experiment(&cfg, Some(&layout)).unwrap();
        assert_eq!(out.summary.status, RunStatus::Completed);
        let recs = crate::io::read_diagnostics_csv(&layout.diagnostics_csv()).unwrap();
        assert!(recs.len() >= 2);
        assert!(recs.iter().all(|r| r.l2 == 0.0 && r.grad_l2 == 0.0));
        let m = Manifest::read(&layout.manifest()).unwrap();
        assert_eq!(m.status, "completed");
        assert!(m.mismatches(&layout.root).unwrap().is_empty());
    }

    #[test]
    fn enforce_policy_rejects_incompatible_data() {
        let text = "[grid]\nnx = 16\nny = 4\n[initial]\npreset = \"poly-bump\"\n[estimates]\ncompatibility = \"enforce\"\n[tolerances]\ncompatibility = 1e-30\n[time]\nt_end = 0.01\n";
        let cfg = parse_config(text).unwrap();
        assert!(matches!(run_experiment(&cfg, None), Err(ZkError::Config(_))));
    }

    #[test]
    fn spread_of_constant_is_zero() {
        assert_eq!(spread([2.0, 2.0].into_iter()), 0.0);
        assert!((spread([1.0, 1.1].into_iter()) - 0.1).abs() < 1e-12);
    }
}
