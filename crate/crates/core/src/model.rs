//! Model parameters, forcing, manufactured solutions and the right-hand side
//! of the regularized equation
//!
//! ```text
//! u_t + Delta u_x + c u_x + u u_x + eps (u_xxxx + u_yyyy + u_zzzz) = f.
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::geometry::{sample, BcTag, Field, Grid, TransverseBc};
use crate::operators::{nonlinear_split, op_a, op_l};
use std::sync::Arc;

/// Profile `X(x) = x^3 (1 - x)^2` and its derivatives. It satisfies
/// `X(0) = X(1) = X'(1) = X''(0) = 0`.
pub mod poly {
    pub fn x0(x: f64) -> f64 {
        x.powi(3) * (1.0 - x).powi(2)
    }
    pub fn x1(x: f64) -> f64 {
        3.0 * x * x - 8.0 * x.powi(3) + 5.0 * x.powi(4)
    }
    pub fn x2(x: f64) -> f64 {
        6.0 * x - 24.0 * x * x + 20.0 * x.powi(3)
    }
    pub fn x3(x: f64) -> f64 {
        6.0 - 48.0 * x + 60.0 * x * x
    }
    pub fn x4(x: f64) -> f64 {
        -48.0 + 120.0 * x
    }
}

/// Lowest transverse mode compatible with the wall conditions, as a product
/// over the transverse directions: `cos y` for Dirichlet walls, `cos 2y`
/// for periodic walls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseMode {
    pub d: usize,
    /// Wavenumber in each transverse direction.
    pub k: f64,
    /// Use `sin` instead of `cos`.
    pub odd: bool,
}

impl TransverseMode {
    pub fn lowest(d: usize, bc: TransverseBc) -> Self {
        let k = match bc {
            TransverseBc::Dirichlet => 1.0,
            TransverseBc::Periodic => 2.0,
        };
        TransverseMode { d, k, odd: false }
    }

    fn one(&self, s: f64) -> f64 {
        if self.odd {
            (self.k * s).sin()
        } else {
            (self.k * s).cos()
        }
    }

    pub fn eval(&self, y: f64, z: f64) -> f64 {
        if self.d == 2 {
            self.one(y) * self.one(z)
        } else {
            self.one(y)
        }
    }

    /// Eigenvalue of the transverse Laplacian.
    pub fn lambda(&self) -> f64 {
        -(self.d as f64) * self.k * self.k
    }

    /// Eigenvalue of `d_y^4 (+ d_z^4)`.
    pub fn q(&self) -> f64 {
        self.d as f64 * self.k.powi(4)
    }
}

/// Time factor of a manufactured solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeProfile {
    /// `T = e^{-t}`.
    Decay,
    /// `T = 1`.
    Steady,
}

impl TimeProfile {
    /// `(T, T', T'')`.
    fn eval(self, t: f64) -> (f64, f64, f64) {
        match self {
            TimeProfile::Decay => {
                let e = (-t).exp();
                (e, -e, e)
            }
            TimeProfile::Steady => (1.0, 0.0, 0.0),
        }
    }
}

/// Closed-form `u = a T(t) X(x) Phi(x_perp)`, which satisfies every
/// regularized boundary condition for all `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    pub amplitude: f64,
    pub time: TimeProfile,
    pub mode: TransverseMode,
}

impl ManufacturedSolution {
    /// Resolves `poly-decay` or `steady-poly`.
    pub fn preset(name: &str, amplitude: f64, d: usize, bc: TransverseBc) -> Result<Self> {
        let time = match name {
            "poly-decay" => TimeProfile::Decay,
            "steady-poly" => TimeProfile::Steady,
            other => return Err(ZkError::UnknownPreset(other.to_string())),
        };
        Ok(ManufacturedSolution {
            amplitude,
            time,
            mode: TransverseMode::lowest(d, bc),
        })
    }

    pub fn eval(&self, x: f64, y: f64, z: f64, t: f64) -> f64 {
        self.amplitude * self.time.eval(t).0 * poly::x0(x) * self.mode.eval(y, z)
    }

    pub fn eval_t(&self, x: f64, y: f64, z: f64, t: f64) -> f64 {
        self.amplitude * self.time.eval(t).1 * poly::x0(x) * self.mode.eval(y, z)
    }

    pub fn sample(&self, grid: &Arc<Grid>, t: f64) -> Result<Field> {
        Ok(sample(grid, |x, y, z| self.eval(x, y, z, t))?.with_tag(BcTag::ZkRegularized))
    }

    pub fn sample_t(&self, grid: &Arc<Grid>, t: f64) -> Result<Field> {
        sample(grid, |x, y, z| self.eval_t(x, y, z, t))
    }

    /// `f` and `f_t` from the defining identity, in closed form.
    #[allow(clippy::too_many_arguments)]
    fn forcing(&self, x: f64, y: f64, z: f64, t: f64, c: f64, eps: f64, nonlinear: bool) -> (f64, f64) {
        let a = self.amplitude;
        let (tt, dt, ddt) = self.time.eval(t);
        let phi = self.mode.eval(y, z);
        let lam = self.mode.lambda();
        let q = self.mode.q();
        let lin = poly::x3(x) + lam * poly::x1(x) + c * poly::x1(x) + eps * (poly::x4(x) + q * poly::x0(x));
        let nl = if nonlinear {
            a * a * poly::x0(x) * poly::x1(x) * phi * phi
        } else {
            0.0
        };
        let f = a * dt * poly::x0(x) * phi + a * tt * lin * phi + tt * tt * nl;
        let ft = a * ddt * poly::x0(x) * phi + a * dt * lin * phi + 2.0 * tt * dt * nl;
        (f, ft)
    }
}

/// Forcing term `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    Zero,
    /// Named closed-form preset with coefficients.
    Analytic {
        name: String,
        coefficients: Vec<f64>,
    },
    /// Forcing that makes `exact` a solution for the given coefficients.
    Manufactured {
        exact: ManufacturedSolution,
        c: f64,
        epsilon: f64,
        nonlinear: bool,
    },
}

/// Analytic forcing presets.
pub const ANALYTIC_PRESETS: &[&str] = &["decay-bump", "steady-bump"];

impl ForcingSpec {
    /// Checks that an analytic preset name resolves.
    pub fn validate(&self) -> Result<()> {
        match self {
            ForcingSpec::Analytic { name, .. } if !ANALYTIC_PRESETS.contains(&name.as_str()) => {
                Err(ZkError::UnknownPreset(name.clone()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }
}

/// Which component of the forcing to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcingComponent {
    F,
    Ft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Sound velocity, `c > 0`.
    pub c: f64,
    pub epsilon: f64,
    pub forcing: ForcingSpec,
    /// Include `u u_x`; off for the linear problem.
    pub nonlinear: bool,
}

impl ModelParams {
    pub fn new(c: f64, epsilon: f64) -> Self {
        ModelParams {
            c,
            epsilon,
            forcing: ForcingSpec::Zero,
            nonlinear: true,
        }
    }

    pub fn with_forcing(mut self, forcing: ForcingSpec) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(ZkError::InvalidArgument(format!("c must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(ZkError::InvalidArgument(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        self.forcing.validate()
    }

    /// BC tag of solutions for this `epsilon`.
    pub fn bc_tag(&self) -> BcTag {
        if self.epsilon > 0.0 {
            BcTag::ZkRegularized
        } else {
            BcTag::ZkLimit
        }
    }
}

/// Pointwise values of `f` or `f_t` at time `t`.
pub fn forcing_eval(spec: &ForcingSpec, grid: &Arc<Grid>, t: f64, which: ForcingComponent) -> Result<Field> {
    match spec {
        ForcingSpec::Zero => Ok(Field::zeros(grid)),
        ForcingSpec::Analytic { name, coefficients } => {
            let a = coefficients.first().copied().unwrap_or(1.0);
            let mode = TransverseMode::lowest(grid.spec.d, grid.spec.transverse_bc);
            let (tf, dtf) = match name.as_str() {
                "decay-bump" => ((-t).exp(), -(-t).exp()),
                "steady-bump" => (1.0, 0.0),
                other => return Err(ZkError::UnknownPreset(other.to_string())),
            };
            let s = match which {
                ForcingComponent::F => tf,
                ForcingComponent::Ft => dtf,
            };
            sample(grid, |x, y, z| a * s * x * (1.0 - x) * mode.eval(y, z))
        }
        ForcingSpec::Manufactured {
            exact,
            c,
            epsilon,
            nonlinear,
        } => sample(grid, |x, y, z| {
            let (f, ft) = exact.forcing(x, y, z, t, *c, *epsilon, *nonlinear);
            match which {
                ForcingComponent::F => f,
                ForcingComponent::Ft => ft,
            }
        }),
    }
}

/// Forcing that turns `exact` into a solution for `params`.
pub fn manufactured_forcing(exact: &ManufacturedSolution, params: &ModelParams) -> ForcingSpec {
    if exact.amplitude == 0.0 {
        return ForcingSpec::Zero;
    }
    ForcingSpec::Manufactured {
        exact: *exact,
        c: params.c,
        epsilon: params.epsilon,
        nonlinear: params.nonlinear,
    }
}

/// `f(t) - A u - N(u) - eps L u` with pointwise stencils.
pub fn rhs(u: &Field, t: f64, params: &ModelParams) -> Result<Field> {
    if !u.is_finite() {
        return Err(ZkError::NumericalFault {
            t,
            detail: "non-finite value in rhs input".into(),
        });
    }
    let f = forcing_eval(&params.forcing, &u.grid, t, ForcingComponent::F)?;
    let mut out = f.sub(&op_a(u, params.c)?);
    if params.nonlinear {
        out = out.sub(&nonlinear_split(u)?);
    }
    if params.epsilon > 0.0 {
        out = out.sub(&op_l(u)?.scale(params.epsilon));
    }
    Ok(out)
}

/// Time derivative at `t` induced by the limit equation (`epsilon = 0`).
pub fn limit_time_derivative(u: &Field, params: &ModelParams, t: f64) -> Result<Field> {
    let limit = ModelParams {
        epsilon: 0.0,
        ..params.clone()
    };
    let probe = if u.bc_tag == BcTag::ZkRegularized {
        u.clone().with_tag(BcTag::ZkLimit)
    } else {
        u.clone()
    };
    rhs(&probe, t, &limit)
}

/// Initial-data presets.
pub const INITIAL_PRESETS: &[&str] = &["zero", "poly-bump", "two-bump"];

/// Samples a named initial-data preset with amplitude `a`.
pub fn initial_data(name: &str, amplitude: f64, grid: &Arc<Grid>) -> Result<Field> {
    let (d, bc) = (grid.spec.d, grid.spec.transverse_bc);
    let mode = match name {
        "zero" => return Ok(Field::zeros(grid)),
        "poly-bump" => TransverseMode::lowest(d, bc),
        "two-bump" => TransverseMode { d, k: 2.0, odd: true },
        other => return Err(ZkError::UnknownPreset(other.to_string())),
    };
    sample(grid, |x, y, z| amplitude * poly::x0(x) * mode.eval(y, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, GridSpec};
    use approx::assert_abs_diff_eq;

    fn grid(nx: usize, bc: TransverseBc) -> Arc<Grid> {
        make_grid(GridSpec::new(1, nx, 8, 0, bc)).unwrap()
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn zero_state_zero_forcing() {
        let g = grid(16, TransverseBc::Dirichlet);
        let u = Field::zeros(&g).with_tag(BcTag::ZkRegularized);
        let r = rhs(&u, 0.3, &ModelParams::new(1.0, 0.01)).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn analytic_decay_forcing_has_ft_equal_minus_f() {
        let g = grid(16, TransverseBc::Dirichlet);
        let spec = ForcingSpec::Analytic {
            name: "decay-bump".into(),
            coefficients: vec![],
        };
        let f = forcing_eval(&spec, &g, 0.4, ForcingComponent::F).unwrap();
        let ft = forcing_eval(&spec, &g, 0.4, ForcingComponent::Ft).unwrap();
        assert_eq!(f.add(&ft).max_abs(), 0.0);
        let x = g.x_nodes[4];
        let y = g.y.points[3];
        assert_abs_diff_eq!(
            f.values[[4, 3, 0]],
            (-0.4f64).exp() * x * (1.0 - x) * y.cos(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn unknown_preset_is_an_error() {
        let g = grid(16, TransverseBc::Dirichlet);
        let spec = ForcingSpec::Analytic {
            name: "nope".into(),
            coefficients: vec![],
        };
        assert!(matches!(
            forcing_eval(&spec, &g, 0.0, ForcingComponent::F),
            Err(ZkError::UnknownPreset(_))
        ));
        assert!(initial_data("nope", 1.0, &g).is_err());
    }

    #[test]
    fn zero_manufactured_solution_gives_zero_forcing() {
        let exact = ManufacturedSolution::preset("poly-decay", 0.0, 1, TransverseBc::Dirichlet).unwrap();
        assert_eq!(
            manufactured_forcing(&exact, &ModelParams::new(1.0, 0.0)),
            ForcingSpec::Zero
        );
    }

    #[test]
    fn manufactured_forcing_satisfies_the_equation_pointwise() {
        // hand-expanded residual of the PDE at scattered points
        let exact = ManufacturedSolution::preset("poly-decay", 1.0, 1, TransverseBc::Dirichlet).unwrap();
        for eps in [0.0, 0.01] {
            let p = ModelParams::new(1.0, eps);
            let spec = manufactured_forcing(&exact, &p);
            let ForcingSpec::Manufactured { .. } = spec else {
                panic!()
            };
            for &(x, y, t) in &[(0.13_f64, 0.4_f64, 0.0_f64), (0.71, -1.1, 0.3), (0.5, 0.0, 1.7)] {
                let e = (-t).exp();
                let u = e * poly::x0(x) * y.cos();
                let ux = e * poly::x1(x) * y.cos();
                let residual_free = -u
                    + e * (poly::x3(x) - poly::x1(x)) * y.cos()
                    + ux
                    + u * ux
                    + eps * e * (poly::x4(x) + poly::x0(x)) * y.cos();
                let (f, _) = exact.forcing(x, y, 0.0, t, 1.0, eps, true);
                assert!((f - residual_free).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn forcing_time_derivative_matches_difference_quotient() {
        let exact = ManufacturedSolution::preset("poly-decay", 1.5, 2, TransverseBc::Periodic).unwrap();
        let h = 1e-6;
        let (fp, _) = exact.forcing(0.3, 0.2, -0.5, 0.4 + h, 1.0, 0.01, true);
        let (fm, _) = exact.forcing(0.3, 0.2, -0.5, 0.4 - h, 1.0, 0.01, true);
        let (_, ft) = exact.forcing(0.3, 0.2, -0.5, 0.4, 1.0, 0.01, true);
        assert_abs_diff_eq!((fp - fm) / (2.0 * h), ft, epsilon = 1e-7);
    }

    #[test]
    fn rhs_of_manufactured_state_approximates_time_derivative() {
        let exact = ManufacturedSolution::preset("poly-decay", 1.0, 1, TransverseBc::Dirichlet).unwrap();
        let mut prev = None;
        for nx in [32, 64, 128] {
            let g = grid(nx, TransverseBc::Dirichlet);
            let p = ModelParams::new(1.0, 0.01);
            let p = p.clone().with_forcing(manufactured_forcing(&exact, &p));
            let u = exact.sample(&g, 0.2).unwrap();
            let err = max_diff(&rhs(&u, 0.2, &p).unwrap(), &exact.sample_t(&g, 0.2).unwrap());
            if let Some(e) = prev {
                assert!(e / err > 3.5, "ratio {}", e / err);
            }
            prev = Some(err);
        }
    }

    #[test]
    fn limit_rhs_of_y_constant_profile() {
        let g = grid(128, TransverseBc::Periodic);
        let u = sample(&g, |x, _, _| poly::x0(x)).unwrap().with_tag(BcTag::ZkLimit);
        let r = rhs(&u, 0.0, &ModelParams::new(1.0, 0.0)).unwrap();
        for i in 0..=128 {
            let x = g.x_nodes[i];
            let exact = -(poly::x3(x) + poly::x1(x) + poly::x0(x) * poly::x1(x));
            assert!((r.values[[i, 2, 0]] - exact).abs() < 400.0 * g.hx * g.hx, "i = {i}");
        }
    }

    #[test]
    fn epsilon_enters_linearly() {
        let g = grid(32, TransverseBc::Dirichlet);
        let u = initial_data("poly-bump", 1.0, &g)
            .unwrap()
            .with_tag(BcTag::ZkRegularized);
        let r0 = rhs(&u, 0.0, &ModelParams::new(1.0, 0.0)).unwrap();
        let r1 = rhs(&u, 0.0, &ModelParams::new(1.0, 0.1)).unwrap();
        let l = op_l(&u).unwrap();
        assert!(max_diff(&r0.sub(&r1), &l.scale(0.1)) < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(0.0, 0.1).validate().is_err());
        assert!(ModelParams::new(1.0, -0.1).validate().is_err());
        assert!(ModelParams::new(1.0, 0.0).validate().is_ok());
    }
}
