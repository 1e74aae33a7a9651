//! Domain, grids and discrete fields on `M = (0,1) x (-pi/2, pi/2)^d`.
//!
//! The x direction is a uniform node set `x_i = i / nx`. Each transverse
//! direction is spectral: for Dirichlet walls the basis is `sin(k (y + pi/2))`,
//! `k = 1..ny-2`, sampled on `ny` equispaced points that include both walls, so
//! `u = u_yy = 0` at the walls holds identically. For periodic walls the basis
//! is the real Fourier basis of period `pi` (integer wavenumbers `0, 2, 4, ...`)
//! sampled on `ny` equispaced points.
//!
//! When `d = 1` the `z` direction is a trivial axis of one point, so every
//! field is stored as an `(nx + 1, ny, nz_eff)` array.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use ndarray::{Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::stencil::{self, Stencil};

/// Boundary treatment on the transverse walls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransverseBc {
    Dirichlet,
    Periodic,
}

impl std::str::FromStr for TransverseBc {
    type Err = ZkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(TransverseBc::Dirichlet),
            "periodic" => Ok(TransverseBc::Periodic),
            other => Err(ZkError::InvalidArgument(format!(
                "transverse_bc must be \"dirichlet\" or \"periodic\", got \"{other}\""
            ))),
        }
    }
}

pub const MIN_NX: usize = 8;
pub const MIN_NY: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub transverse_bc: TransverseBc,
}

impl GridSpec {
    pub fn new(d: usize, nx: usize, ny: usize, nz: usize, transverse_bc: TransverseBc) -> Self {
        GridSpec {
            d,
            nx,
            ny,
            nz,
            transverse_bc,
        }
    }

    /// Number of stored points along z (1 when `d = 1`).
    pub fn nz_eff(&self) -> usize {
        if self.d == 1 {
            1
        } else {
            self.nz
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != 1 && self.d != 2 {
            return Err(ZkError::InvalidGrid(format!(
                "transverse dimension d must be 1 or 2, got {}",
                self.d
            )));
        }
        if self.nx < MIN_NX {
            return Err(ZkError::GridTooCoarse(format!("nx = {} < {MIN_NX}", self.nx)));
        }
        if self.ny < MIN_NY {
            return Err(ZkError::GridTooCoarse(format!("ny = {} < {MIN_NY}", self.ny)));
        }
        if self.d == 2 && self.nz < MIN_NY {
            return Err(ZkError::GridTooCoarse(format!("nz = {} < {MIN_NY}", self.nz)));
        }
        Ok(())
    }
}

/// One basis function `k^0 sin(k (y - shift) + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct BasisFn {
    k: f64,
    shift: f64,
    phase: f64,
}

impl BasisFn {
    fn eval(&self, y: f64, order: usize) -> f64 {
        let arg = self.k * (y - self.shift) + self.phase + order as f64 * FRAC_PI_2;
        self.k.powi(order as i32) * arg.sin()
    }
}

/// Spectral description of one transverse direction.
#[derive(Clone, Debug)]
pub struct TransverseAxis {
    pub bc: TransverseBc,
    pub points: Vec<f64>,
    /// Trapezoidal weights; exact for products of basis functions.
    pub weights: Vec<f64>,
    /// Wavenumber of each modal coefficient.
    pub wavenumbers: Vec<f64>,
    /// `modes x points`: physical values to modal coefficients.
    pub to_modal: Array2<f64>,
    /// `points x modes`: modal coefficients to physical values.
    pub to_phys: Array2<f64>,
    /// `points x points` derivative matrices for orders `0..=4`.
    pub deriv: [Array2<f64>; 5],
}

impl TransverseAxis {
    /// Single-point axis used for `z` when `d = 1`.
    fn trivial() -> Self {
        let one = Array2::from_elem((1, 1), 1.0);
        let zero = Array2::zeros((1, 1));
        TransverseAxis {
            bc: TransverseBc::Periodic,
            points: vec![0.0],
            weights: vec![1.0],
            wavenumbers: vec![0.0],
            to_modal: one.clone(),
            to_phys: one.clone(),
            deriv: [one, zero.clone(), zero.clone(), zero.clone(), zero],
        }
    }

    fn new(n: usize, bc: TransverseBc) -> Self {
        let (points, weights, basis) = match bc {
            TransverseBc::Dirichlet => {
                let dy = PI / (n - 1) as f64;
                let points: Vec<f64> = (0..n).map(|j| -FRAC_PI_2 + j as f64 * dy).collect();
                let mut weights = vec![dy; n];
                weights[0] = 0.5 * dy;
                weights[n - 1] = 0.5 * dy;
                let basis: Vec<BasisFn> = (1..=n - 2)
                    .map(|k| BasisFn {
                        k: k as f64,
                        shift: -FRAC_PI_2,
                        phase: 0.0,
                    })
                    .collect();
                (points, weights, basis)
            }
            TransverseBc::Periodic => {
                let dy = PI / n as f64;
                let points: Vec<f64> = (0..n).map(|j| -FRAC_PI_2 + j as f64 * dy).collect();
                let weights = vec![dy; n];
                let mut basis = vec![BasisFn {
                    k: 0.0,
                    shift: 0.0,
                    phase: FRAC_PI_2,
                }];
                let mut m = 1;
                while basis.len() < n {
                    let k = 2.0 * m as f64;
                    basis.push(BasisFn {
                        k,
                        shift: 0.0,
                        phase: FRAC_PI_2,
                    });
                    if basis.len() < n {
                        basis.push(BasisFn {
                            k,
                            shift: 0.0,
                            phase: 0.0,
                        });
                    }
                    m += 1;
                }
                (points, weights, basis)
            }
        };
        let nm = basis.len();
        let phys = |order: usize| Array2::from_shape_fn((n, nm), |(j, b)| basis[b].eval(points[j], order));
        let to_phys = phys(0);
        // Discrete orthogonality under the trapezoidal weights.
        let mut to_modal = Array2::zeros((nm, n));
        for b in 0..nm {
            let norm: f64 = (0..n).map(|j| weights[j] * to_phys[[j, b]].powi(2)).sum();
            for j in 0..n {
                to_modal[[b, j]] = weights[j] * to_phys[[j, b]] / norm;
            }
        }
        let deriv = [0, 1, 2, 3, 4].map(|order| phys(order).dot(&to_modal));
        TransverseAxis {
            bc,
            points,
            weights,
            wavenumbers: basis.iter().map(|b| b.k).collect(),
            to_modal,
            to_phys,
            deriv,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.wavenumbers.len()
    }

    /// Indices of wall points (Dirichlet only).
    pub fn wall_indices(&self) -> Vec<usize> {
        match self.bc {
            TransverseBc::Dirichlet if self.len() > 1 => vec![0, self.len() - 1],
            _ => Vec::new(),
        }
    }
}

/// Computational grid; immutable once built and shared through `Arc`.
#[derive(Debug)]
pub struct Grid {
    pub spec: GridSpec,
    pub x_nodes: Vec<f64>,
    pub hx: f64,
    pub y: TransverseAxis,
    pub z: TransverseAxis,
    /// Second-order pointwise x stencils, `[order][node]`.
    pub(crate) x_stencils: [Vec<Stencil>; 5],
}

impl Grid {
    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    /// Array shape `(nx + 1, ny, nz_eff)` of every field on this grid.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.spec.nx + 1, self.y.len(), self.z.len())
    }

    pub fn len(&self) -> usize {
        let (a, b, c) = self.shape();
        a * b * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of `M`, `pi^d`.
    pub fn volume(&self) -> f64 {
        PI.powi(self.spec.d as i32)
    }

    /// Modal shape `(nx + 1, modes_y, modes_z)`.
    pub fn modal_shape(&self) -> (usize, usize, usize) {
        (self.spec.nx + 1, self.y.n_modes(), self.z.n_modes())
    }

    /// Trapezoidal x weights.
    pub fn x_weights(&self) -> Vec<f64> {
        let n = self.spec.nx;
        (0..=n)
            .map(|i| if i == 0 || i == n { 0.5 * self.hx } else { self.hx })
            .collect()
    }

    /// Transverse weight of the point `(j, k)`.
    pub fn transverse_weight(&self, j: usize, k: usize) -> f64 {
        self.y.weights[j] * self.z.weights[k]
    }
}

pub fn make_grid(spec: GridSpec) -> Result<Arc<Grid>> {
    spec.validate()?;
    let nx = spec.nx;
    let hx = 1.0 / nx as f64;
    let x_nodes: Vec<f64> = (0..=nx).map(|i| i as f64 * hx).collect();
    let x_stencils = [0, 1, 2, 3, 4].map(|order| (0..=nx).map(|i| stencil::second_order(i, nx, order, hx)).collect());
    let y = TransverseAxis::new(spec.ny, spec.transverse_bc);
    let z = if spec.d == 2 {
        TransverseAxis::new(spec.nz, spec.transverse_bc)
    } else {
        TransverseAxis::trivial()
    };
    Ok(Arc::new(Grid {
        spec,
        x_nodes,
        hx,
        y,
        z,
        x_stencils,
    }))
}

/// Which x-boundary conditions a field is meant to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcTag {
    Unconstrained,
    /// `u(0) = u(1) = u_x(1) = 0`.
    ZkLimit,
    /// Additionally `u_xx(0) = 0`.
    ZkRegularized,
}

/// A real grid function; values are indexed `[i, j, k]` for `(x, y, z)`.
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Array3<f64>,
    pub bc_tag: BcTag,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Field {
            grid: grid.clone(),
            values: Array3::zeros(grid.shape()),
            bc_tag: BcTag::Unconstrained,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Array3<f64>, bc_tag: BcTag) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(ZkError::GridMismatch(format!(
                "values have shape {:?}, grid expects {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(ZkError::InvalidArgument(format!("non-finite field value {v}")));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
            bc_tag,
        })
    }

    pub fn with_tag(mut self, tag: BcTag) -> Self {
        self.bc_tag = tag;
        self
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.spec == other.grid.spec
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(ZkError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid.spec, other.grid.spec
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.mapv(f),
            bc_tag: BcTag::Unconstrained,
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut values = self.values.clone();
        Zip::from(&mut values)
            .and(&other.values)
            .for_each(|a, &b| *a = f(*a, b));
        Field {
            grid: self.grid.clone(),
            values,
            bc_tag: BcTag::Unconstrained,
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// Multiplies by a function of x only.
    pub fn weight_x(&self, w: impl Fn(f64) -> f64) -> Field {
        let mut out = self.clone();
        for (i, mut slab) in out.values.outer_iter_mut().enumerate() {
            let wi = w(self.grid.x_nodes[i]);
            slab.mapv_inplace(|v| v * wi);
        }
        out.bc_tag = BcTag::Unconstrained;
        out
    }
}

/// Samples `f(x, y, z)` at every grid point; `z = 0` when `d = 1`.
pub fn sample(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> f64) -> Result<Field> {
    let (nx1, ny, nz) = grid.shape();
    let mut values = Array3::zeros((nx1, ny, nz));
    for i in 0..nx1 {
        let x = grid.x_nodes[i];
        for j in 0..ny {
            let y = grid.y.points[j];
            for k in 0..nz {
                let z = grid.z.points[k];
                let v = f(x, y, z);
                if !v.is_finite() {
                    return Err(ZkError::NonFiniteSample { x, y, z, value: v });
                }
                values[[i, j, k]] = v;
            }
        }
    }
    Ok(Field {
        grid: grid.clone(),
        values,
        bc_tag: BcTag::Unconstrained,
    })
}

/// Max-abs residuals of the x-boundary conditions, using second-order
/// one-sided differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct XBoundaryResiduals {
    pub u_at_0: f64,
    pub u_at_1: f64,
    pub ux_at_1: f64,
    pub uxx_at_0: f64,
}

impl XBoundaryResiduals {
    pub fn max_for(&self, tag: BcTag) -> f64 {
        match tag {
            BcTag::Unconstrained => 0.0,
            BcTag::ZkLimit => self.u_at_0.max(self.u_at_1).max(self.ux_at_1),
            BcTag::ZkRegularized => self.u_at_0.max(self.u_at_1).max(self.ux_at_1).max(self.uxx_at_0),
        }
    }
}

pub fn x_boundary_residuals(u: &Field) -> XBoundaryResiduals {
    let g = &u.grid;
    let n = g.nx();
    let ux1 = &g.x_stencils[1][n];
    let uxx0 = &g.x_stencils[2][0];
    let mut r = XBoundaryResiduals::default();
    let (_, ny, nz) = g.shape();
    for j in 0..ny {
        for k in 0..nz {
            let col = |i: usize| u.values[[i, j, k]];
            r.u_at_0 = r.u_at_0.max(col(0).abs());
            r.u_at_1 = r.u_at_1.max(col(n).abs());
            r.ux_at_1 = r.ux_at_1.max(ux1.apply(col).abs());
            r.uxx_at_0 = r.uxx_at_0.max(uxx0.apply(col).abs());
        }
    }
    r
}

/// Max-abs value of `u` on the Dirichlet walls (0 for periodic walls).
pub fn transverse_wall_residual(u: &Field) -> f64 {
    let g = &u.grid;
    let mut m = 0.0_f64;
    for j in g.y.wall_indices() {
        m = u
            .values
            .index_axis(ndarray::Axis(1), j)
            .iter()
            .fold(m, |m, v| m.max(v.abs()));
    }
    for k in g.z.wall_indices() {
        m = u
            .values
            .index_axis(ndarray::Axis(2), k)
            .iter()
            .fold(m, |m, v| m.max(v.abs()));
    }
    m
}

/// One named boundary condition residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResidual {
    pub condition: String,
    pub value: f64,
}

/// Residuals of the initial-data compatibility conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// Conditions on `u0`.
    pub u0: Vec<BoundaryResidual>,
    /// Conditions on the induced `u_t(0)`.
    pub ut0: Vec<BoundaryResidual>,
    pub tolerance: f64,
    pub passed: bool,
}

impl CompatibilityReport {
    pub fn residual(&self, condition: &str) -> Option<f64> {
        self.u0
            .iter()
            .chain(&self.ut0)
            .find(|r| r.condition == condition)
            .map(|r| r.value)
    }
}

fn boundary_conditions(prefix: &str, u: &Field) -> Result<Vec<BoundaryResidual>> {
    use crate::operators::{derivative, Axis, Closure};
    let xr = x_boundary_residuals(u);
    let mut out = vec![
        BoundaryResidual {
            condition: format!("{prefix} at x=0"),
            value: xr.u_at_0,
        },
        BoundaryResidual {
            condition: format!("{prefix} at x=1"),
            value: xr.u_at_1,
        },
        BoundaryResidual {
            condition: format!("{prefix}_x at x=1"),
            value: xr.ux_at_1,
        },
    ];
    if u.grid.spec.transverse_bc == TransverseBc::Dirichlet {
        out.push(BoundaryResidual {
            condition: format!("{prefix} at transverse walls"),
            value: transverse_wall_residual(u),
        });
        let uyy = derivative(u, Axis::Y, 2, Closure::InteriorOnly)?;
        let mut second = transverse_wall_residual(&uyy);
        if u.grid.spec.d == 2 {
            let uzz = derivative(u, Axis::Z, 2, Closure::InteriorOnly)?;
            second = second.max(transverse_wall_residual(&uzz));
        }
        out.push(BoundaryResidual {
            condition: format!("{prefix} second transverse derivative at walls"),
            value: second,
        });
    }
    Ok(out)
}

/// Checks the compatibility conditions on `u0` and on the induced
/// `u_t0 = -Delta u0_x - u0 u0_x - c u0_x + f(0)`.
pub fn check_compatibility(u0: &Field, params: &crate::model::ModelParams, tol: f64) -> Result<CompatibilityReport> {
    let ut0 = crate::model::limit_time_derivative(u0, params, 0.0)?;
    let u0r = boundary_conditions("u0", u0)?;
    let ut0r = boundary_conditions("ut0", &ut0)?;
    let passed = u0r.iter().chain(&ut0r).all(|r| r.value <= tol);
    Ok(CompatibilityReport {
        u0: u0r,
        ut0: ut0r,
        tolerance: tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec1(nx: usize, ny: usize) -> GridSpec {
        GridSpec::new(1, nx, ny, 0, TransverseBc::Dirichlet)
    }

    #[test]
    fn uniform_x_nodes() {
        let g = make_grid(spec1(8, 4)).unwrap();
        assert_eq!(g.x_nodes.len(), 9);
        for (i, x) in g.x_nodes.iter().enumerate() {
            assert_eq!(*x, i as f64 / 8.0);
        }
        let dx: Vec<f64> = g.x_nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let max = dx.iter().cloned().fold(f64::MIN, f64::max);
        let min = dx.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(max / min, 1.0);
    }

    #[test]
    fn periodic_wavenumbers_are_integers() {
        let g = make_grid(GridSpec::new(2, 16, 8, 8, TransverseBc::Periodic)).unwrap();
        for k in g.y.wavenumbers.iter().chain(&g.z.wavenumbers) {
            assert_eq!(k.fract(), 0.0);
        }
        assert_eq!(g.shape(), (17, 8, 8));
    }

    #[test]
    fn coarse_grids_are_rejected() {
        let err = make_grid(spec1(4, 4)).unwrap_err();
        assert!(err.to_string().contains("grid too coarse"));
        assert!(make_grid(spec1(8, 3)).is_err());
        assert!(make_grid(GridSpec::new(3, 8, 4, 4, TransverseBc::Dirichlet)).is_err());
    }

    #[test]
    fn d1_has_no_z_extent() {
        let g = make_grid(GridSpec::new(1, 8, 4, 99, TransverseBc::Dirichlet)).unwrap();
        assert_eq!(g.shape(), (9, 4, 1));
    }

    #[test]
    fn modal_round_trip_is_identity() {
        for bc in [TransverseBc::Dirichlet, TransverseBc::Periodic] {
            for n in [4, 5, 8, 16] {
                let ax = TransverseAxis::new(n, bc);
                let id = ax.to_modal.dot(&ax.to_phys);
                for a in 0..ax.n_modes() {
                    for b in 0..ax.n_modes() {
                        let e = if a == b { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(id[[a, b]], e, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dirichlet_basis_second_derivative_vanishes_at_walls() {
        let ax = TransverseAxis::new(12, TransverseBc::Dirichlet);
        for b in 0..ax.n_modes() {
            let f = BasisFn {
                k: ax.wavenumbers[b],
                shift: -FRAC_PI_2,
                phase: 0.0,
            };
            assert_abs_diff_eq!(f.eval(-FRAC_PI_2, 2), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.eval(FRAC_PI_2, 2), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.eval(FRAC_PI_2, 0), 0.0, epsilon = 1e-12);
        }
        // the matrix form is exact at the walls
        let d2 = &ax.deriv[2];
        for c in 0..ax.len() {
            assert!(d2[[0, c]].abs() < 1e-12);
            assert!(d2[[ax.len() - 1, c]].abs() < 1e-12);
        }
    }

    #[test]
    fn zero_function_samples_to_exact_zero() {
        let g = make_grid(spec1(16, 8)).unwrap();
        let f = sample(&g, |_, _, _| 0.0).unwrap();
        assert!(f.values.iter().all(|v| v.to_bits() == 0.0_f64.to_bits()));
    }

    #[test]
    fn compatible_profile_vanishes_on_boundary() {
        let g = make_grid(spec1(32, 8)).unwrap();
        let f = sample(&g, |x, y, _| x.powi(3) * (1.0 - x).powi(2) * y.cos()).unwrap();
        let r = x_boundary_residuals(&f);
        assert_eq!(r.u_at_0, 0.0);
        assert_eq!(r.u_at_1, 0.0);
        assert!(transverse_wall_residual(&f) < 1e-16);
    }

    #[test]
    fn singular_sample_is_reported() {
        let g = make_grid(spec1(8, 4)).unwrap();
        let err = sample(&g, |x, _, _| 1.0 / x).unwrap_err();
        match err {
            ZkError::NonFiniteSample { x, .. } => assert_eq!(x, 0.0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn boundary_residuals_converge_at_second_order() {
        let mut prev = None;
        for nx in [16, 32, 64, 128] {
            let g = make_grid(spec1(nx, 8)).unwrap();
            let f = sample(&g, |x, y, _| x.powi(3) * (1.0 - x).powi(2) * y.cos())
                .unwrap()
                .with_tag(BcTag::ZkRegularized);
            let r = x_boundary_residuals(&f).max_for(f.bc_tag);
            if let Some(p) = prev {
                assert!(p / r >= 3.5, "ratio {}", p / r);
            }
            prev = Some(r);
        }
    }
}
