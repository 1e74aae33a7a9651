//! Discrete differential operators, the operators `A` and `L`, the split
//! nonlinearity and quadrature.
//!
//! Two families of x operators live here:
//!
//! * pointwise second-order stencils ([`derivative`]): centered in the
//!   interior with shifted one-sided closures. These are what diagnostics,
//!   traces and [`crate::model::rhs`] use.
//! * summation-by-parts forms ([`crate::sbp`]) that the time stepper uses,
//!   for which the multiplier identities hold exactly in the discrete norm.
//!
//! Transverse operators are exact on the spectral basis.

use ndarray::{Array2, Array3, ArrayView1, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::geometry::{BcTag, Field, Grid};
use crate::stencil;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Boundary treatment of x stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// Centered stencils only; nodes where they do not fit are set to 0.
    InteriorOnly,
    /// One-sided second-order closures, no boundary information used.
    OneSided,
    /// One-sided closures; the imposed `u_x(1) = 0` is returned exactly.
    LimitBcs,
    /// As [`Closure::LimitBcs`], plus the imposed `u_xx(0) = 0`.
    RegularizedBcs,
}

impl Closure {
    /// Closure matching a field's boundary-condition tag.
    pub fn for_tag(tag: BcTag) -> Self {
        match tag {
            BcTag::Unconstrained => Closure::OneSided,
            BcTag::ZkLimit => Closure::LimitBcs,
            BcTag::ZkRegularized => Closure::RegularizedBcs,
        }
    }

    fn check_tag(self, tag: BcTag) -> Result<()> {
        match (self, tag) {
            (Closure::RegularizedBcs, BcTag::ZkLimit) => Err(ZkError::InvalidArgument(
                "regularized closure applied to a field tagged zk_limit".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A derivative operator along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffOperator {
    pub axis: Axis,
    pub order: usize,
    pub closure: Closure,
}

impl DiffOperator {
    pub fn new(axis: Axis, order: usize, closure: Closure) -> Self {
        DiffOperator { axis, order, closure }
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        derivative(u, self.axis, self.order, self.closure)
    }
}

/// Applies `f` to every x column `u[.., j, k]`.
pub(crate) fn map_x_columns(values: &Array3<f64>, mut f: impl FnMut(ArrayView1<f64>, &mut [f64])) -> Array3<f64> {
    let (n1, ny, nz) = values.dim();
    let mut out = Array3::zeros((n1, ny, nz));
    let mut buf = vec![0.0; n1];
    for j in 0..ny {
        for k in 0..nz {
            let col = values.slice(ndarray::s![.., j, k]);
            f(col, &mut buf);
            for i in 0..n1 {
                out[[i, j, k]] = buf[i];
            }
        }
    }
    out
}

fn x_derivative(u: &Field, order: usize, closure: Closure) -> Array3<f64> {
    let g = &u.grid;
    let n = g.nx();
    let stencils = &g.x_stencils[order];
    let mut out = map_x_columns(&u.values, |col, out| {
        for i in 0..=n {
            out[i] = if closure == Closure::InteriorOnly && !stencil::centered_fits(i, n, order) {
                0.0
            } else {
                stencils[i].apply(|m| col[m])
            };
        }
    });
    match (closure, order) {
        (Closure::LimitBcs | Closure::RegularizedBcs, 1) => {
            out.index_axis_mut(NdAxis(0), n).fill(0.0);
        }
        (Closure::RegularizedBcs, 2) => {
            out.index_axis_mut(NdAxis(0), 0).fill(0.0);
        }
        _ => {}
    }
    out
}

fn transverse_apply(values: &Array3<f64>, m: &Array2<f64>, axis: Axis) -> Array3<f64> {
    let mut out = Array3::zeros(values.dim());
    for (i, slab) in values.outer_iter().enumerate() {
        let r = match axis {
            Axis::Y => m.dot(&slab),
            Axis::Z => slab.dot(&m.t()),
            Axis::X => unreachable!(),
        };
        out.index_axis_mut(NdAxis(0), i).assign(&r);
    }
    out
}

/// The `order`-th derivative of `u` along `axis`.
pub fn derivative(u: &Field, axis: Axis, order: usize, closure: Closure) -> Result<Field> {
    if order > 4 {
        return Err(ZkError::UnsupportedDerivative(format!("order {order} > 4")));
    }
    let g = &u.grid;
    let values = match axis {
        Axis::X => {
            closure.check_tag(u.bc_tag)?;
            x_derivative(u, order, closure)
        }
        Axis::Y => transverse_apply(&u.values, &g.y.deriv[order], Axis::Y),
        Axis::Z => {
            if g.spec.d == 1 {
                return Err(ZkError::UnsupportedDerivative(
                    "z derivative requested on a d = 1 grid".into(),
                ));
            }
            transverse_apply(&u.values, &g.z.deriv[order], Axis::Z)
        }
    };
    Ok(Field {
        grid: g.clone(),
        values,
        bc_tag: BcTag::Unconstrained,
    })
}

/// Transverse Laplacian `u_yy (+ u_zz)`.
pub fn transverse_laplacian(u: &Field) -> Result<Field> {
    let mut out = derivative(u, Axis::Y, 2, Closure::InteriorOnly)?;
    if u.grid.spec.d == 2 {
        out = out.add(&derivative(u, Axis::Z, 2, Closure::InteriorOnly)?);
    }
    Ok(out)
}

/// `A u = Delta u_x + c u_x`, computed as `u_xxx + Delta_perp u_x + c u_x`.
pub fn op_a(u: &Field, c: f64) -> Result<Field> {
    let closure = Closure::for_tag(u.bc_tag);
    let ux = derivative(u, Axis::X, 1, closure)?;
    let uxxx = derivative(u, Axis::X, 3, closure)?;
    let lap_ux = transverse_laplacian(&ux)?;
    Ok(uxxx.add(&lap_ux).add(&ux.scale(c)))
}

/// `L u = u_xxxx + u_yyyy + u_zzzz` (no mixed terms).
pub fn op_l(u: &Field) -> Result<Field> {
    let closure = Closure::for_tag(u.bc_tag);
    let mut out = derivative(u, Axis::X, 4, closure)?;
    out = out.add(&derivative(u, Axis::Y, 4, closure)?);
    if u.grid.spec.d == 2 {
        out = out.add(&derivative(u, Axis::Z, 4, closure)?);
    }
    Ok(out)
}

/// Split form `(1/3) u D_x u + (1/3) D_x (u^2)` of `u u_x`.
pub fn nonlinear_split(u: &Field) -> Result<Field> {
    let closure = match Closure::for_tag(u.bc_tag) {
        // the imposed u_x(1) = 0 does not carry over to (u^2)_x
        Closure::LimitBcs | Closure::RegularizedBcs => Closure::OneSided,
        c => c,
    };
    let ux = derivative(u, Axis::X, 1, closure)?;
    let u2 = u.mul(u);
    let u2x = derivative(&u2, Axis::X, 1, closure)?;
    Ok(u.mul(&ux).add(&u2x).scale(1.0 / 3.0))
}

/// Skew-split nonlinearity on a periodic 1-D grid with the centered
/// difference. Used to check the discrete cancellation of the cubic term.
pub fn nonlinear_split_periodic(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let d = |v: &dyn Fn(usize) -> f64, i: usize| (v((i + 1) % n) - v((i + n - 1) % n)) / (2.0 * h);
    (0..n)
        .map(|i| {
            let ux = d(&|m| u[m], i);
            let u2x = d(&|m| u[m] * u[m], i);
            (u[i] * ux + u2x) / 3.0
        })
        .collect()
}

/// Multiplier weight in x.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    One,
    X,
    OnePlusX,
}

impl Weight {
    pub fn at(self, x: f64) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::X => x,
            Weight::OnePlusX => 1.0 + x,
        }
    }
}

/// Trapezoidal in x, exact for the transverse basis.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub x_weights: Vec<f64>,
    pub y_weights: Vec<f64>,
    pub z_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn for_grid(grid: &Grid) -> Self {
        QuadratureRule {
            x_weights: grid.x_weights(),
            y_weights: grid.y.weights.clone(),
            z_weights: grid.z.weights.clone(),
        }
    }

    pub fn integrate_values(&self, values: &Array3<f64>) -> f64 {
        let mut s = 0.0;
        for ((i, j, k), v) in values.indexed_iter() {
            s += self.x_weights[i] * self.y_weights[j] * self.z_weights[k] * v;
        }
        s
    }
}

/// `int_M w(x) u dM`.
pub fn integrate(u: &Field, weight: Weight) -> f64 {
    let g = &u.grid;
    let q = QuadratureRule::for_grid(g);
    let mut s = 0.0;
    for ((i, j, k), v) in u.values.indexed_iter() {
        s += q.x_weights[i] * weight.at(g.x_nodes[i]) * q.y_weights[j] * q.z_weights[k] * v;
    }
    s
}

/// `(w u, v)` in `L^2(M)`.
pub fn inner(u: &Field, v: &Field, weight: Weight) -> f64 {
    integrate(&u.mul(v), weight)
}

/// `|sqrt(w) u|`.
pub fn norm(u: &Field, weight: Weight) -> f64 {
    inner(u, u, weight).max(0.0).sqrt()
}

/// Which end of the x interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XEnd {
    Left,
    Right,
}

/// Trace of the `order`-th x derivative at one end, per transverse point,
/// using the second-order one-sided closures.
pub fn x_trace(u: &Field, end: XEnd, order: usize) -> Array2<f64> {
    let g = &u.grid;
    let n = g.nx();
    let i = match end {
        XEnd::Left => 0,
        XEnd::Right => n,
    };
    let s = &g.x_stencils[order][i];
    let (_, ny, nz) = g.shape();
    Array2::from_shape_fn((ny, nz), |(j, k)| s.apply(|m| u.values[[m, j, k]]))
}

/// `L^2` norm over the transverse section of a trace.
pub fn transverse_norm(grid: &Grid, trace: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    for ((j, k), v) in trace.indexed_iter() {
        s += grid.transverse_weight(j, k) * v * v;
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, sample, GridSpec, TransverseBc};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid(nx: usize, ny: usize) -> std::sync::Arc<Grid> {
        make_grid(GridSpec::new(1, nx, ny, 0, TransverseBc::Dirichlet)).unwrap()
    }

    fn poly(x: f64) -> f64 {
        x.powi(3) * (1.0 - x).powi(2)
    }
    fn poly_x(x: f64) -> f64 {
        3.0 * x * x - 8.0 * x.powi(3) + 5.0 * x.powi(4)
    }
    fn poly_xxx(x: f64) -> f64 {
        6.0 - 48.0 * x + 60.0 * x * x
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let g = grid(16, 8);
        let u = Field::zeros(&g);
        for axis in [Axis::X, Axis::Y] {
            for order in 1..=4 {
                let d = derivative(&u, axis, order, Closure::OneSided).unwrap();
                assert!(d.values.iter().all(|v| *v == 0.0));
            }
        }
        assert_eq!(op_a(&u, 1.0).unwrap().max_abs(), 0.0);
        assert_eq!(op_l(&u).unwrap().max_abs(), 0.0);
        assert_eq!(nonlinear_split(&u).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn unsupported_derivatives_are_errors() {
        let g = grid(16, 8);
        let u = Field::zeros(&g);
        assert!(derivative(&u, Axis::X, 5, Closure::OneSided).is_err());
        assert!(derivative(&u, Axis::Z, 2, Closure::OneSided).is_err());
        let lim = u.clone().with_tag(BcTag::ZkLimit);
        assert!(derivative(&lim, Axis::X, 2, Closure::RegularizedBcs).is_err());
    }

    #[test]
    fn third_x_derivative_converges_at_second_order() {
        let mut prev: Option<f64> = None;
        for nx in [16, 32, 64, 128] {
            let g = grid(nx, 4);
            let u = sample(&g, |x, _, _| poly(x)).unwrap();
            let d = derivative(&u, Axis::X, 3, Closure::OneSided).unwrap();
            let err = (0..=nx)
                .map(|i| (d.values[[i, 1, 0]] - poly_xxx(g.x_nodes[i])).abs())
                .fold(0.0, f64::max);
            if let Some(p) = prev {
                let ratio = p / err;
                assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn cosine_is_an_eigenfunction_of_dyy() {
        let g = grid(16, 12);
        let u = sample(&g, |_, y, _| y.cos()).unwrap();
        let d = derivative(&u, Axis::Y, 2, Closure::OneSided).unwrap();
        for (a, b) in d.values.iter().zip(u.values.iter()) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-13);
        }
    }

    #[test]
    fn op_a_on_y_constant_profile() {
        // periodic walls so that a y-constant field is representable
        let g = make_grid(GridSpec::new(1, 64, 8, 0, TransverseBc::Periodic)).unwrap();
        let u = sample(&g, |x, _, _| poly(x)).unwrap();
        let a = op_a(&u, 1.0).unwrap();
        for i in 0..=64 {
            let x = g.x_nodes[i];
            let exact = poly_xxx(x) + poly_x(x);
            assert!((a.values[[i, 3, 0]] - exact).abs() < 400.0 * g.hx * g.hx, "i = {i}");
        }
    }

    #[test]
    fn op_a_with_transverse_cosine() {
        let g = grid(64, 10);
        let u = sample(&g, |x, y, _| poly(x) * y.cos()).unwrap();
        let a = op_a(&u, 0.0).unwrap();
        for i in 0..=64 {
            for j in 0..10 {
                let x = g.x_nodes[i];
                let y = g.y.points[j];
                let exact = (poly_xxx(x) - poly_x(x)) * y.cos();
                assert!((a.values[[i, j, 0]] - exact).abs() < 400.0 * g.hx * g.hx);
            }
        }
    }

    #[test]
    fn op_l_of_cosine_is_cosine() {
        let g = grid(16, 12);
        let u = sample(&g, |_, y, _| y.cos()).unwrap();
        let l = op_l(&u).unwrap();
        for (a, b) in l.values.iter().zip(u.values.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-7);
        }
    }

    #[test]
    fn quartic_has_constant_interior_fourth_difference() {
        let g = grid(16, 4);
        let u = sample(&g, |x, _, _| x.powi(4)).unwrap();
        let d = derivative(&u, Axis::X, 4, Closure::InteriorOnly).unwrap();
        for i in 2..=14 {
            assert_abs_diff_eq!(d.values[[i, 0, 0]], 24.0, epsilon = 1e-7);
        }
        assert_eq!(d.values[[0, 0, 0]], 0.0);
        assert_eq!(d.values[[16, 0, 0]], 0.0);
    }

    #[test]
    fn split_nonlinearity_vanishes_on_constants_in_the_interior() {
        let g = grid(16, 4);
        let u = sample(&g, |_, _, _| 3.0).unwrap();
        let n = nonlinear_split(&u).unwrap();
        assert!(n.max_abs() < 1e-10);
    }

    #[test]
    fn periodic_split_form_is_energy_neutral() {
        let n = 64;
        let h = 1.0 / n as f64;
        let u: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * i as f64 * h).sin() + 0.3 * (6.0 * PI * i as f64 * h).cos())
            .collect();
        let nl = nonlinear_split_periodic(&u, h);
        let s: f64 = u.iter().zip(&nl).map(|(a, b)| a * b * h).sum();
        assert!(s.abs() < 1e-15, "{s}");
    }

    #[test]
    fn split_nonlinearity_converges_to_u_ux() {
        let mut prev: Option<f64> = None;
        for nx in [32, 64, 128] {
            let g = grid(nx, 6);
            let u = sample(&g, |x, y, _| poly(x) * y.cos()).unwrap();
            let n = nonlinear_split(&u).unwrap();
            let mut err = 0.0_f64;
            for ((i, j, _), v) in n.values.indexed_iter() {
                let x = g.x_nodes[i];
                let c = g.y.points[j].cos();
                err = err.max((v - poly(x) * poly_x(x) * c * c).abs());
            }
            if let Some(p) = prev {
                assert!(p / err > 3.5, "ratio {}", p / err);
            }
            prev = Some(err);
        }
    }

    #[test]
    fn integrals_of_simple_fields() {
        let g = make_grid(GridSpec::new(1, 32, 9, 0, TransverseBc::Dirichlet)).unwrap();
        let one = sample(&g, |_, _, _| 1.0).unwrap();
        assert_abs_diff_eq!(integrate(&one, Weight::One), PI, epsilon = 1e-13);
        assert_abs_diff_eq!(integrate(&one, Weight::X), PI / 2.0, epsilon = 1e-13);
        let u = sample(&g, |x, _, _| poly(x)).unwrap();
        // trapezoid error is O(h^2)
        assert_abs_diff_eq!(integrate(&u, Weight::One), PI / 60.0, epsilon = 1e-4);
        let sum = integrate(&u, Weight::One) + integrate(&u, Weight::X);
        assert_abs_diff_eq!(integrate(&u, Weight::OnePlusX), sum, epsilon = 1e-15);
    }

    #[test]
    fn volume_in_two_transverse_dimensions() {
        for bc in [TransverseBc::Dirichlet, TransverseBc::Periodic] {
            let g = make_grid(GridSpec::new(2, 8, 6, 5, bc)).unwrap();
            let one = sample(&g, |_, _, _| 1.0).unwrap();
            assert_abs_diff_eq!(integrate(&one, Weight::One), PI * PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn transverse_and_x_operators_commute() {
        let g = make_grid(GridSpec::new(2, 24, 8, 6, TransverseBc::Dirichlet)).unwrap();
        let u = sample(&g, |x, y, z| poly(x) * y.cos() * (1.0 + x) * (2.0 * z).sin()).unwrap();
        let a = derivative(
            &derivative(&u, Axis::Y, 2, Closure::OneSided).unwrap(),
            Axis::X,
            1,
            Closure::OneSided,
        )
        .unwrap();
        let b = derivative(
            &derivative(&u, Axis::X, 1, Closure::OneSided).unwrap(),
            Axis::Y,
            2,
            Closure::OneSided,
        )
        .unwrap();
        for (p, q) in a.values.iter().zip(b.values.iter()) {
            assert_abs_diff_eq!(*p, *q, epsilon = 1e-10);
        }
    }
}
