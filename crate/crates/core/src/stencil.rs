//! Finite-difference weights on arbitrary node sets.
//!
//! Fornberg's recursion: given nodes `x[0..n]` and an evaluation point `z`,
//! produce weights `c[k][j]` such that `sum_j c[k][j] * f(x[j])` approximates
//! the `k`-th derivative of `f` at `z` for every `k <= m`.

/// Weights for derivative orders `0..=m` at `z` using the nodes `x`.
///
/// The result is indexed `[order][node]`.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// A stencil anchored at `start` on a uniform 1-D index set.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl Stencil {
    /// Applies the stencil to `values`, starting at `self.start`.
    #[inline]
    pub fn apply(&self, values: impl Fn(usize) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * values(self.start + k))
            .sum()
    }
}

/// Weights for the `order`-th derivative at node `at` using nodes
/// `start..start + width` of a uniform grid with spacing `h`.
pub fn uniform(at: usize, start: usize, width: usize, order: usize, h: f64) -> Stencil {
    // Work in index units and rescale, keeps the recursion well conditioned.
    let nodes: Vec<f64> = (0..width).map(|k| (start + k) as f64).collect();
    let w = fornberg(at as f64, &nodes, order);
    let scale = h.powi(order as i32);
    Stencil {
        start,
        weights: w[order].iter().map(|c| c / scale).collect(),
    }
}

/// Width of the centered second-order stencil for a derivative order.
pub fn centered_width(order: usize) -> usize {
    2 * order.div_ceil(2) + 1
}

/// Second-order stencil at node `i` of a grid with nodes `0..=n`.
///
/// Centered where it fits, shifted one-sided with `order + 2` nodes otherwise.
pub fn second_order(i: usize, n: usize, order: usize, h: f64) -> Stencil {
    if order == 0 {
        return Stencil {
            start: i,
            weights: vec![1.0],
        };
    }
    let cw = centered_width(order);
    let r = cw / 2;
    if i >= r && i + r <= n {
        return uniform(i, i - r, cw, order, h);
    }
    let width = order + 2;
    let start = if i < r { 0 } else { n + 1 - width };
    uniform(i, start, width, order, h)
}

/// True when the centered stencil of `order` fits at node `i`.
pub fn centered_fits(i: usize, n: usize, order: usize) -> bool {
    let r = centered_width(order) / 2;
    i >= r && i + r <= n
}
