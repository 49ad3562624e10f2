//! Tensor-product Gauss–Legendre quadrature on boxes.
//!
//! Summation order is fixed (lexicographic over panels, then nodes, axis 0
//! fastest) so results are bitwise reproducible.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point, MAX_DIM};

/// Hard cap on the number of integrand evaluations of a single rule.
pub const MAX_QUADRATURE_POINTS: usize = 20_000_000;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of `P_n` by Newton iteration from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// One-dimensional integral over `[a, b]`.
    pub fn integrate_1d(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Default per-axis node counts by chart dimension.
pub fn default_nodes(dim: usize) -> usize {
    match dim {
        1 => 64,
        2 => 48,
        _ => 24,
    }
}

/// A composite tensor-product Gauss–Legendre rule: `panels` equal panels per
/// axis, each carrying `nodes` Gauss points.
#[derive(Debug, Clone)]
pub struct Quadrature {
    rule: Arc<GaussLegendre>,
    panels: usize,
    dim: usize,
}

impl Quadrature {
    pub fn new(dim: usize, nodes: usize, panels: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || nodes == 0 || panels == 0 {
            return Err(Error::InvalidInput(format!(
                "bad quadrature spec dim={dim} nodes={nodes} panels={panels}"
            )));
        }
        let per_axis = nodes.saturating_mul(panels);
        let points = per_axis.saturating_pow(dim as u32);
        if points > MAX_QUADRATURE_POINTS {
            return Err(Error::QuadratureBudget {
                points,
                limit: MAX_QUADRATURE_POINTS,
            });
        }
        Ok(Self {
            rule: Arc::new(GaussLegendre::new(nodes)),
            panels,
            dim,
        })
    }

    pub fn default_for_dim(dim: usize) -> Self {
        Self::new(dim, default_nodes(dim), 1).expect("default rule within budget")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.rule.len()
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    /// Same rule with twice the nodes per panel.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.dim, 2 * self.rule.len(), self.panels)
    }

    fn axis_points(&self, domain: &BoxDomain, axis: usize) -> Vec<(f64, f64)> {
        let lo = domain.lower.coords()[axis];
        let width = domain.width(axis) / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.rule.len());
        for k in 0..self.panels {
            let a = lo + k as f64 * width;
            let half = 0.5 * width;
            let mid = a + half;
            for (x, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
                out.push((mid + half * x, w * half));
            }
        }
        out
    }

    /// Visits every node with its weight, axis 0 fastest.
    pub fn for_each_node(&self, domain: &BoxDomain, mut visit: impl FnMut(&Point, f64)) {
        assert_eq!(domain.dim(), self.dim, "domain dimension differs from rule");
        let axes: Vec<Vec<(f64, f64)>> = (0..self.dim).map(|a| self.axis_points(domain, a)).collect();
        let per_axis = axes[0].len();
        let total = per_axis.pow(self.dim as u32);
        let mut coords = [0.0; MAX_DIM];
        for mut flat in 0..total {
            let mut w = 1.0;
            for (axis, pts) in axes.iter().enumerate() {
                let (x, wx) = pts[flat % per_axis];
                flat /= per_axis;
                coords[axis] = x;
                w *= wx;
            }
            visit(&Point::new(&coords[..self.dim]), w);
        }
    }

    /// All nodes with weights in visiting order.
    pub fn nodes(&self, domain: &BoxDomain) -> Vec<(Point, f64)> {
        let mut out = Vec::new();
        self.for_each_node(domain, |p, w| out.push((*p, w)));
        out
    }

    pub fn integrate(&self, domain: &BoxDomain, f: impl Fn(&Point) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_node(domain, |p, w| acc += w * f(p));
        acc
    }

    /// Fallible scalar integral; the first error aborts.
    pub fn try_integrate(
        &self,
        domain: &BoxDomain,
        f: impl Fn(&Point) -> Result<f64>,
    ) -> Result<f64> {
        let mut acc = 0.0;
        let mut err = None;
        self.for_each_node(domain, |p, w| {
            if err.is_some() {
                return;
            }
            match f(p) {
                Ok(v) => acc += w * v,
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }

    /// Vector-valued integral; `f` writes `len` values per node.
    pub fn try_integrate_vec(
        &self,
        domain: &BoxDomain,
        len: usize,
        f: impl Fn(&Point, &mut [f64]) -> Result<()>,
    ) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; len];
        let mut buf = vec![0.0; len];
        let mut err = None;
        self.for_each_node(domain, |p, w| {
            if err.is_some() {
                return;
            }
            buf.iter_mut().for_each(|b| *b = 0.0);
            match f(p, &mut buf) {
                Ok(()) => acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += w * b),
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }

    /// Integral with a doubling check: fails with [`Error::UnderResolved`] when
    /// doubling the node count moves the result by more than `rel_tol` (relative
    /// to `max(1, |I|)`).
    pub fn integrate_checked(
        &self,
        domain: &BoxDomain,
        rel_tol: f64,
        f: impl Fn(&Point) -> f64,
    ) -> Result<f64> {
        let coarse = self.integrate(domain, &f);
        let fine = self.refined()?.integrate(domain, &f);
        let change = (fine - coarse).abs();
        let tolerance = rel_tol * fine.abs().max(1.0);
        if change > tolerance {
            return Err(Error::UnderResolved { change, tolerance });
        }
        Ok(fine)
    }
}
