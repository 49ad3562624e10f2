//! Two-point transport fields `A(p,q): T_pM → T_qM` and the induced tensor
//! transports `B^r_s(q,p)` with their adjoints `A^r_s(p,q)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Chart, Point};
use crate::tensor::{TensorAtPoint, TensorType};

pub type TwoPointMatrixFn = Arc<dyn Fn(&Point, &Point) -> DMatrix<f64> + Send + Sync>;

/// Fraction of the chart width cut off by the support box on each side.
const SUPPORT_INSET: f64 = 0.02;
/// Fraction of the chart width cut off by the working box on each side.
const WORKING_INSET: f64 = 0.10;

/// `h(t)/(h(t) + h(1−t))` with `h(t) = exp(−1/t)`: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    let h = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        h(t) / (h(t) + h(1.0 - t))
    }
}

/// Product cutoff equal to 1 on `working` and 0 outside `support`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub working: BoxDomain,
    pub support: BoxDomain,
}

impl Cutoff {
    /// Cutoff for a chart, with support and working boxes inset by 2% and 10% of the width.
    pub fn for_chart(chart: &Chart) -> Self {
        let d = &chart.domain;
        let inset = |frac: f64| {
            let lower: Vec<f64> = (0..d.dim()).map(|a| d.lower.coords()[a] + frac * d.width(a)).collect();
            let upper: Vec<f64> = (0..d.dim()).map(|a| d.upper.coords()[a] - frac * d.width(a)).collect();
            BoxDomain {
                lower: Point::new(&lower),
                upper: Point::new(&upper),
            }
        };
        Self {
            working: inset(WORKING_INSET),
            support: inset(SUPPORT_INSET),
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        let mut c = 1.0;
        for a in 0..p.dim() {
            let x = p.coords()[a];
            let (w0, w1) = (self.working.lower.coords()[a], self.working.upper.coords()[a]);
            let (s0, s1) = (self.support.lower.coords()[a], self.support.upper.coords()[a]);
            c *= if x < w0 {
                smooth_step((x - s0) / (w0 - s0))
            } else if x > w1 {
                smooth_step((s1 - x) / (s1 - w1))
            } else {
                1.0
            };
            if c == 0.0 {
                break;
            }
        }
        c
    }
}

/// A smooth two-point matrix field; `matrix(p, q)` has columns indexed by the
/// `T_p` basis and rows by the `T_q` basis.
#[derive(Clone)]
pub struct TransportOperator {
    name: String,
    dim: usize,
    matrix: TwoPointMatrixFn,
    support: Option<BoxDomain>,
    working: Option<BoxDomain>,
    diag_identity: bool,
}

impl fmt::Debug for TransportOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransportOperator")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("diag_identity", &self.diag_identity)
            .finish()
    }
}

impl TransportOperator {
    /// An operator without a support descriptor or diagonal guarantee.
    pub fn from_fn(
        name: impl Into<String>,
        dim: usize,
        matrix: impl Fn(&Point, &Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            matrix: Arc::new(matrix),
            support: None,
            working: None,
            diag_identity: false,
        }
    }

    /// Declares `supp A ⊆ support × support`; matrices outside are zero.
    pub fn with_support(mut self, support: BoxDomain) -> Self {
        self.support = Some(support);
        self
    }

    /// Declares `A(p,p) = Id` for `p` in `working`.
    pub fn with_diag_identity(mut self, working: BoxDomain) -> Self {
        self.working = Some(working);
        self.diag_identity = true;
        self
    }

    fn cut(
        name: String,
        chart: &Chart,
        core: impl Fn(&Point, &Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let cutoff = Cutoff::for_chart(chart);
        Self::from_fn(name, chart.dim(), move |p, q| {
            let c = cutoff.eval(p) * cutoff.eval(q);
            if c == 0.0 {
                DMatrix::zeros(p.dim(), p.dim())
            } else {
                core(p, q) * c
            }
        })
        .with_support(cutoff.support)
        .with_diag_identity(cutoff.working)
    }

    /// `c(p)c(q)·Id`.
    pub fn identity_cut(chart: &Chart) -> Self {
        Self::cut("identity_cut".into(), chart, |p, _| DMatrix::identity(p.dim(), p.dim()))
    }

    /// `c(p)c(q)·(Id + λ(q₀ − p₀)N)` with `N = 1` for `n = 1` and `N = E₀₁` otherwise.
    pub fn shear(chart: &Chart, lambda: f64) -> Self {
        Self::cut(format!("shear:{lambda}"), chart, move |p, q| {
            let n = p.dim();
            let d = lambda * (q.coords()[0] - p.coords()[0]);
            let mut m = DMatrix::identity(n, n);
            if n == 1 {
                m[(0, 0)] += d;
            } else {
                m[(0, 1)] += d;
            }
            m
        })
    }

    /// `c(p)c(q)·R(θ|q − p|)` in two dimensions.
    pub fn rotation(chart: &Chart, theta: f64) -> Result<Self> {
        if chart.dim() != 2 {
            return Err(Error::CatalogParams {
                name: format!("rotation:{theta}"),
                reason: "rotation transport needs a two-dimensional chart".into(),
            });
        }
        Ok(Self::cut(format!("rotation:{theta}"), chart, move |p, q| {
            let a = theta * q.distance(p);
            let (s, c) = a.sin_cos();
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> Option<&BoxDomain> {
        self.support.as_ref()
    }

    pub fn working_box(&self) -> Option<&BoxDomain> {
        self.working.as_ref()
    }

    pub fn diag_identity(&self) -> bool {
        self.diag_identity
    }

    /// Whether both points lie in the declared support (always true without one).
    pub fn in_support(&self, p: &Point, q: &Point) -> bool {
        self.support.is_none_or(|s| s.contains(p) && s.contains(q))
    }

    /// `A(p,q)`.
    pub fn matrix(&self, p: &Point, q: &Point) -> DMatrix<f64> {
        if !self.in_support(p, q) {
            return DMatrix::zeros(self.dim, self.dim);
        }
        (self.matrix)(p, q)
    }

    /// Largest `‖A(p,p) − Id‖_max` over a sample grid of the working box.
    pub fn diag_identity_defect(&self, per_axis: usize) -> Option<f64> {
        let working = self.working?;
        let id = DMatrix::<f64>::identity(self.dim, self.dim);
        Some(
            working
                .sample_grid(per_axis)
                .iter()
                .map(|p| (self.matrix(p, p) - &id).abs().max())
                .fold(0.0, f64::max),
        )
    }
}

/// `B^r_s(q,p)` and its adjoint `A^r_s(p,q)` induced by a transport operator.
#[derive(Clone, Debug)]
pub struct TensorTransport {
    pub source: TransportOperator,
    pub ttype: TensorType,
}

impl TensorTransport {
    pub fn new(source: TransportOperator, ttype: TensorType) -> Self {
        Self { source, ttype }
    }

    /// `B^r_s(q,p) g_q`: `A(q,p)` on contravariant slots, `A(p,q)` from the right
    /// on covariant slots. Zero outside the support.
    pub fn apply_b(&self, g_q: &TensorAtPoint, p: &Point) -> Result<TensorAtPoint> {
        if g_q.ttype() != self.ttype {
            return Err(Error::TypeMismatch {
                expected: self.ttype,
                found: g_q.ttype(),
            });
        }
        let q = g_q.base();
        if self.ttype.rank() > 0 && !self.source.in_support(p, q) {
            return Ok(TensorAtPoint::zeros(self.ttype, *p));
        }
        let a_qp = self.source.matrix(q, p);
        let a_pq = self.source.matrix(p, q);
        Ok(g_q.transform_slots(&a_qp, &a_pq, *p))
    }

    /// `A^r_s(p,q) t̃_p` for an `(s,r)` tensor at `p`: `A(p,q)` on its
    /// contravariant slots, `A(q,p)` from the right on its covariant slots.
    pub fn apply_a_rs(&self, tt_p: &TensorAtPoint, q: &Point) -> Result<TensorAtPoint> {
        let expected = self.ttype.transpose();
        if tt_p.ttype() != expected {
            return Err(Error::TypeMismatch {
                expected,
                found: tt_p.ttype(),
            });
        }
        let p = tt_p.base();
        if self.ttype.rank() > 0 && !self.source.in_support(p, q) {
            return Ok(TensorAtPoint::zeros(expected, *q));
        }
        let a_pq = self.source.matrix(p, q);
        let a_qp = self.source.matrix(q, p);
        Ok(tt_p.transform_slots(&a_pq, &a_qp, *q))
    }
}

/// Free function form of [`TensorTransport::apply_b`].
pub fn apply_b(t: &TensorTransport, g_q: &TensorAtPoint, p: &Point) -> Result<TensorAtPoint> {
    t.apply_b(g_q, p)
}

/// Free function form of [`TensorTransport::apply_a_rs`].
pub fn apply_a_rs(t: &TensorTransport, tt_p: &TensorAtPoint, q: &Point) -> Result<TensorAtPoint> {
    t.apply_a_rs(tt_p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::contract_full;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chart(n: usize) -> Chart {
        Chart::cube(n, 1.0).unwrap()
    }

    fn tt(r: usize, s: usize) -> TensorType {
        TensorType::new(r, s).unwrap()
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
        assert_relative_eq!(smooth_step(0.5), 0.5);
        assert!(smooth_step(0.3) < smooth_step(0.31));
    }

    #[test]
    fn identity_cut_on_diagonal_and_outside() {
        let a = TransportOperator::identity_cut(&chart(2));
        let p = Point::new(&[0.3, -0.7]);
        assert_eq!(a.matrix(&p, &p), DMatrix::identity(2, 2));
        assert_eq!(a.diag_identity_defect(10), Some(0.0));
        let out = Point::new(&[0.97, 0.0]);
        assert_eq!(a.matrix(&p, &out), DMatrix::zeros(2, 2));
        // transition region: strictly between 0 and 1
        let mid = Point::new(&[0.88, 0.0]);
        let c = a.matrix(&p, &mid)[(0, 0)];
        assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn shear_examples() {
        let c = chart(1);
        let s1 = TransportOperator::shear(&c, 1.0);
        let p = Point::new(&[0.2]);
        let q = Point::new(&[0.3]);
        assert_relative_eq!(s1.matrix(&p, &q)[(0, 0)], 1.1, epsilon = 1e-15);
        let s0 = TransportOperator::shear(&c, 0.0);
        let id = TransportOperator::identity_cut(&c);
        for x in [-0.9, -0.5, 0.0, 0.85] {
            let q = Point::new(&[x]);
            assert_eq!(s0.matrix(&p, &q), id.matrix(&p, &q));
        }
        assert!(TransportOperator::rotation(&c, 1.0).is_err());
    }

    #[test]
    fn identity_transport_is_identity_on_components() {
        let a = TransportOperator::identity_cut(&chart(2));
        let p = Point::new(&[0.1, 0.2]);
        let q = Point::new(&[-0.3, 0.4]);
        for (r, s) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
            let t = TensorTransport::new(a.clone(), tt(r, s));
            let m = tt(r, s).component_count(2);
            let g = TensorAtPoint::new(tt(r, s), q, (0..m).map(|k| k as f64 + 0.5).collect()).unwrap();
            let bg = t.apply_b(&g, &p).unwrap();
            assert_eq!(bg.components(), g.components());
            assert_eq!(bg.base(), &p);
        }
    }

    #[test]
    fn one_dim_scalar_factor() {
        let t = TensorTransport::new(TransportOperator::from_fn("a", 1, |p, q| {
            DMatrix::from_element(1, 1, 2.0 + p.coords()[0] - 3.0 * q.coords()[0])
        }), TensorType::VECTOR);
        let p = Point::new(&[0.1]);
        let q = Point::new(&[0.4]);
        let g = TensorAtPoint::new(TensorType::VECTOR, q, vec![5.0]).unwrap();
        // a(q,p) = 2 + 0.4 − 0.3
        assert_relative_eq!(t.apply_b(&g, &p).unwrap().components()[0], 5.0 * 2.1, epsilon = 1e-14);
        let c = TensorAtPoint::new(TensorType::COVECTOR, p, vec![3.0]).unwrap();
        assert_relative_eq!(t.apply_a_rs(&c, &q).unwrap().components()[0], 3.0 * 2.1, epsilon = 1e-14);
    }

    #[test]
    fn matrix_sandwich_by_brute_force() {
        // A(q,p) = [[1,1],[0,1]], A(p,q) = [[1,0],[2,1]]
        let p = Point::new(&[0.0, 0.0]);
        let q = Point::new(&[0.5, 0.0]);
        let op = TransportOperator::from_fn("fixed", 2, move |x, _| {
            if x.coords()[0] > 0.25 {
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])
            } else {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 1.0])
            }
        });
        let a_qp = op.matrix(&q, &p);
        let a_pq = op.matrix(&p, &q);
        let t = TensorTransport::new(op, tt(1, 1));
        let g = TensorAtPoint::new(tt(1, 1), q, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let out = t.apply_b(&g, &p).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let mut v = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        v += a_qp[(k, i)] * a_pq[(j, l)] * g.components()[i * 2 + j];
                    }
                }
                assert_eq!(out.components()[k * 2 + l], v);
            }
        }
        // A(q,p) e₀ = e₀, covector e⁰ A(p,q) = (1, 0)
        assert_eq!(out.components(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adjoint_duality_on_random_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2] {
            for (r, s) in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
                for _ in 0..20 {
                    let coeffs: Vec<f64> = (0..2 * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let op = TransportOperator::from_fn("rand", n, move |x, y| {
                        DMatrix::from_fn(n, n, |i, j| {
                            coeffs[i * n + j] + x.coords()[0] * coeffs[n * n + i * n + j] - y.coords()[0]
                        })
                    });
                    let p = Point::new(&(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
                    let q = Point::new(&(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
                    let m = tt(r, s).component_count(n);
                    let g = TensorAtPoint::new(tt(r, s), q, (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                    let t = TensorAtPoint::new(tt(s, r), p, (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                    let tr = TensorTransport::new(op, tt(r, s));
                    let lhs = contract_full(&tr.apply_b(&g, &p).unwrap(), &t).unwrap();
                    let rhs = contract_full(&g.clone().rebased(q), &tr.apply_a_rs(&t, &q).unwrap().rebased(q)).unwrap();
                    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300), "{lhs} {rhs}");
                }
            }
        }
    }

    #[test]
    fn functorial_on_simple_tensors() {
        let c = chart(2);
        let op = TransportOperator::rotation(&c, 0.7).unwrap();
        let p = Point::new(&[0.1, 0.3]);
        let q = Point::new(&[-0.2, 0.5]);
        let a_qp = op.matrix(&q, &p);
        let a_pq = op.matrix(&p, &q);
        let t = TensorTransport::new(op, tt(1, 1));
        for vi in 0..2 {
            for bj in 0..2 {
                let v = TensorAtPoint::basis(TensorType::VECTOR, q, vi);
                let b = TensorAtPoint::basis(TensorType::COVECTOR, q, bj);
                let vb = v.tensor_product(&b).unwrap();
                let av: Vec<f64> = (0..2).map(|k| a_qp[(k, vi)]).collect();
                let ab: Vec<f64> = (0..2).map(|l| a_pq[(bj, l)]).collect();
                let expected = TensorAtPoint::new(TensorType::VECTOR, p, av)
                    .unwrap()
                    .tensor_product(&TensorAtPoint::new(TensorType::COVECTOR, p, ab).unwrap())
                    .unwrap();
                let got = t.apply_b(&vb, &p).unwrap();
                for (x, y) in got.components().iter().zip(expected.components()) {
                    assert_relative_eq!(x, y, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_outside_support() {
        let c = chart(1);
        let t = TensorTransport::new(TransportOperator::identity_cut(&c), TensorType::VECTOR);
        let q = Point::new(&[0.99]);
        let g = TensorAtPoint::new(TensorType::VECTOR, q, vec![1.0]).unwrap();
        assert_eq!(t.apply_b(&g, &Point::new(&[0.0])).unwrap().components(), &[0.0]);
    }
}
