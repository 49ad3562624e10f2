//! Box charts, points, smooth scalar maps, diffeomorphisms and vector field flows.
//!
//! A manifold is described by one global chart whose domain is an open
//! axis-aligned box in ℝⁿ (n ≤ 3). A second chart only appears as the
//! codomain of a [`Diffeo`].

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Default relative step for central-difference partials.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Default maximal step of the flow integrator.
pub const DEFAULT_H_FLOW: f64 = 1e-3;

/// Chart coordinates of a point.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&coords.len()),
            "point dimension {} outside 1..=3",
            coords.len()
        );
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            coords: c,
            dim: coords.len(),
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(&[0.0; MAX_DIM][..dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords().to_vec()
    }

    pub fn with_coord(mut self, axis: usize, value: f64) -> Self {
        self.coords[axis] = value;
        self
    }

    pub fn offset(mut self, axis: usize, delta: f64) -> Self {
        self.coords[axis] += delta;
        self
    }

    pub fn add(&self, other: &Point) -> Point {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Point) -> Point {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Point {
        let mut out = *self;
        out.coords.iter_mut().for_each(|c| *c *= factor);
        out
    }

    /// `self + factor * dir`.
    pub fn axpy(&self, factor: f64, dir: &[f64]) -> Point {
        let mut out = *self;
        for (c, d) in out.coords.iter_mut().zip(dir) {
            *c += factor * d;
        }
        out
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn zip_with(&self, other: &Point, f: impl Fn(f64, f64) -> f64) -> Point {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            out.coords[i] = f(self.coords[i], other.coords[i]);
        }
        out
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        if !(1..=MAX_DIM).contains(&v.len()) {
            return Err(serde::de::Error::custom("point must have 1 to 3 coordinates"));
        }
        Ok(Point::new(&v))
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Point,
    pub upper: Point,
}

impl BoxDomain {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(Error::DimensionMismatch {
                expected: lower.dim(),
                found: upper.dim(),
            });
        }
        if lower.coords().iter().zip(upper.coords()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidChart(format!(
                "box {lower:?}..{upper:?} is empty"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `center ± half_width` on every axis.
    pub fn centered(center: &Point, half_width: f64) -> Result<Self> {
        let h = vec![half_width; center.dim()];
        Self::new(center.axpy(-1.0, &h), center.axpy(1.0, &h))
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper.coords()[axis] - self.lower.coords()[axis]
    }

    pub fn min_width(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Point {
        self.lower.add(&self.upper).scale(0.5)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.coords()
            .iter()
            .zip(self.lower.coords().iter().zip(self.upper.coords()))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        self.contains(&other.lower) && self.contains(&other.upper)
    }

    /// Box grown (or shrunk, for negative `margin`) by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> Result<Self> {
        let m = vec![margin; self.dim()];
        Self::new(self.lower.axpy(-1.0, &m), self.upper.axpy(1.0, &m))
    }

    /// Image of the box under `p ↦ center + scale·p`.
    pub fn affine_image(&self, center: &Point, scale: f64) -> Self {
        Self {
            lower: center.add(&self.lower.scale(scale)),
            upper: center.add(&self.upper.scale(scale)),
        }
    }

    /// `per_axis^n` grid points, endpoints excluded (cell centers).
    pub fn sample_grid(&self, per_axis: usize) -> Vec<Point> {
        let n = self.dim();
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut flat| {
                let mut c = [0.0; MAX_DIM];
                for (axis, slot) in c.iter_mut().enumerate().take(n) {
                    let k = flat % per_axis;
                    flat /= per_axis;
                    let t = (k as f64 + 0.5) / per_axis as f64;
                    *slot = self.lower.coords()[axis] + t * self.width(axis);
                }
                Point::new(&c[..n])
            })
            .collect()
    }

    /// Points sampled on the boundary of the box (`per_edge` samples per axis on each face).
    pub fn boundary_samples(&self, per_edge: usize) -> Vec<Point> {
        let n = self.dim();
        let mut out = Vec::new();
        for axis in 0..n {
            for side in [self.lower.coords()[axis], self.upper.coords()[axis]] {
                if n == 1 {
                    out.push(Point::new(&[side]));
                    continue;
                }
                let face_axes: Vec<usize> = (0..n).filter(|&a| a != axis).collect();
                let count = per_edge.pow(face_axes.len() as u32);
                for mut flat in 0..count {
                    let mut p = self.lower.with_coord(axis, side);
                    for &a in &face_axes {
                        let k = flat % per_edge;
                        flat /= per_edge;
                        let t = k as f64 / (per_edge - 1).max(1) as f64;
                        p = p.with_coord(a, self.lower.coords()[a] + t * self.width(a));
                    }
                    out.push(p);
                }
            }
        }
        out
    }

    /// Bounding box of a point cloud, padded by `pad` times the largest extent.
    pub fn bounding(points: &[Point], pad: f64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("empty point cloud".into()))?;
        let n = first.dim();
        let mut lo = *first;
        let mut hi = *first;
        for p in points {
            for a in 0..n {
                lo = lo.with_coord(a, lo.coords()[a].min(p.coords()[a]));
                hi = hi.with_coord(a, hi.coords()[a].max(p.coords()[a]));
            }
        }
        let extent = (0..n)
            .map(|a| hi.coords()[a] - lo.coords()[a])
            .fold(0.0, f64::max);
        let m = vec![pad * extent; n];
        Self::new(lo.axpy(-1.0, &m), hi.axpy(1.0, &m))
    }
}

impl fmt::Display for BoxDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lower, self.upper)
    }
}

/// A global chart: an open box in ℝⁿ.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct Chart {
    pub domain: BoxDomain,
}

impl Chart {
    pub fn new(domain: BoxDomain) -> Result<Self> {
        let dim = domain.dim();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidChart(format!("dimension {dim} outside 1..=3")));
        }
        BoxDomain::new(domain.lower, domain.upper)?;
        Ok(Self { domain })
    }

    /// The cube `(-half_width, half_width)^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidChart(format!("dimension {dim} outside 1..=3")));
        }
        Self::new(BoxDomain::centered(&Point::origin(dim), half_width)?)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim() && self.domain.contains(p)
    }

    pub fn require(&self, p: &Point, context: &'static str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::DomainExit {
                point: p.to_vec(),
                context,
            })
        }
    }

    pub fn require_box(&self, b: &BoxDomain) -> Result<()> {
        if self.domain.contains_box(b) {
            Ok(())
        } else {
            Err(Error::SupportOverflow {
                support: b.to_string(),
                container: self.domain.to_string(),
            })
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type PartialFn = Arc<dyn Fn(&Point, usize) -> f64 + Send + Sync>;

/// A smooth scalar function on the chart, with optional closed-form partials.
#[derive(Clone)]
pub struct SmoothMap {
    value: ScalarFn,
    partials: Option<PartialFn>,
    fd_step: f64,
    constant: Option<f64>,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("closed_form_partials", &self.partials.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl SmoothMap {
    pub fn new(value: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            partials: None,
            fd_step: DEFAULT_FD_STEP,
            constant: None,
        }
    }

    pub fn with_partials(
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        partials: impl Fn(&Point, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            partials: Some(Arc::new(partials)),
            fd_step: DEFAULT_FD_STEP,
            constant: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        let mut m = Self::with_partials(move |_| c, |_, _| 0.0);
        m.constant = Some(c);
        m
    }

    /// The value of a map built by [`SmoothMap::constant`].
    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    /// The coordinate function `p ↦ p[axis]`.
    pub fn coordinate(axis: usize) -> Self {
        Self::with_partials(
            move |p| p.coords()[axis],
            move |_, a| if a == axis { 1.0 } else { 0.0 },
        )
    }

    pub fn with_fd_step(mut self, fd_step: f64) -> Self {
        assert!(fd_step > 0.0, "fd_step must be positive");
        self.fd_step = fd_step;
        self
    }

    /// Drops closed-form partials so that derivative queries use finite differences.
    pub fn without_partials(mut self) -> Self {
        self.partials = None;
        self
    }

    pub fn has_closed_form_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        (self.value)(p)
    }

    pub fn partial(&self, p: &Point, axis: usize) -> f64 {
        match &self.partials {
            Some(d) => d(p, axis),
            None => self.fd_partial(p, axis),
        }
    }

    pub fn gradient(&self, p: &Point) -> Vec<f64> {
        (0..p.dim()).map(|a| self.partial(p, a)).collect()
    }

    /// Second-order central difference with step `fd_step·max(1, |p[axis]|)`.
    pub fn fd_partial(&self, p: &Point, axis: usize) -> f64 {
        let h = self.fd_step * p.coords()[axis].abs().max(1.0);
        (self.eval(&p.offset(axis, h)) - self.eval(&p.offset(axis, -h))) / (2.0 * h)
    }

    /// Pointwise product; partials stay closed-form when both factors have them.
    pub fn mul(&self, other: &SmoothMap) -> SmoothMap {
        match (self.constant, other.constant) {
            (Some(x), Some(y)) => return SmoothMap::constant(x * y),
            (Some(x), None) => return other.scale(x),
            (None, Some(y)) => return self.scale(y),
            _ => {}
        }
        let (a, b) = (self.clone(), other.clone());
        let value = {
            let (a, b) = (a.clone(), b.clone());
            move |p: &Point| a.eval(p) * b.eval(p)
        };
        if a.partials.is_some() && b.partials.is_some() {
            SmoothMap::with_partials(value, move |p, k| {
                a.partial(p, k) * b.eval(p) + a.eval(p) * b.partial(p, k)
            })
        } else {
            SmoothMap::new(value).with_fd_step(self.fd_step.min(other.fd_step))
        }
    }

    pub fn add(&self, other: &SmoothMap) -> SmoothMap {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn scale(&self, c: f64) -> SmoothMap {
        if let Some(x) = self.constant {
            return SmoothMap::constant(c * x);
        }
        if c == 1.0 {
            return self.clone();
        }
        let a = self.clone();
        let value = {
            let a = a.clone();
            move |p: &Point| c * a.eval(p)
        };
        match a.partials.clone() {
            Some(d) => SmoothMap::with_partials(value, move |p, k| c * d(p, k)),
            None => SmoothMap::new(value).with_fd_step(self.fd_step),
        }
    }

    pub fn lin_comb(&self, ca: f64, other: &SmoothMap, cb: f64) -> SmoothMap {
        if let (Some(x), Some(y)) = (self.constant, other.constant) {
            return SmoothMap::constant(ca * x + cb * y);
        }
        let (a, b) = (self.clone(), other.clone());
        let value = {
            let (a, b) = (a.clone(), b.clone());
            move |p: &Point| ca * a.eval(p) + cb * b.eval(p)
        };
        if a.partials.is_some() && b.partials.is_some() {
            SmoothMap::with_partials(value, move |p, k| {
                ca * a.partial(p, k) + cb * b.partial(p, k)
            })
        } else {
            SmoothMap::new(value).with_fd_step(self.fd_step.min(other.fd_step))
        }
    }

    /// `p ↦ self(μ(p))`; partials by the chain rule when closed-form data exists.
    pub fn compose(&self, mu: &Diffeo) -> SmoothMap {
        if self.constant.is_some() {
            return self.clone();
        }
        let f = self.clone();
        let m = mu.clone();
        let value = {
            let (f, m) = (f.clone(), m.clone());
            move |p: &Point| match m.forward(p) {
                Ok(y) => f.eval(&y),
                Err(_) => 0.0,
            }
        };
        if f.partials.is_some() {
            SmoothMap::with_partials(value, move |p, k| {
                let (Ok(y), Ok(j)) = (m.forward(p), m.jacobian_at(p)) else {
                    return 0.0;
                };
                (0..y.dim()).map(|i| f.partial(&y, i) * j[(i, k)]).sum()
            })
        } else {
            SmoothMap::new(value).with_fd_step(self.fd_step)
        }
    }
}

pub type PointMap = Arc<dyn Fn(&Point) -> Result<Point> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&Point) -> Result<DMatrix<f64>> + Send + Sync>;

/// A diffeomorphism `μ: M → N` between two box charts.
#[derive(Clone)]
pub struct Diffeo {
    name: String,
    domain: Chart,
    codomain: Chart,
    forward: PointMap,
    inverse: PointMap,
    jacobian: MatrixMap,
}

impl fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffeo")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("codomain", &self.codomain)
            .finish()
    }
}

impl Diffeo {
    pub fn new(
        name: impl Into<String>,
        domain: Chart,
        codomain: Chart,
        forward: PointMap,
        inverse: PointMap,
        jacobian: MatrixMap,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            codomain,
            forward,
            inverse,
            jacobian,
        }
    }

    /// Builds a diffeo from infallible closed-form maps; the codomain chart is
    /// the bounding box of the image of the domain boundary.
    pub fn closed_form(
        name: impl Into<String>,
        domain: Chart,
        forward: impl Fn(&Point) -> Point + Send + Sync + 'static,
        inverse: impl Fn(&Point) -> Point + Send + Sync + 'static,
        jacobian: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let image: Vec<Point> = domain
            .domain
            .boundary_samples(257)
            .iter()
            .map(&forward)
            .collect();
        let codomain = Chart::new(BoxDomain::bounding(&image, 0.0)?)?;
        Ok(Self::new(
            name,
            domain,
            codomain,
            Arc::new(move |p| Ok(forward(p))),
            Arc::new(move |p| Ok(inverse(p))),
            Arc::new(move |p| Ok(jacobian(p))),
        ))
    }

    pub fn identity(domain: Chart) -> Self {
        let n = domain.dim();
        Self::new(
            "identity",
            domain,
            domain,
            Arc::new(|p| Ok(*p)),
            Arc::new(|p| Ok(*p)),
            Arc::new(move |_| Ok(DMatrix::identity(n, n))),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Chart {
        &self.domain
    }

    pub fn codomain(&self) -> &Chart {
        &self.codomain
    }

    pub fn forward(&self, p: &Point) -> Result<Point> {
        (self.forward)(p)
    }

    pub fn inverse(&self, y: &Point) -> Result<Point> {
        (self.inverse)(y)
    }

    /// `Dμ(p)`, rows indexing the codomain basis.
    pub fn jacobian_at(&self, p: &Point) -> Result<DMatrix<f64>> {
        (self.jacobian)(p)
    }

    /// `Dμ⁻¹(y) = Dμ(μ⁻¹ y)⁻¹`.
    pub fn inverse_jacobian_at(&self, y: &Point) -> Result<DMatrix<f64>> {
        let x = self.inverse(y)?;
        invert(&self.jacobian_at(&x)?, &x)
    }

    /// Central-difference Jacobian of the forward map.
    pub fn fd_jacobian(&self, p: &Point, h: f64) -> Result<DMatrix<f64>> {
        let n = p.dim();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let plus = self.forward(&p.offset(k, h))?;
            let minus = self.forward(&p.offset(k, -h))?;
            for i in 0..n {
                j[(i, k)] = (plus.coords()[i] - minus.coords()[i]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    /// `μ⁻¹: N → M`.
    pub fn inverse_diffeo(&self) -> Diffeo {
        let me = self.clone();
        Diffeo::new(
            format!("inverse({})", self.name),
            self.codomain,
            self.domain,
            self.inverse.clone(),
            self.forward.clone(),
            Arc::new(move |y| me.inverse_jacobian_at(y)),
        )
    }

    /// `self ∘ inner`, i.e. first `inner`, then `self`.
    pub fn after(&self, inner: &Diffeo) -> Diffeo {
        let (outer, inn) = (self.clone(), inner.clone());
        let (o1, i1) = (outer.clone(), inn.clone());
        let (o2, i2) = (outer.clone(), inn.clone());
        Diffeo::new(
            format!("{}∘{}", self.name, inner.name),
            inner.domain,
            self.codomain,
            Arc::new(move |p| o1.forward(&i1.forward(p)?)),
            Arc::new(move |y| i2.inverse(&o2.inverse(y)?)),
            Arc::new(move |p| {
                let y = inn.forward(p)?;
                Ok(outer.jacobian_at(&y)? * inn.jacobian_at(p)?)
            }),
        )
    }

    /// Largest `|μ⁻¹(μ(p)) − p|` over a `per_axis^n` grid of the domain;
    /// also fails if the Jacobian is singular at a sample.
    pub fn roundtrip_error(&self, per_axis: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in self.domain.domain.sample_grid(per_axis) {
            let back = self.inverse(&self.forward(&p)?)?;
            worst = worst.max(back.distance(&p));
            let j = self.jacobian_at(&p)?;
            if j.determinant().abs() < 1e-14 {
                return Err(Error::SingularJacobian(p.to_vec()));
            }
        }
        Ok(worst)
    }

    /// Image of a box as the (slightly padded) bounding box of its mapped boundary.
    pub fn image_box(&self, b: &BoxDomain) -> Result<BoxDomain> {
        let per_edge = match b.dim() {
            1 => 2,
            2 => 129,
            _ => 33,
        };
        let pts = b
            .boundary_samples(per_edge)
            .iter()
            .map(|p| self.forward(p))
            .collect::<Result<Vec<_>>>()?;
        let pad = if b.dim() == 1 { 0.0 } else { 1e-3 };
        BoxDomain::bounding(&pts, pad)
    }
}

/// Free function form of [`Diffeo::jacobian_at`].
pub fn jacobian_at(mu: &Diffeo, p: &Point) -> Result<DMatrix<f64>> {
    mu.jacobian_at(p)
}

pub(crate) fn invert(m: &DMatrix<f64>, at: &Point) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularJacobian(at.to_vec()))
}

/// A vector field together with its fixed-step classical RK4 flow.
#[derive(Clone, Debug)]
pub struct VectorFieldFlow {
    chart: Chart,
    components: Vec<SmoothMap>,
    h_flow: f64,
}

impl VectorFieldFlow {
    pub fn new(chart: Chart, components: Vec<SmoothMap>, h_flow: f64) -> Result<Self> {
        if components.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                found: components.len(),
            });
        }
        if !(h_flow > 0.0) {
            return Err(Error::InvalidInput(format!("h_flow must be positive, got {h_flow}")));
        }
        Ok(Self {
            chart,
            components,
            h_flow,
        })
    }

    pub fn zero(chart: Chart) -> Self {
        let comps = vec![SmoothMap::constant(0.0); chart.dim()];
        Self::new(chart, comps, DEFAULT_H_FLOW).expect("zero field is valid")
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn h_flow(&self) -> f64 {
        self.h_flow
    }

    pub fn with_h_flow(mut self, h_flow: f64) -> Self {
        self.h_flow = h_flow;
        self
    }

    pub fn components(&self) -> &[SmoothMap] {
        &self.components
    }

    pub fn eval(&self, p: &Point) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(p)).collect()
    }

    /// `DX(p)[(i, k)] = ∂_k X^i(p)`.
    pub fn derivative(&self, p: &Point) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, k| self.components[i].partial(p, k))
    }

    fn steps_for(&self, tau: f64) -> (usize, f64) {
        if tau == 0.0 {
            return (0, 0.0);
        }
        let steps = (tau.abs() / self.h_flow).ceil().max(1.0) as usize;
        (steps, tau / steps as f64)
    }

    /// Time-`tau` flow of `p`.
    pub fn flow(&self, tau: f64, p: &Point) -> Result<Point> {
        self.chart.require(p, "flow")?;
        let (steps, h) = self.steps_for(tau);
        let mut x = *p;
        for _ in 0..steps {
            let k1 = self.eval(&x);
            let x2 = x.axpy(0.5 * h, &k1);
            self.chart.require(&x2, "flow")?;
            let k2 = self.eval(&x2);
            let x3 = x.axpy(0.5 * h, &k2);
            self.chart.require(&x3, "flow")?;
            let k3 = self.eval(&x3);
            let x4 = x.axpy(h, &k3);
            self.chart.require(&x4, "flow")?;
            let k4 = self.eval(&x4);
            for i in 0..self.dim() {
                let incr = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                x = x.offset(i, incr);
            }
            self.chart.require(&x, "flow")?;
        }
        Ok(x)
    }

    /// Flow together with its spatial Jacobian, integrating the variational
    /// equation `J' = DX(x) J` alongside the trajectory.
    pub fn flow_with_jacobian(&self, tau: f64, p: &Point) -> Result<(Point, DMatrix<f64>)> {
        self.chart.require(p, "flow")?;
        let n = self.dim();
        let (steps, h) = self.steps_for(tau);
        let mut x = *p;
        let mut j = DMatrix::<f64>::identity(n, n);
        for _ in 0..steps {
            let k1 = self.eval(&x);
            let l1 = self.derivative(&x) * &j;
            let x2 = x.axpy(0.5 * h, &k1);
            self.chart.require(&x2, "flow")?;
            let k2 = self.eval(&x2);
            let l2 = self.derivative(&x2) * (&j + &l1 * (0.5 * h));
            let x3 = x.axpy(0.5 * h, &k2);
            self.chart.require(&x3, "flow")?;
            let k3 = self.eval(&x3);
            let l3 = self.derivative(&x3) * (&j + &l2 * (0.5 * h));
            let x4 = x.axpy(h, &k3);
            self.chart.require(&x4, "flow")?;
            let k4 = self.eval(&x4);
            let l4 = self.derivative(&x4) * (&j + &l3 * h);
            for i in 0..n {
                let incr = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                x = x.offset(i, incr);
            }
            j += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
            self.chart.require(&x, "flow")?;
        }
        Ok((x, j))
    }

    /// The time-`tau` flow map as a diffeomorphism of the chart onto itself.
    pub fn as_diffeo(&self, tau: f64) -> Diffeo {
        let (f1, f2, f3) = (self.clone(), self.clone(), self.clone());
        Diffeo::new(
            format!("flow({tau})"),
            self.chart,
            self.chart,
            Arc::new(move |p| f1.flow(tau, p)),
            Arc::new(move |y| f2.flow(-tau, y)),
            Arc::new(move |p| f3.flow_with_jacobian(tau, p).map(|(_, j)| j)),
        )
    }

    /// Pushforward `(μ_*X)(y) = Dμ(μ⁻¹y)·X(μ⁻¹y)` as a field on the codomain chart.
    pub fn pushforward(&self, mu: &Diffeo) -> Result<VectorFieldFlow> {
        let n = self.dim();
        let comps = (0..n)
            .map(|i| {
                let (x, m) = (self.clone(), mu.clone());
                SmoothMap::new(move |y| {
                    let Ok(p) = m.inverse(y) else { return 0.0 };
                    let Ok(j) = m.jacobian_at(&p) else { return 0.0 };
                    let v = x.eval(&p);
                    (0..n).map(|k| j[(i, k)] * v[k]).sum()
                })
            })
            .collect();
        VectorFieldFlow::new(*mu.codomain(), comps, self.h_flow)
    }
}

/// Free function form of [`VectorFieldFlow::flow`].
pub fn flow(vf: &VectorFieldFlow, tau: f64, p: &Point) -> Result<Point> {
    vf.flow(tau, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line() -> Chart {
        Chart::cube(1, 4.0).unwrap()
    }

    #[test]
    fn chart_validation() {
        assert!(Chart::cube(4, 1.0).is_err());
        assert!(BoxDomain::new(Point::new(&[0.0, 1.0]), Point::new(&[1.0, 1.0])).is_err());
        assert!(Chart::cube(2, 1.0).is_ok());
    }

    #[test]
    fn constant_field_translates() {
        let vf = VectorFieldFlow::new(line(), vec![SmoothMap::constant(1.0)], 1e-3).unwrap();
        let q = vf.flow(1.0, &Point::new(&[0.0])).unwrap();
        assert_abs_diff_eq!(q.coords()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_time_is_exact_identity() {
        let vf = VectorFieldFlow::new(
            line(),
            vec![SmoothMap::new(|p| p.coords()[0].sin() + 2.0)],
            1e-3,
        )
        .unwrap();
        let p = Point::new(&[0.123456789]);
        assert_eq!(vf.flow(0.0, &p).unwrap(), p);
    }

    #[test]
    fn linear_field_matches_exponential() {
        let vf = VectorFieldFlow::new(line(), vec![SmoothMap::coordinate(0)], 1e-3).unwrap();
        let q = vf.flow(0.1, &Point::new(&[1.0])).unwrap();
        assert!((q.coords()[0] - 0.1f64.exp()).abs() <= 1e-8);
        let (q2, j) = vf.flow_with_jacobian(0.1, &Point::new(&[1.0])).unwrap();
        assert_abs_diff_eq!(q2.coords()[0], q.coords()[0], epsilon = 1e-15);
        assert!((j[(0, 0)] - 0.1f64.exp()).abs() <= 1e-8);
    }

    #[test]
    fn flow_leaving_chart_errors() {
        let vf = VectorFieldFlow::new(line(), vec![SmoothMap::constant(1.0)], 1e-2).unwrap();
        let err = vf.flow(10.0, &Point::new(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::DomainExit { .. }));
    }

    #[test]
    fn flow_group_property() {
        let chart = Chart::cube(2, 3.0).unwrap();
        let vf = VectorFieldFlow::new(
            chart,
            vec![
                SmoothMap::new(|p| -p.coords()[1] + 0.1 * p.coords()[0].sin()),
                SmoothMap::new(|p| p.coords()[0]),
            ],
            1e-2,
        )
        .unwrap();
        let p = Point::new(&[0.5, -0.2]);
        let a = vf.flow(0.7, &p).unwrap();
        let b = vf.flow(0.3, &vf.flow(0.4, &p).unwrap()).unwrap();
        // C·h⁴ with h = 1e-2
        assert!(a.distance(&b) < 1e-7);
        let back = vf.flow(-0.7, &a).unwrap();
        assert!(back.distance(&p) < 1e-7);
    }

    #[test]
    fn jacobian_examples() {
        let dom = Chart::cube(1, 1.0).unwrap();
        let scale = Diffeo::closed_form(
            "scaling",
            dom,
            |p| p.scale(2.0),
            |y| y.scale(0.5),
            |_| DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        assert_eq!(scale.jacobian_at(&Point::new(&[0.3])).unwrap()[(0, 0)], 2.0);
        assert_abs_diff_eq!(scale.codomain().domain.upper.coords()[0], 2.0);

        let id = Diffeo::identity(Chart::cube(2, 1.0).unwrap());
        assert_eq!(
            jacobian_at(&id, &Point::new(&[0.1, 0.2])).unwrap(),
            DMatrix::identity(2, 2)
        );

        let shear = Diffeo::closed_form(
            "shear",
            Chart::cube(2, 1.0).unwrap(),
            |p| Point::new(&[p.coords()[0] + p.coords()[1].powi(2), p.coords()[1]]),
            |y| Point::new(&[y.coords()[0] - y.coords()[1].powi(2), y.coords()[1]]),
            |p| DMatrix::from_row_slice(2, 2, &[1.0, 2.0 * p.coords()[1], 0.0, 1.0]),
        )
        .unwrap();
        let p = Point::new(&[0.0, 1.0]);
        let j = shear.jacobian_at(&p).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        let fd = shear.fd_jacobian(&p, 1e-5).unwrap();
        assert!((j - fd).abs().max() < 1e-8);
        assert!(shear.roundtrip_error(10).unwrap() <= 1e-10);
    }

    #[test]
    fn fd_partials_agree_with_closed_form() {
        let f = SmoothMap::with_partials(
            |p| (p.coords()[0] * 1.3).sin() * p.coords()[1].exp(),
            |p, k| match k {
                0 => 1.3 * (p.coords()[0] * 1.3).cos() * p.coords()[1].exp(),
                _ => (p.coords()[0] * 1.3).sin() * p.coords()[1].exp(),
            },
        );
        let p = Point::new(&[0.4, -0.3]);
        for k in 0..2 {
            let err = (f.partial(&p, k) - f.fd_partial(&p, k)).abs();
            assert!(err < 1e-9, "axis {k}: {err}");
        }
    }

    #[test]
    fn composition_and_inverse_diffeo() {
        let dom = Chart::cube(1, 1.0).unwrap();
        let sinh = Diffeo::closed_form(
            "sinh",
            dom,
            |p| Point::new(&[p.coords()[0].sinh()]),
            |y| Point::new(&[y.coords()[0].asinh()]),
            |p| DMatrix::from_element(1, 1, p.coords()[0].cosh()),
        )
        .unwrap();
        let inv = sinh.inverse_diffeo();
        let round = inv.after(&sinh);
        let p = Point::new(&[0.37]);
        assert_abs_diff_eq!(round.forward(&p).unwrap().coords()[0], 0.37, epsilon = 1e-14);
        assert_abs_diff_eq!(round.jacobian_at(&p).unwrap()[(0, 0)], 1.0, epsilon = 1e-14);
    }
}
