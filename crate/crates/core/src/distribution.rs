//! Scalar distributions acting on compactly supported n-form densities, and
//! tensor distributions `Σ uⁱ⊗e_i` acting on arguments `t̃⊗ω`.
//!
//! Densities are chart densities: `ω = φ·dx¹∧…∧dxⁿ`. A Dirac measure
//! evaluates the chart density, `δ_{x₀}(ω) = φ(x₀)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point, SmoothMap, VectorFieldFlow};
use crate::quadrature::Quadrature;
use crate::tensor::{contract_unchecked, SmoothTensorField, TensorAtPoint, TensorType};

/// Highest supported order `|α|` of a Dirac derivative.
pub const MAX_DERIVATIVE_ORDER: usize = 3;

/// Multi-index `α` of a derivative `∂^α`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DerivativeOrder {
    counts: [usize; 3],
    dim: usize,
}

impl DerivativeOrder {
    pub fn new(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() || counts.len() > 3 {
            return Err(Error::InvalidInput("derivative multi-index needs 1..=3 entries".into()));
        }
        let mut c = [0; 3];
        c[..counts.len()].copy_from_slice(counts);
        let order = Self {
            counts: c,
            dim: counts.len(),
        };
        if order.total() > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedVariant(format!(
                "Dirac derivative of order {} exceeds {MAX_DERIVATIVE_ORDER}",
                order.total()
            )));
        }
        Ok(order)
    }

    /// `∂_axis` as a multi-index.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut counts = [0; 3];
        counts[axis] = 1;
        Self { counts, dim }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }

    pub fn raised(&self, axis: usize) -> Result<Self> {
        let mut c = self.counts;
        c[axis] += 1;
        Self::new(&c[..self.dim])
    }
}

/// A term `coeff · premultiplier · dist` of a [`ScalarDistribution::Combination`].
///
/// The premultiplier is kept unexpanded and folded into the test density:
/// `⟨h·v, φ⟩ = ⟨v, h·φ⟩`.
#[derive(Clone, Debug)]
pub struct DistributionTerm {
    pub coeff: f64,
    pub premultiplier: Option<SmoothMap>,
    pub dist: ScalarDistribution,
}

impl DistributionTerm {
    pub fn new(coeff: f64, premultiplier: Option<SmoothMap>, dist: ScalarDistribution) -> Self {
        Self {
            coeff,
            premultiplier,
            dist,
        }
    }
}

/// A scalar distribution on the chart.
#[derive(Clone, Debug)]
pub enum ScalarDistribution {
    Regular(SmoothMap),
    Dirac(Point),
    DiracDerivative { at: Point, order: DerivativeOrder },
    Combination(Vec<DistributionTerm>),
}

impl ScalarDistribution {
    pub fn regular(g: SmoothMap) -> Self {
        Self::Regular(g)
    }

    pub fn dirac(at: Point) -> Self {
        Self::Dirac(at)
    }

    pub fn dirac_derivative(at: Point, order: &[usize]) -> Result<Self> {
        if order.len() != at.dim() {
            return Err(Error::DimensionMismatch {
                expected: at.dim(),
                found: order.len(),
            });
        }
        Ok(Self::DiracDerivative {
            at,
            order: DerivativeOrder::new(order)?,
        })
    }

    pub fn zero() -> Self {
        Self::Combination(Vec::new())
    }

    /// `c·self`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::Combination(vec![DistributionTerm::new(c, None, self.clone())])
    }

    /// `h·self` (multiplication by a smooth function).
    pub fn premultiplied(&self, h: &SmoothMap) -> Self {
        Self::Combination(vec![DistributionTerm::new(1.0, Some(h.clone()), self.clone())])
    }

    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        Self::Combination(vec![
            DistributionTerm::new(a, None, self.clone()),
            DistributionTerm::new(b, None, other.clone()),
        ])
    }

    /// Whether the variant tree contains only regular leaves.
    pub fn is_regular(&self) -> bool {
        match self {
            Self::Regular(_) => true,
            Self::Dirac(_) | Self::DiracDerivative { .. } => false,
            Self::Combination(terms) => terms.iter().all(|t| t.dist.is_regular()),
        }
    }

    /// Largest derivative order among the Dirac leaves.
    pub fn max_order(&self) -> usize {
        match self {
            Self::Regular(_) | Self::Dirac(_) => 0,
            Self::DiracDerivative { order, .. } => order.total(),
            Self::Combination(terms) => terms.iter().map(|t| t.dist.max_order()).max().unwrap_or(0),
        }
    }
}

/// A compactly supported n-form `φ·dx¹∧…∧dxⁿ`.
#[derive(Clone)]
pub struct NFormDensity {
    density: SmoothMap,
    support: BoxDomain,
}

impl fmt::Debug for NFormDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NFormDensity")
            .field("support", &self.support)
            .finish()
    }
}

impl NFormDensity {
    /// Checks that the density vanishes on boundary samples of the support.
    pub fn new(density: SmoothMap, support: BoxDomain) -> Result<Self> {
        let interior = support
            .sample_grid(9)
            .iter()
            .fold(0.0f64, |m, p| m.max(density.eval(p).abs()));
        let boundary = support
            .boundary_samples(9)
            .iter()
            .fold(0.0f64, |m, p| m.max(density.eval(p).abs()));
        if boundary > 1e-10 * interior.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "density does not vanish on the boundary of {support} (max {boundary:e})"
            )));
        }
        Ok(Self { density, support })
    }

    /// Skips the boundary check; the caller guarantees compact support.
    pub fn new_unchecked(density: SmoothMap, support: BoxDomain) -> Self {
        Self { density, support }
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn density(&self) -> &SmoothMap {
        &self.density
    }

    pub fn support(&self) -> &BoxDomain {
        &self.support
    }

    /// Density value, zero outside the support box.
    pub fn eval(&self, q: &Point) -> f64 {
        if self.support.contains(q) {
            self.density.eval(q)
        } else {
            0.0
        }
    }

    pub fn integral(&self, quad: &Quadrature) -> f64 {
        quad.integrate(&self.support, |q| self.density.eval(q))
    }

    /// First moments `∫ (q − p) φ(q) dq` about `p`.
    pub fn first_moments(&self, p: &Point, quad: &Quadrature) -> Vec<f64> {
        (0..self.dim())
            .map(|a| quad.integrate(&self.support, |q| (q.coords()[a] - p.coords()[a]) * self.density.eval(q)))
            .collect()
    }
}

/// A tensor distribution `Σ uⁱ⊗e_i` of type `(r,s)`.
#[derive(Clone, Debug)]
pub struct TensorDistribution {
    ttype: TensorType,
    dim: usize,
    terms: Vec<(ScalarDistribution, SmoothTensorField)>,
}

impl TensorDistribution {
    pub fn new(
        ttype: TensorType,
        dim: usize,
        terms: Vec<(ScalarDistribution, SmoothTensorField)>,
    ) -> Result<Self> {
        for (_, e) in &terms {
            if e.ttype() != ttype {
                return Err(Error::TypeMismatch {
                    expected: ttype,
                    found: e.ttype(),
                });
            }
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
        }
        Ok(Self { ttype, dim, terms })
    }

    pub fn zero(ttype: TensorType, dim: usize) -> Self {
        Self {
            ttype,
            dim,
            terms: Vec::new(),
        }
    }

    /// `Σ_K coeffs[K] ⊗ e_K` over the coordinate basis fields.
    pub fn in_coordinate_basis(
        ttype: TensorType,
        dim: usize,
        coeffs: Vec<ScalarDistribution>,
    ) -> Result<Self> {
        let m = ttype.component_count(dim);
        if coeffs.len() != m {
            return Err(Error::InvalidInput(format!(
                "type {ttype} at dim {dim} needs {m} coefficients, got {}",
                coeffs.len()
            )));
        }
        let terms = coeffs
            .into_iter()
            .enumerate()
            .map(|(k, u)| (u, SmoothTensorField::coordinate_basis(ttype, dim, k)))
            .collect();
        Self::new(ttype, dim, terms)
    }

    /// The regular distribution of a smooth tensor field, `1 ⊗ g`.
    pub fn from_field(g: &SmoothTensorField) -> Self {
        Self {
            ttype: g.ttype(),
            dim: g.dim(),
            terms: vec![(ScalarDistribution::Regular(SmoothMap::constant(1.0)), g.clone())],
        }
    }

    /// A scalar distribution viewed as a `(0,0)` tensor distribution.
    pub fn scalar(u: ScalarDistribution, dim: usize) -> Self {
        Self {
            ttype: TensorType::SCALAR,
            dim,
            terms: vec![(u, SmoothTensorField::scalar(dim, SmoothMap::constant(1.0)))],
        }
    }

    /// A single term `u ⊗ e`.
    pub fn simple(u: ScalarDistribution, e: SmoothTensorField) -> Self {
        Self {
            ttype: e.ttype(),
            dim: e.dim(),
            terms: vec![(u, e)],
        }
    }

    pub fn ttype(&self) -> TensorType {
        self.ttype
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(ScalarDistribution, SmoothTensorField)] {
        &self.terms
    }

    pub fn is_regular(&self) -> bool {
        self.terms.iter().all(|(u, _)| u.is_regular())
    }

    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.ttype != other.ttype {
            return Err(Error::TypeMismatch {
                expected: self.ttype,
                found: other.ttype,
            });
        }
        let terms = self
            .terms
            .iter()
            .map(|(u, e)| (u.scaled(a), e.clone()))
            .chain(other.terms.iter().map(|(u, e)| (u.scaled(b), e.clone())))
            .collect();
        Self::new(self.ttype, self.dim, terms)
    }

    /// `g·u`, with `g` applied to the scalar coefficients.
    pub fn premultiplied(&self, g: &SmoothMap) -> Self {
        Self {
            ttype: self.ttype,
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(u, e)| (u.premultiplied(g), e.clone()))
                .collect(),
        }
    }

    /// `g·u`, with `g` applied to the basis fields.
    pub fn fields_scaled_by(&self, g: &SmoothMap) -> Self {
        Self {
            ttype: self.ttype,
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(u, e)| (u.clone(), e.scaled_by(g)))
                .collect(),
        }
    }
}

/// Steps used for Dirac derivatives, relative to the smallest support width.
fn derivative_step(order: usize, width: f64) -> f64 {
    let rel = match order {
        0 | 1 => 1e-3,
        2 => 4e-3,
        _ => 1e-2,
    };
    rel * width
}

/// `∂^α f(x)` by nested fourth-order central differences.
fn mixed_derivative(f: &dyn Fn(&Point) -> f64, x: &Point, counts: &mut [usize], h: f64) -> f64 {
    let Some(axis) = counts.iter().position(|&c| c > 0) else {
        return f(x);
    };
    counts[axis] -= 1;
    let mut eval = |s: f64| mixed_derivative(f, &x.offset(axis, s * h), counts, h);
    let v = (eval(-2.0) - 8.0 * eval(-1.0) + 8.0 * eval(1.0) - eval(2.0)) / (12.0 * h);
    counts[axis] += 1;
    v
}

/// Pairs `u` with the density `q ↦ f(q)` supported in `support`.
pub(crate) fn pair_scalar(
    u: &ScalarDistribution,
    f: &dyn Fn(&Point) -> f64,
    support: &BoxDomain,
    quad: &Quadrature,
) -> Result<f64> {
    match u {
        ScalarDistribution::Regular(g) => Ok(quad.integrate(support, |q| g.eval(q) * f(q))),
        ScalarDistribution::Dirac(x0) => {
            if x0.dim() != support.dim() {
                return Err(Error::DimensionMismatch {
                    expected: support.dim(),
                    found: x0.dim(),
                });
            }
            Ok(if support.contains(x0) { f(x0) } else { 0.0 })
        }
        ScalarDistribution::DiracDerivative { at, order } => {
            if at.dim() != support.dim() {
                return Err(Error::DimensionMismatch {
                    expected: support.dim(),
                    found: at.dim(),
                });
            }
            if !support.contains(at) {
                return Ok(0.0);
            }
            let k = order.total();
            let h = derivative_step(k, support.min_width());
            let mut counts = order.counts().to_vec();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            Ok(sign * mixed_derivative(f, at, &mut counts, h))
        }
        ScalarDistribution::Combination(terms) => {
            let mut acc = 0.0;
            for t in terms {
                let v = match &t.premultiplier {
                    None => pair_scalar(&t.dist, f, support, quad)?,
                    Some(h) => {
                        let folded = |q: &Point| h.eval(q) * f(q);
                        pair_scalar(&t.dist, &folded, support, quad)?
                    }
                };
                acc += t.coeff * v;
            }
            Ok(acc)
        }
    }
}

/// `⟨u, ν⟩` with the default rule for the dimension.
pub fn apply_scalar(u: &ScalarDistribution, nu: &NFormDensity) -> Result<f64> {
    apply_scalar_with(u, nu, &Quadrature::default_for_dim(nu.dim()))
}

pub fn apply_scalar_with(u: &ScalarDistribution, nu: &NFormDensity, quad: &Quadrature) -> Result<f64> {
    let phi = |q: &Point| nu.eval(q);
    pair_scalar(u, &phi, nu.support(), quad)
}

/// `⟨u, t̃⊗ν⟩ = Σ_i ⟨uⁱ, (e_i·t̃)·ν⟩` for a field `t̃` of transposed type.
pub fn apply_tensor(u: &TensorDistribution, tt: &SmoothTensorField, nu: &NFormDensity) -> Result<f64> {
    apply_tensor_with(u, tt, nu, &Quadrature::default_for_dim(nu.dim()))
}

pub fn apply_tensor_with(
    u: &TensorDistribution,
    tt: &SmoothTensorField,
    nu: &NFormDensity,
    quad: &Quadrature,
) -> Result<f64> {
    if tt.ttype() != u.ttype().transpose() {
        return Err(Error::TypeMismatch {
            expected: u.ttype().transpose(),
            found: tt.ttype(),
        });
    }
    let tt_fn = |q: &Point| tt.eval(q);
    pair_tensor(u, &tt_fn, nu, quad)
}

/// Tensor pairing against an arbitrary `(s,r)`-valued test function.
pub(crate) fn pair_tensor(
    u: &TensorDistribution,
    tt: &dyn Fn(&Point) -> TensorAtPoint,
    nu: &NFormDensity,
    quad: &Quadrature,
) -> Result<f64> {
    if nu.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: nu.dim(),
        });
    }
    let ttype = u.ttype();
    let mut acc = 0.0;
    for (ui, ei) in u.terms() {
        let folded = |q: &Point| {
            let phi = nu.eval(q);
            if phi == 0.0 {
                return 0.0;
            }
            let e = ei.eval(q);
            let t = tt(q);
            contract_unchecked(e.components(), t.components(), u.dim(), ttype) * phi
        };
        acc += pair_scalar(ui, &folded, nu.support(), quad)?;
    }
    Ok(acc)
}

/// `X(h) = Σ_k X^k ∂_k h`.
pub fn directional_derivative(x: &VectorFieldFlow, h: &SmoothMap) -> SmoothMap {
    let (x, h) = (x.clone(), h.clone());
    SmoothMap::new(move |p| {
        x.components()
            .iter()
            .enumerate()
            .map(|(k, xk)| xk.eval(p) * h.partial(p, k))
            .sum()
    })
}

/// Lie derivative of a scalar distribution, `L_X u = Σ_k X^k ∂_k u`, realised
/// on the variant structure.
pub fn lie_derivative_scalar(u: &ScalarDistribution, x: &VectorFieldFlow) -> Result<ScalarDistribution> {
    let n = x.dim();
    Ok(match u {
        ScalarDistribution::Regular(g) => ScalarDistribution::Regular(directional_derivative(x, g)),
        ScalarDistribution::Dirac(at) => ScalarDistribution::Combination(
            (0..n)
                .map(|k| {
                    DistributionTerm::new(
                        1.0,
                        Some(x.components()[k].clone()),
                        ScalarDistribution::DiracDerivative {
                            at: *at,
                            order: DerivativeOrder::unit(n, k),
                        },
                    )
                })
                .collect(),
        ),
        ScalarDistribution::DiracDerivative { at, order } => {
            let mut terms = Vec::with_capacity(n);
            for k in 0..n {
                terms.push(DistributionTerm::new(
                    1.0,
                    Some(x.components()[k].clone()),
                    ScalarDistribution::DiracDerivative {
                        at: *at,
                        order: order.raised(k)?,
                    },
                ));
            }
            ScalarDistribution::Combination(terms)
        }
        ScalarDistribution::Combination(terms) => {
            let mut out = Vec::with_capacity(2 * terms.len());
            for t in terms {
                if let Some(h) = &t.premultiplier {
                    if h.as_constant().is_none() {
                        out.push(DistributionTerm::new(
                            t.coeff,
                            Some(directional_derivative(x, h)),
                            t.dist.clone(),
                        ));
                    }
                }
                out.push(DistributionTerm::new(
                    t.coeff,
                    t.premultiplier.clone(),
                    lie_derivative_scalar(&t.dist, x)?,
                ));
            }
            ScalarDistribution::Combination(out)
        }
    })
}

/// `L_X u` for a tensor distribution, term by term:
/// `L_X(uⁱ⊗e_i) = (L_X uⁱ)⊗e_i + uⁱ⊗(L_X e_i)`.
///
/// This realises `⟨L_X u, t̃⊗ω⟩ = −⟨u, (L_X t̃)⊗ω + t̃⊗(L_X ω)⟩`.
pub fn lie_derivative_distribution(
    u: &TensorDistribution,
    x: &VectorFieldFlow,
) -> Result<TensorDistribution> {
    if x.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: x.dim(),
        });
    }
    let mut terms = Vec::with_capacity(2 * u.terms().len());
    for (ui, ei) in u.terms() {
        terms.push((lie_derivative_scalar(ui, x)?, ei.clone()));
        terms.push((ui.clone(), crate::lie::lie_classical(ei, x)));
    }
    TensorDistribution::new(u.ttype(), u.dim(), terms)
}
