//! Dense (r,s)-tensors at points, smooth tensor fields, full contraction and
//! basis changes.
//!
//! Components are stored row-major over the multi-index
//! `(i₁…i_r, j₁…j_s)`: contravariant block first, the first index most
//! significant.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distribution::{DistributionTerm, ScalarDistribution, TensorDistribution};
use crate::error::{Error, Result};
use crate::geometry::{Chart, Point, SmoothMap, DEFAULT_FD_STEP};

/// Largest supported total rank `r + s`.
pub const MAX_RANK: usize = 4;

/// Tensor type `(r, s)`: `r` contravariant and `s` covariant slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct TensorType {
    r: usize,
    s: usize,
}

impl TensorType {
    pub fn new(r: usize, s: usize) -> Result<Self> {
        if r + s > MAX_RANK {
            return Err(Error::RankCap(r + s));
        }
        Ok(Self { r, s })
    }

    pub const SCALAR: TensorType = TensorType { r: 0, s: 0 };
    pub const VECTOR: TensorType = TensorType { r: 1, s: 0 };
    pub const COVECTOR: TensorType = TensorType { r: 0, s: 1 };

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn rank(&self) -> usize {
        self.r + self.s
    }

    /// `(s, r)`, the type paired with `self` by full contraction.
    pub fn transpose(&self) -> Self {
        Self {
            r: self.s,
            s: self.r,
        }
    }

    pub fn component_count(&self, dim: usize) -> usize {
        dim.pow(self.rank() as u32)
    }

    pub fn combine(&self, other: &TensorType) -> Result<Self> {
        Self::new(self.r + other.r, self.s + other.s)
    }
}

impl TryFrom<[usize; 2]> for TensorType {
    type Error = Error;
    fn try_from(v: [usize; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<TensorType> for [usize; 2] {
    fn from(t: TensorType) -> Self {
        [t.r, t.s]
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.r, self.s)
    }
}

/// Flat position of a multi-index (first index most significant).
pub fn flatten_index(indices: &[usize], dim: usize) -> usize {
    indices.iter().fold(0, |acc, &i| acc * dim + i)
}

/// Inverse of [`flatten_index`].
pub fn unflatten_index(mut flat: usize, dim: usize, rank: usize) -> Vec<usize> {
    let mut out = vec![0; rank];
    for slot in (0..rank).rev() {
        out[slot] = flat % dim;
        flat /= dim;
    }
    out
}

/// Contracts one slot of a flat component array with a matrix.
///
/// Contravariant: `out[..i..] = Σ_k m[(i,k)]·in[..k..]`.
/// Covariant: `out[..j..] = Σ_k in[..k..]·m[(k,j)]`.
pub fn apply_to_slot(
    comps: &[f64],
    dim: usize,
    rank: usize,
    slot: usize,
    m: &DMatrix<f64>,
    covariant: bool,
) -> Vec<f64> {
    let stride = dim.pow((rank - 1 - slot) as u32);
    let mut out = vec![0.0; comps.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let own = (flat / stride) % dim;
        let base = flat - own * stride;
        let mut acc = 0.0;
        for k in 0..dim {
            let coeff = if covariant { m[(k, own)] } else { m[(own, k)] };
            acc += coeff * comps[base + k * stride];
        }
        *o = acc;
    }
    out
}

/// Components of an `(r,s)`-tensor at a chart point.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorAtPoint {
    ttype: TensorType,
    base: Point,
    components: Vec<f64>,
}

impl TensorAtPoint {
    pub fn new(ttype: TensorType, base: Point, components: Vec<f64>) -> Result<Self> {
        let expected = ttype.component_count(base.dim());
        if components.len() != expected {
            return Err(Error::InvalidInput(format!(
                "type {ttype} at dim {} needs {expected} components, got {}",
                base.dim(),
                components.len()
            )));
        }
        Ok(Self {
            ttype,
            base,
            components,
        })
    }

    pub fn zeros(ttype: TensorType, base: Point) -> Self {
        let n = ttype.component_count(base.dim());
        Self {
            ttype,
            base,
            components: vec![0.0; n],
        }
    }

    pub fn scalar(base: Point, value: f64) -> Self {
        Self {
            ttype: TensorType::SCALAR,
            base,
            components: vec![value],
        }
    }

    /// The basis tensor with a single 1 at `flat`.
    pub fn basis(ttype: TensorType, base: Point, flat: usize) -> Self {
        let mut t = Self::zeros(ttype, base);
        t.components[flat] = 1.0;
        t
    }

    /// The `(s,r)` tensor `t̃` with `contract_full(t, t̃) = t[flat]` for every `(r,s)` tensor `t`.
    pub fn dual_basis(ttype: TensorType, base: Point, flat: usize) -> Self {
        let n = base.dim();
        let idx = unflatten_index(flat, n, ttype.rank());
        let (contra, co) = idx.split_at(ttype.r());
        let swapped: Vec<usize> = co.iter().chain(contra).copied().collect();
        Self::basis(ttype.transpose(), base, flatten_index(&swapped, n))
    }

    pub fn ttype(&self) -> TensorType {
        self.ttype
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    pub fn component(&self, indices: &[usize]) -> f64 {
        self.components[flatten_index(indices, self.dim())]
    }

    pub fn rebased(mut self, base: Point) -> Self {
        self.base = base;
        self
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.components.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.require_compatible(other)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Self {
            ttype: self.ttype,
            base: self.base,
            components,
        })
    }

    fn require_compatible(&self, other: &Self) -> Result<()> {
        if self.ttype != other.ttype {
            return Err(Error::TypeMismatch {
                expected: self.ttype,
                found: other.ttype,
            });
        }
        self.require_same_base(other)
    }

    fn require_same_base(&self, other: &Self) -> Result<()> {
        if self.base != other.base {
            return Err(Error::InvalidInput(format!(
                "tensors based at different points {:?} and {:?}",
                self.base, other.base
            )));
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.components.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Σ over all multi-indices of `self^I_J · other^J_I`.
    pub fn contract_full(&self, other: &Self) -> Result<f64> {
        if other.ttype != self.ttype.transpose() {
            return Err(Error::TypeMismatch {
                expected: self.ttype.transpose(),
                found: other.ttype,
            });
        }
        self.require_same_base(other)?;
        Ok(contract_unchecked(
            &self.components,
            &other.components,
            self.dim(),
            self.ttype,
        ))
    }

    /// Outer product; indices ordered `(I₁, I₂, J₁, J₂)`.
    pub fn tensor_product(&self, other: &Self) -> Result<Self> {
        let ttype = self.ttype.combine(&other.ttype)?;
        self.require_same_base(other)?;
        let n = self.dim();
        let (u1, u2) = (n.pow(self.ttype.r() as u32), n.pow(self.ttype.s() as u32));
        let (v1, v2) = (n.pow(other.ttype.r() as u32), n.pow(other.ttype.s() as u32));
        let mut components = Vec::with_capacity(u1 * v1 * u2 * v2);
        for i1 in 0..u1 {
            for i2 in 0..v1 {
                for j1 in 0..u2 {
                    for j2 in 0..v2 {
                        components.push(
                            self.components[i1 * u2 + j1] * other.components[i2 * v2 + j2],
                        );
                    }
                }
            }
        }
        Ok(Self {
            ttype,
            base: self.base,
            components,
        })
    }

    /// Applies `contra` to every contravariant slot and `co` (from the right)
    /// to every covariant slot, rebasing the result at `base`.
    pub fn transform_slots(&self, contra: &DMatrix<f64>, co: &DMatrix<f64>, base: Point) -> Self {
        let n = self.dim();
        let rank = self.ttype.rank();
        let mut comps = self.components.clone();
        for slot in 0..rank {
            let covariant = slot >= self.ttype.r();
            let m = if covariant { co } else { contra };
            comps = apply_to_slot(&comps, n, rank, slot, m, covariant);
        }
        Self {
            ttype: self.ttype,
            base,
            components: comps,
        }
    }
}

pub(crate) fn contract_unchecked(t: &[f64], tt: &[f64], dim: usize, ttype: TensorType) -> f64 {
    let nr = dim.pow(ttype.r() as u32);
    let ns = dim.pow(ttype.s() as u32);
    let mut acc = 0.0;
    for i in 0..nr {
        for j in 0..ns {
            acc += t[i * ns + j] * tt[j * nr + i];
        }
    }
    acc
}

/// Free function form of [`TensorAtPoint::contract_full`].
pub fn contract_full(t: &TensorAtPoint, tt: &TensorAtPoint) -> Result<f64> {
    t.contract_full(tt)
}

/// Free function form of [`TensorAtPoint::tensor_product`].
pub fn tensor_product(u: &TensorAtPoint, v: &TensorAtPoint) -> Result<TensorAtPoint> {
    u.tensor_product(v)
}

#[derive(Serialize, Deserialize)]
struct TensorDump {
    shape: [usize; 3],
    base: Vec<f64>,
    components: Vec<f64>,
}

impl Serialize for TensorAtPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TensorDump {
            shape: [self.dim(), self.ttype.r(), self.ttype.s()],
            base: self.base.to_vec(),
            components: self.components.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TensorAtPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dump = TensorDump::deserialize(deserializer)?;
        let [n, r, s] = dump.shape;
        if dump.base.len() != n || !(1..=3).contains(&n) {
            return Err(D::Error::custom("base length must match shape dimension"));
        }
        let ttype = TensorType::new(r, s).map_err(D::Error::custom)?;
        TensorAtPoint::new(ttype, Point::new(&dump.base), dump.components).map_err(D::Error::custom)
    }
}

type WholeFn = Arc<dyn Fn(&Point) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum FieldRepr {
    Components(Vec<SmoothMap>),
    Whole(WholeFn),
}

/// A smooth `(r,s)` tensor field on the chart.
#[derive(Clone)]
pub struct SmoothTensorField {
    ttype: TensorType,
    dim: usize,
    repr: FieldRepr,
}

impl fmt::Debug for SmoothTensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothTensorField")
            .field("ttype", &self.ttype)
            .field("dim", &self.dim)
            .finish()
    }
}

impl SmoothTensorField {
    pub fn from_components(ttype: TensorType, dim: usize, components: Vec<SmoothMap>) -> Result<Self> {
        let expected = ttype.component_count(dim);
        if components.len() != expected {
            return Err(Error::InvalidInput(format!(
                "type {ttype} at dim {dim} needs {expected} component maps, got {}",
                components.len()
            )));
        }
        Ok(Self {
            ttype,
            dim,
            repr: FieldRepr::Components(components),
        })
    }

    /// A field evaluated all at once; partials fall back to central differences.
    pub fn from_fn(
        ttype: TensorType,
        dim: usize,
        f: impl Fn(&Point) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            ttype,
            dim,
            repr: FieldRepr::Whole(Arc::new(f)),
        }
    }

    pub fn scalar(dim: usize, f: SmoothMap) -> Self {
        Self {
            ttype: TensorType::SCALAR,
            dim,
            repr: FieldRepr::Components(vec![f]),
        }
    }

    pub fn zero(ttype: TensorType, dim: usize) -> Self {
        let m = ttype.component_count(dim);
        Self::from_components(ttype, dim, vec![SmoothMap::constant(0.0); m]).expect("sizes match")
    }

    /// The constant coordinate basis field with a 1 at `flat` (e.g. `∂_x`, `dy`, `∂_x⊗dy`).
    pub fn coordinate_basis(ttype: TensorType, dim: usize, flat: usize) -> Self {
        let m = ttype.component_count(dim);
        let comps = (0..m)
            .map(|k| SmoothMap::constant(if k == flat { 1.0 } else { 0.0 }))
            .collect();
        Self::from_components(ttype, dim, comps).expect("sizes match")
    }

    pub fn ttype(&self) -> TensorType {
        self.ttype
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, p: &Point) -> TensorAtPoint {
        let components = match &self.repr {
            FieldRepr::Components(c) => c.iter().map(|m| m.eval(p)).collect(),
            FieldRepr::Whole(f) => f(p),
        };
        TensorAtPoint {
            ttype: self.ttype,
            base: *p,
            components,
        }
    }

    /// Componentwise `∂_axis`.
    pub fn partial(&self, p: &Point, axis: usize) -> TensorAtPoint {
        let components = match &self.repr {
            FieldRepr::Components(c) => c.iter().map(|m| m.partial(p, axis)).collect(),
            FieldRepr::Whole(f) => {
                let h = DEFAULT_FD_STEP * p.coords()[axis].abs().max(1.0);
                let plus = f(&p.offset(axis, h));
                let minus = f(&p.offset(axis, -h));
                plus.iter()
                    .zip(&minus)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect()
            }
        };
        TensorAtPoint {
            ttype: self.ttype,
            base: *p,
            components,
        }
    }

    /// Component `flat` as a scalar map.
    pub fn component(&self, flat: usize) -> SmoothMap {
        match &self.repr {
            FieldRepr::Components(c) => c[flat].clone(),
            FieldRepr::Whole(f) => {
                let f = f.clone();
                SmoothMap::new(move |p| f(p)[flat])
            }
        }
    }

    /// `g·self`.
    pub fn scaled_by(&self, g: &SmoothMap) -> Self {
        match &self.repr {
            FieldRepr::Components(c) => Self {
                ttype: self.ttype,
                dim: self.dim,
                repr: FieldRepr::Components(c.iter().map(|m| g.mul(m)).collect()),
            },
            FieldRepr::Whole(f) => {
                let (f, g) = (f.clone(), g.clone());
                Self::from_fn(self.ttype, self.dim, move |p| {
                    let c = g.eval(p);
                    f(p).into_iter().map(|x| c * x).collect()
                })
            }
        }
    }

    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.ttype != other.ttype {
            return Err(Error::TypeMismatch {
                expected: self.ttype,
                found: other.ttype,
            });
        }
        if let (FieldRepr::Components(x), FieldRepr::Components(y)) = (&self.repr, &other.repr) {
            let comps = x.iter().zip(y).map(|(u, v)| u.lin_comb(a, v, b)).collect();
            return Self::from_components(self.ttype, self.dim, comps);
        }
        let (x, y) = (self.clone(), other.clone());
        Ok(Self::from_fn(self.ttype, self.dim, move |p| {
            let u = x.eval(p).components;
            let v = y.eval(p).components;
            u.iter().zip(&v).map(|(s, t)| a * s + b * t).collect()
        }))
    }

    /// Pointwise tensor product of two fields.
    pub fn tensor_product(&self, other: &Self) -> Result<Self> {
        let ttype = self.ttype.combine(&other.ttype)?;
        let (x, y) = (self.clone(), other.clone());
        Ok(Self::from_fn(ttype, self.dim, move |p| {
            x.eval(p)
                .tensor_product(&y.eval(p))
                .expect("types checked at construction")
                .components
        }))
    }

    /// Pointwise full contraction `self·other` with a field of transposed type.
    pub fn contract(&self, other: &Self) -> Result<SmoothMap> {
        if other.ttype != self.ttype.transpose() {
            return Err(Error::TypeMismatch {
                expected: self.ttype.transpose(),
                found: other.ttype,
            });
        }
        let (x, y) = (self.clone(), other.clone());
        let ttype = self.ttype;
        let dim = self.dim;
        Ok(SmoothMap::new(move |p| {
            contract_unchecked(&x.eval(p).components, &y.eval(p).components, dim, ttype)
        }))
    }
}

/// A change of module basis `e_i = a^j_i ê_j` with smooth coefficients.
///
/// `coeffs[j * m + i]` holds `a^j_i`, where `m = n^(r+s)`.
#[derive(Clone, Debug)]
pub struct BasisChange {
    ttype: TensorType,
    dim: usize,
    coeffs: Vec<SmoothMap>,
    check_grid: Vec<Point>,
}

impl BasisChange {
    pub fn new(ttype: TensorType, chart: &Chart, coeffs: Vec<SmoothMap>) -> Result<Self> {
        let dim = chart.dim();
        let m = ttype.component_count(dim);
        if coeffs.len() != m * m {
            return Err(Error::InvalidInput(format!(
                "basis change for {ttype} at dim {dim} needs {} coefficients, got {}",
                m * m,
                coeffs.len()
            )));
        }
        let per_axis = match dim {
            1 => 10,
            2 => 7,
            _ => 5,
        };
        Ok(Self {
            ttype,
            dim,
            coeffs,
            check_grid: chart.domain.sample_grid(per_axis),
        })
    }

    pub fn identity(ttype: TensorType, chart: &Chart) -> Result<Self> {
        let m = ttype.component_count(chart.dim());
        let coeffs = (0..m * m)
            .map(|k| SmoothMap::constant(if k / m == k % m { 1.0 } else { 0.0 }))
            .collect();
        Self::new(ttype, chart, coeffs)
    }

    pub fn ttype(&self) -> TensorType {
        self.ttype
    }

    fn size(&self) -> usize {
        self.ttype.component_count(self.dim)
    }

    /// `a^j_i` for row `j` (new basis), column `i` (old basis).
    pub fn coefficient(&self, j: usize, i: usize) -> &SmoothMap {
        &self.coeffs[j * self.size() + i]
    }

    pub fn matrix_at(&self, p: &Point) -> DMatrix<f64> {
        let m = self.size();
        DMatrix::from_fn(m, m, |j, i| self.coeffs[j * m + i].eval(p))
    }

    /// Fails if the coefficient matrix is singular somewhere on the check grid.
    pub fn check_invertible(&self) -> Result<()> {
        let mats: Vec<DMatrix<f64>> = self.check_grid.iter().map(|p| self.matrix_at(p)).collect();
        // determinants are compared against the largest entry over the whole grid
        let scale = mats.iter().map(|a| a.abs().max()).fold(1e-300, f64::max);
        for (p, a) in self.check_grid.iter().zip(&mats) {
            if (a.determinant() / scale.powi(a.nrows() as i32)).abs() < 1e-12 {
                return Err(Error::SingularBasisChange(p.to_vec()));
            }
        }
        Ok(())
    }

    /// `next` after `self`: with `e = a ê` and `ê = b ě`, returns `e = (b·a) ě`.
    pub fn then(&self, next: &BasisChange) -> Result<BasisChange> {
        if self.ttype != next.ttype || self.dim != next.dim {
            return Err(Error::TypeMismatch {
                expected: self.ttype,
                found: next.ttype,
            });
        }
        let m = self.size();
        let mut coeffs = Vec::with_capacity(m * m);
        for k in 0..m {
            for i in 0..m {
                let terms: Vec<(SmoothMap, SmoothMap)> = (0..m)
                    .map(|j| (next.coefficient(k, j).clone(), self.coefficient(j, i).clone()))
                    .collect();
                let entry = terms
                    .iter()
                    .map(|(b, a)| b.mul(a))
                    .reduce(|x, y| x.add(&y))
                    .expect("m ≥ 1");
                coeffs.push(entry);
            }
        }
        Ok(BasisChange {
            ttype: self.ttype,
            dim: self.dim,
            coeffs,
            check_grid: self.check_grid.clone(),
        })
    }
}

/// Rewrites `u = uⁱ⊗e_i` in the hatted basis: `ûʲ = a^j_i uⁱ`, `ê_j = (a⁻¹)^i_j e_i`.
///
/// `u` must list exactly one term per basis element, in basis order.
pub fn change_basis_representation(
    u: &TensorDistribution,
    bc: &BasisChange,
) -> Result<TensorDistribution> {
    if u.ttype() != bc.ttype {
        return Err(Error::TypeMismatch {
            expected: bc.ttype,
            found: u.ttype(),
        });
    }
    let m = bc.size();
    if u.terms().len() != m {
        return Err(Error::InvalidInput(format!(
            "basis change needs a full basis representation with {m} terms, got {}",
            u.terms().len()
        )));
    }
    bc.check_invertible()?;

    let old_fields: Vec<SmoothTensorField> = u.terms().iter().map(|(_, e)| e.clone()).collect();
    let mut terms = Vec::with_capacity(m);
    for j in 0..m {
        let mut parts = Vec::new();
        for (i, (ui, _)) in u.terms().iter().enumerate() {
            let a = bc.coefficient(j, i);
            match a.as_constant() {
                Some(0.0) => {}
                Some(c) => parts.push(DistributionTerm::new(c, None, ui.clone())),
                None => parts.push(DistributionTerm::new(1.0, Some(a.clone()), ui.clone())),
            }
        }
        let coeff = ScalarDistribution::Combination(parts);

        let bc_j = bc.clone();
        let fields = old_fields.clone();
        let ttype = u.ttype();
        let hat = SmoothTensorField::from_fn(ttype, u.dim(), move |p| {
            let inv = bc_j
                .matrix_at(p)
                .try_inverse()
                .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
            let mut acc = vec![0.0; ttype.component_count(p.dim())];
            for (i, e) in fields.iter().enumerate() {
                let w = inv[(i, j)];
                if w != 0.0 {
                    for (a, x) in acc.iter_mut().zip(e.eval(p).components()) {
                        *a += w * x;
                    }
                }
            }
            acc
        });
        terms.push((coeff, hat));
    }
    TensorDistribution::new(u.ttype(), u.dim(), terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{apply_tensor, NFormDensity};
    use crate::geometry::BoxDomain;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn at(x: &[f64]) -> Point {
        Point::new(x)
    }

    #[test]
    fn trace_via_identity() {
        let p = at(&[0.0, 0.0]);
        let t = TensorAtPoint::new(TensorType::new(1, 1).unwrap(), p, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = TensorAtPoint::new(TensorType::new(1, 1).unwrap(), p, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(contract_full(&t, &id).unwrap(), 5.0);
        let zero = TensorAtPoint::zeros(TensorType::new(1, 1).unwrap(), p);
        assert_eq!(contract_full(&t, &zero).unwrap(), 0.0);
    }

    #[test]
    fn vector_covector_pairing() {
        let p = at(&[0.3, 0.1]);
        let v = TensorAtPoint::new(TensorType::VECTOR, p, vec![2.0, 3.0]).unwrap();
        let b = TensorAtPoint::new(TensorType::COVECTOR, p, vec![5.0, 7.0]).unwrap();
        assert_eq!(contract_full(&v, &b).unwrap(), 31.0);
    }

    #[test]
    fn contraction_type_mismatch() {
        let p = at(&[0.0]);
        let v = TensorAtPoint::zeros(TensorType::VECTOR, p);
        assert!(matches!(
            contract_full(&v, &v),
            Err(Error::TypeMismatch { .. })
        ));
    }

    #[test]
    fn outer_product_examples() {
        let p = at(&[0.0, 0.0]);
        let v = TensorAtPoint::new(TensorType::VECTOR, p, vec![1.0, 0.0]).unwrap();
        let b = TensorAtPoint::new(TensorType::COVECTOR, p, vec![0.0, 1.0]).unwrap();
        let t = tensor_product(&v, &b).unwrap();
        assert_eq!(t.ttype(), TensorType::new(1, 1).unwrap());
        assert_eq!(t.components(), &[0.0, 1.0, 0.0, 0.0]);

        let one = TensorAtPoint::scalar(p, 1.0);
        assert_eq!(tensor_product(&v, &one).unwrap(), v);

        let w = TensorAtPoint::new(TensorType::VECTOR, p, vec![0.5, -2.0]).unwrap();
        let lhs = tensor_product(&v.scale(3.0), &w).unwrap();
        let rhs = tensor_product(&v, &w).unwrap().scale(3.0);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn rank_cap() {
        assert!(matches!(TensorType::new(3, 2), Err(Error::RankCap(5))));
        let p = at(&[0.0]);
        let t = TensorAtPoint::zeros(TensorType::new(2, 1).unwrap(), p);
        let u = TensorAtPoint::zeros(TensorType::new(1, 1).unwrap(), p);
        assert!(matches!(tensor_product(&t, &u), Err(Error::RankCap(5))));
    }

    #[test]
    fn index_roundtrip_exhaustive() {
        for n in 1usize..=3 {
            for rank in 0..=MAX_RANK {
                for flat in 0..n.pow(rank as u32) {
                    let idx = unflatten_index(flat, n, rank);
                    assert_eq!(flatten_index(&idx, n), flat);
                }
            }
        }
    }

    #[test]
    fn dual_basis_extracts_components() {
        let p = at(&[0.1, 0.2]);
        let ttype = TensorType::new(2, 1).unwrap();
        let comps: Vec<f64> = (0..8).map(|k| k as f64 * 1.5 - 2.0).collect();
        let t = TensorAtPoint::new(ttype, p, comps.clone()).unwrap();
        for (k, c) in comps.iter().enumerate() {
            let d = TensorAtPoint::dual_basis(ttype, p, k);
            assert_eq!(t.contract_full(&d).unwrap(), *c);
        }
    }

    #[test]
    fn tensor_json_has_shape_header() {
        let t = TensorAtPoint::new(TensorType::new(1, 1).unwrap(), at(&[0.5, 0.0]), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"shape":[2,1,1],"base":[0.5,0.0],"components":[1.0,2.0,3.0,4.0]}"#);
        let back: TensorAtPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    fn arb_tensor(n: usize, r: usize, s: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, n.pow((r + s) as u32))
    }

    proptest! {
        // Full contraction of v⊗β against a simple tensor reproduces the
        // product of slotwise pairings (brute force over index tuples).
        #[test]
        fn contraction_of_simple_tensors(
            v in arb_tensor(2, 1, 0), b in arb_tensor(2, 0, 1),
            w in arb_tensor(2, 0, 1), a in arb_tensor(2, 1, 0),
        ) {
            let p = at(&[0.0, 0.0]);
            let vb = tensor_product(
                &TensorAtPoint::new(TensorType::VECTOR, p, v.clone()).unwrap(),
                &TensorAtPoint::new(TensorType::COVECTOR, p, b.clone()).unwrap(),
            ).unwrap();
            let wa = tensor_product(
                &TensorAtPoint::new(TensorType::COVECTOR, p, w.clone()).unwrap(),
                &TensorAtPoint::new(TensorType::VECTOR, p, a.clone()).unwrap(),
            ).unwrap();
            // wa has type (1,1) with contravariant slot from `a`.
            let got = vb.contract_full(&wa).unwrap();
            let mut brute = 0.0;
            for i in 0..2 { for j in 0..2 {
                brute += v[i] * b[j] * a[j] * w[i];
            }}
            prop_assert!((got - brute).abs() <= 1e-13 * brute.abs().max(1.0));
        }
    }

    #[test]
    fn identity_basis_change_keeps_action() {
        let chart = Chart::cube(1, 1.0).unwrap();
        let u = TensorDistribution::in_coordinate_basis(
            TensorType::VECTOR,
            1,
            vec![ScalarDistribution::dirac(at(&[0.1]))],
        )
        .unwrap();
        let bc = BasisChange::identity(TensorType::VECTOR, &chart).unwrap();
        let uh = change_basis_representation(&u, &bc).unwrap();
        let tt = SmoothTensorField::from_components(
            TensorType::COVECTOR,
            1,
            vec![SmoothMap::new(|p| 1.0 + p.coords()[0])],
        )
        .unwrap();
        let nu = NFormDensity::new(
            SmoothMap::new(|p| (1.0 - p.coords()[0].powi(2)).max(0.0)),
            BoxDomain::centered(&at(&[0.0]), 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            apply_tensor(&u, &tt, &nu).unwrap(),
            apply_tensor(&uh, &tt, &nu).unwrap()
        );
    }

    #[test]
    fn singular_basis_change_rejected() {
        let chart = Chart::cube(1, 1.0).unwrap();
        let bc = BasisChange::new(TensorType::VECTOR, &chart, vec![SmoothMap::coordinate(0)]).unwrap();
        let u = TensorDistribution::in_coordinate_basis(
            TensorType::VECTOR,
            1,
            vec![ScalarDistribution::dirac(at(&[0.0]))],
        )
        .unwrap();
        // the 10-point check grid holds cell centers ±0.1, ±0.3, ...
        let bc2 = BasisChange::new(
            TensorType::VECTOR,
            &chart,
            vec![SmoothMap::new(|p| p.coords()[0] - 0.1)],
        )
        .unwrap();
        assert!(change_basis_representation(&u, &bc).is_ok());
        assert!(matches!(
            change_basis_representation(&u, &bc2),
            Err(Error::SingularBasisChange(_))
        ));
    }

    #[test]
    fn composed_basis_changes() {
        let chart = Chart::cube(1, 1.0).unwrap();
        let a = BasisChange::new(TensorType::VECTOR, &chart, vec![SmoothMap::new(|p| (-p.coords()[0]).exp())]).unwrap();
        let b = BasisChange::new(TensorType::VECTOR, &chart, vec![SmoothMap::new(|p| 2.0 + p.coords()[0])]).unwrap();
        let ab = a.then(&b).unwrap();
        let p = at(&[0.4]);
        assert_relative_eq!(
            ab.matrix_at(&p)[(0, 0)],
            (-0.4f64).exp() * 2.4,
            epsilon = 1e-15
        );
    }
}
