//! The basic space: maps `(ω, p, A) ↦ t(ω,p,A) ∈ (T^r_s)_p M`, together with the
//! embeddings σ and ι and pointwise algebra.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{pair_tensor, NFormDensity, ScalarDistribution, TensorDistribution};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quadrature::Quadrature;
use crate::tensor::{SmoothTensorField, TensorAtPoint, TensorType};
use crate::transport::{TensorTransport, TransportOperator};

/// Which construction produced an element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sigma,
    IotaContinuous,
    IotaDistribution,
    Algebraic,
    Lie,
    Diffeo,
}

pub type EvalFn =
    Arc<dyn Fn(&NFormDensity, &Point, &TransportOperator) -> Result<TensorAtPoint> + Send + Sync>;

/// An element `t` of the basic space `Ê^r_s`.
#[derive(Clone)]
pub struct BasicSpaceElement {
    ttype: TensorType,
    dim: usize,
    provenance: Provenance,
    eval: EvalFn,
}

/// A basic-space element of type `(0,0)`.
pub type GeneralizedScalar = BasicSpaceElement;

impl fmt::Debug for BasicSpaceElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasicSpaceElement")
            .field("ttype", &self.ttype)
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl BasicSpaceElement {
    pub fn new(
        ttype: TensorType,
        dim: usize,
        provenance: Provenance,
        eval: impl Fn(&NFormDensity, &Point, &TransportOperator) -> Result<TensorAtPoint>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            ttype,
            dim,
            provenance,
            eval: Arc::new(eval),
        }
    }

    pub fn ttype(&self) -> TensorType {
        self.ttype
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `t(ω, p, A)`, checked to be a tensor of the declared type based at `p`.
    pub fn eval(&self, omega: &NFormDensity, p: &Point, a: &TransportOperator) -> Result<TensorAtPoint> {
        for found in [p.dim(), omega.dim(), a.dim()] {
            if found != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found,
                });
            }
        }
        let t = (self.eval)(omega, p, a)?;
        if t.ttype() != self.ttype || t.base() != p {
            return Err(Error::Membership(format!(
                "{:?} element returned a {} tensor at {:?} for a {} query at {:?}",
                self.provenance,
                t.ttype(),
                t.base(),
                self.ttype,
                p
            )));
        }
        Ok(t)
    }

    pub fn zero(ttype: TensorType, dim: usize) -> Self {
        Self::new(ttype, dim, Provenance::Algebraic, move |_, p, _| Ok(TensorAtPoint::zeros(ttype, *p)))
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.ttype != other.ttype {
            return Err(Error::TypeMismatch {
                expected: self.ttype,
                found: other.ttype,
            });
        }
        let (x, y) = (self.clone(), other.clone());
        Ok(Self::new(self.ttype, self.dim, Provenance::Algebraic, move |w, p, t| {
            x.eval(w, p, t)?.scale(a).add(&y.eval(w, p, t)?.scale(b))
        }))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let x = self.clone();
        Self::new(self.ttype, self.dim, Provenance::Algebraic, move |w, p, t| {
            Ok(x.eval(w, p, t)?.scale(c))
        })
    }
}

/// `σ(f)(ω, p, A) = f(p)`.
pub fn embed_sigma(f: &SmoothTensorField) -> BasicSpaceElement {
    let f = f.clone();
    BasicSpaceElement::new(f.ttype(), f.dim(), Provenance::Sigma, move |_, p, _| Ok(f.eval(p)))
}

fn warn_if_outside(omega: &NFormDensity, a: &TransportOperator, what: &str) {
    if let Some(s) = a.support() {
        if !s.contains_box(omega.support()) {
            log::warn!(
                "{what}: mollifier support {} leaves the support {s} of transport {}; outside contributions are zero",
                omega.support(),
                a.name()
            );
        }
    }
}

/// `ι(g)(ω, p, A) = ∫ B^r_s(q,p) g(q) ω(q)` with the default rule for the dimension.
pub fn embed_iota_continuous(g: &SmoothTensorField) -> BasicSpaceElement {
    embed_iota_continuous_with(g, Quadrature::default_for_dim(g.dim()))
}

pub fn embed_iota_continuous_with(g: &SmoothTensorField, quad: Quadrature) -> BasicSpaceElement {
    let g = g.clone();
    let ttype = g.ttype();
    BasicSpaceElement::new(ttype, g.dim(), Provenance::IotaContinuous, move |omega, p, a| {
        warn_if_outside(omega, a, "iota_continuous");
        let tr = TensorTransport::new(a.clone(), ttype);
        let m = ttype.component_count(p.dim());
        let comps = quad.try_integrate_vec(omega.support(), m, |q, out| {
            let phi = omega.eval(q);
            if phi == 0.0 {
                return Ok(());
            }
            let b = tr.apply_b(&g.eval(q), p)?;
            for (o, v) in out.iter_mut().zip(b.components()) {
                *o = v * phi;
            }
            Ok(())
        })?;
        TensorAtPoint::new(ttype, *p, comps)
    })
}

/// `(ιu)(ω,p,A)·t̃(p) = ⟨u, A^r_s(p,·) t̃(p) ⊗ ω⟩`, assembled over the dual basis at `p`.
pub fn embed_iota_distribution(u: &TensorDistribution) -> BasicSpaceElement {
    embed_iota_distribution_with(u, Quadrature::default_for_dim(u.dim()))
}

pub fn embed_iota_distribution_with(u: &TensorDistribution, quad: Quadrature) -> BasicSpaceElement {
    let u = u.clone();
    let ttype = u.ttype();
    BasicSpaceElement::new(ttype, u.dim(), Provenance::IotaDistribution, move |omega, p, a| {
        warn_if_outside(omega, a, "iota_distribution");
        let tr = TensorTransport::new(a.clone(), ttype);
        let m = ttype.component_count(p.dim());
        let mut comps = Vec::with_capacity(m);
        for k in 0..m {
            let dual = TensorAtPoint::dual_basis(ttype, *p, k);
            let test = |q: &Point| {
                tr.apply_a_rs(&dual, q)
                    .expect("dual basis has the transposed type")
            };
            comps.push(pair_tensor(&u, &test, omega, &quad)?);
        }
        TensorAtPoint::new(ttype, *p, comps)
    })
}

/// The scalar embedding `ι(u)(ω, p, A) = ⟨u, ω⟩`.
pub fn embed_iota_scalar(u: &ScalarDistribution, dim: usize) -> GeneralizedScalar {
    embed_iota_distribution(&TensorDistribution::scalar(u.clone(), dim))
}

/// Pointwise product: scalar times tensor, or tensor product of the values.
pub fn pointwise_product(t1: &BasicSpaceElement, t2: &BasicSpaceElement) -> Result<BasicSpaceElement> {
    if t1.dim != t2.dim {
        return Err(Error::DimensionMismatch {
            expected: t1.dim,
            found: t2.dim,
        });
    }
    let ttype = t1.ttype.combine(&t2.ttype)?;
    let (x, y) = (t1.clone(), t2.clone());
    Ok(BasicSpaceElement::new(ttype, t1.dim, Provenance::Algebraic, move |w, p, a| {
        x.eval(w, p, a)?.tensor_product(&y.eval(w, p, a)?)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Chart, SmoothMap};
    use crate::mollifier::{make_mollifier, BumpProfile};
    use approx::assert_relative_eq;

    fn line() -> Chart {
        Chart::cube(1, 1.0).unwrap()
    }

    fn vector_field_1d(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SmoothTensorField {
        SmoothTensorField::from_components(
            TensorType::VECTOR,
            1,
            vec![SmoothMap::new(move |p| f(p.coords()[0]))],
        )
        .unwrap()
    }

    #[test]
    fn sigma_returns_field_value() {
        let f = vector_field_1d(|x| x * x);
        let c = Chart::cube(1, 3.0).unwrap();
        let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &Point::new(&[2.0]), 0.1, &c).unwrap();
        let a = TransportOperator::identity_cut(&c);
        let v = embed_sigma(&f).eval(&w, &Point::new(&[2.0]), &a).unwrap();
        assert_eq!(v.components(), &[4.0]);
        let z = embed_sigma(&SmoothTensorField::zero(TensorType::VECTOR, 1));
        assert_eq!(z.eval(&w, &Point::new(&[2.0]), &a).unwrap().components(), &[0.0]);
    }

    #[test]
    fn iota_of_constant_is_exact() {
        let c = line();
        let g = vector_field_1d(|_| 3.5);
        let p = Point::new(&[0.2]);
        let w = make_mollifier(&BumpProfile::bump_shift(1, 0.3).unwrap(), &p, 0.1, &c).unwrap();
        let v = embed_iota_continuous(&g).eval(&w, &p, &TransportOperator::identity_cut(&c)).unwrap();
        assert_relative_eq!(v.components()[0], 3.5, epsilon = 1e-10);
    }

    #[test]
    fn iota_of_identity_field_second_order() {
        let c = line();
        let g = vector_field_1d(|x| x);
        let prof = BumpProfile::bump_sym(1).unwrap();
        let p = Point::new(&[0.3]);
        for eps in [0.1, 0.05] {
            let w = make_mollifier(&prof, &p, eps, &c).unwrap();
            let v = embed_iota_continuous(&g).eval(&w, &p, &TransportOperator::identity_cut(&c)).unwrap();
            // x is linear, so the symmetric average is exact
            assert_relative_eq!(v.components()[0], 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn iota_with_shear_picks_up_first_moment() {
        let c = line();
        let g = vector_field_1d(|_| 1.0);
        let prof = BumpProfile::bump_shift(1, 0.3).unwrap();
        let p = Point::new(&[0.0]);
        let eps = 0.1;
        let w = make_mollifier(&prof, &p, eps, &c).unwrap();
        let v = embed_iota_continuous(&g).eval(&w, &p, &TransportOperator::shear(&c, 1.0)).unwrap();
        // the shear factor for B(q,p) is A(q,p) = 1 + (p − q), so the moment enters with a minus sign
        assert_relative_eq!(v.components()[0], 1.0 - 0.3 * eps, epsilon = 1e-10);
    }

    #[test]
    fn iota_of_delta_uses_transport() {
        let c = line();
        let a = TransportOperator::from_fn("a", 1, |p, q| {
            nalgebra::DMatrix::from_element(1, 1, 1.0 + 0.5 * p.coords()[0] + q.coords()[0] * q.coords()[0])
        });
        let u = TensorDistribution::in_coordinate_basis(
            TensorType::VECTOR,
            1,
            vec![ScalarDistribution::dirac(Point::new(&[0.05]))],
        )
        .unwrap();
        let p = Point::new(&[0.0]);
        let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &p, 0.1, &c).unwrap();
        let v = embed_iota_distribution(&u).eval(&w, &p, &a).unwrap();
        // a(x₀, p) φ(x₀) with a(q,p) = matrix(q, p)
        let expected = (1.0 + 0.5 * 0.05) * w.eval(&Point::new(&[0.05]));
        assert_relative_eq!(v.components()[0], expected, epsilon = 1e-13);
        let zero = TensorDistribution::zero(TensorType::VECTOR, 1);
        assert_eq!(embed_iota_distribution(&zero).eval(&w, &p, &a).unwrap().components(), &[0.0]);
    }

    #[test]
    fn products_of_sigma_images() {
        let c = line();
        let f = SmoothMap::new(|p| 1.0 + p.coords()[0]);
        let g = vector_field_1d(|x| x.sin());
        let fg = g.scaled_by(&f);
        let a = TransportOperator::identity_cut(&c);
        let prod = pointwise_product(&embed_sigma(&SmoothTensorField::scalar(1, f)), &embed_sigma(&g)).unwrap();
        let one = embed_sigma(&SmoothTensorField::scalar(1, SmoothMap::constant(1.0)));
        let with_one = pointwise_product(&one, &embed_sigma(&g)).unwrap();
        for x in [-0.5, 0.0, 0.4] {
            let p = Point::new(&[x]);
            let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &p, 0.1, &c).unwrap();
            assert_eq!(
                prod.eval(&w, &p, &a).unwrap().components(),
                embed_sigma(&fg).eval(&w, &p, &a).unwrap().components()
            );
            assert_eq!(
                with_one.eval(&w, &p, &a).unwrap().components(),
                embed_sigma(&g).eval(&w, &p, &a).unwrap().components()
            );
        }
    }

    #[test]
    fn membership_violation_is_caught() {
        let bad = BasicSpaceElement::new(TensorType::VECTOR, 1, Provenance::Algebraic, |_, _, _| {
            Ok(TensorAtPoint::zeros(TensorType::VECTOR, Point::new(&[0.5])))
        });
        let c = line();
        let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &Point::new(&[0.0]), 0.1, &c).unwrap();
        let err = bad.eval(&w, &Point::new(&[0.0]), &TransportOperator::identity_cut(&c));
        assert!(matches!(err, Err(Error::Membership(_))));
    }
}
