//! Diffeomorphism action `μ̂` on basic-space elements, the flow-based `L̂_X`,
//! classical Lie derivatives and pullbacks of fields and distributions.

use nalgebra::DMatrix;

use crate::distribution::{DistributionTerm, NFormDensity, ScalarDistribution, TensorDistribution};
use crate::embedding::{BasicSpaceElement, Provenance};
use crate::error::{Error, Result};
use crate::geometry::{invert, Diffeo, Point, SmoothMap, VectorFieldFlow};
use crate::tensor::{apply_to_slot, SmoothTensorField, TensorAtPoint};
use crate::transport::TransportOperator;

/// Default flow time step of the central difference in [`lie_hat`].
pub const DEFAULT_TAU_LIE: f64 = 1e-3;

/// Chart formula for `L_X g`: `X^k ∂_k g`, minus `DX` on each contravariant
/// slot, plus `DX` from the right on each covariant slot.
pub fn lie_classical(g: &SmoothTensorField, x: &VectorFieldFlow) -> SmoothTensorField {
    let (g, x) = (g.clone(), x.clone());
    let ttype = g.ttype();
    SmoothTensorField::from_fn(ttype, g.dim(), move |p| {
        let n = p.dim();
        let rank = ttype.rank();
        let xv = x.eval(p);
        let mut out = vec![0.0; ttype.component_count(n)];
        for (k, xk) in xv.iter().enumerate() {
            if *xk != 0.0 {
                for (o, d) in out.iter_mut().zip(g.partial(p, k).components()) {
                    *o += xk * d;
                }
            }
        }
        if rank > 0 {
            let dx = x.derivative(p);
            let val = g.eval(p);
            for slot in 0..rank {
                let covariant = slot >= ttype.r();
                let corr = apply_to_slot(val.components(), n, rank, slot, &dx, covariant);
                let sign = if covariant { 1.0 } else { -1.0 };
                for (o, c) in out.iter_mut().zip(&corr) {
                    *o += sign * c;
                }
            }
        }
        out
    })
}

/// `μ^*g`: `g(μ(x))` pulled back along `Dμ(x)`.
pub fn pullback_field(mu: &Diffeo, g: &SmoothTensorField) -> SmoothTensorField {
    let (mu, g) = (mu.clone(), g.clone());
    let ttype = g.ttype();
    SmoothTensorField::from_fn(ttype, g.dim(), move |x| {
        let pulled = (|| -> Result<TensorAtPoint> {
            let y = mu.forward(x)?;
            let j = mu.jacobian_at(x)?;
            let jinv = invert(&j, x)?;
            Ok(g.eval(&y).transform_slots(&jinv, &j, *x))
        })();
        match pulled {
            Ok(t) => t.into_components(),
            Err(_) => vec![f64::NAN; ttype.component_count(x.dim())],
        }
    })
}

/// `μ_*g = (μ⁻¹)^*g`, a field on the codomain.
pub fn pushforward_field(mu: &Diffeo, g: &SmoothTensorField) -> SmoothTensorField {
    pullback_field(&mu.inverse_diffeo(), g)
}

/// `μ^*v` for a scalar distribution on the codomain: `⟨μ^*v, ω⟩ = ⟨v, μ_*ω⟩`.
pub fn pullback_scalar(mu: &Diffeo, v: &ScalarDistribution) -> Result<ScalarDistribution> {
    Ok(match v {
        ScalarDistribution::Regular(g) => ScalarDistribution::Regular(g.compose(mu)),
        ScalarDistribution::Dirac(y0) => {
            let x0 = mu.inverse(y0)?;
            let det = mu.jacobian_at(&x0)?.determinant().abs();
            if det == 0.0 {
                return Err(Error::SingularJacobian(x0.to_vec()));
            }
            ScalarDistribution::Dirac(x0).scaled(1.0 / det)
        }
        ScalarDistribution::DiracDerivative { .. } => {
            return Err(Error::UnsupportedVariant(
                "pullback of Dirac derivatives is not implemented".into(),
            ))
        }
        ScalarDistribution::Combination(terms) => ScalarDistribution::Combination(
            terms
                .iter()
                .map(|t| {
                    Ok(DistributionTerm::new(
                        t.coeff,
                        t.premultiplier.as_ref().map(|h| h.compose(mu)),
                        pullback_scalar(mu, &t.dist)?,
                    ))
                })
                .collect::<Result<_>>()?,
        ),
    })
}

/// `μ^*u`, term by term.
pub fn pullback_distribution(mu: &Diffeo, u: &TensorDistribution) -> Result<TensorDistribution> {
    let terms = u
        .terms()
        .iter()
        .map(|(v, e)| Ok((pullback_scalar(mu, v)?, pullback_field(mu, e))))
        .collect::<Result<_>>()?;
    TensorDistribution::new(u.ttype(), u.dim(), terms)
}

/// Slot arguments `(ω, p, A)` carried over to the codomain of a diffeo.
#[derive(Clone, Debug)]
pub struct PushedData {
    pub omega_push: NFormDensity,
    pub point_push: Point,
    pub transport_push: TransportOperator,
}

/// `φ'(y) = φ(μ⁻¹y)·|det Dμ⁻¹(y)|` on the image of the support box.
pub fn pushforward_density(mu: &Diffeo, omega: &NFormDensity) -> Result<NFormDensity> {
    let support = mu.image_box(omega.support())?;
    let (m, w) = (mu.clone(), omega.clone());
    let density = SmoothMap::new(move |y| {
        let Ok(x) = m.inverse(y) else { return 0.0 };
        if !w.support().contains(&x) {
            return 0.0;
        }
        let Ok(j) = m.jacobian_at(&x) else { return 0.0 };
        w.density().eval(&x) / j.determinant().abs()
    });
    Ok(NFormDensity::new_unchecked(density, support))
}

/// `A'(p', q') = Dμ(μ⁻¹q')·A(μ⁻¹p', μ⁻¹q')·Dμ(μ⁻¹p')⁻¹`.
pub fn pushforward_transport(mu: &Diffeo, a: &TransportOperator) -> TransportOperator {
    let (m, a) = (mu.clone(), a.clone());
    let n = mu.dim();
    TransportOperator::from_fn(format!("{}∘{}", a.name(), mu.name()), n, move |pp, qq| {
        let conj = || -> Result<DMatrix<f64>> {
            let p = m.inverse(pp)?;
            let q = m.inverse(qq)?;
            let ap = a.matrix(&p, &q);
            if ap.iter().all(|v| *v == 0.0) {
                return Ok(ap);
            }
            let jp = m.jacobian_at(&p)?;
            Ok(m.jacobian_at(&q)? * ap * invert(&jp, &p)?)
        };
        conj().unwrap_or_else(|_| DMatrix::zeros(n, n))
    })
}

pub fn pushforward_data(
    mu: &Diffeo,
    omega: &NFormDensity,
    p: &Point,
    a: &TransportOperator,
) -> Result<PushedData> {
    mu.domain().require(p, "pushforward")?;
    let point_push = mu.forward(p)?;
    mu.codomain().require(&point_push, "pushforward")?;
    Ok(PushedData {
        omega_push: pushforward_density(mu, omega)?,
        point_push,
        transport_push: pushforward_transport(mu, a),
    })
}

/// `(μ̂t)(ω, p, A) = Dμ(p)^*·t(μ_*ω, μ(p), μ_*A)` for `t` on the codomain of `μ`.
pub fn mu_hat(mu: &Diffeo, t: &BasicSpaceElement) -> BasicSpaceElement {
    let (m, t) = (mu.clone(), t.clone());
    BasicSpaceElement::new(t.ttype(), t.dim(), Provenance::Diffeo, move |omega, p, a| {
        let pd = pushforward_data(&m, omega, p, a)?;
        let v = t.eval(&pd.omega_push, &pd.point_push, &pd.transport_push)?;
        let j = m.jacobian_at(p)?;
        let jinv = invert(&j, p)?;
        Ok(v.transform_slots(&jinv, &j, *p))
    })
}

/// `L̂_X t = [μ̂_τ t − μ̂_{−τ} t] / 2τ` with the flow `μ_τ` of `X`.
pub fn lie_hat(x: &VectorFieldFlow, t: &BasicSpaceElement, tau: f64) -> Result<BasicSpaceElement> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau_lie must be positive, got {tau}")));
    }
    let fwd = mu_hat(&x.as_diffeo(tau), t);
    let bwd = mu_hat(&x.as_diffeo(-tau), t);
    let d = fwd.lin_comb(0.5 / tau, &bwd, -0.5 / tau)?;
    let inner = d.clone();
    Ok(BasicSpaceElement::new(t.ttype(), t.dim(), Provenance::Lie, move |w, p, a| {
        inner.eval(w, p, a)
    }))
}
