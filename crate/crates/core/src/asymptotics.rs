//! ε-scaling estimates, association tests, the commutator `ι(f)ι(u) − ι(fu)`
//! and the basis dependence of coordinate-wise embeddings.
//!
//! Verdicts are heuristic estimates of asymptotic order from a log-log fit.
//! The transport operator is held fixed while ε varies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{apply_scalar, NFormDensity, ScalarDistribution, TensorDistribution};
use crate::embedding::{embed_iota_continuous_with, embed_iota_distribution_with, pointwise_product, BasicSpaceElement};
use crate::error::{Error, Result};
use crate::geometry::{Chart, Point, SmoothMap};
use crate::mollifier::{make_mollifier, BumpProfile};
use crate::quadrature::Quadrature;
use crate::tensor::{change_basis_representation, BasisChange, SmoothTensorField, TensorAtPoint};
use crate::transport::TransportOperator;

/// Gauss nodes per panel of the outer `p`-integral in weak gaps.
pub const WEAK_NODES_PER_PANEL: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictThresholds {
    /// Slopes in `(−band, band)` count as bounded.
    pub bounded_band: f64,
    /// Slopes `≤ −growth` count as power growth.
    pub growth: f64,
    /// Slopes `≥ q_max` decay faster than every tested order.
    pub q_max: f64,
    /// Fits below this `r²` are inconclusive.
    pub min_r_squared: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            bounded_band: 0.25,
            growth: 0.75,
            q_max: 4.0,
            min_r_squared: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    PowerGrowth { order: u32 },
    Decaying { order: u32 },
    DecaysAllTestedOrders { q_max: f64 },
    IdenticallyZero,
    Inconclusive { reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log norm = slope·log ε + intercept`.
pub fn fit_log_log(eps: &[f64], norms: &[f64]) -> Result<LogLogFit> {
    if eps.len() != norms.len() || eps.len() < 2 {
        return Err(Error::InvalidInput("fit needs matching grids with at least two points".into()));
    }
    if norms.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("log-log fit needs positive finite norms, got {norms:?}")));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // constant data is fitted exactly by a flat line
    let r_squared = if syy <= 1e-28 * (1.0 + my * my) { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

pub fn classify(fit: &LogLogFit, th: &VerdictThresholds) -> Verdict {
    if fit.r_squared < th.min_r_squared {
        return Verdict::Inconclusive {
            reason: format!("r² = {:.4} below {}", fit.r_squared, th.min_r_squared),
        };
    }
    let s = fit.slope;
    if s.abs() < th.bounded_band {
        Verdict::Bounded
    } else if s <= -th.growth {
        Verdict::PowerGrowth {
            order: (-s).round() as u32,
        }
    } else if s >= th.q_max {
        Verdict::DecaysAllTestedOrders { q_max: th.q_max }
    } else if s >= th.bounded_band {
        Verdict::Decaying {
            order: s.round().max(1.0) as u32,
        }
    } else {
        Verdict::Inconclusive {
            reason: format!("slope {s:.3} between the bounded band and the growth threshold"),
        }
    }
}

/// Fit and verdict for a norm sequence; all-zero sequences get their own verdict.
pub fn assess(eps: &[f64], norms: &[f64], th: &VerdictThresholds) -> Result<(Option<LogLogFit>, Verdict)> {
    if norms.iter().all(|v| *v == 0.0) {
        return Ok((None, Verdict::IdenticallyZero));
    }
    if norms.contains(&0.0) {
        return Ok((
            None,
            Verdict::Inconclusive {
                reason: "some but not all norms vanish".into(),
            },
        ));
    }
    let fit = fit_log_log(eps, norms)?;
    Ok((Some(fit), classify(&fit, th)))
}

/// Requires at least four strictly decreasing positive values.
pub fn validate_eps_grid(eps: &[f64]) -> Result<()> {
    if eps.len() < 4 {
        return Err(Error::InvalidInput(format!("eps grid needs at least 4 points, got {}", eps.len())));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput(format!("eps grid must be strictly decreasing and positive: {eps:?}")));
    }
    Ok(())
}

/// Chart, profile and transport shared by the ε-scaling experiments.
#[derive(Clone, Debug)]
pub struct Probe {
    pub chart: Chart,
    pub profile: BumpProfile,
    pub transport: TransportOperator,
}

impl Probe {
    pub fn new(chart: Chart, profile: BumpProfile, transport: TransportOperator) -> Self {
        Self {
            chart,
            profile,
            transport,
        }
    }

    pub fn omega(&self, p: &Point, eps: f64) -> Result<NFormDensity> {
        make_mollifier(&self.profile, p, eps, &self.chart)
    }

    /// `t(ω_{ε,p}, p, A)`.
    pub fn eval(&self, t: &BasicSpaceElement, p: &Point, eps: f64) -> Result<TensorAtPoint> {
        t.eval(&self.omega(p, eps)?, p, &self.transport)
    }

    /// `∫ t(ω_{ε,p}, p, A) ψ(p) dp` per component, on panels of width about a
    /// quarter of the scaled profile width.
    pub fn weak_integral(&self, t: &BasicSpaceElement, eps: f64, psi: &NFormDensity) -> Result<Vec<f64>> {
        let support = psi.support();
        let panel = 0.25 * eps * self.profile.support().min_width();
        let widest = (0..support.dim()).map(|a| support.width(a)).fold(0.0, f64::max);
        let panels = (widest / panel).ceil().max(1.0) as usize;
        let quad = Quadrature::new(support.dim(), WEAK_NODES_PER_PANEL, panels)?;
        let m = t.ttype().component_count(t.dim());
        let values: Vec<Option<Vec<f64>>> = quad
            .nodes(support)
            .par_iter()
            .map(|(p, w)| {
                let psi_p = psi.eval(p);
                if psi_p == 0.0 {
                    return Ok(None);
                }
                let v = self.eval(t, p, eps)?;
                Ok(Some(v.components().iter().map(|c| c * psi_p * w).collect()))
            })
            .collect::<Result<_>>()?;
        let mut acc = vec![0.0; m];
        for v in values.into_iter().flatten() {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
        }
        Ok(acc)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub eps_grid: Vec<f64>,
    /// Sup-norm over components at the query point.
    pub norms: Vec<f64>,
    /// Sup-norm over components and an optional grid of points.
    pub grid_norms: Option<Vec<f64>>,
    pub fit: Option<LogLogFit>,
    pub verdict: Verdict,
    pub grid_fit: Option<LogLogFit>,
    pub grid_verdict: Option<Verdict>,
}

impl ScalingReport {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn r_squared(&self) -> Option<f64> {
        self.fit.map(|f| f.r_squared)
    }
}

/// `‖t(ω_{ε,p}, p, A)‖_∞` over the ε grid, with a log-log fit.
pub fn scaling_estimate(
    t: &BasicSpaceElement,
    p: &Point,
    probe: &Probe,
    eps_grid: &[f64],
    th: &VerdictThresholds,
) -> Result<ScalingReport> {
    scaling_estimate_on_grid(t, p, &[], probe, eps_grid, th)
}

/// As [`scaling_estimate`], also reporting the sup over `p_grid`.
pub fn scaling_estimate_on_grid(
    t: &BasicSpaceElement,
    p: &Point,
    p_grid: &[Point],
    probe: &Probe,
    eps_grid: &[f64],
    th: &VerdictThresholds,
) -> Result<ScalingReport> {
    validate_eps_grid(eps_grid)?;
    let norms = eps_grid
        .par_iter()
        .map(|&eps| Ok(probe.eval(t, p, eps)?.sup_norm()))
        .collect::<Result<Vec<f64>>>()?;
    let (fit, verdict) = assess(eps_grid, &norms, th)?;
    let (grid_norms, grid_fit, grid_verdict) = if p_grid.is_empty() {
        (None, None, None)
    } else {
        let gn = eps_grid
            .par_iter()
            .map(|&eps| {
                p_grid
                    .iter()
                    .map(|q| Ok(probe.eval(t, q, eps)?.sup_norm()))
                    .try_fold(0.0f64, |m, v: Result<f64>| Ok::<f64, Error>(m.max(v?)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (gf, gv) = assess(eps_grid, &gn, th)?;
        (Some(gn), gf, Some(gv))
    };
    Ok(ScalingReport {
        eps_grid: eps_grid.to_vec(),
        norms,
        grid_norms,
        fit,
        verdict,
        grid_fit,
        grid_verdict,
    })
}

/// Decay of the weak difference `∫ (t1 − t2)(ω_{ε,p}, p, A) ψ(p) dp`.
pub fn association_test(
    t1: &BasicSpaceElement,
    t2: &BasicSpaceElement,
    probe: &Probe,
    psi: &NFormDensity,
    eps_grid: &[f64],
    th: &VerdictThresholds,
) -> Result<ScalingReport> {
    validate_eps_grid(eps_grid)?;
    let diff = t1.sub(t2)?;
    let norms = eps_grid
        .iter()
        .map(|&eps| Ok(sup(&probe.weak_integral(&diff, eps, psi)?)))
        .collect::<Result<Vec<f64>>>()?;
    let (fit, verdict) = assess(eps_grid, &norms, th)?;
    Ok(ScalingReport {
        eps_grid: eps_grid.to_vec(),
        norms,
        grid_norms: None,
        fit,
        verdict,
        grid_fit: None,
        grid_verdict: None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutatorResult {
    pub eps_grid: Vec<f64>,
    /// `|ι(f)ι(u) − ι(fu)|` at the query point, per ε.
    pub pointwise_gaps: Vec<f64>,
    /// The pointwise gap at the largest ε.
    pub pointwise_gap: f64,
    pub weak_gaps: Vec<f64>,
    pub weak_fit: Option<LogLogFit>,
    pub weak_verdict: Verdict,
}

impl CommutatorResult {
    pub fn weak_slope(&self) -> Option<f64> {
        self.weak_fit.map(|f| f.slope)
    }
}

/// `ι(f)·ι(u) − ι(f·u)` as a generalized scalar.
pub fn commutator_element(f: &SmoothMap, u: &ScalarDistribution, dim: usize, quad: &Quadrature) -> Result<BasicSpaceElement> {
    let iota_f = embed_iota_continuous_with(&SmoothTensorField::scalar(dim, f.clone()), quad.clone());
    let iota_u = embed_iota_distribution_with(&TensorDistribution::scalar(u.clone(), dim), quad.clone());
    let iota_fu = embed_iota_distribution_with(&TensorDistribution::scalar(u.premultiplied(f), dim), quad.clone());
    pointwise_product(&iota_f, &iota_u)?.sub(&iota_fu)
}

pub fn schwartz_commutator(
    f: &SmoothMap,
    u: &ScalarDistribution,
    p: &Point,
    probe: &Probe,
    eps_grid: &[f64],
    psi: &NFormDensity,
    th: &VerdictThresholds,
) -> Result<CommutatorResult> {
    let quad = Quadrature::default_for_dim(probe.chart.dim());
    schwartz_commutator_with(f, u, p, probe, eps_grid, psi, th, &quad)
}

#[allow(clippy::too_many_arguments)]
pub fn schwartz_commutator_with(
    f: &SmoothMap,
    u: &ScalarDistribution,
    p: &Point,
    probe: &Probe,
    eps_grid: &[f64],
    psi: &NFormDensity,
    th: &VerdictThresholds,
    quad: &Quadrature,
) -> Result<CommutatorResult> {
    validate_eps_grid(eps_grid)?;
    let gap = commutator_element(f, u, probe.chart.dim(), quad)?;
    let pointwise_gaps = eps_grid
        .iter()
        .map(|&eps| Ok(probe.eval(&gap, p, eps)?.sup_norm()))
        .collect::<Result<Vec<f64>>>()?;
    let weak_gaps = eps_grid
        .iter()
        .map(|&eps| Ok(probe.weak_integral(&gap, eps, psi)?[0]))
        .collect::<Result<Vec<f64>>>()?;
    let abs: Vec<f64> = weak_gaps.iter().map(|v| v.abs()).collect();
    let (weak_fit, weak_verdict) = assess(eps_grid, &abs, th)?;
    Ok(CommutatorResult {
        eps_grid: eps_grid.to_vec(),
        pointwise_gap: pointwise_gaps[0],
        pointwise_gaps,
        weak_gaps,
        weak_fit,
        weak_verdict,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisDependence {
    /// `Σ ι(uⁱ)(ω,p) e_i(p) − Σ ι(ûʲ)(ω,p) ê_j(p)`.
    pub coordinatewise: TensorAtPoint,
    /// `ι(u)(ω,p,A) − ι(û)(ω,p,A)` with the transport-based embedding.
    pub slot3: TensorAtPoint,
}

fn coordinatewise(u: &TensorDistribution, omega: &NFormDensity, p: &Point) -> Result<TensorAtPoint> {
    let mut acc = TensorAtPoint::zeros(u.ttype(), *p);
    for (ui, ei) in u.terms() {
        let c = apply_scalar(ui, omega)?;
        acc = acc.add(&ei.eval(p).scale(c))?;
    }
    Ok(acc)
}

/// Both embeddings of `u` in the original and the hatted basis, differenced.
pub fn basis_dependence(
    u: &TensorDistribution,
    bc: &BasisChange,
    omega: &NFormDensity,
    p: &Point,
    a: &TransportOperator,
) -> Result<BasisDependence> {
    basis_dependence_with(u, bc, omega, p, a, &Quadrature::default_for_dim(u.dim()))
}

pub fn basis_dependence_with(
    u: &TensorDistribution,
    bc: &BasisChange,
    omega: &NFormDensity,
    p: &Point,
    a: &TransportOperator,
    quad: &Quadrature,
) -> Result<BasisDependence> {
    let hat = change_basis_representation(u, bc)?;
    let cw = coordinatewise(u, omega, p)?.sub(&coordinatewise(&hat, omega, p)?)?;
    let s3 = embed_iota_distribution_with(u, quad.clone())
        .eval(omega, p, a)?
        .sub(&embed_iota_distribution_with(&hat, quad.clone()).eval(omega, p, a)?)?;
    Ok(BasisDependence {
        coordinatewise: cw,
        slot3: s3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_iota_continuous, embed_iota_scalar, embed_sigma};
    use crate::geometry::BoxDomain;
    use crate::tensor::TensorType;
    use approx::assert_relative_eq;

    const GRID: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

    fn probe(dim: usize, profile: BumpProfile) -> Probe {
        let chart = Chart::cube(dim, 1.0).unwrap();
        Probe::new(chart, profile, TransportOperator::identity_cut(&chart))
    }

    #[test]
    fn exact_power_law_fit() {
        let norms: Vec<f64> = GRID.iter().map(|e| 3.0 * e.powi(2)).collect();
        let fit = fit_log_log(&GRID, &norms).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn verdict_thresholds() {
        let th = VerdictThresholds::default();
        let v = |slope: f64| classify(&LogLogFit { slope, intercept: 0.0, r_squared: 1.0 }, &th);
        assert_eq!(v(0.1), Verdict::Bounded);
        assert_eq!(v(-1.02), Verdict::PowerGrowth { order: 1 });
        assert_eq!(v(2.1), Verdict::Decaying { order: 2 });
        assert_eq!(v(4.5), Verdict::DecaysAllTestedOrders { q_max: 4.0 });
        assert!(matches!(v(-0.5), Verdict::Inconclusive { .. }));
        let poor = LogLogFit { slope: 1.0, intercept: 0.0, r_squared: 0.5 };
        assert!(matches!(classify(&poor, &th), Verdict::Inconclusive { .. }));
    }

    #[test]
    fn eps_grid_validation() {
        assert!(validate_eps_grid(&GRID).is_ok());
        assert!(validate_eps_grid(&[0.1, 0.05, 0.025]).is_err());
        assert!(validate_eps_grid(&[0.1, 0.05, 0.05, 0.01]).is_err());
    }

    #[test]
    fn delta_grows_like_inverse_eps() {
        let pr = probe(1, BumpProfile::bump_sym(1).unwrap());
        let t = embed_iota_scalar(&ScalarDistribution::dirac(Point::origin(1)), 1);
        let rep = scaling_estimate(&t, &Point::origin(1), &pr, &GRID, &VerdictThresholds::default()).unwrap();
        let chi0 = pr.profile.shape(&[0.0]);
        for (e, v) in GRID.iter().zip(&rep.norms) {
            assert_relative_eq!(*v, chi0 / e, max_relative = 1e-14);
        }
        assert_relative_eq!(rep.fitted_slope().unwrap(), -1.0, epsilon = 1e-10);
        assert_eq!(rep.verdict, Verdict::PowerGrowth { order: 1 });
    }

    #[test]
    fn sigma_is_eps_independent() {
        let pr = probe(1, BumpProfile::bump_sym(1).unwrap());
        let g = SmoothTensorField::scalar(1, SmoothMap::new(|p| p.coords()[0].exp()));
        let p = Point::new(&[0.2]);
        let grid = [Point::new(&[0.0]), Point::new(&[0.4])];
        let rep = scaling_estimate_on_grid(&embed_sigma(&g), &p, &grid, &pr, &GRID, &VerdictThresholds::default()).unwrap();
        assert!(rep.norms.iter().all(|v| *v == rep.norms[0]));
        assert_eq!(rep.verdict, Verdict::Bounded);
        assert_eq!(rep.grid_verdict, Some(Verdict::Bounded));
    }

    #[test]
    fn iota_minus_sigma_second_order() {
        let pr = probe(1, BumpProfile::bump_sym(1).unwrap());
        let g = SmoothTensorField::scalar(1, SmoothMap::new(|p| (2.0 * p.coords()[0]).sin() + 1.0));
        let d = embed_iota_continuous(&g).sub(&embed_sigma(&g)).unwrap();
        let rep = scaling_estimate(&d, &Point::new(&[0.3]), &pr, &GRID, &VerdictThresholds::default()).unwrap();
        assert!((rep.fitted_slope().unwrap() - 2.0).abs() < 0.05, "{rep:?}");
    }

    #[test]
    fn identical_elements_are_exactly_associated() {
        let pr = probe(1, BumpProfile::bump_sym(1).unwrap());
        let g = SmoothTensorField::scalar(1, SmoothMap::new(|p| p.coords()[0].cos()));
        let t = embed_iota_continuous(&g);
        let psi = BumpProfile::bump_sym(1).unwrap().as_density();
        let psi = NFormDensity::new_unchecked(psi.density().clone(), BoxDomain::centered(&Point::origin(1), 0.5).unwrap());
        let rep = association_test(&t, &t, &pr, &psi, &GRID, &VerdictThresholds::default()).unwrap();
        assert!(rep.norms.iter().all(|v| *v == 0.0));
        assert_eq!(rep.verdict, Verdict::IdenticallyZero);
    }

    #[test]
    fn commutator_vanishes_for_constants() {
        let pr = probe(1, BumpProfile::bump_shift(1, 0.3).unwrap());
        let gap = commutator_element(
            &SmoothMap::constant(2.5),
            &ScalarDistribution::dirac(Point::origin(1)),
            1,
            &Quadrature::default_for_dim(1),
        )
        .unwrap();
        for eps in GRID {
            let v = pr.eval(&gap, &Point::new(&[0.01]), eps).unwrap().components()[0];
            let scale = pr.profile.shape(&[-0.1]) / eps;
            assert!(v.abs() <= 1e-10 * scale, "{v}");
        }
    }

    #[test]
    fn identity_basis_change_has_no_effect() {
        let chart = Chart::cube(1, 1.0).unwrap();
        let u = TensorDistribution::in_coordinate_basis(
            TensorType::VECTOR,
            1,
            vec![ScalarDistribution::dirac(Point::origin(1))],
        )
        .unwrap();
        let p = Point::new(&[0.05]);
        let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &p, 0.1, &chart).unwrap();
        let bd = basis_dependence(
            &u,
            &BasisChange::identity(TensorType::VECTOR, &chart).unwrap(),
            &w,
            &p,
            &TransportOperator::identity_cut(&chart),
        )
        .unwrap();
        assert_eq!(bd.coordinatewise.sup_norm(), 0.0);
        assert_eq!(bd.slot3.sup_norm(), 0.0);
    }
}
