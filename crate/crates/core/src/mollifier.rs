//! Unit-integral bump profiles and their ε-scaled, point-centred families.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::distribution::NFormDensity;
use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Chart, Point, SmoothMap};
use crate::quadrature::GaussLegendre;

type ShapeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Surface measure of the unit sphere `S^{n-1}`.
fn sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn poly4(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 - r2).powi(4)
    } else {
        0.0
    }
}

/// `|S^{n-1}| ∫₀¹ f(r²) r^{n-1+k} dr` on 16 panels of 64 nodes.
fn radial_moment(f: fn(f64) -> f64, dim: usize, k: i32) -> f64 {
    let gl = GaussLegendre::new(64);
    let panels = 16;
    let mut acc = 0.0;
    for i in 0..panels {
        let a = i as f64 / panels as f64;
        let b = (i + 1) as f64 / panels as f64;
        acc += gl.integrate_1d(a, b, |r| f(r * r) * r.powi(dim as i32 - 1 + k));
    }
    sphere_measure(dim) * acc
}

/// A normalized shape with support in a box of unit coordinates, plus cached moment data.
#[derive(Clone)]
pub struct BumpProfile {
    name: String,
    dim: usize,
    shape: ShapeFn,
    support: BoxDomain,
    symmetric: bool,
    regularity: Option<usize>,
    first_moments: Vec<f64>,
    second_moments: Vec<f64>,
}

impl fmt::Debug for BumpProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BumpProfile")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("symmetric", &self.symmetric)
            .field("first_moments", &self.first_moments)
            .finish()
    }
}

impl BumpProfile {
    fn radial(name: &str, dim: usize, f: fn(f64) -> f64, regularity: Option<usize>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("profile dimension {dim} not in 1..=3")));
        }
        let norm = 1.0 / radial_moment(f, dim, 0);
        let second = norm * radial_moment(f, dim, 2) / dim as f64;
        let mut second_moments = vec![0.0; dim * dim];
        for a in 0..dim {
            second_moments[a * dim + a] = second;
        }
        Ok(Self {
            name: name.to_string(),
            dim,
            shape: Arc::new(move |x: &[f64]| norm * f(x.iter().map(|v| v * v).sum())),
            support: BoxDomain::centered(&Point::origin(dim), 1.0)?,
            symmetric: true,
            regularity,
            first_moments: vec![0.0; dim],
            second_moments,
        })
    }

    /// `exp(−1/(1−|x|²))`, normalized.
    pub fn bump_sym(dim: usize) -> Result<Self> {
        Self::radial("bump_sym", dim, bump, None)
    }

    /// `(1−|x|²)⁴`, normalized; only `C³` across the unit sphere.
    pub fn poly4(dim: usize) -> Result<Self> {
        Self::radial("poly4", dim, poly4, Some(3))
    }

    /// The symmetric bump shrunk by `λ = 1 − |m|` and moved to `c = m·e₀`,
    /// so the first moment along axis 0 is exactly `m`.
    pub fn bump_shift(dim: usize, m: f64) -> Result<Self> {
        if !(m.abs() < 1.0) {
            return Err(Error::CatalogParams {
                name: format!("bump_shift:{m}"),
                reason: "shift must satisfy |m| < 1".into(),
            });
        }
        let base = Self::bump_sym(dim)?;
        let lambda = 1.0 - m.abs();
        let jac = lambda.powi(dim as i32);
        let inner = base.shape.clone();
        let shape: ShapeFn = Arc::new(move |x: &[f64]| {
            let mut y = [0.0; 3];
            for (a, v) in x.iter().enumerate() {
                y[a] = v / lambda;
            }
            y[0] -= m / lambda;
            inner(&y[..x.len()]) / jac
        });
        let center = Point::origin(dim).with_coord(0, m);
        let mut first_moments = vec![0.0; dim];
        first_moments[0] = m;
        let mut second_moments: Vec<f64> = base.second_moments.iter().map(|v| v * lambda * lambda).collect();
        second_moments[0] += m * m;
        Ok(Self {
            name: format!("bump_shift:{m}"),
            dim,
            shape,
            support: BoxDomain::centered(&center, lambda)?,
            symmetric: m == 0.0,
            regularity: None,
            first_moments,
            second_moments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalized shape value at unit coordinates `x`.
    pub fn shape(&self, x: &[f64]) -> f64 {
        (self.shape)(x)
    }

    pub fn support(&self) -> &BoxDomain {
        &self.support
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Highest `k` with the shape in `C^k`; `None` means smooth.
    pub fn regularity(&self) -> Option<usize> {
        self.regularity
    }

    pub fn first_moments(&self) -> &[f64] {
        &self.first_moments
    }

    /// Row-major `∫ x_a x_b χ(x) dx`.
    pub fn second_moments(&self) -> &[f64] {
        &self.second_moments
    }

    /// The profile as an n-form density at `ε = 1`, centred at the origin.
    pub fn as_density(&self) -> NFormDensity {
        let shape = self.shape.clone();
        NFormDensity::new_unchecked(SmoothMap::new(move |q| shape(q.coords())), self.support)
    }
}

/// `ω_{ε,p}` with density `ε^{−n} χ((q − p)/ε)`.
#[derive(Clone, Debug)]
pub struct ScaledMollifier {
    pub profile: BumpProfile,
    pub center: Point,
    pub eps: f64,
}

impl ScaledMollifier {
    pub fn new(profile: BumpProfile, center: Point, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        if center.dim() != profile.dim() {
            return Err(Error::DimensionMismatch {
                expected: profile.dim(),
                found: center.dim(),
            });
        }
        Ok(Self { profile, center, eps })
    }

    pub fn support(&self) -> BoxDomain {
        self.profile.support.affine_image(&self.center, self.eps)
    }

    pub fn density_at(&self, q: &Point) -> f64 {
        let n = self.profile.dim;
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(n) {
            *xa = (q.coords()[a] - self.center.coords()[a]) / self.eps;
        }
        self.profile.shape(&x[..n]) / self.eps.powi(n as i32)
    }

    pub fn to_density(&self) -> NFormDensity {
        let me = self.clone();
        let support = self.support();
        NFormDensity::new_unchecked(
            SmoothMap::new(move |q| if support.contains(q) { me.density_at(q) } else { 0.0 }),
            support,
        )
    }
}

/// The ε-scaled mollifier centred at `p`; fails if its support leaves the chart.
pub fn make_mollifier(profile: &BumpProfile, p: &Point, eps: f64, chart: &Chart) -> Result<NFormDensity> {
    let m = ScaledMollifier::new(profile.clone(), *p, eps)?;
    chart.require_box(&m.support())?;
    Ok(m.to_density())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Quadrature;
    use approx::assert_relative_eq;

    fn fine(dim: usize) -> Quadrature {
        match dim {
            1 => Quadrature::new(1, 64, 4).unwrap(),
            2 => Quadrature::new(2, 64, 4).unwrap(),
            _ => Quadrature::new(3, 24, 4).unwrap(),
        }
    }

    #[test]
    fn catalog_profiles_have_unit_integral() {
        for dim in [1, 2] {
            for p in [
                BumpProfile::bump_sym(dim).unwrap(),
                BumpProfile::poly4(dim).unwrap(),
                BumpProfile::bump_shift(dim, 0.3).unwrap(),
            ] {
                let i = p.as_density().integral(&fine(dim));
                assert!((i - 1.0).abs() <= 1e-10, "{} dim {dim}: {i}", p.name());
            }
        }
    }

    #[test]
    fn three_dimensional_normalization() {
        // Cartesian rule converges slowly in 3D; 1e-6 is what 96³ nodes give.
        let i = BumpProfile::bump_sym(3).unwrap().as_density().integral(&fine(3));
        assert!((i - 1.0).abs() < 1e-6, "{i}");
    }

    #[test]
    fn moments_match_cartesian_quadrature() {
        for dim in [1, 2] {
            for p in [BumpProfile::bump_sym(dim).unwrap(), BumpProfile::bump_shift(dim, 0.3).unwrap()] {
                let q = fine(dim);
                let d = p.as_density();
                let origin = Point::origin(dim);
                let m1 = d.first_moments(&origin, &q);
                for a in 0..dim {
                    assert!((m1[a] - p.first_moments()[a]).abs() < 1e-10, "{} {m1:?}", p.name());
                }
                let m2 = q.integrate(d.support(), |x| x.coords()[0].powi(2) * d.eval(x));
                assert_relative_eq!(m2, p.second_moments()[0], max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn shifted_profile_moment_and_flags() {
        let p = BumpProfile::bump_shift(1, 0.3).unwrap();
        assert!(!p.is_symmetric());
        assert!((p.first_moments()[0] - 0.3).abs() < 1e-8);
        assert!(BumpProfile::bump_sym(1).unwrap().is_symmetric());
        assert_eq!(BumpProfile::poly4(2).unwrap().regularity(), Some(3));
        assert_eq!(BumpProfile::bump_sym(2).unwrap().regularity(), None);
        assert!(BumpProfile::bump_shift(1, 1.0).is_err());
    }

    #[test]
    fn scaled_family_properties() {
        let chart = Chart::cube(1, 1.0).unwrap();
        let q = Quadrature::default_for_dim(1);
        let sym = BumpProfile::bump_sym(1).unwrap();
        let shift = BumpProfile::bump_shift(1, 0.3).unwrap();
        let p = Point::new(&[0.2]);
        for eps in [0.1, 0.05, 0.025] {
            let w = make_mollifier(&sym, &p, eps, &chart).unwrap();
            assert_relative_eq!(w.integral(&q), 1.0, epsilon = 1e-10);
            assert!(w.first_moments(&p, &q)[0].abs() < 1e-12);
            assert_eq!(w.eval(&p), sym.shape(&[0.0]) / eps);

            let w = make_mollifier(&shift, &p, eps, &chart).unwrap();
            assert_relative_eq!(w.integral(&q), 1.0, epsilon = 1e-10);
            assert_relative_eq!(w.first_moments(&p, &q)[0], 0.3 * eps, max_relative = 1e-9);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let chart = Chart::cube(1, 1.0).unwrap();
        let sym = BumpProfile::bump_sym(1).unwrap();
        let err = make_mollifier(&sym, &Point::new(&[0.95]), 0.1, &chart);
        assert!(matches!(err, Err(Error::SupportOverflow { .. })));
    }

    #[test]
    fn scaling_identity_at_center_two_dim() {
        let chart = Chart::cube(2, 1.0).unwrap();
        let sym = BumpProfile::bump_sym(2).unwrap();
        let p = Point::new(&[0.1, -0.2]);
        let w = make_mollifier(&sym, &p, 0.05, &chart).unwrap();
        assert_eq!(w.eval(&p), sym.shape(&[0.0, 0.0]) / 0.05f64.powi(2));
    }
}
