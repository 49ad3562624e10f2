//! Named, parameterized constructors for scalars, distributions, transports,
//! profiles, diffeomorphisms and vector fields.
//!
//! Names have the form `key`, `key:params` or `key@params`. New entries are
//! added with [`Section::register`].

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::distribution::ScalarDistribution;
use crate::error::{Error, Result};
use crate::geometry::{Chart, Diffeo, Point, SmoothMap, VectorFieldFlow};
use crate::mollifier::BumpProfile;
use crate::transport::TransportOperator;

pub type ScalarBuilder = Arc<dyn Fn(&str, usize) -> Result<SmoothMap> + Send + Sync>;
pub type DistributionBuilder = Arc<dyn Fn(&str, usize, &Catalog) -> Result<ScalarDistribution> + Send + Sync>;
pub type TransportBuilder = Arc<dyn Fn(&str, &Chart) -> Result<TransportOperator> + Send + Sync>;
pub type ProfileBuilder = Arc<dyn Fn(&str, usize) -> Result<BumpProfile> + Send + Sync>;
pub type DiffeoBuilder = Arc<dyn Fn(&str, &Chart) -> Result<Diffeo> + Send + Sync>;
pub type VectorFieldBuilder = Arc<dyn Fn(&str, &Chart, f64) -> Result<VectorFieldFlow> + Send + Sync>;

#[derive(Clone)]
pub struct Entry<B> {
    pub key: String,
    pub syntax: String,
    pub description: String,
    builder: B,
}

/// One kind of catalog entry.
#[derive(Clone)]
pub struct Section<B> {
    kind: &'static str,
    entries: Vec<Entry<B>>,
}

impl<B: Clone> Section<B> {
    fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn entries(&self) -> &[Entry<B>] {
        &self.entries
    }

    /// Adds an entry, replacing any previous one with the same key.
    pub fn register(&mut self, key: &str, syntax: &str, description: &str, builder: B) {
        self.entries.retain(|e| e.key != key);
        self.entries.push(Entry {
            key: key.to_string(),
            syntax: syntax.to_string(),
            description: description.to_string(),
            builder,
        });
    }

    fn resolve<'a>(&self, name: &'a str) -> Result<(B, &'a str)> {
        let (key, params) = split_name(name);
        self.entries
            .iter()
            .find(|e| e.key == key)
            .map(|e| (e.builder.clone(), params))
            .ok_or_else(|| Error::UnknownCatalogName {
                kind: self.kind,
                name: name.to_string(),
            })
    }
}

fn split_name(name: &str) -> (&str, &str) {
    let name = name.trim();
    match name.find([':', '@']) {
        Some(i) => (&name[..i], &name[i + 1..]),
        None => (name, ""),
    }
}

fn bad(name: &str, reason: impl Into<String>) -> Error {
    Error::CatalogParams {
        name: name.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(name: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| bad(name, format!("`{s}` is not a number")))
}

fn parse_point(name: &str, s: &str, dim: usize) -> Result<Point> {
    let coords = s.split(',').map(|c| parse_f64(name, c)).collect::<Result<Vec<_>>>()?;
    if coords.len() != dim {
        return Err(bad(name, format!("expected {dim} coordinates, got {}", coords.len())));
    }
    Ok(Point::new(&coords))
}

fn no_params(name: &str, params: &str) -> Result<()> {
    if params.is_empty() {
        Ok(())
    } else {
        Err(bad(name, "takes no parameters"))
    }
}

/// Polynomials in `x, y, z` with exact partial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(f64, [i32; 3])>,
}

impl Polynomial {
    /// Parses sums of monomials such as `1 + x^2`, `2*x*y - 0.5y^3`, `-z`.
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let name = format!("poly:{src}");
        let chars: Vec<char> = src.chars().filter(|c| !c.is_whitespace()).collect();
        if chars.is_empty() {
            return Err(bad(&name, "empty polynomial"));
        }
        let mut terms = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let mut coeff = 1.0;
            match chars[i] {
                '+' => i += 1,
                '-' => {
                    coeff = -1.0;
                    i += 1;
                }
                _ if i > 0 => return Err(bad(&name, format!("expected + or - at position {i}"))),
                _ => {}
            }
            let mut powers = [0i32; 3];
            let mut factors = 0;
            loop {
                if i < chars.len() && chars[i] == '*' && factors > 0 {
                    i += 1;
                }
                let Some(&c) = chars.get(i) else { break };
                if c.is_ascii_digit() || c == '.' {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                        i += 1;
                    }
                    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                        let mut j = i + 1;
                        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                            j += 1;
                        }
                        if j < chars.len() && chars[j].is_ascii_digit() {
                            i = j;
                            while i < chars.len() && chars[i].is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let lit: String = chars[start..i].iter().collect();
                    coeff *= parse_f64(&name, &lit)?;
                } else if let Some(axis) = "xyz".find(c) {
                    if axis >= dim {
                        return Err(bad(&name, format!("variable `{c}` needs dimension > {axis}")));
                    }
                    i += 1;
                    let mut power = 1;
                    if i < chars.len() && chars[i] == '^' {
                        i += 1;
                        let start = i;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                        let lit: String = chars[start..i].iter().collect();
                        power = lit.parse::<i32>().map_err(|_| bad(&name, "exponent must be a non-negative integer"))?;
                    }
                    powers[axis] += power;
                } else {
                    break;
                }
                factors += 1;
            }
            if factors == 0 {
                return Err(bad(&name, format!("expected a number or variable at position {i}")));
            }
            terms.push((coeff, powers));
        }
        Ok(Self { dim, terms })
    }

    pub fn eval(&self, p: &Point) -> f64 {
        let c = p.coords();
        self.terms
            .iter()
            .map(|(a, pw)| a * (0..self.dim).map(|k| c[k].powi(pw[k])).product::<f64>())
            .sum()
    }

    pub fn partial(&self, p: &Point, axis: usize) -> f64 {
        let c = p.coords();
        self.terms
            .iter()
            .filter(|(_, pw)| pw[axis] > 0)
            .map(|(a, pw)| {
                let mut v = a * pw[axis] as f64;
                for k in 0..self.dim {
                    let e = if k == axis { pw[k] - 1 } else { pw[k] };
                    v *= c[k].powi(e);
                }
                v
            })
            .sum()
    }

    pub fn into_smooth_map(self) -> SmoothMap {
        if self.terms.iter().all(|(_, pw)| pw.iter().all(|e| *e == 0)) {
            return SmoothMap::constant(self.terms.iter().map(|(a, _)| a).sum());
        }
        let (a, b) = (self.clone(), self);
        SmoothMap::with_partials(move |p| a.eval(p), move |p, k| b.partial(p, k))
    }
}

/// Registry of named constructors.
#[derive(Clone)]
pub struct Catalog {
    pub scalars: Section<ScalarBuilder>,
    pub distributions: Section<DistributionBuilder>,
    pub transports: Section<TransportBuilder>,
    pub profiles: Section<ProfileBuilder>,
    pub diffeos: Section<DiffeoBuilder>,
    pub vector_fields: Section<VectorFieldBuilder>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::builtin()
    }
}

fn axis_param(name: &str, s: &str, dim: usize) -> Result<usize> {
    let axis = s.trim().parse::<usize>().map_err(|_| bad(name, format!("`{s}` is not an axis index")))?;
    if axis >= dim {
        return Err(bad(name, format!("axis {axis} out of range for dimension {dim}")));
    }
    Ok(axis)
}

fn newton_inverse(y: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    let mut x = y;
    for _ in 0..60 {
        let step = (f(x) - y) / df(x);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

impl Catalog {
    pub fn empty() -> Self {
        Self {
            scalars: Section::new("scalar"),
            distributions: Section::new("distribution"),
            transports: Section::new("transport"),
            profiles: Section::new("profile"),
            diffeos: Section::new("diffeo"),
            vector_fields: Section::new("vector field"),
        }
    }

    pub fn builtin() -> Self {
        let mut c = Self::empty();
        c.register_builtin_scalars();
        c.register_builtin_distributions();
        c.register_builtin_transports();
        c.register_builtin_profiles();
        c.register_builtin_diffeos();
        c.register_builtin_vector_fields();
        c
    }

    fn register_builtin_scalars(&mut self) {
        self.scalars.register(
            "const",
            "const:c",
            "constant function c",
            Arc::new(|params, _| Ok(SmoothMap::constant(parse_f64(&format!("const:{params}"), params)?))),
        );
        self.scalars.register(
            "poly",
            "poly:expr",
            "polynomial in x, y, z, e.g. poly:1+x^2 or poly:2*x*y-y^3",
            Arc::new(|params, dim| Ok(Polynomial::parse(params, dim)?.into_smooth_map())),
        );
        self.scalars.register(
            "exp",
            "exp:a[:axis]",
            "exp(a·x_axis), axis defaults to 0",
            Arc::new(|params, dim| {
                let name = format!("exp:{params}");
                let mut parts = params.split(':');
                let a = parse_f64(&name, parts.next().unwrap_or(""))?;
                let axis = match parts.next() {
                    Some(s) => axis_param(&name, s, dim)?,
                    None => 0,
                };
                Ok(SmoothMap::with_partials(
                    move |p| (a * p.coords()[axis]).exp(),
                    move |p, k| if k == axis { a * (a * p.coords()[axis]).exp() } else { 0.0 },
                ))
            }),
        );
        self.scalars.register(
            "sin",
            "sin:k[:axis]",
            "sin(k·x_axis), axis defaults to 0",
            Arc::new(|params, dim| {
                let name = format!("sin:{params}");
                let mut parts = params.split(':');
                let k = parse_f64(&name, parts.next().unwrap_or(""))?;
                let axis = match parts.next() {
                    Some(s) => axis_param(&name, s, dim)?,
                    None => 0,
                };
                Ok(SmoothMap::with_partials(
                    move |p| (k * p.coords()[axis]).sin(),
                    move |p, j| if j == axis { k * (k * p.coords()[axis]).cos() } else { 0.0 },
                ))
            }),
        );
    }

    fn register_builtin_distributions(&mut self) {
        self.distributions.register(
            "dirac",
            "dirac@x0[,x1,x2]",
            "Dirac measure evaluating the chart density at x0",
            Arc::new(|params, dim, _| Ok(ScalarDistribution::dirac(parse_point(&format!("dirac@{params}"), params, dim)?))),
        );
        self.distributions.register(
            "dirac_d",
            "dirac_d@x0[,x1]:a0[,a1]",
            "derivative ∂^α of the Dirac measure, |α| ≤ 3",
            Arc::new(|params, dim, _| {
                let name = format!("dirac_d@{params}");
                let (at, alpha) = params
                    .split_once(':')
                    .ok_or_else(|| bad(&name, "expected point:multi-index"))?;
                let at = parse_point(&name, at, dim)?;
                let alpha = alpha
                    .split(',')
                    .map(|a| a.trim().parse::<usize>().map_err(|_| bad(&name, "bad multi-index")))
                    .collect::<Result<Vec<_>>>()?;
                ScalarDistribution::dirac_derivative(at, &alpha)
            }),
        );
        self.distributions.register(
            "regular",
            "regular:<scalar>",
            "regular distribution of a catalog scalar, e.g. regular:poly:1+x^2",
            Arc::new(|params, dim, cat| Ok(ScalarDistribution::regular(cat.scalar(params, dim)?))),
        );
        self.distributions.register(
            "zero",
            "zero",
            "the zero distribution",
            Arc::new(|params, _, _| {
                no_params("zero", params)?;
                Ok(ScalarDistribution::zero())
            }),
        );
    }

    fn register_builtin_transports(&mut self) {
        self.transports.register(
            "identity_cut",
            "identity_cut",
            "c(p)c(q)·Id, identity on the diagonal of the working box",
            Arc::new(|params, chart| {
                no_params("identity_cut", params)?;
                Ok(TransportOperator::identity_cut(chart))
            }),
        );
        self.transports.register(
            "shear",
            "shear:λ",
            "c(p)c(q)·(Id + λ(q₀−p₀)N), N = 1 in 1D, E₀₁ otherwise",
            Arc::new(|params, chart| Ok(TransportOperator::shear(chart, parse_f64(&format!("shear:{params}"), params)?))),
        );
        self.transports.register(
            "rotation",
            "rotation:θ",
            "c(p)c(q)·R(θ|q−p|), two dimensions only",
            Arc::new(|params, chart| TransportOperator::rotation(chart, parse_f64(&format!("rotation:{params}"), params)?)),
        );
    }

    fn register_builtin_profiles(&mut self) {
        self.profiles.register(
            "bump_sym",
            "bump_sym",
            "exp(−1/(1−|x|²)), normalized, symmetric",
            Arc::new(|params, dim| {
                no_params("bump_sym", params)?;
                BumpProfile::bump_sym(dim)
            }),
        );
        self.profiles.register(
            "bump_shift",
            "bump_shift:m",
            "symmetric bump shrunk to radius 1−|m| around m·e₀; first moment m",
            Arc::new(|params, dim| BumpProfile::bump_shift(dim, parse_f64(&format!("bump_shift:{params}"), params)?)),
        );
        self.profiles.register(
            "poly4",
            "poly4",
            "(1−|x|²)⁴, normalized, C³ at the boundary",
            Arc::new(|params, dim| {
                no_params("poly4", params)?;
                BumpProfile::poly4(dim)
            }),
        );
    }

    fn register_builtin_diffeos(&mut self) {
        self.diffeos.register(
            "identity",
            "identity",
            "the identity map",
            Arc::new(|params, chart| {
                no_params("identity", params)?;
                Ok(Diffeo::identity(*chart))
            }),
        );
        self.diffeos.register(
            "scaling",
            "scaling:c",
            "x ↦ c·x",
            Arc::new(|params, chart| {
                let name = format!("scaling:{params}");
                let c = parse_f64(&name, params)?;
                if c == 0.0 {
                    return Err(bad(&name, "scale must be nonzero"));
                }
                Diffeo::closed_form(
                    name,
                    *chart,
                    move |p| p.scale(c),
                    move |y| y.scale(1.0 / c),
                    move |p| DMatrix::identity(p.dim(), p.dim()) * c,
                )
            }),
        );
        self.diffeos.register(
            "shear",
            "shear:λ",
            "(x, y[, z]) ↦ (x + λy², y[, z]), dimension ≥ 2",
            Arc::new(|params, chart| {
                let name = format!("shear:{params}");
                let l = parse_f64(&name, params)?;
                if chart.dim() < 2 {
                    return Err(bad(&name, "needs dimension ≥ 2"));
                }
                Diffeo::closed_form(
                    name,
                    *chart,
                    move |p| p.offset(0, l * p.coords()[1].powi(2)),
                    move |y| y.offset(0, -l * y.coords()[1].powi(2)),
                    move |p| {
                        let mut j = DMatrix::identity(p.dim(), p.dim());
                        j[(0, 1)] = 2.0 * l * p.coords()[1];
                        j
                    },
                )
            }),
        );
        self.diffeos.register(
            "sinh",
            "sinh",
            "componentwise x ↦ sinh(x)",
            Arc::new(|params, chart| {
                no_params("sinh", params)?;
                Diffeo::closed_form(
                    "sinh",
                    *chart,
                    |p| Point::new(&p.coords().iter().map(|x| x.sinh()).collect::<Vec<_>>()),
                    |y| Point::new(&y.coords().iter().map(|x| x.asinh()).collect::<Vec<_>>()),
                    |p| DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(p.dim(), p.coords().iter().map(|x| x.cosh()))),
                )
            }),
        );
        self.diffeos.register(
            "cubic",
            "cubic:a",
            "componentwise x ↦ x + a·x³, a ≥ 0",
            Arc::new(|params, chart| {
                let name = format!("cubic:{params}");
                let a = parse_f64(&name, params)?;
                if a < 0.0 {
                    return Err(bad(&name, "needs a ≥ 0 to stay monotone"));
                }
                let f = move |x: f64| x + a * x.powi(3);
                let df = move |x: f64| 1.0 + 3.0 * a * x * x;
                Diffeo::closed_form(
                    name,
                    *chart,
                    move |p| Point::new(&p.coords().iter().map(|x| f(*x)).collect::<Vec<_>>()),
                    move |y| Point::new(&y.coords().iter().map(|v| newton_inverse(*v, f, df)).collect::<Vec<_>>()),
                    move |p| DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(p.dim(), p.coords().iter().map(|x| df(*x)))),
                )
            }),
        );
    }

    fn register_builtin_vector_fields(&mut self) {
        self.vector_fields.register(
            "translation",
            "translation:axis",
            "the constant field ∂_axis",
            Arc::new(|params, chart, h| {
                let name = format!("translation:{params}");
                let axis = if params.is_empty() { 0 } else { axis_param(&name, params, chart.dim())? };
                let comps = (0..chart.dim())
                    .map(|k| SmoothMap::constant(if k == axis { 1.0 } else { 0.0 }))
                    .collect();
                VectorFieldFlow::new(*chart, comps, h)
            }),
        );
        self.vector_fields.register(
            "exp_flow",
            "exp_flow",
            "the Euler field Σ xᵢ∂ᵢ with flow x ↦ e^τ x",
            Arc::new(|params, chart, h| {
                no_params("exp_flow", params)?;
                VectorFieldFlow::new(*chart, (0..chart.dim()).map(SmoothMap::coordinate).collect(), h)
            }),
        );
        self.vector_fields.register(
            "rotation",
            "rotation",
            "−y∂_x + x∂_y, two dimensions only",
            Arc::new(|params, chart, h| {
                no_params("rotation", params)?;
                if chart.dim() != 2 {
                    return Err(bad("rotation", "needs dimension 2"));
                }
                VectorFieldFlow::new(*chart, vec![SmoothMap::coordinate(1).scale(-1.0), SmoothMap::coordinate(0)], h)
            }),
        );
    }

    pub fn scalar(&self, name: &str, dim: usize) -> Result<SmoothMap> {
        let (b, params) = self.scalars.resolve(name)?;
        b(params, dim)
    }

    pub fn distribution(&self, name: &str, dim: usize) -> Result<ScalarDistribution> {
        let (b, params) = self.distributions.resolve(name)?;
        b(params, dim, self)
    }

    pub fn transport(&self, name: &str, chart: &Chart) -> Result<TransportOperator> {
        let (b, params) = self.transports.resolve(name)?;
        b(params, chart)
    }

    pub fn profile(&self, name: &str, dim: usize) -> Result<BumpProfile> {
        let (b, params) = self.profiles.resolve(name)?;
        b(params, dim)
    }

    pub fn diffeo(&self, name: &str, chart: &Chart) -> Result<Diffeo> {
        let (b, params) = self.diffeos.resolve(name)?;
        b(params, chart)
    }

    pub fn vector_field(&self, name: &str, chart: &Chart, h_flow: f64) -> Result<VectorFieldFlow> {
        let (b, params) = self.vector_fields.resolve(name)?;
        b(params, chart, h_flow)
    }

    /// Vector field from one catalog scalar per component.
    pub fn vector_field_from_components(&self, names: &[String], chart: &Chart, h_flow: f64) -> Result<VectorFieldFlow> {
        let comps = names
            .iter()
            .map(|n| self.scalar(n, chart.dim()))
            .collect::<Result<Vec<_>>>()?;
        VectorFieldFlow::new(*chart, comps, h_flow)
    }

    /// Human-readable listing of every section.
    pub fn listing(&self) -> String {
        fn section<B: Clone>(out: &mut String, title: &str, s: &Section<B>) {
            let _ = writeln!(out, "{title}:");
            for e in s.entries() {
                let _ = writeln!(out, "  {:<26} {}", e.syntax, e.description);
            }
        }
        let mut out = String::new();
        section(&mut out, "scalars", &self.scalars);
        section(&mut out, "distributions", &self.distributions);
        section(&mut out, "transports", &self.transports);
        section(&mut out, "profiles", &self.profiles);
        section(&mut out, "diffeos", &self.diffeos);
        section(&mut out, "vector fields", &self.vector_fields);
        out
    }
}

/// Free function form of [`Catalog::profile`] on the built-in catalog.
pub fn profile_catalog(name: &str, dim: usize) -> Result<BumpProfile> {
    Catalog::builtin().profile(name, dim)
}

/// Free function form of [`Catalog::transport`] on the built-in catalog.
pub fn transport_catalog(name: &str, chart: &Chart) -> Result<TransportOperator> {
    Catalog::builtin().transport(name, chart)
}
