//! JSON experiment configurations.

use serde::{Deserialize, Serialize};

use crate::asymptotics::VerdictThresholds;
use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn bump_sym() -> String {
    "bump_sym".into()
}

fn identity_cut() -> String {
    "identity_cut".into()
}

fn default_tau() -> f64 {
    crate::lie::DEFAULT_TAU_LIE
}

fn default_h_flow() -> f64 {
    1e-3
}

/// A tensor field: a bare scalar name, or a type with one scalar per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldRecipe {
    Scalar(String),
    Tensor { ttype: [usize; 2], components: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecipe {
    pub coefficient: String,
    pub field: FieldRecipe,
}

/// A tensor distribution: a bare scalar distribution name, coefficients in
/// the coordinate basis, or explicit `coefficient ⊗ field` terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionRecipe {
    Scalar(String),
    Coefficients { ttype: [usize; 2], coefficients: Vec<String> },
    Terms { ttype: [usize; 2], terms: Vec<TermRecipe> },
}

/// A basic-space element built from embeddings and pointwise algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementRecipe {
    Sigma(FieldRecipe),
    IotaContinuous(FieldRecipe),
    Iota(DistributionRecipe),
    Difference(Box<[ElementRecipe; 2]>),
    Product(Box<[ElementRecipe; 2]>),
}

/// A fixed test density: a profile scaled to `radius` around `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "bump_sym")]
    pub profile: String,
}

/// A vector field: a catalog name or one scalar per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorFieldRecipe {
    Named(String),
    Components(Vec<String>),
}

/// Evaluation triples `(ω_{ε,p}, p, A)`: explicit points at one ε, followed
/// by `random` seeded draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleSpec {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub eps_range: Option<[f64; 2]>,
    /// Random points are drawn from the cube of this half-width times the chart's.
    #[serde(default = "half")]
    pub point_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    #[serde(default = "bump_sym")]
    pub profile: String,
    #[serde(default = "identity_cut")]
    pub transport: String,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            profile: bump_sym(),
            transport: identity_cut(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedSpec {
    pub element: ElementRecipe,
    #[serde(default)]
    pub compare: Option<ElementRecipe>,
    pub triples: TripleSpec,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub element: ElementRecipe,
    pub point: Vec<f64>,
    #[serde(default)]
    pub p_grid: Vec<Vec<f64>>,
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub thresholds: VerdictThresholds,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationSpec {
    pub t1: ElementRecipe,
    pub t2: ElementRecipe,
    pub psi: DensitySpec,
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub thresholds: VerdictThresholds,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSpec {
    pub f: String,
    pub u: String,
    pub point: Vec<f64>,
    pub psi: DensitySpec,
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub thresholds: VerdictThresholds,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub u: DistributionRecipe,
    /// `a^j_i` row-major: `e_i = a^j_i ê_j`.
    pub basis_change: Vec<String>,
    pub point: Vec<f64>,
    pub eps_grid: Vec<f64>,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LieEmbedding {
    IotaContinuous,
    Iota,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieSpec {
    pub vector_field: VectorFieldRecipe,
    pub field: FieldRecipe,
    #[serde(default = "default_embedding")]
    pub embedding: LieEmbedding,
    pub triples: TripleSpec,
    #[serde(default = "default_tau")]
    pub tau_lie: f64,
    #[serde(default = "default_h_flow")]
    pub h_flow: f64,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

fn default_embedding() -> LieEmbedding {
    LieEmbedding::IotaContinuous
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffeoSpec {
    pub diffeo: String,
    pub distribution: DistributionRecipe,
    pub triples: TripleSpec,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub diffeo: String,
    pub field: FieldRecipe,
    pub triples: TripleSpec,
    #[serde(flatten)]
    pub probe: ProbeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Embed(EmbedSpec),
    Commutator(CommutatorSpec),
    Basis(BasisSpec),
    Scaling(ScalingSpec),
    Association(AssociationSpec),
    LieCheck(LieSpec),
    DiffeoCheck(DiffeoSpec),
    ChartCheck(ChartSpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Embed(_) => "embed",
            Experiment::Commutator(_) => "commutator",
            Experiment::Basis(_) => "basis",
            Experiment::Scaling(_) => "scaling",
            Experiment::Association(_) => "association",
            Experiment::LieCheck(_) => "lie_check",
            Experiment::DiffeoCheck(_) => "diffeo_check",
            Experiment::ChartCheck(_) => "chart_check",
        }
    }
}

/// A declared tolerance on one reported metric.
///
/// With `target`, passes when `|value − target| ≤ tol` (or `tol·|target|`
/// when `relative`). `min` and `max` are inclusive bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub metric: String,
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub relative: bool,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

impl CheckSpec {
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.target {
            let tol = num(self.tol.unwrap_or(0.0));
            let rel = if self.relative { " relative" } else { "" };
            parts.push(format!("{} ± {tol}{rel}", num(t)));
        }
        if let Some(m) = self.min {
            parts.push(format!("≥ {}", num(m)));
        }
        if let Some(m) = self.max {
            parts.push(format!("≤ {}", num(m)));
        }
        parts.join(", ")
    }

    pub fn passes(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        let mut ok = true;
        if let Some(t) = self.target {
            let tol = self.tol.unwrap_or(0.0);
            let allowed = if self.relative { tol * t.abs() } else { tol };
            ok &= (v - t).abs() <= allowed;
        }
        if let Some(m) = self.min {
            ok &= v >= m;
        }
        if let Some(m) = self.max {
            ok &= v <= m;
        }
        ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dim: usize,
    /// Half-width of the cube chart.
    #[serde(default = "one")]
    pub chart_half_width: f64,
    /// Gauss nodes per panel; the dimension default when absent.
    #[serde(default)]
    pub quad_nodes: Option<usize>,
    #[serde(default = "one_usize")]
    pub quad_panels: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shape checks that need no catalog.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dim must be 1, 2 or 3, got {}", self.dim));
        }
        if !(self.chart_half_width > 0.0) {
            return bad("chart_half_width must be positive".into());
        }
        if self.quad_nodes == Some(0) || self.quad_panels == 0 {
            return bad("quadrature nodes and panels must be positive".into());
        }
        let point = |p: &[f64], what: &str| -> Result<()> {
            if p.len() != self.dim {
                return Err(Error::Config(format!("{what} has {} coordinates, expected {}", p.len(), self.dim)));
            }
            Ok(())
        };
        let grid = |g: &[f64]| -> Result<()> {
            crate::asymptotics::validate_eps_grid(g).map_err(|e| Error::Config(e.to_string()))
        };
        let triples = |t: &TripleSpec| -> Result<()> {
            for p in &t.points {
                point(p, "triple point")?;
            }
            if !t.points.is_empty() && !t.eps.is_some_and(|e| e > 0.0) {
                return Err(Error::Config("explicit triple points need a positive eps".into()));
            }
            if t.random > 0 {
                match t.eps_range {
                    Some([a, b]) if a > 0.0 && a <= b => {}
                    _ => return Err(Error::Config("random triples need eps_range [lo, hi] with 0 < lo ≤ hi".into())),
                }
                if !(t.point_fraction > 0.0 && t.point_fraction < 1.0) {
                    return Err(Error::Config("point_fraction must lie in (0, 1)".into()));
                }
            }
            if t.points.is_empty() && t.random == 0 {
                return Err(Error::Config("no evaluation triples".into()));
            }
            Ok(())
        };
        let density = |d: &DensitySpec| -> Result<()> {
            point(&d.center, "psi center")?;
            if !(d.radius > 0.0) {
                return Err(Error::Config("psi radius must be positive".into()));
            }
            Ok(())
        };
        match &self.experiment {
            Experiment::Embed(s) => triples(&s.triples),
            Experiment::Scaling(s) => {
                point(&s.point, "point")?;
                for p in &s.p_grid {
                    point(p, "p_grid point")?;
                }
                grid(&s.eps_grid)
            }
            Experiment::Association(s) => {
                density(&s.psi)?;
                grid(&s.eps_grid)
            }
            Experiment::Commutator(s) => {
                point(&s.point, "point")?;
                density(&s.psi)?;
                grid(&s.eps_grid)
            }
            Experiment::Basis(s) => {
                point(&s.point, "point")?;
                if s.eps_grid.is_empty() || s.eps_grid.iter().any(|e| !(*e > 0.0)) {
                    return bad("eps_grid must be non-empty and positive".into());
                }
                Ok(())
            }
            Experiment::LieCheck(s) => {
                if !(s.tau_lie > 0.0 && s.h_flow > 0.0) {
                    return bad("tau_lie and h_flow must be positive".into());
                }
                triples(&s.triples)
            }
            Experiment::DiffeoCheck(s) => triples(&s.triples),
            Experiment::ChartCheck(s) => triples(&s.triples),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tagged_kinds() {
        let cfg = ExperimentConfig::from_json(
            r#"{"name":"d","kind":"scaling","dim":1,"point":[0],
                "element":{"iota":"dirac@0"},"eps_grid":[0.1,0.05,0.025,0.0125]}"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.kind(), "scaling");
        let Experiment::Scaling(s) = &cfg.experiment else { unreachable!() };
        assert_eq!(s.probe, ProbeSpec::default());
        assert_eq!(s.element, ElementRecipe::Iota(DistributionRecipe::Scalar("dirac@0".into())));
        assert_eq!(cfg.chart_half_width, 1.0);
    }

    #[test]
    fn nested_element_recipes() {
        let e: ElementRecipe = serde_json::from_str(
            r#"{"difference":[{"iota_continuous":"exp:1"},{"sigma":{"ttype":[1,0],"components":["const:1"]}}]}"#,
        )
        .unwrap();
        let ElementRecipe::Difference(pair) = e else { panic!() };
        assert!(matches!(pair[1], ElementRecipe::Sigma(FieldRecipe::Tensor { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        let base = |extra: &str| {
            format!(r#"{{"name":"x","kind":"scaling","dim":1,"element":{{"sigma":"const:1"}},{extra}}}"#)
        };
        assert!(ExperimentConfig::from_json(&base(r#""point":[0],"eps_grid":[0.1,0.2,0.05,0.01]"#)).is_err());
        assert!(ExperimentConfig::from_json(&base(r#""point":[0,0],"eps_grid":[0.1,0.05,0.02,0.01]"#)).is_err());
        assert!(ExperimentConfig::from_json(r#"{"name":"x","kind":"warp","dim":1}"#).is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn check_semantics() {
        let c = CheckSpec { metric: "m".into(), target: Some(-1.0), tol: Some(0.05), relative: false, min: None, max: None };
        assert!(c.passes(-1.04));
        assert!(!c.passes(-0.9));
        assert!(!c.passes(f64::NAN));
        let r = CheckSpec { relative: true, tol: Some(0.02), target: Some(2.0), ..c.clone() };
        assert!(r.passes(2.03) && !r.passes(2.05));
        let b = CheckSpec { target: None, tol: None, min: Some(1.0), max: Some(3.0), ..c };
        assert!(b.passes(1.0) && b.passes(3.0) && !b.passes(3.1));
    }
}
