//! Batch experiments driven by JSON configs.
//!
//! Each run produces `results.csv`, `report.json` and `summary.txt`. Catalog
//! names are resolved before anything is evaluated, so an unknown name never
//! leaves partial output behind.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    association_test, basis_dependence_with, scaling_estimate_on_grid, schwartz_commutator_with, Probe, Verdict,
};
use crate::catalog::Catalog;
use crate::distribution::{lie_derivative_distribution, NFormDensity, ScalarDistribution, TensorDistribution};
use crate::embedding::{
    embed_iota_continuous_with, embed_iota_distribution_with, embed_sigma, pointwise_product, BasicSpaceElement,
};
use crate::error::{Error, Result};
use crate::geometry::{Chart, Point, VectorFieldFlow};
use crate::lie::{lie_classical, lie_hat, mu_hat, pullback_distribution, pushforward_field};
use crate::mollifier::{make_mollifier, ScaledMollifier};
use crate::quadrature::{default_nodes, Quadrature};
use crate::tensor::{BasisChange, SmoothTensorField, TensorAtPoint, TensorType};

pub use config::*;

pub const TOOL_NAME: &str = "tcolombeau";

/// Why a run stopped before producing a report.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Parse(Error),
    #[error("catalog resolution failed: {0}")]
    Resolve(Error),
    #[error("writing outputs failed: {0}")]
    Io(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse(_) => 2,
            RunError::Resolve(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub quad_nodes: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: Option<f64>,
    pub target: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInfo {
    pub nodes_per_panel: usize,
    pub panels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub os: String,
    pub arch: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub quadrature: QuadratureInfo,
    pub config: ExperimentConfig,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub results: serde_json::Value,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
    pub error: Option<String>,
    pub notes: Vec<String>,
    pub machine: Machine,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed && self.error.is_none() {
            0
        } else {
            1
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }
}

/// Everything a run writes.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub csv: Vec<u8>,
    pub summary: String,
}

impl RunOutput {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), &self.csv)?;
        let mut json = serde_json::to_string_pretty(&self.report)?;
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;
        std::fs::write(dir.join("summary.txt"), &self.summary)?;
        Ok(())
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

struct Outcome {
    table: Table,
    metrics: BTreeMap<String, f64>,
    results: serde_json::Value,
    notes: Vec<String>,
}

type Job = Box<dyn FnOnce() -> Result<Outcome> + Send>;

/// Metric names each experiment kind reports.
pub fn known_metrics(kind: &str) -> &'static [&'static str] {
    match kind {
        "embed" => &["max_norm", "max_abs_diff", "max_rel_diff"],
        "scaling" => &["slope", "r_squared", "norm_spread", "grid_slope"],
        "association" => &["slope", "r_squared", "max_gap"],
        "commutator" => &[
            "pointwise_gap",
            "first_order_prediction",
            "pointwise_gap_rel_error",
            "weak_slope",
            "weak_r_squared",
        ],
        "basis" => &["coordinatewise_norm", "max_slot3_norm"],
        "lie_check" => &["max_abs_diff", "max_rel_diff"],
        "diffeo_check" | "chart_check" => &["max_abs_diff", "max_rel_diff", "roundtrip_error"],
        _ => &[],
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Parse(Error::Io(e)))?;
    ExperimentConfig::from_json(&text).map_err(RunError::Parse)
}

/// Loads, runs and writes one experiment.
pub fn run(config_path: &Path, out_dir: &Path, overrides: Overrides, catalog: &Catalog) -> Result<RunOutput, RunError> {
    let cfg = load_config(config_path)?;
    let out = run_config(&cfg, overrides, catalog)?;
    out.write_to(out_dir).map_err(RunError::Io)?;
    Ok(out)
}

/// Runs one experiment in memory.
pub fn run_config(cfg: &ExperimentConfig, overrides: Overrides, catalog: &Catalog) -> Result<RunOutput, RunError> {
    let mut cfg = cfg.clone();
    if let Some(n) = overrides.quad_nodes {
        cfg.quad_nodes = Some(n);
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(RunError::Parse)?;
    let kind = cfg.experiment.kind();
    for c in &cfg.checks {
        if !known_metrics(kind).contains(&c.metric.as_str()) {
            return Err(RunError::Parse(Error::Config(format!(
                "check refers to unknown metric `{}` for kind {kind}",
                c.metric
            ))));
        }
    }
    let chart = Chart::cube(cfg.dim, cfg.chart_half_width).map_err(RunError::Parse)?;
    let nodes = cfg.quad_nodes.unwrap_or_else(|| default_nodes(cfg.dim));
    let quad = Quadrature::new(cfg.dim, nodes, cfg.quad_panels).map_err(RunError::Parse)?;
    let ctx = Ctx {
        cat: catalog,
        chart,
        dim: cfg.dim,
        quad,
        seed: cfg.seed,
    };
    let job = ctx.prepare(&cfg.experiment).map_err(RunError::Resolve)?;
    let outcome = job();
    Ok(assemble(cfg, nodes, outcome))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn assemble(cfg: ExperimentConfig, nodes: usize, outcome: Result<Outcome>) -> RunOutput {
    let kind = cfg.experiment.kind().to_string();
    let (table, metrics, results, mut notes, error) = match outcome {
        Ok(o) => (o.table, o.metrics, o.results, o.notes, None),
        Err(e) => (
            Table::new(vec!["error".into()]),
            BTreeMap::new(),
            serde_json::Value::Null,
            Vec::new(),
            Some(e.to_string()),
        ),
    };
    let checks: Vec<CheckRecord> = cfg
        .checks
        .iter()
        .map(|c| {
            let value = metrics.get(&c.metric).copied();
            CheckRecord {
                name: c.metric.clone(),
                value: value.and_then(finite),
                target: c.describe(),
                passed: value.is_some_and(|v| c.passes(v)),
            }
        })
        .collect();
    let passed = error.is_none() && checks.iter().all(|c| c.passed);
    if cfg.checks.is_empty() {
        notes.push("no tolerance checks declared".into());
    }
    let csv = table.to_csv().unwrap_or_default();
    let report = RunReport {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        name: cfg.name.clone(),
        kind,
        seed: cfg.seed,
        quadrature: QuadratureInfo {
            nodes_per_panel: nodes,
            panels: cfg.quad_panels,
        },
        metrics: metrics.into_iter().map(|(k, v)| (k, finite(v))).collect(),
        results,
        checks,
        passed,
        error,
        notes,
        machine: Machine {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        },
        config: cfg,
    };
    let summary = summarize(&report);
    RunOutput { report, csv, summary }
}

fn summarize(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} | experiment `{}` ({})", r.tool, r.version, r.name, r.kind);
    let _ = writeln!(
        s,
        "dim {} | quadrature {}x{} per axis | seed {}",
        r.config.dim, r.quadrature.nodes_per_panel, r.quadrature.panels, r.seed
    );
    if let Some(e) = &r.error {
        let _ = writeln!(s, "error: {e}");
    }
    if !r.metrics.is_empty() {
        let _ = writeln!(s, "metrics:");
        for (k, v) in &r.metrics {
            match v {
                Some(v) => {
                    let _ = writeln!(s, "  {k:<26} {v:.6e}");
                }
                None => {
                    let _ = writeln!(s, "  {k:<26} n/a");
                }
            }
        }
    }
    for key in ["verdict", "grid_verdict", "weak_verdict"] {
        if let Some(v) = r.results.get(key).filter(|v| !v.is_null()) {
            let _ = writeln!(s, "{key}: {v}");
        }
    }
    if !r.checks.is_empty() {
        let _ = writeln!(s, "checks:");
        for c in &r.checks {
            let v = c.value.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
            let _ = writeln!(
                s,
                "  [{}] {} = {} (target {})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                v,
                c.target
            );
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    let _ = writeln!(s, "status: {}", if r.exit_code() == 0 { "PASS" } else { "FAIL" });
    s
}

fn rel_diff(l: &TensorAtPoint, r: &TensorAtPoint) -> Result<(f64, f64)> {
    let abs = l.sub(r)?.sup_norm();
    let scale = l.sup_norm().max(r.sup_norm());
    Ok((abs, if scale == 0.0 { 0.0 } else { abs / scale }))
}

fn verdict_note(v: &Verdict) -> Option<String> {
    match v {
        Verdict::Inconclusive { reason } => Some(format!("fit inconclusive: {reason}")),
        _ => None,
    }
}

const A_FIXED: &str = "the transport operator A is held fixed while ε varies; verdicts are heuristic slope estimates";

struct Ctx<'a> {
    cat: &'a Catalog,
    chart: Chart,
    dim: usize,
    quad: Quadrature,
    seed: u64,
}

impl Ctx<'_> {
    fn ttype(&self, t: [usize; 2]) -> Result<TensorType> {
        TensorType::new(t[0], t[1])
    }

    fn field(&self, r: &FieldRecipe) -> Result<SmoothTensorField> {
        match r {
            FieldRecipe::Scalar(name) => Ok(SmoothTensorField::scalar(self.dim, self.cat.scalar(name, self.dim)?)),
            FieldRecipe::Tensor { ttype, components } => {
                let comps = components
                    .iter()
                    .map(|c| self.cat.scalar(c, self.dim))
                    .collect::<Result<Vec<_>>>()?;
                SmoothTensorField::from_components(self.ttype(*ttype)?, self.dim, comps)
            }
        }
    }

    fn distribution(&self, r: &DistributionRecipe) -> Result<TensorDistribution> {
        match r {
            DistributionRecipe::Scalar(name) => {
                Ok(TensorDistribution::scalar(self.cat.distribution(name, self.dim)?, self.dim))
            }
            DistributionRecipe::Coefficients { ttype, coefficients } => {
                let coeffs = coefficients
                    .iter()
                    .map(|c| self.cat.distribution(c, self.dim))
                    .collect::<Result<Vec<ScalarDistribution>>>()?;
                TensorDistribution::in_coordinate_basis(self.ttype(*ttype)?, self.dim, coeffs)
            }
            DistributionRecipe::Terms { ttype, terms } => {
                let terms = terms
                    .iter()
                    .map(|t| Ok((self.cat.distribution(&t.coefficient, self.dim)?, self.field(&t.field)?)))
                    .collect::<Result<Vec<_>>>()?;
                TensorDistribution::new(self.ttype(*ttype)?, self.dim, terms)
            }
        }
    }

    fn element(&self, r: &ElementRecipe) -> Result<BasicSpaceElement> {
        Ok(match r {
            ElementRecipe::Sigma(f) => embed_sigma(&self.field(f)?),
            ElementRecipe::IotaContinuous(f) => embed_iota_continuous_with(&self.field(f)?, self.quad.clone()),
            ElementRecipe::Iota(d) => embed_iota_distribution_with(&self.distribution(d)?, self.quad.clone()),
            ElementRecipe::Difference(pair) => self.element(&pair[0])?.sub(&self.element(&pair[1])?)?,
            ElementRecipe::Product(pair) => pointwise_product(&self.element(&pair[0])?, &self.element(&pair[1])?)?,
        })
    }

    fn probe(&self, spec: &ProbeSpec) -> Result<Probe> {
        Ok(Probe::new(
            self.chart,
            self.cat.profile(&spec.profile, self.dim)?,
            self.cat.transport(&spec.transport, &self.chart)?,
        ))
    }

    fn density(&self, d: &DensitySpec) -> Result<NFormDensity> {
        let profile = self.cat.profile(&d.profile, self.dim)?;
        Ok(ScaledMollifier::new(profile, Point::new(&d.center), d.radius)?.to_density())
    }

    fn vector_field(&self, r: &VectorFieldRecipe, h_flow: f64) -> Result<VectorFieldFlow> {
        match r {
            VectorFieldRecipe::Named(name) => self.cat.vector_field(name, &self.chart, h_flow),
            VectorFieldRecipe::Components(c) => self.cat.vector_field_from_components(c, &self.chart, h_flow),
        }
    }

    fn triples(&self, t: &TripleSpec) -> Vec<(Point, f64)> {
        let mut out: Vec<(Point, f64)> = t
            .points
            .iter()
            .map(|p| (Point::new(p), t.eps.unwrap_or(0.0)))
            .collect();
        if t.random > 0 {
            let [lo, hi] = t.eps_range.expect("validated");
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let dom = self.chart.domain;
            for _ in 0..t.random {
                let coords: Vec<f64> = (0..self.dim)
                    .map(|a| {
                        let c = 0.5 * (dom.lower.coords()[a] + dom.upper.coords()[a]);
                        let h = 0.5 * dom.width(a) * t.point_fraction;
                        rng.random_range(c - h..=c + h)
                    })
                    .collect();
                let eps = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                out.push((Point::new(&coords), eps));
            }
        }
        out
    }

    fn prepare(&self, exp: &Experiment) -> Result<Job> {
        match exp {
            Experiment::Embed(s) => self.prepare_embed(s),
            Experiment::Scaling(s) => self.prepare_scaling(s),
            Experiment::Association(s) => self.prepare_association(s),
            Experiment::Commutator(s) => self.prepare_commutator(s),
            Experiment::Basis(s) => self.prepare_basis(s),
            Experiment::LieCheck(s) => self.prepare_lie(s),
            Experiment::DiffeoCheck(s) => self.prepare_diffeo(s),
            Experiment::ChartCheck(s) => self.prepare_chart(s),
        }
    }

    fn prepare_embed(&self, s: &EmbedSpec) -> Result<Job> {
        let lhs = self.element(&s.element)?;
        let rhs = s.compare.as_ref().map(|c| self.element(c)).transpose()?;
        if let Some(r) = &rhs {
            if r.ttype() != lhs.ttype() {
                return Err(Error::TypeMismatch {
                    expected: lhs.ttype(),
                    found: r.ttype(),
                });
            }
        }
        let probe = self.probe(&s.probe)?;
        let triples = self.triples(&s.triples);
        Ok(Box::new(move || compare_on_triples(&lhs, rhs.as_ref(), &probe, &triples, "embed")))
    }

    fn prepare_scaling(&self, s: &ScalingSpec) -> Result<Job> {
        let t = self.element(&s.element)?;
        let probe = self.probe(&s.probe)?;
        let p = Point::new(&s.point);
        let grid: Vec<Point> = s.p_grid.iter().map(|q| Point::new(q)).collect();
        let (eps, th) = (s.eps_grid.clone(), s.thresholds);
        Ok(Box::new(move || {
            let rep = scaling_estimate_on_grid(&t, &p, &grid, &probe, &eps, &th)?;
            let mut header = vec!["eps".to_string(), "norm".to_string()];
            if rep.grid_norms.is_some() {
                header.push("grid_norm".into());
            }
            let mut table = Table::new(header);
            for (k, e) in eps.iter().enumerate() {
                let mut row = vec![*e, rep.norms[k]];
                if let Some(g) = &rep.grid_norms {
                    row.push(g[k]);
                }
                table.rows.push(row);
            }
            let hi = rep.norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = rep.norms.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut metrics = BTreeMap::new();
            metrics.insert("slope".into(), rep.fitted_slope().unwrap_or(f64::NAN));
            metrics.insert("r_squared".into(), rep.r_squared().unwrap_or(f64::NAN));
            metrics.insert("norm_spread".into(), if hi == 0.0 { 0.0 } else { (hi - lo) / hi });
            if let Some(f) = rep.grid_fit {
                metrics.insert("grid_slope".into(), f.slope);
            }
            let mut notes = vec![A_FIXED.to_string()];
            notes.extend(verdict_note(&rep.verdict));
            Ok(Outcome {
                table,
                metrics,
                results: serde_json::to_value(&rep)?,
                notes,
            })
        }))
    }

    fn prepare_association(&self, s: &AssociationSpec) -> Result<Job> {
        let t1 = self.element(&s.t1)?;
        let t2 = self.element(&s.t2)?;
        let probe = self.probe(&s.probe)?;
        let psi = self.density(&s.psi)?;
        let (eps, th) = (s.eps_grid.clone(), s.thresholds);
        Ok(Box::new(move || {
            let rep = association_test(&t1, &t2, &probe, &psi, &eps, &th)?;
            let mut table = Table::new(vec!["eps".into(), "weak_gap".into()]);
            for (e, v) in eps.iter().zip(&rep.norms) {
                table.rows.push(vec![*e, *v]);
            }
            let mut metrics = BTreeMap::new();
            metrics.insert("slope".into(), rep.fitted_slope().unwrap_or(f64::NAN));
            metrics.insert("r_squared".into(), rep.r_squared().unwrap_or(f64::NAN));
            metrics.insert("max_gap".into(), rep.norms.iter().cloned().fold(0.0, f64::max));
            let mut notes = vec![A_FIXED.to_string()];
            notes.extend(verdict_note(&rep.verdict));
            Ok(Outcome {
                table,
                metrics,
                results: serde_json::to_value(&rep)?,
                notes,
            })
        }))
    }

    fn prepare_commutator(&self, s: &CommutatorSpec) -> Result<Job> {
        let f = self.cat.scalar(&s.f, self.dim)?;
        let u = self.cat.distribution(&s.u, self.dim)?;
        let probe = self.probe(&s.probe)?;
        let psi = self.density(&s.psi)?;
        let p = Point::new(&s.point);
        let (eps, th, quad) = (s.eps_grid.clone(), s.thresholds, self.quad.clone());
        let n = self.dim as i32;
        Ok(Box::new(move || {
            let res = schwartz_commutator_with(&f, &u, &p, &probe, &eps, &psi, &th, &quad)?;
            let mut table = Table::new(vec!["eps".into(), "pointwise_gap".into(), "weak_gap".into()]);
            for (k, e) in eps.iter().enumerate() {
                table.rows.push(vec![*e, res.pointwise_gaps[k], res.weak_gaps[k]]);
            }
            let mut metrics = BTreeMap::new();
            metrics.insert("pointwise_gap".into(), res.pointwise_gap);
            metrics.insert("weak_slope".into(), res.weak_slope().unwrap_or(f64::NAN));
            metrics.insert("weak_r_squared".into(), res.weak_fit.map_or(f64::NAN, |f| f.r_squared));
            let mut notes = vec![A_FIXED.to_string()];
            if let ScalarDistribution::Dirac(x0) = &u {
                // exact for affine f: (f(p) − f(x0) + ε∇f(p)·m) ε^{−n} χ((x0 − p)/ε)
                let e = eps[0];
                let m = probe.profile.first_moments();
                let grad: f64 = (0..p.dim()).map(|a| f.partial(&p, a) * m[a]).sum();
                let z: Vec<f64> = (0..p.dim()).map(|a| (x0.coords()[a] - p.coords()[a]) / e).collect();
                let pred = ((f.eval(&p) - f.eval(x0) + e * grad) * probe.profile.shape(&z) / e.powi(n)).abs();
                metrics.insert("first_order_prediction".into(), pred);
                metrics.insert(
                    "pointwise_gap_rel_error".into(),
                    if pred == 0.0 { f64::NAN } else { (res.pointwise_gap - pred).abs() / pred },
                );
                notes.push("first-order prediction is exact for affine f".into());
            }
            notes.extend(verdict_note(&res.weak_verdict));
            Ok(Outcome {
                table,
                metrics,
                results: serde_json::to_value(&res)?,
                notes,
            })
        }))
    }

    fn prepare_basis(&self, s: &BasisSpec) -> Result<Job> {
        let u = self.distribution(&s.u)?;
        let coeffs = s
            .basis_change
            .iter()
            .map(|c| self.cat.scalar(c, self.dim))
            .collect::<Result<Vec<_>>>()?;
        let bc = BasisChange::new(u.ttype(), &self.chart, coeffs)?;
        let probe = self.probe(&s.probe)?;
        let p = Point::new(&s.point);
        let (eps, quad) = (s.eps_grid.clone(), self.quad.clone());
        Ok(Box::new(move || {
            let rows = eps
                .par_iter()
                .map(|&e| {
                    let w = probe.omega(&p, e)?;
                    let bd = basis_dependence_with(&u, &bc, &w, &p, &probe.transport, &quad)?;
                    Ok((bd.coordinatewise.sup_norm(), bd.slot3.sup_norm(), bd))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut table = Table::new(vec!["eps".into(), "coordinatewise_norm".into(), "slot3_norm".into()]);
            for (e, (c, s3, _)) in eps.iter().zip(&rows) {
                table.rows.push(vec![*e, *c, *s3]);
            }
            let mut metrics = BTreeMap::new();
            metrics.insert("coordinatewise_norm".into(), rows[0].0);
            metrics.insert("max_slot3_norm".into(), rows.iter().map(|r| r.1).fold(0.0, f64::max));
            let details: Vec<_> = rows.iter().map(|r| &r.2).collect();
            Ok(Outcome {
                table,
                metrics,
                results: serde_json::to_value(details)?,
                notes: vec!["coordinate-wise embedding applies ι to each coefficient and keeps the basis fields at p".into()],
            })
        }))
    }

    fn prepare_lie(&self, s: &LieSpec) -> Result<Job> {
        let x = self.vector_field(&s.vector_field, s.h_flow)?;
        let g = self.field(&s.field)?;
        let (embedded, expected) = match s.embedding {
            LieEmbedding::IotaContinuous => (
                embed_iota_continuous_with(&g, self.quad.clone()),
                embed_iota_continuous_with(&lie_classical(&g, &x), self.quad.clone()),
            ),
            LieEmbedding::Iota => {
                let u = TensorDistribution::from_field(&g);
                (
                    embed_iota_distribution_with(&u, self.quad.clone()),
                    embed_iota_distribution_with(&lie_derivative_distribution(&u, &x)?, self.quad.clone()),
                )
            }
        };
        let lhs = lie_hat(&x, &embedded, s.tau_lie)?;
        let probe = self.probe(&s.probe)?;
        let triples = self.triples(&s.triples);
        let budget = format!(
            "tolerance budget: central difference in the flow parameter, error O(τ²) with τ = {:e}, flow step h = {:e}, plus quadrature error of the {}-node rule",
            s.tau_lie,
            s.h_flow,
            self.quad.nodes_per_panel() * self.quad.panels()
        );
        Ok(Box::new(move || {
            let mut o = compare_on_triples(&lhs, Some(&expected), &probe, &triples, "lie_check")?;
            o.notes.push(budget);
            Ok(o)
        }))
    }

    fn prepare_diffeo(&self, s: &DiffeoSpec) -> Result<Job> {
        let mu = self.cat.diffeo(&s.diffeo, &self.chart)?;
        let u = self.distribution(&s.distribution)?;
        let lhs = mu_hat(&mu, &embed_iota_distribution_with(&u, self.quad.clone()));
        let rhs = embed_iota_distribution_with(&pullback_distribution(&mu, &u)?, self.quad.clone());
        let probe = self.probe(&s.probe)?;
        let triples = self.triples(&s.triples);
        Ok(Box::new(move || {
            let mut o = compare_on_triples(&lhs, Some(&rhs), &probe, &triples, "diffeo_check")?;
            o.metrics.insert("roundtrip_error".into(), mu.roundtrip_error(10)?);
            Ok(o)
        }))
    }

    fn prepare_chart(&self, s: &ChartSpec) -> Result<Job> {
        let mu = self.cat.diffeo(&s.diffeo, &self.chart)?;
        let g = self.field(&s.field)?;
        let lhs = embed_iota_continuous_with(&g, self.quad.clone());
        let rhs = mu_hat(&mu, &embed_iota_continuous_with(&pushforward_field(&mu, &g), self.quad.clone()));
        let probe = self.probe(&s.probe)?;
        let triples = self.triples(&s.triples);
        Ok(Box::new(move || {
            let mut o = compare_on_triples(&lhs, Some(&rhs), &probe, &triples, "chart_check")?;
            o.metrics.insert("roundtrip_error".into(), mu.roundtrip_error(10)?);
            o.notes.push("right-hand side is computed in the image chart and pulled back".into());
            Ok(o)
        }))
    }
}

fn compare_on_triples(
    lhs: &BasicSpaceElement,
    rhs: Option<&BasicSpaceElement>,
    probe: &Probe,
    triples: &[(Point, f64)],
    kind: &str,
) -> Result<Outcome> {
    let values = triples
        .par_iter()
        .map(|(p, eps)| {
            let w = make_mollifier(&probe.profile, p, *eps, &probe.chart)?;
            let l = lhs.eval(&w, p, &probe.transport)?;
            let r = rhs.map(|r| r.eval(&w, p, &probe.transport)).transpose()?;
            Ok((l, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = probe.chart.dim();
    let m = lhs.ttype().component_count(dim);
    let mut header = vec!["eps".to_string()];
    header.extend((0..dim).map(|a| format!("p{a}")));
    header.extend((0..m).map(|k| format!("value{k}")));
    if rhs.is_some() {
        header.extend((0..m).map(|k| format!("expected{k}")));
        header.push("abs_diff".into());
        header.push("rel_diff".into());
    }
    let mut table = Table::new(header);
    let (mut max_norm, mut max_abs, mut max_rel) = (0.0f64, 0.0f64, 0.0f64);
    for ((p, eps), (l, r)) in triples.iter().zip(&values) {
        let mut row = vec![*eps];
        row.extend_from_slice(p.coords());
        row.extend_from_slice(l.components());
        max_norm = max_norm.max(l.sup_norm());
        if let Some(r) = r {
            let (abs, rel) = rel_diff(l, r)?;
            row.extend_from_slice(r.components());
            row.push(abs);
            row.push(rel);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        table.rows.push(row);
    }
    let mut metrics = BTreeMap::new();
    if kind == "embed" {
        metrics.insert("max_norm".into(), max_norm);
    }
    if rhs.is_some() {
        metrics.insert("max_abs_diff".into(), max_abs);
        metrics.insert("max_rel_diff".into(), max_rel);
    }
    Ok(Outcome {
        table,
        metrics,
        results: serde_json::json!({ "triples": triples.len() }),
        notes: Vec::new(),
    })
}
