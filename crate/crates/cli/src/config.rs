//! Experiment configuration: a sectioned TOML file.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Output directory; `--out` and `REGDIST_OUT` take precedence.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    /// Point budget for generators (exit 3 when exceeded).
    pub max_points: Option<usize>,
    /// Largest tolerated unresolved fraction of any artifact (exit 3 above).
    pub max_unresolved: Option<f64>,
    pub measure: Option<MeasureSection>,
    #[serde(default)]
    pub kernel: KernelSection,
    pub gen: Option<GenSection>,
    pub eval: Option<EvalSection>,
    pub carleson: Option<CarlesonSection>,
    pub alpha: Option<AlphaSection>,
    pub beta: Option<BetaSection>,
    pub bwgl: Option<BwglSection>,
    pub flow: Option<FlowSection>,
    pub ntlimit: Option<NtSection>,
    pub blowup: Option<BlowupSection>,
    pub magic: Option<MagicSection>,
    pub bench: Option<BenchSection>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    /// flat | cantor | graph | sphere | file
    pub kind: String,
    pub n: Option<usize>,
    pub d: Option<f64>,
    pub density: Option<f64>,
    pub extent: Option<f64>,
    pub spacing: Option<f64>,
    /// sinh grading core for flat planes and graphs
    pub core: Option<f64>,
    pub generation: Option<u32>,
    pub scale: Option<f64>,
    pub profile: Option<String>,
    pub amplitude: Option<f64>,
    pub wavelength: Option<f64>,
    pub radius: Option<f64>,
    pub path: Option<PathBuf>,
    /// Re-embed the generated measure in ℝ^embed.
    pub embed: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub expo: Option<f64>,
    pub kappa: f64,
    /// direct | tree
    pub summation: String,
    pub theta: f64,
    /// monopole | quadrupole | hexadecapole
    pub expansion: String,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            expo: None,
            kappa: regdist::measure::DEFAULT_KAPPA,
            summation: "direct".into(),
            theta: 0.3,
            expansion: "hexadecapole".into(),
        }
    }
}

/// Explicit points, or `count` support points spread over the window.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PointSet {
    pub points: Option<Vec<Vec<f64>>>,
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub audit_centers: usize,
    pub audit_radii: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub points: Option<Vec<Vec<f64>>>,
    /// Query points in the measure text format (weights ignored).
    pub query_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CarlesonSection {
    #[serde(flatten)]
    pub centers: PointSet,
    pub radii: Vec<f64>,
    /// Thresholds ε for the Z(ε) masses; empty skips them.
    #[serde(default)]
    pub eps: Vec<f64>,
    pub max_depth: Option<u32>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    #[serde(flatten)]
    pub centers: PointSet,
    pub radii: Vec<f64>,
    pub max_evals: Option<usize>,
    pub nu_spacing: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    #[serde(flatten)]
    pub centers: PointSet,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BwglSection {
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub r_min: f64,
    pub tau: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub starts: Option<Vec<Vec<f64>>>,
    /// Random starts drawn uniformly in the box [lo, hi] with δ ≥ min_delta.
    pub count: Option<usize>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub min_delta: Option<f64>,
    /// descent | ascent
    #[serde(default = "default_direction")]
    pub direction: String,
    pub rtol: Option<f64>,
    pub max_steps: Option<usize>,
}

fn default_direction() -> String {
    "descent".into()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NtSection {
    #[serde(flatten)]
    pub base: PointSet,
    pub eta: f64,
    pub r_max: f64,
    pub per_scale: usize,
    pub tol: Option<f64>,
    /// Radii for the density estimate behind the predicted limit.
    #[serde(default)]
    pub density_radii: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupSection {
    #[serde(flatten)]
    pub base: PointSet,
    pub radii: Vec<f64>,
    pub probes: usize,
    /// Density of the model flat measure; estimated from `radii` when absent.
    pub theta: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MagicSection {
    /// Exponent override; defaults to the magic α = n − d − 2.
    pub alpha: Option<f64>,
    /// Points for the finite-difference Laplacian ladder.
    #[serde(default)]
    pub ladder_points: Vec<Vec<f64>>,
    /// Surrogate base points.
    #[serde(flatten)]
    pub base: PointSet,
    #[serde(default)]
    pub radii: Vec<f64>,
    pub budget: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub queries: usize,
    pub thetas: Vec<f64>,
    /// Query box; defaults to the measure's bounding box.
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn positive(errs: &mut Vec<String>, field: &str, v: Option<f64>) {
    if let Some(v) = v {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(format!("{field}: must be positive and finite, got {v}"));
        }
    }
}

fn required<T>(errs: &mut Vec<String>, field: &str, v: &Option<T>, kind: &str) {
    if v.is_none() {
        errs.push(format!("{field}: required for kind `{kind}`"));
    }
}

fn radii(errs: &mut Vec<String>, field: &str, rs: &[f64]) {
    if rs.is_empty() {
        errs.push(format!("{field}: at least one radius required"));
    }
    for (i, r) in rs.iter().enumerate() {
        if !(*r > 0.0 && r.is_finite()) {
            errs.push(format!("{field}[{i}]: must be positive, got {r}"));
        }
    }
}

fn point_set(errs: &mut Vec<String>, field: &str, p: &PointSet, n: Option<usize>) {
    match (&p.points, p.count) {
        (None, None) => errs.push(format!("{field}: give `points` or `count`")),
        (Some(_), Some(_)) => errs.push(format!("{field}: `points` and `count` are exclusive")),
        (Some(pts), None) => points(errs, &format!("{field}.points"), pts, n),
        (None, Some(0)) => errs.push(format!("{field}.count: must be at least 1")),
        _ => {}
    }
}

fn points(errs: &mut Vec<String>, field: &str, pts: &[Vec<f64>], n: Option<usize>) {
    if pts.is_empty() {
        errs.push(format!("{field}: empty"));
    }
    for (i, p) in pts.iter().enumerate() {
        if let Some(n) = n {
            if p.len() != n {
                errs.push(format!("{field}[{i}]: has {} coordinates, ambient dimension is {n}", p.len()));
            }
        }
        if p.iter().any(|v| !v.is_finite()) {
            errs.push(format!("{field}[{i}]: non-finite coordinate"));
        }
    }
}

impl ExperimentConfig {
    /// Ambient dimension implied by the measure section, if determinable.
    pub fn ambient_dim(&self) -> Option<usize> {
        let m = self.measure.as_ref()?;
        if let Some(e) = m.embed {
            return Some(e);
        }
        match m.kind.as_str() {
            "cantor" => Some(2),
            _ => m.n,
        }
    }

    /// Every violated field for running `sub`, or Ok.
    pub fn validate(&self, sub: &str) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.seed.is_none() {
            errs.push("seed: required (set it in the config or pass --seed)".to_string());
        }
        if let Some(t) = self.threads {
            if t == 0 {
                errs.push("threads: must be at least 1".into());
            }
        }
        if let Some(0) = self.max_points {
            errs.push("max_points: must be at least 1".into());
        }
        if let Some(u) = self.max_unresolved {
            if !(0.0..=1.0).contains(&u) {
                errs.push(format!("max_unresolved: must lie in [0, 1], got {u}"));
            }
        }
        let n = self.ambient_dim();
        match &self.measure {
            None => errs.push("measure: section required".into()),
            Some(m) => self.validate_measure(m, &mut errs),
        }
        let k = &self.kernel;
        positive(&mut errs, "kernel.expo", k.expo);
        if !(k.kappa >= 1.0 && k.kappa.is_finite()) {
            errs.push(format!("kernel.kappa: must be at least 1, got {}", k.kappa));
        }
        if !["direct", "tree"].contains(&k.summation.as_str()) {
            errs.push(format!("kernel.summation: expected direct or tree, got `{}`", k.summation));
        }
        if !(0.0..1.0).contains(&k.theta) {
            errs.push(format!("kernel.theta: must lie in [0, 1), got {}", k.theta));
        }
        if !["monopole", "quadrupole", "hexadecapole"].contains(&k.expansion.as_str()) {
            errs.push(format!("kernel.expansion: expected monopole, quadrupole or hexadecapole, got `{}`", k.expansion));
        }
        let needs_expo = !matches!(sub, "gen" | "alpha" | "beta" | "bwgl" | "magic");
        if needs_expo && k.expo.is_none() {
            errs.push(format!("kernel.expo: required by `{sub}`"));
        }
        let missing = |errs: &mut Vec<String>, name: &str| errs.push(format!("{name}: section required by `{name}`"));
        match sub {
            "gen" => {
                if let Some(g) = &self.gen {
                    if g.audit_centers == 0 {
                        errs.push("gen.audit_centers: must be at least 1".into());
                    }
                    if let Some(r) = &g.audit_radii {
                        radii(&mut errs, "gen.audit_radii", r);
                    }
                }
            }
            "eval" => match &self.eval {
                None => missing(&mut errs, "eval"),
                Some(e) => match (&e.points, &e.query_file) {
                    (None, None) => errs.push("eval: give `points` or `query_file`".into()),
                    (Some(_), Some(_)) => errs.push("eval: `points` and `query_file` are exclusive".into()),
                    (Some(p), None) => points(&mut errs, "eval.points", p, n),
                    _ => {}
                },
            },
            "carleson" => match &self.carleson {
                None => missing(&mut errs, "carleson"),
                Some(c) => {
                    point_set(&mut errs, "carleson", &c.centers, n);
                    radii(&mut errs, "carleson.radii", &c.radii);
                    for (i, e) in c.eps.iter().enumerate() {
                        if !(*e > 0.0) {
                            errs.push(format!("carleson.eps[{i}]: must be positive, got {e}"));
                        }
                    }
                    if let Some(md) = c.max_depth {
                        if md == 0 || md > 40 {
                            errs.push(format!("carleson.max_depth: must lie in [1, 40], got {md}"));
                        }
                    }
                }
            },
            "alpha" => match &self.alpha {
                None => missing(&mut errs, "alpha"),
                Some(a) => {
                    point_set(&mut errs, "alpha", &a.centers, n);
                    radii(&mut errs, "alpha.radii", &a.radii);
                    positive(&mut errs, "alpha.nu_spacing", a.nu_spacing);
                }
            },
            "beta" => match &self.beta {
                None => missing(&mut errs, "beta"),
                Some(b) => {
                    point_set(&mut errs, "beta", &b.centers, n);
                    radii(&mut errs, "beta.radii", &b.radii);
                }
            },
            "bwgl" => match &self.bwgl {
                None => missing(&mut errs, "bwgl"),
                Some(b) => {
                    if let Some(c) = &b.center {
                        points(&mut errs, "bwgl.center", std::slice::from_ref(c), n);
                    }
                    positive(&mut errs, "bwgl.radius", Some(b.radius));
                    positive(&mut errs, "bwgl.r_min", Some(b.r_min));
                    if b.r_min > b.radius {
                        errs.push(format!("bwgl.r_min: {} exceeds bwgl.radius {}", b.r_min, b.radius));
                    }
                    if b.tau.is_empty() {
                        errs.push("bwgl.tau: at least one threshold required".into());
                    }
                    for (i, t) in b.tau.iter().enumerate() {
                        if !(*t > 0.0) {
                            errs.push(format!("bwgl.tau[{i}]: must be positive, got {t}"));
                        }
                    }
                }
            },
            "flow" => match &self.flow {
                None => missing(&mut errs, "flow"),
                Some(f) => {
                    match (&f.starts, f.count) {
                        (None, None) => errs.push("flow: give `starts` or `count`".into()),
                        (Some(_), Some(_)) => errs.push("flow: `starts` and `count` are exclusive".into()),
                        (Some(s), None) => points(&mut errs, "flow.starts", s, n),
                        (None, Some(c)) => {
                            if c == 0 {
                                errs.push("flow.count: must be at least 1".into());
                            }
                            for (name, b) in [("flow.lo", &f.lo), ("flow.hi", &f.hi)] {
                                match b {
                                    None => errs.push(format!("{name}: required with `count`")),
                                    Some(b) => points(&mut errs, name, std::slice::from_ref(b), n),
                                }
                            }
                            if let (Some(lo), Some(hi)) = (&f.lo, &f.hi) {
                                if lo.iter().zip(hi).any(|(a, b)| a > b) {
                                    errs.push("flow.lo: must not exceed flow.hi".into());
                                }
                            }
                            positive(&mut errs, "flow.min_delta", f.min_delta);
                        }
                    }
                    if !["descent", "ascent"].contains(&f.direction.as_str()) {
                        errs.push(format!("flow.direction: expected descent or ascent, got `{}`", f.direction));
                    }
                    positive(&mut errs, "flow.rtol", f.rtol);
                    if let Some(0) = f.max_steps {
                        errs.push("flow.max_steps: must be at least 1".into());
                    }
                }
            },
            "ntlimit" => match &self.ntlimit {
                None => missing(&mut errs, "ntlimit"),
                Some(t) => {
                    point_set(&mut errs, "ntlimit", &t.base, n);
                    if !(t.eta > 0.0 && t.eta < 1.0) {
                        errs.push(format!("ntlimit.eta: must lie in (0, 1), got {}", t.eta));
                    }
                    positive(&mut errs, "ntlimit.r_max", Some(t.r_max));
                    if t.per_scale < 2 {
                        errs.push(format!("ntlimit.per_scale: need at least 2 samples, got {}", t.per_scale));
                    }
                    positive(&mut errs, "ntlimit.tol", t.tol);
                    if !t.density_radii.is_empty() {
                        radii(&mut errs, "ntlimit.density_radii", &t.density_radii);
                    }
                }
            },
            "blowup" => match &self.blowup {
                None => missing(&mut errs, "blowup"),
                Some(b) => {
                    point_set(&mut errs, "blowup", &b.base, n);
                    radii(&mut errs, "blowup.radii", &b.radii);
                    if b.probes == 0 {
                        errs.push("blowup.probes: must be at least 1".into());
                    }
                    positive(&mut errs, "blowup.theta", b.theta);
                }
            },
            "magic" => match &self.magic {
                None => missing(&mut errs, "magic"),
                Some(mg) => {
                    positive(&mut errs, "magic.alpha", mg.alpha);
                    if !mg.ladder_points.is_empty() {
                        points(&mut errs, "magic.ladder_points", &mg.ladder_points, n);
                    }
                    let has_base = mg.base.points.is_some() || mg.base.count.is_some();
                    if has_base {
                        point_set(&mut errs, "magic", &mg.base, n);
                        radii(&mut errs, "magic.radii", &mg.radii);
                    }
                    if mg.ladder_points.is_empty() && !has_base {
                        errs.push("magic: give `ladder_points` and/or surrogate base points".into());
                    }
                    if let Some(0) = mg.budget {
                        errs.push("magic.budget: must be at least 1".into());
                    }
                    if k.expo.is_some() {
                        errs.push("kernel.expo: `magic` fixes the exponent; use magic.alpha to override".into());
                    }
                }
            },
            "bench" => match &self.bench {
                None => missing(&mut errs, "bench"),
                Some(b) => {
                    if b.queries == 0 {
                        errs.push("bench.queries: must be at least 1".into());
                    }
                    if b.thetas.is_empty() {
                        errs.push("bench.thetas: at least one θ required".into());
                    }
                    for (i, t) in b.thetas.iter().enumerate() {
                        if !(0.0..1.0).contains(t) {
                            errs.push(format!("bench.thetas[{i}]: must lie in [0, 1), got {t}"));
                        }
                    }
                    if b.lo.is_some() != b.hi.is_some() {
                        errs.push("bench: `lo` and `hi` go together".into());
                    }
                    for (name, v) in [("bench.lo", &b.lo), ("bench.hi", &b.hi)] {
                        if let Some(v) = v {
                            points(&mut errs, name, std::slice::from_ref(v), n);
                        }
                    }
                }
            },
            other => errs.push(format!("subcommand: unknown `{other}`")),
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    fn validate_measure(&self, m: &MeasureSection, errs: &mut Vec<String>) {
        let kind = m.kind.as_str();
        for (f, v) in [
            ("measure.density", m.density),
            ("measure.extent", m.extent),
            ("measure.spacing", m.spacing),
            ("measure.core", m.core),
            ("measure.scale", m.scale),
            ("measure.wavelength", m.wavelength),
            ("measure.radius", m.radius),
            ("measure.d", m.d),
        ] {
            positive(errs, f, v);
        }
        if let Some(a) = m.amplitude {
            if !(a >= 0.0 && a.is_finite()) {
                errs.push(format!("measure.amplitude: must be non-negative, got {a}"));
            }
        }
        if let Some(n) = m.n {
            if !(1..=regdist::geometry::MAX_DIM).contains(&n) {
                errs.push(format!("measure.n: must lie in [1, {}], got {n}", regdist::geometry::MAX_DIM));
            }
        }
        if let Some(e) = m.embed {
            if !(2..=regdist::geometry::MAX_DIM).contains(&e) {
                errs.push(format!("measure.embed: must lie in [2, {}], got {e}", regdist::geometry::MAX_DIM));
            }
        }
        match kind {
            "flat" => {
                required(errs, "measure.n", &m.n, kind);
                required(errs, "measure.d", &m.d, kind);
                required(errs, "measure.extent", &m.extent, kind);
                required(errs, "measure.spacing", &m.spacing, kind);
            }
            "cantor" => {
                required(errs, "measure.generation", &m.generation, kind);
                if let Some(g) = m.generation {
                    if !(1..=12).contains(&g) {
                        errs.push(format!("measure.generation: must lie in [1, 12], got {g}"));
                    }
                }
                if m.n.is_some() {
                    errs.push("measure.n: the Cantor set lives in the plane; use measure.embed".into());
                }
            }
            "graph" => {
                required(errs, "measure.n", &m.n, kind);
                required(errs, "measure.profile", &m.profile, kind);
                required(errs, "measure.amplitude", &m.amplitude, kind);
                required(errs, "measure.wavelength", &m.wavelength, kind);
                required(errs, "measure.extent", &m.extent, kind);
                required(errs, "measure.spacing", &m.spacing, kind);
                if let Some(p) = &m.profile {
                    if !["sine", "sine_ripple", "ripple", "sawtooth", "bump", "smooth_bump"].contains(&p.as_str()) {
                        errs.push(format!("measure.profile: unknown profile `{p}`"));
                    }
                }
            }
            "sphere" => {
                required(errs, "measure.n", &m.n, kind);
                required(errs, "measure.radius", &m.radius, kind);
                required(errs, "measure.spacing", &m.spacing, kind);
            }
            "file" => required(errs, "measure.path", &m.path, kind),
            other => errs.push(format!("measure.kind: expected flat, cantor, graph, sphere or file, got `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_violation_is_listed() {
        let cfg = parse(
            r#"
            [measure]
            kind = "flat"
            n = 2
            spacing = -1.0
            [kernel]
            kappa = 0.5
            summation = "fast"
            theta = 0.3
            expansion = "hexadecapole"
            "#,
        )
        .unwrap();
        let ConfigError::Invalid(errs) = cfg.validate("eval").unwrap_err() else { panic!() };
        for field in ["seed", "measure.d", "measure.extent", "measure.spacing", "kernel.kappa", "kernel.summation", "kernel.expo", "eval"] {
            assert!(errs.iter().any(|e| e.starts_with(field)), "{field} missing from {errs:?}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(parse("seed = 1\nsed = 2\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn minimal_gen_config() {
        let cfg = parse("seed = 3\n[measure]\nkind = \"cantor\"\ngeneration = 4\n").unwrap();
        cfg.validate("gen").unwrap();
        assert_eq!(cfg.ambient_dim(), Some(2));
    }
}
