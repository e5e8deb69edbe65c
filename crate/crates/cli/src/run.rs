//! Subcommand pipelines.

use crate::artifacts::{coords_header, num, sha256_hex, Artifacts};
use crate::config::{ConfigError, ExperimentConfig, MeasureSection, PointSet};
use rand::Rng;
use rayon::prelude::*;
use regdist::diagnostics::{
    alpha_number, beta_bilateral, bwgl_count, carleson_mass_z_sweep, carleson_sum_f, default_max_depth, AlphaOptions, BetaOptions,
    CarlesonReport, CarlesonWindow, DiagError,
};
use regdist::field::{Expansion, FieldEngine, FieldError, KernelParams, Summation, TreeOptions};
use regdist::flow::{integrate_flow, Direction, FlowControl, FlowError};
use regdist::geometry::dist;
use regdist::magic::{laplacian_r_residual, omega_surrogate, operator_residual, MagicConfig, MagicError, CORKSCREW_BUDGET};
use regdist::measure::{
    admissible_radii, audit_regularity, dyadic_radii, gen_flat_plane, gen_four_corner_cantor, gen_lipschitz_graph, gen_sphere,
    interior_centers, read_measure, write_measure, FlatPlaneSpec, GraphSpec, MeasureError, PointMeasure, Profile,
    DEFAULT_POINT_BUDGET,
};
use regdist::ntlimits::{blowup_compare, density_estimate, nt_probe, predicted_limit, ConeSpec, NtError, Verdict, CONVERGENCE_TOL};
use regdist::rng::task_rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const SUBCOMMANDS: [&str; 11] = ["gen", "eval", "carleson", "alpha", "beta", "bwgl", "flow", "ntlimit", "blowup", "magic", "bench"];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// The configuration is well-formed but the pipeline rejects it.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("resolution budget exceeded: {0}")]
    Budget(String),
    #[error("run failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Rejected(_) => 2,
            RunError::Budget(_) => 3,
            RunError::Failed(_) | RunError::Io(_) => 1,
        }
    }
}

impl From<MeasureError> for RunError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::PointBudget { .. } => RunError::Budget(e.to_string()),
            MeasureError::Io(io) => RunError::Io(io),
            other => RunError::Rejected(other.to_string()),
        }
    }
}

impl From<FieldError> for RunError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::SingularQuery { .. } | FieldError::StencilUnresolved { .. } => RunError::Budget(e.to_string()),
            FieldError::Quadrature(_) => RunError::Failed(e.to_string()),
            other => RunError::Rejected(other.to_string()),
        }
    }
}

impl From<DiagError> for RunError {
    fn from(e: DiagError) -> Self {
        match e {
            DiagError::Field(f) => f.into(),
            other => RunError::Rejected(other.to_string()),
        }
    }
}

impl From<FlowError> for RunError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Field(f) => f.into(),
            other => RunError::Budget(other.to_string()),
        }
    }
}

impl From<NtError> for RunError {
    fn from(e: NtError) -> Self {
        match e {
            NtError::Field(f) => f.into(),
            NtError::Measure(m) => m.into(),
            other => RunError::Rejected(other.to_string()),
        }
    }
}

impl From<MagicError> for RunError {
    fn from(e: MagicError) -> Self {
        match e {
            MagicError::Field(f) => f.into(),
            MagicError::StencilUnresolved { .. } | MagicError::GeometryTooTight { .. } => RunError::Budget(e.to_string()),
            other => RunError::Rejected(other.to_string()),
        }
    }
}

/// Options that come from the command line rather than the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub config_hash: String,
    pub artifacts: Vec<String>,
}

/// Output directory precedence: `--out`, then `REGDIST_OUT`, then the config.
pub fn resolve_out(cfg: &ExperimentConfig, ov: &Overrides) -> Option<PathBuf> {
    ov.out.clone().or_else(|| std::env::var_os("REGDIST_OUT").map(PathBuf::from)).or_else(|| cfg.out.clone())
}

pub fn run(sub: &str, mut cfg: ExperimentConfig, ov: &Overrides) -> Result<RunSummary, RunError> {
    if ov.seed.is_some() {
        cfg.seed = ov.seed;
    }
    if ov.threads.is_some() {
        cfg.threads = ov.threads;
    }
    let out = resolve_out(&cfg, ov);
    let mut problems = match cfg.validate(sub) {
        Ok(()) => Vec::new(),
        Err(ConfigError::Invalid(v)) => v,
        Err(e) => return Err(e.into()),
    };
    if out.is_none() {
        problems.push("out: no output directory (set `out`, REGDIST_OUT or --out)".into());
    }
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems).into());
    }
    let out = out.unwrap_or_default();
    let seed = cfg.seed.unwrap_or_default();
    let config_json = serde_json::to_value(&cfg).map_err(|e| RunError::Failed(e.to_string()))?;
    let config_hash = sha256_hex(config_json.to_string().as_bytes());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Failed(e.to_string()))?;
    let start = Instant::now();
    let mut art = Artifacts::open(&out, &config_hash)?;
    pool.install(|| dispatch(sub, &cfg, seed, &mut art))?;
    if let Some(limit) = cfg.max_unresolved {
        if let Some((name, frac)) = art.unresolved().iter().find(|(_, f)| **f > limit) {
            return Err(RunError::Budget(format!("{name}: unresolved fraction {frac} exceeds max_unresolved {limit}")));
        }
    }
    let entries = art.commit(sub, seed, &config_json, start.elapsed().as_secs_f64())?;
    Ok(RunSummary { out, config_hash, artifacts: entries.into_iter().map(|e| e.file).collect() })
}

fn dispatch(sub: &str, cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<(), RunError> {
    let ms = cfg.measure.as_ref().ok_or_else(|| RunError::Rejected("measure section missing".into()))?;
    let m = build_measure(ms, cfg.max_points.unwrap_or(DEFAULT_POINT_BUDGET))?;
    let ctx = Ctx { cfg, seed, m: &m };
    match sub {
        "gen" => ctx.gen(art),
        "eval" => ctx.eval(art),
        "carleson" => ctx.carleson(art),
        "alpha" => ctx.alpha(art),
        "beta" => ctx.beta(art),
        "bwgl" => ctx.bwgl(art),
        "flow" => ctx.flow(art),
        "ntlimit" => ctx.ntlimit(art),
        "blowup" => ctx.blowup(art),
        "magic" => ctx.magic(art),
        "bench" => ctx.bench(art),
        other => Err(RunError::Rejected(format!("unknown subcommand `{other}`"))),
    }
}

pub fn build_measure(ms: &MeasureSection, budget: usize) -> Result<PointMeasure, RunError> {
    let need = |v: Option<f64>, f: &str| v.ok_or_else(|| RunError::Rejected(format!("measure.{f} missing")));
    let m = match ms.kind.as_str() {
        "flat" => {
            let n = ms.n.unwrap_or(2);
            let mut spec = FlatPlaneSpec::new(n, need(ms.d, "d")?, ms.density.unwrap_or(1.0), need(ms.extent, "extent")?, need(ms.spacing, "spacing")?);
            if let Some(c) = ms.core {
                spec = spec.graded(c);
            }
            spec.budget = budget;
            gen_flat_plane(&spec)?
        }
        "cantor" => gen_four_corner_cantor(ms.generation.unwrap_or(1), ms.scale.unwrap_or(1.0), 2, budget)?,
        "graph" => {
            let n = ms.n.unwrap_or(2);
            let profile = Profile::from_name(ms.profile.as_deref().unwrap_or(""), need(ms.amplitude, "amplitude")?, need(ms.wavelength, "wavelength")?)?;
            let d = ms.d.unwrap_or((n - 1) as f64);
            let mut spec = GraphSpec::new(n, d, profile, need(ms.extent, "extent")?, need(ms.spacing, "spacing")?);
            if let Some(c) = ms.core {
                spec = spec.graded(c);
            }
            spec.budget = budget;
            gen_lipschitz_graph(&spec)?
        }
        "sphere" => {
            let n = ms.n.unwrap_or(2);
            gen_sphere(n, ms.d.unwrap_or((n - 1) as f64), need(ms.radius, "radius")?, need(ms.spacing, "spacing")?)?
        }
        "file" => {
            let path = ms.path.as_deref().ok_or_else(|| RunError::Rejected("measure.path missing".into()))?;
            read_measure_file(path)?
        }
        other => return Err(RunError::Rejected(format!("unknown measure kind `{other}`"))),
    };
    if m.len() > budget {
        return Err(RunError::Budget(format!("{} points exceed max_points {budget}", m.len())));
    }
    match ms.embed {
        Some(e) if e != m.ambient_dim() => Ok(m.embedded(e)?),
        _ => Ok(m),
    }
}

fn read_measure_file(path: &Path) -> Result<PointMeasure, RunError> {
    let f = std::fs::File::open(path).map_err(|e| RunError::Rejected(format!("{}: {e}", path.display())))?;
    Ok(read_measure(std::io::BufReader::new(f))?)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    m: &'a PointMeasure,
}

fn fmt_point(p: &[f64]) -> Vec<String> {
    p.iter().map(|v| num(*v)).collect()
}

fn unresolved_fraction(bad: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

impl<'a> Ctx<'a> {
    fn n(&self) -> usize {
        self.m.ambient_dim()
    }

    fn expo(&self) -> f64 {
        self.cfg.kernel.expo.unwrap_or(1.0)
    }

    fn summation(&self) -> Summation {
        let k = &self.cfg.kernel;
        if k.summation == "tree" {
            let expansion = match k.expansion.as_str() {
                "monopole" => Expansion::Monopole,
                "quadrupole" => Expansion::Quadrupole,
                _ => Expansion::Hexadecapole,
            };
            Summation::Tree(TreeOptions::new(k.theta, expansion))
        } else {
            Summation::Direct
        }
    }

    fn engine_with(&self, kernel: KernelParams) -> Result<FieldEngine<'a>, RunError> {
        Ok(FieldEngine::new(self.m, kernel)?.with_kappa(self.cfg.kernel.kappa).with_summation(self.summation()))
    }

    fn engine(&self) -> Result<FieldEngine<'a>, RunError> {
        self.engine_with(KernelParams::for_measure(self.m, self.expo())?)
    }

    fn points(&self, ps: &PointSet) -> Vec<Vec<f64>> {
        match (&ps.points, ps.count) {
            (Some(p), _) => p.clone(),
            (None, Some(c)) => interior_centers(self.m, c),
            (None, None) => Vec::new(),
        }
    }

    fn gen(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let m = self.m;
        let mut buf = Vec::new();
        write_measure(m, &mut buf)?;
        art.write("measure.txt", &buf)?;
        let sec = self.cfg.gen.clone().unwrap_or(crate::config::GenSection { audit_centers: 8, audit_radii: None });
        let kappa = self.cfg.kernel.kappa;
        let radii = match &sec.audit_radii {
            Some(r) => r.clone(),
            None => {
                let (lo, hi) = admissible_radii(m, kappa);
                dyadic_radii(lo, hi)
            }
        };
        let index = regdist::measure::SpatialIndex::build(m);
        let centers = interior_centers(m, sec.audit_centers);
        let audit = audit_regularity(m, &index, &centers, &radii, kappa)?;
        #[derive(Serialize)]
        struct GenSummary<'b> {
            n: usize,
            d: f64,
            spacing: f64,
            points: usize,
            total_mass: f64,
            label: &'b str,
            audit: regdist::measure::RegularityAudit,
        }
        Ok(art.json(
            "audit.json",
            &GenSummary { n: m.ambient_dim(), d: m.hausdorff_dim(), spacing: m.spacing(), points: m.len(), total_mass: m.total_mass(), label: m.label(), audit },
        )?)
    }

    fn eval(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.eval.as_ref().ok_or_else(|| RunError::Rejected("eval section missing".into()))?;
        let queries: Vec<Vec<f64>> = match (&sec.points, &sec.query_file) {
            (Some(p), _) => p.clone(),
            (None, Some(path)) => {
                let q = read_measure_file(path)?;
                if q.ambient_dim() != self.n() {
                    return Err(RunError::Rejected(format!("query file has n = {}, measure has n = {}", q.ambient_dim(), self.n())));
                }
                q.points().map(|p| p.to_vec()).collect()
            }
            (None, None) => Vec::new(),
        };
        let engine = self.engine()?;
        let n = self.n();
        let results = engine.eval_batch(&queries);
        let mut header = coords_header("x", n);
        header.extend(["delta", "R", "D"].map(String::from));
        header.extend(coords_header("gradD", n));
        header.extend(["F", "Ftilde", "resolved", "tail_bound"].map(String::from));
        let mut bad = 0;
        let mut rows = Vec::with_capacity(queries.len());
        for (x, res) in queries.iter().zip(results) {
            let mut row = fmt_point(x);
            match res {
                Ok(e) => {
                    bad += usize::from(!e.resolved);
                    row.extend([num(e.delta), num(e.r), num(e.d)]);
                    row.extend(fmt_point(&e.grad_d));
                    row.extend([num(e.f), e.ftilde.map(num).unwrap_or_default(), e.resolved.to_string(), num(e.tail_bound)]);
                }
                Err(FieldError::SingularQuery { .. }) => {
                    bad += 1;
                    row.extend([num(engine.delta(x)), num(f64::INFINITY), "0e0".into()]);
                    row.extend(std::iter::repeat_n("nan".to_string(), n));
                    row.extend(["nan".into(), String::new(), "false".into(), num(self.m.tail_bound(x, self.expo()))]);
                }
                Err(e) => return Err(e.into()),
            }
            rows.push(row);
        }
        art.note_unresolved("field.csv", unresolved_fraction(bad, queries.len()));
        art.csv("field.csv", &header, rows)?;
        Ok(())
    }

    fn windows(&self, centers: &[Vec<f64>], radii: &[f64]) -> Vec<CarlesonWindow> {
        centers.iter().flat_map(|c| radii.iter().map(|&r| CarlesonWindow { center: c.clone(), radius: r })).collect()
    }

    fn carleson(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.carleson.as_ref().ok_or_else(|| RunError::Rejected("carleson section missing".into()))?;
        let engine = self.engine()?;
        let n = self.n();
        let windows = self.windows(&self.points(&sec.centers), &sec.radii);
        let depth = |w: &CarlesonWindow| sec.max_depth.unwrap_or_else(|| default_max_depth(w, engine.resolution_floor(), n));
        let entries = windows.iter().map(|w| carleson_sum_f(&engine, w, depth(w))).collect::<Result<Vec<_>, _>>()?;
        let mut header = coords_header("X", n);
        header.extend(["Rad", "value", "cells", "unresolved_frac"].map(String::from));
        let rows = entries.iter().map(|e| {
            let mut row = fmt_point(&e.center);
            row.extend([num(e.radius), num(e.value), e.cells.to_string(), num(e.unresolved_fraction)]);
            row
        });
        art.csv("carleson.csv", &header, rows)?;
        let report = CarlesonReport::from_entries(entries);
        art.note_unresolved("carleson.csv", report.unresolved_fraction);
        if !sec.eps.is_empty() {
            let mut header = coords_header("X", n);
            header.extend(["Rad", "eps", "value"].map(String::from));
            let mut rows = Vec::new();
            let mut sups = vec![0.0f64; sec.eps.len()];
            for w in &windows {
                let values = carleson_mass_z_sweep(&engine, &sec.eps, w, depth(w))?;
                for (k, (e, v)) in sec.eps.iter().zip(values).enumerate() {
                    sups[k] = sups[k].max(v);
                    let mut row = fmt_point(&w.center);
                    row.extend([num(w.radius), num(*e), num(v)]);
                    rows.push(row);
                }
            }
            art.csv("carleson_z.csv", &header, rows)?;
            art.json("carleson_z.json", &serde_json::json!({ "eps": sec.eps, "sup": sups }))?;
        }
        Ok(art.json("carleson.json", &report)?)
    }

    fn alpha(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.alpha.as_ref().ok_or_else(|| RunError::Rejected("alpha section missing".into()))?;
        let index = regdist::measure::SpatialIndex::build(self.m);
        let opts = AlphaOptions { nu_spacing: sec.nu_spacing, max_evals: sec.max_evals.unwrap_or(120), ..Default::default() };
        let n = self.n();
        let jobs: Vec<(Vec<f64>, f64)> = self.points(&sec.centers).into_iter().flat_map(|c| sec.radii.iter().map(move |&r| (c.clone(), r))).collect();
        let results = jobs.par_iter().map(|(x, r)| alpha_number(self.m, &index, x, *r, &opts)).collect::<Vec<_>>();
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let d = self.m.hausdorff_dim() as usize;
        let mut header = coords_header("x", n);
        header.extend(["r", "alpha", "lambda"].map(String::from));
        header.extend(coords_header("plane_base", n));
        for k in 1..=d {
            header.extend(coords_header(&format!("plane_dir{k}"), n));
        }
        header.extend(["certificate", "approximate"].map(String::from));
        let approx = results.iter().filter(|a| a.approximate).count();
        let rows = results.iter().map(|a| {
            let mut row = fmt_point(&a.x);
            row.extend([num(a.r), num(a.alpha), num(a.flat.density)]);
            row.extend(fmt_point(&a.flat.plane.base));
            for b in &a.flat.plane.basis {
                row.extend(fmt_point(b));
            }
            row.extend([num(a.certificate), a.approximate.to_string()]);
            row
        });
        art.csv("alpha.csv", &header, rows)?;
        art.note_unresolved("alpha.csv", unresolved_fraction(approx, results.len()));
        let max_alpha = results.iter().map(|a| a.alpha).fold(0.0, f64::max);
        Ok(art.json("alpha.json", &serde_json::json!({ "problems": results.len(), "max_alpha": max_alpha, "approximate": approx }))?)
    }

    fn beta(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.beta.as_ref().ok_or_else(|| RunError::Rejected("beta section missing".into()))?;
        let index = regdist::measure::SpatialIndex::build(self.m);
        let opts = BetaOptions::default();
        let jobs: Vec<(Vec<f64>, f64)> = self.points(&sec.centers).into_iter().flat_map(|c| sec.radii.iter().map(move |&r| (c.clone(), r))).collect();
        let results = jobs.par_iter().map(|(x, r)| beta_bilateral(self.m, &index, x, *r, &opts)).collect::<Vec<_>>();
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let mut header = coords_header("x", self.n());
        header.extend(["r", "beta_b", "beta_one_sided"].map(String::from));
        let rows = results.iter().map(|b| {
            let mut row = fmt_point(&b.x);
            row.extend([num(b.r), num(b.beta), num(b.one_sided)]);
            row
        });
        Ok(art.csv("beta.csv", &header, rows)?)
    }

    fn bwgl(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.bwgl.as_ref().ok_or_else(|| RunError::Rejected("bwgl section missing".into()))?;
        let index = regdist::measure::SpatialIndex::build(self.m);
        let center = match &sec.center {
            Some(c) => c.clone(),
            None => interior_centers(self.m, 1).pop().ok_or_else(|| RunError::Rejected("empty measure".into()))?,
        };
        let opts = BetaOptions::default();
        let reports = sec.tau.iter().map(|&t| bwgl_count(self.m, &index, &center, sec.radius, sec.r_min, t, &opts)).collect::<Result<Vec<_>, _>>()?;
        let header: Vec<String> = ["tau", "r", "pairs", "bad_pairs", "bad_mass"].map(String::from).to_vec();
        let rows = reports.iter().flat_map(|rep| {
            rep.scales.iter().map(move |s| vec![num(rep.tau), num(s.r), s.pairs.to_string(), s.bad_pairs.to_string(), num(s.bad_mass)])
        });
        art.csv("bwgl.csv", &header, rows)?;
        Ok(art.json("bwgl.json", &reports)?)
    }

    fn flow(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.flow.as_ref().ok_or_else(|| RunError::Rejected("flow section missing".into()))?;
        let engine = self.engine()?;
        let starts: Vec<Vec<f64>> = match (&sec.starts, sec.count) {
            (Some(s), _) => s.clone(),
            (None, Some(count)) => {
                let (lo, hi) = (sec.lo.clone().unwrap_or_default(), sec.hi.clone().unwrap_or_default());
                let min_delta = sec.min_delta.unwrap_or(2.0 * engine.resolution_floor());
                let mut rng = task_rng(self.seed, "flow:starts");
                let mut out = Vec::with_capacity(count);
                let mut attempts = 0usize;
                while out.len() < count {
                    attempts += 1;
                    if attempts > 1000 * count {
                        return Err(RunError::Budget(format!("only {} of {count} flow starts have δ ≥ {min_delta}", out.len())));
                    }
                    let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
                    if engine.delta(&x) >= min_delta {
                        out.push(x);
                    }
                }
                out
            }
            (None, None) => Vec::new(),
        };
        let ctrl = FlowControl {
            direction: if sec.direction == "ascent" { Direction::Ascent } else { Direction::Descent },
            rtol: sec.rtol.unwrap_or(FlowControl::default().rtol),
            max_steps: sec.max_steps.unwrap_or(FlowControl::default().max_steps),
            ..Default::default()
        };
        let traces: Vec<Result<regdist::flow::FlowTrace, FlowError>> = starts.par_iter().map(|x| integrate_flow(&engine, x, &ctrl)).collect();
        let n = self.n();
        let mut header = vec!["t".to_string()];
        header.extend(coords_header("phi", n));
        header.extend(["D", "delta"].map(String::from));
        #[derive(Serialize)]
        struct TraceSummary {
            x0: Vec<f64>,
            file: Option<String>,
            error: Option<String>,
            p: Option<Vec<f64>>,
            arc_length: Option<f64>,
            chord_deviation: Option<f64>,
            endpoint_gap: Option<f64>,
            terminal_delta: Option<f64>,
            d_strictly_decreasing: Option<bool>,
            reached_floor: Option<bool>,
        }
        let mut summaries = Vec::with_capacity(starts.len());
        let mut failed = 0;
        for (i, (x0, t)) in starts.iter().zip(traces).enumerate() {
            match t {
                Ok(tr) => {
                    let file = format!("traces/trace_{i:04}.csv");
                    let rows = tr.samples.iter().map(|s| {
                        let mut row = vec![num(s.t)];
                        row.extend(fmt_point(&s.phi));
                        row.extend([num(s.d), num(s.delta)]);
                        row
                    });
                    art.csv(&file, &header, rows)?;
                    let delta0 = tr.samples.first().map(|s| s.delta).unwrap_or(f64::NAN);
                    summaries.push(TraceSummary {
                        x0: x0.clone(),
                        file: Some(file),
                        error: None,
                        endpoint_gap: Some((dist(&tr.p, x0) - delta0).abs() / delta0),
                        d_strictly_decreasing: Some(tr.d_strictly_decreasing()),
                        p: Some(tr.p),
                        arc_length: Some(tr.arc_length),
                        chord_deviation: Some(tr.chord_deviation),
                        terminal_delta: Some(tr.terminal_delta),
                        reached_floor: Some(tr.reached_floor),
                    });
                }
                Err(e) => {
                    failed += 1;
                    summaries.push(TraceSummary {
                        x0: x0.clone(),
                        file: None,
                        error: Some(e.to_string()),
                        p: None,
                        arc_length: None,
                        chord_deviation: None,
                        endpoint_gap: None,
                        terminal_delta: None,
                        d_strictly_decreasing: None,
                        reached_floor: None,
                    });
                }
            }
        }
        let max_of = |f: fn(&TraceSummary) -> Option<f64>| summaries.iter().filter_map(f).fold(0.0, f64::max);
        let summary = serde_json::json!({
            "traces": summaries.len(),
            "failed": failed,
            "max_chord_deviation": max_of(|s| s.chord_deviation),
            "max_endpoint_gap": max_of(|s| s.endpoint_gap),
            "all_d_strictly_decreasing": summaries.iter().all(|s| s.d_strictly_decreasing != Some(false)),
            "per_trace": summaries,
        });
        art.note_unresolved("flow_summary.json", unresolved_fraction(failed, starts.len()));
        Ok(art.json("flow_summary.json", &summary)?)
    }

    fn ntlimit(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.ntlimit.as_ref().ok_or_else(|| RunError::Rejected("ntlimit section missing".into()))?;
        let engine = self.engine()?;
        let tol = sec.tol.unwrap_or(CONVERGENCE_TOL);
        let n = self.n();
        let bases = self.points(&sec.base);
        let mut header = coords_header("Q", n);
        header.extend(["eta", "r", "mean_gradD", "osc", "n_samples", "resolved"].map(String::from));
        let mut rows = Vec::new();
        let mut verdicts = Vec::with_capacity(bases.len());
        let mut unresolved = 0;
        for (i, q) in bases.iter().enumerate() {
            let cone = ConeSpec { q: q.clone(), eta: sec.eta, r_max: sec.r_max };
            cone.validate(&engine)?;
            let scales = cone.scales(engine.resolution_floor());
            let probe_seed: u64 = task_rng(self.seed, &format!("ntlimit:{i}")).gen();
            let probe = nt_probe(&engine, &cone, &scales, sec.per_scale, probe_seed, tol)?;
            for s in &probe.scales {
                let mut row = fmt_point(q);
                row.extend([num(sec.eta), num(s.r), num(s.mean), num(s.oscillation), s.n_samples.to_string(), s.resolved.to_string()]);
                rows.push(row);
            }
            unresolved += usize::from(probe.verdict == Verdict::Unresolved);
            let prediction = if sec.density_radii.is_empty() {
                None
            } else {
                let dp = density_estimate(self.m, engine.index(), q, &sec.density_radii);
                let predicted = dp.plateau.map(|t| predicted_limit(self.m.hausdorff_dim(), self.expo(), t)).transpose()?;
                Some(serde_json::json!({ "density": dp, "predicted_limit": predicted }))
            };
            verdicts.push(serde_json::json!({
                "q": q,
                "verdict": probe.verdict,
                "limit_estimate": probe.limit_estimate,
                "tail_oscillation": probe.tail_oscillation,
                "tol": probe.tol,
                "prediction": prediction,
            }));
        }
        art.csv("probe.csv", &header, rows)?;
        art.note_unresolved("verdicts.json", unresolved_fraction(unresolved, bases.len()));
        Ok(art.json("verdicts.json", &verdicts)?)
    }

    fn blowup(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.blowup.as_ref().ok_or_else(|| RunError::Rejected("blowup section missing".into()))?;
        let index = regdist::measure::SpatialIndex::build(self.m);
        let n = self.n();
        let mut header = coords_header("Q", n);
        header.extend(["r", "discrepancy", "fit_ratio", "probes"].map(String::from));
        let mut rows = Vec::new();
        let mut reports = Vec::new();
        for q in self.points(&sec.base) {
            let theta = match sec.theta {
                Some(t) => t,
                None => density_estimate(self.m, &index, &q, &sec.radii)
                    .plateau
                    .ok_or_else(|| RunError::Rejected(format!("no density plateau at {q:?}; set blowup.theta")))?,
            };
            let rep = blowup_compare(self.m, self.expo(), &q, &sec.radii, theta, sec.probes)?;
            for s in &rep.scales {
                let mut row = fmt_point(&q);
                row.extend([num(s.r), num(s.discrepancy), num(s.fit_ratio), s.probes.to_string()]);
                rows.push(row);
            }
            reports.push(rep);
        }
        art.csv("blowup.csv", &header, rows)?;
        Ok(art.json("blowup.json", &reports)?)
    }

    fn magic(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.magic.as_ref().ok_or_else(|| RunError::Rejected("magic section missing".into()))?;
        let (n, d) = (self.n(), self.m.hausdorff_dim());
        let mc = match sec.alpha {
            Some(a) => MagicConfig::with_alpha(n, d, a)?,
            None => MagicConfig::new(n, d)?,
        };
        let engine = self.engine_with(mc.kernel())?;
        let ladders = sec
            .ladder_points
            .iter()
            .map(|x| -> Result<_, RunError> {
                let lap = laplacian_r_residual(&engine, &mc, x)?;
                let op = if mc.is_magic() { Some(operator_residual(&engine, &mc, x)?) } else { None };
                Ok(serde_json::json!({ "laplacian_r": lap, "operator": op }))
            })
            .collect::<Result<Vec<_>, _>>()?;
        art.json("ladders.json", &serde_json::json!({ "config": mc, "flat_residual": mc.flat_residual(), "ladders": ladders }))?;
        let bases = self.points(&sec.base);
        if bases.is_empty() {
            return Ok(());
        }
        let budget = sec.budget.unwrap_or(CORKSCREW_BUDGET);
        let profiles = bases.iter().map(|q| omega_surrogate(&engine, q, &sec.radii, budget)).collect::<Result<Vec<_>, _>>()?;
        let mut header = coords_header("Q", n);
        header.push("r".into());
        header.extend(coords_header("A", n));
        header.extend(["delta_A", "D_A", "surrogate"].map(String::from));
        let mut rows = Vec::new();
        for p in &profiles {
            for ((c, da), s) in p.corkscrews.iter().zip(&p.d_at_a).zip(&p.profile) {
                let mut row = fmt_point(&p.q);
                row.push(num(c.r));
                row.extend(fmt_point(&c.a));
                row.extend([num(c.delta_a), num(*da), num(*s)]);
                rows.push(row);
            }
        }
        art.csv("magic.csv", &header, rows)?;
        let all = profiles.iter().flat_map(|p| p.profile.iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Ok(art.json("surrogate.json", &serde_json::json!({ "bases": profiles.len(), "radii": sec.radii, "spread": hi / lo, "profiles": profiles }))?)
    }

    fn bench(&self, art: &mut Artifacts) -> Result<(), RunError> {
        let sec = self.cfg.bench.as_ref().ok_or_else(|| RunError::Rejected("bench section missing".into()))?;
        let kernel = KernelParams::for_measure(self.m, self.expo())?;
        let direct = FieldEngine::new(self.m, kernel)?.with_kappa(self.cfg.kernel.kappa);
        let (lo, hi) = match (&sec.lo, &sec.hi) {
            (Some(l), Some(h)) => (l.clone(), h.clone()),
            _ => self.m.bounding_box(),
        };
        let floor = direct.resolution_floor();
        let mut rng = task_rng(self.seed, "bench:queries");
        let mut queries = Vec::with_capacity(sec.queries);
        let mut attempts = 0usize;
        while queries.len() < sec.queries {
            attempts += 1;
            if attempts > 1000 * sec.queries {
                return Err(RunError::Budget(format!("only {} of {} bench queries are resolved", queries.len(), sec.queries)));
            }
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
            if direct.delta(&x) >= floor {
                queries.push(x);
            }
        }
        let t0 = Instant::now();
        let exact: Vec<_> = queries.par_iter().map(|x| direct.sums_direct(x)).collect();
        let t_direct = t0.elapsed().as_secs_f64();
        art.note_time("direct_s", t_direct);
        let n = self.n();
        let expansion = match self.cfg.kernel.expansion.as_str() {
            "monopole" => Expansion::Monopole,
            "quadrupole" => Expansion::Quadrupole,
            _ => Expansion::Hexadecapole,
        };
        let mut results = Vec::new();
        for &theta in &sec.thetas {
            let tree = FieldEngine::new(self.m, kernel)?.with_kappa(self.cfg.kernel.kappa).with_summation(Summation::Tree(TreeOptions::new(theta, expansion)));
            let t0 = Instant::now();
            let approx: Vec<_> = queries.par_iter().map(|x| tree.sums(x)).collect();
            let t_tree = t0.elapsed().as_secs_f64();
            art.note_time(&format!("tree_theta_{theta}_s"), t_tree);
            art.note_time(&format!("speedup_theta_{theta}"), t_direct / t_tree);
            let mut err_r: f64 = 0.0;
            let mut err_g: f64 = 0.0;
            let mut bound_ok = true;
            for (e, (a, bound)) in exact.iter().zip(&approx) {
                let dr = (a.r - e.r).abs();
                err_r = err_r.max(dr / e.r);
                let gn = e.grad[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                let dg = e.grad[..n].iter().zip(&a.grad[..n]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                err_g = err_g.max(dg / gn);
                bound_ok &= dr <= bound * (1.0 + 1e-9) + 1e-14 * e.r;
            }
            results.push(serde_json::json!({ "theta": theta, "max_rel_err_r": err_r, "max_rel_err_grad": err_g, "within_error_model": bound_ok }));
        }
        Ok(art.json(
            "bench.json",
            &serde_json::json!({ "points": self.m.len(), "queries": queries.len(), "expansion": self.cfg.kernel.expansion, "results": results }),
        )?)
    }
}
