//! Experiment configuration, run records and the end-to-end pipelines.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gl::{make_boundary_data, minimize_f, radial_profile, vortex_seeds, EnergyBreakdown, GlSolution, MinimizerParams};
use crate::grid::DomainSpec;
use crate::io::{write_csv_rows, write_json};
use crate::pinning::{build_diluted, build_periodic, DilutedPinningSpec, PeriodicPinningSpec, PinningField};
use crate::s1::{minimize_j, BoundaryPhase, PerforatedDomain, Weight};
use crate::scalar::{solve_u, ScalarSolution, SolverParams};
use crate::vortex::{
    calibrated_c0, classify_discs, detect_zeros, min_modulus_away, pinning_report, separation_process, DetectOptions, DiscClassification,
    PinningReport, SeparationTrace, VortexSet,
};
use crate::Point;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PinningConfig {
    /// `a = 1` everywhere.
    Uniform,
    Periodic(PeriodicPinningSpec),
    Diluted(DilutedPinningSpec),
}

impl PinningConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            PinningConfig::Uniform => Ok(()),
            PinningConfig::Periodic(s) => s.validate(),
            PinningConfig::Diluted(s) => {
                if !(s.b > 0.0 && s.b < 1.0) {
                    return Err(Error::validation(format!("b must lie in (0, 1), got {}", s.b)));
                }
                s.omega.validate()
            }
        }
    }

    pub fn build(&self, dom: DomainSpec) -> Result<PinningField> {
        match self {
            PinningConfig::Uniform => PinningField::uniform(dom, 1.0),
            PinningConfig::Periodic(s) => build_periodic(s, dom),
            PinningConfig::Diluted(s) => build_diluted(s, dom),
        }
    }

    /// Size `lambda delta` of the (largest) inclusions.
    pub fn inclusion_scale(&self) -> Option<f64> {
        match self {
            PinningConfig::Uniform => None,
            PinningConfig::Periodic(s) => Some(s.lambda * s.delta),
            PinningConfig::Diluted(s) => Some(s.lambda * s.delta),
        }
    }

    fn cell_size(&self) -> Option<f64> {
        match self {
            PinningConfig::Uniform => None,
            PinningConfig::Periodic(s) => Some(s.delta),
            PinningConfig::Diluted(s) => Some(s.delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub scalar: SolverParams,
    #[serde(default)]
    pub minimizer: MinimizerParams,
    /// Number of minimizations per epsilon; restart 0 uses the unperturbed
    /// seeds.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    3
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { scalar: SolverParams::default(), minimizer: MinimizerParams::default(), restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Modulus threshold of the zero detector.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Smallest degree circle, in units of epsilon.
    #[serde(default = "default_min_radius")]
    pub min_radius_eps: f64,
    /// Radius of the balls excluded from the modulus check; defaults to
    /// `4 lambda delta`, or `10 eps` without inclusions.
    #[serde(default)]
    pub modulus_radius: Option<f64>,
    /// Bad discs have radius `eps^disc_alpha`.
    #[serde(default = "default_disc_alpha")]
    pub disc_alpha: f64,
    /// Bad-disc constant; calibrated on the homogeneous degree-one problem
    /// when absent.
    #[serde(default)]
    pub c0: Option<f64>,
}

fn default_disc_alpha() -> f64 {
    0.5
}

fn default_threshold() -> f64 {
    0.5
}

fn default_min_radius() -> f64 {
    3.0
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { threshold: 0.5, min_radius_eps: 3.0, modulus_radius: None, disc_alpha: 0.5, c0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    /// Outer radius and number of points of the radial profile solve.
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_profile_points")]
    pub profile_points: usize,
    /// When set, the grid spacing of each run is `h_over_eps * eps`.
    #[serde(default)]
    pub h_over_eps: Option<f64>,
}

fn default_r_max() -> f64 {
    40.0
}

fn default_profile_points() -> usize {
    8001
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig { r_max: 40.0, profile_points: 8001, h_over_eps: None }
    }
}

/// Lengths are in units of the domain (the unit disc has radius 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub pinning: PinningConfig,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    pub degree: i32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.pinning.validate()?;
        self.solver.scalar.validate()?;
        if self.eps.is_empty() {
            return Err(Error::validation("the epsilon schedule is empty"));
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::validation("every epsilon must lie in (0, 1)"));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::validation("the epsilon schedule must be strictly decreasing"));
        }
        if self.degree < 0 {
            return Err(Error::validation("experiments use a non-negative degree"));
        }
        if self.solver.restarts == 0 {
            return Err(Error::validation("at least one restart is required"));
        }
        if !(self.analysis.threshold > 0.0 && self.analysis.threshold < 1.0) {
            return Err(Error::validation("detection threshold must lie in (0, 1)"));
        }
        if let Some(r) = self.expansion.h_over_eps {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::validation("h_over_eps must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn domain_for(&self, eps: f64) -> DomainSpec {
        match self.expansion.h_over_eps {
            Some(r) => self.domain.with_h(r * eps),
            None => self.domain,
        }
    }
}

/// Parses TOML into `T`. Unknown keys are errors when `strict`, warnings
/// otherwise; the ignored key paths are returned.
pub fn parse_toml<T: DeserializeOwned>(text: &str, strict: bool) -> Result<(T, Vec<String>)> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::validation(format!("config: {e}")))?;
    let value = toml::Value::Table(table);
    let mut ignored = Vec::new();
    let out: T = serde_ignored::deserialize(value, |path| ignored.push(path.to_string()))
        .map_err(|e| Error::validation(format!("config: {e}")))?;
    if !ignored.is_empty() {
        if strict {
            return Err(Error::validation(format!("unknown config keys: {}", ignored.join(", "))));
        }
        for k in &ignored {
            log::warn!("ignoring unknown config key {k}");
        }
    }
    Ok((out, ignored))
}

pub fn load_toml<T: DeserializeOwned>(path: &Path, strict: bool) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_toml(&text, strict)?.0)
}

pub fn load_config(path: &Path, strict: bool) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = load_toml(path, strict)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Quantization,
    Expansion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { stage: String, message: String, exit_code: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartSummary {
    pub index: usize,
    pub seeds: Vec<Point>,
    pub energy: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationChecks {
    pub zeros: usize,
    pub all_degree_one: bool,
    /// Only with inclusions.
    pub all_inside: Option<bool>,
    /// Smallest `dist(x, boundary of omega_eps) / (lambda delta)`.
    pub min_normalized_distance: Option<f64>,
    pub min_pairwise_distance: Option<f64>,
    pub modulus_radius: f64,
    /// `None` when the excluded balls cover the domain.
    pub min_modulus_away: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationEntry {
    pub eps: f64,
    pub h: f64,
    pub nodes: usize,
    pub u_energy: f64,
    pub u_residual: f64,
    pub restarts: Vec<RestartSummary>,
    pub best_restart: usize,
    pub energy: EnergyBreakdown,
    pub initial_energy: f64,
    pub iterations: usize,
    pub residual: f64,
    pub vortices: VortexSet,
    pub pinning: Option<PinningReport>,
    pub checks: QuantizationChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionRow {
    pub eps: f64,
    pub h: f64,
    pub zeros: Vec<Point>,
    /// `a` at each zero.
    pub vortex_b: Vec<f64>,
    /// Minimal energy on the grid domain.
    pub f_energy: f64,
    /// Energy of the `J` solution between the grid domain and the exact
    /// boundary, completing `f_energy` to the whole domain.
    pub f_completion: f64,
    pub j_energy: f64,
    /// `sum_i b_i^2 (pi ln b_i + gamma)`.
    pub core: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaEstimate {
    pub r_max: f64,
    pub gamma: f64,
    pub gamma_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub software_version: String,
    pub kind: RunKind,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default)]
    pub quantization: Vec<QuantizationEntry>,
    #[serde(default)]
    pub expansion: Vec<ExpansionRow>,
    #[serde(default)]
    pub gamma: Option<GammaEstimate>,
    pub timings: Vec<Timing>,
}

impl RunRecord {
    fn new(kind: RunKind, cfg: &ExperimentConfig) -> Self {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            kind,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            status: RunStatus::Ok,
            quantization: vec![],
            expansion: vec![],
            gamma: None,
            timings: vec![],
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Copy with the wall-clock timings removed.
    pub fn without_timings(&self) -> RunRecord {
        RunRecord { timings: vec![], ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("record schema {} (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.config_hash.len() != 64 || !self.config_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Format("malformed config hash".into()));
        }
        match self.kind {
            RunKind::Quantization if !self.expansion.is_empty() => Err(Error::Format("quantization record with expansion rows".into())),
            RunKind::Expansion if !self.quantization.is_empty() => Err(Error::Format("expansion record with quantization entries".into())),
            _ => Ok(()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<RunRecord> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: RunRecord = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        rec.validate()?;
        Ok(rec)
    }

    fn fail(&mut self, stage: &str, e: &Error) {
        log::error!("{stage} failed: {e}");
        self.status = RunStatus::Failed { stage: stage.to_string(), message: e.to_string(), exit_code: e.exit_code() };
    }
}

struct Stopwatch<'a> {
    timings: &'a mut Vec<Timing>,
}

impl Stopwatch<'_> {
    fn time<T>(&mut self, stage: String, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push(Timing { stage, seconds: t.elapsed().as_secs_f64() });
        out
    }
}

/// Output of the shared build / solve-U / minimize stages at one epsilon.
pub struct SolvedCase {
    pub pinning: PinningField,
    pub u: ScalarSolution,
    /// Lowest-energy restart.
    pub best: GlSolution,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

/// Build, solve U and minimize F (with restarts) at the `index`-th epsilon.
pub fn solve_stages(cfg: &ExperimentConfig, index: usize) -> Result<SolvedCase> {
    cfg.validate()?;
    let eps = *cfg.eps.get(index).ok_or_else(|| Error::validation(format!("no epsilon with index {index}")))?;
    solve_case(cfg, index, eps, &mut vec![]).map_err(|(_, e)| e)
}

/// Restart seeds: the canonical seeds, then copies with every seed moved by
/// a uniform offset in `[-s, s]^2` (kept when the move leaves the domain).
fn restart_seeds(base: &[Point], restarts: usize, s: f64, dom: &DomainSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Point>> {
    let mut out = vec![base.to_vec()];
    for _ in 1..restarts {
        out.push(
            base.iter()
                .map(|&p| {
                    let q = p + Point::new(rng.random_range(-s..=s), rng.random_range(-s..=s));
                    if dom.distance_to_boundary(q) > s && dom.contains(q) {
                        q
                    } else {
                        p
                    }
                })
                .collect(),
        );
    }
    out
}

fn solve_case(cfg: &ExperimentConfig, index: usize, eps: f64, timings: &mut Vec<Timing>) -> std::result::Result<SolvedCase, (String, Error)> {
    let mut sw = Stopwatch { timings };
    let dom = cfg.domain_for(eps);
    let pinning = sw.time(format!("pinning[{index}]"), || cfg.pinning.build(dom)).map_err(|e| ("pinning".to_string(), e))?;
    let u = sw
        .time(format!("solve_u[{index}]"), || solve_u(&pinning, eps, &cfg.solver.scalar))
        .map_err(|e| ("solve_u".to_string(), e))?;
    let grid = pinning.grid().clone();
    let g = make_boundary_data(cfg.degree, &grid);
    let d = cfg.degree as usize;
    let base = vortex_seeds(if cfg.pinning.inclusion_scale().is_some() { Some(&pinning.geometry) } else { None }, &grid, d);
    let spread = cfg.pinning.cell_size().unwrap_or(0.1 * dom.inradius());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
    let seeds = restart_seeds(&base, cfg.solver.restarts, spread, &dom, &mut rng);
    let results: Vec<Result<GlSolution>> = sw.time(format!("minimize[{index}]"), || {
        seeds.par_iter().map(|s| minimize_f(&u.u, eps, &g, &cfg.solver.minimizer, s)).collect()
    });
    let mut summaries = Vec::with_capacity(results.len());
    let mut best: Option<(usize, GlSolution)> = None;
    let mut first_err = None;
    for (k, (r, s)) in results.into_iter().zip(seeds).enumerate() {
        match r {
            Ok(sol) => {
                summaries.push(RestartSummary { index: k, seeds: s, energy: Some(sol.energy.total), iterations: Some(sol.iterations), error: None });
                if best.as_ref().is_none_or(|(_, b)| sol.energy.total < b.energy.total) {
                    best = Some((k, sol));
                }
            }
            Err(e) => {
                summaries.push(RestartSummary { index: k, seeds: s, energy: None, iterations: None, error: Some(e.to_string()) });
                first_err.get_or_insert(e);
            }
        }
    }
    let (best_restart, best) = match best {
        Some(b) => b,
        None => return Err(("minimize".to_string(), first_err.expect("at least one restart"))),
    };
    Ok(SolvedCase { pinning, u, best, best_restart, restarts: summaries })
}

fn min_pairwise(points: &[Point]) -> Option<f64> {
    let mut m: Option<f64> = None;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = p.dist(*q);
            m = Some(m.map_or(d, |x| x.min(d)));
        }
    }
    m
}

fn detect(cfg: &ExperimentConfig, case: &SolvedCase, eps: f64) -> Result<VortexSet> {
    detect_zeros(
        &case.best.v,
        DetectOptions { threshold: cfg.analysis.threshold, min_radius: cfg.analysis.min_radius_eps * eps },
    )
}

/// Build pinning, solve U, minimize F with restarts, detect zeros, report the
/// pinning and the modulus away from the zeros, for every epsilon. Stage
/// errors are recorded and end the run.
pub fn run_quantization(cfg: &ExperimentConfig) -> RunRecord {
    let mut rec = RunRecord::new(RunKind::Quantization, cfg);
    if let Err(e) = cfg.validate() {
        rec.fail("config", &e);
        return rec;
    }
    for (index, &eps) in cfg.eps.iter().enumerate() {
        log::info!("quantization: eps = {eps}");
        let case = match solve_case(cfg, index, eps, &mut rec.timings) {
            Ok(c) => c,
            Err((stage, e)) => {
                rec.fail(&stage, &e);
                return rec;
            }
        };
        let t = Instant::now();
        let zeros = match detect(cfg, &case, eps) {
            Ok(z) => z,
            Err(e) => {
                rec.fail("detect", &e);
                return rec;
            }
        };
        let positions = zeros.positions();
        let scale = cfg.pinning.inclusion_scale();
        let report = scale.map(|s| pinning_report(&zeros, &case.pinning, s));
        let modulus_radius = cfg.analysis.modulus_radius.unwrap_or(scale.map_or(10.0 * eps, |s| 4.0 * s));
        let checks = QuantizationChecks {
            zeros: zeros.vortices.len(),
            all_degree_one: zeros.vortices.iter().all(|v| v.degree == 1),
            all_inside: report.as_ref().map(|r| r.zeros.iter().all(|z| z.inside)),
            min_normalized_distance: report
                .as_ref()
                .and_then(|r| r.zeros.iter().map(|z| z.normalized_distance).min_by(f64::total_cmp)),
            min_pairwise_distance: min_pairwise(&positions),
            modulus_radius,
            min_modulus_away: min_modulus_away(&case.best.v, &positions, modulus_radius),
        };
        rec.timings.push(Timing { stage: format!("analyze[{index}]"), seconds: t.elapsed().as_secs_f64() });
        rec.quantization.push(QuantizationEntry {
            eps,
            h: case.pinning.grid().h,
            nodes: case.pinning.grid().len(),
            u_energy: case.u.energy,
            u_residual: case.u.residual,
            restarts: case.restarts,
            best_restart: case.best_restart,
            energy: case.best.energy,
            initial_energy: case.best.initial_energy,
            iterations: case.best.iterations,
            residual: case.best.residual,
            vortices: zeros,
            pinning: report,
            checks,
        });
    }
    rec
}

/// Energy expansion sweep: per epsilon, the minimal energy `F`, the
/// constrained perforated energy `J` with holes of radius `eps` at the
/// detected zeros and weight `U^2`, and the residual `F - J - core` where
/// `core = sum_i b_i^2 (pi ln b_i + gamma)`, `b_i = a(x_i)`. The grid
/// energy is completed to the exact domain with the `J` solution on the thin
/// band the grid does not cover, where `|v| = 1` up to exponentially small
/// terms.
pub fn run_expansion(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    if cfg.eps.len() < 3 {
        return Err(Error::validation("the expansion sweep needs at least 3 epsilon values"));
    }
    let mut rec = RunRecord::new(RunKind::Expansion, cfg);
    let t = Instant::now();
    let prof = radial_profile(cfg.expansion.r_max, cfg.expansion.profile_points)?;
    rec.timings.push(Timing { stage: "radial_profile".into(), seconds: t.elapsed().as_secs_f64() });
    let gamma = prof.gamma;
    rec.gamma = Some(GammaEstimate { r_max: cfg.expansion.r_max, gamma, gamma_half: prof.gamma_half });
    for (index, &eps) in cfg.eps.iter().enumerate() {
        log::info!("expansion: eps = {eps}");
        let case = solve_case(cfg, index, eps, &mut rec.timings).map_err(|(_, e)| e)?;
        let zeros = detect(cfg, &case, eps)?;
        if zeros.vortices.len() != cfg.degree as usize || zeros.vortices.iter().any(|v| v.degree != 1) {
            return Err(Error::validation(format!(
                "expansion needs {} zeros of degree 1 at eps = {eps}, found degrees {:?}",
                cfg.degree,
                zeros.vortices.iter().map(|v| v.degree).collect::<Vec<_>>()
            )));
        }
        let positions = zeros.positions();
        let t = Instant::now();
        let dom = PerforatedDomain::new(cfg.domain_for(eps), positions.clone(), eps);
        let j = minimize_j(&dom, &Weight::USquared(&case.u.u), &BoundaryPhase::Degree(cfg.degree))?;
        rec.timings.push(Timing { stage: format!("minimize_j[{index}]"), seconds: t.elapsed().as_secs_f64() });
        let vortex_b: Vec<f64> = positions.iter().map(|&p| case.pinning.geometry.a(p)).collect();
        let core: f64 = vortex_b.iter().map(|b| b * b * (std::f64::consts::PI * b.ln() + gamma)).sum();
        let grid = case.pinning.grid();
        let outside = |x: Point| grid.locate(x).is_none();
        let completion = j.phase.boundary_band_energy(&dom.base, 3.0 * grid.h, &Weight::USquared(&case.u.u), &outside, 4);
        let f = case.best.energy.total;
        rec.expansion.push(ExpansionRow {
            eps,
            h: grid.h,
            zeros: positions,
            vortex_b,
            f_energy: f,
            f_completion: completion,
            j_energy: j.energy,
            core,
            residual: f + completion - j.energy - core,
        });
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub eps: f64,
    pub energy: EnergyBreakdown,
    pub vortices: VortexSet,
    pub pinning: Option<PinningReport>,
    pub c0: f64,
    pub discs: DiscClassification,
    /// Absent when no disc is bad.
    pub separation: Option<SeparationTrace>,
}

/// `c0` for which the most energetic disc of the homogeneous degree-one
/// minimizer sits at twice the threshold.
pub fn calibrate_c0(cfg: &ExperimentConfig, index: usize) -> Result<f64> {
    let mut hom = cfg.clone();
    hom.pinning = PinningConfig::Uniform;
    hom.degree = 1;
    hom.solver.restarts = 1;
    let case = solve_stages(&hom, index)?;
    let eps = cfg.eps[index];
    let all = classify_discs(&case.best.v, &case.u.u, eps, cfg.analysis.disc_alpha, 0.0)?;
    Ok(calibrated_c0(&all, eps))
}

/// Zeros, pinning report, bad discs and the separation of the bad-disc
/// centres (stopped at the disc radius) for a solved case.
pub fn analyze_case(cfg: &ExperimentConfig, index: usize, case: &SolvedCase, c0: f64) -> Result<AnalysisReport> {
    let eps = cfg.eps[index];
    let vortices = detect(cfg, case, eps)?;
    let pinning = cfg.pinning.inclusion_scale().map(|s| pinning_report(&vortices, &case.pinning, s));
    let discs = classify_discs(&case.best.v, &case.u.u, eps, cfg.analysis.disc_alpha, c0)?;
    let separation = if discs.bad.centers.is_empty() { None } else { Some(separation_process(&discs.bad.centers, discs.bad.radius)?) };
    Ok(AnalysisReport { eps, energy: case.best.energy, vortices, pinning, c0, discs, separation })
}

/// Files written by [`emit_plots`], relative to the bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotManifest {
    pub schema_version: u32,
    pub records: usize,
    pub files: Vec<String>,
}

pub const VORTEX_HEADER: [&str; 9] = ["config_hash", "kind", "eps", "index", "x", "y", "degree", "inside", "normalized_distance"];
pub const EXPANSION_HEADER: [&str; 9] = ["config_hash", "eps", "h", "f_energy", "f_completion", "j_energy", "core", "residual", "zeros"];

/// Writes `vortices.csv` (one row per vortex), `expansion.csv` (one row per
/// epsilon of every sweep) and `manifest.json` into `dir`.
pub fn emit_plots(records: &[RunRecord], dir: &Path) -> Result<PlotManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut vort = vec![];
    let mut exp = vec![];
    for r in records {
        let kind = match r.kind {
            RunKind::Quantization => "quantization",
            RunKind::Expansion => "expansion",
        };
        for q in &r.quantization {
            for (i, v) in q.vortices.vortices.iter().enumerate() {
                let pin = q.pinning.as_ref().and_then(|p| p.zeros.get(i));
                vort.push(vec![
                    r.config_hash.clone(),
                    kind.to_string(),
                    q.eps.to_string(),
                    i.to_string(),
                    v.position.x.to_string(),
                    v.position.y.to_string(),
                    v.degree.to_string(),
                    pin.map_or(String::new(), |p| p.inside.to_string()),
                    pin.map_or(String::new(), |p| p.normalized_distance.to_string()),
                ]);
            }
        }
        for e in &r.expansion {
            exp.push(vec![
                r.config_hash.clone(),
                e.eps.to_string(),
                e.h.to_string(),
                e.f_energy.to_string(),
                e.f_completion.to_string(),
                e.j_energy.to_string(),
                e.core.to_string(),
                e.residual.to_string(),
                e.zeros.len().to_string(),
            ]);
        }
    }
    write_csv_rows(&dir.join("vortices.csv"), &VORTEX_HEADER, &vort)?;
    write_csv_rows(&dir.join("expansion.csv"), &EXPANSION_HEADER, &exp)?;
    let manifest = PlotManifest {
        schema_version: SCHEMA_VERSION,
        records: records.len(),
        files: vec!["vortices.csv".into(), "expansion.csv".into()],
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
eps = [0.05, 0.04]
degree = 1

[domain]
h = 0.05
shape = { kind = "disc", radius = 1.0 }

[pinning]
kind = "uniform"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let (cfg, ignored): (ExperimentConfig, _) = parse_toml(MINIMAL, true).unwrap();
        assert!(ignored.is_empty());
        cfg.validate().unwrap();
        assert_eq!(cfg.solver.restarts, 3);
        assert_eq!(cfg.analysis.threshold, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected_in_strict_mode() {
        let text = format!("{MINIMAL}\n[solver]\nrestartz = 2\n");
        assert!(parse_toml::<ExperimentConfig>(&text, true).is_err());
        let (_, ignored) = parse_toml::<ExperimentConfig>(&text, false).unwrap();
        assert_eq!(ignored, vec!["solver.restartz".to_string()]);
    }

    #[test]
    fn schedule_must_decrease() {
        let (mut cfg, _): (ExperimentConfig, _) = parse_toml(MINIMAL, true).unwrap();
        cfg.eps = vec![0.02, 0.02];
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn hash_depends_on_content_only() {
        let (a, _): (ExperimentConfig, _) = parse_toml(MINIMAL, true).unwrap();
        let reordered = "degree = 1\neps = [0.05, 0.04]\n[pinning]\nkind = \"uniform\"\n[domain]\nshape = { kind = \"disc\", radius = 1.0 }\nh = 0.05\n";
        let (b, _): (ExperimentConfig, _) = parse_toml(reordered, true).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 7;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn restart_seeds_are_reproducible() {
        let dom = DomainSpec::disc(1.0, 0.05);
        let base = [Point::new(0.1, 0.0)];
        let a = restart_seeds(&base, 3, 0.25, &dom, &mut ChaCha8Rng::seed_from_u64(4));
        let b = restart_seeds(&base, 3, 0.25, &dom, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_eq!(a[0], base.to_vec());
        assert_ne!(a[1], a[0]);
    }
}
