use std::path::{Path, PathBuf};

use glpin::experiment::{
    analyze_case, calibrate_c0, emit_plots, load_toml, run_expansion, run_quantization, solve_stages, ExperimentConfig, RunRecord, RunStatus,
};
use glpin::grid::DomainSpec;
use glpin::homog::{homogenized_matrix, homogenized_phase, CellField, HomogenizedMatrix};
use glpin::io::{write_complex, write_history_csv, write_json, write_scalar, write_scalar_csv};
use glpin::pinning::{validate_scaling, Inclusion, UnitInclusion};
use glpin::s1::{
    calibrate_c_b, minimize_i, minimize_j, mu_ring, optimal_centers_search, renormalized_energy, BoundaryPhase, CentersResult,
    PerforatedDomain, RenormalizedEnergy, RingMode, RingResult, RingSpec, SearchOptions, Weight,
};
use glpin::scalar::{closeness_report, solve_u as solve_scalar, ClosenessEntry};
use glpin::{Error, Point, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Common;

fn config_path(c: &Common) -> Result<&Path> {
    c.config.as_deref().ok_or_else(|| Error::validation("--config is required"))
}

fn load<T: DeserializeOwned>(c: &Common) -> Result<T> {
    load_toml(config_path(c)?, c.strict)
}

fn experiment(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = load(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, configured: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = c.out.clone().or_else(|| configured.cloned()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

#[derive(Serialize)]
struct PinningSummary<'a> {
    b: f64,
    lambda: f64,
    delta: f64,
    omega: &'a UnitInclusion,
    inclusions: &'a [Inclusion],
    /// `|ln(lambda delta)|^3 / |ln eps|` per epsilon.
    scaling: Vec<(f64, f64)>,
    nodes: usize,
    h: f64,
}

pub fn pinning_build(c: &Common) -> Result<i32> {
    let cfg = experiment(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    let field = cfg.pinning.build(cfg.domain)?;
    let geo = &field.geometry;
    let scaling = cfg
        .eps
        .iter()
        .map(|&e| validate_scaling(e, geo.lambda, geo.delta).map(|s| (e, s)))
        .collect::<Result<Vec<_>>>()?;
    write_scalar(&out.join("a.bin"), &field.a)?;
    write_scalar_csv(&out.join("a.csv"), &field.a)?;
    write_json(
        &out.join("pinning.json"),
        &PinningSummary {
            b: geo.b,
            lambda: geo.lambda,
            delta: geo.delta,
            omega: &geo.omega,
            inclusions: &geo.inclusions,
            scaling,
            nodes: field.grid().len(),
            h: field.grid().h,
        },
    )?;
    log::info!("{} inclusions written to {}", geo.inclusions.len(), out.display());
    Ok(0)
}

#[derive(Serialize)]
struct USummary {
    eps: f64,
    energy: f64,
    residual: f64,
    closeness: Vec<ClosenessEntry>,
}

pub fn solve_u(c: &Common) -> Result<i32> {
    let cfg = experiment(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let field = cfg.pinning.build(cfg.domain)?;
        let sol = solve_scalar(&field, eps, &cfg.solver.scalar)?;
        let radii: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|m| m * eps).collect();
        let closeness = closeness_report(&sol.u, &field, &radii)?;
        write_scalar(&out.join(format!("u_{k}.bin")), &sol.u)?;
        write_history_csv(&out.join(format!("u_{k}_history.csv")), &sol.history)?;
        write_json(&out.join(format!("u_{k}.json")), &USummary { eps, energy: sol.energy, residual: sol.residual, closeness })?;
        log::info!("eps = {eps}: E(U) = {:.8}, residual {:.2e}", sol.energy, sol.residual);
    }
    Ok(0)
}

#[derive(Serialize)]
struct MinimizeSummary<'a> {
    eps: f64,
    energy: glpin::gl::EnergyBreakdown,
    initial_energy: f64,
    iterations: usize,
    residual: f64,
    best_restart: usize,
    restarts: &'a [glpin::experiment::RestartSummary],
}

pub fn minimize(c: &Common) -> Result<i32> {
    let cfg = experiment(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let case = solve_stages(&cfg, k)?;
        write_complex(&out, &format!("v_{k}"), &case.best.v)?;
        write_scalar(&out.join(format!("u_{k}.bin")), &case.u.u)?;
        write_history_csv(&out.join(format!("v_{k}_history.csv")), &case.best.history)?;
        write_json(
            &out.join(format!("minimize_{k}.json")),
            &MinimizeSummary {
                eps,
                energy: case.best.energy,
                initial_energy: case.best.initial_energy,
                iterations: case.best.iterations,
                residual: case.best.residual,
                best_restart: case.best_restart,
                restarts: &case.restarts,
            },
        )?;
        log::info!("eps = {eps}: F = {:.8} after {} iterations", case.best.energy.total, case.best.iterations);
    }
    Ok(0)
}

pub fn analyze(c: &Common) -> Result<i32> {
    let cfg = experiment(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let c0 = match cfg.analysis.c0 {
            Some(v) => v,
            None => {
                let v = calibrate_c0(&cfg, k)?;
                log::info!("eps = {eps}: calibrated c0 = {v:.4}");
                v
            }
        };
        let case = solve_stages(&cfg, k)?;
        let report = analyze_case(&cfg, k, &case, c0)?;
        log::info!(
            "eps = {eps}: {} zeros (total degree {}), {} bad discs",
            report.vortices.vortices.len(),
            report.vortices.total_degree(),
            report.discs.bad.centers.len()
        );
        write_json(&out.join(format!("analysis_{k}.json")), &report)?;
    }
    Ok(0)
}

#[derive(Deserialize)]
struct RingConfig {
    ring: RingSpec,
    /// Also report the calibrated constant `C_b` for the ring's `b`.
    #[serde(default)]
    calibrate: bool,
}

#[derive(Serialize)]
struct RingSummary {
    degree: RingResult,
    dirichlet: RingResult,
    gap: f64,
    c_b: Option<f64>,
}

pub fn ring(c: &Common) -> Result<i32> {
    let cfg: RingConfig = load(c)?;
    let out = out_dir(c, None)?;
    let degree = mu_ring(&cfg.ring, RingMode::Degree)?;
    let dirichlet = mu_ring(&cfg.ring, RingMode::Dirichlet)?;
    let c_b = if cfg.calibrate { Some(calibrate_c_b(cfg.ring.b)?) } else { None };
    let gap = dirichlet.energy - degree.energy;
    log::info!("mu = {:.10}, mu_dir = {:.10}", degree.energy, dirichlet.energy);
    write_json(&out.join("ring.json"), &RingSummary { degree, dirichlet, gap, c_b })?;
    Ok(0)
}

#[derive(Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
enum Problem {
    I,
    J,
}

fn both_problems() -> Vec<Problem> {
    vec![Problem::I, Problem::J]
}

#[derive(Deserialize)]
struct PerforatedConfig {
    domain: DomainSpec,
    holes: Vec<Point>,
    rho: f64,
    /// Degrees for the unconstrained problem (all 1 by default).
    #[serde(default)]
    degrees: Option<Vec<i32>>,
    /// Constant weight (1 by default).
    #[serde(default)]
    weight: Option<f64>,
    #[serde(default = "both_problems")]
    problems: Vec<Problem>,
    /// Compass search over the hole centers of the constrained problem.
    #[serde(default)]
    search: Option<SearchOptions>,
}

#[derive(Serialize)]
struct PhaseSummary {
    energy: f64,
    collar_energy: Option<f64>,
    rotations: Vec<f64>,
    rotation_residuals: Vec<f64>,
    iterations: usize,
    residual: f64,
    nodes: usize,
}

impl From<glpin::s1::PhaseSolution> for PhaseSummary {
    fn from(s: glpin::s1::PhaseSolution) -> Self {
        PhaseSummary {
            energy: s.energy,
            collar_energy: s.collar_energy,
            rotations: s.rotations,
            rotation_residuals: s.rotation_residuals,
            iterations: s.iterations,
            residual: s.residual,
            nodes: s.nodes,
        }
    }
}

#[derive(Serialize)]
struct PerforatedSummary {
    i: Option<PhaseSummary>,
    j: Option<PhaseSummary>,
    search: Option<CentersResult>,
}

pub fn perforated(c: &Common) -> Result<i32> {
    let cfg: PerforatedConfig = load(c)?;
    let out = out_dir(c, None)?;
    let dom = PerforatedDomain::new(cfg.domain, cfg.holes.clone(), cfg.rho);
    let alpha = Weight::Uniform(cfg.weight.unwrap_or(1.0));
    let d = cfg.holes.len() as i32;
    let g = BoundaryPhase::Degree(cfg.degrees.as_ref().map_or(d, |v| v.iter().sum()));
    let mut summary = PerforatedSummary { i: None, j: None, search: None };
    if cfg.problems.contains(&Problem::I) {
        let degrees = cfg.degrees.clone().unwrap_or_else(|| vec![1; cfg.holes.len()]);
        let s = minimize_i(&dom, &alpha, &degrees, &g)?;
        log::info!("I = {:.10}", s.energy);
        summary.i = Some(s.into());
    }
    if cfg.problems.contains(&Problem::J) {
        let s = minimize_j(&dom, &alpha, &BoundaryPhase::Degree(d))?;
        log::info!("J = {:.10}", s.energy);
        summary.j = Some(s.into());
    }
    if let Some(opts) = cfg.search {
        let r = optimal_centers_search(&cfg.domain, &alpha, cfg.rho, &cfg.holes, opts)?;
        log::info!("search: J = {:.10} after {} evaluations", r.energy, r.evaluations);
        summary.search = Some(r);
    }
    write_json(&out.join("perforated.json"), &summary)?;
    Ok(0)
}

#[derive(Deserialize)]
struct RenormConfig {
    domain: DomainSpec,
    points: Vec<Point>,
    #[serde(default)]
    rho: Option<f64>,
}

pub fn renorm(c: &Common) -> Result<i32> {
    let cfg: RenormConfig = load(c)?;
    let out = out_dir(c, None)?;
    let w: RenormalizedEnergy = renormalized_energy(&cfg.domain, &cfg.points, cfg.rho)?;
    log::info!("W = {:.8} (extrapolated), {:.8} (direct)", w.extrapolated, w.direct);
    write_json(&out.join("renorm.json"), &w)?;
    Ok(0)
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CellSpec {
    Constant {
        value: f64,
    },
    /// `h1` for `y1 < 1/2`, `h2` otherwise.
    Laminate {
        h1: f64,
        h2: f64,
    },
    /// `b^2` in `lambda omega` around the cell corners, 1 elsewhere.
    Inclusion {
        b: f64,
        lambda: f64,
        #[serde(default)]
        omega: UnitInclusion,
    },
}

#[derive(Deserialize)]
struct PhaseSpec {
    domain: DomainSpec,
    points: Vec<Point>,
    core: f64,
}

fn default_cells() -> usize {
    256
}

#[derive(Deserialize)]
struct HomogenizeConfig {
    #[serde(default = "default_cells")]
    n: usize,
    cell: CellSpec,
    #[serde(default)]
    phase: Option<PhaseSpec>,
}

#[derive(Serialize)]
struct HomogenizeSummary {
    matrix: HomogenizedMatrix,
    eigenvalues: [f64; 2],
    arithmetic_mean: f64,
    harmonic_mean: f64,
    distance_to_identity: f64,
    phase: Option<PhaseSummary>,
}

pub fn homogenize(c: &Common) -> Result<i32> {
    let cfg: HomogenizeConfig = load(c)?;
    let out = out_dir(c, None)?;
    let cell = match &cfg.cell {
        CellSpec::Constant { value } => CellField::constant(cfg.n, *value)?,
        CellSpec::Laminate { h1, h2 } => CellField::laminate(cfg.n, *h1, *h2)?,
        CellSpec::Inclusion { b, lambda, omega } => CellField::inclusion(cfg.n, *b, *lambda, omega)?,
    };
    let a = homogenized_matrix(&cell)?;
    log::info!("A = {:?}", a.entries);
    let phase = match &cfg.phase {
        Some(p) => {
            let g = BoundaryPhase::Degree(p.points.len() as i32);
            Some(homogenized_phase(a.entries, &p.domain, &p.points, &g, p.core)?.into())
        }
        None => None,
    };
    write_json(
        &out.join("homogenize.json"),
        &HomogenizeSummary {
            eigenvalues: a.eigenvalues(),
            arithmetic_mean: cell.arithmetic_mean(),
            harmonic_mean: cell.harmonic_mean(),
            distance_to_identity: a.distance_to_identity(),
            matrix: a,
            phase,
        },
    )?;
    Ok(0)
}

fn finish(rec: &RunRecord, out: &Path) -> Result<i32> {
    rec.save(&out.join("record.json"))?;
    match &rec.status {
        RunStatus::Ok => Ok(0),
        RunStatus::Failed { stage, message, exit_code } => {
            log::error!("run failed in {stage}: {message}");
            Ok(*exit_code)
        }
    }
}

pub fn quantization(c: &Common) -> Result<i32> {
    let cfg = experiment(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    let rec = run_quantization(&cfg);
    for q in &rec.quantization {
        log::info!(
            "eps = {}: {} zeros, degrees {:?}, min |v| away {:?}",
            q.eps,
            q.checks.zeros,
            q.vortices.vortices.iter().map(|v| v.degree).collect::<Vec<_>>(),
            q.checks.min_modulus_away
        );
    }
    finish(&rec, &out)
}

pub fn expansion(c: &Common) -> Result<i32> {
    let cfg = experiment(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    let rec = run_expansion(&cfg)?;
    for r in &rec.expansion {
        log::info!("eps = {}: F = {:.8}, J = {:.8}, residual {:+.6}", r.eps, r.f_energy, r.j_energy, r.residual);
    }
    emit_plots(std::slice::from_ref(&rec), &out.join("plots"))?;
    finish(&rec, &out)
}

pub fn plots(c: &Common, records: &[PathBuf]) -> Result<i32> {
    let out = out_dir(c, None)?;
    let recs = records.iter().map(|p| RunRecord::load(p)).collect::<Result<Vec<_>>>()?;
    let m = emit_plots(&recs, &out)?;
    log::info!("{} records, files {:?}", m.records, m.files);
    Ok(0)
}
