//! Command implementations behind the CLI: decomposition, ensemble simulation,
//! verification and report rendering, with a manifest per output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{ensemble_path, run_cascade_with, CascadeRun, CutoffParams, StopRecord};
use crate::config::{InitialConfig, Method, RunConfig};
use crate::decomposition::{decompose, DecompositionResult, LevelCertificate, NormMode};
use crate::error::{Error, Result};
use crate::initial::shear;
use crate::integrator::{simulate_path, PathResult, RunOptions, Snse, TimeGrid};
use crate::noise::{path_seed, NoiseModel};
use crate::spectral::format::write_field;
use crate::spectral::{Grid, SpectralField};
use crate::verifier::{
    cascade_consistency, level_bound_violations, poincare_survey, random_heat_data, survival_report,
    uniqueness_diagnostic, verify_heat_estimate, verify_main_energy, weak_form_residual, ConsistencyReport,
    HeatCase, HeatReport, InequalityReport, MainEnergyReports, PoincareReport, SurvivalReport, UniquenessReport,
    WeakFormReport,
};

pub const MANIFEST_SCHEMA: &str = "snse-manifest v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORTS_FILE: &str = "reports.json";

/// Exit status of the CLI for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => 2,
        Error::BlowUp { .. } | Error::LevelBound { .. } | Error::Construction { .. } => 3,
        _ => 1,
    }
}

/// Runs `f` on a pool of `workers` threads, or rayon's default pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

/// Everything derived from a validated config before any path is run.
pub struct Prepared {
    pub config: RunConfig,
    pub grid: Grid,
    pub time: TimeGrid,
    pub u0: SpectralField,
    pub noise: NoiseModel,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid.build()?;
        Ok(Self {
            time: config.time.build()?,
            u0: config.initial.build(&grid, config.cascade.mode)?,
            noise: NoiseModel::from_params(&config.noise)?,
            grid,
            config: config.clone(),
        })
    }

    pub fn with_datum(config: &RunConfig, u0: SpectralField) -> Result<Self> {
        let mut p = Self::new(&RunConfig {
            initial: InitialConfig::Zero,
            ..config.clone()
        })?;
        if u0.grid() != &p.grid {
            return Err(Error::Config(format!(
                "input field grid ({}D, n = {}) differs from the config grid",
                u0.grid().dim(),
                u0.grid().n()
            )));
        }
        p.u0 = u0;
        p.config.initial = config.initial.clone();
        Ok(p)
    }

    pub fn decompose(&self) -> Result<DecompositionResult> {
        let d = &self.config.decomposition;
        decompose(&self.u0, d.epsilon0, d.k_max, self.config.cascade.mode)
    }

    pub fn seed(&self, index: usize) -> u64 {
        path_seed(self.config.ensemble.base_seed, index as u64)
    }

    /// One cascade path; `dense` keeps the assembled trajectory.
    pub fn cascade_path(&self, d: &DecompositionResult, index: usize, dense: bool) -> Result<CascadeRun> {
        let path = ensemble_path(self.config.ensemble.base_seed, index, &self.time, self.noise.modes());
        run_cascade_with(d, &self.config.cascade, &self.noise, &self.time, &path, dense)
    }

    /// One path of the equation solved directly from `u0`.
    pub fn direct_path(&self, index: usize, dense: bool) -> Result<PathResult> {
        let path = ensemble_path(self.config.ensemble.base_seed, index, &self.time, self.noise.modes());
        let rhs = Snse {
            noise: self.noise.clone(),
        };
        simulate_path(&self.u0, &rhs, &self.time, &path, &[], RunOptions { dense })
    }

    pub fn cascade_ensemble(&self, d: &DecompositionResult) -> Result<Vec<CascadeRun>> {
        (0..self.config.ensemble.n_paths)
            .into_par_iter()
            .map(|i| self.cascade_path(d, i, false))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub mode: NormMode,
    pub epsilon0: f64,
    pub k0: f64,
    pub w0_norm: f64,
    pub split_r2: Option<f64>,
    pub levels: Vec<LevelCertificate>,
}

impl DecompositionRecord {
    fn of(d: &DecompositionResult) -> Self {
        Self {
            mode: d.mode,
            epsilon0: d.epsilon0,
            k0: d.k0,
            w0_norm: d.w0_norm,
            split_r2: d.split_r2,
            levels: d.certificates.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub index: usize,
    pub seed: u64,
    pub status: PathStatus,
    pub error: Option<String>,
    pub stops: Option<StopRecord>,
    pub untruncated: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Clean,
    /// Some but not all paths failed.
    Partial,
    Failed,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Clean => 0,
            RunStatus::Partial => 4,
            RunStatus::Failed => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Determinism record of one command. Contains no timestamps, so re-running
/// a manifest reproduces it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub code_version: String,
    pub command: String,
    pub config: RunConfig,
    pub input: Option<InputRecord>,
    pub decomposition: Option<DecompositionRecord>,
    pub thresholds: Option<CutoffParams>,
    pub paths: Vec<PathRecord>,
    pub status: Option<RunStatus>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            input: None,
            decomposition: None,
            thresholds: None,
            paths: Vec::new(),
            status: None,
            files: Vec::new(),
        }
    }

    /// Hashes every file under `out` except the manifest and writes it.
    fn finish(mut self, out: &Path) -> Result<Self> {
        self.files = inventory(out)?;
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(out.join(MANIFEST_FILE), text)?;
        Ok(self)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn inventory(out: &Path) -> Result<Vec<FileEntry>> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<FileEntry>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, acc)?;
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under the root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = fs::read(&path)?;
            acc.push(FileEntry {
                path: rel,
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(out, out, &mut files)?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Certificate of a decomposition, recomputed from the stored pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub decomposition: DecompositionRecord,
    /// Critical norm of `w₀ - Σ_k v₀^{(k)}` after the last level.
    pub reconstruction_residual: f64,
    /// `‖w₀‖/(3·4^{K_max})`.
    pub residual_bound: f64,
    /// Largest difference between certified and recomputed norms.
    pub recheck_deviation: f64,
    pub pass: bool,
}

pub struct DecomposeOutcome {
    pub certificate: Certificate,
    pub manifest: Manifest,
}

/// Splits and decomposes the datum (from `input` when given) into `out`.
pub fn cmd_decompose(config: &RunConfig, input: Option<&Path>, out: &Path) -> Result<DecomposeOutcome> {
    let (prepared, input_record) = match input {
        Some(p) => {
            let bytes = fs::read(p)?;
            let u0 = crate::spectral::format::decode(&bytes)?;
            (
                Prepared::with_datum(config, u0)?,
                Some(InputRecord {
                    path: p.display().to_string(),
                    sha256: sha256_hex(&bytes),
                }),
            )
        }
        None => (Prepared::new(config)?, None),
    };
    let d = prepared.decompose()?;
    fs::create_dir_all(out)?;
    let dir = out.join("decomposition");
    fs::create_dir_all(&dir)?;
    write_field(&dir.join("wbar0.snsf"), &d.w_bar_0)?;
    for (k, v) in d.levels.iter().enumerate() {
        write_field(&dir.join(format!("level_{k:02}.snsf")), v)?;
    }
    let reconstruction_residual = d.certificates.last().map_or(0.0, |c| c.residual);
    let residual_bound = d.w0_norm / (3.0 * 4f64.powi(d.k_max() as i32));
    let recheck_deviation = d.recheck()?;
    let scale = d.w0_norm.max(f64::MIN_POSITIVE);
    let certificate = Certificate {
        pass: d.certificates.iter().all(|c| c.critical <= c.bound)
            && reconstruction_residual <= residual_bound
            && recheck_deviation <= 1e-12 * scale.max(1.0),
        decomposition: DecompositionRecord::of(&d),
        reconstruction_residual,
        residual_bound,
        recheck_deviation,
    };
    write_json(&out.join("certificate.json"), &certificate)?;
    let mut manifest = Manifest::new("decompose", config);
    manifest.input = input_record;
    manifest.decomposition = Some(certificate.decomposition.clone());
    let manifest = manifest.finish(out)?;
    Ok(DecomposeOutcome { certificate, manifest })
}

enum PathOutput {
    Cascade(Box<CascadeRun>),
    Direct(PathResult),
}

fn write_path(dir: &Path, out: &PathOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dense = match out {
        PathOutput::Cascade(run) => {
            fs::write(dir.join("u.csv"), run.u.to_csv())?;
            fs::write(dir.join("w.csv"), run.w.to_csv())?;
            fs::write(dir.join("wbar.csv"), run.w_bar.to_csv())?;
            for (k, l) in run.levels.iter().enumerate() {
                fs::write(dir.join(format!("level_{k:02}.csv")), l.to_csv())?;
            }
            run.trajectory.as_deref()
        }
        PathOutput::Direct(r) => {
            fs::write(dir.join("u.csv"), r.ledger.to_csv())?;
            r.dense.as_ref().map(|d| d.fields.as_slice())
        }
    };
    if let Some(fields) = dense {
        let ddir = dir.join("dense");
        fs::create_dir_all(&ddir)?;
        for (n, f) in fields.iter().enumerate() {
            write_field(&ddir.join(format!("step_{n:06}.snsf")), f)?;
        }
    }
    Ok(())
}

pub struct SimulateOutcome {
    pub status: RunStatus,
    pub manifest: Manifest,
}

/// Runs the ensemble and writes one ledger directory per path. Paths are
/// computed in parallel batches and written by the calling thread.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<SimulateOutcome> {
    let prepared = Prepared::new(config)?;
    let dense = config.output.dense;
    let mut manifest = Manifest::new("simulate", config);
    let decomposition = match config.ensemble.method {
        Method::Cascade => {
            let d = prepared.decompose()?;
            manifest.decomposition = Some(DecompositionRecord::of(&d));
            manifest.thresholds = Some(CutoffParams::from_decomposition(&d, &config.cascade)?);
            Some(d)
        }
        Method::Direct => None,
    };
    fs::create_dir_all(out)?;
    let paths_dir = out.join("paths");
    let n = config.ensemble.n_paths;
    let batch = (2 * rayon::current_num_threads()).max(1);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let results: Vec<Result<PathOutput>> = (start..end)
            .into_par_iter()
            .map(|i| match &decomposition {
                Some(d) => prepared.cascade_path(d, i, dense).map(|r| PathOutput::Cascade(Box::new(r))),
                None => prepared.direct_path(i, dense).map(PathOutput::Direct),
            })
            .collect();
        for (i, r) in (start..end).zip(results) {
            let mut record = PathRecord {
                index: i,
                seed: prepared.seed(i),
                status: PathStatus::Ok,
                error: None,
                stops: None,
                untruncated: None,
            };
            match r {
                Ok(output) => {
                    if let PathOutput::Cascade(run) = &output {
                        record.stops = Some(run.stops.clone());
                        record.untruncated = Some(run.untruncated);
                    }
                    write_path(&paths_dir.join(format!("path_{i:04}")), &output)?;
                }
                Err(e) => {
                    if exit_code(&e) != 3 {
                        return Err(e);
                    }
                    record.status = PathStatus::Failed;
                    record.error = Some(e.to_string());
                }
            }
            manifest.paths.push(record);
        }
        start = end;
    }
    let failed = manifest.paths.iter().filter(|p| p.status == PathStatus::Failed).count();
    let status = if failed == 0 {
        RunStatus::Clean
    } else if failed < n {
        RunStatus::Partial
    } else {
        RunStatus::Failed
    };
    manifest.status = Some(status);
    let manifest = manifest.finish(out)?;
    Ok(SimulateOutcome { status, manifest })
}

/// Every report produced by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReports {
    pub mode: NormMode,
    pub n_paths: usize,
    pub energy: MainEnergyReports,
    pub survival: SurvivalReport,
    pub level_bound_violations: usize,
    pub heat: Vec<HeatReport>,
    pub poincare: Vec<PoincareReport>,
    pub uniqueness: UniquenessReport,
    pub weak_form: WeakFormReport,
    pub consistency: ConsistencyReport,
    pub all_pass: bool,
}

/// Heat cases on the run grid: a shear Ornstein–Uhlenbeck case at `p = 2`,
/// the unforced case, and random forcing and noise at `p = 3` and `p = 6`.
pub fn heat_cases(config: &RunConfig, grid: &Grid) -> Vec<HeatCase> {
    let h = &config.verify.heat;
    let d = grid.dim();
    let zero_rows = || vec![SpectralField::zeros(grid, d); d];
    let u0 = SpectralField::zero_vector(grid);
    let mut cases = vec![
        HeatCase {
            name: "heat-shear-p2".into(),
            p: 2.0,
            u0: u0.clone(),
            forcing: zero_rows(),
            columns: vec![shear(grid, h.shear_amplitude)],
        },
        HeatCase {
            name: "heat-unforced-p3".into(),
            p: 3.0,
            u0: u0.clone(),
            forcing: zero_rows(),
            columns: Vec::new(),
        },
    ];
    for (j, p) in [3.0, 6.0].into_iter().enumerate() {
        let seed = h.base_seed.wrapping_add(100 * (j as u64 + 1));
        cases.push(HeatCase {
            name: format!("heat-random-p{p}"),
            p,
            u0: u0.clone(),
            forcing: random_heat_data(grid, d, h.data_scale, seed),
            columns: random_heat_data(grid, h.data_columns, h.data_scale, seed + 1),
        });
    }
    cases
}

/// Runs the cascade ensemble and every verification.
pub fn verify_all(prepared: &Prepared) -> Result<VerifyReports> {
    let cfg = &prepared.config;
    let v = &cfg.verify;
    if cfg.ensemble.n_paths < 2 {
        return Err(Error::Config("ensemble.n_paths: verify needs at least 2 paths".into()));
    }
    let horizon = prepared.time.horizon;
    let d = prepared.decompose()?;
    let runs = prepared.cascade_ensemble(&d)?;
    let energy = verify_main_energy(&runs, &d, horizon)?;
    let survival = survival_report(&runs, horizon, v.survival_points)?;
    let violations = level_bound_violations(&runs);
    drop(runs);

    let heat = heat_cases(cfg, &prepared.grid)
        .iter()
        .map(|c| verify_heat_estimate(c, &prepared.time, v.heat.n_paths, v.heat.base_seed))
        .collect::<Result<Vec<_>>>()?;
    let spectrum = crate::initial::Spectrum::Flat {
        max_radius: v.poincare.max_radius,
    };
    let poincare = v
        .poincare
        .exponents
        .iter()
        .map(|&p| poincare_survey(&prepared.grid, p, v.poincare.n_fields, &spectrum, v.poincare.seed))
        .collect::<Result<Vec<_>>>()?;
    let u = &v.uniqueness;
    let utime = TimeGrid::new(u.horizon, prepared.time.dt, prepared.time.scheme)?;
    let uniqueness = uniqueness_diagnostic(
        &prepared.u0,
        &NoiseModel::from_params(&u.noise)?,
        &utime,
        u.perturbation,
        u.n_paths,
        u.base_seed,
        u.bound,
    )?;

    let w = &v.weak_form;
    let wgrid = Grid::new(cfg.grid.dim, w.n_per_axis)?;
    let weak_form = weak_form_residual(
        &w.initial.build(&wgrid, NormMode::L3)?,
        &NoiseModel::from_params(&w.noise)?,
        &w.params(),
    )?;

    let c = &v.consistency;
    let cgrid = Grid::new(cfg.grid.dim, c.n_per_axis)?;
    let cu0 = c.initial.build(&cgrid, cfg.cascade.mode)?;
    let cd = decompose(&cu0, cfg.decomposition.epsilon0, cfg.decomposition.k_max, cfg.cascade.mode)?;
    let ctime = TimeGrid::new(c.horizon, c.dt, prepared.time.scheme)?;
    let consistency = cascade_consistency(
        &cd,
        &cfg.cascade,
        &NoiseModel::from_params(&c.noise)?,
        &ctime,
        c.n_paths,
        c.base_seed,
    )?;

    let all_pass = energy.all_pass()
        && survival.pass
        && violations == 0
        && heat.iter().all(|h| h.report.pass)
        && poincare.iter().all(|p| p.pass)
        && uniqueness.pass
        && weak_form.pass
        && consistency.pass;
    Ok(VerifyReports {
        mode: cfg.cascade.mode,
        n_paths: cfg.ensemble.n_paths,
        energy,
        survival,
        level_bound_violations: violations,
        heat,
        poincare,
        uniqueness,
        weak_form,
        consistency,
        all_pass,
    })
}

fn pass_word(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

fn report_line(out: &mut String, r: &InequalityReport) {
    let _ = writeln!(
        out,
        "{:<24} C = {:<12.5e} C_half = {:<12.5e} ratio = {:<8.4} unstopped = {:>4}/{:<4} {}",
        r.name,
        r.implied_constant,
        r.half_constant,
        r.stability_ratio,
        r.unstopped_paths,
        r.n_paths,
        pass_word(r.pass)
    );
}

/// Plain-text table of all reports.
pub fn render_reports(r: &VerifyReports) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode {:?}, {} paths", r.mode, r.n_paths);
    let _ = writeln!(out, "\n[energy]");
    for rep in &r.energy.reports {
        report_line(&mut out, rep);
    }
    for rep in r.energy.level_reports.iter().flatten() {
        report_line(&mut out, rep);
    }
    for s in &r.energy.slopes {
        let _ = writeln!(
            out,
            "{:<24} slope = {:<12.5e} sigma = {:<12.5e} {}",
            s.name,
            s.slope,
            s.sigma,
            pass_word(s.pass)
        );
    }
    let _ = writeln!(out, "\n[stopping]");
    let s = &r.survival;
    let _ = writeln!(
        out,
        "{:<24} C = {:<12.5e} C_half = {:<12.5e} ratio = {:<8.4} monotone = {} {}",
        "survival-linear-bound",
        s.constant,
        s.half_constant,
        s.stability_ratio,
        s.curve.is_nondecreasing(),
        pass_word(s.pass)
    );
    let _ = writeln!(
        out,
        "{:<24} violations = {} {}",
        "level-pointwise-bound",
        r.level_bound_violations,
        pass_word(r.level_bound_violations == 0)
    );
    let _ = writeln!(out, "\n[heat]");
    for h in &r.heat {
        report_line(&mut out, &h.report);
    }
    let _ = writeln!(out, "\n[poincare]");
    for p in &r.poincare {
        let _ = writeln!(
            out,
            "{:<24} max = {:<12.5e} max_half = {:<12.5e} plateau = {:<8.4} {}",
            format!("poincare-p{}", p.p),
            p.max_full,
            p.max_half,
            p.plateau_ratio,
            pass_word(p.pass)
        );
    }
    let _ = writeln!(out, "\n[uniqueness]");
    let u = &r.uniqueness;
    let ratios: Vec<String> = u.ratios.iter().map(|(t, x)| format!("{t:.4}:{x:.4}")).collect();
    let _ = writeln!(
        out,
        "{:<24} ratios = {} bound = {} {}",
        "difference-growth",
        ratios.join(" "),
        u.bound,
        pass_word(u.pass)
    );
    let _ = writeln!(out, "\n[scheme]");
    let w = &r.weak_form;
    let ratios: Vec<String> = w.ratios.iter().map(|x| format!("{x:.4}")).collect();
    let _ = writeln!(
        out,
        "{:<24} halving ratios = {} (target 1.4142) {}",
        "weak-form-residual",
        ratios.join(" "),
        pass_word(w.pass)
    );
    let c = &r.consistency;
    let _ = writeln!(
        out,
        "{:<24} discrepancy = {:<12.5e} strong = {:<12.5e} order = {:<6.3} untruncated = {}/{} {}",
        "cascade-consistency",
        c.discrepancy,
        c.strong_error,
        c.observed_order,
        c.untruncated_paths,
        c.n_paths,
        pass_word(c.pass)
    );
    let _ = writeln!(out, "\noverall {}", pass_word(r.all_pass));
    out
}

fn survival_csv(s: &SurvivalReport) -> String {
    let mut out = String::from("# snse-survival v1\ndelta,probability,half_probability\n");
    for ((d, p), h) in s.curve.deltas.iter().zip(&s.curve.probabilities).zip(&s.half_curve.probabilities) {
        let _ = writeln!(out, "{d:.9},{p:.12e},{h:.12e}");
    }
    out
}

fn level_csv(e: &MainEnergyReports) -> String {
    let mut out =
        String::from("# snse-level-constants v1\nname,implied_constant,stderr,half_constant,stability_ratio,pass\n");
    for r in e.level_reports.iter().flatten() {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.name,
            r.implied_constant,
            r.constant_stderr(),
            r.half_constant,
            r.stability_ratio,
            r.pass as u8
        );
    }
    out
}

pub struct VerifyOutcome {
    pub reports: VerifyReports,
    pub manifest: Manifest,
}

pub fn cmd_verify(config: &RunConfig, out: &Path) -> Result<VerifyOutcome> {
    let prepared = Prepared::new(config)?;
    let reports = verify_all(&prepared)?;
    fs::create_dir_all(out)?;
    write_json(&out.join(REPORTS_FILE), &reports)?;
    fs::write(out.join("reports.txt"), render_reports(&reports))?;
    fs::write(out.join("survival.csv"), survival_csv(&reports.survival))?;
    fs::write(out.join("level_constants.csv"), level_csv(&reports.energy))?;
    let d = prepared.decompose()?;
    let mut manifest = Manifest::new("verify", config);
    manifest.decomposition = Some(DecompositionRecord::of(&d));
    manifest.thresholds = Some(CutoffParams::from_decomposition(&d, &config.cascade)?);
    manifest.paths = (0..config.ensemble.n_paths)
        .map(|i| PathRecord {
            index: i,
            seed: prepared.seed(i),
            status: PathStatus::Ok,
            error: None,
            stops: None,
            untruncated: None,
        })
        .collect();
    let manifest = manifest.finish(out)?;
    Ok(VerifyOutcome { reports, manifest })
}

/// Renders `reports.json` from a verify output directory.
pub fn cmd_report(dir: &Path) -> Result<(String, bool)> {
    let path: PathBuf = if dir.is_dir() { dir.join(REPORTS_FILE) } else { dir.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let reports: VerifyReports = serde_json::from_str(&text)?;
    Ok((render_reports(&reports), reports.all_pass))
}
