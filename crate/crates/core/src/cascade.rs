//! Truncated cascade: the bounded part `w̄` is solved first, then the pieces
//! `v^{(k)}` level by level against the stored trajectories of `w̄` and of the
//! partial sums `w^{(k-1)} = Σ_{l<k} v^{(l)}`, and finally
//! `u = w̄ + Σ_k v^{(k)}` is assembled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{DecompositionResult, NormMode};
use crate::error::{Error, Result};
use crate::integrator::{
    simulate_path, Monitor, RightHandSide, RunOptions, Snse, StepInput, TimeGrid, Watch,
};
use crate::ledger::{EnergyLedger, LedgerRow, RunningIntegrals};
use crate::noise::{path_seed, NoiseModel, WienerPath};
use crate::spectral::{advection, FieldDiagnostics, SpectralField};

/// Smooth monotone profile: one on `[0, 1]`, zero on `[2, ∞)`, and the quintic
/// smoothstep `(1-s)³(6s² + 3s + 1)` in `s = x - 1` between.
pub fn theta(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let s = x - 1.0;
        let r = 1.0 - s;
        r * r * r * (6.0 * s * s + 3.0 * s + 1.0)
    }
}

/// Rules turning a decomposition into cutoff thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeParams {
    pub epsilon1: f64,
    /// `K1 = k1_factor · K₀ + k1_offset`.
    pub k1_factor: f64,
    pub k1_offset: f64,
    /// `M_k = m_growth^k · max(m_floor, m_margin · ‖v₀^{(k)}‖)` in the
    /// subcritical norm.
    pub m_growth: f64,
    pub m_floor: f64,
    pub m_margin: f64,
    pub mode: NormMode,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            epsilon1: 0.2,
            k1_factor: 2.0,
            k1_offset: 1.0,
            m_growth: 2.0,
            m_floor: 1.0,
            m_margin: 8.0,
            mode: NormMode::L3,
        }
    }
}

/// Realized thresholds of one cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub mode: NormMode,
    pub epsilon1: f64,
    pub k1: f64,
    pub m: Vec<f64>,
}

impl CutoffParams {
    pub fn from_decomposition(d: &DecompositionResult, params: &CascadeParams) -> Result<Self> {
        if params.mode != d.mode {
            return Err(Error::Parameter(format!(
                "cascade mode {:?} differs from decomposition mode {:?}",
                params.mode, d.mode
            )));
        }
        if !(params.epsilon1 > 2.0 * d.epsilon0 && params.epsilon1 < 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon1 = {} must lie in (2·epsilon0, 1) = ({}, 1)",
                params.epsilon1,
                2.0 * d.epsilon0
            )));
        }
        let k1 = params.k1_factor * d.k0 + params.k1_offset;
        if !(k1 > 2.0 * d.k0) {
            return Err(Error::Parameter(format!(
                "K1 = {k1} must exceed 2·K0 = {}",
                2.0 * d.k0
            )));
        }
        if !(params.m_growth >= 1.0 && params.m_floor > 0.0 && params.m_margin > 1.0) {
            return Err(Error::Parameter(
                "need m_growth >= 1, m_floor > 0 and m_margin > 1".into(),
            ));
        }
        let mut m = Vec::with_capacity(d.levels.len());
        for (k, c) in d.certificates.iter().enumerate() {
            let cap = params.m_growth.powi(k as i32) * params.m_floor.max(params.m_margin * c.subcritical);
            debug_assert!(cap > c.subcritical);
            m.push(cap);
        }
        Ok(Self {
            mode: params.mode,
            epsilon1: params.epsilon1,
            k1,
            m,
        })
    }

    /// Threshold `ε₁/2^k` of `τ_k`.
    pub fn critical_threshold(&self, k: usize) -> f64 {
        self.epsilon1 / 2f64.powi(k as i32)
    }

    /// Pointwise bound `ε₁/2^{k-1}` every level must respect.
    pub fn level_bound(&self, k: usize) -> f64 {
        2.0 * self.critical_threshold(k)
    }

    /// Quantity compared with `ε₁/2^k`.
    pub fn critical_watch(&self) -> Watch {
        match self.mode {
            NormMode::L3 => Watch::L3,
            NormMode::H12 => Watch::H05Path,
        }
    }

    /// Quantity compared with `M_k` and `K1`.
    pub fn subcritical_watch(&self) -> Watch {
        match self.mode {
            NormMode::L3 => Watch::L6,
            NormMode::H12 => Watch::H1Path,
        }
    }

    /// Norm the pointwise level bound applies to.
    pub fn bounded_watch(&self) -> Watch {
        match self.mode {
            NormMode::L3 => Watch::L3,
            NormMode::H12 => Watch::H05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffValues {
    pub psi: f64,
    pub phi: f64,
    pub zeta: f64,
    pub psi_wbar: f64,
}

impl CutoffValues {
    pub const ONE: Self = Self {
        psi: 1.0,
        phi: 1.0,
        zeta: 1.0,
        psi_wbar: 1.0,
    };

    /// `ψ²φ²`
    pub fn drift_factor(&self) -> f64 {
        let a = self.psi * self.phi;
        a * a
    }

    /// `ψ²φ²ζψ_w̄`
    pub fn noise_factor(&self) -> f64 {
        self.drift_factor() * self.zeta * self.psi_wbar
    }

    fn to_vec(self) -> Vec<f64> {
        vec![self.psi, self.phi, self.zeta, self.psi_wbar]
    }
}

/// `ψ_k` and `φ_k` of level `k` from its norms and running integrals, with the
/// externally supplied `ζ_{k-1}` and `ψ_w̄`.
pub fn evaluate_cutoffs(
    params: &CutoffParams,
    level: usize,
    diag: &FieldDiagnostics,
    integrals: &RunningIntegrals,
    zeta: f64,
    psi_wbar: f64,
) -> CutoffValues {
    let sub = params.subcritical_watch().value(diag, integrals);
    let crit = params.critical_watch().value(diag, integrals);
    CutoffValues {
        psi: theta(sub / params.m[level]),
        phi: theta(crit / params.critical_threshold(level)),
        zeta,
        psi_wbar,
    }
}

/// `ψ_w̄` from the norms of `w̄`.
pub fn evaluate_psi_wbar(params: &CutoffParams, diag: &FieldDiagnostics, integrals: &RunningIntegrals) -> f64 {
    theta(params.subcritical_watch().value(diag, integrals) / params.k1)
}

/// `ζ_{k-1} = Π_{i<k} ψ_i`.
pub fn zeta(psis: &[f64]) -> f64 {
    psis.iter().product()
}

/// Right-hand side of one truncated level, without the Laplacian.
#[derive(Debug, Clone)]
pub struct LevelTerms {
    pub drift: SpectralField,
    /// `ψ²φ²ζψ_w̄ [σ(v + w + w̄)e_j - σ(w + w̄)e_j]`
    pub noise_columns: Vec<SpectralField>,
}

fn level_drift(
    v: &SpectralField,
    w_prev: Option<&SpectralField>,
    w_bar: Option<&SpectralField>,
    c: &CutoffValues,
) -> Result<Option<SpectralField>> {
    let a = c.drift_factor();
    if a == 0.0 || v.is_zero() {
        return Ok(None);
    }
    // The five advection terms are bilinear, so with B = ζw + ψ_w̄ w̄ they
    // collapse to (v+B)·∇v + v·∇B.
    let mut b: Option<SpectralField> = None;
    for (f, s) in [(w_prev, c.zeta), (w_bar, c.psi_wbar)] {
        if let Some(f) = f {
            if s != 0.0 && !f.is_zero() {
                match b.as_mut() {
                    Some(acc) => acc.axpy(s, f),
                    None => b = Some(f.scaled(s)),
                }
            }
        }
    }
    let mut out = match &b {
        Some(b) => {
            let mut o = advection(&(v + b), v)?;
            o += &advection(v, b)?;
            o
        }
        None => advection(v, v)?,
    };
    out.scale(-a);
    Ok(Some(out))
}

fn background(w_prev: Option<&SpectralField>, w_bar: Option<&SpectralField>, v: &SpectralField) -> SpectralField {
    let mut s = SpectralField::zeros(v.grid(), v.components());
    if let Some(w) = w_prev {
        s += w;
    }
    if let Some(w) = w_bar {
        s += w;
    }
    s
}

/// Drift and noise columns of level `k` at time `t`.
pub fn assemble_level_rhs(
    v: &SpectralField,
    w_prev: Option<&SpectralField>,
    w_bar: Option<&SpectralField>,
    cutoffs: &CutoffValues,
    noise: &NoiseModel,
    t: f64,
) -> Result<LevelTerms> {
    if let Some(w) = w_prev {
        v.check_same_grid(w)?;
    }
    if let Some(w) = w_bar {
        v.check_same_grid(w)?;
    }
    let drift = level_drift(v, w_prev, w_bar, cutoffs)?
        .unwrap_or_else(|| SpectralField::zeros(v.grid(), v.components()));
    let base = background(w_prev, w_bar, v);
    let hi = noise.columns(t, &(&base + v))?;
    let lo = noise.columns(t, &base)?;
    let c = cutoffs.noise_factor();
    let noise_columns = hi.iter().zip(&lo).map(|(h, l)| &(h - l) * c).collect();
    Ok(LevelTerms { drift, noise_columns })
}

/// One level of the cascade, driven by stored lower-level trajectories.
struct LevelRhs<'a> {
    level: usize,
    params: &'a CutoffParams,
    noise: &'a NoiseModel,
    w_prev: Option<&'a [SpectralField]>,
    w_bar: Option<&'a [SpectralField]>,
    zeta: &'a [f64],
    psi_wbar: &'a [f64],
}

impl RightHandSide for LevelRhs<'_> {
    fn noise_modes(&self) -> usize {
        self.noise.modes()
    }

    fn cutoff_names(&self) -> Vec<String> {
        ["psi", "phi", "zeta", "psi_wbar"].map(String::from).to_vec()
    }

    fn cutoffs(&self, input: &StepInput) -> Result<Vec<f64>> {
        Ok(evaluate_cutoffs(
            self.params,
            self.level,
            input.diag,
            input.integrals,
            self.zeta[input.step],
            self.psi_wbar[input.step],
        )
        .to_vec())
    }

    fn drift(&self, input: &StepInput, cutoffs: &[f64]) -> Result<Option<SpectralField>> {
        let c = values(cutoffs);
        level_drift(
            input.u,
            self.w_prev.map(|w| &w[input.step]),
            self.w_bar.map(|w| &w[input.step]),
            &c,
        )
    }

    fn noise(&self, input: &StepInput, cutoffs: &[f64], dw: &[f64]) -> Result<Option<SpectralField>> {
        let c = values(cutoffs).noise_factor();
        if c == 0.0 || self.noise.is_zero() || input.u.is_zero() {
            return Ok(None);
        }
        let base = background(
            self.w_prev.map(|w| &w[input.step]),
            self.w_bar.map(|w| &w[input.step]),
            input.u,
        );
        let mut g = self.noise.apply(input.t, &(&base + input.u), dw)?;
        g -= &self.noise.apply(input.t, &base, dw)?;
        g.scale(c);
        Ok(Some(g))
    }
}

fn values(c: &[f64]) -> CutoffValues {
    CutoffValues {
        psi: c[0],
        phi: c[1],
        zeta: c[2],
        psi_wbar: c[3],
    }
}

/// Remainder equation for `w = u - w̄` with `w̄` prescribed:
/// `dw = (Δw - 𝒫(w·∇w + w·∇w̄ + w̄·∇w)) dt + [σ(w + w̄) - σ(w̄)] dW`.
pub struct Remainder<'a> {
    pub noise: &'a NoiseModel,
    pub w_bar: Option<&'a [SpectralField]>,
}

impl RightHandSide for Remainder<'_> {
    fn noise_modes(&self) -> usize {
        self.noise.modes()
    }

    fn drift(&self, input: &StepInput, _: &[f64]) -> Result<Option<SpectralField>> {
        level_drift(
            input.u,
            None,
            self.w_bar.map(|w| &w[input.step]),
            &CutoffValues::ONE,
        )
    }

    fn noise(&self, input: &StepInput, _: &[f64], dw: &[f64]) -> Result<Option<SpectralField>> {
        if self.noise.is_zero() || input.u.is_zero() {
            return Ok(None);
        }
        let base = background(None, self.w_bar.map(|w| &w[input.step]), input.u);
        let mut g = self.noise.apply(input.t, &(&base + input.u), dw)?;
        g -= &self.noise.apply(input.t, &base, dw)?;
        Ok(Some(g))
    }
}

/// First-hit times of one cascade path; `None` means not hit by the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StopRecord {
    /// First time the critical quantity of level `k` reaches `ε₁/2^k`.
    pub tau: Vec<Option<f64>>,
    /// First time the subcritical quantity of level `k` reaches `M_k`.
    pub rho: Vec<Option<f64>>,
    /// `τ^k = min_{l ≤ k} τ_l ∧ ρ_l`.
    pub tau_running: Vec<Option<f64>>,
    /// `τ_w = min_k τ^k`.
    pub tau_w: Option<f64>,
    /// First time the subcritical quantity of `w̄` reaches `K1`.
    pub tau_wbar: Option<f64>,
}

impl StopRecord {
    /// End of the interval on which `u` is reported valid.
    pub fn valid_until(&self, horizon: f64) -> f64 {
        opt_min(self.tau_w, self.tau_wbar).unwrap_or(horizon)
    }
}

fn opt_min(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

#[derive(Debug, Clone)]
pub struct CascadeRun {
    pub thresholds: CutoffParams,
    pub w_bar: EnergyLedger,
    pub levels: Vec<EnergyLedger>,
    /// Ledger of `w = Σ_k v^{(k)}`.
    pub w: EnergyLedger,
    /// Ledger of the assembled `u = w̄ + w`.
    pub u: EnergyLedger,
    pub u_final: SpectralField,
    pub w_bar_final: SpectralField,
    pub w_final: SpectralField,
    pub stops: StopRecord,
    /// True when every cutoff stayed at one on `[0, T]`.
    pub untruncated: bool,
    /// `u` at every step, when requested.
    pub trajectory: Option<Vec<SpectralField>>,
}

/// Ledger of a stored trajectory, with integrals accumulated as in the
/// integrator.
pub fn ledger_of(fields: &[SpectralField], time: &TimeGrid) -> EnergyLedger {
    let mut ledger = EnergyLedger::new(Vec::new());
    let mut integrals = RunningIntegrals::default();
    let mut prev: Option<FieldDiagnostics> = None;
    for (n, f) in fields.iter().enumerate() {
        let diag = FieldDiagnostics::compute(f);
        if let Some(p) = &prev {
            integrals.advance(time.dt, p, &diag);
        }
        ledger.push(
            LedgerRow {
                t: time.time(n),
                diag,
                integrals,
                frozen: false,
            },
            Vec::new(),
        );
        prev = Some(diag);
    }
    ledger
}

fn dense_fields(r: crate::integrator::PathResult) -> Vec<SpectralField> {
    r.dense.expect("dense output requested").fields
}

/// Solves `w̄` (frozen once its subcritical quantity reaches `K1`).
pub fn solve_w_bar(
    w_bar_0: &SpectralField,
    thresholds: &CutoffParams,
    noise: &NoiseModel,
    time: &TimeGrid,
    path: &WienerPath,
) -> Result<(EnergyLedger, Vec<SpectralField>, Option<f64>)> {
    let monitor = Monitor {
        watch: thresholds.subcritical_watch(),
        threshold: thresholds.k1,
    };
    let rhs = Snse { noise: noise.clone() };
    let r = simulate_path(w_bar_0, &rhs, time, path, &[monitor], RunOptions { dense: true })?;
    let stopped = r.stopped_at;
    let ledger = r.ledger.clone();
    Ok((ledger, dense_fields(r), stopped))
}

/// Runs the full cascade on one Brownian path.
pub fn run_cascade(
    decomposition: &DecompositionResult,
    params: &CascadeParams,
    noise: &NoiseModel,
    time: &TimeGrid,
    path: &WienerPath,
) -> Result<CascadeRun> {
    run_cascade_with(decomposition, params, noise, time, path, false)
}

/// [`run_cascade`], optionally keeping the assembled trajectory.
pub fn run_cascade_with(
    decomposition: &DecompositionResult,
    params: &CascadeParams,
    noise: &NoiseModel,
    time: &TimeGrid,
    path: &WienerPath,
    keep_trajectory: bool,
) -> Result<CascadeRun> {
    let thresholds = CutoffParams::from_decomposition(decomposition, params)?;
    let steps = time.steps();
    let grid = decomposition.w_bar_0.grid().clone();
    let comps = decomposition.w_bar_0.components();

    let (w_bar_ledger, w_bar_traj, tau_wbar) =
        solve_w_bar(&decomposition.w_bar_0, &thresholds, noise, time, path)?;
    let w_bar_active = w_bar_traj.iter().any(|f| !f.is_zero());
    let psi_wbar: Vec<f64> = w_bar_ledger
        .rows
        .iter()
        .map(|r| evaluate_psi_wbar(&thresholds, &r.diag, &r.integrals))
        .collect();

    let mut partial: Vec<SpectralField> = vec![SpectralField::zeros(&grid, comps); steps + 1];
    let mut partial_active = false;
    let mut zeta_trace = vec![1.0; steps + 1];
    let mut untruncated = psi_wbar.iter().all(|&p| p == 1.0);
    let mut levels = Vec::with_capacity(decomposition.levels.len());
    let mut stops = StopRecord {
        tau_wbar,
        ..StopRecord::default()
    };
    let mut running: Option<f64> = None;

    for (k, v0) in decomposition.levels.iter().enumerate() {
        let rhs = LevelRhs {
            level: k,
            params: &thresholds,
            noise,
            w_prev: partial_active.then_some(partial.as_slice()),
            w_bar: w_bar_active.then_some(w_bar_traj.as_slice()),
            zeta: &zeta_trace,
            psi_wbar: &psi_wbar,
        };
        let r = simulate_path(v0, &rhs, time, path, &[], RunOptions { dense: true })?;
        let ledger = r.ledger.clone();
        let fields = dense_fields(r);

        let bound = thresholds.level_bound(k);
        let bounded = thresholds.bounded_watch();
        for row in &ledger.rows {
            let norm = bounded.of_row(row);
            if norm > bound * (1.0 + 1e-12) {
                return Err(Error::LevelBound {
                    level: k,
                    t: row.t,
                    norm,
                    bound,
                });
            }
        }
        let tau = ledger.first_hit(|r| thresholds.critical_watch().of_row(r), thresholds.critical_threshold(k));
        let rho = ledger.first_hit(|r| thresholds.subcritical_watch().of_row(r), thresholds.m[k]);
        running = opt_min(running, opt_min(tau, rho));
        stops.tau.push(tau);
        stops.rho.push(rho);
        stops.tau_running.push(running);

        for (z, c) in zeta_trace.iter_mut().zip(&ledger.cutoffs) {
            *z *= c[0];
        }
        untruncated &= ledger.cutoffs.iter().all(|c| c[0] == 1.0 && c[1] == 1.0);
        if fields.iter().any(|f| !f.is_zero()) {
            for (p, f) in partial.iter_mut().zip(&fields) {
                *p += f;
            }
            partial_active = true;
        }
        levels.push(ledger);
    }
    stops.tau_w = running;

    let assembled: Vec<SpectralField> = partial.iter().zip(&w_bar_traj).map(|(w, b)| w + b).collect();
    let w = ledger_of(&partial, time);
    let u = ledger_of(&assembled, time);
    Ok(CascadeRun {
        thresholds,
        w_bar: w_bar_ledger,
        levels,
        w,
        u,
        u_final: assembled[steps].clone(),
        w_bar_final: w_bar_traj[steps].clone(),
        w_final: partial[steps].clone(),
        stops,
        untruncated,
        trajectory: keep_trajectory.then_some(assembled),
    })
}

/// `w̄` and `w` solved without the cascade: the `w̄` equation followed by the
/// remainder equation on the same path. Returns `(w̄(T), w(T))`.
pub fn run_monolithic(
    decomposition: &DecompositionResult,
    params: &CascadeParams,
    noise: &NoiseModel,
    time: &TimeGrid,
    path: &WienerPath,
) -> Result<(SpectralField, SpectralField)> {
    let thresholds = CutoffParams::from_decomposition(decomposition, params)?;
    let (_, w_bar_traj, _) = solve_w_bar(&decomposition.w_bar_0, &thresholds, noise, time, path)?;
    let active = w_bar_traj.iter().any(|f| !f.is_zero());
    let rhs = Remainder {
        noise,
        w_bar: active.then_some(w_bar_traj.as_slice()),
    };
    let r = simulate_path(&decomposition.w0(), &rhs, time, path, &[], RunOptions::default())?;
    Ok((w_bar_traj[time.steps()].clone(), r.u))
}

/// Brownian path used by path `index` of an ensemble.
pub fn ensemble_path(base_seed: u64, index: usize, time: &TimeGrid, modes: usize) -> WienerPath {
    WienerPath::new(path_seed(base_seed, index as u64), time.dt, modes)
}

/// Empirical `P(τ_w < δ)` for each `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub deltas: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub n_paths: usize,
}

impl SurvivalCurve {
    pub fn from_stops(stops: &[Option<f64>], deltas: &[f64]) -> Self {
        let n = stops.len().max(1) as f64;
        let probabilities = deltas
            .iter()
            .map(|&d| stops.iter().filter(|s| matches!(s, Some(t) if *t < d)).count() as f64 / n)
            .collect();
        Self {
            deltas: deltas.to_vec(),
            probabilities,
            n_paths: stops.len(),
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.probabilities.windows(2).all(|w| w[1] >= w[0])
    }

    /// `max_δ P(τ_w < δ)/δ`.
    pub fn linear_constant(&self) -> f64 {
        self.deltas
            .iter()
            .zip(&self.probabilities)
            .map(|(d, p)| p / d)
            .fold(0.0, f64::max)
    }
}

/// Runs `n_paths` cascades and tabulates `P(τ_w < δ)`.
pub fn stopping_time_survey(
    decomposition: &DecompositionResult,
    params: &CascadeParams,
    noise: &NoiseModel,
    time: &TimeGrid,
    base_seed: u64,
    deltas: &[f64],
    n_paths: usize,
) -> Result<SurvivalCurve> {
    if n_paths < 32 {
        return Err(Error::Usage(format!("a survey needs at least 32 paths, got {n_paths}")));
    }
    let stops = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = ensemble_path(base_seed, i, time, noise.modes());
            run_cascade(decomposition, params, noise, time, &path).map(|r| r.stops.tau_w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurvivalCurve::from_stops(&stops, deltas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::decompose;
    use crate::initial::{normalized, random_solenoidal, shear, Spectrum};
    use crate::integrator::Scheme;
    use crate::noise::NoiseParams;
    use crate::spectral::{nonlinear_term, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_plateaus_and_monotone() {
        assert_eq!(theta(0.3), 1.0);
        assert_eq!(theta(1.0), 1.0);
        assert_eq!(theta(2.0), 0.0);
        assert_eq!(theta(7.0), 0.0);
        let xs: Vec<f64> = (0..=100).map(|i| 1.0 + i as f64 / 100.0).collect();
        assert!(xs.windows(2).all(|w| theta(w[1]) <= theta(w[0])));
    }

    fn small_decomposition(g: &Grid, seed: u64) -> DecompositionResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = Spectrum::Exponential {
            length: 1.5,
            max_radius: 5.0,
        };
        let u0 = normalized(&random_solenoidal(g, &spec, &mut rng), 3.0, 0.6).unwrap();
        decompose(&u0, 0.05, 4, NormMode::L3).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        let p = CutoffParams {
            mode: NormMode::L3,
            epsilon1: 0.2,
            k1: 3.0,
            m: vec![1.0; 3],
        };
        let tiny = FieldDiagnostics::default();
        let c = evaluate_cutoffs(&p, 1, &tiny, &RunningIntegrals::default(), 1.0, 1.0);
        assert_eq!(c, CutoffValues::ONE);
        let d = FieldDiagnostics {
            l3: 2.0 * 0.2 / 4.0,
            ..Default::default()
        };
        let c = evaluate_cutoffs(&p, 2, &d, &RunningIntegrals::default(), 1.0, 1.0);
        assert_eq!(c.phi, 0.0);
        assert_eq!(zeta(&[0.5, 0.8]), 0.4);
        assert_eq!(zeta(&[]), 1.0);
    }

    #[test]
    fn zero_level_has_zero_rhs() {
        let g = Grid::new(2, 16).unwrap();
        let noise = NoiseModel::from_params(&NoiseParams::default()).unwrap();
        let v = SpectralField::zero_vector(&g);
        let w = shear(&g, 0.3);
        let t = assemble_level_rhs(&v, Some(&w), Some(&w), &CutoffValues::ONE, &noise, 0.0).unwrap();
        assert!(t.drift.is_zero());
        assert!(t.noise_columns.iter().all(|c| c.is_zero()));
    }

    #[test]
    fn partial_sums_telescope_to_the_remainder_equation() {
        let g = Grid::new(2, 16).unwrap();
        let d = small_decomposition(&g, 3);
        let noise = NoiseModel::from_params(&NoiseParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w_bar = random_solenoidal(&g, &Spectrum::Flat { max_radius: 2.0 }, &mut rng);
        let mut drift = SpectralField::zero_vector(&g);
        let mut cols = vec![SpectralField::zero_vector(&g); noise.modes()];
        let mut w_prev = SpectralField::zero_vector(&g);
        for v in &d.levels {
            let t = assemble_level_rhs(v, Some(&w_prev), Some(&w_bar), &CutoffValues::ONE, &noise, 0.0).unwrap();
            drift += &t.drift;
            for (a, b) in cols.iter_mut().zip(&t.noise_columns) {
                *a += b;
            }
            w_prev += v;
        }
        let w = d.w0();
        let u = &w + &w_bar;
        let expect = &nonlinear_term(&w_bar).unwrap() - &nonlinear_term(&u).unwrap();
        let scale = expect.coefficient_energy().sqrt();
        assert!(drift.max_coefficient_distance(&expect) <= 1e-10 * scale.max(1.0));
        let hi = noise.columns(0.0, &u).unwrap();
        let lo = noise.columns(0.0, &w_bar).unwrap();
        for ((c, h), l) in cols.iter().zip(&hi).zip(&lo) {
            assert!(c.max_coefficient_distance(&(h - l)) < 1e-12);
        }
    }

    #[test]
    fn zero_datum_stays_zero() {
        let g = Grid::new(2, 16).unwrap();
        let d = decompose(&SpectralField::zero_vector(&g), 0.05, 3, NormMode::L3).unwrap();
        let noise = NoiseModel::from_params(&NoiseParams::default()).unwrap();
        let time = TimeGrid::new(0.05, 0.01, Scheme::ExponentialEm).unwrap();
        let r = run_cascade(&d, &CascadeParams::default(), &noise, &time, &ensemble_path(1, 0, &time, noise.modes()))
            .unwrap();
        assert!(r.u_final.is_zero());
        assert_eq!(r.stops.tau_w, None);
        assert_eq!(r.stops.valid_until(0.05), 0.05);
    }

    #[test]
    fn single_small_mode_matches_direct_solve() {
        let g = Grid::new(2, 16).unwrap();
        let u0 = shear(&g, 0.02);
        let d = decompose(&u0, 0.05, 3, NormMode::L3).unwrap();
        let noise = NoiseModel::zero(4);
        let time = TimeGrid::new(0.1, 0.01, Scheme::ExponentialEm).unwrap();
        let path = WienerPath::new(0, 0.01, 4);
        let r = run_cascade(&d, &CascadeParams::default(), &noise, &time, &path).unwrap();
        let direct = simulate_path(&u0, &Snse { noise }, &time, &path, &[], RunOptions::default()).unwrap();
        assert!(r.u_final.max_coefficient_distance(&direct.u) < 1e-8);
        assert!(d.levels[1..].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn cascade_matches_monolithic_while_untruncated() {
        let g = Grid::new(2, 16).unwrap();
        let d = small_decomposition(&g, 5);
        let noise = NoiseModel::from_params(&NoiseParams::default()).unwrap();
        let time = TimeGrid::new(0.05, 0.005, Scheme::ExponentialEm).unwrap();
        let path = ensemble_path(2, 0, &time, noise.modes());
        let params = CascadeParams::default();
        let r = run_cascade(&d, &params, &noise, &time, &path).unwrap();
        assert!(r.untruncated);
        let (wb, w) = run_monolithic(&d, &params, &noise, &time, &path).unwrap();
        let u = &wb + &w;
        assert!(r.u_final.max_coefficient_distance(&u) < 1e-12);
    }

    #[test]
    fn running_minimum_is_nonincreasing() {
        let g = Grid::new(2, 16).unwrap();
        let d = small_decomposition(&g, 7);
        let noise = NoiseModel::from_params(&NoiseParams {
            amplitude: 6.0,
            filter: crate::noise::FilterRule::Identity,
            ..NoiseParams::default()
        })
        .unwrap();
        let time = TimeGrid::new(0.1, 0.005, Scheme::ExponentialEm).unwrap();
        let params = CascadeParams {
            epsilon1: 0.11,
            ..CascadeParams::default()
        };
        let r = run_cascade(&d, &params, &noise, &time, &ensemble_path(4, 0, &time, noise.modes())).unwrap();
        let t: Vec<f64> = r.stops.tau_running.iter().map(|s| s.unwrap_or(f64::INFINITY)).collect();
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.stops.tau_w, *r.stops.tau_running.last().unwrap());
    }

    #[test]
    fn epsilon1_range_is_enforced() {
        let g = Grid::new(2, 16).unwrap();
        let d = small_decomposition(&g, 3);
        let p = CascadeParams {
            epsilon1: 0.09,
            ..CascadeParams::default()
        };
        assert!(matches!(CutoffParams::from_decomposition(&d, &p), Err(Error::Parameter(_))));
    }
}
