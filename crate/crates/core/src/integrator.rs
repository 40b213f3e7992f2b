//! Itô time stepping with the Laplacian treated exactly (or implicitly) and
//! drift and noise treated explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{EnergyLedger, LedgerRow, RunningIntegrals};
use crate::noise::{NoiseModel, WienerPath};
use crate::spectral::{nonlinear_term, FieldDiagnostics, SpectralField};

/// Any monitored norm above this value is treated as numerical blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `û ← e^{-|n|²dt}(û + dt F̂ + Ĝ)`
    #[default]
    ExponentialEm,
    /// `û ← (1 + |n|²dt)^{-1}(û + dt F̂ + Ĝ)`
    SemiImplicitEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) || !(horizon >= dt) {
            return Err(Error::Parameter(format!(
                "need 0 < dt <= T, got dt = {dt}, T = {horizon}"
            )));
        }
        let steps = (horizon / dt).round();
        if ((steps * dt) - horizon).abs() > 1e-9 * horizon {
            return Err(Error::Parameter(format!(
                "T = {horizon} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            horizon,
            dt,
            scheme,
        })
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Per-mode linear propagator over one step.
    pub fn propagator(&self, k2: f64) -> f64 {
        match self.scheme {
            Scheme::ExponentialEm => (-k2 * self.dt).exp(),
            Scheme::SemiImplicitEm => 1.0 / (1.0 + k2 * self.dt),
        }
    }
}

/// State handed to a right-hand side at the left end of a step.
pub struct StepInput<'a> {
    pub step: usize,
    pub t: f64,
    pub u: &'a SpectralField,
    pub diag: &'a FieldDiagnostics,
    pub integrals: &'a RunningIntegrals,
}

/// Drift and noise of an Itô equation `du = (Δu + F(t,u)) dt + G(t,u) dW`.
pub trait RightHandSide: Sync {
    /// Number of Brownian modes the noise consumes.
    fn noise_modes(&self) -> usize;

    /// Names of the cutoff values reported each step.
    fn cutoff_names(&self) -> Vec<String> {
        Vec::new()
    }

    /// Cutoff values at the current state.
    fn cutoffs(&self, _input: &StepInput) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }

    /// `F(t,u)`, or `None` for zero drift.
    fn drift(&self, input: &StepInput, cutoffs: &[f64]) -> Result<Option<SpectralField>>;

    /// `G(t,u) ΔW`, or `None` when the noise vanishes.
    fn noise(&self, input: &StepInput, cutoffs: &[f64], dw: &[f64]) -> Result<Option<SpectralField>>;
}

/// Stochastic heat equation with no forcing.
pub struct Heat;

impl RightHandSide for Heat {
    fn noise_modes(&self) -> usize {
        0
    }
    fn drift(&self, _: &StepInput, _: &[f64]) -> Result<Option<SpectralField>> {
        Ok(None)
    }
    fn noise(&self, _: &StepInput, _: &[f64], _: &[f64]) -> Result<Option<SpectralField>> {
        Ok(None)
    }
}

/// `du = (Δu - 𝒫((u·∇)u)) dt + σ(t,u) dW`.
pub struct Snse {
    pub noise: NoiseModel,
}

impl RightHandSide for Snse {
    fn noise_modes(&self) -> usize {
        self.noise.modes()
    }
    fn drift(&self, input: &StepInput, _: &[f64]) -> Result<Option<SpectralField>> {
        let mut n = nonlinear_term(input.u)?;
        n.scale(-1.0);
        Ok(Some(n))
    }
    fn noise(&self, input: &StepInput, _: &[f64], dw: &[f64]) -> Result<Option<SpectralField>> {
        if self.noise.is_zero() {
            return Ok(None);
        }
        Ok(Some(self.noise.apply(input.t, input.u, dw)?))
    }
}

/// Which quantity a stopping monitor watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Watch {
    L3,
    L6,
    H05,
    H1,
    /// `‖u‖_{H^{1/2}} + (∫_0^t ‖u‖²_{H^{3/2}})^{1/2}`
    H05Path,
    /// `‖u‖_{H¹} + (∫_0^t ‖u‖²_{H²})^{1/2}`
    H1Path,
}

impl Watch {
    pub fn value(&self, d: &FieldDiagnostics, i: &RunningIntegrals) -> f64 {
        match self {
            Watch::L3 => d.l3,
            Watch::L6 => d.l6,
            Watch::H05 => d.h05,
            Watch::H1 => d.h1,
            Watch::H05Path => d.h05 + i.h15_sq.sqrt(),
            Watch::H1Path => d.h1 + i.h2_sq.sqrt(),
        }
    }

    pub fn of_row(&self, row: &LedgerRow) -> f64 {
        self.value(&row.diag, &row.integrals)
    }
}

/// Freezes the path the first time `watch ≥ threshold`; the state is then
/// carried constantly to the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub watch: Watch,
    pub threshold: f64,
}

impl Monitor {
    fn fires(&self, d: &FieldDiagnostics, i: &RunningIntegrals) -> bool {
        self.watch.value(d, i) >= self.threshold
    }
}

/// Every step's field and Brownian increment.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    pub fields: Vec<SpectralField>,
    pub increments: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub u: SpectralField,
    pub ledger: EnergyLedger,
    /// First time a monitor fired.
    pub stopped_at: Option<f64>,
    pub dense: Option<DenseOutput>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dense: bool,
}

fn check_finite(t: f64, diag: &FieldDiagnostics, last: &FieldDiagnostics, u: &SpectralField) -> Result<()> {
    let bad = if !u.is_finite() || !diag.is_finite() {
        Some("non-finite coefficient".to_string())
    } else {
        [("L3", diag.l3), ("L6", diag.l6), ("H1", diag.h1)]
            .iter()
            .find(|(_, v)| *v > BLOW_UP_THRESHOLD)
            .map(|(n, v)| format!("{n} norm {v:.3e} exceeds {BLOW_UP_THRESHOLD:.0e}"))
    };
    match bad {
        Some(detail) => Err(Error::BlowUp {
            t,
            detail,
            last_l3: last.l3,
            last_l6: last.l6,
        }),
        None => Ok(()),
    }
}

/// One step from `u` given precomputed drift and noise increment.
pub fn step(
    u: &SpectralField,
    drift: Option<&SpectralField>,
    noise: Option<&SpectralField>,
    time: &TimeGrid,
) -> SpectralField {
    let mut next = u.clone();
    if let Some(f) = drift {
        next.axpy(time.dt, f);
    }
    if let Some(g) = noise {
        next.axpy(1.0, g);
    }
    let grid = u.grid().clone();
    next.apply_multiplier_in_place(|i| time.propagator(grid.k2(i)));
    next
}

/// Advances `u0` to the horizon on the given Brownian path.
pub fn simulate_path(
    u0: &SpectralField,
    rhs: &dyn RightHandSide,
    time: &TimeGrid,
    path: &WienerPath,
    monitors: &[Monitor],
    options: RunOptions,
) -> Result<PathResult> {
    let modes = rhs.noise_modes();
    if modes > 0 && path.modes != modes {
        return Err(Error::ModeCount {
            expected: modes,
            got: path.modes,
        });
    }
    let mut u = u0.clone();
    let mut diag = FieldDiagnostics::compute(&u);
    check_finite(0.0, &diag, &diag, &u)?;
    let mut integrals = RunningIntegrals::default();
    let mut ledger = EnergyLedger::new(rhs.cutoff_names());
    let mut dense = options.dense.then(DenseOutput::default);
    let mut frozen = monitors.iter().any(|m| m.fires(&diag, &integrals));
    let mut stopped_at = frozen.then_some(0.0);

    for n in 0..time.steps() {
        let t = time.time(n);
        let input = StepInput {
            step: n,
            t,
            u: &u,
            diag: &diag,
            integrals: &integrals,
        };
        let cutoffs = rhs.cutoffs(&input)?;
        let dw = if modes > 0 { path.increment(n) } else { Vec::new() };
        let next = if frozen {
            None
        } else {
            let drift = rhs.drift(&input, &cutoffs)?;
            let noise = rhs.noise(&input, &cutoffs, &dw)?;
            Some(step(&u, drift.as_ref(), noise.as_ref(), time))
        };
        ledger.push(
            LedgerRow {
                t,
                diag,
                integrals,
                frozen,
            },
            cutoffs,
        );
        if let Some(d) = dense.as_mut() {
            d.fields.push(u.clone());
            d.increments.push(dw);
        }
        if let Some(next) = next {
            let next_diag = FieldDiagnostics::compute(&next);
            check_finite(time.time(n + 1), &next_diag, &diag, &next)?;
            integrals.advance(time.dt, &diag, &next_diag);
            u = next;
            diag = next_diag;
            if monitors.iter().any(|m| m.fires(&diag, &integrals)) {
                frozen = true;
                stopped_at = Some(time.time(n + 1));
            }
        }
    }
    let t = time.time(time.steps());
    let input = StepInput {
        step: time.steps(),
        t,
        u: &u,
        diag: &diag,
        integrals: &integrals,
    };
    let cutoffs = rhs.cutoffs(&input)?;
    ledger.push(
        LedgerRow {
            t,
            diag,
            integrals,
            frozen,
        },
        cutoffs,
    );
    if let Some(d) = dense.as_mut() {
        d.fields.push(u.clone());
    }
    Ok(PathResult {
        u,
        ledger,
        stopped_at,
        dense,
    })
}
