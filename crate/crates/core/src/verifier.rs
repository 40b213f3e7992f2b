//! Monte Carlo estimates of the implied constants of the energy inequalities,
//! the stochastic heat estimate, the Poincaré-type ratio, a pathwise-uniqueness
//! diagnostic and the weak-form residual of the scheme.
//!
//! Constants are existential, so every report passes on finiteness and on
//! stability of the implied constant when the ensemble is doubled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{run_cascade, run_monolithic, CascadeParams, CascadeRun, SurvivalCurve};
use crate::decomposition::{DecompositionResult, NormMode};
use crate::error::{Error, Result};
use crate::initial::{normalized, random_solenoidal, Spectrum};
use crate::integrator::{step, Snse, TimeGrid};
use crate::ledger::EnergyLedger;
use crate::noise::{path_seed, NoiseModel, WienerPath};
use crate::spectral::norms::Sampled;
use crate::spectral::{
    divergence, lebesgue_norm, nonlinear_term, poincare_ratio, sobolev_norm_plancherel, Grid, SpectralField,
};

/// Report floats may be infinite or NaN, which JSON cannot hold; those are
/// written as the strings `"inf"`, `"-inf"` and `"NaN"`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::Num(x)
        } else if x.is_nan() {
            Repr::Text("NaN".into())
        } else if x > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(E::custom(format!("expected a number, got {t:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            xs.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }

    pub mod pairs {
        use super::*;

        pub fn serialize<S: Serializer>(xs: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
            xs.iter().map(|(a, b)| (to_repr(*a), to_repr(*b))).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
            Vec::<(Repr, Repr)>::deserialize(d)?
                .into_iter()
                .map(|(a, b)| Ok((from_repr(a)?, from_repr(b)?)))
                .collect()
        }
    }
}

/// Stability band for `C(2n)/C(n)`.
pub const STABILITY_BAND: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "nonfinite")]
    pub mean: f64,
    #[serde(with = "nonfinite")]
    pub stderr: f64,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: 0.0, stderr: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `C(2n)/C(n)`, taken as one when both vanish.
fn stability(full: f64, half: f64) -> f64 {
    if full == 0.0 && half == 0.0 {
        1.0
    } else if half == 0.0 {
        f64::INFINITY
    } else {
        full / half
    }
}

fn in_band(r: f64) -> bool {
    r.is_finite() && r >= STABILITY_BAND.0 && r <= STABILITY_BAND.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: f64,
    #[serde(with = "nonfinite")]
    pub implied_constant: f64,
    /// Implied constant of the first half of the ensemble.
    #[serde(with = "nonfinite")]
    pub half_constant: f64,
    #[serde(with = "nonfinite")]
    pub stability_ratio: f64,
    pub n_paths: usize,
    /// Paths on which no stopping time fired before the horizon.
    pub unstopped_paths: usize,
    pub pass: bool,
}

impl InequalityReport {
    /// Implied constant `E[lhs]/E[rhs]` with the per-path right sides averaged
    /// alongside the left sides.
    pub fn from_samples(name: &str, lhs: &[f64], rhs: &[f64], unstopped_paths: usize) -> Result<Self> {
        if lhs.len() < 2 || lhs.len() != rhs.len() {
            return Err(Error::Usage(format!(
                "report {name} needs at least two paths with matching sides"
            )));
        }
        let n = lhs.len();
        let h = n / 2;
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let l = Estimate::of(lhs);
        let r = mean(rhs);
        let implied_constant = ratio_or_zero(l.mean, r);
        let half_constant = ratio_or_zero(mean(&lhs[..h]), mean(&rhs[..h]));
        let stability_ratio = stability(implied_constant, half_constant);
        Ok(Self {
            name: name.to_string(),
            lhs: l,
            rhs: r,
            implied_constant,
            half_constant,
            stability_ratio,
            n_paths: n,
            unstopped_paths,
            pass: implied_constant.is_finite() && in_band(stability_ratio),
        })
    }

    /// Standard error of the implied constant.
    pub fn constant_stderr(&self) -> f64 {
        ratio_or_zero(self.lhs.stderr, self.rhs)
    }
}

/// A norm power and its paired dissipation integral, as recorded in ledgers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyNorm {
    /// `‖·‖³_{L³}` with `Σ_j∫|∇(|·_j|^{3/2})|²`
    L3,
    /// `‖·‖⁶_{L⁶}` with `Σ_j∫|∇(|·_j|³)|²`
    L6,
    /// `‖·‖²_{H^{1/2}}` with `‖·‖²_{H^{3/2}}`
    H05,
    /// `‖·‖²_{H¹}` with `‖·‖²_{H²}`
    H1,
}

impl EnergyNorm {
    pub fn pair(mode: NormMode) -> [EnergyNorm; 2] {
        match mode {
            NormMode::L3 => [EnergyNorm::L3, EnergyNorm::L6],
            NormMode::H12 => [EnergyNorm::H05, EnergyNorm::H1],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EnergyNorm::L3 => "L3",
            EnergyNorm::L6 => "L6",
            EnergyNorm::H05 => "H0.5",
            EnergyNorm::H1 => "H1",
        }
    }

    /// `‖f‖^p` for the norm of this pair.
    pub fn power(&self, f: &SpectralField) -> Result<f64> {
        Ok(match self {
            EnergyNorm::L3 => lebesgue_norm(f, 3.0)?.powi(3),
            EnergyNorm::L6 => lebesgue_norm(f, 6.0)?.powi(6),
            EnergyNorm::H05 => sobolev_norm_plancherel(f, 0.5).powi(2),
            EnergyNorm::H1 => sobolev_norm_plancherel(f, 1.0).powi(2),
        })
    }

    /// `sup_{t ≤ until} ‖·‖^p + ∫_0^until dissipation`.
    pub fn energy(&self, ledger: &EnergyLedger, until: f64) -> f64 {
        let sup = ledger.sup_until(
            |r| match self {
                EnergyNorm::L3 => r.diag.l3.powi(3),
                EnergyNorm::L6 => r.diag.l6.powi(6),
                EnergyNorm::H05 => r.diag.h05.powi(2),
                EnergyNorm::H1 => r.diag.h1.powi(2),
            },
            until,
        );
        let i = ledger.at(until).integrals;
        sup + match self {
            EnergyNorm::L3 => i.dissip3,
            EnergyNorm::L6 => i.dissip6,
            EnergyNorm::H05 => i.h15_sq,
            EnergyNorm::H1 => i.h2_sq,
        }
    }
}

/// Weighted least-squares slope of implied constants against the level index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub name: String,
    pub levels: Vec<usize>,
    #[serde(with = "nonfinite::vec")]
    pub constants: Vec<f64>,
    #[serde(with = "nonfinite::vec")]
    pub stderrs: Vec<f64>,
    #[serde(with = "nonfinite")]
    pub slope: f64,
    #[serde(with = "nonfinite")]
    pub sigma: f64,
    /// `slope - 2σ ≤ 0`.
    pub pass: bool,
}

impl SlopeFit {
    pub fn fit(name: &str, levels: &[usize], constants: &[f64], stderrs: &[f64]) -> Self {
        let n = levels.len();
        let (slope, sigma) = if n < 2 {
            (0.0, 0.0)
        } else {
            let weighted = stderrs.iter().all(|s| *s > 0.0);
            let w: Vec<f64> = if weighted {
                stderrs.iter().map(|s| 1.0 / (s * s)).collect()
            } else {
                vec![1.0; n]
            };
            let x: Vec<f64> = levels.iter().map(|&k| k as f64).collect();
            let sw: f64 = w.iter().sum();
            let xm = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
            let ym = constants.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
            let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - xm) * (x - xm)).sum();
            let sxy: f64 = x
                .iter()
                .zip(constants)
                .zip(&w)
                .map(|((x, y), w)| w * (x - xm) * (y - ym))
                .sum();
            let slope = sxy / sxx;
            let sigma = if weighted {
                (1.0 / sxx).sqrt()
            } else if n > 2 {
                let rss: f64 = x
                    .iter()
                    .zip(constants)
                    .map(|(x, y)| {
                        let e = y - ym - slope * (x - xm);
                        e * e
                    })
                    .sum();
                (rss / (n as f64 - 2.0) / sxx).sqrt()
            } else {
                0.0
            };
            (slope, sigma)
        };
        Self {
            name: name.to_string(),
            levels: levels.to_vec(),
            constants: constants.to_vec(),
            stderrs: stderrs.to_vec(),
            slope,
            sigma,
            pass: slope.is_finite() && slope - 2.0 * sigma <= 0.0,
        }
    }
}

/// Reports for the energy inequalities of a cascade ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEnergyReports {
    pub mode: NormMode,
    pub reports: Vec<InequalityReport>,
    /// Per-level reports, indexed `[norm][level]`.
    pub level_reports: Vec<Vec<InequalityReport>>,
    pub slopes: Vec<SlopeFit>,
}

impl MainEnergyReports {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
            && self.level_reports.iter().flatten().all(|r| r.pass)
            && self.slopes.iter().all(|s| s.pass)
    }
}

/// Energy reports of `runs`, all started from the same decomposition:
///
/// * `u`: critical energy of `u` up to `τ_w ∧ τ_w̄` against `‖u₀‖^p`;
/// * `w_bar`: subcritical energy of `w̄` up to `τ_w̄` against `‖w̄₀‖^p + 1`,
///   and in `L³` mode also its critical energy against one;
/// * `w`: critical energy of `w` up to `τ_w ∧ τ_w̄` against `ε₀^p`;
/// * `level-k`: both energies of each truncated level on `[0, T]` against the
///   initial level norm, with the trend of the constants in `k`.
pub fn verify_main_energy(
    runs: &[CascadeRun],
    decomposition: &DecompositionResult,
    horizon: f64,
) -> Result<MainEnergyReports> {
    if runs.len() < 2 {
        return Err(Error::Usage("energy reports need an ensemble of at least two paths".into()));
    }
    let mode = decomposition.mode;
    let [crit, sub] = EnergyNorm::pair(mode);
    let n = runs.len();
    let per_path = |f: &dyn Fn(&CascadeRun) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let unstopped = runs
        .iter()
        .filter(|r| r.stops.tau_w.is_none() && r.stops.tau_wbar.is_none())
        .count();
    let w_bar_unstopped = runs.iter().filter(|r| r.stops.tau_wbar.is_none()).count();
    let u0 = &decomposition.w_bar_0 + &decomposition.w0();
    let u0_power = crit.power(&u0)?;

    let mut reports = Vec::new();
    reports.push(InequalityReport::from_samples(
        &format!("u-{}-energy", crit.label()),
        &per_path(&|r| crit.energy(&r.u, r.stops.valid_until(horizon))),
        &vec![u0_power; n],
        unstopped,
    )?);
    let wb0 = sub.power(&decomposition.w_bar_0)? + 1.0;
    let wbar_until = |r: &CascadeRun| r.stops.tau_wbar.unwrap_or(horizon);
    reports.push(InequalityReport::from_samples(
        &format!("wbar-{}-energy", sub.label()),
        &per_path(&|r| sub.energy(&r.w_bar, wbar_until(r))),
        &vec![wb0; n],
        w_bar_unstopped,
    )?);
    if mode == NormMode::L3 {
        reports.push(InequalityReport::from_samples(
            "wbar-L3-energy",
            &per_path(&|r| crit.energy(&r.w_bar, wbar_until(r))),
            &vec![1.0; n],
            w_bar_unstopped,
        )?);
    }
    let eps_power = match mode {
        NormMode::L3 => decomposition.epsilon0.powi(3),
        NormMode::H12 => decomposition.epsilon0.powi(2),
    };
    reports.push(InequalityReport::from_samples(
        &format!("w-{}-energy", crit.label()),
        &per_path(&|r| crit.energy(&r.w, r.stops.valid_until(horizon))),
        &vec![eps_power; n],
        unstopped,
    )?);

    let mut level_reports = Vec::new();
    let mut slopes = Vec::new();
    for norm in [crit, sub] {
        let mut reps = Vec::new();
        for (k, v0) in decomposition.levels.iter().enumerate() {
            let rhs = norm.power(v0)?;
            if rhs == 0.0 {
                continue;
            }
            let lhs = per_path(&|r| norm.energy(&r.levels[k], horizon));
            reps.push((
                k,
                InequalityReport::from_samples(&format!("level-{k}-{}-energy", norm.label()), &lhs, &vec![rhs; n], n)?,
            ));
        }
        let ks: Vec<usize> = reps.iter().map(|(k, _)| *k).collect();
        let cs: Vec<f64> = reps.iter().map(|(_, r)| r.implied_constant).collect();
        let ses: Vec<f64> = reps.iter().map(|(_, r)| r.constant_stderr()).collect();
        slopes.push(SlopeFit::fit(&format!("level-{}-trend", norm.label()), &ks, &cs, &ses));
        level_reports.push(reps.into_iter().map(|(_, r)| r).collect());
    }
    Ok(MainEnergyReports {
        mode,
        reports,
        level_reports,
        slopes,
    })
}

/// Empirical `P(τ_w < δ)` on `δ = T/m, 2T/m, …, T`, with `C_emp = max P/δ` and
/// its stability under halving the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub curve: SurvivalCurve,
    pub half_curve: SurvivalCurve,
    #[serde(with = "nonfinite")]
    pub constant: f64,
    #[serde(with = "nonfinite")]
    pub half_constant: f64,
    #[serde(with = "nonfinite")]
    pub stability_ratio: f64,
    pub pass: bool,
}

pub fn survival_report(runs: &[CascadeRun], horizon: f64, points: usize) -> Result<SurvivalReport> {
    if runs.len() < 2 || points == 0 {
        return Err(Error::Usage("survey needs at least two paths and one delta".into()));
    }
    let deltas: Vec<f64> = (1..=points).map(|j| horizon * j as f64 / points as f64).collect();
    let stops: Vec<Option<f64>> = runs.iter().map(|r| r.stops.tau_w).collect();
    let curve = SurvivalCurve::from_stops(&stops, &deltas);
    let half_curve = SurvivalCurve::from_stops(&stops[..stops.len() / 2], &deltas);
    let constant = curve.linear_constant();
    let half_constant = half_curve.linear_constant();
    let stability_ratio = stability(constant, half_constant);
    Ok(SurvivalReport {
        pass: curve.is_nondecreasing() && constant.is_finite() && in_band(stability_ratio),
        curve,
        half_curve,
        constant,
        half_constant,
        stability_ratio,
    })
}

/// Count of recorded steps violating `‖v^{(k)}‖ ≤ ε₁/2^{k-1}`.
pub fn level_bound_violations(runs: &[CascadeRun]) -> usize {
    runs.iter()
        .map(|r| {
            let watch = r.thresholds.bounded_watch();
            r.levels
                .iter()
                .enumerate()
                .map(|(k, l)| {
                    let b = r.thresholds.level_bound(k);
                    l.rows.iter().filter(|row| watch.of_row(row) > b).count()
                })
                .sum::<usize>()
        })
        .sum()
}

/// `(∂_t - Δ)u = ∇·f + g Ẇ` with time-independent `f` and `g`.
#[derive(Debug, Clone)]
pub struct HeatCase {
    pub name: String,
    pub p: f64,
    pub u0: SpectralField,
    /// Row `j` of the matrix field `f`, so `(∇·f)_j = Σ_m ∂_m f_{jm}`.
    pub forcing: Vec<SpectralField>,
    pub columns: Vec<SpectralField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatReport {
    pub report: InequalityReport,
    /// `‖u(T)‖_p^p`
    pub final_power: Estimate,
    /// `∫_0^T Σ_j∫|∇(|u_j|^{p/2})|²`
    pub dissipation: Estimate,
}

struct HeatSamples {
    sup: f64,
    final_power: f64,
    dissipation: f64,
    rhs: f64,
}

fn heat_path(case: &HeatCase, time: &TimeGrid, path: &WienerPath, f_sq: &[f64], g_sq: &[f64]) -> Result<HeatSamples> {
    let p = case.p;
    let grid = case.u0.grid().clone();
    let drift = if case.forcing.iter().all(|f| f.is_zero()) {
        None
    } else {
        let mut d = SpectralField::zeros(&grid, case.forcing.len());
        for (j, row) in case.forcing.iter().enumerate() {
            let div = divergence(row)?;
            d.component_mut(j).copy_from_slice(div.component(0));
        }
        Some(d)
    };
    let sample = |u: &SpectralField| -> (f64, f64, f64) {
        let s = Sampled::new(u);
        let mag = s.magnitude();
        let w = s.grid.weight();
        let power: f64 = mag.iter().map(|m| m.powf(p)).sum::<f64>() * w;
        let weight = |m: f64| if p == 2.0 { 1.0 } else { m.powf(p - 2.0) };
        let rhs: f64 = mag
            .iter()
            .zip(f_sq)
            .zip(g_sq)
            .map(|((m, f), g)| weight(*m) * (f + g))
            .sum::<f64>()
            * w;
        (power, s.dissipation(p), rhs)
    };
    let mut u = case.u0.clone();
    let (p0, mut d_prev, mut r_prev) = sample(&u);
    let mut sup = p0;
    let (mut dissipation, mut rhs) = (0.0, 0.0);
    let mut last = p0;
    for n in 0..time.steps() {
        let g = if case.columns.is_empty() {
            None
        } else {
            let dw = path.increment(n);
            let mut g = SpectralField::zeros(&grid, u.components());
            for (c, w) in case.columns.iter().zip(&dw) {
                g.axpy(*w, c);
            }
            Some(g)
        };
        u = step(&u, drift.as_ref(), g.as_ref(), time);
        let (pw, d, r) = sample(&u);
        if !pw.is_finite() {
            return Err(Error::BlowUp {
                t: time.time(n + 1),
                detail: "non-finite heat solution".into(),
                last_l3: f64::NAN,
                last_l6: f64::NAN,
            });
        }
        dissipation += 0.5 * time.dt * (d_prev + d);
        rhs += 0.5 * time.dt * (r_prev + r);
        d_prev = d;
        r_prev = r;
        sup = sup.max(pw);
        last = pw;
    }
    Ok(HeatSamples {
        sup: sup - p0,
        final_power: last,
        dissipation,
        rhs,
    })
}

fn squared_magnitude_sum(fields: &[SpectralField], grid: &Grid) -> Vec<f64> {
    let q = grid.refined(crate::spectral::norms::OVERSAMPLE);
    let mut out = vec![0.0; q.len()];
    for f in fields {
        for comp in f.to_physical_on(&q) {
            for (o, v) in out.iter_mut().zip(&comp) {
                *o += v * v;
            }
        }
    }
    out
}

/// Estimates both sides of the stochastic heat estimate
/// `E[sup‖u‖_p^p - ‖u₀‖_p^p + ∫Σ_j‖∇(|u_j|^{p/2})‖²]
///   ≤ C E[∫∫|f|²|u|^{p-2} + ∫∫|u|^{p-2}‖g‖²_{ℓ²}]`.
pub fn verify_heat_estimate(
    case: &HeatCase,
    time: &TimeGrid,
    n_paths: usize,
    base_seed: u64,
) -> Result<HeatReport> {
    if !(case.p >= 2.0) {
        return Err(Error::Domain(format!("heat estimate needs p >= 2, got {}", case.p)));
    }
    let grid = case.u0.grid().clone();
    if case.forcing.len() != case.u0.components() {
        return Err(Error::Parameter("forcing needs one row per component".into()));
    }
    let f_sq = squared_magnitude_sum(&case.forcing, &grid);
    let g_sq = squared_magnitude_sum(&case.columns, &grid);
    let modes = case.columns.len();
    let samples = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = WienerPath::new(path_seed(base_seed, i as u64), time.dt, modes);
            heat_path(case, time, &path, &f_sq, &g_sq)
        })
        .collect::<Result<Vec<_>>>()?;
    let lhs: Vec<f64> = samples.iter().map(|s| s.sup + s.dissipation).collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.rhs).collect();
    let finals: Vec<f64> = samples.iter().map(|s| s.final_power).collect();
    let diss: Vec<f64> = samples.iter().map(|s| s.dissipation).collect();
    Ok(HeatReport {
        report: InequalityReport::from_samples(&case.name, &lhs, &rhs, n_paths)?,
        final_power: Estimate::of(&finals),
        dissipation: Estimate::of(&diss),
    })
}

/// Random vector fields scaled to `L²` norm `scale`, without projection.
pub fn random_heat_data(grid: &Grid, count: usize, scale: f64, seed: u64) -> Vec<SpectralField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectrum = Spectrum::Flat { max_radius: 3.0 };
    (0..count)
        .map(|_| {
            let f = crate::initial::random_field(grid, grid.dim(), &spectrum, &mut rng, false);
            normalized(&f, 2.0, scale).expect("p = 2 is valid")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub perturbation: f64,
    /// `(T', E[sup_{t ≤ T'}‖U‖³_{L³}]/‖U(0)‖³_{L³})`, horizons increasing.
    #[serde(with = "nonfinite::pairs")]
    pub ratios: Vec<(f64, f64)>,
    pub bound: f64,
    pub pass: bool,
}

/// Runs the direct equation from `u0` and from `u0 + δe` on shared paths and
/// tracks `U = u - ũ` on the horizons `T'/4, T'/2, T'`.
pub fn uniqueness_diagnostic(
    u0: &SpectralField,
    noise: &NoiseModel,
    time: &TimeGrid,
    perturbation: f64,
    n_paths: usize,
    base_seed: u64,
    bound: f64,
) -> Result<UniquenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ 0x5eed);
    let spectrum = Spectrum::Flat { max_radius: 3.0 };
    let e = normalized(&random_solenoidal(u0.grid(), &spectrum, &mut rng), 3.0, 1.0)?;
    let u1 = u0 + &e.scaled(perturbation);
    let d0 = lebesgue_norm(&(&u1 - u0), 3.0)?.powi(3);
    let rhs = Snse { noise: noise.clone() };
    let steps = time.steps();
    let marks = [steps / 4, steps / 2, steps];
    let sups = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = WienerPath::new(path_seed(base_seed, i as u64), time.dt, noise.modes());
            let mut a = u0.clone();
            let mut b = u1.clone();
            let mut sup = vec![0.0f64; steps + 1];
            for n in 0..steps {
                let dw = path.increment(n);
                a = advance(&a, &rhs, time, n, &dw)?;
                b = advance(&b, &rhs, time, n, &dw)?;
                sup[n + 1] = sup[n].max(lebesgue_norm(&(&b - &a), 3.0)?.powi(3));
            }
            Ok(marks.iter().map(|&m| sup[m]).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<(f64, f64)> = marks
        .iter()
        .enumerate()
        .map(|(m, &s)| {
            let mean = sups.iter().map(|v| v[m]).sum::<f64>() / n_paths as f64;
            (time.time(s), ratio_or_zero(mean, d0))
        })
        .collect();
    let pass = ratios.iter().all(|(_, r)| r.is_finite() && *r <= bound)
        && ratios.windows(2).all(|w| w[1].1 >= w[0].1);
    Ok(UniquenessReport {
        perturbation,
        ratios,
        bound,
        pass,
    })
}

fn advance(u: &SpectralField, rhs: &Snse, time: &TimeGrid, n: usize, dw: &[f64]) -> Result<SpectralField> {
    let mut drift = nonlinear_term(u)?;
    drift.scale(-1.0);
    let g = if rhs.noise.is_zero() {
        None
    } else {
        Some(rhs.noise.apply(time.time(n), u, dw)?)
    };
    let next = step(u, Some(&drift), g.as_ref(), time);
    if !next.is_finite() {
        return Err(Error::BlowUp {
            t: time.time(n + 1),
            detail: "non-finite coefficient".into(),
            last_l3: f64::NAN,
            last_l6: f64::NAN,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub p: f64,
    pub n_fields: usize,
    #[serde(with = "nonfinite")]
    pub max_half: f64,
    #[serde(with = "nonfinite")]
    pub max_full: f64,
    #[serde(with = "nonfinite")]
    pub plateau_ratio: f64,
    pub pass: bool,
}

/// Largest Poincaré-type ratio over random mean-zero divergence-free fields.
pub fn poincare_survey(grid: &Grid, p: f64, n_fields: usize, spectrum: &Spectrum, seed: u64) -> Result<PoincareReport> {
    if n_fields < 2 {
        return Err(Error::Usage("survey needs at least two fields".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<SpectralField> = (0..n_fields).map(|_| random_solenoidal(grid, spectrum, &mut rng)).collect();
    let ratios = fields
        .par_iter()
        .map(|f| poincare_ratio(f, p))
        .collect::<Result<Vec<_>>>()?;
    let max_half = ratios[..n_fields / 2].iter().copied().fold(0.0, f64::max);
    let max_full = ratios.iter().copied().fold(0.0, f64::max);
    let plateau_ratio = max_full / max_half;
    Ok(PoincareReport {
        p,
        n_fields,
        max_half,
        max_full,
        plateau_ratio,
        pass: max_full.is_finite() && plateau_ratio <= 1.25,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakFormParams {
    pub horizon: f64,
    pub fine_dt: f64,
    /// Observation spacings as multiples of `fine_dt`, finest last.
    pub strides: [usize; 3],
    pub n_paths: usize,
    pub base_seed: u64,
    /// Test functions are the Fourier modes with `0 < |n|² ≤ test_radius2`.
    pub test_radius2: f64,
    /// The identity is tested on this many consecutive windows of `[0, T]`.
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakFormReport {
    pub spacings: Vec<f64>,
    #[serde(with = "nonfinite::vec")]
    pub rms: Vec<f64>,
    /// `rms(Δ)/rms(Δ/2)`
    #[serde(with = "nonfinite::vec")]
    pub ratios: Vec<f64>,
    pub pass: bool,
}

/// Residual of the weak formulation tested against low Fourier modes, with the
/// time integrals replaced by left-point sums at spacing `Δ` on a path
/// computed at `fine_dt`: on each window `[a, b]`,
/// `û(b) - û(a) - Σ_i [(-|n|²û_i + F̂(u_i))Δ + σ̂(u_i)ΔW_i]`.
/// The Itô sum converges at rate `Δ^{1/2}`, so halving `Δ` should shrink the
/// residual by `√2`. Averaging over windows only reduces the Monte Carlo
/// spread.
pub fn weak_form_residual(u0: &SpectralField, noise: &NoiseModel, params: &WeakFormParams) -> Result<WeakFormReport> {
    let time = TimeGrid::new(params.horizon, params.fine_dt, crate::integrator::Scheme::ExponentialEm)?;
    let steps = time.steps();
    if params.windows == 0 || steps % params.windows != 0 {
        return Err(Error::Parameter("the window count must divide the step count".into()));
    }
    if params.strides.iter().any(|&s| s == 0 || (steps / params.windows) % s != 0) {
        return Err(Error::Parameter("observation strides must divide the window length".into()));
    }
    let grid = u0.grid().clone();
    let tests: Vec<usize> = (1..grid.len())
        .filter(|&i| grid.k2(i) <= params.test_radius2)
        .collect();
    let rhs = Snse { noise: noise.clone() };
    let per_path = (0..params.n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = WienerPath::new(path_seed(params.base_seed, i as u64), params.fine_dt, noise.modes());
            let mut traj = Vec::with_capacity(steps + 1);
            traj.push(u0.clone());
            for n in 0..steps {
                let next = advance(&traj[n], &rhs, &time, n, &path.increment(n))?;
                traj.push(next);
            }
            let window = steps / params.windows;
            params
                .strides
                .iter()
                .map(|&s| {
                    let coarse = path.coarsened(s);
                    let dt = params.fine_dt * s as f64;
                    let mut sq = 0.0;
                    for w in 0..params.windows {
                        let (a, b) = (w * window, (w + 1) * window);
                        let mut r = &traj[b] - &traj[a];
                        for m in a / s..b / s {
                            let u = &traj[m * s];
                            let t = time.time(m * s);
                            let mut inc = nonlinear_term(u)?;
                            inc.scale(-dt);
                            inc.axpy(-dt, &u.apply_multiplier(|i| grid.k2(i)));
                            if !noise.is_zero() {
                                inc += &noise.apply(t, u, &coarse.increment(m))?;
                            }
                            r -= &inc;
                        }
                        sq += r
                            .coefficients()
                            .iter()
                            .map(|c| tests.iter().map(|&i| c[i].norm_sqr()).sum::<f64>())
                            .sum::<f64>();
                    }
                    Ok(sq / params.windows as f64)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let rms: Vec<f64> = (0..params.strides.len())
        .map(|j| (per_path.iter().map(|v| v[j]).sum::<f64>() / params.n_paths as f64).sqrt())
        .collect();
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[0] / w[1]).collect();
    let target = 2f64.sqrt();
    // A path that never moves has an identically zero residual.
    let pass = rms.iter().all(|r| *r == 0.0) || ratios.iter().all(|r| (r / target - 1.0).abs() <= 0.2);
    Ok(WeakFormReport {
        spacings: params.strides.iter().map(|&s| s as f64 * params.fine_dt).collect(),
        rms,
        ratios,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub untruncated_paths: usize,
    pub n_paths: usize,
    /// RMS `L²` distance of cascade and monolithic `u(T)` at step `dt`.
    #[serde(with = "nonfinite")]
    pub discrepancy: f64,
    /// RMS `L²` distance of monolithic `u(T)` at `dt` and `dt/4`.
    #[serde(with = "nonfinite")]
    pub strong_error: f64,
    /// The same at `dt/2` and `dt/4`.
    #[serde(with = "nonfinite")]
    pub strong_error_half: f64,
    /// `log₂(strong_error/strong_error_half)`, against the reference `dt/4`.
    #[serde(with = "nonfinite")]
    pub observed_order: f64,
    pub pass: bool,
}

/// Compares the assembled cascade with the monolithic `w̄ + w` solve on paths
/// where every cutoff stayed at one.
pub fn cascade_consistency(
    decomposition: &DecompositionResult,
    params: &CascadeParams,
    noise: &NoiseModel,
    time: &TimeGrid,
    n_paths: usize,
    base_seed: u64,
) -> Result<ConsistencyReport> {
    let fine = TimeGrid::new(time.horizon, time.dt / 4.0, time.scheme)?;
    let half = TimeGrid::new(time.horizon, time.dt / 2.0, time.scheme)?;
    let rows = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, f64, f64)>> {
            let base = WienerPath::new(path_seed(base_seed, i as u64), fine.dt, noise.modes());
            let coarse = base.coarsened(4);
            let casc = run_cascade(decomposition, params, noise, time, &coarse)?;
            if !casc.untruncated || casc.stops.tau_wbar.is_some() {
                return Ok(None);
            }
            let mono = |t: &TimeGrid, p: &WienerPath| -> Result<SpectralField> {
                let (wb, w) = run_monolithic(decomposition, params, noise, t, p)?;
                Ok(&wb + &w)
            };
            let u_dt = mono(time, &coarse)?;
            let u_half = mono(&half, &base.coarsened(2))?;
            let u_ref = mono(&fine, &base)?;
            let l2 = |a: &SpectralField, b: &SpectralField| {
                let d = a - b;
                d.inner(&d)
            };
            Ok(Some((l2(&casc.u_final, &u_dt), l2(&u_dt, &u_ref), l2(&u_half, &u_ref))))
        })
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<(f64, f64, f64)> = rows.into_iter().flatten().collect();
    let m = kept.len().max(1) as f64;
    let rms = |f: fn(&(f64, f64, f64)) -> f64| (kept.iter().map(f).sum::<f64>() / m).sqrt();
    let discrepancy = rms(|r| r.0);
    let strong_error = rms(|r| r.1);
    let strong_error_half = rms(|r| r.2);
    let observed_order = (strong_error / strong_error_half).log2();
    let pass = !kept.is_empty()
        && discrepancy <= strong_error.max(1e-12)
        && (strong_error == 0.0 || observed_order >= 0.4);
    Ok(ConsistencyReport {
        untruncated_paths: kept.len(),
        n_paths,
        discrepancy,
        strong_error,
        strong_error_half,
        observed_order,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::taylor_green;
    use crate::integrator::Scheme;

    #[test]
    fn report_constants_and_stability() {
        let r = InequalityReport::from_samples("x", &[1.0, 3.0, 2.0, 2.0], &[2.0; 4], 0).unwrap();
        assert_eq!(r.implied_constant, 1.0);
        assert_eq!(r.half_constant, 1.0);
        assert!(r.pass);
        let z = InequalityReport::from_samples("z", &[0.0; 4], &[0.0; 4], 4).unwrap();
        assert_eq!(z.implied_constant, 0.0);
        assert!(z.pass);
        assert!(InequalityReport::from_samples("e", &[], &[], 0).is_err());
        let bad = InequalityReport::from_samples("b", &[0.0, 0.0, 5.0, 5.0], &[1.0; 4], 0).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn slope_of_a_line() {
        let f = SlopeFit::fit("s", &[0, 1, 2, 3], &[3.0, 2.0, 1.0, 0.0], &[0.1; 4]);
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.pass);
        let up = SlopeFit::fit("u", &[0, 1, 2, 3], &[0.0, 1.0, 2.0, 3.0], &[0.01; 4]);
        assert!(!up.pass);
    }

    #[test]
    fn zero_heat_case_has_zero_constant() {
        let g = Grid::new(2, 16).unwrap();
        let case = HeatCase {
            name: "zero".into(),
            p: 3.0,
            u0: SpectralField::zero_vector(&g),
            forcing: vec![SpectralField::zero_vector(&g); 2],
            columns: Vec::new(),
        };
        let time = TimeGrid::new(0.05, 0.01, Scheme::ExponentialEm).unwrap();
        let r = verify_heat_estimate(&case, &time, 4, 1).unwrap();
        assert_eq!(r.report.implied_constant, 0.0);
        assert!(r.report.pass);
    }

    #[test]
    fn zero_perturbation_gives_identical_paths() {
        let g = Grid::new(2, 16).unwrap();
        let noise = NoiseModel::from_params(&Default::default()).unwrap();
        let time = TimeGrid::new(0.04, 0.01, Scheme::ExponentialEm).unwrap();
        let r = uniqueness_diagnostic(&taylor_green(&g, 0.5), &noise, &time, 0.0, 2, 3, 10.0).unwrap();
        assert!(r.ratios.iter().all(|(_, x)| *x == 0.0));
    }

    #[test]
    fn heat_only_differences_contract() {
        let g = Grid::new(2, 16).unwrap();
        let noise = NoiseModel::zero(2);
        let time = TimeGrid::new(0.08, 0.01, Scheme::ExponentialEm).unwrap();
        let r = uniqueness_diagnostic(&SpectralField::zero_vector(&g), &noise, &time, 1e-6, 2, 3, 10.0).unwrap();
        assert!(r.ratios.iter().all(|(_, x)| *x <= 1.0 + 1e-9), "{:?}", r.ratios);
        assert!(r.pass);
    }

    #[test]
    fn poincare_single_mode_is_scale_free() {
        let g = Grid::new(2, 16).unwrap();
        let f = taylor_green(&g, 1.0);
        let a = poincare_ratio(&f, 2.0).unwrap();
        let b = poincare_ratio(&f.scaled(7.0), 2.0).unwrap();
        assert!((a / b - 1.0).abs() < 1e-12);
    }
}
