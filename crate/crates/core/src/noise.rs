//! Truncated cylindrical Wiener process and multiplicative noise coefficients.
//!
//! The builtin diagonal-spectral model has columns
//! `σ(t,u)e_k = a(t) c_k 𝒫(χ_k(D) u)`, with `χ_k` a smooth band-limited radial
//! symbol. Each column is linear in `u`, so `σ(t,0) = 0`, and Fourier
//! multipliers commute with `𝒫`, so columns of divergence-free fields stay
//! divergence-free.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cascade::theta;
use crate::error::{Error, Result};
use crate::initial::{random_solenoidal, Spectrum};
use crate::spectral::ops::leray_project_in_place;
use crate::spectral::{hilbert_schmidt_norm, lebesgue_norm, Grid, SpectralField};

/// Brownian increments keyed on `(seed, step, mode)`.
///
/// Base step `s` draws its `modes` standard normals from a ChaCha8 stream
/// selected by `s`, so any step can be generated independently of the others.
/// A path with `stride > 1` sums `stride` consecutive base increments, which is
/// how coarser time steps share one underlying Brownian path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    pub seed: u64,
    pub base_dt: f64,
    pub modes: usize,
    pub stride: usize,
}

impl WienerPath {
    pub fn new(seed: u64, dt: f64, modes: usize) -> Self {
        Self {
            seed,
            base_dt: dt,
            modes,
            stride: 1,
        }
    }

    pub fn dt(&self) -> f64 {
        self.base_dt * self.stride as f64
    }

    /// The same Brownian path sampled every `factor` steps.
    pub fn coarsened(&self, factor: usize) -> Self {
        Self {
            stride: self.stride * factor,
            ..*self
        }
    }

    fn base_increment(&self, base_step: u64, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(base_step);
        let s = self.base_dt.sqrt();
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o += z * s;
        }
    }

    /// `ΔW_k` over step `step`, i.e. `W_k((step+1)·dt) - W_k(step·dt)`.
    pub fn increment(&self, step: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.modes];
        let first = (step * self.stride) as u64;
        for j in 0..self.stride as u64 {
            self.base_increment(first + j, &mut out);
        }
        out
    }
}

/// Per-path seed derived from a base seed and the path index.
pub fn path_seed(base_seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(base_seed ^ splitmix(index.wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Filter {
    Identity,
    /// `θ(|n| / radius)`: one on `|n| ≤ radius`, zero on `|n| ≥ 2·radius`.
    LowPass { radius: f64 },
}

impl Filter {
    pub fn symbol(&self, k2: f64) -> f64 {
        match *self {
            Filter::Identity => 1.0,
            Filter::LowPass { radius } => theta(k2.sqrt() / radius),
        }
    }
}

/// Deterministic time modulation `a(t) ∈ [0, 1]` of every column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Envelope {
    #[default]
    Constant,
    ExpDecay { rate: f64 },
}

impl Envelope {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::ExpDecay { rate } => (-rate * t).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Zero,
    #[default]
    DiagonalSpectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterRule {
    /// `χ_k` low-pass at radius `k`.
    #[default]
    LowPass,
    Identity,
}

/// Parameters of the builtin noise families: `c_k = amplitude · ratio^k`,
/// `k = 1..modes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub kind: NoiseKind,
    pub modes: usize,
    pub amplitude: f64,
    pub ratio: f64,
    pub filter: FilterRule,
    pub envelope: Envelope,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            kind: NoiseKind::DiagonalSpectral,
            modes: 8,
            amplitude: 1.0,
            ratio: 0.5,
            filter: FilterRule::LowPass,
            envelope: Envelope::Constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub coefficients: Vec<f64>,
    pub filters: Vec<Filter>,
    pub envelope: Envelope,
    modes: usize,
}

impl NoiseModel {
    pub fn zero(modes: usize) -> Self {
        Self {
            kind: NoiseKind::Zero,
            coefficients: vec![0.0; modes],
            filters: vec![Filter::Identity; modes],
            envelope: Envelope::Constant,
            modes,
        }
    }

    /// Diagonal-spectral model with explicit coefficients and filters.
    pub fn diagonal(coefficients: Vec<f64>, filters: Vec<Filter>, envelope: Envelope) -> Result<Self> {
        if coefficients.len() != filters.len() {
            return Err(Error::Parameter(
                "one filter per coefficient is required".into(),
            ));
        }
        if coefficients.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Parameter(
                "noise coefficients must be finite and nonnegative".into(),
            ));
        }
        for f in &filters {
            if let Filter::LowPass { radius } = f {
                if !(*radius > 0.0) {
                    return Err(Error::Parameter("filter radius must be positive".into()));
                }
            }
        }
        if let Envelope::ExpDecay { rate } = envelope {
            if !(rate >= 0.0) {
                return Err(Error::Parameter("envelope decay rate must be >= 0".into()));
            }
        }
        Ok(Self {
            kind: NoiseKind::DiagonalSpectral,
            modes: coefficients.len(),
            coefficients,
            filters,
            envelope,
        })
    }

    pub fn from_params(p: &NoiseParams) -> Result<Self> {
        if p.modes == 0 {
            return Err(Error::Parameter("noise needs at least one mode".into()));
        }
        match p.kind {
            NoiseKind::Zero => Ok(Self::zero(p.modes)),
            NoiseKind::DiagonalSpectral => {
                if !(p.amplitude >= 0.0) || !p.amplitude.is_finite() {
                    return Err(Error::Parameter("noise amplitude must be finite and >= 0".into()));
                }
                if !(p.ratio > 0.0 && p.ratio <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "coefficient ratio must lie in (0, 1], got {}",
                        p.ratio
                    )));
                }
                let coefficients = (1..=p.modes)
                    .map(|k| p.amplitude * p.ratio.powi(k as i32))
                    .collect();
                let filters = (1..=p.modes)
                    .map(|k| match p.filter {
                        FilterRule::LowPass => Filter::LowPass { radius: k as f64 },
                        FilterRule::Identity => Filter::Identity,
                    })
                    .collect();
                Self::diagonal(coefficients, filters, p.envelope)
            }
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.kind == NoiseKind::Zero || self.coefficients.iter().all(|&c| c == 0.0)
    }

    fn coefficient_l2(&self) -> f64 {
        if self.kind == NoiseKind::Zero {
            return 0.0;
        }
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Lipschitz constant in `𝕃^p ← L^p`, valid for every `p ≥ 1` on the
    /// discrete spaces used here: `(Σ c_k²)^{1/2} · max_k M_k`, where `M_k` is
    /// the discrete `ℓ¹` mass of the convolution kernel of `χ_k` on the norm
    /// quadrature grid (Young's inequality).
    pub fn lipschitz_lp(&self, grid: &Grid) -> f64 {
        let l2 = self.coefficient_l2();
        if l2 == 0.0 {
            return 0.0;
        }
        let q = grid.refined(crate::spectral::norms::OVERSAMPLE);
        let worst = self
            .filters
            .iter()
            .map(|f| kernel_l1(f, &q))
            .fold(0.0, f64::max);
        l2 * worst
    }

    /// Lipschitz constant in `ℍ^s ← H^s`: `(Σ c_k²)^{1/2} · max_k sup |χ_k|`,
    /// and every builtin symbol peaks at one.
    pub fn lipschitz_hs(&self) -> f64 {
        self.coefficient_l2()
    }

    /// The columns `σ(t,u)e_k`.
    pub fn columns(&self, t: f64, u: &SpectralField) -> Result<Vec<SpectralField>> {
        let a = self.envelope.at(t);
        let g = u.grid().clone();
        (0..self.modes)
            .map(|k| {
                if self.kind == NoiseKind::Zero {
                    return Ok(SpectralField::zeros(&g, u.components()));
                }
                let c = self.coefficients[k] * a;
                let f = self.filters[k];
                let mut col = u.apply_multiplier(|i| c * f.symbol(g.k2(i)));
                leray_project_in_place(&mut col)?;
                Ok(col)
            })
            .collect()
    }

    /// `Σ_k σ(t,u)e_k ΔW_k`.
    pub fn apply(&self, t: f64, u: &SpectralField, dw: &[f64]) -> Result<SpectralField> {
        if dw.len() != self.modes {
            return Err(Error::ModeCount {
                expected: self.modes,
                got: dw.len(),
            });
        }
        if self.is_zero() {
            return Ok(SpectralField::zeros(u.grid(), u.components()));
        }
        let a = self.envelope.at(t);
        let g = u.grid().clone();
        let mut out = u.apply_multiplier(|i| {
            let k2 = g.k2(i);
            a * self
                .coefficients
                .iter()
                .zip(&self.filters)
                .zip(dw)
                .map(|((c, f), w)| c * w * f.symbol(k2))
                .sum::<f64>()
        });
        leray_project_in_place(&mut out)?;
        Ok(out)
    }

    /// `Σ_k ‖σ(t,u)e_k‖²_{L²}`.
    pub fn hs_l2_squared(&self, t: f64, u: &SpectralField) -> Result<f64> {
        Ok(self
            .columns(t, u)?
            .iter()
            .map(|c| c.inner(c))
            .sum())
    }
}

/// `(1/N) Σ_x |κ(x)|` for `κ(x) = Σ_n χ(n) e^{i n·x}` on grid `q`.
fn kernel_l1(filter: &Filter, q: &Grid) -> f64 {
    if let Filter::Identity = filter {
        return 1.0;
    }
    let mut buf: Vec<Complex64> = (0..q.len())
        .map(|i| {
            if q.is_nyquist(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(filter.symbol(q.k2(i)), 0.0)
            }
        })
        .collect();
    q.fft_inverse(&mut buf);
    buf.iter().map(|z| z.norm()).sum::<f64>() / q.len() as f64
}

/// Largest observed `‖σ(u₁) - σ(u₂)‖_{𝕃^p} / ‖u₁ - u₂‖_{L^p}` over random
/// divergence-free pairs.
pub fn lipschitz_audit(
    model: &NoiseModel,
    grid: &Grid,
    p: f64,
    trials: usize,
    spectrum: &Spectrum,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u1 = random_solenoidal(grid, spectrum, &mut rng);
        let u2 = random_solenoidal(grid, spectrum, &mut rng);
        let c1 = model.columns(0.0, &u1)?;
        let c2 = model.columns(0.0, &u2)?;
        let diff: Vec<SpectralField> = c1.iter().zip(&c2).map(|(a, b)| a - b).collect();
        let num = hilbert_schmidt_norm(&diff, p)?;
        let den = lebesgue_norm(&(&u1 - &u2), p)?;
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    pub empirical: f64,
    pub predicted: f64,
    pub standard_error: f64,
    pub z_score: f64,
    /// `E[|∫ g dW|_{L²}]` over the samples.
    pub bdg_lhs: f64,
    /// `(∫ ‖g‖²_{ℓ²(L²)} dt)^{1/2}`.
    pub bdg_rhs: f64,
    pub bdg_standard_error: f64,
}

impl ItoReport {
    pub fn isometry_holds(&self, sigmas: f64) -> bool {
        self.z_score.abs() <= sigmas
    }

    pub fn bdg_holds(&self, sigmas: f64) -> bool {
        self.bdg_lhs <= self.bdg_rhs + sigmas * self.bdg_standard_error
    }
}

/// One-step stochastic integrals `X = Σ_k g_k ΔW_k` with `g = σ(u_fixed)`:
/// compares `E‖X‖²_{L²}` with `dt Σ_k ‖g_k‖²_{L²}`.
pub fn ito_isometry_check(
    model: &NoiseModel,
    u_fixed: &SpectralField,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<ItoReport> {
    let cols = model.columns(0.0, u_fixed)?;
    let m = cols.len();
    let mut gram = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            gram[a * m + b] = cols[a].inner(&cols[b]);
        }
    }
    let predicted: f64 = (0..m).map(|a| gram[a * m + a]).sum::<f64>() * dt;
    let path = WienerPath::new(seed, dt, m);
    let (mut s1, mut s2, mut n1, mut n2) = (0.0, 0.0, 0.0, 0.0);
    for step in 0..samples {
        let dw = path.increment(step);
        let mut q = 0.0;
        for a in 0..m {
            for b in 0..m {
                q += dw[a] * gram[a * m + b] * dw[b];
            }
        }
        let q = q.max(0.0);
        s1 += q;
        s2 += q * q;
        let r = q.sqrt();
        n1 += r;
        n2 += r * r;
    }
    let ns = samples as f64;
    let mean = s1 / ns;
    let var = (s2 / ns - mean * mean).max(0.0) * ns / (ns - 1.0).max(1.0);
    let se = (var / ns).sqrt();
    let nmean = n1 / ns;
    let nvar = (n2 / ns - nmean * nmean).max(0.0) * ns / (ns - 1.0).max(1.0);
    let z = if se > 0.0 {
        (mean - predicted) / se
    } else if mean == predicted {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ItoReport {
        empirical: mean,
        predicted,
        standard_error: se,
        z_score: z,
        bdg_lhs: nmean,
        bdg_rhs: predicted.sqrt(),
        bdg_standard_error: (nvar / ns).sqrt(),
    })
}
