//! Lebesgue, Sobolev and Hilbert–Schmidt norms, the dissipation functional
//! `Σ_j ∫ |∇(|u_j|^{p/2})|²` and the Poincaré-type ratio.
//!
//! Integrands that are not band-limited are integrated on a grid with twice as
//! many points per axis as the field's own grid.

use serde::{Deserialize, Serialize};

use super::field::{ScalarDensity, SpectralField};
use super::grid::Grid;
use super::ops::derivative;
use crate::error::{Error, Result};

/// Oversampling factor of the norm quadrature grid.
pub const OVERSAMPLE: usize = 2;

fn quadrature_grid(f: &SpectralField) -> Grid {
    f.grid().refined(OVERSAMPLE)
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("L^p exponent must lie in [1, ∞), got {p}")));
    }
    Ok(())
}

fn lp_of_samples(values: &[f64], weight: f64, p: f64) -> f64 {
    let s: f64 = if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else if p == 3.0 {
        values.iter().map(|v| v.abs().powi(3)).sum()
    } else if p == 6.0 {
        values.iter().map(|v| v.powi(6)).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    (s * weight).powf(1.0 / p)
}

/// Pointwise Euclidean magnitude of a family of sampled components.
fn magnitude(samples: &[Vec<f64>]) -> Vec<f64> {
    let len = samples.first().map_or(0, |s| s.len());
    (0..len)
        .map(|i| samples.iter().map(|s| s[i] * s[i]).sum::<f64>().sqrt())
        .collect()
}

/// Anything whose pointwise magnitude can be sampled for quadrature.
pub trait Integrable {
    /// Quadrature grid and `|f(x)|` at its points.
    fn magnitude_samples(&self) -> (Grid, Vec<f64>);
}

impl Integrable for SpectralField {
    fn magnitude_samples(&self) -> (Grid, Vec<f64>) {
        let q = quadrature_grid(self);
        let samples = self.to_physical_on(&q);
        (q, magnitude(&samples))
    }
}

impl Integrable for ScalarDensity {
    fn magnitude_samples(&self) -> (Grid, Vec<f64>) {
        (self.grid.clone(), self.values.iter().map(|v| v.abs()).collect())
    }
}

/// `‖f‖_{L^p} = (∫ |f(x)|^p dx)^{1/p}` with `|·|` the Euclidean magnitude.
pub fn lebesgue_norm<F: Integrable + ?Sized>(f: &F, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let (grid, mag) = f.magnitude_samples();
    Ok(lp_of_samples(&mag, grid.weight(), p))
}

/// Bessel-potential multiplier `(1 + |n|²)^{α/2}`.
pub fn bessel_multiplier(f: &SpectralField, alpha: f64) -> SpectralField {
    if alpha == 0.0 {
        return f.clone();
    }
    let g = f.grid().clone();
    f.apply_multiplier(|i| (1.0 + g.k2(i)).powf(alpha / 2.0))
}

/// `‖f‖_{W^{α,p}} = ‖(1 - Δ)^{α/2} f‖_{L^p}`.
pub fn sobolev_norm(f: &SpectralField, alpha: f64, p: f64) -> Result<f64> {
    lebesgue_norm(&bessel_multiplier(f, alpha), p)
}

/// `‖f‖_{H^α}` from the Plancherel sum `(2π)^d Σ (1+|n|²)^α |f̂(n)|²`.
pub fn sobolev_norm_plancherel(f: &SpectralField, alpha: f64) -> f64 {
    let g = f.grid();
    let k2 = g.k2_table();
    let mut s = 0.0;
    for c in f.coefficients() {
        for (z, &k) in c.iter().zip(k2) {
            let e = z.norm_sqr();
            if e != 0.0 {
                s += (1.0 + k).powf(alpha) * e;
            }
        }
    }
    (s * g.volume()).sqrt()
}

/// `(∫ (Σ_k |g_k(x)|²)^{p/2} dx)^{1/p}` for a finite family of columns.
pub fn hilbert_schmidt_norm(cols: &[SpectralField], p: f64) -> Result<f64> {
    hilbert_schmidt_sobolev_norm(cols, 0.0, p)
}

/// Hilbert–Schmidt norm of `(1 - Δ)^{α/2} g_k`.
pub fn hilbert_schmidt_sobolev_norm(cols: &[SpectralField], alpha: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let Some(first) = cols.first() else {
        return Ok(0.0);
    };
    for c in cols {
        first.check_same_grid(c)?;
    }
    let q = quadrature_grid(first);
    let mut sq = vec![0.0; q.len()];
    for c in cols {
        for s in bessel_multiplier(c, alpha).to_physical_on(&q) {
            for (acc, v) in sq.iter_mut().zip(&s) {
                *acc += v * v;
            }
        }
    }
    let mag: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
    Ok(lp_of_samples(&mag, q.weight(), p))
}

/// Samples of a field and its first derivatives on the quadrature grid.
pub struct Sampled {
    pub grid: Grid,
    /// `values[j][x]`
    pub values: Vec<Vec<f64>>,
    /// `gradients[m][j][x] = ∂_m f_j(x)`
    pub gradients: Vec<Vec<Vec<f64>>>,
}

impl Sampled {
    pub fn new(f: &SpectralField) -> Self {
        let grid = quadrature_grid(f);
        let values = f.to_physical_on(&grid);
        let gradients = (0..f.grid().dim())
            .map(|m| derivative(f, m).to_physical_on(&grid))
            .collect();
        Self {
            grid,
            values,
            gradients,
        }
    }

    /// `Σ_j ∫ (p/2)² |f_j|^{p-2} |∇f_j|² dx`, the chain-rule form of
    /// `Σ_j ∫ |∇(|f_j|^{p/2})|² dx`.
    pub fn dissipation(&self, p: f64) -> f64 {
        let c = (p / 2.0) * (p / 2.0);
        let mut total = 0.0;
        for (j, vals) in self.values.iter().enumerate() {
            for (i, &v) in vals.iter().enumerate() {
                let g2: f64 = self.gradients.iter().map(|g| g[j][i] * g[j][i]).sum();
                if g2 == 0.0 {
                    continue;
                }
                let w = if p == 2.0 {
                    1.0
                } else if p == 3.0 {
                    v.abs()
                } else if p == 6.0 {
                    v.powi(4)
                } else {
                    v.abs().powf(p - 2.0)
                };
                total += w * g2;
            }
        }
        c * total * self.grid.weight()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        magnitude(&self.values)
    }

    pub fn lebesgue(&self, p: f64) -> f64 {
        lp_of_samples(&self.magnitude(), self.grid.weight(), p)
    }

    /// `∫ |∇(|f|^{p/2})|² dx` with `|f|` the Euclidean magnitude, using
    /// `∇|f| = Σ_j f_j ∇f_j / |f|` away from zeros of `f`.
    pub fn magnitude_dissipation(&self, p: f64) -> f64 {
        let c = (p / 2.0) * (p / 2.0);
        let d = self.gradients.len();
        let mut total = 0.0;
        for i in 0..self.grid.len() {
            let m2: f64 = self.values.iter().map(|v| v[i] * v[i]).sum();
            if m2 == 0.0 {
                continue;
            }
            let mut grad_sq = 0.0;
            for a in 0..d {
                let s: f64 = self
                    .values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v[i] * self.gradients[a][j][i])
                    .sum();
                grad_sq += s * s;
            }
            // |f|^{p-2} |∇|f||² = |f|^{p-4} |Σ_j f_j ∇f_j|²
            total += m2.powf((p - 4.0) / 2.0) * grad_sq;
        }
        c * total * self.grid.weight()
    }
}

/// `Σ_j ∫ |∇(|f_j|^{p/2})|² dx`, for `p ≥ 2`.
pub fn dissipation_functional(f: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::Domain(format!(
            "dissipation exponent must lie in [2, ∞), got {p}"
        )));
    }
    Ok(Sampled::new(f).dissipation(p))
}

/// `‖f‖_{L^{3p}}^p / ‖∇(|f|^{p/2})‖_{L²}²`.
pub fn poincare_ratio(f: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::Domain(format!(
            "Poincaré exponent must lie in [2, ∞), got {p}"
        )));
    }
    let s = Sampled::new(f);
    let den = s.magnitude_dissipation(p);
    if den == 0.0 {
        return Err(Error::UndefinedRatio(
            "gradient term vanishes (zero or constant field)".into(),
        ));
    }
    Ok(s.lebesgue(3.0 * p).powf(p) / den)
}

/// Norms entering the energy ledgers and cutoffs, computed from one sampling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldDiagnostics {
    pub l2: f64,
    pub l3: f64,
    pub l6: f64,
    pub h05: f64,
    pub h1: f64,
    pub h15: f64,
    pub h2: f64,
    pub dissip3: f64,
    pub dissip6: f64,
}

impl FieldDiagnostics {
    pub fn compute(f: &SpectralField) -> Self {
        if f.is_zero() {
            return Self::default();
        }
        let s = Sampled::new(f);
        let mag = s.magnitude();
        let w = s.grid.weight();
        Self {
            l2: sobolev_norm_plancherel(f, 0.0),
            l3: lp_of_samples(&mag, w, 3.0),
            l6: lp_of_samples(&mag, w, 6.0),
            h05: sobolev_norm_plancherel(f, 0.5),
            h1: sobolev_norm_plancherel(f, 1.0),
            h15: sobolev_norm_plancherel(f, 1.5),
            h2: sobolev_norm_plancherel(f, 2.0),
            dissip3: s.dissipation(3.0),
            dissip6: s.dissipation(6.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.l2,
            self.l3,
            self.l6,
            self.h05,
            self.h1,
            self.h15,
            self.h2,
            self.dissip3,
            self.dissip6,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}
