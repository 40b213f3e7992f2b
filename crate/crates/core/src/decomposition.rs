//! Splitting of critical initial data into a bounded low-frequency part and a
//! small remainder, and the dyadic decomposition of that remainder into
//! band-limited pieces with geometrically decaying `L³` norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{lebesgue_norm, sobolev_norm_plancherel, SpectralField};

/// Norm used to measure smallness and the norm used for the bounded part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Critical `L³`, subcritical `L⁶`.
    #[default]
    L3,
    /// Critical `H^{1/2}`, subcritical `H¹`.
    H12,
}

impl NormMode {
    pub fn critical(&self, f: &SpectralField) -> Result<f64> {
        match self {
            NormMode::L3 => lebesgue_norm(f, 3.0),
            NormMode::H12 => Ok(sobolev_norm_plancherel(f, 0.5)),
        }
    }

    pub fn subcritical(&self, f: &SpectralField) -> Result<f64> {
        match self {
            NormMode::L3 => lebesgue_norm(f, 6.0),
            NormMode::H12 => Ok(sobolev_norm_plancherel(f, 1.0)),
        }
    }

    pub fn critical_name(&self) -> &'static str {
        match self {
            NormMode::L3 => "L3",
            NormMode::H12 => "H0.5",
        }
    }

    pub fn subcritical_name(&self) -> &'static str {
        match self {
            NormMode::L3 => "L6",
            NormMode::H12 => "H1",
        }
    }
}

/// `P_{|n|² ≤ r2} f`.
pub fn ball_low_pass(f: &SpectralField, r2: f64) -> SpectralField {
    let g = f.grid().clone();
    f.apply_multiplier(|i| if g.k2(i) <= r2 { 1.0 } else { 0.0 })
}

/// Distinct values of `|n|²` carried by nonzero coefficients, ascending.
pub fn occupied_shells(f: &SpectralField) -> Vec<f64> {
    let g = f.grid();
    let mut shells: Vec<u64> = (0..g.len())
        .filter(|&i| f.coefficients().iter().any(|c| c[i].norm_sqr() > 0.0))
        .map(|i| g.k2(i) as u64)
        .collect();
    shells.sort_unstable();
    shells.dedup();
    shells.into_iter().map(|s| s as f64).collect()
}

#[derive(Debug, Clone)]
pub struct Split {
    pub w_bar_0: SpectralField,
    pub w_0: SpectralField,
    /// Squared cutoff radius of the low-pass part; `None` when `w̄₀ = 0`.
    pub cutoff_r2: Option<f64>,
    /// Subcritical norm of `w̄₀`.
    pub k0: f64,
    /// Critical norm of `w₀`.
    pub tail: f64,
}

/// `u₀ = w̄₀ + w₀` with `w̄₀` the smallest Euclidean-ball low-pass part, inside
/// the dealiased band, whose remainder has critical norm at most `epsilon0`.
pub fn split_initial_datum(u0: &SpectralField, epsilon0: f64, mode: NormMode) -> Result<Split> {
    if !(epsilon0 > 0.0 && epsilon0 < 0.5) {
        return Err(Error::Parameter(format!(
            "epsilon0 must lie in (0, 1/2), got {epsilon0}"
        )));
    }
    let total = mode.critical(u0)?;
    if total <= epsilon0 {
        return Ok(Split {
            w_bar_0: SpectralField::zeros(u0.grid(), u0.components()),
            w_0: u0.clone(),
            cutoff_r2: None,
            k0: 0.0,
            tail: total,
        });
    }
    let band = u0.grid().dealias_radius() as f64;
    let shells = occupied_shells(u0);
    let mut best = total;
    for &r2 in shells.iter().filter(|&&r2| r2 <= band * band) {
        let w_bar_0 = ball_low_pass(u0, r2);
        let w_0 = u0 - &w_bar_0;
        let tail = mode.critical(&w_0)?;
        best = best.min(tail);
        if tail <= epsilon0 {
            let k0 = mode.subcritical(&w_bar_0)?;
            return Ok(Split {
                w_bar_0,
                w_0,
                cutoff_r2: Some(r2),
                k0,
                tail,
            });
        }
    }
    let reach = shells.last().copied().unwrap_or(0.0).sqrt().ceil() as usize;
    let mut required_n = 3 * reach + 1;
    required_n += required_n % 2;
    Err(Error::Infeasible {
        best_tail: best,
        epsilon0,
        required_n: required_n.max(u0.grid().n() + 2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCertificate {
    pub level: usize,
    /// Squared radius of the low-pass filter defining this level.
    pub cutoff_r2: Option<f64>,
    pub critical: f64,
    pub subcritical: f64,
    /// Bound the critical norm must respect: `2‖w₀‖` at level 0, `‖w₀‖/4^k` after.
    pub bound: f64,
    /// Critical norm of `w₀ - Σ_{l≤k} v₀^{(l)}`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub mode: NormMode,
    pub w_bar_0: SpectralField,
    pub levels: Vec<SpectralField>,
    pub epsilon0: f64,
    pub k0: f64,
    pub w0_norm: f64,
    pub split_r2: Option<f64>,
    pub certificates: Vec<LevelCertificate>,
}

impl DecompositionResult {
    pub fn k_max(&self) -> usize {
        self.levels.len() - 1
    }

    /// `w₀ = Σ_k v₀^{(k)}` at the finest level.
    pub fn w0(&self) -> SpectralField {
        let mut s = SpectralField::zeros(self.w_bar_0.grid(), self.w_bar_0.components());
        for v in &self.levels {
            s += v;
        }
        s
    }

    /// Recomputes every certified norm and reports the largest discrepancy.
    pub fn recheck(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        let mut partial = SpectralField::zeros(self.w_bar_0.grid(), self.w_bar_0.components());
        let w0 = self.w0();
        for (v, c) in self.levels.iter().zip(&self.certificates) {
            partial += v;
            let resid = self.mode.critical(&(&w0 - &partial))?;
            worst = worst
                .max((self.mode.critical(v)? - c.critical).abs())
                .max((self.mode.subcritical(v)? - c.subcritical).abs())
                .max((resid - c.residual).abs());
        }
        Ok(worst)
    }
}

/// Splits `u0` and decomposes the remainder into `k_max + 1` levels.
pub fn decompose(
    u0: &SpectralField,
    epsilon0: f64,
    k_max: usize,
    mode: NormMode,
) -> Result<DecompositionResult> {
    let split = split_initial_datum(u0, epsilon0, mode)?;
    let mut result = dyadic_decompose(&split.w_0, k_max, mode)?;
    result.w_bar_0 = split.w_bar_0;
    result.k0 = split.k0;
    result.epsilon0 = epsilon0;
    result.split_r2 = split.cutoff_r2;
    Ok(result)
}

/// Successive band-limited approximation: at level `k` the smallest ball
/// low-pass of the running residual `r_k` leaving a residual of norm at most
/// `‖w₀‖/(2·4^{k+1})` becomes `v₀^{(k)}`.
pub fn dyadic_decompose(w0: &SpectralField, k_max: usize, mode: NormMode) -> Result<DecompositionResult> {
    let norm0 = mode.critical(w0)?;
    let mut residual = w0.clone();
    let mut residual_norm = norm0;
    let mut levels = Vec::with_capacity(k_max + 1);
    let mut certificates = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let scale = 4f64.powi(k as i32);
        let target = norm0 / (2.0 * 4.0 * scale);
        let (piece, r2, next_norm) = if residual.is_zero() {
            (residual.clone(), None, 0.0)
        } else if residual_norm <= target {
            (
                SpectralField::zeros(w0.grid(), w0.components()),
                None,
                residual_norm,
            )
        } else {
            let mut chosen = None;
            for r2 in occupied_shells(&residual) {
                let piece = ball_low_pass(&residual, r2);
                let rest = &residual - &piece;
                let rest_norm = mode.critical(&rest)?;
                if rest_norm <= target {
                    chosen = Some((piece, Some(r2), rest_norm));
                    break;
                }
            }
            chosen.expect("the full residual is always an admissible piece")
        };
        residual -= &piece;
        residual_norm = next_norm;
        let bound = if k == 0 { 2.0 * norm0 } else { norm0 / scale };
        let critical = mode.critical(&piece)?;
        if critical > bound {
            return Err(Error::Construction {
                level: k,
                detail: format!("norm {critical:.6e} exceeds bound {bound:.6e}"),
            });
        }
        certificates.push(LevelCertificate {
            level: k,
            cutoff_r2: r2,
            critical,
            subcritical: mode.subcritical(&piece)?,
            bound,
            residual: residual_norm,
        });
        levels.push(piece);
    }
    let tail_bound = norm0 / (3.0 * 4f64.powi(k_max as i32));
    if residual_norm > tail_bound {
        return Err(Error::Construction {
            level: k_max,
            detail: format!("residual {residual_norm:.6e} exceeds {tail_bound:.6e}"),
        });
    }
    Ok(DecompositionResult {
        mode,
        w_bar_0: SpectralField::zeros(w0.grid(), w0.components()),
        levels,
        epsilon0: norm0,
        k0: 0.0,
        w0_norm: norm0,
        split_r2: None,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::{random_solenoidal, shear, Spectrum};
    use crate::spectral::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_datum_is_all_remainder() {
        let g = Grid::new(2, 16).unwrap();
        let u = shear(&g, 0.001);
        let s = split_initial_datum(&u, 0.05, NormMode::L3).unwrap();
        assert!(s.w_bar_0.is_zero());
        assert_eq!(s.w_0, u);
        assert_eq!(s.k0, 0.0);
    }

    #[test]
    fn band_limited_datum_is_all_low_pass() {
        let g = Grid::new(2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_solenoidal(&g, &Spectrum::Flat { max_radius: 2.0 }, &mut rng);
        let s = split_initial_datum(&u, 0.01, NormMode::L3).unwrap();
        assert!(s.w_0.coefficient_energy() < 1e-28 || lebesgue_norm(&s.w_0, 3.0).unwrap() <= 0.01);
        assert!(s.cutoff_r2.unwrap() <= 4.0);
    }

    #[test]
    fn single_mode_is_level_zero() {
        let g = Grid::new(2, 16).unwrap();
        let mut w = SpectralField::zero_vector(&g);
        let c = num_complex::Complex64::new(0.0, -0.005);
        w.set_mode([1, 0, 0], &[num_complex::Complex64::new(0.0, 0.0), c]).unwrap();
        let d = dyadic_decompose(&w, 6, NormMode::L3).unwrap();
        assert_eq!(d.levels[0], w);
        assert!(d.levels[1..].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn zero_datum_gives_zero_levels() {
        let g = Grid::new(2, 16).unwrap();
        let w = SpectralField::zero_vector(&g);
        let d = dyadic_decompose(&w, 4, NormMode::L3).unwrap();
        assert!(d.levels.iter().all(|v| v.is_zero()));
        assert_eq!(d.recheck().unwrap(), 0.0);
    }

    #[test]
    fn infeasible_split_names_a_finer_grid() {
        let g = Grid::new(2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_solenoidal(&g, &Spectrum::Flat { max_radius: 7.0 }, &mut rng);
        match split_initial_datum(&u, 0.01, NormMode::L3) {
            Err(Error::Infeasible { required_n, best_tail, .. }) => {
                assert!(required_n >= 22);
                assert!(best_tail > 0.01);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}
