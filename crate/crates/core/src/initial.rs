//! Initial data: closed-form flows and random divergence-free fields.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spectral::{leray_project, lebesgue_norm, Grid, SpectralField};

/// Radial amplitude profile of random fields; modes beyond `max_radius` are
/// empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Spectrum {
    Flat { max_radius: f64 },
    PowerLaw { exponent: f64, max_radius: f64 },
    Exponential { length: f64, max_radius: f64 },
}

impl Spectrum {
    pub fn amplitude(&self, k: f64) -> f64 {
        match *self {
            Spectrum::Flat { max_radius } => (k <= max_radius) as u8 as f64,
            Spectrum::PowerLaw {
                exponent,
                max_radius,
            } => {
                if k <= max_radius {
                    k.powf(-exponent)
                } else {
                    0.0
                }
            }
            Spectrum::Exponential { length, max_radius } => {
                if k <= max_radius {
                    (-k / length).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Random real, divergence-free, mean-zero field with independent Gaussian
/// coefficients shaped by `spectrum`.
pub fn random_solenoidal<R: Rng + ?Sized>(grid: &Grid, spectrum: &Spectrum, rng: &mut R) -> SpectralField {
    random_field(grid, grid.dim(), spectrum, rng, true)
}

/// Random real field with `components` components and zero mean. When
/// `solenoidal` is set the result is Leray-projected.
pub fn random_field<R: Rng + ?Sized>(
    grid: &Grid,
    components: usize,
    spectrum: &Spectrum,
    rng: &mut R,
    solenoidal: bool,
) -> SpectralField {
    let mut f = SpectralField::zeros(grid, components);
    for i in 1..grid.len() {
        if grid.is_nyquist(i) {
            continue;
        }
        let a = spectrum.amplitude(grid.k2(i).sqrt());
        for c in f.components_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c[i] = num_complex::Complex64::new(re * a, im * a);
        }
    }
    f.symmetrize();
    if solenoidal {
        f = leray_project(&f).expect("field has one component per axis");
    }
    f
}

/// Rescales `f` to the requested `L^p` norm (zero fields are returned as is).
pub fn normalized(f: &SpectralField, p: f64, target: f64) -> Result<SpectralField> {
    let n = lebesgue_norm(f, p)?;
    Ok(if n > 0.0 { f.scaled(target / n) } else { f.clone() })
}

/// `(sin x₁ cos x₂, -cos x₁ sin x₂)`, extended by a zero third component in 3D.
pub fn taylor_green(grid: &Grid, amplitude: f64) -> SpectralField {
    SpectralField::from_fn(grid, grid.dim(), |x| {
        [
            amplitude * x[0].sin() * x[1].cos(),
            -amplitude * x[0].cos() * x[1].sin(),
            0.0,
        ]
    })
}

/// `(0, a sin x₁, 0)`: a single-mode shear, divergence-free in any dimension.
pub fn shear(grid: &Grid, amplitude: f64) -> SpectralField {
    SpectralField::from_fn(grid, grid.dim(), |x| [0.0, amplitude * x[0].sin(), 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_fields_satisfy_the_field_invariants() {
        let g = Grid::new(3, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_solenoidal(&g, &Spectrum::Flat { max_radius: 3.0 }, &mut rng);
        assert!(!f.is_zero());
        assert!(f.max_relative_divergence() < 1e-12);
        assert!(f.hermitian_defect() < 1e-15);
        assert_eq!(f.mean(), vec![0.0; 3]);
    }

    #[test]
    fn taylor_green_is_divergence_free() {
        let g = Grid::new(2, 16).unwrap();
        assert!(taylor_green(&g, 1.0).max_divergence() < 1e-14);
    }
}
