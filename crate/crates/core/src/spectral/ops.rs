//! Leray projection, spectral derivatives and the dealiased advection term.

use num_complex::Complex64;

use super::field::SpectralField;
use crate::error::{Error, Result};

fn require_vector(f: &SpectralField, what: &str) -> Result<()> {
    if f.components() != f.grid().dim() {
        return Err(Error::GridMismatch(format!(
            "{what} needs {} components, field has {}",
            f.grid().dim(),
            f.components()
        )));
    }
    Ok(())
}

/// Orthogonal projection onto divergence-free, mean-zero fields:
/// `ĝ(n) = (I - n nᵀ/|n|²) f̂(n)`, `ĝ(0) = 0`.
pub fn leray_project(f: &SpectralField) -> Result<SpectralField> {
    let mut g = f.clone();
    leray_project_in_place(&mut g)?;
    Ok(g)
}

pub fn leray_project_in_place(f: &mut SpectralField) -> Result<()> {
    require_vector(f, "Leray projection")?;
    let grid = f.grid().clone();
    let d = grid.dim();
    let comps = f.components_mut();
    for c in comps.iter_mut() {
        c[0] = Complex64::new(0.0, 0.0);
    }
    for i in 1..grid.len() {
        let k = grid.wavevector(i);
        let mut dot = Complex64::new(0.0, 0.0);
        for a in 0..d {
            dot += comps[a][i] * k[a] as f64;
        }
        let dot = dot / grid.k2(i);
        for a in 0..d {
            comps[a][i] -= dot * k[a] as f64;
        }
    }
    Ok(())
}

/// `∂_axis f`, componentwise.
pub fn derivative(f: &SpectralField, axis: usize) -> SpectralField {
    let grid = f.grid().clone();
    let mut out = f.clone();
    for c in out.components_mut() {
        for (i, z) in c.iter_mut().enumerate() {
            let k = grid.wavevector(i)[axis] as f64;
            *z = Complex64::new(-z.im * k, z.re * k);
        }
    }
    out
}

/// Divergence `Σ_a ∂_a f_a` as a one-component field.
pub fn divergence(f: &SpectralField) -> Result<SpectralField> {
    require_vector(f, "divergence")?;
    let grid = f.grid().clone();
    let mut out = SpectralField::zeros(&grid, 1);
    let dst = out.component_mut(0);
    for a in 0..grid.dim() {
        let src = f.component(a);
        for i in 0..grid.len() {
            let k = grid.wavevector(i)[a] as f64;
            dst[i] += Complex64::new(-src[i].im * k, src[i].re * k);
        }
    }
    Ok(out)
}

/// `𝒫((a·∇)b)`, evaluated pseudospectrally with 2/3-rule dealiasing of the
/// inputs and the product.
pub fn advection(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    require_vector(a, "advection")?;
    a.check_same_grid(b)?;
    let grid = a.grid().clone();
    let d = grid.dim();
    let a_phys = a.dealiased().to_physical();
    let b_d = b.dealiased();
    let mut products = vec![vec![0.0; grid.len()]; d];
    for m in 0..d {
        let grad = derivative(&b_d, m).to_physical();
        for (j, prod) in products.iter_mut().enumerate() {
            for ((p, am), g) in prod.iter_mut().zip(&a_phys[m]).zip(&grad[j]) {
                *p += am * g;
            }
        }
    }
    let mut out = SpectralField::from_physical(&grid, &products)?.dealiased();
    leray_project_in_place(&mut out)?;
    Ok(out)
}

/// `𝒫((u·∇)u)`.
pub fn nonlinear_term(u: &SpectralField) -> Result<SpectralField> {
    advection(u, u)
}
