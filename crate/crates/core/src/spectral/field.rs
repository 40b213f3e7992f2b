//! Truncated Fourier representation of real periodic fields.
//!
//! Coefficients are normalized so that `u(x) = Σ_n û(n) e^{i n·x}`, which makes
//! `∫ |u|² dx = (2π)^d Σ |û(n)|²`.

use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

use num_complex::Complex64;

use super::grid::{Grid, DROPPED};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
}

/// Real samples of a scalar on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarDensity {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// `|f_j|^{power}` sampled on `grid`.
    pub fn abs_power(f: &SpectralField, component: usize, power: f64, grid: &Grid) -> Self {
        let phys = f.to_physical_on(grid);
        Self {
            grid: grid.clone(),
            values: phys[component].iter().map(|v| v.abs().powf(power)).collect(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.weight()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid, components: usize) -> Self {
        Self {
            grid: grid.clone(),
            comps: vec![vec![ZERO; grid.len()]; components],
        }
    }

    /// Zero vector field with one component per spatial axis.
    pub fn zero_vector(grid: &Grid) -> Self {
        Self::zeros(grid, grid.dim())
    }

    /// Builds a field from raw coefficient vectors. Hermitian symmetry is
    /// imposed and Nyquist modes are cleared.
    pub fn from_coefficients(grid: &Grid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch(
                "coefficient vector length does not match grid".into(),
            ));
        }
        let mut f = Self {
            grid: grid.clone(),
            comps,
        };
        f.symmetrize();
        Ok(f)
    }

    /// Transforms real samples to coefficients. Nyquist modes are dropped.
    pub fn from_physical(grid: &Grid, samples: &[Vec<f64>]) -> Result<Self> {
        if samples.iter().any(|s| s.len() != grid.len()) {
            return Err(Error::GridMismatch(
                "sample vector length does not match grid".into(),
            ));
        }
        let len = grid.len();
        let scale = 1.0 / len as f64;
        let mut comps = Vec::with_capacity(samples.len());
        for pair in samples.chunks(2) {
            let mut buf: Vec<Complex64> = match pair {
                [a, b] => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
                [a] => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
                _ => unreachable!(),
            };
            grid.fft_forward(&mut buf);
            let mut first = vec![ZERO; len];
            let mut second = vec![ZERO; len];
            for i in 0..len {
                if grid.is_nyquist(i) {
                    continue;
                }
                let z = buf[i] * scale;
                let zc = buf[grid.neg_index(i)].conj() * scale;
                first[i] = (z + zc) * 0.5;
                second[i] = (z - zc) * Complex64::new(0.0, -0.5);
            }
            comps.push(first);
            if pair.len() == 2 {
                comps.push(second);
            }
        }
        Ok(Self {
            grid: grid.clone(),
            comps,
        })
    }

    /// Samples `f` at every grid point and transforms.
    pub fn from_fn<F>(grid: &Grid, components: usize, f: F) -> Self
    where
        F: Fn([f64; 3]) -> [f64; 3],
    {
        assert!(components <= 3);
        let mut samples = vec![vec![0.0; grid.len()]; components];
        for i in 0..grid.len() {
            let v = f(grid.point(i));
            for (c, s) in samples.iter_mut().enumerate() {
                s[i] = v[c];
            }
        }
        Self::from_physical(grid, &samples).expect("samples built on the grid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, j: usize) -> &[Complex64] {
        &self.comps[j]
    }

    pub fn component_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.comps[j]
    }

    pub fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.comps
    }

    pub fn coefficients(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    /// Coefficient vector at wavevector `k` (zero if not representable).
    pub fn mode(&self, k: [i32; 3]) -> Vec<Complex64> {
        match self.grid.index_of(k) {
            Some(i) => self.comps.iter().map(|c| c[i]).collect(),
            None => vec![ZERO; self.comps.len()],
        }
    }

    /// Sets `û(k) = value` and `û(-k) = conj(value)`.
    pub fn set_mode(&mut self, k: [i32; 3], value: &[Complex64]) -> Result<()> {
        let i = self
            .grid
            .index_of(k)
            .ok_or_else(|| Error::Domain(format!("wavevector {k:?} not representable")))?;
        let j = self.grid.neg_index(i);
        for (c, v) in self.comps.iter_mut().zip(value) {
            if i == j {
                c[i] = Complex64::new(v.re, 0.0);
            } else {
                c[i] = *v;
                c[j] = v.conj();
            }
        }
        Ok(())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.comps.len() != other.comps.len() {
            return Err(Error::GridMismatch(format!(
                "{:?} with {} components vs {:?} with {}",
                self.grid,
                self.comps.len(),
                other.grid,
                other.comps.len()
            )));
        }
        Ok(())
    }

    /// Imposes `û(-n) = conj û(n)` and zeroes Nyquist modes.
    pub fn symmetrize(&mut self) {
        let g = &self.grid;
        for c in &mut self.comps {
            for i in 0..g.len() {
                if g.is_nyquist(i) {
                    c[i] = ZERO;
                    continue;
                }
                let j = g.neg_index(i);
                if j < i {
                    continue;
                }
                let avg = (c[i] + c[j].conj()) * 0.5;
                c[i] = avg;
                c[j] = avg.conj();
            }
        }
    }

    pub fn remove_mean(&mut self) {
        for c in &mut self.comps {
            c[0] = ZERO;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().flatten().all(|z| *z == ZERO)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c[0].norm()).collect()
    }

    /// Largest `|n · û(n)| / |û(n)|` over nonzero modes with nonzero coefficient.
    pub fn max_relative_divergence(&self) -> f64 {
        let g = &self.grid;
        let d = g.dim().min(self.comps.len());
        let mut worst: f64 = 0.0;
        for i in 1..g.len() {
            let k = g.wavevector(i);
            let mut div = ZERO;
            let mut mag = 0.0;
            for (a, c) in self.comps.iter().enumerate().take(d) {
                div += c[i] * k[a] as f64;
                mag += c[i].norm_sqr();
            }
            if mag > 0.0 {
                worst = worst.max(div.norm() / mag.sqrt());
            }
        }
        worst
    }

    /// Largest `|n · û(n)|` over all modes.
    pub fn max_divergence(&self) -> f64 {
        let g = &self.grid;
        let d = g.dim().min(self.comps.len());
        (0..g.len())
            .map(|i| {
                let k = g.wavevector(i);
                (0..d)
                    .map(|a| self.comps[a][i] * k[a] as f64)
                    .sum::<Complex64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    /// Worst violation of Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for c in &self.comps {
            for i in 0..g.len() {
                worst = worst.max((c[i] - c[g.neg_index(i)].conj()).norm());
            }
        }
        worst
    }

    /// Real samples of every component on `target`, which must have at least as
    /// many points per axis as the field's own grid.
    pub fn to_physical_on(&self, target: &Grid) -> Vec<Vec<f64>> {
        let map = self.grid.embed_map(target);
        let len = target.len();
        let mut out = Vec::with_capacity(self.comps.len());
        for pair in self.comps.chunks(2) {
            let mut buf = vec![ZERO; len];
            let i_unit = Complex64::new(0.0, 1.0);
            for (src, &dst) in map.iter().enumerate() {
                if dst == DROPPED {
                    continue;
                }
                buf[dst] = match pair {
                    [a, b] => a[src] + i_unit * b[src],
                    [a] => a[src],
                    _ => unreachable!(),
                };
            }
            target.fft_inverse(&mut buf);
            out.push(buf.iter().map(|z| z.re).collect());
            if pair.len() == 2 {
                out.push(buf.iter().map(|z| z.im).collect());
            }
        }
        out
    }

    pub fn to_physical(&self) -> Vec<Vec<f64>> {
        self.to_physical_on(&self.grid)
    }

    /// Copies the coefficients onto another grid of the same dimension,
    /// truncating modes that do not fit.
    pub fn resample(&self, target: &Grid) -> Self {
        let mut out = Self::zeros(target, self.comps.len());
        if target.n() >= self.grid.n() {
            let map = self.grid.embed_map(target);
            for (dst, src) in out.comps.iter_mut().zip(&self.comps) {
                for (i, &m) in map.iter().enumerate() {
                    if m != DROPPED {
                        dst[m] = src[i];
                    }
                }
            }
        } else {
            let map = target.embed_map(&self.grid);
            for (dst, src) in out.comps.iter_mut().zip(&self.comps) {
                for (i, &m) in map.iter().enumerate() {
                    if m != DROPPED {
                        dst[i] = src[m];
                    }
                }
            }
        }
        out
    }

    /// Multiplies every mode by a real symbol `m(idx)`.
    pub fn apply_multiplier<F: Fn(usize) -> f64>(&self, m: F) -> Self {
        let mut out = self.clone();
        out.apply_multiplier_in_place(m);
        out
    }

    pub fn apply_multiplier_in_place<F: Fn(usize) -> f64>(&mut self, m: F) {
        let len = self.grid.len();
        let symbol: Vec<f64> = (0..len).map(m).collect();
        for c in &mut self.comps {
            for (z, s) in c.iter_mut().zip(&symbol) {
                *z *= *s;
            }
        }
    }

    /// Keeps modes inside the 2/3-rule band.
    pub fn dealiased(&self) -> Self {
        let g = self.grid.clone();
        self.apply_multiplier(|i| if g.is_dealiased(i) { 1.0 } else { 0.0 })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn scale(&mut self, s: f64) {
        for z in self.comps.iter_mut().flatten() {
            *z *= s;
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert!(self.check_same_grid(other).is_ok());
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += q * a;
            }
        }
    }

    /// L² inner product `∫ u · v dx`.
    pub fn inner(&self, other: &Self) -> f64 {
        let s: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x * y.conj()).re))
            .sum();
        s * self.grid.volume()
    }

    /// `Σ_n |û(n)|²` over all components.
    pub fn coefficient_energy(&self) -> f64 {
        self.comps.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Largest coefficient magnitude of `self - other`.
    pub fn max_coefficient_distance(&self, other: &Self) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn physical_round_trip() {
        let g = Grid::new(2, 16).unwrap();
        let f = SpectralField::from_fn(&g, 2, |x| {
            [(x[0] + 2.0 * x[1]).sin(), (3.0 * x[0]).cos() * x[1].sin(), 0.0]
        });
        let back = SpectralField::from_physical(&g, &f.to_physical()).unwrap();
        assert!(f.max_coefficient_distance(&back) < 1e-14);
        assert!(f.hermitian_defect() < 1e-15);
    }

    #[test]
    fn sine_has_the_expected_coefficients() {
        let g = Grid::new(3, 8).unwrap();
        let f = SpectralField::from_fn(&g, 1, |x| [x[0].sin(), 0.0, 0.0]);
        let c = f.mode([1, 0, 0])[0];
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        let energy = f.inner(&f);
        assert!((energy - (2.0 * PI).powi(3) / 2.0).abs() < 1e-10);
    }

    #[test]
    fn oversampled_samples_match_direct_evaluation() {
        let g = Grid::new(2, 8).unwrap();
        let fine = g.refined(2);
        let f = SpectralField::from_fn(&g, 1, |x| [(x[0] - x[1]).cos() + (2.0 * x[1]).sin(), 0.0, 0.0]);
        let samples = f.to_physical_on(&fine);
        for i in 0..fine.len() {
            let x = fine.point(i);
            let exact = (x[0] - x[1]).cos() + (2.0 * x[1]).sin();
            assert!((samples[0][i] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn resample_up_then_down_is_identity() {
        let g = Grid::new(2, 16).unwrap();
        let f = SpectralField::from_fn(&g, 2, |x| [x[0].sin() * x[1].cos(), (x[0] + x[1]).cos(), 0.0]);
        let back = f.resample(&g.refined(2)).resample(&g);
        assert!(f.max_coefficient_distance(&back) < 1e-15);
    }
}
