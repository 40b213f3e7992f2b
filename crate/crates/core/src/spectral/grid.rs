//! Uniform periodic grids on the torus `[0, 2π)^d` and their FFT plans.
//!
//! A [`Grid`] is a cheap handle: the wavevector tables and FFT plans behind it
//! are built once per `(dim, n_per_axis)` and shared process-wide.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

struct GridData {
    dim: usize,
    n: usize,
    len: usize,
    wavevectors: Vec<[i32; 3]>,
    k2: Vec<f64>,
    neg_index: Vec<usize>,
    nyquist: Vec<bool>,
    dealiased: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

type GridCache = Mutex<HashMap<(usize, usize), Arc<GridData>>>;
type EmbedCache = Mutex<HashMap<(usize, usize, usize), Arc<Vec<usize>>>>;

fn grid_cache() -> &'static GridCache {
    static CACHE: OnceLock<GridCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn embed_cache() -> &'static EmbedCache {
    static CACHE: OnceLock<EmbedCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Marker for spectral modes that do not exist on a target grid.
pub const DROPPED: usize = usize::MAX;

/// Signed wavenumber of FFT index `i` on an `n`-point axis.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i32 {
    if i < n / 2 {
        i as i32
    } else {
        i as i32 - n as i32
    }
}

#[derive(Clone)]
pub struct Grid {
    data: Arc<GridData>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid({}D, {}^{})", self.dim(), self.n(), self.dim())
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.n() == other.n()
    }
}

impl Eq for Grid {}

impl Grid {
    /// Builds (or fetches) a grid of `n_per_axis^dim` points.
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Parameter(format!(
                "grid dimension must be 2 or 3, got {dim}"
            )));
        }
        if n_per_axis < 8 || n_per_axis % 2 != 0 {
            return Err(Error::Parameter(format!(
                "n_per_axis must be even and >= 8, got {n_per_axis}"
            )));
        }
        let mut cache = grid_cache().lock().expect("grid cache poisoned");
        let data = cache
            .entry((dim, n_per_axis))
            .or_insert_with(|| Arc::new(GridData::build(dim, n_per_axis)))
            .clone();
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    pub fn n(&self) -> usize {
        self.data.n
    }

    /// Total number of grid points (equivalently, spectral modes).
    pub fn len(&self) -> usize {
        self.data.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.len == 0
    }

    /// Lebesgue measure of the torus, `(2π)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim() as i32)
    }

    /// Trapezoidal quadrature weight per grid point.
    pub fn weight(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Largest per-axis wavenumber kept by the 2/3 dealiasing rule.
    pub fn dealias_radius(&self) -> usize {
        (self.n() - 1) / 3
    }

    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i32; 3] {
        self.data.wavevectors[idx]
    }

    #[inline]
    pub fn k2(&self, idx: usize) -> f64 {
        self.data.k2[idx]
    }

    pub fn k2_table(&self) -> &[f64] {
        &self.data.k2
    }

    /// Flat index of the mode `-k`.
    #[inline]
    pub fn neg_index(&self, idx: usize) -> usize {
        self.data.neg_index[idx]
    }

    /// True when any axis sits at the Nyquist wavenumber `-n/2`.
    #[inline]
    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.data.nyquist[idx]
    }

    #[inline]
    pub fn is_dealiased(&self, idx: usize) -> bool {
        self.data.dealiased[idx]
    }

    /// Flat index of wavevector `k`, if it is representable (Nyquist excluded).
    pub fn index_of(&self, k: [i32; 3]) -> Option<usize> {
        let n = self.n() as i32;
        let half = n / 2;
        let mut idx = 0usize;
        for axis in 0..self.dim() {
            let ka = k[axis];
            if ka <= -half || ka >= half {
                return None;
            }
            let i = if ka < 0 { ka + n } else { ka } as usize;
            idx = idx * self.n() + i;
        }
        if self.dim() == 2 && k[2] != 0 {
            return None;
        }
        Some(idx)
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n();
        let h = 2.0 * PI / n as f64;
        let mut out = [0.0; 3];
        let mut rem = idx;
        for axis in (0..self.dim()).rev() {
            out[axis] = (rem % n) as f64 * h;
            rem /= n;
        }
        out
    }

    /// The grid with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid::new(self.dim(), self.n() * factor).expect("refined grid parameters are valid")
    }

    /// Map from this grid's flat indices to `target`'s for the same wavevector.
    /// Nyquist modes and modes outside `target` map to [`DROPPED`].
    pub fn embed_map(&self, target: &Grid) -> Arc<Vec<usize>> {
        assert_eq!(self.dim(), target.dim(), "embedding across dimensions");
        let key = (self.dim(), self.n(), target.n());
        let mut cache = embed_cache().lock().expect("embed cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| {
                Arc::new(
                    (0..self.len())
                        .map(|i| {
                            if self.is_nyquist(i) {
                                DROPPED
                            } else {
                                target.index_of(self.wavevector(i)).unwrap_or(DROPPED)
                            }
                        })
                        .collect(),
                )
            })
            .clone()
    }

    /// Unnormalized forward DFT (`e^{-i k x}`) over every axis, in place.
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.data.forward);
    }

    /// Unnormalized inverse DFT (`e^{+i k x}`) over every axis, in place.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.data.inverse);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n();
        let len = self.len();
        assert_eq!(data.len(), len, "buffer length does not match grid");
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut lines = vec![Complex64::new(0.0, 0.0); len];
        for axis in 0..self.dim() {
            let stride = n.pow((self.dim() - 1 - axis) as u32);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            let mut line = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    let dst = &mut lines[line * n..(line + 1) * n];
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = data[base + j * stride];
                    }
                    line += 1;
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            let mut line = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    let src = &lines[line * n..(line + 1) * n];
                    for (j, s) in src.iter().enumerate() {
                        data[base + j * stride] = *s;
                    }
                    line += 1;
                }
            }
        }
    }
}

impl GridData {
    fn build(dim: usize, n: usize) -> Self {
        let len = n.pow(dim as u32);
        let half = n as i32 / 2;
        let radius = ((n - 1) / 3) as i32;
        let mut wavevectors = Vec::with_capacity(len);
        let mut k2 = Vec::with_capacity(len);
        let mut neg_index = Vec::with_capacity(len);
        let mut nyquist = Vec::with_capacity(len);
        let mut dealiased = Vec::with_capacity(len);
        for idx in 0..len {
            let mut k = [0i32; 3];
            let mut neg = 0usize;
            let mut rem = idx;
            let mut digits = [0usize; 3];
            for axis in (0..dim).rev() {
                digits[axis] = rem % n;
                rem /= n;
            }
            for axis in 0..dim {
                let i = digits[axis];
                k[axis] = wavenumber(i, n);
                neg = neg * n + (n - i) % n;
            }
            wavevectors.push(k);
            k2.push(k.iter().map(|&c| (c as f64) * (c as f64)).sum());
            neg_index.push(neg);
            nyquist.push(k[..dim].iter().any(|&c| c == -half));
            dealiased.push(k[..dim].iter().all(|&c| c.abs() <= radius));
        }
        let mut planner = FftPlanner::new();
        Self {
            dim,
            n,
            len,
            wavevectors,
            k2,
            neg_index,
            nyquist,
            dealiased,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n_per_axis: usize,
}

impl From<&Grid> for GridSpec {
    fn from(g: &Grid) -> Self {
        Self {
            dim: g.dim(),
            n_per_axis: g.n(),
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n_per_axis)
    }
}
