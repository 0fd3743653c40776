//! Unitary 2-D Fourier transforms, circular shifts, and the centered
//! crop/embed pair that moves signals between the search-window grid and
//! the smaller filter-support grid.
//!
//! Conventions fixed for the whole crate:
//!
//! - Both transform directions carry a `1/sqrt(N)` factor, so `dft2` is
//!   unitary and Parseval holds exactly. Any additional `sqrt(N)` a caller
//!   needs (the solver scales filter-side spectra that way) is applied
//!   explicitly at the call site.
//! - [`circular_shift`] by `delta` moves content forward: element `(i, j)`
//!   of the output is element `((i - d0) mod H, (j - d1) mod W)` of the
//!   input.
//! - Crop offsets use floor division, so for odd size differences the
//!   "centered" inner window is deterministic: `offset = (outer - inner) / 2`
//!   rounded down per axis.
//!
//! `crop_center` and `embed_center` realize a binary selection operator and
//! its adjoint without materializing the matrix: `crop(embed(w)) == w`
//! exactly, and `<crop(x), w> == <x, embed(w)>` for all `x`, `w`.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// A 2-D grid of cells, `h` rows by `w` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid2 {
    pub h: usize,
    pub w: usize,
}

impl Grid2 {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {h}x{w}"
            )));
        }
        Ok(Self { h, w })
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.h && c < self.w);
        r * self.w + c
    }

    /// Splits a flat row-major index back into `(row, col)`.
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.w, idx % self.w)
    }
}

impl std::fmt::Display for Grid2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.h, self.w)
    }
}

/// Real-valued row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    grid: Grid2,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(grid: Grid2) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid2, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "plane data length {} does not match grid {grid}",
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Builds a plane by evaluating `f(row, col)`.
    pub fn from_fn(grid: Grid2, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for r in 0..grid.h {
            for c in 0..grid.w {
                data.push(f(r, c));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[self.grid.index(r, c)]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let i = self.grid.index(r, c);
        &mut self.data[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Sum of squared entries.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index and value of the largest entry (first occurrence wins ties).
    pub fn argmax(&self) -> ((usize, usize), f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &v) in self.data.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (self.grid.coords(best.0), best.1)
    }
}

/// Complex-valued row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid2,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid2) -> Self {
        Self {
            grid,
            data: vec![Complex64::ZERO; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid2, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "spectrum data length {} does not match grid {grid}",
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[self.grid.index(r, c)]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut Complex64 {
        let i = self.grid.index(r, c);
        &mut self.data[i]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Spectrum {
        Spectrum {
            grid: self.grid,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }
}

/// A stack of spectra sharing one grid (one per feature channel).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStack {
    grid: Grid2,
    channels: Vec<Spectrum>,
}

impl SpectralStack {
    pub fn new(channels: Vec<Spectrum>) -> Result<Self> {
        let grid = channels
            .first()
            .ok_or_else(|| Error::InvalidParameter("spectral stack needs >= 1 channel".into()))?
            .grid();
        for ch in &channels {
            if ch.grid() != grid {
                return Err(Error::GridMismatch {
                    expected: grid,
                    got: ch.grid(),
                });
            }
        }
        Ok(Self { grid, channels })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, d: usize) -> &Spectrum {
        &self.channels[d]
    }

    pub fn channel_mut(&mut self, d: usize) -> &mut Spectrum {
        &mut self.channels[d]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Spectrum> {
        self.channels.iter()
    }
}

/// Placement of a centered inner window inside an outer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    outer: Grid2,
    inner: Grid2,
    offset: (usize, usize),
}

impl CropSpec {
    /// Centers `inner` within `outer`; the offset floors per axis.
    pub fn centered(outer: Grid2, inner: Grid2) -> Result<Self> {
        if inner.h > outer.h || inner.w > outer.w {
            return Err(Error::InvalidParameter(format!(
                "inner grid {inner} does not fit in outer {outer}"
            )));
        }
        Ok(Self {
            outer,
            inner,
            offset: ((outer.h - inner.h) / 2, (outer.w - inner.w) / 2),
        })
    }

    pub fn outer(&self) -> Grid2 {
        self.outer
    }

    pub fn inner(&self) -> Grid2 {
        self.inner
    }

    pub fn offset(&self) -> (usize, usize) {
        self.offset
    }
}

// One process-wide planner; plans are cached inside and the returned
// `Arc<dyn Fft>` handles are Send + Sync.
static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("fft planner poisoned");
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

fn transform2(data: &mut [Complex64], grid: Grid2, inverse: bool) {
    let row_fft = plan(grid.w, inverse);
    for row in data.chunks_mut(grid.w) {
        row_fft.process(row);
    }

    let col_fft = plan(grid.h, inverse);
    let mut col = vec![Complex64::ZERO; grid.h];
    for c in 0..grid.w {
        for r in 0..grid.h {
            col[r] = data[grid.index(r, c)];
        }
        col_fft.process(&mut col);
        for r in 0..grid.h {
            data[grid.index(r, c)] = col[r];
        }
    }

    let scale = 1.0 / (grid.len() as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Unitary forward 2-D transform of a real signal.
pub fn dft2(x: &Plane) -> Spectrum {
    let grid = x.grid();
    let mut data: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform2(&mut data, grid, false);
    Spectrum { grid, data }
}

/// Unitary inverse 2-D transform.
pub fn idft2(x: &Spectrum) -> Spectrum {
    let grid = x.grid();
    let mut data = x.as_slice().to_vec();
    transform2(&mut data, grid, true);
    Spectrum { grid, data }
}

/// Unitary inverse transform, keeping only the real part.
pub fn idft2_real(x: &Spectrum) -> Plane {
    let full = idft2(x);
    Plane {
        grid: full.grid,
        data: full.data.iter().map(|v| v.re).collect(),
    }
}

/// Circularly shifts content by `delta` (any signed amount).
pub fn circular_shift(x: &Plane, delta: (isize, isize)) -> Plane {
    let grid = x.grid();
    let (h, w) = (grid.h as isize, grid.w as isize);
    let mut out = Plane::zeros(grid);
    for r in 0..grid.h {
        let sr = (r as isize - delta.0).rem_euclid(h) as usize;
        for c in 0..grid.w {
            let sc = (c as isize - delta.1).rem_euclid(w) as usize;
            *out.at_mut(r, c) = x.at(sr, sc);
        }
    }
    out
}

/// Moves index `(0, 0)` to the grid center `(h/2, w/2)`.
pub fn fftshift(x: &Plane) -> Plane {
    let g = x.grid();
    circular_shift(x, (g.h as isize / 2, g.w as isize / 2))
}

/// Inverse of [`fftshift`] (distinct for odd sizes).
pub fn ifftshift(x: &Plane) -> Plane {
    let g = x.grid();
    circular_shift(x, (-(g.h as isize / 2), -(g.w as isize / 2)))
}

/// Extracts the centered inner window.
pub fn crop_center(x: &Plane, spec: &CropSpec) -> Result<Plane> {
    if x.grid() != spec.outer() {
        return Err(Error::GridMismatch {
            expected: spec.outer(),
            got: x.grid(),
        });
    }
    let inner = spec.inner();
    let (or, oc) = spec.offset();
    let mut out = Plane::zeros(inner);
    for r in 0..inner.h {
        for c in 0..inner.w {
            *out.at_mut(r, c) = x.at(or + r, oc + c);
        }
    }
    Ok(out)
}

/// Zero-pads an inner-grid signal into the centered position of the outer
/// grid. Adjoint of [`crop_center`].
pub fn embed_center(w: &Plane, spec: &CropSpec) -> Result<Plane> {
    if w.grid() != spec.inner() {
        return Err(Error::GridMismatch {
            expected: spec.inner(),
            got: w.grid(),
        });
    }
    let (or, oc) = spec.offset();
    let mut out = Plane::zeros(spec.outer());
    for r in 0..spec.inner().h {
        for c in 0..spec.inner().w {
            *out.at_mut(or + r, oc + c) = w.at(r, c);
        }
    }
    Ok(out)
}

/// Circular cross-correlation of `x` against `template`, evaluated through
/// the frequency domain. The output peak sits at the circular displacement
/// of the template content inside `x`:
/// `out(n) = sum_m x((m + n) mod N) * template(m)`.
pub fn cross_correlate(x: &Plane, template: &Plane) -> Result<Plane> {
    if x.grid() != template.grid() {
        return Err(Error::GridMismatch {
            expected: template.grid(),
            got: x.grid(),
        });
    }
    let grid = x.grid();
    let xf = dft2(x);
    let tf = dft2(template);
    let scale = (grid.len() as f64).sqrt();
    let mut prod = Spectrum::zeros(grid);
    for i in 0..grid.len() {
        prod.data[i] = xf.data[i] * tf.data[i].conj() * scale;
    }
    Ok(idft2_real(&prod))
}

#[inline]
fn signed_freq(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

/// Band-limited upsampling by zero-padding the spectrum to `fine`.
///
/// Original samples are preserved when the fine dimensions are integer
/// multiples of the coarse ones; even-size Nyquist bins are split across
/// the two mirrored fine bins so real inputs stay real.
pub fn spectral_upsample(x: &Plane, fine: Grid2) -> Result<Plane> {
    let coarse = x.grid();
    if fine.h < coarse.h || fine.w < coarse.w {
        return Err(Error::InvalidParameter(format!(
            "fine grid {fine} smaller than coarse {coarse}"
        )));
    }
    if fine == coarse {
        return Ok(x.clone());
    }
    let xf = dft2(x);
    let mut padded = Spectrum::zeros(fine);
    // Per-axis placements: a frequency usually lands in one fine bin; an
    // even-size Nyquist bin contributes half to +n/2 and half to -n/2.
    let placements = |k: usize, n: usize, fine_n: usize| -> Vec<(usize, f64)> {
        let f = signed_freq(k, n);
        if n % 2 == 0 && k == n / 2 && fine_n > n {
            let pos = (n / 2) % fine_n;
            let neg = (fine_n - n / 2) % fine_n;
            vec![(pos, 0.5), (neg, 0.5)]
        } else {
            vec![(f.rem_euclid(fine_n as isize) as usize, 1.0)]
        }
    };
    for r in 0..coarse.h {
        let rp = placements(r, coarse.h, fine.h);
        for c in 0..coarse.w {
            let cp = placements(c, coarse.w, fine.w);
            let v = xf.at(r, c);
            for &(fr, wr) in &rp {
                for &(fc, wc) in &cp {
                    *padded.at_mut(fr, fc) += v * (wr * wc);
                }
            }
        }
    }
    let scale = (fine.len() as f64 / coarse.len() as f64).sqrt();
    Ok(idft2_real(&padded.scaled(scale)))
}
