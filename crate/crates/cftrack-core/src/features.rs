//! Image patches and the feature backends that turn them into
//! multi-channel stacks for the solver.
//!
//! Three backends: plain mean-subtracted intensity, orientation-binned
//! gradient cells (a HOG-style descriptor: unsigned orientations, 9 bins,
//! no block normalization), and ingestion of externally precomputed channel
//! files for deep features produced outside this crate.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{dft2, Grid2, Plane, SpectralStack};

/// Number of orientation bins used by the gradient-cell backend.
pub const GRADIENT_BINS: usize = 9;

/// Magic bytes of the external channel file format.
pub const CHANNEL_FILE_MAGIC: &[u8; 4] = b"CFB1";

/// Grayscale frame, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "frame {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Pixel value with replicated edges for out-of-frame coordinates.
    #[inline]
    pub fn sample_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer positions), edges replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let v00 = self.sample_clamped(x0, y0);
        let v01 = self.sample_clamped(x0 + 1, y0);
        let v10 = self.sample_clamped(x0, y0 + 1);
        let v11 = self.sample_clamped(x0 + 1, y0 + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
    }
}

/// Multi-channel feature map over one spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    grid: Grid2,
    cell_size: usize,
    channels: Vec<Plane>,
}

impl FeatureStack {
    pub fn new(cell_size: usize, channels: Vec<Plane>) -> Result<Self> {
        let grid = channels
            .first()
            .ok_or_else(|| Error::InvalidParameter("feature stack needs >= 1 channel".into()))?
            .grid();
        for ch in &channels {
            if ch.grid() != grid {
                return Err(Error::GridMismatch {
                    expected: grid,
                    got: ch.grid(),
                });
            }
            if !ch.is_finite() {
                return Err(Error::InvalidParameter(
                    "feature stack contains non-finite values".into(),
                ));
            }
        }
        if cell_size == 0 {
            return Err(Error::InvalidParameter("cell_size must be >= 1".into()));
        }
        Ok(Self {
            grid,
            cell_size,
            channels,
        })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, d: usize) -> &Plane {
        &self.channels[d]
    }

    pub fn channel_mut(&mut self, d: usize) -> &mut Plane {
        &mut self.channels[d]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Plane> {
        self.channels.iter()
    }

    /// Unitary spectra of all channels.
    pub fn to_spectral(&self) -> SpectralStack {
        SpectralStack::new(self.channels.iter().map(dft2).collect()).expect("channels share a grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureBackend {
    Grayscale,
    GradientCells,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    None,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub backend: FeatureBackend,
    pub cell_size: usize,
    pub window: Window,
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            backend: FeatureBackend::GradientCells,
            cell_size: 4,
            window: Window::Cosine,
            normalize: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 {
            return Err(Error::InvalidParameter("cell_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cuts the axis-aligned patch of size `size * scale` centered at `center`
/// out of `frame` and resamples it bilinearly to `out` pixels. Pixels
/// outside the frame replicate the nearest edge.
pub fn extract_patch(
    frame: &Frame,
    center: (f64, f64),
    size: (f64, f64),
    scale: f64,
    out: Grid2,
) -> Result<Plane> {
    if !center.0.is_finite() || !center.1.is_finite() || !scale.is_finite() {
        return Err(Error::InvalidParameter(
            "non-finite patch center or scale".into(),
        ));
    }
    if size.0 <= 0.0 || size.1 <= 0.0 || scale <= 0.0 {
        return Err(Error::InvalidParameter(
            "patch size and scale must be positive".into(),
        ));
    }
    let pw = size.0 * scale;
    let ph = size.1 * scale;
    let left = center.0 - pw / 2.0;
    let top = center.1 - ph / 2.0;
    Ok(Plane::from_fn(out, |r, c| {
        let sx = left + (c as f64 + 0.5) * pw / out.w as f64 - 0.5;
        let sy = top + (r as f64 + 0.5) * ph / out.h as f64 - 0.5;
        frame.sample_bilinear(sx, sy)
    }))
}

fn pool_cells(patch: &Plane, cell: usize) -> Plane {
    let g = patch.grid();
    let out = Grid2 {
        h: g.h / cell,
        w: g.w / cell,
    };
    Plane::from_fn(out, |r, c| {
        let mut acc = 0.0;
        for dr in 0..cell {
            for dc in 0..cell {
                acc += patch.at(r * cell + dr, c * cell + dc);
            }
        }
        acc / (cell * cell) as f64
    })
}

/// Central-difference gradient with replicated edges; used by the
/// gradient-cell backend and mirrored by its test oracle.
pub fn gradient_at(patch: &Plane, r: usize, c: usize) -> (f64, f64) {
    let g = patch.grid();
    let xm = if c > 0 {
        patch.at(r, c - 1)
    } else {
        patch.at(r, 0)
    };
    let xp = if c + 1 < g.w {
        patch.at(r, c + 1)
    } else {
        patch.at(r, g.w - 1)
    };
    let ym = if r > 0 {
        patch.at(r - 1, c)
    } else {
        patch.at(0, c)
    };
    let yp = if r + 1 < g.h {
        patch.at(r + 1, c)
    } else {
        patch.at(g.h - 1, c)
    };
    ((xp - xm) / 2.0, (yp - ym) / 2.0)
}

/// Maps an unsigned gradient orientation to its histogram bin.
pub fn orientation_bin(dx: f64, dy: f64) -> usize {
    let mut ang = dy.atan2(dx);
    if ang < 0.0 {
        ang += std::f64::consts::PI;
    }
    let t = ang / std::f64::consts::PI;
    ((t * GRADIENT_BINS as f64).floor() as usize) % GRADIENT_BINS
}

fn gradient_cells(patch: &Plane, cell: usize) -> Vec<Plane> {
    let g = patch.grid();
    let out = Grid2 {
        h: g.h / cell,
        w: g.w / cell,
    };
    let mut channels = vec![Plane::zeros(out); GRADIENT_BINS];
    for r in 0..out.h * cell {
        for c in 0..out.w * cell {
            let (dx, dy) = gradient_at(patch, r, c);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let bin = orientation_bin(dx, dy);
            *channels[bin].at_mut(r / cell, c / cell) += mag;
        }
    }
    channels
}

/// Computes the configured feature stack for a patch already resampled to
/// the model resolution. Patch dimensions must divide by the cell size.
pub fn compute_features(patch: &Plane, config: &FeatureConfig) -> Result<FeatureStack> {
    config.validate()?;
    let g = patch.grid();
    if g.h % config.cell_size != 0 || g.w % config.cell_size != 0 {
        return Err(Error::InvalidParameter(format!(
            "patch {g} not divisible by cell size {}",
            config.cell_size
        )));
    }
    let mut channels = match config.backend {
        FeatureBackend::Grayscale => {
            let mut pooled = pool_cells(patch, config.cell_size);
            let mean: f64 = pooled.iter().sum::<f64>() / pooled.grid().len() as f64;
            pooled.as_mut_slice().iter_mut().for_each(|v| *v -= mean);
            vec![pooled]
        }
        FeatureBackend::GradientCells => gradient_cells(patch, config.cell_size),
        FeatureBackend::External => {
            return Err(Error::InvalidParameter(
                "external backend requires a channel file; use load_external_channels".into(),
            ))
        }
    };
    if config.normalize {
        for ch in &mut channels {
            let mean: f64 = ch.iter().sum::<f64>() / ch.grid().len() as f64;
            ch.as_mut_slice().iter_mut().for_each(|v| *v -= mean);
        }
    }
    FeatureStack::new(config.cell_size, channels)
}

/// Separable raised-cosine taper: zero at the grid edges, maximal at the
/// center, 1.0 everywhere for unit-length axes.
pub fn cosine_window(grid: Grid2) -> Plane {
    let taper = |k: usize, n: usize| -> f64 {
        if n <= 1 {
            1.0
        } else {
            0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
        }
    };
    Plane::from_fn(grid, |r, c| taper(r, grid.h) * taper(c, grid.w))
}

/// Applies the configured window to every channel.
pub fn apply_window(stack: &FeatureStack, window: Window) -> FeatureStack {
    match window {
        Window::None => stack.clone(),
        Window::Cosine => {
            let win = cosine_window(stack.grid());
            let channels = stack
                .iter()
                .map(|ch| {
                    let mut out = ch.clone();
                    out.as_mut_slice()
                        .iter_mut()
                        .zip(win.iter())
                        .for_each(|(v, w)| *v *= w);
                    out
                })
                .collect();
            FeatureStack::new(stack.cell_size(), channels).expect("grids preserved")
        }
    }
}

/// Reads an externally produced channel file.
///
/// Layout (little endian): magic `CFB1`, then `u32` channel count, height
/// and width, then `D*H*W` `f32` values in channel-major row-major order.
pub fn load_external_channels(path: &Path, expected_grid: Grid2) -> Result<FeatureStack> {
    let display = path.display().to_string();
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| Error::FeatureFileTruncated {
            path: display.clone(),
        })?;
    if &header[0..4] != CHANNEL_FILE_MAGIC {
        return Err(Error::FeatureFileMagic { path: display });
    }
    let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if d == 0 || h == 0 || w == 0 {
        return Err(Error::FeatureFileTruncated { path: display });
    }
    let grid = Grid2 { h, w };
    if grid != expected_grid {
        return Err(Error::GridMismatch {
            expected: expected_grid,
            got: grid,
        });
    }
    let expected_len = d
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::FeatureFileTruncated {
            path: display.clone(),
        })?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != expected_len {
        return Err(Error::FeatureFileTruncated { path: display });
    }
    let mut channels = Vec::with_capacity(d);
    for ch in 0..d {
        let mut data = Vec::with_capacity(h * w);
        for i in 0..h * w {
            let off = (ch * h * w + i) * 4;
            let v = f32::from_le_bytes(raw[off..off + 4].try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(Error::FeatureFileNonFinite {
                    path: display,
                    index: ch * h * w + i,
                });
            }
            data.push(v);
        }
        channels.push(Plane::from_vec(grid, data)?);
    }
    FeatureStack::new(1, channels)
}

/// Writes a stack in the external channel file format.
pub fn save_external_channels(path: &Path, stack: &FeatureStack) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(CHANNEL_FILE_MAGIC)?;
    file.write_all(&(stack.channels() as u32).to_le_bytes())?;
    file.write_all(&(stack.grid().h as u32).to_le_bytes())?;
    file.write_all(&(stack.grid().w as u32).to_le_bytes())?;
    for ch in stack.iter() {
        for &v in ch.as_slice() {
            file.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn gradient_frame(w: usize, h: usize) -> Frame {
        let data = (0..w * h)
            .map(|i| {
                let x = (i % w) as f64;
                let y = (i / w) as f64;
                (x * 0.01 + y * 0.02).fract()
            })
            .collect();
        Frame::new(w, h, data).unwrap()
    }

    #[test]
    fn patch_inside_frame_at_unit_scale() {
        let frame = gradient_frame(32, 32);
        let out = Grid2::new(8, 8).unwrap();
        let patch = extract_patch(&frame, (16.0, 16.0), (8.0, 8.0), 1.0, out).unwrap();
        // Unit scale and matching output size: exact source pixels.
        for r in 0..8 {
            for c in 0..8 {
                let expect = frame.sample_bilinear(12.0 + c as f64, 12.0 + r as f64);
                assert!((patch.at(r, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corner_patch_replicates_edges() {
        let frame = gradient_frame(16, 16);
        let out = Grid2::new(8, 8).unwrap();
        let patch = extract_patch(&frame, (0.0, 0.0), (8.0, 8.0), 1.0, out).unwrap();
        // Top-left quadrant of the patch lies outside the frame; every
        // sample there replicates pixel (0, 0) neighbourhood values.
        assert!((patch.at(0, 0) - frame.data()[0]).abs() < 1e-12);
        assert!(patch.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scaled_patch_matches_bilinear_oracle() {
        let frame = gradient_frame(64, 48);
        let out = Grid2::new(10, 12).unwrap();
        let center = (30.0, 22.0);
        let size = (12.0, 9.0);
        let scale = 2.0;
        let patch = extract_patch(&frame, center, size, scale, out).unwrap();
        // Independent per-pixel oracle with the documented mapping.
        let pw = size.0 * scale;
        let ph = size.1 * scale;
        for r in 0..out.h {
            for c in 0..out.w {
                let sx = center.0 - pw / 2.0 + (c as f64 + 0.5) * pw / out.w as f64 - 0.5;
                let sy = center.1 - ph / 2.0 + (r as f64 + 0.5) * ph / out.h as f64 - 0.5;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let (fx, fy) = (sx - x0, sy - y0);
                let gv = |xx: f64, yy: f64| -> f64 {
                    let xi = (xx.max(0.0) as usize).min(frame.width() - 1);
                    let yi = (yy.max(0.0) as usize).min(frame.height() - 1);
                    frame.data()[yi * frame.width() + xi]
                };
                let expect = (1.0 - fy) * ((1.0 - fx) * gv(x0, y0) + fx * gv(x0 + 1.0, y0))
                    + fy * ((1.0 - fx) * gv(x0, y0 + 1.0) + fx * gv(x0 + 1.0, y0 + 1.0));
                assert!((patch.at(r, c) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn non_finite_center_rejected() {
        let frame = gradient_frame(8, 8);
        let out = Grid2::new(4, 4).unwrap();
        assert!(extract_patch(&frame, (f64::NAN, 1.0), (4.0, 4.0), 1.0, out).is_err());
        assert!(extract_patch(&frame, (1.0, 1.0), (4.0, 4.0), f64::INFINITY, out).is_err());
    }

    #[test]
    fn constant_patch_grayscale_is_zero() {
        let g = Grid2::new(8, 8).unwrap();
        let patch = Plane::from_fn(g, |_, _| 0.42);
        let cfg = FeatureConfig {
            backend: FeatureBackend::Grayscale,
            cell_size: 2,
            window: Window::None,
            normalize: false,
        };
        let stack = compute_features(&patch, &cfg).unwrap();
        assert_eq!(stack.channels(), 1);
        assert!(stack.channel(0).iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn constant_patch_gradient_cells_are_zero() {
        let g = Grid2::new(8, 8).unwrap();
        let patch = Plane::from_fn(g, |_, _| 0.7);
        let cfg = FeatureConfig {
            backend: FeatureBackend::GradientCells,
            cell_size: 4,
            window: Window::None,
            normalize: false,
        };
        let stack = compute_features(&patch, &cfg).unwrap();
        assert_eq!(stack.channels(), GRADIENT_BINS);
        for ch in stack.iter() {
            assert!(ch.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn step_edge_concentrates_in_horizontal_bin() {
        let g = Grid2::new(8, 8).unwrap();
        // Vertical step edge: intensity jumps across columns.
        let patch = Plane::from_fn(g, |_, c| if c < 4 { 0.0 } else { 1.0 });
        let cfg = FeatureConfig {
            backend: FeatureBackend::GradientCells,
            cell_size: 4,
            window: Window::None,
            normalize: false,
        };
        let stack = compute_features(&patch, &cfg).unwrap();
        // All gradient energy is horizontal (dy = 0), i.e. bin 0.
        let bin0: f64 = stack.channel(0).iter().sum();
        assert!(bin0 > 0.0);
        for b in 1..GRADIENT_BINS {
            let e: f64 = stack.channel(b).iter().sum();
            assert_eq!(e, 0.0);
        }

        // Per-pixel finite-difference oracle over the whole patch.
        let mut oracle = vec![Plane::zeros(Grid2::new(2, 2).unwrap()); GRADIENT_BINS];
        for r in 0..8 {
            for c in 0..8 {
                let (dx, dy) = gradient_at(&patch, r, c);
                let mag = (dx * dx + dy * dy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                *oracle[orientation_bin(dx, dy)].at_mut(r / 4, c / 4) += mag;
            }
        }
        for b in 0..GRADIENT_BINS {
            for i in 0..4 {
                assert!((oracle[b].as_slice()[i] - stack.channel(b).as_slice()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn window_none_is_identity() {
        let g = Grid2::new(4, 4).unwrap();
        let patch = Plane::from_fn(g, |r, c| (r + c) as f64);
        let cfg = FeatureConfig {
            backend: FeatureBackend::Grayscale,
            cell_size: 1,
            window: Window::None,
            normalize: false,
        };
        let stack = compute_features(&patch, &cfg).unwrap();
        assert_eq!(apply_window(&stack, Window::None), stack);
    }

    #[test]
    fn cosine_window_on_ones_is_the_window() {
        let g = Grid2::new(4, 4).unwrap();
        let ones = FeatureStack::new(1, vec![Plane::from_fn(g, |_, _| 1.0)]).unwrap();
        let windowed = apply_window(&ones, Window::Cosine);
        let win = cosine_window(g);
        for i in 0..g.len() {
            assert_eq!(windowed.channel(0).as_slice()[i], win.as_slice()[i]);
        }
    }

    #[test]
    fn cosine_window_formula() {
        let g = Grid2::new(9, 9).unwrap();
        let win = cosine_window(g);
        // Zero at edges, maximal at the center.
        assert_eq!(win.at(0, 0), 0.0);
        assert_eq!(win.at(0, 4), 0.0);
        assert_eq!(win.at(8, 8), 0.0);
        assert!((win.at(4, 4) - 1.0).abs() < 1e-15);
        // Closed form at an interior point.
        let h = |k: f64, n: f64| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k / (n - 1.0)).cos());
        assert!((win.at(2, 3) - h(2.0, 9.0) * h(3.0, 9.0)).abs() < 1e-15);
    }

    #[test]
    fn external_channels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feat.cfb");
        let g = Grid2::new(6, 5).unwrap();
        let mut rng = SplitMix64::new(55);
        let channels: Vec<Plane> = (0..5)
            .map(|_| {
                Plane::from_fn(g, |_, _| {
                    // Values chosen representable in f32 so the round trip
                    // is bitwise.
                    (rng.next_u64() % 1000) as f64 / 64.0
                })
            })
            .collect();
        let stack = FeatureStack::new(1, channels).unwrap();
        save_external_channels(&path, &stack).unwrap();
        let loaded = load_external_channels(&path, g).unwrap();
        assert_eq!(loaded.channels(), 5);
        for d in 0..5 {
            assert_eq!(loaded.channel(d).as_slice(), stack.channel(d).as_slice());
        }
    }

    #[test]
    fn external_zeros_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.cfb");
        let g = Grid2::new(4, 4).unwrap();
        let stack = FeatureStack::new(1, vec![Plane::zeros(g); 3]).unwrap();
        save_external_channels(&path, &stack).unwrap();
        let loaded = load_external_channels(&path, g).unwrap();
        assert_eq!(loaded.channels(), 3);
        assert!(loaded.iter().all(|ch| ch.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn external_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2::new(4, 4).unwrap();

        let bad_magic = dir.path().join("bad.cfb");
        std::fs::write(
            &bad_magic,
            b"NOPE\x01\x00\x00\x00\x04\x00\x00\x00\x04\x00\x00\x00",
        )
        .unwrap();
        assert!(matches!(
            load_external_channels(&bad_magic, g),
            Err(Error::FeatureFileMagic { .. })
        ));

        let mismatch = dir.path().join("m.cfb");
        let stack = FeatureStack::new(1, vec![Plane::zeros(Grid2::new(3, 3).unwrap())]).unwrap();
        save_external_channels(&mismatch, &stack).unwrap();
        assert!(matches!(
            load_external_channels(&mismatch, g),
            Err(Error::GridMismatch { .. })
        ));

        let nonfinite = dir.path().join("nf.cfb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CHANNEL_FILE_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&nonfinite, bytes).unwrap();
        assert!(matches!(
            load_external_channels(&nonfinite, Grid2::new(1, 2).unwrap()),
            Err(Error::FeatureFileNonFinite { .. })
        ));

        let truncated = dir.path().join("t.cfb");
        std::fs::write(&truncated, b"CFB1\x01").unwrap();
        assert!(matches!(
            load_external_channels(&truncated, g),
            Err(Error::FeatureFileTruncated { .. })
        ));
    }

    #[test]
    fn stack_grid_is_fixed_by_model_resolution() {
        // Whatever the source frame size, the stack lives on the model
        // grid the patch was resampled to.
        let cfg = FeatureConfig::default();
        let out = Grid2::new(32, 32).unwrap();
        for &(w, h) in &[(40usize, 30usize), (400, 300)] {
            let frame = gradient_frame(w, h);
            let patch = extract_patch(
                &frame,
                (w as f64 / 2.0, h as f64 / 2.0),
                (w as f64 / 3.0, h as f64 / 3.0),
                1.0,
                out,
            )
            .unwrap();
            let stack = compute_features(&patch, &cfg).unwrap();
            assert_eq!(stack.grid(), Grid2::new(8, 8).unwrap());
            assert_eq!(stack.channels(), GRADIENT_BINS);
        }
    }

    #[test]
    fn features_are_deterministic() {
        let frame = gradient_frame(32, 32);
        let out = Grid2::new(16, 16).unwrap();
        let cfg = FeatureConfig::default();
        let a = compute_features(
            &extract_patch(&frame, (16.0, 16.0), (8.0, 8.0), 1.3, out).unwrap(),
            &cfg,
        )
        .unwrap();
        let b = compute_features(
            &extract_patch(&frame, (16.0, 16.0), (8.0, 8.0), 1.3, out).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
