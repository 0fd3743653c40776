//! Correlation-filter learning over an enlarged background window.
//!
//! The training objective fits the circular correlation response of a
//! multi-channel filter against a desired map over the full search window,
//! while the filter support is restricted to the centered inner grid and
//! its energy is weighted by a spatial penalization mask:
//!
//! `E(w) = 1/2 ||y - sum_d corr(x^d, embed(w^d))||^2 + sum_d ||p .* w^d||^2`
//!
//! The solver splits the problem with ADMM between the spatial filter `w`
//! and a frequency-domain auxiliary variable `g_hat`, coupled by scaled
//! multipliers. Scale bookkeeping, fixed crate-wide:
//!
//! - feature and desired-response spectra are plain unitary transforms;
//! - filter-side spectra (`g_hat`, `w_hat`, multipliers) carry an explicit
//!   extra `sqrt(N)`, i.e. `w_hat = sqrt(N) * dft2(embed(w))`;
//! - spatial recovery inverts that: `crop(idft2(g_hat / sqrt(N)))`.
//!
//! With those conventions the `w`-subproblem is the per-element shrink
//! `w = (zeta + mu*g) / (2*p^2/N + mu)` and the `g`-subproblem decouples
//! into one rank-one `D x D` system per frequency bin, solved in closed
//! form by the Sherman-Morrison identity. The fixed point minimizes the
//! spatial objective exactly; `objective_value` evaluates that objective by
//! direct summation and is the ground truth the tests check against.

use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::spectral::{
    crop_center, dft2, embed_center, idft2_real, ifftshift, CropSpec, Grid2, Plane, SpectralStack,
    Spectrum,
};

/// Spatial weights over the filter support: bowl-shaped, smallest at the
/// window center so filter energy concentrates there.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizationMask {
    grid: Grid2,
    weights: Plane,
    floor: f64,
    slope: f64,
}

impl PenalizationMask {
    /// `p(i, j) = floor + slope * (((i - c1)/M1)^2 + ((j - c2)/M2)^2)` with
    /// the continuous center `c = (M - 1)/2`, exactly symmetric under 180
    /// degree rotation.
    pub fn bowl(grid: Grid2, floor: f64, slope: f64) -> Result<Self> {
        if !(floor > 0.0) || !(slope >= 0.0) || !floor.is_finite() || !slope.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalization floor {floor} / slope {slope} out of range"
            )));
        }
        let c1 = (grid.h as f64 - 1.0) / 2.0;
        let c2 = (grid.w as f64 - 1.0) / 2.0;
        let weights = Plane::from_fn(grid, |r, c| {
            let dr = (r as f64 - c1) / grid.h as f64;
            let dc = (c as f64 - c2) / grid.w as f64;
            floor + slope * (dr * dr + dc * dc)
        });
        Ok(Self {
            grid,
            weights,
            floor,
            slope,
        })
    }

    /// Arbitrary positive weights (used by randomized oracle tests).
    pub fn from_weights(weights: Plane) -> Result<Self> {
        if !weights.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(
                "penalization weights must be positive and finite".into(),
            ));
        }
        let floor = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            grid: weights.grid(),
            floor,
            slope: 0.0,
            weights,
        })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn weights(&self) -> &Plane {
        &self.weights
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }
}

/// Desired correlation response: a Gaussian peaking at the window center,
/// stored in centered layout. Training uses [`DesiredResponse::wrapped`],
/// which rolls the peak to index `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredResponse {
    grid: Grid2,
    values: Plane,
    sigma: f64,
}

impl DesiredResponse {
    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn values(&self) -> &Plane {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Centered map rolled so the peak sits at index `(0, 0)`.
    pub fn wrapped(&self) -> Plane {
        ifftshift(&self.values)
    }

    /// Unitary spectrum of the wrapped map.
    pub fn wrapped_spectrum(&self) -> Spectrum {
        dft2(&self.wrapped())
    }
}

/// Builds the desired response for a given window grid and Gaussian width
/// (in cells). The peak value is exactly 1 at `(h/2, w/2)`.
pub fn make_desired_response(grid: Grid2, sigma: f64) -> Result<DesiredResponse> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "response sigma must be positive, got {sigma}"
        )));
    }
    let c1 = grid.h / 2;
    let c2 = grid.w / 2;
    let values = Plane::from_fn(grid, |r, c| {
        let dr = r as f64 - c1 as f64;
        let dc = c as f64 - c2 as f64;
        (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
    });
    Ok(DesiredResponse {
        grid,
        values,
        sigma,
    })
}

/// The learned multi-channel filter: spatial taps over the inner grid plus
/// the `sqrt(N)`-scaled spectra of their zero-embedded counterparts. After
/// the solver converges the two agree to the ADMM tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    inner: Grid2,
    outer: Grid2,
    spatial: Vec<Plane>,
    spectral: Vec<Spectrum>,
}

impl FilterBank {
    pub fn zeros(channels: usize, inner: Grid2, outer: Grid2) -> Self {
        Self {
            inner,
            outer,
            spatial: vec![Plane::zeros(inner); channels],
            spectral: vec![Spectrum::zeros(outer); channels],
        }
    }

    /// Assembles a bank from existing taps and spectra (used by oracles and
    /// tests that evaluate the objective at externally computed filters).
    pub fn from_parts(
        inner: Grid2,
        outer: Grid2,
        spatial: Vec<Plane>,
        spectral: Vec<Spectrum>,
    ) -> Self {
        Self {
            inner,
            outer,
            spatial,
            spectral,
        }
    }

    pub fn channels(&self) -> usize {
        self.spatial.len()
    }

    pub fn inner_grid(&self) -> Grid2 {
        self.inner
    }

    pub fn outer_grid(&self) -> Grid2 {
        self.outer
    }

    pub fn spatial(&self) -> &[Plane] {
        &self.spatial
    }

    pub fn spectral(&self) -> &[Spectrum] {
        &self.spectral
    }

    pub fn is_finite(&self) -> bool {
        self.spatial.iter().all(Plane::is_finite) && self.spectral.iter().all(Spectrum::is_finite)
    }
}

/// Multipliers and penalty schedule of one ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    multipliers: Vec<Spectrum>,
    mu: f64,
    mu_max: f64,
    mu_scale: f64,
    iteration: usize,
}

impl AdmmState {
    pub fn new(channels: usize, grid: Grid2, config: &SolverConfig) -> Self {
        Self {
            multipliers: vec![Spectrum::zeros(grid); channels],
            mu: config.mu_init,
            mu_max: config.mu_max,
            mu_scale: config.mu_scale,
            iteration: 0,
        }
    }

    pub fn multipliers(&self) -> &[Spectrum] {
        &self.multipliers
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}

/// How the quadratic penalty enters the `w`-step divisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Per-element divisor `2*p(m)^2/N + mu`; minimizes the stated
    /// objective and is the default.
    Elementwise,
    /// Single scalar divisor `2*(D * sum_m p(m)^2)/N + mu` shared by all
    /// elements, kept as a compatibility mode.
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub admm_iterations: usize,
    pub mu_init: f64,
    pub mu_max: f64,
    pub mu_scale: f64,
    /// Relative primal residual `||g_hat - w_hat|| / ||w_hat||` below which
    /// the iteration stops early.
    pub tolerance: f64,
    pub penalty_floor: f64,
    pub penalty_slope: f64,
    /// Desired-response width as a fraction of `sqrt(M1 * M2)`.
    pub sigma_factor: f64,
    pub penalty_mode: PenaltyMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            admm_iterations: 2,
            mu_init: 1.0,
            mu_max: 1e4,
            mu_scale: 10.0,
            tolerance: 1e-6,
            penalty_floor: 0.1,
            penalty_slope: 3.0,
            sigma_factor: 1.0 / 16.0,
            penalty_mode: PenaltyMode::Elementwise,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.admm_iterations >= 1
            && self.mu_init > 0.0
            && self.mu_max >= self.mu_init
            && self.mu_scale >= 1.0
            && self.tolerance > 0.0
            && self.penalty_floor > 0.0
            && self.penalty_slope >= 0.0
            && self.sigma_factor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "solver config out of range: {self:?}"
            )))
        }
    }
}

/// One row of the solver trace, exportable as CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub mu: f64,
}

impl IterationTrace {
    pub const CSV_HEADER: &'static str = "iteration,objective,primal_residual,mu";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.iteration, self.objective, self.primal_residual, self.mu
        )
    }
}

/// Ground-truth objective, evaluated entirely in the spatial domain by
/// direct summation. This is the reference every spectral shortcut in the
/// solver is tested against.
pub fn objective_value(
    filter: &FilterBank,
    x: &FeatureStack,
    y: &DesiredResponse,
    p: &PenalizationMask,
) -> Result<f64> {
    let outer = x.grid();
    if y.grid() != outer {
        return Err(Error::GridMismatch {
            expected: outer,
            got: y.grid(),
        });
    }
    if p.grid() != filter.inner_grid() {
        return Err(Error::GridMismatch {
            expected: filter.inner_grid(),
            got: p.grid(),
        });
    }
    if filter.channels() != x.channels() {
        return Err(Error::ChannelMismatch {
            expected: x.channels(),
            got: filter.channels(),
        });
    }
    let spec = CropSpec::centered(outer, filter.inner_grid())?;
    let (or, oc) = spec.offset();
    let inner = spec.inner();
    let y0 = y.wrapped();

    let mut data_term = 0.0;
    for n1 in 0..outer.h {
        for n2 in 0..outer.w {
            let mut resp = 0.0;
            for (d, w) in filter.spatial().iter().enumerate() {
                let xd = x.channel(d);
                for m1 in 0..inner.h {
                    for m2 in 0..inner.w {
                        let q1 = or + m1;
                        let q2 = oc + m2;
                        let s1 = (q1 + outer.h - n1) % outer.h;
                        let s2 = (q2 + outer.w - n2) % outer.w;
                        resp += w.at(m1, m2) * xd.at(s1, s2);
                    }
                }
            }
            let diff = y0.at(n1, n2) - resp;
            data_term += diff * diff;
        }
    }

    let mut reg = 0.0;
    for w in filter.spatial() {
        for m1 in 0..inner.h {
            for m2 in 0..inner.w {
                let pw = p.weights().at(m1, m2) * w.at(m1, m2);
                reg += pw * pw;
            }
        }
    }
    Ok(0.5 * data_term + reg)
}

/// Closed-form `w`-subproblem: per-element shrink of `zeta + mu*g` by the
/// penalty divisor. `g` and `zeta` are the cropped spatial recoveries of
/// the corresponding spectra; `n_total` is the outer-grid size N.
pub fn solve_w(
    g_spatial: &[Plane],
    zeta_spatial: &[Plane],
    p: &PenalizationMask,
    mu: f64,
    n_total: usize,
    mode: PenaltyMode,
) -> Result<Vec<Plane>> {
    if g_spatial.len() != zeta_spatial.len() {
        return Err(Error::ChannelMismatch {
            expected: g_spatial.len(),
            got: zeta_spatial.len(),
        });
    }
    let n = n_total as f64;
    let scalar_divisor = match mode {
        PenaltyMode::Scalar => {
            let sum_p_sq: f64 = p.weights().iter().map(|v| v * v).sum();
            Some(2.0 * g_spatial.len() as f64 * sum_p_sq / n + mu)
        }
        PenaltyMode::Elementwise => None,
    };
    g_spatial
        .iter()
        .zip(zeta_spatial)
        .map(|(g, z)| {
            if g.grid() != p.grid() || z.grid() != p.grid() {
                return Err(Error::GridMismatch {
                    expected: p.grid(),
                    got: g.grid(),
                });
            }
            Ok(Plane::from_fn(p.grid(), |r, c| {
                let divisor = match scalar_divisor {
                    Some(s) => s,
                    None => {
                        let pv = p.weights().at(r, c);
                        2.0 * pv * pv / n + mu
                    }
                };
                (z.at(r, c) + mu * g.at(r, c)) / divisor
            }))
        })
        .collect()
}

/// Closed-form solve of the per-bin system
/// `(x x^H + mu I) g = x*y - zeta + mu*w` using the rank-one
/// (Sherman-Morrison) inverse. All inner products are conjugated:
/// `s_x = x^H x`, `s_zeta = x^H zeta`, `s_w = x^H w`, `b = s_x + mu`.
pub fn solve_g_pixel(
    x: &[Complex64],
    y: Complex64,
    zeta: &[Complex64],
    w: &[Complex64],
    mu: f64,
    out: &mut [Complex64],
) {
    debug_assert!(x.len() == zeta.len() && x.len() == w.len() && x.len() == out.len());
    let mut s_x = 0.0;
    let mut s_zeta = Complex64::ZERO;
    let mut s_w = Complex64::ZERO;
    for d in 0..x.len() {
        s_x += x[d].norm_sqr();
        s_zeta += x[d].conj() * zeta[d];
        s_w += x[d].conj() * w[d];
    }
    let b = s_x + mu;
    let common = (s_x * y - s_zeta + mu * s_w) / (mu * b);
    for d in 0..x.len() {
        out[d] = (y * x[d] - zeta[d]) / mu + w[d] - x[d] * common;
    }
}

fn solve_g_row(
    row: usize,
    grid: Grid2,
    x: &[&[Complex64]],
    y: &[Complex64],
    zeta: &[&[Complex64]],
    w: &[&[Complex64]],
    mu: f64,
    out: &mut [Complex64],
) {
    let d = x.len();
    let mut xs = vec![Complex64::ZERO; d];
    let mut zs = vec![Complex64::ZERO; d];
    let mut ws = vec![Complex64::ZERO; d];
    for col in 0..grid.w {
        let n = row * grid.w + col;
        for dd in 0..d {
            xs[dd] = x[dd][n];
            zs[dd] = zeta[dd][n];
            ws[dd] = w[dd][n];
        }
        solve_g_pixel(&xs, y[n], &zs, &ws, mu, &mut out[col * d..(col + 1) * d]);
    }
}

fn solve_g_validate(
    x_hat: &SpectralStack,
    y_hat: &Spectrum,
    zeta_hat: &[Spectrum],
    w_hat: &[Spectrum],
) -> Result<()> {
    let grid = x_hat.grid();
    if y_hat.grid() != grid {
        return Err(Error::GridMismatch {
            expected: grid,
            got: y_hat.grid(),
        });
    }
    for s in zeta_hat.iter().chain(w_hat) {
        if s.grid() != grid {
            return Err(Error::GridMismatch {
                expected: grid,
                got: s.grid(),
            });
        }
    }
    if zeta_hat.len() != x_hat.channels() || w_hat.len() != x_hat.channels() {
        return Err(Error::ChannelMismatch {
            expected: x_hat.channels(),
            got: zeta_hat.len().min(w_hat.len()),
        });
    }
    Ok(())
}

fn collect_channels(grid: Grid2, d: usize, bin_major: Vec<Complex64>) -> Vec<Spectrum> {
    let n = grid.len();
    (0..d)
        .map(|dd| {
            let data = (0..n).map(|i| bin_major[i * d + dd]).collect();
            Spectrum::from_vec(grid, data).expect("sized by construction")
        })
        .collect()
}

/// Applies [`solve_g_pixel`] independently at every frequency bin,
/// sequentially. Kept public so benchmarks can compare it against the
/// data-parallel dispatch.
pub fn solve_g_sequential(
    x_hat: &SpectralStack,
    y_hat: &Spectrum,
    zeta_hat: &[Spectrum],
    w_hat: &[Spectrum],
    mu: f64,
) -> Result<Vec<Spectrum>> {
    solve_g_validate(x_hat, y_hat, zeta_hat, w_hat)?;
    let grid = x_hat.grid();
    let d = x_hat.channels();
    let x: Vec<&[Complex64]> = x_hat.iter().map(|s| s.as_slice()).collect();
    let z: Vec<&[Complex64]> = zeta_hat.iter().map(|s| s.as_slice()).collect();
    let w: Vec<&[Complex64]> = w_hat.iter().map(|s| s.as_slice()).collect();
    let mut out = vec![Complex64::ZERO; grid.len() * d];
    for (row, chunk) in out.chunks_mut(d * grid.w).enumerate() {
        solve_g_row(row, grid, &x, y_hat.as_slice(), &z, &w, mu, chunk);
    }
    Ok(collect_channels(grid, d, out))
}

/// The `g`-subproblem over all frequency bins. Row-parallel under the
/// `parallel` feature; bins are independent, so the result is bit-identical
/// to [`solve_g_sequential`].
pub fn solve_g(
    x_hat: &SpectralStack,
    y_hat: &Spectrum,
    zeta_hat: &[Spectrum],
    w_hat: &[Spectrum],
    mu: f64,
) -> Result<Vec<Spectrum>> {
    #[cfg(feature = "parallel")]
    {
        solve_g_validate(x_hat, y_hat, zeta_hat, w_hat)?;
        let grid = x_hat.grid();
        let d = x_hat.channels();
        let x: Vec<&[Complex64]> = x_hat.iter().map(|s| s.as_slice()).collect();
        let z: Vec<&[Complex64]> = zeta_hat.iter().map(|s| s.as_slice()).collect();
        let w: Vec<&[Complex64]> = w_hat.iter().map(|s| s.as_slice()).collect();
        let y = y_hat.as_slice();
        let mut out = vec![Complex64::ZERO; grid.len() * d];
        out.par_chunks_mut(d * grid.w)
            .enumerate()
            .for_each(|(row, chunk)| solve_g_row(row, grid, &x, y, &z, &w, mu, chunk));
        Ok(collect_channels(grid, d, out))
    }
    #[cfg(not(feature = "parallel"))]
    {
        solve_g_sequential(x_hat, y_hat, zeta_hat, w_hat, mu)
    }
}

/// Multiplier ascent and penalty growth:
/// `zeta += mu * (g_hat - w_hat)`, then `mu = min(mu_scale * mu, mu_max)`.
pub fn update_multipliers(state: &mut AdmmState, g_hat: &[Spectrum], w_hat: &[Spectrum]) {
    debug_assert_eq!(state.multipliers.len(), g_hat.len());
    debug_assert_eq!(state.multipliers.len(), w_hat.len());
    for (m, (g, w)) in state.multipliers.iter_mut().zip(g_hat.iter().zip(w_hat)) {
        let mu = state.mu;
        for (mv, (gv, wv)) in m
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice().iter().zip(w.as_slice()))
        {
            *mv += mu * (gv - wv);
        }
    }
    state.mu = (state.mu * state.mu_scale).min(state.mu_max);
    state.iteration += 1;
}

/// Model-response spectrum of the current filter taps: per bin
/// `sum_d conj(x_hat^d) * w_hat^d`, which is the unitary spectrum of the
/// spatial correlation response.
fn model_spectrum(x_hat: &SpectralStack, w_hat: &[Spectrum]) -> Spectrum {
    let grid = x_hat.grid();
    let mut m = Spectrum::zeros(grid);
    for (xd, wd) in x_hat.iter().zip(w_hat) {
        for (mv, (xv, wv)) in m
            .as_mut_slice()
            .iter_mut()
            .zip(xd.as_slice().iter().zip(wd.as_slice()))
        {
            *mv += xv.conj() * wv;
        }
    }
    m
}

fn objective_from_spectra(
    x_hat: &SpectralStack,
    y_hat: &Spectrum,
    w_hat: &[Spectrum],
    w: &[Plane],
    p: &PenalizationMask,
) -> f64 {
    let m = model_spectrum(x_hat, w_hat);
    let data: f64 = y_hat
        .as_slice()
        .iter()
        .zip(m.as_slice())
        .map(|(y, m)| (y - m).norm_sqr())
        .sum();
    let reg: f64 = w
        .iter()
        .map(|wd| {
            wd.iter()
                .zip(p.weights().iter())
                .map(|(wv, pv)| (pv * wv).powi(2))
                .sum::<f64>()
        })
        .sum();
    0.5 * data + reg
}

/// Runs the ADMM loop on already-transformed inputs. `y_hat` must be the
/// unitary spectrum of the wrapped desired response. Returns the filter
/// and the final multiplier state.
pub fn train_filter_spectral(
    x_hat: &SpectralStack,
    y_hat: &Spectrum,
    p: &PenalizationMask,
    config: &SolverConfig,
    warm_start: Option<&FilterBank>,
    mut trace: Option<&mut Vec<IterationTrace>>,
) -> Result<(FilterBank, AdmmState)> {
    config.validate()?;
    let outer = x_hat.grid();
    let inner = p.grid();
    let d = x_hat.channels();
    if y_hat.grid() != outer {
        return Err(Error::GridMismatch {
            expected: outer,
            got: y_hat.grid(),
        });
    }
    let crop = CropSpec::centered(outer, inner)?;
    let sqrt_n = (outer.len() as f64).sqrt();

    let (mut w, mut g_hat) = match warm_start {
        Some(bank) => {
            if bank.inner_grid() != inner || bank.outer_grid() != outer || bank.channels() != d {
                return Err(Error::InvalidParameter(
                    "warm-start filter does not match problem dimensions".into(),
                ));
            }
            (bank.spatial().to_vec(), bank.spectral().to_vec())
        }
        None => (
            vec![Plane::zeros(inner); d],
            vec![Spectrum::zeros(outer); d],
        ),
    };
    // Multipliers always restart from zero; warm starts seed only w/g_hat.
    let mut state = AdmmState::new(d, outer, config);
    let mut w_hat = vec![Spectrum::zeros(outer); d];

    for it in 0..config.admm_iterations {
        // w-step from the current g_hat and multipliers.
        let mut g_sp = Vec::with_capacity(d);
        let mut z_sp = Vec::with_capacity(d);
        for dd in 0..d {
            g_sp.push(crop_center(
                &idft2_real(&g_hat[dd].scaled(1.0 / sqrt_n)),
                &crop,
            )?);
            z_sp.push(crop_center(
                &idft2_real(&state.multipliers[dd].scaled(1.0 / sqrt_n)),
                &crop,
            )?);
        }
        w = solve_w(&g_sp, &z_sp, p, state.mu, outer.len(), config.penalty_mode)?;
        for dd in 0..d {
            w_hat[dd] = dft2(&embed_center(&w[dd], &crop)?).scaled(sqrt_n);
        }

        // g-step.
        g_hat = solve_g(x_hat, y_hat, &state.multipliers, &w_hat, state.mu)?;

        if !w.iter().all(Plane::is_finite) || !g_hat.iter().all(Spectrum::is_finite) {
            return Err(Error::Diverged { iteration: it });
        }

        let diff: f64 = g_hat
            .iter()
            .zip(&w_hat)
            .map(|(g, wv)| {
                g.as_slice()
                    .iter()
                    .zip(wv.as_slice())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
            })
            .sum();
        let w_norm: f64 = w_hat.iter().map(Spectrum::norm_sq).sum();
        // Relative residual, falling back to the absolute norm while the
        // filter is still identically zero (cold-start iteration).
        let residual = if w_norm > 0.0 {
            (diff / w_norm).sqrt()
        } else {
            diff.sqrt()
        };

        if let Some(t) = trace.as_deref_mut() {
            t.push(IterationTrace {
                iteration: it,
                objective: objective_from_spectra(x_hat, y_hat, &w_hat, &w, p),
                primal_residual: residual,
                mu: state.mu,
            });
        }

        update_multipliers(&mut state, &g_hat, &w_hat);

        if residual < config.tolerance {
            break;
        }
    }

    Ok((
        FilterBank {
            inner,
            outer,
            spatial: w,
            spectral: g_hat,
        },
        state,
    ))
}

/// Trains the filter for a feature stack against a desired response.
pub fn train_filter(
    x: &FeatureStack,
    y: &DesiredResponse,
    p: &PenalizationMask,
    config: &SolverConfig,
    warm_start: Option<&FilterBank>,
) -> Result<FilterBank> {
    if y.grid() != x.grid() {
        return Err(Error::GridMismatch {
            expected: x.grid(),
            got: y.grid(),
        });
    }
    let x_hat = x.to_spectral();
    let y_hat = y.wrapped_spectrum();
    train_filter_spectral(&x_hat, &y_hat, p, config, warm_start, None).map(|(bank, _)| bank)
}
