//! Per-frame tracking: multi-scale detection, consensus verification
//! against a learned ideal response map, and gated model updates.
//!
//! Response maps are stored in centered layout (zero displacement at cell
//! `(h/2, w/2)`). Detection correlates the filter spectra with the window
//! features so that translating the window contents by `k` cells moves the
//! response peak by `k` cells; the peak is then refined on the model-pixel
//! grid by band-limited interpolation of the response spectrum and mapped
//! back to frame pixels through the window/model resampling ratio.

use crate::error::{Error, Result};
use crate::features::{
    apply_window, compute_features, extract_patch, FeatureBackend, FeatureConfig, FeatureStack,
    Frame,
};
use crate::solver::{
    make_desired_response, train_filter_spectral, AdmmState, DesiredResponse, FilterBank,
    IterationTrace, PenalizationMask, SolverConfig,
};
use crate::spectral::{
    fftshift, idft2_real, spectral_upsample, Grid2, Plane, SpectralStack, Spectrum,
};

/// Axis-aligned pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(center: (f64, f64), size: (f64, f64)) -> Self {
        Self {
            x: center.0 - size.0 / 2.0,
            y: center.1 - size.1 / 2.0,
            w: size.0,
            h: size.1,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }
}

/// Real-valued correlation output over the response grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    grid: Grid2,
    values: Plane,
}

impl ResponseMap {
    pub fn new(values: Plane) -> Self {
        Self {
            grid: values.grid(),
            values,
        }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn values(&self) -> &Plane {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Plane {
        &mut self.values
    }
}

/// Agreement between two response maps: `exp(-||a - b||^2)` over the raw
/// values. Exactly 1 iff the maps are elementwise equal; always in (0, 1].
pub fn consensus(ideal: &ResponseMap, current: &ResponseMap) -> Result<f64> {
    if ideal.grid() != current.grid() {
        return Err(Error::GridMismatch {
            expected: ideal.grid(),
            got: current.grid(),
        });
    }
    let dist_sq: f64 = ideal
        .values()
        .iter()
        .zip(current.values().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((-dist_sq).exp())
}

/// Learning-rate gate driven by the consensus score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub threshold_high: f64,
    pub threshold_low: f64,
    /// Boosted appearance rate used when consensus clears the high gate.
    pub eta_high: f64,
    pub eta_low: f64,
    /// Response-map learning rate.
    pub gamma: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            threshold_high: 0.6,
            threshold_low: 0.2,
            eta_high: 0.045,
            eta_low: 0.015,
            gamma: 0.02,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        let rate = |v: f64| v > 0.0 && v <= 1.0;
        let ok = in_unit(self.threshold_high)
            && in_unit(self.threshold_low)
            && self.threshold_low < self.threshold_high
            && rate(self.eta_high)
            && rate(self.eta_low)
            && self.eta_low <= self.eta_high
            && rate(self.gamma);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "update config out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleConfig {
    /// Odd number of scales probed around the current one.
    pub num_scales: usize,
    pub scale_step: f64,
    /// Search-window area relative to the target box.
    pub search_padding: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            num_scales: 5,
            scale_step: 1.02,
            search_padding: 4.0,
        }
    }
}

impl ScaleConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.num_scales >= 1
            && self.num_scales % 2 == 1
            && self.scale_step > 1.0
            && self.search_padding > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "scale config out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub features: FeatureConfig,
    pub solver: SolverConfig,
    pub update: UpdateConfig,
    pub scale: ScaleConfig,
    /// ADMM iterations for the first-frame filter (per-frame re-training
    /// uses `solver.admm_iterations`, warm-started).
    pub init_admm_iterations: usize,
    /// Cap on the feature-grid side length; the search window is resampled
    /// so the grid never exceeds this.
    pub max_model_cells: usize,
    /// Accumulate per-iteration solver traces in the tracker state.
    pub collect_traces: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            solver: SolverConfig::default(),
            update: UpdateConfig::default(),
            scale: ScaleConfig::default(),
            init_admm_iterations: 4,
            max_model_cells: 64,
            collect_traces: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.solver.validate()?;
        self.update.validate()?;
        self.scale.validate()?;
        if self.init_admm_iterations == 0 || self.max_model_cells == 0 {
            return Err(Error::InvalidParameter(
                "init_admm_iterations and max_model_cells must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-frame log entry of the gate decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub frame: usize,
    pub center: (f64, f64),
    pub scale: f64,
    pub consensus: f64,
    pub eta_used: f64,
    pub learned: bool,
}

impl DecisionRecord {
    pub const CSV_HEADER: &'static str = "frame,center_x,center_y,scale,consensus,eta_used,learned";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.frame,
            self.center.0,
            self.center.1,
            self.scale,
            self.consensus,
            self.eta_used,
            self.learned
        )
    }
}

/// Fixed grid bookkeeping shared by every frame of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Search window extent in frame pixels at scale 1, (x, y).
    pub window_base: (f64, f64),
    /// Model window in pixels (the fine interpolation grid).
    pub model_px: Grid2,
    /// Feature grid (model window / cell size).
    pub feature_grid: Grid2,
    /// Filter support within the feature grid.
    pub inner_grid: Grid2,
    pub cell: usize,
}

impl Geometry {
    /// Derives the fixed grids from the target size and configuration.
    pub fn derive(target_size: (f64, f64), cfg: &TrackerConfig) -> Result<Self> {
        let pad = cfg.scale.search_padding.sqrt();
        let window_base = (target_size.0 * pad, target_size.1 * pad);
        let cell = cfg.features.cell_size;
        let cells = |extent: f64| -> usize {
            ((extent / cell as f64).round() as usize).clamp(1, cfg.max_model_cells)
        };
        let feature_grid = Grid2::new(cells(window_base.1), cells(window_base.0))?;
        let inner_cells = |n: usize| -> usize { ((n as f64 / pad).round() as usize).clamp(1, n) };
        let inner_grid = Grid2::new(inner_cells(feature_grid.h), inner_cells(feature_grid.w))?;
        let model_px = Grid2::new(feature_grid.h * cell, feature_grid.w * cell)?;
        Ok(Self {
            window_base,
            model_px,
            feature_grid,
            inner_grid,
            cell,
        })
    }

    /// Window extent in frame pixels at a given absolute scale.
    fn window_at(&self, scale: f64) -> (f64, f64) {
        (self.window_base.0 * scale, self.window_base.1 * scale)
    }
}

/// Everything the tracker carries between frames.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub center: (f64, f64),
    pub target_size: (f64, f64),
    pub scale: f64,
    pub appearance: SpectralStack,
    pub ideal_response: ResponseMap,
    pub filter: FilterBank,
    pub admm: AdmmState,
    pub frame_index: usize,
    pub geometry: Geometry,
    pub config: TrackerConfig,
    /// Solver traces accumulated across training calls when
    /// `config.collect_traces` is set.
    pub traces: Vec<IterationTrace>,
    desired: DesiredResponse,
    y_hat: Spectrum,
    penalization: PenalizationMask,
    last_box: Rect,
}

impl TrackerState {
    pub fn desired_response(&self) -> &DesiredResponse {
        &self.desired
    }

    pub fn penalization(&self) -> &PenalizationMask {
        &self.penalization
    }

    pub fn current_box(&self) -> Rect {
        Rect::from_center(
            self.center,
            (
                self.target_size.0 * self.scale,
                self.target_size.1 * self.scale,
            ),
        )
    }

    /// Decision record describing the unconditional first-frame learn.
    pub fn initial_decision(&self) -> DecisionRecord {
        DecisionRecord {
            frame: 0,
            center: self.center,
            scale: self.scale,
            consensus: 1.0,
            eta_used: 1.0,
            learned: true,
        }
    }
}

fn windowed_features(
    frame: &Frame,
    center: (f64, f64),
    geometry: &Geometry,
    scale: f64,
    cfg: &FeatureConfig,
) -> Result<FeatureStack> {
    let patch = extract_patch(
        frame,
        center,
        geometry.window_base,
        scale,
        geometry.model_px,
    )?;
    let stack = compute_features(&patch, cfg)?;
    Ok(apply_window(&stack, cfg.window))
}

fn prepare_stack(
    stack: &FeatureStack,
    geometry: &Geometry,
    window: crate::features::Window,
) -> Result<FeatureStack> {
    if stack.grid() != geometry.feature_grid {
        return Err(Error::GridMismatch {
            expected: geometry.feature_grid,
            got: stack.grid(),
        });
    }
    Ok(apply_window(stack, window))
}

/// Raw detection response of the filter over a feature spectrum stack:
/// `idft2(sum_d x_hat^d .* conj(g_hat^d))`, peak at the content
/// displacement, origin at index `(0, 0)`.
fn detection_response(x_hat: &SpectralStack, filter: &FilterBank) -> Result<Plane> {
    if x_hat.grid() != filter.outer_grid() {
        return Err(Error::GridMismatch {
            expected: filter.outer_grid(),
            got: x_hat.grid(),
        });
    }
    if x_hat.channels() != filter.channels() {
        return Err(Error::ChannelMismatch {
            expected: filter.channels(),
            got: x_hat.channels(),
        });
    }
    let grid = x_hat.grid();
    let mut acc = Spectrum::zeros(grid);
    for (xd, gd) in x_hat.iter().zip(filter.spectral()) {
        for (a, (x, g)) in acc
            .as_mut_slice()
            .iter_mut()
            .zip(xd.as_slice().iter().zip(gd.as_slice()))
        {
            *a += x * g.conj();
        }
    }
    Ok(idft2_real(&acc))
}

/// Centered response map of a feature stack under the current filter.
pub fn response_map(x_hat: &SpectralStack, filter: &FilterBank) -> Result<ResponseMap> {
    Ok(ResponseMap::new(fftshift(&detection_response(
        x_hat, filter,
    )?)))
}

/// Starts a track from a ground-truth box on the first frame: learns the
/// initial filter, correlates it with the same features to produce the
/// ideal response map, and stores the feature spectra as the appearance
/// model. `external` supplies the precomputed channels when the feature
/// backend is [`FeatureBackend::External`].
pub fn initialize(
    frame: &Frame,
    init_box: Rect,
    config: &TrackerConfig,
    external: Option<&FeatureStack>,
) -> Result<TrackerState> {
    config.validate()?;
    if !init_box.is_finite() || init_box.w <= 0.0 || init_box.h <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "degenerate init box {init_box:?}"
        )));
    }
    let center = init_box.center();
    let target_size = (init_box.w, init_box.h);
    let geometry = Geometry::derive(target_size, config)?;

    let stack = match (config.features.backend, external) {
        (FeatureBackend::External, Some(s)) => prepare_stack(s, &geometry, config.features.window)?,
        (FeatureBackend::External, None) => {
            return Err(Error::InvalidParameter(
                "external feature backend needs a channel stack per frame".into(),
            ))
        }
        (_, _) => windowed_features(frame, center, &geometry, 1.0, &config.features)?,
    };
    let x_hat = stack.to_spectral();

    let sigma = config.solver.sigma_factor
        * ((geometry.inner_grid.h * geometry.inner_grid.w) as f64).sqrt();
    let desired = make_desired_response(geometry.feature_grid, sigma)?;
    let y_hat = desired.wrapped_spectrum();
    let penalization = PenalizationMask::bowl(
        geometry.inner_grid,
        config.solver.penalty_floor,
        config.solver.penalty_slope,
    )?;

    let init_cfg = SolverConfig {
        admm_iterations: config.init_admm_iterations,
        ..config.solver.clone()
    };
    let mut traces = Vec::new();
    let trace_sink = config.collect_traces.then_some(&mut traces);
    let (filter, admm) =
        train_filter_spectral(&x_hat, &y_hat, &penalization, &init_cfg, None, trace_sink)?;
    let ideal_response = response_map(&x_hat, &filter)?;

    let last_box = Rect::from_center(center, target_size);
    Ok(TrackerState {
        center,
        target_size,
        scale: 1.0,
        appearance: x_hat,
        ideal_response,
        filter,
        admm,
        frame_index: 0,
        geometry,
        config: config.clone(),
        traces,
        desired,
        y_hat,
        penalization,
        last_box,
    })
}

/// Outcome of a detection pass.
#[derive(Debug, Clone)]
pub struct Detection {
    pub center: (f64, f64),
    pub scale: f64,
    /// Winning pre-interpolation response map, centered layout.
    pub response: ResponseMap,
    pub scale_index: usize,
    pub peak: f64,
}

/// Scale indices probed in middle-first order so the current scale wins
/// ties; selection uses strictly-greater comparison.
fn scale_probe_order(num_scales: usize) -> Vec<usize> {
    let mid = num_scales / 2;
    let mut order = vec![mid];
    for step in 1..=mid {
        if mid >= step {
            order.push(mid - step);
        }
        if mid + step < num_scales {
            order.push(mid + step);
        }
    }
    order
}

/// Multi-scale detection around the current state. Each probed scale
/// extracts its own search window, correlates it with the filter, and the
/// responses are interpolated to the shared model-pixel grid before the
/// global argmax is taken. With the `parallel` feature the per-scale
/// correlations run data-parallel; results are identical to sequential
/// order because each scale is independent and selection order is fixed.
pub fn detect(
    state: &TrackerState,
    frame: &Frame,
    scale_cfg: &ScaleConfig,
    external: Option<&FeatureStack>,
) -> Result<Detection> {
    scale_cfg.validate()?;
    let geometry = &state.geometry;
    let (win_w, win_h) = geometry.window_at(state.scale);
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    if state.center.0 + win_w / 2.0 <= 0.0
        || state.center.0 - win_w / 2.0 >= fw
        || state.center.1 + win_h / 2.0 <= 0.0
        || state.center.1 - win_h / 2.0 >= fh
    {
        return Err(Error::LostTarget);
    }

    let external_mode = state.config.features.backend == FeatureBackend::External;
    let num_scales = if external_mode {
        1
    } else {
        scale_cfg.num_scales
    };
    let mid = num_scales / 2;

    let relative = |k: usize| scale_cfg.scale_step.powi(k as i32 - mid as i32);
    let respond = |k: usize| -> Result<(Plane, Plane)> {
        let stack = if external_mode {
            let s = external.ok_or_else(|| {
                Error::InvalidParameter(
                    "external feature backend needs a channel stack per frame".into(),
                )
            })?;
            prepare_stack(s, geometry, state.config.features.window)?
        } else {
            windowed_features(
                frame,
                state.center,
                geometry,
                state.scale * relative(k),
                &state.config.features,
            )?
        };
        let coarse = fftshift(&detection_response(&stack.to_spectral(), &state.filter)?);
        let fine = spectral_upsample(&coarse, geometry.model_px)?;
        Ok((coarse, fine))
    };

    #[cfg(feature = "parallel")]
    let per_scale: Vec<Result<(Plane, Plane)>> = {
        use rayon::prelude::*;
        (0..num_scales).into_par_iter().map(respond).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_scale: Vec<Result<(Plane, Plane)>> = (0..num_scales).map(respond).collect();

    let mut maps = Vec::with_capacity(num_scales);
    for r in per_scale {
        maps.push(r?);
    }

    let mut best: Option<(usize, (usize, usize), f64)> = None;
    for &k in &scale_probe_order(num_scales) {
        let (pos, val) = maps[k].1.argmax();
        if best.map_or(true, |(_, _, b)| val > b) {
            best = Some((k, pos, val));
        }
    }
    let (k, pos, peak) = best.expect("num_scales >= 1");

    // Fine-grid index of zero displacement: the coarse center cell scaled
    // by the cell size.
    let center_r = (geometry.feature_grid.h / 2) * geometry.cell;
    let center_c = (geometry.feature_grid.w / 2) * geometry.cell;
    let disp_model = (
        pos.1 as f64 - center_c as f64,
        pos.0 as f64 - center_r as f64,
    );
    let scale_k = state.scale * relative(k);
    let (wk_w, wk_h) = geometry.window_at(scale_k);
    let new_center = (
        state.center.0 + disp_model.0 * wk_w / geometry.model_px.w as f64,
        state.center.1 + disp_model.1 * wk_h / geometry.model_px.h as f64,
    );

    Ok(Detection {
        center: new_center,
        scale: scale_k,
        response: ResponseMap::new(maps.swap_remove(k).0),
        scale_index: k,
        peak,
    })
}

/// Consensus-gated model update. High consensus learns at the boosted
/// rate, mid consensus at the low rate, low consensus skips all learning.
/// When learning, the appearance spectra and the ideal response map move
/// by their convex combinations and the filter is re-trained (warm-started)
/// on the updated appearance model.
pub fn gated_update(
    state: &mut TrackerState,
    features_at_peak: &SpectralStack,
    current: &ResponseMap,
    cfg: &UpdateConfig,
) -> Result<DecisionRecord> {
    cfg.validate()?;
    let c = consensus(&state.ideal_response, current)?;
    let (eta, learned) = if c > cfg.threshold_high {
        (cfg.eta_high, true)
    } else if c > cfg.threshold_low {
        (cfg.eta_low, true)
    } else {
        (0.0, false)
    };

    if learned {
        if features_at_peak.grid() != state.appearance.grid()
            || features_at_peak.channels() != state.appearance.channels()
        {
            return Err(Error::GridMismatch {
                expected: state.appearance.grid(),
                got: features_at_peak.grid(),
            });
        }
        for d in 0..state.appearance.channels() {
            let model = state.appearance.channel_mut(d);
            for (m, &cur) in model
                .as_mut_slice()
                .iter_mut()
                .zip(features_at_peak.channel(d).as_slice())
            {
                *m = (1.0 - eta) * *m + eta * cur;
            }
        }
        let gamma = cfg.gamma;
        for (m, &cur) in state
            .ideal_response
            .values_mut()
            .as_mut_slice()
            .iter_mut()
            .zip(current.values().as_slice())
        {
            *m = (1.0 - gamma) * *m + gamma * cur;
        }
        let trace_sink = state.config.collect_traces.then_some(&mut state.traces);
        let (filter, admm) = train_filter_spectral(
            &state.appearance,
            &state.y_hat,
            &state.penalization,
            &state.config.solver,
            Some(&state.filter),
            trace_sink,
        )?;
        state.filter = filter;
        state.admm = admm;
    }

    Ok(DecisionRecord {
        frame: state.frame_index,
        center: state.center,
        scale: state.scale,
        consensus: c,
        eta_used: eta,
        learned,
    })
}

/// One full tracking step: detect, verify, update, report the output box.
///
/// A lost target (search window fully outside the frame) does not abort
/// the pass: the tracker reports the last box and keeps searching at the
/// last position, since one-pass evaluation forbids re-initialization.
pub fn step(
    state: &mut TrackerState,
    frame: &Frame,
    external: Option<&FeatureStack>,
) -> Result<(Rect, DecisionRecord)> {
    state.frame_index += 1;
    let detection = match detect(state, frame, &state.config.scale.clone(), external) {
        Ok(d) => d,
        Err(Error::LostTarget) => {
            let record = DecisionRecord {
                frame: state.frame_index,
                center: state.center,
                scale: state.scale,
                consensus: 0.0,
                eta_used: 0.0,
                learned: false,
            };
            return Ok((state.last_box, record));
        }
        Err(e) => return Err(e),
    };

    state.center = detection.center;
    state.scale = detection.scale;

    let features_at_peak = if state.config.features.backend == FeatureBackend::External {
        let s = external.ok_or_else(|| {
            Error::InvalidParameter(
                "external feature backend needs a channel stack per frame".into(),
            )
        })?;
        prepare_stack(s, &state.geometry, state.config.features.window)?.to_spectral()
    } else {
        windowed_features(
            frame,
            state.center,
            &state.geometry,
            state.scale,
            &state.config.features,
        )?
        .to_spectral()
    };

    let record = gated_update(
        state,
        &features_at_peak,
        &detection.response,
        &state.config.update.clone(),
    )?;
    let out = state.current_box();
    state.last_box = out;
    Ok((out, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::spectral::circular_shift;
    use proptest::prelude::*;

    /// Renders a ringed blob on a textured background; enough gradient
    /// structure for the gradient-cell backend.
    fn blob_frame(w: usize, h: usize, center: (f64, f64), radius: f64, seed: u64) -> Frame {
        let mut rng = SplitMix64::new(seed);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                data[y * w + x] =
                    0.45 + 0.08 * rng.next_f64() + 0.04 * (((x / 3) + (y / 3)) % 2) as f64;
            }
        }
        let smooth = |t: f64| t.clamp(0.0, 1.0);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - center.0;
                let dy = y as f64 - center.1;
                let r = (dx * dx + dy * dy).sqrt();
                if r < radius + 1.0 {
                    let core = smooth(radius * 0.55 - r + 1.0);
                    let ring = smooth(radius - r) * (1.0 - smooth(radius * 0.8 - r));
                    let v = 0.15 + 0.85 * core + 0.55 * ring;
                    data[y * w + x] = v.min(1.0);
                }
            }
        }
        Frame::new(w, h, data).unwrap()
    }

    #[test]
    fn tracker_state_is_send() {
        // Distinct sequences can be tracked from different threads.
        fn assert_send<T: Send>() {}
        assert_send::<TrackerState>();
    }

    fn quick_config() -> TrackerConfig {
        TrackerConfig {
            init_admm_iterations: 4,
            ..TrackerConfig::default()
        }
    }

    #[test]
    fn consensus_identical_is_exactly_one() {
        let g = Grid2::new(5, 5).unwrap();
        let mut rng = SplitMix64::new(1);
        let a = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0)));
        assert_eq!(consensus(&a, &a.clone()).unwrap(), 1.0);
    }

    #[test]
    fn consensus_unit_distance_is_inv_e() {
        let g = Grid2::new(4, 4).unwrap();
        let a = ResponseMap::new(Plane::zeros(g));
        let mut b = ResponseMap::new(Plane::zeros(g));
        *b.values_mut().at_mut(2, 1) = 1.0;
        let c = consensus(&a, &b).unwrap();
        assert!((c - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn consensus_matches_direct_summation() {
        let g = Grid2::new(8, 8).unwrap();
        let mut rng = SplitMix64::new(2);
        let a = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0)));
        let b = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0)));
        let mut acc = 0.0;
        for i in 0..g.len() {
            let d = a.values().as_slice()[i] - b.values().as_slice()[i];
            acc += d * d;
        }
        assert!((consensus(&a, &b).unwrap() - (-acc).exp()).abs() < 1e-15);
    }

    #[test]
    fn consensus_grid_mismatch_errors() {
        let a = ResponseMap::new(Plane::zeros(Grid2::new(4, 4).unwrap()));
        let b = ResponseMap::new(Plane::zeros(Grid2::new(4, 5).unwrap()));
        assert!(matches!(consensus(&a, &b), Err(Error::GridMismatch { .. })));
    }

    proptest! {
        #[test]
        fn consensus_bounds_and_symmetry(seed in 0u64..1000) {
            let g = Grid2::new(6, 6).unwrap();
            let mut rng = SplitMix64::new(seed);
            let a = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-2.0, 2.0)));
            let b = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-2.0, 2.0)));
            let cab = consensus(&a, &b).unwrap();
            let cba = consensus(&b, &a).unwrap();
            prop_assert!(cab > 0.0 && cab <= 1.0);
            prop_assert_eq!(cab, cba);
        }

        #[test]
        fn consensus_monotone_as_maps_approach(t in 0.0f64..1.0) {
            let g = Grid2::new(4, 4).unwrap();
            let mut rng = SplitMix64::new(9);
            let a = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0)));
            let b = ResponseMap::new(Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0)));
            // Blend b toward a by t and by t/2; closer blend scores higher.
            let blend = |t: f64| {
                ResponseMap::new(Plane::from_fn(g, |r, c| {
                    (1.0 - t) * b.values().at(r, c) + t * a.values().at(r, c)
                }))
            };
            let near = consensus(&a, &blend(t)).unwrap();
            let far = consensus(&a, &blend(t / 2.0)).unwrap();
            prop_assert!(near >= far - 1e-12);
        }
    }

    #[test]
    fn eta_selection_is_a_step_function_of_consensus() {
        let cfg = UpdateConfig::default();
        let pick = |c: f64| -> f64 {
            if c > cfg.threshold_high {
                cfg.eta_high
            } else if c > cfg.threshold_low {
                cfg.eta_low
            } else {
                0.0
            }
        };
        let mut last = -1.0;
        for i in 0..=100 {
            let eta = pick(i as f64 / 100.0);
            assert!(eta >= last - 1e-15);
            last = eta;
        }
    }

    #[test]
    fn initialize_is_deterministic_and_self_consistent() {
        let frame = blob_frame(96, 96, (48.0, 48.0), 9.0, 3);
        let init = Rect::new(39.0, 39.0, 18.0, 18.0);
        let cfg = quick_config();
        let a = initialize(&frame, init, &cfg, None).unwrap();
        let b = initialize(&frame, init, &cfg, None).unwrap();
        assert_eq!(a.appearance, b.appearance);
        assert_eq!(a.filter, b.filter);
        assert_eq!(a.ideal_response, b.ideal_response);
        assert_eq!(
            consensus(&a.ideal_response, &a.ideal_response.clone()).unwrap(),
            1.0
        );
    }

    #[test]
    fn initial_ideal_response_peaks_at_center() {
        let frame = blob_frame(96, 96, (48.0, 48.0), 9.0, 4);
        let init = Rect::new(39.0, 39.0, 18.0, 18.0);
        let state = initialize(&frame, init, &quick_config(), None).unwrap();
        let ((r, c), _) = state.ideal_response.values().argmax();
        let g = state.geometry.feature_grid;
        assert_eq!((r, c), (g.h / 2, g.w / 2));
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let frame = blob_frame(32, 32, (16.0, 16.0), 5.0, 5);
        let cfg = quick_config();
        assert!(initialize(&frame, Rect::new(4.0, 4.0, 0.0, 8.0), &cfg, None).is_err());
    }

    #[test]
    fn detection_equivariant_to_content_translation() {
        // Shifting the window contents by k cells moves the raw response
        // argmax by exactly k cells.
        let frame = blob_frame(96, 96, (48.0, 48.0), 9.0, 6);
        let init = Rect::new(39.0, 39.0, 18.0, 18.0);
        let state = initialize(&frame, init, &quick_config(), None).unwrap();

        let stack = windowed_features(
            &frame,
            state.center,
            &state.geometry,
            1.0,
            &state.config.features,
        )
        .unwrap();
        let base = detection_response(&stack.to_spectral(), &state.filter).unwrap();
        let ((r0, c0), _) = base.argmax();

        let shift = (2isize, 3isize);
        let shifted_channels: Vec<Plane> = stack.iter().map(|p| circular_shift(p, shift)).collect();
        let shifted = FeatureStack::new(stack.cell_size(), shifted_channels).unwrap();
        let resp = detection_response(&shifted.to_spectral(), &state.filter).unwrap();
        let ((r1, c1), _) = resp.argmax();
        let g = state.geometry.feature_grid;
        assert_eq!(
            r1,
            (r0 as isize + shift.0).rem_euclid(g.h as isize) as usize
        );
        assert_eq!(
            c1,
            (c0 as isize + shift.1).rem_euclid(g.w as isize) as usize
        );
    }

    #[test]
    fn detect_recovers_translation() {
        let frame = blob_frame(128, 128, (64.0, 64.0), 9.0, 7);
        let init = Rect::new(55.0, 55.0, 18.0, 18.0);
        let state = initialize(&frame, init, &quick_config(), None).unwrap();

        // Same scene translated by (+8, +3); well within the search window.
        let moved = blob_frame(128, 128, (72.0, 67.0), 9.0, 7);
        let det = detect(&state, &moved, &state.config.scale, None).unwrap();
        assert!((det.center.0 - 72.0).abs() <= 1.5, "x {}", det.center.0);
        assert!((det.center.1 - 67.0).abs() <= 1.5, "y {}", det.center.1);
    }

    #[test]
    fn detect_self_frame_keeps_center_and_scale() {
        let frame = blob_frame(128, 128, (64.0, 64.0), 9.0, 8);
        let init = Rect::new(55.0, 55.0, 18.0, 18.0);
        let state = initialize(&frame, init, &quick_config(), None).unwrap();
        let det = detect(&state, &frame, &state.config.scale, None).unwrap();
        assert_eq!(det.scale_index, state.config.scale.num_scales / 2);
        assert!((det.scale - 1.0).abs() < 1e-12);
        let cell = state.geometry.cell as f64;
        assert!((det.center.0 - 64.0).abs() <= cell);
        assert!((det.center.1 - 64.0).abs() <= cell);
    }

    #[test]
    fn detect_upscaled_scene_shifts_scale_index() {
        // A coarse scale step keeps the size change above the feature-cell
        // quantization floor, so the neighboring scale wins outright.
        let mut cfg = quick_config();
        cfg.scale.scale_step = 1.1;
        let frame = blob_frame(160, 160, (80.0, 80.0), 16.0, 9);
        let init = Rect::new(64.0, 64.0, 32.0, 32.0);
        let state = initialize(&frame, init, &cfg, None).unwrap();

        // Blob grown by one scale step: the larger-scale window should win.
        let step = cfg.scale.scale_step;
        let grown = blob_frame(160, 160, (80.0, 80.0), 16.0 * step, 9);
        let det = detect(&state, &grown, &cfg.scale, None).unwrap();
        let mid = cfg.scale.num_scales / 2;
        assert_eq!(det.scale_index, mid + 1, "scale index {}", det.scale_index);
        assert!((det.scale - step).abs() < 1e-12);
    }

    #[test]
    fn lost_target_errors_then_step_reports_last_box() {
        let frame = blob_frame(64, 64, (32.0, 32.0), 7.0, 10);
        let init = Rect::new(25.0, 25.0, 14.0, 14.0);
        let mut state = initialize(&frame, init, &quick_config(), None).unwrap();
        state.center = (-500.0, -500.0);
        assert!(matches!(
            detect(&state, &frame, &state.config.scale, None),
            Err(Error::LostTarget)
        ));
        let before = state.last_box;
        let (rect, record) = step(&mut state, &frame, None).unwrap();
        assert_eq!(rect, before);
        assert!(!record.learned);
    }

    #[test]
    fn gate_closed_leaves_models_bitwise_unchanged() {
        let frame = blob_frame(96, 96, (48.0, 48.0), 9.0, 11);
        let init = Rect::new(39.0, 39.0, 18.0, 18.0);
        let mut state = initialize(&frame, init, &quick_config(), None).unwrap();
        let appearance = state.appearance.clone();
        let ideal = state.ideal_response.clone();
        let filter = state.filter.clone();

        // A wildly different map forces consensus below the low gate.
        let far = ResponseMap::new(Plane::from_fn(state.ideal_response.grid(), |_, _| 10.0));
        let rec = gated_update(
            &mut state,
            &appearance.clone(),
            &far,
            &UpdateConfig::default(),
        )
        .unwrap();
        assert!(!rec.learned);
        assert_eq!(rec.eta_used, 0.0);
        assert_eq!(state.appearance, appearance);
        assert_eq!(state.ideal_response, ideal);
        assert_eq!(state.filter, filter);
    }

    #[test]
    fn eta_one_replaces_appearance_bitwise() {
        let frame = blob_frame(96, 96, (48.0, 48.0), 9.0, 12);
        let init = Rect::new(39.0, 39.0, 18.0, 18.0);
        let mut state = initialize(&frame, init, &quick_config(), None).unwrap();
        let moved = blob_frame(96, 96, (50.0, 48.0), 9.0, 12);
        let fresh = windowed_features(
            &moved,
            state.center,
            &state.geometry,
            1.0,
            &state.config.features,
        )
        .unwrap()
        .to_spectral();
        let current = state.ideal_response.clone();
        let cfg = UpdateConfig {
            eta_high: 1.0,
            eta_low: 1.0,
            ..UpdateConfig::default()
        };
        let rec = gated_update(&mut state, &fresh, &current, &cfg).unwrap();
        assert!(rec.learned);
        assert_eq!(state.appearance, fresh);
    }

    #[test]
    fn convex_combination_rates_verified_elementwise() {
        let g = Grid2::new(3, 4).unwrap();
        let mut rng = SplitMix64::new(13);
        for &(eta, gamma) in &[(0.0, 0.0), (0.25, 0.25), (0.5, 0.5), (1.0, 1.0)] {
            let old_resp = Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0));
            let new_resp = Plane::from_fn(g, |_, _| rng.range_f64(-1.0, 1.0));
            let mut blended = old_resp.clone();
            for (m, &cur) in blended.as_mut_slice().iter_mut().zip(new_resp.as_slice()) {
                *m = (1.0 - gamma) * *m + gamma * cur;
            }
            for i in 0..g.len() {
                let expect =
                    (1.0 - gamma) * old_resp.as_slice()[i] + gamma * new_resp.as_slice()[i];
                assert_eq!(blended.as_slice()[i], expect);
            }
            // Same arithmetic drives the appearance update with eta.
            let a = rng.range_f64(-1.0, 1.0);
            let b = rng.range_f64(-1.0, 1.0);
            assert_eq!((1.0 - eta) * a + eta * b, (1.0 - eta) * a + eta * b);
        }
    }

    #[test]
    fn zero_rates_leave_models_unchanged() {
        let frame = blob_frame(96, 96, (48.0, 48.0), 9.0, 14);
        let init = Rect::new(39.0, 39.0, 18.0, 18.0);
        let state = initialize(&frame, init, &quick_config(), None).unwrap();
        // eta = 0 is outside UpdateConfig's validated range (rates are
        // positive), so check the arithmetic identity directly.
        let g = state.ideal_response.grid();
        let mut m = state.ideal_response.values().clone();
        let cur = Plane::from_fn(g, |r, c| m.at(r, c) + 1.0);
        for (mv, &cv) in m.as_mut_slice().iter_mut().zip(cur.as_slice()) {
            let before = *mv;
            *mv = (1.0 - 0.0) * *mv + 0.0 * cv;
            assert_eq!(*mv, before);
        }
    }

    #[test]
    fn scale_probe_order_prefers_middle() {
        assert_eq!(scale_probe_order(1), vec![0]);
        assert_eq!(scale_probe_order(5), vec![2, 1, 3, 0, 4]);
    }

    #[test]
    fn common_response_scaling_keeps_selection() {
        let g = Grid2::new(6, 6).unwrap();
        let mut rng = SplitMix64::new(15);
        let responses: Vec<Plane> = (0..5)
            .map(|_| Plane::from_fn(g, |_, _| rng.range_f64(0.0, 1.0)))
            .collect();
        let select = |maps: &[Plane]| -> (usize, (usize, usize)) {
            let mut best: Option<(usize, (usize, usize), f64)> = None;
            for &k in &scale_probe_order(maps.len()) {
                let (pos, val) = maps[k].argmax();
                if best.map_or(true, |(_, _, b)| val > b) {
                    best = Some((k, pos, val));
                }
            }
            let (k, pos, _) = best.unwrap();
            (k, pos)
        };
        let base = select(&responses);
        let scaled: Vec<Plane> = responses
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.as_mut_slice().iter_mut().for_each(|v| *v *= 7.5);
                q
            })
            .collect();
        assert_eq!(select(&scaled), base);
    }

    #[test]
    fn static_steps_are_a_fixed_point() {
        let frame = blob_frame(128, 128, (64.0, 64.0), 9.0, 16);
        let init = Rect::new(55.0, 55.0, 18.0, 18.0);
        let mut state = initialize(&frame, init, &quick_config(), None).unwrap();
        let (first, _) = step(&mut state, &frame, None).unwrap();
        for _ in 0..10 {
            let (rect, _) = step(&mut state, &frame, None).unwrap();
            assert_eq!(rect, first);
        }
    }
}
