//! Run configuration: a flat `key = value` file with `[section]` headers
//! mirroring the library modules. Every knob has a default; the effective
//! configuration is dumped alongside each run so results can be reproduced
//! from the output directory alone.

use std::path::PathBuf;

use cftrack_core::eval::SynthSpec;
use cftrack_core::features::{FeatureBackend, Window};
use cftrack_core::solver::PenaltyMode;
use cftrack_core::tracker::TrackerConfig;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub grids: Vec<usize>,
    pub channels: Vec<usize>,
    pub admm_iterations: usize,
    pub repeats: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            grids: vec![16, 32],
            channels: vec![4],
            admm_iterations: 4,
            repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sequence: Option<PathBuf>,
    pub out: PathBuf,
    pub external_features: Option<PathBuf>,
    pub seed: u64,
    pub trace: bool,
    pub tracker: TrackerConfig,
    pub synth: SynthSpec,
    pub bench: BenchSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sequence: None,
            out: PathBuf::from("out"),
            external_features: None,
            seed: 7,
            trace: false,
            tracker: TrackerConfig::default(),
            synth: SynthSpec::default(),
            bench: BenchSpec::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError(format!(
            "key '{key}': expected true/false, got '{value}'"
        ))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

impl RunConfig {
    /// Parses the sectioned key=value text, starting from defaults.
    /// Unknown keys are rejected by name.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.apply(&full, value)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "run.sequence" => self.sequence = Some(PathBuf::from(value)),
            "run.out" => self.out = PathBuf::from(value),
            "run.external_features" => self.external_features = Some(PathBuf::from(value)),
            "run.seed" => self.seed = parse_num(key, value)?,
            "run.trace" => self.trace = parse_bool(key, value)?,

            "features.backend" => {
                self.tracker.features.backend = match value {
                    "grayscale" => FeatureBackend::Grayscale,
                    "gradient_cells" => FeatureBackend::GradientCells,
                    "external" => FeatureBackend::External,
                    _ => {
                        return Err(ConfigError(format!(
                            "key '{key}': unknown backend '{value}'"
                        )))
                    }
                }
            }
            "features.cell_size" => self.tracker.features.cell_size = parse_num(key, value)?,
            "features.window" => {
                self.tracker.features.window = match value {
                    "none" => Window::None,
                    "cosine" => Window::Cosine,
                    _ => {
                        return Err(ConfigError(format!(
                            "key '{key}': unknown window '{value}'"
                        )))
                    }
                }
            }
            "features.normalize" => self.tracker.features.normalize = parse_bool(key, value)?,

            "solver.admm_iterations" => {
                self.tracker.solver.admm_iterations = parse_num(key, value)?
            }
            "solver.mu_init" => self.tracker.solver.mu_init = parse_num(key, value)?,
            "solver.mu_max" => self.tracker.solver.mu_max = parse_num(key, value)?,
            "solver.mu_scale" => self.tracker.solver.mu_scale = parse_num(key, value)?,
            "solver.tolerance" => self.tracker.solver.tolerance = parse_num(key, value)?,
            "solver.penalty_floor" => self.tracker.solver.penalty_floor = parse_num(key, value)?,
            "solver.penalty_slope" => self.tracker.solver.penalty_slope = parse_num(key, value)?,
            "solver.sigma_factor" => self.tracker.solver.sigma_factor = parse_num(key, value)?,
            "solver.penalty_mode" => {
                self.tracker.solver.penalty_mode = match value {
                    "elementwise" => PenaltyMode::Elementwise,
                    "scalar" => PenaltyMode::Scalar,
                    _ => {
                        return Err(ConfigError(format!(
                            "key '{key}': unknown penalty mode '{value}'"
                        )))
                    }
                }
            }

            "tracker.init_admm_iterations" => {
                self.tracker.init_admm_iterations = parse_num(key, value)?
            }
            "tracker.max_model_cells" => self.tracker.max_model_cells = parse_num(key, value)?,

            "update.threshold_high" => self.tracker.update.threshold_high = parse_num(key, value)?,
            "update.threshold_low" => self.tracker.update.threshold_low = parse_num(key, value)?,
            "update.eta_high" => self.tracker.update.eta_high = parse_num(key, value)?,
            "update.eta_low" => self.tracker.update.eta_low = parse_num(key, value)?,
            "update.gamma" => self.tracker.update.gamma = parse_num(key, value)?,

            "scale.num_scales" => self.tracker.scale.num_scales = parse_num(key, value)?,
            "scale.scale_step" => self.tracker.scale.scale_step = parse_num(key, value)?,
            "scale.search_padding" => self.tracker.scale.search_padding = parse_num(key, value)?,

            "synth.width" => self.synth.width = parse_num(key, value)?,
            "synth.height" => self.synth.height = parse_num(key, value)?,
            "synth.frames" => self.synth.frames = parse_num(key, value)?,
            "synth.blob_size" => self.synth.blob_size = parse_num(key, value)?,
            "synth.start_x" => self.synth.start.0 = parse_num(key, value)?,
            "synth.start_y" => self.synth.start.1 = parse_num(key, value)?,
            "synth.velocity_x" => self.synth.velocity.0 = parse_num(key, value)?,
            "synth.velocity_y" => self.synth.velocity.1 = parse_num(key, value)?,
            "synth.scale_ramp" => self.synth.scale_ramp = parse_num(key, value)?,
            "synth.noise" => self.synth.noise = parse_num(key, value)?,
            "synth.occlude" => self.synth.occluded = parse_list(key, value)?,

            "bench.grids" => self.bench.grids = parse_list(key, value)?,
            "bench.channels" => self.bench.channels = parse_list(key, value)?,
            "bench.admm_iterations" => self.bench.admm_iterations = parse_num(key, value)?,
            "bench.repeats" => self.bench.repeats = parse_num(key, value)?,

            _ => return Err(ConfigError(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Canonical dump of the effective configuration; `parse(dump())`
    /// reproduces this config exactly.
    pub fn dump(&self) -> String {
        let backend = match self.tracker.features.backend {
            FeatureBackend::Grayscale => "grayscale",
            FeatureBackend::GradientCells => "gradient_cells",
            FeatureBackend::External => "external",
        };
        let window = match self.tracker.features.window {
            Window::None => "none",
            Window::Cosine => "cosine",
        };
        let penalty_mode = match self.tracker.solver.penalty_mode {
            PenaltyMode::Elementwise => "elementwise",
            PenaltyMode::Scalar => "scalar",
        };
        let list = |v: &[usize]| {
            v.iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        s.push_str("[run]\n");
        if let Some(seq) = &self.sequence {
            s.push_str(&format!("sequence = {}\n", seq.display()));
        }
        s.push_str(&format!("out = {}\n", self.out.display()));
        if let Some(ext) = &self.external_features {
            s.push_str(&format!("external_features = {}\n", ext.display()));
        }
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("trace = {}\n", self.trace));

        s.push_str("\n[features]\n");
        s.push_str(&format!("backend = {backend}\n"));
        s.push_str(&format!(
            "cell_size = {}\n",
            self.tracker.features.cell_size
        ));
        s.push_str(&format!("window = {window}\n"));
        s.push_str(&format!(
            "normalize = {}\n",
            self.tracker.features.normalize
        ));

        let sv = &self.tracker.solver;
        s.push_str("\n[solver]\n");
        s.push_str(&format!("admm_iterations = {}\n", sv.admm_iterations));
        s.push_str(&format!("mu_init = {}\n", sv.mu_init));
        s.push_str(&format!("mu_max = {}\n", sv.mu_max));
        s.push_str(&format!("mu_scale = {}\n", sv.mu_scale));
        s.push_str(&format!("tolerance = {}\n", sv.tolerance));
        s.push_str(&format!("penalty_floor = {}\n", sv.penalty_floor));
        s.push_str(&format!("penalty_slope = {}\n", sv.penalty_slope));
        s.push_str(&format!("sigma_factor = {}\n", sv.sigma_factor));
        s.push_str(&format!("penalty_mode = {penalty_mode}\n"));

        s.push_str("\n[tracker]\n");
        s.push_str(&format!(
            "init_admm_iterations = {}\n",
            self.tracker.init_admm_iterations
        ));
        s.push_str(&format!(
            "max_model_cells = {}\n",
            self.tracker.max_model_cells
        ));

        let u = &self.tracker.update;
        s.push_str("\n[update]\n");
        s.push_str(&format!("threshold_high = {}\n", u.threshold_high));
        s.push_str(&format!("threshold_low = {}\n", u.threshold_low));
        s.push_str(&format!("eta_high = {}\n", u.eta_high));
        s.push_str(&format!("eta_low = {}\n", u.eta_low));
        s.push_str(&format!("gamma = {}\n", u.gamma));

        let sc = &self.tracker.scale;
        s.push_str("\n[scale]\n");
        s.push_str(&format!("num_scales = {}\n", sc.num_scales));
        s.push_str(&format!("scale_step = {}\n", sc.scale_step));
        s.push_str(&format!("search_padding = {}\n", sc.search_padding));

        let sy = &self.synth;
        s.push_str("\n[synth]\n");
        s.push_str(&format!("width = {}\n", sy.width));
        s.push_str(&format!("height = {}\n", sy.height));
        s.push_str(&format!("frames = {}\n", sy.frames));
        s.push_str(&format!("blob_size = {}\n", sy.blob_size));
        s.push_str(&format!("start_x = {}\n", sy.start.0));
        s.push_str(&format!("start_y = {}\n", sy.start.1));
        s.push_str(&format!("velocity_x = {}\n", sy.velocity.0));
        s.push_str(&format!("velocity_y = {}\n", sy.velocity.1));
        s.push_str(&format!("scale_ramp = {}\n", sy.scale_ramp));
        s.push_str(&format!("noise = {}\n", sy.noise));
        s.push_str(&format!("occlude = {}\n", list(&sy.occluded)));

        let b = &self.bench;
        s.push_str("\n[bench]\n");
        s.push_str(&format!("grids = {}\n", list(&b.grids)));
        s.push_str(&format!("channels = {}\n", list(&b.channels)));
        s.push_str(&format!("admm_iterations = {}\n", b.admm_iterations));
        s.push_str(&format!("repeats = {}\n", b.repeats));
        s
    }

    /// Range checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tracker
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        if self.bench.grids.is_empty()
            || self.bench.channels.is_empty()
            || self.bench.repeats == 0
            || self.bench.admm_iterations == 0
            || self.bench.grids.iter().any(|&g| g < 2 || g > 256)
            || self.bench.channels.iter().any(|&d| d == 0 || d > 64)
        {
            return Err(ConfigError("bench sizes out of range".into()));
        }
        Ok(())
    }
}
