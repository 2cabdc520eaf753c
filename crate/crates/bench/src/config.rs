//! Line-oriented experiment configuration: `section.key = value`, `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use phenn::net::{NetworkConfig, TrainConfig};
use phenn::optics::OpticalConfig;
use phenn::spectral::BandSpec;

use crate::error::{BenchError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub size: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub calibration_count: usize,
    pub exponent: f64,
    /// Image directory to ingest instead of synthesizing textures.
    pub ingest: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            size: 64,
            train_count: 1000,
            test_count: 100,
            calibration_count: 100,
            exponent: -2.0,
            ingest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionConfig {
    pub d_min: usize,
    pub d_max: usize,
    pub threshold: f64,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            d_min: 2,
            d_max: 15,
            threshold: phenn::resolution::DEFAULT_DIP_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed for corpora, initialization and shuffling.
    pub seed: u64,
    pub optics: OpticalConfig,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub premodulate: bool,
    pub fit_band: BandSpec,
    pub calibration_levels: usize,
    pub resolution: ResolutionConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = ExperimentConfig {
            seed: 1,
            optics: OpticalConfig::default(),
            dataset: DatasetConfig::default(),
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            premodulate: false,
            fit_band: BandSpec::default(),
            calibration_levels: phenn::calibration::DEFAULT_LEVELS,
            resolution: ResolutionConfig::default(),
            output_dir: PathBuf::from("out"),
        };
        c.set_seed(1);
        c
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> BenchError {
    BenchError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn parse_value<T: std::str::FromStr>(field: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| invalid(field, format!("cannot parse `{value}`")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(field, format!("`{value}` is not a boolean"))),
    }
}

impl ExperimentConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.network.seed = seed;
        self.training.seed = seed;
    }

    /// Seeds of the train, test and calibration corpora.
    pub fn corpus_seeds(&self) -> [u64; 3] {
        let s = phenn::dataset::derive_seeds(self.seed, 3);
        [s[0], s[1], s[2]]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut seed = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(&format!("line {}", lineno + 1), format!("expected `section.key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let v = |k: &str| -> Result<f64> { parse_value(k, value) };
            match key {
                "run.seed" => seed = Some(parse_value(key, value)?),
                "optics.wavelength" => c.optics.wavelength = v(key)?,
                "optics.slm_pitch" => c.optics.slm_pitch = v(key)?,
                "optics.camera_pitch" => c.optics.camera_pitch = v(key)?,
                "optics.f1" => c.optics.f1 = v(key)?,
                "optics.f2" => c.optics.f2 = v(key)?,
                "optics.iris_diameter" => c.optics.iris_diameter = v(key)?,
                "optics.defocus" => c.optics.defocus = v(key)?,
                "optics.phase_max" => c.optics.phase_max = v(key)?,
                "optics.paper_parity" => c.optics.paper_parity = parse_bool(key, value)?,
                "optics.pupil" => c.optics.pupil = parse_bool(key, value)?,
                "dataset.size" => c.dataset.size = parse_value(key, value)?,
                "dataset.train_count" => c.dataset.train_count = parse_value(key, value)?,
                "dataset.test_count" => c.dataset.test_count = parse_value(key, value)?,
                "dataset.calibration_count" => c.dataset.calibration_count = parse_value(key, value)?,
                "dataset.exponent" => c.dataset.exponent = v(key)?,
                "dataset.ingest" => c.dataset.ingest = (!value.is_empty()).then(|| PathBuf::from(value)),
                "network.stem_width" => c.network.stem_width = parse_value(key, value)?,
                "network.widths" => {
                    c.network.widths = value
                        .split(',')
                        .map(|w| parse_value(key, w.trim()))
                        .collect::<Result<Vec<usize>>>()?
                }
                "network.residual_blocks" => c.network.num_rbs = parse_value(key, value)?,
                "network.kernel" => c.network.kernel = parse_value(key, value)?,
                "training.learning_rate" => c.training.learning_rate = v(key)?,
                "training.batch_size" => c.training.batch_size = parse_value(key, value)?,
                "training.epochs" => c.training.epochs = parse_value(key, value)?,
                "training.validation_fraction" => c.training.validation_fraction = v(key)?,
                "spectral.premodulate" => c.premodulate = parse_bool(key, value)?,
                "spectral.fit_lo_bins" => c.fit_band.lo_bins = v(key)?,
                "spectral.fit_hi_nyquist_fraction" => c.fit_band.hi_nyquist_fraction = v(key)?,
                "calibration.levels" => c.calibration_levels = parse_value(key, value)?,
                "resolution.d_min" => c.resolution.d_min = parse_value(key, value)?,
                "resolution.d_max" => c.resolution.d_max = parse_value(key, value)?,
                "resolution.threshold" => c.resolution.threshold = v(key)?,
                "output.dir" => c.output_dir = PathBuf::from(value),
                _ => return Err(invalid(key, "unknown key")),
            }
        }
        if let Some(s) = seed {
            c.set_seed(s);
        }
        c.optics.grid_size = c.dataset.size;
        c.network.input_size = c.dataset.size;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let core = |field: &'static str| move |e: phenn::Error| invalid(field, e.to_string());
        self.optics.validate().map_err(core("optics"))?;
        self.network.validate().map_err(core("network"))?;
        self.training.validate().map_err(core("training"))?;
        let d = &self.dataset;
        if d.size < 8 {
            return Err(invalid("dataset.size", format!("{} < 8", d.size)));
        }
        if d.train_count < 2 * self.training.batch_size {
            return Err(invalid(
                "dataset.train_count",
                format!("{} is fewer than twice training.batch_size", d.train_count),
            ));
        }
        if d.test_count == 0 {
            return Err(invalid("dataset.test_count", "must be positive"));
        }
        if d.calibration_count == 0 {
            return Err(invalid("dataset.calibration_count", "must be positive"));
        }
        if !(d.exponent <= 0.0) {
            return Err(invalid("dataset.exponent", format!("{} must be <= 0", d.exponent)));
        }
        if let Some(dir) = &d.ingest {
            if !dir.is_dir() {
                return Err(invalid("dataset.ingest", format!("{} is not a directory", dir.display())));
            }
        }
        if self.calibration_levels < 2 {
            return Err(invalid("calibration.levels", "must be at least 2"));
        }
        let pixels = d.size * d.size * d.calibration_count;
        if pixels < self.calibration_levels {
            return Err(invalid("calibration.levels", format!("more levels than the {pixels} calibration samples")));
        }
        let r = &self.resolution;
        if r.d_min < 2 || r.d_min > r.d_max {
            return Err(invalid("resolution.d_min", format!("sweep {}..={} must start at 2 or more", r.d_min, r.d_max)));
        }
        if 4 * r.d_max >= d.size {
            return Err(invalid("resolution.d_max", format!("{} is not below N/4", r.d_max)));
        }
        if !(r.threshold > 0.0 && r.threshold < 1.0) {
            return Err(invalid("resolution.threshold", format!("{} outside (0, 1)", r.threshold)));
        }
        if !(self.fit_band.lo_bins > 0.0 && self.fit_band.hi_nyquist_fraction > 0.0 && self.fit_band.hi_nyquist_fraction <= 1.0) {
            return Err(invalid("spectral.fit_lo_bins", "fit band must be positive and end at or below Nyquist"));
        }
        Ok(())
    }

    /// Every effective setting, one `section.key = value` line each; parses
    /// back to an identical config.
    pub fn snapshot(&self) -> String {
        let o = &self.optics;
        let d = &self.dataset;
        let n = &self.network;
        let t = &self.training;
        let r = &self.resolution;
        let widths: Vec<String> = n.widths.iter().map(|w| w.to_string()).collect();
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("run.seed", self.seed.to_string());
        line("optics.wavelength", format!("{:e}", o.wavelength));
        line("optics.slm_pitch", format!("{:e}", o.slm_pitch));
        line("optics.camera_pitch", format!("{:e}", o.camera_pitch));
        line("optics.f1", format!("{:e}", o.f1));
        line("optics.f2", format!("{:e}", o.f2));
        line("optics.iris_diameter", format!("{:e}", o.iris_diameter));
        line("optics.defocus", format!("{:e}", o.defocus));
        line("optics.phase_max", format!("{:e}", o.phase_max));
        line("optics.paper_parity", o.paper_parity.to_string());
        line("optics.pupil", o.pupil.to_string());
        line("dataset.size", d.size.to_string());
        line("dataset.train_count", d.train_count.to_string());
        line("dataset.test_count", d.test_count.to_string());
        line("dataset.calibration_count", d.calibration_count.to_string());
        line("dataset.exponent", format!("{:e}", d.exponent));
        line("dataset.ingest", d.ingest.as_ref().map_or(String::new(), |p| p.display().to_string()));
        line("network.stem_width", n.stem_width.to_string());
        line("network.widths", widths.join(","));
        line("network.residual_blocks", n.num_rbs.to_string());
        line("network.kernel", n.kernel.to_string());
        line("training.learning_rate", format!("{:e}", t.learning_rate));
        line("training.batch_size", t.batch_size.to_string());
        line("training.epochs", t.epochs.to_string());
        line("training.validation_fraction", format!("{:e}", t.validation_fraction));
        line("spectral.premodulate", self.premodulate.to_string());
        line("spectral.fit_lo_bins", format!("{:e}", self.fit_band.lo_bins));
        line("spectral.fit_hi_nyquist_fraction", format!("{:e}", self.fit_band.hi_nyquist_fraction));
        line("calibration.levels", self.calibration_levels.to_string());
        line("resolution.d_min", r.d_min.to_string());
        line("resolution.d_max", r.d_max.to_string());
        line("resolution.threshold", format!("{:e}", r.threshold));
        line("output.dir", self.output_dir.display().to_string());
        s
    }
}
