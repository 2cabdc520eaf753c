//! Pipeline stages. Each reads its inputs from files under the output
//! directory and writes its artifacts there, so stages can run separately.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;
use phenn::calibration::{apply_calibration, calibrate, AffineCalibration};
use phenn::dataset::{
    build_pairs, ingest_directory, load_corpus, load_pairs, save_corpora, save_pairs, split, synthesize_corpus, Corpus,
    Manifest, PairSet, Role,
};
use phenn::field::{write_pfm, write_pgm, Image};
use phenn::net::{
    build_phenn, check_params, infer_with, load_checkpoint_for, npcc, save_checkpoint, train, NetworkParams,
    TrainReport,
};
use phenn::optics::ForwardModel;
use phenn::resolution::{measure_resolution_limit, ResolutionReport, SweepOptions};
use phenn::spectral::{estimate_psd_with_band, flattening_filter, premodulate, PsdEstimate};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};

/// Training-data variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Premodulated,
}

impl Variant {
    pub fn from_flag(premodulate: bool) -> Self {
        if premodulate {
            Variant::Premodulated
        } else {
            Variant::Baseline
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Premodulated => "premodulated",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const POSTMODULATED: &str = "postmodulated";

/// Artifact paths under one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn psd(&self) -> PathBuf {
        self.root.join("psd")
    }

    pub fn pairs(&self, v: Variant) -> PathBuf {
        self.root.join("pairs").join(v.as_str())
    }

    pub fn checkpoint(&self, v: Variant) -> PathBuf {
        self.root.join("train").join(format!("{v}.ckpt"))
    }

    pub fn calibration(&self, v: Variant) -> PathBuf {
        self.root.join("calibration").join(format!("{v}.txt"))
    }

    pub fn resolve(&self, label: &str) -> PathBuf {
        self.root.join("resolve").join(label)
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.txt")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(BenchError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        })
    }
}

fn read_manifest(dir: &Path, stage: &'static str) -> Result<Manifest> {
    let path = dir.join("manifest.txt");
    require(&path, stage)?;
    Ok(Manifest::read(path)?)
}

fn model(cfg: &ExperimentConfig) -> Result<ForwardModel> {
    Ok(ForwardModel::new(cfg.optics.clone())?)
}

/// Starts the output directory by writing the effective config.
pub fn prepare(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    write_text(&layout.root.join("config.txt"), &cfg.snapshot())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSummary {
    pub source: String,
    pub train: usize,
    pub test: usize,
    pub calibration: usize,
}

/// Synthesizes (or ingests and splits) the train, test and calibration corpora.
pub fn synth(cfg: &ExperimentConfig, layout: &Layout) -> Result<CorpusSummary> {
    let d = &cfg.dataset;
    let corpora: [Corpus; 3] = match &d.ingest {
        None => {
            let seeds = cfg.corpus_seeds();
            [
                synthesize_corpus(d.train_count, d.size, d.exponent, seeds[0], Role::Train)?,
                synthesize_corpus(d.test_count, d.size, d.exponent, seeds[1], Role::Test)?,
                synthesize_corpus(d.calibration_count, d.size, d.exponent, seeds[2], Role::Calibration)?,
            ]
        }
        Some(dir) => {
            let (all, report) = ingest_directory(dir, d.size, Role::Train)?;
            info!("ingested {} images, skipped {}", report.loaded.len(), report.skipped.len());
            let total = all.len() as f64;
            let want = [d.train_count, d.test_count, d.calibration_count];
            let needed: usize = want.iter().sum();
            if needed > all.len() {
                return Err(BenchError::Config {
                    field: "dataset.ingest".into(),
                    reason: format!("{} readable images, {needed} requested", all.len()),
                });
            }
            let fractions = want.map(|c| c as f64 / total);
            let (a, b, c) = split(&all, fractions, cfg.seed)?;
            [a, b, c]
        }
    };
    let dir = layout.corpus();
    let mut manifest = Manifest::default();
    save_corpora(&dir, &corpora.iter().collect::<Vec<_>>(), &mut manifest)?;
    manifest.set_header("size", d.size);
    manifest.set_header("seed.master", cfg.seed);
    manifest.write(dir.join("manifest.txt"))?;
    let summary = CorpusSummary {
        source: manifest.header("source").unwrap_or_default().to_string(),
        train: corpora[0].len(),
        test: corpora[1].len(),
        calibration: corpora[2].len(),
    };
    info!("corpus: {summary:?}");
    Ok(summary)
}

fn load_role(layout: &Layout, role: Role) -> Result<Corpus> {
    let dir = layout.corpus();
    let manifest = read_manifest(&dir, "synth")?;
    Ok(load_corpus(&dir, &manifest, role)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdSummary {
    pub before: Option<f64>,
    pub after: Option<f64>,
}

fn fmt_exponent(p: Option<f64>) -> String {
    p.map_or("fit failed".to_string(), |p| format!("{p:.6}"))
}

/// Corpus PSD before and after flattening, with fitted exponents.
pub fn psd(cfg: &ExperimentConfig, layout: &Layout) -> Result<PsdSummary> {
    let train_corpus = load_role(layout, Role::Train)?;
    let n = cfg.dataset.size;
    let filter = flattening_filter(n, n, None)?;
    let flat = train_corpus
        .images
        .iter()
        .map(|img| premodulate(img, &filter))
        .collect::<phenn::Result<Vec<Image>>>()?;
    let before = estimate_psd_with_band(&train_corpus.images, cfg.fit_band)?;
    let after = estimate_psd_with_band(&flat, cfg.fit_band)?;
    let dir = layout.psd();
    write_psd(&dir, "raw", &before)?;
    write_psd(&dir, "premodulated", &after)?;
    let summary = PsdSummary {
        before: before.exponent,
        after: after.exponent,
    };
    let text = format!(
        "fit_band_lo={:e}\nfit_band_hi={:e}\nexponent.raw={}\nexponent.premodulated={}\n",
        before.fit_band.lo,
        before.fit_band.hi,
        fmt_exponent(summary.before),
        fmt_exponent(summary.after)
    );
    write_text(&dir.join("summary.txt"), &text)?;
    info!("psd exponents: {} -> {}", fmt_exponent(summary.before), fmt_exponent(summary.after));
    Ok(summary)
}

fn write_psd(dir: &Path, name: &str, est: &PsdEstimate) -> Result<()> {
    write_text(&dir.join(format!("radial_{name}.csv")), &est.radial.to_csv())?;
    let log_psd = est.psd2d.map(|v| (v.max(1e-12)).log10())?;
    let (lo, hi) = (log_psd.min(), log_psd.max());
    let preview = log_psd.map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })?;
    write_pgm(&preview, dir.join(format!("psd2d_{name}.pgm")), 1.0)?;
    Ok(())
}

/// Simulates measurement pairs for one variant. Only the training split is
/// ever premodulated.
pub fn pairs(cfg: &ExperimentConfig, layout: &Layout, variant: Variant) -> Result<usize> {
    let corpus_dir = layout.corpus();
    let manifest = read_manifest(&corpus_dir, "synth")?;
    let model = model(cfg)?;
    let n = cfg.dataset.size;
    let filter = flattening_filter(n, n, None)?;
    let dir = layout.pairs(variant);
    let mut out = Manifest::default();
    out.set_header("variant", variant);
    let mut total = 0;
    for role in [Role::Train, Role::Test, Role::Calibration] {
        let corpus = load_corpus(&corpus_dir, &manifest, role)?;
        let set = build_pairs(&corpus, &model, variant == Variant::Premodulated, &filter)?;
        total += set.len();
        save_pairs(&dir, &set, &mut out)?;
    }
    out.write(dir.join("manifest.txt"))?;
    info!("{variant}: {total} pairs");
    Ok(total)
}

fn load_variant(layout: &Layout, variant: Variant, role: Role) -> Result<PairSet> {
    let dir = layout.pairs(variant);
    let manifest = read_manifest(&dir, "pairs")?;
    Ok(load_pairs(&dir, &manifest, role)?)
}

/// Trains a fresh network on the variant's training pairs.
pub fn train_stage(cfg: &ExperimentConfig, layout: &Layout, variant: Variant) -> Result<TrainReport> {
    let set = load_variant(layout, variant, Role::Train)?;
    let (params, _) = build_phenn(&cfg.network)?;
    info!("training {variant}: {} parameters, {} pairs", params.count(), set.len());
    let (params, mut report) = train(&set, params, &cfg.training)?;
    let path = layout.checkpoint(variant);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    save_checkpoint(&params, &path)?;
    report.checkpoint = Some(path.clone());
    write_text(&path.with_file_name(format!("{variant}_history.csv")), &report.history_csv())?;
    write_text(&path.with_file_name(format!("{variant}.txt")), &train_summary(&report))?;
    Ok(report)
}

pub fn train_summary(report: &TrainReport) -> String {
    format!(
        "train_pairs={}\nvalidation_pairs={}\nepochs_run={}\nbest_epoch={}\nfinal_train_npcc={}\n{}",
        report.train_pairs,
        report.validation_pairs,
        report.history.len(),
        report.best_epoch,
        report.final_train_loss().map_or("none".into(), |v| format!("{v:.6}")),
        report.hyper.to_text()
    )
}

fn load_params(cfg: &ExperimentConfig, layout: &Layout, variant: Variant) -> Result<NetworkParams> {
    let path = layout.checkpoint(variant);
    require(&path, "train")?;
    Ok(load_checkpoint_for(&path, &cfg.network)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSummary {
    pub calibration: AffineCalibration,
    /// Mean test NPCC of raw network outputs.
    pub test_npcc: f64,
    /// Mean absolute error of calibrated test outputs.
    pub test_mae: f64,
}

impl CalibrationSummary {
    pub fn to_text(&self) -> String {
        format!(
            "{}\ntest_npcc={:.6}\ntest_mae={:.6}\n",
            self.calibration.to_record(),
            self.test_npcc,
            self.test_mae
        )
    }
}

/// Fits the affine correction on the calibration split and scores the test split.
pub fn calibrate_stage(cfg: &ExperimentConfig, layout: &Layout, variant: Variant) -> Result<CalibrationSummary> {
    let params = load_params(cfg, layout, variant)?;
    let arch = check_params(&params)?;
    let cal_set = load_variant(layout, variant, Role::Calibration)?;
    let outputs = cal_set
        .intensities
        .iter()
        .map(|g| infer_with(&params, &arch, g))
        .collect::<phenn::Result<Vec<_>>>()?;
    let calibration = calibrate(&cal_set.objects, &outputs, cfg.calibration_levels)?;
    let test = load_variant(layout, variant, Role::Test)?;
    let (mut npcc_sum, mut mae_sum) = (0.0, 0.0);
    for (truth, g) in test.objects.iter().zip(&test.intensities) {
        let out = infer_with(&params, &arch, g)?;
        npcc_sum += npcc(truth, &out)?;
        let fixed = apply_calibration(&out, &calibration)?;
        mae_sum += truth.data().iter().zip(fixed.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64;
    }
    let count = test.len() as f64;
    let summary = CalibrationSummary {
        calibration,
        test_npcc: npcc_sum / count,
        test_mae: mae_sum / count,
    };
    write_text(&layout.calibration(variant), &summary.to_text())?;
    info!("{variant}: {}", summary.to_text().replace('\n', " "));
    Ok(summary)
}

fn load_calibration(layout: &Layout, variant: Variant) -> Result<AffineCalibration> {
    let path = layout.calibration(variant);
    require(&path, "calibrate")?;
    let text = read_text(&path)?;
    let (a, b, _, _) = AffineCalibration::parse_record(text.lines().next().unwrap_or_default())?;
    Ok(AffineCalibration::from_coefficients(a, b)?)
}

/// Dot-pair sweep on one trained variant, optionally flattening its outputs.
pub fn resolve_stage(cfg: &ExperimentConfig, layout: &Layout, variant: Variant, post_filter: bool) -> Result<ResolutionReport> {
    if post_filter && variant != Variant::Baseline {
        return Err(BenchError::Config {
            field: "spectral.premodulate".into(),
            reason: "the output-filter control runs on the baseline network".into(),
        });
    }
    let params = load_params(cfg, layout, variant)?;
    let cal = load_calibration(layout, variant)?;
    let model = model(cfg)?;
    let n = cfg.dataset.size;
    let filter = flattening_filter(n, n, None)?;
    let label = if post_filter { POSTMODULATED } else { variant.as_str() };
    let r = &cfg.resolution;
    let spacings = r.d_min..=r.d_max;
    let report = measure_resolution_limit(
        label,
        &params,
        &cal,
        &model,
        SweepOptions {
            spacings: &spacings,
            threshold: r.threshold,
            post_filter: post_filter.then_some(&filter),
        },
    )?;
    let dir = layout.resolve(label);
    write_text(&dir.join("resolution.csv"), &report.to_csv())?;
    write_text(&dir.join("summary.txt"), &format!("{}\n", report.summary()))?;
    for (d, (img, profiles)) in spacings.clone().zip(report.reconstructions.iter().zip(&report.cross_sections)) {
        write_pfm(img, dir.join(format!("recon_{d:02}.pfm")))?;
        write_pgm(&img.rescale_unit(), dir.join(format!("recon_{d:02}.pgm")), 1.0)?;
        let mut csv = String::from("pair,sample,value\n");
        for (k, profile) in profiles.iter().enumerate() {
            for (i, v) in profile.iter().enumerate() {
                let _ = writeln!(csv, "{k},{i},{v:.9e}");
            }
        }
        write_text(&dir.join(format!("cross_{d:02}.csv")), &csv)?;
    }
    info!("{}", report.summary());
    Ok(report)
}

/// Everything one end-to-end run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    /// Config snapshot minus the output directory, which holds the report.
    pub config: String,
    pub corpus: CorpusSummary,
    pub psd: PsdSummary,
    pub training: Vec<(Variant, TrainReport)>,
    pub calibrations: Vec<(Variant, CalibrationSummary)>,
    /// Baseline, premodulated, postmodulated.
    pub resolution: Vec<ResolutionReport>,
    pub wall_clock: Vec<(String, Duration)>,
    pub version: String,
}

impl RunReport {
    pub fn limit(&self, label: &str) -> Option<&ResolutionReport> {
        self.resolution.iter().find(|r| r.label == label)
    }

    /// Deterministic text: equal inputs give equal bytes. Timing lives in
    /// [`RunReport::timing_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "phase-bench {}", self.version);
        s.push_str("\n[config]\n");
        s.push_str(&self.config);
        let c = &self.corpus;
        let _ = write!(
            s,
            "\n[corpus]\nsource={}\ntrain={}\ntest={}\ncalibration={}\n",
            c.source, c.train, c.test, c.calibration
        );
        let _ = write!(
            s,
            "\n[psd]\nexponent.raw={}\nexponent.premodulated={}\n",
            fmt_exponent(self.psd.before),
            fmt_exponent(self.psd.after)
        );
        for (v, t) in &self.training {
            let _ = write!(s, "\n[train.{v}]\n{}", train_summary(t));
        }
        for (v, c) in &self.calibrations {
            let _ = write!(s, "\n[calibration.{v}]\n{}", c.to_text());
        }
        s.push_str("\n[resolution]\nlabel,limit,non_monotone\n");
        for r in &self.resolution {
            let _ = writeln!(s, "{},{},{}", r.label, r.limit_text(), r.non_monotone);
        }
        for r in &self.resolution {
            let _ = write!(s, "\n[resolution.{}]\n{}", r.label, r.to_csv());
        }
        s.push_str("\n[artifacts]\n");
        s.push_str(
            "config.txt\ncorpus/manifest.txt\npsd/summary.txt\npsd/radial_raw.csv\npsd/radial_premodulated.csv\n\
             pairs/baseline/manifest.txt\npairs/premodulated/manifest.txt\n\
             train/baseline.ckpt\ntrain/baseline_history.csv\ntrain/premodulated.ckpt\ntrain/premodulated_history.csv\n\
             calibration/baseline.txt\ncalibration/premodulated.txt\n\
             resolve/baseline/\nresolve/premodulated/\nresolve/postmodulated/\ntiming.txt\n",
        );
        s
    }

    pub fn timing_text(&self) -> String {
        let mut s = String::new();
        let mut total = Duration::ZERO;
        for (stage, d) in &self.wall_clock {
            let _ = writeln!(s, "{stage}={:.3}s", d.as_secs_f64());
            total += *d;
        }
        let _ = writeln!(s, "total={:.3}s", total.as_secs_f64());
        s
    }
}

fn timed<T>(clock: &mut Vec<(String, Duration)>, stage: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    clock.push((stage, start.elapsed()));
    Ok(out)
}

/// Runs every stage through the file system and writes `report.txt`.
pub fn reproduce(cfg: &ExperimentConfig, layout: &Layout) -> Result<RunReport> {
    let mut clock = Vec::new();
    prepare(cfg, layout)?;
    let corpus = timed(&mut clock, "synth".into(), || synth(cfg, layout))?;
    let psd = timed(&mut clock, "psd".into(), || psd(cfg, layout))?;
    let mut training = Vec::new();
    let mut calibrations = Vec::new();
    let mut resolution = Vec::new();
    for v in [Variant::Baseline, Variant::Premodulated] {
        timed(&mut clock, format!("pairs.{v}"), || pairs(cfg, layout, v))?;
        training.push((v, timed(&mut clock, format!("train.{v}"), || train_stage(cfg, layout, v))?));
        calibrations.push((v, timed(&mut clock, format!("calibrate.{v}"), || calibrate_stage(cfg, layout, v))?));
        resolution.push(timed(&mut clock, format!("resolve.{v}"), || resolve_stage(cfg, layout, v, false))?);
    }
    resolution.push(timed(&mut clock, format!("resolve.{POSTMODULATED}"), || {
        resolve_stage(cfg, layout, Variant::Baseline, true)
    })?);
    let report = RunReport {
        config: cfg.snapshot().lines().filter(|l| !l.starts_with("output.dir")).map(|l| format!("{l}\n")).collect(),
        corpus,
        psd,
        training,
        calibrations,
        resolution,
        wall_clock: clock,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_text(&layout.report(), &report.to_text())?;
    write_text(&layout.timing(), &report.timing_text())?;
    Ok(report)
}

/// Index written by the single-stage commands: the config plus whichever
/// stage summaries exist so far.
pub fn write_index(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let mut s = format!("phase-bench {}\n\n[config]\n{}", env!("CARGO_PKG_VERSION"), cfg.snapshot());
    let mut sections: Vec<(String, PathBuf)> = vec![("psd".into(), layout.psd().join("summary.txt"))];
    for v in [Variant::Baseline, Variant::Premodulated] {
        sections.push((format!("train.{v}"), layout.checkpoint(v).with_file_name(format!("{v}.txt"))));
        sections.push((format!("calibration.{v}"), layout.calibration(v)));
    }
    for label in ["baseline", "premodulated", POSTMODULATED] {
        sections.push((format!("resolution.{label}"), layout.resolve(label).join("resolution.csv")));
    }
    for (name, path) in sections {
        if path.exists() {
            let _ = write!(s, "\n[{name}]\n{}", read_text(&path)?);
        }
    }
    write_text(&layout.report(), &s)
}
