//! Training and test corpora: power-law texture synthesis, ingestion of local
//! grayscale images, simulated (object, intensity) pairs, seeded splits and a
//! line-oriented manifest for persistence.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{read_pfm, read_pgm, write_pfm, Fft2, FrequencyGrid, Image};
use crate::optics::{preprocess, ForwardModel};
use crate::spectral::{premodulate, SpectralFilter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Test,
    Calibration,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
            Role::Calibration => "calibration",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "test" => Ok(Role::Test),
            "calibration" => Ok(Role::Calibration),
            other => Err(Error::param("role", format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Synthetic { exponent: f64, seed: u64 },
    Ingested { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub images: Vec<Image>,
    pub provenance: Provenance,
    pub role: Role,
}

impl Corpus {
    pub fn new(images: Vec<Image>, provenance: Provenance, role: Role) -> Result<Self> {
        if let Some(first) = images.first() {
            for img in &images {
                first.ensure_same_dims(img)?;
                img.ensure_unit_range()?;
            }
        }
        Ok(Corpus {
            images,
            provenance,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.images.first().map(Image::dims)
    }

    fn with_subset(&self, indices: &[usize], role: Role) -> Corpus {
        Corpus {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            provenance: self.provenance.clone(),
            role,
        }
    }
}

/// White Gaussian noise shaped to a `|f|^exponent` power spectrum.
///
/// The spectrum gain is `|f|^(exponent/2)` with the DC term removed; the
/// result is min-max rescaled to `[0, 1]`.
pub fn synthesize_texture(n: usize, exponent: f64, seed: u64) -> Result<Image> {
    if n < 8 {
        return Err(Error::param("n", format!("{n} < 8")));
    }
    if !(exponent.is_finite() && exponent <= 0.0) {
        return Err(Error::param("exponent", format!("{exponent} must be <= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Image::from_fn(n, n, None, |_, _| rng.sample(StandardNormal))?;
    let fft = Fft2::new(n, n);
    let grid = FrequencyGrid::new(n, n, None)?;
    let mut spectrum = fft.forward_real(&noise);
    for r in 0..n {
        for c in 0..n {
            let radius = grid.radius(r, c);
            let gain = if radius > 0.0 { radius.powf(0.5 * exponent) } else { 0.0 };
            spectrum.data_mut()[r * n + c] *= gain;
        }
    }
    fft.inverse_in_place(spectrum.data_mut());
    Ok(spectrum.real_part()?.rescale_unit())
}

/// Per-image seeds derived deterministically from a corpus seed.
pub fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

pub fn synthesize_corpus(count: usize, n: usize, exponent: f64, seed: u64, role: Role) -> Result<Corpus> {
    let images = derive_seeds(seed, count)
        .into_iter()
        .map(|s| synthesize_texture(n, exponent, s))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(images, Provenance::Synthetic { exponent, seed }, role)
}

/// Averaging weights mapping `src` samples onto `dst` equal-width cells.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut k = lo.floor() as usize;
            while (k as f64) < hi && k < src {
                let overlap = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((k, overlap / scale));
                }
                k += 1;
            }
            taps
        })
        .collect()
}

/// Center-crops to a square and area-averages to `n x n`.
pub fn resample_square(image: &Image, n: usize) -> Result<Image> {
    let (h, w) = image.dims();
    let side = h.min(w);
    let square = image.crop((h - side) / 2, (w - side) / 2, side, side)?;
    let weights = area_weights(side, n);
    let mut rows = vec![0.0; n * side];
    for (i, taps) in weights.iter().enumerate() {
        for &(k, wgt) in taps {
            for (dst, &src) in rows[i * side..(i + 1) * side].iter_mut().zip(square.row(k)) {
                *dst += wgt * src;
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for (j, taps) in weights.iter().enumerate() {
            out[i * n + j] = taps.iter().map(|&(k, wgt)| wgt * rows[i * side + k]).sum();
        }
    }
    Image::new(n, n, None, out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub loaded: Vec<PathBuf>,
    pub skipped: Vec<(PathBuf, String)>,
}

/// Loads every PGM/PFM file in `dir` (lexicographic order) as an `n x n`
/// image in `[0, 1]`. Unreadable files are skipped and listed in the report.
pub fn ingest_directory(dir: impl AsRef<Path>, n: usize, role: Role) -> Result<(Corpus, IngestReport)> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "pfm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    let mut report = IngestReport::default();
    let mut images = Vec::new();
    for path in paths {
        let is_pfm = path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("pfm")) == Some(true);
        let loaded = if is_pfm { read_pfm(&path) } else { read_pgm(&path) };
        match loaded.and_then(|img| resample_square(&img, n)) {
            Ok(img) => {
                images.push(img.rescale_unit());
                report.loaded.push(path);
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                report.skipped.push((path, e.to_string()));
            }
        }
    }
    if images.is_empty() {
        return Err(Error::Empty("no readable PGM/PFM images in directory"));
    }
    let corpus = Corpus::new(images, Provenance::Ingested { path: dir.to_path_buf() }, role)?;
    Ok((corpus, report))
}

/// Simulated training or test pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub objects: Vec<Image>,
    /// Background-subtracted, normalized intensities.
    pub intensities: Vec<Image>,
    pub background: Image,
    pub premodulated: bool,
    pub optics: String,
    pub role: Role,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> PairSet {
        PairSet {
            objects: indices.iter().map(|&i| self.objects[i].clone()).collect(),
            intensities: indices.iter().map(|&i| self.intensities[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> PairSet {
        PairSet {
            objects: Vec::new(),
            intensities: Vec::new(),
            background: self.background.clone(),
            premodulated: self.premodulated,
            optics: self.optics.clone(),
            role: self.role,
        }
    }
}

/// Pairs each corpus image with its preprocessed diffraction intensity.
///
/// With `premodulate` set, training objects are spectrally modulated by
/// `filter` before simulation, so the label is the modulated object. Test and
/// calibration corpora are never modulated.
pub fn build_pairs(corpus: &Corpus, model: &ForwardModel, premodulate_objects: bool, filter: &SpectralFilter) -> Result<PairSet> {
    let n = model.grid_size();
    if let Some(dims) = corpus.dims() {
        if dims != (n, n) {
            return Err(Error::DimensionMismatch { expected: (n, n), got: dims });
        }
    }
    let modulate = premodulate_objects && corpus.role == Role::Train;
    if premodulate_objects && !modulate {
        warn!("{} corpus left unmodulated", corpus.role);
    }
    let background = model.background()?;
    let mut objects = Vec::with_capacity(corpus.len());
    let mut intensities = Vec::with_capacity(corpus.len());
    for image in &corpus.images {
        let object = if modulate { premodulate(image, filter)? } else { image.clone() };
        let raw = model.simulate(&object)?;
        intensities.push(preprocess(&raw, &background)?.with_pitch(None)?);
        objects.push(object);
    }
    Ok(PairSet {
        objects,
        intensities,
        background,
        premodulated: modulate,
        optics: model.config().fingerprint(),
        role: corpus.role,
    })
}

/// Seeded disjoint partition into (train, test, calibration).
///
/// Part sizes are `floor(fraction * len)`; every requested part must be
/// nonempty.
pub fn split(corpus: &Corpus, fractions: [f64; 3], seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::param("fractions", "must be positive"));
    }
    if fractions.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::param("fractions", "sum exceeds 1"));
    }
    let len = corpus.len();
    let sizes: Vec<usize> = fractions.iter().map(|f| (f * len as f64 + 1e-9).floor() as usize).collect();
    if sizes.iter().any(|&s| s == 0) || sizes.iter().sum::<usize>() > len {
        return Err(Error::CorpusTooSmall(format!("{len} images cannot fill fractions {fractions:?}")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = order.split_at(sizes[0]);
    let (test, rest) = rest.split_at(sizes[1]);
    let calibration = &rest[..sizes[2]];
    Ok((
        corpus.with_subset(train, Role::Train),
        corpus.with_subset(test, Role::Test),
        corpus.with_subset(calibration, Role::Calibration),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub role: Role,
    pub index: usize,
    pub object: PathBuf,
    pub intensity: Option<PathBuf>,
}

/// `#key=value` header lines followed by `role,index,object,intensity` records.
/// Paths are relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub headers: Vec<(String, String)>,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn header(&self, key: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_header(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.headers.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.headers.push((key.to_string(), value)),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.headers {
            out.push_str(&format!("#{k}={v}\n"));
        }
        for r in &self.records {
            let intensity = r.intensity.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.role, r.index, r.object.display(), intensity));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = Manifest::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let (k, v) = header
                    .split_once('=')
                    .ok_or_else(|| Error::param("manifest", format!("line {}: header without `=`", lineno + 1)))?;
                manifest.headers.push((k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::param("manifest", format!("line {}: expected 4 fields", lineno + 1)));
            }
            let index = fields[1]
                .parse()
                .map_err(|_| Error::param("manifest", format!("line {}: bad index", lineno + 1)))?;
            manifest.records.push(ManifestRecord {
                role: fields[0].parse()?,
                index,
                object: PathBuf::from(fields[2]),
                intensity: (!fields[3].is_empty()).then(|| PathBuf::from(fields[3])),
            });
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn records_for(&self, role: Role) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.role == role)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn provenance_headers(manifest: &mut Manifest, provenance: &Provenance) {
    match provenance {
        Provenance::Synthetic { exponent, seed } => {
            manifest.set_header("source", "synthetic");
            manifest.set_header("exponent", exponent);
            manifest.set_header("seed", seed);
        }
        Provenance::Ingested { path } => {
            manifest.set_header("source", "ingested");
            manifest.set_header("path", path.display());
            manifest.set_header("ingest_rule", "center-crop square, area-average resample, min-max rescale");
        }
    }
}

/// Writes corpora as `objects/<role>_<index>.pfm` plus their manifest records.
pub fn save_corpora(dir: impl AsRef<Path>, corpora: &[&Corpus], manifest: &mut Manifest) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(&dir.join("objects"))?;
    for corpus in corpora {
        provenance_headers(manifest, &corpus.provenance);
        for (index, image) in corpus.images.iter().enumerate() {
            let rel = PathBuf::from("objects").join(format!("{}_{index:05}.pfm", corpus.role));
            write_pfm(image, dir.join(&rel))?;
            manifest.records.push(ManifestRecord {
                role: corpus.role,
                index,
                object: rel,
                intensity: None,
            });
        }
    }
    Ok(())
}

/// Writes a pair set as PFMs under `dir` and appends manifest records.
pub fn save_pairs(dir: impl AsRef<Path>, pairs: &PairSet, manifest: &mut Manifest) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(&dir.join("objects"))?;
    ensure_dir(&dir.join("intensities"))?;
    write_pfm(&pairs.background, dir.join("background.pfm"))?;
    manifest.set_header("optics", &pairs.optics);
    manifest.set_header(&format!("premodulated.{}", pairs.role), pairs.premodulated);
    for (index, (object, intensity)) in pairs.objects.iter().zip(&pairs.intensities).enumerate() {
        let obj = PathBuf::from("objects").join(format!("{}_{index:05}.pfm", pairs.role));
        let int = PathBuf::from("intensities").join(format!("{}_{index:05}.pfm", pairs.role));
        write_pfm(object, dir.join(&obj))?;
        write_pfm(intensity, dir.join(&int))?;
        manifest.records.push(ManifestRecord {
            role: pairs.role,
            index,
            object: obj,
            intensity: Some(int),
        });
    }
    Ok(())
}

/// Loads the corpus of one role from a manifest in `dir`.
pub fn load_corpus(dir: impl AsRef<Path>, manifest: &Manifest, role: Role) -> Result<Corpus> {
    let dir = dir.as_ref();
    let images = manifest
        .records_for(role)
        .map(|r| read_pfm(dir.join(&r.object)).and_then(|img| img.map(|v| v.clamp(0.0, 1.0))))
        .collect::<Result<Vec<_>>>()?;
    let provenance = match manifest.header("source") {
        Some("ingested") => Provenance::Ingested {
            path: PathBuf::from(manifest.header("path").unwrap_or_default()),
        },
        _ => Provenance::Synthetic {
            exponent: manifest.header("exponent").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
            seed: manifest.header("seed").and_then(|v| v.parse().ok()).unwrap_or(0),
        },
    };
    Corpus::new(images, provenance, role)
}

/// Loads the pairs of one role from a manifest in `dir`.
pub fn load_pairs(dir: impl AsRef<Path>, manifest: &Manifest, role: Role) -> Result<PairSet> {
    let dir = dir.as_ref();
    let mut objects = Vec::new();
    let mut intensities = Vec::new();
    for record in manifest.records_for(role) {
        let int = record
            .intensity
            .as_ref()
            .ok_or_else(|| Error::param("manifest", format!("{role} record {} has no intensity", record.index)))?;
        objects.push(read_pfm(dir.join(&record.object))?);
        intensities.push(read_pfm(dir.join(int))?);
    }
    if objects.is_empty() {
        return Err(Error::Empty("no pairs for the requested role"));
    }
    Ok(PairSet {
        objects,
        intensities,
        background: read_pfm(dir.join("background.pfm"))?,
        premodulated: manifest.header(&format!("premodulated.{role}")) == Some("true"),
        optics: manifest.header("optics").unwrap_or_default().to_string(),
        role,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::write_pgm;
    use crate::optics::OpticalConfig;
    use crate::spectral::flattening_filter;
    use tempfile::tempdir;

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let a = synthesize_texture(32, -2.0, 17).unwrap();
        let b = synthesize_texture(32, -2.0, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.min(), 0.0);
        assert_eq!(a.max(), 1.0);
        assert_ne!(a, synthesize_texture(32, -2.0, 18).unwrap());
        assert!(synthesize_texture(4, -2.0, 0).is_err());
        assert!(synthesize_texture(16, 0.5, 0).is_err());
    }

    #[test]
    fn area_resample_averages_blocks() {
        let img = Image::from_fn(8, 8, None, |r, c| (r * 8 + c) as f64).unwrap();
        let out = resample_square(&img, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = (img.get(2 * i, 2 * j) + img.get(2 * i + 1, 2 * j) + img.get(2 * i, 2 * j + 1) + img.get(2 * i + 1, 2 * j + 1)) / 4.0;
                assert!((out.get(i, j) - expected).abs() < 1e-12);
            }
        }
        // Non-integer ratio preserves the mean.
        let out = resample_square(&img, 3).unwrap();
        assert!((out.mean() - img.mean()).abs() < 1e-12);
    }

    #[test]
    fn center_crop_uses_middle() {
        let img = Image::from_fn(4, 6, None, |_, c| c as f64).unwrap();
        let out = resample_square(&img, 4).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ingest_examples() {
        let dir = tempdir().unwrap();
        let grad = Image::from_fn(128, 128, None, |r, c| ((r + c) % 256) as f64 / 255.0).unwrap();
        write_pgm(&grad, dir.path().join("b.pgm"), 1.0).unwrap();
        write_pfm(&Image::filled(64, 64, None, 0.3).unwrap(), dir.path().join("a.pfm")).unwrap();
        std::fs::write(dir.path().join("c.pgm"), b"garbage").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let (corpus, report) = ingest_directory(dir.path(), 64, Role::Train).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(report.skipped.len(), 1);
        assert!(report.loaded[0].ends_with("a.pfm"));
        // Constant input rescales to zeros.
        assert!(corpus.images[0].data().iter().all(|&v| v == 0.0));
        assert_eq!(corpus.images[1].max(), 1.0);
        assert_eq!(corpus.images[1].min(), 0.0);

        let empty = tempdir().unwrap();
        assert!(matches!(ingest_directory(empty.path(), 64, Role::Train), Err(Error::Empty(_))));
    }

    #[test]
    fn split_examples() {
        let corpus = synthesize_corpus(10, 8, -2.0, 1, Role::Train).unwrap();
        let (a, b, c) = split(&corpus, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert_eq!((a.role, b.role, c.role), (Role::Train, Role::Test, Role::Calibration));
        let again = split(&corpus, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!(again.0, a);
        for img in &corpus.images {
            let hits = a.images.iter().chain(&b.images).chain(&c.images).filter(|x| *x == img).count();
            assert_eq!(hits, 1);
        }
        assert!(matches!(split(&corpus, [0.8, 0.05, 0.1], 3), Err(Error::CorpusTooSmall(_))));
        assert!(split(&corpus, [0.8, 0.2, 0.1], 3).is_err());
    }

    fn small_model() -> ForwardModel {
        ForwardModel::new(OpticalConfig {
            grid_size: 16,
            ..OpticalConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn build_pairs_contracts() {
        let model = small_model();
        let mut corpus = synthesize_corpus(3, 16, -2.0, 5, Role::Train).unwrap();
        corpus.images.push(Image::zeros(16, 16, None).unwrap());
        let flat = flattening_filter(16, 16, None).unwrap();
        let plain = build_pairs(&corpus, &model, false, &flat).unwrap();
        assert_eq!(plain.objects, corpus.images);
        assert!(!plain.premodulated);
        assert!(plain.intensities[3].data().iter().all(|&v| v == 0.0));
        for g in &plain.intensities[..3] {
            assert_eq!(g.max(), 1.0);
            assert!(g.min() >= 0.0);
        }
        let modulated = build_pairs(&corpus, &model, true, &flat).unwrap();
        assert!(modulated.premodulated);
        assert_ne!(modulated.objects[0], corpus.images[0]);
        assert_eq!(modulated, build_pairs(&corpus, &model, true, &flat).unwrap());

        let test = Corpus { role: Role::Test, ..corpus.clone() };
        let test_pairs = build_pairs(&test, &model, true, &flat).unwrap();
        assert!(!test_pairs.premodulated);
        assert_eq!(test_pairs.objects, corpus.images);

        let wrong = synthesize_corpus(1, 8, -2.0, 5, Role::Train).unwrap();
        assert!(matches!(build_pairs(&wrong, &model, false, &flat), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn manifest_round_trip_and_persistence() {
        let dir = tempdir().unwrap();
        let model = small_model();
        let corpus = synthesize_corpus(2, 16, -2.0, 9, Role::Train).unwrap();
        let pairs = build_pairs(&corpus, &model, false, &flattening_filter(16, 16, None).unwrap()).unwrap();
        let mut manifest = Manifest::default();
        manifest.set_header("seed", 9);
        save_pairs(dir.path(), &pairs, &mut manifest).unwrap();
        manifest.write(dir.path().join("manifest.txt")).unwrap();
        let back = Manifest::read(dir.path().join("manifest.txt")).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.header("premodulated.train"), Some("false"));
        let loaded = load_pairs(dir.path(), &back, Role::Train).unwrap();
        assert_eq!(loaded.len(), 2);
        for (a, b) in loaded.intensities.iter().zip(&pairs.intensities) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert!(Manifest::parse("train,1,a.pfm").is_err());
        assert!(Manifest::parse("bogus,1,a.pfm,").is_err());
    }
}
