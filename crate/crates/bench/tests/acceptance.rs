//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. `ACCEPTANCE=1,2,5` runs a subset.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use phase_bench::stages::{self, Layout, POSTMODULATED};
use phase_bench::ExperimentConfig;
use phenn::calibration::calibrate;
use phenn::dataset::{build_pairs, synthesize_corpus, Role};
use phenn::field::{ComplexField, Image};
use phenn::net::{
    build_phenn, evaluate, npcc, npcc_grad, zero_gradients, ConvSpec, NetworkConfig, NodeId, NormSpec, ParamTensor, Tape,
    Tensor, TrainConfig,
};
use phenn::optics::{capture_intensity, encode_phase, propagate, ForwardModel, OpticalConfig};
use phenn::spectral::{apply_filter, estimate_psd, flattening_filter, premodulate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform_image(rng: &mut ChaCha8Rng, n: usize) -> Image {
    Image::from_fn(n, n, None, |_, _| rng.random::<f64>()).unwrap()
}

fn npcc_affine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = uniform_image(&mut rng, 64);
        let a = rng.random_range(0.1..=10.0);
        let b = rng.random_range(-5.0..=5.0);
        let g = f.map(|v| a * v + b).unwrap();
        worst = worst.max((npcc(&f, &g).unwrap() + 1.0).abs());
    }
    outcome(worst < 1e-9, format!("max |npcc(f, af+b) + 1| = {worst:.2e} over 100 images"))
}

fn calibration_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth: Vec<Image> = (0..100).map(|_| uniform_image(&mut rng, 64)).collect();
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (a, b) in [(2.0, 0.5), (0.3, -1.2)] {
        let exact: Vec<Image> = truth.iter().map(|f| f.map(|v| a * v + b).unwrap()).collect();
        let noisy: Vec<Image> = exact
            .iter()
            .map(|f| {
                let data = f.data().iter().map(|v| v + noise.sample(&mut rng)).collect();
                Image::new(f.height(), f.width(), None, data).unwrap()
            })
            .collect();
        let ce = calibrate(&truth, &exact, 100).unwrap();
        let cn = calibrate(&truth, &noisy, 100).unwrap();
        let (ea, eb) = ((ce.a - a).abs() / a, (ce.b - b).abs());
        let (na, nb) = ((cn.a - a).abs() / a, (cn.b - b).abs());
        pass &= ea <= 1e-3 && eb <= 1e-3 && na <= 1e-2 && nb <= 1e-2;
        detail.push(format!(
            "(a,b)=({a},{b}): exact da={:.1e} db={eb:.1e}, noisy da={:.2}% db={nb:.1e}",
            ea,
            100.0 * na
        ));
    }
    outcome(pass, detail.join("; "))
}

fn field_rel_err(a: &ComplexField, b: &ComplexField) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (num / b.energy()).sqrt()
}

fn beam_width(n: usize, pitch: f64, w0: f64, z: f64, wl: f64) -> f64 {
    let c = n as f64 / 2.0;
    let data = (0..n * n)
        .map(|i| {
            let (y, x) = (((i / n) as f64 - c) * pitch, ((i % n) as f64 - c) * pitch);
            Complex64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)
        })
        .collect();
    let field = ComplexField::new(n, n, Some(pitch), data).unwrap();
    let intensity = capture_intensity(&propagate(&field, z, wl).unwrap());
    let (mut m2, mut total) = (0.0, 0.0);
    for (i, &v) in intensity.data().iter().enumerate() {
        let x = ((i % n) as f64 - c) * pitch;
        m2 += v * x * x;
        total += v;
    }
    2.0 * (m2 / total).sqrt()
}

fn propagator_physics() -> Outcome {
    let wl = 633e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ident, mut energy, mut semi) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let field = encode_phase(&uniform_image(&mut rng, 64).with_pitch(Some(36e-6)).unwrap(), PI).unwrap();
        ident = ident.max(field_rel_err(&propagate(&field, 0.0, wl).unwrap(), &field));
        let z1 = rng.random_range(0.0..0.05);
        let z2 = rng.random_range(0.0..0.05);
        let whole = propagate(&field, z1 + z2, wl).unwrap();
        energy = energy.max((whole.energy() - field.energy()).abs() / field.energy());
        let steps = propagate(&propagate(&field, z1, wl).unwrap(), z2, wl).unwrap();
        semi = semi.max(field_rel_err(&steps, &whole));
    }
    let (w0, z) = (200e-6, 0.05);
    let analytic = w0 * (1.0 + (z * wl / (PI * w0 * w0)).powi(2)).sqrt();
    let width = beam_width(256, 10e-6, w0, z, wl);
    let beam = (width - analytic).abs() / analytic;
    outcome(
        ident <= 1e-12 && energy <= 1e-10 && semi <= 1e-10 && beam <= 0.02,
        format!(
            "identity {ident:.1e}, energy {energy:.1e}, semigroup {semi:.1e}, beam width {:.2} um vs {:.2} um ({:.2}%)",
            width * 1e6,
            analytic * 1e6,
            100.0 * beam
        ),
    )
}

type Graph = dyn Fn(&mut Tape, NodeId) -> NodeId;

/// Central differences of `sum(proj * graph(x))` over the input and every
/// parameter, compared with the tape's backward pass.
fn fd_check(params: &[ParamTensor], x: &Tensor, graph: &Graph, rng: &mut ChaCha8Rng) -> f64 {
    let run = |params: &[ParamTensor], x: &Tensor| -> Vec<f64> {
        let mut tape = Tape::new(params);
        let id = tape.input(x.clone()).unwrap();
        let y = graph(&mut tape, id);
        tape.value(y).data().to_vec()
    };
    let out_len = run(params, x).len();
    let proj: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |params: &[ParamTensor], x: &Tensor| -> f64 { run(params, x).iter().zip(&proj).map(|(a, b)| a * b).sum() };

    let mut tape = Tape::new(params);
    let id = tape.input(x.clone()).unwrap();
    let y = graph(&mut tape, id);
    let mut grads = zero_gradients(params);
    let dx = tape.backward(y, proj.clone(), &mut grads)[id].clone().unwrap_or_else(|| vec![0.0; x.len()]);

    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut p, mut m) = (x.clone(), x.clone());
        p.data_mut()[i] += h;
        m.data_mut()[i] -= h;
        worst = worst.max(rel(dx[i], (objective(params, &p) - objective(params, &m)) / (2.0 * h)));
    }
    for k in 0..params.len() {
        for i in 0..params[k].data.len() {
            let (mut p, mut m) = (params.to_vec(), params.to_vec());
            p[k].data[i] += h;
            m[k].data[i] -= h;
            worst = worst.max(rel(grads[k][i], (objective(&p, x) - objective(&m, x)) / (2.0 * h)));
        }
    }
    worst
}

fn random_param(rng: &mut ChaCha8Rng, name: &str, shape: Vec<usize>) -> ParamTensor {
    let len = shape.iter().product();
    ParamTensor {
        name: name.into(),
        shape,
        data: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], away_from_zero: bool) -> Tensor {
    let data = (0..shape.iter().product())
        .map(|_| {
            if away_from_zero {
                let v: f64 = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut results: Vec<(String, f64)> = Vec::new();

    for (kernel, stride, bias) in [(3, 1, true), (3, 2, false), (1, 2, true), (1, 1, false)] {
        let (cin, cout) = (2, 3);
        let mut params = vec![random_param(&mut rng, "w", vec![cout, cin, kernel, kernel])];
        if bias {
            params.push(random_param(&mut rng, "b", vec![cout]));
        }
        let spec = ConvSpec {
            weight: 0,
            bias: bias.then_some(1),
            cin,
            cout,
            kernel,
            stride,
        };
        let x = random_tensor(&mut rng, [2, cin, 6, 6], false);
        let err = fd_check(&params, &x, &move |t, x| t.conv(spec, x).unwrap(), &mut rng);
        results.push((format!("conv k{kernel} s{stride}{}", if bias { " bias" } else { "" }), err));
    }

    let params = vec![random_param(&mut rng, "gamma", vec![3]), random_param(&mut rng, "beta", vec![3])];
    let spec = NormSpec {
        gamma: 0,
        beta: 1,
        channels: 3,
    };
    let x = random_tensor(&mut rng, [2, 3, 4, 4], false);
    results.push(("norm".into(), fd_check(&params, &x, &move |t, x| t.norm(spec, x).unwrap(), &mut rng)));

    let x = random_tensor(&mut rng, [2, 2, 4, 4], true);
    results.push(("relu".into(), fd_check(&[], &x, &|t, x| t.relu(x).unwrap(), &mut rng)));

    let x = random_tensor(&mut rng, [2, 2, 4, 4], false);
    results.push((
        "add".into(),
        fd_check(
            &[],
            &x,
            &|t, x| {
                let u = t.upsample(x).unwrap();
                let v = t.upsample(x).unwrap();
                t.add(u, v).unwrap()
            },
            &mut rng,
        ),
    ));
    results.push((
        "concat".into(),
        fd_check(
            &[],
            &x,
            &|t, x| {
                let u = t.upsample(x).unwrap();
                let v = t.upsample(x).unwrap();
                t.concat(u, v).unwrap()
            },
            &mut rng,
        ),
    ));
    results.push(("upsample".into(), fd_check(&[], &x, &|t, x| t.upsample(x).unwrap(), &mut rng)));

    let worst_layer = results.iter().map(|r| r.1).fold(0.0, f64::max);

    let truth = uniform_image(&mut rng, 16);
    let est = uniform_image(&mut rng, 16);
    let grad = npcc_grad(&truth, &est).unwrap();
    let h = 1e-6;
    let mut worst_npcc = 0.0f64;
    for i in 0..est.len() {
        let bump = |d: f64| {
            let mut v = est.data().to_vec();
            v[i] += d;
            npcc(&truth, &Image::new(16, 16, None, v).unwrap()).unwrap()
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        let g = grad.data()[i];
        worst_npcc = worst_npcc.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
    }
    let listed: Vec<String> = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        worst_layer < 1e-4 && worst_npcc < 1e-6,
        format!("primitives [{}]; npcc {worst_npcc:.1e}", listed.join(", ")),
    )
}

fn spectral_pipeline() -> Outcome {
    let corpus = synthesize_corpus(256, 64, -2.0, 5, Role::Train).unwrap();
    let raw = estimate_psd(&corpus.images).unwrap().exponent.unwrap_or(f64::NAN);
    let filter = flattening_filter(64, 64, None).unwrap();
    let flat: Vec<Image> = corpus.images.iter().map(|i| premodulate(i, &filter).unwrap()).collect();
    let after = estimate_psd(&flat).unwrap().exponent.unwrap_or(f64::NAN);
    let mut tone_err = 0.0f64;
    for (kx, ky) in [(1usize, 0usize), (3, 4), (0, 7), (12, 5), (31, 2)] {
        let tone = Image::from_fn(64, 64, None, |r, c| {
            (2.0 * PI * (kx * c + ky * r) as f64 / 64.0 + 0.3).cos()
        })
        .unwrap();
        let gain = ((kx * kx + ky * ky) as f64).sqrt() / 64.0;
        let out = apply_filter(&tone, &filter).unwrap();
        for (o, t) in out.data().iter().zip(tone.data()) {
            tone_err = tone_err.max((o - gain * t).abs());
        }
    }
    outcome(
        (raw + 2.0).abs() <= 0.2 && after.abs() <= 0.3 && tone_err <= 1e-10,
        format!("raw p = {raw:.3}, flattened p = {after:.3}, tone error {tone_err:.1e}"),
    )
}

fn overfit() -> Outcome {
    let corpus = synthesize_corpus(8, 64, -2.0, 6, Role::Train).unwrap();
    let model = ForwardModel::new(OpticalConfig::default()).unwrap();
    let pairs = build_pairs(&corpus, &model, false, &flattening_filter(64, 64, None).unwrap()).unwrap();
    let (params, _) = build_phenn(&NetworkConfig::default()).unwrap();
    let hyper = TrainConfig {
        batch_size: 4,
        epochs: 500,
        validation_fraction: 0.0,
        target_loss: Some(-0.9),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (params, report) = phenn::net::train(&pairs, params, &hyper).unwrap();
    let reached = report.final_train_loss().unwrap_or(f64::NAN);
    let all: Vec<usize> = (0..pairs.len()).collect();
    let evaluated = evaluate(&params, &pairs, &all).unwrap();
    outcome(
        reached <= -0.9,
        format!(
            "training NPCC {reached:.4} after {} epochs ({:.0} s); re-evaluated {evaluated:.4}",
            report.history.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

/// Criteria 7 and 8 share the same five paired runs.
fn resolution_experiment() -> (Outcome, Outcome) {
    let base_cfg = ExperimentConfig::load(workspace_root().join("configs/desk.conf")).unwrap();
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let mut cfg = base_cfg.clone();
        cfg.set_seed(seed);
        cfg.output_dir = scratch(&format!("desk-seed-{seed}"));
        let start = Instant::now();
        let report = stages::reproduce(&cfg, &Layout::new(&cfg.output_dir)).unwrap();
        let limit = |label: &str| report.limit(label).map(|r| r.limit_or_beyond()).unwrap();
        let (base, pre, post) = (limit("baseline"), limit("premodulated"), limit(POSTMODULATED));
        println!(
            "  seed {seed}: D_base={base} D_pre={pre} D_post={post} ({:.0} s)",
            start.elapsed().as_secs_f64()
        );
        rows.push((base, pre, post));
    }
    let beyond = base_cfg.resolution.d_max + 1;
    let fmt = |d: usize| if d == beyond { "none".to_string() } else { d.to_string() };
    let table: Vec<String> = rows.iter().map(|(b, p, q)| format!("{}/{}/{}", fmt(*b), fmt(*p), fmt(*q))).collect();
    let le = rows.iter().filter(|(b, p, _)| p <= b).count();
    let lt = rows.iter().filter(|(b, p, _)| p < b).count();
    let post_ge = rows.iter().filter(|(_, p, q)| q >= p).count();
    (
        outcome(
            le == 5 && lt >= 3,
            format!("D_pre <= D_base in {le}/5, D_pre < D_base in {lt}/5 (base/pre/post: {})", table.join(", ")),
        ),
        outcome(post_ge >= 4, format!("D_post >= D_pre in {post_ge}/5")),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let text = "run.seed = 3\ndataset.size = 32\ndataset.train_count = 48\ndataset.test_count = 8\n\
                dataset.calibration_count = 8\nnetwork.stem_width = 4\nnetwork.widths = 8, 16\n\
                training.epochs = 3\ntraining.batch_size = 8\nresolution.d_max = 7\n";
    let mut digests = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        cfg.output_dir = scratch(&format!("determinism-{run}"));
        stages::reproduce(&cfg, &Layout::new(&cfg.output_dir)).unwrap();
        let mut files = tree(&cfg.output_dir);
        // Wall-clock and the output path are the only intended differences.
        files.remove(Path::new("timing.txt"));
        files.remove(Path::new("config.txt"));
        digests.push(files);
    }
    let (a, b) = (&digests[0], &digests[1]);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let checkpoints = a.keys().filter(|k| k.extension().is_some_and(|e| e == "ckpt")).count();
    outcome(
        differing.is_empty() && checkpoints == 2 && a.contains_key(Path::new("report.txt")),
        if differing.is_empty() {
            format!("{} artifacts identical, including {checkpoints} checkpoints and report.txt", a.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let selected: Option<Vec<u32>> = std::env::var("ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: u32| selected.as_ref().is_none_or(|s| s.contains(&k));
    let names = [
        "NPCC affine degeneracy",
        "calibration oracle",
        "propagator physics",
        "gradient checks",
        "spectral pipeline",
        "overfit smoke test",
        "pre-modulation resolution gain",
        "post-modulation control",
        "determinism",
    ];
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let singles: [(u32, fn() -> Outcome); 6] = [
        (1, npcc_affine),
        (2, calibration_oracle),
        (3, propagator_physics),
        (4, gradient_checks),
        (5, spectral_pipeline),
        (6, overfit),
    ];
    for (k, f) in singles {
        if wanted(k) {
            results.push((k, f()));
        }
    }
    if wanted(7) || wanted(8) {
        let (seven, eight) = resolution_experiment();
        results.push((7, seven));
        results.push((8, eight));
    }
    if wanted(9) {
        results.push((9, determinism()));
    }
    let mut failed = 0;
    for (k, o) in &results {
        println!(
            "criterion {k} {}: {} ({})",
            names[*k as usize - 1],
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
