use phenn::calibration::*;
use phenn::dataset::*;
use phenn::net::*;
use phenn::optics::*;
use phenn::resolution::*;
use phenn::spectral::*;
use std::time::Instant;
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args[1].parse().unwrap();
    let epochs: usize = args[2].parse().unwrap();
    let seed: u64 = args[3].parse().unwrap();
    let lr: f64 = args.get(4).map_or(1e-3, |s| s.parse().unwrap());
    let which: String = args.get(5).cloned().unwrap_or("both".into());
    let n = 64;
    let train_c = synthesize_corpus(count, n, -2.0, seed, Role::Train).unwrap();
    let cal_c = synthesize_corpus(100, n, -2.0, seed + 1000, Role::Calibration).unwrap();
    let model = ForwardModel::new(OpticalConfig::default()).unwrap();
    let filter = flattening_filter(n, n, None).unwrap();
    let cal_pairs = build_pairs(&cal_c, &model, false, &filter).unwrap();
    let mut results = Vec::new();
    for pre in [false, true] {
        if (pre && which == "base") || (!pre && which == "pre") { results.push(0); if !pre { results.push(0); } continue; }
        let pairs = build_pairs(&train_c, &model, pre, &filter).unwrap();
        let config = NetworkConfig { seed, ..NetworkConfig::default() };
        let (params, _) = build_phenn(&config).unwrap();
        let hyper = TrainConfig { epochs, seed, learning_rate: lr, ..TrainConfig::default() };
        let t = Instant::now();
        let (params, report) = train(&pairs, params, &hyper).unwrap();
        eprintln!("pre={pre} trained in {:?}", t.elapsed());
        phenn::net::save_checkpoint(&params, format!("/tmp/pilot/{}_s{seed}_e{epochs}.ckpt", if pre {"pre"} else {"base"})).unwrap();
        for r in &report.history { eprintln!("  {} {:.4} {:.4}", r.epoch, r.train_loss, r.validation_loss.unwrap_or(f64::NAN)); }
        let outs: Vec<_> = cal_pairs.intensities.iter().map(|g| infer(&params, g).unwrap()).collect();
        let cal = calibrate(&cal_pairs.objects, &outs, 100).unwrap();
        let npccs: f64 = cal_pairs.objects.iter().zip(&outs).map(|(f, o)| npcc(f, o).unwrap()).sum::<f64>() / 100.0;
        eprintln!("  cal {} test npcc {npccs:.4}", cal.to_record());
        let range = 2..=15;
        let rep = measure_resolution_limit(if pre {"pre"} else {"base"}, &params, &cal, &model, SweepOptions { spacings: &range, threshold: 0.8, post_filter: None }).unwrap();
        eprintln!("{}\n{}", rep.summary(), rep.to_csv());
        for (i, img) in rep.reconstructions.iter().enumerate() { phenn::field::write_pfm(img, format!("/tmp/pilot/{}_{:02}.pfm", if pre {"pre"} else {"base"}, i + 2)).unwrap(); }
        if !pre {
            let rep2 = measure_resolution_limit("post", &params, &cal, &model, SweepOptions { spacings: &range, threshold: 0.8, post_filter: Some(&filter) }).unwrap();
            eprintln!("{}\n{}", rep2.summary(), rep2.to_csv());
            for (i, img) in rep2.reconstructions.iter().enumerate() { phenn::field::write_pfm(img, format!("/tmp/pilot/post_{:02}.pfm", i + 2)).unwrap(); }
            results.push(rep2.limit_or_beyond());
        }
        results.push(rep.limit_or_beyond());
    }
    println!("RESULT seed {seed}: post {} base {} pre {}", results[0], results[1], results[2]);
}
