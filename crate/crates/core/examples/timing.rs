use phenn::dataset::*;
use phenn::net::*;
use phenn::optics::*;
use phenn::spectral::*;
use std::time::Instant;
fn main() {
    let corpus = synthesize_corpus(64, 64, -2.0, 1, Role::Train).unwrap();
    let model = ForwardModel::new(OpticalConfig::default()).unwrap();
    let filter = flattening_filter(64, 64, None).unwrap();
    let t = Instant::now();
    let pairs = build_pairs(&corpus, &model, false, &filter).unwrap();
    println!("pairs {:?}", t.elapsed());
    let (params, _) = build_phenn(&NetworkConfig::default()).unwrap();
    println!("params {}", params.count());
    let hyper = TrainConfig { epochs: 2, validation_fraction: 0.0, ..TrainConfig::default() };
    let t = Instant::now();
    let (_, r) = train(&pairs, params, &hyper).unwrap();
    println!("2 epochs x 64: {:?} per example {:?}", t.elapsed(), t.elapsed() / 128);
    println!("{}", r.history_csv());
}
