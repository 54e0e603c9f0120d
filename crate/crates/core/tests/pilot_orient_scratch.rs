// Scratch orientation probe (deleted before finalizing).
use std::time::Instant;
use mogpe_core::config::{self, Domain};
use mogpe_core::crop::{standardize, BBox};
use mogpe_core::nnet::{self, Network, TrainConfig};
use mogpe_core::orient::{build_orientation_net, evaluate_errors, median, OrientDataset};
use mogpe_core::render::{postprocess, rasterize, sample_scene};
use mogpe_core::rng;

fn render_crops(cfg: &config::PipelineConfig, domain: Domain, class_id: usize, n: usize, seed: u64, side: usize) -> Vec<(mogpe_core::img::RgbImage, f64)> {
    let mut rc = cfg.randomization(domain);
    rc.parts = vec![rc.parts[class_id].clone()];
    (0..n)
        .map(|i| {
            let s = rng::derive(seed, i as u64);
            let scene = sample_scene(&rc, s).unwrap();
            let labeled = rasterize(&rc.parts, &scene);
            let img = postprocess(&labeled.image, &rc.domain.noise, rng::derive(s, 99));
            let d = &labeled.detections[0];
            let crop = standardize(&img, &BBox::from_normalized(d.cx, d.cy, d.w, d.h), side).unwrap();
            (crop, labeled.orientations[0])
        })
        .collect()
}

#[test]
#[ignore]
fn orient_probe() {
    let cfg = config::desk_default();
    let side = 64usize;
    let rotations = 120usize;
    let class_id = 1usize; // the near-symmetric bar: hardest case

    let syn = render_crops(&cfg, Domain::Synthetic, class_id, 10, 11, side);
    let pr = render_crops(&cfg, Domain::PseudoReal, class_id, 4, 22, side);

    let mut train = OrientDataset::new(side);
    for (img, th) in &syn { train.push_augmented(img, *th, rotations).unwrap(); }
    for (img, th) in &pr[..2] { train.push_augmented(img, *th, rotations).unwrap(); }
    let mut valid = OrientDataset::new(side);
    valid.push_augmented(&pr[2].0, pr[2].1, rotations).unwrap();
    let mut test = OrientDataset::new(side);
    test.push_augmented(&pr[3].0, pr[3].1, rotations).unwrap();

    let spec = build_orientation_net(3, side).unwrap();
    let mut net = Network::<f32>::init(spec, 3);
    let t0 = Instant::now();
    for chunk in 0..6 {
        let tc = TrainConfig { learning_rate: 0.001, batch_size: 32, max_epochs: 5, patience: 4, seed: 100 + chunk, ..TrainConfig::default() };
        let hist = nnet::train(&mut net, &train, &valid, &tc).unwrap();
        let errors_k1 = evaluate_errors(&net, &test, 1).unwrap();
        let errors_k2 = evaluate_errors(&net, &test, 2).unwrap();
        let rate = |errs: &[f64]| errs.iter().filter(|&&e| e < 10.0).count() as f64 / errs.len() as f64;
        let mut e1 = errors_k1.clone();
        eprintln!(
            "after {} epochs ({:?}): v_loss {:.5} | test k1 {:.3} k2 {:.3} median {:.2}",
            (chunk + 1) * 5,
            t0.elapsed(),
            hist.epochs.last().unwrap().valid_loss,
            rate(&errors_k1),
            rate(&errors_k2),
            median(&mut e1),
        );
    }
}
