// Scratch overfit probe (deleted before finalizing).
use std::time::Instant;
use mogpe_core::config::{self, Domain};
use mogpe_core::crop::resize;
use mogpe_core::detect::{build_detector, eval_detector_in_memory, DetectorDataset};
use mogpe_core::nnet::{self, Network, TrainConfig};
use mogpe_core::render::{postprocess, rasterize, sample_scene, BoxLabel};
use mogpe_core::rng;

fn render_set(cfg: &config::PipelineConfig, domain: Domain, n: usize, seed: u64, side: usize) -> Vec<(mogpe_core::img::RgbImage, Vec<BoxLabel>)> {
    let rc = cfg.randomization(domain);
    (0..n)
        .map(|i| {
            let s = rng::derive(seed, i as u64);
            let scene = sample_scene(&rc, s).unwrap();
            let labeled = rasterize(&rc.parts, &scene);
            let img = postprocess(&labeled.image, &rc.domain.noise, rng::derive(s, 99));
            (resize(&img, side).unwrap(), labeled.detections)
        })
        .collect()
}

#[test]
#[ignore]
fn overfit_probe() {
    let cfg = config::desk_default();
    let set = render_set(&cfg, Domain::Synthetic, 24, 1, 64);
    let mut data = DetectorDataset::new(64, 64, 8, 3, 1);
    for (img, l) in &set { data.push(img, l).unwrap(); }
    let spec = build_detector(8, 3, 64).unwrap();
    let mut net = Network::<f32>::init(spec, 7);
    let tc = TrainConfig { learning_rate: 0.003, batch_size: 8, max_epochs: 400, patience: 399, seed: 5, ..TrainConfig::default() };
    let t0 = Instant::now();
    let hist = nnet::train(&mut net, &data, &data, &tc).unwrap();
    eprintln!("overfit train {:?} final loss {:.6}", t0.elapsed(), hist.epochs.last().unwrap().train_loss);
    let (aps, mean) = eval_detector_in_memory(&net, &set, 0.2, 0.5);
    eprintln!("overfit mAP50 = {:.4} {:?}", mean, aps);
    // Diagnostics on image 0.
    let dets = mogpe_core::detect::detect_image(&net, &set[0].0, 0.1, 0.5).unwrap();
    for d in dets.iter().take(6) {
        eprintln!("  pred c{} conf {:.2} cx {:.3} cy {:.3} w {:.3} h {:.3}", d.class_id, d.confidence, d.cx, d.cy, d.w, d.h);
    }
    for g in &set[0].1 {
        eprintln!("  gt   c{} cx {:.3} cy {:.3} w {:.3} h {:.3}", g.class_id, g.cx, g.cy, g.w, g.h);
    }
    assert!(mean > 0.9, "overfit mAP {mean}");
}
