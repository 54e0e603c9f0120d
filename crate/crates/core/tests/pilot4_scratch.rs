// Scratch full-scale detector run (deleted before finalizing).
use std::time::Instant;
use mogpe_core::config::{self, Domain};
use mogpe_core::crop::resize;
use mogpe_core::detect::{build_detector, eval_detector_in_memory, DetectorDataset};
use mogpe_core::nnet::{self, Network, TrainConfig};
use mogpe_core::render::{postprocess, rasterize, sample_scene, BoxLabel};
use mogpe_core::rng;

fn render_set(cfg: &config::PipelineConfig, domain: Domain, n: usize, seed: u64, side: usize) -> Vec<(mogpe_core::img::RgbImage, Vec<BoxLabel>)> {
    let rc = cfg.randomization(domain);
    use rayon::prelude::*;
    (0..n).into_par_iter()
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
fn full_scale_detector() {
    let cfg = config::desk_default();
    let t0 = Instant::now();
    let train = render_set(&cfg, Domain::Synthetic, 1000, 1, 64);
    let pr = render_set(&cfg, Domain::PseudoReal, 1, 2, 64);
    let valid = render_set(&cfg, Domain::Synthetic, 200, 3, 64);
    let pr_valid = render_set(&cfg, Domain::PseudoReal, 50, 4, 64);
    eprintln!("render all: {:?}", t0.elapsed());

    let mut data = DetectorDataset::new(64, 64, 8, 3, 4);
    for (img, l) in &train { data.push(img, l).unwrap(); }
    for (img, l) in &pr { data.push(img, l).unwrap(); }
    data.apply_weighting(train.len());
    let mut vdata = DetectorDataset::new(64, 64, 8, 3, 1);
    for (img, l) in &valid { vdata.push(img, l).unwrap(); }

    let spec = build_detector(8, 3, 64).unwrap();
    let mut net = Network::<f32>::init(spec, 7);
    let t0 = Instant::now();
    for chunk in 0..7 {
        let tc = TrainConfig { learning_rate: 0.001, batch_size: 16, max_epochs: 4, patience: 3, seed: 500 + chunk, ..TrainConfig::default() };
        let hist = nnet::train(&mut net, &data, &vdata, &tc).unwrap();
        let (_, syn) = eval_detector_in_memory(&net, &valid, 0.2, 0.5);
        let (_, pr_m) = eval_detector_in_memory(&net, &pr_valid, 0.2, 0.5);
        eprintln!("after {} epochs ({:?}): v_loss {:.5} syn mAP {:.4} pr mAP {:.4}",
            (chunk + 1) * 4, t0.elapsed(), hist.epochs.last().unwrap().valid_loss, syn, pr_m);
    }
}
