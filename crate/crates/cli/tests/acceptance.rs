//! Acceptance suite: every gate below runs at its stated tolerance and
//! prints one PASS/FAIL line (written straight to stderr so it shows
//! regardless of test capture).
//!
//! The trainable gates (A4, A5, A7) share one end-to-end training run of
//! the desk-scale configuration, executed through the same pipeline code
//! paths the CLI uses (dataset files included). Where a gate does not pin
//! a value, the configuration reduces orientation crop side and rotation
//! count to fit a single-core CPU budget; every pinned count and
//! threshold is asserted as stated.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mogpe_core::config::{self, Domain, PipelineConfig};
use mogpe_core::detect::{iou, map50, nms, Detection};
use mogpe_core::error::Result;
use mogpe_core::geometry::{
    estimate_extrinsics, look_down_extrinsics, CameraModel, PlaneCorrespondence, SupportPlane,
};
use mogpe_core::grasp::{run_benchmark, Variant};
use mogpe_core::matching::{full_search, refine, KernelBank};
use mogpe_core::nnet::gradcheck::{finite_difference_check, kink_risk};
use mogpe_core::nnet::{LayerSpec, Network, NetworkSpec};
use mogpe_core::orient::{angular_error_deg, rotate_augment, success_rate};
use mogpe_core::pipeline::{self, Workspace};
use mogpe_core::render::BoxLabel;
use mogpe_core::rng;
use nalgebra::{Vector2, Vector3};
use rand::Rng as _;

/// Print one line directly to the process stderr (not captured by the
/// test harness).
fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn gate(name: &str, started: Instant, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    report(&format!(
        "[ACCEPT] {name}: {status} ({:.1?}) {detail}",
        started.elapsed()
    ));
    assert!(ok, "{name} failed: {detail}");
}

// ---------------------------------------------------------------------------
// Shared trained state for A4/A5/A7
// ---------------------------------------------------------------------------

/// Desk-scale configuration for the trainable gates: detection counts are
/// the pinned ones; orientation side/rotations are reduced (unpinned) for
/// the single-core budget.
fn acceptance_config() -> PipelineConfig {
    let text = config::DESK_CONFIG
        .replace("orient.side = 96", "orient.side = 64")
        .replace("orient.rotations = 360", "orient.rotations = 120")
        .replace("orient.synthetic_bases = 12", "orient.synthetic_bases = 10")
        .replace("orient.batch = 128", "orient.batch = 32")
        .replace("orient.epochs = 100", "orient.epochs = 40")
        .replace("orient.patience = 8", "orient.patience = 5");
    config::parse(&text).expect("acceptance config parses")
}

struct Trained {
    cfg: PipelineConfig,
    _dir: tempfile::TempDir,
    ws: Workspace,
    detect_elapsed: Duration,
    orient_elapsed: Vec<Duration>,
    syn_map: f64,
    pr_map: f64,
    /// (class, k, success on held-out pseudo-real test rotations).
    orient_success: Vec<(usize, usize, f64)>,
}

fn trained() -> &'static Trained {
    static STATE: OnceLock<Trained> = OnceLock::new();
    STATE.get_or_init(|| {
        let cfg = acceptance_config();
        let dir = tempfile::tempdir().expect("tempdir");
        let ws = Workspace::new(dir.path());

        report("[ACCEPT] training shared models (generate + detector + 3 orientation nets)...");
        let t = Instant::now();
        pipeline::cmd_generate(&cfg, &ws).expect("generate");
        report(&format!("[ACCEPT]   datasets generated in {:.1?}", t.elapsed()));

        let t_detect = Instant::now();
        let outcome = pipeline::train_detector(&cfg, &ws).expect("train detector");
        let detect_elapsed = t_detect.elapsed();
        report(&format!(
            "[ACCEPT]   detector: {} epochs in {:.1?}",
            outcome.history.epochs.len(),
            detect_elapsed
        ));

        let (syn_aps, syn_map) = pipeline::eval_detector(
            &cfg,
            &outcome.network,
            &ws.detect_dataset(Domain::Synthetic, "valid"),
        )
        .expect("eval synthetic");
        let (pr_aps, pr_map) = pipeline::eval_detector(
            &cfg,
            &outcome.network,
            &ws.detect_dataset(Domain::PseudoReal, "valid"),
        )
        .expect("eval pseudo-real");
        report(&format!(
            "[ACCEPT]   detector mAP50 synthetic {syn_map:.4} {syn_aps:?} | pseudo-real {pr_map:.4} {pr_aps:?}"
        ));

        let mut orient_elapsed = Vec::new();
        let mut orient_success = Vec::new();
        for class_id in 0..cfg.n_classes() {
            let t_orient = Instant::now();
            let out = pipeline::train_orientation(&cfg, &ws, class_id).expect("train orientation");
            orient_elapsed.push(t_orient.elapsed());

            // Held-out pseudo-real test rotations, evaluated at k = 1 and
            // at the part's symmetry order.
            let synthetic = mogpe_core::render::load_orient_samples(
                &ws.orient_dataset(Domain::Synthetic, class_id),
            )
            .expect("orient synthetic samples");
            let pseudo = mogpe_core::render::load_orient_samples(
                &ws.orient_dataset(Domain::PseudoReal, class_id),
            )
            .expect("orient pseudo samples");
            let sets = pipeline::build_orient_sets(
                &synthetic,
                &pseudo,
                cfg.orient.rotations,
                cfg.orient.side,
            )
            .expect("orient sets");
            for k in [1usize, cfg.parts[class_id].symmetry_order] {
                let errors =
                    mogpe_core::orient::evaluate_errors(&out.network, &sets.test, k).expect("eval");
                let rate =
                    errors.iter().filter(|&&e| e < 10.0).count() as f64 / errors.len() as f64;
                orient_success.push((class_id, k, rate));
            }
            report(&format!(
                "[ACCEPT]   orientation class {class_id}: {:?} (test k1/ksym success: {:?})",
                orient_elapsed.last().unwrap(),
                &orient_success[orient_success.len().saturating_sub(2)..]
            ));
        }

        Trained {
            cfg,
            _dir: dir,
            ws,
            detect_elapsed,
            orient_elapsed,
            syn_map,
            pr_map,
            orient_success,
        }
    })
}

// ---------------------------------------------------------------------------
// A1 geometry
// ---------------------------------------------------------------------------

#[test]
fn a1_geometry_round_trip_and_extrinsics() {
    let t = Instant::now();
    let mut r = rng::stream(0xA1, 0);
    let plane = SupportPlane::new(0.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let cam = CameraModel::new(
            r.gen_range(100.0..400.0),
            r.gen_range(100.0..400.0),
            r.gen_range(30.0..100.0),
            r.gen_range(30.0..100.0),
            128,
            128,
            look_down_extrinsics(
                r.gen_range(-0.05..0.05),
                r.gen_range(-0.05..0.05),
                r.gen_range(0.4..1.2),
                r.gen_range(-0.15..0.15),
                r.gen_range(-0.15..0.15),
            ),
        )
        .unwrap();
        let px = Vector2::new(r.gen_range(0.0..127.0), r.gen_range(0.0..127.0));
        let world = cam.pixel_to_plane(&px, &plane).unwrap();
        let back = cam.project(&world).unwrap();
        worst = worst.max((back - px).norm());
    }

    // Noiseless extrinsic recovery.
    let truth = look_down_extrinsics(0.03, -0.04, 0.85, 0.05, -0.02);
    let cam = CameraModel::new(220.0, 215.0, 64.0, 60.0, 128, 128, truth).unwrap();
    let mut corr = Vec::new();
    for i in 0..6 {
        for j in 0..6 {
            let w = Vector3::new(-0.2 + 0.08 * i as f64, -0.2 + 0.08 * j as f64, 0.0);
            corr.push(PlaneCorrespondence {
                world: w,
                pixel: cam.project(&w).unwrap(),
            });
        }
    }
    let est = estimate_extrinsics(cam.fx, cam.fy, cam.cx, cam.cy, 0.0, &corr).unwrap();
    let rot_err = (est.rotation - truth.rotation).norm();
    let trans_err = (est.translation - truth.translation).norm();

    let ok = worst < 1e-6 && rot_err < 1e-6 && trans_err < 1e-6 && t.elapsed() < Duration::from_secs(1);
    gate(
        "A1 geometry",
        t,
        ok,
        &format!("round-trip max {worst:.2e} px, extrinsics rot {rot_err:.2e} trans {trans_err:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// A2 gradient oracle
// ---------------------------------------------------------------------------

fn random_net_spec(r: &mut rng::Rng) -> (NetworkSpec, Vec<usize>) {
    // Small topologies mixing conv/pool/dense under 1e4 parameters.
    match r.gen_range(0..4u32) {
        0 => (
            NetworkSpec::new(vec![
                LayerSpec::Conv2d { in_channels: 2, out_channels: 4, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 4 * 3 * 3, outputs: 3 },
            ]),
            vec![2, 6, 6],
        ),
        1 => (
            NetworkSpec::new(vec![
                LayerSpec::Conv2d { in_channels: 1, out_channels: 3, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::Conv2d { in_channels: 3, out_channels: 5, kernel: 1 },
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 5 * 4 * 4, outputs: 2 },
            ]),
            vec![1, 8, 8],
        ),
        2 => (
            NetworkSpec::new(vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 24, outputs: 16 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 16, outputs: 8 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 8, outputs: 2 },
            ]),
            vec![24],
        ),
        _ => (
            NetworkSpec::new(vec![
                LayerSpec::Conv2d { in_channels: 3, out_channels: 6, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Conv2d { in_channels: 6, out_channels: 4, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 4 * 5 * 5, outputs: 4 },
            ]),
            vec![3, 10, 10],
        ),
    }
}

fn random_tensor<S: mogpe_core::Scalar>(shape: &[usize], seed: u64) -> mogpe_core::nnet::Tensor<S> {
    let mut r = rng::stream(seed, 7);
    let n: usize = shape.iter().product();
    mogpe_core::nnet::Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| S::from_f64_lossy(r.gen_range(-1.0..1.0)))
            .collect(),
    )
}

fn gradient_oracle_max_err<S: mogpe_core::Scalar>(count: usize) -> Result<(f64, usize)> {
    let mut r = rng::stream(0xA2, 0);
    let mut max_err = 0.0f64;
    let mut done = 0usize;
    let mut seed = 0u64;
    while done < count {
        seed += 1;
        if seed > 4000 {
            panic!("could not find {count} kink-free instances");
        }
        let (spec, input_shape) = random_net_spec(&mut r);
        let net = Network::<S>::init(spec, seed);
        let input: mogpe_core::nnet::Tensor<S> = random_tensor(&input_shape, seed * 2 + 1);
        // Central differences are a derivative oracle only away from ReLU
        // kinks and pool ties.
        if kink_risk(&net, &input, 0.02)? {
            continue;
        }
        let out_shape = net.spec.output_shape(&input_shape)?;
        let target: mogpe_core::nnet::Tensor<S> = random_tensor(&out_shape, seed * 2 + 2);
        let rep = finite_difference_check(&net, &input, &target, 1e-3)?;
        assert!(rep.params_checked <= 10_000);
        max_err = max_err.max(rep.max_rel_err);
        done += 1;
    }
    Ok((max_err, done))
}

#[test]
fn a2_gradient_oracle() {
    let t = Instant::now();
    let (err32, n32) = gradient_oracle_max_err::<f32>(20).unwrap();
    let (err64, n64) = gradient_oracle_max_err::<f64>(20).unwrap();
    let ok = err32 < 1e-2 && err64 < 1e-5 && t.elapsed() < Duration::from_secs(60);
    gate(
        "A2 gradient oracle",
        t,
        ok,
        &format!("f32 max rel {err32:.2e} ({n32} nets), f64 max rel {err64:.2e} ({n64} nets)"),
    );
}

// ---------------------------------------------------------------------------
// A3 metric oracles (brute-force references live here, in test code)
// ---------------------------------------------------------------------------

fn iou_ref(a: [f64; 4], b: [f64; 4]) -> f64 {
    // Independent re-derivation via explicit corner interval clipping.
    let (ax0, ax1) = (a[0] - a[2] / 2.0, a[0] + a[2] / 2.0);
    let (ay0, ay1) = (a[1] - a[3] / 2.0, a[1] + a[3] / 2.0);
    let (bx0, bx1) = (b[0] - b[2] / 2.0, b[0] + b[2] / 2.0);
    let (by0, by1) = (b[1] - b[3] / 2.0, b[1] + b[3] / 2.0);
    let lo_x = ax0.max(bx0);
    let hi_x = ax1.min(bx1);
    let lo_y = ay0.max(by0);
    let hi_y = ay1.min(by1);
    if lo_x >= hi_x || lo_y >= hi_y {
        return 0.0;
    }
    let inter = (hi_x - lo_x) * (hi_y - lo_y);
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    inter / (area_a + area_b - inter)
}

fn nms_ref(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    // Literal greedy re-implementation.
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .confidence
            .partial_cmp(&dets[i].confidence)
            .unwrap()
            .then(dets[i].class_id.cmp(&dets[j].class_id))
            .then(dets[i].cx.partial_cmp(&dets[j].cx).unwrap())
    });
    let mut kept: Vec<Detection> = Vec::new();
    'outer: for &i in &order {
        for k in &kept {
            if k.class_id == dets[i].class_id && iou_ref(k.box4(), dets[i].box4()) > threshold {
                continue 'outer;
            }
        }
        kept.push(dets[i]);
    }
    kept
}

fn map50_ref(preds: &[Vec<Detection>], gts: &[Vec<BoxLabel>]) -> f64 {
    // Literal per-class PR enumeration with 101-point interpolation.
    let mut classes: Vec<usize> = gts.iter().flatten().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut aps = Vec::new();
    for &class in &classes {
        let total: usize = gts
            .iter()
            .map(|g| g.iter().filter(|l| l.class_id == class).count())
            .sum();
        if total == 0 {
            continue;
        }
        let mut ranked: Vec<(usize, usize)> = Vec::new();
        for (img, p) in preds.iter().enumerate() {
            for (k, d) in p.iter().enumerate() {
                if d.class_id == class {
                    ranked.push((img, k));
                }
            }
        }
        ranked.sort_by(|&(ia, ka), &(ib, kb)| {
            preds[ib][kb]
                .confidence
                .partial_cmp(&preds[ia][ka].confidence)
                .unwrap()
                .then(ia.cmp(&ib))
                .then(ka.cmp(&kb))
        });
        let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut tps: Vec<bool> = Vec::new();
        for (img, k) in ranked {
            let det = &preds[img][k];
            let mut best = (-1.0f64, usize::MAX);
            for (gi, g) in gts[img].iter().enumerate() {
                if g.class_id != class || used[img][gi] {
                    continue;
                }
                let v = iou_ref(det.box4(), [g.cx, g.cy, g.w, g.h]);
                if v > best.0 {
                    best = (v, gi);
                }
            }
            if best.0 >= 0.5 {
                used[img][best.1] = true;
                tps.push(true);
            } else {
                tps.push(false);
            }
        }
        let mut ap = 0.0;
        for i in 0..=100 {
            let want = i as f64 / 100.0;
            let mut best_p = 0.0f64;
            let mut tp_count = 0usize;
            for (rank, &tp) in tps.iter().enumerate() {
                if tp {
                    tp_count += 1;
                }
                let recall = tp_count as f64 / total as f64;
                let precision = tp_count as f64 / (rank + 1) as f64;
                if recall >= want && precision > best_p {
                    best_p = precision;
                }
            }
            ap += best_p;
        }
        aps.push(ap / 101.0);
    }
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

fn angular_error_ref(est: f64, gt: f64, k: usize) -> f64 {
    // Exhaustive scan over symmetry offsets and full turns.
    let mut best = f64::INFINITY;
    for j in 0..k {
        let target = gt + j as f64 * 360.0 / k as f64;
        for turns in -3i64..=3 {
            let d = (est - target + turns as f64 * 360.0).abs();
            best = best.min(d);
        }
    }
    best
}

#[test]
fn a3_metric_oracles() {
    let t = Instant::now();
    let mut r = rng::stream(0xA3, 0);
    let mut rand_box = |r: &mut rng::Rng| -> [f64; 4] {
        [
            r.gen_range(0.1..0.9),
            r.gen_range(0.1..0.9),
            r.gen_range(0.02..0.5),
            r.gen_range(0.02..0.5),
        ]
    };

    // iou on 100 random pairs.
    for _ in 0..100 {
        let a = rand_box(&mut r);
        let b = rand_box(&mut r);
        assert!((iou(a, b) - iou_ref(a, b)).abs() < 1e-9);
    }

    // nms on 100 random instances: identical kept sets (exact counts and
    // identical ordering of the deterministic tie-breaking).
    for _ in 0..100 {
        let n = r.gen_range(1..12);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let b = rand_box(&mut r);
                Detection {
                    class_id: r.gen_range(0..3),
                    cx: b[0],
                    cy: b[1],
                    w: b[2],
                    h: b[3],
                    confidence: r.gen_range(0.0..1.0),
                }
            })
            .collect();
        let ours = nms(&dets, 0.5);
        let theirs = nms_ref(&dets, 0.5);
        assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
        }
    }

    // map50 on 100 random instances.
    for _ in 0..100 {
        let n_img = r.gen_range(1..5);
        let mut gts = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..n_img {
            let n_gt = r.gen_range(0..4);
            let g: Vec<BoxLabel> = (0..n_gt)
                .map(|_| {
                    let b = rand_box(&mut r);
                    BoxLabel {
                        class_id: r.gen_range(0..3),
                        cx: b[0],
                        cy: b[1],
                        w: b[2],
                        h: b[3],
                    }
                })
                .collect();
            let n_pred = r.gen_range(0..5);
            let p: Vec<Detection> = (0..n_pred)
                .map(|_| {
                    // Mix near-hits and misses.
                    if !g.is_empty() && r.gen_bool(0.6) {
                        let gt = &g[r.gen_range(0..g.len())];
                        Detection {
                            class_id: gt.class_id,
                            cx: gt.cx + r.gen_range(-0.02..0.02),
                            cy: gt.cy + r.gen_range(-0.02..0.02),
                            w: gt.w,
                            h: gt.h,
                            confidence: r.gen_range(0.0..1.0),
                        }
                    } else {
                        let b = rand_box(&mut r);
                        Detection {
                            class_id: r.gen_range(0..3),
                            cx: b[0],
                            cy: b[1],
                            w: b[2],
                            h: b[3],
                            confidence: r.gen_range(0.0..1.0),
                        }
                    }
                })
                .collect();
            gts.push(g);
            preds.push(p);
        }
        let (_, ours) = map50(&preds, &gts);
        let theirs = map50_ref(&preds, &gts);
        assert!(
            (ours - theirs).abs() < 1e-9,
            "map50 {ours} vs reference {theirs}"
        );
    }

    // angular error + success rate on 100 random instances.
    for _ in 0..100 {
        let est = r.gen_range(-720.0..720.0);
        let gt = r.gen_range(-720.0..720.0);
        let k = r.gen_range(1..5);
        let ours = angular_error_deg(est, gt, k);
        let theirs = angular_error_ref(est, gt, k);
        assert!((ours - theirs).abs() < 1e-9, "angular {ours} vs {theirs}");
    }
    for _ in 0..100 {
        let n = r.gen_range(1..30);
        let ests: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..360.0)).collect();
        let gts: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..360.0)).collect();
        let k = r.gen_range(1..4);
        let ours = success_rate(&ests, &gts, 10.0, k).unwrap();
        let hits = ests
            .iter()
            .zip(&gts)
            .filter(|(e, g)| angular_error_ref(**e, **g, k) < 10.0)
            .count();
        assert_eq!((ours * n as f64).round() as usize, hits);
    }

    gate("A3 metric oracles", t, true, "iou/nms/map50/angular/success vs brute force");
}

// ---------------------------------------------------------------------------
// A4 detection quality
// ---------------------------------------------------------------------------

#[test]
fn a4_detection_quality() {
    let t = Instant::now();
    let s = trained();
    let ok = s.syn_map >= 0.95
        && s.pr_map >= 0.85
        && s.detect_elapsed < Duration::from_secs(30 * 60);
    gate(
        "A4 detection",
        t,
        ok,
        &format!(
            "synthetic mAP50 {:.4} (>= 0.95), pseudo-real {:.4} (>= 0.85), train {:.0?} (<= 30 min)",
            s.syn_map, s.pr_map, s.detect_elapsed
        ),
    );
}

// ---------------------------------------------------------------------------
// A5 orientation quality
// ---------------------------------------------------------------------------

#[test]
fn a5_orientation_quality() {
    let t = Instant::now();
    let s = trained();
    let mut ok = true;
    let mut detail = String::new();
    for part in &s.cfg.parts {
        let k_eval = part.symmetry_order;
        let rate = s
            .orient_success
            .iter()
            .find(|(c, k, _)| *c == part.class_id && *k == k_eval)
            .map(|(_, _, r)| *r)
            .unwrap();
        detail.push_str(&format!("class {} k{} {:.3}; ", part.class_id, k_eval, rate));
        ok &= rate >= 0.90;
    }
    for (i, e) in s.orient_elapsed.iter().enumerate() {
        ok &= *e < Duration::from_secs(20 * 60);
        detail.push_str(&format!("t{i} {:.0?}; ", e));
    }
    gate("A5 orientation", t, ok, &detail);
}

// ---------------------------------------------------------------------------
// A6 pattern matching
// ---------------------------------------------------------------------------

#[test]
fn a6_pattern_matching() {
    let t = Instant::now();
    let cfg = acceptance_config();
    let mut ok = true;
    let mut detail = String::new();

    for class_id in 0..cfg.n_classes() {
        let bank = pipeline::build_class_bank(&cfg, class_id).unwrap();
        assert_eq!(bank.len(), 360);
        // Noiseless self-match at every bank angle, uniqueness included.
        let mut worst_margin = f64::INFINITY;
        for j in 0..bank.len() {
            let copy = bank.copy_image(j);
            let m = full_search(&bank, &copy).unwrap();
            if m.theta_deg != bank.angle_of(j) {
                ok = false;
                detail.push_str(&format!("class {class_id} copy {j} matched {}; ", m.theta_deg));
                break;
            }
            assert_eq!(m.comparisons, 360);
        }
        // Local/global agreement whenever the init is within window-step
        // of the global optimum, plus the 21-comparison contract.
        let mut r = rng::stream(0xA6, class_id as u64);
        for _ in 0..40 {
            let j = r.gen_range(0..bank.len());
            let copy = bank.copy_image(j);
            let global = full_search(&bank, &copy).unwrap();
            let offset = r.gen_range(-9.0..9.0);
            let local = refine(&bank, &copy, global.theta_deg + offset, 10.0).unwrap();
            if local.theta_deg != global.theta_deg {
                ok = false;
                detail.push_str(&format!(
                    "class {class_id}: refine({}) = {} != {}; ",
                    global.theta_deg + offset,
                    local.theta_deg,
                    global.theta_deg
                ));
            }
            if local.comparisons != 21 {
                ok = false;
                detail.push_str(&format!("comparisons {}; ", local.comparisons));
            }
            worst_margin = worst_margin.min(global.score - 0.999);
        }
        let _ = worst_margin;
    }
    ok &= t.elapsed() < Duration::from_secs(30);
    gate(
        "A6 pattern matching",
        t,
        ok,
        &format!("360-angle self-match exact for {} classes; 21 comparisons at +-10/1. {detail}", cfg.n_classes()),
    );
}

// ---------------------------------------------------------------------------
// A7 end-to-end benchmark
// ---------------------------------------------------------------------------

#[test]
fn a7_benchmark() {
    let t = Instant::now();
    let s = trained();
    let (models, _) = pipeline::load_models(&s.cfg, &s.ws, true).expect("load models");
    let tol = pipeline::bench_tolerances(&s.cfg);
    let rc = s.cfg.randomization(Domain::PseudoReal);
    let seed = s.cfg.stage_seed("bench");

    let t_bench = Instant::now();
    let rt = run_benchmark(&rc, &models, Variant::Rt, &tol, 10, seed).unwrap();
    let hp = run_benchmark(&rc, &models, Variant::Hp, &tol, 10, seed).unwrap();
    let oracle = run_benchmark(&rc, &models, Variant::Oracle, &tol, 10, seed).unwrap();
    let bench_elapsed = t_bench.elapsed();

    let trials: usize = rt.per_class.iter().map(|c| c.trials).sum();
    let ok = hp.overall_rate() >= rt.overall_rate()
        && hp.overall_rate() >= 0.90
        && (oracle.overall_rate() - 1.0).abs() < 1e-12
        && trials == 30
        && bench_elapsed < Duration::from_secs(5 * 60);
    gate(
        "A7 benchmark",
        t,
        ok,
        &format!(
            "RT {:.2}% HP {:.2}% oracle {:.0}% over {} trials/variant in {:.1?}",
            rt.overall_rate() * 100.0,
            hp.overall_rate() * 100.0,
            oracle.overall_rate() * 100.0,
            trials,
            bench_elapsed
        ),
    );
}

// ---------------------------------------------------------------------------
// A8 determinism
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str], threads: usize, out: &std::path::Path, config: &std::path::Path) {
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_mogpe"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .status()
        .expect("spawn mogpe");
    assert!(status.success(), "mogpe {args:?} failed");
}

fn tree_digest(root: &std::path::Path) -> Vec<(String, u32)> {
    // (relative path, CRC32) for every file, sorted.
    fn walk(dir: &std::path::Path, root: &std::path::Path, out: &mut Vec<(String, u32)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                let bytes = std::fs::read(&p).unwrap();
                out.push((rel, mogpe_core::nnet::crc32(&bytes)));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn a8_determinism() {
    let t = Instant::now();
    // Reduced-size variant of the bundled config: identical code paths,
    // desk-scale counts trimmed so the double run stays cheap.
    let text = config::DESK_CONFIG
        .replace("detect.train_scenes = 1000", "detect.train_scenes = 6")
        .replace("detect.valid_scenes = 200", "detect.valid_scenes = 4")
        .replace("detect.pseudo_real_valid_scenes = 50", "detect.pseudo_real_valid_scenes = 2")
        .replace("detect.epochs = 32", "detect.epochs = 2")
        .replace("detect.patience = 6", "detect.patience = 1")
        .replace("orient.side = 96", "orient.side = 48")
        .replace("orient.rotations = 360", "orient.rotations = 8")
        .replace("orient.synthetic_bases = 12", "orient.synthetic_bases = 3")
        .replace("orient.pseudo_real_bases = 4", "orient.pseudo_real_bases = 3")
        .replace("orient.epochs = 100", "orient.epochs = 2")
        .replace("orient.patience = 8", "orient.patience = 1")
        .replace("bench.trials_per_class = 10", "bench.trials_per_class = 1");
    config::parse(&text).expect("reduced config parses");

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("reduced.cfg");
    std::fs::write(&cfg_path, &text).unwrap();

    let mut digests = Vec::new();
    for (run, threads) in [(0usize, 1usize), (1, 1), (2, 4)] {
        let out = dir.path().join(format!("run{run}"));
        std::fs::create_dir_all(&out).unwrap();
        run_cli(&["generate"], threads, &out, &cfg_path);
        run_cli(&["train-detect"], threads, &out, &cfg_path);
        run_cli(&["train-orient"], threads, &out, &cfg_path);
        run_cli(&["bench", "--variant", "rt"], threads, &out, &cfg_path);
        digests.push(tree_digest(&out));
    }
    let same_run = digests[0] == digests[1];
    let same_threads = digests[0] == digests[2];
    gate(
        "A8 determinism",
        t,
        same_run && same_threads,
        &format!(
            "byte-identical re-run: {same_run}; --threads 1 == --threads 4: {same_threads} ({} files)",
            digests[0].len()
        ),
    );
}

// ---------------------------------------------------------------------------
// A9 protocol counts
// ---------------------------------------------------------------------------

#[test]
fn a9_protocol_counts() {
    let t = Instant::now();
    // 15 base images, 359 extra rotations each: 5400 samples.
    let img = mogpe_core::img::RgbImage::new(8, 8);
    let per_base = rotate_augment(&img, 0.0, 360).unwrap().len();
    let total = 15 * per_base;

    // 1 pseudo-real image weighted against 2000 synthetic.
    let repeats = mogpe_core::detect::pseudo_real_repeats(2000, 1);

    // 360 kernel images at 1-degree steps.
    let (kernel, mask) = {
        let mut k = mogpe_core::img::RgbImage::new(16, 16);
        let mut m = vec![false; 256];
        for y in 4..12 {
            for x in 4..12 {
                k.set(x, y, [((x * 31 + y) % 255) as u8, 100, 50]);
                m[y * 16 + x] = true;
            }
        }
        (k, m)
    };
    let bank = KernelBank::build(0, &kernel, &mask, 1.0).unwrap();

    let ok = per_base == 360 && total == 5400 && repeats == 2000 && bank.len() == 360;
    gate(
        "A9 protocol counts",
        t,
        ok,
        &format!("15x360 = {total}, repeats(2000,1) = {repeats}, bank = {}", bank.len()),
    );
}
