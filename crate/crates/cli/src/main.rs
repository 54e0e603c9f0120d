//! mogpe: two-stage grasp pose estimation on a synthetic desk scene.
//!
//! Commands compose in order: generate -> train-detect -> train-orient ->
//! eval / bench / visualize. Exit codes: 0 success, 1 usage error,
//! 2 missing prerequisite, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mogpe_core::config::{self, Domain, PipelineConfig};
use mogpe_core::crop::{standardize, BBox};
use mogpe_core::detect::detect_image;
use mogpe_core::error::{Error, Result};
use mogpe_core::grasp::Variant;
use mogpe_core::img::RgbImage;
use mogpe_core::matching::refine;
use mogpe_core::orient::predict_angle;
use mogpe_core::pipeline::{self, Workspace};
use mogpe_core::render::load_dataset_index;
use mogpe_core::viz;

#[derive(Parser)]
#[command(name = "mogpe", version, about = "grasp pose estimation pipeline")]
struct Cli {
    /// Pipeline config file (flat dotted keys); bundled desk-scale config
    /// when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Use the High-Precision variant (pattern-matching refinement).
    #[arg(long, global = true)]
    hp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Rt,
    Hp,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every dataset (detection splits + orientation crops).
    Generate,
    /// Train the grid detector on the generated datasets.
    TrainDetect,
    /// Train per-class orientation models and build kernel banks.
    TrainOrient {
        /// Train only this class.
        #[arg(long)]
        class: Option<usize>,
    },
    /// Evaluate the trained models on the held-out datasets.
    Eval {
        /// Evaluate the detector on this dataset directory instead.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the simulated pick-and-place benchmark.
    Bench {
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Draw detections and orientation arrows onto images.
    Visualize {
        /// Annotate one PNG image.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Annotate the first images of a dataset directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        limit: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?,
        None => config::DESK_CONFIG.to_string(),
    };
    let mut cfg = config::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidConfig("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let ws = Workspace::new(&cli.out);

    match cli.command {
        Command::Generate => {
            pipeline::cmd_generate(&cfg, &ws)?;
            println!(
                "generated datasets under {} (config {})",
                ws.root.join("datasets").display(),
                cfg.hash_hex()
            );
        }
        Command::TrainDetect => {
            let outcome = pipeline::train_detector(&cfg, &ws)?;
            let best = outcome.history.epochs[outcome.history.best_epoch];
            println!(
                "detector trained: {} epochs, composed set {}, best valid loss {:.6}",
                outcome.history.epochs.len(),
                outcome.composed_len,
                best.valid_loss
            );
            println!("model: {}", ws.detector_model().display());
        }
        Command::TrainOrient { class } => {
            let classes: Vec<usize> = match class {
                Some(c) => {
                    if c >= cfg.n_classes() {
                        return Err(Error::InvalidConfig(format!(
                            "class {c} out of range (classes = {})",
                            cfg.n_classes()
                        )));
                    }
                    vec![c]
                }
                None => (0..cfg.n_classes()).collect(),
            };
            let mut csv = String::from("class,dataset,success_rate,median_error_deg\n");
            for c in classes {
                let outcome = pipeline::train_orientation(&cfg, &ws, c)?;
                for (dataset, rate, med) in &outcome.report {
                    println!(
                        "class {c} {dataset}: success {:.4}, median error {:.2} deg",
                        rate, med
                    );
                    csv.push_str(&format!("{c},{dataset},{rate:.4},{med:.4}\n"));
                }
                println!("model: {}", ws.orient_model(c).display());
            }
            let report = ws.reports_dir().join("orient_train_report.csv");
            std::fs::create_dir_all(ws.reports_dir())
                .map_err(|e| Error::io(ws.reports_dir().display().to_string(), e))?;
            std::fs::write(&report, csv).map_err(|e| Error::io(report.display().to_string(), e))?;
        }
        Command::Eval { dataset } => {
            let (models, warnings) = pipeline::load_models(&cfg, &ws, false)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let targets: Vec<PathBuf> = match dataset {
                Some(d) => vec![d],
                None => vec![
                    ws.detect_dataset(Domain::Synthetic, "valid"),
                    ws.detect_dataset(Domain::PseudoReal, "valid"),
                ],
            };
            let mut csv = format!(
                "# config_hash = {}, seed = {}\ndataset,class,ap50\n",
                cfg.hash_hex(),
                cfg.seed
            );
            for dir in targets {
                let name = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| dir.display().to_string());
                let (preds, gts) = pipeline::detect_on_dataset(&cfg, &models.detector, &dir)
                    .map_err(|e| match e {
                        Error::Io { path, .. } => Error::Prerequisite(format!(
                            "dataset missing at {path}; run `mogpe generate` first"
                        )),
                        other => other,
                    })?;
                let (aps, mean) = mogpe_core::detect::map50(&preds, &gts);
                pipeline::write_predictions(
                    &preds,
                    &ws.reports_dir().join(format!("predictions_{name}.txt")),
                )?;
                for (class, ap) in &aps {
                    println!("{name} class {class}: AP50 {:.4}", ap);
                    csv.push_str(&format!("{name},{class},{ap:.4}\n"));
                }
                println!("{name}: mAP50 {:.4}", mean);
                csv.push_str(&format!("{name},mean,{mean:.4}\n"));
            }
            let path = ws.reports_dir().join("detect_eval.csv");
            std::fs::write(&path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Command::Bench { variant } => {
            let variant = match (variant, cli.hp) {
                (Some(VariantArg::Oracle), _) => Variant::Oracle,
                (Some(VariantArg::Hp), _) | (None, true) => Variant::Hp,
                (Some(VariantArg::Rt), _) => Variant::Rt,
                (None, false) => Variant::Rt,
            };
            let need_banks = variant == Variant::Hp;
            let (models, warnings) = pipeline::load_models(&cfg, &ws, need_banks)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let table = pipeline::cmd_bench(&cfg, &ws, &models, variant)?;
            println!("variant {}:", table.variant.name());
            for row in &table.per_class {
                println!(
                    "  {:<10} {}/{}",
                    cfg.parts[row.class_id].name, row.successes, row.trials
                );
            }
            println!("  overall    {:.2}%", table.overall_rate() * 100.0);
            println!(
                "report: {}",
                ws.reports_dir()
                    .join(format!("bench_{}.csv", table.variant.name()))
                    .display()
            );
        }
        Command::Visualize {
            image,
            dataset,
            limit,
        } => {
            let (models, warnings) = pipeline::load_models(&cfg, &ws, cli.hp)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let mut inputs: Vec<(String, PathBuf)> = Vec::new();
            match (image, dataset) {
                (Some(img), None) => {
                    let name = img
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "image".into());
                    inputs.push((name, img));
                }
                (None, Some(dir)) => {
                    let index = load_dataset_index(&dir).map_err(|e| match e {
                        Error::Io { path, .. } => Error::Prerequisite(format!(
                            "dataset missing at {path}; run `mogpe generate` first"
                        )),
                        other => other,
                    })?;
                    for s in index.into_iter().take(limit) {
                        inputs.push((format!("{:06}", s.index), s.image_path));
                    }
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "visualize needs exactly one of --image or --dataset".into(),
                    ))
                }
            }

            std::fs::create_dir_all(ws.visualize_dir())
                .map_err(|e| Error::io(ws.visualize_dir().display().to_string(), e))?;
            let mut csv = format!(
                "# config_hash = {}, seed = {}\nimage,class,confidence,cx,cy,w,h,theta_deg\n",
                cfg.hash_hex(),
                cfg.seed
            );
            for (name, path) in inputs {
                let img = RgbImage::load_png(&path)?;
                let scaled = mogpe_core::crop::resize(&img, models.detect_input)?;
                let detections =
                    detect_image(&models.detector, &scaled, cfg.detect.conf_threshold, cfg.detect.nms_iou)?;
                let mut annotated = img.clone();
                for det in &detections {
                    let angle_deg = models.orient.get(&det.class_id).and_then(|net| {
                        let bbox = BBox::from_normalized(det.cx, det.cy, det.w, det.h);
                        let crop = standardize(&img, &bbox, models.crop_side).ok()?;
                        let est = predict_angle(net, &crop).ok()?;
                        let mut deg = est.theta.to_degrees();
                        if cli.hp {
                            if let Some(bank) = models.banks.get(&det.class_id) {
                                if let Ok(m) = refine(bank, &crop, deg, models.window_deg) {
                                    deg = m.theta_deg;
                                }
                            }
                        }
                        Some(deg)
                    });
                    viz::draw_detection(&mut annotated, det, angle_deg);
                    csv.push_str(&format!(
                        "{name},{},{:.4},{:.6},{:.6},{:.6},{:.6},{}\n",
                        det.class_id,
                        det.confidence,
                        det.cx,
                        det.cy,
                        det.w,
                        det.h,
                        angle_deg.map_or(String::from(""), |d| format!("{d:.2}")),
                    ));
                }
                let out_png = ws.visualize_dir().join(format!("{name}_annotated.png"));
                annotated.save_png(&out_png)?;
                println!("{}: {} detections", out_png.display(), detections.len());
            }
            let csv_path = ws.visualize_dir().join("visualize.csv");
            std::fs::write(&csv_path, csv)
                .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
        }
    }
    Ok(())
}
