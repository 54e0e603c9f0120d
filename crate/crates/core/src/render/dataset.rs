//! Dataset emission and loading.
//!
//! Layout under the dataset root:
//!   images/NNNNNN.png           8-bit RGB
//!   labels/NNNNNN.txt           one `class cx cy w h` line per object
//!   orient/NNNNNN_k.png/.txt    standardized crop + `class theta_deg`
//!   manifest.txt                seeds, counts, config hash

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::crop;
use crate::error::{Error, Result};
use crate::img::RgbImage;
use crate::rng;

use super::raster::{postprocess, rasterize, BoxLabel};
use super::scene::{sample_scene, RandomizationConfig};

const STREAM_SCENE: u64 = 0x5343;
const STREAM_POST: u64 = 0x504f;

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub n_images: usize,
    pub seed: u64,
    pub config_hash: u64,
    /// (image index, placement count, per-image seed).
    pub entries: Vec<(usize, usize, u64)>,
}

/// Options for `generate_dataset` beyond the randomization config.
#[derive(Debug, Clone)]
pub struct EmitOptions {
    /// Also write standardized orientation crops at this side length.
    pub orient_crop_side: Option<usize>,
    pub config_hash: u64,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn format_labels(labels: &[BoxLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            l.class_id, l.cx, l.cy, l.w, l.h
        ));
    }
    out
}

/// Render `n_images` scenes (sample -> rasterize -> postprocess), write
/// them with their labels, and return the manifest. Deterministic given
/// the seed; image jobs run in parallel, the manifest is written last in
/// index order.
pub fn generate_dataset(
    config: &RandomizationConfig,
    n_images: usize,
    seed: u64,
    out_dir: &Path,
    options: &EmitOptions,
) -> Result<DatasetManifest> {
    ensure_dir(&out_dir.join("images"))?;
    ensure_dir(&out_dir.join("labels"))?;
    if options.orient_crop_side.is_some() {
        ensure_dir(&out_dir.join("orient"))?;
    }

    let entries: Vec<Result<(usize, usize, u64)>> = (0..n_images)
        .into_par_iter()
        .map(|i| {
            let image_seed = rng::derive(seed, STREAM_SCENE + i as u64);
            let scene = sample_scene(config, image_seed)?;
            let labeled = rasterize(&config.parts, &scene);
            let final_image = postprocess(
                &labeled.image,
                &config.domain.noise,
                rng::derive(image_seed, STREAM_POST),
            );

            let img_path = out_dir.join(format!("images/{i:06}.png"));
            final_image.save_png(&img_path)?;
            write_file(
                &out_dir.join(format!("labels/{i:06}.txt")),
                &format_labels(&labeled.detections),
            )?;

            if let Some(side) = options.orient_crop_side {
                for (k, (det, theta)) in labeled
                    .detections
                    .iter()
                    .zip(&labeled.orientations)
                    .enumerate()
                {
                    let std_crop = crop::standardize(
                        &final_image,
                        &crop::BBox::from_normalized(det.cx, det.cy, det.w, det.h),
                        side,
                    )?;
                    std_crop.save_png(&out_dir.join(format!("orient/{i:06}_{k}.png")))?;
                    write_file(
                        &out_dir.join(format!("orient/{i:06}_{k}.txt")),
                        &format!("{} {:.4}\n", det.class_id, theta.to_degrees()),
                    )?;
                }
            }
            Ok((i, labeled.detections.len(), image_seed))
        })
        .collect();

    let mut manifest_entries = Vec::with_capacity(n_images);
    for e in entries {
        manifest_entries.push(e?);
    }

    let manifest = DatasetManifest {
        n_images,
        seed,
        config_hash: options.config_hash,
        entries: manifest_entries,
    };
    let mut text = format!(
        "seed = {}\nimages = {}\nconfig_hash = {:016x}\n",
        manifest.seed, manifest.n_images, manifest.config_hash
    );
    for (i, count, s) in &manifest.entries {
        text.push_str(&format!("{i:06} {count} {s}\n"));
    }
    write_file(&out_dir.join("manifest.txt"), &text)?;
    Ok(manifest)
}

/// One dataset image with its ground truth.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub index: usize,
    pub image_path: PathBuf,
    pub labels: Vec<BoxLabel>,
}

pub fn parse_label_line(line: &str) -> Result<BoxLabel> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::InvalidConfig(format!(
            "label line needs 5 fields, got {}: {line:?}",
            fields.len()
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidConfig(format!("bad number {s:?} in label line")))
    };
    Ok(BoxLabel {
        class_id: fields[0]
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad class id {:?}", fields[0])))?,
        cx: parse(fields[1])?,
        cy: parse(fields[2])?,
        w: parse(fields[3])?,
        h: parse(fields[4])?,
    })
}

/// Enumerate a generated detection dataset (paths + parsed labels).
pub fn load_dataset_index(dir: &Path) -> Result<Vec<LoadedSample>> {
    let manifest_path = dir.join("manifest.txt");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let n_images = text
        .lines()
        .find_map(|l| l.strip_prefix("images = "))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| Error::InvalidConfig("manifest missing images count".into()))?;

    let mut samples = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let label_path = dir.join(format!("labels/{i:06}.txt"));
        let label_text = fs::read_to_string(&label_path)
            .map_err(|e| Error::io(label_path.display().to_string(), e))?;
        let labels = label_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(parse_label_line)
            .collect::<Result<Vec<_>>>()?;
        samples.push(LoadedSample {
            index: i,
            image_path: dir.join(format!("images/{i:06}.png")),
            labels,
        });
    }
    Ok(samples)
}

/// One orientation crop with its ground-truth angle (degrees).
#[derive(Debug, Clone)]
pub struct OrientSample {
    pub class_id: usize,
    pub theta_deg: f64,
    pub image: RgbImage,
}

/// Load every orientation crop of a dataset, ordered by (image, placement).
pub fn load_orient_samples(dir: &Path) -> Result<Vec<OrientSample>> {
    let orient = dir.join("orient");
    let mut names: Vec<String> = fs::read_dir(&orient)
        .map_err(|e| Error::io(orient.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".txt"))
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let txt_path = orient.join(&name);
        let text = fs::read_to_string(&txt_path)
            .map_err(|e| Error::io(txt_path.display().to_string(), e))?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::InvalidConfig(format!(
                "orientation label {name} needs `class theta_deg`"
            )));
        }
        let class_id = fields[0]
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad class in {name}")))?;
        let theta_deg = fields[1]
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad angle in {name}")))?;
        let image = RgbImage::load_png(&orient.join(name.replace(".txt", ".png")))?;
        out.push(OrientSample {
            class_id,
            theta_deg,
            image,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::scene::tests::test_config;

    #[test]
    fn zero_images_writes_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = test_config(0.10);
        let m = generate_dataset(
            &cfg,
            0,
            1,
            dir.path(),
            &EmitOptions {
                orient_crop_side: None,
                config_hash: 0xabc,
            },
        )
        .unwrap();
        assert_eq!(m.n_images, 0);
        assert_eq!(fs::read_dir(dir.path().join("images")).unwrap().count(), 0);
        assert!(dir.path().join("manifest.txt").exists());
    }

    #[test]
    fn generated_tree_is_reproducible() {
        let cfg = test_config(0.10);
        let opts = EmitOptions {
            orient_crop_side: Some(32),
            config_hash: 7,
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, 3, 99, a.path(), &opts).unwrap();
        generate_dataset(&cfg, 3, 99, b.path(), &opts).unwrap();
        let collect = |root: &Path| -> Vec<(String, Vec<u8>)> {
            let mut files = Vec::new();
            for sub in ["images", "labels", "orient"] {
                let mut names: Vec<_> = fs::read_dir(root.join(sub))
                    .unwrap()
                    .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                    .collect();
                names.sort();
                for n in names {
                    files.push((
                        format!("{sub}/{n}"),
                        fs::read(root.join(sub).join(&n)).unwrap(),
                    ));
                }
            }
            files.push((
                "manifest.txt".into(),
                fs::read(root.join("manifest.txt")).unwrap(),
            ));
            files
        };
        assert_eq!(collect(a.path()), collect(b.path()));
    }

    #[test]
    fn n_images_yields_matching_file_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = test_config(0.10);
        generate_dataset(
            &cfg,
            5,
            3,
            dir.path(),
            &EmitOptions {
                orient_crop_side: None,
                config_hash: 0,
            },
        )
        .unwrap();
        assert_eq!(fs::read_dir(dir.path().join("images")).unwrap().count(), 5);
        assert_eq!(fs::read_dir(dir.path().join("labels")).unwrap().count(), 5);
        let index = load_dataset_index(dir.path()).unwrap();
        assert_eq!(index.len(), 5);
        assert!(!index[0].labels.is_empty());
    }
}
