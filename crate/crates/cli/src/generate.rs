//! `generate-data`: materialize a configured dataset.

use std::path::{Path, PathBuf};

use svgpvae::config::{DataSource, ExperimentConfig};
use svgpvae::data::cache::{source_hash, write_dataset, Manifest, MANIFEST_VERSION};
use svgpvae::data::{build_rotated_dataset, generate_toy, generate_video, parse_idx, parse_idx_labels, path_factor};
use svgpvae::numerics::Tensor;
use svgpvae::training::TEST_STREAM_OFFSET;

use crate::error::{CliError, CliResult};

fn column(v: impl IntoIterator<Item = f64>) -> Tensor {
    Tensor::column(v.into_iter().collect())
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

type Entries = Vec<(String, Tensor)>;

/// Writes `dataset.bin` and `manifest.json` into `out` and returns the
/// dataset path.
pub fn generate_data(cfg: &ExperimentConfig, base: &Path, out: &Path, force: bool) -> CliResult<PathBuf> {
    let seed = cfg.training.seed;
    let (kind, source, config, seed, entries): (&str, Vec<u8>, serde_json::Value, u64, Entries) =
        match cfg.data.source {
            DataSource::MovingBall => {
                let d = &cfg.data.moving_ball;
                d.render.validate()?;
                let factor = path_factor(&d.render)?;
                let mut entries = Vec::new();
                let mut push = |split: &str, stream: u64, count: usize| {
                    for i in 0..count {
                        let v = generate_video(&d.render, &factor, stream, i as u64);
                        entries.push((format!("{split}/{i:04}/frames"), v.frames));
                        entries.push((format!("{split}/{i:04}/trajectory"), v.trajectory));
                    }
                };
                push("train", d.seed, d.videos_per_epoch);
                push("test", d.seed.wrapping_add(TEST_STREAM_OFFSET), d.test_videos);
                entries.push(("times".into(), d.render.times()));
                let config = serde_json::to_value(d).expect("serializable config");
                ("moving-ball", Vec::new(), config, d.seed, entries)
            }
            DataSource::RotatedDigits => {
                let r = &cfg.data.rotated;
                let ip = base.join(&r.images);
                let lp = base.join(&r.labels);
                let mut source = read(&ip)?;
                source.extend(read(&lp)?);
                let ds = build_rotated_dataset(&parse_idx(&ip)?, &parse_idx_labels(&lp)?, &r.build)?;
                let entries = vec![
                    ("images".into(), ds.images.clone()),
                    ("angles".into(), column(ds.angles.iter().copied())),
                    ("object_id".into(), column(ds.object_id.iter().map(|&o| o as f64))),
                    (
                        "held_out".into(),
                        column(ds.held_out_mask.iter().map(|&h| if h { 1.0 } else { 0.0 })),
                    ),
                    ("objects".into(), ds.objects.clone()),
                ];
                let config = serde_json::to_value(&r.build).expect("serializable config");
                ("rotated-digits", source, config, r.build.seed, entries)
            }
            DataSource::ToyRegression => {
                let t = generate_toy(&cfg.data.toy, seed)?;
                let config = serde_json::to_value(&cfg.data.toy).expect("serializable config");
                ("toy-regression", Vec::new(), config, seed, vec![("x".into(), t.x), ("y".into(), t.y), ("f".into(), t.f)])
            }
        };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        kind: kind.into(),
        source_hash: source_hash(&source, &config, seed),
        config,
        seed,
        entries: entries.iter().map(|(n, _)| n.clone()).collect(),
    };
    Ok(write_dataset(out, &manifest, entries, force)?)
}
