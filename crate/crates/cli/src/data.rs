//! Toy datasets: generation, CSV files and the mixture description.

use std::path::Path;

use ali_lab_core::nn::rng;
use ali_lab_core::{GaussianMixture, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{CliError, CliResult};
use crate::fsutil;

pub const TRAIN_FILE: &str = "train.csv";
pub const HELDOUT_FILE: &str = "heldout.csv";
pub const MIXTURE_FILE: &str = "mixture.json";

/// Labelled points; labels index mixture components.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    x0: f64,
    x1: f64,
    label: usize,
}

/// The standardized mixture with its training and held-out draws, taken
/// from separate streams of the data seed.
pub fn generate(cfg: &DataConfig) -> CliResult<(GaussianMixture, Dataset, Dataset)> {
    let mix = cfg.mixture()?;
    let draw = |n: usize, stream: u64| -> CliResult<Dataset> {
        let (x, labels) = mix.sample(n, &mut rng::stream(cfg.seed, stream))?;
        Ok(Dataset { x, labels })
    };
    let train = draw(cfg.n_train, 0)?;
    let heldout = draw(cfg.n_heldout, 1)?;
    Ok((mix, train, heldout))
}

pub fn write_csv(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, &label) in data.labels.iter().enumerate() {
        w.serialize(Row {
            x0: data.x.at(i, 0),
            x1: data.x.at(i, 1),
            label,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    fsutil::write_atomic(path, &bytes)
}

pub fn read_csv(path: &Path) -> CliResult<Dataset> {
    let mut r = csv::Reader::from_path(path).map_err(|_| CliError::missing(path, "run `ali-lab generate-data` first"))?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["x0", "x1", "label"] {
        return Err(CliError::Failed(format!("{}: expected header x0,x1,label", path.display())));
    }
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        xs.extend([row.x0, row.x1]);
        labels.push(row.label);
    }
    if labels.is_empty() {
        return Err(CliError::Failed(format!("{} has no rows", path.display())));
    }
    Ok(Dataset {
        x: Tensor::matrix(labels.len(), 2, xs)?,
        labels,
    })
}

pub fn write_mixture(path: &Path, mix: &GaussianMixture) -> CliResult<()> {
    fsutil::write_json(path, mix)
}

pub fn read_mixture(path: &Path) -> CliResult<GaussianMixture> {
    let mix: GaussianMixture = fsutil::read_json(path, "the run directory has no mixture description")?;
    GaussianMixture::new(mix.centroids().to_vec(), mix.covariances().to_vec(), mix.weights().to_vec()).map_err(CliError::from)
}

/// Writes `train.csv`, `heldout.csv` and `mixture.json` into `out`.
pub fn cmd_generate_data(cfg: &DataConfig, out: &Path) -> CliResult<()> {
    fsutil::create_dir(out)?;
    let (mix, train, heldout) = generate(cfg)?;
    write_csv(&out.join(TRAIN_FILE), &train)?;
    write_csv(&out.join(HELDOUT_FILE), &heldout)?;
    write_mixture(&out.join(MIXTURE_FILE), &mix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DataConfig {
        DataConfig {
            n_train: 500,
            n_heldout: 100,
            ..DataConfig::default()
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (_, train, _) = generate(&small()).unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &train).unwrap();
        assert_eq!(read_csv(&p).unwrap(), train);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x0,x1,label\n"));
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        cmd_generate_data(&small(), a.path()).unwrap();
        cmd_generate_data(&small(), b.path()).unwrap();
        for f in [TRAIN_FILE, HELDOUT_FILE, MIXTURE_FILE] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn heldout_uses_its_own_stream() {
        let (_, train, heldout) = generate(&small()).unwrap();
        assert_ne!(train.x.row(0), heldout.x.row(0));
    }

    #[test]
    fn single_component_labels_are_zero() {
        let cfg = DataConfig {
            side: 1,
            scale: Some(1.0),
            ..small()
        };
        let (_, train, _) = generate(&cfg).unwrap();
        assert!(train.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn mixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mix = small().mixture().unwrap();
        let p = dir.path().join(MIXTURE_FILE);
        write_mixture(&p, &mix).unwrap();
        assert_eq!(read_mixture(&p).unwrap(), mix);
    }

    #[test]
    fn missing_files_map_to_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let e = read_csv(&dir.path().join("nope.csv")).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }
}
