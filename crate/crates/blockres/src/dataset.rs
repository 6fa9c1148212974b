//! On-disk synthetic dataset: `images/<id>.ppm`, `labels/<id>.pgm` and a
//! `manifest.json` listing them with their split.

use std::fs;
use std::path::{Path, PathBuf};

use blockres_core::scene::{gen_scene, Sample, SceneSpec};
use blockres_core::{Rng, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::netpbm::{read_pgm, read_ppm, write_pgm, write_ppm, Gray};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    /// Paths relative to the manifest's directory.
    pub image: PathBuf,
    pub labels: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub samples: Vec<Entry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset<T> {
    pub train: Vec<Sample<T>>,
    pub val: Vec<Sample<T>>,
}

/// Sample `i` of a dataset seeded with `seed`; independent of every other sample.
pub fn sample_rng(seed: u64, i: usize) -> Rng {
    Rng::new(seed).fork(i as u64)
}

fn sample_id(i: usize) -> String {
    format!("{i:04}")
}

fn label_gray(sample: &Sample<impl Scalar>) -> Gray {
    let d = sample.image.dims();
    Gray::new(d.w, d.h, sample.labels.clone())
}

/// Writes `train + val` scenes under `dir`; the first `train` form the training split.
pub fn generate(spec: &SceneSpec, train: usize, val: usize, seed: u64, dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut manifest = Manifest::default();
    for i in 0..train + val {
        let id = sample_id(i);
        let sample = gen_scene::<f32>(spec, &id, &mut sample_rng(seed, i))?;
        let entry = Entry {
            image: PathBuf::from("images").join(format!("{id}.ppm")),
            labels: PathBuf::from("labels").join(format!("{id}.pgm")),
            split: if i < train { Split::Train } else { Split::Val },
        };
        write_ppm(&sample.image, &dir.join(&entry.image))?;
        write_pgm(&label_gray(&sample), &dir.join(&entry.labels))?;
        manifest.samples.push(entry);
    }
    manifest.save(&dir.join(MANIFEST))?;
    Ok(manifest)
}

/// Loads every sample listed in `dir/manifest.json`, checking shapes and label range.
pub fn load<T: Scalar>(dir: &Path, classes: usize) -> Result<Dataset<T>> {
    let manifest = Manifest::load(&dir.join(MANIFEST))?;
    let mut out = Dataset {
        train: Vec::new(),
        val: Vec::new(),
    };
    for entry in &manifest.samples {
        let image: blockres_core::DenseTensor<T> = read_ppm(&dir.join(&entry.image))?;
        let labels = read_pgm(&dir.join(&entry.labels))?;
        let d = image.dims();
        if (labels.width, labels.height) != (d.w, d.h) {
            return Err(Error::Dataset(format!(
                "{}: labels are {}x{}, image is {}x{}",
                entry.labels.display(),
                labels.width,
                labels.height,
                d.w,
                d.h
            )));
        }
        if let Some(&bad) = labels.data.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Dataset(format!(
                "{}: label {bad} not below {classes}",
                entry.labels.display()
            )));
        }
        let id = entry
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let sample = Sample {
            id,
            image,
            labels: labels.data,
        };
        match entry.split {
            Split::Train => out.train.push(sample),
            Split::Val => out.val.push(sample),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            height: 64,
            width: 64,
            region_cell: 16,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn generated_split_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let m = generate(&spec, 6, 2, 11, dir.path()).unwrap();
        assert_eq!(m.samples.len(), 8);
        assert_eq!(m.samples.iter().filter(|e| e.split == Split::Val).count(), 2);
        let ds: Dataset<f32> = load(dir.path(), spec.classes).unwrap();
        assert_eq!((ds.train.len(), ds.val.len()), (6, 2));
        for (i, s) in ds.train.iter().chain(&ds.val).enumerate() {
            let fresh = gen_scene::<f32>(&spec, &sample_id(i), &mut sample_rng(11, i)).unwrap();
            assert_eq!(s, &fresh);
        }
    }

    #[test]
    fn fixed_seed_gives_identical_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate(&small_spec(), 2, 1, 5, a.path()).unwrap();
        generate(&small_spec(), 2, 1, 5, b.path()).unwrap();
        for f in ["manifest.json", "images/0001.ppm", "labels/0002.pgm"] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn empty_manifest_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        Manifest::default().save(&dir.path().join(MANIFEST)).unwrap();
        let ds: Dataset<f32> = load(dir.path(), 4).unwrap();
        assert!(ds.train.is_empty() && ds.val.is_empty());
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        generate(&small_spec(), 1, 1, 0, dir.path()).unwrap();
        fs::remove_file(dir.path().join("labels/0001.pgm")).unwrap();
        assert!(matches!(load::<f32>(dir.path(), 4), Err(Error::Io { .. })));
    }

    #[test]
    fn out_of_range_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        generate(&small_spec(), 1, 0, 0, dir.path()).unwrap();
        assert!(matches!(load::<f32>(dir.path(), 3), Err(Error::Dataset(_))));
    }

    #[test]
    fn invalid_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec {
            height: 50,
            ..small_spec()
        };
        assert!(generate(&spec, 1, 0, 0, dir.path()).is_err());
    }

    #[test]
    fn manifest_schema() {
        let m: Manifest =
            serde_json::from_str(r#"{"samples":[{"image":"a.ppm","labels":"a.pgm","split":"val"}]}"#).unwrap();
        assert_eq!(m.samples[0].split, Split::Val);
        assert!(
            serde_json::from_str::<Manifest>(r#"{"samples":[{"image":"a","labels":"b","split":"test"}]}"#).is_err()
        );
    }
}
