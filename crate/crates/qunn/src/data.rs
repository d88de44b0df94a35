//! IDX-format image/label loading and deterministic dataset subsetting.
//!
//! The IDX format (used by the MNIST family) is big-endian: a 4-byte magic
//! number, one 4-byte dimension size per tensor axis, then raw u8 payload.
//! Images use magic 0x0000_0803 (3 axes), labels 0x0000_0801 (1 axis).
//! Pixels are normalized to [0, 1] by dividing by 255.

use crate::quanv::Image;
use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufReader, Read as _};
use std::path::Path;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, found: u32, expected: u32 },
    #[error("{path}: image count {images} does not match label count {labels}")]
    CountMismatch { path: String, images: usize, labels: usize },
    #[error("{path}: truncated payload, expected {expected} bytes, got {got}")]
    Truncated { path: String, expected: usize, got: usize },
    #[error("requested subset of {requested} from a dataset of {available}")]
    SubsetTooLarge { requested: usize, available: usize },
}

/// A labeled image set with all pixels normalized to [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// Loads a paired IDX image file and label file into a normalized dataset.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<Dataset, DataError> {
    let mut reader = BufReader::new(File::open(image_path).map_err(|e| io_err(image_path, e))?);
    let magic = reader.read_u32::<BigEndian>().map_err(|e| io_err(image_path, e))?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: image_path.display().to_string(),
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let n = reader.read_u32::<BigEndian>().map_err(|e| io_err(image_path, e))? as usize;
    let height = reader.read_u32::<BigEndian>().map_err(|e| io_err(image_path, e))? as usize;
    let width = reader.read_u32::<BigEndian>().map_err(|e| io_err(image_path, e))? as usize;
    let expected = n * height * width;
    let mut raw = Vec::with_capacity(expected);
    reader.read_to_end(&mut raw).map_err(|e| io_err(image_path, e))?;
    if raw.len() != expected {
        return Err(DataError::Truncated {
            path: image_path.display().to_string(),
            expected,
            got: raw.len(),
        });
    }

    let mut reader = BufReader::new(File::open(label_path).map_err(|e| io_err(label_path, e))?);
    let magic = reader.read_u32::<BigEndian>().map_err(|e| io_err(label_path, e))?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: label_path.display().to_string(),
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let n_labels = reader.read_u32::<BigEndian>().map_err(|e| io_err(label_path, e))? as usize;
    if n_labels != n {
        return Err(DataError::CountMismatch {
            path: label_path.display().to_string(),
            images: n,
            labels: n_labels,
        });
    }
    let mut label_bytes = Vec::with_capacity(n);
    reader.read_to_end(&mut label_bytes).map_err(|e| io_err(label_path, e))?;
    if label_bytes.len() != n {
        return Err(DataError::Truncated {
            path: label_path.display().to_string(),
            expected: n,
            got: label_bytes.len(),
        });
    }

    let images = raw
        .chunks_exact(height * width)
        .map(|chunk| {
            let pixels = chunk.iter().map(|&b| b as f64 / 255.0).collect();
            // chunk pixels are in [0, 1] by construction
            Image::new(height, width, pixels).expect("normalized pixels are in range")
        })
        .collect();
    let labels = label_bytes.iter().map(|&b| b as usize).collect();
    Ok(Dataset { images, labels })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Returns the first `count` elements of a seeded shuffle of the index
    /// range. The same (seed, count) always yields the same subset in the
    /// same order, and a larger count extends a smaller one.
    pub fn subset(&self, count: usize, seed: u64) -> Result<Dataset, DataError> {
        if count > self.len() {
            return Err(DataError::SubsetTooLarge { requested: count, available: self.len() });
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(count);
        Ok(Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::{BigEndian, WriteBytesExt};
    use std::io::Write as _;

    fn write_images(dir: &Path, name: &str, n: u32, h: u32, w: u32, payload: &[u8]) -> std::path::PathBuf {
        write_images_magic(dir, name, IMAGE_MAGIC, n, h, w, payload)
    }

    fn write_images_magic(
        dir: &Path,
        name: &str,
        magic: u32,
        n: u32,
        h: u32,
        w: u32,
        payload: &[u8],
    ) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_u32::<BigEndian>(magic).unwrap();
        f.write_u32::<BigEndian>(n).unwrap();
        f.write_u32::<BigEndian>(h).unwrap();
        f.write_u32::<BigEndian>(w).unwrap();
        f.write_all(payload).unwrap();
        path
    }

    fn write_labels(dir: &Path, name: &str, labels: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_u32::<BigEndian>(LABEL_MAGIC).unwrap();
        f.write_u32::<BigEndian>(labels.len() as u32).unwrap();
        f.write_all(labels).unwrap();
        path
    }

    #[test]
    fn loads_and_normalizes_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let payload: Vec<u8> = vec![0, 51, 102, 153, 204, 255, 10, 20];
        let img = write_images(dir.path(), "img", 2, 2, 2, &payload);
        let lbl = write_labels(dir.path(), "lbl", &[7, 3]);
        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![7, 3]);
        assert_eq!(ds.images[0].pixels, vec![0.0, 51.0 / 255.0, 102.0 / 255.0, 153.0 / 255.0]);
        assert_eq!(ds.images[1].pixels[1], 1.0);
    }

    #[test]
    fn bad_magic_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_images_magic(dir.path(), "img", 0xdead_beef, 1, 2, 2, &[0; 4]);
        let lbl = write_labels(dir.path(), "lbl", &[1]);
        let err = load_idx(&img, &lbl).unwrap_err();
        match err {
            DataError::BadMagic { path, found, expected } => {
                assert!(path.ends_with("img"));
                assert_eq!(found, 0xdead_beef);
                assert_eq!(expected, IMAGE_MAGIC);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_images(dir.path(), "img", 2, 2, 2, &[0; 8]);
        let lbl = write_labels(dir.path(), "lbl", &[1, 2, 3]);
        let err = load_idx(&img, &lbl).unwrap_err();
        assert!(matches!(err, DataError::CountMismatch { images: 2, labels: 3, .. }));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_images(dir.path(), "img", 2, 2, 2, &[0; 5]);
        let lbl = write_labels(dir.path(), "lbl", &[1, 2]);
        let err = load_idx(&img, &lbl).unwrap_err();
        assert!(matches!(err, DataError::Truncated { expected: 8, got: 5, .. }));
    }

    fn toy_dataset(n: usize) -> Dataset {
        Dataset {
            images: (0..n)
                .map(|i| Image::new(1, 1, vec![i as f64 / n as f64]).unwrap())
                .collect(),
            labels: (0..n).map(|i| i % 10).collect(),
        }
    }

    #[test]
    fn subset_is_deterministic_and_prefix_consistent() {
        let ds = toy_dataset(50);
        let a = ds.subset(20, 42).unwrap();
        let b = ds.subset(20, 42).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.images, b.images);
        // a larger draw with the same seed starts with the smaller one
        let big = ds.subset(35, 42).unwrap();
        assert_eq!(&big.labels[..20], &a.labels[..]);
        // a different seed gives a different ordering
        let c = ds.subset(20, 43).unwrap();
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn subset_pairs_images_with_their_labels() {
        let ds = toy_dataset(30);
        let sub = ds.subset(30, 7).unwrap();
        for (img, &label) in sub.images.iter().zip(&sub.labels) {
            let original = (img.pixels[0] * 30.0).round() as usize;
            assert_eq!(label, original % 10);
        }
    }

    #[test]
    fn subset_too_large_errors() {
        let ds = toy_dataset(10);
        assert!(matches!(
            ds.subset(11, 0),
            Err(DataError::SubsetTooLarge { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn bundled_fixture_loads() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let train = load_idx(
            &root.join("digits-train-images.idx3-ubyte"),
            &root.join("digits-train-labels.idx1-ubyte"),
        )
        .unwrap();
        let test = load_idx(
            &root.join("digits-test-images.idx3-ubyte"),
            &root.join("digits-test-labels.idx1-ubyte"),
        )
        .unwrap();
        assert_eq!(train.len(), 1437);
        assert_eq!(test.len(), 360);
        assert_eq!(train.images[0].height, 28);
        assert_eq!(train.images[0].width, 28);
        assert!(train.labels.iter().all(|&l| l < 10));
    }
}
