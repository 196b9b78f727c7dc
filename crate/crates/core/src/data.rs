//! Rotated-MNIST ingestion (`.amat`, optionally gzipped) and dataset splits.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gfunc::PlanarStack;
use crate::real::Real;

pub const PIXELS: usize = 28 * 28;
pub const TRAIN_VALID_FILE: &str = "mnist_all_rotation_normalized_float_train_valid.amat";
pub const TEST_FILE: &str = "mnist_all_rotation_normalized_float_test.amat";
pub const TRAIN_SIZE: usize = 10_000;
pub const VALID_SIZE: usize = 2_000;
const PIXEL_TOLERANCE: f32 = 1e-6;

/// Images `N × 1 × 28 × 28` in `[0, 1]` with labels `0..9`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Vec<f32>,
    labels: Vec<u8>,
    hash: String,
}

impl LabeledDataset {
    pub fn new(images: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() || images.len() != labels.len() * PIXELS {
            return Err(Error::shape(format!(
                "{} pixel values for {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Range {
                line: 0,
                msg: format!("label {l} outside 0..9"),
            });
        }
        let hash = content_hash(&images, &labels);
        Ok(LabeledDataset {
            images,
            labels,
            hash,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self, index: usize) -> &[f32] {
        &self.images[index * PIXELS..(index + 1) * PIXELS]
    }

    pub fn image<T: Real>(&self, index: usize) -> PlanarStack<T> {
        let data = self.pixels(index).iter().map(|&p| T::of(p as f64)).collect();
        PlanarStack::new(1, 28, 28, data).expect("28x28 image")
    }

    /// SHA-256 over the little-endian pixels followed by the labels.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Items `start..end` in file order.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::SizeMismatch {
                expected: end,
                found: self.len(),
            });
        }
        Self::new(
            self.images[start * PIXELS..end * PIXELS].to_vec(),
            self.labels[start..end].to_vec(),
        )
    }
}

fn content_hash(images: &[f32], labels: &[u8]) -> String {
    let mut h = Sha256::new();
    for p in images {
        h.update(p.to_le_bytes());
    }
    h.update(labels);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse `.amat` text: one example per line, 784 pixels then the label.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_amat<R: BufRead>(reader: R) -> Result<LabeledDataset> {
    parse_from(reader, Path::new("<input>"))
}

fn parse_from<R: BufRead>(reader: R, source: &Path) -> Result<LabeledDataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let line_no = idx + 1;
        let bytes = line.map_err(|e| Error::io(source, e))?;
        let line = std::str::from_utf8(&bytes).map_err(|_| Error::Parse {
            line: line_no,
            msg: "line is not valid UTF-8".into(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        let mut label = None;
        for tok in line.split_ascii_whitespace() {
            count += 1;
            if count > PIXELS + 1 {
                continue;
            }
            let x: f32 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("value {count} is not a number: {tok:?}"),
            })?;
            if count <= PIXELS {
                if !(-PIXEL_TOLERANCE..=1.0 + PIXEL_TOLERANCE).contains(&x) {
                    return Err(Error::Range {
                        line: line_no,
                        msg: format!("pixel {count} = {x} outside [0, 1]"),
                    });
                }
                images.push(x.clamp(0.0, 1.0));
            } else {
                label = Some(x);
            }
        }
        if count != PIXELS + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} values, found {count}", PIXELS + 1),
            });
        }
        let raw = label.expect("counted");
        let rounded = raw.round();
        if !(0.0..=9.0).contains(&rounded) {
            return Err(Error::Range {
                line: line_no,
                msg: format!("label {raw} outside 0..9"),
            });
        }
        labels.push(rounded as u8);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no examples".into(),
        });
    }
    LabeledDataset::new(images, labels)
}

/// Load an `.amat` file; names ending in `.gz` are decompressed on the fly.
pub fn load_amat(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_from(BufReader::new(reader), path)
}

/// First 10000 items for training, last 2000 for validation, in file order.
pub fn split_train_valid(d: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    if d.len() != TRAIN_SIZE + VALID_SIZE {
        return Err(Error::SizeMismatch {
            expected: TRAIN_SIZE + VALID_SIZE,
            found: d.len(),
        });
    }
    Ok((d.slice(0, TRAIN_SIZE)?, d.slice(TRAIN_SIZE, d.len())?))
}

/// Path of a standard dataset file inside `dir`, preferring the plain name
/// and falling back to a `.gz` sibling.
pub fn dataset_file(dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
    let plain = dir.as_ref().join(name);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.as_ref().join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
    ))
}
