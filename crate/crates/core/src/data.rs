//! MNIST ingestion and feature extraction.
//!
//! IDX files are big-endian: a 4-byte magic (2051 for images, 2049 for
//! labels), one 4-byte size per dimension, then row-major unsigned bytes.
//!
//! Images are reduced to `d` features by average pooling:
//! - `d = 4`: 2×2 grid of 14×14 quadrants,
//! - `d = 6`: 2×3 grid, rows of 14, columns of width 10, 9, 9,
//! - otherwise `d` vertical strips of equal width (`d` must divide 28).
//!
//! Features are region means divided by 255, clamped to `[0, 1]`.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl RawImage {
    pub fn new(pixels: Vec<u8>, label: u8) -> Result<Self> {
        if pixels.len() != PIXELS {
            return Err(Error::LengthMismatch {
                what: "image pixels",
                expected: PIXELS,
                actual: pixels.len(),
            });
        }
        if label > 9 {
            return Err(Error::UnknownLabel(label));
        }
        Ok(Self { pixels, label })
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let chunk = self.take(4)?;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "{}: need {end} bytes, have {}",
                self.what,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }
}

/// Header of an IDX image file: `(count, rows, cols)`.
pub fn parse_idx_image_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "image header",
    };
    r.magic(IMAGE_MAGIC)?;
    Ok((r.u32()? as usize, r.u32()? as usize, r.u32()? as usize))
}

/// Decodes an IDX image file into 28×28 pixel buffers.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let (count, rows, cols) = parse_idx_image_header(bytes)?;
    if rows != SIDE || cols != SIDE {
        return Err(Error::Parse(format!("expected 28×28 images, found {rows}×{cols}")));
    }
    let mut r = Reader {
        bytes,
        pos: 16,
        what: "image data",
    };
    (0..count).map(|_| r.take(PIXELS).map(<[u8]>::to_vec)).collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "labels",
    };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.to_vec())
}

pub fn encode_idx_images(images: &[RawImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
    for v in [IMAGE_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(&img.pixels);
    }
    out
}

pub fn encode_idx_labels(images: &[RawImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + images.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend(images.iter().map(|i| i.label));
    out
}

/// Pairs decoded images and labels.
pub fn decode_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<RawImage>> {
    let pixels = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if pixels.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: pixels.len(),
            labels: labels.len(),
        });
    }
    pixels
        .into_iter()
        .zip(labels)
        .map(|(p, l)| RawImage::new(p, l))
        .collect()
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<RawImage>> {
    decode_idx(&std::fs::read(images_path)?, &std::fs::read(labels_path)?)
}

/// One preprocessed example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u8,
    /// Index of the source image in the loaded file.
    pub source_index: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: u8, source_index: usize) -> Self {
        Self {
            features,
            label,
            source_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub digits: Vec<u8>,
    pub seed: u64,
    pub n_features: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl DatasetSplit {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("split serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Splits off the last `n` training samples as a validation set.
    pub fn holdout(&self, n: usize) -> (&[Sample], &[Sample]) {
        let cut = self.train.len().saturating_sub(n);
        self.train.split_at(cut)
    }
}

/// Per-class counts as even as possible; earlier digits take the remainder.
fn balanced_counts(total: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|i| total / classes + usize::from(i < total % classes))
        .collect()
}

/// Seeded, class-balanced train/test split over `digits`.
pub fn build_subset(
    images: &[RawImage],
    digits: &[u8],
    n_train: usize,
    n_test: usize,
    n_features: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if digits.len() < 2 {
        return Err(Error::InvalidConfig("need at least two digits".into()));
    }
    pooling_layout(n_features)?;
    let train_counts = balanced_counts(n_train, digits.len());
    let test_counts = balanced_counts(n_test, digits.len());

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for (k, &digit) in digits.iter().enumerate() {
        let mut pool: Vec<usize> = images
            .iter()
            .enumerate()
            .filter(|(_, img)| img.label == digit)
            .map(|(i, _)| i)
            .collect();
        let needed = train_counts[k] + test_counts[k];
        if pool.len() < needed {
            return Err(Error::InsufficientImages {
                digit,
                available: pool.len(),
                needed,
            });
        }
        pool.shuffle(&mut substream(seed, &[u64::from(digit)]));
        let sample = |i: usize| -> Result<Sample> { Ok(Sample::new(preprocess(&images[i], n_features)?, digit, i)) };
        for &i in &pool[..train_counts[k]] {
            train.push(sample(i)?);
        }
        for &i in &pool[train_counts[k]..needed] {
            test.push(sample(i)?);
        }
    }
    train.shuffle(&mut substream(seed, &[0x7a11]));
    test.shuffle(&mut substream(seed, &[0x7e57]));
    Ok(DatasetSplit {
        digits: digits.to_vec(),
        seed,
        n_features,
        train,
        test,
    })
}

/// Pooling regions as `(row_start, row_end, col_start, col_end)`.
pub fn pooling_layout(d: usize) -> Result<Vec<(usize, usize, usize, usize)>> {
    let grid = |rows: &[(usize, usize)], cols: &[(usize, usize)]| {
        rows.iter()
            .flat_map(|&(r0, r1)| cols.iter().map(move |&(c0, c1)| (r0, r1, c0, c1)))
            .collect()
    };
    match d {
        4 => Ok(grid(&[(0, 14), (14, 28)], &[(0, 14), (14, 28)])),
        6 => Ok(grid(&[(0, 14), (14, 28)], &[(0, 10), (10, 19), (19, 28)])),
        d if d > 0 && SIDE.is_multiple_of(d) => {
            let w = SIDE / d;
            Ok((0..d).map(|i| (0, SIDE, i * w, (i + 1) * w)).collect())
        }
        d => Err(Error::UnsupportedFeatureCount(d)),
    }
}

/// Average-pools an image into `d` features in `[0, 1]`.
pub fn preprocess(image: &RawImage, d: usize) -> Result<Vec<f64>> {
    Ok(pooling_layout(d)?
        .into_iter()
        .map(|(r0, r1, c0, c1)| {
            let sum: u64 = (r0..r1)
                .flat_map(|r| (c0..c1).map(move |c| (r, c)))
                .map(|(r, c)| u64::from(image.pixel(r, c)))
                .sum();
            let area = ((r1 - r0) * (c1 - c0)) as f64;
            (sum as f64 / area / 255.0).clamp(0.0, 1.0)
        })
        .collect())
}
