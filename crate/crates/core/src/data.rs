//! IDX ingestion, normalization, splitting and confident-subset construction.

use crate::classifier::{predict_with_certainty, CertaintyClassifier, CertaintyConfig};
use crate::error::{GwinError, Result};
use crate::nn::random::{derive_seed, seeded};
use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const FULL_TRAIN_SIZE: usize = 60_000;
pub const VALIDATION_SIZE: usize = 10_000;

/// Images stored row-major as `N x 28 x 28 x 1` with one label per image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledImageSet {
    pub name: String,
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
}

impl LabeledImageSet {
    pub fn new(name: impl Into<String>, images: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if !images.len().is_multiple_of(IMAGE_PIXELS) {
            return Err(GwinError::ShapeMismatch(format!(
                "{} pixel values do not form whole 28x28 images",
                images.len()
            )));
        }
        if images.len() / IMAGE_PIXELS != labels.len() {
            return Err(GwinError::CountMismatch { images: images.len() / IMAGE_PIXELS, labels: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(GwinError::InvalidLabel(bad));
        }
        Ok(Self { name: name.into(), images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    /// Copies the selected images and labels into contiguous buffers.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f32>, Vec<u8>) {
        let mut x = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.image(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        let (images, labels) = self.gather(indices);
        Self { name: name.into(), images, labels }
    }

    pub fn max_pixel(&self) -> f32 {
        self.images.iter().copied().fold(0.0, f32::max)
    }

    /// Errors unless every pixel lies in `[0, 1]`.
    pub fn check_normalized(&self) -> Result<()> {
        match self.images.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            Some(&p) => Err(GwinError::InvalidConfig(format!(
                "{}: pixel {p} is outside [0, 1]; normalize the set first",
                self.name
            ))),
            None => Ok(()),
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| GwinError::MalformedIdx(format!("truncated header at byte {at}")))
}

/// Parses an IDX image file, returning raw pixel values in `0..=255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<f32>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(GwinError::MalformedIdx(format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let (rows, cols) = (read_u32(bytes, 8)? as usize, read_u32(bytes, 12)? as usize);
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(GwinError::MalformedIdx(format!("images are {rows}x{cols}, expected 28x28")));
    }
    let payload = &bytes[16..];
    if payload.len() != n * IMAGE_PIXELS {
        return Err(GwinError::MalformedIdx(format!(
            "header declares {n} images but payload has {} bytes",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|&b| b as f32).collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(GwinError::MalformedIdx(format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(GwinError::MalformedIdx(format!(
            "header declares {n} labels but payload has {} bytes",
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

/// Reads a file, transparently inflating it when the name ends in `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    let file = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        { file }.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

/// Loads an IDX image/label pair without normalizing pixel values.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledImageSet> {
    let images = parse_idx_images(&read_maybe_gz(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels_path.as_ref())?)?;
    let name = images_path.as_ref().file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    LabeledImageSet::new(name, images, labels)
}

/// Loads an IDX image file on its own and scales pixels to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let raw = parse_idx_images(&read_maybe_gz(path.as_ref())?)?;
    Ok(raw.into_iter().map(|p| p / 255.0).collect())
}

/// Encodes raw pixels (integers in `0..=255`) as an IDX image file.
pub fn encode_idx_images(images: &[f32]) -> Result<Vec<u8>> {
    let n = images.len() / IMAGE_PIXELS;
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, IMAGE_SIDE as u32, IMAGE_SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for &p in images {
        if !(0.0..=255.0).contains(&p) || p.fract() != 0.0 {
            return Err(GwinError::InvalidPixel(p));
        }
        out.push(p as u8);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes a raw (unnormalized) set as an IDX pair.
pub fn write_idx(set: &LabeledImageSet, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    File::create(images_path)?.write_all(&encode_idx_images(&set.images)?)?;
    File::create(labels_path)?.write_all(&encode_idx_labels(&set.labels))?;
    Ok(())
}

/// Converts raw 0..=255 pixels to `[0, 1]`.
pub fn normalize(raw: LabeledImageSet) -> Result<LabeledImageSet> {
    let max = raw.max_pixel();
    if max <= 1.0 && raw.images.iter().any(|p| p.fract() != 0.0) {
        return Err(GwinError::AlreadyNormalized { max });
    }
    if let Some(&p) = raw.images.iter().find(|p| !(0.0..=255.0).contains(*p) || p.fract() != 0.0) {
        return Err(GwinError::InvalidPixel(p));
    }
    let images = raw.images.into_iter().map(|p| p / 255.0).collect();
    Ok(LabeledImageSet { images, ..raw })
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: LabeledImageSet,
    pub validation: LabeledImageSet,
    pub test: LabeledImageSet,
    pub split_seed: u64,
    /// Positions of the training examples in the original 60,000-image set.
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Seeded shuffle of `0..60_000` into 50,000 training and 10,000 validation indices.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n != FULL_TRAIN_SIZE {
        return Err(GwinError::WrongSize { expected: FULL_TRAIN_SIZE, found: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(derive_seed(seed, &[0x5b117])));
    let mut validation = order.split_off(n - VALIDATION_SIZE);
    order.sort_unstable();
    validation.sort_unstable();
    Ok((order, validation))
}

pub fn split_train_val(full: &LabeledImageSet, test: LabeledImageSet, seed: u64) -> Result<DatasetSplit> {
    let (train_indices, validation_indices) = split_indices(full.len(), seed)?;
    Ok(DatasetSplit {
        train: full.subset(format!("{}:train", full.name), &train_indices),
        validation: full.subset(format!("{}:validation", full.name), &validation_indices),
        test,
        split_seed: seed,
        train_indices,
        validation_indices,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Digits,
    Fashion,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Digits => "digits",
            DatasetKind::Fashion => "fashion",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = GwinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digits" | "mnist" => Ok(DatasetKind::Digits),
            "fashion" | "fashion-mnist" => Ok(DatasetKind::Fashion),
            other => Err(GwinError::InvalidConfig(format!("unknown dataset `{other}`"))),
        }
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(candidate);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(GwinError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{stem}[.gz] not found in {}", dir.display()),
    )))
}

/// Loads and normalizes the standard four IDX files found in `dir`.
pub fn load_dataset_dir(dir: impl AsRef<Path>, split_seed: u64) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let full =
        normalize(load_idx(find_file(dir, "train-images-idx3-ubyte")?, find_file(dir, "train-labels-idx1-ubyte")?)?)?;
    let test =
        normalize(load_idx(find_file(dir, "t10k-images-idx3-ubyte")?, find_file(dir, "t10k-labels-idx1-ubyte")?)?)?;
    let test = LabeledImageSet { name: format!("{}:test", dir.display()), ..test };
    let full = LabeledImageSet { name: dir.display().to_string(), ..full };
    split_train_val(&full, test, split_seed)
}

/// Training examples the classifier labels correctly with certainty at least `tau_star`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidentSubset {
    pub base_name: String,
    pub base_len: usize,
    pub member_indices: Vec<usize>,
    pub tau_star: f32,
    pub mc_samples: usize,
    pub seed: u64,
    pub classifier_hash: String,
    pub split_seed: Option<u64>,
}

impl ConfidentSubset {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer(File::create(path)?, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// Re-runs the recorded sampling pass and returns the members that no
    /// longer qualify. An empty result means the subset is sound.
    pub fn verify<C: CertaintyClassifier + ?Sized>(&self, base: &LabeledImageSet, clf: &C) -> Result<Vec<usize>> {
        if base.len() != self.base_len {
            return Err(GwinError::WrongSize { expected: self.base_len, found: base.len() });
        }
        if clf.fingerprint() != self.classifier_hash {
            return Err(GwinError::InvalidConfig("subset was built with a different classifier".into()));
        }
        let preds = predict_with_certainty(clf, &base.images, &CertaintyConfig::new(self.mc_samples, self.seed))?;
        Ok(self
            .member_indices
            .iter()
            .copied()
            .filter(|&i| !(preds[i].label == base.labels[i] && preds[i].certainty >= self.tau_star))
            .collect())
    }
}

/// Builds the confident subset from one fixed sampling pass over `train`.
pub fn build_confident_subset<C: CertaintyClassifier + ?Sized>(
    train: &LabeledImageSet,
    clf: &C,
    tau_star: f32,
    mc_samples: usize,
    seed: u64,
) -> Result<ConfidentSubset> {
    if !(0.0..=1.0).contains(&tau_star) {
        return Err(GwinError::OutOfRange { name: "tau_star", value: tau_star });
    }
    let preds = predict_with_certainty(clf, &train.images, &CertaintyConfig::new(mc_samples, seed))?;
    let member_indices = preds
        .iter()
        .zip(&train.labels)
        .enumerate()
        .filter(|(_, (p, &y))| p.label == y && p.certainty >= tau_star)
        .map(|(i, _)| i)
        .collect();
    Ok(ConfidentSubset {
        base_name: train.name.clone(),
        base_len: train.len(),
        member_indices,
        tau_star,
        mc_samples,
        seed,
        classifier_hash: clf.fingerprint(),
        split_seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_set(n: usize) -> LabeledImageSet {
        let images = (0..n * IMAGE_PIXELS).map(|i| ((i * 7) % 256) as f32).collect();
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        LabeledImageSet::new("raw", images, labels).unwrap()
    }

    #[test]
    fn hand_written_idx_pair_is_recovered() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        img.extend((0..2 * IMAGE_PIXELS).map(|i| (i % 251) as u8));
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 4, 9];
        let x = parse_idx_images(&img).unwrap();
        assert_eq!(x.len(), 2 * IMAGE_PIXELS);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[IMAGE_PIXELS + 5], ((IMAGE_PIXELS + 5) % 251) as f32);
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![4, 9]);
    }

    #[test]
    fn bad_magic_and_truncation_are_rejected() {
        let mut img = encode_idx_images(&raw_set(1).images).unwrap();
        assert!(matches!(parse_idx_images(&img[..100]), Err(GwinError::MalformedIdx(_))));
        img[3] = 0;
        assert!(matches!(parse_idx_images(&img), Err(GwinError::MalformedIdx(_))));
        assert!(matches!(parse_idx_labels(&[0, 0, 0, 0, 0, 0, 0, 0]), Err(GwinError::MalformedIdx(_))));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let set = raw_set(3);
        std::fs::write(dir.path().join("i"), encode_idx_images(&set.images).unwrap()).unwrap();
        std::fs::write(dir.path().join("l"), encode_idx_labels(&set.labels[..2])).unwrap();
        let err = load_idx(dir.path().join("i"), dir.path().join("l")).unwrap_err();
        assert!(matches!(err, GwinError::CountMismatch { images: 3, labels: 2 }));
    }

    #[test]
    fn gz_files_are_inflated() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let set = raw_set(2);
        let mut enc = GzEncoder::new(File::create(dir.path().join("i.gz")).unwrap(), flate2::Compression::fast());
        enc.write_all(&encode_idx_images(&set.images).unwrap()).unwrap();
        enc.finish().unwrap();
        std::fs::write(dir.path().join("l"), encode_idx_labels(&set.labels)).unwrap();
        let back = load_idx(dir.path().join("i.gz"), dir.path().join("l")).unwrap();
        assert_eq!(back.images, set.images);
    }

    #[test]
    fn normalize_divides_by_255() {
        let mut set = raw_set(1);
        set.images[0] = 0.0;
        set.images[1] = 255.0;
        set.images[2] = 128.0;
        let n = normalize(set).unwrap();
        assert_eq!(n.images[0], 0.0);
        assert_eq!(n.images[1], 1.0);
        assert!((n.images[2] - 0.501_96).abs() < 1e-5);
    }

    #[test]
    fn double_normalization_is_refused() {
        let once = normalize(raw_set(1)).unwrap();
        assert!(matches!(normalize(once), Err(GwinError::AlreadyNormalized { .. })));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let (t1, v1) = split_indices(FULL_TRAIN_SIZE, 7).unwrap();
        let (t2, v2) = split_indices(FULL_TRAIN_SIZE, 7).unwrap();
        assert_eq!((&t1, &v1), (&t2, &v2));
        assert_eq!((t1.len(), v1.len()), (50_000, 10_000));
        let mut all: Vec<usize> = t1.iter().chain(&v1).copied().collect();
        all.sort_unstable();
        assert!(all.iter().enumerate().all(|(i, &v)| i == v));
        assert_ne!(split_indices(FULL_TRAIN_SIZE, 8).unwrap().1, v1);
        assert!(matches!(split_indices(59_999, 7), Err(GwinError::WrongSize { .. })));
    }
}
