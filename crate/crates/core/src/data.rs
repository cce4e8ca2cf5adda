//! Datasets: MNIST in IDX format and synthetic Gaussian blobs.
//!
//! IDX files are a big-endian magic (`0x0000_08_0n`: unsigned bytes, `n`
//! dimensions), `n` big-endian `u32` sizes, then the raw bytes. Files ending
//! in gzip magic are decompressed transparently. Pixels are scaled to
//! `[0, 1]` by dividing by 255 and are not centered.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::linalg::RngStream;
use crate::network::LabeledExample;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const MNIST_CLASSES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub num_classes: usize,
    pub input_dim: usize,
    pub source: String,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize, source: impl Into<String>) -> Result<Self> {
        let input_dim = examples.first().map(|e| e.x.len()).unwrap_or(0);
        for (i, e) in examples.iter().enumerate() {
            if e.x.len() != input_dim {
                return Err(Error::AtExample {
                    index: i,
                    source: Box::new(Error::DimensionMismatch {
                        context: "example dimension",
                        expected: input_dim,
                        found: e.x.len(),
                    }),
                });
            }
            if e.y >= num_classes {
                return Err(Error::invalid(format!(
                    "example {i} has label {} but there are {num_classes} classes",
                    e.y
                )));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            input_dim,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Largest `‖x‖₂` in the set.
    pub fn max_input_norm(&self) -> f64 {
        self.examples
            .iter()
            .map(|e| crate::linalg::l2_norm(&e.x))
            .fold(0.0, f64::max)
    }

    /// Splits into the first `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n > self.len() {
            return Err(Error::invalid(format!("cannot split {} examples at {n}", self.len())));
        }
        let mk = |ex: &[LabeledExample], tag: &str| Dataset {
            examples: ex.to_vec(),
            num_classes: self.num_classes,
            input_dim: self.input_dim,
            source: format!("{}[{tag}]", self.source),
        };
        Ok((mk(&self.examples[..n], &format!("..{n}")), mk(&self.examples[n..], &format!("{n}.."))))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn payload_len(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.magic.to_be_bytes().to_vec();
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    /// Parses the header at the start of `bytes`.
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |offset: u64, reason: String| Error::Idx {
            path: path.to_path_buf(),
            offset,
            reason,
        };
        if bytes.len() < 4 {
            return Err(err(bytes.len() as u64, "file shorter than the 4-byte magic".into()));
        }
        let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
            return Err(err(0, format!("magic {magic:#010x} is not an unsigned-byte IDX file")));
        }
        let ndims = bytes[3] as usize;
        if ndims == 0 {
            return Err(err(3, "zero dimensions".into()));
        }
        let mut dims = Vec::with_capacity(ndims);
        for i in 0..ndims {
            let at = 4 + 4 * i;
            if bytes.len() < at + 4 {
                return Err(err(bytes.len() as u64, format!("truncated header: dimension {i} missing")));
            }
            dims.push(u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()));
        }
        Ok(Self { magic, dims })
    }
}

/// Reads a whole file, decompressing gzip if present.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses an IDX file, checking the magic and that the payload length
/// matches the declared sizes exactly.
pub fn parse_idx(bytes: &[u8], path: &Path, expected_magic: u32) -> Result<(IdxHeader, Vec<u8>)> {
    let header = IdxHeader::parse(bytes, path)?;
    if header.magic != expected_magic {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("magic {} but expected {expected_magic}", header.magic),
        });
    }
    let start = header.byte_len() as u64;
    let want = header.payload_len();
    let have = bytes.len() as u64 - start;
    if have < want {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            reason: format!("truncated: header declares {want} data bytes, found {have}"),
        });
    }
    if have > want {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: start + want,
            reason: format!("{} trailing bytes after declared data", have - want),
        });
    }
    Ok((header, bytes[start as usize..].to_vec()))
}

/// Loads an image/label IDX pair (raw or gzipped).
pub fn load_mnist(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    let (ih, pixels) = parse_idx(&read_maybe_gz(image_path)?, image_path, IMAGE_MAGIC)?;
    let (lh, labels) = parse_idx(&read_maybe_gz(label_path)?, label_path, LABEL_MAGIC)?;
    if ih.dims.len() != 3 {
        return Err(Error::Idx {
            path: image_path.to_path_buf(),
            offset: 3,
            reason: format!("image file has {} dimensions, expected 3", ih.dims.len()),
        });
    }
    if lh.dims.len() != 1 {
        return Err(Error::Idx {
            path: label_path.to_path_buf(),
            offset: 3,
            reason: format!("label file has {} dimensions, expected 1", lh.dims.len()),
        });
    }
    if ih.dims[0] != lh.dims[0] {
        return Err(Error::Idx {
            path: label_path.to_path_buf(),
            offset: 4,
            reason: format!("{} labels for {} images", lh.dims[0], ih.dims[0]),
        });
    }
    let dim = (ih.dims[1] * ih.dims[2]) as usize;
    let mut examples = Vec::with_capacity(labels.len());
    for (i, (&y, img)) in labels.iter().zip(pixels.chunks_exact(dim)).enumerate() {
        if y as usize >= MNIST_CLASSES {
            return Err(Error::Idx {
                path: label_path.to_path_buf(),
                offset: (lh.byte_len() + i) as u64,
                reason: format!("label {y} outside 0..{MNIST_CLASSES}"),
            });
        }
        examples.push(LabeledExample::new(img.iter().map(|&p| p as f64 / 255.0).collect(), y as usize));
    }
    Dataset::new(examples, MNIST_CLASSES, format!("idx:{}", image_path.display()))
}

/// Conventional file names inside an MNIST directory, preferring gzipped
/// copies when both exist.
pub fn mnist_paths(dir: &Path) -> (PathBuf, PathBuf) {
    let pick = |stem: &str| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    (pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(io)?;
        fs::write(path, enc.finish().map_err(io)?).map_err(io)
    } else {
        fs::write(path, bytes).map_err(io)
    }
}

/// Writes a dataset of `rows × cols` images as an IDX pair. Features are
/// quantized to bytes by `round(255·x)`; they must lie in `[0, 1]`.
pub fn write_idx(data: &Dataset, rows: u32, cols: u32, image_path: &Path, label_path: &Path) -> Result<()> {
    if (rows * cols) as usize != data.input_dim {
        return Err(Error::DimensionMismatch {
            context: "image shape",
            expected: data.input_dim,
            found: (rows * cols) as usize,
        });
    }
    if data.num_classes > 256 {
        return Err(Error::invalid("labels do not fit in a byte"));
    }
    let n = data.len() as u32;
    let mut images = IdxHeader {
        magic: IMAGE_MAGIC,
        dims: vec![n, rows, cols],
    }
    .to_bytes();
    for (i, e) in data.examples.iter().enumerate() {
        for &v in &e.x {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("example {i} has feature {v} outside [0, 1]")));
            }
            images.push((v * 255.0).round() as u8);
        }
    }
    let mut labels = IdxHeader {
        magic: LABEL_MAGIC,
        dims: vec![n],
    }
    .to_bytes();
    labels.extend(data.examples.iter().map(|e| e.y as u8));
    write_bytes(image_path, &images)?;
    write_bytes(label_path, &labels)
}

/// Uniform sample of `m` examples without replacement.
pub fn subset(data: &Dataset, m: usize, rng: &mut RngStream) -> Result<Dataset> {
    if m > data.len() {
        return Err(Error::invalid(format!("cannot take {m} of {} examples", data.len())));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    // Partial Fisher–Yates: the first m slots end up a uniform sample.
    for i in 0..m {
        let j = i + rng.below(data.len() - i);
        idx.swap(i, j);
    }
    Ok(Dataset {
        examples: idx[..m].iter().map(|&i| data.examples[i].clone()).collect(),
        num_classes: data.num_classes,
        input_dim: data.input_dim,
        source: format!("{}[subset {m}]", data.source),
    })
}

/// `n` points in `k` unit-variance Gaussian clusters whose centers sit
/// `separation` apart along the first axis, then rescaled by one global
/// affine map into `[0, 1]`. Labels cycle through the classes.
pub fn synthetic_blobs(n: usize, dim: usize, k: usize, separation: f64, rng: &mut RngStream) -> Result<Dataset> {
    if k < 2 || dim == 0 || n == 0 {
        return Err(Error::invalid(format!("need n > 0, dim > 0, k >= 2 (got {n}, {dim}, {k})")));
    }
    let mut raw: Vec<LabeledExample> = (0..n)
        .map(|i| {
            let y = i % k;
            let mut x: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            x[0] += separation * y as f64;
            LabeledExample::new(x, y)
        })
        .collect();
    let lo = raw.iter().flat_map(|e| e.x.iter().copied()).fold(f64::INFINITY, f64::min);
    let hi = raw
        .iter()
        .flat_map(|e| e.x.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for e in &mut raw {
        for v in &mut e.x {
            *v = ((*v - lo) / span).clamp(0.0, 1.0);
        }
    }
    Dataset::new(raw, k, format!("blobs(n={n},dim={dim},k={k},sep={separation})"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let ex = (0..4)
            .map(|i| LabeledExample::new((0..6).map(|p| ((i * 6 + p) * 10 % 256) as f64 / 255.0).collect(), i % 3))
            .collect();
        Dataset::new(ex, 10, "tiny").unwrap()
    }

    #[test]
    fn header_magic() {
        let h = IdxHeader::parse(&[0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2], Path::new("x")).unwrap();
        assert_eq!(h.magic, IMAGE_MAGIC);
        assert_eq!(h.dims, vec![1, 2, 2]);
        let l = IdxHeader::parse(&[0, 0, 8, 1, 0, 0, 0, 5], Path::new("y")).unwrap();
        assert_eq!(l.magic, LABEL_MAGIC);
    }

    #[test]
    fn round_trip_raw_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny();
        for ext in ["", ".gz"] {
            let ip = dir.path().join(format!("img{ext}"));
            let lp = dir.path().join(format!("lab{ext}"));
            write_idx(&d, 2, 3, &ip, &lp).unwrap();
            let back = load_mnist(&ip, &lp).unwrap();
            assert_eq!(back.examples, d.examples);
        }
    }

    #[test]
    fn pixel_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        let mut img = IdxHeader {
            magic: IMAGE_MAGIC,
            dims: vec![1, 1, 2],
        }
        .to_bytes();
        img.extend([255, 0]);
        fs::write(&ip, img).unwrap();
        let mut lab = IdxHeader {
            magic: LABEL_MAGIC,
            dims: vec![1],
        }
        .to_bytes();
        lab.push(7);
        fs::write(&lp, lab).unwrap();
        let d = load_mnist(&ip, &lp).unwrap();
        assert_eq!(d.examples[0].x, vec![1.0, 0.0]);
        assert_eq!(d.examples[0].y, 7);
    }

    #[test]
    fn corrupt_files_give_offsets() {
        let p = Path::new("f");
        match parse_idx(&[0, 0, 8, 3, 0, 0], p, IMAGE_MAGIC) {
            Err(Error::Idx { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        match parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 3], p, IMAGE_MAGIC) {
            Err(Error::Idx { offset, reason, .. }) => {
                assert_eq!(offset, 0);
                assert!(reason.contains("2051"));
            }
            other => panic!("{other:?}"),
        }
        match parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2], p, LABEL_MAGIC) {
            Err(Error::Idx { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
        match parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 1, 2], p, LABEL_MAGIC) {
            Err(Error::Idx { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
        assert!(parse_idx(&[1, 2], p, LABEL_MAGIC).is_err());
        assert!(parse_idx(&[0x12, 0x34, 0x56, 0x78], p, LABEL_MAGIC).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        write_idx(&d, 2, 3, &ip, &lp).unwrap();
        let mut lab = IdxHeader {
            magic: LABEL_MAGIC,
            dims: vec![3],
        }
        .to_bytes();
        lab.extend([0, 1, 2]);
        fs::write(&lp, lab).unwrap();
        assert!(matches!(load_mnist(&ip, &lp), Err(Error::Idx { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let e = load_mnist(Path::new("/nonexistent/a"), Path::new("/nonexistent/b")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/a"));
    }

    #[test]
    fn subset_contracts() {
        let d = synthetic_blobs(50, 3, 2, 1.0, &mut RngStream::new(1, 1)).unwrap();
        let full = subset(&d, 50, &mut RngStream::new(2, 2)).unwrap();
        let mut a: Vec<String> = full.examples.iter().map(|e| format!("{:?}", e)).collect();
        let mut b: Vec<String> = d.examples.iter().map(|e| format!("{:?}", e)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let s1 = subset(&d, 10, &mut RngStream::new(3, 0)).unwrap();
        let s2 = subset(&d, 10, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(s1, s2);
        assert!(subset(&d, 51, &mut RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn subset_selection_is_uniform() {
        let size = 20;
        let m = 5;
        let ex = (0..size).map(|i| LabeledExample::new(vec![i as f64], 0)).collect();
        let d = Dataset::new(ex, 2, "idx").unwrap();
        let runs = 20_000;
        let mut counts = vec![0usize; size];
        for s in 0..runs {
            for e in subset(&d, m, &mut RngStream::new(s, 0)).unwrap().examples {
                counts[e.x[0] as usize] += 1;
            }
        }
        let expected = runs as f64 * m as f64 / size as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 19 degrees of freedom; 0.999 quantile is about 43.8.
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }

    #[test]
    fn blobs_contracts() {
        let a = synthetic_blobs(200, 4, 3, 5.0, &mut RngStream::new(7, 0)).unwrap();
        let b = synthetic_blobs(200, 4, 3, 5.0, &mut RngStream::new(7, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.examples.iter().all(|e| e.x.iter().all(|v| (0.0..=1.0).contains(v)) && e.y < 3));
        assert!(synthetic_blobs(10, 2, 1, 1.0, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn blobs_separable_by_nearest_center() {
        let d = synthetic_blobs(2000, 2, 2, 10.0, &mut RngStream::new(9, 0)).unwrap();
        let mut centers = [[0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for e in &d.examples {
            centers[e.y][0] += e.x[0];
            centers[e.y][1] += e.x[1];
            counts[e.y] += 1.0;
        }
        for (c, n) in centers.iter_mut().zip(counts) {
            c[0] /= n;
            c[1] /= n;
        }
        let correct = d
            .examples
            .iter()
            .filter(|e| {
                let dist = |c: &[f64; 2]| (e.x[0] - c[0]).powi(2) + (e.x[1] - c[1]).powi(2);
                let pred = if dist(&centers[0]) <= dist(&centers[1]) { 0 } else { 1 };
                pred == e.y
            })
            .count();
        assert!(correct as f64 / 2000.0 >= 0.99);
    }

    #[test]
    fn zero_separation_is_uninformative() {
        // With no separation each class is the same distribution; the class
        // means of the first feature agree to sampling error.
        let d = synthetic_blobs(20_000, 1, 2, 0.0, &mut RngStream::new(11, 0)).unwrap();
        let mean = |y| {
            let v: Vec<f64> = d.examples.iter().filter(|e| e.y == y).map(|e| e.x[0]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean(0) - mean(1)).abs() < 0.01);
    }

    #[test]
    fn bundled_mnist_subset_loads() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist5k");
        let (ip, lp) = mnist_paths(&dir);
        let d = load_mnist(&ip, &lp).unwrap();
        assert_eq!(d.len(), 5000);
        assert_eq!(d.input_dim, 784);
        assert!(d.examples.iter().all(|e| e.x.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
