//! Feature and label files, class mappings, dataset layout on disk, temporal
//! downsampling and the synthetic Markov-chain sequence generator.
//!
//! Dataset layout:
//!
//! ```text
//! root/
//!   mapping.txt          "<id> <name>" per line
//!   train.split          one sample id per line (any *.split name works)
//!   features/<id>.fmat   binary feature matrix
//!   groundTruth/<id>.txt one class name per frame
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"FMAT";
pub const FEATURE_VERSION: u16 = 1;
const FEATURE_HEADER: usize = 4 + 2 + 4 + 4;

/// Encodes a `(D, T)` matrix as `FMAT | u16 version | u32 D | u32 T | f32 LE...`
/// in channel-major order. Values are narrowed to `f32`.
pub fn encode_features(features: &Tensor) -> Result<Vec<u8>> {
    let (d, t) = features.dims2()?;
    let (d32, t32) = match (u32::try_from(d), u32::try_from(t)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            return Err(Error::InvalidShape(format!(
                "feature matrix {d}x{t} does not fit the file format"
            )))
        }
    };
    let mut out = Vec::with_capacity(FEATURE_HEADER + 4 * d * t);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend_from_slice(&t32.to_le_bytes());
    for v in features.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let truncated = |expected: u64| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < FEATURE_HEADER {
        return Err(truncated(FEATURE_HEADER as u64));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version.into(),
            expected: FEATURE_VERSION.into(),
        });
    }
    let d = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as u64;
    let t = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as u64;
    let payload = d
        .checked_mul(t)
        .and_then(|n| n.checked_mul(4))
        .filter(|_| d > 0 && t > 0)
        .ok_or_else(|| Error::DimensionOverflow {
            path: path.to_path_buf(),
            dims: vec![d, t],
        })?;
    let expected = FEATURE_HEADER as u64 + payload;
    if (bytes.len() as u64) < expected {
        return Err(truncated(expected));
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after payload", bytes.len() as u64 - expected),
        });
    }
    let mut data = Vec::with_capacity((d * t) as usize);
    for (i, chunk) in bytes[FEATURE_HEADER..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                index: i,
            });
        }
        data.push(v as f64);
    }
    Tensor::from_vec(&[d as usize, t as usize], data)
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

pub fn write_feature_file(path: impl AsRef<Path>, features: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(features)?).map_err(|e| Error::io(path, e))
}

/// Bidirectional class name <-> id map with ids `0..C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMapping {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl ClassMapping {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid class name {n:?}")));
            }
            if ids.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate class name {n:?}")));
            }
        }
        Ok(ClassMapping { names, ids })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = || Error::Parse {
                path: path.to_path_buf(),
                reason: format!("line {}: expected \"<id> <name>\", got {line:?}", n + 1),
            };
            let mut parts = line.split_whitespace();
            let id: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let name = parts.next().ok_or_else(parse_err)?;
            if parts.next().is_some() {
                return Err(parse_err());
            }
            entries.push((id, name.to_string()));
        }
        if entries.is_empty() {
            return Err(Error::EmptyFile {
                path: path.to_path_buf(),
            });
        }
        entries.sort();
        if entries.iter().enumerate().any(|(i, (id, _))| *id != i) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                reason: "class ids are not contiguous from 0".into(),
            });
        }
        ClassMapping::new(entries.into_iter().map(|(_, n)| n).collect())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text: String = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{i} {n}\n"))
            .collect();
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn load_labels(path: impl AsRef<Path>, mapping: &ClassMapping) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .map(|(n, line)| {
            let name = line.trim();
            mapping.id(name).ok_or_else(|| Error::UnknownClass {
                path: path.to_path_buf(),
                line: n + 1,
                name: name.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize], mapping: &ClassMapping) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(labels.len() * 8);
    for &l in labels {
        let name = mapping
            .name(l)
            .ok_or_else(|| Error::InvalidArgument(format!("label {l} has no class name")))?;
        text.push_str(name);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One video: `(D_in, T)` features and `T` frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub id: String,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl SequenceSample {
    pub fn new(id: impl Into<String>, features: Tensor, labels: Vec<usize>) -> Result<Self> {
        let id = id.into();
        let (_, t) = features.dims2()?;
        if t != labels.len() {
            return Err(Error::InvalidShape(format!(
                "{id}: {t} feature frames but {} labels",
                labels.len()
            )));
        }
        Ok(SequenceSample { id, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[0]
    }
}

/// Keeps frames `0, factor, 2 factor, ...` of features and labels.
pub fn temporal_downsample(sample: &SequenceSample, factor: usize) -> Result<SequenceSample> {
    let t = sample.len();
    if factor == 0 || factor > t {
        return Err(Error::InvalidArgument(format!(
            "downsample factor {factor} invalid for {t} frames"
        )));
    }
    if factor == 1 {
        return Ok(sample.clone());
    }
    let kept: Vec<usize> = (0..t).step_by(factor).collect();
    let d = sample.feature_dim();
    let mut data = Vec::with_capacity(d * kept.len());
    for c in 0..d {
        let row = sample.features.row(c);
        data.extend(kept.iter().map(|&i| row[i]));
    }
    SequenceSample::new(
        sample.id.clone(),
        Tensor::from_vec(&[d, kept.len()], data)?,
        kept.iter().map(|&i| sample.labels[i]).collect(),
    )
}

pub fn features_path(root: &Path, id: &str) -> PathBuf {
    root.join("features").join(format!("{id}.fmat"))
}

pub fn labels_path(root: &Path, id: &str) -> PathBuf {
    root.join("groundTruth").join(format!("{id}.txt"))
}

pub fn split_path(root: &Path, split: &str) -> PathBuf {
    root.join(format!("{split}.split"))
}

pub fn read_split(root: &Path, split: &str) -> Result<Vec<String>> {
    let path = split_path(root, split);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if ids.is_empty() {
        return Err(Error::EmptyFile { path });
    }
    Ok(ids)
}

/// Loads every sample of a split, validating labels against the mapping and
/// feature/label lengths.
pub fn load_split(root: &Path, split: &str) -> Result<(ClassMapping, Vec<SequenceSample>)> {
    let mapping = ClassMapping::load(root.join("mapping.txt"))?;
    let mut samples = Vec::new();
    let mut dim = None;
    for id in read_split(root, split)? {
        let features = load_feature_file(features_path(root, &id))?;
        let labels = load_labels(labels_path(root, &id), &mapping)?;
        let sample = SequenceSample::new(id.clone(), features, labels)?;
        match dim {
            None => dim = Some(sample.feature_dim()),
            Some(d) if d != sample.feature_dim() => {
                return Err(Error::InvalidShape(format!(
                    "{id}: feature dimension {} differs from {d}",
                    sample.feature_dim()
                )))
            }
            _ => {}
        }
        samples.push(sample);
    }
    Ok((mapping, samples))
}

/// Writes samples plus the mapping and the given splits under `root`.
pub fn write_dataset(
    root: &Path,
    mapping: &ClassMapping,
    samples: &[SequenceSample],
    splits: &[(&str, Vec<String>)],
) -> Result<()> {
    for dir in [root.to_path_buf(), root.join("features"), root.join("groundTruth")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    mapping.write(root.join("mapping.txt"))?;
    for s in samples {
        write_feature_file(features_path(root, &s.id), &s.features)?;
        write_labels(labels_path(root, &s.id), &s.labels, mapping)?;
    }
    for (name, ids) in splits {
        let path = split_path(root, name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for id in ids {
            writeln!(f, "{id}").map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Parameters of the synthetic sequence generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub num_videos: usize,
    pub mean_length: f64,
    /// Row-stochastic class transition matrix between consecutive segments.
    pub transition: Vec<Vec<f64>>,
    pub duration_mean: Vec<f64>,
    pub duration_std: Vec<f64>,
    /// `num_classes` vectors of length `feature_dim`.
    pub class_means: Vec<Vec<f64>>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Transitions uniform over the other classes, class means drawn from
    /// `N(0, separation^2)`, segment durations `mean_duration ± mean_duration / 3`.
    pub fn with_random_structure(
        num_classes: usize,
        feature_dim: usize,
        num_videos: usize,
        mean_length: f64,
        mean_duration: f64,
        separation: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        // class means use their own stream so they do not depend on num_videos
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05EE_DC1A_55E5_u64);
        let normal = Normal::new(0.0, separation.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let class_means = (0..num_classes)
            .map(|_| (0..feature_dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let off = 1.0 / (num_classes - 1) as f64;
        let transition = (0..num_classes)
            .map(|i| (0..num_classes).map(|j| if i == j { 0.0 } else { off }).collect())
            .collect();
        let cfg = SynthConfig {
            num_classes,
            feature_dim,
            num_videos,
            mean_length,
            transition,
            duration_mean: vec![mean_duration; num_classes],
            duration_std: vec![mean_duration / 3.0; num_classes],
            class_means,
            noise_std,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let c = self.num_classes;
        if c < 2 || self.feature_dim == 0 || self.num_videos == 0 {
            return bad("num_classes >= 2, feature_dim >= 1 and num_videos >= 1 required".into());
        }
        if !(self.mean_length >= 1.0) {
            return bad(format!("mean_length must be >= 1, got {}", self.mean_length));
        }
        if self.transition.len() != c || self.transition.iter().any(|r| r.len() != c) {
            return bad(format!("transition matrix must be {c}x{c}"));
        }
        for (i, row) in self.transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return bad(format!("transition row {i} is not a distribution (sum {sum})"));
            }
        }
        if self.duration_mean.len() != c || self.duration_std.len() != c {
            return bad("one duration mean/std per class required".into());
        }
        if self.duration_mean.iter().any(|m| !(*m >= 1.0)) || self.duration_std.iter().any(|s| !(*s >= 0.0)) {
            return bad("duration means must be >= 1 and stds >= 0".into());
        }
        if self.class_means.len() != c || self.class_means.iter().any(|m| m.len() != self.feature_dim) {
            return bad("class_means must be num_classes x feature_dim".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0".into());
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.num_classes).map(|c| format!("action_{c}")).collect()
    }
}

/// Samples videos from the Markov chain: class sequence from the transition
/// matrix, integer segment durations from per-class normals (at least one
/// frame), features as class mean plus isotropic Gaussian noise. Features are
/// rounded to `f32` so a corpus written to disk reads back unchanged.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(ClassMapping, Vec<SequenceSample>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rows = config
        .transition
        .iter()
        .map(WeightedIndex::new)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidArgument(format!("transition matrix: {e}")))?;
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let durations = config
        .duration_mean
        .iter()
        .zip(&config.duration_std)
        .map(|(m, s)| Normal::new(*m, *s))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let d = config.feature_dim;
    let mut samples = Vec::with_capacity(config.num_videos);
    for v in 0..config.num_videos {
        let target = (config.mean_length * rng.gen_range(0.75..1.25)).round().max(1.0) as usize;
        let mut labels = Vec::with_capacity(target);
        let mut class = rng.gen_range(0..config.num_classes);
        while labels.len() < target {
            let len = durations[class].sample(&mut rng).round().max(1.0) as usize;
            let len = len.min(target - labels.len());
            labels.extend(std::iter::repeat(class).take(len));
            class = rows[class].sample(&mut rng);
        }
        let mut data = vec![0.0; d * target];
        for (t, &c) in labels.iter().enumerate() {
            for k in 0..d {
                data[k * target + t] = (config.class_means[c][k] + noise.sample(&mut rng)) as f32 as f64;
            }
        }
        samples.push(SequenceSample::new(
            format!("video_{v:04}"),
            Tensor::from_vec(&[d, target], data)?,
            labels,
        )?);
    }
    Ok((ClassMapping::new(config.class_names())?, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::segments_from_labels;

    fn mapping() -> ClassMapping {
        ClassMapping::new(vec!["walk".into(), "run".into()]).unwrap()
    }

    #[test]
    fn feature_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.fmat");
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -4.5, 0.25, 6.0]).unwrap();
        write_feature_file(&p, &x).unwrap();
        assert_eq!(load_feature_file(&p).unwrap(), x);

        let bytes = fs::read(&p).unwrap();
        match decode_features(&bytes[..bytes.len() - 3], &p) {
            Err(Error::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, 14 + 24);
                assert_eq!(actual, 14 + 21);
            }
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_features(&bad, &p), Err(Error::BadMagic { .. })));

        let mut nan = bytes.clone();
        nan[14..18].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_features(&nan, &p), Err(Error::NonFinite { index: 0, .. })));

        let mut huge = bytes[..14].to_vec();
        huge[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_features(&huge, &p), Err(Error::DimensionOverflow { .. })));

        let mut ver = bytes;
        ver[4] = 9;
        assert!(matches!(decode_features(&ver, &p), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn labels_load_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        fs::write(&p, "walk\nwalk\nrun\n").unwrap();
        assert_eq!(load_labels(&p, &mapping()).unwrap(), vec![0, 0, 1]);

        fs::write(&p, "walk\njog\nrun\n").unwrap();
        match load_labels(&p, &mapping()) {
            Err(Error::UnknownClass { line, name, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(name, "jog");
            }
            other => panic!("{other:?}"),
        }
        fs::write(&p, "").unwrap();
        assert!(matches!(load_labels(&p, &mapping()), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn mapping_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mapping.txt");
        fs::write(&p, "1 run\n0 walk\n").unwrap();
        assert_eq!(ClassMapping::load(&p).unwrap(), mapping());
        fs::write(&p, "0 walk\n2 run\n").unwrap();
        assert!(ClassMapping::load(&p).is_err());
        assert!(ClassMapping::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn downsample() {
        let x = Tensor::from_vec(&[1, 10], (0..10).map(f64::from).collect()).unwrap();
        let s = SequenceSample::new("v", x, (0..10).map(|i| i % 3).collect()).unwrap();
        assert_eq!(temporal_downsample(&s, 1).unwrap(), s);
        let d = temporal_downsample(&s, 5).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.features.data(), &[0.0, 5.0]);
        assert_eq!(d.labels, vec![0, 2]);
        assert!(temporal_downsample(&s, 11).is_err());
        assert!(temporal_downsample(&s, 0).is_err());
    }

    fn small_config(noise: f64, seed: u64) -> SynthConfig {
        SynthConfig::with_random_structure(4, 5, 6, 120.0, 15.0, 1.0, noise, seed).unwrap()
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(&small_config(0.5, 3)).unwrap();
        let b = generate_synthetic(&small_config(0.5, 3)).unwrap();
        let c = generate_synthetic(&small_config(0.5, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn noiseless_data_is_separable_by_nearest_mean() {
        let cfg = small_config(0.0, 5);
        let (_, samples) = generate_synthetic(&cfg).unwrap();
        for s in &samples {
            for t in 0..s.len() {
                let nearest = (0..cfg.num_classes)
                    .min_by(|&a, &b| {
                        let da: f64 = (0..cfg.feature_dim)
                            .map(|k| (s.features.at2(k, t) - cfg.class_means[a][k]).powi(2))
                            .sum();
                        let db: f64 = (0..cfg.feature_dim)
                            .map(|k| (s.features.at2(k, t) - cfg.class_means[b][k]).powi(2))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                assert_eq!(nearest, s.labels[t]);
            }
        }
    }

    #[test]
    fn transition_frequencies_converge() {
        let mut cfg = small_config(0.1, 7);
        cfg.num_videos = 250;
        cfg.transition = vec![
            vec![0.0, 0.7, 0.2, 0.1],
            vec![0.5, 0.0, 0.25, 0.25],
            vec![0.1, 0.1, 0.0, 0.8],
            vec![0.3, 0.3, 0.4, 0.0],
        ];
        let (_, samples) = generate_synthetic(&cfg).unwrap();
        let mut counts = vec![vec![0.0; 4]; 4];
        for s in &samples {
            let segs = segments_from_labels(&s.labels);
            for w in segs.windows(2) {
                counts[w[0].class_id][w[1].class_id] += 1.0;
            }
        }
        for (i, row) in counts.iter().enumerate() {
            let n: f64 = row.iter().sum();
            let tv: f64 = row
                .iter()
                .zip(&cfg.transition[i])
                .map(|(c, p)| (c / n - p).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.05, "row {i}: tv {tv}");
        }
    }

    #[test]
    fn invalid_transition_rejected() {
        let mut cfg = small_config(0.1, 7);
        cfg.transition[0][1] += 0.5;
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(0.3, 9);
        let (m, samples) = generate_synthetic(&cfg).unwrap();
        let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
        write_dataset(dir.path(), &m, &samples, &[("all", ids)]).unwrap();
        let (m2, loaded) = load_split(dir.path(), "all").unwrap();
        assert_eq!(m2, m);
        for (a, b) in samples.iter().zip(&loaded) {
            assert_eq!(a.labels, b.labels);
            for (x, y) in a.features.data().iter().zip(b.features.data()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
