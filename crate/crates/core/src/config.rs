//! Flat `key = value` configuration files with `[section]` headers.
//!
//! Keys are unique across sections so each one doubles as a command-line
//! flag of the same name (`--lambda 0.15`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::{LossConfig, SmoothingKind};
use crate::model::ModelConfig;

/// Parsed `key = value` pairs in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    pub entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                reason: format!("line {}: expected key = value, got {raw:?}", n + 1),
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(KvFile { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Everything a run needs. Unset values take the defaults of the reference
/// architecture: 4 stages, 10 layers, 64 filters, lambda 0.15, tau 4,
/// learning rate 0.0005 and 50 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stages: usize,
    pub layers: usize,
    pub filters: usize,
    /// Inferred from the dataset mapping when `None`.
    pub classes: Option<usize>,
    /// Inferred from the feature files when `None`.
    pub input_dim: Option<usize>,
    pub dilations: Option<Vec<usize>>,
    pub passthrough: bool,
    pub dropout: f64,

    pub lambda: f64,
    pub tau: f64,
    pub smoothing: SmoothingKind,

    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,

    pub dataset: Option<PathBuf>,
    pub train_split: String,
    pub test_split: String,
    pub downsample: usize,

    pub out_dir: PathBuf,

    /// Class names left out of every metric.
    pub exclude: Vec<String>,
    pub group_by_duration: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stages: 4,
            layers: 10,
            filters: 64,
            classes: None,
            input_dim: None,
            dilations: None,
            passthrough: false,
            dropout: 0.5,
            lambda: 0.15,
            tau: 4.0,
            smoothing: SmoothingKind::TMse,
            lr: 0.0005,
            epochs: 50,
            seed: 1,
            dataset: None,
            train_split: "train".into(),
            test_split: "test".into(),
            downsample: 1,
            out_dir: PathBuf::from("runs/default"),
            exclude: Vec::new(),
            group_by_duration: false,
        }
    }
}

pub const RUN_KEYS: &[&str] = &[
    "stages",
    "layers",
    "filters",
    "classes",
    "input_dim",
    "dilations",
    "passthrough",
    "dropout",
    "lambda",
    "tau",
    "smoothing",
    "lr",
    "epochs",
    "seed",
    "dataset",
    "train_split",
    "test_split",
    "downsample",
    "out_dir",
    "exclude",
    "group_by_duration",
];

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(&KvFile::load(path)?)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, kv: &KvFile) -> Result<()> {
        for (k, v) in &kv.entries {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt = |v: &str| v.is_empty() || v == "auto";
        match key {
            "stages" => self.stages = parse_value(key, value)?,
            "layers" => self.layers = parse_value(key, value)?,
            "filters" => self.filters = parse_value(key, value)?,
            "classes" => self.classes = if opt(value) { None } else { Some(parse_value(key, value)?) },
            "input_dim" => self.input_dim = if opt(value) { None } else { Some(parse_value(key, value)?) },
            "dilations" => self.dilations = if opt(value) { None } else { Some(parse_list(key, value)?) },
            "passthrough" => self.passthrough = parse_bool(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "smoothing" => self.smoothing = value.parse()?,
            "lr" => self.lr = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "dataset" => self.dataset = if value.is_empty() { None } else { Some(value.into()) },
            "train_split" => self.train_split = value.into(),
            "test_split" => self.test_split = value.into(),
            "downsample" => self.downsample = parse_value(key, value)?,
            "out_dir" => self.out_dir = value.into(),
            "exclude" => self.exclude = parse_list(key, value)?,
            "group_by_duration" => self.group_by_duration = parse_bool(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            tau: self.tau,
            smoothing: self.smoothing,
        }
    }

    /// Model configuration once `classes` and `input_dim` are known.
    pub fn model(&self, classes: usize, input_dim: usize) -> Result<ModelConfig> {
        for (what, set, found) in [("classes", self.classes, classes), ("input_dim", self.input_dim, input_dim)] {
            if let Some(v) = set {
                if v != found {
                    return Err(Error::ConfigMismatch(format!("{what} = {v} but the data has {found}")));
                }
            }
        }
        let cfg = ModelConfig {
            stages: self.stages,
            layers: self.layers,
            filters: self.filters,
            classes,
            input_dim,
            dilations: self.dilations.clone(),
            feature_passthrough: self.passthrough,
            dropout: self.dropout,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss().validate()?;
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if self.downsample == 0 {
            return Err(Error::InvalidArgument("downsample must be >= 1".into()));
        }
        Ok(())
    }

    /// Fully resolved configuration in the file format.
    pub fn render(&self) -> String {
        let auto = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "stages = {}", self.stages);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "filters = {}", self.filters);
        let _ = writeln!(s, "classes = {}", auto(self.classes));
        let _ = writeln!(s, "input_dim = {}", auto(self.input_dim));
        let _ = writeln!(
            s,
            "dilations = {}",
            self.dilations.as_deref().map_or("auto".to_string(), join)
        );
        let _ = writeln!(s, "passthrough = {}", self.passthrough);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "\n[loss]");
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "smoothing = {}", self.smoothing);
        let _ = writeln!(s, "\n[optim]");
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(
            s,
            "dataset = {}",
            self.dataset.as_ref().map_or(String::new(), |p| p.display().to_string())
        );
        let _ = writeln!(s, "train_split = {}", self.train_split);
        let _ = writeln!(s, "test_split = {}", self.test_split);
        let _ = writeln!(s, "downsample = {}", self.downsample);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "\n[metrics]");
        let _ = writeln!(s, "exclude = {}", join(&self.exclude));
        let _ = writeln!(s, "group_by_duration = {}", self.group_by_duration);
        s
    }
}

/// Synthetic corpus description: generator parameters plus the test split size.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFileConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_videos: usize,
    pub test_videos: usize,
    pub mean_length: f64,
    pub mean_duration: f64,
    pub separation: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Optional explicit transition rows, `transition.<i> = p0 p1 ...`.
    pub transition: Vec<(usize, Vec<f64>)>,
}

impl Default for SynthFileConfig {
    fn default() -> Self {
        SynthFileConfig {
            num_classes: 8,
            feature_dim: 16,
            train_videos: 60,
            test_videos: 20,
            mean_length: 600.0,
            mean_duration: 60.0,
            separation: 1.0,
            noise_std: 1.0,
            seed: 7,
            transition: Vec::new(),
        }
    }
}

impl SynthFileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let kv = KvFile::load(path)?;
        let mut cfg = SynthFileConfig::default();
        for (k, v) in &kv.entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_classes" => self.num_classes = parse_value(key, value)?,
            "feature_dim" => self.feature_dim = parse_value(key, value)?,
            "train_videos" => self.train_videos = parse_value(key, value)?,
            "test_videos" => self.test_videos = parse_value(key, value)?,
            "mean_length" => self.mean_length = parse_value(key, value)?,
            "mean_duration" => self.mean_duration = parse_value(key, value)?,
            "separation" => self.separation = parse_value(key, value)?,
            "noise_std" => self.noise_std = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            k if k.starts_with("transition.") => {
                let row: usize = parse_value(key, &k["transition.".len()..])?;
                self.transition.retain(|(r, _)| *r != row);
                self.transition.push((row, parse_list(key, value)?));
            }
            other => return Err(Error::InvalidArgument(format!("unknown synth key {other:?}"))),
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<crate::data::SynthConfig> {
        let mut cfg = crate::data::SynthConfig::with_random_structure(
            self.num_classes,
            self.feature_dim,
            self.train_videos + self.test_videos,
            self.mean_length,
            self.mean_duration,
            self.separation,
            self.noise_std,
            self.seed,
        )?;
        for (row, probs) in &self.transition {
            if *row >= cfg.num_classes {
                return Err(Error::InvalidArgument(format!("transition row {row} out of range")));
            }
            cfg.transition[*row] = probs.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("[synth]\n");
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "feature_dim = {}", self.feature_dim);
        let _ = writeln!(s, "train_videos = {}", self.train_videos);
        let _ = writeln!(s, "test_videos = {}", self.test_videos);
        let _ = writeln!(s, "mean_length = {}", self.mean_length);
        let _ = writeln!(s, "mean_duration = {}", self.mean_duration);
        let _ = writeln!(s, "separation = {}", self.separation);
        let _ = writeln!(s, "noise_std = {}", self.noise_std);
        let _ = writeln!(s, "seed = {}", self.seed);
        let mut rows = self.transition.clone();
        rows.sort_by_key(|(r, _)| *r);
        for (r, p) in rows {
            let _ = writeln!(s, "transition.{r} = {}", join(&p));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.stages, c.layers, c.filters), (4, 10, 64));
        assert_eq!((c.lambda, c.tau, c.lr, c.epochs), (0.15, 4.0, 0.0005, 50));
    }

    #[test]
    fn parse_sections_and_comments() {
        let text = "[model]\nstages = 2 # two\nlayers=3\n\n[loss]\nsmoothing = kl\ndilations = 1,2,2\n";
        let kv = KvFile::parse(text, Path::new("x")).unwrap();
        let mut c = RunConfig::default();
        c.apply(&kv).unwrap();
        assert_eq!(c.stages, 2);
        assert_eq!(c.layers, 3);
        assert_eq!(c.smoothing, SmoothingKind::Kl);
        assert_eq!(c.dilations, Some(vec![1, 2, 2]));
        assert!(KvFile::parse("nonsense\n", Path::new("x")).is_err());
        assert!(c.set("colour", "red").is_err());
    }

    #[test]
    fn render_roundtrips() {
        let mut c = RunConfig::default();
        c.set("dataset", "data/x").unwrap();
        c.set("exclude", "bg,other").unwrap();
        c.set("classes", "5").unwrap();
        let kv = KvFile::parse(&c.render(), Path::new("r")).unwrap();
        let mut back = RunConfig::default();
        back.apply(&kv).unwrap();
        assert_eq!(back, c);

        let s = SynthFileConfig {
            transition: vec![(0, vec![0.0, 1.0]), (1, vec![1.0, 0.0])],
            num_classes: 2,
            ..SynthFileConfig::default()
        };
        let mut back = SynthFileConfig::default();
        for (k, v) in KvFile::parse(&s.render(), Path::new("s")).unwrap().entries {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, s);
    }

    #[test]
    fn model_config_checks_data() {
        let mut c = RunConfig::default();
        assert_eq!(c.model(5, 10).unwrap().classes, 5);
        c.classes = Some(4);
        assert!(matches!(c.model(5, 10), Err(Error::ConfigMismatch(_))));
    }
}
