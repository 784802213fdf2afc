//! Binary checkpoints: little-endian, `MSTCNCKP` magic, format version, model
//! configuration, then every parameter tensor in declaration order, followed
//! by the optional Adam state. Floats are stored as raw `f64` bits.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::optim::AdamState;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSTCNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub optimizer: Option<AdamState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u32(d as u32);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptCheckpoint {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated at byte {} (need {n} more, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn tensor(&mut self, expected: &[usize], name: &str) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        let shape = (0..rank.min(8))
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != expected {
            return Err(self.corrupt(format!("{name}: stored shape {shape:?}, expected {expected:?}")));
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Tensor::from_vec(&shape, data).map_err(|e| self.corrupt(format!("{name}: {e}")))
    }
}

pub fn encode_checkpoint(model: &ModelParams, optimizer: Option<&AdamState>) -> Result<Vec<u8>> {
    model.validate()?;
    let cfg = &model.config;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    for v in [cfg.stages, cfg.layers, cfg.filters, cfg.classes, cfg.input_dim] {
        w.u32(v as u32);
    }
    w.u8(cfg.feature_passthrough as u8);
    w.f64(cfg.dropout);
    match &cfg.dilations {
        None => w.u32(0),
        Some(d) => {
            w.u32(d.len() as u32);
            d.iter().for_each(|&x| w.u32(x as u32));
        }
    }
    for (_, t) in model.tensors() {
        w.tensor(t);
    }
    match optimizer {
        None => w.u8(0),
        Some(st) => {
            if !st.matches(model) {
                return Err(Error::InvalidShape("optimizer state does not match model".into()));
            }
            w.u8(1);
            w.u64(st.step);
            for v in [st.lr, st.beta1, st.beta2, st.eps] {
                w.f64(v);
            }
            st.m.iter().chain(&st.v).for_each(|t| w.tensor(t));
        }
    }
    Ok(w.0)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    r.pos = 8;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let passthrough = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(r.corrupt(format!("bad passthrough flag {b}"))),
    };
    let dropout = r.f64()?;
    let n_dil = r.u32()? as usize;
    if n_dil > 0 && n_dil != dims[1] {
        return Err(r.corrupt(format!("{n_dil} dilations for {} layers", dims[1])));
    }
    let dilations = if n_dil == 0 {
        None
    } else {
        Some((0..n_dil).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?)
    };
    let config = ModelConfig {
        stages: dims[0],
        layers: dims[1],
        filters: dims[2],
        classes: dims[3],
        input_dim: dims[4],
        dilations,
        feature_passthrough: passthrough,
        dropout,
    };
    config.validate().map_err(|e| r.corrupt(e.to_string()))?;
    // guard the allocation below against garbage dimensions
    let max_params = bytes.len() / 8 + 1;
    let estimate = config.stages
        * (config.layers * 4 * config.filters * config.filters + config.filters * (config.input_dim + config.classes * 2));
    if estimate > max_params.saturating_mul(4) {
        return Err(r.corrupt(format!("configuration {config:?} exceeds file size")));
    }

    let mut model = ModelParams::zeros(&config)?;
    for (name, t) in model.tensors_mut() {
        *t = r.tensor(t.shape(), &name)?;
    }
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let mut st = AdamState::new(&model, 0.0);
            st.step = r.u64()?;
            st.lr = r.f64()?;
            st.beta1 = r.f64()?;
            st.beta2 = r.f64()?;
            st.eps = r.f64()?;
            let names: Vec<(String, Vec<usize>)> = model
                .tensors()
                .iter()
                .map(|(n, t)| (n.clone(), t.shape().to_vec()))
                .collect();
            for (i, (n, s)) in names.iter().enumerate() {
                st.m[i] = r.tensor(s, &format!("adam.m.{n}"))?;
            }
            for (i, (n, s)) in names.iter().enumerate() {
                st.v[i] = r.tensor(s, &format!("adam.v.{n}"))?;
            }
            Some(st)
        }
        b => return Err(r.corrupt(format!("bad optimizer flag {b}"))),
    };
    if r.pos != bytes.len() {
        return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { model, optimizer })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ModelParams, optimizer: Option<&AdamState>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, optimizer)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Loads a checkpoint and requires its configuration to equal `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(&path)?;
    check_config(&ckpt.model.config, expected, path.as_ref())?;
    Ok(ckpt)
}

fn check_config(found: &ModelConfig, expected: &ModelConfig, path: &Path) -> Result<()> {
    let fields = [
        ("stages", found.stages, expected.stages),
        ("layers", found.layers, expected.layers),
        ("filters", found.filters, expected.filters),
        ("classes", found.classes, expected.classes),
        ("input_dim", found.input_dim, expected.input_dim),
    ];
    for (name, a, b) in fields {
        if a != b {
            return Err(Error::ConfigMismatch(format!(
                "{}: checkpoint has {name} = {a}, expected {b}",
                PathBuf::from(path).display()
            )));
        }
    }
    if found.dilations() != expected.dilations() || found.feature_passthrough != expected.feature_passthrough {
        return Err(Error::ConfigMismatch(format!(
            "{}: dilation schedule or feature passthrough differs",
            path.display()
        )));
    }
    Ok(())
}
