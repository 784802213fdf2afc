//! Single-stage and multi-stage temporal convolutional networks.
//!
//! A stage maps a `(D_in, T)` input through a 1x1 projection to `D` channels,
//! `L` dilated residual layers and a softmax head to `(C, T)` probabilities.
//! The multi-stage model chains stages, feeding each stage the previous
//! stage's probabilities (optionally concatenated with the raw features).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    classifier_head_backward, classifier_head_forward, conv1x1_backward, conv1x1_forward,
    dilated_residual_layer_forward, layer_backward, ClassifierHeadParams, Conv1x1Params,
    DilatedResidualLayerParams, ResidualLayerCache,
};
use crate::tensor::Tensor;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub stages: usize,
    pub layers: usize,
    pub filters: usize,
    pub classes: usize,
    pub input_dim: usize,
    /// Explicit per-layer dilations; `None` means `1, 2, 4, ..., 2^(L-1)`.
    pub dilations: Option<Vec<usize>>,
    /// Feed raw features to stages 2..S alongside the probabilities.
    pub feature_passthrough: bool,
    pub dropout: f64,
}

impl ModelConfig {
    /// Four stages of ten layers with 64 filters and dropout 0.5.
    pub fn new(input_dim: usize, classes: usize) -> Self {
        ModelConfig {
            stages: 4,
            layers: 10,
            filters: 64,
            classes,
            input_dim,
            dilations: None,
            feature_passthrough: false,
            dropout: 0.5,
        }
    }

    pub fn dilations(&self) -> Vec<usize> {
        match &self.dilations {
            Some(d) => d.clone(),
            None => (0..self.layers).map(|l| 1usize << l).collect(),
        }
    }

    /// Input channel count of stage `s` (0-based).
    pub fn stage_input_dim(&self, s: usize) -> usize {
        match (s, self.feature_passthrough) {
            (0, _) => self.input_dim,
            (_, false) => self.classes,
            (_, true) => self.classes + self.input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.stages == 0 {
            return bad("at least one stage is required".into());
        }
        if self.layers == 0 || self.filters == 0 || self.input_dim == 0 {
            return bad(format!("layers, filters and input_dim must be positive: {self:?}"));
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if let Some(d) = &self.dilations {
            if d.len() != self.layers {
                return bad(format!("{} dilations given for {} layers", d.len(), self.layers));
            }
            if d.contains(&0) {
                return bad("dilations must be positive".into());
            }
        }
        Ok(())
    }
}

/// Dilations `1, 2, ..., 2^(period-1)` repeated until `layers` entries, the
/// schedule of a deep single stage that restarts from 1.
pub fn wrapping_dilations(layers: usize, period: usize) -> Vec<usize> {
    (0..layers).map(|l| 1usize << (l % period.max(1))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub input_proj: Conv1x1Params,
    pub layers: Vec<DilatedResidualLayerParams>,
    pub head: ClassifierHeadParams,
}

impl StageParams {
    pub fn zeros(d_in: usize, filters: usize, classes: usize, dilations: &[usize]) -> Result<Self> {
        Ok(StageParams {
            input_proj: Conv1x1Params::zeros(d_in, filters)?,
            layers: dilations
                .iter()
                .map(|&d| DilatedResidualLayerParams::zeros(filters, d))
                .collect::<Result<_>>()?,
            head: ClassifierHeadParams::zeros(filters, classes)?,
        })
    }

    pub fn init(
        d_in: usize,
        filters: usize,
        classes: usize,
        dilations: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        StageParams {
            input_proj: Conv1x1Params::init(d_in, filters, rng),
            layers: dilations
                .iter()
                .map(|&d| DilatedResidualLayerParams::init(filters, d, rng))
                .collect(),
            head: ClassifierHeadParams::init(filters, classes, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_proj.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    fn zeros_like(&self) -> StageParams {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("input_proj.weight".to_string(), &self.input_proj.weight),
            ("input_proj.bias".to_string(), &self.input_proj.bias),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("layer{}.{name}", l + 1), t));
            }
        }
        out.push(("head.w".to_string(), &self.head.w));
        out.push(("head.b".to_string(), &self.head.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("input_proj.weight".to_string(), &mut self.input_proj.weight),
            ("input_proj.bias".to_string(), &mut self.input_proj.bias),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("layer{}.{name}", l + 1), t));
            }
        }
        out.push(("head.w".to_string(), &mut self.head.w));
        out.push(("head.b".to_string(), &mut self.head.b));
        out
    }
}

/// Saved activations of one stage.
#[derive(Debug, Clone)]
pub struct StageCache {
    input: Tensor,
    layers: Vec<ResidualLayerCache>,
    last_hidden: Tensor,
    probs: Tensor,
}

fn dropout_seed(seed: u64, stage: usize, layer: usize) -> u64 {
    // splitmix64 finaliser over (seed, stage, layer)
    let mut z = seed
        .wrapping_add((stage as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((layer as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stage_forward(
    input: &Tensor,
    stage: &StageParams,
    stage_index: usize,
    dropout: f64,
    training: bool,
    seed: u64,
) -> Result<(Tensor, StageCache)> {
    let (d_in, _) = input.dims2()?;
    if d_in != stage.input_dim() {
        return Err(Error::InvalidShape(format!(
            "stage {} expects {} input channels, got {d_in}",
            stage_index + 1,
            stage.input_dim()
        )));
    }
    let mut h = conv1x1_forward(input, &stage.input_proj)?;
    let mut caches = Vec::with_capacity(stage.layers.len());
    for (l, layer) in stage.layers.iter().enumerate() {
        let (next, cache) = dilated_residual_layer_forward(
            &h,
            layer,
            dropout,
            training,
            dropout_seed(seed, stage_index, l),
        )?;
        caches.push(cache);
        h = next;
    }
    let probs = classifier_head_forward(&h, &stage.head)?;
    if !probs.all_finite() {
        return Err(Error::Numeric(format!(
            "non-finite probabilities in stage {}",
            stage_index + 1
        )));
    }
    Ok((
        probs.clone(),
        StageCache {
            input: input.clone(),
            layers: caches,
            last_hidden: h,
            probs,
        },
    ))
}

/// Returns the gradient with respect to the stage input.
fn stage_backward(
    cache: &StageCache,
    stage: &StageParams,
    grad_probs: &Tensor,
    grads: &mut StageParams,
) -> Result<Tensor> {
    let mut g = classifier_head_backward(
        &cache.last_hidden,
        &cache.probs,
        &stage.head,
        grad_probs,
        &mut grads.head,
    )?;
    for ((layer, lc), lg) in stage
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        g = layer_backward(lc, layer, &g, lg)?;
    }
    conv1x1_backward(&cache.input, &stage.input_proj, &g, &mut grads.input_proj)
}

/// Single-stage TCN forward pass; returns `(C, T)` probabilities.
pub fn ss_tcn_forward(
    features: &Tensor,
    stage: &StageParams,
    dropout: f64,
    training: bool,
    seed: u64,
) -> Result<(Tensor, StageCache)> {
    stage_forward(features, stage, 0, dropout, training, seed)
}

/// Learnable weights of the full network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub stages: Vec<StageParams>,
}

impl ModelParams {
    /// Seeded uniform `±sqrt(1/fan_in)` initialisation.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dil = config.dilations();
        let stages = (0..config.stages)
            .map(|s| {
                StageParams::init(
                    config.stage_input_dim(s),
                    config.filters,
                    config.classes,
                    &dil,
                    &mut rng,
                )
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            stages,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let dil = config.dilations();
        let stages = (0..config.stages)
            .map(|s| {
                StageParams::zeros(config.stage_input_dim(s), config.filters, config.classes, &dil)
            })
            .collect::<Result<_>>()?;
        Ok(ModelParams {
            config: config.clone(),
            stages,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config.clone(),
            stages: self.stages.iter().map(StageParams::zeros_like).collect(),
        }
    }

    /// Checks the structural invariants tying `stages` to `config`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.stages.len() != self.config.stages {
            return Err(Error::ConfigMismatch(format!(
                "{} stages stored, config says {}",
                self.stages.len(),
                self.config.stages
            )));
        }
        let dil = self.config.dilations();
        for (s, st) in self.stages.iter().enumerate() {
            let expected = StageParams::zeros(
                self.config.stage_input_dim(s),
                self.config.filters,
                self.config.classes,
                &dil,
            )?;
            let shapes_match = st.layers.len() == expected.layers.len()
                && st.layers.iter().zip(&expected.layers).all(|(a, b)| a.dilation == b.dilation)
                && st
                    .tensors()
                    .iter()
                    .zip(expected.tensors())
                    .all(|((_, a), (_, b))| a.shape() == b.shape());
            if !shapes_match {
                return Err(Error::ConfigMismatch(format!(
                    "stage {} does not match config {:?}",
                    s + 1,
                    self.config
                )));
            }
        }
        Ok(())
    }

    /// All parameter tensors with qualified names, in declaration order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        self.stages
            .iter()
            .enumerate()
            .flat_map(|(s, st)| {
                st.tensors()
                    .into_iter()
                    .map(move |(n, t)| (format!("stage{}.{n}", s + 1), t))
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.stages
            .iter_mut()
            .enumerate()
            .flat_map(|(s, st)| {
                st.tensors_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("stage{}.{n}", s + 1), t))
            })
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }
}

/// Activations of every stage, consumed by [`ms_tcn_backward`].
#[derive(Debug, Clone)]
pub struct ModelCache {
    stages: Vec<StageCache>,
}

/// Multi-stage forward pass. Returns the probability tensor of every stage,
/// first to last.
pub fn ms_tcn_forward(
    features: &Tensor,
    model: &ModelParams,
    training: bool,
    seed: u64,
) -> Result<(Vec<Tensor>, ModelCache)> {
    let cfg = &model.config;
    if model.stages.is_empty() {
        return Err(Error::InvalidArgument("model has no stages".into()));
    }
    let (d_in, _) = features.dims2()?;
    if d_in != cfg.input_dim {
        return Err(Error::InvalidShape(format!(
            "model expects {}-dimensional features, got {d_in}",
            cfg.input_dim
        )));
    }
    let mut outputs = Vec::with_capacity(model.stages.len());
    let mut caches = Vec::with_capacity(model.stages.len());
    for (s, stage) in model.stages.iter().enumerate() {
        let input = match outputs.last() {
            None => features.clone(),
            Some(prev) if cfg.feature_passthrough => Tensor::concat_rows(prev, features)?,
            Some(prev) => Tensor::clone(prev),
        };
        let (probs, cache) = stage_forward(&input, stage, s, cfg.dropout, training, seed)?;
        outputs.push(probs);
        caches.push(cache);
    }
    Ok((outputs, ModelCache { stages: caches }))
}

/// Adjoint of [`ms_tcn_forward`]: gradients of the summed per-stage losses
/// given each loss's gradient with respect to its stage's probabilities.
pub fn ms_tcn_backward(
    cache: &ModelCache,
    model: &ModelParams,
    per_stage_loss_grads: &[Tensor],
) -> Result<ModelParams> {
    if per_stage_loss_grads.len() != model.stages.len() || cache.stages.len() != model.stages.len() {
        return Err(Error::InvalidShape(format!(
            "{} loss gradients / {} cached stages for {} stages",
            per_stage_loss_grads.len(),
            cache.stages.len(),
            model.stages.len()
        )));
    }
    let classes = model.config.classes;
    let mut grads = model.zeros_like();
    let mut carried: Option<Tensor> = None;
    for s in (0..model.stages.len()).rev() {
        let mut g = per_stage_loss_grads[s].clone();
        g.ensure_shape(cache.stages[s].probs.shape(), "stage loss gradient")?;
        if let Some(c) = carried.take() {
            g.add_assign(&c)?;
        }
        let grad_in = stage_backward(&cache.stages[s], &model.stages[s], &g, &mut grads.stages[s])?;
        if s > 0 {
            carried = Some(if model.config.feature_passthrough {
                grad_in.take_rows(classes)?
            } else {
                grad_in
            });
        }
    }
    Ok(grads)
}

/// Per-frame argmax over classes.
pub fn argmax_labels(probs: &Tensor) -> Result<Vec<usize>> {
    let (c, t_len) = probs.dims2()?;
    Ok((0..t_len)
        .map(|t| {
            let mut best = 0;
            for k in 1..c {
                if probs.at2(k, t) > probs.at2(best, t) {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Inference-mode prediction from the output of `stage` (1-based; `None`
/// selects the last stage).
pub fn predict(features: &Tensor, model: &ModelParams, stage: Option<usize>) -> Result<Vec<usize>> {
    let (outputs, _) = ms_tcn_forward(features, model, false, 0)?;
    let idx = match stage {
        None => outputs.len(),
        Some(s) if (1..=outputs.len()).contains(&s) => s,
        Some(s) => {
            return Err(Error::InvalidArgument(format!(
                "stage {s} out of range 1..={}",
                outputs.len()
            )))
        }
    };
    argmax_labels(&outputs[idx - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(stages: usize) -> ModelConfig {
        ModelConfig {
            stages,
            layers: 3,
            filters: 8,
            classes: 4,
            input_dim: 6,
            dilations: None,
            feature_passthrough: false,
            dropout: 0.5,
        }
    }

    fn features(d: usize, t: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Tensor::zeros(&[d, t]).unwrap();
        x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        x
    }

    #[test]
    fn default_config() {
        let c = ModelConfig::new(2048, 19);
        assert_eq!((c.stages, c.layers, c.filters), (4, 10, 64));
        assert_eq!(c.dilations(), vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512]);
        for s in 1..=5 {
            let mut c = tiny(s);
            c.filters = 4;
            assert_eq!(ModelParams::init(&c, 0).unwrap().stages.len(), s);
        }
    }

    #[test]
    fn wrapping_schedule() {
        let d = wrapping_dilations(48, 10);
        assert_eq!(d.len(), 48);
        assert_eq!(d[9], 512);
        assert_eq!(d[10], 1);
        assert_eq!(d[47], 128);
    }

    #[test]
    fn later_stages_only_see_probabilities() {
        let m = ModelParams::init(&tiny(3), 1).unwrap();
        assert_eq!(m.stages[0].input_dim(), 6);
        assert!(m.stages[1..].iter().all(|s| s.input_dim() == 4));
        let mut c = tiny(3);
        c.feature_passthrough = true;
        let m = ModelParams::init(&c, 1).unwrap();
        assert!(m.stages[1..].iter().all(|s| s.input_dim() == 10));
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let m = ModelParams::zeros(&tiny(4)).unwrap();
        let (outs, _) = ms_tcn_forward(&features(6, 10, 2), &m, true, 3).unwrap();
        assert_eq!(outs.len(), 4);
        for o in outs {
            assert!(o.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn single_frame_sequence() {
        let m = ModelParams::init(&tiny(2), 4).unwrap();
        let (outs, _) = ms_tcn_forward(&features(6, 1, 5), &m, false, 0).unwrap();
        assert_eq!(outs[1].shape(), &[4, 1]);
    }

    #[test]
    fn single_stage_matches_ss_tcn() {
        let m = ModelParams::init(&tiny(1), 6).unwrap();
        let x = features(6, 20, 7);
        let (outs, _) = ms_tcn_forward(&x, &m, true, 8).unwrap();
        let (p, _) = ss_tcn_forward(&x, &m.stages[0], 0.5, true, 8).unwrap();
        assert_eq!(outs[0], p);
    }

    #[test]
    fn feature_dimension_mismatch() {
        let m = ModelParams::init(&tiny(2), 6).unwrap();
        assert!(matches!(
            ms_tcn_forward(&features(5, 20, 7), &m, false, 0),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn zero_loss_grads_give_zero_param_grads() {
        let m = ModelParams::init(&tiny(2), 9).unwrap();
        let (outs, cache) = ms_tcn_forward(&features(6, 16, 10), &m, true, 1).unwrap();
        let zeros: Vec<_> = outs.iter().map(Tensor::zeros_like).collect();
        let g = ms_tcn_backward(&cache, &m, &zeros).unwrap();
        assert!(g.tensors().iter().all(|(_, t)| t.max_abs() == 0.0));
    }

    #[test]
    fn stage_outputs_are_distributions() {
        let m = ModelParams::init(&tiny(3), 11).unwrap();
        let (outs, _) = ms_tcn_forward(&features(6, 40, 12), &m, true, 2).unwrap();
        for o in &outs {
            for t in 0..40 {
                let s: f64 = (0..4).map(|c| o.at2(c, t)).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn predict_stage_selection() {
        let m = ModelParams::init(&tiny(2), 13).unwrap();
        let x = features(6, 12, 14);
        assert_eq!(predict(&x, &m, None).unwrap(), predict(&x, &m, Some(2)).unwrap());
        assert!(predict(&x, &m, Some(3)).is_err());
        assert!(predict(&x, &m, Some(0)).is_err());
    }
}
