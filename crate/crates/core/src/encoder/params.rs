use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};

/// What a tensor is, which decides init, weight decay and quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    /// Linear weight `[out × in]`; quantized and weight-decayed.
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub kind: TensorKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Encoder layer the tensor belongs to; `None` for embeddings and head.
    pub layer: Option<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Tensors of one encoder layer, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerTensor {
    Wq,
    Bq,
    Wk,
    Bk,
    Wv,
    Bv,
    Wo,
    Bo,
    Ln1Gain,
    Ln1Bias,
    W1,
    B1,
    W2,
    B2,
    Ln2Gain,
    Ln2Bias,
}

pub const TENSORS_PER_LAYER: usize = 16;
pub const TOKEN_EMBEDDING: usize = 0;
pub const POSITION_EMBEDDING: usize = 1;

/// Flat storage map: every tensor's place in the single parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, kind, rows, cols, layer| {
            specs.push(TensorSpec {
                name,
                kind,
                rows,
                cols,
                offset,
                layer,
            });
            offset += rows * cols;
        };
        push("token_embedding".into(), TensorKind::Embedding, cfg.vocab_size, d, None);
        push("position_embedding".into(), TensorKind::Embedding, cfg.max_len, d, None);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let ly = Some(l);
            for (w, b) in [("wq", "bq"), ("wk", "bk"), ("wv", "bv"), ("wo", "bo")] {
                push(p(w), TensorKind::Weight, d, d, ly);
                push(p(b), TensorKind::Bias, 1, d, ly);
            }
            push(p("ln1.gamma"), TensorKind::NormGain, 1, d, ly);
            push(p("ln1.beta"), TensorKind::NormBias, 1, d, ly);
            push(p("ff.w1"), TensorKind::Weight, cfg.d_ff, d, ly);
            push(p("ff.b1"), TensorKind::Bias, 1, cfg.d_ff, ly);
            push(p("ff.w2"), TensorKind::Weight, d, cfg.d_ff, ly);
            push(p("ff.b2"), TensorKind::Bias, 1, d, ly);
            push(p("ln2.gamma"), TensorKind::NormGain, 1, d, ly);
            push(p("ln2.beta"), TensorKind::NormBias, 1, d, ly);
        }
        push("classifier.weight".into(), TensorKind::Weight, cfg.n_classes, d, None);
        push("classifier.bias".into(), TensorKind::Bias, 1, cfg.n_classes, None);
        Layout { specs, total: offset }
    }

    pub fn layer_id(&self, layer: usize, t: LayerTensor) -> usize {
        2 + layer * TENSORS_PER_LAYER + t as usize
    }

    pub fn classifier_weight(&self) -> usize {
        self.specs.len() - 2
    }

    pub fn classifier_bias(&self) -> usize {
        self.specs.len() - 1
    }

    /// Tensors frozen when the lowest `count` encoder layers are frozen.
    /// Any non-zero count also freezes both embeddings.
    pub fn frozen_mask(&self, count: usize) -> Vec<bool> {
        self.specs
            .iter()
            .map(|s| {
                count > 0
                    && match s.layer {
                        Some(l) => l < count,
                        None => s.kind == TensorKind::Embedding,
                    }
            })
            .collect()
    }
}

/// All learnable values of the encoder and classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ModelConfig) -> Self {
        let layout = Layout::new(&config);
        let data = vec![T::zero(); layout.total];
        ModelParams { config, layout, data }
    }

    /// Truncated-normal(σ = 0.02, cut at 2σ) matrices and embeddings, zero
    /// biases, unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid sigma");
        for spec in &p.layout.specs {
            let slice = &mut p.data[spec.range()];
            match spec.kind {
                TensorKind::Embedding | TensorKind::Weight => {
                    for v in slice.iter_mut() {
                        let z = loop {
                            let z = normal.sample(&mut rng);
                            if z.abs() <= 0.04 {
                                break z;
                            }
                        };
                        *v = T::of(z);
                    }
                }
                TensorKind::NormGain => slice.fill(T::one()),
                TensorKind::Bias | TensorKind::NormBias => slice.fill(T::zero()),
            }
        }
        p
    }

    pub fn tensor(&self, id: usize) -> &[T] {
        &self.data[self.layout.specs[id].range()]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut [T] {
        let r = self.layout.specs[id].range();
        &mut self.data[r]
    }

    pub fn layer(&self, layer: usize, t: LayerTensor) -> &[T] {
        self.tensor(self.layout.layer_id(layer, t))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_covers_storage_without_gaps() {
        let cfg = ModelConfig::desk();
        let layout = Layout::new(&cfg);
        let mut next = 0;
        for s in &layout.specs {
            assert_eq!(s.offset, next, "{}", s.name);
            next += s.len();
        }
        assert_eq!(next, layout.total);
        assert_eq!(layout.specs.len(), 2 + cfg.n_layers * TENSORS_PER_LAYER + 2);
        assert_eq!(layout.specs[layout.layer_id(1, LayerTensor::W2)].name, "layer1.ff.w2");
    }

    #[test]
    fn init_follows_kind() {
        let p: ModelParams<f32> = ModelParams::init(ModelConfig::tiny(), 3);
        for s in &p.layout.specs {
            let t = &p.data[s.range()];
            match s.kind {
                TensorKind::NormGain => assert!(t.iter().all(|&v| v == 1.0)),
                TensorKind::Bias | TensorKind::NormBias => assert!(t.iter().all(|&v| v == 0.0)),
                _ => assert!(t.iter().all(|&v| v.abs() <= 0.04) && t.iter().any(|&v| v != 0.0)),
            }
        }
        assert_eq!(p, ModelParams::init(ModelConfig::tiny(), 3));
    }

    #[test]
    fn freeze_mask_covers_embeddings_and_low_layers() {
        let layout = Layout::new(&ModelConfig::desk());
        let none = layout.frozen_mask(0);
        assert!(none.iter().all(|f| !f));
        let one = layout.frozen_mask(1);
        for (s, f) in layout.specs.iter().zip(&one) {
            let want = s.kind == TensorKind::Embedding && s.layer.is_none() || s.layer == Some(0);
            assert_eq!(*f, want, "{}", s.name);
        }
    }
}
