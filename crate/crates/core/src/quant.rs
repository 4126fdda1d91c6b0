//! Post-training INT8 dynamic quantization.
//!
//! Linear weights get one symmetric scale per output row. Activations are
//! quantized on the fly, one scale per activation row, right before each
//! quantized matmul; products accumulate in `i32` and are rescaled by
//! `scale_a · scale_w`. Embeddings, layer norms and biases stay `f32`.
//!
//! Quantized checkpoint layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `MDQ8` |
//! | 4     | version (u32, currently 1) |
//! | 32    | model config, as in the float checkpoint |
//! | 4     | tensor count (u32) |
//! | per tensor | kind tag (u8: 0 = f32, 1 = int8), rows (u32), cols (u32), then either `rows·cols` f32 or `rows` f32 scales followed by `rows·cols` i8 |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::checkpoint::{self, put_u32, write_config, CheckpointError, Reader};
use crate::encoder::model::check_seq;
use crate::encoder::ops;
use crate::encoder::params::{LayerTensor as L, Layout, TensorKind, POSITION_EMBEDDING, TOKEN_EMBEDDING};
use crate::encoder::{EncoderError, Logits, ModelConfig, ModelParams};
use crate::tokenizer::TokenSeq;

pub const MAGIC: &[u8; 4] = b"MDQ8";
pub const VERSION: u32 = 1;
const TAG_F32: u8 = 0;
const TAG_INT8: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("non-finite weight at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("matrix of {len} values is not {rows} rows of {cols}")]
    Shape { len: usize, rows: usize, cols: usize },
}

/// Row-major int8 matrix with one symmetric scale per row (zero point 0).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub rows: usize,
    pub cols: usize,
    pub q: Vec<i8>,
    pub scales: Vec<f32>,
}

impl QuantTensor {
    pub fn row(&self, r: usize) -> &[i8] {
        &self.q[r * self.cols..(r + 1) * self.cols]
    }

    /// Serialized payload: one byte per value plus an f32 scale per row.
    pub fn byte_size(&self) -> usize {
        self.q.len() + 4 * self.scales.len()
    }
}

/// Symmetric quantization of one row: scale and int8 codes.
fn quantize_row(row: &[f32], out: &mut Vec<i8>) -> f32 {
    let max = row.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let scale = if max == 0.0 { 1.0 } else { max / 127.0 };
    // f32::round rounds half away from zero
    out.extend(row.iter().map(|&v| (v / scale).round().clamp(-127.0, 127.0) as i8));
    scale
}

pub fn quantize_tensor(w: &[f32], rows: usize, cols: usize) -> Result<QuantTensor, QuantError> {
    if w.len() != rows * cols {
        return Err(QuantError::Shape { len: w.len(), rows, cols });
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite {
            row: i / cols,
            col: i % cols,
        });
    }
    let mut q = Vec::with_capacity(w.len());
    let scales = (0..rows).map(|r| quantize_row(&w[r * cols..(r + 1) * cols], &mut q)).collect();
    Ok(QuantTensor { rows, cols, q, scales })
}

pub fn dequantize(qt: &QuantTensor) -> Vec<f32> {
    (0..qt.rows)
        .flat_map(|r| qt.row(r).iter().map(move |&v| v as f32 * qt.scales[r]))
        .collect()
}

/// One stored tensor of a [`QuantModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Vec<f32>),
    Int8(QuantTensor),
}

/// Serialized-size accounting for a quantized model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    /// Float checkpoint file size.
    pub f32_file_bytes: usize,
    /// Quantized checkpoint file size.
    pub quant_file_bytes: usize,
    pub file_ratio: f64,
    /// Linear weights as f32 (4 bytes per value).
    pub covered_f32_bytes: usize,
    /// The same weights as int8 codes plus per-row f32 scales.
    pub covered_quant_bytes: usize,
    pub covered_ratio: f64,
}

/// Immutable INT8 model; every `Weight` tensor is quantized.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantModel {
    pub config: ModelConfig,
    pub layout: Layout,
    pub tensors: Vec<StoredTensor>,
}

impl QuantModel {
    fn f32(&self, id: usize) -> &[f32] {
        match &self.tensors[id] {
            StoredTensor::F32(v) => v,
            StoredTensor::Int8(_) => unreachable!("tensor {id} is quantized"),
        }
    }

    fn int8(&self, id: usize) -> &QuantTensor {
        match &self.tensors[id] {
            StoredTensor::Int8(q) => q,
            StoredTensor::F32(_) => unreachable!("tensor {id} is not quantized"),
        }
    }

    fn layer_id(&self, layer: usize, t: L) -> usize {
        self.layout.layer_id(layer, t)
    }

    /// Float model with every quantized weight replaced by its dequantized value.
    pub fn dequantized(&self) -> ModelParams {
        let mut p = ModelParams::<f32>::zeros(self.config.clone());
        for (id, t) in self.tensors.iter().enumerate() {
            let v = match t {
                StoredTensor::F32(v) => v.clone(),
                StoredTensor::Int8(q) => dequantize(q),
            };
            p.tensor_mut(id).copy_from_slice(&v);
        }
        p
    }

    pub fn covered_bytes(&self) -> (usize, usize) {
        self.tensors.iter().fold((0, 0), |(f, q), t| match t {
            StoredTensor::Int8(qt) => (f + 4 * qt.q.len(), q + qt.byte_size()),
            StoredTensor::F32(_) => (f, q),
        })
    }
}

/// Quantizes every linear weight matrix of `params`.
pub fn quantize_model(params: &ModelParams) -> Result<(QuantModel, SizeReport), QuantError> {
    let tensors = params
        .layout
        .specs
        .iter()
        .enumerate()
        .map(|(id, spec)| {
            let data = params.tensor(id);
            Ok(match spec.kind {
                TensorKind::Weight => StoredTensor::Int8(quantize_tensor(data, spec.rows, spec.cols)?),
                _ => StoredTensor::F32(data.to_vec()),
            })
        })
        .collect::<Result<Vec<_>, QuantError>>()?;
    let model = QuantModel {
        config: params.config.clone(),
        layout: params.layout.clone(),
        tensors,
    };
    let report = size_report(params, &model);
    Ok((model, report))
}

pub fn size_report(params: &ModelParams, model: &QuantModel) -> SizeReport {
    let f32_file_bytes = checkpoint::to_bytes(params).len();
    let quant_file_bytes = to_bytes(model).len();
    let (covered_f32_bytes, covered_quant_bytes) = model.covered_bytes();
    SizeReport {
        f32_file_bytes,
        quant_file_bytes,
        file_ratio: f32_file_bytes as f64 / quant_file_bytes as f64,
        covered_f32_bytes,
        covered_quant_bytes,
        covered_ratio: covered_f32_bytes as f64 / covered_quant_bytes.max(1) as f64,
    }
}

/// Quantized `x[rows × n_in] · Wᵀ + b`: each activation row gets its own
/// scale, dot products accumulate in `i32`.
pub fn qlinear(x: &[f32], w: &QuantTensor, b: &[f32]) -> Vec<f32> {
    let n_in = w.cols;
    let rows = x.len() / n_in;
    let mut out = Vec::with_capacity(rows * w.rows);
    let mut xq = Vec::with_capacity(n_in);
    for r in 0..rows {
        xq.clear();
        let sa = quantize_row(&x[r * n_in..(r + 1) * n_in], &mut xq);
        for (o, (&sw, &bias)) in w.scales.iter().zip(b).enumerate() {
            let acc: i32 = xq.iter().zip(w.row(o)).map(|(&a, &c)| a as i32 * c as i32).sum();
            out.push(acc as f32 * (sa * sw) + bias);
        }
    }
    out
}

/// Eval-mode logits of the quantized model for one sequence.
pub fn qlogits(model: &QuantModel, seq: &TokenSeq) -> Result<Logits, EncoderError> {
    let cfg = &model.config;
    let n = check_seq(cfg, seq)?;
    let (d, heads) = (cfg.d_model, cfg.n_heads);
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let keep = vec![true; n];

    let tok = model.f32(TOKEN_EMBEDDING);
    let pos = model.f32(POSITION_EMBEDDING);
    let mut x = Vec::with_capacity(n * d);
    for (i, &id) in seq.ids[..n].iter().enumerate() {
        let t = &tok[id as usize * d..(id as usize + 1) * d];
        x.extend(t.iter().zip(&pos[i * d..(i + 1) * d]).map(|(a, b)| a + b));
    }

    for l in 0..cfg.n_layers {
        let lin = |x: &[f32], w: L, b: L| qlinear(x, model.int8(model.layer_id(l, w)), model.f32(model.layer_id(l, b)));
        let f = |t| model.f32(model.layer_id(l, t));
        let q = lin(&x, L::Wq, L::Bq);
        let k = lin(&x, L::Wk, L::Bk);
        let v = lin(&x, L::Wv, L::Bv);
        let mut ctx = vec![0.0f32; n * d];
        let mut row = vec![0.0f32; n];
        for h in 0..heads {
            let hs = h * dh..(h + 1) * dh;
            for i in 0..n {
                let qi = &q[i * d + hs.start..i * d + hs.end];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = scale * ops::dot(qi, &k[j * d + hs.start..j * d + hs.end]);
                }
                ops::masked_softmax(&mut row, &keep);
                let ci = &mut ctx[i * d + hs.start..i * d + hs.end];
                for (j, &p) in row.iter().enumerate() {
                    ops::axpy(p, &v[j * d + hs.start..j * d + hs.end], ci);
                }
            }
        }
        let attn = lin(&ctx, L::Wo, L::Bo);
        let sum1: Vec<f32> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
        let (h1, _) = ops::layer_norm(&sum1, f(L::Ln1Gain), f(L::Ln1Bias));
        let act: Vec<f32> = lin(&h1, L::W1, L::B1).into_iter().map(ops::gelu).collect();
        let ff = lin(&act, L::W2, L::B2);
        let sum2: Vec<f32> = h1.iter().zip(&ff).map(|(a, b)| a + b).collect();
        x = ops::layer_norm(&sum2, f(L::Ln2Gain), f(L::Ln2Bias)).0;
    }

    let out = qlinear(
        &x[..d],
        model.int8(model.layout.classifier_weight()),
        model.f32(model.layout.classifier_bias()),
    );
    Ok([out[0], out[1]])
}

/// Batched [`qlogits`].
pub fn qforward(model: &QuantModel, batch: &[TokenSeq]) -> Result<Vec<Logits>, EncoderError> {
    if batch.is_empty() {
        return Err(EncoderError::EmptyBatch);
    }
    batch.iter().map(|s| qlogits(model, s)).collect()
}

pub fn to_bytes(model: &QuantModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    write_config(&mut out, &model.config);
    put_u32(&mut out, model.tensors.len());
    for (t, spec) in model.tensors.iter().zip(&model.layout.specs) {
        match t {
            StoredTensor::F32(v) => {
                out.push(TAG_F32);
                put_u32(&mut out, spec.rows);
                put_u32(&mut out, spec.cols);
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
            StoredTensor::Int8(q) => {
                out.push(TAG_INT8);
                put_u32(&mut out, q.rows);
                put_u32(&mut out, q.cols);
                q.scales.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                out.extend(q.q.iter().map(|&v| v as u8));
            }
        }
    }
    out
}

pub fn from_bytes(buf: &[u8]) -> Result<QuantModel, CheckpointError> {
    let corrupt = |m: String| CheckpointError::Corrupt(m);
    let mut r = Reader { buf, pos: 0 };
    let config = r.header(MAGIC, VERSION)?;
    let layout = Layout::new(&config);
    let count = r.u32()? as usize;
    if count != layout.specs.len() {
        return Err(corrupt(format!("{count} tensors stored, config implies {}", layout.specs.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for spec in &layout.specs {
        let tag = r.u8()?;
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if (rows, cols) != (spec.rows, spec.cols) {
            return Err(corrupt(format!(
                "{}: stored {rows}×{cols}, expected {}×{}",
                spec.name, spec.rows, spec.cols
            )));
        }
        let expected = if spec.kind == TensorKind::Weight { TAG_INT8 } else { TAG_F32 };
        if tag != expected {
            return Err(corrupt(format!("{}: kind tag {tag}, expected {expected}", spec.name)));
        }
        tensors.push(if tag == TAG_INT8 {
            let scales = r.f32s(rows)?;
            if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(corrupt(format!("{}: non-positive scale", spec.name)));
            }
            let q: Vec<i8> = r.take(rows * cols)?.iter().map(|&b| b as i8).collect();
            if q.contains(&i8::MIN) {
                return Err(corrupt(format!("{}: code -128 outside [-127, 127]", spec.name)));
            }
            StoredTensor::Int8(QuantTensor { rows, cols, q, scales })
        } else {
            StoredTensor::F32(r.f32s(rows * cols)?)
        });
    }
    r.finish()?;
    Ok(QuantModel { config, layout, tensors })
}

pub fn write_quant_checkpoint(model: &QuantModel, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(&to_bytes(model))?;
    Ok(())
}

pub fn read_quant_checkpoint(mut r: impl Read) -> Result<QuantModel, CheckpointError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoder::{logits, predict_proba};

    #[test]
    fn hand_computed_row() {
        let qt = quantize_tensor(&[-1.0, 0.5, 1.27], 1, 3).unwrap();
        assert_eq!(qt.q, vec![-100, 50, 127]);
        assert!((qt.scales[0] - 0.01).abs() < 1e-9);
        let back = dequantize(&qt);
        for (a, b) in back.iter().zip([-1.0f32, 0.5, 1.27]) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_row_has_unit_scale() {
        let qt = quantize_tensor(&[0.0; 6], 2, 3).unwrap();
        assert_eq!(qt.scales, vec![1.0, 1.0]);
        assert!(qt.q.iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            quantize_tensor(&[1.0, f32::NAN, 0.0, 0.0], 2, 2),
            Err(QuantError::NonFinite { row: 0, col: 1 })
        );
        assert!(matches!(quantize_tensor(&[1.0; 5], 2, 3), Err(QuantError::Shape { .. })));
    }

    #[test]
    fn integer_rows_are_reproduced() {
        let row: Vec<f32> = (-127..=127).step_by(5).map(|v| v as f32 / 127.0 * 3.0).collect();
        let qt = quantize_tensor(&row, 1, row.len()).unwrap();
        let expected: Vec<i8> = (-127..=127).step_by(5).map(|v| v as i8).collect();
        assert_eq!(qt.q, expected);
    }

    proptest! {
        #[test]
        fn round_trip_within_half_scale(rows in 1usize..6, cols in 1usize..20, seed: u64, mag in 1e-3f32..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(-mag..mag)).collect();
            let qt = quantize_tensor(&w, rows, cols).unwrap();
            let back = dequantize(&qt);
            for (i, (a, b)) in w.iter().zip(&back).enumerate() {
                let s = qt.scales[i / cols];
                prop_assert!(s > 0.0);
                prop_assert!(qt.q[i] != i8::MIN);
                // exact bound in real arithmetic; allow f32 rounding of q·s
                prop_assert!((a - b).abs() <= s / 2.0 * (1.0 + 1e-5), "{} {} {}", a, b, s);
            }
            let again = quantize_tensor(&back, rows, cols).unwrap();
            prop_assert_eq!(&again.q, &qt.q);
            for (s1, s2) in again.scales.iter().zip(&qt.scales) {
                prop_assert!((s1 - s2).abs() <= s2 * 1e-6);
            }
            let neg: Vec<f32> = w.iter().map(|v| -v).collect();
            let qn = quantize_tensor(&neg, rows, cols).unwrap();
            prop_assert!(qn.q.iter().zip(&qt.q).all(|(a, b)| *a == -*b));
        }
    }

    #[test]
    fn desk_covered_ratio_and_embeddings_kept() {
        let p = ModelParams::init(ModelConfig::desk(), 3);
        let (qm, report) = quantize_model(&p).unwrap();
        assert!((3.8..=4.0).contains(&report.covered_ratio), "{report:?}");
        // oracle: per matrix 4·r·c bytes versus r·c + 4·r
        let (mut f, mut q) = (0usize, 0usize);
        for s in p.layout.specs.iter().filter(|s| s.kind == TensorKind::Weight) {
            f += 4 * s.rows * s.cols;
            q += s.rows * s.cols + 4 * s.rows;
        }
        assert_eq!((report.covered_f32_bytes, report.covered_quant_bytes), (f, q));
        assert!(report.quant_file_bytes < report.f32_file_bytes);
        for id in [TOKEN_EMBEDDING, POSITION_EMBEDDING] {
            assert_eq!(qm.f32(id), p.tensor(id));
        }
    }

    #[test]
    fn file_round_trip_is_deterministic() {
        let p = ModelParams::init(ModelConfig::tiny(), 5);
        let a = to_bytes(&quantize_model(&p).unwrap().0);
        let b = to_bytes(&quantize_model(&p).unwrap().0);
        assert_eq!(a, b);
        assert_eq!(&a[..4], b"MDQ8");
        let back = from_bytes(&a).unwrap();
        assert_eq!(to_bytes(&back), a);
        assert!(matches!(from_bytes(&a[..a.len() - 2]), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(checkpoint::from_bytes(&a), Err(CheckpointError::Magic)));
    }

    fn seqs(cfg: &ModelConfig, n: usize) -> Vec<TokenSeq> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        (0..n)
            .map(|_| {
                let len = rng.random_range(3..=cfg.max_len);
                let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(7..cfg.vocab_size as u32)).collect();
                ids[0] = 2;
                TokenSeq {
                    attention_mask: vec![1; ids.len()],
                    ids,
                }
            })
            .collect()
    }

    #[test]
    fn zero_weight_model_outputs_classifier_bias() {
        let cfg = ModelConfig::tiny();
        let mut p = ModelParams::init(cfg.clone(), 1);
        let cb = p.layout.classifier_bias();
        p.tensor_mut(cb).copy_from_slice(&[0.25, -0.75]);
        let cw = p.layout.classifier_weight();
        p.tensor_mut(cw).fill(0.0);
        let (qm, _) = quantize_model(&p).unwrap();
        for s in seqs(&cfg, 5) {
            assert_eq!(qlogits(&qm, &s).unwrap(), [0.25, -0.75]);
        }
    }

    #[test]
    fn quantized_path_tracks_float_path() {
        let cfg = ModelConfig::desk();
        let p = ModelParams::init(cfg.clone(), 2);
        let (qm, _) = quantize_model(&p).unwrap();
        let batch = seqs(&cfg, 40);
        let q = qforward(&qm, &batch).unwrap();
        let mut gap = 0.0;
        for (s, ql) in batch.iter().zip(&q) {
            let fl = logits(&p, s).unwrap();
            gap += (predict_proba(*ql) - predict_proba(fl)).abs();
        }
        assert!(gap / 40.0 <= 0.02, "{}", gap / 40.0);
        // the dequantized float model is the quantized model up to activation rounding
        let dq = qm.dequantized();
        for (id, spec) in p.layout.specs.iter().enumerate() {
            if spec.kind != TensorKind::Weight {
                assert_eq!(dq.tensor(id), p.tensor(id));
            }
        }
    }

    #[test]
    fn qlinear_matches_hand_computation() {
        let w = quantize_tensor(&[1.27, -1.27, 0.0, 0.5], 2, 2).unwrap();
        // x row [1, -1] → scale 1/127, codes [127, -127]
        let out = qlinear(&[1.0, -1.0], &w, &[0.5, 0.0]);
        // row0: (127·127 + 127·127) · (1/127) · 0.01 + 0.5 = 2.54 + 0.5
        assert!((out[0] - 3.04).abs() < 1e-5, "{}", out[0]);
        // row1: q = [0, 127], scale 0.5/127 → −127·127 · (1/127)(0.5/127) = −0.5
        assert!((out[1] + 0.5).abs() < 1e-6, "{}", out[1]);
    }
}
