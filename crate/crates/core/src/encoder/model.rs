//! Forward pass and exact backward pass of the encoder classifier.
//!
//! Each example is computed over its non-pad prefix only. Pad keys are
//! masked out of attention and the pooled output is the `[CLS]` row, so the
//! pad rows never influence the logits; skipping them gives the same
//! result as running the full padded length.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::ops::{self, NormCache};
use super::params::{LayerTensor as L, ModelParams, POSITION_EMBEDDING, TOKEN_EMBEDDING};
use super::{EncoderError, Logits, ModelConfig, Scalar};
use crate::tokenizer::TokenSeq;

/// Dropout source for training-mode forward passes.
pub struct Dropout<'a> {
    pub rate: f32,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask<T: Scalar>(&mut self, n: usize) -> Option<Vec<T>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - self.rate as f64));
        Some(
            (0..n)
                .map(|_| {
                    if self.rng.random::<f32>() < self.rate {
                        T::zero()
                    } else {
                        keep
                    }
                })
                .collect(),
        )
    }
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, k) in x.iter_mut().zip(m) {
            *v = *v * *k;
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    x: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `[head][query][key]` attention weights.
    pub probs: Vec<T>,
    ctx: Vec<T>,
    attn_drop: Option<Vec<T>>,
    ln1: NormCache<T>,
    h1: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
    ff_drop: Option<Vec<T>>,
    ln2: NormCache<T>,
}

/// Activations of one example's forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ExampleCache<T> {
    pub ids: Vec<u32>,
    pub keep: Vec<bool>,
    /// Summed token + position embeddings (before dropout), `[len × d]`.
    pub embeddings: Vec<T>,
    emb_drop: Option<Vec<T>>,
    pub layers: Vec<LayerCache<T>>,
    pub pooled: Vec<T>,
}

impl<T> ExampleCache<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub(crate) fn check_seq(cfg: &ModelConfig, seq: &TokenSeq) -> Result<usize, EncoderError> {
    if seq.ids.len() != seq.attention_mask.len() {
        return Err(EncoderError::Shape(format!(
            "{} ids but {} mask entries",
            seq.ids.len(),
            seq.attention_mask.len()
        )));
    }
    if seq.ids.len() > cfg.max_len {
        return Err(EncoderError::Shape(format!(
            "sequence length {} exceeds max_len {}",
            seq.ids.len(),
            cfg.max_len
        )));
    }
    let n = seq.active_len();
    if n == 0 {
        return Err(EncoderError::Shape("sequence has no unmasked position".into()));
    }
    if seq.attention_mask[n..].iter().any(|&m| m != 0) {
        return Err(EncoderError::Shape("attention mask is not a prefix".into()));
    }
    if let Some(&bad) = seq.ids[..n].iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(EncoderError::Shape(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    Ok(n)
}

/// Token + position embeddings for the active prefix of `seq`.
pub fn embed<T: Scalar>(params: &ModelParams<T>, seq: &TokenSeq) -> Result<Vec<T>, EncoderError> {
    let n = check_seq(&params.config, seq)?;
    let d = params.config.d_model;
    let tok = params.tensor(TOKEN_EMBEDDING);
    let pos = params.tensor(POSITION_EMBEDDING);
    let mut out = Vec::with_capacity(n * d);
    for (i, &id) in seq.ids[..n].iter().enumerate() {
        let t = &tok[id as usize * d..(id as usize + 1) * d];
        let p = &pos[i * d..(i + 1) * d];
        out.extend(t.iter().zip(p).map(|(a, b)| *a + *b));
    }
    Ok(out)
}

/// Runs the encoder on precomputed embedding outputs. FGM uses this to
/// feed perturbed embeddings.
pub fn forward_embedded<T: Scalar>(
    params: &ModelParams<T>,
    ids: &[u32],
    embeddings: Vec<T>,
    mut dropout: Option<&mut Dropout<'_>>,
) -> (Logits<T>, ExampleCache<T>) {
    let cfg = &params.config;
    let (d, n, heads) = (cfg.d_model, ids.len(), cfg.n_heads);
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let keep = vec![true; n];

    let emb_drop = dropout.as_mut().and_then(|dr| dr.mask(n * d));
    let mut x = embeddings.clone();
    apply_mask(&mut x, &emb_drop);

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let w = |t| params.layer(l, t);
        let q = ops::linear(&x, w(L::Wq), w(L::Bq), d, d);
        let k = ops::linear(&x, w(L::Wk), w(L::Bk), d, d);
        let v = ops::linear(&x, w(L::Wv), w(L::Bv), d, d);
        let mut probs = vec![T::zero(); heads * n * n];
        let mut ctx = vec![T::zero(); n * d];
        for h in 0..heads {
            let hs = h * dh..(h + 1) * dh;
            for i in 0..n {
                let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                let qi = &q[i * d + hs.start..i * d + hs.end];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = scale * ops::dot(qi, &k[j * d + hs.start..j * d + hs.end]);
                }
                ops::masked_softmax(row, &keep);
                let ci = &mut ctx[i * d + hs.start..i * d + hs.end];
                for (j, &p) in row.iter().enumerate() {
                    ops::axpy(p, &v[j * d + hs.start..j * d + hs.end], ci);
                }
            }
        }
        let mut attn = ops::linear(&ctx, w(L::Wo), w(L::Bo), d, d);
        let attn_drop = dropout.as_mut().and_then(|dr| dr.mask(n * d));
        apply_mask(&mut attn, &attn_drop);
        let sum1: Vec<T> = x.iter().zip(&attn).map(|(a, b)| *a + *b).collect();
        let (h1, ln1) = ops::layer_norm(&sum1, w(L::Ln1Gain), w(L::Ln1Bias));

        let pre_act = ops::linear(&h1, w(L::W1), w(L::B1), d, cfg.d_ff);
        let act: Vec<T> = pre_act.iter().map(|&u| ops::gelu(u)).collect();
        let mut ff = ops::linear(&act, w(L::W2), w(L::B2), cfg.d_ff, d);
        let ff_drop = dropout.as_mut().and_then(|dr| dr.mask(n * d));
        apply_mask(&mut ff, &ff_drop);
        let sum2: Vec<T> = h1.iter().zip(&ff).map(|(a, b)| *a + *b).collect();
        let (out, ln2) = ops::layer_norm(&sum2, w(L::Ln2Gain), w(L::Ln2Bias));

        layers.push(LayerCache {
            x: std::mem::replace(&mut x, out),
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            ln1,
            h1,
            pre_act,
            act,
            ff_drop,
            ln2,
        });
    }

    let pooled = x[..d].to_vec();
    let wc = params.tensor(params.layout.classifier_weight());
    let bc = params.tensor(params.layout.classifier_bias());
    let out = ops::linear(&pooled, wc, bc, d, 2);
    (
        [out[0], out[1]],
        ExampleCache {
            ids: ids.to_vec(),
            keep,
            embeddings,
            emb_drop,
            layers,
            pooled,
        },
    )
}

pub fn forward_example<T: Scalar>(
    params: &ModelParams<T>,
    seq: &TokenSeq,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<(Logits<T>, ExampleCache<T>), EncoderError> {
    let emb = embed(params, seq)?;
    let n = emb.len() / params.config.d_model;
    Ok(forward_embedded(params, &seq.ids[..n], emb, dropout))
}

/// Batched forward. `dropout` is `Some` only in training mode.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TokenSeq],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<(Vec<Logits<T>>, Vec<ExampleCache<T>>), EncoderError> {
    if batch.is_empty() {
        return Err(EncoderError::EmptyBatch);
    }
    let mut logits = Vec::with_capacity(batch.len());
    let mut caches = Vec::with_capacity(batch.len());
    for seq in batch {
        let (lg, c) = forward_example(params, seq, dropout.as_deref_mut())?;
        logits.push(lg);
        caches.push(c);
    }
    Ok((logits, caches))
}

/// Eval-mode logits without keeping activations.
pub fn logits<T: Scalar>(params: &ModelParams<T>, seq: &TokenSeq) -> Result<Logits<T>, EncoderError> {
    forward_example(params, seq, None).map(|(l, _)| l)
}

fn pair_mut<T>(g: &mut [T], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(a.end, b.start);
    let (left, right) = g[a.start..b.end].split_at_mut(a.len());
    (left, right)
}

/// Backpropagates `dlogits` through one example, accumulating parameter
/// gradients into `grads` (same layout as the parameters). Returns the
/// gradient with respect to the summed embedding outputs.
pub fn backward_example<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ExampleCache<T>,
    dlogits: Logits<T>,
    grads: &mut [T],
) -> Vec<T> {
    let cfg = &params.config;
    let layout = &params.layout;
    let (d, n, heads) = (cfg.d_model, cache.len(), cfg.n_heads);
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let range = |id: usize| layout.specs[id].range();
    let lr = |l: usize, t: L| range(layout.layer_id(l, t));

    // classifier head
    let (wc_r, bc_r) = (range(layout.classifier_weight()), range(layout.classifier_bias()));
    let wc = params.tensor(layout.classifier_weight());
    let mut dx = vec![T::zero(); n * d];
    {
        let (dwc, dbc) = pair_mut(grads, wc_r, bc_r);
        for c in 0..2 {
            dbc[c] = dbc[c] + dlogits[c];
            ops::axpy(dlogits[c], &cache.pooled, &mut dwc[c * d..(c + 1) * d]);
            ops::axpy(dlogits[c], &wc[c * d..(c + 1) * d], &mut dx[..d]);
        }
    }

    for l in (0..cfg.n_layers).rev() {
        let lc = &cache.layers[l];
        let w = |t| params.layer(l, t);

        let (dg2, db2) = pair_mut(grads, lr(l, L::Ln2Gain), lr(l, L::Ln2Bias));
        let dsum2 = ops::layer_norm_backward(&dx, &lc.ln2, w(L::Ln2Gain), dg2, db2);
        let mut dh1 = dsum2.clone();
        let mut dff = dsum2;
        apply_mask(&mut dff, &lc.ff_drop);
        let (dw2, db2) = pair_mut(grads, lr(l, L::W2), lr(l, L::B2));
        let mut dact = ops::linear_backward(&lc.act, w(L::W2), &dff, cfg.d_ff, d, dw2, db2);
        for (g, &u) in dact.iter_mut().zip(&lc.pre_act) {
            *g = *g * ops::gelu_grad(u);
        }
        let (dw1, db1) = pair_mut(grads, lr(l, L::W1), lr(l, L::B1));
        let dh1_ff = ops::linear_backward(&lc.h1, w(L::W1), &dact, d, cfg.d_ff, dw1, db1);
        for (a, b) in dh1.iter_mut().zip(&dh1_ff) {
            *a = *a + *b;
        }

        let (dg1, db1) = pair_mut(grads, lr(l, L::Ln1Gain), lr(l, L::Ln1Bias));
        let dsum1 = ops::layer_norm_backward(&dh1, &lc.ln1, w(L::Ln1Gain), dg1, db1);
        let mut dattn = dsum1.clone();
        apply_mask(&mut dattn, &lc.attn_drop);
        let (dwo, dbo) = pair_mut(grads, lr(l, L::Wo), lr(l, L::Bo));
        let dctx = ops::linear_backward(&lc.ctx, w(L::Wo), &dattn, d, d, dwo, dbo);

        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut dp = vec![T::zero(); n];
        for h in 0..heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            for i in 0..n {
                let p = &lc.probs[(h * n + i) * n..(h * n + i + 1) * n];
                let dci = &dctx[i * d + s..i * d + e];
                let mut weighted = T::zero();
                for j in 0..n {
                    dp[j] = ops::dot(dci, &lc.v[j * d + s..j * d + e]);
                    weighted = weighted + dp[j] * p[j];
                    ops::axpy(p[j], dci, &mut dv[j * d + s..j * d + e]);
                }
                for j in 0..n {
                    let ds = p[j] * (dp[j] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    ops::axpy(ds, &lc.k[j * d + s..j * d + e], &mut dq[i * d + s..i * d + e]);
                    ops::axpy(ds, &lc.q[i * d + s..i * d + e], &mut dk[j * d + s..j * d + e]);
                }
            }
        }

        let mut dxl = dsum1;
        for (t_w, t_b, dy) in [(L::Wq, L::Bq, &dq), (L::Wk, L::Bk, &dk), (L::Wv, L::Bv, &dv)] {
            let (dw, db) = pair_mut(grads, lr(l, t_w), lr(l, t_b));
            let part = ops::linear_backward(&lc.x, w(t_w), dy, d, d, dw, db);
            for (a, b) in dxl.iter_mut().zip(&part) {
                *a = *a + *b;
            }
        }
        dx = dxl;
    }

    apply_mask(&mut dx, &cache.emb_drop);
    let tok_r = range(TOKEN_EMBEDDING);
    let pos_r = range(POSITION_EMBEDDING);
    for (i, &id) in cache.ids.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        let t0 = tok_r.start + id as usize * d;
        for (g, v) in grads[t0..t0 + d].iter_mut().zip(row) {
            *g = *g + *v;
        }
        let p0 = pos_r.start + i * d;
        for (g, v) in grads[p0..p0 + d].iter_mut().zip(row) {
            *g = *g + *v;
        }
    }
    dx
}

/// Gradients for a batch; `loss_grads[i]` is d(loss)/d(logits of example i).
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    caches: &[ExampleCache<T>],
    loss_grads: &[Logits<T>],
) -> Result<(Vec<T>, Vec<Vec<T>>), EncoderError> {
    if caches.len() != loss_grads.len() {
        return Err(EncoderError::MissingCache {
            caches: caches.len(),
            grads: loss_grads.len(),
        });
    }
    let mut grads = vec![T::zero(); params.data.len()];
    let demb = caches
        .iter()
        .zip(loss_grads)
        .map(|(c, g)| backward_example(params, c, *g, &mut grads))
        .collect();
    Ok((grads, demb))
}
