//! Causal pre-norm transformer over road points with hand-written backprop.
//!
//! All parameters live in one flat `Vec<f64>`; [`Layout`] records where each
//! tensor starts. Activations are row-major `rows × width` buffers where a row
//! is one road point and a batch stacks whole roads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::linalg::{add_bias, bias_grad, matmul, matmul_a_bt, matmul_at_b_acc};
use super::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::geometry::RoadGenome;

/// Curvatures are multiplied by this before the input projection so the
/// admissible range maps to roughly [-1, 1].
pub const CURVATURE_SCALE: f64 = 10.0;
const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
/// Sequences per forward/backward chunk; bounds activation memory.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSlots {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_1: usize,
    b_1: usize,
    w_2: usize,
    b_2: usize,
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    w_in: usize,
    b_in: usize,
    pos: usize,
    layers: Vec<LayerSlots>,
    lnf_g: usize,
    lnf_b: usize,
    w_out: usize,
    b_out: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &DiscriminatorConfig) -> Self {
        let d = config.d_model;
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>| -> usize {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec { name, shape, offset });
            offset
        };
        let w_in = add("input.weight".into(), vec![super::INPUT_FEATURES, d]);
        let b_in = add("input.bias".into(), vec![d]);
        let pos = add("position".into(), vec![config.block_size, d]);
        let layers = (0..config.n_layers)
            .map(|l| LayerSlots {
                ln1_g: add(format!("layer{l}.ln1.gain"), vec![d]),
                ln1_b: add(format!("layer{l}.ln1.bias"), vec![d]),
                w_qkv: add(format!("layer{l}.attn.qkv.weight"), vec![d, 3 * d]),
                b_qkv: add(format!("layer{l}.attn.qkv.bias"), vec![3 * d]),
                w_o: add(format!("layer{l}.attn.out.weight"), vec![d, d]),
                b_o: add(format!("layer{l}.attn.out.bias"), vec![d]),
                ln2_g: add(format!("layer{l}.ln2.gain"), vec![d]),
                ln2_b: add(format!("layer{l}.ln2.bias"), vec![d]),
                w_1: add(format!("layer{l}.ff.fc1.weight"), vec![d, 4 * d]),
                b_1: add(format!("layer{l}.ff.fc1.bias"), vec![4 * d]),
                w_2: add(format!("layer{l}.ff.fc2.weight"), vec![4 * d, d]),
                b_2: add(format!("layer{l}.ff.fc2.bias"), vec![d]),
            })
            .collect();
        let lnf_g = add("final_ln.gain".into(), vec![d]);
        let lnf_b = add("final_ln.bias".into(), vec![d]);
        let w_out = add("head.weight".into(), vec![d]);
        let b_out = add("head.bias".into(), vec![1]);
        Self { tensors, w_in, b_in, pos, layers, lnf_g, lnf_b, w_out, b_out, total }
    }

    /// True for tensors that are biases (`*.bias`), LayerNorm gains included
    /// separately via [`Layout::is_gain`].
    pub fn is_bias(&self, spec: &TensorSpec) -> bool {
        spec.name.ends_with("bias")
    }

    pub fn is_gain(&self, spec: &TensorSpec) -> bool {
        spec.name.ends_with("gain")
    }
}

/// Learnable parameters plus the hyperparameters that shape them.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorModel {
    pub config: DiscriminatorConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a1: Vec<f64>,
    qkv: Vec<f64>,
    /// Attention weights, `[seq][head][t][j]` with `j <= t` populated.
    probs: Vec<f64>,
    attn: Vec<f64>,
    ln2: LnCache,
    a2: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    drop: Option<Vec<f64>>,
}

struct Cache {
    feats: Vec<f64>,
    embed_drop: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    final_out: Vec<f64>,
}

fn layer_norm(x: &[f64], width: usize, gain: &[f64], bias: &[f64], out: &mut [f64]) -> LnCache {
    let rows = x.len() / width;
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..width {
            let xh = (row[c] - mean) * rs;
            xhat[r * width + c] = xh;
            out[r * width + c] = xh * gain[c] + bias[c];
        }
    }
    LnCache { xhat, rstd }
}

/// Returns dx; accumulates gain/bias gradients.
fn layer_norm_backward(dy: &[f64], cache: &LnCache, width: usize, gain: &[f64], dgain: &mut [f64], dbias: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; width];
    for (r, &rs) in cache.rstd.iter().enumerate() {
        let base = r * width;
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for c in 0..width {
            let g = dy[base + c];
            let xh = cache.xhat[base + c];
            dgain[c] += g * xh;
            dbias[c] += g;
            dxhat[c] = g * gain[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xh;
        }
        mean_d /= width as f64;
        mean_dx /= width as f64;
        for c in 0..width {
            dx[base + c] = rs * (dxhat[c] - mean_d - cache.xhat[base + c] * mean_dx);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_K * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_K * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * 0.044715 * u * u)
}

fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-point input features `(scaled curvature, Δs)`.
fn features(genomes: &[&RoadGenome], out: &mut Vec<f64>) {
    out.clear();
    for g in genomes {
        for (c, ds) in g.curvatures().iter().zip(g.increments()) {
            out.push(c * CURVATURE_SCALE);
            out.push(ds);
        }
    }
}

impl DiscriminatorModel {
    /// All-zero parameters.
    pub fn zeros(config: DiscriminatorConfig) -> Result<Self> {
        config.check()?;
        let layout = Layout::new(&config);
        let params = vec![0.0; layout.total];
        Ok(Self { config, layout, params })
    }

    /// Standard initialization: N(0, 0.02) weights, zero biases, unit gains;
    /// residual output projections scaled by `1/sqrt(2·n_layers)`.
    pub fn init(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 0.02;
        let resid_std = std / (2.0 * model.config.n_layers.max(1) as f64).sqrt();
        for spec in model.layout.tensors.clone() {
            let range = spec.range();
            if model.layout.is_gain(&spec) {
                model.params[range].fill(1.0);
            } else if model.layout.is_bias(&spec) {
                continue;
            } else {
                let s = if spec.name.ends_with("attn.out.weight") || spec.name.ends_with("fc2.weight") {
                    resid_std
                } else if spec.name == "input.weight" {
                    // Inputs carry two channels only; widen so they are not drowned by positions.
                    0.5
                } else {
                    std
                };
                let normal = Normal::new(0.0, s).expect("positive std");
                for v in &mut model.params[range] {
                    *v = normal.sample(&mut rng);
                }
            }
        }
        Ok(model)
    }

    /// Every parameter drawn from N(0, std), gains included.
    pub fn random(config: DiscriminatorConfig, seed: u64, std: f64) -> Result<Self> {
        use rand::SeedableRng;
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        for v in &mut model.params {
            *v = normal.sample(&mut rng);
        }
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.total
    }

    fn p(&self, offset: usize, len: usize) -> &[f64] {
        &self.params[offset..offset + len]
    }

    fn check_lengths(&self, genomes: &[&RoadGenome]) -> Result<()> {
        for g in genomes {
            if g.len() != self.config.block_size {
                return Err(Error::LengthMismatch { expected: self.config.block_size, actual: g.len() });
            }
        }
        Ok(())
    }

    /// Per-point logits for each genome, dropout disabled.
    pub fn logits(&self, genomes: &[&RoadGenome]) -> Result<Vec<Vec<f64>>> {
        self.check_lengths(genomes)?;
        let t = self.config.block_size;
        let mut out = Vec::with_capacity(genomes.len());
        for chunk in genomes.chunks(CHUNK) {
            let (logits, _) = self.forward_cached(chunk, None);
            out.extend(logits.chunks_exact(t).map(|c| c.to_vec()));
        }
        Ok(out)
    }

    fn forward_cached(&self, genomes: &[&RoadGenome], mut rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, Cache) {
        let cfg = &self.config;
        let (d, t, heads) = (cfg.d_model, cfg.block_size, cfg.n_heads);
        let dh = d / heads;
        let b = genomes.len();
        let n = b * t;
        let l = &self.layout;
        let train = rng.is_some() && cfg.dropout > 0.0;

        let mut feats = Vec::with_capacity(n * 2);
        features(genomes, &mut feats);
        let mut h = vec![0.0; n * d];
        matmul(n, 2, d, &feats, self.p(l.w_in, 2 * d), &mut h, 0.0);
        add_bias(&mut h, self.p(l.b_in, d));
        let pos = self.p(l.pos, t * d);
        for (r, row) in h.chunks_exact_mut(d).enumerate() {
            let p = &pos[(r % t) * d..(r % t + 1) * d];
            for (v, q) in row.iter_mut().zip(p) {
                *v += q;
            }
        }
        let embed_drop = if train {
            let mask = dropout_mask(n * d, cfg.dropout, rng.as_deref_mut().unwrap());
            h.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Some(mask)
        } else {
            None
        };

        let scale = 1.0 / (dh as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for slots in &l.layers {
            let mut a1 = vec![0.0; n * d];
            let ln1 = layer_norm(&h, d, self.p(slots.ln1_g, d), self.p(slots.ln1_b, d), &mut a1);
            let mut qkv = vec![0.0; n * 3 * d];
            matmul(n, d, 3 * d, &a1, self.p(slots.w_qkv, 3 * d * d), &mut qkv, 0.0);
            add_bias(&mut qkv, self.p(slots.b_qkv, 3 * d));

            let mut probs = vec![0.0; b * heads * t * t];
            let mut attn = vec![0.0; n * d];
            let mut scores = vec![0.0; t];
            for s in 0..b {
                for hd in 0..heads {
                    let pbase = (s * heads + hd) * t * t;
                    for i in 0..t {
                        let qi = &qkv[(s * t + i) * 3 * d + hd * dh..][..dh];
                        let mut max = f64::NEG_INFINITY;
                        for (j, sc) in scores.iter_mut().enumerate().take(i + 1) {
                            let kj = &qkv[(s * t + j) * 3 * d + d + hd * dh..][..dh];
                            *sc = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                            max = max.max(*sc);
                        }
                        let mut denom = 0.0;
                        for sc in scores.iter_mut().take(i + 1) {
                            *sc = (*sc - max).exp();
                            denom += *sc;
                        }
                        let out = &mut attn[(s * t + i) * d + hd * dh..][..dh];
                        for j in 0..=i {
                            let w = scores[j] / denom;
                            probs[pbase + i * t + j] = w;
                            let vj = &qkv[(s * t + j) * 3 * d + 2 * d + hd * dh..][..dh];
                            for (o, v) in out.iter_mut().zip(vj) {
                                *o += w * v;
                            }
                        }
                    }
                }
            }
            let mut proj = vec![0.0; n * d];
            matmul(n, d, d, &attn, self.p(slots.w_o, d * d), &mut proj, 0.0);
            add_bias(&mut proj, self.p(slots.b_o, d));
            h.iter_mut().zip(&proj).for_each(|(x, y)| *x += y);

            let mut a2 = vec![0.0; n * d];
            let ln2 = layer_norm(&h, d, self.p(slots.ln2_g, d), self.p(slots.ln2_b, d), &mut a2);
            let mut pre = vec![0.0; n * 4 * d];
            matmul(n, d, 4 * d, &a2, self.p(slots.w_1, 4 * d * d), &mut pre, 0.0);
            add_bias(&mut pre, self.p(slots.b_1, 4 * d));
            let act: Vec<f64> = pre.iter().map(|&u| gelu(u)).collect();
            let mut ff = vec![0.0; n * d];
            matmul(n, 4 * d, d, &act, self.p(slots.w_2, 4 * d * d), &mut ff, 0.0);
            add_bias(&mut ff, self.p(slots.b_2, d));
            let drop = if train {
                let mask = dropout_mask(n * d, cfg.dropout, rng.as_deref_mut().unwrap());
                ff.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                Some(mask)
            } else {
                None
            };
            h.iter_mut().zip(&ff).for_each(|(x, y)| *x += y);
            layers.push(LayerCache { ln1, a1, qkv, probs, attn, ln2, a2, pre, act, drop });
        }

        let mut final_out = vec![0.0; n * d];
        let lnf = layer_norm(&h, d, self.p(l.lnf_g, d), self.p(l.lnf_b, d), &mut final_out);
        let w_out = self.p(l.w_out, d);
        let b_out = self.params[l.b_out];
        let logits = final_out
            .chunks_exact(d)
            .map(|row| row.iter().zip(w_out).map(|(a, b)| a * b).sum::<f64>() + b_out)
            .collect();
        (logits, Cache { feats, embed_drop, layers, lnf, final_out })
    }

    /// Back-propagates `dlogits` (one per row) and accumulates into `grad`.
    fn backward(&self, genomes: usize, cache: &Cache, dlogits: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let (d, t, heads) = (cfg.d_model, cfg.block_size, cfg.n_heads);
        let dh = d / heads;
        let n = genomes * t;
        let l = &self.layout;
        let scale = 1.0 / (dh as f64).sqrt();

        // Head.
        let w_out = self.p(l.w_out, d).to_vec();
        let mut dfinal = vec![0.0; n * d];
        for (r, &g) in dlogits.iter().enumerate() {
            grad[l.b_out] += g;
            let row = &cache.final_out[r * d..(r + 1) * d];
            for c in 0..d {
                grad[l.w_out + c] += g * row[c];
                dfinal[r * d + c] = g * w_out[c];
            }
        }
        let mut dh_res = {
            let (left, right) = grad.split_at_mut(l.lnf_b);
            layer_norm_backward(&dfinal, &cache.lnf, d, self.p(l.lnf_g, d), &mut left[l.lnf_g..l.lnf_g + d], &mut right[..d])
        };

        for (slots, lc) in l.layers.iter().zip(&cache.layers).rev() {
            // Feed-forward sublayer: h += drop(gelu(a2·W1 + b1)·W2 + b2).
            let mut dff = dh_res.clone();
            if let Some(mask) = &lc.drop {
                dff.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            bias_grad(&dff, &mut grad[slots.b_2..slots.b_2 + d]);
            matmul_at_b_acc(n, 4 * d, d, &lc.act, &dff, &mut grad[slots.w_2..slots.w_2 + 4 * d * d]);
            let mut dact = vec![0.0; n * 4 * d];
            matmul_a_bt(n, d, 4 * d, &dff, self.p(slots.w_2, 4 * d * d), &mut dact);
            dact.iter_mut().zip(&lc.pre).for_each(|(g, &u)| *g *= gelu_grad(u));
            bias_grad(&dact, &mut grad[slots.b_1..slots.b_1 + 4 * d]);
            matmul_at_b_acc(n, d, 4 * d, &lc.a2, &dact, &mut grad[slots.w_1..slots.w_1 + 4 * d * d]);
            let mut da2 = vec![0.0; n * d];
            matmul_a_bt(n, 4 * d, d, &dact, self.p(slots.w_1, 4 * d * d), &mut da2);
            let dx = {
                let (left, right) = grad.split_at_mut(slots.ln2_b);
                layer_norm_backward(&da2, &lc.ln2, d, self.p(slots.ln2_g, d), &mut left[slots.ln2_g..slots.ln2_g + d], &mut right[..d])
            };
            dh_res.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);

            // Attention sublayer: h += attn(a1)·Wo + bo.
            bias_grad(&dh_res, &mut grad[slots.b_o..slots.b_o + d]);
            matmul_at_b_acc(n, d, d, &lc.attn, &dh_res, &mut grad[slots.w_o..slots.w_o + d * d]);
            let mut dattn = vec![0.0; n * d];
            matmul_a_bt(n, d, d, &dh_res, self.p(slots.w_o, d * d), &mut dattn);

            let mut dqkv = vec![0.0; n * 3 * d];
            let mut dp = vec![0.0; t];
            for s in 0..genomes {
                for hd in 0..heads {
                    let pbase = (s * heads + hd) * t * t;
                    for i in 0..t {
                        let row_i = s * t + i;
                        let dout = &dattn[row_i * d + hd * dh..][..dh];
                        let mut dot = 0.0;
                        for j in 0..=i {
                            let row_j = s * t + j;
                            let w = lc.probs[pbase + i * t + j];
                            let vj = &lc.qkv[row_j * 3 * d + 2 * d + hd * dh..][..dh];
                            dp[j] = dout.iter().zip(vj).map(|(a, b)| a * b).sum();
                            dot += w * dp[j];
                            let dv = &mut dqkv[row_j * 3 * d + 2 * d + hd * dh..][..dh];
                            for (g, o) in dv.iter_mut().zip(dout) {
                                *g += w * o;
                            }
                        }
                        for j in 0..=i {
                            let row_j = s * t + j;
                            let w = lc.probs[pbase + i * t + j];
                            let ds = w * (dp[j] - dot) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            for c in 0..dh {
                                let kj = lc.qkv[row_j * 3 * d + d + hd * dh + c];
                                let qi = lc.qkv[row_i * 3 * d + hd * dh + c];
                                dqkv[row_i * 3 * d + hd * dh + c] += ds * kj;
                                dqkv[row_j * 3 * d + d + hd * dh + c] += ds * qi;
                            }
                        }
                    }
                }
            }
            bias_grad(&dqkv, &mut grad[slots.b_qkv..slots.b_qkv + 3 * d]);
            matmul_at_b_acc(n, d, 3 * d, &lc.a1, &dqkv, &mut grad[slots.w_qkv..slots.w_qkv + 3 * d * d]);
            let mut da1 = vec![0.0; n * d];
            matmul_a_bt(n, 3 * d, d, &dqkv, self.p(slots.w_qkv, 3 * d * d), &mut da1);
            let dx = {
                let (left, right) = grad.split_at_mut(slots.ln1_b);
                layer_norm_backward(&da1, &lc.ln1, d, self.p(slots.ln1_g, d), &mut left[slots.ln1_g..slots.ln1_g + d], &mut right[..d])
            };
            dh_res.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }

        // Embedding.
        if let Some(mask) = &cache.embed_drop {
            dh_res.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        for (r, row) in dh_res.chunks_exact(d).enumerate() {
            let p = l.pos + (r % t) * d;
            for c in 0..d {
                grad[p + c] += row[c];
            }
        }
        bias_grad(&dh_res, &mut grad[l.b_in..l.b_in + d]);
        matmul_at_b_acc(n, 2, d, &cache.feats, &dh_res, &mut grad[l.w_in..l.w_in + 2 * d]);
    }

    /// Sum over all points of `f(logit, row)`'s loss, with its gradient
    /// accumulated into `grad`. `dloss` maps `(logit, sequence, position)` to
    /// `(loss, dloss/dlogit)`.
    pub(crate) fn accumulate_gradient(
        &self,
        genomes: &[&RoadGenome],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
        grad: &mut [f64],
        dloss: impl Fn(f64, usize, usize) -> (f64, f64),
    ) -> Result<f64> {
        self.check_lengths(genomes)?;
        let t = self.config.block_size;
        let mut total = 0.0;
        for (c, chunk) in genomes.chunks(CHUNK).enumerate() {
            let (logits, cache) = self.forward_cached(chunk, dropout_rng.as_deref_mut());
            let mut dlogits = vec![0.0; logits.len()];
            for (r, &z) in logits.iter().enumerate() {
                let (loss, g) = dloss(z, c * CHUNK + r / t, r % t);
                total += loss;
                dlogits[r] = g;
            }
            self.backward(chunk.len(), &cache, &dlogits, grad);
        }
        Ok(total)
    }
}
