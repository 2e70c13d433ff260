use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::{LayerParams, ModelParams};
use crate::error::{Error, Result};
use crate::tokenizer::PAD;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: NormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: NormCache,
    b: Array2<f64>,
    u: Array2<f64>,
    act: Array2<f64>,
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    hidden: Array2<f64>,
    pub logits: Vec<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = &centered * &rstd.view().insert_axis(Axis(1));
    let y = &xhat * &gain.view().insert_axis(Axis(0)) + &bias.view().insert_axis(Axis(0));
    (y, NormCache { xhat, rstd })
}

/// Returns the input gradient; accumulates gain and bias gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * &gain.view().insert_axis(Axis(0));
    let sum_dxhat = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
    let inner = &dxhat * d - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat;
    inner * &(cache.rstd.mapv(|r| r / d)).insert_axis(Axis(1))
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044_715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044_715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044_715 * u * u)
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + &b.view().insert_axis(Axis(0))
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ModelParams {
    /// Replaced probability for every position. Padding ids are never
    /// attended to.
    pub fn forward(&self, ids: &[u32]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(ids)?.logits.into_iter().map(sigmoid).collect())
    }

    pub fn forward_cached(&self, ids: &[u32]) -> Result<ForwardCache> {
        let cfg = &self.config;
        if ids.len() > cfg.max_length {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max_length: cfg.max_length,
            });
        }
        if ids.is_empty() {
            return Err(Error::Model("empty input".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::Model(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
        }
        let n = ids.len();
        let mut x = Array2::from_shape_fn((n, cfg.d_model), |(t, j)| {
            self.token_embedding[[ids[t] as usize, j]] + self.positions[[t, j]]
        });
        let key_masked: Vec<bool> = ids.iter().map(|&id| id == PAD).collect();

        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = self.layer_forward(layer, &x, &key_masked);
            x = out;
            layers.push(cache);
        }
        let (hidden, final_norm) = layer_norm(&x, &self.final_gain, &self.final_bias);
        let logits = hidden.dot(&self.head).to_vec();
        Ok(ForwardCache {
            ids: ids.to_vec(),
            layers,
            final_norm,
            hidden,
            logits,
        })
    }

    fn layer_forward(&self, l: &LayerParams, x: &Array2<f64>, key_masked: &[bool]) -> (Array2<f64>, LayerCache) {
        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let (a, ln1) = layer_norm(x, &l.ln1_gain, &l.ln1_bias);
        let q = affine(&a, &l.w_q, &l.b_q);
        let k = affine(&a, &l.w_k, &l.b_k);
        let v = affine(&a, &l.w_v, &l.b_v);

        let mut ctx = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for (j, &masked) in key_masked.iter().enumerate() {
                if masked {
                    scores.column_mut(j).fill(f64::NEG_INFINITY);
                }
            }
            softmax_rows(&mut scores);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let x_mid = x + &affine(&ctx, &l.w_o, &l.b_o);

        let (b, ln2) = layer_norm(&x_mid, &l.ln2_gain, &l.ln2_bias);
        let u = affine(&b, &l.w_ff1, &l.b_ff1);
        let act = u.mapv(gelu);
        let out = &x_mid + &affine(&act, &l.w_ff2, &l.b_ff2);

        let cache = LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            ln2,
            b,
            u,
            act,
        };
        (out, cache)
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the per-position logits is `dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut ModelParams) {
        let dz = ArrayView1::from(dlogits);
        // logits = hidden · head
        grads.head += &cache.hidden.t().dot(&dz);
        let dhidden = dz.insert_axis(Axis(1)).dot(&self.head.view().insert_axis(Axis(0)));
        let mut dx = layer_norm_backward(
            &dhidden,
            &cache.final_norm,
            &self.final_gain,
            &mut grads.final_gain,
            &mut grads.final_bias,
        );

        for (idx, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            dx = self.layer_backward(layer, lc, dx, &mut grads.layers[idx]);
        }

        for (t, &id) in cache.ids.iter().enumerate() {
            let mut row = grads.token_embedding.row_mut(id as usize);
            row += &dx.row(t);
        }
    }

    fn layer_backward(&self, l: &LayerParams, c: &LayerCache, dout: Array2<f64>, g: &mut LayerParams) -> Array2<f64> {
        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        // out = x_mid + ff2(gelu(ff1(ln2(x_mid))))
        g.w_ff2 += &c.act.t().dot(&dout);
        g.b_ff2 += &dout.sum_axis(Axis(0));
        let dact = dout.dot(&l.w_ff2.t());
        let du = &dact * &c.u.mapv(gelu_grad);
        g.w_ff1 += &c.b.t().dot(&du);
        g.b_ff1 += &du.sum_axis(Axis(0));
        let db = du.dot(&l.w_ff1.t());
        let dx_mid = dout + layer_norm_backward(&db, &c.ln2, &l.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

        // x_mid = x + attn(ln1(x))
        g.w_o += &c.ctx.t().dot(&dx_mid);
        g.b_o += &dx_mid.sum_axis(Axis(0));
        let dctx = dx_mid.dot(&l.w_o.t());

        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let p = &c.probs[h];
            let dctx_h = dctx.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
            let dp = dctx_h.dot(&c.v.slice(cols).t());
            let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = (&dp - &row_dot) * p * scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }

        g.w_q += &c.a.t().dot(&dq);
        g.b_q += &dq.sum_axis(Axis(0));
        g.w_k += &c.a.t().dot(&dk);
        g.b_k += &dk.sum_axis(Axis(0));
        g.w_v += &c.a.t().dot(&dv);
        g.b_v += &dv.sum_axis(Axis(0));
        let da = dq.dot(&l.w_q.t()) + dk.dot(&l.w_k.t()) + dv.dot(&l.w_v.t());

        dx_mid + layer_norm_backward(&da, &c.ln1, &l.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small() -> ModelParams {
        ModelParams::init(
            3,
            ModelConfig {
                vocab_size: 20,
                d_model: 16,
                layers: 1,
                heads: 2,
                d_ff: 32,
                max_length: 16,
            },
        )
        .unwrap()
    }

    #[test]
    fn outputs_are_probabilities() {
        let p = small();
        let out = p.forward(&[2, 5, 6, 7, 3]).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn zero_head_gives_one_half() {
        let mut p = small();
        p.head.fill(0.0);
        assert!(p.forward(&[2, 9, 3]).unwrap().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn too_long() {
        let p = small();
        assert!(matches!(p.forward(&[4; 17]), Err(Error::SequenceTooLong { .. })));
    }

    #[test]
    fn positions_break_permutation_symmetry() {
        let p = small();
        let a = p.forward(&[2, 5, 6, 3]).unwrap();
        let b = p.forward(&[2, 6, 5, 3]).unwrap();
        // Swapped tokens do not just swap outputs; positions matter.
        assert!((a[1] - b[2]).abs() > 1e-6);
        assert!((a[2] - b[1]).abs() > 1e-6);
        let c = p.forward(&[2, 5, 5, 3]).unwrap();
        assert_eq!(c, p.forward(&[2, 5, 5, 3]).unwrap());
    }

    #[test]
    fn padding_is_not_attended() {
        let p = small();
        let plain = p.forward(&[2, 5, 6, 3]).unwrap();
        let padded = p.forward(&[2, 5, 6, 3, PAD, PAD]).unwrap();
        for (x, y) in plain.iter().zip(&padded) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
