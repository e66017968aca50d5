use super::{sigmoid, Layout, MatcherKind, ModelState, LOGIT_CLAMP};
use crate::corpus::{TokenId, Utterance};

pub(crate) struct Forward {
    u: Vec<f64>,
    v: Vec<f64>,
    logit: f64,
    pub score: f64,
    /// MLP: concatenated features `[u; v; u⊙v]`.
    features: Vec<f64>,
    /// MLP: hidden activations `tanh(W₁ f + b₁)`.
    hidden: Vec<f64>,
}

fn mean_embedding(params: &[f64], d: usize, tokens: &[TokenId], out: &mut [f64], scale: f64) {
    let w = scale / tokens.len() as f64;
    for &t in tokens {
        let row = &params[t as usize * d..(t as usize + 1) * d];
        for (o, e) in out.iter_mut().zip(row) {
            *o += w * e;
        }
    }
}

fn scatter_embedding(grad: &mut [f64], d: usize, tokens: &[TokenId], dvec: &[f64], scale: f64) {
    let w = scale / tokens.len() as f64;
    for &t in tokens {
        let row = &mut grad[t as usize * d..(t as usize + 1) * d];
        for (g, dv) in row.iter_mut().zip(dvec) {
            *g += w * dv;
        }
    }
}

impl ModelState {
    fn pool(&self, layout: &Layout, context: &[Utterance], response: &[TokenId]) -> (Vec<f64>, Vec<f64>) {
        let d = layout.d;
        let p = self.params();
        let mut u = vec![0.0; d];
        let turn_scale = 1.0 / context.len() as f64;
        for utt in context {
            mean_embedding(p, d, utt, &mut u, turn_scale);
        }
        let mut v = vec![0.0; d];
        mean_embedding(p, d, response, &mut v, 1.0);
        (u, v)
    }

    /// Forward pass. Token ids must already be validated.
    pub(crate) fn forward(&self, context: &[Utterance], response: &[TokenId]) -> Forward {
        let layout = self.layout();
        let (u, v) = self.pool(&layout, context, response);
        let p = self.params();
        let d = layout.d;
        let (logit, features, hidden) = match self.spec().kind {
            MatcherKind::MeanEmbeddingBilinear => {
                let w = &p[layout.weight..layout.weight + d * d];
                let mut z = p[layout.bias];
                for (i, ui) in u.iter().enumerate() {
                    let row = &w[i * d..(i + 1) * d];
                    let wv: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                    z += ui * wv;
                }
                (z, Vec::new(), Vec::new())
            }
            MatcherKind::InteractionMlp => {
                let mut f = Vec::with_capacity(3 * d);
                f.extend_from_slice(&u);
                f.extend_from_slice(&v);
                f.extend(u.iter().zip(&v).map(|(a, b)| a * b));
                let w1 = &p[layout.weight..layout.bias];
                let b1 = &p[layout.bias..layout.out_weight];
                let hidden: Vec<f64> = (0..layout.h)
                    .map(|j| {
                        let row = &w1[j * 3 * d..(j + 1) * 3 * d];
                        let pre: f64 = b1[j] + row.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
                        pre.tanh()
                    })
                    .collect();
                let w2 = &p[layout.out_weight..layout.out_bias];
                let z = p[layout.out_bias] + w2.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
                (z, f, hidden)
            }
        };
        Forward {
            u,
            v,
            logit,
            score: sigmoid(logit),
            features,
            hidden,
        }
    }

    /// Accumulates `dscore · ∂s/∂θ` into `grad`.
    pub(crate) fn backward(
        &self,
        fwd: &Forward,
        context: &[Utterance],
        response: &[TokenId],
        dscore: f64,
        grad: &mut [f64],
    ) {
        if dscore == 0.0 || fwd.logit.abs() >= LOGIT_CLAMP {
            return;
        }
        let dz = dscore * fwd.score * (1.0 - fwd.score);
        let layout = self.layout();
        let d = layout.d;
        let p = self.params();
        let mut du = vec![0.0; d];
        let mut dv = vec![0.0; d];

        match self.spec().kind {
            MatcherKind::MeanEmbeddingBilinear => {
                let w = &p[layout.weight..layout.weight + d * d];
                for i in 0..d {
                    let row = &w[i * d..(i + 1) * d];
                    let grow = &mut grad[layout.weight + i * d..layout.weight + (i + 1) * d];
                    let mut wv = 0.0;
                    for j in 0..d {
                        grow[j] += dz * fwd.u[i] * fwd.v[j];
                        wv += row[j] * fwd.v[j];
                        dv[j] += dz * fwd.u[i] * row[j];
                    }
                    du[i] = dz * wv;
                }
                grad[layout.bias] += dz;
            }
            MatcherKind::InteractionMlp => {
                let w1 = &p[layout.weight..layout.bias];
                let w2 = &p[layout.out_weight..layout.out_bias];
                let mut df = vec![0.0; 3 * d];
                for j in 0..layout.h {
                    let a = fwd.hidden[j];
                    grad[layout.out_weight + j] += dz * a;
                    let dpre = dz * w2[j] * (1.0 - a * a);
                    if dpre == 0.0 {
                        continue;
                    }
                    grad[layout.bias + j] += dpre;
                    let row = &w1[j * 3 * d..(j + 1) * 3 * d];
                    let grow = &mut grad[layout.weight + j * 3 * d..layout.weight + (j + 1) * 3 * d];
                    for k in 0..3 * d {
                        grow[k] += dpre * fwd.features[k];
                        df[k] += dpre * row[k];
                    }
                }
                grad[layout.out_bias] += dz;
                for i in 0..d {
                    du[i] = df[i] + df[2 * d + i] * fwd.v[i];
                    dv[i] = df[d + i] + df[2 * d + i] * fwd.u[i];
                }
            }
        }

        let turn_scale = 1.0 / context.len() as f64;
        for utt in context {
            scatter_embedding(grad, d, utt, &du, turn_scale);
        }
        scatter_embedding(grad, d, response, &dv, 1.0);
    }
}
