//! Clipped-surrogate actor loss and squared-error critic loss with exact
//! gradients with respect to the network parameters.

use num_traits::Float;
use rand::Rng;

use super::net::{log_softmax, Cache, Mlp};

/// One minibatch of actor training data.
#[derive(Debug, Clone, Copy)]
pub struct ActorBatch<'a, F> {
    /// `batch × input` observations.
    pub obs: &'a [F],
    pub actions: &'a [usize],
    pub old_log_probs: &'a [F],
    pub advantages: &'a [F],
}

impl<F> ActorBatch<'_, F> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss `−mean(min(ρA, clip(ρ, 1±ε)A)) − c_ent·mean(H)`. When `grads` is
/// given, `∂loss/∂θ` is accumulated into it.
pub fn actor_loss<F: Float, R: Rng + ?Sized>(
    net: &Mlp<F>,
    batch: ActorBatch<'_, F>,
    clip: f64,
    entropy_coef: f64,
    dropout_rng: Option<&mut R>,
    grads: Option<&mut [F]>,
) -> ActorLoss {
    let n = batch.len();
    let k = net.spec().output;
    let mut cache = Cache::default();
    let logits = net.forward(batch.obs, n, dropout_rng, Some(&mut cache));
    let inv_n = 1.0 / n as f64;
    let mut out = ActorLoss::default();
    let mut grad_logits = vec![F::zero(); n * k];
    for s in 0..n {
        let row = &logits[s * k..(s + 1) * k];
        let logp = log_softmax(row);
        let probs: Vec<f64> = logp.iter().map(|v| v.to_f64().unwrap().exp()).collect();
        let logp64: Vec<f64> = logp.iter().map(|v| v.to_f64().unwrap()).collect();
        let entropy: f64 = -probs.iter().zip(&logp64).map(|(p, l)| p * l).sum::<f64>();
        let a = batch.actions[s];
        let adv = batch.advantages[s].to_f64().unwrap();
        let log_ratio = logp64[a] - batch.old_log_probs[s].to_f64().unwrap();
        let ratio = log_ratio.exp();
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let unclipped_obj = ratio * adv;
        let surrogate = unclipped_obj.min(clipped * adv);
        out.surrogate += surrogate * inv_n;
        out.entropy += entropy * inv_n;
        out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
        if (ratio - 1.0).abs() > clip {
            out.clip_fraction += inv_n;
        }
        // ∂(−surrogate)/∂logp_a is −ρA while the unclipped branch is the minimum
        let active = unclipped_obj <= clipped * adv;
        let g_logp = if active { -ratio * adv } else { 0.0 };
        let g = &mut grad_logits[s * k..(s + 1) * k];
        for j in 0..k {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let d_surr = g_logp * (onehot - probs[j]);
            let d_ent = entropy_coef * probs[j] * (logp64[j] + entropy);
            g[j] = F::from((d_surr + d_ent) * inv_n).unwrap();
        }
    }
    out.loss = -out.surrogate - entropy_coef * out.entropy;
    if let Some(grads) = grads {
        net.backward(&cache, &grad_logits, grads);
    }
    out
}

/// `mean((v − R)²)`; accumulates gradients when `grads` is given.
pub fn critic_loss<F: Float, R: Rng + ?Sized>(
    net: &Mlp<F>,
    obs: &[F],
    returns: &[F],
    dropout_rng: Option<&mut R>,
    grads: Option<&mut [F]>,
) -> f64 {
    let n = returns.len();
    let mut cache = Cache::default();
    let values = net.forward(obs, n, dropout_rng, Some(&mut cache));
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![F::zero(); n];
    for s in 0..n {
        let err = values[s].to_f64().unwrap() - returns[s].to_f64().unwrap();
        loss += err * err * inv_n;
        grad[s] = F::from(2.0 * err * inv_n).unwrap();
    }
    if let Some(grads) = grads {
        net.backward(&cache, &grad, grads);
    }
    loss
}
