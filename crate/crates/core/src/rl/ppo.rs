//! Clipped-surrogate PPO update for one agent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::agent::{AgentParams, PpoConfig, Transition};
use super::gae::gae_with_next;
use super::nn::log_softmax;
use crate::safety::Action;
use crate::util::rng_for;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub samples: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// The update hit a non-finite gradient and the parameters were restored.
    pub aborted: bool,
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Whether the clipped branch is the active one; its gradient is zero.
fn clipped_branch_active(ratio: f64, adv: f64, eps: f64) -> bool {
    ratio.clamp(1.0 - eps, 1.0 + eps) * adv < ratio * adv
}

/// Per-sample surrogate `min(ρA, clip(ρ)A) + c_H·H(π)` and its gradient with
/// respect to the logits.
pub fn surrogate_and_grad(
    logits: &[f64],
    action: Action,
    old_log_prob: f64,
    adv: f64,
    eps: f64,
    entropy_coef: f64,
) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let a = action.index();
    let ratio = (logp[a] - old_log_prob).exp();
    let entropy = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let obj = clipped_objective(ratio, adv, eps) + entropy_coef * entropy;

    let mut grad = vec![0.0; logits.len()];
    if !clipped_branch_active(ratio, adv, eps) {
        // d(ρA)/dz_j = ρA·(1[j=a] − p_j)
        for j in 0..grad.len() {
            grad[j] = ratio * adv * (if j == a { 1.0 } else { 0.0 } - p[j]);
        }
    }
    // dH/dz_j = −p_j (log p_j + H)
    for j in 0..grad.len() {
        grad[j] += entropy_coef * (-p[j] * (logp[j] + entropy));
    }
    (obj, grad)
}

fn global_norm(gs: &[&[f64]]) -> f64 {
    gs.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Clipped PPO over the agent's own transitions, in time order.
///
/// Advantages come from GAE on the stored critic values and are normalized
/// per batch. The observation normalizer absorbs the batch only after the
/// optimization epochs, so the first epoch sees ratio one. Any non-finite
/// gradient restores the original parameters.
pub fn ppo_update(params: &mut AgentParams, batch: &[Transition], cfg: &PpoConfig) -> UpdateStats {
    let n = batch.len();
    if n == 0 {
        return UpdateStats::default();
    }
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = batch.iter().map(|t| t.value).collect();
    let next_values: Vec<f64> = batch.iter().map(|t| t.next_value).collect();
    let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
    let Ok(adv) = gae_with_next(&rewards, &values, &next_values, &dones, cfg.gamma, cfg.gae_lambda) else {
        return UpdateStats { samples: n, aborted: true, ..UpdateStats::default() };
    };
    let returns: Vec<f64> = adv.iter().zip(&values).map(|(a, v)| a + v).collect();
    let mean = adv.iter().sum::<f64>() / n as f64;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let norm_adv: Vec<f64> = if std < 1e-8 {
        adv.iter().map(|a| a - mean).collect()
    } else {
        adv.iter().map(|a| (a - mean) / std).collect()
    };

    let inputs: Vec<Vec<f64>> = batch.iter().map(|t| params.normalized(&t.obs)).collect();
    let snapshot = params.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(&[params.seed, params.update_count, 0x99]);
    let mut stats = UpdateStats { samples: n, ..UpdateStats::default() };
    let mut terms = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let m = chunk.len() as f64;
            let mut pg = vec![0.0; params.policy.n_params()];
            let mut vg = vec![0.0; params.value.n_params()];
            for &k in chunk {
                let t = &batch[k];
                let (action, old_lp) = t.trained_action(cfg.train_on);
                let cache = params.policy.forward_cached(&inputs[k]);
                let logits = cache.output().to_vec();
                let (obj, g) = surrogate_and_grad(&logits, action, old_lp, norm_adv[k], cfg.clip_eps, cfg.entropy_coef);
                // Gradient ascent on the objective: descend on its negation.
                let neg: Vec<f64> = g.iter().map(|x| -x / m).collect();
                params.policy.backward(&cache, &neg, &mut pg);

                let vcache = params.value.forward_cached(&inputs[k]);
                let v = vcache.output()[0];
                let err = v - returns[k];
                params.value.backward(&vcache, &[cfg.value_coef * err / m], &mut vg);

                let logp = log_softmax(&logits);
                let ratio = (logp[action.index()] - old_lp).exp();
                let ent = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
                stats.policy_loss -= obj - cfg.entropy_coef * ent;
                stats.value_loss += 0.5 * err * err;
                stats.entropy += ent;
                stats.approx_kl += old_lp - logp[action.index()];
                if (ratio - 1.0).abs() > cfg.clip_eps {
                    stats.clip_fraction += 1.0;
                }
                terms += 1;
            }
            let gn = global_norm(&[&pg, &vg]);
            if !gn.is_finite() {
                *params = snapshot;
                return UpdateStats { samples: n, aborted: true, ..UpdateStats::default() };
            }
            let scale = if gn > cfg.max_grad_norm { cfg.max_grad_norm / gn } else { 1.0 };
            pg.iter_mut().chain(vg.iter_mut()).for_each(|g| *g *= scale);
            params.policy_opt.step(params.policy.params_mut(), &pg);
            params.value_opt.step(params.value.params_mut(), &vg);
        }
    }
    if !params.is_finite() {
        *params = snapshot;
        return UpdateStats { samples: n, aborted: true, ..UpdateStats::default() };
    }
    let raw: Vec<Vec<f64>> = batch.iter().map(|t| t.obs.as_array().to_vec()).collect();
    params.norm.update(&raw);
    params.update_count += 1;
    let d = terms.max(1) as f64;
    stats.policy_loss /= d;
    stats.value_loss /= d;
    stats.entropy /= d;
    stats.approx_kl /= d;
    stats.clip_fraction /= d;
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_one_contributes_advantage() {
        assert_eq!(clipped_objective(1.0, 0.7, 0.2), 0.7);
        let logits = [0.1, -0.2, 0.3, 0.0, 0.5, -0.1];
        let lp = log_softmax(&logits)[2];
        let (obj, _) = surrogate_and_grad(&logits, Action::ALL[2], lp, 0.7, 0.2, 0.0);
        assert!((obj - 0.7).abs() < 1e-12);
    }

    #[test]
    fn clip_arithmetic() {
        assert!((clipped_objective(1.5, 2.0, 0.2) - 2.4).abs() < 1e-12);
        assert!((clipped_objective(0.5, -1.0, 0.2) - -0.8).abs() < 1e-12);
        assert!((clipped_objective(0.5, 1.0, 0.2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clipped_branch_has_zero_surrogate_gradient() {
        let logits = [0.0; 6];
        let lp = log_softmax(&logits)[4];
        let (_, g) = surrogate_and_grad(&logits, Action::ALL[4], lp - 1.0, 1.0, 0.2, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }
}
