//! Combine the agent-model distribution with the knowledge-base distribution
//! via a gamma-weighted argmax over the available action set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::ActionScores;

pub const PROB_SUM_TOL: f64 = 1e-9;

/// Probability vector over the available action set, aligned by index with
/// the action-id enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub action_ids: Vec<String>,
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(action_ids: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if action_ids.len() != probs.len() {
            return Err(Error::LengthMismatch {
                expected: action_ids.len(),
                got: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput("negative or non-finite probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(ActionDistribution { action_ids, probs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbFallback {
    AgentOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub gamma: f64,
    pub kb_fallback: KbFallback,
}

impl FusionConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!("gamma {gamma} outside [0,1]")));
        }
        Ok(FusionConfig {
            gamma,
            kb_fallback: KbFallback::AgentOnly,
        })
    }
}

/// Normalize raw per-action scores into a distribution. Scores that already
/// sum to 1 (within 1e-6) are renormalized directly; anything else goes
/// through a softmax.
pub fn normalize_agent_scores(scores: &ActionScores) -> Result<ActionDistribution> {
    if scores.entries.is_empty() {
        return Err(Error::InvalidInput("empty action scores".into()));
    }
    let raw: Vec<f64> = scores.entries.iter().map(|(_, s)| *s).collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::AllZeroScores);
    }
    let ids: Vec<String> = scores.entries.iter().map(|(a, _)| a.clone()).collect();
    let probs = if (sum - 1.0).abs() <= 1e-6 {
        raw.iter().map(|s| s / sum).collect::<Vec<_>>()
    } else {
        // softmax, shifted by the max for stability
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = raw.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| e / z).collect()
    };
    ActionDistribution::new(ids, probs)
}

/// Gamma-weighted argmax over the fused distribution. A missing `p_know`
/// (KB-silent step) falls back to the pure agent argmax. Ties break toward
/// the lowest enumeration index.
pub fn fuse_argmax(
    p_agent: &ActionDistribution,
    p_know: Option<&ActionDistribution>,
    config: &FusionConfig,
) -> Result<(String, Vec<f64>)> {
    let fused: Vec<f64> = match p_know {
        Some(k) => {
            if k.action_ids != p_agent.action_ids {
                return Err(Error::EnumerationMismatch);
            }
            p_agent
                .probs
                .iter()
                .zip(&k.probs)
                .map(|(a, b)| config.gamma * a + (1.0 - config.gamma) * b)
                .collect()
        }
        None => p_agent.probs.clone(),
    };
    let mut best = 0;
    for (i, v) in fused.iter().enumerate() {
        if *v > fused[best] {
            best = i;
        }
    }
    Ok((p_agent.action_ids[best].clone(), fused))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(probs: &[f64]) -> ActionDistribution {
        let ids = (0..probs.len()).map(|i| format!("a{i}")).collect();
        ActionDistribution::new(ids, probs.to_vec()).unwrap()
    }

    fn scores(vals: &[f64]) -> ActionScores {
        ActionScores {
            entries: vals
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("a{i}"), *v))
                .collect(),
        }
    }

    #[test]
    fn already_normalized_passes_through() {
        let d = normalize_agent_scores(&scores(&[0.7, 0.3])).unwrap();
        assert!((d.probs[0] - 0.7).abs() < 1e-12);
        assert!((d.probs[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn all_zero_scores_error() {
        assert!(matches!(
            normalize_agent_scores(&scores(&[0.0, 0.0])),
            Err(Error::AllZeroScores)
        ));
    }

    #[test]
    fn softmax_on_raw_logit_like_scores() {
        let d = normalize_agent_scores(&scores(&[1.0, 2.0, 3.0])).unwrap();
        let expected = [0.0900, 0.2447, 0.6652];
        for (p, e) in d.probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-4, "{p} vs {e}");
        }
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < PROB_SUM_TOL);
    }

    #[test]
    fn gamma_degenerate_ends() {
        let pa = dist(&[0.7, 0.3]);
        let pk = dist(&[0.0, 1.0]);
        let (a, _) = fuse_argmax(&pa, Some(&pk), &FusionConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(a, "a0");
        let (a, _) = fuse_argmax(&pa, Some(&pk), &FusionConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(a, "a1");
    }

    #[test]
    fn gamma_mid_fusion() {
        let pa = dist(&[0.5, 0.3, 0.2]);
        let pk = dist(&[0.1, 0.8, 0.1]);
        let (a, fused) = fuse_argmax(&pa, Some(&pk), &FusionConfig::new(0.4).unwrap()).unwrap();
        assert_eq!(a, "a1");
        let expected = [0.26, 0.60, 0.14];
        for (f, e) in fused.iter().zip(expected) {
            assert!((f - e).abs() < 1e-12);
        }
        assert!((fused.iter().sum::<f64>() - 1.0).abs() < PROB_SUM_TOL);
    }

    #[test]
    fn kb_silent_falls_back_to_agent() {
        let pa = dist(&[0.2, 0.5, 0.3]);
        let (a, fused) = fuse_argmax(&pa, None, &FusionConfig::new(0.4).unwrap()).unwrap();
        assert_eq!(a, "a1");
        assert_eq!(fused, pa.probs);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let pa = dist(&[0.5, 0.5]);
        let (a, _) = fuse_argmax(&pa, None, &FusionConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(a, "a0");
    }

    #[test]
    fn enumeration_mismatch_rejected() {
        let pa = dist(&[0.5, 0.5]);
        let pk = ActionDistribution::new(vec!["x".into(), "y".into()], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            fuse_argmax(&pa, Some(&pk), &FusionConfig::new(0.5).unwrap()),
            Err(Error::EnumerationMismatch)
        ));
    }
}
