//! Non-neural reference predictors.

use std::str::FromStr;

use fxchain_core::corpus::{record_rng, sample_chain, MAX_CHAIN_LENGTH};
use fxchain_core::metrics::{effect_accuracy, order_spearman};
use fxchain_core::{FxChain, FxRegistry, Regime};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Predicts no processing at all.
    NoFx,
    /// Random length, subset, order and parameters.
    RandomFx,
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_fx" | "no-fx" => Ok(Self::NoFx),
            "random_fx" | "random-fx" => Ok(Self::RandomFx),
            other => Err(format!("unknown baseline `{other}` (no_fx, random_fx)")),
        }
    }
}

pub fn baseline_predict<R: Rng + ?Sized>(
    kind: BaselineKind,
    rng: &mut R,
    registry: &FxRegistry,
    regime: Regime,
) -> FxChain {
    match kind {
        BaselineKind::NoFx => FxChain::empty(),
        BaselineKind::RandomFx => {
            let length = rng.gen_range(1..=MAX_CHAIN_LENGTH.min(registry.modules.len()));
            sample_chain(rng, length, regime, registry).expect("length within pool")
        }
    }
}

/// Per-module agreement probability when both chains are drawn from the
/// random policy: each module is present with probability E[length] / 9.
pub fn random_fx_expected_accuracy(pool: usize) -> f64 {
    let max_len = MAX_CHAIN_LENGTH.min(pool);
    let mean_len = (1 + max_len) as f64 / 2.0;
    let p = mean_len / pool as f64;
    p * p + (1.0 - p) * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Half width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub n: usize,
}

impl MeanEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        Self {
            mean,
            ci95: 1.96 * (var / n as f64).sqrt(),
            n,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.ci95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFxStats {
    pub trials: usize,
    pub effect_accuracy: MeanEstimate,
    pub order_correlation: MeanEstimate,
    pub undefined_correlations: usize,
    pub expected_accuracy: f64,
}

/// Random-Fx predictions scored against random ground truth. Trial `i`
/// draws from its own RNG stream, so results do not depend on threading.
pub fn random_fx_monte_carlo(
    trials: usize,
    seed: u64,
    registry: &FxRegistry,
    regime: Regime,
) -> RandomFxStats {
    use rayon::prelude::*;
    let results: Vec<(f64, Option<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(seed, i);
            let gt = baseline_predict(BaselineKind::RandomFx, &mut rng, registry, regime);
            let pred = baseline_predict(BaselineKind::RandomFx, &mut rng, registry, regime);
            (
                effect_accuracy(&pred, &gt, registry),
                order_spearman(&pred, &gt, registry),
            )
        })
        .collect();
    let acc: Vec<f64> = results.iter().map(|r| r.0).collect();
    let corr: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
    RandomFxStats {
        trials,
        effect_accuracy: MeanEstimate::from_samples(&acc),
        order_correlation: MeanEstimate::from_samples(&corr),
        undefined_correlations: trials - corr.len(),
        expected_accuracy: random_fx_expected_accuracy(registry.modules.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fxchain_core::registry_default;

    #[test]
    fn no_fx_is_empty() {
        let reg = registry_default();
        let mut rng = record_rng(1, 0);
        for _ in 0..10 {
            assert!(
                baseline_predict(BaselineKind::NoFx, &mut rng, &reg, Regime::Coarse).is_empty()
            );
        }
    }

    #[test]
    fn random_fx_lengths_cover_range() {
        let reg = registry_default();
        let mut rng = record_rng(2, 0);
        let mut seen = [false; 10];
        for _ in 0..2000 {
            let c = baseline_predict(BaselineKind::RandomFx, &mut rng, &reg, Regime::Coarse);
            seen[c.len()] = true;
        }
        assert!(!seen[0]);
        assert!(seen[1..].iter().all(|&s| s));
    }

    #[test]
    fn expected_accuracy_by_hand() {
        // p = 5/9: (25 + 16) / 81
        assert!((random_fx_expected_accuracy(9) - 41.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn small_monte_carlo_is_plausible() {
        let reg = registry_default();
        let stats = random_fx_monte_carlo(4000, 7, &reg, Regime::Coarse);
        assert_eq!(stats.undefined_correlations, 0);
        assert!(
            (stats.effect_accuracy.mean - 41.0 / 81.0).abs() < 4.0 * stats.effect_accuracy.ci95
        );
        assert!(stats.order_correlation.mean.abs() < 0.05);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("no_fx".parse::<BaselineKind>().unwrap(), BaselineKind::NoFx);
        assert_eq!(
            "random-fx".parse::<BaselineKind>().unwrap(),
            BaselineKind::RandomFx
        );
        assert!("x".parse::<BaselineKind>().is_err());
    }
}
