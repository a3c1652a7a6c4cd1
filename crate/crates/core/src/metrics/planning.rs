//! Chain-level metrics: which effects, in what order, with which settings.

use crate::chain::FxChain;
use crate::registry::FxRegistry;

/// Fraction of registry modules whose presence/absence the prediction gets
/// right (per-module micro average).
pub fn effect_accuracy(pred: &FxChain, gt: &FxChain, registry: &FxRegistry) -> f64 {
    let n = registry.modules.len();
    let agree = registry
        .modules
        .iter()
        .filter(|m| pred.position(&m.name).is_some() == gt.position(&m.name).is_some())
        .count();
    agree as f64 / n as f64
}

/// Position rank of every registry module: 1-based chain position, or
/// pool size + 1 when absent.
pub fn module_ranks(chain: &FxChain, registry: &FxRegistry) -> Vec<f64> {
    let missing = (registry.modules.len() + 1) as f64;
    registry
        .modules
        .iter()
        .map(|m| chain.position(&m.name).map_or(missing, |p| (p + 1) as f64))
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation, or `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson needs equal lengths");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation of the module position ranks, tie-aware.
/// `None` marks an undefined correlation (a constant rank vector, e.g. an
/// empty chain).
pub fn order_spearman(pred: &FxChain, gt: &FxChain, registry: &FxRegistry) -> Option<f64> {
    let p = average_ranks(&module_ranks(pred, registry));
    let g = average_ranks(&module_ranks(gt, registry));
    pearson(&p, &g)
}

/// Mean absolute difference of coarse-normalized parameters over the modules
/// both chains contain. `None` when they share no module.
pub fn param_mae(pred: &FxChain, gt: &FxChain, registry: &FxRegistry) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for module in &registry.modules {
        let (Some(pc), Some(gc)) = (pred.call(&module.name), gt.call(&module.name)) else {
            continue;
        };
        for param in &module.params {
            let (Some(pv), Some(gv)) = (pc.arg(&param.name), gc.arg(&param.name)) else {
                continue;
            };
            let r = &param.coarse;
            let norm = |v: f64| ((v - r.min) / r.span()).clamp(0.0, 1.0);
            total += (norm(pv) - norm(gv)).abs();
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::FxCall;
    use crate::corpus::{record_rng, sample_chain};
    use crate::registry::{registry_default, Regime};
    use proptest::prelude::*;

    fn chain_of(tools: &[&str]) -> FxChain {
        let reg = registry_default();
        FxChain::new(
            tools
                .iter()
                .map(|t| {
                    let m = reg.module(t).unwrap();
                    FxCall::new(t, m.params.iter().map(|p| (p.name.clone(), p.coarse.min)))
                })
                .collect(),
        )
    }

    #[test]
    fn accuracy_examples() {
        let reg = registry_default();
        let gt = chain_of(&["gain", "reverb", "delay"]);
        assert_eq!(effect_accuracy(&gt, &gt, &reg), 1.0);
        assert_eq!(effect_accuracy(&FxChain::empty(), &gt, &reg), 6.0 / 9.0);
        let gt2 = chain_of(&["gain", "reverb"]);
        assert_eq!(effect_accuracy(&chain_of(&["gain"]), &gt2, &reg), 8.0 / 9.0);
    }

    #[test]
    fn spearman_identity_and_reversal() {
        let reg = registry_default();
        let names: Vec<&str> = reg.modules.iter().map(|m| m.name.as_str()).collect();
        let fwd = chain_of(&names);
        let rev: Vec<&str> = names.iter().rev().copied().collect();
        assert_eq!(order_spearman(&fwd, &fwd, &reg), Some(1.0));
        let r = order_spearman(&chain_of(&rev), &fwd, &reg).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let short = chain_of(&["delay", "three_band_equalizer"]);
        assert!((order_spearman(&short, &short, &reg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_undefined_for_empty() {
        let reg = registry_default();
        assert_eq!(
            order_spearman(&FxChain::empty(), &FxChain::empty(), &reg),
            None
        );
        assert_eq!(
            order_spearman(&FxChain::empty(), &chain_of(&["gain"]), &reg),
            None
        );
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(
            average_ranks(&[10.0, 1.0, 10.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn mae_compressor_example() {
        let reg = registry_default();
        let comp = |thr: f64| {
            FxChain::new(vec![FxCall::new(
                "compressor",
                [
                    ("threshold_db", thr),
                    ("ratio", 4.0),
                    ("attack_ms", 10.0),
                    ("release_ms", 100.0),
                ],
            )])
        };
        let mae = param_mae(&comp(-19.0), &comp(-14.0), &reg).unwrap();
        assert!((mae - (5.0 / 35.0) / 4.0).abs() < 1e-12);
        assert!((mae - 0.0357).abs() < 5e-5);
        assert_eq!(param_mae(&comp(-19.0), &comp(-19.0), &reg), Some(0.0));
    }

    #[test]
    fn mae_absent_without_common_module() {
        let reg = registry_default();
        assert_eq!(
            param_mae(&chain_of(&["gain"]), &chain_of(&["reverb"]), &reg),
            None
        );
        assert_eq!(
            param_mae(&FxChain::empty(), &chain_of(&["reverb"]), &reg),
            None
        );
    }

    #[test]
    fn mae_monte_carlo_bounds() {
        let reg = registry_default();
        let mut rng = record_rng(11, 0);
        for _ in 0..2000 {
            let a = sample_chain(&mut rng, 9, Regime::Coarse, &reg).unwrap();
            let b = sample_chain(&mut rng, 9, Regime::Coarse, &reg).unwrap();
            let m = param_mae(&a, &b, &reg).unwrap();
            assert!((0.0..=1.0).contains(&m));
        }
    }

    proptest! {
        #[test]
        fn metric_symmetry_and_bounds(seed in any::<u64>(), la in 1usize..=9, lb in 1usize..=9) {
            let reg = registry_default();
            let mut rng = record_rng(seed, 0);
            let a = sample_chain(&mut rng, la, Regime::Coarse, &reg).unwrap();
            let b = sample_chain(&mut rng, lb, Regime::Fine, &reg).unwrap();
            prop_assert_eq!(effect_accuracy(&a, &b, &reg), effect_accuracy(&b, &a, &reg));
            prop_assert_eq!(param_mae(&a, &b, &reg), param_mae(&b, &a, &reg));
            if let Some(r) = order_spearman(&a, &b, &reg) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            prop_assert!((order_spearman(&a, &a, &reg).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
