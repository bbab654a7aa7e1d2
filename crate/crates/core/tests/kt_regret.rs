mod common;

use common::{best_constant_bits, closed_form_bits, GOLDEN_MAX_REGRET};
use ulz_core::ctree::{kt_sequence_codelength, KtSequenceEstimator};

/// Alphabet size of the regret bound's leading coefficient.
const BINARY: f64 = 2.0;

#[test]
fn closed_form_oracle_reproduces_golden() {
    for t in 1..=12usize {
        let max = (0..=t)
            .map(|n1| closed_form_bits(t - n1, n1) - best_constant_bits(t - n1, n1))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((max - GOLDEN_MAX_REGRET[t - 1]).abs() < 1e-12, "T={t}: {max}");
    }
}

#[test]
fn exhaustive_regret_matches_golden_and_bound() {
    for t in 1..=12usize {
        let mut max = f64::NEG_INFINITY;
        for bits in 0u32..(1 << t) {
            let seq: Vec<usize> = (0..t).map(|i| ((bits >> i) & 1) as usize).collect();
            let n1 = seq.iter().sum::<usize>();
            let code = kt_sequence_codelength(&seq, 2).unwrap();
            assert!((code - closed_form_bits(t - n1, n1)).abs() < 1e-9);
            let regret = code - best_constant_bits(t - n1, n1);
            assert!(regret <= BINARY / 2.0 * (t as f64).log2() + 2.0);
            max = max.max(regret);
        }
        assert!((max - GOLDEN_MAX_REGRET[t - 1]).abs() < 1e-9, "T={t}: {max}");
    }
}

#[test]
fn constant_sequence_regret() {
    for t in 1..=12usize {
        let bits = kt_sequence_codelength(&vec![1; t], 2).unwrap();
        assert!(bits <= (t as f64).log2() + 2.0);
    }
}

#[test]
fn estimator_probabilities_are_proper() {
    let mut est = KtSequenceEstimator::new(3).unwrap();
    for y in [0, 2, 2, 1, 2, 0, 2, 2] {
        let d = est.dist();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.iter().all(|&p| p > 0.0 && p < 1.0));
        est.update(y).unwrap();
    }
    assert!(kt_sequence_codelength(&[], 2).is_err());
    assert!(kt_sequence_codelength(&[3], 2).is_err());
}
