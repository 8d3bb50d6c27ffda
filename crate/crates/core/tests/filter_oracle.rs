mod common;

use common::{brute_predictions, joint, random_hmm, random_seq, rng};
use hmmforge::hmm::{cross_entropy, filter_init, filter_run, filter_step, log_likelihood};
use proptest::prelude::*;

fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() <= tol, "{u} vs {v}");
        }
    }
}

#[test]
fn step_by_step_matches_enumeration() {
    let mut r = rng(2024);
    let p = random_hmm(3, 4, &mut r);
    let seq = random_seq(6, 4, &mut r);
    let want = brute_predictions(&p, &seq);
    let mut state = filter_init(&p);
    for (t, &z) in seq.iter().enumerate() {
        state = filter_step(&state, &p, z).unwrap();
        for (u, v) in state.prediction.iter().zip(&want[t]) {
            assert!((u - v).abs() < 1e-12);
        }
        for v in [&state.prior, &state.posterior, &state.prediction] {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!(state.likelihood.iter().all(|&e| (0.0..=1.0).contains(&e)));
    }
}

#[test]
fn fifty_random_instances_match_enumeration() {
    let mut r = rng(7);
    for _ in 0..50 {
        let d = r.random_range(1..=4);
        let m = r.random_range(2..=5);
        let t = r.random_range(1..=8);
        let p = random_hmm(d, m, &mut r);
        let seq = random_seq(t, m, &mut r);
        assert_close(&filter_run(&p, &seq).unwrap(), &brute_predictions(&p, &seq), 1e-10);
    }
}

#[test]
fn log_likelihood_matches_enumeration() {
    let mut r = rng(99);
    for _ in 0..20 {
        let p = random_hmm(3, 4, &mut r);
        let seq = random_seq(6, 4, &mut r);
        assert!((log_likelihood(&p, &seq).unwrap() - joint(&p, &seq).ln()).abs() < 1e-10);
    }
}

use rand::Rng;

proptest! {
    #[test]
    fn predictions_are_normalized(seed in any::<u64>(), d in 1usize..6, m in 2usize..7, t in 1usize..40) {
        let mut r = rng(seed);
        let p = random_hmm(d, m, &mut r);
        let seq = random_seq(t, m, &mut r);
        for pred in filter_run(&p, &seq).unwrap() {
            prop_assert!((pred.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(pred.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn filter_is_causal(seed in any::<u64>(), t in 2usize..12, cut in 0usize..11) {
        let mut r = rng(seed);
        let p = random_hmm(3, 4, &mut r);
        let seq = random_seq(t, 4, &mut r);
        let cut = cut % (t - 1);
        let mut changed = seq.clone();
        for z in changed.iter_mut().skip(cut + 1) {
            *z = (*z + 1) % 4;
        }
        let a = filter_run(&p, &seq).unwrap();
        let b = filter_run(&p, &changed).unwrap();
        prop_assert_eq!(&a[..=cut], &b[..=cut]);
    }

    #[test]
    fn chain_rule_decomposition(seed in any::<u64>(), t in 2usize..9) {
        // -sum_t log p_t(Z_t) = -(log P(Z_{0:T}) - log P(Z_0)), with P by enumeration.
        let mut r = rng(seed);
        let p = random_hmm(3, 4, &mut r);
        let seq = random_seq(t, 4, &mut r);
        let preds = filter_run(&p, &seq[..t - 1]).unwrap();
        let nll = cross_entropy(&preds, &seq[1..]).unwrap().loss * (t - 1) as f64;
        let want = -(joint(&p, &seq).ln() - joint(&p, &seq[..1]).ln());
        prop_assert!((nll - want).abs() < 1e-9, "{} vs {}", nll, want);
    }
}
