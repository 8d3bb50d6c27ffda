mod common;

use common::{central_differences, gradient_error, random_seq, rng};
use hmmforge::beliefnet::{backward, batch_gradient, forward, LogitParams};
use hmmforge::hmm::{cross_entropy, dataset_loss, filter_run, SequenceDataset};
use hmmforge::matrix::Matrix;
use hmmforge::rng::stream;
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-5;

fn loss(lp: &LogitParams, seq: &[usize]) -> f64 {
    forward(lp, seq).unwrap().loss
}

fn finite_difference(lp: &LogitParams, f: impl Fn(&LogitParams) -> f64) -> Vec<Vec<f64>> {
    central_differences(lp, H, f)
}

fn check_against_fd(analytic: &LogitParams, fd: &[Vec<f64>]) {
    let (rel, abs) = gradient_error(analytic, fd, 1e-8);
    assert!(rel < 1e-4, "worst relative gradient error {rel}");
    assert!(abs <= 1e-8, "worst absolute error near zero {abs}");
}

#[test]
fn two_state_instance() {
    let lp = LogitParams::random(2, 2, 1.0, &mut stream(17, 0));
    let seq = [1, 0, 1];
    let g = backward(&lp, &forward(&lp, &seq).unwrap().tape);
    check_against_fd(&g, &finite_difference(&lp, |p| loss(p, &seq)));
}

#[test]
fn twenty_random_instances() {
    let mut r = rng(31);
    for case in 0..20 {
        let d = r.random_range(1..=4);
        let m = r.random_range(2..=5);
        let t = r.random_range(2..=6);
        let lp = LogitParams::random(d, m, 1.5, &mut stream(case, 1));
        let seq = random_seq(t, m, &mut r);
        let g = backward(&lp, &forward(&lp, &seq).unwrap().tape);
        check_against_fd(&g, &finite_difference(&lp, |p| loss(p, &seq)));
    }
}

#[test]
fn dropout_gradient_matches_fixed_mask() {
    // With a fixed mask stream the dropout path is deterministic and differentiable.
    let lp = LogitParams::random(4, 3, 1.0, &mut stream(5, 0));
    let seq: &[usize] = &[0, 2, 1, 1, 2, 0];
    let f = |p: &LogitParams| batch_gradient(p, &[seq], 0.3, &mut stream(77, 0)).unwrap().0;
    let (_, g) = batch_gradient(&lp, &[seq], 0.3, &mut stream(77, 0)).unwrap();
    check_against_fd(&g, &finite_difference(&lp, f));
}

#[test]
fn batch_gradient_is_mean_of_singles() {
    let mut r = rng(8);
    let lp = LogitParams::random(3, 4, 1.0, &mut stream(2, 0));
    let seqs: Vec<Vec<usize>> = (0..5).map(|_| random_seq(7, 4, &mut r)).collect();
    let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
    let (l, g) = batch_gradient(&lp, &refs, 0.0, &mut stream(0, 0)).unwrap();
    let mut mean = LogitParams::zeros(3, 4);
    let mut mean_loss = 0.0;
    for s in &seqs {
        let f = forward(&lp, s).unwrap();
        mean_loss += f.loss / 5.0;
        let mut gi = backward(&lp, &f.tape);
        gi.scale(0.2);
        mean.add_assign(&gi);
    }
    assert!((l - mean_loss).abs() < 1e-12);
    for ((_, a), (_, b)) in g.blocks().iter().zip(mean.blocks()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn perfect_model_is_stationary() {
    // Deterministic 3-cycle emitting its state index; logits saturated.
    let big = 40.0;
    let a = Matrix::from_fn(3, 3, |i, j| if j == (i + 1) % 3 { big } else { 0.0 });
    let c = Matrix::from_fn(3, 3, |i, k| if i == k { big } else { 0.0 });
    let lp = LogitParams::new(vec![big, 0.0, 0.0], a, c).unwrap();
    let seq = [0, 1, 2, 0, 1, 2];
    let base = loss(&lp, &seq);
    assert!(base < 1e-12);
    let g = backward(&lp, &forward(&lp, &seq).unwrap().tape);
    for (_, block) in g.blocks() {
        assert!(block.iter().all(|x| x.abs() < 1e-12));
    }
    for b in 0..3 {
        for i in 0..lp.blocks()[b].1.len() {
            for h in [1e-4, -1e-4] {
                let mut q = lp.clone();
                q.blocks_mut()[b].1[i] += h;
                assert!((loss(&q, &seq) - base).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn objective_identity_on_full_dataset() {
    let mut r = rng(12);
    let lp = LogitParams::random(3, 5, 1.0, &mut stream(3, 0));
    let seqs: Vec<Vec<usize>> = (0..6).map(|_| random_seq(9, 5, &mut r)).collect();
    let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
    let (l, _) = batch_gradient(&lp, &refs, 0.0, &mut stream(0, 0)).unwrap();
    let p = lp.to_probs();
    let want: f64 = seqs
        .iter()
        .map(|s| {
            let preds = filter_run(&p, &s[..s.len() - 1]).unwrap();
            cross_entropy(&preds, &s[1..]).unwrap().loss
        })
        .sum::<f64>()
        / 6.0;
    assert!((l - want).abs() < 1e-12);
    let ds = SequenceDataset::new(5, seqs).unwrap();
    assert!((dataset_loss(&p, &ds).unwrap() - want).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_matches_reference_filter(seed in any::<u64>(), d in 1usize..5, m in 2usize..6, t in 2usize..20) {
        let lp = LogitParams::random(d, m, 2.0, &mut stream(seed, 0));
        let seq = random_seq(t, m, &mut rng(seed ^ 0xabc));
        let f = forward(&lp, &seq).unwrap();
        let want = filter_run(&lp.to_probs(), &seq).unwrap();
        for (a, b) in f.predictions.iter().zip(&want) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_shift_is_a_null_direction(seed in any::<u64>(), shift in -5.0f64..5.0, block in 0usize..3) {
        let (d, m) = (3, 4);
        let lp = LogitParams::random(d, m, 1.0, &mut stream(seed, 0));
        let seq = random_seq(6, m, &mut rng(seed));
        let mut moved = lp.clone();
        let row = (seed % d as u64) as usize;
        match block {
            0 => moved.pi.iter_mut().for_each(|x| *x += shift),
            1 => moved.a.row_mut(row).iter_mut().for_each(|x| *x += shift),
            _ => moved.c.row_mut(row).iter_mut().for_each(|x| *x += shift),
        }
        prop_assert!((loss(&lp, &seq) - loss(&moved, &seq)).abs() < 1e-12);

        let g = backward(&lp, &forward(&lp, &seq).unwrap().tape);
        prop_assert!(g.pi.iter().sum::<f64>().abs() < 1e-10);
        for i in 0..d {
            prop_assert!(g.a.row(i).iter().sum::<f64>().abs() < 1e-10);
            prop_assert!(g.c.row(i).iter().sum::<f64>().abs() < 1e-10);
        }
    }
}
