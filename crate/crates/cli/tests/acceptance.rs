//! Acceptance gate. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any gating criterion fails.
//!
//! The full-scale run (criterion 9) only executes when `HMMFORGE_FULL_SCALE=1`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_predictions, central_differences, gradient_error, random_hmm, random_seq, rng};
use hmmforge::baum_welch::{fit, EmConfig};
use hmmforge::beliefnet::{backward, forward, grid_search, train, LogitParams, TrainConfig};
use hmmforge::datagen::{make_instance, SyntheticConfig};
use hmmforge::eval::{evaluate, perplexity, sweep, Method, SweepConfig, Uniform};
use hmmforge::hmm::{filter_run, param_count, sample_sequences, stationary_distribution};
use hmmforge::rng::stream;
use hmmforge::spectral::{build_observable, estimate_moments, exact_moments, spectral_predict};
use hmmforge::{Error, HmmParams};
use rand::Rng;

type Criterion = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn c1_filter_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = r.random_range(1..=4);
        let m = r.random_range(2..=5);
        let t = r.random_range(1..=8);
        let p = random_hmm(d, m, &mut r);
        let seq = random_seq(t, m, &mut r);
        let got = filter_run(&p, &seq).unwrap();
        for (a, b) in got.iter().zip(brute_predictions(&p, &seq)) {
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    let el = start.elapsed();
    verdict(
        worst <= 1e-10 && within(el, 10),
        format!("max abs error {worst:.2e} (tol 1e-10)"),
    )
}

fn c2_gradient() -> Verdict {
    let start = Instant::now();
    let mut r = rng(31);
    let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let d = r.random_range(1..=4);
        let m = r.random_range(2..=5);
        let t = r.random_range(2..=6);
        let lp = LogitParams::random(d, m, 1.5, &mut stream(case, 1));
        let seq = random_seq(t, m, &mut r);
        let g = backward(&lp, &forward(&lp, &seq).unwrap().tape);
        let fd = central_differences(&lp, 1e-5, |p| forward(p, &seq).unwrap().loss);
        let (rel, abs) = gradient_error(&g, &fd, 1e-8);
        worst = worst.max(rel);
        worst_abs = worst_abs.max(abs);
    }
    let el = start.elapsed();
    verdict(
        worst < 1e-4 && worst_abs <= 1e-8 && within(el, 30),
        format!("max relative error {worst:.2e} (tol 1e-4), max near-zero abs error {worst_abs:.2e} (tol 1e-8)"),
    )
}

fn c3_param_counts() -> Verdict {
    let (a, b) = (param_count(64, 128), param_count(64, 32));
    verdict(
        a == 12_352 && b == 6_208,
        format!("param_count(64,128)={a}, param_count(64,32)={b}"),
    )
}

fn c4_random_baselines() -> Verdict {
    let uniform_loss = |m: usize| {
        let data = sample_sequences(&HmmParams::uniform(1, m).unwrap(), 20, 64, 3).unwrap();
        evaluate(&Uniform(m), &data).unwrap()
    };
    let (l128, l32) = (uniform_loss(128), uniform_loss(32));
    let ppl = perplexity(82f64.ln());
    let pass = (l128 - 4.852).abs() <= 1e-3 && (l32 - 3.466).abs() <= 1e-3 && (ppl - 82.0).abs() <= 1e-6;
    verdict(
        pass,
        format!("ln128 -> {l128:.4}, ln32 -> {l32:.4}, perplexity(ln 82) = {ppl:.9}"),
    )
}

fn c5_baum_welch_monotone() -> Verdict {
    let start = Instant::now();
    let mut worst_drop = 0.0f64;
    for seed in 0..5 {
        let mut cfg = SyntheticConfig::new(4, 6, 100, seed);
        cfg.t = 64;
        let inst = make_instance(&cfg).unwrap();
        let em = EmConfig {
            max_iters: 20,
            restarts: 5,
            seed,
            ll_tolerance: 0.0,
        };
        let (_, report) = fit(&inst.train, 4, &em, &inst.val).unwrap();
        for traj in &report.trajectories {
            for w in traj.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }
    }
    let el = start.elapsed();
    verdict(
        worst_drop <= 1e-9 && within(el, 60),
        format!("largest log-likelihood decrease {worst_drop:.2e} over 25 restarts (tol 1e-9)"),
    )
}

fn c6_spectral() -> Verdict {
    let start = Instant::now();
    let mut r = rng(24);
    let base = random_hmm(2, 3, &mut r);
    let p = base
        .with_initial(stationary_distribution(base.transition()).unwrap())
        .unwrap();
    let fit = build_observable(&exact_moments(&p).unwrap(), 2).unwrap();
    let seq = random_seq(10, 3, &mut r);
    let mut worst = 0.0f64;
    for (a, b) in spectral_predict(&fit.model, &seq)
        .unwrap()
        .iter()
        .zip(filter_run(&p, &seq).unwrap())
    {
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    let two = sample_sequences(&HmmParams::uniform(2, 2).unwrap(), 20, 16, 1).unwrap();
    let failure = build_observable(&estimate_moments(&two).unwrap(), 3);
    let rank_ok =
        matches!(&failure, Err(e @ Error::RankDeficiency { .. }) if e.to_string().contains("rank deficiency"));
    let el = start.elapsed();
    verdict(
        worst <= 1e-6 && rank_ok && within(el, 10),
        format!("(a) max abs error {worst:.2e} (tol 1e-6); (b) d=3 > m=2 rank deficiency raised: {rank_ok}"),
    )
}

fn desk_instance(seed: u64) -> hmmforge::datagen::Instance {
    let mut cfg = SyntheticConfig::new(8, 16, 200, seed);
    cfg.t = 64;
    make_instance(&cfg).unwrap()
}

fn c7_desk_learning() -> Verdict {
    let start = Instant::now();
    let inst = desk_instance(0);
    let cfg = TrainConfig {
        batch_size: 10,
        max_iters: 1000,
        lr: 0.05,
        seed: 0,
        ..TrainConfig::default()
    };
    let out = train(&inst.train, 8, &cfg, &inst.val).unwrap();
    let oracle = evaluate(&inst.params, &inst.val).unwrap();
    let random = 16f64.ln();
    let gap = out.final_val_loss - oracle;
    let margin = random - out.final_val_loss;
    let el = start.elapsed();
    verdict(
        gap <= 0.1 && margin >= 0.5 && within(el, 300),
        format!(
            "val loss {:.4}, oracle {oracle:.4} (gap {gap:.4}, tol 0.1), below ln 16 by {margin:.4} (need 0.5)",
            out.final_val_loss
        ),
    )
}

fn c8_dimension_sweep() -> Verdict {
    let start = Instant::now();
    let dims = [2usize, 4, 8, 16];
    let mut sums = [0.0f64; 4];
    for seed in 0..3 {
        let inst = desk_instance(seed);
        let cfg = SweepConfig::new(vec![Method::BeliefNet], dims.to_vec(), seed);
        let report = sweep(&inst.train, &inst.val, Some(&inst.params), &cfg).unwrap();
        for (s, &d) in sums.iter_mut().zip(&dims) {
            *s += report.loss(Method::BeliefNet, d).expect("belief net cell succeeded");
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / 3.0).collect();
    let rise = mean[0] - mean[2];
    let flat = (mean[2] - mean[3]).abs();
    let el = start.elapsed();
    verdict(
        rise >= 0.2 && flat < 0.1 && within(el, 1200),
        format!(
            "mean loss d=2 {:.4}, d=4 {:.4}, d=8 {:.4}, d=16 {:.4}; d2-d8 {rise:.4} (need 0.2), |d8-d16| {flat:.4} (tol 0.1)",
            mean[0], mean[1], mean[2], mean[3]
        ),
    )
}

fn c9_full_scale() -> Option<Verdict> {
    if std::env::var("HMMFORGE_FULL_SCALE").as_deref() != Ok("1") {
        return None;
    }
    let inst = make_instance(&SyntheticConfig::new(64, 128, 4000, 0)).unwrap();
    let base = TrainConfig {
        max_iters: 2000,
        ..TrainConfig::default()
    };
    let g = grid_search(&inst.train, 64, &[0.01, 0.1], &[0.0, 0.1], &base, &inst.val).unwrap();
    let loss = g.best.final_val_loss;
    Some(verdict(
        (loss - 1.569).abs() <= 0.1,
        format!("val loss {loss:.4} vs 1.569 (tol 0.1)"),
    ))
}

fn hmmforge(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_hmmforge"))
        .args(args)
        .env_remove("HMMFORGE_SEED")
        .stdout(std::process::Stdio::null())
        .status()
        .expect("spawn hmmforge");
    assert!(status.success(), "hmmforge {args:?} failed with {status}");
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

fn c10_reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |s: &str| tmp.path().join(s);
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (gen, gen2, fit1, fit2) = (dir("gen"), dir("gen2"), dir("fit"), dir("fit2"));
    hmmforge(&[
        "generate",
        "--d",
        "8",
        "--m",
        "16",
        "--n",
        "200",
        "--t",
        "64",
        "--lambda",
        "0.9",
        "--seed",
        "0",
        "--out",
        &s(&gen),
    ]);
    hmmforge(&[
        "train",
        "--method",
        "beliefnet",
        "--d",
        "8",
        "--lr",
        "0.05",
        "--batch",
        "10",
        "--iters",
        "1000",
        "--seed",
        "0",
        "--train",
        &s(&gen.join("train.seq")),
        "--val",
        &s(&gen.join("val.seq")),
        "--out",
        &s(&fit1),
    ]);
    hmmforge(&["replay", &s(&gen.join("manifest.json")), "--out", &s(&gen2)]);
    hmmforge(&["replay", &s(&fit1.join("manifest.json")), "--out", &s(&fit2)]);
    let files = [
        (&gen, &gen2, "train.seq"),
        (&gen, &gen2, "val.seq"),
        (&fit1, &fit2, "training_loss.csv"),
        (&fit1, &fit2, "validation_loss.csv"),
    ];
    let mismatched: Vec<&str> = files
        .iter()
        .filter(|(a, b, f)| !same_bytes(&a.join(f), &b.join(f)))
        .map(|f| f.2)
        .collect();
    verdict(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "replayed datasets and loss curves are byte-identical".to_string()
        } else {
            format!("differing files: {mismatched:?}")
        },
    )
}

fn guarded(f: fn() -> Verdict) -> Verdict {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "filter oracle equivalence", c1_filter_oracle),
        (2, "gradient exactness", c2_gradient),
        (3, "parameter counts", c3_param_counts),
        (4, "random baselines", c4_random_baselines),
        (5, "baum-welch monotonicity", c5_baum_welch_monotone),
        (6, "spectral exactness and failure", c6_spectral),
        (7, "desk-scale belief net learning", c7_desk_learning),
        (8, "dimension-sweep shape", c8_dimension_sweep),
        (10, "reproducibility", c10_reproducibility),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        let start = Instant::now();
        let v = guarded(f);
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} [{n:>2}] {name}: {} ({:.1}s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed.push(n);
        }
    }
    match c9_full_scale() {
        Some(v) => println!(
            "{} [ 9] full-scale reproduction (optional): {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        ),
        None => println!("SKIP [ 9] full-scale reproduction (optional): set HMMFORGE_FULL_SCALE=1 to run"),
    }
    if failed.is_empty() {
        println!("acceptance: all gating criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
