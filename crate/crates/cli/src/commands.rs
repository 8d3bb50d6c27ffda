use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hmmforge::baum_welch::{self, EmConfig};
use hmmforge::beliefnet::{self, TrainConfig, TrainOutcome};
use hmmforge::datagen::{make_instance, SyntheticConfig};
use hmmforge::eval::{self, evaluate, Method, SweepConfig, Uniform};
use hmmforge::io::{self, ModelFile};
use hmmforge::{spectral, text, Error, SequenceDataset};
use serde_json::json;

use crate::manifest::{now, RunManifest};
use crate::{Cli, Command, EvalArgs, GenerateArgs, IngestArgs, SweepArgs, TrainArgs, TrainMethod};
use clap::Parser;

pub enum Failure {
    Clap(clap::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

/// 2 usage or vocabulary mismatch, 3 rank deficiency, 4 numeric failure, 1 anything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::InvalidConfig(_) | Error::VocabMismatch { .. }) => 2,
        Some(Error::RankDeficiency { .. }) => 3,
        Some(Error::GradientOverflow { .. } | Error::NoStationaryDistribution) => 4,
        _ => 1,
    }
}

/// Collects what a command read and wrote for its manifest.
struct Run {
    command: &'static str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: u64,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    out_dir: PathBuf,
}

impl Run {
    fn start(
        command: &'static str,
        argv: Vec<String>,
        config: &impl serde::Serialize,
        seed: u64,
        out: &Path,
    ) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run {
            command,
            argv,
            config: serde_json::to_value(config)?,
            seed,
            started_at: now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out.to_path_buf(),
        })
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        RunManifest {
            command: self.command.to_string(),
            argv: self.argv,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            finished_at: now(),
        }
        .write(&self.out_dir)?;
        Ok(())
    }
}

pub fn dispatch(command: Command, argv: Vec<String>) -> Result<(), Failure> {
    match command {
        Command::Generate(a) => generate(a, argv)?,
        Command::Ingest(a) => ingest(a, argv)?,
        Command::Train(a) => train(a, argv)?,
        Command::Eval(a) => eval_cmd(a, argv)?,
        Command::Sweep(a) => sweep(a, argv)?,
        Command::Replay(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let argv = replay_argv(&m, a.out.as_deref());
            let mut full = vec!["hmmforge".to_string()];
            full.extend(argv.iter().cloned());
            let cli = Cli::try_parse_from(&full).map_err(Failure::Clap)?;
            if matches!(cli.command, Command::Replay(_)) {
                return Err(anyhow!("a manifest cannot record a replay").into());
            }
            return dispatch(cli.command, argv);
        }
    }
    Ok(())
}

/// Recorded argv with `--seed` pinned to the manifest seed and `--out` optionally redirected.
fn replay_argv(m: &RunManifest, out: Option<&Path>) -> Vec<String> {
    let mut argv = Vec::with_capacity(m.argv.len() + 4);
    let mut iter = m.argv.iter();
    while let Some(a) = iter.next() {
        let drop_seed = a == "--seed" || a.starts_with("--seed=");
        let drop_out = out.is_some() && (a == "--out" || a.starts_with("--out="));
        if drop_seed || drop_out {
            if !a.contains('=') {
                iter.next();
            }
            continue;
        }
        argv.push(a.clone());
    }
    if m.command != "eval" {
        argv.push("--seed".into());
        argv.push(m.seed.to_string());
    }
    if let Some(dir) = out {
        argv.push("--out".into());
        argv.push(dir.display().to_string());
    }
    argv
}

fn read_dataset(run: &mut Run, path: &Path) -> Result<SequenceDataset> {
    run.input(path);
    io::read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn generate(a: GenerateArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("generate", argv, &a, a.seed, &a.out)?;
    let cfg = SyntheticConfig {
        d: a.d,
        m: a.m,
        lambda: a.lambda,
        temp_a: a.temp_a,
        temp_c: a.temp_c,
        n_train: a.n,
        t: a.t,
        val_fraction: a.val_fraction,
        seed: a.seed,
    };
    let inst = make_instance(&cfg)?;
    run.write("train.seq", io::format_dataset(&inst.train))?;
    run.write("val.seq", io::format_dataset(&inst.val))?;
    run.write("true_model.json", io::hmm_to_json(&inst.params))?;
    println!(
        "generated {} train and {} validation sequences (d={}, m={}, T={})",
        inst.train.len(),
        inst.val.len(),
        a.d,
        a.m,
        a.t
    );
    run.finish()
}

fn ingest(a: IngestArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("ingest", argv, &a, a.seed, &a.out)?;
    run.input(&a.input);
    let corpus = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let vocab = text::build_vocab(&corpus)?;
    let ds = text::chunk(&corpus, &vocab, a.t, a.stride.unwrap_or(a.t))?;
    let (train, val) = text::split(&ds, a.val_fraction, a.seed)?;
    run.write("train.seq", io::format_dataset(&train))?;
    run.write("val.seq", io::format_dataset(&val))?;
    run.write("vocab.json", io::vocab_to_json(&vocab))?;
    println!(
        "m={} chunks={} train={} val={}",
        vocab.m(),
        ds.len(),
        train.len(),
        val.len()
    );
    run.finish()
}

fn train(a: TrainArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("train", argv, &a, a.seed, &a.out)?;
    let train = read_dataset(&mut run, &a.train)?;
    let val = read_dataset(&mut run, &a.val)?;
    if train.m() != val.m() {
        return Err(Error::VocabMismatch {
            model: train.m(),
            data: val.m(),
        }
        .into());
    }
    let val_loss = match a.method {
        TrainMethod::Beliefnet => train_beliefnet(&a, &train, &val, &mut run)?,
        TrainMethod::Baumwelch => train_baum_welch(&a, &train, &val, &mut run)?,
        TrainMethod::Spectral => train_spectral(&a, &train, &val, &mut run)?,
    };
    println!(
        "validation loss {val_loss:.6} (perplexity {:.4})",
        eval::perplexity(val_loss)
    );
    run.finish()
}

fn train_beliefnet(a: &TrainArgs, train: &SequenceDataset, val: &SequenceDataset, run: &mut Run) -> Result<f64> {
    let base = TrainConfig {
        batch_size: a.batch,
        max_iters: a.iters.unwrap_or(TrainConfig::default().max_iters),
        lr: a.lr[0],
        dropout: a.dropout[0],
        val_every: a.val_every,
        seed: a.seed,
        weight_decay: a.weight_decay,
        init_std: a.init_std,
        cosine: a.cosine,
        patience: a.patience,
    };
    let outcome: TrainOutcome = if a.lr.len() * a.dropout.len() > 1 {
        let grid = beliefnet::grid_search(train, a.d, &a.lr, &a.dropout, &base, val)?;
        let mut csv = String::from("lr,dropout,validation_loss\n");
        for r in &grid.runs {
            let _ = writeln!(csv, "{},{},{}", r.lr, r.dropout, r.final_val_loss);
        }
        run.write("grid.csv", csv)?;
        println!("selected lr={} dropout={}", grid.config.lr, grid.config.dropout);
        grid.best
    } else {
        beliefnet::train(train, a.d, &base, val)?
    };
    run.write("model.json", io::hmm_to_json(&outcome.params))?;
    run.write("logits.json", io::logits_to_json(&outcome.logits))?;
    run.write("training_loss.csv", io::format_curve(&outcome.curves.training))?;
    run.write("validation_loss.csv", io::format_curve(&outcome.curves.validation))?;
    Ok(outcome.final_val_loss)
}

fn train_baum_welch(a: &TrainArgs, train: &SequenceDataset, val: &SequenceDataset, run: &mut Run) -> Result<f64> {
    let cfg = EmConfig {
        max_iters: a.iters.unwrap_or(EmConfig::default().max_iters),
        restarts: a.restarts,
        seed: a.seed,
        ll_tolerance: a.tol,
    };
    let (params, report) = baum_welch::fit(train, a.d, &cfg, val)?;
    // Per-token negative log-likelihood of the selected restart after each EM update.
    let tokens = train.token_count() as f64;
    let curve: Vec<(usize, f64)> = report.trajectories[report.selected]
        .iter()
        .enumerate()
        .map(|(i, ll)| (i, -ll / tokens))
        .collect();
    let last = curve.last().map_or(0, |c| c.0);
    run.write("model.json", io::hmm_to_json(&params))?;
    run.write("training_loss.csv", io::format_curve(&curve))?;
    run.write(
        "validation_loss.csv",
        io::format_curve(&[(last, report.selected_val_loss())]),
    )?;
    run.write("fit_report.csv", io::format_fit_report(&report))?;
    run.write("fit_summary.json", io::fit_summary_json(&report))?;
    Ok(report.selected_val_loss())
}

fn train_spectral(a: &TrainArgs, train: &SequenceDataset, val: &SequenceDataset, run: &mut Run) -> Result<f64> {
    let moments = spectral::estimate_moments(train)?;
    run.write(
        "rank_report.csv",
        io::format_rank_report(&spectral::rank_report(&moments)),
    )?;
    let fit = spectral::build_observable(&moments, a.d)?;
    run.write("model.json", io::spectral_to_json(&fit.model))?;
    Ok(evaluate(&fit.model, val)?)
}

fn eval_cmd(a: EvalArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("eval", argv, &a, 0, &a.out)?;
    let data = read_dataset(&mut run, &a.data)?;
    let loss = match &a.model {
        Some(path) => {
            run.input(path);
            match io::read_model(path).with_context(|| format!("reading model {}", path.display()))? {
                ModelFile::Hmm(p) => evaluate(&p, &data)?,
                ModelFile::Logits(l) => evaluate(&l, &data)?,
                ModelFile::Spectral(s) => evaluate(&s, &data)?,
            }
        }
        None => evaluate(&Uniform(data.m()), &data)?,
    };
    let metrics = json!({
        "loss": loss,
        "perplexity": eval::perplexity(loss),
        "m": data.m(),
        "n_sequences": data.len(),
    });
    run.write("metrics.json", format!("{metrics}\n"))?;
    println!("{metrics}");
    run.finish()
}

fn sweep(a: SweepArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("sweep", argv, &a, a.seed, &a.out)?;
    let methods = a
        .methods
        .iter()
        .map(|s| s.parse::<Method>())
        .collect::<hmmforge::Result<Vec<_>>>()?;
    if a.dims.is_empty() || a.dims.contains(&0) {
        bail!(Error::InvalidConfig("--dims must list positive dimensions".into()));
    }
    let train = read_dataset(&mut run, &a.train)?;
    let val = read_dataset(&mut run, &a.val)?;
    let generator = match &a.generator {
        Some(path) => {
            run.input(path);
            match io::read_model(path)? {
                ModelFile::Hmm(p) => Some(p),
                _ => bail!(Error::InvalidConfig("--generator must be an HMM model file".into())),
            }
        }
        None => None,
    };
    let mut cfg = SweepConfig::new(methods, a.dims.clone(), a.seed);
    cfg.jobs = a.jobs;
    cfg.beliefnet.batch_size = a.batch;
    cfg.beliefnet.max_iters = a.iters;
    cfg.lrs = a.lr.clone();
    cfg.dropouts = a.dropout.clone();
    cfg.em.max_iters = a.em_iters;
    cfg.em.restarts = a.restarts;
    let report = eval::sweep(&train, &val, generator.as_ref(), &cfg)?;
    run.write("sweep.csv", report.to_csv())?;
    print!("{}", report.to_table());
    run.finish()
}
