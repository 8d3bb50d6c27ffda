//! Validation loss for any one-step predictor, perplexity, and dimension sweeps.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baum_welch::{self, EmConfig};
use crate::beliefnet::{self, LogitParams, TrainConfig};
use crate::error::{Error, Result};
use crate::hmm::{cross_entropy, filter_run, param_count, HmmParams, SequenceDataset};
use crate::spectral::{self, SpectralModel};

/// Causal next-token model over an `m`-symbol vocabulary.
pub trait Predictor: Sync {
    fn m(&self) -> usize;

    /// `p_1..p_T` for `seq` of length `T`: entry `t` conditions on `seq[..=t]`.
    fn predict(&self, seq: &[usize]) -> Result<Vec<Vec<f64>>>;
}

impl Predictor for HmmParams {
    fn m(&self) -> usize {
        HmmParams::m(self)
    }

    fn predict(&self, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
        filter_run(self, seq)
    }
}

impl Predictor for SpectralModel {
    fn m(&self) -> usize {
        SpectralModel::m(self)
    }

    fn predict(&self, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
        spectral::spectral_predict(self, seq)
    }
}

impl Predictor for LogitParams {
    fn m(&self) -> usize {
        LogitParams::m(self)
    }

    fn predict(&self, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
        if seq.len() >= 2 {
            Ok(beliefnet::forward(self, seq)?.predictions)
        } else {
            filter_run(&self.to_probs(), seq)
        }
    }
}

/// Predicts `1/m` for every symbol.
#[derive(Debug, Clone, Copy)]
pub struct Uniform(pub usize);

impl Predictor for Uniform {
    fn m(&self) -> usize {
        self.0
    }

    fn predict(&self, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![1.0 / self.0 as f64; self.0]; seq.len()])
    }
}

/// Mean over sequences of the per-sequence mean cross-entropy, predicting
/// `z_1..z_{T-1}` from prefixes. Single-token sequences are skipped.
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, val: &SequenceDataset) -> Result<f64> {
    if predictor.m() != val.m() {
        return Err(Error::VocabMismatch {
            model: predictor.m(),
            data: val.m(),
        });
    }
    let losses = val
        .sequences()
        .par_iter()
        .filter(|s| s.len() >= 2)
        .map(|s| {
            let preds = predictor.predict(&s[..s.len() - 1])?;
            Ok(cross_entropy(&preds, &s[1..])?.loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    if losses.is_empty() {
        return Err(Error::NoPredictionTargets);
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    BeliefNet,
    BaumWelch,
    Spectral,
    Random,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BeliefNet => "beliefnet",
            Method::BaumWelch => "baumwelch",
            Method::Spectral => "spectral",
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "beliefnet" => Method::BeliefNet,
            "baumwelch" => Method::BaumWelch,
            "spectral" => Method::Spectral,
            "random" => Method::Random,
            "oracle" => Method::Oracle,
            other => return Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub dims: Vec<usize>,
    pub seed: u64,
    /// Worker threads for independent cells; 0 uses the global pool.
    pub jobs: usize,
    pub beliefnet: TrainConfig,
    pub lrs: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub em: EmConfig,
}

impl SweepConfig {
    pub fn new(methods: Vec<Method>, dims: Vec<usize>, seed: u64) -> Self {
        SweepConfig {
            methods,
            dims,
            seed,
            jobs: 0,
            beliefnet: TrainConfig::default(),
            lrs: vec![0.01, 0.1],
            dropouts: vec![0.0, 0.1],
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub candidate_d: usize,
    pub method: Method,
    pub loss: Option<f64>,
    pub params: usize,
    pub seconds: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub m: usize,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "candidate_d,method,loss,params,seconds,status";

impl SweepReport {
    pub fn loss(&self, method: Method, d: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.candidate_d == d)
            .and_then(|r| r.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let loss = r.loss.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3},{}",
                r.candidate_d, r.method, loss, r.params, r.seconds, r.status
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6}  {:<10} {:>10} {:>8} {:>9}  {}\n",
            "d", "method", "loss", "params", "seconds", "status"
        );
        for r in &self.rows {
            let loss = r.loss.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:>6}  {:<10} {:>10} {:>8} {:>9.2}  {}",
                r.candidate_d, r.method, loss, r.params, r.seconds, r.status
            );
        }
        out
    }
}

fn run_cell(
    method: Method,
    d: usize,
    train: &SequenceDataset,
    val: &SequenceDataset,
    generator: Option<&HmmParams>,
    cfg: &SweepConfig,
) -> SweepRow {
    let m = train.m();
    let start = Instant::now();
    let result: Result<(f64, usize)> = match method {
        Method::Random => evaluate(&Uniform(m), val).map(|l| (l, 0)),
        Method::Oracle => match generator {
            Some(g) => evaluate(g, val).map(|l| (l, param_count(g.d(), g.m()))),
            None => Err(Error::InvalidConfig("no generator".into())),
        },
        Method::BeliefNet => {
            let base = TrainConfig {
                seed: cfg.seed,
                ..cfg.beliefnet.clone()
            };
            beliefnet::grid_search(train, d, &cfg.lrs, &cfg.dropouts, &base, val)
                .map(|g| (g.best.final_val_loss, param_count(d, m)))
        }
        Method::BaumWelch => {
            let em = EmConfig {
                seed: cfg.seed,
                ..cfg.em.clone()
            };
            baum_welch::fit(train, d, &em, val).map(|(_, r)| (r.selected_val_loss(), param_count(d, m)))
        }
        Method::Spectral => spectral::estimate_moments(train)
            .and_then(|mo| spectral::build_observable(&mo, d))
            .and_then(|fit| Ok((evaluate(&fit.model, val)?, fit.model.param_count()))),
    };
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok((loss, params)) => SweepRow {
            candidate_d: d,
            method,
            loss: Some(loss),
            params,
            seconds,
            status: "ok".into(),
        },
        Err(e) => SweepRow {
            candidate_d: d,
            method,
            loss: None,
            params: 0,
            seconds,
            status: match e {
                Error::RankDeficiency { .. } => "rank deficiency".into(),
                Error::InvalidConfig(msg) if msg == "no generator" => "no generator".into(),
                other => format!("error: {}", other.to_string().replace(',', ";")),
            },
        },
    }
}

/// One fit-and-evaluate per `(method, candidate d)`. Failures become status rows.
pub fn sweep(
    train: &SequenceDataset,
    val: &SequenceDataset,
    generator: Option<&HmmParams>,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if cfg.methods.is_empty() || cfg.dims.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one method and one dimension".into(),
        ));
    }
    if train.m() != val.m() {
        return Err(Error::VocabMismatch {
            model: train.m(),
            data: val.m(),
        });
    }
    let cells: Vec<(usize, Method)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.methods.iter().map(move |&m| (d, m)))
        .collect();
    let run = || -> Vec<SweepRow> {
        cells
            .par_iter()
            .map(|&(d, method)| run_cell(method, d, train, val, generator, cfg))
            .collect()
    };
    let rows = if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run)
    } else {
        run()
    };
    Ok(SweepReport { m: train.m(), rows })
}
