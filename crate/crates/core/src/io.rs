//! On-disk formats.
//!
//! * Datasets: UTF-8 text, header `#hmmforge-seq v1 m=<m>`, then one sequence
//!   per line as space-separated decimal token ids.
//! * Models: JSON with a `"version":1` field; HMM parameters, Belief Net logits
//!   and spectral observable representations each have their own layout.
//! * Curves and reports: small CSV files with fixed headers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baum_welch::FitReport;
use crate::beliefnet::LogitParams;
use crate::error::{Error, Result};
use crate::hmm::{HmmParams, SequenceDataset};
use crate::matrix::Matrix;
use crate::spectral::{RankReport, SpectralModel};
use crate::text::CharVocab;

pub const DATASET_MAGIC: &str = "#hmmforge-seq v1 m=";
pub const FORMAT_VERSION: u32 = 1;

fn parse_decimal(tok: &str, line: usize) -> Result<usize> {
    let canonical =
        !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()) && !(tok.len() > 1 && tok.starts_with('0'));
    if !canonical {
        return Err(Error::Parse {
            line,
            msg: format!("expected a decimal integer, found {tok:?}"),
        });
    }
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("integer out of range: {tok}"),
    })
}

/// Parses the dataset text format. A single trailing newline is allowed.
pub fn parse_dataset(text: &str) -> Result<SequenceDataset> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n');
    let header = lines.next().unwrap_or_default();
    let m_str = header.strip_prefix(DATASET_MAGIC).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("expected header {DATASET_MAGIC}<m>"),
    })?;
    let m = parse_decimal(m_str, 1)?;
    let mut sequences = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty sequence".into(),
            });
        }
        let seq = line
            .split(' ')
            .map(|tok| {
                let z = parse_decimal(tok, lineno)?;
                if z >= m {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("token {z} out of range for m={m}"),
                    });
                }
                Ok(z)
            })
            .collect::<Result<Vec<_>>>()?;
        sequences.push(seq);
    }
    SequenceDataset::new(m, sequences)
}

pub fn format_dataset(ds: &SequenceDataset) -> String {
    let mut out = format!("{DATASET_MAGIC}{}\n", ds.m());
    for seq in ds.sequences() {
        for (i, z) in seq.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{z}");
        }
        out.push('\n');
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<SequenceDataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn write_dataset(path: &Path, ds: &SequenceDataset) -> Result<()> {
    Ok(fs::write(path, format_dataset(ds))?)
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::InvalidParams(format!("unsupported format version {v}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmmFile {
    version: u32,
    d: usize,
    m: usize,
    pi: Vec<f64>,
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "C")]
    c: Matrix,
}

pub fn hmm_to_json(p: &HmmParams) -> String {
    let file = HmmFile {
        version: FORMAT_VERSION,
        d: p.d(),
        m: p.m(),
        pi: p.pi().to_vec(),
        a: p.transition().clone(),
        c: p.emission().clone(),
    };
    serde_json::to_string(&file).expect("finite floats serialize")
}

pub fn hmm_from_json(text: &str) -> Result<HmmParams> {
    let f: HmmFile = serde_json::from_str(text)?;
    check_version(f.version)?;
    let p = HmmParams::new(f.pi, f.a, f.c)?;
    if p.d() != f.d || p.m() != f.m {
        return Err(Error::InvalidParams(format!(
            "declared d={} m={} but arrays are d={} m={}",
            f.d,
            f.m,
            p.d(),
            p.m()
        )));
    }
    Ok(p)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitFile {
    version: u32,
    pi_logits: Vec<f64>,
    a_logits: Matrix,
    c_logits: Matrix,
}

pub fn logits_to_json(lp: &LogitParams) -> String {
    let file = LogitFile {
        version: FORMAT_VERSION,
        pi_logits: lp.pi.clone(),
        a_logits: lp.a.clone(),
        c_logits: lp.c.clone(),
    };
    serde_json::to_string(&file).expect("finite floats serialize")
}

pub fn logits_from_json(text: &str) -> Result<LogitParams> {
    let f: LogitFile = serde_json::from_str(text)?;
    check_version(f.version)?;
    LogitParams::new(f.pi_logits, f.a_logits, f.c_logits)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectralFile {
    version: u32,
    d: usize,
    m: usize,
    b0: Vec<f64>,
    binf: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<Matrix>,
    #[serde(rename = "U")]
    u: Matrix,
}

pub fn spectral_to_json(model: &SpectralModel) -> String {
    let file = SpectralFile {
        version: FORMAT_VERSION,
        d: model.d(),
        m: model.m(),
        b0: model.b0.clone(),
        binf: model.binf.clone(),
        b: model.b_ops.clone(),
        u: model.u.clone(),
    };
    serde_json::to_string(&file).expect("finite floats serialize")
}

pub fn spectral_from_json(text: &str) -> Result<SpectralModel> {
    let f: SpectralFile = serde_json::from_str(text)?;
    check_version(f.version)?;
    let model = SpectralModel {
        b0: f.b0,
        binf: f.binf,
        b_ops: f.b,
        u: f.u,
    };
    model.validate()?;
    if model.d() != f.d || model.m() != f.m {
        return Err(Error::InvalidParams("declared d/m disagree with arrays".into()));
    }
    Ok(model)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    version: u32,
    glyphs: Vec<String>,
}

pub fn vocab_to_json(v: &CharVocab) -> String {
    let file = VocabFile {
        version: FORMAT_VERSION,
        glyphs: v.glyphs().iter().map(char::to_string).collect(),
    };
    serde_json::to_string(&file).expect("strings serialize")
}

pub fn vocab_from_json(text: &str) -> Result<CharVocab> {
    let f: VocabFile = serde_json::from_str(text)?;
    check_version(f.version)?;
    let glyphs = f
        .glyphs
        .iter()
        .map(|g| {
            let mut chars = g.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(Error::InvalidDataset(format!("glyph {g:?} is not a single character"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CharVocab::from_glyphs(glyphs)
}

/// Any of the three model files, told apart by their keys.
#[derive(Debug, Clone)]
pub enum ModelFile {
    Hmm(HmmParams),
    Logits(LogitParams),
    Spectral(SpectralModel),
}

impl ModelFile {
    pub fn m(&self) -> usize {
        match self {
            ModelFile::Hmm(p) => p.m(),
            ModelFile::Logits(l) => l.m(),
            ModelFile::Spectral(s) => s.m(),
        }
    }
}

pub fn model_from_json(text: &str) -> Result<ModelFile> {
    let v: Value = serde_json::from_str(text)?;
    let has = |k: &str| v.get(k).is_some();
    if has("b0") {
        spectral_from_json(text).map(ModelFile::Spectral)
    } else if has("pi_logits") {
        logits_from_json(text).map(ModelFile::Logits)
    } else {
        hmm_from_json(text).map(ModelFile::Hmm)
    }
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    model_from_json(&fs::read_to_string(path)?)
}

pub const CURVE_HEADER: &str = "iteration,loss";

pub fn format_curve(points: &[(usize, f64)]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for (it, loss) in points {
        let _ = writeln!(out, "{it},{loss}");
    }
    out
}

pub fn parse_curve(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {CURVE_HEADER}"),
        });
    }
    let mut points: Vec<(usize, f64)> = Vec::new();
    for (i, l) in lines.enumerate() {
        let bad = |msg: String| Error::Parse { line: i + 2, msg };
        let malformed = || bad(format!("expected iteration,loss, found {l:?}"));
        let (it, loss) = l.split_once(',').ok_or_else(malformed)?;
        let it: usize = it.parse().map_err(|_| malformed())?;
        let loss: f64 = loss.parse().map_err(|_| malformed())?;
        if points.last().is_some_and(|&(prev, _)| it <= prev) {
            return Err(bad(format!("iteration {it} does not increase")));
        }
        points.push((it, loss));
    }
    Ok(points)
}

pub fn format_rank_report(r: &RankReport) -> String {
    let mut out = String::from("k,sigma\n");
    for (k, s) in r.singular_values.iter().enumerate() {
        let _ = writeln!(out, "{},{s}", k + 1);
    }
    out
}

pub fn format_fit_report(r: &FitReport) -> String {
    let mut out = String::from("restart,iteration,loglik\n");
    for (restart, traj) in r.trajectories.iter().enumerate() {
        for (it, ll) in traj.iter().enumerate() {
            let _ = writeln!(out, "{restart},{it},{ll}");
        }
    }
    out
}

pub fn fit_summary_json(r: &FitReport) -> String {
    serde_json::json!({
        "selected_restart": r.selected,
        "validation_loss": r.selected_val_loss(),
        "restart_validation_losses": r.val_losses,
    })
    .to_string()
}
