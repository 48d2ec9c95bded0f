//! Corpus evaluation with model-free fidelity metrics.

use std::path::{Path, PathBuf};

use gsr_dsp::corpus::read_pair_list;
use gsr_dsp::metrics::{lsd, si_snr, LSD_FLOOR, LSD_STFT, SI_SNR_CAP_DB};
use gsr_dsp::{read_wav, Waveform};
use serde::{Deserialize, Serialize};

use crate::{Error, Generator, Result};

/// Anything that maps a degraded waveform to a restored one of equal length.
pub trait Enhancer {
    fn enhance(&self, w: &Waveform) -> Result<Waveform>;
}

impl Enhancer for Generator {
    fn enhance(&self, w: &Waveform) -> Result<Waveform> {
        self.restore(w)
    }
}

/// Passes the input through unchanged; gives the degraded-vs-clean baseline.
pub struct Identity;

impl Enhancer for Identity {
    fn enhance(&self, w: &Waveform) -> Result<Waveform> {
        Ok(w.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub path: String,
    pub lsd: f64,
    pub si_snr: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by path.
    pub rows: Vec<EvalRow>,
    pub lsd: Summary,
    pub si_snr: Summary,
}

impl EvalReport {
    pub fn from_rows(mut rows: Vec<EvalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("nothing to evaluate".into()));
        }
        rows.sort_by(|a, b| a.path.cmp(&b.path));
        let lsd = Summary::of(&rows.iter().map(|r| r.lsd).collect::<Vec<_>>());
        let si_snr = Summary::of(&rows.iter().map(|r| r.si_snr).collect::<Vec<_>>());
        Ok(Self { rows, lsd, si_snr })
    }

    /// Tab-separated rows under a header of metric conventions, followed by
    /// the summary block.
    pub fn to_tsv(&self) -> String {
        let c = LSD_STFT;
        let mut out = format!(
            "# lsd: log10 magnitude, STFT n_fft={} hop={} win={} hann, floor {LSD_FLOOR:e}\n\
             # si_snr: zero-mean, dB, capped at ±{SI_SNR_CAP_DB}\n\
             path\tlsd\tsi_snr\n",
            c.n_fft, c.hop, c.win_length
        );
        for r in &self.rows {
            out += &format!("{}\t{:.6}\t{:.6}\n", r.path, r.lsd, r.si_snr);
        }
        out += &format!("# mean\t{:.6}\t{:.6}\n", self.lsd.mean, self.si_snr.mean);
        out += &format!("# std\t{:.6}\t{:.6}\n", self.lsd.std, self.si_snr.std);
        out
    }
}

/// Metrics of one restored item against its reference.
pub fn evaluate_item(enhancer: &dyn Enhancer, name: &str, degraded: &Waveform, clean: &Waveform) -> Result<EvalRow> {
    if degraded.len() != clean.len() {
        return Err(Error::Contract(format!("{name}: degraded has {} samples, clean {}", degraded.len(), clean.len())));
    }
    let est = enhancer.enhance(degraded)?;
    Ok(EvalRow { path: name.to_string(), lsd: lsd(&clean.samples, &est.samples)?, si_snr: si_snr(&clean.samples, &est.samples)? })
}

/// Evaluates every `degraded<TAB>clean` row of a pair list.
pub fn evaluate_corpus(enhancer: &dyn Enhancer, pair_list: &Path) -> Result<EvalReport> {
    let pairs = read_pair_list(pair_list)?;
    evaluate_pairs(enhancer, &pairs)
}

pub fn evaluate_pairs(enhancer: &dyn Enhancer, pairs: &[(PathBuf, PathBuf)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Config("manifest lists no pairs".into()));
    }
    let rows = pairs
        .iter()
        .map(|(d, c)| evaluate_item(enhancer, &d.display().to_string(), &read_wav(d)?, &read_wav(c)?))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(rows)
}
