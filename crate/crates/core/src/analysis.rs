//! Interpretability instruments: influential-gradient attribution per
//! bottleneck resolution, mask IoU, the Wilcoxon signed-rank test, the
//! periodic/local gradient-norm ratio and the learnable-β export.

use gsr_autograd::Tensor;
use gsr_dsp::degrade::{add_noise, bandwidth_limit, item_seed, select_noise};
use gsr_dsp::filter::FilterFamily;
use gsr_dsp::Waveform;
use serde::{Deserialize, Serialize};

use crate::{Error, Generator, Result, Trace};

/// Share of grid cells kept by the attribution threshold.
pub const RETAINED_SHARE: f64 = 0.10;

/// Binary grid, row-major over `(t, f)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub t: usize,
    pub f: usize,
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn new(t: usize, f: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != t * f {
            return Err(Error::Shape(format!("{} cells for a {t}×{f} mask", cells.len())));
        }
        Ok(Self { t, f, cells })
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.cells.len().max(1) as f64
    }

    /// Nearest-neighbour resampling onto a `t × f` grid.
    pub fn upsample_nearest(&self, t: usize, f: usize) -> Mask {
        let mut cells = Vec::with_capacity(t * f);
        for i in 0..t {
            let si = (i * self.t / t).min(self.t - 1);
            for j in 0..f {
                let sj = (j * self.f / f).min(self.f - 1);
                cells.push(self.cells[si * self.f + sj]);
            }
        }
        Mask { t, f, cells }
    }
}

/// Attribution of one bottleneck resolution on the input spectrogram grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientAttribution {
    pub resolution: usize,
    /// ReLU-ed gradient, min-max normalized to `[0, 1]`.
    pub normalized: Vec<f64>,
    pub mask: Mask,
    /// Mask times the degraded linear magnitude.
    pub weighted: Vec<f64>,
    pub retained_fraction: f64,
}

/// Keeps the `round(share · n)` largest values, ties broken by position
/// (earlier time, then lower frequency, first). Returns the retained cells.
pub fn top_share(values: &[f64], share: f64) -> Vec<bool> {
    let k = (share * values.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut keep = vec![false; values.len()];
    for &i in &order[..k.min(values.len())] {
        keep[i] = true;
    }
    keep
}

/// ReLU then min-max normalization. `None` when nothing is positive; a
/// constant positive field maps to all ones.
pub fn relu_minmax(grad: &[f64]) -> Option<Vec<f64>> {
    let r: Vec<f64> = grad.iter().map(|g| g.max(0.0)).collect();
    let hi = r.iter().cloned().fold(0.0, f64::max);
    if !(hi > 0.0) {
        return None;
    }
    let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi == lo {
        return Some(vec![1.0; r.len()]);
    }
    Some(r.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Gradient of the summed output of one first-block branch with respect to
/// the compressed input magnitude, thresholded to the top 10%.
pub fn influential_gradients(gen: &Generator, degraded: &Waveform, resolution: usize) -> Result<GradientAttribution> {
    let block = gen.bottleneck.blocks.first().ok_or_else(|| Error::Config("generator has no bottleneck block".into()))?;
    let n = block.branches.len();
    if resolution >= n {
        return Err(Error::Config(format!("resolution {resolution} out of range for {n} branches")));
    }
    let input = gen.analyze(&Tensor::new(degraded.samples.clone(), &[1, degraded.len()]))?;
    let (t, f) = (input.cmag.dim(1), input.cmag.dim(2));
    let cmag = Tensor::leaf(input.cmag.to_vec(), input.cmag.shape(), true);
    let x = Tensor::cat(&[&cmag.unsqueeze(1), &input.phase.unsqueeze(1)], 1);
    let h = gen.encoder.forward(&x);
    let outs = block.branch_outputs(&h, &Trace::default(), "block0")?;
    outs[resolution].sum().backward();
    let grad = cmag.grad().unwrap_or_else(|| vec![0.0; t * f]);
    let (normalized, keep) = match relu_minmax(&grad) {
        Some(norm) => {
            let keep = top_share(&norm, RETAINED_SHARE);
            (norm, keep)
        }
        None => {
            log::warn!("resolution {resolution}: no positive input gradient, attribution is empty");
            (vec![0.0; t * f], vec![false; t * f])
        }
    };
    let inv = 1.0 / gen.cfg.compress_exponent;
    let weighted = keep.iter().zip(input.cmag.data()).map(|(k, c)| if *k { c.powf(inv) } else { 0.0 }).collect();
    let mask = Mask::new(t, f, keep)?;
    Ok(GradientAttribution { resolution, retained_fraction: mask.density(), normalized, mask, weighted })
}

/// `|a ∧ b| / |a ∨ b|`; 0 with a warning when both are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    if (a.t, a.f) != (b.t, b.f) {
        return Err(Error::Shape(format!("IoU of {}×{} and {}×{} masks", a.t, a.f, b.t, b.f)));
    }
    let inter = a.cells.iter().zip(&b.cells).filter(|(x, y)| **x && **y).count();
    let union = a.cells.iter().zip(&b.cells).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        log::warn!("IoU of two empty masks taken as 0");
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub matrix: Vec<Vec<f64>>,
    /// Mean over unordered pairs.
    pub mean: f64,
}

/// Pairwise IoU after nearest-neighbour upsampling to the largest grid.
pub fn resolution_iou(masks: &[Mask]) -> Result<IouReport> {
    if masks.len() < 2 {
        return Err(Error::Contract(format!("IoU needs at least two masks, got {}", masks.len())));
    }
    let t = masks.iter().map(|m| m.t).max().unwrap();
    let f = masks.iter().map(|m| m.f).max().unwrap();
    let up: Vec<Mask> = masks.iter().map(|m| if (m.t, m.f) == (t, f) { m.clone() } else { m.upsample_nearest(t, f) }).collect();
    let n = up.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut sum = 0.0;
    for i in 0..n {
        matrix[i][i] = iou(&up[i], &up[i])?;
        for j in i + 1..n {
            let v = iou(&up[i], &up[j])?;
            matrix[i][j] = v;
            matrix[j][i] = v;
            sum += v;
        }
    }
    Ok(IouReport { matrix, mean: sum / (n * (n - 1) / 2) as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Rank sum of positive differences `y − x`.
    pub w_plus: f64,
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Midranks (1-based) of `v`, plus the tie-group sizes.
fn midranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Largest sample size tested by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; up to 25 remaining pairs use the exact null distribution of
/// the (mid)rank sum, larger samples the tie-corrected normal approximation.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<Wilcoxon> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("paired samples of lengths {} and {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Contract("all paired differences are zero".into()));
    }
    let n = d.len();
    if n < 5 {
        return Err(Error::Contract(format!("{n} nonzero differences, need at least 5")));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);
    let (p_value, method) = if n <= WILCOXON_EXACT_MAX {
        // Doubled midranks are integers, so the null is a subset-sum count.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let w2 = (2.0 * w_plus).round() as usize;
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
        ((2.0 * lower.min(upper)).min(1.0), WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
        if !(var > 0.0) {
            return Err(Error::Contract("degenerate rank variance".into()));
        }
        let z = (w_plus - total / 2.0) / var.sqrt();
        (libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0), WilcoxonMethod::Normal)
    };
    Ok(Wilcoxon { w_plus, statistic, p_value, n, method })
}

/// Degradation swept by the gradient-ratio analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationAxis {
    /// Additive noise at the given SNR in dB.
    Snr,
    /// Order-8 Butterworth low-pass at the given cutoff in Hz.
    Cutoff,
}

impl DegradationAxis {
    pub fn default_levels(self) -> Vec<f64> {
        match self {
            Self::Snr => (0..=6).map(|i| -10.0 + 5.0 * i as f64).collect(),
            Self::Cutoff => (2..=7).map(|k| 1000.0 * k as f64).collect(),
        }
    }

    pub fn apply(self, clean: &Waveform, level: f64, noise: &[Waveform], pick: u64) -> Result<Waveform> {
        let x = match self {
            Self::Snr => add_noise(&clean.samples, &select_noise(noise, pick, clean.len())?, level)?,
            Self::Cutoff => bandwidth_limit(&clean.samples, level, FilterFamily::Butterworth, 8, 0.0)?,
        };
        Ok(Waveform::new(x)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub level: f64,
    pub g_gp: f64,
    pub g_l: f64,
    /// `G_GP / G_L`, `+inf` when `G_L` vanishes.
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlpRatioReport {
    pub axis: DegradationAxis,
    pub rows: Vec<RatioRow>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `G_GP / G_L` from per-layer gradient fields: each side is the mean L2
/// norm over layers.
pub fn ratio_from_grads(gp: &[Vec<f64>], l: &[Vec<f64>]) -> (f64, f64, f64) {
    let mean = |gs: &[Vec<f64>]| if gs.is_empty() { 0.0 } else { gs.iter().map(|g| l2(g)).sum::<f64>() / gs.len() as f64 };
    let (a, b) = (mean(gp), mean(l));
    (a, b, ratio(a, b))
}

fn ratio(g_gp: f64, g_l: f64) -> f64 {
    if g_l == 0.0 {
        log::warn!("local-path gradient norm is zero, ratio reported as +inf");
        f64::INFINITY
    } else {
        g_gp / g_l
    }
}

/// Gradients of the summed restored waveform with respect to the periodic and
/// local module outputs of the top-resolution branch of every block.
pub fn glp_layer_grads(gen: &Generator, degraded: &Waveform) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let trace = Trace::recording();
    let x = Tensor::new(degraded.samples.clone(), &[1, degraded.len()]);
    let (_, y) = gen.restore_batch(&x, &trace)?;
    y.sum().backward();
    let (mut gp, mut l) = (Vec::new(), Vec::new());
    for i in 0..gen.bottleneck.blocks.len() {
        let base = format!("block{i}.branch0.glp");
        let grab = |suffix: &str| -> Result<Vec<f64>> {
            let t = trace.get(&format!("{base}.{suffix}")).ok_or_else(|| Error::Contract(format!("{base}.{suffix} not recorded")))?;
            Ok(t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        };
        gp.push(grab("gp")?);
        l.push(grab("l")?);
    }
    trace.take();
    Ok((gp, l))
}

/// Mean `G_GP`, `G_L` over the items at each degradation level, and their ratio.
pub fn glp_gradient_ratio(
    gen: &Generator,
    clean: &[Waveform],
    noise: &[Waveform],
    axis: DegradationAxis,
    levels: &[f64],
    seed: u64,
) -> Result<GlpRatioReport> {
    if clean.is_empty() {
        return Err(Error::Config("gradient ratio needs at least one clean item".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let (mut s_gp, mut s_l) = (0.0, 0.0);
        for (i, c) in clean.iter().enumerate() {
            let d = axis.apply(c, level, noise, item_seed(seed, i as u64))?;
            let (gp, l) = glp_layer_grads(gen, &d)?;
            let (a, b, _) = ratio_from_grads(&gp, &l);
            s_gp += a;
            s_l += b;
        }
        let k = clean.len() as f64;
        let (g_gp, g_l) = (s_gp / k, s_l / k);
        rows.push(RatioRow { level, g_gp, g_l, r: ratio(g_gp, g_l) });
    }
    Ok(GlpRatioReport { axis, rows })
}

/// `(frequency_hz, β_f)` for every STFT bin of the mapping head.
pub fn export_betas(gen: &Generator) -> Result<Vec<(f64, f64)>> {
    let betas = gen.betas().ok_or_else(|| Error::Config("the masking head has no learnable β".into()))?;
    let f = betas.len();
    let nyquist = gsr_dsp::SAMPLE_RATE as f64 / 2.0;
    Ok(betas.into_iter().enumerate().map(|(i, b)| (i as f64 * nyquist / (f - 1) as f64, b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![1, 1, 2]);
    }

    #[test]
    fn top_share_rounds() {
        let keep = top_share(&[0.1, 0.9, 0.5, 0.7, 0.2, 0.0, 0.3, 0.8, 0.4, 0.6, 1.0, 0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85], 0.1);
        assert_eq!(keep.iter().filter(|k| **k).count(), 2);
        assert!(keep[10] && keep[1]);
    }

    #[test]
    fn relu_minmax_degenerate() {
        assert_eq!(relu_minmax(&[-1.0, 0.0]), None);
        assert_eq!(relu_minmax(&[2.0, 2.0]), Some(vec![1.0, 1.0]));
        assert_eq!(relu_minmax(&[-1.0, 1.0, 3.0]), Some(vec![0.0, 1.0 / 3.0, 1.0]));
    }
}
