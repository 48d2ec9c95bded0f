//! Degradation kernels and seeded recipes combining them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::filter::{design_lowpass, sosfilt, FilterFamily};
use crate::wav::{peak, power, Waveform, SAMPLE_RATE};

/// Mixes `noise` (tiled or truncated to the clean length) into `clean` at `snr_db`.
pub fn add_noise(clean: &[f64], noise: &[f64], snr_db: f64) -> Result<Vec<f64>> {
    if clean.is_empty() || noise.is_empty() {
        return Err(Error::Empty);
    }
    let noise = tile(noise, clean.len(), 0);
    let pc = power(clean);
    let pn = power(&noise);
    if pc == 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    if pn == 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    let g = noise_gain(pc, pn, snr_db);
    Ok(clean.iter().zip(&noise).map(|(c, n)| c + g * n).collect())
}

/// Gain that puts noise of power `pn` at `snr_db` below clean power `pc`.
pub fn noise_gain(pc: f64, pn: f64, snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0) * (pc / pn).sqrt()
}

fn tile(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    (0..len).map(|i| noise[(offset + i) % noise.len()]).collect()
}

/// Chooses a noise clip from `pool` and fits it to `len` samples: shorter clips
/// are tiled, longer ones cropped at an offset derived from `pick`.
pub fn select_noise(pool: &[Waveform], pick: u64, len: usize) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool("noise"));
    }
    let clip = &pool[(pick % pool.len() as u64) as usize].samples;
    if clip.is_empty() {
        return Err(Error::Empty);
    }
    let offset = if clip.len() > len { ((pick >> 20) % (clip.len() - len + 1) as u64) as usize } else { 0 };
    Ok(tile(clip, len, offset))
}

/// Linear convolution via FFT, full length `a.len() + b.len() − 1`.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let load = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (d, s) in v.iter_mut().zip(x) {
            d.re = *s;
        }
        v
    };
    let mut fa = load(a);
    let mut fb = load(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..out_len].iter().map(|c| c.re / n as f64).collect()
}

/// Convolves with a room impulse response, aligns the direct-path peak with
/// output sample 0, keeps the clean length and restores the clean peak level.
pub fn reverberate(clean: &[f64], rir: &[f64]) -> Result<Vec<f64>> {
    if rir.is_empty() || clean.is_empty() {
        return Err(Error::Empty);
    }
    let (lag, rpeak) = rir
        .iter()
        .enumerate()
        .fold((0, 0.0), |(i, m), (j, v)| if v.abs() > m { (j, v.abs()) } else { (i, m) });
    if rpeak == 0.0 {
        return Err(Error::ZeroPower("impulse response"));
    }
    let full = fft_convolve(clean, rir);
    let mut out: Vec<f64> = (0..clean.len()).map(|i| full.get(i + lag).copied().unwrap_or(0.0)).collect();
    let (pc, po) = (peak(clean), peak(&out));
    if po > 0.0 {
        let g = pc / po;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Ok(out)
}

/// Low-pass filtering with a designed IIR filter; length is preserved.
pub fn bandwidth_limit(x: &[f64], cutoff_hz: f64, family: FilterFamily, order: usize, ripple_db: f64) -> Result<Vec<f64>> {
    if !(2..=8).contains(&order) {
        return Err(Error::Config(format!("filter order {order} outside 2..=8")));
    }
    let sos = design_lowpass(family, order, cutoff_hz, SAMPLE_RATE as f64, ripple_db)?;
    Ok(sosfilt(&sos, x))
}

/// Hard clipping to `[alpha_min, alpha_max]`.
pub fn clip_waveform(x: &[f64], alpha_min: f64, alpha_max: f64) -> Result<Vec<f64>> {
    if alpha_min >= alpha_max {
        return Err(Error::Config(format!("clip range [{alpha_min}, {alpha_max}] is empty")));
    }
    Ok(x.iter().map(|v| v.clamp(alpha_min, alpha_max)).collect())
}

/// One kernel application. `pick` seeds pool selection and noise cropping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    Reverb { pick: u64 },
    Noise { pick: u64, snr_db: f64 },
    Bandwidth { cutoff_hz: f64, family: FilterFamily, order: usize, ripple_db: f64 },
    Clip { alpha_min: f64, alpha_max: f64 },
}

impl Step {
    fn rank(&self) -> usize {
        match self {
            Step::Reverb { .. } => 0,
            Step::Noise { .. } => 1,
            Step::Bandwidth { .. } => 2,
            Step::Clip { .. } => 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecipe {
    pub seed: u64,
    pub steps: Vec<Step>,
}

impl DegradationRecipe {
    /// Checks that each kind appears at most once and parameters are in range.
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 4];
        for s in &self.steps {
            if std::mem::replace(&mut seen[s.rank()], true) {
                return Err(Error::Config(format!("kernel repeated in recipe: {s:?}")));
            }
            match *s {
                Step::Noise { snr_db, .. } if !(-15.0..=20.0).contains(&snr_db) => {
                    return Err(Error::Config(format!("SNR {snr_db} dB outside [-15, 20]")))
                }
                Step::Bandwidth { cutoff_hz, order, .. }
                    if !(1000.0..=7000.0).contains(&cutoff_hz) || !(2..=8).contains(&order) =>
                {
                    return Err(Error::Config(format!("bandwidth step out of range: {s:?}")))
                }
                Step::Clip { alpha_min, alpha_max } if !(alpha_min < 0.0 && 0.0 < alpha_max) => {
                    return Err(Error::Config(format!("clip thresholds must straddle 0: {s:?}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    pub p: f64,
    pub snr_db: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverbPolicy {
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPolicy {
    pub p: f64,
    pub cutoff_hz: (f64, f64),
    pub order: (usize, usize),
    pub families: Vec<FilterFamily>,
    pub ripple_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipPolicy {
    pub p: f64,
    pub alpha_min: (f64, f64),
    pub alpha_max: (f64, f64),
}

/// Per-kernel application probabilities and parameter ranges. A missing
/// entry disables that kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationPolicy {
    pub reverb: Option<ReverbPolicy>,
    pub noise: Option<NoisePolicy>,
    pub bandwidth: Option<BandwidthPolicy>,
    pub clip: Option<ClipPolicy>,
}

impl Default for DegradationPolicy {
    fn default() -> Self {
        Self::with_probability(0.5)
    }
}

impl DegradationPolicy {
    /// Training ranges with the same application probability for every kernel.
    pub fn with_probability(p: f64) -> Self {
        Self {
            reverb: Some(ReverbPolicy { p }),
            noise: Some(NoisePolicy { p, snr_db: (-10.0, 20.0) }),
            bandwidth: Some(BandwidthPolicy {
                p,
                cutoff_hz: (2000.0, 7000.0),
                order: (2, 8),
                families: vec![FilterFamily::Chebyshev1, FilterFamily::Butterworth],
                ripple_db: 1.0,
            }),
            clip: Some(ClipPolicy { p, alpha_min: (-0.9, -0.1), alpha_max: (0.1, 0.9) }),
        }
    }

    pub fn empty() -> Self {
        Self { reverb: None, noise: None, bandwidth: None, clip: None }
    }

    pub fn is_empty(&self) -> bool {
        self.reverb.is_none() && self.noise.is_none() && self.bandwidth.is_none() && self.clip.is_none()
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a recipe; the same seed and policy always give the same recipe.
pub fn sample_recipe(seed: u64, policy: &DegradationPolicy) -> Result<DegradationRecipe> {
    if policy.is_empty() {
        return Err(Error::EmptyPolicy);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();
    if let Some(r) = &policy.reverb {
        if rng.gen_bool(r.p.clamp(0.0, 1.0)) {
            steps.push(Step::Reverb { pick: rng.gen() });
        }
    }
    if let Some(n) = &policy.noise {
        if rng.gen_bool(n.p.clamp(0.0, 1.0)) {
            steps.push(Step::Noise { pick: rng.gen(), snr_db: uniform(&mut rng, n.snr_db) });
        }
    }
    if let Some(b) = &policy.bandwidth {
        if rng.gen_bool(b.p.clamp(0.0, 1.0)) {
            if b.families.is_empty() {
                return Err(Error::Config("bandwidth policy lists no filter family".into()));
            }
            let cutoff_hz = uniform(&mut rng, b.cutoff_hz);
            let order = rng.gen_range(b.order.0..=b.order.1.max(b.order.0));
            let family = b.families[rng.gen_range(0..b.families.len())];
            steps.push(Step::Bandwidth { cutoff_hz, family, order, ripple_db: b.ripple_db });
        }
    }
    if let Some(c) = &policy.clip {
        if rng.gen_bool(c.p.clamp(0.0, 1.0)) {
            steps.push(Step::Clip { alpha_min: uniform(&mut rng, c.alpha_min), alpha_max: uniform(&mut rng, c.alpha_max) });
        }
    }
    Ok(DegradationRecipe { seed, steps })
}

/// Applies the recipe in the fixed order reverb → noise → bandwidth → clip,
/// then scales the result down if its peak exceeds 1.
pub fn apply_recipe(
    clean: &Waveform,
    recipe: &DegradationRecipe,
    noise_pool: &[Waveform],
    rir_pool: &[Waveform],
) -> Result<(Waveform, DegradationRecipe)> {
    check_finite(&clean.samples)?;
    let mut steps = recipe.steps.clone();
    steps.sort_by_key(Step::rank);
    let mut x = clean.samples.clone();
    for s in &steps {
        x = match *s {
            Step::Reverb { pick } => {
                if rir_pool.is_empty() {
                    return Err(Error::EmptyPool("impulse response"));
                }
                reverberate(&x, &rir_pool[(pick % rir_pool.len() as u64) as usize].samples)?
            }
            Step::Noise { pick, snr_db } => {
                let noise = select_noise(noise_pool, pick, x.len())?;
                add_noise(&x, &noise, snr_db)?
            }
            Step::Bandwidth { cutoff_hz, family, order, ripple_db } => {
                bandwidth_limit(&x, cutoff_hz, family, order, ripple_db)?
            }
            Step::Clip { alpha_min, alpha_max } => clip_waveform(&x, alpha_min, alpha_max)?,
        };
    }
    let p = peak(&x);
    if p > 1.0 {
        x.iter_mut().for_each(|v| *v /= p);
    }
    Ok((Waveform::new(x)?, DegradationRecipe { seed: recipe.seed, steps }))
}

/// Order-independent per-item seed derived from a global seed (SplitMix64 mixing).
pub fn item_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
