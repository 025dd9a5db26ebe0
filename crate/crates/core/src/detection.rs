//! From filtered pair intensities to measurable data: expected coincidence
//! histograms, Monte Carlo time tags with detector imperfections, and a
//! two-pointer coincidence counter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::spectral::ComplexEnvelope;
use crate::units::{NS_PER_S, PS_PER_NS};

pub const SIGNAL_CHANNEL: u32 = 0;
pub const IDLER_CHANNEL: u32 = 1;

/// Upper bound on generated events per run.
pub const MAX_EVENTS: f64 = 5e8;

/// Wall-clock length of one independently seeded generator chunk, s.
const CHUNK_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Gaussian timing jitter (standard deviation), ns.
    pub jitter_sigma: f64,
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Non-paralysable dead time, ns.
    pub dead_time: f64,
}

impl Default for DetectorModel {
    /// Avalanche photodiode with 0.4 ns jitter, otherwise ideal.
    fn default() -> Self {
        Self {
            jitter_sigma: 0.4,
            efficiency: 1.0,
            dark_rate: 0.0,
            dead_time: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            jitter_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(Error::invalid("jitter_sigma", "must be >= 0"));
        }
        // zero efficiency is accepted: it models a blocked channel
        if !(self.efficiency >= 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid("efficiency", "must lie in [0, 1]"));
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(Error::invalid("dark_rate", "must be >= 0"));
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return Err(Error::invalid("dead_time", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    /// Start of the first bin, ns.
    pub t_min: f64,
    pub bin_width: f64,
    pub n_bins: usize,
}

impl Binning {
    pub fn new(t_min: f64, bin_width: f64, n_bins: usize) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::invalid("bin_width", "must be > 0"));
        }
        if n_bins == 0 {
            return Err(Error::invalid("n_bins", "need at least one bin"));
        }
        if !t_min.is_finite() {
            return Err(Error::invalid("t_min", "must be finite"));
        }
        Ok(Self {
            t_min,
            bin_width,
            n_bins,
        })
    }

    /// Bins of `bin_width` covering `[-window, window)`.
    pub fn symmetric(window: f64, bin_width: f64) -> Result<Self> {
        let n = (2.0 * window / bin_width).round().max(1.0) as usize;
        Self::new(-0.5 * n as f64 * bin_width, bin_width, n)
    }

    pub fn t_max(&self) -> f64 {
        self.t_min + self.n_bins as f64 * self.bin_width
    }
}

/// Pair-detection counts versus detection-time difference `t_idler - t_signal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub t_min: f64,
    /// Counts per bin; integral for measured histograms, real for expected ones.
    pub counts: Vec<f64>,
    /// Recorded coincidences (measured) or emitted pairs (expected).
    pub total_pairs: u64,
}

impl CoincidenceHistogram {
    pub fn empty(binning: &Binning) -> Self {
        Self {
            bin_width: binning.bin_width,
            t_min: binning.t_min,
            counts: vec![0.0; binning.n_bins],
            total_pairs: 0,
        }
    }

    pub fn binning(&self) -> Binning {
        Binning {
            t_min: self.t_min,
            bin_width: self.bin_width,
            n_bins: self.counts.len(),
        }
    }

    pub fn bin_start(&self, k: usize) -> f64 {
        self.t_min + k as f64 * self.bin_width
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.bin_start(k) + 0.5 * self.bin_width
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.counts.len() == other.counts.len()
            && (self.bin_width - other.bin_width).abs() <= 1e-12 * self.bin_width
            && (self.t_min - other.t_min).abs() <= 1e-9 * self.bin_width
    }

    /// Histogram of `-dt`: the result of exchanging the two channels.
    pub fn mirrored(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.reverse();
        Self {
            t_min: -(self.t_min + self.counts.len() as f64 * self.bin_width),
            counts,
            ..self.clone()
        }
    }
}

/// Probability mass of the detection-time difference on a uniform grid of
/// cells `[t_k - h/2, t_k + h/2)`. The total may be below one when the
/// cavity absorbs part of the light.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    pub t0: f64,
    pub dt_step: f64,
    pub mass: Vec<f64>,
    pub time_scale: f64,
}

impl IntensityProfile {
    /// `|s|^2 dt` per cell; the envelope is expected in units where the
    /// unfiltered pair has unit energy.
    pub fn from_envelope(env: &ComplexEnvelope) -> Self {
        Self {
            t0: env.t0,
            dt_step: env.dt_step,
            mass: env
                .samples
                .iter()
                .map(|s| s.norm_sqr() * env.dt_step)
                .collect(),
            time_scale: env.time_scale,
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn normalized(&self) -> Self {
        let t = self.total();
        let k = if t > 0.0 { 1.0 / t } else { 0.0 };
        Self {
            mass: self.mass.iter().map(|m| m * k).collect(),
            ..self.clone()
        }
    }

    /// `(1 - eps) a + eps b`: a fraction `eps` of the light is mode matched
    /// to the cavity (profile `b`), the rest reflects unchanged (profile `a`).
    pub fn mix(a: &Self, b: &Self, eps: f64) -> Result<Self> {
        if a.mass.len() != b.mass.len() || (a.t0 - b.t0).abs() > 1e-9 * a.dt_step {
            return Err(Error::BinningMismatch(
                "intensity profiles differ in grid".into(),
            ));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::invalid("coupling_efficiency", "must lie in [0, 1]"));
        }
        Ok(Self {
            mass: a
                .mass
                .iter()
                .zip(&b.mass)
                .map(|(x, y)| (1.0 - eps) * x + eps * y)
                .collect(),
            ..a.clone()
        })
    }

    pub fn center(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt_step
    }

    fn validate(&self) -> Result<()> {
        if self.mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::invalid(
                "envelope_intensity",
                "must be finite and >= 0",
            ));
        }
        if self.total() > 1.0 + 1e-6 {
            return Err(Error::invalid(
                "envelope_intensity",
                format!("total probability {} exceeds one", self.total()),
            ));
        }
        Ok(())
    }
}

/// Rate of uncorrelated coincidences per bin, counts/s, for singles rates in Hz.
pub fn accidental_rate_per_bin(singles_a: f64, singles_b: f64, bin_width_ns: f64) -> f64 {
    singles_a * singles_b * bin_width_ns / NS_PER_S
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Expected counts: `pair_rate * duration * eff_s * eff_i` times the profile
/// convolved with the combined Gaussian jitter and integrated over each bin,
/// plus `accidental_rate * duration` per bin.
pub fn expected_histogram(
    profile: &IntensityProfile,
    det_s: &DetectorModel,
    det_i: &DetectorModel,
    pair_rate: f64,
    duration: f64,
    accidental_rate: f64,
    binning: &Binning,
) -> Result<CoincidenceHistogram> {
    det_s.validate()?;
    det_i.validate()?;
    profile.validate()?;
    for (name, v) in [
        ("pair_rate", pair_rate),
        ("duration", duration),
        ("accidental_rate", accidental_rate),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
        }
    }
    let limit = profile.time_scale / 4.0;
    if binning.bin_width > limit * (1.0 + 1e-12) {
        return Err(Error::BinTooWide {
            bin_width: binning.bin_width,
            limit,
        });
    }

    let scale = pair_rate * duration * det_s.efficiency * det_i.efficiency;
    let sigma = det_s.jitter_sigma.hypot(det_i.jitter_sigma);
    let mut counts = vec![0.0; binning.n_bins];
    let (lo_edge, w, n) = (binning.t_min, binning.bin_width, binning.n_bins);
    let h = profile.dt_step;

    if scale > 0.0 {
        for (k, &m) in profile.mass.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let c = profile.center(k);
            if sigma == 0.0 {
                // exact overlap of the cell with each bin
                let (a, b) = (c - 0.5 * h, c + 0.5 * h);
                let first = ((a - lo_edge) / w).floor().max(0.0) as usize;
                let last = ((b - lo_edge) / w).floor();
                if last < 0.0 {
                    continue;
                }
                let last = (last as usize).min(n - 1);
                for (j, slot) in counts.iter_mut().enumerate().take(last + 1).skip(first) {
                    let e0 = lo_edge + j as f64 * w;
                    let overlap = (b.min(e0 + w) - a.max(e0)).max(0.0);
                    *slot += m * overlap / h;
                }
            } else {
                let reach = 8.0 * sigma;
                let first = ((c - reach - lo_edge) / w).floor().max(0.0) as usize;
                let last = ((c + reach - lo_edge) / w).floor();
                if last < 0.0 {
                    continue;
                }
                let last = (last as usize).min(n - 1);
                for (j, slot) in counts.iter_mut().enumerate().take(last + 1).skip(first) {
                    let e0 = lo_edge + j as f64 * w;
                    let p = normal_cdf((e0 + w - c) / sigma) - normal_cdf((e0 - c) / sigma);
                    *slot += m * p;
                }
            }
        }
        for v in &mut counts {
            *v *= scale;
        }
    }
    let floor = accidental_rate * duration;
    for v in &mut counts {
        *v += floor;
    }
    Ok(CoincidenceHistogram {
        bin_width: w,
        t_min: lo_edge,
        counts,
        total_pairs: (pair_rate * duration).round() as u64,
    })
}

/// Detector clicks on one channel, integer picoseconds, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    pub channel: u32,
    pub tags: Vec<i64>,
}

impl TimeTagStream {
    pub fn new(channel: u32, tags: Vec<i64>) -> Result<Self> {
        let s = Self { channel, tags };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if let Some(&first) = self.tags.first() {
            if first < 0 {
                return Err(Error::invalid("timestamp_ps", "must be >= 0"));
            }
        }
        if let Some(i) = self.tags.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Unsorted {
                channel: self.channel,
                index: i + 1,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Cumulative distribution over profile cells, for inverse-CDF sampling.
struct CellSampler {
    cdf: Vec<f64>,
    t0: f64,
    h: f64,
}

impl CellSampler {
    fn new(profile: &IntensityProfile) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = profile
            .mass
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        if acc > 0.0 {
            for v in &mut cdf {
                *v /= acc;
            }
        }
        Self {
            cdf,
            t0: profile.t0 - 0.5 * profile.dt_step,
            h: profile.dt_step,
        }
    }

    /// Detection-time difference, ns: cell by CDF, uniform within the cell.
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let k = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1);
        let v: f64 = rng.random();
        self.t0 + (k as f64 + v) * self.h
    }
}

fn to_ps_floor(t_ns: f64) -> i64 {
    (t_ns * PS_PER_NS).floor() as i64
}

fn jitter(rng: &mut impl Rng, sigma: f64) -> i64 {
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("sigma validated");
        to_ps_floor(n.sample(rng))
    } else {
        0
    }
}

fn poisson(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    }
}

fn sort_and_prune(mut tags: Vec<i64>, dead_time_ns: f64, end_ps: i64) -> Vec<i64> {
    tags.retain(|&t| t >= 0 && t < end_ps);
    tags.sort_unstable();
    let dead = (dead_time_ns * PS_PER_NS).round() as i64;
    let mut out = Vec::with_capacity(tags.len());
    let mut last: Option<i64> = None;
    for t in tags {
        match last {
            // equal timestamps collapse into one click
            Some(l) if t <= l || t - l < dead => {}
            _ => {
                out.push(t);
                last = Some(t);
            }
        }
    }
    out
}

/// Monte Carlo signal and idler clicks for `duration` seconds.
///
/// Pairs arrive as a Poisson process; each survives the cavity with the
/// profile's total probability, receives a time difference by inverse-CDF
/// sampling of the profile, per-channel jitter and efficiency thinning. Dark
/// counts are added and dead time applied afterwards. Generation runs in
/// one-second chunks seeded from `(seed, chunk)`, so the output only depends
/// on the seed.
pub fn sample_timetags(
    profile: &IntensityProfile,
    det_s: &DetectorModel,
    det_i: &DetectorModel,
    pair_rate: f64,
    duration: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    det_s.validate()?;
    det_i.validate()?;
    profile.validate()?;
    if !(pair_rate.is_finite() && pair_rate >= 0.0) {
        return Err(Error::invalid("pair_rate", "must be >= 0"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid("duration", "must be >= 0"));
    }
    let requested = (2.0 * pair_rate + det_s.dark_rate + det_i.dark_rate) * duration;
    if requested > MAX_EVENTS {
        return Err(Error::TooManyEvents {
            requested,
            limit: MAX_EVENTS,
        });
    }
    let end_ps_f = duration * NS_PER_S * PS_PER_NS;
    if end_ps_f >= (i64::MAX / 4) as f64 {
        return Err(Error::TooManyEvents {
            requested: end_ps_f,
            limit: (i64::MAX / 4) as f64,
        });
    }
    let end_ps = end_ps_f.round() as i64;
    let survival = profile.total().min(1.0);
    let sampler = CellSampler::new(profile);
    let n_chunks = (duration / CHUNK_S).ceil() as u64;

    let chunks: Vec<(Vec<i64>, Vec<i64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let start = chunk as f64 * CHUNK_S;
            let len = (duration - start).min(CHUNK_S);
            let mut sig = Vec::new();
            let mut idl = Vec::new();
            let pairs = poisson(&mut rng, pair_rate * len * survival);
            for _ in 0..pairs {
                let arrival_ns = (start + rng.random::<f64>() * len) * NS_PER_S;
                let base = to_ps_floor(arrival_ns);
                let dt = to_ps_floor(sampler.draw(&mut rng));
                let js = jitter(&mut rng, det_s.jitter_sigma);
                let ji = jitter(&mut rng, det_i.jitter_sigma);
                if rng.random::<f64>() < det_s.efficiency {
                    sig.push(base + js);
                }
                if rng.random::<f64>() < det_i.efficiency {
                    idl.push(base + dt + ji);
                }
            }
            for (rate, out) in [(det_s.dark_rate, &mut sig), (det_i.dark_rate, &mut idl)] {
                let k = poisson(&mut rng, rate * len);
                for _ in 0..k {
                    out.push(to_ps_floor((start + rng.random::<f64>() * len) * NS_PER_S));
                }
            }
            (sig, idl)
        })
        .collect();

    let (mut sig, mut idl) = (Vec::new(), Vec::new());
    for (s, i) in chunks {
        sig.extend(s);
        idl.extend(i);
    }
    Ok((
        TimeTagStream {
            channel: SIGNAL_CHANNEL,
            tags: sort_and_prune(sig, det_s.dead_time, end_ps),
        },
        TimeTagStream {
            channel: IDLER_CHANNEL,
            tags: sort_and_prune(idl, det_i.dead_time, end_ps),
        },
    ))
}

fn ps_exact(v_ns: f64, name: &'static str) -> Result<i64> {
    let ps = v_ns * PS_PER_NS;
    let r = ps.round();
    if (ps - r).abs() > 1e-6 {
        return Err(Error::invalid(
            name,
            "must be a whole number of picoseconds",
        ));
    }
    Ok(r as i64)
}

/// Histogram of `b - a` for all pairs with `|b - a| <= window` (ns).
///
/// Two-pointer sweep, O(Na + Nb + matches). Bin edges are whole picoseconds,
/// so assignment is exact integer arithmetic.
pub fn coincidence_histogram(
    a: &TimeTagStream,
    b: &TimeTagStream,
    window: f64,
    binning: &Binning,
) -> Result<CoincidenceHistogram> {
    a.check()?;
    b.check()?;
    if !(window.is_finite() && window >= 0.0) {
        return Err(Error::invalid("window", "must be >= 0"));
    }
    let win = (window * PS_PER_NS).round() as i64;
    let lo = ps_exact(binning.t_min, "t_min")?;
    let w = ps_exact(binning.bin_width, "bin_width")?;
    if w <= 0 {
        return Err(Error::invalid("bin_width", "must be at least 1 ps"));
    }
    let n = binning.n_bins as i64;
    let mut counts = vec![0u64; binning.n_bins];
    let mut start = 0usize;
    for &ta in &a.tags {
        while start < b.tags.len() && b.tags[start] < ta - win {
            start += 1;
        }
        for &tb in &b.tags[start..] {
            let d = tb - ta;
            if d > win {
                break;
            }
            let k = (d - lo).div_euclid(w);
            if d >= lo && k < n {
                counts[k as usize] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(CoincidenceHistogram {
        bin_width: binning.bin_width,
        t_min: binning.t_min,
        counts: counts.into_iter().map(|c| c as f64).collect(),
        total_pairs: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `observed` against `expected`, using only bins whose
/// expectation is at least `min_expected`.
pub fn chi_square(
    observed: &CoincidenceHistogram,
    expected: &CoincidenceHistogram,
    min_expected: f64,
) -> Result<ChiSquare> {
    if !observed.same_binning(expected) {
        return Err(Error::BinningMismatch(
            "observed and expected histograms".into(),
        ));
    }
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (o, e) in observed.counts.iter().zip(&expected.counts) {
        if *e >= min_expected {
            stat += (o - e) * (o - e) / e;
            dof += 1;
        }
    }
    if dof == 0 {
        return Err(Error::Validation(
            "no bins above the expectation threshold".into(),
        ));
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Validation(e.to_string()))?;
    Ok(ChiSquare {
        statistic: stat,
        dof,
        p_value: dist.sf(stat),
    })
}
