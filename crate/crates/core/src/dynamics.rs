//! Mean intracavity photon number: a single-mode forward model and the
//! estimator that recovers it from a pair of coincidence histograms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::biphoton::{biphoton_amplitude, BiphotonParams, Mode};
use crate::detection::{
    expected_histogram, Binning, CoincidenceHistogram, DetectorModel, IntensityProfile,
};
use crate::error::{Error, Result};
use crate::spectral::{
    apply_cavity_filter, to_mode_time, CavityParams, ComplexEnvelope, ResponseModel, TimeGrid,
};
use crate::units::mhz_to_rad_per_ns;

/// Far-off-resonance reference detuning, MHz.
pub const FAR_DETUNING_MHZ: f64 = 200.0;

/// Integration steps per shortest time scale.
const STEPS_PER_SCALE: f64 = 50.0;

const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberSeries {
    pub t0: f64,
    pub dt_step: f64,
    pub values: Vec<f64>,
}

impl PhotonNumberSeries {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt_step
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn peak_time(&self) -> f64 {
        let k = self
            .values
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
            )
            .0;
        self.time(k)
    }

    /// Linear interpolation; clamps to the end values outside the series.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        let u = (t - self.t0) / self.dt_step;
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let k = u.floor() as usize;
        let f = u - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }
}

/// Coincidence histograms with the cavity far off resonance and on resonance,
/// on the time axis of the filtered photon.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    pub far_resonance: CoincidenceHistogram,
    pub on_resonance: CoincidenceHistogram,
}

impl HistogramPair {
    pub fn new(far: CoincidenceHistogram, on: CoincidenceHistogram) -> Result<Self> {
        if !far.same_binning(&on) {
            return Err(Error::BinningMismatch(format!(
                "far: {} bins of {} ns from {}; on: {} bins of {} ns from {}",
                far.counts.len(),
                far.bin_width,
                far.t_min,
                on.counts.len(),
                on.bin_width,
                on.t_min
            )));
        }
        if far
            .counts
            .iter()
            .chain(&on.counts)
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(Error::invalid("counts", "must be finite and >= 0"));
        }
        Ok(Self {
            far_resonance: far,
            on_resonance: on,
        })
    }
}

/// Running sum of `G_far - G_on`, discounted at rate `eta * fsr` per ns and
/// normalised by the total far-off-resonance counts. Sample `k` is the value
/// at the end of bin `k`.
pub fn estimate_mean_photon(h: &HistogramPair, eta: f64, fsr: f64) -> Result<PhotonNumberSeries> {
    let h = HistogramPair::new(h.far_resonance.clone(), h.on_resonance.clone())?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta", "must be >= 0"));
    }
    if !(fsr > 0.0 && fsr.is_finite()) {
        return Err(Error::invalid("fsr", "must be > 0"));
    }
    let total = h.far_resonance.total();
    if total <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let w = h.far_resonance.bin_width;
    let discount = (-eta * fsr * w).exp();
    let mut n = 0.0;
    let values = h
        .far_resonance
        .counts
        .iter()
        .zip(&h.on_resonance.counts)
        .map(|(f, o)| {
            n = n * discount + (f - o) / total;
            n
        })
        .collect();
    Ok(PhotonNumberSeries {
        t0: h.far_resonance.t_min + w,
        dt_step: w,
        values,
    })
}

/// Largest stable step for the field equation, ns.
pub fn step_bound(c: &CavityParams, tau: f64) -> f64 {
    let p = c.total_rate();
    let scale = if p > 0.0 { tau.min(1.0 / p) } else { tau };
    scale / STEPS_PER_SCALE
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub photon_number: PhotonNumberSeries,
    /// Reflected field, up to a global sign relative to the spectral filter.
    pub output: ComplexEnvelope,
    pub input_energy: f64,
    pub output_energy: f64,
    /// Energy lost through the back mirror.
    pub dissipated: f64,
    /// Energy still stored at the end of the grid.
    pub stored_final: f64,
}

impl ForwardSolution {
    /// `|out + lost + stored - in| / in`.
    pub fn energy_imbalance(&self) -> f64 {
        (self.output_energy + self.dissipated + self.stored_final - self.input_energy).abs()
            / self.input_energy
    }
}

/// Integrates `da/dt = -(p + i delta) a + sqrt(2 p1) a_in(t)` with fourth-order
/// Runge-Kutta on the input grid, starting from an empty cavity.
///
/// `input` is the amplitude of the photon that meets the cavity, in its own
/// time, with unit total probability.
pub fn intracavity_solve(
    input: &ComplexEnvelope,
    c: &CavityParams,
    tau: f64,
) -> Result<ForwardSolution> {
    c.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", "must be > 0"));
    }
    let e_in = input.energy();
    if (e_in - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(e_in));
    }
    let bound = step_bound(c, tau);
    let h = input.dt_step;
    if h > bound {
        return Err(Error::StepTooLarge { step: h, bound });
    }

    let g = (2.0 * c.input_coupling_rate()).sqrt();
    let loss = 2.0 * c.loss_rate();
    let decay = Complex64::new(c.total_rate(), c.delta);
    let rhs = |a: Complex64, drive: Complex64| -decay * a + g * drive;

    let n = input.len();
    let s = &input.samples;
    let mut a = Complex64::new(0.0, 0.0);
    let mut field = Vec::with_capacity(n);
    field.push(a);
    for k in 0..n - 1 {
        let mid = 0.5 * (s[k] + s[k + 1]);
        let k1 = rhs(a, s[k]);
        let k2 = rhs(a + 0.5 * h * k1, mid);
        let k3 = rhs(a + 0.5 * h * k2, mid);
        let k4 = rhs(a + h * k3, s[k + 1]);
        a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        field.push(a);
    }

    let out: Vec<Complex64> = field.iter().zip(s).map(|(a, x)| g * a - x).collect();
    let output_energy = out.iter().map(|v| v.norm_sqr()).sum::<f64>() * h;
    let dissipated = field.iter().map(|v| v.norm_sqr()).sum::<f64>() * loss * h;
    let stored_final = field[n - 1].norm_sqr();
    Ok(ForwardSolution {
        photon_number: PhotonNumberSeries {
            t0: input.t0,
            dt_step: h,
            values: field.iter().map(|v| v.norm_sqr()).collect(),
        },
        output: ComplexEnvelope {
            samples: out,
            ..input.clone()
        },
        input_energy: e_in,
        output_energy,
        dissipated,
        stored_final,
    })
}

pub fn intracavity_forward(
    input: &ComplexEnvelope,
    c: &CavityParams,
    tau: f64,
) -> Result<PhotonNumberSeries> {
    Ok(intracavity_solve(input, c, tau)?.photon_number)
}

/// Unit-probability amplitude of the photon in `mode`, in its own time.
pub fn mode_input(p: &BiphotonParams, mode: Mode, grid: &TimeGrid) -> Result<ComplexEnvelope> {
    p.validate()?;
    let env = ComplexEnvelope::sample(grid, |t| biphoton_amplitude(p, t));
    Ok(to_mode_time(&env, mode).normalized())
}

/// Noiseless far and on-resonance histograms on the time axis of the
/// filtered photon, from ideal detectors with `pairs` emitted pairs.
///
/// A fraction `coupling` of the light is mode matched to the cavity.
#[allow(clippy::too_many_arguments)]
pub fn simulate_histogram_pair(
    p: &BiphotonParams,
    cavity: &CavityParams,
    mode: Mode,
    grid: &TimeGrid,
    model: ResponseModel,
    far_detuning: f64,
    coupling: f64,
    binning: &Binning,
    pairs: f64,
) -> Result<HistogramPair> {
    let input = mode_input(p, mode, grid)?;
    let unfiltered = IntensityProfile::from_envelope(&input);
    let profile = |c: &CavityParams| -> Result<IntensityProfile> {
        let out = apply_cavity_filter(&input, c, model)?;
        IntensityProfile::mix(
            &unfiltered,
            &IntensityProfile::from_envelope(&out),
            coupling,
        )
    };
    let far = profile(&cavity.with_detuning(far_detuning))?;
    let on = profile(cavity)?;
    let det = DetectorModel::ideal();
    let hist = |pr: &IntensityProfile| expected_histogram(pr, &det, &det, pairs, 1.0, 0.0, binning);
    HistogramPair::new(hist(&far)?, hist(&on)?)
}

/// Default far reference detuning, rad/ns.
pub fn far_detuning() -> f64 {
    mhz_to_rad_per_ns(FAR_DETUNING_MHZ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{from_mode_time, TimeGrid};
    use proptest::prelude::*;

    const TAU: f64 = 5.9;

    fn grid() -> TimeGrid {
        TimeGrid::new(1 << 15, 160.0, TAU).unwrap()
    }

    fn hist(counts: Vec<f64>, t_min: f64, w: f64) -> CoincidenceHistogram {
        CoincidenceHistogram {
            bin_width: w,
            t_min,
            counts,
            total_pairs: 0,
        }
    }

    fn peak_for(mode: Mode, c: &CavityParams) -> f64 {
        let input = mode_input(&BiphotonParams::measured(), mode, &grid()).unwrap();
        intracavity_forward(&input, c, TAU).unwrap().peak()
    }

    #[test]
    fn identical_histograms_give_empty_cavity() {
        let g = hist(vec![3.0, 5.0, 0.0, 7.0], -2.0, 1.0);
        let h = HistogramPair::new(g.clone(), g).unwrap();
        let n = estimate_mean_photon(&h, 0.002, 2.7).unwrap();
        assert!(n.values.iter().all(|&v| v == 0.0));
        assert_eq!(n.t0, -1.0);
    }

    #[test]
    fn lossless_limit_is_normalised_cumulative_sum() {
        let far = hist(vec![1.0, 4.0, 0.0, 3.0, 2.0], 0.0, 0.5);
        let on = hist(vec![0.0; 5], 0.0, 0.5);
        let n = estimate_mean_photon(&HistogramPair::new(far, on).unwrap(), 0.0, 2.7).unwrap();
        let expect = [0.1, 0.5, 0.5, 0.8, 1.0];
        for (a, b) in n.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn estimator_errors() {
        let a = hist(vec![1.0; 4], 0.0, 1.0);
        let b = hist(vec![1.0; 5], 0.0, 1.0);
        assert!(matches!(
            HistogramPair::new(a.clone(), b),
            Err(Error::BinningMismatch(_))
        ));
        let shifted = hist(vec![1.0; 4], 0.5, 1.0);
        assert!(HistogramPair::new(a.clone(), shifted).is_err());
        let zero = HistogramPair::new(hist(vec![0.0; 4], 0.0, 1.0), a).unwrap();
        assert!(matches!(
            estimate_mean_photon(&zero, 0.0, 2.7),
            Err(Error::ZeroReference)
        ));
    }

    /// `sum_j (f_j - o_j) e^{-g (t_k - t_j)}` evaluated directly.
    fn double_sum(h: &HistogramPair, rate: f64) -> Vec<f64> {
        let f = &h.far_resonance.counts;
        let o = &h.on_resonance.counts;
        let total: f64 = f.iter().sum();
        let w = h.far_resonance.bin_width;
        (0..f.len())
            .map(|k| {
                (0..=k)
                    .map(|j| (f[j] - o[j]) * (-rate * w * (k - j) as f64).exp())
                    .sum::<f64>()
                    / total
            })
            .collect()
    }

    proptest! {
        #[test]
        fn recursion_matches_direct_sum(
            far in proptest::collection::vec(0.0f64..100.0, 2..200),
            eta in 0.0f64..0.2,
        ) {
            let on: Vec<f64> = far.iter().map(|v| 0.6 * v).collect();
            let n = far.len();
            let h = HistogramPair::new(hist(far, -10.0, 0.25), hist(on, -10.0, 0.25)).unwrap();
            let est = estimate_mean_photon(&h, eta, 2.7).unwrap();
            let direct = double_sum(&h, eta * 2.7);
            prop_assert_eq!(est.values.len(), n);
            for (a, b) in est.values.iter().zip(direct) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn lossless_matched_rising_input_loads_fully() {
        let peak = peak_for(Mode::Signal, &CavityParams::matched(TAU, 2.7));
        assert!((peak - 1.0).abs() < 0.01, "peak {peak}");
    }

    #[test]
    fn rising_input_loads_better_than_decaying() {
        let c = CavityParams::measured();
        let rising = peak_for(Mode::Signal, &c);
        let decaying = peak_for(Mode::Idler, &c);
        assert!(rising > decaying);
        assert!(rising / decaying >= 1.5, "ratio {}", rising / decaying);
    }

    #[test]
    fn rising_peak_on_resonance_dominates_detuned_decaying() {
        let c = CavityParams::measured();
        let rising = peak_for(Mode::Signal, &c);
        for k in -6..=6 {
            let delta = 0.5 * k as f64 / TAU;
            let decaying = peak_for(Mode::Idler, &c.with_detuning(delta));
            assert!(rising > decaying, "delta tau {}", delta * TAU);
        }
    }

    #[test]
    fn output_field_reproduces_spectral_filter() {
        let p = BiphotonParams::measured();
        for (c, mode) in [
            (CavityParams::measured(), Mode::Signal),
            (
                CavityParams::measured().with_detuning(mhz_to_rad_per_ns(27.0)),
                Mode::Signal,
            ),
            (CavityParams::measured(), Mode::Idler),
        ] {
            let input = mode_input(&p, mode, &grid()).unwrap();
            let sol = intracavity_solve(&input, &c, TAU).unwrap();
            let spectral = apply_cavity_filter(&input, &c, ResponseModel::SingleMode).unwrap();
            let peak = spectral.intensity().into_iter().fold(0.0, f64::max);
            let err = sol
                .output
                .intensity()
                .iter()
                .zip(spectral.intensity())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 0.01 * peak, "err {err}, peak {peak}");
            // and the reflected pulse maps back to the pair axis like the filter
            let _ = from_mode_time(&sol.output, mode);
        }
    }

    #[test]
    fn energy_ledger_closes() {
        for c in [
            CavityParams::measured(),
            CavityParams::measured().with_detuning(0.3),
            CavityParams::matched(TAU, 2.7),
        ] {
            for mode in [Mode::Signal, Mode::Idler] {
                let input = mode_input(&BiphotonParams::measured(), mode, &grid()).unwrap();
                let sol = intracavity_solve(&input, &c, TAU).unwrap();
                assert!(sol.energy_imbalance() <= 0.01, "{}", sol.energy_imbalance());
                assert!(sol.dissipated >= 0.0);
            }
        }
    }

    #[test]
    fn rejects_unnormalised_input_and_coarse_steps() {
        let p = BiphotonParams::measured();
        let input = mode_input(&p, Mode::Signal, &grid()).unwrap();
        let doubled = ComplexEnvelope {
            samples: input.samples.iter().map(|s| s * 2.0).collect(),
            ..input.clone()
        };
        assert!(matches!(
            intracavity_solve(&doubled, &CavityParams::measured(), TAU),
            Err(Error::NotNormalized(_))
        ));
        let coarse = TimeGrid::new(1 << 12, 160.0, TAU).unwrap();
        let input = mode_input(&p, Mode::Signal, &coarse).unwrap();
        assert!(matches!(
            intracavity_solve(&input, &CavityParams::measured(), TAU),
            Err(Error::StepTooLarge { .. })
        ));
    }

    /// Largest pointwise gap between estimator and forward model after each
    /// is divided by its own peak, and the ratio of the peaks.
    fn estimator_gap(mode: Mode, far: f64) -> (f64, f64) {
        let p = BiphotonParams::measured();
        let c = CavityParams::measured();
        let binning = Binning::symmetric(60.0, 0.5).unwrap();
        let pair = simulate_histogram_pair(
            &p,
            &c,
            mode,
            &grid(),
            ResponseModel::SingleMode,
            far,
            1.0,
            &binning,
            1e6,
        )
        .unwrap();
        let est = estimate_mean_photon(&pair, c.eta, c.fsr).unwrap();
        let input = mode_input(&p, mode, &grid()).unwrap();
        let fwd = intracavity_forward(&input, &c, TAU).unwrap();
        let (pe, pf) = (est.peak(), fwd.peak());
        let gap = (0..est.values.len())
            .map(|k| (est.values[k] / pe - fwd.value_at(est.time(k)) / pf).abs())
            .fold(0.0, f64::max);
        (gap, pe / pf)
    }

    #[test]
    fn estimator_tracks_forward_model_for_rising_input() {
        let (gap, ratio) = estimator_gap(Mode::Signal, far_detuning());
        assert!(gap <= 0.05, "gap {gap}");
        assert!((ratio - 1.0).abs() <= 0.05, "ratio {ratio}");
    }

    #[test]
    fn estimator_is_exact_with_a_transparent_reference() {
        for mode in [Mode::Signal, Mode::Idler] {
            let (gap, ratio) = estimator_gap(mode, 50.0);
            assert!(gap <= 0.005, "{mode:?} gap {gap}");
            assert!((ratio - 1.0).abs() <= 0.005);
        }
    }

    #[test]
    fn far_reference_rings_on_the_decaying_edge() {
        // at 200 MHz the reference still rings on the abrupt leading edge
        let (gap, ratio) = estimator_gap(Mode::Idler, far_detuning());
        assert!(gap > 0.05 && gap < 0.1, "gap {gap}");
        assert!((ratio - 1.0).abs() <= 0.05);
    }
}
