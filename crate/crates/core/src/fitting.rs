//! Single-amplitude least-squares fit of a model shape to a histogram.

use serde::{Deserialize, Serialize};

use crate::detection::CoincidenceHistogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights `1 / max(data, 1)`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub amplitude: f64,
    pub residual_rms: f64,
    /// `data - baseline - amplitude * model` per bin.
    pub per_bin_residuals: Vec<f64>,
}

impl FitResult {
    /// RMS residual expected from counting noise alone, given the fitted model.
    pub fn poisson_floor(&self, data: &CoincidenceHistogram) -> f64 {
        // fitted expectation = data - residual
        let n = data.counts.len() as f64;
        let mean: f64 = data
            .counts
            .iter()
            .zip(&self.per_bin_residuals)
            .map(|(d, r)| (d - r).max(0.0))
            .sum::<f64>()
            / n;
        mean.sqrt()
    }
}

/// Closed-form `A = sum w m (d - b) / sum w m^2`, clamped at zero.
pub fn fit_amplitude(
    model: &CoincidenceHistogram,
    data: &CoincidenceHistogram,
    baseline: f64,
    weighting: Weighting,
) -> Result<FitResult> {
    if !model.same_binning(data) {
        return Err(Error::BinningMismatch("model and data histograms".into()));
    }
    if !baseline.is_finite() {
        return Err(Error::invalid("baseline", "must be finite"));
    }
    let weight = |d: f64| match weighting {
        Weighting::Unweighted => 1.0,
        Weighting::Poisson => 1.0 / d.max(1.0),
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, d) in model.counts.iter().zip(&data.counts) {
        let w = weight(*d);
        num += w * m * (d - baseline);
        den += w * m * m;
    }
    if den <= 0.0 {
        return Err(Error::ZeroModel);
    }
    let amplitude = (num / den).max(0.0);
    let per_bin_residuals: Vec<f64> = model
        .counts
        .iter()
        .zip(&data.counts)
        .map(|(m, d)| d - baseline - amplitude * m)
        .collect();
    let residual_rms = (per_bin_residuals.iter().map(|r| r * r).sum::<f64>()
        / per_bin_residuals.len() as f64)
        .sqrt();
    Ok(FitResult {
        amplitude,
        residual_rms,
        per_bin_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn hist(counts: Vec<f64>) -> CoincidenceHistogram {
        CoincidenceHistogram {
            bin_width: 1.0,
            t_min: -30.0,
            counts,
            total_pairs: 0,
        }
    }

    /// Rising exponential shape on 60 one-nanosecond bins, summing to 100.
    fn rising() -> CoincidenceHistogram {
        let raw: Vec<f64> = (0..60)
            .map(|k| {
                let t = -30.0 + k as f64 + 0.5;
                if t < 0.0 {
                    (t / 5.9).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let s: f64 = raw.iter().sum();
        hist(raw.into_iter().map(|v| 100.0 * v / s).collect())
    }

    fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
        if mean > 0.0 {
            Poisson::new(mean).unwrap().sample(rng)
        } else {
            0.0
        }
    }

    fn sse(model: &CoincidenceHistogram, data: &CoincidenceHistogram, a: f64) -> f64 {
        model
            .counts
            .iter()
            .zip(&data.counts)
            .map(|(m, d)| (d - a * m).powi(2))
            .sum()
    }

    #[test]
    fn noiseless_proportional_data() {
        let m = rising();
        let d = hist(m.counts.iter().map(|v| 7.3 * v).collect());
        let f = fit_amplitude(&m, &d, 0.0, Weighting::Unweighted).unwrap();
        assert!((f.amplitude - 7.3).abs() < 1e-12);
        assert!(f.residual_rms < 1e-10);
        let fp = fit_amplitude(&m, &d, 0.0, Weighting::Poisson).unwrap();
        assert!((fp.amplitude - 7.3).abs() < 1e-12);
    }

    #[test]
    fn baseline_is_removed() {
        let m = rising();
        let d = hist(m.counts.iter().map(|v| 2.0 * v + 4.0).collect());
        let f = fit_amplitude(&m, &d, 4.0, Weighting::Unweighted).unwrap();
        assert!((f.amplitude - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let zero = hist(vec![0.0; 60]);
        assert!(matches!(
            fit_amplitude(&zero, &rising(), 0.0, Weighting::Unweighted),
            Err(Error::ZeroModel)
        ));
        let short = hist(vec![1.0; 10]);
        assert!(fit_amplitude(&short, &rising(), 0.0, Weighting::Unweighted).is_err());
    }

    #[test]
    fn amplitude_is_never_negative() {
        let m = rising();
        let d = hist(m.counts.iter().map(|v| -v).collect());
        let f = fit_amplitude(&m, &d, 0.0, Weighting::Unweighted).unwrap();
        assert_eq!(f.amplitude, 0.0);
    }

    #[test]
    fn poisson_recovery() {
        let m = rising();
        let mut hits = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let d = hist(
                m.counts
                    .iter()
                    .map(|v| poisson(&mut rng, 1000.0 * v))
                    .collect(),
            );
            let f = fit_amplitude(&m, &d, 0.0, Weighting::Unweighted).unwrap();
            if (f.amplitude - 1000.0).abs() <= 20.0 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits} of 100");
    }

    #[test]
    fn wrong_shape_leaves_large_residuals() {
        let m = rising();
        // far-detuned pair: mostly the original decaying exponential
        let decaying = hist(m.counts.iter().rev().cloned().collect());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = hist(
            decaying
                .counts
                .iter()
                .map(|v| poisson(&mut rng, 1000.0 * v))
                .collect(),
        );
        let wrong = fit_amplitude(&m, &data, 0.0, Weighting::Unweighted).unwrap();
        let right = fit_amplitude(&decaying, &data, 0.0, Weighting::Unweighted).unwrap();
        assert!(wrong.residual_rms > 5.0 * wrong.poisson_floor(&data));
        assert!(right.residual_rms < 2.0 * right.poisson_floor(&data));
        assert!(wrong.residual_rms > right.residual_rms);
    }

    proptest! {
        #[test]
        fn scale_equivariance(
            data in proptest::collection::vec(0.0f64..500.0, 60),
            k in 0.01f64..100.0,
        ) {
            let m = rising();
            let d = hist(data);
            let dk = hist(d.counts.iter().map(|v| k * v).collect());
            let a = fit_amplitude(&m, &d, 0.0, Weighting::Unweighted).unwrap().amplitude;
            let ak = fit_amplitude(&m, &dk, 0.0, Weighting::Unweighted).unwrap().amplitude;
            prop_assert!((ak - k * a).abs() <= 1e-9 * (k * a).max(1.0));
        }

        #[test]
        fn fit_is_the_grid_scan_optimum(
            data in proptest::collection::vec(1.0f64..500.0, 60),
        ) {
            let m = rising();
            let d = hist(data);
            let a = fit_amplitude(&m, &d, 0.0, Weighting::Unweighted).unwrap().amplitude;
            let best = sse(&m, &d, a);
            for step in -50..=50 {
                let trial = (a * (1.0 + step as f64 * 0.01)).max(0.0);
                prop_assert!(sse(&m, &d, trial) >= best - 1e-9 * best);
            }
        }
    }
}
