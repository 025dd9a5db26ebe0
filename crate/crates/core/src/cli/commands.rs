use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::Scenario;
use super::output::{histogram_table, read_histogram, timetags_csv, Table, Writer};
use crate::biphoton::{filtered_amplitude, intensity, DetuningParams, Mode};
use crate::detection::{
    accidental_rate_per_bin, chi_square, coincidence_histogram, expected_histogram,
    sample_timetags, Binning, CoincidenceHistogram, IntensityProfile,
};
use crate::dynamics::{
    estimate_mean_photon, intracavity_solve, mode_input, simulate_histogram_pair,
    PhotonNumberSeries,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_amplitude, FitResult, Weighting};
use crate::spectral::{
    apply_cavity_filter, filter_biphoton, intensity_overlap, side_weight_fraction,
    symmetric_detuning, FilteredPair,
};
use crate::units::{mhz_to_rad_per_ns, rad_per_ns_to_mhz};

/// Tolerance of the forward model against the spectral filter, fraction of peak.
const CONSISTENCY_TOL: f64 = 0.01;

fn stem_mhz(delta: f64) -> String {
    let mhz = rad_per_ns_to_mhz(delta);
    let s = format!("{:.3}", mhz.abs());
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if mhz < 0.0 {
        format!("m{s}mhz")
    } else {
        format!("{s}mhz")
    }
}

fn filtered(sc: &Scenario, mode: Mode, delta: f64) -> Result<FilteredPair> {
    filter_biphoton(
        &sc.source,
        &sc.cavity.with_detuning(delta),
        mode,
        &sc.grid,
        sc.config.cavity.model,
    )
}

/// Detection-time-difference distribution of a pair with a fraction
/// `coupling_efficiency` of the light reaching the cavity.
fn pair_profile(sc: &Scenario, pair: &FilteredPair) -> Result<IntensityProfile> {
    let input = pair.input.normalized();
    let k = 1.0 / pair.input.energy().sqrt();
    let output = crate::spectral::ComplexEnvelope {
        samples: pair.output.samples.iter().map(|s| s * k).collect(),
        ..pair.output.clone()
    };
    IntensityProfile::mix(
        &IntensityProfile::from_envelope(&input),
        &IntensityProfile::from_envelope(&output),
        sc.config.coupling_efficiency,
    )
}

/// Uncorrelated coincidences per bin per second from the singles rates;
/// `survival` is the fraction of pairs leaving the cavity.
pub fn accidental_rate(sc: &Scenario, survival: f64, bin_width: f64) -> f64 {
    let r = sc.config.run.pair_rate_hz * survival;
    let singles_s = r * sc.det_signal.efficiency + sc.det_signal.dark_rate;
    let singles_i = r * sc.det_idler.efficiency + sc.det_idler.dark_rate;
    accidental_rate_per_bin(singles_s, singles_i, bin_width)
}

fn expected(
    sc: &Scenario,
    profile: &IntensityProfile,
    binning: &Binning,
) -> Result<CoincidenceHistogram> {
    expected_histogram(
        profile,
        &sc.det_signal,
        &sc.det_idler,
        sc.config.run.pair_rate_hz,
        sc.config.run.duration_s,
        accidental_rate(sc, profile.total(), binning.bin_width),
        binning,
    )
}

#[derive(Debug, Serialize)]
struct FilterRow {
    detuning_mhz: f64,
    delta_tau: f64,
    side_weight: f64,
    overlap_with_input: f64,
    energy_ratio: f64,
    max_error_vs_analytic: f64,
}

pub fn cmd_filter(sc: &Scenario, mode: Mode, w: &mut Writer) -> Result<()> {
    let tau = sc.source.tau;
    let window = sc.config.run.window_ns;
    let mut summary = Vec::new();
    for &delta in &sc.detunings {
        let pair = filtered(sc, mode, delta)?;
        let det = DetuningParams::new(delta, sc.config.cavity.convention)?;
        let analytic = |dt: f64| filtered_amplitude(&sc.source, &det, mode, dt);
        let mut t = Table::new(&[
            "dt_ns",
            "input_intensity",
            "filtered_intensity",
            "analytic_intensity",
        ]);
        for k in 0..pair.input.len() {
            let dt = pair.input.time(k);
            if dt.abs() <= window {
                t.push(vec![
                    dt,
                    pair.input.samples[k].norm_sqr(),
                    pair.output.samples[k].norm_sqr(),
                    intensity(analytic(dt)),
                ]);
            }
        }
        w.table(
            &format!("filter_{}_{}", mode_name(mode), stem_mhz(delta)),
            &t,
        )?;
        summary.push(FilterRow {
            detuning_mhz: rad_per_ns_to_mhz(delta),
            delta_tau: delta * tau,
            side_weight: side_weight_fraction(&pair.output),
            overlap_with_input: intensity_overlap(&pair.output, &pair.input)?,
            energy_ratio: pair.output.energy() / pair.input.energy(),
            max_error_vs_analytic: crate::spectral::max_intensity_error(&pair.output, analytic),
        });
    }
    w.json(&format!("filter_{}_summary", mode_name(mode)), &summary)?;
    Ok(())
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Signal => "signal",
        Mode::Idler => "idler",
    }
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    detuning_mhz: f64,
    side_weight: f64,
    expected_total: f64,
    accidental_floor_per_bin: f64,
    measured_total: Option<f64>,
    chi_square: Option<f64>,
    dof: Option<usize>,
    p_value: Option<f64>,
}

pub fn cmd_histogram(
    sc: &Scenario,
    monte_carlo: bool,
    write_tags: bool,
    w: &mut Writer,
) -> Result<()> {
    let mode = sc.config.cavity.mode;
    let run = &sc.config.run;
    let mut summary = Vec::new();
    for (i, &delta) in sc.detunings.iter().enumerate() {
        let pair = filtered(sc, mode, delta)?;
        let profile = pair_profile(sc, &pair)?;
        let exp = expected(sc, &profile, &sc.binning)?;
        let stem = format!("histogram_{}", stem_mhz(delta));
        w.table(&format!("{stem}_expected"), &histogram_table(&exp))?;
        let mut row = HistogramRow {
            detuning_mhz: rad_per_ns_to_mhz(delta),
            side_weight: side_weight_fraction(&pair.output),
            expected_total: exp.total(),
            accidental_floor_per_bin: accidental_rate(sc, profile.total(), sc.binning.bin_width)
                * run.duration_s,
            measured_total: None,
            chi_square: None,
            dof: None,
            p_value: None,
        };
        if monte_carlo {
            // one generator stream per detuning
            let seed = run.seed.wrapping_add(i as u64);
            let (s, id) = sample_timetags(
                &profile,
                &sc.det_signal,
                &sc.det_idler,
                run.pair_rate_hz,
                run.duration_s,
                seed,
            )?;
            let mc = coincidence_histogram(&s, &id, run.window_ns, &sc.binning)?;
            w.table(&format!("{stem}_mc"), &histogram_table(&mc))?;
            if write_tags {
                w.write(
                    &format!("{stem}_tags.csv"),
                    &timetags_csv(&[&s, &id], &w.provenance.clone()),
                )?;
            }
            row.measured_total = Some(mc.total());
            if let Ok(c) = chi_square(&mc, &exp, 5.0) {
                row.chi_square = Some(c.statistic);
                row.dof = Some(c.dof);
                row.p_value = Some(c.p_value);
            }
        }
        summary.push(row);
    }
    w.json("histogram_summary", &summary)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ExcitationRow {
    orientation: &'static str,
    cavity_mode: &'static str,
    peak_forward: f64,
    peak_time_ns: f64,
    peak_estimate: f64,
    max_normalized_gap: f64,
    energy_imbalance: f64,
    filter_consistency: f64,
}

#[derive(Debug, Serialize)]
struct ExcitationSummary {
    far_detuning_mhz: f64,
    rows: Vec<ExcitationRow>,
    peak_ratio_rising_over_decaying: f64,
    /// Measured maxima, for comparison only.
    experimental_peaks: [(&'static str, f64); 2],
}

fn series_table(n: &PhotonNumberSeries, window: f64) -> Table {
    let mut t = Table::new(&["t_ns", "n_mean"]);
    for (k, v) in n.values.iter().enumerate() {
        let x = n.time(k);
        if x.abs() <= window {
            t.push(vec![x, *v]);
        }
    }
    t
}

pub fn cmd_excitation(sc: &Scenario, w: &mut Writer) -> Result<()> {
    let rising_mode = if sc.source.cavity_sees_rising(Mode::Signal) {
        Mode::Signal
    } else {
        Mode::Idler
    };
    let eps = sc.config.coupling_efficiency;
    let run = &sc.config.run;
    let mut rows = Vec::new();
    for (orientation, mode) in [("rising", rising_mode), ("decaying", rising_mode.other())] {
        let input = mode_input(&sc.source, mode, &sc.grid)?;
        let sol = intracavity_solve(&input, &sc.cavity, sc.source.tau)?;
        let spectral = apply_cavity_filter(&input, &sc.cavity, sc.config.cavity.model)?;
        let peak = spectral.intensity().into_iter().fold(0.0, f64::max);
        let consistency = sol
            .output
            .intensity()
            .iter()
            .zip(spectral.intensity())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / peak;
        if consistency > CONSISTENCY_TOL {
            return Err(Error::Validation(format!(
                "{orientation}: forward model deviates from the filter by {consistency:.4} of peak"
            )));
        }
        if sol.energy_imbalance() > CONSISTENCY_TOL {
            return Err(Error::Validation(format!(
                "{orientation}: energy ledger open by {:.4}",
                sol.energy_imbalance()
            )));
        }
        let forward = sol.photon_number.scaled(eps);
        let pairs = (run.pair_rate_hz * run.duration_s).max(1.0);
        let hist = simulate_histogram_pair(
            &sc.source,
            &sc.cavity,
            mode,
            &sc.grid,
            sc.config.cavity.model,
            sc.far_detuning,
            eps,
            &sc.binning,
            pairs,
        )?;
        let estimate = estimate_mean_photon(&hist, sc.cavity.eta, sc.cavity.fsr)?;
        let (pf, pe) = (forward.peak(), estimate.peak());
        let gap = if pf > 0.0 && pe > 0.0 {
            (0..estimate.values.len())
                .map(|k| (estimate.values[k] / pe - forward.value_at(estimate.time(k)) / pf).abs())
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        w.table(
            &format!("excitation_{orientation}_forward"),
            &series_table(&forward, run.window_ns),
        )?;
        w.table(
            &format!("excitation_{orientation}_estimate"),
            &series_table(&estimate, run.window_ns),
        )?;
        rows.push(ExcitationRow {
            orientation,
            cavity_mode: mode_name(mode),
            peak_forward: pf,
            peak_time_ns: forward.peak_time(),
            peak_estimate: pe,
            max_normalized_gap: gap,
            energy_imbalance: sol.energy_imbalance(),
            filter_consistency: consistency,
        });
    }
    let ratio = rows[0].peak_forward / rows[1].peak_forward;
    w.json(
        "excitation_summary",
        &ExcitationSummary {
            far_detuning_mhz: rad_per_ns_to_mhz(sc.far_detuning),
            rows,
            peak_ratio_rising_over_decaying: ratio,
            experimental_peaks: [("rising", 0.76), ("decaying", 0.44)],
        },
    )?;
    Ok(())
}

/// Expected histogram per emitted pair, without accidentals, on `binning`.
fn model_shape(sc: &Scenario, delta: f64, binning: &Binning) -> Result<CoincidenceHistogram> {
    let pair = filtered(sc, sc.config.cavity.mode, delta)?;
    let profile = pair_profile(sc, &pair)?;
    expected_histogram(
        &profile,
        &sc.det_signal,
        &sc.det_idler,
        1.0,
        1.0,
        0.0,
        binning,
    )
}

#[derive(Debug, Serialize)]
struct FitReport {
    detuning_mhz: f64,
    weighting: Weighting,
    baseline_per_bin: f64,
    poisson_floor: f64,
    #[serde(flatten)]
    fit: FitResult,
}

pub fn cmd_fit(
    sc: &Scenario,
    histogram: &Path,
    detuning_mhz: Option<f64>,
    baseline: Option<f64>,
    weighting: Weighting,
    w: &mut Writer,
) -> Result<String> {
    let data = read_histogram(histogram)?;
    let delta = detuning_mhz
        .map(mhz_to_rad_per_ns)
        .unwrap_or(sc.detunings[0]);
    let binning = data.binning();
    let model = model_shape(sc, delta, &binning)?;
    let survival = pair_profile(sc, &filtered(sc, sc.config.cavity.mode, delta)?)?.total();
    let baseline = baseline
        .unwrap_or(accidental_rate(sc, survival, binning.bin_width) * sc.config.run.duration_s);
    let fit = fit_amplitude(&model, &data, baseline, weighting)?;
    let report = FitReport {
        detuning_mhz: rad_per_ns_to_mhz(delta),
        weighting,
        baseline_per_bin: baseline,
        poisson_floor: fit.poisson_floor(&data),
        fit,
    };
    w.json("fit", &report)?;
    Ok(serde_json::to_string_pretty(&report).expect("report is serialisable"))
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    symmetric_detuning_mhz: Option<f64>,
    symmetric_delta_tau: Option<f64>,
}

pub fn cmd_sweep(
    sc: &Scenario,
    from_mhz: f64,
    to_mhz: f64,
    steps: usize,
    w: &mut Writer,
) -> Result<()> {
    if steps < 2 || !(from_mhz.is_finite() && to_mhz.is_finite()) || from_mhz >= to_mhz {
        return Err(Error::invalid(
            "sweep",
            "need finite from < to and at least two steps",
        ));
    }
    let tau = sc.source.tau;
    let mode = sc.config.cavity.mode;
    let reference = model_shape(sc, 0.0, &sc.binning)?;
    let detunings: Vec<f64> = (0..steps)
        .map(|k| from_mhz + (to_mhz - from_mhz) * k as f64 / (steps - 1) as f64)
        .collect();
    let rows: Vec<Vec<f64>> = detunings
        .par_iter()
        .map(|&mhz| -> Result<Vec<f64>> {
            let delta = mhz_to_rad_per_ns(mhz);
            let pair = filtered(sc, mode, delta)?;
            let input = mode_input(&sc.source, mode, &sc.grid)?;
            let n = intracavity_solve(&input, &sc.cavity.with_detuning(delta), tau)?.photon_number;
            let shape = model_shape(sc, delta, &sc.binning)?;
            let fit = fit_amplitude(&reference, &shape, 0.0, Weighting::Unweighted)?;
            Ok(vec![
                mhz,
                delta * tau,
                side_weight_fraction(&pair.output),
                n.peak() * sc.config.coupling_efficiency,
                fit.residual_rms,
            ])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&[
        "detuning_mhz",
        "delta_tau",
        "side_weight",
        "peak_n",
        "fit_residual_rms",
    ]);
    for r in rows {
        t.push(r);
    }
    w.table("sweep", &t)?;
    let hi = mhz_to_rad_per_ns(to_mhz.abs().max(from_mhz.abs()));
    let sym = (hi > 0.0)
        .then(|| {
            symmetric_detuning(
                &sc.source,
                &sc.cavity,
                &sc.grid,
                sc.config.cavity.model,
                0.0,
                hi,
            )
            .ok()
        })
        .flatten();
    w.json(
        "sweep_summary",
        &SweepSummary {
            symmetric_detuning_mhz: sym.map(rad_per_ns_to_mhz),
            symmetric_delta_tau: sym.map(|d| d * tau),
        },
    )?;
    Ok(())
}
