//! Scenario configuration: a TOML file with `[source]`, `[cavity]`,
//! `[detectors.signal]`, `[detectors.idler]` and `[run]` tables. Every key is
//! optional and defaults to the measured setup; frequencies are ordinary
//! (MHz, GHz) and converted to angular units internally.
//!
//! Pair rate (1e4 /s) and integration time (300 s) have no measured values
//! and are placeholders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::biphoton::{BiphotonParams, Mode, Ordering, WeightConvention};
use crate::detection::{Binning, DetectorModel};
use crate::error::{Error, Result};
use crate::spectral::{CavityParams, ResponseModel, TimeGrid, MAX_STEP_TAU};
use crate::units::mhz_to_rad_per_ns;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source: SourceConfig,
    pub cavity: CavityConfig,
    pub detectors: DetectorsConfig,
    pub run: RunConfig,
    /// Fraction of the light mode matched to the cavity.
    pub coupling_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub amplitude: f64,
    pub tau_ns: f64,
    pub ordering: Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityConfig {
    pub r1: f64,
    pub r2: f64,
    pub fsr_ghz: f64,
    pub detunings_mhz: Vec<f64>,
    pub eta: f64,
    /// Photon that meets the cavity.
    pub mode: Mode,
    pub model: ResponseModel,
    pub far_detuning_mhz: f64,
    pub convention: WeightConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub jitter_ns: f64,
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub dead_time_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorsConfig {
    pub signal: DetectorConfig,
    pub idler: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pair_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub bin_width_ns: f64,
    /// Histograms cover `[-window, window)`.
    pub window_ns: f64,
    pub grid_size: usize,
    pub grid_span_tau: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            source: SourceConfig::default(),
            cavity: CavityConfig::default(),
            detectors: DetectorsConfig::default(),
            run: RunConfig::default(),
            coupling_efficiency: 1.0,
        }
    }
}

impl Default for SourceConfig {
    fn default() -> Self {
        let p = BiphotonParams::measured();
        Self {
            amplitude: p.amplitude,
            tau_ns: p.tau,
            ordering: p.ordering,
        }
    }
}

impl Default for CavityConfig {
    fn default() -> Self {
        let c = CavityParams::measured();
        Self {
            r1: c.r1,
            r2: c.r2,
            fsr_ghz: c.fsr,
            detunings_mhz: vec![0.0, 27.0, 120.0, 200.0],
            eta: c.eta,
            mode: Mode::Signal,
            model: ResponseModel::SingleMode,
            far_detuning_mhz: crate::dynamics::FAR_DETUNING_MHZ,
            convention: WeightConvention::default(),
        }
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let d = DetectorModel::default();
        Self {
            jitter_ns: d.jitter_sigma,
            efficiency: d.efficiency,
            dark_rate_hz: d.dark_rate,
            dead_time_ns: d.dead_time,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pair_rate_hz: 1e4,
            duration_s: 300.0,
            seed: 1,
            bin_width_ns: 1.0,
            window_ns: 60.0,
            grid_size: 1 << 16,
            grid_span_tau: 160.0,
        }
    }
}

impl DetectorConfig {
    fn model(&self) -> DetectorModel {
        DetectorModel {
            jitter_sigma: self.jitter_ns,
            efficiency: self.efficiency,
            dark_rate: self.dark_rate_hz,
            dead_time: self.dead_time_ns,
        }
    }
}

/// Validated, unit-converted parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub source: BiphotonParams,
    /// Cavity on resonance; detunings are applied per run.
    pub cavity: CavityParams,
    pub detunings: Vec<f64>,
    pub far_detuning: f64,
    pub det_signal: DetectorModel,
    pub det_idler: DetectorModel,
    pub binning: Binning,
    pub grid: TimeGrid,
    pub warnings: Vec<String>,
}

fn check(ok: bool, name: &'static str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(name, reason))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (or the defaults when `None`) and applies `key=value`
    /// overrides with dotted keys, such as `cavity.r1=0.95`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        // parse once on its own so file errors carry line numbers
        let base = Self::from_toml_str(&text).map_err(|e| match path {
            Some(p) => Error::Config(format!("{}: {e}", p.display())),
            None => e,
        })?;
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    pub fn resolve(&self) -> Result<Scenario> {
        let source = BiphotonParams::new(
            self.source.amplitude,
            self.source.tau_ns,
            self.source.ordering,
        )?;
        let tau = source.tau;
        let cav = &self.cavity;
        check(
            !cav.detunings_mhz.is_empty(),
            "cavity.detunings_mhz",
            "must not be empty",
        )?;
        check(
            cav.detunings_mhz.iter().all(|d| d.is_finite()),
            "cavity.detunings_mhz",
            "must be finite",
        )?;
        check(
            cav.far_detuning_mhz.is_finite(),
            "cavity.far_detuning_mhz",
            "must be finite",
        )?;
        let cavity = CavityParams::new(cav.r1, cav.r2, cav.fsr_ghz, 0.0, cav.eta)?;
        let mut warnings = Vec::new();
        if let Some(w) = cavity.loss_consistency_warning(0.002) {
            warnings.push(w);
        }

        let det_signal = self.detectors.signal.model();
        let det_idler = self.detectors.idler.model();
        det_signal.validate()?;
        det_idler.validate()?;
        check(
            (0.0..=1.0).contains(&self.coupling_efficiency),
            "coupling_efficiency",
            "must lie in [0, 1]",
        )?;

        let run = &self.run;
        check(
            run.pair_rate_hz.is_finite() && run.pair_rate_hz >= 0.0,
            "run.pair_rate_hz",
            "must be >= 0",
        )?;
        check(
            run.duration_s.is_finite() && run.duration_s >= 0.0,
            "run.duration_s",
            "must be >= 0",
        )?;
        check(
            run.bin_width_ns > 0.0 && run.bin_width_ns <= tau / 4.0,
            "run.bin_width_ns",
            format!("must lie in (0, tau/4 = {}]", tau / 4.0),
        )?;
        check(
            (run.bin_width_ns * 1e3 - (run.bin_width_ns * 1e3).round()).abs() < 1e-6,
            "run.bin_width_ns",
            "must be a whole number of picoseconds",
        )?;
        check(run.window_ns > 0.0, "run.window_ns", "must be > 0")?;
        check(
            run.grid_size >= 2 && run.grid_size.is_power_of_two(),
            "run.grid_size",
            "must be a power of two",
        )?;
        let grid = TimeGrid::new(run.grid_size, run.grid_span_tau, tau)?;
        check(
            grid.dt_step() <= tau * MAX_STEP_TAU,
            "run.grid_size",
            format!(
                "grid step {} ns exceeds tau/20; raise grid_size or lower grid_span_tau",
                grid.dt_step()
            ),
        )?;
        let binning = Binning::symmetric(run.window_ns, run.bin_width_ns)?;
        check(
            (binning.t_min * 1e3 - (binning.t_min * 1e3).round()).abs() < 1e-6,
            "run.window_ns",
            "histogram edges must fall on whole picoseconds",
        )?;
        check(
            binning.t_max() <= 0.5 * grid.span_tau * tau,
            "run.window_ns",
            "histogram window exceeds the time grid",
        )?;

        Ok(Scenario {
            config: self.clone(),
            source,
            cavity,
            detunings: cav
                .detunings_mhz
                .iter()
                .map(|&d| mhz_to_rad_per_ns(d))
                .collect(),
            far_detuning: mhz_to_rad_per_ns(cav.far_detuning_mhz),
            det_signal,
            det_idler,
            binning,
            grid,
            warnings,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("override `{item}` has an empty key")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{item}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_measured_setup() {
        let c = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        let s = c.resolve().unwrap();
        assert_eq!(s.cavity, CavityParams::measured());
        assert_eq!(s.detunings.len(), 4);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::default();
        assert_eq!(
            ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap(),
            c
        );
    }

    #[test]
    fn unknown_field_is_reported_with_location() {
        let err = ScenarioConfig::from_toml_str("[cavity]\nr1 = 0.9\nr3 = 1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r3"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overrides_apply_dotted_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[run]\nseed = 5\n").unwrap();
        let c = ScenarioConfig::load(
            Some(&path),
            &[
                "cavity.r1=0.95".into(),
                "detectors.idler.jitter_ns = 0.1".into(),
                "cavity.detunings_mhz=[0, 10]".into(),
                "source.ordering=idler_first".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.run.seed, 5);
        assert_eq!(c.cavity.r1, 0.95);
        assert_eq!(c.detectors.idler.jitter_ns, 0.1);
        assert_eq!(c.cavity.detunings_mhz, vec![0.0, 10.0]);
        assert_eq!(c.source.ordering, Ordering::IdlerFirst);
        assert!(ScenarioConfig::load(None, &["nokey".into()]).is_err());
        assert!(ScenarioConfig::load(None, &["cavity.bogus=1".into()]).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let bad = [
            "cavity.detunings_mhz=[]",
            "cavity.r1=1.5",
            "run.bin_width_ns=2.0",
            "run.grid_size=1000",
            "run.grid_size=1024",
            "coupling_efficiency=1.2",
            "detectors.signal.efficiency=-0.1",
            "run.window_ns=1000.0",
        ];
        for b in bad {
            let c = ScenarioConfig::load(None, &[b.to_string()]).unwrap();
            let e = c.resolve().unwrap_err();
            assert_eq!(e.exit_code(), 2, "{b}: {e}");
        }
    }

    #[test]
    fn inconsistent_loss_is_a_warning() {
        let c = ScenarioConfig::load(None, &["cavity.eta=0.02".into()]).unwrap();
        assert_eq!(c.resolve().unwrap().warnings.len(), 1);
    }
}
