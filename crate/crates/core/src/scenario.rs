//! Scenario files: JSON description of one pipeline run.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::aperture::{ApertureCoefficients, Dephasing};
use crate::error::{Error, Result};
use crate::mode::Helicity;
use crate::source::{SourceModel, SpectralProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Prepare,
    HomScan,
    Tomography,
    ApertureSweep,
    Metrics,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Prepare => "prepare",
            Task::HomScan => "hom-scan",
            Task::Tomography => "tomography",
            Task::ApertureSweep => "aperture-sweep",
            Task::Metrics => "metrics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayScan {
    pub start_fs: f64,
    pub stop_fs: f64,
    pub points: usize,
}

impl DelayScan {
    /// Evenly spaced delays in femtoseconds.
    pub fn delays_fs(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|k| {
                if n == 1 {
                    self.start_fs
                } else {
                    self.start_fs + (self.stop_fs - self.start_fs) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    /// Same grid in seconds.
    pub fn delays(&self) -> Vec<f64> {
        self.delays_fs().into_iter().map(|fs| fs * 1e-15).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    pub visibility: f64,
    pub sigma_tau_fs: f64,
    #[serde(default)]
    pub delay_fs: f64,
    #[serde(default)]
    pub delay_scan: Option<DelayScan>,
    #[serde(default = "one")]
    pub noise_lambda: f64,
    #[serde(default = "default_flux")]
    pub pair_flux: f64,
    #[serde(default)]
    pub profile: SpectralProfile,
}

fn one() -> f64 {
    1.0
}

fn default_flux() -> f64 {
    1.0e4
}

impl SourceBlock {
    pub fn model(&self) -> SourceModel {
        SourceModel {
            visibility: self.visibility,
            sigma_tau: self.sigma_tau_fs * 1e-15,
            delay: self.delay_fs * 1e-15,
            noise_lambda: self.noise_lambda,
            pair_flux: self.pair_flux,
            profile: self.profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepBlock {
    /// Half-wave plate angle(s) in degrees; each angle is one prepared state.
    pub hwp_deg: OneOrMany,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub m: i32,
    pub helicity: i32,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureBlock {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub dephasing: Dephasing,
    /// Relative standard deviation for sweeps.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "one_count")]
    pub count: usize,
    #[serde(default)]
    pub table: Vec<TableEntry>,
}

fn one_count() -> usize {
    1
}

impl ApertureBlock {
    pub fn coefficients(&self) -> Result<ApertureCoefficients> {
        let c = |v: [f64; 2]| C64::new(v[0], v[1]);
        let mut coef = ApertureCoefficients {
            alpha: c(self.alpha),
            beta: c(self.beta),
            eta: self.eta,
            dephasing: self.dephasing,
            table: None,
        };
        if !self.table.is_empty() {
            let mut t = BTreeMap::new();
            for (i, e) in self.table.iter().enumerate() {
                let h = Helicity::from_value(e.helicity).map_err(|_| Error::Validation {
                    field: format!("aperture.table[{i}].helicity"),
                    message: format!("must be +1 or -1, got {}", e.helicity),
                })?;
                t.insert((e.m, h), (c(e.alpha), c(e.beta)));
            }
            coef.table = Some(t);
        }
        coef.validate().map_err(|e| Error::Validation { field: "aperture".into(), message: e.to_string() })?;
        Ok(coef)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingBlock {
    pub seed: Option<u64>,
    /// Pairs per HOM point, or mean counts per tomography setting.
    pub scale: Option<f64>,
    pub repeats: Option<usize>,
    pub bootstrap: Option<usize>,
    #[serde(default)]
    pub dark_counts: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<String>,
    #[serde(default)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: Option<Task>,
    pub source: SourceBlock,
    pub prep: PrepBlock,
    #[serde(default)]
    pub aperture: Option<ApertureBlock>,
    #[serde(default)]
    pub sampling: Option<SamplingBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

pub const MAX_SCAN_POINTS: usize = 10_000;
pub const MAX_REPLICAS: usize = 100_000;

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation { field: field.to_string(), message: message.into() }
}

fn in_unit(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is outside [0, 1]")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn sampling(&self) -> SamplingBlock {
        self.sampling.clone().unwrap_or_default()
    }

    /// Checks every block needed by `task`.
    pub fn validate(&self, task: Task) -> Result<()> {
        if let Some(t) = self.task {
            if t != task {
                return Err(invalid("task", format!("scenario declares `{}` but `{}` was requested", t.name(), task.name())));
            }
        }
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let s = &self.source;
        in_unit("source.visibility", s.visibility)?;
        in_unit("source.noise_lambda", s.noise_lambda)?;
        if !(s.sigma_tau_fs > 0.0) || !s.sigma_tau_fs.is_finite() {
            return Err(invalid("source.sigma_tau_fs", format!("{} must be positive", s.sigma_tau_fs)));
        }
        finite("source.delay_fs", s.delay_fs)?;
        if !(s.pair_flux >= 0.0) || !s.pair_flux.is_finite() {
            return Err(invalid("source.pair_flux", "must be non-negative"));
        }
        if let Some(scan) = &s.delay_scan {
            finite("source.delay_scan.start_fs", scan.start_fs)?;
            finite("source.delay_scan.stop_fs", scan.stop_fs)?;
            if scan.points < 2 || scan.points > MAX_SCAN_POINTS {
                return Err(invalid("source.delay_scan.points", format!("must be in 2..={MAX_SCAN_POINTS}")));
            }
        }
        let angles = self.prep.hwp_deg.values();
        if angles.is_empty() {
            return Err(invalid("prep.hwp_deg", "needs at least one angle"));
        }
        for (i, a) in angles.iter().enumerate() {
            finite(&format!("prep.hwp_deg[{i}]"), *a)?;
        }
        if let Some(ap) = &self.aperture {
            for (field, v) in [("aperture.alpha", ap.alpha), ("aperture.beta", ap.beta)] {
                finite(field, v[0])?;
                finite(field, v[1])?;
            }
            in_unit("aperture.eta", ap.eta)?;
            if !(ap.jitter >= 0.0) || !ap.jitter.is_finite() {
                return Err(invalid("aperture.jitter", "must be non-negative"));
            }
            if ap.count == 0 {
                return Err(invalid("aperture.count", "must be at least 1"));
            }
            ap.coefficients()?;
        }
        let sampling = self.sampling();
        if let Some(scale) = sampling.scale {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(invalid("sampling.scale", "must be positive"));
            }
        }
        if let Some(r) = sampling.repeats {
            if r == 0 || r > MAX_REPLICAS {
                return Err(invalid("sampling.repeats", format!("must be in 1..={MAX_REPLICAS}")));
            }
        }
        if let Some(b) = sampling.bootstrap {
            if b == 1 || b > MAX_REPLICAS {
                return Err(invalid("sampling.bootstrap", format!("must be 0 or in 2..={MAX_REPLICAS}")));
            }
        }
        if !(sampling.dark_counts >= 0.0) || !sampling.dark_counts.is_finite() {
            return Err(invalid("sampling.dark_counts", "must be non-negative"));
        }
        let random = sampling.scale.is_some()
            || (task == Task::ApertureSweep && self.aperture.as_ref().is_some_and(|a| a.jitter > 0.0));
        if random && sampling.seed.is_none() {
            return Err(invalid("sampling.seed", "a seed is required whenever sampling occurs"));
        }
        match task {
            Task::HomScan => {
                if s.delay_scan.is_none() {
                    return Err(invalid("source.delay_scan", "required for hom-scan"));
                }
            }
            Task::Tomography => {
                if sampling.scale.is_none() {
                    return Err(invalid("sampling.scale", "required for tomography"));
                }
            }
            Task::ApertureSweep => {
                if self.aperture.is_none() {
                    return Err(invalid("aperture", "required for aperture-sweep"));
                }
            }
            Task::Prepare | Task::Metrics => {}
        }
        Ok(())
    }
}

/// Label for a preparation angle: `minus` at 0° and `plus` at 22.5°
/// (mod 45°), otherwise the angle itself.
pub fn state_label(hwp_deg: f64) -> String {
    let r = hwp_deg.rem_euclid(45.0);
    if r.abs() < 1e-9 || (45.0 - r).abs() < 1e-9 {
        "minus".into()
    } else if (r - 22.5).abs() < 1e-9 {
        "plus".into()
    } else {
        format!("hwp{hwp_deg}")
    }
}
