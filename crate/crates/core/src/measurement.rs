//! Two-arm polarization analysis, HOM delay scans and counting statistics.

use std::fmt;

use nalgebra::{Matrix4, Vector2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::aperture::{channel_ensemble, ApertureCoefficients};
use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::mode::{make_basis_state, mix, two_qubit_weighted, BasisState};
use crate::optics::{chain_map, jones_to_helicity, AxisSpec, ElementSpec, NamedAxis};
use crate::source::{coherent_component, SourceModel};

/// Wave plates followed by a polarizer in one splitter arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmProjector {
    pub label: String,
    #[serde(default)]
    pub waveplates: Vec<ElementSpec>,
    pub axis: AxisSpec,
}

impl ArmProjector {
    /// Ideal projector onto a named polarization.
    pub fn named(axis: NamedAxis) -> Self {
        Self { label: axis.label().to_string(), waveplates: Vec::new(), axis: AxisSpec::Named(axis) }
    }

    /// Normalized helicity-basis vector `e` with detection amplitude ⟨e|ψ⟩.
    pub fn vector(&self) -> Result<Vector2<C64>> {
        for e in &self.waveplates {
            if !matches!(e, ElementSpec::Hwp { .. } | ElementSpec::Qwp { .. }) {
                return Err(Error::InvalidElement(format!(
                    "arm `{}` allows only wave plates before the polarizer",
                    self.label
                )));
            }
        }
        let w = chain_map(&self.waveplates)?.jones().expect("wave plates are polarization maps");
        let a = self.axis.jones();
        let n = a.norm();
        if !(n > 1e-15) || !n.is_finite() {
            return Err(Error::ZeroAxis);
        }
        Ok(jones_to_helicity(&(w.adjoint() * a.unscale(n))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub label: String,
    pub arm1: ArmProjector,
    pub arm2: ArmProjector,
}

impl MeasurementSetting {
    pub fn named(a: NamedAxis, b: NamedAxis) -> Self {
        Self {
            label: format!("{a}{b}"),
            arm1: ArmProjector::named(a),
            arm2: ArmProjector::named(b),
        }
    }

    /// Two-qubit vector e₁ ⊗ e₂ in the ++, +−, −+, −− basis.
    pub fn vector(&self) -> Result<[C64; 4]> {
        let a = self.arm1.vector()?;
        let b = self.arm2.vector()?;
        Ok([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
    }

    /// P₁ ⊗ P₂.
    pub fn projector(&self) -> Result<Matrix4<C64>> {
        let v = self.vector()?;
        Ok(Matrix4::from_fn(|i, j| v[i] * v[j].conj()))
    }
}

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// tr[(P₁ ⊗ P₂) ρ].
pub fn coincidence_probability(rho: &DensityMatrix, s: &MeasurementSetting) -> Result<f64> {
    let r = rho.to_matrix4()?;
    let v = s.vector()?;
    Ok(born(&r, &v))
}

pub(crate) fn born(r: &Matrix4<C64>, v: &[C64; 4]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += v[i].conj() * r[(i, j)] * v[j];
        }
    }
    acc.re.clamp(0.0, 1.0)
}

/// Λ=+1 in one arm and Λ=−1 in the other, both orderings.
pub fn cross_circular(rho: &DensityMatrix) -> Result<f64> {
    let r = rho.to_matrix4()?;
    Ok((r[(1, 1)] + r[(2, 2)]).re)
}

/// Everything needed to evaluate one HOM curve.
#[derive(Debug, Clone)]
pub struct HomSetup {
    pub label: String,
    pub source: SourceModel,
    pub hwp_angle: f64,
    pub aperture: Option<ApertureCoefficients>,
}

impl HomSetup {
    /// Probability of a cross-circular coincidence at delay `tau`, summed
    /// over temporal modes and including the aperture transmission.
    pub fn cross_probability(&self, tau: f64) -> Result<f64> {
        let source = self.source.with_delay(tau);
        let coherent = coherent_component(self.hwp_angle, &source)?;
        let lambda = source.noise_lambda;
        let mut parts = vec![(lambda, coherent)];
        if lambda < 1.0 {
            parts.push((1.0 - lambda, make_basis_state(BasisState::Psi0)));
        }
        parts.retain(|(w, _)| *w > 0.0);
        let input = mix(parts)?;
        let rho = match &self.aperture {
            None => two_qubit_weighted(&input)?.0,
            Some(c) => two_qubit_weighted(&channel_ensemble(&input, c)?)?.0,
        };
        // one photon per arm happens with probability ½ tr ρ
        Ok(0.5 * (rho[(1, 1)] + rho[(2, 2)]).re)
    }

    /// Large-delay asymptote used for normalization.
    pub fn baseline(&self) -> Result<f64> {
        let b = self.cross_probability(f64::INFINITY)?;
        if !(b > 1e-15) {
            return Err(Error::DegenerateScan(format!(
                "`{}` has no cross-circular coincidences at large delay",
                self.label
            )));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomPoint {
    /// Delay in seconds.
    pub tau: f64,
    pub rate: f64,
    pub rate_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomScan {
    pub state_label: String,
    pub points: Vec<HomPoint>,
}

/// Noiseless normalized scan.
pub fn hom_scan(setup: &HomSetup, delays: &[f64]) -> Result<HomScan> {
    let base = setup.baseline()?;
    let points = delays
        .iter()
        .map(|&tau| {
            Ok(HomPoint { tau, rate: setup.cross_probability(tau)? / base, rate_std: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HomScan { state_label: setup.label.clone(), points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    /// Mean pairs per delay point and repetition.
    pub pairs_per_point: f64,
    pub repeats: usize,
    /// Mean dark coincidences per point and repetition.
    pub dark_counts: f64,
    pub seed: u64,
    /// Stream offset so several curves can share one seed.
    pub stream: u64,
}

/// Poisson-sampled scan, normalized by the analytic asymptote. Each delay
/// point draws from its own child stream.
pub fn hom_scan_sampled(setup: &HomSetup, delays: &[f64], sampling: &Sampling) -> Result<HomScan> {
    if sampling.repeats == 0 {
        return Err(Error::DegenerateScan("repeats must be at least 1".into()));
    }
    if !(sampling.pairs_per_point > 0.0) || !(sampling.dark_counts >= 0.0) {
        return Err(Error::DegenerateScan("pair and dark-count means must be positive".into()));
    }
    let base = setup.baseline()?;
    let norm = sampling.pairs_per_point * base + sampling.dark_counts;
    let mut points = Vec::with_capacity(delays.len());
    for (i, &tau) in delays.iter().enumerate() {
        let p = setup.cross_probability(tau)?;
        let mut rng = child_rng(sampling.seed, sampling.stream + i as u64);
        let rates: Vec<f64> = (0..sampling.repeats)
            .map(|_| {
                let n = sample_counts(p, sampling.pairs_per_point, &mut rng)
                    + sample_counts(1.0, sampling.dark_counts, &mut rng);
                n as f64 / norm
            })
            .collect();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let std = (rates.len() > 1).then(|| sample_std(&rates, mean));
        points.push(HomPoint { tau, rate: mean, rate_std: std });
    }
    Ok(HomScan { state_label: setup.label.clone(), points })
}

pub(crate) fn sample_std(values: &[f64], mean: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    /// Clipped to [0, 1].
    pub value: f64,
    pub raw: f64,
}

/// V = 1 − R(0) for a normalized scan that also reaches large delay.
pub fn visibility(scan: &HomScan) -> Result<Visibility> {
    let zero = scan.points.iter().find(|p| p.tau == 0.0).ok_or(Error::MissingBaseline)?;
    if !scan.points.iter().any(|p| p.tau != 0.0) {
        return Err(Error::MissingBaseline);
    }
    let raw = 1.0 - zero.rate;
    Ok(Visibility { value: raw.clamp(0.0, 1.0), raw })
}

/// Seeded child stream `index` of `master`.
pub fn child_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Poisson draw with mean `prob · mean_total`.
pub fn sample_counts<R: rand::Rng + ?Sized>(prob: f64, mean_total: f64, rng: &mut R) -> u64 {
    let mean = prob.clamp(0.0, 1.0) * mean_total.max(0.0);
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting_label: String,
    pub arm1: String,
    pub arm2: String,
    pub counts: u64,
    pub duration_s: f64,
    #[serde(skip)]
    pub seed: Option<(u64, u64)>,
}
