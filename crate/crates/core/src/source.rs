//! SPDC pair source, state selection and calibrated noise.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::{make_basis_state, mix, BasisState, Helicity, Mode, StateMixture, TwoPhotonState};
use crate::optics::{hwp, jones_to_helicity, qplate, NamedAxis, QPlateDirection, QPlateSpec};

/// Shape of the delay dependence of the temporal overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralProfile {
    /// γ₀·exp(−τ²/(4σ²)).
    #[default]
    Gaussian,
    /// γ₀·exp(−|τ|/(2σ)).
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    /// HOM visibility ceiling V = γ(0)².
    pub visibility: f64,
    /// Temporal width σ_τ in seconds.
    pub sigma_tau: f64,
    /// Relative delay τ in seconds; infinite values mean fully distinguishable.
    pub delay: f64,
    /// Weight of the intended state; the rest is incoherent Ψ₀.
    pub noise_lambda: f64,
    /// Detected pairs per second.
    pub pair_flux: f64,
    pub profile: SpectralProfile,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            visibility: 1.0,
            sigma_tau: 100e-15,
            delay: 0.0,
            noise_lambda: 1.0,
            pair_flux: 1.0e4,
            profile: SpectralProfile::Gaussian,
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidSource(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        unit_interval("visibility", self.visibility)?;
        unit_interval("noise_lambda", self.noise_lambda)?;
        if !(self.sigma_tau > 0.0) || !self.sigma_tau.is_finite() {
            return Err(Error::InvalidSource(format!(
                "sigma_tau = {} must be positive",
                self.sigma_tau
            )));
        }
        if !(self.pair_flux >= 0.0) || !self.pair_flux.is_finite() {
            return Err(Error::InvalidSource(format!(
                "pair_flux = {} must be non-negative",
                self.pair_flux
            )));
        }
        if self.delay.is_nan() {
            return Err(Error::InvalidSource("delay is NaN".into()));
        }
        Ok(())
    }

    pub fn with_delay(&self, delay: f64) -> Self {
        Self { delay, ..self.clone() }
    }

    /// γ(τ) for this source.
    pub fn overlap(&self, tau: f64) -> Result<f64> {
        if !(self.sigma_tau > 0.0) {
            return Err(Error::InvalidSource(format!(
                "sigma_tau = {} must be positive",
                self.sigma_tau
            )));
        }
        unit_interval("visibility", self.visibility)?;
        let g0 = self.visibility.sqrt();
        let shape = match self.profile {
            SpectralProfile::Gaussian => (-tau * tau / (4.0 * self.sigma_tau * self.sigma_tau)).exp(),
            SpectralProfile::Exponential => (-tau.abs() / (2.0 * self.sigma_tau)).exp(),
        };
        Ok(if shape.is_nan() { 0.0 } else { g0 * shape })
    }
}

fn paraxial(axis: NamedAxis, temporal: u32) -> Vec<(Mode, C64)> {
    let v = jones_to_helicity(&axis.jones());
    [Helicity::Plus, Helicity::Minus]
        .into_iter()
        .map(|h| (Mode::new(h.value(), h, temporal), v[h.index()]))
        .filter(|(_, a)| a.norm() > 0.0)
        .collect()
}

/// H photon in temporal mode 0, V photon in γ·t₀ + √(1−γ²)·t₁.
/// Photons are paraxial (ℓ = 0, so m = Λ).
pub fn spdc_pair(source: &SourceModel) -> Result<TwoPhotonState> {
    source.validate()?;
    let gamma = source.overlap(source.delay)?;
    let perp = (1.0 - gamma * gamma).max(0.0).sqrt();
    let first = paraxial(NamedAxis::H, 0);
    let mut second: Vec<(Mode, C64)> =
        paraxial(NamedAxis::V, 0).into_iter().map(|(m, a)| (m, a * gamma)).collect();
    if perp > 0.0 {
        second.extend(paraxial(NamedAxis::V, 1).into_iter().map(|(m, a)| (m, a * perp)));
    }
    second.retain(|(_, a)| a.norm() > 0.0);
    TwoPhotonState::from_creation_product(&first, &second).normalize()
}

/// SPDC pair after hwp(`hwp_angle`) and a forward q = 1/2 plate.
pub fn coherent_component(hwp_angle: f64, source: &SourceModel) -> Result<TwoPhotonState> {
    let pair = spdc_pair(source)?;
    let chain = hwp(hwp_angle).then(qplate(QPlateSpec::new(0.5, QPlateDirection::Forward)?));
    crate::mode::apply_single_photon_map(&pair, &chain)?.normalize()
}

/// Coherent component mixed with incoherent Ψ₀ at weight 1 − λ.
pub fn prepare_state(hwp_angle: f64, source: &SourceModel) -> Result<StateMixture> {
    let coherent = coherent_component(hwp_angle, source)?;
    let lambda = source.noise_lambda;
    let mut parts = vec![(lambda, coherent)];
    if lambda < 1.0 {
        parts.push((1.0 - lambda, make_basis_state(BasisState::Psi0)));
    }
    parts.retain(|(w, _)| *w > 0.0);
    mix(parts)
}
