//! The nanoaperture as a channel on m = 0 two-photon states.
//!
//! Each photon transforms as `â†_{0,Λ} → α b̂†_{0,Λ} + β b̂†_{0,−Λ}`. Partial
//! coherence between the flip and no-flip pathways is modelled by tagging
//! the flip amplitude with an environment marker of overlap η.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::mode::{
    apply_single_photon_map, apply_split_map, to_two_qubit, BranchEnsemble, Ensemble, Helicity,
    TwoPhotonState,
};
use crate::optics::{MapKind, SinglePhotonMap};

const UNITARITY_SLACK: f64 = 1e-12;

/// How the flip markers of the two photons are correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dephasing {
    /// One marker shared by both photons: the sign of β fluctuates from shot
    /// to shot with coherence η. Sector Gram matrix
    /// `[[1, η, 1], [η, 1, η], [1, η, 1]]` over (no flip, one flip, two flips).
    #[default]
    Shared,
    /// An independent marker per photon. Sector Gram matrix
    /// `[[1, η, η²], [η, (1+η²)/2, η], [η², η, 1]]`.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApertureCoefficients {
    pub alpha: C64,
    pub beta: C64,
    pub eta: f64,
    pub dephasing: Dephasing,
    /// Optional per-(m, Λ) coefficients for m ≠ 0 modes.
    pub table: Option<BTreeMap<(i32, Helicity), (C64, C64)>>,
}

impl ApertureCoefficients {
    pub fn new(alpha: C64, beta: C64, eta: f64) -> Result<Self> {
        let c = Self { alpha, beta, eta, dephasing: Dephasing::Shared, table: None };
        c.validate()?;
        Ok(c)
    }

    pub fn identity() -> Self {
        Self {
            alpha: C64::new(1.0, 0.0),
            beta: C64::new(0.0, 0.0),
            eta: 1.0,
            dephasing: Dephasing::Shared,
            table: None,
        }
    }

    pub fn with_dephasing(mut self, dephasing: Dephasing) -> Self {
        self.dephasing = dephasing;
        self
    }

    pub fn with_table(mut self, table: BTreeMap<(i32, Helicity), (C64, C64)>) -> Result<Self> {
        self.table = Some(table);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_pair(self.alpha, self.beta, "alpha/beta")?;
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidCoefficients(format!("eta = {} is outside [0, 1]", self.eta)));
        }
        if let Some(table) = &self.table {
            for ((m, h), (a, b)) in table {
                check_pair(*a, *b, &format!("table entry (m={m}, {})", h.symbol()))?;
            }
            if !check_mirror_symmetry(self) {
                return Err(Error::InvalidCoefficients(
                    "table violates mirror symmetry α_{m,Λ} = α_{−m,−Λ}, β_{m,Λ} = β_{−m,−Λ}".into(),
                ));
            }
        }
        Ok(())
    }

    /// True when the single-photon helicity map `[[α, β], [β, α]]` is a
    /// contraction, i.e. no input can gain probability.
    pub fn is_passive(&self) -> bool {
        let gain = (self.alpha + self.beta).norm().max((self.alpha - self.beta).norm());
        gain <= 1.0 + UNITARITY_SLACK
    }

    /// The coherent single-photon map.
    pub fn map(&self) -> SinglePhotonMap {
        self.split_map(true, true, "aperture")
    }

    /// Map restricted to the no-flip and/or flip pathway.
    fn split_map(&self, keep: bool, flip: bool, label: &str) -> SinglePhotonMap {
        let zero = C64::new(0.0, 0.0);
        let pick = |a: C64, b: C64| (if keep { a } else { zero }, if flip { b } else { zero });
        let (k, f) = pick(self.alpha, self.beta);
        match &self.table {
            None => SinglePhotonMap::new(label, MapKind::HelicityMixing { keep: k, flip: f }),
            Some(table) => {
                let mut t: BTreeMap<(i32, Helicity), (C64, C64)> =
                    table.iter().map(|(key, (a, b))| (*key, pick(*a, *b))).collect();
                for h in [Helicity::Plus, Helicity::Minus] {
                    t.insert((0, h), (k, f));
                }
                SinglePhotonMap::new(label, MapKind::HelicityTable(t))
            }
        }
    }

    /// Relative Gaussian jitter on α, β and η. The result is rescaled to a
    /// passive map when the perturbation makes it gain probability.
    pub fn jitter<R: Rng + ?Sized>(&self, relative: f64, rng: &mut R) -> Self {
        let mut draw = || -> f64 { StandardNormal.sample(rng) };
        let mut alpha = self.alpha * (1.0 + relative * draw());
        let mut beta = self.beta * (1.0 + relative * draw());
        let eta = (self.eta * (1.0 + relative * draw())).clamp(0.0, 1.0);
        let gain = (alpha + beta).norm().max((alpha - beta).norm());
        if gain > 1.0 {
            alpha /= gain;
            beta /= gain;
        }
        Self { alpha, beta, eta, dephasing: self.dephasing, table: self.table.clone() }
    }
}

fn check_pair(a: C64, b: C64, what: &str) -> Result<()> {
    if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
        return Err(Error::InvalidCoefficients(format!("{what} not finite")));
    }
    let total = a.norm_sqr() + b.norm_sqr();
    if total > 1.0 + UNITARITY_SLACK {
        return Err(Error::InvalidCoefficients(format!(
            "{what}: |α|² + |β|² = {total} exceeds 1"
        )));
    }
    Ok(())
}

/// True iff every table entry equals its mirror image exactly.
pub fn check_mirror_symmetry(c: &ApertureCoefficients) -> bool {
    match &c.table {
        None => true,
        Some(table) => table
            .iter()
            .all(|((m, h), v)| table.get(&(-m, h.flipped())) == Some(v)),
    }
}

/// Coherent action on both photons; the squared norm of the result is the
/// conditional two-photon transmission.
pub fn aperture_pure(state: &TwoPhotonState, c: &ApertureCoefficients) -> Result<TwoPhotonState> {
    apply_single_photon_map(state, &c.map())
}

pub fn transmission_probability(state: &TwoPhotonState, c: &ApertureCoefficients) -> Result<f64> {
    Ok(aperture_pure(state, c)?.norm_sqr())
}

/// Flip-count sectors (no flip, one flip, two flips) of the coherent output.
/// They sum to [`aperture_pure`].
pub fn flip_sectors(state: &TwoPhotonState, c: &ApertureCoefficients) -> Result<[TwoPhotonState; 3]> {
    let keep = c.split_map(true, false, "aperture:keep");
    let flip = c.split_map(false, true, "aperture:flip");
    let none = apply_split_map(state, &keep, &keep)?;
    let one = apply_split_map(state, &keep, &flip)?.scaled(C64::new(2.0, 0.0));
    let two = apply_split_map(state, &flip, &flip)?;
    Ok([none, one, two])
}

/// Kraus branches of the dephased channel for one pure input.
pub fn aperture_branches(state: &TwoPhotonState, c: &ApertureCoefficients) -> Result<Vec<TwoPhotonState>> {
    let [s0, s1, s2] = flip_sectors(state, c)?;
    let one = C64::new(1.0, 0.0);
    let eta = C64::new(c.eta, 0.0);
    let perp = C64::new((1.0 - c.eta * c.eta).max(0.0).sqrt(), 0.0);
    let branches = match c.dephasing {
        Dephasing::Shared => {
            let coherent = s0.superpose(one, &s2, one).superpose(one, &s1, eta);
            vec![coherent, s1.scaled(perp)]
        }
        Dephasing::Independent => {
            // markers e₀ = (1, 0), e₁ = (η, √(1−η²)) per photon; the two
            // one-flip branches are equal halves of the one-flip sector
            let half = s1.scaled(C64::new(0.5, 0.0));
            let e = [[one, C64::new(0.0, 0.0)], [eta, perp]];
            let sector = |f1: usize, f2: usize| match (f1, f2) {
                (0, 0) => &s0,
                (1, 1) => &s2,
                _ => &half,
            };
            let mut out = Vec::with_capacity(4);
            for x in 0..2 {
                for y in 0..2 {
                    let mut k = TwoPhotonState::zero();
                    for f1 in 0..2 {
                        for f2 in 0..2 {
                            k = k.superpose(one, sector(f1, f2), e[f1][x] * e[f2][y]);
                        }
                    }
                    out.push(k);
                }
            }
            out
        }
    };
    Ok(branches.into_iter().filter(|b| !b.is_empty()).collect())
}

/// Weighted Kraus branches for every component of an ensemble.
pub fn channel_ensemble(input: &impl Ensemble, c: &ApertureCoefficients) -> Result<BranchEnsemble> {
    c.validate()?;
    let mut out = BranchEnsemble::new();
    for (w, s) in input.weighted() {
        for b in aperture_branches(s, c)? {
            out.push(w, b);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ChannelOutput {
    /// Conditional two-qubit state, basis ++, +−, −+, −−.
    pub rho: DensityMatrix,
    /// Two-photon transmission (post-selection weight).
    pub transmission: f64,
    pub passive: bool,
    pub branches: BranchEnsemble,
}

pub fn aperture_channel(input: &impl Ensemble, c: &ApertureCoefficients) -> Result<ChannelOutput> {
    let branches = channel_ensemble(input, c)?;
    let transmission = branches.weight();
    if !(transmission > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let (rho, _) = to_two_qubit(&branches)?;
    Ok(ChannelOutput { rho, transmission, passive: c.is_passive(), branches })
}
