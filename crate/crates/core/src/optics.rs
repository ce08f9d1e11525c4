//! Single-photon linear optics: wave plates, polarizers, q-plates and the
//! temporal overlap of the birefringent delay.
//!
//! Jones matrices are built in the linear H/V basis and converted to the
//! helicity basis with |R⟩ = (|H⟩ − i|V⟩)/√2 as Λ = +1.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::{Helicity, Mode};
use crate::source::SourceModel;

/// Largest |ℓ| a q-plate may produce.
pub const MAX_TRACKED_ORBITAL: i32 = 8;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Columns are |R⟩ and |L⟩ in H/V coordinates.
fn circular_columns() -> Matrix2<C64> {
    Matrix2::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, -1.0), c(0.0, 1.0)) * c(FRAC_1_SQRT_2, 0.0)
}

/// H/V Jones matrix to helicity basis.
pub fn hv_to_helicity(u: &Matrix2<C64>) -> Matrix2<C64> {
    let cm = circular_columns();
    cm.adjoint() * u * cm
}

/// Helicity-basis matrix to H/V Jones matrix.
pub fn helicity_to_hv(u: &Matrix2<C64>) -> Matrix2<C64> {
    let cm = circular_columns();
    cm * u * cm.adjoint()
}

/// H/V Jones vector to helicity amplitudes (Λ=+1 first).
pub fn jones_to_helicity(v: &Vector2<C64>) -> Vector2<C64> {
    circular_columns().adjoint() * v
}

fn rotation(theta: f64) -> Matrix2<C64> {
    let (s, co) = theta.sin_cos();
    Matrix2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

fn retarder(theta: f64, slow: C64) -> Matrix2<C64> {
    rotation(theta) * Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), slow) * rotation(-theta)
}

/// Half-wave plate with fast axis at `theta` from H, in H/V coordinates.
pub fn hwp_jones(theta: f64) -> Matrix2<C64> {
    retarder(theta, c(-1.0, 0.0))
}

/// Quarter-wave plate with fast axis at `theta` from H, in H/V coordinates.
pub fn qwp_jones(theta: f64) -> Matrix2<C64> {
    retarder(theta, c(0.0, -1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedAxis {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl NamedAxis {
    pub const ALL: [NamedAxis; 6] =
        [NamedAxis::H, NamedAxis::V, NamedAxis::D, NamedAxis::A, NamedAxis::R, NamedAxis::L];

    /// Normalized H/V Jones vector.
    pub fn jones(self) -> Vector2<C64> {
        let h = FRAC_1_SQRT_2;
        match self {
            NamedAxis::H => Vector2::new(c(1.0, 0.0), c(0.0, 0.0)),
            NamedAxis::V => Vector2::new(c(0.0, 0.0), c(1.0, 0.0)),
            NamedAxis::D => Vector2::new(c(h, 0.0), c(h, 0.0)),
            NamedAxis::A => Vector2::new(c(h, 0.0), c(-h, 0.0)),
            NamedAxis::R => Vector2::new(c(h, 0.0), c(0.0, -h)),
            NamedAxis::L => Vector2::new(c(h, 0.0), c(0.0, h)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NamedAxis::H => "H",
            NamedAxis::V => "V",
            NamedAxis::D => "D",
            NamedAxis::A => "A",
            NamedAxis::R => "R",
            NamedAxis::L => "L",
        }
    }
}

impl fmt::Display for NamedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NamedAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" => Ok(NamedAxis::H),
            "V" => Ok(NamedAxis::V),
            "D" => Ok(NamedAxis::D),
            "A" => Ok(NamedAxis::A),
            "R" => Ok(NamedAxis::R),
            "L" => Ok(NamedAxis::L),
            other => Err(Error::UnknownProjector(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QPlateDirection {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QPlateSpec {
    pub q: f64,
    pub direction: QPlateDirection,
}

impl QPlateSpec {
    pub fn new(q: f64, direction: QPlateDirection) -> Result<Self> {
        let two_q = 2.0 * q;
        if !two_q.is_finite() || (two_q - two_q.round()).abs() > 1e-12 {
            return Err(Error::InvalidElement(format!("q-plate charge {q} is not a half-integer")));
        }
        Ok(Self { q, direction })
    }

    pub fn two_q(&self) -> i32 {
        (2.0 * self.q).round() as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Identity,
    /// 2×2 helicity-basis action that leaves ℓ = m − Λ unchanged.
    Spin(Matrix2<C64>),
    /// `â†_{0,Λ} → keep·b̂†_{0,Λ} + flip·b̂†_{0,−Λ}`, defined on m = 0 only.
    HelicityMixing { keep: C64, flip: C64 },
    /// Per-(m, Λ) helicity mixing; the domain is the table's keys.
    HelicityTable(BTreeMap<(i32, Helicity), (C64, C64)>),
    QPlate(QPlateSpec),
    /// Applied first to last.
    Sequence(Vec<SinglePhotonMap>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonMap {
    label: String,
    kind: MapKind,
}

impl SinglePhotonMap {
    pub fn new(label: impl Into<String>, kind: MapKind) -> Self {
        Self { label: label.into(), kind }
    }

    pub fn identity() -> Self {
        Self::new("identity", MapKind::Identity)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    /// `self` followed by `next`.
    pub fn then(self, next: SinglePhotonMap) -> Self {
        let label = format!("{} > {}", self.label, next.label);
        let mut parts = match self.kind {
            MapKind::Sequence(v) => v,
            other => vec![Self { label: self.label, kind: other }],
        };
        match next.kind {
            MapKind::Sequence(v) => parts.extend(v),
            other => parts.push(Self { label: next.label, kind: other }),
        }
        Self::new(label, MapKind::Sequence(parts))
    }

    /// Helicity-basis matrix of a pure polarization element.
    pub fn spin_matrix(&self) -> Option<Matrix2<C64>> {
        match &self.kind {
            MapKind::Identity => Some(Matrix2::identity()),
            MapKind::Spin(u) => Some(*u),
            MapKind::Sequence(parts) => parts
                .iter()
                .try_fold(Matrix2::identity(), |acc, p| p.spin_matrix().map(|u| u * acc)),
            _ => None,
        }
    }

    /// H/V Jones matrix of a pure polarization element.
    pub fn jones(&self) -> Option<Matrix2<C64>> {
        self.spin_matrix().map(|u| helicity_to_hv(&u))
    }

    fn outside(&self, mode: &Mode) -> Error {
        Error::OutsideDomain { mode: *mode, map: self.label.clone() }
    }

    /// Image of `â†_mode` as a list of (output mode, amplitude).
    pub fn apply_to_mode(&self, mode: &Mode) -> Result<Vec<(Mode, C64)>> {
        let zero = c(0.0, 0.0);
        let out = match &self.kind {
            MapKind::Identity => vec![(*mode, c(1.0, 0.0))],
            MapKind::Spin(u) => {
                let orbital = mode.orbital();
                let col = mode.helicity.index();
                [Helicity::Plus, Helicity::Minus]
                    .into_iter()
                    .map(|h| {
                        let m = orbital + h.value();
                        (Mode::new(m, h, mode.temporal), u[(h.index(), col)])
                    })
                    .filter(|(_, a)| *a != zero)
                    .collect()
            }
            MapKind::HelicityMixing { keep, flip } => {
                if mode.m != 0 {
                    return Err(self.outside(mode));
                }
                let mut v = Vec::with_capacity(2);
                if *keep != zero {
                    v.push((*mode, *keep));
                }
                if *flip != zero {
                    v.push((Mode::new(0, mode.helicity.flipped(), mode.temporal), *flip));
                }
                v
            }
            MapKind::HelicityTable(table) => {
                let (keep, flip) =
                    table.get(&(mode.m, mode.helicity)).ok_or_else(|| self.outside(mode))?;
                let mut v = Vec::with_capacity(2);
                if *keep != zero {
                    v.push((*mode, *keep));
                }
                if *flip != zero {
                    v.push((Mode::new(mode.m, mode.helicity.flipped(), mode.temporal), *flip));
                }
                v
            }
            MapKind::QPlate(spec) => {
                let sigma = mode.helicity.value();
                // the ideal q-plate is an involution, so the reverse plate
                // (ℓ → ℓ − 2qσ_out) has the same arithmetic as the forward one
                let orbital = mode.orbital() + spec.two_q() * sigma;
                if orbital.abs() > MAX_TRACKED_ORBITAL {
                    return Err(Error::UntrackedOrbital { orbital, limit: MAX_TRACKED_ORBITAL });
                }
                let h = mode.helicity.flipped();
                vec![(Mode::new(orbital + h.value(), h, mode.temporal), c(1.0, 0.0))]
            }
            MapKind::Sequence(parts) => {
                let mut current = vec![(*mode, c(1.0, 0.0))];
                for part in parts {
                    let mut next: BTreeMap<Mode, C64> = BTreeMap::new();
                    for (m, a) in current {
                        for (m2, b) in part.apply_to_mode(&m)? {
                            *next.entry(m2).or_insert(zero) += a * b;
                        }
                    }
                    current = next.into_iter().filter(|(_, a)| *a != zero).collect();
                }
                current
            }
        };
        Ok(out)
    }
}

pub fn hwp(theta: f64) -> SinglePhotonMap {
    SinglePhotonMap::new(
        format!("hwp({:.4}°)", theta.to_degrees()),
        MapKind::Spin(hv_to_helicity(&hwp_jones(theta))),
    )
}

pub fn qwp(theta: f64) -> SinglePhotonMap {
    SinglePhotonMap::new(
        format!("qwp({:.4}°)", theta.to_degrees()),
        MapKind::Spin(hv_to_helicity(&qwp_jones(theta))),
    )
}

pub fn qplate(spec: QPlateSpec) -> SinglePhotonMap {
    let dir = match spec.direction {
        QPlateDirection::Forward => "forward",
        QPlateDirection::Reverse => "reverse",
    };
    SinglePhotonMap::new(format!("qplate(q={}, {dir})", spec.q), MapKind::QPlate(spec))
}

/// Rank-1 projector onto the H/V Jones vector `axis` (normalized internally).
pub fn polarizer(axis: &Vector2<C64>) -> Result<SinglePhotonMap> {
    let n = axis.norm();
    if !(n > 1e-15) || !n.is_finite() {
        return Err(Error::ZeroAxis);
    }
    let v = axis.unscale(n);
    let p = v * v.adjoint();
    Ok(SinglePhotonMap::new(
        format!("polarizer[{:.3}{:+.3}i, {:.3}{:+.3}i]", v[0].re, v[0].im, v[1].re, v[1].im),
        MapKind::Spin(hv_to_helicity(&p)),
    ))
}

pub fn named_polarizer(axis: NamedAxis) -> SinglePhotonMap {
    let v = axis.jones();
    SinglePhotonMap::new(format!("polarizer({axis})"), MapKind::Spin(hv_to_helicity(&(v * v.adjoint()))))
}

/// Amplitude overlap γ(τ) of the two photons' temporal modes.
pub fn temporal_overlap(tau: f64, source: &SourceModel) -> Result<f64> {
    source.overlap(tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Named(NamedAxis),
    /// H/V Jones vector as [[re, im], [re, im]].
    Jones([[f64; 2]; 2]),
}

impl AxisSpec {
    pub fn jones(&self) -> Vector2<C64> {
        match self {
            AxisSpec::Named(a) => a.jones(),
            AxisSpec::Jones(v) => Vector2::new(c(v[0][0], v[0][1]), c(v[1][0], v[1][1])),
        }
    }
}

/// One entry of an element chain in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "element", rename_all = "lowercase", deny_unknown_fields)]
pub enum ElementSpec {
    Hwp { angle_deg: f64 },
    Qwp { angle_deg: f64 },
    Qplate { q: f64, direction: QPlateDirection },
    Polarizer { axis: AxisSpec },
}

impl ElementSpec {
    pub fn to_map(&self) -> Result<SinglePhotonMap> {
        match self {
            ElementSpec::Hwp { angle_deg } => Ok(hwp(check_angle(*angle_deg)?.to_radians())),
            ElementSpec::Qwp { angle_deg } => Ok(qwp(check_angle(*angle_deg)?.to_radians())),
            ElementSpec::Qplate { q, direction } => Ok(qplate(QPlateSpec::new(*q, *direction)?)),
            ElementSpec::Polarizer { axis } => polarizer(&axis.jones()),
        }
    }
}

fn check_angle(deg: f64) -> Result<f64> {
    if deg.is_finite() {
        Ok(deg)
    } else {
        Err(Error::InvalidElement(format!("angle {deg} is not finite")))
    }
}

/// Composes an ordered element list into one map (identity when empty).
pub fn chain_map(elements: &[ElementSpec]) -> Result<SinglePhotonMap> {
    elements
        .iter()
        .try_fold(SinglePhotonMap::identity(), |acc, e| Ok(acc.then(e.to_map()?)))
}
