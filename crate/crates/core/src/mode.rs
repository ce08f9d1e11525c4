//! Bosonic two-photon states over (m, Λ, temporal) modes.
//!
//! States are stored in the orthonormal occupation basis: one complex
//! amplitude per unordered mode pair, where a pair `{x, x}` means the
//! doubly-occupied `|2_x⟩` and `{x, y}` means `|1_x 1_y⟩`. Operator products
//! `â†_x â†_x |0⟩ = √2 |2_x⟩` are converted exactly once, in
//! [`TwoPhotonState::from_creation_product`].

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::optics::SinglePhotonMap;

pub const NORM_TOL: f64 = 1e-12;

/// Amplitudes smaller than this are dropped after re-expansion.
const PRUNE: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Helicity {
    Plus,
    Minus,
}

impl Helicity {
    pub fn value(self) -> i32 {
        match self {
            Helicity::Plus => 1,
            Helicity::Minus => -1,
        }
    }

    pub fn from_value(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Helicity::Plus),
            -1 => Ok(Helicity::Minus),
            other => Err(Error::InvalidHelicity(other)),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Helicity::Plus => Helicity::Minus,
            Helicity::Minus => Helicity::Plus,
        }
    }

    /// Computational-basis index: Λ=+1 is the first basis vector.
    pub fn index(self) -> usize {
        match self {
            Helicity::Plus => 0,
            Helicity::Minus => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Helicity::Plus
        } else {
            Helicity::Minus
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Helicity::Plus => '+',
            Helicity::Minus => '-',
        }
    }
}

/// One photon's quantum numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode {
    /// Total angular momentum in units of ħ.
    pub m: i32,
    pub helicity: Helicity,
    /// Index into an orthonormal temporal-mode basis.
    pub temporal: u32,
}

impl Mode {
    pub fn new(m: i32, helicity: Helicity, temporal: u32) -> Self {
        Self { m, helicity, temporal }
    }

    pub fn tam_zero(helicity: Helicity, temporal: u32) -> Self {
        Self::new(0, helicity, temporal)
    }

    /// Paraxial orbital number ℓ = m − σ.
    pub fn orbital(&self) -> i32 {
        self.m - self.helicity.value()
    }

    pub fn to_triple(self) -> [i64; 3] {
        [self.m as i64, self.helicity.value() as i64, self.temporal as i64]
    }

    pub fn from_triple(t: [i64; 3]) -> Result<Self> {
        let helicity = Helicity::from_value(t[1] as i32)?;
        Ok(Self::new(t[0] as i32, helicity, t[2] as u32))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(m={}, {}, t{})", self.m, self.helicity.symbol(), self.temporal)
    }
}

/// Unordered pair of modes, stored sorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModePair(Mode, Mode);

impl ModePair {
    pub fn new(a: Mode, b: Mode) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn first(&self) -> Mode {
        self.0
    }

    pub fn second(&self) -> Mode {
        self.1
    }

    pub fn is_double(&self) -> bool {
        self.0 == self.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    amplitudes: BTreeMap<ModePair, C64>,
    normalized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub modes: [[i64; 3]; 2],
    pub amplitude: [f64; 2],
}

impl TwoPhotonState {
    pub fn zero() -> Self {
        Self { amplitudes: BTreeMap::new(), normalized: false }
    }

    /// Builds a state from occupation amplitudes. With `normalized` set the
    /// squared norm must be 1 within [`NORM_TOL`].
    pub fn from_amplitudes(
        amplitudes: impl IntoIterator<Item = (ModePair, C64)>,
        normalized: bool,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (pair, c) in amplitudes {
            *map.entry(pair).or_insert(C64::new(0.0, 0.0)) += c;
        }
        let state = Self { amplitudes: map, normalized: false }.pruned();
        if normalized {
            let n2 = state.norm_sqr();
            if (n2 - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized(n2));
            }
        }
        Ok(Self { normalized, ..state })
    }

    /// Expands `(Σ_x u_x â†_x)(Σ_y v_y â†_y)|0⟩` into occupation amplitudes.
    pub fn from_creation_product(first: &[(Mode, C64)], second: &[(Mode, C64)]) -> Self {
        let mut map: BTreeMap<ModePair, C64> = BTreeMap::new();
        for &(x, u) in first {
            for &(y, v) in second {
                let coef = if x == y { u * v * std::f64::consts::SQRT_2 } else { u * v };
                *map.entry(ModePair::new(x, y)).or_insert(C64::new(0.0, 0.0)) += coef;
            }
        }
        Self { amplitudes: map, normalized: false }.pruned()
    }

    fn pruned(mut self) -> Self {
        self.amplitudes.retain(|_, c| c.norm() > PRUNE);
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn amplitude(&self, a: Mode, b: Mode) -> C64 {
        self.amplitudes
            .get(&ModePair::new(a, b))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModePair, &C64)> {
        self.amplitudes.iter()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|c| c.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|(p, c)| (*p, c * factor)).collect(),
            normalized: false,
        }
        .pruned()
    }

    /// `a·self + b·other`, unnormalized.
    pub fn superpose(&self, a: C64, other: &Self, b: C64) -> Self {
        let mut map: BTreeMap<ModePair, C64> =
            self.amplitudes.iter().map(|(p, c)| (*p, c * a)).collect();
        for (p, c) in &other.amplitudes {
            *map.entry(*p).or_insert(C64::new(0.0, 0.0)) += c * b;
        }
        Self { amplitudes: map, normalized: false }.pruned()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut out = self.scaled(C64::new(1.0 / n2.sqrt(), 0.0));
        out.normalized = true;
        Ok(out)
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        self.amplitudes.keys().flat_map(|p| [p.0, p.1])
    }

    pub fn to_records(&self) -> Vec<StateRecord> {
        self.amplitudes
            .iter()
            .map(|(p, c)| StateRecord {
                modes: [p.0.to_triple(), p.1.to_triple()],
                amplitude: [c.re, c.im],
            })
            .collect()
    }

    pub fn from_records(records: &[StateRecord]) -> Result<Self> {
        let mut items = Vec::with_capacity(records.len());
        for r in records {
            let a = Mode::from_triple(r.modes[0])?;
            let b = Mode::from_triple(r.modes[1])?;
            items.push((ModePair::new(a, b), C64::new(r.amplitude[0], r.amplitude[1])));
        }
        Self::from_amplitudes(items, false)
    }

    /// Symmetric operator form `½ Σ_ij S_ij â†_i â†_j` with
    /// `S_ij = c_ij` (i≠j) and `S_ii = √2 c_ii`, as (x, y, S_xy) over ordered pairs.
    fn symmetric_terms(&self) -> Vec<(Mode, Mode, C64)> {
        let mut terms = Vec::with_capacity(2 * self.amplitudes.len());
        for (p, c) in &self.amplitudes {
            if p.is_double() {
                terms.push((p.0, p.0, c * std::f64::consts::SQRT_2));
            } else {
                terms.push((p.0, p.1, *c));
                terms.push((p.1, p.0, *c));
            }
        }
        terms
    }
}

/// ⟨a|b⟩, conjugate-linear in `a`.
pub fn inner(a: &TwoPhotonState, b: &TwoPhotonState) -> C64 {
    a.amplitudes
        .iter()
        .filter_map(|(p, ca)| b.amplitudes.get(p).map(|cb| ca.conj() * cb))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisState {
    Psi0,
    PsiPlus,
    PsiMinus,
}

/// The three m=0 two-photon basis states on temporal mode 0.
pub fn make_basis_state(kind: BasisState) -> TwoPhotonState {
    let plus = Mode::tam_zero(Helicity::Plus, 0);
    let minus = Mode::tam_zero(Helicity::Minus, 0);
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let items = match kind {
        BasisState::Psi0 => vec![(ModePair::new(plus, minus), C64::new(1.0, 0.0))],
        BasisState::PsiPlus => vec![
            (ModePair::new(plus, plus), h),
            (ModePair::new(minus, minus), h),
        ],
        BasisState::PsiMinus => vec![
            (ModePair::new(plus, plus), h),
            (ModePair::new(minus, minus), -h),
        ],
    };
    TwoPhotonState::from_amplitudes(items, true).expect("basis states are normalized")
}

/// Applies `first` to one creation operator and `second` to the other in the
/// symmetric operator form, i.e. `½ Σ S_ij F(â†_i) G(â†_j) |0⟩`.
///
/// With `first == second` this is the ordinary action of a single-photon map
/// on both photons.
pub fn apply_split_map(
    state: &TwoPhotonState,
    first: &SinglePhotonMap,
    second: &SinglePhotonMap,
) -> Result<TwoPhotonState> {
    let mut out: BTreeMap<ModePair, C64> = BTreeMap::new();
    let mut cache: BTreeMap<(bool, Mode), Vec<(Mode, C64)>> = BTreeMap::new();
    let mut image = |which: bool, mode: Mode| -> Result<Vec<(Mode, C64)>> {
        if let Some(v) = cache.get(&(which, mode)) {
            return Ok(v.clone());
        }
        let v = if which { first.apply_to_mode(&mode)? } else { second.apply_to_mode(&mode)? };
        cache.insert((which, mode), v.clone());
        Ok(v)
    };
    for (x, y, s) in state.symmetric_terms() {
        let fx = image(true, x)?;
        let gy = image(false, y)?;
        let term = TwoPhotonState::from_creation_product(&fx, &gy);
        for (p, c) in term.amplitudes {
            *out.entry(p).or_insert(C64::new(0.0, 0.0)) += c * s * 0.5;
        }
    }
    Ok(TwoPhotonState { amplitudes: out, normalized: false }.pruned())
}

/// Replaces every creation operator `â†_x` by its image under `map` and
/// re-expands. The result is unnormalized in general.
pub fn apply_single_photon_map(
    state: &TwoPhotonState,
    map: &SinglePhotonMap,
) -> Result<TwoPhotonState> {
    apply_split_map(state, map, map)
}

/// Incoherent mixture of normalized two-photon states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMixture {
    components: Vec<(f64, TwoPhotonState)>,
}

/// Renormalizes the weights to sum to one, keeping order.
pub fn mix(components: Vec<(f64, TwoPhotonState)>) -> Result<StateMixture> {
    let mut total = 0.0;
    for (w, s) in &components {
        if *w < 0.0 || !w.is_finite() {
            return Err(Error::NegativeWeight(*w));
        }
        let n2 = s.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n2));
        }
        total += w;
    }
    if total == 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(StateMixture {
        components: components.into_iter().map(|(w, s)| (w / total, s)).collect(),
    })
}

impl StateMixture {
    pub fn pure(state: TwoPhotonState) -> Result<Self> {
        mix(vec![(1.0, state)])
    }

    pub fn components(&self) -> &[(f64, TwoPhotonState)] {
        &self.components
    }
}

/// Weighted, possibly sub-normalized branches; the squared norm of each
/// branch carries its post-selection weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchEnsemble {
    branches: Vec<(f64, TwoPhotonState)>,
}

impl BranchEnsemble {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, weight: f64, state: TwoPhotonState) {
        if weight > 0.0 && !state.is_empty() {
            self.branches.push((weight, state));
        }
    }

    pub fn branches(&self) -> &[(f64, TwoPhotonState)] {
        &self.branches
    }

    /// Total weight Σ w‖ψ‖².
    pub fn weight(&self) -> f64 {
        self.branches.iter().map(|(w, s)| w * s.norm_sqr()).sum()
    }
}

/// Anything that is a weighted collection of two-photon states.
pub trait Ensemble {
    fn weighted(&self) -> Vec<(f64, &TwoPhotonState)>;
}

impl Ensemble for TwoPhotonState {
    fn weighted(&self) -> Vec<(f64, &TwoPhotonState)> {
        vec![(1.0, self)]
    }
}

impl Ensemble for StateMixture {
    fn weighted(&self) -> Vec<(f64, &TwoPhotonState)> {
        self.components.iter().map(|(w, s)| (*w, s)).collect()
    }
}

impl Ensemble for BranchEnsemble {
    fn weighted(&self) -> Vec<(f64, &TwoPhotonState)> {
        self.branches.iter().map(|(w, s)| (*w, s)).collect()
    }
}

fn qubit_index(a: Helicity, b: Helicity) -> usize {
    2 * a.index() + b.index()
}

/// Unnormalized two-qubit image of one pure state: the coincidence-
/// conditioned amplitudes after a 50:50 splitter (one photon per arm),
/// traced over temporal labels. Its trace is the squared norm of `state`.
pub(crate) fn two_qubit_image(state: &TwoPhotonState) -> Result<Matrix4<C64>> {
    let mut blocks: BTreeMap<(u32, u32), Vector4<C64>> = BTreeMap::new();
    for (p, c) in &state.amplitudes {
        let (x, y) = (p.0, p.1);
        for mode in [x, y] {
            if mode.m != 0 {
                return Err(Error::OutsideTamZero(mode));
            }
        }
        if x == y {
            blocks.entry((x.temporal, x.temporal)).or_insert_with(Vector4::zeros)
                [qubit_index(x.helicity, x.helicity)] += c;
        } else {
            let v = c * FRAC_1_SQRT_2;
            blocks.entry((x.temporal, y.temporal)).or_insert_with(Vector4::zeros)
                [qubit_index(x.helicity, y.helicity)] += v;
            blocks.entry((y.temporal, x.temporal)).or_insert_with(Vector4::zeros)
                [qubit_index(y.helicity, x.helicity)] += v;
        }
    }
    Ok(blocks.values().fold(Matrix4::zeros(), |acc, v| acc + v * v.adjoint()))
}

/// Unnormalized two-qubit image of an ensemble together with the
/// coincidence probability (one photon in each splitter arm).
pub(crate) fn two_qubit_weighted(ensemble: &impl Ensemble) -> Result<(Matrix4<C64>, f64)> {
    let mut rho = Matrix4::zeros();
    for (w, s) in ensemble.weighted() {
        rho += two_qubit_image(s)? * C64::new(w, 0.0);
    }
    let probability = 0.5 * rho.trace().re;
    Ok((rho, probability))
}

/// Two-qubit state conditioned on one photon per output arm of a 50:50
/// splitter, basis order ++, +−, −+, −−, and the coincidence probability.
pub fn to_two_qubit(ensemble: &impl Ensemble) -> Result<(DensityMatrix, f64)> {
    let (rho, probability) = two_qubit_weighted(ensemble)?;
    if probability <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let (dm, _) = DensityMatrix::from_unnormalized(nalgebra::DMatrix::from_iterator(
        4,
        4,
        rho.iter().cloned(),
    ))?;
    Ok((dm, probability))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{MapKind, SinglePhotonMap};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn states_close(a: &TwoPhotonState, b: &TwoPhotonState, tol: f64) -> bool {
        a.superpose(c(1.0, 0.0), b, c(-1.0, 0.0)).norm_sqr().sqrt() < tol
    }

    #[test]
    fn basis_state_amplitudes() {
        let p = Mode::tam_zero(Helicity::Plus, 0);
        let m = Mode::tam_zero(Helicity::Minus, 0);
        let minus = make_basis_state(BasisState::PsiMinus);
        assert!(close(minus.amplitude(p, p), c(FRAC_1_SQRT_2, 0.0), 1e-15));
        assert!(close(minus.amplitude(m, m), c(-FRAC_1_SQRT_2, 0.0), 1e-15));
        let plus = make_basis_state(BasisState::PsiPlus);
        assert!(close(plus.amplitude(m, m), c(FRAC_1_SQRT_2, 0.0), 1e-15));
        let zero = make_basis_state(BasisState::Psi0);
        assert!(close(zero.amplitude(p, m), c(1.0, 0.0), 1e-15));
        for s in [&minus, &plus, &zero] {
            assert!((inner(s, s).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_state_matches_operator_expansion() {
        // ½(â†₊â†₊ − â†₋â†₋)|0⟩ expanded through the creation-product path
        let p = Mode::tam_zero(Helicity::Plus, 0);
        let m = Mode::tam_zero(Helicity::Minus, 0);
        let pp = TwoPhotonState::from_creation_product(&[(p, c(1.0, 0.0))], &[(p, c(0.5, 0.0))]);
        let mm = TwoPhotonState::from_creation_product(&[(m, c(1.0, 0.0))], &[(m, c(0.5, 0.0))]);
        let minus = pp.superpose(c(1.0, 0.0), &mm, c(-1.0, 0.0));
        assert!(states_close(&minus, &make_basis_state(BasisState::PsiMinus), 1e-15));
    }

    #[test]
    fn inner_products() {
        let plus = make_basis_state(BasisState::PsiPlus);
        let minus = make_basis_state(BasisState::PsiMinus);
        let zero = make_basis_state(BasisState::Psi0);
        assert!(inner(&plus, &minus).norm() < 1e-15);
        assert!((inner(&minus, &minus) - c(1.0, 0.0)).norm() < 1e-15);
        assert!(inner(&plus, &zero).norm() < 1e-15);
        let a = minus.scaled(c(0.0, 2.0));
        // conjugate-linear in the first slot
        assert!((inner(&a, &minus) - c(0.0, -2.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_and_helicity_swap() {
        let minus = make_basis_state(BasisState::PsiMinus);
        let plus = make_basis_state(BasisState::PsiPlus);
        let id = SinglePhotonMap::identity();
        assert!(states_close(&apply_single_photon_map(&minus, &id).unwrap(), &minus, 1e-15));
        let swap = SinglePhotonMap::new("swap", MapKind::HelicityMixing { keep: c(0.0, 0.0), flip: c(1.0, 0.0) });
        assert!(states_close(&apply_single_photon_map(&plus, &swap).unwrap(), &plus, 1e-15));
        let swapped = apply_single_photon_map(&minus, &swap).unwrap();
        assert!(states_close(&swapped, &minus.scaled(c(-1.0, 0.0)), 1e-15));
    }

    #[test]
    fn outside_domain_is_an_error() {
        let state = TwoPhotonState::from_creation_product(
            &[(Mode::new(1, Helicity::Plus, 0), c(1.0, 0.0))],
            &[(Mode::new(-1, Helicity::Minus, 0), c(1.0, 0.0))],
        );
        let swap = SinglePhotonMap::new("swap", MapKind::HelicityMixing { keep: c(0.0, 0.0), flip: c(1.0, 0.0) });
        assert!(matches!(
            apply_single_photon_map(&state, &swap),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(to_two_qubit(&state), Err(Error::OutsideTamZero(_))));
    }

    #[test]
    fn two_qubit_images_of_basis_states() {
        let s = FRAC_1_SQRT_2;
        let (rho, p) = to_two_qubit(&make_basis_state(BasisState::Psi0)).unwrap();
        let expected = DensityMatrix::from_pure(&[c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((rho.matrix() - expected.matrix()).norm() < 1e-14);
        assert!((p - 0.5).abs() < 1e-15);

        let (rho, p) = to_two_qubit(&make_basis_state(BasisState::PsiMinus)).unwrap();
        let expected = DensityMatrix::from_pure(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-s, 0.0)]).unwrap();
        assert!((rho.matrix() - expected.matrix()).norm() < 1e-14);
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distinguishable_photons_give_mixed_image() {
        // one + photon in t0 and one − photon in t1: ½(|+−⟩⟨+−| + |−+⟩⟨−+|)
        let state = TwoPhotonState::from_creation_product(
            &[(Mode::tam_zero(Helicity::Plus, 0), c(1.0, 0.0))],
            &[(Mode::tam_zero(Helicity::Minus, 1), c(1.0, 0.0))],
        );
        let (rho, p) = to_two_qubit(&state).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((rho.get(1, 1).re - 0.5).abs() < 1e-15);
        assert!((rho.get(2, 2).re - 0.5).abs() < 1e-15);
        assert!(rho.get(1, 2).norm() < 1e-15);
    }

    #[test]
    fn mix_renormalizes_and_rejects_zero() {
        let m = mix(vec![
            (1.0, make_basis_state(BasisState::PsiPlus)),
            (1.0, make_basis_state(BasisState::Psi0)),
        ])
        .unwrap();
        assert_eq!(m.components()[0].0, 0.5);
        assert_eq!(m.components()[1].0, 0.5);
        let m = mix(vec![
            (0.62, make_basis_state(BasisState::PsiPlus)),
            (0.38, make_basis_state(BasisState::Psi0)),
        ])
        .unwrap();
        assert!((m.components()[0].0 - 0.62).abs() < 1e-15);
        assert!(matches!(
            mix(vec![(0.0, make_basis_state(BasisState::PsiPlus))]),
            Err(Error::ZeroWeights)
        ));
        assert!(matches!(
            mix(vec![(-1.0, make_basis_state(BasisState::PsiPlus))]),
            Err(Error::NegativeWeight(_))
        ));
    }

    #[test]
    fn record_round_trip() {
        let s = make_basis_state(BasisState::PsiMinus).scaled(c(0.3, -0.4));
        let back = TwoPhotonState::from_records(&s.to_records()).unwrap();
        assert_eq!(s, back);
    }
}
