//! Entanglement and overlap measures for two-qubit states.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};

fn hermitian_eigen(m: &Matrix4<C64>) -> SymmetricEigen<C64, nalgebra::U4> {
    SymmetricEigen::new((m + m.adjoint()) * C64::new(0.5, 0.0))
}

fn psd_sqrt(m: &Matrix4<C64>) -> Matrix4<C64> {
    let eig = hermitian_eigen(m);
    let mut d = Matrix4::zeros();
    for i in 0..4 {
        d[(i, i)] = C64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0);
    }
    eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

fn y_y() -> Matrix4<C64> {
    // Y⊗Y is real and antidiagonal with signs (−1, +1, +1, −1)
    Matrix4::from_fn(|i, j| {
        if i + j == 3 {
            C64::new(if i == 0 || i == 3 { -1.0 } else { 1.0 }, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Wootters concurrence. The λᵢ are the singular values of
/// √ρ (Y⊗Y) √ρ*, whose Gram matrix is √ρ ρ̃ √ρ.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    let s = psd_sqrt(&rho.to_matrix4()?);
    let a = s * y_y() * s.conjugate();
    let mut lambda: Vec<f64> = a.svd(false, false).singular_values.iter().cloned().collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok((lambda[0] - lambda[1] - lambda[2] - lambda[3]).max(0.0))
}

/// Partial transpose over the second qubit.
pub fn partial_transpose(rho: &DensityMatrix) -> Result<Matrix4<C64>> {
    let r = rho.to_matrix4()?;
    Ok(Matrix4::from_fn(|i, j| {
        let (a, b) = (i / 2, i % 2);
        let (c, d) = (j / 2, j % 2);
        r[(2 * a + d, 2 * c + b)]
    }))
}

/// ‖ρ^{T₂}‖₁ − 1, equal to 1 for a Bell state.
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    let pt = partial_transpose(rho)?;
    let trace_norm: f64 = hermitian_eigen(&pt).eigenvalues.iter().map(|x| x.abs()).sum();
    Ok((trace_norm - 1.0).max(0.0))
}

/// ⟨ψ|ρ|ψ⟩ for a target that is normalized internally.
pub fn fidelity_to_pure(rho: &DensityMatrix, target: &[C64]) -> Result<f64> {
    if target.len() != rho.dim() {
        return Err(Error::Dimension { expected: rho.dim(), found: target.len() });
    }
    let norm2: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut acc = C64::new(0.0, 0.0);
    for (i, a) in target.iter().enumerate() {
        for (j, b) in target.iter().enumerate() {
            acc += a.conj() * rho.get(i, j) * b;
        }
    }
    Ok(acc.re / norm2)
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn dyn_psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new((m + m.adjoint()).scale(0.5));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| C64::new(x.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity (tr√(√ρ σ √ρ))².
pub fn state_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: b.dim() });
    }
    let s = dyn_psd_sqrt(a.matrix());
    let m = &s * b.matrix() * &s;
    let eig = SymmetricEigen::new((&m + m.adjoint()).scale(0.5));
    let t: f64 = eig.eigenvalues.iter().map(|x| x.max(0.0).sqrt()).sum();
    Ok((t * t).min(1.0))
}

/// ½‖ρ − σ‖₁.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: b.dim() });
    }
    let d = a.matrix() - b.matrix();
    let eig = SymmetricEigen::new((&d + d.adjoint()).scale(0.5));
    Ok(0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

/// Bell-like targets in the ++, +−, −+, −− basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellTarget {
    /// (|++⟩ + |−−⟩)/√2
    PhiPlus,
    /// (|++⟩ − |−−⟩)/√2
    PhiMinus,
    /// (|+−⟩ + |−+⟩)/√2
    PsiPlus,
}

impl BellTarget {
    pub fn amplitudes(self) -> [C64; 4] {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        match self {
            BellTarget::PhiPlus => [h, z, z, h],
            BellTarget::PhiMinus => [h, z, z, -h],
            BellTarget::PsiPlus => [z, h, h, z],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BellTarget::PhiPlus => "|++>+|-->",
            BellTarget::PhiMinus => "|++>-|-->",
            BellTarget::PsiPlus => "|+->+|-+>",
        }
    }

    pub fn density(self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.amplitudes()).expect("Bell states are normalized")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub target: String,
    pub concurrence: f64,
    pub negativity: f64,
    pub fidelity: f64,
    pub purity: f64,
}

impl MetricReport {
    pub fn evaluate(rho: &DensityMatrix, target: BellTarget) -> Result<Self> {
        Ok(Self {
            target: target.label().to_string(),
            concurrence: concurrence(rho)?,
            negativity: negativity(rho)?,
            fidelity: fidelity_to_pure(rho, &target.amplitudes())?,
            purity: purity(rho),
        })
    }

    /// Values in the order concurrence, negativity, fidelity, purity.
    pub fn values(&self) -> [f64; 4] {
        [self.concurrence, self.negativity, self.fidelity, self.purity]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use proptest::prelude::*;

    fn werner(p: f64) -> DensityMatrix {
        DensityMatrix::mix(&[
            (p, &BellTarget::PhiMinus.density()),
            (1.0 - p, &DensityMatrix::maximally_mixed(4)),
        ])
        .unwrap()
    }

    fn calibration() -> DensityMatrix {
        DensityMatrix::mix(&[
            (0.62, &BellTarget::PhiPlus.density()),
            (0.38, &BellTarget::PsiPlus.density()),
        ])
        .unwrap()
    }

    #[test]
    fn bell_state_conventions() {
        let bell = BellTarget::PhiMinus.density();
        assert!((concurrence(&bell).unwrap() - 1.0).abs() < 1e-9);
        assert!((negativity(&bell).unwrap() - 1.0).abs() < 1e-9);
        assert!((fidelity_to_pure(&bell, &BellTarget::PhiMinus.amplitudes()).unwrap() - 1.0).abs() < 1e-12);
        assert!((purity(&bell) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn werner_closed_form() {
        for k in 0..=20 {
            let p = k as f64 * 0.05;
            let expected = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert!((concurrence(&werner(p)).unwrap() - expected).abs() < 1e-9, "p={p}");
            assert!((negativity(&werner(p)).unwrap() - expected).abs() < 1e-9, "p={p}");
        }
        assert!((concurrence(&werner(0.5)).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn calibration_state_values() {
        let rho = calibration();
        assert!((concurrence(&rho).unwrap() - 0.24).abs() < 1e-9);
        assert!((negativity(&rho).unwrap() - 0.24).abs() < 1e-9);
        assert!((fidelity_to_pure(&rho, &BellTarget::PhiPlus.amplitudes()).unwrap() - 0.62).abs() < 1e-12);
        assert!((purity(&rho) - 0.5288).abs() < 1e-12);
    }

    #[test]
    fn mixed_and_product_states() {
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((fidelity_to_pure(&mixed, &BellTarget::PsiPlus.amplitudes()).unwrap() - 0.25).abs() < 1e-12);
        assert!((purity(&mixed) - 0.25).abs() < 1e-12);
        let c = |re: f64, im: f64| C64::new(re, im);
        let product = DensityMatrix::from_pure(&[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(negativity(&product).unwrap() < 1e-9);
        assert!(concurrence(&product).unwrap() < 1e-7);
    }

    #[test]
    fn fidelity_and_distance() {
        let a = BellTarget::PhiPlus.density();
        let b = BellTarget::PhiMinus.density();
        assert!(state_fidelity(&a, &b).unwrap() < 1e-12);
        assert!((state_fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_distance(&a, &a).unwrap() < 1e-15);
    }

    #[test]
    fn coherence_family_is_monotone() {
        let mut last = (-1.0, -1.0);
        for k in 0..=20 {
            let c = k as f64 / 20.0;
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 0)] = C64::new(0.5, 0.0);
            m[(3, 3)] = C64::new(0.5, 0.0);
            m[(0, 3)] = C64::new(0.5 * c, 0.0);
            m[(3, 0)] = C64::new(0.5 * c, 0.0);
            let rho = DensityMatrix::new(m).unwrap();
            let now = (concurrence(&rho).unwrap(), negativity(&rho).unwrap());
            assert!(now.0 >= last.0 - 1e-12 && now.1 >= last.1 - 1e-12);
            last = now;
        }
    }

    fn unitary2(v: [f64; 4]) -> Matrix2<C64> {
        let (a, b, c, d) = (v[0], v[1], v[2], v[3]);
        let e = |x: f64| C64::from_polar(1.0, x);
        Matrix2::new(e(b) * a.cos(), e(c) * a.sin(), -e(-c) * a.sin(), e(-b) * a.cos()) * e(d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn local_unitary_invariance(u in prop::array::uniform4(-3.0f64..3.0), w in prop::array::uniform4(-3.0f64..3.0), p in 0.0f64..1.0) {
            let rho = DensityMatrix::mix(&[(p, &calibration()), (1.0 - p, &werner(0.8))]).unwrap();
            let u1 = unitary2(u);
            let u2 = unitary2(w);
            let k = u1.kronecker(&u2);
            let r = rho.to_matrix4().unwrap();
            let rotated = DensityMatrix::from_matrix4(&(k * r * k.adjoint())).unwrap();
            prop_assert!((concurrence(&rho).unwrap() - concurrence(&rotated).unwrap()).abs() < 1e-9);
            prop_assert!((negativity(&rho).unwrap() - negativity(&rotated).unwrap()).abs() < 1e-9);
            prop_assert!((purity(&rho) - purity(&rotated)).abs() < 1e-9);
        }
    }
}
