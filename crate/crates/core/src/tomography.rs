//! Two-qubit state tomography from 36 product-projector settings.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::measurement::{born, child_rng, sample_counts, CountRecord, MeasurementSetting};
use crate::metrics::{BellTarget, MetricReport};
use crate::optics::NamedAxis;

pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 5000;
const WARM_START_MIX: f64 = 1e-3;

/// All arm pairs from {H, V, D, A, R, L}, arm 1 outer.
pub fn standard_settings() -> Vec<MeasurementSetting> {
    NamedAxis::ALL
        .iter()
        .flat_map(|&a| NamedAxis::ALL.iter().map(move |&b| MeasurementSetting::named(a, b)))
        .collect()
}

/// Numerical rank of the real span of single-arm projectors.
pub fn single_arm_rank(axes: &[NamedAxis]) -> usize {
    let rows: Vec<[f64; 4]> = axes
        .iter()
        .map(|a| {
            let v = crate::optics::jones_to_helicity(&a.jones());
            let p = v * v.adjoint();
            pauli_coefficients2(&p)
        })
        .collect();
    let m = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
    rank(&m)
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * max.max(1e-300)).count()
}

fn paulis() -> [Matrix2<C64>; 4] {
    let o = C64::new(0.0, 0.0);
    let r = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        Matrix2::new(r, o, o, r),
        Matrix2::new(o, r, r, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(r, o, o, -r),
    ]
}

fn pauli_coefficients2(p: &Matrix2<C64>) -> [f64; 4] {
    let s = paulis();
    [0, 1, 2, 3].map(|k| (s[k] * p).trace().re)
}

fn two_qubit_paulis() -> Vec<Matrix4<C64>> {
    let s = paulis();
    (0..16).map(|k| s[k / 4].kronecker(&s[k % 4])).collect()
}

pub fn predicted_counts(rho: &DensityMatrix, settings: &[MeasurementSetting], scale: f64) -> Result<Vec<f64>> {
    let r = rho.to_matrix4()?;
    settings
        .iter()
        .map(|s| Ok(scale * born(&r, &s.vector()?)))
        .collect()
}

fn setting_vectors(settings: &[MeasurementSetting]) -> Result<Vec<Vector4<C64>>> {
    settings
        .iter()
        .map(|s| s.vector().map(|v| Vector4::from_column_slice(&v)))
        .collect()
}

fn check_counts(counts: &[f64], settings: &[MeasurementSetting]) -> Result<()> {
    if counts.len() != settings.len() {
        return Err(Error::CountMismatch { counts: counts.len(), settings: settings.len() });
    }
    if let Some(bad) = counts.iter().find(|n| !(**n >= 0.0) || !n.is_finite()) {
        return Err(Error::NegativeWeight(*bad));
    }
    if counts.iter().all(|&n| n == 0.0) {
        return Err(Error::ZeroCounts);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LinearEstimate {
    /// Hermitian, unit trace, possibly with negative eigenvalues.
    pub matrix: Matrix4<C64>,
    pub min_eigenvalue: f64,
}

impl LinearEstimate {
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -crate::density::EIGEN_TOL
    }
}

/// Least-squares solve for the 16 real Pauli coefficients.
pub fn linear_inversion(counts: &[f64], settings: &[MeasurementSetting]) -> Result<LinearEstimate> {
    check_counts(counts, settings)?;
    let vs = setting_vectors(settings)?;
    let basis = two_qubit_paulis();
    let a = DMatrix::from_fn(vs.len(), 16, |i, k| {
        (vs[i].adjoint() * basis[k] * vs[i])[(0, 0)].re
    });
    let r = rank(&a);
    if r < 16 {
        return Err(Error::RankDeficient(r));
    }
    let b = DVector::from_column_slice(counts);
    let x = a.svd(true, true).solve(&b, 1e-12).map_err(|e| Error::InvalidDensity(e.to_string()))?;
    let mut m = Matrix4::zeros();
    for k in 0..16 {
        m += basis[k] * C64::new(x[k], 0.0);
    }
    let trace = m.trace().re;
    if !(trace > 0.0) {
        return Err(Error::ZeroCounts);
    }
    m /= C64::new(trace, 0.0);
    let m = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let min_eigenvalue = SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LinearEstimate { matrix: m, min_eigenvalue })
}

/// Closest physical state in the 2-norm to a unit-trace Hermitian matrix,
/// by redistributing negative eigenvalue weight.
pub fn project_to_physical(m: &Matrix4<C64>) -> Result<DensityMatrix> {
    let eig = SymmetricEigen::new((m + m.adjoint()) * C64::new(0.5, 0.0));
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut acc = 0.0;
    let mut i = lam.len();
    while i > 0 && lam[i - 1] + acc / (i as f64) < 0.0 {
        acc += lam[i - 1];
        lam[i - 1] = 0.0;
        i -= 1;
    }
    for l in lam.iter_mut().take(i) {
        *l += acc / i as f64;
    }
    let mut out = Matrix4::zeros();
    for (k, &idx) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        out += v * v.adjoint() * C64::new(lam[k], 0.0);
    }
    let t = out.trace();
    DensityMatrix::from_matrix4(&(out / t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { gradient_tol: GRADIENT_TOL, max_iterations: MAX_ITERATIONS }
    }
}

#[derive(Debug, Clone)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    /// Σ nᵢ ln μᵢ − μᵢ at the optimum.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after the start and after every accepted step.
    pub likelihood_trace: Vec<f64>,
    /// Fitted total intensity tr(T†T).
    pub scale: f64,
    pub gradient_norm: f64,
}

/// Real parameters of lower-triangular T: 4 real diagonal entries, then
/// (re, im) of the strictly lower entries row by row.
const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn unpack(x: &[f64; 16]) -> Matrix4<C64> {
    let mut t = Matrix4::zeros();
    for j in 0..4 {
        t[(j, j)] = C64::new(x[j], 0.0);
    }
    for (p, &(j, k)) in OFF_DIAGONAL.iter().enumerate() {
        t[(j, k)] = C64::new(x[4 + 2 * p], x[5 + 2 * p]);
    }
    t
}

fn pack(t: &Matrix4<C64>) -> [f64; 16] {
    let mut x = [0.0; 16];
    for j in 0..4 {
        x[j] = t[(j, j)].re;
    }
    for (p, &(j, k)) in OFF_DIAGONAL.iter().enumerate() {
        x[4 + 2 * p] = t[(j, k)].re;
        x[5 + 2 * p] = t[(j, k)].im;
    }
    x
}

struct Problem<'a> {
    counts: &'a [f64],
    vectors: Vec<Vector4<C64>>,
    total: f64,
}

impl Problem<'_> {
    fn log_likelihood(&self, t: &Matrix4<C64>) -> Option<f64> {
        let mut ll = 0.0;
        for (n, v) in self.counts.iter().zip(&self.vectors) {
            let mu = (t * v).norm_squared();
            if *n > 0.0 {
                if !(mu > 0.0) {
                    return None;
                }
                ll += n * mu.ln();
            }
            ll -= mu;
        }
        Some(ll)
    }

    /// Objective −LL / Σn and its gradient over the packed parameters.
    fn evaluate(&self, x: &[f64; 16]) -> Option<(f64, [f64; 16])> {
        let t = unpack(x);
        let ll = self.log_likelihood(&t)?;
        let mut r = Matrix4::zeros();
        for (n, v) in self.counts.iter().zip(&self.vectors) {
            let mu = (t * v).norm_squared();
            let w = if *n > 0.0 { n / mu - 1.0 } else { -1.0 };
            r += v * v.adjoint() * C64::new(w, 0.0);
        }
        let g = t * r;
        let s = -2.0 / self.total;
        let mut grad = [0.0; 16];
        for j in 0..4 {
            grad[j] = s * g[(j, j)].re;
        }
        for (p, &(j, k)) in OFF_DIAGONAL.iter().enumerate() {
            grad[4 + 2 * p] = s * g[(j, k)].re;
            grad[5 + 2 * p] = s * g[(j, k)].im;
        }
        Some((-ll / self.total, grad))
    }
}

fn norm(v: &[f64; 16]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64; 16], b: &[f64; 16]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// T with T†T = ρ and T lower triangular.
fn lower_factor(rho: &Matrix4<C64>) -> Result<Matrix4<C64>> {
    let j = Matrix4::from_fn(|r, c| if r + c == 3 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let flipped = j * rho * j;
    let l = Cholesky::new(flipped)
        .ok_or_else(|| Error::InvalidDensity("warm start is not positive definite".into()))?
        .unpack();
    // ρ = U U† with U = J L J upper triangular, so T = U†
    Ok((j * l * j).adjoint())
}

/// Poisson maximum-likelihood state over ρ = T†T / tr(T†T).
pub fn mle_reconstruct(
    counts: &[f64],
    settings: &[MeasurementSetting],
    options: &MleOptions,
) -> Result<TomographyResult> {
    check_counts(counts, settings)?;
    let vectors = setting_vectors(settings)?;
    let total: f64 = counts.iter().sum();
    let problem = Problem { counts, vectors, total };

    let linear = linear_inversion(counts, settings)?;
    let physical = project_to_physical(&linear.matrix)?.to_matrix4()?;
    let start = physical * C64::new(1.0 - WARM_START_MIX, 0.0)
        + Matrix4::identity() * C64::new(WARM_START_MIX / 4.0, 0.0);
    let predicted: f64 = problem.vectors.iter().map(|v| (v.adjoint() * start * v)[(0, 0)].re).sum();
    let t0 = lower_factor(&(start * C64::new(total / predicted, 0.0)))?;

    let mut x = pack(&t0);
    let (mut f, mut g) = problem
        .evaluate(&x)
        .ok_or_else(|| Error::InvalidDensity("warm start has zero likelihood".into()))?;
    let mut h = DMatrix::<f64>::identity(16, 16);
    let mut trace = vec![-f * total];
    let mut iterations = 0;
    let mut converged = norm(&g) < options.gradient_tol;
    let mut fresh = true;

    while !converged && iterations < options.max_iterations {
        let gv = DVector::from_column_slice(&g);
        let dv = -(&h * &gv);
        let mut d = [0.0; 16];
        d.copy_from_slice(dv.as_slice());
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            h = DMatrix::identity(16, 16);
            d = g.map(|v| -v);
            slope = dot(&d, &g);
            fresh = true;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let mut trial = x;
            for k in 0..16 {
                trial[k] += step * d[k];
            }
            if let Some((ft, gt)) = problem.evaluate(&trial) {
                if ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if fresh {
                break;
            }
            h = DMatrix::identity(16, 16);
            fresh = true;
            continue;
        };
        let mut s = [0.0; 16];
        let mut y = [0.0; 16];
        for k in 0..16 {
            s[k] = xn[k] - x[k];
            y[k] = gn[k] - g[k];
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            if fresh {
                // scale the initial inverse Hessian to the observed curvature
                h *= sy / dot(&y, &y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho)
                - (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            fresh = false;
        }
        x = xn;
        f = fnew;
        g = gn;
        iterations += 1;
        trace.push(-f * total);
        converged = norm(&g) < options.gradient_tol;
    }

    let t = unpack(&x);
    let tt = t.adjoint() * t;
    let scale = tt.trace().re;
    let rho = DensityMatrix::from_matrix4(&((tt + tt.adjoint()) * C64::new(0.5 / scale, 0.0)))?;
    Ok(TomographyResult {
        rho,
        log_likelihood: -f * total,
        iterations,
        converged,
        likelihood_trace: trace,
        scale,
        gradient_norm: norm(&g),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// Each replica redraws every count from Poisson(observed).
    Poisson,
    /// Replicas reuse the observed counts.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricStd {
    pub concurrence: f64,
    pub negativity: f64,
    pub fidelity: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub std: MetricStd,
    pub replicas: usize,
    pub unconverged: usize,
}

/// Parametric bootstrap of the metric report. Replica `r` draws from child
/// stream `r` of `seed`; replicas run in parallel.
pub fn bootstrap_errors(
    counts: &[f64],
    settings: &[MeasurementSetting],
    target: BellTarget,
    n_resamples: usize,
    seed: u64,
    resampling: Resampling,
    options: &MleOptions,
) -> Result<BootstrapResult> {
    if n_resamples < 2 {
        return Err(Error::DegenerateScan("bootstrap needs at least 2 resamples".into()));
    }
    check_counts(counts, settings)?;
    let replicas: Vec<(MetricReport, bool)> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let draw: Vec<f64> = match resampling {
                Resampling::Disabled => counts.to_vec(),
                Resampling::Poisson => {
                    let mut rng = child_rng(seed, r as u64);
                    counts.iter().map(|&n| sample_counts(1.0, n, &mut rng) as f64).collect()
                }
            };
            let fit = mle_reconstruct(&draw, settings, options)?;
            Ok((MetricReport::evaluate(&fit.rho, target)?, fit.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |k: usize| -> f64 {
        let mut v: Vec<f64> = replicas.iter().map(|(m, _)| m.values()[k]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        crate::measurement::sample_std(&v, mean)
    };
    Ok(BootstrapResult {
        std: MetricStd { concurrence: column(0), negativity: column(1), fidelity: column(2), purity: column(3) },
        replicas: replicas.len(),
        unconverged: replicas.iter().filter(|(_, c)| !c).count(),
    })
}

/// Draws one Poisson count per setting around `scale · tr(Pᵢρ)`.
pub fn simulate_counts(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    scale: f64,
    seed: u64,
    stream: u64,
    duration_s: f64,
) -> Result<Vec<CountRecord>> {
    let expected = predicted_counts(rho, settings, scale)?;
    let mut rng = child_rng(seed, stream);
    Ok(settings
        .iter()
        .zip(expected)
        .map(|(s, mu)| CountRecord {
            setting_label: s.label.clone(),
            arm1: s.arm1.label.clone(),
            arm2: s.arm2.label.clone(),
            counts: sample_counts(1.0, mu, &mut rng),
            duration_s,
            seed: Some((seed, stream)),
        })
        .collect())
}

pub fn write_counts_csv<W: Write>(records: &[CountRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts_csv<R: Read>(input: R) -> Result<Vec<CountRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Settings and counts from named-projector records.
pub fn records_to_problem(records: &[CountRecord]) -> Result<(Vec<MeasurementSetting>, Vec<f64>)> {
    let mut settings = Vec::with_capacity(records.len());
    let mut counts = Vec::with_capacity(records.len());
    for r in records {
        let a: NamedAxis = r.arm1.parse()?;
        let b: NamedAxis = r.arm2.parse()?;
        let mut s = MeasurementSetting::named(a, b);
        s.label = r.setting_label.clone();
        settings.push(s);
        counts.push(r.counts as f64);
    }
    Ok((settings, counts))
}
