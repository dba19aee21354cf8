//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::{CMatrix, CVector, Error, Result};

const MAX_ITER: usize = 10_000;

/// `i^p` without floating-point powering.
pub fn i_pow(p: usize) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `(-i)^p`.
pub fn neg_i_pow(p: usize) -> Complex64 {
    i_pow(p).conj()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise deviation `max |a - a*|`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    assert!(a.is_square());
    let n = a.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Multiplies `v` by a unit phase so that its largest-magnitude entry is real
/// and positive. Ties resolve to the lowest index (within a relative 1e-12).
pub fn fix_phase(v: &mut CVector) {
    let max = v.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .expect("non-empty vector");
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues are ascending; eigenvectors are orthonormal columns, each
/// phase-fixed with [`fix_phase`]. Only the Hermitian part of `a` is used.
pub fn hermitian_eigh(a: &CMatrix) -> Result<(Vec<f64>, Vec<CVector>)> {
    let n = a.nrows();
    let herm = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(herm, f64::EPSILON, MAX_ITER).ok_or(Error::EigenSolver {
        dim: n,
        norm: max_abs(a),
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: CVector = eig.eigenvectors.column(i).into_owned();
            fix_phase(&mut v);
            v
        })
        .collect();
    Ok((values, vectors))
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, MAX_ITER).ok_or(Error::EigenSolver {
        dim: n,
        norm: max_abs(a),
    })?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigenpairs of a general complex matrix.
///
/// Eigenvectors come from back-substitution on the triangular Schur factor,
/// are normalized to unit Euclidean norm and phase-fixed. Pairs are sorted
/// by real part, then imaginary part.
pub fn general_eig(a: &CMatrix) -> Result<(Vec<Complex64>, Vec<CVector>)> {
    let n = a.nrows();
    let norm = max_abs(a);
    let schur = Schur::try_new(a.clone(), f64::EPSILON, MAX_ITER)
        .ok_or(Error::EigenSolver { dim: n, norm })?;
    let (q, t) = schur.unpack();
    let small = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t[(k, k)];
        let mut y = CVector::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < small {
                d = Complex64::new(small, 0.0);
            }
            y[i] = -s / d;
        }
        let mut x = &q * y;
        let nrm = x.norm();
        x /= Complex64::new(nrm, 0.0);
        fix_phase(&mut x);
        pairs.push((lam, x));
    }
    pairs.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    Ok(pairs.into_iter().unzip())
}
