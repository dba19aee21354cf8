//! Truncated Fourier-Galerkin discretization of `L_t(P)`.
//!
//! The basis is `phi_{l,q,t} = e_q exp(i(2 pi l + t)x)`, `|l| <= K`, which
//! satisfies the quasiperiodic conditions for every `l` and diagonalizes the
//! free operator with eigenvalues `(2 pi l + t)^n`. Basis element `(l, q)` sits
//! at index `(l + K) m + q`.

use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::assign::min_cost_assignment;
use crate::coeffs::{mean_matrix, AveragedMatrix, OperatorSpec};
use crate::linalg::{general_eig, hermitian_deviation, hermitian_eigh, i_pow, max_abs};
use crate::{CMatrix, CVector, Complex64, Error, Result, Tolerances};

/// Maps `t` into the fundamental interval `[-pi/2, 3pi/2]`.
///
/// Values already inside the closed interval are returned unchanged, so the
/// right endpoint `3pi/2` survives as a sweep endpoint.
pub fn reduce_quasimomentum(t: f64) -> f64 {
    let lo = -PI / 2.0;
    let hi = 1.5 * PI;
    if (lo..=hi).contains(&t) {
        t
    } else {
        lo + (t - lo).rem_euclid(2.0 * PI)
    }
}

/// Default truncation: `max(16, 2 |k|_max + 2 p_max)`.
pub fn default_truncation(k_abs_max: i64, p_max: usize) -> usize {
    16usize.max(2 * k_abs_max.unsigned_abs() as usize + 2 * p_max)
}

/// A fiber problem: operator, quasimomentum and harmonic truncation `K`.
#[derive(Clone, Debug)]
pub struct BlochProblem {
    spec: Arc<OperatorSpec>,
    t: f64,
    truncation: usize,
}

impl BlochProblem {
    pub fn new(spec: Arc<OperatorSpec>, t: f64, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidArgument("truncation K must be positive".into()));
        }
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("quasimomentum {t} is not finite")));
        }
        Ok(BlochProblem { spec, t: reduce_quasimomentum(t), truncation })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<OperatorSpec> {
        &self.spec
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.spec.m() * (2 * self.truncation + 1)
    }

    pub fn index(&self, l: i64, q: usize) -> usize {
        ((l + self.truncation as i64) as usize) * self.spec.m() + q
    }

    /// Inverse of [`BlochProblem::index`].
    pub fn harmonic(&self, idx: usize) -> (i64, usize) {
        let m = self.spec.m();
        ((idx / m) as i64 - self.truncation as i64, idx % m)
    }
}

/// Galerkin matrix on the harmonic window `l_lo..=l_hi` without any reduction of `t`.
///
/// Entry `((p,s),(l,q))` is
/// `th_l^n d_pl d_sq + th_l^(n-2) (P2)_{s,q,p-l} + sum_{nu>=3} (i th_l)^(n-nu) (P_nu)_{s,q,p-l}`
/// with `th_l = 2 pi l + t`.
pub fn assemble_window(spec: &OperatorSpec, t: f64, l_lo: i64, l_hi: i64) -> CMatrix {
    assert!(l_lo <= l_hi);
    let n = spec.n();
    let m = spec.m();
    let blocks = (l_hi - l_lo + 1) as usize;
    let mut a = CMatrix::zeros(m * blocks, m * blocks);
    for (bl, l) in (l_lo..=l_hi).enumerate() {
        let theta = 2.0 * PI * l as f64 + t;
        let diag = Complex64::new(theta.powi(n as i32), 0.0);
        for q in 0..m {
            a[(bl * m + q, bl * m + q)] += diag;
        }
        for (nu, series) in spec.coefficients() {
            let factor = if nu == 2 {
                Complex64::new(theta.powi(n as i32 - 2), 0.0)
            } else {
                i_pow(n - nu) * theta.powi((n - nu) as i32)
            };
            let reach = series.p_max() as i64;
            let p_lo = (l - reach).max(l_lo);
            let p_hi = (l + reach).min(l_hi);
            for p in p_lo..=p_hi {
                let bp = (p - l_lo) as usize;
                let c = series.coeff(p - l);
                for s in 0..m {
                    for q in 0..m {
                        a[(bp * m + s, bl * m + q)] += factor * c[(s, q)];
                    }
                }
            }
        }
    }
    a
}

/// The `m(2K+1)` square Galerkin matrix of the problem.
pub fn assemble_bloch_matrix(problem: &BlochProblem) -> CMatrix {
    let k = problem.truncation as i64;
    assemble_window(&problem.spec, problem.t, -k, k)
}

/// `true` when the Galerkin matrix of the operator is Hermitian (relative
/// deviation below `1e-9`) at a generic quasimomentum.
pub fn is_formally_self_adjoint(spec: &OperatorSpec) -> bool {
    let k = (2 * spec.p_max() + 2).max(4) as i64;
    let a = assemble_window(spec, 0.3719, -k, k);
    hermitian_deviation(&a) <= 1e-9 * max_abs(&a).max(1.0)
}

/// Eigen-decomposition of one fiber problem.
#[derive(Clone, Debug)]
pub struct BlochSolution {
    pub problem: BlochProblem,
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm coefficient vectors; entry `problem.index(l, q)` is the
    /// coefficient of `phi_{l,q,t}`.
    pub eigenvectors: Vec<CVector>,
    /// `max |A - A*|` of the assembled matrix.
    pub hermitian_residual: f64,
    /// `max |A|`.
    pub matrix_scale: f64,
    /// Whether the Hermitian solver was used (eigenvalues exactly real).
    pub hermitian: bool,
    pub warnings: Vec<String>,
}

impl BlochSolution {
    pub fn real_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.re).collect()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The `m` coefficients of eigenvector `idx` at harmonic `l`.
    pub fn block(&self, idx: usize, l: i64) -> CVector {
        let m = self.problem.spec.m();
        let start = self.problem.index(l, 0);
        self.eigenvectors[idx].rows(start, m).into_owned()
    }

    /// Largest `|A x - lam x| / max|A|` over all pairs.
    pub fn max_relative_residual(&self) -> f64 {
        let a = assemble_bloch_matrix(&self.problem);
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(lam, x)| (&a * x - x * *lam).norm() / self.matrix_scale.max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Dense eigensolve of the assembled matrix.
///
/// If `max|A - A*| <= tol.herm * max|A|` the Hermitian path is taken and the
/// eigenvalues are exactly real. Otherwise the general solver is used and a
/// warning is attached.
pub fn solve_bloch(problem: &BlochProblem, tol: &Tolerances) -> Result<BlochSolution> {
    let a = assemble_bloch_matrix(problem);
    let hermitian_residual = hermitian_deviation(&a);
    let matrix_scale = max_abs(&a);
    let hermitian = hermitian_residual <= tol.herm * matrix_scale.max(1.0);
    let mut warnings = Vec::new();
    let (eigenvalues, eigenvectors) = if hermitian {
        let (vals, vecs) = hermitian_eigh(&a)?;
        (vals.into_iter().map(|x| Complex64::new(x, 0.0)).collect(), vecs)
    } else {
        warnings.push(format!(
            "Galerkin matrix is not Hermitian (max |A - A*| = {hermitian_residual:.3e}); general eigensolver used"
        ));
        general_eig(&a)?
    };
    Ok(BlochSolution {
        problem: problem.clone(),
        eigenvalues,
        eigenvectors,
        hermitian_residual,
        matrix_scale,
        hermitian,
        warnings,
    })
}

/// Eigenvalues only, sorted by real part (cheaper; used for truncation checks).
pub fn bloch_eigenvalues(problem: &BlochProblem, tol: &Tolerances) -> Result<Vec<Complex64>> {
    let a = assemble_bloch_matrix(problem);
    let scale = max_abs(&a);
    let mut vals: Vec<Complex64> = if hermitian_deviation(&a) <= tol.herm * scale.max(1.0) {
        let herm: DMatrix<Complex64> = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().map(|&x| Complex64::new(x, 0.0)).collect()
    } else {
        crate::linalg::eigenvalues(&a)?
    };
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(vals)
}

/// The constant-coefficient predictor `(2 pi k + t)^n + mu (2 pi k + t)^(n-2)`.
pub fn predictor(n: usize, k: i64, t: f64, mu: f64) -> f64 {
    let theta = 2.0 * PI * k as f64 + t;
    theta.powi(n as i32) + mu * theta.powi(n as i32 - 2)
}

/// An eigenvalue assigned to the label `(k, j)`.
#[derive(Clone, Debug, Serialize)]
pub struct LabeledEigenvalue {
    pub k: i64,
    pub j: usize,
    /// Position in the solution's eigenvalue list.
    pub index: usize,
    pub value: Complex64,
    pub predictor: f64,
}

/// Assigns eigenvalues to labels `(k, j)`, `k` in `ks`, `j < m`, by a
/// minimal total `|lam - mu_{k,j}(t)|` matching.
///
/// Inside each `k` block the assigned eigenvalues are paired with the
/// predictors in value order, so `lam_{k,j}` is monotone with `mu_{k,j}`.
/// Without `avg` the free predictors (`mu_j = 0`) are used.
pub fn label_eigenvalues(
    eigenvalues: &[Complex64],
    n: usize,
    t: f64,
    avg_mu: &[f64],
    ks: &[i64],
) -> Vec<LabeledEigenvalue> {
    let m = avg_mu.len();
    let labels: Vec<(i64, usize, f64)> = ks
        .iter()
        .flat_map(|&k| (0..m).map(move |j| (k, j, predictor(n, k, t, avg_mu[j]))))
        .collect();
    if labels.is_empty() {
        return Vec::new();
    }
    assert!(labels.len() <= eigenvalues.len(), "more labels than eigenvalues");
    let cost: Vec<Vec<f64>> = labels
        .iter()
        .map(|&(_, _, mu)| eigenvalues.iter().map(|lam| (lam - mu).norm()).collect())
        .collect();
    let chosen = min_cost_assignment(&cost);

    let mut out = Vec::with_capacity(labels.len());
    for (b, &k) in ks.iter().enumerate() {
        let rows: Vec<usize> = (b * m..(b + 1) * m).collect();
        let mut preds: Vec<usize> = rows.clone();
        preds.sort_by(|&x, &y| labels[x].2.total_cmp(&labels[y].2));
        let mut cols: Vec<usize> = rows.iter().map(|&r| chosen[r]).collect();
        cols.sort_by(|&x, &y| {
            eigenvalues[x].re.total_cmp(&eigenvalues[y].re).then(eigenvalues[x].im.total_cmp(&eigenvalues[y].im))
        });
        let mut block: Vec<LabeledEigenvalue> = preds
            .iter()
            .zip(&cols)
            .map(|(&row, &col)| LabeledEigenvalue {
                k,
                j: labels[row].1,
                index: col,
                value: eigenvalues[col],
                predictor: labels[row].2,
            })
            .collect();
        block.sort_by_key(|e| e.j);
        out.extend(block);
    }
    out
}

/// Per-label comparison between truncations `K` and `2K`.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceEntry {
    pub k: i64,
    pub j: usize,
    pub value_k: Complex64,
    pub value_2k: Complex64,
    pub relative_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub truncation: usize,
    pub entries: Vec<ConvergenceEntry>,
    pub max_relative_deviation: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Compares the labeled eigenvalues of the window at truncations `K` and `2K`.
///
/// Deviations are relative, `|lam_K - lam_2K| / max(1, |lam_2K|)`, and the
/// check fails above `tol.conv`.
pub fn convergence_check(
    spec: &Arc<OperatorSpec>,
    t: f64,
    truncation: usize,
    k_window: RangeInclusive<i64>,
    tol: &Tolerances,
) -> Result<ConvergenceReport> {
    let k_max = k_window.start().abs().max(k_window.end().abs());
    if k_window.is_empty() || 2 * k_max > truncation as i64 {
        return Err(Error::WindowExceedsTruncation { truncation, k_max });
    }
    let mu: Vec<f64> = match mean_matrix(spec, tol) {
        Ok(avg) => avg.mu,
        Err(_) => vec![0.0; spec.m()],
    };
    let ks: Vec<i64> = k_window.collect();
    let coarse = BlochProblem::new(spec.clone(), t, truncation)?;
    let fine = BlochProblem::new(spec.clone(), t, 2 * truncation)?;
    let t_used = coarse.t();
    let lam_coarse = bloch_eigenvalues(&coarse, tol)?;
    let lam_fine = bloch_eigenvalues(&fine, tol)?;
    let a = label_eigenvalues(&lam_coarse, spec.n(), t_used, &mu, &ks);
    let b = label_eigenvalues(&lam_fine, spec.n(), t_used, &mu, &ks);
    let entries: Vec<ConvergenceEntry> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| ConvergenceEntry {
            k: x.k,
            j: x.j,
            value_k: x.value,
            value_2k: y.value,
            relative_deviation: (x.value - y.value).norm() / y.value.norm().max(1.0),
        })
        .collect();
    let max_relative_deviation = entries.iter().map(|e| e.relative_deviation).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        t: t_used,
        truncation,
        entries,
        max_relative_deviation,
        threshold: tol.conv,
        passed: max_relative_deviation <= tol.conv,
    })
}

/// Convenience: labels a solved fiber with the eigenvalues of its mean matrix.
pub fn label_solution(solution: &BlochSolution, avg: &AveragedMatrix, ks: &[i64]) -> Vec<LabeledEigenvalue> {
    label_eigenvalues(&solution.eigenvalues, solution.problem.spec().n(), solution.problem.t(), &avg.mu, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FourierMatrixSeries;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn c_matrix() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)])
    }

    fn constant_spec(n: usize) -> Arc<OperatorSpec> {
        Arc::new(OperatorSpec::free(n, 2).unwrap().with_coefficient(2, FourierMatrixSeries::constant(c_matrix()).unwrap()).unwrap())
    }

    fn cos_spec(n: usize, symmetrize: bool) -> Arc<OperatorSpec> {
        let p2 = FourierMatrixSeries::from_harmonics(1, None, [(1, CMatrix::from_element(1, 1, c(1.0, 0.0))), (-1, CMatrix::from_element(1, 1, c(1.0, 0.0)))]).unwrap();
        let spec = OperatorSpec::free(n, 1).unwrap().with_coefficient(2, p2).unwrap();
        Arc::new(if symmetrize { spec.with_symmetrized_principal_term().unwrap() } else { spec })
    }

    #[test]
    fn quasimomentum_reduction() {
        assert_eq!(reduce_quasimomentum(0.3), 0.3);
        assert_eq!(reduce_quasimomentum(1.5 * PI), 1.5 * PI);
        assert!((reduce_quasimomentum(0.3 + 2.0 * PI) - 0.3).abs() < 1e-14);
        assert!((reduce_quasimomentum(-PI) - PI).abs() < 1e-14);
    }

    #[test]
    fn free_matrix_is_diagonal() {
        let spec = Arc::new(OperatorSpec::free(3, 2).unwrap());
        let p = BlochProblem::new(spec, 0.7, 5).unwrap();
        let a = assemble_bloch_matrix(&p);
        assert_eq!(a.nrows(), 2 * 11);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if i != j {
                    assert_eq!(a[(i, j)], c(0.0, 0.0));
                }
            }
            let (l, _) = p.harmonic(i);
            let want = (2.0 * PI * l as f64 + 0.7).powi(3);
            assert!((a[(i, i)].re - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn constant_p2_blocks_follow_predictor() {
        let spec = constant_spec(3);
        let p = BlochProblem::new(spec, 0.5, 4).unwrap();
        let a = assemble_bloch_matrix(&p);
        for l in -4i64..=4 {
            let i0 = p.index(l, 0);
            let block = a.view((i0, i0), (2, 2)).into_owned();
            for other in -4i64..=4 {
                if other != l {
                    let j0 = p.index(other, 0);
                    assert!(a.view((i0, j0), (2, 2)).iter().all(|z| z.norm() == 0.0));
                }
            }
            let (vals, _) = hermitian_eigh(&block).unwrap();
            let mut want = [predictor(3, l, 0.5, 0.0), predictor(3, l, 0.5, 2.0)];
            want.sort_by(f64::total_cmp);
            for j in 0..2 {
                assert!((vals[j] - want[j]).abs() <= 1e-12 * want[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_harmonic_p3_entry() {
        let p3 = FourierMatrixSeries::from_harmonics(1, None, [(1, CMatrix::from_element(1, 1, c(1.0, 0.0)))]).unwrap();
        let spec = Arc::new(OperatorSpec::free(3, 1).unwrap().with_coefficient(3, p3).unwrap());
        let p = BlochProblem::new(spec, 0.0, 2).unwrap();
        let a = assemble_bloch_matrix(&p);
        let row = p.index(1, 0);
        let col = p.index(0, 0);
        assert!((a[(row, col)] - c(1.0, 0.0)).norm() < 1e-15);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if i != j && (i, j) != (row, col) {
                    let (pi, _) = p.harmonic(i);
                    let (pj, _) = p.harmonic(j);
                    if pi - pj == 1 {
                        // (i theta_l)^0 = 1 on every p = l + 1 entry.
                        assert!((a[(i, j)] - c(1.0, 0.0)).norm() < 1e-15);
                    } else {
                        assert_eq!(a[(i, j)], c(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn free_solve_has_double_eigenvalues() {
        let spec = Arc::new(OperatorSpec::free(3, 2).unwrap());
        let sol = solve_bloch(&BlochProblem::new(spec, 0.7, 8).unwrap(), &Tolerances::default()).unwrap();
        assert!(sol.hermitian);
        let mut want: Vec<f64> = (-8i64..=8).flat_map(|l| {
            let v = (2.0 * PI * l as f64 + 0.7).powi(3);
            [v, v]
        }).collect();
        want.sort_by(f64::total_cmp);
        for (got, want) in sol.real_eigenvalues().iter().zip(&want) {
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
        for x in &sol.eigenvectors {
            assert!((x.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_p2_solve_n4() {
        let sol = solve_bloch(&BlochProblem::new(constant_spec(4), 1.0, 6).unwrap(), &Tolerances::default()).unwrap();
        let mut want: Vec<f64> = (-6i64..=6).flat_map(|l| [predictor(4, l, 1.0, 0.0), predictor(4, l, 1.0, 2.0)]).collect();
        want.sort_by(f64::total_cmp);
        for (got, want) in sol.real_eigenvalues().iter().zip(&want) {
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        }
        assert!(sol.max_relative_residual() <= 1e-8);
    }

    #[test]
    fn unsymmetrized_odd_order_uses_general_path() {
        let sol = solve_bloch(&BlochProblem::new(cos_spec(3, false), 0.3, 6).unwrap(), &Tolerances::default()).unwrap();
        assert!(!sol.hermitian);
        assert_eq!(sol.warnings.len(), 1);
        assert!(sol.max_relative_residual() <= 1e-8);
        assert!(!is_formally_self_adjoint(&cos_spec(3, false)));
        assert!(is_formally_self_adjoint(&cos_spec(3, true)));
    }

    #[test]
    fn self_convergence_at_doubled_truncation() {
        let tol = Tolerances::default();
        for sym in [false, true] {
            let spec = cos_spec(3, sym);
            let a = bloch_eigenvalues(&BlochProblem::new(spec.clone(), 0.3, 16).unwrap(), &tol).unwrap();
            let b = bloch_eigenvalues(&BlochProblem::new(spec, 0.3, 32).unwrap(), &tol).unwrap();
            // n odd: sorted index i at K maps to i + m K at 2K; central 11 indices.
            let centre = 16;
            for i in centre - 5..=centre + 5 {
                let d = (a[i] - b[i + 16]).norm();
                assert!(d <= 1e-6 * b[i + 16].norm().max(1.0), "sym={sym} i={i} d={d:e}");
            }
        }
    }

    #[test]
    fn convergence_examples() {
        let tol = Tolerances::default();
        let free = Arc::new(OperatorSpec::free(3, 2).unwrap());
        let r = convergence_check(&free, 0.4, 16, -5..=5, &tol).unwrap();
        assert_eq!(r.max_relative_deviation, 0.0);
        let r = convergence_check(&constant_spec(3), 0.4, 16, -5..=5, &tol).unwrap();
        assert!(r.max_relative_deviation < 1e-13);
        let r = convergence_check(&cos_spec(3, true), 0.4, 16, -5..=5, &tol).unwrap();
        assert!(r.passed && r.max_relative_deviation < 1e-8, "{}", r.max_relative_deviation);
        assert!(matches!(
            convergence_check(&free, 0.4, 8, -5..=5, &tol),
            Err(Error::WindowExceedsTruncation { .. })
        ));
    }

    #[test]
    fn gauge_shift_relabels_harmonics() {
        let spec = cos_spec(4, false);
        let t = 0.9;
        let shifted = assemble_window(&spec, t + 2.0 * PI, -4, 4);
        let reindexed = assemble_window(&spec, t, -3, 5);
        assert!((shifted - &reindexed).iter().all(|z| z.norm() <= 1e-9 * max_abs(&reindexed)));
        let spec = cos_spec(4, true);
        let tol = Tolerances::default();
        let a = bloch_eigenvalues(&BlochProblem::new(spec.clone(), t, 12).unwrap(), &tol).unwrap();
        let raw = assemble_window(&spec, t + 2.0 * PI, -12, 12);
        let mut b: Vec<f64> = raw.symmetric_eigenvalues().iter().copied().collect();
        b.sort_by(f64::total_cmp);
        // n even: the lowest eigenvalues are the converged ones in both windows.
        for i in 0..8 {
            assert!((a[i].re - b[i]).abs() <= 1e-9 * b[i].abs().max(1.0));
        }
    }
}
