//! Closed-form predictors, the case partition of the quasimomentum interval,
//! the exceptional sets `B(alpha_j, k, mu_j)` and measured residuals.

use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::Serialize;

use crate::coeffs::{b_k_bound, mean_matrix, AveragedMatrix, OperatorSpec};
use crate::galerkin::{
    default_truncation, is_formally_self_adjoint, label_solution, predictor, solve_bloch, BlochProblem, BlochSolution,
};
use crate::linalg::neg_i_pow;
use crate::{Complex64, Error, Result, Tolerances};

/// `(2 pi k + t)^n + mu_j (2 pi k + t)^(n-2)`.
pub fn mu_pred(k: i64, j: usize, t: f64, avg: &AveragedMatrix, n: usize) -> f64 {
    predictor(n, k, t, avg.mu[j])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CaseId {
    Case1a,
    Case1b,
    Case2,
    Case3,
}

impl CaseId {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::Case1a => "Case1a",
            CaseId::Case1b => "Case1b",
            CaseId::Case2 => "Case2",
            CaseId::Case3 => "Case3",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseContext {
    pub n: usize,
    pub m: usize,
    pub k: i64,
    pub t: f64,
    pub case_id: CaseId,
    pub a_set: Vec<i64>,
    pub in_t: bool,
}

/// `|t| < 1/ln|k|`.
pub fn near_zero(k: i64, t: f64) -> bool {
    t.abs() < 1.0 / (k.unsigned_abs() as f64).ln()
}

/// `|t - pi| < 1/ln|k|`.
pub fn near_pi(k: i64, t: f64) -> bool {
    (t - PI).abs() < 1.0 / (k.unsigned_abs() as f64).ln()
}

/// `t` in `T(k)`: the fundamental interval minus both `1/ln|k|` neighbourhoods.
pub fn in_t_set(k: i64, t: f64) -> bool {
    !near_zero(k, t) && !near_pi(k, t)
}

/// Classifies `(n, k, t)`; requires `|k| >= 2`.
pub fn case_context(n: usize, m: usize, k: i64, t: f64) -> Result<CaseContext> {
    if k.abs() < 2 {
        return Err(Error::InvalidArgument(format!("case partition needs |k| >= 2, got k = {k}")));
    }
    let in_t = in_t_set(k, t);
    let (case_id, a_set) = if n % 2 == 1 {
        (CaseId::Case1a, vec![k])
    } else if in_t {
        (CaseId::Case1b, vec![k])
    } else if near_zero(k, t) {
        (CaseId::Case2, vec![k, -k])
    } else {
        (CaseId::Case3, vec![k, -k - 1])
    };
    Ok(CaseContext { n, m, k, t, case_id, a_set, in_t })
}

/// Open interval `(lo, hi)`.
pub type Interval = (f64, f64);

fn check_alpha(avg: &AveragedMatrix, j: usize, alpha: f64, tol: &Tolerances) -> Result<()> {
    if j >= avg.m() {
        return Err(Error::InvalidArgument(format!("index j = {j} out of range for m = {}", avg.m())));
    }
    if !avg.simple_flags[j] {
        return Err(Error::Hypothesis(format!("mu_{j} = {} is not simple", avg.mu[j])));
    }
    let gap = (0..avg.m())
        .filter(|&q| q != j)
        .map(|q| (avg.mu[q] - avg.mu[j]).abs())
        .fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0 && alpha < gap) || gap <= tol.sep {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside the admissible range (0, {gap})")));
    }
    Ok(())
}

/// The `2m` intervals making up `B(alpha_j, k, mu_j)`: `m` around 0 and `m` around `pi`.
pub fn b_set_intervals(alpha: f64, k: i64, avg: &AveragedMatrix, j: usize, n: usize, tol: &Tolerances) -> Result<Vec<Interval>> {
    if k == 0 || 2 * k + n as i64 - 1 == 0 {
        return Err(Error::InvalidArgument(format!("B-set undefined for k = {k}")));
    }
    check_alpha(avg, j, alpha, tol)?;
    let nf = n as f64;
    let d0 = 4.0 * nf * PI * k as f64;
    let dpi = 2.0 * nf * PI * (2 * k + n as i64 - 1) as f64;
    let mut out = Vec::with_capacity(2 * avg.m());
    for s in 0..avg.m() {
        let shift = avg.mu[s] - avg.mu[j];
        let (a, b) = ((shift - alpha) / d0, (shift + alpha) / d0);
        out.push((a.min(b), a.max(b)));
    }
    for s in 0..avg.m() {
        let shift = avg.mu[s] - avg.mu[j];
        let (a, b) = (PI + (shift - alpha) / dpi, PI + (shift + alpha) / dpi);
        out.push((a.min(b), a.max(b)));
    }
    Ok(out)
}

pub fn b_set_membership(t: f64, alpha: f64, k: i64, avg: &AveragedMatrix, j: usize, n: usize, tol: &Tolerances) -> Result<bool> {
    Ok(b_set_intervals(alpha, k, avg, j, n, tol)?.iter().any(|&(a, b)| a < t && t < b))
}

/// Lebesgue measure of the union of the B-set intervals inside `[-pi/2, 3pi/2)`.
pub fn b_set_measure(alpha: f64, k: i64, avg: &AveragedMatrix, j: usize, n: usize, tol: &Tolerances) -> Result<f64> {
    let mut iv: Vec<Interval> = b_set_intervals(alpha, k, avg, j, n, tol)?
        .into_iter()
        .map(|(a, b)| (a.max(-PI / 2.0), b.min(1.5 * PI)))
        .filter(|(a, b)| b > a)
        .collect();
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<Interval> = None;
    for (a, b) in iv {
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    Ok(total)
}

/// `2 m alpha / (2 n pi |2k+n-1|) + 2 m alpha / (4 n pi |k|)`.
pub fn b_set_measure_bound(alpha: f64, k: i64, m: usize, n: usize) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    2.0 * mf * alpha / (2.0 * nf * PI * ((2 * k + n as i64 - 1).abs() as f64))
        + 2.0 * mf * alpha / (4.0 * nf * PI * k.abs() as f64)
}

/// `|k|^(n-3) ln|k|`, the eigenvalue error scale.
pub fn residual_scale(k: i64, n: usize) -> f64 {
    let ka = k.unsigned_abs() as f64;
    ka.powi(n as i32 - 3) * ka.ln()
}

/// `(delta_k, eps_k) = (c_delta s_k, c_eps s_k + |k|^(n-2) b_k)` with
/// `s_k = |k|^(n-3) ln|k|`.
pub fn error_scales(k: i64, n: usize, bk: f64, c_delta: f64, c_eps: f64) -> (f64, f64) {
    let s = residual_scale(k, n);
    let ka = k.unsigned_abs() as f64;
    (c_delta * s, c_eps * s + ka.powi(n as i32 - 2) * bk)
}

/// Least-squares constant `c` minimizing `sum (r_i - c s_i)^2`.
pub fn fit_constant(residuals: &[f64], scales: &[f64]) -> f64 {
    let num: f64 = residuals.iter().zip(scales).map(|(r, s)| r * s).sum();
    let den: f64 = scales.iter().map(|s| s * s).sum();
    if den > 0.0 { num / den } else { 0.0 }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticDiagnostics {
    pub k: i64,
    pub j: usize,
    pub t: f64,
    pub lambda_computed: f64,
    pub mu_pred: f64,
    pub residual: f64,
    pub normalized_residual: f64,
    pub eigfn_deviation: f64,
    pub normalized_eigfn_dev: f64,
    pub bk_term: f64,
    pub case_id: CaseId,
    /// Another predictor lies within `2 delta_k` of this one.
    pub ambiguous: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FittedConstants {
    /// Fit of `residual ~ c_delta |k|^(n-3) ln|k|`.
    pub c_delta: f64,
    /// Fit of `eigfn_deviation ~ c_eig (ln|k|/|k| + b_k)`.
    pub c_eigfn: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticsReport {
    pub t: f64,
    pub truncation: usize,
    pub diagnostics: Vec<AsymptoticDiagnostics>,
    pub fitted: FittedConstants,
    pub warnings: Vec<String>,
}

/// Compares Galerkin eigenvalues with the predictors over `k_range`.
///
/// Indices with `|k| < 2` are skipped. `truncation` defaults to
/// [`default_truncation`] and must be at least `2 max|k|`.
pub fn verify_eigenvalue_asymptotics(
    spec: &Arc<OperatorSpec>,
    t: f64,
    k_range: RangeInclusive<i64>,
    truncation: Option<usize>,
    tol: &Tolerances,
) -> Result<AsymptoticsReport> {
    if !is_formally_self_adjoint(spec) {
        return Err(Error::Hypothesis("asymptotics require a formally self-adjoint operator".into()));
    }
    let avg = mean_matrix(spec, tol)?;
    let n = spec.n();
    let ks: Vec<i64> = k_range.filter(|k| k.abs() >= 2).collect();
    let k_max = ks.iter().map(|k| k.abs()).max().unwrap_or(0);
    let truncation = truncation.unwrap_or_else(|| default_truncation(k_max, spec.p_max()));
    if 2 * k_max > truncation as i64 {
        return Err(Error::WindowExceedsTruncation { truncation, k_max });
    }
    let problem = BlochProblem::new(spec.clone(), t, truncation)?;
    let t = problem.t();
    if n % 2 == 0 && (t.abs() <= tol.sep || (t - PI).abs() <= tol.sep) {
        return Err(Error::Hypothesis(format!("n even requires t away from 0 and pi, got t = {t}")));
    }
    let solution = solve_bloch(&problem, tol)?;
    let mut warnings = solution.warnings.clone();
    let labels = label_solution(&solution, &avg, &ks);

    let mut rows = Vec::with_capacity(labels.len());
    for lab in &labels {
        let ctx = case_context(n, spec.m(), lab.k, t)?;
        let residual = (lab.value.re - lab.predictor).abs();
        let bk = b_k_bound(spec, lab.k);
        let (eig_raw, eig_norm) = eigenfunction_deviation(&solution, &avg, lab.index, lab.k, lab.j, bk, tol)?;
        rows.push(AsymptoticDiagnostics {
            k: lab.k,
            j: lab.j,
            t,
            lambda_computed: lab.value.re,
            mu_pred: lab.predictor,
            residual,
            normalized_residual: residual / residual_scale(lab.k, n),
            eigfn_deviation: eig_raw,
            normalized_eigfn_dev: eig_norm,
            bk_term: bk,
            case_id: ctx.case_id,
            ambiguous: false,
        });
    }
    let c_delta = fit_constant(
        &rows.iter().map(|r| r.residual).collect::<Vec<_>>(),
        &rows.iter().map(|r| residual_scale(r.k, n)).collect::<Vec<_>>(),
    );
    let c_eigfn = fit_constant(
        &rows.iter().map(|r| r.eigfn_deviation).collect::<Vec<_>>(),
        &rows.iter().map(|r| eigfn_scale(r.k, r.bk_term)).collect::<Vec<_>>(),
    );
    let preds: Vec<f64> = rows.iter().map(|r| r.mu_pred).collect();
    for (i, row) in rows.iter_mut().enumerate() {
        let (delta, _) = error_scales(row.k, n, row.bk_term, c_delta, 0.0);
        let gap = preds
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != i)
            .map(|(_, p)| (p - row.mu_pred).abs())
            .fold(f64::INFINITY, f64::min);
        row.ambiguous = gap < 2.0 * delta;
    }
    let ambiguous = rows.iter().filter(|r| r.ambiguous).count();
    if ambiguous > 0 {
        warnings.push(format!("{ambiguous} labels have a neighbouring predictor within 2 delta_k"));
    }
    Ok(AsymptoticsReport { t, truncation, diagnostics: rows, fitted: FittedConstants { c_delta, c_eigfn }, warnings })
}

/// `ln|k|/|k| + b_k`.
pub fn eigfn_scale(k: i64, bk: f64) -> f64 {
    let ka = k.unsigned_abs() as f64;
    ka.ln() / ka + bk
}

fn eigenfunction_deviation(
    solution: &BlochSolution,
    avg: &AveragedMatrix,
    index: usize,
    k: i64,
    j: usize,
    bk: f64,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let raw = eigenvector_deviation(solution, avg, index, k, j, tol)?;
    Ok((raw, raw / eigfn_scale(k, bk)))
}

/// Distance from eigenvector `index` to its rank-one predictor `v_j` at harmonic `k`.
///
/// The eigenvector is rotated so that `<x_k, v_j>` is real positive. For a
/// degenerate `mu_j` the distance to the span of the cluster's vectors at
/// harmonic `k` is returned instead.
pub fn eigenvector_deviation(
    solution: &BlochSolution,
    avg: &AveragedMatrix,
    index: usize,
    k: i64,
    j: usize,
    tol: &Tolerances,
) -> Result<f64> {
    let problem = &solution.problem;
    if index >= solution.len() || k.unsigned_abs() as usize > problem.truncation() || j >= avg.m() {
        return Err(Error::InvalidArgument(format!("label (k = {k}, j = {j}) not present in the solution")));
    }
    let x = &solution.eigenvectors[index];
    let block = solution.block(index, k);
    let cluster = avg.cluster(j, tol.sep);
    if cluster.len() == 1 {
        let inner = avg.v[j].dotc(&block);
        let phase = if inner.norm() > 0.0 { inner.conj() / inner.norm() } else { Complex64::new(1.0, 0.0) };
        let mut diff = x * phase;
        let start = problem.index(k, 0);
        for q in 0..avg.m() {
            diff[start + q] -= avg.v[j][q];
        }
        Ok(diff.norm())
    } else {
        let captured: f64 = cluster.iter().map(|&q| avg.v[q].dotc(&block).norm_sqr()).sum();
        Ok((x.norm_squared() - captured).max(0.0).sqrt())
    }
}

/// Eigenfunction check for a single label; returns `(raw, normalized)`.
pub fn verify_eigenfunction_asymptotics(
    solution: &BlochSolution,
    spec: &OperatorSpec,
    avg: &AveragedMatrix,
    k: i64,
    j: usize,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    if k.abs() < 2 {
        return Err(Error::InvalidArgument(format!("eigenfunction diagnostics need |k| >= 2, got {k}")));
    }
    if k.unsigned_abs() as usize > solution.problem.truncation() {
        return Err(Error::InvalidArgument(format!("label (k = {k}, j = {j}) not present in the solution")));
    }
    let labels = label_solution(solution, avg, &[k]);
    let lab = labels
        .iter()
        .find(|l| l.j == j)
        .ok_or_else(|| Error::InvalidArgument(format!("label (k = {k}, j = {j}) not present in the solution")))?;
    eigenfunction_deviation(solution, avg, lab.index, k, j, b_k_bound(spec, k), tol)
}

/// `(P Psi^(d))_p = sum_l P_{p-l} (i theta_l)^d x_l` for one coefficient series.
fn apply_term(
    solution: &BlochSolution,
    x: &crate::CVector,
    series: &crate::coeffs::FourierMatrixSeries,
    subtract_mean: bool,
    d: usize,
    p: i64,
) -> crate::CVector {
    let problem = &solution.problem;
    let m = problem.spec().m();
    let kk = problem.truncation() as i64;
    let t = problem.t();
    let reach = series.p_max() as i64;
    let mut out = crate::CVector::zeros(m);
    for l in (p - reach).max(-kk)..=(p + reach).min(kk) {
        let theta = 2.0 * PI * l as f64 + t;
        let deriv = Complex64::new(0.0, theta).powu(d as u32);
        let mut coeff = series.coeff(p - l).clone();
        if subtract_mean && p == l {
            coeff.fill(Complex64::new(0.0, 0.0));
        }
        let start = problem.index(l, 0);
        out += coeff * x.rows(start, m) * deriv;
    }
    out
}

fn identity_sides(
    solution: &BlochSolution,
    spec: &OperatorSpec,
    index: usize,
    p: i64,
    subtract_mean: bool,
) -> crate::CVector {
    let x = &solution.eigenvectors[index];
    let n = spec.n();
    let m = spec.m();
    let mut rhs = crate::CVector::zeros(m);
    for (nu, series) in spec.coefficients() {
        let term = apply_term(solution, x, series, subtract_mean && nu == 2, n - nu, p);
        rhs += if nu == 2 { term * neg_i_pow(n - 2) } else { term };
    }
    rhs
}

fn check_label(solution: &BlochSolution, index: usize, p: i64) -> Result<()> {
    if index >= solution.len() || p.unsigned_abs() as usize > solution.problem.truncation() {
        return Err(Error::InvalidArgument(format!("index {index} or harmonic {p} outside the solution")));
    }
    Ok(())
}

/// `|LHS - RHS|` of
/// `(lam - mu_{p,s}) (Psi, Phi_{p,s}) = (-i)^(n-2) ((P2 - C) Psi^(n-2), Phi_{p,s}) + sum_{nu>=3} (P_nu Psi^(n-nu), Phi_{p,s})`
/// with `Phi_{p,s} = v_s e^{i(2 pi p + t)x}`, evaluated from Fourier data
/// for eigenpair `index` of the solution.
pub fn averaged_basis_identity_residual(
    solution: &BlochSolution,
    spec: &OperatorSpec,
    avg: &AveragedMatrix,
    index: usize,
    p: i64,
    s: usize,
) -> Result<f64> {
    check_label(solution, index, p)?;
    let lam = solution.eigenvalues[index];
    let t = solution.problem.t();
    let block = solution.block(index, p);
    let lhs = (lam - predictor(spec.n(), p, t, avg.mu[s])) * avg.v[s].dotc(&block);
    let rhs = avg.v[s].dotc(&identity_sides(solution, spec, index, p, true));
    Ok((lhs - rhs).norm())
}

/// Same identity against the free basis `phi_{p,s} = e_s e^{i(2 pi p + t)x}`
/// with the full `P2`.
pub fn free_basis_identity_residual(solution: &BlochSolution, spec: &OperatorSpec, index: usize, p: i64, s: usize) -> Result<f64> {
    check_label(solution, index, p)?;
    let lam = solution.eigenvalues[index];
    let theta = 2.0 * PI * p as f64 + solution.problem.t();
    let block = solution.block(index, p);
    let lhs = (lam - theta.powi(spec.n() as i32)) * block[s];
    let rhs = identity_sides(solution, spec, index, p, false)[s];
    Ok((lhs - rhs).norm())
}
