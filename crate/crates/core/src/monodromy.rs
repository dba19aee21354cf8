//! Discretization-free route: the monodromy matrix of the companion system
//! and its characteristic polynomial in `u = e^{it}`.
//!
//! The state vector stacks `(y, y', ..., y^(n-1))` so entry `d m + c` holds
//! derivative `d` of component `c`. The top block solves
//! `y^(n) = i^n (lam y - (-i)^(n-2) P_2 y^(n-2) - sum_{nu>=3} P_nu y^(n-nu))`.
//!
//! Integration runs in the scaled variables `w_d = y^(d) / s^d` with
//! `s = max(1, |lam|^(1/n))`, which keeps the system matrix of order `s` in
//! every block. The unscaled matrix is recovered as `D M_s D^-1`.

use std::f64::consts::PI;

use nalgebra::linalg::Hessenberg;
use serde::Serialize;

use crate::coeffs::OperatorSpec;
use crate::galerkin::reduce_quasimomentum;
use crate::linalg::{eigenvalues, i_pow, neg_i_pow};
use crate::{CMatrix, Complex64, Error, Result, Tolerances};

/// Default fixed step count.
pub const DEFAULT_STEPS: usize = 2048;
const MAX_DOUBLINGS: usize = 6;

/// `x`-dependent system matrix `B(x)` of `z' = B(x) z`.
#[derive(Clone, Debug)]
pub struct CompanionSystem<'a> {
    spec: &'a OperatorSpec,
    lam: Complex64,
    scale: f64,
}

impl<'a> CompanionSystem<'a> {
    pub fn lam(&self) -> Complex64 {
        self.lam
    }

    /// The variable scaling `s` (1 for the unscaled system).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.spec.n() * self.spec.m()
    }

    /// Evaluates `B(x)`.
    pub fn at(&self, x: f64) -> CMatrix {
        let n = self.spec.n();
        let m = self.spec.m();
        let s = self.scale;
        let mut b = CMatrix::zeros(n * m, n * m);
        for d in 0..n - 1 {
            for c in 0..m {
                b[(d * m + c, (d + 1) * m + c)] = Complex64::new(s, 0.0);
            }
        }
        let top = (n - 1) * m;
        let lead = i_pow(n) / s.powi(n as i32 - 1);
        for c in 0..m {
            b[(top + c, c)] += lead * self.lam;
        }
        for (nu, series) in self.spec.coefficients() {
            let p = series.eval(x);
            let d = n - nu;
            let factor = if nu == 2 { -lead * neg_i_pow(n - 2) } else { -lead } * s.powi(d as i32);
            for r in 0..m {
                for c in 0..m {
                    b[(top + r, d * m + c)] += factor * p[(r, c)];
                }
            }
        }
        b
    }
}

/// The companion system of the operator at spectral parameter `lam`, unscaled.
pub fn companion_system(spec: &OperatorSpec, lam: Complex64) -> CompanionSystem<'_> {
    CompanionSystem { spec, lam, scale: 1.0 }
}

fn scaled_companion_system(spec: &OperatorSpec, lam: Complex64) -> CompanionSystem<'_> {
    let scale = lam.norm().powf(1.0 / spec.n() as f64).max(1.0);
    CompanionSystem { spec, lam, scale }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    /// Step-doubling estimate `|M_N - M_{N/2}| / (15 |M_N|)`.
    pub richardson_error: f64,
    /// `sum_k ln|det R_k|` over the per-step propagators; zero for an exact
    /// integrator since the companion matrix is traceless.
    pub log_abs_det: f64,
}

#[derive(Clone, Debug)]
pub struct MonodromyMatrix {
    pub lam: Complex64,
    /// Value at `x = 1` of the fundamental solution in the original variables.
    pub mat: CMatrix,
    /// Same matrix in scaled variables; similar to `mat`.
    pub scaled: CMatrix,
    pub scale: f64,
    pub stats: IntegratorStats,
}

/// Products of RK4 step propagators from identity data; returns the matrix
/// and the accumulated `ln|det|`.
fn integrate(system: &CompanionSystem<'_>, steps: usize) -> (CMatrix, f64) {
    integrate_with(system.dim(), steps, |x| system.at(x))
}

/// Same as [`integrate`] for `z' = b(x) z` with an arbitrary system matrix.
fn integrate_with(dim: usize, steps: usize, b: impl Fn(f64) -> CMatrix) -> (CMatrix, f64) {
    let h = 1.0 / steps as f64;
    let eye = CMatrix::identity(dim, dim);
    let hc = |x: f64| Complex64::new(x, 0.0);
    let mut y = eye.clone();
    let mut log_det = 0.0;
    let mut b_start = b(0.0);
    for k in 0..steps {
        let x = k as f64 * h;
        let b_mid = b(x + 0.5 * h);
        let b_end = b(x + h);
        let k1 = b_start.clone();
        let k2 = &b_mid * (&eye + &k1 * hc(0.5 * h));
        let k3 = &b_mid * (&eye + &k2 * hc(0.5 * h));
        let k4 = &b_end * (&eye + &k3 * hc(h));
        let r = &eye + (k1 + (k2 + k3) * hc(2.0) + k4) * hc(h / 6.0);
        log_det += r.determinant().norm().ln();
        y = r * y;
        b_start = b_end;
    }
    (y, log_det)
}

/// Monodromy matrix with a fixed step count (`steps >= 64`, even).
pub fn monodromy_matrix(spec: &OperatorSpec, lam: Complex64, steps: usize, tol: &Tolerances) -> Result<MonodromyMatrix> {
    if steps < 64 || steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!("steps must be even and at least 64, got {steps}")));
    }
    let system = scaled_companion_system(spec, lam);
    let (scaled, log_abs_det) = integrate(&system, steps);
    if log_abs_det.abs() > tol.wr || !log_abs_det.is_finite() {
        return Err(Error::IntegrationInaccurate { steps, log_det: log_abs_det });
    }
    let (coarse, _) = integrate(&system, steps / 2);
    let richardson_error = (&scaled - coarse).norm() / (15.0 * scaled.norm());
    let n = spec.n();
    let m = spec.m();
    let s = system.scale;
    let mut mat = scaled.clone();
    for i in 0..n * m {
        for j in 0..n * m {
            let (di, dj) = ((i / m) as i32, (j / m) as i32);
            mat[(i, j)] *= s.powi(di - dj);
        }
    }
    Ok(MonodromyMatrix {
        lam,
        mat,
        scaled,
        scale: s,
        stats: IntegratorStats { steps, richardson_error, log_abs_det },
    })
}

/// Starting step count for `lam`: at least [`DEFAULT_STEPS`] and 64 steps per
/// unit of the scaled system norm.
pub fn default_steps(spec: &OperatorSpec, lam: Complex64) -> usize {
    let s = lam.norm().powf(1.0 / spec.n() as f64).max(1.0);
    let coeff = spec.coefficients().map(|(_, c)| c.max_entry() * (2 * c.p_max() + 1) as f64).sum::<f64>();
    let want = (64.0 * (s + coeff.powf(1.0 / 2.0))).ceil() as usize;
    want.max(DEFAULT_STEPS).next_power_of_two()
}

/// Monodromy matrix, doubling the step count until the Liouville check passes.
pub fn monodromy_matrix_auto(spec: &OperatorSpec, lam: Complex64, tol: &Tolerances) -> Result<MonodromyMatrix> {
    let mut steps = default_steps(spec, lam);
    let mut last = None;
    for _ in 0..=MAX_DOUBLINGS {
        match monodromy_matrix(spec, lam, steps, tol) {
            Ok(mm) => return Ok(mm),
            Err(e @ Error::IntegrationInaccurate { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
        steps *= 2;
    }
    Err(last.expect("at least one attempt"))
}

/// Parlett-Reinsch diagonal balancing by powers of two; returns a similar matrix.
fn balance(a: &CMatrix) -> CMatrix {
    let mut b = a.clone();
    let n = b.nrows();
    let radix = 2.0f64;
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].norm();
                    r += b[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let mut rr = r;
            while cc < rr / radix {
                cc *= radix;
                rr /= radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix;
                rr *= radix;
                f /= radix;
            }
            if (cc + rr) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
        if converged {
            return b;
        }
    }
}

/// Coefficients of `det(x I - h)` for upper Hessenberg `h`, descending, monic.
fn hessenberg_char_poly(h: &CMatrix) -> Vec<Complex64> {
    let n = h.nrows();
    let one = Complex64::new(1.0, 0.0);
    // polys[k] holds p_k in ascending order, degree k.
    let mut polys: Vec<Vec<Complex64>> = vec![vec![one]];
    for k in 1..=n {
        let hk = h[(k - 1, k - 1)];
        let prev = &polys[k - 1];
        let mut p = vec![Complex64::new(0.0, 0.0); k + 1];
        for (d, &c) in prev.iter().enumerate() {
            p[d + 1] += c;
            p[d] -= hk * c;
        }
        let mut prod = one;
        for i in (1..k).rev() {
            prod *= h[(i, i - 1)];
            let coef = h[(i - 1, k - 1)] * prod;
            for (d, &c) in polys[i - 1].iter().enumerate() {
                p[d] -= coef * c;
            }
        }
        polys.push(p);
    }
    let mut out = polys.pop().expect("n >= 0");
    out.reverse();
    out
}

/// Characteristic polynomial `S_lam(u) = det(u I - M(lam))`.
#[derive(Clone, Debug, Serialize)]
pub struct CharPolyInU {
    pub lam: Complex64,
    /// Descending: `coeffs[0] = 1` multiplies `u^(nm)`.
    pub coeffs: Vec<Complex64>,
    /// Floquet multipliers, sorted by modulus then argument.
    pub roots: Vec<Complex64>,
    pub stats: IntegratorStats,
}

impl CharPolyInU {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, u: Complex64) -> Complex64 {
        self.coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * u + c)
    }

    /// `sum_k |a_k| |u|^(nm-k)`, the natural size of `S(u)`.
    pub fn scale_at(&self, u: Complex64) -> f64 {
        let r = u.norm();
        self.coeffs.iter().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.norm()))
    }

    /// Largest coefficient difference between `prod (u - r_i)` and `coeffs`,
    /// relative to the largest coefficient.
    pub fn re_expansion_error(&self) -> f64 {
        let mut p = vec![Complex64::new(1.0, 0.0)];
        for &r in &self.roots {
            let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
            for (d, &c) in p.iter().enumerate() {
                next[d] += c;
                next[d + 1] -= r * c;
            }
            p = next;
        }
        let err = p.iter().zip(&self.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        err / self.max_coeff()
    }

    /// Largest relative distance from a reflected root `1/conj(u)` to its
    /// partner in an optimal matching of the multiset with its reflection.
    pub fn pairing_defect(&self) -> f64 {
        let reflected: Vec<Complex64> = self.roots.iter().map(|u| 1.0 / u.conj()).collect();
        let cost: Vec<Vec<f64>> = reflected
            .iter()
            .map(|w| self.roots.iter().map(|v| (v - w).norm() / w.norm().max(f64::MIN_POSITIVE)).collect())
            .collect();
        let chosen = crate::assign::min_cost_assignment(&cost);
        chosen.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max)
    }
}

/// Characteristic polynomial of the monodromy matrix in `u`.
///
/// Coefficients come from the Hessenberg recurrence applied to the balanced
/// scaled monodromy; roots are the eigenvalues of the same balanced matrix.
///
/// When the multipliers spread over many orders of magnitude, those inside
/// the unit disc carry only `eps |M|` absolute accuracy. They are then
/// replaced by reciprocals of the dominant eigenvalues of `M^-1`, obtained by
/// integrating the system backwards over the period.
pub fn char_poly_in_u(spec: &OperatorSpec, lam: Complex64, tol: &Tolerances) -> Result<CharPolyInU> {
    let mm = monodromy_matrix_auto(spec, lam, tol)?;
    let mut poly = char_poly_of(&mm)?;
    let largest = poly.roots.last().map_or(1.0, |u| u.norm());
    if largest > SPLIT_ROOTS_ABOVE {
        let inner = poly.roots.iter().filter(|u| u.norm() < 1.0).count();
        let inverse = inverse_scaled_monodromy(spec, lam, mm.stats.steps, tol)?;
        let dim = inverse.nrows();
        let mut w = eigenvalues(&balance(&inverse)).map_err(|_| Error::RootFinder(dim))?;
        w.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        for (r, w) in poly.roots.iter_mut().take(inner).zip(&w) {
            *r = 1.0 / w;
        }
        sort_roots(&mut poly.roots);
    }
    Ok(poly)
}

/// Largest multiplier modulus above which the inner roots come from `M^-1`.
const SPLIT_ROOTS_ABOVE: f64 = 1e3;

/// `M^-1` in scaled variables: `z(1) = I` carried back to `x = 0`, written as
/// the forward system `z' = -B(1 - x) z`.
fn inverse_scaled_monodromy(spec: &OperatorSpec, lam: Complex64, steps: usize, tol: &Tolerances) -> Result<CMatrix> {
    let system = scaled_companion_system(spec, lam);
    let (inv, log_abs_det) = integrate_with(system.dim(), steps, |x| -system.at(1.0 - x));
    if log_abs_det.abs() > tol.wr || !log_abs_det.is_finite() {
        return Err(Error::IntegrationInaccurate { steps, log_det: log_abs_det });
    }
    Ok(inv)
}

fn sort_roots(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));
}

pub fn char_poly_of(mm: &MonodromyMatrix) -> Result<CharPolyInU> {
    let balanced = balance(&mm.scaled);
    let h = Hessenberg::new(balanced.clone()).unpack_h();
    let coeffs = hessenberg_char_poly(&h);
    let dim = balanced.nrows();
    let mut roots = eigenvalues(&balanced).map_err(|_| Error::RootFinder(dim))?;
    sort_roots(&mut roots);
    Ok(CharPolyInU { lam: mm.lam, coeffs, roots, stats: mm.stats.clone() })
}

/// Result of a spectrum membership test.
#[derive(Clone, Debug, Serialize)]
pub struct Membership {
    pub lam: f64,
    pub member: bool,
    /// `arg(u)` of the root closest to the unit circle, in `[-pi/2, 3pi/2)`.
    pub witness_t: f64,
    /// `min ||u| - 1|` over the roots.
    pub modulus_defect: f64,
}

/// `lam` belongs to the spectrum iff some Floquet multiplier has unit modulus.
pub fn in_spectrum(spec: &OperatorSpec, lam: f64, tol_mod: f64, tol: &Tolerances) -> Result<Membership> {
    let poly = char_poly_in_u(spec, Complex64::new(lam, 0.0), tol)?;
    let (u, defect) = poly
        .roots
        .iter()
        .map(|u| (*u, (u.norm() - 1.0).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::RootFinder(0))?;
    Ok(Membership { lam, member: defect <= tol_mod, witness_t: wrap_t(u.arg()), modulus_defect: defect })
}

/// Reduces an angle to `[-pi/2, 3pi/2)`.
pub fn wrap_t(angle: f64) -> f64 {
    let lo = -PI / 2.0;
    let t = lo + (angle - lo).rem_euclid(2.0 * PI);
    if t >= 1.5 * PI { lo } else { t }
}

fn wrap_pi(angle: f64) -> f64 {
    let t = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI { t + 2.0 * PI } else { t }
}

/// `arg(u*) - t` wrapped to `(-pi, pi]`, `u*` the multiplier closest to `e^{it}`.
fn phase_mismatch(spec: &OperatorSpec, lam: f64, t: f64, tol: &Tolerances) -> Result<(f64, f64)> {
    let poly = char_poly_in_u(spec, Complex64::new(lam, 0.0), tol)?;
    let target = Complex64::from_polar(1.0, t);
    let u = poly
        .roots
        .iter()
        .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .copied()
        .ok_or(Error::RootFinder(0))?;
    Ok((wrap_pi(u.arg() - t), (u.norm() - 1.0).abs()))
}

/// Locates the eigenvalue of `L_t` near `guess` by bisection on the phase of
/// the multiplier closest to `e^{it}`.
///
/// The initial bracket is `guess +- 1e-4 max(1, |guess|)`, widened fourfold
/// up to eight times if the mismatch does not change sign.
pub fn refine_eigenvalue(spec: &OperatorSpec, t: f64, guess: f64, rel_tol: f64, tol: &Tolerances) -> Result<f64> {
    let t = reduce_quasimomentum(t);
    let mut width = 1e-4 * guess.abs().max(1.0);
    let f0 = phase_mismatch(spec, guess, t, tol)?.0;
    if f0 == 0.0 {
        return Ok(guess);
    }
    let mut bracket = None;
    for _ in 0..8 {
        let lo = guess - width;
        let hi = guess + width;
        let flo = phase_mismatch(spec, lo, t, tol)?.0;
        let fhi = phase_mismatch(spec, hi, t, tol)?.0;
        if flo.signum() != f0.signum() && flo.abs() < 1.0 {
            bracket = Some((lo, guess, flo));
            break;
        }
        if fhi.signum() != f0.signum() && fhi.abs() < 1.0 {
            bracket = Some((guess, hi, f0));
            break;
        }
        width *= 4.0;
    }
    let (mut lo, mut hi, mut flo) = bracket.ok_or_else(|| {
        Error::InvalidArgument(format!("no phase crossing near lambda = {guess} at t = {t}"))
    })?;
    while hi - lo > rel_tol * guess.abs().max(1.0) * 1e-3 {
        let mid = 0.5 * (lo + hi);
        let fm = phase_mismatch(spec, mid, t, tol)?.0;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
