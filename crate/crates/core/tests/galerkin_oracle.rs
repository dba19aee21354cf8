//! Galerkin assembly against direct quadrature, plus structural properties
//! of the discretization.

use std::f64::consts::PI;
use std::sync::Arc;

use floquet_core::coeffs::{FourierMatrixSeries, OperatorSpec};
use floquet_core::galerkin::{assemble_bloch_matrix, assemble_window, bloch_eigenvalues, BlochProblem};
use floquet_core::linalg::{hermitian_deviation, max_abs};
use floquet_core::{CMatrix, Complex64, Tolerances};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_matrix(rng: &mut StdRng, m: usize) -> CMatrix {
    CMatrix::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_series(rng: &mut StdRng, m: usize, p_max: i64) -> FourierMatrixSeries {
    let harmonics: Vec<(i64, CMatrix)> = (-p_max..=p_max).map(|p| (p, random_matrix(rng, m))).collect();
    FourierMatrixSeries::from_harmonics(m, None, harmonics).unwrap()
}

/// Hermitian-valued series: `coeff(-p) = coeff(p)^*`.
fn random_hermitian_series(rng: &mut StdRng, m: usize, p_max: i64, scale: f64) -> FourierMatrixSeries {
    let mut harmonics = Vec::new();
    let c0 = random_matrix(rng, m);
    harmonics.push((0, (&c0 + c0.adjoint()) * Complex64::new(0.5 * scale, 0.0)));
    for p in 1..=p_max {
        let c = random_matrix(rng, m) * Complex64::new(scale, 0.0);
        harmonics.push((-p, c.adjoint()));
        harmonics.push((p, c));
    }
    FourierMatrixSeries::from_harmonics(m, None, harmonics).unwrap()
}

fn random_spec(rng: &mut StdRng, n: usize, m: usize) -> OperatorSpec {
    let mut spec = OperatorSpec::free(n, m).unwrap();
    for nu in 2..=n {
        spec = spec.with_coefficient(nu, random_series(rng, m, 2)).unwrap();
    }
    spec
}

/// Composite Simpson on `[0, 1]` with `intervals` (even) panels.
fn simpson(intervals: usize, f: impl Fn(f64) -> Complex64) -> Complex64 {
    let h = 1.0 / intervals as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(i as f64 * h) * w;
    }
    acc * (h / 3.0)
}

/// `<L phi_{l,q}, phi_{p,s}>` by quadrature: each derivative of the
/// exponential is the factor `(i theta)^d`, the coefficients are sampled
/// pointwise and the product is integrated against `conj(phi_{p,s})`.
fn quadrature_entry(spec: &OperatorSpec, t: f64, p: i64, s: usize, l: i64, q: usize) -> Complex64 {
    let n = spec.n();
    let theta_l = 2.0 * PI * l as f64 + t;
    let theta_p = 2.0 * PI * p as f64 + t;
    let i = Complex64::new(0.0, 1.0);
    let deriv = |d: usize| (i * theta_l).powu(d as u32);
    simpson(20_000, |x| {
        let phase = (i * theta_l * x).exp() * (-i * theta_p * x).exp();
        let mut value = if s == q { (-i).powu(n as u32) * deriv(n) } else { Complex64::new(0.0, 0.0) };
        for (nu, series) in spec.coefficients() {
            let px = series.eval(x)[(s, q)];
            let front = if nu == 2 { (-i).powu(n as u32 - 2) } else { Complex64::new(1.0, 0.0) };
            value += front * px * deriv(n - nu);
        }
        value * phase
    })
}

#[test]
fn assembly_matches_quadrature_on_random_entries() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut checked = 0;
    for n in 2..=5 {
        for _ in 0..2 {
            let m = rng.gen_range(1..=2);
            let spec = Arc::new(random_spec(&mut rng, n, m));
            let t = rng.gen_range(-PI / 2.0..1.5 * PI);
            let problem = BlochProblem::new(spec.clone(), t, 4).unwrap();
            let a = assemble_bloch_matrix(&problem);
            for _ in 0..6 {
                let l = rng.gen_range(-4i64..=4);
                let p = (l + rng.gen_range(-3i64..=3)).clamp(-4, 4);
                let (s, q) = (rng.gen_range(0..m), rng.gen_range(0..m));
                let want = quadrature_entry(&spec, t, p, s, l, q);
                let got = a[(problem.index(p, s), problem.index(l, q))];
                assert!(
                    (got - want).norm() <= 1e-8 * want.norm().max(1.0),
                    "n={n} (p,s)=({p},{s}) (l,q)=({l},{q}): {got} vs {want}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 20);
}

#[test]
fn single_harmonic_lower_order_entry_by_quadrature() {
    let p3 = FourierMatrixSeries::from_harmonics(1, None, [(1, CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)))]).unwrap();
    let spec = OperatorSpec::free(3, 1).unwrap().with_coefficient(3, p3).unwrap();
    let want = quadrature_entry(&spec, 0.0, 1, 0, 0, 0);
    assert!((want - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    let a = assemble_window(&spec, 0.0, -2, 2);
    assert!((a[(3, 2)] - want).norm() < 1e-10);
}

#[test]
fn symmetrized_operators_assemble_hermitian() {
    let mut rng = StdRng::seed_from_u64(11);
    for n in 2..=6 {
        let m = 2;
        let p2 = random_hermitian_series(&mut rng, m, 2, 1.0);
        let mut spec = OperatorSpec::free(n, m).unwrap().with_coefficient(2, p2).unwrap();
        if n >= 3 {
            // A Hermitian-valued zeroth-order term keeps the expression self-adjoint.
            spec = spec.with_coefficient(n, random_hermitian_series(&mut rng, m, 1, 0.5)).unwrap();
        }
        let spec = spec.with_symmetrized_principal_term().unwrap();
        let a = assemble_window(&spec, 0.77, -10, 10);
        assert!(hermitian_deviation(&a) <= 1e-9 * max_abs(&a), "n={n}");
    }
}

#[test]
fn perturbation_of_zeroth_order_term_obeys_weyl_bound() {
    let mut rng = StdRng::seed_from_u64(5);
    let tol = Tolerances::default();
    let n = 4;
    let m = 2;
    let base = OperatorSpec::free(n, m).unwrap().with_coefficient(2, random_hermitian_series(&mut rng, m, 1, 1.0)).unwrap();
    let base = Arc::new(base);
    let before = bloch_eigenvalues(&BlochProblem::new(base.clone(), 0.6, 12).unwrap(), &tol).unwrap();
    let mut worst_c = 0.0f64;
    for eta in [1e-3, 1e-2, 1e-1] {
        let perturbation = random_hermitian_series(&mut rng, m, 1, 1.0);
        let eta_actual = perturbation.max_entry() * eta;
        let spec = Arc::new((*base).clone().with_coefficient(n, perturbation.scale(Complex64::new(eta, 0.0))).unwrap());
        let after = bloch_eigenvalues(&BlochProblem::new(spec, 0.6, 12).unwrap(), &tol).unwrap();
        let shift = before.iter().zip(&after).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst_c = worst_c.max(shift / eta_actual);
    }
    // Block-Toeplitz perturbation: operator norm at most m (2 p_max + 1) eta.
    assert!(worst_c <= (m * 3) as f64, "measured c = {worst_c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauge_shift_reindexes_the_window(seed in 0u64..1000, t in -1.5f64..4.7, n in 2usize..6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, n, 2);
        let shifted = assemble_window(&spec, t + 2.0 * PI, -5, 5);
        let reindexed = assemble_window(&spec, t, -4, 6);
        let scale = max_abs(&reindexed);
        prop_assert!((shifted - reindexed).iter().all(|z| z.norm() <= 1e-10 * scale));
    }

    #[test]
    fn constant_coefficients_are_truncation_exact(seed in 0u64..1000, t in -1.5f64..4.7, k in 8usize..14) {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = random_hermitian_series(&mut rng, 2, 0, 1.0);
        let spec = Arc::new(OperatorSpec::free(4, 2).unwrap().with_coefficient(2, c).unwrap());
        let tol = Tolerances::default();
        let small = bloch_eigenvalues(&BlochProblem::new(spec.clone(), t, k).unwrap(), &tol).unwrap();
        let large = bloch_eigenvalues(&BlochProblem::new(spec, t, k + 3).unwrap(), &tol).unwrap();
        // n even: the lowest 2(K+1) eigenvalues are shared by both truncations.
        for i in 0..2 * (k + 1) {
            prop_assert!((small[i] - large[i]).norm() <= 1e-10 * large[i].norm().max(1.0));
        }
    }
}
