//! Eigenvalues of one fiber operator, labeled against their predictors.
//!
//! cargo run --example fiber_eigenvalues [spec.json] [t]

use std::sync::Arc;

use floquet_core::coeffs::{load_operator_spec, mean_matrix};
use floquet_core::galerkin::{convergence_check, label_solution, solve_bloch, BlochProblem};
use floquet_core::Tolerances;

fn main() -> floquet_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/perturbed_n3.json").into());
    let t: f64 = args.next().map(|s| s.parse().expect("t must be a number")).unwrap_or(0.7);
    let tol = Tolerances::default();

    let spec = Arc::new(load_operator_spec(&std::fs::read_to_string(&path)?)?);
    let avg = mean_matrix(&spec, &tol)?;
    println!("n = {}, m = {}, mu = {:?}", spec.n(), spec.m(), avg.mu);

    let sol = solve_bloch(&BlochProblem::new(spec.clone(), t, 32)?, &tol)?;
    println!("dim {}, hermitian {}, residual {:.2e}", sol.len(), sol.hermitian, sol.max_relative_residual());
    println!("{:>4} {:>3} {:>22} {:>22}", "k", "j", "lambda", "predictor");
    for lab in label_solution(&sol, &avg, &[-3, -2, -1, 0, 1, 2, 3]) {
        println!("{:>4} {:>3} {:>22.12} {:>22.12}", lab.k, lab.j, lab.value.re, lab.predictor);
    }

    let conv = convergence_check(&spec, t, 32, -3..=3, &tol)?;
    println!("K -> 2K deviation {:.2e} (threshold {:.0e}): {}", conv.max_relative_deviation, conv.threshold, conv.passed);
    Ok(())
}
