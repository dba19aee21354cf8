//! Finite-gap criteria from the eigenvalues of the averaged matrix, and the
//! measure of the exceptional quasimomentum sets.
//!
//! cargo run --example gap_criteria [spec.json]

use floquet_core::asymptotics::{b_set_measure, b_set_measure_bound};
use floquet_core::coeffs::{load_operator_spec, mean_matrix};
use floquet_core::spectrum::check_gap_criteria;
use floquet_core::Tolerances;

fn main() -> floquet_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/ladders_n4.json").into());
    let spec = load_operator_spec(&std::fs::read_to_string(&path)?)?;
    let tol = Tolerances::default();
    let avg = mean_matrix(&spec, &tol)?;

    let report = check_gap_criteria(&avg, spec.n(), spec.m(), &tol);
    println!("{}", serde_json::to_string_pretty(&report)?);

    let alpha = report.alpha_bound.unwrap_or(0.25);
    println!("exceptional sets at alpha = {alpha}");
    for k in [4, 8, 16, 32] {
        let measure = b_set_measure(alpha, k, &avg, 0, spec.n(), &tol)?;
        println!("  k = {k:>3}: measure {measure:.4e}, bound {:.4e}", b_set_measure_bound(alpha, k, spec.m(), spec.n()));
    }
    Ok(())
}
