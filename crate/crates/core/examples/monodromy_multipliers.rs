//! Floquet multipliers from the monodromy matrix, and spectrum membership
//! along a line of spectral parameters.
//!
//! cargo run --example monodromy_multipliers [spec.json]

use floquet_core::coeffs::load_operator_spec;
use floquet_core::monodromy::{char_poly_in_u, in_spectrum, monodromy_matrix_auto};
use floquet_core::{Complex64, Tolerances};

fn main() -> floquet_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/mathieu_n2.json").into());
    let spec = load_operator_spec(&std::fs::read_to_string(&path)?)?;
    let tol = Tolerances::default();

    let mm = monodromy_matrix_auto(&spec, Complex64::new(20.0, 0.0), &tol)?;
    println!(
        "lambda = 20: {} steps, richardson {:.1e}, ln|det| {:.1e}",
        mm.stats.steps, mm.stats.richardson_error, mm.stats.log_abs_det
    );

    println!("{:>8} {:>8} {:>12} {:>30}", "lambda", "member", "defect", "multipliers");
    for i in 0..=12 {
        let lam = -4.0 + 4.0 * i as f64;
        let poly = char_poly_in_u(&spec, Complex64::new(lam, 0.0), &tol)?;
        let m = in_spectrum(&spec, lam, tol.modulus, &tol)?;
        let roots: Vec<String> = poly.roots.iter().map(|u| format!("{:.4}@{:+.4}", u.norm(), u.arg())).collect();
        println!("{lam:>8.1} {:>8} {:>12.3e} {:>30}", m.member, m.modulus_defect, roots.join(" "));
    }
    Ok(())
}
