//! Large-|k| eigenvalue asymptotics: residuals against the predictors and
//! the fitted constants.
//!
//! cargo run --example asymptotics_check [spec.json] [t]

use std::sync::Arc;

use floquet_core::asymptotics::verify_eigenvalue_asymptotics;
use floquet_core::coeffs::load_operator_spec;
use floquet_core::Tolerances;

fn main() -> floquet_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/perturbed_n3.json").into());
    let t: f64 = args.next().map(|s| s.parse().expect("t must be a number")).unwrap_or(1.0);
    let spec = Arc::new(load_operator_spec(&std::fs::read_to_string(&path)?)?);

    let report = verify_eigenvalue_asymptotics(&spec, t, 2..=24, Some(64), &Tolerances::default())?;
    println!("{:>4} {:>3} {:>6} {:>12} {:>12} {:>12}", "k", "j", "case", "residual", "normalized", "eigfn dev");
    for d in report.diagnostics.iter().filter(|d| d.k % 4 == 0) {
        println!(
            "{:>4} {:>3} {:>6} {:>12.3e} {:>12.3e} {:>12.3e}",
            d.k,
            d.j,
            d.case_id.as_str(),
            d.residual,
            d.normalized_residual,
            d.eigfn_deviation
        );
    }
    println!("c_delta = {:.4e}, c_eigfn = {:.4e}", report.fitted.c_delta, report.fitted.c_eigfn);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
