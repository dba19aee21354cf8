//! Band sweep over the quasimomentum, merged spectrum and gaps, each gap
//! confirmed by the multiplier test.
//!
//! cargo run --example band_gaps [spec.json] [k_max]

use std::sync::Arc;

use floquet_core::coeffs::load_operator_spec;
use floquet_core::spectrum::{cross_check, default_t_grid, spectrum_report, sweep_bands};
use floquet_core::Tolerances;

fn main() -> floquet_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/mathieu_n2.json").into());
    let k_max: i64 = args.next().map(|s| s.parse().expect("k_max must be an integer")).unwrap_or(3);
    let spec = Arc::new(load_operator_spec(&std::fs::read_to_string(&path)?)?);
    let tol = Tolerances::default();

    let grid = default_t_grid(129, spec.n(), 0.0);
    let sweep = sweep_bands(&spec, 0..=k_max, &grid, None, &tol)?;
    for b in &sweep.bands {
        println!("band ({}, {}): [{:.6}, {:.6}]", b.k, b.j, b.lo, b.hi);
    }
    let report = spectrum_report(&spec, &sweep, &tol)?;
    println!("window [{:.6}, {:.6}]", report.window.0, report.window.1);
    for (a, b) in &report.gaps {
        println!("gap ({a:.8}, {b:.8}), width {:.3e}", b - a);
    }
    for c in cross_check(&spec, &report, &tol)? {
        if !c.expected {
            println!("  midpoint {:.6}: member {}, |u| defect {:.2e}, resolvable {}", c.lam, c.member, c.modulus_defect, c.resolvable);
        }
    }
    Ok(())
}
