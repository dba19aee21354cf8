use serde::Serialize;

use crate::{Error, Result};

/// Numerical tolerances shared by all modules.
///
/// Every field can be overridden by name through [`Tolerances::set`], which is
/// what the `--tol KEY=VAL` command-line flag feeds into.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Hermitian deviation of `C` and of the assembled Galerkin matrix (relative to its scale).
    pub herm: f64,
    /// Orthonormality of the eigenvectors of `C`.
    pub orth: f64,
    /// Eigen-residual of `C`.
    pub eig: f64,
    /// Conjugate symmetry of real-valued coefficient series.
    pub sym: f64,
    /// Separation below which eigenvalues of `C` count as degenerate.
    pub sep: f64,
    /// Relative eigen-residual of Galerkin eigenpairs.
    pub res: f64,
    /// Relative imaginary part allowed in the self-adjoint case.
    pub imag: f64,
    /// Relative truncation deviation accepted by the convergence check.
    pub conv: f64,
    /// Liouville bound on `|ln|det M||`.
    pub wr: f64,
    /// Distance of a multiplier from the unit circle still counted as unimodular.
    pub modulus: f64,
    /// Eigenvector overlap needed for unambiguous branch tracking.
    pub track: f64,
    /// Relative tolerance when merging band intervals.
    pub merge: f64,
    /// Positive-diameter threshold for the three-ladder condition.
    pub diam: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-10,
            orth: 1e-10,
            eig: 1e-9,
            sym: 1e-10,
            sep: 1e-8,
            res: 1e-8,
            imag: 1e-7,
            conv: 1e-7,
            wr: 1e-6,
            modulus: 1e-6,
            track: 0.5,
            merge: 1e-8,
            diam: 1e-9,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 13] = [
        "herm", "orth", "eig", "sym", "sep", "res", "imag", "conv", "wr", "mod", "track",
        "merge", "diam",
    ];

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {key} must be positive and finite, got {value}"
            )));
        }
        let slot = match key {
            "herm" => &mut self.herm,
            "orth" => &mut self.orth,
            "eig" => &mut self.eig,
            "sym" => &mut self.sym,
            "sep" => &mut self.sep,
            "res" => &mut self.res,
            "imag" => &mut self.imag,
            "conv" => &mut self.conv,
            "wr" => &mut self.wr,
            "mod" | "modulus" => &mut self.modulus,
            "track" => &mut self.track,
            "merge" => &mut self.merge,
            "diam" => &mut self.diam,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown tolerance key {key:?} (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Parses a `KEY=VAL` override and applies it.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("tolerance override {spec:?} is not KEY=VAL"))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("tolerance value {value:?} is not a number"))
        })?;
        self.set(key.trim(), value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let mut tol = Tolerances::default();
        tol.apply_override("conv=1e-5").unwrap();
        tol.apply_override("mod = 2e-6").unwrap();
        assert_eq!(tol.conv, 1e-5);
        assert_eq!(tol.modulus, 2e-6);
        assert!(tol.apply_override("bogus=1").is_err());
        assert!(tol.apply_override("conv").is_err());
        assert!(tol.apply_override("conv=-1").is_err());
    }
}
