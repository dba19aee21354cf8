//! Periodic matrix coefficients: Fourier data, operator description, the mean
//! matrix `C = int_0^1 P2` with its eigen-decomposition, and the harmonic bound
//! `b_k`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_deviation, hermitian_eigh, neg_i_pow};
use crate::{CMatrix, CVector, Complex64, Error, Result, Tolerances};

/// A 1-periodic `m x m` matrix function stored through its Fourier
/// coefficients `coeff(p) = int_0^1 B(x) e^{-2 pi i p x} dx`, `|p| <= p_max`.
///
/// Lookup is total: harmonics beyond `p_max` read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMatrixSeries {
    m: usize,
    p_max: usize,
    coeffs: Vec<CMatrix>,
    zero: CMatrix,
    real_valued: bool,
}

impl FourierMatrixSeries {
    /// The zero function.
    pub fn zeros(m: usize) -> Self {
        FourierMatrixSeries {
            m,
            p_max: 0,
            coeffs: vec![CMatrix::zeros(m, m)],
            zero: CMatrix::zeros(m, m),
            real_valued: false,
        }
    }

    /// A constant matrix function.
    pub fn constant(c: CMatrix) -> Result<Self> {
        let m = square_size(&c, 2)?;
        Self::from_harmonics(m, Some(0), [(0, c)])
    }

    /// Builds a series from `(p, coeff(p))` pairs. Missing harmonics are zero.
    ///
    /// With `p_max = None` the range is the largest `|p|` supplied; with an
    /// explicit `p_max`, harmonics outside it are rejected.
    pub fn from_harmonics<I>(m: usize, p_max: Option<usize>, harmonics: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, CMatrix)>,
    {
        let given: Vec<(i64, CMatrix)> = harmonics.into_iter().collect();
        let needed = given.iter().map(|(p, _)| p.unsigned_abs() as usize).max().unwrap_or(0);
        let p_max = match p_max {
            Some(pm) => {
                if let Some((p, _)) = given.iter().find(|(p, _)| p.unsigned_abs() as usize > pm) {
                    return Err(Error::HarmonicOutOfRange { p: *p, p_max: pm });
                }
                pm
            }
            None => needed,
        };
        let mut coeffs = vec![CMatrix::zeros(m, m); 2 * p_max + 1];
        let mut seen = vec![false; 2 * p_max + 1];
        for (p, mat) in given {
            let got = square_size(&mat, 2)?;
            if got != m {
                return Err(Error::SizeMismatch { nu: 2, expected: m, got });
            }
            let idx = (p + p_max as i64) as usize;
            if seen[idx] {
                return Err(Error::Malformed(format!("harmonic p={p} given twice")));
            }
            seen[idx] = true;
            coeffs[idx] = mat;
        }
        Ok(FourierMatrixSeries {
            m,
            p_max,
            coeffs,
            zero: CMatrix::zeros(m, m),
            real_valued: false,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn coeff(&self, p: i64) -> &CMatrix {
        if p.unsigned_abs() as usize > self.p_max {
            &self.zero
        } else {
            &self.coeffs[(p + self.p_max as i64) as usize]
        }
    }

    /// Entry `(s, q)` of `coeff(p)`, zero outside the stored range.
    pub fn entry(&self, p: i64, s: usize, q: usize) -> Complex64 {
        self.coeff(p)[(s, q)]
    }

    /// Harmonics with at least one nonzero entry, ascending in `p`.
    pub fn nonzero_harmonics(&self) -> impl Iterator<Item = (i64, &CMatrix)> + '_ {
        let pm = self.p_max as i64;
        (-pm..=pm)
            .map(move |p| (p, self.coeff(p)))
            .filter(|(_, c)| c.iter().any(|z| *z != Complex64::new(0.0, 0.0)))
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero_harmonics().next().is_none()
    }

    /// Largest entry magnitude over all harmonics.
    pub fn max_entry(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    /// Point value `sum_p coeff(p) e^{2 pi i p x}`.
    pub fn eval(&self, x: f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.m, self.m);
        for (p, c) in self.nonzero_harmonics() {
            let phase = Complex64::from_polar(1.0, 2.0 * PI * p as f64 * x);
            out += c * phase;
        }
        out
    }

    /// Values at the `s` uniform points `x = j/s`, `j = 0..s`.
    pub fn samples(&self, s: usize) -> Vec<CMatrix> {
        (0..s).map(|j| self.eval(j as f64 / s as f64)).collect()
    }

    /// `B(x)` is Hermitian for every `x`: `coeff(-p) = coeff(p)^*`.
    pub fn is_hermitian_valued(&self, tol: f64) -> bool {
        let pm = self.p_max as i64;
        (0..=pm).all(|p| {
            let d = self.coeff(-p) - self.coeff(p).adjoint();
            d.iter().all(|z| z.norm() <= tol)
        })
    }

    /// Every entry is a real function: `coeff(-p) = conj(coeff(p))` entrywise.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        let pm = self.p_max as i64;
        (0..=pm).all(|p| {
            let d = self.coeff(-p) - self.coeff(p).map(|z| z.conj());
            d.iter().all(|z| z.norm() <= tol)
        })
    }

    /// Flags the series as real-valued after checking conjugate symmetry.
    pub fn mark_real_valued(mut self, tol: &Tolerances) -> Result<Self> {
        if !self.is_real_valued(tol.sym) {
            return Err(Error::InvalidArgument(
                "series flagged real-valued but coeff(-p) != conj(coeff(p))".into(),
            ));
        }
        self.real_valued = true;
        Ok(self)
    }

    pub fn real_valued(&self) -> bool {
        self.real_valued
    }

    /// Pointwise sum; the harmonic range is the larger of the two.
    pub fn add(&self, other: &FourierMatrixSeries) -> Result<FourierMatrixSeries> {
        if self.m != other.m {
            return Err(Error::SizeMismatch { nu: 0, expected: self.m, got: other.m });
        }
        let pm = self.p_max.max(other.p_max) as i64;
        Self::from_harmonics(
            self.m,
            Some(pm as usize),
            (-pm..=pm).map(|p| (p, self.coeff(p) + other.coeff(p))),
        )
    }

    pub fn scale(&self, factor: Complex64) -> FourierMatrixSeries {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        out.real_valued = self.real_valued && factor.im == 0.0;
        out
    }
}

/// Discrete Fourier coefficients of uniformly sampled matrix values.
///
/// `samples[j]` is the value at `x = j/S`. The result is exact for
/// trigonometric polynomials of degree `<= p_max` once `S >= 2 p_max + 1`.
pub fn fourier_coefficients(samples: &[CMatrix], p_max: usize) -> Result<FourierMatrixSeries> {
    let s = samples.len();
    let needed = 2 * p_max + 1;
    if s < needed {
        return Err(Error::TooFewSamples { samples: s, p_max, needed });
    }
    let m = square_size(&samples[0], 2)?;
    for mat in samples {
        let got = square_size(mat, 2)?;
        if got != m {
            return Err(Error::SizeMismatch { nu: 2, expected: m, got });
        }
    }
    let pm = p_max as i64;
    let harmonics = (-pm..=pm).map(|p| {
        let mut acc = CMatrix::zeros(m, m);
        for (j, mat) in samples.iter().enumerate() {
            // Reduce the phase index mod S before scaling so large p*j stays exact.
            let idx = (p * j as i64).rem_euclid(s as i64);
            let phase = Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / s as f64);
            acc += mat * phase;
        }
        (p, acc / Complex64::new(s as f64, 0.0))
    });
    FourierMatrixSeries::from_harmonics(m, Some(p_max), harmonics)
}

fn square_size(mat: &CMatrix, nu: usize) -> Result<usize> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::NonSquare { nu, rows: mat.nrows(), cols: mat.ncols() });
    }
    Ok(mat.nrows())
}

/// Order `n`, matrix size `m` and the coefficient series `P_2, ..., P_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpec {
    n: usize,
    m: usize,
    coefficients: BTreeMap<usize, FourierMatrixSeries>,
    self_adjoint_declared: bool,
}

impl OperatorSpec {
    /// The free operator `(-i)^n y^(n)` on `C^m`.
    pub fn free(n: usize, m: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::OrderTooSmall(n as i64));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("matrix size m must be positive".into()));
        }
        Ok(OperatorSpec {
            n,
            m,
            coefficients: BTreeMap::new(),
            self_adjoint_declared: true,
        })
    }

    /// Sets (replaces) the coefficient `P_nu`.
    pub fn with_coefficient(mut self, nu: usize, series: FourierMatrixSeries) -> Result<Self> {
        if nu < 2 || nu > self.n {
            return Err(Error::NuOutOfRange { nu: nu as i64, n: self.n });
        }
        if series.m() != self.m {
            return Err(Error::SizeMismatch { nu, expected: self.m, got: series.m() });
        }
        self.coefficients.insert(nu, series);
        Ok(self)
    }

    pub fn with_self_adjoint_declared(mut self, declared: bool) -> Self {
        self.self_adjoint_declared = declared;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn self_adjoint_declared(&self) -> bool {
        self.self_adjoint_declared
    }

    pub fn coefficient(&self, nu: usize) -> Option<&FourierMatrixSeries> {
        self.coefficients.get(&nu)
    }

    /// Present coefficients, ascending in `nu`.
    pub fn coefficients(&self) -> impl Iterator<Item = (usize, &FourierMatrixSeries)> + '_ {
        self.coefficients.iter().map(|(nu, s)| (*nu, s))
    }

    /// Largest harmonic range over all coefficients.
    pub fn p_max(&self) -> usize {
        self.coefficients.values().map(|s| s.p_max()).max().unwrap_or(0)
    }

    /// Adds the lower-order terms `P_3, ..., P_n` that turn the principal
    /// perturbation into its symmetric form
    /// `(-i)^(n-2) (P2 D^(n-2) + D^(n-2) P2) / 2`.
    ///
    /// With a Hermitian-valued `P2` and no other coefficients the result is
    /// formally self-adjoint. For `n = 2` nothing is added. In harmonic `r`
    /// the added term is `C(n-2, nu-2) (2 pi r)^(nu-2) (-i)^(n-nu) P2_r / 2`.
    pub fn with_symmetrized_principal_term(mut self) -> Result<Self> {
        let Some(p2) = self.coefficients.get(&2).cloned() else {
            return Ok(self);
        };
        let n = self.n;
        let pm = p2.p_max() as i64;
        for nu in 3..=n {
            let j = nu - 2;
            let binom = binomial(n - 2, j) as f64;
            let phase = neg_i_pow(n - nu);
            let extra = FourierMatrixSeries::from_harmonics(
                self.m,
                Some(pm as usize),
                (-pm..=pm).map(|r| {
                    let w = 0.5 * binom * (2.0 * PI * r as f64).powi(j as i32);
                    (r, p2.coeff(r) * (phase * w))
                }),
            )?;
            let merged = match self.coefficients.get(&nu) {
                Some(existing) => existing.add(&extra)?,
                None => extra,
            };
            self.coefficients.insert(nu, merged);
        }
        Ok(self)
    }

    /// Serializes to the key/value document accepted by [`load_operator_spec`].
    pub fn to_document(&self) -> String {
        let doc = Document {
            n: self.n as i64,
            m: self.m,
            self_adjoint: self.self_adjoint_declared,
            symmetrize: false,
            coefficients: self
                .coefficients
                .iter()
                .map(|(nu, s)| CoefficientDoc {
                    nu: *nu as i64,
                    p_max: Some(s.p_max()),
                    harmonics: Some(
                        s.nonzero_harmonics()
                            .map(|(p, c)| HarmonicDoc { p, matrix: matrix_to_doc(c) })
                            .collect(),
                    ),
                    samples: None,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("document serialization")
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    n: i64,
    m: usize,
    #[serde(default = "default_true")]
    self_adjoint: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    symmetrize: bool,
    #[serde(default)]
    coefficients: Vec<CoefficientDoc>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientDoc {
    nu: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    harmonics: Option<Vec<HarmonicDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<MatrixDoc>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HarmonicDoc {
    p: i64,
    matrix: MatrixDoc,
}

type MatrixDoc = Vec<Vec<ComplexDoc>>;

/// A complex entry: `[re, im]`, or a bare real number.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum ComplexDoc {
    Pair([f64; 2]),
    Real(f64),
}

impl From<ComplexDoc> for Complex64 {
    fn from(c: ComplexDoc) -> Self {
        match c {
            ComplexDoc::Pair([re, im]) => Complex64::new(re, im),
            ComplexDoc::Real(re) => Complex64::new(re, 0.0),
        }
    }
}

fn matrix_to_doc(c: &CMatrix) -> MatrixDoc {
    (0..c.nrows())
        .map(|i| (0..c.ncols()).map(|j| ComplexDoc::Pair([c[(i, j)].re, c[(i, j)].im])).collect())
        .collect()
}

fn matrix_from_doc(doc: &MatrixDoc, nu: usize) -> Result<CMatrix> {
    let rows = doc.len();
    let cols = doc.first().map_or(0, |r| r.len());
    if doc.iter().any(|r| r.len() != cols) {
        return Err(Error::Malformed(format!("ragged matrix rows for nu={nu}")));
    }
    if rows != cols {
        return Err(Error::NonSquare { nu, rows, cols });
    }
    if rows == 0 {
        return Err(Error::Malformed(format!("empty matrix for nu={nu}")));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| doc[i][j].into()))
}

/// Parses and validates a structured operator description.
///
/// ```json
/// { "n": 3, "m": 2, "self_adjoint": true,
///   "coefficients": [
///     { "nu": 2, "harmonics": [ { "p": 0, "matrix": [[[1,0],[0,1]], [[0,-1],[1,0]]] } ] },
///     { "nu": 3, "p_max": 1, "samples": [ [[[0,0],[0,0]], [[0,0],[0,0]]], ... ] }
///   ] }
/// ```
///
/// Complex entries are `[re, im]` pairs (bare reals are accepted too). A
/// harmonic entry may declare `p_max`; harmonics beyond it are rejected. The
/// optional top-level `"symmetrize": true` applies
/// [`OperatorSpec::with_symmetrized_principal_term`] after loading.
pub fn load_operator_spec(source: &str) -> Result<OperatorSpec> {
    let doc: Document = serde_json::from_str(source)?;
    if doc.n < 2 {
        return Err(Error::OrderTooSmall(doc.n));
    }
    let n = doc.n as usize;
    let mut spec = OperatorSpec::free(n, doc.m)?.with_self_adjoint_declared(doc.self_adjoint);
    let mut seen = Vec::new();
    for entry in &doc.coefficients {
        if entry.nu < 2 || entry.nu > doc.n {
            return Err(Error::NuOutOfRange { nu: entry.nu, n });
        }
        let nu = entry.nu as usize;
        if seen.contains(&nu) {
            return Err(Error::Malformed(format!("coefficient nu={nu} given twice")));
        }
        seen.push(nu);
        let series = match (&entry.harmonics, &entry.samples) {
            (Some(harmonics), None) => {
                let mut list = Vec::with_capacity(harmonics.len());
                for h in harmonics {
                    list.push((h.p, matrix_from_doc(&h.matrix, nu)?));
                }
                for (_, mat) in &list {
                    if mat.nrows() != doc.m {
                        return Err(Error::SizeMismatch { nu, expected: doc.m, got: mat.nrows() });
                    }
                }
                FourierMatrixSeries::from_harmonics(doc.m, entry.p_max, list)?
            }
            (None, Some(samples)) => {
                let p_max = entry.p_max.ok_or_else(|| {
                    Error::Malformed(format!("sampled coefficient nu={nu} needs p_max"))
                })?;
                let mut mats = Vec::with_capacity(samples.len());
                for s in samples {
                    let mat = matrix_from_doc(s, nu)?;
                    if mat.nrows() != doc.m {
                        return Err(Error::SizeMismatch { nu, expected: doc.m, got: mat.nrows() });
                    }
                    mats.push(mat);
                }
                fourier_coefficients(&mats, p_max)?
            }
            _ => {
                return Err(Error::Malformed(format!(
                    "coefficient nu={nu} needs exactly one of `harmonics` or `samples`"
                )))
            }
        };
        spec = spec.with_coefficient(nu, series)?;
    }
    if doc.symmetrize {
        spec = spec.with_symmetrized_principal_term()?;
    }
    Ok(spec)
}

/// The mean matrix `C` with ascending eigenvalues and orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct AveragedMatrix {
    pub c: CMatrix,
    pub mu: Vec<f64>,
    pub v: Vec<CVector>,
    pub simple_flags: Vec<bool>,
}

impl AveragedMatrix {
    /// Builds the decomposition from eigenvalues alone (`C` diagonal).
    pub fn from_eigenvalues(mu: &[f64], tol: &Tolerances) -> Result<Self> {
        let c = CMatrix::from_diagonal(&CVector::from_iterator(
            mu.len(),
            mu.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        decompose(c, tol)
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    /// Indices of eigenvalues within `tol.sep` of `mu[j]` (including `j`).
    pub fn cluster(&self, j: usize, sep: f64) -> Vec<usize> {
        (0..self.m()).filter(|&q| (self.mu[q] - self.mu[j]).abs() <= sep).collect()
    }

    /// Largest violation of the Hermitian, eigen-residual and orthonormality
    /// invariants, as `(herm, eig, orth)`.
    pub fn invariant_residuals(&self) -> (f64, f64, f64) {
        let herm = hermitian_deviation(&self.c);
        let eig = self
            .mu
            .iter()
            .zip(&self.v)
            .map(|(mu, v)| (&self.c * v - v * Complex64::new(*mu, 0.0)).norm())
            .fold(0.0, f64::max);
        let mut orth = 0.0f64;
        for i in 0..self.m() {
            for j in 0..self.m() {
                let target = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((self.v[i].dotc(&self.v[j]) - target).norm());
            }
        }
        (herm, eig, orth)
    }
}

/// `C = coeff_0(P2)` with its Hermitian eigen-decomposition.
pub fn mean_matrix(spec: &OperatorSpec, tol: &Tolerances) -> Result<AveragedMatrix> {
    let c = spec
        .coefficient(2)
        .map(|p2| p2.coeff(0).clone())
        .unwrap_or_else(|| CMatrix::zeros(spec.m(), spec.m()));
    decompose(c, tol)
}

fn decompose(c: CMatrix, tol: &Tolerances) -> Result<AveragedMatrix> {
    let m = c.nrows();
    let deviation = hermitian_deviation(&c);
    if deviation > tol.herm {
        return Err(Error::NotHermitian { deviation });
    }
    let (mu, mut v) = if c.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        let basis = (0..m)
            .map(|j| {
                let mut e = CVector::zeros(m);
                e[j] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        (vec![0.0; m], basis)
    } else {
        hermitian_eigh(&c)?
    };
    let simple_flags: Vec<bool> = (0..m)
        .map(|j| (0..m).filter(|&q| q != j).all(|q| (mu[j] - mu[q]).abs() > tol.sep))
        .collect();
    // Re-orthonormalize inside degenerate clusters.
    for j in 0..m {
        if simple_flags[j] {
            continue;
        }
        for q in 0..j {
            if (mu[q] - mu[j]).abs() <= tol.sep {
                let proj = v[q].dotc(&v[j]);
                let vq = v[q].clone();
                v[j] -= vq * proj;
            }
        }
        let nrm = v[j].norm();
        v[j] /= Complex64::new(nrm, 0.0);
    }
    let out = AveragedMatrix { c, mu, v, simple_flags };
    let (_, eig, orth) = out.invariant_residuals();
    if eig > tol.eig || orth > tol.orth {
        return Err(Error::EigenSolver { dim: m, norm: crate::linalg::max_abs(&out.c) });
    }
    Ok(out)
}

/// `b_k = max |b_{i,j,p}|` over the `P2` harmonics `p in {2k, -2k, 2k+1, -2k-1}`.
///
/// Harmonics beyond the stored range count as zero (with a logged warning).
pub fn b_k_bound(spec: &OperatorSpec, k: i64) -> f64 {
    let Some(p2) = spec.coefficient(2) else {
        return 0.0;
    };
    let reach = (2 * k).unsigned_abs().max((2 * k + 1).unsigned_abs()) as usize;
    if reach > p2.p_max() {
        warn!("b_k for k={k} reaches harmonic {reach} beyond p_max={}; missing harmonics read as 0", p2.p_max());
    }
    [2 * k, -2 * k, 2 * k + 1, -2 * k - 1]
        .iter()
        .flat_map(|&p| p2.coeff(p).iter().map(|z| z.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}
