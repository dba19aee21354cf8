//! Quasimomentum sweeps, band tracking, spectral union and gap detection,
//! and the finite-gap criteria evaluated on the eigenvalues of `C`.
//!
//! A sweep produces two families of bands from the same fiber solves:
//!
//! * labelled bands `Gamma_{k,j}`, assigned at the first grid point by the
//!   predictor matching and followed across the grid by eigenvector overlap;
//! * level bands, the ranges of the `p`-th smallest eigenvalue. Sorted
//!   eigenvalues of a continuous Hermitian family are continuous, so level
//!   ranges never bridge a gap even where labelled tracking is ambiguous.
//!
//! Merged intervals and gaps are computed from the level bands.

use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::assign::min_cost_assignment;
use crate::coeffs::{mean_matrix, AveragedMatrix, OperatorSpec};
use crate::galerkin::{default_truncation, is_formally_self_adjoint, label_solution, solve_bloch, BlochProblem, BlochSolution};
use crate::monodromy::in_spectrum;
use crate::{CVector, Error, Result, Tolerances};

pub type Interval = (f64, f64);

/// Largest admissible spacing of a sweep grid (`2 pi / 16`).
pub const MAX_GRID_SPACING: f64 = 2.0 * PI / 16.0;

#[derive(Clone, Debug, Serialize)]
pub struct Band {
    /// Band index; for level bands the position in the sorted eigenvalue list.
    pub k: i64,
    pub j: usize,
    /// `(t, lambda)` sorted by `t`.
    pub samples: Vec<(f64, f64)>,
    pub lo: f64,
    pub hi: f64,
    pub continuity_ok: bool,
    /// Some step of the overlap tracking was ambiguous.
    pub tracking_flagged: bool,
}

impl Band {
    fn from_samples(k: i64, j: usize, samples: Vec<(f64, f64)>, threshold: &dyn Fn(f64, f64) -> f64, flagged: bool) -> Self {
        let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let hi = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let continuity_ok = samples.windows(2).all(|w| (w[1].1 - w[0].1).abs() <= threshold(w[0].1, w[1].0 - w[0].0));
        Band { k, j, samples, lo, hi, continuity_ok, tracking_flagged: flagged }
    }

    /// Closed ranges of the maximal runs without a jump above the threshold.
    fn pieces(&self, threshold: &dyn Fn(f64, f64) -> f64) -> Vec<Interval> {
        if self.continuity_ok {
            return vec![(self.lo, self.hi)];
        }
        let mut out = Vec::new();
        let mut cur = (self.samples[0].1, self.samples[0].1);
        for w in self.samples.windows(2) {
            if (w[1].1 - w[0].1).abs() > threshold(w[0].1, w[1].0 - w[0].0) {
                out.push(cur);
                cur = (w[1].1, w[1].1);
            } else {
                cur = (cur.0.min(w[1].1), cur.1.max(w[1].1));
            }
        }
        out.push(cur);
        out
    }
}

/// Uniform grid of `points` values on `[-pi/2, 3pi/2]`, both ends included.
///
/// For even `n` the two grid cells on each side of `0` and `pi` are
/// subdivided eightfold, and further out to `refine_width` if that is wider.
pub fn default_t_grid(points: usize, n: usize, refine_width: f64) -> Vec<f64> {
    assert!(points >= 2);
    let lo = -PI / 2.0;
    let h = 2.0 * PI / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    if n % 2 == 0 {
        let w = (2.0 * h).max(refine_width);
        let fine = h / 8.0;
        for centre in [0.0, PI] {
            let steps = (w / fine).ceil() as i64;
            for s in -steps..=steps {
                let t = centre + s as f64 * fine;
                if (-PI / 2.0..=1.5 * PI).contains(&t) {
                    grid.push(t);
                }
            }
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * fine);
    }
    grid
}

/// Half-width of the widest exceptional interval for band indices of modulus
/// at least `k_abs`: `(max|mu_s - mu_j| + spread) / (4 n pi k_abs)`.
pub fn b_set_width(avg: &AveragedMatrix, n: usize, k_abs: i64) -> f64 {
    let spread = avg.mu.last().copied().unwrap_or(0.0) - avg.mu.first().copied().unwrap_or(0.0);
    (2.0 * spread + 1.0) / (4.0 * n as f64 * PI * k_abs.max(1) as f64)
}

/// Continuity threshold for a step of size `dt` at eigenvalue `lam`.
fn jump_threshold(spec: &OperatorSpec) -> impl Fn(f64, f64) -> f64 {
    let n = spec.n() as f64;
    let coeff: f64 = spec.coefficients().map(|(_, c)| c.max_entry() * (2 * c.p_max() + 1) as f64).sum();
    move |lam: f64, dt: f64| {
        let theta = lam.abs().powf(1.0 / n) + 2.0 * PI;
        4.0 * n * theta.powf(n - 1.0) * dt * (1.0 + coeff) + 1e-9 * lam.abs().max(1.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub truncation: usize,
    pub t_grid: Vec<f64>,
    /// Labelled bands, ordered by `(k, j)`.
    pub bands: Vec<Band>,
    /// Level bands whose range meets the labelled hull.
    pub levels: Vec<Band>,
    /// Convex hull `[min lo, max hi]` of the labelled bands.
    pub window: Interval,
    pub warnings: Vec<String>,
}

struct Tracked {
    values: Vec<f64>,
    vectors: Vec<CVector>,
}

/// Solves every fiber on the grid and tracks the labelled branches.
pub fn sweep_bands(
    spec: &Arc<OperatorSpec>,
    k_range: RangeInclusive<i64>,
    t_grid: &[f64],
    truncation: Option<usize>,
    tol: &Tolerances,
) -> Result<SweepResult> {
    if !is_formally_self_adjoint(spec) {
        return Err(Error::Hypothesis("band sweeps require a formally self-adjoint operator".into()));
    }
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty band index range".into()));
    }
    if t_grid.len() < 2 {
        return Err(Error::InvalidArgument("t-grid needs at least two points".into()));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument("t-grid must be strictly increasing".into()));
        }
        if w[1] - w[0] > MAX_GRID_SPACING * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "t-grid too coarse: spacing {} exceeds {MAX_GRID_SPACING}",
                w[1] - w[0]
            )));
        }
    }
    if t_grid[0] < -PI / 2.0 || *t_grid.last().expect("non-empty") > 1.5 * PI {
        return Err(Error::InvalidArgument("t-grid must lie in [-pi/2, 3pi/2]".into()));
    }
    let avg = mean_matrix(spec, tol)?;
    let m = spec.m();
    let ks: Vec<i64> = k_range.collect();
    let k_max = ks.iter().map(|k| k.abs()).max().expect("non-empty");
    let truncation = truncation.unwrap_or_else(|| default_truncation(k_max, spec.p_max()));
    if k_max + spec.p_max() as i64 > truncation as i64 {
        return Err(Error::WindowExceedsTruncation { truncation, k_max });
    }
    let threshold = jump_threshold(spec);
    let mut warnings = Vec::new();

    let labels_len = ks.len() * m;
    let mut branch_samples: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(t_grid.len()); labels_len];
    let mut branch_flags = vec![false; labels_len];
    let mut level_values: Vec<Vec<f64>> = Vec::with_capacity(t_grid.len());
    let mut tracked: Option<Tracked> = None;
    let mut label_ids: Vec<(i64, usize)> = Vec::new();
    let mut ambiguous_steps = 0usize;

    let chunk = 2 * rayon::current_num_threads().max(1);
    for ts in t_grid.chunks(chunk) {
        let solutions: Vec<BlochSolution> = ts
            .par_iter()
            .map(|&t| BlochProblem::new(spec.clone(), t, truncation).and_then(|p| solve_bloch(&p, tol)))
            .collect::<Result<Vec<_>>>()?;
        for sol in solutions {
            let t = sol.problem.t();
            if !sol.hermitian {
                warnings.push(format!("non-Hermitian fiber matrix at t = {t}"));
            }
            let values = sol.real_eigenvalues();
            let chosen: Vec<usize> = match &tracked {
                None => {
                    let labels = label_solution(&sol, &avg, &ks);
                    label_ids = labels.iter().map(|l| (l.k, l.j)).collect();
                    labels.iter().map(|l| l.index).collect()
                }
                Some(prev) => {
                    let (chosen, ambiguous) = track_step(prev, &sol, tol.track);
                    if ambiguous.iter().any(|&a| a) {
                        ambiguous_steps += 1;
                    }
                    for (flag, a) in branch_flags.iter_mut().zip(&ambiguous) {
                        *flag |= *a;
                    }
                    chosen
                }
            };
            for (b, &idx) in chosen.iter().enumerate() {
                branch_samples[b].push((t, values[idx]));
            }
            tracked = Some(Tracked {
                values: chosen.iter().map(|&i| values[i]).collect(),
                vectors: chosen.iter().map(|&i| sol.eigenvectors[i].clone()).collect(),
            });
            level_values.push(values);
        }
    }
    if ambiguous_steps > 0 {
        warnings.push(format!("overlap tracking ambiguous on {ambiguous_steps} grid steps; nearest-eigenvalue fallback used"));
    }

    let mut bands: Vec<Band> = label_ids
        .iter()
        .zip(branch_samples)
        .zip(&branch_flags)
        .map(|((&(k, j), samples), &flag)| Band::from_samples(k, j, samples, &threshold, flag))
        .collect();
    bands.sort_by_key(|b| (b.k, b.j));
    let broken = bands.iter().filter(|b| !b.continuity_ok).count();
    if broken > 0 {
        warnings.push(format!("{broken} labelled bands have jumps above the continuity threshold"));
    }
    let window = (
        bands.iter().map(|b| b.lo).fold(f64::INFINITY, f64::min),
        bands.iter().map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max),
    );
    let dim = level_values[0].len();
    let levels: Vec<Band> = (0..dim)
        .map(|p| {
            let samples = t_grid.iter().zip(&level_values).map(|(&t, vals)| (t, vals[p])).collect();
            Band::from_samples(p as i64, 0, samples, &threshold, false)
        })
        .filter(|b| b.hi >= window.0 && b.lo <= window.1)
        .collect();
    Ok(SweepResult { truncation, t_grid: t_grid.to_vec(), bands, levels, window, warnings })
}

/// One tracking step: maximal total overlap, with a nearest-eigenvalue
/// fallback when any branch has no clear partner.
fn track_step(prev: &Tracked, sol: &BlochSolution, tau: f64) -> (Vec<usize>, Vec<bool>) {
    let values = sol.real_eigenvalues();
    let overlaps: Vec<Vec<f64>> = prev
        .vectors
        .iter()
        .map(|x| sol.eigenvectors.iter().map(|y| x.dotc(y).norm()).collect())
        .collect();
    let ambiguous: Vec<bool> = overlaps
        .iter()
        .map(|row| {
            let mut best = 0.0f64;
            let mut second = 0.0f64;
            for &o in row {
                if o > best {
                    second = best;
                    best = o;
                } else if o > second {
                    second = o;
                }
            }
            best < tau || second >= tau
        })
        .collect();
    let cost: Vec<Vec<f64>> = if ambiguous.iter().any(|&a| a) {
        prev.values.iter().map(|v| values.iter().map(|w| (w - v).abs()).collect()).collect()
    } else {
        overlaps.iter().map(|row| row.iter().map(|o| 1.0 - o).collect()).collect()
    };
    (min_cost_assignment(&cost), ambiguous)
}

/// Finite-gap criteria evaluated on the eigenvalues of `C`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapCriteriaReport {
    pub n: usize,
    pub m: usize,
    pub mu: Vec<f64>,
    pub a_applies: bool,
    pub b_applies: bool,
    pub c_applies: bool,
    /// Triple of distinct simple indices `(j1, j2, j3)` with the largest
    /// minimal diameter.
    pub c_witness: Option<(usize, usize, usize)>,
    /// `min over (i1,i2,i3)` of `diam{mu_j1 + mu_i1, mu_j2 + mu_i2, mu_j3 + mu_i3}` for the witness.
    pub min_diam: Option<f64>,
    /// A minimizing `(i1, i2, i3)` for the witness.
    pub c_minimizer: Option<(usize, usize, usize)>,
    pub alpha_bound: Option<f64>,
    pub prediction: Prediction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    SpectrumIsR,
    FinitelyManyGaps,
    NoConclusion,
}

fn diam3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).max(c) - a.min(b).min(c)
}

/// Minimal diameter over all `m^3` index triples for the ladder triple `j`.
pub fn triple_min_diam(mu: &[f64], j: (usize, usize, usize)) -> (f64, (usize, usize, usize)) {
    let m = mu.len();
    let mut best = (f64::INFINITY, (0, 0, 0));
    for i1 in 0..m {
        for i2 in 0..m {
            for i3 in 0..m {
                let d = diam3(mu[j.0] + mu[i1], mu[j.1] + mu[i2], mu[j.2] + mu[i3]);
                if d < best.0 {
                    best = (d, (i1, i2, i3));
                }
            }
        }
    }
    best
}

pub fn check_gap_criteria(avg: &AveragedMatrix, n: usize, m: usize, tol: &Tolerances) -> GapCriteriaReport {
    assert_eq!(avg.m(), m, "mean matrix size differs from m");
    let odd = n % 2 == 1;
    let a_applies = odd && m % 2 == 1;
    let b_applies = odd && n > 1 && avg.simple_flags.iter().any(|&s| s);
    let simple: Vec<usize> = (0..m).filter(|&j| avg.simple_flags[j]).collect();
    let mut witness: Option<((usize, usize, usize), f64, (usize, usize, usize))> = None;
    for a in 0..simple.len() {
        for b in a + 1..simple.len() {
            for c in b + 1..simple.len() {
                let j = (simple[a], simple[b], simple[c]);
                let (d, i) = triple_min_diam(&avg.mu, j);
                if witness.is_none_or(|w| d > w.1) {
                    witness = Some((j, d, i));
                }
            }
        }
    }
    let c_applies = !odd && witness.is_some_and(|w| w.1 > tol.diam);
    let prediction = if a_applies {
        Prediction::SpectrumIsR
    } else if b_applies || c_applies {
        Prediction::FinitelyManyGaps
    } else {
        Prediction::NoConclusion
    };
    GapCriteriaReport {
        n,
        m,
        mu: avg.mu.clone(),
        a_applies,
        b_applies,
        c_applies,
        c_witness: witness.map(|w| w.0),
        min_diam: witness.map(|w| w.1),
        c_minimizer: witness.map(|w| w.2),
        alpha_bound: if c_applies { witness.map(|w| w.1 / 8.0) } else { None },
        prediction,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub bands: Vec<Band>,
    /// Disjoint, sorted, clipped to the window.
    pub merged: Vec<Interval>,
    /// Open intervals strictly inside the window.
    pub gaps: Vec<Interval>,
    pub window: Interval,
    pub criteria: Option<GapCriteriaReport>,
}

/// Union of band ranges (continuous pieces for bands with jumps), merged
/// with tolerance `tol.merge * max(1, |window|)`, and the gaps in between.
pub fn merge_and_gaps(bands: &[Band], window: Interval, spec: Option<&OperatorSpec>, tol: &Tolerances) -> SpectrumReport {
    let scale = window.0.abs().max(window.1.abs()).max(1.0);
    let tau = tol.merge * scale;
    let threshold: Box<dyn Fn(f64, f64) -> f64> = match spec {
        Some(s) => Box::new(jump_threshold(s)),
        None => Box::new(|_, _| f64::INFINITY),
    };
    let mut pieces: Vec<Interval> = bands.iter().flat_map(|b| b.pieces(&*threshold)).collect();
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<Interval> = Vec::new();
    for (a, b) in pieces {
        match merged.last_mut() {
            Some(last) if a <= last.1 + tau => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let merged: Vec<Interval> = merged
        .into_iter()
        .filter(|&(a, b)| b >= window.0 && a <= window.1)
        .map(|(a, b)| (a.max(window.0), b.min(window.1)))
        .collect();
    let mut gaps = Vec::new();
    let mut cursor = window.0;
    for &(a, b) in &merged {
        if a > cursor + tau {
            gaps.push((cursor, a));
        }
        cursor = cursor.max(b);
    }
    if window.1 > cursor + tau {
        gaps.push((cursor, window.1));
    }
    SpectrumReport { bands: bands.to_vec(), merged, gaps, window, criteria: None }
}

/// Spectral union of a sweep: merged level ranges inside the labelled hull.
pub fn spectrum_report(spec: &OperatorSpec, sweep: &SweepResult, tol: &Tolerances) -> Result<SpectrumReport> {
    let mut report = merge_and_gaps(&sweep.levels, sweep.window, Some(spec), tol);
    report.bands = sweep.bands.clone();
    let avg = mean_matrix(spec, tol)?;
    report.criteria = Some(check_gap_criteria(&avg, spec.n(), spec.m(), tol));
    Ok(report)
}

/// Overlap length of `Gamma_{k,j}` and `Gamma_{k+1,j}` for every `k >= k_threshold`
/// present in `bands` (negative values are gaps between the two ranges).
pub fn band_overlap_check(bands: &[Band], j: usize, k_threshold: i64) -> Result<Vec<(i64, f64)>> {
    let find = |k: i64| bands.iter().find(|b| b.k == k && b.j == j);
    let k_top = bands.iter().filter(|b| b.j == j).map(|b| b.k).max().ok_or_else(|| {
        Error::InvalidArgument(format!("no bands with j = {j}"))
    })?;
    let mut out = Vec::new();
    for k in k_threshold..k_top {
        let (a, b) = match (find(k), find(k + 1)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidArgument(format!("missing band ({k}, {j}) or ({}, {j})", k + 1))),
        };
        out.push((k, a.hi.min(b.hi) - a.lo.max(b.lo)));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossCheck {
    pub lam: f64,
    /// `true` for a merged-interval midpoint, `false` for a gap midpoint.
    pub expected: bool,
    pub member: bool,
    pub modulus_defect: f64,
    /// Gaps with relative width below the modulus tolerance cannot be told
    /// apart from the spectrum by the multiplier test.
    pub resolvable: bool,
}

impl CrossCheck {
    pub fn disagrees(&self) -> bool {
        self.resolvable && self.member != self.expected
    }
}

/// Monodromy membership test at every gap and merged-interval midpoint.
pub fn cross_check(spec: &OperatorSpec, report: &SpectrumReport, tol: &Tolerances) -> Result<Vec<CrossCheck>> {
    let targets: Vec<(f64, bool, bool)> = report
        .merged
        .iter()
        .map(|&(a, b)| (0.5 * (a + b), true, true))
        .chain(report.gaps.iter().map(|&(a, b)| {
            let mid = 0.5 * (a + b);
            (mid, false, (b - a) / mid.abs().max(1.0) >= tol.modulus)
        }))
        .collect();
    targets
        .par_iter()
        .map(|&(lam, expected, resolvable)| {
            let m = in_spectrum(spec, lam, tol.modulus, tol)?;
            Ok(CrossCheck { lam, expected, member: m.member, modulus_defect: m.modulus_defect, resolvable })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FourierMatrixSeries;
    use crate::galerkin::predictor;
    use crate::{CMatrix, Complex64};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn avg(mu: &[f64]) -> AveragedMatrix {
        AveragedMatrix::from_eigenvalues(mu, &tol()).unwrap()
    }

    fn band(k: i64, lo: f64, hi: f64) -> Band {
        Band { k, j: 0, samples: vec![(0.0, lo), (1.0, hi)], lo, hi, continuity_ok: true, tracking_flagged: false }
    }

    #[test]
    fn criteria_examples() {
        let r = check_gap_criteria(&avg(&[0.0, 1.0, 5.0]), 3, 3, &tol());
        assert!(r.a_applies);
        assert_eq!(r.prediction, Prediction::SpectrumIsR);

        let r = check_gap_criteria(&avg(&[0.0, 1.0, 3.0]), 4, 3, &tol());
        assert!(r.c_applies);
        assert_eq!(r.min_diam, Some(1.0));
        assert_eq!(r.alpha_bound, Some(0.125));
        assert_eq!(r.prediction, Prediction::FinitelyManyGaps);

        let r = check_gap_criteria(&avg(&[0.0, 1.0, 2.0]), 4, 3, &tol());
        assert!(!r.c_applies);
        assert_eq!(r.c_witness, Some((0, 1, 2)));
        assert_eq!(r.min_diam, Some(0.0));
        assert_eq!(r.c_minimizer, Some((2, 1, 0)));
        assert_eq!(r.prediction, Prediction::NoConclusion);

        let r = check_gap_criteria(&avg(&[0.0, 2.0]), 3, 2, &tol());
        assert!(!r.a_applies && r.b_applies);
        let r = check_gap_criteria(&avg(&[1.0, 1.0]), 3, 2, &tol());
        assert!(!r.b_applies);
        assert_eq!(r.prediction, Prediction::NoConclusion);
    }

    #[test]
    fn criteria_shift_invariance() {
        let base = check_gap_criteria(&avg(&[0.0, 1.0, 3.0, 7.5]), 4, 4, &tol());
        let shifted = check_gap_criteria(&avg(&[2.25, 3.25, 5.25, 9.75]), 4, 4, &tol());
        assert_eq!(base.c_applies, shifted.c_applies);
        assert!((base.min_diam.unwrap() - shifted.min_diam.unwrap()).abs() < 1e-12);
        assert_eq!(base.c_witness, shifted.c_witness);
    }

    #[test]
    fn merge_examples() {
        let r = merge_and_gaps(&[band(0, 0.0, 1.0), band(1, 2.0, 3.0)], (0.0, 3.0), None, &tol());
        assert_eq!(r.merged, vec![(0.0, 1.0), (2.0, 3.0)]);
        assert_eq!(r.gaps, vec![(1.0, 2.0)]);
        let r = merge_and_gaps(&[band(0, 0.0, 1.0), band(1, 1.0, 3.0), band(2, 0.5, 0.7)], (0.0, 3.0), None, &tol());
        assert_eq!(r.merged, vec![(0.0, 3.0)]);
        assert!(r.gaps.is_empty());
        let r = merge_and_gaps(&[band(0, 0.0, 1.0), band(1, 2.0, 8.0)], (0.5, 5.0), None, &tol());
        assert_eq!(r.merged, vec![(0.5, 1.0), (2.0, 5.0)]);
        assert_eq!(r.gaps, vec![(1.0, 2.0)]);
    }

    #[test]
    fn free_third_order_bands() {
        let spec = Arc::new(OperatorSpec::free(3, 1).unwrap());
        let grid = default_t_grid(65, 3, 0.0);
        assert_eq!(grid.len(), 65);
        let sweep = sweep_bands(&spec, 1..=3, &grid, None, &tol()).unwrap();
        assert_eq!(sweep.bands.len(), 3);
        for b in &sweep.bands {
            let lo = (2.0 * PI * b.k as f64 - PI / 2.0).powi(3);
            let hi = (2.0 * PI * b.k as f64 + 1.5 * PI).powi(3);
            assert!(b.continuity_ok && !b.tracking_flagged);
            assert!((b.lo - lo).abs() <= 1e-9 * hi && (b.hi - hi).abs() <= 1e-9 * hi);
        }
        for (k, overlap) in band_overlap_check(&sweep.bands, 0, 1).unwrap() {
            assert!(overlap.abs() <= 1e-9 * (2.0 * PI * k as f64 + 1.5 * PI).powi(3), "{k}: {overlap}");
        }
        let report = spectrum_report(&spec, &sweep, &tol()).unwrap();
        assert_eq!(report.merged.len(), 1);
        assert!(report.gaps.is_empty());
        assert!(band_overlap_check(&sweep.bands, 0, -3).is_err());
    }

    #[test]
    fn free_second_order_has_no_gaps() {
        let spec = Arc::new(OperatorSpec::free(2, 1).unwrap());
        let grid = default_t_grid(129, 2, 0.0);
        let sweep = sweep_bands(&spec, 0..=4, &grid, None, &tol()).unwrap();
        let report = spectrum_report(&spec, &sweep, &tol()).unwrap();
        assert!(report.gaps.is_empty(), "{:?}", report.gaps);
        assert_eq!(report.merged.len(), 1);
        assert!(report.window.0.abs() < 1e-12);
    }

    #[test]
    fn constant_fourth_order_bands_follow_predictors() {
        let c = CMatrix::from_row_slice(2, 2, &[
            Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0), Complex64::new(1.0, 0.0),
        ]);
        let spec = Arc::new(OperatorSpec::free(4, 2).unwrap().with_coefficient(2, FourierMatrixSeries::constant(c).unwrap()).unwrap());
        let grid = default_t_grid(33, 4, 0.0);
        let sweep = sweep_bands(&spec, 2..=4, &grid, None, &tol()).unwrap();
        // Labelled values always lie on one of the predictor curves at that t.
        for b in &sweep.bands {
            for &(t, lam) in &b.samples {
                let hit = (-6i64..=6).any(|k| {
                    [0.0, 2.0].iter().any(|&mu| (predictor(4, k, t, mu) - lam).abs() <= 1e-9 * lam.abs().max(1.0))
                });
                assert!(hit, "band ({}, {}) at t={t}: {lam}", b.k, b.j);
            }
        }
        let report = spectrum_report(&spec, &sweep, &tol()).unwrap();
        for b in &sweep.levels {
            for &(_, lam) in &b.samples {
                if lam >= report.window.0 && lam <= report.window.1 {
                    assert!(report.merged.iter().any(|&(a, c)| lam >= a - 1e-9 && lam <= c + 1e-9));
                }
            }
        }
    }

    #[test]
    fn bad_grids_are_rejected() {
        let spec = Arc::new(OperatorSpec::free(3, 1).unwrap());
        assert!(sweep_bands(&spec, 1..=2, &[0.0, 1.0], None, &tol()).is_err());
        assert!(sweep_bands(&spec, 1..=2, &[0.0, 0.0, 0.1], None, &tol()).is_err());
        let p2 = FourierMatrixSeries::from_harmonics(1, None, [(1, CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))), (-1, CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)))]).unwrap();
        let raw = Arc::new(OperatorSpec::free(3, 1).unwrap().with_coefficient(2, p2).unwrap());
        assert!(matches!(sweep_bands(&raw, 1..=2, &default_t_grid(17, 3, 0.0), None, &tol()), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn refined_grid_contains_special_points() {
        let g = default_t_grid(257, 4, 0.0);
        assert!(g.len() > 257);
        assert!(g.iter().any(|&t| t == 0.0));
        assert!(g.iter().any(|&t| (t - PI).abs() < 1e-12));
        assert!((g[0] + PI / 2.0).abs() < 1e-15 && (g[g.len() - 1] - 1.5 * PI).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
