//! Discrete spectrum below the continuum edge `½`.
//!
//! Eigenvalues are located through the inertia of `B_λ(ε)`: the number of
//! negative eigenvalues of the real symmetric truncation at `ε` equals the
//! number of eigenvalues of the truncated problem below `ε` (the diagonal
//! `κ_n(ε)` decreases strictly in `ε`). The determinant sign is the parity of
//! that count, so a sign scan and a count scan bracket the same roots; the
//! count also separates two roots that fall between neighbouring grid points.
//!
//! All searches run in the gap variable `μ = ½ − ε` on a log grid, because the
//! eigenvalues pile up at the threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::secular::{count_below_gap, null_vector, secular_matrix_at_gap};
use crate::CRITICAL_COUPLING;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Bisection width and allowed eigenvalue drift between truncations.
    pub eps_tolerance: f64,
    pub initial_truncation: usize,
    pub max_truncation: usize,
    /// Points of the log grid in `μ = ½ − ε`.
    pub grid_points: usize,
    /// Smallest gap scanned; also the coupling offset used to confirm
    /// appearance thresholds.
    pub threshold_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_tolerance: 1e-10,
            initial_truncation: 512,
            max_truncation: 16384,
            grid_points: 512,
            threshold_margin: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tolerance > 0.0) {
            return Err(Error::Domain("eps_tolerance must be positive".into()));
        }
        if self.initial_truncation < 2 || self.initial_truncation > self.max_truncation {
            return Err(Error::Domain(format!(
                "need 2 <= initial_truncation ({}) <= max_truncation ({})",
                self.initial_truncation, self.max_truncation
            )));
        }
        if self.grid_points < 16 {
            return Err(Error::Domain("grid_points must be at least 16".into()));
        }
        if !(self.threshold_margin > 0.0 && self.threshold_margin < 0.5) {
            return Err(Error::Domain(
                "threshold_margin must lie in (0, 1/2)".into(),
            ));
        }
        Ok(())
    }
}

/// A converged eigenvalue `ε ∈ (0, ½)` with its coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub lambda: f64,
    pub energy: f64,
    /// `½ − energy`, carried separately at full relative precision.
    pub gap: f64,
    /// Null vector of `B_λ(ε)`, `‖c‖₂ = 1`, `c_0 ≥ 0`.
    pub coefficients: Vec<f64>,
    pub truncation_used: usize,
    pub tolerance_achieved: f64,
}

fn check_subcritical(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Domain(format!(
            "coupling {lambda} must be finite and nonnegative"
        )));
    }
    if lambda >= CRITICAL_COUPLING {
        return Err(Error::Domain(format!(
            "coupling {lambda} is not subcritical (< sqrt 2)"
        )));
    }
    Ok(())
}

/// Log-spaced gaps from `½` down to `margin`.
fn gap_grid(margin: f64, points: usize) -> Vec<f64> {
    let (a, b) = (0.5f64.ln(), margin.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                0.5
            } else if i + 1 == points {
                margin
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Bisects for the gap at which the count below `½ − gap` reaches `k`,
/// inside `[lo, hi]` with `count(hi) < k ≤ count(lo)`. Runs to the floating
/// point resolution of the bracket.
fn bisect_gap(lambda: f64, size: usize, k: usize, mut lo: f64, mut hi: f64) -> (f64, f64) {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below_gap(lambda, mid, size) >= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), hi - lo)
}

/// Gaps of all eigenvalues of the `size`-truncation, largest gap first, with
/// the worst bisection width.
fn gaps_at(lambda: f64, size: usize, opts: &SolverOptions) -> (Vec<f64>, f64) {
    let grid = gap_grid(opts.threshold_margin, opts.grid_points);
    let counts: Vec<usize> = grid
        .iter()
        .map(|&g| count_below_gap(lambda, g, size))
        .collect();
    let mut gaps = Vec::with_capacity(*counts.last().unwrap_or(&0));
    let mut width: f64 = 0.0;
    for i in 1..grid.len() {
        let (below, above) = (counts[i - 1], counts[i]);
        for k in below + 1..=above {
            let (g, w) = bisect_gap(lambda, size, k, grid[i], grid[i - 1]);
            gaps.push(g);
            width = width.max(w);
        }
    }
    (gaps, width)
}

/// All eigenvalues `ε ∈ (0, ½)` of `H_λ`, increasing, each converged in the
/// truncation size.
pub fn find_eigenvalues(lambda: f64, opts: &SolverOptions) -> Result<Vec<SpectralPoint>> {
    check_subcritical(lambda)?;
    opts.validate()?;
    if lambda == 0.0 {
        return Ok(Vec::new());
    }
    let (gaps, size, tolerance) = converged_gaps(lambda, opts)?;
    gaps.into_iter()
        .map(|gap| {
            let op = secular_matrix_at_gap(lambda, gap, size);
            let coefficients = null_vector(&op)?.into_iter().map(|z| z.re).collect();
            Ok(SpectralPoint {
                lambda,
                energy: 0.5 - gap,
                gap,
                coefficients,
                truncation_used: size,
                tolerance_achieved: tolerance,
            })
        })
        .collect()
}

fn converged_gaps(lambda: f64, opts: &SolverOptions) -> Result<(Vec<f64>, usize, f64)> {
    let mut size = opts.initial_truncation;
    let (mut prev, _) = gaps_at(lambda, size, opts);
    let mut last_drift = f64::INFINITY;
    loop {
        let next_size = size * 2;
        if next_size > opts.max_truncation {
            return Err(Error::NonConvergence(format!(
                "eigenvalues at lambda = {lambda} still drift by {last_drift:e} at truncation {size}"
            )));
        }
        let (cur, width) = gaps_at(lambda, next_size, opts);
        if cur.len() == prev.len() {
            let drift = cur
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if drift < opts.eps_tolerance {
                return Ok((cur, next_size, drift.max(width)));
            }
            last_drift = drift;
        }
        prev = cur;
        size = next_size;
    }
}

/// Number of eigenvalues below `½`.
pub fn count_eigenvalues(lambda: f64, opts: &SolverOptions) -> Result<usize> {
    Ok(find_eigenvalues(lambda, opts)?.len())
}

/// Count below `½ − threshold_margin`, doubling the truncation until two
/// successive sizes agree. Cheaper than [`count_eigenvalues`] since no
/// eigenvalue is refined.
pub fn converged_count(lambda: f64, opts: &SolverOptions) -> Result<usize> {
    check_subcritical(lambda)?;
    opts.validate()?;
    let mut size = opts.initial_truncation;
    let mut prev = count_below_gap(lambda, opts.threshold_margin, size);
    while size * 2 <= opts.max_truncation {
        size *= 2;
        let cur = count_below_gap(lambda, opts.threshold_margin, size);
        if cur == prev {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!(
        "eigenvalue count at lambda = {lambda} not stable up to truncation {}",
        opts.max_truncation
    )))
}

/// Leading-order eigenvalue count near the critical coupling,
/// `¼ √(1 / (√2 (√2 − λ)))`.
pub fn solomyak_estimate(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < CRITICAL_COUPLING) {
        return Err(Error::Domain(format!(
            "coupling {lambda} outside (0, sqrt 2)"
        )));
    }
    Ok(0.25 * (1.0 / (CRITICAL_COUPLING * (CRITICAL_COUPLING - lambda))).sqrt())
}

/// Coupling `λ_k` at which the `k`-th eigenvalue leaves the threshold `½`.
pub fn appearance_threshold(k: usize, opts: &SolverOptions) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(
            "the first eigenvalue exists for every lambda > 0".into(),
        ));
    }
    opts.validate()?;
    let mut lo = 0.0;
    let mut hi = None;
    for exp in 1..=8 {
        let lambda = CRITICAL_COUPLING - 10f64.powi(-exp);
        if converged_count(lambda, opts)? >= k {
            hi = Some(lambda);
            break;
        }
        lo = lambda;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::NonConvergence(format!("could not bracket threshold {k} below sqrt 2"))
    })?;
    while hi - lo > opts.threshold_margin {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if converged_count(mid, opts)? >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if converged_count(hi, opts)? != k {
        return Err(Error::NonConvergence(format!(
            "more than one eigenvalue appears at threshold {k}"
        )));
    }
    Ok(0.5 * (lo + hi))
}

/// `μ_λ = ½ − ε₁(λ)`.
pub fn energy_gap(lambda: f64, opts: &SolverOptions) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("coupling {lambda} must be positive")));
    }
    find_eigenvalues(lambda, opts)?
        .first()
        .map(|p| p.gap)
        .ok_or_else(|| Error::NonConvergence(format!("no eigenvalue found at lambda = {lambda}")))
}

/// Power law `gap ≈ coefficient · λ^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub coefficient: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Degenerate("need at least two paired samples".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Degenerate(
            "samples must be positive and finite".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 1e-300 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok(PowerLawFit {
        exponent: slope,
        coefficient: (my - slope * mx).exp(),
    })
}

/// Fits `μ_λ ≈ C λ^p` over weak-coupling samples; expected `p = 4`,
/// `C = 1/64`.
pub fn weak_coupling_fit(lambda_samples: &[f64], opts: &SolverOptions) -> Result<PowerLawFit> {
    if lambda_samples.len() < 4 {
        return Err(Error::Degenerate(
            "need at least four coupling samples".into(),
        ));
    }
    if let Some(bad) = lambda_samples.iter().find(|&&l| !(l > 0.0 && l <= 0.5)) {
        return Err(Error::Domain(format!("sample {bad} outside (0, 0.5]")));
    }
    let first = lambda_samples[0];
    if lambda_samples.iter().all(|&l| l == first) {
        return Err(Error::Degenerate("all coupling samples coincide".into()));
    }
    let gaps = lambda_samples
        .par_iter()
        .map(|&l| energy_gap(l, opts))
        .collect::<Result<Vec<_>>>()?;
    fit_power_law(lambda_samples, &gaps)
}

/// One row of a coupling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub energies: Vec<f64>,
    pub truncation_used: usize,
    pub tolerance_achieved: Option<f64>,
    /// Solver failure for this row; the sweep itself carries on.
    pub error: Option<String>,
}

/// Eigenvalues for every coupling in `lambdas`, rows in input order.
pub fn sweep(lambdas: &[f64], opts: &SolverOptions) -> Vec<SweepRecord> {
    lambdas
        .par_iter()
        .map(|&lambda| match find_eigenvalues(lambda, opts) {
            Ok(points) => SweepRecord {
                lambda,
                energies: points.iter().map(|p| p.energy).collect(),
                truncation_used: points.first().map_or(0, |p| p.truncation_used),
                tolerance_achieved: Some(
                    points
                        .iter()
                        .map(|p| p.tolerance_achieved)
                        .fold(0.0, f64::max),
                ),
                error: None,
            },
            Err(e) => SweepRecord {
                lambda,
                energies: Vec::new(),
                truncation_used: 0,
                tolerance_achieved: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// `steps` couplings from `min` to `max`; with `log_near_critical` the
/// spacing is uniform in `ln(√2 − λ)` instead of `λ`.
pub fn sweep_grid(min: f64, max: f64, steps: usize, log_near_critical: bool) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Domain("sweep needs at least one step".into()));
    }
    if !(0.0 <= min && min <= max && max < CRITICAL_COUPLING) {
        return Err(Error::Domain(format!(
            "sweep range [{min}, {max}] must lie in [0, sqrt 2)"
        )));
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    let t = |i: usize| i as f64 / (steps - 1) as f64;
    Ok(if log_near_critical {
        let (a, b) = (
            (CRITICAL_COUPLING - min).ln(),
            (CRITICAL_COUPLING - max).ln(),
        );
        (0..steps)
            .map(|i| CRITICAL_COUPLING - (a + (b - a) * t(i)).exp())
            .collect()
    } else {
        (0..steps).map(|i| min + (max - min) * t(i)).collect()
    })
}
