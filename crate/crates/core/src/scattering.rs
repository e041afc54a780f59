//! On-shell scattering in the channel basis.
//!
//! A wave incident in channel `m` produces reflected amplitudes `r_mn` in
//! every channel `n`; transmitted amplitudes follow from continuity at
//! `x = 0` as `t_mn = δ_mn + r_mn`. Open channels (`ν_n < k²`) carry flux,
//! closed ones are evanescent.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{coupling_element, BasisIndex};
use crate::secular::{kappa, solve_tridiagonal, SheetIndex};

/// Energies closer than this to a threshold are refused.
pub const THRESHOLD_GUARD: f64 = 1e-9;

/// Amplitude drift between truncation doublings accepted as converged.
pub const AMPLITUDE_TOLERANCE: f64 = 1e-10;

const MAX_TRUNCATION: usize = 1 << 16;

/// Closed channels beyond the last open one before doubling starts.
pub const EVANESCENT_PADDING: usize = 8;

/// `p_n = √(k² − ν_n)` for `n < size`: positive on open channels and
/// `−i√(ν_n − k²)` on closed ones, so that `e^(−i p_n x)` decays for `x > 0`.
pub fn channel_momenta(k_squared: f64, size: usize) -> Vec<Complex64> {
    (0..size)
        .map(|n| {
            let d = k_squared - BasisIndex(n).nu();
            if d >= 0.0 {
                Complex64::new(d.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, -(-d).sqrt())
            }
        })
        .collect()
}

/// Number of open channels `#{n : ν_n < k²}`.
pub fn open_channel_count(k_squared: f64) -> usize {
    if k_squared <= 0.5 {
        0
    } else {
        (k_squared - 0.5).ceil() as usize
    }
}

/// Solved scattering problem at one `(λ, k²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringData {
    pub lambda: f64,
    pub k_squared: f64,
    pub open_channels: usize,
    pub truncation_used: usize,
    /// `p_n` for every retained channel.
    pub momenta: Vec<Complex64>,
    /// `reflection[m][n] = r_mn` for incident `m < M`, all retained `n`.
    pub reflection: Vec<Vec<Complex64>>,
    /// `transmission[m][n] = δ_mn + r_mn`.
    pub transmission: Vec<Vec<Complex64>>,
    /// `‖S†S − 1‖₂` for the flux-normalized open block.
    pub unitarity_defect: f64,
    /// `max |S − Sᵀ|` for the flux-normalized open block.
    pub reciprocity_defect: f64,
}

impl ScatteringData {
    /// The `2M × 2M` flux-normalized on-shell matrix `[[R, T], [T, R]]` with
    /// entries scaled by `√(p_n / p_m)`. The interaction is even in `x`, so
    /// incidence from the right mirrors incidence from the left.
    pub fn flux_matrix(&self) -> DMatrix<Complex64> {
        flux_matrix(
            &self.reflection,
            &self.transmission,
            &self.momenta,
            self.open_channels,
        )
    }
}

fn flux_matrix(
    reflection: &[Vec<Complex64>],
    transmission: &[Vec<Complex64>],
    momenta: &[Complex64],
    open: usize,
) -> DMatrix<Complex64> {
    let mut s = DMatrix::<Complex64>::zeros(2 * open, 2 * open);
    for m in 0..open {
        for n in 0..open {
            let w = (momenta[n].re / momenta[m].re).sqrt();
            let r = reflection[m][n] * w;
            let t = transmission[m][n] * w;
            s[(m, n)] = r;
            s[(open + m, open + n)] = r;
            s[(m, open + n)] = t;
            s[(open + m, n)] = t;
        }
    }
    s
}

fn unitarity_defect(s: &DMatrix<Complex64>) -> f64 {
    let n = s.nrows();
    let g = s.adjoint() * s - DMatrix::<Complex64>::identity(n, n);
    g.singular_values().iter().fold(0.0, |a, &v| a.max(v))
}

fn reciprocity_defect(s: &DMatrix<Complex64>) -> f64 {
    (s - s.transpose()).iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Reflection rows for every open incident channel at a fixed truncation.
fn reflection_at(lambda: f64, momenta: &[Complex64], open: usize) -> Result<Vec<Vec<Complex64>>> {
    let size = momenta.len();
    let i = Complex64::new(0.0, 1.0);
    let diag: Vec<Complex64> = momenta.iter().map(|p| 2.0 * p).collect();
    let off: Vec<Complex64> = (0..size - 1)
        .map(|l| -i * lambda * coupling_element(BasisIndex(l + 1), BasisIndex(l)))
        .collect();
    let scale = diag
        .iter()
        .chain(&off)
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    (0..open)
        .map(|m| {
            let mut rhs = vec![Complex64::new(0.0, 0.0); size];
            if m > 0 {
                rhs[m - 1] = i * lambda * coupling_element(BasisIndex(m - 1), BasisIndex(m));
            }
            if m + 1 < size {
                rhs[m + 1] = i * lambda * coupling_element(BasisIndex(m + 1), BasisIndex(m));
            }
            let x = solve_tridiagonal(&off, &diag, &off, &rhs);
            check_solution(&diag, &off, &x, &rhs, scale)?;
            Ok(x)
        })
        .collect()
}

fn check_solution(
    diag: &[Complex64],
    off: &[Complex64],
    x: &[Complex64],
    rhs: &[Complex64],
    scale: f64,
) -> Result<()> {
    let n = diag.len();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let xn = norm(x);
    let bn = norm(rhs);
    if !xn.is_finite() {
        return Err(Error::Singular("non-finite amplitudes".into()));
    }
    let mut residual = 0.0;
    for l in 0..n {
        let mut acc = diag[l] * x[l] - rhs[l];
        if l > 0 {
            acc += off[l - 1] * x[l - 1];
        }
        if l + 1 < n {
            acc += off[l] * x[l + 1];
        }
        residual += acc.norm_sqr();
    }
    let residual = residual.sqrt();
    if residual > 1e-8 * (bn + scale * xn) || xn * scale > 1e14 * bn.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular(format!(
            "truncated channel system is numerically singular (|x| = {xn:e}, residual {residual:e})"
        )));
    }
    Ok(())
}

/// Solves for the reflection amplitudes of every open incident channel,
/// doubling the truncation from `size` until all amplitudes settle.
pub fn solve_reflection(lambda: f64, k_squared: f64, size: usize) -> Result<ScatteringData> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "coupling {lambda} must be finite and nonnegative"
        )));
    }
    if !k_squared.is_finite() {
        return Err(Error::Domain(format!("energy {k_squared} is not finite")));
    }
    let open = open_channel_count(k_squared);
    if open == 0 {
        return Err(Error::Domain(format!(
            "no open channel at k² = {k_squared}"
        )));
    }
    let nearest = (k_squared - 0.5).round().max(0.0);
    if (k_squared - (nearest + 0.5)).abs() < THRESHOLD_GUARD {
        return Err(Error::Domain(format!(
            "k² = {k_squared} sits on the threshold {}",
            nearest + 0.5
        )));
    }
    if size < open + EVANESCENT_PADDING {
        return Err(Error::Domain(format!(
            "truncation {size} leaves fewer than {EVANESCENT_PADDING} closed channels"
        )));
    }

    let mut n = size;
    let mut momenta = channel_momenta(k_squared, n);
    let mut reflection = reflection_at(lambda, &momenta, open)?;
    loop {
        if 2 * n > MAX_TRUNCATION {
            return Err(Error::NonConvergence(format!(
                "reflection amplitudes still moving at truncation {n}"
            )));
        }
        let momenta2 = channel_momenta(k_squared, 2 * n);
        let reflection2 = reflection_at(lambda, &momenta2, open)?;
        let drift = reflection
            .iter()
            .zip(&reflection2)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .chain(
                reflection2
                    .iter()
                    .flat_map(|row| row[n..].iter().map(|z| z.norm())),
            )
            .fold(0.0, f64::max);
        n *= 2;
        momenta = momenta2;
        reflection = reflection2;
        if drift < AMPLITUDE_TOLERANCE {
            break;
        }
    }

    let transmission: Vec<Vec<Complex64>> = reflection
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .enumerate()
                .map(|(k, r)| if k == m { r + 1.0 } else { *r })
                .collect()
        })
        .collect();
    let s = flux_matrix(&reflection, &transmission, &momenta, open);
    Ok(ScatteringData {
        lambda,
        k_squared,
        open_channels: open,
        truncation_used: n,
        unitarity_defect: unitarity_defect(&s),
        reciprocity_defect: reciprocity_defect(&s),
        momenta,
        reflection,
        transmission,
    })
}

/// `σ_min / σ_max` of the channel system matrix `2p_n δ_ln − iλ(ψ_l, yψ_n)`
/// continued to complex `energy` on `sheet` with `p_n = iκ_n`. It vanishes
/// exactly where the continued resolvent has a pole.
pub fn scattering_singularity(
    lambda: f64,
    energy: Complex64,
    sheet: SheetIndex,
    size: usize,
) -> f64 {
    let size = size.max(1);
    let i = Complex64::new(0.0, 1.0);
    let mut a = DMatrix::<Complex64>::zeros(size, size);
    for l in 0..size {
        a[(l, l)] = 2.0 * i * kappa(BasisIndex(l), energy, sheet);
        if l + 1 < size {
            let c = -i * lambda * coupling_element(BasisIndex(l + 1), BasisIndex(l));
            a[(l, l + 1)] = c;
            a[(l + 1, l)] = c;
        }
    }
    let sv = a.singular_values();
    let max = sv.iter().fold(0.0f64, |m, &v| m.max(v));
    let min = sv.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}
