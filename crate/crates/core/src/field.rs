//! Eigenfunctions `f(x, y) = Σ c_n e^(−κ_n|x|) ψ_n(y)` on rectangular grids,
//! and nodal-domain counting on the sampled values.
//!
//! Only the even part of the mirror decomposition carries eigenvalues, so the
//! half-plane solution is extended by `f(−x, y) = f(x, y)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{eval_psi_column, BasisIndex};
use crate::spectrum::SpectralPoint;

/// Points with a larger achieved tolerance are refused.
pub const CONVERGED_TOLERANCE: f64 = 1e-8;

/// Relative zero band used when the caller has no better choice.
pub const DEFAULT_ZERO_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let r = AxisRange { min, max, points };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2
            || !(self.min < self.max)
            || !self.min.is_finite()
            || !self.max.is_finite()
        {
            return Err(Error::Domain(format!(
                "axis [{}, {}] with {} points is not a valid grid",
                self.min, self.max, self.points
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.max
        } else {
            self.min + self.step() * i as f64
        }
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coordinate(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: AxisRange,
    pub y: AxisRange,
}

impl Default for GridSpec {
    /// `[−5, 5] × [−12, 6]` at 400 × 400; wide enough in `y` to show the
    /// escape channel along the negative axis.
    fn default() -> Self {
        GridSpec {
            x: AxisRange {
                min: -5.0,
                max: 5.0,
                points: 400,
            },
            y: AxisRange {
                min: -12.0,
                max: 6.0,
                points: 400,
            },
        }
    }
}

/// Sampled field, row-major with `y` as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub x: AxisRange,
    pub y: AxisRange,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn from_values(x: AxisRange, y: AxisRange, values: Vec<f64>) -> Result<Self> {
        x.validate()?;
        y.validate()?;
        if values.len() != x.points * y.points {
            return Err(Error::Domain(format!(
                "{} values do not fill a {} x {} grid",
                values.len(),
                x.points,
                y.points
            )));
        }
        Ok(FieldGrid { x, y, values })
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.x.points + ix]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Values along `y` at the grid column `ix`.
    pub fn column(&self, ix: usize) -> Vec<f64> {
        (0..self.y.points).map(|iy| self.value(ix, iy)).collect()
    }

    /// Grid index and value of the largest `|f|`.
    pub fn argmax_abs(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bk, bv), (k, &v)| {
                if v.abs() > bv.abs() {
                    (k, v)
                } else {
                    (bk, bv)
                }
            });
        (k % self.x.points, k / self.x.points, v)
    }
}

fn check_converged(point: &SpectralPoint) -> Result<()> {
    if !(point.tolerance_achieved <= CONVERGED_TOLERANCE) {
        return Err(Error::Domain(format!(
            "eigenvalue at lambda = {} reached only tolerance {:e}",
            point.lambda, point.tolerance_achieved
        )));
    }
    if point.coefficients.is_empty() {
        return Err(Error::Domain(
            "spectral point carries no coefficients".into(),
        ));
    }
    Ok(())
}

/// `c_n ψ_n(y)` for one `y`.
fn weighted_column(coefficients: &[f64], y: f64) -> Vec<f64> {
    let psi = eval_psi_column(BasisIndex(coefficients.len() - 1), y);
    coefficients.iter().zip(psi).map(|(c, p)| c * p).collect()
}

/// Samples the eigenfunction on `grid`.
pub fn evaluate_field(point: &SpectralPoint, grid: &GridSpec) -> Result<FieldGrid> {
    check_converged(point)?;
    grid.x.validate()?;
    grid.y.validate()?;
    let gap = point.gap;
    let kappas: Vec<f64> = (0..point.coefficients.len())
        .map(|n| (n as f64 + gap).sqrt())
        .collect();

    // Decay factors per distinct |x|; mirrored columns share a row.
    let xs = grid.x.coordinates();
    let mut distinct: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let decay: Vec<Vec<f64>> = distinct
        .par_iter()
        .map(|&ax| kappas.iter().map(|k| (-k * ax).exp()).collect())
        .collect();
    let column_of: Vec<usize> = xs
        .iter()
        .map(|x| {
            distinct
                .binary_search_by(|d| d.total_cmp(&x.abs()))
                .expect("present")
        })
        .collect();

    let rows: Vec<Vec<f64>> = grid
        .y
        .coordinates()
        .par_iter()
        .map(|&y| {
            let w = weighted_column(&point.coefficients, y);
            let sums: Vec<f64> = decay
                .iter()
                .map(|d| d.iter().zip(&w).map(|(a, b)| a * b).sum())
                .collect();
            column_of.iter().map(|&j| sums[j]).collect()
        })
        .collect();
    Ok(FieldGrid {
        x: grid.x,
        y: grid.y,
        values: rows.concat(),
    })
}

/// `f(0, y)` for each `y`.
pub fn axis_restriction(point: &SpectralPoint, ys: &[f64]) -> Result<Vec<f64>> {
    check_converged(point)?;
    Ok(ys
        .par_iter()
        .map(|&y| weighted_column(&point.coefficients, y).iter().sum())
        .collect())
}

/// Zero band `DEFAULT_ZERO_BAND · max|f|`.
pub fn default_zero_band(field: &FieldGrid) -> f64 {
    DEFAULT_ZERO_BAND * field.max_abs()
}

/// Connected components (4-neighbour) of same-sign cells with `|f| > zero_band`.
pub fn nodal_domain_count(field: &FieldGrid, zero_band: f64) -> Result<usize> {
    if !(zero_band >= 0.0) {
        return Err(Error::Domain("zero band must be nonnegative".into()));
    }
    let (nx, ny) = (field.x.points, field.y.points);
    let sign = |k: usize| -> i8 {
        let v = field.values[k];
        if v > zero_band {
            1
        } else if v < -zero_band {
            -1
        } else {
            0
        }
    };
    let banded = (0..nx * ny).filter(|&k| sign(k) == 0).count();
    if 2 * banded > nx * ny {
        return Err(Error::Degenerate(format!(
            "{banded} of {} cells fall in the zero band",
            nx * ny
        )));
    }
    let mut seen = vec![false; nx * ny];
    let mut domains = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        let s = sign(start);
        if seen[start] || s == 0 {
            continue;
        }
        domains += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (ix, iy) = (k % nx, k / nx);
            let mut visit = |j: usize| {
                if !seen[j] && sign(j) == s {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if ix > 0 {
                visit(k - 1);
            }
            if ix + 1 < nx {
                visit(k + 1);
            }
            if iy > 0 {
                visit(k - nx);
            }
            if iy + 1 < ny {
                visit(k + nx);
            }
        }
    }
    Ok(domains)
}
