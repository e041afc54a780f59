//! The secular (Jacobi) matrix `B_λ(ε)`.
//!
//! `(B_λ)_{mn} = κ_n δ_{mn} + ½λ (ψ_m, yψ_n)` with `κ_n = √(n + ½ − ε)`. On
//! sheet `s` the first `s − 1` square roots carry a flipped sign, which is how
//! the determinant is continued through the cuts `ε > n + ½`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{coupling_element, BasisIndex};

/// Riemann sheet label; `1` is the physical sheet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SheetIndex(u32);

impl SheetIndex {
    pub const PHYSICAL: SheetIndex = SheetIndex(1);

    pub fn new(s: u32) -> Result<Self> {
        if s == 0 {
            Err(Error::Domain("sheet index starts at 1".into()))
        } else {
            Ok(SheetIndex(s))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn is_physical(self) -> bool {
        self.0 == 1
    }

    /// Whether `κ_n` carries a flipped sign on this sheet (`n ≤ s − 2`).
    pub fn flips(self, n: usize) -> bool {
        (n as u64) + 2 <= u64::from(self.0)
    }
}

impl TryFrom<u32> for SheetIndex {
    type Error = Error;
    fn try_from(s: u32) -> Result<Self> {
        SheetIndex::new(s)
    }
}

impl From<SheetIndex> for u32 {
    fn from(s: SheetIndex) -> u32 {
        s.0
    }
}

impl std::fmt::Display for SheetIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Square root with `Re ≥ 0`; on the cut (negative reals) the result has
/// `Im ≥ 0` regardless of the sign of the zero imaginary part.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        if z.re >= 0.0 {
            Complex64::new(z.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-z.re).sqrt())
        }
    } else {
        let r = z.sqrt();
        if r.re < 0.0 {
            -r
        } else {
            r
        }
    }
}

/// `κ_n(ε)` on the given sheet.
pub fn kappa(n: BasisIndex, energy: Complex64, sheet: SheetIndex) -> Complex64 {
    let z = Complex64::new(n.nu() - energy.re, -energy.im);
    let root = principal_sqrt(z);
    if sheet.flips(n.0) {
        -root
    } else {
        root
    }
}

/// Off-diagonal entry `(B_λ)_{n,n+1} = λ√(n+1) / (2√2)`.
#[inline]
pub fn offdiag_entry(lambda: f64, n: usize) -> f64 {
    0.5 * lambda * coupling_element(BasisIndex(n + 1), BasisIndex(n))
}

/// `N × N` truncation of `B_λ(ε)` on a chosen sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    diag: Vec<Complex64>,
    offdiag: Vec<f64>,
    lambda: f64,
    energy: Complex64,
    sheet: SheetIndex,
}

/// Builds the truncated secular matrix.
pub fn secular_matrix(
    lambda: f64,
    energy: Complex64,
    sheet: SheetIndex,
    size: usize,
) -> Result<TridiagonalOperator> {
    if size < 2 {
        return Err(Error::Domain(format!("truncation {size} < 2")));
    }
    let diag = (0..size)
        .map(|n| kappa(BasisIndex(n), energy, sheet))
        .collect();
    let offdiag = (0..size - 1).map(|n| offdiag_entry(lambda, n)).collect();
    Ok(TridiagonalOperator {
        diag,
        offdiag,
        lambda,
        energy,
        sheet,
    })
}

/// Physical-sheet matrix at `ε = ½ − gap`, with `κ_n = √(n + gap)` formed
/// directly so that tiny gaps keep their relative precision.
pub(crate) fn secular_matrix_at_gap(lambda: f64, gap: f64, size: usize) -> TridiagonalOperator {
    let diag = (0..size)
        .map(|n| Complex64::new((n as f64 + gap).sqrt(), 0.0))
        .collect();
    let offdiag = (0..size.saturating_sub(1))
        .map(|n| offdiag_entry(lambda, n))
        .collect();
    TridiagonalOperator {
        diag,
        offdiag,
        lambda,
        energy: Complex64::new(0.5 - gap, 0.0),
        sheet: SheetIndex::PHYSICAL,
    }
}

impl TridiagonalOperator {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn energy(&self) -> Complex64 {
        self.energy
    }

    pub fn sheet(&self) -> SheetIndex {
        self.sheet
    }

    /// `B c`.
    pub fn apply(&self, c: &[Complex64]) -> Vec<Complex64> {
        let n = self.size();
        assert_eq!(c.len(), n, "vector length must match the truncation");
        (0..n)
            .map(|k| {
                let mut acc = self.diag[k] * c[k];
                if k > 0 {
                    acc += self.offdiag[k - 1] * c[k - 1];
                }
                if k + 1 < n {
                    acc += self.offdiag[k] * c[k + 1];
                }
                acc
            })
            .collect()
    }

    /// Determinant by the three-term recurrence, rescaled every step.
    pub fn determinant(&self) -> ScaledDeterminant {
        tridiagonal_determinant(&self.diag, &self.offdiag)
    }
}

/// `mantissa · 2^exponent` with `|mantissa| ∈ [1, 2)`, or exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledDeterminant {
    mantissa: Complex64,
    exponent: i64,
}

impl ScaledDeterminant {
    pub fn new(mantissa: Complex64, exponent: i64) -> Self {
        let (mantissa, shift) = normalize(mantissa);
        if mantissa == Complex64::new(0.0, 0.0) {
            ScaledDeterminant {
                mantissa,
                exponent: 0,
            }
        } else {
            ScaledDeterminant {
                mantissa,
                exponent: exponent + shift,
            }
        }
    }

    pub fn mantissa(&self) -> Complex64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.re == 0.0 && self.mantissa.im == 0.0
    }

    /// `log₂ |value|`; `-∞` at an exact zero.
    pub fn log2_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.norm().log2() + self.exponent as f64
        }
    }

    /// The value as a plain complex number (may overflow to infinity).
    pub fn value(&self) -> Complex64 {
        self.scaled(0.0)
    }

    /// `value · 2^(-log2_divisor)`, evaluated without intermediate overflow.
    pub fn scaled(&self, log2_divisor: f64) -> Complex64 {
        if self.is_zero() {
            return self.mantissa;
        }
        self.mantissa * (self.exponent as f64 - log2_divisor).exp2()
    }

    /// `self / other` as a plain complex number.
    pub fn ratio(&self, other: &ScaledDeterminant) -> Complex64 {
        (self.mantissa / other.mantissa) * ((self.exponent - other.exponent) as f64).exp2()
    }
}

fn normalize(m: Complex64) -> (Complex64, i64) {
    let a = m.norm();
    if a == 0.0 || !a.is_finite() {
        return (m, 0);
    }
    let mut shift = a.log2().floor() as i64;
    let mut scaled = m * pow2(-shift);
    // log2 rounding can leave the modulus a hair outside [1, 2)
    let s = scaled.norm();
    if s >= 2.0 {
        scaled *= 0.5;
        shift += 1;
    } else if s < 1.0 {
        scaled *= 2.0;
        shift -= 1;
    }
    (scaled, shift)
}

/// Exact power of two for the exponents the recurrence produces.
fn pow2(k: i64) -> f64 {
    let k = k.clamp(-1022, 1023) as i32;
    2f64.powi(k)
}

pub(crate) fn tridiagonal_determinant(diag: &[Complex64], offdiag: &[f64]) -> ScaledDeterminant {
    let n = diag.len();
    if n == 0 {
        return ScaledDeterminant::new(Complex64::new(1.0, 0.0), 0);
    }
    let mut prev = Complex64::new(1.0, 0.0);
    let mut cur = diag[0];
    let mut exponent: i64 = 0;
    for k in 1..n {
        let b = offdiag[k - 1];
        let next = diag[k] * cur - (b * b) * prev;
        prev = cur;
        cur = next;
        let reference = if cur.norm() > 0.0 {
            cur.norm()
        } else {
            prev.norm()
        };
        if reference > 0.0 && reference.is_finite() {
            let shift = reference.log2().floor() as i64;
            if shift != 0 {
                let f = pow2(-shift);
                cur *= f;
                prev *= f;
                exponent += shift;
            }
        }
    }
    ScaledDeterminant::new(cur, exponent)
}

/// `det B_N` as a scaled mantissa/exponent pair.
pub fn scaled_determinant(
    lambda: f64,
    energy: Complex64,
    sheet: SheetIndex,
    size: usize,
) -> Result<ScaledDeterminant> {
    Ok(secular_matrix(lambda, energy, sheet, size)?.determinant())
}

/// Number of eigenvalues of the truncated problem below `ε = ½ − gap`,
/// i.e. the number of negative eigenvalues of the real symmetric matrix
/// `B_λ(½ − gap)` on the physical sheet, read off the LDLᵀ pivots.
///
/// The gap is the independent variable so that energies within `1e-12` of
/// the threshold keep full relative precision in `κ_0 = √gap`.
pub fn count_below_gap(lambda: f64, gap: f64, size: usize) -> usize {
    let mut count = 0;
    let mut pivot = gap.sqrt();
    if pivot < 0.0 {
        count += 1;
    }
    for k in 1..size {
        if pivot == 0.0 {
            pivot = f64::MIN_POSITIVE;
        }
        let b = offdiag_entry(lambda, k - 1);
        pivot = (k as f64 + gap).sqrt() - b * b / pivot;
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves a complex tridiagonal system with partial pivoting. Exactly zero
/// pivots are replaced by a tiny multiple of the matrix scale, which is what
/// inverse iteration on a singular matrix needs.
pub(crate) fn solve_tridiagonal(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &[Complex64],
) -> Vec<Complex64> {
    let n = diag.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    du.push(zero);
    let mut dl = sub.to_vec();
    dl.push(zero);
    let mut du2 = vec![zero; n];
    let mut b = rhs.to_vec();
    let scale = diag
        .iter()
        .chain(sub)
        .chain(sup)
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = Complex64::new((scale * 1e-280).max(f64::MIN_POSITIVE), 0.0);

    for i in 0..n.saturating_sub(1) {
        if d[i].norm() >= dl[i].norm() {
            if d[i] == zero {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] = b[i + 1] - fact * b[i];
            dl[i] = zero;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            b.swap(i, i + 1);
            b[i + 1] = b[i + 1] - fact * b[i];
        }
    }
    if d[n - 1] == zero {
        d[n - 1] = tiny;
    }
    let mut x = vec![zero; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        if i + 1 < n {
            acc -= du[i] * x[i + 1];
        }
        if i + 2 < n {
            acc -= du2[i] * x[i + 2];
        }
        x[i] = acc / d[i];
    }
    x
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize_in_place(v: &mut [Complex64]) -> bool {
    let s = norm2(v);
    if s == 0.0 || !s.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|z| *z /= s);
    true
}

/// Null vector of `B_λ(ε)` at a root `ε`, normalized to `‖c‖₂ = 1` with `c_0`
/// real and nonnegative.
pub fn kernel_vector(
    lambda: f64,
    energy: Complex64,
    sheet: SheetIndex,
    size: usize,
) -> Result<Vec<Complex64>> {
    let op = secular_matrix(lambda, energy, sheet, size)?;
    null_vector(&op)
}

/// Residual above which [`kernel_vector`] refuses the input energy.
pub const KERNEL_RESIDUAL_LIMIT: f64 = 1e-6;

pub(crate) fn null_vector(op: &TridiagonalOperator) -> Result<Vec<Complex64>> {
    let n = op.size();
    let zero = Complex64::new(0.0, 0.0);
    let off: Vec<Complex64> = op.offdiag.iter().map(|&b| Complex64::new(b, 0.0)).collect();

    // Seed from the forward recurrence of the first N − 1 rows; it is the
    // exact null vector in exact arithmetic and only needs cleaning up.
    let mut seed = vec![zero; n];
    if op.offdiag.iter().all(|&b| b != 0.0) {
        seed[0] = Complex64::new(1.0, 0.0);
        for k in 0..n - 1 {
            let mut acc = op.diag[k] * seed[k];
            if k > 0 {
                acc += op.offdiag[k - 1] * seed[k - 1];
            }
            let next = -acc / op.offdiag[k];
            if !next.is_finite() || next.norm() > 1e8 {
                break;
            }
            seed[k + 1] = next;
        }
    } else {
        let k = (0..n)
            .min_by(|&a, &b| op.diag[a].norm().total_cmp(&op.diag[b].norm()))
            .unwrap_or(0);
        seed[k] = Complex64::new(1.0, 0.0);
    }
    normalize_in_place(&mut seed);

    let mut c = seed;
    for _ in 0..2 {
        let mut next = solve_tridiagonal(&off, &op.diag, &off, &c);
        if !normalize_in_place(&mut next) {
            break;
        }
        c = next;
    }

    let residual = norm2(&op.apply(&c));
    if !(residual <= KERNEL_RESIDUAL_LIMIT) {
        return Err(Error::NotARoot {
            energy: format!("{}", op.energy),
            residual,
        });
    }

    let lead = c
        .iter()
        .copied()
        .find(|z| z.norm() > 1e-300)
        .unwrap_or(c[0]);
    if c[0].norm() > 0.0 {
        let phase = c[0].conj() / c[0].norm();
        c.iter_mut().for_each(|z| *z *= phase);
        c[0].im = 0.0;
    } else if lead.norm() > 0.0 {
        let phase = lead.conj() / lead.norm();
        c.iter_mut().for_each(|z| *z *= phase);
    }
    Ok(c)
}
