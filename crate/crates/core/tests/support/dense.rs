//! Dense reference for the secular matrix: explicit entries, LU determinant.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `√z` with `Re ≥ 0`, taking `+i√|z|` on the negative axis.
pub fn sqrt_re_nonneg(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re < 0.0 {
        return Complex64::new(0.0, (-z.re).sqrt());
    }
    let r = z.norm().sqrt();
    let half = 0.5 * z.arg();
    let w = Complex64::from_polar(r, half);
    if w.re < 0.0 {
        -w
    } else {
        w
    }
}

/// Entries written out from the definition: `κ_n` on the diagonal with the
/// first `sheet − 1` signs flipped, `λ√(n+1)/(2√2)` beside it.
pub fn secular_dense(lambda: f64, energy: Complex64, sheet: u32, n: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        let k = sqrt_re_nonneg(Complex64::new(i as f64 + 0.5, 0.0) - energy);
        m[(i, i)] = if (i as u32) + 2 <= sheet { -k } else { k };
        if i + 1 < n {
            let b = lambda * ((i + 1) as f64).sqrt() / (2.0 * std::f64::consts::SQRT_2);
            m[(i, i + 1)] = Complex64::new(b, 0.0);
            m[(i + 1, i)] = Complex64::new(b, 0.0);
        }
    }
    m
}

pub fn dense_determinant(lambda: f64, energy: Complex64, sheet: u32, n: usize) -> Complex64 {
    secular_dense(lambda, energy, sheet, n).lu().determinant()
}

/// Real eigenvalues of the physical-sheet problem below ½ by dense bisection
/// on the sign of the LU determinant.
pub fn dense_physical_root(lambda: f64, n: usize, lo: f64, hi: f64) -> f64 {
    let f = |e: f64| dense_determinant(lambda, Complex64::new(e, 0.0), 1, n).re;
    let (mut lo, mut hi) = (lo, hi);
    let flo = f(lo).signum();
    assert!(flo != f(hi).signum(), "no sign change in [{lo}, {hi}]");
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
