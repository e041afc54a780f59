//! Trapezoid rule on a uniform grid. For smooth integrands that decay like a
//! Gaussian the error is exponentially small in `1/h²`.

pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}
