//! Finite-difference model of the two-dimensional problem on the half-plane
//! `x ≥ 0`, for states even in `x`.
//!
//! Energy form per unit of the half-plane:
//! `∫ (|∂ₓf|² + ½|∂_y f|² + ½y²|f|²) + (λ/2) ∫ y |f(0,y)|²`.
//! Vertex grid with spacing `h` in both directions; the `x = 0` column carries
//! half a cell of mass, the far wall `x = L` is Neumann (half cell) and the
//! `y` ends are Dirichlet. The ground state is the largest `E` for which
//! `K − E M` is positive definite. Positivity is decided exactly by
//! diagonalizing the `y` operator and taking the Schur complement onto the
//! `x = 0` column.

use nalgebra::{DMatrix, SymmetricEigen};

pub struct HalfPlaneModel {
    h: f64,
    /// Number of `x` vertices, `x_i = i h`, `i = 0..nx`.
    nx: usize,
    /// Eigenvalues of the `y` operator `−½∂²_y + ½y²`.
    modes: Vec<f64>,
    /// `Qᵀ diag(y / (2h)) Q` in the `y` eigenbasis.
    coupling: DMatrix<f64>,
}

impl HalfPlaneModel {
    pub fn new(h: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let nx = (x_max / h).round() as usize + 1;
        let ny = ((y_max - y_min) / h).round() as usize - 1;
        let ys: Vec<f64> = (1..=ny).map(|k| y_min + k as f64 * h).collect();
        let mut ky = DMatrix::<f64>::zeros(ny, ny);
        for k in 0..ny {
            ky[(k, k)] = 1.0 / (h * h) + 0.5 * ys[k] * ys[k];
            if k + 1 < ny {
                ky[(k, k + 1)] = -0.5 / (h * h);
                ky[(k + 1, k)] = -0.5 / (h * h);
            }
        }
        let eig = SymmetricEigen::new(ky);
        let q = eig.eigenvectors;
        let d = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_iterator(
            ny,
            ys.iter().map(|y| y / (2.0 * h)),
        ));
        let coupling = q.transpose() * d * &q;
        HalfPlaneModel {
            h,
            nx,
            modes: eig.eigenvalues.iter().copied().collect(),
            coupling,
        }
    }

    /// Default resolution: `h = 0.05`, `x ∈ [0, 12]`, `y ∈ (−14, 10)`.
    pub fn standard() -> Self {
        HalfPlaneModel::new(0.05, 12.0, -14.0, 10.0)
    }

    fn mass(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nx {
            0.5
        } else {
            1.0
        }
    }

    fn kx_diag(&self, i: usize) -> f64 {
        let h2 = self.h * self.h;
        if i == 0 || i + 1 == self.nx {
            1.0 / h2
        } else {
            2.0 / h2
        }
    }

    /// Whether `K − E M` is positive definite at coupling `lambda`.
    pub fn positive_definite(&self, lambda: f64, e: f64) -> bool {
        let h4 = self.h.powi(4);
        let ny = self.modes.len();
        let mut schur = self.coupling.scale(lambda);
        for (j, &mu) in self.modes.iter().enumerate() {
            // eliminate x vertices from the far wall down to i = 1
            let mut s = 0.0;
            for i in (1..self.nx).rev() {
                let d = self.kx_diag(i) + (mu - e) * self.mass(i);
                s = if i + 1 == self.nx {
                    d
                } else {
                    d - 1.0 / (h4 * s)
                };
                if s <= 0.0 {
                    return false;
                }
            }
            schur[(j, j)] += self.kx_diag(0) + (mu - e) * self.mass(0) - 1.0 / (h4 * s);
        }
        debug_assert_eq!(schur.nrows(), ny);
        schur.cholesky().is_some()
    }

    /// Smallest eigenvalue, bisected in `[lo, hi]`.
    pub fn ground_state(&self, lambda: f64, lo: f64, hi: f64) -> f64 {
        assert!(
            self.positive_definite(lambda, lo),
            "lower bracket {lo} is not below the spectrum"
        );
        assert!(
            !self.positive_definite(lambda, hi),
            "upper bracket {hi} is below the spectrum"
        );
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.positive_definite(lambda, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
