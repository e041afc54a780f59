//! Resonance poles of the continued secular determinant.
//!
//! Poles are zeros of `det B_λ(ε)` on a sheet `s ≥ 2`. Every square-root cut
//! lies on the real axis, so the sheet-`s` determinant is analytic in the open
//! lower half-plane; that is where resonances are searched, located by Muller
//! iteration, counted by the argument principle and continued in `λ`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::BasisIndex;
use crate::secular::{secular_matrix, SheetIndex};

/// Where a pole trajectory comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleOrigin {
    /// Splits off the threshold `ν_m` as `λ` leaves zero.
    Threshold(u32),
    /// Appears at finite coupling away from any threshold.
    Emergent,
    /// Located by a standalone search with no history.
    Isolated,
}

impl std::fmt::Display for PoleOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoleOrigin::Threshold(m) => write!(f, "threshold({m})"),
            PoleOrigin::Emergent => write!(f, "emergent"),
            PoleOrigin::Isolated => write!(f, "isolated"),
        }
    }
}

/// A converged zero of the continued determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePole {
    pub lambda: f64,
    pub energy: Complex64,
    pub sheet: SheetIndex,
    /// `|det B_N| / ∏ √(n+1)` at the root.
    pub residual: f64,
    pub origin: PoleOrigin,
    pub truncation_used: usize,
}

impl ResonancePole {
    fn with_origin(mut self, origin: PoleOrigin) -> Self {
        self.origin = origin;
        self
    }
}

/// Closed rectangle `[re_min, re_max] × [im_min, im_max]` in the energy plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchBox {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let b = SearchBox {
            re_min,
            re_max,
            im_min,
            im_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.re_min, self.re_max, self.im_min, self.im_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("search box must be bounded".into()));
        }
        if self.re_min >= self.re_max || self.im_min >= self.im_max {
            return Err(Error::Domain(format!("empty search box {self:?}")));
        }
        Ok(())
    }

    /// Square box of half-width `r` around `z`.
    pub fn around(z: Complex64, r: f64) -> Self {
        SearchBox {
            re_min: z.re - r,
            re_max: z.re + r,
            im_min: z.im - r,
            im_max: z.im + r,
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    fn extent(&self) -> f64 {
        (self.re_max - self.re_min).max(self.im_max - self.im_min)
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    fn quadrants(&self) -> [SearchBox; 4] {
        let c = self.center();
        [
            SearchBox {
                re_max: c.re,
                im_max: c.im,
                ..*self
            },
            SearchBox {
                re_min: c.re,
                im_max: c.im,
                ..*self
            },
            SearchBox {
                re_max: c.re,
                im_min: c.im,
                ..*self
            },
            SearchBox {
                re_min: c.re,
                im_min: c.im,
                ..*self
            },
        ]
    }

    /// Moves every edge by a small attempt-dependent amount. The top edge is
    /// only ever lowered so that a box kept below the real axis stays there.
    fn perturbed(&self, attempt: usize) -> SearchBox {
        let d = 1e-4 * self.extent() * attempt as f64;
        let sign = if attempt % 2 == 1 { 1.0 } else { -1.0 };
        SearchBox {
            re_min: self.re_min - sign * d,
            re_max: self.re_max + sign * 0.7 * d,
            im_min: self.im_min - sign * 0.9 * d,
            im_max: self.im_max - 0.6 * d,
        }
    }

    /// Whether the sheet determinant is analytic on and inside the box: no
    /// part may touch a real-axis cut, which starts at `ν_0 = ½`.
    fn avoids_cuts(&self) -> bool {
        self.im_max < 0.0 || self.re_max < 0.5
    }
}

/// Tunables for pole search, continuation and zero counting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceOptions {
    pub initial_truncation: usize,
    pub max_truncation: usize,
    /// Maximum pole movement between successive truncation doublings.
    pub pole_tolerance: f64,
    /// Muller step below which the iteration is considered converged.
    pub step_tolerance: f64,
    pub residual_limit: f64,
    pub max_iterations: usize,
    /// Iterates leaving this box abort the search.
    pub bounding_box: Option<SearchBox>,
    /// Truncation used for argument-principle counts.
    pub contour_truncation: usize,
    /// Trajectory steps between argument-principle cross-checks.
    pub checkpoint_interval: usize,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        ResonanceOptions {
            initial_truncation: 64,
            max_truncation: 8192,
            pole_tolerance: 1e-9,
            step_tolerance: 1e-11,
            residual_limit: 1e-9,
            max_iterations: 200,
            bounding_box: None,
            contour_truncation: 160,
            checkpoint_interval: 16,
        }
    }
}

impl ResonanceOptions {
    pub fn validate(&self) -> Result<()> {
        if self.initial_truncation < 2 || self.initial_truncation > self.max_truncation {
            return Err(Error::Domain(format!(
                "truncation range {}..{} is empty",
                self.initial_truncation, self.max_truncation
            )));
        }
        if self.contour_truncation < 2 {
            return Err(Error::Domain("contour truncation < 2".into()));
        }
        let positive = [
            self.pole_tolerance,
            self.step_tolerance,
            self.residual_limit,
        ];
        if positive.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 || self.checkpoint_interval == 0 {
            return Err(Error::Domain("iteration counts must be positive".into()));
        }
        if let Some(b) = &self.bounding_box {
            b.validate()?;
        }
        Ok(())
    }
}

/// Imaginary parts below this are treated as lying on the real axis.
const REAL_AXIS_TOLERANCE: f64 = 1e-10;

/// A trajectory stops once the pole is this close to the real axis.
pub const REAL_AXIS_ARRIVAL: f64 = 1e-8;

/// Radius around a threshold inside which the truncation is quadrupled.
const BRANCH_POINT_NEIGHBORHOOD: f64 = 1e-3;

/// `det B_N / (ρ^N ∏_{n<N} √(n+1))` as a plain complex number, where
/// `ρ = (1 + √(1 − λ²/2)) / 2` is the per-row factor the determinant picks
/// up deep in the tail. Without it the value underflows near `λ = √2` once
/// `N` reaches a few hundred.
#[derive(Debug, Clone, Copy)]
struct Evaluator {
    lambda: f64,
    sheet: SheetIndex,
    size: usize,
    log2_norm: f64,
}

impl Evaluator {
    fn new(lambda: f64, sheet: SheetIndex, size: usize) -> Self {
        let rho = 0.5 * (1.0 + (1.0 - 0.5 * lambda * lambda).max(0.0).sqrt());
        let log2_norm =
            (1..=size).map(|n| 0.5 * (n as f64).log2()).sum::<f64>() + size as f64 * rho.log2();
        Evaluator {
            lambda,
            sheet,
            size,
            log2_norm,
        }
    }

    fn eval(&self, energy: Complex64) -> Complex64 {
        secular_matrix(self.lambda, energy, self.sheet, self.size)
            .expect("size checked by caller")
            .determinant()
            .scaled(self.log2_norm)
    }
}

/// `ν_m + ρ_m(λ) = m + ½ − (λ⁴/64)(2m+1 + 2i·m(m+1))`.
pub fn weak_resonance_asymptote(m: u32, lambda: f64) -> Complex64 {
    let m = m as f64;
    let c = lambda.powi(4) / 64.0;
    Complex64::new(m + 0.5 - c * (2.0 * m + 1.0), -c * 2.0 * m * (m + 1.0))
}

fn nearest_threshold(z: Complex64) -> (usize, f64) {
    let m = (z.re - 0.5).round().max(0.0) as usize;
    (m, (z - Complex64::new(BasisIndex(m).nu(), 0.0)).norm())
}

fn check_iterate(x: Complex64, bounding_box: Option<&SearchBox>) -> Result<()> {
    if !(x.re.is_finite() && x.im.is_finite()) {
        return Err(Error::NonConvergence(format!("iterate became {x}")));
    }
    if let Some(b) = bounding_box {
        if !b.contains(x) {
            return Err(Error::Escaped(format!("{x}")));
        }
    }
    Ok(())
}

/// Muller iteration from three starting points.
fn muller(
    f: impl Fn(Complex64) -> Complex64,
    seeds: [Complex64; 3],
    opts: &ResonanceOptions,
) -> Result<(Complex64, f64)> {
    let [mut x0, mut x1, mut x2] = seeds;
    let (mut f0, mut f1, mut f2) = (f(x0), f(x1), f(x2));
    for _ in 0..opts.max_iterations {
        if f2 == Complex64::new(0.0, 0.0) {
            if f1.norm() > 0.0 && f0.norm() > 0.0 {
                return Ok((x2, 0.0));
            }
            return Err(Error::NonConvergence(format!(
                "determinant underflows near {x2}"
            )));
        }
        let h1 = x1 - x0;
        let h2 = x2 - x1;
        let d1 = (f1 - f0) / h1;
        let d2 = (f2 - f1) / h2;
        let a = (d2 - d1) / (h2 + h1);
        let b = a * h2 + d2;
        let disc = (b * b - 4.0 * a * f2).sqrt();
        let (p, q) = (b + disc, b - disc);
        let den = if p.norm() >= q.norm() { p } else { q };
        let dx = if den.norm() == 0.0 {
            // flat quadratic model: nudge instead of dividing by zero
            h2 * 0.5
        } else {
            -2.0 * f2 / den
        };
        let x3 = x2 + dx;
        check_iterate(x3, opts.bounding_box.as_ref())?;
        x0 = x1;
        x1 = x2;
        x2 = x3;
        f0 = f1;
        f1 = f2;
        f2 = f(x3);
        if dx.norm() < opts.step_tolerance && f2.norm() < opts.residual_limit {
            return Ok((x2, f2.norm()));
        }
    }
    Err(Error::NonConvergence(format!(
        "Muller iteration stalled at {x2} after {} steps (|f| = {:e})",
        opts.max_iterations,
        f2.norm()
    )))
}

fn muller_seeds(seed: Complex64) -> [Complex64; 3] {
    let (_, dist) = nearest_threshold(seed);
    let h = (0.05 * dist).clamp(1e-10, 1e-4);
    [
        seed + Complex64::new(h, 0.0),
        seed - Complex64::new(0.5 * h, 0.0) + Complex64::new(0.0, 0.5 * h),
        seed,
    ]
}

fn accept_root(energy: Complex64, sheet: SheetIndex) -> Result<Complex64> {
    if sheet.is_physical() {
        if energy.im.abs() > REAL_AXIS_TOLERANCE {
            return Err(Error::RejectedRoot {
                energy: format!("{energy}"),
                reason: "complex root on the physical sheet".into(),
            });
        }
        Ok(Complex64::new(energy.re, 0.0))
    } else if energy.im > REAL_AXIS_TOLERANCE {
        Err(Error::RejectedRoot {
            energy: format!("{energy}"),
            reason: "root in the upper half-plane".into(),
        })
    } else {
        Ok(energy)
    }
}

/// Locates a zero of the sheet-`s` determinant near `seed`.
///
/// The truncation is doubled from `opts.initial_truncation` until the root
/// moves less than `opts.pole_tolerance`.
pub fn find_pole(
    lambda: f64,
    sheet: SheetIndex,
    seed: Complex64,
    opts: &ResonanceOptions,
) -> Result<ResonancePole> {
    opts.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "coupling {lambda} must be finite and nonnegative"
        )));
    }
    if !(seed.re.is_finite() && seed.im.is_finite()) {
        return Err(Error::Domain(format!("seed {seed} is not finite")));
    }
    if lambda == 0.0 {
        // decoupled: det = ∏ κ_n vanishes exactly at the thresholds
        let (m, _) = nearest_threshold(seed);
        return Ok(ResonancePole {
            lambda,
            energy: Complex64::new(BasisIndex(m).nu(), 0.0),
            sheet,
            residual: 0.0,
            origin: PoleOrigin::Threshold(m as u32),
            truncation_used: opts.initial_truncation,
        });
    }

    let mut size = opts.initial_truncation;
    let mut previous: Option<Complex64> = None;
    let mut guess = seed;
    loop {
        let ev = Evaluator::new(lambda, sheet, size);
        let (root, _) = muller(|z| ev.eval(z), muller_seeds(guess), opts)?;
        let root = accept_root(root, sheet)?;
        let residual = ev.eval(root).norm();
        if residual > opts.residual_limit {
            return Err(Error::NotARoot {
                energy: format!("{root}"),
                residual,
            });
        }
        if let Some(p) = previous {
            if (root - p).norm() < opts.pole_tolerance {
                return Ok(ResonancePole {
                    lambda,
                    energy: root,
                    sheet,
                    residual,
                    origin: PoleOrigin::Isolated,
                    truncation_used: size,
                });
            }
        }
        if size * 2 > opts.max_truncation {
            return Err(Error::NonConvergence(format!(
                "pole near {root} still moving at truncation {size}"
            )));
        }
        previous = Some(root);
        guess = root;
        size *= 2;
    }
}

/// Number of zeros of the sheet determinant inside `search_box`, from the
/// winding number of its boundary image.
///
/// The contour is perturbed and recounted up to three times when a zero sits
/// on it; the box may not touch a real-axis cut.
pub fn count_zeros(
    lambda: f64,
    sheet: SheetIndex,
    search_box: &SearchBox,
    size: usize,
) -> Result<usize> {
    search_box.validate()?;
    if !search_box.avoids_cuts() {
        return Err(Error::Domain(format!(
            "box {search_box:?} touches the real axis to the right of the first threshold"
        )));
    }
    if size < 2 {
        return Err(Error::Domain(format!("truncation {size} < 2")));
    }
    let ev = Evaluator::new(lambda, sheet, size);
    let mut last_err = None;
    for attempt in 0..4 {
        let b = if attempt == 0 {
            *search_box
        } else {
            search_box.perturbed(attempt)
        };
        match winding_number(&ev, &b) {
            Ok(n) => return Ok(n),
            Err(e @ Error::ContourAmbiguity(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop ran"))
}

const EDGE_SAMPLES: usize = 32;
const MAX_PHASE_STEP: f64 = 0.5;
const MAX_DEPTH: usize = 40;

fn winding_number(ev: &Evaluator, b: &SearchBox) -> Result<usize> {
    let corners = b.corners();
    let min_length = 1e-12 * b.extent().max(1.0);
    let totals: Vec<Result<f64>> = (0..4)
        .into_par_iter()
        .map(|k| edge_phase(ev, corners[k], corners[(k + 1) % 4], min_length))
        .collect();
    let mut total = 0.0;
    for t in totals {
        total += t?;
    }
    let w = total / std::f64::consts::TAU;
    let rounded = w.round();
    if (w - rounded).abs() > 0.1 || rounded < 0.0 {
        return Err(Error::ContourAmbiguity(format!(
            "winding number {w} is not a count"
        )));
    }
    Ok(rounded as usize)
}

fn sample(ev: &Evaluator, z: Complex64) -> Result<Complex64> {
    let v = ev.eval(z);
    if v.norm() == 0.0 || !v.norm().is_finite() {
        return Err(Error::ContourAmbiguity(format!(
            "determinant vanishes at {z}"
        )));
    }
    Ok(v)
}

/// Accumulated phase of the determinant along the segment `a → b`.
fn edge_phase(ev: &Evaluator, a: Complex64, b: Complex64, min_length: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut fa = sample(ev, a)?;
    let mut za = a;
    for k in 1..=EDGE_SAMPLES {
        let zb = a + (b - a) * (k as f64 / EDGE_SAMPLES as f64);
        let fb = sample(ev, zb)?;
        total += segment_phase(ev, za, fa, zb, fb, min_length, 0)?;
        za = zb;
        fa = fb;
    }
    Ok(total)
}

fn segment_phase(
    ev: &Evaluator,
    za: Complex64,
    fa: Complex64,
    zb: Complex64,
    fb: Complex64,
    min_length: f64,
    depth: usize,
) -> Result<f64> {
    let whole = (fb / fa).arg();
    let zm = 0.5 * (za + zb);
    let fm = sample(ev, zm)?;
    let left = (fm / fa).arg();
    let right = (fb / fm).arg();
    let consistent = (left + right - whole).abs() < 1e-3;
    if consistent && whole.abs() < MAX_PHASE_STEP {
        return Ok(left + right);
    }
    if depth >= MAX_DEPTH || (zb - za).norm() < min_length {
        return Err(Error::ContourAmbiguity(format!(
            "phase unresolved near {zm}"
        )));
    }
    Ok(segment_phase(ev, za, fa, zm, fm, min_length, depth + 1)?
        + segment_phase(ev, zm, fm, zb, fb, min_length, depth + 1)?)
}

/// Poles inside `search_box`, found by quadrisection and local iteration.
pub fn locate_poles(
    lambda: f64,
    sheet: SheetIndex,
    search_box: &SearchBox,
    opts: &ResonanceOptions,
) -> Result<Vec<ResonancePole>> {
    let mut found: Vec<ResonancePole> = Vec::new();
    let count = count_zeros(lambda, sheet, search_box, opts.contour_truncation)?;
    // refine from the truncation the zeros were counted at
    let refine = ResonanceOptions {
        initial_truncation: opts.initial_truncation.max(opts.contour_truncation),
        max_truncation: opts.max_truncation.max(opts.contour_truncation),
        ..*opts
    };
    locate_in(
        lambda, sheet, search_box, search_box, count, &refine, 0, &mut found,
    )?;
    found.sort_by(|a, b| a.energy.re.total_cmp(&b.energy.re));
    Ok(found)
}

/// Zeros are counted at the contour truncation while poles are refined at
/// the converged one, so a refined pole may sit just outside the sub-box
/// that counted it; it is kept as long as it lies in `root`.
#[allow(clippy::too_many_arguments)]
fn locate_in(
    lambda: f64,
    sheet: SheetIndex,
    root: &SearchBox,
    b: &SearchBox,
    count: usize,
    opts: &ResonanceOptions,
    depth: usize,
    found: &mut Vec<ResonancePole>,
) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    if count == 1 {
        let local = ResonanceOptions {
            bounding_box: Some(SearchBox::around(b.center(), b.extent())),
            ..*opts
        };
        let wide = ResonanceOptions {
            bounding_box: Some(*root),
            ..*opts
        };
        let refined = find_pole(lambda, sheet, b.center(), &local)
            .ok()
            .filter(|p| b.contains(p.energy))
            .or_else(|| {
                (depth >= 6)
                    .then(|| find_pole(lambda, sheet, b.center(), &wide).ok())
                    .flatten()
                    .filter(|p| root.contains(p.energy))
            });
        if let Some(p) = refined {
            if !found.iter().any(|q| (q.energy - p.energy).norm() < 1e-7) {
                found.push(p);
            }
            return Ok(());
        }
    }
    if depth >= 12 {
        return Err(Error::NonConvergence(format!(
            "{count} zero(s) near {} could not be isolated",
            b.center()
        )));
    }
    for q in b.quadrants() {
        let c = count_zeros(lambda, sheet, &q, opts.contour_truncation)?;
        locate_in(lambda, sheet, root, &q, c, opts, depth + 1, found)?;
    }
    Ok(())
}

/// Argument-principle cross-check taken along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub lambda: f64,
    pub search_box: SearchBox,
    pub zero_count: usize,
}

/// A pole followed through a range of couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sheet: SheetIndex,
    pub origin: PoleOrigin,
    pub points: Vec<ResonancePole>,
    pub checkpoints: Vec<Checkpoint>,
    /// Set when the pole reached the real axis before the end of the range.
    pub reached_real_axis: bool,
}

/// Continuation state for one pole.
struct Tracker {
    opts: ResonanceOptions,
    max_step: f64,
    step: f64,
    trajectory: Trajectory,
}

impl Tracker {
    fn start(
        first: ResonancePole,
        origin: PoleOrigin,
        max_step: f64,
        opts: ResonanceOptions,
    ) -> Self {
        let first = first.with_origin(origin);
        let mut t = Tracker {
            opts,
            max_step,
            step: max_step,
            trajectory: Trajectory {
                sheet: first.sheet,
                origin,
                points: vec![first],
                checkpoints: Vec::new(),
                reached_real_axis: false,
            },
        };
        t.check_arrival();
        t
    }

    fn last(&self) -> &ResonancePole {
        self.trajectory
            .points
            .last()
            .expect("trajectory is never empty")
    }

    fn finished(&self) -> bool {
        self.trajectory.reached_real_axis
    }

    fn check_arrival(&mut self) {
        if self.last().energy.im.abs() < REAL_AXIS_ARRIVAL {
            self.trajectory.reached_real_axis = true;
        }
    }

    fn local_opts(&self, seed: Complex64) -> ResonanceOptions {
        let (_, dist) = nearest_threshold(seed);
        if dist < BRANCH_POINT_NEIGHBORHOOD {
            let n = (self.opts.initial_truncation * 4).min(self.opts.max_truncation);
            ResonanceOptions {
                initial_truncation: n,
                ..self.opts
            }
        } else {
            self.opts
        }
    }

    /// Advances to `target`, or until the pole reaches the real axis.
    fn advance_to(&mut self, target: f64) -> Result<()> {
        let min_step = self.max_step * 2f64.powi(-24);
        while !self.finished() && self.last().lambda < target {
            let last = *self.last();
            let prev = self.trajectory.points.iter().rev().nth(1).copied();
            let h = self.step.min(target - last.lambda);
            let lambda = if h >= target - last.lambda {
                target
            } else {
                last.lambda + h
            };
            let (seed, bound) = match prev {
                Some(p) => {
                    let slope = (last.energy - p.energy) / (last.lambda - p.lambda);
                    let expected = slope * (lambda - last.lambda);
                    (last.energy + expected, 10.0 * expected.norm() + 1e-4)
                }
                None => (last.energy, f64::INFINITY),
            };
            let opts = self.local_opts(seed);
            let attempt = find_pole(lambda, last.sheet, seed, &opts);
            match attempt {
                Ok(p) if (p.energy - last.energy).norm() <= bound => {
                    self.trajectory
                        .points
                        .push(p.with_origin(self.trajectory.origin));
                    self.step = (2.0 * h).min(self.max_step);
                    self.check_arrival();
                    self.maybe_checkpoint()?;
                }
                other => {
                    self.step = 0.5 * h;
                    if self.step < min_step {
                        let source = match other {
                            Err(e) => e,
                            Ok(p) => Error::NonConvergence(format!(
                                "continuation jumped from {} to {}",
                                last.energy, p.energy
                            )),
                        };
                        return Err(Error::TrackingLost {
                            lambda,
                            source: Box::new(source),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn maybe_checkpoint(&mut self) -> Result<()> {
        let index = self.trajectory.points.len() - 1;
        if !index.is_multiple_of(self.opts.checkpoint_interval) {
            return Ok(());
        }
        let p = *self.last();
        let mut r: f64 = 5e-3;
        if p.energy.re >= 0.5 {
            r = r.min(0.5 * p.energy.im.abs());
        }
        if r < 1e-7 {
            return Ok(());
        }
        let b = SearchBox::around(p.energy, r);
        let zero_count = count_zeros(
            p.lambda,
            p.sheet,
            &b,
            p.truncation_used.max(self.opts.contour_truncation),
        )
        .map_err(|e| Error::TrackingLost {
            lambda: p.lambda,
            source: Box::new(e),
        })?;
        self.trajectory.checkpoints.push(Checkpoint {
            lambda: p.lambda,
            search_box: b,
            zero_count,
        });
        Ok(())
    }
}

/// Follows the pole that splits off `ν_m` on `sheet` through
/// `[lambda_min, lambda_max]`, stopping early if it reaches the real axis.
pub fn trace_trajectory(
    sheet: SheetIndex,
    m: u32,
    lambda_range: (f64, f64),
    step: f64,
    opts: &ResonanceOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let (min, max) = lambda_range;
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::Domain(format!(
            "coupling range ({min}, {max}) is invalid"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("step {step} must be positive")));
    }
    let origin = PoleOrigin::Threshold(m);
    let seed = weak_resonance_asymptote(m, min);
    let first = Tracker::start(find_pole(min, sheet, seed, opts)?, origin, step, *opts);
    let mut tracker = first;
    tracker.maybe_checkpoint()?;
    tracker.advance_to(max)?;
    Ok(tracker.trajectory)
}

/// A pole that appeared inside the search box during a coupling scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergentPole {
    /// Midpoint of the grid interval over which the pole appeared.
    pub emergence_lambda: f64,
    pub trajectory: Trajectory,
}

/// Scans `lambda_grid`, counting zeros in `search_box` on `sheet`, and
/// reports each pole that is not the continuation of a threshold pole.
///
/// The threshold pole of `ν_{s−1}` is tracked from weak coupling so that it
/// can be discounted.
pub fn detect_emergent_poles(
    sheet: SheetIndex,
    lambda_grid: &[f64],
    search_box: &SearchBox,
    opts: &ResonanceOptions,
) -> Result<Vec<EmergentPole>> {
    opts.validate()?;
    search_box.validate()?;
    if lambda_grid.is_empty() {
        return Ok(Vec::new());
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) || lambda_grid[0] <= 0.0 {
        return Err(Error::Domain(
            "coupling grid must be positive and increasing".into(),
        ));
    }
    let spacing = lambda_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(0.01);

    let mut threshold = if sheet.is_physical() {
        None
    } else {
        let m = sheet.get() - 1;
        let start = lambda_grid[0].min(0.1);
        let seed = weak_resonance_asymptote(m, start);
        let first = find_pole(start, sheet, seed, opts)?;
        let mut t = Tracker::start(first, PoleOrigin::Threshold(m), spacing, *opts);
        t.advance_to(lambda_grid[0])?;
        Some(t)
    };

    let mut emergent: Vec<(f64, Tracker)> = Vec::new();
    let mut previous_lambda: Option<f64> = None;
    for &lambda in lambda_grid {
        let mut known: Vec<Complex64> = Vec::new();
        if let Some(t) = threshold.as_mut() {
            if !t.finished() {
                t.advance_to(lambda)?;
            }
            let last = t.last();
            if !t.finished() && last.lambda == lambda && search_box.contains(last.energy) {
                known.push(last.energy);
            }
        }
        for (_, t) in emergent.iter_mut() {
            if t.finished() || t.advance_to(lambda).is_err() {
                continue;
            }
            let last = t.last();
            if !t.finished() && last.lambda == lambda && search_box.contains(last.energy) {
                known.push(last.energy);
            }
        }
        let count = count_zeros(lambda, sheet, search_box, opts.contour_truncation)?;
        if count > known.len() {
            let poles = locate_poles(lambda, sheet, search_box, opts)?;
            let emergence = previous_lambda.map_or(lambda, |p| 0.5 * (p + lambda));
            for p in poles {
                if known.iter().any(|k| (k - p.energy).norm() < 1e-6) {
                    continue;
                }
                known.push(p.energy);
                let t = Tracker::start(p, PoleOrigin::Emergent, spacing, *opts);
                emergent.push((emergence, t));
            }
        }
        previous_lambda = Some(lambda);
    }
    Ok(emergent
        .into_iter()
        .map(|(emergence_lambda, t)| EmergentPole {
            emergence_lambda,
            trajectory: t.trajectory,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sheet(s: u32) -> SheetIndex {
        SheetIndex::new(s).unwrap()
    }

    #[test]
    fn asymptote_examples() {
        let z = weak_resonance_asymptote(0, 0.2);
        assert_eq!(z.im, 0.0);
        assert_relative_eq!(z.re, 0.5 - 0.2f64.powi(4) / 64.0, max_relative = 1e-15);

        let z = weak_resonance_asymptote(1, 0.3);
        assert_relative_eq!(z.re, 1.5 - 3.796875e-4, epsilon = 1e-15);
        assert_relative_eq!(z.im, -5.0625e-4, epsilon = 1e-15);

        for lambda in [0.1, 0.7, 1.3] {
            let rho = weak_resonance_asymptote(2, lambda) - Complex64::new(2.5, 0.0);
            assert_relative_eq!(rho.im / rho.re, 2.4, max_relative = 1e-8);
        }
    }

    #[test]
    fn decoupled_pole_is_the_threshold() {
        for s in 1..4 {
            let p = find_pole(
                0.0,
                sheet(s),
                Complex64::new(1.48, -0.01),
                &ResonanceOptions::default(),
            )
            .unwrap();
            assert_eq!(p.energy, Complex64::new(1.5, 0.0));
        }
    }

    #[test]
    fn weak_coupling_pole_on_second_sheet() {
        let lambda = 0.3;
        let p = find_pole(
            lambda,
            sheet(2),
            Complex64::new(1.5, 0.0),
            &ResonanceOptions::default(),
        )
        .unwrap();
        let split = p.energy - Complex64::new(1.5, 0.0);
        let expected = weak_resonance_asymptote(1, lambda) - Complex64::new(1.5, 0.0);
        assert!(((split - expected) / expected).norm() < 0.1);
        assert!(p.residual <= 1e-9);
        assert!(p.energy.im < 0.0);
    }

    #[test]
    fn physical_sheet_root_matches_ground_state() {
        let lambda = 1.0;
        let opts = crate::spectrum::SolverOptions {
            initial_truncation: 256,
            ..Default::default()
        };
        let ground = crate::spectrum::find_eigenvalues(lambda, &opts).unwrap()[0].energy;
        let p = find_pole(
            lambda,
            SheetIndex::PHYSICAL,
            Complex64::new(ground + 1e-3, 0.0),
            &ResonanceOptions::default(),
        )
        .unwrap();
        assert_eq!(p.energy.im, 0.0);
        assert!((p.energy.re - ground).abs() < 1e-9);
    }

    #[test]
    fn escape_is_reported() {
        let opts = ResonanceOptions {
            bounding_box: Some(SearchBox::new(2.9, 3.0, -0.01, 0.0).unwrap()),
            ..Default::default()
        };
        let r = find_pole(0.3, sheet(2), Complex64::new(2.95, -0.005), &opts);
        assert!(matches!(r, Err(Error::Escaped(_))), "{r:?}");
    }

    #[test]
    fn count_around_weak_pole() {
        let lambda = 0.5;
        let p = find_pole(
            lambda,
            sheet(2),
            weak_resonance_asymptote(1, lambda),
            &ResonanceOptions::default(),
        )
        .unwrap();
        let r = 0.5 * p.energy.im.abs();
        assert_eq!(
            count_zeros(lambda, sheet(2), &SearchBox::around(p.energy, r), 160).unwrap(),
            1
        );
        let away = SearchBox::around(p.energy - Complex64::new(0.0, 3.0 * r), r);
        assert_eq!(count_zeros(lambda, sheet(2), &away, 160).unwrap(), 0);
    }

    #[test]
    fn box_touching_cut_is_refused() {
        let b = SearchBox::new(1.0, 2.0, -0.5, 0.1).unwrap();
        assert!(matches!(
            count_zeros(1.0, sheet(2), &b, 64),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_point_trajectory() {
        let t =
            trace_trajectory(sheet(2), 1, (0.3, 0.3), 0.01, &ResonanceOptions::default()).unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!(t.origin, PoleOrigin::Threshold(1));
    }

    #[test]
    fn invalid_inputs() {
        assert!(
            trace_trajectory(sheet(2), 1, (0.0, 0.3), 0.01, &ResonanceOptions::default()).is_err()
        );
        assert!(
            trace_trajectory(sheet(2), 1, (0.1, 0.3), 0.0, &ResonanceOptions::default()).is_err()
        );
        assert!(SearchBox::new(1.0, 1.0, -1.0, 0.0).is_err());
        assert!(SearchBox::new(1.0, f64::INFINITY, -1.0, 0.0).is_err());
    }

    #[test]
    fn large_truncation_near_criticality_stays_representable() {
        // ρ^N brings |det| back to order one; without it N = 640 underflows
        let ev = Evaluator::new(1.384, sheet(3), 2560);
        let v = ev.eval(Complex64::new(2.638, -0.01)).norm();
        assert!(v > 1e-30 && v < 1e30, "{v:e}");

        let seed = Complex64::new(2.6384, -0.0026);
        let pole = |n: usize| {
            let o = ResonanceOptions {
                initial_truncation: n,
                ..ResonanceOptions::default()
            };
            find_pole(1.384, sheet(3), seed, &o).unwrap().energy
        };
        let (a, b) = (pole(160), pole(1280));
        assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        assert!(a.im < 0.0);
    }
}
