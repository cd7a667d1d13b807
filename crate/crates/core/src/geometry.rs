//! Branch-cut-safe signed angle increments, unwrapped accumulation, and
//! winding numbers for paths around (possibly moving) centers.
//!
//! Angles are kept as unbounded reals and never eagerly wrapped; winding
//! information lives in the unwrapped value. Per-step differences are taken
//! in `(-pi, pi]`, which is exact whenever the true relative angle changes by
//! less than `pi` over the step. Straight-line relative motion always sweeps
//! less than `pi` between samples that bracket no corner, so accumulation
//! over polyline trajectories is exact up to rounding.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Default separation below which the relative polar angle is treated as
/// singular.
pub const DEFAULT_COLLISION_EPS: f64 = 1e-6;

/// Default per-step angle bound; increments larger than this demand
/// sub-stepping. Half of the `pi` ambiguity limit, leaving a factor-2 margin.
pub const DEFAULT_MAX_STEP_ANGLE: f64 = PI / 2.0;

/// A position in the plane (dimensionless units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A continuous angle accumulated without reduction mod 2pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnwrappedAngle {
    total: f64,
}

impl UnwrappedAngle {
    pub fn new(total: f64) -> Self {
        Self { total }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Adds a signed increment; accumulation is exactly additive over
    /// concatenated segments.
    pub fn add(&mut self, delta: f64) {
        self.total += delta;
    }

    /// The wrapped representative in `[0, 2pi)`.
    pub fn wrapped(&self) -> f64 {
        wrap_to_two_pi(self.total)
    }
}

/// A signed count of full turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindingCount {
    pub turns: i64,
}

/// Thresholds governing angle evaluation: the collision epsilon and the
/// per-step sub-step trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRules {
    /// Separation at or below which geometry is degenerate.
    pub collision_eps: f64,
    /// Wrapped increments above this magnitude signal a too-coarse step.
    pub max_step_angle: f64,
}

impl Default for AngleRules {
    fn default() -> Self {
        Self {
            collision_eps: DEFAULT_COLLISION_EPS,
            max_step_angle: DEFAULT_MAX_STEP_ANGLE,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// Point and center are within the collision epsilon; the polar angle is
    /// singular there.
    #[error("coincident geometry: separation {separation:.3e} <= eps {eps:.3e}")]
    Coincident { separation: f64, eps: f64 },
    /// The wrapped increment is larger than the configured sub-step
    /// threshold; the caller must sub-step.
    #[error("step too coarse: |increment| {got:.6} exceeds max step angle {max:.6}")]
    StepTooCoarse { got: f64, max: f64 },
    /// A closed-path total is not an integer multiple of 2pi to tolerance.
    #[error("winding total not integral: residual {residual:.3e} turns exceeds tolerance {tolerance:.3e}")]
    NotInteger { residual: f64, tolerance: f64 },
    /// Synchronized polylines must pair up sample for sample.
    #[error("path length {path} does not match center path length {center}")]
    MismatchedLengths { path: usize, center: usize },
}

/// Wraps an angle difference into `(-pi, pi]`.
#[inline]
pub fn wrap_angle_diff(d: f64) -> f64 {
    if d > PI {
        d - TAU
    } else if d <= -PI {
        d + TAU
    } else {
        d
    }
}

/// Wraps an angle into `[0, 2pi)`.
#[inline]
pub fn wrap_to_two_pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `[-pi, pi)`; residuals are reported in this range.
#[inline]
pub fn wrap_to_pm_pi(a: f64) -> f64 {
    let r = wrap_to_two_pi(a);
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Principal polar angle of `p - center` in `(-pi, pi]`.
pub fn angle_of(p: Point2, center: Point2, rules: &AngleRules) -> Result<f64, GeometryError> {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    let separation = (dx * dx + dy * dy).sqrt();
    if separation <= rules.collision_eps {
        return Err(GeometryError::Coincident {
            separation,
            eps: rules.collision_eps,
        });
    }
    let a = dy.atan2(dx);
    // atan2 returns -pi for dy = -0.0; fold onto the principal branch.
    Ok(if a <= -PI { a + TAU } else { a })
}

/// Signed change of the polar angle of `p - c` over one step, wrapped to
/// `(-pi, pi]`. Exact whenever the true relative angle changes by less than
/// `pi` over the step.
pub fn angle_increment(
    p_prev: Point2,
    p_curr: Point2,
    c_prev: Point2,
    c_curr: Point2,
    rules: &AngleRules,
) -> Result<f64, GeometryError> {
    let a_prev = angle_of(p_prev, c_prev, rules)?;
    let a_curr = angle_of(p_curr, c_curr, rules)?;
    let d = wrap_angle_diff(a_curr - a_prev);
    if d.abs() > rules.max_step_angle {
        return Err(GeometryError::StepTooCoarse {
            got: d,
            max: rules.max_step_angle,
        });
    }
    Ok(d)
}

/// Rounds an accumulated closed-path total to a winding count, checking that
/// the residual is below `tolerance` (in turns).
pub fn winding_of_closed_path(
    increments: &[f64],
    tolerance: f64,
) -> Result<WindingCount, GeometryError> {
    let total: f64 = increments.iter().sum();
    winding_from_total(total, tolerance)
}

/// As [`winding_of_closed_path`] for an already-summed total.
pub fn winding_from_total(total: f64, tolerance: f64) -> Result<WindingCount, GeometryError> {
    let turns_real = total / TAU;
    let turns = turns_real.round();
    let residual = (turns_real - turns).abs();
    if residual >= tolerance {
        return Err(GeometryError::NotInteger {
            residual,
            tolerance,
        });
    }
    Ok(WindingCount {
        turns: turns as i64,
    })
}

/// Brute-force total angle swept by `path[i] - center_path[i]`, resampling
/// both polylines at `refinement`-fold density with linear interpolation and
/// summing micro-increments. Independent test oracle; polygonal inputs are
/// exact at any refinement.
pub fn oracle_total_angle(
    path: &[Point2],
    center_path: &[Point2],
    refinement: usize,
    rules: &AngleRules,
) -> Result<f64, GeometryError> {
    assert!(refinement >= 1, "refinement must be >= 1");
    if path.len() != center_path.len() {
        return Err(GeometryError::MismatchedLengths {
            path: path.len(),
            center: center_path.len(),
        });
    }
    if path.len() < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut prev_angle = angle_of(path[0], center_path[0], rules)?;
    for seg in 0..path.len() - 1 {
        let (p0, p1) = (path[seg], path[seg + 1]);
        let (c0, c1) = (center_path[seg], center_path[seg + 1]);
        for j in 1..=refinement {
            // Hit segment endpoints exactly so refinement 1 reproduces the
            // vertex-to-vertex accumulation bit for bit.
            let (p, c) = if j == refinement {
                (p1, c1)
            } else {
                let s = j as f64 / refinement as f64;
                (lerp(p0, p1, s), lerp(c0, c1, s))
            };
            let a = angle_of(p, c, rules)?;
            total += wrap_angle_diff(a - prev_angle);
            prev_angle = a;
        }
    }
    Ok(total)
}

#[inline]
pub(crate) fn lerp(a: Point2, b: Point2, s: f64) -> Point2 {
    Point2::new(a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: AngleRules = AngleRules {
        collision_eps: 1e-6,
        max_step_angle: PI / 2.0,
    };

    fn pt(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn angle_of_principal_values() {
        assert_eq!(angle_of(pt(1.0, 0.0), pt(0.0, 0.0), &R).unwrap(), 0.0);
        assert_eq!(
            angle_of(pt(0.0, 1.0), pt(0.0, 0.0), &R).unwrap(),
            PI / 2.0
        );
        assert_eq!(
            angle_of(pt(-1.0, -1.0), pt(0.0, 0.0), &R).unwrap(),
            -3.0 * PI / 4.0
        );
    }

    #[test]
    fn angle_of_negative_x_axis_is_plus_pi() {
        // Both signed zeros of dy must land on +pi, not -pi.
        let a = angle_of(pt(-1.0, 0.0), pt(0.0, 0.0), &R).unwrap();
        assert_eq!(a, PI);
        let b = angle_of(pt(-1.0, -0.0), pt(0.0, 0.0), &R).unwrap();
        assert_eq!(b, PI);
    }

    #[test]
    fn angle_of_rejects_coincident() {
        let err = angle_of(pt(1e-9, 0.0), pt(0.0, 0.0), &R).unwrap_err();
        assert!(matches!(err, GeometryError::Coincident { .. }));
    }

    #[test]
    fn increment_quarter_turn_ccw() {
        let d = angle_increment(pt(1.0, 0.0), pt(0.0, 1.0), pt(0.0, 0.0), pt(0.0, 0.0), &R)
            .unwrap();
        assert_eq!(d, PI / 2.0);
    }

    #[test]
    fn increment_antisymmetry_exact() {
        let cases = [
            (pt(1.0, 0.2), pt(0.3, 1.1), pt(0.0, 0.0), pt(0.1, -0.2)),
            (pt(-2.0, 1.0), pt(-1.5, 0.2), pt(0.5, 0.5), pt(0.4, 0.6)),
        ];
        for (p0, p1, c0, c1) in cases {
            let fwd = angle_increment(p0, p1, c0, c1, &R).unwrap();
            let bwd = angle_increment(p1, p0, c1, c0, &R).unwrap();
            assert_eq!(fwd, -bwd);
        }
    }

    // Moving the center up rotates the relative vector clockwise, so the
    // increment is the oracle-confirmed negative value.
    #[test]
    fn increment_moving_center() {
        let d = angle_increment(pt(2.0, 0.0), pt(2.0, 0.0), pt(0.0, 0.0), pt(0.0, 1.0), &R)
            .unwrap();
        let expected = (-1.0f64).atan2(2.0);
        assert!((d - expected).abs() < 1e-15, "d = {d}, expected {expected}");

        // Brute-force oracle over densely interpolated endpoints agrees.
        let path = vec![pt(2.0, 0.0), pt(2.0, 0.0)];
        let centers = vec![pt(0.0, 0.0), pt(0.0, 1.0)];
        let oracle = oracle_total_angle(&path, &centers, 1000, &R).unwrap();
        assert!((oracle - d).abs() < 1e-12, "oracle {oracle} vs {d}");
    }

    #[test]
    fn increment_too_coarse_errors() {
        // Nearly a half turn in one step.
        let err = angle_increment(
            pt(1.0, 0.0),
            pt(-1.0, 0.1),
            pt(0.0, 0.0),
            pt(0.0, 0.0),
            &R,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::StepTooCoarse { .. }));
    }

    fn circle(n: usize, radius: f64, turns: f64) -> Vec<Point2> {
        (0..=n)
            .map(|i| {
                let a = TAU * turns * i as f64 / n as f64;
                pt(radius * a.cos(), radius * a.sin())
            })
            .collect()
    }

    #[test]
    fn winding_unit_circle_once() {
        let path = circle(128, 1.0, 1.0);
        let centers = vec![pt(0.0, 0.0); path.len()];
        let total = oracle_total_angle(&path, &centers, 1, &R).unwrap();
        let w = winding_from_total(total, 1e-9).unwrap();
        assert_eq!(w.turns, 1);
    }

    #[test]
    fn winding_closed_path_not_enclosing() {
        let path: Vec<Point2> = circle(64, 0.5, 1.0)
            .into_iter()
            .map(|p| pt(p.x + 3.0, p.y))
            .collect();
        let centers = vec![pt(0.0, 0.0); path.len()];
        let total = oracle_total_angle(&path, &centers, 1, &R).unwrap();
        let w = winding_from_total(total, 1e-9).unwrap();
        assert_eq!(w.turns, 0);
    }

    #[test]
    fn winding_figure_eight_counts_one_lobe() {
        // Both lobes cross at the origin: right lobe CCW around (0.8, 0),
        // left lobe CW around (-0.8, 0); the probed center sits in the right
        // lobe only.
        let mut path = Vec::new();
        for i in 0..64 {
            let a = PI + TAU * i as f64 / 64.0;
            path.push(pt(0.8 + 0.8 * a.cos(), 0.8 * a.sin()));
        }
        for i in 0..=64 {
            let a = -(TAU * i as f64 / 64.0);
            path.push(pt(-0.8 + 0.8 * a.cos(), 0.8 * a.sin()));
        }
        let centers = vec![pt(0.8, 0.0); path.len()];
        let total = oracle_total_angle(&path, &centers, 4, &R).unwrap();
        let w = winding_from_total(total, 1e-6).unwrap();
        assert_eq!(w.turns, 1);

        // Reversing the traversal flips the lobe orientation.
        let reversed: Vec<Point2> = path.into_iter().rev().collect();
        let total_rev = oracle_total_angle(&reversed, &centers, 4, &R).unwrap();
        let w_rev = winding_from_total(total_rev, 1e-6).unwrap();
        assert_eq!(w_rev.turns, -1);
    }

    #[test]
    fn winding_rejects_non_integral() {
        let err = winding_of_closed_path(&[1.0, 1.0], 1e-9).unwrap_err();
        assert!(matches!(err, GeometryError::NotInteger { .. }));
    }

    #[test]
    fn oracle_exact_on_polylines_at_any_refinement() {
        let path = circle(40, 2.0, 1.0);
        let centers = vec![pt(0.3, -0.2); path.len()];
        let r1 = oracle_total_angle(&path, &centers, 1, &R).unwrap();
        let r100 = oracle_total_angle(&path, &centers, 100, &R).unwrap();
        assert!((r1 - r100).abs() < 1e-12, "r1 {r1} vs r100 {r100}");
    }

    #[test]
    fn oracle_quarter_arc_converges() {
        let path = circle(1000, 1.0, 0.25);
        let centers = vec![pt(0.0, 0.0); path.len()];
        let total = oracle_total_angle(&path, &centers, 1, &R).unwrap();
        assert!((total - PI / 2.0).abs() < 1e-5);
    }

    #[test]
    fn accumulation_matches_oracle_bitwise_on_polylines() {
        // The per-segment accumulation path and the refinement-1 oracle must
        // agree exactly, not just to tolerance.
        let path = circle(24, 1.5, 1.0);
        let centers: Vec<Point2> = (0..path.len())
            .map(|i| pt(0.1 * (i as f64 * 0.37).sin(), 0.1 * (i as f64 * 0.21).cos()))
            .collect();
        let mut accumulated = 0.0;
        for i in 0..path.len() - 1 {
            accumulated +=
                angle_increment(path[i], path[i + 1], centers[i], centers[i + 1], &R).unwrap();
        }
        let oracle = oracle_total_angle(&path, &centers, 1, &R).unwrap();
        assert_eq!(accumulated, oracle);
    }

    #[test]
    fn wrap_helpers_ranges() {
        assert_eq!(wrap_to_two_pi(-1e-18), 0.0);
        assert!((wrap_to_two_pi(TAU + 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(wrap_to_pm_pi(PI), -PI);
        assert!(wrap_to_pm_pi(3.0 * PI / 2.0) < 0.0);
        assert_eq!(wrap_angle_diff(-PI), PI);
    }
}
