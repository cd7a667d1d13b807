//! Pre-built scenarios: single-fluxon loops, the two-fluxon closed-loop and
//! open-path protocols, the three-fluxon cyclic-bath variant, the scalar
//! analog, and the locality probe.
//!
//! Conventions shared by all builders: the source couples with strength `xi`
//! to every fluxon; every bath species couples with integers; fluxon index 0
//! is the reference in two-fluxon runs and `gamma = phi_1 - phi_0`.

use crate::dynamics::{run, DynamicsError, ExperimentTrace, StepPolicy};
use crate::geometry::{
    wrap_to_pm_pi, wrap_to_two_pi, winding_from_total, GeometryError, Point2, WindingCount,
};
use crate::model::{
    default_bath_species, derive_seed, BathSpec, FluxonSpec, ModelError, PotentialRegion,
    SourceSpec, Trajectory, WorldSpec,
};
use crate::stats::{resultant_length, tv_distance_binned, CircularSample};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("paths must {which} at the same point: separation {separation:.3e} exceeds eps {eps:.3e}")]
    EndpointsMismatch {
        which: &'static str,
        separation: f64,
        eps: f64,
    },
    #[error("ensemble of {got} is below the minimum {min}")]
    InsufficientEnsemble { got: usize, min: usize },
    #[error("{context}: accumulated angle is not an integer number of turns (residual {residual:.3e})")]
    NotIntegral { context: &'static str, residual: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ExperimentError {
    fn from_winding(context: &'static str, err: GeometryError) -> Self {
        match err {
            GeometryError::NotInteger { residual, .. } => {
                ExperimentError::NotIntegral { context, residual }
            }
            other => unreachable!("winding extraction only reports NotInteger, got {other:?}"),
        }
    }
}

/// Bath of one species coupled `+1` to every one of `fluxons` fluxons, with
/// the default annulus motion.
pub fn uniform_bath(seed: u64, count: usize, fluxons: usize) -> BathSpec {
    BathSpec {
        master_seed: seed,
        species: vec![default_bath_species("A", count, vec![1; fluxons])],
    }
}

/// Three-species bath with the cyclic coupling pattern: fluxon 1 sees A as
/// positive and B as negative, fluxon 2 sees B as positive and C as negative,
/// fluxon 3 sees C as positive and A as negative.
pub fn cyclic_bath(seed: u64, count_per_species: usize) -> BathSpec {
    BathSpec {
        master_seed: seed,
        species: vec![
            default_bath_species("A", count_per_species, vec![1, 0, -1]),
            default_bath_species("B", count_per_species, vec![-1, 1, 0]),
            default_bath_species("C", count_per_species, vec![0, -1, 1]),
        ],
    }
}

/// Circular loop through `start` making `windings` signed turns around the
/// origin over `duration`. `windings = 0` yields a small circle through
/// `start` that does not enclose the origin.
pub fn circle_winding_loop(start: Point2, windings: i64, duration: f64) -> Trajectory {
    if windings == 0 {
        let radius = 0.4;
        let outward = {
            let norm = (start.x * start.x + start.y * start.y).sqrt();
            if norm == 0.0 {
                Point2::new(1.0, 0.0)
            } else {
                Point2::new(start.x / norm, start.y / norm)
            }
        };
        let center = Point2::new(start.x + radius * outward.x, start.y + radius * outward.y);
        // Start sits on the circle, diametrically toward the origin.
        let initial_phase = (start.y - center.y).atan2(start.x - center.x);
        Trajectory::CircleOrbit {
            center,
            radius,
            angular_velocity: TAU / duration,
            initial_phase,
        }
    } else {
        let radius = (start.x * start.x + start.y * start.y).sqrt();
        let initial_phase = start.y.atan2(start.x);
        Trajectory::CircleOrbit {
            center: Point2::new(0.0, 0.0),
            radius,
            angular_velocity: TAU * windings as f64 / duration,
            initial_phase,
        }
    }
}

/// Closed polygonal loop around the origin: `turns` copies of a polygon with
/// `vertices` corners at the given radii, traversed over `[0, duration]`.
/// Vertex radii come from the caller; the loop starts and ends at vertex 0.
pub fn polygon_loop(
    radii: &[f64],
    start_angle: f64,
    turns: i64,
    duration: f64,
) -> Result<Trajectory, ModelError> {
    let vertices = radii.len();
    assert!(vertices >= 3, "a polygon needs at least 3 vertices");
    assert!(turns != 0, "a closed polygon loop needs a nonzero turn count");
    let total_segments = vertices * turns.unsigned_abs() as usize;
    let mut waypoints = Vec::with_capacity(total_segments + 1);
    for seg in 0..=total_segments {
        let idx = seg % vertices;
        let sweep_dir = if turns > 0 { 1.0 } else { -1.0 };
        let angle = start_angle + sweep_dir * TAU * (seg % vertices) as f64 / vertices as f64;
        let r = radii[idx];
        let t = duration * seg as f64 / total_segments as f64;
        waypoints.push((t, Point2::new(r * angle.cos(), r * angle.sin())));
    }
    Trajectory::polyline(&waypoints)
}

/// Randomized star-shaped loop around the origin with winding +1: vertices at
/// sorted random angles and random radii in `[r_min, r_max]`.
pub fn star_loop(
    seed: u64,
    vertices: usize,
    r_min: f64,
    r_max: f64,
    duration: f64,
) -> Result<Trajectory, ModelError> {
    assert!(vertices >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = loop {
        let mut a: Vec<f64> = (0..vertices).map(|_| rng.random_range(0.0..TAU)).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        // Keep every angular gap below pi so each chord sweeps less than a
        // half turn and the winding is exactly +1.
        let max_gap = a
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(TAU - (a[vertices - 1] - a[0]), f64::max);
        if max_gap < 2.5 {
            break a;
        }
    };
    let radii: Vec<f64> = (0..vertices)
        .map(|_| rng.random_range(r_min..r_max))
        .collect();
    let mut waypoints = Vec::with_capacity(vertices + 1);
    for i in 0..=vertices {
        let j = i % vertices;
        let t = duration * i as f64 / vertices as f64;
        waypoints.push((
            t,
            Point2::new(radii[j] * angles[j].cos(), radii[j] * angles[j].sin()),
        ));
    }
    Trajectory::polyline(&waypoints)
}

/// The open-path meeting preset: both fluxons travel from (2, 0) to (-2, 0)
/// around opposite sides of a diamond, pausing mid-journey while the source
/// leaves the origin and performs one clockwise polygon loop around the
/// parked fluxon 2. The composite relative loop (fluxon minus source) then
/// winds -2 around the source. Returns `(path1, path2, source_path,
/// duration)`.
pub fn open_meeting_scenario() -> (Trajectory, Trajectory, Trajectory, f64) {
    let path1 = Trajectory::polyline(&[
        (0.0, Point2::new(2.0, 0.0)),
        (0.3, Point2::new(0.0, 2.0)),
        (0.7, Point2::new(0.0, 2.0)),
        (1.0, Point2::new(-2.0, 0.0)),
    ])
    .expect("static waypoints");
    let path2 = Trajectory::polyline(&[
        (0.0, Point2::new(2.0, 0.0)),
        (0.3, Point2::new(0.0, -2.0)),
        (0.7, Point2::new(0.0, -2.0)),
        (1.0, Point2::new(-2.0, 0.0)),
    ])
    .expect("static waypoints");
    let source_path = Trajectory::polyline(&[
        (0.0, Point2::new(0.0, 0.0)),
        (0.35, Point2::new(0.0, -1.5)),
        (0.4, Point2::new(0.5, -2.0)),
        (0.45, Point2::new(0.0, -2.5)),
        (0.5, Point2::new(-0.5, -2.0)),
        (0.55, Point2::new(0.0, -1.5)),
        (0.65, Point2::new(0.0, 0.0)),
        (1.0, Point2::new(0.0, 0.0)),
    ])
    .expect("static waypoints");
    (path1, path2, source_path, 1.0)
}

/// Composite relative polyline (fluxon minus source): `path2` forward, then
/// `path1` reversed, sampled at the union of all waypoint times. Its winding
/// around the origin is the `n` of the open-path identity; feeding it to
/// [`crate::geometry::oracle_total_angle`] verifies the winding independently
/// of the stepper.
pub fn relative_composite_polyline(
    path1: &Trajectory,
    path2: &Trajectory,
    source: &Trajectory,
    duration: f64,
) -> Vec<Point2> {
    let mut times = vec![0.0, duration];
    for t in [path1, path2, source] {
        t.breakpoints_in(0.0, duration, &mut times);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let rel = |p: &Trajectory, t: f64| {
        let a = p.position_at(t).expect("within domain");
        let s = source.position_at(t).expect("within domain");
        Point2::new(a.x - s.x, a.y - s.y)
    };
    let mut pts: Vec<Point2> = times.iter().map(|&t| rel(path2, t)).collect();
    pts.extend(times.iter().rev().map(|&t| rel(path1, t)));
    pts
}

/// Single fluxon, no bath: `delta_phi = xi * delta_theta` exactly.
pub fn run_single_fluxon(
    xi: f64,
    path: Trajectory,
    duration: f64,
    policy: &StepPolicy,
    stride: usize,
) -> Result<ExperimentTrace, ExperimentError> {
    let spec = WorldSpec {
        duration,
        fluxons: vec![FluxonSpec::new(0, 0.0, path)],
        source: SourceSpec::fixed_at_origin(xi),
        bath: BathSpec::empty(),
        potential: vec![],
    };
    let world = spec.materialize(policy.collision_eps)?;
    Ok(run(&world, policy, stride)?)
}

/// Outcome of a two-fluxon protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFluxonResult {
    pub trace: ExperimentTrace,
    /// Winding of the composite relative loop around the source.
    pub n: WindingCount,
    /// Net bath winding `N`.
    pub bath_winding: WindingCount,
    /// `((gamma_f - gamma_i) - 2 pi n xi)` mapped to `[-pi, pi)`.
    pub closure_residual: f64,
    /// `2 pi n xi mod 2 pi`.
    pub predicted: f64,
    /// Raw bath contribution to the closure (before rounding to `2 pi N`).
    pub bath_closure: f64,
}

impl TwoFluxonResult {
    pub fn gamma_trace(&self) -> Vec<(f64, f64)> {
        self.trace.samples.iter().map(|s| (s.t, s.gamma())).collect()
    }
}

fn finish_two_fluxon(
    trace: ExperimentTrace,
    xi: f64,
    tolerance: f64,
) -> Result<TwoFluxonResult, ExperimentError> {
    let first = trace.first();
    let last = trace.last();
    let theta_loop = (last.theta[1] - first.theta[1]) - (last.theta[0] - first.theta[0]);
    let n = winding_from_total(theta_loop, tolerance)
        .map_err(|e| ExperimentError::from_winding("source winding", e))?;
    let bath_closure = (last.bath[1] - first.bath[1]) - (last.bath[0] - first.bath[0]);
    let bath_winding = winding_from_total(bath_closure, tolerance)
        .map_err(|e| ExperimentError::from_winding("bath winding", e))?;
    let delta_gamma = trace.delta_gamma();
    let predicted_raw = TAU * n.turns as f64 * xi;
    Ok(TwoFluxonResult {
        n,
        bath_winding,
        closure_residual: wrap_to_pm_pi(delta_gamma - predicted_raw),
        predicted: wrap_to_two_pi(predicted_raw),
        bath_closure,
        trace,
    })
}

/// The first protocol: fluxon 1 parked at `start`, fluxon 2 starting there,
/// traversing `windings` turns around the source at the origin, and
/// returning. Both fluxons see the full bath with coupling +1.
pub fn run_two_fluxon_loop(
    xi: f64,
    windings: i64,
    bath: &BathSpec,
    seed: u64,
    policy: &StepPolicy,
    stride: usize,
) -> Result<TwoFluxonResult, ExperimentError> {
    let duration = 1.0;
    let start = Point2::new(1.0, 0.0);
    let loop_path = circle_winding_loop(start, windings, duration);
    let spec = WorldSpec {
        duration,
        fluxons: vec![
            FluxonSpec::new(0, 0.0, Trajectory::Fixed { at: start }),
            FluxonSpec::new(1, 0.0, loop_path),
        ],
        source: SourceSpec::fixed_at_origin(xi),
        bath: BathSpec {
            master_seed: seed,
            species: bath.species.clone(),
        },
        potential: vec![],
    };
    let world = spec.materialize(policy.collision_eps)?;
    let trace = run(&world, policy, stride)?;
    finish_two_fluxon(trace, xi, policy.closure_tolerance)
}

/// A fully general two-fluxon meeting: both fluxons move from a shared start
/// to a shared end along their own paths, the source may move, and the
/// composite loop (path 2 forward, path 1 reversed) carries the winding.
#[allow(clippy::too_many_arguments)]
pub fn run_two_fluxon_open(
    xi: f64,
    path1: Trajectory,
    path2: Trajectory,
    source_path: Trajectory,
    duration: f64,
    bath: &BathSpec,
    seed: u64,
    policy: &StepPolicy,
    stride: usize,
) -> Result<TwoFluxonResult, ExperimentError> {
    for (which, t) in [("start", 0.0), ("end", duration)] {
        let a = path1.position_at(t)?;
        let b = path2.position_at(t)?;
        let separation = a.distance(&b);
        if separation > policy.collision_eps {
            return Err(ExperimentError::EndpointsMismatch {
                which,
                separation,
                eps: policy.collision_eps,
            });
        }
    }
    let spec = WorldSpec {
        duration,
        fluxons: vec![FluxonSpec::new(0, 0.0, path1), FluxonSpec::new(1, 0.0, path2)],
        source: SourceSpec {
            xi,
            trajectory: source_path,
        },
        bath: BathSpec {
            master_seed: seed,
            species: bath.species.clone(),
        },
        potential: vec![],
    };
    let world = spec.materialize(policy.collision_eps)?;
    let trace = run(&world, policy, stride)?;
    finish_two_fluxon(trace, xi, policy.closure_tolerance)
}

/// Outcome of the three-fluxon protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeFluxonResult {
    pub trace: ExperimentTrace,
    pub windings: [WindingCount; 3],
    /// `(delta phi_sum - 2 pi xi (n1+n2+n3))` mapped to `[-pi, pi)`.
    pub closure_residual: f64,
    pub predicted: f64,
    /// Individual internal-angle changes, seed-dependent mod 2 pi.
    pub delta_phi: [f64; 3],
}

impl ThreeFluxonResult {
    pub fn phi_sum_trace(&self) -> Vec<(f64, f64)> {
        self.trace
            .samples
            .iter()
            .map(|s| (s.t, s.phi_sum()))
            .collect()
    }
}

/// Three fluxons looping around the source from a common start point, each
/// coupled to the cyclic three-species bath. Only the summed internal angle
/// is topologically protected.
pub fn run_three_fluxon(
    xi: f64,
    windings: [i64; 3],
    bath: &BathSpec,
    seed: u64,
    policy: &StepPolicy,
    stride: usize,
) -> Result<ThreeFluxonResult, ExperimentError> {
    let duration = 1.0;
    let start = Point2::new(1.0, 0.0);
    let paths = windings.map(|n| {
        if n == 0 {
            Trajectory::Fixed { at: start }
        } else {
            circle_winding_loop(start, n, duration)
        }
    });
    let spec = WorldSpec {
        duration,
        fluxons: paths
            .into_iter()
            .enumerate()
            .map(|(i, p)| FluxonSpec::new(i as u32, 0.0, p))
            .collect(),
        source: SourceSpec::fixed_at_origin(xi),
        bath: BathSpec {
            master_seed: seed,
            species: bath.species.clone(),
        },
        potential: vec![],
    };
    let world = spec.materialize(policy.collision_eps)?;
    let trace = run(&world, policy, stride)?;

    let first = trace.first();
    let last = trace.last();
    let mut measured = [WindingCount { turns: 0 }; 3];
    for (k, slot) in measured.iter_mut().enumerate() {
        *slot = winding_from_total(last.theta[k] - first.theta[k], policy.closure_tolerance)
            .map_err(|e| ExperimentError::from_winding("per-fluxon winding", e))?;
    }
    let n_sum: i64 = measured.iter().map(|w| w.turns).sum();
    let delta_sum = last.phi_sum() - first.phi_sum();
    let predicted_raw = TAU * xi * n_sum as f64;
    Ok(ThreeFluxonResult {
        windings: measured,
        closure_residual: wrap_to_pm_pi(delta_sum - predicted_raw),
        predicted: wrap_to_two_pi(predicted_raw),
        delta_phi: [trace.delta_phi(0), trace.delta_phi(1), trace.delta_phi(2)],
        trace,
    })
}

/// Outcome of the scalar analog run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarAbResult {
    pub trace: ExperimentTrace,
    /// `V * dwell` target.
    pub predicted: f64,
    /// `((gamma_f - gamma_i) - V * dwell)` mapped to `[-pi, pi)`.
    pub residual: f64,
    /// Quadrature tolerance `2 V dt` implied by midpoint sampling at the two
    /// region crossings.
    pub quadrature_tolerance: f64,
}

/// Scalar analog: fluxon 2 dwells for `dwell` time units inside a constant
/// potential `value` while the reference fluxon 1 waits outside; both share
/// start and end points, so the bath and source terms drop mod 2 pi.
pub fn run_scalar_ab(
    value: f64,
    dwell: f64,
    bath: &BathSpec,
    seed: u64,
    policy: &StepPolicy,
    stride: usize,
) -> Result<ScalarAbResult, ExperimentError> {
    if !(dwell > 0.0) {
        return Err(ExperimentError::Model(ModelError::InvalidSpec(
            "dwell must be positive".into(),
        )));
    }
    let outside = Point2::new(3.0, 0.0);
    let inside = Point2::new(1.0, 0.0);
    // Transit (3,0) -> (1,0) spends exactly half its time at x < 2 (inside),
    // so dwell = transit + hold, both crossings at analytically known times.
    let transit = 0.5 * dwell.min(2.0);
    let hold = dwell - transit;
    let mut waypoints = vec![(0.0, outside), (0.25, outside), (0.25 + transit, inside)];
    if hold > 0.0 {
        waypoints.push((0.25 + transit + hold, inside));
    }
    waypoints.push((0.25 + 2.0 * transit + hold, outside));
    let duration = 0.5 + 2.0 * transit + hold;
    waypoints.push((duration, outside));
    let path2 = Trajectory::polyline(&waypoints)?;

    let spec = WorldSpec {
        duration,
        fluxons: vec![
            FluxonSpec::new(0, 0.0, Trajectory::Fixed { at: outside }),
            FluxonSpec::new(1, 0.0, path2),
        ],
        source: SourceSpec::fixed_at_origin(0.0),
        bath: BathSpec {
            master_seed: seed,
            species: bath.species.clone(),
        },
        potential: vec![PotentialRegion {
            x0: -0.5,
            x1: 2.0,
            y0: -1.0,
            y1: 1.0,
            value,
        }],
    };
    let world = spec.materialize(policy.collision_eps)?;
    let trace = run(&world, policy, stride)?;
    let predicted = value * dwell;
    let residual = wrap_to_pm_pi(trace.delta_gamma() - predicted);
    Ok(ScalarAbResult {
        trace,
        predicted,
        residual,
        quadrature_tolerance: 2.0 * value.abs() * policy.dt,
    })
}

/// Ensemble distributions for the locality probe.
#[derive(Debug, Clone)]
pub struct LocalityProbeResult {
    pub candidates: Vec<f64>,
    pub segment_fraction: f64,
    pub bins: usize,
    /// `gamma mod 2pi` at the segment endpoint, one sample set per candidate.
    pub segment_samples: Vec<CircularSample>,
    /// Circular resultant length of each segment distribution.
    pub segment_resultants: Vec<f64>,
    /// `(gamma_f - gamma_i) mod 2pi` over the closed loop per candidate.
    pub closure_samples: Vec<CircularSample>,
    /// Per-candidate maximum |closure residual| against `2 pi n xi`.
    pub closure_residual_max: Vec<f64>,
    /// Pairwise binned TV distances between candidates' segment samples.
    pub tv_matrix: Vec<Vec<f64>>,
    /// Same-candidate half-ensemble TV distances used for calibration.
    pub split_distances: Vec<f64>,
    /// 99th percentile of `split_distances`: the indistinguishability bar.
    pub null_threshold: f64,
    /// Members re-seeded after a coincidence abort.
    pub reseeded: usize,
}

impl LocalityProbeResult {
    /// Largest between-candidate TV distance at the segment endpoint.
    pub fn max_pairwise_tv(&self) -> f64 {
        let mut max = 0.0;
        for (i, row) in self.tv_matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && v > max {
                    max = v;
                }
            }
        }
        max
    }
}

/// Runs `ensemble` two-fluxon loops (n = 1) per candidate `xi`, recording
/// `gamma mod 2pi` at `fraction` of the loop and at closure. Distinguishing
/// candidates from the mid-loop distributions is then compared against a
/// self-calibrated null: the 99th percentile of TV distances between random
/// same-candidate half-ensembles.
#[allow(clippy::too_many_arguments)]
pub fn run_locality_probe(
    candidates: &[f64],
    fraction: f64,
    ensemble: usize,
    bath: &BathSpec,
    master_seed: u64,
    policy: &StepPolicy,
    bins: usize,
    calibration_splits: usize,
) -> Result<LocalityProbeResult, ExperimentError> {
    const MIN_ENSEMBLE: usize = 100;
    if ensemble < MIN_ENSEMBLE {
        return Err(ExperimentError::InsufficientEnsemble {
            got: ensemble,
            min: MIN_ENSEMBLE,
        });
    }
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must lie in (0,1)");

    let duration = 1.0;
    let segment_t = fraction * duration;
    // Land a sample exactly on the segment endpoint.
    let stride = ((segment_t / policy.dt).round() as usize).max(1);

    let mut segment_samples = Vec::new();
    let mut closure_samples = Vec::new();
    let mut closure_residual_max = Vec::new();
    let mut reseeded_total = 0usize;

    for (ci, &xi) in candidates.iter().enumerate() {
        let runs: Vec<Result<(f64, f64, f64, usize), ExperimentError>> = (0..ensemble)
            .into_par_iter()
            .map(|member| {
                let base = derive_seed(master_seed, (ci * ensemble + member) as u64);
                let mut attempts = 0usize;
                loop {
                    let seed = if attempts == 0 {
                        base
                    } else {
                        derive_seed(base, attempts as u64)
                    };
                    match run_two_fluxon_loop(xi, 1, bath, seed, policy, stride) {
                        Ok(res) => {
                            let mid = res.trace.sample_at(segment_t);
                            let gamma_mid = wrap_to_two_pi(mid.gamma());
                            let gamma_closure = wrap_to_two_pi(res.trace.delta_gamma());
                            return Ok((
                                gamma_mid,
                                gamma_closure,
                                res.closure_residual.abs(),
                                attempts,
                            ));
                        }
                        Err(ExperimentError::Dynamics(DynamicsError::Coincident { .. }))
                        | Err(ExperimentError::Model(ModelError::RegionTooSmall { .. }))
                            if attempts < 8 =>
                        {
                            attempts += 1;
                        }
                        Err(e) => return Err(e),
                    }
                }
            })
            .collect();

        let mut mids = Vec::with_capacity(ensemble);
        let mut closures = Vec::with_capacity(ensemble);
        let mut max_resid = 0.0f64;
        for r in runs {
            let (mid, closure, resid, attempts) = r?;
            mids.push(mid);
            closures.push(closure);
            max_resid = max_resid.max(resid);
            reseeded_total += attempts;
        }
        segment_samples.push(CircularSample::from_angles(mids));
        closure_samples.push(CircularSample::from_angles(closures));
        closure_residual_max.push(max_resid);
    }

    let mut tv_matrix = vec![vec![0.0; candidates.len()]; candidates.len()];
    for i in 0..candidates.len() {
        for j in 0..candidates.len() {
            if i != j {
                tv_matrix[i][j] =
                    tv_distance_binned(&segment_samples[i], &segment_samples[j], bins)
                        .expect("non-empty samples");
            }
        }
    }

    // Null calibration: random half-splits within each candidate.
    let mut split_distances = Vec::with_capacity(calibration_splits * candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, u64::MAX / 2));
    for sample in &segment_samples {
        let mut idx: Vec<usize> = (0..sample.len()).collect();
        for _ in 0..calibration_splits {
            idx.shuffle(&mut rng);
            let half = sample.len() / 2;
            let a =
                CircularSample::from_angles(idx[..half].iter().map(|&i| sample.values()[i]));
            let b =
                CircularSample::from_angles(idx[half..].iter().map(|&i| sample.values()[i]));
            split_distances.push(tv_distance_binned(&a, &b, bins).expect("non-empty halves"));
        }
    }
    let mut sorted = split_distances.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let null_threshold = sorted[(sorted.len() * 99) / 100];

    let segment_resultants = segment_samples
        .iter()
        .map(|s| resultant_length(s).expect("non-empty sample"))
        .collect();

    Ok(LocalityProbeResult {
        candidates: candidates.to_vec(),
        segment_fraction: fraction,
        bins,
        segment_samples,
        segment_resultants,
        closure_samples,
        closure_residual_max,
        tv_matrix,
        split_distances,
        null_threshold,
        reseeded: reseeded_total,
    })
}
