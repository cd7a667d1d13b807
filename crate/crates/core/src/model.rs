//! Declarative world description: fluxons, the non-trivial source, bath
//! species with integer coupling signs, and prescribed trajectories.
//!
//! All motion is kinematic. Specs are immutable values; materializing a world
//! expands every random-waypoint template into a concrete polyline using a
//! per-particle PRNG stream derived from `(master seed, species, index)`, so
//! results are reproducible bit for bit and changing one particle's index
//! changes only that particle's path.

use crate::geometry::{lerp, Point2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("time {t} outside trajectory domain [{t_min}, {t_max}]")]
    OutOfDomain { t: f64, t_min: f64, t_max: f64 },
    #[error("region cannot host {count} particles with clearance {clearance:.3e}: {detail}")]
    RegionTooSmall {
        count: usize,
        clearance: f64,
        detail: String,
    },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// A sampling region for bath waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    Annulus {
        center: Point2,
        r_inner: f64,
        r_outer: f64,
    },
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
}

impl Region {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Point2 {
        match *self {
            Region::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                // Uniform in area.
                let u: f64 = rng.random();
                let r = (u * (r_outer * r_outer - r_inner * r_inner) + r_inner * r_inner).sqrt();
                let phi: f64 = rng.random_range(0.0..TAU);
                Point2::new(center.x + r * phi.cos(), center.y + r * phi.sin())
            }
            Region::Rect { x0, y0, x1, y1 } => {
                Point2::new(rng.random_range(x0..x1), rng.random_range(y0..y1))
            }
        }
    }

    /// Whether the straight segment `a -> b` stays inside the region.
    fn segment_inside(&self, a: Point2, b: Point2) -> bool {
        match *self {
            Region::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                // Endpoints inside the outer radius bound the whole chord by
                // convexity of the norm; the hole requires a segment-to-center
                // distance check.
                a.distance(&center) <= r_outer
                    && b.distance(&center) <= r_outer
                    && segment_point_distance(a, b, center) >= r_inner
            }
            Region::Rect { .. } => true, // convex; endpoints are sampled inside
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Region::Annulus {
                r_inner, r_outer, ..
            } => {
                if !(r_inner >= 0.0 && r_outer > r_inner) {
                    return Err(ModelError::InvalidSpec(format!(
                        "annulus radii must satisfy 0 <= r_inner < r_outer, got [{r_inner}, {r_outer}]"
                    )));
                }
            }
            Region::Rect { x0, y0, x1, y1 } => {
                if !(x1 > x0 && y1 > y0) {
                    return Err(ModelError::InvalidSpec(format!(
                        "rect must have positive extent, got [{x0},{x1}]x[{y0},{y1}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn segment_point_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return a.distance(&p);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Prescribed motion of one particle. Random-waypoint templates live in
/// [`BathMotion`]; a materialized trajectory is fully deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trajectory {
    Fixed {
        at: Point2,
    },
    /// Piecewise-linear path through `(time, position)` waypoints with
    /// strictly increasing times.
    Polyline {
        times: Vec<f64>,
        points: Vec<Point2>,
    },
    /// `center + radius * (cos, sin)(initial_phase + angular_velocity * t)`.
    CircleOrbit {
        center: Point2,
        radius: f64,
        angular_velocity: f64,
        initial_phase: f64,
    },
}

impl Trajectory {
    pub fn polyline(waypoints: &[(f64, Point2)]) -> Result<Self, ModelError> {
        let times: Vec<f64> = waypoints.iter().map(|w| w.0).collect();
        let points: Vec<Point2> = waypoints.iter().map(|w| w.1).collect();
        let traj = Trajectory::Polyline { times, points };
        traj.validate(None)?;
        Ok(traj)
    }

    pub fn validate(&self, span: Option<f64>) -> Result<(), ModelError> {
        match self {
            Trajectory::Fixed { at } => {
                if !at.is_finite() {
                    return Err(ModelError::InvalidSpec("non-finite fixed point".into()));
                }
            }
            Trajectory::Polyline { times, points } => {
                if times.len() != points.len() || times.len() < 2 {
                    return Err(ModelError::InvalidSpec(
                        "polyline needs matching times/points with at least two waypoints".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ModelError::InvalidSpec(
                        "polyline times must be strictly increasing".into(),
                    ));
                }
                if points.iter().any(|p| !p.is_finite()) {
                    return Err(ModelError::InvalidSpec("non-finite waypoint".into()));
                }
                if let Some(t_end) = span {
                    if times[0] > 0.0 || *times.last().unwrap() < t_end {
                        return Err(ModelError::InvalidSpec(format!(
                            "polyline covers [{}, {}] but the experiment needs [0, {}]",
                            times[0],
                            times.last().unwrap(),
                            t_end
                        )));
                    }
                }
            }
            Trajectory::CircleOrbit {
                center,
                radius,
                angular_velocity,
                initial_phase,
            } => {
                if !center.is_finite()
                    || !radius.is_finite()
                    || !angular_velocity.is_finite()
                    || !initial_phase.is_finite()
                    || *radius <= 0.0
                {
                    return Err(ModelError::InvalidSpec("invalid orbit parameters".into()));
                }
            }
        }
        Ok(())
    }

    /// Deterministic position at time `t`.
    pub fn position_at(&self, t: f64) -> Result<Point2, ModelError> {
        match self {
            Trajectory::Fixed { at } => Ok(*at),
            Trajectory::Polyline { times, points } => {
                let t0 = times[0];
                let t_end = *times.last().unwrap();
                if t < t0 || t > t_end {
                    return Err(ModelError::OutOfDomain {
                        t,
                        t_min: t0,
                        t_max: t_end,
                    });
                }
                // First index with times[idx] > t; t lies in segment idx-1.
                let idx = times.partition_point(|&x| x <= t);
                if idx >= times.len() {
                    return Ok(*points.last().unwrap());
                }
                let i = idx - 1;
                if t == times[i] {
                    return Ok(points[i]);
                }
                let s = (t - times[i]) / (times[i + 1] - times[i]);
                Ok(lerp(points[i], points[i + 1], s))
            }
            Trajectory::CircleOrbit {
                center,
                radius,
                angular_velocity,
                initial_phase,
            } => {
                let a = initial_phase + angular_velocity * t;
                Ok(Point2::new(
                    center.x + radius * a.cos(),
                    center.y + radius * a.sin(),
                ))
            }
        }
    }

    /// Waypoint times strictly inside `(t0, t1)`. The stepper splits at these
    /// so increments stay exact across corners.
    pub fn breakpoints_in(&self, t0: f64, t1: f64, out: &mut Vec<f64>) {
        if let Trajectory::Polyline { times, .. } = self {
            let start = times.partition_point(|&x| x <= t0);
            for &t in &times[start..] {
                if t >= t1 {
                    break;
                }
                out.push(t);
            }
        }
    }

    /// Upper bound on a step width that keeps this trajectory's own angular
    /// advance comfortably below the sub-step threshold.
    pub fn max_smooth_step(&self) -> f64 {
        match self {
            Trajectory::CircleOrbit {
                angular_velocity, ..
            } if *angular_velocity != 0.0 => (std::f64::consts::PI / 2.0) / angular_velocity.abs(),
            _ => f64::INFINITY,
        }
    }

    /// The same path traversed backwards over `[0, duration]`.
    pub fn reversed(&self, duration: f64) -> Trajectory {
        match self {
            Trajectory::Fixed { at } => Trajectory::Fixed { at: *at },
            Trajectory::Polyline { times, points } => {
                let times_rev: Vec<f64> = times.iter().rev().map(|&t| duration - t).collect();
                let points_rev: Vec<Point2> = points.iter().rev().copied().collect();
                Trajectory::Polyline {
                    times: times_rev,
                    points: points_rev,
                }
            }
            Trajectory::CircleOrbit {
                center,
                radius,
                angular_velocity,
                initial_phase,
            } => Trajectory::CircleOrbit {
                center: *center,
                radius: *radius,
                angular_velocity: -angular_velocity,
                initial_phase: initial_phase + angular_velocity * duration,
            },
        }
    }
}

/// One fluxon: internal angular momentum scale `L` (which drops out of the
/// kinematic angle law), initial internal angle, and a prescribed path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxonSpec {
    pub id: u32,
    pub l_scale: f64,
    pub phi0: f64,
    pub trajectory: Trajectory,
}

impl FluxonSpec {
    pub fn new(id: u32, phi0: f64, trajectory: Trajectory) -> Self {
        Self {
            id,
            l_scale: 1.0,
            phi0,
            trajectory,
        }
    }
}

/// The non-trivial source: coupling constant `xi` and an optional motion
/// (defaults to fixed at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub xi: f64,
    pub trajectory: Trajectory,
}

impl SourceSpec {
    pub fn fixed_at_origin(xi: f64) -> Self {
        Self {
            xi,
            trajectory: Trajectory::Fixed {
                at: Point2::new(0.0, 0.0),
            },
        }
    }

    /// Integer couplings wind internal angles by multiples of 2pi and are
    /// therefore trivial.
    pub fn is_trivial(&self) -> bool {
        self.xi == self.xi.round()
    }
}

/// Motion template for a bath species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BathMotion {
    /// Piecewise-linear wander: a new waypoint is targeted every
    /// `waypoint_interval`, moving toward a uniform sample of the region at
    /// most `speed_cap` fast, with chords kept inside the region.
    RandomWaypoints {
        region: Region,
        speed_cap: f64,
        waypoint_interval: f64,
    },
    /// Deterministic rings, useful for debugging: particle `i` of `count`
    /// orbits at an evenly spaced radius and phase.
    OrbitRing {
        center: Point2,
        r_inner: f64,
        r_outer: f64,
        angular_velocity: f64,
    },
}

/// One bath species: a count of identically-behaving particles and the
/// integer coupling of each fluxon to this species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpeciesSpec {
    pub name: String,
    pub count: usize,
    pub motion: BathMotion,
    /// coupling_row[k] = integer coupling of fluxon k to this species.
    pub coupling_row: Vec<i64>,
}

/// The full bath: species plus the master seed all particle streams derive
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub master_seed: u64,
    pub species: Vec<BathSpeciesSpec>,
}

impl BathSpec {
    pub fn empty() -> Self {
        Self {
            master_seed: 0,
            species: Vec::new(),
        }
    }
}

/// Integer coupling of fluxon `k` to bath species `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    entries: Vec<Vec<i64>>,
}

impl CouplingMatrix {
    pub fn new(entries: Vec<Vec<i64>>) -> Self {
        Self { entries }
    }

    pub fn from_species(fluxon_count: usize, species: &[BathSpeciesSpec]) -> Result<Self, ModelError> {
        let mut entries = vec![vec![0i64; species.len()]; fluxon_count];
        for (s, sp) in species.iter().enumerate() {
            if sp.coupling_row.len() != fluxon_count {
                return Err(ModelError::InvalidSpec(format!(
                    "species '{}' coupling row has {} entries for {} fluxons",
                    sp.name,
                    sp.coupling_row.len(),
                    fluxon_count
                )));
            }
            for (k, &c) in sp.coupling_row.iter().enumerate() {
                entries[k][s] = c;
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, fluxon: usize, species: usize) -> i64 {
        self.entries[fluxon][species]
    }

    pub fn fluxon_count(&self) -> usize {
        self.entries.len()
    }

    pub fn species_count(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }
}

/// Constant scalar potential over an axis-aligned rectangle. Overlapping
/// rectangles superpose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialRegion {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub value: f64,
}

impl PotentialRegion {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

/// Declarative description of one experiment's world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub duration: f64,
    pub fluxons: Vec<FluxonSpec>,
    pub source: SourceSpec,
    pub bath: BathSpec,
    pub potential: Vec<PotentialRegion>,
}

/// A materialized world: every trajectory concrete, couplings expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub duration: f64,
    pub xi: f64,
    pub phi0: Vec<f64>,
    pub fluxon_paths: Vec<Trajectory>,
    pub source_path: Trajectory,
    /// Parallel vectors: one trajectory and one species index per particle.
    pub bath_paths: Vec<Trajectory>,
    pub bath_species: Vec<usize>,
    pub coupling: CouplingMatrix,
    pub potential: Vec<PotentialRegion>,
}

impl World {
    pub fn fluxon_count(&self) -> usize {
        self.fluxon_paths.len()
    }

    pub fn bath_count(&self) -> usize {
        self.bath_paths.len()
    }

    /// Superposed scalar potential at a point.
    pub fn potential_at(&self, p: Point2) -> f64 {
        self.potential
            .iter()
            .filter(|r| r.contains(p))
            .map(|r| r.value)
            .sum()
    }
}

impl WorldSpec {
    /// Validates the spec and expands bath templates into concrete paths.
    ///
    /// `clearance` is the collision epsilon used for the t=0 feasibility
    /// check; bath particles closer than this to each other or to a fluxon
    /// or the source at t=0 make the seed unusable.
    pub fn materialize(&self, clearance: f64) -> Result<World, ModelError> {
        if self.duration < 0.0 || !self.duration.is_finite() {
            return Err(ModelError::InvalidSpec("duration must be >= 0".into()));
        }
        if self.fluxons.is_empty() {
            return Err(ModelError::InvalidSpec("at least one fluxon".into()));
        }
        if !self.source.xi.is_finite() {
            return Err(ModelError::InvalidSpec("xi must be finite".into()));
        }
        for f in &self.fluxons {
            if f.l_scale == 0.0 {
                return Err(ModelError::InvalidSpec(format!(
                    "fluxon {} has L = 0",
                    f.id
                )));
            }
            f.trajectory.validate(Some(self.duration))?;
        }
        self.source.trajectory.validate(Some(self.duration))?;

        let coupling = CouplingMatrix::from_species(self.fluxons.len(), &self.bath.species)?;
        let (bath_paths, bath_species) = materialize_bath(&self.bath, self.duration)?;

        let world = World {
            duration: self.duration,
            xi: self.source.xi,
            phi0: self.fluxons.iter().map(|f| f.phi0).collect(),
            fluxon_paths: self.fluxons.iter().map(|f| f.trajectory.clone()).collect(),
            source_path: self.source.trajectory.clone(),
            bath_paths,
            bath_species,
            coupling,
            potential: self.potential.clone(),
        };

        check_initial_clearance(&world, clearance, self.bath.master_seed)?;
        Ok(world)
    }
}

/// Expands every bath species template into per-particle trajectories.
///
/// Each particle draws from its own ChaCha stream keyed by
/// `(species index, particle index)` on top of the master seed, so paths are
/// reproducible and independent.
pub fn materialize_bath(
    spec: &BathSpec,
    duration: f64,
) -> Result<(Vec<Trajectory>, Vec<usize>), ModelError> {
    let mut paths = Vec::new();
    let mut species_of = Vec::new();
    for (s, sp) in spec.species.iter().enumerate() {
        match &sp.motion {
            BathMotion::RandomWaypoints {
                region,
                speed_cap,
                waypoint_interval,
            } => {
                region.validate()?;
                if !(*speed_cap > 0.0) || !(*waypoint_interval > 0.0) {
                    return Err(ModelError::InvalidSpec(format!(
                        "species '{}' needs positive speed_cap and waypoint_interval",
                        sp.name
                    )));
                }
                for i in 0..sp.count {
                    let mut rng = particle_rng(spec.master_seed, s, i);
                    paths.push(random_waypoint_path(
                        &mut rng,
                        region,
                        *speed_cap,
                        *waypoint_interval,
                        duration,
                    )?);
                    species_of.push(s);
                }
            }
            BathMotion::OrbitRing {
                center,
                r_inner,
                r_outer,
                angular_velocity,
            } => {
                if !(*r_outer > *r_inner) || !(*r_inner > 0.0) {
                    return Err(ModelError::InvalidSpec(format!(
                        "species '{}' orbit ring needs 0 < r_inner < r_outer",
                        sp.name
                    )));
                }
                for i in 0..sp.count {
                    let frac = if sp.count > 1 {
                        i as f64 / (sp.count - 1) as f64
                    } else {
                        0.5
                    };
                    paths.push(Trajectory::CircleOrbit {
                        center: *center,
                        radius: r_inner + frac * (r_outer - r_inner),
                        angular_velocity: *angular_velocity,
                        initial_phase: TAU * i as f64 / sp.count.max(1) as f64,
                    });
                    species_of.push(s);
                }
            }
        }
    }
    Ok((paths, species_of))
}

fn particle_rng(master_seed: u64, species: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((species as u64) << 40) | index as u64);
    rng
}

fn random_waypoint_path(
    rng: &mut ChaCha8Rng,
    region: &Region,
    speed_cap: f64,
    waypoint_interval: f64,
    duration: f64,
) -> Result<Trajectory, ModelError> {
    let n_hops = (duration / waypoint_interval).ceil() as usize;
    let mut times = Vec::with_capacity(n_hops + 1);
    let mut points = Vec::with_capacity(n_hops + 1);
    let mut current = region.sample(rng);
    times.push(0.0);
    points.push(current);
    let max_hop = speed_cap * waypoint_interval;
    for hop in 1..=n_hops.max(1) {
        let mut placed = false;
        for _try in 0..64 {
            let target = region.sample(rng);
            let dist = current.distance(&target);
            let next = if dist <= max_hop {
                target
            } else {
                lerp(current, target, max_hop / dist)
            };
            if region.segment_inside(current, next) {
                times.push(hop as f64 * waypoint_interval);
                points.push(next);
                current = next;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ModelError::InvalidSpec(
                "could not place a waypoint chord inside the region after 64 tries".into(),
            ));
        }
    }
    // Cover [0, duration] even when duration is not a multiple of the
    // waypoint interval.
    if *times.last().unwrap() < duration {
        times.push(duration);
        points.push(current);
    }
    if times.len() < 2 {
        times.push(waypoint_interval.max(duration).max(1.0));
        points.push(current);
    }
    Ok(Trajectory::Polyline { times, points })
}

fn check_initial_clearance(world: &World, clearance: f64, seed: u64) -> Result<(), ModelError> {
    let mut anchors: Vec<Point2> = Vec::new();
    for path in world.fluxon_paths.iter().chain(Some(&world.source_path)) {
        anchors.push(path.position_at(0.0).expect("validated domain"));
    }
    let mut bath0: Vec<Point2> = Vec::with_capacity(world.bath_count());
    for path in &world.bath_paths {
        bath0.push(path.position_at(0.0).expect("validated domain"));
    }
    for (i, b) in bath0.iter().enumerate() {
        for a in &anchors {
            if b.distance(a) <= clearance {
                return Err(ModelError::RegionTooSmall {
                    count: world.bath_count(),
                    clearance,
                    detail: format!(
                        "bath particle {i} starts within clearance of a fluxon or the source (seed {seed})"
                    ),
                });
            }
        }
        for (j, other) in bath0.iter().enumerate().skip(i + 1) {
            if b.distance(other) <= clearance {
                return Err(ModelError::RegionTooSmall {
                    count: world.bath_count(),
                    clearance,
                    detail: format!("bath particles {i} and {j} start coincident (seed {seed})"),
                });
            }
        }
    }
    Ok(())
}

/// Default bath species used across the experiments: random waypoints in an
/// annulus around the scene.
pub fn default_bath_species(name: &str, count: usize, coupling_row: Vec<i64>) -> BathSpeciesSpec {
    BathSpeciesSpec {
        name: name.to_string(),
        count,
        motion: BathMotion::RandomWaypoints {
            region: Region::Annulus {
                center: Point2::new(0.0, 0.0),
                r_inner: 0.1,
                r_outer: 10.0,
            },
            speed_cap: 5.0,
            waypoint_interval: 0.25,
        },
        coupling_row,
    }
}

/// Deterministic seed for ensemble member `index` derived from the master
/// seed; members are independent of each other and of execution order.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    use rand_chacha::rand_core::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(u64::MAX ^ index);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_position() {
        let t = Trajectory::Fixed {
            at: Point2::new(3.0, 4.0),
        };
        assert_eq!(t.position_at(0.7).unwrap(), Point2::new(3.0, 4.0));
    }

    #[test]
    fn orbit_quarter_period() {
        let period = 2.0;
        let t = Trajectory::CircleOrbit {
            center: Point2::new(0.0, 0.0),
            radius: 1.0,
            angular_velocity: TAU / period,
            initial_phase: 0.0,
        };
        let p = t.position_at(period / 4.0).unwrap();
        assert!(p.x.abs() < 1e-15);
        assert!((p.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polyline_midpoint_and_vertices_exact() {
        let t = Trajectory::polyline(&[
            (0.0, Point2::new(0.0, 0.0)),
            (2.0, Point2::new(2.0, 0.0)),
            (3.0, Point2::new(2.0, 1.0)),
        ])
        .unwrap();
        assert_eq!(t.position_at(1.0).unwrap(), Point2::new(1.0, 0.0));
        // Vertices are returned exactly, not via interpolation.
        assert_eq!(t.position_at(2.0).unwrap(), Point2::new(2.0, 0.0));
        assert_eq!(t.position_at(3.0).unwrap(), Point2::new(2.0, 1.0));
    }

    #[test]
    fn polyline_rejects_out_of_domain() {
        let t = Trajectory::polyline(&[(0.0, Point2::new(0.0, 0.0)), (1.0, Point2::new(1.0, 0.0))])
            .unwrap();
        assert!(matches!(
            t.position_at(1.5),
            Err(ModelError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn breakpoints_listed_strictly_inside() {
        let t = Trajectory::polyline(&[
            (0.0, Point2::new(0.0, 0.0)),
            (0.5, Point2::new(1.0, 0.0)),
            (1.0, Point2::new(1.0, 1.0)),
        ])
        .unwrap();
        let mut out = Vec::new();
        t.breakpoints_in(0.0, 1.0, &mut out);
        assert_eq!(out, vec![0.5]);
        out.clear();
        t.breakpoints_in(0.5, 1.0, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn reversed_polyline_round_trip() {
        let t = Trajectory::polyline(&[
            (0.0, Point2::new(0.0, 0.0)),
            (0.25, Point2::new(1.0, 0.0)),
            (1.0, Point2::new(1.0, 2.0)),
        ])
        .unwrap();
        let r = t.reversed(1.0);
        let p = r.position_at(0.0).unwrap();
        assert_eq!(p, Point2::new(1.0, 2.0));
        let q = r.position_at(1.0).unwrap();
        assert_eq!(q, Point2::new(0.0, 0.0));
    }

    fn bath_spec(seed: u64, count: usize) -> BathSpec {
        BathSpec {
            master_seed: seed,
            species: vec![default_bath_species("A", count, vec![1, 1])],
        }
    }

    #[test]
    fn empty_bath_materializes_empty() {
        let (paths, species) = materialize_bath(&bath_spec(1, 0), 1.0).unwrap();
        assert!(paths.is_empty());
        assert!(species.is_empty());
    }

    #[test]
    fn bath_deterministic_for_fixed_seed() {
        let (a, _) = materialize_bath(&bath_spec(42, 50), 1.0).unwrap();
        let (b, _) = materialize_bath(&bath_spec(42, 50), 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bath_seeds_differ() {
        let (a, _) = materialize_bath(&bath_spec(1, 100), 1.0).unwrap();
        let (b, _) = materialize_bath(&bath_spec(2, 100), 1.0).unwrap();
        let first = |t: &Trajectory| match t {
            Trajectory::Polyline { points, .. } => points[0],
            _ => unreachable!(),
        };
        let differing = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| first(x) != first(y))
            .count();
        assert!(differing > 90, "only {differing} initial waypoints differ");
    }

    #[test]
    fn bath_seed_isolation_per_particle() {
        // The first particles of a 10-particle bath match the first of a
        // 100-particle bath: streams depend on (seed, species, index) only.
        let (small, _) = materialize_bath(&bath_spec(7, 10), 1.0).unwrap();
        let (large, _) = materialize_bath(&bath_spec(7, 100), 1.0).unwrap();
        assert_eq!(&small[..], &large[..10]);
    }

    #[test]
    fn bath_paths_respect_region_and_speed() {
        let (paths, _) = materialize_bath(&bath_spec(3, 40), 2.0).unwrap();
        for t in &paths {
            let Trajectory::Polyline { times, points } = t else {
                panic!("expected polyline")
            };
            assert_eq!(times[0], 0.0);
            assert!(*times.last().unwrap() >= 2.0);
            for w in points.windows(2).zip(times.windows(2)) {
                let (pw, tw) = w;
                let speed = pw[0].distance(&pw[1]) / (tw[1] - tw[0]);
                assert!(speed <= 5.0 + 1e-12, "speed {speed} exceeds cap");
            }
            for p in points {
                let r = p.distance(&Point2::new(0.0, 0.0));
                assert!((0.1..=10.0 + 1e-12).contains(&r), "radius {r} outside annulus");
            }
        }
    }

    #[test]
    fn coupling_matrix_from_species_rows() {
        let species = vec![
            default_bath_species("A", 1, vec![1, 0, -1]),
            default_bath_species("B", 1, vec![-1, 1, 0]),
            default_bath_species("C", 1, vec![0, -1, 1]),
        ];
        let m = CouplingMatrix::from_species(3, &species).unwrap();
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(2, 0), -1);
        assert_eq!(m.get(1, 2), -1);
        assert_eq!(m.get(2, 2), 1);
    }

    #[test]
    fn coupling_row_length_checked() {
        let species = vec![default_bath_species("A", 1, vec![1])];
        assert!(CouplingMatrix::from_species(2, &species).is_err());
    }

    #[test]
    fn source_triviality_predicate() {
        assert!(SourceSpec::fixed_at_origin(2.0).is_trivial());
        assert!(!SourceSpec::fixed_at_origin(0.37).is_trivial());
    }

    #[test]
    fn derive_seed_is_deterministic_and_spread() {
        let a = derive_seed(5, 0);
        let b = derive_seed(5, 1);
        assert_eq!(a, derive_seed(5, 0));
        assert_ne!(a, b);
    }

    #[test]
    fn region_too_small_reported() {
        // Every bath particle starts inside the clearance radius of the
        // fluxon parked at the origin.
        let spec = WorldSpec {
            duration: 1.0,
            fluxons: vec![FluxonSpec::new(
                0,
                0.0,
                Trajectory::Fixed {
                    at: Point2::new(0.0, 0.0),
                },
            )],
            source: SourceSpec::fixed_at_origin(0.37),
            bath: BathSpec {
                master_seed: 1,
                species: vec![BathSpeciesSpec {
                    name: "A".into(),
                    count: 5,
                    motion: BathMotion::RandomWaypoints {
                        region: Region::Rect {
                            x0: -0.1,
                            y0: -0.1,
                            x1: 0.1,
                            y1: 0.1,
                        },
                        speed_cap: 1.0,
                        waypoint_interval: 0.25,
                    },
                    coupling_row: vec![1],
                }],
            },
            potential: vec![],
        };
        let err = spec.materialize(0.5).unwrap_err();
        assert!(matches!(err, ModelError::RegionTooSmall { .. }), "{err:?}");
    }
}
