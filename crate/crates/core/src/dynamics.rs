//! Time-stepping engine: advances all positions along their prescribed
//! trajectories and accumulates each fluxon's internal angle.
//!
//! The internal angle of fluxon `k` obeys
//! `dphi_k/dt = xi * dtheta_k/dt + sum_i c[k][s(i)] * dtheta_ki/dt + V(x_k)`,
//! where `theta_k` is the polar angle of the fluxon relative to the source
//! and `theta_ki` the polar angle of bath particle `i` relative to the
//! fluxon. Every angle is accumulated unwrapped. Steps split at trajectory
//! waypoints, so increments over piecewise-linear motion are exact; any
//! wrapped increment above the sub-step threshold triggers recursive
//! bisection with positions re-evaluated from the trajectory, never
//! interpolated from coarse endpoints.

use crate::geometry::{
    angle_of, wrap_angle_diff, AngleRules, GeometryError, Point2, UnwrappedAngle,
};
use crate::model::{ModelError, Trajectory, World};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const MAX_BISECTION_DEPTH: u32 = 48;

/// Step-size and tolerance knobs for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    /// Base time step.
    pub dt: f64,
    /// Wrapped increments above this trigger sub-stepping. Must lie in
    /// (0, pi).
    pub max_substep_angle: f64,
    /// Separation treated as a collision.
    pub collision_eps: f64,
    /// Residual tolerance (in turns) for closed-path winding extraction.
    pub closure_tolerance: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            max_substep_angle: PI / 2.0,
            collision_eps: 1e-6,
            closure_tolerance: 1e-9,
        }
    }
}

impl StepPolicy {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn rules(&self) -> AngleRules {
        AngleRules {
            collision_eps: self.collision_eps,
            max_step_angle: self.max_substep_angle,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) {
            return Err(DynamicsError::Model(ModelError::InvalidSpec(
                "dt must be positive".into(),
            )));
        }
        if !(self.max_substep_angle > 0.0 && self.max_substep_angle < PI) {
            return Err(DynamicsError::Model(ModelError::InvalidSpec(
                "max_substep_angle must lie in (0, pi)".into(),
            )));
        }
        Ok(())
    }
}

/// Which tracked angle pair failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairId {
    /// Fluxon `fluxon` relative to the source.
    Source { fluxon: usize },
    /// Bath particle `particle` relative to fluxon `fluxon`.
    Bath { fluxon: usize, particle: usize },
}

impl std::fmt::Display for PairId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairId::Source { fluxon } => write!(f, "fluxon {fluxon} / source"),
            PairId::Bath { fluxon, particle } => {
                write!(f, "bath particle {particle} / fluxon {fluxon}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    /// A tracked pair passed within the collision epsilon; the polar angle is
    /// singular there. The run aborts; an ensemble harness should re-seed.
    #[error("coincidence at t = {t}: {pair} at separation {separation:.3e}; rerun with a different seed")]
    Coincident {
        t: f64,
        pair: PairId,
        separation: f64,
    },
    /// Bisection hit its depth limit without the increment dropping below
    /// the sub-step threshold.
    #[error("step too coarse at t = {t}: {pair} still sweeps {got:.3} rad at the bisection depth limit")]
    StepTooCoarse { t: f64, pair: PairId, got: f64 },
    #[error("stepping past the end of the experiment (t = {t}, duration = {duration})")]
    PastEnd { t: f64, duration: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One tracked angle pair: unwrapped total, its initial value, and the
/// principal angle at the current time (carried so each node costs one
/// `atan2`).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ledger {
    total: UnwrappedAngle,
    initial: f64,
    prev_angle: f64,
}

impl Ledger {
    fn delta(&self) -> f64 {
        self.total.total() - self.initial
    }
}

/// Full simulation state: time plus every angle ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    step_index: u64,
    src: Vec<Ledger>,
    /// Active (coupling != 0) bath pairs, grouped by fluxon.
    bath: Vec<Ledger>,
    bath_particle: Vec<u32>,
    bath_coupling: Vec<f64>,
    /// `bath[bath_offsets[k]..bath_offsets[k+1]]` are fluxon k's pairs.
    bath_offsets: Vec<usize>,
    scalar: Vec<f64>,
}

impl SimState {
    /// Ledgers at t = 0. Fails if any tracked pair starts coincident.
    pub fn init(world: &World, policy: &StepPolicy) -> Result<Self, DynamicsError> {
        policy.validate()?;
        let rules = policy.rules();
        let k_count = world.fluxon_count();
        let mut src = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let p = world.fluxon_paths[k].position_at(0.0)?;
            let c = world.source_path.position_at(0.0)?;
            let a = pair_angle(p, c, 0.0, PairId::Source { fluxon: k }, &rules)?;
            src.push(Ledger {
                total: UnwrappedAngle::new(a),
                initial: a,
                prev_angle: a,
            });
        }
        let mut bath = Vec::new();
        let mut bath_particle = Vec::new();
        let mut bath_coupling = Vec::new();
        let mut bath_offsets = vec![0usize];
        for k in 0..k_count {
            let fluxon_pos = world.fluxon_paths[k].position_at(0.0)?;
            for (i, path) in world.bath_paths.iter().enumerate() {
                let c = world.coupling.get(k, world.bath_species[i]);
                if c == 0 {
                    continue;
                }
                let p = path.position_at(0.0)?;
                let a = pair_angle(
                    p,
                    fluxon_pos,
                    0.0,
                    PairId::Bath {
                        fluxon: k,
                        particle: i,
                    },
                    &rules,
                )?;
                bath.push(Ledger {
                    total: UnwrappedAngle::new(a),
                    initial: a,
                    prev_angle: a,
                });
                bath_particle.push(i as u32);
                bath_coupling.push(c as f64);
            }
            bath_offsets.push(bath.len());
        }
        Ok(Self {
            t: 0.0,
            step_index: 0,
            src,
            bath,
            bath_particle,
            bath_coupling,
            bath_offsets,
            scalar: vec![0.0; k_count],
        })
    }

    /// Unwrapped source angle of fluxon `k`.
    pub fn theta_source(&self, k: usize) -> f64 {
        self.src[k].total.total()
    }

    /// Change of the source angle since t = 0.
    pub fn theta_source_delta(&self, k: usize) -> f64 {
        self.src[k].delta()
    }

    /// Coupled bath contribution `sum_i c[k][s(i)] * (theta_ki - theta_ki(0))`.
    pub fn bath_contribution(&self, k: usize) -> f64 {
        let range = self.bath_offsets[k]..self.bath_offsets[k + 1];
        let mut sum = 0.0;
        for idx in range {
            sum += self.bath_coupling[idx] * self.bath[idx].delta();
        }
        sum
    }

    /// Unwrapped relative angle ledger of one bath pair, if tracked.
    pub fn theta_bath(&self, k: usize, particle: usize) -> Option<f64> {
        let range = self.bath_offsets[k]..self.bath_offsets[k + 1];
        for idx in range {
            if self.bath_particle[idx] as usize == particle {
                return Some(self.bath[idx].total.total());
            }
        }
        None
    }

    /// Accumulated scalar-potential phase of fluxon `k`.
    pub fn scalar_phase(&self, k: usize) -> f64 {
        self.scalar[k]
    }

    /// Internal angle, reconstructed from the ledgers it is defined by.
    pub fn phi(&self, world: &World, k: usize) -> f64 {
        world.phi0[k]
            + world.xi * self.src[k].delta()
            + self.bath_contribution(k)
            + self.scalar[k]
    }
}

fn pair_angle(
    p: Point2,
    c: Point2,
    t: f64,
    pair: PairId,
    rules: &AngleRules,
) -> Result<f64, DynamicsError> {
    angle_of(p, c, rules).map_err(|e| match e {
        GeometryError::Coincident { separation, .. } => DynamicsError::Coincident {
            t,
            pair,
            separation,
        },
        _ => unreachable!("angle_of only reports coincidence"),
    })
}

/// Advances the state by one base step of `policy.dt` (clamped to the
/// experiment end).
pub fn step(state: &mut SimState, world: &World, policy: &StepPolicy) -> Result<(), DynamicsError> {
    if state.t >= world.duration {
        return Err(DynamicsError::PastEnd {
            t: state.t,
            duration: world.duration,
        });
    }
    let t0 = state.t;
    let t1 = (((state.step_index + 1) as f64) * policy.dt).min(world.duration);
    advance(state, world, policy, t0, t1)?;
    state.t = t1;
    state.step_index += 1;
    Ok(())
}

fn advance(
    state: &mut SimState,
    world: &World,
    policy: &StepPolicy,
    t0: f64,
    t1: f64,
) -> Result<(), DynamicsError> {
    let rules = policy.rules();
    let mut nodes: Vec<f64> = Vec::new();

    for k in 0..world.fluxon_count() {
        let pair = PairId::Source { fluxon: k };
        advance_pair(
            &mut state.src[k],
            &world.fluxon_paths[k],
            &world.source_path,
            t0,
            t1,
            pair,
            &rules,
            &mut nodes,
        )?;
        let range = state.bath_offsets[k]..state.bath_offsets[k + 1];
        for idx in range {
            let particle = state.bath_particle[idx] as usize;
            let pair = PairId::Bath {
                fluxon: k,
                particle,
            };
            advance_pair(
                &mut state.bath[idx],
                &world.bath_paths[particle],
                &world.fluxon_paths[k],
                t0,
                t1,
                pair,
                &rules,
                &mut nodes,
            )?;
        }
    }

    // Midpoint rule for the scalar term; exact wherever the potential is
    // constant across the step.
    if !world.potential.is_empty() {
        let tm = 0.5 * (t0 + t1);
        for k in 0..world.fluxon_count() {
            let pos = world.fluxon_paths[k].position_at(tm)?;
            state.scalar[k] += world.potential_at(pos) * (t1 - t0);
        }
    }
    Ok(())
}

/// Accumulates one pair's angle over `[t0, t1]`: splits at both trajectories'
/// waypoints (exactness across corners), caps the width for fast orbits, and
/// bisects any residual too-coarse increment.
#[allow(clippy::too_many_arguments)]
fn advance_pair(
    ledger: &mut Ledger,
    point_path: &Trajectory,
    center_path: &Trajectory,
    t0: f64,
    t1: f64,
    pair: PairId,
    rules: &AngleRules,
    nodes: &mut Vec<f64>,
) -> Result<(), DynamicsError> {
    nodes.clear();
    point_path.breakpoints_in(t0, t1, nodes);
    let before = nodes.len();
    center_path.breakpoints_in(t0, t1, nodes);
    if before > 0 && nodes.len() > before {
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
    }

    let cap = point_path
        .max_smooth_step()
        .min(center_path.max_smooth_step());

    let mut a_time = t0;
    let mut a_angle = ledger.prev_angle;
    for i in 0..=nodes.len() {
        let b_time = if i < nodes.len() { nodes[i] } else { t1 };
        let width = b_time - a_time;
        if width <= 0.0 {
            continue;
        }
        let sub = if width > cap {
            (width / cap).ceil() as usize
        } else {
            1
        };
        for j in 1..=sub {
            let tb = if j == sub {
                b_time
            } else {
                a_time + width * (j as f64 / sub as f64)
            };
            let (delta, angle_b) =
                refine(point_path, center_path, a_time, a_angle, tb, pair, rules, 0)?;
            ledger.total.add(delta);
            a_angle = angle_b;
            if j == sub {
                a_time = b_time;
            }
        }
    }
    ledger.prev_angle = a_angle;
    Ok(())
}

/// Wrapped increment from the known angle at `ta` to the trajectory-evaluated
/// angle at `tb`, bisecting while the increment exceeds the threshold.
/// Returns the summed increment and the principal angle at `tb`.
#[allow(clippy::too_many_arguments)]
fn refine(
    point_path: &Trajectory,
    center_path: &Trajectory,
    ta: f64,
    a_angle: f64,
    tb: f64,
    pair: PairId,
    rules: &AngleRules,
    depth: u32,
) -> Result<(f64, f64), DynamicsError> {
    let p = point_path.position_at(tb)?;
    let c = center_path.position_at(tb)?;
    let b_angle = pair_angle(p, c, tb, pair, rules)?;
    let d = wrap_angle_diff(b_angle - a_angle);
    if d.abs() <= rules.max_step_angle {
        return Ok((d, b_angle));
    }
    if depth >= MAX_BISECTION_DEPTH {
        return Err(DynamicsError::StepTooCoarse {
            t: tb,
            pair,
            got: d,
        });
    }
    let tm = 0.5 * (ta + tb);
    let (d1, m_angle) = refine(point_path, center_path, ta, a_angle, tm, pair, rules, depth + 1)?;
    let (d2, b_angle) = refine(point_path, center_path, tm, m_angle, tb, pair, rules, depth + 1)?;
    Ok((d1 + d2, b_angle))
}

/// One recorded instant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub positions: Vec<Point2>,
    /// Unwrapped source angles theta_k.
    pub theta: Vec<f64>,
    /// Internal angles phi_k (unwrapped).
    pub phi: Vec<f64>,
    /// Coupled bath contributions per fluxon since t = 0.
    pub bath: Vec<f64>,
    /// Scalar-potential phase per fluxon since t = 0.
    pub scalar: Vec<f64>,
}

impl TraceSample {
    fn capture(state: &SimState, world: &World) -> Result<Self, DynamicsError> {
        let k_count = world.fluxon_count();
        let mut positions = Vec::with_capacity(k_count);
        for k in 0..k_count {
            positions.push(world.fluxon_paths[k].position_at(state.t)?);
        }
        Ok(Self {
            t: state.t,
            positions,
            theta: (0..k_count).map(|k| state.theta_source(k)).collect(),
            phi: (0..k_count).map(|k| state.phi(world, k)).collect(),
            bath: (0..k_count).map(|k| state.bath_contribution(k)).collect(),
            scalar: (0..k_count).map(|k| state.scalar_phase(k)).collect(),
        })
    }

    /// Relative internal angle `phi_1 - phi_0` (two-fluxon convention).
    pub fn gamma(&self) -> f64 {
        self.phi[1] - self.phi[0]
    }

    /// Sum of all internal angles.
    pub fn phi_sum(&self) -> f64 {
        self.phi.iter().sum()
    }
}

/// Result of a complete run: sampled time series plus the final ledgers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub samples: Vec<TraceSample>,
    pub final_state: SimState,
}

impl ExperimentTrace {
    pub fn first(&self) -> &TraceSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TraceSample {
        self.samples.last().expect("trace has at least one sample")
    }

    /// Change of fluxon k's internal angle over the run.
    pub fn delta_phi(&self, k: usize) -> f64 {
        self.last().phi[k] - self.first().phi[k]
    }

    /// Change of `gamma = phi_1 - phi_0` over the run.
    pub fn delta_gamma(&self) -> f64 {
        self.last().gamma() - self.first().gamma()
    }

    /// Sample closest to time `t`.
    pub fn sample_at(&self, t: f64) -> &TraceSample {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap())
            .expect("trace has at least one sample")
    }
}

/// Runs a world over `[0, duration]`, recording every `stride`-th step.
pub fn run(
    world: &World,
    policy: &StepPolicy,
    stride: usize,
) -> Result<ExperimentTrace, DynamicsError> {
    let stride = stride.max(1);
    let mut state = SimState::init(world, policy)?;
    let mut samples = vec![TraceSample::capture(&state, world)?];
    if world.duration > 0.0 {
        let n_steps = (world.duration / policy.dt).ceil() as u64;
        for j in 0..n_steps {
            step(&mut state, world, policy)?;
            if (j + 1) % stride as u64 == 0 || j + 1 == n_steps {
                samples.push(TraceSample::capture(&state, world)?);
            }
        }
    }
    Ok(ExperimentTrace {
        samples,
        final_state: state,
    })
}
