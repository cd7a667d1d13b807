//! TOML run configuration: one `[run]` section naming the experiment, shared
//! `[policy]`, `[source]`, and `[bath]` sections, and one optional section of
//! overrides per experiment kind. Unknown fields are rejected everywhere and
//! parsing round-trips losslessly.

use fluxon_core::dynamics::StepPolicy;
use fluxon_core::geometry::Point2;
use fluxon_core::model::{BathMotion, BathSpec, BathSpeciesSpec, Region, Trajectory};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleFluxon,
    TwoFluxonLoop,
    TwoFluxonOpen,
    ThreeFluxon,
    ScalarAb,
    LocalityProbe,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ExperimentKind::SingleFluxon => "single-fluxon",
            ExperimentKind::TwoFluxonLoop => "two-fluxon-loop",
            ExperimentKind::TwoFluxonOpen => "two-fluxon-open",
            ExperimentKind::ThreeFluxon => "three-fluxon",
            ExperimentKind::ScalarAb => "scalar-ab",
            ExperimentKind::LocalityProbe => "locality-probe",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub sampling_stride: usize,
    /// Fraction of ensemble members allowed to fail before the exit code
    /// goes non-zero.
    #[serde(default)]
    pub max_failure_fraction: f64,
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub dt: Option<f64>,
    pub max_substep_angle: Option<f64>,
    pub collision_eps: Option<f64>,
    pub closure_tolerance: Option<f64>,
}

impl PolicySection {
    pub fn to_policy(self) -> StepPolicy {
        let d = StepPolicy::default();
        StepPolicy {
            dt: self.dt.unwrap_or(d.dt),
            max_substep_angle: self.max_substep_angle.unwrap_or(d.max_substep_angle),
            collision_eps: self.collision_eps.unwrap_or(d.collision_eps),
            closure_tolerance: self.closure_tolerance.unwrap_or(d.closure_tolerance),
        }
    }
}

/// Trajectory in config form; waypoints are `[t, x, y]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectoryConfig {
    Fixed { x: f64, y: f64 },
    Polyline { waypoints: Vec<[f64; 3]> },
    CircleOrbit {
        cx: f64,
        cy: f64,
        radius: f64,
        angular_velocity: f64,
        initial_phase: f64,
    },
}

impl TrajectoryConfig {
    pub fn to_trajectory(&self, context: &str) -> Result<Trajectory, ConfigError> {
        match self {
            TrajectoryConfig::Fixed { x, y } => Ok(Trajectory::Fixed {
                at: Point2::new(*x, *y),
            }),
            TrajectoryConfig::Polyline { waypoints } => {
                let pts: Vec<(f64, Point2)> = waypoints
                    .iter()
                    .map(|w| (w[0], Point2::new(w[1], w[2])))
                    .collect();
                Trajectory::polyline(&pts)
                    .map_err(|e| ConfigError(format!("{context}.waypoints: {e}")))
            }
            TrajectoryConfig::CircleOrbit {
                cx,
                cy,
                radius,
                angular_velocity,
                initial_phase,
            } => Ok(Trajectory::CircleOrbit {
                center: Point2::new(*cx, *cy),
                radius: *radius,
                angular_velocity: *angular_velocity,
                initial_phase: *initial_phase,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub xi: f64,
    pub trajectory: Option<TrajectoryConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionConfig {
    Annulus { cx: f64, cy: f64, r_inner: f64, r_outer: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl RegionConfig {
    fn to_region(&self) -> Region {
        match *self {
            RegionConfig::Annulus {
                cx,
                cy,
                r_inner,
                r_outer,
            } => Region::Annulus {
                center: Point2::new(cx, cy),
                r_inner,
                r_outer,
            },
            RegionConfig::Rect { x0, y0, x1, y1 } => Region::Rect { x0, y0, x1, y1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MotionConfig {
    RandomWaypoints {
        region: RegionConfig,
        speed_cap: f64,
        waypoint_interval: f64,
    },
    OrbitRing {
        cx: f64,
        cy: f64,
        r_inner: f64,
        r_outer: f64,
        angular_velocity: f64,
    },
}

impl MotionConfig {
    fn to_motion(&self) -> BathMotion {
        match self {
            MotionConfig::RandomWaypoints {
                region,
                speed_cap,
                waypoint_interval,
            } => BathMotion::RandomWaypoints {
                region: region.to_region(),
                speed_cap: *speed_cap,
                waypoint_interval: *waypoint_interval,
            },
            MotionConfig::OrbitRing {
                cx,
                cy,
                r_inner,
                r_outer,
                angular_velocity,
            } => BathMotion::OrbitRing {
                center: Point2::new(*cx, *cy),
                r_inner: *r_inner,
                r_outer: *r_outer,
                angular_velocity: *angular_velocity,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub name: String,
    pub count: usize,
    /// Integer coupling of each fluxon to this species, fluxon-major.
    pub coupling: Vec<i64>,
    pub motion: Option<MotionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(default)]
    pub species: Vec<SpeciesConfig>,
}

impl BathSection {
    /// Expands to a [`BathSpec`]; `fluxons` is the experiment's fluxon count
    /// used to check coupling rows.
    pub fn to_bath(&self, seed: u64, fluxons: usize) -> Result<BathSpec, ConfigError> {
        let mut species = Vec::with_capacity(self.species.len());
        for (i, sp) in self.species.iter().enumerate() {
            if sp.coupling.len() != fluxons {
                return Err(ConfigError(format!(
                    "bath.species[{i}].coupling: expected {fluxons} entries (one per fluxon), got {}",
                    sp.coupling.len()
                )));
            }
            let default = fluxon_core::model::default_bath_species("", 0, vec![]);
            species.push(BathSpeciesSpec {
                name: sp.name.clone(),
                count: sp.count,
                motion: sp
                    .motion
                    .as_ref()
                    .map(|m| m.to_motion())
                    .unwrap_or(default.motion),
                coupling_row: sp.coupling.clone(),
            });
        }
        Ok(BathSpec {
            master_seed: seed,
            species,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleFluxonSection {
    #[serde(default = "default_one")]
    pub windings: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoFluxonLoopSection {
    #[serde(default = "default_one")]
    pub windings: i64,
    /// Bath particle count when no `[bath]` section is given.
    #[serde(default = "default_bath_count")]
    pub default_bath_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoFluxonOpenSection {
    /// Omitting the paths selects the built-in moving-source preset.
    pub path1: Option<TrajectoryConfig>,
    pub path2: Option<TrajectoryConfig>,
    pub source_path: Option<TrajectoryConfig>,
    pub duration: Option<f64>,
    pub default_bath_count: usize,
}

impl Default for TwoFluxonOpenSection {
    fn default() -> Self {
        Self {
            path1: None,
            path2: None,
            source_path: None,
            duration: None,
            default_bath_count: default_bath_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeFluxonSection {
    pub windings: [i64; 3],
    #[serde(default = "default_bath_count")]
    pub default_bath_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarAbSection {
    pub value: f64,
    pub dwell: f64,
    #[serde(default = "default_bath_count")]
    pub default_bath_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalityProbeSection {
    pub candidates: Vec<f64>,
    #[serde(default = "default_fraction")]
    pub segment_fraction: f64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_splits")]
    pub calibration_splits: usize,
    #[serde(default = "default_probe_bath_count")]
    pub default_bath_count: usize,
}

fn default_one() -> i64 {
    1
}
fn default_bath_count() -> usize {
    200
}
fn default_probe_bath_count() -> usize {
    500
}
fn default_fraction() -> f64 {
    0.5
}
fn default_ensemble() -> usize {
    2000
}
fn default_bins() -> usize {
    64
}
fn default_splits() -> usize {
    200
}

/// One complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub policy: Option<PolicySection>,
    pub source: Option<SourceSection>,
    pub bath: Option<BathSection>,
    pub single_fluxon: Option<SingleFluxonSection>,
    pub two_fluxon_loop: Option<TwoFluxonLoopSection>,
    pub two_fluxon_open: Option<TwoFluxonOpenSection>,
    pub three_fluxon: Option<ThreeFluxonSection>,
    pub scalar_ab: Option<ScalarAbSection>,
    pub locality_probe: Option<LocalityProbeSection>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn policy(&self) -> StepPolicy {
        self.policy.unwrap_or_default().to_policy()
    }

    pub fn xi(&self) -> Result<f64, ConfigError> {
        self.source
            .as_ref()
            .map(|s| s.xi)
            .ok_or_else(|| ConfigError("source.xi: required for this experiment".into()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let policy = self.policy();
        if !(policy.dt > 0.0) {
            return Err(ConfigError("policy.dt: must be positive".into()));
        }
        if !(policy.max_substep_angle > 0.0 && policy.max_substep_angle < std::f64::consts::PI) {
            return Err(ConfigError(
                "policy.max_substep_angle: must lie in (0, pi)".into(),
            ));
        }
        if !(self.run.max_failure_fraction >= 0.0 && self.run.max_failure_fraction <= 1.0) {
            return Err(ConfigError(
                "run.max_failure_fraction: must lie in [0, 1]".into(),
            ));
        }
        match self.run.experiment {
            ExperimentKind::SingleFluxon | ExperimentKind::TwoFluxonLoop
            | ExperimentKind::TwoFluxonOpen | ExperimentKind::ThreeFluxon => {
                self.xi()?;
            }
            ExperimentKind::ScalarAb => {
                let s = self.scalar_ab.as_ref().ok_or_else(|| {
                    ConfigError("scalar_ab: section required for scalar-ab".into())
                })?;
                if !(s.dwell > 0.0) {
                    return Err(ConfigError("scalar_ab.dwell: must be positive".into()));
                }
            }
            ExperimentKind::LocalityProbe => {
                let p = self.locality_probe.as_ref().ok_or_else(|| {
                    ConfigError("locality_probe: section required for locality-probe".into())
                })?;
                if p.candidates.len() < 2 {
                    return Err(ConfigError(
                        "locality_probe.candidates: need at least 2 coupling candidates".into(),
                    ));
                }
                if !(p.segment_fraction > 0.0 && p.segment_fraction < 1.0) {
                    return Err(ConfigError(
                        "locality_probe.segment_fraction: must lie in (0, 1)".into(),
                    ));
                }
                if p.bins < 2 {
                    return Err(ConfigError("locality_probe.bins: need at least 2".into()));
                }
            }
        }
        if let ExperimentKind::ThreeFluxon = self.run.experiment {
            if self.three_fluxon.is_none() {
                return Err(ConfigError(
                    "three_fluxon: section required for three-fluxon".into(),
                ));
            }
        }
        // Coupling rows are validated against the fluxon count on expansion;
        // check counts here so `validate` catches them without running.
        if let Some(bath) = &self.bath {
            let fluxons = self.fluxon_count();
            for (i, sp) in bath.species.iter().enumerate() {
                if sp.coupling.len() != fluxons {
                    return Err(ConfigError(format!(
                        "bath.species[{i}].coupling: expected {fluxons} entries (one per fluxon), got {}",
                        sp.coupling.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of fluxons the configured experiment simulates.
    pub fn fluxon_count(&self) -> usize {
        match self.run.experiment {
            ExperimentKind::SingleFluxon => 1,
            ExperimentKind::ThreeFluxon => 3,
            _ => 2,
        }
    }

    /// The bath for this run: the explicit `[bath]` section if present, the
    /// experiment's default otherwise.
    pub fn bath(&self, seed: u64) -> Result<BathSpec, ConfigError> {
        let fluxons = self.fluxon_count();
        if let Some(section) = &self.bath {
            return section.to_bath(seed, fluxons);
        }
        Ok(match self.run.experiment {
            ExperimentKind::SingleFluxon => BathSpec {
                master_seed: seed,
                species: vec![],
            },
            ExperimentKind::ThreeFluxon => {
                let count = self
                    .three_fluxon
                    .as_ref()
                    .map(|s| s.default_bath_count)
                    .unwrap_or_else(default_bath_count);
                fluxon_core::experiments::cyclic_bath(seed, count)
            }
            ExperimentKind::LocalityProbe => {
                let count = self
                    .locality_probe
                    .as_ref()
                    .map(|s| s.default_bath_count)
                    .unwrap_or_else(default_probe_bath_count);
                fluxon_core::experiments::uniform_bath(seed, count, fluxons)
            }
            ExperimentKind::TwoFluxonLoop => {
                let count = self
                    .two_fluxon_loop
                    .as_ref()
                    .map(|s| s.default_bath_count)
                    .unwrap_or_else(default_bath_count);
                fluxon_core::experiments::uniform_bath(seed, count, fluxons)
            }
            ExperimentKind::TwoFluxonOpen => {
                let count = self
                    .two_fluxon_open
                    .as_ref()
                    .map(|s| s.default_bath_count)
                    .unwrap_or_else(default_bath_count);
                fluxon_core::experiments::uniform_bath(seed, count, fluxons)
            }
            ExperimentKind::ScalarAb => {
                let count = self
                    .scalar_ab
                    .as_ref()
                    .map(|s| s.default_bath_count)
                    .unwrap_or_else(default_bath_count);
                fluxon_core::experiments::uniform_bath(seed, count, fluxons)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
experiment = "two-fluxon-loop"
seed = 42

[source]
xi = 0.37

[two_fluxon_loop]
windings = 1
"#;

    #[test]
    fn parse_minimal() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.run.experiment, ExperimentKind::TwoFluxonLoop);
        assert_eq!(cfg.run.seed, 42);
        assert_eq!(cfg.run.sampling_stride, 10);
        assert_eq!(cfg.xi().unwrap(), 0.37);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let text = cfg.to_toml();
        let cfg2 = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, cfg2);
        let text2 = cfg2.to_toml();
        assert_eq!(text, text2);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = format!("{MINIMAL}\nbogus_key = 1\n");
        let err = RunConfig::parse(&bad).unwrap_err();
        assert!(err.0.contains("bogus_key"), "{err}");
    }

    #[test]
    fn non_integer_coupling_rejected() {
        let bad = r#"
[run]
experiment = "two-fluxon-loop"
seed = 1

[source]
xi = 0.37

[[bath.species]]
name = "A"
count = 10
coupling = [1, 1.5]
"#;
        let err = RunConfig::parse(bad).unwrap_err();
        assert!(
            err.0.contains("coupling") || err.0.contains("integer"),
            "error should name the coupling entry: {err}"
        );
    }

    #[test]
    fn coupling_row_length_checked() {
        let bad = r#"
[run]
experiment = "three-fluxon"
seed = 1

[source]
xi = 0.37

[three_fluxon]
windings = [1, 0, 0]

[[bath.species]]
name = "A"
count = 10
coupling = [1, -1]
"#;
        let err = RunConfig::parse(bad).unwrap_err();
        assert!(err.0.contains("bath.species[0].coupling"), "{err}");
    }

    #[test]
    fn probe_needs_two_candidates() {
        let bad = r#"
[run]
experiment = "locality-probe"
seed = 1

[locality_probe]
candidates = [0.37]
"#;
        let err = RunConfig::parse(bad).unwrap_err();
        assert!(err.0.contains("candidates"), "{err}");
    }

    #[test]
    fn defaults_fill_policy() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let p = cfg.policy();
        assert_eq!(p.dt, 1e-3);
        assert_eq!(p.closure_tolerance, 1e-9);
    }

    #[test]
    fn explicit_bath_species_used() {
        let text = r#"
[run]
experiment = "two-fluxon-loop"
seed = 7

[source]
xi = 0.37

[[bath.species]]
name = "A"
count = 25
coupling = [1, 1]

[bath.species.motion]
kind = "random-waypoints"
speed_cap = 2.0
waypoint_interval = 0.5

[bath.species.motion.region]
kind = "annulus"
cx = 0.0
cy = 0.0
r_inner = 0.5
r_outer = 4.0
"#;
        let cfg = RunConfig::parse(text).unwrap();
        let bath = cfg.bath(7).unwrap();
        assert_eq!(bath.species.len(), 1);
        assert_eq!(bath.species[0].count, 25);
        assert!(matches!(
            bath.species[0].motion,
            BathMotion::RandomWaypoints { speed_cap, .. } if speed_cap == 2.0
        ));
    }
}
