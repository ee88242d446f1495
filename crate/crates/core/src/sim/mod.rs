//! Deterministic 2D multi-vehicle driving simulator.
//!
//! Three scene kinds (highway, merge, intersection) share one kinematic
//! model: point masses with headings, a proportional speed controller toward
//! a discrete target speed, and a lateral controller that completes a lane
//! change in about 1.5 s. Five meta-actions adjust targets; collision
//! detection uses axis-aligned vehicle rectangles. Evolution is a pure
//! function of `(Scene, joint action)`, so a seed fully determines an
//! episode.

pub mod log;
pub mod obs;
pub mod query;
pub mod render;
pub mod template;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{LogRow, StepAnnotation, TrajectoryLog};
pub use template::{Axis, LaneRole, SceneTemplate};

/// Episode length in steps; with `DT` this gives 20 simulated seconds.
pub const MAX_STEPS: u32 = 100;
/// Control period in seconds (5 Hz).
pub const DT: f64 = 0.2;
pub const SPEED_MIN: f64 = 0.0;
pub const SPEED_MAX: f64 = 40.0;
/// Sentinel headway when no leader exists, keeping DSL arithmetic total.
pub const NO_LEADER_HEADWAY: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Highway,
    Merge,
    Intersection,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::Highway, SceneKind::Merge, SceneKind::Intersection];

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Highway => "highway",
            SceneKind::Merge => "merge",
            SceneKind::Intersection => "intersection",
        }
    }
}

impl std::str::FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highway" => Ok(SceneKind::Highway),
            "merge" => Ok(SceneKind::Merge),
            "intersection" => Ok(SceneKind::Intersection),
            other => Err(format!("unknown scene kind `{other}`")),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Discrete meta-actions for lateral and longitudinal control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    LaneLeft,
    Idle,
    LaneRight,
    Faster,
    Slower,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::LaneLeft,
        Action::Idle,
        Action::LaneRight,
        Action::Faster,
        Action::Slower,
    ];
    pub const COUNT: usize = 5;

    pub fn index(&self) -> usize {
        match self {
            Action::LaneLeft => 0,
            Action::Idle => 1,
            Action::LaneRight => 2,
            Action::Faster => 3,
            Action::Slower => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::LaneLeft => "LaneLeft",
            Action::Idle => "Idle",
            Action::LaneRight => "LaneRight",
            Action::Faster => "Faster",
            Action::Slower => "Slower",
        }
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .find(|a| a.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Tunable kinematic constants. Defaults match the documented dynamics; the
/// meta-action speed delta is the conventional 5 m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Target-speed change per Faster/Slower action.
    pub speed_delta: f64,
    /// Proportional speed-controller gain, 1/s.
    pub speed_gain: f64,
    /// Acceleration magnitude limit, m/s^2.
    pub accel_limit: f64,
    /// Lateral slew rate, m/s; one 4 m lane change takes ~1.5 s.
    pub lateral_rate: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            speed_delta: 5.0,
            speed_gain: 2.0,
            accel_limit: 5.0,
            lateral_rate: 4.0 / 1.5,
            vehicle_length: 5.0,
            vehicle_width: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Radians; 0 points along +x.
    pub heading: f64,
    pub speed: f64,
    /// Speed at the previous step, for the acceleration query.
    pub prev_speed: f64,
    pub lane_index: u32,
    pub target_speed: f64,
    pub target_lane: u32,
    pub crashed: bool,
    pub controlled: bool,
}

impl VehicleState {
    /// Along-axis position for the vehicle's current lane axis.
    pub fn along(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }

    /// Cross-axis coordinate for the vehicle's current lane axis.
    pub fn cross(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.y,
            Axis::Y => self.x,
        }
    }

    fn half_extents(&self, axis: Axis, params: &SimParams) -> (f64, f64) {
        let hl = params.vehicle_length / 2.0;
        let hw = params.vehicle_width / 2.0;
        match axis {
            Axis::X => (hl, hw),
            Axis::Y => (hw, hl),
        }
    }
}

/// Immutable world snapshot. `step` consumes a snapshot plus a joint action
/// and produces the next snapshot; cloning is cheap (the template is shared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub kind: SceneKind,
    pub vehicles: Vec<VehicleState>,
    pub time_step: u32,
    pub dt: f64,
    pub rng_seed: u64,
    pub params: SimParams,
    #[serde(skip, default = "default_template")]
    pub template: Arc<SceneTemplate>,
}

fn default_template() -> Arc<SceneTemplate> {
    Arc::new(template::builtin(SceneKind::Highway).clone())
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("need at least one controlled vehicle")]
    NoControlled,
    #[error("template has {available} {role} spawn slots, requested {requested}")]
    Capacity {
        role: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("episode already finished at step {0}")]
    EpisodeFinished(u32),
    #[error("missing action for controlled vehicle {0}")]
    MissingAction(u32),
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),
    #[error("policy map does not cover exactly the controlled vehicles")]
    PolicyMismatch,
    #[error("hook failed at step {step}: {msg}")]
    Hook { step: u32, msg: String },
}

impl Scene {
    pub fn vehicle(&self, id: u32) -> Result<&VehicleState, SimError> {
        self.vehicles
            .iter()
            .find(|v| v.id == id)
            .ok_or(SimError::UnknownVehicle(id))
    }

    pub fn controlled_ids(&self) -> Vec<u32> {
        self.vehicles
            .iter()
            .filter(|v| v.controlled)
            .map(|v| v.id)
            .collect()
    }

    pub fn lane_axis(&self, lane_index: u32) -> Axis {
        self.template.lane(lane_index).axis
    }

    pub fn all_controlled_crashed(&self) -> bool {
        self.vehicles
            .iter()
            .filter(|v| v.controlled)
            .all(|v| v.crashed)
    }

    pub fn finished(&self) -> bool {
        self.time_step >= MAX_STEPS || self.all_controlled_crashed()
    }
}

/// Build a scene from the built-in template for `kind`, with seed-jittered
/// spawn offsets. Deterministic: identical arguments give identical scenes.
pub fn create_scene(
    kind: SceneKind,
    seed: u64,
    n_controlled: usize,
    n_background: usize,
) -> Result<Scene, SimError> {
    create_scene_from(kind, seed, n_controlled, n_background, template::builtin(kind))
}

/// Same as [`create_scene`] but with an explicit template.
pub fn create_scene_from(
    kind: SceneKind,
    seed: u64,
    n_controlled: usize,
    n_background: usize,
    template: &SceneTemplate,
) -> Result<Scene, SimError> {
    if n_controlled == 0 {
        return Err(SimError::NoControlled);
    }
    if n_controlled > template.controlled.len() {
        return Err(SimError::Capacity {
            role: "controlled",
            requested: n_controlled,
            available: template.controlled.len(),
        });
    }
    if n_background > template.background.len() {
        return Err(SimError::Capacity {
            role: "background",
            requested: n_background,
            available: template.background.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vehicles = Vec::with_capacity(n_controlled + n_background);
    let mut spawn = |slot: &template::SpawnSlot, id: u32, controlled: bool, rng: &mut ChaCha8Rng| {
        let lane = template.lane(slot.lane);
        let jitter = rng.random_range(-template.jitter..=template.jitter);
        let pos = (slot.pos + jitter).clamp(lane.span[0], lane.span[1]);
        let (x, y, heading) = match lane.axis {
            Axis::X => (pos, lane.center, 0.0),
            Axis::Y => (lane.center, pos, std::f64::consts::FRAC_PI_2),
        };
        vehicles.push(VehicleState {
            id,
            x,
            y,
            heading,
            speed: slot.speed,
            prev_speed: slot.speed,
            lane_index: slot.lane,
            target_speed: slot.speed,
            target_lane: slot.lane,
            crashed: false,
            controlled,
        });
    };
    for (i, slot) in template.controlled.iter().take(n_controlled).enumerate() {
        spawn(slot, i as u32, true, &mut rng);
    }
    for (i, slot) in template.background.iter().take(n_background).enumerate() {
        spawn(slot, (n_controlled + i) as u32, false, &mut rng);
    }

    let scene = Scene {
        kind,
        vehicles,
        time_step: 0,
        dt: DT,
        rng_seed: seed,
        params: SimParams::default(),
        template: Arc::new(template.clone()),
    };
    debug_assert!(
        collisions(&scene).iter().all(|c| !c),
        "template spawn slots must not overlap"
    );
    Ok(scene)
}

/// Axis-aligned rectangle overlap for every vehicle pair. Returns a
/// per-vehicle "touched something" flag; the relation is symmetric by
/// construction.
fn collisions(scene: &Scene) -> Vec<bool> {
    let n = scene.vehicles.len();
    let mut hit = vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &scene.vehicles[i];
            let b = &scene.vehicles[j];
            let (ax, ay) = a.half_extents(scene.lane_axis(a.lane_index), &scene.params);
            let (bx, by) = b.half_extents(scene.lane_axis(b.lane_index), &scene.params);
            if (a.x - b.x).abs() < ax + bx && (a.y - b.y).abs() < ay + by {
                hit[i] = true;
                hit[j] = true;
            }
        }
    }
    hit
}

/// Advance the scene one step under the joint action. Pure: the input scene
/// is untouched. Returns the next scene and a map of vehicles that crashed
/// during this step (collision or running off a lane end).
pub fn step(
    scene: &Scene,
    joint: &BTreeMap<u32, Action>,
) -> Result<(Scene, BTreeMap<u32, bool>), SimError> {
    if scene.time_step >= MAX_STEPS {
        return Err(SimError::EpisodeFinished(scene.time_step));
    }
    for v in scene.vehicles.iter().filter(|v| v.controlled && !v.crashed) {
        if !joint.contains_key(&v.id) {
            return Err(SimError::MissingAction(v.id));
        }
    }
    for id in joint.keys() {
        scene.vehicle(*id)?;
    }

    let params = scene.params;
    let mut next = scene.clone();

    for v in next.vehicles.iter_mut() {
        if v.crashed {
            v.prev_speed = v.speed;
            continue;
        }

        // Meta-action: adjust targets. Background vehicles keep their spawn
        // targets (constant-speed lane keeping).
        if v.controlled {
            match joint.get(&v.id).copied().unwrap_or(Action::Idle) {
                Action::Faster => {
                    v.target_speed = (v.target_speed + params.speed_delta).min(SPEED_MAX);
                }
                Action::Slower => {
                    v.target_speed = (v.target_speed - params.speed_delta).max(SPEED_MIN);
                }
                Action::LaneLeft => {
                    let axis = scene.template.lane(v.lane_index).axis;
                    if let Some(lane) =
                        scene.template.adjacent_lane(v.lane_index, -1, v.along(axis))
                    {
                        v.target_lane = lane;
                    }
                }
                Action::LaneRight => {
                    let axis = scene.template.lane(v.lane_index).axis;
                    if let Some(lane) =
                        scene.template.adjacent_lane(v.lane_index, 1, v.along(axis))
                    {
                        v.target_lane = lane;
                    }
                }
                Action::Idle => {}
            }
        }

        // Longitudinal: proportional control toward target speed with an
        // acceleration limit, snapping when close so bounds are hit exactly.
        v.prev_speed = v.speed;
        let accel = (params.speed_gain * (v.target_speed - v.speed))
            .clamp(-params.accel_limit, params.accel_limit);
        v.speed += accel * scene.dt;
        if (v.speed - v.target_speed).abs() < 0.05 {
            v.speed = v.target_speed;
        }
        v.speed = v.speed.clamp(SPEED_MIN, SPEED_MAX);

        // Positions: advance along the travel axis, slew toward the target
        // lane center on the cross axis.
        let axis = scene.template.lane(v.lane_index).axis;
        let long_step = v.speed * scene.dt;
        let target_cross = scene.template.lane(v.target_lane).center;
        let cross_err = target_cross - v.cross(axis);
        let lat_step = cross_err.clamp(-params.lateral_rate * scene.dt, params.lateral_rate * scene.dt);
        match axis {
            Axis::X => {
                v.x += long_step;
                v.y += lat_step;
            }
            Axis::Y => {
                v.y += long_step;
                v.x += lat_step;
            }
        }
        if long_step != 0.0 || lat_step != 0.0 {
            let base = match axis {
                Axis::X => 0.0,
                Axis::Y => std::f64::consts::FRAC_PI_2,
            };
            v.heading = base + lat_step.atan2(long_step.max(1e-9));
        }

        // Re-derive the lane from geometry; running past a lane end (the
        // ramp terminus) wrecks the vehicle.
        let lane = scene.template.nearest_lane(axis, v.cross(axis));
        v.lane_index = lane;
        if !scene.template.lane(lane).covers(v.along(axis)) {
            v.crashed = true;
            v.speed = 0.0;
            v.target_speed = 0.0;
        }
    }

    // Collision detection after integration; crashing is absorbing and stops
    // the vehicle.
    let mut newly = BTreeMap::new();
    let hits = collisions(&next);
    for (i, vehicle) in next.vehicles.iter_mut().enumerate() {
        let ran_off = vehicle.crashed && !scene.vehicles[i].crashed;
        if hits[i] && !scene.vehicles[i].crashed {
            vehicle.crashed = true;
            vehicle.speed = 0.0;
            vehicle.target_speed = 0.0;
        }
        newly.insert(vehicle.id, ran_off || (hits[i] && !scene.vehicles[i].crashed));
    }

    next.time_step += 1;
    Ok((next, newly))
}

/// Per-vehicle decision source for rollouts.
pub trait VehiclePolicy {
    fn decide(&mut self, scene: &Scene, vehicle_id: u32) -> Action;
}

/// Uniform-random policy with its own deterministic stream; used for tests
/// and for the shared probe rollouts behind the code-diversity metric.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl VehiclePolicy for RandomPolicy {
    fn decide(&mut self, _scene: &Scene, _vehicle_id: u32) -> Action {
        Action::ALL[self.rng.random_range(0..Action::COUNT)]
    }
}

/// Per-step callback invoked after integration, in a fixed position of the
/// step cycle (decide, step, hook). The returned annotations are attached to
/// the log rows of the post-step state.
pub trait StepHook {
    fn on_step(
        &mut self,
        t: u32,
        before: &Scene,
        joint: &BTreeMap<u32, Action>,
        after: &Scene,
        newly_crashed: &BTreeMap<u32, bool>,
    ) -> Result<BTreeMap<u32, StepAnnotation>, String>;
}

/// Run an episode: exactly [`MAX_STEPS`] steps, or fewer when every
/// controlled vehicle has crashed. Hook errors abort with the step index.
pub fn rollout(
    initial: &Scene,
    policies: &mut BTreeMap<u32, Box<dyn VehiclePolicy + '_>>,
    mut hook: Option<&mut dyn StepHook>,
    behavior_id: Option<&str>,
) -> Result<TrajectoryLog, SimError> {
    let controlled = initial.controlled_ids();
    if controlled.len() != policies.len() || controlled.iter().any(|id| !policies.contains_key(id))
    {
        return Err(SimError::PolicyMismatch);
    }

    let mut log = TrajectoryLog::new(initial, behavior_id);
    let mut scene = initial.clone();
    while scene.time_step < MAX_STEPS {
        if scene.all_controlled_crashed() {
            log.terminated_early = true;
            break;
        }
        let t = scene.time_step;
        let mut joint = BTreeMap::new();
        for (&id, policy) in policies.iter_mut() {
            if !scene.vehicle(id)?.crashed {
                joint.insert(id, policy.decide(&scene, id));
            }
        }
        let (after, newly) = step(&scene, &joint)?;
        let annotations = match hook.as_deref_mut() {
            Some(h) => h
                .on_step(t, &scene, &joint, &after, &newly)
                .map_err(|msg| SimError::Hook { step: t, msg })?,
            None => BTreeMap::new(),
        };
        log.push_step(t, &after, &joint, &annotations);
        scene = after;
    }
    log.steps = scene.time_step;
    Ok(log)
}
