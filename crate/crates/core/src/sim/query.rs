//! Low-level query catalog: the fixed set of scalar/boolean probes the
//! expression DSL can call on a scene. Queries are pure functions of the
//! scene snapshot; per-scene availability is part of the catalog so guard
//! validation can reject, say, `on_ramp()` in a highway behavior.

use thiserror::Error;

use crate::dsl::{QueryHost, QuerySig, Ty, Value};

use super::template::LaneRole;
use super::{Scene, SceneKind, VehicleState, NO_LEADER_HEADWAY};

/// Catalog entry: signature plus the retrieval-facing documentation chunk.
#[derive(Debug, Clone, Copy)]
pub struct QueryDoc {
    pub name: &'static str,
    pub ret: Ty,
    pub scenes: &'static [SceneKind],
    pub doc: &'static str,
}

const ALL_SCENES: &[SceneKind] = &SceneKind::ALL;
const MERGE_ONLY: &[SceneKind] = &[SceneKind::Merge];
const INTERSECTION_ONLY: &[SceneKind] = &[SceneKind::Intersection];

const CATALOG: &[QueryDoc] = &[
    QueryDoc {
        name: "speed",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "speed() -> num: current speed in m/s, range [0, 40]; round it before comparing against whole numbers",
    },
    QueryDoc {
        name: "lane_index",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "lane_index() -> num: index of the lane currently occupied",
    },
    QueryDoc {
        name: "x",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "x() -> num: longitudinal world position in meters",
    },
    QueryDoc {
        name: "y",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "y() -> num: lateral world position in meters",
    },
    QueryDoc {
        name: "heading",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "heading() -> num: heading angle in radians, 0 along the road",
    },
    QueryDoc {
        name: "headway",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "headway() -> num: bumper gap in meters to the nearest leader in the same lane; 1e9 when the lane ahead is empty, so tailgating checks look like 0 < headway() and headway() < 15",
    },
    QueryDoc {
        name: "acceleration",
        ret: Ty::Num,
        scenes: ALL_SCENES,
        doc: "acceleration() -> num: speed change rate in m/s^2 from the last step; positive while speeding up, negative while braking",
    },
    QueryDoc {
        name: "is_colliding",
        ret: Ty::Bool,
        scenes: ALL_SCENES,
        doc: "is_colliding() -> bool: true once the vehicle has crashed this episode",
    },
    QueryDoc {
        name: "on_ramp",
        ret: Ty::Bool,
        scenes: MERGE_ONLY,
        doc: "on_ramp() -> bool: true while the vehicle is on the on-ramp acceleration lane used for merging onto the highway",
    },
    QueryDoc {
        name: "distance_to_merging_end",
        ret: Ty::Num,
        scenes: MERGE_ONLY,
        doc: "distance_to_merging_end() -> num: meters of acceleration lane left before the merging terminus; 0 once past it",
    },
    QueryDoc {
        name: "merged",
        ret: Ty::Bool,
        scenes: MERGE_ONLY,
        doc: "merged() -> bool: true once the vehicle travels on a main carriageway lane alongside or beyond the ramp section",
    },
    QueryDoc {
        name: "near_intersection",
        ret: Ty::Bool,
        scenes: INTERSECTION_ONLY,
        doc: "near_intersection() -> bool: true while approaching within 50 m of the intersection box, before entering it",
    },
    QueryDoc {
        name: "in_intersection",
        ret: Ty::Bool,
        scenes: INTERSECTION_ONLY,
        doc: "in_intersection() -> bool: true while inside the intersection conflict box",
    },
    QueryDoc {
        name: "distance_to_intersection",
        ret: Ty::Num,
        scenes: INTERSECTION_ONLY,
        doc: "distance_to_intersection() -> num: meters until the intersection box entry edge; 0 once inside or past",
    },
];

/// How far ahead of the box `near_intersection` starts holding.
pub const NEAR_INTERSECTION_RANGE: f64 = 50.0;

/// Every query in the system, regardless of scene.
pub fn catalog_all() -> &'static [QueryDoc] {
    CATALOG
}

/// Signatures of the queries available in `kind` scenes, for DSL validation.
pub fn catalog(kind: SceneKind) -> Vec<QuerySig> {
    CATALOG
        .iter()
        .filter(|q| q.scenes.contains(&kind))
        .map(|q| QuerySig { name: q.name, ret: q.ret })
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("unknown query `{0}`")]
    Unknown(String),
    #[error("query `{query}` is not defined for {kind} scenes")]
    UndefinedForScene { query: String, kind: SceneKind },
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),
}

/// Evaluate a catalog query. Errors on names outside the catalog or outside
/// the scene kind's slice of it — never a silent default.
pub fn query(scene: &Scene, vehicle_id: u32, name: &str) -> Result<Value, QueryError> {
    let doc = CATALOG
        .iter()
        .find(|q| q.name == name)
        .ok_or_else(|| QueryError::Unknown(name.to_string()))?;
    if !doc.scenes.contains(&scene.kind) {
        return Err(QueryError::UndefinedForScene {
            query: name.to_string(),
            kind: scene.kind,
        });
    }
    let vehicle = scene
        .vehicles
        .iter()
        .find(|v| v.id == vehicle_id)
        .ok_or(QueryError::UnknownVehicle(vehicle_id))?;
    Ok(eval_query(scene, vehicle, name))
}

fn eval_query(scene: &Scene, v: &VehicleState, name: &str) -> Value {
    let lane = scene.template.lane(v.lane_index);
    match name {
        "speed" => Value::Num(v.speed),
        "lane_index" => Value::Num(v.lane_index as f64),
        "x" => Value::Num(v.x),
        "y" => Value::Num(v.y),
        "heading" => Value::Num(v.heading),
        "acceleration" => Value::Num((v.speed - v.prev_speed) / scene.dt),
        "is_colliding" => Value::Bool(v.crashed),
        "headway" => Value::Num(headway(scene, v)),
        "on_ramp" => Value::Bool(lane.role == LaneRole::Ramp),
        "distance_to_merging_end" => {
            let end = scene
                .template
                .ramp_span()
                .map(|s| s[1])
                .unwrap_or(f64::INFINITY);
            Value::Num((end - v.along(lane.axis)).max(0.0))
        }
        "merged" => {
            let start = scene
                .template
                .ramp_span()
                .map(|s| s[0])
                .unwrap_or(f64::INFINITY);
            Value::Bool(lane.role == LaneRole::Main && v.along(lane.axis) >= start)
        }
        "near_intersection" => {
            let d = intersection_distance(scene, v);
            Value::Bool(d > 0.0 && d <= NEAR_INTERSECTION_RANGE)
        }
        "in_intersection" => {
            let ib = scene.template.intersection_box.expect("intersection scene");
            let along = v.along(lane.axis);
            Value::Bool((along - ib.center_along(lane.axis)).abs() <= ib.half)
        }
        "distance_to_intersection" => Value::Num(intersection_distance(scene, v)),
        other => unreachable!("query `{other}` missing an evaluator"),
    }
}

fn intersection_distance(scene: &Scene, v: &VehicleState) -> f64 {
    let lane = scene.template.lane(v.lane_index);
    let ib = scene.template.intersection_box.expect("intersection scene");
    let entry = ib.center_along(lane.axis) - ib.half;
    (entry - v.along(lane.axis)).max(0.0)
}

/// Longitudinal bumper gap to the closest same-lane leader.
fn headway(scene: &Scene, v: &VehicleState) -> f64 {
    let axis = scene.template.lane(v.lane_index).axis;
    let mine = v.along(axis);
    let mut best = f64::INFINITY;
    for other in &scene.vehicles {
        if other.id == v.id || other.lane_index != v.lane_index {
            continue;
        }
        let ahead = other.along(axis) - mine;
        if ahead > 0.0 {
            best = best.min(ahead - scene.params.vehicle_length);
        }
    }
    if best.is_finite() {
        best.max(0.0)
    } else {
        NO_LEADER_HEADWAY
    }
}

/// Adapter giving the DSL evaluator access to one vehicle's queries. Only
/// constructed around validated expressions, so lookups cannot miss.
pub struct SceneQueryHost<'a> {
    pub scene: &'a Scene,
    pub vehicle_id: u32,
}

impl QueryHost for SceneQueryHost<'_> {
    fn query(&self, name: &str) -> Value {
        query(self.scene, self.vehicle_id, name).expect("query validated at compile time")
    }
}
