//! Observation vectors for the learning policies: an ego block with
//! scene-specific scalars plus the four nearest neighbors, everything scaled
//! to roughly [-1, 1]. Missing neighbors are zero-padded with presence 0.

use crate::dsl::Value;

use super::query::{self, NEAR_INTERSECTION_RANGE};
use super::{Scene, SceneKind, SPEED_MAX};

pub const NEIGHBOR_COUNT: usize = 4;
const NEIGHBOR_BLOCK: usize = 5; // dx, dy, dspeed, same_lane, presence
const EGO_BASE: usize = 5; // along, cross, speed, heading, lane

fn kind_scalars(kind: SceneKind) -> usize {
    match kind {
        SceneKind::Highway => 0,
        SceneKind::Merge => 2,        // on_ramp, distance_to_merging_end
        SceneKind::Intersection => 3, // near, inside, distance
    }
}

/// Observation length for a scene kind; fixed for every vehicle and step.
pub fn obs_len(kind: SceneKind) -> usize {
    EGO_BASE + kind_scalars(kind) + NEIGHBOR_COUNT * NEIGHBOR_BLOCK
}

/// Build the observation for one vehicle.
pub fn observation(scene: &Scene, vehicle_id: u32) -> Vec<f64> {
    let v = scene
        .vehicles
        .iter()
        .find(|v| v.id == vehicle_id)
        .expect("vehicle exists");
    let template = &*scene.template;
    let axis = template.lane(v.lane_index).axis;
    let half_extent = template.extent / 2.0;
    let n_lanes = template.lanes.len().max(2) as f64;

    let mut obs = Vec::with_capacity(obs_len(scene.kind));
    obs.push(((v.along(axis) - half_extent) / half_extent).clamp(-1.0, 1.5));
    obs.push((v.cross(axis) / 10.0).clamp(-1.5, 1.5));
    obs.push(v.speed / SPEED_MAX * 2.0 - 1.0);
    obs.push((v.heading / std::f64::consts::FRAC_PI_2).clamp(-1.5, 1.5));
    obs.push(v.lane_index as f64 / (n_lanes - 1.0) * 2.0 - 1.0);

    match scene.kind {
        SceneKind::Highway => {}
        SceneKind::Merge => {
            let on_ramp = matches!(
                query::query(scene, vehicle_id, "on_ramp"),
                Ok(Value::Bool(true))
            );
            let dist = query::query(scene, vehicle_id, "distance_to_merging_end")
                .map(|v| v.num())
                .unwrap_or(0.0);
            obs.push(if on_ramp { 1.0 } else { -1.0 });
            obs.push((dist.min(150.0) / 75.0) - 1.0);
        }
        SceneKind::Intersection => {
            let near = matches!(
                query::query(scene, vehicle_id, "near_intersection"),
                Ok(Value::Bool(true))
            );
            let inside = matches!(
                query::query(scene, vehicle_id, "in_intersection"),
                Ok(Value::Bool(true))
            );
            let dist = query::query(scene, vehicle_id, "distance_to_intersection")
                .map(|v| v.num())
                .unwrap_or(0.0);
            obs.push(if near { 1.0 } else { -1.0 });
            obs.push(if inside { 1.0 } else { -1.0 });
            obs.push((dist.min(2.0 * NEAR_INTERSECTION_RANGE) / NEAR_INTERSECTION_RANGE) - 1.0);
        }
    }

    // Nearest neighbors by Euclidean distance, closest first; ties broken by
    // id for determinism.
    let mut others: Vec<_> = scene
        .vehicles
        .iter()
        .filter(|o| o.id != vehicle_id)
        .map(|o| {
            let d2 = (o.x - v.x).powi(2) + (o.y - v.y).powi(2);
            (d2, o)
        })
        .collect();
    others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.id.cmp(&b.1.id)));

    for slot in 0..NEIGHBOR_COUNT {
        match others.get(slot) {
            Some((_, o)) => {
                obs.push(((o.x - v.x) / 50.0).clamp(-1.0, 1.0));
                obs.push(((o.y - v.y) / 10.0).clamp(-1.0, 1.0));
                obs.push((o.speed - v.speed) / SPEED_MAX);
                obs.push(if o.lane_index == v.lane_index { 1.0 } else { 0.0 });
                obs.push(1.0);
            }
            None => obs.extend_from_slice(&[0.0; NEIGHBOR_BLOCK]),
        }
    }

    debug_assert_eq!(obs.len(), obs_len(scene.kind));
    obs
}
