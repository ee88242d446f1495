//! Scene templates: road graphs and spawn layouts for the three scene kinds.
//!
//! Built-in templates are compiled in from `assets/scenes.toml`; an external
//! file with the same schema can be loaded for experiments with different
//! geometry.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::SceneKind;

const BUILTIN_SCENES: &str = include_str!("../../assets/scenes.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneRole {
    Main,
    Ramp,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneDef {
    pub axis: Axis,
    /// Fixed cross-axis coordinate of the lane center.
    pub center: f64,
    /// Along-axis extent the lane exists for.
    pub span: [f64; 2],
    pub role: LaneRole,
}

impl LaneDef {
    pub fn covers(&self, along: f64) -> bool {
        along >= self.span[0] && along <= self.span[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnSlot {
    pub lane: u32,
    /// Along-axis position.
    pub pos: f64,
    pub speed: f64,
}

/// Intersection conflict box. `center_x`/`center_y` locate the box center;
/// `half` is its half-extent along either road axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionBox {
    pub center_x: f64,
    pub center_y: f64,
    pub half: f64,
}

impl IntersectionBox {
    /// Box center measured along the given travel axis.
    pub fn center_along(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.center_x,
            Axis::Y => self.center_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTemplate {
    pub lane_width: f64,
    /// Along-axis length used to normalize longitudinal progress.
    pub extent: f64,
    /// Half-range of the uniform spawn-position jitter.
    pub jitter: f64,
    pub lanes: Vec<LaneDef>,
    pub controlled: Vec<SpawnSlot>,
    pub background: Vec<SpawnSlot>,
    #[serde(rename = "box", default)]
    pub intersection_box: Option<IntersectionBox>,
}

impl SceneTemplate {
    /// Span of the ramp lane, if the template has one.
    pub fn ramp_span(&self) -> Option<[f64; 2]> {
        self.lanes
            .iter()
            .find(|l| l.role == LaneRole::Ramp)
            .map(|l| l.span)
    }

    /// Lane count sharing the given lane's axis (used for adjacency).
    pub fn lane(&self, index: u32) -> &LaneDef {
        &self.lanes[index as usize]
    }

    /// Adjacent lane index in the given direction (-1 = left, +1 = right),
    /// if one exists on the same axis and covers `along`.
    pub fn adjacent_lane(&self, index: u32, direction: i32, along: f64) -> Option<u32> {
        let target = index as i64 + direction as i64;
        if target < 0 || target as usize >= self.lanes.len() {
            return None;
        }
        let target = target as u32;
        let cur = self.lane(index);
        let cand = self.lane(target);
        if cand.axis == cur.axis && cand.covers(along) {
            Some(target)
        } else {
            None
        }
    }

    /// Nearest lane on `axis` to the cross-axis coordinate, by center
    /// distance; ties resolve to the lower index.
    pub fn nearest_lane(&self, axis: Axis, cross: f64) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.axis != axis {
                continue;
            }
            let d = (lane.center - cross).abs();
            if d < best_d {
                best_d = d;
                best = i as u32;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u32,
    pub highway: SceneTemplate,
    pub merge: SceneTemplate,
    pub intersection: SceneTemplate,
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn template(&self, kind: SceneKind) -> &SceneTemplate {
        match kind {
            SceneKind::Highway => &self.highway,
            SceneKind::Merge => &self.merge,
            SceneKind::Intersection => &self.intersection,
        }
    }
}

fn builtin_file() -> &'static SceneFile {
    static FILE: OnceLock<SceneFile> = OnceLock::new();
    FILE.get_or_init(|| SceneFile::parse(BUILTIN_SCENES).expect("built-in scenes.toml is valid"))
}

/// The compiled-in template for a scene kind.
pub fn builtin(kind: SceneKind) -> &'static SceneTemplate {
    builtin_file().template(kind)
}

/// Version of the compiled-in scene file.
pub fn builtin_version() -> u32 {
    builtin_file().version
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_parse_and_look_sane() {
        assert_eq!(builtin_version(), 1);
        for kind in [SceneKind::Highway, SceneKind::Merge, SceneKind::Intersection] {
            let t = builtin(kind);
            assert!(!t.lanes.is_empty());
            assert!(!t.controlled.is_empty());
            for slot in t.controlled.iter().chain(&t.background) {
                let lane = t.lane(slot.lane);
                assert!(lane.covers(slot.pos), "{kind:?} spawn off-lane");
            }
        }
    }

    #[test]
    fn merge_ramp_is_150_m() {
        let span = builtin(SceneKind::Merge).ramp_span().unwrap();
        assert_eq!(span[1] - span[0], 150.0);
    }

    #[test]
    fn adjacency_respects_axis_and_span() {
        let merge = builtin(SceneKind::Merge);
        // Ramp -> main lane 1 anywhere on the ramp.
        assert_eq!(merge.adjacent_lane(2, -1, 100.0), Some(1));
        // Main lane 1 -> ramp only along the ramp span.
        assert_eq!(merge.adjacent_lane(1, 1, 100.0), Some(2));
        assert_eq!(merge.adjacent_lane(1, 1, 300.0), None);
        assert_eq!(merge.adjacent_lane(0, -1, 100.0), None);

        let inter = builtin(SceneKind::Intersection);
        // Main and cross roads are on different axes: no lane changes.
        assert_eq!(inter.adjacent_lane(0, 1, 100.0), None);
        assert_eq!(inter.adjacent_lane(0, -1, 100.0), None);
    }

    #[test]
    fn nearest_lane_tie_breaks_low() {
        let merge = builtin(SceneKind::Merge);
        assert_eq!(merge.nearest_lane(Axis::X, 0.0), 0);
        assert_eq!(merge.nearest_lane(Axis::X, 2.0), 0); // tie between 0 and 1
        assert_eq!(merge.nearest_lane(Axis::X, 6.1), 2);
    }
}
