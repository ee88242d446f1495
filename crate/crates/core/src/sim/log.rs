//! Trajectory logs: one row per vehicle per executed step, with the reward
//! breakdown and active abstract states attached by the rollout hook.
//!
//! The CSV layout is the on-disk contract between training, evaluation, and
//! rendering:
//!
//! ```text
//! # drivegen trajectory v1
//! # scene=merge seed=7 behavior=late_merge vehicles=4 steps=100 terminated_early=false
//! step,vehicle_id,controlled,x,y,heading,speed,lane_index,crashed,action,active_states,reward_primary,reward_aux_total,reward_shared,reward_components
//! ```
//!
//! `active_states` is `|`-joined; `reward_components` is `name=value`
//! pairs joined by `;`. Background vehicles leave the action and reward
//! columns empty.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, Scene, SceneKind};

pub const LOG_FORMAT_VERSION: u32 = 1;

/// Reward and abstract-state data attached to one vehicle's step by the
/// rollout hook.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepAnnotation {
    pub active_states: Vec<String>,
    pub reward_primary: f64,
    pub reward_aux_total: f64,
    pub reward_shared: f64,
    pub reward_components: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u32,
    pub vehicle_id: u32,
    pub controlled: bool,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub lane_index: u32,
    pub crashed: bool,
    pub action: Option<Action>,
    pub annotation: Option<StepAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub scene_kind: SceneKind,
    pub seed: u64,
    pub behavior_id: Option<String>,
    pub vehicle_count: u32,
    pub steps: u32,
    pub terminated_early: bool,
    pub rows: Vec<LogRow>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trajectory file: {0}")]
    Malformed(String),
}

impl TrajectoryLog {
    pub fn new(initial: &Scene, behavior_id: Option<&str>) -> Self {
        TrajectoryLog {
            scene_kind: initial.kind,
            seed: initial.rng_seed,
            behavior_id: behavior_id.map(|s| s.to_string()),
            vehicle_count: initial.vehicles.len() as u32,
            steps: 0,
            terminated_early: false,
            rows: Vec::new(),
        }
    }

    /// Append one row per vehicle for the post-step state `after`.
    pub fn push_step(
        &mut self,
        t: u32,
        after: &Scene,
        joint: &BTreeMap<u32, Action>,
        annotations: &BTreeMap<u32, StepAnnotation>,
    ) {
        for v in &after.vehicles {
            self.rows.push(LogRow {
                step: t,
                vehicle_id: v.id,
                controlled: v.controlled,
                x: v.x,
                y: v.y,
                heading: v.heading,
                speed: v.speed,
                lane_index: v.lane_index,
                crashed: v.crashed,
                action: joint.get(&v.id).copied(),
                annotation: annotations.get(&v.id).cloned(),
            });
        }
    }

    /// Rows belonging to one vehicle, in step order.
    pub fn vehicle_rows(&self, vehicle_id: u32) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.vehicle_id == vehicle_id)
    }

    pub fn controlled_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .rows
            .iter()
            .filter(|r| r.controlled)
            .map(|r| r.vehicle_id)
            .collect();
        ids.dedup();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn any_crash(&self) -> bool {
        self.rows.iter().any(|r| r.crashed)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        writeln!(out, "# drivegen trajectory v{LOG_FORMAT_VERSION}")?;
        writeln!(
            out,
            "# scene={} seed={} behavior={} vehicles={} steps={} terminated_early={}",
            self.scene_kind,
            self.seed,
            self.behavior_id.as_deref().unwrap_or("-"),
            self.vehicle_count,
            self.steps,
            self.terminated_early
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "vehicle_id",
            "controlled",
            "x",
            "y",
            "heading",
            "speed",
            "lane_index",
            "crashed",
            "action",
            "active_states",
            "reward_primary",
            "reward_aux_total",
            "reward_shared",
            "reward_components",
        ])?;
        for r in &self.rows {
            let (states, prim, aux, shared, comps) = match &r.annotation {
                Some(a) => (
                    a.active_states.join("|"),
                    a.reward_primary.to_string(),
                    a.reward_aux_total.to_string(),
                    a.reward_shared.to_string(),
                    a.reward_components
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(";"),
                ),
                None => Default::default(),
            };
            w.write_record([
                r.step.to_string(),
                r.vehicle_id.to_string(),
                (r.controlled as u8).to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.heading.to_string(),
                r.speed.to_string(),
                r.lane_index.to_string(),
                (r.crashed as u8).to_string(),
                r.action.map(|a| a.name().to_string()).unwrap_or_default(),
                states,
                prim,
                aux,
                shared,
                comps,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self, LogError> {
        let mut header1 = String::new();
        input.read_line(&mut header1)?;
        if !header1.starts_with("# drivegen trajectory") {
            return Err(LogError::Malformed("missing format header".into()));
        }
        let mut meta_line = String::new();
        input.read_line(&mut meta_line)?;
        let meta = parse_meta(meta_line.trim_start_matches('#').trim())?;

        let mut log = TrajectoryLog {
            scene_kind: meta.scene,
            seed: meta.seed,
            behavior_id: meta.behavior,
            vehicle_count: meta.vehicles,
            steps: meta.steps,
            terminated_early: meta.terminated_early,
            rows: Vec::new(),
        };

        let mut reader = csv::Reader::from_reader(input);
        for record in reader.records() {
            let r = record?;
            let field = |i: usize| -> &str { r.get(i).unwrap_or("") };
            let num = |i: usize| -> Result<f64, LogError> {
                field(i)
                    .parse()
                    .map_err(|_| LogError::Malformed(format!("bad number `{}`", field(i))))
            };
            let annotation = if field(13).is_empty() && field(11).is_empty() {
                None
            } else {
                let mut comps = BTreeMap::new();
                for pair in field(14).split(';').filter(|p| !p.is_empty()) {
                    let (k, v) = pair
                        .split_once('=')
                        .ok_or_else(|| LogError::Malformed(format!("bad component `{pair}`")))?;
                    comps.insert(
                        k.to_string(),
                        v.parse()
                            .map_err(|_| LogError::Malformed(format!("bad component `{pair}`")))?,
                    );
                }
                Some(StepAnnotation {
                    active_states: field(10)
                        .split('|')
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                    reward_primary: num(11)?,
                    reward_aux_total: num(12)?,
                    reward_shared: num(13)?,
                    reward_components: comps,
                })
            };
            log.rows.push(LogRow {
                step: field(0)
                    .parse()
                    .map_err(|_| LogError::Malformed("bad step".into()))?,
                vehicle_id: field(1)
                    .parse()
                    .map_err(|_| LogError::Malformed("bad vehicle_id".into()))?,
                controlled: field(2) == "1",
                x: num(3)?,
                y: num(4)?,
                heading: num(5)?,
                speed: num(6)?,
                lane_index: field(7)
                    .parse()
                    .map_err(|_| LogError::Malformed("bad lane_index".into()))?,
                crashed: field(8) == "1",
                action: if field(9).is_empty() {
                    None
                } else {
                    Some(
                        Action::from_str(field(9))
                            .map_err(LogError::Malformed)?,
                    )
                },
                annotation,
            });
        }
        Ok(log)
    }
}

struct Meta {
    scene: SceneKind,
    seed: u64,
    behavior: Option<String>,
    vehicles: u32,
    steps: u32,
    terminated_early: bool,
}

fn parse_meta(line: &str) -> Result<Meta, LogError> {
    let mut map = BTreeMap::new();
    for pair in line.split_whitespace() {
        if let Some((k, v)) = pair.split_once('=') {
            map.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&String, LogError> {
        map.get(k)
            .ok_or_else(|| LogError::Malformed(format!("missing meta field `{k}`")))
    };
    Ok(Meta {
        scene: get("scene")?
            .parse()
            .map_err(LogError::Malformed)?,
        seed: get("seed")?
            .parse()
            .map_err(|_| LogError::Malformed("bad seed".into()))?,
        behavior: match get("behavior")?.as_str() {
            "-" => None,
            b => Some(b.to_string()),
        },
        vehicles: get("vehicles")?
            .parse()
            .map_err(|_| LogError::Malformed("bad vehicles".into()))?,
        steps: get("steps")?
            .parse()
            .map_err(|_| LogError::Malformed("bad steps".into()))?,
        terminated_early: get("terminated_early")?.as_str() == "true",
    })
}
