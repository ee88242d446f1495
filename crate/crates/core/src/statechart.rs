//! State-chart runtime: named abstract states with guard expressions,
//! evaluated against the simulator every step, recording a per-vehicle visit
//! history (one boolean per state per step). The history backs the four
//! query functions the primary/auxiliary rewards use, plus a run-length
//! summary of active-state sets for the post-training iterator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{self, DefectList, EvalCtx, Expr, Ty, ValidationCtx};
use crate::sim::query::{self, SceneQueryHost};
use crate::sim::{Scene, SceneKind};

/// Declarative chart: states in declaration order with guard sources, and an
/// optional priority order (highest first) used wherever a single active
/// symbol must be chosen. An empty priority list means declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateChartSpec {
    #[serde(default)]
    pub behavior_id: String,
    #[serde(default)]
    pub priority: Vec<String>,
    pub states: Vec<AbstractStateDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractStateDef {
    pub name: String,
    pub guard: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartDefect {
    #[error("chart has no states")]
    NoStates,
    #[error("state name must be non-empty")]
    EmptyStateName,
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("state `{state}`: {defects}")]
    Guard { state: String, defects: DefectList },
    #[error("priority entry `{0}` is not a chart state")]
    UnknownPriorityState(String),
    #[error("priority list must mention every state exactly once")]
    PriorityNotPermutation,
}

/// Compilation failure: every defect found, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid state chart: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ChartErrors(pub Vec<ChartDefect>);

#[derive(Debug, Clone)]
pub struct CompiledState {
    pub name: String,
    guard: Expr,
}

/// Validated, executable chart. Immutable and freely shareable.
#[derive(Debug, Clone)]
pub struct CompiledChart {
    pub behavior_id: String,
    pub kind: SceneKind,
    states: Vec<CompiledState>,
    /// State indices, highest priority first.
    priority: Vec<usize>,
}

impl CompiledChart {
    pub fn state_names(&self) -> Vec<String> {
        self.states.iter().map(|s| s.name.clone()).collect()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    /// State indices in priority order, highest first.
    pub fn priority_order(&self) -> &[usize] {
        &self.priority
    }

    /// Highest-priority member of an active set, if any.
    pub fn select_symbol(&self, active: &[bool]) -> Option<usize> {
        self.priority.iter().copied().find(|&i| active[i])
    }

    /// Evaluate every guard against the scene for one vehicle.
    pub fn evaluate_guards(&self, scene: &Scene, vehicle_id: u32) -> Vec<bool> {
        let host = SceneQueryHost { scene, vehicle_id };
        let ctx = EvalCtx { queries: &host, history: None, action: None };
        self.states
            .iter()
            .map(|s| dsl::eval(&s.guard, &ctx).boolean())
            .collect()
    }
}

/// Validate a chart against the query catalog of a scene kind. Reports every
/// defect: unknown queries, type errors, duplicate or empty names, bad
/// priority lists.
pub fn compile_statechart(
    spec: &StateChartSpec,
    kind: SceneKind,
) -> Result<CompiledChart, ChartErrors> {
    let mut defects = Vec::new();
    if spec.states.is_empty() {
        defects.push(ChartDefect::NoStates);
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &spec.states {
        if s.name.is_empty() {
            defects.push(ChartDefect::EmptyStateName);
        } else if !seen.insert(s.name.as_str()) {
            defects.push(ChartDefect::DuplicateState(s.name.clone()));
        }
    }

    let queries = query::catalog(kind);
    let ctx = ValidationCtx { queries: &queries, states: None, allow_action: false };
    let mut states = Vec::new();
    for s in &spec.states {
        match dsl::compile(&s.guard, &ctx, Ty::Bool) {
            Ok(guard) => states.push(CompiledState { name: s.name.clone(), guard }),
            Err(d) => defects.push(ChartDefect::Guard { state: s.name.clone(), defects: d }),
        }
    }

    let priority = if spec.priority.is_empty() {
        (0..spec.states.len()).collect()
    } else {
        let mut order = Vec::new();
        for name in &spec.priority {
            match spec.states.iter().position(|s| &s.name == name) {
                Some(i) => order.push(i),
                None => defects.push(ChartDefect::UnknownPriorityState(name.clone())),
            }
        }
        let unique: std::collections::BTreeSet<_> = order.iter().collect();
        if unique.len() != spec.states.len() && defects.is_empty() {
            defects.push(ChartDefect::PriorityNotPermutation);
        }
        order
    };

    if !defects.is_empty() {
        return Err(ChartErrors(defects));
    }
    Ok(CompiledChart {
        behavior_id: spec.behavior_id.clone(),
        kind,
        states,
        priority,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown state `{0}`")]
pub struct UnknownState(pub String);

/// Per-vehicle visit record: one boolean sequence per chart state, all the
/// same length (the number of ticks so far). Append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateHistory {
    names: Vec<String>,
    seqs: Vec<Vec<bool>>,
}

impl StateHistory {
    pub fn new(chart: &CompiledChart) -> Self {
        StateHistory {
            names: chart.state_names(),
            seqs: vec![Vec::new(); chart.state_count()],
        }
    }

    /// Steps recorded so far.
    pub fn len(&self) -> usize {
        self.seqs.first().map(|s| s.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_names(&self) -> &[String] {
        &self.names
    }

    fn index(&self, state: &str) -> Result<usize, UnknownState> {
        self.names
            .iter()
            .position(|n| n == state)
            .ok_or_else(|| UnknownState(state.to_string()))
    }

    /// Evaluate every guard once against the scene and append one boolean
    /// per state. No other mutation.
    pub fn tick(&mut self, chart: &CompiledChart, scene: &Scene, vehicle_id: u32) {
        let values = chart.evaluate_guards(scene, vehicle_id);
        for (seq, value) in self.seqs.iter_mut().zip(values) {
            seq.push(value);
        }
    }

    /// Append a pre-computed active row (used by replays and tests).
    pub fn push_row(&mut self, row: &[bool]) {
        assert_eq!(row.len(), self.seqs.len());
        for (seq, &value) in self.seqs.iter_mut().zip(row) {
            seq.push(value);
        }
    }

    /// Whether the vehicle is in `state` now (last tick); false before any
    /// tick so downstream reward evaluation stays total.
    pub fn read_state(&self, state: &str) -> Result<bool, UnknownState> {
        let i = self.index(state)?;
        Ok(self.seqs[i].last().copied().unwrap_or(false))
    }

    /// Whether `state` has ever been visited.
    pub fn read_visited_state(&self, state: &str) -> Result<bool, UnknownState> {
        let i = self.index(state)?;
        Ok(self.seqs[i].iter().any(|&b| b))
    }

    /// Total number of steps spent in `state`, consecutive or not.
    pub fn count_total_state_visit(&self, state: &str) -> Result<u32, UnknownState> {
        let i = self.index(state)?;
        Ok(self.seqs[i].iter().filter(|&&b| b).count() as u32)
    }

    /// Number of maximal runs of consecutive visits to `state`.
    pub fn count_state_visit_cycle(&self, state: &str) -> Result<u32, UnknownState> {
        let i = self.index(state)?;
        let mut cycles = 0;
        let mut prev = false;
        for &b in &self.seqs[i] {
            if b && !prev {
                cycles += 1;
            }
            prev = b;
        }
        Ok(cycles)
    }

    /// The current active set as a per-state boolean row; all-false before
    /// the first tick.
    pub fn active_row(&self) -> Vec<bool> {
        self.seqs
            .iter()
            .map(|s| s.last().copied().unwrap_or(false))
            .collect()
    }

    /// The active row at step `t`.
    pub fn row_at(&self, t: usize) -> Vec<bool> {
        self.seqs.iter().map(|s| s[t]).collect()
    }

    /// Run-length encoding of the per-step active-state sets, preserving
    /// order. Lossless: expanding the runs reproduces the history exactly.
    pub fn summarize(&self) -> Vec<RleRun> {
        let mut runs: Vec<RleRun> = Vec::new();
        for t in 0..self.len() {
            let active: Vec<String> = self
                .names
                .iter()
                .zip(self.row_at(t))
                .filter(|(_, b)| *b)
                .map(|(n, _)| n.clone())
                .collect();
            match runs.last_mut() {
                Some(run) if run.states == active => run.len += 1,
                _ => runs.push(RleRun { states: active, len: 1 }),
            }
        }
        runs
    }
}

/// One run of identical active-state sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleRun {
    pub states: Vec<String>,
    pub len: u32,
}

/// Expand a run-length summary back to per-step active-state sets.
pub fn expand_summary(runs: &[RleRun]) -> Vec<Vec<String>> {
    let mut steps = Vec::new();
    for run in runs {
        for _ in 0..run.len {
            steps.push(run.states.clone());
        }
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::create_scene;

    fn late_merge_spec() -> StateChartSpec {
        StateChartSpec {
            behavior_id: "late_merge".into(),
            priority: vec![
                "merged_to_highway".into(),
                "close_to_end_of_acceleration_area".into(),
                "at_acceleration_area".into(),
            ],
            states: vec![
                AbstractStateDef {
                    name: "at_acceleration_area".into(),
                    guard: "on_ramp()".into(),
                },
                AbstractStateDef {
                    name: "close_to_end_of_acceleration_area".into(),
                    guard: "on_ramp() and distance_to_merging_end() <= 30".into(),
                },
                AbstractStateDef {
                    name: "merged_to_highway".into(),
                    guard: "merged()".into(),
                },
            ],
        }
    }

    fn history_of(seq: &[bool]) -> StateHistory {
        let mut h = StateHistory { names: vec!["q".into()], seqs: vec![Vec::new()] };
        for &b in seq {
            h.push_row(&[b]);
        }
        h
    }

    #[test]
    fn late_merge_chart_compiles() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        assert_eq!(chart.state_count(), 3);
        assert_eq!(chart.priority_order(), &[2, 1, 0]);
    }

    #[test]
    fn ramp_guard_on_highway_scene_is_rejected_with_state_name() {
        let err = compile_statechart(&late_merge_spec(), SceneKind::Highway).unwrap_err();
        assert!(err.0.iter().any(|d| matches!(
            d,
            ChartDefect::Guard { state, .. } if state == "at_acceleration_area"
        )));
        // Every defective guard is reported, not just the first.
        assert_eq!(err.0.len(), 3, "{err}");
    }

    #[test]
    fn duplicate_state_names_rejected() {
        let mut spec = late_merge_spec();
        spec.states[1].name = "merged_to_highway".into();
        spec.priority.clear();
        let err = compile_statechart(&spec, SceneKind::Merge).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|d| matches!(d, ChartDefect::DuplicateState(n) if n == "merged_to_highway")));
    }

    #[test]
    fn bad_priority_rejected() {
        let mut spec = late_merge_spec();
        spec.priority = vec!["merged_to_highway".into(), "nope".into()];
        let err = compile_statechart(&spec, SceneKind::Merge).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|d| matches!(d, ChartDefect::UnknownPriorityState(n) if n == "nope")));
    }

    #[test]
    fn tick_near_ramp_end_activates_expected_states() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let mut scene = create_scene(SceneKind::Merge, 7, 1, 0).unwrap();
        scene.vehicles[0].x = 210.0; // 20 m before the 230 m terminus
        let mut h = StateHistory::new(&chart);
        h.tick(&chart, &scene, 0);
        assert_eq!(h.read_state("at_acceleration_area"), Ok(true));
        assert_eq!(h.read_state("close_to_end_of_acceleration_area"), Ok(true));
        assert_eq!(h.read_state("merged_to_highway"), Ok(false));
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn first_tick_gives_length_one_everywhere() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let scene = create_scene(SceneKind::Merge, 7, 2, 0).unwrap();
        let mut h = StateHistory::new(&chart);
        assert!(h.is_empty());
        h.tick(&chart, &scene, 0);
        for name in h.state_names().to_vec() {
            assert_eq!(h.count_total_state_visit(&name).unwrap() <= 1, true);
        }
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn main_lane_vehicle_never_enters_acceleration_area() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let mut scene = create_scene(SceneKind::Merge, 7, 2, 0).unwrap();
        let mut h = StateHistory::new(&chart);
        let joint: std::collections::BTreeMap<u32, crate::sim::Action> =
            [(0, crate::sim::Action::Idle), (1, crate::sim::Action::Idle)].into();
        for _ in 0..40 {
            let (next, _) = crate::sim::step(&scene, &joint).unwrap();
            scene = next;
            h.tick(&chart, &scene, 1);
        }
        assert_eq!(h.read_visited_state("at_acceleration_area"), Ok(false));
    }

    #[test]
    fn guard_evaluation_is_pure() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let scene = create_scene(SceneKind::Merge, 7, 1, 0).unwrap();
        let copy = scene.clone();
        assert_eq!(chart.evaluate_guards(&scene, 0), chart.evaluate_guards(&copy, 0));
    }

    #[test]
    fn visit_counters_match_run_length_oracle() {
        // [T,T,F,T]: 3 total visits in 2 runs; currently active.
        let h = history_of(&[true, true, false, true]);
        assert_eq!(h.count_total_state_visit("q"), Ok(3));
        assert_eq!(h.count_state_visit_cycle("q"), Ok(2));
        assert_eq!(h.read_visited_state("q"), Ok(true));
        assert_eq!(h.read_state("q"), Ok(true));

        // [F,T,T,T]: one run, currently active.
        let h = history_of(&[false, true, true, true]);
        assert_eq!(h.count_state_visit_cycle("q"), Ok(1));
        assert_eq!(h.read_state("q"), Ok(true));

        let h = history_of(&[false, false, false]);
        assert_eq!(h.count_total_state_visit("q"), Ok(0));
        assert_eq!(h.count_state_visit_cycle("q"), Ok(0));
        assert_eq!(h.read_visited_state("q"), Ok(false));
    }

    #[test]
    fn counters_error_on_unknown_state() {
        let h = history_of(&[true]);
        assert!(h.read_state("zzz").is_err());
        assert!(h.count_total_state_visit("zzz").is_err());
    }

    #[test]
    fn cycle_count_matches_brute_force_on_random_sequences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(0..30);
            let seq: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            let h = history_of(&seq);
            // Brute force: count starts of maximal true-runs.
            let mut expected = 0;
            for i in 0..seq.len() {
                if seq[i] && (i == 0 || !seq[i - 1]) {
                    expected += 1;
                }
            }
            assert_eq!(h.count_state_visit_cycle("q"), Ok(expected));
            assert!(
                h.count_total_state_visit("q").unwrap() >= h.count_state_visit_cycle("q").unwrap()
            );
        }
    }

    #[test]
    fn summarize_is_rle_of_active_sets() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let mut h = StateHistory::new(&chart);
        // 10 steps {ramp}, 5 steps {ramp, close}, 85 steps {merged}.
        for _ in 0..10 {
            h.push_row(&[true, false, false]);
        }
        for _ in 0..5 {
            h.push_row(&[true, true, false]);
        }
        for _ in 0..85 {
            h.push_row(&[false, false, true]);
        }
        let runs = h.summarize();
        assert_eq!(runs.len(), 3);
        assert_eq!(runs[0].len, 10);
        assert_eq!(runs[1].len, 5);
        assert_eq!(runs[2].len, 85);
        assert_eq!(runs[1].states.len(), 2);
        assert_eq!(runs.iter().map(|r| r.len).sum::<u32>() as usize, h.len());
    }

    #[test]
    fn summarize_empty_history_is_empty() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let h = StateHistory::new(&chart);
        assert!(h.summarize().is_empty());
    }

    #[test]
    fn alternating_sets_give_unit_runs() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let mut h = StateHistory::new(&chart);
        for i in 0..6 {
            if i % 2 == 0 {
                h.push_row(&[true, false, false]);
            } else {
                h.push_row(&[false, true, false]);
            }
        }
        let runs = h.summarize();
        assert_eq!(runs.len(), 6);
        assert!(runs.iter().all(|r| r.len == 1));
    }

    #[test]
    fn summarize_round_trips_losslessly_on_random_histories() {
        use rand::{Rng, SeedableRng};
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let mut h = StateHistory::new(&chart);
            let n = rng.random_range(0..40);
            let mut raw = Vec::new();
            for _ in 0..n {
                let row: Vec<bool> = (0..3).map(|_| rng.random()).collect();
                h.push_row(&row);
                raw.push(row);
            }
            let expanded = expand_summary(&h.summarize());
            assert_eq!(expanded.len(), raw.len());
            for (sets, row) in expanded.iter().zip(&raw) {
                let from_row: Vec<String> = h
                    .state_names()
                    .iter()
                    .zip(row)
                    .filter(|(_, b)| **b)
                    .map(|(n, _)| n.clone())
                    .collect();
                assert_eq!(*sets, from_row);
            }
        }
    }

    #[test]
    fn select_symbol_uses_priority_order() {
        let chart = compile_statechart(&late_merge_spec(), SceneKind::Merge).unwrap();
        // Both ramp states active: the closer-to-end state wins.
        assert_eq!(chart.select_symbol(&[true, true, false]), Some(1));
        assert_eq!(chart.select_symbol(&[true, false, false]), Some(0));
        assert_eq!(chart.select_symbol(&[false, false, true]), Some(2));
        assert_eq!(chart.select_symbol(&[false, false, false]), None);
    }
}
