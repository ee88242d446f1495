//! Primary and auxiliary rewards.
//!
//! The primary reward is a deterministic FSM over abstract-state symbols:
//! each step consumes the single highest-priority active state (chart
//! priority order) and pays 5 whenever the machine sits in an accepting
//! state. Unspecified (state, symbol) pairs self-loop, so the transition
//! function is total; an empty active set also self-loops.
//!
//! The auxiliary reward sums named components whose conditions hold,
//! always clamped to [-1, 1] after adding the collision penalty. Nearby
//! controlled vehicles then share rewards by mixing each vehicle's reward
//! with the mean of its neighbors'.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{self, DefectList, EvalCtx, Expr, HistoryHost, Ty, ValidationCtx, Value};
use crate::sim::query::{self, SceneQueryHost};
use crate::sim::{Action, Scene, SceneKind};
use crate::statechart::{CompiledChart, StateHistory};

pub const PRIMARY_REWARD: f64 = 5.0;
pub const DEFAULT_COLLISION_PENALTY: f64 = -0.7;

// ---------------------------------------------------------------------------
// Primary FSM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardFsmSpec {
    pub states: Vec<String>,
    pub initial: String,
    pub accepting: Vec<String>,
    #[serde(default)]
    pub transitions: Vec<TransitionDef>,
}

/// One explicit transition; everything unspecified self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDef {
    pub from: String,
    /// Abstract-state symbol from the paired chart.
    pub on: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FsmDefect {
    #[error("FSM has no states")]
    NoStates,
    #[error("duplicate FSM state `{0}`")]
    DuplicateState(String),
    #[error("initial state `{0}` is not an FSM state")]
    UnknownInitial(String),
    #[error("accepting set must be non-empty")]
    EmptyAccepting,
    #[error("accepting state `{0}` is not an FSM state")]
    UnknownAccepting(String),
    #[error("transition references unknown FSM state `{0}`")]
    UnknownTransitionState(String),
    #[error("transition symbol `{0}` is not a chart state")]
    UnknownSymbol(String),
    #[error("duplicate transition from `{from}` on `{on}`")]
    DuplicateTransition { from: String, on: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid reward FSM: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct FsmErrors(pub Vec<FsmDefect>);

/// Validated FSM with a dense total transition table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledFsm {
    states: Vec<String>,
    initial: usize,
    accepting: Vec<bool>,
    /// delta[state][symbol]; identity where unspecified.
    delta: Vec<Vec<usize>>,
    symbols: Vec<String>,
}

impl CompiledFsm {
    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    pub fn state_name(&self, state: usize) -> &str {
        &self.states[state]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Apply the transition table once for an already-selected symbol.
    pub fn apply(&self, current: usize, symbol: Option<usize>) -> usize {
        match symbol {
            Some(s) => self.delta[current][s],
            None => current,
        }
    }

    /// Graphviz rendering of the machine, for the CLI dump.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph fsm {\n  rankdir=LR;\n");
        for (i, name) in self.states.iter().enumerate() {
            let shape = if self.accepting[i] { "doublecircle" } else { "circle" };
            out.push_str(&format!("  \"{name}\" [shape={shape}];\n"));
        }
        out.push_str(&format!("  __start [shape=point];\n  __start -> \"{}\";\n", self.states[self.initial]));
        for (from, row) in self.delta.iter().enumerate() {
            for (sym, &to) in row.iter().enumerate() {
                if to != from {
                    out.push_str(&format!(
                        "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                        self.states[from], self.states[to], self.symbols[sym]
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Validate an FSM spec against its paired chart (the input alphabet is the
/// chart's state set). Reports every defect.
pub fn compile_fsm(spec: &RewardFsmSpec, chart: &CompiledChart) -> Result<CompiledFsm, FsmErrors> {
    let mut defects = Vec::new();
    if spec.states.is_empty() {
        defects.push(FsmDefect::NoStates);
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &spec.states {
        if !seen.insert(s.as_str()) {
            defects.push(FsmDefect::DuplicateState(s.clone()));
        }
    }
    let state_index =
        |name: &str| -> Option<usize> { spec.states.iter().position(|s| s == name) };

    let initial = match state_index(&spec.initial) {
        Some(i) => i,
        None => {
            defects.push(FsmDefect::UnknownInitial(spec.initial.clone()));
            0
        }
    };
    if spec.accepting.is_empty() {
        defects.push(FsmDefect::EmptyAccepting);
    }
    let mut accepting = vec![false; spec.states.len()];
    for a in &spec.accepting {
        match state_index(a) {
            Some(i) => accepting[i] = true,
            None => defects.push(FsmDefect::UnknownAccepting(a.clone())),
        }
    }

    let symbols = chart.state_names();
    let mut delta: Vec<Vec<usize>> = (0..spec.states.len())
        .map(|s| vec![s; symbols.len()])
        .collect();
    let mut specified = std::collections::BTreeSet::new();
    for t in &spec.transitions {
        let from = state_index(&t.from);
        let to = state_index(&t.to);
        if from.is_none() {
            defects.push(FsmDefect::UnknownTransitionState(t.from.clone()));
        }
        if to.is_none() {
            defects.push(FsmDefect::UnknownTransitionState(t.to.clone()));
        }
        let sym = symbols.iter().position(|s| s == &t.on);
        if sym.is_none() {
            defects.push(FsmDefect::UnknownSymbol(t.on.clone()));
        }
        if let (Some(from), Some(to), Some(sym)) = (from, to, sym) {
            if !specified.insert((from, sym)) {
                defects.push(FsmDefect::DuplicateTransition {
                    from: t.from.clone(),
                    on: t.on.clone(),
                });
            } else {
                delta[from][sym] = to;
            }
        }
    }

    if !defects.is_empty() {
        return Err(FsmErrors(defects));
    }
    Ok(CompiledFsm {
        states: spec.states.clone(),
        initial,
        accepting,
        delta,
        symbols,
    })
}

/// Consume one step's active-state set: the chart's priority order picks the
/// single symbol, an empty set self-loops.
pub fn fsm_step(
    fsm: &CompiledFsm,
    chart: &CompiledChart,
    current: usize,
    active: &[bool],
) -> usize {
    fsm.apply(current, chart.select_symbol(active))
}

/// 5 in accepting states, 0 elsewhere; paid every step spent accepting.
pub fn primary_reward(fsm: &CompiledFsm, state: usize) -> f64 {
    if fsm.is_accepting(state) {
        PRIMARY_REWARD
    } else {
        0.0
    }
}

/// Replay a per-step active-set history from the initial state; true when
/// the machine accepts at any step (the behavior emerged during the
/// episode).
pub fn fsm_ever_accepts(
    fsm: &CompiledFsm,
    chart: &CompiledChart,
    rows: impl Iterator<Item = Vec<bool>>,
) -> bool {
    let mut state = fsm.initial_state();
    for row in rows {
        state = fsm_step(fsm, chart, state, &row);
        if fsm.is_accepting(state) {
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Auxiliary reward
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxRewardSpec {
    #[serde(default = "default_collision_penalty")]
    pub collision_penalty: f64,
    pub components: Vec<AuxComponent>,
}

fn default_collision_penalty() -> f64 {
    DEFAULT_COLLISION_PENALTY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxComponent {
    pub name: String,
    /// Boolean DSL condition over queries, history predicates, and action().
    pub condition: String,
    /// Contribution while the condition holds.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuxDefect {
    #[error("duplicate component name `{0}`")]
    DuplicateComponent(String),
    #[error("component name `collision` is reserved for the collision penalty")]
    ReservedName,
    #[error("component `{name}`: {defects}")]
    Condition { name: String, defects: DefectList },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid auxiliary reward: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct AuxErrors(pub Vec<AuxDefect>);

#[derive(Debug, Clone)]
struct CompiledComponent {
    name: String,
    condition: Expr,
    value: f64,
}

/// Validated auxiliary reward, bound to a chart's state set and scene kind.
#[derive(Debug, Clone)]
pub struct CompiledAux {
    collision_penalty: f64,
    components: Vec<CompiledComponent>,
}

impl CompiledAux {
    pub fn collision_penalty(&self) -> f64 {
        self.collision_penalty
    }

    pub fn component_names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name.as_str()).collect()
    }
}

/// Validate an auxiliary spec against the scene kind's query catalog and the
/// chart's state names (for history predicates).
pub fn compile_aux(
    spec: &AuxRewardSpec,
    chart: &CompiledChart,
    kind: SceneKind,
) -> Result<CompiledAux, AuxErrors> {
    let mut defects = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for c in &spec.components {
        if c.name == "collision" {
            defects.push(AuxDefect::ReservedName);
        } else if !seen.insert(c.name.as_str()) {
            defects.push(AuxDefect::DuplicateComponent(c.name.clone()));
        }
    }

    let queries = query::catalog(kind);
    let states = chart.state_names();
    let ctx = ValidationCtx {
        queries: &queries,
        states: Some(&states),
        allow_action: true,
    };
    let mut components = Vec::new();
    for c in &spec.components {
        match dsl::compile(&c.condition, &ctx, Ty::Bool) {
            Ok(condition) => components.push(CompiledComponent {
                name: c.name.clone(),
                condition,
                value: c.value,
            }),
            Err(d) => defects.push(AuxDefect::Condition { name: c.name.clone(), defects: d }),
        }
    }

    if !defects.is_empty() {
        return Err(AuxErrors(defects));
    }
    Ok(CompiledAux {
        collision_penalty: spec.collision_penalty,
        components,
    })
}

/// Full per-step reward record for one vehicle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Clamped auxiliary total (components plus collision penalty).
    pub total: f64,
    /// Every component by name, zero when inactive, plus `collision`.
    pub components: BTreeMap<String, f64>,
    /// Primary FSM reward, 0 or 5; filled by the reward stack.
    pub primary: f64,
    /// Reward after neighbor sharing; filled by the reward stack.
    pub shared_total: f64,
}

struct HistoryPredicates<'a> {
    history: &'a StateHistory,
}

impl HistoryHost for HistoryPredicates<'_> {
    fn predicate(&self, name: &str, state: &str) -> Value {
        match name {
            "in_state" => Value::Bool(self.history.read_state(state).unwrap_or(false)),
            "visited" => Value::Bool(self.history.read_visited_state(state).unwrap_or(false)),
            "visits" => {
                Value::Num(self.history.count_total_state_visit(state).unwrap_or(0) as f64)
            }
            "cycles" => {
                Value::Num(self.history.count_state_visit_cycle(state).unwrap_or(0) as f64)
            }
            other => unreachable!("predicate `{other}` missing an evaluator"),
        }
    }
}

/// Evaluate the auxiliary reward for one vehicle at the current step. Pure;
/// the total is clamped to [-1, 1] after summing active components and the
/// collision penalty.
pub fn eval_aux(
    aux: &CompiledAux,
    scene: &Scene,
    vehicle_id: u32,
    action: Action,
    history: &StateHistory,
) -> RewardBreakdown {
    let host = SceneQueryHost { scene, vehicle_id };
    let preds = HistoryPredicates { history };
    let ctx = EvalCtx {
        queries: &host,
        history: Some(&preds),
        action: Some(action.index() as f64),
    };

    let mut components = BTreeMap::new();
    let mut sum = 0.0;
    for c in &aux.components {
        let contribution = if dsl::eval(&c.condition, &ctx).boolean() {
            c.value
        } else {
            0.0
        };
        sum += contribution;
        components.insert(c.name.clone(), contribution);
    }

    let colliding = scene
        .vehicles
        .iter()
        .find(|v| v.id == vehicle_id)
        .map(|v| v.crashed)
        .unwrap_or(false);
    let collision = if colliding { aux.collision_penalty } else { 0.0 };
    sum += collision;
    components.insert("collision".to_string(), collision);

    RewardBreakdown {
        total: sum.clamp(-1.0, 1.0),
        components,
        primary: 0.0,
        shared_total: 0.0,
    }
}

// ---------------------------------------------------------------------------
// Neighbor reward sharing
// ---------------------------------------------------------------------------

/// Mixing rule for nearby vehicles: r_i' = (1-alpha) r_i + alpha * mean of
/// rewards of vehicles within `radius` meters. Both constants are exposed in
/// run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharingParams {
    pub alpha: f64,
    pub radius: f64,
}

impl Default for SharingParams {
    fn default() -> Self {
        SharingParams { alpha: 0.5, radius: 25.0 }
    }
}

/// Apply sharing to per-vehicle rewards. Vehicles with no neighbor inside
/// the radius keep their own reward untouched.
pub fn share_rewards(
    rewards: &BTreeMap<u32, f64>,
    scene: &Scene,
    params: SharingParams,
) -> BTreeMap<u32, f64> {
    let pos = |id: u32| {
        scene
            .vehicles
            .iter()
            .find(|v| v.id == id)
            .map(|v| (v.x, v.y))
    };
    let mut shared = BTreeMap::new();
    for (&i, &own) in rewards {
        let Some((xi, yi)) = pos(i) else {
            shared.insert(i, own);
            continue;
        };
        let mut neighbor_sum = 0.0;
        let mut neighbor_count = 0usize;
        for (&j, &other) in rewards {
            if j == i {
                continue;
            }
            let Some((xj, yj)) = pos(j) else { continue };
            let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            if dist <= params.radius {
                neighbor_sum += other;
                neighbor_count += 1;
            }
        }
        let value = if neighbor_count == 0 {
            own
        } else {
            (1.0 - params.alpha) * own + params.alpha * neighbor_sum / neighbor_count as f64
        };
        shared.insert(i, value);
    }
    shared
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::create_scene;
    use crate::statechart::{compile_statechart, AbstractStateDef, StateChartSpec};

    fn late_merge_chart() -> CompiledChart {
        let spec = StateChartSpec {
            behavior_id: "late_merge".into(),
            priority: vec![
                "merged_to_highway".into(),
                "close_to_end_of_acceleration_area".into(),
                "at_acceleration_area".into(),
            ],
            states: vec![
                AbstractStateDef { name: "at_acceleration_area".into(), guard: "on_ramp()".into() },
                AbstractStateDef {
                    name: "close_to_end_of_acceleration_area".into(),
                    guard: "on_ramp() and distance_to_merging_end() <= 30".into(),
                },
                AbstractStateDef { name: "merged_to_highway".into(), guard: "merged()".into() },
            ],
        };
        compile_statechart(&spec, SceneKind::Merge).unwrap()
    }

    fn late_merge_fsm_spec() -> RewardFsmSpec {
        RewardFsmSpec {
            states: vec!["start".into(), "entered".into(), "primed".into(), "accepted".into()],
            initial: "start".into(),
            accepting: vec!["accepted".into()],
            transitions: vec![
                TransitionDef {
                    from: "start".into(),
                    on: "at_acceleration_area".into(),
                    to: "entered".into(),
                },
                TransitionDef {
                    from: "entered".into(),
                    on: "close_to_end_of_acceleration_area".into(),
                    to: "primed".into(),
                },
                TransitionDef {
                    from: "primed".into(),
                    on: "merged_to_highway".into(),
                    to: "accepted".into(),
                },
                TransitionDef {
                    from: "accepted".into(),
                    on: "at_acceleration_area".into(),
                    to: "primed".into(),
                },
                TransitionDef {
                    from: "accepted".into(),
                    on: "close_to_end_of_acceleration_area".into(),
                    to: "primed".into(),
                },
            ],
        }
    }

    // Symbol rows for the 3-state late-merge chart: A, C, M.
    const A: [bool; 3] = [true, false, false];
    const C: [bool; 3] = [false, true, false];
    const M: [bool; 3] = [false, false, true];
    const NONE: [bool; 3] = [false, false, false];

    fn run(fsm: &CompiledFsm, chart: &CompiledChart, rows: &[[bool; 3]]) -> usize {
        let mut s = fsm.initial_state();
        for row in rows {
            s = fsm_step(fsm, chart, s, row);
        }
        s
    }

    #[test]
    fn late_merge_sequence_reaches_accept() {
        let chart = late_merge_chart();
        let fsm = compile_fsm(&late_merge_fsm_spec(), &chart).unwrap();
        let s = run(&fsm, &chart, &[A, A, C, M]);
        assert!(fsm.is_accepting(s));
        // Both ramp states active near the end: priority picks close-to-end.
        let s = run(&fsm, &chart, &[A, [true, true, false], M]);
        assert!(fsm.is_accepting(s));
    }

    #[test]
    fn empty_active_set_self_loops_forever() {
        let chart = late_merge_chart();
        let fsm = compile_fsm(&late_merge_fsm_spec(), &chart).unwrap();
        let s = run(&fsm, &chart, &[NONE; 100]);
        assert_eq!(s, fsm.initial_state());
    }

    #[test]
    fn only_orderings_with_close_before_final_merge_accept() {
        // Brute force over all 3! orderings of the three symbols: the
        // machine accepts exactly when the close-to-end symbol precedes the
        // final merge symbol and the on-ramp symbol comes first.
        let chart = late_merge_chart();
        let fsm = compile_fsm(&late_merge_fsm_spec(), &chart).unwrap();
        let symbols = [A, C, M];
        let mut accepted = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let s = run(&fsm, &chart, &[symbols[i], symbols[j], symbols[k]]);
                    if fsm.is_accepting(s) {
                        accepted.push((i, j, k));
                    }
                }
            }
        }
        assert_eq!(accepted, vec![(0, 1, 2)]); // A, C, M only
    }

    #[test]
    fn accept_state_demotes_when_back_on_ramp() {
        let chart = late_merge_chart();
        let fsm = compile_fsm(&late_merge_fsm_spec(), &chart).unwrap();
        let s = run(&fsm, &chart, &[A, C, M, A]);
        assert!(!fsm.is_accepting(s));
        // Re-merging re-accepts.
        let s = run(&fsm, &chart, &[A, C, M, A, M]);
        assert!(fsm.is_accepting(s));
    }

    #[test]
    fn primary_pays_five_per_accepting_step() {
        let chart = late_merge_chart();
        let fsm = compile_fsm(&late_merge_fsm_spec(), &chart).unwrap();
        // Accept from step 60 onward, hold for 40 steps: total 200.
        let mut rows = Vec::new();
        rows.extend(std::iter::repeat(A).take(59));
        rows.push(C);
        rows.extend(std::iter::repeat(M).take(40));
        let mut state = fsm.initial_state();
        let mut total = 0.0;
        let mut accept_steps = 0;
        for row in &rows {
            state = fsm_step(&fsm, &chart, state, row);
            let r = primary_reward(&fsm, state);
            assert!(r == 0.0 || r == 5.0);
            if r > 0.0 {
                accept_steps += 1;
            }
            total += r;
        }
        assert_eq!(accept_steps, 40);
        assert_eq!(total, 200.0);
    }

    #[test]
    fn fsm_compile_reports_defects() {
        let chart = late_merge_chart();
        let mut spec = late_merge_fsm_spec();
        spec.initial = "nowhere".into();
        spec.accepting = vec![];
        spec.transitions.push(TransitionDef {
            from: "start".into(),
            on: "not_a_symbol".into(),
            to: "entered".into(),
        });
        let err = compile_fsm(&spec, &chart).unwrap_err();
        assert!(err.0.iter().any(|d| matches!(d, FsmDefect::UnknownInitial(_))));
        assert!(err.0.iter().any(|d| matches!(d, FsmDefect::EmptyAccepting)));
        assert!(err.0.iter().any(|d| matches!(d, FsmDefect::UnknownSymbol(s) if s == "not_a_symbol")));
    }

    #[test]
    fn duplicate_transition_rejected() {
        let chart = late_merge_chart();
        let mut spec = late_merge_fsm_spec();
        spec.transitions.push(TransitionDef {
            from: "start".into(),
            on: "at_acceleration_area".into(),
            to: "primed".into(),
        });
        let err = compile_fsm(&spec, &chart).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|d| matches!(d, FsmDefect::DuplicateTransition { .. })));
    }

    fn appendix_aux_spec() -> AuxRewardSpec {
        AuxRewardSpec {
            collision_penalty: DEFAULT_COLLISION_PENALTY,
            components: vec![
                AuxComponent {
                    name: "at_acceleration_area".into(),
                    condition: "in_state(at_acceleration_area)".into(),
                    value: 0.2,
                },
                AuxComponent {
                    name: "close_to_end_of_acceleration_area".into(),
                    condition: "in_state(close_to_end_of_acceleration_area)".into(),
                    value: 0.5,
                },
                AuxComponent {
                    name: "merged_to_highway".into(),
                    condition: "in_state(merged_to_highway)".into(),
                    value: 0.3,
                },
            ],
        }
    }

    #[test]
    fn aux_components_sum_and_report() {
        let chart = late_merge_chart();
        let aux = compile_aux(&appendix_aux_spec(), &chart, SceneKind::Merge).unwrap();
        let scene = create_scene(SceneKind::Merge, 7, 1, 0).unwrap();
        let mut history = StateHistory::new(&chart);
        // All three states active at once (only reachable in synthetic
        // histories, but the clamp applies regardless).
        history.push_row(&[true, true, true]);
        let b = eval_aux(&aux, &scene, 0, Action::Idle, &history);
        assert_eq!(b.total, 1.0);
        assert_eq!(b.components["at_acceleration_area"], 0.2);
        assert_eq!(b.components["close_to_end_of_acceleration_area"], 0.5);
        assert_eq!(b.components["merged_to_highway"], 0.3);
        assert_eq!(b.components["collision"], 0.0);
    }

    #[test]
    fn adversarial_sum_clamps_to_one() {
        let chart = late_merge_chart();
        let mut spec = appendix_aux_spec();
        spec.components[0].value = 0.9;
        spec.components[1].value = 0.5;
        spec.components[2].value = 0.3;
        let aux = compile_aux(&spec, &chart, SceneKind::Merge).unwrap();
        let scene = create_scene(SceneKind::Merge, 7, 1, 0).unwrap();
        let mut history = StateHistory::new(&chart);
        history.push_row(&[true, true, true]);
        let b = eval_aux(&aux, &scene, 0, Action::Idle, &history);
        assert_eq!(b.total, 1.0);
    }

    #[test]
    fn colliding_vehicle_gets_penalty_component() {
        let chart = late_merge_chart();
        let aux = compile_aux(&appendix_aux_spec(), &chart, SceneKind::Merge).unwrap();
        let mut scene = create_scene(SceneKind::Merge, 7, 1, 0).unwrap();
        scene.vehicles[0].crashed = true;
        let history = StateHistory::new(&chart);
        let b = eval_aux(&aux, &scene, 0, Action::Idle, &history);
        assert_eq!(b.total, -0.7);
        assert_eq!(b.components["collision"], -0.7);
    }

    #[test]
    fn aux_eval_is_pure() {
        let chart = late_merge_chart();
        let aux = compile_aux(&appendix_aux_spec(), &chart, SceneKind::Merge).unwrap();
        let scene = create_scene(SceneKind::Merge, 7, 1, 0).unwrap();
        let mut history = StateHistory::new(&chart);
        history.tick(&chart, &scene, 0);
        let a = eval_aux(&aux, &scene, 0, Action::Faster, &history);
        let b = eval_aux(&aux, &scene, 0, Action::Faster, &history);
        assert_eq!(a, b);
    }

    #[test]
    fn aux_validation_flags_unknown_state_and_duplicates() {
        let chart = late_merge_chart();
        let mut spec = appendix_aux_spec();
        spec.components[1].name = "at_acceleration_area".into();
        spec.components[2].condition = "in_state(never_declared)".into();
        let err = compile_aux(&spec, &chart, SceneKind::Merge).unwrap_err();
        assert!(err.0.iter().any(|d| matches!(d, AuxDefect::DuplicateComponent(_))));
        assert!(err.0.iter().any(|d| matches!(d, AuxDefect::Condition { .. })));
    }

    #[test]
    fn clamp_holds_under_random_specs_and_histories() {
        use rand::{Rng, SeedableRng};
        let chart = late_merge_chart();
        let scene = create_scene(SceneKind::Merge, 7, 2, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(1..6);
            let spec = AuxRewardSpec {
                collision_penalty: rng.random_range(-2.0..0.0),
                components: (0..n)
                    .map(|i| AuxComponent {
                        name: format!("c{i}"),
                        condition: "in_state(at_acceleration_area) or speed() >= 0".into(),
                        value: rng.random_range(-3.0..3.0),
                    })
                    .collect(),
            };
            let aux = compile_aux(&spec, &chart, SceneKind::Merge).unwrap();
            let mut history = StateHistory::new(&chart);
            for _ in 0..rng.random_range(0..4) {
                history.push_row(&[rng.random(), rng.random(), rng.random()]);
            }
            let b = eval_aux(&aux, &scene, 0, Action::Idle, &history);
            assert!((-1.0..=1.0).contains(&b.total), "total {}", b.total);
        }
    }

    #[test]
    fn sharing_mixes_with_neighbor_mean() {
        let mut scene = create_scene(SceneKind::Highway, 7, 2, 0).unwrap();
        scene.vehicles[1].x = scene.vehicles[0].x + 10.0;
        scene.vehicles[1].y = scene.vehicles[0].y;
        let rewards: BTreeMap<u32, f64> = [(0, 1.0), (1, 0.0)].into();
        let shared = share_rewards(&rewards, &scene, SharingParams::default());
        assert_eq!(shared[&0], 0.5);
        assert_eq!(shared[&1], 0.5);
    }

    #[test]
    fn isolated_vehicle_keeps_own_reward() {
        let mut scene = create_scene(SceneKind::Highway, 7, 2, 0).unwrap();
        scene.vehicles[1].x = scene.vehicles[0].x + 500.0;
        let rewards: BTreeMap<u32, f64> = [(0, 5.3), (1, 1.0)].into();
        let shared = share_rewards(&rewards, &scene, SharingParams::default());
        assert_eq!(shared[&0], 5.3);
        assert_eq!(shared[&1], 1.0);
    }

    #[test]
    fn zero_alpha_sharing_is_identity() {
        let mut scene = create_scene(SceneKind::Highway, 7, 2, 0).unwrap();
        scene.vehicles[1].x = scene.vehicles[0].x + 5.0;
        scene.vehicles[1].y = scene.vehicles[0].y;
        let rewards: BTreeMap<u32, f64> = [(0, 2.0), (1, -1.0)].into();
        let params = SharingParams { alpha: 0.0, radius: 25.0 };
        assert_eq!(share_rewards(&rewards, &scene, params), rewards);
    }

    #[test]
    fn sharing_preserves_total_on_symmetric_pairs() {
        let mut scene = create_scene(SceneKind::Highway, 7, 2, 0).unwrap();
        scene.vehicles[1].x = scene.vehicles[0].x + 12.0;
        scene.vehicles[1].y = scene.vehicles[0].y;
        let rewards: BTreeMap<u32, f64> = [(0, 3.25), (1, -0.5)].into();
        let shared = share_rewards(&rewards, &scene, SharingParams::default());
        let before: f64 = rewards.values().sum();
        let after: f64 = shared.values().sum();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn fsm_dot_dump_mentions_states_and_symbols() {
        let chart = late_merge_chart();
        let fsm = compile_fsm(&late_merge_fsm_spec(), &chart).unwrap();
        let dot = fsm.to_dot();
        assert!(dot.contains("doublecircle"));
        assert!(dot.contains("merged_to_highway"));
        assert!(dot.starts_with("digraph"));
    }
}
