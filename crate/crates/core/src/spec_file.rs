//! The behavior spec file: a single TOML document bundling the state chart,
//! the primary-reward FSM, and the auxiliary reward for one behavior. This
//! file is the handoff contract between synthesis and training, so loading
//! always re-validates everything against the scene kind.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{self, AuxRewardSpec, CompiledAux, CompiledFsm, RewardFsmSpec};
use crate::sim::SceneKind;
use crate::statechart::{self, CompiledChart, RleRun, StateChartSpec};

pub const SPEC_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSpecFile {
    pub version: u32,
    pub behavior_id: String,
    pub scene: SceneKind,
    pub description: String,
    pub statechart: StateChartSpec,
    pub fsm: RewardFsmSpec,
    pub aux: AuxRewardSpec,
}

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed behavior spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported spec version {0} (expected {SPEC_FILE_VERSION})")]
    Version(u32),
    #[error("state chart: {0}")]
    Chart(#[from] statechart::ChartErrors),
    #[error("reward FSM: {0}")]
    Fsm(#[from] reward::FsmErrors),
    #[error("auxiliary reward: {0}")]
    Aux(#[from] reward::AuxErrors),
}

/// Everything compiled and cross-validated, ready for training/evaluation.
#[derive(Debug, Clone)]
pub struct CompiledBehavior {
    pub behavior_id: String,
    pub scene: SceneKind,
    pub description: String,
    pub chart: CompiledChart,
    pub fsm: CompiledFsm,
    pub aux: CompiledAux,
    /// Raw source spec, kept for re-serialization and code-diversity text.
    pub source: BehaviorSpecFile,
}

impl BehaviorSpecFile {
    pub fn parse(text: &str) -> Result<Self, SpecFileError> {
        let mut file: BehaviorSpecFile = toml::from_str(text)?;
        if file.version != SPEC_FILE_VERSION {
            return Err(SpecFileError::Version(file.version));
        }
        if file.statechart.behavior_id.is_empty() {
            file.statechart.behavior_id = file.behavior_id.clone();
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SpecFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SpecFileError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Serialized auxiliary section alone; the "code text" used when
    /// embedding reward functions against language descriptions.
    pub fn aux_toml(&self) -> String {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            aux: &'a AuxRewardSpec,
        }
        toml::to_string_pretty(&Wrapper { aux: &self.aux }).expect("aux serializes")
    }

    /// Compile and cross-validate all three parts. The FSM alphabet and the
    /// auxiliary history predicates both check against the chart's states.
    pub fn compile(&self) -> Result<CompiledBehavior, SpecFileError> {
        let mut chart_spec = self.statechart.clone();
        if chart_spec.behavior_id.is_empty() {
            chart_spec.behavior_id = self.behavior_id.clone();
        }
        let chart = statechart::compile_statechart(&chart_spec, self.scene)?;
        let fsm = reward::compile_fsm(&self.fsm, &chart)?;
        let aux = reward::compile_aux(&self.aux, &chart, self.scene)?;
        Ok(CompiledBehavior {
            behavior_id: self.behavior_id.clone(),
            scene: self.scene,
            description: self.description.clone(),
            chart,
            fsm,
            aux,
            source: self.clone(),
        })
    }
}

impl CompiledBehavior {
    /// Replay a run-length summary through the FSM: true when the machine
    /// accepts at any step.
    pub fn accepts_summary(&self, runs: &[RleRun]) -> bool {
        let names = self.chart.state_names();
        let rows = statechart::expand_summary(runs).into_iter().map(|active| {
            names
                .iter()
                .map(|n| active.iter().any(|a| a == n))
                .collect::<Vec<bool>>()
        });
        reward::fsm_ever_accepts(&self.fsm, &self.chart, rows)
    }
}
