//! Deterministic scripted backend: a fixture set standing in for the
//! language model so the whole pipeline runs offline and reproducibly.
//! Fixtures cover the three scene description lists plus full spec bundles
//! for a handful of behaviors; anything else fails synthesis cleanly.

use std::sync::OnceLock;

use serde::Serialize;

use super::embed::tokenize;
use super::llm::{PromptRequest, Purpose};
use super::SynthError;
use crate::reward::AuxRewardSpec;
use crate::sim::SceneKind;
use crate::spec_file::BehaviorSpecFile;
use crate::statechart::StateChartSpec;

/// Six behavior titles per scene kind.
pub const MERGE_TITLES: [&str; 6] = [
    "Early Deceleration on Ramp",
    "Sudden Braking After Merging",
    "Late Merging at Ramp End",
    "Accelerative Merging",
    "Merging with Speed Variation",
    "Merging from Complete Stop",
];
pub const INTERSECTION_TITLES: [&str; 6] = [
    "Decelerate through intersection",
    "Consistent speed crossing",
    "Abrupt full stop at intersection",
    "Erratic speed",
    "Rolling stop at intersection",
    "Rapid acceleration at intersection",
];
pub const HIGHWAY_TITLES: [&str; 6] = [
    "Tailgating",
    "Accelerating in Congestion",
    "Side-by-Side Driving",
    "Following at a Safe Distance",
    "Lane Weaving",
    "Erratic Speed",
];

pub fn titles_for(kind: SceneKind) -> &'static [&'static str; 6] {
    match kind {
        SceneKind::Merge => &MERGE_TITLES,
        SceneKind::Intersection => &INTERSECTION_TITLES,
        SceneKind::Highway => &HIGHWAY_TITLES,
    }
}

const FIXTURE_SOURCES: [(&str, &str); 6] = [
    ("late_merge", include_str!("../../assets/fixtures/late_merge.toml")),
    ("late_merge_alt", include_str!("../../assets/fixtures/late_merge_alt.toml")),
    ("merge_from_stop", include_str!("../../assets/fixtures/merge_from_stop.toml")),
    (
        "accelerative_merging",
        include_str!("../../assets/fixtures/accelerative_merging.toml"),
    ),
    ("rolling_stop", include_str!("../../assets/fixtures/rolling_stop.toml")),
    ("tailgating", include_str!("../../assets/fixtures/tailgating.toml")),
];

/// Titles the fixture specs answer for (fixture id -> generated title).
const FIXTURE_TITLES: [(&str, &str); 6] = [
    ("late_merge", "Late Merging at Ramp End"),
    ("late_merge_alt", "Late Merging at Ramp End (alternate shaping)"),
    ("merge_from_stop", "Merging from Complete Stop"),
    ("accelerative_merging", "Accelerative Merging"),
    ("rolling_stop", "Rolling stop at intersection"),
    ("tailgating", "Tailgating"),
];

fn fixtures() -> &'static Vec<BehaviorSpecFile> {
    static FIXTURES: OnceLock<Vec<BehaviorSpecFile>> = OnceLock::new();
    FIXTURES.get_or_init(|| {
        FIXTURE_SOURCES
            .iter()
            .map(|(id, text)| {
                let file = BehaviorSpecFile::parse(text)
                    .unwrap_or_else(|e| panic!("fixture {id} invalid: {e}"));
                file.compile()
                    .unwrap_or_else(|e| panic!("fixture {id} does not compile: {e}"));
                file
            })
            .collect()
    })
}

/// Load one fixture spec by behavior id.
pub fn fixture_spec(behavior_id: &str) -> Option<&'static BehaviorSpecFile> {
    fixtures().iter().find(|f| f.behavior_id == behavior_id)
}

pub fn fixture_ids() -> Vec<&'static str> {
    FIXTURE_SOURCES.iter().map(|(id, _)| *id).collect()
}

/// Token-overlap score of `hint` against a candidate phrase: the fraction of
/// the phrase's distinct tokens present in the hint.
fn overlap(hint_tokens: &std::collections::BTreeSet<String>, phrase: &str) -> f64 {
    let phrase_tokens: std::collections::BTreeSet<String> = tokenize(phrase).into_iter().collect();
    if phrase_tokens.is_empty() {
        return 0.0;
    }
    let shared = phrase_tokens.intersection(hint_tokens).count();
    shared as f64 / phrase_tokens.len() as f64
}

const MATCH_THRESHOLD: f64 = 0.6;

/// Resolve free text (a behavior id, title, or sentence) to a fixture.
pub fn match_fixture(hint: &str) -> Option<&'static BehaviorSpecFile> {
    let hint_tokens: std::collections::BTreeSet<String> = tokenize(hint).into_iter().collect();
    let mut best: Option<(f64, &BehaviorSpecFile)> = None;
    for f in fixtures() {
        let title = FIXTURE_TITLES
            .iter()
            .find(|(id, _)| *id == f.behavior_id)
            .map(|(_, t)| *t)
            .unwrap_or("");
        let score = [f.behavior_id.replace('_', " "), title.to_string()]
            .iter()
            .map(|p| overlap(&hint_tokens, p))
            .fold(0.0, f64::max);
        if score >= MATCH_THRESHOLD {
            match best {
                Some((s, _)) if s >= score => {}
                _ => best = Some((score, f)),
            }
        }
    }
    best.map(|(_, f)| f)
}

#[derive(Serialize)]
struct ChartSection<'a> {
    statechart: &'a StateChartSpec,
}

#[derive(Serialize)]
struct AuxSection<'a> {
    aux: &'a AuxRewardSpec,
}

#[derive(Serialize)]
struct FsmSection<'a> {
    fsm: &'a crate::reward::RewardFsmSpec,
}

fn fenced(toml_text: String) -> String {
    format!("```toml\n{}\n```", toml_text.trim_end())
}

/// The scripted backend itself. Stateless; every response is a pure function
/// of the request.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedFixtures;

impl ScriptedFixtures {
    pub fn respond(&self, req: &PromptRequest) -> Result<String, SynthError> {
        match req.purpose {
            Purpose::Descriptions => Ok(titles_for(req.scene).join("\n")),
            Purpose::Statechart | Purpose::PrimaryFsm | Purpose::Auxiliary => {
                let fixture = match_fixture(&req.behavior_hint).ok_or_else(|| {
                    SynthError::NoFixture(req.behavior_hint.clone())
                })?;
                let body = match req.purpose {
                    Purpose::Statechart => {
                        // Strip the behavior id: the synthesized chart gets
                        // its id from the pipeline.
                        let mut chart = fixture.statechart.clone();
                        chart.behavior_id = String::new();
                        toml::to_string_pretty(&ChartSection { statechart: &chart })
                    }
                    Purpose::PrimaryFsm => {
                        toml::to_string_pretty(&FsmSection { fsm: &fixture.fsm })
                    }
                    Purpose::Auxiliary => toml::to_string_pretty(&AuxSection { aux: &fixture.aux }),
                    _ => unreachable!(),
                }
                .expect("fixture sections serialize");
                Ok(fenced(body))
            }
            Purpose::Iterator => {
                let fixture = match_fixture(&req.behavior_hint);
                // The late-merge fixture has a scripted second-generation
                // shaping that raises the close-to-end incentive.
                match fixture {
                    Some(f) if f.behavior_id == "late_merge" => {
                        let alt = fixture_spec("late_merge_alt").expect("alt fixture");
                        let mut body = String::from("verdict = \"replace\"\n\n");
                        body.push_str(
                            &toml::to_string_pretty(&AuxSection { aux: &alt.aux })
                                .expect("aux serializes"),
                        );
                        Ok(fenced(body))
                    }
                    _ => Ok(fenced("verdict = \"keep\"".to_string())),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse_and_compile() {
        assert_eq!(fixtures().len(), 6);
        for f in fixtures() {
            f.compile().unwrap();
        }
    }

    #[test]
    fn fixture_matching_accepts_ids_titles_and_sentences() {
        assert_eq!(match_fixture("late_merge").unwrap().behavior_id, "late_merge");
        assert_eq!(
            match_fixture("Late Merging at Ramp End").unwrap().behavior_id,
            "late_merge"
        );
        assert_eq!(
            match_fixture("Rolling stop at intersection").unwrap().behavior_id,
            "rolling_stop"
        );
        assert_eq!(
            match_fixture("merge from a complete stop").unwrap().behavior_id,
            "merge_from_stop"
        );
        assert!(match_fixture("paint the car purple").is_none());
    }

    #[test]
    fn titles_cover_all_three_scenes() {
        for kind in SceneKind::ALL {
            assert_eq!(titles_for(kind).len(), 6);
        }
        assert!(MERGE_TITLES.contains(&"Late Merging at Ramp End"));
        assert!(INTERSECTION_TITLES.contains(&"Rolling stop at intersection"));
    }
}
