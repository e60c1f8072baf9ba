//! Cohorts of player-matches and the per-minute progression summaries built over them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{self, EventKind};
use crate::metrics;
use crate::telemetry::{MatchRecord, MemberKey};

pub const DEFAULT_HISTORY_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortMode {
    Lasso,
    History,
    Hero,
}

impl std::str::FromStr for CohortMode {
    type Err = CohortError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lasso" => Ok(CohortMode::Lasso),
            "history" => Ok(CohortMode::History),
            "hero" => Ok(CohortMode::Hero),
            other => Err(CohortError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CohortError {
    #[error("lasso selection is empty")]
    EmptySelection,
    #[error("unknown anchor {0}")]
    UnknownAnchor(MemberKey),
    #[error("anchor required for {0:?} mode")]
    MissingAnchor(CohortMode),
    #[error("unknown member {0}")]
    UnknownMember(MemberKey),
    #[error("unknown cohort mode {0:?}")]
    UnknownMode(String),
}

/// Per-member data a cohort needs. Implemented by the store (cached) and by
/// plain match slices (computed on demand).
pub trait CohortSource {
    fn all_members(&self) -> Vec<MemberKey>;
    fn contains(&self, key: &MemberKey) -> bool;
    fn ended_at(&self, key: &MemberKey) -> Option<i64>;
    fn hero_of(&self, key: &MemberKey) -> Option<String>;
    fn economic_difference(&self, key: &MemberKey) -> Option<Vec<f64>>;
    fn priority_sequence(&self, key: &MemberKey) -> Option<Vec<EventKind>>;
}

impl CohortSource for [MatchRecord] {
    fn all_members(&self) -> Vec<MemberKey> {
        let mut out: Vec<MemberKey> = self.iter().flat_map(|m| m.member_keys()).collect();
        out.sort();
        out
    }

    fn contains(&self, key: &MemberKey) -> bool {
        find(self, key).is_some()
    }

    fn ended_at(&self, key: &MemberKey) -> Option<i64> {
        find(self, key).map(|m| m.ended_at)
    }

    fn hero_of(&self, key: &MemberKey) -> Option<String> {
        find(self, key).and_then(|m| m.player(&key.player_id)).map(|p| p.hero_id.clone())
    }

    fn economic_difference(&self, key: &MemberKey) -> Option<Vec<f64>> {
        find(self, key).and_then(|m| metrics::economic_difference_series(m, &key.player_id).ok())
    }

    fn priority_sequence(&self, key: &MemberKey) -> Option<Vec<EventKind>> {
        find(self, key).and_then(|m| events::priority_sequence(m, &key.player_id).ok())
    }
}

fn find<'a>(matches: &'a [MatchRecord], key: &MemberKey) -> Option<&'a MatchRecord> {
    matches
        .iter()
        .find(|m| m.match_id == key.match_id && m.player(&key.player_id).is_some())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub mode: CohortMode,
    pub members: Vec<MemberKey>,
    pub anchor: Option<MemberKey>,
}

/// Builds a cohort.
///
/// History mode collects the anchor's own match and its earlier matches, most
/// recent first, capped at `history_limit`. Hero mode collects every other
/// player-match on the anchor's hero.
pub fn build_cohort<S: CohortSource + ?Sized>(
    mode: CohortMode,
    anchor: Option<&MemberKey>,
    selection: &[MemberKey],
    src: &S,
    history_limit: usize,
) -> Result<Cohort, CohortError> {
    match mode {
        CohortMode::Lasso => {
            if selection.is_empty() {
                return Err(CohortError::EmptySelection);
            }
            if let Some(missing) = selection.iter().find(|k| !src.contains(k)) {
                return Err(CohortError::UnknownMember(missing.clone()));
            }
            let members: BTreeSet<MemberKey> = selection.iter().cloned().collect();
            Ok(Cohort {
                mode,
                members: members.into_iter().collect(),
                anchor: None,
            })
        }
        CohortMode::History | CohortMode::Hero => {
            let anchor = anchor.ok_or(CohortError::MissingAnchor(mode))?;
            if !src.contains(anchor) {
                return Err(CohortError::UnknownAnchor(anchor.clone()));
            }
            let members = if mode == CohortMode::History {
                let until = src.ended_at(anchor).unwrap_or(i64::MAX);
                let mut past: Vec<(i64, MemberKey)> = src
                    .all_members()
                    .into_iter()
                    .filter(|k| k.player_id == anchor.player_id)
                    .filter_map(|k| src.ended_at(&k).map(|t| (t, k)))
                    .filter(|(t, _)| *t <= until)
                    .collect();
                past.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
                past.into_iter().take(history_limit.max(1)).map(|(_, k)| k).collect()
            } else {
                let hero = src.hero_of(anchor);
                src.all_members()
                    .into_iter()
                    .filter(|k| k != anchor && src.hero_of(k) == hero)
                    .collect()
            };
            Ok(Cohort {
                mode,
                members,
                anchor: Some(anchor.clone()),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub minute_index: usize,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Five-number summary with Tukey hinges; `None` for an empty sample.
pub fn tukey_box(minute_index: usize, values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let lower = &xs[..n.div_ceil(2)];
    let upper = &xs[n / 2..];
    Some(BoxStats {
        minute_index,
        n,
        min: xs[0],
        q1: median_sorted(lower),
        median: median_sorted(&xs),
        q3: median_sorted(upper),
        max: xs[n - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteDistribution {
    pub minute_index: usize,
    pub members: usize,
    /// Member counts per priority event, in rank order.
    pub counts: [u32; EventKind::COUNT],
    pub fractions: [f64; EventKind::COUNT],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub from: EventKind,
    pub to: EventKind,
    pub count: u32,
    pub fraction: f64,
}

/// Transitions from minute `minute_index` to the next, over members present at both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub minute_index: usize,
    pub members: usize,
    pub flows: Vec<Flow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FlowSummary {
    pub distributions: Vec<MinuteDistribution>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSeries {
    pub member: MemberKey,
    pub priority: Vec<EventKind>,
    pub economic_difference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionSummary {
    pub cohort: Cohort,
    pub boxes: Vec<BoxStats>,
    pub flow: FlowSummary,
    pub series: Vec<MemberSeries>,
}

pub fn flow_summary(sequences: &[Vec<EventKind>]) -> FlowSummary {
    let horizon = sequences.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = FlowSummary::default();
    for t in 0..horizon {
        let mut counts = [0u32; EventKind::COUNT];
        for s in sequences.iter().filter(|s| s.len() > t) {
            counts[s[t].rank()] += 1;
        }
        let members: u32 = counts.iter().sum();
        let mut fractions = [0.0; EventKind::COUNT];
        for (f, c) in fractions.iter_mut().zip(counts) {
            *f = c as f64 / members as f64;
        }
        out.distributions.push(MinuteDistribution {
            minute_index: t,
            members: members as usize,
            counts,
            fractions,
        });

        if t + 1 < horizon {
            let mut pairs = [[0u32; EventKind::COUNT]; EventKind::COUNT];
            for s in sequences.iter().filter(|s| s.len() > t + 1) {
                pairs[s[t].rank()][s[t + 1].rank()] += 1;
            }
            let both: u32 = pairs.iter().flatten().sum();
            let mut flows = Vec::new();
            for (a, row) in pairs.iter().enumerate() {
                for (b, &count) in row.iter().enumerate() {
                    if count > 0 {
                        flows.push(Flow {
                            from: EventKind::from_rank(a).expect("rank in range"),
                            to: EventKind::from_rank(b).expect("rank in range"),
                            count,
                            fraction: count as f64 / both as f64,
                        });
                    }
                }
            }
            out.transitions.push(Transition {
                minute_index: t,
                members: both as usize,
                flows,
            });
        }
    }
    out
}

pub fn progression_summary<S: CohortSource + ?Sized>(c: &Cohort, src: &S) -> ProgressionSummary {
    let series: Vec<MemberSeries> = c
        .members
        .iter()
        .map(|k| MemberSeries {
            member: k.clone(),
            priority: src.priority_sequence(k).unwrap_or_default(),
            economic_difference: src.economic_difference(k).unwrap_or_default(),
        })
        .collect();
    let horizon = series.iter().map(|s| s.economic_difference.len()).max().unwrap_or(0);
    let boxes = (0..horizon)
        .filter_map(|t| {
            let values: Vec<f64> = series
                .iter()
                .filter_map(|s| s.economic_difference.get(t).copied())
                .collect();
            tukey_box(t, &values)
        })
        .collect();
    let sequences: Vec<Vec<EventKind>> = series.iter().map(|s| s.priority.clone()).collect();
    ProgressionSummary {
        cohort: c.clone(),
        boxes,
        flow: flow_summary(&sequences),
        series,
    }
}

/// Members whose priority event is `e1` at minute `t` and `e2` at `t + 1`.
pub fn filter_by_flow<S: CohortSource + ?Sized>(c: &Cohort, src: &S, t: usize, e1: EventKind, e2: EventKind) -> Cohort {
    let members = c
        .members
        .iter()
        .filter(|k| {
            src.priority_sequence(k)
                .is_some_and(|s| s.get(t) == Some(&e1) && s.get(t + 1) == Some(&e2))
        })
        .cloned()
        .collect();
    Cohort {
        mode: c.mode,
        members,
        anchor: c.anchor.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EventKind::*;

    #[test]
    fn single_value_box_collapses() {
        let b = tukey_box(0, &[42.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (42.0, 42.0, 42.0, 42.0, 42.0));
    }

    #[test]
    fn tukey_hinges_on_small_samples() {
        let b = tukey_box(0, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        let b = tukey_box(0, &[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (1.5, 2.5, 3.5));
        assert!(tukey_box(0, &[]).is_none());
    }

    #[test]
    fn half_of_members_dying_gives_half() {
        let seqs = vec![
            vec![Death, MinionKilling],
            vec![Death, MinionKilling],
            vec![MinionKilling, MinionKilling],
            vec![Poke, MinionKilling],
        ];
        let f = flow_summary(&seqs);
        assert_eq!(f.distributions[0].fractions[Death.rank()], 0.5);
        assert_eq!(f.transitions[0].flows.len(), 3);
        assert_eq!(f.distributions[1].fractions[MinionKilling.rank()], 1.0);
    }

    #[test]
    fn shorter_members_drop_out_of_later_minutes() {
        let seqs = vec![vec![Inaction], vec![Inaction, Death, Death]];
        let f = flow_summary(&seqs);
        assert_eq!(f.distributions.len(), 3);
        assert_eq!(f.distributions[1].members, 1);
        assert_eq!(f.transitions[0].members, 1);
        assert_eq!(f.transitions[0].flows[0].fraction, 1.0);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("hero".parse::<CohortMode>().unwrap(), CohortMode::Hero);
        assert!("crowd".parse::<CohortMode>().is_err());
    }
}
