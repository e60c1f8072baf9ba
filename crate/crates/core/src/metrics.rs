//! Metrics for locating potential high-level actors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{self, EventKind, EventsError};
use crate::telemetry::{MatchRecord, PlayerMatch, Team, FRAME_INTERVAL_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub activeness_threshold: f64,
    pub interval_s: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            activeness_threshold: 0.1,
            interval_s: FRAME_INTERVAL_S,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("unknown player {0}")]
    UnknownPlayer(String),
}

impl From<EventsError> for MetricsError {
    fn from(e: EventsError) -> Self {
        match e {
            EventsError::UnknownPlayer(p) => MetricsError::UnknownPlayer(p),
        }
    }
}

/// The eleven glyph metrics of one player-match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    /// Priority-event counts indexed by event rank.
    pub priority_counts: [u32; EventKind::COUNT],
    pub inactive_percentage: f64,
    pub report_count: u32,
}

impl MetricVector {
    pub const DIM: usize = 11;

    pub const NAMES: [&'static str; MetricVector::DIM] = [
        "turret_destruction",
        "dragon_killing",
        "hero_killing",
        "death",
        "assist",
        "poke",
        "monster_killing",
        "minion_killing",
        "inaction",
        "inactive_percentage",
        "report_count",
    ];

    pub fn as_array(&self) -> [f64; MetricVector::DIM] {
        let mut out = [0.0; MetricVector::DIM];
        for (o, c) in out.iter_mut().zip(self.priority_counts) {
            *o = c as f64;
        }
        out[9] = self.inactive_percentage;
        out[10] = self.report_count as f64;
        out
    }

    pub fn count(&self, kind: EventKind) -> u32 {
        self.priority_counts[kind.rank()]
    }
}

/// Average of the player's share of team hero damage and team economy gain.
///
/// A component whose team total is zero is left out; `None` when both are.
pub fn activeness_score(
    player_hero_damage: f64,
    team_hero_damage: f64,
    player_economy_gain: f64,
    team_economy_gain: f64,
) -> Option<f64> {
    let parts: Vec<f64> = [
        (player_hero_damage, team_hero_damage),
        (player_economy_gain, team_economy_gain),
    ]
    .into_iter()
    .filter(|(_, team)| *team > 0.0)
    .map(|(p, team)| (p / team).clamp(0.0, 1.0))
    .collect();
    if parts.is_empty() {
        None
    } else {
        Some(parts.iter().sum::<f64>() / parts.len() as f64)
    }
}

fn player_or_err<'a>(m: &'a MatchRecord, p: &str) -> Result<&'a PlayerMatch, MetricsError> {
    m.player(p).ok_or_else(|| MetricsError::UnknownPlayer(p.to_string()))
}

/// Activeness score of every 20 s interval (frame `i` to `i + 1`).
pub fn interval_scores(m: &MatchRecord, player_id: &str) -> Result<Vec<Option<f64>>, MetricsError> {
    let me = player_or_err(m, player_id)?;
    let team: Vec<&str> = m.team_members(me.team).map(|p| p.player_id.as_str()).collect();
    Ok((0..m.interval_count())
        .map(|i| {
            let gain = |p: &str| {
                let (a, b) = (m.frame_stats(p, i), m.frame_stats(p, i + 1));
                (b.damage_to_hero - a.damage_to_hero, b.gold - a.gold)
            };
            let (pd, pg) = gain(player_id);
            let (td, tg) = team.iter().fold((0.0, 0.0), |(d, g), p| {
                let (pd, pg) = gain(p);
                (d + pd, g + pg)
            });
            activeness_score(pd, td, pg, tg)
        })
        .collect())
}

/// Fraction of defined-score intervals whose score falls below the threshold.
pub fn inactive_fraction(scores: &[Option<f64>], threshold: f64) -> f64 {
    let defined: Vec<f64> = scores.iter().flatten().copied().collect();
    if defined.is_empty() {
        return 0.0;
    }
    let inactive = defined.iter().filter(|s| **s < threshold).count();
    inactive as f64 / defined.len() as f64
}

pub fn inactive_percentage(m: &MatchRecord, player_id: &str, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    Ok(inactive_fraction(&interval_scores(m, player_id)?, cfg.activeness_threshold))
}

pub fn kda(kills: u32, assists: u32, deaths: u32) -> f64 {
    (kills + assists) as f64 / (deaths + 1) as f64
}

/// The opposing player compared against `player_id` for economic difference.
///
/// Same lane on the other team when that pairing is unambiguous, otherwise the
/// player with the same roster index on the other team.
pub fn lane_opponent<'a>(m: &'a MatchRecord, player_id: &str) -> Option<&'a PlayerMatch> {
    let me = m.player(player_id)?;
    let enemy: Vec<&PlayerMatch> = m.team_members(me.team.opponent()).collect();
    let same_lane_mates = m.team_members(me.team).filter(|p| p.lane == me.lane).count();
    let same_lane_enemies: Vec<&&PlayerMatch> = enemy.iter().filter(|p| p.lane == me.lane).collect();
    if same_lane_mates == 1 && same_lane_enemies.len() == 1 {
        return Some(same_lane_enemies[0]);
    }
    let index = m.team_members(me.team).position(|p| p.player_id == player_id)?;
    enemy.get(index).copied()
}

/// Cumulative gold of the player minus its lane opponent at the end of each minute.
pub fn economic_difference_series(m: &MatchRecord, player_id: &str) -> Result<Vec<f64>, MetricsError> {
    player_or_err(m, player_id)?;
    let Some(opponent) = lane_opponent(m, player_id) else {
        return Ok(vec![0.0; m.minute_count()]);
    };
    let per_minute = (60 / FRAME_INTERVAL_S) as usize;
    let last = m.frames.len().saturating_sub(1);
    Ok((0..m.minute_count())
        .map(|minute| {
            let i = ((minute + 1) * per_minute).min(last);
            m.frame_stats(player_id, i).gold - m.frame_stats(&opponent.player_id, i).gold
        })
        .collect())
}

pub fn priority_counts(sequence: &[EventKind]) -> [u32; EventKind::COUNT] {
    let mut counts = [0u32; EventKind::COUNT];
    for k in sequence {
        counts[k.rank()] += 1;
    }
    counts
}

pub fn metric_vector(m: &MatchRecord, player_id: &str, cfg: &MetricsConfig) -> Result<MetricVector, MetricsError> {
    let p = player_or_err(m, player_id)?;
    let sequence = events::priority_sequence(m, player_id)?;
    Ok(MetricVector {
        priority_counts: priority_counts(&sequence),
        inactive_percentage: inactive_percentage(m, player_id, cfg)?,
        report_count: p.summary.report_count,
    })
}

/// Share of the three 20 s intervals in each minute that were inactive.
pub fn minute_inactive_fractions(m: &MatchRecord, player_id: &str, cfg: &MetricsConfig) -> Result<Vec<f64>, MetricsError> {
    let scores = interval_scores(m, player_id)?;
    let per_minute = (60 / FRAME_INTERVAL_S) as usize;
    Ok((0..m.minute_count())
        .map(|minute| {
            let lo = (minute * per_minute).min(scores.len());
            let hi = ((minute + 1) * per_minute).min(scores.len());
            let slice = &scores[lo..hi];
            if slice.is_empty() {
                return 0.0;
            }
            let inactive = slice
                .iter()
                .filter(|s| matches!(s, Some(v) if *v < cfg.activeness_threshold))
                .count();
            inactive as f64 / slice.len() as f64
        })
        .collect())
}

/// Total of a per-player quantity over a team.
pub fn team_total(m: &MatchRecord, team: Team, f: impl Fn(&PlayerMatch) -> f64) -> f64 {
    m.team_members(team).map(f).sum()
}
