//! Match-level payloads: the match summary stream, player profiles and replay evidence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{self, KindSet, TeamCombat};
use crate::metrics::{self, MetricsConfig};
use crate::telemetry::{KeyEventKind, Lane, MatchRecord, PlayerProfile, Point, Team, FRAME_INTERVAL_S};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("window [{from_s}, {to_s}] must satisfy 0 <= from_s < to_s <= {duration_s}")]
    BadWindow { from_s: f64, to_s: f64, duration_s: u32 },
}

/// One key event placed on the match summary chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEvent {
    pub t: f64,
    pub kind: KeyEventKind,
    pub team: Team,
    pub principal: String,
    /// Blue minus red cumulative team gold at the last frame boundary not after `t`.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRow {
    pub player_id: String,
    pub team: Team,
    pub hero_id: String,
    pub hero_type: String,
    pub lane: Lane,
    pub kills: u32,
    pub deaths: u32,
    pub assists: u32,
    pub kda: f64,
    pub gold: f64,
    pub damage_to_hero: f64,
    pub report_count: u32,
    pub idle_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub match_id: String,
    pub duration_s: u32,
    pub ended_at: i64,
    /// Blue minus red cumulative gold at every frame boundary.
    pub gold_difference: Vec<f64>,
    pub events: Vec<SummaryEvent>,
    pub team_combats: Vec<TeamCombat>,
    pub players: Vec<PlayerRow>,
}

fn team_gold(m: &MatchRecord, team: Team, frame: usize) -> f64 {
    m.team_members(team).map(|p| m.frame_stats(&p.player_id, frame).gold).sum()
}

fn gold_difference_at(m: &MatchRecord, frame: usize) -> f64 {
    team_gold(m, Team::Blue, frame) - team_gold(m, Team::Red, frame)
}

fn frame_at(m: &MatchRecord, t: f64) -> usize {
    ((t / FRAME_INTERVAL_S as f64).floor().max(0.0) as usize).min(m.frames.len().saturating_sub(1))
}

pub fn summary_events(m: &MatchRecord) -> Vec<SummaryEvent> {
    m.key_events
        .iter()
        .map(|e| SummaryEvent {
            t: e.t,
            kind: e.kind,
            team: e.team,
            principal: e.principal.clone(),
            y: gold_difference_at(m, frame_at(m, e.t)),
        })
        .collect()
}

pub fn match_summary(m: &MatchRecord) -> MatchSummary {
    MatchSummary {
        match_id: m.match_id.clone(),
        duration_s: m.duration_s,
        ended_at: m.ended_at,
        gold_difference: (0..m.frames.len()).map(|i| gold_difference_at(m, i)).collect(),
        events: summary_events(m),
        team_combats: events::detect_team_combats(m),
        players: m
            .players
            .iter()
            .map(|p| PlayerRow {
                player_id: p.player_id.clone(),
                team: p.team,
                hero_id: p.hero_id.clone(),
                hero_type: p.hero_type.clone(),
                lane: p.lane,
                kills: p.summary.kills,
                deaths: p.summary.deaths,
                assists: p.summary.assists,
                kda: metrics::kda(p.summary.kills, p.summary.assists, p.summary.deaths),
                gold: p.summary.total_gold,
                damage_to_hero: p.summary.damage_to_hero,
                report_count: p.summary.report_count,
                idle_time_s: p.summary.idle_time_s,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerProfileView {
    pub match_id: String,
    pub player_id: String,
    pub team: Team,
    pub hero_id: String,
    pub hero_type: String,
    pub lane: Lane,
    pub profile: PlayerProfile,
    pub idle_time_s: f64,
    pub healthy_recall: u32,
    pub surrender_times: u32,
    pub offline_count: u32,
    pub reconnect_count: u32,
    pub report_count: u32,
    pub kda: f64,
}

pub fn player_profile(m: &MatchRecord, player_id: &str) -> Result<PlayerProfileView, ReplayError> {
    let p = m
        .player(player_id)
        .ok_or_else(|| ReplayError::UnknownPlayer(player_id.to_string()))?;
    let s = &p.summary;
    Ok(PlayerProfileView {
        match_id: m.match_id.clone(),
        player_id: p.player_id.clone(),
        team: p.team,
        hero_id: p.hero_id.clone(),
        hero_type: p.hero_type.clone(),
        lane: p.lane,
        profile: p.profile.clone(),
        idle_time_s: s.idle_time_s,
        healthy_recall: s.healthy_recall,
        surrender_times: s.surrender_times,
        offline_count: s.offline_count,
        reconnect_count: s.reconnect_count,
        report_count: s.report_count,
        kda: metrics::kda(s.kills, s.assists, s.deaths),
    })
}

/// One row of the per-minute player events chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerMinuteRow {
    pub minute_index: u32,
    pub kinds: KindSet,
    pub contributed_only: KindSet,
    /// Minute values divided by the player's per-match maximum.
    pub poke: f64,
    pub monster: f64,
    pub minion: f64,
    pub inactive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldBar {
    pub player_id: String,
    pub team: Team,
    pub total: f64,
    pub minion: f64,
    pub monster: f64,
    pub kill: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: u32,
    pub pos: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub player_id: String,
    pub team: Team,
    pub selected: bool,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayPayload {
    pub match_id: String,
    pub player_id: String,
    pub from_s: f64,
    pub to_s: f64,
    pub events: Vec<SummaryEvent>,
    pub team_combats: Vec<TeamCombat>,
    pub minutes: Vec<PlayerMinuteRow>,
    pub gold_bars: Vec<GoldBar>,
    pub trajectories: Vec<Trajectory>,
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    values
        .iter()
        .map(|v| if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Movement samples of all ten players with timestamps inside `[from_s, to_s]`.
pub fn trajectories(m: &MatchRecord, selected: &str, from_s: f64, to_s: f64) -> Vec<Trajectory> {
    m.players
        .iter()
        .map(|p| Trajectory {
            player_id: p.player_id.clone(),
            team: p.team,
            selected: p.player_id == selected,
            samples: m
                .movement
                .iter()
                .filter(|s| (s.t as f64) >= from_s && (s.t as f64) <= to_s)
                .filter_map(|s| s.per_player.get(&p.player_id).map(|pp| TrajectorySample { t: s.t, pos: pp.pos }))
                .collect(),
        })
        .collect()
}

pub fn replay(m: &MatchRecord, player_id: &str, from_s: f64, to_s: f64) -> Result<ReplayPayload, ReplayError> {
    if m.player(player_id).is_none() {
        return Err(ReplayError::UnknownPlayer(player_id.to_string()));
    }
    if !(from_s >= 0.0 && from_s < to_s && to_s <= m.duration_s as f64) {
        return Err(ReplayError::BadWindow {
            from_s,
            to_s,
            duration_s: m.duration_s,
        });
    }
    let minutes = events::abstract_minutes(m, player_id).map_err(|_| ReplayError::UnknownPlayer(player_id.to_string()))?;
    let inactive = metrics::minute_inactive_fractions(m, player_id, &MetricsConfig::default())
        .map_err(|_| ReplayError::UnknownPlayer(player_id.to_string()))?;
    let poke = normalized(&minutes.iter().map(|e| e.poke_damage).collect::<Vec<_>>());
    let monster = normalized(&minutes.iter().map(|e| e.monster_economy).collect::<Vec<_>>());
    let minion = normalized(&minutes.iter().map(|e| e.minion_economy).collect::<Vec<_>>());
    let rows = minutes
        .iter()
        .enumerate()
        .map(|(i, e)| PlayerMinuteRow {
            minute_index: e.minute_index,
            kinds: e.kinds_present,
            contributed_only: e.contributed_only,
            poke: poke[i],
            monster: monster[i],
            minion: minion[i],
            inactive_fraction: inactive.get(i).copied().unwrap_or(0.0),
        })
        .collect();
    let gold_bars = m
        .players
        .iter()
        .map(|p| GoldBar {
            player_id: p.player_id.clone(),
            team: p.team,
            total: p.summary.total_gold,
            minion: p.summary.minion_gold,
            monster: p.summary.monster_gold,
            kill: p.summary.kill_gold,
        })
        .collect();
    Ok(ReplayPayload {
        match_id: m.match_id.clone(),
        player_id: player_id.to_string(),
        from_s,
        to_s,
        events: summary_events(m),
        team_combats: events::detect_team_combats(m),
        minutes: rows,
        gold_bars,
        trajectories: trajectories(m, player_id, from_s, to_s),
    })
}
