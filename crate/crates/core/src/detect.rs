//! Rule-based low-level actor detection: AFK players and feeders.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{DeathRecord, MatchRecord, MemberKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub afk_threshold_s: f64,
    pub feeder_ratio_threshold: f64,
    pub feeder_count_threshold: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            afk_threshold_s: 120.0,
            feeder_ratio_threshold: 0.4,
            feeder_count_threshold: 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("afk threshold must be positive, got {0}")]
    AfkThreshold(f64),
    #[error("ratio threshold must lie strictly between 0 and 1, got {0}")]
    RatioThreshold(f64),
    #[error("count threshold must be at least 1")]
    CountThreshold,
}

impl DetectorConfig {
    pub fn new(afk_threshold_s: f64, feeder_ratio_threshold: f64, feeder_count_threshold: u32) -> Result<Self, ConfigError> {
        let cfg = DetectorConfig {
            afk_threshold_s,
            feeder_ratio_threshold,
            feeder_count_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.afk_threshold_s > 0.0) || !self.afk_threshold_s.is_finite() {
            return Err(ConfigError::AfkThreshold(self.afk_threshold_s));
        }
        if !(self.feeder_ratio_threshold > 0.0 && self.feeder_ratio_threshold < 1.0) {
            return Err(ConfigError::RatioThreshold(self.feeder_ratio_threshold));
        }
        if self.feeder_count_threshold == 0 {
            return Err(ConfigError::CountThreshold);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathReason {
    TurretDiving,
    Overextending,
    DisguiseResistance,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeathVerdict {
    pub suspected: bool,
    pub reasons: BTreeSet<DeathReason>,
}

pub fn is_afk_actor(idle_time_s: f64, cfg: &DetectorConfig) -> bool {
    idle_time_s >= cfg.afk_threshold_s
}

/// Evaluates each feeder branch independently; a death may carry several reasons.
pub fn classify_death(d: &DeathRecord, cfg: &DetectorConfig) -> DeathVerdict {
    let mut reasons = BTreeSet::new();
    let dealt_nothing_to_heroes = d.player_to_hero == 0.0;

    if d.player_to_turret == 0.0 && dealt_nothing_to_heroes && d.hero_to_player == 0.0 && d.turret_to_player != 0.0 {
        reasons.insert(DeathReason::TurretDiving);
    }
    if dealt_nothing_to_heroes && d.hero_to_player != 0.0 {
        if d.dead_in_turret {
            reasons.insert(DeathReason::TurretDiving);
        } else if d.hero_number_to_player >= 3 {
            reasons.insert(DeathReason::Overextending);
        }
    }
    // Deaths with no hero or turret damage received leave the ratio undefined.
    let received = d.hero_to_player + d.turret_to_player;
    if received > 0.0 {
        let dealt = d.player_to_hero + d.player_to_turret;
        if dealt / received <= cfg.feeder_ratio_threshold {
            reasons.insert(DeathReason::DisguiseResistance);
        }
    }
    DeathVerdict {
        suspected: !reasons.is_empty(),
        reasons,
    }
}

pub fn suspected_death_count<'a>(deaths: impl IntoIterator<Item = &'a DeathRecord>, cfg: &DetectorConfig) -> u32 {
    deaths
        .into_iter()
        .filter(|d| classify_death(d, cfg).suspected)
        .count() as u32
}

pub fn is_feeder(deaths: &[DeathRecord], cfg: &DetectorConfig) -> bool {
    suspected_death_count(deaths, cfg) >= cfg.feeder_count_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowLevelReason {
    Afk,
    Feeder,
}

/// Detection outcome for one player-match; doubles as the report line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub match_id: String,
    pub player_id: String,
    pub low_level: bool,
    pub reasons: Vec<LowLevelReason>,
    pub idle_time_s: f64,
    pub suspected_death_count: u32,
    pub thresholds: DetectorConfig,
}

impl DetectionRow {
    pub fn key(&self) -> MemberKey {
        MemberKey::new(self.match_id.clone(), self.player_id.clone())
    }
}

pub fn detect_match(m: &MatchRecord, cfg: &DetectorConfig) -> Vec<DetectionRow> {
    m.players
        .iter()
        .map(|p| {
            let deaths: Vec<DeathRecord> = m.deaths_of(&p.player_id).collect();
            let suspected = suspected_death_count(&deaths, cfg);
            let mut reasons = Vec::new();
            if is_afk_actor(p.summary.idle_time_s, cfg) {
                reasons.push(LowLevelReason::Afk);
            }
            if suspected >= cfg.feeder_count_threshold {
                reasons.push(LowLevelReason::Feeder);
            }
            DetectionRow {
                match_id: m.match_id.clone(),
                player_id: p.player_id.clone(),
                low_level: !reasons.is_empty(),
                reasons,
                idle_time_s: p.summary.idle_time_s,
                suspected_death_count: suspected,
                thresholds: *cfg,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub low_level: Vec<DetectionRow>,
    pub remaining: Vec<MemberKey>,
}

/// Splits a corpus into low-level actors (with reasons) and everyone else.
pub fn filter_low_level<'a>(matches: impl IntoIterator<Item = &'a MatchRecord>, cfg: &DetectorConfig) -> Partition {
    let mut out = Partition::default();
    for m in matches {
        for row in detect_match(m, cfg) {
            if row.low_level {
                out.low_level.push(row);
            } else {
                out.remaining.push(row.key());
            }
        }
    }
    out.low_level.sort_by_key(DetectionRow::key);
    out.remaining.sort();
    out
}
