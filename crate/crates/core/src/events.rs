//! Per-minute event abstraction, priority events and team-combat detection.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{
    FrameStats, KeyEventKind, MatchRecord, Point, Team, FRAME_INTERVAL_S, MOVEMENT_INTERVAL_S,
};

/// Player event kinds in priority order: rank 0 is the most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TurretDestruction,
    DragonKilling,
    HeroKilling,
    Death,
    Assist,
    Poke,
    MonsterKilling,
    MinionKilling,
    Inaction,
}

impl EventKind {
    pub const COUNT: usize = 9;

    pub const ALL: [EventKind; EventKind::COUNT] = [
        EventKind::TurretDestruction,
        EventKind::DragonKilling,
        EventKind::HeroKilling,
        EventKind::Death,
        EventKind::Assist,
        EventKind::Poke,
        EventKind::MonsterKilling,
        EventKind::MinionKilling,
        EventKind::Inaction,
    ];

    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: usize) -> Option<EventKind> {
        EventKind::ALL.get(rank).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::TurretDestruction => "turret_destruction",
            EventKind::DragonKilling => "dragon_killing",
            EventKind::HeroKilling => "hero_killing",
            EventKind::Death => "death",
            EventKind::Assist => "assist",
            EventKind::Poke => "poke",
            EventKind::MonsterKilling => "monster_killing",
            EventKind::MinionKilling => "minion_killing",
            EventKind::Inaction => "inaction",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

/// A set of event kinds stored as a rank bitmask. Serialized as a list of names
/// in rank order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KindSet(u16);

impl KindSet {
    pub const EMPTY: KindSet = KindSet(0);

    pub fn from_bits(bits: u16) -> KindSet {
        KindSet(bits & 0x1ff)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, kind: EventKind) {
        self.0 |= 1 << kind.rank();
    }

    pub fn contains(self, kind: EventKind) -> bool {
        self.0 & (1 << kind.rank()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = EventKind> {
        EventKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    /// The lowest-rank member, if any.
    pub fn highest_priority(self) -> Option<EventKind> {
        if self.0 == 0 {
            None
        } else {
            EventKind::from_rank(self.0.trailing_zeros() as usize)
        }
    }
}

impl FromIterator<EventKind> for KindSet {
    fn from_iter<I: IntoIterator<Item = EventKind>>(iter: I) -> Self {
        let mut set = KindSet::EMPTY;
        for k in iter {
            set.insert(k);
        }
        set
    }
}

impl Serialize for KindSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for KindSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let kinds = Vec::<EventKind>::deserialize(deserializer)?;
        Ok(kinds.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteEvents {
    pub minute_index: u32,
    pub kinds_present: KindSet,
    pub poke_damage: f64,
    pub monster_economy: f64,
    pub minion_economy: f64,
    /// Objectives the player damaged without landing the final blow.
    pub contributed_only: KindSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamCombat {
    pub start_s: u32,
    pub end_s: u32,
    pub participants: BTreeSet<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventsError {
    #[error("unknown player {0}")]
    UnknownPlayer(String),
}

/// Frame index holding the cumulative state at the start of `minute`.
fn minute_bounds(m: &MatchRecord, minute: usize) -> (usize, usize) {
    let per_minute = (60 / FRAME_INTERVAL_S) as usize;
    let last = m.frames.len().saturating_sub(1);
    let start = (minute * per_minute).min(last);
    let end = ((minute + 1) * per_minute).min(last);
    (start, end)
}

fn delta(m: &MatchRecord, player: &str, start: usize, end: usize) -> (FrameStats, FrameStats) {
    (m.frame_stats(player, start), m.frame_stats(player, end))
}

/// Condenses one player's telemetry into one event set per minute.
pub fn abstract_minutes(m: &MatchRecord, player_id: &str) -> Result<Vec<MinuteEvents>, EventsError> {
    if m.player(player_id).is_none() {
        return Err(EventsError::UnknownPlayer(player_id.to_string()));
    }
    let minutes = m.minute_count();
    let mut out: Vec<MinuteEvents> = (0..minutes)
        .map(|minute| {
            let (start, end) = minute_bounds(m, minute);
            let (a, b) = delta(m, player_id, start, end);
            MinuteEvents {
                minute_index: minute as u32,
                kinds_present: KindSet::EMPTY,
                poke_damage: (b.damage_to_hero - a.damage_to_hero).max(0.0),
                monster_economy: (b.monster_gold - a.monster_gold).max(0.0),
                minion_economy: (b.minion_gold - a.minion_gold).max(0.0),
                contributed_only: KindSet::EMPTY,
            }
        })
        .collect();

    for e in &m.key_events {
        let minute = ((e.t / 60.0).floor() as usize).min(minutes.saturating_sub(1));
        let Some(row) = out.get_mut(minute) else { continue };
        let principal = e.principal == player_id;
        let assisted = e.assists.iter().any(|a| a == player_id);
        match e.kind {
            KeyEventKind::Death => {
                if principal {
                    row.kinds_present.insert(EventKind::Death);
                }
                if e.killer() == Some(player_id) {
                    row.kinds_present.insert(EventKind::HeroKilling);
                } else if assisted {
                    row.kinds_present.insert(EventKind::Assist);
                }
            }
            KeyEventKind::TurretDestroyed | KeyEventKind::DragonKilled | KeyEventKind::BaronKilled => {
                let kind = if e.kind == KeyEventKind::TurretDestroyed {
                    EventKind::TurretDestruction
                } else {
                    EventKind::DragonKilling
                };
                if principal {
                    row.kinds_present.insert(kind);
                } else if assisted {
                    row.kinds_present.insert(kind);
                    row.contributed_only.insert(kind);
                }
            }
        }
    }

    for row in &mut out {
        // A final blow in the same minute overrides an earlier contribution.
        for kind in [EventKind::TurretDestruction, EventKind::DragonKilling] {
            if row.contributed_only.contains(kind) && landed_final_blow(m, player_id, row.minute_index, kind) {
                row.contributed_only = KindSet::from_bits(row.contributed_only.bits() & !(1 << kind.rank()));
            }
        }
        if row.poke_damage > 0.0 {
            row.kinds_present.insert(EventKind::Poke);
        }
        if row.monster_economy > 0.0 {
            row.kinds_present.insert(EventKind::MonsterKilling);
        }
        if row.minion_economy > 0.0 {
            row.kinds_present.insert(EventKind::MinionKilling);
        }
        if row.kinds_present.is_empty() {
            row.kinds_present.insert(EventKind::Inaction);
        }
    }
    Ok(out)
}

fn landed_final_blow(m: &MatchRecord, player_id: &str, minute: u32, kind: EventKind) -> bool {
    m.key_events.iter().any(|e| {
        let matches_kind = match kind {
            EventKind::TurretDestruction => e.kind == KeyEventKind::TurretDestroyed,
            _ => matches!(e.kind, KeyEventKind::DragonKilled | KeyEventKind::BaronKilled),
        };
        matches_kind && e.principal == player_id && (e.t / 60.0).floor() as u32 == minute
    })
}

/// The highest-priority kind present in the minute.
pub fn priority_event(e: &MinuteEvents) -> EventKind {
    e.kinds_present.highest_priority().unwrap_or(EventKind::Inaction)
}

/// Per-minute priority events for one player.
pub fn priority_sequence(m: &MatchRecord, player_id: &str) -> Result<Vec<EventKind>, EventsError> {
    Ok(abstract_minutes(m, player_id)?.iter().map(priority_event).collect())
}

/// Team-combat detection constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombatRule {
    pub radius: f64,
    pub min_per_team: usize,
    /// Number of consecutive non-qualifying samples tolerated inside a combat.
    pub gap_tolerance: usize,
    pub min_span_s: u32,
}

impl Default for CombatRule {
    fn default() -> Self {
        CombatRule {
            radius: 0.12,
            min_per_team: 2,
            gap_tolerance: 1,
            min_span_s: 10,
        }
    }
}

/// Players in the qualifying groups at one movement sample, if any.
///
/// A group is `min_per_team` players from each team who all lie within the
/// radius of the group's centroid; the sample's participants are the union of
/// all such groups.
pub fn proximity_group(m: &MatchRecord, sample: usize, rule: &CombatRule) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    let Some(s) = m.movement.get(sample) else { return found };
    let side = |team: Team| -> Vec<(&str, Point)> {
        m.team_members(team)
            .filter_map(|p| s.per_player.get(&p.player_id).map(|pos| (p.player_id.as_str(), pos.pos)))
            .collect()
    };
    let blue = side(Team::Blue);
    let red = side(Team::Red);
    for b in combinations(&blue, rule.min_per_team) {
        for r in combinations(&red, rule.min_per_team) {
            let points: Vec<Point> = b.iter().chain(r.iter()).map(|(_, p)| *p).collect();
            let Some(c) = Point::centroid(&points) else { continue };
            if points.iter().all(|p| p.distance(c) <= rule.radius) {
                found.extend(b.iter().chain(r.iter()).map(|(id, _)| id.to_string()));
            }
        }
    }
    found
}

fn combinations<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Hero damage dealt by `players` over the 20 s frame covering time `t`.
fn covering_hero_damage(m: &MatchRecord, t: u32, players: &BTreeSet<String>) -> f64 {
    let last = m.frames.len().saturating_sub(1);
    if last == 0 {
        return 0.0;
    }
    let start = ((t / FRAME_INTERVAL_S) as usize).min(last - 1);
    players
        .iter()
        .map(|p| m.frame_stats(p, start + 1).damage_to_hero - m.frame_stats(p, start).damage_to_hero)
        .sum()
}

/// Detects team combats with the default rule.
pub fn detect_team_combats(m: &MatchRecord) -> Vec<TeamCombat> {
    detect_team_combats_with(m, &CombatRule::default())
}

pub fn detect_team_combats_with(m: &MatchRecord, rule: &CombatRule) -> Vec<TeamCombat> {
    let qualifying: Vec<Option<BTreeSet<String>>> = (0..m.movement.len())
        .map(|i| {
            let group = proximity_group(m, i, rule);
            if group.is_empty() {
                return None;
            }
            let t = m.movement[i].t;
            (covering_hero_damage(m, t, &group) > 0.0).then_some(group)
        })
        .collect();

    let mut combats = Vec::new();
    let mut current: Option<(usize, usize, BTreeSet<String>)> = None;
    for (i, q) in qualifying.iter().enumerate() {
        match (q, current.as_mut()) {
            (Some(group), Some((_, last, participants))) if i - *last <= rule.gap_tolerance + 1 => {
                *last = i;
                participants.extend(group.iter().cloned());
            }
            (Some(group), _) => {
                if let Some(done) = current.take() {
                    combats.extend(close_combat(m, done, rule));
                }
                current = Some((i, i, group.clone()));
            }
            (None, _) => {}
        }
    }
    if let Some(done) = current.take() {
        combats.extend(close_combat(m, done, rule));
    }
    combats
}

fn close_combat(
    m: &MatchRecord,
    (first, last, participants): (usize, usize, BTreeSet<String>),
    rule: &CombatRule,
) -> Option<TeamCombat> {
    let start_s = m.movement[first].t;
    let end_s = (m.movement[last].t + MOVEMENT_INTERVAL_S).min(m.duration_s);
    (end_s > start_s && end_s - start_s >= rule.min_span_s).then_some(TeamCombat {
        start_s,
        end_s,
        participants,
    })
}
