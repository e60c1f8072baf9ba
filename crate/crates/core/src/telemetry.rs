//! Canonical match telemetry model and the `actorlens/1` JSON schema.
//!
//! One match document carries all six data categories: player information,
//! match summary statistics, the key-event sequence, the 20 s cumulative time
//! series, the 10 s movement samples and the algorithmic derived stats (idle
//! time, healthy recalls, surrenders) that live inside the summary block.
//!
//! Map coordinates are normalized to the unit square with the blue base at the
//! `(0, 0)` corner and the red base at `(1, 1)`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "actorlens/1";
pub const PLAYERS_PER_MATCH: usize = 10;
pub const PLAYERS_PER_TEAM: usize = 5;
/// Spacing of cumulative time-series frames.
pub const FRAME_INTERVAL_S: u32 = 20;
/// Spacing of movement samples.
pub const MOVEMENT_INTERVAL_S: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Blue,
    Red,
}

impl Team {
    pub fn opponent(self) -> Team {
        match self {
            Team::Blue => Team::Red,
            Team::Red => Team::Blue,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Team::Blue => "blue",
            Team::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Top,
    Mid,
    Bottom,
    Jungle,
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BattleResult {
    Win,
    Loss,
}

/// A position on the normalized map. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn in_unit_square(self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn centroid(points: &[Point]) -> Option<Point> {
        if points.is_empty() {
            return None;
        }
        let n = points.len() as f64;
        let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Some(Point::new(sx / n, sy / n))
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Identifies one player in one match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemberKey {
    pub match_id: String,
    pub player_id: String,
}

impl MemberKey {
    pub fn new(match_id: impl Into<String>, player_id: impl Into<String>) -> Self {
        MemberKey {
            match_id: match_id.into(),
            player_id: player_id.into(),
        }
    }
}

impl fmt::Display for MemberKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.match_id, self.player_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerProfile {
    pub proficiency_level: u32,
    pub grade: u32,
    pub elo: f64,
}

/// Per-player match statistics, keyed on the wire by the exporter's feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummaryStats {
    #[serde(rename = "dmgtotal")]
    pub damage_total: f64,
    #[serde(rename = "dmgtohero")]
    pub damage_to_hero: f64,
    #[serde(rename = "towerhurt")]
    pub damage_to_turret: f64,
    #[serde(rename = "rcvdmgfromall")]
    pub received_from_all: f64,
    #[serde(rename = "rcvdmgfromhero")]
    pub received_from_hero: f64,
    #[serde(rename = "rcvdmgfromother")]
    pub received_from_other: f64,
    pub kills: u32,
    #[serde(rename = "die")]
    pub deaths: u32,
    #[serde(rename = "assistant")]
    pub assists: u32,
    #[serde(rename = "coin")]
    pub total_gold: f64,
    #[serde(rename = "playermonsterkillcoin")]
    pub monster_gold: f64,
    #[serde(rename = "moneyforkill")]
    pub kill_gold: f64,
    #[serde(rename = "playersoldierkillcoin")]
    pub minion_gold: f64,
    #[serde(rename = "killsoldiers")]
    pub minions_killed: u32,
    #[serde(rename = "battleresult")]
    pub battle_result: BattleResult,
    #[serde(rename = "surrendertimes")]
    pub surrender_times: u32,
    #[serde(rename = "healthyrecall")]
    pub healthy_recall: u32,
    #[serde(rename = "equiptotalbuy")]
    pub equipment_purchases: u32,
    #[serde(rename = "playeroffline")]
    pub offline_count: u32,
    #[serde(rename = "playerreconnection")]
    pub reconnect_count: u32,
    #[serde(rename = "skillusetimes")]
    pub skill_hits: u32,
    #[serde(rename = "skillmisstimes")]
    pub skill_misses: u32,
    #[serde(rename = "playerkilllittledragoncnt")]
    pub dragon_kills: u32,
    #[serde(rename = "playerkillbigdragoncnt")]
    pub baron_kills: u32,
    #[serde(rename = "killbluebuff")]
    pub blue_buff_kills: u32,
    #[serde(rename = "killredbuff")]
    pub red_buff_kills: u32,
    #[serde(rename = "triplekill")]
    pub triple_kills: u32,
    #[serde(rename = "fourkill")]
    pub quadra_kills: u32,
    #[serde(rename = "fivekill")]
    pub penta_kills: u32,
    #[serde(rename = "playervisiblewardcount")]
    pub visible_wards: u32,
    #[serde(rename = "idle_time")]
    pub idle_time_s: f64,
    pub report_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerMatch {
    pub player_id: String,
    pub team: Team,
    pub hero_id: String,
    pub hero_type: String,
    pub lane: Lane,
    pub profile: PlayerProfile,
    pub summary: MatchSummaryStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyEventKind {
    Death,
    TurretDestroyed,
    DragonKilled,
    BaronKilled,
}

/// Damage exchanged by the victim inside the exporter's death window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathDetail {
    pub p2h: f64,
    pub p2t: f64,
    pub h2p: f64,
    pub t2p: f64,
    pub hero_count: u32,
    pub in_turret: bool,
}

/// A key event. For deaths, `principal` is the victim and `assists` lists the
/// credited enemies, the first entry landing the killing blow (empty when the
/// victim was executed by a turret or monster). For objectives, `principal`
/// landed the final blow and `assists` damaged the objective without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub t: f64,
    pub kind: KeyEventKind,
    pub team: Team,
    pub principal: String,
    pub assists: Vec<String>,
    pub pos: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<DeathDetail>,
}

impl KeyEvent {
    pub fn killer(&self) -> Option<&str> {
        match self.kind {
            KeyEventKind::Death => self.assists.first().map(String::as_str),
            _ => None,
        }
    }
}

/// One death with the damage breakdown consumed by the feeder rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DeathRecord {
    pub victim: String,
    pub player_to_hero: f64,
    pub player_to_turret: f64,
    pub hero_to_player: f64,
    pub turret_to_player: f64,
    pub hero_number_to_player: u32,
    pub dead_in_turret: bool,
}

impl DeathRecord {
    pub fn from_detail(victim: impl Into<String>, d: &DeathDetail) -> Self {
        DeathRecord {
            victim: victim.into(),
            player_to_hero: d.p2h,
            player_to_turret: d.p2t,
            hero_to_player: d.h2p,
            turret_to_player: d.t2p,
            hero_number_to_player: d.hero_count,
            dead_in_turret: d.in_turret,
        }
    }
}

/// Cumulative per-player values at a frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameStats {
    pub gold: f64,
    pub kills: u32,
    pub deaths: u32,
    pub assists: u32,
    pub damage_to_hero: f64,
    pub damage_total: f64,
    pub received_damage: f64,
    pub minions_killed: u32,
    #[serde(rename = "playersoldierkillcoin")]
    pub minion_gold: f64,
    #[serde(rename = "playermonsterkillcoin")]
    pub monster_gold: f64,
}

impl FrameStats {
    /// Cumulative float fields paired with their wire names.
    pub fn float_fields(&self) -> [(&'static str, f64); 6] {
        [
            ("gold", self.gold),
            ("damage_to_hero", self.damage_to_hero),
            ("damage_total", self.damage_total),
            ("received_damage", self.received_damage),
            ("playersoldierkillcoin", self.minion_gold),
            ("playermonsterkillcoin", self.monster_gold),
        ]
    }

    pub fn count_fields(&self) -> [(&'static str, u32); 4] {
        [
            ("kills", self.kills),
            ("deaths", self.deaths),
            ("assists", self.assists),
            ("minions_killed", self.minions_killed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesFrame {
    pub i: u32,
    pub per_player: BTreeMap<String, FrameStats>,
}

impl TimeSeriesFrame {
    pub fn time_s(&self) -> u32 {
        self.i * FRAME_INTERVAL_S
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerPosition {
    pub pos: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementSample {
    pub t: u32,
    pub per_player: BTreeMap<String, PlayerPosition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub schema: String,
    pub match_id: String,
    /// Unix seconds at which the match ended; orders a player's history.
    pub ended_at: i64,
    pub duration_s: u32,
    pub players: Vec<PlayerMatch>,
    pub key_events: Vec<KeyEvent>,
    pub frames: Vec<TimeSeriesFrame>,
    pub movement: Vec<MovementSample>,
}

impl MatchRecord {
    pub fn player(&self, player_id: &str) -> Option<&PlayerMatch> {
        self.players.iter().find(|p| p.player_id == player_id)
    }

    pub fn team_of(&self, player_id: &str) -> Option<Team> {
        self.player(player_id).map(|p| p.team)
    }

    pub fn team_members(&self, team: Team) -> impl Iterator<Item = &PlayerMatch> {
        self.players.iter().filter(move |p| p.team == team)
    }

    /// Number of whole or partial minutes in the match.
    pub fn minute_count(&self) -> usize {
        (self.duration_s as usize).div_ceil(60)
    }

    /// Number of 20 s intervals covered by consecutive frames.
    pub fn interval_count(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn member_keys(&self) -> impl Iterator<Item = MemberKey> + '_ {
        self.players
            .iter()
            .map(|p| MemberKey::new(self.match_id.clone(), p.player_id.clone()))
    }

    /// The player's cumulative stats at frame `i`, zero if absent.
    pub fn frame_stats(&self, player_id: &str, i: usize) -> FrameStats {
        self.frames
            .get(i)
            .and_then(|f| f.per_player.get(player_id))
            .copied()
            .unwrap_or_default()
    }

    pub fn deaths_of<'a>(&'a self, player_id: &'a str) -> impl Iterator<Item = DeathRecord> + 'a {
        self.key_events.iter().filter_map(move |e| match (&e.kind, &e.death) {
            (KeyEventKind::Death, Some(d)) if e.principal == player_id => {
                Some(DeathRecord::from_detail(player_id, d))
            }
            _ => None,
        })
    }

    pub fn death_details_of<'a>(
        &'a self,
        player_id: &'a str,
    ) -> impl Iterator<Item = &'a DeathDetail> + 'a {
        self.key_events.iter().filter_map(move |e| match (&e.kind, &e.death) {
            (KeyEventKind::Death, Some(d)) if e.principal == player_id => Some(d),
            _ => None,
        })
    }

    pub fn position_at(&self, player_id: &str, sample: usize) -> Option<Point> {
        self.movement
            .get(sample)
            .and_then(|s| s.per_player.get(player_id))
            .map(|p| p.pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    SchemaVersion,
    PlayerCount,
    TeamSize,
    DuplicatePlayer,
    EmptyId,
    NegativeValue,
    NonFinite,
    DurationNonPositive,
    IdleExceedsDuration,
    ReceivedDamageInconsistent,
    EventOutOfRange,
    EventsUnsorted,
    MissingDeathDetail,
    UnexpectedDeathDetail,
    HeroCountWithoutDamage,
    UnknownPlayer,
    PositionOutOfBounds,
    FrameGap,
    FrameCount,
    NonDecreasing,
    MovementGap,
    MovementCount,
    MissingPlayerSeries,
}

/// One broken invariant, with a dotted path to the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("invariant violation at {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvariantViolation(Vec<Violation>),
}

impl ParseError {
    /// Path of the offending field, when one is known.
    pub fn path(&self) -> Option<&str> {
        match self {
            ParseError::MalformedDocument(_) => None,
            ParseError::SchemaViolation { path, .. } => Some(path),
            ParseError::InvariantViolation(v) => v.first().map(|v| v.path.as_str()),
        }
    }
}

/// Parses and validates one `actorlens/1` match document.
pub fn parse_match(document: &str) -> Result<MatchRecord, ParseError> {
    let value: serde_json::Value = serde_json::from_str(document)
        .map_err(|e| ParseError::MalformedDocument(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| ParseError::SchemaViolation {
        path: "$".into(),
        message: "expected a JSON object".into(),
    })?;
    match obj.get("schema").and_then(|s| s.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(ParseError::SchemaViolation {
                path: "schema".into(),
                message: format!("expected {SCHEMA_VERSION}, found {other}"),
            })
        }
        None => {
            return Err(ParseError::SchemaViolation {
                path: "schema".into(),
                message: "missing field".into(),
            })
        }
    }
    if let Some(players) = obj.get("players").and_then(|p| p.as_array()) {
        if players.len() != PLAYERS_PER_MATCH {
            return Err(ParseError::SchemaViolation {
                path: "players".into(),
                message: format!("expected {PLAYERS_PER_MATCH}, found {}", players.len()),
            });
        }
    }
    let record: MatchRecord = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ParseError::SchemaViolation {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    let violations = validate_match(&record);
    if violations.is_empty() {
        Ok(record)
    } else {
        Err(ParseError::InvariantViolation(violations))
    }
}

pub fn serialize_match(m: &MatchRecord) -> String {
    serde_json::to_string(m).expect("match records always serialize")
}

fn check_amount(out: &mut Vec<Violation>, path: String, v: f64) {
    if !v.is_finite() {
        out.push(Violation::new(ViolationCode::NonFinite, path, "value is not finite"));
    } else if v < 0.0 {
        out.push(Violation::new(ViolationCode::NegativeValue, path, "value is negative"));
    }
}

fn check_point(out: &mut Vec<Violation>, path: String, p: Point) {
    if !p.x.is_finite() || !p.y.is_finite() || !p.in_unit_square() {
        out.push(Violation::new(
            ViolationCode::PositionOutOfBounds,
            path,
            "position outside the unit square",
        ));
    }
}

/// Checks every record invariant. Empty iff the record is valid.
pub fn validate_match(m: &MatchRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.schema != SCHEMA_VERSION {
        out.push(Violation::new(
            ViolationCode::SchemaVersion,
            "schema",
            format!("expected {SCHEMA_VERSION}"),
        ));
    }
    if m.match_id.is_empty() {
        out.push(Violation::new(ViolationCode::EmptyId, "match_id", "empty identifier"));
    }
    if m.duration_s == 0 {
        out.push(Violation::new(
            ViolationCode::DurationNonPositive,
            "duration_s",
            "duration must be positive",
        ));
    }
    let duration = m.duration_s as f64;

    validate_players(m, duration, &mut out);
    let ids: HashSet<&str> = m.players.iter().map(|p| p.player_id.as_str()).collect();
    validate_events(m, duration, &ids, &mut out);
    validate_frames(m, &ids, &mut out);
    validate_movement(m, &ids, &mut out);
    out
}

fn validate_players(m: &MatchRecord, duration: f64, out: &mut Vec<Violation>) {
    if m.players.len() != PLAYERS_PER_MATCH {
        out.push(Violation::new(
            ViolationCode::PlayerCount,
            "players",
            format!("expected {PLAYERS_PER_MATCH}, found {}", m.players.len()),
        ));
    }
    for team in [Team::Blue, Team::Red] {
        let n = m.team_members(team).count();
        if n != PLAYERS_PER_TEAM {
            out.push(Violation::new(
                ViolationCode::TeamSize,
                "players",
                format!("team {} has {n} players, expected {PLAYERS_PER_TEAM}", team.as_str()),
            ));
        }
    }
    let mut seen = HashSet::new();
    for (i, p) in m.players.iter().enumerate() {
        let base = format!("players[{i}]");
        if p.player_id.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyId, format!("{base}.player_id"), "empty identifier"));
        }
        if p.hero_id.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyId, format!("{base}.hero_id"), "empty identifier"));
        }
        if !seen.insert(p.player_id.as_str()) {
            out.push(Violation::new(
                ViolationCode::DuplicatePlayer,
                format!("{base}.player_id"),
                format!("duplicate player {}", p.player_id),
            ));
        }
        check_amount(out, format!("{base}.profile.elo"), p.profile.elo);
        let s = &p.summary;
        let sbase = format!("{base}.summary");
        for (name, v) in [
            ("dmgtotal", s.damage_total),
            ("dmgtohero", s.damage_to_hero),
            ("towerhurt", s.damage_to_turret),
            ("rcvdmgfromall", s.received_from_all),
            ("rcvdmgfromhero", s.received_from_hero),
            ("rcvdmgfromother", s.received_from_other),
            ("coin", s.total_gold),
            ("playermonsterkillcoin", s.monster_gold),
            ("moneyforkill", s.kill_gold),
            ("playersoldierkillcoin", s.minion_gold),
            ("idle_time", s.idle_time_s),
        ] {
            check_amount(out, format!("{sbase}.{name}"), v);
        }
        if s.idle_time_s > duration {
            out.push(Violation::new(
                ViolationCode::IdleExceedsDuration,
                format!("{sbase}.idle_time"),
                "idle_time exceeds duration",
            ));
        }
        if s.received_from_all < s.received_from_hero {
            out.push(Violation::new(
                ViolationCode::ReceivedDamageInconsistent,
                format!("{sbase}.rcvdmgfromall"),
                "received damage from all is below received damage from heroes",
            ));
        }
    }
}

fn validate_events(m: &MatchRecord, duration: f64, ids: &HashSet<&str>, out: &mut Vec<Violation>) {
    let mut prev = f64::NEG_INFINITY;
    for (i, e) in m.key_events.iter().enumerate() {
        let base = format!("key_events[{i}]");
        if !e.t.is_finite() || e.t < 0.0 || e.t > duration {
            out.push(Violation::new(
                ViolationCode::EventOutOfRange,
                format!("{base}.t"),
                "timestamp outside the match",
            ));
        }
        if e.t < prev {
            out.push(Violation::new(
                ViolationCode::EventsUnsorted,
                format!("{base}.t"),
                "key events are not sorted by timestamp",
            ));
        }
        prev = prev.max(e.t);
        if !ids.contains(e.principal.as_str()) {
            out.push(Violation::new(
                ViolationCode::UnknownPlayer,
                format!("{base}.principal"),
                format!("unknown player {}", e.principal),
            ));
        }
        for (j, a) in e.assists.iter().enumerate() {
            if !ids.contains(a.as_str()) {
                out.push(Violation::new(
                    ViolationCode::UnknownPlayer,
                    format!("{base}.assists[{j}]"),
                    format!("unknown player {a}"),
                ));
            }
        }
        check_point(out, format!("{base}.pos"), e.pos);
        match (e.kind, &e.death) {
            (KeyEventKind::Death, None) => out.push(Violation::new(
                ViolationCode::MissingDeathDetail,
                format!("{base}.death"),
                "death event lacks death detail",
            )),
            (KeyEventKind::Death, Some(d)) => {
                for (name, v) in [("p2h", d.p2h), ("p2t", d.p2t), ("h2p", d.h2p), ("t2p", d.t2p)] {
                    check_amount(out, format!("{base}.death.{name}"), v);
                }
                if d.h2p == 0.0 && d.hero_count != 0 {
                    out.push(Violation::new(
                        ViolationCode::HeroCountWithoutDamage,
                        format!("{base}.death.hero_count"),
                        "hero_count must be 0 when no hero damage was received",
                    ));
                }
            }
            (_, Some(_)) => out.push(Violation::new(
                ViolationCode::UnexpectedDeathDetail,
                format!("{base}.death"),
                "only death events carry death detail",
            )),
            (_, None) => {}
        }
    }
}

fn validate_frames(m: &MatchRecord, ids: &HashSet<&str>, out: &mut Vec<Violation>) {
    let expected = (m.duration_s / FRAME_INTERVAL_S) as usize + 1;
    if m.frames.len() != expected {
        out.push(Violation::new(
            ViolationCode::FrameCount,
            "frames",
            format!("expected {expected} frames, found {}", m.frames.len()),
        ));
    }
    for (i, f) in m.frames.iter().enumerate() {
        let base = format!("frames[{i}]");
        if f.i as usize != i {
            out.push(Violation::new(
                ViolationCode::FrameGap,
                format!("{base}.i"),
                format!("expected interval index {i}, found {}", f.i),
            ));
        }
        check_series_players(out, &base, ids, f.per_player.keys());
        for (pid, stats) in &f.per_player {
            for (name, v) in stats.float_fields() {
                check_amount(out, format!("{base}.per_player.{pid}.{name}"), v);
            }
        }
        if i == 0 {
            continue;
        }
        let prev = &m.frames[i - 1];
        for (pid, stats) in &f.per_player {
            let Some(before) = prev.per_player.get(pid) else { continue };
            let floats = stats.float_fields().into_iter().zip(before.float_fields());
            for ((name, now), (_, was)) in floats {
                if now < was {
                    out.push(non_decreasing(&base, pid, name));
                }
            }
            let counts = stats.count_fields().into_iter().zip(before.count_fields());
            for ((name, now), (_, was)) in counts {
                if now < was {
                    out.push(non_decreasing(&base, pid, name));
                }
            }
        }
    }
}

fn non_decreasing(base: &str, pid: &str, field: &str) -> Violation {
    Violation::new(
        ViolationCode::NonDecreasing,
        format!("{base}.per_player.{pid}.{field}"),
        format!("{field} non-decreasing"),
    )
}

fn validate_movement(m: &MatchRecord, ids: &HashSet<&str>, out: &mut Vec<Violation>) {
    let expected = (m.duration_s / MOVEMENT_INTERVAL_S) as usize + 1;
    if m.movement.len() != expected {
        out.push(Violation::new(
            ViolationCode::MovementCount,
            "movement",
            format!("expected {expected} samples, found {}", m.movement.len()),
        ));
    }
    for (i, s) in m.movement.iter().enumerate() {
        let base = format!("movement[{i}]");
        if s.t as usize != i * MOVEMENT_INTERVAL_S as usize {
            out.push(Violation::new(
                ViolationCode::MovementGap,
                format!("{base}.t"),
                format!("expected t = {}", i * MOVEMENT_INTERVAL_S as usize),
            ));
        }
        check_series_players(out, &base, ids, s.per_player.keys());
        for (pid, p) in &s.per_player {
            check_point(out, format!("{base}.per_player.{pid}.pos"), p.pos);
        }
    }
}

fn check_series_players<'a>(
    out: &mut Vec<Violation>,
    base: &str,
    ids: &HashSet<&str>,
    keys: impl Iterator<Item = &'a String> + Clone,
) {
    for pid in keys.clone() {
        if !ids.contains(pid.as_str()) {
            out.push(Violation::new(
                ViolationCode::UnknownPlayer,
                format!("{base}.per_player.{pid}"),
                format!("unknown player {pid}"),
            ));
        }
    }
    let present: HashSet<&str> = keys.map(String::as_str).collect();
    for id in ids {
        if !present.contains(id) {
            out.push(Violation::new(
                ViolationCode::MissingPlayerSeries,
                format!("{base}.per_player.{id}"),
                format!("missing series for player {id}"),
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_serializes_as_pair() {
        let p = Point::new(0.25, 0.5);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0.25,0.5]");
        let back: Point = serde_json::from_str("[0.25,0.5]").unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn malformed_json_is_reported_as_such() {
        let err = parse_match("{\"schema\": ").unwrap_err();
        assert!(matches!(err, ParseError::MalformedDocument(_)));
    }

    #[test]
    fn wrong_schema_version_is_a_schema_violation() {
        let err = parse_match(r#"{"schema":"actorlens/0"}"#).unwrap_err();
        assert_eq!(err.path(), Some("schema"));
    }
}
