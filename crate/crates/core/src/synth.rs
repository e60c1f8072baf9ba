//! Synthetic match generation with scripted behavior archetypes.
//!
//! Each player follows a per-10 s activity timeline (farming, fighting, dead,
//! idle, wandering, diving an enemy turret...). All six telemetry categories are
//! derived from that timeline, so the stored summary, frames, key events and
//! movement are mutually consistent. Planted behaviors satisfy their defining
//! detector rule exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{
    BattleResult, DeathDetail, FrameStats, KeyEvent, KeyEventKind, Lane, MatchRecord, MatchSummaryStats,
    MovementSample, PlayerMatch, PlayerPosition, PlayerProfile, Point, Team, TimeSeriesFrame,
    FRAME_INTERVAL_S, MOVEMENT_INTERVAL_S, PLAYERS_PER_MATCH, SCHEMA_VERSION,
};

const TICK_S: u32 = MOVEMENT_INTERVAL_S;
const FIGHT_TICKS: usize = 3;
const MIN_DURATION_S: u32 = 600;
const MAX_DURATION_S: u32 = 2400;
const AFK_RULE_S: u32 = 120;
const FEEDER_RULE_COUNT: u32 = 3;
const BASE_ENDED_AT: i64 = 1_700_000_000;

const HERO_TYPES: [&str; 6] = ["tank", "fighter", "assassin", "mage", "marksman", "support"];
const HERO_POOL: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "archetype", rename_all = "snake_case")]
pub enum Archetype {
    NormalLaner,
    NormalJungler,
    Afk { idle_span_s: u32 },
    Feeder { suspected_deaths: u32 },
    DragonNoShow,
    BaseDefenseNoShow,
}

impl Archetype {
    fn is_high_level(self) -> bool {
        matches!(self, Archetype::DragonNoShow | Archetype::BaseDefenseNoShow)
    }

    fn is_normal(self) -> bool {
        matches!(self, Archetype::NormalLaner | Archetype::NormalJungler)
    }
}

/// Half-open window `[start_s, end_s)` of match time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_s: u32,
    pub end_s: u32,
}

/// Optional adjustments layered on top of an archetype, used to stage
/// hand-built scenarios.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tweaks {
    /// Spans spent wandering the home highland without farming or fighting.
    #[serde(default)]
    pub wander: Vec<TimeWindow>,
    /// Fixed report count instead of the archetype's random draw.
    #[serde(default)]
    pub reports: Option<u32>,
    /// Start of the afk idle block instead of a random placement.
    #[serde(default)]
    pub idle_start_s: Option<u32>,
    /// Scripted suspected deaths on top of the archetype's own.
    #[serde(default)]
    pub extra_suspected_deaths: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorScript {
    #[serde(flatten)]
    pub archetype: Archetype,
    pub seed: u64,
    #[serde(default)]
    pub tweaks: Tweaks,
}

impl BehaviorScript {
    pub fn new(archetype: Archetype, seed: u64) -> Self {
        BehaviorScript {
            archetype,
            seed,
            tweaks: Tweaks::default(),
        }
    }

    pub fn with_tweaks(mut self, tweaks: Tweaks) -> Self {
        self.tweaks = tweaks;
        self
    }

    fn suspected_deaths(&self) -> u32 {
        let own = match self.archetype {
            Archetype::Feeder { suspected_deaths } => suspected_deaths,
            _ => 0,
        };
        own + self.tweaks.extra_suspected_deaths
    }

    fn scripted_idle_s(&self) -> Option<u32> {
        match self.archetype {
            Archetype::Afk { idle_span_s } => Some(idle_span_s),
            _ => None,
        }
    }

    /// Ground-truth class implied by the script.
    pub fn true_class(&self) -> TrueClass {
        if self.scripted_idle_s().is_some_and(|s| s >= AFK_RULE_S) {
            TrueClass::LowLevelAfk
        } else if self.suspected_deaths() >= FEEDER_RULE_COUNT {
            TrueClass::LowLevelFeeder
        } else if self.archetype.is_normal() && self.tweaks.wander.is_empty() && self.suspected_deaths() == 0 {
            TrueClass::Normal
        } else {
            TrueClass::HighLevelActor
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueClass {
    Normal,
    LowLevelAfk,
    LowLevelFeeder,
    HighLevelActor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub match_id: String,
    pub player_id: String,
    pub true_class: TrueClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynthGroundTruth {
    pub rows: Vec<TruthRow>,
}

impl SynthGroundTruth {
    pub fn class_of(&self, match_id: &str, player_id: &str) -> Option<TrueClass> {
        self.rows
            .iter()
            .find(|r| r.match_id == match_id && r.player_id == player_id)
            .map(|r| r.true_class)
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad script: {0}")]
    BadScript(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One roster slot of a planned match.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub player_id: String,
    pub hero_id: String,
    pub script: BehaviorScript,
}

/// Everything needed to generate one match deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPlan {
    pub match_id: String,
    pub ended_at: i64,
    pub duration_s: u32,
    pub seed: u64,
    /// Slots 0..5 play blue, 5..10 red; within a team the slot order is
    /// top, jungle, mid, bottom, support.
    pub slots: Vec<Slot>,
}

impl MatchPlan {
    /// A plan with default identifiers `b1..b5`, `r1..r5` and heroes drawn from the seed.
    pub fn new(scripts: &[BehaviorScript], duration_s: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0xbeef));
        let mut heroes: Vec<usize> = (0..HERO_POOL).collect();
        heroes.shuffle(&mut rng);
        let slots = scripts
            .iter()
            .enumerate()
            .map(|(i, s)| Slot {
                player_id: if i < 5 { format!("b{}", i + 1) } else { format!("r{}", i - 4) },
                hero_id: hero_id(heroes[i % HERO_POOL]),
                script: s.clone(),
            })
            .collect();
        MatchPlan {
            match_id: format!("synth-{seed}"),
            ended_at: BASE_ENDED_AT + duration_s as i64,
            duration_s,
            seed,
            slots,
        }
    }
}

fn hero_id(i: usize) -> String {
    format!("h{:02}", i + 1)
}

pub fn hero_type_of(hero_id: &str) -> &'static str {
    let n: usize = hero_id.trim_start_matches('h').parse().unwrap_or(1);
    HERO_TYPES[(n.saturating_sub(1)) % HERO_TYPES.len()]
}

/// SplitMix64 finalizer over a pair, used to derive independent stream seeds.
fn splitmix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn generate_match(
    scripts: &[BehaviorScript],
    duration_s: u32,
    seed: u64,
) -> Result<(MatchRecord, SynthGroundTruth), SynthError> {
    if scripts.len() != PLAYERS_PER_MATCH {
        return Err(SynthError::BadScript(format!(
            "expected {PLAYERS_PER_MATCH} scripts, got {}",
            scripts.len()
        )));
    }
    generate_planned(&MatchPlan::new(scripts, duration_s, seed))
}

pub fn generate_planned(plan: &MatchPlan) -> Result<(MatchRecord, SynthGroundTruth), SynthError> {
    check_plan(plan)?;
    let mut sim = Sim::new(plan);
    sim.schedule()?;
    let record = sim.build();
    let truth = SynthGroundTruth {
        rows: plan
            .slots
            .iter()
            .map(|s| TruthRow {
                match_id: plan.match_id.clone(),
                player_id: s.player_id.clone(),
                true_class: s.script.true_class(),
            })
            .collect(),
    };
    Ok((record, truth))
}

fn check_plan(plan: &MatchPlan) -> Result<(), SynthError> {
    let bad = |m: String| Err(SynthError::BadScript(m));
    if plan.slots.len() != PLAYERS_PER_MATCH {
        return bad(format!("expected {PLAYERS_PER_MATCH} slots, got {}", plan.slots.len()));
    }
    if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&plan.duration_s) {
        return bad(format!(
            "duration {} outside [{MIN_DURATION_S}, {MAX_DURATION_S}]",
            plan.duration_s
        ));
    }
    let ids: BTreeSet<&str> = plan.slots.iter().map(|s| s.player_id.as_str()).collect();
    if ids.len() != PLAYERS_PER_MATCH || ids.contains("") {
        return bad("player ids must be distinct and non-empty".into());
    }
    for (i, slot) in plan.slots.iter().enumerate() {
        let s = &slot.script;
        if let Some(idle) = s.scripted_idle_s() {
            if idle > plan.duration_s / 2 {
                return bad(format!("slot {i}: idle span {idle}s exceeds half the match"));
            }
        }
        let k = s.suspected_deaths();
        if k as usize * 180 > plan.duration_s as usize {
            return bad(format!("slot {i}: {k} suspected deaths do not fit the match"));
        }
        if s.archetype.is_high_level() && k >= FEEDER_RULE_COUNT {
            return bad(format!("slot {i}: high-level archetype must stay below the feeder rule"));
        }
        for w in &s.tweaks.wander {
            if w.start_s >= w.end_s || w.end_s > plan.duration_s {
                return bad(format!("slot {i}: wander window {}..{} is invalid", w.start_s, w.end_s));
            }
        }
        if let Some(start) = s.tweaks.idle_start_s {
            if start == 0 || start + s.scripted_idle_s().unwrap_or(0) > plan.duration_s {
                return bad(format!("slot {i}: idle start {start} is invalid"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Map geometry (blue side; red positions mirror across the anti-diagonal).

const BLUE_BASE: Point = Point::new(0.04, 0.04);
const DRAGON_PIT: Point = Point::new(0.70, 0.30);
const BARON_PIT: Point = Point::new(0.30, 0.70);
const MID_RIVER: Point = Point::new(0.50, 0.50);
const BLUE_CAMPS: [Point; 3] = [Point::new(0.25, 0.30), Point::new(0.32, 0.14), Point::new(0.14, 0.36)];
/// Blue turrets per lane (top, mid, bottom), outer tier first.
const BLUE_TURRETS: [[Point; 3]; 3] = [
    [Point::new(0.06, 0.55), Point::new(0.06, 0.38), Point::new(0.08, 0.20)],
    [Point::new(0.30, 0.30), Point::new(0.22, 0.22), Point::new(0.15, 0.15)],
    [Point::new(0.55, 0.06), Point::new(0.38, 0.06), Point::new(0.20, 0.08)],
];
const BASE_DEFENSE_SPOT: Point = Point::new(0.16, 0.16);

fn side(team: Team, p: Point) -> Point {
    match team {
        Team::Blue => p,
        Team::Red => Point::new(1.0 - p.y, 1.0 - p.x),
    }
}

fn lane_anchor(team: Team, lane: Lane) -> Point {
    let p = match lane {
        Lane::Top => Point::new(0.06, 0.70),
        Lane::Mid => Point::new(0.40, 0.40),
        Lane::Bottom => Point::new(0.70, 0.06),
        Lane::Support => Point::new(0.66, 0.09),
        Lane::Jungle => BLUE_CAMPS[0],
    };
    side(team, p)
}

fn lane_of_slot(slot_in_team: usize) -> Lane {
    [Lane::Top, Lane::Jungle, Lane::Mid, Lane::Bottom, Lane::Support][slot_in_team]
}

fn turret_lane_index(lane: Lane) -> usize {
    match lane {
        Lane::Top => 0,
        Lane::Mid | Lane::Jungle => 1,
        Lane::Bottom | Lane::Support => 2,
    }
}

fn clamp_unit(p: Point) -> Point {
    Point::new(p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0))
}

fn jitter(rng: &mut ChaCha8Rng, p: Point, r: f64) -> Point {
    clamp_unit(Point::new(p.x + rng.gen_range(-r..=r), p.y + rng.gen_range(-r..=r)))
}

fn polar_jitter(rng: &mut ChaCha8Rng, p: Point, r: f64) -> Point {
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    let d = r * rng.gen_range(0.0f64..1.0).sqrt();
    clamp_unit(Point::new(p.x + d * a.cos(), p.y + d * a.sin()))
}

// ---------------------------------------------------------------------------
// Simulation.

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activity {
    Base,
    Farm,
    /// Farming jungle camps on the far side of the map.
    FarmAway,
    Recall,
    Idle,
    Wander,
    Fight(usize),
    Dive(usize),
    Objective(Point),
    Dead,
}

impl Activity {
    fn available(self) -> bool {
        matches!(self, Activity::Farm | Activity::Recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FightKind {
    Dragon,
    Baron,
    Skirmish,
    BaseDefense(Team),
}

#[derive(Debug, Clone)]
struct Fight {
    kind: FightKind,
    start: usize,
    location: Point,
}

#[derive(Debug, Clone, Copy)]
enum DiveKind {
    TurretPure,
    TurretUnderFire,
    Overextend,
    Disguise,
}

#[derive(Debug, Clone, Copy)]
struct Dive {
    death_tick: usize,
    kind: DiveKind,
    target: Point,
    from: Point,
}

#[derive(Debug, Clone, Copy, Default)]
struct Gain {
    minion_gold: f64,
    monster_gold: f64,
    kill_gold: f64,
    hero_damage: f64,
    farm_damage: f64,
    turret_damage: f64,
    received_hero: f64,
    received_other: f64,
    kills: u32,
    deaths: u32,
    assists: u32,
}

struct PlayerState {
    team: Team,
    lane: Lane,
    gold_rate: f64,
    poke_prob: f64,
    activity: Vec<Activity>,
    gains: Vec<Gain>,
    positions: Vec<Point>,
    dives: Vec<Dive>,
    healthy_recalls: u32,
    buffs: (u32, u32),
    rng: ChaCha8Rng,
}

struct Sim<'a> {
    plan: &'a MatchPlan,
    ticks: usize,
    rng: ChaCha8Rng,
    players: Vec<PlayerState>,
    fights: Vec<Fight>,
    events: Vec<KeyEvent>,
    /// Kills per (fight, killer) for multikill counting.
    fight_kills: BTreeMap<(usize, usize), u32>,
    objective_credit: Vec<(u32, u32)>,
    forced_loser: Option<Team>,
}

impl<'a> Sim<'a> {
    fn new(plan: &'a MatchPlan) -> Self {
        let ticks = (plan.duration_s / TICK_S) as usize;
        let players = plan
            .slots
            .iter()
            .enumerate()
            .map(|(i, slot)| {
                let team = if i < 5 { Team::Blue } else { Team::Red };
                let lane = lane_of_slot(i % 5);
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix(splitmix(plan.seed, i as u64 + 1), slot.script.seed));
                let gold_rate = rng.gen_range(150.0..=350.0);
                let poke_prob = match (slot.script.archetype, lane) {
                    (Archetype::DragonNoShow, _) => 0.0,
                    (_, Lane::Jungle) => 0.05,
                    _ => 0.1,
                };
                let mut activity = vec![Activity::Farm; ticks];
                activity[0] = Activity::Base;
                PlayerState {
                    team,
                    lane,
                    gold_rate,
                    poke_prob,
                    activity,
                    gains: vec![Gain::default(); ticks],
                    positions: vec![BLUE_BASE; ticks + 1],
                    dives: Vec::new(),
                    healthy_recalls: 0,
                    buffs: (0, 0),
                    rng,
                }
            })
            .collect();
        Sim {
            plan,
            ticks,
            rng: ChaCha8Rng::seed_from_u64(splitmix(plan.seed, 0)),
            players,
            fights: Vec::new(),
            events: Vec::new(),
            fight_kills: BTreeMap::new(),
            objective_credit: vec![(0, 0); PLAYERS_PER_MATCH],
            forced_loser: None,
        }
    }

    fn script(&self, p: usize) -> &BehaviorScript {
        &self.plan.slots[p].script
    }

    fn schedule(&mut self) -> Result<(), SynthError> {
        for p in 0..PLAYERS_PER_MATCH {
            self.schedule_idle(p);
            self.schedule_wander(p);
            self.schedule_recalls(p);
        }
        for p in 0..PLAYERS_PER_MATCH {
            self.schedule_dives(p)?;
        }
        self.schedule_fights();
        self.schedule_turrets();
        Ok(())
    }

    fn schedule_idle(&mut self, p: usize) {
        let ticks = self.ticks;
        let script = self.script(p).clone();
        let st = &mut self.players[p];
        let (start, len) = match script.scripted_idle_s() {
            Some(span) => {
                let len = span.div_ceil(TICK_S) as usize;
                let start = match script.tweaks.idle_start_s {
                    Some(s) => (s / TICK_S) as usize,
                    None => st.rng.gen_range(6..=(ticks / 2).max(7)),
                };
                (start, len)
            }
            None => (1, st.rng.gen_range(0..=4usize)),
        };
        for a in st.activity.iter_mut().skip(start).take(len) {
            *a = Activity::Idle;
        }
    }

    fn schedule_wander(&mut self, p: usize) {
        let windows = self.script(p).tweaks.wander.clone();
        let st = &mut self.players[p];
        for w in windows {
            let lo = (w.start_s / TICK_S) as usize;
            let hi = (w.end_s.div_ceil(TICK_S) as usize).min(st.activity.len());
            for a in &mut st.activity[lo..hi] {
                if *a != Activity::Idle {
                    *a = Activity::Wander;
                }
            }
        }
    }

    fn schedule_recalls(&mut self, p: usize) {
        let ticks = self.ticks;
        let st = &mut self.players[p];
        let mut k = st.rng.gen_range(24..36usize);
        while k < ticks.saturating_sub(2) {
            if st.activity[k] == Activity::Farm {
                st.activity[k] = Activity::Recall;
                if st.rng.gen_bool(0.6) {
                    st.healthy_recalls += 1;
                }
            }
            k += st.rng.gen_range(24..36usize);
        }
    }

    fn respawn_ticks(tick: usize) -> usize {
        2 + tick / 36
    }

    fn schedule_dives(&mut self, p: usize) -> Result<(), SynthError> {
        let k = self.script(p).suspected_deaths() as usize;
        if k == 0 {
            return Ok(());
        }
        let team = self.players[p].team;
        let lane = self.players[p].lane;
        let lo = 6usize;
        let hi = self.ticks.saturating_sub(10);
        let seg = (hi - lo) / k;
        let kinds = [DiveKind::TurretPure, DiveKind::TurretUnderFire, DiveKind::Overextend, DiveKind::Disguise];
        for j in 0..k {
            let seg_lo = lo + j * seg + 2;
            let seg_hi = lo + (j + 1) * seg;
            let fits = |acts: &[Activity], d: usize| {
                let end = (d + Self::respawn_ticks(d)).min(acts.len() - 1);
                d >= 2 && acts[d - 2..=end].iter().all(|a| *a == Activity::Farm)
            };
            let candidates: Vec<usize> = (seg_lo..seg_hi).filter(|&d| fits(&self.players[p].activity, d)).collect();
            let Some(&death_tick) = candidates.choose(&mut self.players[p].rng) else {
                return Err(SynthError::BadScript(format!(
                    "no room for scripted death {} of player {}",
                    j + 1,
                    self.plan.slots[p].player_id
                )));
            };
            let kind = kinds[j % kinds.len()];
            let enemy = team.opponent();
            let target = match kind {
                DiveKind::TurretPure | DiveKind::TurretUnderFire => {
                    side(enemy, BLUE_TURRETS[turret_lane_index(lane)][0])
                }
                DiveKind::Overextend => side(enemy, BLUE_CAMPS[1]),
                DiveKind::Disguise => MID_RIVER,
            };
            let dive = Dive {
                death_tick,
                kind,
                target,
                from: lane_anchor(team, lane),
            };
            let st = &mut self.players[p];
            for t in death_tick - 2..=death_tick {
                st.activity[t] = Activity::Dive(st.dives.len());
            }
            let end = (death_tick + Self::respawn_ticks(death_tick)).min(self.ticks - 1);
            for a in &mut st.activity[death_tick + 1..=end] {
                *a = Activity::Dead;
            }
            st.dives.push(dive);
        }
        Ok(())
    }

    fn fight_plan(&self) -> Vec<(FightKind, usize, Point)> {
        let mut plan = Vec::new();
        let last_start = self.ticks.saturating_sub(FIGHT_TICKS + 3);
        let base_fight = (0..PLAYERS_PER_MATCH)
            .find(|&p| self.script(p).archetype == Archetype::BaseDefenseNoShow)
            .map(|p| self.players[p].team);
        let base_start = self.ticks.saturating_sub(9);
        let mut t = 30usize;
        let mut dragon = true;
        while t <= last_start {
            let kind = if dragon {
                FightKind::Dragon
            } else if t * TICK_S as usize >= 1200 {
                FightKind::Baron
            } else {
                FightKind::Skirmish
            };
            let loc = match kind {
                FightKind::Dragon => DRAGON_PIT,
                FightKind::Baron => BARON_PIT,
                _ => MID_RIVER,
            };
            let clashes = base_fight.is_some() && t + FIGHT_TICKS + 6 > base_start;
            if !clashes {
                plan.push((kind, t, loc));
            }
            // Dragon fights start every 270 s; skirmishes fall halfway between.
            t += if dragon { 13 } else { 14 };
            dragon = !dragon;
        }
        if let Some(team) = base_fight {
            plan.push((FightKind::BaseDefense(team), base_start, side(team, BASE_DEFENSE_SPOT)));
        }
        plan
    }

    fn excluded_from(&self, p: usize, kind: FightKind) -> bool {
        let s = self.script(p);
        s.archetype == Archetype::DragonNoShow
            || s.suspected_deaths() > 0
            || (s.archetype == Archetype::BaseDefenseNoShow && matches!(kind, FightKind::BaseDefense(_)))
    }

    fn schedule_fights(&mut self) {
        for (kind, start, location) in self.fight_plan() {
            let window = start..start + FIGHT_TICKS;
            let mut teams: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for p in 0..PLAYERS_PER_MATCH {
                if self.excluded_from(p, kind) {
                    continue;
                }
                if window.clone().all(|t| self.players[p].activity[t].available()) {
                    teams[(self.players[p].team == Team::Red) as usize].push(p);
                }
            }
            if teams.iter().any(|t| t.len() < 2) {
                continue;
            }
            for side_players in &mut teams {
                side_players.shuffle(&mut self.rng);
                let n = self.rng.gen_range(3..=5usize).min(side_players.len());
                side_players.truncate(n);
                side_players.sort_unstable();
            }
            let forced = self.forced_loser_for(kind);
            let loser = forced.unwrap_or(if self.rng.gen_bool(0.5) { Team::Blue } else { Team::Red });
            let id = self.fights.len();
            let participants: Vec<usize> = teams.concat();
            for &p in &participants {
                for t in window.clone() {
                    self.players[p].activity[t] = Activity::Fight(id);
                }
            }
            self.fights.push(Fight {
                kind,
                start,
                location,
            });
            self.resolve_fight(id, loser, &teams);
        }
    }

    fn forced_loser_for(&mut self, kind: FightKind) -> Option<Team> {
        match kind {
            FightKind::BaseDefense(team) => {
                self.forced_loser = Some(team);
                Some(team)
            }
            FightKind::Dragon => (0..PLAYERS_PER_MATCH)
                .find(|&p| self.script(p).archetype == Archetype::DragonNoShow)
                .map(|p| self.players[p].team),
            _ => None,
        }
    }

    fn resolve_fight(&mut self, id: usize, loser: Team, teams: &[Vec<usize>; 2]) {
        let start = self.fights[id].start;
        let (losers, winners) = match loser {
            Team::Blue => (&teams[0], &teams[1]),
            Team::Red => (&teams[1], &teams[0]),
        };
        let loser_deaths = self.rng.gen_range(1..=2usize).min(losers.len());
        let winner_deaths = usize::from(self.rng.gen_bool(0.3)).min(winners.len() - 1);
        let mut victims: Vec<(usize, bool)> = Vec::new();
        let mut pool = losers.clone();
        pool.shuffle(&mut self.rng);
        victims.extend(pool.into_iter().take(loser_deaths).map(|v| (v, true)));
        let mut pool = winners.clone();
        pool.shuffle(&mut self.rng);
        victims.extend(pool.into_iter().take(winner_deaths).map(|v| (v, false)));

        let mut dead_at: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &(victim, _)) in victims.iter().enumerate() {
            let tick = start + 1 + (i % 2);
            dead_at.insert(victim, tick);
        }
        let mut ordered: Vec<(usize, usize)> = dead_at.iter().map(|(&v, &t)| (t, v)).collect();
        ordered.sort_unstable();
        for (tick, victim) in ordered {
            let victim_team = self.players[victim].team;
            let enemies: Vec<usize> = if victim_team == loser { winners.clone() } else { losers.clone() };
            let alive: Vec<usize> = enemies
                .iter()
                .copied()
                .filter(|e| dead_at.get(e).is_none_or(|&t| t > tick))
                .collect();
            let Some(&killer) = alive.choose(&mut self.rng) else { continue };
            let mut assists: Vec<usize> = alive.iter().copied().filter(|&e| e != killer).collect();
            assists.sort_unstable();
            let h2p = self.rng.gen_range(400.0f64..1200.0).round();
            let p2h = (h2p * self.rng.gen_range(0.6..1.5)).round();
            let detail = DeathDetail {
                p2h,
                p2t: 0.0,
                h2p,
                t2p: 0.0,
                hero_count: enemies.len() as u32,
                in_turret: false,
            };
            let pos = self.fights[id].location;
            self.record_kill(victim, killer, &assists, tick, detail, pos);
            *self.fight_kills.entry((id, killer)).or_default() += 1;
            let end = (tick + Self::respawn_ticks(tick)).min(self.ticks - 1);
            let st = &mut self.players[victim];
            for a in &mut st.activity[tick + 1..=end] {
                *a = Activity::Dead;
            }
        }

        let objective = match self.fights[id].kind {
            FightKind::Dragon => Some(KeyEventKind::DragonKilled),
            FightKind::Baron => Some(KeyEventKind::BaronKilled),
            _ => None,
        };
        if let Some(kind) = objective {
            let tick = start + FIGHT_TICKS - 1;
            let alive: Vec<usize> = winners
                .iter()
                .copied()
                .filter(|w| !dead_at.contains_key(w))
                .collect();
            if let Some(&principal) = alive.choose(&mut self.rng) {
                let assists: Vec<usize> = alive.iter().copied().filter(|&w| w != principal).collect();
                for &p in alive.iter() {
                    let credit = &mut self.objective_credit[p];
                    if kind == KeyEventKind::DragonKilled {
                        credit.0 += 1;
                    } else {
                        credit.1 += 1;
                    }
                    self.players[p].gains[tick].monster_gold += if p == principal { 150.0 } else { 75.0 };
                }
                let pos = self.fights[id].location;
                self.push_event(tick, 8, kind, principal, &assists, pos, None);
            }
        }
    }

    fn record_kill(&mut self, victim: usize, killer: usize, assists: &[usize], tick: usize, detail: DeathDetail, pos: Point) {
        let mut credited = vec![killer];
        credited.extend_from_slice(assists);
        self.players[victim].gains[tick].deaths += 1;
        self.players[killer].gains[tick].kills += 1;
        self.players[killer].gains[tick].kill_gold += 300.0;
        for &a in assists {
            self.players[a].gains[tick].assists += 1;
            self.players[a].gains[tick].kill_gold += 100.0;
        }
        self.push_event(tick, 5, KeyEventKind::Death, victim, &credited, pos, Some(detail));
    }

    #[allow(clippy::too_many_arguments)]
    fn push_event(
        &mut self,
        tick: usize,
        offset_s: u32,
        kind: KeyEventKind,
        principal: usize,
        assists: &[usize],
        pos: Point,
        death: Option<DeathDetail>,
    ) {
        let id = |p: usize| self.plan.slots[p].player_id.clone();
        self.events.push(KeyEvent {
            t: (tick as u32 * TICK_S + offset_s) as f64,
            kind,
            team: self.players[principal].team,
            principal: id(principal),
            assists: assists.iter().map(|&a| id(a)).collect(),
            pos,
            death,
        });
    }

    fn schedule_turrets(&mut self) {
        let mut tiers = [[0usize; 3]; 2];
        let mut t = 54usize;
        while t + 2 < self.ticks {
            let team = if self.rng.gen_bool(0.5) { Team::Blue } else { Team::Red };
            let lane = [Lane::Top, Lane::Mid, Lane::Bottom][self.rng.gen_range(0..3usize)];
            let li = turret_lane_index(lane);
            let ti = (team == Team::Red) as usize;
            let principal = (0..PLAYERS_PER_MATCH)
                .find(|&p| self.players[p].team == team && self.players[p].lane == lane);
            if let Some(principal) = principal {
                let tier = tiers[ti][li];
                if tier < 3 && self.players[principal].activity[t] == Activity::Farm {
                    tiers[ti][li] += 1;
                    let pos = side(team.opponent(), BLUE_TURRETS[li][tier]);
                    let helpers: Vec<usize> = (0..PLAYERS_PER_MATCH)
                        .filter(|&p| {
                            p != principal
                                && self.players[p].team == team
                                && (self.players[p].lane == Lane::Jungle
                                    || (lane == Lane::Bottom && self.players[p].lane == Lane::Support))
                                && self.players[p].activity[t] == Activity::Farm
                        })
                        .collect();
                    for &p in std::iter::once(&principal).chain(helpers.iter()) {
                        self.players[p].activity[t] = Activity::Objective(pos);
                        let dmg = if p == principal { 1200.0 } else { 400.0 };
                        self.players[p].gains[t].turret_damage += dmg;
                        self.players[p].gains[t].kill_gold += if p == principal { 150.0 } else { 50.0 };
                    }
                    self.push_event(t, 6, KeyEventKind::TurretDestroyed, principal, &helpers, pos, None);
                }
            }
            t += self.rng.gen_range(20..30usize);
        }
    }

    fn dragon_fight_ticks(&self) -> BTreeSet<usize> {
        self.fights
            .iter()
            .filter(|f| f.kind == FightKind::Dragon)
            .flat_map(|f| f.start..f.start + FIGHT_TICKS)
            .collect()
    }

    fn base_fight_ticks(&self) -> BTreeSet<usize> {
        self.fights
            .iter()
            .filter(|f| matches!(f.kind, FightKind::BaseDefense(_)))
            .flat_map(|f| f.start..f.start + FIGHT_TICKS)
            .collect()
    }

    /// Fills per-tick gains and positions from the activity timelines.
    fn simulate(&mut self) {
        let dragon_ticks = self.dragon_fight_ticks();
        let base_ticks = self.base_fight_ticks();
        let fights = self.fights.clone();
        let mut dive_events = Vec::new();
        for p in 0..PLAYERS_PER_MATCH {
            let archetype = self.script(p).archetype;
            let team = self.players[p].team;
            let enemies: Vec<usize> = (0..PLAYERS_PER_MATCH).filter(|&e| self.players[e].team != team).collect();
            let st = &mut self.players[p];
            let home = side(team, BLUE_BASE);
            st.positions[0] = jitter(&mut st.rng, home, 0.01);
            let per_tick = st.gold_rate / 6.0;
            for t in 0..self.ticks {
                if archetype == Archetype::BaseDefenseNoShow && base_ticks.contains(&t) && st.activity[t] == Activity::Farm {
                    st.activity[t] = Activity::FarmAway;
                }
                let activity = st.activity[t];
                let mut g = st.gains[t];
                let pos = match activity {
                    Activity::Base | Activity::Recall | Activity::Idle | Activity::Dead => jitter(&mut st.rng, home, 0.01),
                    Activity::Wander => {
                        let p = Point::new(st.rng.gen_range(0.03..0.24), st.rng.gen_range(0.03..0.24));
                        side(team, p)
                    }
                    Activity::Farm | Activity::FarmAway => {
                        let jungle = st.lane == Lane::Jungle || activity == Activity::FarmAway;
                        let rate = per_tick * st.rng.gen_range(0.8..1.2);
                        if jungle {
                            g.monster_gold += rate.round();
                            g.received_other += st.rng.gen_range(50.0f64..150.0).round();
                            if t % 30 == 0 {
                                if (t / 30) % 2 == 0 {
                                    st.buffs.0 += 1;
                                } else {
                                    st.buffs.1 += 1;
                                }
                            }
                        } else {
                            let share = if st.lane == Lane::Support { 0.6 } else { 1.0 };
                            g.minion_gold += (rate * share).round();
                            g.received_other += st.rng.gen_range(0.0f64..60.0).round();
                        }
                        g.farm_damage += st.rng.gen_range(200.0f64..400.0).round();
                        if st.rng.gen_bool(st.poke_prob) {
                            g.hero_damage += st.rng.gen_range(30.0f64..150.0).round();
                            g.received_hero += st.rng.gen_range(30.0f64..150.0).round();
                        }
                        let anchor = if activity == Activity::FarmAway {
                            side(team.opponent(), BLUE_CAMPS[(t / 3) % 3])
                        } else if st.lane == Lane::Jungle {
                            side(team, BLUE_CAMPS[(t / 3) % 3])
                        } else {
                            lane_anchor(team, st.lane)
                        };
                        let anchor = if archetype == Archetype::DragonNoShow
                            && dragon_ticks.contains(&t)
                            && anchor.distance(DRAGON_PIT) < 0.4
                        {
                            lane_anchor(team, Lane::Top)
                        } else {
                            anchor
                        };
                        jitter(&mut st.rng, anchor, 0.02)
                    }
                    Activity::Fight(id) => {
                        g.hero_damage += st.rng.gen_range(150.0f64..450.0).round();
                        g.received_hero += st.rng.gen_range(150.0f64..450.0).round();
                        polar_jitter(&mut st.rng, fights[id].location, 0.035)
                    }
                    Activity::Objective(at) => {
                        g.received_other += st.rng.gen_range(100.0f64..300.0).round();
                        jitter(&mut st.rng, at, 0.01)
                    }
                    Activity::Dive(i) => {
                        let dive = st.dives[i];
                        let step = 3 - (dive.death_tick - t);
                        let f = step as f64 / 3.0;
                        let at = Point::new(
                            dive.from.x + (dive.target.x - dive.from.x) * f,
                            dive.from.y + (dive.target.y - dive.from.y) * f,
                        );
                        if t == dive.death_tick {
                            let detail = dive_detail(&mut st.rng, dive.kind);
                            g.hero_damage += detail.p2h;
                            g.turret_damage += detail.p2t;
                            g.received_hero += detail.h2p;
                            g.received_other += detail.t2p;
                            g.deaths += 1;
                            let killers: Vec<usize> = if detail.h2p > 0.0 {
                                let mut e = enemies.clone();
                                e.shuffle(&mut st.rng);
                                e.truncate(detail.hero_count as usize);
                                e
                            } else {
                                Vec::new()
                            };
                            dive_events.push((p, t, killers, detail, dive.target));
                        }
                        clamp_unit(at)
                    }
                };
                st.gains[t] = g;
                st.positions[t] = pos;
            }
            let last = self.ticks;
            st.positions[last] = st.positions[last - 1];
        }
        for (victim, tick, killers, detail, pos) in dive_events {
            if let Some((&killer, rest)) = killers.split_first() {
                self.players[killer].gains[tick].kills += 1;
                self.players[killer].gains[tick].kill_gold += 300.0;
                for &a in rest {
                    self.players[a].gains[tick].assists += 1;
                    self.players[a].gains[tick].kill_gold += 100.0;
                }
            }
            // Deaths were already counted on the victim while simulating.
            self.push_event(tick, 5, KeyEventKind::Death, victim, &killers, pos, Some(detail));
        }
    }

    fn build(mut self) -> MatchRecord {
        self.simulate();
        self.events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let plan = self.plan;
        let ids: Vec<String> = plan.slots.iter().map(|s| s.player_id.clone()).collect();

        // Cumulative sums per tick boundary: cum[k] covers ticks 0..k.
        let cumulative: Vec<Vec<Gain>> = self
            .players
            .iter()
            .map(|st| {
                let mut acc = Gain::default();
                let mut out = vec![acc];
                for g in &st.gains {
                    acc = add_gain(acc, *g);
                    out.push(acc);
                }
                out
            })
            .collect();

        let frame_count = (plan.duration_s / FRAME_INTERVAL_S) as usize + 1;
        let ticks_per_frame = (FRAME_INTERVAL_S / TICK_S) as usize;
        let frames = (0..frame_count)
            .map(|i| TimeSeriesFrame {
                i: i as u32,
                per_player: ids
                    .iter()
                    .enumerate()
                    .map(|(p, id)| (id.clone(), frame_from(&cumulative[p][i * ticks_per_frame])))
                    .collect(),
            })
            .collect();

        let movement = (0..=self.ticks)
            .map(|k| MovementSample {
                t: k as u32 * TICK_S,
                per_player: ids
                    .iter()
                    .enumerate()
                    .map(|(p, id)| (id.clone(), PlayerPosition { pos: self.players[p].positions[k] }))
                    .collect(),
            })
            .collect();

        let totals: Vec<Gain> = cumulative.iter().map(|c| *c.last().expect("non-empty")).collect();
        let team_gold = |team: Team| -> f64 {
            (0..PLAYERS_PER_MATCH)
                .filter(|&p| self.players[p].team == team)
                .map(|p| gold_of(&totals[p]))
                .sum()
        };
        let winner = match self.forced_loser {
            Some(loser) => loser.opponent(),
            None if team_gold(Team::Blue) >= team_gold(Team::Red) => Team::Blue,
            None => Team::Red,
        };

        let mut multikills = [[0u32; 3]; PLAYERS_PER_MATCH];
        for (&(_, killer), &n) in &self.fight_kills {
            if (3..=5).contains(&n) {
                multikills[killer][(n - 3) as usize] += 1;
            }
        }

        let mut players = Vec::with_capacity(PLAYERS_PER_MATCH);
        for p in 0..PLAYERS_PER_MATCH {
            let slot = &plan.slots[p];
            let script = &slot.script;
            let st = &mut self.players[p];
            let g = totals[p];
            let idle_ticks = st.activity.iter().filter(|a| **a == Activity::Idle).count() as u32;
            let idle_time_s = match script.scripted_idle_s() {
                Some(span) => span as f64,
                None => (idle_ticks * TICK_S) as f64,
            };
            let active_ticks = st
                .activity
                .iter()
                .filter(|a| matches!(a, Activity::Farm | Activity::FarmAway | Activity::Fight(_) | Activity::Objective(_)))
                .count() as u32;
            let skill_hits = active_ticks * 2 + st.rng.gen_range(0..10);
            let normal = script.archetype.is_normal() && script.tweaks.wander.is_empty() && script.suspected_deaths() == 0;
            let reports = script.tweaks.reports.unwrap_or_else(|| {
                if normal {
                    u32::from(st.rng.gen_bool(0.2))
                } else {
                    st.rng.gen_range(2..=6)
                }
            });
            let afk_offline = script.scripted_idle_s().is_some_and(|s| s >= AFK_RULE_S);
            let gold = gold_of(&g);
            let damage_total = g.hero_damage + g.farm_damage + g.turret_damage;
            let received_from_all = g.received_hero + g.received_other;
            let (dragons, barons) = self.objective_credit[p];
            let summary = MatchSummaryStats {
                damage_total,
                damage_to_hero: g.hero_damage,
                damage_to_turret: g.turret_damage,
                received_from_all,
                received_from_hero: g.received_hero,
                received_from_other: g.received_other,
                kills: g.kills,
                deaths: g.deaths,
                assists: g.assists,
                total_gold: gold,
                monster_gold: g.monster_gold,
                kill_gold: g.kill_gold,
                minion_gold: g.minion_gold,
                minions_killed: (g.minion_gold / 30.0).floor() as u32,
                battle_result: if st.team == winner { BattleResult::Win } else { BattleResult::Loss },
                surrender_times: if normal { u32::from(st.rng.gen_bool(0.1)) } else { st.rng.gen_range(0..=2) },
                healthy_recall: st.healthy_recalls,
                equipment_purchases: (gold / 450.0).floor() as u32,
                offline_count: u32::from(afk_offline),
                reconnect_count: u32::from(afk_offline),
                skill_hits,
                skill_misses: skill_hits / st.rng.gen_range(3..8),
                dragon_kills: dragons,
                baron_kills: barons,
                blue_buff_kills: st.buffs.0,
                red_buff_kills: st.buffs.1,
                triple_kills: multikills[p][0],
                quadra_kills: multikills[p][1],
                penta_kills: multikills[p][2],
                visible_wards: if st.lane == Lane::Support { st.rng.gen_range(15..30) } else { st.rng.gen_range(3..15) },
                idle_time_s,
                report_count: reports,
            };
            players.push(PlayerMatch {
                player_id: slot.player_id.clone(),
                team: st.team,
                hero_id: slot.hero_id.clone(),
                hero_type: hero_type_of(&slot.hero_id).to_string(),
                lane: st.lane,
                profile: PlayerProfile {
                    proficiency_level: st.rng.gen_range(1..=10),
                    grade: st.rng.gen_range(1..=30),
                    elo: st.rng.gen_range(1000.0f64..2500.0).round(),
                },
                summary,
            });
        }

        MatchRecord {
            schema: SCHEMA_VERSION.to_string(),
            match_id: plan.match_id.clone(),
            ended_at: plan.ended_at,
            duration_s: plan.duration_s,
            players,
            key_events: self.events,
            frames,
            movement,
        }
    }
}

fn dive_detail(rng: &mut ChaCha8Rng, kind: DiveKind) -> DeathDetail {
    let r = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.gen_range(lo..hi).round();
    match kind {
        DiveKind::TurretPure => DeathDetail {
            p2h: 0.0,
            p2t: 0.0,
            h2p: 0.0,
            t2p: r(rng, 300.0, 900.0),
            hero_count: 0,
            in_turret: true,
        },
        DiveKind::TurretUnderFire => DeathDetail {
            p2h: 0.0,
            p2t: r(rng, 0.0, 200.0),
            h2p: r(rng, 300.0, 800.0),
            t2p: r(rng, 200.0, 600.0),
            hero_count: rng.gen_range(1..=2),
            in_turret: true,
        },
        DiveKind::Overextend => DeathDetail {
            p2h: 0.0,
            p2t: 0.0,
            h2p: r(rng, 600.0, 1400.0),
            t2p: 0.0,
            hero_count: rng.gen_range(3..=4),
            in_turret: false,
        },
        DiveKind::Disguise => DeathDetail {
            p2h: r(rng, 50.0, 150.0),
            p2t: 0.0,
            h2p: r(rng, 800.0, 1500.0),
            t2p: r(rng, 0.0, 200.0),
            hero_count: rng.gen_range(1..=2),
            in_turret: false,
        },
    }
}

fn add_gain(a: Gain, b: Gain) -> Gain {
    Gain {
        minion_gold: a.minion_gold + b.minion_gold,
        monster_gold: a.monster_gold + b.monster_gold,
        kill_gold: a.kill_gold + b.kill_gold,
        hero_damage: a.hero_damage + b.hero_damage,
        farm_damage: a.farm_damage + b.farm_damage,
        turret_damage: a.turret_damage + b.turret_damage,
        received_hero: a.received_hero + b.received_hero,
        received_other: a.received_other + b.received_other,
        kills: a.kills + b.kills,
        deaths: a.deaths + b.deaths,
        assists: a.assists + b.assists,
    }
}

fn gold_of(g: &Gain) -> f64 {
    g.minion_gold + g.monster_gold + g.kill_gold
}

fn frame_from(g: &Gain) -> FrameStats {
    FrameStats {
        gold: gold_of(g),
        kills: g.kills,
        deaths: g.deaths,
        assists: g.assists,
        damage_to_hero: g.hero_damage,
        damage_total: g.hero_damage + g.farm_damage + g.turret_damage,
        received_damage: g.received_hero + g.received_other,
        minions_killed: (g.minion_gold / 30.0).floor() as u32,
        minion_gold: g.minion_gold,
        monster_gold: g.monster_gold,
    }
}

// ---------------------------------------------------------------------------
// Corpus generation.

/// Archetype names accepted in a corpus mix.
pub const MIX_ARCHETYPES: [&str; 5] = ["normal", "afk", "feeder", "dragon_no_show", "base_defense_no_show"];

/// Parses `normal=0.8,afk=0.1,feeder=0.1`.
pub fn parse_mix(s: &str) -> Result<Vec<(String, f64)>, SynthError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, freq) = part
            .split_once('=')
            .ok_or_else(|| SynthError::BadScript(format!("mix entry {part:?} is not name=frequency")))?;
        let freq: f64 = freq
            .trim()
            .parse()
            .map_err(|_| SynthError::BadScript(format!("mix frequency {freq:?} is not a number")))?;
        out.push((name.trim().to_string(), freq));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub matches: Vec<MatchRecord>,
    pub truth: SynthGroundTruth,
}

impl Corpus {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.matches {
            out.push_str(&crate::telemetry::serialize_match(m));
            out.push('\n');
        }
        out
    }

    pub fn truth_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.truth.rows {
            out.push_str(&serde_json::to_string(r).expect("truth rows serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes the corpus and its ground-truth sidecar.
    pub fn write(&self, corpus_path: &Path, truth_path: &Path) -> Result<(), SynthError> {
        write_file(corpus_path, &self.to_jsonl())?;
        write_file(truth_path, &self.truth_jsonl())
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), SynthError> {
    let io = |source| SynthError::IoFailure {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(body.as_bytes()).map_err(io)
}

/// Sidecar path for a corpus file: `corpus.jsonl` becomes `corpus.truth.jsonl`.
pub fn truth_path_for(corpus: &Path) -> std::path::PathBuf {
    let stem = corpus.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    corpus.with_file_name(format!("{stem}.truth.jsonl"))
}

/// Largest-remainder apportionment of `n` items over the mix frequencies.
fn apportion(n: usize, mix: &[(String, f64)]) -> Vec<usize> {
    let exact: Vec<f64> = mix.iter().map(|(_, f)| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Generates `n_matches` matches. Each match draws one archetype from the mix
/// (exact quotas by largest remainder); a non-normal match plants exactly one
/// player with that archetype among nine normal players.
pub fn generate_corpus(n_matches: usize, mix: &[(String, f64)], seed: u64) -> Result<Corpus, SynthError> {
    if n_matches == 0 {
        return Err(SynthError::BadScript("n_matches must be at least 1".into()));
    }
    let total: f64 = mix.iter().map(|(_, f)| *f).sum();
    if (total - 1.0).abs() > 1e-9 || mix.iter().any(|(_, f)| *f < 0.0 || !f.is_finite()) {
        return Err(SynthError::BadScript(format!("mix frequencies sum to {total}, expected 1")));
    }
    for (name, _) in mix {
        if !MIX_ARCHETYPES.contains(&name.as_str()) {
            return Err(SynthError::BadScript(format!("unknown archetype {name:?} in mix")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed));
    let mut plan_kinds: Vec<&str> = Vec::with_capacity(n_matches);
    for ((name, _), count) in mix.iter().zip(apportion(n_matches, mix)) {
        plan_kinds.extend(std::iter::repeat_n(name.as_str(), count));
    }
    plan_kinds.shuffle(&mut rng);

    let pool_size = (n_matches * 10 / 3).max(20);
    let pool: Vec<(String, [usize; 3])> = (0..pool_size)
        .map(|i| {
            let mut favorites = [0usize; 3];
            for f in &mut favorites {
                *f = rng.gen_range(0..HERO_POOL);
            }
            (format!("p{:04}", i + 1), favorites)
        })
        .collect();

    let mut matches = Vec::with_capacity(n_matches);
    let mut rows = Vec::with_capacity(n_matches * PLAYERS_PER_MATCH);
    for (i, kind) in plan_kinds.iter().enumerate() {
        let match_seed = splitmix(seed, i as u64 + 1);
        let duration_s = 60 * rng.gen_range(18..=26u32);
        let mut picks: Vec<usize> = (0..pool_size).collect();
        picks.shuffle(&mut rng);
        picks.truncate(PLAYERS_PER_MATCH);
        let planted = rng.gen_range(0..PLAYERS_PER_MATCH);
        let mut used_heroes = BTreeSet::new();
        let slots = picks
            .iter()
            .enumerate()
            .map(|(slot, &pi)| {
                let (player_id, favorites) = &pool[pi];
                let mut hero = favorites[rng.gen_range(0..3)];
                while !used_heroes.insert(hero) {
                    hero = (hero + 1) % HERO_POOL;
                }
                let normal = if slot % 5 == 1 { Archetype::NormalJungler } else { Archetype::NormalLaner };
                let archetype = if slot == planted {
                    match *kind {
                        "afk" => Archetype::Afk { idle_span_s: rng.gen_range(15..=40) * 10 },
                        "feeder" => Archetype::Feeder { suspected_deaths: rng.gen_range(3..=5) },
                        "dragon_no_show" => Archetype::DragonNoShow,
                        "base_defense_no_show" => Archetype::BaseDefenseNoShow,
                        _ => normal,
                    }
                } else {
                    normal
                };
                Slot {
                    player_id: player_id.clone(),
                    hero_id: hero_id(hero),
                    script: BehaviorScript::new(archetype, rng.gen()),
                }
            })
            .collect();
        let plan = MatchPlan {
            match_id: format!("m{:04}", i + 1),
            ended_at: BASE_ENDED_AT + i as i64 * 3600 + duration_s as i64,
            duration_s,
            seed: match_seed,
            slots,
        };
        let (record, truth) = generate_planned(&plan)?;
        matches.push(record);
        rows.extend(truth.rows);
    }
    Ok(Corpus {
        matches,
        truth: SynthGroundTruth { rows },
    })
}

fn mix_seed(seed: u64) -> u64 {
    splitmix(seed, 0x5eed)
}
