//! Per-player-match feature extraction and the gradient-boosted label recommender.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{BattleResult, MatchRecord, MemberKey, PlayerMatch};

pub const FEATURE_COUNT: usize = 43;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "gametime",
    "playerproficiencylv",
    "playerherotype",
    "grade",
    "roleelo",
    "dmgtotal",
    "dmgtohero",
    "towerhurt",
    "rcvdmgfromall",
    "rcvdmgfromhero",
    "rcvdmgfromother",
    "kills",
    "die",
    "assistant",
    "coin",
    "playermonsterkillcoin",
    "moneyforkill",
    "playersoldierkillcoin",
    "killsoldiers",
    "battleresult",
    "surrendertimes",
    "healthyrecall",
    "equiptotalbuy",
    "playeroffline",
    "playerreconnection",
    "skillusetimes",
    "skillmisstimes",
    "playerkilllittledragoncnt",
    "playerkillbigdragoncnt",
    "killbluebuff",
    "killredbuff",
    "triplekill",
    "fourkill",
    "fivekill",
    "playervisiblewardcount",
    "idle_time",
    "dmgtohero_teams_per",
    "kills_teams_per",
    "die_teams_per",
    "assistant_teams_per",
    "coin_teams_per",
    "idle_time_per",
    "tower_dead",
];

/// Hero types in lexicographic order; any other value encodes as the list length.
pub const HERO_TYPE_CODEBOOK: [&str; 6] = ["assassin", "fighter", "mage", "marksman", "support", "tank"];

pub fn hero_type_code(hero_type: &str) -> f64 {
    HERO_TYPE_CODEBOOK
        .iter()
        .position(|t| *t == hero_type)
        .unwrap_or(HERO_TYPE_CODEBOOK.len()) as f64
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// The 43 features in table order; serializes as an ordered name → value object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_COUNT])
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(i) = feature_index(name) {
            self.0[i] = value;
        }
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(FEATURE_COUNT))?;
        for (name, v) in FEATURE_NAMES.iter().zip(self.0.iter()) {
            map.serialize_entry(name, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FeatureVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object with the 43 feature names")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<FeatureVector, A::Error> {
                let mut out = FeatureVector::zeros();
                let mut seen = [false; FEATURE_COUNT];
                while let Some((name, value)) = access.next_entry::<String, f64>()? {
                    let i = feature_index(&name).ok_or_else(|| de::Error::unknown_field(&name, &FEATURE_NAMES))?;
                    out.0[i] = value;
                    seen[i] = true;
                }
                if let Some(i) = seen.iter().position(|s| !s) {
                    return Err(de::Error::missing_field(FEATURE_NAMES[i]));
                }
                Ok(out)
            }
        }
        deserializer.deserialize_map(V)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("insufficient labels: {actors} actor and {normals} normal (need {min} of each)")]
    InsufficientLabels { actors: usize, normals: usize, min: usize },
    #[error("unknown target {0}")]
    UnknownTarget(MemberKey),
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

fn ratio(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        (part / whole).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn extract_features(m: &MatchRecord, player_id: &str) -> Result<FeatureVector, ModelError> {
    let p = m
        .player(player_id)
        .ok_or_else(|| ModelError::UnknownPlayer(player_id.to_string()))?;
    let s = &p.summary;
    let team: Vec<&PlayerMatch> = m.team_members(p.team).collect();
    let team_sum = |f: fn(&PlayerMatch) -> f64| team.iter().map(|q| f(q)).sum::<f64>();
    let duration = m.duration_s as f64;
    let tower_dead = m.death_details_of(player_id).filter(|d| d.in_turret).count();

    let values = [
        duration,
        p.profile.proficiency_level as f64,
        hero_type_code(&p.hero_type),
        p.profile.grade as f64,
        p.profile.elo,
        s.damage_total,
        s.damage_to_hero,
        s.damage_to_turret,
        s.received_from_all,
        s.received_from_hero,
        s.received_from_other,
        s.kills as f64,
        s.deaths as f64,
        s.assists as f64,
        s.total_gold,
        s.monster_gold,
        s.kill_gold,
        s.minion_gold,
        s.minions_killed as f64,
        match s.battle_result {
            BattleResult::Win => 1.0,
            BattleResult::Loss => 0.0,
        },
        s.surrender_times as f64,
        s.healthy_recall as f64,
        s.equipment_purchases as f64,
        s.offline_count as f64,
        s.reconnect_count as f64,
        s.skill_hits as f64,
        s.skill_misses as f64,
        s.dragon_kills as f64,
        s.baron_kills as f64,
        s.blue_buff_kills as f64,
        s.red_buff_kills as f64,
        s.triple_kills as f64,
        s.quadra_kills as f64,
        s.penta_kills as f64,
        s.visible_wards as f64,
        s.idle_time_s,
        ratio(s.damage_to_hero, team_sum(|q| q.summary.damage_to_hero)),
        ratio(s.kills as f64, team_sum(|q| q.summary.kills as f64)),
        ratio(s.deaths as f64, team_sum(|q| q.summary.deaths as f64)),
        ratio(s.assists as f64, team_sum(|q| q.summary.assists as f64)),
        ratio(s.total_gold, team_sum(|q| q.summary.total_gold)),
        ratio(s.idle_time_s, duration),
        tower_dead as f64,
    ];
    Ok(FeatureVector(values))
}

// ---------------------------------------------------------------------------
// Labels.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Actor,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Actor => "actor",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Label::Normal),
            "actor" => Ok(Label::Actor),
            other => Err(format!("label must be normal or actor, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Human,
    Model,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Human => "human",
            LabelSource::Model => "model",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub match_id: String,
    pub player_id: String,
    pub label: Label,
    pub source: LabelSource,
    pub confidence: f64,
    pub created_at: String,
}

impl LabelRecord {
    pub fn human(key: &MemberKey, label: Label, created_at: impl Into<String>) -> Self {
        LabelRecord {
            match_id: key.match_id.clone(),
            player_id: key.player_id.clone(),
            label,
            source: LabelSource::Human,
            confidence: 1.0,
            created_at: created_at.into(),
        }
    }

    pub fn key(&self) -> MemberKey {
        MemberKey::new(self.match_id.clone(), self.player_id.clone())
    }
}

/// Looks up cached feature vectors by member.
pub trait FeatureSource {
    fn features(&self, key: &MemberKey) -> Option<FeatureVector>;
}

impl FeatureSource for [MatchRecord] {
    fn features(&self, key: &MemberKey) -> Option<FeatureVector> {
        self.iter()
            .find(|m| m.match_id == key.match_id)
            .and_then(|m| extract_features(m, &key.player_id).ok())
    }
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub min_labels_per_class: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 0.1,
            subsample: 0.8,
            min_labels_per_class: 3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_seed(seed: u64) -> Self {
        ModelConfig {
            seed,
            ..ModelConfig::default()
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadConfig(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if self.lambda < 0.0 || self.min_child_weight < 0.0 {
            return bad("lambda and min_child_weight must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn eval(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] < *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }
}

/// A trained binary classifier; positive class is `Label::Actor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    base_score: f64,
    trees: Vec<Node>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Grower<'a> {
    x: &'a [[f64; FEATURE_COUNT]],
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a ModelConfig,
}

impl Grower<'_> {
    fn leaf(&self, rows: &[usize]) -> Node {
        let (g, h) = self.sums(rows);
        Node::Leaf(-g / (h + self.cfg.lambda) * self.cfg.learning_rate)
    }

    fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.g[r], h + self.h[r]))
    }

    fn grow(&self, rows: &[usize], depth: usize) -> Node {
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return self.leaf(rows);
        }
        let (g_all, h_all) = self.sums(rows);
        let lambda = self.cfg.lambda;
        let parent = g_all * g_all / (h_all + lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        for f in 0..FEATURE_COUNT {
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..sorted.len() - 1 {
                let r = sorted[w];
                gl += self.g[r];
                hl += self.h[r];
                let (lo, hi) = (self.x[r][f], self.x[sorted[w + 1]][f]);
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g_all - gl, h_all - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.is_none_or(|(b, _, _)| gain > b) {
                    best = Some((gain, f, lo + (hi - lo) / 2.0));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(rows);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.x[r][feature] < threshold);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.grow(&left, depth + 1)),
            right: Box::new(self.grow(&right, depth + 1)),
        }
    }
}

impl Classifier {
    /// Fits the ensemble on labeled feature vectors with inverse-frequency class weights.
    pub fn fit(samples: &[(FeatureVector, Label)], cfg: &ModelConfig) -> Result<Classifier, ModelError> {
        cfg.validate()?;
        let actors = samples.iter().filter(|(_, l)| *l == Label::Actor).count();
        let normals = samples.len() - actors;
        if actors < cfg.min_labels_per_class || normals < cfg.min_labels_per_class {
            return Err(ModelError::InsufficientLabels {
                actors,
                normals,
                min: cfg.min_labels_per_class,
            });
        }
        let n = samples.len();
        let x: Vec<[f64; FEATURE_COUNT]> = samples.iter().map(|(f, _)| f.0).collect();
        let y: Vec<f64> = samples.iter().map(|(_, l)| f64::from(*l == Label::Actor)).collect();
        let weight_of = |l: f64| {
            if l > 0.5 {
                n as f64 / (2.0 * actors as f64)
            } else {
                n as f64 / (2.0 * normals as f64)
            }
        };
        let w: Vec<f64> = y.iter().map(|&l| weight_of(l)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut margin = vec![0.0; n];
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let take = ((n as f64 * cfg.subsample).ceil() as usize).clamp(1, n);
        let mut all: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.n_trees {
            let mut g = vec![0.0; n];
            let mut h = vec![0.0; n];
            for i in 0..n {
                let p = sigmoid(margin[i]);
                g[i] = w[i] * (p - y[i]);
                h[i] = w[i] * (p * (1.0 - p)).max(1e-16);
            }
            all.shuffle(&mut rng);
            let mut rows = all[..take].to_vec();
            rows.sort_unstable();
            let tree = Grower {
                x: &x,
                g: &g,
                h: &h,
                cfg,
            }
            .grow(&rows, 0);
            for i in 0..n {
                margin[i] += tree.eval(&x[i]);
            }
            trees.push(tree);
        }
        Ok(Classifier { base_score: 0.0, trees })
    }

    /// Probability that the vector belongs to an actor.
    pub fn actor_probability(&self, f: &FeatureVector) -> f64 {
        sigmoid(self.base_score + self.trees.iter().map(|t| t.eval(&f.0)).sum::<f64>())
    }

    /// Predicted label and the probability of that label.
    pub fn classify(&self, f: &FeatureVector) -> (Label, f64) {
        let p = self.actor_probability(f);
        if p > 0.5 {
            (Label::Actor, p)
        } else {
            (Label::Normal, 1.0 - p)
        }
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }
}

/// Trains on the human labels among `labels`.
pub fn train<S: FeatureSource + ?Sized>(labels: &[LabelRecord], src: &S, cfg: &ModelConfig) -> Result<Classifier, ModelError> {
    let mut samples = Vec::new();
    for l in labels.iter().filter(|l| l.source == LabelSource::Human) {
        let key = l.key();
        let f = src.features(&key).ok_or(ModelError::UnknownTarget(key))?;
        samples.push((f, l.label));
    }
    Classifier::fit(&samples, cfg)
}

/// One model label per target not already labeled by a human, in target order.
pub fn predict<S: FeatureSource + ?Sized>(
    h: &Classifier,
    targets: &[MemberKey],
    human_labeled: &BTreeSet<MemberKey>,
    src: &S,
    created_at: &str,
) -> Result<Vec<LabelRecord>, ModelError> {
    let mut out = Vec::new();
    for key in targets.iter().filter(|k| !human_labeled.contains(k)) {
        let f = src.features(key).ok_or_else(|| ModelError::UnknownTarget(key.clone()))?;
        let (label, confidence) = h.classify(&f);
        out.push(LabelRecord {
            match_id: key.match_id.clone(),
            player_id: key.player_id.clone(),
            label,
            source: LabelSource::Model,
            confidence,
            created_at: created_at.to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(idle_per: f64, die_per: f64) -> FeatureVector {
        let mut f = FeatureVector::zeros();
        f.set("idle_time_per", idle_per);
        f.set("die_teams_per", die_per);
        f
    }

    #[test]
    fn names_are_unique_and_complete() {
        let set: BTreeSet<&str> = FEATURE_NAMES.iter().copied().collect();
        assert_eq!(set.len(), FEATURE_COUNT);
        assert_eq!(FEATURE_NAMES[0], "gametime");
        assert_eq!(FEATURE_NAMES[42], "tower_dead");
    }

    #[test]
    fn feature_vector_serializes_in_table_order() {
        let json = serde_json::to_string(&vector(0.5, 0.25)).unwrap();
        assert!(json.starts_with("{\"gametime\":0.0,\"playerproficiencylv\""));
        let back: FeatureVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vector(0.5, 0.25));
    }

    #[test]
    fn codebook_is_lexicographic() {
        assert_eq!(hero_type_code("assassin"), 0.0);
        assert_eq!(hero_type_code("tank"), 5.0);
        assert_eq!(hero_type_code("bard"), 6.0);
    }

    #[test]
    fn too_few_labels_per_class() {
        let mut samples = vec![(vector(0.9, 0.9), Label::Actor); 2];
        samples.extend(vec![(vector(0.0, 0.1), Label::Normal); 10]);
        assert_eq!(
            Classifier::fit(&samples, &ModelConfig::default()),
            Err(ModelError::InsufficientLabels { actors: 2, normals: 10, min: 3 })
        );
    }

    #[test]
    fn separable_data_fits_exactly() {
        let mut samples = Vec::new();
        for i in 0..30 {
            let t = i as f64 / 30.0;
            samples.push((vector(0.5 + 0.4 * t, 0.3), Label::Actor));
            samples.push((vector(0.4 * t, 0.2), Label::Normal));
        }
        let c = Classifier::fit(&samples, &ModelConfig::default()).unwrap();
        for (f, l) in &samples {
            let (label, conf) = c.classify(f);
            assert_eq!(label, *l);
            assert!((0.5..=1.0).contains(&conf));
        }
    }
}
