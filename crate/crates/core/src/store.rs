//! Persistent store for matches, derived per-member caches, labels and sessions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohort::CohortSource;
use crate::events::{self, EventKind, MinuteEvents};
use crate::metrics::{self, MetricVector, MetricsConfig};
use crate::model::{self, Classifier, FeatureSource, FeatureVector, Label, LabelRecord, LabelSource, ModelConfig, ModelError};
use crate::telemetry::{self, MatchRecord, MemberKey};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt document {collection}/{key}: {message}")]
    Corrupt {
        collection: String,
        key: String,
        message: String,
    },
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown member {0}")]
    UnknownMember(MemberKey),
    #[error("unknown match {0}")]
    UnknownMatch(String),
    #[error("invalid filter: {0}")]
    BadFilter(String),
    #[error("a prediction is already running for session {0}")]
    Busy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Backends.

/// Minimal document store: opaque byte documents addressed by (collection, key).
pub trait DocumentBackend: Send + Sync {
    fn put(&self, collection: &str, key: &str, value: &[u8]) -> Result<(), StoreError>;
    fn get(&self, collection: &str, key: &str) -> Result<Option<Vec<u8>>, StoreError>;
    /// Keys of a collection in ascending order.
    fn list(&self, collection: &str) -> Result<Vec<String>, StoreError>;
}

#[derive(Default)]
pub struct MemoryBackend {
    docs: Mutex<BTreeMap<(String, String), Vec<u8>>>,
}

impl DocumentBackend for MemoryBackend {
    fn put(&self, collection: &str, key: &str, value: &[u8]) -> Result<(), StoreError> {
        self.docs
            .lock()
            .expect("backend lock")
            .insert((collection.to_string(), key.to_string()), value.to_vec());
        Ok(())
    }

    fn get(&self, collection: &str, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self
            .docs
            .lock()
            .expect("backend lock")
            .get(&(collection.to_string(), key.to_string()))
            .cloned())
    }

    fn list(&self, collection: &str) -> Result<Vec<String>, StoreError> {
        Ok(self
            .docs
            .lock()
            .expect("backend lock")
            .keys()
            .filter(|(c, _)| c == collection)
            .map(|(_, k)| k.clone())
            .collect())
    }
}

/// One file per document under `root/<collection>/`, named by the hex-encoded key.
pub struct DirBackend {
    root: PathBuf,
}

impl DirBackend {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(DirBackend { root })
    }

    fn path(&self, collection: &str, key: &str) -> PathBuf {
        self.root.join(collection).join(format!("{}.json", hex::encode(key)))
    }
}

impl DocumentBackend for DirBackend {
    fn put(&self, collection: &str, key: &str, value: &[u8]) -> Result<(), StoreError> {
        let dir = self.root.join(collection);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = self.path(collection, key);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, value).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn get(&self, collection: &str, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.path(collection, key);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn list(&self, collection: &str) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut keys = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if let Ok(bytes) = hex::decode(stem) {
                if let Ok(key) = String::from_utf8(bytes) {
                    keys.push(key);
                }
            }
        }
        keys.sort();
        Ok(keys)
    }
}

// ---------------------------------------------------------------------------
// Clocks.

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: starts at `start` and advances one step per reading.
pub struct SteppingClock {
    next: AtomicI64,
    step_s: i64,
}

impl SteppingClock {
    pub fn new(start_epoch_s: i64, step_s: i64) -> Self {
        SteppingClock {
            next: AtomicI64::new(start_epoch_s),
            step_s,
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let t = self.next.fetch_add(self.step_s, Ordering::SeqCst);
        DateTime::from_timestamp(t, 0).unwrap_or_default()
    }
}

fn timestamp(clock: &dyn Clock) -> String {
    clock.now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

// ---------------------------------------------------------------------------
// Filters and sessions.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterField {
    /// 0 unlabeled, 1 labeled normal, 2 labeled actor (human labels).
    LabelStatus,
    ReportCount,
    InactivePercentage,
    #[serde(untagged)]
    Event(EventKind),
}

impl FilterField {
    pub fn name(self) -> &'static str {
        match self {
            FilterField::LabelStatus => "label_status",
            FilterField::ReportCount => "report_count",
            FilterField::InactivePercentage => "inactive_percentage",
            FilterField::Event(k) => k.name(),
        }
    }

    pub fn parse(s: &str) -> Option<FilterField> {
        match s {
            "label_status" => Some(FilterField::LabelStatus),
            "report_count" => Some(FilterField::ReportCount),
            "inactive_percentage" => Some(FilterField::InactivePercentage),
            other => other.parse::<EventKind>().ok().map(FilterField::Event),
        }
    }
}

pub fn label_status_code(label: Option<Label>) -> f64 {
    match label {
        None => 0.0,
        Some(Label::Normal) => 1.0,
        Some(Label::Actor) => 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub field: FilterField,
    pub lo: f64,
    pub hi: f64,
}

impl FilterSpec {
    pub fn new(field: FilterField, lo: f64, hi: f64) -> Result<Self, StoreError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(StoreError::BadFilter(format!("{}: bounds must be finite", field.name())));
        }
        if lo > hi {
            return Err(StoreError::BadFilter(format!("{}: lo {lo} exceeds hi {hi}", field.name())));
        }
        Ok(FilterSpec { field, lo, hi })
    }

    /// Parses `field:lo:hi`.
    pub fn parse(s: &str) -> Result<Self, StoreError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [field, lo, hi] = parts.as_slice() else {
            return Err(StoreError::BadFilter(format!("{s:?} is not field:lo:hi")));
        };
        let field = FilterField::parse(field).ok_or_else(|| StoreError::BadFilter(format!("unknown field {field:?}")))?;
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| StoreError::BadFilter(format!("{x:?} is not a number")))
        };
        FilterSpec::new(field, num(lo)?, num(hi)?)
    }

    /// Parses a comma-separated list; the empty string yields no filters.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, StoreError> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(FilterSpec::parse)
            .collect()
    }

    pub fn value_of(&self, metrics: &MetricVector, label: Option<Label>) -> f64 {
        match self.field {
            FilterField::LabelStatus => label_status_code(label),
            FilterField::ReportCount => metrics.report_count as f64,
            FilterField::InactivePercentage => metrics.inactive_percentage,
            FilterField::Event(k) => metrics.count(k) as f64,
        }
    }

    pub fn accepts(&self, metrics: &MetricVector, label: Option<Label>) -> bool {
        let v = self.value_of(metrics, label);
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub seed: u64,
    pub focused: Vec<MemberKey>,
    pub filters: Vec<FilterSpec>,
    pub lasso: Vec<MemberKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberSelector {
    All,
    Members(Vec<MemberKey>),
}

// ---------------------------------------------------------------------------
// Derived data and labels.

/// Everything computed from one player-match at ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub hero_id: String,
    pub ended_at: i64,
    pub minutes: Vec<MinuteEvents>,
    pub priority: Vec<EventKind>,
    pub metrics: MetricVector,
    pub economic_difference: Vec<f64>,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DerivedDoc {
    hash: String,
    players: BTreeMap<String, Derived>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LabelHistory {
    pub human: Option<LabelRecord>,
    pub audit: Vec<LabelRecord>,
    pub predictions: Vec<LabelRecord>,
}

impl LabelHistory {
    pub fn latest_prediction(&self) -> Option<&LabelRecord> {
        self.predictions.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerView {
    pub member: MemberKey,
    pub metrics: MetricVector,
    pub label: Option<LabelRecord>,
    pub prediction: Option<LabelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IngestError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IngestReport {
    pub matches: usize,
    pub player_matches: usize,
    pub skipped: usize,
    pub errors: Vec<IngestError>,
}

const MATCHES: &str = "matches";
const DERIVED: &str = "derived";
const LABELS: &str = "labels";
const SESSIONS: &str = "sessions";
const META: &str = "meta";

fn label_key(k: &MemberKey) -> String {
    format!("{}\u{1f}{}", k.match_id, k.player_id)
}

#[derive(Default)]
struct State {
    matches: BTreeMap<String, Arc<MatchRecord>>,
    hashes: BTreeMap<String, String>,
    derived: BTreeMap<MemberKey, Derived>,
    labels: BTreeMap<MemberKey, LabelHistory>,
    sessions: BTreeMap<String, Session>,
    next_session: u64,
}

pub struct Store {
    backend: Box<dyn DocumentBackend>,
    clock: Box<dyn Clock>,
    state: RwLock<State>,
    predicting: Mutex<BTreeSet<String>>,
    metrics_cfg: MetricsConfig,
}

/// Held while a prediction runs for a session; releases the session on drop.
pub struct PredictGuard<'a> {
    store: &'a Store,
    session_id: String,
}

impl Drop for PredictGuard<'_> {
    fn drop(&mut self) {
        self.store
            .predicting
            .lock()
            .expect("predict lock")
            .remove(&self.session_id);
    }
}

fn derive_match(m: &MatchRecord, cfg: &MetricsConfig) -> BTreeMap<String, Derived> {
    m.players
        .iter()
        .map(|p| {
            let id = p.player_id.as_str();
            let minutes = events::abstract_minutes(m, id).expect("player of match");
            let priority = minutes.iter().map(events::priority_event).collect();
            let derived = Derived {
                hero_id: p.hero_id.clone(),
                ended_at: m.ended_at,
                minutes,
                priority,
                metrics: metrics::metric_vector(m, id, cfg).expect("player of match"),
                economic_difference: metrics::economic_difference_series(m, id).expect("player of match"),
                features: model::extract_features(m, id).expect("player of match"),
            };
            (p.player_id.clone(), derived)
        })
        .collect()
}

fn doc_hash(doc: &str) -> String {
    hex::encode(Sha256::digest(doc.as_bytes()))
}

fn decode<T: for<'de> Deserialize<'de>>(collection: &str, key: &str, bytes: &[u8]) -> Result<T, StoreError> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt {
        collection: collection.to_string(),
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("store documents serialize")
}

impl Store {
    pub fn in_memory() -> Self {
        Store::with_backend(Box::new(MemoryBackend::default()), Box::new(SystemClock)).expect("memory backend loads")
    }

    pub fn open_dir(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Store::with_backend(Box::new(DirBackend::open(root)?), Box::new(SystemClock))
    }

    /// Opens a store over `backend`, loading every persisted document.
    pub fn with_backend(backend: Box<dyn DocumentBackend>, clock: Box<dyn Clock>) -> Result<Self, StoreError> {
        let metrics_cfg = MetricsConfig::default();
        let mut state = State::default();
        for key in backend.list(MATCHES)? {
            let bytes = backend.get(MATCHES, &key)?.unwrap_or_default();
            let text = String::from_utf8_lossy(&bytes);
            let m = telemetry::parse_match(&text).map_err(|e| StoreError::Corrupt {
                collection: MATCHES.into(),
                key: key.clone(),
                message: e.to_string(),
            })?;
            let hash = doc_hash(&text);
            let derived = match backend.get(DERIVED, &key)? {
                Some(bytes) => {
                    let doc: DerivedDoc = decode(DERIVED, &key, &bytes)?;
                    if doc.hash == hash {
                        doc.players
                    } else {
                        derive_match(&m, &metrics_cfg)
                    }
                }
                None => derive_match(&m, &metrics_cfg),
            };
            for (pid, d) in derived {
                state.derived.insert(MemberKey::new(key.clone(), pid), d);
            }
            state.hashes.insert(key.clone(), hash);
            state.matches.insert(key, Arc::new(m));
        }
        for key in backend.list(LABELS)? {
            let bytes = backend.get(LABELS, &key)?.unwrap_or_default();
            let h: LabelHistory = decode(LABELS, &key, &bytes)?;
            let member = h
                .audit
                .first()
                .or(h.predictions.first())
                .map(LabelRecord::key)
                .ok_or_else(|| StoreError::Corrupt {
                    collection: LABELS.into(),
                    key: key.clone(),
                    message: "empty label history".into(),
                })?;
            state.labels.insert(member, h);
        }
        for key in backend.list(SESSIONS)? {
            let bytes = backend.get(SESSIONS, &key)?.unwrap_or_default();
            let s: Session = decode(SESSIONS, &key, &bytes)?;
            state.sessions.insert(key, s);
        }
        if let Some(bytes) = backend.get(META, "next_session")? {
            state.next_session = decode(META, "next_session", &bytes)?;
        }
        Ok(Store {
            backend,
            clock,
            state: RwLock::new(state),
            predicting: Mutex::new(BTreeSet::new()),
            metrics_cfg,
        })
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("store lock")
    }

    /// Ingests JSON Lines text; malformed lines are reported by 1-based line number.
    pub fn ingest_str(&self, corpus: &str) -> Result<IngestReport, StoreError> {
        self.ingest_reader(corpus.as_bytes())
    }

    pub fn ingest_file(&self, path: &Path) -> Result<IngestReport, StoreError> {
        let f = fs::File::open(path).map_err(io_err(path))?;
        self.ingest_reader(f).map_err(|e| match e {
            StoreError::IoFailure { source, .. } => io_err(path)(source),
            other => other,
        })
    }

    pub fn ingest_reader(&self, reader: impl Read) -> Result<IngestReport, StoreError> {
        let mut report = IngestReport::default();
        let mut state = self.state.write().expect("store lock");
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(io_err(Path::new("<input>")))?;
            if line.trim().is_empty() {
                continue;
            }
            let m = match telemetry::parse_match(&line) {
                Ok(m) => m,
                Err(e) => {
                    report.skipped += 1;
                    report.errors.push(IngestError {
                        line: i + 1,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let canonical = telemetry::serialize_match(&m);
            let hash = doc_hash(&canonical);
            if state.hashes.get(&m.match_id) == Some(&hash) {
                report.skipped += 1;
                continue;
            }
            let derived = derive_match(&m, &self.metrics_cfg);
            self.backend.put(MATCHES, &m.match_id, canonical.as_bytes())?;
            self.backend.put(
                DERIVED,
                &m.match_id,
                &encode(&DerivedDoc {
                    hash: hash.clone(),
                    players: derived.clone(),
                }),
            )?;
            state.derived.retain(|k, _| k.match_id != m.match_id);
            for (pid, d) in derived {
                state.derived.insert(MemberKey::new(m.match_id.clone(), pid), d);
            }
            report.matches += 1;
            report.player_matches += m.players.len();
            state.hashes.insert(m.match_id.clone(), hash);
            state.matches.insert(m.match_id.clone(), Arc::new(m));
        }
        Ok(report)
    }

    /// Every persisted document, for byte-level state comparison.
    pub fn snapshot(&self) -> Result<BTreeMap<(String, String), Vec<u8>>, StoreError> {
        let _guard = self.read();
        let mut out = BTreeMap::new();
        for c in [MATCHES, DERIVED, LABELS, SESSIONS, META] {
            for key in self.backend.list(c)? {
                if let Some(bytes) = self.backend.get(c, &key)? {
                    out.insert((c.to_string(), key), bytes);
                }
            }
        }
        Ok(out)
    }

    pub fn match_ids(&self) -> Vec<String> {
        self.read().matches.keys().cloned().collect()
    }

    pub fn get_match(&self, match_id: &str) -> Option<Arc<MatchRecord>> {
        self.read().matches.get(match_id).cloned()
    }

    pub fn members(&self) -> Vec<MemberKey> {
        self.read().derived.keys().cloned().collect()
    }

    pub fn derived(&self, key: &MemberKey) -> Option<Derived> {
        self.read().derived.get(key).cloned()
    }

    // -- sessions --------------------------------------------------------

    pub fn create_session(&self, selector: MemberSelector, seed: u64) -> Result<Session, StoreError> {
        let mut state = self.state.write().expect("store lock");
        let focused: Vec<MemberKey> = match selector {
            MemberSelector::All => state.derived.keys().cloned().collect(),
            MemberSelector::Members(list) => {
                if let Some(k) = list.iter().find(|k| !state.derived.contains_key(k)) {
                    return Err(StoreError::UnknownMember(k.clone()));
                }
                list.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
            }
        };
        state.next_session += 1;
        let session = Session {
            session_id: format!("s-{:04}", state.next_session),
            seed,
            focused,
            filters: Vec::new(),
            lasso: Vec::new(),
        };
        self.backend.put(META, "next_session", &encode(&state.next_session))?;
        self.backend.put(SESSIONS, &session.session_id, &encode(&session))?;
        state.sessions.insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Session, StoreError> {
        self.read()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    fn update_session(&self, id: &str, f: impl FnOnce(&mut Session)) -> Result<Session, StoreError> {
        let mut state = self.state.write().expect("store lock");
        let s = state
            .sessions
            .get_mut(id)
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))?;
        f(s);
        let s = s.clone();
        self.backend.put(SESSIONS, id, &encode(&s))?;
        Ok(s)
    }

    pub fn set_filters(&self, id: &str, filters: Vec<FilterSpec>) -> Result<Session, StoreError> {
        self.update_session(id, |s| s.filters = filters)
    }

    pub fn set_lasso(&self, id: &str, members: Vec<MemberKey>) -> Result<Session, StoreError> {
        let session = self.session(id)?;
        let focused: BTreeSet<&MemberKey> = session.focused.iter().collect();
        if let Some(k) = members.iter().find(|k| !focused.contains(k)) {
            return Err(StoreError::UnknownMember(k.clone()));
        }
        let members: Vec<MemberKey> = members.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        self.update_session(id, |s| s.lasso = members)
    }

    /// Focused members passing every filter of the session, ordered by member key.
    pub fn query_players(&self, id: &str) -> Result<Vec<PlayerView>, StoreError> {
        let session = self.session(id)?;
        let state = self.read();
        Ok(session
            .focused
            .iter()
            .filter_map(|k| {
                let d = state.derived.get(k)?;
                let history = state.labels.get(k);
                let human = history.and_then(|h| h.human.clone());
                let label = human.as_ref().map(|l| l.label);
                session
                    .filters
                    .iter()
                    .all(|f| f.accepts(&d.metrics, label))
                    .then(|| PlayerView {
                        member: k.clone(),
                        metrics: d.metrics.clone(),
                        label: human,
                        prediction: history.and_then(|h| h.latest_prediction().cloned()),
                    })
            })
            .collect())
    }

    // -- labels ----------------------------------------------------------

    /// Upserts a human label; the previous one stays in the audit trail.
    pub fn put_human_label(&self, key: &MemberKey, label: Label) -> Result<LabelRecord, StoreError> {
        let mut state = self.state.write().expect("store lock");
        if !state.derived.contains_key(key) {
            return Err(StoreError::UnknownMember(key.clone()));
        }
        let record = LabelRecord::human(key, label, timestamp(self.clock.as_ref()));
        let history = state.labels.entry(key.clone()).or_default();
        history.human = Some(record.clone());
        history.audit.push(record.clone());
        let doc = encode(history);
        self.backend.put(LABELS, &label_key(key), &doc)?;
        Ok(record)
    }

    /// Appends model predictions to each member's prediction history.
    pub fn put_predictions(&self, records: &[LabelRecord]) -> Result<(), StoreError> {
        let mut state = self.state.write().expect("store lock");
        for r in records {
            let key = r.key();
            if !state.derived.contains_key(&key) {
                return Err(StoreError::UnknownMember(key));
            }
            let mut r = r.clone();
            r.source = LabelSource::Model;
            let history = state.labels.entry(key.clone()).or_default();
            history.predictions.push(r);
            let doc = encode(history);
            self.backend.put(LABELS, &label_key(&key), &doc)?;
        }
        Ok(())
    }

    pub fn label_history(&self, key: &MemberKey) -> LabelHistory {
        self.read().labels.get(key).cloned().unwrap_or_default()
    }

    /// Current records: the human label and/or the latest prediction per member.
    pub fn get_labels(&self, source: Option<LabelSource>) -> Vec<LabelRecord> {
        let state = self.read();
        let mut out = Vec::new();
        for h in state.labels.values() {
            if source != Some(LabelSource::Model) {
                out.extend(h.human.clone());
            }
            if source != Some(LabelSource::Human) {
                out.extend(h.latest_prediction().cloned());
            }
        }
        out
    }

    pub fn human_labeled(&self) -> BTreeSet<MemberKey> {
        self.read()
            .labels
            .iter()
            .filter(|(_, h)| h.human.is_some())
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// One row per labeled member: the human label if present, else the latest prediction.
    pub fn export_csv(&self) -> String {
        let state = self.read();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["match_id", "player_id", "label", "source", "confidence", "created_at"])
            .expect("in-memory csv");
        for h in state.labels.values() {
            if let Some(r) = h.human.as_ref().or(h.latest_prediction()) {
                w.write_record([
                    r.match_id.as_str(),
                    r.player_id.as_str(),
                    r.label.as_str(),
                    r.source.as_str(),
                    &r.confidence.to_string(),
                    r.created_at.as_str(),
                ])
                .expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    // -- prediction ------------------------------------------------------

    pub fn begin_predict(&self, session_id: &str) -> Result<PredictGuard<'_>, StoreError> {
        self.session(session_id)?;
        let mut running = self.predicting.lock().expect("predict lock");
        if !running.insert(session_id.to_string()) {
            return Err(StoreError::Busy(session_id.to_string()));
        }
        Ok(PredictGuard {
            store: self,
            session_id: session_id.to_string(),
        })
    }

    /// Trains on all current human labels and predicts every unlabeled focused member.
    pub fn predict_session(&self, session_id: &str) -> Result<Vec<LabelRecord>, StoreError> {
        let _guard = self.begin_predict(session_id)?;
        self.predict_locked(session_id)
    }

    /// Prediction body; callers must hold the session's [`PredictGuard`].
    pub fn predict_locked(&self, session_id: &str) -> Result<Vec<LabelRecord>, StoreError> {
        let session = self.session(session_id)?;
        let humans = self.get_labels(Some(LabelSource::Human));
        let cfg = ModelConfig::with_seed(session.seed);
        let view = self.view();
        let classifier: Classifier = model::train(&humans, &view, &cfg)?;
        let human_labeled: BTreeSet<MemberKey> = humans.iter().map(LabelRecord::key).collect();
        let created_at = timestamp(self.clock.as_ref());
        let predictions = model::predict(&classifier, &session.focused, &human_labeled, &view, &created_at)?;
        drop(view);
        self.put_predictions(&predictions)?;
        Ok(predictions)
    }

    /// A consistent read view usable as a cohort or feature source.
    pub fn view(&self) -> StoreView<'_> {
        StoreView { state: self.read() }
    }
}

pub struct StoreView<'a> {
    state: RwLockReadGuard<'a, State>,
}

impl StoreView<'_> {
    pub fn match_record(&self, match_id: &str) -> Option<Arc<MatchRecord>> {
        self.state.matches.get(match_id).cloned()
    }

    pub fn derived(&self, key: &MemberKey) -> Option<&Derived> {
        self.state.derived.get(key)
    }
}

impl CohortSource for StoreView<'_> {
    fn all_members(&self) -> Vec<MemberKey> {
        self.state.derived.keys().cloned().collect()
    }

    fn contains(&self, key: &MemberKey) -> bool {
        self.state.derived.contains_key(key)
    }

    fn ended_at(&self, key: &MemberKey) -> Option<i64> {
        self.state.derived.get(key).map(|d| d.ended_at)
    }

    fn hero_of(&self, key: &MemberKey) -> Option<String> {
        self.state.derived.get(key).map(|d| d.hero_id.clone())
    }

    fn economic_difference(&self, key: &MemberKey) -> Option<Vec<f64>> {
        self.state.derived.get(key).map(|d| d.economic_difference.clone())
    }

    fn priority_sequence(&self, key: &MemberKey) -> Option<Vec<EventKind>> {
        self.state.derived.get(key).map(|d| d.priority.clone())
    }
}

impl FeatureSource for StoreView<'_> {
    fn features(&self, key: &MemberKey) -> Option<FeatureVector> {
        self.state.derived.get(key).map(|d| d.features)
    }
}
