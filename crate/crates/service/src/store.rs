//! Event-sourced case store.
//!
//! The JSONL event log is the source of truth. [`StoreState`] is a pure fold
//! over events: live writes and replay both go through [`StoreState::apply`],
//! so replaying a log rebuilds the live state exactly. A JSON snapshot of the
//! state is written every `snapshot_every` events to bound startup replay.
//!
//! ```text
//!  Pending --ruling--> Ruled --appeal--> Appealed --ruling--> Ruled ...
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use odr_core::domain::{DisputeCase, OutcomeLabel, Party};
use odr_core::interpret::CaseExplanation;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseStatus {
    Pending,
    Ruled,
    Appealed,
}

impl fmt::Display for CaseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseStatus::Pending => "pending",
            CaseStatus::Ruled => "ruled",
            CaseStatus::Appealed => "appealed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    CaseCreated { case: DisputeCase },
    PredictionIssued { model_version: String, explanation: CaseExplanation },
    RulingRecorded { winner: Party, summary: String },
    AppealFiled { party: Party },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecordEvent {
    pub event_id: u64,
    pub case_id: String,
    pub timestamp_ms: i64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ruling {
    pub winner: Party,
    pub summary: String,
    pub event_id: u64,
    pub timestamp_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appeal {
    pub party: Party,
    pub event_id: u64,
    pub timestamp_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    /// The case as ingested. A ruling sets `outcome` and the agent summary;
    /// an appeal bumps `appeal_count`.
    pub case: DisputeCase,
    pub status: CaseStatus,
    /// Event id of the creation event; orders cases by arrival.
    pub seq: u64,
    pub created_ms: i64,
    pub rulings: Vec<Ruling>,
    pub appeals: Vec<Appeal>,
    /// Explanation issued under each model version.
    pub predictions: BTreeMap<String, CaseExplanation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    pub cases: BTreeMap<String, CaseRecord>,
    pub last_event_id: u64,
}

impl StoreState {
    /// Rejects an event that is illegal in the current state.
    pub fn check(&self, case_id: &str, kind: &EventKind) -> Result<()> {
        let record = self.cases.get(case_id);
        let illegal = |status, action| {
            Err(ServiceError::IllegalTransition {
                case_id: case_id.to_string(),
                status,
                action,
            })
        };
        match (kind, record) {
            (EventKind::CaseCreated { case }, existing) => {
                if existing.is_some() {
                    return Err(ServiceError::Duplicate(case_id.to_string()));
                }
                if case.case_id != case_id {
                    return Err(ServiceError::InvalidCase("event case_id differs from the case".into()));
                }
                if case.outcome.is_some() {
                    return Err(ServiceError::InvalidCase("live cases must not carry an outcome".into()));
                }
                case.validate()
                    .map_err(|(field, message)| ServiceError::InvalidCase(format!("{field}: {message}")))
            }
            (_, None) => Err(ServiceError::NotFound(case_id.to_string())),
            (EventKind::PredictionIssued { model_version, .. }, Some(r)) => {
                if r.predictions.contains_key(model_version) {
                    return Err(ServiceError::Duplicate(format!("{case_id}@{model_version}")));
                }
                Ok(())
            }
            (EventKind::RulingRecorded { .. }, Some(r)) => match r.status {
                CaseStatus::Pending | CaseStatus::Appealed => Ok(()),
                s => illegal(s, "record a ruling"),
            },
            (EventKind::AppealFiled { .. }, Some(r)) => match r.status {
                CaseStatus::Ruled => Ok(()),
                s => illegal(s, "file an appeal"),
            },
        }
    }

    pub fn apply(&mut self, event: &CaseRecordEvent) -> Result<()> {
        if event.event_id <= self.last_event_id {
            return Err(ServiceError::InvalidCase(format!(
                "event {} does not follow {}",
                event.event_id, self.last_event_id
            )));
        }
        self.check(&event.case_id, &event.kind)?;
        self.last_event_id = event.event_id;
        let id = &event.case_id;
        match &event.kind {
            EventKind::CaseCreated { case } => {
                self.cases.insert(
                    id.clone(),
                    CaseRecord {
                        case: case.clone(),
                        status: CaseStatus::Pending,
                        seq: event.event_id,
                        created_ms: event.timestamp_ms,
                        rulings: Vec::new(),
                        appeals: Vec::new(),
                        predictions: BTreeMap::new(),
                    },
                );
            }
            EventKind::PredictionIssued {
                model_version,
                explanation,
            } => {
                let r = self.cases.get_mut(id).expect("checked");
                r.predictions.insert(model_version.clone(), explanation.clone());
            }
            EventKind::RulingRecorded { winner, summary } => {
                let r = self.cases.get_mut(id).expect("checked");
                r.status = CaseStatus::Ruled;
                r.case.outcome = Some(match winner {
                    Party::Seller => OutcomeLabel::SellerWins,
                    Party::Buyer => OutcomeLabel::BuyerWins,
                });
                r.case.claim.agent_summary = summary.clone();
                r.rulings.push(Ruling {
                    winner: *winner,
                    summary: summary.clone(),
                    event_id: event.event_id,
                    timestamp_ms: event.timestamp_ms,
                });
            }
            EventKind::AppealFiled { party } => {
                let r = self.cases.get_mut(id).expect("checked");
                r.status = CaseStatus::Appealed;
                r.case.claim.appeal_count += 1;
                r.appeals.push(Appeal {
                    party: *party,
                    event_id: event.event_id,
                    timestamp_ms: event.timestamp_ms,
                });
            }
        }
        Ok(())
    }
}

/// Folds a full event log into a state.
pub fn replay<'a>(events: impl IntoIterator<Item = &'a CaseRecordEvent>) -> Result<StoreState> {
    let mut state = StoreState::default();
    for e in events {
        state.apply(e)?;
    }
    Ok(state)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<CaseRecordEvent>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::io(path, e)),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ServiceError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| ServiceError::CorruptLog {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(events)
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    state: StoreState,
}

pub type Clock = Box<dyn Fn() -> i64 + Send + Sync>;

fn wall_clock() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

struct Disk {
    dir: PathBuf,
    log: File,
    since_snapshot: u64,
}

/// Case store with a single writer. Without a data directory events live
/// only in memory.
pub struct Store {
    state: StoreState,
    disk: Option<Disk>,
    clock: Clock,
    pub snapshot_every: u64,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("cases", &self.state.cases.len())
            .field("last_event_id", &self.state.last_event_id)
            .field("dir", &self.disk.as_ref().map(|d| &d.dir))
            .finish()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            state: StoreState::default(),
            disk: None,
            clock: Box::new(wall_clock),
            snapshot_every: 1000,
        }
    }

    /// Loads the snapshot in `dir`, if any, and replays the log tail after it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = match fs::read_to_string(&snap_path) {
            Ok(text) => {
                serde_json::from_str::<Snapshot>(&text)
                    .map_err(|e| ServiceError::CorruptLog {
                        path: snap_path.clone(),
                        line: e.line(),
                        message: e.to_string(),
                    })?
                    .state
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StoreState::default(),
            Err(e) => return Err(ServiceError::io(&snap_path, e)),
        };
        let log_path = dir.join(EVENTS_FILE);
        let mut since_snapshot = 0;
        for e in read_events(&log_path)? {
            if e.event_id > state.last_event_id {
                state.apply(&e)?;
                since_snapshot += 1;
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| ServiceError::io(&log_path, e))?;
        Ok(Store {
            state,
            disk: Some(Disk {
                dir,
                log,
                since_snapshot,
            }),
            clock: Box::new(wall_clock),
            snapshot_every: 1000,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseRecord> {
        self.state.cases.get(case_id)
    }

    /// Validates, persists, then applies one event.
    fn append(&mut self, case_id: &str, kind: EventKind) -> Result<&CaseRecord> {
        self.state.check(case_id, &kind)?;
        let event = CaseRecordEvent {
            event_id: self.state.last_event_id + 1,
            case_id: case_id.to_string(),
            timestamp_ms: (self.clock)(),
            kind,
        };
        if let Some(disk) = &mut self.disk {
            let mut line = serde_json::to_string(&event).expect("events serialize");
            line.push('\n');
            let path = disk.dir.join(EVENTS_FILE);
            disk.log
                .write_all(line.as_bytes())
                .and_then(|_| disk.log.flush())
                .map_err(|e| ServiceError::io(path, e))?;
            disk.since_snapshot += 1;
        }
        self.state.apply(&event)?;
        if self.disk.as_ref().is_some_and(|d| d.since_snapshot >= self.snapshot_every) {
            self.snapshot()?;
        }
        Ok(&self.state.cases[case_id])
    }

    /// Writes the current state atomically next to the log.
    pub fn snapshot(&mut self) -> Result<()> {
        let Some(disk) = &mut self.disk else {
            return Ok(());
        };
        let path = disk.dir.join(SNAPSHOT_FILE);
        let tmp = disk.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let body = serde_json::to_vec(&Snapshot {
            state: self.state.clone(),
        })
        .expect("state serializes");
        fs::write(&tmp, body).map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))?;
        disk.since_snapshot = 0;
        Ok(())
    }

    pub fn ingest(&mut self, case: DisputeCase) -> Result<String> {
        let id = case.case_id.clone();
        self.append(&id, EventKind::CaseCreated { case })?;
        Ok(id)
    }

    pub fn record_prediction(&mut self, case_id: &str, model_version: &str, explanation: CaseExplanation) -> Result<&CaseRecord> {
        self.append(
            case_id,
            EventKind::PredictionIssued {
                model_version: model_version.to_string(),
                explanation,
            },
        )
    }

    pub fn record_ruling(&mut self, case_id: &str, winner: Party, summary: &str) -> Result<&CaseRecord> {
        self.append(
            case_id,
            EventKind::RulingRecorded {
                winner,
                summary: summary.to_string(),
            },
        )
    }

    pub fn file_appeal(&mut self, case_id: &str, party: Party) -> Result<&CaseRecord> {
        self.append(case_id, EventKind::AppealFiled { party })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use odr_core::synth::{generate_corpus, GeneratorConfig};
    use std::sync::atomic::{AtomicI64, Ordering};
    use std::sync::Arc;

    pub(crate) fn live_cases(n: usize) -> Vec<DisputeCase> {
        generate_corpus(&GeneratorConfig {
            n_cases: n,
            seed: 4,
            ..GeneratorConfig::default()
        })
        .unwrap()
        .0
        .into_iter()
        .map(|mut c| {
            c.outcome = None;
            c
        })
        .collect()
    }

    fn ticking() -> Clock {
        let t = Arc::new(AtomicI64::new(1_600_000_000_000));
        Box::new(move || t.fetch_add(1000, Ordering::SeqCst))
    }

    #[test]
    fn ingest_then_fetch_round_trips() {
        let mut s = Store::in_memory();
        let c = live_cases(1).remove(0);
        let id = s.ingest(c.clone()).unwrap();
        assert_eq!(s.get(&id).unwrap().case, c);
        assert_eq!(s.get(&id).unwrap().status, CaseStatus::Pending);
        assert!(matches!(s.ingest(c.clone()), Err(ServiceError::Duplicate(_))));
        let mut resolved = c;
        resolved.case_id = "other".into();
        resolved.outcome = Some(OutcomeLabel::BuyerWins);
        assert!(matches!(s.ingest(resolved), Err(ServiceError::InvalidCase(_))));
    }

    #[test]
    fn state_machine() {
        let mut s = Store::in_memory();
        let id = s.ingest(live_cases(1).remove(0)).unwrap();
        assert!(matches!(
            s.file_appeal(&id, Party::Buyer),
            Err(ServiceError::IllegalTransition { status: CaseStatus::Pending, .. })
        ));
        s.record_ruling(&id, Party::Seller, "seller shipped").unwrap();
        assert!(matches!(
            s.record_ruling(&id, Party::Buyer, "again"),
            Err(ServiceError::IllegalTransition { status: CaseStatus::Ruled, .. })
        ));
        s.file_appeal(&id, Party::Buyer).unwrap();
        assert!(matches!(
            s.file_appeal(&id, Party::Buyer),
            Err(ServiceError::IllegalTransition { status: CaseStatus::Appealed, .. })
        ));
        let r = s.record_ruling(&id, Party::Buyer, "reversed on appeal").unwrap();
        assert_eq!(r.status, CaseStatus::Ruled);
        assert_eq!(r.case.claim.appeal_count, 1);
        assert_eq!(r.case.outcome, Some(OutcomeLabel::BuyerWins));
        assert_eq!(r.rulings.len(), 2);
        assert!(matches!(s.record_ruling("nope", Party::Buyer, ""), Err(ServiceError::NotFound(_))));
    }

    #[test]
    fn replay_equals_live_state_and_reopen_restores_it() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap().with_clock(ticking());
        s.snapshot_every = 7;
        let cases = live_cases(12);
        for (i, c) in cases.iter().enumerate() {
            let id = s.ingest(c.clone()).unwrap();
            if i % 2 == 0 {
                s.record_ruling(&id, Party::Seller, "ok").unwrap();
            }
            if i % 4 == 0 {
                s.file_appeal(&id, Party::Buyer).unwrap();
                assert!(s.file_appeal(&id, Party::Buyer).is_err());
            }
            if i % 8 == 0 {
                s.record_ruling(&id, Party::Buyer, "second").unwrap();
            }
        }
        let live = s.state().clone();
        let events = read_events(dir.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(events.len() as u64, live.last_event_id);
        assert_eq!(replay(&events).unwrap(), live);
        assert!(dir.path().join(SNAPSHOT_FILE).exists());
        drop(s);
        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.state(), &live);
    }

    #[test]
    fn replay_rejects_an_illegal_log() {
        let c = live_cases(1).remove(0);
        let ev = |id, kind| CaseRecordEvent {
            event_id: id,
            case_id: c.case_id.clone(),
            timestamp_ms: 0,
            kind,
        };
        let log = [
            ev(1, EventKind::CaseCreated { case: c.clone() }),
            ev(2, EventKind::AppealFiled { party: Party::Buyer }),
        ];
        assert!(matches!(replay(&log), Err(ServiceError::IllegalTransition { .. })));
        let out_of_order = [ev(2, EventKind::CaseCreated { case: c.clone() }), ev(1, EventKind::AppealFiled { party: Party::Buyer })];
        assert!(replay(&out_of_order).is_err());
    }
}
