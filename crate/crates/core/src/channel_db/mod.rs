//! In-memory real-time channel database.
//!
//! Every mutation happens under one store-wide write lock and is stamped
//! with a store-wide version, so a snapshot taken under the read lock is a
//! consistent cut. Subscribers are fed from inside the same critical
//! section, which makes per-channel delivery order identical for every
//! subscriber.

mod glob;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

pub use glob::Pattern;

use crate::time::now_ms;

pub const DEFAULT_SUBSCRIBER_QUEUE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelDbError {
    #[error("channel {0} already exists")]
    DuplicateName(String),
    #[error("malformed channel name {0:?}")]
    MalformedName(String),
    #[error("malformed channel pattern {0:?}")]
    MalformedPattern(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("type mismatch on {channel}: expected {expected}, got {got}")]
    TypeMismatch {
        channel: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("{value:?} is not in the enum set of {channel}")]
    NotInEnumSet { channel: String, value: String },
    #[error("enum channels need at least one declared value")]
    EmptyEnumSet,
    #[error("subscriber fell behind and was disconnected")]
    SubscriberOverflow,
}

/// A channel's scalar value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Enum(String),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Float(_) => "float",
            Value::Int(_) => "int",
            Value::Enum(_) => "enum",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Float(v) => Some(v),
            Value::Int(v) => Some(v as f64),
            Value::Enum(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Enum(s) => f.write_str(s),
        }
    }
}

/// The value type fixed at channel creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTag {
    Float,
    Int,
    Enum(Vec<String>),
}

impl ValueTag {
    pub fn name(&self) -> &'static str {
        match self {
            ValueTag::Float => "float",
            ValueTag::Int => "int",
            ValueTag::Enum(_) => "enum",
        }
    }

    fn zero(&self) -> Value {
        match self {
            ValueTag::Float => Value::Float(0.0),
            ValueTag::Int => Value::Int(0),
            ValueTag::Enum(set) => Value::Enum(set[0].clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Setpoint,
    Readback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    Stale,
    Alarm,
}

/// One live process variable as seen by readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub name: String,
    pub value: Value,
    pub value_tag: String,
    pub units: String,
    pub role: Role,
    pub critical: bool,
    pub quality: Quality,
    pub seq: u64,
    pub updated_at: i64,
    pub global_version: u64,
}

/// Everything needed to create a channel.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub name: String,
    pub tag: ValueTag,
    pub units: String,
    pub role: Role,
    pub critical: bool,
    /// A readback whose last update is older than this reads as stale.
    pub stale_after_ms: Option<u64>,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, tag: ValueTag, units: impl Into<String>, role: Role, critical: bool) -> Self {
        ChannelSpec {
            name: name.into(),
            tag,
            units: units.into(),
            role,
            critical,
            stale_after_ms: None,
        }
    }

    pub fn stale_after(mut self, ms: u64) -> Self {
        self.stale_after_ms = Some(ms);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteAck {
    pub seq: u64,
    pub global_version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFilter {
    CriticalOnly,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub value: Value,
    pub seq: u64,
    pub updated_at: i64,
    pub global_version: u64,
    pub role: Role,
}

/// A consistent point-in-time cut of the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub version: u64,
    pub entries: BTreeMap<String, SnapshotEntry>,
}

struct ChannelState {
    tag: ValueTag,
    units: String,
    role: Role,
    critical: bool,
    stale_after_ms: Option<u64>,
    value: Value,
    quality: Quality,
    seq: u64,
    updated_at: i64,
    global_version: u64,
}

impl ChannelState {
    fn record(&self, name: &str, now: i64) -> ChannelRecord {
        let mut quality = self.quality;
        if quality == Quality::Ok && self.role == Role::Readback {
            if let Some(max_age) = self.stale_after_ms {
                if now - self.updated_at > max_age as i64 {
                    quality = Quality::Stale;
                }
            }
        }
        ChannelRecord {
            name: name.to_string(),
            value: self.value.clone(),
            value_tag: self.tag.name().to_string(),
            units: self.units.clone(),
            role: self.role,
            critical: self.critical,
            quality,
            seq: self.seq,
            updated_at: self.updated_at,
            global_version: self.global_version,
        }
    }
}

struct Subscriber {
    pattern: Pattern,
    tx: mpsc::Sender<ChannelRecord>,
    overflowed: Arc<AtomicBool>,
}

#[derive(Default)]
struct Inner {
    channels: BTreeMap<String, ChannelState>,
    version: u64,
    subscribers: Vec<Subscriber>,
}

pub struct ChannelDb {
    inner: RwLock<Inner>,
    queue_bound: usize,
}

impl Default for ChannelDb {
    fn default() -> Self {
        Self::new()
    }
}

impl ChannelDb {
    pub fn new() -> Self {
        Self::with_queue_bound(DEFAULT_SUBSCRIBER_QUEUE)
    }

    pub fn with_queue_bound(queue_bound: usize) -> Self {
        ChannelDb {
            inner: RwLock::new(Inner::default()),
            queue_bound: queue_bound.max(1),
        }
    }

    pub fn create_channel(&self, spec: ChannelSpec) -> Result<ChannelRecord, ChannelDbError> {
        if !is_valid_name(&spec.name) {
            return Err(ChannelDbError::MalformedName(spec.name));
        }
        if let ValueTag::Enum(set) = &spec.tag {
            if set.is_empty() {
                return Err(ChannelDbError::EmptyEnumSet);
            }
        }
        let mut inner = self.inner.write();
        if inner.channels.contains_key(&spec.name) {
            return Err(ChannelDbError::DuplicateName(spec.name));
        }
        inner.version += 1;
        let now = now_ms();
        let state = ChannelState {
            value: spec.tag.zero(),
            tag: spec.tag,
            units: spec.units,
            role: spec.role,
            critical: spec.critical,
            stale_after_ms: spec.stale_after_ms,
            quality: Quality::Ok,
            seq: 0,
            updated_at: now,
            global_version: inner.version,
        };
        let record = state.record(&spec.name, now);
        inner.channels.insert(spec.name, state);
        Ok(record)
    }

    pub fn write(&self, name: &str, value: Value) -> Result<WriteAck, ChannelDbError> {
        self.write_with_quality(name, value, Quality::Ok)
    }

    pub fn write_with_quality(&self, name: &str, value: Value, quality: Quality) -> Result<WriteAck, ChannelDbError> {
        let mut guard = self.inner.write();
        let inner = &mut *guard;
        let state = inner
            .channels
            .get_mut(name)
            .ok_or_else(|| ChannelDbError::UnknownChannel(name.to_string()))?;
        check_tag(name, &state.tag, &value)?;

        inner.version += 1;
        let now = now_ms();
        state.value = value;
        state.quality = quality;
        state.seq += 1;
        state.updated_at = now;
        state.global_version = inner.version;
        let ack = WriteAck {
            seq: state.seq,
            global_version: inner.version,
        };

        if !inner.subscribers.is_empty() {
            let record = state.record(name, now);
            inner.subscribers.retain(|sub| {
                if !sub.pattern.matches(name) {
                    return !sub.tx.is_closed();
                }
                match sub.tx.try_send(record.clone()) {
                    Ok(()) => true,
                    Err(mpsc::error::TrySendError::Full(_)) => {
                        sub.overflowed.store(true, Ordering::SeqCst);
                        false
                    }
                    Err(mpsc::error::TrySendError::Closed(_)) => false,
                }
            });
        }
        Ok(ack)
    }

    pub fn read(&self, name: &str) -> Result<ChannelRecord, ChannelDbError> {
        let inner = self.inner.read();
        inner
            .channels
            .get(name)
            .map(|s| s.record(name, now_ms()))
            .ok_or_else(|| ChannelDbError::UnknownChannel(name.to_string()))
    }

    /// All channels matching `pattern`, sorted by name.
    pub fn read_pattern(&self, pattern: &str) -> Result<Vec<ChannelRecord>, ChannelDbError> {
        let pattern = Pattern::parse(pattern)?;
        let inner = self.inner.read();
        let now = now_ms();
        Ok(inner
            .channels
            .iter()
            .filter(|(name, _)| pattern.matches(name))
            .map(|(name, s)| s.record(name, now))
            .collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.inner.read().channels.contains_key(name)
    }

    pub fn tag(&self, name: &str) -> Result<ValueTag, ChannelDbError> {
        self.inner
            .read()
            .channels
            .get(name)
            .map(|s| s.tag.clone())
            .ok_or_else(|| ChannelDbError::UnknownChannel(name.to_string()))
    }

    pub fn version(&self) -> u64 {
        self.inner.read().version
    }

    pub fn len(&self) -> usize {
        self.inner.read().channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Deltas for channels matching `pattern`, starting after the current
    /// state. The queue holds at most the configured bound; a subscriber
    /// that lets it fill is dropped and its stream ends with
    /// [`ChannelDbError::SubscriberOverflow`].
    pub fn subscribe(&self, pattern: &str) -> Result<Subscription, ChannelDbError> {
        let pattern = Pattern::parse(pattern)?;
        let (tx, rx) = mpsc::channel(self.queue_bound);
        let overflowed = Arc::new(AtomicBool::new(false));
        self.inner.write().subscribers.push(Subscriber {
            pattern,
            tx,
            overflowed: overflowed.clone(),
        });
        Ok(Subscription { rx, overflowed })
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.read().subscribers.len()
    }

    pub fn snapshot(&self, filter: SnapshotFilter) -> StoreSnapshot {
        let inner = self.inner.read();
        let entries = inner
            .channels
            .iter()
            .filter(|(_, s)| filter == SnapshotFilter::All || s.critical)
            .map(|(name, s)| {
                (
                    name.clone(),
                    SnapshotEntry {
                        value: s.value.clone(),
                        seq: s.seq,
                        updated_at: s.updated_at,
                        global_version: s.global_version,
                        role: s.role,
                    },
                )
            })
            .collect();
        StoreSnapshot {
            version: inner.version,
            entries,
        }
    }
}

fn check_tag(name: &str, tag: &ValueTag, value: &Value) -> Result<(), ChannelDbError> {
    match (tag, value) {
        (ValueTag::Float, Value::Float(_)) | (ValueTag::Int, Value::Int(_)) => Ok(()),
        (ValueTag::Enum(set), Value::Enum(s)) => {
            if set.iter().any(|allowed| allowed == s) {
                Ok(())
            } else {
                Err(ChannelDbError::NotInEnumSet {
                    channel: name.to_string(),
                    value: s.clone(),
                })
            }
        }
        _ => Err(ChannelDbError::TypeMismatch {
            channel: name.to_string(),
            expected: tag.name(),
            got: value.kind(),
        }),
    }
}

/// `[A-Z0-9]+(:[A-Za-z0-9_]+){1,3}`
pub fn is_valid_name(name: &str) -> bool {
    let mut parts = name.split(':');
    let Some(head) = parts.next() else {
        return false;
    };
    if head.is_empty() || !head.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) {
        return false;
    }
    let mut rest = 0;
    for part in parts {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
            return false;
        }
        rest += 1;
    }
    (1..=3).contains(&rest)
}

/// Receiving end of [`ChannelDb::subscribe`].
pub struct Subscription {
    rx: mpsc::Receiver<ChannelRecord>,
    overflowed: Arc<AtomicBool>,
}

impl Subscription {
    fn ended(&self) -> Result<Option<ChannelRecord>, ChannelDbError> {
        if self.overflowed.load(Ordering::SeqCst) {
            Err(ChannelDbError::SubscriberOverflow)
        } else {
            Ok(None)
        }
    }

    /// `Ok(None)` means the store went away.
    pub async fn recv(&mut self) -> Result<Option<ChannelRecord>, ChannelDbError> {
        match self.rx.recv().await {
            Some(r) => Ok(Some(r)),
            None => self.ended(),
        }
    }

    pub fn recv_blocking(&mut self) -> Result<Option<ChannelRecord>, ChannelDbError> {
        match self.rx.blocking_recv() {
            Some(r) => Ok(Some(r)),
            None => self.ended(),
        }
    }

    /// Non-blocking; `Ok(None)` when nothing is queued.
    pub fn try_recv(&mut self) -> Result<Option<ChannelRecord>, ChannelDbError> {
        match self.rx.try_recv() {
            Ok(r) => Ok(Some(r)),
            Err(mpsc::error::TryRecvError::Empty) => Ok(None),
            Err(mpsc::error::TryRecvError::Disconnected) => self.ended(),
        }
    }
}
