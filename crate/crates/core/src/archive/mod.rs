//! Durable relational archive.
//!
//! Each whitelisted table is an append-only log `tables/<name>.log` with one
//! record per line, plus a sidecar `tables/<name>.idx` mapping row id to the
//! byte offset of its record. Every successful insert is flushed and synced
//! before returning. Snapshots and tunes are written as families: child rows
//! first, then the parent row as the commit point. On open, a torn trailing
//! line is cut off and child rows without a committed parent are discarded.

mod record;
pub mod schema;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{Cell, NewRow, Row};
pub use schema::{schema, ColumnSchema, ColumnType, TableSchema, ALL_TABLES};

use crate::channel_db::{StoreSnapshot, Value};
use crate::time::now_ms;
use crate::tune::{BeamParameters, ScalingLaw};
use schema::FAMILIES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchiveError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("{table}.log line {line}: {reason}")]
    Corrupt { table: String, line: usize, reason: String },
    #[error("unknown tune {0}")]
    UnknownTune(i64),
    #[error("unknown snapshot {0}")]
    UnknownSnapshot(i64),
}

impl From<std::io::Error> for ArchiveError {
    fn from(e: std::io::Error) -> Self {
        ArchiveError::StorageFailure(e.to_string())
    }
}

pub type Result<T, E = ArchiveError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Scheduled,
    Manual,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Scheduled => "scheduled",
            Trigger::Manual => "manual",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "scheduled" => Some(Trigger::Scheduled),
            "manual" => Some(Trigger::Manual),
            _ => None,
        }
    }
}

/// Where a tune came from; same vocabulary as a snapshot trigger.
pub type Provenance = Trigger;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub id: i64,
    pub taken_at: i64,
    pub trigger: Trigger,
    pub store_version: i64,
    pub n_values: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotValueRow {
    pub snapshot_id: i64,
    pub channel: String,
    pub value_float: Option<f64>,
    pub value_int: Option<i64>,
    pub value_text: Option<String>,
    pub seq: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub id: i64,
    pub label: String,
    pub created_at: i64,
    pub provenance: Provenance,
    pub mass_amu: f64,
    pub charge_state: i64,
    pub energy_mev_u: f64,
}

impl TuneRow {
    pub fn beam(&self) -> BeamParameters {
        BeamParameters {
            mass_amu: self.mass_amu,
            charge_state: self.charge_state,
            energy_mev_u: self.energy_mev_u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneValueRow {
    pub tune_id: i64,
    pub channel: String,
    pub scaling_law: ScalingLaw,
    pub value_float: f64,
}

/// One setpoint captured into a tune.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneValue {
    pub channel: String,
    pub scaling_law: ScalingLaw,
    pub value: f64,
}

/// Where an injected crash interrupts a family write. Used by the
/// crash-recovery tests; after a crash the store refuses further work and
/// must be reopened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Only the first `n` child records reach disk.
    AfterChildren(usize),
    /// Child record `row` is cut after `bytes` bytes.
    TornChild { row: usize, bytes: usize },
    /// All children are written, the parent is not.
    BeforeParent,
    /// The parent record is cut after `bytes` bytes.
    TornParent { bytes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The next `n` mutating calls fail with `StorageFailure` and write nothing.
    FailNext(usize),
    /// The next family write crashes at the given point.
    Crash(CrashPoint),
}

#[derive(Default)]
struct TableData {
    rows: Vec<Row>,
    by_id: HashMap<i64, usize>,
    /// For child tables: parent id -> row positions.
    by_parent: HashMap<i64, Vec<usize>>,
}

struct TableFile {
    log: File,
    idx: File,
    len: u64,
    next_id: i64,
}

struct Writer {
    files: BTreeMap<&'static str, TableFile>,
    last_family_ts: HashMap<&'static str, i64>,
    fault: Option<Fault>,
    crashed: bool,
}

pub struct ArchiveStore {
    dir: PathBuf,
    tables: BTreeMap<&'static str, RwLock<TableData>>,
    writer: Mutex<Writer>,
}

impl std::fmt::Debug for ArchiveStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ArchiveStore").field("dir", &self.dir).finish()
    }
}

struct LoadedTable {
    rows: Vec<Row>,
    offsets: Vec<u64>,
    len: u64,
    max_id: i64,
}

impl ArchiveStore {
    /// Opens (creating if needed) the store under `data_dir/tables`.
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self> {
        let dir = data_dir.as_ref().join("tables");
        fs::create_dir_all(&dir)?;

        let mut loaded: BTreeMap<&'static str, LoadedTable> = BTreeMap::new();
        for s in ALL_TABLES {
            loaded.insert(s.table, load_log(&dir, s)?);
        }

        // Discard children of uncommitted parents. Under the write protocol
        // they can only sit at the tail of the child log.
        let mut id_floor: HashMap<&'static str, i64> = HashMap::new();
        for fam in &FAMILIES {
            let parent_ids: HashSet<i64> = loaded[fam.parent].rows.iter().map(Row::id).collect();
            let child_schema = schema::schema(fam.child).expect("family tables are whitelisted");
            let fk = child_schema.column_index(fam.foreign_key).expect("fk column exists");
            let child = loaded.get_mut(fam.child).expect("loaded");
            let max_fk = child.rows.iter().filter_map(|r| r.cells[fk].as_i64()).max().unwrap_or(0);
            id_floor.insert(fam.parent, max_fk);

            let first_orphan = child
                .rows
                .iter()
                .position(|r| !parent_ids.contains(&r.cells[fk].as_i64().unwrap_or(-1)));
            if let Some(pos) = first_orphan {
                let tail_is_orphans = child.rows[pos..]
                    .iter()
                    .all(|r| !parent_ids.contains(&r.cells[fk].as_i64().unwrap_or(-1)));
                if tail_is_orphans {
                    let cut = child.offsets[pos];
                    truncate_log(&dir, fam.child, cut)?;
                    child.rows.truncate(pos);
                    child.offsets.truncate(pos);
                    child.len = cut;
                } else {
                    let keep: Vec<bool> = child
                        .rows
                        .iter()
                        .map(|r| parent_ids.contains(&r.cells[fk].as_i64().unwrap_or(-1)))
                        .collect();
                    let mut it = keep.iter();
                    child.rows.retain(|_| *it.next().unwrap());
                    let mut it = keep.iter();
                    child.offsets.retain(|_| *it.next().unwrap());
                }
            }
        }

        let mut tables = BTreeMap::new();
        let mut files = BTreeMap::new();
        for s in ALL_TABLES {
            let lt = loaded.remove(s.table).expect("every table loaded");
            sync_index(&dir, s.table, &lt.rows, &lt.offsets)?;
            let log = OpenOptions::new().append(true).open(log_path(&dir, s.table))?;
            let idx = OpenOptions::new().append(true).open(idx_path(&dir, s.table))?;
            let floor = id_floor.get(s.table).copied().unwrap_or(0);
            files.insert(
                s.table,
                TableFile {
                    log,
                    idx,
                    len: lt.len,
                    next_id: lt.max_id.max(floor) + 1,
                },
            );
            let mut data = TableData::default();
            let fk = child_fk(s.table);
            for row in lt.rows {
                push_row(&mut data, fk, row);
            }
            tables.insert(s.table, RwLock::new(data));
        }

        Ok(ArchiveStore {
            dir,
            tables,
            writer: Mutex::new(Writer {
                files,
                last_family_ts: HashMap::new(),
                fault: None,
                crashed: false,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn inject_fault(&self, fault: Fault) {
        self.writer.lock().fault = Some(fault);
    }

    pub fn clear_fault(&self) {
        self.writer.lock().fault = None;
    }

    fn table(&self, name: &str) -> Result<(&'static TableSchema, &RwLock<TableData>)> {
        let s = schema::schema(name).ok_or_else(|| ArchiveError::UnknownTable(name.to_string()))?;
        Ok((s, &self.tables[s.table]))
    }

    pub fn insert(&self, table: &str, row: NewRow) -> Result<i64> {
        Ok(self.insert_many(table, vec![row])?[0])
    }

    /// Appends rows with a single sync. Either every row is validated and
    /// written or none is.
    pub fn insert_many(&self, table: &str, rows: Vec<NewRow>) -> Result<Vec<i64>> {
        let (s, data) = self.table(table)?;
        if s.table == "snapshot_values" || s.table == "tune_values" {
            return Err(ArchiveError::SchemaMismatch(format!(
                "{} rows are only written with their parent",
                s.table
            )));
        }
        let mut w = self.writer.lock();
        w.check_fault()?;
        let file = w.files.get_mut(s.table).expect("open table");
        let mut built = Vec::with_capacity(rows.len());
        for (i, new) in rows.iter().enumerate() {
            let row = record::build_row(s, file.next_id + i as i64, new).map_err(ArchiveError::SchemaMismatch)?;
            built.push(row);
        }
        append_rows(file, s, &built, None)?;
        let ids = built.iter().map(Row::id).collect();
        let mut d = data.write();
        let fk = child_fk(s.table);
        for row in built {
            push_row(&mut d, fk, row);
        }
        Ok(ids)
    }

    /// All committed rows of `table` in insertion order.
    pub fn scan(&self, table: &str) -> Result<Vec<Row>> {
        let (_, data) = self.table(table)?;
        Ok(data.read().rows.clone())
    }

    /// Runs `f` over the committed rows without copying them.
    pub fn with_rows<T>(&self, table: &str, f: impl FnOnce(&TableSchema, &[Row]) -> T) -> Result<T> {
        let (s, data) = self.table(table)?;
        let d = data.read();
        Ok(f(s, &d.rows))
    }

    pub fn get(&self, table: &str, id: i64) -> Result<Option<Row>> {
        let (_, data) = self.table(table)?;
        let d = data.read();
        Ok(d.by_id.get(&id).map(|&i| d.rows[i].clone()))
    }

    pub fn count(&self, table: &str) -> Result<usize> {
        let (_, data) = self.table(table)?;
        Ok(data.read().rows.len())
    }

    pub fn persist_snapshot(&self, snap: &StoreSnapshot, trigger: Trigger) -> Result<i64> {
        let children: Vec<NewRow> = snap
            .entries
            .iter()
            .map(|(name, e)| {
                let mut r = NewRow::new().with("channel", name.as_str()).with("seq", e.seq as i64);
                match &e.value {
                    Value::Float(v) => r.set("value_float", *v),
                    Value::Int(v) => r.set("value_int", *v),
                    Value::Enum(s) => r.set("value_text", s.as_str()),
                }
                r
            })
            .collect();
        let n = children.len() as i64;
        let version = snap.version as i64;
        self.write_family(&FAMILIES[0], children, |taken_at| {
            NewRow::new()
                .with("taken_at", taken_at)
                .with("trigger", trigger.as_str())
                .with("store_version", version)
                .with("n_values", n)
        })
    }

    pub fn persist_tune(&self, label: &str, provenance: Provenance, beam: &BeamParameters, values: &[TuneValue]) -> Result<i64> {
        beam.validate()
            .map_err(|e| ArchiveError::SchemaMismatch(e.to_string()))?;
        let children = values
            .iter()
            .map(|v| {
                NewRow::new()
                    .with("channel", v.channel.as_str())
                    .with("scaling_law", v.scaling_law.as_str())
                    .with("value_float", v.value)
            })
            .collect();
        self.write_family(&FAMILIES[1], children, |created_at| {
            NewRow::new()
                .with("label", label)
                .with("created_at", created_at)
                .with("provenance", provenance.as_str())
                .with("mass_amu", beam.mass_amu)
                .with("charge_state", beam.charge_state)
                .with("energy_mev_u", beam.energy_mev_u)
        })
    }

    fn write_family(&self, fam: &schema::Family, children: Vec<NewRow>, parent: impl FnOnce(i64) -> NewRow) -> Result<i64> {
        let ps = schema::schema(fam.parent).expect("whitelisted");
        let cs = schema::schema(fam.child).expect("whitelisted");
        let mut w = self.writer.lock();
        w.check_fault()?;
        let crash = match w.fault.take() {
            Some(Fault::Crash(p)) => Some(p),
            other => {
                w.fault = other;
                None
            }
        };

        let parent_id = w.files[fam.parent].next_id;
        let child_start = w.files[fam.child].next_id;
        let built_children = children
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                c.set(fam.foreign_key, parent_id);
                record::build_row(cs, child_start + i as i64, &c)
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(ArchiveError::SchemaMismatch)?;

        let now = now_ms();
        let ts = now.max(w.last_family_ts.get(fam.parent).copied().unwrap_or(i64::MIN));
        let parent_row = record::build_row(ps, parent_id, &parent(ts)).map_err(ArchiveError::SchemaMismatch)?;

        let child_crash = match crash {
            Some(CrashPoint::AfterChildren(n)) => Some(ChildCut::Rows(n.min(built_children.len()))),
            Some(CrashPoint::TornChild { row, bytes }) => Some(ChildCut::Torn { row, bytes }),
            _ => None,
        };
        let cfile = w.files.get_mut(fam.child).expect("open table");
        if let Err(e) = append_rows(cfile, cs, &built_children, child_crash) {
            if child_crash.is_some() {
                w.crashed = true;
            }
            return Err(e);
        }
        let pfile = w.files.get_mut(fam.parent).expect("open table");
        match crash {
            Some(CrashPoint::BeforeParent) => {
                w.crashed = true;
                return Err(ArchiveError::StorageFailure("injected crash before parent record".into()));
            }
            Some(CrashPoint::TornParent { bytes }) => {
                let res = append_rows(pfile, ps, std::slice::from_ref(&parent_row), Some(ChildCut::Torn { row: 0, bytes }));
                w.crashed = true;
                return res.and(Err(ArchiveError::StorageFailure("injected crash".into())));
            }
            _ => {}
        }
        append_rows(pfile, ps, std::slice::from_ref(&parent_row), None)?;
        w.last_family_ts.insert(fam.parent, ts);

        {
            let mut cd = self.tables[fam.child].write();
            let fk = child_fk(fam.child);
            for row in built_children {
                push_row(&mut cd, fk, row);
            }
        }
        push_row(&mut self.tables[fam.parent].write(), None, parent_row);
        Ok(parent_id)
    }

    pub fn list_snapshots(&self) -> Result<Vec<SnapshotRow>> {
        self.with_rows("snapshots", |s, rows| rows.iter().map(|r| snapshot_row(s, r)).collect())?
    }

    pub fn load_snapshot(&self, id: i64) -> Result<(SnapshotRow, Vec<SnapshotValueRow>)> {
        let row = self.get("snapshots", id)?.ok_or(ArchiveError::UnknownSnapshot(id))?;
        let parent = snapshot_row(&schema::SNAPSHOTS, &row)?;
        let values = self.children("snapshot_values", id, snapshot_value_row)?;
        Ok((parent, values))
    }

    pub fn list_tunes(&self) -> Result<Vec<TuneRow>> {
        self.with_rows("tunes", |s, rows| rows.iter().map(|r| tune_row(s, r)).collect())?
    }

    /// Looks a tune up by id through the in-memory index.
    pub fn load_tune(&self, id: i64) -> Result<(TuneRow, Vec<TuneValueRow>)> {
        let row = self.get("tunes", id)?.ok_or(ArchiveError::UnknownTune(id))?;
        let parent = tune_row(&schema::TUNES, &row)?;
        let values = self.children("tune_values", id, tune_value_row)?;
        Ok((parent, values))
    }

    fn children<T>(&self, table: &str, parent: i64, conv: fn(&TableSchema, &Row) -> Result<T>) -> Result<Vec<T>> {
        let (s, data) = self.table(table)?;
        let d = data.read();
        d.by_parent
            .get(&parent)
            .map(|idxs| idxs.iter().map(|&i| conv(s, &d.rows[i])).collect())
            .unwrap_or_else(|| Ok(Vec::new()))
    }
}

impl Writer {
    fn check_fault(&mut self) -> Result<()> {
        if self.crashed {
            return Err(ArchiveError::StorageFailure("store crashed; reopen required".into()));
        }
        if let Some(Fault::FailNext(n)) = self.fault {
            self.fault = if n > 1 { Some(Fault::FailNext(n - 1)) } else { None };
            if n > 0 {
                return Err(ArchiveError::StorageFailure("injected storage failure".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum ChildCut {
    Rows(usize),
    Torn { row: usize, bytes: usize },
}

fn append_rows(file: &mut TableFile, s: &TableSchema, rows: &[Row], cut: Option<ChildCut>) -> Result<()> {
    let mut buf = Vec::new();
    let mut idx_buf = String::new();
    let mut offset = file.len;
    for (i, row) in rows.iter().enumerate() {
        let mut line = record::encode(s, row);
        line.push('\n');
        match cut {
            Some(ChildCut::Rows(n)) if i >= n => break,
            Some(ChildCut::Torn { row: r, bytes }) if i == r => {
                buf.extend_from_slice(&line.as_bytes()[..bytes.min(line.len() - 1)]);
                break;
            }
            _ => {}
        }
        idx_buf.push_str(&format!("{} {}\n", row.id(), offset));
        offset += line.len() as u64;
        buf.extend_from_slice(line.as_bytes());
    }
    file.log.write_all(&buf)?;
    file.log.flush()?;
    file.log.sync_data()?;
    if cut.is_some() {
        return Err(ArchiveError::StorageFailure("injected crash during family write".into()));
    }
    file.idx.write_all(idx_buf.as_bytes())?;
    file.len = offset;
    file.next_id += rows.len() as i64;
    Ok(())
}

fn push_row(data: &mut TableData, fk: Option<usize>, row: Row) {
    let pos = data.rows.len();
    data.by_id.insert(row.id(), pos);
    if let Some(fk) = fk {
        if let Some(parent) = row.cells[fk].as_i64() {
            data.by_parent.entry(parent).or_default().push(pos);
        }
    }
    data.rows.push(row);
}

fn child_fk(table: &str) -> Option<usize> {
    FAMILIES
        .iter()
        .find(|f| f.child == table)
        .and_then(|f| schema::schema(f.child)?.column_index(f.foreign_key))
}

fn log_path(dir: &Path, table: &str) -> PathBuf {
    dir.join(format!("{table}.log"))
}

fn idx_path(dir: &Path, table: &str) -> PathBuf {
    dir.join(format!("{table}.idx"))
}

fn load_log(dir: &Path, s: &TableSchema) -> Result<LoadedTable> {
    let path = log_path(dir, s.table);
    let mut bytes = Vec::new();
    match File::open(&path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            File::create(&path)?;
        }
        Err(e) => return Err(e.into()),
    }

    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    let mut pos = 0usize;
    let mut line_no = 0;
    let mut max_id = 0;
    while pos < bytes.len() {
        line_no += 1;
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            // torn final record
            break;
        };
        let line = &bytes[pos..pos + nl];
        let decoded = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|l| record::decode(s, l));
        match decoded {
            Ok(row) => {
                max_id = max_id.max(row.id());
                rows.push(row);
                offsets.push(pos as u64);
            }
            Err(reason) if pos + nl + 1 == bytes.len() => {
                tracing::warn!(table = s.table, %reason, "dropping unreadable final record");
                break;
            }
            Err(reason) => {
                return Err(ArchiveError::Corrupt {
                    table: s.table.to_string(),
                    line: line_no,
                    reason,
                })
            }
        }
        pos += nl + 1;
    }
    if pos < bytes.len() {
        truncate_log(dir, s.table, pos as u64)?;
    }
    Ok(LoadedTable {
        rows,
        offsets,
        len: pos as u64,
        max_id,
    })
}

fn truncate_log(dir: &Path, table: &str, len: u64) -> Result<()> {
    let f = OpenOptions::new().write(true).open(log_path(dir, table))?;
    f.set_len(len)?;
    f.sync_all()?;
    Ok(())
}

/// Keeps `<table>.idx` when it agrees with the log; rewrites it otherwise.
fn sync_index(dir: &Path, table: &str, rows: &[Row], offsets: &[u64]) -> Result<()> {
    let mut expected = String::new();
    for (row, off) in rows.iter().zip(offsets) {
        expected.push_str(&format!("{} {}\n", row.id(), off));
    }
    let path = idx_path(dir, table);
    if fs::read_to_string(&path).ok().as_deref() == Some(expected.as_str()) {
        return Ok(());
    }
    let tmp = dir.join(format!("{table}.idx.tmp"));
    fs::write(&tmp, expected.as_bytes())?;
    fs::rename(&tmp, &path)?;
    Ok(())
}

fn bad(table: &str, what: &str) -> ArchiveError {
    ArchiveError::Corrupt {
        table: table.to_string(),
        line: 0,
        reason: format!("bad {what}"),
    }
}

fn int(s: &TableSchema, r: &Row, c: &str) -> Result<i64> {
    r.get(s, c).and_then(Cell::as_i64).ok_or_else(|| bad(s.table, c))
}

fn float(s: &TableSchema, r: &Row, c: &str) -> Result<f64> {
    r.get(s, c).and_then(Cell::as_f64).ok_or_else(|| bad(s.table, c))
}

fn text<'a>(s: &TableSchema, r: &'a Row, c: &str) -> Result<&'a str> {
    r.get(s, c).and_then(Cell::as_str).ok_or_else(|| bad(s.table, c))
}

fn snapshot_row(s: &TableSchema, r: &Row) -> Result<SnapshotRow> {
    Ok(SnapshotRow {
        id: r.id(),
        taken_at: int(s, r, "taken_at")?,
        trigger: Trigger::parse(text(s, r, "trigger")?).ok_or_else(|| bad(s.table, "trigger"))?,
        store_version: int(s, r, "store_version")?,
        n_values: int(s, r, "n_values")?,
    })
}

fn snapshot_value_row(s: &TableSchema, r: &Row) -> Result<SnapshotValueRow> {
    Ok(SnapshotValueRow {
        snapshot_id: int(s, r, "snapshot_id")?,
        channel: text(s, r, "channel")?.to_string(),
        value_float: r.get(s, "value_float").and_then(Cell::as_f64),
        value_int: r.get(s, "value_int").and_then(Cell::as_i64),
        value_text: r.get(s, "value_text").and_then(Cell::as_str).map(str::to_string),
        seq: int(s, r, "seq")?,
    })
}

fn tune_row(s: &TableSchema, r: &Row) -> Result<TuneRow> {
    Ok(TuneRow {
        id: r.id(),
        label: text(s, r, "label")?.to_string(),
        created_at: int(s, r, "created_at")?,
        provenance: Trigger::parse(text(s, r, "provenance")?).ok_or_else(|| bad(s.table, "provenance"))?,
        mass_amu: float(s, r, "mass_amu")?,
        charge_state: int(s, r, "charge_state")?,
        energy_mev_u: float(s, r, "energy_mev_u")?,
    })
}

fn tune_value_row(s: &TableSchema, r: &Row) -> Result<TuneValueRow> {
    Ok(TuneValueRow {
        tune_id: int(s, r, "tune_id")?,
        channel: text(s, r, "channel")?.to_string(),
        scaling_law: ScalingLaw::parse(text(s, r, "scaling_law")?).ok_or_else(|| bad(s.table, "scaling_law"))?,
        value_float: float(s, r, "value_float")?,
    })
}
