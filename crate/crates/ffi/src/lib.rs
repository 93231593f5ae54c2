//! C ABI over the tunevault archive, query engine and beam kinematics.
//!
//! Conventions:
//! - Every fallible function returns a [`TvStatus`]; on failure the message
//!   is available from [`tv_last_error`] on the same thread.
//! - Strings passed in are NUL-terminated UTF-8. Strings handed out are
//!   owned by the caller and must be released with [`tv_string_free`].
//! - Structured data crosses the boundary as JSON text.
//! - A [`TvArchive`] handle may be shared between threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde_json::Value as Json;
use tunevault::archive::{schema, ArchiveError, ArchiveStore, Cell, NewRow};
use tunevault::query::{self, QueryError, QuerySpec};
use tunevault::tune::{self, BeamError, BeamParameters};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    MalformedJson = 3,
    InvalidBeam = 4,
    UnknownTable = 5,
    UnknownColumn = 6,
    TypeMismatch = 7,
    BadOperator = 8,
    BadPagination = 9,
    SchemaMismatch = 10,
    StorageFailure = 11,
    Corrupt = 12,
    UnknownTune = 13,
    UnknownSnapshot = 14,
    Panic = 99,
}

/// Species triple: mass in u, integer charge state, kinetic energy in MeV/u.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvBeam {
    pub mass_amu: f64,
    pub charge_state: i64,
    pub energy_mev_u: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TvKinematics {
    pub gamma: f64,
    pub beta: f64,
    pub beta_gamma: f64,
    /// Total momentum times c, MeV.
    pub pc_total_mev: f64,
    /// Magnetic rigidity, T·m.
    pub rigidity_tm: f64,
}

/// Multiplicative factors from an archived beam to a new beam.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TvScaleFactors {
    pub magnetic: f64,
    pub electrostatic: f64,
    pub rf_amplitude: f64,
    pub none: f64,
}

/// Opaque handle to an open archive directory.
pub struct TvArchive {
    store: ArchiveStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TvStatus, String);

impl From<ArchiveError> for Failure {
    fn from(e: ArchiveError) -> Self {
        let status = match e {
            ArchiveError::UnknownTable(_) => TvStatus::UnknownTable,
            ArchiveError::SchemaMismatch(_) => TvStatus::SchemaMismatch,
            ArchiveError::StorageFailure(_) => TvStatus::StorageFailure,
            ArchiveError::Corrupt { .. } => TvStatus::Corrupt,
            ArchiveError::UnknownTune(_) => TvStatus::UnknownTune,
            ArchiveError::UnknownSnapshot(_) => TvStatus::UnknownSnapshot,
        };
        Failure(status, e.to_string())
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        let status = match e {
            QueryError::UnknownTable(_) => TvStatus::UnknownTable,
            QueryError::UnknownColumn { .. } => TvStatus::UnknownColumn,
            QueryError::TypeMismatch { .. } => TvStatus::TypeMismatch,
            QueryError::BadOperator { .. } => TvStatus::BadOperator,
            QueryError::BadPagination(_) => TvStatus::BadPagination,
            QueryError::Storage(_) => TvStatus::StorageFailure,
        };
        Failure(status, e.to_string())
    }
}

impl From<BeamError> for Failure {
    fn from(e: BeamError) -> Self {
        Failure(TvStatus::InvalidBeam, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TvStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            TvStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(TvStatus::NullPointer, "null pointer argument".into())
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(TvStatus::InvalidUtf8, e.to_string()))
}

/// # Safety
/// `p` is null or valid for writes of `T`.
unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(null)
}

fn parse_json(text: &str) -> Result<Json, Failure> {
    serde_json::from_str(text).map_err(|e| Failure(TvStatus::MalformedJson, e.to_string()))
}

fn json_out(value: &impl serde::Serialize, out: &mut *mut c_char) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Failure(TvStatus::MalformedJson, e.to_string()))?;
    *out = CString::new(text).map_err(|e| Failure(TvStatus::MalformedJson, e.to_string()))?.into_raw();
    Ok(())
}

fn beam_of(b: &TvBeam) -> BeamParameters {
    BeamParameters {
        mass_amu: b.mass_amu,
        charge_state: b.charge_state,
        energy_mev_u: b.energy_mev_u,
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn tv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Stable upper-case name of a status code. Never null.
#[no_mangle]
pub extern "C" fn tv_status_name(status: TvStatus) -> *const c_char {
    let s: &'static CStr = match status {
        TvStatus::Ok => c"OK",
        TvStatus::NullPointer => c"NULL_POINTER",
        TvStatus::InvalidUtf8 => c"INVALID_UTF8",
        TvStatus::MalformedJson => c"MALFORMED_JSON",
        TvStatus::InvalidBeam => c"INVALID_BEAM",
        TvStatus::UnknownTable => c"UNKNOWN_TABLE",
        TvStatus::UnknownColumn => c"UNKNOWN_COLUMN",
        TvStatus::TypeMismatch => c"TYPE_MISMATCH",
        TvStatus::BadOperator => c"BAD_OPERATOR",
        TvStatus::BadPagination => c"BAD_PAGINATION",
        TvStatus::SchemaMismatch => c"SCHEMA_MISMATCH",
        TvStatus::StorageFailure => c"STORAGE_FAILURE",
        TvStatus::Corrupt => c"CORRUPT",
        TvStatus::UnknownTune => c"UNKNOWN_TUNE",
        TvStatus::UnknownSnapshot => c"UNKNOWN_SNAPSHOT",
        TvStatus::Panic => c"PANIC",
    };
    s.as_ptr()
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens (creating if needed) the archive rooted at `data_dir`, recovering
/// any interrupted write.
///
/// # Safety
/// `data_dir` is a valid string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tv_archive_open(data_dir: *const c_char, out: *mut *mut TvArchive) -> TvStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let dir = str_arg(data_dir)?;
        let store = ArchiveStore::open(dir)?;
        *out = Box::into_raw(Box::new(TvArchive { store }));
        Ok(())
    })
}

/// Closes a handle. Null is ignored.
///
/// # Safety
/// `archive` is null or an open handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tv_archive_close(archive: *mut TvArchive) {
    if !archive.is_null() {
        drop(Box::from_raw(archive));
    }
}

/// Appends one row given as a JSON object of column values (no `id`).
///
/// # Safety
/// Pointers are valid; `out_id` may be null.
#[no_mangle]
pub unsafe extern "C" fn tv_archive_insert_json(
    archive: *const TvArchive,
    table: *const c_char,
    row_json: *const c_char,
    out_id: *mut i64,
) -> TvStatus {
    guard(|| {
        let a = archive.as_ref().ok_or_else(null)?;
        let table = str_arg(table)?;
        let schema = schema(table).ok_or_else(|| Failure::from(ArchiveError::UnknownTable(table.into())))?;
        let Json::Object(obj) = parse_json(str_arg(row_json)?)? else {
            return Err(Failure(TvStatus::MalformedJson, "row must be a JSON object".into()));
        };
        let mut row = NewRow::new();
        for (col, v) in &obj {
            let cell = match schema.column(col) {
                Some(c) => Cell::from_json(c.ty, v).ok_or_else(|| {
                    Failure(TvStatus::TypeMismatch, format!("{table}.{col} expects {}", c.ty.as_str()))
                })?,
                // unknown columns are reported by the store
                None => Cell::Null,
            };
            row.set(col, cell);
        }
        let id = a.store.insert(table, row)?;
        if let Some(o) = out_id.as_mut() {
            *o = id;
        }
        Ok(())
    })
}

/// Number of rows in `table`.
///
/// # Safety
/// Pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn tv_archive_count(archive: *const TvArchive, table: *const c_char, out: *mut u64) -> TvStatus {
    guard(|| {
        let a = archive.as_ref().ok_or_else(null)?;
        let n = a.store.count(str_arg(table)?)?;
        *out_arg(out)? = n as u64;
        Ok(())
    })
}

/// Runs a query spec (`{"table", "filters", "sort", "limit", "offset"}`)
/// and returns `{"columns", "rows", "total_matching"}`.
///
/// # Safety
/// Pointers are valid; `*out_json` receives a string to free with
/// [`tv_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tv_query_json(
    archive: *const TvArchive,
    spec_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TvStatus {
    guard(|| {
        let out = out_arg(out_json)?;
        *out = ptr::null_mut();
        let a = archive.as_ref().ok_or_else(null)?;
        let spec: QuerySpec = serde_json::from_str(str_arg(spec_json)?)
            .map_err(|e| Failure(TvStatus::MalformedJson, e.to_string()))?;
        let result = query::execute(&a.store, &spec)?;
        json_out(&result, out)
    })
}

/// Schema of every table as a JSON array.
///
/// # Safety
/// `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tv_tables_json(out_json: *mut *mut c_char) -> TvStatus {
    guard(|| {
        let out = out_arg(out_json)?;
        json_out(&query::tables(), out)
    })
}

/// Archived tunes as a JSON array.
///
/// # Safety
/// Pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn tv_list_tunes_json(archive: *const TvArchive, out_json: *mut *mut c_char) -> TvStatus {
    guard(|| {
        let out = out_arg(out_json)?;
        *out = ptr::null_mut();
        let a = archive.as_ref().ok_or_else(null)?;
        json_out(&a.store.list_tunes()?, out)
    })
}

/// One tune as `{"tune", "values"}`.
///
/// # Safety
/// Pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn tv_load_tune_json(archive: *const TvArchive, id: i64, out_json: *mut *mut c_char) -> TvStatus {
    guard(|| {
        let out = out_arg(out_json)?;
        *out = ptr::null_mut();
        let a = archive.as_ref().ok_or_else(null)?;
        let (tune, values) = a.store.load_tune(id)?;
        json_out(&serde_json::json!({ "tune": tune, "values": values }), out)
    })
}

/// Relativistic kinematics of a beam.
///
/// # Safety
/// Pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn tv_beam_kinematics(beam: *const TvBeam, out: *mut TvKinematics) -> TvStatus {
    guard(|| {
        let b = beam_of(beam.as_ref().ok_or_else(null)?);
        b.validate()?;
        let k = tune::kinematics(&b);
        *out_arg(out)? = TvKinematics {
            gamma: k.gamma,
            beta: k.beta,
            beta_gamma: k.beta_gamma,
            pc_total_mev: k.pc_total_mev,
            rigidity_tm: k.rigidity_tm,
        };
        Ok(())
    })
}

/// Scale factors taking setpoints archived for `old_beam` to `new_beam`.
///
/// # Safety
/// Pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn tv_scale_factors(
    old_beam: *const TvBeam,
    new_beam: *const TvBeam,
    out: *mut TvScaleFactors,
) -> TvStatus {
    guard(|| {
        let old = beam_of(old_beam.as_ref().ok_or_else(null)?);
        let new = beam_of(new_beam.as_ref().ok_or_else(null)?);
        old.validate()?;
        new.validate()?;
        let f = tune::scale_factors(&old, &new);
        *out_arg(out)? = TvScaleFactors {
            magnetic: f.magnetic,
            electrostatic: f.electrostatic,
            rf_amplitude: f.rf_amplitude,
            none: f.none,
        };
        Ok(())
    })
}

/// Kinetic energy per nucleon (MeV/u) at which the velocity reaches `beta`.
///
/// # Safety
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tv_energy_at_beta(beta: f64, out: *mut f64) -> TvStatus {
    guard(|| {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Failure(TvStatus::InvalidBeam, format!("beta must be in (0, 1), got {beta}")));
        }
        *out_arg(out)? = tune::energy_at_beta(beta);
        Ok(())
    })
}
