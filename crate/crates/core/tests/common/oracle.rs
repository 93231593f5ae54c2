//! Reference implementations written from the definitions, sharing no code
//! with the library beyond its data types.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use bigdecimal::num_bigint::BigInt;
use bigdecimal::{BigDecimal, One, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::Value as Json;
use tunevault::archive::{ArchiveStore, Cell, ColumnType, NewRow, Row, TableSchema, Trigger};
use tunevault::channel_db::{Role, SnapshotEntry, StoreSnapshot, Value};
use tunevault::query::{Direction, Filter, QuerySpec, Sort};

// ---------------------------------------------------------------------------
// kinematics

const PREC: u64 = 40;

fn dec(s: &str) -> BigDecimal {
    s.parse().unwrap()
}

/// Exact value of a finite double.
pub fn exact(x: f64) -> BigDecimal {
    assert!(x.is_finite());
    if x == 0.0 {
        return BigDecimal::zero();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let m = BigInt::from(mantissa) * sign;
    if e >= 0 {
        BigDecimal::from(m * BigInt::from(2).pow(e as u32))
    } else {
        // m * 2^-k = m * 5^k / 10^k
        let k = (-e) as u32;
        BigDecimal::new(m * BigInt::from(5).pow(k), i64::from(k))
    }
}

fn p(x: BigDecimal) -> BigDecimal {
    x.with_prec(PREC)
}

/// High-precision kinematics for mass `m` (u), charge `q`, energy `e` (MeV/u):
/// γ = 1 + E/931.494, βγ = √(γ² − 1), β = βγ/γ, pc = m·931.494·βγ,
/// Bρ = pc / (299.792458·q).
pub struct OracleKinematics {
    pub gamma: BigDecimal,
    pub beta: BigDecimal,
    pub beta_gamma: BigDecimal,
    pub pc: BigDecimal,
    pub rigidity: BigDecimal,
    /// pc·β/q
    pub electric: BigDecimal,
    /// m·E/q
    pub energy_per_charge: BigDecimal,
}

pub fn kinematics(m: f64, q: i64, e: f64) -> OracleKinematics {
    let amu = dec("931.494");
    let c = dec("299.792458");
    let (m, e, q) = (exact(m), exact(e), BigDecimal::from(q));
    let gamma = p(BigDecimal::one() + p(&e / &amu));
    let beta_gamma = p(p(&gamma * &gamma) - BigDecimal::one()).sqrt().unwrap();
    let beta = p(&beta_gamma / &gamma);
    let pc = p(p(&m * &amu) * &beta_gamma);
    let rigidity = p(&pc / p(&c * &q));
    let electric = p(p(&pc * &beta) / &q);
    let energy_per_charge = p(p(&m * &e) / &q);
    OracleKinematics {
        gamma,
        beta,
        beta_gamma,
        pc,
        rigidity,
        electric,
        energy_per_charge,
    }
}

/// |got − want| / |want|, as a double.
pub fn rel_err(got: f64, want: &BigDecimal) -> f64 {
    use bigdecimal::ToPrimitive;
    let diff = (exact(got) - want).abs();
    if want.is_zero() {
        return diff.to_f64().unwrap();
    }
    p(diff / want.abs()).to_f64().unwrap()
}

pub fn ratio(a: &BigDecimal, b: &BigDecimal) -> BigDecimal {
    p(a / b)
}

/// Energy (MeV/u) at which β reaches `beta`, by bisection on the oracle.
pub fn oracle_energy_at_beta(beta: f64) -> f64 {
    use bigdecimal::ToPrimitive;
    let target = exact(beta);
    let (mut lo, mut hi) = (dec("0.001"), dec("1000"));
    for _ in 0..80 {
        let mid = p((&lo + &hi) / BigDecimal::from(2));
        let b = kinematics(1.0, 1, mid.to_f64().unwrap()).beta;
        if b > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    p((lo + hi) / BigDecimal::from(2)).to_f64().unwrap()
}

pub fn random_beam<R: Rng>(rng: &mut R) -> (f64, i64, f64) {
    let mass = rng.random_range(1.0..300.0);
    let charge = rng.random_range(1..=120);
    // log-uniform over 1 keV/u .. 1 GeV/u
    let energy = 10f64.powf(rng.random_range(-3.0..3.0));
    (mass, charge, energy)
}

// ---------------------------------------------------------------------------
// query

fn typed(ty: ColumnType, lit: &Json) -> Option<Cell> {
    match ty {
        ColumnType::Int | ColumnType::Timestamp => lit.as_i64().map(Cell::Int),
        ColumnType::Float => lit.as_f64().map(Cell::Float),
        ColumnType::Text => lit.as_str().map(|s| Cell::Text(s.to_string())),
        ColumnType::Bool => lit.as_bool().map(Cell::Bool),
    }
}

fn value_cmp(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Int(x), Cell::Int(y)) => x.cmp(y),
        (Cell::Float(x), Cell::Float(y)) => x.partial_cmp(y).expect("stored floats are finite"),
        (Cell::Text(x), Cell::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Cell::Bool(x), Cell::Bool(y)) => x.cmp(y),
        _ => panic!("oracle compared {a:?} with {b:?}"),
    }
}

fn matches(cell: &Cell, op: &str, lit: &Cell) -> bool {
    if cell.is_null() {
        return false;
    }
    if op == "contains" {
        return cell.as_str().unwrap().contains(lit.as_str().unwrap());
    }
    let o = value_cmp(cell, lit);
    match op {
        "eq" => o == Ordering::Equal,
        "neq" => o != Ordering::Equal,
        "lt" => o == Ordering::Less,
        "le" => o != Ordering::Greater,
        "gt" => o == Ordering::Greater,
        "ge" => o != Ordering::Less,
        other => panic!("oracle got op {other}"),
    }
}

/// Full matched-and-sorted row list for a valid spec, before pagination.
/// Ascending order puts nulls first; descending is its exact reverse
/// except that ties keep insertion order.
pub fn reference_query(schema: &TableSchema, rows: &[Row], spec: &QuerySpec) -> Vec<Vec<Cell>> {
    let idx = |name: &str| schema.columns.iter().position(|c| c.name == name).unwrap();
    let preds: Vec<(usize, &str, Cell)> = spec
        .filters
        .iter()
        .map(|f| {
            let i = idx(&f.column);
            (i, f.op.as_str(), typed(schema.columns[i].ty, &f.value).unwrap())
        })
        .collect();
    let mut out: Vec<&Row> = Vec::new();
    for r in rows {
        if preds.iter().all(|(i, op, lit)| matches(&r.cells[*i], op, lit)) {
            out.push(r);
        }
    }
    if let Some(s) = &spec.sort {
        let i = idx(&s.column);
        let asc = |a: &Cell, b: &Cell| match (a.is_null(), b.is_null()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => value_cmp(a, b),
        };
        // binary insertion after every equal key: stable by construction
        let mut sorted: Vec<&Row> = Vec::with_capacity(out.len());
        for r in out {
            let key = &r.cells[i];
            let pos = sorted.partition_point(|x| {
                let o = asc(&x.cells[i], key);
                match s.direction {
                    Direction::Asc => o != Ordering::Greater,
                    Direction::Desc => o != Ordering::Less,
                }
            });
            sorted.insert(pos, r);
        }
        out = sorted;
    }
    out.into_iter().map(|r| r.cells.clone()).collect()
}

pub const ADVERSARIAL: &[&str] = &[
    "'; DROP TABLE tunes; --",
    "\"",
    "\\\"}",
    "\",\"id\":1}",
    ",",
    "\\,",
    "\\",
    "\n",
    "\r\n",
    "\u{0}",
    "%",
    "_",
    "*",
    "**",
    "' OR '1'='1",
    "{\"table\":\"tunes\"}",
    "é",
    "🚀",
    " ",
    "a,b\\,c",
    ":",
    "|",
];

/// Column names and sample values per table in a seeded query store.
pub struct QueryFixture {
    pub dir: tempfile::TempDir,
    pub store: ArchiveStore,
    pub tables: Vec<&'static str>,
}

/// Seeds five tables (at most 10⁴ rows each) with clustered values so that
/// filters hit and sorts tie, and with nullable columns populated sparsely.
pub fn seed_query_store<R: Rng>(rng: &mut R, rows_per_table: usize) -> QueryFixture {
    assert!(rows_per_table <= 10_000);
    let dir = tempfile::tempdir().unwrap();
    let store = ArchiveStore::open(dir.path()).unwrap();
    let statuses: Vec<String> = ["online", "offline", "tuning"]
        .iter()
        .map(|s| s.to_string())
        .chain(ADVERSARIAL.iter().map(|s| format!("x{s}y")))
        .collect();
    let amps = [0.0, -0.0, 1.5, 2.25, 3.3, -1.0, 6.0, 0.1, 1e-9, 4.75];

    let rows = (0..rows_per_table)
        .map(|_| {
            NewRow::new()
                .with("device_id", format!("RES:R{:03}", rng.random_range(1..40)))
                .with("crate", rng.random_range(1i64..9))
                .with("slot", rng.random_range(1i64..17))
                .with("nominal_amplitude", *amps.choose(rng).unwrap())
                .with("status", statuses.choose(rng).unwrap().as_str())
        })
        .collect();
    store.insert_many("resonators", rows).unwrap();

    let t0 = 1_790_000_000_000i64;
    let rows = (0..rows_per_table)
        .map(|_| {
            NewRow::new()
                .with("raised_at", t0 + rng.random_range(0..500) * 1000)
                .with("channel", format!("CRYO:T{:02}:temperature", rng.random_range(1..9)))
                .with("temperature_k", (rng.random_range(4.5..6.0f64) * 100.0).round() / 100.0)
                .with("threshold_k", 4.8)
                .with("acknowledged", rng.random_bool(0.3))
        })
        .collect();
    store.insert_many("cryo_alarms", rows).unwrap();

    let rows = (0..rows_per_table)
        .map(|_| {
            NewRow::new()
                .with("taken_at", t0 + rng.random_range(0..200) * 2000)
                .with("target_line", rng.random_range(1i64..4))
                .with("current_enA", rng.random_range(0.0..100.0f64))
                .with("transmission", *[0.0, 0.5, 1.0, 0.25].choose(rng).unwrap())
        })
        .collect();
    store.insert_many("beam_measurement", rows).unwrap();

    let rows = (0..rows_per_table)
        .map(|_| {
            NewRow::new()
                .with("crate", rng.random_range(1i64..63))
                .with("slot", rng.random_range(1i64..24))
                .with("device_id", format!("DEV:{}", rng.random_range(0..50)))
                .with("class", *["resonator", "dipole", "quadrupole"].choose(rng).unwrap())
        })
        .collect();
    store.insert_many("camac_modules", rows).unwrap();

    // snapshot_values has nullable columns: one of three value kinds per row
    let per = 40;
    for s in 0..rows_per_table.div_ceil(per) {
        let mut entries = BTreeMap::new();
        for c in 0..per.min(rows_per_table - s * per) {
            let value = match rng.random_range(0..3) {
                0 => Value::Float(*amps.choose(rng).unwrap()),
                1 => Value::Int(rng.random_range(-5..5)),
                _ => Value::Enum((*["ok", "alarm"].choose(rng).unwrap()).to_string()),
            };
            entries.insert(
                format!("SIM:C{c:02}:v"),
                SnapshotEntry {
                    value,
                    seq: rng.random_range(0..20),
                    updated_at: 0,
                    global_version: 0,
                    role: Role::Setpoint,
                },
            );
        }
        store
            .persist_snapshot(&StoreSnapshot { version: s as u64, entries }, Trigger::Scheduled)
            .unwrap();
    }

    QueryFixture {
        dir,
        store,
        tables: vec!["resonators", "cryo_alarms", "beam_measurement", "camac_modules", "snapshot_values"],
    }
}

/// A random valid spec whose literals mostly come from stored values.
pub fn random_spec<R: Rng>(rng: &mut R, store: &ArchiveStore, tables: &[&'static str]) -> QuerySpec {
    let table = *tables.choose(rng).unwrap();
    let schema = tunevault::archive::schema(table).unwrap();
    let rows = store.scan(table).unwrap();
    let mut spec = QuerySpec::new(table);
    for _ in 0..rng.random_range(0..=3) {
        let col = schema.columns.choose(rng).unwrap();
        let ops: &[&str] = match col.ty {
            ColumnType::Text => &["eq", "neq", "lt", "le", "gt", "ge", "contains"],
            ColumnType::Bool => &["eq", "neq"],
            _ => &["eq", "neq", "lt", "le", "gt", "ge"],
        };
        let op = *ops.choose(rng).unwrap();
        let ci = schema.columns.iter().position(|c| c.name == col.name).unwrap();
        let sample = rows
            .choose(rng)
            .map(|r| r.cells[ci].clone())
            .filter(|c| !c.is_null());
        let value = match (col.ty, sample) {
            (ColumnType::Text, Some(Cell::Text(s))) if op == "contains" && !s.is_empty() => {
                let chars: Vec<char> = s.chars().collect();
                let a = rng.random_range(0..chars.len());
                let b = rng.random_range(a..=chars.len());
                Json::from(chars[a..b].iter().collect::<String>())
            }
            (_, Some(c)) if rng.random_bool(0.8) => c.to_json(),
            (ColumnType::Text, _) => Json::from(*ADVERSARIAL.choose(rng).unwrap()),
            (ColumnType::Bool, _) => Json::Bool(rng.random()),
            (ColumnType::Float, _) => {
                if rng.random_bool(0.5) {
                    Json::from(rng.random_range(-10i64..10))
                } else {
                    Json::from(rng.random_range(-10.0..10.0f64))
                }
            }
            (_, _) => Json::from(rng.random_range(-5i64..2_000)),
        };
        spec.filters.push(Filter {
            column: col.name.to_string(),
            op: op.to_string(),
            value,
        });
    }
    if rng.random_bool(0.7) {
        spec.sort = Some(Sort {
            column: schema.columns.choose(rng).unwrap().name.to_string(),
            direction: if rng.random() { Direction::Asc } else { Direction::Desc },
        });
    }
    spec.limit = *[1, 7, 50, 100, 333, 1000].choose(rng).unwrap();
    spec.offset = if rng.random_bool(0.3) { 0 } else { rng.random_range(0..rows.len() as i64 + 5) };
    spec
}

/// Compares one spec against the reference, including page-by-page
/// reassembly with the spec's own stride.
pub fn check_spec(store: &ArchiveStore, spec: &QuerySpec) -> Result<(), String> {
    let schema = tunevault::archive::schema(&spec.table).unwrap();
    let rows = store.scan(&spec.table).unwrap();
    let full = reference_query(schema, &rows, spec);

    let got = tunevault::query::execute(store, spec).map_err(|e| format!("{spec:?}: {e}"))?;
    if got.total_matching != full.len() {
        return Err(format!("{spec:?}: total {} != reference {}", got.total_matching, full.len()));
    }
    let off = (spec.offset as usize).min(full.len());
    let end = (off + spec.limit as usize).min(full.len());
    if got.rows != full[off..end] {
        return Err(format!("{spec:?}: page content or order differs from reference"));
    }

    let mut concat = Vec::with_capacity(full.len());
    // page size capped from below so tiny limits still finish quickly
    let mut page = spec.clone();
    page.offset = 0;
    page.limit = page.limit.max((full.len() / 25 + 1) as i64).min(tunevault::query::MAX_LIMIT);
    loop {
        let r = tunevault::query::execute(store, &page).map_err(|e| e.to_string())?;
        if r.total_matching != full.len() {
            return Err(format!("{spec:?}: total changed across pages"));
        }
        let n = r.rows.len();
        concat.extend(r.rows);
        if n < page.limit as usize {
            break;
        }
        page.offset += page.limit;
    }
    if concat != full {
        return Err(format!("{spec:?}: concatenated pages differ from the unpaginated result"));
    }
    Ok(())
}
