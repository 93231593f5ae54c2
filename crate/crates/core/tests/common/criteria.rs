//! One check per acceptance criterion. Each returns a short detail line on
//! success and the first violation on failure, and enforces its own time
//! budget.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;
use tunevault::archive::{ArchiveStore, Cell, CrashPoint, Fault, NewRow, TuneValue, Trigger};
use tunevault::channel_db::{ChannelDb, ChannelSpec, Role, SnapshotFilter, Value, ValueTag};
use tunevault::query::{Op, QuerySpec};
use tunevault::scanner::PRODUCTION_TUNE_INTERVAL;
use tunevault::sim::{load_catalog, Catalog, DeviceClass, SimConfig, Simulator, DEFAULT_CATALOG};
use tunevault::system::System;
use tunevault::tune::{scale_factors, BeamParameters, RestoreMode, ScalingLaw, TuneEngine};

use super::oracle;

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < budget, "took {took:?}, budget {budget:?}");
    Ok(took)
}

// ---------------------------------------------------------------------------

pub const CATALOG_BUDGET: Duration = Duration::from_secs(1);

pub fn catalog_fidelity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.toml");
    std::fs::write(&path, DEFAULT_CATALOG).unwrap();
    let t0 = Instant::now();
    let db = ChannelDb::new();
    let (catalog, summary) = load_catalog(&path, &db).map_err(|e| e.to_string())?;
    let took = within(t0, CATALOG_BUDGET)?;

    // counted from the descriptors, not taken from the summary
    let resonators = catalog.devices.iter().filter(|d| d.class == DeviceClass::Resonator).count();
    let injectors = catalog.devices.iter().filter(|d| d.is_injector()).count();
    ensure!(resonators == 64, "{resonators} resonators");
    ensure!(injectors == 3, "{injectors} injectors");
    ensure!(summary.resonators == 64 && summary.injectors == 3, "summary disagrees: {summary:?}");
    ensure!(db.len() == summary.channels, "{} channels installed, summary says {}", db.len(), summary.channels);
    Ok(format!("64 resonators, 3 injectors, {} channels in {took:.1?}", db.len()))
}

// ---------------------------------------------------------------------------

pub const SCHEDULE_BUDGET: Duration = Duration::from_secs(15);
pub const SCHEDULE_INTERVAL_MS: i64 = 2000;
pub const SCHEDULE_RUN_MS: i64 = 11_000;
pub const SCHEDULE_TOLERANCE_MS: i64 = 250;

pub fn schedule_fidelity() -> Outcome {
    ensure!(
        PRODUCTION_TUNE_INTERVAL == Duration::from_secs(4 * 3600),
        "production interval is {PRODUCTION_TUNE_INTERVAL:?}"
    );
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut config = super::config_in(dir.path());
    config.scan_interval_s = SCHEDULE_INTERVAL_MS as f64 / 1000.0;
    config.tune_interval_s = 3600.0;
    let mut system = System::open(config).map_err(|e| e.to_string())?;
    system.start();
    let started = system.scanner_started_at_ms().ok_or("scanner did not start")?;
    let deadline = started + SCHEDULE_RUN_MS;
    let now = tunevault::time::now_ms();
    if deadline > now {
        std::thread::sleep(Duration::from_millis((deadline - now) as u64));
    }
    system.shutdown();
    let took = within(t0, SCHEDULE_BUDGET)?;

    let scheduled: Vec<i64> = system
        .store
        .list_snapshots()
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|s| s.trigger == Trigger::Scheduled)
        .map(|s| s.taken_at)
        .collect();
    let expected = (SCHEDULE_RUN_MS / SCHEDULE_INTERVAL_MS) as usize;
    ensure!(scheduled.len() == expected, "{} scheduled snapshots, expected {expected}", scheduled.len());
    let mut worst = 0;
    for (k, at) in scheduled.iter().enumerate() {
        let nominal = started + (k as i64 + 1) * SCHEDULE_INTERVAL_MS;
        let off = at - nominal;
        ensure!(off.abs() <= SCHEDULE_TOLERANCE_MS, "snapshot {} is {off} ms from its tick", k + 1);
        worst = worst.max(off.abs());
    }
    Ok(format!("{expected} snapshots, worst offset {worst} ms, production interval 4 h, {took:.1?}"))
}

// ---------------------------------------------------------------------------

pub const ROUNDTRIP_BUDGET: Duration = Duration::from_secs(10);
pub const TRANSMISSION_TOLERANCE: f64 = 0.01;

/// Ticks until every actuator sits on its setpoint.
fn settle(sim: &mut Simulator, db: &ChannelDb, catalog: &Catalog) -> Result<usize, String> {
    for n in 0..20_000 {
        let settled = catalog.setpoints().all(|info| {
            let target = db.read(&info.channel).unwrap().value.as_f64().unwrap();
            sim.position(&info.channel) == Some(info.limits.clamp(target))
        });
        if settled && n > 0 {
            return Ok(n);
        }
        sim.tick(1.0).map_err(|e| e.to_string())?;
    }
    Err("devices never settled".into())
}

pub fn roundtrip_restore(seed: u64) -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ArchiveStore::open(dir.path()).unwrap());
    let db = Arc::new(ChannelDb::new());
    let catalog = Arc::new(Catalog::default_catalog());
    catalog.install(&db, None).map_err(|e| e.to_string())?;
    let beam = Arc::new(RwLock::new(catalog.reference_beam));
    let engine = TuneEngine::new(db.clone(), store, catalog.clone(), beam.clone());
    let mut sim = Simulator::new(db.clone(), catalog.clone(), beam, SimConfig { seed, ..SimConfig::default() })
        .map_err(|e| e.to_string())?;

    settle(&mut sim, &db, &catalog)?;
    let before = sim.transmission();
    let id = engine.archive_tune("baseline", Trigger::Manual).map_err(|e| e.to_string())?;
    let (_, archived) = engine.load_tune(id).map_err(|e| e.to_string())?;
    let critical: BTreeSet<String> = db
        .snapshot(SnapshotFilter::CriticalOnly)
        .entries
        .into_iter()
        .filter(|(_, e)| e.role == Role::Setpoint)
        .map(|(n, _)| n)
        .collect();
    let covered: BTreeSet<String> = archived.iter().map(|v| v.channel.clone()).collect();
    ensure!(covered == critical, "tune covers {} of {} critical setpoints", covered.len(), critical.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &archived {
        let info = catalog.setpoint(&v.channel).ok_or("tune channel missing from catalog")?;
        let value = if info.integer {
            Value::Int(rng.random_range(info.limits.min as i64..=info.limits.max as i64))
        } else {
            Value::Float(rng.random_range(info.limits.min..=info.limits.max))
        };
        db.write(&v.channel, value).map_err(|e| e.to_string())?;
    }
    settle(&mut sim, &db, &catalog)?;
    let perturbed = sim.transmission();

    engine
        .restore_tune(id, catalog.reference_beam, RestoreMode::Commit)
        .map_err(|e| e.to_string())?;
    for v in &archived {
        let live = db.read(&v.channel).unwrap().value.as_f64().unwrap();
        ensure!(
            live.to_bits() == v.value_float.to_bits(),
            "{} restored to {live:?}, archived {:?}",
            v.channel,
            v.value_float
        );
    }
    let ticks = settle(&mut sim, &db, &catalog)?;
    let after = sim.transmission();
    let took = within(t0, ROUNDTRIP_BUDGET)?;
    let rel = (after - before).abs() / before;
    ensure!(rel <= TRANSMISSION_TOLERANCE, "transmission {after} vs {before} before perturbation");
    Ok(format!(
        "{} setpoints bit-exact; transmission {before:.4} -> {perturbed:.2e} -> {after:.4} after {ticks} s; {took:.1?}",
        archived.len()
    ))
}

// ---------------------------------------------------------------------------

pub const SCALING_BUDGET: Duration = Duration::from_secs(5);
pub const SCALING_TRIPLES: usize = 1000;
pub const ALGEBRA_REL: f64 = 1e-12;
pub const ORACLE_REL: f64 = 1e-12;
pub const BETA_CROSSING_REL: f64 = 1e-3;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Energy at which `exceeds_beta_limit` flips, found only through that predicate.
pub fn implementation_beta_crossing() -> f64 {
    let (mut lo, mut hi) = (1e-3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if BeamParameters::new(1.0, 1, mid).unwrap().exceeds_beta_limit() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn scaling_algebra(seed: u64) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beams: Vec<BeamParameters> = (0..SCALING_TRIPLES + 2)
        .map(|_| {
            let (m, q, e) = oracle::random_beam(&mut rng);
            BeamParameters::new(m, q, e).unwrap()
        })
        .collect();
    let mut worst = [0f64; 3];
    for w in beams.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let (aa, ab, ba, bc, ac) = (
            scale_factors(&a, &a),
            scale_factors(&a, &b),
            scale_factors(&b, &a),
            scale_factors(&b, &c),
            scale_factors(&a, &c),
        );
        for law in ScalingLaw::ALL {
            let id = (aa.factor(law) - 1.0).abs();
            let inv = (ab.factor(law) * ba.factor(law) - 1.0).abs();
            let comp = rel(ab.factor(law) * bc.factor(law), ac.factor(law));
            ensure!(id <= ALGEBRA_REL, "identity off by {id:e} for {law} at {a}");
            ensure!(inv <= ALGEBRA_REL, "inversion off by {inv:e} for {law}: {a} / {b}");
            ensure!(comp <= ALGEBRA_REL, "composition off by {comp:e} for {law}: {a} / {b} / {c}");
            worst[0] = worst[0].max(inv);
            worst[1] = worst[1].max(comp);
        }

        let ka = a.kinematics();
        let (oa, ob) = (
            oracle::kinematics(a.mass_amu, a.charge_state, a.energy_mev_u),
            oracle::kinematics(b.mass_amu, b.charge_state, b.energy_mev_u),
        );
        let checks = [
            ("gamma", ka.gamma, &oa.gamma),
            ("beta", ka.beta, &oa.beta),
            ("beta_gamma", ka.beta_gamma, &oa.beta_gamma),
            ("pc", ka.pc_total_mev, &oa.pc),
            ("rigidity", ka.rigidity_tm, &oa.rigidity),
            ("electric rigidity", a.electric_rigidity(), &oa.electric),
            ("energy per charge", a.energy_per_charge(), &oa.energy_per_charge),
        ];
        for (name, got, want) in checks {
            let e = oracle::rel_err(got, want);
            ensure!(e <= ORACLE_REL, "{name} off by {e:e} at {a}");
            worst[2] = worst[2].max(e);
        }
        let factor_checks = [
            ("magnetic", ab.magnetic, oracle::ratio(&ob.rigidity, &oa.rigidity)),
            ("electrostatic", ab.electrostatic, oracle::ratio(&ob.electric, &oa.electric)),
            ("rf_amplitude", ab.rf_amplitude, oracle::ratio(&ob.energy_per_charge, &oa.energy_per_charge)),
        ];
        for (name, got, want) in factor_checks {
            let e = oracle::rel_err(got, &want);
            ensure!(e <= ORACLE_REL, "{name} factor off by {e:e}: {a} -> {b}");
            worst[2] = worst[2].max(e);
        }
    }

    let want = oracle::oracle_energy_at_beta(0.2);
    let got = implementation_beta_crossing();
    let crossing = rel(got, want);
    ensure!(crossing <= BETA_CROSSING_REL, "beta limit crossed at {got} MeV/u, oracle {want}");
    let took = within(t0, SCALING_BUDGET)?;
    Ok(format!(
        "{SCALING_TRIPLES} triples; worst inversion {:.1e}, composition {:.1e}, oracle {:.1e}; beta=0.2 at {got:.4} MeV/u (oracle {want:.4}); {took:.1?}",
        worst[0], worst[1], worst[2]
    ))
}

// ---------------------------------------------------------------------------

pub const QUERY_BUDGET: Duration = Duration::from_secs(30);
pub const QUERY_SPECS: usize = 500;
pub const QUERY_ROWS: usize = 2000;

pub fn query_oracle(seed: u64) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fx = oracle::seed_query_store(&mut rng, QUERY_ROWS);
    let mut per_table: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..QUERY_SPECS {
        let spec = oracle::random_spec(&mut rng, &fx.store, &fx.tables);
        oracle::check_spec(&fx.store, &spec)?;
        *per_table.entry(spec.table.clone()).or_default() += 1;
    }

    let n = adversarial_round_trip(&fx.store, fx.dir.path())?;
    let took = within(t0, QUERY_BUDGET)?;
    Ok(format!("{QUERY_SPECS} specs over {} tables, {n} adversarial literals intact; {took:.1?}", per_table.len()))
}

/// Stores every adversarial string verbatim, finds each by equality and by
/// substring, and checks that the archive itself is unchanged afterwards.
pub fn adversarial_round_trip(store: &ArchiveStore, dir: &Path) -> Result<usize, String> {
    let tables_before: Vec<(String, usize)> = tunevault::archive::ALL_TABLES
        .iter()
        .map(|s| (s.table.to_string(), store.count(s.table).unwrap()))
        .collect();
    let mut ids = Vec::new();
    for (i, s) in oracle::ADVERSARIAL.iter().enumerate() {
        let id = store
            .insert(
                "camac_modules",
                NewRow::new()
                    .with("crate", 99i64)
                    .with("slot", i as i64)
                    .with("device_id", format!("ADV:{i}"))
                    .with("class", *s),
            )
            .map_err(|e| e.to_string())?;
        ids.push(id);
    }
    for (i, s) in oracle::ADVERSARIAL.iter().enumerate() {
        let spec = QuerySpec::new("camac_modules")
            .filter("crate", Op::Eq, 99)
            .filter("class", Op::Eq, *s);
        let r = tunevault::query::execute(store, &spec).map_err(|e| e.to_string())?;
        ensure!(r.rows.len() == 1, "eq {s:?} matched {} rows", r.rows.len());
        ensure!(r.rows[0][4] == Cell::Text(s.to_string()), "{s:?} came back as {:?}", r.rows[0][4]);
        ensure!(r.rows[0][0] == Cell::Int(ids[i]), "{s:?} matched the wrong row");

        // the literal as a filter travels through JSON intact too
        let wire = serde_json::to_string(&spec).unwrap();
        let back: QuerySpec = serde_json::from_str(&wire).map_err(|e| e.to_string())?;
        ensure!(back == spec, "spec with {s:?} did not survive serialisation");

        let contains = QuerySpec::new("camac_modules").filter("class", Op::Contains, *s).page(1000, 0);
        let r = tunevault::query::execute(store, &contains).map_err(|e| e.to_string())?;
        let want = store
            .scan("camac_modules")
            .unwrap()
            .iter()
            .filter(|row| row.cells[4].as_str().unwrap().contains(s))
            .count();
        ensure!(r.total_matching == want, "contains {s:?}: {} vs {want}", r.total_matching);
    }
    for (t, n) in &tables_before {
        let now = store.count(t).unwrap();
        let grew = if t == "camac_modules" { oracle::ADVERSARIAL.len() } else { 0 };
        ensure!(now == n + grew, "table {t} changed from {n} to {now} rows");
    }
    // and on disk
    let reopened = ArchiveStore::open(dir).map_err(|e| e.to_string())?;
    for (i, s) in oracle::ADVERSARIAL.iter().enumerate() {
        let row = reopened.get("camac_modules", ids[i]).unwrap().ok_or("row lost on reopen")?;
        ensure!(row.cells[4] == Cell::Text(s.to_string()), "{s:?} reloaded as {:?}", row.cells[4]);
    }
    Ok(oracle::ADVERSARIAL.len())
}

// ---------------------------------------------------------------------------

pub const CRASH_BUDGET: Duration = Duration::from_secs(60);
pub const CRASH_TRIALS: usize = 100;

fn random_crash<R: Rng>(rng: &mut R, children: usize) -> CrashPoint {
    match rng.random_range(0..4) {
        0 => CrashPoint::AfterChildren(rng.random_range(0..=children)),
        1 => CrashPoint::TornChild {
            row: rng.random_range(0..children.max(1)),
            bytes: rng.random_range(0..80),
        },
        2 => CrashPoint::BeforeParent,
        _ => CrashPoint::TornParent {
            bytes: rng.random_range(0..120),
        },
    }
}

fn random_snapshot<R: Rng>(rng: &mut R, n: usize) -> tunevault::channel_db::StoreSnapshot {
    let entries = (0..n)
        .map(|i| {
            (
                format!("CRASH:C{i:03}:v"),
                tunevault::channel_db::SnapshotEntry {
                    value: Value::Float(rng.random_range(-1.0..1.0)),
                    seq: i as u64,
                    updated_at: 0,
                    global_version: 0,
                    role: Role::Setpoint,
                },
            )
        })
        .collect();
    tunevault::channel_db::StoreSnapshot {
        version: rng.random_range(0..1000),
        entries,
    }
}

fn random_tune<R: Rng>(rng: &mut R, n: usize) -> Vec<TuneValue> {
    (0..n)
        .map(|i| TuneValue {
            channel: format!("CRASH:T{i:03}:v"),
            scaling_law: ScalingLaw::ALL[i % 4],
            value: rng.random_range(-10.0..10.0),
        })
        .collect()
}

/// Committed families: parent id -> child count.
#[derive(Default, Debug, Clone, PartialEq)]
pub struct Committed {
    pub snapshots: BTreeMap<i64, usize>,
    pub tunes: BTreeMap<i64, usize>,
}

/// Checks the reopened store holds exactly the committed families, each
/// complete, and no child without its parent.
pub fn verify_families(store: &ArchiveStore, want: &Committed) -> Result<(), String> {
    let mut got = Committed::default();
    for s in store.list_snapshots().map_err(|e| e.to_string())? {
        let (row, values) = store.load_snapshot(s.id).map_err(|e| e.to_string())?;
        ensure!(row.n_values as usize == values.len(), "snapshot {} has {} of {} values", s.id, values.len(), row.n_values);
        got.snapshots.insert(s.id, values.len());
    }
    for t in store.list_tunes().map_err(|e| e.to_string())? {
        let (_, values) = store.load_tune(t.id).map_err(|e| e.to_string())?;
        got.tunes.insert(t.id, values.len());
    }
    ensure!(got == *want, "families differ after reopen: {got:?} vs {want:?}");

    for (parent, child, fk) in [("snapshots", "snapshot_values", 1), ("tunes", "tune_values", 1)] {
        let parents: BTreeSet<i64> = store.scan(parent).unwrap().iter().map(|r| r.id()).collect();
        let children = store.scan(child).unwrap();
        ensure!(
            children.iter().all(|r| parents.contains(&r.cells[fk].as_i64().unwrap())),
            "orphan rows in {child}"
        );
        let expected: usize = if parent == "snapshots" { want.snapshots.values().sum() } else { want.tunes.values().sum() };
        ensure!(children.len() == expected, "{child} holds {} rows, committed {expected}", children.len());
    }
    Ok(())
}

/// Writes one random family, committed or crashed; returns the id when it
/// committed.
pub fn write_family<R: Rng>(rng: &mut R, store: &ArchiveStore, want: &mut Committed, crash: bool) -> Result<Option<i64>, String> {
    let n = rng.random_range(1..60);
    let is_tune = rng.random_bool(0.5);
    if crash {
        store.inject_fault(Fault::Crash(random_crash(rng, n)));
    }
    let beam = BeamParameters::new(58.0, 15, 7.0).unwrap();
    let res = if is_tune {
        store.persist_tune("trial", Trigger::Manual, &beam, &random_tune(rng, n))
    } else {
        store.persist_snapshot(&random_snapshot(rng, n), Trigger::Manual)
    };
    match (res, crash) {
        (Ok(id), false) => {
            let map = if is_tune { &mut want.tunes } else { &mut want.snapshots };
            map.insert(id, n);
            Ok(Some(id))
        }
        (Err(_), true) => Ok(None),
        (Ok(id), true) => Err(format!("crashed write reported success with id {id}")),
        (Err(e), false) => Err(e.to_string()),
    }
}

pub fn crash_atomicity(seed: u64) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = tempfile::tempdir().unwrap();
    let mut want = Committed::default();
    for trial in 0..CRASH_TRIALS {
        {
            let store = ArchiveStore::open(dir.path()).map_err(|e| format!("trial {trial}: reopen: {e}"))?;
            verify_families(&store, &want).map_err(|e| format!("trial {trial}: {e}"))?;
            for _ in 0..rng.random_range(0..3) {
                write_family(&mut rng, &store, &mut want, false).map_err(|e| format!("trial {trial}: {e}"))?;
            }
            write_family(&mut rng, &store, &mut want, true).map_err(|e| format!("trial {trial}: {e}"))?;
            ensure!(
                store.persist_snapshot(&random_snapshot(&mut rng, 1), Trigger::Manual).is_err(),
                "trial {trial}: store kept accepting writes after a crash"
            );
        }
    }
    let store = ArchiveStore::open(dir.path()).map_err(|e| e.to_string())?;
    verify_families(&store, &want)?;
    // ids stay unique and writes work after the last recovery
    let id = write_family(&mut rng, &store, &mut want, false)?.ok_or("no id")?;
    verify_families(&store, &want)?;
    let took = within(t0, CRASH_BUDGET)?;
    Ok(format!(
        "{CRASH_TRIALS} crashes, {} snapshots and {} tunes intact, next id {id}; {took:.1?}",
        want.snapshots.len(),
        want.tunes.len()
    ))
}

// ---------------------------------------------------------------------------

pub const CUT_BUDGET: Duration = Duration::from_secs(30);
pub const CUT_WRITES: u64 = 100_000;
pub const CUT_WRITERS: u64 = 4;

pub fn torn_cut() -> Outcome {
    let t0 = Instant::now();
    let db = Arc::new(ChannelDb::with_queue_bound(CUT_WRITES as usize + 16));
    for w in 0..CUT_WRITERS {
        for s in ["x", "y"] {
            db.create_channel(ChannelSpec::new(format!("CUT:W{w}:{s}"), ValueTag::Int, "", Role::Setpoint, true))
                .map_err(|e| e.to_string())?;
        }
    }
    let mut sub = db.subscribe("CUT:**").map_err(|e| e.to_string())?;
    let done = Arc::new(AtomicBool::new(false));
    let pairs = CUT_WRITES / 2 / CUT_WRITERS;

    let (reads, violations) = std::thread::scope(|s| {
        let writers: Vec<_> = (0..CUT_WRITERS)
            .map(|w| {
                let db = &db;
                s.spawn(move || {
                    let (x, y) = (format!("CUT:W{w}:x"), format!("CUT:W{w}:y"));
                    for k in 1..=pairs as i64 {
                        db.write(&x, Value::Int(k)).unwrap();
                        db.write(&y, Value::Int(2 * k)).unwrap();
                    }
                })
            })
            .collect();
        let readers: Vec<_> = (0..2)
            .map(|_| {
                let (db, done) = (&db, &done);
                s.spawn(move || {
                    let mut reads = 0u64;
                    let mut last_version = 0;
                    let mut bad: Vec<String> = Vec::new();
                    loop {
                        let finished = done.load(Ordering::SeqCst);
                        let snap = db.snapshot(SnapshotFilter::All);
                        reads += 1;
                        if snap.version < last_version {
                            bad.push(format!("version went back from {last_version} to {}", snap.version));
                        }
                        last_version = snap.version;
                        for w in 0..CUT_WRITERS {
                            let x = &snap.entries[&format!("CUT:W{w}:x")];
                            let y = &snap.entries[&format!("CUT:W{w}:y")];
                            let (Value::Int(xv), Value::Int(yv)) = (&x.value, &y.value) else {
                                bad.push("non-int value".into());
                                continue;
                            };
                            if !(*yv == 2 * xv || *yv == 2 * (xv - 1)) {
                                bad.push(format!("torn pair W{w}: x={xv} y={yv}"));
                            }
                            if x.seq as i64 != *xv || y.seq as i64 * 2 != *yv {
                                bad.push(format!("seq disagrees with value for W{w}"));
                            }
                            if x.global_version > snap.version || y.global_version > snap.version {
                                bad.push("entry newer than its cut".into());
                            }
                        }
                        if finished || bad.len() > 10 {
                            break;
                        }
                    }
                    (reads, bad)
                })
            })
            .collect();
        for w in writers {
            w.join().unwrap();
        }
        done.store(true, Ordering::SeqCst);
        let mut reads = 0;
        let mut bad = Vec::new();
        for r in readers {
            let (n, b) = r.join().unwrap();
            reads += n;
            bad.extend(b);
        }
        (reads, bad)
    });
    if let Some(v) = violations.first() {
        return Err(format!("{} violations, first: {v}", violations.len()));
    }

    let mut last_seq: HashMap<String, u64> = HashMap::new();
    let mut last_version = 0;
    let mut deltas = 0u64;
    while let Some(rec) = sub.try_recv().map_err(|e| e.to_string())? {
        deltas += 1;
        ensure!(rec.global_version > last_version, "global version not increasing at {}", rec.global_version);
        last_version = rec.global_version;
        let prev = last_seq.insert(rec.name.clone(), rec.seq).unwrap_or(0);
        ensure!(rec.seq == prev + 1, "{} jumped from seq {prev} to {}", rec.name, rec.seq);
        let Value::Int(v) = rec.value else {
            return Err("non-int delta".into());
        };
        let want = if rec.name.ends_with(":x") { rec.seq as i64 } else { 2 * rec.seq as i64 };
        ensure!(v == want, "{} delta seq {} carries {v}", rec.name, rec.seq);
    }
    ensure!(deltas == CUT_WRITES, "subscriber saw {deltas} of {CUT_WRITES} writes");
    let took = within(t0, CUT_BUDGET)?;
    Ok(format!("{CUT_WRITES} writes by {CUT_WRITERS} writers, {reads} concurrent cuts, gapless deltas; {took:.1?}"))
}

// ---------------------------------------------------------------------------

/// Runs `tunevaultctl --porcelain` and checks its stdout against the last
/// body the server sent.
fn porcelain(server: &super::TestServer, args: &[&str], seen: &mut BTreeSet<(String, String)>) -> Result<Vec<u8>, String> {
    let mut full = vec!["--porcelain"];
    full.extend_from_slice(args);
    let out = super::ctl(&server.base, &full);
    ensure!(out.code == 0, "{args:?} exited {}: {}", out.code, out.stderr);
    let log = server.take_log();
    let last = log.last().ok_or_else(|| format!("{args:?} made no request"))?;
    for r in &log {
        seen.insert((r.method.clone(), r.route.clone()));
    }
    let body = last.body();
    if last.streaming {
        ensure!(!out.stdout.is_empty() && body.starts_with(&out.stdout), "{args:?}: streamed bytes differ");
    } else {
        ensure!(
            out.stdout == body,
            "{args:?}: stdout {:?} != body {:?}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&body)
        );
    }
    Ok(out.stdout)
}

fn id_of(body: &[u8], pointer: &str) -> Result<String, String> {
    let j: Json = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    j.pointer(pointer).map(|v| v.to_string()).ok_or_else(|| format!("no {pointer} in body"))
}

pub fn cli_api_parity() -> Outcome {
    let t0 = Instant::now();
    let server = super::serve(|_| {}, false);
    ensure!(server.system.config.ui_dir.is_none(), "a UI directory is configured");
    let mut seen = BTreeSet::new();

    porcelain(&server, &["health"], &mut seen)?;
    let snap = porcelain(&server, &["snapshot"], &mut seen)?;
    let snap_id = id_of(&snap, "/id")?;
    porcelain(&server, &["snapshots"], &mut seen)?;
    porcelain(&server, &["snapshots", &snap_id], &mut seen)?;
    let tune = porcelain(&server, &["archive-tune", "--label", "parity, \"quoted\""], &mut seen)?;
    let tune_id = id_of(&tune, "/id")?;
    porcelain(&server, &["tunes"], &mut seen)?;
    porcelain(&server, &["tunes", &tune_id], &mut seen)?;
    porcelain(
        &server,
        &["restore", "--tune", &tune_id, "--mass", "132", "--charge", "25", "--energy", "6.5", "--dry-run"],
        &mut seen,
    )?;
    porcelain(&server, &["tables"], &mut seen)?;
    porcelain(&server, &["tables", "resonators"], &mut seen)?;
    porcelain(
        &server,
        &["query", "--table", "resonators", "--where", "nominal_amplitude,gt,1", "--sort", "slot:desc", "--limit", "5"],
        &mut seen,
    )?;
    porcelain(&server, &["channels", "--pattern", "RES:R00*:amplitude"], &mut seen)?;
    porcelain(&server, &["set", "RES:R001:amplitude", "2.5"], &mut seen)?;
    porcelain(&server, &["presets", "SLIT:L1"], &mut seen)?;
    porcelain(&server, &["presets", "SLIT:L1", "in"], &mut seen)?;
    porcelain(&server, &["docs"], &mut seen)?;
    porcelain(&server, &["docs", "error-codes"], &mut seen)?;

    // the stream needs traffic while it is open
    let stop = Arc::new(AtomicBool::new(false));
    let writer = {
        let (db, stop) = (server.system.db.clone(), stop.clone());
        std::thread::spawn(move || {
            let mut v = 1.0;
            while !stop.load(Ordering::SeqCst) {
                let _ = db.write("RES:R002:amplitude", Value::Float(v));
                v = if v > 5.0 { 1.0 } else { v + 0.25 };
                std::thread::sleep(Duration::from_millis(20));
            }
        })
    };
    let watched = porcelain(&server, &["watch", "--pattern", "RES:R002:*", "--count", "2"], &mut seen);
    stop.store(true, Ordering::SeqCst);
    writer.join().unwrap();
    watched?;

    let missing: Vec<String> = tunevault::api::ROUTES
        .iter()
        .filter(|(_, route)| route.starts_with("/api/"))
        .filter(|(m, r)| !seen.contains(&(m.to_string(), r.to_string())))
        .map(|(m, r)| format!("{m} {r}"))
        .collect();
    ensure!(missing.is_empty(), "routes not reached by the CLI: {missing:?}");
    let n = tunevault::api::ROUTES.iter().filter(|(_, r)| r.starts_with("/api/")).count();
    Ok(format!("{n} routes reached by tunevaultctl, porcelain bytes identical, no UI; {:.1?}", t0.elapsed()))
}
