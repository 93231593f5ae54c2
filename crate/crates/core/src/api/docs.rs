//! Operator manual stub pages served under `/api/docs`.

use serde::Serialize;

use super::error::ErrorCode;

#[derive(Debug, Clone, Serialize)]
pub struct DocPage {
    pub page: &'static str,
    pub title: &'static str,
    pub body: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DocEntry {
    pub page: &'static str,
    pub title: &'static str,
}

const PAGES: &[(&str, &str, &str)] = &[
    (
        "index",
        "Control system manual",
        "Start here. Pages: operators-manual, sysadmin-manual, query, restore, error-codes.\n",
    ),
    (
        "operators-manual",
        "Operators' manual",
        "Live channels: watch readbacks in the monitor, edit setpoints inline. \
Writes outside a device's limits are refused and leave the channel unchanged.\n\
Tunes: archive the running machine, or pick an archived tune, enter the new beam \
(mass, charge state, energy per nucleon) and run a dry run before committing.\n",
    ),
    (
        "sysadmin-manual",
        "System administrators' manual",
        "The daemon keeps everything under data_dir: catalog.src and tables/<name>.log|.idx. \
Back up the directory while the daemon is stopped. Intervals, port and seed are set in the config file.\n",
    ),
    (
        "query",
        "Querying the archive",
        "Choose a table, add filters (column, operator, literal; all must hold), an optional \
sort column and a page size of 1 to 1000. Operators: eq, neq, lt, le, gt, ge, contains (text only).\n",
    ),
    (
        "restore",
        "Restoring a tune for a new beam",
        "Magnets scale with magnetic rigidity p/q, electrostatic elements with pβc/q and resonator \
amplitudes with m·E/q. Phases and stepper positions are copied unchanged. Values beyond device \
limits are clamped and flagged. A warning is shown when the new beam exceeds β = 0.2.\n",
    ),
    ("error-codes", "Error codes", ""),
];

pub fn index() -> Vec<DocEntry> {
    PAGES
        .iter()
        .map(|&(page, title, _)| DocEntry { page, title })
        .collect()
}

pub fn page(name: &str) -> Option<DocPage> {
    let &(page, title, body) = PAGES.iter().find(|(p, _, _)| *p == name)?;
    let body = if page == "error-codes" {
        error_code_table()
    } else {
        body.to_string()
    };
    Some(DocPage { page, title, body })
}

fn error_code_table() -> String {
    let mut out = String::new();
    for c in ErrorCode::ALL {
        out.push_str(&format!("{} ({}): {}\n", c.as_str(), c.default_status().as_u16(), c.description()));
    }
    out
}
