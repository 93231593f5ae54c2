//! `tunevaultctl`: scripted client for every `/api` route.
//!
//! Exit status is 0 on success, 1 on an API or transport error (the error
//! code is printed) and 2 on a usage error. `--porcelain` writes the HTTP
//! response body byte for byte.

use std::io::{BufRead, BufReader, Write};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

pub const URL_ENV: &str = "TUNEVAULT_URL";
pub const DEFAULT_URL: &str = "http://127.0.0.1:8080";
const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

pub const EXIT_OK: i32 = 0;
pub const EXIT_API: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tunevaultctl", version, about = "Command-line client for the tunevault daemon")]
pub struct Cli {
    /// Daemon base URL.
    #[arg(long, global = true, env = URL_ENV, default_value = DEFAULT_URL)]
    pub url: String,
    /// Print the raw API body instead of a table.
    #[arg(long, global = true)]
    pub porcelain: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Take a manual snapshot of the critical channels.
    Snapshot,
    /// List snapshots, or show one snapshot's values.
    Snapshots { id: Option<String> },
    /// Archive the running machine as a tune.
    ArchiveTune {
        #[arg(long)]
        label: String,
    },
    /// List tunes, or show one tune's values.
    Tunes { id: Option<String> },
    /// Restore a tune scaled to a new beam.
    Restore(RestoreArgs),
    /// Query an archive table.
    Query(QueryArgs),
    /// List tables, or describe one.
    Tables { name: Option<String> },
    /// Read live channels.
    Channels {
        #[arg(long, default_value = "**")]
        pattern: String,
    },
    /// Follow live channel updates.
    Watch {
        #[arg(long, default_value = "**")]
        pattern: String,
        /// Stop after this many updates.
        #[arg(long)]
        count: Option<u64>,
    },
    /// Write a setpoint.
    Set { channel: String, value: String },
    /// List a stepper's presets, or resolve one.
    Presets { device: String, name: Option<String> },
    /// Show manual pages.
    Docs { page: Option<String> },
    /// Daemon health.
    Health,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub tune: String,
    #[arg(long)]
    pub mass: f64,
    #[arg(long)]
    pub charge: i64,
    #[arg(long)]
    pub energy: f64,
    /// Compute the report without writing any channel.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub table: String,
    /// `column,op,literal`; escape a comma in the literal as `\,`.
    #[arg(long = "where")]
    pub filters: Vec<String>,
    /// `column` or `column:desc`.
    #[arg(long)]
    pub sort: Option<String>,
    #[arg(long)]
    pub limit: Option<i64>,
    #[arg(long)]
    pub offset: Option<i64>,
}

enum Failure {
    Usage(String),
    Api { code: String, message: String, body: Vec<u8> },
    Io(std::io::Error),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

struct Reply {
    status: u16,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Result<Json, Failure> {
        serde_json::from_slice(&self.body).map_err(|e| Failure::Api {
            code: "BAD_RESPONSE".into(),
            message: e.to_string(),
            body: self.body.clone(),
        })
    }
}

struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    fn new(base: &str) -> Result<Client, Failure> {
        let http = reqwest::blocking::Client::builder()
            .timeout(None::<Duration>)
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(Client {
            base: base.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn call(&self, method: reqwest::Method, path: &str, body: Option<&Json>) -> Result<Reply, Failure> {
        let mut req = self.http.request(method, self.url(path)).timeout(REQUEST_TIMEOUT);
        if let Some(b) = body {
            req = req
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(serde_json::to_vec(b).expect("json body"));
        }
        let resp = req.send().map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(transport)?.to_vec();
        let reply = Reply { status, body };
        if status >= 400 {
            return Err(api_failure(&reply));
        }
        Ok(reply)
    }

    fn get(&self, path: &str) -> Result<Reply, Failure> {
        self.call(reqwest::Method::GET, path, None)
    }

    fn post(&self, path: &str, body: &Json) -> Result<Reply, Failure> {
        self.call(reqwest::Method::POST, path, Some(body))
    }
}

fn transport(e: reqwest::Error) -> Failure {
    Failure::Api {
        code: "CONNECT_FAILED".into(),
        message: e.to_string(),
        body: Vec::new(),
    }
}

fn api_failure(reply: &Reply) -> Failure {
    let parsed: Option<Json> = serde_json::from_slice(&reply.body).ok();
    let field = |k: &str| parsed.as_ref().and_then(|j| j.get(k)).and_then(Json::as_str).map(str::to_string);
    Failure::Api {
        code: field("code").unwrap_or_else(|| format!("HTTP_{}", reply.status)),
        message: field("message").unwrap_or_default(),
        body: reply.body.clone(),
    }
}

/// Runs one invocation and returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let porcelain = cli.porcelain;
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Api { code, message, body }) => {
            if porcelain && !body.is_empty() {
                let _ = out.write_all(&body);
            }
            let _ = writeln!(err, "{code}: {message}");
            EXIT_API
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "output error: {e}");
            EXIT_API
        }
    }
}

fn seg(s: &str) -> String {
    // path segments here are channel names, device ids, presets or integers
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~:".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn query_string(pattern: &str) -> String {
    format!("?pattern={}", seg(pattern).replace('*', "%2A"))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let client = Client::new(&cli.url)?;
    let porcelain = cli.porcelain;
    let emit = |out: &mut dyn Write, reply: &Reply, human: &dyn Fn(&Json) -> String| -> Result<(), Failure> {
        if porcelain {
            out.write_all(&reply.body)?;
        } else {
            out.write_all(human(&reply.json()?).as_bytes())?;
        }
        Ok(())
    };

    match &cli.command {
        Command::Snapshot => {
            let r = client.post("/api/snapshots", &json!({}))?;
            emit(out, &r, &|j| format!("snapshot {}\n", j["id"]))
        }
        Command::Snapshots { id: None } => {
            let r = client.get("/api/snapshots")?;
            emit(out, &r, &|j| {
                table_of_objects(j, &["id", "taken_at", "trigger", "store_version", "n_values"])
            })
        }
        Command::Snapshots { id: Some(id) } => {
            let r = client.get(&format!("/api/snapshots/{}", seg(id)))?;
            emit(out, &r, &|j| {
                let s = &j["snapshot"];
                let rows = j["values"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|v| {
                        let value = ["value_float", "value_int", "value_text"]
                            .iter()
                            .map(|k| &v[*k])
                            .find(|x| !x.is_null())
                            .map_or_else(String::new, text);
                        vec![text(&v["channel"]), value, text(&v["seq"])]
                    })
                    .collect();
                format!(
                    "snapshot {} taken_at {} trigger {} store_version {}\n{}",
                    s["id"],
                    s["taken_at"],
                    text(&s["trigger"]),
                    s["store_version"],
                    render_table(&["channel", "value", "seq"], rows)
                )
            })
        }
        Command::ArchiveTune { label } => {
            let r = client.post("/api/tunes", &json!({ "label": label }))?;
            emit(out, &r, &|j| format!("tune {}\n", j["id"]))
        }
        Command::Tunes { id: None } => {
            let r = client.get("/api/tunes")?;
            emit(out, &r, &|j| {
                table_of_objects(
                    j,
                    &["id", "label", "created_at", "provenance", "mass_amu", "charge_state", "energy_mev_u"],
                )
            })
        }
        Command::Tunes { id: Some(id) } => {
            let r = client.get(&format!("/api/tunes/{}", seg(id)))?;
            emit(out, &r, &|j| {
                let t = &j["tune"];
                format!(
                    "tune {} '{}' beam {} u {}+ {} MeV/u\n{}",
                    t["id"],
                    text(&t["label"]),
                    t["mass_amu"],
                    t["charge_state"],
                    t["energy_mev_u"],
                    table_of_objects(&j["values"], &["channel", "scaling_law", "value_float"])
                )
            })
        }
        Command::Restore(a) => {
            let body = json!({
                "beam": {"mass_amu": a.mass, "charge_state": a.charge, "energy_mev_u": a.energy},
                "mode": if a.dry_run { "dry_run" } else { "commit" },
            });
            let r = client.post(&format!("/api/tunes/{}/restore", seg(&a.tune)), &body)?;
            emit(out, &r, &render_restore)
        }
        Command::Query(a) => {
            let spec = build_query(&client, a)?;
            let r = client.post("/api/query", &spec)?;
            emit(out, &r, &|j| {
                let headers: Vec<String> = j["columns"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(text)
                    .collect();
                let rows: Vec<Vec<String>> = j["rows"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|r| r.as_array().into_iter().flatten().map(text).collect())
                    .collect();
                let n = rows.len();
                let h: Vec<&str> = headers.iter().map(String::as_str).collect();
                format!("{}{} of {} matching rows\n", render_table(&h, rows), n, j["total_matching"])
            })
        }
        Command::Tables { name: None } => {
            let r = client.get("/api/tables")?;
            emit(out, &r, &|j| {
                let rows = j
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|t| {
                        let cols = t["columns"].as_array().map_or(0, Vec::len);
                        vec![text(&t["table"]), cols.to_string()]
                    })
                    .collect();
                render_table(&["table", "columns"], rows)
            })
        }
        Command::Tables { name: Some(name) } => {
            let r = client.get(&format!("/api/tables/{}", seg(name)))?;
            emit(out, &r, &|j| table_of_objects(&j["columns"], &["name", "type", "nullable"]))
        }
        Command::Channels { pattern } => {
            let r = client.get(&format!("/api/channels{}", query_string(pattern)))?;
            emit(out, &r, &|j| {
                table_of_objects(j, &["name", "value", "units", "role", "quality", "seq"])
            })
        }
        Command::Watch { pattern, count } => watch(&client, pattern, *count, porcelain, out),
        Command::Set { channel, value } => {
            // a literal that parses as structured text is sent as such, anything else as a string
            let v: Json = serde_json::from_str(value).unwrap_or_else(|_| Json::String(value.clone()));
            let r = client.call(
                reqwest::Method::PUT,
                &format!("/api/channels/{}", seg(channel)),
                Some(&json!({ "value": v })),
            )?;
            emit(out, &r, &|j| {
                format!("{} = {} (seq {}, version {})\n", text(&j["channel"]), value, j["seq"], j["global_version"])
            })
        }
        Command::Presets { device, name: None } => {
            let r = client.get(&format!("/api/devices/{}/presets", seg(device)))?;
            emit(out, &r, &|j| table_of_objects(&j["presets"], &["preset_name", "position_steps"]))
        }
        Command::Presets { device, name: Some(name) } => {
            let r = client.get(&format!("/api/devices/{}/presets/{}", seg(device), seg(name)))?;
            emit(out, &r, &|j| {
                format!("{} {} {}\n", text(&j["device_id"]), text(&j["preset_name"]), j["position_steps"])
            })
        }
        Command::Docs { page: None } => {
            let r = client.get("/api/docs")?;
            emit(out, &r, &|j| table_of_objects(j, &["page", "title"]))
        }
        Command::Docs { page: Some(p) } => {
            let r = client.get(&format!("/api/docs/{}", seg(p)))?;
            emit(out, &r, &|j| format!("{}\n\n{}", text(&j["title"]), text(&j["body"])))
        }
        Command::Health => {
            let r = client.get("/api/health")?;
            emit(out, &r, &|j| {
                let rows = j
                    .as_object()
                    .into_iter()
                    .flatten()
                    .map(|(k, v)| vec![k.clone(), text(v)])
                    .collect();
                render_table(&["field", "value"], rows)
            })
        }
    }
}

fn watch(client: &Client, pattern: &str, count: Option<u64>, porcelain: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let resp = client
        .http
        .get(client.url(&format!("/api/channels/stream{}", query_string(pattern))))
        .send()
        .map_err(transport)?;
    let status = resp.status().as_u16();
    if status >= 400 {
        let body = resp.bytes().map_err(transport)?.to_vec();
        return Err(api_failure(&Reply { status, body }));
    }
    if count == Some(0) {
        return Ok(());
    }
    let mut reader = BufReader::new(resp);
    let mut event = String::new();
    let mut data = String::new();
    let mut seen = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Failure::Api {
            code: "CONNECT_FAILED".into(),
            message: e.to_string(),
            body: Vec::new(),
        })? == 0
        {
            return Ok(());
        }
        if porcelain {
            out.write_all(line.as_bytes())?;
        }
        let l = line.trim_end_matches(['\r', '\n']);
        if let Some(v) = l.strip_prefix("event:") {
            event = v.trim_start().to_string();
        } else if let Some(v) = l.strip_prefix("data:") {
            data.push_str(v.strip_prefix(' ').unwrap_or(v));
        } else if l.is_empty() && !data.is_empty() {
            let payload: Json = serde_json::from_str(&data).unwrap_or(Json::Null);
            data.clear();
            if event == "error" {
                out.flush()?;
                return Err(Failure::Api {
                    code: text(&payload["code"]),
                    message: text(&payload["message"]),
                    body: Vec::new(),
                });
            }
            if !porcelain {
                writeln!(out, "{} {} seq {}", text(&payload["name"]), text(&payload["value"]), payload["seq"])?;
            }
            out.flush()?;
            seen += 1;
            if count.is_some_and(|c| seen >= c) {
                return Ok(());
            }
        }
    }
}

fn render_restore(j: &Json) -> String {
    let beam = |b: &Json| format!("{} u {}+ {} MeV/u", b["mass_amu"], b["charge_state"], b["energy_mev_u"]);
    let mut s = format!(
        "tune {} ({}): {} -> {}\n",
        j["tune_id"],
        text(&j["mode"]),
        beam(&j["old_beam"]),
        beam(&j["new_beam"])
    );
    let f = &j["factors"];
    s.push_str(&format!(
        "factors: magnetic {} electrostatic {} rf_amplitude {}\n",
        f["magnetic"], f["electrostatic"], f["rf_amplitude"]
    ));
    if j["beta_warning"].as_bool() == Some(true) {
        s.push_str("warning: new beam exceeds beta 0.2\n");
    }
    let rows = j["entries"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|e| {
            vec![
                text(&e["channel"]),
                text(&e["scaling_law"]),
                text(&e["archived_value"]),
                text(&e["factor"]),
                text(&e["proposed_value"]),
                if e["clamped"].as_bool() == Some(true) { "clamped".into() } else { String::new() },
                match (&e["error"], e["applied"].as_bool()) {
                    (Json::String(err), _) => format!("error: {err}"),
                    (_, Some(true)) => "applied".into(),
                    _ => String::new(),
                },
            ]
        })
        .collect();
    s.push_str(&render_table(
        &["channel", "law", "archived", "factor", "proposed", "clamp", "status"],
        rows,
    ));
    s
}

/// Splits `col,op,literal` on unescaped commas; `\,` and `\\` are escapes.
pub fn split_filter(raw: &str) -> Option<(String, String, String)> {
    let mut parts = vec![String::new()];
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(n @ (',' | '\\')) => parts.last_mut()?.push(n),
                Some(n) => {
                    let p = parts.last_mut()?;
                    p.push('\\');
                    p.push(n);
                }
                None => parts.last_mut()?.push('\\'),
            },
            ',' if parts.len() < 3 => parts.push(String::new()),
            ',' => return None,
            c => parts.last_mut()?.push(c),
        }
    }
    let [col, op, lit]: [String; 3] = parts.try_into().ok()?;
    (!col.is_empty() && !op.is_empty()).then_some((col, op, lit))
}

/// Types a literal by the column's declared type. A literal that does not
/// parse is sent as text so the server reports the mismatch.
pub fn typed_literal(column_type: Option<&str>, lit: &str) -> Json {
    match column_type {
        Some("int" | "timestamp") => lit.parse::<i64>().map_or_else(|_| Json::from(lit), Json::from),
        Some("float") => match lit.parse::<f64>() {
            Ok(v) if v.is_finite() => Json::from(v),
            _ => Json::from(lit),
        },
        Some("bool") => match lit {
            "true" => Json::Bool(true),
            "false" => Json::Bool(false),
            _ => Json::from(lit),
        },
        _ => Json::from(lit),
    }
}

fn build_query(client: &Client, a: &QueryArgs) -> Result<Json, Failure> {
    let schema = client.get(&format!("/api/tables/{}", seg(&a.table)))?.json()?;
    let type_of = |col: &str| -> Option<String> {
        schema["columns"]
            .as_array()?
            .iter()
            .find(|c| c["name"] == col)
            .and_then(|c| c["type"].as_str())
            .map(str::to_string)
    };
    let mut filters = Vec::new();
    for raw in &a.filters {
        let (column, op, lit) = split_filter(raw)
            .ok_or_else(|| Failure::Usage(format!("--where expects col,op,literal, got '{raw}'")))?;
        let value = typed_literal(type_of(&column).as_deref(), &lit);
        filters.push(json!({ "column": column, "op": op, "value": value }));
    }
    let mut spec = json!({ "table": a.table, "filters": filters });
    if let Some(s) = &a.sort {
        let (column, direction) = match s.rsplit_once(':') {
            Some((c, "desc")) => (c, "desc"),
            Some((c, "asc")) => (c, "asc"),
            Some(_) => return Err(Failure::Usage(format!("--sort expects col or col:desc, got '{s}'"))),
            None => (s.as_str(), "asc"),
        };
        spec["sort"] = json!({ "column": column, "direction": direction });
    }
    if let Some(l) = a.limit {
        spec["limit"] = json!(l);
    }
    if let Some(o) = a.offset {
        spec["offset"] = json!(o);
    }
    Ok(spec)
}

fn text(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        Json::Null => "null".into(),
        other => other.to_string(),
    }
}

fn table_of_objects(list: &Json, columns: &[&str]) -> String {
    let rows = list
        .as_array()
        .into_iter()
        .flatten()
        .map(|o| columns.iter().map(|c| text(&o[*c])).collect())
        .collect();
    render_table(columns, rows)
}

/// Left-aligned columns separated by two spaces.
pub fn render_table(headers: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (i, c) in r.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, c) in cells.enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            if i + 1 < widths.len() {
                s.push_str(&" ".repeat(widths[i].saturating_sub(c.chars().count())));
            }
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&mut headers.iter().copied());
    for r in &rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
    }
    out
}
