//! Row values and their one-line on-disk encoding.
//!
//! A record is a single-line JSON object whose keys are exactly the table's
//! column names, written in schema order. Floats use the shortest decimal
//! that round-trips; timestamps are integer UTC milliseconds.

use std::cmp::Ordering;
use std::fmt;

use serde::ser::{Serialize, SerializeMap, Serializer};
use serde_json::{Map, Value as Json};

use super::schema::{ColumnSchema, ColumnType, TableSchema};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Cell::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    /// Total order used for filtering and sorting: nulls first, then by
    /// value. Stored floats are finite, so numeric order is total and
    /// `-0.0 == 0.0`. Cells of one column always share a variant, so mixed
    /// comparisons only order by variant.
    pub fn total_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Null, Cell::Null) => Ordering::Equal,
            (Cell::Null, _) => Ordering::Less,
            (_, Cell::Null) => Ordering::Greater,
            (Cell::Bool(a), Cell::Bool(b)) => a.cmp(b),
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (Cell::Float(a), Cell::Float(b)) => a.partial_cmp(b).unwrap_or_else(|| a.total_cmp(b)),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Bool(_) => 1,
            Cell::Int(_) => 2,
            Cell::Float(_) => 3,
            Cell::Text(_) => 4,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Cell::Null => Json::Null,
            Cell::Bool(b) => Json::Bool(*b),
            Cell::Int(v) => Json::from(*v),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map(Json::Number).unwrap_or(Json::Null),
            Cell::Text(s) => Json::String(s.clone()),
        }
    }

    /// Interprets a JSON value as a cell of column type `ty`. Integers are
    /// accepted for float columns (JSON does not distinguish `5` from `5.0`);
    /// nothing else converts.
    pub fn from_json(ty: ColumnType, v: &Json) -> Option<Cell> {
        match (ty, v) {
            (_, Json::Null) => Some(Cell::Null),
            (ColumnType::Text, Json::String(s)) => Some(Cell::Text(s.clone())),
            (ColumnType::Bool, Json::Bool(b)) => Some(Cell::Bool(*b)),
            (ColumnType::Int | ColumnType::Timestamp, Json::Number(n)) => n.as_i64().map(Cell::Int),
            (ColumnType::Float, Json::Number(n)) => n.as_f64().map(Cell::Float),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("null"),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Null => s.serialize_none(),
            Cell::Bool(b) => s.serialize_bool(*b),
            Cell::Int(v) => s.serialize_i64(*v),
            Cell::Float(v) => s.serialize_f64(*v),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Null, Into::into)
    }
}

/// A stored row; cells line up with the table's columns, `id` first.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<Cell>,
}

impl Row {
    pub fn id(&self) -> i64 {
        self.cells[0].as_i64().expect("id column is always an int")
    }

    pub fn get(&self, schema: &TableSchema, column: &str) -> Option<&Cell> {
        schema.column_index(column).map(|i| &self.cells[i])
    }
}

/// Column values for a row about to be inserted; `id` is assigned by the
/// store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewRow {
    pub(crate) fields: Vec<(String, Cell)>,
}

impl NewRow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, column: &str, value: impl Into<Cell>) -> Self {
        self.fields.push((column.to_string(), value.into()));
        self
    }

    pub fn set(&mut self, column: &str, value: impl Into<Cell>) {
        self.fields.push((column.to_string(), value.into()));
    }
}

pub(crate) fn check_cell(table: &str, col: &ColumnSchema, cell: &Cell) -> Result<(), String> {
    let ok = match (col.ty, cell) {
        (_, Cell::Null) => col.nullable,
        (ColumnType::Text, Cell::Text(_)) => true,
        (ColumnType::Bool, Cell::Bool(_)) => true,
        (ColumnType::Int | ColumnType::Timestamp, Cell::Int(_)) => true,
        (ColumnType::Float, Cell::Float(v)) => v.is_finite(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{table}.{}: {cell:?} does not fit column type {}", col.name, col.ty))
    }
}

/// Builds a full row from `new`, assigning `id`.
pub(crate) fn build_row(schema: &TableSchema, id: i64, new: &NewRow) -> Result<Row, String> {
    let mut cells = vec![Cell::Null; schema.columns.len()];
    let mut seen = vec![false; schema.columns.len()];
    cells[0] = Cell::Int(id);
    seen[0] = true;
    for (name, cell) in &new.fields {
        let idx = schema
            .column_index(name)
            .ok_or_else(|| format!("{} has no column {name}", schema.table))?;
        if idx == 0 {
            return Err("id is assigned by the store".to_string());
        }
        if seen[idx] {
            return Err(format!("column {name} given twice"));
        }
        check_cell(schema.table, &schema.columns[idx], cell)?;
        cells[idx] = cell.clone();
        seen[idx] = true;
    }
    for (col, present) in schema.columns.iter().zip(&seen) {
        if !present && !col.nullable {
            return Err(format!("{}.{} is required", schema.table, col.name));
        }
    }
    let row = Row { cells };
    check_table_rules(schema, &row)?;
    Ok(row)
}

fn check_table_rules(schema: &TableSchema, row: &Row) -> Result<(), String> {
    if schema.table == "snapshot_values" {
        let non_null = ["value_float", "value_int", "value_text"]
            .iter()
            .filter(|c| !row.get(schema, c).is_some_and(Cell::is_null))
            .count();
        if non_null != 1 {
            return Err("snapshot_values needs exactly one of value_float, value_int, value_text".into());
        }
    }
    Ok(())
}

pub(crate) fn encode(schema: &TableSchema, row: &Row) -> String {
    let mut out = Vec::with_capacity(128);
    let mut ser = serde_json::Serializer::new(&mut out);
    let mut map = ser.serialize_map(Some(schema.columns.len())).expect("in-memory write");
    for (col, cell) in schema.columns.iter().zip(&row.cells) {
        map.serialize_entry(col.name, cell).expect("in-memory write");
    }
    map.end().expect("in-memory write");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub(crate) fn decode(schema: &TableSchema, line: &str) -> Result<Row, String> {
    let obj: Map<String, Json> = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if obj.len() != schema.columns.len() {
        return Err(format!("expected {} fields, found {}", schema.columns.len(), obj.len()));
    }
    let mut cells = Vec::with_capacity(schema.columns.len());
    for col in schema.columns {
        let v = obj.get(col.name).ok_or_else(|| format!("missing field {}", col.name))?;
        let cell = Cell::from_json(col.ty, v).ok_or_else(|| format!("bad value for {}", col.name))?;
        check_cell(schema.table, col, &cell)?;
        cells.push(cell);
    }
    Ok(Row { cells })
}
