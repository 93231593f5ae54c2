//! Filter/sort/paginate over the whitelisted archive tables.
//!
//! Queries are typed structures validated against the table schema before
//! anything runs; literals are compared as data and never spliced into
//! anything that gets parsed.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::archive::{schema, ArchiveError, ArchiveStore, Cell, ColumnType, Row, TableSchema, ALL_TABLES};

pub const DEFAULT_LIMIT: i64 = 100;
pub const MAX_LIMIT: i64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {table} has no column {column}")]
    UnknownColumn { table: String, column: String },
    #[error("column {column} is {expected}; literal {literal} does not fit")]
    TypeMismatch {
        column: String,
        expected: ColumnType,
        literal: String,
    },
    #[error("operator {op:?} cannot be applied to {column}")]
    BadOperator { op: String, column: String },
    #[error("{0}")]
    BadPagination(String),
    #[error(transparent)]
    Storage(#[from] ArchiveError),
}

impl QueryError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::UnknownTable(_) => "UNKNOWN_TABLE",
            QueryError::UnknownColumn { .. } => "UNKNOWN_COLUMN",
            QueryError::TypeMismatch { .. } => "TYPE_MISMATCH",
            QueryError::BadOperator { .. } => "BAD_OPERATOR",
            QueryError::BadPagination(_) => "BAD_PAGINATION",
            QueryError::Storage(_) => "STORAGE_FAILURE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

impl Op {
    pub const ALL: [Op; 7] = [Op::Eq, Op::Neq, Op::Lt, Op::Le, Op::Gt, Op::Ge, Op::Contains];

    pub fn parse(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "eq",
            Op::Neq => "neq",
            Op::Lt => "lt",
            Op::Le => "le",
            Op::Gt => "gt",
            Op::Ge => "ge",
            Op::Contains => "contains",
        }
    }

    fn is_ordering(self) -> bool {
        matches!(self, Op::Lt | Op::Le | Op::Gt | Op::Ge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub column: String,
    pub op: String,
    pub value: Json,
}

impl Filter {
    pub fn new(column: &str, op: Op, value: impl Into<Json>) -> Self {
        Filter {
            column: column.to_string(),
            op: op.as_str().to_string(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sort {
    pub column: String,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub table: String,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub sort: Option<Sort>,
    #[serde(default = "default_limit")]
    pub limit: i64,
    #[serde(default)]
    pub offset: i64,
}

fn default_limit() -> i64 {
    DEFAULT_LIMIT
}

impl QuerySpec {
    pub fn new(table: &str) -> Self {
        QuerySpec {
            table: table.to_string(),
            filters: Vec::new(),
            sort: None,
            limit: DEFAULT_LIMIT,
            offset: 0,
        }
    }

    pub fn filter(mut self, column: &str, op: Op, value: impl Into<Json>) -> Self {
        self.filters.push(Filter::new(column, op, value));
        self
    }

    pub fn sort_by(mut self, column: &str, direction: Direction) -> Self {
        self.sort = Some(Sort {
            column: column.to_string(),
            direction,
        });
        self
    }

    pub fn page(mut self, limit: i64, offset: i64) -> Self {
        self.limit = limit;
        self.offset = offset;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub total_matching: usize,
}

struct Predicate {
    column: usize,
    op: Op,
    literal: Cell,
}

impl Predicate {
    fn eval(&self, row: &Row) -> bool {
        let cell = &row.cells[self.column];
        if cell.is_null() {
            return false;
        }
        if let Op::Contains = self.op {
            return match (cell, &self.literal) {
                (Cell::Text(h), Cell::Text(n)) => h.contains(n.as_str()),
                _ => false,
            };
        }
        let ord = cell.total_cmp(&self.literal);
        match self.op {
            Op::Eq => ord == Ordering::Equal,
            Op::Neq => ord != Ordering::Equal,
            Op::Lt => ord == Ordering::Less,
            Op::Le => ord != Ordering::Greater,
            Op::Gt => ord == Ordering::Greater,
            Op::Ge => ord != Ordering::Less,
            Op::Contains => unreachable!(),
        }
    }
}

struct Plan {
    schema: &'static TableSchema,
    predicates: Vec<Predicate>,
    sort: Option<(usize, Direction)>,
    limit: usize,
    offset: usize,
}

fn plan(spec: &QuerySpec) -> Result<Plan, QueryError> {
    let schema = describe(&spec.table)?;
    let column = |name: &str| {
        schema
            .column_index(name)
            .ok_or_else(|| QueryError::UnknownColumn {
                table: schema.table.to_string(),
                column: name.to_string(),
            })
    };

    let mut predicates = Vec::with_capacity(spec.filters.len());
    for f in &spec.filters {
        let idx = column(&f.column)?;
        let col = &schema.columns[idx];
        let bad_op = || QueryError::BadOperator {
            op: f.op.clone(),
            column: f.column.clone(),
        };
        let op = Op::parse(&f.op).ok_or_else(bad_op)?;
        if op == Op::Contains && col.ty != ColumnType::Text {
            return Err(bad_op());
        }
        if op.is_ordering() && !col.ty.is_ordered() {
            return Err(bad_op());
        }
        let literal = match Cell::from_json(col.ty, &f.value) {
            Some(Cell::Null) | None => {
                return Err(QueryError::TypeMismatch {
                    column: f.column.clone(),
                    expected: col.ty,
                    literal: f.value.to_string(),
                })
            }
            Some(c) => c,
        };
        predicates.push(Predicate {
            column: idx,
            op,
            literal,
        });
    }

    let sort = match &spec.sort {
        Some(s) => Some((column(&s.column)?, s.direction)),
        None => None,
    };
    if !(1..=MAX_LIMIT).contains(&spec.limit) {
        return Err(QueryError::BadPagination(format!("limit must be in 1..={MAX_LIMIT}, got {}", spec.limit)));
    }
    if spec.offset < 0 {
        return Err(QueryError::BadPagination(format!("offset must be >= 0, got {}", spec.offset)));
    }
    Ok(Plan {
        schema,
        predicates,
        sort,
        limit: spec.limit as usize,
        offset: spec.offset as usize,
    })
}

/// Checks a spec without running it.
pub fn validate(spec: &QuerySpec) -> Result<(), QueryError> {
    plan(spec).map(|_| ())
}

pub fn execute(store: &ArchiveStore, spec: &QuerySpec) -> Result<QueryResult, QueryError> {
    let plan = plan(spec)?;
    let result = store.with_rows(plan.schema.table, |schema, rows| {
        let mut matched: Vec<&Row> = rows
            .iter()
            .filter(|r| plan.predicates.iter().all(|p| p.eval(r)))
            .collect();
        if let Some((idx, dir)) = plan.sort {
            // sort_by is stable: ties keep insertion order.
            matched.sort_by(|a, b| {
                let o = a.cells[idx].total_cmp(&b.cells[idx]);
                match dir {
                    Direction::Asc => o,
                    Direction::Desc => o.reverse(),
                }
            });
        }
        QueryResult {
            columns: schema.column_names().into_iter().map(String::from).collect(),
            total_matching: matched.len(),
            rows: matched
                .into_iter()
                .skip(plan.offset)
                .take(plan.limit)
                .map(|r| r.cells.clone())
                .collect(),
        }
    })?;
    Ok(result)
}

pub fn describe(table: &str) -> Result<&'static TableSchema, QueryError> {
    schema(table).ok_or_else(|| QueryError::UnknownTable(table.to_string()))
}

pub fn tables() -> Vec<&'static TableSchema> {
    ALL_TABLES.to_vec()
}
