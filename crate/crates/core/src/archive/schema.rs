//! The fixed table whitelist.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Text,
    Int,
    Float,
    Timestamp,
    Bool,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Int => "int",
            ColumnType::Float => "float",
            ColumnType::Timestamp => "timestamp",
            ColumnType::Bool => "bool",
        }
    }

    /// Whether `<`, `>` and friends are meaningful.
    pub fn is_ordered(self) -> bool {
        !matches!(self, ColumnType::Bool)
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnSchema {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableSchema {
    pub table: &'static str,
    pub columns: &'static [ColumnSchema],
}

impl TableSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.name).collect()
    }
}

const fn col(name: &'static str, ty: ColumnType) -> ColumnSchema {
    ColumnSchema {
        name,
        ty,
        nullable: false,
    }
}

const fn nullable(name: &'static str, ty: ColumnType) -> ColumnSchema {
    ColumnSchema { name, ty, nullable: true }
}

use ColumnType::{Bool, Float, Int, Text, Timestamp};

pub const RESONATORS: TableSchema = TableSchema {
    table: "resonators",
    columns: &[
        col("id", Int),
        col("device_id", Text),
        col("crate", Int),
        col("slot", Int),
        col("nominal_amplitude", Float),
        col("status", Text),
    ],
};

pub const BEAM_MEASUREMENT: TableSchema = TableSchema {
    table: "beam_measurement",
    columns: &[
        col("id", Int),
        col("taken_at", Timestamp),
        col("target_line", Int),
        col("current_enA", Float),
        col("transmission", Float),
    ],
};

pub const CRYO_ALARMS: TableSchema = TableSchema {
    table: "cryo_alarms",
    columns: &[
        col("id", Int),
        col("raised_at", Timestamp),
        col("channel", Text),
        col("temperature_k", Float),
        col("threshold_k", Float),
        col("acknowledged", Bool),
    ],
};

pub const CAMAC_CRATES: TableSchema = TableSchema {
    table: "camac_crates",
    columns: &[col("id", Int), col("crate", Int), col("n_modules", Int)],
};

pub const CAMAC_MODULES: TableSchema = TableSchema {
    table: "camac_modules",
    columns: &[
        col("id", Int),
        col("crate", Int),
        col("slot", Int),
        col("device_id", Text),
        col("class", Text),
    ],
};

pub const STEPPER_PRESETS: TableSchema = TableSchema {
    table: "stepper_presets",
    columns: &[
        col("id", Int),
        col("device_id", Text),
        col("preset_name", Text),
        col("position_steps", Int),
    ],
};

pub const SNAPSHOTS: TableSchema = TableSchema {
    table: "snapshots",
    columns: &[
        col("id", Int),
        col("taken_at", Timestamp),
        col("trigger", Text),
        col("store_version", Int),
        col("n_values", Int),
    ],
};

pub const SNAPSHOT_VALUES: TableSchema = TableSchema {
    table: "snapshot_values",
    columns: &[
        col("id", Int),
        col("snapshot_id", Int),
        col("channel", Text),
        nullable("value_float", Float),
        nullable("value_int", Int),
        nullable("value_text", Text),
        col("seq", Int),
    ],
};

pub const TUNES: TableSchema = TableSchema {
    table: "tunes",
    columns: &[
        col("id", Int),
        col("label", Text),
        col("created_at", Timestamp),
        col("provenance", Text),
        col("mass_amu", Float),
        col("charge_state", Int),
        col("energy_mev_u", Float),
    ],
};

pub const TUNE_VALUES: TableSchema = TableSchema {
    table: "tune_values",
    columns: &[
        col("id", Int),
        col("tune_id", Int),
        col("channel", Text),
        col("scaling_law", Text),
        col("value_float", Float),
    ],
};

pub const ALL_TABLES: [&TableSchema; 10] = [
    &RESONATORS,
    &BEAM_MEASUREMENT,
    &CRYO_ALARMS,
    &CAMAC_CRATES,
    &CAMAC_MODULES,
    &STEPPER_PRESETS,
    &SNAPSHOTS,
    &SNAPSHOT_VALUES,
    &TUNES,
    &TUNE_VALUES,
];

pub fn schema(table: &str) -> Option<&'static TableSchema> {
    ALL_TABLES.iter().copied().find(|s| s.table == table)
}

/// Parent/child table pairs written as one atomic family.
pub(crate) struct Family {
    pub parent: &'static str,
    pub child: &'static str,
    pub foreign_key: &'static str,
}

pub(crate) const FAMILIES: [Family; 2] = [
    Family {
        parent: "snapshots",
        child: "snapshot_values",
        foreign_key: "snapshot_id",
    },
    Family {
        parent: "tunes",
        child: "tune_values",
        foreign_key: "tune_id",
    },
];
