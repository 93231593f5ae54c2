use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use serde_json::Value as Json;

use crate::archive::ArchiveError;
use crate::channel_db::ChannelDbError;
use crate::query::QueryError;
use crate::sim::SimError;
use crate::tune::TuneError;

/// Machine-readable error codes carried in every error body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    UnknownTable,
    UnknownColumn,
    TypeMismatch,
    BadOperator,
    BadPagination,
    MalformedBody,
    MalformedPattern,
    InvalidId,
    InvalidBeam,
    UnknownChannel,
    UnknownTune,
    UnknownSnapshot,
    UnknownDevice,
    UnknownPreset,
    UnknownPage,
    NotFound,
    MethodNotAllowed,
    ReadOnlyChannel,
    RestoreBusy,
    ValueOutOfLimits,
    StorageFailure,
    WriteFailure,
    SubscriberOverflow,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 24] = [
        ErrorCode::UnknownTable,
        ErrorCode::UnknownColumn,
        ErrorCode::TypeMismatch,
        ErrorCode::BadOperator,
        ErrorCode::BadPagination,
        ErrorCode::MalformedBody,
        ErrorCode::MalformedPattern,
        ErrorCode::InvalidId,
        ErrorCode::InvalidBeam,
        ErrorCode::UnknownChannel,
        ErrorCode::UnknownTune,
        ErrorCode::UnknownSnapshot,
        ErrorCode::UnknownDevice,
        ErrorCode::UnknownPreset,
        ErrorCode::UnknownPage,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::ReadOnlyChannel,
        ErrorCode::RestoreBusy,
        ErrorCode::ValueOutOfLimits,
        ErrorCode::StorageFailure,
        ErrorCode::WriteFailure,
        ErrorCode::SubscriberOverflow,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownTable => "UNKNOWN_TABLE",
            ErrorCode::UnknownColumn => "UNKNOWN_COLUMN",
            ErrorCode::TypeMismatch => "TYPE_MISMATCH",
            ErrorCode::BadOperator => "BAD_OPERATOR",
            ErrorCode::BadPagination => "BAD_PAGINATION",
            ErrorCode::MalformedBody => "MALFORMED_BODY",
            ErrorCode::MalformedPattern => "MALFORMED_PATTERN",
            ErrorCode::InvalidId => "INVALID_ID",
            ErrorCode::InvalidBeam => "INVALID_BEAM",
            ErrorCode::UnknownChannel => "UNKNOWN_CHANNEL",
            ErrorCode::UnknownTune => "UNKNOWN_TUNE",
            ErrorCode::UnknownSnapshot => "UNKNOWN_SNAPSHOT",
            ErrorCode::UnknownDevice => "UNKNOWN_DEVICE",
            ErrorCode::UnknownPreset => "UNKNOWN_PRESET",
            ErrorCode::UnknownPage => "UNKNOWN_PAGE",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::MethodNotAllowed => "METHOD_NOT_ALLOWED",
            ErrorCode::ReadOnlyChannel => "READ_ONLY_CHANNEL",
            ErrorCode::RestoreBusy => "RESTORE_BUSY",
            ErrorCode::ValueOutOfLimits => "VALUE_OUT_OF_LIMITS",
            ErrorCode::StorageFailure => "STORAGE_FAILURE",
            ErrorCode::WriteFailure => "WRITE_FAILURE",
            ErrorCode::SubscriberOverflow => "SUBSCRIBER_OVERFLOW",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    /// Status used unless a route overrides it.
    pub fn default_status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            UnknownTable | UnknownColumn | TypeMismatch | BadOperator | BadPagination | MalformedBody
            | MalformedPattern | InvalidId | InvalidBeam => StatusCode::BAD_REQUEST,
            UnknownChannel | UnknownTune | UnknownSnapshot | UnknownDevice | UnknownPreset | UnknownPage
            | NotFound => StatusCode::NOT_FOUND,
            MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ReadOnlyChannel | RestoreBusy => StatusCode::CONFLICT,
            ValueOutOfLimits => StatusCode::UNPROCESSABLE_ENTITY,
            StorageFailure | WriteFailure | SubscriberOverflow | Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn description(self) -> &'static str {
        use ErrorCode::*;
        match self {
            UnknownTable => "The table is not in the whitelist.",
            UnknownColumn => "The column does not exist in the table.",
            TypeMismatch => "A query literal does not match the column type; a channel write with the wrong type returns 409 with this code.",
            BadOperator => "The filter operator is unknown or not valid for the column type.",
            BadPagination => "limit is outside 1..=1000 or offset is negative.",
            MalformedBody => "The request body is not the expected structured document.",
            MalformedPattern => "The channel pattern is not a valid glob.",
            InvalidId => "A path id is not an integer.",
            InvalidBeam => "Beam parameters violate mass > 0, 1 <= charge <= 120, energy > 0.",
            UnknownChannel => "No channel has that name.",
            UnknownTune => "No tune has that id.",
            UnknownSnapshot => "No snapshot has that id.",
            UnknownDevice => "No device has that id.",
            UnknownPreset => "The device has no preset with that name.",
            UnknownPage => "No documentation page has that name.",
            NotFound => "No route matches the request.",
            MethodNotAllowed => "The route exists but not for this method.",
            ReadOnlyChannel => "Readback channels cannot be written.",
            RestoreBusy => "Another commit-mode restore is in progress.",
            ValueOutOfLimits => "The value is outside the device limits; the channel is unchanged.",
            StorageFailure => "The archive could not complete the write.",
            WriteFailure => "Some setpoint writes of a committed restore failed; see the report.",
            SubscriberOverflow => "Stream consumer fell behind; sent as a final stream event.",
            Internal => "Unexpected server error.",
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub code: ErrorCode,
    pub status: StatusCode,
    pub message: String,
    pub report: Option<Json>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            status: code.default_status(),
            message: message.into(),
            report: None,
        }
    }

    pub fn with_status(mut self, status: StatusCode) -> Self {
        self.status = status;
        self
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'static str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a Json>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.as_str(),
            message: &self.message,
            report: self.report.as_ref(),
        };
        super::json_response(self.status, &body)
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let code = match e {
            QueryError::UnknownTable(_) => ErrorCode::UnknownTable,
            QueryError::UnknownColumn { .. } => ErrorCode::UnknownColumn,
            QueryError::TypeMismatch { .. } => ErrorCode::TypeMismatch,
            QueryError::BadOperator { .. } => ErrorCode::BadOperator,
            QueryError::BadPagination(_) => ErrorCode::BadPagination,
            QueryError::Storage(_) => ErrorCode::StorageFailure,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<ArchiveError> for ApiError {
    fn from(e: ArchiveError) -> Self {
        let code = match e {
            ArchiveError::UnknownTable(_) => ErrorCode::UnknownTable,
            ArchiveError::UnknownTune(_) => ErrorCode::UnknownTune,
            ArchiveError::UnknownSnapshot(_) => ErrorCode::UnknownSnapshot,
            _ => ErrorCode::StorageFailure,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<TuneError> for ApiError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::UnknownTune(_) => ApiError::new(ErrorCode::UnknownTune, e.to_string()),
            TuneError::InvalidBeam(_) => ApiError::new(ErrorCode::InvalidBeam, e.to_string()),
            TuneError::RestoreBusy => ApiError::new(ErrorCode::RestoreBusy, e.to_string()),
            TuneError::WriteFailure(ref report) => {
                let mut err = ApiError::new(ErrorCode::WriteFailure, e.to_string());
                err.report = serde_json::to_value(report).ok();
                err
            }
            TuneError::Storage(inner) => inner.into(),
        }
    }
}

impl From<ChannelDbError> for ApiError {
    fn from(e: ChannelDbError) -> Self {
        let code = match e {
            ChannelDbError::UnknownChannel(_) => ErrorCode::UnknownChannel,
            ChannelDbError::MalformedPattern(_) | ChannelDbError::MalformedName(_) => ErrorCode::MalformedPattern,
            ChannelDbError::TypeMismatch { .. } | ChannelDbError::NotInEnumSet { .. } => ErrorCode::TypeMismatch,
            ChannelDbError::SubscriberOverflow => ErrorCode::SubscriberOverflow,
            ChannelDbError::DuplicateName(_) | ChannelDbError::EmptyEnumSet => ErrorCode::Internal,
        };
        let err = ApiError::new(code, e.to_string());
        if code == ErrorCode::TypeMismatch {
            err.with_status(StatusCode::CONFLICT)
        } else {
            err
        }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::UnknownDevice(_) => ErrorCode::UnknownDevice,
            SimError::UnknownPreset { .. } => ErrorCode::UnknownPreset,
            SimError::BadStep(_) | SimError::Channel(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}
