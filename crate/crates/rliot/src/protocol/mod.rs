//! Command dictionary and wire types for the bulb's JSON control protocol.
//!
//! Every exchange is a single-line JSON object terminated by CRLF. Commands
//! carry `id`, `method`, `params`; responses echo the id and carry exactly one
//! of `result` or `error`. The codec in [`codec`] produces the device's exact
//! byte layout (spaces after `:` and `,`) and accepts any field order on the
//! way back in.

mod codec;
mod dictionary;

pub use codec::{decode_command, decode_response, encode_command, encode_response, CodecError};
pub use dictionary::{
    sample_params, Action, DictionaryError, MessageDictionary, MethodSpec, ParamSpec,
};

use serde::{Deserialize, Serialize};

/// One positional command parameter. The protocol only ever sends integers
/// and strings in `params` arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Str(String),
}

impl ParamValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            ParamValue::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Int(_) => None,
            ParamValue::Str(s) => Some(s),
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Str(s) => write!(f, "{s}"),
        }
    }
}

/// A request frame. `id` is positive and unique per connection on the client
/// side; the device simply echoes whatever it received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub id: u64,
    pub method: String,
    pub params: Vec<ParamValue>,
}

impl CommandMessage {
    pub fn new(id: u64, method: impl Into<String>, params: Vec<ParamValue>) -> Self {
        CommandMessage {
            id,
            method: method.into(),
            params,
        }
    }
}

/// Device-reported failure, e.g. an unsupported method or rejected params.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: i64,
    pub message: String,
}

/// Payload of a response frame: exactly one of the two variants is on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseOutcome {
    /// `result` array; values are reported as strings (numbers are stringified
    /// on decode).
    Ok(Vec<String>),
    Error(ErrorBody),
}

/// A decoded response frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultMessage {
    pub id: u64,
    pub outcome: ResponseOutcome,
}

impl ResultMessage {
    pub fn ok(id: u64, values: Vec<String>) -> Self {
        ResultMessage {
            id,
            outcome: ResponseOutcome::Ok(values),
        }
    }

    pub fn error(id: u64, code: i64, message: impl Into<String>) -> Self {
        ResultMessage {
            id,
            outcome: ResponseOutcome::Error(ErrorBody {
                code,
                message: message.into(),
            }),
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self.outcome, ResponseOutcome::Error(_))
    }

    /// Result values for an ok response, `None` for an error.
    pub fn values(&self) -> Option<&[String]> {
        match &self.outcome {
            ResponseOutcome::Ok(values) => Some(values),
            ResponseOutcome::Error(_) => None,
        }
    }
}

/// Error codes the simulator uses; kept in one place so client-side checks
/// and the device agree.
pub mod error_code {
    /// Method exists in nobody's firmware, or not in this device's.
    pub const UNSUPPORTED: i64 = -1;
    /// Params failed validation (wrong arity, type, or range).
    pub const INVALID_PARAMS: i64 = -2;
    /// Sliding-window command quota exceeded.
    pub const RATE_LIMITED: i64 = -3;
    /// Command needs the light on, and it is off.
    pub const DEVICE_OFF: i64 = -4;
    /// Never sent by a device: synthesized client-side when a response frame
    /// arrives but cannot be understood (undecodable, or a mismatched id).
    pub const CLIENT_DECODE: i64 = -100;
}
