//! Line-oriented JSON codec.
//!
//! Encoded frames replicate the device's formatting exactly: one object per
//! line, a space after every `:` and `,`, fields in `id`, `method`, `params`
//! order, CRLF terminator. Decoding is deliberately looser — any field order,
//! optional CR, unknown fields ignored — because real firmware is sloppy.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CommandMessage, ErrorBody, ResponseOutcome, ResultMessage};

#[derive(Debug, Error)]
pub enum CodecError {
    /// The line was not a well-formed JSON object of the expected shape.
    #[error("malformed frame: {0}")]
    Framing(String),
    /// Well-formed JSON, but the content violates the protocol (e.g. a
    /// response with neither `result` nor `error`).
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

/// serde_json formatter that puts a space after `:` and `,`, matching the
/// device's own output byte for byte.
struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        writer.write_all(b": ")
    }
}

fn to_spaced_line<T: Serialize>(value: &T) -> Result<Vec<u8>, CodecError> {
    let mut buf = Vec::with_capacity(80);
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CodecError::Framing(e.to_string()))?;
    buf.extend_from_slice(b"\r\n");
    Ok(buf)
}

/// Strip the line terminator (CRLF or bare LF). Frames without one are
/// accepted too: a peer that closes the connection mid-line still gets parsed.
fn frame_body(frame: &[u8]) -> &[u8] {
    let frame = match frame.last() {
        Some(b'\n') => &frame[..frame.len() - 1],
        _ => frame,
    };
    match frame.last() {
        Some(b'\r') => &frame[..frame.len() - 1],
        _ => frame,
    }
}

/// Encode a command as one CRLF-terminated line.
pub fn encode_command(cmd: &CommandMessage) -> Result<Vec<u8>, CodecError> {
    if cmd.id == 0 {
        return Err(CodecError::ProtocolViolation(
            "command id must be positive".into(),
        ));
    }
    to_spaced_line(cmd)
}

/// Decode one command line. Field order does not matter.
pub fn decode_command(frame: &[u8]) -> Result<CommandMessage, CodecError> {
    let cmd: CommandMessage = serde_json::from_slice(frame_body(frame))
        .map_err(|e| CodecError::Framing(e.to_string()))?;
    if cmd.id == 0 {
        return Err(CodecError::ProtocolViolation(
            "command id must be positive".into(),
        ));
    }
    Ok(cmd)
}

#[derive(Serialize)]
struct WireResponseOut<'a> {
    id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a ErrorBody>,
}

#[derive(Deserialize)]
struct WireResponseIn {
    id: Option<u64>,
    result: Option<Vec<serde_json::Value>>,
    error: Option<ErrorBody>,
}

/// Encode a response as one CRLF-terminated line.
pub fn encode_response(res: &ResultMessage) -> Result<Vec<u8>, CodecError> {
    let wire = match &res.outcome {
        ResponseOutcome::Ok(values) => WireResponseOut {
            id: res.id,
            result: Some(values),
            error: None,
        },
        ResponseOutcome::Error(body) => WireResponseOut {
            id: res.id,
            result: None,
            error: Some(body),
        },
    };
    to_spaced_line(&wire)
}

/// Decode one response line. Exactly one of `result`/`error` must be present;
/// result values may be strings or integers (integers are stringified).
pub fn decode_response(frame: &[u8]) -> Result<ResultMessage, CodecError> {
    let wire: WireResponseIn = serde_json::from_slice(frame_body(frame))
        .map_err(|e| CodecError::Framing(e.to_string()))?;
    let id = wire
        .id
        .ok_or_else(|| CodecError::ProtocolViolation("response missing id".into()))?;
    match (wire.result, wire.error) {
        (Some(values), None) => {
            let mut out = Vec::with_capacity(values.len());
            for v in values {
                match v {
                    serde_json::Value::String(s) => out.push(s),
                    serde_json::Value::Number(n) => out.push(n.to_string()),
                    other => {
                        return Err(CodecError::ProtocolViolation(format!(
                            "unexpected result value: {other}"
                        )))
                    }
                }
            }
            Ok(ResultMessage::ok(id, out))
        }
        (None, Some(body)) => Ok(ResultMessage {
            id,
            outcome: ResponseOutcome::Error(body),
        }),
        (Some(_), Some(_)) => Err(CodecError::ProtocolViolation(
            "response carries both result and error".into(),
        )),
        (None, None) => Err(CodecError::ProtocolViolation(
            "response carries neither result nor error".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ParamValue;

    #[test]
    fn command_encoding_matches_device_layout() {
        let cmd = CommandMessage::new(
            1,
            "set_rgb",
            vec![
                ParamValue::Int(255),
                ParamValue::Str("sudden".into()),
                ParamValue::Int(0),
            ],
        );
        let bytes = encode_command(&cmd).unwrap();
        assert_eq!(
            bytes,
            b"{\"id\": 1, \"method\": \"set_rgb\", \"params\": [255, \"sudden\", 0]}\r\n"
        );
    }

    #[test]
    fn response_encoding_matches_device_layout() {
        let res = ResultMessage::ok(1, vec!["ok".into()]);
        let bytes = encode_response(&res).unwrap();
        assert_eq!(bytes, b"{\"id\": 1, \"result\": [\"ok\"]}\r\n");
    }

    #[test]
    fn decode_accepts_any_field_order_and_bare_lf() {
        let cmd =
            decode_command(b"{\"params\": [\"off\", \"smooth\", 500], \"id\": 7, \"method\": \"set_power\"}\n")
                .unwrap();
        assert_eq!(cmd.id, 7);
        assert_eq!(cmd.method, "set_power");
        assert_eq!(cmd.params.len(), 3);
    }

    #[test]
    fn decode_response_stringifies_numbers() {
        let res = decode_response(b"{\"result\": [\"on\", 16711680], \"id\": 3}\r\n").unwrap();
        assert_eq!(res.values().unwrap(), &["on".to_string(), "16711680".to_string()]);
    }

    #[test]
    fn decode_response_rejects_ambiguous_payload() {
        let err = decode_response(b"{\"id\": 1}\r\n").unwrap_err();
        assert!(matches!(err, CodecError::ProtocolViolation(_)));
        let err =
            decode_response(b"{\"id\": 1, \"result\": [\"ok\"], \"error\": {\"code\": -1, \"message\": \"x\"}}\r\n")
                .unwrap_err();
        assert!(matches!(err, CodecError::ProtocolViolation(_)));
    }

    #[test]
    fn decode_rejects_malformed_json() {
        assert!(matches!(
            decode_command(b"{\"id\": 1, \"method\":\r\n"),
            Err(CodecError::Framing(_))
        ));
    }

    #[test]
    fn zero_id_rejected_both_ways() {
        let cmd = CommandMessage::new(1, "toggle", vec![]);
        let mut zero = cmd.clone();
        zero.id = 0;
        assert!(encode_command(&zero).is_err());
        assert!(decode_command(b"{\"id\": 0, \"method\": \"toggle\", \"params\": []}").is_err());
    }

    #[test]
    fn strings_with_control_characters_stay_on_one_line() {
        let cmd = CommandMessage::new(
            2,
            "set_name",
            vec![ParamValue::Str("a\nb\r\"c".into())],
        );
        let bytes = encode_command(&cmd).unwrap();
        let body = &bytes[..bytes.len() - 2];
        assert!(!body.contains(&b'\n'), "newline must be escaped, not raw");
        let back = decode_command(&bytes).unwrap();
        assert_eq!(back, cmd);
    }
}
