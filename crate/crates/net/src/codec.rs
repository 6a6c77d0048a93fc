//! Frame = 4-byte big-endian body length + UTF-8 JSON body.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::message::Message;

pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("truncated frame at byte {offset}")]
    Truncated { offset: usize },

    #[error("frame body of {len} bytes exceeds the {MAX_FRAME}-byte limit")]
    Oversized { len: usize },

    #[error("{extra} trailing bytes after frame end at byte {offset}")]
    Trailing { offset: usize, extra: usize },

    #[error("invalid UTF-8 at byte {offset}")]
    Utf8 { offset: usize },

    #[error("unknown message type at byte {offset}: {detail}")]
    UnknownType { offset: usize, detail: String },

    #[error("malformed body at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },

    #[error("invalid field in {kind}: {detail}")]
    Invalid { kind: &'static str, detail: String },
}

impl DecodeError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            DecodeError::Truncated { offset }
            | DecodeError::Trailing { offset, .. }
            | DecodeError::Utf8 { offset }
            | DecodeError::UnknownType { offset, .. }
            | DecodeError::Malformed { offset, .. } => Some(*offset),
            DecodeError::Oversized { .. } => Some(0),
            DecodeError::Invalid { .. } => None,
        }
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("messages always serialize");
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    frame
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::Truncated {
            offset: bytes.len(),
        });
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME {
        return Err(DecodeError::Oversized { len });
    }
    let end = 4 + len;
    if bytes.len() < end {
        return Err(DecodeError::Truncated {
            offset: bytes.len(),
        });
    }
    if bytes.len() > end {
        return Err(DecodeError::Trailing {
            offset: end,
            extra: bytes.len() - end,
        });
    }
    decode_body(&bytes[4..], 4)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

fn decode_body(body: &[u8], base: usize) -> Result<Message, DecodeError> {
    let text = std::str::from_utf8(body).map_err(|e| DecodeError::Utf8 {
        offset: base + e.valid_up_to(),
    })?;
    let msg: Message = serde_json::from_str(text).map_err(|e| {
        let offset = base + byte_offset(text, e.line(), e.column());
        let detail = e.to_string();
        if detail.contains("unknown variant") {
            DecodeError::UnknownType { offset, detail }
        } else {
            DecodeError::Malformed { offset, detail }
        }
    })?;
    msg.body.validate().map_err(|detail| DecodeError::Invalid {
        kind: msg.body.kind(),
        detail,
    })?;
    Ok(msg)
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> io::Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> Result<Message, FrameError> {
    let mut head = [0u8; 4];
    r.read_exact(&mut head)?;
    let len = u32::from_be_bytes(head) as usize;
    if len > MAX_FRAME {
        return Err(DecodeError::Oversized { len }.into());
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(decode_body(&body, 4)?)
}
