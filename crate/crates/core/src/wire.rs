//! Framing between the edge client and the cloud server.
//!
//! A frame is `"SHRP"`, version `0x01`, a kind byte, the payload length as a
//! little-endian `u32`, then the payload.

use std::io::{self, Read, Write};

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::network::{decode_tensor, encode_tensor};
use crate::tensor_core::Tensor;

pub const PROTOCOL_MAGIC: &[u8; 4] = b"SHRP";
pub const PROTOCOL_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
pub const MAX_FRAME_BYTES: usize = 64 * 1024 * 1024;

pub const KIND_ACTIVATION: u8 = 0x01;
pub const KIND_RESPONSE: u8 = 0x02;
pub const KIND_ERROR: u8 = 0x7F;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// The noisy activation, sent edge to cloud.
    Activation(Tensor),
    Response {
        label: u32,
        logits: Vec<f32>,
    },
    Error(String),
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Activation(_) => KIND_ACTIVATION,
            Message::Response { .. } => KIND_RESPONSE,
            Message::Error(_) => KIND_ERROR,
        }
    }
}

/// Encoded size of an activation frame for a tensor of `shape`.
pub fn activation_frame_len(shape: &[usize]) -> usize {
    HEADER_LEN + 1 + 4 * shape.len() + 4 * shape.iter().product::<usize>()
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    match msg {
        Message::Activation(t) => encode_tensor(t, &mut payload)?,
        Message::Response { label, logits } => {
            payload.extend_from_slice(&label.to_le_bytes());
            for v in logits {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        Message::Error(reason) => payload.extend_from_slice(reason.as_bytes()),
    }
    if payload.len() > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!(
            "payload of {} bytes exceeds the {MAX_FRAME_BYTES}-byte cap",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(PROTOCOL_MAGIC);
    out.push(PROTOCOL_VERSION);
    out.push(msg.kind());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parsed frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub magic: [u8; 4],
    pub version: u8,
    pub kind: u8,
    pub len: u32,
}

impl Header {
    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Header {
        Header {
            magic: [bytes[0], bytes[1], bytes[2], bytes[3]],
            version: bytes[4],
            kind: bytes[5],
            len: u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]),
        }
    }

    /// Checks magic, version and the length cap.
    pub fn validate(&self, max_payload: usize) -> Result<()> {
        if &self.magic != PROTOCOL_MAGIC {
            return Err(Error::Protocol(format!("bad magic {:02x?}", self.magic)));
        }
        if self.version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "unsupported version {:#04x}",
                self.version
            )));
        }
        if self.len as usize > max_payload {
            return Err(Error::Protocol(format!(
                "declared payload of {} bytes exceeds the {max_payload}-byte cap",
                self.len
            )));
        }
        Ok(())
    }
}

/// Decodes a payload of the given kind.
pub fn decode_payload(kind: u8, payload: &[u8]) -> Result<Message> {
    let mut r = Reader::new(payload, "protocol payload");
    let msg = match kind {
        KIND_ACTIVATION => Message::Activation(decode_tensor(&mut r)?),
        KIND_RESPONSE => {
            let label = r.u32()?;
            if !r.remaining().is_multiple_of(4) {
                return Err(r.error("logit bytes not a multiple of 4"));
            }
            let logits = (0..r.remaining() / 4)
                .map(|_| r.f32())
                .collect::<Result<_>>()?;
            Message::Response { label, logits }
        }
        KIND_ERROR => Message::Error(
            String::from_utf8(r.take(r.remaining())?.to_vec())
                .map_err(|_| Error::Protocol("error reason is not UTF-8".into()))?,
        ),
        other => {
            return Err(Error::Protocol(format!(
                "unknown message kind {other:#04x}"
            )))
        }
    };
    r.finish()?;
    Ok(msg)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    let head: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Protocol(format!("truncated header ({} bytes)", bytes.len())))?;
    let header = Header::parse(head);
    header.validate(MAX_FRAME_BYTES)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.len as usize {
        return Err(Error::Protocol(format!(
            "header declares {} payload bytes, frame has {}",
            header.len,
            payload.len()
        )));
    }
    decode_payload(header.kind, payload)
}

/// Outcome of reading one frame from a stream.
#[derive(Debug)]
pub enum Frame {
    Message(Message),
    /// A complete frame that could not be used. Its payload has been
    /// consumed, so the stream is still aligned on a frame boundary.
    Rejected(Error),
    /// The peer closed the stream cleanly between frames.
    Closed,
}

/// Reads one frame. Payloads beyond `max_payload` are drained without being
/// buffered.
pub fn read_frame(reader: &mut impl Read, max_payload: usize) -> io::Result<Frame> {
    let mut head = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut head[filled..]) {
            Ok(0) if filled == 0 => return Ok(Frame::Closed),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let header = Header::parse(&head);
    if let Err(e) = header.validate(max_payload) {
        let drained = io::copy(&mut reader.take(header.len as u64), &mut io::sink())?;
        if drained < header.len as u64 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        return Ok(Frame::Rejected(e));
    }
    let mut payload = vec![0u8; header.len as usize];
    reader.read_exact(&mut payload)?;
    Ok(match decode_payload(header.kind, &payload) {
        Ok(m) => Frame::Message(m),
        Err(e) => Frame::Rejected(e),
    })
}

pub fn write_message(writer: &mut impl Write, msg: &Message) -> Result<usize> {
    let bytes = encode_message(msg)?;
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(bytes.len())
}
