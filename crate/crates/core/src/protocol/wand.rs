//! Wand event channel.
//!
//! Every message on the wand link is a fixed 5-byte frame:
//!
//! ```text
//! +-------+------+-------------+----------+
//! | 0xA5  | kind | sequence BE | checksum |
//! +-------+------+-------------+----------+
//!    0       1       2..=3          4
//! ```
//!
//! `checksum` is the XOR of bytes 0 through 3. Wand → engine messages use
//! kind codes `0x01`/`0x02`; engine → wand control messages use `0x81..=0x83`
//! so a byte stream can never be mistaken for the opposite direction.

use std::io::{self, Read, Write};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: u8 = 0xA5;
pub const FRAME_LEN: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated frame: {0} of 5 bytes")]
    Truncated(usize),
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("checksum mismatch: expected {expected:#04x}, found {found:#04x}")]
    BadChecksum { expected: u8, found: u8 },
    #[error("unknown kind code {0:#04x}")]
    UnknownKind(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WandKind {
    TouchDown,
    TouchUp,
}

impl WandKind {
    pub const ALL: [WandKind; 2] = [WandKind::TouchDown, WandKind::TouchUp];

    pub fn code(self) -> u8 {
        match self {
            WandKind::TouchDown => 0x01,
            WandKind::TouchUp => 0x02,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(WandKind::TouchDown),
            0x02 => Some(WandKind::TouchUp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WandMessage {
    pub kind: WandKind,
    pub sequence: u16,
}

impl WandMessage {
    pub fn new(kind: WandKind, sequence: u16) -> Self {
        Self { kind, sequence }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlKind {
    /// Recording began; the wand vibrates on receipt.
    RecordStarted,
    /// Touch arrived with no object in view.
    RecordRejected,
    VibrateOff,
}

impl ControlKind {
    pub const ALL: [ControlKind; 3] = [
        ControlKind::RecordStarted,
        ControlKind::RecordRejected,
        ControlKind::VibrateOff,
    ];

    pub fn code(self) -> u8 {
        match self {
            ControlKind::RecordStarted => 0x81,
            ControlKind::RecordRejected => 0x82,
            ControlKind::VibrateOff => 0x83,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x81 => Some(ControlKind::RecordStarted),
            0x82 => Some(ControlKind::RecordRejected),
            0x83 => Some(ControlKind::VibrateOff),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub kind: ControlKind,
    /// Echo of the triggering wand message's sequence number.
    pub sequence: u16,
}

fn frame(code: u8, sequence: u16) -> [u8; FRAME_LEN] {
    let [hi, lo] = sequence.to_be_bytes();
    [MAGIC, code, hi, lo, MAGIC ^ code ^ hi ^ lo]
}

/// Validates framing and returns `(kind code, sequence)`.
fn unframe(bytes: &[u8]) -> Result<(u8, u16), CodecError> {
    if bytes.len() < FRAME_LEN {
        return Err(CodecError::Truncated(bytes.len()));
    }
    if bytes[0] != MAGIC {
        return Err(CodecError::BadMagic(bytes[0]));
    }
    let expected = bytes[0] ^ bytes[1] ^ bytes[2] ^ bytes[3];
    if bytes[4] != expected {
        return Err(CodecError::BadChecksum {
            expected,
            found: bytes[4],
        });
    }
    Ok((bytes[1], u16::from_be_bytes([bytes[2], bytes[3]])))
}

pub fn encode_wand_message(msg: &WandMessage) -> [u8; FRAME_LEN] {
    frame(msg.kind.code(), msg.sequence)
}

/// Decodes the first five bytes of `bytes`; trailing bytes are ignored.
pub fn decode_wand_message(bytes: &[u8]) -> Result<WandMessage, CodecError> {
    let (code, sequence) = unframe(bytes)?;
    let kind = WandKind::from_code(code).ok_or(CodecError::UnknownKind(code))?;
    Ok(WandMessage { kind, sequence })
}

pub fn encode_control_message(msg: &ControlMessage) -> [u8; FRAME_LEN] {
    frame(msg.kind.code(), msg.sequence)
}

pub fn decode_control_message(bytes: &[u8]) -> Result<ControlMessage, CodecError> {
    let (code, sequence) = unframe(bytes)?;
    let kind = ControlKind::from_code(code).ok_or(CodecError::UnknownKind(code))?;
    Ok(ControlMessage { kind, sequence })
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("wand link closed")]
    Closed,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads whole wand frames from any byte stream (TCP socket, pipe, file).
pub struct WandReader<R> {
    inner: R,
}

impl<R: Read> WandReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    /// Returns `Ok(None)` on a clean end of stream at a frame boundary.
    pub fn next_message(&mut self) -> Result<Option<WandMessage>, LinkError> {
        match read_frame(&mut self.inner)? {
            Some(buf) => Ok(Some(decode_wand_message(&buf)?)),
            None => Ok(None),
        }
    }
}

pub struct ControlReader<R> {
    inner: R,
}

impl<R: Read> ControlReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn next_message(&mut self) -> Result<Option<ControlMessage>, LinkError> {
        match read_frame(&mut self.inner)? {
            Some(buf) => Ok(Some(decode_control_message(&buf)?)),
            None => Ok(None),
        }
    }
}

fn read_frame<R: Read>(reader: &mut R) -> Result<Option<[u8; FRAME_LEN]>, LinkError> {
    let mut buf = [0u8; FRAME_LEN];
    let mut filled = 0;
    while filled < FRAME_LEN {
        match reader.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(CodecError::Truncated(filled).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(buf))
}

pub fn write_wand_message<W: Write>(w: &mut W, msg: &WandMessage) -> io::Result<()> {
    w.write_all(&encode_wand_message(msg))?;
    w.flush()
}

pub fn write_control_message<W: Write>(w: &mut W, msg: &ControlMessage) -> io::Result<()> {
    w.write_all(&encode_control_message(msg))?;
    w.flush()
}

/// Engine side of an in-process wand link.
pub struct EngineEnd {
    pub from_wand: mpsc::Receiver<[u8; FRAME_LEN]>,
    pub to_wand: mpsc::Sender<[u8; FRAME_LEN]>,
}

/// Wand side of an in-process wand link.
pub struct WandEnd {
    pub to_engine: mpsc::Sender<[u8; FRAME_LEN]>,
    pub from_engine: mpsc::Receiver<[u8; FRAME_LEN]>,
}

impl EngineEnd {
    pub fn recv(&self) -> Result<WandMessage, LinkError> {
        let bytes = self.from_wand.recv().map_err(|_| LinkError::Closed)?;
        Ok(decode_wand_message(&bytes)?)
    }

    pub fn try_recv(&self) -> Result<Option<WandMessage>, LinkError> {
        match self.from_wand.try_recv() {
            Ok(bytes) => Ok(Some(decode_wand_message(&bytes)?)),
            Err(mpsc::TryRecvError::Empty) => Ok(None),
            Err(mpsc::TryRecvError::Disconnected) => Err(LinkError::Closed),
        }
    }

    pub fn send(&self, msg: &ControlMessage) -> Result<(), LinkError> {
        self.to_wand
            .send(encode_control_message(msg))
            .map_err(|_| LinkError::Closed)
    }
}

impl WandEnd {
    pub fn send(&self, msg: &WandMessage) -> Result<(), LinkError> {
        self.to_engine
            .send(encode_wand_message(msg))
            .map_err(|_| LinkError::Closed)
    }

    pub fn try_recv(&self) -> Result<Option<ControlMessage>, LinkError> {
        match self.from_engine.try_recv() {
            Ok(bytes) => Ok(Some(decode_control_message(&bytes)?)),
            Err(mpsc::TryRecvError::Empty) => Ok(None),
            Err(mpsc::TryRecvError::Disconnected) => Err(LinkError::Closed),
        }
    }
}

/// A bidirectional in-process pipe standing in for the Bluetooth link.
pub fn wand_pipe() -> (WandEnd, EngineEnd) {
    let (to_engine, from_wand) = mpsc::channel();
    let (to_wand, from_engine) = mpsc::channel();
    (
        WandEnd {
            to_engine,
            from_engine,
        },
        EngineEnd { from_wand, to_wand },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_reference_frames() {
        let down1 = WandMessage::new(WandKind::TouchDown, 1);
        assert_eq!(encode_wand_message(&down1), [0xA5, 0x01, 0x00, 0x01, 0xA5]);
        let up0 = WandMessage::new(WandKind::TouchUp, 0);
        assert_eq!(encode_wand_message(&up0), [0xA5, 0x02, 0x00, 0x00, 0xA7]);
        let down_max = WandMessage::new(WandKind::TouchDown, 65535);
        // 0xA5 ^ 0x01 ^ 0xFF ^ 0xFF = 0xA4
        assert_eq!(
            encode_wand_message(&down_max),
            [0xA5, 0x01, 0xFF, 0xFF, 0xA4]
        );
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode_wand_message(&[0xA5, 0x01, 0x00, 0x01, 0xA5]),
            Ok(WandMessage::new(WandKind::TouchDown, 1))
        );
        assert_eq!(
            decode_wand_message(&[0xA5, 0x01, 0x00, 0x01, 0x00]),
            Err(CodecError::BadChecksum {
                expected: 0xA5,
                found: 0x00
            })
        );
        assert_eq!(decode_wand_message(&[0xA5]), Err(CodecError::Truncated(1)));
        assert_eq!(
            decode_wand_message(&[0x5A, 0x01, 0x00, 0x01, 0x5A]),
            Err(CodecError::BadMagic(0x5A))
        );
        let bogus = frame(0x07, 3);
        assert_eq!(
            decode_wand_message(&bogus),
            Err(CodecError::UnknownKind(0x07))
        );
    }

    #[test]
    fn control_codes_do_not_decode_as_wand() {
        let ctl = encode_control_message(&ControlMessage {
            kind: ControlKind::RecordStarted,
            sequence: 9,
        });
        assert_eq!(decode_wand_message(&ctl), Err(CodecError::UnknownKind(0x81)));
        assert_eq!(
            decode_control_message(&ctl).unwrap().kind,
            ControlKind::RecordStarted
        );
    }

    #[test]
    fn reader_handles_stream_boundaries() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&encode_wand_message(&WandMessage::new(WandKind::TouchDown, 0)));
        bytes.extend_from_slice(&encode_wand_message(&WandMessage::new(WandKind::TouchUp, 1)));
        let mut reader = WandReader::new(&bytes[..]);
        assert_eq!(reader.next_message().unwrap().unwrap().sequence, 0);
        assert_eq!(reader.next_message().unwrap().unwrap().kind, WandKind::TouchUp);
        assert!(reader.next_message().unwrap().is_none());

        let mut short = WandReader::new(&bytes[..7]);
        short.next_message().unwrap();
        assert!(matches!(
            short.next_message(),
            Err(LinkError::Codec(CodecError::Truncated(2)))
        ));
    }

    #[test]
    fn pipe_carries_both_directions() {
        let (wand, engine) = wand_pipe();
        wand.send(&WandMessage::new(WandKind::TouchDown, 4)).unwrap();
        let got = engine.recv().unwrap();
        engine
            .send(&ControlMessage {
                kind: ControlKind::RecordStarted,
                sequence: got.sequence,
            })
            .unwrap();
        let ctl = wand.try_recv().unwrap().unwrap();
        assert_eq!(ctl.sequence, 4);
        assert!(wand.try_recv().unwrap().is_none());
    }

    fn any_kind() -> impl Strategy<Value = WandKind> {
        prop_oneof![Just(WandKind::TouchDown), Just(WandKind::TouchUp)]
    }

    proptest! {
        #[test]
        fn round_trip(kind in any_kind(), sequence in any::<u16>()) {
            let msg = WandMessage::new(kind, sequence);
            prop_assert_eq!(decode_wand_message(&encode_wand_message(&msg)), Ok(msg));
        }

        #[test]
        fn single_bit_flip_never_passes_silently(kind in any_kind(), sequence in any::<u16>(), bit in 0usize..40) {
            let msg = WandMessage::new(kind, sequence);
            let original = encode_wand_message(&msg);
            let mut corrupted = original;
            corrupted[bit / 8] ^= 1 << (bit % 8);
            if let Ok(decoded) = decode_wand_message(&corrupted) {
                prop_assert_ne!(encode_wand_message(&decoded), original);
            }
        }
    }
}
