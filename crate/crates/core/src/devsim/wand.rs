//! Scripted wand gestures and the matching virtual microphone.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DevsimError;
use crate::audio::{encode_wav, ms_to_samples, tone};
use crate::clock::Clock;
use crate::protocol::wand::write_wand_message;
use crate::protocol::{WandKind, WandMessage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WandEvent {
    pub at_ms: u64,
    pub kind: WandKind,
    /// What the user says while the sensor is held; only on `TOUCH_DOWN`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub say: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WandScript {
    pub events: Vec<WandEvent>,
}

/// One press-and-hold from the script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub down_ms: u64,
    pub up_ms: u64,
    pub text: String,
}

impl WandScript {
    pub fn from_json(text: &str) -> Result<Self, DevsimError> {
        let script: Self =
            serde_json::from_str(text).map_err(|e| DevsimError::Script(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, DevsimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DevsimError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Timestamps must not decrease and events must alternate, starting
    /// with `TOUCH_DOWN`.
    pub fn validate(&self) -> Result<(), DevsimError> {
        let mut expected = WandKind::TouchDown;
        let mut last = 0;
        for (i, e) in self.events.iter().enumerate() {
            if e.at_ms < last {
                return Err(DevsimError::Script(format!("event {i}: time goes backwards")));
            }
            if e.kind != expected {
                return Err(DevsimError::Script(format!(
                    "event {i}: expected {expected:?}, got {:?}",
                    e.kind
                )));
            }
            if e.kind == WandKind::TouchUp && e.say.is_some() {
                return Err(DevsimError::Script(format!("event {i}: `say` belongs on TOUCH_DOWN")));
            }
            last = e.at_ms;
            expected = match e.kind {
                WandKind::TouchDown => WandKind::TouchUp,
                WandKind::TouchUp => WandKind::TouchDown,
            };
        }
        Ok(())
    }

    /// Messages with sequence numbers counting from zero.
    pub fn timeline(&self) -> Vec<(u64, WandMessage)> {
        self.events
            .iter()
            .enumerate()
            .map(|(i, e)| (e.at_ms, WandMessage::new(e.kind, i as u16)))
            .collect()
    }

    /// Complete press-and-hold pairs; a trailing unreleased press is dropped.
    pub fn utterances(&self) -> Vec<Utterance> {
        self.events
            .chunks_exact(2)
            .map(|pair| Utterance {
                down_ms: pair[0].at_ms,
                up_ms: pair[1].at_ms,
                text: pair[0].say.clone().unwrap_or_default(),
            })
            .collect()
    }

    /// Text being spoken while a press that began at `down_ms` is held.
    pub fn utterance_at(&self, down_ms: u64) -> Option<&str> {
        self.events
            .iter()
            .find(|e| e.kind == WandKind::TouchDown && e.at_ms == down_ms)
            .map(|e| e.say.as_deref().unwrap_or(""))
    }

    pub fn end_ms(&self) -> u64 {
        self.events.last().map_or(0, |e| e.at_ms)
    }
}

/// Writes the encoded wand stream, sleeping on `clock` until each event's
/// scripted time.
pub fn run_wand<W: Write>(script: &WandScript, clock: &dyn Clock, out: &mut W) -> Result<usize, DevsimError> {
    script.validate()?;
    let mut written = 0;
    for (at_ms, msg) in script.timeline() {
        let now = clock.now_ms();
        if (at_ms as f64) > now {
            clock.sleep_ms((at_ms as f64 - now).ceil() as u64);
        }
        write_wand_message(out, &msg).map_err(|e: io::Error| DevsimError::Io(e.to_string()))?;
        written += 1;
    }
    Ok(written)
}

/// Virtual microphone: a quiet hum lasting the hold, with the spoken text
/// embedded for the mock transcriber.
pub fn record_utterance(text: &str, duration_ms: u64) -> Vec<u8> {
    let samples = tone(120.0, ms_to_samples(duration_ms), 600);
    encode_wav(&samples, Some(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::decode_wav;
    use crate::clock::VirtualClock;
    use crate::protocol::wand::WandReader;

    fn script(events: &[(u64, WandKind)]) -> WandScript {
        WandScript {
            events: events
                .iter()
                .map(|&(at_ms, kind)| WandEvent { at_ms, kind, say: None })
                .collect(),
        }
    }

    #[test]
    fn stream_timing_in_virtual_time() {
        let s = script(&[(100, WandKind::TouchDown), (2100, WandKind::TouchUp)]);
        let clock = VirtualClock::new();
        let mut bytes = Vec::new();
        assert_eq!(run_wand(&s, &clock, &mut bytes).unwrap(), 2);
        assert_eq!(clock.now_whole_ms(), 2100);
        let mut reader = WandReader::new(&bytes[..]);
        let a = reader.next_message().unwrap().unwrap();
        let b = reader.next_message().unwrap().unwrap();
        assert_eq!((a.kind, a.sequence), (WandKind::TouchDown, 0));
        assert_eq!((b.kind, b.sequence), (WandKind::TouchUp, 1));
        let t = s.timeline();
        assert_eq!(t[1].0 - t[0].0, 2000);
    }

    #[test]
    fn empty_script_no_bytes() {
        let mut bytes = Vec::new();
        run_wand(&WandScript::default(), &VirtualClock::new(), &mut bytes).unwrap();
        assert!(bytes.is_empty());
    }

    #[test]
    fn alternation_and_order_enforced() {
        assert!(script(&[(0, WandKind::TouchDown), (5, WandKind::TouchDown)]).validate().is_err());
        assert!(script(&[(0, WandKind::TouchUp)]).validate().is_err());
        assert!(script(&[(10, WandKind::TouchDown), (5, WandKind::TouchUp)]).validate().is_err());
        assert!(script(&[(10, WandKind::TouchDown), (10, WandKind::TouchUp)]).validate().is_ok());
    }

    #[test]
    fn json_shape_and_utterances() {
        let s = WandScript::from_json(
            r#"{"events":[{"at_ms":100,"kind":"TOUCH_DOWN","say":"hello"},{"at_ms":1600,"kind":"TOUCH_UP"}]}"#,
        )
        .unwrap();
        assert_eq!(s.utterances(), vec![Utterance { down_ms: 100, up_ms: 1600, text: "hello".into() }]);
        let wav = decode_wav(&record_utterance("hello", 1500)).unwrap();
        assert_eq!(wav.samples.len(), 24_000);
        assert_eq!(wav.text.as_deref(), Some("hello"));
    }
}
