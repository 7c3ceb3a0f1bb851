//! Session state machine: wand transitions and active-object tracking.

use serde::{Deserialize, Serialize};

use crate::protocol::{ControlKind, WandKind, WandMessage};
use crate::vision::Detection;

pub const DEFAULT_GRACE_MS: u64 = 2000;
pub const MAX_RECORDING_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "class_id", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    Idle,
    Tracking(u32),
    Recording(u32),
    Transcribing,
    Generating,
    Speaking,
}

impl SessionState {
    pub const fn name(self) -> &'static str {
        match self {
            SessionState::Idle => "IDLE",
            SessionState::Tracking(_) => "TRACKING",
            SessionState::Recording(_) => "RECORDING",
            SessionState::Transcribing => "TRANSCRIBING",
            SessionState::Generating => "GENERATING",
            SessionState::Speaking => "SPEAKING",
        }
    }

    /// Whether a bonding cycle is under way.
    pub fn is_busy(self) -> bool {
        matches!(
            self,
            SessionState::Recording(_)
                | SessionState::Transcribing
                | SessionState::Generating
                | SessionState::Speaking
        )
    }
}

/// What the session must do after a wand event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WandEffect {
    None,
    StartRecording(u32),
    StopRecording(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WandOutcome {
    pub state: SessionState,
    pub controls: Vec<ControlKind>,
    pub effect: WandEffect,
}

/// The wand transition table. Pairs not listed are identity.
///
/// | state        | event      | next          | control         |
/// |--------------|------------|---------------|-----------------|
/// | TRACKING(c)  | TOUCH_DOWN | RECORDING(c)  | RECORD_STARTED  |
/// | IDLE         | TOUCH_DOWN | IDLE          | RECORD_REJECTED |
/// | RECORDING(c) | TOUCH_UP   | TRANSCRIBING  | VIBRATE_OFF     |
pub fn handle_wand(state: SessionState, msg: WandMessage) -> WandOutcome {
    let identity = WandOutcome {
        state,
        controls: vec![],
        effect: WandEffect::None,
    };
    match (state, msg.kind) {
        (SessionState::Tracking(c), WandKind::TouchDown) => WandOutcome {
            state: SessionState::Recording(c),
            controls: vec![ControlKind::RecordStarted],
            effect: WandEffect::StartRecording(c),
        },
        (SessionState::Idle, WandKind::TouchDown) => WandOutcome {
            controls: vec![ControlKind::RecordRejected],
            ..identity
        },
        (SessionState::Recording(c), WandKind::TouchUp) => WandOutcome {
            state: SessionState::Transcribing,
            controls: vec![ControlKind::VibrateOff],
            effect: WandEffect::StopRecording(c),
        },
        _ => identity,
    }
}

/// Active-object choice: highest confidence, ties to the box nearest the
/// frame center, then lowest class id. `detections` need not be sorted.
pub fn choose_active(detections: &[Detection], registered: impl Fn(u32) -> bool) -> Option<&Detection> {
    detections.iter().filter(|d| registered(d.class_id)).min_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.bbox.center_distance_sq().total_cmp(&b.bbox.center_distance_sq()))
            .then(a.class_id.cmp(&b.class_id))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub state: SessionState,
    /// Set when the active object changed to this class.
    pub switched_to: Option<u32>,
    pub lost: bool,
}

/// Tracks when each registered object was last seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub grace_ms: u64,
    last_seen_ms: Option<f64>,
    last_class: Option<u32>,
}

impl Tracker {
    pub fn new(grace_ms: u64) -> Self {
        Self {
            grace_ms,
            last_seen_ms: None,
            last_class: None,
        }
    }

    /// Whether `class_id` was seen within the grace period before `now_ms`.
    pub fn still_visible(&self, class_id: u32, now_ms: f64) -> bool {
        self.last_class == Some(class_id)
            && self
                .last_seen_ms
                .is_some_and(|t| now_ms - t < self.grace_ms as f64)
    }

    /// Applies one frame's detections. While a cycle is under way the
    /// state is left alone and only the sighting is recorded.
    pub fn handle_frame(
        &mut self,
        state: SessionState,
        detections: &[Detection],
        now_ms: f64,
        registered: impl Fn(u32) -> bool,
    ) -> FrameOutcome {
        let top = choose_active(detections, registered).map(|d| d.class_id);
        if let Some(c) = top {
            self.last_class = Some(c);
            self.last_seen_ms = Some(now_ms);
        }
        if state.is_busy() {
            return FrameOutcome {
                state,
                switched_to: None,
                lost: false,
            };
        }
        match (state, top) {
            (SessionState::Tracking(active), Some(c)) if active == c => FrameOutcome {
                state,
                switched_to: None,
                lost: false,
            },
            (_, Some(c)) => FrameOutcome {
                state: SessionState::Tracking(c),
                switched_to: Some(c),
                lost: false,
            },
            (SessionState::Tracking(active), None) if !self.still_visible(active, now_ms) => {
                FrameOutcome {
                    state: SessionState::Idle,
                    switched_to: None,
                    lost: true,
                }
            }
            _ => FrameOutcome {
                state,
                switched_to: None,
                lost: false,
            },
        }
    }

    /// State once a cycle finishes speaking.
    pub fn after_speaking(&self, class_id: u32, now_ms: f64) -> SessionState {
        if self.still_visible(class_id, now_ms) {
            SessionState::Tracking(class_id)
        } else {
            match self.last_class {
                Some(c) if self.still_visible(c, now_ms) => SessionState::Tracking(c),
                _ => SessionState::Idle,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::BBox;

    const STATES: [SessionState; 8] = [
        SessionState::Idle,
        SessionState::Tracking(0),
        SessionState::Tracking(3),
        SessionState::Recording(0),
        SessionState::Recording(3),
        SessionState::Transcribing,
        SessionState::Generating,
        SessionState::Speaking,
    ];

    fn msg(kind: WandKind) -> WandMessage {
        WandMessage::new(kind, 0)
    }

    #[test]
    fn exhaustive_transition_table() {
        for state in STATES {
            for kind in WandKind::ALL {
                let out = handle_wand(state, msg(kind));
                let expected = match (state, kind) {
                    (SessionState::Tracking(c), WandKind::TouchDown) => (
                        SessionState::Recording(c),
                        vec![ControlKind::RecordStarted],
                        WandEffect::StartRecording(c),
                    ),
                    (SessionState::Idle, WandKind::TouchDown) => {
                        (state, vec![ControlKind::RecordRejected], WandEffect::None)
                    }
                    (SessionState::Recording(c), WandKind::TouchUp) => (
                        SessionState::Transcribing,
                        vec![ControlKind::VibrateOff],
                        WandEffect::StopRecording(c),
                    ),
                    _ => (state, vec![], WandEffect::None),
                };
                assert_eq!((out.state, out.controls, out.effect), expected, "{state:?} {kind:?}");
            }
        }
    }

    #[test]
    fn recording_only_from_tracking() {
        for state in STATES {
            for kind in WandKind::ALL {
                let out = handle_wand(state, msg(kind));
                if matches!(out.state, SessionState::Recording(_)) && !matches!(state, SessionState::Recording(_)) {
                    assert!(matches!(state, SessionState::Tracking(_)));
                }
            }
        }
    }

    fn det(class_id: u32, confidence: f64, cx: f64) -> Detection {
        Detection {
            class_id,
            bbox: BBox::new(cx, 0.5, 0.1, 0.1).unwrap(),
            confidence,
            latency_ms: 0.0,
        }
    }

    #[test]
    fn active_choice_ties_to_center() {
        let d = [det(0, 0.9, 0.2), det(1, 0.9, 0.55), det(2, 0.8, 0.5)];
        assert_eq!(choose_active(&d, |_| true).unwrap().class_id, 1);
        assert_eq!(choose_active(&d, |c| c != 1).unwrap().class_id, 0);
        assert!(choose_active(&d, |_| false).is_none());
    }

    #[test]
    fn tracking_switch_and_grace() {
        let mut t = Tracker::new(DEFAULT_GRACE_MS);
        let out = t.handle_frame(SessionState::Idle, &[det(0, 0.9, 0.5)], 0.0, |_| true);
        assert_eq!((out.state, out.switched_to), (SessionState::Tracking(0), Some(0)));
        let out = t.handle_frame(out.state, &[det(1, 0.95, 0.5)], 50.0, |_| true);
        assert_eq!((out.state, out.switched_to), (SessionState::Tracking(1), Some(1)));
        let out = t.handle_frame(out.state, &[], 1999.0, |_| true);
        assert_eq!(out.state, SessionState::Tracking(1));
        let out = t.handle_frame(out.state, &[], 2050.0, |_| true);
        assert_eq!((out.state, out.lost), (SessionState::Idle, true));
    }

    #[test]
    fn busy_state_is_sticky() {
        let mut t = Tracker::new(DEFAULT_GRACE_MS);
        t.handle_frame(SessionState::Idle, &[det(0, 0.9, 0.5)], 0.0, |_| true);
        let out = t.handle_frame(SessionState::Recording(0), &[det(1, 0.99, 0.5)], 10.0, |_| true);
        assert_eq!(out.state, SessionState::Recording(0));
        assert_eq!(t.after_speaking(0, 1000.0), SessionState::Tracking(1));
        t.handle_frame(SessionState::Speaking, &[det(0, 0.9, 0.5)], 1500.0, |_| true);
        assert_eq!(t.after_speaking(0, 1600.0), SessionState::Tracking(0));
        assert_eq!(t.after_speaking(0, 5000.0), SessionState::Idle);
    }
}
