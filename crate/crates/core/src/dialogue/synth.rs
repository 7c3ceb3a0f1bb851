//! Parallel speech synthesis with in-order playback.
//!
//! Up to `parallelism` segments are synthesized concurrently. Finished clips
//! wait in a reassembly buffer until every earlier segment has been played,
//! so the listener always hears segment 0, 1, 2, ... regardless of which
//! synthesis finishes first. A failed segment leaves a gap: playback stops
//! there, but the remaining segments are still synthesized and returned.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use super::DialogueError;
use crate::audio::samples_to_ms;
use crate::backends::{BackendError, Synthesizer};
use crate::clock::Clock;
use crate::persona::{Language, VoiceId};

pub const DEFAULT_PARALLELISM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub segment_index: usize,
    /// PCM16 mono at 16 kHz.
    pub samples: Vec<i16>,
    /// Time spent synthesizing this clip.
    pub synth_ms: f64,
}

impl AudioClip {
    pub fn duration_ms(&self) -> f64 {
        samples_to_ms(self.samples.len())
    }
}

/// Where finished clips go, strictly in segment order.
pub trait PlaybackSink {
    fn play(&mut self, clip: &AudioClip) -> std::io::Result<()>;
}

/// Collects played clips in memory.
#[derive(Debug, Default)]
pub struct RecordingSink {
    pub played: Vec<AudioClip>,
}

impl PlaybackSink for RecordingSink {
    fn play(&mut self, clip: &AudioClip) -> std::io::Result<()> {
        self.played.push(clip.clone());
        Ok(())
    }
}

impl<F: FnMut(&AudioClip) -> std::io::Result<()>> PlaybackSink for F {
    fn play(&mut self, clip: &AudioClip) -> std::io::Result<()> {
        self(clip)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFailure {
    pub segment_index: usize,
    pub error: BackendError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthesisRun {
    /// Every successfully synthesized clip, in segment order.
    pub clips: Vec<AudioClip>,
    /// Segment indices handed to the sink, in playback order.
    pub played: Vec<usize>,
    pub failures: Vec<SynthFailure>,
    /// Set when the sink itself failed; playback stopped at that clip.
    pub sink_error: Option<String>,
}

impl SynthesisRun {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.sink_error.is_none()
    }

    pub fn first_failure(&self) -> Option<&SynthFailure> {
        self.failures.first()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn synthesize_ordered(
    segments: &[String],
    voice: VoiceId,
    language: Language,
    backend: &dyn Synthesizer,
    parallelism: usize,
    clock: &dyn Clock,
    sink: &mut dyn PlaybackSink,
) -> Result<SynthesisRun, DialogueError> {
    if parallelism == 0 {
        return Err(DialogueError::InvalidParallelism);
    }
    let mut run = SynthesisRun::default();
    if segments.is_empty() {
        return Ok(run);
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<AudioClip, BackendError>)>();

    thread::scope(|scope| {
        for _ in 0..parallelism.min(segments.len()) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::AcqRel);
                let Some(text) = segments.get(index) else {
                    break;
                };
                let started = clock.now_ms();
                let result = backend.synthesize(text, voice, language).and_then(|out| {
                    if out.samples.is_empty() {
                        return Err(BackendError::Schema("synthesizer returned no audio".into()));
                    }
                    let measured = clock.now_ms() - started;
                    Ok(AudioClip {
                        segment_index: index,
                        samples: out.samples,
                        synth_ms: out.compute_ms.unwrap_or(measured),
                    })
                });
                if tx.send((index, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, AudioClip> = BTreeMap::new();
        let mut next_to_play = 0usize;
        let mut gap = false;
        for (index, result) in rx.iter() {
            match result {
                Ok(clip) => {
                    pending.insert(index, clip);
                }
                Err(error) => {
                    run.failures.push(SynthFailure {
                        segment_index: index,
                        error,
                    });
                    if index == next_to_play {
                        gap = true;
                    }
                }
            }
            while !gap {
                if run.failures.iter().any(|f| f.segment_index == next_to_play) {
                    gap = true;
                    break;
                }
                let Some(clip) = pending.get(&next_to_play) else {
                    break;
                };
                if let Err(e) = sink.play(clip) {
                    run.sink_error = Some(e.to_string());
                    gap = true;
                    break;
                }
                run.played.push(next_to_play);
                next_to_play += 1;
            }
            for clip in std::mem::take(&mut pending).into_values() {
                if clip.segment_index < next_to_play {
                    run.clips.push(clip);
                } else {
                    pending.insert(clip.segment_index, clip);
                }
            }
        }
        run.clips.extend(pending.into_values());
    });

    run.clips.sort_by_key(|c| c.segment_index);
    run.failures.sort_by_key(|f| f.segment_index);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Synthesis;
    use crate::clock::SystemClock;
    use std::time::Duration;

    /// Delays each segment by a per-index amount; fails on listed texts.
    struct Delayed {
        delays_ms: Vec<u64>,
        fail: Vec<String>,
    }

    impl Synthesizer for Delayed {
        fn synthesize(&self, text: &str, _: VoiceId, _: Language) -> Result<Synthesis, BackendError> {
            let index: usize = text.trim_start_matches('s').parse().unwrap();
            thread::sleep(Duration::from_millis(self.delays_ms[index]));
            if self.fail.iter().any(|f| f == text) {
                return Err(BackendError::Failed(format!("cannot say {text}")));
            }
            Ok(Synthesis {
                samples: vec![index as i16 + 1; 160],
                compute_ms: Some(7.0),
            })
        }
    }

    fn segs(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn reversed_completion_still_plays_in_order() {
        let backend = Delayed {
            delays_ms: vec![60, 30, 0],
            fail: vec![],
        };
        let mut sink = RecordingSink::default();
        let run = synthesize_ordered(
            &segs(3),
            VoiceId::Neutral,
            Language::En,
            &backend,
            3,
            &SystemClock::new(),
            &mut sink,
        )
        .unwrap();
        assert_eq!(run.played, vec![0, 1, 2]);
        let order: Vec<usize> = sink.played.iter().map(|c| c.segment_index).collect();
        let mut oracle = order.clone();
        oracle.sort_unstable();
        assert_eq!(order, oracle);
        assert!(run.is_complete());
        assert!(run.clips.iter().all(|c| c.synth_ms == 7.0));
    }

    #[test]
    fn single_segment() {
        let backend = Delayed { delays_ms: vec![0], fail: vec![] };
        let mut sink = RecordingSink::default();
        let run = synthesize_ordered(&segs(1), VoiceId::Neutral, Language::En, &backend, 2, &SystemClock::new(), &mut sink)
            .unwrap();
        assert_eq!(run.clips.len(), 1);
        assert_eq!(sink.played.len(), 1);
    }

    #[test]
    fn failure_leaves_gap() {
        let backend = Delayed {
            delays_ms: vec![0, 10, 0],
            fail: vec!["s1".into()],
        };
        let mut sink = RecordingSink::default();
        let run = synthesize_ordered(&segs(3), VoiceId::Neutral, Language::En, &backend, 2, &SystemClock::new(), &mut sink)
            .unwrap();
        assert_eq!(run.played, vec![0]);
        assert_eq!(run.first_failure().unwrap().segment_index, 1);
        let synthesized: Vec<usize> = run.clips.iter().map(|c| c.segment_index).collect();
        assert_eq!(synthesized, vec![0, 2]);
    }

    #[test]
    fn zero_parallelism_rejected() {
        let backend = Delayed { delays_ms: vec![0], fail: vec![] };
        let mut sink = RecordingSink::default();
        assert_eq!(
            synthesize_ordered(&segs(1), VoiceId::Neutral, Language::En, &backend, 0, &SystemClock::new(), &mut sink),
            Err(DialogueError::InvalidParallelism)
        );
    }

    #[test]
    fn sink_failure_stops_playback() {
        let backend = Delayed { delays_ms: vec![0, 0], fail: vec![] };
        let mut calls = 0;
        let mut sink = |_: &AudioClip| {
            calls += 1;
            Err(std::io::Error::other("speaker unplugged"))
        };
        let run = synthesize_ordered(&segs(2), VoiceId::Neutral, Language::En, &backend, 1, &SystemClock::new(), &mut sink)
            .unwrap();
        assert!(run.played.is_empty());
        assert_eq!(run.sink_error.as_deref(), Some("speaker unplugged"));
        assert_eq!(run.clips.len(), 2);
        assert_eq!(calls, 1);
    }
}
