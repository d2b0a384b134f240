//! Voice activity detection: per-frame speech/silence classification, the
//! smoothing state machine that emits EOS after sustained silence, and the
//! frame filter that drops silence beyond the initial window.
//!
//! The classifier returns ground truth (the synthetic stand-in for a
//! lightweight VAD). The state machine triggers at the first frame whose
//! cumulative silence reaches `trigger_ms`; within one uninterrupted silence
//! span, each further EOS requires another full trigger window. The filter
//! keeps silence frames while the run so far is under `trigger_ms` and drops
//! everything after; speech is never dropped.

use serde::{Deserialize, Serialize};

use crate::acoustics::FeatureFrame;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    /// Consecutive silence needed before an EOS fires (and before the filter
    /// starts dropping).
    pub trigger_ms: u64,
    pub frame_ms: u64,
    pub filter_enabled: bool,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            trigger_ms: 200,
            frame_ms: 30,
            filter_enabled: true,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trigger_ms == 0 || self.frame_ms == 0 {
            return Err(Error::config("trigger_ms and frame_ms must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameLabel {
    Speech,
    Silence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop,
}

/// An emitted end-of-segment signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EosSignal {
    /// Audio time of the frame that triggered the signal.
    pub timestamp_ms: u64,
}

/// Smoothing state. Counters are in milliseconds of audio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VadState {
    pub consecutive_silence_ms: u64,
    pub silence_since_trigger_ms: u64,
    pub emitted_in_current_silence: bool,
    last_frame_end_ms: Option<u64>,
}

impl VadState {
    pub fn new() -> Self {
        VadState::default()
    }
}

/// Ground-truth speech/silence label of a frame; independent of neighbors.
pub fn classify(frame: &FeatureFrame) -> FrameLabel {
    if frame.is_speech {
        FrameLabel::Speech
    } else {
        FrameLabel::Silence
    }
}

/// Advances the state machine by one frame and reports an EOS when the
/// trigger fires. Frames must be presented in time order.
pub fn vad_step(
    state: VadState,
    label: FrameLabel,
    frame_end_ms: u64,
    config: &VadConfig,
) -> Result<(VadState, Option<EosSignal>)> {
    if let Some(prev) = state.last_frame_end_ms {
        if frame_end_ms <= prev {
            return Err(Error::contract(format!(
                "vad_step frames out of order: {frame_end_ms} after {prev}"
            )));
        }
    }
    let mut next = state;
    next.last_frame_end_ms = Some(frame_end_ms);
    match label {
        FrameLabel::Speech => {
            next.consecutive_silence_ms = 0;
            next.silence_since_trigger_ms = 0;
            next.emitted_in_current_silence = false;
            Ok((next, None))
        }
        FrameLabel::Silence => {
            next.consecutive_silence_ms += config.frame_ms;
            let fire = if next.emitted_in_current_silence {
                next.silence_since_trigger_ms += config.frame_ms;
                next.silence_since_trigger_ms >= config.trigger_ms
            } else {
                next.consecutive_silence_ms >= config.trigger_ms
            };
            if fire {
                next.emitted_in_current_silence = true;
                next.silence_since_trigger_ms = 0;
                Ok((
                    next,
                    Some(EosSignal {
                        timestamp_ms: frame_end_ms,
                    }),
                ))
            } else {
                Ok((next, None))
            }
        }
    }
}

/// Filter decision for the frame about to be processed by `vad_step`.
/// Consult it with the state *before* stepping: silence frames are kept while
/// the run accumulated so far is under the trigger, dropped afterwards.
pub fn frame_filter(state: &VadState, label: FrameLabel, config: &VadConfig) -> FilterDecision {
    if !config.filter_enabled {
        return FilterDecision::Keep;
    }
    match label {
        FrameLabel::Speech => FilterDecision::Keep,
        FrameLabel::Silence => {
            if state.consecutive_silence_ms < config.trigger_ms {
                FilterDecision::Keep
            } else {
                FilterDecision::Drop
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> VadConfig {
        VadConfig::default()
    }

    fn silence_run(
        state: VadState,
        n: usize,
        start_ms: u64,
        config: &VadConfig,
    ) -> (VadState, Vec<EosSignal>) {
        let mut st = state;
        let mut out = Vec::new();
        for k in 0..n {
            let end = start_ms + (k as u64 + 1) * config.frame_ms;
            let (next, eos) = vad_step(st, FrameLabel::Silence, end, config).unwrap();
            st = next;
            out.extend(eos);
        }
        (st, out)
    }

    #[test]
    fn classify_returns_ground_truth() {
        let mut f = FeatureFrame::new(vec![0.0], 0, true, false, 30);
        assert_eq!(classify(&f), FrameLabel::Speech);
        f.is_speech = false;
        assert_eq!(classify(&f), FrameLabel::Silence);
    }

    #[test]
    fn seventh_silence_frame_triggers() {
        let (_, signals) = silence_run(VadState::new(), 7, 0, &cfg());
        assert_eq!(signals.len(), 1);
        assert_eq!(signals[0].timestamp_ms, 210);
    }

    #[test]
    fn speech_resets_counters_before_trigger() {
        let (st, signals) = silence_run(VadState::new(), 6, 0, &cfg());
        assert!(signals.is_empty());
        let (st, eos) = vad_step(st, FrameLabel::Speech, 210, &cfg()).unwrap();
        assert!(eos.is_none());
        assert_eq!(st.consecutive_silence_ms, 0);
        assert!(!st.emitted_in_current_silence);
    }

    #[test]
    fn long_silence_retriggers_after_full_window() {
        let (_, signals) = silence_run(VadState::new(), 14, 0, &cfg());
        assert_eq!(signals.len(), 2);
        assert_eq!(signals[0].timestamp_ms, 210);
        assert_eq!(signals[1].timestamp_ms, 420);
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let (st, _) = vad_step(VadState::new(), FrameLabel::Silence, 30, &cfg()).unwrap();
        assert!(matches!(
            vad_step(st, FrameLabel::Silence, 30, &cfg()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn filter_keeps_first_window_then_drops() {
        let config = cfg();
        let mut st = VadState::new();
        let mut decisions = Vec::new();
        for k in 0..9 {
            decisions.push(frame_filter(&st, FrameLabel::Silence, &config));
            let (next, _) =
                vad_step(st, FrameLabel::Silence, (k + 1) * config.frame_ms, &config).unwrap();
            st = next;
        }
        // Frames 1..=7 kept (run before each is < 200 ms), 8 onward dropped.
        assert_eq!(&decisions[..7], &[FilterDecision::Keep; 7]);
        assert_eq!(&decisions[7..], &[FilterDecision::Drop; 2]);
    }

    #[test]
    fn speech_is_always_kept() {
        let config = cfg();
        let (st, _) = silence_run(VadState::new(), 20, 0, &config);
        assert_eq!(
            frame_filter(&st, FrameLabel::Speech, &config),
            FilterDecision::Keep
        );
    }

    #[test]
    fn disabled_filter_keeps_everything() {
        let config = VadConfig {
            filter_enabled: false,
            ..cfg()
        };
        let (st, _) = silence_run(VadState::new(), 20, 0, &config);
        assert_eq!(
            frame_filter(&st, FrameLabel::Silence, &config),
            FilterDecision::Keep
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            /// No EOS fires earlier than trigger_ms into its silence run, so
            /// VAD EOS latency is never below the trigger.
            #[test]
            fn eos_not_before_trigger(labels in proptest::collection::vec(any::<bool>(), 1..200)) {
                let config = cfg();
                let mut st = VadState::new();
                let mut silence_started_at: Option<u64> = None;
                for (k, speech) in labels.iter().enumerate() {
                    let end = (k as u64 + 1) * config.frame_ms;
                    let label = if *speech { FrameLabel::Speech } else { FrameLabel::Silence };
                    if label == FrameLabel::Silence && silence_started_at.is_none() {
                        silence_started_at = Some(end - config.frame_ms);
                    }
                    if label == FrameLabel::Speech {
                        silence_started_at = None;
                    }
                    let (next, eos) = vad_step(st, label, end, &config).unwrap();
                    st = next;
                    if let Some(sig) = eos {
                        let start = silence_started_at.unwrap();
                        prop_assert!(sig.timestamp_ms - start >= config.trigger_ms);
                    }
                }
            }

            /// The state machines are deterministic: same input, same output.
            #[test]
            fn determinism(labels in proptest::collection::vec(any::<bool>(), 1..100)) {
                let config = cfg();
                let run = |labels: &[bool]| {
                    let mut st = VadState::new();
                    let mut out = Vec::new();
                    for (k, s) in labels.iter().enumerate() {
                        let label = if *s { FrameLabel::Speech } else { FrameLabel::Silence };
                        out.push(frame_filter(&st, label, &config));
                        let (next, eos) = vad_step(st, label, (k as u64 + 1) * config.frame_ms, &config).unwrap();
                        st = next;
                        out.push(if eos.is_some() { FilterDecision::Drop } else { FilterDecision::Keep });
                    }
                    out
                };
                prop_assert_eq!(run(&labels), run(&labels));
            }
        }
    }
}
