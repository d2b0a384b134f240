//! Discrete-time orchestration of the full two-pass system: a real-time
//! causal pass with a segmenter, a cascaded pass whose center frame lags by
//! the right-context span, EOS timestamp routing from the 1st pass to the
//! 2nd, and the four 2nd-pass finalization strategies with latency
//! accounting.
//!
//! The simulation is logically concurrent but executes as a single-threaded
//! event loop in frame order, so runs are fully deterministic. Frames the
//! silence filter drops are removed from both passes' inputs; wall-clock
//! bookkeeping keeps the real timestamps.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::acoustics::{AcousticConfig, AcousticModel, DummyMode, FeatureFrame, Stream};
use crate::corpus::{annotate_eos, AnnotationParams, UtteranceSpec};
use crate::decoder::{
    decode_step, eos_check, finalize, merge_paths, seal_lattice, Beam, BeamConfig, Lattice,
    PathMerge,
};
use crate::vad::{classify, frame_filter, vad_step, EosSignal, FilterDecision, VadConfig, VadState};
use crate::{Error, Result, TokenId, Vocab};

/// How the 2nd pass is finalized when an EOS timestamp arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Finalize at EOS emission; frames inside the lag window stay undecoded.
    B1Immediate,
    /// Keep decoding real frames until the cascaded center reaches the EOS
    /// timestamp; costs a full lag of waiting.
    B2Wait,
    /// Inject zero-vector dummy right-context frames and finalize at once.
    E1DummyZero,
    /// Inject copies of the last causal frame and finalize at once.
    E2DummyLast,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::B1Immediate => "b1",
            Strategy::B2Wait => "b2",
            Strategy::E1DummyZero => "e1",
            Strategy::E2DummyLast => "e2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    Fixed,
    Vad,
    E2e,
}

impl SegmenterKind {
    pub fn label(self) -> &'static str {
        match self {
            SegmenterKind::Fixed => "fixed",
            SegmenterKind::Vad => "vad",
            SegmenterKind::E2e => "e2e",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub frame_ms: u64,
    /// 2nd-pass lag; must equal right_context_frames * frame_ms.
    pub lag_ms: u64,
    /// Simulated hardware constant reported as the computational latency of
    /// dummy-frame finalization. Carried in reports, never measured.
    pub comp_latency_ms: u64,
    pub strategy: Strategy,
    pub segmenter: SegmenterKind,
    /// Segment length of the fixed segmenter.
    pub fixed_len_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            frame_ms: 30,
            lag_ms: 900,
            comp_latency_ms: 208,
            strategy: Strategy::E2DummyLast,
            segmenter: SegmenterKind::E2e,
            fixed_len_ms: 5_000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_ms == 0 || self.fixed_len_ms < self.frame_ms {
            return Err(Error::config(
                "frame_ms must be positive and fixed_len_ms at least one frame",
            ));
        }
        if self.lag_ms % self.frame_ms != 0 {
            return Err(Error::config("lag_ms must be divisible by frame_ms"));
        }
        Ok(())
    }

    /// Reported (algorithmic, computational) finalization latency of a
    /// strategy. B2's bound is the lag itself; the dummy-frame strategies
    /// pay only the simulated compute constant.
    pub fn strategy_latencies(&self, strategy: Strategy) -> (u64, u64) {
        match strategy {
            Strategy::B1Immediate => (0, 0),
            Strategy::B2Wait => (self.lag_ms, self.lag_ms),
            Strategy::E1DummyZero | Strategy::E2DummyLast => (0, self.comp_latency_ms),
        }
    }
}

/// Everything one utterance simulation needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub annotation: AnnotationParams,
    pub acoustic: AcousticConfig,
    pub vad: VadConfig,
    pub beam_first: BeamConfig,
    pub beam_second: BeamConfig,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            annotation: AnnotationParams::default(),
            acoustic: AcousticConfig::default(),
            vad: VadConfig::default(),
            beam_first: BeamConfig::first_pass(),
            beam_second: BeamConfig::second_pass(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.acoustic.validate()?;
        self.vad.validate()?;
        self.beam_first.validate()?;
        self.beam_second.validate()?;
        self.pipeline.validate()?;
        if self.acoustic.frame_ms != self.pipeline.frame_ms
            || self.vad.frame_ms != self.pipeline.frame_ms
        {
            return Err(Error::config("frame_ms differs between components"));
        }
        if self.pipeline.lag_ms != self.acoustic.lag_ms() {
            return Err(Error::config(
                "pipeline.lag_ms must equal right_context_frames * frame_ms",
            ));
        }
        Ok(())
    }
}

/// One finalized segment with its latency breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentResult {
    pub index: usize,
    pub transcript_1st: Vec<TokenId>,
    pub transcript_2nd: Vec<TokenId>,
    /// Wall-clock time the 1st pass emitted the EOS; None for the terminal
    /// flush segment.
    pub eos_emit_ms: Option<u64>,
    /// Audio time T of the EOS.
    pub eos_timestamp_ms: Option<u64>,
    pub finalize_algorithmic_ms: u64,
    pub finalize_computational_ms: u64,
    /// True when B2 ran out of audio and fell back to a dummy-free flush.
    pub b2_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FrameArrival,
    EosEmitted,
    SecondPassCenterAdvanced,
    DummyInjection,
    SegmentFinalized,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time_ms: u64,
    pub kind: EventKind,
    /// frame index / EOS timestamp / center index / dummy count / segment.
    pub value: u64,
    /// Center events: decoded with synthesized right context.
    pub dummy_context: bool,
}

/// Full output of one utterance simulation.
#[derive(Debug, Clone)]
pub struct UtteranceRun {
    pub segments: Vec<SegmentResult>,
    pub events: Vec<TimelineEvent>,
    /// 2nd-pass lattice per segment (n-best when path merging is off).
    pub lattices: Vec<Lattice>,
    pub total_ms: u64,
}

impl UtteranceRun {
    pub fn transcript_1st(&self) -> Vec<TokenId> {
        self.segments
            .iter()
            .flat_map(|s| s.transcript_1st.iter().copied())
            .collect()
    }

    pub fn transcript_2nd(&self) -> Vec<TokenId> {
        self.segments
            .iter()
            .flat_map(|s| s.transcript_2nd.iter().copied())
            .collect()
    }

    /// 2nd-pass tokens with None marking each emitted EOS boundary.
    pub fn transcript_2nd_marked(&self) -> Vec<Option<TokenId>> {
        let mut out = Vec::new();
        for s in &self.segments {
            out.extend(s.transcript_2nd.iter().map(|&t| Some(t)));
            if s.eos_timestamp_ms.is_some() {
                out.push(None);
            }
        }
        out
    }
}

/// Per-segment bookkeeping the event loop keeps for the 2nd pass while a B2
/// finalization waits for real frames.
struct PendingFinalize {
    segment: usize,
    boundary_center: usize,
}

/// Mutable state the segmenter kinds need across frames.
pub struct SegmenterState {
    pub next_fixed_fire_ms: u64,
}

/// One segmenter consultation. `vad_signal` is this frame's output of the
/// always-running VAD state machine; `causal` is the 1st-pass beam and
/// posterior when the frame was kept.
pub fn segmenter_decision(
    kind: SegmenterKind,
    state: &mut SegmenterState,
    frame_end_ms: u64,
    vad_signal: Option<EosSignal>,
    causal: Option<(&Beam, &crate::acoustics::PosteriorFrame)>,
    pipeline: &PipelineConfig,
    beam_cfg: &BeamConfig,
) -> Option<EosSignal> {
    match kind {
        SegmenterKind::Fixed => {
            if frame_end_ms >= state.next_fixed_fire_ms {
                let ts = state.next_fixed_fire_ms;
                state.next_fixed_fire_ms += pipeline.fixed_len_ms;
                Some(EosSignal { timestamp_ms: ts })
            } else {
                None
            }
        }
        SegmenterKind::Vad => vad_signal,
        SegmenterKind::E2e => causal.and_then(|(beam, post)| eos_check(beam, post, beam_cfg)),
    }
}

struct Runner<'a> {
    model: &'a AcousticModel,
    cfg: &'a RunConfig,
    r: usize,
    kept: Vec<FeatureFrame>,
    beam1: Beam,
    beam2: Beam,
    lattice1: Lattice,
    lattice2: Lattice,
    /// Highest kept-stream center index the 2nd pass has decoded or skipped.
    done_center: i64,
    pending: VecDeque<PendingFinalize>,
    segments: Vec<SegmentResult>,
    lattices: Vec<Lattice>,
    events: Vec<TimelineEvent>,
    wall_ms: u64,
}

impl<'a> Runner<'a> {
    fn new(model: &'a AcousticModel, cfg: &'a RunConfig) -> Self {
        Runner {
            model,
            cfg,
            r: model.config().right_context_frames,
            kept: Vec::new(),
            beam1: Beam::initial(),
            beam2: Beam::initial(),
            lattice1: Lattice::new(),
            lattice2: Lattice::new(),
            done_center: -1,
            pending: VecDeque::new(),
            segments: Vec::new(),
            lattices: Vec::new(),
            events: Vec::new(),
            wall_ms: 0,
        }
    }

    fn event(&mut self, kind: EventKind, value: u64, dummy_context: bool) {
        self.events.push(TimelineEvent {
            time_ms: self.wall_ms,
            kind,
            value,
            dummy_context,
        });
    }

    fn merging(&self, pass: Stream) -> bool {
        let cfg = match pass {
            Stream::Causal => &self.cfg.beam_first,
            Stream::Cascaded => &self.cfg.beam_second,
        };
        cfg.path_merge == PathMerge::Bigram
    }

    /// Decodes one cascaded center given its encoded output frame.
    fn decode_center(&mut self, center: usize, casc: FeatureFrame) -> Result<()> {
        let dummy_context = casc.dummy;
        let post = self.model.posterior(&casc, Stream::Cascaded);
        self.beam2 = decode_step(&self.beam2, &post, &self.cfg.beam_second)?;
        if self.merging(Stream::Cascaded) {
            merge_paths(&mut self.beam2, &mut self.lattice2, casc.frame_index);
        }
        self.done_center = center as i64;
        self.event(
            EventKind::SecondPassCenterAdvanced,
            center as u64,
            dummy_context,
        );
        Ok(())
    }

    /// Steady-state advance: decode center m - R when the window is full and
    /// the center has not been decoded or skipped yet.
    fn advance_cascaded(&mut self) -> Result<()> {
        let m = self.kept.len() as i64 - 1;
        let c = m - self.r as i64;
        if c >= 0 && c > self.done_center {
            debug_assert_eq!(
                c,
                m - self.r as i64,
                "lag invariant: center must trail the causal head by R"
            );
            let lo = c as usize;
            let casc = self.model.cascaded_encode(&self.kept[lo..=lo + self.r])?;
            self.decode_center(lo, casc)?;
            self.fill_pending()?;
        }
        Ok(())
    }

    /// Completes queued B2 finalizations whose boundary has been reached.
    fn fill_pending(&mut self) -> Result<()> {
        while let Some(front) = self.pending.front() {
            if self.done_center < front.boundary_center as i64 {
                break;
            }
            let p = self.pending.pop_front().unwrap();
            self.finalize_second_into(p.segment, false)?;
        }
        Ok(())
    }

    /// Finalizes the 2nd pass and writes the transcript into segment `idx`.
    fn finalize_second_into(&mut self, idx: usize, b2_fallback: bool) -> Result<()> {
        let (final2, carry) = finalize(&self.beam2)?;
        self.beam2 = carry;
        if let Some(frame) = self.kept.get(self.done_center.max(0) as usize) {
            if self.done_center >= 0 {
                self.beam2
                    .rebase_emitted(self.model.schedule().due_at(frame.frame_index));
            }
        }
        let lattice = if self.merging(Stream::Cascaded) {
            let mut lat = std::mem::take(&mut self.lattice2);
            // Seal with the pre-carryover beam: its cursors are the ends.
            seal_lattice_from(&final2, &self.beam2, &mut lat);
            self.lattice2 = Lattice::new();
            lat
        } else {
            Lattice::from_nbest(&Beam {
                hyps: vec![final2.clone()],
            })
        };
        while self.lattices.len() < idx {
            self.lattices.push(Lattice::new());
        }
        self.lattices.push(lattice);
        let seg = &mut self.segments[idx];
        seg.transcript_2nd = final2.tokens;
        seg.b2_fallback = b2_fallback;
        let value = idx as u64;
        self.event(EventKind::SegmentFinalized, value, false);
        Ok(())
    }

    /// Decodes all centers up to `boundary` at once, completing their
    /// windows with synthesized right-context frames.
    fn decode_tail_with_dummies(&mut self, mode: DummyMode, boundary: usize) -> Result<()> {
        let first = (self.done_center + 1).max(0) as usize;
        if first > boundary {
            self.done_center = boundary as i64;
            return Ok(());
        }
        // Shared context buffer: real frames up to the boundary, then the
        // dummy tail. Each center's window is a slice of it.
        let mut ctx: Vec<FeatureFrame> = self.kept[first..=boundary].to_vec();
        ctx.extend(
            self.model
                .inject_dummy_frames(&self.kept[boundary], mode, self.r),
        );
        self.event(EventKind::DummyInjection, self.r as u64, true);
        for c in first..=boundary {
            let lo = c - first;
            let casc = self.model.cascaded_encode(&ctx[lo..=lo + self.r])?;
            self.decode_center(c, casc)?;
        }
        self.done_center = boundary as i64;
        Ok(())
    }

    /// Handles an emitted EOS: finalize the 1st pass immediately, route the
    /// timestamp to the 2nd pass, apply the configured strategy.
    fn handle_eos(&mut self, signal: EosSignal) -> Result<()> {
        self.event(EventKind::EosEmitted, signal.timestamp_ms, false);
        let (final1, carry1) = finalize(&self.beam1)?;
        self.beam1 = carry1;
        if self.merging(Stream::Causal) {
            self.lattice1 = Lattice::new();
        }
        if let Some(last) = self.kept.last() {
            self.beam1
                .rebase_emitted(self.model.schedule().due_at(last.frame_index));
        }

        let (alg, comp) = self
            .cfg
            .pipeline
            .strategy_latencies(self.cfg.pipeline.strategy);
        let idx = self.segments.len();
        self.segments.push(SegmentResult {
            index: idx,
            transcript_1st: final1.tokens,
            transcript_2nd: Vec::new(),
            eos_emit_ms: Some(self.wall_ms),
            eos_timestamp_ms: Some(signal.timestamp_ms),
            finalize_algorithmic_ms: alg,
            finalize_computational_ms: comp,
            b2_fallback: false,
        });

        if self.kept.is_empty() {
            // EOS before any decodable frame: both transcripts stay empty.
            return self.finalize_second_into(idx, false);
        }
        let boundary = self.kept.len() - 1;

        match self.cfg.pipeline.strategy {
            Strategy::B1Immediate => {
                // Frames (done_center, boundary] are never decoded: their
                // words are gone from this and every later segment.
                self.done_center = boundary as i64;
                self.finalize_second_into(idx, false)?;
            }
            Strategy::E1DummyZero | Strategy::E2DummyLast => {
                let mode = if self.cfg.pipeline.strategy == Strategy::E1DummyZero {
                    DummyMode::Zero
                } else {
                    DummyMode::LastFrame
                };
                self.decode_tail_with_dummies(mode, boundary)?;
                self.finalize_second_into(idx, false)?;
            }
            Strategy::B2Wait => {
                if self.done_center >= boundary as i64 {
                    self.finalize_second_into(idx, false)?;
                } else {
                    self.pending.push_back(PendingFinalize {
                        segment: idx,
                        boundary_center: boundary,
                    });
                }
            }
        }
        Ok(())
    }

    /// Terminal flush: always emits a segment, even when no EOS ever fired.
    fn flush(&mut self) -> Result<()> {
        let (final1, _) = finalize(&self.beam1)?;
        let idx = self.segments.len();
        let strategy = self.cfg.pipeline.strategy;
        let (alg, comp) = match strategy {
            // No future frames exist at the end of audio, so B2 cannot wait.
            Strategy::B2Wait => (0, 0),
            s => self.cfg.pipeline.strategy_latencies(s),
        };
        self.segments.push(SegmentResult {
            index: idx,
            transcript_1st: final1.tokens,
            transcript_2nd: Vec::new(),
            eos_emit_ms: None,
            eos_timestamp_ms: None,
            finalize_algorithmic_ms: alg,
            finalize_computational_ms: comp,
            b2_fallback: false,
        });

        let last = self.kept.len() as i64 - 1;
        let mut fallback = false;
        match strategy {
            Strategy::B1Immediate => {
                // Remaining centers stay undecoded.
                self.done_center = last;
            }
            Strategy::B2Wait => {
                // Dummy-free flush: decode the tail with truncated windows,
                // filling any still-pending segments on the way.
                fallback = !self.pending.is_empty() || self.done_center < last;
                if last >= 0 {
                    let first = (self.done_center + 1).max(0) as usize;
                    for c in first..=last as usize {
                        let hi = (c + self.r).min(last as usize);
                        let casc = self.model.cascaded_encode_truncated(&self.kept[c..=hi])?;
                        self.decode_center(c, casc)?;
                        self.fill_pending_as_fallback()?;
                    }
                }
            }
            Strategy::E1DummyZero | Strategy::E2DummyLast => {
                if last >= 0 {
                    let mode = if strategy == Strategy::E1DummyZero {
                        DummyMode::Zero
                    } else {
                        DummyMode::LastFrame
                    };
                    self.decode_tail_with_dummies(mode, last as usize)?;
                }
            }
        }
        // Any segment still pending is part of the fallback.
        while let Some(p) = self.pending.pop_front() {
            self.finalize_second_into(p.segment, true)?;
        }
        self.finalize_second_into(idx, fallback)?;
        Ok(())
    }

    fn fill_pending_as_fallback(&mut self) -> Result<()> {
        while let Some(front) = self.pending.front() {
            if self.done_center < front.boundary_center as i64 {
                break;
            }
            let p = self.pending.pop_front().unwrap();
            self.finalize_second_into(p.segment, true)?;
        }
        Ok(())
    }

    fn run(mut self) -> Result<UtteranceRun> {
        let frames = self.model.causal_features();
        let mut vad_state = VadState::new();
        let mut seg_state = SegmenterState {
            next_fixed_fire_ms: self.cfg.pipeline.fixed_len_ms,
        };
        for frame in frames {
            self.wall_ms = frame.end_ms;
            self.event(EventKind::FrameArrival, frame.frame_index as u64, false);
            let label = classify(&frame);
            let keep = frame_filter(&vad_state, label, &self.cfg.vad);
            let (next_vad, vad_signal) = vad_step(vad_state, label, frame.end_ms, &self.cfg.vad)?;
            vad_state = next_vad;

            let mut causal_post = None;
            if keep == FilterDecision::Keep {
                let post1 = self.model.posterior(&frame, Stream::Causal);
                self.beam1 = decode_step(&self.beam1, &post1, &self.cfg.beam_first)?;
                if self.merging(Stream::Causal) {
                    merge_paths(&mut self.beam1, &mut self.lattice1, frame.frame_index);
                }
                self.kept.push(frame);
                causal_post = Some(post1);
                self.advance_cascaded()?;
            }

            let signal = segmenter_decision(
                self.cfg.pipeline.segmenter,
                &mut seg_state,
                self.wall_ms,
                vad_signal,
                causal_post.as_ref().map(|p| (&self.beam1, p)),
                &self.cfg.pipeline,
                &self.cfg.beam_first,
            );
            if let Some(sig) = signal {
                self.handle_eos(sig)?;
            }
        }
        self.flush()?;
        debug_assert!(
            self.events.windows(2).all(|w| w[0].time_ms <= w[1].time_ms),
            "event log must be time-ordered"
        );
        Ok(UtteranceRun {
            segments: self.segments,
            events: self.events,
            lattices: self.lattices,
            total_ms: self.model.num_frames() as u64 * self.cfg.pipeline.frame_ms,
        })
    }
}

fn seal_lattice_from(final2: &crate::decoder::Hypothesis, _carry: &Beam, lat: &mut Lattice) {
    // The finalized hypothesis' cursor is the principal end; recombined
    // alternative paths were already folded into shared nodes.
    let beam = Beam {
        hyps: vec![final2.clone()],
    };
    seal_lattice(&beam, lat);
}

/// Simulates one utterance end to end.
pub fn run_utterance(
    spec: &UtteranceSpec,
    cfg: &RunConfig,
    vocab: Arc<Vocab>,
) -> Result<UtteranceRun> {
    cfg.validate()?;
    let annotated = annotate_eos(spec, cfg.annotation);
    let model = AcousticModel::new(spec, &annotated, cfg.annotation, &cfg.acoustic, vocab)?;
    Runner::new(&model, cfg).run()
}

/// Simulates one utterance against an already-built acoustic model.
pub fn run_with_model(model: &AcousticModel, cfg: &RunConfig) -> Result<UtteranceRun> {
    Runner::new(model, cfg).run()
}

/// Writes the event log in the documented line-delimited JSON format.
pub fn write_event_log(path: &std::path::Path, events: &[TimelineEvent]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
