//! Deterministic synthetic stand-in for the causal encoder, the cascaded
//! (right-context) encoder and both joint layers.
//!
//! Features are word-keyed embeddings plus seeded noise; the cascaded encoder
//! is a fixed decay-weighted aggregation over a right-context window; the
//! joint produces per-frame normalized costs over {vocabulary, blank, EOS}.
//!
//! The joint is conditioned on how many tokens a hypothesis has emitted (the
//! stand-in for prediction-network state): hypotheses behind the ground-truth
//! schedule pay a lag penalty on blank, catch-up emissions get costed by
//! staleness, and a hypothesis whose last token disagrees with the schedule
//! is progressively corrected once "later context" arrives. Feature
//! corruption (noise, dummy right-context frames) flattens the distribution
//! toward uniform, which is what degrades decoding quality at boundaries.
//! All noise is counter-based: a pure function of (seed, utterance, frame,
//! stream, token), so any frame can be re-evaluated on any code path with
//! identical results.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedTranscript, AnnotationParams, UtteranceSpec};
use crate::hashing::{hash_str, mix, uniform, unit_f64};
use crate::{Error, Result, TokenId, Vocab};

/// Which pass a posterior belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Causal,
    Cascaded,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Causal => 1,
            Stream::Cascaded => 2,
        }
    }
}

/// Dummy right-context frame flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyMode {
    /// All dummy frames are zero vectors.
    Zero,
    /// All dummy frames copy the last causal encoder output.
    LastFrame,
}

/// One encoder output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub values: Vec<f32>,
    /// Index on the utterance timeline (not the filtered stream).
    pub frame_index: usize,
    /// Ground-truth speech/silence label for this frame.
    pub is_speech: bool,
    /// Provenance tag: true for synthesized right-context frames.
    pub dummy: bool,
    /// Real audio time at which this frame ends.
    pub end_ms: u64,
    /// Clean expectation for the content this frame stands for; encoder
    /// outputs compare against it to quantify corruption. None on causal
    /// frames (the per-index clean feature applies).
    reference: Option<Vec<f32>>,
}

impl FeatureFrame {
    /// Plain frame with no corruption reference attached.
    pub fn new(
        values: Vec<f32>,
        frame_index: usize,
        is_speech: bool,
        dummy: bool,
        end_ms: u64,
    ) -> Self {
        FeatureFrame {
            values,
            frame_index,
            is_speech,
            dummy,
            end_ms,
            reference: None,
        }
    }

    pub fn l2_distance(&self, other: &[f32]) -> f64 {
        debug_assert_eq!(self.values.len(), other.len());
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (f64::from(a - b)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Tuning constants of the synthetic joint. Defaults are calibrated so the
/// documented operating point (0.6 s silence threshold, 3.7 EOS threshold)
/// sits in the sweet spot of the threshold sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JointTuning {
    /// Cost of the due token at its word-final frame.
    pub label_base: f64,
    /// Blank cost away from word-final frames, and for on-schedule
    /// hypotheses at word-final frames.
    pub blank_base: f64,
    /// Blank cost stored at word-final frames (the miss cost for hypotheses
    /// that have not emitted the due word).
    pub miss_blank: f64,
    /// Cost of tokens with no evidence at this frame.
    pub far_token: f64,
    /// Per-frame blank surcharge for each token a hypothesis is behind.
    pub lag_penalty: f64,
    /// Per-frame staleness added when emitting a word after its final frame.
    pub catchup_rate: f64,
    /// Frames after which a missed word can no longer be emitted.
    pub catchup_window_frames: usize,
    /// Per-frame correction charge for a hypothesis whose last token
    /// disagrees with the schedule, once the correction point has passed.
    pub mismatch_rate: f64,
    /// Total correction charge per wrong token.
    pub mismatch_cap: f64,
    /// Slow per-frame drag on every divergent token after correction: keeps
    /// recombination residues from squatting in the beam forever.
    pub mismatch_linger: f64,
    /// Probability that a word is acoustically confusable.
    pub confusion_prob: f64,
    /// Cost of the confusable alternative at the word-final frame.
    pub confusion_low: f64,
    /// Cost of the true token at the word-final frame when confused.
    pub confusion_high: f64,
    /// Frames until the correction evidence for a confused word arrives
    /// (drawn uniformly per word from this range).
    pub confusion_lag_min_frames: usize,
    pub confusion_lag_max_frames: usize,
    /// How much of the confusion margin survives in the cascaded stream.
    pub cascaded_confusion_scale: f64,
    /// Noise is drawn from [-amp * noise_low_frac, +amp]; the asymmetry keeps
    /// the mean cost ordering between streams strict.
    pub noise_low_frac: f64,
    /// Feature-space noise amplitude as a fraction of causal_noise.
    pub feature_noise_frac: f64,
    /// Feature deviation at which the posterior is fully flattened.
    pub flatten_scale: f64,
    /// EOS anchor cost floor (strongest possible anchor).
    pub eos_base0: f64,
    /// Anchor cost spread: base = base0 + spread * t_sil / gap.
    pub eos_spread: f64,
    /// Cost growth per frame of distance from the anchor peak.
    pub eos_slope: f64,
    /// EOS cost away from anchors.
    pub eos_far: f64,
    /// Peak confidence sits this fraction of the silence into the gap...
    pub eos_peak_frac: f64,
    /// ...capped at this many milliseconds (must stay inside the frame
    /// filter's initial-silence window).
    pub eos_peak_cap_ms: u64,
    /// Per-frame probability of a deep EOS dip (spurious-fire tail).
    pub eos_dip_prob: f64,
    pub eos_dip_depth: f64,
}

impl Default for JointTuning {
    fn default() -> Self {
        JointTuning {
            label_base: 0.4,
            blank_base: 0.18,
            miss_blank: 2.6,
            far_token: 6.5,
            lag_penalty: 3.0,
            catchup_rate: 0.35,
            catchup_window_frames: 8,
            mismatch_rate: 0.25,
            mismatch_cap: 1.0,
            mismatch_linger: 0.007,
            confusion_prob: 0.22,
            confusion_low: 0.5,
            confusion_high: 1.15,
            confusion_lag_min_frames: 2,
            confusion_lag_max_frames: 8,
            cascaded_confusion_scale: 0.45,
            noise_low_frac: 0.333,
            feature_noise_frac: 0.11,
            flatten_scale: 0.9,
            eos_base0: 0.8,
            eos_spread: 2.4,
            eos_slope: 1.2,
            eos_far: 6.0,
            eos_peak_frac: 0.25,
            eos_peak_cap_ms: 150,
            eos_dip_prob: 0.004,
            eos_dip_depth: 1.9,
        }
    }
}

/// Synthetic front-end configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticConfig {
    /// Feature dimension D.
    pub dim: usize,
    /// Right-context span R in frames; R * frame_ms is the 2nd-pass lag.
    pub right_context_frames: usize,
    pub frame_ms: u64,
    /// Posterior noise amplitude of the causal (1st-pass) stream.
    pub causal_noise: f64,
    /// Posterior noise amplitude of the cascaded stream; must not exceed
    /// causal_noise (the 2nd pass is the higher-quality one).
    pub cascaded_noise: f64,
    /// Encoder output for silence. Empty means the default unit-norm
    /// all-ones vector (nonzero, so zero dummy frames measurably distort).
    pub silence_feature: Vec<f32>,
    /// Decay ratio of the cascaded right-context aggregation weights.
    pub context_decay: f64,
    pub seed: u64,
    pub tuning: JointTuning,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        AcousticConfig {
            dim: 16,
            right_context_frames: 30,
            frame_ms: 30,
            causal_noise: 0.45,
            cascaded_noise: 0.25,
            silence_feature: Vec::new(),
            context_decay: 0.9,
            seed: 17,
            tuning: JointTuning::default(),
        }
    }
}

impl AcousticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.frame_ms == 0 {
            return Err(Error::config("dim and frame_ms must be positive"));
        }
        if self.cascaded_noise > self.causal_noise {
            return Err(Error::config(
                "cascaded_noise must not exceed causal_noise",
            ));
        }
        if !self.silence_feature.is_empty() && self.silence_feature.len() != self.dim {
            return Err(Error::config("silence_feature length differs from dim"));
        }
        if !(0.0..1.0).contains(&self.context_decay) {
            return Err(Error::config("context_decay must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn lag_ms(&self) -> u64 {
        self.right_context_frames as u64 * self.frame_ms
    }

    /// Resolved silence feature vector. The default is an all-ones vector at
    /// twice the norm of the (unit) word embeddings: zero dummy frames then
    /// deviate from real silence by a wide margin, while last-frame dummies
    /// track it closely whatever its scale.
    pub fn silence_vector(&self) -> Vec<f32> {
        if self.silence_feature.is_empty() {
            let v = 2.0 / (self.dim as f32).sqrt();
            vec![v; self.dim]
        } else {
            self.silence_feature.clone()
        }
    }
}

/// One EOS anchor derived from the annotated transcript: confidence peaks
/// `peak_frame` frames into the silence and fades with distance.
#[derive(Debug, Clone, Copy)]
struct EosAnchor {
    peak_frame: usize,
    base: f64,
}

#[derive(Debug, Clone, Copy)]
struct Confusion {
    alt: TokenId,
}

/// Ground-truth emission schedule of one utterance: what the joint was
/// "trained" to produce. Shared by every posterior frame of the utterance.
#[derive(Debug)]
pub struct Schedule {
    tokens: Vec<TokenId>,
    final_frames: Vec<usize>,
    /// Number of tokens due (word-final frame passed) per timeline frame.
    due_at: Vec<usize>,
    /// Word index whose final frame is this one.
    word_final_at: Vec<Option<u32>>,
    confusions: Vec<Option<Confusion>>,
    /// Frame from which holding a wrong token at position j starts being
    /// charged.
    penalty_start: Vec<usize>,
    anchors: Vec<EosAnchor>,
}

impl Schedule {
    pub fn due_at(&self, frame_index: usize) -> usize {
        if self.due_at.is_empty() {
            return 0;
        }
        let i = frame_index.min(self.due_at.len() - 1);
        self.due_at[i]
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    fn confusion_alt(&self, word: usize) -> Option<TokenId> {
        self.confusions.get(word).copied().flatten().map(|c| c.alt)
    }

    fn empty() -> Self {
        Schedule {
            tokens: Vec::new(),
            final_frames: Vec::new(),
            due_at: Vec::new(),
            word_final_at: Vec::new(),
            confusions: Vec::new(),
            penalty_start: Vec::new(),
            anchors: Vec::new(),
        }
    }
}

/// Per-frame normalized costs over {vocabulary, blank, EOS} for one stream,
/// plus the schedule context the decoder consults when expanding hypotheses.
#[derive(Debug, Clone)]
pub struct PosteriorFrame {
    pub frame_index: usize,
    pub stream: Stream,
    pub end_ms: u64,
    costs: Vec<f64>,
    aligned_blank: f64,
    /// What the due word costs a hypothesis not entitled to emit it here.
    junk_label: Option<(TokenId, f64)>,
    /// Same for the confusable alternative.
    junk_alt: Option<(TokenId, f64)>,
    flatten: f64,
    due_tokens: usize,
    schedule: Arc<Schedule>,
    tuning: Arc<JointTuning>,
}

impl PosteriorFrame {
    /// Stored cost of a token (the aligned-state posterior).
    pub fn cost(&self, t: TokenId) -> f64 {
        self.costs[t.index()]
    }

    pub fn num_symbols(&self) -> usize {
        self.costs.len()
    }

    fn blank_index(&self) -> usize {
        self.costs.len() - 2
    }

    fn eos_index(&self) -> usize {
        self.costs.len() - 1
    }

    /// Stored EOS cost on this frame.
    pub fn eos_cost(&self) -> f64 {
        self.costs[self.eos_index()]
    }

    /// EOS cost as seen from a hypothesis that has emitted `emitted` tokens
    /// and whose last segment emission is `last_token`. Pending words
    /// suppress the boundary, and so does an unresolved disagreement with
    /// the schedule: the joint conditions on the prediction network, and a
    /// linguistically unstable context looks mid-phrase.
    pub fn eos_cost_for(&self, emitted: usize, last_token: Option<TokenId>) -> f64 {
        let lag = self.due_tokens.saturating_sub(emitted) as f64;
        let mut cost = self.eos_cost() + self.tuning.lag_penalty * lag;
        if let Some(last) = last_token {
            let pos = emitted.wrapping_sub(1);
            if emitted >= 1
                && pos < self.schedule.tokens.len()
                && last != self.schedule.tokens[pos]
            {
                cost += self.tuning.lag_penalty;
            }
        }
        cost
    }

    /// Whether `tok` is what the ground-truth schedule expects at emission
    /// position `emitted`. Tokens beyond the schedule never match.
    pub fn matches_schedule(&self, emitted: usize, tok: TokenId) -> bool {
        self.schedule
            .tokens
            .get(emitted)
            .is_some_and(|&expected| expected == tok)
    }

    /// Tokens due by this frame under the ground-truth schedule.
    pub fn due_tokens(&self) -> usize {
        self.due_tokens
    }

    /// Cost of expanding a hypothesis that has emitted `emitted` tokens by
    /// `tok` at this frame.
    ///
    /// The stored vector is the aligned-state posterior: its cheap slots (the
    /// due word and its confusable alternative at their word-final frame)
    /// apply only to hypotheses in that state. A hypothesis behind schedule
    /// may catch up on its own next word at a staleness surcharge; every
    /// other expansion reads the frame's far floor.
    pub fn expansion_cost(&self, emitted: usize, tok: TokenId) -> f64 {
        let sched = &self.schedule;
        if emitted < sched.tokens.len() && tok == sched.tokens[emitted] {
            let due_frame = sched.final_frames[emitted];
            if due_frame == self.frame_index {
                return self.costs[tok.index()];
            }
            if due_frame < self.frame_index {
                // Catch-up emission: the audio evidence is going stale.
                let dist = self.frame_index - due_frame;
                if dist <= self.tuning.catchup_window_frames {
                    let raw = self.tuning.label_base + self.tuning.catchup_rate * dist as f64;
                    let uni = (self.costs.len() as f64).ln();
                    return ((1.0 - self.flatten) * raw + self.flatten * uni).max(MIN_COST);
                }
            }
            return self.junk_view(tok);
        }
        // The confusable alternative is expandable from the aligned state.
        if let Some(j) = sched.word_final_at.get(self.frame_index).copied().flatten() {
            if emitted == j as usize && sched.confusion_alt(j as usize) == Some(tok) {
                return self.costs[tok.index()];
            }
        }
        self.junk_view(tok)
    }

    /// Cost of `tok` for a hypothesis not entitled to any cheap slot.
    fn junk_view(&self, tok: TokenId) -> f64 {
        for slot in [&self.junk_label, &self.junk_alt].into_iter().flatten() {
            if slot.0 == tok {
                return slot.1;
            }
        }
        self.costs[tok.index()]
    }

    /// Blank cost for a hypothesis, plus the correction charge the caller
    /// must accumulate onto the hypothesis. `last_token` is the hypothesis's
    /// last emission in the current segment (carryovers are exempt);
    /// `divergence` counts its tokens that disagree with the schedule.
    pub fn blank_cost(
        &self,
        emitted: usize,
        last_token: Option<TokenId>,
        mismatch_accrued: f64,
        divergence: u32,
    ) -> (f64, f64) {
        let t = &self.tuning;
        let mut cost = if emitted >= self.due_tokens {
            self.aligned_blank
        } else {
            let lag = (self.due_tokens - emitted) as f64;
            self.costs[self.blank_index()] + t.lag_penalty * lag
        };
        // Every wrong token keeps dragging a little; recombination residues
        // eventually fall out of the pruning window and free their beam slot.
        cost += t.mismatch_linger * f64::from(divergence);
        let mut charge = 0.0;
        if let Some(last) = last_token {
            let pos = emitted.wrapping_sub(1);
            if emitted >= 1
                && pos < self.schedule.tokens.len()
                && last != self.schedule.tokens[pos]
                && self.frame_index >= self.schedule.penalty_start[pos]
            {
                charge = (t.mismatch_cap - mismatch_accrued).clamp(0.0, t.mismatch_rate);
                cost += charge;
            }
        }
        (cost, charge)
    }

    /// Sum of exp(-cost) over all symbols; 1 within 1e-6 by construction.
    pub fn probability_mass(&self) -> f64 {
        self.costs.iter().map(|c| (-c).exp()).sum()
    }

    /// Raw-cost constructor for decoder tests: no schedule conditioning,
    /// costs are taken at face value.
    #[doc(hidden)]
    pub fn from_costs(costs: Vec<f64>, frame_index: usize, stream: Stream, end_ms: u64) -> Self {
        let aligned_blank = costs[costs.len() - 2];
        PosteriorFrame {
            frame_index,
            stream,
            end_ms,
            costs,
            aligned_blank,
            junk_label: None,
            junk_alt: None,
            flatten: 0.0,
            due_tokens: 0,
            schedule: Arc::new(Schedule::empty()),
            tuning: Arc::new(JointTuning::default()),
        }
    }
}

const MIN_COST: f64 = 0.02;
const SALT_TOKEN_NOISE: u64 = 0xA1;
const SALT_FEATURE: u64 = 0xA2;
const SALT_CONF_COIN: u64 = 0xA3;
const SALT_CONF_ALT: u64 = 0xA4;
const SALT_CONF_LAG: u64 = 0xA5;
const SALT_EOS_DIP: u64 = 0xA6;

/// Synthetic acoustic model for one utterance: produces encoder features and
/// per-frame posteriors for both streams.
pub struct AcousticModel {
    cfg: AcousticConfig,
    vocab: Arc<Vocab>,
    schedule: Arc<Schedule>,
    tuning: Arc<JointTuning>,
    clean_causal: Vec<Vec<f32>>,
    is_speech: Vec<bool>,
    n_frames: usize,
    utt_hash: u64,
}

impl AcousticModel {
    pub fn new(
        spec: &UtteranceSpec,
        annotated: &AnnotatedTranscript,
        annotation: AnnotationParams,
        cfg: &AcousticConfig,
        vocab: Arc<Vocab>,
    ) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let n_frames = (spec.total_ms / cfg.frame_ms) as usize;
        let utt_hash = mix(&[cfg.seed, hash_str(&spec.id)]);

        let schedule = build_schedule(spec, annotated, annotation, cfg, &vocab, utt_hash, n_frames)?;
        let (clean_causal, is_speech) = clean_features(spec, cfg, n_frames);

        Ok(AcousticModel {
            tuning: Arc::new(cfg.tuning.clone()),
            cfg: cfg.clone(),
            vocab,
            schedule: Arc::new(schedule),
            clean_causal,
            is_speech,
            n_frames,
            utt_hash,
        })
    }

    pub fn config(&self) -> &AcousticConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn schedule(&self) -> &Arc<Schedule> {
        &self.schedule
    }

    pub fn num_frames(&self) -> usize {
        self.n_frames
    }

    /// Causal encoder output: one frame per `frame_ms` tick covering
    /// [0, total_ms). Word-span frames carry the word embedding, silence
    /// frames the silence feature, both plus seeded noise.
    pub fn causal_features(&self) -> Vec<FeatureFrame> {
        let amp = (self.cfg.tuning.feature_noise_frac * self.cfg.causal_noise) as f32;
        (0..self.n_frames)
            .map(|i| {
                let mut values = self.clean_causal[i].clone();
                if amp > 0.0 {
                    for (d, v) in values.iter_mut().enumerate() {
                        let u = uniform(
                            &[self.utt_hash, SALT_FEATURE, i as u64, d as u64],
                            -1.0,
                            1.0,
                        );
                        *v += amp * u as f32;
                    }
                }
                FeatureFrame {
                    values,
                    frame_index: i,
                    is_speech: self.is_speech[i],
                    dummy: false,
                    end_ms: (i as u64 + 1) * self.cfg.frame_ms,
                    reference: None,
                }
            })
            .collect()
    }

    /// Cascaded encoder: fixed aggregation of the window with weights
    /// decaying over the right context. `window[0]` is the center frame and
    /// the window must hold exactly R+1 frames.
    pub fn cascaded_encode(&self, window: &[FeatureFrame]) -> Result<FeatureFrame> {
        if window.len() != self.cfg.right_context_frames + 1 {
            return Err(Error::contract(format!(
                "cascaded_encode window must hold R+1 = {} frames, got {}",
                self.cfg.right_context_frames + 1,
                window.len()
            )));
        }
        Ok(self.aggregate_window(window))
    }

    /// Aggregation over a possibly shortened window (stream tail where no
    /// right-context frames exist); weights are renormalized over what is
    /// available. Used by the dummy-free flush path.
    pub fn cascaded_encode_truncated(&self, window: &[FeatureFrame]) -> Result<FeatureFrame> {
        if window.is_empty() || window.len() > self.cfg.right_context_frames + 1 {
            return Err(Error::contract(
                "truncated window must hold between 1 and R+1 frames",
            ));
        }
        Ok(self.aggregate_window(window))
    }

    fn aggregate_window(&self, window: &[FeatureFrame]) -> FeatureFrame {
        let center = &window[0];
        let silence = self.cfg.silence_vector();
        let mut values = vec![0.0f32; self.cfg.dim];
        // Clean expectation: the same aggregation over the clean content of
        // the frame positions the window consumed. A dummy frame is thereby
        // measured against the content it stands in for.
        let mut reference = vec![0.0f32; self.cfg.dim];
        let mut total = 0.0f64;
        let mut w = 1.0f64;
        for frame in window {
            let clean = self
                .clean_causal
                .get(frame.frame_index)
                .unwrap_or(&silence);
            for (d, (acc, r)) in values.iter_mut().zip(reference.iter_mut()).enumerate() {
                *acc += (w as f32) * frame.values[d];
                *r += (w as f32) * clean[d];
            }
            total += w;
            w *= self.cfg.context_decay;
        }
        let inv = (1.0 / total) as f32;
        for (v, r) in values.iter_mut().zip(reference.iter_mut()) {
            *v *= inv;
            *r *= inv;
        }
        FeatureFrame {
            values,
            frame_index: center.frame_index,
            is_speech: center.is_speech,
            dummy: window.iter().any(|f| f.dummy),
            end_ms: center.end_ms,
            reference: Some(reference),
        }
    }

    /// Synthesizes R dummy right-context frames continuing after `last`.
    pub fn inject_dummy_frames(
        &self,
        last: &FeatureFrame,
        mode: DummyMode,
        r: usize,
    ) -> Vec<FeatureFrame> {
        inject_dummy_frames(last, mode, r, self.cfg.frame_ms)
    }

    /// Per-frame posterior for one stream. Pure in (frame, stream).
    pub fn posterior(&self, frame: &FeatureFrame, stream: Stream) -> PosteriorFrame {
        let t = &self.cfg.tuning;
        let i = frame.frame_index.min(self.n_frames.saturating_sub(1));
        let nsym = self.vocab.num_symbols();
        let blank = nsym - 2;
        let eos = nsym - 1;
        let uni = (nsym as f64).ln();
        let amp = match stream {
            Stream::Causal => self.cfg.causal_noise,
            Stream::Cascaded => self.cfg.cascaded_noise,
        };

        // Feature corruption (noise, dummy right context) flattens the base
        // distribution toward uniform before noise is applied, so a fully
        // corrupted frame decodes to noise-driven junk.
        let clean = match (&frame.reference, stream) {
            (Some(r), _) => r,
            (None, _) => &self.clean_causal[i],
        };
        let deviation = frame.l2_distance(clean);
        let flatten = (deviation / t.flatten_scale).min(1.0);
        let squash = |base: f64| (1.0 - flatten) * base + flatten * uni;

        let mut costs = vec![squash(t.far_token); nsym];
        // Cheap slots as a hypothesis *not* entitled to them would see them.
        let mut junk_label = None;
        let mut junk_alt = None;
        let word_final = self.schedule.word_final_at.get(i).copied().flatten();
        match word_final {
            Some(j) => {
                let j = j as usize;
                let tok = self.schedule.tokens[j];
                match self.schedule.confusions[j] {
                    Some(conf) => {
                        let (hi, lo) = match stream {
                            Stream::Causal => (t.confusion_high, t.confusion_low),
                            Stream::Cascaded => {
                                let s = t.cascaded_confusion_scale;
                                (
                                    t.label_base + (t.confusion_high - t.label_base) * s,
                                    t.label_base + (t.confusion_low - t.label_base) * s,
                                )
                            }
                        };
                        junk_label = Some((tok, costs[tok.index()]));
                        junk_alt = Some((conf.alt, costs[conf.alt.index()]));
                        costs[tok.index()] = squash(hi);
                        costs[conf.alt.index()] = squash(lo);
                    }
                    None => {
                        junk_label = Some((tok, costs[tok.index()]));
                        costs[tok.index()] = squash(t.label_base);
                    }
                }
                costs[blank] = squash(t.miss_blank);
            }
            None => costs[blank] = squash(t.blank_base),
        }

        // EOS shape: cost rises with distance from each anchor peak.
        let mut eos_cost = t.eos_far;
        for a in &self.schedule.anchors {
            let dist = (i as i64 - a.peak_frame as i64).abs() as f64;
            eos_cost = eos_cost.min(a.base + t.eos_slope * dist);
        }
        if unit_f64(mix(&[self.utt_hash, SALT_EOS_DIP, i as u64])) < t.eos_dip_prob {
            eos_cost -= t.eos_dip_depth;
        }
        costs[eos] = squash(eos_cost);

        let mut aligned_blank = squash(t.blank_base);

        // Stream noise, asymmetric so the cascaded stream is strictly better
        // in expectation.
        if amp > 0.0 {
            let lo = -amp * t.noise_low_frac;
            let noise = |tok: usize| {
                uniform(
                    &[
                        self.utt_hash,
                        SALT_TOKEN_NOISE,
                        i as u64,
                        stream.tag(),
                        tok as u64,
                    ],
                    lo,
                    amp,
                )
            };
            for (tok, c) in costs.iter_mut().enumerate() {
                *c += noise(tok);
            }
            if let Some((tok, c)) = &mut junk_label {
                *c += noise(tok.index());
            }
            if let Some((tok, c)) = &mut junk_alt {
                *c += noise(tok.index());
            }
            aligned_blank += noise(nsym);
        }

        for c in costs.iter_mut() {
            *c = c.max(MIN_COST);
        }
        aligned_blank = aligned_blank.max(MIN_COST);

        // Exact normalization: shift so that sum exp(-cost) = 1.
        let z: f64 = costs.iter().map(|c| (-c).exp()).sum();
        let shift = z.ln();
        for c in costs.iter_mut() {
            *c += shift;
        }
        aligned_blank += shift;
        for slot in [&mut junk_label, &mut junk_alt].into_iter().flatten() {
            slot.1 = slot.1.max(MIN_COST) + shift;
        }

        PosteriorFrame {
            frame_index: i,
            stream,
            end_ms: frame.end_ms,
            costs,
            aligned_blank,
            junk_label,
            junk_alt,
            flatten,
            due_tokens: self.schedule.due_at(i),
            schedule: Arc::clone(&self.schedule),
            tuning: Arc::clone(&self.tuning),
        }
    }
}

/// Synthesizes `r` dummy right-context frames continuing after `last`:
/// zero vectors or copies of the last causal output, with consecutive frame
/// indices and timestamps.
pub fn inject_dummy_frames(
    last: &FeatureFrame,
    mode: DummyMode,
    r: usize,
    frame_ms: u64,
) -> Vec<FeatureFrame> {
    (0..r)
        .map(|k| FeatureFrame {
            values: match mode {
                DummyMode::Zero => vec![0.0; last.values.len()],
                DummyMode::LastFrame => last.values.clone(),
            },
            frame_index: last.frame_index + k + 1,
            is_speech: false,
            dummy: true,
            end_ms: last.end_ms + (k as u64 + 1) * frame_ms,
            reference: None,
        })
        .collect()
}

fn word_embedding(text: &str, dim: usize) -> Vec<f32> {
    let h = hash_str(text);
    let mut v: Vec<f32> = (0..dim)
        .map(|d| (unit_f64(mix(&[h, d as u64])) * 2.0 - 1.0) as f32)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn clean_features(
    spec: &UtteranceSpec,
    cfg: &AcousticConfig,
    n_frames: usize,
) -> (Vec<Vec<f32>>, Vec<bool>) {
    let silence = cfg.silence_vector();
    let embeddings: Vec<Vec<f32>> = spec
        .words
        .iter()
        .map(|w| word_embedding(&w.text, cfg.dim))
        .collect();
    let mut clean = Vec::with_capacity(n_frames);
    let mut speech = Vec::with_capacity(n_frames);
    let mut w = 0usize;
    for i in 0..n_frames {
        let fs = i as u64 * cfg.frame_ms;
        let fe = fs + cfg.frame_ms;
        while w < spec.words.len() && spec.words[w].end_ms <= fs {
            w += 1;
        }
        let overlapping = w < spec.words.len() && spec.words[w].start_ms < fe;
        if overlapping {
            clean.push(embeddings[w].clone());
            speech.push(true);
        } else {
            clean.push(silence.clone());
            speech.push(false);
        }
    }
    (clean, speech)
}

#[allow(clippy::too_many_arguments)]
fn build_schedule(
    spec: &UtteranceSpec,
    annotated: &AnnotatedTranscript,
    annotation: AnnotationParams,
    cfg: &AcousticConfig,
    vocab: &Vocab,
    utt_hash: u64,
    n_frames: usize,
) -> Result<Schedule> {
    let t = &cfg.tuning;
    let mut tokens = Vec::with_capacity(spec.words.len());
    let mut final_frames = Vec::with_capacity(spec.words.len());
    for w in &spec.words {
        let tok = vocab.id(&w.text).ok_or_else(|| {
            Error::config(format!("word '{}' is not in the vocabulary", w.text))
        })?;
        tokens.push(tok);
        final_frames.push(((w.end_ms - 1) / cfg.frame_ms) as usize);
    }
    for pair in final_frames.windows(2) {
        debug_assert!(pair[0] < pair[1], "two words end in the same frame");
    }

    let mut word_final_at = vec![None; n_frames];
    for (j, &f) in final_frames.iter().enumerate() {
        if f < n_frames {
            word_final_at[f] = Some(j as u32);
        }
    }
    let mut due_at = vec![0usize; n_frames.max(1)];
    let mut due = 0usize;
    for (i, slot) in due_at.iter_mut().enumerate() {
        if let Some(j) = word_final_at.get(i).copied().flatten() {
            due = j as usize + 1;
        }
        *slot = due;
    }

    let mut confusions = Vec::with_capacity(tokens.len());
    let mut penalty_start = Vec::with_capacity(tokens.len());
    for (j, &tok) in tokens.iter().enumerate() {
        let coin = unit_f64(mix(&[utt_hash, SALT_CONF_COIN, j as u64]));
        if coin < t.confusion_prob && vocab.len() >= 2 {
            let mut alt = TokenId(
                (mix(&[utt_hash, SALT_CONF_ALT, j as u64]) % vocab.len() as u64) as u32,
            );
            if alt == tok {
                alt = TokenId((alt.0 + 1) % vocab.len() as u32);
            }
            let span = (t.confusion_lag_max_frames - t.confusion_lag_min_frames) as u64 + 1;
            let lag = t.confusion_lag_min_frames
                + (mix(&[utt_hash, SALT_CONF_LAG, j as u64]) % span) as usize;
            confusions.push(Some(Confusion { alt }));
            penalty_start.push(final_frames[j] + lag);
        } else {
            confusions.push(None);
            penalty_start.push(final_frames[j] + 1);
        }
    }

    // EOS anchors: one per annotated EOS. Confidence scales with how far the
    // gap exceeds the training silence threshold; the peak sits a little way
    // into the silence (within the frame filter's initial window).
    let mut anchors = Vec::new();
    for j in annotated.eos_after_word_indices() {
        let end = spec.words[j].end_ms;
        let gap = match spec.words.get(j + 1) {
            Some(next) => next.start_ms - end,
            None => spec.total_ms.saturating_sub(end),
        };
        let is_terminal = j + 1 == spec.words.len();
        let base = if is_terminal {
            t.eos_base0
        } else {
            let threshold = if spec.words[j].hesitation {
                annotation.t_sil_hes_ms
            } else {
                annotation.t_sil_ms
            };
            t.eos_base0 + t.eos_spread * threshold as f64 / gap.max(1) as f64
        };
        let offset = ((gap as f64 * t.eos_peak_frac) as u64).min(t.eos_peak_cap_ms);
        let peak_frame = (((end + offset) / cfg.frame_ms) as usize).min(n_frames.saturating_sub(1));
        anchors.push(EosAnchor { peak_frame, base });
    }

    Ok(Schedule {
        tokens,
        final_frames,
        due_at,
        word_final_at,
        confusions,
        penalty_start,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{annotate_eos, DomainKind, Word};

    fn two_word_spec(gap_ms: u64) -> UtteranceSpec {
        UtteranceSpec {
            id: "test-utt".to_string(),
            domain_kind: DomainKind::LongForm,
            total_ms: 1500 + gap_ms + 3000,
            words: vec![
                Word {
                    text: "hello".to_string(),
                    start_ms: 100,
                    end_ms: 400,
                    hesitation: false,
                },
                Word {
                    text: "world".to_string(),
                    start_ms: 400 + gap_ms,
                    end_ms: 700 + gap_ms,
                    hesitation: false,
                },
            ],
        }
    }

    fn model_for(spec: &UtteranceSpec, cfg: &AcousticConfig) -> AcousticModel {
        let vocab = Arc::new(Vocab::new(["hello", "world", "other"]));
        let ann = annotate_eos(spec, AnnotationParams::default());
        AcousticModel::new(spec, &ann, AnnotationParams::default(), cfg, vocab).unwrap()
    }

    fn quiet_cfg() -> AcousticConfig {
        AcousticConfig {
            causal_noise: 0.0,
            cascaded_noise: 0.0,
            tuning: JointTuning {
                confusion_prob: 0.0,
                eos_dip_prob: 0.0,
                ..JointTuning::default()
            },
            ..AcousticConfig::default()
        }
    }

    #[test]
    fn frame_count_is_floor_of_total_over_frame_ms() {
        let spec = UtteranceSpec {
            id: "u".to_string(),
            domain_kind: DomainKind::LongForm,
            total_ms: 300,
            words: vec![],
        };
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        assert_eq!(model.causal_features().len(), 10);
    }

    #[test]
    fn zero_noise_silence_frame_equals_silence_feature() {
        let spec = two_word_spec(200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frames = model.causal_features();
        let silence = cfg.silence_vector();
        let f = frames.iter().find(|f| !f.is_speech).unwrap();
        assert_eq!(f.values, silence);
    }

    #[test]
    fn features_are_deterministic() {
        let spec = two_word_spec(200);
        let cfg = AcousticConfig::default();
        let a = model_for(&spec, &cfg).causal_features();
        let b = model_for(&spec, &cfg).causal_features();
        assert_eq!(a, b);
    }

    #[test]
    fn cascaded_encode_of_identical_frames_is_identity() {
        let spec = two_word_spec(200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frame = model.causal_features()[0].clone();
        let window: Vec<FeatureFrame> = (0..=cfg.right_context_frames)
            .map(|k| FeatureFrame {
                frame_index: frame.frame_index + k,
                ..frame.clone()
            })
            .collect();
        let out = model.cascaded_encode(&window).unwrap();
        for (a, b) in out.values.iter().zip(&frame.values) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(out.frame_index, frame.frame_index);
    }

    #[test]
    fn zero_tail_pulls_output_toward_zero() {
        let spec = two_word_spec(200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let center = model.causal_features()[5].clone();
        let mut window = vec![center.clone()];
        for k in 0..cfg.right_context_frames {
            window.push(FeatureFrame::new(
                vec![0.0; cfg.dim],
                center.frame_index + k + 1,
                false,
                true,
                center.end_ms + (k as u64 + 1) * cfg.frame_ms,
            ));
        }
        let out = model.cascaded_encode(&window).unwrap();
        let norm = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!(norm(&out.values) < norm(&center.values));
        assert!(norm(&out.values) > 0.0);
    }

    #[test]
    fn degenerate_window_r0_returns_center() {
        let spec = two_word_spec(200);
        let cfg = AcousticConfig {
            right_context_frames: 0,
            ..quiet_cfg()
        };
        let model = model_for(&spec, &cfg);
        let frame = model.causal_features()[3].clone();
        let out = model.cascaded_encode(std::slice::from_ref(&frame)).unwrap();
        assert_eq!(out.values, frame.values);
    }

    #[test]
    fn wrong_window_length_is_a_contract_violation() {
        let spec = two_word_spec(200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frame = model.causal_features()[0].clone();
        assert!(matches!(
            model.cascaded_encode(&[frame]),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn silence_frame_argmin_is_blank() {
        let spec = two_word_spec(200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frames = model.causal_features();
        let f = frames.iter().find(|f| !f.is_speech).unwrap();
        let post = model.posterior(f, Stream::Causal);
        let blank = model.vocab().blank();
        for tok in (0..post.num_symbols() as u32).map(TokenId) {
            if tok != blank {
                assert!(post.cost(blank) < post.cost(tok), "blank must be argmin");
            }
        }
    }

    #[test]
    fn word_final_frame_argmin_is_the_label() {
        let spec = two_word_spec(200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frames = model.causal_features();
        let final_frame = ((spec.words[0].end_ms - 1) / cfg.frame_ms) as usize;
        let post = model.posterior(&frames[final_frame], Stream::Causal);
        let label = model.vocab().id("hello").unwrap();
        for tok in (0..post.num_symbols() as u32).map(TokenId) {
            if tok != label {
                assert!(post.cost(label) < post.cost(tok), "label must be argmin");
            }
        }
    }

    #[test]
    fn annotated_eos_position_is_below_operating_threshold() {
        // 1200 ms gap annotated at t_sil = 600: a solid anchor.
        let spec = two_word_spec(1200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frames = model.causal_features();
        let peak = model.schedule.anchors[0].peak_frame;
        let post = model.posterior(&frames[peak], Stream::Causal);
        assert!(post.eos_cost() < 3.7, "eos cost {} at peak", post.eos_cost());
        // And it rises with distance from the peak.
        let later = model.posterior(&frames[peak + 4], Stream::Causal);
        assert!(later.eos_cost() > post.eos_cost());
    }

    #[test]
    fn posteriors_normalize_to_unit_mass() {
        let spec = two_word_spec(700);
        let cfg = AcousticConfig::default();
        let model = model_for(&spec, &cfg);
        for f in model.causal_features().iter().step_by(3) {
            for stream in [Stream::Causal, Stream::Cascaded] {
                let post = model.posterior(f, stream);
                assert!((post.probability_mass() - 1.0).abs() < 1e-6);
                for tok in (0..post.num_symbols() as u32).map(TokenId) {
                    assert!(post.cost(tok) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn dummy_frames_zero_and_last() {
        let last = FeatureFrame::new(vec![0.5, -0.5], 9, false, false, 300);
        let zeros = inject_dummy_frames(&last, DummyMode::Zero, 3, 30);
        assert_eq!(zeros.len(), 3);
        for (k, f) in zeros.iter().enumerate() {
            assert_eq!(f.values, vec![0.0, 0.0]);
            assert_eq!(f.frame_index, 10 + k);
            assert_eq!(f.end_ms, 300 + 30 * (k as u64 + 1));
            assert!(f.dummy);
        }
        let copies = inject_dummy_frames(&last, DummyMode::LastFrame, 3, 30);
        for f in &copies {
            assert_eq!(f.values, last.values);
        }
        assert!(inject_dummy_frames(&last, DummyMode::Zero, 0, 30).is_empty());
    }

    #[test]
    fn last_frame_dummies_distort_less_than_zero_dummies() {
        // At a silence boundary, replacing the true right context with
        // last-frame dummies moves the cascaded output less than zero
        // dummies do. This is what separates the two dummy strategies.
        let spec = two_word_spec(1200);
        let cfg = quiet_cfg();
        let model = model_for(&spec, &cfg);
        let frames = model.causal_features();
        // Center on the silence frame right after word 0.
        let center_idx = (spec.words[0].end_ms / cfg.frame_ms) as usize + 1;
        let center = frames[center_idx].clone();
        let real: Vec<FeatureFrame> =
            frames[center_idx..=center_idx + cfg.right_context_frames].to_vec();
        let true_out = model.cascaded_encode(&real).unwrap();

        let with = |mode: DummyMode| {
            let mut window = vec![center.clone()];
            window.extend(model.inject_dummy_frames(&center, mode, cfg.right_context_frames));
            model.cascaded_encode(&window).unwrap()
        };
        let zero_out = with(DummyMode::Zero);
        let last_out = with(DummyMode::LastFrame);
        let d_zero = zero_out.l2_distance(&true_out.values);
        let d_last = last_out.l2_distance(&true_out.values);
        assert!(
            d_last < d_zero,
            "last-frame dummies ({d_last}) must beat zero dummies ({d_zero})"
        );
    }

    #[test]
    fn cascaded_stream_has_lower_mean_ground_truth_cost() {
        let cfg = AcousticConfig::default();
        let corpus_cfg = crate::corpus::CorpusConfig {
            num_utterances: 4,
            long_form_target_ms: 12_000,
            long_form_floor_ms: 5_000,
            ..crate::corpus::CorpusConfig::default()
        };
        let specs = crate::corpus::generate_corpus(&corpus_cfg).unwrap();
        let vocab = Arc::new(Vocab::new(corpus_cfg.all_tokens()));
        let mut causal_sum = 0.0;
        let mut cascaded_sum = 0.0;
        let mut n = 0usize;
        for spec in &specs {
            let ann = annotate_eos(spec, AnnotationParams::default());
            let model =
                AcousticModel::new(spec, &ann, AnnotationParams::default(), &cfg, Arc::clone(&vocab))
                    .unwrap();
            let frames = model.causal_features();
            for (j, w) in spec.words.iter().enumerate() {
                let f = ((w.end_ms - 1) / cfg.frame_ms) as usize;
                let tok = model.schedule.tokens[j];
                causal_sum += model.posterior(&frames[f], Stream::Causal).cost(tok);
                // Clean cascaded view of the same frame.
                let window_end = (f + cfg.right_context_frames).min(frames.len() - 1);
                let casc = model
                    .cascaded_encode_truncated(&frames[f..=window_end])
                    .unwrap();
                cascaded_sum += model.posterior(&casc, Stream::Cascaded).cost(tok);
                n += 1;
            }
        }
        assert!(n > 50);
        assert!(
            cascaded_sum / n as f64 <= causal_sum / n as f64,
            "quality ordering violated: cascaded {} vs causal {}",
            cascaded_sum / n as f64,
            causal_sum / n as f64
        );
    }

    #[test]
    fn posterior_is_deterministic_and_order_free() {
        let spec = two_word_spec(700);
        let cfg = AcousticConfig::default();
        let model = model_for(&spec, &cfg);
        let frames = model.causal_features();
        // Evaluate out of order, then in order: identical values.
        let a = model.posterior(&frames[9], Stream::Cascaded);
        let _ = model.posterior(&frames[3], Stream::Causal);
        let b = model.posterior(&frames[9], Stream::Cascaded);
        assert_eq!(a.costs, b.costs);
    }

    #[test]
    fn noise_ordering_validation() {
        let cfg = AcousticConfig {
            causal_noise: 0.1,
            cascaded_noise: 0.2,
            ..AcousticConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
