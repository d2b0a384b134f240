//! Deterministic synthetic corpus: scripted utterances with ground-truth word
//! timings, hesitations and silences, plus the weakly-supervised EOS
//! transcript annotation used to train (here: parameterize) the segmenter.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::hashing::mix;
use crate::{Error, Result};

/// One scripted word with its ground-truth span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
    /// True for filler words ("uh", "um"); raises the silence threshold for
    /// EOS annotation at the following gap.
    pub hesitation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    ShortQuery,
    LongForm,
}

/// Scripted ground-truth utterance; the source of forced alignments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceSpec {
    pub id: String,
    pub domain_kind: DomainKind,
    pub total_ms: u64,
    pub words: Vec<Word>,
}

impl UtteranceSpec {
    /// Checks the structural invariants: spans ordered, non-overlapping,
    /// inside the timeline.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0u64;
        for w in &self.words {
            if w.start_ms >= w.end_ms {
                return Err(Error::config(format!(
                    "word '{}' has empty span [{}, {})",
                    w.text, w.start_ms, w.end_ms
                )));
            }
            if w.start_ms < prev_end {
                return Err(Error::config(format!(
                    "word '{}' overlaps or precedes its predecessor",
                    w.text
                )));
            }
            prev_end = w.end_ms;
        }
        if prev_end > self.total_ms {
            return Err(Error::config("last word ends beyond total_ms".to_string()));
        }
        Ok(())
    }

    /// End-of-speech of the utterance: the last word's end, if any.
    pub fn end_of_speech_ms(&self) -> Option<u64> {
        self.words.last().map(|w| w.end_ms)
    }

    pub fn word_texts(&self) -> Vec<String> {
        self.words.iter().map(|w| w.text.clone()).collect()
    }
}

/// Transcript element: a word or an inserted EOS marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptToken {
    Word(String),
    Eos,
}

/// Target transcript augmented with EOS tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedTranscript {
    pub tokens: Vec<TranscriptToken>,
}

impl AnnotatedTranscript {
    /// Word sequence with EOS markers stripped.
    pub fn words(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                TranscriptToken::Word(w) => Some(w.as_str()),
                TranscriptToken::Eos => None,
            })
            .collect()
    }

    /// Number of EOS markers not at the end of the transcript.
    pub fn mid_eos_count(&self) -> usize {
        if self.tokens.is_empty() {
            return 0;
        }
        self.tokens[..self.tokens.len() - 1]
            .iter()
            .filter(|t| matches!(t, TranscriptToken::Eos))
            .count()
    }

    /// Indices (into the word sequence) after which an EOS marker sits.
    /// An EOS after word `i` yields `i`; a leading EOS would yield nothing
    /// and cannot be produced by annotation.
    pub fn eos_after_word_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut word_idx = 0usize;
        for t in &self.tokens {
            match t {
                TranscriptToken::Word(_) => word_idx += 1,
                TranscriptToken::Eos => {
                    if word_idx > 0 {
                        out.push(word_idx - 1);
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self, spec: &UtteranceSpec) -> Result<()> {
        let words = self.words();
        let expected: Vec<&str> = spec.words.iter().map(|w| w.text.as_str()).collect();
        if words != expected {
            return Err(Error::contract(
                "stripping EOS does not recover the word sequence",
            ));
        }
        for pair in self.tokens.windows(2) {
            if matches!(pair[0], TranscriptToken::Eos) && matches!(pair[1], TranscriptToken::Eos) {
                return Err(Error::contract("two consecutive EOS markers"));
            }
        }
        Ok(())
    }
}

/// Silence-length thresholds of the EOS annotation scheme.
///
/// A gap between two words receives an EOS when it exceeds `t_sil_ms` and the
/// left word is not a hesitation, or exceeds `t_sil_hes_ms` after a
/// hesitation. The hesitation threshold is unquantified upstream; default is
/// twice the plain one, preserving the ordering `t_sil_hes >= t_sil`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnnotationParams {
    pub t_sil_ms: u64,
    pub t_sil_hes_ms: u64,
}

impl Default for AnnotationParams {
    fn default() -> Self {
        AnnotationParams {
            t_sil_ms: 600,
            t_sil_hes_ms: 1200,
        }
    }
}

/// Generation parameters for the synthetic corpus.
///
/// Inter-word gaps are a three-way mixture: flowing speech gaps in
/// `[gap_min_ms, gap_max_ms]`, mid-utterance pauses in
/// `[pause_min_ms, pause_max_ms]` with probability `pause_prob`, and longer
/// breaks in `[long_pause_min_ms, long_pause_max_ms]` with probability
/// `long_pause_prob`. Every gap stays within `[gap_min_ms, long_pause_max_ms]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub num_utterances: usize,
    pub vocab: Vec<String>,
    pub filler_vocab: Vec<String>,
    pub word_min_ms: u64,
    pub word_max_ms: u64,
    pub gap_min_ms: u64,
    pub gap_max_ms: u64,
    pub pause_prob: f64,
    pub pause_min_ms: u64,
    pub pause_max_ms: u64,
    pub long_pause_prob: f64,
    pub long_pause_min_ms: u64,
    pub long_pause_max_ms: u64,
    pub hesitation_prob: f64,
    pub short_query_fraction: f64,
    pub short_query_cap_ms: u64,
    pub long_form_floor_ms: u64,
    pub long_form_target_ms: u64,
    pub tail_silence_ms: u64,
}

const DEFAULT_VOCAB: &[&str] = &[
    "about", "after", "again", "all", "and", "around", "back", "because", "before", "button",
    "corner", "could", "cut", "down", "edge", "every", "first", "forth", "get", "go", "going",
    "have", "here", "inch", "increments", "just", "like", "line", "little", "make", "more",
    "next", "now", "other", "over", "piece", "put", "right", "same", "side", "so", "something",
    "stretch", "then", "there", "this", "time", "turn", "up", "way", "with", "you",
];

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 17,
            num_utterances: 200,
            vocab: DEFAULT_VOCAB.iter().map(|s| s.to_string()).collect(),
            filler_vocab: vec!["uh".to_string(), "um".to_string()],
            word_min_ms: 150,
            word_max_ms: 400,
            gap_min_ms: 60,
            gap_max_ms: 180,
            pause_prob: 0.07,
            pause_min_ms: 250,
            pause_max_ms: 420,
            long_pause_prob: 0.02,
            long_pause_min_ms: 700,
            long_pause_max_ms: 1300,
            hesitation_prob: 0.05,
            short_query_fraction: 0.0,
            short_query_cap_ms: 5_000,
            long_form_floor_ms: 30_000,
            long_form_target_ms: 60_000,
            tail_silence_ms: 450,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab.is_empty() {
            return Err(Error::config("corpus vocab is empty"));
        }
        for (name, p) in [
            ("pause_prob", self.pause_prob),
            ("long_pause_prob", self.long_pause_prob),
            ("hesitation_prob", self.hesitation_prob),
            ("short_query_fraction", self.short_query_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.pause_prob + self.long_pause_prob > 1.0 {
            return Err(Error::config("pause probabilities sum above 1"));
        }
        if self.word_min_ms == 0 || self.word_min_ms > self.word_max_ms {
            return Err(Error::config("word duration bounds are inverted or zero"));
        }
        if self.gap_min_ms > self.gap_max_ms
            || self.pause_min_ms > self.pause_max_ms
            || self.long_pause_min_ms > self.long_pause_max_ms
        {
            return Err(Error::config("gap bounds are inverted"));
        }
        if self.pause_min_ms < self.gap_min_ms || self.long_pause_min_ms < self.gap_min_ms {
            return Err(Error::config(
                "pause ranges must not go below gap_min_ms (it is the global floor)",
            ));
        }
        if self.long_form_floor_ms > self.long_form_target_ms {
            return Err(Error::config("long_form floor above target"));
        }
        Ok(())
    }

    /// All decodable word texts: vocabulary plus fillers.
    pub fn all_tokens(&self) -> Vec<String> {
        let mut all = self.vocab.clone();
        all.extend(self.filler_vocab.iter().cloned());
        all
    }
}

fn draw_range(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    if lo >= hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn draw_gap(rng: &mut ChaCha8Rng, cfg: &CorpusConfig) -> u64 {
    let u: f64 = rng.gen();
    if u < cfg.long_pause_prob {
        draw_range(rng, cfg.long_pause_min_ms, cfg.long_pause_max_ms)
    } else if u < cfg.long_pause_prob + cfg.pause_prob {
        draw_range(rng, cfg.pause_min_ms, cfg.pause_max_ms)
    } else {
        draw_range(rng, cfg.gap_min_ms, cfg.gap_max_ms)
    }
}

fn generate_utterance(cfg: &CorpusConfig, index: usize) -> UtteranceSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, 0x636f7270, index as u64]));
    let short = rng.gen::<f64>() < cfg.short_query_fraction;
    // Speech must end early enough that the tail fits under the cap.
    let speech_limit = if short {
        cfg.short_query_cap_ms.saturating_sub(cfg.tail_silence_ms)
    } else {
        cfg.long_form_target_ms.saturating_sub(cfg.tail_silence_ms)
    };

    let mut words = Vec::new();
    let mut cursor = draw_range(&mut rng, cfg.gap_min_ms, cfg.gap_max_ms);
    loop {
        let hesitation = rng.gen::<f64>() < cfg.hesitation_prob && !cfg.filler_vocab.is_empty();
        let text = if hesitation {
            cfg.filler_vocab[rng.gen_range(0..cfg.filler_vocab.len())].clone()
        } else {
            cfg.vocab[rng.gen_range(0..cfg.vocab.len())].clone()
        };
        let dur = draw_range(&mut rng, cfg.word_min_ms, cfg.word_max_ms);
        if cursor + dur > speech_limit {
            break;
        }
        words.push(Word {
            text,
            start_ms: cursor,
            end_ms: cursor + dur,
            hesitation,
        });
        cursor = cursor + dur + draw_gap(&mut rng, cfg);
        if short && words.len() >= 4 && rng.gen::<f64>() < 0.35 {
            break;
        }
    }

    let speech_end = words.last().map(|w| w.end_ms).unwrap_or(0);
    let mut total_ms = speech_end + cfg.tail_silence_ms;
    if short {
        total_ms = total_ms.min(cfg.short_query_cap_ms);
    } else {
        total_ms = total_ms.max(cfg.long_form_floor_ms);
    }

    UtteranceSpec {
        id: format!("utt-{index:05}"),
        domain_kind: if short {
            DomainKind::ShortQuery
        } else {
            DomainKind::LongForm
        },
        total_ms,
        words,
    }
}

/// Generates the corpus. Deterministic in `config` (including the seed); each
/// utterance draws from its own stream keyed by (seed, index), so results do
/// not depend on generation order.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<UtteranceSpec>> {
    config.validate()?;
    let specs: Vec<UtteranceSpec> = (0..config.num_utterances)
        .map(|i| generate_utterance(config, i))
        .collect();
    for s in &specs {
        debug_assert!(s.validate().is_ok(), "generated spec violates invariants");
    }
    Ok(specs)
}

/// Applies the EOS annotation scheme.
///
/// Short-query utterances get exactly one EOS appended at the end. Long-form
/// utterances get an EOS between words `i` and `i+1` iff the gap exceeds
/// `t_sil_ms` (plain) or `t_sil_hes_ms` (after a hesitation). Gap is measured
/// as `next.start_ms - prev.end_ms`.
pub fn annotate_eos(spec: &UtteranceSpec, params: AnnotationParams) -> AnnotatedTranscript {
    assert!(
        params.t_sil_ms > 0 && params.t_sil_hes_ms >= params.t_sil_ms,
        "annotation requires t_sil_hes_ms >= t_sil_ms > 0"
    );
    let mut tokens = Vec::with_capacity(spec.words.len() + 4);
    for (i, w) in spec.words.iter().enumerate() {
        tokens.push(TranscriptToken::Word(w.text.clone()));
        if spec.domain_kind == DomainKind::LongForm {
            if let Some(next) = spec.words.get(i + 1) {
                let gap = next.start_ms.saturating_sub(w.end_ms);
                let threshold = if w.hesitation {
                    params.t_sil_hes_ms
                } else {
                    params.t_sil_ms
                };
                if gap > threshold {
                    tokens.push(TranscriptToken::Eos);
                }
            }
        }
    }
    if spec.domain_kind == DomainKind::ShortQuery && !spec.words.is_empty() {
        tokens.push(TranscriptToken::Eos);
    }
    AnnotatedTranscript { tokens }
}

/// One entry of a forced alignment: word index and its ground-truth span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub word_index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// The synthetic corpus makes forced alignment exact: the ground-truth
/// timings are returned verbatim.
pub fn forced_alignment(spec: &UtteranceSpec) -> Vec<AlignedWord> {
    spec.words
        .iter()
        .enumerate()
        .map(|(i, w)| AlignedWord {
            word_index: i,
            start_ms: w.start_ms,
            end_ms: w.end_ms,
        })
        .collect()
}

/// Writes the corpus in the line-delimited JSON format documented in
/// `docs/formats.md` (one utterance record per line).
pub fn write_corpus_jsonl(path: &Path, specs: &[UtteranceSpec]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in specs {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a corpus written by [`write_corpus_jsonl`].
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<UtteranceSpec>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut specs = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: UtteranceSpec = serde_json::from_str(&line)?;
        spec.validate()?;
        specs.push(spec);
    }
    Ok(specs)
}
