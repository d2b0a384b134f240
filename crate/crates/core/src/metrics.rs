//! Evaluation: WER with error breakdown, lattice oracle WER, EOS latency and
//! segment-length statistics, percentiles, and side-by-side diff reports.

use serde::{Deserialize, Serialize};

use crate::corpus::{TranscriptToken, UtteranceSpec};
use crate::decoder::{Lattice, LatticeArc};
use crate::pipeline::SegmentResult;
use crate::{Error, Result, TokenId};

/// Word error counts. `wer = (S + I + D) / ref_words`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_words: usize,
    pub wer: f64,
}

impl WerBreakdown {
    pub fn from_counts(s: usize, i: usize, d: usize, ref_words: usize) -> Result<Self> {
        if ref_words == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(WerBreakdown {
            substitutions: s,
            insertions: i,
            deletions: d,
            ref_words,
            wer: (s + i + d) as f64 / ref_words as f64,
        })
    }

    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Accumulates pooled corpus-level counts (total errors / total ref words).
#[derive(Debug, Clone, Copy, Default)]
pub struct WerPool {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_words: usize,
}

impl WerPool {
    pub fn add(&mut self, b: &WerBreakdown) {
        self.substitutions += b.substitutions;
        self.insertions += b.insertions;
        self.deletions += b.deletions;
        self.ref_words += b.ref_words;
    }

    pub fn breakdown(&self) -> Result<WerBreakdown> {
        WerBreakdown::from_counts(
            self.substitutions,
            self.insertions,
            self.deletions,
            self.ref_words,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    Match,
    Substitution,
    Insertion,
    Deletion,
}

/// Minimal-edit alignment with a deterministic tie break: at equal cost the
/// backtrace prefers substitution over insertion over deletion.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<AlignOp> {
    let m = reference.len();
    let n = hypothesis.len();
    let width = n + 1;
    let mut dist = vec![0usize; (m + 1) * width];
    for j in 0..=n {
        dist[j] = j;
    }
    for i in 1..=m {
        dist[i * width] = i;
        for j in 1..=n {
            let sub = dist[(i - 1) * width + j - 1]
                + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = dist[i * width + j - 1] + 1;
            let del = dist[(i - 1) * width + j] + 1;
            dist[i * width + j] = sub.min(ins).min(del);
        }
    }
    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dist[(i - 1) * width + j - 1] + cost == here {
                ops.push(if cost == 0 {
                    AlignOp::Match
                } else {
                    AlignOp::Substitution
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && dist[i * width + j - 1] + 1 == here {
            ops.push(AlignOp::Insertion);
            j -= 1;
            continue;
        }
        ops.push(AlignOp::Deletion);
        i -= 1;
    }
    ops.reverse();
    ops
}

/// Word error rate of `hypothesis` against a non-empty `reference`.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<WerBreakdown> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let mut s = 0;
    let mut i = 0;
    let mut d = 0;
    for op in align(reference, hypothesis) {
        match op {
            AlignOp::Match => {}
            AlignOp::Substitution => s += 1,
            AlignOp::Insertion => i += 1,
            AlignOp::Deletion => d += 1,
        }
    }
    WerBreakdown::from_counts(s, i, d, reference.len())
}

const INF: usize = usize::MAX / 4;

/// Minimum edit distance achievable by any combination of paths through the
/// per-segment lattices, plus the path achieving it.
///
/// Dynamic program over (lattice node, reference position); lattice arcs
/// point from older to newer node ids, so a single pass in id order suffices.
/// A lattice without end states is treated as an empty-hypothesis segment.
pub fn oracle_wer(lattices: &[Lattice], reference: &[TokenId]) -> Result<WerBreakdown> {
    let path = oracle_best_path(lattices, reference)?;
    wer(reference, &path)
}

/// The token path over all segments that achieves the oracle edit distance.
pub fn oracle_best_path(lattices: &[Lattice], reference: &[TokenId]) -> Result<Vec<TokenId>> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let m = reference.len();
    // carry[p]: best cost consuming p reference words so far, plus the
    // emitted tokens that achieved it.
    let mut carry: Vec<(usize, Vec<TokenId>)> = (0..=m).map(|p| (p, Vec::new())).collect();

    for lat in lattices {
        if lat.ends().is_empty() {
            continue; // empty-hypothesis segment
        }
        let nodes = lat.num_nodes();
        let width = m + 1;
        let mut dist = vec![INF; nodes * width];
        let mut trace: Vec<Option<(usize, Vec<TokenId>)>> = vec![None; nodes * width];
        let start = lat.start();
        for p in 0..=m {
            dist[start * width + p] = carry[p].0;
            trace[start * width + p] = Some((p, carry[p].1.clone()));
        }
        // Group arcs by source, preserving insertion order.
        let mut out_arcs: Vec<Vec<&LatticeArc>> = vec![Vec::new(); nodes];
        for a in lat.arcs() {
            out_arcs[a.from].push(a);
        }
        for u in 0..nodes {
            // Deletion closure at u: skip reference words in place.
            for p in 0..m {
                let cur = dist[u * width + p];
                if cur < INF && cur + 1 < dist[u * width + p + 1] {
                    dist[u * width + p + 1] = cur + 1;
                    trace[u * width + p + 1] = trace[u * width + p].clone();
                }
            }
            for arc in &out_arcs[u] {
                let v = arc.to;
                for p in 0..=m {
                    let cur = dist[u * width + p];
                    if cur >= INF {
                        continue;
                    }
                    match arc.token {
                        None => {
                            if cur < dist[v * width + p] {
                                dist[v * width + p] = cur;
                                trace[v * width + p] = trace[u * width + p].clone();
                            }
                        }
                        Some(tok) => {
                            // Insertion: emit the token, reference stands.
                            if cur + 1 < dist[v * width + p] {
                                let mut t = trace[u * width + p].clone().unwrap();
                                t.1.push(tok);
                                dist[v * width + p] = cur + 1;
                                trace[v * width + p] = Some(t);
                            }
                            // Match/substitution: emit and consume.
                            if p < m {
                                let step = usize::from(tok != reference[p]);
                                if cur + step < dist[v * width + p + 1] {
                                    let mut t = trace[u * width + p].clone().unwrap();
                                    t.1.push(tok);
                                    dist[v * width + p + 1] = cur + step;
                                    trace[v * width + p + 1] = Some(t);
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut next: Vec<(usize, Vec<TokenId>)> = Vec::with_capacity(m + 1);
        for p in 0..=m {
            let mut best = (INF, Vec::new());
            for &e in lat.ends() {
                if dist[e * width + p] < best.0 {
                    best = (
                        dist[e * width + p],
                        trace[e * width + p].clone().unwrap().1,
                    );
                }
            }
            next.push(best);
        }
        carry = next;
    }

    // Trailing reference deletions.
    for p in 0..m {
        if carry[p].0 + 1 < carry[p + 1].0 {
            carry[p + 1] = (carry[p].0 + 1, carry[p].1.clone());
        }
    }
    Ok(carry[m].1.clone())
}

/// Nearest-rank percentile: sort ascending, take the element at rank
/// ceil(p * n).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("percentile of an empty list"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::contract("percentile fraction must be in (0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = (p * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// Latency sample with its 50th and 90th percentiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyStats {
    pub values_ms: Vec<f64>,
    pub p50: f64,
    pub p90: f64,
}

impl LatencyStats {
    pub fn from_values(values_ms: Vec<f64>) -> Result<Self> {
        let p50 = percentile(&values_ms, 0.5)?;
        let p90 = percentile(&values_ms, 0.9)?;
        Ok(LatencyStats {
            values_ms,
            p50,
            p90,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyMode {
    /// Only the utterance's final EOS (main-table convention).
    LastOnly,
    /// Every EOS (distribution convention).
    All,
}

/// Per-utterance EOS latencies: EOS timestamp minus the end of the last
/// ground-truth word before it. Negative values (EOS fired before the
/// end-of-speech) are retained.
#[derive(Debug, Clone, Default)]
pub struct EosLatencies {
    pub values_ms: Vec<i64>,
    /// EOS events with no preceding speech, excluded from the sample.
    pub excluded: usize,
}

pub fn eos_latency(
    segments: &[SegmentResult],
    spec: &UtteranceSpec,
    mode: LatencyMode,
) -> EosLatencies {
    let ends: Vec<u64> = spec.words.iter().map(|w| w.end_ms).collect();
    let mut out = EosLatencies::default();
    let eos_segments: Vec<&SegmentResult> =
        segments.iter().filter(|s| s.eos_timestamp_ms.is_some()).collect();
    let selected: &[&SegmentResult] = match mode {
        LatencyMode::All => &eos_segments,
        LatencyMode::LastOnly => {
            if eos_segments.is_empty() {
                &[]
            } else {
                std::slice::from_ref(&eos_segments[eos_segments.len() - 1])
            }
        }
    };
    for seg in selected {
        let ts = seg.eos_timestamp_ms.unwrap();
        let preceding = ends.partition_point(|&e| e <= ts);
        if preceding == 0 {
            out.excluded += 1;
        } else {
            out.values_ms.push(ts as i64 - ends[preceding - 1] as i64);
        }
    }
    out
}

/// Durations of the produced segments in seconds, including the terminal
/// flush segment.
pub fn segment_lengths_s(segments: &[SegmentResult], total_ms: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(segments.len());
    let mut prev = 0u64;
    for seg in segments {
        let end = seg.eos_timestamp_ms.unwrap_or(total_ms);
        out.push(end.saturating_sub(prev) as f64 / 1000.0);
        prev = end.max(prev);
    }
    out
}

/// One row of the segmenter comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub segmenter: String,
    pub sl50_s: f64,
    pub sl90_s: f64,
    pub eos50_ms: Option<f64>,
    pub eos90_ms: Option<f64>,
    pub wer_2nd: f64,
    pub wer_1st: f64,
    pub ower: Option<f64>,
}

/// Corpus-level report, one row per segmenter configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub const CSV_HEADER: &'static str =
        "segmenter,sl50_s,sl90_s,eos50_ms,eos90_ms,wer_2nd,wer_1st,ower";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let eos50 = r.eos50_ms.map(|v| format!("{v:.0}")).unwrap_or_default();
            let eos90 = r.eos90_ms.map(|v| format!("{v:.0}")).unwrap_or_default();
            let ower = r.ower.map(|v| format!("{v:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.2},{:.2},{},{},{:.4},{:.4},{}\n",
                r.segmenter, r.sl50_s, r.sl90_s, eos50, eos90, r.wer_2nd, r.wer_1st, ower
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Side-by-side error report: the reference line, then one line per run with
/// EOS positions, substitutions rendered as `ref=>hyp`, deletions as
/// `-(word)` and insertions as `+(word)`.
pub fn diff_report(reference: &[String], runs: &[(String, Vec<TranscriptToken>)]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "ref : {}", reference.join(" ")).unwrap();
    for (label, transcript) in runs {
        let hyp: Vec<&str> = transcript
            .iter()
            .filter_map(|t| match t {
                TranscriptToken::Word(w) => Some(w.as_str()),
                TranscriptToken::Eos => None,
            })
            .collect();
        // EOS markers follow the hyp word at this index (usize::MAX: leading).
        let mut eos_after = vec![0usize; hyp.len() + 1];
        {
            let mut wi = 0usize;
            for t in transcript {
                match t {
                    TranscriptToken::Word(_) => wi += 1,
                    TranscriptToken::Eos => eos_after[wi] += 1,
                }
            }
        }
        let refs: Vec<&str> = reference.iter().map(|s| s.as_str()).collect();
        let ops = align(&refs, &hyp);
        let mut pieces: Vec<String> = Vec::new();
        for _ in 0..eos_after[0] {
            pieces.push("<eos>".to_string());
        }
        let (mut i, mut j) = (0usize, 0usize);
        for op in ops {
            match op {
                AlignOp::Match => {
                    pieces.push(hyp[j].to_string());
                    i += 1;
                    j += 1;
                }
                AlignOp::Substitution => {
                    pieces.push(format!("{}=>{}", refs[i], hyp[j]));
                    i += 1;
                    j += 1;
                }
                AlignOp::Insertion => {
                    pieces.push(format!("+({})", hyp[j]));
                    j += 1;
                }
                AlignOp::Deletion => {
                    pieces.push(format!("-({})", refs[i]));
                    i += 1;
                }
            }
            if op != AlignOp::Deletion {
                for _ in 0..eos_after[j] {
                    pieces.push("<eos>".to_string());
                }
            }
        }
        writeln!(out, "{label:4}: {}", pieces.join(" ")).unwrap();
    }
    out
}
