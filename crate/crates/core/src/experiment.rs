//! Config-driven experiment runner: segmenter and strategy comparisons, the
//! EOS-threshold x silence-threshold sweep, the oracle-WER study, and error
//! analysis reports, all emitted as plot-ready CSV files.
//!
//! Every output is a pure function of (config, seed): utterances are
//! simulated in id order and floats are written with fixed precision, so
//! reruns are byte-identical.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{generate_corpus, write_corpus_jsonl, CorpusConfig, UtteranceSpec};
use crate::decoder::PathMerge;
use crate::metrics::{
    diff_report, eos_latency, oracle_wer, percentile, segment_lengths_s, wer, LatencyMode,
    ReportRow, RunReport, WerBreakdown, WerPool,
};
use crate::pipeline::{run_utterance, RunConfig, SegmenterKind, Strategy};
use crate::{Error, Result, TokenId, Vocab};

/// Top-level experiment description, loadable from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed; copied into the corpus and acoustic seeds.
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub run: RunConfig,
    pub segmenters: Vec<SegmenterKind>,
    pub strategies: Vec<Strategy>,
    /// EOS threshold grid for the sweep and the oracle study's SL50 match.
    pub eos_thresholds: Vec<f64>,
    /// Silence-length (annotation) threshold grid for the sweep.
    pub silence_thresholds_ms: Vec<u64>,
    /// Utterances rendered in the error-analysis report.
    pub report_utterances: usize,
    /// Relative SL50 mismatch tolerated by the oracle study before flagging.
    pub sl_match_tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 17,
            corpus: CorpusConfig::default(),
            run: RunConfig::default(),
            segmenters: vec![SegmenterKind::Vad, SegmenterKind::E2e],
            strategies: vec![
                Strategy::B1Immediate,
                Strategy::B2Wait,
                Strategy::E1DummyZero,
                Strategy::E2DummyLast,
            ],
            eos_thresholds: vec![1.5, 2.2, 3.0, 3.7, 4.5],
            silence_thresholds_ms: vec![300, 600, 900],
            report_utterances: 6,
            sl_match_tolerance: 0.10,
        }
    }
}

impl ExperimentConfig {
    /// Pushes the master seed into the component seeds.
    pub fn apply_seed(&mut self) {
        self.corpus.seed = self.seed;
        self.run.acoustic.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.run.validate()?;
        if self.segmenters.is_empty()
            || self.strategies.is_empty()
            || self.eos_thresholds.is_empty()
            || self.silence_thresholds_ms.is_empty()
        {
            return Err(Error::config("experiment grids must be non-empty"));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Arc<Vocab> {
        Arc::new(Vocab::new(self.corpus.all_tokens()))
    }

    fn primary_strategy(&self) -> Strategy {
        if self.strategies.contains(&Strategy::E2DummyLast) {
            Strategy::E2DummyLast
        } else {
            self.strategies[0]
        }
    }

    fn primary_segmenter(&self) -> SegmenterKind {
        if self.segmenters.contains(&SegmenterKind::E2e) {
            SegmenterKind::E2e
        } else {
            self.segmenters[0]
        }
    }
}

/// Per-cell overrides on top of the experiment's base run configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellOverrides {
    pub segmenter: Option<SegmenterKind>,
    pub strategy: Option<Strategy>,
    pub eos_threshold: Option<f64>,
    pub t_sil_ms: Option<u64>,
    pub second_pass_merge: Option<PathMerge>,
}

/// Run configuration for one grid cell.
pub fn cell_config(base: &RunConfig, ov: CellOverrides) -> RunConfig {
    let mut cfg = base.clone();
    if let Some(s) = ov.segmenter {
        cfg.pipeline.segmenter = s;
    }
    if let Some(s) = ov.strategy {
        cfg.pipeline.strategy = s;
    }
    if let Some(t) = ov.eos_threshold {
        cfg.beam_first.eos_threshold = t;
        cfg.beam_second.eos_threshold = t;
    }
    if let Some(t) = ov.t_sil_ms {
        cfg.annotation.t_sil_ms = t;
        cfg.annotation.t_sil_hes_ms = 2 * t;
    }
    if let Some(m) = ov.second_pass_merge {
        cfg.beam_second.path_merge = m;
    }
    cfg
}

/// Corpus-level results of one (segmenter, strategy, thresholds) cell.
#[derive(Debug, Clone)]
pub struct CellStats {
    pub wer_1st: WerBreakdown,
    pub wer_2nd: WerBreakdown,
    /// Oracle WER over the 2nd-pass lattices.
    pub ower: WerBreakdown,
    pub segment_lengths_s: Vec<f64>,
    pub eos_all_ms: Vec<i64>,
    pub eos_last_ms: Vec<i64>,
    pub excluded_eos: usize,
    pub algorithmic_ms: u64,
    pub computational_ms: u64,
}

impl CellStats {
    pub fn sl50(&self) -> f64 {
        percentile(&self.segment_lengths_s, 0.5).unwrap_or(0.0)
    }

    pub fn sl90(&self) -> f64 {
        percentile(&self.segment_lengths_s, 0.9).unwrap_or(0.0)
    }

    pub fn eos_p(&self, p: f64, mode: LatencyMode) -> Option<f64> {
        let values: Vec<f64> = match mode {
            LatencyMode::All => self.eos_all_ms.iter().map(|&v| v as f64).collect(),
            LatencyMode::LastOnly => self.eos_last_ms.iter().map(|&v| v as f64).collect(),
        };
        percentile(&values, p).ok()
    }
}

/// Simulates the whole corpus under one configuration, pooling metrics in
/// utterance order.
pub fn simulate_cell(
    specs: &[UtteranceSpec],
    vocab: &Arc<Vocab>,
    cfg: &RunConfig,
) -> Result<CellStats> {
    let mut pool_1st = WerPool::default();
    let mut pool_2nd = WerPool::default();
    let mut pool_oracle = WerPool::default();
    let mut lengths = Vec::new();
    let mut eos_all = Vec::new();
    let mut eos_last = Vec::new();
    let mut excluded = 0usize;

    for spec in specs {
        if spec.words.is_empty() {
            continue;
        }
        let run = run_utterance(spec, cfg, Arc::clone(vocab))?;
        let reference: Vec<TokenId> = spec
            .words
            .iter()
            .map(|w| vocab.id(&w.text).expect("corpus word in vocab"))
            .collect();
        pool_1st.add(&wer(&reference, &run.transcript_1st())?);
        pool_2nd.add(&wer(&reference, &run.transcript_2nd())?);
        pool_oracle.add(&oracle_wer(&run.lattices, &reference)?);
        lengths.extend(segment_lengths_s(&run.segments, spec.total_ms));
        let all = eos_latency(&run.segments, spec, LatencyMode::All);
        excluded += all.excluded;
        eos_all.extend(all.values_ms);
        eos_last.extend(eos_latency(&run.segments, spec, LatencyMode::LastOnly).values_ms);

        // No-retraction check: finalized segments concatenate to the final
        // transcript by construction; keep the guard hot in debug builds.
        debug_assert!({
            let full = run.transcript_2nd();
            let mut prefix = Vec::new();
            run.segments.iter().all(|s| {
                prefix.extend(s.transcript_2nd.iter().copied());
                full.starts_with(&prefix)
            })
        });
    }

    let (alg, comp) = cfg.pipeline.strategy_latencies(cfg.pipeline.strategy);
    Ok(CellStats {
        wer_1st: pool_1st.breakdown()?,
        wer_2nd: pool_2nd.breakdown()?,
        ower: pool_oracle.breakdown()?,
        segment_lengths_s: lengths,
        eos_all_ms: eos_all,
        eos_last_ms: eos_last,
        excluded_eos: excluded,
        algorithmic_ms: alg,
        computational_ms: comp,
    })
}

fn report_row(segmenter: SegmenterKind, stats: &CellStats, with_ower: bool) -> ReportRow {
    // Fixed segmenters have no meaningful EOS latency; leave the cells empty.
    let latency = segmenter != SegmenterKind::Fixed;
    ReportRow {
        segmenter: segmenter.label().to_string(),
        sl50_s: stats.sl50(),
        sl90_s: stats.sl90(),
        eos50_ms: latency
            .then(|| stats.eos_p(0.5, LatencyMode::LastOnly))
            .flatten(),
        eos90_ms: latency
            .then(|| stats.eos_p(0.9, LatencyMode::LastOnly))
            .flatten(),
        wer_2nd: stats.wer_2nd.wer,
        wer_1st: stats.wer_1st.wer,
        ower: with_ower.then_some(stats.ower.wer),
    }
}

fn histogram(values: &[f64], bin_width: f64) -> Vec<(f64, f64, usize)> {
    use std::collections::BTreeMap;
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *bins.entry((v / bin_width).floor() as i64).or_insert(0) += 1;
    }
    bins.into_iter()
        .map(|(b, n)| (b as f64 * bin_width, (b + 1) as f64 * bin_width, n))
        .collect()
}

fn histogram_csv(values: &[f64], bin_width: f64) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, n) in histogram(values, bin_width) {
        out.push_str(&format!("{lo:.3},{hi:.3},{n}\n"));
    }
    out
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents.as_bytes())?;
    Ok(path)
}

/// Segmenter comparison, strategy comparison and distribution data for every
/// (segmenter, strategy) cell. Returns the written file paths.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let specs = generate_corpus(&cfg.corpus)?;
    let vocab = cfg.vocab();
    let mut files = Vec::new();

    std::fs::create_dir_all(out_dir)?;
    let corpus_path = out_dir.join("corpus.jsonl");
    write_corpus_jsonl(&corpus_path, &specs)?;
    files.push(corpus_path);

    let mut cells: Vec<(SegmenterKind, Strategy, CellStats)> = Vec::new();
    for &segmenter in &cfg.segmenters {
        for &strategy in &cfg.strategies {
            let run_cfg = cell_config(
                &cfg.run,
                CellOverrides {
                    segmenter: Some(segmenter),
                    strategy: Some(strategy),
                    ..CellOverrides::default()
                },
            );
            let stats = simulate_cell(&specs, &vocab, &run_cfg)?;
            cells.push((segmenter, strategy, stats));
        }
    }
    let cell = |seg: SegmenterKind, strat: Strategy| {
        cells
            .iter()
            .find(|(s, t, _)| *s == seg && *t == strat)
            .map(|(_, _, c)| c)
            .expect("cell simulated")
    };

    // Segmenter table at the primary strategy.
    let strat = cfg.primary_strategy();
    let report = RunReport {
        rows: cfg
            .segmenters
            .iter()
            .map(|&s| report_row(s, cell(s, strat), false))
            .collect(),
    };
    files.push(write_file(out_dir, "segmenters.csv", &report.to_csv())?);
    files.push(write_file(out_dir, "segmenters.json", &report.to_json()?)?);

    // Strategy table at the primary segmenter.
    let seg = cfg.primary_segmenter();
    let mut strategies_csv = String::from("strategy,wer_2nd,algorithmic_ms,computational_ms\n");
    for &strategy in &cfg.strategies {
        let c = cell(seg, strategy);
        strategies_csv.push_str(&format!(
            "{},{:.4},{},{}\n",
            strategy.label(),
            c.wer_2nd.wer,
            c.algorithmic_ms,
            c.computational_ms
        ));
    }
    files.push(write_file(out_dir, "strategies.csv", &strategies_csv)?);

    // Distribution data per cell.
    for (segmenter, strategy, stats) in &cells {
        let tag = format!("{}_{}", segmenter.label(), strategy.label());
        let eos: Vec<f64> = stats.eos_all_ms.iter().map(|&v| v as f64).collect();
        files.push(write_file(
            out_dir,
            &format!("hist_eos_latency_{tag}.csv"),
            &histogram_csv(&eos, 50.0),
        )?);
        files.push(write_file(
            out_dir,
            &format!("hist_segment_length_{tag}.csv"),
            &histogram_csv(&stats.segment_lengths_s, 0.5),
        )?);
    }
    Ok(files)
}

/// One grid point of the threshold sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub eos_threshold: f64,
    pub silence_length_threshold_ms: u64,
    pub wer_2nd: f64,
    pub sl50_s: f64,
}

/// Simulates the E2E segmenter across the (EOS threshold x silence-length
/// threshold) grid.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let specs = generate_corpus(&cfg.corpus)?;
    let vocab = cfg.vocab();
    let mut rows = Vec::new();
    for &t_sil in &cfg.silence_thresholds_ms {
        for &th in &cfg.eos_thresholds {
            let run_cfg = cell_config(
                &cfg.run,
                CellOverrides {
                    segmenter: Some(SegmenterKind::E2e),
                    strategy: Some(cfg.primary_strategy()),
                    eos_threshold: Some(th),
                    t_sil_ms: Some(t_sil),
                    ..CellOverrides::default()
                },
            );
            let stats = simulate_cell(&specs, &vocab, &run_cfg)?;
            rows.push(SweepRow {
                eos_threshold: th,
                silence_length_threshold_ms: t_sil,
                wer_2nd: stats.wer_2nd.wer,
                sl50_s: stats.sl50(),
            });
        }
    }
    Ok(rows)
}

pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = sweep_rows(cfg)?;
    let mut csv = String::from("eos_threshold,silence_length_threshold_ms,wer_2nd,sl50_s\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.2},{},{:.4},{:.2}\n",
            r.eos_threshold, r.silence_length_threshold_ms, r.wer_2nd, r.sl50_s
        ));
    }
    Ok(vec![write_file(out_dir, "sweep.csv", &csv)?])
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub segmenter: String,
    pub sl50_s: f64,
    pub wer_standard: f64,
    pub ower_standard: f64,
    pub wer_merged: f64,
    pub ower_merged: f64,
}

#[derive(Debug, Clone)]
pub struct OracleStudy {
    pub rows: Vec<OracleRow>,
    /// EOS threshold whose SL50 came closest to the VAD's.
    pub matched_threshold: f64,
    pub vad_sl50: f64,
    pub e2e_sl50: f64,
    /// True when no grid threshold matched the VAD SL50 within tolerance;
    /// the closest achievable point is reported instead.
    pub match_flagged: bool,
}

/// Controlled oracle-WER comparison: pick the EOS threshold whose median
/// segment length matches the VAD's, then compare standard and path-merging
/// beam search for both segmenters.
pub fn oracle_study(cfg: &ExperimentConfig) -> Result<OracleStudy> {
    cfg.validate()?;
    if !cfg.segmenters.contains(&SegmenterKind::Vad)
        || !cfg.segmenters.contains(&SegmenterKind::E2e)
    {
        return Err(Error::config(
            "oracle study needs both the vad and e2e segmenters",
        ));
    }
    let specs = generate_corpus(&cfg.corpus)?;
    let vocab = cfg.vocab();
    let strategy = cfg.primary_strategy();

    let cell = |segmenter: SegmenterKind, th: Option<f64>, merge: PathMerge| -> Result<CellStats> {
        let run_cfg = cell_config(
            &cfg.run,
            CellOverrides {
                segmenter: Some(segmenter),
                strategy: Some(strategy),
                eos_threshold: th,
                second_pass_merge: Some(merge),
                ..CellOverrides::default()
            },
        );
        simulate_cell(&specs, &vocab, &run_cfg)
    };

    let vad_standard = cell(SegmenterKind::Vad, None, PathMerge::None)?;
    let vad_sl50 = vad_standard.sl50();

    // Match the E2E median segment length to the VAD's via the threshold.
    let mut best: Option<(f64, f64, CellStats)> = None;
    for &th in &cfg.eos_thresholds {
        let stats = cell(SegmenterKind::E2e, Some(th), PathMerge::None)?;
        let diff = (stats.sl50() - vad_sl50).abs();
        if best.as_ref().map_or(true, |(d, _, _)| diff < *d) {
            best = Some((diff, th, stats));
        }
    }
    let (diff, matched_threshold, e2e_standard) = best.expect("non-empty threshold grid");
    let e2e_sl50 = e2e_standard.sl50();
    let match_flagged = vad_sl50 > 0.0 && diff / vad_sl50 > cfg.sl_match_tolerance;

    let vad_merged = cell(SegmenterKind::Vad, None, PathMerge::Bigram)?;
    let e2e_merged = cell(SegmenterKind::E2e, Some(matched_threshold), PathMerge::Bigram)?;

    let rows = vec![
        OracleRow {
            segmenter: "vad".to_string(),
            sl50_s: vad_sl50,
            wer_standard: vad_standard.wer_2nd.wer,
            ower_standard: vad_standard.ower.wer,
            wer_merged: vad_merged.wer_2nd.wer,
            ower_merged: vad_merged.ower.wer,
        },
        OracleRow {
            segmenter: "e2e".to_string(),
            sl50_s: e2e_sl50,
            wer_standard: e2e_standard.wer_2nd.wer,
            ower_standard: e2e_standard.ower.wer,
            wer_merged: e2e_merged.wer_2nd.wer,
            ower_merged: e2e_merged.ower.wer,
        },
    ];
    Ok(OracleStudy {
        rows,
        matched_threshold,
        vad_sl50,
        e2e_sl50,
        match_flagged,
    })
}

pub fn run_oracle_study(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let study = oracle_study(cfg)?;
    let mut csv =
        String::from("segmenter,sl50,wer_standard,ower_standard,wer_merged,ower_merged\n");
    for r in &study.rows {
        csv.push_str(&format!(
            "{},{:.2},{:.4},{:.4},{:.4},{:.4}\n",
            r.segmenter, r.sl50_s, r.wer_standard, r.ower_standard, r.wer_merged, r.ower_merged
        ));
    }
    let mut files = vec![write_file(out_dir, "oracle.csv", &csv)?];
    let notes = format!(
        "matched_eos_threshold={:.2}\nvad_sl50={:.2}\ne2e_sl50={:.2}\nsl50_match_within_tolerance={}\n",
        study.matched_threshold,
        study.vad_sl50,
        study.e2e_sl50,
        !study.match_flagged
    );
    files.push(write_file(out_dir, "oracle_notes.txt", &notes)?);
    Ok(files)
}

/// Error-analysis report: per-utterance diff of the VAD and E2E transcripts
/// against the reference, with EOS positions marked.
pub fn run_error_analysis(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let specs = generate_corpus(&cfg.corpus)?;
    let vocab = cfg.vocab();
    let strategy = cfg.primary_strategy();
    let mut out = String::new();
    for spec in specs.iter().take(cfg.report_utterances) {
        if spec.words.is_empty() {
            continue;
        }
        let mut runs = Vec::new();
        for segmenter in [SegmenterKind::Vad, SegmenterKind::E2e] {
            let run_cfg = cell_config(
                &cfg.run,
                CellOverrides {
                    segmenter: Some(segmenter),
                    strategy: Some(strategy),
                    ..CellOverrides::default()
                },
            );
            let run = run_utterance(spec, &run_cfg, Arc::clone(&vocab))?;
            let transcript = run
                .transcript_2nd_marked()
                .into_iter()
                .map(|t| match t {
                    Some(tok) => {
                        crate::corpus::TranscriptToken::Word(vocab.text(tok).to_string())
                    }
                    None => crate::corpus::TranscriptToken::Eos,
                })
                .collect();
            runs.push((segmenter.label().to_string(), transcript));
        }
        out.push_str(&format!("== {} ==\n", spec.id));
        out.push_str(&diff_report(&spec.word_texts(), &runs));
        out.push('\n');
    }
    Ok(vec![write_file(out_dir, "report.txt", &out)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small corpus so unit tests stay fast.
    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            corpus: CorpusConfig {
                num_utterances: 3,
                long_form_floor_ms: 5_000,
                long_form_target_ms: 9_000,
                ..CorpusConfig::default()
            },
            eos_thresholds: vec![2.2, 3.7],
            silence_thresholds_ms: vec![300, 600],
            report_utterances: 2,
            ..ExperimentConfig::default()
        };
        cfg.apply_seed();
        cfg
    }

    fn read(path: &Path) -> String {
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn experiment_emits_the_documented_shapes() {
        let mut cfg = tiny_config();
        cfg.segmenters = vec![SegmenterKind::Vad, SegmenterKind::E2e];
        cfg.strategies = vec![Strategy::E2DummyLast];
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir.path()).unwrap();

        let segmenters = read(&dir.path().join("segmenters.csv"));
        let mut lines = segmenters.lines();
        assert_eq!(lines.next().unwrap(), RunReport::CSV_HEADER);
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert_eq!(row.split(',').count(), 8);
        }
        assert!(dir.path().join("hist_eos_latency_vad_e2.csv").exists());
        assert!(dir.path().join("hist_segment_length_e2e_e2.csv").exists());
        assert!(dir.path().join("corpus.jsonl").exists());
    }

    #[test]
    fn strategy_table_reports_the_latency_constants() {
        let mut cfg = tiny_config();
        cfg.segmenters = vec![SegmenterKind::E2e];
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir.path()).unwrap();
        let strategies = read(&dir.path().join("strategies.csv"));
        let algs: Vec<&str> = strategies
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap())
            .collect();
        assert_eq!(algs, vec!["0", "900", "0", "0"]);
        let comps: Vec<&str> = strategies
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap())
            .collect();
        assert_eq!(comps, vec!["0", "900", "208", "208"]);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let mut cfg = tiny_config();
        cfg.segmenters = vec![SegmenterKind::E2e];
        cfg.strategies = vec![Strategy::E2DummyLast, Strategy::B1Immediate];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = run_experiment(&cfg, d1.path()).unwrap();
        let f2 = run_experiment(&cfg, d2.path()).unwrap();
        assert_eq!(f1.len(), f2.len());
        for (a, b) in f1.iter().zip(&f2) {
            assert_eq!(
                std::fs::read(a).unwrap(),
                std::fs::read(b).unwrap(),
                "{a:?} differs"
            );
        }
    }

    #[test]
    fn sweep_has_one_row_per_grid_point_and_monotone_sl50() {
        let cfg = tiny_config();
        let rows = sweep_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        // Within one silence-threshold curve, SL50 does not grow as the
        // threshold loosens (more EOS firing means shorter segments).
        for t in &cfg.silence_thresholds_ms {
            let curve: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.silence_length_threshold_ms == *t)
                .collect();
            for pair in curve.windows(2) {
                assert!(
                    pair[1].sl50_s <= pair[0].sl50_s + 1e-9,
                    "sl50 must be non-increasing in the eos threshold"
                );
            }
        }
    }

    #[test]
    fn zero_threshold_never_fires() {
        let mut cfg = tiny_config();
        cfg.eos_thresholds = vec![0.0];
        cfg.silence_thresholds_ms = vec![600];
        // percentile(p=0) is invalid, so a 0.0 threshold means no EOS at
        // all: every utterance collapses to the flush segment.
        let specs = generate_corpus(&cfg.corpus).unwrap();
        let vocab = cfg.vocab();
        let run_cfg = cell_config(
            &cfg.run,
            CellOverrides {
                segmenter: Some(SegmenterKind::E2e),
                eos_threshold: Some(0.0),
                ..CellOverrides::default()
            },
        );
        let stats = simulate_cell(&specs, &vocab, &run_cfg).unwrap();
        assert!(stats.eos_all_ms.is_empty());
        assert_eq!(stats.segment_lengths_s.len(), specs.len());
    }

    #[test]
    fn oracle_study_shape_and_dominance() {
        let mut cfg = tiny_config();
        cfg.eos_thresholds = vec![2.2, 3.7, 4.5];
        let study = oracle_study(&cfg).unwrap();
        assert_eq!(study.rows.len(), 2);
        for row in &study.rows {
            assert!(row.ower_standard <= row.wer_standard + 1e-9);
            assert!(row.ower_merged <= row.wer_merged + 1e-9);
        }
        let dir = tempfile::tempdir().unwrap();
        run_oracle_study(&cfg, dir.path()).unwrap();
        let csv = read(&dir.path().join("oracle.csv"));
        assert_eq!(
            csv.lines().next().unwrap(),
            "segmenter,sl50,wer_standard,ower_standard,wer_merged,ower_merged"
        );
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn error_analysis_writes_marked_diffs() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        run_error_analysis(&cfg, dir.path()).unwrap();
        let report = read(&dir.path().join("report.txt"));
        assert!(report.contains("ref :"));
        assert!(report.contains("vad :"));
        assert!(report.contains("e2e :"));
    }
}
