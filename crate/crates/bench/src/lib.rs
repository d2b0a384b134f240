//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use segstream_core::corpus::{generate_corpus, CorpusConfig, UtteranceSpec};
use segstream_core::pipeline::RunConfig;
use segstream_core::Vocab;

/// One seeded long-form utterance plus the matching configs.
pub fn fixture() -> (UtteranceSpec, RunConfig, Arc<Vocab>) {
    let corpus_cfg = CorpusConfig {
        num_utterances: 1,
        long_form_floor_ms: 20_000,
        long_form_target_ms: 30_000,
        ..CorpusConfig::default()
    };
    let spec = generate_corpus(&corpus_cfg)
        .expect("valid corpus config")
        .remove(0);
    let vocab = Arc::new(Vocab::new(corpus_cfg.all_tokens()));
    (spec, RunConfig::default(), vocab)
}
