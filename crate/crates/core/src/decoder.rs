//! Frame-synchronous beam search: breadth-first label expansion with cost
//! cutoff and depth limit, beam pruning, optional 2-gram path merging into a
//! lattice, EOS threshold checks and finalization with state carryover.
//!
//! Determinism: ties in cost are broken by lexicographic token order, token
//! expansion iterates in id order, and lattice node ids are assigned in
//! creation order (every arc points from an older node to a newer one, so
//! the lattice is acyclic by construction).

use std::collections::HashMap;

use crate::acoustics::PosteriorFrame;
use crate::vad::EosSignal;
use crate::{Error, Result, TokenId};

/// How hypotheses sharing an n-gram context are recombined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMerge {
    None,
    /// Merge hypotheses whose last token (order-2 language-model state)
    /// coincides; alternatives are recorded in the lattice.
    Bigram,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Drop hypotheses more than this far above the best cost.
    pub pruning_threshold: f64,
    /// Single-token expansions at or above this cost are not taken.
    pub expansion_cutoff: f64,
    /// Maximum non-blank expansions per frame.
    pub max_expansion_depth: usize,
    pub path_merge: PathMerge,
    /// EOS fires when the frame's EOS cost drops below this.
    pub eos_threshold: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 4,
            pruning_threshold: 5.0,
            expansion_cutoff: 5.0,
            max_expansion_depth: 10,
            path_merge: PathMerge::None,
            eos_threshold: 3.7,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0
            || self.pruning_threshold <= 0.0
            || self.expansion_cutoff <= 0.0
            || self.max_expansion_depth == 0
            || self.eos_threshold < 0.0
        {
            return Err(Error::config("beam parameters must be positive"));
        }
        Ok(())
    }

    /// 1st-pass defaults: beam of 4.
    pub fn first_pass() -> Self {
        BeamConfig::default()
    }

    /// 2nd-pass defaults: beam of 8.
    pub fn second_pass() -> Self {
        BeamConfig {
            beam_size: 8,
            ..BeamConfig::default()
        }
    }
}

/// One beam-search hypothesis. `tokens` are the emissions of the current
/// segment; `emitted_total` counts emissions since the start of the stream
/// and survives finalization (the prediction-network state that is carried
/// over between segments).
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub token_end_ms: Vec<u64>,
    pub cost: f64,
    /// Last (n-1) tokens for path merging; inherited across segments.
    pub merge_context: Option<TokenId>,
    pub emitted_total: usize,
    /// Correction charge already applied to the current last token.
    mismatch_accrued: f64,
    /// Number of emissions in this segment that diverge from the schedule.
    divergence: u32,
    /// Lattice cursor (when path merging records a lattice).
    node: Option<NodeId>,
    /// Extensions not yet drained into the lattice.
    pending_arcs: Vec<(TokenId, f64)>,
}

impl Hypothesis {
    /// Fresh stream-initial hypothesis.
    pub fn initial() -> Self {
        Hypothesis {
            tokens: Vec::new(),
            token_end_ms: Vec::new(),
            cost: 0.0,
            merge_context: None,
            emitted_total: 0,
            mismatch_accrued: 0.0,
            divergence: 0,
            node: None,
            pending_arcs: Vec::new(),
        }
    }

    fn extend(&self, tok: TokenId, cost: f64, end_ms: u64, on_schedule: bool) -> Self {
        let mut h = self.clone();
        h.tokens.push(tok);
        h.token_end_ms.push(end_ms);
        h.cost += cost;
        h.merge_context = Some(tok);
        h.emitted_total += 1;
        h.mismatch_accrued = 0.0;
        h.divergence += u32::from(!on_schedule);
        h.pending_arcs.push((tok, cost));
        h
    }

    #[cfg(test)]
    fn with_tokens(tokens: Vec<TokenId>, cost: f64) -> Self {
        let merge_context = tokens.last().copied();
        let emitted_total = tokens.len();
        Hypothesis {
            token_end_ms: vec![0; tokens.len()],
            tokens,
            cost,
            merge_context,
            emitted_total,
            mismatch_accrued: 0.0,
            divergence: 0,
            node: None,
            pending_arcs: Vec::new(),
        }
    }
}

/// Cost-sorted set of hypotheses with unique token sequences.
#[derive(Debug, Clone)]
pub struct Beam {
    pub hyps: Vec<Hypothesis>,
}

impl Beam {
    /// Beam holding a single stream-initial hypothesis.
    pub fn initial() -> Self {
        Beam {
            hyps: vec![Hypothesis::initial()],
        }
    }

    pub fn top(&self) -> &Hypothesis {
        &self.hyps[0]
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    /// Installs the emission count a carryover beam is considered to have
    /// produced so far. Applied after finalization when a strategy skips
    /// frames: the skipped words are treated as consumed, not pending.
    pub fn rebase_emitted(&mut self, emitted_total: usize) {
        for h in &mut self.hyps {
            debug_assert!(h.tokens.is_empty(), "rebase only applies to carryovers");
            h.emitted_total = emitted_total.max(h.emitted_total);
        }
    }
}

fn hyp_order(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    a.cost
        .partial_cmp(&b.cost)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Advances every hypothesis through one frame: breadth-first non-blank
/// expansions (cost below the cutoff, at most `max_expansion_depth` deep)
/// followed by a blank consuming the frame, then deduplication, beam-size
/// truncation and threshold pruning.
pub fn decode_step(beam: &Beam, frame: &PosteriorFrame, config: &BeamConfig) -> Result<Beam> {
    if beam.is_empty() {
        return Err(Error::contract("decode_step on an empty beam"));
    }
    let word_tokens = frame.num_symbols() - 2;

    let mut all: Vec<Hypothesis> = beam.hyps.clone();
    // Indices into `all` of the hypotheses expanded at the previous depth.
    let mut level: Vec<usize> = (0..all.len()).collect();
    for _depth in 0..config.max_expansion_depth {
        // Score candidates first; only survivors of the per-level beam are
        // materialized as hypotheses.
        let mut cands: Vec<(usize, TokenId, f64)> = Vec::new();
        for &pi in &level {
            let emitted = all[pi].emitted_total;
            for raw in 0..word_tokens as u32 {
                let tok = TokenId(raw);
                let cost = frame.expansion_cost(emitted, tok);
                if cost < config.expansion_cutoff {
                    cands.push((pi, tok, all[pi].cost + cost));
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| {
            a.2.partial_cmp(&b.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| all[a.0].tokens.cmp(&all[b.0].tokens))
                .then_with(|| a.1.cmp(&b.1))
        });
        cands.truncate(config.beam_size);
        let mut next = Vec::with_capacity(cands.len());
        for (pi, tok, total) in cands {
            let on_schedule = frame.matches_schedule(all[pi].emitted_total, tok);
            let child = all[pi].extend(tok, total - all[pi].cost, frame.end_ms, on_schedule);
            next.push(all.len());
            all.push(child);
        }
        level = next;
    }

    // Blank consumes the frame for every candidate.
    for h in &mut all {
        let (blank, charge) = frame.blank_cost(
            h.emitted_total,
            h.tokens.last().copied(),
            h.mismatch_accrued,
            h.divergence,
        );
        h.cost += blank;
        h.mismatch_accrued += charge;
    }

    // Deduplicate identical token sequences, keeping the cheapest.
    all.sort_by(|a, b| a.tokens.cmp(&b.tokens).then_with(|| hyp_order(a, b)));
    all.dedup_by(|b, a| a.tokens == b.tokens);

    all.sort_by(hyp_order);
    all.truncate(config.beam_size);
    let best = all[0].cost;
    all.retain(|h| h.cost <= best + config.pruning_threshold);

    Ok(Beam { hyps: all })
}

/// Emits an EOS iff the frame's EOS cost, evaluated in the context of the
/// top hypothesis, is below the threshold and at least one token has been
/// emitted since the previous EOS (finalization empties the token list, so
/// the suppression rule is exactly "top has tokens").
pub fn eos_check(beam: &Beam, frame: &PosteriorFrame, config: &BeamConfig) -> Option<EosSignal> {
    let top = beam.top();
    if top.tokens.is_empty() {
        return None;
    }
    let cost = frame.eos_cost_for(top.emitted_total, top.tokens.last().copied());
    (cost < config.eos_threshold).then_some(EosSignal {
        timestamp_ms: frame.end_ms,
    })
}

/// Commits the top hypothesis and resets the beam: the carryover holds one
/// hypothesis with an empty token list, zero cost, and the top's merge
/// context and stream-level emission count.
pub fn finalize(beam: &Beam) -> Result<(Hypothesis, Beam)> {
    if beam.is_empty() {
        return Err(Error::contract("finalize on an empty beam"));
    }
    let top = beam.top().clone();
    let carry = Hypothesis {
        tokens: Vec::new(),
        token_end_ms: Vec::new(),
        cost: 0.0,
        merge_context: top.merge_context,
        emitted_total: top.emitted_total,
        mismatch_accrued: 0.0,
        divergence: 0,
        node: None,
        pending_arcs: Vec::new(),
    };
    Ok((
        top,
        Beam {
            hyps: vec![carry],
        },
    ))
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeArc {
    pub from: NodeId,
    pub to: NodeId,
    /// None marks a recombination arc spelling no token.
    pub token: Option<TokenId>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeNode {
    pub frame_index: usize,
    pub context: Option<TokenId>,
}

/// Decoding lattice: a DAG whose start-to-end paths spell the token
/// sequences explored (and recombined) by the beam search of one segment.
#[derive(Debug, Clone, Default)]
pub struct Lattice {
    nodes: Vec<LatticeNode>,
    arcs: Vec<LatticeArc>,
    ends: Vec<NodeId>,
}

impl Lattice {
    /// Empty lattice with just the start node.
    pub fn new() -> Self {
        Lattice {
            nodes: vec![LatticeNode {
                frame_index: 0,
                context: None,
            }],
            arcs: Vec::new(),
            ends: Vec::new(),
        }
    }

    pub fn start(&self) -> NodeId {
        0
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn arcs(&self) -> &[LatticeArc] {
        &self.arcs
    }

    pub fn ends(&self) -> &[NodeId] {
        &self.ends
    }

    pub fn is_trivial(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Adds a node. Arcs may only point from older to newer nodes, which
    /// keeps the lattice acyclic in creation order.
    pub fn add_node(&mut self, frame_index: usize, context: Option<TokenId>) -> NodeId {
        self.nodes.push(LatticeNode {
            frame_index,
            context,
        });
        self.nodes.len() - 1
    }

    pub fn add_arc(&mut self, from: NodeId, to: NodeId, token: TokenId, cost: f64) {
        assert!(from < to, "arcs must point forward in creation order");
        self.arcs.push(LatticeArc {
            from,
            to,
            token: Some(token),
            cost,
        });
    }

    /// Recombination arc: the path ending at `from` continues at `to`.
    pub fn add_merge_arc(&mut self, from: NodeId, to: NodeId) {
        assert!(from < to, "arcs must point forward in creation order");
        self.arcs.push(LatticeArc {
            from,
            to,
            token: None,
            cost: 0.0,
        });
    }

    pub fn mark_end(&mut self, node: NodeId) {
        if !self.ends.contains(&node) {
            self.ends.push(node);
        }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, a) in self.arcs.iter().enumerate() {
            adj[a.from].push(i);
        }
        adj
    }

    /// Serializes to the documented text format: node, arc and end lines.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let ctx = n
                .context
                .map(|t| t.0.to_string())
                .unwrap_or_else(|| "-".to_string());
            writeln!(out, "node {i} frame={} ctx={ctx}", n.frame_index).unwrap();
        }
        for a in &self.arcs {
            match a.token {
                Some(t) => writeln!(out, "arc {} {} {} {:.4}", a.from, a.to, t.0, a.cost).unwrap(),
                None => writeln!(out, "arc {} {} - 0.0000", a.from, a.to).unwrap(),
            }
        }
        for e in &self.ends {
            writeln!(out, "end {e}").unwrap();
        }
        out
    }

    /// Linear n-best lattice from a finished beam (no recombination case).
    pub fn from_nbest(beam: &Beam) -> Self {
        let mut lat = Lattice::new();
        for h in &beam.hyps {
            let mut cur = lat.start();
            for (i, &tok) in h.tokens.iter().enumerate() {
                let next = lat.add_node(i, Some(tok));
                lat.add_arc(cur, next, tok, 0.0);
                cur = next;
            }
            lat.mark_end(cur);
        }
        lat
    }
}

/// Recombines hypotheses sharing a merge context: the cheaper one stays in
/// the beam, and both paths flow into a shared lattice node at this frame.
/// Also drains freshly expanded arcs into the lattice, so it must be called
/// once per frame when path merging is active.
pub fn merge_paths(beam: &mut Beam, lattice: &mut Lattice, frame_index: usize) {
    // Drain pending extensions: each hypothesis walks its cursor forward.
    for h in &mut beam.hyps {
        let mut cur = h.node.unwrap_or(lattice.start());
        for (tok, cost) in h.pending_arcs.drain(..) {
            let next = lattice.add_node(frame_index, Some(tok));
            lattice.add_arc(cur, next, tok, cost);
            cur = next;
        }
        h.node = Some(cur);
    }

    // Group by merge context (last token; order-2 state).
    let mut groups: HashMap<Option<TokenId>, Vec<usize>> = HashMap::new();
    for (i, h) in beam.hyps.iter().enumerate() {
        groups.entry(h.merge_context).or_default().push(i);
    }

    let mut drop = vec![false; beam.hyps.len()];
    let mut group_keys: Vec<Option<TokenId>> = groups.keys().copied().collect();
    group_keys.sort();
    for key in group_keys {
        let members = &groups[&key];
        if members.len() < 2 {
            continue;
        }
        // Beam is cost-sorted, so the first member is the survivor.
        let survivor = members[0];
        let shared = lattice.add_node(frame_index, key);
        let s_node = beam.hyps[survivor].node.unwrap_or(lattice.start());
        lattice.add_merge_arc(s_node, shared);
        for &loser in &members[1..] {
            let l_node = beam.hyps[loser].node.unwrap_or(lattice.start());
            lattice.add_merge_arc(l_node, shared);
            drop[loser] = true;
        }
        beam.hyps[survivor].node = Some(shared);
    }

    let mut i = 0;
    beam.hyps.retain(|_| {
        let keep = !drop[i];
        i += 1;
        keep
    });
}

/// Marks the current beam's cursors as lattice end states (called at
/// finalization when path merging is active).
pub fn seal_lattice(beam: &Beam, lattice: &mut Lattice) {
    for h in &beam.hyps {
        lattice.mark_end(h.node.unwrap_or(lattice.start()));
    }
}

/// Enumerates all start-to-end token sequences, for brute-force oracle
/// checks on small lattices. Errors out once more than `limit` paths exist.
pub fn lattice_paths(lattice: &Lattice, limit: usize) -> Result<Vec<Vec<TokenId>>> {
    let adj = lattice.adjacency();
    let is_end = |n: NodeId| lattice.ends.contains(&n);
    let mut paths = Vec::new();
    // Iterative DFS carrying the token prefix.
    let mut stack: Vec<(NodeId, Vec<TokenId>)> = vec![(lattice.start(), Vec::new())];
    while let Some((node, prefix)) = stack.pop() {
        if is_end(node) {
            paths.push(prefix.clone());
            if paths.len() > limit {
                return Err(Error::TruncatedPaths { limit });
            }
        }
        for &ai in adj[node].iter().rev() {
            let arc = &lattice.arcs[ai];
            let mut next_prefix = prefix.clone();
            if let Some(t) = arc.token {
                next_prefix.push(t);
            }
            stack.push((arc.to, next_prefix));
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{PosteriorFrame, Stream};

    // Token layout for these tests: words a=0, b=1, c=2; blank=3; eos=4.
    const A: TokenId = TokenId(0);
    const B: TokenId = TokenId(1);
    const C: TokenId = TokenId(2);

    fn frame(costs: Vec<f64>, end_ms: u64) -> PosteriorFrame {
        PosteriorFrame::from_costs(costs, 0, Stream::Causal, end_ms)
    }

    fn cfg() -> BeamConfig {
        BeamConfig::default()
    }

    #[test]
    fn zero_blank_extends_by_blank_only() {
        let f = frame(vec![6.0, 6.0, 6.0, 0.0, 9.0], 30);
        let beam = Beam::initial();
        let out = decode_step(&beam, &f, &cfg()).unwrap();
        assert_eq!(out.hyps.len(), 1);
        assert!(out.top().tokens.is_empty());
        assert_eq!(out.top().cost, 0.0);
    }

    #[test]
    fn expansion_at_cutoff_never_taken() {
        // Token a costs exactly 6 >= cutoff 5: it must never appear.
        let f = frame(vec![6.0, 7.0, 7.0, 0.1, 9.0], 30);
        let out = decode_step(&Beam::initial(), &f, &cfg()).unwrap();
        for h in &out.hyps {
            assert!(!h.tokens.contains(&A));
        }
    }

    #[test]
    fn beam_truncates_to_size_within_threshold() {
        let hyps: Vec<Hypothesis> = (0..6)
            .map(|i| Hypothesis::with_tokens(vec![TokenId(i as u32 % 3), TokenId(i as u32)], i as f64))
            .collect();
        let beam = Beam { hyps };
        let f = frame(vec![9.0, 9.0, 9.0, 0.0, 9.0], 30);
        let out = decode_step(&beam, &f, &cfg()).unwrap();
        assert_eq!(out.hyps.len(), 4);
        let best = out.top().cost;
        for h in &out.hyps {
            assert!(h.cost <= best + 5.0);
        }
        let costs: Vec<f64> = out.hyps.iter().map(|h| h.cost).collect();
        assert_eq!(costs, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn depth_limit_bounds_expansions_per_frame() {
        // Token a is nearly free, so expansions chain until the depth cap.
        let f = frame(vec![0.01, 8.0, 8.0, 0.1, 9.0], 30);
        let config = BeamConfig {
            max_expansion_depth: 3,
            beam_size: 16,
            pruning_threshold: 50.0,
            ..cfg()
        };
        let out = decode_step(&Beam::initial(), &f, &config).unwrap();
        assert!(out.hyps.iter().all(|h| h.tokens.len() <= 3));
        assert!(out.hyps.iter().any(|h| h.tokens.len() == 3));
    }

    #[test]
    fn empty_beam_is_contract_violation() {
        let f = frame(vec![6.0, 6.0, 6.0, 0.0, 9.0], 30);
        let empty = Beam { hyps: vec![] };
        assert!(matches!(
            decode_step(&empty, &f, &cfg()),
            Err(Error::Contract(_))
        ));
        assert!(matches!(finalize(&empty), Err(Error::Contract(_))));
    }

    #[test]
    fn eos_fires_below_threshold_with_tokens() {
        let beam = Beam {
            hyps: vec![Hypothesis::with_tokens(vec![A], 1.0)],
        };
        let f = frame(vec![6.0, 6.0, 6.0, 0.2, 3.0], 300);
        let sig = eos_check(&beam, &f, &cfg()).unwrap();
        assert_eq!(sig.timestamp_ms, 300);
    }

    #[test]
    fn eos_suppressed_above_threshold_or_without_tokens() {
        let with_tokens = Beam {
            hyps: vec![Hypothesis::with_tokens(vec![A], 1.0)],
        };
        let costly = frame(vec![6.0, 6.0, 6.0, 0.2, 5.0], 300);
        assert!(eos_check(&with_tokens, &costly, &cfg()).is_none());

        let fresh = Beam::initial();
        let cheap = frame(vec![6.0, 6.0, 6.0, 0.2, 3.0], 300);
        assert!(eos_check(&fresh, &cheap, &cfg()).is_none());
    }

    #[test]
    fn finalize_returns_argmin_and_carryover() {
        let beam = Beam {
            hyps: vec![
                Hypothesis::with_tokens(vec![A], 1.0),
                Hypothesis::with_tokens(vec![B], 2.0),
            ],
        };
        let (top, carry) = finalize(&beam).unwrap();
        assert_eq!(top.tokens, vec![A]);
        assert_eq!(carry.hyps.len(), 1);
        let c = carry.top();
        assert!(c.tokens.is_empty());
        assert_eq!(c.cost, 0.0);
        assert_eq!(c.merge_context, Some(A));
        assert_eq!(c.emitted_total, 1);
    }

    #[test]
    fn finalize_singleton() {
        let beam = Beam {
            hyps: vec![Hypothesis::with_tokens(vec![C, B], 0.5)],
        };
        let (top, _) = finalize(&beam).unwrap();
        assert_eq!(top.tokens, vec![C, B]);
    }

    #[test]
    fn finalized_segment_is_immune_to_later_steps() {
        // Decode, finalize, freeze the string, keep decoding: the finalized
        // transcript must not change. Also replaying the remaining frames on
        // a beam seeded only with the survivor yields the same hypotheses.
        let f1 = frame(vec![0.5, 4.0, 4.0, 0.2, 9.0], 30);
        let f2 = frame(vec![4.0, 0.5, 4.0, 0.2, 9.0], 60);
        let config = cfg();
        let beam = decode_step(&Beam::initial(), &f1, &config).unwrap();
        let (top, carry) = finalize(&beam).unwrap();
        let frozen = top.tokens.clone();

        let after = decode_step(&carry, &f2, &config).unwrap();
        assert_eq!(top.tokens, frozen);

        let reseeded = Beam {
            hyps: vec![carry.top().clone()],
        };
        let replay = decode_step(&reseeded, &f2, &config).unwrap();
        let toks = |b: &Beam| b.hyps.iter().map(|h| h.tokens.clone()).collect::<Vec<_>>();
        assert_eq!(toks(&after), toks(&replay));
    }

    #[test]
    fn merge_recombines_equal_contexts() {
        // "a b" (cost 2) and "c b" (cost 3) share context b.
        let mut beam = Beam {
            hyps: vec![
                Hypothesis::with_tokens(vec![A, B], 2.0),
                Hypothesis::with_tokens(vec![C, B], 3.0),
            ],
        };
        // Register their paths in the lattice first.
        for h in &mut beam.hyps {
            h.pending_arcs = h.tokens.iter().map(|&t| (t, 0.5)).collect();
        }
        let mut lat = Lattice::new();
        merge_paths(&mut beam, &mut lat, 7);
        assert_eq!(beam.hyps.len(), 1);
        assert_eq!(beam.top().tokens, vec![A, B]);
        seal_lattice(&beam, &mut lat);
        let mut paths = lattice_paths(&lat, 16).unwrap();
        paths.sort();
        assert_eq!(paths, vec![vec![A, B], vec![C, B]]);
    }

    #[test]
    fn distinct_contexts_do_not_merge() {
        let mut beam = Beam {
            hyps: vec![
                Hypothesis::with_tokens(vec![A, B], 2.0),
                Hypothesis::with_tokens(vec![A, C], 3.0),
            ],
        };
        let mut lat = Lattice::new();
        merge_paths(&mut beam, &mut lat, 3);
        assert_eq!(beam.hyps.len(), 2);
    }

    #[test]
    fn single_hypothesis_merge_only_records_arcs() {
        let mut beam = Beam {
            hyps: vec![Hypothesis::with_tokens(vec![A], 1.0)],
        };
        beam.hyps[0].pending_arcs = vec![(A, 1.0)];
        let mut lat = Lattice::new();
        merge_paths(&mut beam, &mut lat, 1);
        assert_eq!(beam.hyps.len(), 1);
        seal_lattice(&beam, &mut lat);
        assert_eq!(lattice_paths(&lat, 4).unwrap(), vec![vec![A]]);
    }

    #[test]
    fn lattice_paths_linear_diamond_empty() {
        // Linear: start -a-> n1 -b-> n2.
        let mut lin = Lattice::new();
        let n1 = lin.add_node(0, Some(A));
        let n2 = lin.add_node(1, Some(B));
        lin.add_arc(lin.start(), n1, A, 0.0);
        lin.add_arc(n1, n2, B, 0.0);
        lin.mark_end(n2);
        assert_eq!(lattice_paths(&lin, 8).unwrap(), vec![vec![A, B]]);

        // Diamond: two branches meeting at the end node.
        let mut dia = Lattice::new();
        let l = dia.add_node(0, Some(A));
        let r = dia.add_node(0, Some(B));
        let end = dia.add_node(1, Some(C));
        dia.add_arc(dia.start(), l, A, 0.0);
        dia.add_arc(dia.start(), r, B, 0.0);
        dia.add_arc(l, end, C, 0.0);
        dia.add_arc(r, end, C, 0.0);
        dia.mark_end(end);
        let mut paths = lattice_paths(&dia, 8).unwrap();
        paths.sort();
        assert_eq!(paths, vec![vec![A, C], vec![B, C]]);

        // Empty lattice: no start-to-end paths.
        let empty = Lattice::new();
        assert!(lattice_paths(&empty, 8).unwrap().is_empty());
    }

    #[test]
    fn path_enumeration_limit_is_flagged() {
        let mut dia = Lattice::new();
        let l = dia.add_node(0, Some(A));
        let r = dia.add_node(0, Some(B));
        dia.add_arc(dia.start(), l, A, 0.0);
        dia.add_arc(dia.start(), r, B, 0.0);
        dia.mark_end(l);
        dia.mark_end(r);
        assert!(matches!(
            lattice_paths(&dia, 1),
            Err(Error::TruncatedPaths { limit: 1 })
        ));
    }

    #[test]
    fn decode_is_deterministic() {
        let frames: Vec<PosteriorFrame> = (0..8)
            .map(|i| {
                frame(
                    vec![0.4 + 0.1 * (i % 3) as f64, 0.6, 4.0, 0.2, 9.0],
                    30 * (i as u64 + 1),
                )
            })
            .collect();
        let run = || {
            let mut beam = Beam::initial();
            for f in &frames {
                beam = decode_step(&beam, f, &cfg()).unwrap();
            }
            beam.hyps
                .iter()
                .map(|h| (h.tokens.clone(), h.cost))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(96))]

            /// Structural beam invariants hold for arbitrary cost vectors.
            #[test]
            fn beam_invariants(
                costs in proptest::collection::vec(0.0f64..8.0, 5),
                steps in 1usize..6,
            ) {
                let config = cfg();
                let mut beam = Beam::initial();
                for s in 0..steps {
                    let f = frame(costs.clone(), 30 * (s as u64 + 1));
                    beam = decode_step(&beam, &f, &config).unwrap();
                    prop_assert!(beam.hyps.len() <= config.beam_size);
                    let best = beam.top().cost;
                    for h in &beam.hyps {
                        prop_assert!(h.cost >= 0.0);
                        prop_assert!(h.cost <= best + config.pruning_threshold);
                        prop_assert!(h.tokens.len() == h.token_end_ms.len());
                        // Timestamps non-decreasing.
                        for w in h.token_end_ms.windows(2) {
                            prop_assert!(w[0] <= w[1]);
                        }
                    }
                    // No duplicate token sequences.
                    let mut seqs: Vec<_> = beam.hyps.iter().map(|h| h.tokens.clone()).collect();
                    seqs.sort();
                    let before = seqs.len();
                    seqs.dedup();
                    prop_assert_eq!(before, seqs.len());
                }
            }
        }
    }
}
