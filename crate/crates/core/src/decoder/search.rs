use std::cmp::Ordering;
use std::collections::HashMap;

use serde::Serialize;

use super::network::DecodingNetwork;
use super::DecodeError;
use crate::vq::CodewordSequence;

/// Inclusive frame span of one decoded word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordSpan {
    pub word: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub words: Vec<String>,
    pub log_score: f64,
    pub spans: Vec<WordSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    pub nbest: Vec<Hypothesis>,
    pub beam: f64,
    pub frames: usize,
}

impl DecodeResult {
    pub fn best(&self) -> &Hypothesis {
        &self.nbest[0]
    }
}

const NONE: u32 = u32::MAX;

/// Word histories shared as a trie, so equal sequences get equal ids.
struct Histories {
    nodes: Vec<(u32, u32)>,
    index: HashMap<(u32, u32), u32>,
}

impl Histories {
    fn new() -> Self {
        Self { nodes: vec![(NONE, NONE)], index: HashMap::new() }
    }

    fn child(&mut self, parent: u32, word: u32) -> u32 {
        let next = self.nodes.len() as u32;
        *self.index.entry((parent, word)).or_insert_with(|| {
            self.nodes.push((parent, word));
            next
        })
    }

    fn sequence(&self, mut id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        while id != 0 {
            let (parent, word) = self.nodes[id as usize];
            out.push(word);
            id = parent;
        }
        out.reverse();
        out
    }

    /// Word ids follow the sorted word table, so comparing id sequences
    /// orders the word sequences lexicographically.
    fn cmp(&self, a: u32, b: u32) -> Ordering {
        if a == b {
            Ordering::Equal
        } else {
            self.sequence(a).cmp(&self.sequence(b))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Hyp {
    score: f64,
    hist: u32,
    /// Last closed word span in the span arena.
    span: u32,
    word_start: u32,
    bypasses: u32,
}

/// Whether `a` ranks above `b`: higher score, then fewer silence bypasses,
/// then the lexicographically earlier word sequence.
fn ranks_above(a: &Hyp, b: &Hyp, hist: &Histories) -> bool {
    match a.score.partial_cmp(&b.score).unwrap() {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.bypasses.cmp(&b.bypasses) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => hist.cmp(a.hist, b.hist) == Ordering::Less,
        },
    }
}

/// Keeps at most `width` hypotheses with distinct histories, the best
/// alignment for each.
fn push(list: &mut Vec<Hyp>, h: Hyp, width: usize, hist: &Histories) {
    if h.score == f64::NEG_INFINITY {
        return;
    }
    if let Some(existing) = list.iter_mut().find(|e| e.hist == h.hist) {
        if ranks_above(&h, existing, hist) {
            *existing = h;
        }
        return;
    }
    if list.len() < width {
        list.push(h);
        return;
    }
    let worst = (1..list.len()).fold(0, |w, i| if ranks_above(&list[w], &list[i], hist) { i } else { w });
    if ranks_above(&h, &list[worst], hist) {
        list[worst] = h;
    }
}

/// Frame-synchronous Viterbi over the network. After each frame,
/// hypotheses more than `beam` below the frame's best are dropped; each
/// state keeps up to `2 * n_best` hypotheses with distinct word histories.
/// The result lists up to `n_best` distinct word sequences by descending
/// score. `beam = f64::INFINITY` gives exact search.
pub fn decode(
    obs: &CodewordSequence,
    net: &DecodingNetwork,
    beam: f64,
    n_best: usize,
) -> Result<DecodeResult, DecodeError> {
    if obs.is_empty() {
        return Err(DecodeError::EmptyObservation);
    }
    if n_best == 0 {
        return Err(DecodeError::InvalidNBest);
    }
    if let Some(frame) = obs.frames.iter().position(|f| !net.accepts(f)) {
        return Err(DecodeError::CodewordOutOfRange { frame });
    }
    let width = 2 * n_best;
    let n = net.num_states();
    let mut hist = Histories::new();
    // (word, start, end, previous span)
    let mut spans: Vec<(u32, u32, u32, u32)> = Vec::new();
    let mut emit = Vec::with_capacity(net.num_slots());
    let mut cur: Vec<Vec<Hyp>> = vec![Vec::new(); n];
    let mut next: Vec<Vec<Hyp>> = vec![Vec::new(); n];
    let mut active: Vec<usize> = Vec::new();

    let root = Hyp { score: 0.0, hist: 0, span: NONE, word_start: 0, bypasses: 0 };
    for e in &net.entries {
        let h = Hyp {
            score: e.logp,
            hist: e.enters.map_or(0, |w| hist.child(0, w)),
            bypasses: e.bypass as u32,
            ..root
        };
        push(&mut next[e.to as usize], h, width, &hist);
    }

    for t in 0..obs.len() {
        net.slot_emissions(&obs.frames[t], &mut emit);
        let mut best = f64::NEG_INFINITY;
        for (s, list) in next.iter_mut().enumerate() {
            let e = emit[net.slot[s] as usize];
            for h in list.iter_mut() {
                h.score += e;
                best = best.max(h.score);
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(DecodeError::NoPathSurvived);
        }
        active.clear();
        for (s, (c, nx)) in cur.iter_mut().zip(next.iter_mut()).enumerate() {
            c.clear();
            c.extend(nx.drain(..).filter(|h| h.score > f64::NEG_INFINITY && h.score >= best - beam));
            if !c.is_empty() {
                active.push(s);
            }
        }
        if t + 1 == obs.len() {
            break;
        }
        let t1 = (t + 1) as u32;
        for &s in &active {
            let self_logp = net.self_logp[s];
            for h in std::mem::take(&mut cur[s]) {
                push(&mut next[s], Hyp { score: h.score + self_logp, ..h }, width, &hist);
                let closed = match net.word_end[s] {
                    Some(w) if !net.succ[s].is_empty() => {
                        spans.push((w, h.word_start, t as u32, h.span));
                        (spans.len() - 1) as u32
                    }
                    _ => h.span,
                };
                for e in &net.succ[s] {
                    let mut nh = Hyp { score: h.score + e.logp, span: closed, bypasses: h.bypasses + e.bypass as u32, ..h };
                    if let Some(w) = e.enters {
                        nh.hist = hist.child(h.hist, w);
                        nh.word_start = t1;
                    }
                    push(&mut next[e.to as usize], nh, width, &hist);
                }
            }
        }
    }

    let last = (obs.len() - 1) as u32;
    let mut ends: Vec<Hyp> = Vec::new();
    for f in &net.finals {
        let s = f.state as usize;
        for h in &cur[s] {
            let span = match net.word_end[s] {
                Some(w) => {
                    spans.push((w, h.word_start, last, h.span));
                    (spans.len() - 1) as u32
                }
                None => h.span,
            };
            push(&mut ends, Hyp { score: h.score + f.logp, span, ..*h }, usize::MAX, &hist);
        }
    }
    if ends.is_empty() {
        return Err(DecodeError::NoPathSurvived);
    }
    ends.sort_by(|a, b| {
        if ranks_above(a, b, &hist) {
            Ordering::Less
        } else if ranks_above(b, a, &hist) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    });
    let nbest = ends
        .iter()
        .take(n_best)
        .map(|h| {
            let mut out = Vec::new();
            let mut sp = h.span;
            while sp != NONE {
                let (w, start, end, prev) = spans[sp as usize];
                out.push(WordSpan { word: net.words[w as usize].clone(), start: start as usize, end: end as usize });
                sp = prev;
            }
            out.reverse();
            Hypothesis {
                words: hist.sequence(h.hist).iter().map(|&w| net.words[w as usize].clone()).collect(),
                log_score: h.score,
                spans: out,
            }
        })
        .collect();
    Ok(DecodeResult { nbest, beam, frames: obs.len() })
}
