use std::collections::BTreeMap;

use super::DecodeError;
use crate::frontend::NUM_STREAMS;
use crate::grammar::{word_pairs, CommandFsn, Lexicon, WordPairSet, END, START};
use crate::hmm::{Observation, PhoneModelSet, PhonemeModel, EXIT, NUM_STATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Expansion of FSN arc `arc` carrying word `word` (an index into `words`).
    Word { arc: usize, word: u32 },
    /// Silence between words, sitting on interior FSN node `node`.
    InterWord { node: usize },
    Leading,
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordInstance {
    pub kind: InstanceKind,
    pub first_state: usize,
    pub num_states: usize,
}

impl WordInstance {
    pub fn last_state(&self) -> usize {
        self.first_state + self.num_states - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Edge {
    pub to: u32,
    pub logp: f64,
    /// Word entered by taking this edge.
    pub enters: Option<u32>,
    /// Skips an inter-word or edge silence.
    pub bypass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FinalExit {
    pub state: u32,
    pub logp: f64,
}

/// Flattened HMM states of every word and silence instance in a grammar,
/// with the links between them.
#[derive(Debug, Clone)]
pub struct DecodingNetwork {
    pub(crate) models: Vec<PhonemeModel>,
    /// Per state: index into the emission slot table (`model * 3 + state`).
    pub(crate) slot: Vec<u32>,
    pub(crate) self_logp: Vec<f64>,
    pub(crate) succ: Vec<Vec<Edge>>,
    /// Word whose last state this is; leaving it through `succ` or a final
    /// exit closes the word.
    pub(crate) word_end: Vec<Option<u32>>,
    pub(crate) entries: Vec<Edge>,
    pub(crate) finals: Vec<FinalExit>,
    pub instances: Vec<WordInstance>,
    /// Grammar words in sorted order; word ids index this.
    pub words: Vec<String>,
    pub word_pairs: WordPairSet,
    pub(crate) ks: [usize; NUM_STREAMS],
}

struct Builder<'a> {
    set: &'a PhoneModelSet,
    model_index: BTreeMap<String, usize>,
    net: DecodingNetwork,
}

impl Builder<'_> {
    fn model(&mut self, label: &str, silence: &PhonemeModel) -> Result<usize, DecodeError> {
        if let Some(&i) = self.model_index.get(label) {
            return Ok(i);
        }
        let m = if label == silence.label {
            silence.clone()
        } else {
            self.set.get(label).cloned().ok_or_else(|| DecodeError::MissingModel(label.to_string()))?
        };
        if !self.net.models.is_empty() && m.ks() != self.net.ks {
            return Err(DecodeError::IncompatibleModels);
        }
        self.net.ks = m.ks();
        self.net.models.push(m);
        self.model_index.insert(label.to_string(), self.net.models.len() - 1);
        Ok(self.net.models.len() - 1)
    }

    /// Appends a chain of phone models and links it internally.
    fn instance(&mut self, kind: InstanceKind, labels: &[&str], silence: &PhonemeModel) -> Result<usize, DecodeError> {
        let first_state = self.net.slot.len();
        for (p, label) in labels.iter().enumerate() {
            let mi = self.model(label, silence)?;
            let trans = self.net.models[mi].log_trans;
            for j in 0..NUM_STATES {
                let s = self.net.slot.len();
                self.net.slot.push((mi * NUM_STATES + j) as u32);
                self.net.self_logp.push(trans[j][j]);
                self.net.word_end.push(None);
                let inner = j + 1 < NUM_STATES || p + 1 < labels.len();
                self.net.succ.push(if inner {
                    vec![Edge { to: (s + 1) as u32, logp: trans[j][j + 1], enters: None, bypass: false }]
                } else {
                    Vec::new()
                });
            }
        }
        let num_states = labels.len() * NUM_STATES;
        if let InstanceKind::Word { word, .. } = kind {
            self.net.word_end[first_state + num_states - 1] = Some(word);
        }
        self.net.instances.push(WordInstance { kind, first_state, num_states });
        Ok(self.net.instances.len() - 1)
    }

    fn exit_logp(&self, state: usize) -> f64 {
        let slot = self.net.slot[state] as usize;
        self.net.models[slot / NUM_STATES].log_trans[NUM_STATES - 1][EXIT]
    }
}

/// Expands every FSN arc into its word's phone chain. Interior FSN nodes get
/// one silence instance that every incoming word passes through (or skips
/// by a bypass link) on the way to the outgoing words. With `edge_silence`
/// optional silences are added before the first and after the last word.
pub fn compile_network(
    fsn: &CommandFsn,
    lexicon: &Lexicon,
    models: &PhoneModelSet,
    silence: &PhonemeModel,
    edge_silence: bool,
) -> Result<DecodingNetwork, DecodeError> {
    let words: Vec<String> = fsn.words().into_iter().map(str::to_string).collect();
    for w in &words {
        if !lexicon.contains(w) {
            return Err(DecodeError::UnknownWord(w.clone()));
        }
    }
    let word_id = |w: &str| words.binary_search_by(|x| x.as_str().cmp(w)).unwrap() as u32;
    let mut b = Builder {
        set: models,
        model_index: BTreeMap::new(),
        net: DecodingNetwork {
            models: Vec::new(),
            slot: Vec::new(),
            self_logp: Vec::new(),
            succ: Vec::new(),
            word_end: Vec::new(),
            entries: Vec::new(),
            finals: Vec::new(),
            instances: Vec::new(),
            words: words.clone(),
            word_pairs: word_pairs(fsn),
            ks: [0; NUM_STREAMS],
        },
    };

    let mut arc_inst = Vec::with_capacity(fsn.arcs.len());
    for (arc, a) in fsn.arcs.iter().enumerate() {
        let pron: Vec<&str> = lexicon.pronunciation(&a.word).unwrap().iter().map(String::as_str).collect();
        arc_inst.push(b.instance(InstanceKind::Word { arc, word: word_id(&a.word) }, &pron, silence)?);
    }
    let sil = [silence.label.as_str()];
    let mut node_sil = BTreeMap::new();
    for node in 0..fsn.num_nodes {
        if node != START && node != END && fsn.out_arcs(node).next().is_some() {
            node_sil.insert(node, b.instance(InstanceKind::InterWord { node }, &sil, silence)?);
        }
    }
    let leading = edge_silence.then(|| b.instance(InstanceKind::Leading, &sil, silence)).transpose()?;
    let trailing = edge_silence.then(|| b.instance(InstanceKind::Trailing, &sil, silence)).transpose()?;

    // entry edges into the words leaving `node`, from a state with exit `logp`
    let into_words = |b: &Builder, node: usize, logp: f64, bypass: bool| -> Vec<Edge> {
        fsn.out_arcs(node)
            .map(|(i, a)| Edge {
                to: b.net.instances[arc_inst[i]].first_state as u32,
                logp,
                enters: Some(word_id(&a.word)),
                bypass,
            })
            .collect()
    };

    b.net.entries = into_words(&b, START, 0.0, edge_silence);
    if let Some(li) = leading {
        let inst = b.net.instances[li].clone();
        b.net.entries.insert(0, Edge { to: inst.first_state as u32, logp: 0.0, enters: None, bypass: false });
        let edges = into_words(&b, START, b.exit_logp(inst.last_state()), false);
        b.net.succ[inst.last_state()] = edges;
    }
    for (node, &si) in &node_sil {
        let inst = b.net.instances[si].clone();
        let edges = into_words(&b, *node, b.exit_logp(inst.last_state()), false);
        b.net.succ[inst.last_state()] = edges;
    }
    if let Some(ti) = trailing {
        let last = b.net.instances[ti].last_state();
        b.net.finals.push(FinalExit { state: last as u32, logp: b.exit_logp(last) });
    }
    for (i, a) in fsn.arcs.iter().enumerate() {
        let last = b.net.instances[arc_inst[i]].last_state();
        let exit = b.exit_logp(last);
        let mut edges = Vec::new();
        if a.to == END {
            if let Some(ti) = trailing {
                let first = b.net.instances[ti].first_state as u32;
                edges.push(Edge { to: first, logp: exit, enters: None, bypass: false });
            }
            b.net.finals.push(FinalExit { state: last as u32, logp: exit });
        } else {
            let si = node_sil[&a.to];
            let first = b.net.instances[si].first_state as u32;
            edges.push(Edge { to: first, logp: exit, enters: None, bypass: false });
            edges.extend(into_words(&b, a.to, exit, true));
        }
        b.net.succ[last] = edges;
    }
    Ok(b.net)
}

impl DecodingNetwork {
    pub fn num_states(&self) -> usize {
        self.slot.len()
    }

    pub fn num_silence_instances(&self) -> usize {
        self.instances.iter().filter(|i| !matches!(i.kind, InstanceKind::Word { .. })).count()
    }

    pub fn codebook_sizes(&self) -> [usize; NUM_STREAMS] {
        self.ks
    }

    pub(crate) fn num_slots(&self) -> usize {
        self.models.len() * NUM_STATES
    }

    /// Emission log-probability of every model state for one frame.
    pub(crate) fn slot_emissions(&self, obs: &Observation, out: &mut Vec<f64>) {
        out.clear();
        for m in &self.models {
            for j in 0..NUM_STATES {
                out.push(m.log_emission(j, obs));
            }
        }
    }

    pub(crate) fn accepts(&self, obs: &Observation) -> bool {
        obs.iter().zip(self.ks).all(|(&c, k)| c < k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::init_flat;

    fn setup() -> (Lexicon, PhoneModelSet, PhonemeModel) {
        let lex = Lexicon::parse("open: o p e n\nclose: k l o s\nfile: p a i l\nab: a p\n").unwrap();
        let mut set = PhoneModelSet::default();
        for p in ["o", "p", "e", "n", "k", "l", "s", "a", "i"] {
            set.insert(init_flat(p, [4, 4, 4]));
        }
        (lex, set, init_flat("SIL", [4, 4, 4]))
    }

    #[test]
    fn word_model_is_a_six_state_chain() {
        let (lex, set, sil) = setup();
        let fsn = CommandFsn::parse("ab\n", &lex).unwrap();
        let net = compile_network(&fsn, &lex, &set, &sil, false).unwrap();
        assert_eq!(net.instances.len(), 1);
        assert_eq!(net.instances[0].num_states, 6);
        assert_eq!(net.num_states(), 6);
    }

    #[test]
    fn one_silence_per_adjacency_point() {
        let (lex, set, sil) = setup();
        let fsn = CommandFsn::parse("open file\nclose file\n", &lex).unwrap();
        let net = compile_network(&fsn, &lex, &set, &sil, false).unwrap();
        assert_eq!(net.num_silence_instances(), 2);
        let net = compile_network(&fsn, &lex, &set, &sil, true).unwrap();
        assert_eq!(net.num_silence_instances(), 4);
    }

    #[test]
    fn every_word_link_is_licensed() {
        let (lex, set, sil) = setup();
        let fsn = CommandFsn::parse("open file\nclose file\nab\nab open\n", &lex).unwrap();
        let net = compile_network(&fsn, &lex, &set, &sil, true).unwrap();
        let word_of_entry = |s: u32| {
            net.instances.iter().find_map(|i| match i.kind {
                InstanceKind::Word { word, .. } if i.first_state == s as usize => Some(word),
                _ => None,
            })
        };
        for (s, edges) in net.succ.iter().enumerate() {
            for e in edges {
                if let (Some(from), Some(to)) = (net.word_end[s], e.enters) {
                    assert!(e.bypass);
                    let pair = [&net.words[from as usize], &net.words[to as usize]];
                    assert!(net.word_pairs.pairs.contains(&(pair[0].clone(), pair[1].clone())));
                    assert_eq!(word_of_entry(e.to), Some(to));
                }
            }
        }
    }

    #[test]
    fn compile_errors() {
        let (lex, mut set, sil) = setup();
        let fsn = CommandFsn::from_commands(vec![vec!["zap".into()]]).unwrap();
        assert_eq!(
            compile_network(&fsn, &lex, &set, &sil, false).unwrap_err(),
            DecodeError::UnknownWord("zap".into())
        );
        set.models.remove("e");
        let fsn = CommandFsn::parse("open\n", &lex).unwrap();
        assert_eq!(
            compile_network(&fsn, &lex, &set, &sil, false).unwrap_err(),
            DecodeError::MissingModel("e".into())
        );
    }
}
