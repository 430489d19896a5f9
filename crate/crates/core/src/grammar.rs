//! Phonetic dictionary and finite-state command grammar.
//!
//! Lexicon files hold one `word: ph1 ph2 ...` entry per line. Grammar files
//! hold one command (a space-separated word sequence) per line. Both accept
//! `#` comments and blank lines.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::phones;

pub const START: usize = 0;
pub const END: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: unknown phoneme {phone}")]
    UnknownPhoneme { line: usize, phone: String },
    #[error("line {line}: duplicate word {word}")]
    DuplicateWord { line: usize, word: String },
    #[error("line {line}: empty pronunciation for {word}")]
    EmptyPronunciation { line: usize, word: String },
    #[error("line {line}: malformed entry: {text}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: word {word} is not in the lexicon")]
    UnknownWord { line: usize, word: String },
    #[error("grammar has no commands")]
    EmptyGrammar,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn valid_word(w: &str) -> bool {
    !w.is_empty() && !w.contains(|c: char| c.is_whitespace() || c == ':' || c == '+')
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut entries = BTreeMap::new();
        for (line, l) in content_lines(text) {
            let (word, pron) = l
                .split_once(':')
                .ok_or_else(|| GrammarError::Malformed { line, text: l.to_string() })?;
            let word = word.trim();
            if !valid_word(word) {
                return Err(GrammarError::Malformed { line, text: l.to_string() });
            }
            let phones: Vec<String> = pron.split_whitespace().map(str::to_string).collect();
            if phones.is_empty() {
                return Err(GrammarError::EmptyPronunciation { line, word: word.to_string() });
            }
            if let Some(p) = phones.iter().find(|p| !phones::is_phoneme(p)) {
                return Err(GrammarError::UnknownPhoneme { line, phone: p.clone() });
            }
            if entries.insert(word.to_string(), phones).is_some() {
                return Err(GrammarError::DuplicateWord { line, word: word.to_string() });
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, word: &str, phones: Vec<String>) {
        self.entries.insert(word.to_string(), phones);
    }

    pub fn pronunciation(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct phone labels used by any pronunciation.
    pub fn phone_set(&self) -> BTreeSet<&str> {
        self.entries.values().flatten().map(String::as_str).collect()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(w, p)| format!("{w}: {}\n", p.join(" ")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsnArc {
    pub from: usize,
    pub to: usize,
    pub word: String,
}

/// Finite-state command network. Node 0 is START and node 1 is END; every
/// START-to-END path spells one accepted command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandFsn {
    pub num_nodes: usize,
    pub arcs: Vec<FsnArc>,
    pub commands: Vec<Vec<String>>,
}

impl CommandFsn {
    /// Builds a prefix-shared tree over the commands whose leaves merge into END.
    pub fn from_commands(commands: Vec<Vec<String>>) -> Result<Self, GrammarError> {
        let mut unique: Vec<Vec<String>> = Vec::new();
        for c in commands {
            if !c.is_empty() && !unique.contains(&c) {
                unique.push(c);
            }
        }
        if unique.is_empty() {
            return Err(GrammarError::EmptyGrammar);
        }
        // trie nodes: children keyed by word, plus whether a command ends here
        struct TrieNode {
            children: BTreeMap<String, usize>,
            terminal: bool,
        }
        let mut trie = vec![TrieNode { children: BTreeMap::new(), terminal: false }];
        for c in &unique {
            let mut at = 0;
            for w in c {
                let next = match trie[at].children.get(w) {
                    Some(&n) => n,
                    None => {
                        trie.push(TrieNode { children: BTreeMap::new(), terminal: false });
                        let n = trie.len() - 1;
                        trie[at].children.insert(w.clone(), n);
                        n
                    }
                };
                at = next;
            }
            trie[at].terminal = true;
        }
        // trie root -> START; trie nodes with children become interior FSN nodes
        let mut fsn_node = vec![None; trie.len()];
        fsn_node[0] = Some(START);
        let mut num_nodes = 2;
        let mut arcs = Vec::new();
        let mut stack = vec![0usize];
        while let Some(t) = stack.pop() {
            let from = fsn_node[t].unwrap();
            for (w, &child) in &trie[t].children {
                if trie[child].terminal {
                    arcs.push(FsnArc { from, to: END, word: w.clone() });
                }
                if !trie[child].children.is_empty() {
                    fsn_node[child] = Some(num_nodes);
                    arcs.push(FsnArc { from, to: num_nodes, word: w.clone() });
                    num_nodes += 1;
                    stack.push(child);
                }
            }
        }
        arcs.sort_by(|a, b| (a.from, &a.word, a.to).cmp(&(b.from, &b.word, b.to)));
        Ok(Self { num_nodes, arcs, commands: unique })
    }

    pub fn parse(text: &str, lexicon: &Lexicon) -> Result<Self, GrammarError> {
        let mut commands = Vec::new();
        for (line, l) in content_lines(text) {
            let words: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if let Some(w) = words.iter().find(|w| !lexicon.contains(w)) {
                return Err(GrammarError::UnknownWord { line, word: w.clone() });
            }
            commands.push(words);
        }
        Self::from_commands(commands)
    }

    /// A grammar accepting each lexicon word on its own (no language model).
    pub fn isolated_words(lexicon: &Lexicon) -> Result<Self, GrammarError> {
        Self::from_commands(lexicon.words().map(|w| vec![w.to_string()]).collect())
    }

    pub fn to_text(&self) -> String {
        self.commands.iter().map(|c| format!("{}\n", c.join(" "))).collect()
    }

    pub fn out_arcs(&self, node: usize) -> impl Iterator<Item = (usize, &FsnArc)> {
        self.arcs.iter().enumerate().filter(move |(_, a)| a.from == node)
    }

    pub fn accepts<S: AsRef<str>>(&self, words: &[S]) -> bool {
        let mut current: BTreeSet<usize> = BTreeSet::from([START]);
        for w in words {
            current = self
                .arcs
                .iter()
                .filter(|a| current.contains(&a.from) && a.word == w.as_ref())
                .map(|a| a.to)
                .collect();
            if current.is_empty() {
                return false;
            }
        }
        current.contains(&END)
    }

    /// Every accepted word sequence, by walking the network.
    pub fn enumerate(&self, limit: usize) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<String>)> = vec![(START, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            if out.len() >= limit {
                break;
            }
            for (_, a) in self.out_arcs(node) {
                let mut seq = prefix.clone();
                seq.push(a.word.clone());
                if a.to == END {
                    out.push(seq);
                } else {
                    stack.push((a.to, seq));
                }
            }
        }
        out
    }

    pub fn words(&self) -> BTreeSet<&str> {
        self.arcs.iter().map(|a| a.word.as_str()).collect()
    }
}

/// Adjacent-word constraints implied by a command network.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordPairSet {
    pub pairs: BTreeSet<(String, String)>,
    pub initial: BTreeSet<String>,
    pub final_words: BTreeSet<String>,
}

impl WordPairSet {
    pub fn allows<S: AsRef<str>>(&self, words: &[S]) -> bool {
        match (words.first(), words.last()) {
            (Some(f), Some(l)) => {
                self.initial.contains(f.as_ref())
                    && self.final_words.contains(l.as_ref())
                    && words
                        .windows(2)
                        .all(|p| self.pairs.contains(&(p[0].as_ref().to_string(), p[1].as_ref().to_string())))
            }
            _ => false,
        }
    }
}

pub fn word_pairs(fsn: &CommandFsn) -> WordPairSet {
    let mut set = WordPairSet::default();
    for a in &fsn.arcs {
        if a.from == START {
            set.initial.insert(a.word.clone());
        }
        if a.to == END {
            set.final_words.insert(a.word.clone());
        } else {
            for (_, next) in fsn.out_arcs(a.to) {
                set.pairs.insert((a.word.clone(), next.word.clone()));
            }
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingStats {
    pub num_words: usize,
    pub num_commands: usize,
    pub start_branching: usize,
    /// Mean word out-degree over nodes that have outgoing arcs (all but END).
    pub mean_branching: f64,
}

pub fn branching_stats(fsn: &CommandFsn) -> BranchingStats {
    // count accepted paths with a DP over nodes in reverse topological order
    let mut paths = vec![None::<usize>; fsn.num_nodes];
    fn count(node: usize, fsn: &CommandFsn, memo: &mut Vec<Option<usize>>) -> usize {
        if node == END {
            return 1;
        }
        if let Some(c) = memo[node] {
            return c;
        }
        let c = fsn.out_arcs(node).map(|(_, a)| count(a.to, fsn, memo)).sum();
        memo[node] = Some(c);
        c
    }
    let num_commands = count(START, fsn, &mut paths);
    let sources: BTreeSet<usize> = fsn.arcs.iter().map(|a| a.from).collect();
    BranchingStats {
        num_words: fsn.words().len(),
        num_commands,
        start_branching: fsn.out_arcs(START).count(),
        mean_branching: fsn.arcs.len() as f64 / sources.len() as f64,
    }
}
