//! Segmental k-means training of the phoneme models.
//!
//! Models are bootstrapped from pre-segmented utterances (each phone segment
//! split evenly over the three states), then refined by repeatedly aligning
//! every utterance against its word chain, pooling the transition and
//! codeword counts per phoneme, and re-estimating from the pooled counts.
//! Codebooks stay fixed throughout.

use std::fmt;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::frontend::NUM_STREAMS;
use crate::grammar::Lexicon;
use crate::hmm::{
    accumulate_counts, init_flat, reestimate, viterbi_align, Alignment, AlignmentStats, CompositeModel, HmmError,
    PhoneModelSet, DEFAULT_EMISSION_FLOOR, NUM_STATES,
};
use crate::phones;
use crate::vq::CodewordSequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("segment {label} [{start}, {end}] is shorter than {NUM_STATES} frames")]
    SegmentTooShort { label: String, start: usize, end: usize },
    #[error("segments of utterance {index} do not tile its {frames} frames")]
    InvalidSegments { index: usize, frames: usize },
    #[error("utterance {index}: word {word} is not in the lexicon")]
    OutOfLexicon { index: usize, word: String },
    #[error("{failed} of {total} utterances failed to align")]
    TooManyFailures { failed: usize, total: usize },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

/// Inclusive frame span labelled with a phone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(label: &str, start: usize, end: usize) -> Self {
        Self { label: label.to_string(), start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.label, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingUtterance {
    pub word: String,
    pub codewords: CodewordSequence,
    pub segments: Option<Vec<Segment>>,
}

/// Whether segments are ordered, contiguous and exactly cover `0..frames`.
pub fn segments_tile(segments: &[Segment], frames: usize) -> bool {
    let mut next = 0;
    for s in segments {
        if s.start != next || s.end < s.start {
            return false;
        }
        next = s.end + 1;
    }
    next == frames && frames > 0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub rel_ll_epsilon: f64,
    pub emission_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            rel_ll_epsilon: 1e-4,
            emission_floor: DEFAULT_EMISSION_FLOOR,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.max_iterations == 0 {
            return Err(TrainError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.rel_ll_epsilon <= 0.0 {
            return Err(TrainError::InvalidConfig("rel_ll_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// State path dividing `n` frames evenly over the three states, remainder to the last.
pub fn equal_split_path(n: usize) -> Vec<usize> {
    let base = n / NUM_STATES;
    let mut path = Vec::with_capacity(n);
    for state in 0..NUM_STATES - 1 {
        path.extend(std::iter::repeat_n(state, base));
    }
    path.extend(std::iter::repeat_n(NUM_STATES - 1, n - (NUM_STATES - 1) * base));
    path
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub models: PhoneModelSet,
    /// Lexicon phones that had no bootstrap segment and were left flat.
    pub uncovered: Vec<String>,
}

/// Initial models for all phonemes and silence from labelled segments.
pub fn bootstrap_models(
    utterances: &[TrainingUtterance],
    lexicon: &Lexicon,
    ks: [usize; NUM_STREAMS],
    emission_floor: f64,
) -> Result<BootstrapOutcome, TrainError> {
    let mut pooled = AlignmentStats::default();
    for (index, utt) in utterances.iter().enumerate() {
        let Some(segments) = &utt.segments else { continue };
        if !segments_tile(segments, utt.codewords.len()) {
            return Err(TrainError::InvalidSegments { index, frames: utt.codewords.len() });
        }
        for seg in segments {
            if seg.len() < NUM_STATES {
                return Err(TrainError::SegmentTooShort { label: seg.label.clone(), start: seg.start, end: seg.end });
            }
            let flat = init_flat(&seg.label, ks);
            let chain = CompositeModel::new(vec![&flat])?;
            let obs = utt.codewords.slice(seg.start..seg.end + 1);
            pooled.merge(&accumulate_counts(&chain, &equal_split_path(seg.len()), &obs)?);
        }
    }
    let mut models = PhoneModelSet::default();
    for label in phones::all_labels() {
        let flat = init_flat(label, ks);
        models.insert(match pooled.get(label) {
            Some(stats) => reestimate(stats, &flat, emission_floor),
            None => flat,
        });
    }
    // labels outside the inventory can still be bootstrapped from segments
    for (label, stats) in &pooled.per_phone {
        if models.get(label).is_none() {
            models.insert(reestimate(stats, &init_flat(label, ks), emission_floor));
        }
    }
    let uncovered: Vec<String> = lexicon
        .phone_set()
        .into_iter()
        .filter(|p| pooled.get(p).is_none())
        .map(str::to_string)
        .collect();
    if !uncovered.is_empty() {
        warn!("no bootstrap segments for {}; using flat models", uncovered.join(" "));
    }
    Ok(BootstrapOutcome { models, uncovered })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordSegmentation {
    pub phones: Vec<Segment>,
    pub alignment: Alignment,
}

/// Splits an utterance into phone segments by Viterbi alignment against the
/// word's phone chain; the phone boundaries are where the path crosses from
/// one unit into the next.
pub fn segment_word(word_model: &CompositeModel, obs: &CodewordSequence) -> Result<WordSegmentation, HmmError> {
    let alignment = viterbi_align(word_model, obs)?;
    let labels = word_model.labels();
    let mut phones: Vec<Segment> = Vec::with_capacity(labels.len());
    for (t, &s) in alignment.state_path.iter().enumerate() {
        let (unit, _) = word_model.locate(s);
        match phones.get_mut(unit) {
            Some(seg) => seg.end = t,
            None => phones.push(Segment::new(labels[unit], t, t)),
        }
    }
    Ok(WordSegmentation { phones, alignment })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total_ll: f64,
    pub changed_params: usize,
    pub skipped: usize,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ITER {} total_ll={:.6} changed_params={}",
            self.iteration, self.total_ll, self.changed_params
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: PhoneModelSet,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

fn word_chain<'a>(models: &'a PhoneModelSet, lexicon: &Lexicon, word: &str) -> Result<CompositeModel<'a>, HmmError> {
    let pron = lexicon.pronunciation(word).expect("words are checked against the lexicon up front");
    CompositeModel::from_labels(models, pron)
}

/// Runs the segment / pool / re-estimate loop until the relative improvement
/// of the total alignment log-likelihood drops below the configured epsilon,
/// no parameter changes, or the iteration cap is reached.
///
/// `on_iteration` sees each record as soon as its iteration completes.
pub fn segmental_kmeans_train(
    corpus: &[TrainingUtterance],
    lexicon: &Lexicon,
    initial: PhoneModelSet,
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    for (index, u) in corpus.iter().enumerate() {
        if !lexicon.contains(&u.word) {
            return Err(TrainError::OutOfLexicon { index, word: u.word.clone() });
        }
        word_chain(&initial, lexicon, &u.word)?;
    }

    let mut models = initial;
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_iterations {
        let results: Vec<Result<(AlignmentStats, f64), HmmError>> = corpus
            .par_iter()
            .map(|u| {
                let chain = word_chain(&models, lexicon, &u.word)?;
                let seg = segment_word(&chain, &u.codewords)?;
                let stats = accumulate_counts(&chain, &seg.alignment.state_path, &u.codewords)?;
                Ok((stats, seg.alignment.log_score))
            })
            .collect();

        let mut pooled = AlignmentStats::default();
        let mut total_ll = 0.0;
        let mut skipped = 0;
        for (i, r) in results.iter().enumerate() {
            match r {
                Ok((stats, ll)) => {
                    pooled.merge(stats);
                    total_ll += ll;
                }
                Err(e) => {
                    warn!("iteration {iteration}: skipping utterance {i} ({}): {e}", corpus[i].word);
                    skipped += 1;
                }
            }
        }
        if skipped * 2 > corpus.len() {
            return Err(TrainError::TooManyFailures { failed: skipped, total: corpus.len() });
        }

        let mut changed_params = 0;
        let mut next = models.clone();
        for (label, stats) in &pooled.per_phone {
            let prev = models.get(label).expect("aligned phones have models");
            let updated = reestimate(stats, prev, cfg.emission_floor);
            changed_params += updated.count_changed(prev);
            next.insert(updated);
        }
        models = next;

        let record = IterationRecord { iteration, total_ll, changed_params, skipped };
        on_iteration(&record);
        let improvement = log.last().map(|prev| (total_ll - prev.total_ll) / prev.total_ll.abs());
        log.push(record);
        if changed_params == 0 || improvement.is_some_and(|r| r < cfg.rel_ll_epsilon) {
            converged = true;
            break;
        }
    }
    Ok(TrainOutcome { models, log, converged })
}
