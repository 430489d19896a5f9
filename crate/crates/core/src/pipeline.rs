//! Audio-level training steps: feature extraction over a labelled corpus,
//! codebook training, bootstrap and segmental k-means.

use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::acoustic::QuantizerModel;
use crate::audio::{AudioClip, AudioError};
use crate::frontend::{FeatureStreams, Frontend, FrontendConfig, FrontendError, NUM_STREAMS};
use crate::grammar::Lexicon;
use crate::hmm::{PhoneModelSet, NUM_STATES};
use crate::manifest::ManifestEntry;
use crate::phones::SILENCE;
use crate::train::{
    bootstrap_models, segmental_kmeans_train, BootstrapOutcome, IterationRecord, Segment, TrainConfig, TrainError,
    TrainOutcome, TrainingUtterance,
};
use crate::vq::{CodebookSet, VqError};

/// Background frames taken from each side of the speech for silence data.
pub const BACKGROUND_FRAMES: usize = 12;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Audio {
        path: PathBuf,
        #[source]
        source: AudioError,
    },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no usable utterances")]
    NoData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledClip {
    pub words: Vec<String>,
    pub clip: AudioClip,
    /// Phone segments over the endpointed frames, when known.
    pub segments: Option<Vec<Segment>>,
}

pub fn load_clips(entries: &[ManifestEntry]) -> Result<Vec<LabelledClip>, PipelineError> {
    entries
        .par_iter()
        .map(|e| {
            let clip = AudioClip::read_wav(&e.path).map_err(|source| PipelineError::Audio { path: e.path.clone(), source })?;
            Ok(LabelledClip {
                words: e.words.clone(),
                clip,
                segments: (!e.segments.is_empty()).then(|| e.segments.clone()),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PreparedUtterance {
    pub words: Vec<String>,
    pub segments: Option<Vec<Segment>>,
    pub features: FeatureStreams,
    pub background: Vec<FeatureStreams>,
}

/// Endpoints and extracts every clip; clips with no detectable speech are
/// dropped with a warning.
pub fn prepare(clips: &[LabelledClip], cfg: &FrontendConfig) -> Result<Vec<PreparedUtterance>, PipelineError> {
    let frontend = Frontend::new(cfg.clone())?;
    let out: Vec<Option<PreparedUtterance>> = clips
        .par_iter()
        .map(|c| match frontend.extract_with_endpoints(&c.clip) {
            Ok((ep, features)) => Some(PreparedUtterance {
                words: c.words.clone(),
                segments: c.segments.clone(),
                background: frontend.background_features(&c.clip, ep, BACKGROUND_FRAMES),
                features,
            }),
            Err(e) => {
                warn!("skipping {}: {e}", c.words.join("+"));
                None
            }
        })
        .collect();
    let out: Vec<PreparedUtterance> = out.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(PipelineError::NoData);
    }
    Ok(out)
}

/// Trains one codebook per stream on the speech frames plus the adjacent
/// background frames.
pub fn train_quantizer(
    prepared: &[PreparedUtterance],
    cfg: &FrontendConfig,
    k: [usize; NUM_STREAMS],
    seed: u64,
) -> Result<QuantizerModel, PipelineError> {
    let features: Vec<FeatureStreams> = prepared
        .iter()
        .flat_map(|p| std::iter::once(p.features.clone()).chain(p.background.iter().cloned()))
        .collect();
    let codebooks = CodebookSet::train(&features, k, seed)?;
    Ok(QuantizerModel { frontend: cfg.clone(), codebooks })
}

/// Quantized single-word utterances for training.
pub fn training_utterances(
    prepared: &[PreparedUtterance],
    codebooks: &CodebookSet,
) -> Result<Vec<TrainingUtterance>, PipelineError> {
    let mut out = Vec::with_capacity(prepared.len());
    for p in prepared {
        if p.words.len() != 1 {
            warn!("skipping multi-word training utterance {}", p.words.join("+"));
            continue;
        }
        out.push(TrainingUtterance {
            word: p.words[0].clone(),
            codewords: codebooks.quantize_streams(&p.features)?,
            segments: p.segments.clone(),
        });
    }
    Ok(out)
}

/// Background stretches as one-segment silence utterances.
pub fn silence_utterances(
    prepared: &[PreparedUtterance],
    codebooks: &CodebookSet,
) -> Result<Vec<TrainingUtterance>, PipelineError> {
    let mut out = Vec::new();
    for p in prepared {
        for bg in p.background.iter().filter(|b| b.len() >= NUM_STATES) {
            out.push(TrainingUtterance {
                word: SILENCE.to_string(),
                codewords: codebooks.quantize_streams(bg)?,
                segments: Some(vec![Segment::new(SILENCE, 0, bg.len() - 1)]),
            });
        }
    }
    Ok(out)
}

pub fn bootstrap(
    prepared: &[PreparedUtterance],
    codebooks: &CodebookSet,
    lexicon: &Lexicon,
    emission_floor: f64,
) -> Result<BootstrapOutcome, PipelineError> {
    let mut utts = training_utterances(prepared, codebooks)?;
    utts.extend(silence_utterances(prepared, codebooks)?);
    Ok(bootstrap_models(&utts, lexicon, codebooks.sizes(), emission_floor)?)
}

pub fn train(
    prepared: &[PreparedUtterance],
    codebooks: &CodebookSet,
    lexicon: &Lexicon,
    initial: PhoneModelSet,
    cfg: &TrainConfig,
    on_iteration: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome, PipelineError> {
    let utts = training_utterances(prepared, codebooks)?;
    let out = segmental_kmeans_train(&utts, lexicon, initial, cfg, on_iteration)?;
    info!("training stopped after {} iterations (converged: {})", out.log.len(), out.converged);
    Ok(out)
}
