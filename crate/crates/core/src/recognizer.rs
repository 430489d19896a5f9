//! Audio or codewords in, ranked command hypotheses out.

use thiserror::Error;

use crate::acoustic::AcousticModel;
use crate::audio::{AudioClip, AudioError};
use crate::decoder::{compile_network, decode, DecodeError, DecodeResult, DecodingNetwork};
use crate::frontend::{Frontend, FrontendError};
use crate::grammar::{CommandFsn, Lexicon};
use crate::hmm::{Observation, PhoneModelSet, NUM_STATES};
use crate::phones::SILENCE;
use crate::vq::{CodebookSet, CodewordSequence, VqError};

pub const DEFAULT_BEAM: f64 = 200.0;
pub const DEFAULT_NBEST: usize = 6;
/// Per-frame log-likelihood margin below the filler that still counts as the wake word.
pub const DEFAULT_WAKE_THRESHOLD: f64 = -4.0;

#[derive(Debug, Error)]
pub enum RecognizeError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("codeword payload: {0}")]
    Payload(String),
}

/// One utterance as delivered by a client: WAV bytes or a codeword file.
#[derive(Debug, Clone, PartialEq)]
pub enum Utterance {
    Audio(AudioClip),
    Codewords(CodewordSequence),
}

impl Utterance {
    /// Payloads starting with `RIFF` are WAV; anything else must be a codeword file.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RecognizeError> {
        if bytes.starts_with(b"RIFF") {
            return Ok(Self::Audio(AudioClip::from_wav_bytes(bytes)?));
        }
        let text = std::str::from_utf8(bytes).map_err(|_| RecognizeError::Payload("neither WAV nor UTF-8 text".into()))?;
        CodewordSequence::parse(text).map(Self::Codewords).map_err(|e| RecognizeError::Payload(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Self::Audio(clip) => clip.to_wav_bytes(),
            Self::Codewords(cw) => cw.to_text().into_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOptions {
    pub beam: f64,
    pub n_best: usize,
    /// Allow optional silence before the first and after the last word.
    pub edge_silence: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { beam: DEFAULT_BEAM, n_best: DEFAULT_NBEST, edge_silence: true }
    }
}

/// A compiled grammar ready to decode against one acoustic model.
#[derive(Debug)]
pub struct Recognizer {
    frontend: Frontend,
    codebooks: CodebookSet,
    phones: PhoneModelSet,
    net: DecodingNetwork,
    opts: DecodeOptions,
}

impl Recognizer {
    pub fn new(
        model: &AcousticModel,
        fsn: &CommandFsn,
        lexicon: &Lexicon,
        opts: DecodeOptions,
    ) -> Result<Self, RecognizeError> {
        let silence = model.phones.get(SILENCE).ok_or_else(|| DecodeError::MissingModel(SILENCE.to_string()))?;
        let net = compile_network(fsn, lexicon, &model.phones, silence, opts.edge_silence)?;
        Ok(Self {
            frontend: Frontend::new(model.quantizer.frontend.clone())?,
            codebooks: model.quantizer.codebooks.clone(),
            phones: model.phones.clone(),
            net,
            opts,
        })
    }

    pub fn network(&self) -> &DecodingNetwork {
        &self.net
    }

    pub fn options(&self) -> &DecodeOptions {
        &self.opts
    }

    pub fn codewords(&self, clip: &AudioClip) -> Result<CodewordSequence, RecognizeError> {
        let features = self.frontend.extract(clip)?;
        Ok(self.codebooks.quantize_streams(&features)?)
    }

    pub fn to_codewords(&self, utt: &Utterance) -> Result<CodewordSequence, RecognizeError> {
        match utt {
            Utterance::Audio(clip) => self.codewords(clip),
            Utterance::Codewords(cw) => Ok(cw.clone()),
        }
    }

    pub fn decode_codewords(&self, cw: &CodewordSequence) -> Result<DecodeResult, RecognizeError> {
        Ok(decode(cw, &self.net, self.opts.beam, self.opts.n_best)?)
    }

    pub fn recognize(&self, utt: &Utterance) -> Result<DecodeResult, RecognizeError> {
        self.decode_codewords(&self.to_codewords(utt)?)
    }

    pub fn recognize_clip(&self, clip: &AudioClip) -> Result<DecodeResult, RecognizeError> {
        self.decode_codewords(&self.codewords(clip)?)
    }

    /// Best single-state emission score per frame over every phone model.
    pub fn filler_score(&self, frames: &[Observation]) -> f64 {
        filler_score(&self.phones, frames)
    }
}

/// Sum over frames of the best emission log-probability any state of any
/// model gives the frame: an unconstrained "any sound" reference score.
pub fn filler_score(models: &PhoneModelSet, frames: &[Observation]) -> f64 {
    frames
        .iter()
        .map(|f| {
            models
                .iter()
                .flat_map(|m| (0..NUM_STATES).map(move |j| m.log_emission(j, f)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WakeDecision {
    pub word: Option<String>,
    /// Per-frame log-likelihood of the wake hypothesis relative to the filler.
    pub confidence: f64,
}

/// Decodes against the one-word wake grammar and accepts only when the
/// hypothesis scores close enough to the unconstrained filler.
#[derive(Debug)]
pub struct WakeDetector {
    recognizer: Recognizer,
    pub threshold: f64,
}

impl WakeDetector {
    pub fn new(
        model: &AcousticModel,
        wake_fsn: &CommandFsn,
        lexicon: &Lexicon,
        opts: DecodeOptions,
        threshold: f64,
    ) -> Result<Self, RecognizeError> {
        Ok(Self { recognizer: Recognizer::new(model, wake_fsn, lexicon, DecodeOptions { n_best: 1, ..opts })?, threshold })
    }

    pub fn score(&self, utt: &Utterance) -> Result<WakeDecision, RecognizeError> {
        let cw = self.recognizer.to_codewords(utt)?;
        let res = match self.recognizer.decode_codewords(&cw) {
            Ok(r) => r,
            Err(RecognizeError::Decode(DecodeError::NoPathSurvived)) => {
                return Ok(WakeDecision { word: None, confidence: f64::NEG_INFINITY })
            }
            Err(e) => return Err(e),
        };
        let best = res.best();
        let confidence = (best.log_score - self.recognizer.filler_score(&cw.frames)) / cw.len() as f64;
        let word = (confidence >= self.threshold).then(|| best.words.join(" "));
        Ok(WakeDecision { word, confidence })
    }

    pub fn detect(&self, utt: &Utterance) -> Result<Option<String>, RecognizeError> {
        Ok(self.score(utt)?.word)
    }
}
