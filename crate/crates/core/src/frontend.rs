//! Endpointing and three-stream mel filter-bank feature extraction.
//!
//! The pipeline per clip is: endpoint detection on the raw samples
//! (short-time energy plus zero-crossing rate), slicing to the detected
//! frames, pre-emphasis, Hamming-windowed framing, 15 log mel filter-bank
//! energies per frame, and finally regression deltas and accelerations.
//! Stream 0 holds the static energies, stream 1 the deltas and stream 2 the
//! accelerations.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::{AudioClip, SAMPLE_RATE_HZ};

pub const NUM_STREAMS: usize = 3;
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("no speech detected")]
    NoSpeechDetected,
    #[error("input has {len} samples, shorter than one frame of {frame_len}")]
    InputTooShort { len: usize, frame_len: usize },
    #[error("invalid frontend config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    /// Analysis frame length (256 samples = 16 ms at 16 kHz).
    pub frame_len_samples: usize,
    pub hop_samples: usize,
    pub preemphasis_alpha: f64,
    pub num_filters: usize,
    pub delta_window: usize,
    /// Speech threshold as a multiple of the background frame energy.
    pub ste_threshold_ratio: f64,
    /// Absolute lower bound on the speech energy threshold (sum of squares per frame).
    pub ste_floor: f64,
    /// Zero crossings per frame above which a frame adjacent to speech is kept.
    pub zcr_threshold: usize,
    /// A ZCR-extended frame must also carry this multiple of the background energy.
    pub zcr_min_energy_ratio: f64,
    pub max_zcr_extension_frames: usize,
    pub background_ms: usize,
    pub min_speech_frames: usize,
    pub max_silence_gap_frames: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            frame_len_samples: 256,
            hop_samples: 128,
            preemphasis_alpha: 0.97,
            num_filters: 15,
            delta_window: 2,
            ste_threshold_ratio: 10.0,
            ste_floor: 256.0 * 100.0 * 100.0,
            zcr_threshold: 64,
            zcr_min_energy_ratio: 2.0,
            max_zcr_extension_frames: 6,
            background_ms: 100,
            min_speech_frames: 5,
            max_silence_gap_frames: 25,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<(), FrontendError> {
        let bad = |m: &str| Err(FrontendError::InvalidConfig(m.to_string()));
        if self.frame_len_samples < 2 {
            return bad("frame_len_samples must be at least 2");
        }
        if self.hop_samples == 0 || self.hop_samples > self.frame_len_samples {
            return bad("hop_samples must be in 1..=frame_len_samples");
        }
        if !(0.0..1.0).contains(&self.preemphasis_alpha) {
            return bad("preemphasis_alpha must be in [0, 1)");
        }
        if self.num_filters == 0 {
            return bad("num_filters must be at least 1");
        }
        if self.delta_window == 0 {
            return bad("delta_window must be at least 1");
        }
        if self.min_speech_frames == 0 {
            return bad("min_speech_frames must be at least 1");
        }
        Ok(())
    }

    /// Number of whole frames that fit in `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len_samples {
            0
        } else {
            (len - self.frame_len_samples) / self.hop_samples + 1
        }
    }
}

/// One analysis frame: static, delta and acceleration vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub streams: [Vec<f64>; NUM_STREAMS],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureStreams {
    pub frames: Vec<FeatureFrame>,
}

impl FeatureStreams {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn stream(&self, s: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.frames.iter().map(move |f| f.streams[s].as_slice())
    }
}

/// Inclusive frame range `[start, end]` of the detected word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoints {
    pub start: usize,
    pub end: usize,
}

impl Endpoints {
    pub fn num_frames(&self) -> usize {
        self.end - self.start + 1
    }
}

pub fn short_time_energy(frame: &[f64]) -> f64 {
    frame.iter().map(|s| s * s).sum()
}

pub fn zero_crossings(frame: &[f64]) -> usize {
    frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count()
}

pub fn detect_endpoints(clip: &AudioClip, cfg: &FrontendConfig) -> Result<Endpoints, FrontendError> {
    cfg.validate()?;
    let samples: Vec<f64> = clip.samples().iter().map(|&s| s as f64).collect();
    let n = cfg.num_frames(samples.len());
    if n == 0 {
        return Err(FrontendError::InputTooShort {
            len: samples.len(),
            frame_len: cfg.frame_len_samples,
        });
    }
    let (m, hop) = (cfg.frame_len_samples, cfg.hop_samples);
    let frame = |f: usize| &samples[f * hop..f * hop + m];
    let ste: Vec<f64> = (0..n).map(|f| short_time_energy(frame(f))).collect();
    let zcr: Vec<usize> = (0..n).map(|f| zero_crossings(frame(f))).collect();

    let bg_samples = cfg.background_ms * SAMPLE_RATE_HZ as usize / 1000;
    let bg_frames = cfg.num_frames(bg_samples).clamp(1, n);
    let background = ste[..bg_frames].iter().sum::<f64>() / bg_frames as f64;
    let threshold = (cfg.ste_threshold_ratio * background).max(cfg.ste_floor);

    let mut speech: Vec<bool> = ste.iter().map(|&e| e > threshold).collect();

    // bridge short pauses between speech runs
    let mut last_speech: Option<usize> = None;
    for f in 0..n {
        if speech[f] {
            if let Some(prev) = last_speech {
                let gap = f - prev - 1;
                if gap > 0 && gap <= cfg.max_silence_gap_frames {
                    speech[prev + 1..f].iter_mut().for_each(|s| *s = true);
                }
            }
            last_speech = Some(f);
        }
    }

    let mut runs = Vec::new();
    let mut f = 0;
    while f < n {
        if speech[f] {
            let start = f;
            while f < n && speech[f] {
                f += 1;
            }
            if f - start >= cfg.min_speech_frames {
                runs.push((start, f - 1));
            }
        } else {
            f += 1;
        }
    }
    let (mut start, mut end) = match (runs.first(), runs.last()) {
        (Some(first), Some(last)) => (first.0, last.1),
        _ => return Err(FrontendError::NoSpeechDetected),
    };

    let zcr_frame = |f: usize| {
        zcr[f] >= cfg.zcr_threshold && ste[f] > cfg.zcr_min_energy_ratio * background
    };
    let mut ext = 0;
    while start > 0 && ext < cfg.max_zcr_extension_frames && zcr_frame(start - 1) {
        start -= 1;
        ext += 1;
    }
    ext = 0;
    while end + 1 < n && ext < cfg.max_zcr_extension_frames && zcr_frame(end + 1) {
        end += 1;
        ext += 1;
    }
    Ok(Endpoints { start, end })
}

/// `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn preemphasize(samples: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
    }
    out.extend(samples.windows(2).map(|w| w[1] - alpha * w[0]));
    out
}

pub fn hamming_window(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len)
        .map(|m| 0.54 - 0.46 * (2.0 * PI * m as f64 / denom).cos())
        .collect()
}

pub fn frame_and_window(samples: &[f64], cfg: &FrontendConfig) -> Result<Vec<Vec<f64>>, FrontendError> {
    cfg.validate()?;
    let n = cfg.num_frames(samples.len());
    if n == 0 {
        return Err(FrontendError::InputTooShort {
            len: samples.len(),
            frame_len: cfg.frame_len_samples,
        });
    }
    let window = hamming_window(cfg.frame_len_samples);
    Ok((0..n)
        .map(|f| {
            let off = f * cfg.hop_samples;
            samples[off..off + cfg.frame_len_samples]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the power spectrum of a windowed frame.
pub struct MelFilterbank {
    frame_len: usize,
    fft: Arc<dyn Fft<f64>>,
    /// Per filter: (first bin, weights for consecutive bins).
    filters: Vec<(usize, Vec<f64>)>,
}

impl std::fmt::Debug for MelFilterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFilterbank")
            .field("frame_len", &self.frame_len)
            .field("num_filters", &self.filters.len())
            .finish()
    }
}

impl MelFilterbank {
    pub fn new(frame_len: usize, num_filters: usize) -> Self {
        let nyquist = SAMPLE_RATE_HZ as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..num_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE_HZ as f64 / frame_len as f64;
        let num_bins = frame_len / 2 + 1;
        let filters = (0..num_filters)
            .map(|i| {
                let (lo, centre, hi) = (edges[i], edges[i + 1], edges[i + 2]);
                let weights: Vec<(usize, f64)> = (0..num_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= centre {
                            (f - lo) / (centre - lo)
                        } else if f > centre && f < hi {
                            (hi - f) / (hi - centre)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |&(k, _)| k);
                (first, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        Self {
            frame_len,
            fft,
            filters,
        }
    }

    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    /// Natural-log filter energies of one windowed frame.
    pub fn log_energies(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.frame_len, "frame length mismatch");
        let mut spectrum: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut spectrum);
        let power: Vec<f64> = spectrum[..self.frame_len / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        self.filters
            .iter()
            .map(|(first, weights)| {
                let e: f64 = weights
                    .iter()
                    .zip(&power[*first..])
                    .map(|(w, p)| w * p)
                    .sum();
                (e + LOG_ENERGY_FLOOR).ln()
            })
            .collect()
    }
}

pub fn mel_filterbank_energies(windowed_frame: &[f64], cfg: &FrontendConfig) -> Vec<f64> {
    MelFilterbank::new(cfg.frame_len_samples, cfg.num_filters).log_energies(windowed_frame)
}

/// Regression deltas with clamped edges; returns (delta, acceleration).
pub fn compute_deltas(statics: &[Vec<f64>], window: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let delta = regression(statics, window);
    let accel = regression(&delta, window);
    (delta, accel)
}

fn regression(xs: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let t_max = xs.len().saturating_sub(1) as isize;
    let norm = 2.0 * (1..=window).map(|d| (d * d) as f64).sum::<f64>();
    let at = |t: isize| &xs[t.clamp(0, t_max) as usize];
    (0..xs.len() as isize)
        .map(|t| {
            let dim = xs[t as usize].len();
            let mut out = vec![0.0; dim];
            for d in 1..=window as isize {
                let (fwd, back) = (at(t + d), at(t - d));
                for j in 0..dim {
                    out[j] += d as f64 * (fwd[j] - back[j]);
                }
            }
            out.iter_mut().for_each(|v| *v /= norm);
            out
        })
        .collect()
}

/// Reusable feature extractor holding a validated config and its filterbank.
#[derive(Debug)]
pub struct Frontend {
    cfg: FrontendConfig,
    filterbank: MelFilterbank,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self, FrontendError> {
        cfg.validate()?;
        let filterbank = MelFilterbank::new(cfg.frame_len_samples, cfg.num_filters);
        Ok(Self { cfg, filterbank })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Features for a raw sample range, without endpointing.
    pub fn features_for_samples(&self, samples: &[i16]) -> Result<FeatureStreams, FrontendError> {
        let raw: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
        let emphasized = preemphasize(&raw, self.cfg.preemphasis_alpha);
        let frames = frame_and_window(&emphasized, &self.cfg)?;
        let statics: Vec<Vec<f64>> = frames.iter().map(|f| self.filterbank.log_energies(f)).collect();
        let (delta, accel) = compute_deltas(&statics, self.cfg.delta_window);
        let frames = statics
            .into_iter()
            .zip(delta)
            .zip(accel)
            .map(|((s, d), a)| FeatureFrame { streams: [s, d, a] })
            .collect();
        Ok(FeatureStreams { frames })
    }

    /// Sample range covered by an inclusive frame range.
    pub fn sample_range(&self, ep: Endpoints) -> std::ops::Range<usize> {
        ep.start * self.cfg.hop_samples..ep.end * self.cfg.hop_samples + self.cfg.frame_len_samples
    }

    pub fn extract_with_endpoints(&self, clip: &AudioClip) -> Result<(Endpoints, FeatureStreams), FrontendError> {
        let ep = detect_endpoints(clip, &self.cfg)?;
        let feats = self.features_for_samples(&clip.samples()[self.sample_range(ep)])?;
        debug_assert_eq!(feats.len(), ep.num_frames());
        Ok((ep, feats))
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureStreams, FrontendError> {
        self.extract_with_endpoints(clip).map(|(_, f)| f)
    }

    /// Features of the non-speech audio either side of the endpoints, at most
    /// `max_frames` per side, taken adjacent to the speech.
    pub fn background_features(
        &self,
        clip: &AudioClip,
        ep: Endpoints,
        max_frames: usize,
    ) -> Vec<FeatureStreams> {
        let range = self.sample_range(ep);
        let span = (max_frames.saturating_sub(1)) * self.cfg.hop_samples + self.cfg.frame_len_samples;
        let lead = range.start.saturating_sub(span)..range.start;
        let trail = range.end..(range.end + span).min(clip.len());
        [lead, trail]
            .into_iter()
            .filter_map(|r| self.features_for_samples(&clip.samples()[r]).ok())
            .filter(|f| !f.is_empty())
            .collect()
    }
}

pub fn extract_features(clip: &AudioClip, cfg: &FrontendConfig) -> Result<FeatureStreams, FrontendError> {
    Frontend::new(cfg.clone())?.extract(clip)
}
