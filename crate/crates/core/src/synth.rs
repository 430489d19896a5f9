//! Synthetic speaker-dependent corpus: each "phone" is a steady sum of
//! sinusoidal partials, words are phone concatenations, and every clip is
//! padded with silence and a noise floor. Phone boundaries are known by
//! construction and become bootstrap segments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{AudioClip, AudioError, SAMPLE_RATE_HZ};
use crate::frontend::{detect_endpoints, Endpoints, FrontendConfig, FrontendError};
use crate::grammar::Lexicon;
use crate::hmm::NUM_STATES;
use crate::manifest::{format_manifest, ManifestEntry};
use crate::phones::SILENCE;
use crate::pipeline::LabelledClip;
use crate::train::Segment;

pub const DEFAULT_PHONE_SPECS: &str = include_str!("../data/phones.spec");
pub const DEFAULT_LEXICON: &str = include_str!("../data/words.lex");
pub const DEFAULT_COMMANDS: &str = include_str!("../data/commands.fsn");
pub const DEFAULT_WAKE_GRAMMAR: &str = include_str!("../data/wake.fsn");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no synthesis spec for phone {0}")]
    MissingSpec(String),
    #[error("empty pronunciation")]
    EmptyPronunciation,
    #[error("word {0} is not in the lexicon")]
    UnknownWord(String),
    #[error("phone spec line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPhoneSpec {
    pub label: String,
    /// (frequency Hz, relative amplitude)
    pub partials: Vec<(f64, f64)>,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Relative per-partial amplitude jitter.
    pub jitter: f64,
}

impl SynthPhoneSpec {
    /// Frequency of the strongest partial.
    pub fn dominant_hz(&self) -> f64 {
        self.partials.iter().fold((0.0, f64::MIN), |b, &(f, a)| if a > b.1 { (f, a) } else { b }).0
    }
}

pub type PhoneSpecs = BTreeMap<String, SynthPhoneSpec>;

const DEFAULT_JITTER: f64 = 0.1;

/// Parses `phone: f1:a1 f2:a2 ... dur:min-max [jitter:j]` lines.
pub fn parse_phone_specs(text: &str) -> Result<PhoneSpecs, SynthError> {
    let mut specs = PhoneSpecs::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| SynthError::Format { line: i + 1, msg };
        let (label, rest) = line.split_once(':').ok_or_else(|| bad("expected `phone: ...`".into()))?;
        let label = label.trim();
        let mut spec = SynthPhoneSpec {
            label: label.to_string(),
            partials: Vec::new(),
            min_frames: 0,
            max_frames: 0,
            jitter: DEFAULT_JITTER,
        };
        for tok in rest.split_whitespace() {
            let (k, v) = tok.split_once(':').ok_or_else(|| bad(format!("bad field {tok}")))?;
            match k {
                "dur" => {
                    let (a, b) = v.split_once('-').ok_or_else(|| bad(format!("bad duration {v}")))?;
                    spec.min_frames = a.parse().map_err(|_| bad(format!("bad duration {v}")))?;
                    spec.max_frames = b.parse().map_err(|_| bad(format!("bad duration {v}")))?;
                }
                "jitter" => spec.jitter = v.parse().map_err(|_| bad(format!("bad jitter {v}")))?,
                _ => {
                    let f: f64 = k.parse().map_err(|_| bad(format!("bad frequency {k}")))?;
                    let a: f64 = v.parse().map_err(|_| bad(format!("bad amplitude {v}")))?;
                    if !(0.0..SAMPLE_RATE_HZ as f64 / 2.0).contains(&f) || a < 0.0 {
                        return Err(bad(format!("partial {tok} out of range")));
                    }
                    spec.partials.push((f, a));
                }
            }
        }
        if spec.partials.is_empty() {
            return Err(bad("no partials".into()));
        }
        if spec.min_frames < NUM_STATES || spec.max_frames < spec.min_frames {
            return Err(bad(format!("duration must satisfy {NUM_STATES} <= min <= max")));
        }
        if specs.insert(label.to_string(), spec).is_some() {
            return Err(bad(format!("duplicate phone {label}")));
        }
    }
    Ok(specs)
}

pub fn format_phone_specs(specs: &PhoneSpecs) -> String {
    let mut out = String::new();
    for s in specs.values() {
        write!(out, "{}:", s.label).unwrap();
        for (f, a) in &s.partials {
            write!(out, " {f}:{a}").unwrap();
        }
        write!(out, " dur:{}-{}", s.min_frames, s.max_frames).unwrap();
        if s.jitter != DEFAULT_JITTER {
            write!(out, " jitter:{}", s.jitter).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn default_phone_specs() -> PhoneSpecs {
    parse_phone_specs(DEFAULT_PHONE_SPECS).expect("bundled phone specs parse")
}

pub fn default_lexicon() -> Lexicon {
    Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub hop_samples: usize,
    /// RMS level of the speech portion before jitter.
    pub target_rms: f64,
    pub level_jitter: f64,
    pub pad_secs: Range<f64>,
    pub pause_ms: Range<f64>,
    /// Standard deviation of the always-present recording noise floor.
    pub noise_floor_std: f64,
    pub ramp_samples: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            hop_samples: 128,
            target_rms: 3000.0,
            level_jitter: 0.1,
            pad_secs: 0.3..0.4,
            pause_ms: 80.0..150.0,
            noise_floor_std: 30.0,
            ramp_samples: 32,
        }
    }
}

/// A synthesized utterance and the sample ranges of its phones (pauses
/// between words are labelled as silence).
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub clip: AudioClip,
    pub phones: Vec<(String, Range<usize>)>,
}

fn phone_wave(spec: &SynthPhoneSpec, n: usize, ramp: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let sr = SAMPLE_RATE_HZ as f64;
    for &(f, a) in &spec.partials {
        let amp = a * (1.0 + spec.jitter * rng.gen_range(-1.0..1.0));
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let w = std::f64::consts::TAU * f / sr;
        for (i, x) in out.iter_mut().enumerate() {
            *x += amp * (w * i as f64 + phase).sin();
        }
    }
    let ramp = ramp.min(n / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos();
        out[i] *= g;
        out[n - 1 - i] *= g;
    }
    out
}

/// Synthesizes a sequence of words (each a phone list), separated by short
/// pauses and surrounded by silence. Noise is white Gaussian at `snr_db`
/// below the speech RMS plus the config's noise floor.
pub fn synthesize_utterance<S: AsRef<str>>(
    words: &[Vec<S>],
    specs: &PhoneSpecs,
    snr_db: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SynthClip, SynthError> {
    if words.is_empty() || words.iter().any(|w| w.is_empty()) {
        return Err(SynthError::EmptyPronunciation);
    }
    let sr = SAMPLE_RATE_HZ as f64;
    let mut speech: Vec<f64> = Vec::new();
    let mut phones: Vec<(String, Range<usize>)> = Vec::new();
    let mut is_speech: Vec<bool> = Vec::new();
    for (wi, word) in words.iter().enumerate() {
        if wi > 0 {
            let n = (rng.gen_range(cfg.pause_ms.clone()) * sr / 1000.0) as usize;
            phones.push((SILENCE.to_string(), speech.len()..speech.len() + n));
            speech.extend(std::iter::repeat_n(0.0, n));
            is_speech.extend(std::iter::repeat_n(false, n));
        }
        for p in word {
            let spec = specs.get(p.as_ref()).ok_or_else(|| SynthError::MissingSpec(p.as_ref().to_string()))?;
            let n = rng.gen_range(spec.min_frames..=spec.max_frames) * cfg.hop_samples;
            let wave = phone_wave(spec, n, cfg.ramp_samples, rng);
            phones.push((spec.label.clone(), speech.len()..speech.len() + n));
            speech.extend(wave);
            is_speech.extend(std::iter::repeat_n(true, n));
        }
    }
    let voiced: Vec<f64> = speech.iter().zip(&is_speech).filter(|(_, &v)| v).map(|(x, _)| *x).collect();
    let rms = (voiced.iter().map(|x| x * x).sum::<f64>() / voiced.len() as f64).sqrt();
    let level = cfg.target_rms * (1.0 + cfg.level_jitter * rng.gen_range(-1.0..1.0));
    let gain = if rms > 0.0 { level / rms } else { 0.0 };

    let lead = (rng.gen_range(cfg.pad_secs.clone()) * sr) as usize;
    let trail = (rng.gen_range(cfg.pad_secs.clone()) * sr) as usize;
    let mut signal = vec![0.0; lead];
    signal.extend(speech.iter().map(|x| x * gain));
    signal.extend(std::iter::repeat_n(0.0, trail));

    let noise_std = if snr_db.is_finite() { level / 10f64.powf(snr_db / 20.0) } else { 0.0 };
    let total_std = (noise_std * noise_std + cfg.noise_floor_std * cfg.noise_floor_std).sqrt();
    if total_std > 0.0 {
        let normal = Normal::new(0.0, total_std).expect("finite noise level");
        for x in signal.iter_mut() {
            *x += normal.sample(rng);
        }
    }
    let samples = signal.iter().map(|x| x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).collect();
    let phones = phones.into_iter().map(|(l, r)| (l, r.start + lead..r.end + lead)).collect();
    Ok(SynthClip { clip: AudioClip::new(samples, SAMPLE_RATE_HZ)?, phones })
}

/// One word from its pronunciation, deterministic per seed.
pub fn synthesize_word<S: AsRef<str>>(
    pronunciation: &[S],
    specs: &PhoneSpecs,
    seed: u64,
    snr_db: f64,
) -> Result<AudioClip, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word: Vec<&str> = pronunciation.iter().map(AsRef::as_ref).collect();
    Ok(synthesize_utterance(&[word], specs, snr_db, &SynthConfig::default(), &mut rng)?.clip)
}

/// Phone segments in endpointed-frame units: each frame is labelled by the
/// phone under its centre sample (frames outside the speech go to the
/// nearest phone), and runs of equal labels become segments.
pub fn frame_segments(
    phones: &[(String, Range<usize>)],
    ep: Endpoints,
    hop: usize,
    frame_len: usize,
) -> Vec<Segment> {
    let mut segments: Vec<(usize, Segment)> = Vec::new();
    for f in ep.start..=ep.end {
        let centre = f * hop + frame_len / 2;
        let idx = phones.iter().position(|(_, r)| centre < r.end).unwrap_or(phones.len() - 1);
        let rel = f - ep.start;
        match segments.last_mut() {
            Some((i, seg)) if *i == idx => seg.end = rel,
            _ => segments.push((idx, Segment::new(&phones[idx].0, rel, rel))),
        }
    }
    segments.into_iter().map(|(_, s)| s).collect()
}

/// Synthesizes `tokens_per_item` tokens of each word sequence. Token `j` of
/// item `i` uses its own ChaCha stream derived from `seed`, `stream_tag`,
/// `i` and `j`, so distinct tags never share a stream. Segments are left
/// out when endpointing cut a phone below the model's minimum duration.
#[allow(clippy::too_many_arguments)]
pub fn generate_tokens(
    items: &[Vec<String>],
    lexicon: &Lexicon,
    specs: &PhoneSpecs,
    tokens_per_item: usize,
    seed: u64,
    stream_tag: u64,
    snr_db: f64,
    cfg: &SynthConfig,
    frontend: &FrontendConfig,
) -> Result<Vec<LabelledClip>, SynthError> {
    let jobs: Vec<(usize, usize)> =
        (0..items.len()).flat_map(|i| (0..tokens_per_item).map(move |j| (i, j))).collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let words = &items[i];
            let prons = words
                .iter()
                .map(|w| lexicon.pronunciation(w).map(<[String]>::to_vec).ok_or_else(|| SynthError::UnknownWord(w.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((stream_tag << 40) | ((i as u64) << 20) | j as u64);
            let synth = synthesize_utterance(&prons, specs, snr_db, cfg, &mut rng)?;
            let segments = match detect_endpoints(&synth.clip, frontend) {
                Ok(ep) => {
                    let segs = frame_segments(&synth.phones, ep, frontend.hop_samples, frontend.frame_len_samples);
                    let expected = synth.phones.len();
                    if segs.len() == expected && segs.iter().all(|s| s.len() >= NUM_STATES) {
                        Some(segs)
                    } else {
                        warn!("token {j} of {}: endpointing clipped a phone; no segments", words.join("+"));
                        None
                    }
                }
                Err(e) => {
                    warn!("token {j} of {}: {e}", words.join("+"));
                    None
                }
            };
            Ok(LabelledClip { words: words.clone(), clip: synth.clip, segments })
        })
        .collect()
}

pub const TRAIN_STREAM: u64 = 1;
pub const TEST_STREAM: u64 = 2;
pub const COMMAND_STREAM: u64 = 3;

/// Clean training and noisy test tokens for every lexicon word.
pub struct Corpus {
    pub train: Vec<LabelledClip>,
    pub test: Vec<LabelledClip>,
}

#[allow(clippy::too_many_arguments)]
pub fn generate_corpus(
    lexicon: &Lexicon,
    specs: &PhoneSpecs,
    tokens_per_word: usize,
    test_tokens_per_word: usize,
    seed: u64,
    test_snr_db: f64,
    cfg: &SynthConfig,
    frontend: &FrontendConfig,
) -> Result<Corpus, SynthError> {
    let items: Vec<Vec<String>> = lexicon.words().map(|w| vec![w.to_string()]).collect();
    let train = generate_tokens(&items, lexicon, specs, tokens_per_word, seed, TRAIN_STREAM, f64::INFINITY, cfg, frontend)?;
    let test = generate_tokens(&items, lexicon, specs, test_tokens_per_word, seed, TEST_STREAM, test_snr_db, cfg, frontend)?;
    Ok(Corpus { train, test })
}

/// Writes `<dir>/<name>/NNNN.wav` per token and `<dir>/<name>.manifest`.
pub fn write_tokens(tokens: &[LabelledClip], dir: &Path, name: &str) -> Result<PathBuf, SynthError> {
    let wav_dir = dir.join(name);
    std::fs::create_dir_all(&wav_dir).map_err(|source| SynthError::Io { path: wav_dir.clone(), source })?;
    let mut entries = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        let path = wav_dir.join(format!("{i:04}.wav"));
        t.clip.write_wav(&path)?;
        entries.push(ManifestEntry { words: t.words.clone(), path, segments: t.segments.clone().unwrap_or_default() });
    }
    let manifest = dir.join(format!("{name}.manifest"));
    std::fs::write(&manifest, format_manifest(&entries, dir))
        .map_err(|source| SynthError::Io { path: manifest.clone(), source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::CommandFsn;
    use crate::train::segments_tile;
    use rustfft::{num_complex::Complex, FftPlanner};

    #[test]
    fn bundled_data_is_consistent() {
        let specs = default_phone_specs();
        assert_eq!(specs.len(), 10);
        let lex = default_lexicon();
        assert_eq!(lex.len(), 30);
        for p in lex.phone_set() {
            assert!(specs.contains_key(p), "{p}");
        }
        let cmds = CommandFsn::parse(DEFAULT_COMMANDS, &lex).unwrap();
        assert_eq!(cmds.commands.len(), 20);
        assert!(cmds.accepts(&["kulcasayk"]));
        let wake = CommandFsn::parse(DEFAULT_WAKE_GRAMMAR, &lex).unwrap();
        assert_eq!(wake.commands, vec![vec!["kant".to_string()]]);
        assert_eq!(parse_phone_specs(&format_phone_specs(&specs)).unwrap(), specs);
    }

    #[test]
    fn spec_errors() {
        for text in ["a 100:1 dur:3-4", "a: dur:3-4", "a: 100:1 dur:2-4", "a: 9000:1 dur:3-4", "a: 100:1 dur:5-4"] {
            assert!(matches!(parse_phone_specs(text), Err(SynthError::Format { line: 1, .. })), "{text}");
        }
    }

    #[test]
    fn peak_is_at_the_dominant_partial() {
        let specs = parse_phone_specs("a: 500:0.2 1250:1.0 3000:0.3 dur:40-40\n").unwrap();
        let clip = synthesize_word(&["a"], &specs, 1, f64::INFINITY).unwrap();
        let x: Vec<Complex<f64>> = clip.samples().iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
        let mut buf = x.clone();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let half = buf.len() / 2;
        let peak = (1..half).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        let hz = peak as f64 * SAMPLE_RATE_HZ as f64 / buf.len() as f64;
        assert!((hz - specs["a"].dominant_hz()).abs() < 2.0, "{hz}");
    }

    #[test]
    fn deterministic_per_seed() {
        let specs = default_phone_specs();
        let a = synthesize_word(&["k", "a", "n", "t"], &specs, 9, f64::INFINITY).unwrap();
        let b = synthesize_word(&["k", "a", "n", "t"], &specs, 9, f64::INFINITY).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthesize_word(&["k", "a", "n", "t"], &specs, 10, f64::INFINITY).unwrap());
        let empty: [&str; 0] = [];
        assert!(matches!(synthesize_word(&empty, &specs, 1, 20.0), Err(SynthError::EmptyPronunciation)));
        assert!(matches!(synthesize_word(&["zz"], &specs, 1, 20.0), Err(SynthError::MissingSpec(_))));
    }

    #[test]
    fn corpus_counts_and_segments() {
        let lex = default_lexicon();
        let corpus = generate_corpus(
            &lex,
            &default_phone_specs(),
            2,
            1,
            5,
            20.0,
            &SynthConfig::default(),
            &FrontendConfig::default(),
        )
        .unwrap();
        assert_eq!(corpus.train.len(), 60);
        assert_eq!(corpus.test.len(), 30);
        let mut with_segments = 0;
        let frontend = crate::frontend::Frontend::new(FrontendConfig::default()).unwrap();
        for t in &corpus.train {
            if let Some(segs) = &t.segments {
                with_segments += 1;
                let frames = frontend.extract(&t.clip).unwrap().len();
                assert!(segments_tile(segs, frames));
                let labels: Vec<&str> = segs.iter().map(|s| s.label.as_str()).collect();
                assert_eq!(labels, lex.pronunciation(&t.words[0]).unwrap());
            }
        }
        assert!(with_segments >= 55, "{with_segments}");
        for a in &corpus.train {
            assert!(corpus.test.iter().all(|b| a.clip != b.clip));
        }
    }

    #[test]
    fn frame_labels_follow_centres() {
        let phones = vec![("k".to_string(), 1000..1640), ("a".to_string(), 1640..2920)];
        // frames 7..=22 with hop 128 and length 256: centres 1024..=2944
        let segs = frame_segments(&phones, Endpoints { start: 7, end: 22 }, 128, 256);
        assert_eq!(segs, vec![Segment::new("k", 0, 4), Segment::new("a", 5, 15)]);
    }
}
