//! 16 kHz / 16-bit mono audio clips and their RIFF WAV encoding.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use thiserror::Error;

pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio clip has no samples")]
    Empty,
    #[error("unsupported sample_rate {0} Hz (expected 16000)")]
    SampleRate(u32),
    #[error("unsupported channels {0} (expected mono)")]
    Channels(u16),
    #[error("unsupported bits_per_sample {0} (expected 16)")]
    BitsPerSample(u16),
    #[error("unsupported sample_format {0} (expected integer PCM)")]
    SampleFormat(&'static str),
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw speech samples, the engine's only input medium.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioClip {
    samples: Vec<i16>,
}

impl AudioClip {
    pub fn new(samples: Vec<i16>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(AudioError::SampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        SAMPLE_RATE_HZ
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE_HZ as f64
    }

    pub fn from_wav_reader<R: Read>(reader: R) -> Result<Self, AudioError> {
        let wav = hound::WavReader::new(reader).map_err(wav_error)?;
        let spec = wav.spec();
        if spec.sample_format != hound::SampleFormat::Int {
            return Err(AudioError::SampleFormat("float"));
        }
        if spec.channels != 1 {
            return Err(AudioError::Channels(spec.channels));
        }
        if spec.sample_rate != SAMPLE_RATE_HZ {
            return Err(AudioError::SampleRate(spec.sample_rate));
        }
        if spec.bits_per_sample != 16 {
            return Err(AudioError::BitsPerSample(spec.bits_per_sample));
        }
        let samples = wav
            .into_samples::<i16>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(wav_error)?;
        Self::new(samples, SAMPLE_RATE_HZ)
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, AudioError> {
        Self::from_wav_reader(Cursor::new(bytes))
    }

    pub fn read_wav(path: &Path) -> Result<Self, AudioError> {
        let file = std::fs::File::open(path).map_err(|source| AudioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_wav_reader(std::io::BufReader::new(file))
    }

    pub fn write_wav_to<W: Write + Seek>(&self, writer: W) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE_HZ,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(writer, spec).map_err(wav_error)?;
        for &s in &self.samples {
            w.write_sample(s).map_err(wav_error)?;
        }
        w.finalize().map_err(wav_error)
    }

    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::with_capacity(44 + 2 * self.samples.len()));
        self.write_wav_to(&mut buf)
            .expect("in-memory WAV encoding cannot fail");
        buf.into_inner()
    }

    pub fn write_wav(&self, path: &Path) -> Result<(), AudioError> {
        std::fs::write(path, self.to_wav_bytes()).map_err(|source| AudioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn wav_error(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(err) => AudioError::Malformed(err.to_string()),
        other => AudioError::Malformed(other.to_string()),
    }
}
