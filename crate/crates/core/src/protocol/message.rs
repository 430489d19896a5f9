use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

pub const MAX_PAYLOAD_BYTES: usize = 32 << 20;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("payload of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Sleeping,
    Listening,
    Executing,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sleeping => "sleeping",
            Mode::Listening => "listening",
            Mode::Executing => "executing",
        })
    }
}

impl FromStr for Mode {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sleeping" => Ok(Mode::Sleeping),
            "listening" => Ok(Mode::Listening),
            "executing" => Ok(Mode::Executing),
            _ => Err(ProtocolError::Malformed(format!("unknown mode {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientMessage {
    Hello,
    Audio(Vec<u8>),
    UnsetFlag,
    SetFlag,
    Bye,
}

impl ClientMessage {
    pub fn name(&self) -> &'static str {
        match self {
            ClientMessage::Hello => "HELLO",
            ClientMessage::Audio(_) => "AUDIO",
            ClientMessage::UnsetFlag => "UNSET_FLAG",
            ClientMessage::SetFlag => "SET_FLAG",
            ClientMessage::Bye => "BYE",
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        match self {
            ClientMessage::Audio(payload) => {
                writeln!(w, "AUDIO {}", payload.len())?;
                w.write_all(payload)
            }
            other => writeln!(w, "{}", other.name()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec");
        out
    }
}

fn read_line<R: BufRead>(r: &mut R) -> Result<Option<String>, ProtocolError> {
    let mut buf = Vec::new();
    if r.read_until(b'\n', &mut buf)? == 0 {
        return Ok(None);
    }
    while matches!(buf.last(), Some(b'\n' | b'\r')) {
        buf.pop();
    }
    String::from_utf8(buf).map(Some).map_err(|_| ProtocolError::Malformed("line is not UTF-8".into()))
}

/// Reads the next client message; `Ok(None)` at end of stream.
pub fn read_client_message<R: BufRead>(r: &mut R) -> Result<Option<ClientMessage>, ProtocolError> {
    let Some(line) = read_line(r)? else { return Ok(None) };
    let mut parts = line.split_whitespace();
    let msg = match (parts.next(), parts.next(), parts.next()) {
        (Some("HELLO"), None, _) => ClientMessage::Hello,
        (Some("UNSET_FLAG"), None, _) => ClientMessage::UnsetFlag,
        (Some("SET_FLAG"), None, _) => ClientMessage::SetFlag,
        (Some("BYE"), None, _) => ClientMessage::Bye,
        (Some("AUDIO"), Some(n), None) => {
            let n: usize = n.parse().map_err(|_| ProtocolError::Malformed(line.clone()))?;
            if n > MAX_PAYLOAD_BYTES {
                return Err(ProtocolError::TooLarge(n));
            }
            let mut payload = vec![0; n];
            r.read_exact(&mut payload)?;
            ClientMessage::Audio(payload)
        }
        _ => return Err(ProtocolError::Malformed(line)),
    };
    Ok(Some(msg))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceMessage {
    State(Mode),
    WakeDetected(String),
    Hyp { rank: usize, score: f64, words: Vec<String> },
    NoSpeech,
    Error { code: String, text: String },
}

impl ServiceMessage {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServiceMessage::Error { code: code.to_string(), text: text.into() }
    }

    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let bad = || ProtocolError::Malformed(line.to_string());
        let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
        Ok(match head {
            "STATE" => ServiceMessage::State(rest.parse()?),
            "WAKE_DETECTED" if !rest.is_empty() => ServiceMessage::WakeDetected(rest.to_string()),
            "NO_SPEECH" if rest.is_empty() => ServiceMessage::NoSpeech,
            "HYP" => {
                let mut f = rest.split_whitespace();
                let rank = f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                let score = f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                let words: Vec<String> = f.map(str::to_string).collect();
                if words.is_empty() {
                    return Err(bad());
                }
                ServiceMessage::Hyp { rank, score, words }
            }
            "ERROR" if !rest.is_empty() => {
                let (code, text) = rest.split_once(' ').unwrap_or((rest, ""));
                ServiceMessage::error(code, text)
            }
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for ServiceMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceMessage::State(m) => write!(f, "STATE {m}"),
            ServiceMessage::WakeDetected(name) => write!(f, "WAKE_DETECTED {name}"),
            ServiceMessage::Hyp { rank, score, words } => write!(f, "HYP {rank} {score:.4} {}", words.join(" ")),
            ServiceMessage::NoSpeech => f.write_str("NO_SPEECH"),
            ServiceMessage::Error { code, text } if text.is_empty() => write!(f, "ERROR {code}"),
            ServiceMessage::Error { code, text } => write!(f, "ERROR {code} {text}"),
        }
    }
}
