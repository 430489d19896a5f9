use super::message::{ClientMessage, Mode, ServiceMessage};
use crate::decoder::DecodeError;
use crate::frontend::FrontendError;
use crate::recognizer::{RecognizeError, Recognizer, Utterance, WakeDetector};

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    /// Nothing decodable in the audio.
    NoSpeech,
    BadPayload(String),
}

impl From<RecognizeError> for EngineError {
    fn from(e: RecognizeError) -> Self {
        match e {
            RecognizeError::Frontend(FrontendError::NoSpeechDetected | FrontendError::InputTooShort { .. })
            | RecognizeError::Decode(DecodeError::NoPathSurvived | DecodeError::EmptyObservation) => {
                EngineError::NoSpeech
            }
            other => EngineError::BadPayload(other.to_string()),
        }
    }
}

/// The recognition side of a session.
pub trait Engine {
    /// The wake word, if the payload contains it.
    fn wake(&self, payload: &[u8]) -> Result<Option<String>, EngineError>;
    /// Ranked `(score, words)` command hypotheses.
    fn command(&self, payload: &[u8]) -> Result<Vec<(f64, Vec<String>)>, EngineError>;
}

pub struct RecognizerEngine {
    pub wake: WakeDetector,
    pub commands: Recognizer,
}

impl Engine for RecognizerEngine {
    fn wake(&self, payload: &[u8]) -> Result<Option<String>, EngineError> {
        Ok(self.wake.detect(&Utterance::from_bytes(payload)?)?)
    }

    fn command(&self, payload: &[u8]) -> Result<Vec<(f64, Vec<String>)>, EngineError> {
        let res = self.commands.recognize(&Utterance::from_bytes(payload)?)?;
        Ok(res.nbest.into_iter().map(|h| (h.log_score, h.words)).collect())
    }
}

/// Mode plus the flag (set means the engine must sleep). `awake` records a
/// wake-word hit that the client has not yet acknowledged with UNSET_FLAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionState {
    pub mode: Mode,
    pub flag: bool,
    pub awake: bool,
}

impl Default for SessionState {
    fn default() -> Self {
        Self { mode: Mode::Sleeping, flag: true, awake: false }
    }
}

impl SessionState {
    pub fn invariant_holds(&self) -> bool {
        (self.mode == Mode::Sleeping) == self.flag && (!self.awake || self.mode == Mode::Sleeping)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: SessionState,
    pub out: Vec<ServiceMessage>,
    /// The client said BYE.
    pub close: bool,
}

fn illegal(state: SessionState, msg: &ClientMessage) -> Step {
    Step {
        state,
        out: vec![ServiceMessage::error("protocol", format!("{} not allowed while {}", msg.name(), state.mode))],
        close: false,
    }
}

/// Applies one client message. Illegal messages leave the state unchanged
/// and produce `ERROR protocol`.
pub fn step(state: SessionState, msg: &ClientMessage, engine: &dyn Engine) -> Step {
    let stay = |out: Vec<ServiceMessage>| Step { state, out, close: false };
    let enter = |mode: Mode, out_before: Vec<ServiceMessage>| {
        let mut out = out_before;
        out.push(ServiceMessage::State(mode));
        Step { state: SessionState { mode, flag: mode == Mode::Sleeping, awake: false }, out, close: false }
    };
    match (state.mode, msg) {
        (_, ClientMessage::Hello) => stay(vec![ServiceMessage::State(state.mode)]),
        (_, ClientMessage::Bye) => Step { state, out: Vec::new(), close: true },
        (Mode::Sleeping, ClientMessage::Audio(payload)) => match engine.wake(payload) {
            Ok(Some(name)) => Step {
                state: SessionState { awake: true, ..state },
                out: vec![ServiceMessage::WakeDetected(name)],
                close: false,
            },
            Ok(None) | Err(EngineError::NoSpeech) => stay(Vec::new()),
            Err(EngineError::BadPayload(e)) => stay(vec![ServiceMessage::error("payload", e)]),
        },
        (Mode::Sleeping, ClientMessage::UnsetFlag) if state.awake => enter(Mode::Listening, Vec::new()),
        (Mode::Listening, ClientMessage::Audio(payload)) => match engine.command(payload) {
            Ok(hyps) if !hyps.is_empty() => {
                let out = hyps
                    .into_iter()
                    .enumerate()
                    .map(|(i, (score, words))| ServiceMessage::Hyp { rank: i + 1, score, words })
                    .collect();
                enter(Mode::Executing, out)
            }
            Ok(_) | Err(EngineError::NoSpeech) => stay(vec![ServiceMessage::NoSpeech]),
            Err(EngineError::BadPayload(e)) => stay(vec![ServiceMessage::error("payload", e)]),
        },
        (Mode::Listening | Mode::Executing, ClientMessage::SetFlag) => enter(Mode::Sleeping, Vec::new()),
        _ => illegal(state, msg),
    }
}

/// Runs a message sequence from the initial state and returns every
/// emitted message, stopping after BYE.
pub fn replay(messages: &[ClientMessage], engine: &dyn Engine) -> Vec<ServiceMessage> {
    let mut state = SessionState::default();
    let mut out = Vec::new();
    for m in messages {
        let s = step(state, m, engine);
        out.extend(s.out);
        state = s.state;
        if s.close {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Payload `w:<word>` is speech of that word; `junk` is unreadable.
    struct Scripted;

    impl Engine for Scripted {
        fn wake(&self, payload: &[u8]) -> Result<Option<String>, EngineError> {
            match payload {
                b"w:kant" => Ok(Some("kant".into())),
                b"junk" => Err(EngineError::BadPayload("junk".into())),
                b"" => Err(EngineError::NoSpeech),
                _ => Ok(None),
            }
        }

        fn command(&self, payload: &[u8]) -> Result<Vec<(f64, Vec<String>)>, EngineError> {
            match payload {
                b"junk" => Err(EngineError::BadPayload("junk".into())),
                b"" => Err(EngineError::NoSpeech),
                p => {
                    let w = String::from_utf8_lossy(&p[2..]).to_string();
                    Ok(vec![(-10.0, vec![w]), (-12.5, vec!["sayk".into()])])
                }
            }
        }
    }

    fn audio(s: &str) -> ClientMessage {
        ClientMessage::Audio(s.as_bytes().to_vec())
    }

    #[test]
    fn handshake_transcript() {
        let msgs = [
            ClientMessage::Hello,
            audio("w:kant"),
            ClientMessage::UnsetFlag,
            audio("w:kulcasayk"),
            ClientMessage::SetFlag,
            ClientMessage::Bye,
            ClientMessage::Hello,
        ];
        let lines: Vec<String> = replay(&msgs, &Scripted).iter().map(ToString::to_string).collect();
        assert_eq!(
            lines,
            [
                "STATE sleeping",
                "WAKE_DETECTED kant",
                "STATE listening",
                "HYP 1 -10.0000 kulcasayk",
                "HYP 2 -12.5000 sayk",
                "STATE executing",
                "STATE sleeping",
            ]
        );
    }

    #[test]
    fn non_wake_audio_is_ignored() {
        let s = step(SessionState::default(), &audio("w:nala"), &Scripted);
        assert_eq!(s.state, SessionState::default());
        assert!(s.out.is_empty());
    }

    #[test]
    fn unset_before_wake_is_illegal() {
        let s = step(SessionState::default(), &ClientMessage::UnsetFlag, &Scripted);
        assert_eq!(s.state, SessionState::default());
        assert!(matches!(&s.out[..], [ServiceMessage::Error { code, .. }] if code == "protocol"));
    }

    #[test]
    fn failures_keep_the_state() {
        let listening = SessionState { mode: Mode::Listening, flag: false, awake: false };
        assert_eq!(step(listening, &audio(""), &Scripted).out, vec![ServiceMessage::NoSpeech]);
        assert_eq!(step(listening, &audio(""), &Scripted).state, listening);
        let s = step(listening, &audio("junk"), &Scripted);
        assert_eq!(s.state, listening);
        assert!(matches!(&s.out[..], [ServiceMessage::Error { code, .. }] if code == "payload"));
    }

    #[test]
    fn random_sequences_keep_the_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = [
            ClientMessage::Hello,
            audio("w:kant"),
            audio("w:nala"),
            audio("junk"),
            audio(""),
            ClientMessage::UnsetFlag,
            ClientMessage::SetFlag,
        ];
        for _ in 0..200 {
            let mut state = SessionState::default();
            for _ in 0..30 {
                let msg = &pool[rng.gen_range(0..pool.len())];
                let s = step(state, msg, &Scripted);
                assert!(s.state.invariant_holds(), "{state:?} + {msg:?} -> {:?}", s.state);
                if state.flag {
                    assert!(!s.out.iter().any(|m| matches!(m, ServiceMessage::Hyp { .. })));
                }
                state = s.state;
            }
        }
    }
}
