//! C ABI over the vocmd recognizer.
//!
//! Every entry point returns a [`VocmdStatus`]; on failure a message is kept
//! per thread and can be read with [`vocmd_last_error`]. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vocmd::acoustic::AcousticModel;
use vocmd::audio::AudioClip;
use vocmd::decoder::DecodeError;
use vocmd::frontend::FrontendError;
use vocmd::grammar::{CommandFsn, Lexicon};
use vocmd::recognizer::{DecodeOptions, RecognizeError, Recognizer, Utterance};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocmdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Model = 5,
    Grammar = 6,
    NoSpeech = 7,
    BadPayload = 8,
    Internal = 9,
}

/// A loaded acoustic model compiled against one grammar.
pub struct VocmdRecognizer {
    inner: Recognizer,
}

/// Ranked hypotheses of one decode.
pub struct VocmdResult {
    scores: Vec<f64>,
    words: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VocmdStatus, String);

impl Failure {
    fn new(status: VocmdStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

impl From<RecognizeError> for Failure {
    fn from(e: RecognizeError) -> Self {
        let status = match &e {
            RecognizeError::Frontend(FrontendError::NoSpeechDetected | FrontendError::InputTooShort { .. })
            | RecognizeError::Decode(DecodeError::NoPathSurvived | DecodeError::EmptyObservation) => {
                VocmdStatus::NoSpeech
            }
            RecognizeError::Decode(DecodeError::UnknownWord(_) | DecodeError::MissingModel(_)) => VocmdStatus::Grammar,
            _ => VocmdStatus::BadPayload,
        };
        Self(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VocmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VocmdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            VocmdStatus::Internal
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::new(VocmdStatus::NullArgument, format!("{name} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(VocmdStatus::InvalidUtf8, format!("{name} is not UTF-8")))?;
    Ok(Path::new(s))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(VocmdStatus::Io, format!("{}: {e}", path.display())))
}

fn into_result(res: vocmd::decoder::DecodeResult) -> Box<VocmdResult> {
    let scores = res.nbest.iter().map(|h| h.log_score).collect();
    let words = res.nbest.iter().map(|h| CString::new(h.words.join(" ")).unwrap_or_default()).collect();
    Box::new(VocmdResult { scores, words })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vocmd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vocmd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model directory and compiles a grammar. A NULL `grammar_path`
/// recognizes every lexicon word on its own. A non-finite `beam` disables
/// pruning.
///
/// # Safety
/// Path arguments must be NULL or NUL-terminated strings; `out` must be a
/// valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn vocmd_recognizer_new(
    model_dir: *const c_char,
    lexicon_path: *const c_char,
    grammar_path: *const c_char,
    beam: f64,
    n_best: usize,
    out: *mut *mut VocmdRecognizer,
) -> VocmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(VocmdStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        if n_best == 0 || beam.is_nan() || beam <= 0.0 {
            return Err(Failure::new(VocmdStatus::InvalidArgument, "n_best must be positive and beam above zero"));
        }
        let model_dir = path_arg(model_dir, "model_dir")?;
        let lexicon_path = path_arg(lexicon_path, "lexicon_path")?;
        let model = AcousticModel::load(model_dir).map_err(|e| Failure::new(VocmdStatus::Model, e))?;
        let lexicon = Lexicon::parse(&read_text(lexicon_path)?).map_err(|e| Failure::new(VocmdStatus::Grammar, e))?;
        let fsn = if grammar_path.is_null() {
            CommandFsn::isolated_words(&lexicon)
        } else {
            CommandFsn::parse(&read_text(path_arg(grammar_path, "grammar_path")?)?, &lexicon)
        }
        .map_err(|e| Failure::new(VocmdStatus::Grammar, e))?;
        let opts = DecodeOptions { beam, n_best, edge_silence: true };
        let inner = Recognizer::new(&model, &fsn, &lexicon, opts).map_err(|e| Failure::new(VocmdStatus::Grammar, e))?;
        *out = Box::into_raw(Box::new(VocmdRecognizer { inner }));
        Ok(())
    })
}

/// # Safety
/// `rec` must be NULL or a handle from [`vocmd_recognizer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vocmd_recognizer_free(rec: *mut VocmdRecognizer) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

unsafe fn run(
    rec: *const VocmdRecognizer,
    out: *mut *mut VocmdResult,
    utt: impl FnOnce() -> Result<Utterance, Failure>,
) -> VocmdStatus {
    guard(|| {
        if out.is_null() || rec.is_null() {
            return Err(Failure::new(VocmdStatus::NullArgument, "recognizer or out is null"));
        }
        *out = ptr::null_mut();
        let res = (*rec).inner.recognize(&utt()?)?;
        *out = Box::into_raw(into_result(res));
        Ok(())
    })
}

/// Decodes mono 16-bit PCM.
///
/// # Safety
/// `samples` must point to `len` readable values; `rec` must be a live
/// handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vocmd_recognize_pcm(
    rec: *const VocmdRecognizer,
    samples: *const i16,
    len: usize,
    sample_rate_hz: u32,
    out: *mut *mut VocmdResult,
) -> VocmdStatus {
    run(rec, out, || {
        if samples.is_null() && len > 0 {
            return Err(Failure::new(VocmdStatus::NullArgument, "samples is null"));
        }
        let pcm = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(samples, len).to_vec() };
        let clip = AudioClip::new(pcm, sample_rate_hz).map_err(|e| Failure::new(VocmdStatus::BadPayload, e))?;
        Ok(Utterance::Audio(clip))
    })
}

/// Decodes a payload in wire format: WAV bytes or a codeword text file.
///
/// # Safety
/// `data` must point to `len` readable bytes; `rec` must be a live handle
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vocmd_recognize_bytes(
    rec: *const VocmdRecognizer,
    data: *const u8,
    len: usize,
    out: *mut *mut VocmdResult,
) -> VocmdStatus {
    run(rec, out, || {
        if data.is_null() && len > 0 {
            return Err(Failure::new(VocmdStatus::NullArgument, "data is null"));
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        Ok(Utterance::from_bytes(bytes)?)
    })
}

/// Number of hypotheses, best first. Zero for a NULL handle.
///
/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn vocmd_result_count(res: *const VocmdResult) -> usize {
    res.as_ref().map_or(0, |r| r.scores.len())
}

/// Log score of hypothesis `index`, or NaN when out of range.
///
/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn vocmd_result_score(res: *const VocmdResult, index: usize) -> f64 {
    res.as_ref().and_then(|r| r.scores.get(index).copied()).unwrap_or(f64::NAN)
}

/// Space-separated words of hypothesis `index`, or NULL when out of range.
/// Owned by the result.
///
/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn vocmd_result_words(res: *const VocmdResult, index: usize) -> *const c_char {
    res.as_ref().and_then(|r| r.words.get(index)).map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `res` must be NULL or a result handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vocmd_result_free(res: *mut VocmdResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
