#![allow(dead_code)]

use std::sync::OnceLock;

use vocmd::acoustic::AcousticModel;
use vocmd::frontend::FrontendConfig;
use vocmd::grammar::{CommandFsn, Lexicon};
use vocmd::pipeline::{self, LabelledClip};
use vocmd::synth::{self, Corpus, SynthConfig};
use vocmd::train::TrainConfig;

pub struct Fixture {
    pub lexicon: Lexicon,
    pub commands: CommandFsn,
    pub wake: CommandFsn,
    pub corpus: Corpus,
    pub command_tokens: Vec<LabelledClip>,
    pub model: AcousticModel,
}

pub const SEED: u64 = 7;

/// A model trained once per test binary on the bundled synthetic alphabet.
pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let lexicon = synth::default_lexicon();
        let specs = synth::default_phone_specs();
        let fcfg = FrontendConfig::default();
        let scfg = SynthConfig::default();
        let commands = CommandFsn::parse(synth::DEFAULT_COMMANDS, &lexicon).unwrap();
        let wake = CommandFsn::parse(synth::DEFAULT_WAKE_GRAMMAR, &lexicon).unwrap();
        let corpus = synth::generate_corpus(&lexicon, &specs, 5, 4, SEED, 20.0, &scfg, &fcfg).unwrap();
        let command_tokens = synth::generate_tokens(
            &commands.commands,
            &lexicon,
            &specs,
            2,
            SEED,
            synth::COMMAND_STREAM,
            20.0,
            &scfg,
            &fcfg,
        )
        .unwrap();
        let prepared = pipeline::prepare(&corpus.train, &fcfg).unwrap();
        let q = pipeline::train_quantizer(&prepared, &fcfg, [16; 3], 1).unwrap();
        let boot = pipeline::bootstrap(&prepared, &q.codebooks, &lexicon, 1e-6).unwrap();
        let out = pipeline::train(&prepared, &q.codebooks, &lexicon, boot.models, &TrainConfig::default(), |_| {})
            .unwrap();
        let model = AcousticModel::new(q, out.models).unwrap();
        Fixture { lexicon, commands, wake, corpus, command_tokens, model }
    })
}

pub fn test_token<'a>(f: &'a Fixture, word: &str) -> &'a LabelledClip {
    f.corpus.test.iter().find(|t| t.words == [word]).unwrap()
}

pub fn command_token<'a>(f: &'a Fixture, words: &[&str]) -> &'a LabelledClip {
    f.command_tokens.iter().find(|t| t.words == words).unwrap()
}
