use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use vocmd::acoustic::{load_phones, save_phones, AcousticModel, QuantizerModel};
use vocmd::config::KeyValues;
use vocmd::decoder::{evaluate, TestItem};
use vocmd::frontend::FrontendConfig;
use vocmd::grammar::{CommandFsn, Lexicon};
use vocmd::manifest::read_manifest;
use vocmd::pipeline::{self, load_clips, prepare};
use vocmd::protocol::{RecognizerEngine, ServerHandle, LISTEN_ENV};
use vocmd::recognizer::{DecodeOptions, Recognizer, Utterance, WakeDetector, DEFAULT_BEAM, DEFAULT_WAKE_THRESHOLD};
use vocmd::synth::{self, SynthConfig};
use vocmd::train::TrainConfig;

const DEFAULT_LISTEN: &str = "127.0.0.1:7070";

#[derive(Parser)]
#[command(name = "vocmd", version, about = "Discrete-HMM voice command recognizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the three stream codebooks from a manifest.
    TrainCodebooks(TrainCodebooksArgs),
    /// Initialize phone models from the manifest's phone segments.
    Bootstrap(BootstrapArgs),
    /// Refine phone models by segmental k-means.
    Train(TrainArgs),
    /// Decode one WAV or codeword file.
    Decode(DecodeArgs),
    /// Decode every utterance of a manifest and report accuracy.
    Evaluate(EvaluateArgs),
    /// Run the wake-word command service.
    Serve(ServeArgs),
    /// Generate the synthetic training and test corpus.
    SynthCorpus(SynthArgs),
}

#[derive(Args)]
struct TrainCodebooksArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    /// Codebook size for every stream.
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// `key = value` frontend settings; defaults otherwise.
    #[arg(long)]
    frontend_config: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = vocmd::hmm::DEFAULT_EMISSION_FLOOR)]
    floor: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = vocmd::hmm::DEFAULT_EMISSION_FLOOR)]
    floor: f64,
}

#[derive(Args)]
struct GrammarArgs {
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// Command grammar; every lexicon word on its own when omitted.
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    nbest: usize,
    /// Log-score pruning margin; `inf` for exact search.
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    beam: f64,
    /// No optional silence before the first and after the last word.
    #[arg(long)]
    no_edge_silence: bool,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    /// WAV file or `CODEWORDS v1` text file.
    input: PathBuf,
    /// Print the full result, word spans included, as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Print only the METRIC lines.
    #[arg(long)]
    metrics_only: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// `key = value` file with any of: model_dir, lexicon, grammar,
    /// wake_grammar, listen, beam, nbest, wake_threshold.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    wake_grammar: Option<PathBuf>,
    #[arg(long, env = LISTEN_ENV)]
    listen: Option<String>,
    #[arg(long)]
    beam: Option<f64>,
    #[arg(long)]
    nbest: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    wake_threshold: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    train_tokens: usize,
    #[arg(long, default_value_t = 10)]
    test_tokens: usize,
    /// Test tokens per command of the command grammar.
    #[arg(long, default_value_t = 5)]
    command_tokens: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// SNR of the test tokens; training tokens are clean.
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    /// Phone spec file; the bundled alphabet when omitted.
    #[arg(long)]
    specs: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    commands: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::parse(&read_text(path)?).with_context(|| format!("bad lexicon {}", path.display()))
}

fn load_grammar(path: Option<&Path>, lexicon: &Lexicon) -> Result<CommandFsn> {
    match path {
        Some(p) => CommandFsn::parse(&read_text(p)?, lexicon).with_context(|| format!("bad grammar {}", p.display())),
        None => Ok(CommandFsn::isolated_words(lexicon)?),
    }
}

fn prepared_from_manifest(manifest: &Path, cfg: &FrontendConfig) -> Result<Vec<pipeline::PreparedUtterance>> {
    let entries = read_manifest(manifest)?;
    let clips = load_clips(&entries)?;
    info!("{} utterances in {}", clips.len(), manifest.display());
    Ok(prepare(&clips, cfg)?)
}

fn build_recognizer(args: &GrammarArgs) -> Result<(Recognizer, Lexicon)> {
    let model = AcousticModel::load(&args.model_dir)?;
    let lexicon = load_lexicon(&args.lexicon)?;
    let fsn = load_grammar(args.grammar.as_deref(), &lexicon)?;
    let opts = DecodeOptions { beam: args.beam, n_best: args.nbest, edge_silence: !args.no_edge_silence };
    Ok((Recognizer::new(&model, &fsn, &lexicon, opts)?, lexicon))
}

fn train_codebooks(a: TrainCodebooksArgs) -> Result<()> {
    let cfg = match &a.frontend_config {
        Some(p) => FrontendConfig::from_key_values(&KeyValues::parse(&read_text(p)?)?)?,
        None => FrontendConfig::default(),
    };
    let prepared = prepared_from_manifest(&a.manifest, &cfg)?;
    let q = pipeline::train_quantizer(&prepared, &cfg, [a.k; 3], a.seed)?;
    q.save(&a.model_dir)?;
    println!("codebooks K={:?} written to {}", q.codebooks.sizes(), a.model_dir.display());
    Ok(())
}

fn bootstrap(a: BootstrapArgs) -> Result<()> {
    let q = QuantizerModel::load(&a.model_dir)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let prepared = prepared_from_manifest(&a.manifest, &q.frontend)?;
    let out = pipeline::bootstrap(&prepared, &q.codebooks, &lexicon, a.floor)?;
    if !out.uncovered.is_empty() {
        warn!("phones without bootstrap data: {}", out.uncovered.join(" "));
    }
    save_phones(&a.model_dir, &out.models)?;
    println!("{} phone models written to {}", out.models.len(), a.model_dir.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let q = QuantizerModel::load(&a.model_dir)?;
    let initial = load_phones(&a.model_dir)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let prepared = prepared_from_manifest(&a.manifest, &q.frontend)?;
    let cfg = TrainConfig { max_iterations: a.max_iter, rel_ll_epsilon: a.epsilon, emission_floor: a.floor };
    let out = pipeline::train(&prepared, &q.codebooks, &lexicon, initial, &cfg, |r| println!("{r}"))?;
    AcousticModel::new(q, out.models)?.save(&a.model_dir)?;
    Ok(())
}

fn decode_file(a: DecodeArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let utt = Utterance::from_bytes(&bytes).with_context(|| format!("cannot decode {}", a.input.display()))?;
    let (rec, _) = build_recognizer(&a.grammar)?;
    let res = rec.recognize(&utt)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&res)?);
        return Ok(());
    }
    for (i, h) in res.nbest.iter().enumerate() {
        println!("HYP {} {:.4} {}", i + 1, h.log_score, h.words.join(" "));
    }
    Ok(())
}

fn evaluate_manifest(a: EvaluateArgs) -> Result<()> {
    let (rec, _) = build_recognizer(&a.grammar)?;
    let entries = read_manifest(&a.manifest)?;
    let clips = load_clips(&entries)?;
    let items: Vec<TestItem<_>> = clips.into_iter().map(|c| TestItem { reference: c.words, input: c.clip }).collect();
    let report = evaluate(&items, |clip| rec.recognize_clip(clip))?;
    if !a.metrics_only {
        print!("{}", report.to_table());
    }
    print!("{}", report.to_metric_lines());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let kv = match &a.config {
        Some(p) => {
            let kv = KeyValues::parse(&read_text(p)?).with_context(|| format!("bad config {}", p.display()))?;
            kv.check_keys(&[
                "model_dir",
                "lexicon",
                "grammar",
                "wake_grammar",
                "listen",
                "beam",
                "nbest",
                "wake_threshold",
            ])?;
            kv
        }
        None => KeyValues::default(),
    };
    let path = |flag: Option<PathBuf>, key: &str| -> Result<PathBuf> {
        flag.or_else(|| kv.raw(key).map(PathBuf::from))
            .with_context(|| format!("missing --{} (or `{key}` in the config file)", key.replace('_', "-")))
    };
    let model = AcousticModel::load(&path(a.model_dir, "model_dir")?)?;
    let lexicon = load_lexicon(&path(a.lexicon, "lexicon")?)?;
    let commands = load_grammar(Some(&path(a.grammar, "grammar")?), &lexicon)?;
    let wake = load_grammar(Some(&path(a.wake_grammar, "wake_grammar")?), &lexicon)?;
    let opts = DecodeOptions {
        beam: a.beam.or(kv.get("beam")?).unwrap_or(DEFAULT_BEAM),
        n_best: a.nbest.or(kv.get("nbest")?).unwrap_or(6),
        edge_silence: true,
    };
    let threshold = a.wake_threshold.or(kv.get("wake_threshold")?).unwrap_or(DEFAULT_WAKE_THRESHOLD);
    let engine = RecognizerEngine {
        wake: WakeDetector::new(&model, &wake, &lexicon, opts.clone(), threshold)?,
        commands: Recognizer::new(&model, &commands, &lexicon, opts)?,
    };
    let listen = a.listen.or_else(|| kv.raw("listen").map(str::to_string)).unwrap_or(DEFAULT_LISTEN.to_string());
    let server = ServerHandle::bind(&listen, Arc::new(engine))?;
    println!("listening on {}", server.local_addr());
    server.join();
    Ok(())
}

fn synth_corpus(a: SynthArgs) -> Result<()> {
    let spec_text = match &a.specs {
        Some(p) => read_text(p)?,
        None => synth::DEFAULT_PHONE_SPECS.to_string(),
    };
    let lex_text = match &a.lexicon {
        Some(p) => read_text(p)?,
        None => synth::DEFAULT_LEXICON.to_string(),
    };
    let cmd_text = match &a.commands {
        Some(p) => read_text(p)?,
        None => synth::DEFAULT_COMMANDS.to_string(),
    };
    let specs = synth::parse_phone_specs(&spec_text)?;
    let lexicon = Lexicon::parse(&lex_text)?;
    let commands = CommandFsn::parse(&cmd_text, &lexicon)?;
    if a.snr_db.is_nan() {
        bail!("--snr-db must be a number");
    }
    let cfg = SynthConfig::default();
    let fcfg = FrontendConfig::default();
    let corpus =
        synth::generate_corpus(&lexicon, &specs, a.train_tokens, a.test_tokens, a.seed, a.snr_db, &cfg, &fcfg)?;
    let cmd_tokens = synth::generate_tokens(
        &commands.commands,
        &lexicon,
        &specs,
        a.command_tokens,
        a.seed,
        synth::COMMAND_STREAM,
        a.snr_db,
        &cfg,
        &fcfg,
    )?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    for (name, text) in [
        ("phones.spec", spec_text.as_str()),
        ("words.lex", lex_text.as_str()),
        ("commands.fsn", cmd_text.as_str()),
        ("wake.fsn", synth::DEFAULT_WAKE_GRAMMAR),
    ] {
        let p = a.out_dir.join(name);
        std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    for (tokens, name) in [(&corpus.train, "train"), (&corpus.test, "test"), (&cmd_tokens, "commands")] {
        let m = synth::write_tokens(tokens, &a.out_dir, name)?;
        println!("{} utterances -> {}", tokens.len(), m.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainCodebooks(a) => train_codebooks(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Train(a) => train(a),
        Command::Decode(a) => decode_file(a),
        Command::Evaluate(a) => evaluate_manifest(a),
        Command::Serve(a) => serve(a),
        Command::SynthCorpus(a) => synth_corpus(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
