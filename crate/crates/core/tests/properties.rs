use std::io::Cursor;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vocmd::audio::AudioClip;
use vocmd::decoder::{compile_network, decode, DecodeError};
use vocmd::frontend::{
    compute_deltas, detect_endpoints, hamming_window, mel_filterbank_energies, preemphasize, short_time_energy,
    FrontendConfig, LOG_ENERGY_FLOOR,
};
use vocmd::grammar::{word_pairs, CommandFsn, Lexicon};
use vocmd::hmm::{
    accumulate_counts, init_flat, path_log_prob, reestimate, viterbi_align, AlignmentStats, CompositeModel,
    PhoneModelSet, PhonemeModel, DEFAULT_EMISSION_FLOOR, NUM_STATES,
};
use vocmd::protocol::{read_client_message, replay, ClientMessage, Engine, EngineError, Mode, ServiceMessage};
use vocmd::synth::{self, SynthConfig};
use vocmd::vq::{train_codebook, train_codebook_traced, Codebook, CodewordSequence};

fn random_model(label: &str, k: usize, rng: &mut ChaCha8Rng) -> PhonemeModel {
    let mut m = init_flat(label, [k; 3]);
    for i in 0..NUM_STATES {
        let stay: f64 = rng.gen_range(0.05..0.95);
        m.log_trans[i][i] = stay.ln();
        m.log_trans[i][i + 1] = (1.0 - stay).ln();
    }
    for row in m.log_emit.iter_mut().flatten() {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let z: f64 = w.iter().sum();
        *row = w.iter().map(|x| (x / z).ln()).collect();
    }
    m
}

fn random_obs(frames: usize, k: usize, rng: &mut ChaCha8Rng) -> CodewordSequence {
    CodewordSequence::new((0..frames).map(|_| [rng.gen_range(0..k), rng.gen_range(0..k), rng.gen_range(0..k)]).collect())
}

fn tone(total: usize, start: usize, len: usize, hz: f64, amp: f64) -> AudioClip {
    let mut s = vec![0i16; total];
    for (i, v) in s[start..start + len].iter_mut().enumerate() {
        *v = (amp * (2.0 * std::f64::consts::PI * hz * i as f64 / 16_000.0).sin()).round() as i16;
    }
    AudioClip::new(s, 16_000).unwrap()
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["kat", "na", "ta", "ak", "n"]).prop_map(str::to_string)
}

fn commands() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(word(), 1..4), 1..7)
}

const LEXICON: &str = "kat: k a t\nna: n a\nta: t a\nak: a k\nn: n\n";

proptest! {
    #[test]
    fn zero_preemphasis_is_identity(x in prop::collection::vec(-32768.0f64..32767.0, 0..64)) {
        prop_assert_eq!(preemphasize(&x, 0.0), x);
    }

    #[test]
    fn windowing_never_adds_energy(x in prop::collection::vec(-32768.0f64..32767.0, 256)) {
        let w = hamming_window(x.len());
        let windowed: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        prop_assert!(short_time_energy(&windowed) <= short_time_energy(&x) + 1e-9);
    }

    #[test]
    fn amplitude_scaling_shifts_log_energies(seed: u64, c in 1.5f64..20.0) {
        let cfg = FrontendConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame: Vec<f64> = (0..cfg.frame_len_samples).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
        let scaled: Vec<f64> = frame.iter().map(|x| x * c).collect();
        let a = mel_filterbank_energies(&frame, &cfg);
        let b = mel_filterbank_energies(&scaled, &cfg);
        for (x, y) in a.iter().zip(&b) {
            if *x > LOG_ENERGY_FLOOR.ln() + 30.0 {
                prop_assert!((y - x - 2.0 * c.ln()).abs() < 1e-6, "{x} -> {y}");
            }
        }
    }

    #[test]
    fn constant_streams_have_zero_deltas(v in prop::collection::vec(-50.0f64..50.0, 1..16), n in 1usize..30) {
        let (d, a) = compute_deltas(&vec![v; n], 2);
        prop_assert!(d.iter().chain(&a).flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn endpoints_follow_translation(start in 3_200usize..6_000, len in 2_000usize..6_000, k in 1usize..8) {
        let cfg = FrontendConfig::default();
        let base = detect_endpoints(&tone(24_000, start, len, 900.0, 8_000.0), &cfg).unwrap();
        let shifted = detect_endpoints(&tone(24_000, start + k * cfg.hop_samples, len, 900.0, 8_000.0), &cfg).unwrap();
        prop_assert_eq!((shifted.start, shifted.end), (base.start + k, base.end + k));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lloyd_distortion_never_rises(seed: u64, n in 4usize..150, k in 1usize..12, dim in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let (_, trace) = train_codebook_traced(&pts, k, seed, 0).unwrap();
        for run in &trace.lloyd_runs {
            for w in run.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{run:?}");
            }
        }
    }

    #[test]
    fn codebooks_are_deterministic_and_quantize_their_centroids(seed: u64, n in 8usize..120, k in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let a = train_codebook(&pts, k, 3).unwrap();
        prop_assert_eq!(&a, &train_codebook(&pts, k, 3).unwrap());
        let distinct = a.centroids.iter().enumerate().all(|(i, c)| a.centroids[..i].iter().all(|d| d != c));
        if distinct {
            for (j, c) in a.centroids.iter().enumerate() {
                prop_assert_eq!(a.quantize(c).unwrap(), j);
            }
        }
        prop_assert_eq!(Codebook::parse(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn reestimation_keeps_models_valid_and_improves_the_path(seed: u64, phones in 1usize..4, extra in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..=6);
        let labels = ["a", "k", "n"];
        let models: Vec<PhonemeModel> = (0..phones).map(|i| random_model(labels[i], k, &mut rng)).collect();
        let chain = CompositeModel::new(models.iter().collect()).unwrap();
        let obs = random_obs(chain.min_frames() + extra, k, &mut rng);
        let al = viterbi_align(&chain, &obs).unwrap();
        let stats = accumulate_counts(&chain, &al.state_path, &obs).unwrap();
        let updated: Vec<PhonemeModel> = models
            .iter()
            .map(|m| reestimate(stats.get(&m.label).unwrap(), m, DEFAULT_EMISSION_FLOOR))
            .collect();
        for m in &updated {
            prop_assert!(m.validate(DEFAULT_EMISSION_FLOOR).is_ok());
        }
        let new_chain = CompositeModel::new(updated.iter().collect()).unwrap();
        let after = path_log_prob(&new_chain, &al.state_path, &obs);
        prop_assert!(after >= al.log_score - 1e-9, "{} -> {after}", al.log_score);
        prop_assert!(viterbi_align(&new_chain, &obs).unwrap().log_score >= after - 1e-9);
    }

    #[test]
    fn stats_merge_in_any_order(seed: u64, utterances in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_model("a", 4, &mut rng);
        let n = random_model("n", 4, &mut rng);
        let mut parts = Vec::new();
        for _ in 0..utterances {
            let chain = if rng.gen_bool(0.5) { vec![&a, &n] } else { vec![&n] };
            let chain = CompositeModel::new(chain).unwrap();
            let obs = random_obs(chain.min_frames() + rng.gen_range(0..6), 4, &mut rng);
            let al = viterbi_align(&chain, &obs).unwrap();
            parts.push(accumulate_counts(&chain, &al.state_path, &obs).unwrap());
        }
        let pool = |order: &[usize]| {
            let mut total = AlignmentStats::default();
            for &i in order {
                total.merge(&parts[i]);
            }
            total
        };
        let forward: Vec<usize> = (0..parts.len()).collect();
        let mut shuffled = forward.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(pool(&forward), pool(&shuffled));
    }

    #[test]
    fn long_sequences_stay_finite(seed: u64, frames in 200usize..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model("a", 8, &mut rng);
        let chain = CompositeModel::new(vec![&m, &m]).unwrap();
        let al = viterbi_align(&chain, &random_obs(frames, 8, &mut rng)).unwrap();
        prop_assert!(al.log_score.is_finite());
    }

    #[test]
    fn grammar_text_round_trips(cmds in commands()) {
        let lex = Lexicon::parse(LEXICON).unwrap();
        let fsn = CommandFsn::from_commands(cmds.clone()).unwrap();
        let again = CommandFsn::parse(&fsn.to_text(), &lex).unwrap();
        let mut a = fsn.enumerate(usize::MAX);
        let mut b = again.enumerate(usize::MAX);
        a.sort();
        b.sort();
        prop_assert_eq!(&a, &b);
        for c in &cmds {
            prop_assert!(again.accepts(c));
        }
    }

    #[test]
    fn word_pairs_match_accepted_sequences(cmds in commands()) {
        let fsn = CommandFsn::from_commands(cmds).unwrap();
        let pairs = word_pairs(&fsn);
        let seqs = fsn.enumerate(usize::MAX);
        for s in &seqs {
            prop_assert!(pairs.allows(s));
        }
        for (x, y) in &pairs.pairs {
            let seen = seqs.iter().any(|s| s.windows(2).any(|w| &w[0] == x && &w[1] == y));
            prop_assert!(seen, "pair {x} {y} never adjacent");
        }
    }

    #[test]
    fn decoder_output_is_licensed_sorted_and_beam_monotone(cmds in commands(), seed: u64, edge: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 3;
        let mut set = PhoneModelSet::default();
        for p in ["a", "k", "n", "t", "SIL"] {
            set.insert(random_model(p, k, &mut rng));
        }
        let lex = Lexicon::parse(LEXICON).unwrap();
        let fsn = CommandFsn::from_commands(cmds).unwrap();
        let net = compile_network(&fsn, &lex, &set, set.get("SIL").unwrap(), edge).unwrap();
        let pairs = word_pairs(&fsn);
        let obs = random_obs(rng.gen_range(9..40), k, &mut rng);
        let mut last = f64::NEG_INFINITY;
        for beam in [2.0, 8.0, 30.0, f64::INFINITY] {
            let r = match decode(&obs, &net, beam, 6) {
                Ok(r) => r,
                Err(DecodeError::NoPathSurvived) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            prop_assert!(r.best().log_score >= last - 1e-9);
            last = r.best().log_score;
            for (i, h) in r.nbest.iter().enumerate() {
                prop_assert!(fsn.accepts(&h.words) && pairs.allows(&h.words));
                prop_assert!(r.nbest[..i].iter().all(|g| g.words != h.words && g.log_score >= h.log_score));
            }
        }
    }
}

fn client_message() -> impl Strategy<Value = ClientMessage> {
    prop_oneof![
        Just(ClientMessage::Hello),
        Just(ClientMessage::UnsetFlag),
        Just(ClientMessage::SetFlag),
        Just(ClientMessage::Bye),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(ClientMessage::Audio),
    ]
}

fn service_message() -> impl Strategy<Value = ServiceMessage> {
    let words = prop::collection::vec("[a-z]{1,8}", 1..4);
    prop_oneof![
        prop::sample::select(vec![Mode::Sleeping, Mode::Listening, Mode::Executing]).prop_map(ServiceMessage::State),
        "[a-z]{1,8}".prop_map(ServiceMessage::WakeDetected),
        (1usize..7, -1.0e5f64..0.0, words).prop_map(|(rank, s, words)| ServiceMessage::Hyp {
            rank,
            score: (s * 1e4).round() / 1e4,
            words
        }),
        Just(ServiceMessage::NoSpeech),
        ("[a-z_]{1,10}", "[a-zA-Z0-9 ]{0,20}")
            .prop_map(|(code, text)| ServiceMessage::Error { code, text: text.trim().to_string() }),
    ]
}

/// Payload bytes pick the outcome: first byte 0 wakes, 1 is silence, 2 is unreadable.
struct ByteEngine;

impl Engine for ByteEngine {
    fn wake(&self, p: &[u8]) -> Result<Option<String>, EngineError> {
        match p.first() {
            Some(0) => Ok(Some("kant".into())),
            Some(1) => Err(EngineError::NoSpeech),
            Some(2) => Err(EngineError::BadPayload("bad".into())),
            _ => Ok(None),
        }
    }

    fn command(&self, p: &[u8]) -> Result<Vec<(f64, Vec<String>)>, EngineError> {
        match p.first() {
            Some(1) | None => Err(EngineError::NoSpeech),
            Some(2) => Err(EngineError::BadPayload("bad".into())),
            Some(&b) => Ok(vec![(-(b as f64), vec!["sayk".into()])]),
        }
    }
}

proptest! {
    #[test]
    fn client_messages_round_trip(msgs in prop::collection::vec(client_message(), 0..8)) {
        let mut wire = Vec::new();
        for m in &msgs {
            m.write_to(&mut wire).unwrap();
        }
        let mut r = Cursor::new(wire);
        let mut back = Vec::new();
        while let Some(m) = read_client_message(&mut r).unwrap() {
            back.push(m);
        }
        prop_assert_eq!(back, msgs);
    }

    #[test]
    fn service_messages_round_trip(m in service_message()) {
        prop_assert_eq!(ServiceMessage::parse(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn replay_is_deterministic(msgs in prop::collection::vec(client_message(), 0..30)) {
        prop_assert_eq!(replay(&msgs, &ByteEngine), replay(&msgs, &ByteEngine));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_tokens_are_reproducible_with_tiling_segments(seed: u64, w in 0usize..30) {
        let lex = synth::default_lexicon();
        let specs = synth::default_phone_specs();
        let word = lex.words().nth(w).unwrap().to_string();
        let items = vec![vec![word]];
        let cfg = SynthConfig::default();
        let fcfg = FrontendConfig::default();
        let a = synth::generate_tokens(&items, &lex, &specs, 1, seed, synth::TEST_STREAM, 20.0, &cfg, &fcfg).unwrap();
        let b = synth::generate_tokens(&items, &lex, &specs, 1, seed, synth::TEST_STREAM, 20.0, &cfg, &fcfg).unwrap();
        prop_assert_eq!(&a, &b);
        if let Some(segs) = &a[0].segments {
            prop_assert_eq!(segs[0].start, 0);
            for p in segs.windows(2) {
                prop_assert_eq!(p[1].start, p[0].end + 1);
            }
            let ep = detect_endpoints(&a[0].clip, &fcfg).unwrap();
            prop_assert_eq!(segs[segs.len() - 1].end + 1, ep.num_frames());
        }
    }
}
