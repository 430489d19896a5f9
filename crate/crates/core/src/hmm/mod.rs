//! Discrete multi-stream phoneme HMMs: representation, Viterbi alignment and
//! count-based re-estimation.

mod align;
mod estimate;
mod model;

use thiserror::Error;

pub use align::{path_log_prob, viterbi_align, Alignment};
pub use estimate::{
    accumulate_counts, check_path, count_ratios, floored_distribution, reestimate, AlignmentStats, PhoneStats,
};
pub use model::{allowed, init_flat, CompositeModel, Observation, PhoneModelSet, PhonemeModel, EXIT, NUM_STATES};

pub const DEFAULT_EMISSION_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("observation of {frames} frames is too short for a chain needing {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("no path through the chain has nonzero probability")]
    Unalignable,
    #[error("illegal state path: {0}")]
    IllegalPath(String),
    #[error("codeword at frame {frame} is outside the codebook of model {label}")]
    CodewordOutOfRange { frame: usize, label: String },
    #[error("empty model chain")]
    EmptyChain,
    #[error("no model for phone {0}")]
    MissingModel(String),
    #[error("invalid model {0}")]
    InvalidModel(String),
    #[error("model format: {0}")]
    Format(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vq::CodewordSequence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A model with random stochastic rows over the allowed topology.
    pub(crate) fn random_model(label: &str, ks: [usize; 3], rng: &mut impl Rng) -> PhonemeModel {
        let mut m = init_flat(label, ks);
        for i in 0..NUM_STATES {
            let stay: f64 = rng.gen_range(0.05..0.95);
            m.log_trans[i][i] = stay.ln();
            m.log_trans[i][i + 1] = (1.0 - stay).ln();
        }
        for table in m.log_emit.iter_mut() {
            for row in table.iter_mut() {
                let w: Vec<f64> = (0..row.len()).map(|_| rng.gen_range(0.01..1.0)).collect();
                let z: f64 = w.iter().sum();
                *row = w.iter().map(|x| (x / z).ln()).collect();
            }
        }
        m
    }

    /// Every legal path of `frames` frames through `n` chain states.
    fn enumerate_paths(n: usize, frames: usize) -> Vec<Vec<usize>> {
        fn rec(n: usize, frames: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if path.len() == frames {
                if *path.last().unwrap() == n - 1 {
                    out.push(path.clone());
                }
                return;
            }
            let s = *path.last().unwrap();
            for next in [s, s + 1] {
                if next < n {
                    path.push(next);
                    rec(n, frames, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(n, frames, &mut vec![0], &mut out);
        out
    }

    /// Brute-force path score, computed directly from the model tables.
    fn brute_score(units: &[&PhonemeModel], path: &[usize], obs: &CodewordSequence) -> f64 {
        let mut lp = 0.0;
        for (t, &s) in path.iter().enumerate() {
            let (u, j) = (s / 3, s % 3);
            let m = units[u];
            if t > 0 {
                let p = path[t - 1];
                let (pu, pj) = (p / 3, p % 3);
                lp += if p == s { m.log_trans[j][j] } else { units[pu].log_trans[pj][pj + 1] };
            }
            lp += (0..3).map(|st| m.log_emit[st][j][obs.frames[t][st]]).sum::<f64>();
        }
        let last = *path.last().unwrap();
        lp + units[last / 3].log_trans[2][EXIT]
    }

    #[test]
    fn flat_model_examples() {
        let m = init_flat("a", [4, 4, 4]);
        assert!(m.log_emit.iter().flatten().flatten().all(|&v| v == 0.25f64.ln()));
        assert_eq!(m.log_trans[2][0], f64::NEG_INFINITY);
        assert_eq!(m.log_trans[0][2], f64::NEG_INFINITY);
        m.validate(0.0).unwrap();
    }

    #[test]
    fn forced_three_frame_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model("a", [4, 4, 4], &mut rng);
        let chain = CompositeModel::new(vec![&m]).unwrap();
        let obs = CodewordSequence::new(vec![[0, 1, 2], [3, 3, 3], [1, 0, 2]]);
        let a = viterbi_align(&chain, &obs).unwrap();
        assert_eq!(a.state_path, vec![0, 1, 2]);
        let want = m.log_emission(0, &obs.frames[0])
            + m.log_trans[0][1]
            + m.log_emission(1, &obs.frames[1])
            + m.log_trans[1][2]
            + m.log_emission(2, &obs.frames[2])
            + m.log_trans[2][EXIT];
        assert!((a.log_score - want).abs() < 1e-12);
    }

    #[test]
    fn too_short_for_the_chain() {
        let m = init_flat("a", [4, 4, 4]);
        let chain = CompositeModel::new(vec![&m]).unwrap();
        let obs = CodewordSequence::new(vec![[0, 0, 0]; 2]);
        assert_eq!(viterbi_align(&chain, &obs), Err(HmmError::TooShort { frames: 2, needed: 3 }));
    }

    #[test]
    fn unalignable_when_every_path_is_impossible() {
        let mut m = init_flat("a", [2, 2, 2]);
        m.log_emit[0][1] = vec![0.0, f64::NEG_INFINITY];
        let chain = CompositeModel::new(vec![&m]).unwrap();
        let obs = CodewordSequence::new(vec![[1, 0, 0]; 3]);
        assert_eq!(viterbi_align(&chain, &obs), Err(HmmError::Unalignable));
    }

    #[test]
    fn five_frames_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = random_model("a", [3, 4, 2], &mut rng);
            let chain = CompositeModel::new(vec![&m]).unwrap();
            let obs = CodewordSequence::new(
                (0..5).map(|_| [rng.gen_range(0..3), rng.gen_range(0..4), rng.gen_range(0..2)]).collect(),
            );
            let a = viterbi_align(&chain, &obs).unwrap();
            let best = enumerate_paths(3, 5)
                .iter()
                .map(|p| brute_score(&[&m], p, &obs))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((a.log_score - best).abs() <= 1e-9);
            assert!((path_log_prob(&chain, &a.state_path, &obs) - a.log_score).abs() <= 1e-9);
        }
    }

    #[test]
    fn ties_prefer_the_lower_predecessor() {
        // flat model: every 4-frame path has the same score, so the path
        // should advance as early as possible
        let m = init_flat("a", [2, 2, 2]);
        let chain = CompositeModel::new(vec![&m]).unwrap();
        let obs = CodewordSequence::new(vec![[0, 0, 0]; 4]);
        assert_eq!(viterbi_align(&chain, &obs).unwrap().state_path, vec![0, 0, 1, 2]);
    }

    #[test]
    fn long_sequences_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model("a", [16, 16, 16], &mut rng);
        let chain = CompositeModel::new(vec![&m, &m]).unwrap();
        let obs = CodewordSequence::new((0..1000).map(|_| [rng.gen_range(0..16); 3]).collect());
        let a = viterbi_align(&chain, &obs).unwrap();
        assert!(a.log_score.is_finite() && a.log_score < -1000.0);
    }

    #[test]
    fn realignment_after_reestimation_never_loses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let a = random_model("a", [4, 4, 4], &mut rng);
            let b = random_model("b", [4, 4, 4], &mut rng);
            let chain = CompositeModel::new(vec![&a, &b]).unwrap();
            let obs = CodewordSequence::new((0..12).map(|_| [rng.gen_range(0..4); 3]).collect());
            let al = viterbi_align(&chain, &obs).unwrap();
            let stats = accumulate_counts(&chain, &al.state_path, &obs).unwrap();
            let a2 = reestimate(stats.get("a").unwrap(), &a, DEFAULT_EMISSION_FLOOR);
            let b2 = reestimate(stats.get("b").unwrap(), &b, DEFAULT_EMISSION_FLOOR);
            a2.validate(DEFAULT_EMISSION_FLOOR).unwrap();
            b2.validate(DEFAULT_EMISSION_FLOOR).unwrap();
            let chain2 = CompositeModel::new(vec![&a2, &b2]).unwrap();
            let same_path = path_log_prob(&chain2, &al.state_path, &obs);
            assert!(same_path >= al.log_score - 1e-9);
            assert!(viterbi_align(&chain2, &obs).unwrap().log_score >= same_path - 1e-9);
        }
    }

    #[test]
    fn model_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = PhoneModelSet::default();
        set.insert(random_model("a", [4, 5, 6], &mut rng));
        set.insert(init_flat("SIL", [2, 2, 2]));
        let text = set.to_text();
        assert!(text.contains("-inf"));
        assert_eq!(PhoneModelSet::parse(&text).unwrap(), set);
        assert!(PhoneModelSet::parse("PHONEME v1 label=a streams=3 K=2,2,2\n0 0 0 0\n").is_err());
    }
}
