//! Per-stream vector quantization: LBG codebook training and nearest-centroid
//! lookup.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::frontend::{FeatureStreams, NUM_STREAMS};

const SPLIT_EPSILON: f64 = 0.01;
const LLOYD_REL_TOL: f64 = 1e-5;
const LLOYD_MAX_ITERS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum VqError {
    #[error("no training vectors")]
    EmptyInput,
    #[error("codebook size must be at least 1")]
    ZeroSize,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing codebook for stream {0}")]
    MissingCodebook(usize),
    #[error("codebook format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub stream_id: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(stream_id: usize, centroids: Vec<Vec<f64>>) -> Result<Self, VqError> {
        let dim = centroids.first().ok_or(VqError::ZeroSize)?.len();
        if let Some(bad) = centroids.iter().find(|c| c.len() != dim) {
            return Err(VqError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VqError::Format("non-finite centroid entry".into()));
        }
        Ok(Self { stream_id, centroids })
    }

    pub fn size(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn quantize(&self, v: &[f64]) -> Result<usize, VqError> {
        if v.len() != self.dim() {
            return Err(VqError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(nearest(&self.centroids, v).0)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "CODEBOOK v1 stream={} K={} dim={}\n",
            self.stream_id,
            self.size(),
            self.dim()
        );
        for c in &self.centroids {
            let row: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VqError> {
        let fmt = |m: String| VqError::Format(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| fmt("empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("CODEBOOK") || fields.next() != Some("v1") {
            return Err(fmt(format!("bad header: {header}")));
        }
        let (mut stream, mut k, mut dim) = (None, None, None);
        for f in fields {
            let (key, val) = f.split_once('=').ok_or_else(|| fmt(format!("bad field {f}")))?;
            let val: usize = val.parse().map_err(|_| fmt(format!("bad value in {f}")))?;
            match key {
                "stream" => stream = Some(val),
                "K" => k = Some(val),
                "dim" => dim = Some(val),
                _ => return Err(fmt(format!("unknown field {key}"))),
            }
        }
        let (stream, k, dim) = match (stream, k, dim) {
            (Some(s), Some(k), Some(d)) => (s, k, d),
            _ => return Err(fmt("header needs stream, K and dim".into())),
        };
        let centroids = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| fmt(format!("bad number {v}"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        if centroids.len() != k {
            return Err(fmt(format!("expected {k} centroids, found {}", centroids.len())));
        }
        if let Some(bad) = centroids.iter().find(|c| c.len() != dim) {
            return Err(VqError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Self::new(stream, centroids)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lowest index.
fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, v);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn quantize(v: &[f64], codebook: &Codebook) -> Result<usize, VqError> {
    codebook.quantize(v)
}

/// Diagnostics from codebook training: total distortion after every Lloyd
/// iteration, one list per Lloyd run (each split or repair starts a new run).
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub lloyd_runs: Vec<Vec<f64>>,
}

impl TrainTrace {
    pub fn final_distortion(&self) -> f64 {
        self.lloyd_runs.last().and_then(|r| r.last()).copied().unwrap_or(0.0)
    }
}

pub fn train_codebook(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<Codebook, VqError> {
    train_codebook_traced(vectors, k, seed, 0).map(|(cb, _)| cb)
}

/// LBG binary splitting with Lloyd refinement.
pub fn train_codebook_traced(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    stream_id: usize,
) -> Result<(Codebook, TrainTrace), VqError> {
    if k == 0 {
        return Err(VqError::ZeroSize);
    }
    let dim = vectors.first().ok_or(VqError::EmptyInput)?.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(VqError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = TrainTrace::default();

    let mut mean = vec![0.0; dim];
    for (n, v) in vectors.iter().enumerate() {
        update_mean(&mut mean, v, n + 1);
    }
    let mut centroids = vec![mean];
    let mut assign = vec![0usize; vectors.len()];
    trace.lloyd_runs.push(vec![lloyd(vectors, &mut centroids, &mut assign, &mut Vec::new())]);

    while centroids.len() < k {
        let per_cell = cell_distortion(vectors, &centroids, &assign);
        let n_split = centroids.len().min(k - centroids.len());
        // split the highest-distortion cells first; all of them when doubling fits
        let mut order: Vec<usize> = (0..centroids.len()).collect();
        order.sort_by(|&a, &b| per_cell[b].total_cmp(&per_cell[a]).then(a.cmp(&b)));
        order.truncate(n_split);
        order.sort_unstable();
        for &j in &order {
            let (up, down) = perturb(&centroids[j]);
            centroids[j] = down;
            centroids.push(up);
        }
        let mut run = Vec::new();
        lloyd(vectors, &mut centroids, &mut assign, &mut run);
        trace.lloyd_runs.push(run);
        repair_empty_cells(vectors, &mut centroids, &mut assign, &mut rng, &mut trace);
    }
    Ok((Codebook::new(stream_id, centroids)?, trace))
}

fn perturb(c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let delta: Vec<f64> = c
        .iter()
        .map(|&x| if x == 0.0 { SPLIT_EPSILON } else { SPLIT_EPSILON * x.abs() })
        .collect();
    (
        c.iter().zip(&delta).map(|(x, d)| x + d).collect(),
        c.iter().zip(&delta).map(|(x, d)| x - d).collect(),
    )
}

/// Lloyd iterations until the relative distortion change drops below the
/// tolerance. Appends the distortion after each iteration to `run` and
/// returns the final distortion.
fn lloyd(vectors: &[Vec<f64>], centroids: &mut [Vec<f64>], assign: &mut [usize], run: &mut Vec<f64>) -> f64 {
    let dim = centroids[0].len();
    let mut prev = f64::INFINITY;
    let mut distortion = 0.0;
    for _ in 0..LLOYD_MAX_ITERS {
        distortion = 0.0;
        for (a, v) in assign.iter_mut().zip(vectors) {
            let (j, d) = nearest(centroids, v);
            *a = j;
            distortion += d;
        }
        run.push(distortion);
        if distortion == 0.0 || (prev - distortion) / prev < LLOYD_REL_TOL {
            break;
        }
        prev = distortion;
        let mut means = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&a, v) in assign.iter().zip(vectors) {
            counts[a] += 1;
            update_mean(&mut means[a], v, counts[a]);
        }
        for ((c, m), &n) in centroids.iter_mut().zip(means).zip(&counts) {
            if n > 0 {
                *c = m;
            }
        }
    }
    distortion
}

/// Running mean after the `n`-th vector; exact when all vectors are equal.
fn update_mean(mean: &mut [f64], v: &[f64], n: usize) {
    mean.iter_mut().zip(v).for_each(|(m, x)| *m += (x - *m) / n as f64);
}

fn cell_distortion(vectors: &[Vec<f64>], centroids: &[Vec<f64>], assign: &[usize]) -> Vec<f64> {
    let mut per = vec![0.0; centroids.len()];
    for (&a, v) in assign.iter().zip(vectors) {
        per[a] += squared_distance(&centroids[a], v);
    }
    per
}

/// Moves each empty centroid onto a member of the highest-distortion cell
/// (chosen by the seeded rng among points not at that cell's centroid),
/// then re-runs Lloyd. Stops when no cell is empty or no cell has spread.
fn repair_empty_cells(
    vectors: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    assign: &mut [usize],
    rng: &mut ChaCha8Rng,
    trace: &mut TrainTrace,
) {
    for _ in 0..centroids.len() {
        let mut counts = vec![0usize; centroids.len()];
        assign.iter().for_each(|&a| counts[a] += 1);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let per_cell = cell_distortion(vectors, centroids, assign);
        let worst = (0..centroids.len())
            .max_by(|&a, &b| per_cell[a].total_cmp(&per_cell[b]).then(b.cmp(&a)))
            .unwrap();
        if per_cell[worst] == 0.0 {
            return;
        }
        let members: Vec<usize> = (0..vectors.len())
            .filter(|&i| assign[i] == worst && squared_distance(&vectors[i], &centroids[worst]) > 0.0)
            .collect();
        let pick = members[rng.gen_range(0..members.len())];
        centroids[empty] = vectors[pick].clone();
        let mut run = Vec::new();
        lloyd(vectors, centroids, assign, &mut run);
        trace.lloyd_runs.push(run);
    }
}

/// Frame-wise codeword index triples.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodewordSequence {
    pub frames: Vec<[usize; NUM_STREAMS]>,
}

impl CodewordSequence {
    pub fn new(frames: Vec<[usize; NUM_STREAMS]>) -> Self {
        Self { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self { frames: self.frames[range].to_vec() }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("CODEWORDS v1 frames={}\n", self.len());
        for f in &self.frames {
            writeln!(out, "{} {} {}", f[0], f[1], f[2]).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VqError> {
        let fmt = |m: String| VqError::Format(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| fmt("empty codeword file".into()))?;
        let n: usize = header
            .strip_prefix("CODEWORDS v1 frames=")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| fmt(format!("bad header: {header}")))?;
        let frames = lines
            .map(|l| {
                let idx: Vec<usize> = l
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| fmt(format!("bad codeword {v}"))))
                    .collect::<Result<_, _>>()?;
                <[usize; NUM_STREAMS]>::try_from(idx).map_err(|_| fmt(format!("expected 3 codewords: {l}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if frames.len() != n {
            return Err(fmt(format!("header says {n} frames, found {}", frames.len())));
        }
        Ok(Self { frames })
    }

    pub fn looks_like_text(bytes: &[u8]) -> bool {
        bytes.starts_with(b"CODEWORDS v1")
    }
}

/// The three per-stream codebooks, indexed by stream id.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    pub books: [Codebook; NUM_STREAMS],
}

impl CodebookSet {
    pub fn from_books(books: Vec<Codebook>) -> Result<Self, VqError> {
        let mut slots: [Option<Codebook>; NUM_STREAMS] = Default::default();
        for b in books {
            let id = b.stream_id;
            if id < NUM_STREAMS {
                slots[id] = Some(b);
            }
        }
        let [a, b, c] = slots;
        Ok(Self {
            books: [
                a.ok_or(VqError::MissingCodebook(0))?,
                b.ok_or(VqError::MissingCodebook(1))?,
                c.ok_or(VqError::MissingCodebook(2))?,
            ],
        })
    }

    pub fn sizes(&self) -> [usize; NUM_STREAMS] {
        [self.books[0].size(), self.books[1].size(), self.books[2].size()]
    }

    /// Trains one codebook per stream over all frames of all inputs.
    pub fn train(features: &[FeatureStreams], k: [usize; NUM_STREAMS], seed: u64) -> Result<Self, VqError> {
        let books = (0..NUM_STREAMS)
            .map(|s| {
                let vectors: Vec<Vec<f64>> = features.iter().flat_map(|f| f.stream(s).map(<[f64]>::to_vec)).collect();
                train_codebook_traced(&vectors, k[s], seed.wrapping_add(s as u64), s).map(|(cb, _)| cb)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_books(books)
    }

    pub fn quantize_streams(&self, features: &FeatureStreams) -> Result<CodewordSequence, VqError> {
        let frames = features
            .frames
            .iter()
            .map(|f| {
                Ok([
                    self.books[0].quantize(&f.streams[0])?,
                    self.books[1].quantize(&f.streams[1])?,
                    self.books[2].quantize(&f.streams[2])?,
                ])
            })
            .collect::<Result<Vec<_>, VqError>>()?;
        Ok(CodewordSequence { frames })
    }
}

/// Quantizes with codebooks given in any order; each stream must be covered.
pub fn quantize_streams(features: &FeatureStreams, codebooks: &[Codebook]) -> Result<CodewordSequence, VqError> {
    CodebookSet::from_books(codebooks.to_vec())?.quantize_streams(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FeatureFrame;

    fn grid_codebook(stream: usize, k: usize) -> Codebook {
        Codebook::new(stream, (0..k).map(|j| vec![j as f64 * 10.0, -(j as f64)]).collect()).unwrap()
    }

    #[test]
    fn identical_points_single_centroid() {
        let pts = vec![vec![1.5, -2.0, 3.0]; 4];
        let (cb, trace) = train_codebook_traced(&pts, 1, 0, 0).unwrap();
        assert_eq!(cb.centroids, vec![vec![1.5, -2.0, 3.0]]);
        assert_eq!(trace.final_distortion(), 0.0);
    }

    #[test]
    fn two_clusters_recover_their_means() {
        let a = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.2]];
        let b = [[100.0, 50.0], [101.0, 52.0], [99.0, 51.0]];
        let pts: Vec<Vec<f64>> = a.iter().chain(&b).map(|p| p.to_vec()).collect();
        // oracle: per-cluster means computed directly
        let mean = |c: &[[f64; 2]]| {
            let n = c.len() as f64;
            vec![c.iter().map(|p| p[0]).sum::<f64>() / n, c.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let mut want = vec![mean(&a), mean(&b)];
        let cb = train_codebook(&pts, 2, 1).unwrap();
        let mut got = cb.centroids.clone();
        got.sort_by(|x, y| x[0].total_cmp(&y[0]));
        want.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for (g, w) in got.iter().zip(&want) {
            for (x, y) in g.iter().zip(w) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k_equals_distinct_points_zero_distortion() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 10.5, -3.0, 7.0]
            .iter()
            .flat_map(|&x| vec![vec![x, x * x]; 2])
            .collect();
        let (cb, trace) = train_codebook_traced(&pts, 6, 3, 0).unwrap();
        assert_eq!(cb.size(), 6);
        assert_eq!(trace.final_distortion(), 0.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(train_codebook(&[], 4, 0), Err(VqError::EmptyInput));
    }

    #[test]
    fn quantize_exact_and_ties() {
        let cb = grid_codebook(0, 8);
        assert_eq!(cb.quantize(&[50.0, -5.0]).unwrap(), 5);
        // equidistant from centroids 2 and 7 along a symmetric layout
        let cb = Codebook::new(
            0,
            (0..8).map(|j| if j == 2 { vec![0.0, 0.0] } else if j == 7 { vec![4.0, 0.0] } else { vec![100.0 + j as f64, 100.0] }).collect(),
        )
        .unwrap();
        assert_eq!(cb.quantize(&[2.0, 3.0]).unwrap(), 2);
        assert_eq!(
            cb.quantize(&[1.0]),
            Err(VqError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn quantize_streams_examples() {
        let books = vec![grid_codebook(2, 4), grid_codebook(0, 4), grid_codebook(1, 10)];
        let empty = FeatureStreams::default();
        assert!(quantize_streams(&empty, &books).unwrap().is_empty());
        let c = |j: usize| vec![j as f64 * 10.0, -(j as f64)];
        let f = FeatureStreams { frames: vec![FeatureFrame { streams: [c(3), c(9), c(0)] }] };
        assert_eq!(quantize_streams(&f, &books).unwrap().frames, vec![[3, 9, 0]]);
        assert_eq!(
            quantize_streams(&f, &books[..2]),
            Err(VqError::MissingCodebook(1))
        );
    }

    #[test]
    fn codebook_text_round_trip() {
        let cb = Codebook::new(1, vec![vec![1.0 / 3.0, -2.5e-7], vec![123456.789, 0.0]]).unwrap();
        let back = Codebook::parse(&cb.to_text()).unwrap();
        assert_eq!(cb, back);
        assert!(Codebook::parse("CODEBOOK v1 stream=0 K=2 dim=1\n1.0\n").is_err());
    }

    #[test]
    fn codeword_text_round_trip() {
        let seq = CodewordSequence::new(vec![[1, 2, 3], [0, 15, 7]]);
        assert_eq!(CodewordSequence::parse(&seq.to_text()).unwrap(), seq);
        assert!(CodewordSequence::parse("CODEWORDS v1 frames=2\n1 2 3\n").is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let pts: Vec<Vec<f64>> = (0..200).map(|i| vec![(i * 37 % 101) as f64, (i * 13 % 17) as f64]).collect();
        assert_eq!(train_codebook(&pts, 16, 9).unwrap(), train_codebook(&pts, 16, 9).unwrap());
    }
}
