use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::HmmError;
use crate::frontend::NUM_STREAMS;

pub const NUM_STATES: usize = 3;
/// Column of the transition matrix holding the exit probability.
pub const EXIT: usize = NUM_STATES;

pub type Observation = [usize; NUM_STREAMS];

/// Three-state left-to-right discrete HMM with one emission table per stream.
///
/// `log_trans[i][j]` for `j < 3` is the log probability of moving from state
/// `i` to state `j`; `log_trans[i][EXIT]` leaves the model. Only self loops,
/// `i -> i+1` and `2 -> exit` are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeModel {
    pub label: String,
    pub log_trans: [[f64; NUM_STATES + 1]; NUM_STATES],
    /// Per stream, `NUM_STATES` rows of `K_s` log probabilities.
    pub log_emit: [Vec<Vec<f64>>; NUM_STREAMS],
}

/// Whether the topology permits a transition from `from` to `to` (`to == EXIT` for leaving).
pub fn allowed(from: usize, to: usize) -> bool {
    to == from || to == from + 1
}

pub fn init_flat(label: &str, ks: [usize; NUM_STREAMS]) -> PhonemeModel {
    let half = 0.5f64.ln();
    let mut log_trans = [[f64::NEG_INFINITY; NUM_STATES + 1]; NUM_STATES];
    for (i, row) in log_trans.iter_mut().enumerate() {
        row[i] = half;
        row[i + 1] = half;
    }
    let log_emit = ks.map(|k| vec![vec![-(k as f64).ln(); k]; NUM_STATES]);
    PhonemeModel {
        label: label.to_string(),
        log_trans,
        log_emit,
    }
}

impl PhonemeModel {
    pub fn ks(&self) -> [usize; NUM_STREAMS] {
        [0, 1, 2].map(|s| self.log_emit[s][0].len())
    }

    /// Sum over streams of the per-stream log emission probabilities.
    #[inline]
    pub fn log_emission(&self, state: usize, obs: &Observation) -> f64 {
        self.log_emit[0][state][obs[0]] + self.log_emit[1][state][obs[1]] + self.log_emit[2][state][obs[2]]
    }

    pub fn accepts(&self, obs: &Observation) -> bool {
        obs.iter().zip(self.ks()).all(|(&c, k)| c < k)
    }

    /// Checks topology, stochastic rows, and the emission floor.
    pub fn validate(&self, emission_floor: f64) -> Result<(), HmmError> {
        let bad = |m: String| Err(HmmError::InvalidModel(format!("{}: {m}", self.label)));
        for (i, row) in self.log_trans.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !allowed(i, j) && v != f64::NEG_INFINITY {
                    return bad(format!("disallowed transition {i}->{j}"));
                }
            }
            let sum: f64 = row.iter().map(|v| v.exp()).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("transition row {i} sums to {sum}"));
            }
        }
        for (s, table) in self.log_emit.iter().enumerate() {
            if table.len() != NUM_STATES || table.iter().any(|r| r.len() != table[0].len() || r.is_empty()) {
                return bad(format!("stream {s} emission table has wrong shape"));
            }
            for (i, row) in table.iter().enumerate() {
                let sum: f64 = row.iter().map(|v| v.exp()).sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return bad(format!("stream {s} state {i} emissions sum to {sum}"));
                }
                if row.iter().any(|v| v.exp() < emission_floor * (1.0 - 1e-9)) {
                    return bad(format!("stream {s} state {i} has an entry below the floor"));
                }
            }
        }
        Ok(())
    }

    /// Number of parameters (transitions and emissions) that differ.
    pub fn count_changed(&self, other: &PhonemeModel) -> usize {
        let t = self
            .log_trans
            .iter()
            .flatten()
            .zip(other.log_trans.iter().flatten())
            .filter(|(a, b)| a != b)
            .count();
        let e = self
            .log_emit
            .iter()
            .flatten()
            .flatten()
            .zip(other.log_emit.iter().flatten().flatten())
            .filter(|(a, b)| a != b)
            .count();
        t + e
    }

    pub fn to_text(&self) -> String {
        let ks = self.ks();
        let mut out = format!(
            "PHONEME v1 label={} streams={} K={},{},{}\n",
            self.label, NUM_STREAMS, ks[0], ks[1], ks[2]
        );
        let row = |out: &mut String, vals: &[f64]| {
            let cells: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        };
        for r in &self.log_trans {
            row(&mut out, r);
        }
        for table in &self.log_emit {
            for r in table {
                row(&mut out, r);
            }
        }
        out
    }
}

/// A set of phoneme models keyed by label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhoneModelSet {
    pub models: BTreeMap<String, PhonemeModel>,
}

impl PhoneModelSet {
    pub fn get(&self, label: &str) -> Option<&PhonemeModel> {
        self.models.get(label)
    }

    pub fn insert(&mut self, model: PhonemeModel) {
        self.models.insert(model.label.clone(), model);
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PhonemeModel> {
        self.models.values()
    }

    pub fn to_text(&self) -> String {
        self.models.values().map(PhonemeModel::to_text).collect()
    }

    pub fn parse(text: &str) -> Result<Self, HmmError> {
        let fmt = |m: String| HmmError::Format(m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut set = PhoneModelSet::default();
        while let Some(header) = lines.next() {
            let mut fields = header.split_whitespace();
            if fields.next() != Some("PHONEME") || fields.next() != Some("v1") {
                return Err(fmt(format!("bad header: {header}")));
            }
            let (mut label, mut ks) = (None, None);
            for f in fields {
                match f.split_once('=') {
                    Some(("label", v)) => label = Some(v.to_string()),
                    Some(("streams", "3")) => {}
                    Some(("K", v)) => {
                        let parsed: Vec<usize> = v
                            .split(',')
                            .map(|k| k.parse().map_err(|_| fmt(format!("bad K {v}"))))
                            .collect::<Result<_, _>>()?;
                        ks = Some(<[usize; NUM_STREAMS]>::try_from(parsed).map_err(|_| fmt(format!("need 3 K values: {v}")))?);
                    }
                    _ => return Err(fmt(format!("bad header field {f}"))),
                }
            }
            let (label, ks) = label.zip(ks).ok_or_else(|| fmt(format!("incomplete header: {header}")))?;
            let mut read_row = |n: usize| -> Result<Vec<f64>, HmmError> {
                let line = lines.next().ok_or_else(|| fmt(format!("{label}: truncated model")))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| fmt(format!("{label}: bad number {v}"))))
                    .collect::<Result<_, _>>()?;
                if row.len() != n {
                    return Err(fmt(format!("{label}: expected {n} values, found {}", row.len())));
                }
                Ok(row)
            };
            let mut log_trans = [[0.0; NUM_STATES + 1]; NUM_STATES];
            for r in log_trans.iter_mut() {
                r.copy_from_slice(&read_row(NUM_STATES + 1)?);
            }
            let mut log_emit: [Vec<Vec<f64>>; NUM_STREAMS] = Default::default();
            for (s, table) in log_emit.iter_mut().enumerate() {
                for _ in 0..NUM_STATES {
                    table.push(read_row(ks[s])?);
                }
            }
            set.insert(PhonemeModel { label, log_trans, log_emit });
        }
        Ok(set)
    }
}

/// An ordered chain of phoneme models joined exit-to-entry.
#[derive(Debug, Clone)]
pub struct CompositeModel<'a> {
    pub units: Vec<&'a PhonemeModel>,
}

impl<'a> CompositeModel<'a> {
    pub fn new(units: Vec<&'a PhonemeModel>) -> Result<Self, HmmError> {
        if units.is_empty() {
            return Err(HmmError::EmptyChain);
        }
        Ok(Self { units })
    }

    /// Builds the chain for a pronunciation, looking each label up in `models`.
    pub fn from_labels<S: AsRef<str>>(models: &'a PhoneModelSet, labels: &[S]) -> Result<Self, HmmError> {
        let units = labels
            .iter()
            .map(|l| models.get(l.as_ref()).ok_or_else(|| HmmError::MissingModel(l.as_ref().to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(units)
    }

    pub fn num_states(&self) -> usize {
        self.units.len() * NUM_STATES
    }

    pub fn min_frames(&self) -> usize {
        self.num_states()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.units.iter().map(|m| m.label.as_str()).collect()
    }

    /// (unit, state within unit) for a flat state index.
    #[inline]
    pub fn locate(&self, state: usize) -> (usize, usize) {
        (state / NUM_STATES, state % NUM_STATES)
    }

    #[inline]
    pub fn log_emission(&self, state: usize, obs: &Observation) -> f64 {
        let (u, j) = self.locate(state);
        self.units[u].log_emission(j, obs)
    }

    pub fn log_self(&self, state: usize) -> f64 {
        let (u, j) = self.locate(state);
        self.units[u].log_trans[j][j]
    }

    /// Log probability of `state -> state + 1`, crossing a unit link when
    /// `state` is the last state of its unit. For the final state this is
    /// the chain's exit probability.
    pub fn log_forward(&self, state: usize) -> f64 {
        let (u, j) = self.locate(state);
        self.units[u].log_trans[j][j + 1]
    }
}
