use std::collections::BTreeMap;

use super::model::{allowed, CompositeModel, PhonemeModel, EXIT, NUM_STATES};
use super::HmmError;
use crate::frontend::NUM_STREAMS;
use crate::vq::CodewordSequence;

/// Transition and emission counts for one phoneme model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneStats {
    pub trans: [[u64; NUM_STATES + 1]; NUM_STATES],
    /// `emit[s][i][k]`: frames in state `i` carrying codeword `k` on stream `s`.
    pub emit: [Vec<Vec<u64>>; NUM_STREAMS],
}

impl PhoneStats {
    pub fn zeros(ks: [usize; NUM_STREAMS]) -> Self {
        Self {
            trans: [[0; NUM_STATES + 1]; NUM_STATES],
            emit: ks.map(|k| vec![vec![0; k]; NUM_STATES]),
        }
    }

    pub fn merge(&mut self, other: &PhoneStats) {
        for (a, b) in self.trans.iter_mut().flatten().zip(other.trans.iter().flatten()) {
            *a += b;
        }
        for (a, b) in self.emit.iter_mut().flatten().flatten().zip(other.emit.iter().flatten().flatten()) {
            *a += b;
        }
    }

    pub fn occupancy(&self, state: usize) -> u64 {
        self.emit[0][state].iter().sum()
    }
}

/// Count statistics pooled per phoneme label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignmentStats {
    pub per_phone: BTreeMap<String, PhoneStats>,
}

impl AlignmentStats {
    pub fn merge(&mut self, other: &AlignmentStats) {
        for (label, stats) in &other.per_phone {
            match self.per_phone.get_mut(label) {
                Some(mine) => mine.merge(stats),
                None => {
                    self.per_phone.insert(label.clone(), stats.clone());
                }
            }
        }
    }

    pub fn get(&self, label: &str) -> Option<&PhoneStats> {
        self.per_phone.get(label)
    }
}

/// Checks that `path` starts at state 0, only stays or advances by one, and
/// ends in the chain's last state.
pub fn check_path(model: &CompositeModel, path: &[usize], frames: usize) -> Result<(), HmmError> {
    let illegal = |m: &str| Err(HmmError::IllegalPath(m.to_string()));
    if path.is_empty() {
        return illegal("empty path");
    }
    if path.len() != frames {
        return illegal("path and observation lengths differ");
    }
    if path[0] != 0 {
        return illegal("path must start in the first state");
    }
    if *path.last().unwrap() != model.num_states() - 1 {
        return illegal("path must end in the last state");
    }
    if path.windows(2).any(|w| w[1] != w[0] && w[1] != w[0] + 1) {
        return illegal("only self and next-state transitions are allowed");
    }
    Ok(())
}

pub fn accumulate_counts(
    model: &CompositeModel,
    path: &[usize],
    obs: &CodewordSequence,
) -> Result<AlignmentStats, HmmError> {
    check_path(model, path, obs.len())?;
    let mut stats = AlignmentStats::default();
    for (t, &s) in path.iter().enumerate() {
        let (u, j) = model.locate(s);
        let unit = model.units[u];
        if !unit.accepts(&obs.frames[t]) {
            return Err(HmmError::CodewordOutOfRange { frame: t, label: unit.label.clone() });
        }
        let entry = stats
            .per_phone
            .entry(unit.label.clone())
            .or_insert_with(|| PhoneStats::zeros(unit.ks()));
        for (st, &c) in obs.frames[t].iter().enumerate() {
            entry.emit[st][j][c] += 1;
        }
        let to = match path.get(t + 1) {
            Some(&next) if next == s => j,
            _ => j + 1, // next state, unit exit, or the final exit
        };
        entry.trans[j][to] += 1;
    }
    Ok(stats)
}

/// Relative frequencies `count / total` of a count row (no flooring).
pub fn count_ratios(counts: &[u64]) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Maximum-likelihood distribution for `counts` subject to every entry being
/// at least `floor`: floored entries sit exactly at the floor and the rest
/// share the remaining mass in proportion to their counts.
pub fn floored_distribution(counts: &[u64], floor: f64) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let k = counts.len();
    if floor * k as f64 >= 1.0 {
        return Some(vec![1.0 / k as f64; k]);
    }
    let mut clamped: Vec<bool> = counts.iter().map(|&c| c == 0).collect();
    loop {
        let n_clamped = clamped.iter().filter(|&&c| c).count();
        let free_mass = 1.0 - floor * n_clamped as f64;
        let free_total: u64 = counts.iter().zip(&clamped).filter(|(_, &c)| !c).map(|(&n, _)| n).sum();
        let scale = free_mass / free_total as f64;
        let mut changed = false;
        for (i, &n) in counts.iter().enumerate() {
            if !clamped[i] && scale * (n as f64) < floor {
                clamped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Some(
                counts
                    .iter()
                    .zip(&clamped)
                    .map(|(&n, &c)| if c { floor } else { scale * n as f64 })
                    .collect(),
            );
        }
    }
}

/// Count-ratio re-estimation of one model. Transition rows are
/// `count(i -> j) / count(i -> any)`; emission rows are floored
/// relative frequencies. Rows with no counts keep `previous`'s values.
pub fn reestimate(stats: &PhoneStats, previous: &PhonemeModel, floor: f64) -> PhonemeModel {
    let mut model = previous.clone();
    for i in 0..NUM_STATES {
        if let Some(ratios) = count_ratios(&stats.trans[i]) {
            for j in 0..=EXIT {
                model.log_trans[i][j] = if allowed(i, j) { ratios[j].ln() } else { f64::NEG_INFINITY };
            }
        }
        for s in 0..NUM_STREAMS {
            if let Some(probs) = floored_distribution(&stats.emit[s][i], floor) {
                model.log_emit[s][i] = probs.into_iter().map(f64::ln).collect();
            }
        }
    }
    model
}
