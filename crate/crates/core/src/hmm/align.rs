use super::model::CompositeModel;
use super::HmmError;
use crate::vq::CodewordSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Flat chain state occupied at each frame.
    pub state_path: Vec<usize>,
    pub log_score: f64,
}

fn check_observations(model: &CompositeModel, obs: &CodewordSequence) -> Result<(), HmmError> {
    for (t, o) in obs.frames.iter().enumerate() {
        if let Some(m) = model.units.iter().find(|m| !m.accepts(o)) {
            return Err(HmmError::CodewordOutOfRange { frame: t, label: m.label.clone() });
        }
    }
    Ok(())
}

/// Best state path through the chain: starts in the first state, ends by
/// taking the exit of the last state after the final frame. Equal scores
/// prefer the predecessor with the lower state index.
pub fn viterbi_align(model: &CompositeModel, obs: &CodewordSequence) -> Result<Alignment, HmmError> {
    let n = model.num_states();
    let t_len = obs.len();
    if t_len < model.min_frames() {
        return Err(HmmError::TooShort { frames: t_len, needed: model.min_frames() });
    }
    check_observations(model, obs)?;

    let self_lp: Vec<f64> = (0..n).map(|s| model.log_self(s)).collect();
    let fwd_lp: Vec<f64> = (0..n).map(|s| model.log_forward(s)).collect();

    let mut score = vec![f64::NEG_INFINITY; n];
    score[0] = model.log_emission(0, &obs.frames[0]);
    // back[t][s]: true when the best predecessor at frame t was s - 1
    let mut back = vec![vec![false; n]; t_len];
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..t_len {
        let o = &obs.frames[t];
        // states reachable at t that can still finish by the last frame
        let lo = (n - 1).saturating_sub(t_len - 1 - t);
        let hi = t.min(n - 1);
        next.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for s in lo..=hi {
            let stay = score[s] + self_lp[s];
            let advance = if s > 0 { score[s - 1] + fwd_lp[s - 1] } else { f64::NEG_INFINITY };
            let (best, from_prev) = if s > 0 && advance >= stay { (advance, true) } else { (stay, false) };
            back[t][s] = from_prev;
            next[s] = best + model.log_emission(s, o);
        }
        std::mem::swap(&mut score, &mut next);
    }
    let log_score = score[n - 1] + fwd_lp[n - 1];
    if log_score == f64::NEG_INFINITY {
        return Err(HmmError::Unalignable);
    }
    let mut state_path = vec![0; t_len];
    let mut s = n - 1;
    for t in (0..t_len).rev() {
        state_path[t] = s;
        if t > 0 && back[t][s] {
            s -= 1;
        }
    }
    debug_assert_eq!(state_path[0], 0);
    Ok(Alignment { state_path, log_score })
}

/// Log probability of a given legal path (transitions, emissions and the final exit).
pub fn path_log_prob(model: &CompositeModel, path: &[usize], obs: &CodewordSequence) -> f64 {
    let mut lp = 0.0;
    for (t, &s) in path.iter().enumerate() {
        if t > 0 {
            let prev = path[t - 1];
            lp += if prev == s { model.log_self(s) } else { model.log_forward(prev) };
        }
        lp += model.log_emission(s, &obs.frames[t]);
    }
    lp + model.log_forward(*path.last().unwrap())
}
