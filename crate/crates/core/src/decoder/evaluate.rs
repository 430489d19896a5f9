use std::fmt::Write as _;
use std::time::{Duration, Instant};

use super::{DecodeError, DecodeResult};

#[derive(Debug, Clone)]
pub struct TestItem<I> {
    pub input: I,
    pub reference: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub reference: Vec<String>,
    /// 1-based rank of the reference in the N-best list.
    pub rank: Option<usize>,
    pub best: Option<Vec<String>>,
    pub latency: Duration,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.records.len()
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// Fraction of utterances whose reference is within the top `n`.
    pub fn top_n(&self, n: usize) -> f64 {
        let hits = self.records.iter().filter(|r| r.rank.is_some_and(|k| k <= n)).count();
        hits as f64 / self.total() as f64
    }

    pub fn mean_latency(&self) -> Duration {
        self.records.iter().map(|r| r.latency).sum::<Duration>() / self.total() as u32
    }

    /// Nearest-rank 95th percentile.
    pub fn p95_latency(&self) -> Duration {
        let mut l: Vec<Duration> = self.records.iter().map(|r| r.latency).collect();
        l.sort();
        let rank = ((0.95 * l.len() as f64).ceil() as usize).max(1);
        l[rank - 1]
    }

    pub fn max_latency(&self) -> Duration {
        self.records.iter().map(|r| r.latency).max().unwrap_or_default()
    }

    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("utterances", self.total() as f64),
            ("failures", self.failures() as f64),
            ("top1_accuracy", self.top_n(1)),
            ("top3_accuracy", self.top_n(3)),
            ("top6_accuracy", self.top_n(6)),
            ("mean_latency_ms", self.mean_latency().as_secs_f64() * 1e3),
            ("p95_latency_ms", self.p95_latency().as_secs_f64() * 1e3),
        ]
    }

    /// `METRIC <name> <value>` lines.
    pub fn to_metric_lines(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.metrics() {
            writeln!(out, "METRIC {name} {v}").unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<40} {:<40} {:>5} {:>9}", "reference", "top-1", "rank", "ms").unwrap();
        for r in &self.records {
            let best = match (&r.best, &r.error) {
                (Some(b), _) => b.join(" "),
                (None, Some(e)) => format!("<{e}>"),
                (None, None) => String::new(),
            };
            let rank = r.rank.map_or("-".to_string(), |k| k.to_string());
            let ms = r.latency.as_secs_f64() * 1e3;
            writeln!(out, "{:<40} {:<40} {:>5} {:>9.1}", r.reference.join(" "), best, rank, ms).unwrap();
        }
        writeln!(out).unwrap();
        for (name, v) in self.metrics() {
            writeln!(out, "{name:<16} {v:.4}").unwrap();
        }
        out
    }
}

/// Runs `recognize` on every item, timing each call. Decode errors are
/// recorded as misses rather than aborting the run.
pub fn evaluate<I, E: std::fmt::Display>(
    items: &[TestItem<I>],
    mut recognize: impl FnMut(&I) -> Result<DecodeResult, E>,
) -> Result<EvalReport, DecodeError> {
    if items.is_empty() {
        return Err(DecodeError::EmptyTestset);
    }
    let records = items
        .iter()
        .map(|item| {
            let t0 = Instant::now();
            let out = recognize(&item.input);
            let latency = t0.elapsed();
            match out {
                Ok(res) => EvalRecord {
                    reference: item.reference.clone(),
                    rank: res.nbest.iter().position(|h| h.words == item.reference).map(|i| i + 1),
                    best: Some(res.best().words.clone()),
                    latency,
                    error: None,
                },
                Err(e) => EvalRecord {
                    reference: item.reference.clone(),
                    rank: None,
                    best: None,
                    latency,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(EvalReport { records })
}
