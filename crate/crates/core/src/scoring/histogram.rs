//! Shared binning, empirical PDFs and the intersection similarity.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest bin count `shared_edges` will produce.
pub const MAX_BINS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    #[default]
    FreedmanDiaconis,
    FixedWidth,
    FixedEdges,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    #[default]
    PooledMinMax,
    ReferenceMinMax,
    Explicit,
}

/// What happens to samples outside the outermost edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRange {
    /// The outermost bins extend to infinity.
    #[default]
    Extend,
    /// Samples are counted in `n_out_of_range` and excluded from the bins.
    Drop,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinPolicy {
    pub mode: BinMode,
    pub width: Option<f64>,
    pub edges: Option<Vec<f64>>,
    pub range_mode: RangeMode,
    pub range: Option<[f64; 2]>,
    pub out_of_range: OutOfRange,
}

impl BinPolicy {
    pub fn fixed_width(width: f64) -> Self {
        Self {
            mode: BinMode::FixedWidth,
            width: Some(width),
            ..Self::default()
        }
    }

    pub fn fixed_edges(edges: Vec<f64>) -> Self {
        Self {
            mode: BinMode::FixedEdges,
            edges: Some(edges),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_total: u64,
    pub n_out_of_range: u64,
}

/// Bin probabilities over shared edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPdf {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
    /// Source counts, when the PDF was built from samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    pub n_total: u64,
}

impl EmpiricalPdf {
    /// PDF given directly by its probabilities.
    pub fn from_probs(edges: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if probs.len() + 1 != edges.len() {
            return Err(Error::LengthMismatch {
                left: edges.len() - 1,
                right: probs.len(),
            });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument("probabilities must be finite and >= 0".into()));
        }
        Ok(Self {
            edges,
            probs,
            counts: None,
            n_total: 0,
        })
    }
}

impl From<Histogram> for EmpiricalPdf {
    fn from(h: Histogram) -> Self {
        let n = h.n_total as f64;
        Self {
            probs: h.counts.iter().map(|&c| c as f64 / n).collect(),
            edges: h.edges,
            counts: Some(h.counts),
            n_total: h.n_total,
        }
    }
}

pub fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "bin edges must be finite and strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interquartile range.
pub fn iqr(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
}

/// Freedman-Diaconis bin width: 2 IQR n^(-1/3).
pub fn freedman_diaconis_width(samples: &[f64]) -> f64 {
    2.0 * iqr(samples) * (samples.len() as f64).powf(-1.0 / 3.0)
}

fn min_max(samples: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    samples.fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

/// One edge set for both samples, so their PDFs can be compared bin by bin.
pub fn shared_edges(reference: &[f64], candidate: &[f64], policy: &BinPolicy) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::Empty("reference sample".into()));
    }
    if let BinMode::FixedEdges = policy.mode {
        let edges = policy
            .edges
            .clone()
            .ok_or_else(|| Error::InvalidArgument("fixed_edges mode needs `edges`".into()))?;
        check_edges(&edges)?;
        return Ok(edges);
    }
    let pooled = || reference.iter().chain(candidate).copied();
    let (lo, hi) = match policy.range_mode {
        RangeMode::PooledMinMax => min_max(pooled()).expect("reference is non-empty"),
        RangeMode::ReferenceMinMax => min_max(reference.iter().copied()).expect("non-empty"),
        RangeMode::Explicit => {
            let [lo, hi] = policy
                .range
                .ok_or_else(|| Error::InvalidArgument("explicit range mode needs `range`".into()))?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("bad explicit range [{lo}, {hi}]")));
            }
            (lo, hi)
        }
    };
    let span = hi - lo;
    if span == 0.0 {
        return Ok(vec![lo - 0.5, lo + 0.5]);
    }
    let width = match policy.mode {
        BinMode::FixedWidth => {
            let w = policy
                .width
                .ok_or_else(|| Error::InvalidArgument("fixed_width mode needs `width`".into()))?;
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!("bin width must be > 0, got {w}")));
            }
            w
        }
        BinMode::FreedmanDiaconis => {
            let all: Vec<f64> = pooled().collect();
            if iqr(&all) == 0.0 {
                span / 50.0
            } else {
                freedman_diaconis_width(&all).max(1e-9)
            }
        }
        BinMode::FixedEdges => unreachable!(),
    };
    let count = ((span / width) - 1e-9).ceil().max(1.0);
    if count > MAX_BINS as f64 {
        return Err(Error::InvalidArgument(format!(
            "{count} bins exceed the limit of {MAX_BINS}"
        )));
    }
    let count = count as usize;
    let mut edges: Vec<f64> = (0..=count).map(|i| lo + i as f64 * width).collect();
    let last = edges.last_mut().unwrap();
    *last = last.max(hi);
    Ok(edges)
}

/// Bin index of `x`: half-open bins, last bin closed. `None` if outside.
fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let d = edges.len() - 1;
    if x < edges[0] || x > edges[d] {
        return None;
    }
    let i = edges.partition_point(|e| *e <= x);
    Some(i.saturating_sub(1).min(d - 1))
}

pub fn histogram(samples: &[f64], edges: &[f64], out_of_range: OutOfRange) -> Result<Histogram> {
    check_edges(edges)?;
    if samples.is_empty() {
        return Err(Error::Empty("no samples to bin".into()));
    }
    let d = edges.len() - 1;
    let mut counts = vec![0u64; d];
    let mut dropped = 0;
    for &x in samples {
        match (bin_of(edges, x), out_of_range) {
            (Some(i), _) => counts[i] += 1,
            (None, OutOfRange::Drop) => dropped += 1,
            (None, OutOfRange::Extend) => {
                counts[if x < edges[0] { 0 } else { d - 1 }] += 1;
            }
        }
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
        n_total: samples.len() as u64,
        n_out_of_range: dropped,
    })
}

/// Bin frequencies divided by the total number of observations.
pub fn empirical_pdf(samples: &[f64], edges: &[f64], out_of_range: OutOfRange) -> Result<EmpiricalPdf> {
    Ok(histogram(samples, edges, out_of_range)?.into())
}

/// `100 * sum_i min(P_i, Q_i)`: 0 for disjoint PDFs, 100 for identical ones.
///
/// When both PDFs carry their counts the sum is evaluated exactly in
/// integer arithmetic.
pub fn intersection_similarity(p: &EmpiricalPdf, q: &EmpiricalPdf) -> Result<f64> {
    if p.edges != q.edges || p.probs.len() != q.probs.len() {
        return Err(Error::EdgeMismatch);
    }
    let s = match (&p.counts, &q.counts) {
        (Some(cp), Some(cq)) if p.n_total > 0 && q.n_total > 0 => {
            let (n, m) = (p.n_total as u128, q.n_total as u128);
            let overlap: u128 = cp
                .iter()
                .zip(cq)
                .map(|(&a, &b)| (a as u128 * m).min(b as u128 * n))
                .sum();
            100.0 * (overlap as f64 / (n * m) as f64)
        }
        _ => {
            100.0
                * p.probs
                    .iter()
                    .zip(&q.probs)
                    .map(|(a, b)| a.min(*b))
                    .sum::<f64>()
        }
    };
    Ok(s.clamp(0.0, 100.0))
}
