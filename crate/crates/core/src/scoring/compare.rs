use std::collections::BTreeMap;

use rayon::prelude::*;

use super::histogram::{empirical_pdf, intersection_similarity, shared_edges, BinPolicy, EmpiricalPdf};
use super::stats::{descriptive_stats, levene_two};
use crate::model::{
    CellStats, Indicator, LeveneResult, ScoreReport, SectionKind, SCHEMA_VERSION,
};
use crate::pipeline::DriveAnalysis;
use crate::{Error, Result};

/// Weight 1 for every section kind.
pub fn default_weights() -> BTreeMap<SectionKind, f64> {
    SectionKind::ALL.iter().map(|&k| (k, 1.0)).collect()
}

/// Weighted mean of the per-section similarities.
///
/// Section kinds absent from `weights` get weight 1. Only the sections
/// present in `per_section` contribute.
pub fn indicator_score(
    per_section: &BTreeMap<SectionKind, f64>,
    weights: &BTreeMap<SectionKind, f64>,
) -> Result<f64> {
    if per_section.is_empty() {
        return Err(Error::Empty("no sections to score".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (kind, &s) in per_section {
        let w = weights.get(kind).copied().unwrap_or(1.0);
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight for {kind} must be >= 0, got {w}")));
        }
        num += w * s;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("all section weights are zero".into()));
    }
    let (lo, hi) = per_section
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    Ok((num / den).clamp(lo, hi))
}

/// Everything computed for one (indicator, section) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDetail {
    pub indicator: Indicator,
    pub section: SectionKind,
    pub reference: EmpiricalPdf,
    pub candidate: EmpiricalPdf,
    pub similarity: f64,
    pub stats: CellStats,
    pub levene: Option<LeveneResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetailedComparison {
    pub report: ScoreReport,
    pub cells: Vec<CellDetail>,
}

fn score_cell(
    indicator: Indicator,
    section: SectionKind,
    reference: &[f64],
    candidate: &[f64],
    policy: &BinPolicy,
) -> Result<CellDetail> {
    let edges = shared_edges(reference, candidate, policy)?;
    let p = empirical_pdf(reference, &edges, policy.out_of_range)?;
    let q = empirical_pdf(candidate, &edges, policy.out_of_range)?;
    let similarity = intersection_similarity(&p, &q)?;
    let stats = CellStats {
        reference: descriptive_stats(reference).ok(),
        candidate: descriptive_stats(candidate).ok(),
    };
    let levene = if reference.len() >= 2 && candidate.len() >= 2 {
        Some(levene_two(reference, candidate)?)
    } else {
        None
    };
    Ok(CellDetail {
        indicator,
        section,
        reference: p,
        candidate: q,
        similarity,
        stats,
        levene,
    })
}

/// Scores `candidate` against `reference` and keeps the per-cell PDFs.
pub fn compare_settings_detailed(
    reference: &DriveAnalysis,
    candidate: &DriveAnalysis,
    policy: &BinPolicy,
    weights: &BTreeMap<SectionKind, f64>,
) -> Result<DetailedComparison> {
    let mut omitted = BTreeMap::new();
    let mut jobs = Vec::new();
    for ind in Indicator::ALL {
        let reason = reference
            .missing
            .get(&ind)
            .map(|r| format!("reference: {r}"))
            .or_else(|| candidate.missing.get(&ind).map(|r| format!("candidate: {r}")));
        if let Some(reason) = reason {
            omitted.insert(ind, reason);
            continue;
        }
        for kind in SectionKind::ALL {
            let r = reference.cell_samples(ind, kind);
            let c = candidate.cell_samples(ind, kind);
            if !r.is_empty() && !c.is_empty() {
                jobs.push((ind, kind, r, c));
            }
        }
    }
    let cells: Vec<CellDetail> = jobs
        .par_iter()
        .map(|(ind, kind, r, c)| score_cell(*ind, *kind, r, c, policy))
        .collect::<Result<_>>()?;

    let mut per_section: BTreeMap<Indicator, BTreeMap<SectionKind, f64>> = BTreeMap::new();
    let mut stats: BTreeMap<Indicator, BTreeMap<SectionKind, CellStats>> = BTreeMap::new();
    let mut levene: BTreeMap<Indicator, BTreeMap<SectionKind, LeveneResult>> = BTreeMap::new();
    for cell in &cells {
        per_section
            .entry(cell.indicator)
            .or_default()
            .insert(cell.section, cell.similarity);
        stats
            .entry(cell.indicator)
            .or_default()
            .insert(cell.section, cell.stats);
        if let Some(l) = &cell.levene {
            levene.entry(cell.indicator).or_default().insert(cell.section, *l);
        }
    }
    let mut indicator_scores = BTreeMap::new();
    for ind in Indicator::ALL {
        if omitted.contains_key(&ind) {
            continue;
        }
        match per_section.get(&ind) {
            Some(sections) => {
                indicator_scores.insert(ind, indicator_score(sections, weights)?);
            }
            None => {
                omitted.insert(ind, "no section with data in both drives".into());
            }
        }
    }
    let mut all_weights = default_weights();
    all_weights.extend(weights.iter().map(|(k, w)| (*k, *w)));

    let report = ScoreReport {
        schema_version: SCHEMA_VERSION,
        reference_id: reference.meta.setting_id.clone(),
        candidate_id: candidate.meta.setting_id.clone(),
        per_section,
        weights: all_weights,
        indicator_scores,
        stats,
        levene,
        omitted,
    };
    Ok(DetailedComparison { report, cells })
}

/// Scores `candidate` against `reference` on every indicator both drives
/// provide.
pub fn compare_settings(
    reference: &DriveAnalysis,
    candidate: &DriveAnalysis,
    policy: &BinPolicy,
    weights: &BTreeMap<SectionKind, f64>,
) -> Result<ScoreReport> {
    Ok(compare_settings_detailed(reference, candidate, policy, weights)?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sections(v: &[(SectionKind, f64)]) -> BTreeMap<SectionKind, f64> {
        v.iter().copied().collect()
    }

    #[test]
    fn equal_weights_average() {
        let s = sections(&[
            (SectionKind::Straight, 90.0),
            (SectionKind::LowCurve, 60.0),
            (SectionKind::HighCurve, 30.0),
        ]);
        assert_eq!(indicator_score(&s, &default_weights()).unwrap(), 60.0);
    }

    #[test]
    fn missing_section_is_skipped() {
        let s = sections(&[(SectionKind::Straight, 80.0), (SectionKind::LowCurve, 40.0)]);
        assert_eq!(indicator_score(&s, &default_weights()).unwrap(), 60.0);
    }

    #[test]
    fn uneven_weights() {
        let s = sections(&[(SectionKind::Straight, 80.0), (SectionKind::HighCurve, 20.0)]);
        let w = sections(&[(SectionKind::Straight, 3.0), (SectionKind::HighCurve, 1.0)]);
        assert_eq!(indicator_score(&s, &w).unwrap(), 65.0);
    }

    #[test]
    fn rejects_degenerate_weights() {
        let s = sections(&[(SectionKind::Straight, 80.0)]);
        let zero = sections(&[(SectionKind::Straight, 0.0)]);
        assert!(indicator_score(&s, &zero).is_err());
        let neg = sections(&[(SectionKind::Straight, -1.0)]);
        assert!(indicator_score(&s, &neg).is_err());
        assert!(indicator_score(&BTreeMap::new(), &default_weights()).is_err());
    }

    proptest! {
        #[test]
        fn score_between_extremes(
            a in 0.0f64..=100.0, b in 0.0f64..=100.0, c in 0.0f64..=100.0,
            wa in 0.01f64..10.0, wb in 0.01f64..10.0, wc in 0.01f64..10.0,
        ) {
            let s = sections(&[
                (SectionKind::Straight, a),
                (SectionKind::LowCurve, b),
                (SectionKind::HighCurve, c),
            ]);
            let w = sections(&[
                (SectionKind::Straight, wa),
                (SectionKind::LowCurve, wb),
                (SectionKind::HighCurve, wc),
            ]);
            let x = indicator_score(&s, &w).unwrap();
            prop_assert!(x >= a.min(b).min(c) && x <= a.max(b).max(c));
        }
    }
}
