//! Curve-section labelling from the radius-of-curvature channel.
//!
//! Runs of frames with radius at or above the straight threshold are
//! straight. Every maximal run below it is one curve section, high when its
//! tightest radius falls under the high threshold and low otherwise. Missing
//! or filtered frames break runs.

use serde::{Deserialize, Serialize};

use crate::model::{CurveSection, FrameTable, SectionKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvatureRule {
    pub straight_threshold_m: f64,
    pub high_threshold_m: f64,
    /// Sections shorter than this are dropped.
    pub min_section_frames: usize,
}

impl Default for CurvatureRule {
    fn default() -> Self {
        Self {
            straight_threshold_m: 5000.0,
            high_threshold_m: 1000.0,
            min_section_frames: 1,
        }
    }
}

impl CurvatureRule {
    pub fn check(&self) -> Result<()> {
        if !(self.high_threshold_m > 0.0 && self.straight_threshold_m > self.high_threshold_m) {
            return Err(Error::InvalidArgument(format!(
                "need straight threshold ({}) > high threshold ({}) > 0",
                self.straight_threshold_m, self.high_threshold_m
            )));
        }
        if self.min_section_frames == 0 {
            return Err(Error::InvalidArgument("min_section_frames must be >= 1".into()));
        }
        Ok(())
    }

    /// Label of a curve run whose tightest radius is `min_radius`.
    fn curve_kind(&self, min_radius: f64) -> SectionKind {
        if min_radius >= self.high_threshold_m {
            SectionKind::LowCurve
        } else {
            SectionKind::HighCurve
        }
    }
}

/// Splits a drive into straight, low-curve and high-curve sections.
pub fn segment(
    table: &FrameTable,
    curvature_signal: &str,
    rule: &CurvatureRule,
) -> Result<Vec<CurveSection>> {
    rule.check()?;
    let channel = table.require(curvature_signal)?;
    let radii: Vec<Option<f64>> = (0..table.n_frames())
        .map(|k| table.value(channel, k).map(f64::abs))
        .collect();
    if let Some(k) = radii.iter().position(|r| matches!(r, Some(r) if *r == 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "zero radius of curvature at frame {k}"
        )));
    }
    Ok(segment_radii(&radii, rule))
}

/// Core of [`segment`] on a plain radius slice (`None` = missing frame).
pub fn segment_radii(radii: &[Option<f64>], rule: &CurvatureRule) -> Vec<CurveSection> {
    let mut sections = Vec::new();
    let mut k = 0;
    let n = radii.len();
    while k < n {
        let Some(r) = radii[k] else {
            k += 1;
            continue;
        };
        let start = k;
        let straight = r >= rule.straight_threshold_m;
        let mut min_radius = r;
        k += 1;
        while let Some(Some(r)) = radii.get(k) {
            if (*r >= rule.straight_threshold_m) != straight {
                break;
            }
            min_radius = min_radius.min(*r);
            k += 1;
        }
        let kind = if straight {
            SectionKind::Straight
        } else {
            rule.curve_kind(min_radius)
        };
        if k - start >= rule.min_section_frames {
            sections.push(CurveSection {
                kind,
                start,
                end: k,
            });
        }
    }
    sections
}

/// Seconds spent in each section kind.
pub fn durations(sections: &[CurveSection], period: f64) -> [(SectionKind, f64); 3] {
    SectionKind::ALL.map(|kind| {
        let frames: usize = sections
            .iter()
            .filter(|s| s.kind == kind)
            .map(CurveSection::len)
            .sum();
        (kind, frames as f64 * period)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SectionKind::*;

    fn kinds(radii: &[f64]) -> Vec<(SectionKind, usize, usize)> {
        let r: Vec<_> = radii.iter().map(|r| Some(*r)).collect();
        segment_radii(&r, &CurvatureRule::default())
            .into_iter()
            .map(|s| (s.kind, s.start, s.end))
            .collect()
    }

    fn dip(min: f64) -> Vec<f64> {
        let mut r = vec![6000.0; 10];
        r.extend([4000.0, min, 4000.0]);
        r.extend(vec![6000.0; 10]);
        r
    }

    #[test]
    fn constant_straight() {
        assert_eq!(kinds(&[6000.0; 50]), vec![(Straight, 0, 50)]);
    }

    #[test]
    fn shallow_dip_is_low_curve() {
        assert_eq!(
            kinds(&dip(3000.0)),
            vec![(Straight, 0, 10), (LowCurve, 10, 13), (Straight, 13, 23)]
        );
    }

    #[test]
    fn deep_dip_is_high_curve() {
        assert_eq!(
            kinds(&dip(800.0)),
            vec![(Straight, 0, 10), (HighCurve, 10, 13), (Straight, 13, 23)]
        );
    }

    #[test]
    fn thresholds_round_up() {
        assert_eq!(kinds(&[5000.0; 3]), vec![(Straight, 0, 3)]);
        assert_eq!(kinds(&[4999.0, 1000.0, 4999.0]), vec![(LowCurve, 0, 3)]);
        assert_eq!(kinds(&[4999.0, 999.9]), vec![(HighCurve, 0, 2)]);
    }

    #[test]
    fn gaps_break_sections() {
        let r = [Some(6000.0), Some(6000.0), None, Some(6000.0)];
        let s = segment_radii(&r, &CurvatureRule::default());
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].start, s[0].end, s[1].start, s[1].end), (0, 2, 3, 4));
    }

    #[test]
    fn sign_is_ignored() {
        let r: Vec<f64> = dip(800.0).into_iter().map(|r| -r).collect();
        let table = crate::model::FrameTable {
            period: 0.01,
            start_time: 0.0,
            frame_valid: vec![true; r.len()],
            channels: vec![crate::model::Channel::dense("R", r)],
            meta: Default::default(),
        };
        let s = segment(&table, "R", &CurvatureRule::default()).unwrap();
        assert_eq!(s[1].kind, HighCurve);
    }

    #[test]
    fn missing_channel_errors() {
        let table = crate::model::FrameTable {
            period: 0.01,
            start_time: 0.0,
            frame_valid: vec![true; 3],
            channels: vec![],
            meta: Default::default(),
        };
        assert!(matches!(
            segment(&table, "R", &CurvatureRule::default()),
            Err(Error::MissingChannel(_))
        ));
    }

    #[test]
    fn rule_must_be_ordered() {
        let rule = CurvatureRule {
            straight_threshold_m: 900.0,
            ..Default::default()
        };
        assert!(rule.check().is_err());
    }

    fn radii_strategy() -> impl Strategy<Value = Vec<Option<f64>>> {
        prop::collection::vec(
            prop_oneof![
                1 => Just(None),
                6 => (100.0f64..20_000.0).prop_map(Some),
            ],
            0..200,
        )
    }

    proptest! {
        #[test]
        fn sections_tile_valid_frames(radii in radii_strategy()) {
            let sections = segment_radii(&radii, &CurvatureRule::default());
            let mut covered = vec![false; radii.len()];
            for w in sections.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
                if w[0].end == w[1].start {
                    prop_assert_ne!(w[0].kind, w[1].kind);
                }
            }
            for s in &sections {
                for k in s.frames() {
                    prop_assert!(!covered[k]);
                    covered[k] = true;
                }
            }
            for (k, r) in radii.iter().enumerate() {
                prop_assert_eq!(covered[k], r.is_some());
            }
        }

        #[test]
        fn scaling_radii_never_sharpens(radii in radii_strategy(), c in 1.0f64..5.0) {
            let rule = CurvatureRule::default();
            let label = |radii: &[Option<f64>]| {
                let mut out = vec![None; radii.len()];
                for s in segment_radii(radii, &rule) {
                    for k in s.frames() {
                        out[k] = Some(s.kind.gentleness());
                    }
                }
                out
            };
            let before = label(&radii);
            let scaled: Vec<_> = radii.iter().map(|r| r.map(|r| r * c)).collect();
            let after = label(&scaled);
            for (b, a) in before.iter().zip(&after) {
                if let (Some(b), Some(a)) = (b, a) {
                    prop_assert!(a >= b);
                }
            }
        }
    }
}
