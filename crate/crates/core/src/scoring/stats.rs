//! Descriptive statistics and the hypothesis tests used to compare settings
//! and to relate scores to driver ratings.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::model::{Descriptive, LeveneResult};
use crate::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn descriptive_stats(samples: &[f64]) -> Result<Descriptive> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "descriptive statistics need n >= 2, got {n}"
        )));
    }
    let mut m = mean(samples);
    m += samples.iter().map(|x| x - m).sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    Ok(Descriptive {
        mean: m,
        sd: (ss / (n - 1) as f64).sqrt(),
        n,
    })
}

/// Upper tail of F(d1, d2) at `x`.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(d1, d2)
        .expect("positive degrees of freedom")
        .sf(x)
}

/// Two-sided p-value of a Student t statistic with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Classic (mean-centred) Levene test for equal variances across groups.
///
/// When every absolute deviation equals its group mean the statistic is 0
/// with p = 1 if the group means of the deviations also agree, and
/// infinite with p = 0 otherwise.
pub fn levene_test(groups: &[&[f64]]) -> Result<LeveneResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidArgument("Levene test needs >= 2 groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "every Levene group needs n >= 2, got {}",
            g.len()
        )));
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|y| (y - m).abs()).collect()
        })
        .collect();
    let total: usize = z.iter().map(Vec::len).sum();
    let z_means: Vec<f64> = z.iter().map(|zi| mean(zi)).collect();
    let grand = z.iter().flatten().sum::<f64>() / total as f64;
    let between: f64 = z
        .iter()
        .zip(&z_means)
        .map(|(zi, m)| zi.len() as f64 * (m - grand) * (m - grand))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&z_means)
        .map(|(zi, m)| zi.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .sum();
    let (d1, d2) = ((k - 1) as f64, (total - k) as f64);
    let w = if within == 0.0 {
        if between == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (d2 / d1) * between / within
    };
    Ok(LeveneResult {
        w,
        p_value: f_sf(w, d1, d2),
    })
}

/// Two-group convenience wrapper around [`levene_test`].
pub fn levene_two(a: &[f64], b: &[f64]) -> Result<LeveneResult> {
    levene_test(&[a, b])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    #[serde(with = "finite_or_tagged")]
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
}

fn sums(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (mx, my, sxx, syy, sxy)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 paired observations, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Pearson correlation with its t statistic and two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let (_, _, sxx, syy, sxy) = sums(x, y);
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("zero variance in correlation input".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let n = x.len();
    let df = (n - 2) as f64;
    let t_stat = if r.abs() == 1.0 {
        r * f64::INFINITY
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(Correlation {
        r,
        t_stat,
        p_value: t_two_sided(t_stat, df),
        n,
    })
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(pearson(&ranks(x), &ranks(y))?.r)
}

/// Coefficient estimate with its standard error and two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub std_error: f64,
    #[serde(with = "finite_or_tagged")]
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub intercept: Coefficient,
    pub slope: Coefficient,
    pub r_squared: f64,
    pub n: usize,
}

fn coefficient(estimate: f64, std_error: f64, df: f64) -> Coefficient {
    let t_stat = if std_error == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            estimate.signum() * f64::INFINITY
        }
    } else {
        estimate / std_error
    };
    Coefficient {
        estimate,
        std_error,
        t_stat,
        p_value: t_two_sided(t_stat, df),
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression> {
    check_pair(x, y)?;
    let (mx, my, sxx, syy, sxy) = sums(x, y);
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("zero variance in regressor".into()));
    }
    let n = x.len();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let df = (n - 2) as f64;
    let s2 = sse / df;
    Ok(Regression {
        intercept: coefficient(intercept, (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt(), df),
        slope: coefficient(slope, (s2 / sxx).sqrt(), df),
        r_squared: if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) },
        n,
    })
}

mod finite_or_tagged {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else if *x < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("bad float tag `{t}`"))),
            },
        }
    }
}
