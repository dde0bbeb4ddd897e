//! Residual summaries, one-way ANOVA and Tukey-Kramer comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::ptukey::studentized_range_sf;

/// Root mean square of the residuals.
pub fn rmse(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyResiduals);
    }
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    Ok((ss / residuals.len() as f64).sqrt())
}

/// rMSE of the concatenation of all parts, summed in the given order.
pub fn pooled_rmse<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let (mut ss, mut n) = (0.0, 0usize);
    for p in parts {
        for r in p {
            ss += r * r;
        }
        n += p.len();
    }
    if n == 0 {
        return Err(Error::EmptyResiduals);
    }
    Ok((ss / n as f64).sqrt())
}

pub fn mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyResiduals);
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn std_dev(x: &[f64]) -> Result<f64> {
    let m = mean(x)?;
    if x.len() < 2 {
        return Ok(0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (x.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n: usize,
    pub rmse: f64,
    pub mean: f64,
    pub std: f64,
}

impl ResidualSummary {
    pub fn of(x: &[f64]) -> Result<Self> {
        Ok(Self {
            n: x.len(),
            rmse: rmse(x)?,
            mean: mean(x)?,
            std: std_dev(x)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub groups: usize,
    pub n_total: usize,
    pub df_between: f64,
    pub df_within: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ms_within: f64,
    pub f: f64,
    pub p_value: f64,
}

fn check_groups(groups: &[&[f64]]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::TooFewGroups {
            got: groups.len(),
            required: 2,
        });
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::GroupTooSmall {
                group: i.to_string(),
                len: g.len(),
            });
        }
    }
    Ok(())
}

pub fn one_way_anova(groups: &[&[f64]]) -> Result<Anova> {
    check_groups(groups)?;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect::<Result<_>>()?;
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n_total as f64;
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand) * (m - grand))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .sum();
    let k = groups.len();
    let df_between = (k - 1) as f64;
    let df_within = (n_total - k) as f64;
    let ms_within = ss_within / df_within;
    let ms_between = ss_between / df_between;
    let (f, p_value) = if ms_within > 0.0 {
        let f = ms_between / ms_within;
        let dist = FisherSnedecor::new(df_between, df_within).map_err(|e| Error::InvalidSeries(e.to_string()))?;
        (f, dist.sf(f))
    } else if ms_between > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(Anova {
        groups: k,
        n_total,
        df_between,
        df_within,
        ss_between,
        ss_within,
        ms_within,
        f,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: usize,
    pub second: usize,
    /// `mean(first) - mean(second)`
    pub mean_diff: f64,
    pub q: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// ANOVA plus all-pairs Tukey-Kramer comparisons at level `alpha`.
///
/// Pairs are tested regardless of the omnibus F result. Each unordered pair
/// appears once, as `(i, j)` with `i < j`.
pub fn tukey_kramer(groups: &[&[f64]], alpha: f64) -> Result<(Anova, Vec<PairComparison>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig {
            field: "alpha".into(),
            reason: format!("must be in (0, 1), got {alpha}"),
        });
    }
    let anova = one_way_anova(groups)?;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect::<Result<_>>()?;
    let k = groups.len();
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[i] - means[j];
            let se = (anova.ms_within * 0.5 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let q = if se > 0.0 {
                diff.abs() / se
            } else if diff != 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let p_value = studentized_range_sf(q, k, anova.df_within).clamp(0.0, 1.0);
            pairs.push(PairComparison {
                first: i,
                second: j,
                mean_diff: diff,
                q,
                p_value,
                significant: p_value < alpha,
            });
        }
    }
    Ok((anova, pairs))
}
