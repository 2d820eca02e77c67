//! Group contrasts and colour normalisation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ColumnRole, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("sample is empty")]
    EmptySample,
    #[error("degenerate selection: {0}")]
    DegenerateSelection(String),
    #[error("non-finite value in sample")]
    NonFinite,
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// `D = sup |F_a - F_b|` over right-continuous empirical CDFs, evaluated at
/// the pooled sample values. The p-value uses the limiting Kolmogorov
/// distribution with `n = n_a * n_b / (n_a + n_b)`.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsResult, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let d = ks_statistic_sorted(&a, &b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n_eff = na * nb / (na + nb);
    Ok(KsResult { d, p: kolmogorov_survival(n_eff.sqrt() * d).max(f64::MIN_POSITIVE) })
}

fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Theta-function form converges fast for small arguments.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * pi2 / (8.0 * x * x)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / x;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut q = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            q += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * q).clamp(0.0, 1.0)
    }
}

/// What a selection is compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Against {
    /// All rows not in the selection.
    #[default]
    Rest,
    /// An explicit second group.
    Other(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContrast {
    pub column: String,
    pub d: f64,
    pub p: f64,
    /// `p < 0.05`.
    pub significant: bool,
}

/// Per-column KS contrasts, sorted by `D` descending (ties by column order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub n_selected: usize,
    pub n_other: usize,
    pub features: Vec<FeatureContrast>,
}

/// KS-contrasts every non-label column between `selected` and `against`.
pub fn contrast_selection(
    data: &Dataset,
    selected: &[usize],
    against: &Against,
) -> Result<ContrastResult, AnalysisError> {
    let n = data.n_rows();
    let group_a = membership(selected, n, "selection")?;
    let group_b = match against {
        Against::Rest => {
            let rest: Vec<bool> = group_a.iter().map(|&s| !s).collect();
            if !rest.iter().any(|&r| r) {
                return Err(AnalysisError::DegenerateSelection("selection covers every row".into()));
            }
            rest
        }
        Against::Other(other) => membership(other, n, "comparison group")?,
    };
    let n_selected = group_a.iter().filter(|&&x| x).count();
    let n_other = group_b.iter().filter(|&&x| x).count();
    let cols: Vec<usize> = (0..data.n_cols()).filter(|&j| data.roles()[j] != ColumnRole::Label).collect();
    let mut features = cols
        .par_iter()
        .map(|&j| {
            let col = data.column(j);
            let a: Vec<f64> = col.iter().zip(&group_a).filter(|(_, &s)| s).map(|(v, _)| *v).collect();
            let b: Vec<f64> = col.iter().zip(&group_b).filter(|(_, &s)| s).map(|(v, _)| *v).collect();
            let r = ks_test(&a, &b)?;
            Ok((j, FeatureContrast { column: data.columns()[j].clone(), d: r.d, p: r.p, significant: r.p < 0.05 }))
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    features.sort_by(|x, y| y.1.d.total_cmp(&x.1.d).then(x.0.cmp(&y.0)));
    Ok(ContrastResult { n_selected, n_other, features: features.into_iter().map(|(_, f)| f).collect() })
}

fn membership(ids: &[usize], n: usize, what: &str) -> Result<Vec<bool>, AnalysisError> {
    let mut mask = vec![false; n];
    for &i in ids {
        if i >= n {
            return Err(AnalysisError::DegenerateSelection(format!("{what} index {i} out of range for {n} rows")));
        }
        mask[i] = true;
    }
    if ids.is_empty() {
        return Err(AnalysisError::DegenerateSelection(format!("{what} is empty")));
    }
    Ok(mask)
}

/// Maps values to `[0, 1]` by average rank / (N - 1); ties share a value
/// and a single value maps to 0.5.
pub fn equal_histogram_normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0.5];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank / (n - 1) as f64;
        }
        start = end;
    }
    out
}
