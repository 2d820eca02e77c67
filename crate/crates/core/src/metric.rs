use serde::{Deserialize, Serialize};

/// Dissimilarity between two points.
///
/// Cosine and correlation distances lie in `[0, 2]`. A zero vector (or a
/// constant one, for correlation) has distance 0 to another such vector and
/// 1 to anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Cosine,
    Correlation,
}

impl DistanceMetric {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Correlation => "correlation",
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => euclidean(a, b),
            DistanceMetric::Cosine => {
                let pa = normalized(a.to_vec());
                let pb = normalized(b.to_vec());
                unit_distance(pa.as_deref(), pb.as_deref())
            }
            DistanceMetric::Correlation => {
                let pa = normalized(centered(a));
                let pb = normalized(centered(b));
                unit_distance(pa.as_deref(), pb.as_deref())
            }
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            "correlation" => Ok(DistanceMetric::Correlation),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centered(a: &[f64]) -> Vec<f64> {
    let mean = a.iter().sum::<f64>() / a.len().max(1) as f64;
    a.iter().map(|x| x - mean).collect()
}

fn normalized(mut a: Vec<f64>) -> Option<Vec<f64>> {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    a.iter_mut().for_each(|x| *x /= norm);
    Some(a)
}

fn unit_distance(a: Option<&[f64]>, b: Option<&[f64]>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let d = 1.0 - dot;
            // Rounding leaves ~1e-16 between identical directions.
            if d < 1e-12 && a == b {
                0.0
            } else {
                d.clamp(0.0, 2.0)
            }
        }
        (None, None) => 0.0,
        _ => 1.0,
    }
}

/// Points pre-transformed so that repeated distance evaluations avoid
/// renormalising rows.
pub(crate) struct PreparedPoints {
    metric: DistanceMetric,
    dim: usize,
    values: Vec<f64>,
    /// `false` for rows that were all zero after centring.
    valid: Vec<bool>,
}

impl PreparedPoints {
    pub(crate) fn new(metric: DistanceMetric, n: usize, dim: usize, raw: &[f64]) -> Self {
        let mut values = Vec::with_capacity(n * dim);
        let mut valid = Vec::with_capacity(n);
        for i in 0..n {
            let row = &raw[i * dim..(i + 1) * dim];
            let prepared = match metric {
                DistanceMetric::Euclidean => Some(row.to_vec()),
                DistanceMetric::Cosine => normalized(row.to_vec()),
                DistanceMetric::Correlation => normalized(centered(row)),
            };
            valid.push(prepared.is_some());
            values.extend(prepared.unwrap_or_else(|| vec![0.0; dim]));
        }
        PreparedPoints { metric, dim, values, valid }
    }

    pub(crate) fn len(&self) -> usize {
        self.valid.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn distance(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            DistanceMetric::Euclidean => euclidean(self.row(i), self.row(j)),
            _ => unit_distance(
                self.valid[i].then(|| self.row(i)),
                self.valid[j].then(|| self.row(j)),
            ),
        }
    }
}
