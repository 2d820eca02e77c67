use serde::{Deserialize, Serialize};

use super::LayoutError;

/// Low-dimensional similarity `nu(d) = 1 / (1 + a * d^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub a: f64,
    pub b: f64,
}

impl Curve {
    pub fn nu(&self, dist: f64) -> f64 {
        1.0 / (1.0 + self.a * dist.powf(2.0 * self.b))
    }

    /// `d/dy_i log nu(|y_i - y_j|)`, the direction attraction moves `y_i` in.
    pub fn log_nu_gradient(&self, yi: [f64; 2], yj: [f64; 2]) -> [f64; 2] {
        let diff = [yi[0] - yj[0], yi[1] - yj[1]];
        let coeff = self.attraction_coefficient(diff[0] * diff[0] + diff[1] * diff[1]);
        [coeff * diff[0], coeff * diff[1]]
    }

    #[inline]
    pub(crate) fn attraction_coefficient(&self, dist_sq: f64) -> f64 {
        if dist_sq <= 0.0 {
            return 0.0;
        }
        let p = dist_sq.powf(self.b);
        -2.0 * self.a * self.b * p / dist_sq / (1.0 + self.a * p)
    }

    #[inline]
    pub(crate) fn repulsion_coefficient(&self, dist_sq: f64, strength: f64) -> f64 {
        2.0 * strength * self.b / ((0.001 + dist_sq) * (1.0 + self.a * dist_sq.powf(self.b)))
    }
}

const FIT_SAMPLES: usize = 300;

fn fit_target(min_dist: f64, spread: f64) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..FIT_SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (FIT_SAMPLES - 1) as f64)
        .collect();
    let ys = xs
        .iter()
        .map(|&x| if x <= min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    (xs, ys)
}

/// Gradient of the half sum of squared residuals with respect to `(a, b)`.
pub fn fit_gradient(curve: Curve, min_dist: f64, spread: f64) -> [f64; 2] {
    let (xs, ys) = fit_target(min_dist, spread);
    let mut g = [0.0; 2];
    for (x, y) in xs.iter().zip(&ys) {
        let (r, ja, jb) = residual_and_jacobian(curve, *x, *y);
        g[0] += r * ja;
        g[1] += r * jb;
    }
    g
}

fn residual_and_jacobian(c: Curve, x: f64, y: f64) -> (f64, f64, f64) {
    if x == 0.0 {
        return (1.0 - y, 0.0, 0.0);
    }
    let u = x.powf(2.0 * c.b);
    let f = 1.0 / (1.0 + c.a * u);
    let ja = -u * f * f;
    let jb = -c.a * u * f * f * 2.0 * x.ln();
    (f - y, ja, jb)
}

/// Least-squares fit of `nu` to 1 below `min_dist` and
/// `exp(-(d - min_dist) / spread)` beyond, sampled on `[0, 3 * spread]`.
///
/// Levenberg-Marquardt from `(a, b) = (1, 1)`.
pub fn fit_curve(min_dist: f64, spread: f64) -> Result<Curve, LayoutError> {
    if !(min_dist > 0.0 && spread > min_dist && spread.is_finite()) {
        return Err(LayoutError::InvalidParameter(format!(
            "need 0 < min_dist < spread, got min_dist={min_dist}, spread={spread}"
        )));
    }
    let (xs, ys) = fit_target(min_dist, spread);
    let cost = |c: Curve| -> f64 {
        xs.iter().zip(&ys).map(|(&x, &y)| (c.nu(x) - y).powi(2)).sum::<f64>()
    };
    let mut c = Curve { a: 1.0, b: 1.0 };
    let mut lambda = 1e-3;
    let mut current = cost(c);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (r, ja, jb) = residual_and_jacobian(c, x, y);
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        jtj[1][0] = jtj[0][1];
        if jtr[0].hypot(jtr[1]) < 1e-12 {
            break;
        }
        let mut improved = false;
        for _ in 0..50 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let trial = Curve { a: c.a + da, b: c.b + db };
            let trial_cost = if trial.a > 0.0 && trial.b > 0.0 { cost(trial) } else { f64::INFINITY };
            if trial_cost < current {
                let step = da.hypot(db);
                c = trial;
                current = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if step < 1e-14 {
                    return finish(c, min_dist, spread);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    finish(c, min_dist, spread)
}

fn finish(c: Curve, min_dist: f64, spread: f64) -> Result<Curve, LayoutError> {
    let g = fit_gradient(c, min_dist, spread);
    if !(c.a.is_finite() && c.b.is_finite() && c.a > 0.0 && c.b > 0.0) || g[0].hypot(g[1]) > 1e-3 {
        return Err(LayoutError::FitDiverged { min_dist, spread });
    }
    Ok(c)
}
