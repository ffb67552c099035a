//! Bjøntegaard delta rate with monotone piecewise-cubic (PCHIP)
//! interpolation of log-rate over quality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RdCurve {
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidArgument(format!("BD-rate needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|p| !(p.rate > 0.0) || !p.quality.is_finite() || !p.rate.is_finite()) {
            return Err(Error::InvalidArgument("rates must be positive and finite, qualities finite".into()));
        }
        if points.windows(2).any(|w| w[1].rate <= w[0].rate) {
            return Err(Error::InvalidArgument("rates must be strictly increasing".into()));
        }
        Ok(RdCurve { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(rate, quality)| RdPoint { rate, quality }).collect())
    }
}

/// Monotone cubic Hermite interpolant through `(x, y)`, `x` strictly increasing.
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(m[0]);
            return Pchip { x, y, d };
        }
        for k in 1..n - 1 {
            if m[k - 1] * m[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
            }
        }
        d[0] = edge(h[0], h[1], m[0], m[1]);
        d[n - 1] = edge(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        Pchip { x, y, d }
    }

    /// Exact integral over `[a, b]` inside the knot range.
    fn integrate(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let (x0, x1) = (self.x[k], self.x[k + 1]);
            let (lo, hi) = (a.max(x0), b.min(x1));
            if hi <= lo {
                continue;
            }
            let h = x1 - x0;
            let m = (self.y[k + 1] - self.y[k]) / h;
            let (d0, d1) = (self.d[k], self.d[k + 1]);
            let c2 = (3.0 * m - 2.0 * d0 - d1) / h;
            let c3 = (d0 + d1 - 2.0 * m) / (h * h);
            let prim = |s: f64| s * (self.y[k] + s * (d0 / 2.0 + s * (c2 / 3.0 + s * c3 / 4.0)));
            total += prim(hi - x0) - prim(lo - x0);
        }
        total
    }
}

fn edge(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

fn log_rate_interp(c: &RdCurve) -> Result<Pchip> {
    let mut pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.quality, p.rate.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument("qualities must be distinct".into()));
    }
    Ok(Pchip::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect()))
}

/// Average rate difference of `test` against `reference` at equal quality,
/// in percent. Negative values are savings.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (pr, pt) = (log_rate_interp(reference)?, log_rate_interp(test)?);
    let lo = pr.x[0].max(pt.x[0]);
    let hi = pr.x[pr.x.len() - 1].min(pt.x[pt.x.len() - 1]);
    if hi <= lo {
        return Err(Error::InvalidArgument("RD curves do not overlap in quality".into()));
    }
    let avg = (pt.integrate(lo, hi) - pr.integrate(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> RdCurve {
        RdCurve::from_pairs(&[(0.1, 28.0), (0.2, 31.0), (0.4, 33.5), (0.8, 35.2)]).unwrap()
    }

    #[test]
    fn self_is_zero() {
        assert_eq!(bd_rate(&curve(), &curve()).unwrap(), 0.0);
    }

    #[test]
    fn halved_rates_are_minus_fifty() {
        let half = RdCurve::new(curve().points.iter().map(|p| RdPoint { rate: p.rate / 2.0, ..*p }).collect()).unwrap();
        assert!((bd_rate(&curve(), &half).unwrap() + 50.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_and_disjoint_curves() {
        assert!(RdCurve::from_pairs(&[(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)]).is_err());
        assert!(RdCurve::from_pairs(&[(0.2, 1.0), (0.1, 2.0), (0.3, 3.0), (0.4, 4.0)]).is_err());
        let high = RdCurve::from_pairs(&[(1.0, 40.0), (2.0, 41.0), (3.0, 42.0), (4.0, 43.0)]).unwrap();
        assert!(bd_rate(&curve(), &high).is_err());
    }

    #[test]
    fn interpolant_hits_knots_and_integrates_lines() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 4.0], vec![1.0, 3.0, 5.0, 9.0]);
        assert!((p.integrate(0.0, 4.0) - 20.0).abs() < 1e-12);
        assert!((p.integrate(1.0, 1.0)).abs() < 1e-15);
    }
}
