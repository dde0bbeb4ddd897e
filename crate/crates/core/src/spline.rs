//! Not-a-knot cubic spline interpolation and uniform resampling of beat series.

use crate::error::{Error, Result};
use crate::model::{BeatFeatureSeries, FeatureTrack};

/// Target sampling grid. Output points start at `max(start_s, first knot)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleGrid {
    pub sample_rate_hz: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl ResampleGrid {
    pub fn new(sample_rate_hz: f64, start_s: f64, end_s: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidGrid(format!("rate must be positive, got {sample_rate_hz}")));
        }
        if !(start_s.is_finite() && end_s.is_finite() && end_s > start_s) {
            return Err(Error::InvalidGrid(format!("need start < end, got [{start_s}, {end_s}]")));
        }
        Ok(Self {
            sample_rate_hz,
            start_s,
            end_s,
        })
    }
}

/// Piecewise cubic with continuous second derivative; third derivative is
/// also continuous across the second and penultimate knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn not_a_knot(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::LengthMismatch(format!("{n} knots vs {} values", y.len())));
        }
        if n < 4 {
            return Err(Error::TooFewKnots(n));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSeries("knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = y.windows(2).zip(&h).map(|(w, &hi)| (w[1] - w[0]) / hi).collect();

        // unknowns M_1..M_{n-2}; M_0 and M_{n-1} are eliminated via the
        // not-a-knot conditions
        let k = n - 2;
        let mut sub = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut sup = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for r in 0..k {
            let i = r + 1;
            sub[r] = h[i - 1];
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            sup[r] = h[i];
            rhs[r] = 6.0 * (d[i] - d[i - 1]);
        }
        let (h0, h1) = (h[0], h[1]);
        diag[0] = (h0 + h1) * (h0 + 2.0 * h1) / h1;
        sup[0] = (h1 * h1 - h0 * h0) / h1;
        let (ha, hb) = (h[n - 3], h[n - 2]);
        diag[k - 1] = (ha + hb) * (2.0 * ha + hb) / ha;
        sub[k - 1] = (ha * ha - hb * hb) / ha;
        let inner = solve_tridiagonal(&sub, &diag, &sup, &rhs);

        let mut m = vec![0.0; n];
        m[1..n - 1].copy_from_slice(&inner);
        m[0] = ((h0 + h1) * m[1] - h0 * m[2]) / h1;
        m[n - 1] = ((ha + hb) * m[n - 2] - hb * m[n - 3]) / ha;
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        }
    }

    fn eval_in(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - t, t - x0);
        self.m[i] * a * a * a / (6.0 * h)
            + self.m[i + 1] * b * b * b / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * a
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * b
    }

    /// Value at `t`; outside the knot span the end cubic is continued.
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_in(self.segment(t), t)
    }

    /// Second derivative at `t`.
    pub fn second_derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        (self.m[i] * (self.x[i + 1] - t) + self.m[i + 1] * (t - self.x[i])) / h
    }

    /// Evaluates at ascending times in one pass.
    pub fn eval_sorted(&self, ts: impl IntoIterator<Item = f64>) -> Vec<f64> {
        let mut seg = 0;
        let last = self.x.len() - 2;
        ts.into_iter()
            .map(|t| {
                while seg < last && t >= self.x[seg + 1] {
                    seg += 1;
                }
                self.eval_in(seg, t)
            })
            .collect()
    }
}

/// Thomas algorithm. The not-a-knot rows stay diagonally dominant.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    out
}

/// Resamples a beat series onto `grid`, restricted to the knot span.
///
/// Output times are `lo + j / rate` with `lo = max(grid.start, first knot)`,
/// for `j = 0..=floor((hi - lo) * rate)` and `hi = min(grid.end, last knot)`.
pub fn spline_resample(series: &BeatFeatureSeries, grid: &ResampleGrid) -> Result<FeatureTrack> {
    if series.len() < 4 {
        return Err(Error::TooFewKnots(series.len()));
    }
    let times = series.times_s();
    let (first, last) = (times[0], times[times.len() - 1]);
    let lo = grid.start_s.max(first);
    let hi = grid.end_s.min(last);
    if hi < lo {
        return Err(Error::DisjointGrid {
            grid_start: grid.start_s,
            grid_end: grid.end_s,
            knot_start: first,
            knot_end: last,
        });
    }
    let rate = grid.sample_rate_hz;
    // the 1e-9 guards against (hi - lo) * rate landing a hair below an integer
    let count = ((hi - lo) * rate + 1e-9).floor() as usize + 1;
    let spline = CubicSpline::not_a_knot(times, series.values())?;
    let values = spline.eval_sorted((0..count).map(|j| (lo + j as f64 / rate).min(hi)));
    Ok(FeatureTrack {
        feature: series.feature(),
        start_s: lo,
        sample_rate_hz: rate,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Feature;

    fn series(t: &[f64], f: impl Fn(f64) -> f64) -> BeatFeatureSeries {
        BeatFeatureSeries::new(Feature::Sbp, t.to_vec(), t.iter().map(|&x| f(x)).collect()).unwrap()
    }

    #[test]
    fn reproduces_linear_data() {
        let t = [0.0, 0.8, 1.9, 3.1, 3.9, 5.2];
        let s = series(&t, |x| 3.0 * x + 1.0);
        let grid = ResampleGrid::new(100.0, -1.0, 10.0).unwrap();
        let tr = spline_resample(&s, &grid).unwrap();
        for (j, v) in tr.values.iter().enumerate() {
            let x = tr.time_at(j).min(5.2);
            assert!((v - (3.0 * x + 1.0)).abs() <= 1e-10 * (3.0 * x + 1.0).abs().max(1.0));
        }
    }

    #[test]
    fn reproduces_a_cubic() {
        let f = |x: f64| 0.5 * x * x * x - 2.0 * x * x + x - 7.0;
        let t = [0.0, 0.7, 1.1, 2.4, 3.0, 4.6, 5.0];
        let sp = CubicSpline::not_a_knot(&t, &t.map(f)).unwrap();
        for i in 0..=500 {
            let x = i as f64 * 0.01;
            assert!((sp.eval(x) - f(x)).abs() < 1e-9, "x {x}");
        }
    }

    #[test]
    fn four_knots_give_the_interpolating_cubic() {
        let f = |x: f64| x * x * x - x;
        let t = [0.0, 1.0, 3.0, 4.0];
        let sp = CubicSpline::not_a_knot(&t, &t.map(f)).unwrap();
        assert!((sp.eval(2.0) - f(2.0)).abs() < 1e-12);
    }

    #[test]
    fn length_formula_and_span_trim() {
        let t = [0.5, 1.0, 1.7, 2.3];
        let s = series(&t, |x| x.sin());
        let grid = ResampleGrid::new(100.0, 0.0, 2.0).unwrap();
        let tr = spline_resample(&s, &grid).unwrap();
        assert_eq!(tr.start_s, 0.5);
        assert_eq!(tr.len(), 151);
    }

    #[test]
    fn errors() {
        let s = series(&[0.0, 1.0, 2.0], |x| x);
        let grid = ResampleGrid::new(100.0, 0.0, 2.0).unwrap();
        assert!(matches!(spline_resample(&s, &grid), Err(Error::TooFewKnots(3))));
        let s = series(&[0.0, 1.0, 2.0, 3.0], |x| x);
        let far = ResampleGrid::new(100.0, 5.0, 6.0).unwrap();
        assert!(matches!(spline_resample(&s, &far), Err(Error::DisjointGrid { .. })));
        assert!(ResampleGrid::new(100.0, 1.0, 1.0).is_err());
        assert!(ResampleGrid::new(0.0, 0.0, 1.0).is_err());
    }
}
