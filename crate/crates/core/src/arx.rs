//! Single-input ARX identification, prediction, and order selection.
//!
//! The model is
//!
//! ```text
//! y(m) + a_1 y(m-1) + ... + a_na y(m-na) = b_1 u(m-nk) + ... + b_nb u(m-nk-nb+1) + e(m)
//! ```
//!
//! so a regression row is `[-y(m-1) .. -y(m-na), u(m-nk) .. u(m-nk-nb+1)]`
//! and the first usable sample is `m0 = max(na, nb + nk - 1)`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_pivoted, qr_r_factor, Matrix};

pub const MAX_ORDER: usize = 5;
pub const MAX_DELAY: usize = 5;

/// Magnitude beyond which a free-run simulation counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArxOrders {
    pub n_a: usize,
    pub n_b: usize,
    pub n_k: usize,
}

impl ArxOrders {
    pub fn new(n_a: usize, n_b: usize, n_k: usize) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&n_a) {
            return Err(Error::InvalidOrders(format!("n_a = {n_a} outside 1..={MAX_ORDER}")));
        }
        if !(1..=MAX_ORDER).contains(&n_b) {
            return Err(Error::InvalidOrders(format!("n_b = {n_b} outside 1..={MAX_ORDER}")));
        }
        if n_k > MAX_DELAY {
            return Err(Error::InvalidOrders(format!("n_k = {n_k} outside 0..={MAX_DELAY}")));
        }
        Ok(Self { n_a, n_b, n_k })
    }

    pub fn n_params(&self) -> usize {
        self.n_a + self.n_b
    }

    /// First sample index with a complete regressor.
    pub fn warmup(&self) -> usize {
        self.n_a.max(self.n_b + self.n_k - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub orders: ArxOrders,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub fit_mse: f64,
    pub n_samples_used: usize,
}

impl ArxModel {
    pub fn new(orders: ArxOrders, a: Vec<f64>, b: Vec<f64>, fit_mse: f64, n_samples_used: usize) -> Result<Self> {
        if a.len() != orders.n_a || b.len() != orders.n_b {
            return Err(Error::InvalidOrders(format!(
                "coefficient lengths ({}, {}) do not match orders ({}, {})",
                a.len(),
                b.len(),
                orders.n_a,
                orders.n_b
            )));
        }
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(Error::InvalidOrders("coefficients must be finite".into()));
        }
        if !(fit_mse >= 0.0 && fit_mse.is_finite()) {
            return Err(Error::InvalidOrders(format!("fit_mse must be finite and >= 0, got {fit_mse}")));
        }
        Ok(Self {
            orders,
            a,
            b,
            fit_mse,
            n_samples_used,
        })
    }

    pub fn warmup(&self) -> usize {
        self.orders.warmup()
    }

    /// `-sum a_i y(m-i) + sum b_j u(m-nk-j+1)`, with `y` supplying the past outputs.
    #[inline]
    fn predict_at(&self, y: &[f64], u: &[f64], m: usize) -> f64 {
        let mut s = 0.0;
        for (i, ai) in self.a.iter().enumerate() {
            s -= ai * y[m - 1 - i];
        }
        let base = m - self.orders.n_k;
        for (j, bj) in self.b.iter().enumerate() {
            s += bj * u[base - j];
        }
        s
    }

    /// Largest modulus among the roots of `z^na + a_1 z^(na-1) + ... + a_na`.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

/// Spectral radius of the companion matrix of `1 + a_1 z^-1 + ... + a_n z^-n`.
///
/// Uses `||C^k||^(1/k)` with `k = 2^20` by repeated squaring, which is
/// plenty to decide stability without computing roots.
pub fn spectral_radius(a: &[f64]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut c = vec![vec![0.0; n]; n];
    for (j, aj) in a.iter().enumerate() {
        c[0][j] = -aj;
    }
    for i in 1..n {
        c[i][i - 1] = 1.0;
    }
    let mut log_scale = 0.0;
    let mut p = c.clone();
    let squarings = 20;
    for _ in 0..squarings {
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                if p[i][k] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    q[i][j] += p[i][k] * p[k][j];
                }
            }
        }
        let norm = q.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            return 0.0;
        }
        log_scale = 2.0 * log_scale + norm.ln();
        q.iter_mut().flatten().for_each(|x| *x /= norm);
        p = q;
    }
    (log_scale / (1u64 << squarings) as f64).exp()
}

/// Regression for rows `first_row..N`; `first_row` must be at least the warmup.
pub fn build_regression_from(y: &[f64], u: &[f64], orders: ArxOrders, first_row: usize) -> Result<(Matrix, Vec<f64>)> {
    if y.len() != u.len() {
        return Err(Error::LengthMismatch(format!("y has {} samples, u has {}", y.len(), u.len())));
    }
    if first_row < orders.warmup() {
        return Err(Error::InvalidOrders(format!(
            "first row {first_row} precedes warmup {}",
            orders.warmup()
        )));
    }
    let n = y.len();
    let rows = n.saturating_sub(first_row);
    let params = orders.n_params();
    if rows <= params {
        return Err(Error::IntervalTooShort { rows, params });
    }
    let mut phi = Matrix::zeros(rows, params);
    for i in 0..orders.n_a {
        let col = phi.col_mut(i);
        for (r, c) in col.iter_mut().enumerate() {
            *c = -y[first_row + r - 1 - i];
        }
    }
    for j in 0..orders.n_b {
        let col = phi.col_mut(orders.n_a + j);
        for (r, c) in col.iter_mut().enumerate() {
            *c = u[first_row + r - orders.n_k - j];
        }
    }
    Ok((phi, y[first_row..].to_vec()))
}

/// Design matrix and target for rows `m0..N`.
pub fn build_regression(y: &[f64], u: &[f64], orders: ArxOrders) -> Result<(Matrix, Vec<f64>)> {
    build_regression_from(y, u, orders, orders.warmup())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub theta: Vec<f64>,
    pub mse: f64,
}

/// QR least squares with rank check; `mse = ||Y - Phi theta||^2 / rows`.
pub fn fit_least_squares(phi: &Matrix, target: &[f64]) -> Result<LeastSquaresFit> {
    let (rows, cols) = (phi.rows(), phi.cols());
    if target.len() != rows {
        return Err(Error::LengthMismatch(format!("{rows} rows vs {} targets", target.len())));
    }
    if rows <= cols {
        return Err(Error::IntervalTooShort { rows, params: cols });
    }
    if (0..cols).any(|j| phi.col(j).iter().any(|x| !x.is_finite())) || target.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSignal("non-finite regression data".into()));
    }
    let theta = lstsq_pivoted(phi.clone(), target.to_vec(), rows)?;
    let fitted = phi.mul_vec(&theta);
    let sse: f64 = target.iter().zip(&fitted).map(|(t, f)| (t - f) * (t - f)).sum();
    Ok(LeastSquaresFit {
        theta,
        mse: sse / rows as f64,
    })
}

fn model_from_theta(orders: ArxOrders, theta: &[f64], y: &[f64], u: &[f64], first_row: usize) -> Result<ArxModel> {
    let mut model = ArxModel::new(
        orders,
        theta[..orders.n_a].to_vec(),
        theta[orders.n_a..].to_vec(),
        0.0,
        y.len() - first_row,
    )?;
    // same arithmetic as one_step_predict, so the identity with fit_mse is exact
    let sse: f64 = (first_row..y.len())
        .map(|m| {
            let e = y[m] - model.predict_at(y, u, m);
            e * e
        })
        .sum();
    model.fit_mse = sse / model.n_samples_used as f64;
    Ok(model)
}

/// Fits on rows `first_row..N` (use a shared `first_row` to compare nested models).
pub fn fit_arx_from(y: &[f64], u: &[f64], orders: ArxOrders, first_row: usize) -> Result<ArxModel> {
    let (phi, target) = build_regression_from(y, u, orders, first_row)?;
    let fit = fit_least_squares(&phi, &target)?;
    model_from_theta(orders, &fit.theta, y, u, first_row)
}

pub fn fit_arx(y: &[f64], u: &[f64], orders: ArxOrders) -> Result<ArxModel> {
    fit_arx_from(y, u, orders, orders.warmup())
}

/// One-step-ahead predictions for samples `m0..N` from measured past outputs.
pub fn one_step_predict(model: &ArxModel, y_measured: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if y_measured.len() != u.len() {
        return Err(Error::LengthMismatch(format!(
            "y has {} samples, u has {}",
            y_measured.len(),
            u.len()
        )));
    }
    let m0 = model.warmup();
    if u.len() <= m0 {
        return Err(Error::SignalTooShort {
            len: u.len(),
            min: m0 + 1,
        });
    }
    Ok((m0..u.len()).map(|m| model.predict_at(y_measured, u, m)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeRun {
    /// Simulated samples `m0..N`; truncated at the first diverging sample.
    pub values: Vec<f64>,
    pub diverged: bool,
}

/// Simulates from `y_init` (the first `m0` measured samples) feeding back
/// its own outputs.
pub fn simulate_free_run(model: &ArxModel, y_init: &[f64], u: &[f64]) -> Result<FreeRun> {
    let m0 = model.warmup();
    if y_init.len() != m0 {
        return Err(Error::LengthMismatch(format!(
            "y_init has {} samples, model warmup is {m0}",
            y_init.len()
        )));
    }
    if u.len() <= m0 {
        return Err(Error::SignalTooShort {
            len: u.len(),
            min: m0 + 1,
        });
    }
    let mut y = Vec::with_capacity(u.len());
    y.extend_from_slice(y_init);
    let mut diverged = false;
    for m in m0..u.len() {
        let v = model.predict_at(&y, u, m);
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
        y.push(v);
    }
    Ok(FreeRun {
        values: y.split_off(m0),
        diverged,
    })
}

/// `n_rows * ln(mse) + 2 (n_a + n_b)`.
pub fn aic(fit_mse: f64, n_rows: usize, orders: ArxOrders) -> Result<f64> {
    if fit_mse == 0.0 {
        return Err(Error::PerfectFit);
    }
    if !(fit_mse > 0.0 && fit_mse.is_finite()) {
        return Err(Error::InvalidSeries(format!("mse must be positive and finite, got {fit_mse}")));
    }
    Ok(n_rows as f64 * fit_mse.ln() + 2.0 * orders.n_params() as f64)
}

/// Inclusive search ranges for the order grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderBounds {
    pub n_a: (usize, usize),
    pub n_b: (usize, usize),
    pub n_k: (usize, usize),
}

impl Default for OrderBounds {
    fn default() -> Self {
        Self {
            n_a: (1, MAX_ORDER),
            n_b: (1, MAX_ORDER),
            n_k: (0, MAX_DELAY),
        }
    }
}

impl OrderBounds {
    pub fn new(n_a: (usize, usize), n_b: (usize, usize), n_k: (usize, usize)) -> Result<Self> {
        let b = Self { n_a, n_b, n_k };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (usize, usize), min: usize, max: usize| {
            if lo < min || hi > max || lo > hi {
                Err(Error::InvalidConfig {
                    field: name.into(),
                    reason: format!("range {lo}..={hi} must lie within {min}..={max}"),
                })
            } else {
                Ok(())
            }
        };
        check("n_a", self.n_a, 1, MAX_ORDER)?;
        check("n_b", self.n_b, 1, MAX_ORDER)?;
        check("n_k", self.n_k, 0, MAX_DELAY)
    }

    /// All cells in canonical `(n_a, n_b, n_k)` order.
    pub fn cells(&self) -> Vec<ArxOrders> {
        let mut out = Vec::new();
        for n_a in self.n_a.0..=self.n_a.1 {
            for n_b in self.n_b.0..=self.n_b.1 {
                for n_k in self.n_k.0..=self.n_k.1 {
                    out.push(ArxOrders { n_a, n_b, n_k });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    Mse,
    Aic,
}

impl std::str::FromStr for Selection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Self::Mse),
            "aic" => Ok(Self::Aic),
            _ => Err(Error::InvalidConfig {
                field: "selection".into(),
                reason: format!("expected mse or aic, got {s:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    /// `aic` is `-inf` for a perfect fit.
    Fitted { model: ArxModel, aic: f64 },
    TooShort { rows: usize },
    RankDeficient { rank: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub orders: ArxOrders,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn model(&self) -> Option<&ArxModel> {
        match &self.outcome {
            CellOutcome::Fitted { model, .. } => Some(model),
            _ => None,
        }
    }

    pub fn aic(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Fitted { aic, .. } => Some(*aic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelectionResult {
    pub best_by_mse: ArxModel,
    pub best_by_aic: ArxModel,
    /// Every requested cell, in canonical order.
    pub grid: Vec<GridCell>,
}

impl ModelSelectionResult {
    pub fn best(&self, selection: Selection) -> &ArxModel {
        match selection {
            Selection::Mse => &self.best_by_mse,
            Selection::Aic => &self.best_by_aic,
        }
    }

    pub fn cell(&self, orders: ArxOrders) -> Option<&GridCell> {
        self.grid.iter().find(|c| c.orders == orders)
    }
}

/// Ties on the criterion go to fewer parameters, then smaller delay, then smaller `n_a`.
fn tie_break(a: &ArxOrders, b: &ArxOrders) -> Ordering {
    a.n_params()
        .cmp(&b.n_params())
        .then(a.n_k.cmp(&b.n_k))
        .then(a.n_a.cmp(&b.n_a))
}

pub(crate) fn select_best(cells: &[GridCell], selection: Selection) -> Option<&ArxModel> {
    cells
        .iter()
        .filter_map(|c| match &c.outcome {
            CellOutcome::Fitted { model, aic } => Some((model, *aic)),
            _ => None,
        })
        .min_by(|(ma, aa), (mb, ab)| {
            let primary = match selection {
                Selection::Mse => ma.fit_mse.total_cmp(&mb.fit_mse),
                Selection::Aic => aa.total_cmp(ab),
            };
            primary.then_with(|| tie_break(&ma.orders, &mb.orders))
        })
        .map(|(m, _)| m)
}

/// The QR-compressed block of lagged regressors shared by every cell.
///
/// Rows `first_row..N` are common to all cells; their `R` factor replaces
/// them in each cell's solve, and the few leading rows a cell owns on its own
/// are stacked on top.
struct SharedBlock {
    first_row: usize,
    y_lags: usize,
    r: Matrix,
}

impl SharedBlock {
    fn build(y: &[f64], u: &[f64], cells: &[ArxOrders]) -> Option<Self> {
        let first_row = cells.iter().map(ArxOrders::warmup).max()?;
        let y_lags = cells.iter().map(|o| o.n_a).max()?;
        let u_lags = cells.iter().map(|o| o.n_b + o.n_k).max()?;
        let p = y_lags + u_lags;
        let rows = y.len().checked_sub(first_row)?;
        if rows <= p + 1 {
            return None;
        }
        let mut a = Matrix::zeros(rows, p + 1);
        for i in 0..y_lags {
            for (r, c) in a.col_mut(i).iter_mut().enumerate() {
                *c = -y[first_row + r - 1 - i];
            }
        }
        for d in 0..u_lags {
            for (r, c) in a.col_mut(y_lags + d).iter_mut().enumerate() {
                *c = u[first_row + r - d];
            }
        }
        a.col_mut(p).copy_from_slice(&y[first_row..]);
        Some(Self {
            first_row,
            y_lags,
            r: qr_r_factor(a),
        })
    }

    fn fit(&self, y: &[f64], u: &[f64], orders: ArxOrders) -> Result<Vec<f64>> {
        let m0 = orders.warmup();
        let own = self.first_row - m0;
        let p = self.r.cols() - 1;
        let n = orders.n_params();
        let mut small = Matrix::zeros(own + p, n);
        let mut rhs = vec![0.0; own + p];
        for r in 0..own {
            let m = m0 + r;
            for i in 0..orders.n_a {
                small.set(r, i, -y[m - 1 - i]);
            }
            for j in 0..orders.n_b {
                small.set(r, orders.n_a + j, u[m - orders.n_k - j]);
            }
            rhs[r] = y[m];
        }
        for i in 0..p {
            for c in 0..orders.n_a {
                small.set(own + i, c, self.r.get(i, c));
            }
            for j in 0..orders.n_b {
                small.set(own + i, orders.n_a + j, self.r.get(i, self.y_lags + orders.n_k + j));
            }
            rhs[own + i] = self.r.get(i, p);
        }
        lstsq_pivoted(small, rhs, y.len() - m0)
    }
}

fn evaluate_cell(y: &[f64], u: &[f64], orders: ArxOrders, shared: Option<&SharedBlock>) -> Result<GridCell> {
    let m0 = orders.warmup();
    let rows = y.len().saturating_sub(m0);
    if rows <= orders.n_params() {
        return Ok(GridCell {
            orders,
            outcome: CellOutcome::TooShort { rows },
        });
    }
    let theta = match shared {
        Some(s) => s.fit(y, u, orders),
        None => {
            let (phi, target) = build_regression(y, u, orders)?;
            lstsq_pivoted(phi, target, rows)
        }
    };
    let theta = match theta {
        Ok(t) => t,
        Err(Error::RankDeficient { rank, .. }) => {
            return Ok(GridCell {
                orders,
                outcome: CellOutcome::RankDeficient { rank },
            })
        }
        Err(e) => return Err(e),
    };
    let model = model_from_theta(orders, &theta, y, u, m0)?;
    let aic = match aic(model.fit_mse, model.n_samples_used, orders) {
        Ok(v) => v,
        Err(Error::PerfectFit) => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    Ok(GridCell {
        orders,
        outcome: CellOutcome::Fitted { model, aic },
    })
}

/// Fits every cell of `bounds` and selects the best models.
pub fn grid_search(y: &[f64], u: &[f64], bounds: &OrderBounds) -> Result<ModelSelectionResult> {
    bounds.validate()?;
    grid_search_cells(y, u, &bounds.cells())
}

/// Fits the given cells in any order; the result does not depend on it.
pub fn grid_search_cells(y: &[f64], u: &[f64], cells: &[ArxOrders]) -> Result<ModelSelectionResult> {
    if y.len() != u.len() {
        return Err(Error::LengthMismatch(format!("y has {} samples, u has {}", y.len(), u.len())));
    }
    if y.iter().chain(u).any(|x| !x.is_finite()) {
        return Err(Error::InvalidSignal("non-finite sample in y or u".into()));
    }
    let shared = SharedBlock::build(y, u, cells);
    let mut grid = cells
        .par_iter()
        .map(|&o| evaluate_cell(y, u, o, shared.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    grid.sort_by_key(|c| c.orders);
    grid.dedup_by_key(|c| c.orders);
    let best_by_mse = select_best(&grid, Selection::Mse).ok_or(Error::NoValidModel)?.clone();
    let best_by_aic = select_best(&grid, Selection::Aic).ok_or(Error::NoValidModel)?.clone();
    Ok(ModelSelectionResult {
        best_by_mse,
        best_by_aic,
        grid,
    })
}

/// Output of an ARX system driven by `u`, starting from zero history.
pub fn simulate_system(a: &[f64], b: &[f64], n_k: usize, u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    for m in 0..u.len() {
        let mut s = 0.0;
        for (i, ai) in a.iter().enumerate() {
            if m > i {
                s -= ai * y[m - 1 - i];
            }
        }
        for (j, bj) in b.iter().enumerate() {
            if m >= n_k + j {
                s += bj * u[m - n_k - j];
            }
        }
        y[m] = s;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn orders(n_a: usize, n_b: usize, n_k: usize) -> ArxOrders {
        ArxOrders::new(n_a, n_b, n_k).unwrap()
    }

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn regression_shapes() {
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let u: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let (phi, t) = build_regression(&y, &u, orders(1, 1, 0)).unwrap();
        assert_eq!((phi.rows(), phi.cols()), (9, 2));
        assert_eq!(phi.row(0), vec![-0.0, 101.0]);
        assert_eq!(phi.row(8), vec![-8.0, 109.0]);
        assert_eq!(t[0], 1.0);

        let o = orders(2, 2, 3);
        assert_eq!(o.warmup(), 4);
        let (phi, t) = build_regression(&y, &u, o).unwrap();
        assert_eq!((phi.rows(), phi.cols()), (6, 4));
        // row m = 4: [-y3, -y2, u1, u0]
        assert_eq!(phi.row(0), vec![-3.0, -2.0, 101.0, 100.0]);
        assert_eq!(t[0], 4.0);
    }

    #[test]
    fn too_short_interval() {
        let y = vec![1.0; 6];
        let err = build_regression(&y, &y, orders(2, 2, 3)).unwrap_err();
        assert!(err.to_string().contains("interval too short"));
    }

    #[test]
    fn residual_equals_difference_equation_error() {
        let u = white(200, 1);
        let y: Vec<f64> = white(200, 2).iter().zip(&u).map(|(e, x)| e + 0.3 * x).collect();
        let o = orders(2, 3, 1);
        let model = fit_arx(&y, &u, o).unwrap();
        let (phi, t) = build_regression(&y, &u, o).unwrap();
        let mut theta = model.a.clone();
        theta.extend(&model.b);
        let fitted = phi.mul_vec(&theta);
        for (r, m) in (o.warmup()..200).enumerate() {
            // e(m) = y(m) + a1 y(m-1) + a2 y(m-2) - b1 u(m-1) - b2 u(m-2) - b3 u(m-3)
            let e = y[m] + model.a[0] * y[m - 1] + model.a[1] * y[m - 2]
                - model.b[0] * u[m - 1]
                - model.b[1] * u[m - 2]
                - model.b[2] * u[m - 3];
            assert!((t[r] - fitted[r] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_first_order_system() {
        let u = white(500, 5);
        let y = simulate_system(&[-0.5], &[1.0], 2, &u);
        let model = fit_arx(&y, &u, orders(1, 1, 2)).unwrap();
        assert!((model.a[0] + 0.5).abs() < 1e-8);
        assert!((model.b[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_target_gives_zero_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let phi = Matrix::from_row_major(20, 3, &v);
        let fit = fit_least_squares(&phi, &[0.0; 20]).unwrap();
        assert!(fit.theta.iter().all(|&t| t == 0.0));
        assert_eq!(fit.mse, 0.0);
    }

    #[test]
    fn zero_input_is_rank_deficient() {
        let y = white(100, 3);
        let u = vec![0.0; 100];
        let err = fit_arx(&y, &u, orders(1, 1, 0)).unwrap_err();
        assert!(err.to_string().contains("rank deficient"));
    }

    #[test]
    fn fit_mse_equals_one_step_mse() {
        let u = white(300, 11);
        let y: Vec<f64> = simulate_system(&[-0.7, 0.1], &[0.5, 0.2], 1, &u)
            .iter()
            .zip(white(300, 12))
            .map(|(s, e)| s + 0.1 * e)
            .collect();
        let model = fit_arx(&y, &u, orders(2, 2, 1)).unwrap();
        let yhat = one_step_predict(&model, &y, &u).unwrap();
        let m0 = model.warmup();
        assert_eq!(yhat.len(), 300 - m0);
        let mse: f64 = yhat.iter().zip(&y[m0..]).map(|(p, t)| (t - p) * (t - p)).sum::<f64>() / yhat.len() as f64;
        assert!((mse - model.fit_mse).abs() <= 1e-12 * model.fit_mse);
    }

    #[test]
    fn pass_through_model() {
        let model = ArxModel::new(orders(1, 1, 0), vec![0.0], vec![1.0], 0.0, 0).unwrap();
        let u: Vec<f64> = (0..8).map(|i| i as f64 * 1.5).collect();
        let yhat = one_step_predict(&model, &[7.0; 8], &u).unwrap();
        assert_eq!(yhat, u[1..].to_vec());
    }

    #[test]
    fn free_run_stability() {
        let stable = ArxModel::new(orders(1, 1, 0), vec![-0.9], vec![1.0], 0.0, 0).unwrap();
        let u = vec![1.0; 2000];
        let run = simulate_free_run(&stable, &[0.0], &u).unwrap();
        assert!(!run.diverged);
        assert!(run.values.iter().all(|v| v.abs() <= 10.0 + 1e-9));

        let unstable = ArxModel::new(orders(1, 1, 0), vec![-1.5], vec![1.0], 0.0, 0).unwrap();
        let run = simulate_free_run(&unstable, &[0.0], &u).unwrap();
        assert!(run.diverged);
        assert!(run.values.len() < u.len() - 1);
    }

    #[test]
    fn free_run_matches_noise_free_output() {
        let u = white(400, 21);
        let y = simulate_system(&[-1.2, 0.5], &[0.3, -0.1, 0.05], 2, &u);
        let model = fit_arx(&y, &u, orders(2, 3, 2)).unwrap();
        let m0 = model.warmup();
        let run = simulate_free_run(&model, &y[..m0], &u).unwrap();
        assert!(!run.diverged);
        for (p, t) in run.values.iter().zip(&y[m0..]) {
            assert!((p - t).abs() < 1e-6);
        }
        let os = one_step_predict(&model, &y, &u).unwrap();
        for (p, t) in os.iter().zip(&y[m0..]) {
            assert!((p - t).abs() < 1e-8);
        }
    }

    #[test]
    fn aic_values() {
        assert_eq!(aic(1.0, 100, orders(2, 2, 0)).unwrap(), 8.0);
        let small = aic(0.37, 250, orders(1, 1, 0)).unwrap();
        let big = aic(0.37, 250, orders(2, 2, 0)).unwrap();
        assert!((big - small - 4.0).abs() < 1e-12);
        assert!(matches!(aic(0.0, 10, orders(1, 1, 0)), Err(Error::PerfectFit)));
    }

    #[test]
    fn spectral_radius_of_known_polynomials() {
        // (1 - 0.95 z^-1)^2
        assert!((spectral_radius(&[-1.9, 0.9025]) - 0.95).abs() < 1e-3);
        assert!((spectral_radius(&[-0.5]) - 0.5).abs() < 1e-12);
        assert!(spectral_radius(&[-1.5]) > 1.0);
    }

    #[test]
    fn grid_covers_all_cells_and_recovers_true_orders() {
        let u = white(600, 31);
        let y = simulate_system(&[-1.1, 0.3], &[0.8, 0.4], 1, &u);
        let res = grid_search(&y, &u, &OrderBounds::default()).unwrap();
        assert_eq!(res.grid.len(), 150);
        let exact = res.cell(orders(2, 2, 1)).and_then(GridCell::model).unwrap();
        assert!(exact.fit_mse <= 1e-16);
        assert!(res.best_by_mse.fit_mse <= 1e-16);
        assert_eq!(res.best_by_aic.orders, orders(2, 2, 1));
    }

    #[test]
    fn shared_block_agrees_with_direct_fit() {
        let u = white(300, 41);
        let y: Vec<f64> = simulate_system(&[-0.6], &[1.0, 0.5], 0, &u)
            .iter()
            .zip(white(300, 42))
            .map(|(s, e)| s + 0.2 * e)
            .collect();
        let res = grid_search(&y, &u, &OrderBounds::default()).unwrap();
        for cell in &res.grid {
            let direct = fit_arx(&y, &u, cell.orders).unwrap();
            let m = cell.model().unwrap();
            for (p, q) in m.a.iter().chain(&m.b).zip(direct.a.iter().chain(&direct.b)) {
                assert!((p - q).abs() < 1e-9 * q.abs().max(1.0), "{:?}", cell.orders);
            }
            assert!((m.fit_mse - direct.fit_mse).abs() < 1e-10 * direct.fit_mse);
        }
    }

    #[test]
    fn short_interval_leaves_absent_cells() {
        let u = white(14, 51);
        let y = simulate_system(&[-0.5], &[1.0], 0, &u);
        let res = grid_search(&y, &u, &OrderBounds::default()).unwrap();
        assert!(res
            .grid
            .iter()
            .any(|c| matches!(c.outcome, CellOutcome::TooShort { .. })));
        assert!(res.grid.iter().any(|c| c.model().is_some()));
    }

    #[test]
    fn tie_break_prefers_fewer_parameters() {
        let cell = |o: ArxOrders, mse: f64| GridCell {
            orders: o,
            outcome: CellOutcome::Fitted {
                model: ArxModel::new(o, vec![0.0; o.n_a], vec![0.0; o.n_b], mse, 10).unwrap(),
                aic: 0.0,
            },
        };
        let cells = vec![cell(orders(3, 2, 0), 1.0), cell(orders(2, 2, 4), 1.0), cell(orders(1, 3, 4), 1.0)];
        let best = select_best(&cells, Selection::Mse).unwrap();
        assert_eq!(best.orders, orders(1, 3, 4));
        let cells = vec![cell(orders(2, 2, 1), 1.0), cell(orders(1, 3, 1), 1.0), cell(orders(3, 1, 0), 1.0)];
        assert_eq!(select_best(&cells, Selection::Mse).unwrap().orders, orders(3, 1, 0));
        assert_eq!(select_best(&cells, Selection::Aic).unwrap().orders, orders(3, 1, 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nested_mse_is_monotone(seed in any::<u64>(), n_k in 0usize..=5) {
            let u = white(120, seed);
            let y: Vec<f64> = white(120, seed ^ 0x5555).iter().zip(&u).map(|(e, x)| e + 0.5 * x).collect();
            let big = orders(5, 5, n_k);
            let first = big.warmup();
            let small = fit_arx_from(&y, &u, orders(1, 1, n_k), first).unwrap();
            let large = fit_arx_from(&y, &u, big, first).unwrap();
            prop_assert!(large.fit_mse <= small.fit_mse * (1.0 + 1e-12));
        }

        #[test]
        fn grid_is_order_invariant(seed in any::<u64>()) {
            let u = white(150, seed);
            let y: Vec<f64> = white(150, seed.wrapping_add(1)).iter().zip(&u).map(|(e, x)| 0.1 * e + x).collect();
            let mut cells = OrderBounds::default().cells();
            let a = grid_search_cells(&y, &u, &cells).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..cells.len()).rev() {
                cells.swap(i, rng.random_range(0..=i));
            }
            let b = grid_search_cells(&y, &u, &cells).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
