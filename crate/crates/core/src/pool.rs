//! Base forecasting methods and assembly of the per-series forecast matrix.
//!
//! Every method is deterministic and allocation-light; smoothing parameters
//! are chosen by exhaustive grid search on in-sample one-step squared error.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{least_squares, Matrix};

pub const DEFAULT_MAX_AR_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForecasterKind {
    Naive,
    SeasonalNaive,
    RandomWalkDrift,
    Ses,
    Holt,
    DampedHolt,
    Theta,
    Ar,
    SeasonalAdjustedAr,
}

impl ForecasterKind {
    pub const ALL: [ForecasterKind; 9] = [
        ForecasterKind::Naive,
        ForecasterKind::SeasonalNaive,
        ForecasterKind::RandomWalkDrift,
        ForecasterKind::Ses,
        ForecasterKind::Holt,
        ForecasterKind::DampedHolt,
        ForecasterKind::Theta,
        ForecasterKind::Ar,
        ForecasterKind::SeasonalAdjustedAr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ForecasterKind::Naive => "naive",
            ForecasterKind::SeasonalNaive => "snaive",
            ForecasterKind::RandomWalkDrift => "rwd",
            ForecasterKind::Ses => "ses",
            ForecasterKind::Holt => "holt",
            ForecasterKind::DampedHolt => "damped",
            ForecasterKind::Theta => "theta",
            ForecasterKind::Ar => "ar",
            ForecasterKind::SeasonalAdjustedAr => "sar",
        }
    }
}

impl fmt::Display for ForecasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForecasterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ForecasterKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown forecaster '{s}'")))
    }
}

/// One pool member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForecasterSpec {
    pub kind: ForecasterKind,
    /// Upper bound on the autoregressive order for AR-based members.
    pub max_order: usize,
}

impl ForecasterSpec {
    pub fn new(kind: ForecasterKind) -> Self {
        Self {
            kind,
            max_order: DEFAULT_MAX_AR_ORDER,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Shortest training window the method accepts.
    pub fn min_history(&self, period: usize) -> usize {
        match self.kind {
            ForecasterKind::SeasonalNaive | ForecasterKind::SeasonalAdjustedAr => {
                core::cmp::max(3, 2 * period)
            }
            ForecasterKind::Theta => 4,
            _ => 3,
        }
    }
}

/// The seven-member pool used unless configured otherwise.
pub fn default_pool() -> Vec<ForecasterSpec> {
    [
        ForecasterKind::Naive,
        ForecasterKind::SeasonalNaive,
        ForecasterKind::RandomWalkDrift,
        ForecasterKind::Ses,
        ForecasterKind::DampedHolt,
        ForecasterKind::Theta,
        ForecasterKind::SeasonalAdjustedAr,
    ]
    .into_iter()
    .map(ForecasterSpec::new)
    .collect()
}

/// Parses a comma-separated list such as `naive,ses,theta`.
pub fn parse_pool(list: &str) -> Result<Vec<ForecasterSpec>> {
    let pool = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map(ForecasterSpec::new))
        .collect::<Result<Vec<_>>>()?;
    if pool.len() < 2 {
        return Err(Error::InvalidArgument("pool needs at least two methods".into()));
    }
    Ok(pool)
}

pub fn pool_names(pool: &[ForecasterSpec]) -> Vec<String> {
    pool.iter().map(|p| String::from(p.name())).collect()
}

fn require(method: &'static str, needed: usize, got: usize) -> Result<()> {
    if got < needed {
        Err(Error::InsufficientHistory {
            method,
            needed,
            got,
        })
    } else {
        Ok(())
    }
}

/// Runs one method on the training window.
pub fn forecast(spec: &ForecasterSpec, train: &[f64], period: usize, horizon: usize) -> Result<Vec<f64>> {
    require(spec.name(), spec.min_history(period), train.len())?;
    let out = match spec.kind {
        ForecasterKind::Naive => naive(train, horizon),
        ForecasterKind::SeasonalNaive => seasonal_naive(train, period, horizon),
        ForecasterKind::RandomWalkDrift => random_walk_drift(train, horizon),
        ForecasterKind::Ses => ses_forecast(train, horizon)?,
        ForecasterKind::Holt => holt_forecast(train, horizon, false)?,
        ForecasterKind::DampedHolt => holt_forecast(train, horizon, true)?,
        ForecasterKind::Theta => theta_forecast(train, period, horizon)?,
        ForecasterKind::Ar => ar_forecast(train, spec.max_order, horizon)?,
        ForecasterKind::SeasonalAdjustedAr => {
            seasonal_adjusted_ar_forecast(train, period, spec.max_order, horizon)?
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} produced a non-finite forecast",
            spec.name()
        )));
    }
    Ok(out)
}

pub fn naive(train: &[f64], horizon: usize) -> Vec<f64> {
    vec![*train.last().expect("non-empty training window"); horizon]
}

pub fn seasonal_naive(train: &[f64], period: usize, horizon: usize) -> Vec<f64> {
    let n = train.len();
    (0..horizon).map(|h| train[n - period + h % period]).collect()
}

pub fn random_walk_drift(train: &[f64], horizon: usize) -> Vec<f64> {
    let n = train.len();
    let last = train[n - 1];
    let drift = (last - train[0]) / (n - 1) as f64;
    (1..=horizon).map(|h| last + drift * h as f64).collect()
}

/// Fitted simple exponential smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SesFit {
    pub alpha: f64,
    pub level: f64,
    pub sse: f64,
}

fn ses_run(train: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = train[0];
    let mut sse = 0.0;
    for &y in &train[1..] {
        let e = y - level;
        sse += e * e;
        level += alpha * e;
    }
    (level, sse)
}

/// Grid search over α ∈ {0.01, …, 0.99}; ties keep the smaller α.
pub fn ses_fit(train: &[f64]) -> Result<SesFit> {
    require("ses", 3, train.len())?;
    let mut best = SesFit {
        alpha: f64::NAN,
        level: f64::NAN,
        sse: f64::INFINITY,
    };
    for k in 1..=99 {
        let alpha = k as f64 / 100.0;
        let (level, sse) = ses_run(train, alpha);
        if sse < best.sse {
            best = SesFit { alpha, level, sse };
        }
    }
    Ok(best)
}

pub fn ses_forecast(train: &[f64], horizon: usize) -> Result<Vec<f64>> {
    Ok(vec![ses_fit(train)?.level; horizon])
}

const HOLT_ALPHAS: [f64; 19] = [
    0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85,
    0.9, 0.95,
];
const HOLT_BETAS: [f64; 6] = [0.01, 0.05, 0.1, 0.15, 0.2, 0.3];
const DAMPING: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 0.98];

fn holt_run(train: &[f64], alpha: f64, beta: f64, phi: f64) -> (f64, f64, f64) {
    let mut level = train[0];
    let mut trend = train[1] - train[0];
    let mut sse = 0.0;
    for &y in &train[1..] {
        let pred = level + phi * trend;
        let e = y - pred;
        sse += e * e;
        let new_level = pred + alpha * e;
        trend = beta * (new_level - level) + (1.0 - beta) * phi * trend;
        level = new_level;
    }
    (level, trend, sse)
}

/// Holt's linear trend method, optionally damped; parameters by grid search.
pub fn holt_forecast(train: &[f64], horizon: usize, damped: bool) -> Result<Vec<f64>> {
    require(if damped { "damped" } else { "holt" }, 3, train.len())?;
    let phis: &[f64] = if damped { &DAMPING } else { &[1.0] };
    let mut best = (f64::INFINITY, 0.0, 0.0, 1.0);
    for &phi in phis {
        for &alpha in &HOLT_ALPHAS {
            for &beta in &HOLT_BETAS {
                let (level, trend, sse) = holt_run(train, alpha, beta, phi);
                if sse < best.0 {
                    best = (sse, level, trend, phi);
                }
            }
        }
    }
    let (_, level, trend, phi) = best;
    let mut out = Vec::with_capacity(horizon);
    let (mut damp, mut pow) = (0.0, 1.0);
    for _ in 0..horizon {
        pow *= phi;
        damp += pow;
        out.push(level + damp * trend);
    }
    Ok(out)
}

/// Additive seasonal indices from a classical moving-average decomposition.
///
/// Returns `period` indices summing to zero; index `p` applies to positions
/// `t` with `t % period == p`. Shorter series than `2 * period` (or
/// `period == 1`) yield all zeros.
pub fn seasonal_indices(train: &[f64], period: usize) -> Vec<f64> {
    let n = train.len();
    if period <= 1 || n < 2 * period {
        return vec![0.0; period.max(1)];
    }
    let half = period / 2;
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for t in half..(n - half) {
        let trend = if period % 2 == 1 {
            train[t - half..=t + half].iter().sum::<f64>() / period as f64
        } else {
            // 2 x m centred moving average
            let inner: f64 = train[t - half + 1..t + half].iter().sum();
            (0.5 * train[t - half] + inner + 0.5 * train[t + half]) / period as f64
        };
        sums[t % period] += train[t] - trend;
        counts[t % period] += 1;
    }
    let mut idx: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let centre = math::mean(&idx);
    for v in &mut idx {
        *v -= centre;
    }
    idx
}

fn deseasonalize(train: &[f64], period: usize) -> (Vec<f64>, Vec<f64>) {
    let idx = seasonal_indices(train, period);
    let adjusted = train
        .iter()
        .enumerate()
        .map(|(t, y)| y - idx[t % idx.len()])
        .collect();
    (adjusted, idx)
}

fn reseasonalize(forecast: &mut [f64], idx: &[f64], n: usize) {
    for (h, v) in forecast.iter_mut().enumerate() {
        *v += idx[(n + h) % idx.len()];
    }
}

/// Slope of the least-squares line through `(t, y_t)`.
pub fn ols_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = math::mean(values);
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in values.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Theta method: SES on the (seasonally adjusted) series plus a drift of
/// half the least-squares slope.
pub fn theta_forecast(train: &[f64], period: usize, horizon: usize) -> Result<Vec<f64>> {
    require("theta", 4, train.len())?;
    let (adjusted, idx) = deseasonalize(train, period);
    let fit = ses_fit(&adjusted)?;
    let half_slope = 0.5 * ols_slope(&adjusted);
    let mut out: Vec<f64> = (1..=horizon)
        .map(|h| fit.level + half_slope * h as f64)
        .collect();
    reseasonalize(&mut out, &idx, train.len());
    Ok(out)
}

/// Autoregressive model `y_t = c + Σ φ_i y_{t-i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub aic: f64,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Recursive multi-step forecast continuing `history`.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Vec<f64> {
        let mut buf = history.to_vec();
        let n = buf.len();
        for _ in 0..horizon {
            let t = buf.len();
            let next = self.intercept
                + self
                    .coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, phi)| phi * buf[t - 1 - i])
                    .sum::<f64>();
            buf.push(next);
        }
        buf.split_off(n)
    }
}

/// Residual sum of squares and coefficients of the order-`p` OLS fit on the
/// rows `t = start..n`.
pub fn ar_ols(train: &[f64], p: usize, start: usize) -> Result<(f64, Vec<f64>)> {
    let rows: Vec<Vec<f64>> = (start..train.len())
        .map(|t| {
            let mut r = Vec::with_capacity(p + 1);
            r.push(1.0);
            r.extend((1..=p).map(|i| train[t - i]));
            r
        })
        .collect();
    let x = Matrix::from_rows(&rows)?;
    let y = &train[start..];
    let beta = least_squares(&x, y)?;
    let rss = rows
        .iter()
        .zip(y)
        .map(|(r, yt)| {
            let fit: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yt - fit) * (yt - fit)
        })
        .sum();
    Ok((rss, beta))
}

/// Akaike criterion for a Gaussian fit with `k` estimated mean parameters.
pub fn aic(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    n * math::ln(f64::max(rss / n, 1e-300)) + 2.0 * k as f64
}

/// Fits AR models of order `0..=max_order` by OLS on a common sample and
/// keeps the AIC minimizer (ties keep the lower order). Orders with a
/// rank-deficient design are skipped; when every order `>= 1` is
/// rank-deficient the result is [`Error::SingularDesign`].
/// Orders whose characteristic roots exceed this modulus are not
/// candidates; mild explosiveness stands in for drift on trending series.
pub const AR_MAX_ROOT: f64 = 1.05;

/// True when every root of `z^p - Σ φ_i z^(p-i)` has modulus below `rho`,
/// by the step-down recursion on the rescaled coefficients `φ_i / rho^i`.
pub fn roots_within(coefficients: &[f64], rho: f64) -> bool {
    let mut a: Vec<f64> = coefficients
        .iter()
        .enumerate()
        .map(|(i, phi)| phi / math::powi(rho, i as i32 + 1))
        .collect();
    while let Some(&k) = a.last() {
        if !(math::abs(k) < 1.0) {
            return false;
        }
        let m = a.len() - 1;
        let denom = 1.0 - k * k;
        a = (0..m).map(|i| (a[i] + k * a[m - 1 - i]) / denom).collect();
    }
    true
}

pub fn fit_ar(train: &[f64], max_order: usize) -> Result<ArModel> {
    require("ar", max_order + 2, train.len())?;
    let start = max_order;
    let n = train.len() - start;
    let mut best: Option<ArModel> = None;
    let mut any_lagged = max_order == 0;
    for p in 0..=max_order {
        let Ok((rss, beta)) = ar_ols(train, p, start) else {
            continue;
        };
        if p > 0 {
            any_lagged = true;
        }
        if !roots_within(&beta[1..], AR_MAX_ROOT) {
            continue;
        }
        let score = aic(rss, n, p + 1);
        if best.as_ref().is_none_or(|b| score < b.aic) {
            best = Some(ArModel {
                intercept: beta[0],
                coefficients: beta[1..].to_vec(),
                aic: score,
            });
        }
    }
    match best {
        Some(model) if any_lagged => Ok(model),
        _ => Err(Error::SingularDesign),
    }
}

fn effective_order(len: usize, max_order: usize) -> usize {
    max_order.min(len.saturating_sub(2) / 2)
}

/// AR forecast; a singular design falls back to the training mean.
pub fn ar_forecast(train: &[f64], max_order: usize, horizon: usize) -> Result<Vec<f64>> {
    require("ar", 3, train.len())?;
    match fit_ar(train, effective_order(train.len(), max_order)) {
        Ok(model) => Ok(model.forecast(train, horizon)),
        Err(Error::SingularDesign) => Ok(vec![math::mean(train); horizon]),
        Err(e) => Err(e),
    }
}

/// AR on the additively seasonally adjusted series, reseasonalized.
pub fn seasonal_adjusted_ar_forecast(
    train: &[f64],
    period: usize,
    max_order: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    require("sar", core::cmp::max(3, 2 * period), train.len())?;
    let (adjusted, idx) = deseasonalize(train, period);
    let mut out = ar_forecast(&adjusted, max_order, horizon)?;
    reseasonalize(&mut out, &idx, train.len());
    Ok(out)
}

/// A pool member that failed and was replaced by the naive forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Substitution {
    pub column: usize,
    pub method: &'static str,
    pub reason: Error,
}

/// `H x M` matrix of pool forecasts plus any substitutions made.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolForecast {
    pub matrix: Matrix,
    pub substitutions: Vec<Substitution>,
}

/// Forecasts every pool member; failures become the naive forecast.
pub fn pool_forecasts(
    train: &[f64],
    pool: &[ForecasterSpec],
    period: usize,
    horizon: usize,
) -> Result<PoolForecast> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("empty pool".into()));
    }
    if train.is_empty() {
        return Err(Error::InsufficientHistory {
            method: "pool",
            needed: 1,
            got: 0,
        });
    }
    let mut substitutions = Vec::new();
    let columns: Vec<Vec<f64>> = pool
        .iter()
        .enumerate()
        .map(|(column, spec)| match forecast(spec, train, period, horizon) {
            Ok(f) => f,
            Err(reason) => {
                log::warn!("{} failed ({reason}); substituting naive", spec.name());
                substitutions.push(Substitution {
                    column,
                    method: spec.name(),
                    reason,
                });
                naive(train, horizon)
            }
        })
        .collect();
    Ok(PoolForecast {
        matrix: Matrix::from_columns(&columns)?,
        substitutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn spec(kind: ForecasterKind) -> ForecasterSpec {
        ForecasterSpec::new(kind)
    }

    #[test]
    fn simple_methods() {
        assert_eq!(forecast(&spec(ForecasterKind::Naive), &[3.0, 1.0, 4.0], 1, 2).unwrap(), vec![4.0, 4.0]);
        let train: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(
            forecast(&spec(ForecasterKind::SeasonalNaive), &train, 4, 4).unwrap(),
            vec![5.0, 6.0, 7.0, 8.0]
        );
        assert_eq!(
            forecast(&spec(ForecasterKind::RandomWalkDrift), &[1.0, 2.0, 3.0], 1, 2).unwrap(),
            vec![4.0, 5.0]
        );
    }

    #[test]
    fn ses_examples() {
        assert_eq!(ses_forecast(&[5.0; 4], 3).unwrap(), vec![5.0; 3]);
        let f = ses_forecast(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert!(f.iter().all(|v| (1.0..=4.0).contains(v)));
    }

    #[test]
    fn ses_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut y: Vec<f64> = vec![0.0];
        for _ in 1..50 {
            let prev = *y.last().unwrap();
            y.push(0.6 * prev + noise.sample(&mut rng));
        }
        // direct evaluation of the smoothing recursion at every grid point
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..=99 {
            let a = k as f64 / 100.0;
            let mut l = y[0];
            let mut sse = 0.0;
            for t in 1..y.len() {
                sse += (y[t] - l).powi(2);
                l = a * y[t] + (1.0 - a) * l;
            }
            if sse < best.0 {
                best = (sse, l);
            }
        }
        let f = ses_forecast(&y, 3).unwrap();
        for v in f {
            assert!((v - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_on_line() {
        // On a noiseless line the SES level sits at the last point (alpha hits
        // the grid edge at 0.99) and the drift adds half the slope per step.
        let train: Vec<f64> = (1..=20).map(f64::from).collect();
        let f = theta_forecast(&train, 1, 3).unwrap();
        let mut level = train[0];
        for &y in &train[1..] {
            level = 0.99 * y + 0.01 * level;
        }
        for (h, v) in f.iter().enumerate() {
            let oracle = level + 0.5 * (h + 1) as f64;
            assert!((v - oracle).abs() < 1e-9, "h={h}: {v} vs {oracle}");
        }
        assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn theta_constant_and_reversal() {
        assert_eq!(theta_forecast(&[2.0; 10], 1, 3).unwrap(), vec![2.0; 3]);
        let up = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let fu = theta_forecast(&up, 1, 4).unwrap();
        let fd = theta_forecast(&down, 1, 4).unwrap();
        assert!(fu[3] > fu[0]);
        assert!(fd[3] < fd[0]);
    }

    #[test]
    fn ar_recovers_noiseless_coefficient() {
        let mut y = vec![1.0];
        for _ in 1..30 {
            y.push(0.8 * y.last().unwrap());
        }
        let m = fit_ar(&y, 4).unwrap();
        assert_eq!(m.order(), 1);
        assert!((m.coefficients[0] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn ar_order_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<f64> = (0..60).map(|_| noise.sample(&mut rng)).collect();
        let max_p = 5;
        let model = fit_ar(&y, max_p).unwrap();
        // oracle: normal equations solved with nalgebra on the same rows
        let start = max_p;
        let n = y.len() - start;
        let mut best = (f64::INFINITY, 0);
        for p in 0..=max_p {
            let x = nalgebra::DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { y[start + r - c] });
            let t = nalgebra::DVector::from_column_slice(&y[start..]);
            let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * &t)).unwrap();
            let rss = (&x * beta - t).norm_squared();
            let score = n as f64 * (rss / n as f64).ln() + 2.0 * (p + 1) as f64;
            if score < best.0 {
                best = (score, p);
            }
        }
        assert_eq!(model.order(), best.1);
        assert!((model.aic - best.0).abs() < 1e-8);
    }

    #[test]
    fn ar_constant_series_falls_back() {
        assert_eq!(fit_ar(&[3.0; 12], 3), Err(Error::SingularDesign));
        assert_eq!(ar_forecast(&[3.0; 12], 3, 4).unwrap(), vec![3.0; 4]);
    }

    #[test]
    fn seasonal_indices_recover_pattern() {
        let pattern = [2.0, -1.0, 0.5, -1.5];
        let train: Vec<f64> = (0..24).map(|t| 10.0 + 0.3 * t as f64 + pattern[t % 4]).collect();
        let idx = seasonal_indices(&train, 4);
        for (a, b) in idx.iter().zip(pattern) {
            assert!((a - b).abs() < 1e-9);
        }
        let f = seasonal_adjusted_ar_forecast(&train, 4, 2, 4).unwrap();
        assert_eq!(f.len(), 4);
    }

    #[test]
    fn pool_shapes_and_substitution() {
        let train: Vec<f64> = (0..20).map(|t| (t as f64 * 0.7).sin() + 5.0).collect();
        let pf = pool_forecasts(&train, &[spec(ForecasterKind::Naive); 2], 1, 3).unwrap();
        assert_eq!(pf.matrix.column(0), pf.matrix.column(1));

        let five: Vec<_> = default_pool().into_iter().take(5).collect();
        let pf = pool_forecasts(&train, &five, 1, 6).unwrap();
        assert_eq!((pf.matrix.rows(), pf.matrix.cols()), (6, 5));
        assert!(pf.substitutions.is_empty());

        let short = [1.0, 2.0, 3.0, 4.0, 5.0];
        let pf = pool_forecasts(
            &short,
            &[spec(ForecasterKind::Naive), spec(ForecasterKind::SeasonalNaive)],
            4,
            2,
        )
        .unwrap();
        assert_eq!(pf.matrix.column(1), pf.matrix.column(0));
        assert_eq!(pf.substitutions.len(), 1);
        assert_eq!(pf.substitutions[0].column, 1);
    }

    #[test]
    fn parse_pool_names() {
        let pool = parse_pool("naive, snaive,theta").unwrap();
        assert_eq!(pool.len(), 3);
        assert!(parse_pool("naive").is_err());
        assert!(parse_pool("naive,bogus").is_err());
    }

    fn ar2_max_modulus(p1: f64, p2: f64) -> f64 {
        // z^2 - p1 z - p2 = 0
        let disc = p1 * p1 + 4.0 * p2;
        if disc >= 0.0 {
            let r = disc.sqrt();
            f64::max(((p1 + r) / 2.0).abs(), ((p1 - r) / 2.0).abs())
        } else {
            (-p2).sqrt()
        }
    }

    #[test]
    fn explosive_orders_rejected() {
        assert!(roots_within(&[0.8], 1.0));
        assert!(!roots_within(&[1.1], 1.05));
        assert!(roots_within(&[1.04], 1.05));
        // fitted on a short yearly window: AR(2) root 1.12 is excluded
        assert!(!roots_within(&[0.396, 0.813], AR_MAX_ROOT));
        assert!(roots_within(&[], 1.0));
    }

    proptest! {
        #[test]
        fn ar2_root_test_matches_quadratic(p1 in -2.5f64..2.5, p2 in -1.5f64..1.5, rho in 0.5f64..1.5) {
            let m = ar2_max_modulus(p1, p2);
            prop_assume!((m - rho).abs() > 1e-6);
            prop_assert_eq!(roots_within(&[p1, p2], rho), m < rho);
        }

        #[test]
        fn deterministic(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..10.0)).collect();
            let a = pool_forecasts(&train, &default_pool(), 4, 8).unwrap();
            let b = pool_forecasts(&train, &default_pool(), 4, 8).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn simple_methods_equivariant(seed in 0u64..500, shift in -100.0f64..100.0, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..10.0)).collect();
            for kind in [ForecasterKind::Naive, ForecasterKind::SeasonalNaive, ForecasterKind::RandomWalkDrift] {
                let base = forecast(&spec(kind), &train, 4, 6).unwrap();
                let shifted: Vec<f64> = train.iter().map(|v| v + shift).collect();
                let scaled: Vec<f64> = train.iter().map(|v| v * scale).collect();
                let fs = forecast(&spec(kind), &shifted, 4, 6).unwrap();
                let fc = forecast(&spec(kind), &scaled, 4, 6).unwrap();
                for i in 0..6 {
                    prop_assert!((fs[i] - (base[i] + shift)).abs() < 1e-9);
                    prop_assert!((fc[i] - base[i] * scale).abs() < 1e-9);
                }
            }
        }
    }
}
