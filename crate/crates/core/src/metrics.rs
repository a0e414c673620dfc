//! Point-forecast accuracy measures (sMAPE, MASE, series-level and
//! collection-level OWA) and the ambiguity decomposition of a convex
//! combination's squared error.

use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Per-series scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesScore {
    pub smape: f64,
    pub mase: f64,
    pub sowa: f64,
}

/// Collection-level scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionScore {
    pub owa: f64,
    pub mean_sowa: f64,
    pub sd_sowa: f64,
}

/// Everything needed to score one series against the naive benchmark.
#[derive(Debug, Clone, Copy)]
pub struct ScoreInput<'a> {
    pub actual: &'a [f64],
    pub predicted: &'a [f64],
    pub naive: &'a [f64],
    pub train: &'a [f64],
    pub period: usize,
}

/// Symmetric MAPE on the 0..200 scale. A step where both values are zero
/// contributes 0.
pub fn smape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_len(actual.len(), predicted.len())?;
    if actual.is_empty() {
        return Err(Error::InvalidArgument("empty horizon".into()));
    }
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&y, &f)| {
            let denom = math::abs(y) + math::abs(f);
            if denom == 0.0 {
                0.0
            } else {
                // rounding can push opposite-sign terms a hair past the bound
                f64::min(200.0 * math::abs(y - f) / denom, 200.0)
            }
        })
        .sum();
    Ok(total / actual.len() as f64)
}

/// In-sample mean absolute error of the seasonal naive one-step forecast.
pub fn seasonal_naive_scale(train: &[f64], period: usize) -> Result<f64> {
    if period == 0 || train.len() <= period {
        return Err(Error::InsufficientHistory {
            method: "mase",
            needed: period + 1,
            got: train.len(),
        });
    }
    let sum: f64 = train
        .iter()
        .skip(period)
        .zip(train)
        .map(|(a, b)| math::abs(a - b))
        .sum();
    Ok(sum / (train.len() - period) as f64)
}

/// Mean absolute scaled error over the horizon.
pub fn mase(actual: &[f64], predicted: &[f64], train: &[f64], period: usize) -> Result<f64> {
    check_len(actual.len(), predicted.len())?;
    if actual.is_empty() {
        return Err(Error::InvalidArgument("empty horizon".into()));
    }
    let scale = seasonal_naive_scale(train, period)?;
    if scale == 0.0 {
        return Err(Error::DegenerateScale);
    }
    let mae = actual
        .iter()
        .zip(predicted)
        .map(|(a, f)| math::abs(a - f))
        .sum::<f64>()
        / actual.len() as f64;
    Ok(mae / scale)
}

fn benchmark_terms(input: &ScoreInput<'_>) -> Result<(f64, f64)> {
    let s = smape(input.actual, input.naive)?;
    let m = match mase(input.actual, input.naive, input.train, input.period) {
        Err(Error::DegenerateScale) => return Err(Error::DegenerateBenchmark),
        other => other?,
    };
    if s == 0.0 || m == 0.0 {
        return Err(Error::DegenerateBenchmark);
    }
    Ok((s, m))
}

/// Scores one series; `sowa` is the average of the sMAPE and MASE ratios
/// against the naive forecast.
pub fn score_series(input: &ScoreInput<'_>) -> Result<SeriesScore> {
    let (naive_smape, naive_mase) = benchmark_terms(input)?;
    let s = smape(input.actual, input.predicted)?;
    let m = mase(input.actual, input.predicted, input.train, input.period)?;
    Ok(SeriesScore {
        smape: s,
        mase: m,
        sowa: 0.5 * s / naive_smape + 0.5 * m / naive_mase,
    })
}

/// Series-level OWA.
pub fn sowa(
    actual: &[f64],
    predicted: &[f64],
    naive: &[f64],
    train: &[f64],
    period: usize,
) -> Result<f64> {
    score_series(&ScoreInput {
        actual,
        predicted,
        naive,
        train,
        period,
    })
    .map(|s| s.sowa)
}

/// Collection OWA as a ratio of sums, plus mean and population SD of the
/// per-series sOWA values.
pub fn owa(collection: &[ScoreInput<'_>]) -> Result<CollectionScore> {
    if collection.is_empty() {
        return Err(Error::InvalidArgument("empty collection".into()));
    }
    let (mut s_num, mut s_den, mut m_num, mut m_den) = (0.0, 0.0, 0.0, 0.0);
    let mut sowas = Vec::with_capacity(collection.len());
    for item in collection {
        let (ns, nm) = benchmark_terms(item)?;
        let score = score_series(item)?;
        s_num += score.smape;
        m_num += score.mase;
        s_den += ns;
        m_den += nm;
        sowas.push(score.sowa);
    }
    if s_den == 0.0 || m_den == 0.0 {
        return Err(Error::DegenerateBenchmark);
    }
    let mean = math::mean(&sowas);
    let var = sowas.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / sowas.len() as f64;
    Ok(CollectionScore {
        owa: 0.5 * s_num / s_den + 0.5 * m_num / m_den,
        mean_sowa: mean,
        sd_sowa: math::sqrt(var),
    })
}

/// Terms of the ambiguity decomposition, each averaged over the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ambiguity {
    /// Squared error of the combined forecast.
    pub mse_comb: f64,
    /// Weighted squared error of the individual forecasts.
    pub weighted_error: f64,
    /// Weighted spread of the individual forecasts around the combination.
    pub diversity: f64,
    /// The same spread written as a weighted sum over method pairs.
    pub diversity_pairwise: f64,
}

pub fn ambiguity_decomposition(
    forecasts: &Matrix,
    weights: &[f64],
    actual: &[f64],
) -> Result<Ambiguity> {
    check_len(forecasts.cols(), weights.len())?;
    check_len(forecasts.rows(), actual.len())?;
    let h = actual.len() as f64;
    let m = weights.len();
    let mut out = Ambiguity {
        mse_comb: 0.0,
        weighted_error: 0.0,
        diversity: 0.0,
        diversity_pairwise: 0.0,
    };
    for (row, &y) in actual.iter().enumerate() {
        let f = forecasts.row(row);
        let comb: f64 = f.iter().zip(weights).map(|(a, w)| a * w).sum();
        out.mse_comb += (comb - y) * (comb - y);
        for i in 0..m {
            out.weighted_error += weights[i] * (f[i] - y) * (f[i] - y);
            out.diversity += weights[i] * (f[i] - comb) * (f[i] - comb);
            for j in (i + 1)..m {
                out.diversity_pairwise += weights[i] * weights[j] * (f[i] - f[j]) * (f[i] - f[j]);
            }
        }
    }
    out.mse_comb /= h;
    out.weighted_error /= h;
    out.diversity /= h;
    out.diversity_pairwise /= h;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&[100.0, 200.0], &[100.0, 200.0]).unwrap(), 0.0);
        assert_eq!(smape(&[100.0], &[-100.0]).unwrap(), 200.0);
        // 200*10/210 = 9.5238095, 200*10/390 = 5.1282051
        let v = smape(&[100.0, 200.0], &[110.0, 190.0]).unwrap();
        assert!((v - 7.326_007_326).abs() < 1e-8);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(matches!(smape(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn mase_examples() {
        let train = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(mase(&[7.0, 8.0], &[7.0, 8.0], &train, 1).unwrap(), 0.0);
        assert_eq!(mase(&[7.0, 8.0], &[6.0, 6.0], &train, 1).unwrap(), 1.5);
        assert_eq!(mase(&[7.0], &[6.0], &[2.0, 2.0, 2.0], 1), Err(Error::DegenerateScale));
    }

    #[test]
    fn sowa_anchors() {
        let train = [3.0, 5.0, 4.0, 6.0];
        let actual = [7.0, 8.0];
        let naive = [6.0, 6.0];
        assert_eq!(sowa(&actual, &naive, &naive, &train, 1).unwrap(), 1.0);
        assert_eq!(sowa(&actual, &actual, &naive, &train, 1).unwrap(), 0.0);
        assert_eq!(
            sowa(&actual, &actual, &actual, &train, 1),
            Err(Error::DegenerateBenchmark)
        );
    }

    #[test]
    fn sowa_matches_composed_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<f64> = (0..20).map(|_| rng.random_range(10.0..20.0)).collect();
        let actual: Vec<f64> = (0..6).map(|_| rng.random_range(10.0..20.0)).collect();
        let pred: Vec<f64> = (0..6).map(|_| rng.random_range(10.0..20.0)).collect();
        let naive = vec![train[19]; 6];
        // independent evaluation of the three formulas
        let sm = |a: &[f64], f: &[f64]| {
            a.iter().zip(f).map(|(y, p)| 200.0 * (y - p).abs() / (y.abs() + p.abs())).sum::<f64>() / a.len() as f64
        };
        let scale = (1..20).map(|t| (train[t] - train[t - 1]).abs()).sum::<f64>() / 19.0;
        let ma = |a: &[f64], f: &[f64]| a.iter().zip(f).map(|(y, p)| (y - p).abs()).sum::<f64>() / a.len() as f64 / scale;
        let expected = 0.5 * sm(&actual, &pred) / sm(&actual, &naive) + 0.5 * ma(&actual, &pred) / ma(&actual, &naive);
        let got = sowa(&actual, &pred, &naive, &train, 1).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn owa_all_naive() {
        let train = [1.0, 3.0, 2.0, 5.0];
        let actual = [4.0, 6.0];
        let naive = [5.0, 5.0];
        let item = ScoreInput { actual: &actual, predicted: &naive, naive: &naive, train: &train, period: 1 };
        let score = owa(&[item, item]).unwrap();
        assert_eq!(score.owa, 1.0);
        assert_eq!(score.mean_sowa, 1.0);
        assert_eq!(score.sd_sowa, 0.0);
    }

    #[test]
    fn owa_single_series_equals_sowa() {
        let train = [1.0, 3.0, 2.0, 5.0];
        let actual = [4.0, 6.0];
        let naive = [5.0, 5.0];
        let pred = [4.5, 5.8];
        let item = ScoreInput { actual: &actual, predicted: &pred, naive: &naive, train: &train, period: 1 };
        let score = owa(&[item]).unwrap();
        let direct = sowa(&actual, &pred, &naive, &train, 1).unwrap();
        assert!((score.owa - direct).abs() < 1e-15);
    }

    #[test]
    fn owa_two_series_ratio_of_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(50.0..150.0)).collect() };
        let (t1, a1, p1) = (draw(10), draw(4), draw(4));
        let (t2, a2, p2) = (draw(12), draw(4), draw(4));
        let n1 = vec![t1[9]; 4];
        let n2 = vec![t2[11]; 4];
        let items = [
            ScoreInput { actual: &a1, predicted: &p1, naive: &n1, train: &t1, period: 1 },
            ScoreInput { actual: &a2, predicted: &p2, naive: &n2, train: &t2, period: 1 },
        ];
        let s = |a: &[f64], f: &[f64]| smape(a, f).unwrap();
        let m = |a: &[f64], f: &[f64], t: &[f64]| mase(a, f, t, 1).unwrap();
        let expected = 0.5 * (s(&a1, &p1) + s(&a2, &p2)) / (s(&a1, &n1) + s(&a2, &n2))
            + 0.5 * (m(&a1, &p1, &t1) + m(&a2, &p2, &t2)) / (m(&a1, &n1, &t1) + m(&a2, &n2, &t2));
        let got = owa(&items).unwrap();
        assert!((got.owa - expected).abs() < 1e-14);
        let s1 = sowa(&a1, &p1, &n1, &t1, 1).unwrap();
        let s2 = sowa(&a2, &p2, &n2, &t2, 1).unwrap();
        assert!((got.mean_sowa - (s1 + s2) / 2.0).abs() < 1e-14);
        assert!((got.sd_sowa - (s1 - s2).abs() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn ambiguity_degenerate_cases() {
        let f = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let a = ambiguity_decomposition(&f, &[0.3, 0.7], &[0.0, 1.0]).unwrap();
        assert_eq!(a.diversity, 0.0);
        assert_eq!(a.mse_comb, 1.0);
        let g = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, -1.0]]).unwrap();
        let b = ambiguity_decomposition(&g, &[0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(b.mse_comb, 13.0);
        assert_eq!(b.mse_comb, b.weighted_error);
    }

    fn simplex(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn smape_symmetric(a in prop::collection::vec(-1e3f64..1e3, 1..10), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|_| rng.random_range(-1e3..1e3)).collect();
            let x = smape(&a, &b).unwrap();
            prop_assert!((x - smape(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=200.0).contains(&x));
        }

        #[test]
        fn metrics_scale_invariant(c in 0.01f64..100.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train: Vec<f64> = (0..12).map(|_| rng.random_range(1.0..10.0)).collect();
            let actual: Vec<f64> = (0..4).map(|_| rng.random_range(1.0..10.0)).collect();
            let pred: Vec<f64> = (0..4).map(|_| rng.random_range(1.0..10.0)).collect();
            let naive = vec![train[11]; 4];
            let sc = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let base = score_series(&ScoreInput { actual: &actual, predicted: &pred, naive: &naive, train: &train, period: 1 }).unwrap();
            let (ts, as_, ps, ns) = (sc(&train), sc(&actual), sc(&pred), sc(&naive));
            let scaled = score_series(&ScoreInput { actual: &as_, predicted: &ps, naive: &ns, train: &ts, period: 1 }).unwrap();
            prop_assert!((base.smape - scaled.smape).abs() < 1e-9);
            prop_assert!((base.mase - scaled.mase).abs() < 1e-9);
            prop_assert!((base.sowa - scaled.sowa).abs() < 1e-9);
        }

        #[test]
        fn ambiguity_identity_holds(seed in 0u64..10_000, m in 2usize..8, h in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..h * m).map(|_| rng.random_range(-10.0..10.0)).collect();
            let f = Matrix::from_vec(h, m, data).unwrap();
            let w = simplex(&(0..m).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>());
            let y: Vec<f64> = (0..h).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a = ambiguity_decomposition(&f, &w, &y).unwrap();
            let scale = a.weighted_error.abs().max(1e-300);
            prop_assert!((a.mse_comb - (a.weighted_error - a.diversity)).abs() / scale < 1e-9);
            prop_assert!((a.diversity - a.diversity_pairwise).abs() / scale < 1e-9);
            prop_assert!(a.diversity >= 0.0);
        }
    }
}
