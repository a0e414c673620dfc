//! Friedman rank test and Nemenyi multiple comparisons with the best.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Ranks within each row (1 = best), ties sharing their average rank.
pub fn rank_rows(scores: &Matrix, lower_is_better: bool) -> Matrix {
    let k = scores.cols();
    let mut ranks = Matrix::zeros(scores.rows(), k);
    for r in 0..scores.rows() {
        let row = scores.row(r);
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| {
            let ord = row[a].total_cmp(&row[b]);
            if lower_is_better { ord } else { ord.reverse() }
        });
        let mut i = 0;
        while i < k {
            let mut j = i;
            while j + 1 < k && row[idx[j + 1]] == row[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &c in &idx[i..=j] {
                ranks[(r, c)] = avg;
            }
            i = j + 1;
        }
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub ranks: Matrix,
    pub mean_ranks: Vec<f64>,
}

impl RankTable {
    pub fn new(scores: &Matrix, lower_is_better: bool) -> Self {
        let ranks = rank_rows(scores, lower_is_better);
        let n = ranks.rows() as f64;
        let mean_ranks = (0..ranks.cols())
            .map(|c| ranks.column(c).iter().sum::<f64>() / n)
            .collect();
        Self { ranks, mean_ranks }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
    /// Every row fully tied; the statistic is 0 and `p = 1`.
    pub degenerate: bool,
}

impl FriedmanResult {
    /// Turns a fully tied table into [`Error::DegenerateInput`].
    pub fn check(self) -> Result<Self> {
        if self.degenerate {
            Err(Error::DegenerateInput)
        } else {
            Ok(self)
        }
    }
}

fn check_table(scores: &Matrix) -> Result<(usize, usize)> {
    let (n, k) = (scores.rows(), scores.cols());
    if n < 2 || k < 2 {
        return Err(Error::InvalidArgument(format!(
            "rank tests need at least 2 series and 2 methods, got {n}x{k}"
        )));
    }
    if scores.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN score in rank table".into()));
    }
    Ok((n, k))
}

/// `χ²_F = 12/(N·k(k+1))·ΣR_j² − 3N(k+1)` with `k − 1` degrees of freedom.
pub fn friedman(scores: &Matrix, lower_is_better: bool) -> Result<FriedmanResult> {
    let (n, k) = check_table(scores)?;
    let ranks = rank_rows(scores, lower_is_better);
    let degenerate = (0..n).all(|r| scores.row(r).iter().all(|&v| v == scores.row(r)[0]));
    if degenerate {
        log::warn!("Friedman test on a fully tied table");
        return Ok(FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            df: k - 1,
            degenerate,
        });
    }
    let sum_sq: f64 = (0..k)
        .map(|c| math::powi(ranks.column(c).iter().sum::<f64>(), 2))
        .sum();
    let (nf, kf) = (n as f64, k as f64);
    let statistic = 12.0 * sum_sq / (nf * kf * (kf + 1.0)) - 3.0 * nf * (kf + 1.0);
    Ok(FriedmanResult {
        statistic,
        p_value: chi_square_sf(statistic.max(0.0), (k - 1) as f64),
        df: k - 1,
        degenerate,
    })
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    upper_regularized_gamma(df / 2.0, x / 2.0)
}

/// `Q(a, x) = Γ(a, x)/Γ(a)`: series below `a + 1`, Lentz continued
/// fraction above.
fn upper_regularized_gamma(a: f64, x: f64) -> f64 {
    let log_prefix = a * math::ln(x) - x - math::lgamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if math::abs(term) < math::abs(sum) * 1e-16 {
                break;
            }
        }
        (1.0 - sum * math::exp(log_prefix)).clamp(0.0, 1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if math::abs(d) < tiny {
                d = tiny;
            }
            c = b + an / c;
            if math::abs(c) < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if math::abs(delta - 1.0) < 1e-16 {
                break;
            }
        }
        (math::exp(log_prefix) * h).clamp(0.0, 1.0)
    }
}

/// Upper 5% points of the studentized range with infinite degrees of
/// freedom, `k = 2..=10`. Divided by `√2` they give the Nemenyi critical
/// values tabulated by Demšar (2006, JMLR 7, Table 5a).
const STUDENTIZED_RANGE_05: [f64; 9] = [
    2.771808, 3.314493, 3.633160, 3.857656, 4.030092, 4.169554, 4.286309, 4.386509, 4.474124,
];

/// Interval multiplier `q` for `k` methods at `α = 0.05`.
///
/// With half-width `q·sqrt(k(k+1)/(12N))` and `q` equal to half the
/// studentized-range point, two intervals fail to overlap exactly when the
/// mean ranks differ by more than the Nemenyi critical difference.
pub fn nemenyi_q(k: usize) -> Result<f64> {
    if !(2..=10).contains(&k) {
        return Err(Error::UnsupportedK(k));
    }
    Ok(STUDENTIZED_RANGE_05[k - 2] / 2.0)
}

/// Nemenyi critical difference of mean ranks at `α = 0.05`.
pub fn critical_difference(k: usize, n: usize) -> Result<f64> {
    Ok(2.0 * half_width(k, n)?)
}

pub fn half_width(k: usize, n: usize) -> Result<f64> {
    let (kf, nf) = (k as f64, n as f64);
    Ok(nemenyi_q(k)? * math::sqrt(kf * (kf + 1.0) / (12.0 * nf)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McbInterval {
    /// Column index of the method in the score table.
    pub method: usize,
    pub mean_rank: f64,
    pub lower: f64,
    pub upper: f64,
}

impl McbInterval {
    pub fn overlaps(&self, other: &McbInterval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McbResult {
    /// Sorted by ascending mean rank, ties by column index.
    pub intervals: Vec<McbInterval>,
    pub half_width: f64,
    pub friedman: FriedmanResult,
    /// Whether the Friedman test rejects equal performance at `alpha`.
    pub rejected: bool,
}

/// Mean ranks with Nemenyi intervals. Only `alpha = 0.05` is tabulated.
pub fn nemenyi_mcb(scores: &Matrix, lower_is_better: bool, alpha: f64) -> Result<McbResult> {
    let (n, k) = check_table(scores)?;
    if alpha != 0.05 {
        return Err(Error::InvalidArgument(format!(
            "critical values are tabulated for alpha = 0.05 only, got {alpha}"
        )));
    }
    let hw = half_width(k, n)?;
    let fr = friedman(scores, lower_is_better)?;
    let table = RankTable::new(scores, lower_is_better);
    let mut intervals: Vec<McbInterval> = table
        .mean_ranks
        .iter()
        .enumerate()
        .map(|(method, &r)| McbInterval {
            method,
            mean_rank: r,
            lower: r - hw,
            upper: r + hw,
        })
        .collect();
    intervals.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then(a.method.cmp(&b.method)));
    let rejected = !fr.degenerate && fr.p_value < alpha;
    if !rejected {
        log::info!("Friedman test does not reject at alpha {alpha}; intervals are informational");
    }
    Ok(McbResult {
        intervals,
        half_width: hw,
        friedman: fr,
        rejected,
    })
}
