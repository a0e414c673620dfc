//! Offline metadata for one series: split, pool forecasts, labeling, and
//! the prepared network input.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::labeling::{self, LabelBundle};
use crate::matrix::Matrix;
use crate::net::TrainingSample;
use crate::pool::{self, ForecasterSpec, Substitution};
use crate::series::{self, PreparedInput, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataRecord {
    pub id: String,
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    /// `H × M` pool forecasts of the test window.
    pub forecasts: Matrix,
    pub errors: Matrix,
    pub naive: Vec<f64>,
    pub labels: LabelBundle,
    pub input: PreparedInput,
    pub substitutions: Vec<Substitution>,
}

impl MetadataRecord {
    pub fn training_sample(&self) -> TrainingSample {
        TrainingSample {
            input: self.input.data.clone(),
            forecasts: self.forecasts.clone(),
            actual: self.test.clone(),
            labels: self.labels.labels.clone(),
        }
    }
}

/// Builds the record for `series`. Fails with `DegenerateBenchmark` when the
/// naive forecast is exact on the test window.
pub fn build_record(
    series: &TimeSeries,
    pool_specs: &[ForecasterSpec],
    input_len: usize,
    tau: Option<f64>,
) -> Result<MetadataRecord> {
    let split = series::split_train_test(series)?;
    let (h, s) = (series.horizon, series.seasonal_period);
    let fc = pool::pool_forecasts(&split.train, pool_specs, s, h)?;
    let naive = pool::naive(&split.train, h);
    let errors = labeling::error_matrix(&fc.matrix, &split.test)?;
    let labels = labeling::label_series(&fc.matrix, &split.test, &naive, &split.train, s, tau)?;
    let input = series::prepare_input(&split.train, input_len);
    Ok(MetadataRecord {
        id: series.id.clone(),
        train: split.train,
        test: split.test,
        forecasts: fc.matrix,
        errors,
        naive,
        labels,
        input,
        substitutions: fc.substitutions,
    })
}

/// Inputs for forecasting beyond the end of `series`: pool forecasts fitted
/// on the full history and the prepared network input.
pub fn online_inputs(
    series: &TimeSeries,
    pool_specs: &[ForecasterSpec],
    input_len: usize,
) -> Result<(Matrix, PreparedInput)> {
    let fc = pool::pool_forecasts(&series.values, pool_specs, series.seasonal_period, series.horizon)?;
    Ok((fc.matrix, series::prepare_input(&series.values, input_len)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::series::Frequency;

    #[test]
    fn record_shapes() {
        let values: Vec<f64> = (0..30).map(|t| 10.0 + t as f64 * 0.5 + (t as f64).sin()).collect();
        let s = TimeSeries::new("Y1", Frequency::Yearly, values, 6, 1).unwrap();
        let pool = pool::default_pool();
        let r = build_record(&s, &pool, 32, None).unwrap();
        assert_eq!((r.forecasts.rows(), r.forecasts.cols()), (6, pool.len()));
        assert_eq!(r.labels.labels.len(), pool.len());
        assert!(r.labels.labels.contains(&1));
        assert_eq!(r.input.data.len(), 32);
        assert_eq!(r.train.len(), 24);
        let sample = r.training_sample();
        assert_eq!(sample.actual, r.test);
        assert_eq!(r.errors[(0, 0)], r.test[0] - r.forecasts[(0, 0)]);
    }

    #[test]
    fn exact_naive_is_degenerate() {
        let s = TimeSeries::new("flat", Frequency::Yearly, alloc::vec![4.0; 20], 6, 1).unwrap();
        assert_eq!(
            build_record(&s, &pool::default_pool(), 32, None),
            Err(Error::DegenerateBenchmark)
        );
    }
}
