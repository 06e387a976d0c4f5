use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesDataset};

/// Normalization recipe applied channel-wise before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMode {
    /// Subtract the channel mean and divide by the population standard
    /// deviation.
    #[default]
    ZScore,
    /// Map the observed channel range onto `[0, 1]`.
    MinMax,
    /// Leave values untouched (offset 0, gain 1).
    Identity,
}

/// Per-channel affine transform `scaled = (raw - offset) / gain`, fitted on a
/// training dataset and stored alongside the model so that raw-unit data can
/// be moved into and out of the model's internal frame at any later time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    mode: ScalerMode,
    input_offsets: Vec<f64>,
    input_gains: Vec<f64>,
    output_offsets: Vec<f64>,
    output_gains: Vec<f64>,
}

/// Fits one offset/gain pair per channel of `data` according to `mode`.
///
/// A channel whose observed values are all identical carries no scale
/// information; it falls back to gain 1 with the constant as offset, so the
/// transform stays invertible and maps the channel to exactly zero.
pub fn fit_scaler(data: &TimeSeriesDataset, mode: ScalerMode) -> Result<ScalerParams, DataError> {
    if data.rows() == 0 {
        return Err(DataError::TooFewRows { rows: 0 });
    }
    let fit_matrix = |m: &DMatrix<f64>| -> (Vec<f64>, Vec<f64>) {
        let mut offsets = Vec::with_capacity(m.ncols());
        let mut gains = Vec::with_capacity(m.ncols());
        for c in 0..m.ncols() {
            let col = m.column(c);
            let (offset, gain) = fit_channel(col.iter().copied(), m.nrows(), mode);
            offsets.push(offset);
            gains.push(gain);
        }
        (offsets, gains)
    };
    let (input_offsets, input_gains) = fit_matrix(data.inputs());
    let (output_offsets, output_gains) = fit_matrix(data.outputs());
    Ok(ScalerParams { mode, input_offsets, input_gains, output_offsets, output_gains })
}

fn fit_channel(values: impl Iterator<Item = f64> + Clone, n: usize, mode: ScalerMode) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for v in values.clone() {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let mean = sum / n as f64;
    if min == max {
        // Constant channel: no spread to normalize by.
        return (min, 1.0);
    }
    match mode {
        ScalerMode::Identity => (0.0, 1.0),
        ScalerMode::MinMax => (min, max - min),
        ScalerMode::ZScore => {
            let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        }
    }
}

/// Moves a raw-unit dataset into the scaled frame of `params`.
pub fn apply_scaler(
    params: &ScalerParams,
    data: &TimeSeriesDataset,
) -> Result<TimeSeriesDataset, DataError> {
    params.check_shape(data)?;
    let inputs = transform(data.inputs(), &params.input_offsets, &params.input_gains, false);
    let outputs = transform(data.outputs(), &params.output_offsets, &params.output_gains, false);
    data.with_values(inputs, outputs)
}

/// Moves a scaled dataset back into raw units; exact inverse of
/// [`apply_scaler`] up to floating-point rounding.
pub fn invert_scaler(
    params: &ScalerParams,
    data: &TimeSeriesDataset,
) -> Result<TimeSeriesDataset, DataError> {
    params.check_shape(data)?;
    let inputs = transform(data.inputs(), &params.input_offsets, &params.input_gains, true);
    let outputs = transform(data.outputs(), &params.output_offsets, &params.output_gains, true);
    data.with_values(inputs, outputs)
}

fn transform(m: &DMatrix<f64>, offsets: &[f64], gains: &[f64], invert: bool) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        if invert {
            m[(r, c)] * gains[c] + offsets[c]
        } else {
            (m[(r, c)] - offsets[c]) / gains[c]
        }
    })
}

impl ScalerParams {
    /// The identity transform for the given channel counts; useful when a
    /// model should operate directly in raw units.
    pub fn identity(n_inputs: usize, n_outputs: usize) -> Self {
        Self {
            mode: ScalerMode::Identity,
            input_offsets: vec![0.0; n_inputs],
            input_gains: vec![1.0; n_inputs],
            output_offsets: vec![0.0; n_outputs],
            output_gains: vec![1.0; n_outputs],
        }
    }

    /// The mode this scaler was fitted with.
    pub fn mode(&self) -> ScalerMode {
        self.mode
    }

    /// Number of input channels covered.
    pub fn n_inputs(&self) -> usize {
        self.input_offsets.len()
    }

    /// Number of output channels covered.
    pub fn n_outputs(&self) -> usize {
        self.output_offsets.len()
    }

    /// Gain of input channel `j`.
    pub fn input_gain(&self, j: usize) -> f64 {
        self.input_gains[j]
    }

    /// Offset of input channel `j`.
    pub fn input_offset(&self, j: usize) -> f64 {
        self.input_offsets[j]
    }

    /// Gain of output channel `m`.
    pub fn output_gain(&self, m: usize) -> f64 {
        self.output_gains[m]
    }

    /// Offset of output channel `m`.
    pub fn output_offset(&self, m: usize) -> f64 {
        self.output_offsets[m]
    }

    /// Scales a single raw input row in place.
    pub fn scale_input_row(&self, row: &mut [f64]) -> Result<(), DataError> {
        if row.len() != self.n_inputs() {
            return Err(DataError::ChannelCountMismatch {
                expected: self.n_inputs(),
                got: row.len(),
            });
        }
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.input_offsets[j]) / self.input_gains[j];
        }
        Ok(())
    }

    /// Scales a single raw output row in place.
    pub fn scale_output_row(&self, row: &mut [f64]) -> Result<(), DataError> {
        if row.len() != self.n_outputs() {
            return Err(DataError::ChannelCountMismatch {
                expected: self.n_outputs(),
                got: row.len(),
            });
        }
        for (m, v) in row.iter_mut().enumerate() {
            *v = (*v - self.output_offsets[m]) / self.output_gains[m];
        }
        Ok(())
    }

    /// Maps one scaled output value back to raw units.
    pub fn unscale_output(&self, m: usize, v: f64) -> f64 {
        v * self.output_gains[m] + self.output_offsets[m]
    }

    fn check_shape(&self, data: &TimeSeriesDataset) -> Result<(), DataError> {
        if data.n_inputs() != self.n_inputs() {
            return Err(DataError::ChannelCountMismatch {
                expected: self.n_inputs(),
                got: data.n_inputs(),
            });
        }
        if data.n_outputs() != self.n_outputs() {
            return Err(DataError::ChannelCountMismatch {
                expected: self.n_outputs(),
                got: data.n_outputs(),
            });
        }
        Ok(())
    }
}
