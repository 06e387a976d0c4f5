use nalgebra::DMatrix;

use super::DataError;

/// A uniformly sampled multi-channel record with named input and output
/// channels.
///
/// Rows are samples, columns are channels. Timestamps are implicit:
/// `t_i = t0 + i * sample_period`, which keeps the grid exactly uniform and
/// makes equality of two datasets a plain matrix comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    sample_period: f64,
    t0: f64,
    input_names: Vec<String>,
    output_names: Vec<String>,
    /// `rows x n_inputs`, column-major like all `nalgebra` matrices.
    inputs: DMatrix<f64>,
    /// `rows x n_outputs`.
    outputs: DMatrix<f64>,
}

impl TimeSeriesDataset {
    /// Builds a dataset after validating that names, shapes, and values are
    /// consistent: equal row counts, one name per column, a positive sample
    /// period, and finite entries throughout.
    pub fn new(
        sample_period: f64,
        t0: f64,
        input_names: Vec<String>,
        output_names: Vec<String>,
        inputs: DMatrix<f64>,
        outputs: DMatrix<f64>,
    ) -> Result<Self, DataError> {
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(DataError::Shape {
                reason: format!("sample period must be positive and finite, got {sample_period}"),
            });
        }
        if !t0.is_finite() {
            return Err(DataError::Shape { reason: format!("start time must be finite, got {t0}") });
        }
        if inputs.nrows() != outputs.nrows() {
            return Err(DataError::Shape {
                reason: format!(
                    "inputs have {} rows but outputs have {}",
                    inputs.nrows(),
                    outputs.nrows()
                ),
            });
        }
        if inputs.ncols() != input_names.len() {
            return Err(DataError::ChannelCountMismatch {
                expected: input_names.len(),
                got: inputs.ncols(),
            });
        }
        if outputs.ncols() != output_names.len() {
            return Err(DataError::ChannelCountMismatch {
                expected: output_names.len(),
                got: outputs.ncols(),
            });
        }
        if output_names.is_empty() {
            return Err(DataError::Shape { reason: "at least one output channel required".into() });
        }
        for (names, matrix) in [(&input_names, &inputs), (&output_names, &outputs)] {
            for (c, name) in names.iter().enumerate() {
                for r in 0..matrix.nrows() {
                    if !matrix[(r, c)].is_finite() {
                        return Err(DataError::NonFiniteValue { column: name.clone(), row: r });
                    }
                }
            }
        }
        Ok(Self { sample_period, t0, input_names, output_names, inputs, outputs })
    }

    /// Convenience constructor from per-channel column vectors.
    pub fn from_columns(
        sample_period: f64,
        t0: f64,
        inputs: &[(&str, Vec<f64>)],
        outputs: &[(&str, Vec<f64>)],
    ) -> Result<Self, DataError> {
        let rows = outputs
            .first()
            .map(|(_, v)| v.len())
            .or_else(|| inputs.first().map(|(_, v)| v.len()))
            .unwrap_or(0);
        let build = |cols: &[(&str, Vec<f64>)]| -> Result<(Vec<String>, DMatrix<f64>), DataError> {
            for (name, v) in cols {
                if v.len() != rows {
                    return Err(DataError::Shape {
                        reason: format!("column `{name}` has {} rows, expected {rows}", v.len()),
                    });
                }
            }
            let names = cols.iter().map(|(n, _)| n.to_string()).collect();
            let matrix = DMatrix::from_fn(rows, cols.len(), |r, c| cols[c].1[r]);
            Ok((names, matrix))
        };
        let (input_names, input_matrix) = build(inputs)?;
        let (output_names, output_matrix) = build(outputs)?;
        Self::new(sample_period, t0, input_names, output_names, input_matrix, output_matrix)
    }

    /// Number of samples.
    pub fn rows(&self) -> usize {
        self.outputs.nrows()
    }

    /// Number of input (exogenous) channels.
    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    /// Number of output (measured response) channels.
    pub fn n_outputs(&self) -> usize {
        self.outputs.ncols()
    }

    /// Uniform sampling interval in seconds.
    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// Timestamp of row 0 in seconds.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Timestamp of row `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.sample_period
    }

    /// Input channel names in column order.
    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    /// Output channel names in column order.
    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    /// The full input matrix (`rows x n_inputs`).
    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// The full output matrix (`rows x n_outputs`).
    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    /// One input channel as a contiguous vector.
    pub fn input_column(&self, j: usize) -> Vec<f64> {
        self.inputs.column(j).iter().copied().collect()
    }

    /// One output channel as a contiguous vector.
    pub fn output_column(&self, m: usize) -> Vec<f64> {
        self.outputs.column(m).iter().copied().collect()
    }

    /// Copies the rows `range.start..range.end` into a new dataset whose `t0`
    /// is shifted so timestamps are preserved.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Result<Self, DataError> {
        if range.end > self.rows() || range.start >= range.end {
            return Err(DataError::Shape {
                reason: format!(
                    "row range {}..{} out of bounds for {} rows",
                    range.start,
                    range.end,
                    self.rows()
                ),
            });
        }
        let n = range.end - range.start;
        Ok(Self {
            sample_period: self.sample_period,
            t0: self.time(range.start),
            input_names: self.input_names.clone(),
            output_names: self.output_names.clone(),
            inputs: self.inputs.rows(range.start, n).into_owned(),
            outputs: self.outputs.rows(range.start, n).into_owned(),
        })
    }

    /// Replaces both value matrices, keeping names and timing. Used by the
    /// scaler, which transforms values but never reshapes.
    pub(crate) fn with_values(
        &self,
        inputs: DMatrix<f64>,
        outputs: DMatrix<f64>,
    ) -> Result<Self, DataError> {
        Self::new(
            self.sample_period,
            self.t0,
            self.input_names.clone(),
            self.output_names.clone(),
            inputs,
            outputs,
        )
    }
}
