use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesDataset, SAMPLING_JITTER_TOL};

/// Maps CSV columns onto the roles the toolkit cares about: one time column,
/// the exogenous input channels, and the measured output channels. Any other
/// columns in the file are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRoles {
    /// Name of the timestamp column, `"t"` by default.
    #[serde(default = "default_time_column")]
    pub time: String,
    /// Input channel column names, in model order.
    pub inputs: Vec<String>,
    /// Output channel column names, in model order.
    pub outputs: Vec<String>,
}

fn default_time_column() -> String {
    "t".to_string()
}

impl ChannelRoles {
    /// Roles with the default `t` time column.
    pub fn new(inputs: &[&str], outputs: &[&str]) -> Self {
        Self {
            time: default_time_column(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// One sample of a monitored stream: inputs are always present, outputs may
/// be missing (sensor dropout, intentional open-loop segments).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub inputs: Vec<f64>,
    pub outputs: Option<Vec<f64>>,
}

/// A parsed monitoring stream: like a dataset, but rows may lack output
/// measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamData {
    pub sample_period: f64,
    pub t0: f64,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub samples: Vec<StreamSample>,
}

/// A row-level problem found while parsing a stream leniently. The row was
/// repaired (bad outputs dropped, bad inputs carried forward) rather than
/// aborting the whole ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamIssue {
    pub row: usize,
    pub column: String,
    pub action: StreamRepair,
}

/// How a lenient stream ingest repaired a malformed field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRepair {
    /// Output fields on the row were discarded; the row counts as unmeasured.
    OutputsDropped,
    /// The previous row's input value was reused.
    InputCarriedForward,
}

impl std::fmt::Display for StreamIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let action = match self.action {
            StreamRepair::OutputsDropped => "treated outputs as missing",
            StreamRepair::InputCarriedForward => "carried previous input forward",
        };
        write!(f, "row {}: bad value in `{}`; {}", self.row, self.column, action)
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_raw(path: &Path) -> Result<RawTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile { path: path.display().to_string() });
    }
    Ok(RawTable { header, rows })
}

fn column_index(header: &[String], name: &str) -> Result<usize, DataError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn { name: name.to_string() })
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<f64, DataError> {
    let raw = record.get(idx).unwrap_or("");
    let value: f64 = raw
        .parse()
        .map_err(|_| DataError::NonFiniteValue { column: name.to_string(), row })?;
    if !value.is_finite() {
        return Err(DataError::NonFiniteValue { column: name.to_string(), row });
    }
    Ok(value)
}

/// Infers the uniform sample period from the first/last timestamps and
/// verifies every interval against it.
fn infer_period(times: &[f64]) -> Result<f64, DataError> {
    if times.len() < 2 {
        return Err(DataError::TooFewRows { rows: times.len() });
    }
    let n = times.len();
    let period = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(period.is_finite() && period > 0.0) {
        return Err(DataError::NonUniformSampling {
            row: 1,
            found: times[1] - times[0],
            expected: period,
        });
    }
    for (i, pair) in times.windows(2).enumerate() {
        let dt = pair[1] - pair[0];
        if (dt - period).abs() > SAMPLING_JITTER_TOL * period {
            return Err(DataError::NonUniformSampling { row: i + 1, found: dt, expected: period });
        }
    }
    Ok(period)
}

/// Reads a fully measured dataset from CSV.
///
/// The file must carry a header row naming every column; lines starting with
/// `#` are ignored. Timestamps must lie on a uniform grid (0.1% jitter
/// tolerance) and every selected field must parse to a finite number.
pub fn ingest_csv(path: &Path, roles: &ChannelRoles) -> Result<TimeSeriesDataset, DataError> {
    let table = read_raw(path)?;
    let t_idx = column_index(&table.header, &roles.time)?;
    let input_idx: Vec<usize> = roles
        .inputs
        .iter()
        .map(|n| column_index(&table.header, n))
        .collect::<Result<_, _>>()?;
    let output_idx: Vec<usize> = roles
        .outputs
        .iter()
        .map(|n| column_index(&table.header, n))
        .collect::<Result<_, _>>()?;

    let n = table.rows.len();
    let mut times = Vec::with_capacity(n);
    let mut inputs = DMatrix::zeros(n, input_idx.len());
    let mut outputs = DMatrix::zeros(n, output_idx.len());
    for (r, record) in table.rows.iter().enumerate() {
        times.push(parse_field(record, t_idx, &roles.time, r)?);
        for (c, &idx) in input_idx.iter().enumerate() {
            inputs[(r, c)] = parse_field(record, idx, &roles.inputs[c], r)?;
        }
        for (c, &idx) in output_idx.iter().enumerate() {
            outputs[(r, c)] = parse_field(record, idx, &roles.outputs[c], r)?;
        }
    }
    let period = infer_period(&times)?;
    TimeSeriesDataset::new(
        period,
        times[0],
        roles.inputs.clone(),
        roles.outputs.clone(),
        inputs,
        outputs,
    )
}

/// Writes a dataset as CSV with 17 significant digits so that values
/// round-trip bit-identically through [`ingest_csv`].
///
/// `provenance`, when given, is embedded as a leading `#` comment line that
/// readers skip; it is the place for seeds and configuration hashes.
pub fn export_csv(
    data: &TimeSeriesDataset,
    path: &Path,
    provenance: Option<&str>,
) -> Result<(), DataError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    if let Some(note) = provenance {
        writeln!(w, "# {note}")?;
    }
    write!(w, "t")?;
    for name in data.input_names().iter().chain(data.output_names()) {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for r in 0..data.rows() {
        write!(w, "{}", fmt_float(data.time(r)))?;
        for c in 0..data.n_inputs() {
            write!(w, ",{}", fmt_float(data.inputs()[(r, c)]))?;
        }
        for c in 0..data.n_outputs() {
            write!(w, ",{}", fmt_float(data.outputs()[(r, c)]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Formats with 17 significant digits, enough to reproduce any `f64` exactly.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a monitoring stream: same layout as [`ingest_csv`], except that
/// output fields may be empty, which marks the row as unmeasured.
///
/// In strict mode (`lenient = false`) any malformed field aborts the ingest.
/// In lenient mode, rows with malformed or partially empty output fields are
/// kept but demoted to unmeasured, and malformed input fields reuse the
/// previous row's value; every repair is reported as a [`StreamIssue`].
pub fn ingest_stream_csv(
    path: &Path,
    roles: &ChannelRoles,
    lenient: bool,
) -> Result<(StreamData, Vec<StreamIssue>), DataError> {
    let table = read_raw(path)?;
    let t_idx = column_index(&table.header, &roles.time)?;
    let input_idx: Vec<usize> = roles
        .inputs
        .iter()
        .map(|n| column_index(&table.header, n))
        .collect::<Result<_, _>>()?;
    let output_idx: Vec<usize> = roles
        .outputs
        .iter()
        .map(|n| column_index(&table.header, n))
        .collect::<Result<_, _>>()?;

    let mut times = Vec::with_capacity(table.rows.len());
    let mut samples: Vec<StreamSample> = Vec::with_capacity(table.rows.len());
    let mut issues = Vec::new();
    for (r, record) in table.rows.iter().enumerate() {
        times.push(parse_field(record, t_idx, &roles.time, r)?);

        let mut inputs = Vec::with_capacity(input_idx.len());
        for (c, &idx) in input_idx.iter().enumerate() {
            match parse_field(record, idx, &roles.inputs[c], r) {
                Ok(v) => inputs.push(v),
                Err(err) if lenient && r > 0 => {
                    inputs.push(samples[r - 1].inputs[c]);
                    issues.push(StreamIssue {
                        row: r,
                        column: roles.inputs[c].clone(),
                        action: StreamRepair::InputCarriedForward,
                    });
                    let _ = err;
                }
                Err(err) => return Err(err),
            }
        }

        let empties = output_idx
            .iter()
            .filter(|&&idx| record.get(idx).unwrap_or("").is_empty())
            .count();
        let outputs = if empties == output_idx.len() {
            None
        } else {
            let mut row = Vec::with_capacity(output_idx.len());
            let mut dropped = false;
            for (c, &idx) in output_idx.iter().enumerate() {
                match parse_field(record, idx, &roles.outputs[c], r) {
                    Ok(v) => row.push(v),
                    Err(err) if lenient => {
                        issues.push(StreamIssue {
                            row: r,
                            column: roles.outputs[c].clone(),
                            action: StreamRepair::OutputsDropped,
                        });
                        dropped = true;
                        let _ = err;
                        break;
                    }
                    Err(err) => return Err(err),
                }
            }
            if dropped {
                None
            } else {
                Some(row)
            }
        };
        samples.push(StreamSample { inputs, outputs });
    }
    let period = infer_period(&times)?;
    Ok((
        StreamData {
            sample_period: period,
            t0: times[0],
            input_names: roles.inputs.clone(),
            output_names: roles.outputs.clone(),
            samples,
        },
        issues,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> ChannelRoles {
        ChannelRoles::new(&["u"], &["y"])
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn round_trip_preserves_values_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let data = TimeSeriesDataset::from_columns(
            0.001,
            0.0,
            &[("u", vec![0.1, -2.5e-7, std::f64::consts::PI])],
            &[("y", vec![1.0 / 3.0, 6.02e23, -0.0])],
        )
        .unwrap();
        let path = dir.path().join("round.csv");
        export_csv(&data, &path, Some("seed=7 config=deadbeef")).unwrap();
        let back = ingest_csv(&path, &roles()).unwrap();
        assert_eq!(back.output_column(0), data.output_column(0));
        assert_eq!(back.input_column(0), data.input_column(0));
        assert!((back.sample_period() - 0.001).abs() < 1e-12);
    }

    #[test]
    fn comment_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "c.csv", "# provenance here\nt,u,y\n0.0,1.0,2.0\n0.1,1.5,2.5\n");
        let data = ingest_csv(&path, &roles()).unwrap();
        assert_eq!(data.rows(), 2);
        assert_eq!(data.output_column(0), vec![2.0, 2.5]);
    }

    #[test]
    fn missing_column_is_reported_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "m.csv", "t,u\n0.0,1.0\n0.1,1.5\n");
        match ingest_csv(&path, &roles()) {
            Err(DataError::MissingColumn { name }) => assert_eq!(name, "y"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonuniform_timestamps_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path =
            write_file(&dir, "j.csv", "t,u,y\n0.0,1.0,2.0\n0.001,1.0,2.0\n0.003,1.0,2.0\n");
        assert!(matches!(
            ingest_csv(&path, &roles()),
            Err(DataError::NonUniformSampling { .. })
        ));
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "e.csv", "t,u,y\n");
        assert!(matches!(ingest_csv(&path, &roles()), Err(DataError::EmptyFile { .. })));
    }

    #[test]
    fn single_row_cannot_define_a_period() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "s.csv", "t,u,y\n0.0,1.0,2.0\n");
        assert!(matches!(ingest_csv(&path, &roles()), Err(DataError::TooFewRows { rows: 1 })));
    }

    #[test]
    fn garbage_field_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "g.csv", "t,u,y\n0.0,1.0,2.0\n0.1,oops,2.5\n");
        match ingest_csv(&path, &roles()) {
            Err(DataError::NonFiniteValue { column, row }) => {
                assert_eq!(column, "u");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stream_empty_outputs_mean_unmeasured() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "st.csv", "t,u,y\n0.0,1.0,2.0\n0.1,1.1,\n0.2,1.2,2.2\n");
        let (stream, issues) = ingest_stream_csv(&path, &roles(), false).unwrap();
        assert!(issues.is_empty());
        assert_eq!(stream.samples[0].outputs, Some(vec![2.0]));
        assert_eq!(stream.samples[1].outputs, None);
        assert_eq!(stream.samples[2].outputs, Some(vec![2.2]));
    }

    #[test]
    fn lenient_stream_repairs_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "l.csv",
            "t,u,y\n0.0,1.0,2.0\n0.1,bad,2.1\n0.2,1.2,nan\n0.3,1.3,2.3\n",
        );
        assert!(ingest_stream_csv(&path, &roles(), false).is_err());
        let (stream, issues) = ingest_stream_csv(&path, &roles(), true).unwrap();
        assert_eq!(issues.len(), 2);
        assert_eq!(stream.samples[1].inputs, vec![1.0]);
        assert_eq!(stream.samples[2].outputs, None);
        assert_eq!(issues[0].action, StreamRepair::InputCarriedForward);
        assert_eq!(issues[1].action, StreamRepair::OutputsDropped);
    }
}
