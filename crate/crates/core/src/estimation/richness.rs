use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::timeseries::TimeSeriesDataset;

use super::EstimationError;

/// Normalized spectral entropy of a series, in `[0, 1]`.
///
/// The mean is removed, the periodogram is taken over the positive-frequency
/// bins, and the Shannon entropy of the normalized power distribution is
/// divided by its maximum (`ln` of the bin count). A pure tone scores near 0,
/// white noise near 1. Series too short to carry at least two positive
/// frequency bins (or with no power at all) score 0.
pub fn spectral_entropy(series: &[f64]) -> f64 {
    let n = series.len();
    let bins = n / 2;
    if bins < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buffer: Vec<Complex<f64>> =
        series.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);

    let power: Vec<f64> = buffer[1..=bins].iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return 0.0;
    }
    let mut entropy = 0.0;
    for p in power {
        let q = p / total;
        if q > 0.0 {
            entropy -= q * q.ln();
        }
    }
    entropy / (bins as f64).ln()
}

/// Mean spectral entropy of a dataset's output channels: how much of the
/// spectrum the plant's response actually visits.
pub fn richness_scores(datasets: &[TimeSeriesDataset]) -> Vec<f64> {
    datasets
        .iter()
        .map(|d| {
            let n_out = d.n_outputs();
            (0..n_out).map(|m| spectral_entropy(&d.output_column(m))).sum::<f64>()
                / n_out as f64
        })
        .collect()
}

/// Picks the most information-rich candidate training event: the dataset
/// whose outputs have the highest mean spectral entropy. Ties go to the
/// earliest candidate.
pub fn select_training_index(datasets: &[TimeSeriesDataset]) -> Result<usize, EstimationError> {
    if datasets.is_empty() {
        return Err(EstimationError::NoCandidates);
    }
    let scores = richness_scores(datasets);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}
