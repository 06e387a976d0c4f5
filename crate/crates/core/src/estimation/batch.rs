use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::armax::{
    ar_stability, one_step_scaled, ArmaxModel, ArmaxOrders, FitMeta, OutputCoeffs,
};
use crate::timeseries::{apply_scaler, fit_scaler, ScalerMode, TimeSeriesDataset};

use super::EstimationError;

/// Which residual the recursive estimator feeds back into its moving-average
/// lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualConvention {
    /// `y - phi' theta_old`: the innovation before the coefficient update.
    #[default]
    APriori,
    /// `y - phi' theta_new`: the error after the coefficient update.
    APosteriori,
}

/// Estimator settings shared by the batch and recursive fitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Upper bound on pseudo-linear refinement passes.
    pub max_els_iterations: usize,
    /// Relative coefficient-change threshold that declares convergence.
    pub els_tolerance: f64,
    /// Tikhonov term added to the normal equations.
    pub ridge: f64,
    /// Exponential forgetting factor of the recursive estimator.
    pub forgetting: f64,
    /// `P(0) = scale * I` for cold-started recursive estimation.
    pub initial_covariance_scale: f64,
    /// Channel normalization fitted before estimation.
    pub scaler_mode: ScalerMode,
    /// Residual fed back into moving-average lags during recursion.
    pub residual_convention: ResidualConvention,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_els_iterations: 20,
            els_tolerance: 1e-8,
            ridge: 1e-10,
            forgetting: 0.995,
            initial_covariance_scale: 1e3,
            scaler_mode: ScalerMode::ZScore,
            residual_convention: ResidualConvention::APriori,
        }
    }
}

impl FitConfig {
    /// Rejects settings outside their legal ranges.
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.max_els_iterations == 0 {
            return Err(EstimationError::InvalidConfig {
                reason: "max_els_iterations must be at least 1".into(),
            });
        }
        if !(self.els_tolerance > 0.0 && self.els_tolerance.is_finite()) {
            return Err(EstimationError::InvalidConfig {
                reason: format!("els_tolerance must be positive, got {}", self.els_tolerance),
            });
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(EstimationError::InvalidConfig {
                reason: format!("ridge must be non-negative, got {}", self.ridge),
            });
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(EstimationError::InvalidConfig {
                reason: format!("forgetting must lie in (0, 1], got {}", self.forgetting),
            });
        }
        if !(self.initial_covariance_scale > 0.0 && self.initial_covariance_scale.is_finite()) {
            return Err(EstimationError::InvalidConfig {
                reason: format!(
                    "initial_covariance_scale must be positive, got {}",
                    self.initial_covariance_scale
                ),
            });
        }
        Ok(())
    }
}

/// Per-output diagnostics of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFitReport {
    /// Linear solves performed (1 for a pure ARX structure).
    pub iterations: usize,
    /// Whether the final coefficient change fell below the tolerance.
    pub converged: bool,
    /// Sum of squared one-step residuals in the scaled frame.
    pub sse: f64,
    /// RMS of those residuals.
    pub residual_rms: f64,
    /// 2-norm condition number estimate of the final normal equations; absent
    /// for recursive fits, which never form them.
    pub condition_number: Option<f64>,
    /// AR polynomial root check of the fitted coefficients.
    pub stable: bool,
    pub max_root_magnitude: f64,
}

/// Fit summary across output channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub per_output: Vec<OutputFitReport>,
    /// Regression rows per output (total rows minus the seed window).
    pub rows_used: usize,
}

impl FitReport {
    /// True when every output channel converged.
    pub fn all_converged(&self) -> bool {
        self.per_output.iter().all(|r| r.converged)
    }

    /// True when every output channel's AR polynomial is stable.
    pub fn all_stable(&self) -> bool {
        self.per_output.iter().all(|r| r.stable)
    }
}

/// Builds the pseudo-linear regression for one output channel.
///
/// Row `k` corresponds to sample `t = max_lag + k` and contains
/// `[y(t-1)..y(t-na) | u_0(t-nk-1)..u_0(t-nk-nb) | u_1(...) | e(t-1)..e(t-nc)]`
/// with the target vector holding `y(t)`. All series must be in the scaled
/// frame and share the same length.
pub fn build_regressor(
    y: &[f64],
    inputs: &DMatrix<f64>,
    residuals: &[f64],
    orders: &ArmaxOrders,
) -> Result<(DMatrix<f64>, DVector<f64>), EstimationError> {
    let n = y.len();
    if inputs.nrows() != n || residuals.len() != n {
        return Err(EstimationError::DimensionMismatch {
            reason: format!(
                "series lengths disagree: y={n}, inputs={}, residuals={}",
                inputs.nrows(),
                residuals.len()
            ),
        });
    }
    let lag = orders.max_lag();
    if n <= lag {
        return Err(EstimationError::InsufficientData { rows: n, needed: lag + 1 });
    }
    let n_in = inputs.ncols();
    let p = orders.param_count(n_in);
    let rows = n - lag;
    let mut phi = DMatrix::zeros(rows, p);
    let mut rhs = DVector::zeros(rows);
    for k in 0..rows {
        let t = lag + k;
        let mut col = 0;
        for i in 1..=orders.na {
            phi[(k, col)] = y[t - i];
            col += 1;
        }
        for j in 0..n_in {
            for i in 1..=orders.nb {
                phi[(k, col)] = inputs[(t - orders.nk - i, j)];
                col += 1;
            }
        }
        for i in 1..=orders.nc {
            phi[(k, col)] = residuals[t - i];
            col += 1;
        }
        rhs[k] = y[t];
    }
    Ok((phi, rhs))
}

/// Solves `(phi' phi + ridge I) theta = phi' rhs`, reporting the condition
/// number of the unregularized normal matrix and refusing rank-deficient
/// problems.
fn solve_normal_equations(
    phi: &DMatrix<f64>,
    rhs: &DVector<f64>,
    ridge: f64,
    output: &str,
) -> Result<(DVector<f64>, f64), EstimationError> {
    let gram = phi.transpose() * phi;
    // A non-finite gram (diverged pseudo-regressors) would keep the SVD
    // sweep from ever terminating; treat it as rank-deficient up front.
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(EstimationError::SingularNormalEquations { output: output.to_string() });
    }
    let p = gram.nrows();
    let singular_values = gram
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| EstimationError::SingularNormalEquations { output: output.to_string() })?
        .singular_values;
    let sigma_max = singular_values.iter().copied().fold(0.0_f64, f64::max);
    let sigma_min = singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sigma_min > sigma_max * p as f64 * f64::EPSILON) {
        return Err(EstimationError::SingularNormalEquations { output: output.to_string() });
    }
    let condition = sigma_max / sigma_min;
    let mut regularized = gram;
    for i in 0..p {
        regularized[(i, i)] += ridge;
    }
    let chol = regularized.cholesky().ok_or_else(|| EstimationError::SingularNormalEquations {
        output: output.to_string(),
    })?;
    let theta = chol.solve(&(phi.transpose() * rhs));
    Ok((theta, condition))
}

/// Recomputes one-step residuals for the current coefficients by running the
/// prediction recursion forward: residual lags feed the moving-average terms
/// as they are produced, exactly as the predictor will see them later.
fn recompute_residuals(
    y: &[f64],
    inputs: &DMatrix<f64>,
    theta: &DVector<f64>,
    orders: &ArmaxOrders,
) -> Result<Vec<f64>, EstimationError> {
    let n = y.len();
    let n_in = inputs.ncols();
    let coeffs = OutputCoeffs::from_theta(theta, orders, n_in)?;
    let lag = orders.max_lag();
    let mut eps = vec![0.0; n];
    for t in lag..n {
        let yhat = one_step_scaled(
            &coeffs,
            orders.na,
            orders.nb,
            orders.nc,
            orders.nk,
            n_in,
            |i| y[t - i],
            |j, d| inputs[(t - d, j)],
            |i| eps[t - i],
        );
        eps[t] = y[t] - yhat;
    }
    Ok(eps)
}

struct SingleOutputFit {
    theta: DVector<f64>,
    report: OutputFitReport,
}

/// Extended-least-squares loop for one output channel.
///
/// Pass 1 is a plain ARX solve (moving-average columns excluded, their
/// regressors being unknown). Each later pass rebuilds the regressor with the
/// previous pass's recursively recomputed residuals and re-solves. Stops on
/// convergence of the coefficient vector; if the iteration cap is hit — or a
/// pass degenerates, by collapsing the residual columns or by producing a
/// non-invertible moving-average iterate — the lowest-SSE iterate is kept
/// and `converged` stays false.
fn fit_single_output(
    y: &[f64],
    inputs: &DMatrix<f64>,
    orders: &ArmaxOrders,
    cfg: &FitConfig,
    output_name: &str,
) -> Result<SingleOutputFit, EstimationError> {
    let n_in = inputs.ncols();
    let p = orders.param_count(n_in);
    let lag = orders.max_lag();
    let rows = y.len() - lag;

    let sse_of = |eps: &[f64]| eps[lag..].iter().map(|e| e * e).sum::<f64>();

    // Bootstrap: ARX on the AR + exogenous columns only.
    let arx_orders = ArmaxOrders::new(orders.na, orders.nb, 0, orders.nk);
    let zero = vec![0.0; y.len()];
    let (phi_full, rhs) = build_regressor(y, inputs, &zero, orders)?;
    let p_arx = arx_orders.param_count(n_in);
    let (theta_arx, mut condition) = if p_arx > 0 {
        let phi_arx = phi_full.columns(0, p_arx).into_owned();
        solve_normal_equations(&phi_arx, &rhs, cfg.ridge, output_name)?
    } else {
        (DVector::zeros(0), 1.0)
    };
    let mut theta = DVector::zeros(p);
    theta.rows_mut(0, p_arx).copy_from(&theta_arx);
    let mut iterations = 1usize;
    let mut eps = recompute_residuals(y, inputs, &theta, orders)?;

    if orders.nc == 0 {
        let sse = sse_of(&eps);
        let stability = ar_stability(&theta.as_slice()[0..orders.na]);
        return Ok(SingleOutputFit {
            theta,
            report: OutputFitReport {
                iterations,
                converged: true,
                sse,
                residual_rms: (sse / rows as f64).sqrt(),
                condition_number: Some(condition),
                stable: stability.stable,
                max_root_magnitude: stability.max_root_magnitude,
            },
        });
    }

    let mut converged = false;
    let mut best_theta = theta.clone();
    let mut best_sse = sse_of(&eps);
    let mut best_condition = condition;
    for _ in 0..cfg.max_els_iterations {
        let (phi, rhs) = build_regressor(y, inputs, &eps, orders)?;
        // A refinement pass can go degenerate even when the bootstrap was
        // healthy: a near-perfect fit collapses the residual columns to
        // zero, and a diverged iterate overflows them. Such a pass cannot
        // improve on the iterates already kept, so it ends the loop on the
        // best-iterate / no-convergence path instead of failing the fit.
        let (theta_new, cond_new) =
            match solve_normal_equations(&phi, &rhs, cfg.ridge, output_name) {
                Ok(solution) => solution,
                Err(EstimationError::SingularNormalEquations { .. }) => break,
                Err(other) => return Err(other),
            };
        iterations += 1;
        condition = cond_new;
        let change = (&theta_new - &theta).norm() / (1.0 + theta.norm());
        theta = theta_new;
        eps = recompute_residuals(y, inputs, &theta, orders)?;
        let sse = sse_of(&eps);
        if !sse.is_finite() {
            // The iterate's moving-average polynomial is not invertible: the
            // residual recursion diverged, and every later pass would feed
            // on the wreckage. Keep the best iterate seen so far.
            break;
        }
        if sse <= best_sse {
            best_sse = sse;
            best_theta = theta.clone();
            best_condition = condition;
        }
        if change < cfg.els_tolerance {
            converged = true;
            best_theta = theta.clone();
            best_sse = sse;
            best_condition = condition;
            break;
        }
    }
    let stability = ar_stability(&best_theta.as_slice()[0..orders.na]);
    Ok(SingleOutputFit {
        theta: best_theta,
        report: OutputFitReport {
            iterations,
            converged,
            sse: best_sse,
            residual_rms: (best_sse / rows as f64).sqrt(),
            condition_number: Some(best_condition),
            stable: stability.stable,
            max_root_magnitude: stability.max_root_magnitude,
        },
    })
}

/// Identifies one ARMAX model per output channel from a measured dataset.
///
/// The scaler is fitted on the training data itself; all estimation runs in
/// the scaled frame and the returned model carries the scaler so predictions
/// can move back to raw units.
pub fn fit_batch_els(
    data: &TimeSeriesDataset,
    orders: &ArmaxOrders,
    cfg: &FitConfig,
) -> Result<(ArmaxModel, FitReport), EstimationError> {
    cfg.validate()?;
    orders.validate(data.n_inputs())?;
    let lag = orders.max_lag();
    let p = orders.param_count(data.n_inputs());
    if data.rows() <= lag + p {
        return Err(EstimationError::InsufficientData {
            rows: data.rows(),
            needed: lag + p + 1,
        });
    }

    let scaler = fit_scaler(data, cfg.scaler_mode)?;
    let scaled = apply_scaler(&scaler, data)?;
    let inputs = scaled.inputs().clone();

    let mut coeffs = Vec::with_capacity(data.n_outputs());
    let mut per_output = Vec::with_capacity(data.n_outputs());
    for m in 0..data.n_outputs() {
        let y = scaled.output_column(m);
        let fit = fit_single_output(&y, &inputs, orders, cfg, &data.output_names()[m])?;
        coeffs.push(OutputCoeffs::from_theta(&fit.theta, orders, data.n_inputs())?);
        per_output.push(fit.report);
    }

    let iterations = per_output.iter().map(|r| r.iterations).max().unwrap_or(0);
    let model = ArmaxModel::new(
        *orders,
        coeffs,
        data.input_names().to_vec(),
        data.output_names().to_vec(),
        scaler,
        FitMeta::now(data.rows(), iterations),
    )?;
    let report = FitReport { per_output, rows_used: data.rows() - lag };
    Ok((model, report))
}
