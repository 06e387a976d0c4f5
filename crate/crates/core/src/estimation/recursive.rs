use nalgebra::{DMatrix, DVector};

use crate::armax::{ArmaxModel, ArmaxOrders, FitMeta, OutputCoeffs};
use crate::timeseries::{apply_scaler, fit_scaler, TimeSeriesDataset};

use super::batch::{FitConfig, FitReport, OutputFitReport, ResidualConvention};
use super::EstimationError;
use crate::armax::ar_stability;

/// State of one output channel's recursive least-squares estimator:
/// coefficient vector, inverse-covariance proxy `P`, and the residual lags
/// that stand in for the unobservable noise terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    theta: DVector<f64>,
    p: DMatrix<f64>,
    /// Residual lags, most recent first; length `nc`.
    residual_lags: Vec<f64>,
    updates: usize,
    sse: f64,
}

impl RlsState {
    /// Cold start: zero coefficients and `P = initial_covariance_scale * I`.
    pub fn cold(orders: &ArmaxOrders, n_inputs: usize, cfg: &FitConfig) -> Self {
        let p = orders.param_count(n_inputs);
        Self {
            theta: DVector::zeros(p),
            p: DMatrix::identity(p, p) * cfg.initial_covariance_scale,
            residual_lags: vec![0.0; orders.nc],
            updates: 0,
            sse: 0.0,
        }
    }

    /// Warm start from a fitted model's coefficients for output `m`. The
    /// covariance is reset to `initial_covariance_scale * I`; the residual
    /// lags start at zero.
    pub fn warm(model: &ArmaxModel, m: usize, cfg: &FitConfig) -> Self {
        let mut state = Self::cold(model.orders(), model.n_inputs(), cfg);
        state.theta = model.output_coeffs()[m].to_theta();
        state
    }

    /// Current coefficient estimate.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Current covariance proxy `P`; symmetric positive definite while the
    /// recursion is healthy, which makes it the thing to watch when
    /// diagnosing estimator wind-up or excitation starvation.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Updates consumed so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Accumulated squared a-priori residuals.
    pub fn sse(&self) -> f64 {
        self.sse
    }

    /// Residual lags, most recent first, as the next regressor will read
    /// them.
    pub fn residual_lags(&self) -> &[f64] {
        &self.residual_lags
    }

    /// One recursive least-squares step with exponential forgetting.
    ///
    /// Returns the a-priori residual `y - phi' theta_old`. The residual lag
    /// ring is advanced with the residual named by
    /// [`FitConfig::residual_convention`]. `P` is explicitly symmetrized each
    /// step so rounding cannot slowly skew it.
    pub fn update(
        &mut self,
        phi: &DVector<f64>,
        y: f64,
        cfg: &FitConfig,
    ) -> Result<f64, EstimationError> {
        if phi.len() != self.theta.len() {
            return Err(EstimationError::DimensionMismatch {
                reason: format!(
                    "regressor has {} entries, state expects {}",
                    phi.len(),
                    self.theta.len()
                ),
            });
        }
        let lambda = cfg.forgetting;
        let e_apriori = y - self.theta.dot(phi);
        let p_phi = &self.p * phi;
        let denom = lambda + phi.dot(&p_phi);
        let gain = &p_phi / denom;
        self.theta += &gain * e_apriori;
        self.p = (&self.p - &gain * p_phi.transpose()) / lambda;
        let sym = (&self.p + self.p.transpose()) * 0.5;
        self.p = sym;
        self.updates += 1;
        self.sse += e_apriori * e_apriori;

        if !e_apriori.is_finite()
            || self.theta.iter().any(|v| !v.is_finite())
            || self.p.iter().any(|v| !v.is_finite())
        {
            return Err(EstimationError::NonFiniteUpdate { update: self.updates });
        }

        if !self.residual_lags.is_empty() {
            let fed_back = match cfg.residual_convention {
                ResidualConvention::APriori => e_apriori,
                ResidualConvention::APosteriori => y - self.theta.dot(phi),
            };
            self.residual_lags.rotate_right(1);
            self.residual_lags[0] = fed_back;
        }
        Ok(e_apriori)
    }
}

/// Assembles a model from a bank of per-output recursive states, reusing the
/// structure, channel names, and scaler of `reference`.
pub fn finalize_rls(
    states: &[RlsState],
    reference: &ArmaxModel,
) -> Result<ArmaxModel, EstimationError> {
    if states.len() != reference.n_outputs() {
        return Err(EstimationError::DimensionMismatch {
            reason: format!(
                "{} estimator states for {} output channels",
                states.len(),
                reference.n_outputs()
            ),
        });
    }
    let orders = *reference.orders();
    let mut coeffs = Vec::with_capacity(states.len());
    for state in states {
        coeffs.push(OutputCoeffs::from_theta(state.theta(), &orders, reference.n_inputs())?);
    }
    let updates = states.iter().map(|s| s.updates()).max().unwrap_or(0);
    let mut meta = FitMeta::now(updates, updates);
    meta.version = reference.meta().version;
    let model = ArmaxModel::new(
        orders,
        coeffs,
        reference.input_names().to_vec(),
        reference.output_names().to_vec(),
        reference.scaler().clone(),
        meta,
    )?;
    Ok(model)
}

/// Streams a dataset through recursive least squares, one update per sample
/// after the seed window.
///
/// With `warm` given, estimation continues from that model's coefficients in
/// that model's *frozen* scaled frame, which is what recalibration-in-place
/// needs: the coefficient trajectory stays comparable across the update. A
/// cold start fits a fresh scaler on `data` like the batch path.
pub fn fit_recursive(
    data: &TimeSeriesDataset,
    orders: &ArmaxOrders,
    cfg: &FitConfig,
    warm: Option<&ArmaxModel>,
) -> Result<(ArmaxModel, FitReport), EstimationError> {
    cfg.validate()?;
    orders.validate(data.n_inputs())?;
    let lag = orders.max_lag();
    if data.rows() <= lag {
        return Err(EstimationError::InsufficientData { rows: data.rows(), needed: lag + 1 });
    }

    let scaler = match warm {
        Some(model) => {
            model.check_channels(data.input_names(), data.output_names())?;
            if model.orders() != orders {
                return Err(EstimationError::DimensionMismatch {
                    reason: format!(
                        "warm-start model has orders {:?}, fit requested {:?}",
                        model.orders(),
                        orders
                    ),
                });
            }
            model.scaler().clone()
        }
        None => fit_scaler(data, cfg.scaler_mode)?,
    };
    let scaled = apply_scaler(&scaler, data)?;
    let n_in = data.n_inputs();
    let n_out = data.n_outputs();
    let p = orders.param_count(n_in);

    let mut states: Vec<RlsState> = (0..n_out)
        .map(|m| match warm {
            Some(model) => RlsState::warm(model, m, cfg),
            None => RlsState::cold(orders, n_in, cfg),
        })
        .collect();

    let y = scaled.outputs();
    let u = scaled.inputs();
    let mut phi = DVector::zeros(p);
    for t in lag..data.rows() {
        for (m, state) in states.iter_mut().enumerate() {
            let mut col = 0;
            for i in 1..=orders.na {
                phi[col] = y[(t - i, m)];
                col += 1;
            }
            for j in 0..n_in {
                for i in 1..=orders.nb {
                    phi[col] = u[(t - orders.nk - i, j)];
                    col += 1;
                }
            }
            for i in 1..=orders.nc {
                phi[col] = state.residual_lags()[i - 1];
                col += 1;
            }
            state.update(&phi, y[(t, m)], cfg)?;
        }
    }

    let rows_used = data.rows() - lag;
    let per_output = states
        .iter()
        .map(|s| {
            let stability = ar_stability(&s.theta().as_slice()[0..orders.na]);
            OutputFitReport {
                iterations: s.updates(),
                converged: true,
                sse: s.sse(),
                residual_rms: (s.sse() / rows_used as f64).sqrt(),
                condition_number: None,
                stable: stability.stable,
                max_root_magnitude: stability.max_root_magnitude,
            }
        })
        .collect();

    let mut coeffs = Vec::with_capacity(n_out);
    for state in &states {
        coeffs.push(OutputCoeffs::from_theta(state.theta(), orders, n_in)?);
    }
    let mut meta = FitMeta::now(data.rows(), rows_used);
    if let Some(model) = warm {
        meta.version = model.meta().version;
        meta.seed = model.meta().seed;
        meta.config_hash = model.meta().config_hash.clone();
    }
    let model = ArmaxModel::new(
        *orders,
        coeffs,
        data.input_names().to_vec(),
        data.output_names().to_vec(),
        scaler,
        meta,
    )?;
    Ok((model, FitReport { per_output, rows_used }))
}
