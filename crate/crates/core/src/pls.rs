//! Single-response SIMPLS partial least squares regression.
//!
//! [`fit_simpls`] works in standardized space: inputs must be centered
//! (Z-scored in practice) and the fitted model has no intercept.
//! [`PlsModel`] wraps it for raw data by carrying the standardization.
//! Cross-validation always refits the standardization on the training
//! folds and applies it to the held-out fold.
//!
//! Jack-knife inference refits the model with each fold left out and uses
//! `s_j^2 = ((G-1)/G) * sum_g (b_j^(-g) - b_j)^2`, `t_j = b_j / s_j`, with
//! two-sided p-values and bounds from Student's t on `G-1` degrees of freedom.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::stats::{zscore_vector, Standardizer, StatsError};

/// Relative size below which the remaining covariance counts as exhausted.
const RANK_TOL: f64 = 1e-10;
/// Jack-knife standard errors below this are treated as zero.
pub const DEGENERATE_SE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PlsError {
    #[error("x has {x_rows} rows but y has {y_len}")]
    ShapeMismatch { x_rows: usize, y_len: usize },
    #[error("expected {expected} predictors, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{requested} components requested, at most {max} allowed for {rows}x{cols} data")]
    TooManyComponents {
        requested: usize,
        max: usize,
        rows: usize,
        cols: usize,
    },
    #[error("{requested} components requested but the data support only {available}")]
    RankDeficient { requested: usize, available: usize },
    #[error("column {column} is not centered (mean {mean})")]
    NotCentered { column: usize, mean: f64 },
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{rows} rows cannot be split into {folds} folds")]
    FewerRowsThanFolds { rows: usize, folds: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("no component count is feasible on every fold")]
    NoFeasibleComponents,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// SIMPLS decomposition `X = T P^T + E`, `y = U q^T + f`, `y = X K + theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsFit {
    pub n_components: usize,
    /// `T`, n x A, orthonormal columns.
    pub x_scores: Array2<f64>,
    /// `U`, n x A.
    pub y_scores: Array2<f64>,
    /// `P`, p x A.
    pub x_loadings: Array2<f64>,
    /// `q`, one loading per component.
    pub y_loadings: Array1<f64>,
    /// `R`, p x A; `T = X R`.
    pub weights: Array2<f64>,
    /// `K = R q`, in standardized predictor space. There is no intercept.
    pub coefficients: Array1<f64>,
    /// Percent of total X variance captured by each component.
    pub variance_explained_x: Vec<f64>,
    /// Percent of y variance captured by each component.
    pub variance_explained_y: Vec<f64>,
}

impl PlsFit {
    pub fn n_predictors(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficients of the model truncated to the first `k` components.
    pub fn coefficients_for(&self, k: usize) -> Array1<f64> {
        let k = k.min(self.n_components);
        self.weights
            .slice(s![.., ..k])
            .dot(&self.y_loadings.slice(s![..k]))
    }

    /// `x_new K` for rows already standardized with the training statistics.
    pub fn predict(&self, x_new: &Array2<f64>) -> Result<Array1<f64>, PlsError> {
        if x_new.ncols() != self.n_predictors() {
            return Err(PlsError::DimensionMismatch {
                expected: self.n_predictors(),
                got: x_new.ncols(),
            });
        }
        Ok(x_new.dot(&self.coefficients))
    }
}

fn check_shapes(x: &Array2<f64>, y: &Array1<f64>) -> Result<(), PlsError> {
    if x.nrows() != y.len() {
        return Err(PlsError::ShapeMismatch {
            x_rows: x.nrows(),
            y_len: y.len(),
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(PlsError::NonFinite);
    }
    Ok(())
}

fn check_centered(x: &Array2<f64>, y: &Array1<f64>) -> Result<(), PlsError> {
    let n = x.nrows() as f64;
    let cols = x
        .axis_iter(Axis(1))
        .chain(std::iter::once(y.view()))
        .enumerate();
    for (column, col) in cols {
        let mean = col.sum() / n;
        let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if mean.abs() > 1e-8 * scale {
            return Err(PlsError::NotCentered { column, mean });
        }
    }
    Ok(())
}

/// Core SIMPLS loop. Extracts up to `max_components`, stopping early when
/// the cross-product vector or the score norm vanishes. Returns the fit and
/// whether it stopped early.
fn simpls(x: &Array2<f64>, y: &Array1<f64>, max_components: usize) -> (PlsFit, bool) {
    let (n, p) = x.dim();
    let a_max = max_components;
    let mut t_mat = Array2::<f64>::zeros((n, a_max));
    let mut u_mat = Array2::<f64>::zeros((n, a_max));
    let mut p_mat = Array2::<f64>::zeros((p, a_max));
    let mut r_mat = Array2::<f64>::zeros((p, a_max));
    let mut v_mat = Array2::<f64>::zeros((p, a_max));
    let mut q = Array1::<f64>::zeros(a_max);

    let x_ss: f64 = x.iter().map(|v| v * v).sum();
    let y_ss: f64 = y.iter().map(|v| v * v).sum();
    let x_norm = x_ss.sqrt();
    // cross-product vector X^T y, deflated against the loadings basis
    let mut cross = x.t().dot(y);
    let cross0 = cross.dot(&cross).sqrt();

    let mut extracted = 0;
    for a in 0..a_max {
        let cross_norm = cross.dot(&cross).sqrt();
        if cross0 == 0.0 || cross_norm <= RANK_TOL * cross0 {
            break;
        }
        // with a single response the dominant direction of cross cross^T is cross
        let mut r = &cross / cross_norm;
        let mut t = x.dot(&r);
        let t_norm = t.dot(&t).sqrt();
        if t_norm <= RANK_TOL * x_norm {
            break;
        }
        t /= t_norm;
        r /= t_norm;
        let p_vec = x.t().dot(&t);
        let q_a = y.dot(&t);
        let mut u = y * q_a;
        let mut v = p_vec.clone();
        if a > 0 {
            let v_prev = v_mat.slice(s![.., ..a]);
            v = &v - &v_prev.dot(&v_prev.t().dot(&p_vec));
            let t_prev = t_mat.slice(s![.., ..a]);
            u = &u - &t_prev.dot(&t_prev.t().dot(&u));
        }
        let v_norm = v.dot(&v).sqrt();
        if v_norm <= RANK_TOL * p_vec.dot(&p_vec).sqrt().max(f64::MIN_POSITIVE) {
            break;
        }
        v /= v_norm;
        cross = &cross - &(&v * v.dot(&cross));

        r_mat.column_mut(a).assign(&r);
        t_mat.column_mut(a).assign(&t);
        p_mat.column_mut(a).assign(&p_vec);
        u_mat.column_mut(a).assign(&u);
        v_mat.column_mut(a).assign(&v);
        q[a] = q_a;
        extracted += 1;
    }

    let k = extracted;
    let weights = r_mat.slice(s![.., ..k]).to_owned();
    let y_loadings = q.slice(s![..k]).to_owned();
    let coefficients = weights.dot(&y_loadings);
    let x_loadings = p_mat.slice(s![.., ..k]).to_owned();
    let variance_explained_x = x_loadings
        .axis_iter(Axis(1))
        .map(|col| 100.0 * col.dot(&col) / x_ss)
        .collect();
    let variance_explained_y = y_loadings
        .iter()
        .map(|qa| {
            if y_ss > 0.0 {
                100.0 * qa * qa / y_ss
            } else {
                0.0
            }
        })
        .collect();
    (
        PlsFit {
            n_components: k,
            x_scores: t_mat.slice(s![.., ..k]).to_owned(),
            y_scores: u_mat.slice(s![.., ..k]).to_owned(),
            x_loadings,
            y_loadings,
            weights,
            coefficients,
            variance_explained_x,
            variance_explained_y,
        },
        k < a_max,
    )
}

/// Largest component count allowed for an `rows x cols` problem.
pub fn max_components(rows: usize, cols: usize) -> usize {
    rows.saturating_sub(1).min(cols)
}

/// Fit SIMPLS with exactly `n_components` components on centered data.
pub fn fit_simpls(
    x: &Array2<f64>,
    y: &Array1<f64>,
    n_components: usize,
) -> Result<PlsFit, PlsError> {
    check_shapes(x, y)?;
    let max = max_components(x.nrows(), x.ncols());
    if n_components == 0 || n_components > max {
        return Err(PlsError::TooManyComponents {
            requested: n_components,
            max,
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    check_centered(x, y)?;
    let (fit, short) = simpls(x, y, n_components);
    if short {
        return Err(PlsError::RankDeficient {
            requested: n_components,
            available: fit.n_components,
        });
    }
    Ok(fit)
}

/// SIMPLS fit together with the standardization of raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub x_scaler: Standardizer,
    pub y_mean: f64,
    pub y_sd: f64,
    pub fit: PlsFit,
}

impl PlsModel {
    /// Z-score `x` and `y`, then fit `n_components`.
    pub fn fit(x: &Array2<f64>, y: &Array1<f64>, n_components: usize) -> Result<Self, PlsError> {
        check_shapes(x, y)?;
        let x_scaler = Standardizer::fit(x)?;
        let (yz, y_mean, y_sd) = zscore_vector(y)?;
        let fit = fit_simpls(&x_scaler.transform(x), &yz, n_components)?;
        Ok(PlsModel {
            x_scaler,
            y_mean,
            y_sd,
            fit,
        })
    }

    /// Fit up to `max_components`, keeping as many as the data support.
    fn fit_upto(x: &Array2<f64>, y: &Array1<f64>, max_components: usize) -> Result<Self, PlsError> {
        let x_scaler = Standardizer::fit(x)?;
        let (yz, y_mean, y_sd) = zscore_vector(y)?;
        let (fit, _) = simpls(&x_scaler.transform(x), &yz, max_components);
        Ok(PlsModel {
            x_scaler,
            y_mean,
            y_sd,
            fit,
        })
    }

    /// Predictions in raw y units using the first `k` components.
    pub fn predict_raw_with(&self, x: &Array2<f64>, k: usize) -> Result<Array1<f64>, PlsError> {
        if x.ncols() != self.fit.n_predictors() {
            return Err(PlsError::DimensionMismatch {
                expected: self.fit.n_predictors(),
                got: x.ncols(),
            });
        }
        let z = self.x_scaler.transform(x);
        Ok(z.dot(&self.fit.coefficients_for(k)) * self.y_sd + self.y_mean)
    }

    pub fn predict_raw(&self, x: &Array2<f64>) -> Result<Array1<f64>, PlsError> {
        self.predict_raw_with(x, self.fit.n_components)
    }
}

/// Seeded partition of `0..n` into `folds` groups of near-equal size. Each
/// group is sorted.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, PlsError> {
    if folds < 2 {
        return Err(PlsError::TooFewFolds(folds));
    }
    if n < folds {
        return Err(PlsError::FewerRowsThanFolds { rows: n, folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, idx) in order.into_iter().enumerate() {
        out[pos % folds].push(idx);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Cross-validated predictions for every component count `1..=max_ncomp`.
/// Column `k-1` holds the `k`-component predictions; entries are `NaN` where
/// a training fold cannot support `k` components.
pub fn cv_predictions(
    x: &Array2<f64>,
    y: &Array1<f64>,
    max_ncomp: usize,
    folds: &[Vec<usize>],
) -> Result<Array2<f64>, PlsError> {
    check_shapes(x, y)?;
    let n = x.nrows();
    let per_fold: Vec<Result<(Vec<usize>, Array2<f64>), PlsError>> = folds
        .par_iter()
        .map(|test| {
            let train = complement(n, test);
            let x_tr = x.select(Axis(0), &train);
            let y_tr = y.select(Axis(0), &train);
            let cap = max_ncomp.min(max_components(train.len(), x.ncols()));
            let model = PlsModel::fit_upto(&x_tr, &y_tr, cap)?;
            let x_te = x.select(Axis(0), test);
            let mut pred = Array2::from_elem((test.len(), max_ncomp), f64::NAN);
            for k in 1..=model.fit.n_components {
                pred.column_mut(k - 1)
                    .assign(&model.predict_raw_with(&x_te, k)?);
            }
            Ok((test.clone(), pred))
        })
        .collect();
    let mut out = Array2::from_elem((n, max_ncomp), f64::NAN);
    for item in per_fold {
        let (test, pred) = item?;
        for (row, &i) in test.iter().enumerate() {
            out.row_mut(i).assign(&pred.row(row));
        }
    }
    Ok(out)
}

/// Result of RMSEP-based component selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSelection {
    pub n_components: usize,
    /// RMSEP for 1..=max components; `None` where some fold could not fit.
    pub rmsep: Vec<Option<f64>>,
}

fn rmsep_curve(y: &Array1<f64>, pred: &Array2<f64>) -> Vec<Option<f64>> {
    pred.axis_iter(Axis(1))
        .map(|col| {
            if col.iter().any(|v| v.is_nan()) {
                return None;
            }
            let mse = col
                .iter()
                .zip(y.iter())
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>()
                / y.len() as f64;
            Some(mse.sqrt())
        })
        .collect()
}

/// Pick the component count with the smallest cross-validated RMSEP (raw y
/// units) over `1..=max_ncomp`; ties go to fewer components.
pub fn select_components(
    x: &Array2<f64>,
    y: &Array1<f64>,
    max_ncomp: usize,
    folds: usize,
    seed: u64,
) -> Result<ComponentSelection, PlsError> {
    check_shapes(x, y)?;
    let plan = kfold_indices(x.nrows(), folds, seed)?;
    let pred = cv_predictions(x, y, max_ncomp.max(1), &plan)?;
    let rmsep = rmsep_curve(y, &pred);
    let best = rmsep
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k + 1, v)))
        .fold(None, |acc: Option<(usize, f64)>, (k, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((k, v)),
        })
        .ok_or(PlsError::NoFeasibleComponents)?;
    Ok(ComponentSelection {
        n_components: best.0,
        rmsep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub n_components: usize,
    pub r2_full: f64,
    pub r2_cv: f64,
    pub rmse_full: f64,
    pub rmse_cv: f64,
    pub rmsep_per_ncomp: Vec<Option<f64>>,
    pub variance_explained_x: Vec<f64>,
    pub variance_explained_y: Vec<f64>,
}

/// Full-data and cross-validated R^2 / RMSE of `model` (raw y units).
pub fn goodness_of_fit(
    model: &PlsModel,
    x: &Array2<f64>,
    y: &Array1<f64>,
    folds: usize,
    seed: u64,
) -> Result<FitStats, PlsError> {
    check_shapes(x, y)?;
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let fitted = model.predict_raw(x)?;
    let sse: f64 = fitted.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();

    let k = model.fit.n_components;
    let plan = kfold_indices(x.nrows(), folds, seed)?;
    let cv = cv_predictions(x, y, k, &plan)?;
    let rmsep_per_ncomp = rmsep_curve(y, &cv);
    let press: f64 = cv
        .column(k - 1)
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(FitStats {
        n_components: k,
        r2_full: 1.0 - sse / sst,
        r2_cv: 1.0 - press / sst,
        rmse_full: (sse / n).sqrt(),
        rmse_cv: (press / n).sqrt(),
        rmsep_per_ncomp,
        variance_explained_x: model.fit.variance_explained_x.clone(),
        variance_explained_y: model.fit.variance_explained_y.clone(),
    })
}

/// One predictor's jack-knife summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub coefficient: f64,
    pub std_err: f64,
    pub t_value: f64,
    pub p_value: f64,
    /// `b - t(0.975, G-1) * s`.
    pub lower_2_5: f64,
    /// `b + t(0.975, G-1) * s`.
    pub upper_97_5: f64,
    /// Set when the jack-knife standard error is numerically zero.
    pub degenerate_variance: bool,
}

impl CoefficientRow {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub n_components: usize,
    pub folds: usize,
    pub rows: Vec<CoefficientRow>,
    /// Coefficients refit with each fold left out, one vector per fold.
    pub perturbed: Vec<Vec<f64>>,
}

/// Codes: `***` < 0.001 <= `**` < 0.01 <= `*` < 0.05 <= `.` < 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

fn center(x: &Array2<f64>, y: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean().expect("non-empty");
    (x - &means, y - y_mean)
}

/// Jack-knife coefficient inference for a standardized problem. Each
/// leave-fold-out refit re-centers its training rows.
pub fn jackknife_pvalues(
    x: &Array2<f64>,
    y: &Array1<f64>,
    n_components: usize,
    folds: usize,
    seed: u64,
) -> Result<CoefficientTable, PlsError> {
    check_shapes(x, y)?;
    let full = fit_simpls(x, y, n_components)?;
    let plan = kfold_indices(x.nrows(), folds, seed)?;
    let n = x.nrows();
    let perturbed: Vec<Array1<f64>> = plan
        .par_iter()
        .map(|test| {
            let train = complement(n, test);
            let (xc, yc) = center(&x.select(Axis(0), &train), &y.select(Axis(0), &train));
            fit_simpls(&xc, &yc, n_components).map(|f| f.coefficients)
        })
        .collect::<Result<_, _>>()?;

    let g = plan.len() as f64;
    let dof = g - 1.0;
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof >= 1");
    let t_crit = dist.inverse_cdf(0.975);
    let rows = full
        .coefficients
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let ss: f64 = perturbed.iter().map(|bg| (bg[j] - b).powi(2)).sum();
            let se = ((g - 1.0) / g * ss).sqrt();
            let degenerate = se < DEGENERATE_SE;
            let (t_value, p_value) = if degenerate {
                if b.abs() <= DEGENERATE_SE {
                    (0.0, 1.0)
                } else {
                    (f64::INFINITY.copysign(b), 0.0)
                }
            } else {
                let t = b / se;
                (t, (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0))
            };
            CoefficientRow {
                coefficient: b,
                std_err: se,
                t_value,
                p_value,
                lower_2_5: b - t_crit * se,
                upper_97_5: b + t_crit * se,
                degenerate_variance: degenerate,
            }
        })
        .collect();
    Ok(CoefficientTable {
        n_components,
        folds: plan.len(),
        rows,
        perturbed: perturbed.into_iter().map(|b| b.to_vec()).collect(),
    })
}
