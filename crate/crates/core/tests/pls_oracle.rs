use densitylens::pls::{fit_simpls, jackknife_pvalues, select_components, PlsModel};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn standardize_columns(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    out
}

fn standardize(y: &Array1<f64>) -> Array1<f64> {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    y.mapv(|v| (v - mean) / sd)
}

fn normal_equations(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
    let xm = DMatrix::from_row_slice(x.nrows(), x.ncols(), x.as_slice().unwrap());
    let yv = DVector::from_column_slice(y.as_slice().unwrap());
    let xtx = xm.transpose() * &xm;
    let xty = xm.transpose() * yv;
    xtx.cholesky()
        .expect("positive definite")
        .solve(&xty)
        .iter()
        .copied()
        .collect()
}

#[test]
fn full_component_simpls_matches_least_squares() {
    for seed in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = standardize_columns(&normal_matrix(&mut rng, 50, 6));
        let beta = Array1::from_shape_fn(6, |_| StandardNormal.sample(&mut rng));
        let noise = Array1::from_shape_fn(50, |_| 0.5 * gauss(&mut rng));
        let y = standardize(&(x.dot(&beta) + noise));
        let fit = fit_simpls(&x, &y, 6).unwrap();
        let ols = normal_equations(&x, &y);
        for (a, b) in fit.coefficients.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn one_component_coefficients_follow_covariance_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = standardize_columns(&normal_matrix(&mut rng, 40, 4));
    let y = standardize(&Array1::from_shape_fn(40, |i| x[[i, 0]] - 0.5 * x[[i, 2]]));
    let fit = fit_simpls(&x, &y, 1).unwrap();
    let w = x.t().dot(&y);
    let ratio = fit.coefficients[0] / w[0];
    for j in 0..4 {
        assert!((fit.coefficients[j] - ratio * w[j]).abs() < 1e-10);
    }
}

#[test]
fn rank_two_latent_data_selects_two_components() {
    let mut hits = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let t = normal_matrix(&mut rng, 100, 2);
        let angles: Vec<f64> = (0..8)
            .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
            .collect();
        let p = Array2::from_shape_fn((2, 8), |(r, j)| {
            if r == 0 {
                angles[j].cos()
            } else {
                angles[j].sin()
            }
        });
        let x = t.dot(&p) + normal_matrix(&mut rng, 100, 8).mapv(|v| 0.1 * v);
        let c = Array1::from(vec![1.0, -0.8]);
        let y = t.dot(&c) + Array1::from_shape_fn(100, |_| 0.1 * gauss(&mut rng));
        let sel = select_components(&x, &y, 8, 10, seed).unwrap();
        if sel.n_components == 2 {
            hits += 1;
        }
    }
    assert!(hits >= 40, "selected two components in {hits}/50 seeds");
}

#[test]
fn model_predictions_are_in_raw_units() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = normal_matrix(&mut rng, 30, 3).mapv(|v| 10.0 + 3.0 * v);
    let y = Array1::from_shape_fn(30, |i| 100.0 + 2.0 * x[[i, 0]] - x[[i, 1]]);
    let model = PlsModel::fit(&x, &y, 3).unwrap();
    let pred = model.predict_raw(&x).unwrap();
    for (p, t) in pred.iter().zip(&y) {
        assert!((p - t).abs() < 1e-8);
    }
}

#[test]
fn jackknife_flags_strong_predictor_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = standardize_columns(&normal_matrix(&mut rng, 120, 3));
    let y = standardize(&Array1::from_shape_fn(120, |i| {
        2.0 * x[[i, 0]] + gauss(&mut rng)
    }));
    let table = jackknife_pvalues(&x, &y, 3, 10, 7).unwrap();
    assert_eq!(table.perturbed.len(), 10);
    assert!(table.rows[0].p_value < 1e-6);
    assert!(table.rows[0].lower_2_5 > 0.0);
    assert!(table
        .rows
        .iter()
        .all(|r| r.lower_2_5 <= r.coefficient && r.coefficient <= r.upper_97_5));
}
