use kdlab_core::bootstrap::{predictive_variance, run_bootstrap, BootstrapConfig, BootstrapVariant};
use kdlab_core::distillation::{Student, StudentTrainer};
use kdlab_core::models::{init_mlp, LinearModel, Regressor};
use kdlab_core::numkit::{gaussian_matrix, mean, Matrix, RngStream};
use kdlab_core::uncertainty::eval_mse;

struct Problem {
    x: Matrix,
    y: Vec<f64>,
    x_test: Matrix,
    y_test: Vec<f64>,
}

fn problem(seed: u64, n: usize, d: usize, sigma: f64) -> Problem {
    let mut rng = RngStream::new(seed, 0);
    let theta: Vec<f64> = (0..d).map(|j| 1.0 - 0.3 * j as f64).collect();
    let mut draw = |rows| {
        let x = gaussian_matrix(&mut rng, rows, d, 0.0, 1.0).unwrap();
        let y = x.matvec(&theta).unwrap().into_iter().map(|v| v + sigma * rng.standard_normal()).collect();
        (x, y)
    };
    let (x, y) = draw(n);
    let (x_test, y_test) = draw(500);
    Problem { x, y, x_test, y_test }
}

fn config(variant: BootstrapVariant, m: usize, replicates: usize) -> BootstrapConfig {
    BootstrapConfig {
        variant,
        m,
        replicates,
        beta_grid: None,
    }
}

#[test]
fn full_size_resampling_matches_least_squares_error() {
    let p = problem(1, 200, 5, 1.0);
    let cfg = config(BootstrapVariant::GroundTruth, 200, 300);
    let out = run_bootstrap(&p.x, &p.y, &p.x_test, &cfg, &StudentTrainer::Linear, None, 2).unwrap();
    let preds = out.ensemble.predictions.unwrap();
    let ensemble_mse = mean(&preds.row_iter().map(|r| eval_mse(r, &p.y_test).unwrap()).collect::<Vec<_>>());
    let ols = LinearModel::fit(&p.x, &p.y).unwrap();
    let ols_mse = eval_mse(&ols.predict(&p.x_test).unwrap(), &p.y_test).unwrap();
    assert!((ensemble_mse / ols_mse - 1.0).abs() < 0.15, "{ensemble_mse} vs {ols_mse}");
}

#[test]
fn variance_decays_as_one_over_m() {
    let n = 1000;
    let p = problem(3, n, 5, 1.0);
    let (mut log_m, mut log_v) = (Vec::new(), Vec::new());
    for step in 1..=10 {
        let m = n * step / 10;
        let cfg = config(BootstrapVariant::GroundTruth, m, 1000);
        let out = run_bootstrap(&p.x, &p.y, &p.x_test, &cfg, &StudentTrainer::Linear, None, 4).unwrap();
        let v = predictive_variance(&out.ensemble, &p.x_test).unwrap();
        log_m.push((m as f64).ln());
        log_v.push(mean(&v).ln());
    }
    let (mx, my) = (mean(&log_m), mean(&log_v));
    let sxy: f64 = log_m.iter().zip(&log_v).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = log_m.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    assert!((-1.15..=-0.85).contains(&slope), "slope {slope}");
}

#[test]
fn least_squares_teacher_collapses_the_ensemble() {
    let p = problem(5, 120, 4, 0.5);
    for m in [20, 60, 120] {
        let cfg = config(BootstrapVariant::TeacherModel, m, 200);
        let out = run_bootstrap(&p.x, &p.y, &p.x_test, &cfg, &StudentTrainer::Linear, None, 6).unwrap();
        let theta = &out.fitted_teacher.as_ref().unwrap().theta;
        let deviation = out
            .ensemble
            .students
            .iter()
            .flat_map(|s| {
                let Student::Linear(l) = s else { panic!("linear trainer") };
                l.theta.iter().zip(theta).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        assert!(deviation < 1e-10, "m={m}: {deviation}");
        let v = predictive_variance(&out.ensemble, &p.x_test).unwrap();
        assert!(v.iter().all(|&v| v < 1e-18), "m={m}");
    }
}

#[test]
fn nonlinear_teacher_leaves_linear_students_spread() {
    let p = problem(7, 150, 3, 0.5);
    let teacher = init_mlp(&[3, 16, 1], &mut RngStream::new(8, 0)).unwrap();
    let cfg = config(BootstrapVariant::TeacherModel, 75, 100);
    let out = run_bootstrap(&p.x, &p.y, &p.x_test, &cfg, &StudentTrainer::Linear, Some(&teacher), 9).unwrap();
    assert!(out.fitted_teacher.is_none());
    let v = predictive_variance(&out.ensemble, &p.x_test).unwrap();
    assert!(v.iter().all(|&v| v > 0.0));
}

#[test]
fn single_replicate_has_zero_variance() {
    let p = problem(10, 50, 2, 1.0);
    let cfg = config(BootstrapVariant::GroundTruth, 50, 1);
    let out = run_bootstrap(&p.x, &p.y, &p.x_test, &cfg, &StudentTrainer::Linear, None, 11).unwrap();
    assert_eq!(out.ensemble.len(), 1);
    assert!(predictive_variance(&out.ensemble, &p.x_test).unwrap().iter().all(|&v| v == 0.0));
}
