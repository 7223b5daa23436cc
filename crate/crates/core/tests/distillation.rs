use kdlab_core::distillation::{
    build_targets, distill_ensemble, distill_sequence_student_ensemble, Method, MlpRecipe, SequenceRecipe,
    StrategyConfig, StudentStats, StudentTrainer,
};
use kdlab_core::models::{init_mlp, teacher_respond, CategoricalSequenceModel, LinearModel};
use kdlab_core::numkit::{gaussian_matrix, mean, sample_variance, AdamConfig, Matrix, RngStream};
use kdlab_core::uncertainty::inter_student_variance;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn design(seed: u64, n: usize, d: usize) -> Matrix {
    gaussian_matrix(&mut RngStream::new(seed, 0), n, d, 0.0, 1.0).unwrap()
}

/// `xᵀ(XᵀX)⁻¹x` through nalgebra's LU inverse.
fn leverage(x: &Matrix, point: &[f64]) -> f64 {
    let xm = DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice());
    let g = (xm.transpose() * &xm).try_inverse().unwrap();
    let v = DVector::from_column_slice(point);
    (v.transpose() * g * &v)[(0, 0)]
}

fn run_pooled<T>(threads: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn inverse_variance_weights_for_known_variances() {
    // Row variance 1 (divisor k - 1) against student variance 3.
    let samples = Matrix::from_rows(&[vec![0.0, 2f64.sqrt()]]).unwrap();
    let stats = StudentStats {
        mean: vec![0.0],
        variance: vec![3.0],
    };
    let t = build_targets(&samples, Method::VarianceWeighted, Some(&stats)).unwrap();
    let (w_t, w_s) = t.weights.unwrap()[0];
    assert!((w_t - 0.75).abs() < 1e-12 && (w_s - 0.25).abs() < 1e-12);
}

#[test]
fn prediction_variance_at_the_mean_input() {
    let x = design(1, 100, 5);
    let x_bar: Vec<f64> = (0..5).map(|j| mean(&x.column(j))).collect();
    let x_test = Matrix::from_rows(std::slice::from_ref(&x_bar)).unwrap();
    let teacher = LinearModel::new(vec![1.0, -1.0, 0.5, 2.0, 0.0]);
    let strategy = StrategyConfig::new(Method::SingleResponse, 1, 10_000);
    let ens = distill_ensemble(&teacher, &x, &x_test, 1.0, &strategy, &StudentTrainer::Linear, 2).unwrap();
    let v = inter_student_variance(ens.predictions.as_ref().unwrap()).unwrap();
    let oracle = leverage(&x, &x_bar);
    assert!((v / oracle - 1.0).abs() < 0.05, "{v} vs {oracle}");
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let x = design(3, 40, 3);
    let x_test = design(4, 10, 3);
    let teacher = LinearModel::new(vec![0.3, 1.0, -2.0]);
    let mlp = StudentTrainer::Mlp(MlpRecipe {
        init: init_mlp(&[3, 8, 1], &mut RngStream::new(5, 0)).unwrap(),
        epochs: 30,
        adam: AdamConfig::with_lr(0.01),
        init_sigma: 0.1,
    });
    for trainer in [StudentTrainer::Linear, mlp] {
        for method in [Method::SingleResponse, Method::Averaging, Method::VarianceWeighted] {
            let strategy = StrategyConfig::new(method, 3, 12);
            let build = || distill_ensemble(&teacher, &x, &x_test, 0.7, &strategy, &trainer, 6).unwrap();
            let one = run_pooled(1, build);
            let four = run_pooled(4, build);
            let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(one.predictions.as_ref().unwrap()), bits(four.predictions.as_ref().unwrap()));
        }
    }

    let seq_teacher = CategoricalSequenceModel::random(4, 1, 3, 1.0, &mut RngStream::new(7, 0)).unwrap();
    let init = CategoricalSequenceModel::uniform(4, 1, 3).unwrap();
    let prompts = vec![vec![], vec![2]];
    let recipe = SequenceRecipe {
        epochs: 40,
        ..SequenceRecipe::default()
    };
    for method in [Method::SingleResponse, Method::Averaging, Method::VarianceWeighted] {
        let strategy = StrategyConfig::new(method, 4, 9);
        let build = || distill_sequence_student_ensemble(&seq_teacher, &prompts, &strategy, &init, &recipe, 8).unwrap();
        let a = run_pooled(1, build);
        let b = run_pooled(4, build);
        assert_eq!(a.students, b.students);
    }
}

#[test]
fn deterministic_teacher_yields_identical_students() {
    let teacher = CategoricalSequenceModel::random(4, 1, 4, 30.0, &mut RngStream::new(9, 0)).unwrap();
    let init = CategoricalSequenceModel::uniform(4, 1, 4).unwrap();
    let prompts = vec![vec![], vec![1], vec![3, 2]];
    let strategy = StrategyConfig::new(Method::SingleResponse, 1, 6);
    let recipe = SequenceRecipe {
        epochs: 300,
        adam: AdamConfig::with_lr(0.1),
        ..SequenceRecipe::default()
    };
    let ens = distill_sequence_student_ensemble(&teacher, &prompts, &strategy, &init, &recipe, 10).unwrap();
    for student in &ens.students {
        for p in &prompts {
            assert_eq!(student.greedy(p).unwrap(), teacher.greedy(p).unwrap());
        }
    }
}

fn tv_to_uniform(model: &CategoricalSequenceModel) -> f64 {
    let p = model.next_token_distribution(&[], 1.0).unwrap();
    let u = 1.0 / p.len() as f64;
    0.5 * p.iter().map(|q| (q - u).abs()).sum::<f64>()
}

#[test]
fn averaging_tracks_a_uniform_teacher_better_than_one_sample() {
    let teacher = CategoricalSequenceModel::uniform(3, 1, 1).unwrap();
    let init = CategoricalSequenceModel::uniform(3, 1, 1).unwrap();
    let recipe = SequenceRecipe {
        epochs: 200,
        adam: AdamConfig::with_lr(0.1),
        ..SequenceRecipe::default()
    };
    let prompts = vec![vec![]];
    let mut wins = 0;
    for seed in 0..20 {
        let single = StrategyConfig::new(Method::SingleResponse, 1, 1);
        let avg = StrategyConfig::new(Method::Averaging, 1000, 1);
        let s = distill_sequence_student_ensemble(&teacher, &prompts, &single, &init, &recipe, seed).unwrap();
        let a = distill_sequence_student_ensemble(&teacher, &prompts, &avg, &init, &recipe, seed).unwrap();
        if tv_to_uniform(&a.students[0]) < tv_to_uniform(&s.students[0]) {
            wins += 1;
        }
    }
    assert!(wins >= 16, "averaging closer in {wins} of 20 runs");
}

/// Targets for one input over `rebuilds` independent teacher draws.
fn rebuilt_targets(k: usize, method: Method, rebuilds: usize, sigma_s: f64, seed: u64) -> Vec<f64> {
    let teacher = LinearModel::new(vec![2.0]);
    let x = Matrix::from_rows(&[vec![1.5]]).unwrap();
    (0..rebuilds)
        .map(|r| {
            let mut rng = RngStream::new(seed, r as u64);
            let samples = teacher_respond(&teacher, &x, 1.0, k, &mut rng).unwrap();
            let stats = StudentStats {
                mean: vec![3.0 + sigma_s * rng.standard_normal()],
                variance: vec![sigma_s * sigma_s],
            };
            build_targets(&samples, method, Some(&stats)).unwrap().targets[0]
        })
        .collect()
}

#[test]
fn averaged_targets_are_unbiased_with_variance_over_k() {
    let rebuilds = 10_000;
    for k in [1, 4] {
        let t = rebuilt_targets(k, Method::Averaging, rebuilds, 1.0, 11);
        assert!((mean(&t) - 3.0).abs() < 3.0 / ((rebuilds * k) as f64).sqrt());
    }
    let v1 = sample_variance(&rebuilt_targets(1, Method::Averaging, rebuilds, 1.0, 12));
    let v4 = sample_variance(&rebuilt_targets(4, Method::Averaging, rebuilds, 1.0, 13));
    let ratio = v1 / v4;
    assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn variance_weighting_beats_either_source() {
    let rebuilds = 10_000;
    let (k, sigma_s) = (4, 0.6);
    let weighted = rebuilt_targets(k, Method::VarianceWeighted, rebuilds, sigma_s, 14);
    let v = sample_variance(&weighted);
    // Pure sources: teacher mean has variance 1/k, the student estimate σ_S².
    let best = (1.0 / k as f64).min(sigma_s * sigma_s);
    // Standard error of a Gaussian sample variance.
    let se = best * (2.0 / (rebuilds - 1) as f64).sqrt();
    assert!(v <= best + 3.0 * se, "weighted {v} vs best source {best}");
}

proptest! {
    #[test]
    fn weights_sum_to_one_and_fall_with_teacher_variance(
        spread in 0.01f64..10.0,
        factor in 1.01f64..5.0,
        var_s in 0.01f64..10.0,
    ) {
        let stats = StudentStats { mean: vec![0.0, 0.0], variance: vec![var_s, var_s] };
        // Rows with sample variances spread²/2 and (factor·spread)²/2.
        let samples = Matrix::from_rows(&[vec![0.0, spread], vec![0.0, factor * spread]]).unwrap();
        let w = build_targets(&samples, Method::VarianceWeighted, Some(&stats)).unwrap().weights.unwrap();
        for (w_t, w_s) in &w {
            prop_assert!((w_t + w_s - 1.0).abs() < 1e-12);
        }
        prop_assert!(w[1].0 < w[0].0);
    }
}
