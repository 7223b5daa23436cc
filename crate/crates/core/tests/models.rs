use kdlab_core::models::{
    init_mlp, init_mlp_with, perturb_parameters, predict_labels, sample_sequences, sequence_log_prob,
    teacher_respond, train_logistic, train_mlp, train_sequence_student, Activation, CategoricalSequenceModel,
    Classifier, LinearModel, MlpLoss, MlpModel, Regressor, SequenceObjective, EOS,
};
use kdlab_core::numkit::{
    dot, finite_diff_grad, gaussian_matrix, max_abs_diff, mean, sample_variance, Matrix, RngStream,
};
use proptest::prelude::*;

#[test]
fn linear_prediction_is_a_dot_product() {
    let mut rng = RngStream::new(1, 0);
    let theta: Vec<f64> = (0..7).map(|_| rng.standard_normal()).collect();
    let x = gaussian_matrix(&mut rng, 30, 7, 0.0, 2.0).unwrap();
    let preds = LinearModel::new(theta.clone()).predict(&x).unwrap();
    for (i, p) in preds.iter().enumerate() {
        assert!((p - dot(x.row(i), &theta)).abs() < 1e-12);
    }
}

#[test]
fn teacher_noise_has_unit_spread_and_no_bias() {
    let teacher = LinearModel::new(vec![0.7, -1.2]);
    let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25]]).unwrap();
    let k = 10_000;
    let draws = teacher_respond(&teacher, &x, 1.0, k, &mut RngStream::new(2, 0)).unwrap();
    let f = teacher.predict(&x).unwrap();
    for (i, row) in draws.row_iter().enumerate() {
        let sd = sample_variance(row).sqrt();
        assert!((sd - 1.0).abs() < 0.02, "row {i} std {sd}");
        assert!((mean(row) - f[i]).abs() < 3.0 * sd / (k as f64).sqrt());
    }
}

#[test]
fn kaiming_variance() {
    let model = init_mlp(&[1000, 1000, 1], &mut RngStream::new(3, 0)).unwrap();
    let var = sample_variance(model.layer_weights[0].as_slice());
    assert!((var / (2.0 / 1000.0) - 1.0).abs() < 0.1, "variance {var}");
    assert!(model.layer_biases.iter().flatten().all(|&b| b == 0.0));
}

#[test]
fn multiplicative_perturbation_spread() {
    let ones = MlpModel::new(vec![Matrix::filled(100, 1000, 1.0)], vec![vec![0.5; 100]], Activation::Relu).unwrap();
    let noisy = perturb_parameters(&ones, 0.1, &mut RngStream::new(4, 0)).unwrap();
    let sd = sample_variance(noisy.layer_weights[0].as_slice()).sqrt();
    assert!((sd / 0.1 - 1.0).abs() < 0.05, "std {sd}");
    assert_eq!(noisy.layer_biases, ones.layer_biases);
}

#[test]
fn zero_perturbation_is_bit_exact() {
    let model = init_mlp(&[4, 8, 1], &mut RngStream::new(5, 0)).unwrap();
    let same = perturb_parameters(&model, 0.0, &mut RngStream::new(5, 1)).unwrap();
    let bits = |m: &MlpModel| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&same), bits(&model));
}

#[test]
fn mlp_fits_a_linear_target() {
    let mut rng = RngStream::new(6, 0);
    let x = gaussian_matrix(&mut rng, 200, 3, 0.0, 1.0).unwrap();
    let y = x.matvec(&[1.0, -2.0, 0.5]).unwrap();
    let init = init_mlp(&[3, 32, 1], &mut rng.child(1)).unwrap();
    let model = train_mlp(&init, &x, &y, 2000, 0.01).unwrap();
    let pred = model.predict(&x).unwrap();
    let mse = pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64;
    assert!(mse < 0.01 * sample_variance(&y), "train mse {mse}");
}

fn check_mlp_gradient(activation: Activation, seed: u64) {
    let mut rng = RngStream::new(seed, 0);
    let x = gaussian_matrix(&mut rng, 6, 3, 0.0, 1.0).unwrap();
    // Random biases as well as weights: with zero biases an all-inactive
    // hidden layer puts the next pre-activation exactly on the relu kink.
    let mut random_net = |sizes: &[usize]| {
        let mut m = init_mlp_with(sizes, activation, &mut rng.child(sizes.len() as u64)).unwrap();
        let params: Vec<f64> = (0..m.param_count()).map(|_| rng.standard_normal()).collect();
        m.set_params(&params).unwrap();
        m
    };
    let model = random_net(&[3, 5, 4, 2]);
    let one_out = random_net(&[3, 5, 1]);
    let targets: Vec<f64> = (0..6).map(|_| rng.standard_normal()).collect();
    let labels: Vec<usize> = (0..6).map(|_| rng.index(2)).collect();
    for (m, loss) in [(&one_out, MlpLoss::Mse(&targets)), (&model, MlpLoss::CrossEntropy(&labels))] {
        let (_, analytic) = m.loss_and_grad(&x, loss).unwrap();
        let numeric = finite_diff_grad(
            |p| {
                let mut probe = m.clone();
                probe.set_params(p).unwrap();
                probe.loss(&x, loss).unwrap()
            },
            &m.flatten(),
            1e-6,
        )
        .unwrap();
        let err = max_abs_diff(&analytic, &numeric);
        assert!(err < 1e-4, "{activation:?} seed {seed}: {err}");
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..10 {
        check_mlp_gradient(Activation::Tanh, seed);
        check_mlp_gradient(Activation::Relu, seed);
    }
}

fn blobs(seed: u64, n: usize) -> (Matrix, Vec<usize>) {
    let mut rng = RngStream::new(seed, 0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let center = if c == 0 { -3.0 } else { 3.0 };
        rows.push(vec![center + rng.standard_normal(), rng.standard_normal()]);
        labels.push(c);
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

#[test]
fn logistic_separates_blobs() {
    let (x, labels) = blobs(7, 400);
    let model = train_logistic(&x, &labels, 300, 0.05).unwrap();
    let pred = predict_labels(&model, &x).unwrap();
    let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    assert!(acc >= 0.99, "accuracy {acc}");
    let proba = model.predict_proba(&x).unwrap();
    for row in proba.row_iter() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn logistic_training_ignores_row_order() {
    let (x, labels) = blobs(8, 120);
    let order: Vec<usize> = (0..120).rev().collect();
    let shuffled_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let a = train_logistic(&x, &labels, 200, 0.05).unwrap();
    let b = train_logistic(&x.select_rows(&order), &shuffled_labels, 200, 0.05).unwrap();
    let diff = a.weights.sub(&b.weights).unwrap().frobenius_norm();
    assert!(diff < 1e-9, "weights differ by {diff}");
    assert!(max_abs_diff(&a.biases, &b.biases) < 1e-9);
}

#[test]
fn uniform_first_token_frequencies() {
    let model = CategoricalSequenceModel::uniform(4, 1, 3).unwrap();
    let n = 100_000;
    let samples = sample_sequences(&model, &[], 1.0, n, &mut RngStream::new(9, 0)).unwrap();
    let mut counts = [0usize; 4];
    for s in &samples {
        counts[s[0]] += 1;
        assert!(!s.is_empty() && s.len() <= 3);
        assert!(s[..s.len() - 1].iter().all(|&t| t != EOS));
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() < 0.02);
    }
}

/// Every sequence of length at most `max_len` that ends at its first EOS or
/// runs to `max_len`.
fn all_sequences(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut frontier = vec![Vec::new()];
    while let Some(prefix) = frontier.pop() {
        for tok in 0..vocab {
            let mut s: Vec<usize> = prefix.clone();
            s.push(tok);
            if tok == EOS || s.len() == max_len {
                out.push(s);
            } else {
                frontier.push(s);
            }
        }
    }
    out
}

#[test]
fn log_probabilities_normalize_by_brute_force() {
    let model = CategoricalSequenceModel::random(3, 1, 2, 2.0, &mut RngStream::new(10, 0)).unwrap();
    let seqs = all_sequences(3, 2);
    assert_eq!(seqs.len(), 1 + 2 * 3);
    let total: f64 = seqs.iter().map(|s| sequence_log_prob(&model, &[], s).unwrap().exp()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(model.enumerate(&[], 1.0).unwrap().len(), seqs.len());
}

#[test]
fn deterministic_teacher_is_learned_exactly() {
    // Sharp logits make the teacher effectively deterministic.
    let teacher = CategoricalSequenceModel::random(4, 1, 4, 25.0, &mut RngStream::new(11, 0)).unwrap();
    let init = CategoricalSequenceModel::uniform(4, 1, 4).unwrap();
    let prompts: Vec<Vec<usize>> = vec![vec![], vec![1], vec![2, 3], vec![3]];
    let samples: Vec<Vec<Vec<usize>>> = prompts
        .iter()
        .enumerate()
        .map(|(p, prompt)| sample_sequences(&teacher, prompt, 1.0, 1, &mut RngStream::new(12, p as u64)).unwrap())
        .collect();
    let student = train_sequence_student(&init, &prompts, &samples, 300, 0.1).unwrap();
    for (prompt, s) in prompts.iter().zip(&samples) {
        assert_eq!(teacher.greedy(prompt).unwrap(), s[0]);
        assert_eq!(student.greedy(prompt).unwrap(), s[0]);
    }
}

#[test]
fn uniform_teacher_is_matched_from_many_samples() {
    let teacher = CategoricalSequenceModel::uniform(3, 1, 1).unwrap();
    let init = CategoricalSequenceModel::random(3, 1, 1, 1.0, &mut RngStream::new(13, 0)).unwrap();
    let samples = vec![sample_sequences(&teacher, &[], 1.0, 1000, &mut RngStream::new(13, 1)).unwrap()];
    let student = train_sequence_student(&init, &[vec![]], &samples, 500, 0.1).unwrap();
    let p = student.next_token_distribution(&[], 1.0).unwrap();
    let tv = 0.5 * p.iter().map(|q| (q - 1.0 / 3.0).abs()).sum::<f64>();
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn sequence_objective_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = RngStream::new(14, seed);
        let model = CategoricalSequenceModel::random(3, 2, 3, 1.0, &mut rng).unwrap();
        let prompts = vec![vec![], vec![2]];
        let samples: Vec<Vec<Vec<usize>>> = prompts
            .iter()
            .map(|p| sample_sequences(&model, p, 1.3, 4, &mut rng).unwrap())
            .collect();
        let obj = SequenceObjective::multi_response(&model, &prompts, &samples).unwrap();
        let (_, analytic) = obj.loss_and_grad(&model).unwrap();
        let numeric = finite_diff_grad(
            |l| obj.loss(&model.with_logits(l.to_vec()).unwrap()).unwrap(),
            model.logits(),
            1e-6,
        )
        .unwrap();
        assert!(max_abs_diff(&analytic, &numeric) < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn next_token_distributions_are_valid(
        seed in any::<u64>(),
        vocab in 2usize..6,
        order in 0usize..3,
        scale in 0.0f64..20.0,
        temperature in 0.05f64..5.0,
        history in proptest::collection::vec(0usize..6, 0..4),
    ) {
        let model = CategoricalSequenceModel::random(vocab, order, 4, scale, &mut RngStream::new(seed, 0)).unwrap();
        let history: Vec<usize> = history.into_iter().map(|t| t % vocab).collect();
        let p = model.next_token_distribution(&history, temperature).unwrap();
        prop_assert!(p.iter().all(|&q| q >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_is_normalized(
        seed in any::<u64>(),
        vocab in 2usize..5,
        max_len in 1usize..4,
        temperature in 0.2f64..3.0,
    ) {
        let model = CategoricalSequenceModel::random(vocab, 1, max_len, 1.5, &mut RngStream::new(seed, 1)).unwrap();
        let total: f64 = model.enumerate(&[], temperature).unwrap().iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}
