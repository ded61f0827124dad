use fedbox::learning::{
    compute_trusted_update, dirichlet_partition, evaluate, local_train, synth_dataset, Architecture, Dataset, Model,
    MomentumState, TrainParams,
};
use fedbox::rng::stream;
use fedbox::vector::cosine;
use rand::Rng;

/// Largest relative error between the analytic gradient and central
/// differences over `coords` random coordinates.
fn max_fd_error(model: &Model, data: &Dataset, batch: &[usize], coords: usize, seed: u64) -> f64 {
    let grad = model.gradient(data, batch).unwrap();
    let mut rng = stream(seed, "fd-coords", 0, 0);
    let eps = 1e-5;
    (0..coords)
        .map(|_| {
            let j = rng.random_range(0..model.dim());
            let mut plus = model.params.clone();
            let mut minus = model.params.clone();
            plus[j] += eps;
            minus[j] -= eps;
            let fp = model.with_params(plus).unwrap().loss(data, batch).unwrap();
            let fm = model.with_params(minus).unwrap().loss(data, batch).unwrap();
            let fd = (fp - fm) / (2.0 * eps);
            // exact-zero coordinates leave only difference roundoff (~1e-11)
            (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-6)
        })
        .max_by(f64::total_cmp)
        .unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = stream(5, "fd-data", 0, 0);
    let data = synth_dataset(4, 64, 6, 2.0, &mut rng).unwrap();
    let batch: Vec<usize> = (0..16).collect();
    for arch in [Architecture::Linear, Architecture::Mlp { hidden: 8 }] {
        for point in 0..10 {
            let model = Model::init(arch, 6, 4, &mut stream(point, "fd-model", 0, 0));
            let err = max_fd_error(&model, &data, &batch, 20, point);
            assert!(err < 1e-4, "{arch:?} point {point}: relative error {err}");
        }
    }
}

#[test]
fn well_separated_binary_task_is_learnable() {
    let mut rng = stream(8, "sep", 0, 0);
    let data = synth_dataset(2, 400, 5, 5.0, &mut rng).unwrap();
    let mut model = Model::zeros(Architecture::Linear, 5, 2);
    let params = TrainParams {
        eta: 0.5,
        beta: 1.0,
        local_steps: 200,
        batch_size: 32,
    };
    let (delta, _) = local_train(&model, &data, &params, MomentumState::new(1.0), &mut rng).unwrap();
    model = model.apply(&delta).unwrap();
    assert!(evaluate(&model, &data).unwrap() >= 0.99);
}

#[test]
fn no_signal_means_chance_accuracy() {
    let mut rng = stream(9, "chance", 0, 0);
    let train = synth_dataset(10, 2000, 5, 0.0, &mut rng).unwrap();
    let test = synth_dataset(10, 10_000, 5, 0.0, &mut rng).unwrap();
    let model = Model::init(Architecture::Linear, 5, 10, &mut rng);
    let params = TrainParams {
        eta: 0.1,
        beta: 1.0,
        local_steps: 100,
        batch_size: 32,
    };
    let (delta, _) = local_train(&model, &train, &params, MomentumState::new(1.0), &mut rng).unwrap();
    let acc = evaluate(&model.apply(&delta).unwrap(), &test).unwrap();
    assert!((acc - 0.1).abs() <= 0.05, "accuracy {acc}");
    let untrained = evaluate(&model, &test).unwrap();
    assert!((untrained - 0.1).abs() <= 0.03, "untrained accuracy {untrained}");
}

#[test]
fn large_concentration_gives_near_global_histograms() {
    let mut rng = stream(21, "dir", 0, 0);
    let data = synth_dataset(10, 20_000, 3, 1.0, &mut rng).unwrap();
    let n_clients = 10;
    let partition = dirichlet_partition(&data, n_clients, 1000.0, &mut rng).unwrap();
    let global = data.class_histogram();
    for shard in &partition.shards {
        let local = shard.class_histogram();
        for c in 0..10 {
            let expected = global[c] as f64 / n_clients as f64;
            let rel = (local[c] as f64 - expected).abs() / expected;
            assert!(rel <= 0.10, "class {c}: {} vs {expected}", local[c]);
        }
    }
    let mut all: Vec<usize> = partition.indices.concat();
    all.sort_unstable();
    assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
}

#[test]
fn small_concentration_skews_labels() {
    let mut rng = stream(22, "dir", 0, 0);
    let data = synth_dataset(10, 5000, 3, 1.0, &mut rng).unwrap();
    let partition = dirichlet_partition(&data, 20, 0.1, &mut rng).unwrap();
    let dominant: f64 = partition
        .shards
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| *s.class_histogram().iter().max().unwrap() as f64 / s.len() as f64)
        .sum::<f64>()
        / partition.shards.iter().filter(|s| !s.is_empty()).count() as f64;
    assert!(dominant > 0.4, "mean dominant-class share {dominant}");
}

#[test]
fn trusted_update_equals_client_update_on_same_shard() {
    let mut rng = stream(30, "tu", 0, 0);
    let shard = synth_dataset(3, 50, 4, 2.0, &mut rng).unwrap();
    let model = Model::init(Architecture::Linear, 4, 3, &mut rng);
    let params = TrainParams {
        eta: 0.05,
        beta: 1.0,
        local_steps: 3,
        batch_size: 8,
    };
    let (client, _) = local_train(
        &model,
        &shard,
        &params,
        MomentumState::new(1.0),
        &mut stream(1, "x", 0, 0),
    )
    .unwrap();
    let trusted = compute_trusted_update(&model, &shard, 0.05, 3, 8, &mut stream(1, "x", 0, 0)).unwrap();
    assert_eq!(client, trusted);
}

#[test]
fn trusted_update_aligns_with_benign_mean() {
    for seed in 1..=5 {
        let mut rng = stream(seed, "align", 0, 0);
        let data = synth_dataset(5, 3000, 8, 3.0, &mut rng).unwrap();
        let (root, rest) = data.split_at(100);
        let partition = dirichlet_partition(&rest, 20, 0.5, &mut rng).unwrap();
        let mut model = Model::init(Architecture::Linear, 8, 5, &mut rng);
        let params = TrainParams {
            eta: 0.1,
            beta: 1.0,
            local_steps: 2,
            batch_size: 16,
        };
        let updates: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let shards: Vec<_> = partition.shards.iter().filter(|s| !s.is_empty()).collect();
                let deltas: Vec<Vec<f64>> = shards
                    .iter()
                    .map(|s| {
                        local_train(&model, s, &params, MomentumState::new(1.0), &mut rng)
                            .unwrap()
                            .0
                            .into_values()
                    })
                    .collect();
                let mean: Vec<f64> = (0..model.dim())
                    .map(|j| deltas.iter().map(|d| d[j]).sum::<f64>() / deltas.len() as f64)
                    .collect();
                model = model.apply(&fedbox::UpdateVector::new(mean.clone()).unwrap()).unwrap();
                mean
            })
            .collect();
        let trusted = compute_trusted_update(&model, &root, 0.1, 2, 16, &mut rng).unwrap();
        let last = updates.last().unwrap();
        assert!(cosine(trusted.values(), last) > 0.0, "seed {seed}");
    }
}
