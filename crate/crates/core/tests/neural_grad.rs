use ndarray::Array2;
use rand::Rng;
use walklayout::graph::{generate_er, Graph};
use walklayout::neural::{
    predict_with_timing, train_step, Adam, EmbedPipeline, GraphFamily, Mlp, MlpConfig, Mode, Sample,
};
use walklayout::seed;

fn tiny_config() -> MlpConfig {
    MlpConfig {
        input_dim: 3,
        hidden_width: 4,
        depth: 2,
        dropout: 0.3,
        ..MlpConfig::default()
    }
}

fn masks(rng: &mut seed::Rng, rows: usize, cfg: &MlpConfig) -> Vec<Array2<f64>> {
    let keep = 1.0 - cfg.dropout;
    (0..cfg.depth)
        .map(|_| {
            Array2::from_shape_fn((rows, cfg.hidden_width), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Loss `Σ c ⊙ f(x)` so the upstream gradient is `c`.
fn probe(model: &mut Mlp, x: &Array2<f64>, c: &Array2<f64>, m: &[Array2<f64>]) -> f64 {
    let y = model
        .forward_train_with_masks(x.view(), m.to_vec())
        .unwrap();
    (&y * c).sum()
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let mut rng = seed::rng(99);
    let h = 1e-6;
    let mut checked = 0;
    for case in 0..50u64 {
        let mut model = Mlp::new(cfg, case).unwrap();
        // Perturb biases and batch-norm parameters off their defaults.
        for s in model.trainable_mut() {
            for v in s.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let x = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
        let m = masks(&mut rng, 3, &cfg);
        probe(&mut model, &x, &c, &m);
        let grads = model.backward(c.view()).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

        for (block, want) in analytic.iter().enumerate() {
            for k in 0..want.len() {
                let bumped = |delta: f64| {
                    let mut copy = model.clone();
                    copy.trainable_mut()[block][k] += delta;
                    probe(&mut copy, &x, &c, &m)
                };
                let numeric = (bumped(h) - bumped(-h)) / (2.0 * h);
                let a = want[k];
                let scale = a.abs().max(numeric.abs());
                // Entries that are zero up to rounding carry no relative information.
                if scale > 1e-6 {
                    let rel = (a - numeric).abs() / scale;
                    assert!(
                        rel < 1e-4,
                        "case {case} block {block} entry {k}: {a} vs {numeric}"
                    );
                } else {
                    assert!((a - numeric).abs() < 1e-8);
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 50 * 60);
}

#[test]
fn adam_halves_loss_on_fixed_batch() {
    let pipeline = EmbedPipeline::default();
    let batch: Vec<Sample> = (0..4)
        .map(|k| {
            let g = generate_er(12, 0.4, 100 + k).unwrap();
            Sample::prepare(g, &pipeline, k).unwrap()
        })
        .collect();
    let refs: Vec<&Sample> = batch.iter().collect();
    let cfg = MlpConfig {
        depth: 2,
        dropout: 0.0,
        ..MlpConfig::default()
    };
    let mut model = Mlp::new(cfg, 7).unwrap();
    let mut adam = Adam::new(1e-3, 0.9, 0.999);
    let mut rng = seed::rng(1);
    let first = train_step(&mut model, &mut adam, &refs, &mut rng).unwrap();
    let mut last = first;
    for _ in 1..200 {
        last = train_step(&mut model, &mut adam, &refs, &mut rng).unwrap();
    }
    assert!(last <= 0.5 * first, "{first} -> {last}");
}

#[test]
fn eval_prediction_is_deterministic_and_timed() {
    let model = Mlp::new(MlpConfig::default(), 3).unwrap();
    let g = generate_er(30, 0.2, 5).unwrap();
    let pipeline = EmbedPipeline::default();
    let (a, ta) = predict_with_timing(&model, &g, &pipeline, 11).unwrap();
    let (b, _) = predict_with_timing(&model, &g, &pipeline, 11).unwrap();
    assert_eq!(a, b);
    assert!(ta.total_time >= ta.forward_time && ta.total_time >= ta.embed_time);

    let e = walklayout::methods::embed_graph(&g, &pipeline.walks, &pipeline.embed, 11).unwrap();
    let mut copy = model.clone();
    assert_eq!(copy.forward_embedding(&e, Mode::Eval).unwrap(), a);
}

#[test]
fn family_sampling_is_seeded() {
    let family = GraphFamily::mixed_nodes();
    let a: Graph = family.sample(4).unwrap();
    assert_eq!(a, family.sample(4).unwrap());
    assert!(family.sizes.contains(&a.node_count()));
}
