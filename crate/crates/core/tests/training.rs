use ctxgat_core::datastore::{ContextColumns, ContextSchema, Normalizer, WindowSample, WindowSpec};
use ctxgat_core::pipeline::windows_f32;
use ctxgat_core::synth::generate_synthetic;
use ctxgat_core::training::{joint_loss, joint_loss_grad, train, Checkpoint};
use ctxgat_core::{CtxGat, Error, ModelConfig, SynthConfig, TrainConfig, TrainHistory};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-3.0..3.0))
}

fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<bool> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_bool(0.8))
}

#[test]
fn joint_loss_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..200 {
        let (w, h, f) = (rng.random_range(1..12), rng.random_range(1..4), rng.random_range(1..6));
        let (fc, y) = (random(&mut rng, h, f), random(&mut rng, h, f));
        let (rc, x) = (random(&mut rng, w, f), random(&mut rng, w, f));
        let (my, mx) = (random_mask(&mut rng, h, f), random_mask(&mut rng, w, f));

        let term = |p: &Array2<f64>, t: &Array2<f64>, m: &Array2<bool>| {
            let (rows, cols) = p.dim();
            let mut n = 0.0;
            let mut sum = 0.0;
            for r in 0..rows {
                for c in 0..cols {
                    if m[[r, c]] {
                        n += 1.0;
                        sum += (p[[r, c]] - t[[r, c]]).powi(2);
                    }
                }
            }
            let mut g = Array2::zeros((rows, cols));
            for r in 0..rows {
                for c in 0..cols {
                    if m[[r, c]] {
                        g[[r, c]] = 2.0 * (p[[r, c]] - t[[r, c]]) / n;
                    }
                }
            }
            if n == 0.0 { (0.0, g) } else { (sum / n, g) }
        };
        let (lf, gf) = term(&fc, &y, &my);
        let (lr, gr) = term(&rc, &x, &mx);

        let got = joint_loss_grad(fc.view(), rc.view(), y.view(), x.view(), Some(my.view()), Some(mx.view())).unwrap();
        let value = joint_loss(fc.view(), rc.view(), y.view(), x.view(), Some(my.view()), Some(mx.view())).unwrap();
        assert!((got.loss - (lf + lr)).abs() <= 1e-10, "case {case}");
        assert!((value - (lf + lr)).abs() <= 1e-10, "case {case}");
        let worst = (&got.d_forecast - &gf)
            .iter()
            .chain((&got.d_reconstruction - &gr).iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 1e-10, "case {case}: gradient off by {worst}");
    }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        n_kpis: 3,
        window: 12,
        horizon: 2,
        channels: 4,
        hidden: 8,
        kernel_size: 3,
        leaky_slope: 0.2,
        context: ContextSchema::default(),
        context_enabled: false,
    }
}

fn windows(seed: u64, length: usize) -> Vec<WindowSample<f32>> {
    let data = generate_synthetic(&SynthConfig {
        n_kpis: 3,
        length,
        seed,
        ..Default::default()
    })
    .unwrap();
    let norm = Normalizer::fit(&data.frame).unwrap().apply(&data.frame).unwrap();
    windows_f32(&norm, &ContextColumns::empty(length), WindowSpec::new(12, 2, 3).unwrap()).unwrap()
}

fn train_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let train_w = windows(1, 600);
    let config = TrainConfig {
        learning_rate: 0.0,
        ..train_config()
    };
    let out = train(&train_w, &[], &small_model(), &config).unwrap();
    let init = CtxGat::<f32>::init(small_model(), config.seed).unwrap();
    assert_eq!(out.model.params(), init.params());
    assert_eq!(out.history.epochs.len(), 3);
}

#[test]
fn stops_after_patience_epochs_without_improvement() {
    let (train_w, val_w) = (windows(1, 600), windows(2, 300));
    // with lr = 0 the validation loss never strictly improves
    let config = TrainConfig {
        learning_rate: 0.0,
        epochs: 50,
        patience: 3,
        ..train_config()
    };
    let h = train(&train_w, &val_w, &small_model(), &config).unwrap().history;
    assert!(h.stopped_early);
    assert_eq!(h.epochs.len(), 3);
    assert_eq!(h.best_epoch, 0);
}

#[test]
fn best_validation_epoch_is_kept() {
    let (train_w, val_w) = (windows(1, 600), windows(2, 300));
    let config = TrainConfig {
        learning_rate: 5e-3,
        epochs: 6,
        ..train_config()
    };
    let out = train(&train_w, &val_w, &small_model(), &config).unwrap();
    let h = &out.history;
    let best = h
        .epochs
        .iter()
        .map(|e| e.val_loss.unwrap())
        .fold(h.initial_val_loss.unwrap(), f64::min);
    let kept = ctxgat_core::training::dataset_loss(&out.model, &val_w).unwrap();
    assert!((kept - best).abs() <= 1e-9 * best.max(1.0), "kept {kept}, best {best}");
}

#[test]
fn non_finite_loss_aborts() {
    let mut train_w = windows(1, 600);
    train_w[5].input[[0, 0]] = f32::NAN;
    train_w[5].target[[0, 0]] = f32::NAN;
    let err = train(&train_w, &[], &small_model(), &train_config()).err().expect("must fail");
    assert!(matches!(err, Error::Diverged(_)), "{err}");
}

fn checkpoint() -> Checkpoint {
    let data = generate_synthetic(&SynthConfig {
        n_kpis: 3,
        length: 200,
        ..Default::default()
    })
    .unwrap();
    let model = CtxGat::init(small_model(), 0).unwrap();
    let kpis = data.frame.kpi_names().to_vec();
    Checkpoint::new(model, kpis, Normalizer::fit(&data.frame).unwrap(), TrainHistory::default(), 0)
}

#[test]
fn checkpoint_version_mismatch_is_rejected() {
    let mut ckpt = checkpoint();
    assert!(Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).is_ok());
    ckpt.version += 1;
    let err = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).err().unwrap();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn checkpoint_missing_tensor_is_rejected() {
    let mut ckpt = checkpoint();
    let name = ckpt.model.params().names().next().unwrap().to_string();
    ckpt.model.params_mut().remove(&name);
    let err = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).err().unwrap();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    assert!(err.to_string().contains(&name), "{err}");
}
