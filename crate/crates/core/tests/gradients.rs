use ctxgat_core::training::gradcheck::{check_gradient, tiny_config};
use ctxgat_core::training::{grad_check, GradTarget};
use ctxgat_core::ParamSet;
use ndarray::arr1;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn check_all_seeds(target: GradTarget) {
    let config = tiny_config();
    for seed in 0..5 {
        let report = grad_check(target, &config, seed, EPS).unwrap();
        assert!(
            report.max_rel_error < TOL,
            "{target} seed {seed}: max relative error {:.3e} at {:?}",
            report.max_rel_error,
            report.worst
        );
    }
}

#[test]
fn context_embedding() {
    check_all_seeds(GradTarget::ContextEmbedding);
}

#[test]
fn conditional_conv_block() {
    check_all_seeds(GradTarget::CondConv);
}

#[test]
fn feature_attention() {
    check_all_seeds(GradTarget::FeatureGat);
}

#[test]
fn temporal_attention() {
    check_all_seeds(GradTarget::TemporalGat);
}

#[test]
fn gru_encoder() {
    check_all_seeds(GradTarget::GruEncoder);
}

#[test]
fn encode_end_to_end() {
    check_all_seeds(GradTarget::Encode);
}

#[test]
fn forecast_head() {
    check_all_seeds(GradTarget::ForecastHead);
}

#[test]
fn reconstruction_head() {
    check_all_seeds(GradTarget::ReconstructHead);
}

#[test]
fn full_model_joint_loss() {
    check_all_seeds(GradTarget::FullModel);
}

#[test]
fn context_free_model() {
    let mut config = tiny_config();
    config.context_enabled = false;
    for target in [GradTarget::CondConv, GradTarget::FullModel] {
        let report = grad_check(target, &config, 11, EPS).unwrap();
        assert!(report.max_rel_error < TOL, "{target}: {report:?}");
    }
}

#[test]
fn skip_identity_when_kpis_equal_channels() {
    let mut config = tiny_config();
    config.n_kpis = config.channels;
    let report = grad_check(GradTarget::FullModel, &config, 2, EPS).unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn corrupted_gradient_is_caught() {
    let mut point = ParamSet::new();
    point.insert("w", arr1(&[0.7, -0.4, 1.3]).into_dyn());
    let f = |p: &ParamSet<f64>| p.vector("w").iter().map(|x| x.sin() * x).sum::<f64>();
    let mut grad = ParamSet::new();
    let exact: Vec<f64> = [0.7f64, -0.4, 1.3].iter().map(|x| x.cos() * x + x.sin()).collect();
    grad.insert("w", arr1(&exact).into_dyn());
    assert!(check_gradient::<f64, _>(&point, f, &grad, EPS).max_rel_error < TOL);
    grad.flat_get_mut(1).clone_from(&(exact[1] * 2.0));
    let report = check_gradient::<f64, _>(&point, f, &grad, EPS);
    assert!(report.max_rel_error > 1e-2);
    assert_eq!(report.worst, Some(("w".to_string(), 1)));
}

#[test]
fn references_agree_to_f64_noise() {
    use ctxgat_core::training::gradcheck::numeric_gradient;
    use ctxgat_core::DoubleDouble;
    use num_traits::Float;
    let mut point = ParamSet::new();
    point.insert("w", arr1(&[0.7, -0.4, 1.3, 2.2]).into_dyn());
    let f64_grad = numeric_gradient::<f64, _>(&point, |p| p.vector("w").mapv(|x| x.tanh() * x.exp()).sum(), EPS);
    let dd_grad = numeric_gradient::<DoubleDouble, _>(
        &point,
        |p| p.vector("w").iter().fold(DoubleDouble::new(0.0), |acc, &x| acc + x.tanh() * x.exp()),
        EPS,
    );
    for i in 0..4 {
        let x = point.flat_get(i);
        // d/dx tanh(x)·eˣ = eˣ·(1 − tanh²x + tanh x)
        let exact = x.exp() * (1.0 - x.tanh().powi(2) + x.tanh());
        assert!((dd_grad.flat_get(i) - exact).abs() < 1e-9 * exact.abs().max(1.0));
        assert!((f64_grad.flat_get(i) - dd_grad.flat_get(i)).abs() < 1e-8);
    }
}
