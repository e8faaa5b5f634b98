use ctxgat_core::synth::{generate_synthetic, AnomalyKind};
use ctxgat_core::SynthConfig;

#[test]
fn default_config_hits_target_prevalence() {
    for seed in 0..4 {
        let cfg = SynthConfig { seed, ..Default::default() };
        let out = generate_synthetic(&cfg).unwrap();
        let labels = out.frame.labels().unwrap();
        let rate = labels.iter().map(|&v| v as f64).sum::<f64>() / labels.len() as f64;
        assert!((0.008..=0.012).contains(&rate), "seed {seed}: prevalence {rate}");
        let (lo, hi) = cfg.events_per_kpi;
        for (i, inj) in out.injections.iter().enumerate() {
            assert!((lo..=hi).contains(&inj.len()), "seed {seed} kpi {i}: {} events", inj.len());
            for e in inj {
                let (a, b) = e.kind.length_range();
                assert!((a..=b).contains(&(e.end - e.start + 1)));
            }
        }
    }
}

#[test]
fn values_differ_from_clean_only_inside_injections() {
    let out = generate_synthetic(&SynthConfig {
        n_kpis: 4,
        length: 6000,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let labels = out.frame.labels().unwrap();
    let values = out.frame.values();
    for ((t, i), &v) in values.indexed_iter() {
        assert!(v.is_finite());
        if labels[[t, i]] == 0 {
            assert_eq!(v, out.clean[[t, i]], "t {t} kpi {i}");
        }
    }
    for inj in out.injections.iter().flatten() {
        assert!(inj.kind != AnomalyKind::Dropout || inj.magnitude == 0.0);
    }
}
