use std::time::{Duration, Instant};

use ctxgat_core::training::gradcheck::tiny_config;
use ctxgat_core::training::{grad_check_with, GradTarget, Reference};

use crate::common::{ensure, fail, Verdict};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const BUDGET: Duration = Duration::from_secs(120);

pub fn run() -> Verdict {
    let start = Instant::now();
    let config = tiny_config();
    let mut worst = (0.0f64, String::new());
    let mut per_target = Vec::new();
    for target in GradTarget::ALL {
        let mut max = 0.0f64;
        for seed in 0..5 {
            let r = grad_check_with(target, &config, seed, EPS, Reference::DoubleDouble).map_err(fail)?;
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, format!("{target} seed {seed} {:?}", r.worst));
            }
            max = max.max(r.max_rel_error);
        }
        per_target.push(format!("{target} {max:.1e}"));
    }
    let elapsed = start.elapsed();

    // Same check with a plain f64 finite-difference reference, for the record.
    let mut worst_f64 = 0.0f64;
    for target in GradTarget::ALL {
        for seed in 0..5 {
            let r = grad_check_with(target, &config, seed, EPS, Reference::F64).map_err(fail)?;
            worst_f64 = worst_f64.max(r.max_rel_error);
        }
    }

    ensure!(worst.0 < TOL, "max relative error {:.3e} >= {TOL:e} at {}", worst.0, worst.1);
    ensure!(elapsed < BUDGET, "took {elapsed:?}, budget {BUDGET:?}");
    Ok(format!(
        "max relative error {:.2e} over 9 targets x 5 seeds (double-double reference; f64 reference {:.2e}); {}",
        worst.0,
        worst_f64,
        per_target.join(", ")
    ))
}
