use ctxgat_core::scoring::residual_scores;
use ctxgat_core::training::{load_checkpoint, save_checkpoint};

use crate::common::{ensure, fail, small_run, Verdict};

pub fn run() -> Verdict {
    let small = small_run()?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&small.ckpt, &path).map_err(fail)?;
    let loaded = load_checkpoint(&path).map_err(fail)?;

    let mut n_values = 0;
    for ((name, a), (other, b)) in small.ckpt.model.params().iter().zip(loaded.model.params().iter()) {
        ensure!(name == other, "tensor order changed: {name} vs {other}");
        ensure!(a.shape() == b.shape(), "{name}: shape changed");
        ensure!(
            a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            "{name}: values changed"
        );
        n_values += a.len();
    }
    ensure!(loaded == small.ckpt, "checkpoint metadata changed across the round trip");

    let before = residual_scores(&small.ckpt, &small.test, 1.0).map_err(fail)?;
    let after = residual_scores(&loaded, &small.test, 1.0).map_err(fail)?;
    ensure!(
        before.scores.iter().zip(&after.scores).all(|(a, b)| a.to_bits() == b.to_bits()),
        "scores changed across the round trip"
    );

    let bytes = std::fs::read(&path).map_err(fail)?;
    let mut corrupt = bytes.clone();
    let payload_byte = corrupt.len() - 4 - 17;
    corrupt[payload_byte] ^= 0x40;
    std::fs::write(&path, &corrupt).map_err(fail)?;
    let err = match load_checkpoint(&path) {
        Ok(_) => return Err("flipped payload bit went unnoticed".into()),
        Err(e) => e.to_string(),
    };
    ensure!(err.to_lowercase().contains("crc"), "corruption reported as `{err}`");

    std::fs::write(&path, &bytes[..bytes.len() - 100]).map_err(fail)?;
    ensure!(load_checkpoint(&path).is_err(), "truncated file loaded");

    Ok(format!(
        "{n_values} parameters bit-identical after save/load, {} scores identical; flipped payload bit rejected ({err}); truncation rejected",
        before.scores.len()
    ))
}
