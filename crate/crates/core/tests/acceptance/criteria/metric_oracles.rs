use std::time::{Duration, Instant};

use ctxgat_core::evaluation::{affiliation_metrics, merge_events, overlap_event_metrics, pointwise_metrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{ensure, fail, Verdict};

const BUDGET: Duration = Duration::from_secs(300);
const MC_SAMPLES: usize = 100_000;

fn prf(tp: usize, pred: usize, actual: usize) -> (f64, f64, f64) {
    let p = if pred == 0 { 0.0 } else { tp as f64 / pred as f64 };
    let r = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn random_bits(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<u8> {
    (0..len).map(|_| u8::from(rng.random_bool(rate))).collect()
}

fn pointwise_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..1000 {
        let len = rng.random_range(0..300);
        let (rp, rg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let pred = random_bits(rng, len, rp);
        let gt = random_bits(rng, len, rg);
        let mut tp = 0;
        for t in 0..len {
            if pred[t] == 1 && gt[t] == 1 {
                tp += 1;
            }
        }
        let npred = pred.iter().filter(|&&v| v == 1).count();
        let ngt = gt.iter().filter(|&&v| v == 1).count();
        let want = prf(tp, npred, ngt);
        let (got, conf) = pointwise_metrics(&pred, &gt).map_err(fail)?;
        ensure!(
            (got.precision, got.recall, got.f1) == want && conf.tp == tp && conf.fp == npred - tp && conf.fn_ == ngt - tp,
            "pointwise case {case}: {got:?} vs {want:?}"
        );
    }
    Ok(())
}

/// Runs of ones as `(start, end)` found by a direct scan.
fn runs(bits: &[u8]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < bits.len() {
        if bits[t] == 1 {
            let s = t;
            while t < bits.len() && bits[t] == 1 {
                t += 1;
            }
            out.push((s, t - 1));
        } else {
            t += 1;
        }
    }
    out
}

/// Counts by testing every timestamp of every event pair.
fn overlap_by_enumeration(pred: &[u8], gt: &[u8]) -> (f64, f64, f64) {
    let (pe, ge) = (runs(pred), runs(gt));
    let touches = |a: (usize, usize), b: (usize, usize)| (a.0..=a.1).any(|t| t >= b.0 && t <= b.1);
    let matched = pe.iter().filter(|&&p| ge.iter().any(|&g| touches(p, g))).count();
    let detected = ge.iter().filter(|&&g| pe.iter().any(|&p| touches(p, g))).count();
    let p = if pe.is_empty() { 0.0 } else { matched as f64 / pe.len() as f64 };
    let r = if ge.is_empty() { 0.0 } else { detected as f64 / ge.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn check_overlap(pred: &[u8], gt: &[u8]) -> Result<(), String> {
    let (got, _) = overlap_event_metrics(&merge_events(pred), &merge_events(gt));
    let want = overlap_by_enumeration(pred, gt);
    ensure!(
        (got.precision, got.recall, got.f1) == want,
        "overlap {pred:?} / {gt:?}: {got:?} vs {want:?}"
    );
    Ok(())
}

fn bits_of(code: u32, len: usize) -> Vec<u8> {
    (0..len).map(|t| ((code >> t) & 1) as u8).collect()
}

/// Every pair of streams up to length 8 (at most four events per side
/// fits automatically), then random pairs up to length 50 with at most four
/// events per side.
fn overlap_oracle(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut n = 0;
    for len in 1..=8usize {
        for a in 0..(1u32 << len) {
            for b in 0..(1u32 << len) {
                check_overlap(&bits_of(a, len), &bits_of(b, len))?;
                n += 1;
            }
        }
    }
    let random_events = |rng: &mut ChaCha8Rng, len: usize| {
        let k = rng.random_range(0..=4usize);
        let mut bits = vec![0u8; len];
        for _ in 0..k {
            let s = rng.random_range(0..len);
            let e = (s + rng.random_range(0..6)).min(len - 1);
            bits[s..=e].fill(1);
        }
        // overlapping draws can merge; splitting keeps at most four runs
        while runs(&bits).len() > 4 {
            let last = *runs(&bits).last().unwrap();
            bits[last.0..=last.1].fill(0);
        }
        bits
    };
    while n < 400_000 {
        let len = rng.random_range(9..=50);
        let (p, g) = (random_events(rng, len), random_events(rng, len));
        check_overlap(&p, &g)?;
        n += 1;
    }
    Ok(n)
}

/// Zone of every index: the event it is closest to, earlier on ties.
fn zones_by_scan(events: &[(usize, usize)], len: usize) -> Vec<usize> {
    (0..len)
        .map(|t| {
            let dist = |e: &(usize, usize)| if t < e.0 { e.0 - t } else { t.saturating_sub(e.1) };
            (0..events.len()).min_by_key(|&j| (dist(&events[j]), j)).unwrap()
        })
        .collect()
}

/// Affiliation precision and recall estimated with uniformly drawn zone
/// points.
fn affiliation_monte_carlo(pred: &[u8], gt: &[u8], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let events = runs(gt);
    let owner = zones_by_scan(&events, gt.len());
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for (j, &(es, ee)) in events.iter().enumerate() {
        let zone: Vec<usize> = (0..gt.len()).filter(|&t| owner[t] == j).collect();
        let samples: Vec<usize> = (0..MC_SAMPLES / events.len())
            .map(|_| zone[rng.random_range(0..zone.len())])
            .collect();
        let to_event = |t: usize| if t < es { es - t } else { t.saturating_sub(ee) };
        let predicted: Vec<usize> = zone.iter().copied().filter(|&t| pred[t] == 1).collect();
        if predicted.is_empty() {
            recalls.push(0.0);
            continue;
        }
        let share = |pred: &dyn Fn(usize) -> bool| samples.iter().filter(|&&s| pred(s)).count() as f64 / samples.len() as f64;
        let p = predicted
            .iter()
            .map(|&x| {
                let d = to_event(x);
                share(&|s| to_event(s) >= d)
            })
            .sum::<f64>()
            / predicted.len() as f64;
        let r = (es..=ee)
            .map(|y| {
                let d = predicted.iter().map(|&x| x.abs_diff(y)).min().unwrap();
                share(&|s| s.abs_diff(y) >= d)
            })
            .sum::<f64>()
            / (ee - es + 1) as f64;
        precisions.push(p);
        recalls.push(r);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    (mean(&precisions), mean(&recalls))
}

fn affiliation_oracle(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst = 0.0f64;
    let mut case = 0;
    while case < 20 {
        let len = rng.random_range(50..400);
        let gt = random_bits(rng, len, 0.02);
        if !gt.contains(&1) {
            continue;
        }
        let rate = rng.random_range(0.01..0.2);
        let pred = random_bits(rng, len, rate);
        let got = affiliation_metrics(&pred, &gt).map_err(fail)?;
        let (p, r) = affiliation_monte_carlo(&pred, &gt, rng);
        let err = (got.precision - p).abs().max((got.recall - r).abs());
        ensure!(err <= 0.01, "affiliation case {case}: closed form ({:.4}, {:.4}) vs sampled ({p:.4}, {r:.4})", got.precision, got.recall);
        worst = worst.max(err);
        case += 1;
    }
    Ok(worst)
}

pub fn run() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    pointwise_oracle(&mut rng)?;
    let n_overlap = overlap_oracle(&mut rng)?;
    let worst = affiliation_oracle(&mut rng)?;
    let elapsed = start.elapsed();
    ensure!(elapsed < BUDGET, "took {elapsed:?}, budget {BUDGET:?}");
    Ok(format!(
        "pointwise exact on 1000 cases; overlap exact on {n_overlap} instances; affiliation max |closed form - Monte Carlo| {worst:.4} on 20 cases"
    ))
}
