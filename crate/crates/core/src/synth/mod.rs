//! Seasonal multi-KPI series with injected, labelled anomalies.
//!
//! Each KPI is `a·sin(2πt/P_day + φ) + b·sin(2πt/P_week)` plus AR(1) noise.
//! Anomalies are spikes, level shifts and dropouts sized in multiples of the
//! clean series' standard deviation σ; labels mark exactly the injected
//! steps.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::evaluation::{merge_events, EventList};

/// Placement attempts per event before giving up.
const MAX_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Spike,
    LevelShift,
    Dropout,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [AnomalyKind::Spike, AnomalyKind::LevelShift, AnomalyKind::Dropout];

    /// Inclusive range of event lengths in steps.
    pub fn length_range(self) -> (usize, usize) {
        match self {
            AnomalyKind::Spike => (1, 3),
            AnomalyKind::LevelShift => (20, 100),
            AnomalyKind::Dropout => (5, 50),
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::Spike => "spike",
            AnomalyKind::LevelShift => "level_shift",
            AnomalyKind::Dropout => "dropout",
        })
    }
}

/// Share of the anomalous-step budget given to each anomaly kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyMix {
    pub spike: f64,
    pub level_shift: f64,
    pub dropout: f64,
}

impl Default for AnomalyMix {
    fn default() -> Self {
        Self {
            spike: 0.4,
            level_shift: 0.3,
            dropout: 0.3,
        }
    }
}

impl AnomalyMix {
    fn weight(&self, kind: AnomalyKind) -> f64 {
        match kind {
            AnomalyKind::Spike => self.spike,
            AnomalyKind::LevelShift => self.level_shift,
            AnomalyKind::Dropout => self.dropout,
        }
    }

    fn is_zero(&self) -> bool {
        AnomalyKind::ALL.iter().all(|&k| self.weight(k) == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_kpis: usize,
    pub length: usize,
    /// Seconds between samples.
    pub step: i64,
    /// Epoch seconds of the first sample.
    pub start: i64,
    pub daily_period: f64,
    pub weekly_period: f64,
    /// Per-KPI daily amplitudes are drawn uniformly from this range.
    pub daily_amplitude: (f64, f64),
    pub weekly_amplitude: (f64, f64),
    pub ar_coef: f64,
    pub noise_scale: f64,
    /// Target fraction of anomalous steps per KPI.
    pub prevalence: f64,
    pub mix: AnomalyMix,
    /// Inclusive range of events per KPI when anomalies are requested.
    pub events_per_kpi: (usize, usize),
    /// Taken from the run's top-level seed, never from the `[synth]` table.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_kpis: 12,
            length: 20_000,
            step: 300,
            start: 1_609_459_200,
            daily_period: 288.0,
            weekly_period: 2016.0,
            daily_amplitude: (0.5, 2.0),
            weekly_amplitude: (0.1, 0.5),
            ar_coef: 0.8,
            noise_scale: 0.2,
            prevalence: 0.01,
            mix: AnomalyMix::default(),
            events_per_kpi: (1, 35),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synth: {msg}")));
        if self.n_kpis == 0 || self.length == 0 || self.step <= 0 {
            return bad("n_kpis, length and step must be >= 1");
        }
        if !(self.daily_period > 0.0 && self.weekly_period > 0.0) {
            return bad("periods must be > 0");
        }
        for (name, (lo, hi)) in [("daily_amplitude", self.daily_amplitude), ("weekly_amplitude", self.weekly_amplitude)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return bad(&format!("{name} must be a finite range 0 <= lo <= hi"));
            }
        }
        if !(self.ar_coef.abs() < 1.0) || !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("ar_coef must lie in (-1, 1) and noise_scale must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.prevalence) {
            return bad("prevalence must lie in [0, 1]");
        }
        for kind in AnomalyKind::ALL {
            if !(0.0..=1.0).contains(&self.mix.weight(kind)) {
                return bad(&format!("{kind} rate must lie in [0, 1]"));
            }
        }
        let (lo, hi) = self.events_per_kpi;
        if lo == 0 || lo > hi {
            return bad("events_per_kpi must satisfy 1 <= min <= max");
        }
        Ok(())
    }

    fn anomalies_requested(&self) -> bool {
        self.prevalence > 0.0 && !self.mix.is_zero()
    }
}

/// One injected anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: AnomalyKind,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    /// Added offset in σ units for spikes and level shifts; 0 for dropouts.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Values with labels attached.
    pub frame: TimeSeriesFrame,
    /// Ground-truth events per KPI.
    pub events: Vec<EventList>,
    /// Injections per KPI, sorted by start.
    pub injections: Vec<Vec<Injection>>,
    /// Series before injection (`T × F`).
    pub clean: Array2<f64>,
}

pub fn kpi_name(i: usize) -> String {
    format!("kpi_{i:02}")
}

/// Generates the series and labels. Deterministic for a given config; each
/// KPI draws from its own ChaCha stream, so KPIs are generated in parallel.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let per_kpi = (0..config.n_kpis)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            generate_kpi(config, &mut rng).map_err(|e| match e {
                Error::Invalid(msg) => Error::invalid(format!("{}: {msg}", kpi_name(i))),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (t, f) = (config.length, config.n_kpis);
    let mut values = Array2::zeros((t, f));
    let mut clean = Array2::zeros((t, f));
    let mut labels = Array2::zeros((t, f));
    let mut events = Vec::with_capacity(f);
    let mut injections = Vec::with_capacity(f);
    for (i, kpi) in per_kpi.into_iter().enumerate() {
        values.column_mut(i).assign(&kpi.values);
        clean.column_mut(i).assign(&kpi.clean);
        labels.column_mut(i).assign(&kpi.labels);
        events.push(merge_events(kpi.labels.as_slice().expect("contiguous")));
        injections.push(kpi.injections);
    }
    let timestamps = (0..t as i64).map(|k| config.start + k * config.step).collect();
    let names = (0..f).map(kpi_name).collect();
    let frame = TimeSeriesFrame::new(timestamps, config.step, values, names, Some(labels))?;
    Ok(SynthOutput {
        frame,
        events,
        injections,
        clean,
    })
}

struct KpiSeries {
    values: Array1<f64>,
    clean: Array1<f64>,
    labels: Array1<u8>,
    injections: Vec<Injection>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn clean_series(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let a = uniform(rng, config.daily_amplitude);
    let b = uniform(rng, config.weekly_amplitude);
    let phase = rng.random_range(0.0..2.0 * PI);
    let (rho, scale) = (config.ar_coef, config.noise_scale);
    let mut noise: f64 = {
        let z: f64 = StandardNormal.sample(rng);
        z * scale / (1.0 - rho * rho).sqrt()
    };
    Array1::from_shape_fn(config.length, |t| {
        if t > 0 {
            let z: f64 = StandardNormal.sample(rng);
            noise = rho * noise + scale * z;
        }
        let t = t as f64;
        a * (2.0 * PI * t / config.daily_period + phase).sin()
            + b * (2.0 * PI * t / config.weekly_period).sin()
            + noise
    })
}

/// Splits the step budget into event lengths.
fn plan_events(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<(AnomalyKind, usize)>> {
    if !config.anomalies_requested() {
        return Ok(Vec::new());
    }
    let budget = ((config.prevalence * config.length as f64).round() as usize).max(1);
    let (min_events, max_events) = config.events_per_kpi;
    let weights: Vec<f64> = AnomalyKind::ALL.iter().map(|&k| config.mix.weight(k)).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("synth mix: {e}")))?;
    let mut plan = Vec::new();
    let mut remaining = budget;
    while remaining > 0 && plan.len() < max_events {
        let mut kind = AnomalyKind::ALL[pick.sample(rng)];
        if kind.length_range().0 > remaining {
            // prefer a kind that still fits the budget exactly
            if let Some(&k) = AnomalyKind::ALL
                .iter()
                .find(|&&k| config.mix.weight(k) > 0.0 && k.length_range().0 <= remaining)
            {
                kind = k;
            }
        }
        let (lo, hi) = kind.length_range();
        let len = rng.random_range(lo..=hi).min(remaining).max(lo);
        remaining = remaining.saturating_sub(len);
        plan.push((kind, len));
    }
    if remaining > 0 {
        return Err(Error::invalid(format!(
            "{budget} anomalous steps do not fit in {max_events} events; the anomaly rate is infeasible"
        )));
    }
    while plan.len() < min_events {
        let kind = AnomalyKind::ALL[pick.sample(rng)];
        plan.push((kind, kind.length_range().0));
    }
    Ok(plan)
}

/// Random non-overlapping, non-adjacent placement, longest events first.
fn place_events(plan: &[(AnomalyKind, usize)], length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let needed: usize = plan.iter().map(|(_, l)| l + 1).sum();
    if needed > length + 1 {
        return Err(Error::invalid(format!(
            "anomaly budget of {} events needs {needed} steps, series has {length}",
            plan.len()
        )));
    }
    let mut order: Vec<usize> = (0..plan.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(plan[i].1));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut spans = vec![(0, 0); plan.len()];
    for i in order {
        let len = plan[i].1;
        let mut placed = false;
        for _ in 0..MAX_TRIES {
            let start = rng.random_range(0..=length - len);
            let end = start + len - 1;
            let clear = taken.iter().all(|&(s, e)| end + 1 < s || start > e + 1);
            if clear {
                taken.push((start, end));
                spans[i] = (start, end);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(format!(
                "could not place {} anomalous events in {length} steps; the anomaly rate is infeasible",
                plan.len()
            )));
        }
    }
    Ok(spans)
}

fn generate_kpi(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<KpiSeries> {
    let clean = clean_series(config, rng);
    let n = clean.len() as f64;
    let mean = clean.sum() / n;
    let sigma = (clean.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let floor = clean.iter().copied().fold(f64::INFINITY, f64::min);

    let plan = plan_events(config, rng)?;
    let spans = place_events(&plan, config.length, rng)?;
    let mut values = clean.clone();
    let mut labels = Array1::zeros(config.length);
    let mut injections = Vec::with_capacity(plan.len());
    for (&(kind, _), &(start, end)) in plan.iter().zip(&spans) {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let magnitude = match kind {
            AnomalyKind::Spike => sign * rng.random_range(4.0..=8.0),
            AnomalyKind::LevelShift => sign * rng.random_range(2.0..=4.0),
            AnomalyKind::Dropout => 0.0,
        };
        for t in start..=end {
            match kind {
                AnomalyKind::Dropout => values[t] = floor,
                _ => values[t] += magnitude * sigma,
            }
            labels[t] = 1u8;
        }
        injections.push(Injection {
            kind,
            start,
            end,
            magnitude,
        });
    }
    injections.sort_by_key(|inj| inj.start);
    Ok(KpiSeries {
        values,
        clean,
        labels,
        injections,
    })
}
