use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::context::{ContextColumns, WindowContext};
use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::real::Real;

/// Input length `window`, forecast horizon `horizon`, step between windows `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window: 100,
            horizon: 3,
            stride: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(window: usize, horizon: usize, stride: usize) -> Result<Self> {
        let spec = Self {
            window,
            horizon,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "window, horizon and stride must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of windows a series of length `len` yields.
    pub fn count(&self, len: usize) -> usize {
        let span = self.window + self.horizon;
        if len < span {
            0
        } else {
            (len - span) / self.stride + 1
        }
    }
}

/// One training or evaluation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample<T = f64> {
    /// Row offset of the first input step in the source frame.
    pub start: usize,
    /// `W × F` input rows.
    pub input: Array2<T>,
    /// `H × F` rows following the input.
    pub target: Array2<T>,
    /// `true` on observed (non-imputed) input cells.
    pub input_observed: Array2<bool>,
    pub target_observed: Array2<bool>,
    pub context: WindowContext,
}

impl WindowSample<f64> {
    pub fn cast<U: Real>(&self) -> WindowSample<U> {
        WindowSample {
            start: self.start,
            input: self.input.mapv(U::of),
            target: self.target.mapv(U::of),
            input_observed: self.input_observed.clone(),
            target_observed: self.target_observed.clone(),
            context: self.context.clone(),
        }
    }
}

/// Ordered sliding-window iterator over a frame.
pub struct Windows<'a> {
    frame: &'a TimeSeriesFrame,
    context: &'a ContextColumns,
    spec: WindowSpec,
    next: usize,
    count: usize,
}

impl Iterator for Windows<'_> {
    type Item = WindowSample;

    fn next(&mut self) -> Option<WindowSample> {
        if self.next >= self.count {
            return None;
        }
        let start = self.next * self.spec.stride;
        self.next += 1;
        let (w, h) = (self.spec.window, self.spec.horizon);
        let values = self.frame.values();
        let imputed = self.frame.imputed();
        let input_rows = s![start..start + w, ..];
        let target_rows = s![start + w..start + w + h, ..];
        Some(WindowSample {
            start,
            input: values.slice(input_rows).to_owned(),
            target: values.slice(target_rows).to_owned(),
            input_observed: imputed.slice(input_rows).mapv(|m| !m),
            target_observed: imputed.slice(target_rows).mapv(|m| !m),
            context: self.context.window(start, w),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.count - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Windows<'_> {}

/// Sliding windows over `frame` with context rows aligned to the input rows.
pub fn make_windows<'a>(
    frame: &'a TimeSeriesFrame,
    context: &'a ContextColumns,
    spec: WindowSpec,
) -> Result<Windows<'a>> {
    spec.validate()?;
    if context.len() != frame.len() {
        return Err(Error::shape(format!(
            "context has {} rows, frame has {}",
            context.len(),
            frame.len()
        )));
    }
    if frame.len() < spec.window + spec.horizon {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than window + horizon = {}",
            frame.len(),
            spec.window + spec.horizon
        )));
    }
    Ok(Windows {
        frame,
        context,
        spec,
        next: 0,
        count: spec.count(frame.len()),
    })
}
