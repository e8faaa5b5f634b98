use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::calendar::derive_calendar_context;
use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// A categorical context feature and the width of its embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatFeature {
    pub name: String,
    pub cardinality: usize,
    pub embed_dim: usize,
}

impl CatFeature {
    pub fn new(name: impl Into<String>, cardinality: usize, embed_dim: usize) -> Self {
        Self {
            name: name.into(),
            cardinality,
            embed_dim,
        }
    }
}

/// Declares which metadata accompanies each KPI window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextSchema {
    pub static_cat: Vec<CatFeature>,
    pub dynamic_cat: Vec<CatFeature>,
    pub static_real: Vec<String>,
    /// Output width of the static real-valued projection (ignored when
    /// `static_real` is empty).
    pub real_proj_dim: usize,
}

pub const HOUR: &str = "hour";
pub const WEEKDAY: &str = "weekday";

impl ContextSchema {
    /// Hour-of-day and weekday as dynamic categorical features.
    pub fn calendar(hour_dim: usize, weekday_dim: usize) -> Self {
        Self {
            dynamic_cat: vec![
                CatFeature::new(HOUR, 24, hour_dim),
                CatFeature::new(WEEKDAY, 7, weekday_dim),
            ],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = Vec::new();
        for f in self.static_cat.iter().chain(&self.dynamic_cat) {
            if f.cardinality == 0 || f.embed_dim == 0 {
                return Err(Error::Config(format!(
                    "context feature `{}` needs cardinality and embed_dim >= 1",
                    f.name
                )));
            }
            names.push(&f.name);
        }
        names.extend(self.static_real.iter().map(String::as_str));
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Config(format!("context feature `{n}` declared twice")));
            }
        }
        if !self.static_real.is_empty() && self.real_proj_dim == 0 {
            return Err(Error::Config("real_proj_dim must be >= 1 with static reals".into()));
        }
        Ok(())
    }

    /// Width of the per-timestep context vector.
    pub fn width(&self) -> usize {
        let cats: usize = self
            .static_cat
            .iter()
            .chain(&self.dynamic_cat)
            .map(|f| f.embed_dim)
            .sum();
        cats + if self.static_real.is_empty() {
            0
        } else {
            self.real_proj_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0
    }
}

/// Context values for a whole series.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextColumns {
    pub static_cat: Vec<usize>,
    /// `T × n_dynamic` category indices.
    pub dynamic_cat: Array2<usize>,
    pub static_real: Vec<f64>,
}

/// Context values for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowContext {
    pub static_cat: Vec<usize>,
    /// `W × n_dynamic` category indices.
    pub dynamic_cat: Array2<usize>,
    pub static_real: Vec<f64>,
}

impl WindowContext {
    pub fn empty(window: usize) -> Self {
        Self {
            static_cat: Vec::new(),
            dynamic_cat: Array2::zeros((window, 0)),
            static_real: Vec::new(),
        }
    }
}

impl ContextColumns {
    pub fn empty(len: usize) -> Self {
        Self {
            static_cat: Vec::new(),
            dynamic_cat: Array2::zeros((len, 0)),
            static_real: Vec::new(),
        }
    }

    /// Builds columns for `frame`. Dynamic features named `hour` / `weekday`
    /// come from the timestamps; static values are supplied by the caller.
    pub fn for_frame(
        schema: &ContextSchema,
        frame: &TimeSeriesFrame,
        static_cat: &[usize],
        static_real: &[f64],
    ) -> Result<Self> {
        if static_cat.len() != schema.static_cat.len() {
            return Err(Error::shape(format!(
                "schema declares {} static categorical features, got {}",
                schema.static_cat.len(),
                static_cat.len()
            )));
        }
        if static_real.len() != schema.static_real.len() {
            return Err(Error::shape(format!(
                "schema declares {} static real features, got {}",
                schema.static_real.len(),
                static_real.len()
            )));
        }
        let calendar = derive_calendar_context(frame);
        let mut dynamic = Array2::zeros((frame.len(), schema.dynamic_cat.len()));
        for (c, feat) in schema.dynamic_cat.iter().enumerate() {
            let source = match feat.name.as_str() {
                HOUR => &calendar.hour,
                WEEKDAY => &calendar.weekday,
                other => {
                    return Err(Error::Config(format!(
                        "no source for dynamic context feature `{other}`"
                    )))
                }
            };
            for (r, &v) in source.iter().enumerate() {
                dynamic[[r, c]] = v;
            }
        }
        let cols = Self {
            static_cat: static_cat.to_vec(),
            dynamic_cat: dynamic,
            static_real: static_real.to_vec(),
        };
        cols.check(schema)?;
        Ok(cols)
    }

    /// Verifies every category index is within its declared cardinality.
    pub fn check(&self, schema: &ContextSchema) -> Result<()> {
        for (v, f) in self.static_cat.iter().zip(&schema.static_cat) {
            if *v >= f.cardinality {
                return Err(Error::invalid(format!(
                    "`{}` index {v} out of range (cardinality {})",
                    f.name, f.cardinality
                )));
            }
        }
        for (c, f) in schema.dynamic_cat.iter().enumerate() {
            if let Some(v) = self.dynamic_cat.column(c).iter().find(|&&v| v >= f.cardinality) {
                return Err(Error::invalid(format!(
                    "`{}` index {v} out of range (cardinality {})",
                    f.name, f.cardinality
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dynamic_cat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window(&self, start: usize, len: usize) -> WindowContext {
        WindowContext {
            static_cat: self.static_cat.clone(),
            dynamic_cat: self
                .dynamic_cat
                .slice(ndarray::s![start..start + len, ..])
                .to_owned(),
            static_real: self.static_real.clone(),
        }
    }
}
