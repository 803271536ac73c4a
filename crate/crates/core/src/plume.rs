//! Synthetic ground truth: a steady reflected Gaussian plume from a single
//! continuous point source, observed in a horizontal plane.

use std::io::{self, Write};

use thiserror::Error;

use crate::export::write_matrix;
use crate::geometry::Point;
use crate::grid::{GridError, Region, BOX_SIZE_M};
use crate::metrics::LabelGrid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlumeError {
    #[error("emission rate must be positive (got {0})")]
    EmissionRate(f64),
    #[error("wind speed must be positive (got {0})")]
    WindSpeed(f64),
    #[error("effective height must be non-negative (got {0})")]
    Height(f64),
    #[error("dispersion coefficients must be positive")]
    Dispersion,
    #[error("source position and wind direction must be finite")]
    NonFinite,
    #[error("danger threshold must be positive (got {0})")]
    Threshold(f64),
    #[error("subsample count must be at least 1")]
    Subsample,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `(d / sigma)^2 / 2`, with an exact zero offset staying zero even when
/// `sigma` has underflowed.
fn half_sq(d: f64, sigma: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        let r = d / sigma;
        0.5 * r * r
    }
}

/// Power-law dispersion widths `sigma = a * x^b` along the crosswind (y) and
/// vertical (z) axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub a_y: f64,
    pub b_y: f64,
    pub a_z: f64,
    pub b_z: f64,
}

impl Default for Stability {
    fn default() -> Self {
        Self {
            a_y: 0.22,
            b_y: 0.9,
            a_z: 0.22,
            b_z: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlumeSource {
    pub position: Point,
    /// Emission rate Q, g/s.
    pub emission_rate: f64,
    /// Effective release height H, m.
    pub effective_height: f64,
    /// Wind speed u, m/s.
    pub wind_speed: f64,
    /// Direction the wind blows toward, degrees counter-clockwise from +x.
    pub wind_direction_deg: f64,
    pub stability: Stability,
}

impl PlumeSource {
    pub fn validate(&self) -> Result<(), PlumeError> {
        if !self.position.is_finite() || !self.wind_direction_deg.is_finite() {
            return Err(PlumeError::NonFinite);
        }
        if !(self.emission_rate > 0.0 && self.emission_rate.is_finite()) {
            return Err(PlumeError::EmissionRate(self.emission_rate));
        }
        if !(self.wind_speed > 0.0 && self.wind_speed.is_finite()) {
            return Err(PlumeError::WindSpeed(self.wind_speed));
        }
        if !(self.effective_height >= 0.0 && self.effective_height.is_finite()) {
            return Err(PlumeError::Height(self.effective_height));
        }
        let s = self.stability;
        if ![s.a_y, s.b_y, s.a_z, s.b_z]
            .iter()
            .all(|c| *c > 0.0 && c.is_finite())
        {
            return Err(PlumeError::Dispersion);
        }
        Ok(())
    }
}

/// Immutable ground-truth concentration field at a fixed sensor altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationField {
    source: PlumeSource,
    altitude: f64,
    // cached unit wind vector
    wind_cos: f64,
    wind_sin: f64,
}

impl ConcentrationField {
    pub fn new(source: PlumeSource, altitude: f64) -> Result<Self, PlumeError> {
        source.validate()?;
        if !altitude.is_finite() {
            return Err(PlumeError::NonFinite);
        }
        let h = source.wind_direction_deg.to_radians();
        Ok(Self {
            source,
            altitude,
            wind_cos: h.cos(),
            wind_sin: h.sin(),
        })
    }

    /// Field observed in the plane of the release height.
    pub fn at_source_height(source: PlumeSource) -> Result<Self, PlumeError> {
        Self::new(source, source.effective_height)
    }

    pub fn source(&self) -> &PlumeSource {
        &self.source
    }

    pub fn altitude(&self) -> f64 {
        self.altitude
    }

    /// `(downwind, crosswind)` coordinates of `p` relative to the source.
    pub fn wind_frame(&self, p: Point) -> (f64, f64) {
        let dx = p.x - self.source.position.x;
        let dy = p.y - self.source.position.y;
        (
            dx * self.wind_cos + dy * self.wind_sin,
            -dx * self.wind_sin + dy * self.wind_cos,
        )
    }

    /// Concentration at `p`; zero at and upwind of the source.
    pub fn concentration_at(&self, p: Point) -> f64 {
        let (xd, yc) = self.wind_frame(p);
        if !(xd > 0.0) {
            return 0.0;
        }
        let s = &self.source;
        let st = s.stability;
        let sy = st.a_y * xd.powf(st.b_y);
        let sz = st.a_z * xd.powf(st.b_z);
        let z = self.altitude;
        let h = s.effective_height;
        let vertical = (-half_sq(z - h, sz)).exp() + (-half_sq(z + h, sz)).exp();
        // log space keeps the near-source singularity from overflowing
        let ln_c = s.emission_rate.ln()
            - (2.0 * std::f64::consts::PI * s.wind_speed).ln()
            - sy.ln()
            - sz.ln()
            - half_sq(yc, sy)
            + vertical.ln();
        let c = ln_c.exp();
        if c.is_finite() {
            c
        } else if c.is_nan() {
            0.0
        } else {
            f64::MAX
        }
    }

    /// Maximum over an `n x n` cell-centered sub-grid of a square box.
    pub fn box_max(&self, min_corner: Point, size: f64, n: usize) -> f64 {
        let step = size / n as f64;
        let mut best = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                let p = Point::new(
                    min_corner.x + (i as f64 + 0.5) * step,
                    min_corner.y + (j as f64 + 0.5) * step,
                );
                best = best.max(self.concentration_at(p));
            }
        }
        best
    }

    /// Concentrations at every box center of `region`, row-major.
    pub fn center_grid(&self, region: &Region) -> Result<Vec<f64>, GridError> {
        Ok(region
            .boxes()?
            .map(|b| self.concentration_at(b.center()))
            .collect())
    }
}

/// The danger level `C_d`. A box is unsafe when its statistic is `>= C_d`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DangerThreshold(f64);

impl DangerThreshold {
    pub fn new(c_d: f64) -> Result<Self, PlumeError> {
        if c_d > 0.0 && c_d.is_finite() {
            Ok(Self(c_d))
        } else {
            Err(PlumeError::Threshold(c_d))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_unsafe(self, c: f64) -> bool {
        c >= self.0
    }
}

/// Per-box maxima of the field over an `n x n` subsample, row-major.
pub fn box_maxima(
    field: &ConcentrationField,
    region: &Region,
    subsample_n: usize,
) -> Result<Vec<f64>, PlumeError> {
    if subsample_n == 0 {
        return Err(PlumeError::Subsample);
    }
    Ok(region
        .boxes()?
        .map(|b| field.box_max(b.min_corner, BOX_SIZE_M, subsample_n))
        .collect())
}

/// Labels each 1 m box of `region` unsafe when the maximum of the field
/// over a `subsample_n x subsample_n` sub-grid reaches the threshold.
pub fn ground_truth_labels(
    field: &ConcentrationField,
    region: &Region,
    threshold: DangerThreshold,
    subsample_n: usize,
) -> Result<LabelGrid, PlumeError> {
    let labels = box_maxima(field, region, subsample_n)?
        .into_iter()
        .map(|c| threshold.is_unsafe(c))
        .collect();
    Ok(LabelGrid::new(*region, labels).expect("one label per box"))
}

/// Dumps the ground-truth box maxima followed by the 0/1 unsafe mask.
pub fn write_ground_truth<W: Write>(
    field: &ConcentrationField,
    region: &Region,
    threshold: DangerThreshold,
    subsample_n: usize,
    out: W,
) -> io::Result<()> {
    let invalid = |e: PlumeError| io::Error::new(io::ErrorKind::InvalidInput, e);
    let (rows, cols) = region.box_shape().map_err(|e| invalid(e.into()))?;
    let values = box_maxima(field, region, subsample_n).map_err(invalid)?;
    let mask: Vec<bool> = values.iter().map(|c| threshold.is_unsafe(*c)).collect();
    write_matrix(out, rows, cols, &values, Some(&mask))
}

/// Writes the field at box centers as a comma-separated matrix preceded by
/// a `rows,cols,box_size_m` header. Row 0 is the lowest y row.
pub fn write_field_grid<W: Write>(
    field: &ConcentrationField,
    region: &Region,
    out: W,
) -> io::Result<()> {
    let (rows, cols) = region
        .box_shape()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let values = field
        .center_grid(region)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    write_matrix(out, rows, cols, &values, None)
}
