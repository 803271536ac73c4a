//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored and
//! every key may appear at most once. Unknown keys are errors. Keys left
//! out take the defaults listed in [`KEYS`].

use std::fmt;
use std::path::PathBuf;

use crate::geometry::Point;
use crate::grid::Region;
use crate::mission::{MissionConfig, Sigma};

/// Every accepted key with its default, in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("region_w", "200"),
    ("region_h", "100"),
    ("depot_x", "region_w / 2"),
    ("depot_y", "0"),
    ("n_drones", "1"),
    ("speed", "10"),
    ("battery_s", "1800"),
    ("p1_lane_m", "10"),
    ("p2_lane_m", "4"),
    ("p2_duration_s", "0.4 * battery_s"),
    ("sigma_m", "auto (lane distance of each phase)"),
    ("radius_factor", "3"),
    ("c_d", "0.1"),
    ("margin_m", "auto (2 * p1_lane_m)"),
    ("strategy", "single_phase"),
    ("seed", "1"),
    ("replicates", "1"),
    ("sweep_key", "none"),
    ("sweep_values", "none"),
    ("out", "none"),
    ("plume_q", "100"),
    ("wind_speed", "2"),
    ("wind_dir_deg", "0"),
    ("source_h", "0"),
    ("source_x_min", "0.1 * region_w"),
    ("source_x_max", "0.5 * region_w"),
    ("source_y_min", "0.2 * region_h"),
    ("source_y_max", "0.8 * region_h"),
    ("sample_interval_m", "1"),
    ("noise_std", "0"),
    ("exact_cap", "13"),
    ("subsample_n", "5"),
];

/// Keys that can be swept; each sweep value is applied like a config line.
pub const SWEEPABLE: &[&str] = &[
    "p1_lane_m",
    "p2_lane_m",
    "p2_duration_s",
    "n_drones",
    "strategy",
    "speed",
    "battery_s",
    "sigma_m",
    "margin_m",
    "c_d",
    "noise_std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn new(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line,
            key: key.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Rectangle the plume source is drawn from, uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SourceBox {
    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    /// Raw values, applied in order.
    pub values: Vec<String>,
}

/// Base mission plus the experiment around it. The mission's source
/// position is a placeholder; each replicate draws its own from
/// `source_box`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mission: MissionConfig,
    pub source_box: SourceBox,
    pub replicates: usize,
    pub sweep: Option<Sweep>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

/// Settings whose defaults depend on other keys stay unresolved until the
/// whole file has been read.
#[derive(Default)]
struct Pending {
    depot_x: Option<f64>,
    p2_duration: Option<f64>,
    source: [Option<f64>; 4],
}

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = v
        .parse()
        .map_err(|_| format!("expected a number, got {v:?}"))?;
    if !x.is_finite() {
        return Err(format!("{key} must be finite"));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> Result<f64, String> {
    let x = parse_f64(key, v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn non_negative(key: &str, v: &str) -> Result<f64, String> {
    let x = parse_f64(key, v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("must be non-negative, got {v}"))
    }
}

fn count(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn at_least_one(v: &str) -> Result<usize, String> {
    match count(v)? {
        0 => Err("must be at least 1".to_string()),
        n => Ok(n),
    }
}

fn optional(v: &str) -> Option<&str> {
    (v != "auto").then_some(v)
}

fn set_region(spec: &mut ExperimentSpec, w: f64, h: f64) -> Result<(), String> {
    if w.fract() != 0.0 || h.fract() != 0.0 {
        return Err("region sides must be whole meters".to_string());
    }
    spec.mission.region = Region::with_size(w, h).map_err(|e| e.to_string())?;
    Ok(())
}

fn apply(
    spec: &mut ExperimentSpec,
    pending: &mut Pending,
    key: &str,
    v: &str,
) -> Result<(), String> {
    let m = &mut spec.mission;
    match key {
        "region_w" => {
            let h = m.region.height();
            set_region(spec, positive(key, v)?, h)?;
        }
        "region_h" => {
            let w = m.region.width();
            set_region(spec, w, positive(key, v)?)?;
        }
        "depot_x" => pending.depot_x = Some(parse_f64(key, v)?),
        "depot_y" => m.depot.y = parse_f64(key, v)?,
        "n_drones" => m.n_drones = at_least_one(v)?,
        "speed" => m.speed = positive(key, v)?,
        "battery_s" => m.battery = positive(key, v)?,
        "p1_lane_m" => m.p1_lane = positive(key, v)?,
        "p2_lane_m" => m.p2_lane = positive(key, v)?,
        "p2_duration_s" => pending.p2_duration = Some(non_negative(key, v)?),
        "sigma_m" => {
            m.sigma = match optional(v) {
                None => Sigma::LaneDistance,
                Some(s) => Sigma::Fixed(positive(key, s)?),
            }
        }
        "radius_factor" => m.radius_factor = positive(key, v)?,
        "c_d" => m.c_d = positive(key, v)?,
        "margin_m" => {
            m.margin = match optional(v) {
                None => None,
                Some(s) => Some(non_negative(key, s)?),
            }
        }
        "strategy" => m.strategy = v.parse()?,
        "seed" => {
            m.seed = v
                .parse()
                .map_err(|_| format!("expected an unsigned integer, got {v:?}"))?
        }
        "replicates" => spec.replicates = at_least_one(v)?,
        "sweep_key" => {
            if !SWEEPABLE.contains(&v) {
                return Err(format!(
                    "{v:?} cannot be swept (sweepable: {})",
                    SWEEPABLE.join(", ")
                ));
            }
            let values = spec.sweep.take().map(|s| s.values).unwrap_or_default();
            spec.sweep = Some(Sweep {
                key: v.to_string(),
                values,
            });
        }
        "sweep_values" => {
            let values: Vec<String> = v
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if values.is_empty() {
                return Err("needs at least one value".to_string());
            }
            let key = spec.sweep.take().map(|s| s.key).unwrap_or_default();
            spec.sweep = Some(Sweep { key, values });
        }
        "out" => spec.out = Some(PathBuf::from(v)),
        "plume_q" => m.source.emission_rate = positive(key, v)?,
        "wind_speed" => m.source.wind_speed = positive(key, v)?,
        "wind_dir_deg" => m.source.wind_direction_deg = parse_f64(key, v)?,
        "source_h" => m.source.effective_height = non_negative(key, v)?,
        "source_x_min" => pending.source[0] = Some(parse_f64(key, v)?),
        "source_x_max" => pending.source[1] = Some(parse_f64(key, v)?),
        "source_y_min" => pending.source[2] = Some(parse_f64(key, v)?),
        "source_y_max" => pending.source[3] = Some(parse_f64(key, v)?),
        "sample_interval_m" => m.sample_interval = positive(key, v)?,
        "noise_std" => m.noise_std = non_negative(key, v)?,
        "exact_cap" => m.exact_cap = count(v)?,
        "subsample_n" => m.subsample_n = at_least_one(v)?,
        _ => return Err("unknown key".to_string()),
    }
    Ok(())
}

fn resolve(spec: &mut ExperimentSpec, pending: &Pending) {
    let r = spec.mission.region;
    let (w, h) = (r.width(), r.height());
    spec.mission.depot.x = pending.depot_x.unwrap_or(0.5 * w);
    spec.mission.p2_duration = pending.p2_duration.unwrap_or(0.4 * spec.mission.battery);
    let d = [0.1 * w, 0.5 * w, 0.2 * h, 0.8 * h];
    let s: Vec<f64> = (0..4).map(|i| pending.source[i].unwrap_or(d[i])).collect();
    spec.source_box = SourceBox {
        x_min: s[0],
        x_max: s[1],
        y_min: s[2],
        y_max: s[3],
    };
    spec.mission.source.position = spec.source_box.center();
}

fn check(spec: &ExperimentSpec) -> Result<(), ConfigError> {
    let err = |key: &str, msg: &str| Err(ConfigError::new(None, Some(key), msg));
    let b = spec.source_box;
    let r = spec.mission.region;
    if !(b.x_min < b.x_max && b.y_min < b.y_max) {
        return err("source_x_min", "source rectangle must have positive extent");
    }
    if !(r.contains(Point::new(b.x_min, b.y_min)) && r.contains(Point::new(b.x_max, b.y_max))) {
        return err(
            "source_x_min",
            "source rectangle must lie inside the region",
        );
    }
    if spec.mission.p1_lane > r.width() {
        return err("p1_lane_m", "must not exceed region_w");
    }
    if spec.mission.strategy.is_two_phase() && spec.mission.p2_duration >= spec.mission.battery {
        return err(
            "p2_duration_s",
            "must be below battery_s for two-phase strategies",
        );
    }
    match &spec.sweep {
        Some(s) if s.key.is_empty() => return err("sweep_key", "sweep_values given without a key"),
        Some(s) if s.values.is_empty() => {
            return err("sweep_values", "sweep_key given without values")
        }
        Some(s) => {
            for v in &s.values {
                let mut probe = spec.clone();
                apply_override(&mut probe, &s.key, v)?;
            }
        }
        None => {}
    }
    spec.mission
        .validate()
        .map_err(|e| ConfigError::new(None, None, e.to_string()))
}

/// Parses and validates a configuration, filling in defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut spec = ExperimentSpec {
        mission: MissionConfig::with_source(Point::new(0.0, 0.0)),
        source_box: SourceBox {
            x_min: 0.0,
            x_max: 0.0,
            y_min: 0.0,
            y_max: 0.0,
        },
        replicates: 1,
        sweep: None,
        out: None,
    };
    let mut pending = Pending::default();
    let mut seen: Vec<&str> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(Some(line_no), None, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::new(Some(line_no), Some(key), "unknown key"));
        }
        if seen.contains(&key) {
            return Err(ConfigError::new(Some(line_no), Some(key), "duplicate key"));
        }
        seen.push(key);
        apply(&mut spec, &mut pending, key, value)
            .map_err(|m| ConfigError::new(Some(line_no), Some(key), m))?;
    }
    resolve(&mut spec, &pending);
    check(&spec)?;
    Ok(spec)
}

/// Sets one key on an already resolved spec, as a sweep does. Keys whose
/// defaults derive from others are not re-derived.
pub fn apply_override(
    spec: &mut ExperimentSpec,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    let mut pending = Pending {
        depot_x: Some(spec.mission.depot.x),
        p2_duration: Some(spec.mission.p2_duration),
        source: [
            Some(spec.source_box.x_min),
            Some(spec.source_box.x_max),
            Some(spec.source_box.y_min),
            Some(spec.source_box.y_max),
        ],
    };
    apply(spec, &mut pending, key, value.trim())
        .map_err(|m| ConfigError::new(None, Some(key), m))?;
    resolve(spec, &pending);
    Ok(())
}

/// Writes every key explicitly, so the text reparses to an equal spec.
pub fn serialize_config(spec: &ExperimentSpec) -> String {
    let m = &spec.mission;
    let s = &m.source;
    let b = spec.source_box;
    let mut lines: Vec<(String, String)> = vec![
        ("region_w".into(), m.region.width().to_string()),
        ("region_h".into(), m.region.height().to_string()),
        ("depot_x".into(), m.depot.x.to_string()),
        ("depot_y".into(), m.depot.y.to_string()),
        ("n_drones".into(), m.n_drones.to_string()),
        ("speed".into(), m.speed.to_string()),
        ("battery_s".into(), m.battery.to_string()),
        ("p1_lane_m".into(), m.p1_lane.to_string()),
        ("p2_lane_m".into(), m.p2_lane.to_string()),
        ("p2_duration_s".into(), m.p2_duration.to_string()),
        (
            "sigma_m".into(),
            match m.sigma {
                Sigma::LaneDistance => "auto".to_string(),
                Sigma::Fixed(x) => x.to_string(),
            },
        ),
        ("radius_factor".into(), m.radius_factor.to_string()),
        ("c_d".into(), m.c_d.to_string()),
        (
            "margin_m".into(),
            m.margin.map_or("auto".to_string(), |x| x.to_string()),
        ),
        ("strategy".into(), m.strategy.to_string()),
        ("seed".into(), m.seed.to_string()),
        ("replicates".into(), spec.replicates.to_string()),
    ];
    if let Some(sw) = &spec.sweep {
        lines.push(("sweep_key".into(), sw.key.clone()));
        lines.push(("sweep_values".into(), sw.values.join(",")));
    }
    if let Some(o) = &spec.out {
        lines.push(("out".into(), o.display().to_string()));
    }
    lines.extend([
        ("plume_q".into(), s.emission_rate.to_string()),
        ("wind_speed".into(), s.wind_speed.to_string()),
        ("wind_dir_deg".into(), s.wind_direction_deg.to_string()),
        ("source_h".into(), s.effective_height.to_string()),
        ("source_x_min".into(), b.x_min.to_string()),
        ("source_x_max".into(), b.x_max.to_string()),
        ("source_y_min".into(), b.y_min.to_string()),
        ("source_y_max".into(), b.y_max.to_string()),
        ("sample_interval_m".into(), m.sample_interval.to_string()),
        ("noise_std".into(), m.noise_std.to_string()),
        ("exact_cap".into(), m.exact_cap.to_string()),
        ("subsample_n".into(), m.subsample_n.to_string()),
    ]);
    let mut out = String::new();
    for (k, v) in lines {
        out.push_str(&k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}
