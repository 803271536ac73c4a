//! Single- and two-phase survey missions.
//!
//! Phase 1 covers the whole region with a VRP lane plan and builds a coarse
//! estimate. Two-phase missions then restart every drone at the estimated
//! peak and either random-walk inside the estimated plume box (strategy A)
//! or re-cover that box with tighter lanes (strategy B). The final estimate
//! uses every sample from both phases.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flight::{
    bounce_heading, drone_rng, fly_polyline, merge_samples, sort_samples, write_samples,
    DroneState, RngPurpose, Sample, Sensor, SensorModel, DEFAULT_SAMPLE_INTERVAL_M,
};
use crate::geometry::Point;
use crate::grid::{build_lane_graph, GridError, Region};
use crate::kernel::{estimate_grid, plume_bounding_box, EstimateGrid, KernelError, KernelSpec};
use crate::metrics::{classify, score, ErrorReport, LabelGrid, MetricsError};
use crate::plume::{
    ground_truth_labels, ConcentrationField, DangerThreshold, PlumeError, PlumeSource,
};
use crate::vrp::{solve, VrpError, VrpInstance, DEFAULT_EXACT_NODE_CAP};

/// Consecutive bounces after which a drone draws a fresh heading.
pub const MAX_CONSECUTIVE_BOUNCES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MissionError {
    #[error("invalid mission config: {0}")]
    Config(String),
    #[error("drone {k} is outside 1..={n}")]
    DroneIndex { k: usize, n: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Plume(#[from] PlumeError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Vrp(#[from] VrpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    SinglePhase,
    /// Strategy A.
    TwoPhaseRandom,
    /// Strategy B.
    TwoPhaseCoverage,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::SinglePhase,
        Strategy::TwoPhaseRandom,
        Strategy::TwoPhaseCoverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SinglePhase => "single_phase",
            Strategy::TwoPhaseRandom => "two_phase_random",
            Strategy::TwoPhaseCoverage => "two_phase_coverage",
        }
    }

    pub fn is_two_phase(self) -> bool {
        self != Strategy::SinglePhase
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                format!("unknown strategy {s:?} (expected single_phase, two_phase_random or two_phase_coverage)")
            })
    }
}

/// Kernel width choice for one estimation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    /// sigma equals the lane distance of the phase being estimated.
    LaneDistance,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub region: Region,
    pub depot: Point,
    pub n_drones: usize,
    /// m/s.
    pub speed: f64,
    /// Per-drone endurance T_b, s.
    pub battery: f64,
    pub p1_lane: f64,
    pub p2_lane: f64,
    /// Phase-2 time per drone, s; also reserved from the phase-1 plan.
    pub p2_duration: f64,
    pub sigma: Sigma,
    /// Cutoff radius in multiples of sigma.
    pub radius_factor: f64,
    pub c_d: f64,
    /// Growth of the phase-1 plume box on every side, m; `None` means twice
    /// the phase-1 lane distance.
    pub margin: Option<f64>,
    pub strategy: Strategy,
    pub seed: u64,
    pub source: PlumeSource,
    pub sample_interval: f64,
    pub noise_std: f64,
    pub exact_cap: usize,
    pub subsample_n: usize,
}

impl MissionConfig {
    /// 200 x 100 m region with the depot mid-way along the lower edge and a
    /// plume released
    /// at ground level from `source`.
    pub fn with_source(source: Point) -> Self {
        let region = Region::with_size(200.0, 100.0).expect("static region");
        Self {
            region,
            depot: Point::new(100.0, 0.0),
            n_drones: 1,
            speed: 10.0,
            battery: 1800.0,
            p1_lane: 10.0,
            p2_lane: 4.0,
            p2_duration: 720.0,
            sigma: Sigma::LaneDistance,
            radius_factor: 3.0,
            c_d: 0.1,
            margin: None,
            strategy: Strategy::SinglePhase,
            seed: 1,
            source: default_source(source),
            sample_interval: DEFAULT_SAMPLE_INTERVAL_M,
            noise_std: 0.0,
            exact_cap: DEFAULT_EXACT_NODE_CAP,
            subsample_n: 5,
        }
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        let bad = |m: &str| Err(MissionError::Config(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.n_drones == 0 {
            return bad("n_drones must be at least 1");
        }
        if !pos(self.speed) {
            return bad("speed must be positive");
        }
        if !(self.battery > 0.0) {
            return bad("battery_s must be positive");
        }
        if !pos(self.p1_lane) || !pos(self.p2_lane) {
            return bad("lane distances must be positive");
        }
        if self.p1_lane > self.region.width() {
            return bad("p1_lane_m exceeds the region width");
        }
        if !(self.p2_duration >= 0.0) || !self.p2_duration.is_finite() {
            return bad("p2_duration_s must be non-negative");
        }
        if self.strategy.is_two_phase() && self.p2_duration >= self.battery {
            return bad("p2_duration_s leaves no battery for phase 1");
        }
        if let Sigma::Fixed(s) = self.sigma {
            if !pos(s) {
                return bad("sigma_m must be positive");
            }
        }
        if !pos(self.radius_factor) {
            return bad("radius_factor must be positive");
        }
        if !pos(self.c_d) {
            return bad("c_d must be positive");
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0) || !m.is_finite() {
                return bad("margin_m must be non-negative");
            }
        }
        if !pos(self.sample_interval) {
            return bad("sample_interval_m must be positive");
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be non-negative");
        }
        if self.subsample_n == 0 {
            return bad("subsample_n must be at least 1");
        }
        if !self.region.is_whole_meters() {
            return bad("region_w and region_h must be whole meters");
        }
        self.source.validate()?;
        Ok(())
    }

    pub fn margin_m(&self) -> f64 {
        self.margin.unwrap_or(2.0 * self.p1_lane)
    }

    pub fn threshold(&self) -> DangerThreshold {
        DangerThreshold::new(self.c_d).expect("validated threshold")
    }

    pub fn field(&self) -> Result<ConcentrationField, PlumeError> {
        ConcentrationField::at_source_height(self.source)
    }

    /// Kernel for a phase flown at `lane` spacing.
    pub fn kernel_for(&self, lane: f64) -> Result<KernelSpec, KernelError> {
        let sigma = match self.sigma {
            Sigma::LaneDistance => lane,
            Sigma::Fixed(s) => s,
        };
        KernelSpec::new(sigma, self.radius_factor * sigma)
    }

    fn sensor_model(&self) -> SensorModel {
        SensorModel {
            noise_std: self.noise_std,
            rng_seed: self.seed,
        }
    }

    /// Battery available to the phase-1 plan.
    fn phase1_battery(&self) -> f64 {
        if self.strategy.is_two_phase() {
            self.battery - self.p2_duration
        } else {
            self.battery
        }
    }
}

/// Ground-level release of 100 g/s into a 2 m/s wind blowing along +x.
pub fn default_source(position: Point) -> PlumeSource {
    PlumeSource {
        position,
        emission_rate: 100.0,
        effective_height: 0.0,
        wind_speed: 2.0,
        wind_direction_deg: 0.0,
        stability: Default::default(),
    }
}

/// Heading range `[lo, hi)` in degrees reserved for one drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingInterval {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HeadingInterval {
    pub fn contains(&self, deg: f64) -> bool {
        deg >= self.lo && deg < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let h = rng.random_range(self.lo..self.hi);
        // rounding can land exactly on hi
        if h >= self.hi {
            self.lo
        } else {
            h
        }
    }
}

/// Interval of drone `k` (1-based) out of `n`.
pub fn heading_interval(k: usize, n: usize) -> Result<HeadingInterval, MissionError> {
    if k == 0 || k > n {
        return Err(MissionError::DroneIndex { k, n });
    }
    let w = 360.0 / n as f64;
    Ok(HeadingInterval {
        k,
        lo: w * (k - 1) as f64,
        hi: if k == n { 360.0 } else { w * k as f64 },
    })
}

/// Per-drone record of one mission.
#[derive(Debug, Clone, PartialEq)]
pub struct DroneLog {
    pub id: usize,
    pub phase1_time: f64,
    pub phase2_time: f64,
    pub truncated: bool,
    /// Strategy A only: samples that re-entered a box this drone had left.
    pub revisits: usize,
    pub initial_heading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1 {
    pub samples: Vec<Sample>,
    pub estimate: EstimateGrid,
    pub bounding_box: Option<Region>,
    /// Planned makespan U, s.
    pub elapsed: f64,
    pub drone_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2 {
    /// Input samples followed by the new ones, time ordered.
    pub samples: Vec<Sample>,
    /// Samples taken in this phase only, time ordered.
    pub added: Vec<Sample>,
    /// Longest phase-2 flight, s.
    pub elapsed: f64,
    pub logs: Vec<DroneLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub phase1_samples: Vec<Sample>,
    pub phase2_samples: Vec<Sample>,
    pub samples: Vec<Sample>,
    pub estimate: EstimateGrid,
    pub labels: LabelGrid,
    pub bounding_box: Option<Region>,
    pub phase1_time: f64,
    pub phase2_time: f64,
    pub mission_time: f64,
    pub drones: Vec<DroneLog>,
    pub report: ErrorReport,
}

impl MissionResult {
    pub const SUMMARY_HEADER: &'static str =
        "strategy,seed,phase1_s,phase2_s,mission_s,FN,FP,total,acquired";

    pub fn summary_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.strategy,
            self.seed,
            self.phase1_time,
            self.phase2_time,
            self.mission_time,
            self.report.false_negative,
            self.report.false_positive,
            self.report.total,
            u8::from(self.report.plume_acquired)
        )
    }

    pub fn revisits(&self) -> usize {
        self.drones.iter().map(|d| d.revisits).sum()
    }

    /// Writes `phase1_samples.csv`, `phase2_samples.csv` and `summary.csv`
    /// into `dir`, creating it if needed.
    pub fn write_log(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        write_samples(
            BufWriter::new(fs::File::create(dir.join("phase1_samples.csv"))?),
            &self.phase1_samples,
        )?;
        write_samples(
            BufWriter::new(fs::File::create(dir.join("phase2_samples.csv"))?),
            &self.phase2_samples,
        )?;
        let mut out = BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
        writeln!(out, "{}", Self::SUMMARY_HEADER)?;
        writeln!(out, "{}", self.summary_row())?;
        out.flush()
    }
}

fn sensors(config: &MissionConfig) -> Vec<Sensor> {
    let model = config.sensor_model();
    (1..=config.n_drones)
        .map(|id| model.for_drone(id))
        .collect()
}

/// Lane coverage of the whole region, coarse estimate and plume box.
pub fn run_phase1(config: &MissionConfig) -> Result<Phase1, MissionError> {
    config.validate()?;
    let field = config.field()?;
    let mut sensors = sensors(config);
    phase1_with(config, &field, &mut sensors)
}

fn phase1_with(
    config: &MissionConfig,
    field: &ConcentrationField,
    sensors: &mut [Sensor],
) -> Result<Phase1, MissionError> {
    let graph = build_lane_graph(&config.region, config.p1_lane, config.depot)?;
    let instance = VrpInstance::new(
        graph,
        config.n_drones,
        config.speed,
        config.phase1_battery(),
    )?;
    let plan = solve(&instance, config.exact_cap)?;

    let mut samples = Vec::new();
    let mut drone_times = Vec::with_capacity(config.n_drones);
    for (k, sensor) in sensors.iter_mut().enumerate() {
        let drone = DroneState::new(k + 1, config.depot, config.battery);
        let waypoints = plan.waypoints(k, &instance.graph);
        let (s, end) = fly_polyline(
            drone,
            &waypoints,
            config.speed,
            config.sample_interval,
            field,
            sensor,
        );
        samples.extend(s);
        drone_times.push(end.elapsed);
    }
    sort_samples(&mut samples);

    let estimate = estimate_grid(
        &samples,
        &config.region,
        &config.kernel_for(config.p1_lane)?,
    )?;
    let bounding_box = plume_bounding_box(&estimate, config.threshold(), config.margin_m());
    Ok(Phase1 {
        samples,
        estimate,
        bounding_box,
        elapsed: plan.makespan,
        drone_times,
    })
}

/// Phase-2 time left to drone `k` given its phase-1 flight time.
fn phase2_budget(config: &MissionConfig, phase1_time: f64) -> f64 {
    config
        .p2_duration
        .min(config.battery - phase1_time)
        .max(0.0)
}

/// Strategy A: straight flights from `start` with random headings, turned
/// around whenever a sample reads below the threshold or the drone leaves
/// `boundary`.
pub fn run_phase2_random(
    config: &MissionConfig,
    start: Point,
    boundary: &Region,
    samples_in: &[Sample],
) -> Result<Phase2, MissionError> {
    config.validate()?;
    let field = config.field()?;
    let mut sensors = sensors(config);
    let t1 = vec![0.0; config.n_drones];
    phase2_random_with(
        config,
        &field,
        &mut sensors,
        start,
        boundary,
        samples_in,
        0.0,
        &t1,
    )
}

#[allow(clippy::too_many_arguments)]
fn phase2_random_with(
    config: &MissionConfig,
    field: &ConcentrationField,
    sensors: &mut [Sensor],
    start: Point,
    boundary: &Region,
    samples_in: &[Sample],
    clock: f64,
    phase1_times: &[f64],
) -> Result<Phase2, MissionError> {
    let start = boundary.clamp(start);
    let mut new = Vec::new();
    let mut logs = Vec::with_capacity(config.n_drones);
    let mut elapsed: f64 = 0.0;
    for (k, sensor) in sensors.iter_mut().enumerate() {
        let id = k + 1;
        let interval = heading_interval(id, config.n_drones)?;
        let mut rng = drone_rng(config.seed, id, RngPurpose::Heading);
        let budget = phase2_budget(config, phase1_times[k]);
        let walk = random_walk(
            config, field, sensor, &mut rng, &interval, id, start, boundary, clock, budget,
        );
        elapsed = elapsed.max(walk.elapsed);
        new.extend(walk.samples);
        logs.push(DroneLog {
            id,
            phase1_time: phase1_times[k],
            phase2_time: walk.elapsed,
            truncated: walk.elapsed < config.p2_duration,
            revisits: walk.revisits,
            initial_heading: Some(walk.initial_heading),
        });
    }
    sort_samples(&mut new);
    Ok(Phase2 {
        samples: merge_samples(samples_in, &new),
        added: new,
        elapsed,
        logs,
    })
}

struct Walk {
    samples: Vec<Sample>,
    elapsed: f64,
    revisits: usize,
    initial_heading: f64,
}

#[allow(clippy::too_many_arguments)]
fn random_walk(
    config: &MissionConfig,
    field: &ConcentrationField,
    sensor: &mut Sensor,
    rng: &mut ChaCha8Rng,
    interval: &HeadingInterval,
    id: usize,
    start: Point,
    boundary: &Region,
    clock: f64,
    budget: f64,
) -> Walk {
    let threshold = config.threshold();
    let speed = config.speed;
    let max_arc = budget * speed;
    let tol = 1e-9 * config.sample_interval;
    let initial_heading = interval.draw(rng);
    let mut heading = initial_heading;

    let region = &config.region;
    let mut visited = vec![false; region.box_count().expect("validated region")];
    let mut revisits = 0;
    let mut prev_box = region.box_of(start).ok();
    if let Some(b) = prev_box {
        visited[b] = true;
    }

    let mut samples = vec![Sample {
        drone_id: id,
        position: start,
        time: clock,
        value: sensor.measure(field, start),
    }];
    let mut pos = start;
    let mut arc = 0.0;
    let mut streak = 0;
    // every other step makes progress, so this bound is never the binding one
    let max_steps = 4 * (max_arc / config.sample_interval).ceil() as usize + 16;
    for _ in 0..max_steps {
        if arc >= max_arc - tol {
            break;
        }
        let step = config.sample_interval.min(max_arc - arc);
        let target = pos.advance(heading, step);
        let outside = !boundary.contains(target);
        let next = if outside {
            boundary.clamp(target)
        } else {
            target
        };
        arc = (arc + pos.distance(next)).min(max_arc);
        pos = next;
        let value = sensor.measure(field, pos);
        samples.push(Sample {
            drone_id: id,
            position: pos,
            time: clock + arc / speed,
            value,
        });

        if let Ok(b) = region.box_of(pos) {
            if prev_box != Some(b) {
                if visited[b] {
                    revisits += 1;
                }
                visited[b] = true;
                prev_box = Some(b);
            }
        }

        if outside || !threshold.is_unsafe(value) {
            streak += 1;
            heading = if streak >= MAX_CONSECUTIVE_BOUNCES {
                streak = 0;
                interval.draw(rng)
            } else {
                bounce_heading(heading, rng)
            };
        } else {
            streak = 0;
        }
    }
    Walk {
        samples,
        elapsed: arc / speed,
        revisits,
        initial_heading,
    }
}

/// Strategy B: a second lane plan over `sub`, flown from `start` with
/// whatever phase-2 time each drone has left. Plans that do not fit are
/// flown as far as the battery allows.
pub fn run_phase2_coverage(
    config: &MissionConfig,
    sub: &Region,
    start: Point,
    samples_in: &[Sample],
) -> Result<Phase2, MissionError> {
    config.validate()?;
    let field = config.field()?;
    let mut sensors = sensors(config);
    let t1 = vec![0.0; config.n_drones];
    phase2_coverage_with(
        config,
        &field,
        &mut sensors,
        sub,
        start,
        samples_in,
        0.0,
        &t1,
    )
}

#[allow(clippy::too_many_arguments)]
fn phase2_coverage_with(
    config: &MissionConfig,
    field: &ConcentrationField,
    sensors: &mut [Sensor],
    sub: &Region,
    start: Point,
    samples_in: &[Sample],
    clock: f64,
    phase1_times: &[f64],
) -> Result<Phase2, MissionError> {
    if !config.region.contains_region(sub) {
        return Err(MissionError::Config(
            "phase-2 area must lie inside the region".to_string(),
        ));
    }
    let lane = config.p2_lane.min(sub.width());
    let graph = build_lane_graph(sub, lane, start)?;
    let instance = VrpInstance::new(graph, config.n_drones, config.speed, f64::INFINITY)?;
    let plan = solve(&instance, config.exact_cap)?;

    let mut new = Vec::new();
    let mut logs = Vec::with_capacity(config.n_drones);
    let mut elapsed: f64 = 0.0;
    for (k, sensor) in sensors.iter_mut().enumerate() {
        let budget = phase2_budget(config, phase1_times[k]);
        let mut drone = DroneState::new(k + 1, start, clock + budget);
        drone.elapsed = clock;
        let waypoints = plan.waypoints(k, &instance.graph);
        let (s, end) = fly_polyline(
            drone,
            &waypoints,
            config.speed,
            config.sample_interval,
            field,
            sensor,
        );
        let flown = end.elapsed - clock;
        elapsed = elapsed.max(flown);
        new.extend(s);
        logs.push(DroneLog {
            id: k + 1,
            phase1_time: phase1_times[k],
            phase2_time: flown,
            truncated: end.truncated,
            revisits: 0,
            initial_heading: None,
        });
    }
    sort_samples(&mut new);
    Ok(Phase2 {
        samples: merge_samples(samples_in, &new),
        added: new,
        elapsed,
        logs,
    })
}

/// Runs the configured strategy end to end and scores the final estimate
/// against ground truth.
pub fn run_mission(config: &MissionConfig) -> Result<MissionResult, MissionError> {
    config.validate()?;
    let field = config.field()?;
    let threshold = config.threshold();
    let truth = ground_truth_labels(&field, &config.region, threshold, config.subsample_n)?;
    run_mission_against(config, &field, &truth)
}

/// As [`run_mission`], with the field and its ground truth supplied.
pub fn run_mission_against(
    config: &MissionConfig,
    field: &ConcentrationField,
    truth: &LabelGrid,
) -> Result<MissionResult, MissionError> {
    config.validate()?;
    let threshold = config.threshold();
    let mut sensors = sensors(config);
    let p1 = phase1_with(config, field, &mut sensors)?;

    let mut drones: Vec<DroneLog> = p1
        .drone_times
        .iter()
        .enumerate()
        .map(|(k, t)| DroneLog {
            id: k + 1,
            phase1_time: *t,
            phase2_time: 0.0,
            truncated: false,
            revisits: 0,
            initial_heading: None,
        })
        .collect();

    let two_phase = match (
        config.strategy,
        p1.bounding_box,
        p1.estimate.peak_location(),
    ) {
        (Strategy::SinglePhase, _, _) | (_, None, _) | (_, _, None) => None,
        (Strategy::TwoPhaseRandom, Some(bbox), Some(peak)) => Some(phase2_random_with(
            config,
            field,
            &mut sensors,
            peak,
            &bbox,
            &p1.samples,
            p1.elapsed,
            &p1.drone_times,
        )?),
        (Strategy::TwoPhaseCoverage, Some(bbox), Some(peak)) => Some(phase2_coverage_with(
            config,
            field,
            &mut sensors,
            &bbox,
            peak,
            &p1.samples,
            p1.elapsed,
            &p1.drone_times,
        )?),
    };

    let (samples, estimate, phase2_time, phase2_samples) = match two_phase {
        None => (p1.samples.clone(), p1.estimate.clone(), 0.0, Vec::new()),
        Some(p2) => {
            drones = p2.logs;
            let kernel = config.kernel_for(config.p2_lane)?;
            let estimate = estimate_grid(&p2.samples, &config.region, &kernel)?;
            (p2.samples, estimate, p2.elapsed, p2.added)
        }
    };

    let labels = if p1.bounding_box.is_none() {
        LabelGrid::all_safe(&config.region)?
    } else {
        classify(&estimate, threshold)
    };
    let report = score(truth, &labels)?;
    Ok(MissionResult {
        strategy: config.strategy,
        seed: config.seed,
        phase1_samples: p1.samples,
        phase2_samples,
        samples,
        estimate,
        labels,
        bounding_box: p1.bounding_box,
        phase1_time: p1.elapsed,
        phase2_time,
        mission_time: p1.elapsed + phase2_time,
        drones,
        report,
    })
}
