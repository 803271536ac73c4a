//! Constant-speed flight along waypoint polylines with spatially periodic
//! point sampling of the concentration field.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{normalize_degrees, Point};
use crate::plume::ConcentrationField;

/// Default along-track spacing between samples, meters.
pub const DEFAULT_SAMPLE_INTERVAL_M: f64 = 1.0;

/// One point measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub drone_id: usize,
    pub position: Point,
    /// Mission clock, s.
    pub time: f64,
    pub value: f64,
}

pub const SAMPLE_CSV_HEADER: &str = "drone_id,time_s,x_m,y_m,value";

impl Sample {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.drone_id, self.time, self.position.x, self.position.y, self.value
        )
    }
}

/// Writes samples as CSV with a header row.
pub fn write_samples<W: Write>(mut out: W, samples: &[Sample]) -> io::Result<()> {
    writeln!(out, "{SAMPLE_CSV_HEADER}")?;
    for s in samples {
        writeln!(out, "{}", s.csv_row())?;
    }
    out.flush()
}

/// Concatenates sample sets and orders them by `(time, drone_id)`. The sort
/// is stable, so each drone's own sequence keeps its flight order.
pub fn merge_samples(a: &[Sample], b: &[Sample]) -> Vec<Sample> {
    let mut all = Vec::with_capacity(a.len() + b.len());
    all.extend_from_slice(a);
    all.extend_from_slice(b);
    sort_samples(&mut all);
    all
}

pub fn sort_samples(samples: &mut [Sample]) {
    samples.sort_by(|x, y| x.time.total_cmp(&y.time).then(x.drone_id.cmp(&y.drone_id)));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState {
    pub id: usize,
    pub position: Point,
    pub heading_deg: f64,
    /// Time flown so far, s.
    pub elapsed: f64,
    /// Total endurance T_b, s.
    pub battery: f64,
    /// Set once a flight was cut short by an empty battery.
    pub truncated: bool,
}

impl DroneState {
    pub fn new(id: usize, position: Point, battery: f64) -> Self {
        Self {
            id,
            position,
            heading_deg: 0.0,
            elapsed: 0.0,
            battery,
            truncated: false,
        }
    }

    pub fn battery_remaining(&self) -> f64 {
        (self.battery - self.elapsed).max(0.0)
    }

    pub fn is_depleted(&self) -> bool {
        self.elapsed >= self.battery
    }
}

/// Additive Gaussian sensor noise, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            noise_std: 0.0,
            rng_seed: 0,
        }
    }
}

impl SensorModel {
    /// Sensor instance for one drone, with its own noise stream.
    pub fn for_drone(&self, drone_id: usize) -> Sensor {
        Sensor {
            noise: (self.noise_std > 0.0)
                .then(|| Normal::new(0.0, self.noise_std).expect("finite noise std")),
            rng: drone_rng(self.rng_seed, drone_id, RngPurpose::Sensor),
        }
    }
}

/// Which per-drone random stream to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngPurpose {
    Sensor = 0,
    Heading = 1,
}

/// Independent, reproducible stream for `(seed, drone, purpose)`.
pub fn drone_rng(seed: u64, drone_id: usize, purpose: RngPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((drone_id as u64) << 8) | purpose as u64);
    rng
}

pub struct Sensor {
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn measure(&mut self, field: &ConcentrationField, p: Point) -> f64 {
        let truth = field.concentration_at(p);
        match &self.noise {
            Some(n) => (truth + n.sample(&mut self.rng)).max(0.0),
            None => truth,
        }
    }
}

/// Reverses a heading. The sign of the 180 degree shift is drawn at random;
/// both choices land on the same direction once normalized to `[0, 360)`.
pub fn bounce_heading<R: Rng + ?Sized>(heading_deg: f64, rng: &mut R) -> f64 {
    let shift = if rng.random_bool(0.5) { 180.0 } else { -180.0 };
    normalize_degrees(heading_deg + shift)
}

/// Flies `drone` through `waypoints` at `speed`, sampling every
/// `sample_interval` meters of arc length and at every waypoint. A first
/// waypoint different from the drone's position is flown to first.
///
/// The flight stops early when the battery runs out; the stop point is
/// sampled and `truncated` is set on the returned state.
pub fn fly_polyline(
    drone: DroneState,
    waypoints: &[Point],
    speed: f64,
    sample_interval: f64,
    field: &ConcentrationField,
    sensor: &mut Sensor,
) -> (Vec<Sample>, DroneState) {
    assert!(speed > 0.0, "speed must be positive");
    assert!(sample_interval > 0.0, "sample interval must be positive");

    let mut state = drone;
    let t0 = drone.elapsed;
    let max_arc = drone.battery_remaining() * speed;
    let on_grid_tol = 1e-9 * sample_interval;

    let mut pts = Vec::with_capacity(waypoints.len() + 1);
    pts.push(drone.position);
    match waypoints.first() {
        Some(p) if *p == drone.position => pts.extend_from_slice(&waypoints[1..]),
        _ => pts.extend_from_slice(waypoints),
    }

    let mut samples = Vec::new();
    let mut emit = |p: Point, arc: f64, samples: &mut Vec<Sample>| {
        samples.push(Sample {
            drone_id: drone.id,
            position: p,
            time: t0 + arc / speed,
            value: sensor.measure(field, p),
        });
    };

    emit(pts[0], 0.0, &mut samples);
    let mut last_arc = 0.0;
    let mut next_k: u64 = 1;
    let mut arc_done = 0.0;

    for leg in pts.windows(2) {
        let (a, b) = (leg[0], leg[1]);
        let len = a.distance(b);
        if len == 0.0 {
            continue;
        }
        let leg_end = arc_done + len;
        let stop = leg_end.min(max_arc);
        loop {
            let target = next_k as f64 * sample_interval;
            if target > stop + on_grid_tol {
                break;
            }
            let t = ((target - arc_done) / len).clamp(0.0, 1.0);
            emit(a.lerp(b, t), target, &mut samples);
            last_arc = target;
            next_k += 1;
        }
        state.heading_deg = normalize_degrees((b.y - a.y).atan2(b.x - a.x).to_degrees());

        if leg_end > max_arc {
            let t = ((max_arc - arc_done) / len).clamp(0.0, 1.0);
            let p = a.lerp(b, t);
            if (max_arc - last_arc).abs() > on_grid_tol {
                emit(p, max_arc, &mut samples);
            }
            state.position = p;
            state.elapsed = drone.battery;
            state.truncated = true;
            return (samples, state);
        }

        if (leg_end - last_arc).abs() > on_grid_tol {
            emit(b, leg_end, &mut samples);
            last_arc = leg_end;
        }
        arc_done = leg_end;
    }

    state.position = *pts.last().expect("at least the start point");
    state.elapsed = t0 + arc_done / speed;
    (samples, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plume::{PlumeSource, Stability};
    use proptest::prelude::*;

    fn field() -> ConcentrationField {
        ConcentrationField::at_source_height(PlumeSource {
            position: Point::new(-5.0, 50.0),
            emission_rate: 100.0,
            effective_height: 0.0,
            wind_speed: 2.0,
            wind_direction_deg: 0.0,
            stability: Stability::default(),
        })
        .unwrap()
    }

    fn quiet() -> Sensor {
        SensorModel::default().for_drone(1)
    }

    #[test]
    fn zero_length_polyline_samples_once() {
        let d = DroneState::new(1, Point::new(3.0, 3.0), 100.0);
        let (s, out) = fly_polyline(
            d,
            &[Point::new(3.0, 3.0)],
            10.0,
            1.0,
            &field(),
            &mut quiet(),
        );
        assert_eq!(s.len(), 1);
        assert_eq!(out.elapsed, 0.0);
        let (s, _) = fly_polyline(d, &[], 10.0, 1.0, &field(), &mut quiet());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn hundred_meter_leg_fencepost() {
        let d = DroneState::new(1, Point::new(0.0, 50.0), 1000.0);
        let (s, out) = fly_polyline(
            d,
            &[Point::new(100.0, 50.0)],
            10.0,
            1.0,
            &field(),
            &mut quiet(),
        );
        assert_eq!(s.len(), 101);
        assert_eq!(out.elapsed, 10.0);
        assert_eq!(out.position, Point::new(100.0, 50.0));
        assert!(!out.truncated);
        assert_eq!(s[37].time, 3.7);
    }

    #[test]
    fn noiseless_samples_replay_the_field() {
        let f = field();
        let d = DroneState::new(2, Point::new(0.0, 40.0), 1000.0);
        let wp = [
            Point::new(30.0, 40.0),
            Point::new(30.0, 60.0),
            Point::new(1.3, 60.0),
        ];
        let (s, _) = fly_polyline(d, &wp, 10.0, 0.7, &f, &mut quiet());
        for smp in &s {
            assert_eq!(smp.value, f.concentration_at(smp.position));
            assert_eq!(smp.drone_id, 2);
        }
    }

    #[test]
    fn battery_truncation_samples_stop_point() {
        let d = DroneState::new(1, Point::new(0.0, 0.0), 2.25);
        let (s, out) = fly_polyline(
            d,
            &[Point::new(100.0, 0.0)],
            10.0,
            1.0,
            &field(),
            &mut quiet(),
        );
        assert!(out.truncated);
        assert_eq!(out.elapsed, 2.25);
        assert_eq!(out.battery_remaining(), 0.0);
        // 0..=22 m on the grid plus the stop at 22.5 m
        assert_eq!(s.len(), 24);
        assert_eq!(s.last().unwrap().position.x, 22.5);
        assert_eq!(out.position.x, 22.5);
    }

    #[test]
    fn empty_battery_only_samples_start() {
        let mut d = DroneState::new(1, Point::new(0.0, 0.0), 5.0);
        d.elapsed = 5.0;
        let (s, out) = fly_polyline(
            d,
            &[Point::new(10.0, 0.0)],
            10.0,
            1.0,
            &field(),
            &mut quiet(),
        );
        assert_eq!(s.len(), 1);
        assert!(out.truncated);
        assert_eq!(out.position, Point::new(0.0, 0.0));
    }

    #[test]
    fn bounce_examples() {
        let mut rng = drone_rng(7, 1, RngPurpose::Heading);
        assert_eq!(bounce_heading(90.0, &mut rng), 270.0);
        assert_eq!(bounce_heading(0.0, &mut rng), 180.0);
        for _ in 0..10_000 {
            assert_eq!(bounce_heading(45.0, &mut rng), 225.0);
        }
    }

    #[test]
    fn noise_is_clamped_and_seeded() {
        let model = SensorModel {
            noise_std: 0.5,
            rng_seed: 11,
        };
        let f = field();
        let d = DroneState::new(1, Point::new(0.0, 0.0), 100.0);
        let wp = [Point::new(50.0, 0.0)];
        let (a, _) = fly_polyline(d, &wp, 10.0, 1.0, &f, &mut model.for_drone(1));
        let (b, _) = fly_polyline(d, &wp, 10.0, 1.0, &f, &mut model.for_drone(1));
        let (c, _) = fly_polyline(d, &wp, 10.0, 1.0, &f, &mut model.for_drone(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|s| s.value >= 0.0));
        assert!(a.iter().any(|s| s.value == 0.0));
    }

    #[test]
    fn merge_orders_by_time_then_drone() {
        let mk = |d, t| Sample {
            drone_id: d,
            position: Point::default(),
            time: t,
            value: 0.0,
        };
        let m = merge_samples(&[mk(2, 1.0), mk(2, 0.0)], &[mk(1, 1.0), mk(3, 0.5)]);
        let order: Vec<_> = m.iter().map(|s| (s.drone_id, s.time)).collect();
        assert_eq!(order, vec![(2, 0.0), (3, 0.5), (1, 1.0), (2, 1.0)]);
    }

    fn polyline() -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::vec((0.0f64..80.0, 0.0f64..80.0), 1..6)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn sample_count_matches_arc_length(wp in polyline(), interval in 0.3f64..7.0) {
            let start = wp[0];
            let d = DroneState::new(1, start, 1e9);
            let (s, out) = fly_polyline(d, &wp, 10.0, interval, &field(), &mut quiet());
            let mut arc = 0.0;
            let mut off_grid = 0;
            for leg in wp.windows(2) {
                let len = leg[0].distance(leg[1]);
                if len == 0.0 { continue; }
                arc += len;
                let k = (arc / interval).round();
                if (arc - k * interval).abs() > 1e-9 * interval { off_grid += 1; }
            }
            let expected = (arc / interval + 1e-9).floor() as usize + 1 + off_grid;
            prop_assert_eq!(s.len(), expected);
            prop_assert!((out.elapsed - arc / 10.0).abs() < 1e-9);
        }

        #[test]
        fn battery_is_conserved(wp in polyline(), battery in 0.0f64..20.0) {
            let d = DroneState::new(1, wp[0], battery);
            let (s, out) = fly_polyline(d, &wp, 10.0, 1.0, &field(), &mut quiet());
            prop_assert!((out.elapsed + out.battery_remaining() - battery).abs() < 1e-9);
            prop_assert!(out.battery_remaining() >= 0.0);
            prop_assert!(s.iter().all(|x| x.time <= battery + 1e-9));
            // sample times never go backwards
            prop_assert!(s.windows(2).all(|w| w[0].time <= w[1].time));
        }
    }
}
