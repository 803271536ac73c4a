//! Safe/unsafe classification of box grids and the FN/FP misclassification
//! scores used to grade a survey.

use std::fmt;

use thiserror::Error;

use crate::grid::{GridError, Region};
use crate::kernel::EstimateGrid;
use crate::plume::DangerThreshold;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("label grids cover different regions or box counts")]
    Mismatch,
    #[error("ground truth has no unsafe boxes; the error rates are undefined")]
    NoPlume,
    #[error("label count {got} does not match the {expected} boxes of the region")]
    LabelCount { got: usize, expected: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One binary label per 1 m box, row-major; `true` means unsafe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    region: RegionKey,
    labels: Vec<bool>,
}

// Region compared bitwise so LabelGrid can be Eq.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RegionKey([u64; 4]);

impl From<&Region> for RegionKey {
    fn from(r: &Region) -> Self {
        let o = r.origin();
        RegionKey([
            o.x.to_bits(),
            o.y.to_bits(),
            r.width().to_bits(),
            r.height().to_bits(),
        ])
    }
}

impl LabelGrid {
    pub fn new(region: Region, labels: Vec<bool>) -> Result<Self, MetricsError> {
        let expected = region.box_count()?;
        if labels.len() != expected {
            return Err(MetricsError::LabelCount {
                got: labels.len(),
                expected,
            });
        }
        Ok(Self {
            region: RegionKey::from(&region),
            labels,
        })
    }

    /// All-safe grid over `region`.
    pub fn all_safe(region: &Region) -> Result<Self, MetricsError> {
        Self::new(*region, vec![false; region.box_count()?])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, index: usize) -> bool {
        self.labels[index]
    }

    pub fn set(&mut self, index: usize, unsafe_: bool) {
        self.labels[index] = unsafe_;
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    pub fn same_layout(&self, other: &LabelGrid) -> bool {
        self.region == other.region && self.labels.len() == other.labels.len()
    }
}

/// Labels every box whose estimate reaches the threshold (inclusive).
pub fn classify(grid: &EstimateGrid, threshold: DangerThreshold) -> LabelGrid {
    let labels = grid
        .values()
        .iter()
        .map(|c| threshold.is_unsafe(*c))
        .collect();
    LabelGrid::new(*grid.region(), labels).expect("estimate grid matches its region")
}

/// FN/FP percentages of an estimated labeling against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Share of truly unsafe boxes labeled safe, percent.
    pub false_negative: f64,
    /// Share of truly safe boxes labeled unsafe, percent.
    pub false_positive: f64,
    pub total: f64,
    /// |Omega_P|: truly unsafe boxes.
    pub omega_p: usize,
    /// |Omega_N|: truly safe boxes.
    pub omega_n: usize,
    /// Whether any estimated unsafe box overlaps the true plume.
    pub plume_acquired: bool,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "FN,FP,total,acquired,omega_p,omega_n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.false_negative,
            self.false_positive,
            self.total,
            u8::from(self.plume_acquired),
            self.omega_p,
            self.omega_n
        )
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FN {:.2}% FP {:.3}% total {:.2}% ({})",
            self.false_negative,
            self.false_positive,
            self.total,
            if self.plume_acquired {
                "acquired"
            } else {
                "missed"
            }
        )
    }
}

/// Scores `estimate` against `truth`.
pub fn score(truth: &LabelGrid, estimate: &LabelGrid) -> Result<ErrorReport, MetricsError> {
    if !truth.same_layout(estimate) {
        return Err(MetricsError::Mismatch);
    }
    let mut omega_p = 0usize;
    let mut omega_n = 0usize;
    let mut missed = 0usize;
    let mut spurious = 0usize;
    for (&y, &y_hat) in truth.labels.iter().zip(&estimate.labels) {
        match (y, y_hat) {
            (true, hit) => {
                omega_p += 1;
                missed += usize::from(!hit);
            }
            (false, hit) => {
                omega_n += 1;
                spurious += usize::from(hit);
            }
        }
    }
    if omega_p == 0 {
        return Err(MetricsError::NoPlume);
    }
    let false_negative = 100.0 * missed as f64 / omega_p as f64;
    let false_positive = if omega_n == 0 {
        0.0
    } else {
        100.0 * spurious as f64 / omega_n as f64
    };
    Ok(ErrorReport {
        false_negative,
        false_positive,
        total: false_negative + false_positive,
        omega_p,
        omega_n,
        plume_acquired: missed < omega_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::kernel::EstimateGrid;
    use proptest::prelude::*;

    fn region(w: f64, h: f64) -> Region {
        Region::with_size(w, h).unwrap()
    }

    fn grid(r: Region, labels: &[bool]) -> LabelGrid {
        LabelGrid::new(r, labels.to_vec()).unwrap()
    }

    #[test]
    fn estimate_at_threshold_is_unsafe() {
        let r = region(3.0, 1.0);
        let est = EstimateGrid::from_parts(r, vec![0.5, 0.4999, 2.0], vec![true; 3]).unwrap();
        let t = DangerThreshold::new(0.5).unwrap();
        assert_eq!(classify(&est, t).labels(), &[true, false, true]);
    }

    #[test]
    fn zero_grid_is_all_safe() {
        let r = region(4.0, 4.0);
        let est = EstimateGrid::empty(r).unwrap();
        let t = DangerThreshold::new(1e-9).unwrap();
        assert_eq!(classify(&est, t).positive_count(), 0);
    }

    #[test]
    fn perfect_estimate_scores_zero() {
        let r = region(2.0, 2.0);
        let t = grid(r, &[true, false, false, true]);
        let e = score(&t, &t).unwrap();
        assert_eq!(
            (e.false_negative, e.false_positive, e.total),
            (0.0, 0.0, 0.0)
        );
        assert!(e.plume_acquired);
    }

    #[test]
    fn all_safe_estimate_misses_everything() {
        let r = region(2.0, 2.0);
        let t = grid(r, &[true, false, false, true]);
        let e = score(&t, &LabelGrid::all_safe(&r).unwrap()).unwrap();
        assert_eq!(
            (e.false_negative, e.false_positive, e.total),
            (100.0, 0.0, 100.0)
        );
        assert!(!e.plume_acquired);
    }

    #[test]
    fn counting_example() {
        // 10 unsafe + 90 safe boxes; flip 2 unsafe and 9 safe
        let r = region(10.0, 10.0);
        let truth: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let mut est = truth.clone();
        for i in [0, 1] {
            est[i] = false;
        }
        for i in 50..59 {
            est[i] = true;
        }
        let e = score(&grid(r, &truth), &grid(r, &est)).unwrap();
        assert_eq!(e.false_negative, 20.0);
        assert_eq!(e.false_positive, 10.0);
        assert_eq!(e.total, 30.0);
        assert_eq!((e.omega_p, e.omega_n), (10, 90));
        assert_eq!(e.csv_row(), "20,10,30,1,10,90");
    }

    #[test]
    fn mismatched_and_degenerate_inputs() {
        let a = LabelGrid::all_safe(&region(2.0, 2.0)).unwrap();
        let b = LabelGrid::all_safe(&region(4.0, 1.0)).unwrap();
        assert_eq!(score(&a, &b).unwrap_err(), MetricsError::Mismatch);
        assert_eq!(score(&a, &a).unwrap_err(), MetricsError::NoPlume);
        let shifted = Region::new(Point::new(1.0, 0.0), 2.0, 2.0).unwrap();
        let c = LabelGrid::all_safe(&shifted).unwrap();
        assert_eq!(score(&a, &c).unwrap_err(), MetricsError::Mismatch);
        assert!(matches!(
            LabelGrid::new(region(2.0, 2.0), vec![true; 3]),
            Err(MetricsError::LabelCount {
                got: 3,
                expected: 4
            })
        ));
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
        (4usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn single_flip_moves_one_rate_by_one_box((truth, est) in labels_strategy(), pick in any::<prop::sample::Index>()) {
            let n = truth.len();
            prop_assume!(truth.iter().any(|l| *l));
            let r = region(n as f64, 1.0);
            let t = grid(r, &truth);
            let before = score(&t, &grid(r, &est)).unwrap();
            let i = pick.index(n);
            let mut flipped = est.clone();
            flipped[i] = !flipped[i];
            let after = score(&t, &grid(r, &flipped)).unwrap();
            if truth[i] {
                let step = 100.0 / before.omega_p as f64;
                prop_assert!(((after.false_negative - before.false_negative).abs() - step).abs() < 1e-9);
                prop_assert_eq!(after.false_positive, before.false_positive);
            } else {
                let step = 100.0 / before.omega_n as f64;
                prop_assert!(((after.false_positive - before.false_positive).abs() - step).abs() < 1e-9);
                prop_assert_eq!(after.false_negative, before.false_negative);
            }
        }

        #[test]
        fn score_ignores_box_order((truth, est) in labels_strategy(), shift in 0usize..100) {
            prop_assume!(truth.iter().any(|l| *l));
            let n = truth.len();
            let r = region(n as f64, 1.0);
            let rot = |v: &Vec<bool>| -> Vec<bool> {
                let mut v = v.clone();
                v.rotate_left(shift % n);
                v.reverse();
                v
            };
            let a = score(&grid(r, &truth), &grid(r, &est)).unwrap();
            let b = score(&grid(r, &rot(&truth)), &grid(r, &rot(&est))).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn total_is_bounded_and_zero_only_when_identical((truth, est) in labels_strategy()) {
            prop_assume!(truth.iter().any(|l| *l));
            let r = region(truth.len() as f64, 1.0);
            let e = score(&grid(r, &truth), &grid(r, &est)).unwrap();
            prop_assert!((0.0..=100.0).contains(&e.false_negative));
            prop_assert!((0.0..=100.0).contains(&e.false_positive));
            prop_assert!((0.0..=200.0).contains(&e.total));
            prop_assert_eq!(e.total, e.false_negative + e.false_positive);
            prop_assert_eq!(e.total == 0.0, truth == est);
        }
    }
}
