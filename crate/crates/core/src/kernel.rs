//! Gaussian kernel extrapolation of sparse point samples onto the box grid.
//!
//! The estimate at a point is the Gaussian-weighted mean of every sample
//! within the cutoff radius. Points with no sample in range get the no-data
//! value 0 and are left out of the coverage mask.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::export::write_matrix;
use crate::flight::Sample;
use crate::geometry::Point;
use crate::grid::{GridError, Region};
use crate::plume::DangerThreshold;

/// Estimate assigned to points with no sample in range.
pub const NO_DATA: f64 = 0.0;

/// Largest accepted radius / sigma ratio; keeps every in-range weight well
/// above the f64 underflow limit.
pub const MAX_RADIUS_FACTOR: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel sigma must be positive (got {0})")]
    Sigma(f64),
    #[error("kernel radius must be positive and at most {MAX_RADIUS_FACTOR} sigma (got {0})")]
    Radius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    sigma: f64,
    radius: f64,
}

impl KernelSpec {
    pub fn new(sigma: f64, radius: f64) -> Result<Self, KernelError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(KernelError::Sigma(sigma));
        }
        if !(radius > 0.0 && radius.is_finite() && radius <= MAX_RADIUS_FACTOR * sigma) {
            return Err(KernelError::Radius(radius));
        }
        Ok(Self { sigma, radius })
    }

    /// Kernel with the usual cutoff `r = 3 sigma`.
    pub fn with_sigma(sigma: f64) -> Result<Self, KernelError> {
        Self::new(sigma, 3.0 * sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Unnormalized weight for a squared distance.
    pub fn weight(&self, dist_sq: f64) -> f64 {
        (-dist_sq / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Weighted mean over `candidates`, which must be visited in ascending sample
/// order so indexed and exhaustive evaluation sum identically.
fn weighted_mean<'a>(
    candidates: impl Iterator<Item = &'a Sample>,
    x: Point,
    kernel: &KernelSpec,
) -> (f64, usize) {
    let r2 = kernel.radius * kernel.radius;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in candidates {
        let d2 = s.position.distance_sq(x);
        if d2 <= r2 {
            let w = kernel.weight(d2);
            num += w * s.value;
            den += w;
            count += 1;
            lo = lo.min(s.value);
            hi = hi.max(s.value);
        }
    }
    if count == 0 {
        return (NO_DATA, 0);
    }
    // rounding can push the quotient an ulp past the sample range
    ((num / den).clamp(lo, hi), count)
}

/// Kernel estimate at `x` and the number of samples that contributed.
pub fn estimate_at(samples: &[Sample], x: Point, kernel: &KernelSpec) -> (f64, usize) {
    weighted_mean(samples.iter(), x, kernel)
}

/// Uniform bucket grid over sample positions with cell size equal to the
/// kernel radius, so a query touches at most 3 x 3 buckets.
pub struct SampleIndex<'a> {
    samples: &'a [Sample],
    origin: Point,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> SampleIndex<'a> {
    pub fn new(samples: &'a [Sample], cell: f64) -> Self {
        assert!(cell > 0.0);
        let (mut min, mut max) = (
            Point::new(f64::INFINITY, f64::INFINITY),
            Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for s in samples {
            min = Point::new(min.x.min(s.position.x), min.y.min(s.position.y));
            max = Point::new(max.x.max(s.position.x), max.y.max(s.position.y));
        }
        if samples.is_empty() {
            min = Point::default();
            max = Point::default();
        }
        let cols = ((max.x - min.x) / cell).floor() as usize + 1;
        let rows = ((max.y - min.y) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, s) in samples.iter().enumerate() {
            let c = (((s.position.x - min.x) / cell).floor() as usize).min(cols - 1);
            let r = (((s.position.y - min.y) / cell).floor() as usize).min(rows - 1);
            buckets[r * cols + c].push(i as u32);
        }
        Self {
            samples,
            origin: min,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Indices of samples whose bucket intersects the square of half-width
    /// `reach` around `x`, ascending.
    pub fn candidates(&self, x: Point, reach: f64) -> Vec<u32> {
        if self.samples.is_empty() {
            return Vec::new();
        }
        let span = |v: f64, o: f64, n: usize| -> Option<(usize, usize)> {
            let lo = ((v - reach - o) / self.cell).floor();
            let hi = ((v + reach - o) / self.cell).floor();
            if hi < 0.0 || lo > (n - 1) as f64 {
                return None;
            }
            Some((lo.max(0.0) as usize, (hi as usize).min(n - 1)))
        };
        let (Some((c0, c1)), Some((r0, r1))) = (
            span(x.x, self.origin.x, self.cols),
            span(x.y, self.origin.y, self.rows),
        ) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.extend_from_slice(&self.buckets[r * self.cols + c]);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn estimate(&self, x: Point, kernel: &KernelSpec) -> (f64, usize) {
        let idx = self.candidates(x, kernel.radius);
        weighted_mean(idx.iter().map(|&i| &self.samples[i as usize]), x, kernel)
    }
}

/// Per-box kernel estimates at box centers plus the coverage mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateGrid {
    region: Region,
    values: Vec<f64>,
    coverage: Vec<bool>,
}

impl EstimateGrid {
    pub fn from_parts(
        region: Region,
        values: Vec<f64>,
        coverage: Vec<bool>,
    ) -> Result<Self, GridError> {
        let n = region.box_count()?;
        assert_eq!(values.len(), n, "one value per box");
        assert_eq!(coverage.len(), n, "one mask entry per box");
        Ok(Self {
            region,
            values,
            coverage,
        })
    }

    /// Grid with no data anywhere.
    pub fn empty(region: Region) -> Result<Self, GridError> {
        let n = region.box_count()?;
        Self::from_parts(region, vec![NO_DATA; n], vec![false; n])
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|c| **c).count()
    }

    /// Index of the largest estimate; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Center of the argmax box.
    pub fn peak_location(&self) -> Option<Point> {
        self.argmax().map(|i| self.region.grid_box(i).center())
    }

    /// Dumps the estimates followed by the 0/1 coverage mask.
    pub fn write<W: Write>(&self, out: W) -> io::Result<()> {
        let (rows, cols) = self
            .region
            .box_shape()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        write_matrix(out, rows, cols, &self.values, Some(&self.coverage))
    }
}

/// Evaluates the kernel estimate at every box center of `region`.
pub fn estimate_grid(
    samples: &[Sample],
    region: &Region,
    kernel: &KernelSpec,
) -> Result<EstimateGrid, GridError> {
    let (rows, cols) = region.box_shape()?;
    let index = SampleIndex::new(samples, kernel.radius);
    let cells: Vec<(f64, bool)> = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (v, n) = index.estimate(region.grid_box(i).center(), kernel);
            (v, n > 0)
        })
        .collect();
    let (values, coverage) = cells.into_iter().unzip();
    EstimateGrid::from_parts(*region, values, coverage)
}

/// Bounding rectangle of every box estimated at or above the threshold,
/// grown by `margin` on each side, snapped outward to whole meters and
/// clipped to the grid's region. `None` when nothing reaches the threshold.
pub fn plume_bounding_box(
    grid: &EstimateGrid,
    threshold: DangerThreshold,
    margin: f64,
) -> Option<Region> {
    let margin = margin.max(0.0);
    let mut extent: Option<(Point, Point)> = None;
    for (i, &v) in grid.values.iter().enumerate() {
        if !threshold.is_unsafe(v) {
            continue;
        }
        let b = grid.region.grid_box(i);
        let (lo, hi) = (b.min_corner, b.max_corner());
        extent = Some(match extent {
            None => (lo, hi),
            Some((a, z)) => (
                Point::new(a.x.min(lo.x), a.y.min(lo.y)),
                Point::new(z.x.max(hi.x), z.y.max(hi.y)),
            ),
        });
    }
    let (lo, hi) = extent?;
    grid.region.snapped_subregion(
        Point::new(lo.x - margin, lo.y - margin),
        Point::new(hi.x + margin, hi.y + margin),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(x: f64, y: f64, value: f64) -> Sample {
        Sample {
            drone_id: 1,
            position: Point::new(x, y),
            time: 0.0,
            value,
        }
    }

    #[test]
    fn sample_at_query_point_returns_its_value() {
        let k = KernelSpec::with_sigma(1.5).unwrap();
        let s = [sample(3.0, 4.0, 7.25)];
        assert_eq!(estimate_at(&s, Point::new(3.0, 4.0), &k), (7.25, 1));
    }

    #[test]
    fn equidistant_pair_averages() {
        let k = KernelSpec::with_sigma(2.0).unwrap();
        let s = [sample(-1.0, 0.0, 3.0), sample(1.0, 0.0, 8.0)];
        let (v, n) = estimate_at(&s, Point::default(), &k);
        assert_eq!(n, 2);
        assert!((v - 5.5).abs() < 1e-15);
    }

    #[test]
    fn three_sample_weighted_average() {
        // weights exp(-d^2 / 8) at d = 1, 2, 4 with sigma = 2; evaluated by hand:
        // w = 0.8824969025845955, 0.6065306597126334, 0.1353352832366127
        // (10 w1 + 20 w2 + 30 w3) / (w1 + w2 + w3) = 15.400278814537703
        let k = KernelSpec::with_sigma(2.0).unwrap();
        let s = [
            sample(1.0, 0.0, 10.0),
            sample(0.0, -2.0, 20.0),
            sample(0.0, 4.0, 30.0),
        ];
        let (v, n) = estimate_at(&s, Point::default(), &k);
        assert_eq!(n, 3);
        assert!((v - 15.400_278_814_537_703).abs() < 1e-12, "{v}");
    }

    #[test]
    fn out_of_range_samples_are_ignored() {
        let k = KernelSpec::new(1.0, 2.0).unwrap();
        let s = [sample(2.5, 0.0, 100.0)];
        assert_eq!(estimate_at(&s, Point::default(), &k), (NO_DATA, 0));
        // exactly on the radius counts
        let s = [sample(2.0, 0.0, 100.0)];
        assert_eq!(estimate_at(&s, Point::default(), &k), (100.0, 1));
    }

    #[test]
    fn kernel_validation() {
        assert_eq!(KernelSpec::new(0.0, 1.0), Err(KernelError::Sigma(0.0)));
        assert_eq!(KernelSpec::new(1.0, -1.0), Err(KernelError::Radius(-1.0)));
        assert!(KernelSpec::new(1.0, 31.0).is_err());
        assert_eq!(KernelSpec::with_sigma(2.0).unwrap().radius(), 6.0);
    }

    #[test]
    fn no_samples_gives_empty_grid() {
        let r = Region::with_size(6.0, 4.0).unwrap();
        let g = estimate_grid(&[], &r, &KernelSpec::with_sigma(1.0).unwrap()).unwrap();
        assert!(g.values().iter().all(|v| *v == NO_DATA));
        assert_eq!(g.covered_count(), 0);
        assert_eq!(g, EstimateGrid::empty(r).unwrap());
    }

    #[test]
    fn bounding_box_of_single_box() {
        let r = Region::with_size(10.0, 5.0).unwrap();
        let mut values = vec![0.0; 50];
        values[2 * 10 + 3] = 4.0;
        let g = EstimateGrid::from_parts(r, values, vec![true; 50]).unwrap();
        let t = DangerThreshold::new(4.0).unwrap();
        let b = plume_bounding_box(&g, t, 0.0).unwrap();
        assert_eq!(b.origin(), Point::new(3.0, 2.0));
        assert_eq!((b.width(), b.height()), (1.0, 1.0));
        let t = DangerThreshold::new(4.5).unwrap();
        assert_eq!(plume_bounding_box(&g, t, 0.0), None);
    }

    #[test]
    fn bounding_box_of_l_shape_with_margin() {
        let r = Region::with_size(10.0, 8.0).unwrap();
        let mut values = vec![0.0; 80];
        // vertical bar at col 1 rows 1..=5, foot along row 1 cols 1..=4
        for row in 1..=5 {
            values[row * 10 + 1] = 1.0;
        }
        for col in 1..=4 {
            values[10 + col] = 1.0;
        }
        let g = EstimateGrid::from_parts(r, values.clone(), vec![true; 80]).unwrap();
        let t = DangerThreshold::new(1.0).unwrap();

        // min/max scan over the marked boxes
        let marked: Vec<(usize, usize)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v >= 1.0)
            .map(|(i, _)| (i / 10, i % 10))
            .collect();
        let c0 = marked.iter().map(|m| m.1).min().unwrap() as f64;
        let c1 = marked.iter().map(|m| m.1).max().unwrap() as f64 + 1.0;
        let r0 = marked.iter().map(|m| m.0).min().unwrap() as f64;
        let r1 = marked.iter().map(|m| m.0).max().unwrap() as f64 + 1.0;

        let b = plume_bounding_box(&g, t, 0.0).unwrap();
        assert_eq!(b.origin(), Point::new(c0, r0));
        assert_eq!(b.max_corner(), Point::new(c1, r1));

        // a 2 m margin clips at the left and bottom edges
        let b = plume_bounding_box(&g, t, 2.0).unwrap();
        assert_eq!(
            b.origin(),
            Point::new((c0 - 2.0).max(0.0), (r0 - 2.0).max(0.0))
        );
        assert_eq!(b.max_corner(), Point::new(c1 + 2.0, (r1 + 2.0).min(8.0)));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        let r = Region::with_size(4.0, 1.0).unwrap();
        let g = EstimateGrid::from_parts(r, vec![1.0, 3.0, 3.0, 2.0], vec![true; 4]).unwrap();
        assert_eq!(g.argmax(), Some(1));
        assert_eq!(g.peak_location(), Some(Point::new(1.5, 0.5)));
    }

    #[test]
    fn estimate_dump_has_mask() {
        let r = Region::with_size(2.0, 1.0).unwrap();
        let g = EstimateGrid::from_parts(r, vec![0.5, 0.0], vec![true, false]).unwrap();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rows,cols,box_size_m\n1,2,1\n0.5,0\n1,0\n"
        );
    }

    fn samples_strategy() -> impl Strategy<Value = Vec<Sample>> {
        proptest::collection::vec((0.0f64..20.0, 0.0f64..10.0, 0.0f64..5.0), 0..40)
            .prop_map(|v| v.into_iter().map(|(x, y, c)| sample(x, y, c)).collect())
    }

    proptest! {
        #[test]
        fn weight_scale_cancels(s in samples_strategy(), qx in 0.0f64..20.0, qy in 0.0f64..10.0, scale in 1e-3f64..1e3) {
            // same average with the 1/sqrt(2 pi sigma^2) prefactor (or any
            // other positive factor) applied to every weight
            let k = KernelSpec::with_sigma(2.0).unwrap();
            let x = Point::new(qx, qy);
            let (plain, n) = estimate_at(&s, x, &k);
            let mut num = 0.0;
            let mut den = 0.0;
            for smp in &s {
                let d2 = smp.position.distance_sq(x);
                if d2 <= k.radius() * k.radius() {
                    let w = scale * k.weight(d2);
                    num += w * smp.value;
                    den += w;
                }
            }
            if n > 0 {
                prop_assert!((num / den - plain).abs() <= 1e-12 * plain.abs().max(1.0));
            }
        }

        #[test]
        fn adding_a_sample_never_shrinks_coverage(s in samples_strategy(), extra in (0.0f64..20.0, 0.0f64..10.0)) {
            let r = Region::with_size(20.0, 10.0).unwrap();
            let k = KernelSpec::with_sigma(1.0).unwrap();
            let before = estimate_grid(&s, &r, &k).unwrap();
            let mut more = s.clone();
            more.push(sample(extra.0, extra.1, 1.0));
            let after = estimate_grid(&more, &r, &k).unwrap();
            for (b, a) in before.coverage().iter().zip(after.coverage()) {
                prop_assert!(!*b || *a);
            }
        }

        #[test]
        fn wider_kernel_grows_uniform_plume(s in samples_strategy(), s1 in 0.5f64..3.0, extra in 0.1f64..3.0) {
            // every sample carries the same above-threshold value, so any
            // covered box is unsafe and coverage grows with the radius
            let s: Vec<Sample> = s.into_iter().map(|mut x| { x.value = 2.0; x }).collect();
            let r = Region::with_size(20.0, 10.0).unwrap();
            let t = DangerThreshold::new(1.0).unwrap();
            let count = |sigma: f64| {
                let g = estimate_grid(&s, &r, &KernelSpec::with_sigma(sigma).unwrap()).unwrap();
                g.values().iter().filter(|v| t.is_unsafe(**v)).count()
            };
            prop_assert!(count(s1 + extra) >= count(s1));
        }
    }
}
