//! Search-space decomposition: the 1 m scoring boxes and the lane graph that
//! drives coverage routing.

use thiserror::Error;

use crate::geometry::Point;

/// Identifier of a lane-graph node. Ids are 1-based; id 1 is the depot.
pub type NodeId = usize;

/// Node id of the depot (ground control station).
pub const DEPOT: NodeId = 1;

/// Edge length of a scoring box, in meters.
pub const BOX_SIZE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("region dimensions must be positive and finite (got {width} x {height})")]
    BadDimensions { width: f64, height: f64 },
    #[error("region {width} x {height} is not a whole number of meters")]
    NotWholeMeters { width: f64, height: f64 },
    #[error("point {0} lies outside the region")]
    OutOfRegion(Point),
    #[error("lane distance must be positive and finite (got {0})")]
    NonPositiveLaneDistance(f64),
    #[error("lane distance {lane} exceeds region width {width}")]
    LaneDistanceTooLarge { lane: f64, width: f64 },
    #[error("depot position must be finite")]
    BadDepot,
    #[error("lane graph needs a depot plus an even number of lane endpoints (got {0} nodes)")]
    BadNodeCount(usize),
}

/// Axis-aligned rectangular search space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    origin: Point,
    width: f64,
    height: f64,
}

impl Region {
    pub fn new(origin: Point, width: f64, height: f64) -> Result<Self, GridError> {
        let ok = origin.is_finite()
            && width.is_finite()
            && height.is_finite()
            && width > 0.0
            && height > 0.0;
        if !ok {
            return Err(GridError::BadDimensions { width, height });
        }
        Ok(Self {
            origin,
            width,
            height,
        })
    }

    /// Region with its min corner at the origin of the plane.
    pub fn with_size(width: f64, height: f64) -> Result<Self, GridError> {
        Self::new(Point::default(), width, height)
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn max_corner(&self) -> Point {
        Point::new(self.origin.x + self.width, self.origin.y + self.height)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.origin.x + 0.5 * self.width,
            self.origin.y + 0.5 * self.height,
        )
    }

    /// Closed containment test (edges count as inside).
    pub fn contains(&self, p: Point) -> bool {
        let max = self.max_corner();
        p.x >= self.origin.x && p.x <= max.x && p.y >= self.origin.y && p.y <= max.y
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.contains(other.origin) && self.contains(other.max_corner())
    }

    /// Nearest point of the region to `p`.
    pub fn clamp(&self, p: Point) -> Point {
        let max = self.max_corner();
        Point::new(
            p.x.clamp(self.origin.x, max.x),
            p.y.clamp(self.origin.y, max.y),
        )
    }

    pub fn is_whole_meters(&self) -> bool {
        self.width.fract() == 0.0 && self.height.fract() == 0.0
    }

    fn require_whole(&self) -> Result<(), GridError> {
        if self.is_whole_meters() {
            Ok(())
        } else {
            Err(GridError::NotWholeMeters {
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Shape of the box decomposition as `(rows, cols)`; rows run along y.
    pub fn box_shape(&self) -> Result<(usize, usize), GridError> {
        self.require_whole()?;
        Ok((self.height as usize, self.width as usize))
    }

    pub fn box_count(&self) -> Result<usize, GridError> {
        self.box_shape().map(|(r, c)| r * c)
    }

    /// Index of the box containing `p`. Coordinates are floored, so a point
    /// on an interior box edge belongs to the box on its +x / +y side; the
    /// far region edges fold back into the last row and column.
    pub fn box_of(&self, p: Point) -> Result<usize, GridError> {
        let (rows, cols) = self.box_shape()?;
        if !p.is_finite() || !self.contains(p) {
            return Err(GridError::OutOfRegion(p));
        }
        let col = ((p.x - self.origin.x).floor() as usize).min(cols - 1);
        let row = ((p.y - self.origin.y).floor() as usize).min(rows - 1);
        Ok(row * cols + col)
    }

    /// The box with the given row-major index. Panics if the region is not
    /// whole-meter or the index is out of range.
    pub fn grid_box(&self, index: usize) -> GridBox {
        let (rows, cols) = self.box_shape().expect("region must be whole meters");
        assert!(index < rows * cols, "box index {index} out of range");
        let (row, col) = (index / cols, index % cols);
        GridBox {
            index,
            row,
            col,
            min_corner: Point::new(self.origin.x + col as f64, self.origin.y + row as f64),
        }
    }

    /// All boxes in row-major order.
    pub fn boxes(&self) -> Result<impl Iterator<Item = GridBox> + '_, GridError> {
        let n = self.box_count()?;
        Ok((0..n).map(move |i| self.grid_box(i)))
    }

    /// Smallest whole-meter region (relative to this region's origin) that
    /// covers `[min, max]`, clipped to this region.
    pub fn snapped_subregion(&self, min: Point, max: Point) -> Option<Region> {
        let o = self.origin;
        let lim = self.max_corner();
        let x0 = (o.x + (min.x - o.x).floor()).max(o.x);
        let y0 = (o.y + (min.y - o.y).floor()).max(o.y);
        let x1 = (o.x + (max.x - o.x).ceil()).min(lim.x);
        let y1 = (o.y + (max.y - o.y).ceil()).min(lim.y);
        Region::new(Point::new(x0, y0), x1 - x0, y1 - y0).ok()
    }
}

/// One 1 x 1 m scoring box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBox {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub min_corner: Point,
}

impl GridBox {
    pub fn center(&self) -> Point {
        Point::new(
            self.min_corner.x + 0.5 * BOX_SIZE_M,
            self.min_corner.y + 0.5 * BOX_SIZE_M,
        )
    }

    pub fn max_corner(&self) -> Point {
        Point::new(
            self.min_corner.x + BOX_SIZE_M,
            self.min_corner.y + BOX_SIZE_M,
        )
    }
}

/// Depot plus lane-endpoint nodes with their pairwise Euclidean distances.
///
/// Lane `k` (0-based) owns nodes `2 + 2k` and `3 + 2k`; the pair must be
/// traversed back to back by a single drone.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneGraph {
    nodes: Vec<Point>,
    dist: Vec<f64>,
    lane_distance: f64,
}

impl LaneGraph {
    /// Builds a graph from explicit node positions. `nodes[0]` is the depot
    /// and the rest are consecutive lane endpoint pairs.
    pub fn from_nodes(nodes: Vec<Point>, lane_distance: f64) -> Result<Self, GridError> {
        if nodes.is_empty() || nodes.len() % 2 == 0 {
            return Err(GridError::BadNodeCount(nodes.len()));
        }
        if !nodes[0].is_finite() {
            return Err(GridError::BadDepot);
        }
        if let Some(p) = nodes.iter().find(|p| !p.is_finite()) {
            return Err(GridError::OutOfRegion(*p));
        }
        let m = nodes.len();
        let mut dist = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let d = nodes[i].distance(nodes[j]);
                dist[i * m + j] = d;
                dist[j * m + i] = d;
            }
        }
        Ok(Self {
            nodes,
            dist,
            lane_distance,
        })
    }

    /// Total number of nodes `M`, depot included.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn lane_count(&self) -> usize {
        (self.nodes.len() - 1) / 2
    }

    pub fn lane_distance(&self) -> f64 {
        self.lane_distance
    }

    pub fn depot(&self) -> Point {
        self.nodes[0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id >= 1 && id <= self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<Point> {
        id.checked_sub(1).and_then(|i| self.nodes.get(i).copied())
    }

    /// Nodes as `(id, position)` in id order.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Point)> + '_ {
        self.nodes.iter().enumerate().map(|(i, p)| (i + 1, *p))
    }

    /// Euclidean distance between two valid node ids.
    ///
    /// # Panics
    /// If either id is not in the graph.
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        assert!(self.contains(a) && self.contains(b), "unknown node id");
        self.dist[(a - 1) * self.nodes.len() + (b - 1)]
    }

    /// The two endpoint ids of lane `k` (0-based).
    pub fn lane_nodes(&self, lane: usize) -> (NodeId, NodeId) {
        (2 + 2 * lane, 3 + 2 * lane)
    }

    pub fn lane_pairs(&self) -> Vec<(NodeId, NodeId)> {
        (0..self.lane_count()).map(|k| self.lane_nodes(k)).collect()
    }

    /// Lane index owning a non-depot node.
    pub fn lane_of(&self, id: NodeId) -> Option<usize> {
        (id >= 2 && self.contains(id)).then(|| (id - 2) / 2)
    }

    /// The opposite endpoint of the lane containing `id`.
    pub fn partner(&self, id: NodeId) -> Option<NodeId> {
        self.lane_of(id)
            .map(|_| if id % 2 == 0 { id + 1 } else { id - 1 })
    }

    pub fn lane_length(&self, lane: usize) -> f64 {
        let (a, b) = self.lane_nodes(lane);
        self.distance(a, b)
    }
}

/// Decomposes `region` into lanes parallel to its y axis, `lane_distance`
/// apart, the first one `lane_distance / 2` in from the left edge. Each lane
/// spans the full region height and contributes its two endpoints.
pub fn build_lane_graph(
    region: &Region,
    lane_distance: f64,
    depot: Point,
) -> Result<LaneGraph, GridError> {
    if !(lane_distance.is_finite() && lane_distance > 0.0) {
        return Err(GridError::NonPositiveLaneDistance(lane_distance));
    }
    if lane_distance > region.width() {
        return Err(GridError::LaneDistanceTooLarge {
            lane: lane_distance,
            width: region.width(),
        });
    }
    if !depot.is_finite() {
        return Err(GridError::BadDepot);
    }
    // tolerate widths like 0.3 / 0.1 that land just under an integer
    let lanes = ((region.width() / lane_distance) + 1e-9).floor() as usize;
    let o = region.origin();
    let top = o.y + region.height();
    let mut nodes = Vec::with_capacity(1 + 2 * lanes);
    nodes.push(depot);
    for k in 0..lanes {
        let x = o.x + lane_distance * (k as f64 + 0.5);
        nodes.push(Point::new(x, o.y));
        nodes.push(Point::new(x, top));
    }
    LaneGraph::from_nodes(nodes, lane_distance)
}
