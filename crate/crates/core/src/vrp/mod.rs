//! Min-max multi-drone lane routing.
//!
//! Every drone leaves the depot, visits an ordered set of lanes (entering
//! at either endpoint and leaving by the other) and ends in the field. The
//! objective is the makespan, the longest single-drone flight time.

mod exact;
mod heuristic;

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::geometry::Point;
use crate::grid::{LaneGraph, NodeId, DEPOT};

pub use exact::{solve_exact, DEFAULT_EXACT_NODE_CAP};
pub use heuristic::solve_heuristic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VrpError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("no plan fits the battery of {battery} s")]
    Infeasible { battery: f64 },
    #[error("instance has {nodes} nodes; the exact solver is capped at {cap}")]
    InstanceTooLarge { nodes: usize, cap: usize },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

/// A routing problem over a lane graph.
#[derive(Debug, Clone, PartialEq)]
pub struct VrpInstance {
    pub graph: LaneGraph,
    pub n_drones: usize,
    /// Cruise speed v, m/s.
    pub speed: f64,
    /// Endurance T_b, s. `f64::INFINITY` means unconstrained.
    pub battery: f64,
}

impl VrpInstance {
    pub fn new(
        graph: LaneGraph,
        n_drones: usize,
        speed: f64,
        battery: f64,
    ) -> Result<Self, VrpError> {
        let inst = Self {
            graph,
            n_drones,
            speed,
            battery,
        };
        inst.check()?;
        Ok(inst)
    }

    fn check(&self) -> Result<(), VrpError> {
        if self.n_drones == 0 {
            return Err(VrpError::InvalidInstance("need at least one drone".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(VrpError::InvalidInstance(format!(
                "speed must be positive, got {}",
                self.speed
            )));
        }
        if !(self.battery > 0.0) {
            return Err(VrpError::InvalidInstance(format!(
                "battery must be positive, got {}",
                self.battery
            )));
        }
        Ok(())
    }

    /// Longest path length a drone can fly, m.
    pub(crate) fn range(&self) -> f64 {
        self.battery * self.speed
    }
}

/// One lane of a route: which lane and whether it is flown from its
/// lower-id endpoint (`forward`) or the other way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LaneVisit {
    pub lane: usize,
    pub forward: bool,
}

impl LaneVisit {
    pub fn entry(self, g: &LaneGraph) -> NodeId {
        let (a, b) = g.lane_nodes(self.lane);
        if self.forward {
            a
        } else {
            b
        }
    }

    pub fn exit(self, g: &LaneGraph) -> NodeId {
        let (a, b) = g.lane_nodes(self.lane);
        if self.forward {
            b
        } else {
            a
        }
    }

    pub fn flipped(self) -> Self {
        Self {
            lane: self.lane,
            forward: !self.forward,
        }
    }
}

/// Path length of a lane sequence starting at the depot, m.
pub(crate) fn tour_length(g: &LaneGraph, tour: &[LaneVisit]) -> f64 {
    let mut at = DEPOT;
    let mut len = 0.0;
    for v in tour {
        len += g.distance(at, v.entry(g)) + g.lane_length(v.lane);
        at = v.exit(g);
    }
    len
}

pub(crate) fn tour_nodes(g: &LaneGraph, tour: &[LaneVisit]) -> Vec<NodeId> {
    let mut route = Vec::with_capacity(1 + 2 * tour.len());
    route.push(DEPOT);
    for v in tour {
        route.push(v.entry(g));
        route.push(v.exit(g));
    }
    route
}

/// Per-drone routes with their flight times.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    /// Node ids per drone, each starting at the depot.
    pub routes: Vec<Vec<NodeId>>,
    /// t_k, s.
    pub flight_times: Vec<f64>,
    /// U = max t_k, s.
    pub makespan: f64,
}

impl RoutePlan {
    /// Builds a plan from node routes, computing every flight time.
    pub fn from_routes(
        routes: Vec<Vec<NodeId>>,
        graph: &LaneGraph,
        speed: f64,
    ) -> Result<Self, VrpError> {
        let flight_times = routes
            .iter()
            .map(|r| route_time(r, graph, speed))
            .collect::<Result<Vec<_>, _>>()?;
        let makespan = flight_times.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            routes,
            flight_times,
            makespan,
        })
    }

    pub(crate) fn from_tours(tours: &[Vec<LaneVisit>], graph: &LaneGraph, speed: f64) -> Self {
        let routes = tours.iter().map(|t| tour_nodes(graph, t)).collect();
        Self::from_routes(routes, graph, speed).expect("tours only reference graph nodes")
    }

    /// Waypoint polyline of drone `k`'s route.
    pub fn waypoints(&self, k: usize, graph: &LaneGraph) -> Vec<Point> {
        self.routes[k]
            .iter()
            .map(|id| graph.node(*id).expect("validated route"))
            .collect()
    }
}

/// Flight time of a node route: summed leg lengths over `speed`.
pub fn route_time(route: &[NodeId], graph: &LaneGraph, speed: f64) -> Result<f64, VrpError> {
    if let Some(bad) = route.iter().find(|id| !graph.contains(**id)) {
        return Err(VrpError::UnknownNode(*bad));
    }
    let length: f64 = route.windows(2).map(|w| graph.distance(w[0], w[1])).sum();
    Ok(length / speed)
}

/// A broken routing constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RouteCount {
        expected: usize,
        got: usize,
    },
    MissingDepotStart {
        drone: usize,
    },
    UnknownNode {
        drone: usize,
        node: NodeId,
    },
    DuplicateVisit {
        node: NodeId,
    },
    Unvisited {
        node: NodeId,
    },
    LanePairBroken {
        drone: usize,
        node: NodeId,
    },
    FlightTimeMismatch {
        drone: usize,
        stored: f64,
        actual: f64,
    },
    BatteryExceeded {
        drone: usize,
        time: f64,
    },
    MakespanMismatch {
        stored: f64,
        actual: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RouteCount { expected, got } => {
                write!(f, "route count: expected {expected}, got {got}")
            }
            Violation::MissingDepotStart { drone } => {
                write!(f, "route of drone {drone} does not start at the depot")
            }
            Violation::UnknownNode { drone, node } => {
                write!(f, "unknown node {node} in route of drone {drone}")
            }
            Violation::DuplicateVisit { node } => write!(f, "duplicate visit of node {node}"),
            Violation::Unvisited { node } => write!(f, "node {node} is never visited"),
            Violation::LanePairBroken { drone, node } => {
                write!(
                    f,
                    "lane pair broken at node {node} in route of drone {drone}"
                )
            }
            Violation::FlightTimeMismatch {
                drone,
                stored,
                actual,
            } => write!(
                f,
                "drone {drone} flight time {stored} != recomputed {actual}"
            ),
            Violation::BatteryExceeded { drone, time } => {
                write!(f, "drone {drone} flies {time} s, beyond the battery")
            }
            Violation::MakespanMismatch { stored, actual } => {
                write!(f, "makespan {stored} != max flight time {actual}")
            }
        }
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

/// Checks every routing constraint; an empty list means the plan is valid.
pub fn validate(plan: &RoutePlan, instance: &VrpInstance) -> Vec<Violation> {
    let g = &instance.graph;
    let mut out = Vec::new();
    if plan.routes.len() != instance.n_drones {
        out.push(Violation::RouteCount {
            expected: instance.n_drones,
            got: plan.routes.len(),
        });
    }
    let mut seen = vec![0usize; g.node_count() + 1];
    for (k, route) in plan.routes.iter().enumerate() {
        if route.first() != Some(&DEPOT) {
            out.push(Violation::MissingDepotStart { drone: k });
        }
        let body = route.get(1..).unwrap_or(&[]);
        let mut valid_ids = true;
        for &id in body {
            if !g.contains(id) {
                out.push(Violation::UnknownNode { drone: k, node: id });
                valid_ids = false;
                continue;
            }
            seen[id] += 1;
            if seen[id] == 2 || id == DEPOT {
                out.push(Violation::DuplicateVisit { node: id });
            }
        }
        if !valid_ids {
            continue;
        }
        // lanes come as back-to-back endpoint pairs
        for (i, pair) in body.chunks(2).enumerate() {
            let ok = pair.len() == 2 && pair[0] != DEPOT && g.partner(pair[0]) == Some(pair[1]);
            if !ok {
                out.push(Violation::LanePairBroken {
                    drone: k,
                    node: body[2 * i],
                });
                break;
            }
        }
        let actual = route_time(route, g, instance.speed).expect("ids checked");
        match plan.flight_times.get(k) {
            Some(&stored) if rel_close(stored, actual) => {}
            Some(&stored) => out.push(Violation::FlightTimeMismatch {
                drone: k,
                stored,
                actual,
            }),
            None => out.push(Violation::FlightTimeMismatch {
                drone: k,
                stored: f64::NAN,
                actual,
            }),
        }
        if actual > instance.battery * (1.0 + 1e-12) {
            out.push(Violation::BatteryExceeded {
                drone: k,
                time: actual,
            });
        }
    }
    for id in 2..=g.node_count() {
        if seen[id] == 0 {
            out.push(Violation::Unvisited { node: id });
        }
    }
    let max_t = plan.flight_times.iter().copied().fold(0.0, f64::max);
    if !rel_close(plan.makespan, max_t) {
        out.push(Violation::MakespanMismatch {
            stored: plan.makespan,
            actual: max_t,
        });
    }
    out
}

/// Exact search for small graphs, heuristic above `exact_cap` nodes.
pub fn solve(instance: &VrpInstance, exact_cap: usize) -> Result<RoutePlan, VrpError> {
    if instance.graph.node_count() <= exact_cap {
        solve_exact(instance, exact_cap)
    } else {
        solve_heuristic(instance)
    }
}

const PLAN_HEADER: &str = "n_drones,speed,battery_s";
const INSTANCE_HEADER: &str = "n_drones,speed,battery_s,lane_distance";

/// Writes a plan: the `n_drones,speed,battery_s` header, its values, then
/// one comma-separated node-id line per drone.
pub fn write_plan<W: Write>(
    mut out: W,
    plan: &RoutePlan,
    instance: &VrpInstance,
) -> io::Result<()> {
    writeln!(out, "{PLAN_HEADER}")?;
    writeln!(
        out,
        "{},{},{}",
        instance.n_drones, instance.speed, instance.battery
    )?;
    for r in &plan.routes {
        let ids: Vec<String> = r.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{}", ids.join(","))?;
    }
    out.flush()
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn parse_fields<T: std::str::FromStr>(line: &str, what: &str) -> io::Result<Vec<T>> {
    line.trim()
        .split(',')
        .map(|f| f.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| invalid(format!("bad {what} line: {line}")))
}

/// Reads a plan written by [`write_plan`], recomputing flight times on
/// `graph`. Returns the plan with `(n_drones, speed, battery)`.
pub fn read_plan<R: BufRead>(
    input: R,
    graph: &LaneGraph,
) -> io::Result<(RoutePlan, (usize, f64, f64))> {
    let mut lines = input.lines();
    if lines.next().transpose()?.as_deref().map(str::trim) != Some(PLAN_HEADER) {
        return Err(invalid("missing plan header"));
    }
    let vals = lines
        .next()
        .transpose()?
        .ok_or_else(|| invalid("missing header values"))?;
    let vals: Vec<f64> = parse_fields(&vals, "header")?;
    if vals.len() != 3 || vals[0].fract() != 0.0 || vals[0] < 1.0 {
        return Err(invalid("plan header needs n_drones,speed,battery_s"));
    }
    let mut routes = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        routes.push(parse_fields::<NodeId>(&line, "route")?);
    }
    let plan =
        RoutePlan::from_routes(routes, graph, vals[1]).map_err(|e| invalid(e.to_string()))?;
    Ok((plan, (vals[0] as usize, vals[1], vals[2])))
}

/// Writes an instance: header values followed by `id,x,y` node lines.
pub fn write_instance<W: Write>(mut out: W, instance: &VrpInstance) -> io::Result<()> {
    writeln!(out, "{INSTANCE_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{}",
        instance.n_drones,
        instance.speed,
        instance.battery,
        instance.graph.lane_distance()
    )?;
    writeln!(out, "id,x,y")?;
    for (id, p) in instance.graph.nodes() {
        writeln!(out, "{id},{},{}", p.x, p.y)?;
    }
    out.flush()
}

pub fn read_instance<R: BufRead>(input: R) -> io::Result<VrpInstance> {
    let mut lines = input.lines();
    if lines.next().transpose()?.as_deref().map(str::trim) != Some(INSTANCE_HEADER) {
        return Err(invalid("missing instance header"));
    }
    let vals = lines
        .next()
        .transpose()?
        .ok_or_else(|| invalid("missing header values"))?;
    let vals: Vec<f64> = parse_fields(&vals, "header")?;
    if vals.len() != 4 || vals[0].fract() != 0.0 || vals[0] < 1.0 {
        return Err(invalid("instance header needs four values"));
    }
    if lines.next().transpose()?.as_deref().map(str::trim) != Some("id,x,y") {
        return Err(invalid("missing node table header"));
    }
    let mut nodes = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = parse_fields(&line, "node")?;
        if f.len() != 3 || f[0] as usize != nodes.len() + 1 {
            return Err(invalid(format!(
                "node lines must be id,x,y in id order: {line}"
            )));
        }
        nodes.push(Point::new(f[1], f[2]));
    }
    let graph = LaneGraph::from_nodes(nodes, vals[3]).map_err(|e| invalid(e.to_string()))?;
    VrpInstance::new(graph, vals[0] as usize, vals[1], vals[2]).map_err(|e| invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_lane_graph, Region};

    fn graph(w: f64, h: f64, lane: f64, depot: Point) -> LaneGraph {
        build_lane_graph(&Region::with_size(w, h).unwrap(), lane, depot).unwrap()
    }

    #[test]
    fn depot_only_route_takes_no_time() {
        let g = graph(4.0, 10.0, 2.0, Point::new(2.0, 0.0));
        assert_eq!(route_time(&[DEPOT], &g, 10.0), Ok(0.0));
    }

    #[test]
    fn single_lane_from_its_endpoint() {
        let g = graph(2.0, 100.0, 2.0, Point::new(1.0, 0.0));
        assert_eq!(route_time(&[1, 2, 3], &g, 10.0), Ok(10.0));
        assert_eq!(
            route_time(&[1, 2, 9], &g, 10.0),
            Err(VrpError::UnknownNode(9))
        );
    }

    #[test]
    fn instance_validation() {
        let g = graph(4.0, 10.0, 2.0, Point::new(2.0, 0.0));
        assert!(VrpInstance::new(g.clone(), 0, 10.0, 100.0).is_err());
        assert!(VrpInstance::new(g.clone(), 1, 0.0, 100.0).is_err());
        assert!(VrpInstance::new(g.clone(), 1, 10.0, 0.0).is_err());
        assert!(VrpInstance::new(g, 1, 10.0, f64::INFINITY).is_ok());
    }

    fn small_instance(n: usize) -> VrpInstance {
        let g = graph(8.0, 20.0, 2.0, Point::new(4.0, 0.0));
        VrpInstance::new(g, n, 5.0, 1000.0).unwrap()
    }

    #[test]
    fn duplicate_visit_is_reported() {
        let inst = small_instance(1);
        let plan = RoutePlan::from_routes(
            vec![vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 2, 3]],
            &inst.graph,
            inst.speed,
        )
        .unwrap();
        let v = validate(&plan, &inst);
        assert!(v.contains(&Violation::DuplicateVisit { node: 2 }), "{v:?}");
        assert!(v.iter().any(|x| x.to_string().contains("duplicate visit")));
    }

    #[test]
    fn split_lane_pair_is_reported() {
        let inst = small_instance(2);
        let plan = RoutePlan::from_routes(
            vec![vec![1, 2, 4, 5], vec![1, 3, 6, 7, 8, 9]],
            &inst.graph,
            inst.speed,
        )
        .unwrap();
        let v = validate(&plan, &inst);
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::LanePairBroken { .. })));
        assert!(v.iter().any(|x| x.to_string().contains("lane pair broken")));
    }

    #[test]
    fn other_violations() {
        let inst = small_instance(2);
        let g = &inst.graph;
        let mut plan =
            RoutePlan::from_routes(vec![vec![1, 2, 3, 4, 5], vec![1, 6, 7]], g, inst.speed)
                .unwrap();
        assert_eq!(
            validate(&plan, &inst),
            vec![
                Violation::Unvisited { node: 8 },
                Violation::Unvisited { node: 9 }
            ]
        );
        plan.flight_times[0] += 1.0;
        assert!(validate(&plan, &inst)
            .iter()
            .any(|x| matches!(x, Violation::FlightTimeMismatch { drone: 0, .. })));

        let plan =
            RoutePlan::from_routes(vec![vec![2, 3, 4, 5, 6, 7, 8, 9]], g, inst.speed).unwrap();
        let v = validate(&plan, &inst);
        assert!(v.contains(&Violation::MissingDepotStart { drone: 0 }));
        assert!(v.contains(&Violation::RouteCount {
            expected: 2,
            got: 1
        }));

        let tight = VrpInstance::new(g.clone(), 1, 5.0, 1.0).unwrap();
        let plan = RoutePlan::from_routes(vec![vec![1, 2, 3, 4, 5, 6, 7, 8, 9]], g, 5.0).unwrap();
        assert!(validate(&plan, &tight)
            .iter()
            .any(|x| matches!(x, Violation::BatteryExceeded { .. })));
    }

    #[test]
    fn plan_and_instance_text_round_trip() {
        let inst = small_instance(2);
        let plan = solve_exact(&inst, DEFAULT_EXACT_NODE_CAP).unwrap();
        let mut buf = Vec::new();
        write_plan(&mut buf, &plan, &inst).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n_drones,speed,battery_s\n2,5,1000\n1,"));
        let (back, hdr) = read_plan(&buf[..], &inst.graph).unwrap();
        assert_eq!(back, plan);
        assert_eq!(hdr, (2, 5.0, 1000.0));

        let mut buf = Vec::new();
        write_instance(&mut buf, &inst).unwrap();
        assert_eq!(read_instance(&buf[..]).unwrap(), inst);
    }
}
