//! Depth-first branch and bound over lane assignments and lane orders.
//!
//! Routes are built one drone at a time: the current drone either takes
//! another lane (in either direction) or is closed and the next drone
//! starts. Drones are interchangeable, so drone `k` must own the lowest
//! lane still unassigned when it started; that removes the `N!` relabelings
//! of every plan from the search.

use super::{solve_heuristic, tour_length, LaneVisit, RoutePlan, VrpError, VrpInstance};
use crate::grid::{LaneGraph, DEPOT};

/// Largest graph (depot included) the exact solver accepts by default.
pub const DEFAULT_EXACT_NODE_CAP: usize = 13;

struct Search<'a> {
    g: &'a LaneGraph,
    n_drones: usize,
    range: f64,
    lane_len: Vec<f64>,
    best: f64,
    best_tours: Option<Vec<Vec<LaneVisit>>>,
    tours: Vec<Vec<LaneVisit>>,
    lengths: Vec<f64>,
}

impl Search<'_> {
    fn lower_bound(&self, drone: usize, remaining: u32) -> f64 {
        let rest: f64 = iter_bits(remaining).map(|l| self.lane_len[l]).sum();
        let longest = iter_bits(remaining)
            .map(|l| self.lane_len[l])
            .fold(0.0, f64::max);
        let closed_max = self.lengths[..drone].iter().copied().fold(0.0, f64::max);
        let open = (self.n_drones - drone) as f64;
        let open_total: f64 = self.lengths[drone] + rest;
        let open_min = if drone + 1 < self.n_drones {
            0.0
        } else {
            self.lengths[drone]
        };
        closed_max
            .max(self.lengths[drone])
            .max(open_total / open)
            .max(open_min + longest)
    }

    fn dfs(&mut self, drone: usize, remaining: u32, owner_lane: usize) {
        if remaining == 0 {
            let makespan = self.lengths.iter().copied().fold(0.0, f64::max);
            if makespan < self.best {
                self.best = makespan;
                self.best_tours = Some(self.tours.clone());
            }
            return;
        }
        if self.lower_bound(drone, remaining) >= self.best {
            return;
        }

        let at = self.tours[drone].last().map_or(DEPOT, |v| v.exit(self.g));
        for lane in iter_bits(remaining) {
            for forward in [true, false] {
                let visit = LaneVisit { lane, forward };
                let added = self.g.distance(at, visit.entry(self.g)) + self.lane_len[lane];
                let len = self.lengths[drone] + added;
                if len > self.range || len >= self.best {
                    continue;
                }
                let prev = self.lengths[drone];
                self.lengths[drone] = len;
                self.tours[drone].push(visit);
                self.dfs(drone, remaining & !(1 << lane), owner_lane);
                self.tours[drone].pop();
                self.lengths[drone] = prev;
            }
        }

        // close this drone and hand the rest to the next one
        let owns_anchor = self.tours[drone].iter().any(|v| v.lane == owner_lane);
        if drone + 1 < self.n_drones && owns_anchor {
            let anchor = remaining.trailing_zeros() as usize;
            self.dfs(drone + 1, remaining, anchor);
        }
    }
}

fn iter_bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |b| mask & (1 << b) != 0)
}

/// Provably minimal-makespan plan for graphs of at most `node_cap` nodes.
pub fn solve_exact(instance: &VrpInstance, node_cap: usize) -> Result<RoutePlan, VrpError> {
    instance.check()?;
    let g = &instance.graph;
    let m = g.node_count();
    if m > node_cap || g.lane_count() > 31 {
        return Err(VrpError::InstanceTooLarge {
            nodes: m,
            cap: node_cap.min(63),
        });
    }
    let n_lanes = g.lane_count();
    let n_drones = instance.n_drones.min(n_lanes.max(1));
    let range = instance.range();
    let lane_len: Vec<f64> = (0..n_lanes).map(|l| g.lane_length(l)).collect();

    let mut search = Search {
        g,
        n_drones,
        range,
        lane_len,
        best: f64::INFINITY,
        best_tours: None,
        tours: vec![Vec::new(); n_drones],
        lengths: vec![0.0; n_drones],
    };

    // a feasible heuristic plan makes the first incumbent
    if let Ok(seed) = solve_heuristic(instance) {
        let tours = seed_tours(&seed, g, n_drones);
        let makespan = tours.iter().map(|t| tour_length(g, t)).fold(0.0, f64::max);
        if makespan <= range {
            // keep the incumbent only as a bound; ties are re-found below
            search.best = makespan * (1.0 + 1e-12);
        }
    }

    let all: u32 = if n_lanes == 0 {
        0
    } else {
        (1u32 << n_lanes) - 1
    };
    search.dfs(0, all, 0);

    let mut tours = match search.best_tours {
        Some(t) => t,
        None => {
            return Err(VrpError::Infeasible {
                battery: instance.battery,
            })
        }
    };
    tours.resize(instance.n_drones, Vec::new());
    Ok(RoutePlan::from_tours(&tours, g, instance.speed))
}

fn seed_tours(plan: &RoutePlan, g: &LaneGraph, n_drones: usize) -> Vec<Vec<LaneVisit>> {
    let mut tours: Vec<Vec<LaneVisit>> = plan
        .routes
        .iter()
        .filter(|r| r.len() > 1)
        .map(|r| {
            r[1..]
                .chunks(2)
                .map(|p| {
                    let lane = g.lane_of(p[0]).expect("lane node");
                    LaneVisit {
                        lane,
                        forward: p[0] == g.lane_nodes(lane).0,
                    }
                })
                .collect()
        })
        .collect();
    tours.resize(n_drones.max(tours.len()), Vec::new());
    tours
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::grid::{build_lane_graph, Region};
    use crate::vrp::validate;

    fn instance(w: f64, h: f64, lane: f64, depot: Point, n: usize, battery: f64) -> VrpInstance {
        let g = build_lane_graph(&Region::with_size(w, h).unwrap(), lane, depot).unwrap();
        VrpInstance::new(g, n, 10.0, battery).unwrap()
    }

    #[test]
    fn one_drone_two_symmetric_lanes() {
        // lanes at x = 5 and x = 15, depot between them on the bottom edge
        let inst = instance(20.0, 30.0, 10.0, Point::new(10.0, 0.0), 1, 1e6);
        let plan = solve_exact(&inst, DEFAULT_EXACT_NODE_CAP).unwrap();
        assert!(validate(&plan, &inst).is_empty());
        // nearer (bottom) endpoint first: 5 + 30 + 10 + 30 = 75 m
        assert!((plan.makespan - 7.5).abs() < 1e-12);
        assert!(plan.routes[0][1] == 2 || plan.routes[0][1] == 4);

        // every ordering of the four nodes that keeps pairs together
        let g = &inst.graph;
        let mut best = f64::INFINITY;
        for order in [
            [2, 3, 4, 5],
            [2, 3, 5, 4],
            [3, 2, 4, 5],
            [3, 2, 5, 4],
            [4, 5, 2, 3],
            [4, 5, 3, 2],
            [5, 4, 2, 3],
            [5, 4, 3, 2],
        ] {
            let mut route = vec![1];
            route.extend(order);
            best = best.min(super::super::route_time(&route, g, 10.0).unwrap());
        }
        assert_eq!(plan.makespan, best);
    }

    #[test]
    fn two_drones_split_two_lanes() {
        let inst = instance(20.0, 30.0, 10.0, Point::new(10.0, 0.0), 2, 1e6);
        let plan = solve_exact(&inst, DEFAULT_EXACT_NODE_CAP).unwrap();
        assert!(validate(&plan, &inst).is_empty());
        // one lane each: 5 m approach + 30 m lane
        assert!((plan.makespan - 3.5).abs() < 1e-12);
        assert!(plan.routes.iter().all(|r| r.len() == 3));
    }

    #[test]
    fn battery_below_one_lane_is_infeasible() {
        let inst = instance(20.0, 30.0, 10.0, Point::new(10.0, 0.0), 2, 2.9);
        assert_eq!(
            solve_exact(&inst, DEFAULT_EXACT_NODE_CAP),
            Err(VrpError::Infeasible { battery: 2.9 })
        );
    }

    #[test]
    fn cap_is_enforced() {
        let inst = instance(14.0, 10.0, 2.0, Point::new(7.0, 0.0), 2, 1e6);
        assert_eq!(inst.graph.node_count(), 15);
        assert_eq!(
            solve_exact(&inst, DEFAULT_EXACT_NODE_CAP),
            Err(VrpError::InstanceTooLarge { nodes: 15, cap: 13 })
        );
    }

    #[test]
    fn more_drones_than_lanes_leaves_idle_routes() {
        let inst = instance(20.0, 30.0, 10.0, Point::new(10.0, 0.0), 4, 1e6);
        let plan = solve_exact(&inst, DEFAULT_EXACT_NODE_CAP).unwrap();
        assert_eq!(plan.routes.len(), 4);
        assert!(validate(&plan, &inst).is_empty());
        assert_eq!(plan.routes.iter().filter(|r| r.len() == 1).count(), 2);
    }
}
