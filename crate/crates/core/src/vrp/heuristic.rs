//! Construction plus local search for graphs too large for exact search:
//! longest-lane-first assignment to the least loaded drone, nearest-lane
//! ordering out of the depot, 2-opt and lane relocation on each drone's
//! sequence, then lane moves and swaps off the longest route.

use super::{tour_length, LaneVisit, RoutePlan, VrpError, VrpInstance};
use crate::grid::{LaneGraph, NodeId, DEPOT};

/// Balances lane length across drones, orders each drone's lanes greedily
/// from the depot and polishes every route with 2-opt.
pub fn solve_heuristic(instance: &VrpInstance) -> Result<RoutePlan, VrpError> {
    instance.check()?;
    let g = &instance.graph;
    let range = instance.range();
    let n_lanes = g.lane_count();
    if (0..n_lanes).any(|l| g.lane_length(l) > range) {
        return Err(VrpError::Infeasible {
            battery: instance.battery,
        });
    }

    let buckets = assign_lanes(g, instance.n_drones);
    let mut tours: Vec<Vec<LaneVisit>> = buckets
        .iter()
        .map(|lanes| {
            let mut tour = nearest_lane_order(g, lanes);
            polish(g, &mut tour);
            tour
        })
        .collect();
    rebalance(g, &mut tours);

    let plan = RoutePlan::from_tours(&tours, g, instance.speed);
    if tours.iter().any(|t| tour_length(g, t) > range) {
        return Err(VrpError::Infeasible {
            battery: instance.battery,
        });
    }
    Ok(plan)
}

/// Longest-processing-time assignment: lanes in decreasing length (ties by
/// index) each go to the drone with the least lane length so far (ties to
/// the lowest drone index).
fn assign_lanes(g: &LaneGraph, n_drones: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..g.lane_count()).collect();
    order.sort_by(|a, b| {
        g.lane_length(*b)
            .total_cmp(&g.lane_length(*a))
            .then(a.cmp(b))
    });
    let mut load = vec![0.0_f64; n_drones];
    let mut buckets = vec![Vec::new(); n_drones];
    for lane in order {
        let k = (0..n_drones)
            .min_by(|a, b| load[*a].total_cmp(&load[*b]).then(a.cmp(b)))
            .expect("at least one drone");
        load[k] += g.lane_length(lane);
        buckets[k].push(lane);
    }
    buckets
}

/// Starting from the depot, repeatedly flies to the closest unvisited lane
/// endpoint and along that lane.
fn nearest_lane_order(g: &LaneGraph, lanes: &[usize]) -> Vec<LaneVisit> {
    let mut left: Vec<usize> = lanes.to_vec();
    left.sort_unstable();
    let mut at: NodeId = DEPOT;
    let mut tour = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let mut best: Option<(f64, usize, LaneVisit)> = None;
        for (i, &lane) in left.iter().enumerate() {
            for forward in [true, false] {
                let v = LaneVisit { lane, forward };
                let d = g.distance(at, v.entry(g));
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, v));
                }
            }
        }
        let (_, i, v) = best.expect("non-empty");
        left.remove(i);
        at = v.exit(g);
        tour.push(v);
    }
    tour
}

/// Alternates 2-opt and single-lane relocation until neither helps.
fn polish(g: &LaneGraph, tour: &mut Vec<LaneVisit>) {
    loop {
        two_opt(g, tour);
        if !relocate(g, tour) {
            break;
        }
    }
}

/// Moves one lane to another position or direction if that shortens the
/// tour. Returns whether anything moved.
fn relocate(g: &LaneGraph, tour: &mut Vec<LaneVisit>) -> bool {
    let n = tour.len();
    if n < 2 {
        return false;
    }
    let base = tour_length(g, tour);
    let eps = 1e-12 * base.max(1.0);
    let mut improved = false;
    for i in 0..n {
        let v = tour.remove(i);
        let (pos, visit, len) = best_insertion(g, tour, v.lane);
        if len < base - eps {
            tour.insert(pos, visit);
            improved = true;
            break;
        }
        tour.insert(i, v);
    }
    improved
}

/// Cheapest position and direction to insert `lane` into `tour`, with the
/// resulting tour length.
fn best_insertion(
    g: &LaneGraph,
    tour: &mut Vec<LaneVisit>,
    lane: usize,
) -> (usize, LaneVisit, f64) {
    let mut best: Option<(usize, LaneVisit, f64)> = None;
    for pos in 0..=tour.len() {
        for forward in [true, false] {
            let v = LaneVisit { lane, forward };
            tour.insert(pos, v);
            let len = tour_length(g, tour);
            tour.remove(pos);
            if best.is_none_or(|(_, _, b)| len < b) {
                best = Some((pos, v, len));
            }
        }
    }
    best.expect("at least one position")
}

/// Lane moves and swaps out of the longest route, accepted only when both
/// touched routes end up shorter than it was.
fn rebalance(g: &LaneGraph, tours: &mut [Vec<LaneVisit>]) {
    let n = tours.len();
    if n < 2 {
        return;
    }
    let lengths = |tours: &[Vec<LaneVisit>]| -> Vec<f64> {
        tours.iter().map(|t| tour_length(g, t)).collect()
    };
    let scale = lengths(tours).iter().copied().fold(1.0, f64::max);
    let eps = 1e-12 * scale;
    // each accepted step lowers (makespan, number of routes at it); the cap
    // is a guard against float ties
    for _ in 0..10_000 {
        let len = lengths(tours);
        let k = (0..n)
            .max_by(|a, b| len[*a].total_cmp(&len[*b]).then(b.cmp(a)))
            .expect("at least one drone");
        let target = len[k] - eps;
        match try_move(g, tours, k, target).or_else(|| try_swap(g, tours, k, target)) {
            Some((a, b, m)) => {
                tours[k] = a;
                tours[m] = b;
            }
            None => break,
        }
    }
}

type Pair = (Vec<LaneVisit>, Vec<LaneVisit>, usize);

fn try_move(g: &LaneGraph, tours: &[Vec<LaneVisit>], k: usize, target: f64) -> Option<Pair> {
    for i in 0..tours[k].len() {
        let mut from = tours[k].clone();
        let lane = from.remove(i).lane;
        polish(g, &mut from);
        if tour_length(g, &from) >= target {
            continue;
        }
        for m in (0..tours.len()).filter(|&m| m != k) {
            let mut to = tours[m].clone();
            let (pos, v, _) = best_insertion(g, &mut to, lane);
            to.insert(pos, v);
            polish(g, &mut to);
            if tour_length(g, &to) < target {
                return Some((from, to, m));
            }
        }
    }
    None
}

fn try_swap(g: &LaneGraph, tours: &[Vec<LaneVisit>], k: usize, target: f64) -> Option<Pair> {
    for i in 0..tours[k].len() {
        for m in (0..tours.len()).filter(|&m| m != k) {
            for j in 0..tours[m].len() {
                let mut from = tours[k].clone();
                let mut to = tours[m].clone();
                let a = from.remove(i).lane;
                let b = to.remove(j).lane;
                let (p, v, _) = best_insertion(g, &mut from, b);
                from.insert(p, v);
                polish(g, &mut from);
                if tour_length(g, &from) >= target {
                    continue;
                }
                let (p, v, _) = best_insertion(g, &mut to, a);
                to.insert(p, v);
                polish(g, &mut to);
                if tour_length(g, &to) < target {
                    return Some((from, to, m));
                }
            }
        }
    }
    None
}

/// First-improvement 2-opt on an open lane sequence. Reversing lanes
/// `i..=j` also flips each of them, so only the two connecting legs change.
fn two_opt(g: &LaneGraph, tour: &mut [LaneVisit]) {
    let n = tour.len();
    if n < 1 {
        return;
    }
    let scale = tour_length(g, tour).max(1.0);
    let eps = 1e-12 * scale;
    loop {
        let mut improved = false;
        for i in 0..n {
            let before = if i == 0 { DEPOT } else { tour[i - 1].exit(g) };
            for j in i..n {
                let first_in = tour[i].entry(g);
                let last_out = tour[j].exit(g);
                let mut delta = g.distance(before, last_out) - g.distance(before, first_in);
                if j + 1 < n {
                    let after = tour[j + 1].entry(g);
                    delta += g.distance(first_in, after) - g.distance(last_out, after);
                }
                if delta < -eps {
                    tour[i..=j].reverse();
                    for v in &mut tour[i..=j] {
                        *v = v.flipped();
                    }
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}
