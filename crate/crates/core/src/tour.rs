//! Visiting order under a precedence chain: cheapest insertion of free nodes
//! into the anchor chain, then 2-opt restricted to precedence-safe reversals
//! interleaved with single-node relocation.

use crate::geom::Vec3;

const MAX_PASSES: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct TourProblem {
    pub points: Vec<Vec3>,
    /// Node ids whose relative order is fixed.
    pub anchors: Vec<usize>,
    pub start: usize,
    /// Optional node pinned to the end of the tour.
    pub end: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TourSolution {
    pub order: Vec<usize>,
    pub total_cost: f64,
}

fn cost(points: &[Vec3], a: usize, b: usize) -> f64 {
    (points[a] - points[b]).norm()
}

/// Sum of consecutive Euclidean distances.
pub fn tour_cost(order: &[usize], points: &[Vec3]) -> f64 {
    order.windows(2).map(|w| cost(points, w[0], w[1])).sum()
}

/// True when `order` visits every node once, starts at `start`, ends at `end`
/// if pinned, and keeps the anchors in order.
pub fn is_feasible(order: &[usize], problem: &TourProblem) -> bool {
    let n = problem.points.len();
    if order.len() != n || order.first() != Some(&problem.start) {
        return false;
    }
    if let Some(e) = problem.end {
        if order.last() != Some(&e) {
            return false;
        }
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in order.iter().enumerate() {
        if v >= n || pos[v] != usize::MAX {
            return false;
        }
        pos[v] = i;
    }
    problem.anchors.windows(2).all(|w| pos[w[0]] < pos[w[1]])
}

fn anchors_ordered(order: &[usize], anchors: &[usize], n: usize) -> bool {
    let mut pos = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    anchors.windows(2).all(|w| pos[w[0]] < pos[w[1]])
}

pub fn reorder(problem: &TourProblem) -> TourSolution {
    let pts = &problem.points;
    let n = pts.len();
    let mut order = vec![problem.start];
    let mut placed = vec![false; n];
    placed[problem.start] = true;
    for &a in &problem.anchors {
        if !placed[a] {
            order.push(a);
            placed[a] = true;
        }
    }
    let tail_fixed = match problem.end {
        Some(e) if !placed[e] => {
            order.push(e);
            placed[e] = true;
            true
        }
        Some(e) => order.last() == Some(&e),
        None => false,
    };
    let mut is_anchor = vec![false; n];
    for &a in &problem.anchors {
        is_anchor[a] = true;
    }
    // cheapest insertion
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for v in 0..n {
            if placed[v] {
                continue;
            }
            let last = order.len();
            for pos in 1..=last {
                if tail_fixed && pos == last {
                    continue;
                }
                let prev = order[pos - 1];
                let delta = if pos < last {
                    let next = order[pos];
                    cost(pts, prev, v) + cost(pts, v, next) - cost(pts, prev, next)
                } else {
                    cost(pts, prev, v)
                };
                if best.is_none_or(|b| delta < b.0) {
                    best = Some((delta, v, pos));
                }
            }
        }
        let Some((_, v, pos)) = best else { break };
        order.insert(pos, v);
        placed[v] = true;
    }
    // 2-opt over segments holding at most one anchor
    let len = order.len();
    let hi_limit = if tail_fixed { len - 1 } else { len };
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for i in 1..hi_limit {
            let mut anchors_in = 0;
            for j in i..hi_limit {
                if is_anchor[order[j]] {
                    anchors_in += 1;
                }
                if anchors_in > 1 {
                    break;
                }
                if j == i {
                    continue;
                }
                let a = order[i - 1];
                let b = order[i];
                let c = order[j];
                let old_in = cost(pts, a, b);
                let new_in = cost(pts, a, c);
                let (old_out, new_out) = if j + 1 < len {
                    let d = order[j + 1];
                    (cost(pts, c, d), cost(pts, b, d))
                } else {
                    (0.0, 0.0)
                };
                if new_in + new_out < old_in + old_out - 1e-12 {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
        // relocate single nodes
        for i in 1..hi_limit {
            let v = order[i];
            let prev = order[i - 1];
            let gain = if i + 1 < len {
                cost(pts, prev, v) + cost(pts, v, order[i + 1]) - cost(pts, prev, order[i + 1])
            } else {
                cost(pts, prev, v)
            };
            let mut rest = order.clone();
            rest.remove(i);
            let mut best: Option<(f64, usize)> = None;
            for pos in 1..=rest.len() {
                if pos == i || (tail_fixed && pos == rest.len()) {
                    continue;
                }
                let a = rest[pos - 1];
                let delta = if pos < rest.len() {
                    cost(pts, a, v) + cost(pts, v, rest[pos]) - cost(pts, a, rest[pos])
                } else {
                    cost(pts, a, v)
                };
                if delta < gain - 1e-12 && best.is_none_or(|b| delta < b.0) {
                    if is_anchor[v] {
                        let mut trial = rest.clone();
                        trial.insert(pos, v);
                        if !anchors_ordered(&trial, &problem.anchors, n) {
                            continue;
                        }
                    }
                    best = Some((delta, pos));
                }
            }
            if let Some((_, pos)) = best {
                rest.insert(pos, v);
                order = rest;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let total_cost = tour_cost(&order, pts);
    TourSolution { order, total_cost }
}
