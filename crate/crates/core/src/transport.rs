//! Exact transportation-cost norm on the grid graph.
//!
//! `‖μ‖_TC` is the cost of an optimal uncapacitated unit-cost flow that
//! ships the positive part of `μ` to the negative part. The solver is a
//! primal-dual successive-shortest-path method on the implicit grid graph:
//! Dijkstra over reduced costs updates the vertex labels, then a blocking
//! flow saturates the zero-reduced-cost subgraph. The final labels are
//! 1-Lipschitz and tight on every edge that carries flow, which certifies
//! optimality through Kantorovich duality with zero gap.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::dyadic::Dyadic;
use crate::grid::{GridShape, VertexSet};
use crate::measure::{integrate_int, DyadicMeasure, MeasureError};

/// Largest grid accepted by [`tc_norm_oracle`].
pub const ORACLE_MAX_VERTICES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("transport problems need total mass 0, got {0}")]
    NotBalanced(Dyadic),
    #[error("instance with {vertices} vertices exceeds the limit of {limit}")]
    TooLarge { vertices: usize, limit: usize },
    #[error("function is not 1-Lipschitz on edge ({u}, {v}): |f(u) − f(v)| = {gap}")]
    NotLipschitz { u: usize, v: usize, gap: i64 },
    #[error("expected a one-dimensional grid, got d={0}")]
    WrongDimension(u32),
    #[error("operands live on different grids")]
    ShapeMismatch,
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A measure of total mass exactly zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransportProblem {
    measure: DyadicMeasure,
}

impl TransportProblem {
    pub fn new(measure: DyadicMeasure) -> Result<Self, TransportError> {
        if !measure.is_balanced() {
            return Err(TransportError::NotBalanced(measure.total_mass()));
        }
        Ok(TransportProblem { measure })
    }

    pub fn measure(&self) -> &DyadicMeasure {
        &self.measure
    }

    pub fn shape(&self) -> GridShape {
        self.measure.shape()
    }
}

/// Optimal flow with the dual potentials certifying it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowSolution {
    shape: GridShape,
    /// Net flow from `v` to `v + e_a`, at slot `v·d + a`, in weight units.
    flow: Vec<i64>,
    potentials: Vec<i64>,
    cost: Dyadic,
    scale_exp: i32,
}

impl FlowSolution {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Integer potentials, normalized so the minimum is 0. They drop by
    /// exactly one along every edge carrying flow.
    pub fn potentials(&self) -> &[i64] {
        &self.potentials
    }

    pub fn cost(&self) -> Dyadic {
        self.cost
    }

    /// Net flow from `u` to neighbour `v` in weight units (mass is this
    /// times `2^{−e}`); zero if they are not adjacent.
    pub fn flow(&self, u: usize, v: usize) -> i64 {
        let d = self.shape.d();
        for a in 0..d {
            let s = self.shape.stride(a);
            if v == u + s && self.shape.coord(u, a) + 1 == self.shape.coord(v, a) {
                return self.flow[u * d as usize + a as usize];
            }
            if u == v + s && self.shape.coord(v, a) + 1 == self.shape.coord(u, a) {
                return -self.flow[v * d as usize + a as usize];
            }
        }
        0
    }

    /// `(u, v, f)` for every edge with positive flow `f` from `u` to `v`.
    pub fn flows(&self) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::new();
        self.shape.for_each_edge(|u, v, a| {
            let f = self.flow[u * self.shape.d() as usize + a as usize];
            if f > 0 {
                out.push((u, v, f));
            } else if f < 0 {
                out.push((v, u, -f));
            }
        });
        out
    }

    /// `Σ_v potential(v)·μ(v)`.
    pub fn dual_value(&self, m: &DyadicMeasure) -> Dyadic {
        integrate_int(m, &self.potentials).expect("potentials are bounded by the diameter")
    }

    pub fn witness(&self) -> WitnessFunction {
        WitnessFunction {
            shape: self.shape,
            values: self.potentials.clone(),
            lip_checked: true,
        }
    }

    /// Checks conservation, 1-Lipschitz potentials, complementary slackness
    /// and zero duality gap, all exactly.
    pub fn verify(&self, m: &DyadicMeasure) -> Result<(), TransportError> {
        if m.shape() != self.shape {
            return Err(TransportError::ShapeMismatch);
        }
        let fail = |msg: String| Err(TransportError::Certificate(msg));
        let d = self.shape.d() as usize;
        let mut net_out = vec![0i128; self.shape.len()];
        let mut problem = None;
        let mut primal = 0i128;
        self.shape.for_each_edge(|u, v, a| {
            let f = self.flow[u * d + a as usize];
            net_out[u] += f as i128;
            net_out[v] -= f as i128;
            primal += (f as i128).abs();
            let drop = self.potentials[u] - self.potentials[v];
            if problem.is_none() {
                if drop.abs() > 1 {
                    problem = Some(format!("potential gap {drop} on edge ({u}, {v})"));
                } else if (f > 0 && drop != 1) || (f < 0 && drop != -1) {
                    problem = Some(format!("edge ({u}, {v}) carries flow {f} but drop is {drop}"));
                }
            }
        });
        if let Some(p) = problem {
            return fail(p);
        }
        // the solution's weights are on the same exponent as the measure
        let rescale = m.scale_exp() - self.scale_exp;
        for (v, (&out, &w)) in net_out.iter().zip(m.weights()).enumerate() {
            if Dyadic::new(out, self.scale_exp) != Dyadic::new(w as i128, self.scale_exp + rescale) {
                return fail(format!("conservation fails at vertex {v}"));
            }
        }
        let primal = Dyadic::new(primal, self.scale_exp);
        if primal != self.cost {
            return fail(format!("reported cost {} differs from flow cost {primal}", self.cost));
        }
        let dual = self.dual_value(m);
        if dual != primal {
            return fail(format!("duality gap: primal {primal}, dual {dual}"));
        }
        Ok(())
    }
}

/// Exact `‖μ‖_TC` together with an optimality certificate.
pub fn tc_norm(prob: &TransportProblem) -> (Dyadic, FlowSolution) {
    let sol = Solver::new(prob.measure()).run();
    (sol.cost, sol)
}

const INF_CAP: i64 = i64::MAX;

/// Residual arc in the implicit grid graph.
#[derive(Clone, Copy)]
struct Arc {
    to: usize,
    slot: usize,
    /// +1 when moving along `+e_a`, −1 otherwise.
    dir: i64,
    cost: i64,
    cap: i64,
}

struct Solver {
    shape: GridShape,
    scale_exp: i32,
    excess: Vec<i64>,
    flow: Vec<i64>,
    label: Vec<i64>,
}

impl Solver {
    fn new(m: &DyadicMeasure) -> Self {
        let shape = m.shape();
        Solver {
            shape,
            scale_exp: m.scale_exp(),
            excess: m.weights().to_vec(),
            flow: vec![0; shape.len() * shape.d() as usize],
            label: vec![0; shape.len()],
        }
    }

    #[inline]
    fn for_each_arc(&self, u: usize, mut f: impl FnMut(Arc)) {
        let shape = &self.shape;
        let d = shape.d() as usize;
        let top = (1u32 << shape.n()) - 1;
        for a in 0..shape.d() {
            let c = shape.coord(u, a);
            let s = shape.stride(a);
            if c > 0 {
                let slot = (u - s) * d + a as usize;
                f(arc(u - s, slot, -1, self.flow[slot]));
            }
            if c < top {
                let slot = u * d + a as usize;
                f(arc(u + s, slot, 1, self.flow[slot]));
            }
        }
    }

    #[inline]
    fn reduced(&self, u: usize, a: &Arc) -> i64 {
        a.cost + self.label[u] - self.label[a.to]
    }

    fn run(mut self) -> FlowSolution {
        let n = self.shape.len();
        let mut dist = vec![i64::MAX; n];
        let mut level = vec![u32::MAX; n];
        let mut cursor = vec![0u8; n];
        loop {
            if self.excess.iter().all(|&x| x <= 0) {
                break;
            }
            let reach = self.dijkstra(&mut dist);
            for (l, &dv) in self.label.iter_mut().zip(&dist) {
                *l += dv.min(reach);
            }
            self.blocking_flow(&mut level, &mut cursor);
        }
        self.finish()
    }

    /// Multi-source Dijkstra from all vertices with positive excess; returns
    /// the distance to the nearest deficit vertex. Ties pop in increasing
    /// index order.
    fn dijkstra(&self, dist: &mut [i64]) -> i64 {
        dist.fill(i64::MAX);
        let mut heap = BinaryHeap::new();
        for (v, &x) in self.excess.iter().enumerate() {
            if x > 0 {
                dist[v] = 0;
                heap.push(Reverse((0i64, v)));
            }
        }
        let mut done = vec![false; dist.len()];
        while let Some(Reverse((du, u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if self.excess[u] < 0 {
                // everything not yet settled is at least this far
                for (v, dv) in dist.iter_mut().enumerate() {
                    if !done[v] {
                        *dv = du;
                    }
                }
                return du;
            }
            self.for_each_arc(u, |a| {
                let nd = du + self.reduced(u, &a);
                if nd < dist[a.to] {
                    dist[a.to] = nd;
                    heap.push(Reverse((nd, a.to)));
                }
            });
        }
        unreachable!("balanced problem with positive excess has a deficit vertex")
    }

    fn admissible(&self, u: usize, a: &Arc) -> bool {
        a.cap > 0 && self.reduced(u, a) == 0
    }

    /// Dinic-style blocking flow on the zero-reduced-cost residual graph.
    fn blocking_flow(&mut self, level: &mut [u32], cursor: &mut [u8]) {
        let n = self.shape.len();
        level.fill(u32::MAX);
        cursor.fill(0);
        let mut queue = VecDeque::new();
        for (v, &x) in self.excess.iter().enumerate() {
            if x > 0 {
                level[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(u) = queue.pop_front() {
            if self.excess[u] < 0 {
                continue;
            }
            let lu = level[u];
            let mut next = Vec::new();
            self.for_each_arc(u, |a| {
                if level[a.to] == u32::MAX && self.admissible(u, &a) {
                    next.push(a.to);
                }
            });
            for v in next {
                if level[v] == u32::MAX {
                    level[v] = lu + 1;
                    queue.push_back(v);
                }
            }
        }

        let arcs_of = |s: &Solver, u: usize| {
            let mut v = Vec::with_capacity(2 * s.shape.d() as usize);
            s.for_each_arc(u, |a| v.push(a));
            v
        };

        for source in 0..n {
            while self.excess[source] > 0 {
                // path as (vertex, arc taken out of it)
                let mut path: Vec<(usize, Arc)> = Vec::new();
                let mut u = source;
                let found = loop {
                    if u != source && self.excess[u] < 0 {
                        break true;
                    }
                    let arcs = arcs_of(self, u);
                    let mut advanced = false;
                    while (cursor[u] as usize) < arcs.len() {
                        let a = arcs[cursor[u] as usize];
                        if level[a.to] == level[u].wrapping_add(1) && self.admissible(u, &a) {
                            path.push((u, a));
                            u = a.to;
                            advanced = true;
                            break;
                        }
                        cursor[u] += 1;
                    }
                    if !advanced {
                        // dead end: prune and retreat
                        level[u] = u32::MAX;
                        match path.pop() {
                            Some((prev, _)) => {
                                cursor[prev] += 1;
                                u = prev;
                            }
                            None => break false,
                        }
                    }
                };
                if !found {
                    break;
                }
                let sink = u;
                let mut amount = self.excess[source].min(-self.excess[sink]);
                for (_, a) in &path {
                    amount = amount.min(a.cap);
                }
                for (_, a) in &path {
                    self.flow[a.slot] += a.dir * amount;
                }
                self.excess[source] -= amount;
                self.excess[sink] += amount;
            }
        }
    }

    fn finish(self) -> FlowSolution {
        let cost: i128 = self.flow.iter().map(|&f| (f as i128).abs()).sum();
        let lo = self.label.iter().copied().max().unwrap_or(0);
        // labels grow along flow; potentials are their negation, shifted to ≥ 0
        let potentials = self.label.iter().map(|&h| lo - h).collect();
        FlowSolution {
            shape: self.shape,
            flow: self.flow,
            potentials,
            cost: Dyadic::new(cost, self.scale_exp),
            scale_exp: self.scale_exp,
        }
    }
}

#[inline]
fn arc(to: usize, slot: usize, dir: i64, current: i64) -> Arc {
    if current * dir < 0 {
        Arc {
            to,
            slot,
            dir,
            cost: -1,
            cap: current.abs(),
        }
    } else {
        Arc {
            to,
            slot,
            dir,
            cost: 1,
            cap: INF_CAP,
        }
    }
}

/// Independent check of [`tc_norm`] for grids with at most 64 vertices.
///
/// Builds an explicit residual network from all vertex pairs at ℓ1 distance
/// one and runs successive shortest paths with a label-correcting
/// (Bellman–Ford queue) search and no potentials.
pub fn tc_norm_oracle(prob: &TransportProblem) -> Result<Dyadic, TransportError> {
    let m = prob.measure();
    let shape = m.shape();
    let n = shape.len();
    if n > ORACLE_MAX_VERTICES {
        return Err(TransportError::TooLarge {
            vertices: n,
            limit: ORACLE_MAX_VERTICES,
        });
    }
    let points: Vec<Vec<u32>> = (0..n).map(|v| shape.point(v).coords).collect();
    let big: i64 = m.weights().iter().map(|w| w.abs()).sum::<i64>().max(1);
    // arcs stored in pairs: arc i and i^1 are mutual reverses
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut cost = Vec::new();
    let mut adj = vec![Vec::new(); n];
    for u in 0..n {
        for v in 0..n {
            let gap: u32 = points[u]
                .iter()
                .zip(&points[v])
                .map(|(a, b)| a.abs_diff(*b))
                .sum();
            if u < v && gap == 1 {
                for (x, y) in [(u, v), (v, u)] {
                    adj[x].push(to.len());
                    to.push(y);
                    cap.push(big);
                    cost.push(1i64);
                    adj[y].push(to.len());
                    to.push(x);
                    cap.push(0);
                    cost.push(-1);
                }
            }
        }
    }
    let mut excess = m.weights().to_vec();
    let mut total = 0i128;
    while excess.iter().any(|&x| x > 0) {
        let mut dist = vec![i64::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut in_queue = vec![false; n];
        let mut queue = VecDeque::new();
        for v in 0..n {
            if excess[v] > 0 {
                dist[v] = 0;
                queue.push_back(v);
                in_queue[v] = true;
            }
        }
        while let Some(u) = queue.pop_front() {
            in_queue[u] = false;
            for &e in &adj[u] {
                if cap[e] > 0 && dist[u] + cost[e] < dist[to[e]] {
                    dist[to[e]] = dist[u] + cost[e];
                    parent[to[e]] = e;
                    if !in_queue[to[e]] {
                        in_queue[to[e]] = true;
                        queue.push_back(to[e]);
                    }
                }
            }
        }
        let sink = (0..n)
            .filter(|&v| excess[v] < 0 && dist[v] < i64::MAX)
            .min_by_key(|&v| dist[v])
            .expect("balanced problem has a reachable deficit");
        let mut amount = -excess[sink];
        let mut v = sink;
        while parent[v] != usize::MAX {
            let e = parent[v];
            amount = amount.min(cap[e]);
            v = to[e ^ 1];
        }
        let source = v;
        amount = amount.min(excess[source]);
        let mut v = sink;
        while parent[v] != usize::MAX {
            let e = parent[v];
            cap[e] -= amount;
            cap[e ^ 1] += amount;
            v = to[e ^ 1];
        }
        excess[source] -= amount;
        excess[sink] += amount;
        total += amount as i128 * dist[sink] as i128;
    }
    Ok(Dyadic::new(total, m.scale_exp()))
}

/// `‖μ‖_TC` on a path `[2^n]^1` as the sum of absolute prefix masses.
pub fn tc_norm_1d(prob: &TransportProblem) -> Result<Dyadic, TransportError> {
    let m = prob.measure();
    if m.shape().d() != 1 {
        return Err(TransportError::WrongDimension(m.shape().d()));
    }
    let w = m.weights();
    let mut prefix = 0i128;
    let mut total = 0i128;
    for &x in &w[..w.len() - 1] {
        prefix += x as i128;
        total += prefix.abs();
    }
    Ok(Dyadic::new(total, m.scale_exp()))
}

/// An integer-valued function on the grid, used as a dual witness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessFunction {
    shape: GridShape,
    values: Vec<i64>,
    lip_checked: bool,
}

impl WitnessFunction {
    /// Validates the 1-Lipschitz condition on every edge.
    pub fn new(shape: GridShape, values: Vec<i64>) -> Result<Self, TransportError> {
        if values.len() != shape.len() {
            return Err(TransportError::ShapeMismatch);
        }
        let mut f = WitnessFunction {
            shape,
            values,
            lip_checked: false,
        };
        f.check()?;
        Ok(f)
    }

    /// Wraps values without checking; [`dual_bound`] checks before use.
    pub fn unchecked(shape: GridShape, values: Vec<i64>) -> Self {
        WitnessFunction {
            shape,
            values,
            lip_checked: false,
        }
    }

    fn check(&mut self) -> Result<(), TransportError> {
        let mut bad = None;
        self.shape.for_each_edge(|u, v, _| {
            let gap = (self.values[u] - self.values[v]).abs();
            if gap > 1 && bad.is_none() {
                bad = Some(TransportError::NotLipschitz { u, v, gap });
            }
        });
        match bad {
            Some(e) => Err(e),
            None => {
                self.lip_checked = true;
                Ok(())
            }
        }
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn is_lip_checked(&self) -> bool {
        self.lip_checked
    }
}

/// `|∫ f dμ|`, a lower bound on `‖μ‖_TC` for 1-Lipschitz `f`.
pub fn dual_bound(f: &WitnessFunction, m: &DyadicMeasure) -> Result<Dyadic, TransportError> {
    if f.shape != m.shape() {
        return Err(TransportError::ShapeMismatch);
    }
    if !f.lip_checked {
        let mut g = f.clone();
        g.check()?;
    }
    Ok(integrate_int(m, &f.values)?.abs())
}

/// `f_S(z) = min{dist(z, ∪S), d·2^n}` for a set `S` of cubes of scale `k`,
/// given by cube index.
pub fn witness_far_set(shape: GridShape, cubes: &[usize], k: u32) -> WitnessFunction {
    let cap = shape.d() as i64 * shape.side() as i64;
    let values = if cubes.is_empty() {
        vec![cap; shape.len()]
    } else {
        let sources = cubes.iter().flat_map(|&c| shape.cube_points(k, c));
        shape
            .bfs_from(sources)
            .into_iter()
            .map(|x| (x as i64).min(cap))
            .collect()
    };
    WitnessFunction {
        shape,
        values,
        lip_checked: true,
    }
}

/// The witness `f_{S_−(X)}` for the negative cubes of a sign assignment,
/// restricted to a vertex set for callers that only need its support.
pub fn far_set_of(set: &VertexSet) -> WitnessFunction {
    let shape = set.shape();
    let cap = shape.d() as i64 * shape.side() as i64;
    let values = match shape.dist_to_set(set) {
        Ok(dist) => dist.into_iter().map(|x| (x as i64).min(cap)).collect(),
        Err(_) => vec![cap; shape.len()],
    };
    WitnessFunction {
        shape,
        values,
        lip_checked: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l1_distance;
    use crate::measure::{build_mu_k, build_nu_k, sample_signs, RandomStream};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(n: u32, d: u32) -> GridShape {
        GridShape::new(n, d).unwrap()
    }

    fn problem(shape: GridShape, w: Vec<i64>, e: i32) -> TransportProblem {
        TransportProblem::new(DyadicMeasure::new(shape, w, e).unwrap()).unwrap()
    }

    fn random_balanced(rng: &mut ChaCha8Rng, shape: GridShape, spread: i64) -> Vec<i64> {
        let mut w: Vec<i64> = (0..shape.len()).map(|_| rng.random_range(-spread..=spread)).collect();
        let s: i64 = w.iter().sum();
        let j = rng.random_range(0..shape.len());
        w[j] -= s;
        w
    }

    /// Minimum over all plans on four points, by enumeration of the single
    /// free parameter of the 2×2 transport polytope.
    #[test]
    fn two_by_two_checkerboard() {
        let g = shape(1, 2);
        // δ(1,1) + δ(2,2) − δ(1,2) − δ(2,1); index = (x1−1) + 2(x2−1)
        let p = problem(g, vec![1, -1, -1, 1], 0);
        let pos = [0usize, 3];
        let neg = [1usize, 2];
        let mut best = u64::MAX;
        for t in 0..=1u64 {
            // t units from pos[0] to neg[0]; the rest is forced
            let plan = [(0, 0, t), (0, 1, 1 - t), (1, 0, 1 - t), (1, 1, t)];
            let c = plan
                .iter()
                .map(|&(i, j, a)| a * g.l1_distance_idx(pos[i], neg[j]))
                .sum();
            best = best.min(c);
        }
        assert_eq!(best, 2);
        let (norm, sol) = tc_norm(&p);
        assert_eq!(norm, Dyadic::from_int(2));
        sol.verify(p.measure()).unwrap();
    }

    #[test]
    fn diracs_match_distance() {
        for g in [shape(2, 2), shape(1, 3), shape(3, 1)] {
            for u in 0..g.len() {
                for v in 0..g.len() {
                    let p = TransportProblem::new(DyadicMeasure::dirac_difference(g, u, v)).unwrap();
                    let (norm, sol) = tc_norm(&p);
                    assert_eq!(norm, Dyadic::from_int(l1_distance(&g.point(u), &g.point(v)) as i128));
                    sol.verify(p.measure()).unwrap();
                }
            }
        }
    }

    #[test]
    fn zero_and_unbalanced() {
        let g = shape(2, 2);
        let (norm, sol) = tc_norm(&TransportProblem::new(DyadicMeasure::zero(g)).unwrap());
        assert_eq!(norm, Dyadic::ZERO);
        assert!(sol.potentials().iter().all(|&p| p == 0));
        let bad = DyadicMeasure::new(g, vec![1; 16], 0).unwrap();
        assert!(matches!(TransportProblem::new(bad), Err(TransportError::NotBalanced(_))));
    }

    #[test]
    fn flow_accessors() {
        let g = shape(2, 1);
        let p = problem(g, vec![1, 0, 0, -1], 0);
        let (norm, sol) = tc_norm(&p);
        assert_eq!(norm, Dyadic::from_int(3));
        assert_eq!(sol.flow(0, 1), 1);
        assert_eq!(sol.flow(1, 0), -1);
        assert_eq!(sol.flow(0, 3), 0);
        assert_eq!(sol.flows(), vec![(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
        assert_eq!(sol.potentials(), &[3, 2, 1, 0]);
    }

    #[test]
    fn oracle_agrees_on_random_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [shape(1, 3), shape(2, 2), shape(3, 1)] {
            for _ in 0..100 {
                let p = problem(g, random_balanced(&mut rng, g, 6), rng.random_range(-2..4));
                let (norm, sol) = tc_norm(&p);
                assert_eq!(norm, tc_norm_oracle(&p).unwrap());
                sol.verify(p.measure()).unwrap();
            }
        }
        let big = TransportProblem::new(DyadicMeasure::zero(shape(3, 3))).unwrap();
        assert!(matches!(tc_norm_oracle(&big), Err(TransportError::TooLarge { .. })));
    }

    #[test]
    fn homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = shape(1, 3);
        for _ in 0..20 {
            let m = DyadicMeasure::new(g, random_balanced(&mut rng, g, 5), 0).unwrap();
            let two = m.scale(Dyadic::from_int(2)).unwrap();
            let a = tc_norm(&TransportProblem::new(m).unwrap()).0;
            let b = tc_norm_oracle(&TransportProblem::new(two).unwrap()).unwrap();
            assert_eq!(b, a * Dyadic::from_int(2));
        }
    }

    #[test]
    fn one_dimensional_formula() {
        let g = shape(2, 1);
        let p = problem(g, vec![1, 0, 0, -1], 0);
        assert_eq!(tc_norm_1d(&p).unwrap(), Dyadic::from_int(3));
        let z = TransportProblem::new(DyadicMeasure::zero(g)).unwrap();
        assert_eq!(tc_norm_1d(&z).unwrap(), Dyadic::ZERO);
        let g8 = shape(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let p = problem(g8, random_balanced(&mut rng, g8, 9), 1);
            assert_eq!(tc_norm_1d(&p).unwrap(), tc_norm(&p).0);
        }
        let p2 = problem(shape(1, 2), vec![1, -1, 0, 0], 0);
        assert_eq!(tc_norm_1d(&p2), Err(TransportError::WrongDimension(2)));
    }

    #[test]
    fn dual_bounds() {
        let g = shape(1, 2);
        let m = DyadicMeasure::new(g, vec![1, -1, 0, 0], 0).unwrap();
        // f(x) = x_1
        let proj = WitnessFunction::new(g, (0..4).map(|v| g.coord(v, 0) as i64 + 1).collect()).unwrap();
        assert_eq!(dual_bound(&proj, &m).unwrap(), Dyadic::ONE);
        let constant = WitnessFunction::new(g, vec![7; 4]).unwrap();
        assert_eq!(dual_bound(&constant, &m).unwrap(), Dyadic::ZERO);
        let steep = WitnessFunction::unchecked(g, vec![0, 2, 0, 0]);
        assert!(matches!(dual_bound(&steep, &m), Err(TransportError::NotLipschitz { u: 0, v: 1, .. })));
        assert!(WitnessFunction::new(g, vec![0, 2, 0, 0]).is_err());
    }

    #[test]
    fn optimal_potentials_are_tight_witnesses() {
        let g = shape(2, 3);
        for seed in 0..20 {
            let signs = sample_signs(2, g, RandomStream::new(seed, 3)).unwrap();
            let mut w = build_nu_k(&build_mu_k(&signs));
            if w.is_zero() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                w = DyadicMeasure::new(g, random_balanced(&mut rng, g, 3), 0).unwrap();
            }
            let p = TransportProblem::new(w).unwrap();
            let (norm, sol) = tc_norm(&p);
            sol.verify(p.measure()).unwrap();
            assert_eq!(dual_bound(&sol.witness(), p.measure()).unwrap(), norm);
        }
    }

    #[test]
    fn far_set_witness() {
        let g = shape(3, 3);
        let all: Vec<usize> = (0..8).collect();
        assert!(witness_far_set(g, &all, 1).values().iter().all(|&x| x == 0));
        assert!(witness_far_set(g, &[], 1).values().iter().all(|&x| x == 24));
        let f = witness_far_set(g, &[0], 1);
        let far = g.index(&crate::grid::Point::new([8, 8, 8])).unwrap();
        assert_eq!(f.values()[far], 12);
        // coordinate formula: Σ max(0, x_i − 4)
        for v in 0..g.len() {
            let expect: i64 = (0..3).map(|a| (g.coord(v, a) as i64 + 1 - 4).max(0)).sum();
            assert_eq!(f.values()[v], expect);
        }
        assert!(WitnessFunction::new(g, f.values().to_vec()).is_ok());
        let set = crate::grid::DyadicCube::from_index(g, 1, 0).to_set(g);
        assert_eq!(far_set_of(&set).values(), f.values());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn triangle_inequality_and_witness_soundness(seed in any::<u64>()) {
            let g = shape(2, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DyadicMeasure::new(g, random_balanced(&mut rng, g, 4), 0).unwrap();
            let b = DyadicMeasure::new(g, random_balanced(&mut rng, g, 4), 1).unwrap();
            let sum = a.add(&b).unwrap();
            let na = tc_norm(&TransportProblem::new(a.clone()).unwrap()).0;
            let nb = tc_norm(&TransportProblem::new(b).unwrap()).0;
            let (ns, sol) = tc_norm(&TransportProblem::new(sum.clone()).unwrap());
            prop_assert!(ns <= na + nb);
            sol.verify(&sum).unwrap();
            let cubes: Vec<usize> = (0..4).filter(|_| rng.random_bool(0.5)).collect();
            let f = witness_far_set(g, &cubes, 1);
            prop_assert!(dual_bound(&f, &a).unwrap() <= na);
        }
    }
}
