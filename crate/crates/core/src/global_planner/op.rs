//! Budgeted orienteering: open path from a fixed start, maximizing collected node reward
//! subject to a Euclidean travel-length budget. Solved by GRASP construction followed by
//! iterated local search.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IlsConfig {
    /// Restricted-candidate-list width of the randomized greedy construction.
    pub grasp_alpha: f64,
    pub max_no_improve: usize,
    /// Hard cap on perturbation rounds (guards huge instances).
    pub max_iterations: usize,
    /// Wall-clock cap in seconds; `None` keeps the solver deterministic.
    pub time_cap: Option<f64>,
    /// Unrouted neighbours considered by the swap move.
    pub swap_neighbours: usize,
}

impl Default for IlsConfig {
    fn default() -> Self {
        Self { grasp_alpha: 0.3, max_no_improve: 200, max_iterations: 2000, time_cap: None, swap_neighbours: 12 }
    }
}

/// Non-improving rounds between GRASP restarts.
const RESTART_EVERY: usize = 20;

/// Orienteering instance over `positions` with per-node `rewards`.
#[derive(Debug, Clone, Copy)]
pub struct OpInstance<'a> {
    pub positions: &'a [[f64; 2]],
    pub rewards: &'a [f64],
    pub start: [f64; 2],
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Route {
    pub order: Vec<usize>,
    pub reward: f64,
    pub length: f64,
}

impl Route {
    pub fn evaluate(inst: &OpInstance<'_>, order: Vec<usize>) -> Self {
        // summed in index order so equal node sets give bit-equal rewards
        let mut ids = order.clone();
        ids.sort_unstable();
        let reward = ids.iter().map(|&i| inst.rewards[i]).sum();
        let length = route_length(inst, &order);
        Self { order, reward, length }
    }

    fn better_than(&self, other: &Route) -> bool {
        self.reward > other.reward || (self.reward == other.reward && self.length < other.length)
    }
}

pub fn route_length(inst: &OpInstance<'_>, order: &[usize]) -> f64 {
    let mut prev = inst.start;
    let mut len = 0.0;
    for &i in order {
        let p = inst.positions[i];
        len += (p[0] - prev[0]).hypot(p[1] - prev[1]);
        prev = p;
    }
    len
}

/// Tail marker in cached insertion edges.
const END: usize = usize::MAX;

/// Distances with the start stored as node `n`.
struct Dist {
    n: usize,
    d: Vec<f64>,
}

impl Dist {
    fn new(inst: &OpInstance<'_>) -> Self {
        let n = inst.positions.len();
        let pts: Vec<[f64; 2]> = inst.positions.iter().copied().chain(std::iter::once(inst.start)).collect();
        let m = n + 1;
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let v = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                d[i * m + j] = v;
                d[j * m + i] = v;
            }
        }
        Self { n, d }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * (self.n + 1) + b]
    }

    #[inline]
    fn start(&self) -> usize {
        self.n
    }
}

struct Solver<'a> {
    inst: OpInstance<'a>,
    dist: Dist,
    /// Nearest nodes per node, for the swap move.
    neighbours: Vec<Vec<usize>>,
    budget: f64,
}

impl<'a> Solver<'a> {
    fn new(inst: OpInstance<'a>, cfg: &IlsConfig) -> Self {
        let dist = Dist::new(&inst);
        let n = inst.positions.len();
        let k = cfg.swap_neighbours.min(n.saturating_sub(1));
        let neighbours = (0..n)
            .map(|i| {
                let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                if k < idx.len() {
                    idx.select_nth_unstable_by(k, |&a, &b| dist.get(i, a).total_cmp(&dist.get(i, b)).then(a.cmp(&b)));
                    idx.truncate(k);
                }
                idx.sort_by(|&a, &b| dist.get(i, a).total_cmp(&dist.get(i, b)).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { inst, dist, neighbours, budget: inst.budget }
    }

    #[inline]
    fn prev_of(&self, order: &[usize], pos: usize) -> usize {
        if pos == 0 {
            self.dist.start()
        } else {
            order[pos - 1]
        }
    }

    fn length(&self, order: &[usize]) -> f64 {
        let mut prev = self.dist.start();
        let mut len = 0.0;
        for &i in order {
            len += self.dist.get(prev, i);
            prev = i;
        }
        len
    }

    /// Cheapest insertion of `u` as `(added length, prev, next)`; `next` is [`END`] at the
    /// tail. Only the route's head and tail and the edges touching `u`'s near neighbours
    /// are tried.
    fn best_insertion(&self, order: &[usize], pos_of: &[usize], u: usize) -> (f64, usize, usize) {
        let start = self.dist.start();
        let mut best = (self.dist.get(start, u), start, END);
        let mut try_edge = |a: usize, b: usize| {
            let delta = self.edge_delta(a, b, u);
            if delta < best.0 {
                best = (delta, a, b);
            }
        };
        if let Some(&first) = order.first() {
            try_edge(start, first);
            try_edge(*order.last().expect("non-empty"), END);
        }
        for &v in &self.neighbours[u] {
            let j = pos_of[v];
            if j < order.len() && order[j] == v {
                try_edge(self.prev_of(order, j), v);
                try_edge(v, order.get(j + 1).copied().unwrap_or(END));
            }
        }
        best
    }

    #[inline]
    fn edge_delta(&self, a: usize, b: usize, u: usize) -> f64 {
        if b == END {
            self.dist.get(a, u)
        } else {
            self.dist.get(a, u) + self.dist.get(u, b) - self.dist.get(a, b)
        }
    }

    fn fits(&self, length: f64) -> bool {
        length <= self.budget
    }

    /// Inserts unrouted nodes by reward per added distance until nothing fits. With
    /// `alpha > 0` each pick is drawn from the restricted candidate list.
    ///
    /// Cheapest insertions are cached per node and refreshed only where an insertion
    /// touched the cached edge.
    fn grow(&self, order: &mut Vec<usize>, in_route: &mut [bool], alpha: f64, rng: &mut ChaCha8Rng) -> bool {
        let n = self.inst.positions.len();
        let mut pool: Vec<usize> = (0..n).filter(|&u| !in_route[u] && self.inst.rewards[u] > 0.0).collect();
        let mut pos_of = vec![usize::MAX; n];
        for (k, &v) in order.iter().enumerate() {
            pos_of[v] = k;
        }
        let mut best = vec![(f64::INFINITY, 0, END); n];
        for &u in &pool {
            best[u] = self.best_insertion(order, &pos_of, u);
        }
        let mut length = self.length(order);
        let mut grew = false;
        let mut cands: Vec<(usize, f64)> = Vec::new();
        loop {
            cands.clear();
            for &u in &pool {
                if self.fits(length + best[u].0) {
                    cands.push((u, self.inst.rewards[u] / best[u].0.max(1e-9)));
                }
            }
            if cands.is_empty() {
                break;
            }
            let hi = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            let u = if alpha == 0.0 {
                cands.iter().find(|c| c.1 == hi).expect("max is attained").0
            } else {
                let lo = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                let cut = hi - alpha * (hi - lo);
                cands.retain(|c| c.1 >= cut);
                cands[rng.random_range(0..cands.len())].0
            };
            let (_, a, b) = best[u];
            let pos = if a == self.dist.start() { 0 } else { pos_of[a] + 1 };
            order.insert(pos, u);
            let exact = self.length(order);
            if !self.fits(exact) {
                // incremental estimate drifted past the budget
                order.remove(pos);
                break;
            }
            in_route[u] = true;
            length = exact;
            grew = true;
            for (k, &v) in order.iter().enumerate().skip(pos) {
                pos_of[v] = k;
            }
            pool.retain(|&w| w != u);
            for &w in &pool {
                if best[w].1 == a && best[w].2 == b {
                    best[w] = self.best_insertion(order, &pos_of, w);
                } else {
                    let da = self.edge_delta(a, u, w);
                    if da < best[w].0 {
                        best[w] = (da, a, u);
                    }
                    let db = self.edge_delta(u, b, w);
                    if db < best[w].0 {
                        best[w] = (db, u, b);
                    }
                }
            }
        }
        grew
    }

    /// Randomized greedy by reward per added distance; `alpha = 0` is pure greedy.
    fn construct(&self, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        self.construct_from(None, alpha, rng)
    }

    /// Like [`Self::construct`] but the route opens with `first`.
    fn construct_from(&self, first: Option<usize>, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut order = Vec::new();
        let mut in_route = vec![false; self.inst.positions.len()];
        if let Some(f) = first.filter(|&f| self.fits(self.dist.get(self.dist.start(), f))) {
            order.push(f);
            in_route[f] = true;
        }
        self.grow(&mut order, &mut in_route, alpha, rng);
        order
    }

    fn two_opt(&self, order: &mut [usize]) -> bool {
        let m = order.len();
        let mut improved = false;
        let mut again = true;
        while again {
            again = false;
            for i in 0..m {
                for j in (i + 1)..m {
                    let a = self.prev_of(order, i);
                    let before = self.dist.get(a, order[i]) + if j + 1 < m { self.dist.get(order[j], order[j + 1]) } else { 0.0 };
                    let after = self.dist.get(a, order[j]) + if j + 1 < m { self.dist.get(order[i], order[j + 1]) } else { 0.0 };
                    if after < before - 1e-10 {
                        order[i..=j].reverse();
                        improved = true;
                        again = true;
                    }
                }
            }
        }
        improved
    }

    /// Relocates segments of up to three nodes, optionally reversed. Insertion points are
    /// next to the near neighbours of the segment ends, or at the head of the route.
    fn or_opt(&self, order: &mut Vec<usize>) -> bool {
        let m = order.len();
        let mut pos_of = vec![usize::MAX; self.inst.positions.len()];
        for (k, &v) in order.iter().enumerate() {
            pos_of[v] = k;
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut improved = false;
        loop {
            let mut moved_in_pass = false;
            for seg in 1..=3usize.min(m) {
                for i in 0..=(m - seg) {
                    if let Some(new_order) = self.relocate(order, &pos_of, seg, i, &mut edges) {
                        *order = new_order;
                        for (k, &v) in order.iter().enumerate() {
                            pos_of[v] = k;
                        }
                        moved_in_pass = true;
                    }
                }
            }
            if !moved_in_pass {
                break;
            }
            improved = true;
        }
        improved
    }

    /// First improving relocation of `order[i..i + seg]`, as the new order.
    fn relocate(
        &self,
        order: &[usize],
        pos_of: &[usize],
        seg: usize,
        i: usize,
        edges: &mut Vec<(usize, usize)>,
    ) -> Option<Vec<usize>> {
        let m = order.len();
        let (s0, s1) = (order[i], order[i + seg - 1]);
        let a = self.prev_of(order, i);
        let b = order.get(i + seg).copied().unwrap_or(END);
        let removed = self.segment_delta(a, b, s0, s1);
        // neighbours in the route with the segment cut out
        let rest_next = |j: usize| {
            let n = if j + 1 == i { i + seg } else { j + 1 };
            order.get(n).copied().unwrap_or(END)
        };
        let rest_prev = |j: usize| if j == i + seg { a } else { self.prev_of(order, j) };
        edges.clear();
        edges.push((self.dist.start(), if i == 0 { b } else { order[0] }));
        for &w in self.neighbours[s0].iter().chain(&self.neighbours[s1]) {
            let j = pos_of[w];
            if j >= m || order[j] != w || (i..i + seg).contains(&j) {
                continue;
            }
            edges.push((w, rest_next(j)));
            edges.push((rest_prev(j), w));
        }
        for &(p, q) in edges.iter() {
            if p == a && q == b {
                continue;
            }
            for rev in [false, true] {
                let (f, l) = if rev { (s1, s0) } else { (s0, s1) };
                let added = if q == END {
                    self.dist.get(p, f)
                } else {
                    self.dist.get(p, f) + self.dist.get(l, q) - self.dist.get(p, q)
                };
                if added < removed - 1e-10 {
                    let mut segment: Vec<usize> = order[i..i + seg].to_vec();
                    if rev {
                        segment.reverse();
                    }
                    let mut rest: Vec<usize> = order[..i].to_vec();
                    rest.extend_from_slice(&order[i + seg..]);
                    let at = if p == self.dist.start() { 0 } else { rest.iter().position(|&x| x == p).expect("p is routed") + 1 };
                    rest.splice(at..at, segment);
                    return Some(rest);
                }
            }
        }
        None
    }

    /// Length saved by cutting the segment `s0..s1` out from between `a` and `b`
    /// (its internal edges stay with it).
    #[inline]
    fn segment_delta(&self, a: usize, b: usize, s0: usize, s1: usize) -> f64 {
        if b == END {
            self.dist.get(a, s0)
        } else {
            self.dist.get(a, s0) + self.dist.get(s1, b) - self.dist.get(a, b)
        }
    }

    /// Replace a routed node by a nearby unrouted node of higher reward at the same position.
    /// Replaces a routed node by a richer unrouted neighbour, inserted wherever it is
    /// cheapest once the old node is gone.
    fn swap(&self, order: &mut Vec<usize>, in_route: &mut [bool]) -> bool {
        let mut improved = false;
        let mut length = self.length(order);
        let mut pos = 0;
        while pos < order.len() {
            let v = order[pos];
            let a = self.prev_of(order, pos);
            let b = order.get(pos + 1).copied();
            let saved = self.dist.get(a, v) + b.map_or(0.0, |b| self.dist.get(v, b) - self.dist.get(a, b));
            let base = length - saved;
            let mut best: Option<(usize, usize, f64)> = None;
            for &u in &self.neighbours[v] {
                if in_route[u] || self.inst.rewards[u] <= self.inst.rewards[v] {
                    continue;
                }
                if best.is_some_and(|(bu, _, _)| self.inst.rewards[bu] >= self.inst.rewards[u]) {
                    continue;
                }
                // cheapest slot in the route without v; `at` indexes the reduced route
                let mut prev = self.dist.start();
                let mut cheapest = (f64::INFINITY, 0);
                let mut at = 0;
                for (j, &w) in order.iter().enumerate() {
                    if j == pos {
                        continue;
                    }
                    let d = self.edge_delta(prev, w, u);
                    if d < cheapest.0 {
                        cheapest = (d, at);
                    }
                    prev = w;
                    at += 1;
                }
                let tail = self.edge_delta(prev, END, u);
                if tail < cheapest.0 {
                    cheapest = (tail, at);
                }
                if self.fits(base + cheapest.0) {
                    best = Some((u, cheapest.1, base + cheapest.0));
                }
            }
            if let Some((u, at, _)) = best {
                order.remove(pos);
                order.insert(at, u);
                let l = self.length(order);
                if self.fits(l) {
                    in_route[v] = false;
                    in_route[u] = true;
                    length = l;
                    improved = true;
                    continue;
                }
                order.remove(at);
                order.insert(pos, v);
            }
            pos += 1;
        }
        improved
    }

    fn local_search(&self, mut order: Vec<usize>, rng: &mut ChaCha8Rng) -> Route {
        let n = self.inst.positions.len();
        let mut in_route = vec![false; n];
        for &i in &order {
            in_route[i] = true;
        }
        for _ in 0..50 {
            let mut changed = self.two_opt(&mut order);
            changed |= self.or_opt(&mut order);
            changed |= self.grow(&mut order, &mut in_route, 0.0, rng);
            changed |= self.swap(&mut order, &mut in_route);
            if !changed {
                break;
            }
        }
        Route::evaluate(&self.inst, order)
    }

    /// Removes `len` consecutive nodes starting at `start` (both wrapped to the route).
    fn shake(&self, route: &Route, start: usize, len: usize) -> Vec<usize> {
        let mut order = route.order.clone();
        if order.is_empty() {
            return order;
        }
        let start = start % order.len();
        let end = (start + len).min(order.len());
        order.drain(start..end);
        order
    }
}

/// Pure greedy construction (reward per added distance, cheapest insertion).
pub fn greedy_route(inst: &OpInstance<'_>) -> Route {
    if inst.positions.is_empty() || inst.budget < 0.0 {
        return Route::default();
    }
    let solver = Solver::new(*inst, &IlsConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Route::evaluate(inst, solver.construct(0.0, &mut rng))
}

/// GRASP + iterated local search. Deterministic for a given `seed` when `time_cap` is `None`.
pub fn solve_op(inst: &OpInstance<'_>, cfg: &IlsConfig, seed: u64) -> Route {
    assert_eq!(inst.positions.len(), inst.rewards.len(), "positions and rewards differ in length");
    if inst.positions.is_empty() || !(inst.budget >= 0.0) {
        return Route::default();
    }
    let started = Instant::now();
    let out_of_time = || cfg.time_cap.is_some_and(|cap| started.elapsed().as_secs_f64() >= cap);
    let solver = Solver::new(*inst, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let grasp = |alpha: f64, rng: &mut ChaCha8Rng| {
        let order = solver.construct(alpha, rng);
        solver.local_search(order, rng)
    };
    // restarts open with a random reachable node so distant clusters get explored
    let reachable: Vec<usize> =
        (0..inst.positions.len()).filter(|&i| solver.fits(solver.dist.get(solver.dist.start(), i))).collect();
    let restart = |rng: &mut ChaCha8Rng| {
        let first = (!reachable.is_empty()).then(|| reachable[rng.random_range(0..reachable.len())]);
        let order = solver.construct_from(first, cfg.grasp_alpha, rng);
        solver.local_search(order, rng)
    };
    let mut best = grasp(0.0, &mut rng);
    let mut current = grasp(cfg.grasp_alpha, &mut rng);
    if current.better_than(&best) {
        best = current.clone();
    }
    let mut no_improve = 0;
    let mut iterations = 0;
    // shake position and size, grown after every round and reset on improvement
    let (mut pos, mut size) = (0usize, 1usize);
    while no_improve < cfg.max_no_improve && iterations < cfg.max_iterations && !out_of_time() {
        iterations += 1;
        let candidate = if no_improve > 0 && no_improve % RESTART_EVERY == 0 {
            restart(&mut rng)
        } else {
            let order = solver.shake(&current, pos, size);
            solver.local_search(order, &mut rng)
        };
        if candidate.better_than(&best) {
            best = candidate.clone();
            no_improve = 0;
            size = 1;
        } else {
            no_improve += 1;
            pos += size;
            size += 1;
            let n = candidate.order.len().max(1);
            if size > n.div_ceil(2) {
                size = 1;
            }
            if pos >= n {
                pos %= n;
            }
        }
        current = candidate;
    }
    debug_assert!(best.length <= inst.budget);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: best reward over all feasible ordered subsets.
    fn brute_force(inst: &OpInstance<'_>) -> Route {
        fn rec(inst: &OpInstance<'_>, order: &mut Vec<usize>, used: &mut Vec<bool>, best: &mut Route) {
            let r = Route::evaluate(inst, order.clone());
            if r.length <= inst.budget && r.better_than(best) {
                *best = r;
            }
            for u in 0..inst.positions.len() {
                if used[u] {
                    continue;
                }
                order.push(u);
                if route_length(inst, order) <= inst.budget {
                    used[u] = true;
                    rec(inst, order, used, best);
                    used[u] = false;
                }
                order.pop();
            }
        }
        let mut best = Route::default();
        rec(inst, &mut Vec::new(), &mut vec![false; inst.positions.len()], &mut best);
        best
    }

    fn random_instance(seed: u64, n: usize) -> (Vec<[f64; 2]>, Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = (0..n).map(|_| [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)]).collect();
        let rew = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
        (pos, rew, rng.random_range(8.0..40.0))
    }

    #[test]
    fn three_nodes_all_reachable_matches_exhaustive_order() {
        let pos = [[5.0, 0.0], [1.0, 0.0], [3.0, 1.0]];
        let rew = [1.0, 1.0, 1.0];
        let inst = OpInstance { positions: &pos, rewards: &rew, start: [0.0, 0.0], budget: 100.0 };
        let r = solve_op(&inst, &IlsConfig::default(), 1);
        let oracle = brute_force(&inst);
        assert_eq!(r.order.len(), 3);
        assert!((r.length - oracle.length).abs() < 1e-12);
        assert_eq!(r.order, vec![1, 2, 0]);
    }

    #[test]
    fn zero_budget_gives_empty_route() {
        let pos = [[1.0, 0.0]];
        let inst = OpInstance { positions: &pos, rewards: &[2.0], start: [0.0, 0.0], budget: 0.0 };
        assert!(solve_op(&inst, &IlsConfig::default(), 0).order.is_empty());
        let inst = OpInstance { budget: 0.5, ..inst };
        assert!(solve_op(&inst, &IlsConfig::default(), 0).order.is_empty());
    }

    #[test]
    fn node_at_start_is_free() {
        let pos = [[0.0, 0.0], [9.0, 0.0]];
        let inst = OpInstance { positions: &pos, rewards: &[1.0, 1.0], start: [0.0, 0.0], budget: 0.0 };
        assert_eq!(solve_op(&inst, &IlsConfig::default(), 0).order, vec![0]);
    }

    #[test]
    fn matches_exhaustive_on_small_instances() {
        let mut within = 0;
        for seed in 0..40 {
            let (pos, rew, budget) = random_instance(seed, 7);
            let inst = OpInstance { positions: &pos, rewards: &rew, start: [10.0, 10.0], budget };
            let r = solve_op(&inst, &IlsConfig::default(), seed);
            let g = greedy_route(&inst);
            let opt = brute_force(&inst);
            assert!(r.length <= budget);
            assert!(r.reward >= g.reward);
            assert!(r.reward <= opt.reward + 1e-9);
            within += (r.reward >= 0.95 * opt.reward) as usize;
        }
        assert!(within >= 36, "{within}/40");
    }

    #[test]
    fn deterministic_for_seed() {
        let (pos, rew, budget) = random_instance(9, 60);
        let inst = OpInstance { positions: &pos, rewards: &rew, start: [0.0, 0.0], budget };
        assert_eq!(solve_op(&inst, &IlsConfig::default(), 5), solve_op(&inst, &IlsConfig::default(), 5));
    }

    #[test]
    fn reward_scaling_keeps_route() {
        for seed in 0..10 {
            let (pos, rew, budget) = random_instance(100 + seed, 25);
            let inst = OpInstance { positions: &pos, rewards: &rew, start: [3.0, 3.0], budget };
            let base = solve_op(&inst, &IlsConfig::default(), seed);
            for scale in [0.5, 2.0, 8.0] {
                let scaled: Vec<f64> = rew.iter().map(|r| r * scale).collect();
                let inst2 = OpInstance { rewards: &scaled, ..inst };
                let mut a = base.order.clone();
                let mut b = solve_op(&inst2, &IlsConfig::default(), seed).order;
                a.sort_unstable();
                b.sort_unstable();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn time_cap_terminates() {
        let (pos, rew, budget) = random_instance(4, 300);
        let inst = OpInstance { positions: &pos, rewards: &rew, start: [0.0, 0.0], budget: budget * 5.0 };
        let cfg = IlsConfig { time_cap: Some(0.2), max_no_improve: usize::MAX, max_iterations: usize::MAX, ..Default::default() };
        let t = Instant::now();
        let r = solve_op(&inst, &cfg, 0);
        assert!(t.elapsed().as_secs_f64() < 10.0);
        assert!(r.length <= inst.budget);
    }
}
