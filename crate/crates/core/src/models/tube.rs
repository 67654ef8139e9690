//! Quantile tubes by greedy hull peeling, and scenario hulls.
//!
//! A tube is a convex cross-section per time step. Starting from the hulls of
//! all training actions, the greedy peeler repeatedly drops the one action
//! whose removal shrinks the summed cross-section area the most. Area ties,
//! which are the rule when every cross-section is a segment, go to the
//! action farthest from the per-step training mean, then to the lower record
//! index. Tubes for
//! several δ share one removal sequence, so a tube at a larger δ is always
//! nested in the tube at a smaller δ.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::actions::{ActionSet, Window};
use crate::error::{Error, Result};
use crate::geometry::{area_perimeter, hull_of_sorted, in_closed_triangle, orient, ConvexPolygon};
use crate::trajectory::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTube {
    pub target_delta: f64,
    pub cross_sections: Vec<ConvexPolygon>,
    /// Training actions left inside the tube, `N - ⌊δN⌋`.
    pub coverage: usize,
    pub n_train: usize,
}

impl QuantileTube {
    pub fn contains(&self, action: &[Point]) -> bool {
        action.len() == self.cross_sections.len()
            && self
                .cross_sections
                .iter()
                .zip(action)
                .all(|(poly, &p)| poly.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioHull {
    pub cross_sections: Vec<ConvexPolygon>,
    /// Largest vertex count over the cross-sections.
    pub support_count: usize,
    pub n_train: usize,
}

impl ScenarioHull {
    pub fn contains(&self, action: &[Point]) -> bool {
        action.len() == self.cross_sections.len()
            && self
                .cross_sections
                .iter()
                .zip(action)
                .all(|(poly, &p)| poly.contains(p))
    }
}

/// Number of greedy removals for level δ on `n` actions, `⌊δn⌋`. The small
/// offset keeps products like 0.29·100 from rounding down a whole unit.
pub fn removals_for(delta: f64, n: usize) -> usize {
    (delta * n as f64 + 1e-9).floor() as usize
}

/// Uniform bucket grid in compressed-row layout.
struct BucketGrid {
    min: Point,
    inv_cell: [f64; 2],
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    ids: Vec<u32>,
}

impl BucketGrid {
    fn new(points: &[Point]) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let w = (max[0] - min[0]).max(0.0);
        let h = (max[1] - min[1]).max(0.0);
        let cells = (points.len() / 2).max(1) as f64;
        let (nx, ny) = if w > 0.0 && h > 0.0 {
            let nx = (cells * w / h).sqrt().ceil();
            (nx, (cells / nx).ceil())
        } else if w > 0.0 {
            (cells, 1.0)
        } else if h > 0.0 {
            (1.0, cells)
        } else {
            (1.0, 1.0)
        };
        let nx = (nx as usize).clamp(1, 4096);
        let ny = (ny as usize).clamp(1, 4096);
        let inv_cell = [
            if w > 0.0 { nx as f64 / w } else { 0.0 },
            if h > 0.0 { ny as f64 / h } else { 0.0 },
        ];
        let mut grid = Self {
            min,
            inv_cell,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            ids: vec![0; points.len()],
        };
        let cell_ids: Vec<usize> = points.iter().map(|&p| grid.cell(p)).collect();
        for &c in &cell_ids {
            grid.start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (i, &c) in cell_ids.iter().enumerate() {
            grid.ids[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    fn axis(&self, v: f64, a: usize, n: usize) -> usize {
        let x = ((v - self.min[a]) * self.inv_cell[a]).floor();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(n - 1)
        }
    }

    fn cell(&self, p: Point) -> usize {
        self.axis(p[1], 1, self.ny) * self.nx + self.axis(p[0], 0, self.nx)
    }

    fn for_each_in_box(&self, lo: Point, hi: Point, mut f: impl FnMut(u32)) {
        let (x0, x1) = (self.axis(lo[0], 0, self.nx), self.axis(hi[0], 0, self.nx));
        let (y0, y1) = (self.axis(lo[1], 1, self.ny), self.axis(hi[1], 1, self.ny));
        for cy in y0..=y1 {
            let row = cy * self.nx;
            let (s, e) = (self.start[row + x0] as usize, self.start[row + x1 + 1] as usize);
            for &id in &self.ids[s..e] {
                f(id);
            }
        }
    }
}

enum Replacement {
    /// Vertices that take the removed vertex's place, in hull order.
    Chain(Vec<u32>),
    /// The whole new hull.
    Full(Vec<u32>),
}

struct StepHull {
    pts: Vec<Point>,
    grid: BucketGrid,
    hull: Vec<u32>,
    gains: HashMap<u32, f64>,
}

fn sort_ids(pts: &[Point], ids: &mut Vec<usize>) {
    ids.sort_by(|&i, &j| {
        pts[i][0]
            .total_cmp(&pts[j][0])
            .then(pts[i][1].total_cmp(&pts[j][1]))
            .then(i.cmp(&j))
    });
    ids.dedup_by(|a, b| pts[*a] == pts[*b]);
}

impl StepHull {
    fn new(pts: Vec<Point>) -> Self {
        let grid = BucketGrid::new(&pts);
        let mut ids: Vec<usize> = (0..pts.len()).collect();
        sort_ids(&pts, &mut ids);
        let hull = hull_of_sorted(&pts, &ids).into_iter().map(|i| i as u32).collect();
        Self {
            pts,
            grid,
            hull,
            gains: HashMap::new(),
        }
    }

    fn position(&self, v: u32) -> usize {
        self.hull.iter().position(|&h| h == v).expect("vertex on hull")
    }

    fn neighbors(&self, pos: usize) -> (u32, u32) {
        let h = self.hull.len();
        (self.hull[(pos + h - 1) % h], self.hull[(pos + 1) % h])
    }

    /// Alive points in the closed triangle `(a, b, c)`, other than `skip`.
    fn pocket(&self, alive: &[bool], a: u32, b: u32, c: u32, skip: &[u32]) -> Vec<usize> {
        let (pa, pb, pc) = (self.pts[a as usize], self.pts[b as usize], self.pts[c as usize]);
        let lo = [pa[0].min(pb[0]).min(pc[0]), pa[1].min(pb[1]).min(pc[1])];
        let hi = [pa[0].max(pb[0]).max(pc[0]), pa[1].max(pb[1]).max(pc[1])];
        let mut out = Vec::new();
        self.grid.for_each_in_box(lo, hi, |id| {
            if alive[id as usize]
                && !skip.contains(&id)
                && in_closed_triangle(pa, pb, pc, self.pts[id as usize])
            {
                out.push(id as usize);
            }
        });
        out
    }

    /// Gain from removing the vertex at `pos`, with the hull change it implies.
    fn evaluate(&self, alive: &[bool], pos: usize) -> (f64, Replacement) {
        let v = self.hull[pos];
        let (prev, next) = self.neighbors(pos);
        let (pp, pv, pn) = (
            self.pts[prev as usize],
            self.pts[v as usize],
            self.pts[next as usize],
        );
        if self.hull.len() <= 3 || orient(pp, pv, pn) <= 0.0 {
            return self.evaluate_full(alive, pos);
        }
        // Pocket points sharing a neighbor's coordinates stay hidden behind it.
        let mut ids: Vec<usize> = self
            .pocket(alive, prev, v, next, &[v, prev, next])
            .into_iter()
            .filter(|&i| self.pts[i] != pp && self.pts[i] != pn)
            .collect();
        ids.push(prev as usize);
        ids.push(next as usize);
        sort_ids(&self.pts, &mut ids);
        let local = hull_of_sorted(&self.pts, &ids);
        let start = local
            .iter()
            .position(|&i| i == prev as usize)
            .expect("prev on pocket hull");
        let mut chain = Vec::new();
        let mut k = (start + 1) % local.len();
        while local[k] != next as usize {
            chain.push(local[k] as u32);
            k = (k + 1) % local.len();
        }
        let mut path: Vec<Point> = Vec::with_capacity(chain.len() + 2);
        path.push(pp);
        path.extend(chain.iter().map(|&c| self.pts[c as usize]));
        path.push(pn);
        let gain = 0.5 * orient(pp, pv, pn) - area_perimeter(&path).0;
        (gain, Replacement::Chain(chain))
    }

    fn evaluate_full(&self, alive: &[bool], pos: usize) -> (f64, Replacement) {
        let v = self.hull[pos];
        let (prev, next) = self.neighbors(pos);
        let mut ids: Vec<usize> = self.pocket(alive, prev, v, next, &[v]);
        ids.extend(self.hull.iter().filter(|&&h| h != v).map(|&h| h as usize));
        sort_ids(&self.pts, &mut ids);
        let new_hull: Vec<u32> = hull_of_sorted(&self.pts, &ids)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        let coords = |h: &[u32]| h.iter().map(|&i| self.pts[i as usize]).collect::<Vec<_>>();
        let gain = area_perimeter(&coords(&self.hull)).0 - area_perimeter(&coords(&new_hull)).0;
        (gain, Replacement::Full(new_hull))
    }

    fn refresh(&mut self, alive: &[bool], v: u32) {
        let pos = self.position(v);
        let (g, _) = self.evaluate(alive, pos);
        self.gains.insert(v, g);
    }

    fn refresh_all(&mut self, alive: &[bool]) {
        self.gains.clear();
        for pos in 0..self.hull.len() {
            let (g, _) = self.evaluate(alive, pos);
            self.gains.insert(self.hull[pos], g);
        }
    }

    /// Removes vertex `v` (already marked dead) and returns every action
    /// whose gain at this step may have changed.
    fn remove(&mut self, alive: &[bool], v: u32) -> Vec<u32> {
        let pos = self.position(v);
        let (prev, next) = self.neighbors(pos);
        match self.evaluate(alive, pos).1 {
            Replacement::Chain(chain) => {
                self.gains.remove(&v);
                self.hull.splice(pos..=pos, chain.iter().copied());
                let mut touched = chain;
                touched.push(prev);
                touched.push(next);
                for &t in &touched {
                    self.refresh(alive, t);
                }
                touched
            }
            Replacement::Full(new_hull) => {
                let mut touched: Vec<u32> = self.hull.iter().copied().filter(|&h| h != v).collect();
                self.hull = new_hull;
                self.refresh_all(alive);
                touched.extend(self.hull.iter().copied());
                touched
            }
        }
    }

    /// Refreshes hull vertices whose pocket held the now-dead interior
    /// point `v`, returning them.
    fn forget_interior(&mut self, alive: &[bool], v: u32) -> Vec<u32> {
        let pv = self.pts[v as usize];
        let h = self.hull.len();
        let owners: Vec<u32> = (0..h)
            .filter(|&pos| {
                let (prev, next) = self.neighbors(pos);
                let (a, b, c) = (
                    self.pts[prev as usize],
                    self.pts[self.hull[pos] as usize],
                    self.pts[next as usize],
                );
                pv[0] >= a[0].min(b[0]).min(c[0])
                    && pv[0] <= a[0].max(b[0]).max(c[0])
                    && pv[1] >= a[1].min(b[1]).min(c[1])
                    && pv[1] <= a[1].max(b[1]).max(c[1])
                    && in_closed_triangle(a, b, c, pv)
            })
            .map(|pos| self.hull[pos])
            .collect();
        for &u in &owners {
            self.refresh(alive, u);
        }
        owners
    }

    fn polygon(&self) -> ConvexPolygon {
        ConvexPolygon::from_ccw(self.hull.iter().map(|&i| self.pts[i as usize]).collect())
    }
}

#[derive(Debug, PartialEq)]
struct Entry {
    gain: f64,
    outlying: f64,
    id: u32,
    version: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then(self.outlying.total_cmp(&other.outlying))
            .then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Peeler {
    steps: Vec<StepHull>,
    alive: Vec<bool>,
    version: Vec<u32>,
    /// Summed squared distance of each action from the per-step mean.
    outlying: Vec<f64>,
    heap: BinaryHeap<Entry>,
}

fn outlyingness(actions: &ActionSet) -> Vec<f64> {
    let n = actions.len() as f64;
    let mut means = vec![[0.0; 2]; actions.steps()];
    for a in actions.iter() {
        for (m, p) in means.iter_mut().zip(a) {
            m[0] += p[0];
            m[1] += p[1];
        }
    }
    for m in means.iter_mut() {
        m[0] /= n;
        m[1] /= n;
    }
    actions
        .iter()
        .map(|a| {
            a.iter()
                .zip(&means)
                .map(|(p, m)| (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2))
                .sum()
        })
        .collect()
}

impl Peeler {
    fn new(actions: &ActionSet) -> Self {
        let n = actions.len();
        let alive = vec![true; n];
        let mut steps: Vec<StepHull> = (0..actions.steps())
            .map(|t| StepHull::new(actions.step_points(t)))
            .collect();
        for s in steps.iter_mut() {
            s.refresh_all(&alive);
        }
        let mut p = Self {
            steps,
            alive,
            version: vec![0; n],
            outlying: outlyingness(actions),
            heap: BinaryHeap::new(),
        };
        let mut ids: Vec<u32> = p.steps.iter().flat_map(|s| s.hull.iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            p.push(id);
        }
        p
    }

    fn total_gain(&self, id: u32) -> Option<f64> {
        let mut total = None;
        for s in &self.steps {
            if let Some(g) = s.gains.get(&id) {
                *total.get_or_insert(0.0) += g;
            }
        }
        total
    }

    fn push(&mut self, id: u32) {
        if let Some(gain) = self.total_gain(id) {
            self.heap.push(Entry {
                gain,
                outlying: self.outlying[id as usize],
                id,
                version: self.version[id as usize],
            });
        }
    }

    /// Drops the best action and returns its index.
    fn step(&mut self) -> Option<u32> {
        let id = loop {
            let e = self.heap.pop()?;
            if self.alive[e.id as usize] && e.version == self.version[e.id as usize] {
                break e.id;
            }
        };
        self.alive[id as usize] = false;
        let mut touched = Vec::new();
        for s in self.steps.iter_mut() {
            if s.gains.contains_key(&id) {
                touched.extend(s.remove(&self.alive, id));
            } else {
                touched.extend(s.forget_interior(&self.alive, id));
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for t in touched {
            if self.alive[t as usize] {
                self.version[t as usize] += 1;
                self.push(t);
            }
        }
        Some(id)
    }

    fn cross_sections(&self) -> Vec<ConvexPolygon> {
        self.steps.iter().map(StepHull::polygon).collect()
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::TooFew {
            what: "training actions for a convex region",
            needed: 3,
            got: n,
        });
    }
    Ok(())
}

/// Tubes for each δ from one shared greedy removal sequence. Output order
/// follows `deltas`.
pub fn fit_quantile_tubes(
    actions: &ActionSet,
    deltas: &[f64],
    window: Window,
) -> Result<Vec<QuantileTube>> {
    let actions = actions.windowed(window)?;
    let n = actions.len();
    check_size(n)?;
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(deltas.len());
    for (i, &d) in deltas.iter().enumerate() {
        if !(0.0..1.0).contains(&d) {
            return Err(Error::range("delta", d, "must lie in [0, 1)"));
        }
        let r = removals_for(d, n);
        if r >= n - 2 {
            return Err(Error::range(
                "delta",
                d,
                format!("removes {r} of {n} actions; fewer than 3 would remain"),
            ));
        }
        order.push((r, i));
    }
    order.sort_unstable();
    let mut peeler = Peeler::new(&actions);
    let mut removed = 0;
    let mut out: Vec<Option<QuantileTube>> = vec![None; deltas.len()];
    for (r, i) in order {
        while removed < r {
            peeler
                .step()
                .ok_or_else(|| Error::Degenerate("ran out of removable actions".into()))?;
            removed += 1;
        }
        out[i] = Some(QuantileTube {
            target_delta: deltas[i],
            cross_sections: peeler.cross_sections(),
            coverage: n - r,
            n_train: n,
        });
    }
    Ok(out.into_iter().map(|t| t.expect("every delta visited")).collect())
}

pub fn fit_quantile_tube(actions: &ActionSet, delta: f64, window: Window) -> Result<QuantileTube> {
    Ok(fit_quantile_tubes(actions, &[delta], window)?.remove(0))
}

/// Order in which the greedy peeler drops actions, for the first `count`
/// removals.
pub fn removal_sequence(actions: &ActionSet, count: usize, window: Window) -> Result<Vec<usize>> {
    let actions = actions.windowed(window)?;
    check_size(actions.len())?;
    let mut peeler = Peeler::new(&actions);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.min(actions.len().saturating_sub(3)) {
        match peeler.step() {
            Some(id) => out.push(id as usize),
            None => break,
        }
    }
    Ok(out)
}

pub fn fit_scenario_hull(actions: &ActionSet, window: Window) -> Result<ScenarioHull> {
    let actions = actions.windowed(window)?;
    check_size(actions.len())?;
    let cross_sections: Vec<ConvexPolygon> = (0..actions.steps())
        .map(|t| ConvexPolygon::hull_of(&actions.step_points(t)))
        .collect();
    let support_count = cross_sections.iter().map(|c| c.vertices().len()).max().unwrap_or(0);
    Ok(ScenarioHull {
        cross_sections,
        support_count,
        n_train: actions.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_points(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = RngSpec::new(seed, 0).rng();
        (0..n)
            .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect()
    }

    /// Brute-force greedy: recompute every hull from scratch for every
    /// candidate removal.
    fn brute_force_sequence(actions: &ActionSet, count: usize) -> Vec<usize> {
        let n = actions.len();
        let mut alive = vec![true; n];
        let size = |alive: &[bool]| {
            let mut a = 0.0;
            for t in 0..actions.steps() {
                let pts: Vec<Point> = (0..n).filter(|&i| alive[i]).map(|i| actions.action(i)[t]).collect();
                a += ConvexPolygon::hull_of(&pts).area();
            }
            a
        };
        let out_of = |i: usize| -> f64 {
            (0..actions.steps())
                .map(|t| {
                    let m = actions.iter().fold([0.0, 0.0], |m, a| [m[0] + a[t][0], m[1] + a[t][1]]);
                    let m = [m[0] / n as f64, m[1] / n as f64];
                    let p = actions.action(i)[t];
                    (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)
                })
                .sum()
        };
        let mut out = Vec::new();
        for _ in 0..count {
            let a0 = size(&alive);
            let mut best: Option<(f64, f64, usize)> = None;
            for i in 0..n {
                if !alive[i] {
                    continue;
                }
                alive[i] = false;
                let a1 = size(&alive);
                alive[i] = true;
                let cand = (a0 - a1, out_of(i), i);
                let better = match best {
                    None => true,
                    Some((ba, bp, _)) => {
                        let da = cand.0 - ba;
                        let dp = cand.1 - bp;
                        da > 1e-9 || (da.abs() <= 1e-9 && dp > 1e-9)
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
            let (_, _, i) = best.unwrap();
            alive[i] = false;
            out.push(i);
        }
        out
    }

    #[test]
    fn greedy_matches_brute_force_single_step() {
        let set = ActionSet::from_points(gaussian_points(60, 3));
        let fast = removal_sequence(&set, 25, Window::Full).unwrap();
        assert_eq!(fast, brute_force_sequence(&set, 25));
    }

    #[test]
    fn greedy_matches_brute_force_multi_step() {
        let mut rng = RngSpec::new(8, 0).rng();
        let mut data = Vec::new();
        for _ in 0..40 {
            let mut p = [0.0, 0.0];
            for _ in 0..3 {
                p[0] += rng.sample::<f64, _>(StandardNormal);
                p[1] += rng.sample::<f64, _>(StandardNormal);
                data.push(p);
            }
        }
        let set = ActionSet::new(3, data).unwrap();
        let fast = removal_sequence(&set, 20, Window::Full).unwrap();
        assert_eq!(fast, brute_force_sequence(&set, 20));
    }

    #[test]
    fn zero_delta_is_full_hull() {
        let set = ActionSet::from_points(gaussian_points(200, 1));
        let tube = fit_quantile_tube(&set, 0.0, Window::Full).unwrap();
        let hull = fit_scenario_hull(&set, Window::Full).unwrap();
        assert_eq!(tube.cross_sections, hull.cross_sections);
        assert_eq!(tube.coverage, 200);
        assert!(set.iter().all(|a| tube.contains(a)));
    }

    #[test]
    fn interval_peeling_trims_both_ends() {
        let mut rng = RngSpec::new(5, 0).rng();
        let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        // Constant 1D actions over five steps.
        let data: Vec<Point> = xs.iter().flat_map(|&x| [[x, 0.0]; 5]).collect();
        let set = ActionSet::new(5, data).unwrap();
        let tube = fit_quantile_tube(&set, 0.1, Window::Full).unwrap();
        assert_eq!(tube.coverage, 900);
        assert_eq!(set.iter().filter(|a| tube.contains(a)).count(), 900);
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let (q05, q95) = (sorted[50], sorted[949]);
        for poly in &tube.cross_sections {
            let v = poly.vertices();
            let lo = v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            assert!((lo - q05).abs() < 0.02 && (hi - q95).abs() < 0.02, "[{lo}, {hi}] vs [{q05}, {q95}]");
        }
    }

    #[test]
    fn duplicates_and_small_sets() {
        let pts = vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let set = ActionSet::from_points(pts);
        let tube = fit_quantile_tube(&set, 0.4, Window::Full).unwrap();
        assert_eq!(tube.coverage, 4);
        assert!(fit_scenario_hull(&ActionSet::from_points(vec![[0.0, 0.0], [1.0, 1.0]]), Window::Full).is_err());
    }

    #[test]
    fn triangle_support() {
        let set = ActionSet::new(2, vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        let hull = fit_scenario_hull(&set, Window::Full).unwrap();
        assert_eq!(hull.support_count, 3);
        assert!(hull.cross_sections.iter().all(|c| c.vertices().len() == 3));
    }
}
