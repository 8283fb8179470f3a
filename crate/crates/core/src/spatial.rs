//! Uniform grid of item references keyed by bounding box.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::mesh::geom::Aabb;

/// Buckets items (triangles or points) into cubic cells by their bounding boxes.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    origin: Point3<f64>,
    cell: f64,
    n: [usize; 3],
    start: Vec<u32>,
    items: Vec<u32>,
    lo_cell: Vec<[usize; 3]>,
    boxes: Vec<Aabb>,
}

const MAX_CELLS_PER_ITEM: usize = 8;

impl UniformGrid {
    /// `cell` is the requested cell edge length; it is enlarged when the
    /// requested size would create far more cells than items.
    pub fn build(boxes: &[Aabb], cell: f64) -> Self {
        let mut bounds = Aabb::empty();
        for b in boxes {
            bounds.include(&b.lo);
            bounds.include(&b.hi);
        }
        if boxes.is_empty() {
            bounds = Aabb { lo: Point3::origin(), hi: Point3::origin() };
        }
        let extent = bounds.hi - bounds.lo;
        let max_cells = (MAX_CELLS_PER_ITEM * boxes.len()).max(4096) as f64;
        let mut cell = if cell.is_finite() && cell > 0.0 { cell } else { extent.max().max(1e-9) };
        let count = |c: f64| -> [usize; 3] {
            [0, 1, 2].map(|a| ((extent[a] / c).floor() as usize + 1).max(1))
        };
        let mut n = count(cell);
        while (n[0] * n[1] * n[2]) as f64 > max_cells {
            cell *= 1.25;
            n = count(cell);
        }
        let mut grid = UniformGrid { origin: bounds.lo, cell, n, start: Vec::new(), items: Vec::new(), lo_cell: Vec::with_capacity(boxes.len()), boxes: boxes.to_vec() };
        let ranges: Vec<([usize; 3], [usize; 3])> = boxes.iter().map(|b| (grid.clamped_cell(&b.lo), grid.clamped_cell(&b.hi))).collect();
        let ncells = n[0] * n[1] * n[2];
        let mut counts = vec![0u32; ncells + 1];
        for (lo, hi) in &ranges {
            grid.for_cells_in(*lo, *hi, |c| counts[c] += 1);
        }
        let mut acc = 0u32;
        for c in counts.iter_mut() {
            let v = *c;
            *c = acc;
            acc += v;
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; acc as usize];
        for (i, (lo, hi)) in ranges.iter().enumerate() {
            grid.for_cells_in(*lo, *hi, |c| {
                items[fill[c] as usize] = i as u32;
                fill[c] += 1;
            });
            grid.lo_cell.push(*lo);
        }
        grid.start = counts;
        grid.items = items;
        grid
    }

    fn clamped_cell(&self, p: &Point3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(self.n[a] - 1)
            }
        })
    }

    #[inline]
    fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n[0] * (c[1] + self.n[1] * c[2])
    }

    fn for_cells_in(&self, lo: [usize; 3], hi: [usize; 3], mut f: impl FnMut(usize)) {
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    f(self.cell_index([x, y, z]));
                }
            }
        }
    }

    #[inline]
    fn cell_items(&self, c: usize) -> &[u32] {
        &self.items[self.start[c] as usize..self.start[c + 1] as usize]
    }

    /// Exact nearest item under `dist`, restricted to distances `< max_dist`.
    ///
    /// `dist(i)` must be a lower-bounded-by-box distance: never smaller than the
    /// distance from the query to item `i`'s bounding box. Ties resolve to the
    /// smallest item index, so the answer is independent of traversal order.
    pub fn nearest(&self, p: &Point3<f64>, max_dist: f64, mut dist: impl FnMut(u32) -> f64) -> Option<(u32, f64)> {
        if self.items.is_empty() {
            return None;
        }
        let c = self.clamped_cell(p);
        let mut best: Option<(u32, f64)> = None;
        let mut k = 0usize;
        loop {
            self.for_ring(c, k, |cell| {
                let limit = best.map_or(max_dist, |b| b.1.min(max_dist));
                if self.cell_box(cell).distance(p) > limit {
                    return;
                }
                for &i in self.cell_items(cell) {
                    // the item's box bounds its distance from below
                    let bd = self.boxes[i as usize].distance(p);
                    if bd >= max_dist {
                        continue;
                    }
                    if let Some((bi, b)) = best {
                        if bd > b || (bd == b && i > bi) {
                            continue;
                        }
                    }
                    let d = dist(i);
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => d < bd || (d == bd && i < bi),
                    };
                    if better {
                        best = Some((i, d));
                    }
                }
            });
            let lb = self.unvisited_lower_bound(p, c, k);
            let best_d = best.map_or(f64::INFINITY, |b| b.1);
            if lb.is_infinite() || lb > best_d || lb >= max_dist {
                break;
            }
            k += 1;
        }
        best.filter(|b| b.1 < max_dist)
    }

    fn cell_box(&self, cell: usize) -> Aabb {
        let x = cell % self.n[0];
        let y = (cell / self.n[0]) % self.n[1];
        let z = cell / (self.n[0] * self.n[1]);
        let lo = self.origin + nalgebra::Vector3::new(x as f64, y as f64, z as f64) * self.cell;
        Aabb { lo, hi: lo + nalgebra::Vector3::repeat(self.cell) }
    }

    fn for_ring(&self, c: [usize; 3], k: usize, mut f: impl FnMut(usize)) {
        let k = k as isize;
        let range = |a: usize| -> (isize, isize) {
            ((c[a] as isize - k).max(0), (c[a] as isize + k).min(self.n[a] as isize - 1))
        };
        let (z0, z1) = range(2);
        let (y0, y1) = range(1);
        let (x0, x1) = range(0);
        for z in z0..=z1 {
            let zs = (z - c[2] as isize).abs() == k;
            for y in y0..=y1 {
                let ys = (y - c[1] as isize).abs() == k;
                if zs || ys {
                    for x in x0..=x1 {
                        f(self.cell_index([x as usize, y as usize, z as usize]));
                    }
                } else {
                    for x in [c[0] as isize - k, c[0] as isize + k] {
                        if x >= 0 && x < self.n[0] as isize {
                            f(self.cell_index([x as usize, y as usize, z as usize]));
                        }
                        if k == 0 {
                            break;
                        }
                    }
                }
            }
        }
    }

    /// Distance from `p` to the part of the grid outside the searched block.
    fn unvisited_lower_bound(&self, p: &Point3<f64>, c: [usize; 3], k: usize) -> f64 {
        let full = Aabb {
            lo: self.origin,
            hi: self.origin + nalgebra::Vector3::new(self.n[0] as f64, self.n[1] as f64, self.n[2] as f64) * self.cell,
        };
        let mut lb = f64::INFINITY;
        for a in 0..3 {
            let lo = c[a] as isize - k as isize;
            let hi = c[a] + k;
            if lo > 0 {
                let mut slab = full;
                slab.hi[a] = self.origin[a] + lo as f64 * self.cell;
                lb = lb.min(slab.distance(p));
            }
            if hi < self.n[a] - 1 {
                let mut slab = full;
                slab.lo[a] = self.origin[a] + (hi + 1) as f64 * self.cell;
                lb = lb.min(slab.distance(p));
            }
        }
        lb
    }

    /// Unordered pairs of items sharing at least one cell and accepted by `keep`,
    /// each reported once, sorted.
    pub fn filtered_pairs(&self, keep: impl Fn(u32, u32) -> bool + Sync) -> Vec<(u32, u32)> {
        let ncells = self.n[0] * self.n[1] * self.n[2];
        let mut pairs: Vec<(u32, u32)> = (0..ncells)
            .into_par_iter()
            .flat_map_iter(|cell| {
                let here = self.cell_items(cell);
                let cz = cell / (self.n[0] * self.n[1]);
                let cy = (cell / self.n[0]) % self.n[1];
                let cx = cell % self.n[0];
                let mut out = Vec::new();
                for (ii, &i) in here.iter().enumerate() {
                    for &j in &here[ii + 1..] {
                        let (li, lj) = (self.lo_cell[i as usize], self.lo_cell[j as usize]);
                        // report the pair only from the first cell both occupy
                        if li[0].max(lj[0]) == cx && li[1].max(lj[1]) == cy && li[2].max(lj[2]) == cz && keep(i.min(j), i.max(j)) {
                            out.push((i.min(j), i.max(j)));
                        }
                    }
                }
                out
            })
            .collect();
        pairs.par_sort_unstable();
        pairs
    }
}
