//! Exact K-nearest-neighbor search over normalized `(x, y, z, t)` points.
//!
//! Coordinates are divided per axis by a scene scale before any distance is
//! taken. Neighbors are ranked by squared distance, ties by index, which
//! makes the result unique and equal to a brute-force scan.

use rayon::prelude::*;

use crate::loss::LossError;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Knn4DIndex {
    k: usize,
    scales: [f64; 4],
    neighbors: Vec<u32>,
    sq_distances: Vec<f64>,
}

impl Knn4DIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scales(&self) -> [f64; 4] {
        self.scales
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Neighbors of point `i`, nearest first. Never contains `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Squared normalized distances matching [`neighbors`](Self::neighbors).
    pub fn sq_distances(&self, i: usize) -> &[f64] {
        &self.sq_distances[i * self.k..(i + 1) * self.k]
    }
}

/// Per-axis extent of a point set, used as the normalization scale. Axes
/// with no spread get scale 1.
pub fn scene_scales(points: &[[f64; 4]]) -> [f64; 4] {
    std::array::from_fn(|a| {
        let lo = points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        let r = hi - lo;
        if r > 1e-12 {
            r
        } else {
            1.0
        }
    })
}

struct Tree {
    points: Vec<[f64; 4]>,
    order: Vec<u32>,
    /// Split axis of the node whose pivot sits at this position of `order`.
    axis: Vec<u8>,
}

impl Tree {
    fn build(points: Vec<[f64; 4]>) -> Self {
        let n = points.len();
        let mut tree = Tree { points, order: (0..n as u32).collect(), axis: vec![0; n] };
        tree.split(0, n);
        tree
    }

    fn split(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let pts = &self.points;
        let slice = &mut self.order[lo..hi];
        let axis = (0..4)
            .max_by(|&a, &b| {
                let spread = |ax: usize| {
                    let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &i in slice.iter() {
                        let v = pts[i as usize][ax];
                        mn = mn.min(v);
                        mx = mx.max(v);
                    }
                    mx - mn
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap();
        let mid = (hi - lo) / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][axis].total_cmp(&pts[b as usize][axis])
        });
        self.axis[lo + mid] = axis as u8;
        self.split(lo, lo + mid);
        self.split(lo + mid + 1, hi);
    }

    fn query(&self, q: usize, k: usize) -> Vec<(f64, u32)> {
        let mut best = Vec::with_capacity(k + 1);
        self.search(q, k, 0, self.order.len(), &mut best);
        best
    }

    #[inline]
    fn consider(&self, q: usize, i: u32, k: usize, best: &mut Vec<(f64, u32)>) {
        if i as usize == q {
            return;
        }
        let (a, b) = (&self.points[q], &self.points[i as usize]);
        let d: f64 = (0..4).map(|x| (a[x] - b[x]) * (a[x] - b[x])).sum();
        let key = (d, i);
        let full = best.len() == k;
        if full {
            let worst = best[k - 1];
            if d.total_cmp(&worst.0).then(i.cmp(&worst.1)).is_ge() {
                return;
            }
        }
        let pos = best.partition_point(|&(bd, bi)| bd.total_cmp(&d).then(bi.cmp(&i)).is_lt());
        best.insert(pos, key);
        if best.len() > k {
            best.pop();
        }
    }

    fn search(&self, q: usize, k: usize, lo: usize, hi: usize, best: &mut Vec<(f64, u32)>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.consider(q, i, k, best);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid];
        let axis = self.axis[mid] as usize;
        self.consider(q, pivot, k, best);
        let diff = self.points[q][axis] - self.points[pivot as usize][axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, k, near.0, near.1, best);
        if best.len() < k || diff * diff <= best[k - 1].0 {
            self.search(q, k, far.0, far.1, best);
        }
    }
}

/// Builds the neighbor lists of every point.
pub fn build_knn4d(points: &[[f64; 4]], k: usize, scales: [f64; 4]) -> Result<Knn4DIndex, LossError> {
    if k == 0 || points.len() <= k {
        return Err(LossError::TooFewPoints { points: points.len(), k });
    }
    let normalized: Vec<[f64; 4]> =
        points.iter().map(|p| std::array::from_fn(|a| p[a] / scales[a])).collect();
    let tree = Tree::build(normalized);
    let lists: Vec<Vec<(f64, u32)>> =
        (0..points.len()).into_par_iter().map(|q| tree.query(q, k)).collect();
    let mut neighbors = Vec::with_capacity(points.len() * k);
    let mut sq_distances = Vec::with_capacity(points.len() * k);
    for list in lists {
        for (d, i) in list {
            neighbors.push(i);
            sq_distances.push(d);
        }
    }
    Ok(Knn4DIndex { k, scales, neighbors, sq_distances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_middle_point() {
        let pts = [[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [3.0, 0.0, 0.0, 0.0]];
        let idx = build_knn4d(&pts, 1, [1.0; 4]).unwrap();
        assert_eq!(idx.neighbors(1), &[0]);
        assert_eq!(idx.neighbors(0), &[1]);
        assert_eq!(idx.neighbors(2), &[1]);
    }

    #[test]
    fn temporal_scale_decides_clusters() {
        // Two spatial pairs far apart in x; each pair member is separated in t.
        let pts = [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 100.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 100.0],
        ];
        let raw = build_knn4d(&pts, 1, [1.0; 4]).unwrap();
        assert_eq!(raw.neighbors(0), &[2]);
        let flat_t = build_knn4d(&pts, 1, [1.0, 1.0, 1.0, 1e6]).unwrap();
        assert_eq!(flat_t.neighbors(0), &[1]);
    }

    #[test]
    fn too_few_points() {
        let pts = [[0.0; 4]; 3];
        assert!(matches!(build_knn4d(&pts, 3, [1.0; 4]), Err(LossError::TooFewPoints { .. })));
    }

    #[test]
    fn duplicate_points_rank_by_index() {
        let pts = [[0.5; 4]; 12];
        let idx = build_knn4d(&pts, 3, [1.0; 4]).unwrap();
        assert_eq!(idx.neighbors(0), &[1, 2, 3]);
        assert_eq!(idx.neighbors(5), &[0, 1, 2]);
    }
}
