//! Exact nearest-neighbour queries over a static point set.

use crate::geometry::Point3;

const LEAF_SIZE: usize = 12;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: u32,
    hi: u32,
    axis: u8,
    split: f64,
    left: u32,
    right: u32,
}

/// Static k-d tree over a slice of points; results are indices into that
/// slice. Ties in distance resolve to the lowest index.
pub struct PointIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl PointIndex {
    pub fn build(points: &[Point3]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo: lo as u32,
            hi: hi as u32,
            axis: 0,
            split: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        let pts = &self.points;
        let slice = &mut self.order[lo..hi];
        let mut min = pts[slice[0] as usize];
        let mut max = min;
        for &i in slice.iter() {
            min = min.inf(&pts[i as usize]);
            max = max.sup(&pts[i as usize]);
        }
        let spread = max - min;
        let axis = spread.imax();
        if spread[axis] == 0.0 {
            // all coincident: keep as an oversized leaf
            return id;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| {
            pts[*a as usize][axis]
                .total_cmp(&pts[*b as usize][axis])
                .then(a.cmp(b))
        });
        let split = pts[slice[mid] as usize][axis];
        let left = self.build_node(lo, lo + mid);
        let right = self.build_node(lo + mid, hi);
        let node = &mut self.nodes[id as usize];
        node.axis = axis as u8;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and Euclidean distance of the nearest indexed point.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_in(0, q, &mut best);
        Some((best.1, best.0.sqrt()))
    }

    fn nearest_in(&self, node: u32, q: &Point3, best: &mut (f64, usize)) {
        let n = self.nodes[node as usize];
        if n.left == NO_CHILD {
            for &i in &self.order[n.lo as usize..n.hi as usize] {
                let d2 = (self.points[i as usize] - q).norm_squared();
                let i = i as usize;
                if d2 < best.0 || (d2 == best.0 && i < best.1) {
                    *best = (d2, i);
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.nearest_in(near, q, best);
        if diff * diff <= best.0 {
            self.nearest_in(far, q, best);
        }
    }

    /// The `k` nearest points, closest first.
    pub fn nearest_k(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.nearest_k_in(0, q, k, &mut best);
        best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn nearest_k_in(&self, node: u32, q: &Point3, k: usize, best: &mut Vec<(f64, usize)>) {
        let n = self.nodes[node as usize];
        if n.left == NO_CHILD {
            for &i in &self.order[n.lo as usize..n.hi as usize] {
                let cand = ((self.points[i as usize] - q).norm_squared(), i as usize);
                let pos = best.partition_point(|b| b.0 < cand.0 || (b.0 == cand.0 && b.1 < cand.1));
                if pos < k {
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.nearest_k_in(near, q, k, best);
        let bound = if best.len() < k { f64::INFINITY } else { best[k - 1].0 };
        if diff * diff <= bound {
            self.nearest_k_in(far, q, k, best);
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() && radius >= 0.0 {
            self.within_in(0, q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_in(&self, node: u32, q: &Point3, r2: f64, out: &mut Vec<usize>) {
        let n = self.nodes[node as usize];
        if n.left == NO_CHILD {
            for &i in &self.order[n.lo as usize..n.hi as usize] {
                if (self.points[i as usize] - q).norm_squared() <= r2 {
                    out.push(i as usize);
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.within_in(near, q, r2, out);
        if diff * diff <= r2 {
            self.within_in(far, q, r2, out);
        }
    }
}

/// Distance from each point to its nearest *other* point in the same set.
pub fn nearest_neighbor_spacing(points: &[Point3]) -> Vec<f64> {
    if points.len() < 2 {
        return Vec::new();
    }
    let index = PointIndex::build(points);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .nearest_k(p, 2)
                .into_iter()
                .find(|(j, _)| *j != i)
                .map_or(0.0, |(_, d)| d)
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(points: &[Point3], q: &Point3) -> f64 {
        points.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..700)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let index = PointIndex::build(&pts);
        for _ in 0..300 {
            let q = Point3::new(rng.gen_range(-0.5..1.5), rng.gen(), rng.gen());
            let (i, d) = index.nearest(&q).unwrap();
            assert_eq!(d, (pts[i] - q).norm());
            assert_eq!(d, brute_nearest(&pts, &q));
            let k5 = index.nearest_k(&q, 5);
            let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(j, p)| ((p - q).norm(), j)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(k5.iter().map(|x| x.0).collect::<Vec<_>>(), all[..5].iter().map(|x| x.1).collect::<Vec<_>>());
            let r = 0.15;
            let want: Vec<usize> = (0..pts.len()).filter(|&j| (pts[j] - q).norm() <= r).collect();
            assert_eq!(index.within(&q, r), want);
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 200];
        let index = PointIndex::build(&pts);
        assert_eq!(index.nearest(&Point3::zeros()).unwrap(), (0, 3f64.sqrt()));
        assert!(nearest_neighbor_spacing(&pts).iter().all(|d| *d == 0.0));
        assert!(PointIndex::build(&[]).nearest(&Point3::zeros()).is_none());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
