//! 3D convex hull by quickhull.
//!
//! Facets are triangles with outward normals. A point counts as outside a
//! facet only when its signed distance exceeds `eps`, where `eps` is
//! [`DEFAULT_EPSILON_FACTOR`] times the bounding-box diagonal. Points within
//! `eps` of the hull surface are therefore not reported as vertices.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{bounding_box, Point3};

pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ConvexHull {
    /// Outward-oriented triangles (counter-clockwise seen from outside).
    pub facets: Vec<[usize; 3]>,
    /// Sorted indices of input points that are hull vertices.
    pub vertices: Vec<usize>,
    pub epsilon: f64,
}

/// Indices (ascending) of the points that are vertices of the convex hull.
pub fn convex_hull_3d(points: &[Point3]) -> Result<Vec<usize>> {
    Ok(ConvexHull::build(points)?.vertices)
}

struct Facet {
    v: [usize; 3],
    normal: Vector3<f64>,
    /// adj[i] is the facet across edge (v[i], v[i+1]).
    adj: [usize; 3],
    outside: Vec<usize>,
    furthest: usize,
    furthest_dist: f64,
    alive: bool,
}

impl Facet {
    fn new(points: &[Point3], v: [usize; 3]) -> Self {
        let [a, b, c] = v.map(|i| points[i]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        let normal = if len > 0.0 { n / len } else { Vector3::zeros() };
        Self {
            v,
            normal,
            adj: [usize::MAX; 3],
            outside: Vec::new(),
            furthest: usize::MAX,
            furthest_dist: 0.0,
            alive: true,
        }
    }

    #[inline]
    fn distance(&self, points: &[Point3], q: &Point3) -> f64 {
        self.normal.dot(&(q - points[self.v[0]]))
    }

    fn push_outside(&mut self, idx: usize, dist: f64) {
        if self.outside.is_empty() || dist > self.furthest_dist {
            self.furthest = idx;
            self.furthest_dist = dist;
        }
        self.outside.push(idx);
    }

    /// Local edge index `k` with `v[k] == a && v[k+1] == b`.
    fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        (0..3).find(|&k| self.v[k] == a && self.v[(k + 1) % 3] == b)
    }
}

impl ConvexHull {
    pub fn build(points: &[Point3]) -> Result<Self> {
        Self::build_with_epsilon_factor(points, DEFAULT_EPSILON_FACTOR)
    }

    pub fn build_with_epsilon_factor(points: &[Point3], factor: f64) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid(format!("convex hull needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("convex hull input has non-finite coordinates"));
        }
        let (lo, hi) = bounding_box(points).expect("non-empty");
        let eps = factor * (hi - lo).norm();
        let mut builder = Builder {
            points,
            eps,
            facets: Vec::new(),
            visit: Vec::new(),
            stamp: 0,
        };
        builder.initial_simplex()?;
        builder.expand()?;
        Ok(builder.finish())
    }
}

struct Builder<'a> {
    points: &'a [Point3],
    eps: f64,
    facets: Vec<Facet>,
    visit: Vec<u32>,
    stamp: u32,
}

impl Builder<'_> {
    fn initial_simplex(&mut self) -> Result<()> {
        let pts = self.points;
        let mut extremes = [0usize; 6];
        for (i, p) in pts.iter().enumerate() {
            for axis in 0..3 {
                if p[axis] < pts[extremes[2 * axis]][axis] {
                    extremes[2 * axis] = i;
                }
                if p[axis] > pts[extremes[2 * axis + 1]][axis] {
                    extremes[2 * axis + 1] = i;
                }
            }
        }
        let mut best = (0.0, 0usize, 0usize);
        for (k, &i) in extremes.iter().enumerate() {
            for &j in &extremes[k + 1..] {
                let d = (pts[i] - pts[j]).norm();
                if d > best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (span, a, b) = best;
        if span <= self.eps {
            return Err(Error::degenerate("all hull points coincide"));
        }
        let dir = (pts[b] - pts[a]) / span;
        let (c, line_dist) = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - pts[a]).cross(&dir).norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if line_dist <= self.eps {
            return Err(Error::degenerate("hull points are collinear"));
        }
        let n = (pts[b] - pts[a]).cross(&(pts[c] - pts[a])).normalize();
        let (d, plane_dist) = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, n.dot(&(p - pts[a]))))
            .fold((0, 0.0f64), |acc, x| if x.1.abs() > acc.1.abs() { x } else { acc });
        if plane_dist.abs() <= self.eps {
            return Err(Error::degenerate("hull points are coplanar"));
        }

        let corners = [a, b, c, d];
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
        for skip in 0..4 {
            let mut tri = [0usize; 3];
            let mut k = 0;
            for (m, &v) in corners.iter().enumerate() {
                if m != skip {
                    tri[k] = v;
                    k += 1;
                }
            }
            let mut facet = Facet::new(pts, tri);
            if facet.distance(pts, &pts[corners[skip]]) > 0.0 {
                tri.swap(0, 1);
                facet = Facet::new(pts, tri);
            }
            let id = self.facets.len();
            for e in 0..3 {
                edge_owner.insert((tri[e], tri[(e + 1) % 3]), id);
            }
            self.facets.push(facet);
        }
        for id in 0..4 {
            for e in 0..3 {
                let v = self.facets[id].v;
                let twin = edge_owner[&(v[(e + 1) % 3], v[e])];
                self.facets[id].adj[e] = twin;
            }
        }

        for (i, p) in pts.iter().enumerate() {
            if corners.contains(&i) {
                continue;
            }
            self.assign(i, p, 0..4);
        }
        Ok(())
    }

    /// Attach point `i` to the candidate facet it is furthest outside of.
    fn assign(&mut self, i: usize, p: &Point3, candidates: std::ops::Range<usize>) {
        let mut best = None;
        let mut best_dist = self.eps;
        for f in candidates {
            let d = self.facets[f].distance(self.points, p);
            if d > best_dist {
                best_dist = d;
                best = Some(f);
            }
        }
        if let Some(f) = best {
            self.facets[f].push_outside(i, best_dist);
        }
    }

    fn expand(&mut self) -> Result<()> {
        let mut pending: Vec<usize> = (0..self.facets.len())
            .filter(|&f| !self.facets[f].outside.is_empty())
            .collect();
        let mut visible = Vec::new();
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new();
        let mut frames: Vec<(usize, usize, u8)> = Vec::new();

        while let Some(root) = pending.pop() {
            if !self.facets[root].alive || self.facets[root].outside.is_empty() {
                continue;
            }
            let apex = self.facets[root].furthest;
            let eye = self.points[apex];

            self.stamp = self.stamp.wrapping_add(1);
            if self.stamp == 0 {
                self.visit.iter_mut().for_each(|s| *s = 0);
                self.stamp = 1;
            }
            self.visit.resize(self.facets.len(), 0);
            visible.clear();
            horizon.clear();
            frames.clear();

            // Depth-first walk over visible facets; visiting edges in
            // rotational order yields the horizon as a closed CCW loop.
            self.visit[root] = self.stamp;
            visible.push(root);
            frames.push((root, 0, 3));
            while let Some(frame) = frames.last_mut() {
                if frame.2 == 0 {
                    frames.pop();
                    continue;
                }
                let (f, e) = (frame.0, frame.1);
                frame.1 = (e + 1) % 3;
                frame.2 -= 1;
                let opp = self.facets[f].adj[e];
                if self.visit[opp] == self.stamp {
                    continue;
                }
                let (a, b) = (self.facets[f].v[e], self.facets[f].v[(e + 1) % 3]);
                if self.facets[opp].distance(self.points, &eye) > self.eps {
                    self.visit[opp] = self.stamp;
                    visible.push(opp);
                    let k = self.facets[opp]
                        .edge_index(b, a)
                        .ok_or_else(|| Error::degenerate("hull adjacency is inconsistent"))?;
                    frames.push((opp, (k + 1) % 3, 2));
                } else {
                    horizon.push((a, b, opp));
                }
            }

            let h = horizon.len();
            if h < 3 || (0..h).any(|k| horizon[k].1 != horizon[(k + 1) % h].0) {
                return Err(Error::degenerate(
                    "hull horizon is not a simple loop (numerically degenerate input)",
                ));
            }

            let first_new = self.facets.len();
            for (k, &(a, b, outer)) in horizon.iter().enumerate() {
                let id = first_new + k;
                let mut facet = Facet::new(self.points, [a, b, apex]);
                facet.adj = [outer, first_new + (k + 1) % h, first_new + (k + h - 1) % h];
                let ke = self.facets[outer]
                    .edge_index(b, a)
                    .ok_or_else(|| Error::degenerate("hull horizon edge has no twin"))?;
                self.facets[outer].adj[ke] = id;
                self.facets.push(facet);
            }

            let new_range = first_new..self.facets.len();
            for &f in &visible {
                self.facets[f].alive = false;
                let orphans = std::mem::take(&mut self.facets[f].outside);
                for q in orphans {
                    if q != apex {
                        let p = self.points[q];
                        self.assign(q, &p, new_range.clone());
                    }
                }
            }
            for f in new_range {
                if !self.facets[f].outside.is_empty() {
                    pending.push(f);
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> ConvexHull {
        let facets: Vec<[usize; 3]> = self.facets.iter().filter(|f| f.alive).map(|f| f.v).collect();
        let mut vertices: Vec<usize> = facets.iter().flatten().copied().collect();
        vertices.sort_unstable();
        vertices.dedup();
        ConvexHull {
            facets,
            vertices,
            epsilon: self.eps,
        }
    }
}
