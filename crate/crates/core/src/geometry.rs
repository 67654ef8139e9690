//! Planar convex hulls and convex-polygon queries.

use serde::{Deserialize, Serialize};

use crate::trajectory::Point;

/// Twice the signed area of triangle `(a, b, c)`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Rounding slack for orientation tests, scaled to the operands.
#[inline]
fn slack(a: Point, b: Point, c: Point) -> f64 {
    1e-12 * dist(a, b) * dist(a, c).max(dist(b, c))
}

/// Convex hull by Andrew's monotone chain. Returns indices into `points` in
/// counter-clockwise order starting from the lowest-x (then lowest-y) point.
/// Collinear boundary points and duplicates are not vertices. Degenerate
/// inputs give one or two vertices.
pub fn convex_hull(points: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        points[i][0]
            .total_cmp(&points[j][0])
            .then(points[i][1].total_cmp(&points[j][1]))
            .then(i.cmp(&j))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    hull_of_sorted(points, &idx)
}

/// Monotone chain over indices already sorted lexicographically, without
/// duplicate coordinates.
pub(crate) fn hull_of_sorted(points: &[Point], idx: &[usize]) -> Vec<usize> {
    if idx.len() <= 2 {
        return idx.to_vec();
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in idx {
        while hull.len() >= 2
            && orient(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= 0.0
        {
            hull.pop();
        }
        hull.push(i);
    }
    let lower = hull.len() + 1;
    for &i in idx.iter().rev().skip(1) {
        while hull.len() >= lower
            && orient(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= 0.0
        {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// Area and perimeter of the closed polygon through `vertices` in order.
/// A two-vertex polygon is a segment traversed both ways.
pub fn area_perimeter(vertices: &[Point]) -> (f64, f64) {
    let n = vertices.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let mut twice_area = 0.0;
    let mut perimeter = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice_area += a[0] * b[1] - a[1] * b[0];
        perimeter += dist(a, b);
    }
    (0.5 * twice_area.abs(), perimeter)
}

/// Convex polygon with counter-clockwise vertices. May be degenerate (a
/// point or a segment). The boundary belongs to the polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn hull_of(points: &[Point]) -> Self {
        Self {
            vertices: convex_hull(points).into_iter().map(|i| points[i]).collect(),
        }
    }

    /// Wraps vertices that are already in counter-clockwise convex order.
    pub fn from_ccw(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        area_perimeter(&self.vertices).0
    }

    pub fn perimeter(&self) -> f64 {
        area_perimeter(&self.vertices).1
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        n < 3
            || (0..n).all(|i| {
                let (a, b, c) = (
                    self.vertices[i],
                    self.vertices[(i + 1) % n],
                    self.vertices[(i + 2) % n],
                );
                orient(a, b, c) > -slack(a, b, c)
            })
    }

    /// Closed-region membership in O(log n).
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 => dist(v[0], p) <= 1e-12 * (1.0 + v[0][0].abs().max(v[0][1].abs())),
            2 => on_segment(v[0], v[1], p),
            n => {
                let o = v[0];
                if orient(o, v[1], p) < -slack(o, v[1], p)
                    || orient(o, v[n - 1], p) > slack(o, v[n - 1], p)
                {
                    return false;
                }
                // Largest i in [1, n-2] with p left of (o, v[i]).
                let (mut lo, mut hi) = (1usize, n - 1);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if orient(o, v[mid], p) >= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (a, b) = (v[lo], v[lo + 1]);
                orient(a, b, p) >= -slack(a, b, p)
            }
        }
    }

    /// Whether every vertex of `other` lies in this polygon.
    pub fn contains_polygon(&self, other: &ConvexPolygon) -> bool {
        other.vertices.iter().all(|&p| self.contains(p))
    }
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    if orient(a, b, p).abs() > slack(a, b, p) {
        return false;
    }
    let tol = 1e-12 * dist(a, b);
    p[0] >= a[0].min(b[0]) - tol
        && p[0] <= a[0].max(b[0]) + tol
        && p[1] >= a[1].min(b[1]) - tol
        && p[1] <= a[1].max(b[1]) + tol
}

/// Closed triangle membership; degenerate triangles act as their segment.
pub(crate) fn in_closed_triangle(a: Point, b: Point, c: Point, p: Point) -> bool {
    let o = orient(a, b, c);
    if o == 0.0 {
        // Collinear: the triangle is the segment spanned by its extremes.
        let pts = [a, b, c];
        let (mut lo, mut hi) = (a, a);
        for q in pts {
            if (q[0], q[1]) < (lo[0], lo[1]) {
                lo = q;
            }
            if (q[0], q[1]) > (hi[0], hi[1]) {
                hi = q;
            }
        }
        return on_segment(lo, hi, p);
    }
    let s = o.signum();
    s * orient(a, b, p) >= -slack(a, b, p)
        && s * orient(b, c, p) >= -slack(b, c, p)
        && s * orient(c, a, p) >= -slack(c, a, p)
}
