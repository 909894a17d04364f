//! Planar geometry shared by the planner, the vision module and the harness.
//!
//! Polygons are plain vertex lists without a repeated closing vertex. Most
//! helpers accept either orientation; [`partition_polygon`] always returns
//! counter-clockwise faces.

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn of(points: &[Point2]) -> Option<Bounds> {
        let first = *points.first()?;
        let mut b = Bounds { min: first, max: first };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn union(self, other: Bounds) -> Bounds {
        Bounds {
            min: Point2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

pub fn area(poly: &[Point2]) -> f64 {
    signed_area(poly).abs()
}

/// Area centroid. Falls back to the vertex mean for degenerate polygons.
pub fn centroid(poly: &[Point2]) -> Point2 {
    let a = signed_area(poly);
    let n = poly.len();
    if a.abs() < 1e-300 || n < 3 {
        let s = poly.iter().fold(Point2::default(), |acc, &p| acc + p);
        return s * (1.0 / n.max(1) as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let c = p.cross(q);
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    Point2::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Even-odd point-in-polygon test. Points exactly on an edge may land on
/// either side.
pub fn contains_point(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let a = poly[i];
        let b = poly[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn polyline_length(line: &[Point2]) -> f64 {
    line.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Crossings of the vertical line `x = x0` with the polygon boundary, sorted
/// by `y`.
pub fn vertical_crossings(poly: &[Point2], x0: f64) -> Vec<f64> {
    line_crossings(poly, x0, |p| (p.x, p.y))
}

/// Crossings of the horizontal line `y = y0` with the polygon boundary,
/// sorted by `x`.
pub fn horizontal_crossings(poly: &[Point2], y0: f64) -> Vec<f64> {
    line_crossings(poly, y0, |p| (p.y, p.x))
}

fn line_crossings(poly: &[Point2], c: f64, key: impl Fn(Point2) -> (f64, f64)) -> Vec<f64> {
    let n = poly.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a_u, a_v) = key(poly[i]);
        let (b_u, b_v) = key(poly[(i + 1) % n]);
        // half-open rule so a vertex on the line is counted once
        if (a_u <= c) != (b_u <= c) {
            let t = (c - a_u) / (b_u - a_u);
            out.push(a_v + t * (b_v - a_v));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Ramer-Douglas-Peucker simplification with perpendicular distance.
pub fn simplify_rdp(line: &[Point2], tolerance: f64) -> Vec<Point2> {
    if line.len() < 3 {
        return line.to_vec();
    }
    let mut keep = vec![false; line.len()];
    keep[0] = true;
    keep[line.len() - 1] = true;
    let mut stack = vec![(0usize, line.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut worst, mut worst_d) = (lo, -1.0);
        for i in lo + 1..hi {
            let d = point_segment_distance(line[i], line[lo], line[hi]);
            if d > worst_d {
                worst = i;
                worst_d = d;
            }
        }
        if worst_d > tolerance {
            keep[worst] = true;
            stack.push((lo, worst));
            stack.push((worst, hi));
        }
    }
    line.iter().zip(keep).filter_map(|(p, k)| k.then_some(*p)).collect()
}

/// Which side of an oriented cut a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Classifies points against an open polyline that is extended along its end
/// tangents far past `extent`, so that it splits the plane in two.
#[derive(Clone, Debug)]
pub struct CutSide {
    left_region: Vec<Point2>,
}

impl CutSide {
    pub fn new(cut: &[Point2], extent: Bounds) -> Option<CutSide> {
        let cut = dedup_consecutive(cut);
        if cut.len() < 2 {
            return None;
        }
        let reach = 100.0 * (extent.diagonal() + polyline_length(&cut)).max(1e-9);
        let n = cut.len();
        let start_dir = unit(cut[0] - cut[1])?;
        let end_dir = unit(cut[n - 1] - cut[n - 2])?;
        let far_start = cut[0] + start_dir * reach;
        let far_end = cut[n - 1] + end_dir * reach;
        // left normal of the overall chord
        let chord = unit(far_end - far_start)?;
        let left = Point2::new(-chord.y, chord.x) * reach;
        let mut region = Vec::with_capacity(n + 4);
        region.push(far_start);
        region.extend_from_slice(&cut);
        region.push(far_end);
        region.push(far_end + left);
        region.push(far_start + left);
        Some(CutSide { left_region: region })
    }

    pub fn side(&self, p: Point2) -> Side {
        if contains_point(&self.left_region, p) {
            Side::Left
        } else {
            Side::Right
        }
    }
}

fn unit(v: Point2) -> Option<Point2> {
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v * (1.0 / n))
}

fn dedup_consecutive(line: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(line.len());
    for &p in line {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// A point strictly inside a polygon face, used to classify faces.
pub fn interior_point(poly: &[Point2]) -> Point2 {
    let c = centroid(poly);
    if contains_point(poly, c) {
        return c;
    }
    // midpoint of the widest horizontal span through the centroid's row,
    // nudged off vertex rows
    let b = Bounds::of(poly).expect("non-empty polygon");
    for k in 0..16 {
        let y = c.y + b.height() * 1e-3 * (k as f64 * 0.618).sin();
        let xs = horizontal_crossings(poly, y);
        let mut best: Option<(f64, f64)> = None;
        for pair in xs.chunks_exact(2) {
            let w = pair[1] - pair[0];
            if best.is_none_or(|(bw, _)| w > bw) {
                best = Some((w, 0.5 * (pair[0] + pair[1])));
            }
        }
        if let Some((w, x)) = best {
            if w > 0.0 {
                return Point2::new(x, y);
            }
        }
    }
    c
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EdgeKind {
    Boundary,
    Cut,
}

/// Splits a simple polygon into the faces induced by a set of cut polylines.
///
/// Cut portions outside the polygon are discarded, as are dangling cut
/// pieces that do not separate anything. The returned faces are
/// counter-clockwise and their areas sum to the input area up to rounding.
pub fn partition_polygon(poly: &[Point2], cuts: &[Vec<Point2>]) -> Vec<Vec<Point2>> {
    let poly = dedup_consecutive(poly);
    if poly.len() < 3 || area(&poly) == 0.0 {
        return Vec::new();
    }
    let mut extent = Bounds::of(&poly).expect("non-empty");
    for c in cuts {
        if let Some(b) = Bounds::of(c) {
            extent = extent.union(b);
        }
    }
    let scale = extent.diagonal().max(f64::MIN_POSITIVE);
    let snap = scale * 1e-11;

    let mut verts = VertexPool::new(snap);
    let mut segments: Vec<(Point2, Point2, EdgeKind)> = Vec::new();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        if a != b {
            segments.push((a, b, EdgeKind::Boundary));
        }
    }
    for cut in cuts {
        for w in cut.windows(2) {
            if w[0] != w[1] && w[0].is_finite() && w[1].is_finite() {
                segments.push((w[0], w[1], EdgeKind::Cut));
            }
        }
    }

    // split parameters per segment: (t, vertex id)
    let mut splits: Vec<Vec<(f64, usize)>> = segments
        .iter()
        .map(|&(a, b, _)| vec![(0.0, verts.id(a)), (1.0, verts.id(b))])
        .collect();
    for i in 0..segments.len() {
        for j in i + 1..segments.len() {
            let (si, sj) = (segments[i], segments[j]);
            if si.2 == EdgeKind::Boundary && sj.2 == EdgeKind::Boundary {
                continue;
            }
            for hit in intersect_segments(si.0, si.1, sj.0, sj.1, snap) {
                let id = verts.id(hit.point);
                splits[i].push((hit.t, id));
                splits[j].push((hit.u, id));
            }
        }
    }

    let mut edges: HashMap<(usize, usize), EdgeKind> = HashMap::new();
    for (k, seg_splits) in splits.iter_mut().enumerate() {
        seg_splits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let kind = segments[k].2;
        for w in seg_splits.windows(2) {
            let (u, v) = (w[0].1, w[1].1);
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if kind == EdgeKind::Cut {
                let mid = verts.points[u].lerp(verts.points[v], 0.5);
                if !contains_point(&poly, mid) {
                    continue;
                }
            }
            let entry = edges.entry(key).or_insert(kind);
            if kind == EdgeKind::Boundary {
                *entry = EdgeKind::Boundary;
            }
        }
    }

    // prune dangling edges
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); verts.points.len()];
    for &(u, v) in edges.keys() {
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    let mut queue: Vec<usize> = (0..adjacency.len()).filter(|&v| adjacency[v].len() == 1).collect();
    while let Some(v) = queue.pop() {
        if adjacency[v].len() != 1 {
            continue;
        }
        let u = adjacency[v][0];
        adjacency[v].clear();
        adjacency[u].retain(|&w| w != v);
        if adjacency[u].len() == 1 {
            queue.push(u);
        }
    }

    // sort neighbours counter-clockwise around each vertex
    let pts = &verts.points;
    for (v, nbrs) in adjacency.iter_mut().enumerate() {
        let origin = pts[v];
        nbrs.sort_by(|&a, &b| {
            let da = pts[a] - origin;
            let db = pts[b] - origin;
            da.y.atan2(da.x).total_cmp(&db.y.atan2(db.x))
        });
    }

    // face tracing: after arriving at v from u, leave along the neighbour
    // immediately clockwise of u, which keeps the face on the left
    let mut visited: HashMap<(usize, usize), bool> = HashMap::new();
    let mut faces = Vec::new();
    for u in 0..adjacency.len() {
        for &v in &adjacency[u] {
            if visited.contains_key(&(u, v)) {
                continue;
            }
            let mut face = Vec::new();
            let (mut a, mut b) = (u, v);
            let limit = 4 * edges.len() + 8;
            let mut steps = 0;
            loop {
                visited.insert((a, b), true);
                face.push(pts[a]);
                let nbrs = &adjacency[b];
                let idx = nbrs.iter().position(|&w| w == a).expect("symmetric adjacency");
                let next = nbrs[(idx + nbrs.len() - 1) % nbrs.len()];
                a = b;
                b = next;
                steps += 1;
                if (a, b) == (u, v) || steps > limit {
                    break;
                }
            }
            if signed_area(&face) > 0.0 {
                faces.push(face);
            }
        }
    }
    faces
}

struct Hit {
    t: f64,
    u: f64,
    point: Point2,
}

fn intersect_segments(p: Point2, p2: Point2, q: Point2, q2: Point2, snap: f64) -> Vec<Hit> {
    let r = p2 - p;
    let s = q2 - q;
    let denom = r.cross(s);
    let qp = q - p;
    let rl = r.norm();
    let sl = s.norm();
    let mut hits = Vec::new();
    if denom.abs() > 1e-12 * rl * sl {
        let t = qp.cross(s) / denom;
        let u = qp.cross(r) / denom;
        let tt = snap / rl;
        let tu = snap / sl;
        if t >= -tt && t <= 1.0 + tt && u >= -tu && u <= 1.0 + tu {
            let t = t.clamp(0.0, 1.0);
            let u = u.clamp(0.0, 1.0);
            hits.push(Hit { t, u, point: p + r * t });
        }
        return hits;
    }
    // parallel: only collinear overlaps matter
    if qp.cross(r).abs() > snap * rl {
        return hits;
    }
    let rr = r.dot(r);
    let ss = s.dot(s);
    for (pt, u) in [(q, 0.0), (q2, 1.0)] {
        let t = (pt - p).dot(r) / rr;
        if (0.0..=1.0).contains(&t) {
            hits.push(Hit { t, u, point: pt });
        }
    }
    for (pt, t) in [(p, 0.0), (p2, 1.0)] {
        let u = (pt - q).dot(s) / ss;
        if (0.0..=1.0).contains(&u) {
            hits.push(Hit { t, u, point: pt });
        }
    }
    hits
}

/// Vertex store that merges points closer than the snap distance.
struct VertexPool {
    snap: f64,
    points: Vec<Point2>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl VertexPool {
    fn new(snap: f64) -> Self {
        Self { snap, points: Vec::new(), grid: HashMap::new() }
    }

    fn cell(&self, p: Point2) -> (i64, i64) {
        ((p.x / (self.snap * 4.0)).floor() as i64, (p.y / (self.snap * 4.0)).floor() as i64)
    }

    fn id(&mut self, p: Point2) -> usize {
        let (cx, cy) = self.cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.grid.get(&(cx + dx, cy + dy)) {
                    for &id in ids {
                        if self.points[id].distance(p) <= self.snap {
                            return id;
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.grid.entry((cx, cy)).or_default().push(id);
        id
    }
}
