//! Vectors, plane rotations, orthogonal sphere sampling and planar loop
//! topology.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Deref, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance used by the planar segment tests.
pub const EPS_GEO: f64 = 1e-12;

/// A point or displacement in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// The k-th standard basis vector of R^d.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &Vector {
    type Output = Vector;
    fn mul(self, s: f64) -> Vector {
        self.scale(s)
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl AddAssign<&Vector> for Vector {
    fn add_assign(&mut self, rhs: &Vector) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `v / |v|`.
pub fn unit(v: &Vector) -> Result<Vector> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok(v.scale(1.0 / n))
}

/// Uniform direction on S^{d-1}.
pub fn random_unit(d: usize, rng: &mut RngStream) -> Vector {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = norm(&g);
        if n > 1e-12 {
            return Vector(g.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Draw `w` uniformly from the sphere `{w : w . v = 0, |w| = radius}`.
///
/// In the plane the sphere has two points, `±radius * v_perp`.
pub fn sample_orthogonal_sphere(v: &Vector, radius: f64, rng: &mut RngStream) -> Result<Vector> {
    let vh = unit(v)?;
    let d = v.dim();
    if d < 2 {
        return Err(Error::UnsupportedDimension(d, "noise needs d >= 2"));
    }
    if d == 2 {
        let s = if rng.coin() { radius } else { -radius };
        return Ok(Vector(vec![-vh[1] * s, vh[0] * s]));
    }
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let c = dot(&g, &vh);
        let proj: Vec<f64> = g
            .iter()
            .zip(vh.iter())
            .map(|(gi, ei)| gi - c * ei)
            .collect();
        let n = norm(&proj);
        if n > 1e-9 {
            let mut w: Vec<f64> = proj.into_iter().map(|x| x * radius / n).collect();
            // one more projection pass keeps w . v at rounding level
            let c2 = dot(&w, &vh);
            for (wi, ei) in w.iter_mut().zip(vh.iter()) {
                *wi -= c2 * ei;
            }
            return Ok(Vector(w));
        }
    }
}

/// Rotation by `angle` in the plane spanned by the orthonormal pair `(e, f)`,
/// identity on the orthogonal complement.
#[derive(Clone, Debug)]
pub struct PlaneRotation {
    e: Vector,
    f: Vector,
    angle: f64,
}

impl PlaneRotation {
    pub fn identity(d: usize) -> Self {
        Self {
            e: Vector::basis(d, 0),
            f: Vector::basis(d, 1 % d),
            angle: 0.0,
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn basis(&self) -> (&Vector, &Vector) {
        (&self.e, &self.f)
    }

    pub fn is_identity(&self) -> bool {
        self.angle == 0.0
    }

    fn rotate(&self, x: &Vector, angle: f64) -> Vector {
        if angle == 0.0 {
            return x.clone();
        }
        let a = x.dot(&self.e);
        let b = x.dot(&self.f);
        let (s, c) = angle.sin_cos();
        // in-plane part (a, b) goes to (c a - s b, s a + c b)
        let da = (c - 1.0) * a - s * b;
        let db = s * a + (c - 1.0) * b;
        x.axpy(da, &self.e).axpy(db, &self.f)
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.rotate(x, self.angle)
    }

    pub fn apply_inverse(&self, x: &Vector) -> Vector {
        self.rotate(x, -self.angle)
    }
}

/// Minimal rotation taking the line `span{from}` onto the line `span{to}`.
///
/// Lines, not rays: the returned angle lies in `[0, pi/2]`.
pub fn plane_rotation_span_to_span(from: &Vector, to: &Vector) -> Result<PlaneRotation> {
    let a = unit(from)?;
    let mut b = unit(to)?;
    let mut c = a.dot(&b);
    if c < 0.0 {
        b = -&b;
        c = -c;
    }
    let perp = b.axpy(-c, &a);
    let pn = perp.norm();
    if pn < 1e-15 {
        return Ok(PlaneRotation::identity(a.dim()));
    }
    let f = perp.scale(1.0 / pn);
    let angle = pn.atan2(c);
    Ok(PlaneRotation { e: a, f, angle })
}

// ---------------------------------------------------------------------------
// planar topology

pub type Point2 = [f64; 2];

#[inline]
pub fn sub2(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn cross2(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dot2(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm2(a: Point2) -> f64 {
    a[0].hypot(a[1])
}

/// Signed angle subtended at `c` by the segment `a -> b`, in `(-pi, pi]`.
#[inline]
pub fn subtended_angle(a: Point2, b: Point2, c: Point2) -> f64 {
    let u = sub2(a, c);
    let v = sub2(b, c);
    cross2(u, v).atan2(dot2(u, v))
}

/// Distance from `c` to the closed segment `a b`.
pub fn point_segment_distance(c: Point2, a: Point2, b: Point2) -> f64 {
    let ab = sub2(b, a);
    let l2 = dot2(ab, ab);
    let t = if l2 == 0.0 {
        0.0
    } else {
        (dot2(sub2(c, a), ab) / l2).clamp(0.0, 1.0)
    };
    norm2(sub2(c, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<Point2>,
    pub closed: bool,
}

impl Polyline {
    pub fn open(vertices: Vec<Point2>) -> Self {
        Self {
            vertices,
            closed: false,
        }
    }

    pub fn closed(vertices: Vec<Point2>) -> Self {
        Self {
            vertices,
            closed: true,
        }
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        Self {
            vertices: v,
            closed: self.closed,
        }
    }

    /// Segments, including the closing one for closed polylines.
    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        let m = if self.closed && n > 1 {
            n
        } else {
            n.saturating_sub(1)
        };
        (0..m).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn min_distance_to(&self, c: Point2) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(c, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Signed winding number of a closed polyline around `center`.
pub fn winding_number(poly: &Polyline, center: Point2) -> Result<i64> {
    let scale = poly
        .vertices
        .iter()
        .map(|v| norm2(sub2(*v, center)))
        .fold(1.0_f64, f64::max);
    let mut total = 0.0;
    for (a, b) in closed_segments(&poly.vertices) {
        if point_segment_distance(center, a, b) <= EPS_GEO * scale {
            return Err(Error::DegenerateQuery);
        }
        total += subtended_angle(a, b, center);
    }
    Ok((total / TAU).round() as i64)
}

fn closed_segments(v: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    let n = v.len();
    (0..n).map(move |i| (v[i], v[(i + 1) % n]))
}

/// Intersection point of segments `p1 p2` and `q1 q2`, if any. Near-tangent
/// and collinear overlapping segments count as intersecting.
pub fn segment_intersection(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> Option<Point2> {
    let r = sub2(p2, p1);
    let s = sub2(q2, q1);
    let scale = norm2(r).max(norm2(s)).max(1e-300);
    let tol = EPS_GEO * scale;
    let denom = cross2(r, s);
    let qp = sub2(q1, p1);
    if denom.abs() > tol * scale {
        let t = cross2(qp, s) / denom;
        let u = cross2(qp, r) / denom;
        let tt = tol / norm2(r).max(1e-300);
        let tu = tol / norm2(s).max(1e-300);
        if t >= -tt && t <= 1.0 + tt && u >= -tu && u <= 1.0 + tu {
            let t = t.clamp(0.0, 1.0);
            return Some([p1[0] + t * r[0], p1[1] + t * r[1]]);
        }
        return None;
    }
    // parallel: intersect only when collinear and overlapping
    if cross2(qp, r).abs() > tol * scale {
        return None;
    }
    let rr = dot2(r, r);
    if rr == 0.0 {
        return (point_segment_distance(p1, q1, q2) <= tol).then_some(p1);
    }
    let t0 = dot2(qp, r) / rr;
    let t1 = dot2(sub2(q2, p1), r) / rr;
    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
    let lo = lo.max(0.0);
    let hi = hi.min(1.0);
    if lo <= hi + tol / rr.sqrt() {
        let t = lo.min(1.0);
        Some([p1[0] + t * r[0], p1[1] + t * r[1]])
    } else {
        None
    }
}

/// Search over the non-adjacent segment pairs of an open
/// trajectory for a sub-loop that winds around the origin and stays
/// farther than `r` from it.
pub fn extract_surrounding_loop(traj: &Polyline, r: f64) -> Option<Polyline> {
    let cell = mean_segment_length(&traj.vertices).max(1e-9) * 2.0;
    let mut det = LoopDetector::new(r, cell);
    for v in &traj.vertices {
        if let Some(lp) = det.push(*v) {
            return Some(lp);
        }
    }
    None
}

fn mean_segment_length(v: &[Point2]) -> f64 {
    if v.len() < 2 {
        return 1.0;
    }
    let total: f64 = v.windows(2).map(|w| norm2(sub2(w[1], w[0]))).sum();
    total / (v.len() - 1) as f64
}

const BLOCK: usize = 64;

/// Incremental surrounding-loop detector for a growing trajectory.
///
/// Segments are hashed into a uniform grid so each new segment is only
/// tested against nearby earlier ones. Within a cell, short segments are
/// further binned by their unwrapped angle: two short segments crossing on
/// the same sheet can never close a loop with nonzero winding, so those
/// bins are skipped. Entering the disc of radius `r` clears the grid, since
/// no later loop can contain an earlier segment. Prefix sums of subtended angles give
/// the winding of any candidate loop in O(1); block minima of segment
/// distances give its clearance from the origin.
#[derive(Clone, Debug)]
pub struct LoopDetector {
    r: f64,
    cell: f64,
    vertices: Vec<Point2>,
    // prefix[k] = total angle from vertex 0 to vertex k around the origin
    prefix: Vec<f64>,
    seg_dist: Vec<f64>,
    block_min: Vec<f64>,
    grid: HashMap<(i64, i64), CellBin>,
    theta0: f64,
}

// segments subtending more than this go to the always-checked list
const SHORT_SPAN: f64 = PI / 4.0;
const SHEET_BIN: f64 = PI / 2.0;

#[derive(Clone, Debug, Default)]
struct CellBin {
    long: Vec<u32>,
    short: Vec<(i64, Vec<u32>)>,
}

impl LoopDetector {
    pub fn new(r: f64, cell: f64) -> Self {
        Self {
            r,
            cell,
            vertices: Vec::new(),
            prefix: Vec::new(),
            seg_dist: Vec::new(),
            block_min: Vec::new(),
            grid: HashMap::new(),
            theta0: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn cell_of(&self, p: Point2) -> (i64, i64) {
        (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
        )
    }

    fn cells_of_segment(&self, a: Point2, b: Point2) -> impl Iterator<Item = (i64, i64)> {
        let (ax, ay) = self.cell_of([a[0].min(b[0]), a[1].min(b[1])]);
        let (bx, by) = self.cell_of([a[0].max(b[0]), a[1].max(b[1])]);
        (ax - 1..=bx + 1).flat_map(move |x| (ay - 1..=by + 1).map(move |y| (x, y)))
    }

    fn range_min_dist(&self, lo: usize, hi: usize) -> f64 {
        // min of seg_dist[lo..hi]
        let mut m = f64::INFINITY;
        let mut k = lo;
        while k < hi {
            if k % BLOCK == 0 && k + BLOCK <= hi {
                m = m.min(self.block_min[k / BLOCK]);
                k += BLOCK;
            } else {
                m = m.min(self.seg_dist[k]);
                k += 1;
            }
        }
        m
    }

    /// Append a vertex; returns the first surrounding loop completed by the
    /// new segment, if any.
    pub fn push(&mut self, p: Point2) -> Option<Polyline> {
        let origin = [0.0, 0.0];
        let n = self.vertices.len();
        if n == 0 {
            self.vertices.push(p);
            self.prefix.push(0.0);
            self.theta0 = if p == origin { 0.0 } else { p[1].atan2(p[0]) };
            return None;
        }
        let a = self.vertices[n - 1];
        if a == p {
            return None;
        }
        let j = n - 1; // index of the new segment a -> p
        let mut found = None;
        // a segment through the origin has zero clearance, so any loop using
        // it is rejected below and its angle only has to stay finite
        let d = point_segment_distance(origin, a, p);
        let seg_angle = if d > 0.0 {
            subtended_angle(a, p, origin)
        } else {
            0.0
        };
        let short = d > 0.0 && seg_angle.abs() <= SHORT_SPAN;
        let mid = self.theta0 + self.prefix[j] + 0.5 * seg_angle;
        let sheet = (mid / SHEET_BIN).floor() as i64;
        if j >= 2 {
            let mut cand: Vec<u32> = Vec::new();
            for c in self.cells_of_segment(a, p) {
                let Some(bin) = self.grid.get(&c) else {
                    continue;
                };
                cand.extend_from_slice(&bin.long);
                for (b, ids) in &bin.short {
                    if !short || (b - sheet).abs() > 1 {
                        cand.extend_from_slice(ids);
                    }
                }
            }
            cand.retain(|&i| (i as usize) + 1 < j);
            cand.sort_unstable();
            cand.dedup();
            for i in cand {
                let i = i as usize;
                let (b0, b1) = (self.vertices[i], self.vertices[i + 1]);
                let Some(q) = segment_intersection(b0, b1, a, p) else {
                    continue;
                };
                // loop: q -> v[i+1] -> ... -> v[j] -> q
                let ang = subtended_angle(q, b1, origin)
                    + (self.prefix[j] - self.prefix[i + 1])
                    + subtended_angle(a, q, origin);
                if !ang.is_finite() {
                    continue;
                }
                let w = (ang / TAU).round();
                if w.abs() < 1.0 || (ang - w * TAU).abs() > 1e-6 {
                    continue;
                }
                let clearance = point_segment_distance(origin, q, b1)
                    .min(point_segment_distance(origin, a, q))
                    .min(self.range_min_dist(i + 1, j));
                if clearance > self.r {
                    let mut verts = Vec::with_capacity(j - i + 1);
                    verts.push(q);
                    verts.extend_from_slice(&self.vertices[i + 1..=j]);
                    found = Some(Polyline::closed(verts));
                    break;
                }
            }
        }
        self.prefix.push(self.prefix[n - 1] + seg_angle);
        self.seg_dist.push(d);
        if j % BLOCK == 0 {
            self.block_min.push(d);
        } else {
            let b = self.block_min.last_mut().expect("block started");
            *b = b.min(d);
        }
        let (lo, hi) = (
            self.cell_of([a[0].min(p[0]), a[1].min(p[1])]),
            self.cell_of([a[0].max(p[0]), a[1].max(p[1])]),
        );
        if d <= self.r {
            self.grid.clear();
        }
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                let bin = self.grid.entry((x, y)).or_default();
                if short {
                    match bin.short.iter_mut().find(|(b, _)| *b == sheet) {
                        Some((_, ids)) => ids.push(j as u32),
                        None => bin.short.push((sheet, vec![j as u32])),
                    }
                } else {
                    bin.long.push(j as u32);
                }
            }
        }
        self.vertices.push(p);
        found
    }
}

/// Angle of `p` unwrapped into `(reference - pi, reference + pi]`.
pub fn angle_near(p: Point2, reference: f64) -> f64 {
    let mut a = p[1].atan2(p[0]);
    while a - reference > PI {
        a -= TAU;
    }
    while a - reference <= -PI {
        a += TAU;
    }
    a
}
