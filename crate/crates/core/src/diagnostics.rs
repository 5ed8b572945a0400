//! Obstruction diagnostics: short/long arc classification, the aperture triple with its
//! cone angle, persistence over traces, and optimisation probes of the arc lemmas.

use std::collections::{HashMap, HashSet, VecDeque};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{self, DiscreteCurve};
use crate::error::{Error, Result};
use crate::geom::{any_perpendicular, point_segment_distance, rotate_about, v3, Vec3};
use crate::thickness::SpatialHash;

/// Oriented plane through `point` with unit `normal`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("plane needs a finite point and a nonzero normal".into()));
        }
        Ok(Self {
            point,
            normal: normal / n,
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    /// Orthonormal in-plane axes.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let e1 = any_perpendicular(&self.normal);
        (e1, self.normal.cross(&e1))
    }
}

/// Closed ball of the given radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

impl Ball {
    pub fn unit(center: Vec3) -> Self {
        Self { center, radius: 1.0 }
    }
}

/// Unit reference sphere `S`. A point lies above `S` when it is outside `S` and higher
/// than its centre; the height is the distance outside `S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSphere {
    pub center: Vec3,
}

impl ReferenceSphere {
    /// Sphere centred at `(0, 0, -depth)`.
    pub fn below_origin(depth: f64) -> Self {
        Self {
            center: v3(0.0, 0.0, -depth),
        }
    }

    pub fn height_above(&self, p: &Vec3) -> f64 {
        if p.z <= self.center.z {
            return f64::NEG_INFINITY;
        }
        (p - self.center).norm() - 1.0
    }
}

/// The ball and sphere used for arc classification: both unit, sharing the centre
/// `(0, 0, -1/2)`.
pub fn canonical_setup() -> (Ball, ReferenceSphere) {
    let s = ReferenceSphere::below_origin(0.5);
    (Ball::unit(s.center), s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    Short,
    Long,
    Neither,
}

/// The facts an arc classification rests on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcWitness {
    /// All interior vertices strictly inside the ball.
    pub interior_inside: bool,
    /// All vertices within the sampling tolerance of the ball's boundary.
    pub on_boundary: bool,
    /// Highest vertex above the reference sphere, if any clears the tolerance.
    pub above_vertex: Option<usize>,
    pub max_height_above: f64,
    /// Tolerance used for boundary and height tests (the largest edge length).
    pub tolerance: f64,
}

impl ArcWitness {
    pub fn short(&self) -> bool {
        self.interior_inside || self.on_boundary
    }

    pub fn long(&self) -> bool {
        self.above_vertex.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcClass {
    pub kind: ArcKind,
    pub witness: ArcWitness,
}

/// Tolerance on endpoints lying on the ball's boundary.
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

/// Classify an open arc with endpoints on the boundary of `ball` against the sphere `s`.
pub fn classify_arc(arc: &DiscreteCurve, ball: &Ball, s: &ReferenceSphere) -> Result<ArcClass> {
    if arc.is_closed() || arc.component_count() != 1 {
        return Err(Error::PreconditionViolated("arc must be a single open component".into()));
    }
    let p = arc.points();
    let n = p.len();
    let radial = |q: &Vec3| (q - ball.center).norm() - ball.radius;
    for end in [0, n - 1] {
        let off = radial(&p[end]);
        if off.abs() > ENDPOINT_TOLERANCE {
            return Err(Error::PreconditionViolated(format!(
                "arc endpoint {end} is {off:.3e} off the ball boundary"
            )));
        }
    }
    let tol = arc.max_segment_length();
    let interior_inside = (1..n - 1).all(|i| radial(&p[i]) < 0.0);
    let on_boundary = p.iter().all(|q| radial(q).abs() <= tol);
    let (mut best, mut best_i) = (f64::NEG_INFINITY, None);
    for (i, q) in p.iter().enumerate() {
        let h = s.height_above(q);
        if h > best {
            best = h;
            best_i = Some(i);
        }
    }
    let above_vertex = best_i.filter(|_| best > tol);
    let witness = ArcWitness {
        interior_inside,
        on_boundary,
        above_vertex,
        max_height_above: best,
        tolerance: tol,
    };
    let kind = match (witness.short(), witness.long()) {
        (true, true) => {
            return Err(Error::PreconditionViolated(
                "arc meets both the short and the long criteria".into(),
            ))
        }
        (true, false) => ArcKind::Short,
        (false, true) => ArcKind::Long,
        (false, false) => ArcKind::Neither,
    };
    Ok(ArcClass { kind, witness })
}

/// A random 1-constrained arc leaving the boundary of `ball` at a random point and
/// direction, built from unit-or-gentler circular pieces and straights, and stopped
/// where it first returns to the boundary. `None` if it does not return within
/// `max_length`.
pub fn random_ball_arc(ball: &Ball, rng: &mut ChaCha8Rng, h: f64, max_length: f64) -> Option<DiscreteCurve> {
    let u = random_unit(rng);
    let mut pos = ball.center + u * ball.radius;
    let mut tan = random_unit(rng);
    let side = |q: &Vec3| (q - ball.center).norm() - ball.radius;
    let mut pts = vec![pos];
    let mut travelled = 0.0;
    while travelled < max_length {
        let piece = rng.gen_range(0.2..1.5);
        let kappa = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..=1.0) };
        // Half of the pieces turn back towards the ball so that arcs return.
        let inward = ball.center - pos;
        let normal = if rng.gen_bool(0.5) && inward.cross(&tan).norm() > 1e-9 {
            inward
        } else {
            rotate_about(&any_perpendicular(&tan), &tan, rng.gen_range(0.0..std::f64::consts::TAU))
        };
        let steps = ((piece / h).ceil() as usize).max(1);
        let ds = piece / steps as f64;
        for _ in 0..steps {
            let (np, nt) = advance_arc(&pos, &tan, &normal_for(&tan, &normal), kappa, ds);
            let before = side(&pos);
            let after = side(&np);
            if travelled > 1e-3 && before != 0.0 && before.signum() != after.signum() {
                // Bisect on the piece parameter for the boundary hit.
                let (mut lo, mut hi) = (0.0, ds);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let (q, _) = advance_arc(&pos, &tan, &normal_for(&tan, &normal), kappa, mid);
                    if side(&q).signum() == before.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (q, _) = advance_arc(&pos, &tan, &normal_for(&tan, &normal), kappa, hi);
                let q = ball.center + (q - ball.center).normalize() * ball.radius;
                if (q - pos).norm() > 1e-9 {
                    pts.push(q);
                } else if let Some(last) = pts.last_mut() {
                    *last = q;
                }
                return DiscreteCurve::new(pts, false, 0.0).ok().filter(|c| c.len() >= 3);
            }
            pos = np;
            tan = nt;
            travelled += ds;
            pts.push(pos);
        }
    }
    None
}

fn normal_for(t: &Vec3, n: &Vec3) -> Vec3 {
    let v = n - t * t.dot(n);
    if v.norm() < 1e-12 {
        any_perpendicular(t)
    } else {
        v.normalize()
    }
}

/// Move along a circle of curvature `kappa` (straight if zero) in the plane of `t, n`.
fn advance_arc(p: &Vec3, t: &Vec3, n: &Vec3, kappa: f64, s: f64) -> (Vec3, Vec3) {
    if kappa == 0.0 {
        return (p + t * s, *t);
    }
    let a = kappa * s;
    let np = p + t * (a.sin() / kappa) + n * ((1.0 - a.cos()) / kappa);
    let nt = t * a.cos() + n * a.sin();
    (np, nt.normalize())
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = v3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Grid and sealing settings for aperture extraction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[derive(Default)]
pub struct ApertureOptions {
    /// Grid spacing in the plane; defaults to half the mean edge length.
    pub spacing: Option<f64>,
    /// Extra clearance added to the tube radius when marking blocked cells, closing
    /// gaps narrower than the grid; defaults to one grid spacing.
    pub seal: Option<f64>,
    /// Flood fill giving up beyond this distance from the seed counts as unbounded;
    /// defaults to the curve's diameter.
    pub max_radius: Option<f64>,
}


/// Contour, spanning planar region and near-contact region of a bottleneck.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApertureTriple {
    /// Outer boundary of the disk region, traced through grid cell centres.
    pub contour: Vec<Vec3>,
    pub disk_plane: Plane,
    pub disk_area: f64,
    pub near_contact_area: f64,
    pub tip: Vec3,
    pub tip_index: usize,
    pub cone_angle: f64,
    pub disk_diameter: f64,
    /// Where the long arc passes through the disk.
    pub crossing: Vec3,
    pub spacing: f64,
    pub seal: f64,
    /// The disk is always planar; topological disks are not searched.
    pub planar_disk_only: bool,
}

/// Distance queries to the tube centreline of a vertex subset.
struct CenterlineField<'a> {
    p: &'a [Vec3],
    next: Vec<Option<usize>>,
    prev: Vec<Option<usize>>,
    hash: SpatialHash<'a>,
    include: Vec<bool>,
    reach: f64,
}

impl<'a> CenterlineField<'a> {
    fn new(c: &'a DiscreteCurve, include: Vec<bool>, cell: f64) -> Self {
        let p = c.points();
        Self {
            p,
            next: (0..p.len()).map(|i| c.next(i)).collect(),
            prev: (0..p.len()).map(|i| c.prev(i)).collect(),
            hash: SpatialHash::new(p, cell),
            include,
            reach: c.max_segment_length(),
        }
    }

    /// Distance from `q` to the included edges, or `cutoff` if none is closer.
    fn distance(&self, q: &Vec3, cutoff: f64) -> f64 {
        let mut best = cutoff;
        for i in self.hash.query(q, cutoff + self.reach) {
            for (a, b) in [(Some(i), self.next[i]), (self.prev[i], Some(i))] {
                if let (Some(a), Some(b)) = (a, b) {
                    if self.include[a] {
                        best = best.min(point_segment_distance(q, &self.p[a], &self.p[b]).0);
                    }
                }
            }
        }
        best
    }
}

fn range_mask(n: usize, r: &Range<usize>) -> Vec<bool> {
    let mut m = vec![false; n];
    for i in r.clone() {
        m[i % n] = true;
    }
    m
}

const NEIGHBOURS: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Extract the aperture triple for the long arc `long_arc` (vertex range, may wrap) in
/// the plane `plane`, whose point must lie in the bottleneck.
pub fn extract_aperture(c: &DiscreteCurve, long_arc: Range<usize>, plane: &Plane) -> Result<ApertureTriple> {
    extract_aperture_with(c, long_arc, plane, &ApertureOptions::default())
}

pub fn extract_aperture_with(
    c: &DiscreteCurve,
    long_arc: Range<usize>,
    plane: &Plane,
    opts: &ApertureOptions,
) -> Result<ApertureTriple> {
    let n = c.len();
    let r = c.tube_radius();
    if !(r > 0.0) {
        return Err(Error::NoTube);
    }
    if long_arc.is_empty() || long_arc.len() >= n {
        return Err(Error::InvalidInput("long arc must be a proper vertex range".into()));
    }
    let p = c.points();
    let g = opts.spacing.unwrap_or(0.5 * c.mean_segment_length());
    let seal = opts.seal.unwrap_or(g);
    let max_radius = opts.max_radius.unwrap_or_else(|| curve::diameter(c));
    let in_arc = range_mask(n, &long_arc);

    // Tip and separation checks.
    let (tip_index, tip_dist) = long_arc
        .clone()
        .map(|i| (i % n, plane.signed_distance(&p[i % n]).abs()))
        .fold((long_arc.start % n, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if tip_dist <= g {
        return Err(Error::NoAperture("long arc does not leave the plane".into()));
    }

    let (e1, e2) = plane.basis();
    let center = |ij: (i64, i64)| plane.point + e1 * (ij.0 as f64 * g) + e2 * (ij.1 as f64 * g);
    let rest = CenterlineField::new(c, in_arc.iter().map(|b| !b).collect(), 2.0 * r + seal);
    let block = r + seal;
    let mut blocked: HashMap<(i64, i64), bool> = HashMap::new();
    let mut is_blocked = |ij: (i64, i64)| *blocked.entry(ij).or_insert_with(|| rest.distance(&center(ij), block) < block);
    if is_blocked((0, 0)) {
        return Err(Error::NoAperture("plane point lies inside the tube".into()));
    }
    let limit = (max_radius / g).ceil() as i64;
    let mut disk: HashSet<(i64, i64)> = HashSet::new();
    let mut queue = VecDeque::new();
    disk.insert((0, 0));
    queue.push_back((0i64, 0i64));
    while let Some((i, j)) = queue.pop_front() {
        if i.abs() >= limit || j.abs() >= limit {
            return Err(Error::NoAperture("planar region around the plane point is unbounded".into()));
        }
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let q = (i + di, j + dj);
            if !disk.contains(&q) && !is_blocked(q) {
                disk.insert(q);
                queue.push_back(q);
            }
        }
    }

    // The long arc must pass through the disk.
    let mut crossing = None;
    for k in long_arc.clone() {
        let (a, b) = (k % n, (k + 1) % n);
        if !in_arc[b] || (!c.is_closed() && b == 0) {
            continue;
        }
        let (da, db) = (plane.signed_distance(&p[a]), plane.signed_distance(&p[b]));
        if da * db < 0.0 || (da == 0.0 && db != 0.0) {
            let x = p[a] + (p[b] - p[a]) * (da / (da - db));
            let local = x - plane.point;
            let ij = ((local.dot(&e1) / g).round() as i64, (local.dot(&e2) / g).round() as i64);
            if disk.contains(&ij) {
                crossing = Some(x);
                break;
            }
        }
    }
    let Some(crossing) = crossing else {
        return Err(Error::NoAperture("long arc does not pass through the disk".into()));
    };

    let full = CenterlineField::new(c, vec![true; n], 3.0 * r);
    let near = disk
        .iter()
        .filter(|&&ij| full.distance(&center(ij), 3.0 * r) - r < 2.0 * r)
        .count();
    let cells = trace_boundary(&disk);
    let contour: Vec<Vec3> = cells.iter().map(|&ij| center(ij)).collect();
    let tip = p[tip_index];
    Ok(ApertureTriple {
        cone_angle: cone_angle(&contour, &tip),
        disk_diameter: curve::point_set_diameter(&contour),
        contour,
        disk_plane: *plane,
        disk_area: disk.len() as f64 * g * g,
        near_contact_area: near as f64 * g * g,
        tip,
        tip_index,
        crossing,
        spacing: g,
        seal,
        planar_disk_only: true,
    })
}

/// Largest angle subtended at `tip` by two contour points.
pub fn cone_angle(contour: &[Vec3], tip: &Vec3) -> f64 {
    let dirs: Vec<Vec3> = contour.iter().filter_map(|x| (x - tip).try_normalize(1e-15)).collect();
    let mut min_dot = 1.0f64;
    for a in 0..dirs.len() {
        for b in a + 1..dirs.len() {
            min_dot = min_dot.min(dirs[a].dot(&dirs[b]));
        }
    }
    min_dot.clamp(-1.0, 1.0).acos()
}

/// Outer boundary of a 4-connected cell set by Moore-neighbour tracing (clockwise).
fn trace_boundary(region: &HashSet<(i64, i64)>) -> Vec<(i64, i64)> {
    let start = *region
        .iter()
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("region is nonempty");
    let mut out = vec![start];
    let mut cur = start;
    let mut back = (start.0 - 1, start.1);
    let mut first_move = None;
    for _ in 0..4 * region.len() + 8 {
        let d = (back.0 - cur.0, back.1 - cur.1);
        let k0 = NEIGHBOURS.iter().position(|&x| x == d).expect("backtrack is a neighbour");
        let mut found = None;
        let mut prev = back;
        for s in 1..=8 {
            let (di, dj) = NEIGHBOURS[(k0 + s) % 8];
            let q = (cur.0 + di, cur.1 + dj);
            if region.contains(&q) {
                found = Some(q);
                break;
            }
            prev = q;
        }
        let Some(next) = found else { break };
        if cur == start {
            match first_move {
                None => first_move = Some(next),
                Some(m) if m == next => {
                    out.pop();
                    break;
                }
                _ => {}
            }
        }
        back = prev;
        cur = next;
        out.push(cur);
    }
    if out.len() > 1 && out.last() == out.first() {
        out.pop();
    }
    out
}

/// Which plane to use on each frame of a trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApertureSpec {
    pub long_arc: Range<usize>,
    /// When set, the plane passes through this vertex, normal to the tangent there.
    pub anchor: Option<usize>,
    pub plane: Plane,
    pub options: ApertureOptions,
}

impl ApertureSpec {
    fn plane_for(&self, c: &DiscreteCurve) -> Result<Plane> {
        match self.anchor {
            Some(i) if i < c.len() => Plane::new(c.points()[i], c.tangents()[i]),
            Some(i) => Err(Error::InvalidInput(format!("anchor {i} outside the curve"))),
            None => Ok(self.plane),
        }
    }
}

/// Per-frame aperture measurements.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameAperture {
    pub frame: usize,
    pub cone_angle: f64,
    pub disk_diameter: f64,
    pub near_contact_area: f64,
    pub plane: Plane,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub frames: usize,
    pub min_disk_diameter: Option<f64>,
    pub min_near_contact_area: Option<f64>,
    pub min_cone_angle: Option<f64>,
    /// Frames where no aperture could be extracted, even after local plane adjustment.
    pub lost_frames: Vec<usize>,
    pub per_frame: Vec<FrameAperture>,
}

/// Small plane adjustments tried when the given plane fails on a frame.
fn plane_adjustments(base: &Plane, step: f64) -> Vec<Plane> {
    let (e1, e2) = base.basis();
    let mut out = vec![*base];
    for k in 1..=3 {
        let a = 0.1 * k as f64;
        for axis in [e1, e2] {
            for sign in [1.0, -1.0] {
                out.push(Plane {
                    point: base.point,
                    normal: rotate_about(&base.normal, &axis, sign * a),
                });
            }
        }
        for sign in [1.0, -1.0] {
            out.push(Plane {
                point: base.point + base.normal * (sign * step * k as f64),
                normal: base.normal,
            });
        }
    }
    out
}

/// Aperture extraction on one frame with local plane re-optimisation.
pub fn track_aperture(c: &DiscreteCurve, spec: &ApertureSpec) -> Result<ApertureTriple> {
    let base = spec.plane_for(c)?;
    let mut last = None;
    for plane in plane_adjustments(&base, 2.0 * c.mean_segment_length()) {
        match extract_aperture_with(c, spec.long_arc.clone(), &plane, &spec.options) {
            Ok(a) => return Ok(a),
            Err(e @ Error::NoAperture(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::NoAperture("no plane tried".into())))
}

fn nearest_vertex(c: &DiscreteCurve, q: &Vec3) -> usize {
    let p = c.points();
    (0..p.len())
        .min_by(|&a, &b| (p[a] - q).norm_squared().total_cmp(&(p[b] - q).norm_squared()))
        .unwrap_or(0)
}

/// Carry the spec's vertex indices from `prev` to `next` by nearest positions, since
/// resampling between frames lets indices drift along the curve.
fn follow_spec(spec: &ApertureSpec, prev: &DiscreteCurve, next: &DiscreteCurve) -> ApertureSpec {
    let (np, nn) = (prev.len(), next.len());
    let map = |i: usize| nearest_vertex(next, &prev.points()[i % np]);
    let start = map(spec.long_arc.start);
    let end_vertex = map(spec.long_arc.end - 1);
    let mut len = (end_vertex + nn - start) % nn + 1;
    // An end that lands beside the start (a whole closed component) wraps the range.
    let expected = (spec.long_arc.len() * nn + np / 2) / np;
    if len.abs_diff(expected) * 4 > expected {
        len = expected.min(nn - 1);
    }
    ApertureSpec {
        long_arc: start..start + len,
        anchor: spec.anchor.map(map),
        plane: spec.plane,
        options: spec.options.clone(),
    }
}

/// Minima of the aperture measurements over a sequence of frames.
///
/// The spec applies to the first frame and is carried along the sequence frame by frame.
pub fn trace_diagnostics(frames: &[DiscreteCurve], spec: &ApertureSpec) -> Result<PersistenceReport> {
    if frames.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut lost = Vec::new();
    let mut per_frame = Vec::new();
    let mut current = spec.clone();
    for (k, f) in frames.iter().enumerate() {
        if k > 0 {
            current = follow_spec(&current, &frames[k - 1], f);
        }
        match track_aperture(f, &current) {
            Ok(a) => {
                current.plane = a.disk_plane;
                per_frame.push(FrameAperture {
                    frame: k,
                    cone_angle: a.cone_angle,
                    disk_diameter: a.disk_diameter,
                    near_contact_area: a.near_contact_area,
                    plane: a.disk_plane,
                })
            }
            Err(Error::NoAperture(_)) => lost.push(k),
            Err(e) => return Err(e),
        }
    }
    let min_of = |f: fn(&FrameAperture) -> f64| per_frame.iter().map(f).reduce(f64::min);
    Ok(PersistenceReport {
        frames: frames.len(),
        min_disk_diameter: min_of(|a| a.disk_diameter),
        min_near_contact_area: min_of(|a| a.near_contact_area),
        min_cone_angle: min_of(|a| a.cone_angle),
        lost_frames: lost,
        per_frame,
    })
}

/// Search planes normal to the long arc for the one bounding the smallest disk.
///
/// Candidate planes pass through every `stride`-th long-arc vertex, normal to the tangent.
pub fn find_aperture_plane(
    c: &DiscreteCurve,
    long_arc: Range<usize>,
    stride: usize,
    opts: &ApertureOptions,
) -> Option<(usize, ApertureTriple)> {
    let n = c.len();
    let t = c.tangents();
    let mut best: Option<(usize, ApertureTriple)> = None;
    for k in long_arc.clone().step_by(stride.max(1)) {
        let i = k % n;
        let Ok(plane) = Plane::new(c.points()[i], t[i]) else { continue };
        if let Ok(a) = extract_aperture_with(c, long_arc.clone(), &plane, opts) {
            if best.as_ref().is_none_or(|b| a.disk_diameter < b.1.disk_diameter) {
                best = Some((i, a));
            }
        }
    }
    best
}

/// Grow `arc` by `step` vertices on each side at a time, up to `max_grow`, until a
/// plane normal to it bounds an aperture; returns the tracking spec of the narrowest
/// aperture at the first size that has one.
pub fn locate_waist(
    c: &DiscreteCurve,
    arc: Range<usize>,
    step: usize,
    max_grow: usize,
    opts: &ApertureOptions,
) -> Option<(ApertureSpec, ApertureTriple)> {
    let n = c.len();
    let mut grow = step.max(1);
    while grow <= max_grow {
        let start = (arc.start + n - grow % n) % n;
        let end = start + arc.len() + 2 * grow;
        if end - start >= n {
            return None;
        }
        if let Some((i, a)) = find_aperture_plane(c, start..end, 2, opts) {
            let spec = ApertureSpec {
                long_arc: start..end,
                anchor: Some(i),
                plane: a.disk_plane,
                options: opts.clone(),
            };
            return Some((spec, a));
        }
        grow += step.max(1);
    }
    None
}

/// Result of a lemma probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub attempts: usize,
    /// Optimised candidates meeting the probe's constraint set.
    pub feasible: usize,
    /// Candidates discarded as degenerate or as the lemma's allowed case.
    pub rejected: usize,
    /// Smallest maximal curvature over candidates meeting the lemma's hypotheses.
    pub best_max_curvature: f64,
    pub candidate: Vec<Vec3>,
    pub candidate_diameter: f64,
    /// Cylinder probe: smallest total violation (curvature excess, exit from the
    /// cylinder, depth below `S`) over all candidates.
    pub min_violation: Option<f64>,
    /// Cylinder probe: largest height above `S` reached by a 1-constrained candidate
    /// inside the cylinder; negative when none gets above.
    pub max_height_at_unit_curvature: Option<f64>,
    /// Cylinder probe: smallest diameter over 1-constrained candidates that get above `S`.
    pub min_condition2_diameter: Option<f64>,
}

impl ProbeReport {
    fn new(attempts: usize) -> Self {
        Self {
            attempts,
            feasible: 0,
            rejected: 0,
            best_max_curvature: f64::INFINITY,
            candidate: Vec::new(),
            candidate_diameter: 0.0,
            min_violation: None,
            max_height_at_unit_curvature: None,
            min_condition2_diameter: None,
        }
    }

    fn offer(&mut self, kmax: f64, pts: &[Vec3]) {
        if kmax < self.best_max_curvature {
            self.best_max_curvature = kmax;
            self.candidate_diameter = curve::point_set_diameter(pts);
            self.candidate = pts.to_vec();
        }
    }
}

/// Largest edge length allowed on probe candidates; bounds the discretisation error of
/// the curvature estimator.
pub const PROBE_EDGE: f64 = 0.1;

/// Curvature tolerance for calling a polyline 1-constrained.
pub const UNIT_CURVATURE_TOLERANCE: f64 = 0.01;

fn interior_curvature(p: &[Vec3], i: usize) -> f64 {
    curve::vertex_curvature(&p[i - 1], &p[i], &p[i + 1])
}

fn max_interior_curvature(p: &[Vec3]) -> f64 {
    (1..p.len() - 1).map(|i| interior_curvature(p, i)).fold(0.0, f64::max)
}

fn polyline_length(p: &[Vec3]) -> f64 {
    p.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Per-vertex constraint set of a probe.
trait ArcConstraints {
    fn vertex_penalty(&self, i: usize, p: &Vec3) -> f64;
    /// Snap constrained vertices back onto their manifolds.
    fn project(&self, pts: &mut [Vec3]);
}

#[derive(Clone, Copy)]
enum Edges {
    Fixed(f64),
    /// Equal edges no longer than the bound.
    Uniform(f64),
}

struct ArcProblem<'a, C: ArcConstraints> {
    constraints: &'a C,
    /// Sharpness of the smooth maximum of the curvature.
    beta: f64,
    edges: Edges,
    mu: f64,
}

fn softmax(v: &[f64], beta: f64) -> (f64, Vec<f64>) {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| ((x - top) * beta).exp()).collect();
    let z: f64 = e.iter().sum();
    (top + z.ln() / beta, e.into_iter().map(|x| x / z).collect())
}

impl<C: ArcConstraints> ArcProblem<'_, C> {
    fn edge_penalty(&self, len: f64, mean: f64) -> f64 {
        match self.edges {
            Edges::Fixed(e) => (len - e).powi(2),
            Edges::Uniform(max) => (len - mean).powi(2) + (len - max).max(0.0).powi(2),
        }
    }

    fn mean_edge(p: &[Vec3]) -> f64 {
        polyline_length(p) / (p.len() - 1) as f64
    }

    fn objective(&self, p: &[Vec3]) -> f64 {
        let m = p.len();
        let k: Vec<f64> = (1..m - 1).map(|i| interior_curvature(p, i)).collect();
        let mean = Self::mean_edge(p);
        let mut f = softmax(&k, self.beta).0;
        let mut pen = 0.0;
        for (i, q) in p.iter().enumerate() {
            pen += self.constraints.vertex_penalty(i, q);
        }
        for w in p.windows(2) {
            pen += self.edge_penalty((w[1] - w[0]).norm(), mean);
        }
        f += self.mu * pen;
        f
    }

    /// Gradient from central differences of the terms touching each vertex, with the
    /// smooth-maximum weights and the mean edge frozen.
    fn gradient(&self, p: &[Vec3]) -> Vec<Vec3> {
        let m = p.len();
        let mean = Self::mean_edge(p);
        let k: Vec<f64> = (1..m - 1).map(|i| interior_curvature(p, i)).collect();
        let kw = softmax(&k, self.beta).1;
        let local = |q: &[Vec3], i: usize| {
            let mut e = self.mu * self.constraints.vertex_penalty(i, &q[i]);
            for j in i.saturating_sub(1)..=(i + 1).min(m - 1) {
                if j >= 1 && j + 1 < m {
                    e += kw[j - 1] * interior_curvature(q, j);
                }
            }
            if i > 0 {
                e += self.mu * self.edge_penalty((q[i] - q[i - 1]).norm(), mean);
            }
            if i + 1 < m {
                e += self.mu * self.edge_penalty((q[i + 1] - q[i]).norm(), mean);
            }
            e
        };
        let h = 1e-6;
        let mut q = p.to_vec();
        let mut g = vec![Vec3::zeros(); m];
        for i in 0..m {
            for d in 0..3 {
                let old = q[i][d];
                q[i][d] = old + h;
                let fp = local(&q, i);
                q[i][d] = old - h;
                let fm = local(&q, i);
                q[i][d] = old;
                g[i][d] = (fp - fm) / (2.0 * h);
            }
        }
        g
    }

    fn minimise(&self, p: &mut Vec<Vec3>, iters: usize) {
        let mut step = 1e-3;
        self.constraints.project(p);
        let mut f = self.objective(p);
        for _ in 0..iters {
            let g = self.gradient(p);
            let gn = g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
            if !(gn > 1e-12) {
                break;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial: Vec<Vec3> = p.iter().zip(&g).map(|(x, d)| x - d * (step / gn)).collect();
                self.constraints.project(&mut trial);
                let ft = self.objective(&trial);
                if ft < f {
                    *p = trial;
                    f = ft;
                    step *= 1.3;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
}

/// Penalty schedule shared by both probes.
const SCHEDULE: [(f64, f64); 4] = [(20.0, 1e2), (60.0, 1e3), (200.0, 1e4), (600.0, 1e5)];
const ITERATIONS_PER_STAGE: usize = 300;
const RESTARTS: usize = 5;

struct BallTouch {
    ball: Ball,
    touch: usize,
    margin: f64,
}

impl ArcConstraints for BallTouch {
    fn vertex_penalty(&self, i: usize, p: &Vec3) -> f64 {
        if i == self.touch {
            return 0.0;
        }
        ((p - self.ball.center).norm() - (self.ball.radius - self.margin))
            .max(0.0)
            .powi(2)
    }

    fn project(&self, pts: &mut [Vec3]) {
        let v = pts[self.touch] - self.ball.center;
        let v = v.try_normalize(1e-15).unwrap_or_else(|| v3(0.0, 0.0, 1.0));
        pts[self.touch] = self.ball.center + v * self.ball.radius;
    }
}

/// Search for arcs inside `ball` meeting its boundary at one isolated interior vertex,
/// minimising the largest curvature.
pub fn probe_ball_lemma(ball: &Ball, attempts: usize, seed: u64) -> Result<ProbeReport> {
    if attempts == 0 {
        return Err(Error::InvalidInput("at least one attempt is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProbeReport::new(attempts);
    for _ in 0..attempts {
        let m = rng.gen_range(16..40usize);
        let edge = rng.gen_range(0.04..PROBE_EDGE);
        let touch = rng.gen_range(m / 4..3 * m / 4);
        let cons = BallTouch {
            ball: *ball,
            touch,
            margin: 1e-3,
        };
        for _ in 0..RESTARTS {
            // Start on a circle of random radius touching the boundary from inside.
            let u = random_unit(&mut rng);
            let t = rotate_about(&any_perpendicular(&u), &u, rng.gen_range(0.0..std::f64::consts::TAU));
            let rho = rng.gen_range(0.5..1.5f64).min(ball.radius * 0.999);
            let touch_pt = ball.center + u * ball.radius;
            let mut pts: Vec<Vec3> = (0..m)
                .map(|i| {
                    let a = (i as f64 - touch as f64) * edge / rho;
                    touch_pt + t * (rho * a.sin()) - u * (rho * (1.0 - a.cos()))
                })
                .collect();
            for (beta, mu) in SCHEDULE {
                ArcProblem {
                    constraints: &cons,
                    beta,
                    edges: Edges::Fixed(edge),
                    mu,
                }
                .minimise(&mut pts, ITERATIONS_PER_STAGE);
            }
            let degenerate =
                polyline_length(&pts) < 0.1 || pts.windows(2).any(|w| (w[1] - w[0]).norm() > PROBE_EDGE * 1.05);
            let on_boundary = pts
                .iter()
                .all(|p| ((p - ball.center).norm() - ball.radius).abs() < 1e-3);
            let inside = pts
                .iter()
                .enumerate()
                .all(|(i, p)| i == touch || (p - ball.center).norm() < ball.radius);
            if degenerate || on_boundary || !inside {
                report.rejected += 1;
                continue;
            }
            report.feasible += 1;
            report.offer(max_interior_curvature(&pts), &pts);
        }
    }
    Ok(report)
}

/// How a polyline meets the hypotheses of the cylinder lemma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderCheck {
    pub inside: bool,
    pub endpoints_on_base: bool,
    pub max_curvature: f64,
    /// Largest height above `S`; negative infinity when no vertex is higher than its centre.
    pub max_height_above: f64,
    /// Total violation: curvature excess over 1, exit from the cylinder, depth below `S`.
    pub violation: f64,
}

impl CylinderCheck {
    pub fn unit_constrained(&self) -> bool {
        self.max_curvature <= 1.0 + UNIT_CURVATURE_TOLERANCE
    }

    pub fn above(&self) -> bool {
        self.max_height_above > 0.0
    }
}

/// Check an open polyline against the cylinder `x^2 + y^2 < radius^2, z >= 0` and the
/// sphere `s`.
pub fn check_cylinder_arc(pts: &[Vec3], radius: f64, s: &ReferenceSphere) -> Result<CylinderCheck> {
    if pts.len() < 3 {
        return Err(Error::DegenerateCurve("arc needs at least three vertices".into()));
    }
    let wall = pts
        .iter()
        .map(|p| (p.x * p.x + p.y * p.y).sqrt() - radius)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = pts.iter().map(|p| -p.z).fold(f64::NEG_INFINITY, f64::max);
    let on_base = |p: &Vec3| p.z.abs() < 1e-6 && ((p - s.center).norm() - 1.0).abs() < 1e-6;
    let kmax = max_interior_curvature(pts);
    let height = pts.iter().map(|p| s.height_above(p)).fold(f64::NEG_INFINITY, f64::max);
    let depth = pts
        .iter()
        .map(|p| (p - s.center).norm() - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CylinderCheck {
        inside: wall < 0.0 && floor <= 1e-9,
        endpoints_on_base: on_base(&pts[0]) && on_base(&pts[pts.len() - 1]),
        max_curvature: kmax,
        max_height_above: height,
        violation: (kmax - 1.0).max(0.0) + wall.max(0.0) + floor.max(0.0) + (-depth).max(0.0),
    })
}

struct CylinderArc {
    radius: f64,
    foot: f64,
    margin: f64,
    sphere: ReferenceSphere,
    apex: usize,
}

impl ArcConstraints for CylinderArc {
    fn vertex_penalty(&self, i: usize, p: &Vec3) -> f64 {
        let rr = (p.x * p.x + p.y * p.y).sqrt();
        let mut pen = (rr - (self.radius - self.margin)).max(0.0).powi(2) + (-p.z).max(0.0).powi(2);
        if i == self.apex {
            pen += (APEX_CLEARANCE - ((p - self.sphere.center).norm() - 1.0)).max(0.0).powi(2);
        }
        pen
    }

    fn project(&self, pts: &mut [Vec3]) {
        let m = pts.len();
        for i in [0, m - 1] {
            let a = pts[i].y.atan2(pts[i].x);
            pts[i] = v3(self.foot * a.cos(), self.foot * a.sin(), 0.0);
        }
    }
}

/// Height above `S` demanded of the apex vertex in the cylinder probe.
const APEX_CLEARANCE: f64 = 0.02;

/// Search for arcs in the cylinder of the given radius with endpoints where `s` meets
/// the plane `z = 0` and a vertex above `s`, minimising the largest curvature.
pub fn probe_cylinder_lemma(radius: f64, s: &ReferenceSphere, attempts: usize, seed: u64) -> Result<ProbeReport> {
    if attempts == 0 {
        return Err(Error::InvalidInput("at least one attempt is needed".into()));
    }
    if !(s.center.z < 0.0 && s.center.z > -1.0) || s.center.x != 0.0 || s.center.y != 0.0 {
        return Err(Error::InvalidInput("S must be centred on the negative z-axis within unit depth".into()));
    }
    let foot = (1.0 - s.center.z * s.center.z).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProbeReport::new(attempts);
    for _ in 0..attempts {
        let m = rng.gen_range(40..80usize);
        for _ in 0..RESTARTS {
            let cons = CylinderArc {
                radius,
                foot,
                margin: 1e-3,
                sphere: *s,
                apex: rng.gen_range(m / 4..3 * m / 4),
            };
            // Start on a circle through two base points, tilted about their chord and
            // taken over the top.
            let a0 = rng.gen_range(0.0..std::f64::consts::TAU);
            let a1 = a0 + rng.gen_range(0.5..std::f64::consts::PI);
            let p0 = v3(foot * a0.cos(), foot * a0.sin(), 0.0);
            let p1 = v3(foot * a1.cos(), foot * a1.sin(), 0.0);
            let chord = p1 - p0;
            let half = 0.5 * chord.norm();
            let up = rotate_about(&v3(0.0, 0.0, 1.0), &chord.normalize(), rng.gen_range(-0.6..0.6));
            let rho = rng.gen_range(half.max(0.8)..(radius * 1.05).max(half + 0.1));
            let center = (p0 + p1) / 2.0 + up * (rho * rho - half * half).max(0.0).sqrt() * rng.gen_range(-0.5..1.0f64).signum();
            let u0 = (p0 - center) / rho;
            let w = chord.cross(&up).cross(&u0).normalize();
            let u1 = (p1 - center) / rho;
            let mut sweep = u0.angle(&u1);
            if (u0 * sweep.cos() + w * sweep.sin() - u1).norm() > 1e-6 {
                sweep = std::f64::consts::TAU - sweep;
            }
            let top = center + up * rho;
            let mid_dir = u0 * (0.5 * sweep).cos() + w * (0.5 * sweep).sin();
            if (center + mid_dir * rho - top).norm() > rho {
                sweep -= std::f64::consts::TAU;
            }
            let mut pts: Vec<Vec3> = (0..m)
                .map(|i| {
                    let a = sweep * i as f64 / (m - 1) as f64;
                    center + (u0 * a.cos() + w * a.sin()) * rho
                })
                .collect();
            for (beta, mu) in SCHEDULE {
                ArcProblem {
                    constraints: &cons,
                    beta,
                    edges: Edges::Uniform(PROBE_EDGE),
                    mu,
                }
                .minimise(&mut pts, ITERATIONS_PER_STAGE);
            }
            if pts.windows(2).any(|w| (w[1] - w[0]).norm() > PROBE_EDGE * 1.05) {
                report.rejected += 1;
                continue;
            }
            let check = check_cylinder_arc(&pts, radius, s)?;
            report.min_violation = Some(report.min_violation.map_or(check.violation, |v| v.min(check.violation)));
            if check.inside && check.unit_constrained() {
                report.feasible += 1;
                let h = report.max_height_at_unit_curvature.unwrap_or(f64::NEG_INFINITY);
                report.max_height_at_unit_curvature = Some(h.max(check.max_height_above));
                if check.above() {
                    let d = curve::point_set_diameter(&pts);
                    report.min_condition2_diameter = Some(report.min_condition2_diameter.map_or(d, |x| x.min(d)));
                }
            }
            if check.inside && check.above() {
                report.offer(check.max_curvature, &pts);
            }
        }
    }
    Ok(report)
}
