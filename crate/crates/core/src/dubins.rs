//! Shortest planar unit-radius paths between oriented points (Dubins paths) and the
//! caps that close an open multi-strand core into a knot.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::curve::{Configuration, DiscreteCurve};
use crate::error::{Error, Result};
use crate::geom::{any_perpendicular, Vec3};

const TWO_PI: f64 = 2.0 * PI;

/// Tolerance on the out-of-plane residual of start/end data.
pub const COPLANARITY_TOLERANCE: f64 = 1e-6;
/// Tolerance on position and tangent mismatch at cap junctions.
pub const JUNCTION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DubinsWord {
    Lrl,
    Rlr,
    Lsl,
    Lsr,
    Rsl,
    Rsr,
}

impl DubinsWord {
    /// Candidate order; on equal length the earlier word wins.
    pub const ALL: [DubinsWord; 6] = [
        DubinsWord::Lrl,
        DubinsWord::Rlr,
        DubinsWord::Lsl,
        DubinsWord::Lsr,
        DubinsWord::Rsl,
        DubinsWord::Rsr,
    ];

    /// Signed curvature of each of the three pieces (0 for straight).
    pub fn curvatures(self) -> [f64; 3] {
        match self {
            DubinsWord::Lrl => [1.0, -1.0, 1.0],
            DubinsWord::Rlr => [-1.0, 1.0, -1.0],
            DubinsWord::Lsl => [1.0, 0.0, 1.0],
            DubinsWord::Lsr => [1.0, 0.0, -1.0],
            DubinsWord::Rsl => [-1.0, 0.0, 1.0],
            DubinsWord::Rsr => [-1.0, 0.0, -1.0],
        }
    }

    pub fn is_ccc(self) -> bool {
        matches!(self, DubinsWord::Lrl | DubinsWord::Rlr)
    }

    pub fn name(self) -> &'static str {
        match self {
            DubinsWord::Lrl => "LRL",
            DubinsWord::Rlr => "RLR",
            DubinsWord::Lsl => "LSL",
            DubinsWord::Lsr => "LSR",
            DubinsWord::Rsl => "RSL",
            DubinsWord::Rsr => "RSR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Arc,
    Line,
}

/// One piece of a path in space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DubinsSegment {
    pub kind: SegmentKind,
    pub length: f64,
    /// +1 turns left about the plane normal, -1 right, 0 for lines.
    pub signed_curvature: f64,
    /// Circle centre for arcs.
    pub center: Option<Vec3>,
    /// Direction for lines.
    pub direction: Option<Vec3>,
    pub start: Configuration,
}

/// Orthonormal frame of the plane a path lives in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPlane {
    pub origin: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub normal: Vec3,
}

impl PathPlane {
    fn lift(&self, x: f64, y: f64) -> Vec3 {
        self.origin + self.e1 * x + self.e2 * y
    }

    fn lift_dir(&self, theta: f64) -> Vec3 {
        self.e1 * theta.cos() + self.e2 * theta.sin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DubinsPath {
    pub word: DubinsWord,
    pub segments: Vec<DubinsSegment>,
    pub total_length: f64,
    pub plane: PathPlane,
}

/// Planar pose used by the word formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Advance a planar pose along a piece of signed curvature `k` (0, +1 or -1).
pub fn advance(p: Pose2, k: f64, len: f64) -> Pose2 {
    if k == 0.0 {
        Pose2 {
            x: p.x + len * p.theta.cos(),
            y: p.y + len * p.theta.sin(),
            theta: p.theta,
        }
    } else {
        let th = p.theta + k * len;
        Pose2 {
            x: p.x + (th.sin() - p.theta.sin()) / k,
            y: p.y - (th.cos() - p.theta.cos()) / k,
            theta: th,
        }
    }
}

fn mod2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = mod2pi(a - b);
    d.min(TWO_PI - d)
}

/// Candidate piece lengths of `word` from the origin heading along +x to `goal`.
/// CCC words can have two solutions; both are returned.
pub fn word_candidates(word: DubinsWord, goal: Pose2) -> Vec<[f64; 3]> {
    let d = goal.x.hypot(goal.y);
    let phi = if d > 0.0 { goal.y.atan2(goal.x) } else { 0.0 };
    let a = mod2pi(-phi);
    let b = mod2pi(goal.theta - phi);
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let cab = (a - b).cos();
    let mut out = Vec::new();
    match word {
        DubinsWord::Lsl => {
            let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
            if p2 >= -1e-12 {
                let tmp = (cb - ca).atan2(d + sa - sb);
                out.push([mod2pi(-a + tmp), p2.max(0.0).sqrt(), mod2pi(b - tmp)]);
            }
        }
        DubinsWord::Rsr => {
            let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
            if p2 >= -1e-12 {
                let tmp = (ca - cb).atan2(d - sa + sb);
                out.push([mod2pi(a - tmp), p2.max(0.0).sqrt(), mod2pi(-b + tmp)]);
            }
        }
        DubinsWord::Lsr => {
            let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
            if p2 >= -1e-12 {
                let p = p2.max(0.0).sqrt();
                let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
                out.push([mod2pi(-a + tmp), p, mod2pi(-b + tmp)]);
            }
        }
        DubinsWord::Rsl => {
            let p2 = d * d - 2.0 + 2.0 * cab - 2.0 * d * (sa + sb);
            if p2 >= -1e-12 {
                let p = p2.max(0.0).sqrt();
                let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
                out.push([mod2pi(a - tmp), p, mod2pi(b - tmp)]);
            }
        }
        DubinsWord::Rlr => {
            let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
            if tmp.abs() <= 1.0 + 1e-12 {
                let base = tmp.clamp(-1.0, 1.0).acos();
                for p in [mod2pi(TWO_PI - base), base] {
                    let t = mod2pi(a - (ca - cb).atan2(d - sa + sb) + p / 2.0);
                    out.push([t, p, mod2pi(a - b - t + p)]);
                }
            }
        }
        DubinsWord::Lrl => {
            let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
            if tmp.abs() <= 1.0 + 1e-12 {
                let base = tmp.clamp(-1.0, 1.0).acos();
                for p in [mod2pi(TWO_PI - base), base] {
                    let t = mod2pi(-a - (ca - cb).atan2(d + sa - sb) + p / 2.0);
                    out.push([t, p, mod2pi(b - a - t + p)]);
                }
            }
        }
    }
    out
}

/// Whether the three pieces actually reach `goal`.
pub fn reaches(word: DubinsWord, pieces: [f64; 3], goal: Pose2, tol: f64) -> bool {
    let mut p = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };
    for (k, len) in word.curvatures().iter().zip(pieces) {
        p = advance(p, *k, len);
    }
    (p.x - goal.x).hypot(p.y - goal.y) <= tol && angle_diff(p.theta, goal.theta) <= tol
}

/// Shortest planar word and pieces from the origin (heading +x) to `goal`.
pub fn solve_planar(goal: Pose2) -> Option<(DubinsWord, [f64; 3])> {
    let mut best: Option<(DubinsWord, [f64; 3], f64)> = None;
    let tol = 1e-7 * (1.0 + goal.x.hypot(goal.y));
    for word in DubinsWord::ALL {
        for pieces in word_candidates(word, goal) {
            if !reaches(word, pieces, goal, tol) {
                continue;
            }
            let len: f64 = pieces.iter().sum();
            let better = match &best {
                None => true,
                Some((_, _, l)) => len < *l - 1e-12 * (1.0 + l),
            };
            if better {
                best = Some((word, pieces, len));
            }
        }
    }
    best.map(|(w, p, _)| (w, p))
}

/// Frame of the common plane of two configurations.
fn common_plane(start: &Configuration, end: &Configuration) -> Result<PathPlane> {
    let d = end.position - start.position;
    let scale = 1.0 + d.norm();
    let c = start.tangent.cross(&end.tangent);
    let normal = if c.norm() > 1e-9 {
        let n = c.normalize();
        let residual = d.dot(&n).abs();
        if residual > COPLANARITY_TOLERANCE * scale {
            return Err(Error::NonPlanarInput { residual });
        }
        n
    } else {
        let c2 = start.tangent.cross(&d);
        if c2.norm() > 1e-9 * scale {
            c2.normalize()
        } else {
            any_perpendicular(&start.tangent)
        }
    };
    let e1 = start.tangent;
    let e2 = normal.cross(&e1).normalize();
    Ok(PathPlane {
        origin: start.position,
        e1,
        e2,
        normal,
    })
}

/// Shortest unit-radius path from `start` to `end` within their common plane.
pub fn solve_dubins(start: &Configuration, end: &Configuration) -> Result<DubinsPath> {
    let plane = common_plane(start, end)?;
    let d = end.position - start.position;
    let goal = Pose2 {
        x: d.dot(&plane.e1),
        y: d.dot(&plane.e2),
        theta: end.tangent.dot(&plane.e2).atan2(end.tangent.dot(&plane.e1)),
    };
    let (word, pieces) =
        solve_planar(goal).ok_or_else(|| Error::Infeasible("no Dubins word reaches the goal".into()))?;
    Ok(build_path(word, pieces, plane))
}

fn build_path(word: DubinsWord, pieces: [f64; 3], plane: PathPlane) -> DubinsPath {
    let mut pose = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };
    let mut segments = Vec::with_capacity(3);
    for (k, len) in word.curvatures().into_iter().zip(pieces) {
        let start = Configuration {
            position: plane.lift(pose.x, pose.y),
            tangent: plane.lift_dir(pose.theta),
        };
        let seg = if k == 0.0 {
            DubinsSegment {
                kind: SegmentKind::Line,
                length: len,
                signed_curvature: 0.0,
                center: None,
                direction: Some(start.tangent),
                start,
            }
        } else {
            let cx = pose.x - k * pose.theta.sin();
            let cy = pose.y + k * pose.theta.cos();
            DubinsSegment {
                kind: SegmentKind::Arc,
                length: len,
                signed_curvature: k,
                center: Some(plane.lift(cx, cy)),
                direction: None,
                start,
            }
        };
        segments.push(seg);
        pose = advance(pose, k, len);
    }
    DubinsPath {
        word,
        segments,
        total_length: pieces.iter().sum(),
        plane,
    }
}

impl DubinsPath {
    /// Configuration at arc length `s` (clamped to the path).
    pub fn evaluate(&self, s: f64) -> Configuration {
        let mut s = s.clamp(0.0, self.total_length);
        let mut pose = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };
        for seg in &self.segments {
            let step = s.min(seg.length);
            pose = advance(pose, seg.signed_curvature, step);
            s -= step;
            if s <= 0.0 {
                break;
            }
        }
        Configuration {
            position: self.plane.lift(pose.x, pose.y),
            tangent: self.plane.lift_dir(pose.theta),
        }
    }

    pub fn end(&self) -> Configuration {
        self.evaluate(self.total_length)
    }

    /// Points at equal arc-length steps no longer than `h`, both ends included.
    pub fn sample(&self, h: f64) -> Vec<Vec3> {
        let m = ((self.total_length / h).ceil() as usize).max(1);
        (0..=m)
            .map(|k| self.evaluate(self.total_length * k as f64 / m as f64).position)
            .collect()
    }
}

/// A closed curve assembled from open strands and caps.
#[derive(Clone, Debug)]
pub struct CappedCurve {
    pub curve: DiscreteCurve,
    pub caps: Vec<DubinsPath>,
    /// Vertex ranges of each cap in `curve`, junction vertices included (may wrap past the end).
    pub cap_ranges: Vec<Range<usize>>,
    /// Largest position or tangent mismatch at a junction.
    pub junction_mismatch: f64,
    /// Smallest distance from a cap to the rest of the curve outside the neighbour window.
    pub min_clearance: f64,
}

/// Cap pairs closing a one- or two-strand open core: the last end of each strand is
/// joined to the first end of the next, the second strand being run backwards.
pub fn default_end_pairs(core: &DiscreteCurve) -> Result<Vec<(Configuration, Configuration)>> {
    let ends = strand_ends(core);
    match ends.len() {
        1 => {
            let (s, e) = ends[0];
            Ok(vec![(e, s)])
        }
        2 => {
            let (a_start, a_end) = ends[0];
            let (b_start, b_end) = ends[1];
            Ok(vec![(a_end, b_end.reversed()), (b_start.reversed(), a_start)])
        }
        n => Err(Error::PreconditionViolated(format!(
            "default caps need one or two strands, found {n}"
        ))),
    }
}

/// Start and end configurations (tangents along the strand) of each component.
pub fn strand_ends(core: &DiscreteCurve) -> Vec<(Configuration, Configuration)> {
    let p = core.points();
    core.components()
        .into_iter()
        .map(|r| {
            let (a, b) = (r.start, r.end - 1);
            let ts = (p[a + 1] - p[a]).normalize();
            let te = (p[b] - p[b - 1]).normalize();
            (
                Configuration { position: p[a], tangent: ts },
                Configuration { position: p[b], tangent: te },
            )
        })
        .collect()
}

/// Close an open core with Dubins caps; see [`close_open_curve_detailed`].
pub fn close_open_curve(core: &DiscreteCurve, end_pairs: &[(Configuration, Configuration)]) -> Result<DiscreteCurve> {
    Ok(close_open_curve_detailed(core, end_pairs)?.curve)
}

/// Close an open core with one cap per end pair.
///
/// Every cap must start where some strand leaves (matching its outgoing tangent) and
/// end where some strand is entered; together they must chain all strands into one loop.
/// Caps are sampled at the mean edge length of the core.
pub fn close_open_curve_detailed(
    core: &DiscreteCurve,
    end_pairs: &[(Configuration, Configuration)],
) -> Result<CappedCurve> {
    if core.is_closed() {
        return Err(Error::PreconditionViolated("core is already closed".into()));
    }
    let ends = strand_ends(core);
    if end_pairs.len() != ends.len() {
        return Err(Error::PreconditionViolated(format!(
            "{} caps for {} strands",
            end_pairs.len(),
            ends.len()
        )));
    }
    // Endpoint slots: (strand, at_end). Leaving a strand at its last point goes along
    // its tangent; leaving at its first point goes against it.
    let leaving = |strand: usize, at_end: bool| -> Configuration {
        let (s, e) = ends[strand];
        if at_end {
            e
        } else {
            s.reversed()
        }
    };
    let mut mismatch = 0.0f64;
    let mut find_slot = |c: &Configuration, entering: bool| -> Result<(usize, bool)> {
        for strand in 0..ends.len() {
            for at_end in [true, false] {
                let l = leaving(strand, at_end);
                let target_tangent = if entering { -l.tangent } else { l.tangent };
                let dp = (l.position - c.position).norm();
                let dt = (target_tangent - c.tangent).norm();
                if dp <= JUNCTION_TOLERANCE {
                    if dt > JUNCTION_TOLERANCE {
                        return Err(Error::PreconditionViolated(format!(
                            "cap tangent differs from strand tangent by {dt:.3e}"
                        )));
                    }
                    mismatch = mismatch.max(dp).max(dt);
                    return Ok((strand, at_end));
                }
            }
        }
        Err(Error::PreconditionViolated("cap endpoint is not at a strand end".into()))
    };
    let mut cap_from = Vec::new();
    for (s, e) in end_pairs {
        cap_from.push((find_slot(s, false)?, find_slot(e, true)?));
    }
    let caps: Vec<DubinsPath> = end_pairs
        .iter()
        .map(|(s, e)| solve_dubins(s, e))
        .collect::<Result<_>>()?;
    let h = core.mean_segment_length();
    let p = core.points();
    let ranges = core.components();

    let mut points: Vec<Vec3> = Vec::new();
    let mut cap_ranges = Vec::new();
    let mut used_strands = vec![false; ends.len()];
    let mut used_caps = vec![false; caps.len()];
    let (mut strand, mut forward) = (0usize, true);
    loop {
        if used_strands[strand] {
            return Err(Error::PreconditionViolated("caps do not form a single loop".into()));
        }
        used_strands[strand] = true;
        let r = ranges[strand].clone();
        if forward {
            points.extend_from_slice(&p[r.clone()]);
        } else {
            points.extend(p[r.clone()].iter().rev());
        }
        let exit = (strand, forward);
        let k = cap_from
            .iter()
            .position(|&(from, _)| from == exit)
            .ok_or_else(|| Error::PreconditionViolated("strand end has no cap".into()))?;
        if used_caps[k] {
            return Err(Error::PreconditionViolated("cap used twice".into()));
        }
        used_caps[k] = true;
        let junction = points.len() - 1;
        let samples = caps[k].sample(h);
        points.extend_from_slice(&samples[1..samples.len() - 1]);
        cap_ranges.push(junction..points.len() + 1);
        let (to_strand, to_end) = cap_from[k].1;
        strand = to_strand;
        forward = !to_end;
        if strand == 0 && forward {
            break;
        }
    }
    if used_strands.iter().any(|u| !u) || used_caps.iter().any(|u| !u) {
        return Err(Error::PreconditionViolated("caps do not form a single loop".into()));
    }
    let curve = DiscreteCurve::new(points, true, core.tube_radius())?;
    let min_clearance = cap_clearance(&curve, &cap_ranges);
    let required = 2.0 * core.tube_radius();
    if min_clearance < required - 1e-9 {
        return Err(Error::CapCollision {
            distance: min_clearance,
            required,
        });
    }
    Ok(CappedCurve {
        curve,
        caps,
        cap_ranges,
        junction_mismatch: mismatch,
        min_clearance,
    })
}

fn cap_clearance(curve: &DiscreteCurve, cap_ranges: &[Range<usize>]) -> f64 {
    let arc = curve.arc_table();
    let window = crate::thickness::exclusion_window(curve);
    let p = curve.points();
    let n = p.len();
    let mut best = f64::INFINITY;
    for r in cap_ranges {
        for i in (r.start + 1)..(r.end - 1) {
            let i = i % n;
            for j in 0..n {
                if arc.separation(i, j) >= window {
                    best = best.min((p[i] - p[j]).norm());
                }
            }
        }
    }
    best
}
