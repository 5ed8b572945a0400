//! Doubly critical self-distance, thickness and membership in the thick-knot classes.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{self, DiscreteCurve, GeometricReport};
use crate::error::{Error, Result};
use crate::geom::{point_segment_distance, Vec3};

/// Largest |cos| between the chord and either tangent for a pair to count as doubly critical.
pub const ORTHOGONALITY_TOLERANCE: f64 = 0.05;
/// Slack on the unit curvature bound used by membership checks.
pub const CURVATURE_SLACK: f64 = 0.02;
/// Slack on the thickness requirement used by membership checks.
pub const THICKNESS_SLACK: f64 = 0.02;
/// Thickness is capped at the value forced by unit curvature.
pub const THICKNESS_CAP: f64 = 2.0;
/// Above this many vertices the chord search first looks only at nearby pairs.
pub const BRUTE_FORCE_LIMIT: usize = 2048;

/// A pair of curve points whose chord is orthogonal to both tangents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublyCriticalPair {
    /// Edge start vertex on the first branch; the point sits at `offset_a` along that edge.
    pub index_a: usize,
    pub index_b: usize,
    pub offset_a: f64,
    pub offset_b: f64,
    pub chord_length: f64,
    pub orthogonality_residual: f64,
}

/// Outcome of testing a curve against a thickness class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub tau: f64,
    pub is_member: bool,
    pub max_curvature: f64,
    pub thickness: f64,
    pub reasons: Vec<String>,
    /// Knot type is not verified here.
    pub unknottedness: String,
}

/// Arc-length window below which pairs are treated as neighbours.
pub fn exclusion_window(curve: &DiscreteCurve) -> f64 {
    std::f64::consts::PI * curve.tube_radius().max(curve.mean_segment_length())
}

struct Scan<'a> {
    p: &'a [Vec3],
    t: Vec<Vec3>,
    segs: Vec<(usize, usize)>,
    arc: curve::ArcTable,
    window: f64,
    seg_index: Vec<usize>,
}

impl<'a> Scan<'a> {
    fn new(curve: &'a DiscreteCurve) -> Self {
        let segs = curve.segments();
        let mut seg_index = vec![usize::MAX; curve.len()];
        for (k, &(i, _)) in segs.iter().enumerate() {
            seg_index[i] = k;
        }
        // The smallest admissible separation for a unit-curvature curve is exactly the
        // window on round arcs, so sampling error must not push it out.
        let window = exclusion_window(curve) - 2.0 * curve.max_segment_length();
        Self {
            p: curve.points(),
            t: curve.tangents(),
            segs,
            arc: curve.arc_table(),
            window,
            seg_index,
        }
    }

    fn fg(&self, a: usize, b: usize) -> (f64, f64) {
        let d = self.p[b] - self.p[a];
        (d.dot(&self.t[a]), d.dot(&self.t[b]))
    }

    fn admissible(&self, e1: usize, e2: usize) -> bool {
        let (a0, a1) = self.segs[e1];
        let (b0, b1) = self.segs[e2];
        if a0 == b0 || a0 == b1 || a1 == b0 || a1 == b1 {
            return false;
        }
        [(a0, b0), (a0, b1), (a1, b0), (a1, b1)]
            .iter()
            .all(|&(x, y)| self.arc.separation(x, y) >= self.window)
    }

    fn cell(&self, e1: usize, e2: usize) -> Option<DoublyCriticalPair> {
        let (a0, a1) = self.segs[e1];
        let (b0, b1) = self.segs[e2];
        let (f00, g00) = self.fg(a0, b0);
        let (f10, g10) = self.fg(a1, b0);
        let (f01, g01) = self.fg(a0, b1);
        let (f11, g11) = self.fg(a1, b1);
        let scale = (self.p[b0] - self.p[a0]).norm().max(1e-300);
        let tol = 1e-12 * scale;
        let straddles = |v: [f64; 4]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lo <= tol && hi >= -tol
        };
        if !straddles([f00, f10, f01, f11]) || !straddles([g00, g10, g01, g11]) {
            return None;
        }
        // F(u, v) = A0 + A1 u + A2 v + A3 u v, and likewise G.
        let (a0c, a1c, a2c, a3c) = (f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00);
        let (b0c, b1c, b2c, b3c) = (g00, g10 - g00, g01 - g00, g11 - g10 - g01 + g00);
        let c2 = b2c * a3c - b3c * a2c;
        let c1 = b0c * a3c + b2c * a1c - b1c * a2c - b3c * a0c;
        let c0 = b0c * a1c - b1c * a0c;
        let mut candidates: Vec<(f64, f64)> = Vec::new();
        let coef_scale = scale * scale;
        if c2.abs().max(c1.abs()).max(c0.abs()) <= 1e-14 * coef_scale {
            candidates.extend([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)]);
        } else {
            let mut vs = Vec::new();
            if c2.abs() > 1e-14 * coef_scale {
                let disc = c1 * c1 - 4.0 * c2 * c0;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let q = -0.5 * (c1 + c1.signum() * sq);
                    if q != 0.0 {
                        vs.push(q / c2);
                        vs.push(c0 / q);
                    } else {
                        vs.push(0.0);
                    }
                }
            } else if c1.abs() > 0.0 {
                vs.push(-c0 / c1);
            }
            for v in vs {
                if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                    continue;
                }
                let den_f = a1c + a3c * v;
                let den_g = b1c + b3c * v;
                let u = if den_f.abs() >= den_g.abs() && den_f != 0.0 {
                    -(a0c + a2c * v) / den_f
                } else if den_g != 0.0 {
                    -(b0c + b2c * v) / den_g
                } else {
                    continue;
                };
                if (-1e-9..=1.0 + 1e-9).contains(&u) {
                    candidates.push((u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)));
                }
            }
        }
        let mut best: Option<DoublyCriticalPair> = None;
        for (u, v) in candidates {
            let pa = self.p[a0] + (self.p[a1] - self.p[a0]) * u;
            let pb = self.p[b0] + (self.p[b1] - self.p[b0]) * v;
            let ta = (self.t[a0] * (1.0 - u) + self.t[a1] * u).normalize();
            let tb = (self.t[b0] * (1.0 - v) + self.t[b1] * v).normalize();
            let chord = pb - pa;
            let len = chord.norm();
            if len == 0.0 {
                continue;
            }
            let residual = (chord.dot(&ta) / len).abs().max((chord.dot(&tb) / len).abs());
            if residual > ORTHOGONALITY_TOLERANCE {
                continue;
            }
            let cand = DoublyCriticalPair {
                index_a: a0,
                index_b: b0,
                offset_a: u,
                offset_b: v,
                chord_length: len,
                orthogonality_residual: residual,
            };
            if best.as_ref().is_none_or(|b| {
                (cand.orthogonality_residual, cand.chord_length) < (b.orthogonality_residual, b.chord_length)
            }) {
                best = Some(cand);
            }
        }
        best
    }

    /// Merge hits from neighbouring cells; each cluster keeps its shortest chord.
    fn cluster(&self, hits: Vec<((usize, usize), DoublyCriticalPair)>) -> Vec<DoublyCriticalPair> {
        let index: HashMap<(usize, usize), usize> =
            hits.iter().enumerate().map(|(k, (key, _))| (*key, k)).collect();
        let mut prev_of = vec![usize::MAX; self.p.len()];
        for (k, &(_, y)) in self.segs.iter().enumerate() {
            prev_of[y] = k;
        }
        let near = |e: usize| -> Vec<usize> {
            let (a, b) = self.segs[e];
            let mut out = vec![e];
            if self.seg_index[b] != usize::MAX {
                out.push(self.seg_index[b]);
            }
            if prev_of[a] != usize::MAX {
                out.push(prev_of[a]);
            }
            out
        };
        let mut parent: Vec<usize> = (0..hits.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (k, ((e1, e2), _)) in hits.iter().enumerate() {
            for x in near(*e1) {
                for y in near(*e2) {
                    let key = if x <= y { (x, y) } else { (y, x) };
                    if let Some(&other) = index.get(&key) {
                        let (ra, rb) = (find(&mut parent, k), find(&mut parent, other));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                }
            }
        }
        let mut best: HashMap<usize, DoublyCriticalPair> = HashMap::new();
        for (k, (_, pair)) in hits.into_iter().enumerate() {
            let root = find(&mut parent, k);
            match best.get(&root) {
                Some(b) if b.chord_length <= pair.chord_length => {}
                _ => {
                    best.insert(root, pair);
                }
            }
        }
        let mut out: Vec<DoublyCriticalPair> = best.into_values().collect();
        out.sort_by(|a, b| {
            a.chord_length
                .total_cmp(&b.chord_length)
                .then(a.index_a.cmp(&b.index_a))
                .then(a.index_b.cmp(&b.index_b))
        });
        out
    }

    fn scan_all(&self) -> Vec<((usize, usize), DoublyCriticalPair)> {
        let m = self.segs.len();
        (0..m)
            .into_par_iter()
            .map(|e1| {
                ((e1 + 1)..m)
                    .filter(|&e2| self.admissible(e1, e2))
                    .filter_map(|e2| self.cell(e1, e2).map(|p| ((e1, e2), p)))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }

    /// Cells whose first corners lie within `cutoff` of each other.
    fn scan_near(&self, cutoff: f64) -> Vec<((usize, usize), DoublyCriticalPair)> {
        let grid = SpatialHash::new(self.p, cutoff);
        let mut out = Vec::new();
        for e1 in 0..self.segs.len() {
            let a = self.segs[e1].0;
            let mut near: Vec<usize> = grid
                .query(&self.p[a], cutoff)
                .into_iter()
                .filter_map(|b| {
                    let e2 = self.seg_index[b];
                    (e2 != usize::MAX && e2 > e1).then_some(e2)
                })
                .collect();
            near.sort_unstable();
            for e2 in near {
                if self.admissible(e1, e2) {
                    if let Some(p) = self.cell(e1, e2) {
                        out.push(((e1, e2), p));
                    }
                }
            }
        }
        out
    }
}

/// Uniform grid over points for fixed-radius neighbour queries.
pub struct SpatialHash<'a> {
    points: &'a [Vec3],
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> SpatialHash<'a> {
    pub fn new(points: &'a [Vec3], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key_of(p, cell)).or_default().push(i);
        }
        Self { points, cell, buckets }
    }

    fn key_of(p: &Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices within `radius` of `q`, in increasing order.
    pub fn query(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let reach = (radius / self.cell).ceil() as i64;
        let (kx, ky, kz) = Self::key_of(q, self.cell);
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(v) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(v.iter().copied().filter(|&i| (self.points[i] - q).norm() <= radius));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// All doubly critical pairs outside the neighbour window, shortest chord first.
pub fn doubly_critical_pairs(curve: &DiscreteCurve) -> Vec<DoublyCriticalPair> {
    let scan = Scan::new(curve);
    let hits = scan.scan_all();
    scan.cluster(hits)
}

/// Minimum doubly critical chord, or infinity when there is none.
pub fn r2(curve: &DiscreteCurve) -> f64 {
    let scan = Scan::new(curve);
    if curve.len() > BRUTE_FORCE_LIMIT {
        let cutoff = THICKNESS_CAP + 0.5;
        let hits = scan.scan_near(cutoff + 2.0 * curve.max_segment_length());
        let best = hits.iter().map(|(_, p)| p.chord_length).fold(f64::INFINITY, f64::min);
        if best < cutoff {
            return best;
        }
    }
    scan.scan_all()
        .iter()
        .map(|(_, p)| p.chord_length)
        .fold(f64::INFINITY, f64::min)
}

/// `min(2, r2)`.
pub fn thickness(curve: &DiscreteCurve) -> f64 {
    r2(curve).min(THICKNESS_CAP)
}

/// Distance from `point` to the tube surface, zero inside the tube.
pub fn reach_at(curve: &DiscreteCurve, point: &Vec3) -> f64 {
    (centerline_distance(curve, point) - curve.tube_radius()).max(0.0)
}

/// Distance from `point` to the polygonal centre line.
pub fn centerline_distance(curve: &DiscreteCurve, point: &Vec3) -> f64 {
    let p = curve.points();
    let segs = curve.segments();
    if segs.is_empty() {
        return p.iter().map(|q| (q - point).norm()).fold(f64::INFINITY, f64::min);
    }
    segs.iter()
        .map(|&(i, j)| point_segment_distance(point, &p[i], &p[j]).0)
        .fold(f64::INFINITY, f64::min)
}

/// Length, curvature, chord and diameter summary.
pub fn report(curve: &DiscreteCurve) -> GeometricReport {
    let r2 = r2(curve);
    GeometricReport {
        length: curve::length(curve),
        max_curvature: curve::max_curvature(curve),
        r2,
        thickness: r2.min(THICKNESS_CAP),
        diameter: curve::diameter(curve),
    }
}

/// Test a closed curve against the class with thickness at least `tau` and unit curvature.
pub fn check_membership(curve: &DiscreteCurve, tau: f64) -> Result<MembershipVerdict> {
    if !(0.0..=THICKNESS_CAP).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau {tau} outside [0, 2]")));
    }
    if !curve.is_closed() {
        return Err(Error::NotAKnot("curve is open".into()));
    }
    if curve.component_count() != 1 {
        return Err(Error::NotAKnot(format!(
            "curve has {} components",
            curve.component_count()
        )));
    }
    let max_curvature = curve::max_curvature(curve);
    let thickness = thickness(curve);
    Ok(verdict(tau, max_curvature, thickness))
}

pub(crate) fn verdict(tau: f64, max_curvature: f64, thickness: f64) -> MembershipVerdict {
    let mut reasons = Vec::new();
    if max_curvature > 1.0 + CURVATURE_SLACK {
        reasons.push(format!("curvature {max_curvature:.4} exceeds 1"));
    }
    if thickness < tau - THICKNESS_SLACK {
        reasons.push(format!("thickness {thickness:.4} below {tau}"));
    }
    MembershipVerdict {
        tau,
        is_member: reasons.is_empty(),
        max_curvature,
        thickness,
        reasons,
        unknottedness: "assumed".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::v3;
    use std::f64::consts::PI;

    fn circle(radius: f64, n: usize, r: f64) -> DiscreteCurve {
        let pts = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                v3(radius * t.cos(), radius * t.sin(), 0.0)
            })
            .collect();
        DiscreteCurve::new(pts, true, r).unwrap()
    }

    #[test]
    fn circle_pairs_are_antipodal() {
        for r in [0.5, 1.0] {
            let c = circle(1.0, 256, r);
            let pairs = doubly_critical_pairs(&c);
            assert!(!pairs.is_empty());
            assert!((pairs[0].chord_length - 2.0).abs() < 1e-3, "{:?}", pairs[0]);
        }
    }

    #[test]
    fn circle_thickness() {
        assert!((thickness(&circle(1.0, 512, 1.0)) - 2.0).abs() < 1e-3);
        let big = circle(3.0, 600, 0.5);
        assert!((r2(&big) - 6.0).abs() < 1e-2);
        assert_eq!(thickness(&big), 2.0);
    }

    #[test]
    fn straight_line_has_no_pairs() {
        let line = DiscreteCurve::new((0..50).map(|i| v3(0.0, 0.0, i as f64 * 0.1)).collect(), false, 0.5).unwrap();
        assert!(doubly_critical_pairs(&line).is_empty());
        assert!(r2(&line).is_infinite());
    }

    #[test]
    fn reach_examples() {
        let c = circle(1.0, 512, 0.5);
        assert!((reach_at(&c, &v3(4.0, 0.0, 0.0)) - 2.5).abs() < 1e-9);
        assert!((reach_at(&c, &v3(0.0, 0.0, 0.0)) - 0.5).abs() < 1e-4);
        assert_eq!(reach_at(&c, &v3(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn membership() {
        let c = circle(1.0, 512, 1.0);
        assert!(check_membership(&c, 2.0).unwrap().is_member);
        assert!(check_membership(&c, 1.0).unwrap().is_member);
        let small = circle(0.5, 256, 0.25);
        let v = check_membership(&small, 1.0).unwrap();
        assert!(!v.is_member);
        assert!(v.reasons.iter().any(|r| r.contains("curvature")));
        let open = DiscreteCurve::new(vec![v3(0.0, 0.0, 0.0), v3(1.0, 0.0, 0.0)], false, 0.5).unwrap();
        assert!(matches!(check_membership(&open, 1.0), Err(Error::NotAKnot(_))));
    }

    #[test]
    fn hashed_scan_agrees_with_full_scan() {
        let c = circle(1.0, 2100, 0.5);
        let full = Scan::new(&c);
        let all = full.scan_all().iter().map(|(_, p)| p.chord_length).fold(f64::INFINITY, f64::min);
        assert!((r2(&c) - all).abs() < 1e-12);
    }
}
