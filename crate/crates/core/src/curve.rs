//! Discrete space curves: polygonal samples of (possibly multi-component) curves
//! together with the elementary measurements everything else is built on.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Minimum vertex count of a closed component.
pub const MIN_CLOSED_POINTS: usize = 8;
/// Minimum vertex count of an open component.
pub const MIN_OPEN_POINTS: usize = 2;

/// An ordered sample of a space curve.
///
/// A curve may consist of several components (a link, or the two strands of a
/// doubled core). `breaks` lists the index where each component after the first
/// starts; every component is closed when `closed` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCurve {
    points: Vec<Vec3>,
    closed: bool,
    tube_radius: f64,
    breaks: Vec<usize>,
}

impl DiscreteCurve {
    pub fn new(points: Vec<Vec3>, closed: bool, tube_radius: f64) -> Result<Self> {
        let curve = Self {
            points,
            closed,
            tube_radius,
            breaks: Vec::new(),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn from_components(components: Vec<Vec<Vec3>>, closed: bool, tube_radius: f64) -> Result<Self> {
        let mut points = Vec::new();
        let mut breaks = Vec::new();
        for (k, comp) in components.into_iter().enumerate() {
            if k > 0 {
                breaks.push(points.len());
            }
            points.extend(comp);
        }
        Self::with_breaks(points, closed, tube_radius, breaks)
    }

    pub fn with_breaks(points: Vec<Vec3>, closed: bool, tube_radius: f64, breaks: Vec<usize>) -> Result<Self> {
        let curve = Self {
            points,
            closed,
            tube_radius,
            breaks,
        };
        curve.validate()?;
        Ok(curve)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tube_radius) {
            return Err(Error::InvalidInput(format!(
                "tube radius {} outside [0, 1]",
                self.tube_radius
            )));
        }
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        let mut prev = 0;
        for &b in &self.breaks {
            if b <= prev || b >= self.points.len() {
                return Err(Error::InvalidInput(format!("bad component break {b}")));
            }
            prev = b;
        }
        let min = if self.closed { MIN_CLOSED_POINTS } else { MIN_OPEN_POINTS };
        for r in self.components() {
            if r.len() < min {
                return Err(Error::DegenerateCurve(format!(
                    "component has {} points, needs at least {min}",
                    r.len()
                )));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Mutable access to the vertices; the vertex count cannot change.
    pub fn points_mut(&mut self) -> &mut [Vec3] {
        &mut self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn with_tube_radius(mut self, r: f64) -> Result<Self> {
        self.tube_radius = r;
        self.validate()?;
        Ok(self)
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    /// Same topology (closedness, components, radius) with new vertex positions.
    pub fn with_points(&self, points: Vec<Vec3>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::InvalidInput("vertex count changed".into()));
        }
        Self::with_breaks(points, self.closed, self.tube_radius, self.breaks.clone())
    }

    pub fn component_count(&self) -> usize {
        self.breaks.len() + 1
    }

    pub fn components(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.breaks.len() + 1);
        let mut start = 0;
        for &b in &self.breaks {
            out.push(start..b);
            start = b;
        }
        out.push(start..self.points.len());
        out
    }

    pub fn component_points(&self, k: usize) -> &[Vec3] {
        &self.points[self.components()[k].clone()]
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.breaks.partition_point(|&b| b <= i)
    }

    fn component_range_of(&self, i: usize) -> Range<usize> {
        let k = self.component_of(i);
        let start = if k == 0 { 0 } else { self.breaks[k - 1] };
        let end = self.breaks.get(k).copied().unwrap_or(self.points.len());
        start..end
    }

    /// Following vertex along the curve, wrapping on closed components.
    pub fn next(&self, i: usize) -> Option<usize> {
        let r = self.component_range_of(i);
        if i + 1 < r.end {
            Some(i + 1)
        } else if self.closed {
            Some(r.start)
        } else {
            None
        }
    }

    pub fn prev(&self, i: usize) -> Option<usize> {
        let r = self.component_range_of(i);
        if i > r.start {
            Some(i - 1)
        } else if self.closed {
            Some(r.end - 1)
        } else {
            None
        }
    }

    /// All edges `(i, next(i))`, including closing edges.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        (0..self.points.len())
            .filter_map(|i| self.next(i).map(|j| (i, j)))
            .collect()
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.segments()
            .iter()
            .map(|&(i, j)| (self.points[j] - self.points[i]).norm())
            .collect()
    }

    pub fn max_segment_length(&self) -> f64 {
        self.segment_lengths().into_iter().fold(0.0, f64::max)
    }

    /// Mean edge length, the sampling scale `h`.
    pub fn mean_segment_length(&self) -> f64 {
        let l = self.segment_lengths();
        if l.is_empty() {
            0.0
        } else {
            l.iter().sum::<f64>() / l.len() as f64
        }
    }

    /// Unit tangents by central differences (one-sided at open ends).
    pub fn tangents(&self) -> Vec<Vec3> {
        (0..self.points.len())
            .map(|i| {
                let a = self.prev(i).unwrap_or(i);
                let b = self.next(i).unwrap_or(i);
                let d = self.points[b] - self.points[a];
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Vec3::zeros()
                }
            })
            .collect()
    }

    pub fn arc_table(&self) -> ArcTable {
        let mut s = vec![0.0; self.points.len()];
        let mut comp = vec![0; self.points.len()];
        let mut lengths = Vec::new();
        for (k, r) in self.components().into_iter().enumerate() {
            let mut acc = 0.0;
            for i in r.clone() {
                if i > r.start {
                    acc += (self.points[i] - self.points[i - 1]).norm();
                }
                s[i] = acc;
                comp[i] = k;
            }
            if self.closed {
                acc += (self.points[r.start] - self.points[r.end - 1]).norm();
            }
            lengths.push(acc);
        }
        ArcTable {
            s,
            comp,
            lengths,
            closed: self.closed,
        }
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }
}

/// Arc-length positions of the vertices, used for separation queries.
#[derive(Clone, Debug)]
pub struct ArcTable {
    pub s: Vec<f64>,
    pub comp: Vec<usize>,
    pub lengths: Vec<f64>,
    closed: bool,
}

impl ArcTable {
    /// Arc-length distance between two vertices along the curve; infinite across components.
    pub fn separation(&self, i: usize, j: usize) -> f64 {
        if self.comp[i] != self.comp[j] {
            return f64::INFINITY;
        }
        let d = (self.s[i] - self.s[j]).abs();
        if self.closed {
            d.min(self.lengths[self.comp[i]] - d)
        } else {
            d
        }
    }
}

/// A point with a unit tangent, e.g. the end of an open strand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub position: Vec3,
    pub tangent: Vec3,
}

impl Configuration {
    /// Normalises `tangent`; fails on a zero or non-finite direction.
    pub fn new(position: Vec3, tangent: Vec3) -> Result<Self> {
        let n = tangent.norm();
        if !(n.is_finite() && n > 1e-12) {
            return Err(Error::InvalidInput("configuration tangent is zero".into()));
        }
        Ok(Self {
            position,
            tangent: tangent / n,
        })
    }

    /// Same point traversed the other way.
    pub fn reversed(&self) -> Self {
        Self {
            position: self.position,
            tangent: -self.tangent,
        }
    }
}

/// Summary measurements of a curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricReport {
    pub length: f64,
    pub max_curvature: f64,
    /// Minimum doubly critical chord; `None` stands for +infinity.
    #[serde(with = "infinite_as_null")]
    pub r2: f64,
    pub thickness: f64,
    pub diameter: f64,
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Total length over all components.
pub fn length(curve: &DiscreteCurve) -> f64 {
    curve.segment_lengths().iter().sum()
}

/// Largest distance between any two vertices.
pub fn diameter(curve: &DiscreteCurve) -> f64 {
    point_set_diameter(curve.points())
}

pub fn point_set_diameter(points: &[Vec3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// Circumscribed-circle curvature `2 sin(phi/2) / l` at each vertex, where `phi` is
/// the turning angle and `l` the mean of the two adjacent edge lengths.
/// Endpoints of open components carry 0.
pub fn discrete_curvature(curve: &DiscreteCurve) -> Vec<f64> {
    let p = curve.points();
    (0..p.len())
        .map(|i| match (curve.prev(i), curve.next(i)) {
            (Some(a), Some(b)) => vertex_curvature(&p[a], &p[i], &p[b]),
            _ => 0.0,
        })
        .collect()
}

pub(crate) fn vertex_curvature(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let u = b - a;
    let v = c - b;
    let (lu, lv) = (u.norm(), v.norm());
    if lu == 0.0 || lv == 0.0 {
        return f64::INFINITY;
    }
    let phi = crate::geom::angle_between(&u, &v);
    2.0 * (phi / 2.0).sin() / (0.5 * (lu + lv))
}

pub fn max_curvature(curve: &DiscreteCurve) -> f64 {
    discrete_curvature(curve).into_iter().fold(0.0, f64::max)
}

/// Resample to `n` vertices in total with equal chord lengths on every component.
///
/// New vertices lie on the input polygon, the first vertex of each component is
/// kept, and components receive vertices in proportion to their length.
pub fn resample(curve: &DiscreteCurve, n: usize) -> Result<DiscreteCurve> {
    let min = if curve.is_closed() { MIN_CLOSED_POINTS } else { MIN_OPEN_POINTS };
    let ranges = curve.components();
    if n < min * ranges.len() {
        return Err(Error::InvalidInput(format!(
            "cannot resample to {n} points (need at least {min} per component)"
        )));
    }
    let lengths: Vec<f64> = ranges
        .iter()
        .map(|r| polygon_length(&curve.points()[r.clone()], curve.is_closed()))
        .collect();
    let counts = apportion(&lengths, n, min)?;
    resample_components(curve, &counts)
}

/// Resample every component so that its chord length is close to `h`.
pub fn resample_spacing(curve: &DiscreteCurve, h: f64) -> Result<DiscreteCurve> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput("spacing must be positive".into()));
    }
    let min = if curve.is_closed() { MIN_CLOSED_POINTS } else { MIN_OPEN_POINTS };
    let counts: Vec<usize> = curve
        .components()
        .iter()
        .map(|r| {
            let l = polygon_length(&curve.points()[r.clone()], curve.is_closed());
            let segs = (l / h).round() as usize;
            let pts = if curve.is_closed() { segs } else { segs + 1 };
            pts.max(min)
        })
        .collect();
    resample_components(curve, &counts)
}

fn resample_components(curve: &DiscreteCurve, counts: &[usize]) -> Result<DiscreteCurve> {
    let mut comps = Vec::with_capacity(counts.len());
    for (r, &m) in curve.components().iter().zip(counts) {
        comps.push(equal_chord_resample(&curve.points()[r.clone()], curve.is_closed(), m)?);
    }
    DiscreteCurve::from_components(comps, curve.is_closed(), curve.tube_radius())
}

fn apportion(lengths: &[f64], n: usize, min: usize) -> Result<Vec<usize>> {
    let total: f64 = lengths.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCurve("curve has zero length".into()));
    }
    let spare = n - min * lengths.len();
    let shares: Vec<f64> = lengths.iter().map(|l| l / total * spare as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| min + s.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    Ok(counts)
}

pub(crate) fn polygon_length(p: &[Vec3], closed: bool) -> f64 {
    let mut l: f64 = p.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if closed && p.len() > 1 {
        l += (p[0] - p[p.len() - 1]).norm();
    }
    l
}

/// Walks a polygon placing points at a fixed chord distance from each other.
struct ChordWalker<'a> {
    poly: &'a [Vec3],
    cum: Vec<f64>,
}

impl<'a> ChordWalker<'a> {
    fn new(poly: &'a [Vec3]) -> Self {
        let mut cum = vec![0.0; poly.len()];
        for k in 1..poly.len() {
            cum[k] = cum[k - 1] + (poly[k] - poly[k - 1]).norm();
        }
        Self { poly, cum }
    }

    fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// Place `steps` points after the first vertex with chord `c`; returns the points
    /// and the arc position of the last one (infinite if the polygon runs out).
    fn walk(&self, c: f64, steps: usize, keep: bool) -> (Vec<Vec3>, f64) {
        let poly = self.poly;
        let mut out = Vec::new();
        let mut seg = 0usize;
        let mut u = 0.0f64;
        let mut q = poly[0];
        let mut pos = 0.0;
        let c2 = c * c;
        for _ in 0..steps {
            let mut found = false;
            while seg + 1 < poly.len() {
                let a = poly[seg];
                let d = poly[seg + 1] - a;
                let dd = d.norm_squared();
                if dd > 0.0 {
                    let w = a - q;
                    let b = d.dot(&w);
                    let cc = w.norm_squared() - c2;
                    let disc = b * b - dd * cc;
                    if disc >= 0.0 {
                        let t = (-b + disc.sqrt()) / dd;
                        if t >= u && t <= 1.0 {
                            u = t;
                            q = a + d * t;
                            pos = self.cum[seg] + t * dd.sqrt();
                            found = true;
                            break;
                        }
                    }
                }
                seg += 1;
                u = 0.0;
            }
            if !found {
                return (out, f64::INFINITY);
            }
            if keep {
                out.push(q);
            }
        }
        (out, pos)
    }
}

/// Equal-chord resampling of one component to `m` vertices.
fn equal_chord_resample(p: &[Vec3], closed: bool, m: usize) -> Result<Vec<Vec3>> {
    let mut poly: Vec<Vec3> = Vec::with_capacity(p.len() + 1);
    for q in p {
        if poly.last().is_none_or(|l: &Vec3| (q - l).norm() > 0.0) {
            poly.push(*q);
        }
    }
    if closed {
        let first = poly[0];
        if (first - poly[poly.len() - 1]).norm() > 0.0 {
            poly.push(first);
        }
    }
    if poly.len() < 2 {
        return Err(Error::DegenerateCurve("curve has zero length".into()));
    }
    let walker = ChordWalker::new(&poly);
    let total = walker.total();
    if !(total > 1e-12) {
        return Err(Error::DegenerateCurve("curve has zero length".into()));
    }
    let steps = if closed { m } else { m - 1 };
    let residual = |c: f64| walker.walk(c, steps, false).1 - total;

    // Chords never exceed arc length, so `total / steps` overshoots (or lands on) the end.
    let mut hi = total / steps as f64;
    let mut f_hi = residual(hi);
    if f_hi.abs() <= 1e-13 * total {
        return Ok(finish(&walker, hi, steps, closed, &poly));
    }
    let mut lo = 0.5 * hi;
    let mut f_lo = residual(lo);
    while f_lo > 0.0 {
        lo *= 0.5;
        f_lo = residual(lo);
        if lo < 1e-300 {
            return Err(Error::DegenerateCurve("chord search failed".into()));
        }
    }
    // Illinois variant of regula falsi; the infinite branch falls back to bisection.
    let mut side = 0i8;
    let mut c = lo;
    for _ in 0..200 {
        c = if f_hi.is_finite() {
            (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let f = residual(c);
        if f.abs() <= 1e-13 * total || hi - lo <= 1e-15 * hi {
            break;
        }
        if f > 0.0 {
            hi = c;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = c;
            f_lo = f;
            if side == -1 && f_hi.is_finite() {
                f_hi *= 0.5;
            }
            side = -1;
        }
    }
    Ok(finish(&walker, c, steps, closed, &poly))
}

fn finish(walker: &ChordWalker, c: f64, steps: usize, closed: bool, poly: &[Vec3]) -> Vec<Vec3> {
    let (mut pts, _) = walker.walk(c, steps - 1, true);
    pts.insert(0, poly[0]);
    if !closed {
        pts.push(poly[poly.len() - 1]);
    }
    pts
}

/// Deterministic smooth perturbation: a few low-frequency random modes scaled so the
/// largest vertex displacement equals `amplitude`.
pub fn perturb(curve: &DiscreteCurve, amplitude: f64, seed: u64) -> Result<DiscreteCurve> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidInput("amplitude must be non-negative".into()));
    }
    if amplitude == 0.0 {
        return Ok(curve.clone());
    }
    const MODES: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = curve.arc_table();
    let mut disp = vec![Vec3::zeros(); curve.len()];
    for (k, r) in curve.components().into_iter().enumerate() {
        let l = table.lengths[k].max(1e-12);
        let coeffs: Vec<(Vec3, Vec3)> = (0..MODES)
            .map(|_| {
                let mut g = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (g(), g())
            })
            .collect();
        for i in r {
            let x = table.s[i] / l;
            let mut d = Vec3::zeros();
            for (m, (a, b)) in coeffs.iter().enumerate() {
                let w = if curve.is_closed() {
                    2.0 * std::f64::consts::PI * (m + 1) as f64
                } else {
                    std::f64::consts::PI * (m + 1) as f64
                };
                d += a * (w * x).cos() + b * (w * x).sin();
            }
            disp[i] = d;
        }
    }
    let peak = disp.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    let pts = curve
        .points()
        .iter()
        .zip(&disp)
        .map(|(p, d)| p + d * scale)
        .collect();
    curve.with_points(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::v3;
    use std::f64::consts::PI;

    fn circle(radius: f64, n: usize) -> DiscreteCurve {
        let pts = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                v3(radius * t.cos(), radius * t.sin(), 0.0)
            })
            .collect();
        DiscreteCurve::new(pts, true, 0.5).unwrap()
    }

    #[test]
    fn rejects_too_few_points() {
        let pts = vec![Vec3::zeros(); 5];
        assert!(matches!(
            DiscreteCurve::new(pts.clone(), true, 0.5),
            Err(Error::DegenerateCurve(_))
        ));
        assert!(DiscreteCurve::new(pts[..2].to_vec(), false, 0.5).is_ok());
        assert!(DiscreteCurve::new(pts[..2].to_vec(), false, 1.5).is_err());
    }

    #[test]
    fn circle_length_and_diameter() {
        let c = circle(1.0, 512);
        assert!((length(&c) - 2.0 * PI).abs() < 0.01);
        assert!((diameter(&c) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn segment_measurements() {
        let c = DiscreteCurve::new(vec![v3(0.0, 0.0, 0.0), v3(3.0, 0.0, 0.0)], false, 0.5).unwrap();
        assert_eq!(length(&c), 3.0);
        assert_eq!(diameter(&c), 3.0);
    }

    #[test]
    fn curvature_of_circles_and_lines() {
        for (r, k) in [(1.0, 1.0), (2.0, 0.5)] {
            for v in discrete_curvature(&circle(r, 512)) {
                assert!((v - k).abs() < 1e-3);
            }
        }
        let line = DiscreteCurve::new((0..20).map(|i| v3(i as f64 * 0.1, 0.0, 0.0)).collect(), false, 0.5).unwrap();
        assert!(discrete_curvature(&line).iter().all(|k| k.abs() < 1e-12));
    }

    #[test]
    fn resample_circle_down() {
        let c = resample(&circle(1.0, 512), 256).unwrap();
        assert_eq!(c.len(), 256);
        assert!((length(&c) - 2.0 * PI).abs() < 2.0 * PI * 1e-3);
    }

    #[test]
    fn resample_segment_uniform() {
        let c = DiscreteCurve::new(vec![v3(0.0, 0.0, 0.0), v3(1.0, 0.0, 0.0)], false, 0.5).unwrap();
        let r = resample(&c, 11).unwrap();
        for l in r.segment_lengths() {
            assert!((l - 0.1).abs() < 1e-12);
        }
        assert_eq!(r.points()[10], v3(1.0, 0.0, 0.0));
    }

    #[test]
    fn resample_nonuniform_circle() {
        let pts: Vec<Vec3> = (0..300)
            .map(|i| {
                let u = i as f64 / 300.0;
                let t = 2.0 * PI * (u + 0.12 * (2.0 * PI * u).sin());
                v3(t.cos(), t.sin(), 0.0)
            })
            .collect();
        let c = DiscreteCurve::new(pts, true, 0.5).unwrap();
        let r = resample(&c, 200).unwrap();
        let l = r.segment_lengths();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        let var = l.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / l.len() as f64;
        assert!(var.sqrt() / mean < 0.01);
    }

    #[test]
    fn resample_is_idempotent() {
        let c = perturb(&circle(1.0, 100), 0.2, 3).unwrap();
        let a = resample(&c, 77).unwrap();
        let b = resample(&a, 77).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn resample_zero_length_fails() {
        let c = DiscreteCurve::new(vec![v3(1.0, 1.0, 1.0); 3], false, 0.5).unwrap();
        assert!(matches!(resample(&c, 5), Err(Error::DegenerateCurve(_))));
    }

    #[test]
    fn perturb_bounds_and_determinism() {
        let c = circle(1.0, 128);
        assert_eq!(perturb(&c, 0.0, 9).unwrap(), c);
        let a = perturb(&c, 0.1, 9).unwrap();
        let b = perturb(&c, 0.1, 9).unwrap();
        assert_eq!(a, b);
        let max = a.points().iter().zip(c.points()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(max <= 0.1 + 1e-12);
    }

    #[test]
    fn components_and_neighbours() {
        let a: Vec<Vec3> = (0..4).map(|i| v3(i as f64, 0.0, 0.0)).collect();
        let b: Vec<Vec3> = (0..3).map(|i| v3(i as f64, 1.0, 0.0)).collect();
        let c = DiscreteCurve::from_components(vec![a, b], false, 0.5).unwrap();
        assert_eq!(c.breaks(), &[4]);
        assert_eq!(c.next(3), None);
        assert_eq!(c.prev(4), None);
        assert_eq!(c.component_of(5), 1);
        assert_eq!(c.segments().len(), 5);
        assert!(c.arc_table().separation(0, 5).is_infinite());
    }
}
