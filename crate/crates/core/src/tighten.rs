//! Shrink-on-no-overlap tightening.
//!
//! Each iteration scales the curve slightly towards its centroid, restores equal
//! spacing, pushes apart pairs that came too close, relaxes curvature spikes and
//! clamps the ends of open strands. An iteration that cannot be made feasible is
//! rolled back and retried with a smaller shrink.

use serde::{Deserialize, Serialize};

use crate::curve::{self, DiscreteCurve, GeometricReport};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::thickness::{self, SpatialHash, CURVATURE_SLACK};

/// Penetration accepted after overlap removal, relative to `tau`.
pub const PENETRATION_TOLERANCE: f64 = 1e-3;

/// Shrink amount, relative to the configured one, below which steps get [`STUCK_ROUNDS`].
const STUCK_FRACTION: f64 = 1e-2;
/// Shrink amount, relative to the configured one, at which a failing run has converged.
const CONVERGED_FRACTION: f64 = 1e-3;
const STUCK_ROUNDS: usize = 64;
/// Share of the requested shrink a repaired step has to keep to count as progress.
const MIN_PROGRESS: f64 = 1e-2;

/// Relative margin below the curvature bound aimed at while relaxing.
const RELAX_MARGIN: f64 = 2e-3;

/// Two parallel planes bounding open strands: `0 <= (x - origin) . normal <= gap`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallPlanes {
    pub origin: Vec3,
    pub normal: Vec3,
    pub gap: f64,
}

impl WallPlanes {
    /// The planes `z = 0` and `z = gap`.
    pub fn horizontal(gap: f64) -> Self {
        Self {
            origin: Vec3::zeros(),
            normal: Vec3::z(),
            gap,
        }
    }

    /// Move `p` onto the nearer wall if it lies outside the slab.
    pub fn project(&self, p: &mut Vec3) {
        let z = (*p - self.origin).dot(&self.normal);
        if z < 0.0 {
            *p -= self.normal * z;
        } else if z > self.gap {
            *p -= self.normal * (z - self.gap);
        }
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let z = (p - self.origin).dot(&self.normal);
        z >= -tol && z <= self.gap + tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightenConfig {
    /// Target thickness in `(0, 2]`.
    pub tau: f64,
    /// Curvature bound enforced while tightening; 1 unless a later offset needs room.
    pub curvature_bound: f64,
    /// Per-iteration scale factor in `(0.99, 1)`.
    pub shrink_rate: f64,
    /// Gauss-Seidel sweeps per overlap removal.
    pub overlap_push_iters: usize,
    pub max_iters: usize,
    /// Relative length change under which the run counts as stalled.
    pub stall_tolerance: f64,
    /// Iterations over which the stall test looks back.
    pub stall_window: usize,
    pub wall_planes: Option<WallPlanes>,
    pub seed: u64,
    /// Record a frame every this many accepted iterations.
    pub trace_every: Option<usize>,
}

impl TightenConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            curvature_bound: 1.0,
            shrink_rate: 0.9995,
            overlap_push_iters: 50,
            max_iters: 20_000,
            stall_tolerance: 1e-7,
            stall_window: 1000,
            wall_planes: None,
            seed: 0,
            trace_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 2.0) {
            return Err(Error::InvalidInput(format!("tau {} outside (0, 2]", self.tau)));
        }
        if !(self.curvature_bound > 0.0 && self.curvature_bound <= 1.0) {
            return Err(Error::InvalidInput("curvature bound outside (0, 1]".into()));
        }
        if !(self.shrink_rate > 0.99 && self.shrink_rate < 1.0) {
            return Err(Error::InvalidInput("shrink rate outside (0.99, 1)".into()));
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidInput("stall window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TightenResult {
    pub final_curve: DiscreteCurve,
    pub report: GeometricReport,
    pub iterations: usize,
    pub converged: bool,
    /// Length after every accepted iteration, starting with the repaired input.
    pub length_history: Vec<f64>,
    /// `(iteration, curve)` snapshots when tracing was requested.
    pub frames: Vec<(usize, DiscreteCurve)>,
}

/// Two vertices closer than the target thickness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub index_a: usize,
    pub index_b: usize,
    pub depth: f64,
}

/// Result of [`remove_overlaps`].
#[derive(Clone, Debug)]
pub struct OverlapOutcome {
    pub curve: DiscreteCurve,
    pub max_penetration: f64,
    pub sweeps: usize,
    pub resolved: bool,
}

impl OverlapOutcome {
    pub fn into_result(self) -> Result<DiscreteCurve> {
        if self.resolved {
            Ok(self.curve)
        } else {
            Err(Error::OverlapStuck {
                max_penetration: self.max_penetration,
                sweeps: self.sweeps,
            })
        }
    }
}

/// Vertex pairs outside the neighbour window (for a tube of diameter `tau`) that
/// are closer than `tau`, deepest first.
pub fn detect_overlaps(curve: &DiscreteCurve, tau: f64) -> Vec<Overlap> {
    let window = overlap_window(curve, tau);
    let arc = curve.arc_table();
    let p = curve.points();
    let tol = overlap_tolerance(curve, tau);
    let grid = SpatialHash::new(p, tau);
    let mut out = Vec::new();
    for i in 0..p.len() {
        for j in grid.query(&p[i], tau) {
            if j <= i || arc.separation(i, j) < window {
                continue;
            }
            let depth = tau - (p[j] - p[i]).norm();
            if depth > tol {
                out.push(Overlap {
                    index_a: i,
                    index_b: j,
                    depth,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.depth
            .total_cmp(&a.depth)
            .then(a.index_a.cmp(&b.index_a))
            .then(a.index_b.cmp(&b.index_b))
    });
    out
}

/// Arc window for plain overlap tests. Under unit curvature anything within arc
/// length `pi` may legitimately be closer than 2, so the window never exceeds that.
fn overlap_window(curve: &DiscreteCurve, tau: f64) -> f64 {
    std::f64::consts::PI * (tau / 2.0).min(1.0).max(curve.mean_segment_length())
        - 1.5 * curve.max_segment_length()
}

/// Depth below which a pair is not reported: the sampling error of chords near the window.
fn overlap_tolerance(curve: &DiscreteCurve, tau: f64) -> f64 {
    curve.max_segment_length().powi(2).max(1e-9 * tau)
}

/// Push overlapping pairs apart until no pair penetrates by more than `1e-3 tau`.
pub fn remove_overlaps(curve: &DiscreteCurve, tau: f64, max_sweeps: usize) -> OverlapOutcome {
    let window = overlap_window(curve, tau);
    let rule = Clearance::Flat { tau, window };
    let pinned = vec![false; curve.len()];
    let mut pts = curve.points().to_vec();
    let arc = curve.arc_table();
    let mut sweeps = 0;
    let tol = PENETRATION_TOLERANCE * tau;
    while sweeps < max_sweeps {
        let pairs = candidate_pairs(&pts, &arc, &rule, 1.0);
        let worst = push_sweep(&mut pts, &pairs, &pinned, 1e-6 * tau);
        sweeps += 1;
        if worst <= tol {
            break;
        }
    }
    let pairs = candidate_pairs(&pts, &arc, &rule, 1.0);
    let residual = max_deficit(&pts, &pairs).max(0.0);
    let out = curve.with_points(pts).expect("vertex count unchanged");
    OverlapOutcome {
        curve: out,
        max_penetration: residual,
        sweeps,
        resolved: residual <= tol,
    }
}

/// Move vertices whose curvature exceeds `bound` towards the midpoint of their
/// neighbours, at most one edge length per sweep, until all are within tolerance.
pub fn control_curvature(curve: &DiscreteCurve, bound: f64) -> DiscreteCurve {
    let mut pts = curve.points().to_vec();
    let pinned = vec![false; curve.len()];
    relax_curvature(curve, &mut pts, &pinned, bound, 1e-9, 200, 16);
    curve.with_points(pts).expect("vertex count unchanged")
}

/// Uniform scaling by `rate` about the centroid.
pub fn shrink_step(curve: &DiscreteCurve, rate: f64) -> DiscreteCurve {
    shrink_about(curve, rate, curve.centroid())
}

fn shrink_about(curve: &DiscreteCurve, rate: f64, c: Vec3) -> DiscreteCurve {
    if rate == 1.0 {
        return curve.clone();
    }
    let pts = curve.points().iter().map(|p| c + (p - c) * rate).collect();
    curve.with_points(pts).expect("vertex count unchanged")
}

/// Tighten a closed curve (or an open one when walls are configured).
pub fn tighten(curve: &DiscreteCurve, config: &TightenConfig) -> Result<TightenResult> {
    config.validate()?;
    if !curve.is_closed() && config.wall_planes.is_none() {
        return Err(Error::InvalidInput("open curves need wall planes".into()));
    }
    Tightener::new(curve, config)?.run()
}

/// Tighten open strands between the two wall planes with ends and end tangents fixed.
pub fn tighten_open(curve: &DiscreteCurve, config: &TightenConfig) -> Result<TightenResult> {
    if curve.is_closed() {
        return Err(Error::InvalidInput("tighten_open needs an open curve".into()));
    }
    if config.wall_planes.is_none() {
        return Err(Error::InvalidInput("tighten_open needs wall planes".into()));
    }
    tighten(curve, config)
}

/// Required separation between two vertices.
#[derive(Clone, Copy, Debug)]
enum Clearance {
    /// Plain `tau` beyond a fixed arc window.
    Flat { tau: f64, window: f64 },
    /// Chord of a circle of curvature `bound` up to `tau`, for pairs at least `min_sep` apart.
    Curved { tau: f64, bound: f64, min_sep: f64 },
}

impl Clearance {
    fn required(&self, sep: f64) -> Option<f64> {
        match *self {
            Clearance::Flat { tau, window } => (sep >= window).then_some(tau),
            Clearance::Curved { tau, bound, min_sep } => {
                if sep < min_sep {
                    None
                } else if sep.is_infinite() {
                    Some(tau)
                } else {
                    let half = (bound * sep).min(std::f64::consts::PI) / 2.0;
                    Some(tau.min(2.0 / bound * half.sin()))
                }
            }
        }
    }

    fn reach(&self) -> f64 {
        match *self {
            Clearance::Flat { tau, .. } | Clearance::Curved { tau, .. } => tau,
        }
    }
}

struct Pair {
    i: usize,
    j: usize,
    required: f64,
}

fn candidate_pairs(pts: &[Vec3], arc: &curve::ArcTable, rule: &Clearance, slack: f64) -> Vec<Pair> {
    let reach = rule.reach() * slack;
    let grid = SpatialHash::new(pts, reach);
    let mut out = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        for j in grid.query(p, reach) {
            if j <= i {
                continue;
            }
            if let Some(required) = rule.required(arc.separation(i, j)) {
                out.push(Pair { i, j, required });
            }
        }
    }
    out
}

fn max_deficit(pts: &[Vec3], pairs: &[Pair]) -> f64 {
    pairs
        .iter()
        .map(|q| q.required - (pts[q.j] - pts[q.i]).norm())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One Gauss-Seidel pass; returns the largest deficit seen before pushing.
fn push_sweep(pts: &mut [Vec3], pairs: &[Pair], pinned: &[bool], margin: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for q in pairs {
        let d = pts[q.j] - pts[q.i];
        let len = d.norm();
        let deficit = q.required - len;
        worst = worst.max(deficit);
        if deficit <= 0.0 {
            continue;
        }
        let u = if len > 1e-12 {
            d / len
        } else {
            crate::geom::any_perpendicular(&Vec3::new(1.0, 0.3, 0.1))
        };
        let total = deficit + margin;
        match (pinned[q.i], pinned[q.j]) {
            (true, true) => {}
            (true, false) => pts[q.j] += u * total,
            (false, true) => pts[q.i] -= u * total,
            (false, false) => {
                pts[q.i] -= u * (total / 2.0);
                pts[q.j] += u * (total / 2.0);
            }
        }
    }
    worst
}

/// Gauss-Seidel curvature relaxation on `pts` (topology taken from `curve`).
///
/// Runs coarse-to-fine: at stride `s` only every `s`-th vertex of each component is
/// relaxed and the vertices in between follow by linear interpolation of the moves,
/// so broad bends do not have to diffuse through fine sampling.
fn relax_curvature(
    curve: &DiscreteCurve,
    pts: &mut [Vec3],
    pinned: &[bool],
    bound: f64,
    rel_tol: f64,
    max_sweeps: usize,
    coarsest: usize,
) -> f64 {
    let mut stride = coarsest.max(1);
    while stride > 1 {
        for r in curve.components() {
            relax_level(pts, r, curve.is_closed(), stride, pinned, bound, rel_tol, max_sweeps);
        }
        stride /= 2;
    }
    let mut worst = 0.0f64;
    for r in curve.components() {
        worst = worst.max(relax_level(pts, r, curve.is_closed(), 1, pinned, bound, rel_tol, max_sweeps));
    }
    worst
}

#[allow(clippy::too_many_arguments)]
fn relax_level(
    pts: &mut [Vec3],
    r: std::ops::Range<usize>,
    closed: bool,
    stride: usize,
    pinned: &[bool],
    bound: f64,
    rel_tol: f64,
    max_sweeps: usize,
) -> f64 {
    let len = r.len();
    // Pinned vertices stay in every level so end tangents are seen by coarse passes.
    let mut idx: Vec<usize> = (0..len)
        .filter(|&k| k % stride == 0 || pinned[r.start + k])
        .map(|k| r.start + k)
        .collect();
    if !closed && *idx.last().unwrap() != r.end - 1 {
        idx.push(r.end - 1);
    }
    let m = idx.len();
    if m < 3 || (closed && m < 4) {
        return 0.0;
    }
    let before: Vec<Vec3> = idx.iter().map(|&i| pts[i]).collect();
    let mut q = before.clone();
    let fixed: Vec<bool> = idx.iter().map(|&i| pinned[i]).collect();
    let worst = relax_polygon(&mut q, closed, &fixed, bound, rel_tol, max_sweeps);
    if stride == 1 {
        for (k, &i) in idx.iter().enumerate() {
            pts[i] = q[k];
        }
        return worst;
    }
    let last = if closed { m } else { m - 1 };
    for k in 0..last {
        let k2 = (k + 1) % m;
        let (i0, i1) = (idx[k], if k2 == 0 { r.end } else { idx[k2] });
        let (d0, d1) = (q[k] - before[k], q[k2] - before[k2]);
        let span = (i1 - i0) as f64;
        for i in i0..i1 {
            if !pinned[i] {
                let t = (i - i0) as f64 / span;
                pts[i] += d0 * (1.0 - t) + d1 * t;
            }
        }
    }
    if !closed && !pinned[idx[m - 1]] {
        pts[idx[m - 1]] = q[m - 1];
    }
    worst
}

fn relax_polygon(q: &mut [Vec3], closed: bool, fixed: &[bool], bound: f64, rel_tol: f64, max_sweeps: usize) -> f64 {
    let m = q.len();
    let trigger = bound * (1.0 + rel_tol);
    let nb = |i: usize| -> Option<(usize, usize)> {
        if closed {
            Some(((i + m - 1) % m, (i + 1) % m))
        } else if i == 0 || i + 1 == m {
            None
        } else {
            Some((i - 1, i + 1))
        }
    };
    let mut worst = 0.0;
    for _ in 0..max_sweeps {
        worst = 0.0f64;
        let mut moved = false;
        for i in 0..m {
            let Some((a, b)) = nb(i) else { continue };
            let k = curve::vertex_curvature(&q[a], &q[i], &q[b]);
            worst = worst.max(k);
            if k <= trigger {
                continue;
            }
            if fixed[i] {
                // Turn the free neighbour's edge onto the largest admissible angle.
                let free = if !fixed[b] { b } else if !fixed[a] { a } else { continue };
                let other = if free == b { a } else { b };
                let e = (q[i] - q[other]).normalize();
                let d = q[free] - q[i];
                let ell = 0.5 * ((q[i] - q[other]).norm() + d.norm());
                let phi = 2.0 * (trigger * ell / 2.0).min(1.0).asin();
                let side = d - e * e.dot(&d);
                let unit = if side.norm() > 1e-15 { side / side.norm() } else { crate::geom::any_perpendicular(&e) };
                q[free] = q[i] + (e * phi.cos() + unit * phi.sin()) * d.norm();
                moved = true;
                continue;
            }
            let mid = (q[a] + q[b]) / 2.0;
            let h = 0.5 * ((q[i] - q[a]).norm() + (q[b] - q[i]).norm());
            let start = q[i];
            // Bisect on the fraction of the way back towards the midpoint.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..40 {
                let f = 0.5 * (lo + hi);
                let cand = mid + (start - mid) * f;
                if curve::vertex_curvature(&q[a], &cand, &q[b]) > trigger {
                    hi = f;
                } else {
                    lo = f;
                }
            }
            let mut target = mid + (start - mid) * lo;
            let step = target - start;
            if step.norm() > h {
                target = start + step * (h / step.norm());
            }
            q[i] = target;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    worst
}

/// Spreads a vertex move over its neighbours along the curve.
struct Kernel {
    prev: Vec<Option<usize>>,
    next: Vec<Option<usize>>,
    /// Weights by hop count, starting with the moved vertex itself.
    weights: Vec<f64>,
}

/// Arc length, in units of `tau`, a push reaches to either side.
const KERNEL_REACH: f64 = 0.1;

impl Kernel {
    fn new(curve: &DiscreteCurve, tau: f64) -> Self {
        // At least two hops; on fine samplings a narrow push is a curvature spike that
        // relaxation then undoes.
        let hops = ((KERNEL_REACH * tau / curve.mean_segment_length()).floor() as usize).max(2);
        Self {
            prev: (0..curve.len()).map(|i| curve.prev(i)).collect(),
            next: (0..curve.len()).map(|i| curve.next(i)).collect(),
            weights: (0..=hops).map(|k| 0.25f64.powf(k as f64 / hops as f64)).collect(),
        }
    }

    fn apply(&self, pts: &mut [Vec3], pinned: &[bool], i: usize, d: Vec3) {
        if !pinned[i] {
            pts[i] += d;
        }
        for dir in [&self.prev, &self.next] {
            let mut k = i;
            for w in &self.weights[1..] {
                match dir[k] {
                    Some(j) if j != i => {
                        k = j;
                        if !pinned[k] {
                            pts[k] += d * *w;
                        }
                    }
                    _ => break,
                }
            }
        }
    }

    /// Gauss-Seidel pass pushing each short pair to its required distance.
    fn sweep(&self, pts: &mut [Vec3], pairs: &[Pair], pinned: &[bool], margin: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for q in pairs {
            let d = pts[q.j] - pts[q.i];
            let len = d.norm();
            let deficit = q.required - len;
            worst = worst.max(deficit);
            if deficit <= 0.0 || len <= 1e-12 {
                continue;
            }
            let u = d / len;
            let total = deficit + margin;
            let (share_i, share_j) = match (pinned[q.i], pinned[q.j]) {
                (true, true) => continue,
                (true, false) => (0.0, total),
                (false, true) => (total, 0.0),
                (false, false) => (total / 2.0, total / 2.0),
            };
            if share_i > 0.0 {
                self.apply(pts, pinned, q.i, -u * share_i);
            }
            if share_j > 0.0 {
                self.apply(pts, pinned, q.j, u * share_j);
            }
        }
        worst
    }
}

struct Tightener<'a> {
    config: &'a TightenConfig,
    template: DiscreteCurve,
    counts: Vec<usize>,
    ends: Vec<(Vec3, Vec3, Vec3, Vec3)>,
    pinned: Vec<bool>,
    kernel: Kernel,
}

impl<'a> Tightener<'a> {
    fn new(curve: &DiscreteCurve, config: &'a TightenConfig) -> Result<Self> {
        let counts: Vec<usize> = curve.components().iter().map(|r| r.len()).collect();
        let mut pinned = vec![false; curve.len()];
        let mut ends = Vec::new();
        if !curve.is_closed() {
            for r in curve.components() {
                if r.len() < 4 {
                    return Err(Error::InvalidInput("open strands need at least 4 points".into()));
                }
                let p = curve.points();
                let (a, b) = (r.start, r.end - 1);
                ends.push((
                    p[a],
                    (p[a + 1] - p[a]).normalize(),
                    p[b],
                    (p[b] - p[b - 1]).normalize(),
                ));
                for k in [a, a + 1, b - 1, b] {
                    pinned[k] = true;
                }
            }
        }
        Ok(Self {
            config,
            template: curve.clone(),
            counts,
            ends,
            pinned,
            kernel: Kernel::new(curve, config.tau),
        })
    }

    /// Pairs closer along the curve than the arc where the curvature-limited chord
    /// reaches `tau` are left to curvature control.
    fn rule(&self, curve: &DiscreteCurve) -> Clearance {
        let (tau, bound) = (self.config.tau, self.config.curvature_bound);
        let x = bound * tau / 2.0;
        let reach_arc = if x >= 1.0 {
            std::f64::consts::PI / bound
        } else {
            2.0 / bound * x.asin()
        };
        Clearance::Curved {
            tau,
            bound,
            min_sep: (reach_arc - 3.0 * curve.max_segment_length()).max(1.5 * curve.max_segment_length()),
        }
    }

    fn clamp(&self, curve: &mut DiscreteCurve) {
        if curve.is_closed() {
            return;
        }
        let ranges = curve.components();
        let pts = curve.points_mut();
        if let Some(w) = &self.config.wall_planes {
            for p in pts.iter_mut() {
                w.project(p);
            }
        }
        for (r, &(s, ts, e, te)) in ranges.iter().zip(&self.ends) {
            let (a, b) = (r.start, r.end - 1);
            pts[a] = s;
            pts[b] = e;
            let la = (pts[a + 1] - pts[a]).norm();
            pts[a + 1] = s + ts * la;
            let lb = (pts[b] - pts[b - 1]).norm();
            pts[b - 1] = e - te * lb;
        }
    }

    fn equalize(&self, curve: &DiscreteCurve) -> Result<DiscreteCurve> {
        let mut comps = Vec::with_capacity(self.counts.len());
        for (r, &m) in curve.components().iter().zip(&self.counts) {
            let one = DiscreteCurve::new(curve.points()[r.clone()].to_vec(), curve.is_closed(), curve.tube_radius())?;
            comps.push(curve::resample(&one, m)?.into_points());
        }
        DiscreteCurve::from_components(comps, curve.is_closed(), curve.tube_radius())
    }

    fn max_curvature(curve: &DiscreteCurve, pts: &[Vec3]) -> f64 {
        (0..pts.len())
            .filter_map(|i| match (curve.prev(i), curve.next(i)) {
                (Some(a), Some(b)) => Some(curve::vertex_curvature(&pts[a], &pts[i], &pts[b])),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    fn feasible(&self, c: &DiscreteCurve, pts: &[Vec3], pairs: &[Pair]) -> bool {
        max_deficit(pts, pairs) <= PENETRATION_TOLERANCE * self.config.tau
            && Self::max_curvature(c, pts) <= self.config.curvature_bound * (1.0 + CURVATURE_SLACK / 2.0)
    }

    /// Push and relax until feasible; returns the repaired curve and whether it is feasible.
    fn repair(&self, curve: DiscreteCurve, rounds: usize, coarsest: usize, margin: f64) -> (DiscreteCurve, bool) {
        let tau = self.config.tau;
        let bound = self.config.curvature_bound;
        let arc = curve.arc_table();
        let rule = self.rule(&curve);
        let mut c = curve;
        let mut pts = c.points().to_vec();
        // Coarse edges longer than the tube radius fold strands that wind about each other.
        let coarsest = coarsest.min((0.5 * tau / c.mean_segment_length()).floor().max(1.0) as usize);
        let mut pairs = candidate_pairs(&pts, &arc, &rule, 1.1);
        // Feasible input is kept as is, with extra headroom so accepted shrinks cannot creep
        // all the way to the tolerance.
        if self.feasible(&c, &pts, &pairs) && max_deficit(&pts, &pairs) <= 0.5 * PENETRATION_TOLERANCE * tau {
            return (c, true);
        }
        for round in 0..rounds {
            if round > 0 && round % 8 == 0 {
                pairs = candidate_pairs(&pts, &arc, &rule, 1.1);
            }
            for _ in 0..self.config.overlap_push_iters {
                let worst = self.kernel.sweep(&mut pts, &pairs, &self.pinned, 1e-5 * tau);
                if worst <= 1e-4 * tau {
                    break;
                }
            }
            relax_curvature(&c, &mut pts, &self.pinned, bound, -margin, 30, coarsest);
            c.points_mut().copy_from_slice(&pts);
            self.clamp(&mut c);
            pts.copy_from_slice(c.points());
            if self.feasible(&c, &pts, &pairs) {
                // Large moves may have brought new pairs into range.
                let fresh = candidate_pairs(&pts, &arc, &rule, 1.0);
                if max_deficit(&pts, &fresh) <= PENETRATION_TOLERANCE * tau {
                    return (c, true);
                }
                pairs = candidate_pairs(&pts, &arc, &rule, 1.1);
            }
        }
        (c, false)
    }

    fn step(&self, state: &DiscreteCurve, rate: f64, rounds: usize) -> Result<(DiscreteCurve, bool)> {
        // Clamped strands shrink about the mean of their ends, which keeps straight legs
        // through the ends straight.
        let mut c = if self.ends.is_empty() {
            shrink_step(state, rate)
        } else {
            let sum: Vec3 = self.ends.iter().map(|e| e.0 + e.2).sum();
            shrink_about(state, rate, sum / (2 * self.ends.len()) as f64)
        };
        self.clamp(&mut c);
        let mut c = self.equalize(&c)?;
        self.clamp(&mut c);
        Ok(self.repair(c, rounds, 8, RELAX_MARGIN))
    }

    fn run(self) -> Result<TightenResult> {
        let cfg = self.config;
        let mut start = self.template.clone();
        self.clamp(&mut start);
        let start = self.equalize(&start)?;
        let (mut state, ok) = self.repair(start, 400, 16, 0.0);
        if !ok {
            return Err(Error::InfeasibleStart(format!(
                "constraints for tau {} could not be restored",
                cfg.tau
            )));
        }
        let default_amount = 1.0 - cfg.shrink_rate;
        let mut amount = default_amount;
        let mut streak = 0usize;
        let mut history = vec![curve::length(&state)];
        let mut frames = Vec::new();
        if cfg.trace_every.is_some() {
            frames.push((0, state.clone()));
        }
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=cfg.max_iters {
            iterations = it;
            // Once tiny steps keep failing, pushes and curvature relaxation are fighting over
            // a nearly tight shape; give the repair room to settle.
            let rounds = if amount < default_amount * STUCK_FRACTION { STUCK_ROUNDS } else { 4 };
            let (cand, ok) = self.step(&state, 1.0 - amount, rounds)?;
            let before = history[history.len() - 1];
            let kept = ok && before - curve::length(&cand) >= amount * before * MIN_PROGRESS;
            if kept {
                state = cand;
                streak += 1;
                if streak >= 50 && amount < default_amount {
                    amount = (amount * 2.0).min(default_amount);
                    streak = 0;
                }
            } else {
                amount /= 2.0;
                streak = 0;
                if amount < default_amount * CONVERGED_FRACTION {
                    converged = true;
                    break;
                }
            }
            history.push(curve::length(&state));
            if let Some(every) = cfg.trace_every {
                if it % every == 0 {
                    frames.push((it, state.clone()));
                }
            }
            let n = history.len();
            if n > cfg.stall_window {
                let now = history[n - 1];
                let then = history[n - 1 - cfg.stall_window];
                if ((then - now) / now).abs() < cfg.stall_tolerance {
                    converged = true;
                    break;
                }
            }
        }
        let report = thickness::report(&state);
        Ok(TightenResult {
            final_curve: state,
            report,
            iterations,
            converged,
            length_history: history,
            frames,
        })
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

    fn strands(gap: f64) -> DiscreteCurve {
        let a: Vec<Vec3> = (0..41).map(|i| v3(0.0, 0.0, i as f64 * 0.1)).collect();
        let b: Vec<Vec3> = (0..41).map(|i| v3(gap, 0.0, i as f64 * 0.1)).collect();
        DiscreteCurve::from_components(vec![a, b], false, 0.5).unwrap()
    }

    #[test]
    fn overlap_detection() {
        assert!(detect_overlaps(&circle(1.0, 256, 1.0), 2.0).is_empty());
        let o = detect_overlaps(&circle(1.0, 256, 1.0), 2.1);
        assert!(!o.is_empty());
        assert!((o[0].depth - 0.1).abs() < 1e-3);
        let o = detect_overlaps(&strands(0.9), 1.0);
        assert!((o[0].depth - 0.1).abs() < 0.1 + 1e-9);
    }

    #[test]
    fn overlap_removal() {
        let c = circle(1.0, 128, 0.5);
        let out = remove_overlaps(&c, 1.0, 50);
        assert!(out.resolved);
        assert_eq!(out.curve, c);

        let out = remove_overlaps(&strands(0.9), 1.0, 50);
        assert!(out.resolved);
        let p = out.curve.points();
        let min = (0..41)
            .flat_map(|i| (41..82).map(move |j| (i, j)))
            .map(|(i, j)| (p[i] - p[j]).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.999, "{min}");
    }

    #[test]
    fn fused_strands_are_reported() {
        let out = remove_overlaps(&strands(0.1), 1.0, 3);
        assert!(out.resolved || out.max_penetration > PENETRATION_TOLERANCE);
        if !out.resolved {
            assert!(matches!(out.into_result(), Err(Error::OverlapStuck { .. })));
        }
    }

    #[test]
    fn curvature_control() {
        let c = circle(1.0, 512, 0.5);
        let out = control_curvature(&c, 1.0);
        for (p, q) in c.points().iter().zip(out.points()) {
            assert!((p - q).norm() < 1e-9);
        }
        let gentle = circle(1.25, 256, 0.5);
        assert_eq!(control_curvature(&gentle, 1.0), gentle);
        let bump: Vec<Vec3> = (0..301)
            .map(|i| {
                let x = -3.0 + 0.02 * i as f64;
                v3(x, 0.5 * (-x * x / 0.5).exp(), 0.0)
            })
            .collect();
        let hairpin = DiscreteCurve::new(bump, false, 0.5).unwrap();
        assert!(curve::max_curvature(&hairpin) > 1.9);
        let fixed = control_curvature(&hairpin, 1.0);
        let k = curve::max_curvature(&fixed);
        assert!(k <= 1.0 + CURVATURE_SLACK, "{k}");
    }

    #[test]
    fn shrink_scales_length() {
        let c = circle(1.0, 256, 0.5);
        assert_eq!(shrink_step(&c, 1.0), c);
        assert!(remove_overlaps(&c, 1.0, 5).resolved);
        let s = shrink_step(&c, 0.999);
        assert!((curve::length(&s) - 0.999 * curve::length(&c)).abs() < 1e-12);
    }

    #[test]
    fn straight_strand_is_already_tight() {
        let c = DiscreteCurve::new((0..41).map(|i| v3(0.0, 0.0, i as f64 * 0.3)).collect(), false, 1.0).unwrap();
        let mut cfg = TightenConfig::new(2.0);
        cfg.wall_planes = Some(WallPlanes::horizontal(12.0));
        cfg.stall_window = 50;
        let out = tighten_open(&c, &cfg).unwrap();
        assert!(out.converged);
        for (p, q) in c.points().iter().zip(out.final_curve.points()) {
            assert!((p - q).norm() < 1e-9);
        }
    }
}
