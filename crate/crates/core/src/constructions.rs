//! Explicit configurations: circles, the open overhand seed, doubled cores, the capped
//! double overhand `K0`, stacked `Kn`, plus a segment classifier and an unknot heuristic.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::curve::{self, DiscreteCurve};
use crate::dubins::{self, CappedCurve};
use crate::error::{Error, Result};
use crate::geom::{fibonacci_sphere, rotate_about, v3, Vec3};
use crate::thickness::{self, CURVATURE_SLACK, THICKNESS_SLACK};
use crate::tighten::{self, TightenConfig, TightenResult, WallPlanes};

/// Regular `n`-gon on the circle of the given radius in the xy-plane.
pub fn round_circle(radius: f64, n: usize, tube_radius: f64) -> Result<DiscreteCurve> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    let pts = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            v3(radius * t.cos(), radius * t.sin(), 0.0)
        })
        .collect();
    DiscreteCurve::new(pts, true, tube_radius)
}

/// Stadium in the xy-plane: two unit semicircles joined by straights of length
/// `straight`, sampled at spacing close to `h`. The first vertex starts the lower straight.
pub fn stadium(straight: f64, h: f64, tube_radius: f64) -> Result<DiscreteCurve> {
    let arc = ((PI / h).round() as usize).max(4);
    let line = ((straight / h).round() as usize).max(1);
    let mut pts = Vec::new();
    let half = straight / 2.0;
    for k in 0..line {
        pts.push(v3(-half + straight * k as f64 / line as f64, -1.0, 0.0));
    }
    for k in 0..arc {
        let t = -PI / 2.0 + PI * k as f64 / arc as f64;
        pts.push(v3(half + t.cos(), t.sin(), 0.0));
    }
    for k in 0..line {
        pts.push(v3(half - straight * k as f64 / line as f64, 1.0, 0.0));
    }
    for k in 0..arc {
        let t = PI / 2.0 + PI * k as f64 / arc as f64;
        pts.push(v3(-half + t.cos(), t.sin(), 0.0));
    }
    DiscreteCurve::new(pts, true, tube_radius)
}

/// Point on the (2,3) torus knot with radii `big` and `small`.
fn torus_knot(big: f64, small: f64, t: f64) -> Vec3 {
    let r = big + small * (3.0 * t).cos();
    v3(r * (2.0 * t).cos(), r * (2.0 * t).sin(), small * (3.0 * t).sin())
}

fn torus_knot_tangent(big: f64, small: f64, t: f64) -> Vec3 {
    let r = big + small * (3.0 * t).cos();
    let dr = -3.0 * small * (3.0 * t).sin();
    v3(
        dr * (2.0 * t).cos() - 2.0 * r * (2.0 * t).sin(),
        dr * (2.0 * t).sin() + 2.0 * r * (2.0 * t).cos(),
        3.0 * small * (3.0 * t).cos(),
    )
}

/// Closed trefoil on a torus with radii `big` and `small`.
pub fn trefoil(big: f64, small: f64, n: usize, tube_radius: f64) -> Result<DiscreteCurve> {
    let pts = (0..n).map(|i| torus_knot(big, small, 2.0 * PI * i as f64 / n as f64)).collect();
    DiscreteCurve::new(pts, true, tube_radius)
}

fn hermite(p0: Vec3, t0: Vec3, p1: Vec3, t1: Vec3, u: f64) -> Vec3 {
    let u2 = u * u;
    let u3 = u2 * u;
    p0 * (2.0 * u3 - 3.0 * u2 + 1.0)
        + t0 * (u3 - 2.0 * u2 + u)
        + p1 * (-2.0 * u3 + 3.0 * u2)
        + t1 * (u3 - u2)
}

/// Shape parameters of the open overhand seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverhandShape {
    /// Torus radii of the trefoil body.
    pub big: f64,
    pub small: f64,
    /// Parameter gap cut out of the trefoil where the legs attach.
    pub opening: f64,
    /// Tangent magnitude of the cubic legs.
    pub leg_tangent: f64,
}

impl Default for OverhandShape {
    fn default() -> Self {
        Self {
            big: 3.75,
            small: 1.5,
            opening: 0.4,
            leg_tangent: 8.0,
        }
    }
}

/// Dense polyline of the open overhand: a trefoil opened at its outermost point whose
/// two ends are led by cubic legs to `(0,0,0)` and `(0,0,gap)` with vertical tangents.
fn overhand_polyline(gap: f64, shape: &OverhandShape, samples: usize) -> Vec<Vec3> {
    let (big, small) = (shape.big, shape.small);
    let shift = v3(-(big + small), 0.0, gap / 2.0);
    let body_of = |t: f64| torus_knot(big, small, t) + shift;
    // Walk the trefoil backwards from 2pi - opening to opening, so the lower end comes first.
    let (t_lo, t_hi) = (2.0 * PI - shape.opening, shape.opening);
    let lower = body_of(t_lo);
    let upper = body_of(t_hi);
    let lower_dir = -torus_knot_tangent(big, small, t_lo).normalize();
    let upper_dir = -torus_knot_tangent(big, small, t_hi).normalize();
    let up = v3(0.0, 0.0, 1.0);
    let m = shape.leg_tangent;
    let mut pts = Vec::new();
    for k in 0..samples {
        let u = k as f64 / samples as f64;
        pts.push(hermite(v3(0.0, 0.0, 0.0), up * m, lower, lower_dir * m, u));
    }
    let body = 4 * samples;
    for k in 0..body {
        let t = t_lo + (t_hi - t_lo) * k as f64 / body as f64;
        pts.push(body_of(t));
    }
    for k in 0..=samples {
        let u = k as f64 / samples as f64;
        pts.push(hermite(upper, upper_dir * m, v3(0.0, 0.0, gap), up * m, u));
    }
    pts
}

/// Open overhand between the walls `z = 0` and `z = gap` with `n` vertices, end tangents
/// along `+z`, curvature repaired to the unit bound.
pub fn open_overhand(gap: f64, n: usize) -> Result<DiscreteCurve> {
    open_overhand_with(gap, n, &OverhandShape::default())
}

pub fn open_overhand_with(gap: f64, n: usize, shape: &OverhandShape) -> Result<DiscreteCurve> {
    if n < 16 {
        return Err(Error::InvalidInput("an overhand seed needs at least 16 points".into()));
    }
    let dense = DiscreteCurve::new(overhand_polyline(gap, shape, 400), false, 1.0)?;
    let seed = curve::resample(&dense, n)?;
    let repaired = repair_open(&seed, 1.0, gap);
    let kmax = curve::max_curvature(&repaired);
    if kmax > 1.0 + CURVATURE_SLACK {
        return Err(Error::InfeasibleSeed(format!(
            "curvature {kmax:.4} after repair (wall gap {gap})"
        )));
    }
    let walls = WallPlanes::horizontal(gap);
    if let Some(p) = repaired.points().iter().find(|p| !walls.contains(p, 1e-9)) {
        return Err(Error::InfeasibleSeed(format!(
            "seed leaves the slab at z = {:.4}",
            p.z
        )));
    }
    Ok(repaired)
}

/// Curvature repair with ends restored, end tangents set normal to the walls and points
/// clamped to the slab.
fn repair_open(c: &DiscreteCurve, bound: f64, gap: f64) -> DiscreteCurve {
    let walls = WallPlanes::horizontal(gap);
    let n = c.len();
    let ends = [c.points()[0], c.points()[0] + walls.normal, c.points()[n - 1] - walls.normal, c.points()[n - 1]];
    let mut cur = c.clone();
    for _ in 0..20 {
        cur = tighten::control_curvature(&cur, bound);
        let pts = cur.points_mut();
        for p in pts.iter_mut() {
            walls.project(p);
        }
        pts[0] = ends[0];
        pts[n - 1] = ends[3];
        let l0 = (pts[1] - pts[0]).norm();
        pts[1] = pts[0] + (ends[1] - ends[0]).normalize() * l0;
        let l1 = (pts[n - 1] - pts[n - 2]).norm();
        pts[n - 2] = pts[n - 1] - (ends[3] - ends[2]).normalize() * l1;
        if curve::max_curvature(&cur) <= bound * (1.0 + CURVATURE_SLACK / 2.0) {
            break;
        }
    }
    cur
}

/// A curve with a unit normal field orthogonal to its tangents.
#[derive(Clone, Debug)]
pub struct FramedCurve {
    pub base: DiscreteCurve,
    pub normals: Vec<Vec3>,
}

fn reflect(v: &Vec3, axis: &Vec3, c: f64) -> Vec3 {
    v - axis * (2.0 / c * axis.dot(v))
}

/// Transport `r` from the frame at `(x0, t0)` to `(x1, t1)` by two reflections.
fn double_reflection(x0: &Vec3, t0: &Vec3, r: &Vec3, x1: &Vec3, t1: &Vec3) -> Vec3 {
    let v1 = x1 - x0;
    let c1 = v1.norm_squared();
    if c1 < 1e-30 {
        return *r;
    }
    let r_l = reflect(r, &v1, c1);
    let t_l = reflect(t0, &v1, c1);
    let v2 = t1 - t_l;
    let c2 = v2.norm_squared();
    if c2 < 1e-30 {
        return r_l;
    }
    reflect(&r_l, &v2, c2)
}

fn orthonormal(r: &Vec3, t: &Vec3) -> Vec3 {
    let v = r - t * t.dot(r);
    let n = v.norm();
    if n < 1e-12 {
        crate::geom::any_perpendicular(t)
    } else {
        v / n
    }
}

/// Default start normal: the x axis projected off the tangent (y if nearly parallel).
fn default_normal(t: &Vec3) -> Vec3 {
    let x = v3(1.0, 0.0, 0.0);
    if t.dot(&x).abs() < 0.9 {
        orthonormal(&x, t)
    } else {
        orthonormal(&v3(0.0, 1.0, 0.0), t)
    }
}

/// One transport step of the rotation-minimizing frame.
pub fn transport_normal(x0: &Vec3, t0: &Vec3, r: &Vec3, x1: &Vec3, t1: &Vec3) -> Vec3 {
    orthonormal(&double_reflection(x0, t0, r, x1, t1), t1)
}

/// Rotation-minimizing frame of every component. On closed components the holonomy
/// angle is spread evenly by arc length so the frame closes up.
pub fn rotation_minimizing_frame(c: &DiscreteCurve, start_normal: Option<Vec3>) -> FramedCurve {
    let t = c.tangents();
    let p = c.points();
    let arc = c.arc_table();
    let mut normals = vec![Vec3::zeros(); c.len()];
    for r in c.components() {
        let a = r.start;
        normals[a] = match start_normal {
            Some(n) => orthonormal(&n, &t[a]),
            None => default_normal(&t[a]),
        };
        for i in a + 1..r.end {
            normals[i] = transport_normal(&p[i - 1], &t[i - 1], &normals[i - 1], &p[i], &t[i]);
        }
        if c.is_closed() {
            let last = r.end - 1;
            let back = transport_normal(&p[last], &t[last], &normals[last], &p[a], &t[a]);
            let b = t[a].cross(&normals[a]);
            let mismatch = back.dot(&b).atan2(back.dot(&normals[a]));
            let total = arc.lengths[arc.comp[a]];
            for i in a..r.end {
                let frac = (arc.s[i] - arc.s[a]) / total;
                normals[i] = rotate_about(&normals[i], &t[i], -mismatch * frac);
            }
        }
    }
    FramedCurve {
        base: c.clone(),
        normals,
    }
}

/// Two offset copies `base ± offset * normal` along the rotation-minimizing frame,
/// returned as one curve with two components per input component.
pub fn doubled_core(core: &DiscreteCurve, offset: f64) -> Result<DiscreteCurve> {
    doubled_core_with(core, offset, None)
}

pub fn doubled_core_with(core: &DiscreteCurve, offset: f64, start_normal: Option<Vec3>) -> Result<DiscreteCurve> {
    if !(offset > 0.0) {
        return Err(Error::InvalidInput("offset must be positive".into()));
    }
    let th = thickness::thickness(core);
    if th < 2.0 * offset + 1.0 - THICKNESS_SLACK {
        return Err(Error::PreconditionViolated(format!(
            "core thickness {th:.4} leaves no room for two unit tubes at offset {offset}"
        )));
    }
    let frame = rotation_minimizing_frame(core, start_normal);
    let p = core.points();
    let mut comps = Vec::new();
    for r in core.components() {
        for sign in [1.0, -1.0] {
            comps.push(r.clone().map(|i| p[i] + frame.normals[i] * (sign * offset)).collect::<Vec<_>>());
        }
    }
    let out = DiscreteCurve::from_components(comps, core.is_closed(), 0.5)?;
    let k = curve::discrete_curvature(&out);
    if let Some((index, &curvature)) = k
        .iter()
        .enumerate()
        .find(|(_, &v)| v > 1.0 + CURVATURE_SLACK)
    {
        return Err(Error::OffsetCurvatureViolation { index, curvature });
    }
    Ok(out)
}

/// Settings of the `K0` pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct K0Config {
    pub wall_gap: f64,
    /// Target edge length of every stage.
    pub spacing: f64,
    /// Curvature bound used while tightening the thick core, so both offsets stay 1-constrained.
    pub core_curvature_bound: f64,
    pub offset: f64,
    pub core_iters: usize,
    pub double_iters: usize,
    pub shape: OverhandShape,
    pub seed: u64,
    /// Frames of the unit-thickness stage to keep, capped, in [`K0Build::trace`]; 0 keeps none.
    #[serde(default)]
    pub trace_frames: usize,
}

impl Default for K0Config {
    fn default() -> Self {
        Self {
            wall_gap: 12.0,
            spacing: 0.1,
            core_curvature_bound: 0.6,
            offset: 0.5,
            core_iters: 3000,
            double_iters: 1500,
            shape: OverhandShape::default(),
            seed: 0,
            trace_frames: 0,
        }
    }
}

/// Summary of one tightening stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_length: f64,
    pub final_length: f64,
}

impl StageSummary {
    fn of(r: &TightenResult) -> Self {
        Self {
            iterations: r.iterations,
            converged: r.converged,
            initial_length: r.length_history.first().copied().unwrap_or(0.0),
            final_length: r.length_history.last().copied().unwrap_or(0.0),
        }
    }
}

/// Every intermediate of the `K0` pipeline.
#[derive(Clone, Debug)]
pub struct K0Build {
    pub seed: DiscreteCurve,
    pub core: DiscreteCurve,
    pub core_stage: StageSummary,
    pub double: DiscreteCurve,
    pub double_stage: StageSummary,
    pub capped: CappedCurve,
    /// Evenly spaced frames of the unit-thickness stage, each closed with its own caps;
    /// the last one is the capped curve itself.
    pub trace: Vec<DiscreteCurve>,
}

impl K0Build {
    pub fn curve(&self) -> &DiscreteCurve {
        &self.capped.curve
    }

    /// Candidate long arcs: each cap together with the vertical legs it joins.
    pub fn long_arcs(&self) -> Vec<Range<usize>> {
        long_arcs_around_caps(&self.capped)
    }
}

/// Cap ranges widened to include the straight vertical legs on either side (wrapping).
pub fn long_arcs_around_caps(capped: &CappedCurve) -> Vec<Range<usize>> {
    let c = &capped.curve;
    let n = c.len();
    let t = c.tangents();
    let at = |k: isize| t[k.rem_euclid(n as isize) as usize];
    capped
        .cap_ranges
        .iter()
        .map(|r| {
            let (mut a, mut b) = (r.start as isize, r.end as isize - 1);
            let (dir_in, dir_out) = (at(a), at(b));
            while b - a < n as isize - 2 && at(a - 1).dot(&dir_in) > 1.0 - 1e-9 {
                a -= 1;
            }
            while b - a < n as isize - 2 && at(b + 1).dot(&dir_out) > 1.0 - 1e-9 {
                b += 1;
            }
            let start = a.rem_euclid(n as isize) as usize;
            start..start + (b - a + 1) as usize
        })
        .collect()
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// The open double core of `K0`: tightened thick overhand, offset into two strands and
/// retightened at unit thickness.
#[allow(clippy::type_complexity)]
fn build_double_core(
    cfg: &K0Config,
) -> Result<(DiscreteCurve, DiscreteCurve, StageSummary, DiscreteCurve, StageSummary, Vec<DiscreteCurve>)> {
    let gap = cfg.wall_gap;
    let dense = DiscreteCurve::new(overhand_polyline(gap, &cfg.shape, 400), false, 1.0)?;
    let n = ((curve::length(&dense) / cfg.spacing).round() as usize).max(16);
    let seed = stage("seed", open_overhand_with(gap, n, &cfg.shape))?;
    let walls = WallPlanes::horizontal(gap);

    let mut core_cfg = TightenConfig::new(2.0);
    core_cfg.curvature_bound = cfg.core_curvature_bound;
    core_cfg.max_iters = cfg.core_iters;
    core_cfg.wall_planes = Some(walls);
    core_cfg.seed = cfg.seed;
    let core_seed = stage("core", repair_open(&seed, cfg.core_curvature_bound, gap).with_tube_radius(1.0))?;
    let core = stage("core", tighten::tighten_open(&core_seed, &core_cfg))?;
    let core_stage = StageSummary::of(&core);
    let core_curve = stage("core", curve::resample_spacing(&core.final_curve, cfg.spacing))?;

    let double = stage("offset", doubled_core(&core_curve, cfg.offset))?;
    let mut double_cfg = TightenConfig::new(1.0);
    double_cfg.max_iters = cfg.double_iters;
    double_cfg.wall_planes = Some(walls);
    double_cfg.seed = cfg.seed;
    if cfg.trace_frames > 0 {
        double_cfg.trace_every = Some(1);
    }
    let mut tight = stage("double", tighten::tighten_open(&double, &double_cfg))?;
    let double_stage = StageSummary::of(&tight);
    let frames = std::mem::take(&mut tight.frames);
    let kept = match (cfg.trace_frames, frames.len()) {
        (0, _) | (_, 0) => Vec::new(),
        (1, m) => vec![frames[m - 1].1.clone()],
        (t, m) => (0..t)
            .map(|k| frames[(k * (m - 1) + (t - 1) / 2) / (t - 1)].1.clone())
            .collect(),
    };
    Ok((seed, core.final_curve, core_stage, tight.final_curve, double_stage, kept))
}

/// Run the whole `K0` pipeline with default settings.
pub fn build_k0() -> Result<DiscreteCurve> {
    Ok(build_k0_with(&K0Config::default())?.capped.curve)
}

pub fn build_k0_with(cfg: &K0Config) -> Result<K0Build> {
    let (seed, core, core_stage, double, double_stage, frames) = build_double_core(cfg)?;
    let close = |c: &DiscreteCurve| -> Result<CappedCurve> {
        let pairs = dubins::default_end_pairs(c)?;
        dubins::close_open_curve_detailed(c, &pairs)
    };
    let capped = stage("caps", close(&double))?;
    let trace = stage(
        "caps",
        frames
            .iter()
            .map(|f| close(f)?.curve.with_tube_radius(0.5))
            .collect::<Result<Vec<_>>>(),
    )?;
    let capped = CappedCurve {
        curve: capped.curve.clone().with_tube_radius(0.5)?,
        ..capped
    };
    Ok(K0Build {
        seed,
        core,
        core_stage,
        double,
        double_stage,
        capped,
        trace,
    })
}

/// Stacked family member with its pieces.
#[derive(Clone, Debug)]
pub struct KnBuild {
    pub n: usize,
    pub module: K0Build,
    pub joiner: f64,
    pub stacked: DiscreteCurve,
    pub capped: CappedCurve,
}

impl KnBuild {
    pub fn curve(&self) -> &DiscreteCurve {
        &self.capped.curve
    }

    /// Length predicted from the parts: `n` double cores, `2(n-1)` joiners and the caps.
    pub fn predicted_length(&self) -> f64 {
        let module = curve::length(&self.module.double);
        let caps: f64 = self.capped.caps.iter().map(|c| c.total_length).sum();
        self.n as f64 * module + 2.0 * (self.n as f64 - 1.0) * self.joiner + caps
    }
}

/// Length of the straight tubes joining stacked modules.
pub const DEFAULT_JOINER: f64 = 1.0;

/// Stack `n` copies of the double core along `z`, joined by straight vertical tubes.
pub fn build_kn(n: usize) -> Result<DiscreteCurve> {
    Ok(build_kn_with(n, &K0Config::default(), DEFAULT_JOINER)?.capped.curve)
}

pub fn build_kn_with(n: usize, cfg: &K0Config, joiner: f64) -> Result<KnBuild> {
    let module = build_k0_with(cfg)?;
    stack_modules(module, n, joiner)
}

/// Stack copies of an already built module.
pub fn stack_modules(module: K0Build, n: usize, joiner: f64) -> Result<KnBuild> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if !(joiner >= 0.0) {
        return Err(Error::InvalidInput("joiner length must be nonnegative".into()));
    }
    let core = &module.double;
    let gap = module_height(core)?;
    let ranges = core.components();
    if ranges.len() != 2 {
        return Err(Error::PreconditionViolated("module must have two strands".into()));
    }
    let p = core.points();
    let strand = |k: usize| &p[ranges[k].clone()];
    // Horizontal offset of strand 0 from the axis at the bottom and top walls.
    let axis_bottom = (strand(0)[0] + strand(1)[0]) / 2.0;
    let axis_top = (strand(0)[strand(0).len() - 1] + strand(1)[strand(1).len() - 1]) / 2.0;
    let d_bottom = strand(0)[0] - axis_bottom;
    let d_top = strand(0)[strand(0).len() - 1] - axis_top;
    let step_angle = d_bottom.y.atan2(d_bottom.x) - d_top.y.atan2(d_top.x);
    let z = v3(0.0, 0.0, 1.0);
    let h = core.mean_segment_length();
    let joiner_steps = ((joiner / h).round() as usize).max(1);
    let mut comps: Vec<Vec<Vec3>> = vec![Vec::new(), Vec::new()];
    let mut angle = 0.0;
    for copy in 0..n {
        let lift = z * (copy as f64 * (gap + joiner));
        for (k, comp) in comps.iter_mut().enumerate() {
            let s = strand(k);
            let placed: Vec<Vec3> = s
                .iter()
                .map(|q| axis_bottom + rotate_about(&(q - axis_bottom), &z, -angle) + lift)
                .collect();
            if copy > 0 && joiner > 0.0 {
                let from = *comp.last().expect("previous copy present");
                for j in 1..joiner_steps {
                    comp.push(from + (placed[0] - from) * (j as f64 / joiner_steps as f64));
                }
            }
            let skip = usize::from(copy > 0 && joiner == 0.0);
            comp.extend_from_slice(&placed[skip..]);
        }
        angle += step_angle;
    }
    // Module vertices are kept as they are: resampling a curvature-saturated strand
    // overshoots the bound.
    let stacked = stage("stack", DiscreteCurve::from_components(comps, false, 0.5))?;
    let pairs = stage("caps", dubins::default_end_pairs(&stacked))?;
    let capped = stage("caps", dubins::close_open_curve_detailed(&stacked, &pairs))?;
    let capped = CappedCurve {
        curve: capped.curve.clone().with_tube_radius(0.5)?,
        ..capped
    };
    Ok(KnBuild {
        n,
        module,
        joiner,
        stacked,
        capped,
    })
}

fn module_height(core: &DiscreteCurve) -> Result<f64> {
    let r = core.components();
    let p = core.points();
    let lo = p[r[0].start];
    let hi = p[r[0].end - 1];
    let gap = hi.z - lo.z;
    if !(gap > 0.0) {
        return Err(Error::PreconditionViolated("module strands must rise along z".into()));
    }
    Ok(gap)
}

/// Kind of an elementary piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceKind {
    UnitArc,
    Straight,
    Helix,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabel {
    /// Vertex interval; on closed curves `end` may exceed the vertex count (wraps).
    pub range: Range<usize>,
    pub kind: PieceKind,
    pub fit_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifyThresholds {
    /// Curvature below which a vertex counts as straight.
    pub straight: f64,
    /// Allowed deviation from unit curvature on arcs.
    pub unit: f64,
    /// Torsion magnitude below which a curved window is planar.
    pub planar_torsion: f64,
    /// Coefficient of variation of curvature and torsion allowed on helices.
    pub helix_variation: f64,
    /// Runs shorter than this many vertices are merged into their predecessor.
    pub min_run: usize,
    /// Half width of the window used for helix statistics.
    pub window: usize,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self {
            straight: 0.05,
            unit: 0.05,
            planar_torsion: 0.05,
            helix_variation: 0.05,
            min_run: 3,
            window: 4,
        }
    }
}

/// Discrete torsion at each edge-adjacent vertex: turning of the binormal per unit length.
fn vertex_torsion(c: &DiscreteCurve) -> Vec<f64> {
    let p = c.points();
    let n = p.len();
    let binormal = |i: usize| -> Option<Vec3> {
        let a = c.prev(i)?;
        let b = c.next(i)?;
        let v = (p[i] - p[a]).cross(&(p[b] - p[i]));
        let m = v.norm();
        (m > 1e-12).then(|| v / m)
    };
    (0..n)
        .map(|i| {
            let (Some(j), Some(bi)) = (c.next(i), binormal(i)) else {
                return 0.0;
            };
            let Some(bj) = binormal(j) else {
                return 0.0;
            };
            let e = p[j] - p[i];
            let len = e.norm();
            if len < 1e-12 {
                return 0.0;
            }
            bi.cross(&bj).dot(&(e / len)).atan2(bi.dot(&bj)) / len
        })
        .collect()
}

fn mean_and_cv(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, if m.abs() > 1e-12 { var.sqrt() / m.abs() } else { f64::INFINITY })
}

/// Greedy decomposition into unit arcs, straights, helices and leftovers.
pub fn classify_segments(c: &DiscreteCurve, th: &ClassifyThresholds) -> Vec<SegmentLabel> {
    let n = c.len();
    let kappa = curve::discrete_curvature(c);
    let torsion = vertex_torsion(c);
    let closed = c.is_closed();
    let window = |i: usize| -> Vec<usize> {
        let w = th.window as isize;
        (-w..=w)
            .filter_map(|d| {
                let j = i as isize + d;
                if closed {
                    Some(j.rem_euclid(n as isize) as usize)
                } else if j >= 0 && (j as usize) < n {
                    Some(j as usize)
                } else {
                    None
                }
            })
            .collect()
    };
    // Torsion needs binormals at both ends of an edge.
    let torsion_valid = |j: usize| closed || (j >= 1 && j + 2 < n);
    let kind_at = |i: usize| -> PieceKind {
        if kappa[i] < th.straight {
            return PieceKind::Straight;
        }
        let idx: Vec<usize> = window(i).into_iter().filter(|&j| torsion_valid(j)).collect();
        if idx.is_empty() {
            return PieceKind::Other;
        }
        let tw: Vec<f64> = idx.iter().map(|&j| torsion[j]).collect();
        let planar = tw.iter().all(|t| t.abs() < th.planar_torsion);
        if (kappa[i] - 1.0).abs() < th.unit && planar {
            return PieceKind::UnitArc;
        }
        let kw: Vec<f64> = idx.iter().map(|&j| kappa[j]).collect();
        let (_, kcv) = mean_and_cv(&kw);
        let (tm, tcv) = mean_and_cv(&tw);
        if !planar && tm.abs() >= th.planar_torsion && kcv < th.helix_variation && tcv < th.helix_variation {
            return PieceKind::Helix;
        }
        PieceKind::Other
    };
    // Interior vertices of open curves decide; the two ends copy their neighbours.
    let mut kinds: Vec<PieceKind> = (0..n).map(kind_at).collect();
    if !closed && n >= 3 {
        kinds[0] = kinds[1];
        kinds[n - 1] = kinds[n - 2];
    }
    let mut runs: Vec<(usize, usize, PieceKind)> = Vec::new();
    for (i, &k) in kinds.iter().enumerate() {
        match runs.last_mut() {
            Some(last) if last.2 == k => last.1 = i + 1,
            _ => runs.push((i, i + 1, k)),
        }
    }
    if closed && runs.len() > 1 && runs[0].2 == runs[runs.len() - 1].2 {
        let first = runs.remove(0);
        let last = runs.last_mut().expect("at least one run");
        last.1 = first.1 + n;
    }
    // Absorb short runs into a neighbour, then merge equal neighbours again.
    let mut merged: Vec<(usize, usize, PieceKind)> = Vec::new();
    for r in runs {
        if r.1 - r.0 < th.min_run {
            if let Some(last) = merged.last_mut() {
                last.1 = r.1;
                continue;
            }
        }
        match merged.last_mut() {
            Some(last) if last.2 == r.2 => last.1 = r.1,
            Some(last) if last.1 - last.0 < th.min_run => {
                *last = (last.0, r.1, r.2);
            }
            _ => merged.push(r),
        }
    }
    if closed && merged.len() > 1 {
        let first = merged[0];
        let last = merged[merged.len() - 1];
        if first.2 == last.2 {
            merged.remove(0);
            let end = first.1 + n;
            if let Some(l) = merged.last_mut() {
                l.1 = end;
            }
        } else if first.1 - first.0 < th.min_run {
            merged.remove(0);
            if let Some(l) = merged.last_mut() {
                l.1 = first.1 + n;
            }
        }
    }
    if closed && merged.len() == 1 {
        merged[0] = (merged[0].0, merged[0].0 + n, merged[0].2);
    }
    merged
        .into_iter()
        .map(|(a, b, kind)| {
            let idx = (a..b).map(|i| i % n);
            let fit_residual = match kind {
                PieceKind::UnitArc => idx.map(|i| (kappa[i] - 1.0).abs()).fold(0.0, f64::max),
                PieceKind::Straight => idx.map(|i| kappa[i]).fold(0.0, f64::max),
                PieceKind::Helix | PieceKind::Other => {
                    let k: Vec<f64> = idx.map(|i| kappa[i]).collect();
                    mean_and_cv(&k).1
                }
            };
            SegmentLabel {
                range: a..b,
                kind,
                fit_residual,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknotVerdict {
    Unknotted,
    Nontrivial,
    Inconclusive,
}

/// Evidence behind an unknot verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnknotReport {
    pub verdict: UnknotVerdict,
    /// Vertex count of the smallest polygon reached by triangle moves.
    pub reduced_vertices: usize,
    /// Fewest crossings over the sampled projection directions, per run.
    pub crossings: Vec<usize>,
}

/// Does segment `q0 q1` meet the closed triangle `a b c`? Segments sharing the vertex
/// `shared` of the triangle may touch it there.
fn segment_meets_triangle(q0: &Vec3, q1: &Vec3, tri: [&Vec3; 3], shared: Option<&Vec3>) -> bool {
    let (q0, q1) = match shared {
        Some(v) if (v - q0).norm() == 0.0 => (q0 + (q1 - q0) * 1e-7, *q1),
        Some(v) if (v - q1).norm() == 0.0 => (*q0, q1 + (q0 - q1) * 1e-7),
        _ => (*q0, *q1),
    };
    let [a, b, c] = tri;
    let e1 = b - a;
    let e2 = c - a;
    let nrm = e1.cross(&e2);
    let scale = e1.norm() * e2.norm();
    if nrm.norm() <= 1e-12 * scale {
        return false;
    }
    let unit = nrm / nrm.norm();
    let h0 = (q0 - a).dot(&unit);
    let h1 = (q1 - a).dot(&unit);
    let tol = 1e-10 * (1.0 + scale.sqrt());
    if (h0 > tol && h1 > tol) || (h0 < -tol && h1 < -tol) {
        return false;
    }
    let u = e1 / e1.norm();
    let w = unit.cross(&u);
    let flat = |x: &Vec3| ((x - a).dot(&u), (x - a).dot(&w));
    let (ta, tb, tc) = (flat(a), flat(b), flat(c));
    if h0.abs() <= tol && h1.abs() <= tol {
        let (s0, s1) = (flat(&q0), flat(&q1));
        return inside_2d(s0, ta, tb, tc)
            || inside_2d(s1, ta, tb, tc)
            || touches_2d(s0, s1, ta, tb)
            || touches_2d(s0, s1, tb, tc)
            || touches_2d(s0, s1, tc, ta);
    }
    let t = if (h0 - h1).abs() > 0.0 { h0 / (h0 - h1) } else { 0.0 };
    let x = q0 + (q1 - q0) * t.clamp(0.0, 1.0);
    inside_2d(flat(&x), ta, tb, tc)
}

fn inside_2d(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let eps = 1e-12;
    let d1 = orient(a, b, p);
    let d2 = orient(b, c, p);
    let d3 = orient(c, a, p);
    let neg = d1 < -eps || d2 < -eps || d3 < -eps;
    let pos = d1 > eps || d2 > eps || d3 > eps;
    !(neg && pos)
}

/// Closed segments in the plane meet (including touching).
fn touches_2d(a0: (f64, f64), a1: (f64, f64), b0: (f64, f64), b1: (f64, f64)) -> bool {
    let eps = 1e-12;
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps)) {
        return true;
    }
    let on = |p: (f64, f64), s0: (f64, f64), s1: (f64, f64), d: f64| {
        d.abs() <= eps
            && p.0 >= s0.0.min(s1.0) - eps
            && p.0 <= s0.0.max(s1.0) + eps
            && p.1 >= s0.1.min(s1.1) - eps
            && p.1 <= s0.1.max(s1.1) + eps
    };
    on(a0, b0, b1, d1) || on(a1, b0, b1, d2) || on(b0, a0, a1, d3) || on(b1, a0, a1, d4)
}

/// Remove vertices whose triangle with its neighbours no other edge meets. Each removal
/// is an isotopy of the polygon, so the knot type is preserved.
fn triangle_reduce(mut p: Vec<Vec3>, start: usize) -> Vec<Vec3> {
    let mut i = start % p.len().max(1);
    let mut idle = 0;
    while p.len() > 3 && idle < p.len() {
        let n = p.len();
        let (a, b, c) = ((i + n - 1) % n, i, (i + 1) % n);
        let tri = [&p[a], &p[b], &p[c]];
        let free = (0..n).all(|k| {
            let k1 = (k + 1) % n;
            if k == a || k == b {
                return true;
            }
            let shared = if k1 == a {
                Some(&p[a])
            } else if k == c {
                Some(&p[c])
            } else {
                None
            };
            !segment_meets_triangle(&p[k], &p[k1], tri, shared)
        });
        if free {
            p.remove(b);
            idle = 0;
            if i >= p.len() {
                i = 0;
            }
        } else {
            i = (i + 1) % n;
            idle += 1;
        }
    }
    p
}

fn crossings_in_direction(p: &[Vec3], dir: &Vec3) -> usize {
    let e1 = crate::geom::any_perpendicular(dir);
    let e2 = dir.cross(&e1);
    let q: Vec<(f64, f64)> = p.iter().map(|x| (x.dot(&e1), x.dot(&e2))).collect();
    let n = q.len();
    let mut count = 0;
    for i in 0..n {
        let (a0, a1) = (q[i], q[(i + 1) % n]);
        for j in i + 2..n {
            if (j + 1) % n == i {
                continue;
            }
            let (b0, b1) = (q[j], q[(j + 1) % n]);
            if segments_cross_2d(a0, a1, b0, b1) {
                count += 1;
            }
        }
    }
    count
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross_2d(a0: (f64, f64), a1: (f64, f64), b0: (f64, f64), b1: (f64, f64)) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Number of projection directions sampled per reduced polygon.
const PROJECTION_DIRECTIONS: usize = 200;

/// Heuristic knot check: triangle-move reduction from several starting offsets, then the
/// fewest crossings over many projections. Fewer than three crossings proves the reduced
/// polygon is unknotted; three or more in every run is reported as nontrivial.
pub fn unconstrained_unknot_check(c: &DiscreteCurve) -> Result<UnknotReport> {
    if !c.is_closed() || c.component_count() != 1 {
        return Err(Error::NotAKnot("unknot check needs a single closed curve".into()));
    }
    let dirs = fibonacci_sphere(PROJECTION_DIRECTIONS);
    let n = c.len();
    let mut crossings = Vec::new();
    let mut smallest = n;
    for run in 0..3 {
        let reduced = triangle_reduce(c.points().to_vec(), run * n / 3);
        smallest = smallest.min(reduced.len());
        let best = dirs
            .iter()
            .map(|d| crossings_in_direction(&reduced, d))
            .min()
            .unwrap_or(0);
        crossings.push(best);
        if best < 3 {
            return Ok(UnknotReport {
                verdict: UnknotVerdict::Unknotted,
                reduced_vertices: smallest,
                crossings,
            });
        }
    }
    let verdict = if crossings.iter().all(|&k| k >= 3) {
        UnknotVerdict::Nontrivial
    } else {
        UnknotVerdict::Inconclusive
    };
    Ok(UnknotReport {
        verdict,
        reduced_vertices: smallest,
        crossings,
    })
}

/// Close an open curve between horizontal walls with a straight return path outside the
/// slab: up from the top end, across far away, and back up to the bottom end.
pub fn close_outside_slab(open: &DiscreteCurve, reach: f64) -> Result<DiscreteCurve> {
    let p = open.points();
    let first = p[0];
    let last = p[p.len() - 1];
    let far = v3(reach, 0.0, 0.0);
    let mut pts = p.to_vec();
    pts.push(last + v3(0.0, 0.0, reach));
    pts.push(last + v3(0.0, 0.0, reach) + far);
    pts.push(first - v3(0.0, 0.0, reach) + far);
    pts.push(first - v3(0.0, 0.0, reach));
    DiscreteCurve::new(pts, true, open.tube_radius())
}

/// Two Hopf-linked stadiums with unit semicircles touching at distance 1: `A` in the
/// xz-plane with its upper semicircle centred at the origin, `B` in the yz-plane with its
/// lower semicircle centred at `(0,0,1)`. Straights have length `leg`.
pub fn clasp_link(leg: f64, h: f64) -> Result<DiscreteCurve> {
    let a = hook(leg, h, v3(1.0, 0.0, 0.0), v3(0.0, 0.0, 1.0), v3(0.0, 0.0, 0.0));
    let b = hook(leg, h, v3(0.0, 1.0, 0.0), v3(0.0, 0.0, -1.0), v3(0.0, 0.0, 1.0));
    DiscreteCurve::from_components(vec![a, b], true, 0.5)
}

/// Stadium whose semicircle of unit radius around `center` bulges towards `up`, with
/// straights running from it against `up` for length `leg`; `side` spans the plane.
fn hook(leg: f64, h: f64, side: Vec3, up: Vec3, center: Vec3) -> Vec<Vec3> {
    let arc = ((PI / h).round() as usize).max(4);
    let line = ((leg / h).round() as usize).max(1);
    let far = center - up * leg;
    let mut pts = Vec::new();
    for k in 0..arc {
        let t = PI * k as f64 / arc as f64;
        pts.push(center + side * t.cos() + up * t.sin());
    }
    for k in 0..line {
        pts.push(center - side - up * (leg * k as f64 / line as f64));
    }
    for k in 0..arc {
        let t = PI + PI * k as f64 / arc as f64;
        pts.push(far + side * t.cos() + up * t.sin());
    }
    for k in 0..line {
        pts.push(far + side + up * (leg * k as f64 / line as f64));
    }
    pts
}

/// Frames of a loop being pulled out of a fixed hook: the `B` component of
/// [`clasp_link`] shrinks towards its far end and rises until it no longer passes
/// through `A`.
pub fn release_trace(frames: usize, leg: f64, h: f64) -> Result<Vec<DiscreteCurve>> {
    let link = clasp_link(leg, h)?;
    let r = link.components();
    let p = link.points();
    let a: Vec<Vec3> = p[r[0].clone()].to_vec();
    let b: Vec<Vec3> = p[r[1].clone()].to_vec();
    let anchor = v3(0.0, 0.0, 1.0 + leg + 1.0);
    (0..frames)
        .map(|f| {
            let s = f as f64 / (frames.max(2) - 1) as f64;
            let scale = 1.0 - 0.5 * s;
            let lift = v3(0.0, 0.0, 3.0 * s);
            let moved: Vec<Vec3> = b.iter().map(|q| anchor + (q - anchor) * scale + lift).collect();
            DiscreteCurve::from_components(vec![a.clone(), moved], true, 0.5)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_constructions() {
        let c = round_circle(1.0, 512, 1.0).unwrap();
        for k in curve::discrete_curvature(&c) {
            assert!((k - 1.0).abs() < 1e-3);
        }
        assert!((thickness::thickness(&c) - 2.0).abs() < 1e-3);
        let c2 = round_circle(2.0, 512, 1.0).unwrap();
        assert!((curve::max_curvature(&c2) - 0.5).abs() < 1e-3);
        let c8 = round_circle(1.0, 8, 1.0).unwrap();
        assert!((curve::max_curvature(&c8) - 1.0).abs() < 0.05);
    }

    #[test]
    fn stadium_labels() {
        let s = stadium(3.0, 0.05, 0.5).unwrap();
        let labels = classify_segments(&s, &ClassifyThresholds::default());
        let kinds: Vec<PieceKind> = labels.iter().map(|l| l.kind).collect();
        assert_eq!(kinds.len(), 4, "{labels:?}");
        for w in kinds.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        assert!(kinds.iter().all(|k| matches!(k, PieceKind::UnitArc | PieceKind::Straight)));
        let covered: usize = labels.iter().map(|l| l.range.len()).sum();
        assert_eq!(covered, s.len());
    }

    #[test]
    fn single_label_shapes() {
        let c = round_circle(1.0, 400, 0.5).unwrap();
        let l = classify_segments(&c, &ClassifyThresholds::default());
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].kind, PieceKind::UnitArc);
        let line = DiscreteCurve::new((0..50).map(|i| v3(0.0, 0.0, i as f64 * 0.1)).collect(), false, 0.5).unwrap();
        let l = classify_segments(&line, &ClassifyThresholds::default());
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].kind, PieceKind::Straight);
    }

    #[test]
    fn helix_label() {
        // Curvature a/(a^2+b^2) = 0.5, torsion b/(a^2+b^2) = 0.5.
        let (a, b) = (1.0, 1.0);
        let pts = (0..400)
            .map(|i| {
                let t = i as f64 * 0.02;
                v3(a * t.cos(), a * t.sin(), b * t)
            })
            .collect();
        let c = DiscreteCurve::new(pts, false, 0.5).unwrap();
        let l = classify_segments(&c, &ClassifyThresholds::default());
        assert_eq!(l.len(), 1, "{l:?}");
        assert_eq!(l[0].kind, PieceKind::Helix);
    }

    #[test]
    fn rmf_offsets_of_circle() {
        for rho in [1.5, 2.0, 3.0] {
            let c = round_circle(rho, 600, 1.0).unwrap();
            let d = doubled_core(&c, 0.5).unwrap();
            let k = curve::discrete_curvature(&d);
            let r = d.components();
            let mut radii: Vec<f64> = r.iter().map(|rg| 1.0 / k[rg.start]).collect();
            radii.sort_by(f64::total_cmp);
            assert!((radii[0] - (rho - 0.5)).abs() < 1e-2, "{radii:?}");
            assert!((radii[1] - (rho + 0.5)).abs() < 1e-2, "{radii:?}");
            for rg in r {
                let kk = k[rg.start];
                assert!(k[rg].iter().all(|v| (v - kk).abs() < 1e-3));
            }
        }
    }

    #[test]
    fn straight_core_doubles_to_parallel_lines() {
        let line = DiscreteCurve::new((0..30).map(|i| v3(0.0, 0.0, i as f64 * 0.2)).collect(), false, 1.0).unwrap();
        let d = doubled_core(&line, 0.5).unwrap();
        let p = d.points();
        let r = d.components();
        for (i, j) in r[0].clone().zip(r[1].clone()) {
            assert!(((p[i] - p[j]).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_is_twist_free() {
        let t = trefoil(2.0, 1.0, 300, 0.5).unwrap();
        let open = DiscreteCurve::new(t.points().to_vec(), false, 0.5).unwrap();
        let f = rotation_minimizing_frame(&open, None);
        let tan = open.tangents();
        let p = open.points();
        for i in 1..open.len() {
            let moved = transport_normal(&p[i - 1], &tan[i - 1], &f.normals[i - 1], &p[i], &tan[i]);
            assert!(crate::geom::angle_between(&moved, &f.normals[i]) < 1e-6);
            assert!(f.normals[i].dot(&tan[i]).abs() < 1e-9);
            assert!((f.normals[i].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unknot_verdicts() {
        let c = round_circle(1.0, 64, 0.5).unwrap();
        assert_eq!(unconstrained_unknot_check(&c).unwrap().verdict, UnknotVerdict::Unknotted);
        let t = trefoil(2.0, 1.0, 120, 0.5).unwrap();
        assert_eq!(unconstrained_unknot_check(&t).unwrap().verdict, UnknotVerdict::Nontrivial);
        let s = stadium(2.0, 0.1, 0.5).unwrap();
        assert_eq!(unconstrained_unknot_check(&s).unwrap().verdict, UnknotVerdict::Unknotted);
    }

    #[test]
    fn overhand_seed_conditions() {
        let gap = 12.0;
        let s = open_overhand(gap, 500).unwrap();
        let p = s.points();
        let n = p.len();
        assert!((p[0] - v3(0.0, 0.0, 0.0)).norm() < 1e-9);
        assert!((p[n - 1] - v3(0.0, 0.0, gap)).norm() < 1e-9);
        let t = s.tangents();
        assert!((t[0] - v3(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert!((t[n - 1] - v3(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert!(curve::max_curvature(&s) <= 1.0 + CURVATURE_SLACK);
        let closed = close_outside_slab(&s, 30.0).unwrap();
        assert_eq!(unconstrained_unknot_check(&closed).unwrap().verdict, UnknotVerdict::Nontrivial);
    }

    #[test]
    fn clasp_is_tight_at_unit_thickness() {
        let c = clasp_link(2.0, 0.05).unwrap();
        assert!((thickness::thickness(&c) - 1.0).abs() < 0.02);
    }
}
