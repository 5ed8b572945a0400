//! Shared corpus and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thickknot::constructions::{clasp_link, round_circle, stadium, trefoil};
use thickknot::curve::perturb;
use thickknot::geom::{v3, Vec3};
use thickknot::mesh::TriangleMesh;
use thickknot::thickness::centerline_distance;
use thickknot::{io, DiscreteCurve};

pub const CORPUS_TUBE: f64 = 0.5;

fn closed(pts: Vec<Vec3>) -> DiscreteCurve {
    DiscreteCurve::new(pts, true, CORPUS_TUBE).unwrap()
}

fn sample(n: usize, f: impl Fn(f64) -> Vec3) -> Vec<Vec3> {
    (0..n).map(|i| f(TAU * i as f64 / n as f64)).collect()
}

fn torus_knot(p: f64, q: f64, big: f64, small: f64, n: usize) -> DiscreteCurve {
    closed(sample(n, |t| {
        let r = big + small * (q * t).cos();
        v3(r * (p * t).cos(), r * (p * t).sin(), small * (q * t).sin())
    }))
}

/// Fifty closed curves of varied shape and thickness, at most 400 vertices each.
pub fn corpus() -> Vec<(String, DiscreteCurve)> {
    let mut out = Vec::new();
    for r in [0.8, 1.0, 1.5, 2.0] {
        for n in [128, 256] {
            out.push((format!("circle r={r} n={n}"), round_circle(r, n, CORPUS_TUBE).unwrap()));
        }
    }
    for (a, b) in [(2.0, 1.0), (3.0, 1.0), (1.5, 1.2), (2.5, 1.5), (4.0, 2.0)] {
        for n in [200, 300] {
            let c = closed(sample(n, |t| v3(a * t.cos(), b * t.sin(), 0.0)));
            out.push((format!("ellipse {a}x{b} n={n}"), c));
        }
    }
    for s in [0.5, 1.0, 2.0, 3.0, 4.0, 6.0] {
        out.push((format!("stadium {s}"), stadium(s, 0.05, CORPUS_TUBE).unwrap()));
    }
    for (big, small) in [(2.0, 1.0), (3.0, 1.0), (2.5, 0.8), (3.0, 1.5), (4.0, 1.5), (3.5, 1.2)] {
        out.push((format!("trefoil {big}/{small}"), trefoil(big, small, 360, CORPUS_TUBE).unwrap()));
    }
    for (p, q) in [(2.0, 5.0), (3.0, 4.0), (3.0, 5.0), (2.0, 7.0), (5.0, 2.0), (4.0, 3.0)] {
        out.push((format!("torus knot ({p},{q})"), torus_knot(p, q, 4.0, 1.5, 400)));
    }
    let base = round_circle(2.0, 256, CORPUS_TUBE).unwrap();
    for amp in [0.05, 0.1, 0.2, 0.3] {
        for seed in [1, 2] {
            out.push((format!("perturbed circle {amp} seed {seed}"), perturb(&base, amp, seed).unwrap()));
        }
    }
    for scale in [1.5, 2.0, 3.0] {
        let c = closed(sample(400, |t| {
            v3(
                scale * (3.0 * t + 0.3).cos(),
                scale * (2.0 * t + 0.2).cos(),
                scale * (7.0 * t + 0.7).cos(),
            )
        }));
        out.push((format!("lissajous x{scale}"), c));
    }
    let tref = trefoil(3.0, 1.2, 360, CORPUS_TUBE).unwrap();
    for seed in [3, 4, 5] {
        out.push((format!("perturbed trefoil seed {seed}"), perturb(&tref, 0.15, seed).unwrap()));
    }
    assert_eq!(out.len(), 50);
    out
}

/// Minimum doubly critical chord over vertex pairs, by exhaustive scan.
///
/// A pair counts when the squared distance has a discrete extremum in each index with
/// the other held fixed and the pair is farther apart along the curve than the
/// neighbour window `pi * max(r, mean edge) - 2 * max edge`.
pub fn brute_force_r2(c: &DiscreteCurve) -> f64 {
    let p = c.points();
    let n = p.len();
    assert!(c.is_closed() && c.component_count() == 1);
    let edges: Vec<f64> = (0..n).map(|i| (p[(i + 1) % n] - p[i]).norm()).collect();
    let total: f64 = edges.iter().sum();
    let mut at = vec![0.0; n];
    for i in 1..n {
        at[i] = at[i - 1] + edges[i - 1];
    }
    let max_edge = edges.iter().cloned().fold(0.0, f64::max);
    let window = PI * c.tube_radius().max(total / n as f64) - 2.0 * max_edge;
    let f = |i: usize, j: usize| (p[i % n] - p[j % n]).norm_squared();
    let extremal = |a: f64, b: f64, c: f64| (b - a) * (c - b) <= 0.0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let d = at[j] - at[i];
            if d.min(total - d) < window {
                continue;
            }
            let fij = f(i, j);
            if extremal(f(i + n - 1, j), fij, f(i + 1, j)) && extremal(f(i, j + n - 1), fij, f(i, j + 1)) {
                best = best.min(fij.sqrt());
            }
        }
    }
    best
}

fn pose_advance(x: f64, y: f64, th: f64, k: f64, len: f64) -> (f64, f64, f64) {
    if k == 0.0 {
        (x + len * th.cos(), y + len * th.sin(), th)
    } else {
        let r = 1.0 / k;
        let cx = x - r * th.sin();
        let cy = y + r * th.cos();
        let th2 = th + k * len;
        (cx + r * th2.sin(), cy - r * th2.cos(), th2)
    }
}

fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Shortest unit-radius path length from the origin heading +x to `(gx, gy, gth)`,
/// found by a grid over the first two piece lengths followed by Newton refinement.
pub fn dubins_oracle(gx: f64, gy: f64, gth: f64) -> f64 {
    const WORDS: [[f64; 3]; 6] = [
        [1.0, -1.0, 1.0],
        [-1.0, 1.0, -1.0],
        [1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0],
        [-1.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
    ];
    let dist = gx.hypot(gy);
    let mut best = f64::INFINITY;
    for k in WORDS {
        // The last piece is fixed by the heading; what remains is the position error.
        let third = |t1: f64, t2: f64| ((gth - k[0] * t1 - k[1] * t2) / k[2]).rem_euclid(TAU);
        let end = |t1: f64, t2: f64| {
            let t3 = third(t1, t2);
            let a = pose_advance(0.0, 0.0, 0.0, k[0], t1);
            let b = pose_advance(a.0, a.1, a.2, k[1], t2);
            let c = pose_advance(b.0, b.1, b.2, k[2], t3);
            (c.0 - gx, c.1 - gy, t3)
        };
        let t2_max = if k[1] == 0.0 { dist + 4.0 } else { TAU };
        let steps = 96;
        for a in 0..steps {
            for b in 0..steps {
                let mut t = [TAU * (a as f64 + 0.5) / steps as f64, t2_max * (b as f64 + 0.5) / steps as f64];
                let (ex, ey, _) = end(t[0], t[1]);
                if ex.hypot(ey) > 0.3 {
                    continue;
                }
                let mut ok = false;
                for _ in 0..50 {
                    let (ex, ey, _) = end(t[0], t[1]);
                    if ex.hypot(ey) < 1e-11 {
                        ok = true;
                        break;
                    }
                    let e = 1e-7;
                    let (ax, ay, _) = end(t[0] + e, t[1]);
                    let (bx, by, _) = end(t[0], t[1] + e);
                    let j = [[(ax - ex) / e, (bx - ex) / e], [(ay - ey) / e, (by - ey) / e]];
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    if det.abs() < 1e-12 {
                        break;
                    }
                    t[0] -= (j[1][1] * ex - j[0][1] * ey) / det;
                    t[1] -= (-j[1][0] * ex + j[0][0] * ey) / det;
                }
                let t1 = t[0].rem_euclid(TAU);
                if !ok || t[1] < -1e-9 || (k[1] != 0.0 && t[1] > TAU) {
                    continue;
                }
                let (ex, ey, t3) = end(t1, t[1].max(0.0));
                if ex.hypot(ey) > 1e-8 || wrap(k[0] * t1 + k[1] * t[1] + k[2] * t3 - gth).abs() > 1e-8 {
                    continue;
                }
                best = best.min(t1 + t[1].max(0.0) + t3);
            }
        }
    }
    best
}

/// Near-contact area of the aperture of the clasp fixture, by uniform sampling.
///
/// Component 0 is a planar hook in `y = 0`. A point of that plane belongs to the disk
/// when it lies inside the hook's centre line polygon and clear of its tube plus `seal`;
/// it is near contact when its distance to the whole centre line, less the tube radius,
/// is below the tube diameter.
pub fn monte_carlo_near_contact(c: &DiscreteCurve, seal: f64, samples: usize, seed: u64) -> f64 {
    let r = c.tube_radius();
    let ring: Vec<(f64, f64)> = c.component_points(0).iter().map(|p| (p.x, p.z)).collect();
    assert!(c.component_points(0).iter().all(|p| p.y.abs() < 1e-12));
    let hook = DiscreteCurve::new(c.component_points(0).to_vec(), true, r).unwrap();
    let inside = |x: f64, z: f64| {
        let mut odd = false;
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            if (a.1 > z) != (b.1 > z) && x < a.0 + (z - a.1) * (b.0 - a.0) / (b.1 - a.1) {
                odd = !odd;
            }
        }
        odd
    };
    let lo = ring.iter().fold((f64::INFINITY, f64::INFINITY), |m, p| (m.0.min(p.0), m.1.min(p.1)));
    let hi = ring.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| (m.0.max(p.0), m.1.max(p.1)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut near = 0usize;
    for _ in 0..samples {
        let (x, z) = (rng.gen_range(lo.0..hi.0), rng.gen_range(lo.1..hi.1));
        if !inside(x, z) {
            continue;
        }
        let q = v3(x, 0.0, z);
        if centerline_distance(&hook, &q) < r + seal {
            continue;
        }
        if centerline_distance(c, &q) - r < 2.0 * r {
            near += 1;
        }
    }
    near as f64 / samples as f64 * (hi.0 - lo.0) * (hi.1 - lo.1)
}

fn segment_hits_triangle(p: &Vec3, q: &Vec3, t: [&Vec3; 3]) -> bool {
    let d = q - p;
    let (e1, e2) = (t[1] - t[0], t[2] - t[0]);
    let h = d.cross(&e2);
    let a = e1.dot(&h);
    if a.abs() < 1e-14 {
        return false;
    }
    let s = p - t[0];
    let u = s.dot(&h) / a;
    let qv = s.cross(&e1);
    let v = d.dot(&qv) / a;
    let w = e2.dot(&qv) / a;
    u >= 0.0 && v >= 0.0 && u + v <= 1.0 && (0.0..=1.0).contains(&w)
}

/// Pairs of vertex-disjoint triangles that intersect.
pub fn crossing_triangle_pairs(m: &TriangleMesh) -> usize {
    let tri = |f: &[usize; 3]| [&m.vertices[f[0]], &m.vertices[f[1]], &m.vertices[f[2]]];
    let boxes: Vec<(Vec3, Vec3)> = m
        .faces
        .iter()
        .map(|f| {
            let t = tri(f);
            (t[0].inf(t[1]).inf(t[2]), t[0].sup(t[1]).sup(t[2]))
        })
        .collect();
    let hits = |a: &[usize; 3], b: &[usize; 3]| {
        (0..3).any(|e| segment_hits_triangle(&m.vertices[a[e]], &m.vertices[a[(e + 1) % 3]], tri(b)))
    };
    let mut count = 0;
    for i in 0..m.faces.len() {
        for j in i + 1..m.faces.len() {
            let (a, b) = (&boxes[i], &boxes[j]);
            if (0..3).any(|k| a.1[k] < b.0[k] || b.1[k] < a.0[k]) {
                continue;
            }
            let (fa, fb) = (&m.faces[i], &m.faces[j]);
            if !fa.iter().any(|v| fb.contains(v)) && (hits(fa, fb) || hits(fb, fa)) {
                count += 1;
            }
        }
    }
    count
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thickknot"))
        .args(args)
        .env("THICKKNOT_THREADS", "1")
        .output()
        .expect("binary runs")
}

pub fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Inputs shared by the determinism runs: a circle, an open planar arc and the clasp.
pub fn cli_fixtures(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let circle = dir.join("circle.curve");
    assert!(run_cli(&["construct", "circle", "--points", "96", "--radius", "1.5", "--out", path_arg(&circle)]).status.success());
    let arc = dir.join("arc.curve");
    let pts = (0..60).map(|k| {
        let t = std::f64::consts::PI * k as f64 / 59.0;
        v3(2.0 * t.cos(), 2.0 * t.sin(), 0.0)
    });
    io::write_curve(&arc, &DiscreteCurve::new(pts.collect(), false, 0.5).unwrap()).unwrap();
    let clasp = dir.join("clasp.curve");
    io::write_curve(&clasp, &clasp_link(2.0, 0.1).unwrap()).unwrap();
    (circle, arc, clasp)
}

/// Every subcommand, with output files named after `tag`.
pub fn all_cli_commands(dir: &Path, tag: &str) -> Vec<(Output, Vec<PathBuf>)> {
    let (circle, arc, clasp) = cli_fixtures(dir);
    let f = |name: &str| dir.join(format!("{tag}-{name}"));
    let mut out = Vec::new();
    let mut go = |args: Vec<String>, files: Vec<PathBuf>| {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = run_cli(&a);
        assert!(o.status.success(), "{a:?}: {}", String::from_utf8_lossy(&o.stderr));
        out.push((o, files));
    };
    let sv = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    go(sv(&["construct", "circle", "--points", "64", "--out", path_arg(&f("c.curve"))]), vec![f("c.curve")]);
    go(sv(&["construct", "overhand", "--points", "200", "--out", path_arg(&f("o.curve"))]), vec![f("o.curve")]);
    go(
        sv(&["--seed", "3", "tighten", path_arg(&circle), "--tau", "2", "--max-iters", "30", "--trace-every", "5", "--trace", path_arg(&f("t.jsonl")), "--out", path_arg(&f("t.curve"))]),
        vec![f("t.jsonl"), f("t.curve")],
    );
    go(sv(&["cap", path_arg(&arc), "--out", path_arg(&f("cap.curve"))]), vec![f("cap.curve")]);
    go(sv(&["thickness", path_arg(&circle), "--tau", "1", "--report", path_arg(&f("r.json"))]), vec![f("r.json")]);
    go(sv(&["diagnose", path_arg(&clasp), "--long-arc", "102:204", "--plane", "0,0,0,0,1,0"]), vec![]);
    go(sv(&["--seed", "5", "probe", "ball", "--attempts", "1"]), vec![]);
    go(sv(&["--seed", "5", "probe", "cylinder", "--attempts", "1"]), vec![]);
    go(sv(&["classify", path_arg(&circle)]), vec![]);
    go(sv(&["export-mesh", path_arg(&circle), "--segments", "8", "--out", path_arg(&f("m.obj"))]), vec![f("m.obj")]);
    out
}

