use std::f64::consts::TAU;

use thickknot::constructions::round_circle;
use thickknot::curve::{length, max_curvature, perturb};
use thickknot::geom::v3;
use thickknot::thickness::thickness;
use thickknot::tighten::{tighten, TightenConfig, WallPlanes};
use thickknot::{DiscreteCurve, Error};

#[test]
fn round_circle_is_a_fixed_point() {
    let c = round_circle(1.0, 256, 1.0).unwrap();
    let r = tighten(&c, &TightenConfig::new(2.0)).unwrap();
    let before = length(&c);
    assert!((r.report.length - before).abs() / before < 1e-3);
}

#[test]
fn perturbed_circle_tightens_to_unit_circle() {
    let c = perturb(&round_circle(1.0, 512, 1.0).unwrap(), 0.1, 9).unwrap();
    let r = tighten(&c, &TightenConfig::new(2.0)).unwrap();
    assert!((r.report.length - TAU).abs() / TAU < 0.01, "length {}", r.report.length);
    assert!(max_curvature(&r.final_curve) <= 1.02);
    assert!(thickness(&r.final_curve) >= 1.98);
    assert!(r.length_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
}

#[test]
fn traced_frames_are_evenly_spaced() {
    let c = round_circle(1.3, 128, 1.0).unwrap();
    let mut cfg = TightenConfig::new(2.0);
    cfg.max_iters = 40;
    cfg.trace_every = Some(10);
    let r = tighten(&c, &cfg).unwrap();
    let its: Vec<usize> = r.frames.iter().map(|f| f.0).collect();
    assert_eq!(its[0], 0);
    assert!(its.windows(2).all(|w| w[1] - w[0] == 10));
}

#[test]
fn open_strand_between_walls_keeps_its_ends() {
    let pts: Vec<_> = (0..=60).map(|k| {
        let z = 6.0 * k as f64 / 60.0;
        v3(0.8 * (std::f64::consts::PI * z / 6.0).sin(), 0.0, z)
    }).collect();
    let c = DiscreteCurve::new(pts, false, 0.5).unwrap();
    let mut cfg = TightenConfig::new(1.0);
    cfg.max_iters = 400;
    cfg.wall_planes = Some(WallPlanes::horizontal(6.0));
    let r = thickknot::tighten::tighten_open(&c, &cfg).unwrap();
    let p = r.final_curve.points();
    assert!((p[0] - c.points()[0]).norm() < 1e-9);
    assert!((p[p.len() - 1] - c.points()[60]).norm() < 1e-9);
    assert!(r.report.length < length(&c));
    assert!(p.iter().all(|q| q.z >= -1e-9 && q.z <= 6.0 + 1e-9));
}

#[test]
fn bad_settings_are_rejected() {
    let c = round_circle(1.0, 64, 1.0).unwrap();
    assert!(matches!(tighten(&c, &TightenConfig::new(2.5)), Err(Error::InvalidInput(_))));
    let mut cfg = TightenConfig::new(1.0);
    cfg.shrink_rate = 0.5;
    assert!(matches!(tighten(&c, &cfg), Err(Error::InvalidInput(_))));
    let open = DiscreteCurve::new(c.points()[..10].to_vec(), false, 1.0).unwrap();
    assert!(tighten(&open, &TightenConfig::new(1.0)).is_err());
}
