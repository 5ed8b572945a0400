use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use thickknot::constructions::{self, K0Config};
use thickknot::diagnostics::{self, ApertureOptions, ApertureSpec, Plane};
use thickknot::dubins;
use thickknot::io::{self, IsotopyTrace};
use thickknot::mesh;
use thickknot::thickness;
use thickknot::tighten::{self, TightenConfig, WallPlanes};
use thickknot::{DiscreteCurve, Error, Result};

/// Thick curves: construction, tightening, capping and diagnostics.
#[derive(Parser, Debug)]
#[command(name = "thickknot", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a curve.
    Construct {
        #[arg(value_enum)]
        kind: Shape,
        /// Number of stacked modules (for `kn`).
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Vertex count for circles and the overhand seed.
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shrink a curve while keeping thickness and curvature.
    Tighten {
        curve: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Clamp strand ends to two horizontal walls.
        #[arg(long, requires = "wall_gap")]
        open: bool,
        #[arg(long)]
        wall_gap: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Record a frame every this many iterations.
        #[arg(long, default_value_t = 10)]
        trace_every: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Close an open core with Dubins caps.
    Cap {
        core: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report thickness and curvature; with `--tau`, test membership.
    Thickness {
        curve: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Extract the aperture of a long arc in a plane, optionally over a trace.
    Diagnose {
        curve: PathBuf,
        /// Vertex range `A:B` of the long arc.
        #[arg(long)]
        long_arc: String,
        /// Plane as `px,py,pz,nx,ny,nz`.
        #[arg(long, allow_hyphen_values = true)]
        plane: String,
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        seal: Option<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Search for counterexamples to the ball or cylinder lemma.
    Probe {
        #[arg(value_enum)]
        lemma: Lemma,
        #[arg(long, default_value_t = 100)]
        attempts: usize,
        /// Cylinder radius (cylinder probe only).
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Label maximal runs of a curve as unit arcs, straights or helices.
    Classify { curve: PathBuf },
    /// Write the tube surface as an OBJ mesh.
    ExportMesh {
        curve: PathBuf,
        #[arg(long, default_value_t = 16)]
        segments: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Shape {
    Circle,
    Overhand,
    K0,
    Kn,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Lemma {
    Ball,
    Cylinder,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("THICKKNOT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn emit_curve(c: &DiscreteCurve, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_curve(p, c),
        None => {
            print!("{}", io::curve_to_string(c)?);
            Ok(())
        }
    }
}

fn parse_range(s: &str) -> Result<std::ops::Range<usize>> {
    let bad = || Error::InvalidInput(format!("expected A:B, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if b <= a {
        return Err(bad());
    }
    Ok(a..b)
}

fn parse_plane(s: &str) -> Result<Plane> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidInput(format!("expected six numbers, got `{s}`")))?;
    if v.len() != 6 {
        return Err(Error::InvalidInput(format!("expected six numbers, got `{s}`")));
    }
    Plane::new(thickknot::geom::v3(v[0], v[1], v[2]), thickknot::geom::v3(v[3], v[4], v[5]))
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Construct {
            kind,
            n,
            points,
            radius,
            out,
        } => {
            let c = match kind {
                // The thickest tube a circle of this radius carries.
                Shape::Circle => constructions::round_circle(radius, points, radius.min(1.0))?,
                Shape::Overhand => constructions::open_overhand(K0Config::default().wall_gap, points)?,
                Shape::K0 => {
                    let cfg = K0Config {
                        seed,
                        ..K0Config::default()
                    };
                    constructions::build_k0_with(&cfg)?.capped.curve
                }
                Shape::Kn => {
                    let cfg = K0Config {
                        seed,
                        ..K0Config::default()
                    };
                    constructions::build_kn_with(n, &cfg, constructions::DEFAULT_JOINER)?.capped.curve
                }
            };
            emit_curve(&c, out.as_deref())
        }
        Command::Tighten {
            curve,
            tau,
            open,
            wall_gap,
            max_iters,
            trace_every,
            trace,
            out,
        } => {
            let c = io::read_curve(&curve)?;
            let mut cfg = TightenConfig::new(tau);
            cfg.seed = seed;
            if let Some(m) = max_iters {
                cfg.max_iters = m;
            }
            if trace.is_some() {
                cfg.trace_every = Some(trace_every.max(1));
            }
            let result = if open {
                cfg.wall_planes = wall_gap.map(WallPlanes::horizontal);
                tighten::tighten_open(&c, &cfg)?
            } else {
                tighten::tighten(&c, &cfg)?
            };
            if let Some(path) = trace {
                let t = IsotopyTrace::from_frames(
                    result.frames.clone(),
                    seed,
                    "tighten",
                    json!({ "tau": tau, "open": open, "wall_gap": wall_gap, "max_iters": cfg.max_iters }),
                )?;
                t.write(&path)?;
            }
            print(&json!({
                "iterations": result.iterations,
                "converged": result.converged,
                "report": result.report,
            }))?;
            match out {
                Some(p) => io::write_curve(&p, &result.final_curve),
                None => Ok(()),
            }
        }
        Command::Cap { core, out } => {
            let c = io::read_curve(&core)?;
            let pairs = dubins::default_end_pairs(&c)?;
            let capped = dubins::close_open_curve_detailed(&c, &pairs)?;
            io::write_curve(&out, &capped.curve)?;
            print(&json!({
                "caps": capped.caps.iter().map(|p| json!({"word": p.word.name(), "length": p.total_length})).collect::<Vec<_>>(),
                "cap_ranges": capped.cap_ranges,
                "junction_mismatch": capped.junction_mismatch,
                "min_clearance": capped.min_clearance,
            }))
        }
        Command::Thickness { curve, tau, report } => {
            let c = io::read_curve(&curve)?;
            let rep = thickness::report(&c);
            let verdict = tau.map(|t| thickness::check_membership(&c, t)).transpose()?;
            let record = json!({ "report": rep, "membership": verdict });
            if let Some(p) = report {
                io::write_atomic(&p, (serde_json::to_string_pretty(&record)? + "\n").as_bytes())?;
            }
            print(&record)
        }
        Command::Diagnose {
            curve,
            long_arc,
            plane,
            spacing,
            seal,
            trace,
        } => {
            let c = io::read_curve(&curve)?;
            let arc = parse_range(&long_arc)?;
            let plane = parse_plane(&plane)?;
            let options = ApertureOptions {
                spacing,
                seal,
                max_radius: None,
            };
            let aperture = diagnostics::extract_aperture_with(&c, arc.clone(), &plane, &options)?;
            let persistence = match trace {
                Some(p) => {
                    let t = IsotopyTrace::read(&p)?;
                    let spec = ApertureSpec {
                        long_arc: arc,
                        anchor: None,
                        plane,
                        options,
                    };
                    Some(diagnostics::trace_diagnostics(&t.curves(), &spec)?)
                }
                None => None,
            };
            print(&json!({
                "cone_angle": aperture.cone_angle,
                "disk_diameter": aperture.disk_diameter,
                "disk_area": aperture.disk_area,
                "near_contact_area": aperture.near_contact_area,
                "tip": aperture.tip,
                "tip_index": aperture.tip_index,
                "contour_points": aperture.contour.len(),
                "planar_disk_only": aperture.planar_disk_only,
                "persistence": persistence,
            }))
        }
        Command::Probe {
            lemma,
            attempts,
            radius,
        } => {
            let (ball, s) = diagnostics::canonical_setup();
            let report = match lemma {
                Lemma::Ball => diagnostics::probe_ball_lemma(&ball, attempts, seed)?,
                Lemma::Cylinder => diagnostics::probe_cylinder_lemma(radius, &s, attempts, seed)?,
            };
            print(&report)
        }
        Command::Classify { curve } => {
            let c = io::read_curve(&curve)?;
            print(&constructions::classify_segments(&c, &Default::default()))
        }
        Command::ExportMesh { curve, segments, out } => {
            let c = io::read_curve(&curve)?;
            let m = mesh::tube_mesh(&c, segments)?;
            m.write_obj(&out)?;
            print(&json!({ "vertices": m.vertices.len(), "faces": m.faces.len() }))
        }
    }
}
