use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lipsquash::compose::{compose_fixture, write_compose_csv, ComposeMode, DEFAULT_GRID};
use lipsquash::cones::{Norm, SampledCurve};
use lipsquash::content::{hausdorff_content, write_content_csv, ContentConfig};
use lipsquash::fixtures::FractalFixture;
use lipsquash::fragments::{
    alberti_check, barycenter, restriction_mass_identity, slice_restriction, Aabb, AlbertiOutcome, FragmentFamily,
    Region,
};
use lipsquash::measure::DiscreteMeasure;
use lipsquash::planar::{build_planar_squash, squash_report, write_report_csv, UNCERTIFIED_NOTE};
use lipsquash::realline::build_h;
use lipsquash::stability::{sawtooth_demo, sawtooth_offset, stability_sweep, RadialPerturbation};
use lipsquash::svg::{render, Layer};
use lipsquash::{Error, Result};

#[derive(Parser)]
#[command(name = "lipsquash", version, about = "Lipschitz squashing maps and their checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Squash a measure on the line onto finitely many points.
    SquashLine {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        eps: f64,
        /// Half-width of the working interval; defaults to the largest |atom|.
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squash a planar fixture with product gap maps.
    SquashPlane {
        #[arg(long, default_value = "four_corner")]
        fixture: String,
        #[arg(long, default_value_t = 5)]
        gen: u32,
        /// One value or a decreasing comma-separated list.
        #[arg(long, value_delimiter = ',', default_value = "0.125")]
        eps: Vec<f64>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Hausdorff content upper bounds of a measure's support.
    Content {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        s: Vec<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Curve-fragment families.
    Fragments {
        #[command(subcommand)]
        action: FragmentAction,
    },
    /// Derivative stability under small 1-Lipschitz perturbations.
    Stability {
        #[arg(long, value_enum, default_value_t = CurveKind::Circle)]
        curve: CurveKind,
        #[arg(long, value_enum, default_value_t = PerturbKind::Radial)]
        perturb: PerturbKind,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Number of halvings of the perturbation size.
        #[arg(long, default_value_t = 8)]
        sweep: usize,
        #[arg(long, value_enum)]
        demo: Option<Demo>,
        #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
        teeth: Vec<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Compose line squashes with axis perturbations of a fixture.
    Compose {
        #[arg(long, default_value = "four_corner")]
        fixture: String,
        #[arg(long, default_value_t = 5)]
        gen: u32,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 0.02)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Product)]
        mode: ModeArg,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FragmentAction {
    /// Total barycenter mass, optionally inside boxes `lo1,lo2,..,hi1,hi2,..`.
    Barycenter {
        #[arg(long)]
        family: PathBuf,
        #[arg(long = "box")]
        boxes: Vec<String>,
    },
    /// Restrict to boxes in space × time and check the mass identity.
    Restrict {
        #[arg(long)]
        family: PathBuf,
        #[arg(long = "box", required = true)]
        boxes: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a measure is dominated by the family's barycenter.
    Check {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        granularity: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveKind {
    Circle,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbKind {
    Radial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Sawtooth,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Product,
    Recombine,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn csv_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout()),
    })
}

fn parse_box(s: &str) -> Result<Aabb> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("box `{s}`: {e}"))))
        .collect::<Result<_>>()?;
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!("box `{s}` needs lo and hi coordinates")));
    }
    let k = v.len() / 2;
    Aabb::new(v[..k].to_vec(), v[k..].to_vec())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SquashLine {
            measure,
            eta,
            r,
            eps,
            half_width,
            out,
        } => {
            let mu = DiscreteMeasure::load(&measure)?;
            let d = match half_width {
                Some(d) => d,
                None => {
                    let m = mu.line_atoms()?.iter().fold(0.0f64, |m, t| m.max(t.abs()));
                    if m > 0.0 {
                        m
                    } else {
                        1.0
                    }
                }
            };
            let res = build_h(&mu, eta, r, eps, d)?;
            let doc = json!({
                "N": res.profile.height,
                "R": res.profile.period,
                "t0": res.profile.phase,
                "lambda": res.profile.scale,
                "E_mass": res.checks.retained_mass,
                "image_points": res.image_points,
                "checks": res.checks,
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&doc)?)
        }
        Command::SquashPlane {
            fixture,
            gen,
            eps,
            svg,
            csv,
        } => {
            let fix = FractalFixture::by_name(&fixture, gen)?;
            let rows = squash_report(&fix, &eps)?;
            if rows.iter().any(|r| !r.certified) {
                eprintln!("note: {UNCERTIFIED_NOTE}");
            }
            write_report_csv(&rows, csv_sink(csv.as_deref())?)?;
            if let Some(path) = svg {
                let last = *eps.last().expect("clap requires a value");
                let images: Vec<Vec<f64>> = if fix.ifs.null_projections {
                    let (map, _) = build_planar_squash(&fix, last)?;
                    fix.points.iter().map(|p| map.apply(p)).collect()
                } else {
                    fix.points.clone()
                };
                let doc = render(
                    &[
                        Layer::Points { points: &fix.points, color: "#888888", radius: 1.5 },
                        Layer::Points { points: &images, color: "#c0392b", radius: 2.5 },
                    ],
                    600.0,
                );
                std::fs::write(path, doc)?;
            }
            Ok(())
        }
        Command::Content { measure, s, delta, csv } => {
            let mu = DiscreteMeasure::load(&measure)?;
            let rows = s
                .iter()
                .map(|&s| hausdorff_content(mu.points(), s, delta, &ContentConfig::default()))
                .collect::<Result<Vec<_>>>()?;
            write_content_csv(&rows, csv_sink(csv.as_deref())?)
        }
        Command::Fragments { action } => run_fragments(action),
        Command::Stability {
            curve: CurveKind::Circle,
            perturb: PerturbKind::Radial,
            delta,
            sweep,
            demo,
            teeth,
            csv,
            svg,
        } => {
            let mut w = csv::Writer::from_writer(csv_sink(csv.as_deref())?);
            w.write_record(["param", "sup_dev", "deviation_fraction", "bound_holds"])?;
            match demo {
                Some(Demo::Sawtooth) => {
                    let rows = sawtooth_demo(&teeth, 0.5, 4)?;
                    for r in &rows {
                        w.write_record([
                            r.teeth.to_string(),
                            r.sup_dev.to_string(),
                            r.report.deviation_fraction.to_string(),
                            r.report.bound_holds.to_string(),
                        ])?;
                    }
                    w.flush()?;
                    eprintln!("note: the sup norm is not strictly convex; no convergence is claimed");
                    if let Some(path) = svg {
                        let base: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
                        let n = teeth.first().copied().unwrap_or(4);
                        let saw: Vec<Vec<f64>> = (0..=2 * n)
                            .map(|i| {
                                let t = i as f64 / (2 * n) as f64;
                                vec![t, sawtooth_offset(t, n)]
                            })
                            .collect();
                        let doc = render(
                            &[
                                Layer::Polyline { points: &base, color: "black", width: 1.5 },
                                Layer::Polyline { points: &saw, color: "#c0392b", width: 1.5 },
                            ],
                            600.0,
                        );
                        std::fs::write(path, doc)?;
                    }
                }
                None => {
                    let curve = SampledCurve::circle_arc([0.0, 0.0], 1.0, 0.0, std::f64::consts::TAU, 1024)?;
                    let params: Vec<f64> = (0..sweep).map(|j| 0.2 * 0.5f64.powi(j as i32)).collect();
                    let family = |alpha: f64| -> Box<dyn Fn(&[f64]) -> Vec<f64>> {
                        let f = RadialPerturbation::new([0.0, 0.0], alpha, 0.1, 8.0).expect("sweep stays in budget");
                        Box::new(move |p: &[f64]| f.apply(p))
                    };
                    let res = stability_sweep(&curve, &params, &family, delta, Norm::Euclidean)?;
                    for r in &res.rows {
                        w.write_record([
                            r.param.to_string(),
                            r.report.eps.to_string(),
                            r.report.deviation_fraction.to_string(),
                            r.report.bound_holds.to_string(),
                        ])?;
                    }
                    w.flush()?;
                    if let Some(path) = svg {
                        let f = family(params[0]);
                        let bent: Vec<Vec<f64>> = curve.points.iter().map(|p| f(p)).collect();
                        let doc = render(
                            &[
                                Layer::Polyline { points: &curve.points, color: "black", width: 1.5 },
                                Layer::Polyline { points: &bent, color: "#c0392b", width: 1.5 },
                            ],
                            600.0,
                        );
                        std::fs::write(path, doc)?;
                    }
                }
            }
            Ok(())
        }
        Command::Compose {
            fixture,
            gen,
            eta,
            eps,
            delta,
            mode,
            grid,
            csv,
        } => {
            let fix = FractalFixture::by_name(&fixture, gen)?;
            let mode = match mode {
                ModeArg::Product => ComposeMode::Product,
                ModeArg::Recombine => ComposeMode::Recombine,
            };
            let run = compose_fixture(&fix, mode, eta, eps, delta, grid)?;
            write_compose_csv(&[run.report], csv_sink(csv.as_deref())?)
        }
    }
}

fn run_fragments(action: FragmentAction) -> Result<()> {
    match action {
        FragmentAction::Barycenter { family, boxes } => {
            let eta = FragmentFamily::load(&family)?;
            let region = if boxes.is_empty() {
                Region::All
            } else {
                Region::Boxes(boxes.iter().map(|b| parse_box(b)).collect::<Result<_>>()?)
            };
            println!("{}", barycenter(&eta, &region));
            Ok(())
        }
        FragmentAction::Restrict { family, boxes, out } => {
            let eta = FragmentFamily::load(&family)?;
            let slice: Vec<Aabb> = boxes.iter().map(|b| parse_box(b)).collect::<Result<_>>()?;
            let (op, restricted) = slice_restriction(&eta, &slice)?;
            let (lhs, rhs) = restriction_mass_identity(&eta, &op)?;
            eprintln!("mass removed {lhs} = Σ w(1 − density)·length {rhs}");
            emit(out.as_deref(), &restricted.to_json_string()?)
        }
        FragmentAction::Check {
            family,
            measure,
            granularity,
        } => {
            let eta = FragmentFamily::load(&family)?;
            let mu = DiscreteMeasure::load(&measure)?;
            match alberti_check(&mu, &eta, granularity)? {
                AlbertiOutcome::Dominated => {
                    println!("dominated");
                    Ok(())
                }
                AlbertiOutcome::Violation { atom, point, distance } => Err(Error::Domain(format!(
                    "atom {atom} at {point:?} is {distance} from the barycenter support"
                ))),
            }
        }
    }
}
