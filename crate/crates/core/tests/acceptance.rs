//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line, even
//! under output capture, and the test fails if any criterion does.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lipsquash::compose::{compose_fixture, ComposeMode, DEFAULT_GRID};
use lipsquash::cones::{ConeSpec, Norm, SampledCurve};
use lipsquash::content::{dimension_profile, hausdorff_content, ContentConfig, ProfileConfig};
use lipsquash::fixtures::FractalFixture;
use lipsquash::fragments::{
    restriction_mass_identity, slice_restriction, Aabb, CurveFragment, FragmentFamily,
};
use lipsquash::measure::{averaging_bound, DiscreteMeasure};
use lipsquash::planar::{build_planar_squash, squash_report, GapIntegralMap, IntervalCover};
use lipsquash::realline::{build_h, uniform_grid, SquashProfile};
use lipsquash::stability::{
    perturbed_representation, sawtooth_demo, stability_sweep, AxisGapMap, RadialPerturbation,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn real_line_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let atoms: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mu = DiscreteMeasure::on_line(&atoms, &[1e-3; 1000]).map_err(|e| e.to_string())?;
    let (eta, r, eps) = (0.1, 0.05, 0.01);
    let res = build_h(&mu, eta, r, eps, 1.0).map_err(|e| e.to_string())?;
    let n = res.profile.height;
    ensure(n == 10, format!("N = {n}, expected 10"))?;

    let grid: Vec<f64> = uniform_grid(1.0, 10_000).collect();
    let sup = grid.iter().map(|&t| (res.h(t) - t).abs()).fold(0.0, f64::max);
    ensure(sup < eps, format!("sup deviation {sup} ≥ {eps}"))?;

    let mut sorted = atoms.clone();
    sorted.sort_by(f64::total_cmp);
    // adjacent pairs on the grid and on the atoms bound every pair by the triangle inequality
    for w in grid.windows(2).chain(sorted.windows(2)) {
        let (s, t) = (w[0], w[1]);
        if t > s {
            let ratio = (res.h(t) - res.h(s)).abs() / (t - s);
            ensure(ratio <= n as f64 * (1.0 + 1e-12), format!("local ratio {ratio} at {s}, {t}"))?;
        }
    }
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let gap = sorted[j] - sorted[i];
            if gap >= r {
                let rise = (res.h(sorted[j]) - res.h(sorted[i])).abs();
                ensure(rise <= gap * (1.0 + 1e-12), format!("|h(s)−h(t)| = {rise} > |s−t| = {gap}"))?;
            }
        }
    }
    let mass: f64 = res.retained.len() as f64 * 1e-3;
    ensure(mass >= 0.9 - 1e-12, format!("μ(E) = {mass}"))?;
    let period = res.profile.period;
    let bound = (2.0 / period).ceil() as usize + 2;
    let mut image = res.image_points.clone();
    image.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    ensure(image.len() <= bound, format!("|h(E)| = {} > {bound}", image.len()))?;
    Ok(format!("N = {n}, R = {period:e}, sup = {sup:.2e}, μ(E) = {mass:.3}, |h(E)| = {}", image.len()))
}

fn large_scale_ratio() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    let mut checked = 0usize;
    for _ in 0..20 {
        let period = 10f64.powf(rng.gen_range(-3.0..-0.5));
        let height = rng.gen_range(2..=20);
        let phase = rng.gen_range(0.0..period);
        let p = SquashProfile::new(period, height, phase).map_err(|e| e.to_string())?;
        for _ in 0..100_000 {
            let s = rng.gen_range(-1.0..1.0);
            let gap = rng.gen_range(2.0 * period..1.0);
            let t = s + gap;
            let q = (gap / period).floor();
            let bound = (q + 1.0) / (q - 1.0);
            if (p.g(t) - p.g(s)).abs() > bound * gap * (1.0 + 1e-12) {
                violations += 1;
            }
            checked += 1;
        }
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok(format!("{checked} pairs, 0 violations"))
}

fn planar_pipeline() -> Check {
    let fix = FractalFixture::four_corner(5).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for eps in [0.5, 0.25, 0.125] {
        let (map, checks) = build_planar_squash(&fix, eps).map_err(|e| e.to_string())?;
        let m = squash_report(&fix, &[eps]).map_err(|e| e.to_string())?[0].refinement;
        let cap = (2usize.pow(m) + 1).pow(2);
        ensure(checks.image_count <= cap, format!("ε = {eps}: image {} > {cap}", checks.image_count))?;
        let images: Vec<Vec<f64>> = fix.points.iter().map(|p| map.apply(p)).collect();
        let sup = fix
            .points
            .iter()
            .zip(&images)
            .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        ensure(sup <= 2f64.sqrt() * eps, format!("ε = {eps}: sup {sup}"))?;
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                let d = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                let (dp, di) = (d(&fix.points[i], &fix.points[j]), d(&images[i], &images[j]));
                ensure(di <= dp + 1e-12, format!("ε = {eps}: pair {i},{j} stretched {di} > {dp}"))?;
            }
        }
        out.push(format!("ε={eps}: m={m} |f(S)|={} sup={sup:.3}", checks.image_count));
    }
    Ok(out.join("; "))
}

fn random_fragment(rng: &mut impl Rng) -> CurveFragment {
    let k = rng.gen_range(2..8);
    let t0 = rng.gen_range(0.0..0.3);
    let mut times = vec![t0];
    for _ in 0..k {
        let last = *times.last().unwrap();
        times.push(last + rng.gen_range(0.02..0.09));
    }
    let mut pts = vec![vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]];
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = rng.gen_range(0.0..1.0);
        let last = pts.last().unwrap().clone();
        pts.push(vec![last[0] + dt * speed * a.cos(), last[1] + dt * speed * a.sin()]);
    }
    CurveFragment::polyline(times, pts).expect("1-Lipschitz by construction")
}

fn restriction_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..10);
        let frags: Vec<CurveFragment> = (0..n).map(|_| random_fragment(&mut rng)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let eta = FragmentFamily::new(frags, weights).map_err(|e| e.to_string())?;
        let boxes: Vec<Aabb> = (0..rng.gen_range(1..4))
            .map(|_| {
                let lo: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.1..1.5)).collect();
                Aabb::new(lo, hi).unwrap()
            })
            .collect();
        let (op, _) = slice_restriction(&eta, &boxes).map_err(|e| e.to_string())?;
        let (lhs, rhs) = restriction_mass_identity(&eta, &op).map_err(|e| e.to_string())?;
        worst = worst.max((lhs - rhs).abs());
    }
    ensure(worst <= 1e-9, format!("worst gap {worst}"))?;
    Ok(format!("100 families, worst |lhs − rhs| = {worst:.1e}"))
}

fn averaging() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let n = rng.gen_range(1..50);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let xi: Vec<(f64, f64)> = raw.iter().map(|w| (rng.gen_range(0.0..=1.0), w / total)).collect();
        let mean: f64 = xi.iter().map(|(v, w)| v * w).sum();
        // any A with ∫ξ ≥ 1 − A satisfies the precondition
        let a = (1.0 - mean + rng.gen_range(0.0..0.1)).clamp(0.0, 1.0);
        let out = averaging_bound(&xi, a).map_err(|e| format!("trial {trial}: {e}"))?;
        ensure(out.holds(), format!("trial {trial}: conclusion fails"))?;
    }
    Ok("1000 instances hold".into())
}

fn stability() -> Check {
    let curve = SampledCurve::circle_arc([0.0, 0.0], 1.0, 0.0, std::f64::consts::TAU, 1024).map_err(|e| e.to_string())?;
    let params: Vec<f64> = (0..8).map(|j| 0.2 * 0.5f64.powi(j)).collect();
    let family = |alpha: f64| -> Box<dyn Fn(&[f64]) -> Vec<f64>> {
        let f = RadialPerturbation::new([0.0, 0.0], alpha, 0.1, 8.0).expect("within the Lipschitz budget");
        Box::new(move |p: &[f64]| f.apply(p))
    };
    let mut out = Vec::new();
    for delta in [0.05, 0.1, 0.2] {
        let res = stability_sweep(&curve, &params, &family, delta, Norm::Euclidean).map_err(|e| e.to_string())?;
        let at = res.settled_at.ok_or(format!("δ = {delta}: never settles"))?;
        ensure(res.tail_nonincreasing, format!("δ = {delta}: tail increases"))?;
        out.push(format!("δ={delta}: settles at ε={:.3e}", res.rows[at].report.eps));
    }
    Ok(out.join("; "))
}

fn sawtooth() -> Check {
    let rows = sawtooth_demo(&[4, 16, 64], 0.5, 4).map_err(|e| e.to_string())?;
    for r in &rows {
        let want = 1.0 / (2 * r.teeth) as f64;
        ensure((r.sup_dev - want).abs() <= 1e-9, format!("n = {}: sup {} vs {want}", r.teeth, r.sup_dev))?;
        ensure(r.report.deviation_fraction == 1.0, format!("n = {}: fraction {}", r.teeth, r.report.deviation_fraction))?;
    }
    Ok("sup-dev 1/(2n), fraction 1 for n = 4, 16, 64".into())
}

fn perturbed() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (theta, r, delta) = (0.3, 0.03, 0.5);
    let frags: Vec<CurveFragment> = (0..50)
        .map(|_| {
            let mut pts = vec![vec![rng.gen_range(0.0..0.05), rng.gen_range(0.0..1.0)]];
            for _ in 0..10 {
                let a: f64 = rng.gen_range(-0.6..0.6);
                let speed = rng.gen_range(0.9..1.3);
                let last = pts.last().unwrap().clone();
                pts.push(vec![last[0] + 0.1 * speed * a.cos(), last[1] + 0.1 * speed * a.sin()]);
            }
            let lip = 1.3;
            let pieces = vec![CurveFragment::uniform_piece(0.0, 1.0, pts).unwrap()];
            CurveFragment::new(pieces, lip).unwrap()
        })
        .collect();
    let eta = FragmentFamily::new(frags, vec![0.02; 50]).map_err(|e| e.to_string())?;
    let cone = ConeSpec::centred(vec![1.0, 0.0], theta, Norm::Euclidean).map_err(|e| e.to_string())?;
    let mut losses = Vec::new();
    for i in 0..10 {
        let total = 0.2 * 0.5f64.powi(i);
        let width = total / 8.0;
        let cover = IntervalCover::new(
            (0..8)
                .map(|j| {
                    let c = 0.1 + j as f64 * 0.09;
                    (c - width / 2.0, c + width / 2.0)
                })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let f = AxisGapMap { axis: 0, map: GapIntegralMap::new(cover) };
        let out = perturbed_representation(&eta, &f, &cone, delta, r).map_err(|e| format!("step {i}: {e}"))?;
        ensure(out.certified, format!("step {i}: not certified"))?;
        losses.push(out.mass_loss);
    }
    ensure(losses.windows(2).all(|w| w[1] < w[0]), format!("losses not strictly decreasing: {losses:?}"))?;
    let last = *losses.last().unwrap();
    ensure(last < 1e-3, format!("final loss {last}"))?;
    Ok(format!("mass loss {:.3e} → {last:.3e}", losses[0]))
}

fn content() -> Check {
    let seg: Vec<Vec<f64>> = (0..=1000).map(|i| vec![1.0 + 1e-9 * i as f64 / 1000.0, 0.0]).collect();
    let upper = hausdorff_content(&seg, 1.0, None, &ContentConfig::default()).map_err(|e| e.to_string())?.upper;
    ensure(upper <= 1.0 + 1e-9, format!("segment upper {upper}"))?;
    let unit: Vec<Vec<f64>> = (0..=1000).map(|i| vec![i as f64 / 1000.0, 0.0]).collect();
    let unit_upper = hausdorff_content(&unit, 1.0, None, &ContentConfig::default()).map_err(|e| e.to_string())?.upper;
    ensure(unit_upper <= 1.0 + 1e-9, format!("unit segment upper {unit_upper}"))?;

    let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let finite: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let fine = ProfileConfig { delta: Some(1e-3), ..ProfileConfig::default() };
    let fp = dimension_profile(&finite, &[0.25, 0.5, 1.0], &fine)
        .map_err(|e| e.to_string())?
        .proxy
        .ok_or("finite set: no proxy")?;
    ensure(fp <= 0.25, format!("finite-set proxy {fp}"))?;

    let fix = FractalFixture::four_corner(6).map_err(|e| e.to_string())?;
    let cp = dimension_profile(&fix.points, &grid, &ProfileConfig::default())
        .map_err(|e| e.to_string())?
        .proxy
        .ok_or("four-corner: no proxy")?;
    ensure((0.85..=1.15).contains(&cp), format!("four-corner proxy {cp}"))?;
    Ok(format!("segment {unit_upper:.6}, finite proxy {fp}, four-corner proxy {cp}"))
}

fn cross_module() -> Check {
    let eps = 0.5f64.powi(5);
    let fix = FractalFixture::four_corner(5).map_err(|e| e.to_string())?;
    let (_, planar) = build_planar_squash(&fix, eps).map_err(|e| e.to_string())?;
    let run = compose_fixture(&fix, ComposeMode::Product, 0.1, eps, 0.5, DEFAULT_GRID).map_err(|e| e.to_string())?;
    let c = &run.report;
    ensure(planar.sup_deviation <= planar.sup_bound, format!("planar sup {}", planar.sup_deviation))?;
    ensure(c.deviation_ok && c.sup_dev < eps * 2f64.sqrt(), format!("compose sup {}", c.sup_dev))?;
    let (a, b) = (planar.image_count as f64, c.image_count as f64);
    ensure(a.max(b) <= 2.0 * a.min(b), format!("image counts {a} vs {b}"))?;
    Ok(format!("ε = {eps}: planar |f(S)| = {a}, composed |g(E)| = {b}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check, u64); 10] = [
        ("real-line squashing contract", real_line_contract, 5),
        ("large-scale ratio bound", large_scale_ratio, 5),
        ("planar squashing pipeline", planar_pipeline, 30),
        ("restriction mass identity", restriction_identity, 10),
        ("averaging estimate", averaging, 1),
        ("stability sweep", stability, 10),
        ("sawtooth witness", sawtooth, 2),
        ("perturbed representation", perturbed, 20),
        ("content estimator sanity", content, 60),
        ("cross-module consistency", cross_module, 30),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > Duration::from_secs(*limit) => Err(format!("{msg}; took {took:.2?} > {limit} s")),
            other => other,
        };
        let line = match &outcome {
            Ok(msg) => format!("PASS criterion {}: {name} ({took:.2?}): {msg}", i + 1),
            Err(msg) => format!("FAIL criterion {}: {name} ({took:.2?}): {msg}", i + 1),
        };
        let _ = writeln!(err, "{line}");
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
