//! How derivatives of curves react to uniformly small 1-Lipschitz
//! perturbations, and the perturbed-representation pipeline for fragment
//! families.

use serde::Serialize;

use crate::cones::{ConeKind, ConeSpec, Norm, SampledCurve};
use crate::fragments::{alberti_check, barycenter, barycenter_measure, AlbertiOutcome, FragmentFamily, Region, RestrictionOp};
use crate::geom;
use crate::measure::{averaging_bound, pushforward, Verdict};
use crate::planar::GapIntegralMap;
use crate::{Error, Result};

/// Slack for comparing Lipschitz ratios against 1.
const LIP_TOL: f64 = 1e-12;

/// Whether `f` is 1-Lipschitz on every pair of `points` in `norm`.
pub fn is_one_lipschitz(points: &[Vec<f64>], f: &dyn Fn(&[f64]) -> Vec<f64>, norm: Norm) -> bool {
    let images: Vec<Vec<f64>> = points.iter().map(|p| f(p)).collect();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = norm.dist(&points[i], &points[j]);
            if norm.dist(&images[i], &images[j]) > d * (1.0 + LIP_TOL) + 1e-15 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RectOutcome {
    /// `1 − |u| + 2ε/(b − a)`.
    pub a_value: f64,
    pub sup_deviation: f64,
    pub chord_slope: f64,
    pub threshold: f64,
    /// Fraction of `[a, b]` where `φ((f∘γ)') > 1 − √A`.
    pub fraction: f64,
    pub verdict: Verdict,
    /// `A > 1`: the conclusion says nothing.
    pub vacuous: bool,
}

/// On a curve with chord slope `|u|` and a 1-Lipschitz `f` within `ε` of the
/// identity, `φ((f∘γ)') > 1 − √A` on a fraction at least `1 − √A` of `[a, b]`.
///
/// `phi` is a functional of norm 1 (in `norm`'s dual) with `φ(u) = |u|`.
pub fn rect_estimate_check(
    curve: &SampledCurve,
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    phi: &[f64],
    norm: Norm,
) -> Result<RectOutcome> {
    if !is_one_lipschitz(&curve.points, f, norm) {
        return Err(Error::InvalidInput("the map is not 1-Lipschitz on the samples".into()));
    }
    let dual = norm.dual_eval(phi);
    if (dual - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("φ has dual norm {dual}, expected 1")));
    }
    let n = curve.points.len() - 1;
    let len = curve.end - curve.start;
    let chord = geom::scale(&geom::sub(&curve.points[n], &curve.points[0]), 1.0 / len);
    let chord_slope = norm.eval(&chord);
    if (geom::dot(phi, &chord) - chord_slope).abs() > 1e-9 {
        return Err(Error::InvalidInput("φ does not norm the chord".into()));
    }
    let images: Vec<Vec<f64>> = curve.points.iter().map(|p| f(p)).collect();
    let sup_deviation = curve
        .points
        .iter()
        .zip(&images)
        .map(|(p, q)| norm.dist(p, q))
        .fold(0.0, f64::max);
    let a_value = 1.0 - chord_slope + 2.0 * sup_deviation / len;
    let xi: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let dt = curve.t(i + 1) - curve.t(i);
            let d = geom::scale(&geom::sub(&images[i + 1], &images[i]), 1.0 / dt);
            (geom::dot(phi, &d), dt / len)
        })
        .collect();
    if a_value > 1.0 {
        let threshold = 1.0 - a_value.sqrt();
        let fraction = xi.iter().filter(|(v, _)| *v > threshold).map(|(_, w)| w).sum();
        return Ok(RectOutcome {
            a_value,
            sup_deviation,
            chord_slope,
            threshold,
            fraction,
            verdict: Verdict::Holds,
            vacuous: true,
        });
    }
    let out = averaging_bound(&xi, a_value.max(0.0))?;
    Ok(RectOutcome {
        a_value,
        sup_deviation,
        chord_slope,
        threshold: out.threshold,
        fraction: out.threshold_mass,
        verdict: out.verdict,
        vacuous: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub delta: f64,
    /// Measured sup deviation of `f` from the identity on the curve.
    pub eps: f64,
    pub deviation_fraction: f64,
    pub bound_holds: bool,
    /// False for norms that are not strictly convex: no convergence is claimed.
    pub guaranteed: bool,
}

/// Fraction of parameters where `‖(f∘γ)' − γ'‖ ≥ δ`, with chord derivatives.
pub fn stability_experiment(
    curve: &SampledCurve,
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    delta: f64,
    norm: Norm,
) -> Result<StabilityReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("δ = {delta} must be positive")));
    }
    if !is_one_lipschitz(&curve.points, f, norm) {
        return Err(Error::InvalidInput("the map is not 1-Lipschitz on the samples".into()));
    }
    let images: Vec<Vec<f64>> = curve.points.iter().map(|p| f(p)).collect();
    let eps = curve
        .points
        .iter()
        .zip(&images)
        .map(|(p, q)| norm.dist(p, q))
        .fold(0.0, f64::max);
    let n = curve.segments();
    let mut bad = 0.0;
    for i in 0..n {
        let dt = curve.t(i + 1) - curve.t(i);
        let dg = geom::sub(&curve.points[i + 1], &curve.points[i]);
        let df = geom::sub(&images[i + 1], &images[i]);
        if norm.eval(&geom::sub(&df, &dg)) / dt >= delta {
            bad += dt;
        }
    }
    let deviation_fraction = (bad / (curve.end - curve.start)).clamp(0.0, 1.0);
    Ok(StabilityReport {
        delta,
        eps,
        deviation_fraction,
        bound_holds: deviation_fraction <= delta,
        guaranteed: norm.strictly_convex(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub report: StabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub delta: f64,
    pub rows: Vec<SweepRow>,
    /// First row index from which the bound holds for the rest of the sweep.
    pub settled_at: Option<usize>,
    /// Deviation fractions never increase after `settled_at`.
    pub tail_nonincreasing: bool,
}

/// Runs the experiment over a family of maps indexed by a shrinking parameter.
pub fn stability_sweep(
    curve: &SampledCurve,
    params: &[f64],
    family: &dyn Fn(f64) -> Box<dyn Fn(&[f64]) -> Vec<f64>>,
    delta: f64,
    norm: Norm,
) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(params.len());
    for &p in params {
        let f = family(p);
        rows.push(SweepRow {
            param: p,
            report: stability_experiment(curve, f.as_ref(), delta, norm)?,
        });
    }
    let settled_at = (0..rows.len()).find(|&i| rows[i..].iter().all(|r| r.report.bound_holds));
    let tail_nonincreasing = settled_at.map_or(false, |i| {
        rows[i..]
            .windows(2)
            .all(|w| w[1].report.deviation_fraction <= w[0].report.deviation_fraction)
    });
    Ok(SweepResult {
        delta,
        rows,
        settled_at,
        tail_nonincreasing,
    })
}

/// Radial perturbation `x ↦ c + (1 − a(θ))(x − c)` with
/// `a(θ) = α(1 + β sin kθ)`. It is 1-Lipschitz when `|a'| ≤ a(2 − a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialPerturbation {
    pub center: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl RadialPerturbation {
    pub fn new(center: [f64; 2], alpha: f64, beta: f64, k: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha * (1.0 + beta.abs()) < 1.0) || !(beta.abs() < 1.0) {
            return Err(Error::InvalidInput("need 0 < α(1 + |β|) < 1 and |β| < 1".into()));
        }
        // worst case of |a'| − a(2 − a) over θ
        let worst = alpha * beta.abs() * k.abs() - alpha * (1.0 - beta.abs()) * (2.0 - alpha * (1.0 + beta.abs()));
        if worst > 0.0 {
            return Err(Error::InvalidInput("radial perturbation is not 1-Lipschitz".into()));
        }
        Ok(Self { center, alpha, beta, k })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let theta = dy.atan2(dx);
        let a = self.alpha * (1.0 + self.beta * (self.k * theta).sin());
        vec![self.center[0] + (1.0 - a) * dx, self.center[1] + (1.0 - a) * dy]
    }
}

/// Teeth of amplitude `1/(2n)` and period `1/n` along the first axis.
pub fn sawtooth_offset(t: f64, teeth: usize) -> f64 {
    let n = teeth as f64;
    let phase = (t * n).fract() / n;
    let half = 0.5 / n;
    if phase <= half {
        phase
    } else {
        1.0 / n - phase
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SawtoothRow {
    pub teeth: usize,
    pub sup_dev: f64,
    pub report: StabilityReport,
}

/// The sup-norm counterexample: `γ(t) = t e₁` against its sawtooth `ξ_n`.
///
/// `ξ_n' = e₁ ± e₂` everywhere, so in the sup norm the derivatives stay at
/// distance 1 while `‖ξ_n − γ‖ = 1/(2n)`.
pub fn sawtooth_demo(teeth: &[usize], delta: f64, samples_per_tooth: usize) -> Result<Vec<SawtoothRow>> {
    let mut rows = Vec::with_capacity(teeth.len());
    for &n in teeth {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one tooth".into()));
        }
        // a multiple of 2n keeps every peak and valley on a sample
        let segments = 2 * n * samples_per_tooth.max(1);
        let curve = SampledCurve::from_fn(0.0, 1.0, segments, |t| vec![t, 0.0])?;
        let f = move |x: &[f64]| vec![x[0], x[1] + sawtooth_offset(x[0], n)];
        let report = stability_experiment(&curve, &f, delta, Norm::Sup)?;
        rows.push(SawtoothRow {
            teeth: n,
            sup_dev: report.eps,
            report,
        });
    }
    Ok(rows)
}

/// A map that is linear between known breakpoints along any segment.
pub trait PiecewiseLinearMap {
    fn apply(&self, p: &[f64]) -> Vec<f64>;

    /// Parameters `τ ∈ (0, 1)` along `a + τ(b − a)` where the map changes slope.
    fn breaks(&self, _a: &[f64], _b: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

pub struct Identity;

impl PiecewiseLinearMap for Identity {
    fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.to_vec()
    }
}

/// Rotation of the first two coordinates.
pub struct Rotation(pub f64);

impl PiecewiseLinearMap for Rotation {
    fn apply(&self, p: &[f64]) -> Vec<f64> {
        let (s, c) = self.0.sin_cos();
        let mut out = p.to_vec();
        out[0] = c * p[0] - s * p[1];
        out[1] = s * p[0] + c * p[1];
        out
    }
}

/// Gap-integral map applied to one coordinate, identity on the others.
pub struct AxisGapMap {
    pub axis: usize,
    pub map: GapIntegralMap,
}

impl PiecewiseLinearMap for AxisGapMap {
    fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = p.to_vec();
        out[self.axis] = self.map.eval(p[self.axis]);
        out
    }

    fn breaks(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let (x0, x1) = (a[self.axis], b[self.axis]);
        if x0 == x1 {
            return Vec::new();
        }
        self.map
            .breakpoints()
            .into_iter()
            .map(|x| (x - x0) / (x1 - x0))
            .filter(|tau| *tau > 0.0 && *tau < 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedOutcome {
    pub restriction: RestrictionOp,
    pub restricted: FragmentFamily,
    pub pushed: FragmentFamily,
    /// `(B(η) − B(η_restricted))(X)`.
    pub mass_loss: f64,
    /// Pushed family lies in the widened cone with the slackened speed.
    pub certified: bool,
    /// The pushed barycenter of the restriction is dominated by the barycenter
    /// of the pushed family at the checked granularity.
    pub dominated: bool,
}

const DOMINATION_GRANULARITY: f64 = 1e-3;

/// Restricts `eta` to where `f` keeps derivatives in the cone widened by `r`
/// with speed at least `delta_speed − r`, then pushes it through `f`.
pub fn perturbed_representation(
    eta: &FragmentFamily,
    f: &dyn PiecewiseLinearMap,
    cone: &ConeSpec,
    delta_speed: f64,
    r: f64,
) -> Result<PerturbedOutcome> {
    if !matches!(cone.kind, ConeKind::Centred { .. }) {
        return Err(Error::InvalidInput("the pipeline needs a centred cone".into()));
    }
    if !(r > 0.0) || !(delta_speed > r) || cone.theta + r >= 1.0 {
        return Err(Error::InvalidInput("need 0 < r < δ and θ + r < 1".into()));
    }
    let norm = cone.norm;
    let speed = |v: &[f64]| norm.eval(v);
    for (i, (frag, _)) in eta.iter().enumerate() {
        for seg in frag.segments() {
            let v = seg.velocity();
            if speed(&v) < delta_speed * (1.0 - 1e-12) || !cone.contains(&v) {
                return Err(Error::Precondition(format!(
                    "fragment {i} near t = {} has speed {} or leaves the cone",
                    seg.t0,
                    speed(&v)
                )));
            }
        }
    }
    let knots: Vec<Vec<f64>> = eta
        .iter()
        .flat_map(|(frag, _)| frag.pieces().iter().flat_map(|p| p.points.iter().cloned()))
        .collect();
    if !is_one_lipschitz(&knots, &|p| f.apply(p), norm) {
        return Err(Error::InvalidInput("the map is not 1-Lipschitz on the family's knots".into()));
    }

    let apply = |p: &[f64]| f.apply(p);
    let wide = cone.widened(cone.theta + r)?;
    let mut kept = Vec::with_capacity(eta.len());
    for (frag, _) in eta.iter() {
        let extra = extra_times(frag, f);
        let pushed = frag.pushed(&apply, &extra, frag.lipschitz())?;
        let good: Vec<(f64, f64)> = pushed
            .segments()
            .filter(|s| {
                let v = s.velocity();
                speed(&v) >= delta_speed - r && wide.contains(&v)
            })
            .map(|s| (s.t0, s.t1))
            .collect();
        kept.push(geom::merge_intervals(good));
    }
    let restriction = RestrictionOp::from_kept(eta, kept)?;
    let restricted = restriction.apply(eta)?;
    let mut pushed_frags = Vec::with_capacity(restricted.len());
    for (frag, _) in restricted.iter() {
        pushed_frags.push(frag.pushed(&apply, &extra_times(frag, f), frag.lipschitz())?);
    }
    let mut pushed = FragmentFamily::new(pushed_frags, restricted.weights().to_vec())?;
    pushed.injective = restricted.injective;

    let mass_loss = barycenter(eta, &Region::All) - barycenter(&restricted, &Region::All);
    let slack = wide.widened((wide.theta * (1.0 + 1e-12)).min(1.0 - 1e-15))?;
    let certified = pushed.iter().all(|(frag, _)| {
        frag.segments().all(|s| {
            let v = s.velocity();
            speed(&v) >= (delta_speed - r) * (1.0 - 1e-12) && slack.contains(&v)
        })
    });
    if !certified {
        return Err(Error::contract(
            "pushed family direction",
            "a pushed segment leaves the widened cone or is too slow",
        ));
    }
    let dominated = if restricted.is_empty() {
        true
    } else {
        let bary = barycenter_measure(&restricted, DOMINATION_GRANULARITY)?;
        let pushed_bary = pushforward(&bary, |p| Ok(f.apply(p)))?;
        let mut plain = pushed.clone();
        plain.injective = false;
        matches!(
            alberti_check(&pushed_bary, &plain, DOMINATION_GRANULARITY)?,
            AlbertiOutcome::Dominated
        )
    };
    Ok(PerturbedOutcome {
        restriction,
        restricted,
        pushed,
        mass_loss,
        certified,
        dominated,
    })
}

fn extra_times(frag: &crate::fragments::CurveFragment, f: &dyn PiecewiseLinearMap) -> Vec<f64> {
    let mut out = Vec::new();
    for s in frag.segments() {
        // breaks that land on an endpoint up to rounding would leave slivers
        for tau in f.breaks(s.x0, s.x1).into_iter().filter(|tau| *tau > 1e-9 && *tau < 1.0 - 1e-9) {
            out.push(s.t0 + tau * s.duration());
        }
    }
    out
}
