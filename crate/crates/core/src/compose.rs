//! Real-valued perturbations built by composing a line squash with a locally
//! flat map, Lipschitz extension with controlled error, and recombination of
//! scalar perturbations into a vector-valued map.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::Serialize;

use crate::content::{hausdorff_content, ContentConfig};
use crate::fixtures::{Axis, FractalFixture};
use crate::geom;
use crate::measure::{pushforward, DiscreteMeasure};
use crate::planar::{project_cover, GapIntegralMap, DEFAULT_MAX_GENERATION};
use crate::realline::{build_h, SquashResult};
use crate::{Error, Result};

pub type Metric = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type Scalar = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

const PAIR_TOL: f64 = 1e-12;

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + PAIR_TOL) + PAIR_TOL * 1e-3
}

/// `x ↦ min_i (v_i + L·d(x, s_i))`.
#[derive(Clone)]
pub struct McShane {
    samples: Vec<Vec<f64>>,
    values: Vec<f64>,
    lip: f64,
    metric: Metric,
}

impl std::fmt::Debug for McShane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("McShane")
            .field("samples", &self.samples.len())
            .field("lip", &self.lip)
            .finish()
    }
}

impl McShane {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.samples
            .iter()
            .zip(&self.values)
            .map(|(s, v)| v + self.lip * (self.metric)(x, s))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

pub fn mcshane_extend(sample_values: Vec<(Vec<f64>, f64)>, metric: Metric, lip: f64) -> Result<McShane> {
    if sample_values.is_empty() {
        return Err(Error::InvalidInput("no samples to extend from".into()));
    }
    if !(lip >= 0.0) || !lip.is_finite() {
        return Err(Error::InvalidInput(format!("Lipschitz constant {lip} is invalid")));
    }
    let (samples, values): (Vec<_>, Vec<_>) = sample_values.into_iter().unzip();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d = metric(&samples[i], &samples[j]);
            if !within((values[i] - values[j]).abs(), lip * d) {
                return Err(Error::InvalidInput(format!(
                    "samples {i} {:?} and {j} {:?} violate the Lipschitz bound: |{} − {}| > {lip}·{d}",
                    samples[i], samples[j], values[i], values[j]
                )));
            }
        }
    }
    Ok(McShane {
        samples,
        values,
        lip,
        metric,
    })
}

/// Largest `Δ`, then largest `ε₀`, on the 1-2-5 decade grid with
/// `ε₀ ≤ δΔ` and `Δ(2 Lip(φ) + δ) + ε₀ < ε`.
pub fn extension_parameters(lip_phi: f64, delta: f64, eps: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) || !(eps > 0.0) || !(lip_phi >= 0.0) {
        return Err(Error::InvalidInput("need δ > 0, ε > 0 and Lip(φ) ≥ 0".into()));
    }
    let slope = 2.0 * lip_phi + delta;
    let grid = decade_grid(eps);
    for &buffer in &grid {
        if buffer * slope >= eps {
            continue;
        }
        let room = eps - buffer * slope;
        if let Some(&e0) = grid.iter().find(|&&e| within(e, delta * buffer) && e < room) {
            return Ok((buffer, e0));
        }
    }
    Err(Error::Parameter(format!(
        "no grid pair: need Δ < ε/(2Lip(φ)+δ) = {} and ε₀ ≤ min(δΔ, ε − Δ(2Lip(φ)+δ))",
        eps / slope
    )))
}

/// Values `m·10^k`, `m ∈ {5, 2, 1}`, from just above `top` down to 1e-18.
fn decade_grid(top: f64) -> Vec<f64> {
    let k_hi = top.log10().ceil() as i32 + 1;
    let mut out = Vec::new();
    for k in (-18..=k_hi).rev() {
        for m in [5, 2, 1] {
            out.push(format!("{m}e{k}").parse().expect("decimal literal"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtensionChecks {
    pub sup_deviation: f64,
    pub deviation_ok: bool,
    pub max_pair_excess: f64,
    pub lipschitz_ok: bool,
    pub points_checked: usize,
}

/// An extension `G` with `|G(x) − G(y)| ≤ |φ(x) − φ(y)| + δ d(x, y)` and
/// `|G − φ| < ε`, pinned to `φ` away from the samples.
#[derive(Debug, Clone)]
pub struct ErrorExtension {
    pub inner: McShane,
    pub buffer: f64,
    pub eps0: f64,
    pub eps: f64,
    pub delta: f64,
    pub checks: ExtensionChecks,
}

impl ErrorExtension {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.inner.eval(x)
    }
}

/// The metric `|φ(x) − φ(y)| + δ d(x, y)`.
pub fn phi_metric(phi: Scalar, delta: f64) -> Metric {
    Arc::new(move |x: &[f64], y: &[f64]| (phi(x) - phi(y)).abs() + delta * geom::dist(x, y))
}

pub fn extend_with_error(
    samples: &[Vec<f64>],
    values: &[f64],
    phi: Scalar,
    lip_phi: f64,
    delta: f64,
    eps: f64,
    grid: &[Vec<f64>],
) -> Result<ErrorExtension> {
    if samples.len() != values.len() || samples.is_empty() {
        return Err(Error::InvalidInput("need one value per sample".into()));
    }
    let (buffer, eps0) = extension_parameters(lip_phi, delta, eps)?;
    if let Some(i) = (0..samples.len()).find(|&i| !((values[i] - phi(&samples[i])).abs() < eps0)) {
        return Err(Error::Precondition(format!(
            "sample {i} is {} away from φ (need < ε₀ = {eps0})",
            (values[i] - phi(&samples[i])).abs()
        )));
    }
    let metric = phi_metric(phi.clone(), delta);
    let mut anchors: Vec<(Vec<f64>, f64)> = samples.iter().cloned().zip(values.iter().copied()).collect();
    for q in grid {
        let near = samples.iter().map(|s| geom::dist(q, s)).fold(f64::INFINITY, f64::min);
        if near >= buffer {
            anchors.push((q.clone(), phi(q)));
        }
    }
    let inner = mcshane_extend(anchors, metric.clone(), 1.0).map_err(|e| match e {
        Error::InvalidInput(m) => Error::Precondition(m),
        other => other,
    })?;

    let pts: Vec<&Vec<f64>> = grid.iter().chain(samples.iter()).collect();
    let vals: Vec<f64> = pts.iter().map(|p| inner.eval(p)).collect();
    let sup_deviation = pts
        .iter()
        .zip(&vals)
        .map(|(p, v)| (v - phi(p)).abs())
        .fold(0.0, f64::max);
    let mut max_pair_excess = f64::NEG_INFINITY;
    let mut lipschitz_ok = true;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let bound = metric(pts[i], pts[j]);
            let rise = (vals[i] - vals[j]).abs();
            max_pair_excess = max_pair_excess.max(rise - bound);
            if !within(rise, bound) {
                lipschitz_ok = false;
            }
        }
    }
    let checks = ExtensionChecks {
        sup_deviation,
        deviation_ok: sup_deviation < eps,
        max_pair_excess: max_pair_excess.max(0.0),
        lipschitz_ok,
        points_checked: pts.len(),
    };
    if !checks.deviation_ok {
        return Err(Error::contract("|G − φ| < ε", format!("{checks:?}")));
    }
    if !checks.lipschitz_ok {
        return Err(Error::contract("G is 1-Lipschitz for |φx − φy| + δd", format!("{checks:?}")));
    }
    Ok(ErrorExtension {
        inner,
        buffer,
        eps0,
        eps,
        delta,
        checks,
    })
}

/// Returns `r = ρδ` after checking that distinct values within `r` have
/// fibers at least `|s − t|/δ` apart.
pub fn flatness_pushforward_radius(samples: &[Vec<f64>], values: &[f64], rho: f64, delta: f64) -> Result<f64> {
    if samples.len() != values.len() {
        return Err(Error::InvalidInput("need one value per sample".into()));
    }
    if !(rho > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidInput("ρ and δ must be positive".into()));
    }
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d = geom::dist(&samples[i], &samples[j]);
            if d <= rho && !within((values[i] - values[j]).abs(), delta * d) {
                return Err(Error::InvalidInput(format!(
                    "samples {i} and {j} at distance {d} ≤ ρ break flatness: |Δf| = {}",
                    (values[i] - values[j]).abs()
                )));
            }
        }
    }
    let r = rho * delta;
    // fibers keyed by exact value
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut fibers: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in order {
        match fibers.last_mut() {
            Some((v, members)) if v.to_bits() == values[i].to_bits() => members.push(i),
            _ => fibers.push((values[i], vec![i])),
        }
    }
    for a in 0..fibers.len() {
        for b in a + 1..fibers.len() {
            let gap = fibers[b].0 - fibers[a].0;
            if gap > r {
                break;
            }
            let sep = fibers[a]
                .1
                .iter()
                .flat_map(|&i| fibers[b].1.iter().map(move |&j| (i, j)))
                .map(|(i, j)| geom::dist(&samples[i], &samples[j]))
                .fold(f64::INFINITY, f64::min);
            if !within(gap / delta, sep) {
                return Err(Error::contract(
                    "fiber separation",
                    format!("values {} and {} have fibers {sep} apart", fibers[a].0, fibers[b].0),
                ));
            }
        }
    }
    Ok(r)
}

/// A locally flat real-valued perturbation of `T∘F` on a finite sample set.
#[derive(Clone)]
pub struct BasicPerturbationOracle {
    pub samples: Vec<Vec<f64>>,
    pub f_values: Vec<f64>,
    pub target: Scalar,
    pub rho: f64,
    pub theta: f64,
    pub target_norm: f64,
    pub map_lipschitz: f64,
    /// The declared `ε₀`; `f` stays within `ε₀/2` of the target.
    pub eps0: f64,
}

impl std::fmt::Debug for BasicPerturbationOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasicPerturbationOracle")
            .field("samples", &self.samples.len())
            .field("rho", &self.rho)
            .field("theta", &self.theta)
            .field("eps0", &self.eps0)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleChecks {
    pub max_target_gap: f64,
    pub max_excess: f64,
    pub max_local_excess: f64,
}

/// Produces oracles for a requested width and error budget.
pub trait PerturbationSource {
    fn oracle(&self, theta: f64, eps0: f64) -> Result<BasicPerturbationOracle>;
}

impl BasicPerturbationOracle {
    /// `3(1 − θ)‖T‖Lip(F)`.
    pub fn flat_factor(&self) -> f64 {
        3.0 * (1.0 - self.theta) * self.target_norm * self.map_lipschitz
    }

    pub fn target_values(&self) -> Vec<f64> {
        self.samples.iter().map(|p| (self.target)(p)).collect()
    }

    /// Checks the three oracle contracts on every sample pair.
    pub fn verify(&self) -> Result<OracleChecks> {
        if self.samples.len() != self.f_values.len() {
            return Err(Error::InvalidInput("need one value per sample".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) || !(self.rho > 0.0) || !(self.eps0 > 0.0) {
            return Err(Error::InvalidInput("need θ ∈ (0, 1), ρ > 0, ε₀ > 0".into()));
        }
        let tf = self.target_values();
        let k = self.flat_factor();
        let max_target_gap = tf
            .iter()
            .zip(&self.f_values)
            .map(|(t, f)| (t - f).abs())
            .fold(0.0, f64::max);
        if !(max_target_gap < self.eps0 / 2.0) {
            return Err(Error::contract(
                "|T∘F − f| < ε₀/2",
                format!("gap {max_target_gap} vs ε₀/2 = {}", self.eps0 / 2.0),
            ));
        }
        let mut max_excess = f64::NEG_INFINITY;
        let mut max_local_excess = f64::NEG_INFINITY;
        let n = self.samples.len();
        for i in 0..n {
            for j in i + 1..n {
                let d = geom::dist(&self.samples[i], &self.samples[j]);
                let rise = (self.f_values[i] - self.f_values[j]).abs();
                let bound = (tf[i] - tf[j]).abs() + k * d;
                max_excess = max_excess.max(rise - bound);
                if !within(rise, bound) {
                    return Err(Error::contract(
                        "|f(y) − f(z)| ≤ |T(F(y) − F(z))| + 3(1−θ)‖T‖Lip(F) d(y, z)",
                        format!("samples {i} and {j}"),
                    ));
                }
                if d <= self.rho {
                    max_local_excess = max_local_excess.max(rise - k * d);
                    if !within(rise, k * d) {
                        return Err(Error::contract(
                            "local flatness within ρ",
                            format!("samples {i} and {j} at distance {d}"),
                        ));
                    }
                }
            }
        }
        Ok(OracleChecks {
            max_target_gap,
            max_excess: max_excess.max(0.0),
            max_local_excess: max_local_excess.max(0.0),
        })
    }
}

/// Oracle for an axis projection of a fixture with null projections: the
/// gap-integral map of a short cover of the projected attractor.
#[derive(Debug, Clone)]
pub struct AxisGapOracle<'a> {
    pub fixture: &'a FractalFixture,
    pub axis: Axis,
}

impl PerturbationSource for AxisGapOracle<'_> {
    fn oracle(&self, theta: f64, eps0: f64) -> Result<BasicPerturbationOracle> {
        let (cover, _) = project_cover(self.fixture, self.axis, 0.999 * eps0 / 2.0, DEFAULT_MAX_GENERATION)?;
        let map = GapIntegralMap::new(cover);
        let i = self.axis.index();
        let samples = self.fixture.points.clone();
        let f_values = samples.iter().map(|p| map.eval(p[i])).collect();
        let spread = geom::dist(
            &bounding_lo(&samples),
            &bounding_hi(&samples),
        )
        .max(1.0);
        let rho = map.cover().min_gap().min(2.0 * spread);
        Ok(BasicPerturbationOracle {
            samples,
            f_values,
            target: Arc::new(move |p: &[f64]| p[i]),
            rho,
            theta,
            target_norm: 1.0,
            map_lipschitz: 1.0,
            eps0,
        })
    }
}

impl AxisGapOracle<'_> {
    /// Refinement generation of the cover used at budget `eps0`.
    pub fn refinement(&self, eps0: f64) -> Result<(u32, f64)> {
        let (cover, m) = project_cover(self.fixture, self.axis, 0.999 * eps0 / 2.0, DEFAULT_MAX_GENERATION)?;
        Ok((m, cover.total_length()))
    }
}

fn bounding_lo(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points[0].len();
    (0..k).map(|i| points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min)).collect()
}

fn bounding_hi(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points[0].len();
    (0..k).map(|i| points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max)).collect()
}

/// Regular grid over the samples' bounding box widened by `margin` on each side.
pub fn ambient_grid(samples: &[Vec<f64>], per_axis: usize, margin: f64) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() || per_axis < 2 {
        return Err(Error::InvalidInput("need samples and at least two grid points per axis".into()));
    }
    let lo: Vec<f64> = bounding_lo(samples).iter().map(|x| x - margin).collect();
    let hi: Vec<f64> = bounding_hi(samples).iter().map(|x| x + margin).collect();
    let k = lo.len();
    let total = (per_axis as f64).powi(k as i32);
    if total > 1e6 {
        return Err(Error::Parameter(format!("grid would have {total} points")));
    }
    let mut out = vec![Vec::with_capacity(k)];
    for i in 0..k {
        let (start, step) = (lo[i], (hi[i] - lo[i]) / (per_axis - 1) as f64);
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                (0..per_axis).map(move |j| {
                    let mut q = p.clone();
                    q.push(start + j as f64 * step);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComposeParams {
    pub delta: f64,
    pub eps: f64,
    pub eta: f64,
    pub theta: f64,
    pub eps0: f64,
    pub buffer: f64,
    /// Scale above which the line squash is 1-Lipschitz.
    pub r: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComposeChecks {
    pub sample_excess: f64,
    pub lipschitz_ok: bool,
    pub sample_deviation: f64,
    pub grid_deviation: f64,
    pub deviation_ok: bool,
    pub retained_mass: f64,
    pub mass_ok: bool,
    pub image_count: usize,
}

#[derive(Debug, Clone)]
pub struct ComposedSquash {
    pub g: ErrorExtension,
    /// Indices into the samples of the retained set.
    pub retained: Vec<usize>,
    pub finite_image: Vec<f64>,
    pub line: SquashResult,
    pub params: ComposeParams,
    pub checks: ComposeChecks,
}

impl ComposedSquash {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.g.eval(x)
    }
}

/// Height of the line squash for a mass budget `η`.
pub fn squash_height(eta: f64) -> f64 {
    ((1.0 / eta) - 1e-9).ceil().max(2.0)
}

/// Width that makes `L·3(1 − θ) = δ`.
pub fn theta_for(eta: f64, delta: f64) -> f64 {
    1.0 - delta / (3.0 * squash_height(eta))
}

/// `g = h∘f` on the samples, extended to the grid, with every contract checked.
pub fn compose_squash(
    oracle: &BasicPerturbationOracle,
    mu: &DiscreteMeasure,
    eta: f64,
    eps: f64,
    delta: f64,
    grid: &[Vec<f64>],
) -> Result<ComposedSquash> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!("η = {eta} must lie in (0, 1) so that N ≥ 2")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("δ = {delta} must be positive")));
    }
    let lipschitz = squash_height(eta);
    if !within(lipschitz * 3.0 * (1.0 - oracle.theta), delta) {
        return Err(Error::Parameter(format!(
            "θ = {} is too small: L·3(1 − θ) = {} > δ = {delta}",
            oracle.theta,
            lipschitz * 3.0 * (1.0 - oracle.theta)
        )));
    }
    let lip_phi = oracle.target_norm * oracle.map_lipschitz;
    let slack = delta * lip_phi;
    let (buffer, eps0) = extension_parameters(lip_phi, slack, eps)?;
    if oracle.eps0 > eps0 {
        return Err(Error::Precondition(format!(
            "oracle declares ε₀ = {} but the extension needs ≤ {eps0}",
            oracle.eps0
        )));
    }
    oracle.verify()?;
    let r = flatness_pushforward_radius(&oracle.samples, &oracle.f_values, oracle.rho, oracle.flat_factor())?;

    let index_of = |p: &[f64]| -> Result<usize> {
        oracle
            .samples
            .iter()
            .position(|s| s.as_slice() == p)
            .ok_or_else(|| Error::Precondition(format!("atom {p:?} is not a sample")))
    };
    let atom_index: Vec<usize> = mu.points().iter().map(|p| index_of(p)).collect::<Result<_>>()?;
    let nu = pushforward(mu, |p| Ok(vec![oracle.f_values[index_of(p)?]]))?;
    let half_width = oracle.f_values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (1.0 + 1e-12) + 1e-12;
    let line = build_h(&nu, eta, r, eps0 / 2.0, half_width)?;

    let g_values: Vec<f64> = oracle.f_values.iter().map(|&v| line.h(v)).collect();
    let tf = oracle.target_values();
    let n = oracle.samples.len();
    let mut sample_excess = f64::NEG_INFINITY;
    let mut lipschitz_ok = true;
    for i in 0..n {
        for j in i + 1..n {
            let bound = (tf[i] - tf[j]).abs() + slack * geom::dist(&oracle.samples[i], &oracle.samples[j]);
            let rise = (g_values[i] - g_values[j]).abs();
            sample_excess = sample_excess.max(rise - bound);
            lipschitz_ok &= within(rise, bound);
        }
    }
    if !lipschitz_ok {
        return Err(Error::contract(
            "|g(y) − g(z)| ≤ |T(F(y) − F(z))| + δ‖T‖Lip(F) d(y, z)",
            format!("excess {sample_excess} on samples"),
        ));
    }
    let g = extend_with_error(&oracle.samples, &g_values, oracle.target.clone(), lip_phi, slack, eps, grid)?;

    let kept: HashSet<usize> = line.retained.iter().copied().collect();
    let retained: Vec<usize> = atom_index
        .iter()
        .filter(|&&s| nu.find(&[oracle.f_values[s]]).map_or(false, |a| kept.contains(&a)))
        .copied()
        .collect();
    let retained_mass = mu
        .points()
        .iter()
        .zip(mu.weights())
        .zip(&atom_index)
        .filter(|(_, s)| retained.contains(s))
        .map(|((_, w), _)| w)
        .sum::<f64>();
    let image: BTreeSet<u64> = retained.iter().map(|&s| g.eval(&oracle.samples[s]).to_bits()).collect();
    let finite_image: Vec<f64> = {
        let mut v: Vec<f64> = image.iter().map(|b| f64::from_bits(*b)).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let sample_deviation = (0..n).map(|i| (g_values[i] - tf[i]).abs()).fold(0.0, f64::max);
    let checks = ComposeChecks {
        sample_excess: sample_excess.max(0.0),
        lipschitz_ok: lipschitz_ok && g.checks.lipschitz_ok,
        sample_deviation,
        grid_deviation: g.checks.sup_deviation,
        deviation_ok: sample_deviation < eps && g.checks.deviation_ok,
        retained_mass,
        mass_ok: retained_mass >= 1.0 - eta - 1e-12,
        image_count: finite_image.len(),
    };
    if !checks.mass_ok {
        return Err(Error::contract("μ(E) ≥ 1 − η", format!("{checks:?}")));
    }
    Ok(ComposedSquash {
        g,
        retained,
        finite_image,
        line,
        params: ComposeParams {
            delta,
            eps,
            eta,
            theta: oracle.theta,
            eps0,
            buffer,
            r,
            lipschitz,
        },
        checks,
    })
}

/// `σ(x) = P F(x) + Σ_{i>d} g_i(x) b_i` for an orthonormal basis whose first
/// `d` vectors span the kept subspace.
pub struct Recombination<'a> {
    pub basis: Vec<Vec<f64>>,
    pub kept: usize,
    map: &'a dyn Fn(&[f64]) -> Vec<f64>,
    coords: Vec<&'a dyn Fn(&[f64]) -> f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecombineChecks {
    pub max_ratio: f64,
    pub bound: f64,
    pub lipschitz_ok: bool,
}

pub fn coordinate_recombine<'a>(
    map: &'a dyn Fn(&[f64]) -> Vec<f64>,
    coords: Vec<&'a dyn Fn(&[f64]) -> f64>,
    basis: Vec<Vec<f64>>,
    kept: usize,
) -> Result<Recombination<'a>> {
    let m = basis.len();
    if m == 0 || basis.iter().any(|b| b.len() != m) {
        return Err(Error::InvalidInput("basis must be square".into()));
    }
    for i in 0..m {
        for j in 0..m {
            let want = if i == j { 1.0 } else { 0.0 };
            if (geom::dot(&basis[i], &basis[j]) - want).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("basis vectors {i} and {j} are not orthonormal")));
            }
        }
    }
    if kept > m || coords.len() != m - kept {
        return Err(Error::InvalidInput(format!(
            "need {} scalar maps for a {kept}-dimensional kept subspace",
            m.saturating_sub(kept)
        )));
    }
    Ok(Recombination {
        basis,
        kept,
        map,
        coords,
    })
}

impl Recombination<'_> {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let fx = (self.map)(x);
        let mut out = vec![0.0; self.basis.len()];
        for b in &self.basis[..self.kept] {
            let c = geom::dot(b, &fx);
            out = geom::add(&out, &geom::scale(b, c));
        }
        for (b, g) in self.basis[self.kept..].iter().zip(&self.coords) {
            out = geom::add(&out, &geom::scale(b, g(x)));
        }
        out
    }

    /// `Lip(σ) ≤ Lip(F) + δ√m` on all sample pairs.
    pub fn check(&self, samples: &[Vec<f64>], map_lipschitz: f64, delta: f64) -> RecombineChecks {
        let bound = map_lipschitz + delta * (self.basis.len() as f64).sqrt();
        let images: Vec<Vec<f64>> = samples.iter().map(|p| self.eval(p)).collect();
        let mut max_ratio: f64 = 0.0;
        let mut ok = true;
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let d = geom::dist(&samples[i], &samples[j]);
                let rise = geom::dist(&images[i], &images[j]);
                if d > 0.0 {
                    max_ratio = max_ratio.max(rise / d);
                }
                ok &= within(rise, bound * d);
            }
        }
        RecombineChecks {
            max_ratio,
            bound,
            lipschitz_ok: ok,
        }
    }

    /// Number of affine `d`-planes `⋂_{i>d} (b_i^*)^{-1}(H_i)` that hold the
    /// images of `points`; errors if some coordinate misses its finite set.
    pub fn affine_pieces(&self, points: &[Vec<f64>], finite_sets: &[Vec<f64>]) -> Result<usize> {
        if finite_sets.len() != self.coords.len() {
            return Err(Error::InvalidInput("one finite set per perturbed coordinate".into()));
        }
        let mut pieces: HashSet<Vec<u64>> = HashSet::new();
        for p in points {
            let y = self.eval(p);
            let mut key = Vec::with_capacity(finite_sets.len());
            for (b, set) in self.basis[self.kept..].iter().zip(finite_sets) {
                let c = geom::dot(b, &y);
                let hit = set.iter().find(|h| (*h - c).abs() <= 1e-12 * (1.0 + c.abs()));
                match hit {
                    Some(h) => key.push(h.to_bits()),
                    None => {
                        return Err(Error::contract(
                            "image in finitely many affine planes",
                            format!("point {p:?} has coordinate {c} outside its finite set"),
                        ))
                    }
                }
            }
            pieces.insert(key);
        }
        Ok(pieces.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComposeMode {
    /// Both coordinates squashed: finitely many image points.
    Product,
    /// First coordinate kept: finitely many horizontal lines.
    Recombine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComposeReport {
    pub mode: ComposeMode,
    pub eps: f64,
    pub refinement: u32,
    /// Points in product mode, lines in recombine mode.
    pub image_count: usize,
    pub sup_dev: f64,
    pub h1_content_upper: f64,
    pub retained_mass: f64,
    pub lipschitz_ok: bool,
    pub deviation_ok: bool,
    pub finite_image_ok: bool,
    pub mass_ok: bool,
    pub recombine: RecombineChecks,
}

pub struct ComposeRun {
    pub report: ComposeReport,
    pub axes: Vec<ComposedSquash>,
}

pub const DEFAULT_GRID: usize = 40;

/// Runs the composition on each perturbed axis of a fixture and recombines.
pub fn compose_fixture(
    fix: &FractalFixture,
    mode: ComposeMode,
    eta: f64,
    eps: f64,
    delta: f64,
    grid_per_axis: usize,
) -> Result<ComposeRun> {
    if !fix.ifs.null_projections {
        return Err(Error::Precondition("the axis oracle needs null projections".into()));
    }
    let mu = fix.natural_measure()?;
    let grid = ambient_grid(&fix.points, grid_per_axis, 0.1)?;
    let theta = theta_for(eta, delta);
    let (_, eps0) = extension_parameters(1.0, delta, eps)?;
    let axes: Vec<Axis> = match mode {
        ComposeMode::Product => vec![Axis::X, Axis::Y],
        ComposeMode::Recombine => vec![Axis::Y],
    };
    let mut runs = Vec::with_capacity(axes.len());
    let mut refinement = 0;
    for &axis in &axes {
        let source = AxisGapOracle { fixture: fix, axis };
        refinement = refinement.max(source.refinement(eps0)?.0);
        let oracle = source.oracle(theta, eps0)?;
        runs.push(compose_squash(&oracle, &mu, eta, eps, delta, &grid)?);
    }

    let identity = |p: &[f64]| p.to_vec();
    let coords: Vec<Box<dyn Fn(&[f64]) -> f64 + '_>> = runs
        .iter()
        .map(|run| Box::new(move |p: &[f64]| run.eval(p)) as Box<dyn Fn(&[f64]) -> f64>)
        .collect();
    let coord_refs: Vec<&dyn Fn(&[f64]) -> f64> = coords.iter().map(|b| b.as_ref()).collect();
    let kept = 2 - runs.len();
    let sigma = coordinate_recombine(&identity, coord_refs, vec![vec![1.0, 0.0], vec![0.0, 1.0]], kept)?;
    let recombine = sigma.check(&fix.points, 1.0, delta);

    let retained: Vec<usize> = (0..fix.points.len())
        .filter(|i| runs.iter().all(|run| run.retained.binary_search(i).is_ok()))
        .collect();
    let retained_mass = retained.iter().map(|&i| mu.weights()[i]).sum::<f64>();
    let e_points: Vec<Vec<f64>> = retained.iter().map(|&i| fix.points[i].clone()).collect();
    let sets: Vec<Vec<f64>> = runs.iter().map(|r| r.finite_image.clone()).collect();
    let pieces = sigma.affine_pieces(&e_points, &sets);
    let images: Vec<Vec<f64>> = fix.points.iter().map(|p| sigma.eval(p)).collect();
    let sup_dev = fix
        .points
        .iter()
        .zip(&images)
        .map(|(p, q)| geom::dist(p, q))
        .fold(0.0, f64::max);
    let h1 = hausdorff_content(&images, 1.0, None, &ContentConfig::default())?.upper;
    let report = ComposeReport {
        mode,
        eps,
        refinement,
        image_count: *pieces.as_ref().unwrap_or(&0),
        sup_dev,
        h1_content_upper: h1,
        retained_mass,
        lipschitz_ok: recombine.lipschitz_ok && runs.iter().all(|r| r.checks.lipschitz_ok),
        deviation_ok: sup_dev <= (runs.len() as f64).sqrt() * eps && runs.iter().all(|r| r.checks.deviation_ok),
        finite_image_ok: pieces.is_ok(),
        mass_ok: retained_mass >= 1.0 - runs.len() as f64 * eta - 1e-12,
        recombine,
    };
    drop(sigma);
    drop(coords);
    Ok(ComposeRun { report, axes: runs })
}

/// CSV with the planar report columns plus contract flags.
pub fn write_compose_csv(rows: &[ComposeReport], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "eps",
        "image_count",
        "sup_dev",
        "h1_content_upper",
        "lipschitz_ok",
        "deviation_ok",
        "finite_image_ok",
    ])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.image_count.to_string(),
            r.sup_dev.to_string(),
            r.h1_content_upper.to_string(),
            r.lipschitz_ok.to_string(),
            r.deviation_ok.to_string(),
            r.finite_image_ok.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
