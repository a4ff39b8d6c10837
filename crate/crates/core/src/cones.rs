//! Norms, cones of directions and their complements, and slope partitions of
//! sampled curves.

use serde::Serialize;

use crate::fragments::CurveFragment;
use crate::geom;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Norm {
    Euclidean,
    Sup,
    /// `ℓ_p` with `1 ≤ p < ∞`.
    P(f64),
}

impl Norm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(Norm::Euclidean),
            "sup" | "max" | "linf" => Ok(Norm::Sup),
            other => {
                let p: f64 = other
                    .trim_start_matches('p')
                    .trim_start_matches('=')
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("unknown norm `{other}`")))?;
                Norm::p(p)
            }
        }
    }

    pub fn p(p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("p = {p} must be a finite number ≥ 1")));
        }
        Ok(if p == 2.0 { Norm::Euclidean } else { Norm::P(p) })
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match *self {
            Norm::Euclidean => geom::norm(v),
            Norm::Sup => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Norm::P(p) => v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }

    /// Norm of a functional `v ↦ ⟨u, v⟩` measured against this norm.
    pub fn dual_eval(&self, u: &[f64]) -> f64 {
        match *self {
            Norm::Euclidean => geom::norm(u),
            Norm::Sup => u.iter().map(|x| x.abs()).sum(),
            Norm::P(p) if p == 1.0 => u.iter().fold(0.0, |m, x| m.max(x.abs())),
            Norm::P(p) => {
                let q = p / (p - 1.0);
                u.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
            }
        }
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval(&geom::sub(a, b))
    }

    pub fn strictly_convex(&self) -> bool {
        match *self {
            Norm::Euclidean => true,
            Norm::Sup => false,
            Norm::P(p) => p > 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConeKind {
    /// `{v : ⟨u, v⟩ ≥ (1 − θ)‖v‖}`.
    Centred { u: Vec<f64> },
    /// `{v : dist(v, W) ≥ (1 − θ)‖v‖}` for `W` spanned by an orthonormal basis.
    Complement { basis: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSpec {
    pub kind: ConeKind,
    pub theta: f64,
    pub norm: Norm,
    /// Set when the functional had to be normalized.
    pub warning: Option<String>,
}

impl ConeSpec {
    pub fn centred(u: Vec<f64>, theta: f64, norm: Norm) -> Result<Self> {
        check_theta(theta)?;
        let size = norm.dual_eval(&u);
        if !(size > 0.0) || !size.is_finite() {
            return Err(Error::InvalidInput("cone axis must be a nonzero functional".into()));
        }
        let (u, warning) = if (size - 1.0).abs() > 1e-12 {
            (
                u.iter().map(|x| x / size).collect(),
                Some(format!("functional had dual norm {size}; normalized")),
            )
        } else {
            (u, None)
        };
        Ok(Self {
            kind: ConeKind::Centred { u },
            theta,
            norm,
            warning,
        })
    }

    pub fn complement(basis: Vec<Vec<f64>>, theta: f64, norm: Norm) -> Result<Self> {
        check_theta(theta)?;
        for (i, b) in basis.iter().enumerate() {
            for (j, c) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (geom::dot(b, c) - want).abs() > 1e-9 {
                    return Err(Error::InvalidInput("subspace basis is not orthonormal".into()));
                }
            }
        }
        if norm != Norm::Euclidean && basis.len() > 1 {
            return Err(Error::InvalidInput(
                "distance to subspaces of dimension > 1 is only available in the euclidean norm".into(),
            ));
        }
        Ok(Self {
            kind: ConeKind::Complement { basis },
            theta,
            norm,
            warning: None,
        })
    }

    /// Same cone with width `theta`.
    pub fn widened(&self, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta, ..self.clone() })
    }

    /// `⟨u, v⟩ / ‖v‖` for centred cones, `dist(v, W) / ‖v‖` for complements;
    /// `None` for `v = 0`.
    pub fn alignment(&self, v: &[f64]) -> Option<f64> {
        let size = self.norm.eval(v);
        if size == 0.0 {
            return None;
        }
        Some(match &self.kind {
            ConeKind::Centred { u } => geom::dot(u, v) / size,
            ConeKind::Complement { basis } => self.subspace_dist(basis, v) / size,
        })
    }

    fn subspace_dist(&self, basis: &[Vec<f64>], v: &[f64]) -> f64 {
        if basis.is_empty() {
            return self.norm.eval(v);
        }
        if self.norm == Norm::Euclidean {
            let mut rest = v.to_vec();
            for b in basis {
                let c = geom::dot(b, v);
                for (r, x) in rest.iter_mut().zip(b) {
                    *r -= c * x;
                }
            }
            return geom::norm(&rest);
        }
        // convex in the coefficient; the minimiser lies within 2‖v‖/‖w‖
        let w = &basis[0];
        let reach = 2.0 * self.norm.eval(v) / self.norm.eval(w);
        let f = |c: f64| self.norm.eval(&geom::sub(v, &geom::scale(w, c)));
        geom::golden_min(-reach, reach, 1e-12 * reach.max(1e-300), f).1
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        match self.alignment(v) {
            None => true,
            Some(a) => a >= 1.0 - self.theta,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidInput(format!("cone width θ = {theta} must lie in (0, 1)")));
    }
    Ok(())
}

pub fn cone_member(c: &ConeSpec, v: &[f64]) -> bool {
    c.contains(v)
}

/// Fraction of the domain on which the derivative of `F∘γ` is a nonzero member
/// of the cone. Derivatives are chord derivatives of the linear segments.
pub fn fragment_direction_fraction(
    gamma: &CurveFragment,
    cone: &ConeSpec,
    map: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
) -> f64 {
    let total = gamma.domain_length();
    if total == 0.0 {
        return 1.0;
    }
    let good: f64 = gamma
        .segments()
        .filter(|s| {
            let v = match map {
                None => s.velocity(),
                Some(f) => geom::scale(&geom::sub(&f(s.x1), &f(s.x0)), 1.0 / s.duration()),
            };
            cone.norm.eval(&v) > 0.0 && cone.contains(&v)
        })
        .map(|s| s.duration())
        .sum();
    good / total
}

/// A curve sampled at equispaced parameters on `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCurve {
    pub start: f64,
    pub end: f64,
    pub points: Vec<Vec<f64>>,
}

impl SampledCurve {
    pub fn new(start: f64, end: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if !(end > start) || points.len() < 2 {
            return Err(Error::InvalidInput("a sampled curve needs an interval and two samples".into()));
        }
        Ok(Self { start, end, points })
    }

    pub fn from_fn(start: f64, end: f64, segments: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let n = segments.max(1);
        let points = (0..=n).map(|i| f(Self::time(start, end, n, i))).collect();
        Self::new(start, end, points)
    }

    fn time(start: f64, end: f64, n: usize, i: usize) -> f64 {
        if i == n {
            end
        } else {
            start + (end - start) * i as f64 / n as f64
        }
    }

    /// Unit-speed arc of the circle of `radius` about `center`, from angle
    /// `angle0` through `span` radians.
    pub fn circle_arc(center: [f64; 2], radius: f64, angle0: f64, span: f64, segments: usize) -> Result<Self> {
        Self::from_fn(0.0, radius * span, segments, |s| {
            let a = angle0 + s / radius;
            vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.segments() as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        Self::time(self.start, self.end, self.segments(), i)
    }

    /// Chord derivative of each sample segment.
    pub fn chord_derivatives(&self) -> Vec<Vec<f64>> {
        (0..self.segments())
            .map(|i| {
                let dt = self.t(i + 1) - self.t(i);
                geom::scale(&geom::sub(&self.points[i + 1], &self.points[i]), 1.0 / dt)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopePiece {
    pub start: f64,
    pub end: f64,
    /// Chord length over parameter length.
    pub slope: f64,
    /// Largest `‖γ' − w‖` over the piece, `w` the chord direction.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopePartition {
    pub pieces: Vec<SlopePiece>,
}

impl SlopePartition {
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.pieces.iter().map(|p| p.start).collect();
        if let Some(last) = self.pieces.last() {
            out.push(last.end);
        }
        out
    }
}

/// Greedy left-to-right partition into maximal pieces whose slope exceeds
/// `s` and on which the derivative stays within `eps` of the chord.
pub fn slope_partition(curve: &SampledCurve, s: f64, eps: f64) -> Result<SlopePartition> {
    if !(s < 1.0) || !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("need s < 1 and ε > 0 (got s = {s}, ε = {eps})")));
    }
    let d = curve.chord_derivatives();
    // samples too coarse to see the derivative within ε
    let jump = d.windows(2).map(|w| geom::dist(&w[0], &w[1])).fold(0.0, f64::max);
    if jump >= eps {
        return Err(Error::Resolution(format!(
            "consecutive derivatives differ by {jump} ≥ ε = {eps}; sample more densely"
        )));
    }
    let n = curve.segments();
    let piece = |i: usize, e: usize| -> (f64, f64, bool) {
        let dt = curve.t(e) - curve.t(i);
        let w = geom::scale(&geom::sub(&curve.points[e], &curve.points[i]), 1.0 / dt);
        let slope = geom::norm(&w);
        let dev = d[i..e].iter().map(|v| geom::dist(v, &w)).fold(0.0, f64::max);
        (slope, dev, slope > s && dev < eps)
    };
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < n {
        let mut e = i + 1;
        while e < n && piece(i, e + 1).2 {
            e += 1;
        }
        let (slope, deviation, ok) = piece(i, e);
        if !ok {
            return Err(Error::Resolution(format!(
                "a single sample segment at t = {} already fails the slope bound",
                curve.t(i)
            )));
        }
        pieces.push(SlopePiece {
            start: curve.t(i),
            end: curve.t(e),
            slope,
            deviation,
        });
        i = e;
    }
    Ok(SlopePartition { pieces })
}

/// `δ` with `φ_u(u − v) < δ ⟹ ‖u − v‖_p < ε` for unit vectors of `ℓ_p`,
/// `1 < p < ∞`, where `φ_u` is the norming functional of `u`.
pub fn uniform_extremality_delta(p: f64, eps: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("closed form needs 1 < p < ∞ (got {p})")));
    }
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::InvalidInput(format!("ε = {eps} must lie in (0, 2]")));
    }
    Ok(if p >= 2.0 {
        1.0 - (1.0 - (eps / 2.0).powf(p)).powf(1.0 / p)
    } else {
        (p - 1.0) * eps * eps / 8.0
    })
}

/// Norming functional of a unit vector of `ℓ_p`: `sign(u_i)|u_i|^{p−1}`.
pub fn norming_functional(p: f64, u: &[f64]) -> Vec<f64> {
    u.iter().map(|x| x.signum() * x.abs().powf(p - 1.0)).collect()
}
