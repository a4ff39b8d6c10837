//! Piecewise-linear curve fragments, weighted families of them, barycenter
//! measures and restrictions to compact slices.
//!
//! A fragment's domain is a finite union of disjoint closed intervals in
//! `[0, 1]`. On each interval the fragment interpolates linearly between
//! knots `(t, γ(t))`; knots need not be equispaced, so restrictions can cut
//! segments exactly.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom;
use crate::measure::DiscreteMeasure;
use crate::{Error, Result};

/// Relative slack in the declared Lipschitz bound check.
const LIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentPiece {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl FragmentPiece {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// One linear segment of a fragment.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub t0: f64,
    pub t1: f64,
    pub x0: &'a [f64],
    pub x1: &'a [f64],
}

impl Segment<'_> {
    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn length(&self) -> f64 {
        geom::dist(self.x0, self.x1)
    }

    pub fn speed(&self) -> f64 {
        if self.t1 > self.t0 {
            self.length() / self.duration()
        } else {
            0.0
        }
    }

    /// Constant derivative on the segment.
    pub fn velocity(&self) -> Vec<f64> {
        let dt = self.duration();
        geom::sub(self.x1, self.x0).into_iter().map(|v| v / dt).collect()
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        if t <= self.t0 {
            return self.x0.to_vec();
        }
        if t >= self.t1 {
            return self.x1.to_vec();
        }
        geom::lerp(self.x0, self.x1, (t - self.t0) / self.duration())
    }

    fn time_at(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            self.t0
        } else if tau >= 1.0 {
            self.t1
        } else {
            self.t0 + tau * (self.t1 - self.t0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveFragment {
    dim: usize,
    pieces: Vec<FragmentPiece>,
    lipschitz: f64,
}

impl CurveFragment {
    pub fn new(pieces: Vec<FragmentPiece>, lipschitz: f64) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidInput("fragment with empty domain".into()))?;
        let dim = first
            .points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::InvalidInput("fragment piece without knots".into()))?;
        if dim == 0 {
            return Err(Error::InvalidInput("fragment values need a positive dimension".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (i, piece) in pieces.iter().enumerate() {
            if piece.times.is_empty() || piece.times.len() != piece.points.len() {
                return Err(Error::InvalidInput(format!("piece {i}: knot times and values disagree")));
            }
            if piece.points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidInput(format!("piece {i}: bad knot value")));
            }
            if piece.times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidInput(format!("piece {i}: knot times must increase")));
            }
            if !(piece.start() >= 0.0 && piece.end() <= 1.0) {
                return Err(Error::InvalidInput(format!("piece {i}: domain leaves [0, 1]")));
            }
            if !(piece.start() > prev_end) {
                return Err(Error::InvalidInput(format!("piece {i}: domain intervals overlap or are unsorted")));
            }
            prev_end = piece.end();
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::InvalidInput(format!("Lipschitz bound {lipschitz} must be nonnegative")));
        }
        let frag = Self {
            dim,
            pieces,
            lipschitz,
        };
        frag.check_lipschitz()?;
        Ok(frag)
    }

    /// Within a piece the map is linear between knots; across pieces the
    /// triangle inequality reduces the check to consecutive endpoints.
    fn check_lipschitz(&self) -> Result<()> {
        let l = self.lipschitz;
        let check = |s: f64, t: f64, x: &[f64], y: &[f64]| -> Result<()> {
            let d = geom::dist(x, y);
            if d > l * (t - s).abs() * (1.0 + LIP_TOL) + 1e-15 {
                return Err(Error::InvalidInput(format!(
                    "fragment exceeds its Lipschitz bound {l} between t = {s} and t = {t}"
                )));
            }
            Ok(())
        };
        for seg in self.segments() {
            check(seg.t0, seg.t1, seg.x0, seg.x1)?;
        }
        for w in self.pieces.windows(2) {
            check(w[0].end(), w[1].start(), w[0].points.last().unwrap(), &w[1].points[0])?;
        }
        Ok(())
    }

    /// Linear interpolation of `values` over `[a, b]` at equispaced times.
    pub fn uniform_piece(a: f64, b: f64, values: Vec<Vec<f64>>) -> Result<FragmentPiece> {
        let n = values.len();
        let times = match n {
            0 => return Err(Error::InvalidInput("piece without knots".into())),
            1 if a == b => vec![a],
            1 => return Err(Error::InvalidInput(format!("single knot on [{a}, {b}]"))),
            _ if !(b > a) => return Err(Error::InvalidInput(format!("several knots on degenerate [{a}, {b}]"))),
            _ => (0..n)
                .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
                .collect(),
        };
        Ok(FragmentPiece { times, points: values })
    }

    /// Straight segment from `x0` at time `a` to `x1` at time `b`, with the
    /// tight Lipschitz bound.
    pub fn segment(a: f64, b: f64, x0: Vec<f64>, x1: Vec<f64>) -> Result<Self> {
        let l = if b > a { geom::dist(&x0, &x1) / (b - a) } else { 0.0 };
        Self::new(vec![Self::uniform_piece(a, b, vec![x0, x1])?], l)
    }

    /// Polyline through the knots, with the tight Lipschitz bound.
    pub fn polyline(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        let piece = FragmentPiece { times, points };
        let l = piece
            .times
            .windows(2)
            .zip(piece.points.windows(2))
            .map(|(t, x)| geom::dist(&x[0], &x[1]) / (t[1] - t[0]))
            .fold(0.0, f64::max);
        Self::new(vec![piece], l)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[FragmentPiece] {
        &self.pieces
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn domain(&self) -> Vec<(f64, f64)> {
        self.pieces.iter().map(|p| (p.start(), p.end())).collect()
    }

    /// Lebesgue measure of the domain.
    pub fn domain_length(&self) -> f64 {
        self.pieces.iter().map(|p| p.end() - p.start()).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> {
        self.pieces.iter().flat_map(|p| {
            (0..p.times.len().saturating_sub(1)).map(move |i| Segment {
                t0: p.times[i],
                t1: p.times[i + 1],
                x0: &p.points[i],
                x1: &p.points[i + 1],
            })
        })
    }

    /// `∫_{Dom γ} |γ'|`.
    pub fn arclength(&self) -> f64 {
        self.segments().map(|s| s.length()).sum()
    }

    /// `∫_{Dom γ ∩ set} |γ'|` for a union of parameter intervals.
    pub fn arclength_on(&self, set: &[(f64, f64)]) -> f64 {
        self.segments()
            .map(|s| {
                let covered: f64 = set
                    .iter()
                    .map(|(a, b)| (b.min(s.t1) - a.max(s.t0)).max(0.0))
                    .sum();
                s.speed() * covered
            })
            .sum()
    }

    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let piece = self.pieces.iter().find(|p| p.start() <= t && t <= p.end())?;
        if piece.times.len() == 1 {
            return Some(piece.points[0].clone());
        }
        let i = piece.times.partition_point(|s| *s <= t).clamp(1, piece.times.len() - 1);
        let seg = Segment {
            t0: piece.times[i - 1],
            t1: piece.times[i],
            x0: &piece.points[i - 1],
            x1: &piece.points[i],
        };
        Some(seg.at(t))
    }

    /// Isolated knots (pieces that are single points).
    fn singletons(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.pieces
            .iter()
            .filter(|p| p.times.len() == 1)
            .map(|p| (p.times[0], p.points[0].as_slice()))
    }

    /// All knot values pairwise distinct (after canonical rounding).
    pub fn injective_on_knots(&self) -> bool {
        let mut seen = HashSet::new();
        self.pieces
            .iter()
            .flat_map(|p| p.points.iter())
            .all(|x| seen.insert(x.iter().map(|v| (v * 1e12).round() as i64).collect::<Vec<_>>()))
    }

    /// The fragment restricted to a sorted union of closed parameter intervals.
    ///
    /// Returns `None` when nothing of the domain is kept.
    pub fn restrict_to(&self, keep: &[(f64, f64)]) -> Result<Option<Self>> {
        let mut pieces = Vec::new();
        for &(a, b) in keep {
            let Some(piece) = self.pieces.iter().find(|p| p.start() <= a && b <= p.end()) else {
                return Err(Error::Domain(format!("kept interval [{a}, {b}] is not inside one domain piece")));
            };
            let mut times = vec![a];
            let mut points = vec![self.eval(a).unwrap()];
            for (t, x) in piece.times.iter().zip(&piece.points) {
                if *t > a && *t < b {
                    times.push(*t);
                    points.push(x.clone());
                }
            }
            if b > a {
                times.push(b);
                points.push(self.eval(b).unwrap());
            }
            pieces.push(FragmentPiece { times, points });
        }
        if pieces.is_empty() {
            return Ok(None);
        }
        Ok(Some(Self::new(pieces, self.lipschitz)?))
    }

    /// The fragment composed with a map of its values, with a new Lipschitz bound.
    ///
    /// Knots are kept; `extra_times` adds knots so that piecewise-linear maps
    /// can be represented exactly.
    pub fn pushed(&self, f: &dyn Fn(&[f64]) -> Vec<f64>, extra_times: &[f64], lipschitz: f64) -> Result<Self> {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let mut times: Vec<f64> = p.times.clone();
            times.extend(extra_times.iter().copied().filter(|t| *t > p.start() && *t < p.end()));
            times.sort_by(f64::total_cmp);
            times.dedup();
            let points = times.iter().map(|t| f(&self.eval(*t).unwrap())).collect();
            pieces.push(FragmentPiece { times, points });
        }
        Self::new(pieces, lipschitz)
    }
}

/// Hausdorff distance between the graphs `{(γ(t), t)}` under
/// `max(‖x − y‖, |s − t|)`.
pub fn fragment_distance(a: &CurveFragment, b: &CurveFragment) -> f64 {
    fragment_distance_with_error(a, b).0
}

/// The distance and a bound on its sampling error.
pub fn fragment_distance_with_error(a: &CurveFragment, b: &CurveFragment) -> (f64, f64) {
    let (d1, e1) = directed(a, b);
    let (d2, e2) = directed(b, a);
    (d1.max(d2), e1.max(e2))
}

const OUTER_SAMPLES: usize = 64;

fn graph_dist_to(point: &[f64], time: f64, b: &CurveFragment) -> f64 {
    let mut best = f64::INFINITY;
    for seg in b.segments() {
        let same_time = time.clamp(seg.t0, seg.t1);
        best = best.min(geom::dist(point, &seg.at(same_time)).max((time - same_time).abs()));
        // convex in t: max of two convex functions
        let (_, v) = geom::golden_min(seg.t0, seg.t1, 1e-13, |t| {
            geom::dist(point, &seg.at(t)).max((time - t).abs())
        });
        best = best.min(v);
    }
    for (t, x) in b.singletons() {
        best = best.min(geom::dist(point, x).max((time - t).abs()));
    }
    best
}

fn directed(a: &CurveFragment, b: &CurveFragment) -> (f64, f64) {
    let mut best: f64 = 0.0;
    let mut err: f64 = 0.0;
    for (t, x) in a.singletons() {
        best = best.max(graph_dist_to(x, t, b));
    }
    for seg in a.segments() {
        let n = OUTER_SAMPLES;
        let h = seg.duration() / n as f64;
        // the distance is max(speed, 1)-Lipschitz along the segment
        err = err.max(seg.speed().max(1.0) * h / 2.0);
        for i in 0..=n {
            let t = if i == n { seg.t1 } else { seg.t0 + h * i as f64 };
            best = best.max(graph_dist_to(&seg.at(t), t, b));
        }
    }
    (best, err)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentFamily {
    fragments: Vec<CurveFragment>,
    weights: Vec<f64>,
    /// Declared as a candidate Alberti representation.
    pub injective: bool,
}

#[derive(Deserialize, Serialize)]
struct FragmentFile {
    intervals: Vec<[f64; 2]>,
    points: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples_per_interval: Option<Vec<usize>>,
    /// Explicit knot times, parallel to `points`; uniform grids otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    times: Option<Vec<f64>>,
}

#[derive(Deserialize, Serialize)]
struct FamilyFile {
    fragments: Vec<FragmentFile>,
    weights: Vec<f64>,
    #[serde(default)]
    injective: bool,
}

impl FragmentFamily {
    pub fn new(fragments: Vec<CurveFragment>, weights: Vec<f64>) -> Result<Self> {
        if fragments.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} fragments but {} weights",
                fragments.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(format!("weight {w} must be positive")));
        }
        Ok(Self {
            fragments,
            weights,
            injective: false,
        })
    }

    pub fn empty() -> Self {
        Self {
            fragments: Vec::new(),
            weights: Vec::new(),
            injective: false,
        }
    }

    pub fn flagged_injective(mut self) -> Self {
        self.injective = true;
        self
    }

    pub fn fragments(&self) -> &[CurveFragment] {
        &self.fragments
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CurveFragment, f64)> {
        self.fragments.iter().zip(self.weights.iter().copied())
    }

    /// Disjoint union of two families.
    pub fn union(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.fragments.extend(other.fragments.iter().cloned());
        out.weights.extend(other.weights.iter().copied());
        out.injective = self.injective && other.injective;
        out
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: FamilyFile = serde_json::from_str(s)?;
        let mut fragments = Vec::with_capacity(file.fragments.len());
        for (i, f) in file.fragments.into_iter().enumerate() {
            let counts = match f.samples_per_interval {
                Some(c) => c,
                None => {
                    let k = f.intervals.len().max(1);
                    let n = f.points.len();
                    (0..k).map(|j| n / k + usize::from(j < n % k)).collect()
                }
            };
            if counts.len() != f.intervals.len() || counts.iter().sum::<usize>() != f.points.len() {
                return Err(Error::InvalidInput(format!("fragment {i}: points do not split over its intervals")));
            }
            let mut pieces = Vec::with_capacity(counts.len());
            let mut it = f.points.into_iter();
            let mut times = f.times.map(|t| t.into_iter());
            for ([a, b], c) in f.intervals.into_iter().zip(counts) {
                let vals: Vec<Vec<f64>> = it.by_ref().take(c).collect();
                match times.as_mut() {
                    Some(ts) => {
                        let ts: Vec<f64> = ts.by_ref().take(c).collect();
                        if ts.len() != c || ts.first() != Some(&a) || ts.last() != Some(&b) {
                            return Err(Error::InvalidInput(format!("fragment {i}: knot times do not match [{a}, {b}]")));
                        }
                        pieces.push(FragmentPiece { times: ts, points: vals });
                    }
                    None => pieces.push(CurveFragment::uniform_piece(a, b, vals)?),
                }
            }
            fragments.push(
                CurveFragment::new(pieces, f.lipschitz)
                    .map_err(|e| Error::InvalidInput(format!("fragment {i}: {e}")))?,
            );
        }
        let mut fam = Self::new(fragments, file.weights)?;
        fam.injective = file.injective;
        Ok(fam)
    }

    /// JSON in the input format, with explicit knot times.
    pub fn to_json_string(&self) -> Result<String> {
        let fragments = self
            .fragments
            .iter()
            .map(|f| FragmentFile {
                intervals: f.pieces().iter().map(|p| [p.start(), p.end()]).collect(),
                points: f.pieces().iter().flat_map(|p| p.points.iter().cloned()).collect(),
                lipschitz: f.lipschitz(),
                samples_per_interval: Some(f.pieces().iter().map(|p| p.times.len()).collect()),
                times: Some(f.pieces().iter().flat_map(|p| p.times.iter().copied()).collect()),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&FamilyFile {
            fragments,
            weights: self.weights.clone(),
            injective: self.injective,
        })?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidInput(format!("bad box {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| a <= x && x <= b)
    }
}

/// Where the barycenter is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    All,
    /// Union of boxes in the value space.
    Boxes(Vec<Aabb>),
}

/// Parameter set of a segment mapped into a box union, as merged intervals.
fn segment_preimage(seg: &Segment, boxes: &[Aabb], with_time: bool) -> Vec<(f64, f64)> {
    let (a, b) = if with_time {
        let mut a = seg.x0.to_vec();
        a.push(seg.t0);
        let mut b = seg.x1.to_vec();
        b.push(seg.t1);
        (a, b)
    } else {
        (seg.x0.to_vec(), seg.x1.to_vec())
    };
    let ivs = boxes
        .iter()
        .filter_map(|bx| geom::clip_segment_box(&a, &b, &bx.lo, &bx.hi))
        .map(|(u, v)| (seg.time_at(u), seg.time_at(v)))
        .collect();
    geom::merge_intervals(ivs)
}

/// `B(η)(E) = Σ w ∫_{γ^{-1}(E)} |γ'|`, exact per linear segment.
pub fn barycenter(eta: &FragmentFamily, region: &Region) -> f64 {
    eta.iter()
        .map(|(frag, w)| {
            let mass: f64 = match region {
                Region::All => frag.arclength(),
                Region::Boxes(boxes) => frag
                    .segments()
                    .map(|seg| {
                        let pre = segment_preimage(&seg, boxes, false);
                        seg.speed() * pre.iter().map(|(a, b)| b - a).sum::<f64>()
                    })
                    .sum(),
            };
            w * mass
        })
        .sum()
}

/// `B(η)` as atoms: each segment is cut into pieces of arclength at most
/// `granularity` and each piece's mass is put at its midpoint.
pub fn barycenter_measure(eta: &FragmentFamily, granularity: f64) -> Result<DiscreteMeasure> {
    if !(granularity > 0.0) {
        return Err(Error::InvalidInput(format!("granularity {granularity} must be positive")));
    }
    let Some(dim) = eta.fragments().first().map(|f| f.dim()) else {
        return Ok(DiscreteMeasure::empty(1));
    };
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (frag, w) in eta.iter() {
        for seg in frag.segments() {
            let len = seg.length();
            if len == 0.0 {
                continue;
            }
            let n = (len / granularity).ceil().max(1.0) as usize;
            for i in 0..n {
                points.push(geom::lerp(seg.x0, seg.x1, (i as f64 + 0.5) / n as f64));
                weights.push(w * len / n as f64);
            }
        }
    }
    DiscreteMeasure::new(dim, points, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AlbertiOutcome {
    Dominated,
    /// An atom of positive mass farther than the granularity from every
    /// segment carrying barycenter mass.
    Violation { atom: usize, point: Vec<f64>, distance: f64 },
}

/// Buckets segments, padded by a radius, into a uniform grid of cubes.
struct SegmentGrid {
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl SegmentGrid {
    fn new(segs: &[Segment], radius: f64) -> Self {
        let longest = segs.iter().map(|s| s.length()).fold(0.0, f64::max);
        let cell = radius.max(longest).max(f64::MIN_POSITIVE);
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (j, s) in segs.iter().enumerate() {
            let lo: Vec<i64> = (0..s.x0.len())
                .map(|i| ((s.x0[i].min(s.x1[i]) - radius) / cell).floor() as i64)
                .collect();
            let hi: Vec<i64> = (0..s.x0.len())
                .map(|i| ((s.x0[i].max(s.x1[i]) + radius) / cell).floor() as i64)
                .collect();
            let mut key = lo.clone();
            loop {
                buckets.entry(key.clone()).or_default().push(j);
                let mut axis = 0;
                while axis < key.len() {
                    if key[axis] < hi[axis] {
                        key[axis] += 1;
                        break;
                    }
                    key[axis] = lo[axis];
                    axis += 1;
                }
                if axis == key.len() {
                    break;
                }
            }
        }
        Self { cell, buckets }
    }

    fn candidates(&self, p: &[f64]) -> &[usize] {
        let key: Vec<i64> = p.iter().map(|x| (x / self.cell).floor() as i64).collect();
        self.buckets.get(&key).map_or(&[], |v| v.as_slice())
    }
}

/// Resolution-level check of `μ ≪ B(η)`.
pub fn alberti_check(mu: &DiscreteMeasure, eta: &FragmentFamily, granularity: f64) -> Result<AlbertiOutcome> {
    if !(granularity > 0.0) {
        return Err(Error::InvalidInput(format!("granularity {granularity} must be positive")));
    }
    if eta.injective {
        if let Some(i) = eta.fragments().iter().position(|f| !f.injective_on_knots()) {
            return Err(Error::InvalidInput(format!(
                "fragment {i} is not injective; the family must be supported on injective fragments"
            )));
        }
    }
    let segs: Vec<Segment> = eta
        .iter()
        .flat_map(|(f, _)| f.segments())
        .filter(|s| s.length() > 0.0)
        .collect();
    let index = SegmentGrid::new(&segs, granularity);
    for (i, (p, w)) in mu.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let near = index
            .candidates(p)
            .iter()
            .any(|&j| geom::point_segment_dist(p, segs[j].x0, segs[j].x1) <= granularity);
        if !near {
            let d = segs
                .iter()
                .map(|s| geom::point_segment_dist(p, s.x0, s.x1))
                .fold(f64::INFINITY, f64::min);
            return Ok(AlbertiOutcome::Violation {
                atom: i,
                point: p.to_vec(),
                distance: d,
            });
        }
    }
    Ok(AlbertiOutcome::Dominated)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictionOp {
    /// Kept parameter set per fragment of the source family.
    pub kept: Vec<Vec<(f64, f64)>>,
    /// Kept fraction of arclength per fragment (1 for zero-length fragments).
    pub density: Vec<f64>,
}

impl RestrictionOp {
    /// Builds the restricted family from a kept-set description.
    pub fn apply(&self, eta: &FragmentFamily) -> Result<FragmentFamily> {
        if self.kept.len() != eta.len() {
            return Err(Error::Domain("restriction was built for a different family".into()));
        }
        let mut frags = Vec::new();
        let mut weights = Vec::new();
        for ((frag, w), keep) in eta.iter().zip(&self.kept) {
            if let Some(r) = frag.restrict_to(keep)? {
                frags.push(r);
                weights.push(w);
            }
        }
        let mut out = FragmentFamily::new(frags, weights)?;
        out.injective = eta.injective;
        Ok(out)
    }

    /// Builds the operator from explicit kept sets.
    pub fn from_kept(eta: &FragmentFamily, kept: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if kept.len() != eta.len() {
            return Err(Error::Domain("one kept set per fragment expected".into()));
        }
        let density = eta
            .fragments()
            .iter()
            .zip(&kept)
            .map(|(f, k)| relative_density(f, k))
            .collect();
        Ok(Self { kept, density })
    }
}

fn relative_density(frag: &CurveFragment, keep: &[(f64, f64)]) -> f64 {
    let total = frag.arclength();
    if total > 0.0 {
        frag.arclength_on(keep) / total
    } else {
        1.0
    }
}

/// Parameters kept by slicing one fragment with boxes in `X × [0, 1]`.
pub fn kept_parameters(frag: &CurveFragment, slice: &[Aabb]) -> Vec<(f64, f64)> {
    let mut ivs = Vec::new();
    for seg in frag.segments() {
        ivs.extend(segment_preimage(&seg, slice, true));
    }
    for (t, x) in frag.singletons() {
        let mut p = x.to_vec();
        p.push(t);
        if slice.iter().any(|b| b.contains(&p)) {
            ivs.push((t, t));
        }
    }
    geom::merge_intervals(ivs)
}

/// Restricts every fragment to `{t : (γ(t), t) ∈ K}` for a box union `K`.
///
/// Boxes have dimension `k + 1`, the last coordinate being time.
pub fn slice_restriction(eta: &FragmentFamily, slice: &[Aabb]) -> Result<(RestrictionOp, FragmentFamily)> {
    if let Some(f) = eta.fragments().first() {
        if let Some(b) = slice.iter().find(|b| b.lo.len() != f.dim() + 1) {
            return Err(Error::InvalidInput(format!(
                "slice box of dimension {} for fragments in dimension {}",
                b.lo.len(),
                f.dim()
            )));
        }
    }
    let kept = eta.fragments().iter().map(|f| kept_parameters(f, slice)).collect();
    let op = RestrictionOp::from_kept(eta, kept)?;
    let restricted = op.apply(eta)?;
    Ok((op, restricted))
}

/// Both sides of `(B(η) − B(𝔯η))(X) = Σ w (1 − 𝒟(γ)) ℋ¹(γ)`, checked to 1e-9.
pub fn restriction_mass_identity(eta: &FragmentFamily, op: &RestrictionOp) -> Result<(f64, f64)> {
    if op.kept.len() != eta.len() || op.density.len() != eta.len() {
        return Err(Error::Domain("restriction was built for a different family".into()));
    }
    let total = barycenter(eta, &Region::All);
    let restricted = barycenter(&op.apply(eta)?, &Region::All);
    let lhs = total - restricted;
    let rhs: f64 = eta
        .iter()
        .zip(&op.density)
        .map(|((f, w), d)| w * (1.0 - d) * f.arclength())
        .sum();
    if (lhs - rhs).abs() > 1e-9 {
        return Err(Error::contract("restriction mass identity", format!("lhs {lhs} vs rhs {rhs}")));
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> CurveFragment {
        CurveFragment::segment(0.0, 1.0, vec![0.0], vec![1.0]).unwrap()
    }

    fn fam(f: CurveFragment) -> FragmentFamily {
        FragmentFamily::new(vec![f], vec![1.0]).unwrap()
    }

    #[test]
    fn barycenter_examples() {
        let eta = fam(unit());
        assert_eq!(barycenter(&eta, &Region::All), 1.0);
        let q = Region::Boxes(vec![Aabb::new(vec![0.0], vec![0.25]).unwrap()]);
        assert!((barycenter(&eta, &q) - 0.25).abs() < 1e-15);
        assert_eq!(barycenter(&FragmentFamily::empty(), &Region::All), 0.0);
    }

    #[test]
    fn barycenter_measure_mass() {
        let eta = fam(CurveFragment::polyline(vec![0.0, 0.5, 1.0], vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 2.0]]).unwrap());
        let m = barycenter_measure(&eta, 0.1).unwrap();
        assert!((m.total_mass() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let a = CurveFragment::segment(0.0, 1.0, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(fragment_distance(&a, &a), 0.0);
        let b = CurveFragment::segment(0.0, 1.0, vec![0.0, 0.3], vec![1.0, 0.3]).unwrap();
        assert!((fragment_distance(&a, &b) - 0.3).abs() < 1e-9);
        let c0 = CurveFragment::segment(0.0, 0.5, vec![0.2, 0.2], vec![0.2, 0.2]).unwrap();
        let c1 = CurveFragment::segment(0.5, 1.0, vec![0.2, 0.2], vec![0.2, 0.2]).unwrap();
        assert!((fragment_distance(&c0, &c1) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn slice_examples() {
        let eta = fam(unit());
        let all = vec![Aabb::new(vec![-1.0, 0.0], vec![2.0, 1.0]).unwrap()];
        let (op, r) = slice_restriction(&eta, &all).unwrap();
        assert_eq!(op.density, vec![1.0]);
        assert_eq!(r, eta);

        let half = vec![Aabb::new(vec![-1.0, 0.0], vec![2.0, 0.5]).unwrap()];
        let (op, r) = slice_restriction(&eta, &half).unwrap();
        assert_eq!(op.kept, vec![vec![(0.0, 0.5)]]);
        assert_eq!(op.density, vec![0.5]);
        assert_eq!(r.fragments()[0].domain(), vec![(0.0, 0.5)]);
        let (lhs, rhs) = restriction_mass_identity(&eta, &op).unwrap();
        assert!((lhs - 0.5).abs() < 1e-15 && (rhs - 0.5).abs() < 1e-15);

        let none = vec![Aabb::new(vec![5.0, 0.0], vec![6.0, 1.0]).unwrap()];
        let (_, r) = slice_restriction(&eta, &none).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn identity_restriction_has_no_loss() {
        let eta = fam(unit());
        let op = RestrictionOp::from_kept(&eta, vec![vec![(0.0, 1.0)]]).unwrap();
        assert_eq!(restriction_mass_identity(&eta, &op).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn mismatched_op_is_domain_error() {
        let eta = fam(unit());
        let op = RestrictionOp {
            kept: vec![],
            density: vec![],
        };
        assert!(matches!(restriction_mass_identity(&eta, &op), Err(Error::Domain(_))));
    }

    #[test]
    fn alberti_examples() {
        let seg = CurveFragment::segment(0.0, 1.0, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let eta = fam(seg).flagged_injective();
        let mu = DiscreteMeasure::uniform(2, vec![vec![0.25, 0.0], vec![0.75, 0.0]]).unwrap();
        assert_eq!(alberti_check(&mu, &eta, 1e-6).unwrap(), AlbertiOutcome::Dominated);
        let off = DiscreteMeasure::uniform(2, vec![vec![0.25, 0.0], vec![0.5, 0.5]]).unwrap();
        match alberti_check(&off, &eta, 1e-3).unwrap() {
            AlbertiOutcome::Violation { atom, .. } => assert_eq!(off.points()[atom], vec![0.5, 0.5]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_injective_family_rejected() {
        let loopy = CurveFragment::polyline(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let eta = fam(loopy).flagged_injective();
        let mu = DiscreteMeasure::dirac(vec![0.5, 0.0], 1.0).unwrap();
        assert!(matches!(alberti_check(&mu, &eta, 0.1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lipschitz_bound_enforced() {
        let piece = CurveFragment::uniform_piece(0.0, 0.5, vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(CurveFragment::new(vec![piece], 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"fragments":[{"intervals":[[0,0.5],[0.6,1]],"points":[[0,0],[0.5,0],[0.6,0],[0.8,0],[1,0]],"L":1,"samples_per_interval":[2,3]}],"weights":[2]}"#;
        let eta = FragmentFamily::from_json_str(text).unwrap();
        assert_eq!(eta.fragments()[0].pieces().len(), 2);
        let t = &eta.fragments()[0].pieces()[1].times;
        assert!(t.len() == 3 && (t[1] - 0.8).abs() < 1e-15);
        let back = FragmentFamily::from_json_str(&eta.to_json_string().unwrap()).unwrap();
        assert!((barycenter(&back, &Region::All) - barycenter(&eta, &Region::All)).abs() < 1e-15);
    }
}
