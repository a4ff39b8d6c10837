//! Upper bounds for Hausdorff content of finite samples, with cover witnesses.
//!
//! A sample resolves its set only down to some scale, so the cover search works
//! on dyadic cells of a frame box. Cells at the leaf level stand for the set at
//! that resolution. Walking bottom-up, a parent cell replaces its children
//! by the tight box of their occupied leaf cells whenever that strictly lowers
//! `Σ diam^s` and the box respects the `δ` bound. The result is the optimum over
//! covers that follow the dyadic tree, and it is deterministic.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::Serialize;

use crate::geom;
use crate::{Error, Result};

/// Axis-aligned box with per-axis extents; the dyadic tree lives inside it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub origin: Vec<f64>,
    pub extent: Vec<f64>,
}

impl Frame {
    /// Bounding box of the points.
    pub fn bounding(points: &[Vec<f64>]) -> Self {
        let k = points[0].len();
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        for p in points {
            for i in 0..k {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
        Self { origin: lo, extent }
    }

    pub fn unit_cube(k: usize) -> Self {
        Self {
            origin: vec![0.0; k],
            extent: vec![1.0; k],
        }
    }

    pub fn diameter(&self) -> f64 {
        geom::norm(&self.extent)
    }

    fn max_side(&self) -> f64 {
        self.extent.iter().cloned().fold(0.0, f64::max)
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.origin.iter().zip(&self.extent))
            .all(|(x, (o, e))| {
                // `o + e` may round below the largest coordinate it was built from
                let slack = 4.0 * f64::EPSILON * (o.abs() + e.abs());
                *x >= *o - slack && *x <= o + e + slack
            })
    }
}

#[derive(Debug, Clone)]
pub struct ContentConfig {
    /// Finest dyadic level the search may use.
    pub max_level: u32,
    /// Fixed leaf level; `None` picks it from the sample spacing and `δ`.
    pub leaf_level: Option<u32>,
    pub frame: Option<Frame>,
}

impl Default for ContentConfig {
    fn default() -> Self {
        Self {
            max_level: 20,
            leaf_level: None,
            frame: None,
        }
    }
}

impl ContentConfig {
    pub fn with_frame(frame: Frame) -> Self {
        Self {
            frame: Some(frame),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverPiece {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoverPiece {
    pub fn diameter(&self) -> f64 {
        geom::dist(&self.lo, &self.hi)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| *x >= *a && *x <= *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverWitness {
    pub pieces: Vec<CoverPiece>,
    pub s: f64,
    pub value: f64,
}

impl CoverWitness {
    pub fn recompute_value(&self) -> f64 {
        self.pieces.iter().map(|p| p.diameter().powf(self.s)).sum()
    }

    /// Checks coverage of `points` and the stored value.
    pub fn verify(&self, points: &[Vec<f64>]) -> Result<()> {
        for (i, p) in points.iter().enumerate() {
            if !self.pieces.iter().any(|c| c.contains(p)) {
                return Err(Error::contract("cover witness", format!("point {i} at {p:?} is uncovered")));
            }
        }
        let v = self.recompute_value();
        if (v - self.value).abs() > 1e-12 * v.abs().max(1e-300) && v != self.value {
            return Err(Error::contract(
                "cover witness",
                format!("stored value {} differs from recomputed {v}", self.value),
            ));
        }
        Ok(())
    }

    /// Value of the cover of `f(points)` by the images `f(points ∩ piece)`.
    ///
    /// For a 1-Lipschitz `f` each image has diameter at most that of its piece.
    pub fn mapped_value(&self, points: &[Vec<f64>], f: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
        let images: Vec<Vec<f64>> = points.iter().map(|p| f(p)).collect();
        self.pieces
            .iter()
            .map(|piece| {
                let members: Vec<&Vec<f64>> = points
                    .iter()
                    .zip(&images)
                    .filter(|(p, _)| piece.contains(p))
                    .map(|(_, q)| q)
                    .collect();
                let mut d: f64 = 0.0;
                for i in 0..members.len() {
                    for j in i + 1..members.len() {
                        d = d.max(geom::dist(members[i], members[j]));
                    }
                }
                if members.is_empty() {
                    0.0
                } else {
                    d.powf(self.s)
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentEstimate {
    pub s: f64,
    /// `None` stands for `δ = ∞`.
    pub delta: Option<f64>,
    pub upper: f64,
    pub leaf_level: u32,
    pub witness: CoverWitness,
}

/// Largest nearest-neighbour distance in the sample (0 for fewer than two points).
pub fn max_nearest_neighbour(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let k = points[0].len();
    if k > 3 || n < 64 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for j in 0..n {
                if i != j {
                    best = best.min(geom::dist(&points[i], &points[j]));
                }
            }
            worst = worst.max(best);
        }
        return worst;
    }
    let frame = Frame::bounding(points);
    let side = frame.max_side().max(f64::MIN_POSITIVE);
    let per_axis = (n as f64).powf(1.0 / k as f64).ceil().max(1.0);
    let cell = side / per_axis;
    let key = |p: &[f64]| -> Vec<i64> {
        p.iter()
            .zip(&frame.origin)
            .map(|(x, o)| ((x - o) / cell).floor() as i64)
            .collect()
    };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut worst: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        let c = key(p);
        let mut best = f64::INFINITY;
        let mut ring: i64 = 0;
        loop {
            // cells at Chebyshev ring distance `ring`
            let mut offs = vec![-ring; k];
            loop {
                if offs.iter().any(|o| o.abs() == ring) {
                    let cc: Vec<i64> = c.iter().zip(&offs).map(|(a, b)| a + b).collect();
                    if let Some(ids) = grid.get(&cc) {
                        for &j in ids {
                            if j != i {
                                best = best.min(geom::dist(p, &points[j]));
                            }
                        }
                    }
                }
                let mut d = 0;
                loop {
                    if d == k {
                        break;
                    }
                    offs[d] += 1;
                    if offs[d] > ring {
                        offs[d] = -ring;
                        d += 1;
                    } else {
                        break;
                    }
                }
                if d == k {
                    break;
                }
            }
            // anything in ring+1 or beyond is at least ring·cell away
            if best <= ring as f64 * cell {
                break;
            }
            ring += 1;
        }
        worst = worst.max(best);
    }
    worst
}

fn level_for(frame: &Frame, points: &[Vec<f64>], delta: Option<f64>, cfg: &ContentConfig) -> Result<u32> {
    if let Some(j) = cfg.leaf_level {
        return Ok(j.min(cfg.max_level));
    }
    let nn = max_nearest_neighbour(points);
    let side = frame.max_side();
    let j_res = if nn > 0.0 && side > 0.0 {
        (side / nn).log2().floor().max(0.0) as u32
    } else {
        0
    };
    let j_delta = match delta {
        Some(d) if frame.diameter() > d => (frame.diameter() / d).log2().ceil().max(0.0) as u32,
        _ => 0,
    };
    let mut j = j_res.max(j_delta);
    if let Some(d) = delta {
        // guard against log rounding
        while j < cfg.max_level && frame.diameter() * (0.5f64).powi(j as i32) > d {
            j += 1;
        }
        if frame.diameter() * (0.5f64).powi(j as i32) > d {
            return Err(Error::Parameter(format!(
                "δ = {d} needs leaf cells finer than max_level {}",
                cfg.max_level
            )));
        }
    }
    Ok(j.min(cfg.max_level))
}

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: f64,
    merged: bool,
    children: Vec<usize>,
}

/// Upper bound on `ℋ^s_δ` of a finite point set, realised by a cover witness.
pub fn hausdorff_content(
    points: &[Vec<f64>],
    s: f64,
    delta: Option<f64>,
    cfg: &ContentConfig,
) -> Result<ContentEstimate> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!("exponent s = {s} must be nonnegative")));
    }
    if let Some(d) = delta {
        if !(d > 0.0) {
            return Err(Error::InvalidInput(format!("δ = {d} must be positive")));
        }
    }
    if points.is_empty() {
        return Ok(ContentEstimate {
            s,
            delta,
            upper: 0.0,
            leaf_level: 0,
            witness: CoverWitness {
                pieces: Vec::new(),
                s,
                value: 0.0,
            },
        });
    }
    let k = points[0].len();
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::InvalidInput("points of mixed dimension".into()));
    }
    let frame = cfg.frame.clone().unwrap_or_else(|| Frame::bounding(points));
    if frame.origin.len() != k {
        return Err(Error::InvalidInput("frame dimension differs from the points".into()));
    }
    if let Some(i) = points.iter().position(|p| !frame.contains(p)) {
        return Err(Error::InvalidInput(format!("point {i} lies outside the frame")));
    }
    if frame.diameter() == 0.0 {
        let p = points[0].clone();
        let piece = CoverPiece { lo: p.clone(), hi: p };
        let value = 0f64.powf(s);
        return Ok(ContentEstimate {
            s,
            delta,
            upper: value,
            leaf_level: 0,
            witness: CoverWitness {
                pieces: vec![piece],
                s,
                value,
            },
        });
    }
    let level = level_for(&frame, points, delta, cfg)?;
    let cells = 1u64 << level;
    let scale = (0.5f64).powi(level as i32);

    // leaves, in key order
    // per leaf: the extreme coordinates of its points, so rounding in the cell
    // edges never leaves a point outside its box
    let mut leaf_keys: BTreeMap<Vec<u64>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        let key: Vec<u64> = (0..k)
            .map(|i| {
                if frame.extent[i] == 0.0 {
                    0
                } else {
                    let c = ((p[i] - frame.origin[i]) / frame.extent[i] * cells as f64).floor();
                    (c.max(0.0) as u64).min(cells - 1)
                }
            })
            .collect();
        let e = leaf_keys.entry(key).or_insert_with(|| (p.clone(), p.clone()));
        for i in 0..k {
            e.0[i] = e.0[i].min(p[i]);
            e.1[i] = e.1[i].max(p[i]);
        }
    }
    let mut levels: Vec<Vec<Node>> = Vec::with_capacity(level as usize + 1);
    let (mut keys, extremes): (Vec<Vec<u64>>, Vec<(Vec<f64>, Vec<f64>)>) = leaf_keys.into_iter().unzip();
    let leaves: Vec<Node> = keys
        .iter()
        .zip(&extremes)
        .map(|(key, (pmin, pmax))| {
            let lo: Vec<f64> = (0..k)
                .map(|i| (frame.origin[i] + key[i] as f64 * frame.extent[i] * scale).min(pmin[i]))
                .collect();
            let hi: Vec<f64> = (0..k)
                .map(|i| (frame.origin[i] + (key[i] + 1) as f64 * frame.extent[i] * scale).max(pmax[i]))
                .collect();
            let cost = geom::dist(&lo, &hi).powf(s);
            Node {
                lo,
                hi,
                cost,
                merged: true,
                children: Vec::new(),
            }
        })
        .collect();
    levels.push(leaves);

    for _ in 0..level {
        let below = levels.last().unwrap();
        let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for (idx, key) in keys.iter().enumerate() {
            let parent: Vec<u64> = key.iter().map(|c| c >> 1).collect();
            groups.entry(parent).or_default().push(idx);
        }
        let mut next = Vec::with_capacity(groups.len());
        let mut next_keys = Vec::with_capacity(groups.len());
        for (pkey, children) in groups {
            let mut lo = below[children[0]].lo.clone();
            let mut hi = below[children[0]].hi.clone();
            let mut child_cost = 0.0;
            for &c in &children {
                for i in 0..k {
                    lo[i] = lo[i].min(below[c].lo[i]);
                    hi[i] = hi[i].max(below[c].hi[i]);
                }
                child_cost += below[c].cost;
            }
            let diam = geom::dist(&lo, &hi);
            let own = diam.powf(s);
            let allowed = delta.map_or(true, |d| diam <= d);
            let merged = allowed && own < child_cost;
            next.push(Node {
                lo,
                hi,
                cost: if merged { own } else { child_cost },
                merged,
                children,
            });
            next_keys.push(pkey);
        }
        levels.push(next);
        keys = next_keys;
    }

    // collect the chosen pieces top-down
    let mut pieces = Vec::new();
    let top = levels.len() - 1;
    let mut stack: Vec<(usize, usize)> = (0..levels[top].len()).rev().map(|i| (top, i)).collect();
    while let Some((lvl, idx)) = stack.pop() {
        let node = &levels[lvl][idx];
        if node.merged {
            pieces.push(CoverPiece {
                lo: node.lo.clone(),
                hi: node.hi.clone(),
            });
        } else {
            for &c in node.children.iter().rev() {
                stack.push((lvl - 1, c));
            }
        }
    }
    let mut witness = CoverWitness { pieces, s, value: 0.0 };
    witness.value = witness.recompute_value();
    Ok(ContentEstimate {
        s,
        delta,
        upper: witness.value,
        leaf_level: level,
        witness,
    })
}

#[derive(Debug, Clone)]
pub struct ProfileConfig {
    pub content: ContentConfig,
    pub delta: Option<f64>,
    /// Normalized content below this counts as having dropped to zero.
    pub threshold: f64,
    /// Number of coarser leaf levels used to measure decay under refinement.
    pub ladder_depth: u32,
    /// Minimum decay exponent (per halving of the resolution) that counts as vanishing.
    pub decay_tol: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            content: ContentConfig::default(),
            delta: None,
            threshold: 1e-6,
            ladder_depth: 4,
            decay_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub s: f64,
    /// Content bound of the sample rescaled so that the frame has diameter 1.
    pub normalized_upper: f64,
    /// Exponent `β` with content `∝ resolution^β` across the ladder.
    pub decay: f64,
    pub vanishing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionProfile {
    pub rows: Vec<ProfileRow>,
    /// First exponent whose content vanishes; `None` if none does.
    pub proxy: Option<f64>,
    /// The proxy brackets the dimension from above; the previous grid value from below.
    pub bracket: (f64, f64),
}

/// Content bounds across an exponent grid and a dimension proxy.
///
/// Finite samples always have zero content for `s > 0` in the limit, so the
/// proxy is read off how the bound behaves as the resolution is refined: it
/// vanishes at `s` when it shrinks geometrically across the resolution ladder,
/// or falls below `threshold` outright.
pub fn dimension_profile(points: &[Vec<f64>], s_grid: &[f64], cfg: &ProfileConfig) -> Result<DimensionProfile> {
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("s_grid must be strictly increasing".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    let frame = cfg.content.frame.clone().unwrap_or_else(|| Frame::bounding(points));
    let diam = frame.diameter();
    let scale = if diam > 0.0 { 1.0 / diam } else { 1.0 };
    let scaled: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&frame.origin).map(|(x, o)| (x - o) * scale).collect())
        .collect();
    let sframe = Frame {
        origin: vec![0.0; frame.origin.len()],
        extent: frame.extent.iter().map(|e| e * scale).collect(),
    };
    let delta = cfg.delta.map(|d| d * scale);
    let mut content = cfg.content.clone();
    content.frame = Some(sframe.clone());
    let top = level_for(&sframe, &scaled, delta, &content)?;
    let bottom = top.saturating_sub(cfg.ladder_depth);

    let mut rows = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let at = |level: u32| -> Result<f64> {
            let mut c = content.clone();
            c.leaf_level = Some(level);
            let cell_diam = sframe.diameter() * (0.5f64).powi(level as i32);
            let d = delta.map(|d| d.max(cell_diam));
            Ok(hausdorff_content(&scaled, s, d, &c)?.upper)
        };
        let fine = at(top)?;
        let decay = if top > bottom && fine > 0.0 {
            let coarse = at(bottom)?;
            (coarse.log2() - fine.log2()) / (top - bottom) as f64
        } else {
            0.0
        };
        let vanishing = fine < cfg.threshold || decay > cfg.decay_tol;
        rows.push(ProfileRow {
            s,
            normalized_upper: fine,
            decay,
            vanishing,
        });
    }
    let first = rows.iter().position(|r| r.vanishing);
    let proxy = first.map(|i| rows[i].s);
    let bracket = match first {
        Some(0) => (0.0, rows[0].s),
        Some(i) => (rows[i - 1].s, rows[i].s),
        None => (s_grid.last().copied().unwrap_or(0.0), f64::INFINITY),
    };
    Ok(DimensionProfile { rows, proxy, bracket })
}

/// CSV with columns `s, delta, upper, n_pieces`; an infinite `δ` is written as `inf`.
pub fn write_content_csv(rows: &[ContentEstimate], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "delta", "upper", "n_pieces"])?;
    for r in rows {
        w.write_record([
            r.s.to_string(),
            r.delta.map_or_else(|| "inf".to_string(), |d| d.to_string()),
            r.upper.to_string(),
            r.witness.pieces.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / (n - 1) as f64, 0.0]).collect()
    }

    #[test]
    fn single_point_has_zero_content() {
        let est = hausdorff_content(&[vec![0.3, 0.4]], 1.0, None, &ContentConfig::default()).unwrap();
        assert_eq!(est.upper, 0.0);
        est.witness.verify(&[vec![0.3, 0.4]]).unwrap();
    }

    #[test]
    fn empty_set_has_empty_witness() {
        let est = hausdorff_content(&[], 1.0, None, &ContentConfig::default()).unwrap();
        assert_eq!(est.upper, 0.0);
        assert!(est.witness.pieces.is_empty());
    }

    #[test]
    fn segment_content_at_most_one() {
        let pts = segment(1001);
        let est = hausdorff_content(&pts, 1.0, None, &ContentConfig::default()).unwrap();
        assert!(est.upper <= 1.0 + 1e-9, "upper = {}", est.upper);
        assert!(est.upper >= 1.0 - 1e-9, "upper = {}", est.upper);
        est.witness.verify(&pts).unwrap();
    }

    #[test]
    fn delta_bound_respected() {
        let pts = segment(1001);
        let est = hausdorff_content(&pts, 1.0, Some(0.01), &ContentConfig::default()).unwrap();
        assert!(est.witness.pieces.iter().all(|p| p.diameter() <= 0.01));
        est.witness.verify(&pts).unwrap();
    }

    #[test]
    fn s_zero_counts_pieces() {
        let pts = segment(101);
        let est = hausdorff_content(&pts, 0.0, None, &ContentConfig::default()).unwrap();
        assert_eq!(est.upper, 1.0);
    }

    #[test]
    fn nearest_neighbour_grid_matches_brute_force() {
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.618_034).fract(), (t * 0.414_214).fract()]
            })
            .collect();
        let mut brute: f64 = 0.0;
        for i in 0..pts.len() {
            let mut b = f64::INFINITY;
            for j in 0..pts.len() {
                if i != j {
                    b = b.min(geom::dist(&pts[i], &pts[j]));
                }
            }
            brute = brute.max(b);
        }
        assert_eq!(max_nearest_neighbour(&pts), brute);
    }

    #[test]
    fn profile_rejects_unsorted_grid() {
        let err = dimension_profile(&segment(10), &[1.0, 0.5], &ProfileConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
