//! Squashing planar fixtures by integrating away interval covers of their axis
//! projections.

use std::io::Write;

use serde::Serialize;

use crate::content::{hausdorff_content, ContentConfig};
use crate::fixtures::{Axis, FractalFixture};
use crate::geom;
use crate::measure::pushforward;
use crate::{Error, Result};

/// Slack allowed when checking that fixture coordinates lie in a cover.
const COVER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalCover {
    intervals: Vec<(f64, f64)>,
    total_length: f64,
}

impl IntervalCover {
    /// Normalizes to a sorted list of disjoint closed intervals.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(iv) = intervals.iter().find(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput(format!("bad interval {iv:?}")));
        }
        let intervals = geom::merge_intervals(intervals);
        let total_length = intervals.iter().map(|(a, b)| b - a).sum();
        Ok(Self {
            intervals,
            total_length,
        })
    }

    pub fn empty() -> Self {
        Self {
            intervals: Vec::new(),
            total_length: 0.0,
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Index of the interval containing `t`, if any.
    pub fn locate(&self, t: f64) -> Option<usize> {
        let j = self.intervals.partition_point(|(a, _)| *a <= t);
        if j == 0 {
            return None;
        }
        let (_, b) = self.intervals[j - 1];
        (t <= b).then_some(j - 1)
    }

    pub fn covers(&self, t: f64) -> bool {
        self.locate(t).is_some()
    }

    /// Smallest gap between consecutive intervals (∞ with fewer than two).
    pub fn min_gap(&self) -> f64 {
        self.intervals
            .windows(2)
            .map(|w| w[1].0 - w[0].1)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `t ↦ ∫_0^t χ_{ℝ∖G}`: slope 1 off the cover, constant on each interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapIntegralMap {
    cover: IntervalCover,
    /// Cover length strictly before each interval.
    prefix: Vec<f64>,
    /// Cover length below 0.
    origin_offset: f64,
}

impl GapIntegralMap {
    pub fn new(cover: IntervalCover) -> Self {
        let mut prefix = Vec::with_capacity(cover.len() + 1);
        let mut acc = 0.0;
        for (a, b) in cover.intervals() {
            prefix.push(acc);
            acc += b - a;
        }
        prefix.push(acc);
        let mut map = Self {
            cover,
            prefix,
            origin_offset: 0.0,
        };
        map.origin_offset = map.covered_below(0.0);
        map
    }

    pub fn cover(&self) -> &IntervalCover {
        &self.cover
    }

    fn covered_below(&self, t: f64) -> f64 {
        let ivs = self.cover.intervals();
        let j = ivs.partition_point(|(a, _)| *a <= t);
        if j == 0 {
            return 0.0;
        }
        let (a, b) = ivs[j - 1];
        self.prefix[j - 1] + (t.min(b) - a)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let ivs = self.cover.intervals();
        let j = ivs.partition_point(|(a, _)| *a <= t);
        if j > 0 && t <= ivs[j - 1].1 {
            // same expression for every point of the interval
            ivs[j - 1].0 - (self.prefix[j - 1] - self.origin_offset)
        } else {
            t - (self.prefix[j] - self.origin_offset)
        }
    }

    /// Interval endpoints, where the slope changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.cover.intervals().iter().flat_map(|(a, b)| [*a, *b]).collect()
    }
}

/// Cover of the fixture's axis projection with total length at most `eps_budget`.
///
/// Uses the coarsest generation `m ≤ max_generation` whose cell projections are
/// short enough. Returns the cover and `m`.
pub fn project_cover(
    fix: &FractalFixture,
    axis: Axis,
    eps_budget: f64,
    max_generation: u32,
) -> Result<(IntervalCover, u32)> {
    if !(eps_budget > 0.0) {
        return Err(Error::InvalidInput(format!("ε budget {eps_budget} must be positive")));
    }
    for m in 0..=max_generation {
        let cover = IntervalCover::new(fix.axis_projection(axis, m)?)?;
        if cover.total_length() <= eps_budget {
            check_covers(&cover, fix, axis)?;
            return Ok((cover, m));
        }
    }
    let hint = if fix.ifs.null_projections {
        format!(
            "; reaching it needs generation {} (max {max_generation})",
            (1.0 / eps_budget).log2().ceil()
        )
    } else {
        "; this projection is not null".to_string()
    };
    Err(Error::Parameter(format!(
        "ε budget {eps_budget} not reached on axis {axis:?}{hint}"
    )))
}

fn check_covers(cover: &IntervalCover, fix: &FractalFixture, axis: Axis) -> Result<()> {
    let i = axis.index();
    for p in &fix.points {
        let t = p[i];
        if !(cover.covers(t) || cover.covers(t - COVER_TOL) || cover.covers(t + COVER_TOL)) {
            return Err(Error::contract("interval cover", format!("coordinate {t} is uncovered")));
        }
    }
    Ok(())
}

pub const DEFAULT_MAX_GENERATION: u32 = 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarChecks {
    pub image_count: usize,
    pub image_bound: usize,
    pub sup_deviation: f64,
    pub sup_bound: f64,
    pub max_pair_ratio: f64,
    pub lipschitz_ok: bool,
}

impl PlanarChecks {
    pub fn all_ok(&self) -> bool {
        self.image_count <= self.image_bound && self.sup_deviation <= self.sup_bound && self.lipschitz_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarSquashMap {
    pub fx: GapIntegralMap,
    pub fy: GapIntegralMap,
    pub refinement: (u32, u32),
    pub eps: f64,
}

impl PlanarSquashMap {
    pub fn from_covers(cover_x: IntervalCover, cover_y: IntervalCover, eps: f64) -> Self {
        Self {
            fx: GapIntegralMap::new(cover_x),
            fy: GapIntegralMap::new(cover_y),
            refinement: (0, 0),
            eps,
        }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        vec![self.fx.eval(p[0]), self.fy.eval(p[1])]
    }

    pub fn cover_x(&self) -> &IntervalCover {
        self.fx.cover()
    }

    pub fn cover_y(&self) -> &IntervalCover {
        self.fy.cover()
    }

    /// Image count, sup deviation and the 1-Lipschitz test over all pairs.
    pub fn check(&self, points: &[Vec<f64>]) -> Result<PlanarChecks> {
        let images: Vec<Vec<f64>> = points.iter().map(|p| self.apply(p)).collect();
        let image_count = if points.is_empty() {
            0
        } else {
            pushforward(&crate::measure::DiscreteMeasure::uniform(2, points.to_vec())?, |p| Ok(self.apply(p)))?.len()
        };
        let sup_deviation = points
            .iter()
            .zip(&images)
            .map(|(p, q)| geom::dist(p, q))
            .fold(0.0, f64::max);
        let (max_pair_ratio, lipschitz_ok) = pair_lipschitz(points, &images, 1.0, 1e-12);
        Ok(PlanarChecks {
            image_count,
            image_bound: (self.cover_x().len() + 1) * (self.cover_y().len() + 1),
            sup_deviation,
            sup_bound: std::f64::consts::SQRT_2 * self.eps,
            max_pair_ratio,
            lipschitz_ok,
        })
    }
}

/// Largest `|F(p) − F(q)| / |p − q|` over all pairs, and whether every pair
/// satisfies `|F(p) − F(q)| ≤ L|p − q| + tol`.
pub fn pair_lipschitz(points: &[Vec<f64>], images: &[Vec<f64>], lip: f64, tol: f64) -> (f64, bool) {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = geom::dist(&points[i], &points[j]);
            let e = geom::dist(&images[i], &images[j]);
            if e > lip * d + tol {
                ok = false;
            }
            if d > 0.0 {
                worst = worst.max(e / d);
            }
        }
    }
    (worst, ok)
}

/// The product map for a fixture whose axis projections are null, checked on
/// every fixture point and pair.
pub fn build_planar_squash(fix: &FractalFixture, eps: f64) -> Result<(PlanarSquashMap, PlanarChecks)> {
    let (cx, mx) = project_cover(fix, Axis::X, eps, DEFAULT_MAX_GENERATION)?;
    let (cy, my) = project_cover(fix, Axis::Y, eps, DEFAULT_MAX_GENERATION)?;
    let mut map = PlanarSquashMap::from_covers(cx, cy, eps);
    map.refinement = (mx, my);
    let checks = map.check(&fix.points)?;
    if !checks.all_ok() {
        return Err(Error::contract("planar squash", format!("{checks:?}")));
    }
    Ok((map, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub eps: f64,
    pub refinement: u32,
    pub image_count: usize,
    pub sup_dev: f64,
    pub h1_content_upper: f64,
    pub cover_total: f64,
    /// False when the fixture's projections are not null and the cover
    /// budget could not be honoured.
    pub certified: bool,
}

pub const UNCERTIFIED_NOTE: &str = "projection-null not certified";

/// One row per `eps`; `eps_list` must be decreasing.
pub fn squash_report(fix: &FractalFixture, eps_list: &[f64]) -> Result<Vec<ReportRow>> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("eps_list must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (map, checks, certified) = if fix.ifs.null_projections {
            let (map, checks) = build_planar_squash(fix, eps)?;
            (map, checks, true)
        } else {
            // best effort: covers at the fixture's own generation
            let m = fix.generation;
            let cx = IntervalCover::new(fix.axis_projection(Axis::X, m)?)?;
            let cy = IntervalCover::new(fix.axis_projection(Axis::Y, m)?)?;
            let mut map = PlanarSquashMap::from_covers(cx, cy, eps);
            map.refinement = (m, m);
            let checks = map.check(&fix.points)?;
            (map, checks, false)
        };
        let images: Vec<Vec<f64>> = fix.points.iter().map(|p| map.apply(p)).collect();
        let h1 = hausdorff_content(&images, 1.0, None, &ContentConfig::default())?.upper;
        rows.push(ReportRow {
            eps,
            refinement: map.refinement.0.max(map.refinement.1),
            image_count: checks.image_count,
            sup_dev: checks.sup_deviation,
            h1_content_upper: h1,
            cover_total: map.cover_x().total_length().max(map.cover_y().total_length()),
            certified,
        });
    }
    Ok(rows)
}

/// CSV with columns `eps, image_count, sup_dev, h1_content_upper`.
pub fn write_report_csv(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "image_count", "sup_dev", "h1_content_upper"])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.image_count.to_string(),
            r.sup_dev.to_string(),
            r.h1_content_upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cover(v: &[(f64, f64)]) -> IntervalCover {
        IntervalCover::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gap_map_examples() {
        let f = GapIntegralMap::new(cover(&[(0.25, 0.75)]));
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(0.5), 0.25);
        let id = GapIntegralMap::new(IntervalCover::empty());
        assert_eq!(id.eval(0.37), 0.37);
        assert_eq!(id.eval(-2.0), -2.0);
    }

    #[test]
    fn gap_map_four_interval_cover() {
        let fx = FractalFixture::four_corner(3).unwrap();
        let c = IntervalCover::new(fx.axis_projection(Axis::X, 2).unwrap()).unwrap();
        assert_eq!(c.len(), 4);
        let f = GapIntegralMap::new(c.clone());
        assert!((f.eval(1.0) - (1.0 - c.total_length())).abs() < 1e-15);
    }

    #[test]
    fn gap_map_negative_side() {
        let f = GapIntegralMap::new(cover(&[(-0.5, -0.25), (0.5, 0.6)]));
        assert_eq!(f.eval(0.0), 0.0);
        assert!((f.eval(-1.0) - (-0.75)).abs() < 1e-15);
        assert_eq!(f.eval(-0.3), f.eval(-0.5));
    }

    #[test]
    fn project_cover_examples() {
        let fx3 = FractalFixture::four_corner(3).unwrap();
        let (c, m) = project_cover(&fx3, Axis::X, 0.25, 10).unwrap();
        assert_eq!((c.len(), m), (4, 2));
        assert_eq!(c.total_length(), 0.25);
        let fx5 = FractalFixture::four_corner(5).unwrap();
        let (c, m) = project_cover(&fx5, Axis::Y, 0.05, 10).unwrap();
        assert_eq!(m, 5);
        assert_eq!(c.total_length(), 0.03125);
        let (c, m) = project_cover(&fx5, Axis::X, 2.0, 10).unwrap();
        assert_eq!((m, c.intervals().to_vec()), (0, vec![(0.0, 1.0)]));
    }

    #[test]
    fn project_cover_names_generation() {
        let fx = FractalFixture::four_corner(2).unwrap();
        let err = project_cover(&fx, Axis::X, 1e-3, 4).unwrap_err().to_string();
        assert!(err.contains("generation 10"), "{err}");
    }

    #[test]
    fn planar_example_gen4() {
        let fx = FractalFixture::four_corner(4).unwrap();
        let (map, checks) = build_planar_squash(&fx, 0.125).unwrap();
        assert_eq!(map.refinement, (3, 3));
        assert!(checks.image_count <= 81);
        assert!(checks.sup_deviation <= std::f64::consts::SQRT_2 * 0.125);
    }

    #[test]
    fn large_eps_collapses() {
        let fx = FractalFixture::four_corner(3).unwrap();
        let (_, checks) = build_planar_squash(&fx, 5.0).unwrap();
        assert_eq!(checks.image_count, 1);
    }

    #[test]
    fn single_point_fixture() {
        let fx = FractalFixture::four_corner(0).unwrap();
        let (_, checks) = build_planar_squash(&fx, 0.1).unwrap();
        assert_eq!(checks.image_count, 1);
        assert!(checks.sup_deviation <= std::f64::consts::SQRT_2 * 0.1);
    }

    #[test]
    fn report_rows() {
        let fx = FractalFixture::four_corner(5).unwrap();
        let rows = squash_report(&fx, &[0.5, 0.25, 0.125]).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.sup_dev <= std::f64::consts::SQRT_2 * r.eps);
            assert!(r.certified);
        }
        assert!(squash_report(&fx, &[]).unwrap().is_empty());
        assert!(squash_report(&fx, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn koch_rows_uncertified() {
        let fx = FractalFixture::koch(3).unwrap();
        let rows = squash_report(&fx, &[0.5, 0.25]).unwrap();
        assert!(rows.iter().all(|r| !r.certified && r.cover_total > 0.99));
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_report_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "eps,image_count,sup_dev,h1_content_upper");
    }
}
