//! Self-similar planar fixtures given by iterated function systems.

use serde::Serialize;

use crate::geom;
use crate::measure::DiscreteMeasure;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMap {
    /// Row-major linear part.
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl AffineMap {
    pub fn similarity(ratio: f64, angle: f64, offset: [f64; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            linear: [[ratio * c, -ratio * s], [ratio * s, ratio * c]],
            offset,
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let l = &self.linear;
        [
            l[0][0] * p[0] + l[0][1] * p[1] + self.offset[0],
            l[1][0] * p[0] + l[1][1] * p[1] + self.offset[1],
        ]
    }

    fn is_diagonal(&self) -> bool {
        self.linear[0][1] == 0.0 && self.linear[1][0] == 0.0
    }
}

/// A contracting IFS on the plane with a convex polygon it maps into itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ifs {
    pub maps: Vec<AffineMap>,
    pub hull: Vec<[f64; 2]>,
    /// Whether both axis projections of the attractor are Lebesgue-null.
    pub null_projections: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Generator {
    FourCorner,
    Koch,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractalFixture {
    pub generator: Generator,
    pub generation: u32,
    pub ifs: Ifs,
    /// Images of the base point under all words of length `generation`.
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

pub fn four_corner_ifs() -> Ifs {
    let maps = [[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]]
        .into_iter()
        .map(|c| AffineMap {
            linear: [[0.25, 0.0], [0.0, 0.25]],
            offset: c,
        })
        .collect();
    Ifs {
        maps,
        hull: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        null_projections: true,
    }
}

pub fn koch_ifs() -> Ifs {
    let third = 1.0 / 3.0;
    let a = std::f64::consts::FRAC_PI_3;
    let h = 3f64.sqrt() / 6.0;
    Ifs {
        maps: vec![
            AffineMap::similarity(third, 0.0, [0.0, 0.0]),
            AffineMap::similarity(third, a, [third, 0.0]),
            AffineMap::similarity(third, -a, [0.5, h]),
            AffineMap::similarity(third, 0.0, [2.0 * third, 0.0]),
        ],
        hull: vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
        null_projections: false,
    }
}

const MAX_POINTS: usize = 1 << 24;

impl FractalFixture {
    pub fn four_corner(generation: u32) -> Result<Self> {
        Self::build(Generator::FourCorner, four_corner_ifs(), generation)
    }

    pub fn koch(generation: u32) -> Result<Self> {
        Self::build(Generator::Koch, koch_ifs(), generation)
    }

    pub fn custom(ifs: Ifs, generation: u32) -> Result<Self> {
        if ifs.maps.is_empty() || ifs.hull.len() < 1 {
            return Err(Error::InvalidInput("an IFS needs maps and a hull".into()));
        }
        Self::build(Generator::Custom, ifs, generation)
    }

    pub fn by_name(name: &str, generation: u32) -> Result<Self> {
        match name {
            "four_corner" | "four-corner" => Self::four_corner(generation),
            "koch" => Self::koch(generation),
            other => Err(Error::InvalidInput(format!("unknown fixture `{other}`"))),
        }
    }

    fn build(generator: Generator, ifs: Ifs, generation: u32) -> Result<Self> {
        let count = (ifs.maps.len() as f64).powi(generation as i32);
        if count > MAX_POINTS as f64 {
            return Err(Error::Parameter(format!("generation {generation} would produce {count} points")));
        }
        // S_{w1} ∘ … ∘ S_{wn}(0): apply the innermost map first.
        let mut pts = vec![[0.0, 0.0]];
        for _ in 0..generation {
            let mut next = Vec::with_capacity(pts.len() * ifs.maps.len());
            for m in &ifs.maps {
                for p in &pts {
                    next.push(m.apply(*p));
                }
            }
            pts = next;
        }
        Ok(Self {
            generator,
            generation,
            points: pts.iter().map(|p| p.to_vec()).collect(),
            ifs,
        })
    }

    /// Uniform probability on the points.
    pub fn natural_measure(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::uniform(2, self.points.clone())
    }

    /// Images of the hull under all words of length `m`.
    pub fn cells(&self, m: u32) -> Result<Vec<Vec<[f64; 2]>>> {
        let count = (self.ifs.maps.len() as f64).powi(m as i32);
        if count > MAX_POINTS as f64 {
            return Err(Error::Parameter(format!("generation {m} has {count} cells")));
        }
        let mut cells = vec![self.ifs.hull.clone()];
        for _ in 0..m {
            let mut next = Vec::with_capacity(cells.len() * self.ifs.maps.len());
            for map in &self.ifs.maps {
                for c in &cells {
                    next.push(c.iter().map(|p| map.apply(*p)).collect());
                }
            }
            cells = next;
        }
        Ok(cells)
    }

    /// Projection of the generation-`m` cells onto an axis, as a sorted union of
    /// closed intervals.
    pub fn axis_projection(&self, axis: Axis, m: u32) -> Result<Vec<(f64, f64)>> {
        let i = axis.index();
        if self.ifs.maps.iter().all(AffineMap::is_diagonal) {
            // the projection is itself a one-dimensional IFS
            let lo = self.ifs.hull.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            let hi = self.ifs.hull.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut ivs = vec![(lo, hi)];
            for _ in 0..m {
                let mut next = Vec::with_capacity(ivs.len() * self.ifs.maps.len());
                for map in &self.ifs.maps {
                    let (a, b) = (map.linear[i][i], map.offset[i]);
                    for &(l, h) in &ivs {
                        let (x, y) = (a * l + b, a * h + b);
                        next.push((x.min(y), x.max(y)));
                    }
                }
                next.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
                next.dedup();
                ivs = next;
            }
            return Ok(geom::merge_intervals(ivs));
        }
        let ivs = self
            .cells(m)?
            .iter()
            .map(|c| {
                let lo = c.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi = c.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        Ok(merge_close(ivs, 1e-12))
    }
}

/// Union of intervals, also joining neighbours separated by at most `slack`.
fn merge_close(ivs: Vec<(f64, f64)>, slack: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in geom::merge_intervals(ivs) {
        match out.last_mut() {
            Some(last) if a - last.1 <= slack => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_corner_points_on_grid() {
        let fx = FractalFixture::four_corner(4).unwrap();
        assert_eq!(fx.points.len(), 256);
        let cell = 4f64.powi(-4);
        for p in &fx.points {
            for x in p {
                let k = x / cell;
                assert_eq!(k, k.round());
            }
        }
        let mu = fx.natural_measure().unwrap();
        assert_eq!(mu.len(), 256);
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_corner_projection_counts() {
        let fx = FractalFixture::four_corner(5).unwrap();
        for m in 0..6 {
            let p = fx.axis_projection(Axis::X, m).unwrap();
            assert_eq!(p.len(), 1 << m);
            let total: f64 = p.iter().map(|(a, b)| b - a).sum();
            assert!((total - 0.5f64.powi(m as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn koch_projection_is_full() {
        let fx = FractalFixture::koch(2).unwrap();
        let p = fx.axis_projection(Axis::X, 3).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].0).abs() < 1e-12 && (p[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn koch_points_stay_in_hull() {
        let fx = FractalFixture::koch(4).unwrap();
        let h = 3f64.sqrt() / 6.0;
        for p in &fx.points {
            assert!(p[1] >= -1e-12 && p[1] <= h + 1e-12);
            assert!(p[0] >= -1e-12 && p[0] <= 1.0 + 1e-12);
        }
    }
}
