//! Squashing a measure on the line into finitely many points.
//!
//! A profile with period `R`, height `N` and phase `t0` splits the line into
//! rise cells `[t0+kR, t0+kR+R/N)` and flat cells `[t0+kR+R/N, t0+(k+1)R)`.
//! The density is `N` on rise cells and 0 on flat cells; its integral from
//! `t0` is a nondecreasing staircase that sends every flat cell to a single
//! multiple of `R`.

use serde::Serialize;

use crate::measure::DiscreteMeasure;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SquashProfile {
    pub period: f64,
    pub height: u32,
    pub phase: f64,
    /// Factor applied to the staircase to obtain the final map.
    pub scale: f64,
}

/// Which half of its period cell a point falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Rise(i64),
    Flat(i64),
}

impl SquashProfile {
    pub fn new(period: f64, height: u32, phase: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidInput(format!("period {period} must be positive")));
        }
        if height < 2 {
            return Err(Error::Parameter(format!("height {height} must be at least 2")));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidInput("phase must be finite".into()));
        }
        Ok(Self {
            period,
            height,
            phase,
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Period index and offset within the period, in rise-length units `[0, N)`.
    ///
    /// Working in these units keeps lattice phases `i·R/N` on the lattice.
    fn locate(&self, t: f64) -> (i64, f64) {
        let n = self.height as f64;
        let per_unit = n / self.period;
        let z = t * per_unit - self.phase * per_unit;
        let mut k = (z / n).floor();
        let mut w = z - k * n;
        if w < 0.0 {
            k -= 1.0;
            w += n;
        }
        if w >= n {
            k += 1.0;
            w -= n;
        }
        (k as i64, w)
    }

    pub fn cell(&self, t: f64) -> Cell {
        let (k, w) = self.locate(t);
        if w < 1.0 {
            Cell::Rise(k)
        } else {
            Cell::Flat(k)
        }
    }

    /// The density: `N` on rise cells, 0 elsewhere.
    pub fn phi(&self, t: f64) -> f64 {
        match self.cell(t) {
            Cell::Rise(_) => self.height as f64,
            Cell::Flat(_) => 0.0,
        }
    }

    /// `∫_{t0}^t φ`, in closed form.
    pub fn g(&self, t: f64) -> f64 {
        let (k, w) = self.locate(t);
        if w < 1.0 {
            k as f64 * self.period + w * self.period
        } else {
            (k + 1) as f64 * self.period
        }
    }

    /// The scaled staircase `scale · g`.
    pub fn h(&self, t: f64) -> f64 {
        self.scale * self.g(t)
    }
}

/// Picks the phase among `i·R/N` that puts the least mass on rise cells.
///
/// Returns the phase and the mass it puts on rise cells.
pub fn choose_t0(mu: &DiscreteMeasure, period: f64, height: u32) -> Result<(f64, f64)> {
    let masses = shift_masses(mu, period, height)?;
    let mut best = 0;
    for i in 1..masses.len() {
        if masses[i] < masses[best] {
            best = i;
        }
    }
    Ok((shift(period, height, best), masses[best]))
}

fn shift(period: f64, height: u32, i: usize) -> f64 {
    i as f64 * period / height as f64
}

/// Mass on rise cells for each of the `N` lattice phases.
pub fn shift_masses(mu: &DiscreteMeasure, period: f64, height: u32) -> Result<Vec<f64>> {
    let atoms = if mu.is_empty() { Vec::new() } else { mu.line_atoms()? };
    (0..height as usize)
        .map(|i| {
            let p = SquashProfile::new(period, height, shift(period, height, i))?;
            Ok(atoms
                .iter()
                .zip(mu.weights())
                .filter(|(t, _)| matches!(p.cell(**t), Cell::Rise(_)))
                .map(|(_, w)| *w)
                .sum())
        })
        .collect()
}

/// `|t0| + R`, checked against `|g(t) − t|` on a uniform grid of `[−D, D]`.
pub fn sup_distance_bound(p: &SquashProfile, half_width: f64, grid: usize) -> Result<f64> {
    let bound = p.phase.abs() + p.period;
    for t in uniform_grid(half_width, grid) {
        let dev = (p.g(t) - t).abs();
        if dev > bound {
            return Err(Error::contract(
                "sup distance",
                format!("|g(t) − t| = {dev} > {bound} at t = {t}"),
            ));
        }
    }
    Ok(bound)
}

/// Ratio bound `(q+1)/(q−1)` with `q = ⌊|s−t|/R⌋`, valid once `|s−t| ≥ 2R`.
pub fn ratio_bound_at(period: f64, gap: f64) -> Result<f64> {
    if !(gap >= 2.0 * period) {
        return Err(Error::Precondition(format!(
            "|s − t| = {gap} is below twice the period {period}"
        )));
    }
    let q = (gap / period).floor();
    Ok((q + 1.0) / (q - 1.0))
}

/// The ratio bound for the pair, after checking the staircase against it.
pub fn large_scale_ratio_bound(p: &SquashProfile, s: f64, t: f64) -> Result<f64> {
    let gap = (s - t).abs();
    let bound = ratio_bound_at(p.period, gap)?;
    let rise = (p.g(s) - p.g(t)).abs();
    if rise > bound * gap {
        return Err(Error::contract(
            "large-scale ratio",
            format!("|g(s) − g(t)| / |s − t| = {} > {bound} at s = {s}, t = {t}", rise / gap),
        ));
    }
    Ok(bound)
}

/// `n + 1` equispaced points of `[−D, D]`.
pub fn uniform_grid(half_width: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(1);
    (0..=n).map(move |i| -half_width + 2.0 * half_width * i as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SquashParams {
    pub eta: f64,
    pub eps: f64,
    pub r: f64,
    pub half_width: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquashChecks {
    pub sup_deviation: f64,
    pub sup_ok: bool,
    pub max_local_ratio: f64,
    pub lipschitz_ok: bool,
    pub max_large_scale_ratio: f64,
    pub large_scale_ok: bool,
    /// Every atom pair is closer than `r`, so the large-scale check is empty.
    pub large_scale_vacuous: bool,
    pub retained_mass: f64,
    pub mass_ok: bool,
    pub image_bound: usize,
    pub image_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquashResult {
    pub profile: SquashProfile,
    pub params: SquashParams,
    /// Indices of the retained atoms.
    pub retained: Vec<usize>,
    /// Sorted values of the map on the retained atoms.
    pub image_points: Vec<f64>,
    pub checks: SquashChecks,
}

impl SquashResult {
    pub fn h(&self, t: f64) -> f64 {
        self.profile.h(t)
    }
}

const VERIFY_GRID: usize = 10_000;

/// Builds the squashing map for a probability measure on `[−D, D]` and verifies
/// its four contracts before returning it.
pub fn build_h(mu: &DiscreteMeasure, eta: f64, r: f64, eps: f64, half_width: f64) -> Result<SquashResult> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!("η = {eta} must lie in (0, 1)")));
    }
    if !(eps > 0.0) || !(r > 0.0) || !(half_width > 0.0) {
        return Err(Error::InvalidInput("ε, r and D must be positive".into()));
    }
    let atoms = if mu.is_empty() { Vec::new() } else { mu.line_atoms()? };
    if (mu.total_mass() - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("μ has mass {} (expected 1)", mu.total_mass())));
    }
    if let Some(t) = atoms.iter().find(|t| t.abs() > half_width) {
        return Err(Error::Precondition(format!("atom {t} lies outside [−{half_width}, {half_width}]")));
    }

    let height = ((1.0 / eta) - 1e-9).ceil().max(2.0) as u32;
    let scale = 1.0 - eps / (2.0 * half_width.max(1.0));
    let mut period = eps / 8.0;
    let mut steps = 0;
    loop {
        let ok = 2.0 * period < eps / 2.0
            && ratio_bound_at(period, r).map_or(false, |b| b < 1.0 / scale);
        if ok {
            break;
        }
        period /= 2.0;
        steps += 1;
        if steps > 200 {
            return Err(Error::Parameter("no period satisfies the large-scale bound".into()));
        }
    }
    let (phase, _) = choose_t0(mu, period, height)?;
    let profile = SquashProfile::new(period, height, phase)?.with_scale(scale);

    // flat-cell atoms, then everything sharing their values
    let flat_values: Vec<u64> = {
        let mut v: Vec<u64> = atoms
            .iter()
            .filter(|t| matches!(profile.cell(**t), Cell::Flat(_)))
            .map(|t| profile.h(*t).to_bits())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let retained: Vec<usize> = (0..atoms.len())
        .filter(|&i| flat_values.binary_search(&profile.h(atoms[i]).to_bits()).is_ok())
        .collect();
    let mut image_points: Vec<f64> = flat_values.iter().map(|b| f64::from_bits(*b)).collect();
    image_points.sort_by(f64::total_cmp);
    let retained_mass: f64 = retained.iter().map(|&i| mu.weights()[i]).sum();

    let lipschitz = height as f64;
    let mut sample: Vec<f64> = uniform_grid(half_width, VERIFY_GRID).chain(atoms.iter().copied()).collect();
    sample.sort_by(f64::total_cmp);

    let sup_deviation = sample.iter().map(|&t| (profile.h(t) - t).abs()).fold(0.0, f64::max);
    let mut max_local_ratio: f64 = 0.0;
    let mut lipschitz_ok = true;
    for w in sample.windows(2) {
        let (s, t) = (w[0], w[1]);
        let rise = (profile.h(s) - profile.h(t)).abs();
        if rise > lipschitz * (s - t).abs() {
            lipschitz_ok = false;
        }
        if s != t {
            max_local_ratio = max_local_ratio.max(rise / (t - s));
        }
    }
    let mut max_large_scale_ratio: f64 = 0.0;
    let mut large_scale_ok = true;
    let mut any_far_pair = false;
    let values: Vec<f64> = atoms.iter().map(|&t| profile.h(t)).collect();
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let gap = (atoms[i] - atoms[j]).abs();
            let rise = (values[i] - values[j]).abs();
            if rise > lipschitz * gap {
                lipschitz_ok = false;
            }
            if gap >= r {
                any_far_pair = true;
                max_large_scale_ratio = max_large_scale_ratio.max(rise / gap);
                if rise > gap {
                    large_scale_ok = false;
                }
            }
        }
    }
    let image_bound = (2.0 * half_width / period).ceil() as usize + 2;
    let checks = SquashChecks {
        sup_deviation,
        sup_ok: sup_deviation < eps,
        max_local_ratio,
        lipschitz_ok,
        max_large_scale_ratio,
        large_scale_ok,
        large_scale_vacuous: r >= 2.0 * half_width || !any_far_pair,
        retained_mass,
        mass_ok: retained_mass >= 1.0 - eta,
        image_bound,
        image_ok: image_points.len() <= image_bound,
    };
    let failed = [
        ("‖h − Id‖ < ε", checks.sup_ok),
        ("N-Lipschitz", checks.lipschitz_ok),
        ("1-Lipschitz at scale r", checks.large_scale_ok),
        ("μ(E) ≥ 1 − η", checks.mass_ok),
        ("finite image", checks.image_ok),
    ]
    .into_iter()
    .find(|(_, ok)| !ok);
    if let Some((name, _)) = failed {
        return Err(Error::contract(name, format!("{checks:?}")));
    }
    Ok(SquashResult {
        profile,
        params: SquashParams {
            eta,
            eps,
            r,
            half_width,
            lipschitz,
        },
        retained,
        image_points,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(period: f64, height: u32, phase: f64) -> SquashProfile {
        SquashProfile::new(period, height, phase).unwrap()
    }

    #[test]
    fn phi_values() {
        assert_eq!(p(1.0, 2, 0.0).phi(0.25), 2.0);
        assert_eq!(p(1.0, 2, 0.0).phi(0.75), 0.0);
        assert_eq!(p(1.0, 2, 0.3).phi(0.3), 2.0);
    }

    #[test]
    fn g_values() {
        let q = p(1.0, 2, 0.0);
        assert_eq!(q.g(0.5), 1.0);
        assert_eq!(q.g(1.0), 1.0);
        assert_eq!(q.g(0.0), 0.0);
        assert_eq!(p(0.37, 5, 0.11).g(0.11), 0.0);
    }

    #[test]
    fn pushforward_through_g() {
        let mu = DiscreteMeasure::on_line(&[0.0, 0.3, 0.9], &[1.0, 1.0, 1.0]).unwrap();
        let q = p(1.0, 2, 0.0);
        let out = mu.map(|x| vec![q.g(x[0])]).unwrap();
        let got: Vec<f64> = out.points().iter().map(|x| x[0]).collect();
        assert_eq!(got, vec![0.0, 0.6, 1.0]);
    }

    #[test]
    fn choose_t0_avoids_single_atom() {
        let mu = DiscreteMeasure::on_line(&[0.25], &[1.0]).unwrap();
        let (t0, covered) = choose_t0(&mu, 1.0, 4).unwrap();
        assert_eq!(covered, 0.0);
        assert_ne!(t0, 0.25);
    }

    #[test]
    fn choose_t0_symmetric_lattice() {
        let atoms: Vec<f64> = (0..5).map(|i| i as f64 / 5.0).collect();
        let mu = DiscreteMeasure::on_line(&atoms, &[0.2; 5]).unwrap();
        let masses = shift_masses(&mu, 1.0, 5).unwrap();
        for m in masses {
            assert!((m - 0.2).abs() < 1e-15, "{m}");
        }
    }

    #[test]
    fn choose_t0_empty() {
        let (t0, covered) = choose_t0(&DiscreteMeasure::empty(1), 1.0, 3).unwrap();
        assert_eq!((t0, covered), (0.0, 0.0));
    }

    #[test]
    fn sup_bounds() {
        assert_eq!(sup_distance_bound(&p(1.0, 2, 0.0), 3.0, 10_000).unwrap(), 1.0);
        assert!((sup_distance_bound(&p(0.1, 3, 0.05), 1.0, 10_000).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn ratio_bounds() {
        let q = p(0.1, 2, 0.0);
        assert!((large_scale_ratio_bound(&q, 0.0, 0.5).unwrap() - 1.5).abs() < 1e-12);
        assert!((large_scale_ratio_bound(&q, 0.0, 10.0).unwrap() - 101.0 / 99.0).abs() < 1e-12);
        assert!(matches!(
            large_scale_ratio_bound(&q, 0.0, 0.15),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn build_h_height_from_eta() {
        let mu = DiscreteMeasure::on_line(&[0.0], &[1.0]).unwrap();
        let res = build_h(&mu, 0.25, 0.05, 0.01, 1.0).unwrap();
        assert_eq!(res.profile.height, 4);
        assert_eq!(res.params.lipschitz, 4.0);
        assert_eq!(res.retained, vec![0]);
    }

    #[test]
    fn build_h_rejects_bad_eta() {
        let mu = DiscreteMeasure::on_line(&[0.0], &[1.0]).unwrap();
        assert!(matches!(build_h(&mu, 1.0, 0.05, 0.01, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn build_h_flags_vacuous_scale() {
        let mu = DiscreteMeasure::on_line(&[-0.5, 0.5], &[0.5, 0.5]).unwrap();
        let res = build_h(&mu, 0.5, 3.0, 0.1, 1.0).unwrap();
        assert!(res.checks.large_scale_vacuous);
    }
}
