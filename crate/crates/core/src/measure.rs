//! Finite atomic measures, the averaging estimate and absolute continuity up to a small error.
//!
//! Every measure here is a finite list of weighted atoms in `ℝ^k`. Atoms whose
//! coordinates agree after rounding to the `1e-12` grid are merged by summing
//! their weights; the first occurrence keeps its original coordinates.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const CANON_SCALE: f64 = 1e12;

fn canon_key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|x| (x * CANON_SCALE).round() as i64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut index: HashMap<Vec<i64>, usize> = HashMap::with_capacity(points.len());
        let mut out_points = Vec::with_capacity(points.len());
        let mut out_weights: Vec<f64> = Vec::with_capacity(points.len());
        for (i, (p, w)) in points.into_iter().zip(weights).enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "point {i} has dimension {} (expected {dim})",
                    p.len()
                )));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("weight {i} = {w} is not a finite nonnegative number")));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
            }
            let key = canon_key(&p);
            match index.get(&key) {
                Some(&j) => out_weights[j] += w,
                None => {
                    index.insert(key, out_points.len());
                    out_points.push(p);
                    out_weights.push(w);
                }
            }
        }
        Ok(Self {
            dim,
            points: out_points,
            weights: out_weights,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn dirac(point: Vec<f64>, mass: f64) -> Result<Self> {
        Self::new(point.len(), vec![point], vec![mass])
    }

    /// Equal weights `1/n` on the given points (before merging).
    pub fn uniform(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::new(dim, points, vec![w; n])
    }

    /// Measure on the real line from scalar atoms.
    pub fn on_line(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(1, atoms.iter().map(|&t| vec![t]).collect(), weights.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(|p| p.as_slice()).zip(self.weights.iter().copied())
    }

    /// Mass of the atoms selected by `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(&[f64]) -> bool) -> f64 {
        self.iter().filter(|(p, _)| pred(p)).map(|(_, w)| w).sum()
    }

    /// Index of the atom canonically equal to `p`, if any.
    pub fn find(&self, p: &[f64]) -> Option<usize> {
        let key = canon_key(p);
        self.points.iter().position(|q| canon_key(q) == key)
    }

    /// Restriction to the atoms with the given indices.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self {
            dim: self.dim,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Scalar coordinates of a measure on the line.
    pub fn line_atoms(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::InvalidInput(format!("expected a measure on ℝ, got dimension {}", self.dim)));
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }

    /// Pushforward by an infallible map.
    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        pushforward(self, |p| Ok(f(p)))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(s)?;
        Self::new(file.dim, file.points, file.weights)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MeasureFile {
            dim: self.dim,
            points: self.points.clone(),
            weights: self.weights.clone(),
        })?)
    }

    /// CSV with one atom per row: coordinates followed by the weight. No header.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut dim = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("row {row}: cannot parse `{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() < 2 {
                return Err(Error::InvalidInput(format!("row {row}: need at least one coordinate and a weight")));
            }
            let k = vals.len() - 1;
            if *dim.get_or_insert(k) != k {
                return Err(Error::InvalidInput(format!("row {row}: inconsistent dimension")));
            }
            weights.push(vals[k]);
            points.push(vals[..k].to_vec());
        }
        match dim {
            Some(k) => Self::new(k, points, weights),
            None => Ok(Self::empty(1)),
        }
    }

    /// Loads a JSON measure, or CSV when the extension is `.csv`.
    pub fn load(path: &Path) -> Result<Self> {
        let is_csv = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("csv"))
            .unwrap_or(false);
        if is_csv {
            Self::from_csv_reader(std::fs::File::open(path)?)
        } else {
            Self::from_json_str(&std::fs::read_to_string(path)?)
        }
    }
}

/// `f_#μ`: atoms moved by `f`, weights kept, coinciding images merged.
pub fn pushforward<F>(mu: &DiscreteMeasure, f: F) -> Result<DiscreteMeasure>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut images = Vec::with_capacity(mu.len());
    let mut dim = None;
    for (i, p) in mu.points().iter().enumerate() {
        let q = f(p).map_err(|e| Error::InvalidInput(format!("evaluator failed at atom {i}: {e}")))?;
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("evaluator returned a non-finite value at atom {i}")));
        }
        if *dim.get_or_insert(q.len()) != q.len() {
            return Err(Error::InvalidInput(format!("evaluator changed output dimension at atom {i}")));
        }
        images.push(q);
    }
    match dim {
        Some(m) => DiscreteMeasure::new(m, images, mu.weights().to_vec()),
        None => Ok(DiscreteMeasure::empty(mu.dim())),
    }
}

/// Outcome of a strict-threshold inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    /// The strict-inequality conclusion is empty at the boundary `A = 0`.
    VacuousStrict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingOutcome {
    pub threshold: f64,
    pub threshold_mass: f64,
    pub verdict: Verdict,
}

impl AveragingOutcome {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Checks `μ{ξ > 1 − √A} ≥ 1 − √A` for a probability-weighted `ξ ≤ 1` with mean `≥ 1 − A`.
pub fn averaging_bound(xi: &[(f64, f64)], a: f64) -> Result<AveragingOutcome> {
    const TOL: f64 = 1e-12;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Precondition(format!("A = {a} is outside [0, 1]")));
    }
    let total: f64 = xi.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-9 || xi.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::Precondition(format!("weights must be a probability vector (sum = {total})")));
    }
    if let Some((v, _)) = xi.iter().find(|(v, _)| *v > 1.0 + TOL) {
        return Err(Error::Precondition(format!("value {v} exceeds 1")));
    }
    let mean: f64 = xi.iter().map(|(v, w)| v * w).sum();
    if mean < 1.0 - a - TOL {
        return Err(Error::Precondition(format!(
            "weighted mean {mean} is below 1 − A = {}; no bound is claimed",
            1.0 - a
        )));
    }
    let threshold = 1.0 - a.sqrt();
    let threshold_mass: f64 = xi.iter().filter(|(v, _)| *v > threshold).map(|(_, w)| w).sum();
    let verdict = if a == 0.0 {
        Verdict::VacuousStrict
    } else if threshold_mass >= threshold - TOL {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Ok(AveragingOutcome {
        threshold,
        threshold_mass,
        verdict,
    })
}

/// How the set returned by [`ac_with_error`] was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Certification {
    /// The perturbation deficit is within the sufficient ε.
    SufficientEpsilon,
    /// Deficit above the sufficient ε; the same construction was run with ε = deficit
    /// and both conclusions were checked directly.
    DirectCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcWithErrorOutcome {
    /// Indices (into `mu`'s atoms) of the retained set.
    pub retained: Vec<usize>,
    pub sufficient_epsilon: f64,
    pub epsilon_used: f64,
    pub deficit: f64,
    pub complement_mass: f64,
    pub certification: Certification,
}

/// Largest `t` such that every set with `ν(G) ≤ t` has `μ(G) ≤ α`, bounded via
/// the fractional-knapsack envelope of the density `dμ/dν`.
fn knapsack_radius(mu_w: &[f64], nu_w: &[f64], alpha: f64) -> f64 {
    let mut items: Vec<(f64, f64)> = mu_w
        .iter()
        .zip(nu_w)
        .filter(|(m, _)| **m > 0.0)
        .map(|(&m, &n)| (m, n))
        .collect();
    // decreasing density m/n
    items.sort_by(|a, b| (b.0 * a.1).total_cmp(&(a.0 * b.1)));
    let nu_total: f64 = nu_w.iter().sum();
    let mut used_nu = 0.0;
    let mut gained = 0.0;
    for (m, n) in items {
        if gained + m <= alpha {
            gained += m;
            used_nu += n;
        } else {
            let frac = (alpha - gained) / m;
            return used_nu + frac * n;
        }
    }
    nu_total
}

/// Finds `E` with `μ(Eᶜ) ≤ α` and `μ|_E ≪ ν̃`, given `μ ≪ ν` and `ν̃ ≤ ν` on shared atoms.
///
/// `nu` and `nu_tilde` are matched to `mu` atom by atom through canonical
/// coordinates; atoms of `mu` missing from `nu` are a domain error.
pub fn ac_with_error(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    nu_tilde: &DiscreteMeasure,
    alpha: f64,
) -> Result<AcWithErrorOutcome> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("α = {alpha} must be positive")));
    }
    let nu_total = nu.total_mass();
    let n = nu.len();
    // μ and ν̃ weights aligned to ν's atoms.
    let mut mu_w = vec![0.0; n];
    for (i, (p, w)) in mu.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        match nu.find(p) {
            Some(j) if nu.weights()[j] > 0.0 => mu_w[j] += w,
            _ => {
                return Err(Error::Domain(format!(
                    "μ is not dominated by ν: atom {i} at {p:?} carries no ν mass"
                )))
            }
        }
    }
    let mut nt_w = vec![0.0; n];
    for (i, (p, w)) in nu_tilde.iter().enumerate() {
        match nu.find(p) {
            Some(j) => nt_w[j] += w,
            None if w == 0.0 => {}
            None => {
                return Err(Error::Domain(format!("ν̃ atom {i} at {p:?} is not an atom of ν")));
            }
        }
    }
    for j in 0..n {
        if nt_w[j] > nu.weights()[j] * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("ν̃ exceeds ν at atom {j}")));
        }
    }
    let deficit: f64 = (0..n).map(|j| nu.weights()[j] - nt_w[j]).sum::<f64>().max(0.0);
    let t0 = knapsack_radius(&mu_w, nu.weights(), alpha);
    // strict: √(ε ν(R)) < t0
    let sufficient_epsilon = if nu_total > 0.0 {
        0.999 * t0 * t0 / nu_total
    } else {
        0.0
    };

    let build = |eps: f64| -> (Vec<usize>, f64) {
        let threshold = 1.0 - (eps / nu_total).sqrt();
        let mut keep_nu = vec![false; n];
        for j in 0..n {
            let nw = nu.weights()[j];
            let density = if nw > 0.0 { nt_w[j] / nw } else { 0.0 };
            keep_nu[j] = nw > 0.0 && density >= threshold && nt_w[j] > 0.0;
        }
        let mut retained = Vec::new();
        let mut complement = 0.0;
        for (i, (p, w)) in mu.iter().enumerate() {
            match nu.find(p) {
                Some(j) if keep_nu[j] => retained.push(i),
                _ => complement += w,
            }
        }
        (retained, complement)
    };

    if nu_total == 0.0 {
        return Ok(AcWithErrorOutcome {
            retained: Vec::new(),
            sufficient_epsilon,
            epsilon_used: 0.0,
            deficit,
            complement_mass: mu.total_mass(),
            certification: Certification::SufficientEpsilon,
        });
    }

    if deficit <= sufficient_epsilon {
        let (retained, complement_mass) = build(sufficient_epsilon);
        if complement_mass > alpha * (1.0 + 1e-12) {
            return Err(Error::contract(
                "ac_with_error",
                format!("μ(Eᶜ) = {complement_mass} > α = {alpha} under the sufficient ε"),
            ));
        }
        return Ok(AcWithErrorOutcome {
            retained,
            sufficient_epsilon,
            epsilon_used: sufficient_epsilon,
            deficit,
            complement_mass,
            certification: Certification::SufficientEpsilon,
        });
    }
    if deficit < nu_total {
        let (retained, complement_mass) = build(deficit);
        if complement_mass <= alpha {
            return Ok(AcWithErrorOutcome {
                retained,
                sufficient_epsilon,
                epsilon_used: deficit,
                deficit,
                complement_mass,
                certification: Certification::DirectCheck,
            });
        }
    }
    Err(Error::Precondition(format!(
        "(ν − ν̃)(X) = {deficit} exceeds the sufficient ε = {sufficient_epsilon} for α = {alpha}, \
         and the direct construction does not meet μ(Eᶜ) ≤ α"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge() {
        let m = DiscreteMeasure::new(1, vec![vec![0.5], vec![0.5 + 1e-14], vec![1.0]], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[3.0, 3.0]);
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(DiscreteMeasure::new(1, vec![vec![0.0]], vec![-1.0]).is_err());
    }

    #[test]
    fn pushforward_identity_keeps_dirac() {
        let mu = DiscreteMeasure::dirac(vec![1.0, 0.0], 1.0).unwrap();
        let nu = mu.map(|p| p.to_vec()).unwrap();
        assert_eq!(nu, mu);
    }

    #[test]
    fn constant_map_merges_atoms() {
        let mu = DiscreteMeasure::on_line(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let nu = mu.map(|_| vec![0.0]).unwrap();
        assert_eq!(nu.points(), &[vec![0.0]]);
        assert_eq!(nu.weights(), &[2.0]);
    }

    #[test]
    fn evaluator_failure_is_input_error() {
        let mu = DiscreteMeasure::on_line(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let err = pushforward(&mu, |p| {
            if p[0] > 0.5 {
                Err(Error::InvalidInput("undefined".into()))
            } else {
                Ok(p.to_vec())
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn averaging_constant_function() {
        let out = averaging_bound(&[(1.0, 1.0)], 0.04).unwrap();
        assert_eq!(out.threshold_mass, 1.0);
        assert!((out.threshold - 0.8).abs() < 1e-15);
        assert!(out.holds());
    }

    #[test]
    fn averaging_two_valued() {
        let out = averaging_bound(&[(0.7, 0.5), (1.0, 0.5)], 0.15).unwrap();
        assert!((out.threshold - (1.0 - 0.15f64.sqrt())).abs() < 1e-15);
        assert_eq!(out.threshold_mass, 1.0);
        assert!(out.holds());
    }

    #[test]
    fn averaging_boundary_is_vacuous() {
        let out = averaging_bound(&[(1.0, 1.0)], 0.0).unwrap();
        assert_eq!(out.verdict, Verdict::VacuousStrict);
    }

    #[test]
    fn averaging_rejects_low_mean() {
        let err = averaging_bound(&[(0.0, 0.5), (1.0, 0.5)], 0.1).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    fn ten_atoms() -> DiscreteMeasure {
        DiscreteMeasure::uniform(1, (0..10).map(|i| vec![i as f64]).collect()).unwrap()
    }

    #[test]
    fn ac_zero_perturbation_keeps_everything() {
        let nu = ten_atoms();
        let out = ac_with_error(&nu, &nu, &nu, 0.2).unwrap();
        assert_eq!(out.retained.len(), 10);
        assert_eq!(out.complement_mass, 0.0);
    }

    #[test]
    fn ac_killed_atom_is_dropped() {
        let nu = ten_atoms();
        let mut w = vec![0.1; 10];
        w[3] = 0.0;
        let nt = DiscreteMeasure::new(1, nu.points().to_vec(), w).unwrap();
        let out = ac_with_error(&nu, &nu, &nt, 0.2).unwrap();
        assert_eq!(out.retained.len(), 9);
        assert!(!out.retained.contains(&3));
        assert!((out.complement_mass - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ac_mass_on_killed_atom_fails() {
        let nu = ten_atoms();
        let mut w = vec![0.1; 10];
        w[3] = 0.0;
        let nt = DiscreteMeasure::new(1, nu.points().to_vec(), w).unwrap();
        let mu = DiscreteMeasure::dirac(vec![3.0], 1.0).unwrap();
        let err = ac_with_error(&mu, &nu, &nt, 0.5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn ac_undominated_mu_is_domain_error() {
        let nu = ten_atoms();
        let mu = DiscreteMeasure::dirac(vec![42.0], 1.0).unwrap();
        assert!(matches!(ac_with_error(&mu, &nu, &nu, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_and_json_load() {
        let m = DiscreteMeasure::from_csv_reader("0.0, 1.0, 0.5\n2.0, 3.0, 0.5\n".as_bytes()).unwrap();
        assert_eq!(m.dim(), 2);
        let back = DiscreteMeasure::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
