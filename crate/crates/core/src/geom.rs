//! Small vector helpers shared across modules.

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Point on the segment `a + τ(b − a)`.
pub fn lerp(a: &[f64], b: &[f64], tau: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + tau * (y - x)).collect()
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d = sub(b, a);
    let len2 = dot(&d, &d);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let tau = (dot(&sub(p, a), &d) / len2).clamp(0.0, 1.0);
    dist(p, &lerp(a, b, tau))
}

/// Minimiser of a convex function on `[lo, hi]` by golden-section search.
pub fn golden_min(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while hi - lo > tol && iters < 200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        iters += 1;
    }
    // endpoints can win for monotone functions
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, f(mid));
    for x in [lo, hi] {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Closed-interval union of sorted, possibly overlapping intervals.
pub fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.retain(|(a, b)| a <= b);
    v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => {
                if b > last.1 {
                    last.1 = b;
                }
            }
            _ => out.push((a, b)),
        }
    }
    out
}

/// Parameter range `τ ∈ [0, 1]` where `a + τ(b − a)` lies in the closed box
/// `[lo, hi]` (Liang–Barsky clipping).
pub fn clip_segment_box(a: &[f64], b: &[f64], lo: &[f64], hi: &[f64]) -> Option<(f64, f64)> {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for i in 0..a.len() {
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return None;
            }
            continue;
        }
        let (mut u, mut v) = ((lo[i] - a[i]) / d, (hi[i] - a[i]) / d);
        if u > v {
            std::mem::swap(&mut u, &mut v);
        }
        t0 = t0.max(u);
        t1 = t1.min(v);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, v) = golden_min(-1.0, 3.0, 1e-12, |x| (x - 0.7) * (x - 0.7));
        assert!((x - 0.7).abs() < 1e-6);
        assert!(v < 1e-12);
    }

    #[test]
    fn merge_joins_touching_intervals() {
        let m = merge_intervals(vec![(0.5, 0.7), (0.0, 0.2), (0.2, 0.3), (0.6, 0.9)]);
        assert_eq!(m, vec![(0.0, 0.3), (0.5, 0.9)]);
    }

    #[test]
    fn segment_distance_clamps() {
        assert_eq!(point_segment_dist(&[2.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(point_segment_dist(&[0.5, 2.0], &[0.0, 0.0], &[1.0, 0.0]), 2.0);
    }

    #[test]
    fn clipping_against_a_box() {
        let c = clip_segment_box(&[-1.0, 0.5], &[3.0, 0.5], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c.0 - 0.25).abs() < 1e-15 && (c.1 - 0.5).abs() < 1e-15);
        assert!(clip_segment_box(&[0.0, 2.0], &[1.0, 2.0], &[0.0, 0.0], &[1.0, 1.0]).is_none());
    }
}
