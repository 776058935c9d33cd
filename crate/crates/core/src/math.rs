//! Small dense-vector helpers. Dimensions here are desk-scale (tens at most),
//! so plain slices beat pulling in a linear-algebra crate.

use alloc::vec::Vec;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

/// Sign with the tie-break used throughout the crate: zero maps to `−1`, so
/// among equally good perturbations the one towards `z − ε` comes first.
#[inline]
pub fn tie_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// ℓ_p norm for `p ≥ 1`, with `p = ∞` encoded as `f64::INFINITY`.
pub fn lp_norm(a: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        a.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        norm2(a)
    } else {
        libm::pow(a.iter().map(|x| libm::pow(x.abs(), p)).sum::<f64>(), 1.0 / p)
    }
}

/// Hölder conjugate `q` with `1/p + 1/q = 1`.
pub fn dual_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Smallest `c` with `‖v‖₂ ≤ c‖v‖_p` for all `v ∈ ℝ^m`.
pub fn l2_over_lp(m: usize, p: f64) -> f64 {
    let expo = if p.is_infinite() { 0.5 } else { (0.5 - 1.0 / p).max(0.0) };
    libm::pow(m as f64, expo)
}

/// Euclidean projection onto `{θ : ‖θ‖₂ ≤ radius}`. Returns whether it moved.
pub fn project_l2_ball(theta: &mut [f64], radius: f64) -> bool {
    let n = norm2(theta);
    if n > radius {
        scale(radius / n, theta);
        true
    } else {
        false
    }
}

/// Euclidean projection of `v` onto the ℓ₁ ball of the given radius
/// (sort-and-threshold).
pub fn project_l1_ball(v: &mut [f64], radius: f64) {
    if lp_norm(v, 1.0) <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k as f64 + 1.0);
        if *m > t {
            tau = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - tau).max(0.0);
    }
}

/// Projects the offset `v` onto `{‖v‖_p ≤ radius}`: clamping for `p = ∞`,
/// radial scaling for `p = 2`, exact sort-based projection for `p = 1`,
/// and radial scaling (feasible, not Euclidean-nearest) otherwise.
pub fn project_lp_ball(v: &mut [f64], p: f64, radius: f64) {
    if p.is_infinite() {
        for x in v.iter_mut() {
            *x = x.clamp(-radius, radius);
        }
    } else if p == 1.0 {
        project_l1_ball(v, radius);
    } else {
        let n = lp_norm(v, p);
        if n > radius {
            scale(radius / n, v);
        }
    }
}

/// Maximizer of `⟨w, δ⟩` over `‖δ‖_p ≤ radius`. Ties resolve towards the
/// lowest index (ℓ₁) and towards `−radius` on zero coordinates.
pub fn dual_direction(w: &[f64], p: f64, radius: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; w.len()];
    if p.is_infinite() {
        for (o, x) in out.iter_mut().zip(w) {
            *o = radius * tie_sign(*x);
        }
    } else if p == 1.0 {
        let mut best = 0;
        for (k, x) in w.iter().enumerate() {
            if x.abs() > w[best].abs() {
                best = k;
            }
        }
        if !w.is_empty() {
            out[best] = radius * tie_sign(w[best]);
        }
    } else {
        let q = dual_exponent(p);
        let wn = lp_norm(w, q);
        if wn == 0.0 {
            if !out.is_empty() {
                out[0] = -radius;
            }
        } else {
            for (o, x) in out.iter_mut().zip(w) {
                *o = radius * tie_sign(*x) * libm::pow(x.abs() / wn, q - 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_projection_lands_on_sphere() {
        let mut v = [3.0, -1.0, 0.5];
        project_l1_ball(&mut v, 2.0);
        assert!((lp_norm(&v, 1.0) - 2.0).abs() < 1e-12);
        assert_eq!(v, [2.0, 0.0, 0.0]);
    }

    #[test]
    fn dual_direction_attains_dual_norm() {
        let w = [0.3, -1.2, 0.7];
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            let d = dual_direction(&w, p, 0.5);
            assert!(lp_norm(&d, p) <= 0.5 + 1e-12);
            let q = dual_exponent(p);
            assert!((dot(&w, &d) - 0.5 * lp_norm(&w, q)).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn norm_conversion_constant() {
        assert_eq!(l2_over_lp(4, f64::INFINITY), 2.0);
        assert_eq!(l2_over_lp(4, 2.0), 1.0);
        assert_eq!(l2_over_lp(4, 1.0), 1.0);
    }
}
