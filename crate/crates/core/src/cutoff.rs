//! Smooth cutoffs: the switch `χ` used by the distance function and the
//! localized virial weight `φ`.
//!
//! `φ` must equal `r²` on `[0, 1]`, vanish for large `r`, and satisfy `φ ≥ 0`
//! and `φ'' ≤ 2`. No such function reaches zero by `r = 2`: with
//! `h = φ − (r − 2)²` the cap makes `h` concave, while `h(1) = h(2) = 0`,
//! `h'(2) = 0` and `h'(1) = 4` contradict concavity. The transition therefore
//! runs over `[1, b]` with `b = 4` by default.
//!
//! On the transition, with `t = (r − 1)/(b − 1)`,
//! `φ'' = 2 − g(t)`, `g = 2S(t) + c·B(t/τ)`, where `S` is the degree-9
//! smoothstep and `B(u) = u⁵(1 − u)⁵` a bump on `[0, τ]`. `g ≥ 0` gives the
//! cap; `c` and `τ` are fixed by `φ'(b) = φ(b) = 0`. All joints are `C⁴`.

/// Quintic smoothstep `χ`: `1` on `[0, 1]`, `0` on `[2, ∞)`, `C²` and
/// non-increasing in between.
pub fn chi(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let t = x - 1.0;
        1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Degree-9 smoothstep, ascending coefficients.
const SMOOTH9: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

/// `u⁵(1 − u)⁵`, ascending coefficients.
const BUMP: [f64; 11] = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -5.0, 10.0, -10.0, 5.0, -1.0];

/// `∫₀¹ u⁵(1 − u)⁵ du = 5!·5!/11!`
const BUMP_INTEGRAL: f64 = 1.0 / 2772.0;

/// `∫₀¹ t·S(t) dt`
const SMOOTH9_FIRST_MOMENT: f64 = 4.0 / 11.0;

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn poly_d(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a)
}

fn poly_dd(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(2).rev().fold(0.0, |acc, (k, &a)| acc * x + (k * (k - 1)) as f64 * a)
}

/// `∫₀ˣ p`
fn poly_int(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().rev().fold(0.0, |acc, (k, &a)| acc * x + a / (k + 1) as f64) * x
}

/// `∫₀ˣ (x − s) p(s) ds`
fn poly_int2(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().rev().fold(0.0, |acc, (k, &a)| acc * x + a / ((k + 1) * (k + 2)) as f64) * x * x
}

/// Radial weight `φ` of the localized virial functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialWeight {
    b: f64,
    tau: f64,
    c: f64,
}

impl Default for VirialWeight {
    fn default() -> Self {
        Self::new(4.0).expect("b = 4 is admissible")
    }
}

impl VirialWeight {
    /// Weight with transition on `[1, b]`. `b` must exceed 2; the bump width
    /// `τ` must come out in `(0, 1]`, which holds for `b` up to about 20.
    pub fn new(b: f64) -> crate::Result<Self> {
        if !(b > 2.0) || !b.is_finite() {
            return crate::error::config(alloc::format!("transition end b = {b} must exceed 2"));
        }
        let l = b - 1.0;
        let half = 1.0 - (b * b - l * l * (1.0 - 2.0 * SMOOTH9_FIRST_MOMENT)) / ((b + 1.0) * l);
        let tau = 2.0 * half;
        if !(tau > 0.0 && tau <= 1.0) {
            return crate::error::config(alloc::format!("no bump width for b = {b} (tau = {tau})"));
        }
        let c = (b + 1.0) / (l * tau * BUMP_INTEGRAL);
        Ok(Self { b, tau, c })
    }

    /// `φ` vanishes for `r ≥ b`.
    pub fn support(&self) -> f64 {
        self.b
    }

    pub fn bump_width(&self) -> f64 {
        self.tau
    }

    pub fn bump_height(&self) -> f64 {
        self.c
    }

    /// `[g, g', g'', ∫₀ᵗg, ∫₀ᵗ(t−s)g(s)ds]` in the transition variable `t`.
    fn g(&self, t: f64) -> [f64; 5] {
        let mut out = [
            2.0 * poly(&SMOOTH9, t),
            2.0 * poly_d(&SMOOTH9, t),
            2.0 * poly_dd(&SMOOTH9, t),
            2.0 * poly_int(&SMOOTH9, t),
            2.0 * poly_int2(&SMOOTH9, t),
        ];
        let (tau, c) = (self.tau, self.c);
        if t < tau {
            let u = t / tau;
            out[0] += c * poly(&BUMP, u);
            out[1] += c * poly_d(&BUMP, u) / tau;
            out[2] += c * poly_dd(&BUMP, u) / (tau * tau);
            out[3] += c * tau * poly_int(&BUMP, u);
            out[4] += c * tau * tau * poly_int2(&BUMP, u);
        } else {
            out[3] += c * tau * BUMP_INTEGRAL;
            out[4] += c * tau * BUMP_INTEGRAL * (t - 0.5 * tau);
        }
        out
    }

    /// `[φ, φ', φ'', φ''', φ'''']` at `r ≥ 0`.
    pub fn derivatives(&self, r: f64) -> [f64; 5] {
        if r <= 1.0 {
            return [r * r, 2.0 * r, 2.0, 0.0, 0.0];
        }
        if r >= self.b {
            return [0.0; 5];
        }
        let l = self.b - 1.0;
        let t = (r - 1.0) / l;
        let [g, g1, g2, ig, iig] = self.g(t);
        [r * r - l * l * iig, 2.0 * r - l * ig, 2.0 - g, -g1 / l, -g2 / (l * l)]
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    /// `Δφ = φ'' + 2φ'/r` (radial, 3-D).
    pub fn laplacian(&self, r: f64) -> f64 {
        if r <= 1.0 {
            return 6.0;
        }
        let d = self.derivatives(r);
        d[2] + 2.0 * d[1] / r
    }

    /// `Δ²φ = φ'''' + 4φ'''/r` (radial, 3-D).
    pub fn bilaplacian(&self, r: f64) -> f64 {
        if r <= 1.0 {
            return 0.0;
        }
        let d = self.derivatives(r);
        d[4] + 4.0 * d[3] / r
    }

    /// `(min φ, max φ'')` over `samples` equispaced points of `[0, b]`.
    pub fn verify(&self, samples: usize) -> (f64, f64) {
        let mut min_phi = f64::INFINITY;
        let mut max_d2 = f64::NEG_INFINITY;
        for i in 0..=samples {
            let r = self.b * i as f64 / samples as f64;
            let d = self.derivatives(r);
            min_phi = min_phi.min(d[0]);
            max_d2 = max_d2.max(d[2]);
        }
        (min_phi, max_d2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_limits_and_monotone() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(7.0), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let x = 1.0 + i as f64 / 1000.0;
            assert!(chi(x) <= prev + 1e-15);
            prev = chi(x);
        }
    }

    #[test]
    fn weight_constants() {
        let w = VirialWeight::default();
        assert!((w.bump_width() - 0.193_939_393_939_393_9).abs() < 1e-12);
        assert!((w.bump_height() - 23_822.0).abs() < 1.0);
        assert!(VirialWeight::new(2.0).is_err());
    }

    #[test]
    fn weight_constraints_on_dense_grid() {
        let w = VirialWeight::default();
        let (min_phi, max_d2) = w.verify(10_000);
        assert!(min_phi >= -1e-12, "{min_phi}");
        assert!(max_d2 <= 2.0 + 1e-12, "{max_d2}");
    }

    #[test]
    fn weight_matches_at_joints() {
        let w = VirialWeight::default();
        let eps = 1e-9;
        for r in [1.0, w.support()] {
            let a = w.derivatives(r - eps);
            let b = w.derivatives(r + eps);
            for k in 0..5 {
                assert!((a[k] - b[k]).abs() < 1e-5 * (1.0 + a[k].abs()), "r {r} k {k}: {} vs {}", a[k], b[k]);
            }
        }
        let t = 1.0 + 3.0 * w.bump_width();
        let a = w.derivatives(t - eps);
        let b = w.derivatives(t + eps);
        for k in 0..5 {
            assert!((a[k] - b[k]).abs() < 1e-5 * (1.0 + a[k].abs()));
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let w = VirialWeight::default();
        let h = 1e-5;
        for &r in &[1.2, 1.5, 2.0, 2.7, 3.5] {
            let d = w.derivatives(r);
            let p = w.derivatives(r + h);
            let m = w.derivatives(r - h);
            for k in 0..4 {
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-5 * (1.0 + d[k + 1].abs()), "r {r} k {k}: {fd} vs {}", d[k + 1]);
            }
        }
    }
}
