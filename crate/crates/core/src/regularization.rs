//! The ε-indexed regularization of the degenerate system.
//!
//! `D_eps(s) = k_D s^(m-1) + eps` lifts the porous-medium diffusivity off zero,
//! and the cutoff `chi_eps` switches the cross-diffusion off above `2/eps`.
//! `F_eps` and `G_eps` are the closed-form antiderivatives of `chi_eps` and
//! `s chi_eps(s)`; nothing here is evaluated by quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Quintic smoothstep `6r^5 - 15r^4 + 10r^3` on `[0, 1]`.
#[inline]
fn smoothstep(r: f64) -> f64 {
    r * r * r * (r * (6.0 * r - 15.0) + 10.0)
}

/// `int_0^r smoothstep`.
#[inline]
fn smoothstep_integral(r: f64) -> f64 {
    let r4 = r * r * r * r;
    r4 * (r * (r - 3.0) + 2.5)
}

/// `int_0^r rho * smoothstep(rho) d rho`.
#[inline]
fn smoothstep_first_moment(r: f64) -> f64 {
    let r5 = r * r * r * r * r;
    r5 * (r * (6.0 / 7.0 * r - 2.5) + 2.0)
}

pub fn chi_eps(s: f64, eps: f64) -> f64 {
    let r = eps * s - 1.0;
    if r <= 0.0 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        1.0 - smoothstep(r)
    }
}

/// `F_eps(s) = int_0^s chi_eps`; equals `s` up to `1/eps`, constant `1.5/eps` past `2/eps`.
pub fn f_eps(s: f64, eps: f64) -> f64 {
    let r = (eps * s - 1.0).min(1.0);
    if r <= 0.0 {
        return s;
    }
    let s = s.min(2.0 / eps);
    s - smoothstep_integral(r) / eps
}

/// `G_eps(s) = int_0^s sigma chi_eps(sigma) d sigma`.
pub fn g_eps(s: f64, eps: f64) -> f64 {
    let r = (eps * s - 1.0).min(1.0);
    if r <= 0.0 {
        return 0.5 * s * s;
    }
    let s = s.min(2.0 / eps);
    0.5 * s * s - (smoothstep_first_moment(r) + smoothstep_integral(r)) / (eps * eps)
}

/// `G_eps'(s) = s chi_eps(s)`.
pub fn g_eps_prime(s: f64, eps: f64) -> f64 {
    s * chi_eps(s, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizationFamily {
    eps: f64,
    m: f64,
    k_d: f64,
}

impl RegularizationFamily {
    pub fn new(eps: f64, m: f64, k_d: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain("eps", eps, "0 < eps < 1"));
        }
        if !(m > 1.0) || !m.is_finite() {
            return Err(Error::domain("m", m, "m > 1"));
        }
        if !(k_d > 0.0) || !k_d.is_finite() {
            return Err(Error::domain("k_D", k_d, "k_D > 0"));
        }
        Ok(Self { eps, m, k_d })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn k_d(&self) -> f64 {
        self.k_d
    }

    /// Prototype diffusivity `k_D s^(m-1)`.
    pub fn d_base(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::domain("s", s, "s >= 0"));
        }
        Ok(self.k_d * s.powf(self.m - 1.0))
    }

    pub fn d_eps(&self, s: f64) -> Result<f64> {
        Ok(self.d_base(s)? + self.eps)
    }

    /// [`Self::d_eps`] without the sign check; `s` must be non-negative.
    #[inline]
    pub fn d_eps_unchecked(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        self.k_d * s.powf(self.m - 1.0) + self.eps
    }

    #[inline]
    pub fn chi(&self, s: f64) -> f64 {
        chi_eps(s, self.eps)
    }

    #[inline]
    pub fn f(&self, s: f64) -> f64 {
        f_eps(s, self.eps)
    }

    #[inline]
    pub fn g(&self, s: f64) -> f64 {
        g_eps(s, self.eps)
    }
}

/// Outcome of one randomized property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub samples: usize,
    pub failures: usize,
}

impl PropertyCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Runs every contract of the family on `samples` random points per property.
pub fn property_suite(samples: usize, seed: u64) -> Vec<PropertyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut run = |name: &'static str, rng: &mut ChaCha8Rng, f: &dyn Fn(&mut ChaCha8Rng) -> bool| {
        let failures = (0..samples).filter(|_| !f(rng)).count();
        checks.push(PropertyCheck {
            name,
            samples,
            failures,
        });
    };

    run("d_eps_sandwich", &mut rng, &|rng| {
        let fam = random_family(rng);
        let s = rng.random_range(0.0..100.0);
        let d = fam.d_base(s).unwrap();
        let de = fam.d_eps(s).unwrap();
        d <= de && de <= d + 2.0 * fam.eps() && de >= fam.eps()
    });
    run("f_eps_bounds", &mut rng, &|rng| {
        let eps = rng.random_range(1e-3..1.0);
        let s = rng.random_range(0.0..4.0 / eps);
        let f = f_eps(s, eps);
        let chi = chi_eps(s, eps);
        (0.0..=s).contains(&f) && (0.0..=1.0).contains(&chi)
    });
    run("f_eps_derivative_is_chi", &mut rng, &|rng| {
        let eps = rng.random_range(1e-2..1.0);
        let s: f64 = rng.random_range(0.0..3.0 / eps);
        let h = 1e-6 * s.max(1.0);
        if s < 2.0 * h {
            return true;
        }
        let fd = (f_eps(s + h, eps) - f_eps(s - h, eps)) / (2.0 * h);
        (fd - chi_eps(s, eps)).abs() <= 1e-6
    });
    run("f_eps_monotone_in_eps", &mut rng, &|rng| {
        let s: f64 = rng.random_range(1e-3..100.0);
        let mut prev = f_eps(s, 0.5);
        let mut k = 2;
        loop {
            let eps = 0.5f64.powi(k);
            let f = f_eps(s, eps);
            if f < prev - 1e-12 * s {
                return false;
            }
            if 1.0 / eps >= s {
                return f == s;
            }
            prev = f;
            k += 1;
        }
    });
    run("g_eps_bounds", &mut rng, &|rng| {
        let eps = rng.random_range(1e-3..1.0);
        let s = rng.random_range(0.0..4.0 / eps);
        let g = g_eps(s, eps);
        let gp = g_eps_prime(s, eps);
        g >= 0.0 && g <= 0.5 * s * s * (1.0 + 1e-14) && (0.0..=s).contains(&gp)
    });
    checks
}

fn random_family(rng: &mut ChaCha8Rng) -> RegularizationFamily {
    let eps = rng.random_range(1e-4..1.0);
    let m = rng.random_range(1.0 + 1e-6..4.0);
    let k_d = rng.random_range(0.1..10.0);
    RegularizationFamily::new(eps, m, k_d).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson quadrature, used as an independent route to F and G.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn d_base_examples() {
        let f = RegularizationFamily::new(0.1, 1.5, 1.0).unwrap();
        assert_eq!(f.d_base(0.0).unwrap(), 0.0);
        assert_eq!(f.d_base(1.0).unwrap(), 1.0);
        let f2 = RegularizationFamily::new(0.1, 1.5, 2.0).unwrap();
        assert_relative_eq!(f2.d_base(4.0).unwrap(), 4.0);
        assert!(f.d_base(-1.0).is_err());
    }

    #[test]
    fn d_eps_examples() {
        let f = RegularizationFamily::new(0.1, 2.0, 1.0).unwrap();
        assert_eq!(f.d_eps(0.0).unwrap(), 0.1);
        assert_relative_eq!(f.d_eps(1.0).unwrap(), 1.1);
        assert!(f.d_eps(-0.5).is_err());
    }

    #[test]
    fn family_rejects_bad_parameters() {
        assert!(RegularizationFamily::new(0.0, 2.0, 1.0).is_err());
        assert!(RegularizationFamily::new(1.0, 2.0, 1.0).is_err());
        assert!(RegularizationFamily::new(0.5, 1.0, 1.0).is_err());
        assert!(RegularizationFamily::new(0.5, 2.0, 0.0).is_err());
    }

    #[test]
    fn chi_examples() {
        for &eps in &[0.1, 0.37, 0.9] {
            assert_eq!(chi_eps(0.5 / eps, eps), 1.0);
            assert_eq!(chi_eps(3.0 / eps, eps), 0.0);
            assert_relative_eq!(chi_eps(1.5 / eps, eps), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn f_eps_examples() {
        assert_eq!(f_eps(0.0, 0.3), 0.0);
        assert_eq!(f_eps(5.0, 0.1), 5.0);
        let plateau = f_eps(25.0, 0.1);
        assert_eq!(plateau, f_eps(20.0, 0.1));
        assert!(plateau > 10.0 && plateau <= 20.0);
        let quad = 10.0 + simpson(|s| chi_eps(s, 0.1), 10.0, 20.0, 20_000);
        assert_relative_eq!(plateau, quad, epsilon = 1e-10);
        assert_relative_eq!(plateau, 15.0, epsilon = 1e-12);
        // interior of the bridge
        let mid = f_eps(13.0, 0.1);
        let quad = 10.0 + simpson(|s| chi_eps(s, 0.1), 10.0, 13.0, 20_000);
        assert_relative_eq!(mid, quad, epsilon = 1e-10);
    }

    #[test]
    fn g_eps_examples() {
        assert_eq!(g_eps(0.0, 0.2), 0.0);
        assert_eq!(g_eps(3.0, 0.2), 4.5);
        let quad = simpson(|s| s * chi_eps(s, 0.1), 0.0, 30.0, 60_000);
        assert_relative_eq!(g_eps(30.0, 0.1), quad, epsilon = 1e-10);
        let quad = simpson(|s| s * chi_eps(s, 0.1), 0.0, 17.3, 60_000);
        assert_relative_eq!(g_eps(17.3, 0.1), quad, epsilon = 1e-10);
    }

    #[test]
    fn suite_is_clean() {
        for check in property_suite(2_000, 7) {
            assert!(check.passed(), "{check:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn g_below_half_square(s in 0.0f64..500.0, eps in 1e-3f64..0.999) {
            proptest::prop_assert!(g_eps(s, eps) <= 0.5 * s * s * (1.0 + 1e-14));
        }

        #[test]
        fn chi_is_non_increasing(s in 0.0f64..500.0, ds in 0.0f64..10.0, eps in 1e-3f64..0.999) {
            proptest::prop_assert!(chi_eps(s + ds, eps) <= chi_eps(s, eps));
        }
    }
}
