//! Compactly supported smoothing kernels on `[-1, 1]` and their moments.
//!
//! Only kernels with compact support are shipped. A Gaussian kernel is
//! deliberately absent: windowed evaluation, exact zero weights outside
//! `[x - h, x + h]` and the local design checks all rely on bounded support.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};
use crate::panel::std_dev;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `0.75 (1 - t^2)`
    #[default]
    Epanechnikov,
    /// `(15/16) (1 - t^2)^2`, also known as biweight.
    Quartic,
    /// `1 - |t|`
    Triangular,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Epanechnikov,
        KernelFamily::Quartic,
        KernelFamily::Triangular,
    ];

    /// Evaluates `K(t)`; zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(self, t: f64) -> f64 {
        let a = t.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            KernelFamily::Epanechnikov => 0.75 * (1.0 - a * a),
            KernelFamily::Quartic => {
                let s = 1.0 - a * a;
                0.9375 * s * s
            }
            KernelFamily::Triangular => 1.0 - a,
        }
    }

    pub fn moments(self) -> KernelMoments {
        // mu = [mu_0, .., mu_4], nu = [nu_0, nu_2]
        let (mu2, mu4, nu0, nu2) = match self {
            KernelFamily::Epanechnikov => (1.0 / 5.0, 3.0 / 35.0, 3.0 / 5.0, 3.0 / 35.0),
            KernelFamily::Quartic => (1.0 / 7.0, 1.0 / 21.0, 5.0 / 7.0, 5.0 / 77.0),
            KernelFamily::Triangular => (1.0 / 6.0, 1.0 / 15.0, 2.0 / 3.0, 1.0 / 15.0),
        };
        KernelMoments {
            mu: [1.0, 0.0, mu2, 0.0, mu4],
            nu: [nu0, nu2],
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Quartic => "quartic",
            KernelFamily::Triangular => "triangular",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = AddfitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            "quartic" | "biweight" => Ok(KernelFamily::Quartic),
            "triangular" | "tri" => Ok(KernelFamily::Triangular),
            other => Err(AddfitError::InvalidConfig(format!(
                "unknown kernel '{other}' (expected epanechnikov, quartic or triangular)"
            ))),
        }
    }
}

/// `mu[j] = ∫ t^j K(t) dt` for `j = 0..=4`; `nu = [∫ K², ∫ t² K²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub mu: [f64; 5],
    pub nu: [f64; 2],
}

/// A kernel family paired with a bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(AddfitError::InvalidConfig(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn epanechnikov(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Epanechnikov, bandwidth)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `K(t)` on the standardized scale.
    #[inline]
    pub fn evaluate(&self, t: f64) -> f64 {
        self.family.eval(t)
    }

    /// `K_h(u) = K(u / h) / h`.
    #[inline]
    pub fn scaled(&self, u: f64) -> f64 {
        self.family.eval(u / self.bandwidth) / self.bandwidth
    }

    pub fn moments(&self) -> KernelMoments {
        self.family.moments()
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        Self::new(self.family, bandwidth)
    }
}

/// Bandwidth multiplier used by the integration and robust estimators.
pub const INTEGRATION_BANDWIDTH_FACTOR: f64 = 0.5;

/// Bandwidth multiplier for backfitting: 0.4 times the normal-reference
/// constant 1.06.
pub const BACKFIT_BANDWIDTH_FACTOR: f64 = 0.4 * 1.06;

/// `factor * sd(x) * n^(-1/5)` with `n = x.len()`.
pub fn rule_of_thumb_bandwidth(x: &[f64], factor: f64) -> Result<f64> {
    scaled_bandwidth(std_dev(x), x.len(), factor)
}

/// `factor * sd * n^(-1/5)`.
pub fn scaled_bandwidth(sd: f64, n: usize, factor: f64) -> Result<f64> {
    let h = factor * sd * (n as f64).powf(-0.2);
    if !(h.is_finite() && h > 0.0) {
        return Err(AddfitError::InvalidConfig(format!(
            "rule-of-thumb bandwidth is {h} (sd = {sd}, n = {n}, factor = {factor})"
        )));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on `[a, b]` with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let step = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + step * i as f64);
        }
        acc * step / 3.0
    }

    // The triangular kernel has a kink at 0, so integrate each half separately.
    fn quad(f: impl Fn(f64) -> f64 + Copy) -> f64 {
        simpson(f, -1.0, 0.0, 2000) + simpson(f, 0.0, 1.0, 2000)
    }

    #[test]
    fn epanechnikov_values() {
        let k = KernelSpec::epanechnikov(1.0).unwrap();
        assert_eq!(k.evaluate(0.0), 0.75);
        assert_eq!(k.evaluate(1.5), 0.0);
        assert!((k.evaluate(0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn epanechnikov_moments_match_quadrature() {
        let m = KernelFamily::Epanechnikov.moments();
        assert_eq!(m.mu[0], 1.0);
        let mu2 = quad(|t| t * t * KernelFamily::Epanechnikov.eval(t));
        let nu0 = quad(|t| KernelFamily::Epanechnikov.eval(t).powi(2));
        assert!((mu2 - 0.2).abs() < 1e-12);
        assert!((nu0 - 0.6).abs() < 1e-12);
        assert!((m.mu[2] - mu2).abs() < 1e-12);
        assert!((m.nu[0] - nu0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_moments_agree_with_quadrature_for_all_families() {
        for fam in KernelFamily::ALL {
            let m = fam.moments();
            for (j, &mu) in m.mu.iter().enumerate() {
                let q = quad(|t| t.powi(j as i32) * fam.eval(t));
                assert!((q - mu).abs() < 1e-10, "{fam} mu_{j}: {q} vs {mu}");
            }
            for (i, &nu) in m.nu.iter().enumerate() {
                let q = quad(|t| t.powi(2 * i as i32) * fam.eval(t).powi(2));
                assert!((q - nu).abs() < 1e-10, "{fam} nu_{}: {q} vs {nu}", 2 * i);
            }
            assert!(m.mu[2] > 0.0 && m.nu[0] > 0.0);
        }
    }

    #[test]
    fn kernels_are_even_and_compact() {
        for fam in KernelFamily::ALL {
            for i in 0..=400 {
                let t = -2.0 + i as f64 * 0.01;
                let v = fam.eval(t);
                assert!(v >= 0.0);
                assert!((v - fam.eval(-t)).abs() < 1e-15);
                if t.abs() > 1.0 {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn scaled_kernel_divides_by_bandwidth() {
        let k = KernelSpec::epanechnikov(2.0).unwrap();
        assert!((k.scaled(0.0) - 0.375).abs() < 1e-15);
        assert_eq!(k.scaled(2.5), 0.0);
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(KernelSpec::epanechnikov(0.0).is_err());
        assert!(KernelSpec::epanechnikov(-1.0).is_err());
        assert!(KernelSpec::epanechnikov(f64::NAN).is_err());
    }

    #[test]
    fn parses_family_names() {
        assert_eq!("Quartic".parse::<KernelFamily>().unwrap(), KernelFamily::Quartic);
        assert!("gaussian".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn rule_of_thumb_scales_with_sd() {
        let x: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let h1 = rule_of_thumb_bandwidth(&x, 1.0).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let h2 = rule_of_thumb_bandwidth(&x2, 1.0).unwrap();
        assert!((h2 / h1 - 3.0).abs() < 1e-12);
        assert!(rule_of_thumb_bandwidth(&[1.0, 1.0, 1.0], 1.0).is_err());
    }
}
