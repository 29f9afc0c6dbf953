//! pass@k, the two-proportion z-test, Cohen's h and power.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Smallest p-value printed as a number; below it output reads `< 2.2e-16`.
pub const P_VALUE_FLOOR: f64 = 2.2e-16;

/// A success proportion `c / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proportion {
    pub c: u64,
    pub n: u64,
}

impl Proportion {
    pub fn new(c: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("proportion needs n >= 1"));
        }
        if c > n {
            return Err(Error::invalid(format!("successes {c} exceed trials {n}")));
        }
        Ok(Self { c, n })
    }

    pub fn p(&self) -> f64 {
        self.c as f64 / self.n as f64
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Unbiased pass@k estimator `1 - C(n-c, k) / C(n, k)`, computed as the
/// product `1 - Π_{i=n-c+1}^{n} (1 - k/i)`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64> {
    if c > n {
        return Err(Error::invalid(format!("c = {c} exceeds n = {n}")));
    }
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let prod: f64 = ((n - c + 1)..=n)
        .map(|i| 1.0 - k as f64 / i as f64)
        .product();
    Ok(1.0 - prod)
}

/// Two-sided two-proportion z-test with pooled variance. With `corrected`,
/// Yates' continuity correction `½(1/n₁ + 1/n₂)` is subtracted from the
/// absolute gap (floored at zero). Returns `(z, p_value)`.
pub fn two_prop_test(a: Proportion, b: Proportion, corrected: bool) -> (f64, f64) {
    let (n1, n2) = (a.n as f64, b.n as f64);
    let pooled = (a.c + b.c) as f64 / (n1 + n2);
    if pooled <= 0.0 || pooled >= 1.0 {
        return (0.0, 1.0);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let diff = a.p() - b.p();
    let gap = if corrected {
        (diff.abs() - 0.5 * (1.0 / n1 + 1.0 / n2)).max(0.0)
    } else {
        diff.abs()
    };
    let z = gap.copysign(diff) / se;
    let z = if gap == 0.0 { 0.0 } else { z };
    let p = (2.0 * std_normal().sf(z.abs())).min(1.0);
    (z, p)
}

/// Cohen's h effect size for two proportions.
pub fn cohens_h(p1: f64, p2: f64) -> Result<f64> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("proportion {p} outside [0, 1]")));
        }
    }
    Ok(2.0 * p1.sqrt().asin() - 2.0 * p2.sqrt().asin())
}

/// Power of the two-sided two-proportion test for effect size `h` with
/// `n_per_group` observations in each group.
pub fn power_two_prop(h: f64, n_per_group: u64, alpha: f64) -> Result<f64> {
    if n_per_group < 2 {
        return Err(Error::invalid("power needs n >= 2 per group"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let norm = std_normal();
    let critical = norm.inverse_cdf(1.0 - alpha / 2.0);
    let shift = h.abs() * (n_per_group as f64 / 2.0).sqrt();
    Ok((norm.cdf(shift - critical) + norm.cdf(-shift - critical)).clamp(0.0, 1.0))
}

/// Full comparison of two proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonResult {
    pub z: f64,
    pub p_value: f64,
    pub h: f64,
    pub power: f64,
    pub alpha: f64,
    pub corrected: bool,
}

impl ComparisonResult {
    pub fn reject_null(&self) -> bool {
        self.p_value < self.alpha
    }

    /// Whether the test reached `1 - beta` power.
    pub fn sufficient_power(&self, beta: f64) -> bool {
        self.power >= 1.0 - beta
    }
}

/// Runs the z-test, effect size and power for two proportions with equal
/// group size `n_per_group` used for power.
pub fn compare_proportions(
    a: Proportion,
    b: Proportion,
    alpha: f64,
    corrected: bool,
) -> Result<ComparisonResult> {
    let (z, p_value) = two_prop_test(a, b, corrected);
    let h = cohens_h(a.p(), b.p())?;
    let power = power_two_prop(h, a.n.min(b.n), alpha)?;
    Ok(ComparisonResult {
        z,
        p_value,
        h,
        power,
        alpha,
        corrected,
    })
}

/// Formats a p-value, flooring tiny values the conventional way.
pub fn format_p_value(p: f64) -> String {
    if p < P_VALUE_FLOOR {
        "< 2.2e-16".to_string()
    } else {
        format!("{}", FourSig(p))
    }
}

/// Four significant digits, scientific below 1e-4.
struct FourSig(f64);

impl fmt::Display for FourSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = self.0;
        if x == 0.0 || x == 1.0 {
            return write!(f, "{x}");
        }
        if x.abs() < 1e-4 {
            return write!(f, "{x:.3e}");
        }
        let digits = (3 - x.abs().log10().floor() as i32).max(0) as usize;
        let s = format!("{x:.digits$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(c: u64, n: u64) -> Proportion {
        Proportion::new(c, n).unwrap()
    }

    #[test]
    fn pass_at_k_identities() {
        assert_eq!(pass_at_k(222, 222, 1).unwrap(), 1.0);
        assert!((pass_at_k(222, 221, 1).unwrap() - 0.995_495_495_495_495_5).abs() < 1e-15);
        assert_eq!(pass_at_k(10, 3, 10).unwrap(), 1.0);
        assert_eq!(pass_at_k(10, 0, 5).unwrap(), 0.0);
        assert!(pass_at_k(10, 11, 1).is_err());
        assert!(pass_at_k(10, 3, 0).is_err());
        assert!(pass_at_k(10, 3, 11).is_err());
    }

    #[test]
    fn yates_correction_absorbs_a_one_count_gap() {
        let (z, p) = two_prop_test(prop(664, 666), prop(663, 666), true);
        assert_eq!(z, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn table_values() {
        let (_, p) = two_prop_test(prop(663, 666), prop(666, 666), true);
        assert!((p - 0.2477).abs() < 1e-3, "{p}");
        let (_, p) = two_prop_test(prop(596, 666), prop(620, 666), true);
        assert!((p - 0.02542).abs() < 5e-4, "{p}");
    }

    #[test]
    fn degenerate_pooled_proportion() {
        assert_eq!(two_prop_test(prop(0, 5), prop(0, 9), true), (0.0, 1.0));
        assert_eq!(two_prop_test(prop(5, 5), prop(9, 9), false), (0.0, 1.0));
    }

    #[test]
    fn cohens_h_values() {
        assert_eq!(cohens_h(0.3, 0.3).unwrap(), 0.0);
        assert!((cohens_h(0.996_996_9, 0.0).unwrap() - 3.032).abs() < 1e-3);
        assert!((cohens_h(0.894_894_9, 0.930_930_9).unwrap() + 0.128).abs() < 1e-3);
        assert!(cohens_h(1.1, 0.0).is_err());
    }

    #[test]
    fn power_values() {
        assert!((power_two_prop(0.0, 666, 0.05).unwrap() - 0.05).abs() < 1e-9);
        assert!(power_two_prop(3.03, 666, 0.05).unwrap() > 0.999_999);
        assert!((power_two_prop(0.1284, 666, 0.05).unwrap() - 0.65).abs() < 0.01);
        assert!(power_two_prop(0.1, 1, 0.05).is_err());
        assert!(power_two_prop(0.1, 10, 0.0).is_err());
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(format_p_value(1e-300), "< 2.2e-16");
        assert_eq!(format_p_value(1.0), "1");
        assert_eq!(format_p_value(0.247_679_9), "0.2477");
        assert_eq!(format_p_value(0.025_415_1), "0.02542");
        assert_eq!(format_p_value(1.410_476e-11), "1.410e-11");
    }

    #[test]
    fn sufficient_power_uses_beta() {
        let r = compare_proportions(prop(664, 666), prop(0, 666), 0.05, true).unwrap();
        assert!(r.reject_null());
        assert!(r.sufficient_power(0.2));
    }
}
