//! Number of false alarms under the Bernoulli background model.
//!
//! For a box of volume `nu` holding `kappa` points, the background model
//! makes each cell independently occupied with probability `p`, so the
//! chance of seeing at least `kappa` points is the binomial upper tail
//! `P(Bin(nu, p) >= kappa)`. The number of false alarms multiplies that tail
//! by the number of tests `eta` (placements of a same-sized box in the
//! space). The significance is `S = -ln NFA`, in nats.
//!
//! The detector scores boxes with the Hoeffding (Chernoff-KL) surrogate
//! `S ~ nu * KL(kappa/nu || p) - ln eta`, which never exceeds the exact
//! significance.

use crate::error::{Error, Result};

/// Extent of the discrete space `E`: bounding-box width and height in
/// pixels and the number of z-levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceDims {
    pub width: usize,
    pub height: usize,
    pub bins: usize,
}

/// Tested box dimensions `(w, h, zlen)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxDims {
    pub w: usize,
    pub h: usize,
    pub zlen: usize,
}

/// Number of placements of a `w x h x zlen` box inside the space.
pub fn eta_for_box(space: SpaceDims, dims: BoxDims) -> Result<u64> {
    let fits = (1..=space.width).contains(&dims.w)
        && (1..=space.height).contains(&dims.h)
        && (1..=space.bins).contains(&dims.zlen);
    if !fits {
        return Err(Error::Domain(format!(
            "box {}x{}x{} does not fit in space {}x{}x{}",
            dims.w, dims.h, dims.zlen, space.width, space.height, space.bins
        )));
    }
    Ok(
        ((space.width - dims.w + 1) * (space.height - dims.h + 1) * (space.bins - dims.zlen + 1))
            as u64,
    )
}

fn check_binomial_args(kappa: u64, nu: u64, p: f64) -> Result<()> {
    if nu == 0 || kappa > nu {
        return Err(Error::Domain(format!(
            "need 0 <= kappa <= nu and nu >= 1, got kappa={kappa}, nu={nu}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// `ln P(Bin(nu, p) >= kappa)`, summed in log space with the largest term
/// factored out.
pub fn log_binomial_tail(kappa: u64, nu: u64, p: f64) -> Result<f64> {
    check_binomial_args(kappa, nu, p)?;
    if kappa == 0 {
        return Ok(0.0);
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    // ln C(nu, kappa) by a running product
    let mut ln_choose = 0.0;
    for j in 1..=kappa {
        ln_choose += ((nu - kappa + j) as f64 / j as f64).ln();
    }
    let mut terms = Vec::with_capacity((nu - kappa + 1) as usize);
    for i in kappa..=nu {
        terms.push(ln_choose + i as f64 * ln_p + (nu - i) as f64 * ln_q);
        if i < nu {
            ln_choose += ((nu - i) as f64 / (i + 1) as f64).ln();
        }
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    Ok(top + sum.ln())
}

/// `eta * P(Bin(nu, p) >= kappa)`.
pub fn exact_nfa(kappa: u64, nu: u64, p: f64, eta: u64) -> Result<f64> {
    check_eta(eta)?;
    if kappa == 0 {
        check_binomial_args(kappa, nu, p)?;
        return Ok(eta as f64);
    }
    Ok(eta as f64 * log_binomial_tail(kappa, nu, p)?.exp())
}

/// `-ln exact_nfa`, without underflow for vanishing tails.
pub fn exact_significance(kappa: u64, nu: u64, p: f64, eta: u64) -> Result<f64> {
    check_eta(eta)?;
    Ok(-log_binomial_tail(kappa, nu, p)? - (eta as f64).ln())
}

fn check_eta(eta: u64) -> Result<()> {
    if eta == 0 {
        return Err(Error::Domain("eta must be at least 1".into()));
    }
    Ok(())
}

/// Bernoulli KL divergence `KL(r || p)` with `0 ln 0 = 0`.
#[inline]
pub fn kl_bernoulli(r: f64, p: f64) -> f64 {
    let head = if r > 0.0 { r * (r / p).ln() } else { 0.0 };
    let tail = if r < 1.0 {
        (1.0 - r) * ((1.0 - r) / (1.0 - p)).ln()
    } else {
        0.0
    };
    head + tail
}

/// Hoeffding-approximated significance. Defined only when `kappa/nu > p`.
pub fn significance_hoeffding(kappa: u64, nu: u64, p: f64, eta: u64) -> Result<f64> {
    check_binomial_args(kappa, nu, p)?;
    check_eta(eta)?;
    let r = kappa as f64 / nu as f64;
    if r <= p {
        return Err(Error::Condition { ratio: r, p });
    }
    Ok(hoeffding_unchecked(kappa, nu, p, eta))
}

#[inline]
pub(crate) fn hoeffding_unchecked(kappa: u64, nu: u64, p: f64, eta: u64) -> f64 {
    let nu_f = nu as f64;
    nu_f * kl_bernoulli(kappa as f64 / nu_f, p) - (eta as f64).ln()
}

/// Significance of one box together with the quantities it was computed
/// from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance {
    pub value: f64,
    pub kappa: u64,
    pub nu: u64,
    pub eta: u64,
}

/// Space and background parameter shared by every test of one map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfaContext {
    space: SpaceDims,
    p: f64,
}

impl NfaContext {
    pub fn new(space: SpaceDims, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
        }
        Ok(Self { space, p })
    }

    pub fn space(&self) -> SpaceDims {
        self.space
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn significance(&self, kappa: u64, dims: BoxDims) -> Result<Significance> {
        let eta = eta_for_box(self.space, dims)?;
        let nu = (dims.w * dims.h * dims.zlen) as u64;
        let value = significance_hoeffding(kappa, nu, self.p, eta)?;
        Ok(Significance {
            value,
            kappa,
            nu,
            eta,
        })
    }
}

/// Significance threshold equivalent to `NFA < epsilon`.
pub fn s_min_for_epsilon(epsilon: f64) -> f64 {
    -epsilon.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::{BigInt, BigUint};
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    /// Exact rational binomial tail; `p` is taken as the exact binary value
    /// of the double.
    fn rational_tail(kappa: u64, nu: u64, p: f64) -> BigRational {
        // with p = a/d and q = b/d the tail is sum C(nu, i) a^i b^(nu-i) / d^nu
        let p = BigRational::from_float(p).unwrap();
        let d = p.denom().clone();
        let a = p.numer().clone();
        let b = &d - &a;
        let mut choose = BigInt::one();
        for i in 0..kappa {
            choose = choose * BigInt::from(nu - i) / BigInt::from(i + 1);
        }
        let mut a_pow = num_traits::pow(a.clone(), kappa as usize);
        let mut total = BigInt::zero();
        for i in kappa..=nu {
            total += &choose * &a_pow * num_traits::pow(b.clone(), (nu - i) as usize);
            choose = choose * BigInt::from(nu - i) / BigInt::from(i + 1);
            a_pow *= &a;
        }
        BigRational::new(total, num_traits::pow(d, nu as usize))
    }

    fn ln_biguint(n: &num_bigint::BigInt) -> f64 {
        let n: BigUint = n.to_biguint().unwrap();
        let bits = n.bits();
        let shift = bits.saturating_sub(64);
        let top = (&n >> shift).to_u64().unwrap() as f64;
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }

    fn ln_rational(r: &BigRational) -> f64 {
        ln_biguint(r.numer()) - ln_biguint(r.denom())
    }

    #[test]
    fn eta_examples() {
        let s = |w, h, b| SpaceDims {
            width: w,
            height: h,
            bins: b,
        };
        let d = |w, h, zlen| BoxDims { w, h, zlen };
        assert_eq!(eta_for_box(s(7, 5, 3), d(7, 5, 3)).unwrap(), 1);
        assert_eq!(eta_for_box(s(4, 4, 2), d(2, 2, 1)).unwrap(), 18);
        assert_eq!(eta_for_box(s(256, 256, 16), d(1, 1, 1)).unwrap(), 1_048_576);
        assert!(eta_for_box(s(4, 4, 2), d(5, 1, 1)).is_err());
        assert!(eta_for_box(s(4, 4, 2), d(1, 1, 0)).is_err());
    }

    #[test]
    fn exact_nfa_examples() {
        assert_eq!(exact_nfa(0, 17, 0.2, 42).unwrap(), 42.0);
        let v = exact_nfa(1, 1, 0.3, 10).unwrap();
        assert!((v - 3.0).abs() < 1e-12, "{v}");
        let v = exact_nfa(2, 3, 0.5, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn exact_tail_matches_rational_oracle() {
        for &(kappa, nu, p) in &[
            (1u64, 1u64, 0.3),
            (5, 10, 0.1),
            (37, 100, 0.25),
            (100, 100, 0.01),
            (3, 1000, 0.001),
            (150, 1000, 0.1),
            (600, 1000, 0.5),
            (999, 1000, 0.9),
            (12, 400, 0.0625),
        ] {
            let oracle = ln_rational(&rational_tail(kappa, nu, p));
            let got = log_binomial_tail(kappa, nu, p).unwrap();
            // 1e-10 relative on the tail is 1e-10 absolute on its log
            assert!(
                (got - oracle).abs() <= 1e-10,
                "kappa={kappa} nu={nu} p={p}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn hoeffding_examples() {
        let s = significance_hoeffding(10, 10, 0.25, 1).unwrap();
        assert!((s - 13.862943611198906).abs() < 1e-12);
        // evaluated independently at 50 digits
        let s = significance_hoeffding(8, 10, 0.3, 100).unwrap();
        assert!((s - 0.735_937_901_114_982_5).abs() < 1e-12, "{s}");
        assert!(matches!(
            significance_hoeffding(2, 10, 0.3, 1),
            Err(Error::Condition { .. })
        ));
        assert!(matches!(
            significance_hoeffding(3, 10, 0.3, 1),
            Err(Error::Condition { .. })
        ));
    }

    #[test]
    fn domain_errors() {
        assert!(exact_nfa(3, 2, 0.5, 1).is_err());
        assert!(exact_nfa(1, 0, 0.5, 1).is_err());
        assert!(exact_nfa(1, 2, 1.0, 1).is_err());
        assert!(exact_nfa(1, 2, 0.5, 0).is_err());
        assert!(NfaContext::new(
            SpaceDims {
                width: 2,
                height: 2,
                bins: 2
            },
            1.0
        )
        .is_err());
    }

    #[test]
    fn context_uses_per_shape_eta() {
        let ctx = NfaContext::new(
            SpaceDims {
                width: 4,
                height: 4,
                bins: 2,
            },
            0.25,
        )
        .unwrap();
        let s = ctx
            .significance(
                4,
                BoxDims {
                    w: 2,
                    h: 2,
                    zlen: 1,
                },
            )
            .unwrap();
        assert_eq!(s.eta, 18);
        assert_eq!(s.nu, 4);
        assert!((s.value - (4.0 * 4f64.ln() - 18f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn epsilon_one_is_zero_threshold() {
        assert_eq!(s_min_for_epsilon(1.0), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hoeffding_never_exceeds_exact(
                nu in 1u64..=200,
                frac in 0.0f64..=1.0,
                p in prop::sample::select(vec![0.01, 0.1, 0.3, 0.5]),
                eta in prop::sample::select(vec![1u64, 10, 10_000]),
            ) {
                let kappa = ((frac * nu as f64).round() as u64).min(nu);
                prop_assume!(kappa as f64 / nu as f64 > p);
                let approx = significance_hoeffding(kappa, nu, p, eta).unwrap();
                let exact = exact_significance(kappa, nu, p, eta).unwrap();
                prop_assert!(approx <= exact + 1e-9, "{approx} > {exact}");
            }

            #[test]
            fn hoeffding_monotone(nu in 2u64..=150, p in 0.01f64..0.9, eta in 1u64..1000) {
                let first = (p * nu as f64).floor() as u64 + 1;
                let mut prev = f64::NEG_INFINITY;
                for kappa in first..=nu {
                    let s = significance_hoeffding(kappa, nu, p, eta).unwrap();
                    prop_assert!(s > prev);
                    let s_more_tests = significance_hoeffding(kappa, nu, p, eta + 1).unwrap();
                    prop_assert!(s_more_tests < s);
                    prev = s;
                }
            }

            #[test]
            fn exact_nfa_non_increasing(nu in 1u64..=120, p in 0.01f64..0.99, eta in 1u64..100) {
                prop_assert_eq!(exact_nfa(0, nu, p, eta).unwrap(), eta as f64);
                let mut prev = f64::INFINITY;
                for kappa in 0..=nu {
                    let v = exact_nfa(kappa, nu, p, eta).unwrap();
                    prop_assert!(v <= prev * (1.0 + 1e-12));
                    prev = v;
                }
            }
        }
    }
}
