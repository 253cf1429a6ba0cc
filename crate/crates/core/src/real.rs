//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used for observations, log-likelihood ratios and
/// probabilities. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for the IEEE types this trait is implemented for.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Slack used for barrier comparisons, so that sums landing exactly on a
    /// threshold (lattice models) compare the same way no matter the order in
    /// which their increments were added.
    #[inline]
    fn barrier_slack(threshold: Self) -> Self {
        Self::epsilon() * Self::lit(1024.0) * threshold.abs().max(Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp<F: Real>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(x)))` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() || !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<F>().ln()
}

/// Log of the elementary symmetric polynomial `e_m(exp(v_1), .., exp(v_n))`,
/// i.e. `log sum_{|A| = m} exp(sum_{i in A} v_i)`.
pub fn log_elementary_symmetric<F: Real>(values: &[F], m: usize) -> F {
    if m > values.len() {
        return F::neg_infinity();
    }
    let mut acc = vec![F::neg_infinity(); m + 1];
    acc[0] = F::zero();
    for (i, &v) in values.iter().enumerate() {
        let top = m.min(i + 1);
        for j in (1..=top).rev() {
            acc[j] = log_add_exp(acc[j], acc[j - 1] + v);
        }
    }
    acc[m]
}

/// `log C(n, k)` computed by summing logs.
pub fn log_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}
