//! Observation models for the two hypotheses and the information constants
//! derived from them.
//!
//! Every model is a pair of mutually absolutely continuous measures: `nu`
//! (state 0) and `mu` (state 1). The primitive exposed by a model is the
//! log-likelihood ratio `L(x) = log(dmu/dnu)(x)`; densities themselves are
//! never formed, so large `|x|` cannot underflow.
//!
//! Two families are built in:
//!
//! * Gaussian mean shift with a shared variance.
//! * Finite alphabets given by explicit mass tables. These are the models the
//!   exact oracle in [`crate::oracle`] can evaluate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::real::{log_sum_exp, Real};

/// Tolerance on the total mass of a finite alphabet.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for numerically integrated divergences.
pub const QUADRATURE_REL_TOL: f64 = 1e-9;

/// Search interval for the Chernoff exponent.
pub const CHERNOFF_BRACKET: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// The true state of the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn opposite(self) -> Self {
        match self {
            Hypothesis::H0 => Hypothesis::H1,
            Hypothesis::H1 => Hypothesis::H0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Hypothesis::H0),
            1 => Some(Hypothesis::H1),
            _ => None,
        }
    }
}

/// Where a model puts its mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    RealLine,
    Finite(usize),
}

/// Explicit two-row mass table on sorted, distinct points.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteAlphabet<F> {
    points: Vec<F>,
    mass: [Vec<F>; 2],
    log_mass: [Vec<F>; 2],
    llr: Vec<F>,
    cdf: [Vec<f64>; 2],
}

impl<F: Real> FiniteAlphabet<F> {
    pub fn points(&self) -> &[F] {
        &self.points
    }

    pub fn mass(&self, theta: Hypothesis) -> &[F] {
        &self.mass[theta.index()]
    }

    pub fn log_mass(&self, theta: Hypothesis) -> &[F] {
        &self.log_mass[theta.index()]
    }

    /// Log-likelihood ratio at each point, in point order.
    pub fn llr(&self) -> &[F] {
        &self.llr
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the point equal to `x`, up to rounding noise.
    pub fn index_of(&self, x: F) -> Option<usize> {
        let pos = self.points.partition_point(|&p| p < x);
        let tol = F::lit(1e-9) * x.abs().max(F::one());
        [pos.checked_sub(1), Some(pos)]
            .into_iter()
            .flatten()
            .filter(|&i| i < self.points.len())
            .find(|&i| (self.points[i] - x).abs() <= tol)
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, theta: Hypothesis, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let cdf = &self.cdf[theta.index()];
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family<F> {
    Gaussian { mean0: F, mean1: F, variance: F },
    Finite(FiniteAlphabet<F>),
}

/// A pair of hypotheses `(nu, mu)` over scalar observations.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisModel<F> {
    name: String,
    family: Family<F>,
}

/// Kullback–Leibler divergences and the Chernoff constant of a model, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoConstants<F> {
    /// `-E_nu[L]`
    pub i0: F,
    /// `E_mu[L]`
    pub i1: F,
    /// `min(i0, i1)`, the per-sensor performance unit of sequential tests.
    pub i: F,
    /// Chernoff constant, the per-sensor unit of fixed-sample tests.
    pub i_tilde: F,
}

/// Result of minimizing the tilted integral `E_nu[exp(w L)]` over `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chernoff<F> {
    pub value: F,
    pub minimizer: F,
}

impl<F: Real> HypothesisModel<F> {
    /// Gaussian pair `N(mean0, variance)` vs `N(mean1, variance)`.
    pub fn gaussian(name: impl Into<String>, mean0: F, mean1: F, variance: F) -> Result<Self> {
        let name = name.into();
        if !(mean0.is_finite() && mean1.is_finite()) {
            return Err(Error::InvalidConfig(format!("model `{name}`: means must be finite")));
        }
        if !(variance.is_finite() && variance > F::zero()) {
            return Err(Error::InvalidConfig(format!(
                "model `{name}`: variance must be positive and finite"
            )));
        }
        Ok(Self { name, family: Family::Gaussian { mean0, mean1, variance } })
    }

    /// Finite alphabet with masses `mass0` under `nu` and `mass1` under `mu`.
    /// Points carrying no mass under either measure are dropped.
    pub fn finite(
        name: impl Into<String>,
        points: &[F],
        mass0: &[F],
        mass1: &[F],
    ) -> Result<Self> {
        let name = name.into();
        if points.len() != mass0.len() || points.len() != mass1.len() {
            return Err(Error::InvalidConfig(format!(
                "model `{name}`: points and mass rows must have equal length"
            )));
        }
        for (row, masses) in [("mass0", mass0), ("mass1", mass1)] {
            if masses.iter().any(|&m| !(m.is_finite() && m >= F::zero())) {
                return Err(Error::InvalidConfig(format!(
                    "model `{name}`: {row} entries must be finite and non-negative"
                )));
            }
            let total: F = masses.iter().copied().sum();
            if (total - F::one()).abs().to_f64_lossy() > MASS_TOLERANCE {
                return Err(Error::InvalidConfig(format!(
                    "model `{name}`: {row} sums to {total}, expected 1"
                )));
            }
        }
        let mut rows: Vec<(F, F, F)> = points
            .iter()
            .zip(mass0.iter().zip(mass1))
            .filter(|(_, (&m0, &m1))| m0 > F::zero() || m1 > F::zero())
            .map(|(&p, (&m0, &m1))| (p, m0, m1))
            .collect();
        if let Some((p, _, _)) = rows.iter().find(|(_, m0, m1)| *m0 == F::zero() || *m1 == F::zero()) {
            return Err(Error::DegenerateModel(format!(
                "model `{name}`: point {p} has mass under only one hypothesis"
            )));
        }
        if rows.iter().any(|(p, _, _)| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("model `{name}`: points must be finite")));
        }
        rows.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite points"));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("model `{name}`: duplicate points")));
        }
        if rows.is_empty() {
            return Err(Error::InvalidConfig(format!("model `{name}`: empty alphabet")));
        }

        let points: Vec<F> = rows.iter().map(|r| r.0).collect();
        let m0: Vec<F> = rows.iter().map(|r| r.1).collect();
        let m1: Vec<F> = rows.iter().map(|r| r.2).collect();
        let lm0: Vec<F> = m0.iter().map(|m| m.ln()).collect();
        let lm1: Vec<F> = m1.iter().map(|m| m.ln()).collect();
        let llr = lm1.iter().zip(&lm0).map(|(a, b)| *a - *b).collect();
        let cdf = |m: &[F]| {
            let total: f64 = m.iter().map(|x| x.to_f64_lossy()).sum();
            m.iter()
                .scan(0.0, |acc, x| {
                    *acc += x.to_f64_lossy() / total;
                    Some(*acc)
                })
                .collect::<Vec<f64>>()
        };
        let cdf = [cdf(&m0), cdf(&m1)];
        Ok(Self {
            name,
            family: Family::Finite(FiniteAlphabet {
                points,
                mass: [m0, m1],
                log_mass: [lm0, lm1],
                llr,
                cdf,
            }),
        })
    }

    /// Bernoulli pair on `{0, 1}` with success probabilities `p0` under `nu`
    /// and `p1` under `mu`.
    pub fn bernoulli(name: impl Into<String>, p0: F, p1: F) -> Result<Self> {
        let one = F::one();
        Self::finite(name, &[F::zero(), one], &[one - p0, p0], &[one - p1, p1])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> &Family<F> {
        &self.family
    }

    pub fn alphabet(&self) -> Option<&FiniteAlphabet<F>> {
        match &self.family {
            Family::Finite(a) => Some(a),
            Family::Gaussian { .. } => None,
        }
    }

    pub fn support(&self) -> Support {
        match &self.family {
            Family::Gaussian { .. } => Support::RealLine,
            Family::Finite(a) => Support::Finite(a.len()),
        }
    }

    /// `log(dmu/dnu)(x)`.
    pub fn log_likelihood_ratio(&self, x: F) -> Result<F> {
        let value = match &self.family {
            Family::Gaussian { mean0, mean1, variance } => {
                let mid = (*mean0 + *mean1) * F::lit(0.5);
                (*mean1 - *mean0) * (x - mid) / *variance
            }
            Family::Finite(a) => {
                let i = a.index_of(x).ok_or_else(|| Error::OutsideSupport {
                    model: self.name.clone(),
                    value: x.to_f64_lossy(),
                })?;
                a.llr[i]
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::DegenerateModel(format!(
                "model `{}`: non-finite log-likelihood ratio at {x}",
                self.name
            )))
        }
    }

    /// One observation drawn from `nu` (state 0) or `mu` (state 1).
    pub fn sample<R: Rng + ?Sized>(&self, theta: Hypothesis, rng: &mut R) -> F {
        match &self.family {
            Family::Gaussian { mean0, mean1, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                let mean = if theta == Hypothesis::H0 { *mean0 } else { *mean1 };
                mean + variance.sqrt() * F::lit(z)
            }
            Family::Finite(a) => a.points[a.sample_index(theta, rng)],
        }
    }

    /// Draw from the exponentially tilted law `dQ ∝ exp(w L) dP_theta`. Both
    /// families are closed under this tilt.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, theta: Hypothesis, w: F, rng: &mut R) -> F {
        match &self.family {
            Family::Gaussian { mean0, mean1, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                let mean = if theta == Hypothesis::H0 { *mean0 } else { *mean1 };
                mean + w * (*mean1 - *mean0) + variance.sqrt() * F::lit(z)
            }
            Family::Finite(a) => {
                let norm = self.log_mgf(theta, w);
                let u = F::lit(rng.random::<f64>());
                let mut acc = F::zero();
                for (j, (&lm, &l)) in a.log_mass(theta).iter().zip(&a.llr).enumerate() {
                    acc = acc + (lm + w * l - norm).exp();
                    if u < acc {
                        return a.points[j];
                    }
                }
                a.points[a.points.len() - 1]
            }
        }
    }

    /// `log E_theta[exp(w L)]`.
    pub fn log_mgf(&self, theta: Hypothesis, w: F) -> F {
        match &self.family {
            Family::Gaussian { mean0, mean1, variance } => {
                let d = *mean1 - *mean0;
                let var_l = d * d / *variance;
                let half = var_l * F::lit(0.5);
                let mean_l = if theta == Hypothesis::H0 { -half } else { half };
                w * mean_l + w * w * half
            }
            Family::Finite(a) => {
                let terms: Vec<F> = a
                    .log_mass(theta)
                    .iter()
                    .zip(&a.llr)
                    .map(|(&lm, &l)| lm + w * l)
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    /// `(I0, I1)` in closed form.
    pub fn kl_divergences(&self) -> Result<(F, F)> {
        let (i0, i1) = match &self.family {
            Family::Gaussian { mean0, mean1, variance } => {
                let d = *mean1 - *mean0;
                let v = d * d / (F::lit(2.0) * *variance);
                (v, v)
            }
            Family::Finite(a) => {
                let i1 = a.mass[1].iter().zip(&a.llr).map(|(&m, &l)| m * l).sum::<F>();
                let i0 = -a.mass[0].iter().zip(&a.llr).map(|(&m, &l)| m * l).sum::<F>();
                (i0, i1)
            }
        };
        self.check_divergences(i0, i1)
    }

    /// `(I0, I1)` by adaptive quadrature of the density-weighted LLR for the
    /// Gaussian family; exact finite sums for alphabets.
    pub fn kl_divergences_by_quadrature(&self) -> Result<(F, F)> {
        match &self.family {
            Family::Gaussian { mean0, mean1, variance } => {
                let sd = variance.sqrt();
                let norm = (F::lit(2.0) * F::PI() * *variance).sqrt();
                let density = |mean: F| {
                    move |x: F| {
                        let z = (x - mean) / sd;
                        (-(z * z) * F::lit(0.5)).exp() / norm
                    }
                };
                let llr = |x: F| self.log_likelihood_ratio(x).unwrap_or(F::zero());
                let tol = F::lit(QUADRATURE_REL_TOL);
                let (d0, d1) = (density(*mean0), density(*mean1));
                let i1 = quadrature::integrate_real_line(|x| d1(x) * llr(x), *mean1, sd, tol);
                let i0 = quadrature::integrate_real_line(|x| -d0(x) * llr(x), *mean0, sd, tol);
                match (i0, i1) {
                    (Some(i0), Some(i1)) => self.check_divergences(i0, i1),
                    _ => Err(Error::NumericalSearch(format!(
                        "model `{}`: divergence quadrature did not converge",
                        self.name
                    ))),
                }
            }
            Family::Finite(_) => self.kl_divergences(),
        }
    }

    fn check_divergences(&self, i0: F, i1: F) -> Result<(F, F)> {
        if i0.is_finite() && i1.is_finite() && i0 > F::zero() && i1 > F::zero() {
            Ok((i0, i1))
        } else {
            Err(Error::DegenerateModel(format!(
                "model `{}`: divergences must be positive and finite, got I0={i0}, I1={i1}",
                self.name
            )))
        }
    }

    /// Minimizes `log E_nu[exp(w L)]` over `w` by golden-section search.
    pub fn chernoff(&self) -> Result<Chernoff<F>> {
        self.kl_divergences()?;
        let f = |w: F| self.log_mgf(Hypothesis::H0, w);
        let (lo, hi) = (F::lit(CHERNOFF_BRACKET.0), F::lit(CHERNOFF_BRACKET.1));
        let inv_phi = F::lit((5f64.sqrt() - 1.0) / 2.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        let tol = F::epsilon().sqrt() * F::lit(0.1);
        for _ in 0..200 {
            if (b - a).abs() <= tol {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d);
            }
        }
        let w = (a + b) * F::lit(0.5);
        let edge = F::lit(1e-4);
        if w - lo < edge || hi - w < edge {
            return Err(Error::NumericalSearch(format!(
                "model `{}`: Chernoff minimizer {w} not bracketed inside (0, 1)",
                self.name
            )));
        }
        Ok(Chernoff { value: -f(w), minimizer: w })
    }

    pub fn chernoff_constant(&self) -> Result<F> {
        self.chernoff().map(|c| c.value)
    }

    pub fn info_constants(&self) -> Result<InfoConstants<F>> {
        let (i0, i1) = self.kl_divergences()?;
        let i_tilde = self.chernoff_constant()?;
        Ok(InfoConstants { i0, i1, i: i0.min(i1), i_tilde })
    }
}
