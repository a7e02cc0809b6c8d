//! Network state and the shared spiking primitives.
//!
//! A topic neuron `z` receives one synapse from every word neuron
//! (`M^α`, K x V) and from every document neuron (`M^β`, K x D); SpikeCGS
//! adds a self-excitation term `b`. All weights live in log space.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

/// Dirichlet hyperparameters: `lambda` on the document-topic side (length K)
/// and `phi` on the topic-word side (length V).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Hyperparams<T> {
    lambda: Vec<T>,
    phi: Vec<T>,
    lambda_bar: T,
    phi_bar: T,
    kappa: T,
}

impl<T: Scalar> Hyperparams<T> {
    pub fn new(lambda: Vec<T>, phi: Vec<T>) -> Result<Self> {
        if lambda.is_empty() || phi.is_empty() {
            return Err(Error::Config("hyperparameter vectors must be non-empty".into()));
        }
        if lambda.iter().chain(&phi).any(|x| !(x.is_finite() && *x >= T::zero())) {
            return Err(Error::Config("hyperparameters must be finite and non-negative".into()));
        }
        let lambda_bar = lambda.iter().copied().sum();
        let phi_bar = phi.iter().copied().sum();
        let kappa = lambda.iter().map(|&l| l - T::one()).sum();
        Ok(Self {
            lambda,
            phi,
            lambda_bar,
            phi_bar,
            kappa,
        })
    }

    pub fn symmetric(k: usize, v: usize, lambda: T, phi: T) -> Result<Self> {
        Self::new(vec![lambda; k], vec![phi; v])
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn phi(&self) -> &[T] {
        &self.phi
    }

    pub fn lambda_bar(&self) -> T {
        self.lambda_bar
    }

    pub fn phi_bar(&self) -> T {
        self.phi_bar
    }

    /// `Σ_z (λ_z − 1)`, the document-side normalization target in MAP mode.
    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn num_topics(&self) -> usize {
        self.lambda.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.len()
    }

    /// MAP mode needs a positive normalization constant.
    pub fn require_positive_kappa(&self) -> Result<()> {
        if self.kappa > T::zero() {
            Ok(())
        } else {
            Err(Error::Config(format!("MAP mode requires Σ(λ_z − 1) > 0, got {}", self.kappa)))
        }
    }
}

/// Log-space synaptic weights.
///
/// `m_alpha` is topic-major (`z * V + w`); `m_beta` is stored document-major
/// (`d * K + z`) so that one document's column is contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetworkWeights<T> {
    k: usize,
    v: usize,
    d: usize,
    m_alpha: Vec<T>,
    m_beta: Vec<T>,
    b: Option<Vec<T>>,
}

impl<T: Scalar> NetworkWeights<T> {
    pub fn zeros(k: usize, v: usize, d: usize) -> Self {
        Self {
            k,
            v,
            d,
            m_alpha: vec![T::zero(); k * v],
            m_beta: vec![T::zero(); k * d],
            b: None,
        }
    }

    pub fn from_parts(k: usize, v: usize, d: usize, m_alpha: Vec<T>, m_beta: Vec<T>, b: Option<Vec<T>>) -> Result<Self> {
        if m_alpha.len() != k * v || m_beta.len() != k * d || b.as_ref().is_some_and(|b| b.len() != k) {
            return Err(Error::Consistency(format!("weight shapes do not match K={k}, V={v}, D={d}")));
        }
        Ok(Self { k, v, d, m_alpha, m_beta, b })
    }

    /// Every synapse drawn independently from `Normal(mean, sd)`.
    pub fn random_normal<R: Rng + ?Sized>(k: usize, v: usize, d: usize, mean: f64, sd: f64, rng: &mut R) -> Self {
        let n = Normal::new(mean, sd).expect("valid normal");
        let mut draw = |len: usize| (0..len).map(|_| T::of(n.sample(rng))).collect::<Vec<T>>();
        let m_alpha = draw(k * v);
        let m_beta = draw(k * d);
        Self {
            k,
            v,
            d,
            m_alpha,
            m_beta,
            b: None,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn num_docs(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn alpha(&self, z: usize, w: usize) -> T {
        self.m_alpha[z * self.v + w]
    }

    #[inline]
    pub fn alpha_mut(&mut self, z: usize, w: usize) -> &mut T {
        &mut self.m_alpha[z * self.v + w]
    }

    pub fn alpha_row(&self, z: usize) -> &[T] {
        &self.m_alpha[z * self.v..(z + 1) * self.v]
    }

    pub fn alpha_row_mut(&mut self, z: usize) -> &mut [T] {
        &mut self.m_alpha[z * self.v..(z + 1) * self.v]
    }

    pub fn m_alpha(&self) -> &[T] {
        &self.m_alpha
    }

    pub fn m_alpha_mut(&mut self) -> &mut [T] {
        &mut self.m_alpha
    }

    #[inline]
    pub fn beta(&self, z: usize, d: usize) -> T {
        self.m_beta[d * self.k + z]
    }

    #[inline]
    pub fn beta_mut(&mut self, z: usize, d: usize) -> &mut T {
        &mut self.m_beta[d * self.k + z]
    }

    pub fn beta_col(&self, d: usize) -> &[T] {
        &self.m_beta[d * self.k..(d + 1) * self.k]
    }

    pub fn beta_col_mut(&mut self, d: usize) -> &mut [T] {
        &mut self.m_beta[d * self.k..(d + 1) * self.k]
    }

    /// Document-major `M^β` storage.
    pub fn m_beta(&self) -> &[T] {
        &self.m_beta
    }

    pub fn m_beta_mut(&mut self) -> &mut [T] {
        &mut self.m_beta
    }

    pub fn b(&self) -> Option<&[T]> {
        self.b.as_deref()
    }

    pub fn b_mut(&mut self) -> Option<&mut [T]> {
        self.b.as_deref_mut()
    }

    pub fn set_b(&mut self, b: Option<Vec<T>>) {
        assert!(b.as_ref().is_none_or(|b| b.len() == self.k));
        self.b = b;
    }

    pub fn is_finite(&self) -> bool {
        self.m_alpha.iter().chain(&self.m_beta).chain(self.b.iter().flatten()).all(|x| x.is_finite())
    }

    /// Splits into the word-side and document-side arrays for simultaneous mutation.
    pub fn split_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.m_alpha, &mut self.m_beta)
    }

    /// Shifts every row of `M^α` and column of `M^β` so that
    /// `Σ_w exp M^α_zw = 1` and `Σ_z exp M^β_zd = kappa`.
    pub fn project_to_manifold(&mut self, kappa: T) {
        for z in 0..self.k {
            let lse = log_sum_exp(self.alpha_row(z));
            self.alpha_row_mut(z).iter_mut().for_each(|m| *m -= lse);
        }
        let log_kappa = kappa.ln();
        for d in 0..self.d {
            let lse = log_sum_exp(self.beta_col(d));
            self.beta_col_mut(d).iter_mut().for_each(|m| *m = *m - lse + log_kappa);
        }
    }
}

/// Membrane potentials `u_z = M^α_zw + M^β_zd (− b_z)` for a clamped token.
pub fn potentials<T: Scalar>(weights: &NetworkWeights<T>, w: usize, d: usize, use_self_excitation: bool) -> Vec<T> {
    let mut u = vec![T::zero(); weights.num_topics()];
    potentials_into(weights, w, d, use_self_excitation, &mut u);
    u
}

pub fn potentials_into<T: Scalar>(weights: &NetworkWeights<T>, w: usize, d: usize, use_self_excitation: bool, out: &mut [T]) {
    let col = weights.beta_col(d);
    for (z, u) in out.iter_mut().enumerate() {
        *u = weights.alpha(z, w) + col[z];
    }
    if use_self_excitation {
        if let Some(b) = weights.b() {
            out.iter_mut().zip(b).for_each(|(u, &bz)| *u -= bz);
        }
    }
}

/// Inverse-CDF draw from non-negative, unnormalized category weights.
pub fn sample_unnormalized<T: Scalar, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.f64()).sum();
    let mut r = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.f64();
        if w > 0.0 {
            if r < w {
                return i;
            }
            last = i;
        }
        r -= w;
    }
    last
}

/// First neuron to fire in a race of independent Poisson neurons with rates
/// `exp(u_z)`.
///
/// The first arrival among exponential clocks is categorical on
/// `softmax(u)`, so the draw is made directly by inverse CDF after
/// subtracting `max(u)`. See [`race_sample_clocks`] for the literal race.
pub fn race_sample<T: Scalar, R: Rng + ?Sized>(u: &[T], rng: &mut R) -> usize {
    let max = u.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = 0.0f64;
    let mut rates = [0.0f64; 64];
    if u.len() <= rates.len() {
        for (r, &x) in rates.iter_mut().zip(u) {
            *r = (x - max).f64().exp();
            total += *r;
        }
        let mut t = rng.random::<f64>() * total;
        for (z, &r) in rates[..u.len()].iter().enumerate() {
            if t < r {
                return z;
            }
            t -= r;
        }
        return rates[..u.len()].iter().rposition(|&r| r > 0.0).unwrap_or(0);
    }
    let rates: Vec<T> = u.iter().map(|&x| (x - max).exp()).collect();
    sample_unnormalized(&rates, rng)
}

/// Literal Poisson race: every neuron draws its first spike time from an
/// exponential with rate `exp(u_z − max u)` and the earliest wins.
pub fn race_sample_clocks<T: Scalar, R: Rng + ?Sized>(u: &[T], rng: &mut R) -> usize {
    let max = u.iter().copied().fold(T::neg_infinity(), T::max);
    let mut best = (f64::INFINITY, 0usize);
    for (z, &x) in u.iter().enumerate() {
        let rate = (x - max).f64().exp();
        if rate <= 0.0 {
            continue;
        }
        let e = -(1.0 - rng.random::<f64>()).ln() / rate;
        if e < best.0 {
            best = (e, z);
        }
    }
    best.1
}

/// `log(exp(x) − 1)`: removes one count from a value stored as `log(count + prior)`.
pub fn tau1<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::Domain(format!("tau1 needs a positive argument (count would go negative), got {x}")));
    }
    let ln2 = T::of(std::f64::consts::LN_2);
    if x > ln2 {
        Ok(x + (-(-x).exp()).ln_1p())
    } else {
        Ok(x.exp_m1().ln())
    }
}

/// `log(exp(x) + 1)`: adds one count.
pub fn tau2<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `exp(M^α_zw + M^β_zd − A)` with `A = log ζ(M^α_z·) + log ζ(M^β_·d)`.
pub fn joint_density<T: Scalar>(weights: &NetworkWeights<T>, w: usize, d: usize, z: usize) -> T {
    let a = log_sum_exp(weights.alpha_row(z)) + log_sum_exp(weights.beta_col(d));
    (weights.alpha(z, w) + weights.beta(z, d) - a).exp()
}

/// Constraint deviations `ζ^α_z = Σ_w exp M^α_zw − 1` and
/// `ζ^β_d = Σ_z exp M^β_zd − κ`.
pub fn constraint_deviation<T: Scalar>(weights: &NetworkWeights<T>, kappa: T) -> (Vec<T>, Vec<T>) {
    let za = (0..weights.num_topics())
        .map(|z| weights.alpha_row(z).iter().map(|m| m.exp()).sum::<T>() - T::one())
        .collect();
    let zb = (0..weights.num_docs())
        .map(|d| weights.beta_col(d).iter().map(|m| m.exp()).sum::<T>() - kappa)
        .collect();
    (za, zb)
}

pub fn max_abs<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}
