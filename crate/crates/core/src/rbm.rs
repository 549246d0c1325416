//! Restricted Boltzmann machine over binary `{0,1}` units.
//!
//! Energy convention (no ½ on the coupling term):
//!
//! ```text
//! E(v, h) = −( Σ_ij w_ij v_i h_j + Σ_i c_i v_i + Σ_j d_j h_j )
//! ```
//!
//! With that form the single-unit flip energy is `ΔE_i = c_i + Σ_j w_ij h_j`
//! and every probability is a Boltzmann weight `e^{−E/T}`. The machines
//! here are small enough that partition functions are always summed
//! exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Largest visible layer [`visible_distribution`] will enumerate.
pub const MAX_ENUMERABLE_VISIBLE: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const UNIT: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidTemperature(t))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self::UNIT
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        Self::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(softplus(x), sigmoid(x))` sharing one exponential.
pub(crate) fn softplus_sigmoid(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let sp = x.max(0.0) + e.ln_1p();
    let s = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (sp, s)
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that a unit with flip energy `ΔE` is on: `1/(1 + e^{−ΔE/T})`.
pub fn unit_activation(delta_e: f64, temp: Temperature) -> f64 {
    sigmoid(delta_e / temp.0)
}

/// Bits of `index` over `len` units, most significant first.
pub fn bits_from_index(index: usize, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((index >> (len - 1 - i)) & 1) as u8).collect()
}

/// Inverse of [`bits_from_index`].
pub fn index_from_bits(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
}

fn check_binary(what: &'static str, bits: &[u8]) -> Result<()> {
    if bits.iter().all(|b| *b <= 1) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be 0/1, got {bits:?}")))
    }
}

/// Weights and biases of an `m`-visible, `n`-hidden machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub n_visible: usize,
    pub n_hidden: usize,
    /// `w_ij`, row-major `m × n`.
    pub weights: Vec<f64>,
    /// `c_i`
    pub visible_biases: Vec<f64>,
    /// `d_j`
    pub hidden_biases: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            n_visible,
            n_hidden,
            weights: vec![0.0; n_visible * n_hidden],
            visible_biases: vec![0.0; n_visible],
            hidden_biases: vec![0.0; n_hidden],
        }
    }

    pub fn new(
        n_visible: usize,
        n_hidden: usize,
        weights: Vec<f64>,
        visible_biases: Vec<f64>,
        hidden_biases: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            n_visible,
            n_hidden,
            weights,
            visible_biases,
            hidden_biases,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_visible == 0 || self.n_hidden == 0 {
            return Err(Error::InvalidInput("machine needs at least one visible and one hidden unit".into()));
        }
        check_len("weights", self.n_visible * self.n_hidden, self.weights.len())?;
        check_len("visible biases", self.n_visible, self.visible_biases.len())?;
        check_len("hidden biases", self.n_hidden, self.hidden_biases.len())?;
        if self.values().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_hidden + j]
    }

    /// Every parameter, weights first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(&self.visible_biases)
            .chain(&self.hidden_biases)
            .copied()
    }

    /// Every parameter multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_visible: self.n_visible,
            n_hidden: self.n_hidden,
            weights: self.weights.iter().map(|w| w * factor).collect(),
            visible_biases: self.visible_biases.iter().map(|w| w * factor).collect(),
            hidden_biases: self.hidden_biases.iter().map(|w| w * factor).collect(),
        }
    }

    /// Input to hidden unit `j`: `d_j + Σ_i w_ij v_i`, with `d` supplied.
    pub(crate) fn hidden_input(&self, hidden_biases: &[f64], v: &[u8], j: usize) -> f64 {
        let n = self.n_hidden;
        v.iter()
            .enumerate()
            .filter(|(_, b)| **b == 1)
            .fold(hidden_biases[j], |acc, (i, _)| acc + self.weights[i * n + j])
    }

    /// Input to visible unit `i`: `c_i + Σ_j w_ij h_j`.
    pub(crate) fn visible_input(&self, h: &[u8], i: usize) -> f64 {
        let row = &self.weights[i * self.n_hidden..(i + 1) * self.n_hidden];
        row.iter()
            .zip(h)
            .filter(|(_, b)| **b == 1)
            .fold(self.visible_biases[i], |acc, (w, _)| acc + w)
    }

    /// Free energy with the hidden biases replaced by `hidden_biases`.
    pub(crate) fn free_energy_with(&self, hidden_biases: &[f64], v: &[u8], t: f64) -> f64 {
        let visible: f64 = self
            .visible_biases
            .iter()
            .zip(v)
            .map(|(c, b)| c * f64::from(*b))
            .sum();
        let hidden: f64 = (0..self.n_hidden)
            .map(|j| softplus(self.hidden_input(hidden_biases, v, j) / t))
            .sum();
        -visible - t * hidden
    }

    pub(crate) fn energy_with(&self, hidden_biases: &[f64], v: &[u8], h: &[u8]) -> f64 {
        let mut total = 0.0;
        for (i, vi) in v.iter().enumerate() {
            if *vi == 1 {
                total += self.visible_biases[i];
                for (j, hj) in h.iter().enumerate() {
                    if *hj == 1 {
                        total += self.weight(i, j);
                    }
                }
            }
        }
        for (d, hj) in hidden_biases.iter().zip(h) {
            if *hj == 1 {
                total += d;
            }
        }
        -total
    }

    /// Normalized `P(v)` over all `2^m` visible vectors at temperature `t`.
    pub(crate) fn visible_distribution_with(&self, hidden_biases: &[f64], t: f64) -> Vec<f64> {
        let m = self.n_visible;
        let logits: Vec<f64> = (0..1usize << m)
            .map(|k| -self.free_energy_with(hidden_biases, &bits_from_index(k, m), t) / t)
            .collect();
        normalize_logits(&logits)
    }

    pub(crate) fn check_visible(&self, v: &[u8]) -> Result<()> {
        check_len("visible vector", self.n_visible, v.len())?;
        check_binary("visible vector", v)
    }

    pub(crate) fn check_hidden(&self, h: &[u8]) -> Result<()> {
        check_len("hidden vector", self.n_hidden, h.len())?;
        check_binary("hidden vector", h)
    }
}

/// Softmax of `logits`, shifted by the max for stability.
pub(crate) fn normalize_logits(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

pub fn energy(params: &RbmParams, v: &[u8], h: &[u8]) -> Result<f64> {
    params.check_visible(v)?;
    params.check_hidden(h)?;
    Ok(params.energy_with(&params.hidden_biases, v, h))
}

/// `F(v) = −Σ c_i v_i − T Σ_j softplus((d_j + Σ_i w_ij v_i)/T)`,
/// equal to `−T log Σ_h e^{−E(v,h)/T}`.
pub fn free_energy(params: &RbmParams, v: &[u8], temp: Temperature) -> Result<f64> {
    params.check_visible(v)?;
    Ok(params.free_energy_with(&params.hidden_biases, v, temp.0))
}

/// `P(v) ∝ e^{−F(v)/T}`, indexed as in [`bits_from_index`].
pub fn visible_distribution(params: &RbmParams, temp: Temperature) -> Result<Vec<f64>> {
    if params.n_visible > MAX_ENUMERABLE_VISIBLE {
        return Err(Error::TooLarge(params.n_visible));
    }
    Ok(params.visible_distribution_with(&params.hidden_biases, temp.0))
}

/// State of one Gibbs chain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GibbsState {
    pub visible: Vec<u8>,
    pub hidden: Vec<u8>,
}

impl GibbsState {
    pub fn zeros(params: &RbmParams) -> Self {
        Self {
            visible: vec![0; params.n_visible],
            hidden: vec![0; params.n_hidden],
        }
    }
}

/// Resample hidden given visible, then visible given hidden, using `d` as hidden biases.
pub(crate) fn block_gibbs_with<R: Rng + ?Sized>(
    params: &RbmParams,
    hidden_biases: &[f64],
    state: &mut GibbsState,
    t: f64,
    rng: &mut R,
) {
    for j in 0..params.n_hidden {
        let p = sigmoid(params.hidden_input(hidden_biases, &state.visible, j) / t);
        state.hidden[j] = u8::from(rng.random::<f64>() < p);
    }
    for i in 0..params.n_visible {
        let p = sigmoid(params.visible_input(&state.hidden, i) / t);
        state.visible[i] = u8::from(rng.random::<f64>() < p);
    }
}

/// One block-Gibbs sweep in place: all hidden units given `v`, then all visible units given the new `h`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    params: &RbmParams,
    state: &mut GibbsState,
    temp: Temperature,
    rng: &mut R,
) -> Result<()> {
    params.check_visible(&state.visible)?;
    params.check_hidden(&state.hidden)?;
    block_gibbs_with(params, &params.hidden_biases, state, temp.0, rng);
    Ok(())
}
