//! Born-rule statistics for spin measurements on two spin-1/2 particles.
//!
//! Each station measures spin along `(sin θ, 0, cos θ)`, i.e. in the z–x
//! plane at angle θ from the z-axis. With that convention the singlet has
//! correlator `E(α, β) = −cos(α − β)`.
//!
//! Outcome tables are indexed `2·bit(x_A) + bit(x_B)` with `+1 → 0` and
//! `−1 → 1`, which is also the visible-unit encoding used by the machine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;
const DIST_TOL: f64 = 1e-9;

/// Measurement direction in radians from the z-axis, in the z–x plane.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorAngle(pub f64);

impl DetectorAngle {
    pub fn radians(self) -> f64 {
        self.0
    }

    /// `k·π/8`, the grid used by the experiment presets.
    pub fn eighths_of_pi(k: u32) -> Self {
        Self(f64::from(k) * std::f64::consts::FRAC_PI_8)
    }
}

impl From<f64> for DetectorAngle {
    fn from(theta: f64) -> Self {
        Self(theta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    /// Spin value, `+1` or `−1`.
    pub fn sign(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    /// Unit encoding: `+1 → 0`, `−1 → 1`.
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::InvalidInput(format!("outcome must be +1 or -1, got {other}"))),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
        })
    }
}

/// Joint outcome `(x_A, x_B)`.
pub type OutcomePair = (Outcome, Outcome);

/// Table index of a joint outcome.
pub fn outcome_index(x_a: Outcome, x_b: Outcome) -> usize {
    2 * x_a.bit() as usize + x_b.bit() as usize
}

/// Inverse of [`outcome_index`].
pub fn outcome_at(index: usize) -> OutcomePair {
    (Outcome::from_bit((index >> 1) as u8 & 1), Outcome::from_bit(index as u8 & 1))
}

/// `x_A·x_B` for each table slot.
const PRODUCT_SIGN: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

/// Probability table over the four joint outcomes for one condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct OutcomeDistribution {
    probs: [f64; 4],
}

impl OutcomeDistribution {
    /// Validated constructor; entries are in table order `(++, +−, −+, −−)`.
    pub fn new(probs: [f64; 4]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < -1e-15 || *p > 1.0 + DIST_TOL) {
            return Err(Error::InvalidInput(format!("probabilities out of range: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DIST_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            probs: probs.map(|p| p.max(0.0)),
        })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: [f64; 4]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidInput(format!("cannot normalize weights {weights:?}")));
        }
        Ok(Self {
            probs: weights.map(|w| w / total),
        })
    }

    pub fn uniform() -> Self {
        Self { probs: [0.25; 4] }
    }

    pub fn probs(&self) -> [f64; 4] {
        self.probs
    }

    pub fn get(&self, x_a: Outcome, x_b: Outcome) -> f64 {
        self.probs[outcome_index(x_a, x_b)]
    }

    /// `P(x_A = x)` summed over B's outcome.
    pub fn marginal_a(&self, x: Outcome) -> f64 {
        self.get(x, Outcome::Plus) + self.get(x, Outcome::Minus)
    }

    /// `P(x_B = x)` summed over A's outcome.
    pub fn marginal_b(&self, x: Outcome) -> f64 {
        self.get(Outcome::Plus, x) + self.get(Outcome::Minus, x)
    }

    /// Total variation distance, `½ Σ |p − q|`.
    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(other.probs.iter())
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }

    /// `KL(self ‖ other)` in nats. Infinite if `other` lacks support where `self` has mass.
    pub fn kl_divergence(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(other.probs.iter())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| if *q > 0.0 { p * (p / q).ln() } else { f64::INFINITY })
            .sum()
    }

    /// Inverse-CDF lookup for `u ∈ [0, 1)`.
    pub fn outcome_for_quantile(&self, u: f64) -> OutcomePair {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return outcome_at(i);
            }
        }
        // u landed in the rounding slack above the last cumulative sum
        let last = self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(3);
        outcome_at(last)
    }
}

impl TryFrom<[f64; 4]> for OutcomeDistribution {
    type Error = Error;

    fn try_from(probs: [f64; 4]) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<OutcomeDistribution> for [f64; 4] {
    fn from(d: OutcomeDistribution) -> Self {
        d.probs
    }
}

/// Correlator `Σ x_A·x_B·P(x_A, x_B)`.
pub fn expectation(dist: &OutcomeDistribution) -> f64 {
    dist.probs.iter().zip(PRODUCT_SIGN).map(|(p, s)| p * s).sum()
}

/// Pure state of two spin-1/2 particles, amplitudes over `(|++⟩, |+−⟩, |−+⟩, |−−⟩)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct TwoQubitState {
    amplitudes: [Complex64; 4],
}

/// Amplitudes as `[re, im]` pairs for the model file.
#[derive(Serialize, Deserialize)]
struct StateRepr {
    amplitudes: [[f64; 2]; 4],
}

impl TryFrom<StateRepr> for TwoQubitState {
    type Error = Error;

    fn try_from(r: StateRepr) -> Result<Self> {
        Self::new(r.amplitudes.map(|[re, im]| Complex64::new(re, im)))
    }
}

impl From<TwoQubitState> for StateRepr {
    fn from(s: TwoQubitState) -> Self {
        StateRepr {
            amplitudes: s.amplitudes.map(|c| [c.re, c.im]),
        }
    }
}

impl TwoQubitState {
    /// Fails unless `Σ |c_i|² = 1` within `1e-12`.
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite amplitude".into()));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidInput(format!("state norm² is {norm}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidInput("cannot normalize zero state".into()));
        }
        Self::new(amplitudes.map(|c| c / norm))
    }

    /// `(|+−⟩ − |−+⟩)/√2`.
    pub fn singlet() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amplitudes: [
                Complex64::new(0.0, 0.0),
                Complex64::new(h, 0.0),
                Complex64::new(-h, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        }
    }

    /// Product basis state `|x_A x_B⟩`.
    pub fn product(x_a: Outcome, x_b: Outcome) -> Self {
        let mut amplitudes = [Complex64::new(0.0, 0.0); 4];
        amplitudes[outcome_index(x_a, x_b)] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }
}

/// Eigenvectors of spin along θ in the `(|+⟩, |−⟩)` basis, `+` first.
fn spin_eigenvectors(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (0.5 * theta).sin_cos();
    [[c, s], [-s, c]]
}

/// `P(x_A, x_B | α, β)` for a normalized state.
pub fn born_probabilities(
    state: &TwoQubitState,
    alpha: DetectorAngle,
    beta: DetectorAngle,
) -> OutcomeDistribution {
    let ea = spin_eigenvectors(alpha.0);
    let eb = spin_eigenvectors(beta.0);
    let psi = &state.amplitudes;
    let mut probs = [0.0; 4];
    for (xa, va) in ea.iter().enumerate() {
        for (xb, vb) in eb.iter().enumerate() {
            let amp = va[0] * vb[0] * psi[0]
                + va[0] * vb[1] * psi[1]
                + va[1] * vb[0] * psi[2]
                + va[1] * vb[1] * psi[3];
            probs[2 * xa + xb] = amp.norm_sqr();
        }
    }
    OutcomeDistribution { probs }
}

/// Which of the four CHSH correlators carries the minus sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPlacement {
    AB,
    APrimeB,
    ABPrime,
    APrimeBPrime,
}

impl SignPlacement {
    /// Order matches [`ChshValues::per_placement`].
    pub const ALL: [SignPlacement; 4] = [
        SignPlacement::AB,
        SignPlacement::APrimeB,
        SignPlacement::ABPrime,
        SignPlacement::APrimeBPrime,
    ];

    fn slot(self) -> usize {
        match self {
            SignPlacement::AB => 0,
            SignPlacement::APrimeB => 1,
            SignPlacement::ABPrime => 2,
            SignPlacement::APrimeBPrime => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SignPlacement::AB => "E(a,b)",
            SignPlacement::APrimeB => "E(a',b)",
            SignPlacement::ABPrime => "E(a,b')",
            SignPlacement::APrimeBPrime => "E(a',b')",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: DetectorAngle,
    pub a_prime: DetectorAngle,
    pub b: DetectorAngle,
    pub b_prime: DetectorAngle,
    pub sign_placement: SignPlacement,
}

impl ChshSettings {
    /// `(a, a′, b, b′) = (0, π/2, π/4, 3π/4)`, minus on `E(a′, b′)`.
    pub fn canonical() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        Self {
            a: DetectorAngle(0.0),
            a_prime: DetectorAngle(FRAC_PI_2),
            b: DetectorAngle(FRAC_PI_4),
            b_prime: DetectorAngle(3.0 * FRAC_PI_4),
            sign_placement: SignPlacement::APrimeBPrime,
        }
    }

    pub fn with_placement(mut self, sign_placement: SignPlacement) -> Self {
        self.sign_placement = sign_placement;
        self
    }

    /// Setting pairs in correlator order `(a,b), (a′,b), (a,b′), (a′,b′)`.
    pub fn pairs(&self) -> [(DetectorAngle, DetectorAngle); 4] {
        [
            (self.a, self.b),
            (self.a_prime, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b_prime),
        ]
    }
}

/// `|Σ ±E|` with a single minus on the correlator selected by `placement`.
/// `correlators` are in [`ChshSettings::pairs`] order.
pub fn chsh_from_correlators(correlators: [f64; 4], placement: SignPlacement) -> f64 {
    let minus = placement.slot();
    correlators
        .iter()
        .enumerate()
        .map(|(i, e)| if i == minus { -e } else { *e })
        .sum::<f64>()
        .abs()
}

/// CHSH value for the placement in `settings`.
pub fn chsh<F>(mut correlator_source: F, settings: &ChshSettings) -> f64
where
    F: FnMut(DetectorAngle, DetectorAngle) -> OutcomeDistribution,
{
    let e = settings.pairs().map(|(a, b)| expectation(&correlator_source(a, b)));
    chsh_from_correlators(e, settings.sign_placement)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshValues {
    pub correlators: [f64; 4],
    /// S for each entry of [`SignPlacement::ALL`].
    pub per_placement: [f64; 4],
    pub max: f64,
    pub best_placement: SignPlacement,
}

impl ChshValues {
    pub fn from_correlators(correlators: [f64; 4]) -> Self {
        let per_placement = SignPlacement::ALL.map(|p| chsh_from_correlators(correlators, p));
        let (best, max) = per_placement
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        Self {
            correlators,
            per_placement,
            max,
            best_placement: SignPlacement::ALL[best],
        }
    }
}

/// All four single-minus placements; the settings' own placement is ignored.
pub fn chsh_max<F>(mut correlator_source: F, settings: &ChshSettings) -> ChshValues
where
    F: FnMut(DetectorAngle, DetectorAngle) -> OutcomeDistribution,
{
    ChshValues::from_correlators(settings.pairs().map(|(a, b)| expectation(&correlator_source(a, b))))
}

/// Correlator signs of a nonlocal box, `signs[α][β] ∈ {+1, −1}`.
pub type BoxSigns = [[i8; 2]; 2];

/// The box used as the default PR box: anticorrelated on `(0,0), (0,1), (1,0)`,
/// correlated on `(1,1)`.
pub const ANTICORRELATED_PR_BOX: BoxSigns = [[-1, -1], [-1, 1]];

/// Table `P(x, y) = (1 + s·x·y)/4` for a box with correlator sign `s`.
pub fn box_table(sign: i8) -> OutcomeDistribution {
    let s = f64::from(sign);
    OutcomeDistribution {
        probs: PRODUCT_SIGN.map(|p| 0.25 * (1.0 + s * p)),
    }
}

/// PR box table for unprimed (0) / primed (1) setting indices.
pub fn pr_box(alpha_index: usize, beta_index: usize) -> Result<OutcomeDistribution> {
    for (what, index) in [("alpha", alpha_index), ("beta", beta_index)] {
        if index > 1 {
            return Err(Error::IndexOutOfRange { what, index, size: 2 });
        }
    }
    Ok(box_table(ANTICORRELATED_PR_BOX[alpha_index][beta_index]))
}

/// The eight PR boxes: every sign table whose product of signs is −1.
pub fn all_pr_boxes() -> Vec<BoxSigns> {
    let mut boxes = Vec::with_capacity(8);
    for bits in 0u8..16 {
        let s = |k: u8| if bits >> k & 1 == 1 { -1i8 } else { 1 };
        let signs = [[s(0), s(1)], [s(2), s(3)]];
        if signs.iter().flatten().map(|&x| i32::from(x)).product::<i32>() == -1 {
            boxes.push(signs);
        }
    }
    boxes
}

/// Outcome tables keyed by `(A setting index, B setting index)`.
pub type SettingGrid = BTreeMap<(usize, usize), OutcomeDistribution>;

/// Worst change in each station's marginal as the remote setting varies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalingDeviation {
    /// A's marginal as B's setting varies.
    pub station_a: f64,
    /// B's marginal as A's setting varies.
    pub station_b: f64,
}

impl SignalingDeviation {
    pub fn max(&self) -> f64 {
        self.station_a.max(self.station_b)
    }
}

/// Per-station signaling deviation over a complete grid.
pub fn signaling_by_station(grid: &SettingGrid) -> Result<SignalingDeviation> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty setting grid".into()));
    }
    let a_set: BTreeSet<usize> = grid.keys().map(|k| k.0).collect();
    let b_set: BTreeSet<usize> = grid.keys().map(|k| k.1).collect();
    for a in &a_set {
        for b in &b_set {
            if !grid.contains_key(&(*a, *b)) {
                return Err(Error::InvalidInput(format!("setting grid missing pair ({a}, {b})")));
            }
        }
    }
    let spread = |values: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let mut station_a: f64 = 0.0;
    for a in &a_set {
        for x in Outcome::BOTH {
            station_a = station_a.max(spread(&mut b_set.iter().map(|b| grid[&(*a, *b)].marginal_a(x))));
        }
    }
    let mut station_b: f64 = 0.0;
    for b in &b_set {
        for x in Outcome::BOTH {
            station_b = station_b.max(spread(&mut a_set.iter().map(|a| grid[&(*a, *b)].marginal_b(x))));
        }
    }
    Ok(SignalingDeviation { station_a, station_b })
}

/// Max over stations and settings of the marginal shift; 0 means no signaling.
pub fn signaling_deviation(grid: &SettingGrid) -> Result<f64> {
    signaling_by_station(grid).map(|d| d.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn angle(x: f64) -> DetectorAngle {
        DetectorAngle(x)
    }

    #[test]
    fn singlet_equal_settings_is_perfectly_anticorrelated() {
        let d = born_probabilities(&TwoQubitState::singlet(), angle(0.0), angle(0.0));
        assert!(d.get(Outcome::Plus, Outcome::Plus).abs() < 1e-15);
        assert!(d.get(Outcome::Minus, Outcome::Minus).abs() < 1e-15);
        assert!((d.get(Outcome::Plus, Outcome::Minus) - 0.5).abs() < 1e-15);
        assert!((d.get(Outcome::Minus, Outcome::Plus) - 0.5).abs() < 1e-15);
        assert!((expectation(&d) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn singlet_at_quarter_pi() {
        let d = born_probabilities(&TwoQubitState::singlet(), angle(0.0), angle(FRAC_PI_4));
        let same = 0.25 * (1.0 - FRAC_PI_4.cos());
        assert!((d.get(Outcome::Plus, Outcome::Plus) - same).abs() < 1e-12);
        assert!((d.get(Outcome::Plus, Outcome::Plus) - 0.07322).abs() < 1e-5);
        assert!((d.get(Outcome::Plus, Outcome::Minus) - 0.42678).abs() < 1e-5);
        assert!((expectation(&d) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn product_state_is_an_eigenstate_at_zero() {
        let s = TwoQubitState::product(Outcome::Plus, Outcome::Minus);
        let d = born_probabilities(&s, angle(0.0), angle(0.0));
        assert_eq!(d.probs(), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_normalized_state_rejected() {
        let c = Complex64::new(1.0, 0.0);
        assert!(TwoQubitState::new([c, c, c, c]).is_err());
        let s = TwoQubitState::normalized([c, c, c, c]).unwrap();
        assert!((s.amplitudes()[0].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_has_zero_correlator() {
        assert_eq!(expectation(&OutcomeDistribution::uniform()), 0.0);
    }

    #[test]
    fn singlet_chsh_max_is_two_root_two() {
        let singlet = TwoQubitState::singlet();
        let v = chsh_max(|a, b| born_probabilities(&singlet, a, b), &ChshSettings::canonical());
        assert!((v.max - 2.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(v.best_placement, SignPlacement::ABPrime);
        // the literal placement on E(a',b') cancels out at these settings
        let literal = chsh(|a, b| born_probabilities(&singlet, a, b), &ChshSettings::canonical());
        assert!(literal.abs() < 1e-12);
    }

    #[test]
    fn pr_box_tables_and_chsh() {
        assert_eq!(pr_box(0, 0).unwrap().probs(), [0.0, 0.5, 0.5, 0.0]);
        assert_eq!(pr_box(1, 1).unwrap().probs(), [0.5, 0.0, 0.0, 0.5]);
        assert!(pr_box(2, 0).is_err());
        let s = ChshSettings {
            a: angle(0.0),
            a_prime: angle(1.0),
            b: angle(0.0),
            b_prime: angle(1.0),
            sign_placement: SignPlacement::AB,
        };
        let idx = |x: DetectorAngle| x.0 as usize;
        let v = chsh_max(|a, b| pr_box(idx(a), idx(b)).unwrap(), &s);
        assert_eq!(v.max, 4.0);
    }

    #[test]
    fn eight_pr_boxes_all_reach_four() {
        let boxes = all_pr_boxes();
        assert_eq!(boxes.len(), 8);
        assert!(boxes.contains(&ANTICORRELATED_PR_BOX));
        for signs in boxes {
            let e = [signs[0][0], signs[1][0], signs[0][1], signs[1][1]].map(f64::from);
            assert_eq!(ChshValues::from_correlators(e).max, 4.0);
        }
    }

    #[test]
    fn local_deterministic_strategies_bounded_by_two() {
        for bits in 0u8..16 {
            let out = |k: u8| if bits >> k & 1 == 1 { -1.0 } else { 1.0 };
            let (a0, a1, b0, b1) = (out(0), out(1), out(2), out(3));
            let v = ChshValues::from_correlators([a0 * b0, a1 * b0, a0 * b1, a1 * b1]);
            assert!(v.max <= 2.0 + 1e-12, "strategy {bits:04b} gave {}", v.max);
        }
    }

    #[test]
    fn signaling_deviation_cases() {
        let singlet = TwoQubitState::singlet();
        let mut grid = SettingGrid::new();
        for a in 0..8 {
            for b in 0..8 {
                grid.insert(
                    (a, b),
                    born_probabilities(&singlet, DetectorAngle::eighths_of_pi(a as u32), DetectorAngle::eighths_of_pi(b as u32)),
                );
            }
        }
        assert!(signaling_deviation(&grid).unwrap() <= 1e-12);

        let mut pr = SettingGrid::new();
        for a in 0..2 {
            for b in 0..2 {
                pr.insert((a, b), pr_box(a, b).unwrap());
            }
        }
        assert_eq!(signaling_deviation(&pr).unwrap(), 0.0);

        let mut hand = SettingGrid::new();
        hand.insert((0, 0), OutcomeDistribution::new([0.3, 0.3, 0.2, 0.2]).unwrap());
        hand.insert((0, 1), OutcomeDistribution::uniform());
        let d = signaling_by_station(&hand).unwrap();
        assert!((d.station_a - 0.1).abs() < 1e-12);
        assert_eq!(d.station_b, 0.0);

        hand.insert((1, 0), OutcomeDistribution::uniform());
        assert!(signaling_deviation(&hand).is_err());
        assert!(signaling_deviation(&SettingGrid::new()).is_err());
    }

    #[test]
    fn quantile_lookup_covers_degenerate_tables() {
        let d = OutcomeDistribution::new([0.0, 0.0, 1.0, 0.0]).unwrap();
        for u in [0.0, 0.5, 0.999_999_999_999] {
            assert_eq!(d.outcome_for_quantile(u), (Outcome::Minus, Outcome::Plus));
        }
    }
}
