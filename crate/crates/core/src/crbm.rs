//! Conditional RBM with one-hot conditioning groups.
//!
//! Two visible units carry the outcomes `x_A`, `x_B` (`+1 → 0`, `−1 → 1`).
//! Three one-hot groups (detector A setting, detector B setting, prepared
//! state) feed the hidden layer only, so a condition `u` acts as a shift
//! of the hidden biases:
//!
//! ```text
//! d_j(u) = d_j + Σ_l w_{j,l,k_l}
//! ```
//!
//! Conditions are never summed over. Each `u` defines its own Boltzmann
//! distribution over `(v, h)`, and only `P(v | u)` is ever produced.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::oracle::{outcome_at, DetectorAngle, OutcomeDistribution, OutcomePair, TwoQubitState};
use crate::rbm::{RbmParams, Temperature};

/// Number of visible units: one per detector outcome.
pub const N_OUTCOME_UNITS: usize = 2;

/// One-hot conditioning group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    DetectorA,
    DetectorB,
    State,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::DetectorA, Group::DetectorB, Group::State];

    pub fn index(self) -> usize {
        match self {
            Group::DetectorA => 0,
            Group::DetectorB => 1,
            Group::State => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::DetectorA => "A",
            Group::DetectorB => "B",
            Group::State => "state",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledState {
    pub label: String,
    pub state: TwoQubitState,
}

impl LabeledState {
    pub fn new(label: impl Into<String>, state: TwoQubitState) -> Self {
        Self {
            label: label.into(),
            state,
        }
    }
}

/// Setting angles for each detector and the list of prepared states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningLayout {
    pub detector_a: Vec<DetectorAngle>,
    pub detector_b: Vec<DetectorAngle>,
    pub states: Vec<LabeledState>,
}

/// Active index in each group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionVector {
    pub a: usize,
    pub b: usize,
    pub state: usize,
}

impl ConditionVector {
    pub fn new(a: usize, b: usize, state: usize) -> Self {
        Self { a, b, state }
    }

    pub fn active(&self, group: Group) -> usize {
        match group {
            Group::DetectorA => self.a,
            Group::DetectorB => self.b,
            Group::State => self.state,
        }
    }
}

impl ConditioningLayout {
    pub fn new(detector_a: Vec<DetectorAngle>, detector_b: Vec<DetectorAngle>, states: Vec<LabeledState>) -> Result<Self> {
        let layout = Self {
            detector_a,
            detector_b,
            states,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        for (group, size) in Group::ALL.iter().zip(self.group_sizes()) {
            if size == 0 {
                return Err(Error::InvalidInput(format!("group {} is empty", group.name())));
            }
        }
        if self.detector_a.iter().chain(&self.detector_b).any(|a| !a.0.is_finite()) {
            return Err(Error::InvalidInput("non-finite detector angle".into()));
        }
        Ok(())
    }

    /// `(K_A, K_B, K_S)`
    pub fn group_sizes(&self) -> [usize; 3] {
        [self.detector_a.len(), self.detector_b.len(), self.states.len()]
    }

    pub fn n_conditions(&self) -> usize {
        self.group_sizes().iter().product()
    }

    /// All conditions, state-major then A then B.
    pub fn conditions(&self) -> Vec<ConditionVector> {
        let [ka, kb, ks] = self.group_sizes();
        let mut out = Vec::with_capacity(ka * kb * ks);
        for state in 0..ks {
            for a in 0..ka {
                for b in 0..kb {
                    out.push(ConditionVector { a, b, state });
                }
            }
        }
        out
    }

    /// Position of `u` in [`Self::conditions`].
    pub fn flat_index(&self, u: &ConditionVector) -> usize {
        let [ka, kb, _] = self.group_sizes();
        (u.state * ka + u.a) * kb + u.b
    }

    pub fn check(&self, u: &ConditionVector) -> Result<()> {
        for (group, size) in Group::ALL.iter().zip(self.group_sizes()) {
            let index = u.active(*group);
            if index >= size {
                return Err(Error::IndexOutOfRange {
                    what: group.name(),
                    index,
                    size,
                });
            }
        }
        Ok(())
    }

    fn find_angle(list: &[DetectorAngle], angle: DetectorAngle) -> Option<usize> {
        list.iter().position(|x| (x.0 - angle.0).abs() < 1e-12)
    }

    pub fn find_a(&self, angle: DetectorAngle) -> Option<usize> {
        Self::find_angle(&self.detector_a, angle)
    }

    pub fn find_b(&self, angle: DetectorAngle) -> Option<usize> {
        Self::find_angle(&self.detector_b, angle)
    }

    /// Angles and state addressed by `u`.
    pub fn resolve(&self, u: &ConditionVector) -> (DetectorAngle, DetectorAngle, &TwoQubitState) {
        (self.detector_a[u.a], self.detector_b[u.b], &self.states[u.state].state)
    }
}

/// Parameters of a conditional machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbmParams {
    /// Plain machine over the two outcome units.
    pub base: RbmParams,
    /// Per group, `K × n` row-major: entry `k·n + j` is `w_{j,l,k}`.
    pub cond_weights: [Vec<f64>; 3],
}

impl CrbmParams {
    pub fn zeros(layout: &ConditioningLayout, n_hidden: usize) -> Self {
        let sizes = layout.group_sizes();
        Self {
            base: RbmParams::zeros(N_OUTCOME_UNITS, n_hidden),
            cond_weights: sizes.map(|k| vec![0.0; k * n_hidden]),
        }
    }

    /// Weights drawn from `N(0, init_scale²)`, biases zero.
    pub fn random<R: Rng + ?Sized>(
        layout: &ConditioningLayout,
        n_hidden: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, init_scale)
            .map_err(|e| Error::InvalidInput(format!("init scale {init_scale}: {e}")))?;
        let mut p = Self::zeros(layout, n_hidden);
        for w in p.base.weights.iter_mut().chain(p.cond_weights.iter_mut().flatten()) {
            *w = normal.sample(rng);
        }
        Ok(p)
    }

    pub fn n_hidden(&self) -> usize {
        self.base.n_hidden
    }

    pub fn group_size(&self, group: Group) -> usize {
        self.cond_weights[group.index()].len() / self.base.n_hidden.max(1)
    }

    pub fn cond_weight(&self, group: Group, k: usize, j: usize) -> f64 {
        self.cond_weights[group.index()][k * self.base.n_hidden + j]
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        check_len("visible units", N_OUTCOME_UNITS, self.base.n_visible)?;
        for w in &self.cond_weights {
            if w.is_empty() || w.len() % self.base.n_hidden != 0 {
                return Err(Error::InvalidInput(format!(
                    "conditioning block of {} weights does not fit {} hidden units",
                    w.len(),
                    self.base.n_hidden
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite conditioning weight".into()));
            }
        }
        Ok(())
    }

    /// Validates and checks the group sizes against `layout`.
    pub fn check_layout(&self, layout: &ConditioningLayout) -> Result<()> {
        self.validate()?;
        for (group, size) in Group::ALL.iter().zip(layout.group_sizes()) {
            check_len(group.name(), size, self.group_size(*group))?;
        }
        Ok(())
    }

    fn check_condition(&self, u: &ConditionVector) -> Result<()> {
        for group in Group::ALL {
            let (index, size) = (u.active(group), self.group_size(group));
            if index >= size {
                return Err(Error::IndexOutOfRange {
                    what: group.name(),
                    index,
                    size,
                });
            }
        }
        Ok(())
    }

    /// Hidden biases for a condition that has already been range-checked.
    pub(crate) fn hidden_biases_for(&self, u: &ConditionVector) -> Vec<f64> {
        let n = self.base.n_hidden;
        let mut d = self.base.hidden_biases.clone();
        for group in Group::ALL {
            let k = u.active(group);
            let row = &self.cond_weights[group.index()][k * n..(k + 1) * n];
            for (dj, w) in d.iter_mut().zip(row) {
                *dj += w;
            }
        }
        d
    }

    /// Plain machine with the hidden biases of condition `u`.
    pub fn reduced(&self, u: &ConditionVector) -> Result<RbmParams> {
        self.check_condition(u)?;
        let mut base = self.base.clone();
        base.hidden_biases = self.hidden_biases_for(u);
        Ok(base)
    }

    /// Every parameter in a fixed order:
    /// base weights, visible biases, hidden biases, then the three groups.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.base.values().chain(self.cond_weights.iter().flatten().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.base
            .weights
            .iter_mut()
            .chain(self.base.visible_biases.iter_mut())
            .chain(self.base.hidden_biases.iter_mut())
            .chain(self.cond_weights.iter_mut().flatten())
    }

    pub fn len(&self) -> usize {
        self.values().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same-shaped record with every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.values_mut().for_each(|x| *x = 0.0);
        z
    }

    /// `self += alpha · other`; shapes must agree.
    pub fn add_scaled(&mut self, alpha: f64, other: &CrbmParams) {
        for (x, y) in self.values_mut().zip(other.values()) {
            *x += alpha * y;
        }
    }

    /// Every parameter multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.values_mut().for_each(|x| *x *= factor);
        s
    }

    pub fn dot(&self, other: &CrbmParams) -> f64 {
        self.values().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `d_j + Σ_l w_{j,l,k_l}` for condition `u`.
pub fn effective_hidden_biases(params: &CrbmParams, u: &ConditionVector) -> Result<Vec<f64>> {
    params.check_condition(u)?;
    Ok(params.hidden_biases_for(u))
}

/// Energy of `(v, h)` under condition `u`.
pub fn conditional_energy(params: &CrbmParams, v: &[u8], u: &ConditionVector, h: &[u8]) -> Result<f64> {
    params.check_condition(u)?;
    params.base.check_visible(v)?;
    params.base.check_hidden(h)?;
    Ok(params.base.energy_with(&params.hidden_biases_for(u), v, h))
}

/// Exact `P(x_A, x_B | u)` at temperature `temp`, normalized at fixed `u`.
pub fn conditional_table(params: &CrbmParams, u: &ConditionVector, temp: Temperature) -> Result<OutcomeDistribution> {
    params.check_condition(u)?;
    Ok(table_unchecked(params, u, temp.value()))
}

pub(crate) fn table_unchecked(params: &CrbmParams, u: &ConditionVector, t: f64) -> OutcomeDistribution {
    let d = params.hidden_biases_for(u);
    let p = params.base.visible_distribution_with(&d, t);
    OutcomeDistribution::from_weights([p[0], p[1], p[2], p[3]]).expect("softmax output is a distribution")
}

/// One outcome pair drawn from [`conditional_table`] by inverse CDF.
pub fn sample_outcome<R: Rng + ?Sized>(
    params: &CrbmParams,
    u: &ConditionVector,
    temp: Temperature,
    rng: &mut R,
) -> Result<OutcomePair> {
    let table = conditional_table(params, u, temp)?;
    Ok(table.outcome_for_quantile(rng.random::<f64>()))
}

/// Outcome pair for a visible configuration.
pub fn outcome_of(v: &[u8]) -> OutcomePair {
    outcome_at(2 * usize::from(v[0]) + usize::from(v[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Outcome;
    use crate::rng;

    fn layout(ka: usize, kb: usize, ks: usize) -> ConditioningLayout {
        ConditioningLayout::new(
            (0..ka as u32).map(DetectorAngle::eighths_of_pi).collect(),
            (0..kb as u32).map(DetectorAngle::eighths_of_pi).collect(),
            (0..ks).map(|i| LabeledState::new(format!("s{i}"), TwoQubitState::singlet())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_cond_weights_leave_biases() {
        let l = layout(2, 2, 1);
        let mut p = CrbmParams::zeros(&l, 3);
        p.base.hidden_biases = vec![0.1, -0.2, 0.3];
        let d = effective_hidden_biases(&p, &ConditionVector::new(1, 0, 0)).unwrap();
        assert_eq!(d, p.base.hidden_biases);
    }

    #[test]
    fn biases_sum_three_addends() {
        let l = layout(2, 2, 1);
        let mut p = CrbmParams::zeros(&l, 1);
        p.cond_weights[0][1] = 0.3;
        p.cond_weights[1][0] = -0.1;
        let d = effective_hidden_biases(&p, &ConditionVector::new(1, 0, 0)).unwrap();
        assert!((d[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_hidden_unit_equals_adjustable_bias() {
        // d₁ = 0: the machine is a plain RBM with bias w_α1 + w_β1
        let l = layout(2, 2, 1);
        let mut p = CrbmParams::zeros(&l, 1);
        p.base.weights = vec![0.8, -0.6];
        p.cond_weights[0] = vec![0.4, -1.1];
        p.cond_weights[1] = vec![0.9, 0.25];
        for u in l.conditions() {
            let mut plain = p.base.clone();
            plain.hidden_biases = vec![p.cond_weight(Group::DetectorA, u.a, 0) + p.cond_weight(Group::DetectorB, u.b, 0)];
            let expect = crate::rbm::visible_distribution(&plain, Temperature::UNIT).unwrap();
            let got = conditional_table(&p, &u, Temperature::UNIT).unwrap().probs();
            for (e, g) in expect.iter().zip(got) {
                assert!((e - g).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn out_of_range_condition_is_rejected() {
        let l = layout(2, 2, 1);
        let p = CrbmParams::zeros(&l, 2);
        let bad = ConditionVector::new(0, 2, 0);
        assert!(matches!(effective_hidden_biases(&p, &bad), Err(Error::IndexOutOfRange { .. })));
        assert!(conditional_table(&p, &bad, Temperature::UNIT).is_err());
        assert!(l.check(&bad).is_err());
    }

    #[test]
    fn zero_params_give_uniform_table_and_zero_energy() {
        let l = layout(2, 2, 1);
        let p = CrbmParams::zeros(&l, 3);
        let u = ConditionVector::new(0, 1, 0);
        assert_eq!(conditional_table(&p, &u, Temperature::UNIT).unwrap().probs(), [0.25; 4]);
        assert_eq!(conditional_energy(&p, &[1, 1], &u, &[1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn sampling_frequencies_and_degenerate_tables() {
        let l = layout(1, 1, 1);
        let p = CrbmParams::zeros(&l, 2);
        let u = ConditionVector::new(0, 0, 0);
        let mut r = rng::seeded(3);
        let n = 400_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (a, b) = sample_outcome(&p, &u, Temperature::UNIT, &mut r).unwrap();
            counts[crate::oracle::outcome_index(a, b)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.005);
        }

        let mut q = CrbmParams::zeros(&l, 1);
        q.base.visible_biases = vec![40.0, -40.0];
        for _ in 0..1000 {
            assert_eq!(
                sample_outcome(&q, &u, Temperature::UNIT, &mut r).unwrap(),
                (Outcome::Minus, Outcome::Plus)
            );
        }
    }

    #[test]
    fn layout_flat_index_matches_enumeration() {
        let l = layout(3, 2, 2);
        for (i, u) in l.conditions().iter().enumerate() {
            assert_eq!(l.flat_index(u), i);
        }
        assert_eq!(l.n_conditions(), 12);
    }

    #[test]
    fn random_init_has_zero_biases() {
        let l = layout(2, 2, 1);
        let p = CrbmParams::random(&l, 3, 0.1, &mut rng::seeded(1)).unwrap();
        assert!(p.base.visible_biases.iter().chain(&p.base.hidden_biases).all(|b| *b == 0.0));
        assert!(p.base.weights.iter().any(|w| *w != 0.0));
        p.check_layout(&l).unwrap();
    }

    #[test]
    fn empty_group_rejected() {
        assert!(ConditioningLayout::new(vec![], vec![DetectorAngle(0.0)], vec![]).is_err());
    }
}
