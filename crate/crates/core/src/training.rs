//! Fitting a conditional machine to measurement statistics.
//!
//! The objective is the condition-weighted KL divergence
//! `L(θ) = Σ_u q(u) · KL(p*(·|u) ‖ p_θ(·|u))`. For a visible vector the
//! free-energy derivatives are
//!
//! ```text
//! ∂F/∂c_i    = −v_i
//! ∂F/∂w_ij   = −v_i σ_j
//! ∂F/∂d_j    = −σ_j
//! ∂F/∂w_jlk  = −σ_j [k active in group l]
//! ```
//!
//! with `σ_j = σ((d_j(u) + Σ_i w_ij v_i)/T)`, so
//! `∇L = (1/T) Σ_u q(u) (E_{p*}[∂F] − E_{p_θ}[∂F])`. The exact mode sums
//! both phases over the four outcomes. PCD and CD-k take the data phase
//! from a batch and the model phase from Gibbs chains.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crbm::{table_unchecked, ConditionVector, ConditioningLayout, CrbmParams, Group};
use crate::error::{Error, Result};
use crate::oracle::{born_probabilities, outcome_index, OutcomeDistribution, OutcomePair};
use crate::rbm::{block_gibbs_with, sigmoid, softplus_sigmoid, GibbsState, Temperature};
use crate::rng::{self, streams, SimRng};

/// Parameters beyond this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    #[default]
    ExactKl,
    CdK,
    Pcd,
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::ExactKl => "exact_kl",
            TrainingMode::CdK => "cd_k",
            TrainingMode::Pcd => "pcd",
        }
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exact_kl" | "exact" => Ok(TrainingMode::ExactKl),
            "cd_k" | "cd" => Ok(TrainingMode::CdK),
            "pcd" => Ok(TrainingMode::Pcd),
            _ => Err(Error::InvalidInput(format!("unknown training mode '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub mode: TrainingMode,
    pub n_hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gibbs_k: usize,
    /// Persistent chains per condition (PCD only).
    pub n_chains: usize,
    pub seed: u64,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
    /// Stop once the mean TV to the targets reaches this.
    pub target_tv: f64,
    /// Per-condition averaging weights in layout order; `None` = uniform
    /// (or the empirical condition frequencies when training from a dataset).
    pub condition_weights: Option<Vec<f64>>,
    /// Sampled modes only; `None` means one pass over the dataset, or one
    /// batch per condition when training directly from target tables.
    pub steps_per_epoch: Option<usize>,
    /// Independent random initializations to try before giving up.
    pub restarts: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            mode: TrainingMode::ExactKl,
            n_hidden: 3,
            learning_rate: 0.5,
            epochs: 20_000,
            batch_size: 64,
            gibbs_k: 1,
            n_chains: 1,
            seed: 7,
            init_scale: 0.1,
            target_tv: 0.001,
            condition_weights: None,
            steps_per_epoch: None,
            restarts: 8,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, layout: &ConditioningLayout) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.n_hidden == 0 {
            return bad("n_hidden must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and >= 0", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.gibbs_k == 0 || self.n_chains == 0 || self.restarts == 0 {
            return bad("epochs, batch_size, gibbs_k, n_chains and restarts must all be >= 1".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init_scale {} must be >= 0", self.init_scale));
        }
        if self.target_tv.is_nan() || self.target_tv < 0.0 {
            return bad(format!("target_tv {} must be >= 0", self.target_tv));
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be >= 1".into());
        }
        if let Some(w) = &self.condition_weights {
            check_condition_weights(layout, w)?;
        }
        Ok(())
    }
}

fn check_condition_weights(layout: &ConditioningLayout, weights: &[f64]) -> Result<()> {
    crate::error::check_len("condition weights", layout.n_conditions(), weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidInput("condition weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("condition weights sum to {total}, not 1")));
    }
    Ok(())
}

pub fn uniform_condition_weights(layout: &ConditioningLayout) -> Vec<f64> {
    let n = layout.n_conditions();
    vec![1.0 / n as f64; n]
}

/// One measurement record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Trial {
    pub condition: ConditionVector,
    pub outcome: OutcomePair,
}

impl Trial {
    fn visible(&self) -> [u8; 2] {
        [self.outcome.0.bit(), self.outcome.1.bit()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trials: Vec<Trial>,
    pub seed: u64,
    /// Free-text description of where the outcomes came from.
    pub oracle: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn check_layout(&self, layout: &ConditioningLayout) -> Result<()> {
        self.trials.iter().try_for_each(|t| layout.check(&t.condition))
    }

    /// Outcome counts per condition, in layout order.
    pub fn counts(&self, layout: &ConditioningLayout) -> Result<Vec<[u64; 4]>> {
        let mut counts = vec![[0u64; 4]; layout.n_conditions()];
        for t in &self.trials {
            layout.check(&t.condition)?;
            counts[layout.flat_index(&t.condition)][outcome_index(t.outcome.0, t.outcome.1)] += 1;
        }
        Ok(counts)
    }
}

/// Draws conditions (uniformly, or per `condition_weights`) and Born-rule outcomes.
pub fn simulate_dataset(
    layout: &ConditioningLayout,
    n_trials: usize,
    condition_weights: Option<&[f64]>,
    seed: u64,
) -> Result<Dataset> {
    layout.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be >= 1".into()));
    }
    let conditions = layout.conditions();
    let cdf = match condition_weights {
        Some(w) => {
            check_condition_weights(layout, w)?;
            Some(cumulative(w))
        }
        None => None,
    };
    let tables: Vec<OutcomeDistribution> = conditions
        .iter()
        .map(|u| {
            let (a, b, s) = layout.resolve(u);
            born_probabilities(s, a, b)
        })
        .collect();
    let mut rng = rng::stream(seed, streams::DATASET);
    let trials = (0..n_trials)
        .map(|_| {
            let ci = draw_condition(&mut rng, conditions.len(), cdf.as_deref());
            let outcome = tables[ci].outcome_for_quantile(rng.random::<f64>());
            Trial {
                condition: conditions[ci],
                outcome,
            }
        })
        .collect();
    Ok(Dataset {
        trials,
        seed,
        oracle: "born-rule".into(),
    })
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

fn draw_condition<R: Rng + ?Sized>(rng: &mut R, n: usize, cdf: Option<&[f64]>) -> usize {
    match cdf {
        None => rng.random_range(0..n),
        Some(cdf) => {
            let u = rng.random::<f64>() * cdf[n - 1];
            cdf.iter().position(|c| u < *c).unwrap_or(n - 1)
        }
    }
}

/// Target outcome tables per condition, in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTables {
    pub tables: Vec<Option<OutcomeDistribution>>,
}

impl TargetTables {
    /// Born-rule tables for every condition of `layout`.
    pub fn from_oracle(layout: &ConditioningLayout) -> Self {
        let tables = layout
            .conditions()
            .iter()
            .map(|u| {
                let (a, b, s) = layout.resolve(u);
                Some(born_probabilities(s, a, b))
            })
            .collect();
        Self { tables }
    }

    /// Empirical frequencies; conditions without trials have no target.
    pub fn from_dataset(dataset: &Dataset, layout: &ConditioningLayout) -> Result<Self> {
        let tables = dataset
            .counts(layout)?
            .into_iter()
            .map(|c| {
                let w = c.map(|x| x as f64);
                OutcomeDistribution::from_weights(w).ok()
            })
            .collect();
        Ok(Self { tables })
    }

    pub fn get(&self, index: usize) -> Option<&OutcomeDistribution> {
        self.tables.get(index).and_then(Option::as_ref)
    }
}

/// Where training statistics come from.
#[derive(Clone, Copy, Debug)]
pub enum TrainingSource<'a> {
    Dataset(&'a Dataset),
    Targets(&'a TargetTables),
}

/// Adds `scale · ∂F(v, u)/∂θ` (at `T = 1` units, times `1/T`) into `grad`.
fn accumulate_free_energy_grad(
    grad: &mut CrbmParams,
    params: &CrbmParams,
    d: &[f64],
    u: &ConditionVector,
    v: &[u8],
    t: f64,
    scale: f64,
) {
    let n = params.n_hidden();
    let s = scale / t;
    for (i, vi) in v.iter().enumerate() {
        if *vi == 1 {
            grad.base.visible_biases[i] -= s;
        }
    }
    for j in 0..n {
        let sig = sigmoid(params.base.hidden_input(d, v, j) / t);
        let g = s * sig;
        grad.base.hidden_biases[j] -= g;
        for (i, vi) in v.iter().enumerate() {
            if *vi == 1 {
                grad.base.weights[i * n + j] -= g;
            }
        }
        for group in Group::ALL {
            let k = u.active(group);
            grad.cond_weights[group.index()][k * n + j] -= g;
        }
    }
}

fn check_targets(layout: &ConditioningLayout, targets: &TargetTables, weights: &[f64]) -> Result<()> {
    crate::error::check_len("target tables", layout.n_conditions(), targets.tables.len())?;
    crate::error::check_len("condition weights", layout.n_conditions(), weights.len())?;
    for (i, (t, w)) in targets.tables.iter().zip(weights).enumerate() {
        if *w > 0.0 && t.is_none() {
            return Err(Error::InvalidInput(format!(
                "condition {:?} has weight {w} but no target table",
                layout.conditions()[i]
            )));
        }
    }
    Ok(())
}

/// `Σ_u q(u) · KL(p*(·|u) ‖ p_θ(·|u))` at `T = 1`.
pub fn kl_objective(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    targets: &TargetTables,
    condition_weights: &[f64],
) -> Result<f64> {
    params.check_layout(layout)?;
    check_targets(layout, targets, condition_weights)?;
    Ok(layout
        .conditions()
        .iter()
        .enumerate()
        .filter(|(i, _)| condition_weights[*i] > 0.0)
        .map(|(i, u)| {
            let model = table_unchecked(params, u, 1.0);
            condition_weights[i] * targets.tables[i].as_ref().unwrap().kl_divergence(&model)
        })
        .sum())
}

/// Visible configurations of the two outcome units, in table order.
const OUTCOME_VECTORS: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 0], [1, 1]];

/// Result of one enumeration sweep over all conditions at `T = 1`.
struct ExactPass {
    grad: Option<CrbmParams>,
    mean_tv: f64,
    mean_kl: f64,
}

/// Enumerates every condition once, producing the weighted KL gradient
/// (when requested) and the unweighted mean TV / KL over conditions that
/// have a target.
fn exact_pass(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    targets: &TargetTables,
    condition_weights: &[f64],
    want_grad: bool,
) -> ExactPass {
    let n = params.n_hidden();
    let base = &params.base;
    let mut grad = want_grad.then(|| params.zeros_like());
    let mut activations = vec![0.0; 4 * n];
    let (mut tv, mut kl, mut counted) = (0.0, 0.0, 0usize);
    for (ci, u) in layout.conditions().iter().enumerate() {
        let Some(target) = targets.get(ci) else { continue };
        let q = condition_weights[ci];
        let d = params.hidden_biases_for(u);
        let mut logits = [0.0; 4];
        for (k, v) in OUTCOME_VECTORS.iter().enumerate() {
            let mut logit = 0.0;
            for (i, vi) in v.iter().enumerate() {
                if *vi == 1 {
                    logit += base.visible_biases[i];
                }
            }
            for j in 0..n {
                let mut a = d[j];
                for (i, vi) in v.iter().enumerate() {
                    if *vi == 1 {
                        a += base.weights[i * n + j];
                    }
                }
                let (sp, s) = softplus_sigmoid(a);
                activations[k * n + j] = s;
                logit += sp;
            }
            logits[k] = logit;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = logits.map(|l| (l - max).exp());
        let z: f64 = w.iter().sum();
        let model = w.map(|x| x / z);
        let target = target.probs();

        counted += 1;
        for (pt, pm) in target.iter().zip(&model) {
            tv += 0.5 * (pt - pm).abs();
            if *pt > 0.0 {
                kl += pt * (pt / pm).ln();
            }
        }

        let Some(g) = grad.as_mut() else { continue };
        if q == 0.0 {
            continue;
        }
        for (k, v) in OUTCOME_VECTORS.iter().enumerate() {
            // ∂L/∂θ += q (p* − p_θ)(v) ∂F(v)/∂θ
            let diff = q * (target[k] - model[k]);
            if diff == 0.0 {
                continue;
            }
            for (i, vi) in v.iter().enumerate() {
                if *vi == 1 {
                    g.base.visible_biases[i] -= diff;
                }
            }
            for j in 0..n {
                let s = diff * activations[k * n + j];
                g.base.hidden_biases[j] -= s;
                for (i, vi) in v.iter().enumerate() {
                    if *vi == 1 {
                        g.base.weights[i * n + j] -= s;
                    }
                }
                for group in Group::ALL {
                    g.cond_weights[group.index()][u.active(group) * n + j] -= s;
                }
            }
        }
    }
    let c = counted.max(1) as f64;
    ExactPass {
        grad,
        mean_tv: tv / c,
        mean_kl: kl / c,
    }
}

/// Exact `∇_θ Σ_u q(u) KL(p* ‖ p_θ)` at `T = 1`, by enumeration.
pub fn exact_kl_gradient(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    targets: &TargetTables,
    condition_weights: &[f64],
) -> Result<CrbmParams> {
    params.check_layout(layout)?;
    check_targets(layout, targets, condition_weights)?;
    let pass = exact_pass(params, layout, targets, condition_weights, true);
    Ok(pass.grad.expect("gradient requested"))
}

/// Persistent Gibbs chains, `n_chains` per condition.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistentChains {
    chains: Vec<Vec<GibbsState>>,
    n_hidden: usize,
}

impl PersistentChains {
    /// Chains start from random visible vectors and empty hidden layers.
    pub fn new<R: Rng + ?Sized>(layout: &ConditioningLayout, n_hidden: usize, n_chains: usize, rng: &mut R) -> Self {
        let chains = (0..layout.n_conditions())
            .map(|_| {
                (0..n_chains)
                    .map(|_| GibbsState {
                        visible: vec![u8::from(rng.random::<bool>()), u8::from(rng.random::<bool>())],
                        hidden: vec![0; n_hidden],
                    })
                    .collect()
            })
            .collect();
        Self { chains, n_hidden }
    }

    pub fn for_condition(&self, index: usize) -> &[GibbsState] {
        &self.chains[index]
    }

    fn check(&self, layout: &ConditioningLayout, params: &CrbmParams) -> Result<()> {
        if self.chains.len() != layout.n_conditions() || self.n_hidden != params.n_hidden() {
            return Err(Error::InvalidInput(format!(
                "chains cover {} conditions with {} hidden units; model has {} conditions and {} hidden units",
                self.chains.len(),
                self.n_hidden,
                layout.n_conditions(),
                params.n_hidden()
            )));
        }
        Ok(())
    }
}

fn data_phase(grad: &mut CrbmParams, params: &CrbmParams, batch: &[Trial], t: f64) {
    let scale = 1.0 / batch.len() as f64;
    for trial in batch {
        let d = params.hidden_biases_for(&trial.condition);
        accumulate_free_energy_grad(grad, params, &d, &trial.condition, &trial.visible(), t, scale);
    }
}

/// PCD estimate of the KL gradient (same sign as [`exact_kl_gradient`]).
///
/// Every condition present in the batch advances its chains by `gibbs_k`
/// sweeps once; the chains' visible states then serve as the model phase
/// for each trial of that condition.
pub fn pcd_gradient<R: Rng + ?Sized>(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    batch: &[Trial],
    chains: &mut PersistentChains,
    gibbs_k: usize,
    temp: Temperature,
    rng: &mut R,
) -> Result<CrbmParams> {
    params.check_layout(layout)?;
    chains.check(layout, params)?;
    if batch.is_empty() {
        return Ok(params.zeros_like());
    }
    let t = temp.value();
    let mut counts = vec![0usize; layout.n_conditions()];
    for trial in batch {
        layout.check(&trial.condition)?;
        counts[layout.flat_index(&trial.condition)] += 1;
    }
    let mut grad = params.zeros_like();
    data_phase(&mut grad, params, batch, t);
    let conditions = layout.conditions();
    for (ci, count) in counts.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let u = &conditions[ci];
        let d = params.hidden_biases_for(u);
        let states = &mut chains.chains[ci];
        let scale = -(*count as f64) / (batch.len() * states.len()) as f64;
        for state in states.iter_mut() {
            for _ in 0..gibbs_k {
                block_gibbs_with(&params.base, &d, state, t, rng);
            }
            accumulate_free_energy_grad(&mut grad, params, &d, u, &state.visible, t, scale);
        }
    }
    Ok(grad)
}

/// CD-k estimate: each trial starts its own chain at the observed outcome.
pub fn cd_gradient<R: Rng + ?Sized>(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    batch: &[Trial],
    gibbs_k: usize,
    temp: Temperature,
    rng: &mut R,
) -> Result<CrbmParams> {
    params.check_layout(layout)?;
    if batch.is_empty() {
        return Ok(params.zeros_like());
    }
    let t = temp.value();
    let mut grad = params.zeros_like();
    data_phase(&mut grad, params, batch, t);
    let scale = -1.0 / batch.len() as f64;
    for trial in batch {
        layout.check(&trial.condition)?;
        let d = params.hidden_biases_for(&trial.condition);
        let mut state = GibbsState {
            visible: trial.visible().to_vec(),
            hidden: vec![0; params.n_hidden()],
        };
        for _ in 0..gibbs_k {
            block_gibbs_with(&params.base, &d, &mut state, t, rng);
        }
        accumulate_free_energy_grad(&mut grad, params, &d, &trial.condition, &state.visible, t, scale);
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_tv: f64,
    pub mean_kl: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    /// Whether `target_tv` was reached.
    pub converged: bool,
    /// Which restart produced these records.
    pub attempt: usize,
}

impl TrainingHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn final_mean_tv(&self) -> f64 {
        self.last().map_or(f64::INFINITY, |r| r.mean_tv)
    }

    /// One header line, then `epoch,mean_tv,mean_kl,grad_norm` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_tv,mean_kl,grad_norm\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", r.epoch, r.mean_tv, r.mean_kl, r.grad_norm));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: CrbmParams,
    pub history: TrainingHistory,
}

/// Mean TV and mean KL to the targets over conditions with a target, at `T = 1`.
pub fn fit_metrics(params: &CrbmParams, layout: &ConditioningLayout, targets: &TargetTables) -> (f64, f64) {
    let weights = vec![0.0; layout.n_conditions()];
    let pass = exact_pass(params, layout, targets, &weights, false);
    (pass.mean_tv, pass.mean_kl)
}

/// Batches for the sampled modes.
enum BatchSource<'a> {
    Trials { trials: &'a [Trial], order: Vec<usize>, cursor: usize },
    Tables { conditions: Vec<ConditionVector>, cdf: Vec<f64>, tables: &'a TargetTables },
}

impl BatchSource<'_> {
    fn next_batch(&mut self, size: usize, rng: &mut SimRng) -> Vec<Trial> {
        match self {
            BatchSource::Trials { trials, order, cursor } => {
                let mut batch = Vec::with_capacity(size);
                while batch.len() < size {
                    if *cursor == order.len() {
                        order.shuffle(rng);
                        *cursor = 0;
                    }
                    batch.push(trials[order[*cursor]]);
                    *cursor += 1;
                }
                batch
            }
            BatchSource::Tables { conditions, cdf, tables } => (0..size)
                .map(|_| {
                    let ci = draw_condition(rng, conditions.len(), Some(cdf));
                    let table = tables.get(ci).expect("weighted condition has a target");
                    Trial {
                        condition: conditions[ci],
                        outcome: table.outcome_for_quantile(rng.random::<f64>()),
                    }
                })
                .collect(),
        }
    }
}

/// SGD on the KL objective. Deterministic given `config.seed`.
///
/// Runs up to `config.restarts` independent attempts from fresh random
/// initializations and returns the first that reaches `target_tv`, or the
/// attempt with the lowest final mean TV if none does.
pub fn train(layout: &ConditioningLayout, config: &TrainingConfig, source: TrainingSource<'_>) -> Result<TrainedModel> {
    layout.validate()?;
    config.validate(layout)?;
    let (targets, default_weights) = match source {
        TrainingSource::Dataset(ds) => {
            if ds.is_empty() {
                return Err(Error::InvalidInput("empty dataset".into()));
            }
            let counts = ds.counts(layout)?;
            let total = ds.len() as f64;
            let weights = counts.iter().map(|c| c.iter().sum::<u64>() as f64 / total).collect();
            (TargetTables::from_dataset(ds, layout)?, weights)
        }
        TrainingSource::Targets(t) => (t.clone(), uniform_condition_weights(layout)),
    };
    let weights = config.condition_weights.clone().unwrap_or(default_weights);
    check_targets(layout, &targets, &weights)?;

    let mut best: Option<TrainedModel> = None;
    for attempt in 0..config.restarts {
        let run = train_attempt(layout, config, source, &targets, &weights, attempt)?;
        let better = match &best {
            None => true,
            Some(b) => run.history.final_mean_tv() < b.history.final_mean_tv(),
        };
        let done = run.history.converged;
        if better {
            best = Some(run);
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

fn attempt_stream(attempt: usize, base: u64) -> u64 {
    base + ((attempt as u64) << 8)
}

fn diverged(epoch: usize, params: &CrbmParams) -> Option<Error> {
    let max_abs = params.max_abs();
    (max_abs.is_nan() || max_abs > DIVERGENCE_LIMIT).then(|| Error::Diverged {
        epoch,
        reason: format!("parameter magnitude {max_abs:e} exceeds {DIVERGENCE_LIMIT:e}"),
    })
}

fn train_attempt(
    layout: &ConditioningLayout,
    config: &TrainingConfig,
    source: TrainingSource<'_>,
    targets: &TargetTables,
    weights: &[f64],
    attempt: usize,
) -> Result<TrainedModel> {
    let seed = config.seed;
    let mut params = CrbmParams::random(
        layout,
        config.n_hidden,
        config.init_scale,
        &mut rng::stream(seed, attempt_stream(attempt, streams::INIT)),
    )?;
    let mut history = TrainingHistory {
        attempt,
        ..Default::default()
    };
    let record = |history: &mut TrainingHistory, epoch: usize, mean_tv: f64, mean_kl: f64, grad_norm: f64| {
        if !mean_kl.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "objective is not finite".into(),
            });
        }
        history.records.push(EpochRecord {
            epoch,
            mean_tv,
            mean_kl,
            grad_norm,
        });
        history.converged = mean_tv <= config.target_tv;
        Ok(history.converged)
    };

    if config.mode == TrainingMode::ExactKl {
        // each pass yields the metrics of the current parameters and the
        // gradient for the next update
        let mut pass = exact_pass(&params, layout, targets, weights, true);
        for epoch in 0..config.epochs {
            let grad = pass.grad.take().expect("gradient requested");
            params.add_scaled(-config.learning_rate, &grad);
            if let Some(e) = diverged(epoch, &params) {
                return Err(e);
            }
            pass = exact_pass(&params, layout, targets, weights, true);
            if record(&mut history, epoch, pass.mean_tv, pass.mean_kl, grad.norm())? {
                break;
            }
        }
        return Ok(TrainedModel { params, history });
    }

    let mut batch_rng = rng::stream(seed, attempt_stream(attempt, streams::BATCHES));
    let mut chain_rng = rng::stream(seed, attempt_stream(attempt, streams::CHAINS));
    let mut chains = PersistentChains::new(layout, config.n_hidden, config.n_chains, &mut chain_rng);
    let (mut batches, natural_steps) = match source {
        TrainingSource::Dataset(ds) => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut batch_rng);
            (
                BatchSource::Trials {
                    trials: &ds.trials,
                    order,
                    cursor: 0,
                },
                ds.len().div_ceil(config.batch_size),
            )
        }
        TrainingSource::Targets(_) => (
            BatchSource::Tables {
                conditions: layout.conditions(),
                cdf: cumulative(weights),
                tables: targets,
            },
            layout.n_conditions(),
        ),
    };
    let steps = config.steps_per_epoch.unwrap_or(natural_steps);
    for epoch in 0..config.epochs {
        let mut norm_sum = 0.0;
        for _ in 0..steps {
            let batch = batches.next_batch(config.batch_size, &mut batch_rng);
            let grad = match config.mode {
                TrainingMode::Pcd => {
                    pcd_gradient(&params, layout, &batch, &mut chains, config.gibbs_k, Temperature::UNIT, &mut chain_rng)?
                }
                _ => cd_gradient(&params, layout, &batch, config.gibbs_k, Temperature::UNIT, &mut chain_rng)?,
            };
            params.add_scaled(-config.learning_rate, &grad);
            norm_sum += grad.norm();
        }
        if let Some(e) = diverged(epoch, &params) {
            return Err(e);
        }
        let (mean_tv, mean_kl) = fit_metrics(&params, layout, targets);
        if record(&mut history, epoch, mean_tv, mean_kl, norm_sum / steps as f64)? {
            break;
        }
    }
    Ok(TrainedModel { params, history })
}
