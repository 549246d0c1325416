//! Fidelity and physics diagnostics for trained models.
//!
//! All quantities are computed from exact conditional tables at a chosen
//! temperature; nothing here samples.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crbm::{conditional_table, table_unchecked, ConditionVector, ConditioningLayout, CrbmParams, Group};
use crate::error::{Error, Result};
use crate::oracle::{
    all_pr_boxes, born_probabilities, box_table, expectation, signaling_by_station, BoxSigns, ChshSettings, ChshValues,
    DetectorAngle, OutcomeDistribution, SettingGrid, SignalingDeviation,
};
use crate::rbm::Temperature;

/// One conditioning vector's comparison against the Born-rule target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionVector,
    pub alpha: DetectorAngle,
    pub beta: DetectorAngle,
    pub state: String,
    pub target: OutcomeDistribution,
    pub model: OutcomeDistribution,
    pub tv: f64,
    /// `KL(target ‖ model)`.
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub state: String,
    pub settings: ChshSettings,
    pub values: ChshValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationSignaling {
    pub state: String,
    pub deviation: SignalingDeviation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub description: String,
    pub temperature: f64,
    pub conditions: Vec<ConditionReport>,
    pub mean_tv: f64,
    pub max_tv: f64,
    pub mean_kl: f64,
    /// One entry per state, present when the layout holds the canonical settings.
    pub chsh: Vec<ChshReport>,
    /// One entry per state, present when both detectors have ≥ 2 settings.
    pub signaling: Vec<StationSignaling>,
}

impl EvaluationReport {
    /// Per-condition rows with a header naming the columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "state_idx,a_idx,b_idx,state,alpha_rad,beta_rad,\
             target_pp,target_pm,target_mp,target_mm,model_pp,model_pm,model_mp,model_mm,tv,kl\n",
        );
        for c in &self.conditions {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                c.condition.state, c.condition.a, c.condition.b, c.state, c.alpha.0, c.beta.0
            );
            for p in c.target.probs().iter().chain(c.model.probs().iter()) {
                let _ = write!(out, ",{p}");
            }
            let _ = writeln!(out, ",{},{}", c.tv, c.kl);
        }
        out
    }
}

/// Distance from four CHSH tables to the closest PR box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrBoxDistance {
    pub signs: BoxSigns,
    /// TV per setting pair, in [`ChshSettings::pairs`] order.
    pub per_condition: [f64; 4],
    pub max: f64,
}

/// Nearest PR box under the max-over-conditions TV, searching all eight
/// relabelings of the box. `tables` follow [`ChshSettings::pairs`] order.
pub fn nearest_pr_box(tables: &[OutcomeDistribution; 4]) -> PrBoxDistance {
    let mut best: Option<PrBoxDistance> = None;
    for signs in all_pr_boxes() {
        // pair i is (a or a′, b or b′) = (i & 1, i >> 1)
        let per_condition = std::array::from_fn(|i| tables[i].total_variation(&box_table(signs[i & 1][i >> 1])));
        let max = per_condition.iter().copied().fold(0.0, f64::max);
        if best.is_none_or(|b| max < b.max) {
            best = Some(PrBoxDistance { signs, per_condition, max });
        }
    }
    best.expect("eight PR boxes")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub s_max: f64,
    pub pr_box_tv: f64,
    pub signaling: f64,
}

/// Rows ordered from hottest to coldest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub settings: Option<ChshSettings>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("temperature,s_max,pr_box_tv,signaling_deviation\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.temperature, r.s_max, r.pr_box_tv, r.signaling);
        }
        out
    }
}

/// Row of the conditioning-weight export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightProfileRow {
    pub detector: String,
    pub angle: f64,
    pub hidden: usize,
    pub weight: f64,
}

fn describe(params: &CrbmParams, layout: &ConditioningLayout) -> String {
    let [na, nb, ns] = layout.group_sizes();
    format!(
        "conditional RBM: {} hidden units, {na} A settings, {nb} B settings, {ns} state(s), {} parameters",
        params.n_hidden(),
        params.len()
    )
}

/// Full report at temperature `temp` against the Born-rule targets.
pub fn evaluate(params: &CrbmParams, layout: &ConditioningLayout, temp: Temperature) -> Result<EvaluationReport> {
    params.check_layout(layout)?;
    let t = temp.value();
    let conditions: Vec<ConditionReport> = layout
        .conditions()
        .into_iter()
        .map(|u| {
            let (alpha, beta, psi) = layout.resolve(&u);
            let target = born_probabilities(psi, alpha, beta);
            let model = table_unchecked(params, &u, t);
            ConditionReport {
                condition: u,
                alpha,
                beta,
                state: layout.states[u.state].label.clone(),
                tv: target.total_variation(&model),
                kl: target.kl_divergence(&model),
                target,
                model,
            }
        })
        .collect();
    let n = conditions.len() as f64;
    let mean_tv = conditions.iter().map(|c| c.tv).sum::<f64>() / n;
    let max_tv = conditions.iter().map(|c| c.tv).fold(0.0, f64::max);
    let mean_kl = conditions.iter().map(|c| c.kl).sum::<f64>() / n;

    let canonical = ChshSettings::canonical();
    let mut chsh = Vec::new();
    if has_settings(layout, &canonical) {
        for s in 0..layout.states.len() {
            chsh.push(ChshReport {
                state: layout.states[s].label.clone(),
                settings: canonical,
                values: model_chsh_for_state(params, layout, &canonical, s, temp)?,
            });
        }
    }
    let mut signaling = Vec::new();
    if layout.detector_a.len() >= 2 && layout.detector_b.len() >= 2 {
        for s in 0..layout.states.len() {
            signaling.push(StationSignaling {
                state: layout.states[s].label.clone(),
                deviation: signaling_by_station(&model_grid(params, layout, s, t))?,
            });
        }
    }
    Ok(EvaluationReport {
        description: describe(params, layout),
        temperature: t,
        conditions,
        mean_tv,
        max_tv,
        mean_kl,
        chsh,
        signaling,
    })
}

fn has_settings(layout: &ConditioningLayout, settings: &ChshSettings) -> bool {
    settings_indices(layout, settings).is_ok()
}

/// `(a, a′, b, b′)` as layout indices.
fn settings_indices(layout: &ConditioningLayout, settings: &ChshSettings) -> Result<[usize; 4]> {
    let missing = |which: &str, angle: DetectorAngle| Error::InvalidInput(format!("{which} setting {} rad is not in the layout", angle.0));
    let a = layout.find_a(settings.a).ok_or_else(|| missing("a", settings.a))?;
    let a_prime = layout.find_a(settings.a_prime).ok_or_else(|| missing("a'", settings.a_prime))?;
    let b = layout.find_b(settings.b).ok_or_else(|| missing("b", settings.b))?;
    let b_prime = layout.find_b(settings.b_prime).ok_or_else(|| missing("b'", settings.b_prime))?;
    Ok([a, a_prime, b, b_prime])
}

/// Model tables on the four CHSH setting pairs, in [`ChshSettings::pairs`] order.
pub fn chsh_tables(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    settings: &ChshSettings,
    state: usize,
    temp: Temperature,
) -> Result<[OutcomeDistribution; 4]> {
    params.check_layout(layout)?;
    if state >= layout.states.len() {
        return Err(Error::IndexOutOfRange {
            what: "state",
            index: state,
            size: layout.states.len(),
        });
    }
    let [a, a_prime, b, b_prime] = settings_indices(layout, settings)?;
    let pairs = [(a, b), (a_prime, b), (a, b_prime), (a_prime, b_prime)];
    Ok(pairs.map(|(ia, ib)| table_unchecked(params, &ConditionVector::new(ia, ib, state), temp.value())))
}

/// CHSH values of the model for the first state in the layout.
pub fn model_chsh(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    settings: &ChshSettings,
    temp: Temperature,
) -> Result<ChshValues> {
    model_chsh_for_state(params, layout, settings, 0, temp)
}

pub fn model_chsh_for_state(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    settings: &ChshSettings,
    state: usize,
    temp: Temperature,
) -> Result<ChshValues> {
    let tables = chsh_tables(params, layout, settings, state, temp)?;
    Ok(ChshValues::from_correlators(tables.map(|d| expectation(&d))))
}

fn model_grid(params: &CrbmParams, layout: &ConditioningLayout, state: usize, t: f64) -> SettingGrid {
    let mut grid = SettingGrid::new();
    for a in 0..layout.detector_a.len() {
        for b in 0..layout.detector_b.len() {
            grid.insert((a, b), table_unchecked(params, &ConditionVector::new(a, b, state), t));
        }
    }
    grid
}

fn check_signaling_layout(layout: &ConditioningLayout) -> Result<()> {
    for (name, n) in [("A", layout.detector_a.len()), ("B", layout.detector_b.len())] {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "signaling needs at least 2 settings on detector {name}, layout has {n}"
            )));
        }
    }
    Ok(())
}

/// Worst marginal shift over all states, stations and settings.
pub fn signaling_deviation_model(params: &CrbmParams, layout: &ConditioningLayout, temp: Temperature) -> Result<f64> {
    params.check_layout(layout)?;
    check_signaling_layout(layout)?;
    let mut worst: f64 = 0.0;
    for s in 0..layout.states.len() {
        worst = worst.max(signaling_by_station(&model_grid(params, layout, s, temp.value()))?.max());
    }
    Ok(worst)
}

/// Evaluates the fixed parameters at each temperature. Duplicates are
/// dropped and rows come out hottest first.
pub fn temperature_sweep(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    temperatures: &[Temperature],
    settings: &ChshSettings,
) -> Result<SweepResult> {
    params.check_layout(layout)?;
    let mut temps: Vec<f64> = temperatures.iter().map(|t| t.value()).collect();
    temps.sort_by(|a, b| b.total_cmp(a));
    temps.dedup();
    let chsh_ok = has_settings(layout, settings);
    let signaling_ok = check_signaling_layout(layout).is_ok();
    let mut rows = Vec::with_capacity(temps.len());
    for t in temps {
        let temp = Temperature::new(t)?;
        let (s_max, pr_box_tv) = if chsh_ok {
            let tables = chsh_tables(params, layout, settings, 0, temp)?;
            let values = ChshValues::from_correlators(tables.map(|d| expectation(&d)));
            (values.max, nearest_pr_box(&tables).max)
        } else {
            (f64::NAN, f64::NAN)
        };
        let signaling = if signaling_ok {
            signaling_deviation_model(params, layout, temp)?
        } else {
            f64::NAN
        };
        rows.push(SweepRow {
            temperature: t,
            s_max,
            pr_box_tv,
            signaling,
        });
    }
    Ok(SweepResult {
        settings: chsh_ok.then_some(*settings),
        rows,
    })
}

/// `n` evenly spaced temperatures from `t_start` down to `t_end`, both included.
pub fn linear_temperatures(t_start: f64, t_end: f64, n: usize) -> Result<Vec<Temperature>> {
    let (hi, lo) = (Temperature::new(t_start)?, Temperature::new(t_end)?);
    if n < 2 {
        return Ok(vec![hi]);
    }
    let last = (n - 1) as f64;
    // weighted endpoints keep grid points such as 0.2 exact
    (0..n)
        .map(|i| Temperature::new((hi.value() * (last - i as f64) + lo.value() * i as f64) / last))
        .collect()
}

/// Conditioning weights of both detector groups, one row per
/// (detector, setting, hidden unit).
pub fn export_weight_profile(params: &CrbmParams, layout: &ConditioningLayout) -> Result<Vec<WeightProfileRow>> {
    params.check_layout(layout)?;
    let mut rows = Vec::new();
    for (group, angles) in [(Group::DetectorA, &layout.detector_a), (Group::DetectorB, &layout.detector_b)] {
        for (k, angle) in angles.iter().enumerate() {
            for j in 0..params.n_hidden() {
                rows.push(WeightProfileRow {
                    detector: group.name().to_string(),
                    angle: angle.0,
                    hidden: j,
                    weight: params.cond_weight(group, k, j),
                });
            }
        }
    }
    Ok(rows)
}

pub fn weight_profile_csv(rows: &[WeightProfileRow]) -> String {
    let mut out = String::from("detector,angle_rad,hidden_unit,weight\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.detector, r.angle, r.hidden, r.weight);
    }
    out
}

/// Table at one condition, checked against the layout.
pub fn model_table(
    params: &CrbmParams,
    layout: &ConditioningLayout,
    u: &ConditionVector,
    temp: Temperature,
) -> Result<OutcomeDistribution> {
    params.check_layout(layout)?;
    layout.check(u)?;
    conditional_table(params, u, temp)
}
