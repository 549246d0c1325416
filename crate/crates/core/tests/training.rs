//! Trainer behaviour: estimator agreement, descent, determinism and the
//! dataset simulator.

use bellcrbm::crbm::{conditional_table, sample_outcome, ConditionVector, ConditioningLayout, CrbmParams, Group, LabeledState};
use bellcrbm::oracle::{DetectorAngle, TwoQubitState};
use bellcrbm::rng::{self, streams};
use bellcrbm::training::{
    exact_kl_gradient, kl_objective, pcd_gradient, simulate_dataset, train, uniform_condition_weights, PersistentChains,
    TargetTables, TrainingSource, Trial,
};
use bellcrbm::{Preset, Temperature, TrainingConfig};

fn cosine(a: &CrbmParams, b: &CrbmParams) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

#[test]
fn pcd_average_points_along_exact_gradient() {
    let layout = Preset::Epr2x2.layout();
    let params = CrbmParams::random(&layout, 3, 1.0, &mut rng::seeded(21)).unwrap();
    let targets = TargetTables::from_oracle(&layout);
    let exact = exact_kl_gradient(&params, &layout, &targets, &uniform_condition_weights(&layout)).unwrap();

    // a batch holding each condition's exact target mass, so only the
    // model phase is stochastic
    let mut batch = Vec::new();
    for u in layout.conditions() {
        let table = targets.get(layout.flat_index(&u)).unwrap();
        for k in 0..4 {
            let copies = (table.probs()[k] * 1000.0).round() as usize;
            for _ in 0..copies {
                batch.push(Trial {
                    condition: u,
                    outcome: bellcrbm::oracle::outcome_at(k),
                });
            }
        }
    }
    let mut chain_rng = rng::stream(3, streams::CHAINS);
    let mut chains = PersistentChains::new(&layout, 3, 200, &mut chain_rng);
    let mut total = params.zeros_like();
    let draws = 20;
    for _ in 0..draws {
        let g = pcd_gradient(&params, &layout, &batch, &mut chains, 50, Temperature::UNIT, &mut chain_rng).unwrap();
        total.add_scaled(1.0 / draws as f64, &g);
    }
    let c = cosine(&total, &exact);
    assert!(c >= 0.9, "cosine {c}");
}

#[test]
fn pcd_has_no_signal_when_data_match_the_model() {
    let layout = Preset::Epr2x2.layout();
    let params = CrbmParams::random(&layout, 3, 0.8, &mut rng::seeded(4)).unwrap();
    let mut data_rng = rng::stream(9, streams::SAMPLING);
    let mut chain_rng = rng::stream(9, streams::CHAINS);
    let mut chains = PersistentChains::new(&layout, 3, 4, &mut chain_rng);
    let conditions = layout.conditions();
    let draw_batch = |r: &mut rng::SimRng| -> Vec<Trial> {
        conditions
            .iter()
            .flat_map(|u| std::iter::repeat_n(*u, 16))
            .map(|u| Trial {
                condition: u,
                outcome: sample_outcome(&params, &u, Temperature::UNIT, r).unwrap(),
            })
            .collect()
    };
    for _ in 0..200 {
        let b = draw_batch(&mut data_rng);
        pcd_gradient(&params, &layout, &b, &mut chains, 10, Temperature::UNIT, &mut chain_rng).unwrap();
    }
    let draws = 1000;
    let grads: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let b = draw_batch(&mut data_rng);
            pcd_gradient(&params, &layout, &b, &mut chains, 10, Temperature::UNIT, &mut chain_rng)
                .unwrap()
                .values()
                .collect()
        })
        .collect();
    let dim = grads[0].len();
    let mean: Vec<f64> = (0..dim).map(|c| grads.iter().map(|g| g[c]).sum::<f64>() / draws as f64).collect();
    let var_of_mean: f64 = (0..dim)
        .map(|c| grads.iter().map(|g| (g[c] - mean[c]).powi(2)).sum::<f64>() / ((draws - 1) * draws) as f64)
        .sum();
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 3.0 * var_of_mean.sqrt(), "‖mean‖ {norm} vs 3·SE {}", 3.0 * var_of_mean.sqrt());
}

#[test]
fn small_steps_never_increase_the_objective() {
    let layout = Preset::Epr2x2.layout();
    let targets = TargetTables::from_oracle(&layout);
    let weights = uniform_condition_weights(&layout);
    for seed in 0..5 {
        let mut p = CrbmParams::random(&layout, 3, 1.0, &mut rng::seeded(seed)).unwrap();
        let mut last = kl_objective(&p, &layout, &targets, &weights).unwrap();
        for epoch in 0..50 {
            let g = exact_kl_gradient(&p, &layout, &targets, &weights).unwrap();
            p.add_scaled(-1e-3, &g);
            let now = kl_objective(&p, &layout, &targets, &weights).unwrap();
            assert!(now <= last, "seed {seed} epoch {epoch}: {last} -> {now}");
            last = now;
        }
    }
}

#[test]
fn zero_learning_rate_keeps_parameters_and_flat_history() {
    let layout = Preset::Epr2x2.layout();
    let cfg = TrainingConfig {
        learning_rate: 0.0,
        epochs: 30,
        restarts: 1,
        ..TrainingConfig::default()
    };
    let targets = TargetTables::from_oracle(&layout);
    let model = train(&layout, &cfg, TrainingSource::Targets(&targets)).unwrap();
    let init = CrbmParams::random(&layout, 3, cfg.init_scale, &mut rng::stream(cfg.seed, streams::INIT)).unwrap();
    assert_eq!(model.params, init);
    assert_eq!(model.history.records.len(), 30);
    assert!(!model.history.converged);
    let first = model.history.records[0].mean_tv;
    assert!(model.history.records.iter().all(|r| r.mean_tv == first));
}

#[test]
fn default_exact_training_matches_two_decimals() {
    let layout = Preset::Epr2x2.layout();
    let targets = TargetTables::from_oracle(&layout);
    let model = train(&layout, &TrainingConfig::default(), TrainingSource::Targets(&targets)).unwrap();
    assert!(model.history.converged);
    for u in layout.conditions() {
        let m = conditional_table(&model.params, &u, Temperature::UNIT).unwrap();
        let t = targets.get(layout.flat_index(&u)).unwrap();
        assert!(m.total_variation(t) <= 0.01);
    }
}

#[test]
fn temperature_is_a_parameter_rescaling() {
    let layout = Preset::Epr8x8ThreeState.layout();
    let p = CrbmParams::random(&layout, 4, 1.5, &mut rng::seeded(8)).unwrap();
    for t in [0.1, 0.37, 1.0, 4.0] {
        let scaled = p.scaled(1.0 / t);
        for u in layout.conditions().iter().step_by(7) {
            let a = conditional_table(&p, u, Temperature::new(t).unwrap()).unwrap().probs();
            let b = conditional_table(&scaled, u, Temperature::UNIT).unwrap().probs();
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn uniform_group_shift_equals_hidden_bias_shift() {
    let layout = Preset::Epr8x8.layout();
    let p = CrbmParams::random(&layout, 3, 1.0, &mut rng::seeded(12)).unwrap();
    let (j, delta) = (1, 0.73);
    let mut via_group = p.clone();
    for k in 0..p.group_size(Group::DetectorB) {
        via_group.cond_weights[Group::DetectorB.index()][k * 3 + j] += delta;
    }
    let mut via_bias = p.clone();
    via_bias.base.hidden_biases[j] += delta;
    for u in layout.conditions() {
        let a = conditional_table(&via_group, &u, Temperature::UNIT).unwrap().probs();
        let b = conditional_table(&via_bias, &u, Temperature::UNIT).unwrap().probs();
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() <= 1e-12);
        }
    }
}

#[test]
fn equal_settings_never_give_equal_outcomes() {
    let layout = ConditioningLayout::new(
        vec![DetectorAngle(0.4)],
        vec![DetectorAngle(0.4)],
        vec![LabeledState::new("singlet", TwoQubitState::singlet())],
    )
    .unwrap();
    let ds = simulate_dataset(&layout, 100_000, None, 1).unwrap();
    let same = ds.trials.iter().filter(|t| t.outcome.0 == t.outcome.1).count();
    assert!((same as f64) / 1e5 < 0.005);
}

#[test]
fn empirical_tables_concentrate_on_the_oracle() {
    let layout = Preset::Epr2x2.layout();
    let ds = simulate_dataset(&layout, 400_000, None, 2).unwrap();
    let empirical = TargetTables::from_dataset(&ds, &layout).unwrap();
    let oracle = TargetTables::from_oracle(&layout);
    for i in 0..layout.n_conditions() {
        assert!(empirical.get(i).unwrap().total_variation(oracle.get(i).unwrap()) <= 0.01);
    }
    assert_eq!(ds, simulate_dataset(&layout, 400_000, None, 2).unwrap());
    assert_ne!(ds, simulate_dataset(&layout, 400_000, None, 3).unwrap());
}

#[test]
fn weighted_conditions_follow_their_weights() {
    let layout = Preset::Epr2x2.layout();
    let weights = [0.7, 0.1, 0.1, 0.1];
    let ds = simulate_dataset(&layout, 50_000, Some(&weights), 5).unwrap();
    let first = ds.trials.iter().filter(|t| t.condition == ConditionVector::new(0, 0, 0)).count();
    assert!(((first as f64) / 5e4 - 0.7).abs() < 0.01);
}
