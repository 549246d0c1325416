//! Property suites shared by the `properties` test target and the
//! acceptance harness. Each runs 100 cases from a fixed seed against
//! brute-force enumeration written independently of the library.

use bellcrbm::crbm::{conditional_table, ConditionVector, ConditioningLayout, CrbmParams, LabeledState};
use bellcrbm::io::{write_dataset, FileHeader, Lineage, ModelFile};
use bellcrbm::oracle::{born_probabilities, DetectorAngle, TwoQubitState};
use bellcrbm::rbm::{bits_from_index, free_energy, gibbs_sweep, index_from_bits, visible_distribution, GibbsState, RbmParams};
use bellcrbm::training::{
    exact_kl_gradient, simulate_dataset, train, uniform_condition_weights, TargetTables, TrainingSource,
};
use bellcrbm::{rng, Preset, Temperature, TrainingConfig, TrainingMode};
use num_complex::Complex64;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

pub const CASES: u32 = 100;

fn config() -> Config {
    Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn rbm(max_m: usize, max_n: usize, scale: f64) -> impl Strategy<Value = RbmParams> {
    (1..=max_m, 1..=max_n)
        .prop_flat_map(move |(m, n)| {
            (
                Just(m),
                Just(n),
                vec(-scale..scale, m * n),
                vec(-scale..scale, m),
                vec(-scale..scale, n),
            )
        })
        .prop_map(|(m, n, w, c, d)| RbmParams::new(m, n, w, c, d).unwrap())
}

/// Layout with arbitrary group sizes plus matching random parameters and a condition.
fn crbm(scale: f64) -> impl Strategy<Value = (ConditioningLayout, CrbmParams, ConditionVector)> {
    (1..=4usize, 1..=4usize, 1..=3usize, 1..=4usize)
        .prop_flat_map(move |(ka, kb, ks, n)| {
            (
                Just((ka, kb, ks, n)),
                vec(-scale..scale, 2 * n + 2 + n),
                vec(-scale..scale, ka * n),
                vec(-scale..scale, kb * n),
                vec(-scale..scale, ks * n),
                (0..ka, 0..kb, 0..ks),
            )
        })
        .prop_map(|((ka, kb, ks, n), base, wa, wb, ws, (a, b, s))| {
            let layout = ConditioningLayout::new(
                (0..ka).map(|k| DetectorAngle(0.3 * k as f64)).collect(),
                (0..kb).map(|k| DetectorAngle(0.7 * k as f64)).collect(),
                (0..ks).map(|k| LabeledState::new(format!("s{k}"), TwoQubitState::singlet())).collect(),
            )
            .unwrap();
            let base = RbmParams::new(2, n, base[..2 * n].to_vec(), base[2 * n..2 * n + 2].to_vec(), base[2 * n + 2..].to_vec())
                .unwrap();
            let params = CrbmParams {
                base,
                cond_weights: [wa, wb, ws],
            };
            (layout, params, ConditionVector::new(a, b, s))
        })
}

/// `E(v, h) = −(Σ w_ij v_i h_j + Σ c_i v_i + Σ d_j h_j)` written out directly.
#[allow(clippy::needless_range_loop)]
fn brute_energy(p: &RbmParams, d: &[f64], v: &[u8], h: &[u8]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.n_visible {
        s += p.visible_biases[i] * f64::from(v[i]);
        for j in 0..p.n_hidden {
            s += p.weights[i * p.n_hidden + j] * f64::from(v[i]) * f64::from(h[j]);
        }
    }
    for j in 0..p.n_hidden {
        s += d[j] * f64::from(h[j]);
    }
    -s
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn effective_biases(p: &CrbmParams, u: &ConditionVector) -> Vec<f64> {
    let n = p.base.n_hidden;
    (0..n)
        .map(|j| {
            p.base.hidden_biases[j]
                + p.cond_weights[0][u.a * n + j]
                + p.cond_weights[1][u.b * n + j]
                + p.cond_weights[2][u.state * n + j]
        })
        .collect()
}

/// `P(v | u)` by summing `e^{−E/T}` over all `2^(2+n)` joint states.
fn enumerated_table(p: &CrbmParams, u: &ConditionVector, t: f64) -> [f64; 4] {
    let d = effective_biases(p, u);
    let n = p.base.n_hidden;
    let mut joint = Vec::new();
    for vi in 0..4 {
        let v = bits_from_index(vi, 2);
        for hi in 0..1usize << n {
            joint.push((vi, -brute_energy(&p.base, &d, &v, &bits_from_index(hi, n)) / t));
        }
    }
    let logits: Vec<f64> = joint.iter().map(|x| x.1).collect();
    let log_z = log_sum_exp(&logits);
    let mut table = [0.0; 4];
    for (vi, l) in joint {
        table[vi] += (l - log_z).exp();
    }
    table
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    TestRunner::new(config()).run(&strategy, test).map_err(|e| e.to_string())
}

#[allow(dead_code)]
pub type Suite = (&'static str, fn() -> Result<(), String>);

#[allow(dead_code)]
pub const SUITES: [Suite; 6] = [
    ("free_energy", free_energy_matches_hidden_sum),
    ("conditional_table", conditional_table_matches_joint_enumeration),
    ("gradient_fd", exact_gradient_matches_finite_differences),
    ("normalization", emitted_distributions_are_normalized),
    ("gibbs_stationarity", gibbs_chain_is_stationary),
    ("byte_identical_reruns", fixed_seeds_rerun_byte_identically),
];

pub fn free_energy_matches_hidden_sum() -> Result<(), String> {
    run((rbm(4, 5, 3.0), 0.2f64..5.0), |(p, t)| {
        let temp = Temperature::new(t).unwrap();
        for k in 0..1usize << p.n_visible {
            let v = bits_from_index(k, p.n_visible);
            let terms: Vec<f64> = (0..1usize << p.n_hidden)
                .map(|h| -brute_energy(&p, &p.hidden_biases, &v, &bits_from_index(h, p.n_hidden)) / t)
                .collect();
            let brute = -t * log_sum_exp(&terms);
            let closed = free_energy(&p, &v, temp).unwrap();
            prop_assert!((brute - closed).abs() <= 1e-10, "v={v:?} brute={brute} closed={closed}");
        }
        Ok(())
    })
}

pub fn conditional_table_matches_joint_enumeration() -> Result<(), String> {
    run((crbm(3.0), 0.2f64..5.0), |((_, p, u), t)| {
        let table = conditional_table(&p, &u, Temperature::new(t).unwrap()).unwrap().probs();
        let brute = enumerated_table(&p, &u, t);
        for k in 0..4 {
            prop_assert!((table[k] - brute[k]).abs() <= 1e-12, "k={k} {table:?} vs {brute:?}");
        }
        Ok(())
    })
}

pub fn exact_gradient_matches_finite_differences() -> Result<(), String> {
    run((0..3usize, 1..=4usize, 0.1f64..1.5, any::<u64>()), |(which, n, scale, seed)| {
        let layout = Preset::ALL[which].layout();
        let mut p = CrbmParams::random(&layout, n, scale, &mut rng::seeded(seed)).unwrap();
        // biases are zero after init; give them values too
        let mut r = rng::seeded(seed ^ 1);
        for b in p.base.visible_biases.iter_mut().chain(p.base.hidden_biases.iter_mut()) {
            *b = scale * (rand::Rng::random::<f64>(&mut r) - 0.5);
        }
        let targets = TargetTables::from_oracle(&layout);
        let weights = uniform_condition_weights(&layout);
        let conditions = layout.conditions();
        let objective = |q: &CrbmParams| -> f64 {
            conditions
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let target = targets.get(i).unwrap().probs();
                    let model = conditional_table(q, u, Temperature::UNIT).unwrap().probs();
                    weights[i] * target.iter().zip(&model).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum::<f64>()
                })
                .sum()
        };
        let grad: Vec<f64> = exact_kl_gradient(&p, &layout, &targets, &weights).unwrap().values().collect();
        let h = 1e-5;
        for (idx, g) in grad.iter().enumerate() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            *plus.values_mut().nth(idx).unwrap() += h;
            *minus.values_mut().nth(idx).unwrap() -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            prop_assert!((fd - g).abs() <= 1e-6, "component {idx}: exact {g} fd {fd}");
        }
        Ok(())
    })
}

pub fn emitted_distributions_are_normalized() -> Result<(), String> {
    let strategy = (
        crbm(20.0),
        0.01f64..100.0,
        vec((-1.0f64..1.0, -1.0f64..1.0), 4),
        (-7.0f64..7.0, -7.0f64..7.0),
        rbm(6, 4, 20.0),
        any::<u64>(),
    );
    run(strategy, |((layout, p, u), t, amps, (alpha, beta), rbm_p, seed)| {
        let temp = Temperature::new(t).unwrap();
        let table = conditional_table(&p, &u, temp).unwrap().probs();
        prop_assert!((table.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(table.iter().all(|x| *x >= 0.0));

        let visible = visible_distribution(&rbm_p, temp).unwrap();
        prop_assert!((visible.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        let amps: Vec<Complex64> = amps.iter().map(|(re, im)| Complex64::new(*re, *im)).collect();
        if let Ok(psi) = TwoQubitState::normalized([amps[0], amps[1], amps[2], amps[3]]) {
            let born = born_probabilities(&psi, DetectorAngle(alpha), DetectorAngle(beta)).probs();
            prop_assert!((born.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(born.iter().all(|x| *x >= 0.0));
        }

        let ds = simulate_dataset(&layout, 50, None, seed).unwrap();
        for target in TargetTables::from_dataset(&ds, &layout).unwrap().tables.iter().flatten() {
            prop_assert!((target.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn gibbs_chain_is_stationary() -> Result<(), String> {
    run((rbm(3, 3, 1.5), 0.7f64..2.0, any::<u64>()), |(p, t, seed)| {
        let temp = Temperature::new(t).unwrap();
        let exact = visible_distribution(&p, temp).unwrap();
        let mut r = rng::seeded(seed);
        let mut state = GibbsState::zeros(&p);
        for _ in 0..1_000 {
            gibbs_sweep(&p, &mut state, temp, &mut r).unwrap();
        }
        let sweeps = 1_000_000;
        let mut counts = vec![0u64; exact.len()];
        for _ in 0..sweeps {
            gibbs_sweep(&p, &mut state, temp, &mut r).unwrap();
            counts[index_from_bits(&state.visible)] += 1;
        }
        let empirical: Vec<f64> = counts.iter().map(|c| *c as f64 / sweeps as f64).collect();
        let d = tv(&empirical, &exact);
        prop_assert!(d <= 0.01, "TV {d} exact {exact:?} empirical {empirical:?}");
        Ok(())
    })
}

pub fn fixed_seeds_rerun_byte_identically() -> Result<(), String> {
    run((any::<u64>(), any::<bool>()), |(seed, pcd)| {
        let layout = Preset::Epr2x2.layout();
        let once = || {
            let ds = simulate_dataset(&layout, 200, None, seed).unwrap();
            let header = FileHeader::new("gen-data", Some(seed), &seed).unwrap();
            let mut bytes = Vec::new();
            write_dataset(&mut bytes, &ds, &layout, &header).unwrap();
            let cfg = TrainingConfig {
                seed,
                epochs: if pcd { 2 } else { 25 },
                restarts: 2,
                mode: if pcd { TrainingMode::Pcd } else { TrainingMode::ExactKl },
                steps_per_epoch: Some(3),
                n_chains: 2,
                learning_rate: 0.05,
                ..TrainingConfig::default()
            };
            let targets = TargetTables::from_oracle(&layout);
            let source = if pcd { TrainingSource::Dataset(&ds) } else { TrainingSource::Targets(&targets) };
            let model = train(&layout, &cfg, source).unwrap();
            let text = ModelFile::new(layout.clone(), model.params.clone(), Lineage { seed, ..Default::default() })
                .unwrap()
                .to_text()
                .unwrap();
            (bytes, model.history.to_csv(), text)
        };
        prop_assert_eq!(once(), once());
        Ok(())
    })
}
