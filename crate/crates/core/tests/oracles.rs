//! Monte Carlo and closed-form oracles for the estimators and generators.

use ate_fusion::linalg::LinearFn;
use ate_fusion::nuisance::{
    cumulative_is, fit_value_functions, known_propensity, mu_h_system, BehaviorPolicy,
    DensityRatioModel, HistoricalRatio, HistoricalRatioKind, HistoricalRewardModel, OutcomeKind,
    PropensityKind, RewardModel, SequentialNuisance, SequentialNuisanceSpec, StateRatioSet,
    StaticNuisance, StaticNuisanceSpec, SwitchbackDesign, ValueFunctionSet, ValueTarget,
    DEFAULT_CLIP,
};
use ate_fusion::sequential_estimators::{psi_e_seq, psi_h1_seq, psi_h2_seq};
use ate_fusion::simulation::*;
use ate_fusion::static_estimators::{psi_e, psi_h1, psi_h2, tau_e, tau_h};
use ate_fusion::{
    Arm, ContextVector, Episode, ExperimentalRecord, HistoricalRecord, SequentialDataset, Step,
};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn double_robustness_on_example1() {
    let cfg = StaticDgpConfig {
        n_e: 1000,
        design: Design::Random,
        ..Default::default()
    };
    let wrong_propensity = StaticNuisanceSpec {
        propensity: PropensityKind::Known { p1: 0.7 },
        ..Default::default()
    };
    let zero_outcomes = StaticNuisanceSpec {
        reward: OutcomeKind::Zero,
        hist_reward: OutcomeKind::Zero,
        ..Default::default()
    };
    for (k, spec) in [wrong_propensity, zero_outcomes].into_iter().enumerate() {
        let (mut te, mut th) = (Vec::new(), Vec::new());
        for rep in 0..150 {
            let data = gen_static_example1(&cfg, &mut replication_rng(5, k as u32, rep)).unwrap();
            let nu = spec.fit(data.experimental(), data.historical()).unwrap();
            te.push(tau_e(&data, &nu) - EXAMPLE1_ATE);
            th.push(tau_h(&data, &nu) - EXAMPLE1_ATE);
        }
        for errs in [&te, &th] {
            let (m, se) = mean_se(errs);
            assert!(m.abs() < 3.0 * se, "case {k}: bias {m} vs se {se}");
        }
    }
}

#[test]
fn experimental_shift_appears_only_in_control_means() {
    let cfg = StaticDgpConfig {
        n_e: 20_000,
        m: 1,
        b_h: 0.4,
        design: Design::Random,
        ..Default::default()
    };
    let data = gen_static_example1(&cfg, &mut replication_rng(6, 0, 0)).unwrap();
    let ctrl: Vec<f64> = data
        .experimental()
        .iter()
        .filter(|r| r.action == Arm::Control)
        .map(|r| r.reward)
        .collect();
    let hist: Vec<f64> = data.historical().iter().map(|r| r.reward).collect();
    let (a, sa) = mean_se(&ctrl);
    let (b, sb) = mean_se(&hist);
    let se = (sa * sa + sb * sb).sqrt();
    assert!((a - b - 0.4).abs() < 2.0 * se);
}

#[test]
fn clinical_effect_is_gamma_times_mean_age() {
    let cfg = ClinicalConfig {
        n_e: 40_000,
        m: 1,
        ..Default::default()
    };
    let data = gen_clinical(&cfg, &mut replication_rng(7, 0, 0)).unwrap();
    let nu = StaticNuisanceSpec::default()
        .fit(data.experimental(), data.historical())
        .unwrap();
    // the linear outcome model is wrong here; known propensity keeps τ̂_e unbiased
    let psi: Vec<f64> = data.experimental().iter().map(|r| psi_e(r, &nu)).collect();
    let (m, se) = mean_se(&psi);
    assert!(
        (m - cfg.true_ate()).abs() < 3.0 * se,
        "{m} vs {}",
        cfg.true_ate()
    );
}

fn linear_static_nuisance(p1: f64) -> StaticNuisance {
    StaticNuisance {
        reward: RewardModel::Linear {
            control: LinearFn {
                intercept: 0.3,
                slopes: vec![1.0, -0.5],
            },
            treatment: LinearFn {
                intercept: 1.2,
                slopes: vec![0.7, 0.2],
            },
        },
        hist_reward: HistoricalRewardModel::Linear(LinearFn {
            intercept: -0.1,
            slopes: vec![0.9, -0.4],
        }),
        propensity: known_propensity(p1, DEFAULT_CLIP).unwrap(),
        density_ratio: DensityRatioModel::Constant1,
    }
}

#[test]
fn single_step_scores_match_static_scores() {
    let mut rng = replication_rng(8, 0, 0);
    for _ in 0..100 {
        let p1 = rng.random_range(0.1..0.9);
        let nu_s = linear_static_nuisance(p1);
        let (c, t, h) = match (&nu_s.reward, &nu_s.hist_reward) {
            (RewardModel::Linear { control, treatment }, HistoricalRewardModel::Linear(h)) => {
                (control.clone(), treatment.clone(), h.clone())
            }
            _ => unreachable!(),
        };
        let nu_q = SequentialNuisance {
            values: ValueFunctionSet::new(vec![c], vec![t], vec![h]).unwrap(),
            ratios: StateRatioSet::cumulative(
                BehaviorPolicy::Markov(nu_s.propensity.clone()),
                DEFAULT_CLIP,
            ),
        };
        let s = vec![normal(&mut rng), normal(&mut rng)];
        let a = if rng.random_bool(0.5) {
            Arm::Treatment
        } else {
            Arm::Control
        };
        let r = 5.0 * normal(&mut rng);
        let rec = ExperimentalRecord::new(ContextVector::new(s.clone()).unwrap(), a, r).unwrap();
        let hist = HistoricalRecord::new(ContextVector::new(s.clone()).unwrap(), r).unwrap();
        let step = Step {
            context: ContextVector::new(s.clone()).unwrap(),
            action: a,
            reward: r,
        };
        let ep = Episode::new(vec![step], ContextVector::new(vec![9.0, -9.0]).unwrap()).unwrap();
        let hstep = Step {
            context: ContextVector::new(s).unwrap(),
            action: Arm::Control,
            reward: r,
        };
        let hep = Episode::new(vec![hstep], ContextVector::new(vec![1.0, 1.0]).unwrap()).unwrap();
        assert!((psi_e(&rec, &nu_s) - psi_e_seq(&ep, &nu_q)).abs() < 1e-12);
        assert!((psi_h1(&rec, &nu_s) - psi_h1_seq(&ep, &nu_q)).abs() < 1e-12);
        assert!((psi_h2(&hist, &nu_s) - psi_h2_seq(&hep, &nu_q)).abs() < 1e-12);
    }
}

#[test]
fn fitted_value_functions_match_backward_induction() {
    let cfg = BaseMdpConfig {
        horizon: 5,
        n_days: 40,
        state_dim: 2,
        noise_sd: 0.0,
    };
    let (eps, truth) = gen_synthetic_base_mdp(&cfg, &mut replication_rng(9, 0, 0)).unwrap();
    let none = TreatmentEffects::none(5, 2);
    let exact = truth.value_functions(&none, Arm::Control, 0.0);
    for target in [ValueTarget::Historical, ValueTarget::Arm(Arm::Control)] {
        let fitted = fit_value_functions(&eps, target).unwrap();
        for (f, e) in fitted.iter().zip(&exact) {
            assert!((f.intercept - e.intercept).abs() < 1e-8 * (1.0 + e.intercept.abs()));
            for (a, b) in f.slopes.iter().zip(&e.slopes) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn cumulative_ratios_average_to_one() {
    let behaviors = [
        BehaviorPolicy::Markov(known_propensity(0.3, DEFAULT_CLIP).unwrap()),
        BehaviorPolicy::switchback(1, 0.5, SwitchbackDesign::Randomized).unwrap(),
        BehaviorPolicy::switchback(2, 0.4, SwitchbackDesign::Randomized).unwrap(),
    ];
    let horizon = 4;
    for (k, b) in behaviors.iter().enumerate() {
        let mut rng = replication_rng(10, k as u32, 0);
        let mut per_t = vec![vec![Vec::new(); horizon]; 2];
        for _ in 0..20_000 {
            let mut steps = Vec::new();
            let mut prev = None;
            for t in 1..=horizon {
                let s = [normal(&mut rng)];
                let a = if rng.random_bool(b.treat_prob(t, prev, &s)) {
                    Arm::Treatment
                } else {
                    Arm::Control
                };
                steps.push(Step {
                    context: ContextVector::new(s.to_vec()).unwrap(),
                    action: a,
                    reward: 0.0,
                });
                prev = Some(a);
            }
            let ep = Episode::new(steps, 0.0.into()).unwrap();
            for arm in Arm::BOTH {
                for (t, m) in cumulative_is(&ep, b, arm).into_iter().enumerate() {
                    per_t[arm.index()][t].push(m);
                }
            }
        }
        for arm in per_t {
            for xs in arm {
                let (m, se) = mean_se(&xs);
                assert!(
                    (m - 1.0).abs() < 3.0 * se + 1e-12,
                    "behavior {k}: {m} ± {se}"
                );
            }
        }
    }
}

fn markov_episode(rng: &mut impl Rng, horizon: usize, p1: f64) -> Episode {
    let mut s = normal(rng);
    let mut steps = Vec::new();
    for _ in 0..horizon {
        let a = if rng.random_bool(p1) {
            Arm::Treatment
        } else {
            Arm::Control
        };
        steps.push(Step {
            context: s.into(),
            action: a,
            reward: s,
        });
        s = 0.5 * s + 0.8 * a.bit() as f64 + normal(rng);
    }
    Episode::new(steps, s.into()).unwrap()
}

#[test]
fn historical_sieve_solves_its_equations() {
    let mut rng = replication_rng(11, 0, 0);
    let exp: Vec<Episode> = (0..800).map(|_| markov_episode(&mut rng, 3, 0.5)).collect();
    let hist: Vec<Episode> = (0..800).map(|_| markov_episode(&mut rng, 3, 0.0)).collect();
    let data = SequentialDataset::new(exp, hist).unwrap();
    let behavior = BehaviorPolicy::Markov(known_propensity(0.5, DEFAULT_CLIP).unwrap());
    let spec = SequentialNuisanceSpec {
        historical_ratio: HistoricalRatioKind::Sieve,
        ..Default::default()
    };
    let nu = spec.fit(&data, &behavior).unwrap();
    let HistoricalRatio::Sieve(sieve) = &nu.ratios.historical else {
        panic!("sieve requested")
    };
    for k in 1..=3 {
        let (g, b) = mu_h_system(&data, &nu.ratios, sieve.basis, k);
        let x = nalgebra::DVector::from_vec(sieve.gammas[k - 1].clone());
        let r = (&g * x - &b).amax();
        assert!(r < 1e-8, "k={k}: residual {r}");
    }
}

#[test]
fn oracle_beats_every_fixed_weight() {
    let cfg = StudyConfig {
        b_h: Some(vec![0.0, 0.3, 1.0]),
        methods: Some(vec![ate_fusion::Method::Edo]),
        replications: 60,
        master_seed: 12,
        ..Default::default()
    };
    let report = run_mse_study(&cfg).unwrap();
    for c in &report.cells {
        for w in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!(c.oracle.oracle_mse <= c.oracle.mse_at(w) + 1e-12);
        }
        // EDO is the w = 1 combination of the same replications
        assert!((c.methods[0].mse - c.oracle.mse_at(1.0)).abs() < 1e-9 * (1.0 + c.methods[0].mse));
    }
}

#[test]
fn bootstrap_refit_recovers_the_fitted_world() {
    let (eps, _) = gen_synthetic_base_mdp(
        &BaseMdpConfig {
            horizon: 3,
            n_days: 200,
            ..Default::default()
        },
        &mut replication_rng(13, 0, 0),
    )
    .unwrap();
    let world = fit_linear_mdp(&eps).unwrap();
    let none = TreatmentEffects::none(3, 2);
    let cfg = SequentialDgpConfig {
        n_days: 4000,
        m: 1,
        ..Default::default()
    };
    let data = bootstrap_generate(&world, &none, &cfg, &mut replication_rng(13, 0, 1)).unwrap();
    let refit = fit_linear_mdp(data.historical()).unwrap();
    for t in 0..3 {
        assert!((refit.reward[t].intercept - world.reward[t].intercept).abs() < 0.3);
        for j in 0..2 {
            assert!((refit.reward[t].slopes[j] - world.reward[t].slopes[j]).abs() < 0.1);
        }
    }
}

#[test]
fn switchback_spans_never_exceed_their_length() {
    let (_, truth) = gen_synthetic_base_mdp(
        &BaseMdpConfig {
            horizon: 12,
            n_days: 10,
            ..Default::default()
        },
        &mut replication_rng(14, 0, 0),
    )
    .unwrap();
    let none = TreatmentEffects::none(12, 2);
    let cfg = SequentialDgpConfig {
        n_days: 50,
        span: 3,
        ..Default::default()
    };
    let data = bootstrap_generate(&truth, &none, &cfg, &mut replication_rng(14, 0, 1)).unwrap();
    for ep in data.experimental() {
        let acts: Vec<Arm> = ep.steps().iter().map(|s| s.action).collect();
        let mut run = 1;
        for w in acts.windows(2) {
            run = if w[0] == w[1] { run + 1 } else { 1 };
            assert!(run <= 3);
        }
    }
    assert!(data
        .historical()
        .iter()
        .all(|e| e.steps().iter().all(|s| s.action == Arm::Control)));
}
