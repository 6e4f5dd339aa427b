//! Time-varying linear MDP: synthetic base generator, per-step fit with
//! residual banks, and the residual-bootstrap generator with calibrated
//! treatment effects.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, ContextVector, Episode, SequentialDataset, Step};
use crate::error::{Error, Result};
use crate::linalg::{fit_affine, LinearFn};
use crate::nuisance::{BehaviorPolicy, SwitchbackDesign, ValueFunctionSet};

/// Per-step treatment terms: γ_t on the reward and Γ_t on the next state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEffects {
    pub reward: Vec<f64>,
    pub state: Vec<Vec<f64>>,
}

impl TreatmentEffects {
    pub fn none(horizon: usize, state_dim: usize) -> Self {
        Self {
            reward: vec![0.0; horizon],
            state: vec![vec![0.0; state_dim]; horizon],
        }
    }
}

/// R_t = α_t + β_tᵀS_t + γ_t A_t + e_t and S_{t+1} = φ_t + Φ_t S_t + Γ_t A_t + E_t,
/// plus the per-day residual banks used for resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMdpModel {
    /// (α_t, β_t) for t = 1..T.
    pub reward: Vec<LinearFn>,
    /// `transition[t-1][j]` holds (φ_{t,j}, row j of Φ_t).
    pub transition: Vec<Vec<LinearFn>>,
    pub initial_states: Vec<Vec<f64>>,
    /// `reward_residuals[i][t-1]` = ê_{i,t}.
    pub reward_residuals: Vec<Vec<f64>>,
    /// `state_residuals[i][t-1][j]` = Ê_{i,t,j}.
    pub state_residuals: Vec<Vec<Vec<f64>>>,
    /// Source-data mean of R_t, the scale of γ_t.
    pub mean_reward: Vec<f64>,
    /// Source-data mean of S_{t+1}, the scale of Γ_t.
    pub mean_next_state: Vec<Vec<f64>>,
}

impl LinearMdpModel {
    pub fn horizon(&self) -> usize {
        self.reward.len()
    }

    pub fn state_dim(&self) -> usize {
        self.transition[0].len()
    }

    pub fn n_days(&self) -> usize {
        self.initial_states.len()
    }

    pub fn mean_reward_fn(&self, t: usize, s: &[f64]) -> f64 {
        self.reward[t - 1].eval(s)
    }

    /// φ_t + Φ_t s.
    pub fn mean_next_state_fn(&self, t: usize, s: &[f64]) -> Vec<f64> {
        self.transition[t - 1].iter().map(|f| f.eval(s)).collect()
    }

    fn mean_initial_state(&self) -> Vec<f64> {
        let n = self.n_days() as f64;
        let mut m = vec![0.0; self.state_dim()];
        for s in &self.initial_states {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b / n;
            }
        }
        m
    }

    /// Exact value functions V_t(s) = c_t + g_tᵀs of the constant policy `arm`
    /// by backward induction, with `shift` added to every reward.
    pub fn value_functions(
        &self,
        effects: &TreatmentEffects,
        arm: Arm,
        shift: f64,
    ) -> Vec<LinearFn> {
        let horizon = self.horizon();
        let dim = self.state_dim();
        let a = arm.bit() as f64;
        let mut out = vec![LinearFn::zero(dim); horizon];
        let mut c_next = 0.0;
        let mut g_next = vec![0.0; dim];
        for t in (1..=horizon).rev() {
            let r = &self.reward[t - 1];
            let tr = &self.transition[t - 1];
            let mut c = r.intercept + effects.reward[t - 1] * a + shift + c_next;
            let mut g = r.slopes.clone();
            for j in 0..dim {
                c += g_next[j] * (tr[j].intercept + effects.state[t - 1][j] * a);
                for (k, gk) in g.iter_mut().enumerate() {
                    *gk += g_next[j] * tr[j].slopes[k];
                }
            }
            out[t - 1] = LinearFn {
                intercept: c,
                slopes: g.clone(),
            };
            c_next = c;
            g_next = g;
        }
        out
    }

    /// Expected return of the constant policy `arm` from the empirical
    /// initial-state distribution.
    pub fn policy_value(&self, effects: &TreatmentEffects, arm: Arm) -> f64 {
        self.value_functions(effects, arm, 0.0)[0].eval(&self.mean_initial_state())
    }

    /// Population ATE of always-treat versus always-control.
    pub fn true_ate(&self, effects: &TreatmentEffects) -> f64 {
        self.policy_value(effects, Arm::Treatment) - self.policy_value(effects, Arm::Control)
    }

    /// Exact value functions of the generated experimental process (reward
    /// shift `b_h` per step) and of the historical control process.
    pub fn true_value_set(&self, effects: &TreatmentEffects, b_h: f64) -> ValueFunctionSet {
        ValueFunctionSet::new(
            self.value_functions(effects, Arm::Control, b_h),
            self.value_functions(effects, Arm::Treatment, b_h),
            self.value_functions(effects, Arm::Control, 0.0),
        )
        .expect("horizons agree by construction")
    }

    /// γ_t = δ1 mean(R_t) / 100 and Γ_t = δ2 mean(S_{t+1}) / 100.
    pub fn scaled_effects(&self, delta1: f64, delta2: f64) -> TreatmentEffects {
        TreatmentEffects {
            reward: self
                .mean_reward
                .iter()
                .map(|m| delta1 * m / 100.0)
                .collect(),
            state: self
                .mean_next_state
                .iter()
                .map(|v| v.iter().map(|m| delta2 * m / 100.0).collect())
                .collect(),
        }
    }
}

/// Synthetic stand-in for an A/A dataset: smooth daily patterns in the
/// intercepts, stable dynamics, Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseMdpConfig {
    pub horizon: usize,
    pub n_days: usize,
    pub state_dim: usize,
    pub noise_sd: f64,
}

impl Default for BaseMdpConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            n_days: 60,
            state_dim: 2,
            noise_sd: 1.0,
        }
    }
}

fn std_normal(rng: &mut (impl Rng + ?Sized)) -> f64 {
    StandardNormal.sample(rng)
}

fn synthetic_truth(horizon: usize, dim: usize) -> (Vec<LinearFn>, Vec<Vec<LinearFn>>) {
    let mut reward = Vec::with_capacity(horizon);
    let mut transition = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let phase = 2.0 * PI * t as f64 / horizon as f64;
        reward.push(LinearFn {
            intercept: 10.0 + 3.0 * phase.sin(),
            slopes: (0..dim).map(|j| 1.0 / (j + 1) as f64).collect(),
        });
        let rows = (0..dim)
            .map(|j| LinearFn {
                intercept: 1.0 + 0.5 * (phase + j as f64).cos(),
                slopes: (0..dim).map(|k| if k == j { 0.6 } else { 0.1 }).collect(),
            })
            .collect();
        transition.push(rows);
    }
    (reward, transition)
}

/// Generate an all-control dataset from the synthetic truth; returns the
/// episodes and the truth model carrying the realized noise as residuals.
pub fn gen_synthetic_base_mdp(
    cfg: &BaseMdpConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(Vec<Episode>, LinearMdpModel)> {
    if cfg.horizon < 1 || cfg.n_days < 1 || cfg.state_dim < 1 {
        return Err(Error::invalid(
            "base mdp",
            "horizon, n_days and state_dim must be positive",
        ));
    }
    let (reward, transition) = synthetic_truth(cfg.horizon, cfg.state_dim);
    let mut episodes = Vec::with_capacity(cfg.n_days);
    let mut initial_states = Vec::new();
    let mut reward_residuals = Vec::new();
    let mut state_residuals = Vec::new();
    for _ in 0..cfg.n_days {
        let mut s: Vec<f64> = (0..cfg.state_dim).map(|_| 2.0 + std_normal(rng)).collect();
        initial_states.push(s.clone());
        let mut steps = Vec::with_capacity(cfg.horizon);
        let mut e_day = Vec::with_capacity(cfg.horizon);
        let mut big_e_day = Vec::with_capacity(cfg.horizon);
        for t in 1..=cfg.horizon {
            let e: f64 = cfg.noise_sd * std_normal(rng);
            let big_e: Vec<f64> = (0..cfg.state_dim)
                .map(|_| cfg.noise_sd * std_normal(rng))
                .collect();
            let r = reward[t - 1].eval(&s) + e;
            let next: Vec<f64> = transition[t - 1]
                .iter()
                .zip(&big_e)
                .map(|(f, n)| f.eval(&s) + n)
                .collect();
            steps.push(Step {
                context: ContextVector::new(s)?,
                action: Arm::Control,
                reward: r,
            });
            e_day.push(e);
            big_e_day.push(big_e);
            s = next;
        }
        episodes.push(Episode::new(steps, ContextVector::new(s)?)?);
        reward_residuals.push(e_day);
        state_residuals.push(big_e_day);
    }
    let (mean_reward, mean_next_state) = response_means(&episodes);
    let model = LinearMdpModel {
        reward,
        transition,
        initial_states,
        reward_residuals,
        state_residuals,
        mean_reward,
        mean_next_state,
    };
    Ok((episodes, model))
}

fn response_means(episodes: &[Episode]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let horizon = episodes[0].horizon();
    let dim = episodes[0].state_dim();
    let n = episodes.len() as f64;
    let mut mr = vec![0.0; horizon];
    let mut ms = vec![vec![0.0; dim]; horizon];
    for ep in episodes {
        for t in 1..=horizon {
            mr[t - 1] += ep.steps()[t - 1].reward / n;
            for (a, b) in ms[t - 1].iter_mut().zip(ep.state(t + 1)) {
                *a += b / n;
            }
        }
    }
    (mr, ms)
}

/// Per-step OLS of R_t and each coordinate of S_{t+1} on (1, S_t), ignoring
/// actions, with residuals stored per (day, step).
pub fn fit_linear_mdp(episodes: &[Episode]) -> Result<LinearMdpModel> {
    let first = episodes
        .first()
        .ok_or(Error::EmptyDataset("base episodes"))?;
    let horizon = first.horizon();
    let dim = first.state_dim();
    if episodes
        .iter()
        .any(|e| e.horizon() != horizon || e.state_dim() != dim)
    {
        return Err(Error::invalid(
            "base episodes",
            "horizon and state dimension must agree",
        ));
    }
    let n = episodes.len();
    let mut reward = Vec::with_capacity(horizon);
    let mut transition = Vec::with_capacity(horizon);
    let mut reward_residuals = vec![vec![0.0; horizon]; n];
    let mut state_residuals = vec![vec![vec![0.0; dim]; horizon]; n];
    for t in 1..=horizon {
        let xs: Vec<&[f64]> = episodes.iter().map(|e| e.state(t)).collect();
        let ys: Vec<f64> = episodes.iter().map(|e| e.steps()[t - 1].reward).collect();
        let f = fit_affine(&xs, &ys, dim, &format!("reward model, t={t}"))?;
        for (i, ep) in episodes.iter().enumerate() {
            reward_residuals[i][t - 1] = ys[i] - f.eval(ep.state(t));
        }
        reward.push(f);
        let mut rows = Vec::with_capacity(dim);
        #[allow(clippy::needless_range_loop)]
        for j in 0..dim {
            let ys: Vec<f64> = episodes.iter().map(|e| e.state(t + 1)[j]).collect();
            let f = fit_affine(
                &xs,
                &ys,
                dim,
                &format!("transition model, t={t}, coordinate {}", j + 1),
            )?;
            for (i, ep) in episodes.iter().enumerate() {
                state_residuals[i][t - 1][j] = ys[i] - f.eval(ep.state(t));
            }
            rows.push(f);
        }
        transition.push(rows);
    }
    let (mean_reward, mean_next_state) = response_means(episodes);
    Ok(LinearMdpModel {
        reward,
        transition,
        initial_states: episodes.iter().map(|e| e.state(1).to_vec()).collect(),
        reward_residuals,
        state_residuals,
        mean_reward,
        mean_next_state,
    })
}

/// Distribution of the per-day wild-bootstrap multiplier ξ_i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Multipliers {
    #[default]
    Gaussian,
    /// ξ ≡ 0: every generated day follows the fitted mean exactly.
    Zero,
}

/// Inputs of the bootstrap generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialDgpConfig {
    /// Number of experimental days; the historical set has `m * n_days`.
    pub n_days: usize,
    pub m: usize,
    pub b_h: f64,
    pub d: f64,
    /// Target ATE as a fraction of the baseline return.
    pub treatment_ratio: f64,
    pub span: usize,
    pub design: SwitchbackDesign,
    pub multipliers: Multipliers,
}

impl Default for SequentialDgpConfig {
    fn default() -> Self {
        Self {
            n_days: 40,
            m: 1,
            b_h: 0.0,
            d: 0.0,
            treatment_ratio: 0.05,
            span: 3,
            design: SwitchbackDesign::Alternating,
            multipliers: Multipliers::Gaussian,
        }
    }
}

impl SequentialDgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days < 2 {
            return Err(Error::invalid("n_days", "must be at least 2"));
        }
        if self.m < 1 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        if !(self.treatment_ratio >= 0.0 && self.treatment_ratio.is_finite()) {
            return Err(Error::invalid(
                "treatment_ratio",
                "must be finite and non-negative",
            ));
        }
        if !(self.d.is_finite() && self.d > -1.0) {
            return Err(Error::invalid("d", "must be a finite number above -1"));
        }
        self.behavior().map(|_| ())
    }

    pub fn behavior(&self) -> Result<BehaviorPolicy> {
        BehaviorPolicy::switchback(self.span, 0.5, self.design)
    }
}

/// Choose δ1, δ2 so that the direct effect (through γ_t) and the carryover
/// effect (through Γ_t) each equal `ratio / 2` times the baseline return.
/// Both effects are linear in their δ, so each is solved exactly from the
/// model's own backward induction.
pub fn calibrate_effects(
    model: &LinearMdpModel,
    ratio: f64,
) -> Result<(f64, f64, TreatmentEffects)> {
    let none = TreatmentEffects::none(model.horizon(), model.state_dim());
    let baseline = model.policy_value(&none, Arm::Control);
    if baseline.abs() <= 1e-12 || baseline.is_nan() {
        return Err(Error::Calibration("baseline return is zero".into()));
    }
    let direct = model.true_ate(&model.scaled_effects(1.0, 0.0));
    let carry = model.true_ate(&model.scaled_effects(0.0, 1.0));
    if direct.abs() < 1e-12 || carry.abs() < 1e-12 {
        return Err(Error::Calibration(
            "treatment terms have no effect on the return".into(),
        ));
    }
    let target = ratio / 2.0 * baseline;
    let (d1, d2) = (target / direct, target / carry);
    Ok((d1, d2, model.scaled_effects(d1, d2)))
}

struct DayDraw {
    source: usize,
    xi: f64,
}

fn draw_day(
    model: &LinearMdpModel,
    multipliers: Multipliers,
    rng: &mut (impl Rng + ?Sized),
) -> DayDraw {
    let source = rng.random_range(0..model.n_days());
    let xi = match multipliers {
        Multipliers::Gaussian => std_normal(rng),
        Multipliers::Zero => 0.0,
    };
    DayDraw { source, xi }
}

/// One pseudo day. `experimental` switches on the reward shift and noise
/// inflation; `choose` picks A_t from (t, A_{t-1}, S_t).
fn rollout(
    model: &LinearMdpModel,
    effects: &TreatmentEffects,
    day: &DayDraw,
    shift: f64,
    inflation: f64,
    mut choose: impl FnMut(usize, Option<Arm>, &[f64]) -> Arm,
) -> Result<Episode> {
    let horizon = model.horizon();
    let mut s = model.initial_states[day.source].clone();
    let mut prev = None;
    let mut steps = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let a = choose(t, prev, &s);
        let ab = a.bit() as f64;
        let r = model.mean_reward_fn(t, &s)
            + effects.reward[t - 1] * ab
            + shift
            + inflation * day.xi * model.reward_residuals[day.source][t - 1];
        let next: Vec<f64> = model
            .mean_next_state_fn(t, &s)
            .into_iter()
            .enumerate()
            .map(|(j, m)| {
                m + effects.state[t - 1][j] * ab
                    + day.xi * model.state_residuals[day.source][t - 1][j]
            })
            .collect();
        steps.push(Step {
            context: ContextVector::new(s)?,
            action: a,
            reward: r,
        });
        prev = Some(a);
        s = next;
    }
    Episode::new(steps, ContextVector::new(s)?)
}

/// Residual bootstrap: resample source days with replacement, draw one
/// multiplier per day, and rebuild rewards and states from the fitted model.
/// Experimental days follow the switchback schedule and get the reward
/// shift b_h and noise factor (1 + d); historical days are all control.
pub fn bootstrap_generate(
    model: &LinearMdpModel,
    effects: &TreatmentEffects,
    cfg: &SequentialDgpConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Result<SequentialDataset> {
    cfg.validate()?;
    if model.n_days() == 0 || model.reward_residuals.is_empty() {
        return Err(Error::EmptyDataset("residual bank"));
    }
    let behavior = cfg.behavior()?;
    let mut exp = Vec::with_capacity(cfg.n_days);
    for _ in 0..cfg.n_days {
        let day = draw_day(model, cfg.multipliers, rng);
        let ep = rollout(model, effects, &day, cfg.b_h, 1.0 + cfg.d, |t, prev, s| {
            let p = behavior.treat_prob(t, prev, s);
            if rng.random_bool(p) {
                Arm::Treatment
            } else {
                Arm::Control
            }
        })?;
        exp.push(ep);
    }
    let mut hist = Vec::with_capacity(cfg.m * cfg.n_days);
    for _ in 0..cfg.m * cfg.n_days {
        let day = draw_day(model, cfg.multipliers, rng);
        hist.push(rollout(model, effects, &day, 0.0, 1.0, |_, _, _| {
            Arm::Control
        })?);
    }
    SequentialDataset::new(exp, hist)
}

/// Monte Carlo mean return of always-treat and always-control on common
/// bootstrap draws.
pub fn on_policy_values(
    model: &LinearMdpModel,
    effects: &TreatmentEffects,
    n_days: usize,
    multipliers: Multipliers,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(f64, f64)> {
    let (mut v0, mut v1) = (0.0, 0.0);
    for _ in 0..n_days {
        let day = draw_day(model, multipliers, rng);
        v0 += rollout(model, effects, &day, 0.0, 1.0, |_, _, _| Arm::Control)?.total_reward();
        v1 += rollout(model, effects, &day, 0.0, 1.0, |_, _, _| Arm::Treatment)?.total_reward();
    }
    Ok((v0 / n_days as f64, v1 / n_days as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::replication_rng;

    #[test]
    fn noiseless_fit_recovers_truth() {
        let cfg = BaseMdpConfig {
            horizon: 3,
            n_days: 12,
            state_dim: 2,
            noise_sd: 0.0,
        };
        // noiseless states collapse onto a line after one step, so perturb
        // only the initial state
        let (eps, truth) = gen_synthetic_base_mdp(&cfg, &mut replication_rng(1, 0, 0)).unwrap();
        let err = fit_linear_mdp(&eps);
        // deterministic transitions from random starts keep full rank
        let fit = err.unwrap();
        for t in 0..3 {
            assert!((fit.reward[t].intercept - truth.reward[t].intercept).abs() < 1e-8);
            for j in 0..2 {
                assert!(
                    (fit.transition[t][j].slopes[j] - truth.transition[t][j].slopes[j]).abs()
                        < 1e-8
                );
            }
        }
        assert!(fit
            .reward_residuals
            .iter()
            .flatten()
            .all(|r| r.abs() < 1e-8));
    }

    #[test]
    fn residual_means_vanish() {
        let (eps, _) = gen_synthetic_base_mdp(
            &BaseMdpConfig {
                horizon: 4,
                n_days: 30,
                ..Default::default()
            },
            &mut replication_rng(2, 0, 0),
        )
        .unwrap();
        let fit = fit_linear_mdp(&eps).unwrap();
        for t in 0..4 {
            let m: f64 = fit.reward_residuals.iter().map(|r| r[t]).sum::<f64>() / 30.0;
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn calibration_hits_ratio_exactly() {
        let (_, truth) =
            gen_synthetic_base_mdp(&BaseMdpConfig::default(), &mut replication_rng(3, 0, 0))
                .unwrap();
        let (_, _, eff) = calibrate_effects(&truth, 0.05).unwrap();
        let none = TreatmentEffects::none(truth.horizon(), truth.state_dim());
        let base = truth.policy_value(&none, Arm::Control);
        assert!((truth.true_ate(&eff) / base - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_multipliers_follow_the_mean() {
        let (_, truth) = gen_synthetic_base_mdp(
            &BaseMdpConfig {
                horizon: 6,
                n_days: 10,
                ..Default::default()
            },
            &mut replication_rng(4, 0, 0),
        )
        .unwrap();
        let (_, _, eff) = calibrate_effects(&truth, 0.1).unwrap();
        let cfg = SequentialDgpConfig {
            n_days: 5,
            b_h: 0.7,
            multipliers: Multipliers::Zero,
            ..Default::default()
        };
        let data = bootstrap_generate(&truth, &eff, &cfg, &mut replication_rng(4, 0, 1)).unwrap();
        for ep in data.experimental() {
            for (i, st) in ep.steps().iter().enumerate() {
                let t = i + 1;
                let want = truth.mean_reward_fn(t, ep.state(t))
                    + eff.reward[i] * st.action.bit() as f64
                    + 0.7;
                assert!((st.reward - want).abs() < 1e-12);
            }
        }
    }
}
