use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Episode, SequentialDataset};
use crate::error::{Error, Result};
use crate::linalg::{fit_affine, LinearFn};

use super::static_models::PropensityModel;
use super::DEFAULT_CLIP;

/// Which process a set of value functions describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueTarget {
    /// Experimental process under the constant policy `a`; fitted on steps with A_t = a.
    Arm(Arm),
    /// Historical control process; fitted on all steps.
    Historical,
}

/// Backward recursion: for t = T..1 regress R_t + V_{t+1}(S_{t+1}) on (1, S_t).
/// Returns V_1..V_T; V_{T+1} is zero.
pub fn fit_value_functions(episodes: &[Episode], target: ValueTarget) -> Result<Vec<LinearFn>> {
    let first = episodes.first().ok_or(Error::EmptyDataset("episodes"))?;
    let horizon = first.horizon();
    let dim = first.state_dim();
    let mut out = vec![LinearFn::zero(dim); horizon];
    for t in (1..=horizon).rev() {
        let mut xs: Vec<&[f64]> = Vec::new();
        let mut ys = Vec::new();
        for ep in episodes {
            let step = &ep.steps()[t - 1];
            if let ValueTarget::Arm(a) = target {
                if step.action != a {
                    continue;
                }
            }
            let next = if t == horizon {
                0.0
            } else {
                out[t].eval(ep.state(t + 1))
            };
            xs.push(step.context.as_slice());
            ys.push(step.reward + next);
        }
        let label = match target {
            ValueTarget::Arm(a) => {
                if xs.is_empty() {
                    return Err(Error::NoStepsForArm { arm: a, t });
                }
                format!("value function, arm {a}, t={t}")
            }
            ValueTarget::Historical => format!("historical value function, t={t}"),
        };
        out[t - 1] = fit_affine(&xs, &ys, dim, &label)?;
    }
    Ok(out)
}

/// V^0_{e,t}, V^1_{e,t} and V_{h,t} for t = 1..T (terminal values are zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionSet {
    control: Vec<LinearFn>,
    treatment: Vec<LinearFn>,
    historical: Vec<LinearFn>,
}

impl ValueFunctionSet {
    pub fn new(
        control: Vec<LinearFn>,
        treatment: Vec<LinearFn>,
        historical: Vec<LinearFn>,
    ) -> Result<Self> {
        let t = control.len();
        if t == 0 || treatment.len() != t || historical.len() != t {
            return Err(Error::invalid(
                "value functions",
                "all three sets need the same non-zero horizon",
            ));
        }
        Ok(Self {
            control,
            treatment,
            historical,
        })
    }

    pub fn fit(data: &SequentialDataset) -> Result<Self> {
        Ok(Self {
            control: fit_value_functions(data.experimental(), ValueTarget::Arm(Arm::Control))?,
            treatment: fit_value_functions(data.experimental(), ValueTarget::Arm(Arm::Treatment))?,
            historical: fit_value_functions(data.historical(), ValueTarget::Historical)?,
        })
    }

    pub fn horizon(&self) -> usize {
        self.control.len()
    }

    /// V^a_{e,t}(s), t in 1..=T+1.
    pub fn experimental(&self, arm: Arm, t: usize, s: &[f64]) -> f64 {
        if t > self.horizon() {
            return 0.0;
        }
        match arm {
            Arm::Control => self.control[t - 1].eval(s),
            Arm::Treatment => self.treatment[t - 1].eval(s),
        }
    }

    /// V_{h,t}(s), t in 1..=T+1.
    pub fn historical(&self, t: usize, s: &[f64]) -> f64 {
        if t > self.horizon() {
            0.0
        } else {
            self.historical[t - 1].eval(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchbackDesign {
    /// Fresh Bernoulli(p1) draw at the start of every span.
    Randomized,
    /// Bernoulli(p1) draw for the first span, then the arm flips every span.
    Alternating,
}

/// Behavior policy of the experimental episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BehaviorPolicy {
    /// Independent draw each step from a state-dependent propensity.
    Markov(PropensityModel),
    Switchback {
        span: usize,
        p1: f64,
        design: SwitchbackDesign,
    },
    GlobalControl,
}

impl BehaviorPolicy {
    pub fn switchback(span: usize, p1: f64, design: SwitchbackDesign) -> Result<Self> {
        if span == 0 {
            return Err(Error::invalid("span", "must be at least 1"));
        }
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::invalid(
                "p1",
                format!("must lie in (0, 1), got {p1}"),
            ));
        }
        Ok(BehaviorPolicy::Switchback { span, p1, design })
    }

    /// P(A_t = 1 | A_{t-1} = prev, S_t = s). Steps fixed by the design get
    /// exactly 0 or 1.
    pub fn treat_prob(&self, t: usize, prev: Option<Arm>, s: &[f64]) -> f64 {
        let repeat = |p: Option<Arm>| if p == Some(Arm::Treatment) { 1.0 } else { 0.0 };
        match self {
            BehaviorPolicy::Markov(p) => p.prob(Arm::Treatment, s),
            BehaviorPolicy::GlobalControl => 0.0,
            BehaviorPolicy::Switchback { span, p1, design } => {
                let span_start = (t - 1).is_multiple_of(*span);
                match (design, span_start) {
                    (_, true) if t == 1 => *p1,
                    (SwitchbackDesign::Randomized, true) => *p1,
                    (SwitchbackDesign::Alternating, true) => 1.0 - repeat(prev),
                    (_, false) => repeat(prev),
                }
            }
        }
    }

    /// Probability the behavior policy assigned to `arm` at step `t` of `ep`.
    pub fn step_prob(&self, ep: &Episode, t: usize, arm: Arm) -> f64 {
        let prev = (t > 1).then(|| ep.steps()[t - 2].action);
        let p1 = self.treat_prob(t, prev, ep.state(t));
        match arm {
            Arm::Treatment => p1,
            Arm::Control => 1.0 - p1,
        }
    }
}

/// Zero stays zero (the indicator killed the product); positive values are
/// clipped to `[clip, 1/clip]`.
pub fn clip_ratio(x: f64, clip: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.clamp(clip, 1.0 / clip)
    }
}

/// Cumulative importance ratios Π_{k≤t} 1(A_k = a) / π_k(A_k), unclipped.
pub fn cumulative_is(ep: &Episode, behavior: &BehaviorPolicy, arm: Arm) -> Vec<f64> {
    let mut prod = 1.0;
    ep.steps()
        .iter()
        .enumerate()
        .map(|(i, step)| {
            if step.action != arm {
                prod = 0.0;
            } else if prod > 0.0 {
                prod /= behavior.step_prob(ep, i + 1, arm);
            }
            prod
        })
        .collect()
}

/// Polynomial sieve basis: constant plus s_j^p for p = 1..degree on every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveBasis {
    pub degree: usize,
}

impl Default for SieveBasis {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

impl SieveBasis {
    pub fn dim(&self, state_dim: usize) -> usize {
        1 + state_dim * self.degree
    }

    pub fn features(&self, s: &[f64]) -> DVector<f64> {
        let mut phi = Vec::with_capacity(self.dim(s.len()));
        phi.push(1.0);
        for &x in s {
            let mut pw = 1.0;
            for _ in 0..self.degree {
                pw *= x;
                phi.push(pw);
            }
        }
        DVector::from_vec(phi)
    }
}

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Coefficients γ_t (one per step) of a sieve ratio Φ(s)ᵀγ_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveRatio {
    pub basis: SieveBasis,
    pub gammas: Vec<Vec<f64>>,
}

impl SieveRatio {
    /// Unclipped Φ(s)ᵀγ_t.
    pub fn raw(&self, t: usize, s: &[f64]) -> f64 {
        self.basis
            .features(s)
            .iter()
            .zip(&self.gammas[t - 1])
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// How μ_t^a is evaluated on experimental episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExperimentalRatio {
    CumulativeIs,
    /// Marginal state ratio η_t^a(S_t) times the current-step IS ratio.
    /// Index 0 is control, 1 treatment.
    Sieve([SieveRatio; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HistoricalRatio {
    Constant1,
    Sieve(SieveRatio),
}

/// μ_t^a for experimental episodes and μ_t^h for historical states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRatioSet {
    pub behavior: BehaviorPolicy,
    pub clip: f64,
    pub experimental: ExperimentalRatio,
    pub historical: HistoricalRatio,
}

impl StateRatioSet {
    pub fn cumulative(behavior: BehaviorPolicy, clip: f64) -> Self {
        Self {
            behavior,
            clip,
            experimental: ExperimentalRatio::CumulativeIs,
            historical: HistoricalRatio::Constant1,
        }
    }

    /// μ_t^a(A_t, S_t) for t = 1..T.
    pub fn experimental_ratios(&self, ep: &Episode, arm: Arm) -> Vec<f64> {
        match &self.experimental {
            ExperimentalRatio::CumulativeIs => cumulative_is(ep, &self.behavior, arm)
                .into_iter()
                .map(|x| clip_ratio(x, self.clip))
                .collect(),
            ExperimentalRatio::Sieve(eta) => (1..=ep.horizon())
                .map(|t| {
                    let step = &ep.steps()[t - 1];
                    if step.action != arm {
                        return 0.0;
                    }
                    let rho = 1.0 / self.behavior.step_prob(ep, t, arm);
                    let marginal = eta[arm.index()]
                        .raw(t, ep.state(t))
                        .clamp(self.clip, 1.0 / self.clip);
                    clip_ratio(marginal * rho, self.clip)
                })
                .collect(),
        }
    }

    /// μ_t^h(s), clipped.
    pub fn historical_ratio(&self, t: usize, s: &[f64]) -> f64 {
        match &self.historical {
            HistoricalRatio::Constant1 => 1.0,
            HistoricalRatio::Sieve(r) => r.raw(t, s).clamp(self.clip, 1.0 / self.clip),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentalRatioKind {
    #[default]
    CumulativeIs,
    Sieve,
}

/// Build the μ_t^a part. The sieve variant estimates the marginal state ratio
/// η_t^a recursively: η_1 = 1 and E[η_t Φ(S_t)] = E[η_{t-1} ρ_{t-1} Φ(S_t)].
pub fn state_ratio_experimental(
    episodes: &[Episode],
    behavior: BehaviorPolicy,
    clip: f64,
    kind: ExperimentalRatioKind,
    basis: SieveBasis,
) -> Result<StateRatioSet> {
    let mut set = StateRatioSet::cumulative(behavior, clip);
    if kind == ExperimentalRatioKind::CumulativeIs {
        return Ok(set);
    }
    let first = episodes
        .first()
        .ok_or(Error::EmptyDataset("experimental"))?;
    let horizon = first.horizon();
    let p = basis.dim(first.state_dim());
    let mut e1 = vec![1.0; p];
    e1[1..].iter_mut().for_each(|g| *g = 0.0);
    let fit_arm = |arm: Arm| -> Result<SieveRatio> {
        let mut ratio = SieveRatio {
            basis,
            gammas: vec![e1.clone()],
        };
        let mut eta_prev: Vec<f64> = vec![1.0; episodes.len()];
        for t in 2..=horizon {
            let mut gram = DMatrix::zeros(p, p);
            let mut rhs = DVector::zeros(p);
            for (ep, eta) in episodes.iter().zip(&eta_prev) {
                let phi = basis.features(ep.state(t));
                gram += &phi * phi.transpose();
                let prev = &ep.steps()[t - 2];
                if prev.action == arm {
                    let rho = 1.0 / set.behavior.step_prob(ep, t - 1, arm);
                    rhs += phi * (eta * rho);
                }
            }
            let gamma = solve_ridge(
                gram,
                &rhs,
                episodes.len(),
                &format!("marginal ratio sieve, arm {arm}, t={t}"),
            )?;
            ratio.gammas.push(gamma.iter().copied().collect());
            eta_prev = episodes
                .iter()
                .map(|ep| ratio.raw(t, ep.state(t)).clamp(clip, 1.0 / clip))
                .collect();
        }
        Ok(ratio)
    };
    set.experimental = ExperimentalRatio::Sieve([fit_arm(Arm::Control)?, fit_arm(Arm::Treatment)?]);
    Ok(set)
}

/// Solve (G + ridge I) x = b, then refine against the unregularized G so the
/// returned x satisfies G x = b to solver precision when G is well posed.
fn solve_ridge(
    gram: DMatrix<f64>,
    rhs: &DVector<f64>,
    n: usize,
    what: &str,
) -> Result<DVector<f64>> {
    let p = gram.nrows();
    if p > n {
        return Err(Error::Singular(format!(
            "{what}: basis dimension {p} exceeds {n} observations"
        )));
    }
    let mut reg = gram.clone();
    for i in 0..p {
        reg[(i, i)] += DEFAULT_RIDGE;
    }
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_owned()))?;
    let mut x = chol.solve(rhs);
    for _ in 0..3 {
        let r = rhs - &gram * &x;
        x += chol.solve(&r);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_owned()));
    }
    Ok(x)
}

/// Left- and right-hand sides of the μ^h estimating equation for step k:
/// (1/n_h) ΣΣ_{t≥k} Φ(S_{h,t})Φ(S_{h,t})ᵀ and (1/n_e) ΣΣ_{t≥k} μ^0_t Φ(S_{e,t}).
pub fn mu_h_system(
    data: &SequentialDataset,
    ratios: &StateRatioSet,
    basis: SieveBasis,
    k: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = basis.dim(data.state_dim());
    let horizon = data.horizon();
    let mut gram = DMatrix::zeros(p, p);
    for ep in data.historical() {
        for t in k..=horizon {
            let phi = basis.features(ep.state(t));
            gram += &phi * phi.transpose();
        }
    }
    gram /= data.historical().len() as f64;
    let mut rhs = DVector::zeros(p);
    for ep in data.experimental() {
        let mu0 = ratios.experimental_ratios(ep, Arm::Control);
        for t in k..=horizon {
            if mu0[t - 1] > 0.0 {
                rhs += basis.features(ep.state(t)) * mu0[t - 1];
            }
        }
    }
    rhs /= data.experimental().len() as f64;
    (gram, rhs)
}

/// Sieve estimate of μ_t^h, one γ_k per step k solving the pooled-over-t≥k
/// estimating equation.
pub fn fit_mu_h_sieve(
    data: &SequentialDataset,
    ratios: &StateRatioSet,
    basis: SieveBasis,
) -> Result<SieveRatio> {
    let horizon = data.horizon();
    let mut gammas = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let (gram, rhs) = mu_h_system(data, ratios, basis, k);
        let steps = data.historical().len() * (horizon - k + 1);
        let gamma = solve_ridge(gram, &rhs, steps, &format!("historical ratio sieve, t={k}"))?;
        gammas.push(gamma.iter().copied().collect());
    }
    Ok(SieveRatio { basis, gammas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HistoricalRatioKind {
    #[default]
    Constant1,
    Sieve,
}

/// Value functions plus state ratios: everything the sequential scores need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialNuisance {
    pub values: ValueFunctionSet,
    pub ratios: StateRatioSet,
}

/// How to build the sequential nuisances. The behavior policy is always
/// known (switchback designs are randomized by the experimenter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialNuisanceSpec {
    pub experimental_ratio: ExperimentalRatioKind,
    pub historical_ratio: HistoricalRatioKind,
    pub basis_degree: usize,
    pub clip: f64,
}

impl Default for SequentialNuisanceSpec {
    fn default() -> Self {
        Self {
            experimental_ratio: ExperimentalRatioKind::CumulativeIs,
            historical_ratio: HistoricalRatioKind::Constant1,
            basis_degree: SieveBasis::default().degree,
            clip: DEFAULT_CLIP,
        }
    }
}

impl SequentialNuisanceSpec {
    pub fn fit(
        &self,
        data: &SequentialDataset,
        behavior: &BehaviorPolicy,
    ) -> Result<SequentialNuisance> {
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::invalid(
                "clip",
                format!("must lie in (0, 0.5), got {}", self.clip),
            ));
        }
        let basis = SieveBasis {
            degree: self.basis_degree,
        };
        let values = ValueFunctionSet::fit(data)?;
        let mut ratios = state_ratio_experimental(
            data.experimental(),
            behavior.clone(),
            self.clip,
            self.experimental_ratio,
            basis,
        )?;
        if self.historical_ratio == HistoricalRatioKind::Sieve {
            ratios.historical = HistoricalRatio::Sieve(fit_mu_h_sieve(data, &ratios, basis)?);
        }
        Ok(SequentialNuisance { values, ratios })
    }
}
