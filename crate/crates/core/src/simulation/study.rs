//! Monte Carlo MSE and coverage studies over a grid of (b_h, d, m) cells.
//!
//! Every (cell, replication) pair draws from its own RNG stream and runs on
//! the rayon pool; results are collected in grid order and reduced
//! sequentially, so the report does not depend on the worker count.

use std::fmt::Write as _;

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SequentialDataset;
use crate::error::{Error, Result};
use crate::nuisance::{SequentialNuisanceSpec, StaticNuisanceSpec, SwitchbackDesign};
use crate::sequential_estimators::{estimate_seq, moment_estimates_seq};
use crate::static_estimators::{
    classify_regime, estimate, moment_estimates, EstimateReport, Method, Regime,
};

use super::mdp::{
    bootstrap_generate, calibrate_effects, fit_linear_mdp, gen_synthetic_base_mdp, BaseMdpConfig,
    LinearMdpModel, Multipliers, SequentialDgpConfig, TreatmentEffects,
};
use super::oracle::{median, oracle_from_errors, see_term, BaseErrors, Oracle};
use super::rng::replication_rng;
use super::static_dgp::{
    gen_clinical, gen_static_example1, ClinicalConfig, Design, StaticDgpConfig, EXAMPLE1_ATE,
};

/// Stream reserved for building the shared base world of sequential studies.
const BASE_STREAM: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Example1Dgp {
    pub n_e: usize,
    pub design: Design,
}

impl Default for Example1Dgp {
    fn default() -> Self {
        Self {
            n_e: 48,
            design: Design::Switchback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClinicalDgp {
    pub n_e: usize,
    pub gamma: f64,
}

impl Default for ClinicalDgp {
    fn default() -> Self {
        let c = ClinicalConfig::default();
        Self {
            n_e: c.n_e,
            gamma: c.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialStudyDgp {
    pub horizon: usize,
    pub state_dim: usize,
    /// Days in the synthetic base dataset the bootstrap world is fitted to.
    pub n_days_base: usize,
    pub noise_sd: f64,
    /// Experimental days per replication.
    pub n_days: usize,
    pub treatment_ratio: f64,
    pub span: usize,
    pub design: SwitchbackDesign,
    pub multipliers: Multipliers,
}

impl Default for SequentialStudyDgp {
    fn default() -> Self {
        let b = BaseMdpConfig::default();
        let s = SequentialDgpConfig::default();
        Self {
            horizon: b.horizon,
            state_dim: b.state_dim,
            n_days_base: b.n_days,
            noise_sd: b.noise_sd,
            n_days: s.n_days,
            treatment_ratio: s.treatment_ratio,
            span: s.span,
            design: s.design,
            multipliers: s.multipliers,
        }
    }
}

/// Data-generating process of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StudyDgp {
    Example1(Example1Dgp),
    Clinical(ClinicalDgp),
    Sequential(SequentialStudyDgp),
}

impl Default for StudyDgp {
    fn default() -> Self {
        StudyDgp::Example1(Example1Dgp::default())
    }
}

impl StudyDgp {
    pub fn is_sequential(&self) -> bool {
        matches!(self, StudyDgp::Sequential(_))
    }

    fn design_label(&self) -> String {
        match self {
            StudyDgp::Example1(c) => c.design.to_string(),
            StudyDgp::Clinical(_) => Design::Random.to_string(),
            StudyDgp::Sequential(_) => Design::Switchback.to_string(),
        }
    }
}

pub fn default_static_b_h_grid() -> Vec<f64> {
    (0..=15).map(|k| k as f64 / 10.0).collect()
}

pub fn default_sequential_b_h_grid() -> Vec<f64> {
    (0..8).map(|k| 0.3 * k as f64 / 7.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub dgp: StudyDgp,
    /// Defaults depend on whether the DGP is sequential.
    pub b_h: Option<Vec<f64>>,
    pub d: Vec<f64>,
    pub m: Vec<usize>,
    pub methods: Option<Vec<Method>>,
    pub replications: usize,
    pub master_seed: u64,
    pub alpha: f64,
    /// Learn weights on one half of each replication, evaluate on the other.
    pub split: bool,
    pub static_nuisance: StaticNuisanceSpec,
    pub sequential_nuisance: SequentialNuisanceSpec,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dgp: StudyDgp::default(),
            b_h: None,
            d: vec![0.0],
            m: vec![2],
            methods: None,
            replications: 100,
            master_seed: 0,
            alpha: 0.05,
            split: false,
            static_nuisance: StaticNuisanceSpec::default(),
            sequential_nuisance: SequentialNuisanceSpec::default(),
        }
    }
}

impl StudyConfig {
    pub fn b_h_grid(&self) -> Vec<f64> {
        match (&self.b_h, self.dgp.is_sequential()) {
            (Some(g), _) => g.clone(),
            (None, false) => default_static_b_h_grid(),
            (None, true) => default_sequential_b_h_grid(),
        }
    }

    pub fn method_list(&self) -> Vec<Method> {
        match &self.methods {
            Some(m) => m.clone(),
            None if self.dgp.is_sequential() => {
                vec![Method::Edo, Method::NonPessi, Method::Pessi, Method::Hybrid]
            }
            None => vec![
                Method::Edo,
                Method::NonPessi,
                Method::Pessi,
                Method::Hybrid,
                Method::Spe,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        let grid = self.b_h_grid();
        if grid.is_empty() || self.d.is_empty() || self.m.is_empty() {
            return Err(Error::invalid("grid", "b_h, d and m must be non-empty"));
        }
        if grid.iter().chain(&self.d).any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid", "values must be finite"));
        }
        let methods = self.method_list();
        if methods.is_empty() {
            return Err(Error::invalid("methods", "must be non-empty"));
        }
        if self.dgp.is_sequential() && methods.contains(&Method::Spe) {
            return Err(Error::invalid(
                "methods",
                "spe is only defined for non-dynamic data",
            ));
        }
        let n_cells = grid.len() * self.d.len() * self.m.len();
        if n_cells >= BASE_STREAM as usize || self.replications > u32::MAX as usize {
            return Err(Error::invalid("grid", "too many cells or replications"));
        }
        for &m in &self.m {
            for &d in &self.d {
                self.cell_static(0.0, d, m)
                    .map(|c| c.validate())
                    .transpose()?;
                if let StudyDgp::Sequential(s) = &self.dgp {
                    if s.horizon < 2 {
                        return Err(Error::invalid("horizon", "must be at least 2"));
                    }
                    sequential_cfg(s, 0.0, d, m).validate()?;
                }
            }
        }
        Ok(())
    }

    fn cell_static(&self, b_h: f64, d: f64, m: usize) -> Option<StaticDgpConfig> {
        match self.dgp {
            StudyDgp::Example1(c) => Some(StaticDgpConfig {
                n_e: c.n_e,
                m,
                b_h,
                d,
                design: c.design,
            }),
            StudyDgp::Clinical(c) => Some(StaticDgpConfig {
                n_e: c.n_e,
                m,
                b_h,
                d,
                design: Design::Random,
            }),
            StudyDgp::Sequential(_) => None,
        }
    }
}

fn sequential_cfg(s: &SequentialStudyDgp, b_h: f64, d: f64, m: usize) -> SequentialDgpConfig {
    SequentialDgpConfig {
        n_days: s.n_days,
        m,
        b_h,
        d,
        treatment_ratio: s.treatment_ratio,
        span: s.span,
        design: s.design,
        multipliers: s.multipliers,
    }
}

/// Bootstrap world shared by every cell of a sequential study.
#[derive(Debug, Clone)]
pub struct SequentialWorld {
    pub model: LinearMdpModel,
    pub effects: TreatmentEffects,
    pub ate: f64,
}

pub fn build_sequential_world(s: &SequentialStudyDgp, master_seed: u64) -> Result<SequentialWorld> {
    let base = BaseMdpConfig {
        horizon: s.horizon,
        n_days: s.n_days_base,
        state_dim: s.state_dim,
        noise_sd: s.noise_sd,
    };
    let (episodes, _) =
        gen_synthetic_base_mdp(&base, &mut replication_rng(master_seed, BASE_STREAM, 0))?;
    let model = fit_linear_mdp(&episodes)?;
    let (_, _, effects) = calibrate_effects(&model, s.treatment_ratio)?;
    let ate = model.true_ate(&effects);
    Ok(SequentialWorld {
        model,
        effects,
        ate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    b_h: f64,
    d: f64,
    m: usize,
}

struct Replication {
    base: BaseErrors,
    b_hat: f64,
    reports: Vec<EstimateReport>,
}

/// Summary of one method in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mse: f64,
    pub mse_se: f64,
    pub bias2: f64,
    pub variance: f64,
    /// Mean of the per-replication spurious estimation error terms.
    pub see: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub squared_errors: Vec<f64>,
    pub see_terms: Vec<f64>,
}

impl MethodSummary {
    pub fn median_see(&self) -> f64 {
        median(&self.see_terms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub b_h: f64,
    pub d: f64,
    pub m: usize,
    pub design: String,
    pub replications: usize,
    pub truth: f64,
    /// Population value of τ_e − τ_h.
    pub true_bias: f64,
    /// Replication standard deviation of the full-sample b̂.
    pub sd_b: f64,
    pub n_min: usize,
    pub regime: Regime,
    pub oracle: Oracle,
    pub oracle_squared_errors: Vec<f64>,
    pub methods: Vec<MethodSummary>,
}

impl CellSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseStudyReport {
    pub master_seed: u64,
    pub cells: Vec<CellSummary>,
}

pub const MSE_CSV_HEADER: &str =
    "method,b_h,d,m,design,replications,mse,mse_se,bias2,variance,regime,see,oracle_mse";
pub const COVERAGE_CSV_HEADER: &str = "method,b_h,d,m,replications,coverage,mean_ci_length";

impl MseStudyReport {
    pub fn cell(&self, b_h: f64, d: f64, m: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.b_h == b_h && c.d == d && c.m == m)
    }

    pub fn to_mse_csv(&self) -> String {
        let mut out = String::from(MSE_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            for s in &c.methods {
                let _ = writeln!(
                    out,
                    "{},{:?},{:?},{},{},{},{:?},{:?},{:?},{:?},{},{:?},{:?}",
                    s.method,
                    c.b_h,
                    c.d,
                    c.m,
                    c.design,
                    c.replications,
                    s.mse,
                    s.mse_se,
                    s.bias2,
                    s.variance,
                    c.regime,
                    s.see,
                    c.oracle.oracle_mse
                );
            }
        }
        out
    }

    pub fn to_coverage_csv(&self) -> String {
        let mut out = String::from(COVERAGE_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            for s in &c.methods {
                let _ = writeln!(
                    out,
                    "{},{:?},{:?},{},{},{:?},{:?}",
                    s.method, c.b_h, c.d, c.m, c.replications, s.coverage, s.mean_ci_length
                );
            }
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn summarize(
    method: Method,
    idx: usize,
    reps: &[Replication],
    truth: f64,
    true_bias: f64,
    oracle: &Oracle,
) -> MethodSummary {
    let taus: Vec<f64> = reps.iter().map(|r| r.reports[idx].tau_hat).collect();
    let sq: Vec<f64> = taus.iter().map(|t| (t - truth).powi(2)).collect();
    let n = reps.len() as f64;
    let mse = mean(&sq);
    let mse_se = if reps.len() < 2 {
        0.0
    } else {
        (sq.iter().map(|x| (x - mse).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    };
    let tbar = mean(&taus);
    let see_terms: Vec<f64> = reps
        .iter()
        .map(|r| {
            see_term(
                oracle.w_star,
                r.reports[idx].weight,
                r.reports[idx].bias_hat,
                true_bias,
            )
        })
        .collect();
    MethodSummary {
        method,
        mse,
        mse_se,
        bias2: (tbar - truth).powi(2),
        variance: taus.iter().map(|t| (t - tbar).powi(2)).sum::<f64>() / n,
        see: mean(&see_terms),
        coverage: reps.iter().filter(|r| r.reports[idx].covers(truth)).count() as f64 / n,
        mean_ci_length: mean(
            &reps
                .iter()
                .map(|r| r.reports[idx].ci_upper - r.reports[idx].ci_lower)
                .collect::<Vec<_>>(),
        ),
        squared_errors: sq,
        see_terms,
    }
}

struct Runner<'a> {
    cfg: &'a StudyConfig,
    methods: Vec<Method>,
    world: Option<SequentialWorld>,
}

impl Runner<'_> {
    fn truth(&self) -> f64 {
        match (&self.cfg.dgp, &self.world) {
            (StudyDgp::Example1(_), _) => EXAMPLE1_ATE,
            (StudyDgp::Clinical(c), _) => ClinicalConfig {
                gamma: c.gamma,
                ..Default::default()
            }
            .true_ate(),
            (StudyDgp::Sequential(_), Some(w)) => w.ate,
            (StudyDgp::Sequential(_), None) => unreachable!("world is built before running"),
        }
    }

    fn true_bias(&self, cell: Cell) -> f64 {
        match &self.cfg.dgp {
            StudyDgp::Sequential(s) => -(s.horizon as f64) * cell.b_h,
            _ => -cell.b_h,
        }
    }

    fn n_min(&self) -> usize {
        match &self.cfg.dgp {
            StudyDgp::Example1(c) => c.n_e,
            StudyDgp::Clinical(c) => c.n_e,
            StudyDgp::Sequential(s) => s.n_days,
        }
    }

    fn replicate(&self, idx: u32, cell: Cell, rep: u32) -> Result<Replication> {
        let mut rng = replication_rng(self.cfg.master_seed, idx, rep);
        let truth = self.truth();
        let alpha = self.cfg.alpha;
        match &self.cfg.dgp {
            StudyDgp::Sequential(s) => {
                let world = self.world.as_ref().expect("world is built before running");
                let dgp = sequential_cfg(s, cell.b_h, cell.d, cell.m);
                let data: SequentialDataset =
                    bootstrap_generate(&world.model, &world.effects, &dgp, &mut rng)?;
                let split = self.cfg.split.then(|| rng.random::<u64>());
                let nu = self.cfg.sequential_nuisance.fit(&data, &dgp.behavior()?)?;
                let full = moment_estimates_seq(&data, &nu)?;
                let reports = self
                    .methods
                    .iter()
                    .map(|&m| estimate_seq(&data, &nu, m, alpha, split))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Replication {
                    base: BaseErrors {
                        x: full.tau_e - truth,
                        y: full.tau_h - truth,
                    },
                    b_hat: full.b_hat,
                    reports,
                })
            }
            StudyDgp::Example1(_) | StudyDgp::Clinical(_) => {
                let sc = self
                    .cfg
                    .cell_static(cell.b_h, cell.d, cell.m)
                    .expect("static dgp");
                let data = match &self.cfg.dgp {
                    StudyDgp::Clinical(c) => gen_clinical(
                        &ClinicalConfig {
                            n_e: c.n_e,
                            m: cell.m,
                            b_h: cell.b_h,
                            d: cell.d,
                            gamma: c.gamma,
                        },
                        &mut rng,
                    )?,
                    _ => gen_static_example1(&sc, &mut rng)?,
                };
                let split = self.cfg.split.then(|| rng.random::<u64>());
                let nu = self
                    .cfg
                    .static_nuisance
                    .fit(data.experimental(), data.historical())?;
                let full = moment_estimates(&data, &nu)?;
                let reports = self
                    .methods
                    .iter()
                    .map(|&m| estimate(&data, &nu, m, alpha, split))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Replication {
                    base: BaseErrors {
                        x: full.tau_e - truth,
                        y: full.tau_h - truth,
                    },
                    b_hat: full.b_hat,
                    reports,
                })
            }
        }
    }
}

/// Run every replication of every cell and aggregate per method.
pub fn run_mse_study(cfg: &StudyConfig) -> Result<MseStudyReport> {
    cfg.validate()?;
    let world = match &cfg.dgp {
        StudyDgp::Sequential(s) => Some(build_sequential_world(s, cfg.master_seed)?),
        _ => None,
    };
    let runner = Runner {
        cfg,
        methods: cfg.method_list(),
        world,
    };
    let mut cells = Vec::new();
    for &m in &cfg.m {
        for &d in &cfg.d {
            for b_h in cfg.b_h_grid() {
                cells.push(Cell { b_h, d, m });
            }
        }
    }
    let jobs: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications as u32).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Replication>> = jobs
        .par_iter()
        .map(|&(c, r)| runner.replicate(c as u32, cells[c], r))
        .collect();
    let mut results = results.into_iter();
    let truth = runner.truth();
    let mut out = Vec::with_capacity(cells.len());
    for &cell in &cells {
        let reps = results
            .by_ref()
            .take(cfg.replications)
            .collect::<Result<Vec<_>>>()?;
        let errors: Vec<BaseErrors> = reps.iter().map(|r| r.base).collect();
        let oracle = oracle_from_errors(&errors)?;
        let true_bias = runner.true_bias(cell);
        let b_bar = mean(&reps.iter().map(|r| r.b_hat).collect::<Vec<_>>());
        let sd_b = (reps.iter().map(|r| (r.b_hat - b_bar).powi(2)).sum::<f64>()
            / reps.len() as f64)
            .sqrt();
        let n_min = runner.n_min();
        out.push(CellSummary {
            b_h: cell.b_h,
            d: cell.d,
            m: cell.m,
            design: cfg.dgp.design_label(),
            replications: cfg.replications,
            truth,
            true_bias,
            sd_b,
            n_min,
            regime: classify_regime(true_bias.abs(), sd_b, n_min),
            oracle_squared_errors: errors.iter().map(|e| oracle.squared_error(*e)).collect(),
            methods: runner
                .methods
                .iter()
                .enumerate()
                .map(|(i, &m)| summarize(m, i, &reps, truth, true_bias, &oracle))
                .collect(),
            oracle,
        });
    }
    Ok(MseStudyReport {
        master_seed: cfg.master_seed,
        cells: out,
    })
}

/// Same replications as [`run_mse_study`]; callers read the coverage and
/// CI-length columns.
pub fn run_coverage_study(cfg: &StudyConfig) -> Result<MseStudyReport> {
    run_mse_study(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(reps: usize) -> StudyConfig {
        StudyConfig {
            b_h: Some(vec![0.0, 1.5]),
            methods: Some(vec![Method::Edo, Method::NonPessi]),
            replications: reps,
            master_seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn single_replication_mse_is_the_squared_error() {
        let r = run_mse_study(&small(1)).unwrap();
        for c in &r.cells {
            for s in &c.methods {
                assert_eq!(s.mse, s.squared_errors[0]);
                assert_eq!(s.variance, 0.0);
                assert_eq!(s.mse_se, 0.0);
            }
        }
    }

    #[test]
    fn mse_splits_into_bias_and_variance() {
        let r = run_mse_study(&small(20)).unwrap();
        for c in &r.cells {
            for s in &c.methods {
                assert!((s.mse - s.bias2 - s.variance).abs() < 1e-10 * (1.0 + s.mse));
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_method_and_cell() {
        let r = run_mse_study(&small(3)).unwrap();
        let csv = r.to_mse_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(csv.starts_with(MSE_CSV_HEADER));
        assert_eq!(r.to_coverage_csv().lines().count(), 5);
    }

    #[test]
    fn sequential_rejects_spe() {
        let cfg = StudyConfig {
            dgp: StudyDgp::Sequential(SequentialStudyDgp::default()),
            methods: Some(vec![Method::Spe]),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_grids() {
        assert_eq!(default_static_b_h_grid().len(), 16);
        let g = default_sequential_b_h_grid();
        assert_eq!(g.len(), 8);
        assert!((g[7] - 0.3).abs() < 1e-15);
    }
}
