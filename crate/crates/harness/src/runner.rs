//! Seeded experiment sweeps.
//!
//! A run enumerates cells (dataset x method x noise point x lambda x seed),
//! computes each cell deterministically, and writes `results.csv`,
//! `summary.csv`, and (on cell failures) `errors.log`. Cells are batched by
//! (dataset, seed) so fitted predictors and mechanisms are shared within a
//! block; blocks execute in parallel and rows are emitted in enumeration
//! order, so output is identical regardless of the job count.

use crate::config::{CgmKind, ExperimentConfig, MethodConfig, PredictorKind, UEstimatorKind};
use anyhow::{anyhow, Context, Result};
use cfsim_core::cgm::{Cgm, UEstimator};
use cfsim_core::methods::{FairMethod, MethodKind};
use cfsim_core::metrics::{self, EvalReport};
use cfsim_core::predictors::{crm_augment, AuxInputs, FeatureMap, Predictor, TrainConfig};
use cfsim_core::rng::{derive_seed, fold_seed};
use cfsim_core::scm::{fmt_f64, AnalyticMode, Dataset, ScmSpec};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// One evaluated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub predictor: String,
    pub cgm: String,
    pub alpha: f64,
    pub beta: f64,
    pub eps0: f64,
    pub lambda: f64,
    pub seed: u64,
    pub error: f64,
    pub te: f64,
    pub te0: f64,
    pub te1: f64,
    /// Zero-one error for classification tasks (JSON output only; the CSV
    /// column set is fixed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_zero_one: Option<f64>,
}

pub const RESULT_HEADER: &str = "dataset,method,predictor,cgm,alpha,beta,eps0,lambda,seed,error,te,te0,te1";

impl ResultRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.method,
            self.predictor,
            self.cgm,
            self.alpha,
            self.beta,
            self.eps0,
            self.lambda,
            self.seed,
            fmt_f64(self.error),
            fmt_f64(self.te),
            fmt_f64(self.te0),
            fmt_f64(self.te1),
        )
    }
}

/// A failed cell, kept apart from the result rows.
#[derive(Debug, Clone, Serialize)]
pub struct CellError {
    pub cell: String,
    pub message: String,
}

/// Output of [`run`]: rows in enumeration order plus any per-cell failures.
#[derive(Debug, Clone)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<CellError>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NoisePoint {
    beta: f64,
    alpha: f64,
    eps0: f64,
}

const NO_NOISE: NoisePoint = NoisePoint { beta: 0.0, alpha: 0.0, eps0: 0.0 };

/// Cell addresses for one (dataset, seed) block, in enumeration order.
#[derive(Debug, Clone)]
struct CellSpec {
    index: usize,
    method: MethodConfig,
    noise: NoisePoint,
    lambda: f64,
}

fn noise_points(cfg: &ExperimentConfig, m: &MethodConfig) -> Vec<NoisePoint> {
    match (m.uses_gaussian_noise(), m.uses_bounded_noise()) {
        (false, false) => vec![NO_NOISE],
        (true, false) => cfg
            .noise
            .gaussian
            .iter()
            .map(|g| NoisePoint { beta: g.beta, alpha: g.alpha, eps0: 0.0 })
            .collect(),
        (false, true) => cfg
            .noise
            .eps0
            .iter()
            .map(|&e| NoisePoint { beta: 0.0, alpha: 0.0, eps0: e })
            .collect(),
        (true, true) => {
            let mut out = Vec::new();
            for g in &cfg.noise.gaussian {
                for &e in &cfg.noise.eps0 {
                    out.push(NoisePoint { beta: g.beta, alpha: g.alpha, eps0: e });
                }
            }
            out
        }
    }
}

/// Runs the full sweep. `jobs = 0` uses all available cores.
pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Result<ResultTable> {
    cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    let methods: Vec<MethodConfig> = cfg
        .methods
        .iter()
        .map(|m| m.normalized())
        .collect::<Result<_>>()?;

    // Enumerate cells: dataset x method x noise x lambda x seed; the seed is
    // the innermost axis so blocks own contiguous index ranges per (dataset,
    // seed) pair only after regrouping.
    struct Block {
        dataset: String,
        spec: ScmSpec,
        seed: u64,
        cells: Vec<CellSpec>,
    }
    let mut blocks: HashMap<(usize, u64), Block> = HashMap::new();
    let mut index = 0usize;
    for (d_idx, dref) in cfg.datasets.iter().enumerate() {
        let (name, spec) = dref.resolve()?;
        for m in &methods {
            for noise in noise_points(cfg, m) {
                for &lambda in &m.lambdas {
                    for &seed in &cfg.seeds {
                        let block = blocks.entry((d_idx, seed)).or_insert_with(|| Block {
                            dataset: name.clone(),
                            spec: spec.clone(),
                            seed,
                            cells: Vec::new(),
                        });
                        block.cells.push(CellSpec {
                            index,
                            method: m.clone(),
                            noise,
                            lambda,
                        });
                        index += 1;
                    }
                }
            }
        }
    }
    let total_cells = index;
    let mut block_list: Vec<Block> = blocks.into_values().collect();
    block_list.sort_by(|a, b| a.cells[0].index.cmp(&b.cells[0].index));

    let train_cfg = cfg.train_config();
    let run_block = |block: &Block| -> Vec<(usize, std::result::Result<ResultRow, CellError>)> {
        let mut ctx = BlockContext::new(&block.dataset, &block.spec, block.seed, cfg, &train_cfg);
        block
            .cells
            .iter()
            .map(|cell| {
                let outcome = ctx.evaluate(cell).map_err(|e| CellError {
                    cell: ctx.cell_id(cell),
                    message: e.to_string(),
                });
                (cell.index, outcome)
            })
            .collect()
    };

    let nested: Vec<Vec<(usize, std::result::Result<ResultRow, CellError>)>> = if jobs == 1 {
        block_list.iter().map(run_block).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building thread pool")?;
        pool.install(|| {
            use rayon::prelude::*;
            block_list.par_iter().map(run_block).collect()
        })
    };

    let mut slots: Vec<Option<std::result::Result<ResultRow, CellError>>> =
        (0..total_cells).map(|_| None).collect();
    for (idx, outcome) in nested.into_iter().flatten() {
        slots[idx] = Some(outcome);
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for slot in slots {
        match slot.expect("every cell evaluated") {
            Ok(row) => rows.push(row),
            Err(e) => errors.push(e),
        }
    }
    Ok(ResultTable { rows, errors })
}

/// Per-(dataset, seed) working state: sampled data and fitted components,
/// cached so cells sharing a predictor or mechanism fit it once.
struct BlockContext<'a> {
    dataset: &'a str,
    spec: &'a ScmSpec,
    seed: u64,
    n_test_task: cfsim_core::scm::Task,
    train: Result<Dataset, cfsim_core::Error>,
    test: Result<Dataset, cfsim_core::Error>,
    train_cfg: &'a TrainConfig,
    cgms: HashMap<String, Arc<Cgm>>,
    u_ests: HashMap<String, Arc<UEstimator>>,
    predictors: HashMap<String, Arc<Predictor>>,
}

impl<'a> BlockContext<'a> {
    fn new(
        dataset: &'a str,
        spec: &'a ScmSpec,
        seed: u64,
        cfg: &ExperimentConfig,
        train_cfg: &'a TrainConfig,
    ) -> Self {
        let train = spec.sample(cfg.n_train, derive_seed(seed, &format!("train/{dataset}")));
        let test = spec.sample(cfg.n_test, derive_seed(seed, &format!("test/{dataset}")));
        Self {
            dataset,
            spec,
            seed,
            n_test_task: spec.task,
            train,
            test,
            train_cfg,
            cgms: HashMap::new(),
            u_ests: HashMap::new(),
            predictors: HashMap::new(),
        }
    }

    fn cell_id(&self, cell: &CellSpec) -> String {
        format!(
            "{}/{}/{}/{}/alpha={}/beta={}/eps0={}/lambda={}/seed={}",
            self.dataset,
            cell.method.kind.name(),
            cell.method.predictor_label(),
            cell.method.cgm_label(),
            cell.noise.alpha,
            cell.noise.beta,
            cell.noise.eps0,
            cell.lambda,
            self.seed
        )
    }

    fn train_data(&self) -> Result<&Dataset, cfsim_core::Error> {
        self.train.as_ref().map_err(clone_core_err)
    }

    fn cgm_for(&mut self, kind: CgmKind, noise: NoisePoint) -> anyhow::Result<Arc<Cgm>> {
        let key = match kind {
            CgmKind::NoisyOracle => format!(
                "noisy/{}/{}",
                noise.beta.to_bits(),
                noise.alpha.to_bits()
            ),
            CgmKind::BoundedNoisyOracle => format!("bounded/{}", noise.eps0.to_bits()),
            other => other.name().to_string(),
        };
        if let Some(g) = self.cgms.get(&key) {
            return Ok(g.clone());
        }
        let oracle = Cgm::oracle(self.spec.clone())?;
        let g = match kind {
            CgmKind::Oracle => oracle,
            CgmKind::NoisyOracle => Cgm::noisy(
                oracle,
                noise.beta,
                noise.alpha,
                fold_seed(
                    derive_seed(self.seed, &format!("cgm-noisy/{}", self.dataset)),
                    [noise.beta.to_bits(), noise.alpha.to_bits()],
                ),
            )?,
            CgmKind::BoundedNoisyOracle => Cgm::bounded_noisy(
                oracle,
                noise.eps0,
                fold_seed(
                    derive_seed(self.seed, &format!("cgm-bounded/{}", self.dataset)),
                    [noise.eps0.to_bits()],
                ),
            )?,
            CgmKind::MeanShift => Cgm::fit_mean_shift(self.train_data()?)?,
            CgmKind::RankPreserving => Cgm::fit_rank(self.train_data()?)?,
        };
        let g = Arc::new(g);
        self.cgms.insert(key, g.clone());
        Ok(g)
    }

    fn u_est_for(&mut self, kind: UEstimatorKind, noise: NoisePoint) -> anyhow::Result<Arc<UEstimator>> {
        let key = match kind {
            UEstimatorKind::Noisy => format!(
                "noisy/{}/{}",
                noise.beta.to_bits(),
                noise.alpha.to_bits()
            ),
            UEstimatorKind::Oracle => "oracle".to_string(),
            UEstimatorKind::MeanShiftResidual => "mean_shift_residual".to_string(),
        };
        if let Some(e) = self.u_ests.get(&key) {
            return Ok(e.clone());
        }
        let est = match kind {
            UEstimatorKind::Oracle => UEstimator::OracleU,
            UEstimatorKind::Noisy => UEstimator::noisy(
                noise.beta,
                noise.alpha,
                fold_seed(
                    derive_seed(self.seed, &format!("uest-noisy/{}", self.dataset)),
                    [noise.beta.to_bits(), noise.alpha.to_bits()],
                ),
            )?,
            UEstimatorKind::MeanShiftResidual => {
                UEstimator::fit_mean_shift_residual(self.train_data()?)?
            }
        };
        let est = Arc::new(est);
        self.u_ests.insert(key, est.clone());
        Ok(est)
    }

    /// Fits (or reuses) the base predictor a method needs.
    fn predictor_for(
        &mut self,
        m: &MethodConfig,
        noise: NoisePoint,
        cgm: Option<&Arc<Cgm>>,
        u_est: Option<&Arc<UEstimator>>,
    ) -> anyhow::Result<Arc<Predictor>> {
        let map = match m.kind {
            MethodKind::Cfu => FeatureMap::UOnly,
            MethodKind::Cfr => FeatureMap::SymXU,
            _ => FeatureMap::Xa,
        };
        if m.predictor == PredictorKind::Analytic {
            let mode = m.analytic_mode.unwrap_or(AnalyticMode::ClosedForm);
            let key = format!("analytic/{mode:?}");
            if let Some(p) = self.predictors.get(&key) {
                return Ok(p.clone());
            }
            let p = Arc::new(Predictor::analytic(self.spec, mode)?);
            self.predictors.insert(key, p.clone());
            return Ok(p);
        }

        let crm = m.kind == MethodKind::PcfCrm;
        let mut key = format!("{:?}/{map:?}/crm={crm}", m.predictor);
        if map != FeatureMap::Xa || crm {
            // Feature construction (or augmentation) depends on the fitted
            // estimates, so the cache key carries the noise point.
            write!(
                key,
                "/cgm={}/uest={:?}/beta={}/alpha={}/eps0={}",
                m.cgm_label(),
                m.u_estimator,
                noise.beta.to_bits(),
                noise.alpha.to_bits(),
                noise.eps0.to_bits()
            )
            .expect("string write");
        }
        if let Some(p) = self.predictors.get(&key) {
            return Ok(p.clone());
        }

        let train = self.train_data()?.clone();
        let augmented;
        let data: &Dataset = if crm {
            let g = cgm.ok_or_else(|| anyhow!("counterfactual training needs a mechanism"))?;
            augmented = crm_augment(&train, g);
            &augmented
        } else {
            &train
        };
        let aux: Vec<AuxInputs> = match map {
            FeatureMap::Xa => Vec::new(),
            FeatureMap::UOnly => {
                let est = u_est.ok_or_else(|| anyhow!("u-only features need an estimator"))?;
                data.records
                    .iter()
                    .map(|r| {
                        Ok(AuxInputs { u_hat: Some(est.estimate(r)?), x_cf_hat: None })
                    })
                    .collect::<Result<_, cfsim_core::Error>>()?
            }
            FeatureMap::SymXU => {
                let est = u_est.ok_or_else(|| anyhow!("symmetrized features need an estimator"))?;
                let g = cgm.ok_or_else(|| anyhow!("symmetrized features need a mechanism"))?;
                data.records
                    .iter()
                    .map(|r| {
                        Ok(AuxInputs {
                            u_hat: Some(est.estimate(r)?),
                            x_cf_hat: Some(g.counterfactual(&r.x, r.a, 1 - r.a)),
                        })
                    })
                    .collect::<Result<_, cfsim_core::Error>>()?
            }
        };
        let mut cfg = self.train_cfg.clone();
        cfg.seed = derive_seed(self.seed, &format!("fit/{}/{key}", self.dataset));
        let task = self.spec.task;
        let fitted = match m.predictor {
            PredictorKind::Knn => Predictor::fit_knn(data, map, &aux, task, &cfg)?,
            PredictorKind::Mlp => Predictor::fit_mlp(data, map, &aux, task, &cfg)?,
            PredictorKind::Analytic => unreachable!("handled above"),
        };
        let p = Arc::new(fitted);
        self.predictors.insert(key, p.clone());
        Ok(p)
    }

    /// Plain `(x, a)` baseline of the same predictor family, for mixing.
    fn baseline_for(&mut self, m: &MethodConfig) -> anyhow::Result<Arc<Predictor>> {
        let base_cfg = MethodConfig {
            kind: MethodKind::Erm,
            predictor: m.predictor,
            analytic_mode: m.analytic_mode,
            cgm: None,
            u_estimator: None,
            lambdas: vec![1.0],
        };
        self.predictor_for(&base_cfg, NO_NOISE, None, None)
    }

    fn evaluate(&mut self, cell: &CellSpec) -> anyhow::Result<ResultRow> {
        let m = &cell.method;
        let cgm = match m.cgm {
            Some(kind) => Some(self.cgm_for(kind, cell.noise)?),
            None => None,
        };
        let u_est = match m.u_estimator {
            Some(kind) => Some(self.u_est_for(kind, cell.noise)?),
            None => None,
        };
        let phi = self.predictor_for(m, cell.noise, cgm.as_ref(), u_est.as_ref())?;

        // Analytic runs use the true group prior; trained runs use the
        // empirical training frequency.
        let p_a = if m.kind == MethodKind::PcfAna {
            self.spec.p_a
        } else {
            self.train_data()?.empirical_p_a()
        };

        let mut method = FairMethod::new(
            m.kind,
            (*phi).clone(),
            cgm.as_deref().cloned(),
            u_est.as_deref().cloned(),
            p_a,
            cell.lambda,
        )?;
        if cell.lambda < 1.0 && m.kind != MethodKind::Erm {
            method = method.with_erm_baseline((*self.baseline_for(m)?).clone());
        }

        let test = self.test.as_ref().map_err(clone_core_err)?;
        let report: EvalReport =
            metrics::evaluate(|r| method.predict(r), test, self.n_test_task)?;
        Ok(ResultRow {
            dataset: self.dataset.to_string(),
            method: m.kind.name().to_string(),
            predictor: m.predictor_label(),
            cgm: m.cgm_label(),
            alpha: cell.noise.alpha,
            beta: cell.noise.beta,
            eps0: cell.noise.eps0,
            lambda: cell.lambda,
            seed: self.seed,
            error: report.error,
            te: report.te,
            te0: report.te0,
            te1: report.te1,
            error_zero_one: report.error_zero_one,
        })
    }
}

fn clone_core_err(e: &cfsim_core::Error) -> cfsim_core::Error {
    cfsim_core::Error::InvalidParameter(e.to_string())
}

/// Renders `results.csv` with the fixed column set.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Per-cell means and sample standard deviations across seeds, keyed by every
/// non-seed axis, in first-appearance order.
pub fn summary_csv(rows: &[ResultRow]) -> String {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let key = format!(
            "{},{},{},{},{},{},{},{}",
            r.dataset, r.method, r.predictor, r.cgm, r.alpha, r.beta, r.eps0, r.lambda
        );
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut out = String::from(
        "dataset,method,predictor,cgm,alpha,beta,eps0,lambda,n_seeds,\
         error_mean,error_std,te_mean,te_std,te0_mean,te0_std,te1_mean,te1_std",
    );
    out.push('\n');
    for key in order {
        let rows = &groups[&key];
        let stats = |f: fn(&ResultRow) -> f64| {
            let vals: Vec<f64> = rows.iter().map(|r| f(r)).collect();
            let mean = metrics::pairwise_sum(&vals) / vals.len() as f64;
            let std = if vals.len() < 2 {
                0.0
            } else {
                let sq: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
                (metrics::pairwise_sum(&sq) / (vals.len() - 1) as f64).sqrt()
            };
            (mean, std)
        };
        let (em, es) = stats(|r| r.error);
        let (tm, ts) = stats(|r| r.te);
        let (t0m, t0s) = stats(|r| r.te0);
        let (t1m, t1s) = stats(|r| r.te1);
        out.push_str(&format!(
            "{key},{},{},{},{},{},{},{},{},{}\n",
            rows.len(),
            fmt_f64(em),
            fmt_f64(es),
            fmt_f64(tm),
            fmt_f64(ts),
            fmt_f64(t0m),
            fmt_f64(t0s),
            fmt_f64(t1m),
            fmt_f64(t1s),
        ));
    }
    out
}

/// Output format for `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Writes `results.csv`, `summary.csv`, `errors.log` (only when cells
/// failed), and `results.json` when the JSON format is selected.
pub fn write_outputs(
    table: &ResultTable,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("results.csv"), results_csv(&table.rows))?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&table.rows))?;
    if !table.errors.is_empty() {
        let mut log = String::new();
        for e in &table.errors {
            log.push_str(&format!("{}: {}\n", e.cell, e.message));
        }
        std::fs::write(out_dir.join("errors.log"), log)?;
    }
    if format == OutputFormat::Json {
        let json = serde_json::to_string_pretty(&table.rows)?;
        std::fs::write(out_dir.join("results.json"), json)?;
    }
    Ok(())
}
