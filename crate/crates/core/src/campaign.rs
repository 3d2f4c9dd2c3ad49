//! Reproducible experiment campaigns: table replication, hyperparameter
//! sweeps, real-map construction, PPT-square batches, plus validation of
//! found maps and CSV export of traces.
//!
//! Every run is keyed by an explicit seed (`base_seed + global run index`)
//! and persists `record.csv`, `config.json`, and (on success) `choi.json`
//! under `runs/<experiment>/<seed>/`, so summaries are recomputable from the
//! artifacts alone.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choi::{
    block_positivity_probe, builtin_mask, load_mask, random_mask, save_choi, ChoiMatrix,
    ChoiParams, Mask,
};
use crate::error::{Error, Result};
use crate::gen::{ppt_square_run, PptSquareConfig, PptSquareRecord};
use crate::optim::{train_loop, LossConfig, LossMode, Outcome, RunRecord, TrainConfig};
use crate::sdp::{zeta1, zeta_k, ExtendSide, SolverOptions};
use crate::tensor::min_eig;

/// How a campaign picks its Choi mask.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MaskSpec {
    Builtin { builtin: String },
    File { path: String },
    Random { density: f64, mask_seed: u64 },
}

impl MaskSpec {
    pub fn build(&self, n: usize) -> Result<Mask> {
        match self {
            MaskSpec::Builtin { builtin } => {
                let m = builtin_mask(builtin)?;
                if m.dim() != n {
                    return Err(Error::Dimension(format!(
                        "builtin mask '{builtin}' has dim {}, campaign needs {n}",
                        m.dim()
                    )));
                }
                Ok(m)
            }
            MaskSpec::File { path } => {
                let (m, _, _) = load_mask(Path::new(path))?;
                if m.dim() != n {
                    return Err(Error::Dimension(format!(
                        "mask file '{path}' has dim {}, campaign needs {n}",
                        m.dim()
                    )));
                }
                Ok(m)
            }
            MaskSpec::Random { density, mask_seed } => random_mask(n, *density, *mask_seed),
        }
    }
}

/// Declarative campaign description (also the JSON file format).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub experiment: String,
    pub d: usize,
    pub d_out: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub runs: usize,
    /// Grid values; the campaign runs every (ε, γ) combination.
    pub epsilon: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub train: TrainConfig,
    pub base_seed: u64,
    #[serde(default)]
    pub extend_side: ExtendSide,
    #[serde(default)]
    pub tp: bool,
    #[serde(default)]
    pub real: bool,
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default = "default_mode")]
    pub mode: LossMode,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
}

fn default_k() -> usize {
    2
}

fn default_mode() -> LossMode {
    LossMode::Main
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Input("run count must be >= 1".into()));
        }
        if self.epsilon.is_empty() || self.gamma.is_empty() {
            return Err(Error::Input("hyperparameter grids must be non-empty".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: CampaignSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    fn loss_config(&self, epsilon: f64, gamma: f64) -> LossConfig {
        let mut cfg = LossConfig {
            epsilon,
            gamma,
            k: self.k,
            mode: self.mode,
            ..Default::default()
        };
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(o) = self.omega {
            cfg.omega = o;
        }
        if let Some(n) = self.nu {
            cfg.nu = n;
        }
        cfg
    }
}

/// Aggregate of one grid cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellSummary {
    pub d: usize,
    pub d_out: usize,
    pub k: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean epoch of first zero loss, over successful runs.
    pub ase_mean: f64,
    pub ase_std: f64,
    pub mean_wall_s: f64,
    /// Wilson 95% interval for the success probability.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub experiment: String,
    pub cells: Vec<CellSummary>,
}

fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

impl CampaignSummary {
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "d,d_out,k,epsilon,gamma,runs,successes,success_rate,ase_mean,ase_std,mean_wall_s,ci_low,ci_high\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.d,
                c.d_out,
                c.k,
                c.epsilon,
                c.gamma,
                c.runs,
                c.successes,
                c.success_rate,
                c.ase_mean,
                c.ase_std,
                c.mean_wall_s,
                c.ci_low,
                c.ci_high
            ));
        }
        out
    }

    /// Comparable view with wall-clock columns removed (wall time is the one
    /// field that cannot reproduce across reruns).
    pub fn deterministic_view(&self) -> String {
        let mut out = String::from(
            "d,d_out,k,epsilon,gamma,runs,successes,success_rate,ase_mean,ase_std\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.d,
                c.d_out,
                c.k,
                c.epsilon,
                c.gamma,
                c.runs,
                c.successes,
                c.success_rate,
                c.ase_mean,
                c.ase_std
            ));
        }
        out
    }
}

/// JSON sidecar persisted next to every run's CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSidecar {
    pub experiment: String,
    pub d: usize,
    pub d_out: usize,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub extend_side: ExtendSide,
    pub tp: bool,
    pub real: bool,
    pub mask: Option<MaskSpec>,
    pub outcome: Outcome,
    pub success_epoch: Option<usize>,
    pub epochs_run: usize,
    pub final_zeta1: Option<f64>,
    pub final_zetak: Option<f64>,
}

/// Result of one campaign run, including everything needed for export.
#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub epsilon: f64,
    pub gamma: f64,
    pub seed: u64,
    pub record: RunRecord,
}

fn persist_run(
    dir: &Path,
    spec: &CampaignSpec,
    loss: &LossConfig,
    train: &TrainConfig,
    seed: u64,
    record: &RunRecord,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("record.csv"), record.csv())?;
    let last = record.rows.last();
    let sidecar = RunSidecar {
        experiment: spec.experiment.clone(),
        d: spec.d,
        d_out: spec.d_out,
        loss: *loss,
        train: *train,
        seed,
        extend_side: spec.extend_side,
        tp: spec.tp,
        real: spec.real,
        mask: spec.mask.clone(),
        outcome: record.outcome,
        success_epoch: record.success_epoch,
        epochs_run: record.rows.len(),
        final_zeta1: last.map(|r| r.zeta1),
        final_zetak: last.map(|r| r.zetak),
    };
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    if record.outcome == Outcome::Success {
        save_choi(&record.final_choi, &dir.join("choi.json"))?;
    }
    Ok(())
}

/// Execute every run of the campaign grid; runs are scheduled in parallel,
/// aggregation is ordered by seed so the summary is deterministic.
pub fn run_campaign(
    spec: &CampaignSpec,
    solver_opts: &SolverOptions,
    out_dir: Option<&Path>,
) -> Result<(CampaignSummary, Vec<CampaignRun>)> {
    spec.validate()?;
    let mut solver_opts = solver_opts.clone();
    solver_opts.extend_side = spec.extend_side;

    // global run numbering keeps seeds unique across grid cells
    let mut jobs = Vec::new();
    let mut idx = 0u64;
    for &eps in &spec.epsilon {
        for &gam in &spec.gamma {
            for _ in 0..spec.runs {
                jobs.push((eps, gam, spec.base_seed + idx));
                idx += 1;
            }
        }
    }

    let results: Vec<Result<CampaignRun>> = jobs
        .par_iter()
        .map(|&(eps, gam, seed)| {
            let loss = spec.loss_config(eps, gam);
            let mut train = spec.train;
            train.seed = seed;
            let mut params = ChoiParams::random(spec.d, spec.d_out, seed);
            if let Some(ms) = &spec.mask {
                params = params.with_mask(ms.build(spec.d * spec.d_out)?)?;
            }
            params = params.with_flags(spec.tp, spec.real);
            let record = train_loop(&params, &loss, &train, &solver_opts)?;
            if let Some(root) = out_dir {
                let dir = root
                    .join("runs")
                    .join(&spec.experiment)
                    .join(seed.to_string());
                persist_run(&dir, spec, &loss, &train, seed, &record)?;
            }
            Ok(CampaignRun {
                epsilon: eps,
                gamma: gam,
                seed,
                record,
            })
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    runs.sort_by(|a, b| a.seed.cmp(&b.seed));

    let summary = summarize(spec, &runs);
    if let Some(root) = out_dir {
        let dir = root.join("runs").join(&spec.experiment);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("summary.csv"), summary.csv())?;
        std::fs::write(
            dir.join("campaign.json"),
            serde_json::to_string_pretty(spec)?,
        )?;
    }
    Ok((summary, runs))
}

fn summarize(spec: &CampaignSpec, runs: &[CampaignRun]) -> CampaignSummary {
    let mut cells = Vec::new();
    for &eps in &spec.epsilon {
        for &gam in &spec.gamma {
            let cell_runs: Vec<&CampaignRun> = runs
                .iter()
                .filter(|r| r.epsilon == eps && r.gamma == gam)
                .collect();
            let successes: Vec<usize> = cell_runs
                .iter()
                .filter_map(|r| r.record.success_epoch)
                .collect();
            let n_success = successes.len();
            let ase_mean = if n_success > 0 {
                successes.iter().sum::<usize>() as f64 / n_success as f64
            } else {
                f64::NAN
            };
            let ase_std = if n_success > 1 {
                let m = ase_mean;
                (successes
                    .iter()
                    .map(|&e| (e as f64 - m).powi(2))
                    .sum::<f64>()
                    / (n_success - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            let total_wall: f64 = cell_runs
                .iter()
                .map(|r| r.record.rows.iter().map(|row| row.wall_s).sum::<f64>())
                .sum();
            let (ci_low, ci_high) = wilson_interval(n_success, cell_runs.len());
            cells.push(CellSummary {
                d: spec.d,
                d_out: spec.d_out,
                k: spec.k,
                epsilon: eps,
                gamma: gam,
                runs: cell_runs.len(),
                successes: n_success,
                success_rate: n_success as f64 / cell_runs.len().max(1) as f64,
                ase_mean,
                ase_std,
                mean_wall_s: total_wall / cell_runs.len().max(1) as f64,
                ci_low,
                ci_high,
            });
        }
    }
    CampaignSummary {
        experiment: spec.experiment.clone(),
        cells,
    }
}

/// Tolerances applied by [`validate_found_map`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValidationTolerances {
    pub cert_tol: f64,
    pub tp_tol: f64,
    pub probe_tol: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances {
            cert_tol: 1e-7,
            tp_tol: 1e-12,
            probe_tol: 1e-6,
        }
    }
}

/// Full validation report of a candidate map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub zeta1: f64,
    /// `−ζ₁`, the non-decomposability margin.
    pub margin: f64,
    pub zetak: f64,
    pub k: usize,
    pub lambda_min: f64,
    pub lambda_min_pt: f64,
    pub probe_min: f64,
    pub tp_residual: f64,
    pub max_abs_im: f64,
    pub mask_residual: Option<f64>,
    pub non_decomposable: bool,
    pub positive_on_relaxation: bool,
    pub tolerances: ValidationTolerances,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "zeta1            = {:+.9}", self.zeta1)?;
        writeln!(f, "zeta{}            = {:+.9}", self.k, self.zetak)?;
        writeln!(f, "lambda_min(C)    = {:+.9}", self.lambda_min)?;
        writeln!(f, "lambda_min(C^Tb) = {:+.9}", self.lambda_min_pt)?;
        writeln!(f, "probe_min        = {:+.9}", self.probe_min)?;
        writeln!(f, "tp_residual      = {:.3e}", self.tp_residual)?;
        writeln!(f, "max|Im C|        = {:.3e}", self.max_abs_im)?;
        if let Some(mr) = self.mask_residual {
            writeln!(f, "mask_residual    = {:.3e}", mr)?;
        }
        writeln!(
            f,
            "non-decomposable = {} (margin {:+.3e})",
            self.non_decomposable, self.margin
        )?;
        write!(
            f,
            "positive on k={} relaxation = {}",
            self.k, self.positive_on_relaxation
        )
    }
}

/// Evaluate every certificate and sanity diagnostic on a map.
pub fn validate_found_map(
    c: &ChoiMatrix,
    k: usize,
    opts: &SolverOptions,
    tol: &ValidationTolerances,
    probe_samples: usize,
    probe_iters: usize,
    probe_seed: u64,
) -> Result<ValidationReport> {
    let z1 = zeta1(c, opts)?;
    let zk = zeta_k(c, k, opts)?;
    let (lmin, _) = min_eig(c.herm())?;
    let (lmin_pt, _) = min_eig(&c.partial_transpose_out())?;
    let (probe_min, _) = block_positivity_probe(c, probe_samples, probe_iters, probe_seed)?;
    Ok(ValidationReport {
        zeta1: z1.value,
        margin: -z1.value,
        zetak: zk.value,
        k,
        lambda_min: lmin,
        lambda_min_pt: lmin_pt,
        probe_min,
        tp_residual: c.tp_residual(),
        max_abs_im: c.herm().max_abs_im(),
        mask_residual: None,
        non_decomposable: z1.value < -tol.cert_tol,
        positive_on_relaxation: zk.value >= -tol.cert_tol,
        tolerances: *tol,
    })
}

/// Largest |entry| of the Choi matrix outside the mask support.
pub fn mask_residual(c: &ChoiMatrix, mask: &Mask) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..c.dim() {
        for cc in 0..c.dim() {
            if !mask.keep[(r, cc)] {
                worst = worst.max(c.mat()[(r, cc)].norm());
            }
        }
    }
    worst
}

/// Real-map construction campaign on dimensions (2, m) with the real flag.
///
/// For m ≤ 3 every positive map is decomposable and the search is vacuous,
/// so those dimensions are rejected.
pub fn real_map_campaign(
    m: usize,
    runs: usize,
    masks: &[Option<MaskSpec>],
    base_seed: u64,
    train: &TrainConfig,
    solver_opts: &SolverOptions,
    out_dir: Option<&Path>,
) -> Result<Vec<(Option<MaskSpec>, CampaignSummary, Vec<CampaignRun>)>> {
    if m < 4 {
        return Err(Error::Input(format!(
            "real non-decomposable maps on (2, m) need m >= 4; every positive \
             map is decomposable for m = {m}"
        )));
    }
    let mut out = Vec::new();
    for (i, mask) in masks.iter().enumerate() {
        let spec = CampaignSpec {
            experiment: format!("real-2x{m}-mask{i}"),
            d: 2,
            d_out: m,
            k: 2,
            runs,
            epsilon: vec![0.05],
            gamma: vec![2.0],
            train: *train,
            base_seed: base_seed + (i as u64) * runs as u64,
            extend_side: ExtendSide::Auto,
            tp: false,
            real: true,
            mask: mask.clone(),
            mode: LossMode::Main,
            delta: None,
            omega: None,
            nu: None,
        };
        let (summary, runs_out) = run_campaign(&spec, solver_opts, out_dir)?;
        out.push((mask.clone(), summary, runs_out));
    }
    Ok(out)
}

/// Long-format CSV export of the loss/ζ traces plus the per-run diagnostic
/// columns (epoch at which ζ_k first became non-negative, last epoch at
/// which ζ₁ sat below −ε).
pub fn export_plot_data(experiment: &str, runs: &[CampaignRun]) -> (String, String) {
    let mut traces =
        String::from("experiment,epsilon,gamma,seed,epoch,loss,zeta1,zetak\n");
    let mut diag = String::from(
        "experiment,epsilon,gamma,seed,first_epoch_zetak_nonneg,last_epoch_zeta1_below_neg_eps\n",
    );
    for run in runs {
        for row in &run.record.rows {
            traces.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                experiment, run.epsilon, run.gamma, run.seed, row.epoch, row.loss, row.zeta1,
                row.zetak
            ));
        }
        let first_zetak = run
            .record
            .rows
            .iter()
            .find(|r| r.zetak >= 0.0)
            .map(|r| r.epoch.to_string())
            .unwrap_or_default();
        let last_zeta1 = run
            .record
            .rows
            .iter()
            .rev()
            .find(|r| r.zeta1 <= -run.epsilon)
            .map(|r| r.epoch.to_string())
            .unwrap_or_default();
        diag.push_str(&format!(
            "{},{},{},{},{},{}\n",
            experiment, run.epsilon, run.gamma, run.seed, first_zetak, last_zeta1
        ));
    }
    (traces, diag)
}

/// Batch of PPT-square searches; summaries stay flag-only (a violation would
/// be a research finding to inspect, not an assertion failure).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PptSquareRunSummary {
    pub seed: u64,
    pub final_zeta1_composition: f64,
    pub final_ppt_penalty: f64,
    pub final_zetak_t1: f64,
    pub violation_candidate: bool,
    pub outcome: Outcome,
}

pub fn ppt_square_campaign(
    cfg: &PptSquareConfig,
    runs: usize,
    base_seed: u64,
    train: &TrainConfig,
    solver_opts: &SolverOptions,
    out_dir: Option<&Path>,
) -> Result<Vec<(PptSquareRunSummary, PptSquareRecord)>> {
    let mut solver_opts = solver_opts.clone();
    solver_opts.extend_side = ExtendSide::Auto;
    let seeds: Vec<u64> = (0..runs as u64).map(|i| base_seed + i).collect();
    let results: Vec<Result<(PptSquareRunSummary, PptSquareRecord)>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut t = *train;
            t.seed = seed;
            let rec = ppt_square_run(cfg, &t, &solver_opts)?;
            let summary = PptSquareRunSummary {
                seed,
                final_zeta1_composition: rec.final_zeta1_composition,
                final_ppt_penalty: rec.final_ppt_penalty,
                final_zetak_t1: rec.final_zetak_t1,
                violation_candidate: rec.violation_candidate,
                outcome: rec.outcome,
            };
            if let Some(root) = out_dir {
                let dir = root.join("runs").join("pptsq").join(seed.to_string());
                std::fs::create_dir_all(&dir)?;
                let record = RunRecord {
                    rows: rec.rows.clone(),
                    outcome: rec.outcome,
                    success_epoch: None,
                    final_choi: rec.choi_t1.clone(),
                };
                std::fs::write(dir.join("record.csv"), record.csv())?;
                std::fs::write(
                    dir.join("config.json"),
                    serde_json::to_string_pretty(&serde_json::json!({
                        "harness": cfg,
                        "train": t,
                        "summary": summary,
                    }))?,
                )?;
                save_choi(&rec.choi_t1, &dir.join("choi_t1.json"))?;
                save_choi(&rec.choi_t2, &dir.join("choi_t2.json"))?;
            }
            Ok((summary, rec))
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    out.sort_by_key(|(s, _)| s.seed);
    Ok(out)
}

/// Artifact paths of one persisted run.
pub fn run_artifact_dir(root: &Path, experiment: &str, seed: u64) -> PathBuf {
    root.join("runs").join(experiment).join(seed.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_interval_sane() {
        let (lo, hi) = wilson_interval(0, 20);
        assert!(lo == 0.0 && hi < 0.2);
        let (lo, hi) = wilson_interval(20, 20);
        assert!(lo > 0.8 && hi == 1.0);
        let (lo, hi) = wilson_interval(10, 20);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn campaign_spec_json_roundtrip() {
        let spec = CampaignSpec {
            experiment: "t".into(),
            d: 3,
            d_out: 3,
            k: 2,
            runs: 2,
            epsilon: vec![0.05],
            gamma: vec![2.0],
            train: TrainConfig::default(),
            base_seed: 5,
            extend_side: ExtendSide::Auto,
            tp: false,
            real: false,
            mask: Some(MaskSpec::Builtin {
                builtin: "family9".into(),
            }),
            mode: LossMode::Main,
            delta: None,
            omega: None,
            nu: None,
        };
        let s = serde_json::to_string(&spec).unwrap();
        let back = CampaignSpec::from_json(&s).unwrap();
        assert_eq!(back.experiment, "t");
        assert_eq!(back.mask, spec.mask);
    }

    #[test]
    fn export_plot_data_empty_and_counting() {
        let (traces, diag) = export_plot_data("x", &[]);
        assert_eq!(traces.lines().count(), 1);
        assert_eq!(diag.lines().count(), 1);
    }

    #[test]
    fn real_map_campaign_rejects_small_m() {
        let err = real_map_campaign(
            3,
            1,
            &[None],
            0,
            &TrainConfig::default(),
            &SolverOptions::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn validation_of_identity_choi() {
        let c = crate::choi::identity_choi(2);
        let rep = validate_found_map(
            &c,
            2,
            &SolverOptions::default(),
            &ValidationTolerances::default(),
            50,
            5,
            1,
        )
        .unwrap();
        assert!(!rep.non_decomposable);
        assert!(rep.positive_on_relaxation);
        assert!(rep.zeta1.abs() < 1e-6);
        assert!(rep.lambda_min >= -1e-10);
        let s = format!("{rep}");
        assert!(s.contains("non-decomposable = false"));
    }
}
