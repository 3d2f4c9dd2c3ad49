//! Command-line front end for generating and certifying positive
//! non-decomposable maps.
//!
//! Exit codes: 0 success, 1 input error, 2 search exhausted, 3 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use posmaps::campaign::{
    export_plot_data, mask_residual, ppt_square_campaign, real_map_campaign, run_campaign,
    validate_found_map, CampaignSpec, MaskSpec, ValidationTolerances,
};
use posmaps::choi::{
    self, block_positivity_probe, choi_from_json, family_choi, load_choi, save_choi, ChoiMatrix,
    FamilyParams,
};
use posmaps::gen::{decomposable_choi, train_non_cp_decomposable, PptSquareConfig};
use posmaps::optim::{xi, LossMode, Outcome, TrainConfig};
use posmaps::sdp::{self, ExtendSide, SolverOptions};
use posmaps::tensor::min_eig;
use posmaps::Error;

const EXIT_INPUT: u8 = 1;
const EXIT_EXHAUSTED: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "posmaps",
    version,
    about = "Generate and certify positive non-decomposable linear maps"
)]
struct Cli {
    /// Emit machine-readable JSON reports instead of text.
    #[arg(long, global = true)]
    format_json: bool,

    /// Worker threads for campaign commands (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Feasibility tolerance of the certificate solver.
    #[arg(long, default_value_t = 1e-8)]
    feas_tol: f64,
    /// Duality-gap tolerance of the certificate solver.
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    /// Iteration cap of the certificate solver.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Which subsystem receives the symmetric extension.
    #[arg(long, value_enum, default_value_t = SideArg::Second)]
    extend_side: SideArg,
    /// Cap on the extension-space dimension.
    #[arg(long, default_value_t = 128)]
    max_extension_dim: usize,
}

#[derive(clap::ValueEnum, Clone, Copy, PartialEq, Eq)]
enum SideArg {
    First,
    Second,
    Auto,
}

impl From<SideArg> for ExtendSide {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::First => ExtendSide::First,
            SideArg::Second => ExtendSide::Second,
            SideArg::Auto => ExtendSide::Auto,
        }
    }
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            feasibility_tol: self.feas_tol,
            duality_gap_tol: self.gap_tol,
            max_iterations: self.max_iterations,
            extend_side: self.extend_side.into(),
            max_extension_dim: self.max_extension_dim,
            cert_tol: 1e-7,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a positive non-decomposable map from a random start.
    Generate {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        d_out: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        /// Learning rate of the Adam optimizer.
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Enforce trace preservation structurally.
        #[arg(long)]
        tp: bool,
        /// Restrict to real Choi matrices.
        #[arg(long)]
        real: bool,
        /// Mask file, or builtin name prefixed with "builtin:".
        #[arg(long)]
        mask: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Experiment tag used in the artifact directory layout.
        #[arg(long, default_value = "generate")]
        experiment: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve both certificates for a Choi matrix file.
    Certify {
        path: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Full validation report (certificates, spectra, block-positivity probe).
    Validate {
        path: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 10000)]
        probe_samples: usize,
        #[arg(long, default_value_t = 20)]
        probe_iters: usize,
        #[arg(long, default_value_t = 1)]
        probe_seed: u64,
        /// Mask file to check structural zeros against.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Build a member of the masked 9x9 family.
    Family {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        c: f64,
        /// Complex value, e.g. "0.5" or "0.5-0.25j".
        #[arg(long, default_value = "0")]
        w: String,
        #[arg(long, default_value = "0")]
        z: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the trace bound for 2-positive TP maps on a Choi file.
    Bound { path: PathBuf },
    /// Compose two maps (applies the second file's map first).
    Compose {
        path1: PathBuf,
        path2: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a decomposable (but not completely positive) map.
    Decomposable {
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// Ancilla dimension of the dilations (defaults to d).
        #[arg(long)]
        ancilla: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the PPT-square composition search.
    Pptsq {
        #[arg(long, default_value_t = 4)]
        d_big: usize,
        #[arg(long, default_value_t = 2)]
        d_mid: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, default_value_t = 400)]
        epochs: usize,
        #[arg(long, default_value_t = 300)]
        polish_epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 10.0)]
        ppt_weight: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run a campaign described by a JSON spec file.
    Sweep {
        spec: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also export long-format trace CSVs.
        #[arg(long)]
        export_traces: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the real-map construction campaign on dimensions (2, m).
    RealMaps {
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn parse_complex(s: &str) -> Result<C64, Error> {
    let t = s.trim().replace(' ', "");
    if t.is_empty() {
        return Err(Error::Input("empty complex literal".into()));
    }
    if let Ok(re) = t.parse::<f64>() {
        return Ok(C64::new(re, 0.0));
    }
    if !t.ends_with('j') && !t.ends_with('i') {
        return Err(Error::Input(format!("cannot parse complex value '{s}'")));
    }
    let body = &t[..t.len() - 1];
    // split at the sign of the imaginary part (skip a leading sign and signs
    // inside exponents)
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    match split {
        Some(i) => {
            let re: f64 = body[..i]
                .parse()
                .map_err(|_| Error::Input(format!("cannot parse complex value '{s}'")))?;
            let im_str = &body[i..];
            let im: f64 = if im_str == "+" {
                1.0
            } else if im_str == "-" {
                -1.0
            } else {
                im_str
                    .parse()
                    .map_err(|_| Error::Input(format!("cannot parse complex value '{s}'")))?
            };
            Ok(C64::new(re, im))
        }
        None => {
            // purely imaginary
            let im: f64 = if body.is_empty() || body == "+" {
                1.0
            } else if body == "-" {
                -1.0
            } else {
                body.parse()
                    .map_err(|_| Error::Input(format!("cannot parse complex value '{s}'")))?
            };
            Ok(C64::new(0.0, im))
        }
    }
}

fn config_hash<T: serde::Serialize>(cfg: &T) -> String {
    let json = serde_json::to_string(cfg).unwrap_or_default();
    let digest = Sha256::digest(json.as_bytes());
    hex_prefix(&digest, 12)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::new();
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

fn repro_header(seed: Option<u64>, hash: &str) {
    let seed_str = seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
    eprintln!(
        "posmaps {} | seed {} | config {}",
        env!("CARGO_PKG_VERSION"),
        seed_str,
        hash
    );
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Solver(_) | Error::Eigensolver(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn load_choi_or_exit(path: &PathBuf) -> Result<ChoiMatrix, u8> {
    match load_choi(path) {
        Ok(c) => Ok(c),
        Err(e) => {
            eprintln!("error: cannot load '{}': {e}", path.display());
            Err(EXIT_INPUT)
        }
    }
}

fn main() -> ExitCode {
    // deterministic single-threaded BLAS; parallelism comes from the
    // campaign scheduler instead
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot configure {jobs} jobs: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let json = cli.format_json;
    match run(cli.command, json) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn run(cmd: Command, json: bool) -> Result<u8, Error> {
    match cmd {
        Command::Generate {
            d,
            d_out,
            k,
            epsilon,
            gamma,
            lr,
            epochs,
            seed,
            tp,
            real,
            mask,
            out,
            experiment,
            solver,
        } => {
            let mask_spec = match mask {
                Some(m) => Some(match m.strip_prefix("builtin:") {
                    Some(name) => MaskSpec::Builtin {
                        builtin: name.to_string(),
                    },
                    None => {
                        if !std::path::Path::new(&m).exists() {
                            return Err(Error::Input(format!("mask file '{m}' not found")));
                        }
                        MaskSpec::File { path: m }
                    }
                }),
                None => None,
            };
            let spec = CampaignSpec {
                experiment,
                d,
                d_out,
                k,
                runs: 1,
                epsilon: vec![epsilon],
                gamma: vec![gamma],
                train: TrainConfig {
                    learning_rate: lr,
                    max_epochs: epochs,
                    seed,
                    ..Default::default()
                },
                base_seed: seed,
                extend_side: solver.extend_side.into(),
                tp,
                real,
                mask: mask_spec,
                mode: LossMode::Main,
                delta: None,
                omega: None,
                nu: None,
            };
            repro_header(Some(seed), &config_hash(&spec));
            let (summary, runs) = run_campaign(&spec, &solver.options(), Some(&out))?;
            let run = &runs[0];
            let rec = &run.record;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "outcome": rec.outcome,
                        "success_epoch": rec.success_epoch,
                        "epochs_run": rec.rows.len(),
                        "final_zeta1": rec.rows.last().map(|r| r.zeta1),
                        "final_zetak": rec.rows.last().map(|r| r.zetak),
                        "artifacts": out.join("runs").join(&summary.experiment).join(seed.to_string()),
                    })
                );
            } else {
                match rec.outcome {
                    Outcome::Success => println!(
                        "success at epoch {} (zeta1 = {:.6}, zeta{k} = {:.6})",
                        rec.success_epoch.unwrap(),
                        rec.rows.last().unwrap().zeta1,
                        rec.rows.last().unwrap().zetak,
                    ),
                    Outcome::Exhausted => println!(
                        "exhausted after {} epochs (last loss {:.6})",
                        rec.rows.len(),
                        rec.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
                    ),
                    Outcome::SolverFailed => println!("solver failure"),
                }
                println!(
                    "artifacts: {}",
                    out.join("runs").join(&summary.experiment).join(seed.to_string()).display()
                );
            }
            Ok(match rec.outcome {
                Outcome::Success => 0,
                Outcome::Exhausted => EXIT_EXHAUSTED,
                Outcome::SolverFailed => EXIT_SOLVER,
            })
        }

        Command::Certify { path, k, solver } => {
            let c = match load_choi_or_exit(&path) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let opts = solver.options();
            repro_header(None, &config_hash(&opts));
            let z1 = sdp::zeta1(&c, &opts)?;
            let zk = sdp::zeta_k(&c, k, &opts)?;
            if !z1.status.usable() || !zk.status.usable() {
                return Err(Error::Solver("certificate solve failed".into()));
            }
            let (lmin, _) = min_eig(c.herm())?;
            let (lmin_pt, _) = min_eig(&c.partial_transpose_out())?;
            let (probe, _) = block_positivity_probe(&c, 2000, 10, 1)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "d_in": c.d_in(), "d_out": c.d_out(), "k": k,
                        "zeta1": z1.value, "zetak": zk.value,
                        "lambda_min": lmin, "lambda_min_pt": lmin_pt,
                        "probe_min": probe,
                        "non_decomposable": z1.value < -opts.cert_tol,
                        "positive_on_relaxation": zk.value >= -opts.cert_tol,
                    })
                );
            } else {
                println!("zeta1            = {:+.9}", z1.value);
                println!("zeta{k}            = {:+.9}", zk.value);
                println!("lambda_min(C)    = {:+.9}", lmin);
                println!("lambda_min(C^Tb) = {:+.9}", lmin_pt);
                println!("probe_min        = {:+.9}", probe);
                println!(
                    "verdict: non-decomposable = {}, positive on k={k} relaxation = {}",
                    z1.value < -opts.cert_tol,
                    zk.value >= -opts.cert_tol
                );
            }
            Ok(0)
        }

        Command::Validate {
            path,
            k,
            probe_samples,
            probe_iters,
            probe_seed,
            mask,
            solver,
        } => {
            let c = match load_choi_or_exit(&path) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let opts = solver.options();
            repro_header(None, &config_hash(&opts));
            let mut report = validate_found_map(
                &c,
                k,
                &opts,
                &ValidationTolerances::default(),
                probe_samples,
                probe_iters,
                probe_seed,
            )?;
            if let Some(mpath) = mask {
                let (m, _, _) = choi::load_mask(&mpath)?;
                report.mask_residual = Some(mask_residual(&c, &m));
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
            Ok(0)
        }

        Command::Family { a, b, c, w, z, out } => {
            let wv = parse_complex(&w)?;
            let zv = parse_complex(&z)?;
            let p = FamilyParams::new(a, b, c, wv, zv)?;
            let cm = family_choi(&p)?;
            repro_header(None, &config_hash(&p));
            let tp_res = cm.tp_residual();
            if let Some(path) = &out {
                save_choi(&cm, path)?;
            }
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "trace_sum": a + b + c,
                        "tp_residual": tp_res,
                        "written": out,
                    })
                );
            } else {
                println!(
                    "family member written{}; a+b+c = {}, TP residual = {:.3e}",
                    out.as_ref()
                        .map(|p| format!(" to {}", p.display()))
                        .unwrap_or_default(),
                    a + b + c,
                    tp_res
                );
                if out.is_none() {
                    println!("{}", choi::choi_to_json(&cm));
                }
            }
            Ok(0)
        }

        Command::Bound { path } => {
            let c = match load_choi_or_exit(&path) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let x = xi(&c)?;
            let verdict = if x.value < 0.0 { "VIOLATED" } else { "SATISFIED" };
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "trace_phi": x.trace_phi,
                        "min_re_spectrum": x.min_re,
                        "xi": x.value,
                        "verdict": verdict,
                        "degenerate": x.degenerate,
                    })
                );
            } else {
                println!("Tr(Phi)          = {:+.9}", x.trace_phi);
                println!("min Re spectrum  = {:+.9}", x.min_re);
                println!("xi               = {:+.9}", x.value);
                println!("bound {verdict}");
            }
            Ok(0)
        }

        Command::Compose { path1, path2, out } => {
            let c1 = match load_choi_or_exit(&path1) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let c2 = match load_choi_or_exit(&path2) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let comp = choi::compose_choi(&c1, &c2)?;
            if let Some(path) = &out {
                save_choi(&comp, path)?;
                println!("composition written to {}", path.display());
            } else {
                println!("{}", choi::choi_to_json(&comp));
            }
            Ok(0)
        }

        Command::Decomposable {
            d,
            ancilla,
            seed,
            epochs,
            lr,
            out,
            solver,
        } => {
            let anc = ancilla.unwrap_or(d);
            let train = TrainConfig {
                learning_rate: lr,
                max_epochs: epochs,
                seed,
                ..Default::default()
            };
            repro_header(Some(seed), &config_hash(&train));
            let (spec, rec) = train_non_cp_decomposable(d, anc, &train)?;
            let c = decomposable_choi(&spec)?;
            let cert = sdp::zeta1(&c, &solver.options())?;
            let (lmin, _) = min_eig(c.herm())?;
            if let Some(path) = &out {
                save_choi(&c, path)?;
            }
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "outcome": rec.outcome,
                        "success_epoch": rec.success_epoch,
                        "p": spec.p(),
                        "lambda_min": lmin,
                        "zeta1": cert.value,
                        "tp_residual": c.tp_residual(),
                        "written": out,
                    })
                );
            } else {
                println!(
                    "outcome {:?} at epoch {:?}: lambda_min = {:+.6}, zeta1 = {:+.6}, p = {:.4}",
                    rec.outcome,
                    rec.success_epoch,
                    lmin,
                    cert.value,
                    spec.p()
                );
                if let Some(path) = &out {
                    println!("choi written to {}", path.display());
                }
            }
            Ok(match rec.outcome {
                Outcome::Success => 0,
                Outcome::Exhausted => EXIT_EXHAUSTED,
                Outcome::SolverFailed => EXIT_SOLVER,
            })
        }

        Command::Pptsq {
            d_big,
            d_mid,
            runs,
            base_seed,
            epochs,
            polish_epochs,
            lr,
            ppt_weight,
            out,
            solver,
        } => {
            let cfg = PptSquareConfig {
                d_big,
                d_mid,
                ppt_weight,
                polish_epochs,
                ..Default::default()
            };
            let train = TrainConfig {
                learning_rate: lr,
                max_epochs: epochs,
                seed: base_seed,
                ..Default::default()
            };
            repro_header(Some(base_seed), &config_hash(&cfg));
            let results = ppt_square_campaign(
                &cfg,
                runs,
                base_seed,
                &train,
                &solver.options(),
                out.as_deref(),
            )?;
            let mut flagged = 0usize;
            for (s, _) in &results {
                if s.violation_candidate {
                    flagged += 1;
                }
            }
            if json {
                let rows: Vec<_> = results.iter().map(|(s, _)| s).collect();
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                for (s, _) in &results {
                    println!(
                        "seed {:4}: zeta1(T1∘T2) = {:+.8}, ppt penalty = {:.2e}, zeta_k(T1) = {:+.8}{}",
                        s.seed,
                        s.final_zeta1_composition,
                        s.final_ppt_penalty,
                        s.final_zetak_t1,
                        if s.violation_candidate {
                            "  << FLAGGED FOR REVIEW"
                        } else {
                            ""
                        }
                    );
                }
                println!(
                    "{} run(s), {} flagged violation candidate(s)",
                    results.len(),
                    flagged
                );
            }
            Ok(0)
        }

        Command::Sweep {
            spec,
            out,
            export_traces,
            solver,
        } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Error::Input(format!("cannot read '{}': {e}", spec.display())))?;
            let campaign = CampaignSpec::from_json(&text)?;
            repro_header(Some(campaign.base_seed), &config_hash(&campaign));
            let (summary, runs) = run_campaign(&campaign, &solver.options(), Some(&out))?;
            if export_traces {
                let (traces, diag) = export_plot_data(&campaign.experiment, &runs);
                let dir = out.join("runs").join(&campaign.experiment);
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("traces.csv"), traces)?;
                std::fs::write(dir.join("diagnostics.csv"), diag)?;
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.csv());
            }
            Ok(0)
        }

        Command::RealMaps {
            m,
            runs,
            base_seed,
            epochs,
            out,
            solver,
        } => {
            let train = TrainConfig {
                max_epochs: epochs,
                ..Default::default()
            };
            repro_header(Some(base_seed), &config_hash(&train));
            let results = real_map_campaign(
                m,
                runs,
                &[None],
                base_seed,
                &train,
                &solver.options(),
                Some(&out),
            )?;
            let mut any_success = false;
            for (_, summary, _) in &results {
                if json {
                    println!("{}", serde_json::to_string_pretty(&summary)?);
                } else {
                    print!("{}", summary.csv());
                }
                if summary.cells.iter().any(|c| c.successes > 0) {
                    any_success = true;
                }
            }
            Ok(if any_success { 0 } else { EXIT_EXHAUSTED })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("0.5").unwrap(), C64::new(0.5, 0.0));
        assert_eq!(parse_complex("-1.25").unwrap(), C64::new(-1.25, 0.0));
        assert_eq!(parse_complex("0.5+0.25j").unwrap(), C64::new(0.5, 0.25));
        assert_eq!(parse_complex("0.5-0.25j").unwrap(), C64::new(0.5, -0.25));
        assert_eq!(parse_complex("2j").unwrap(), C64::new(0.0, 2.0));
        assert_eq!(parse_complex("-1e-3+2e-4j").unwrap(), C64::new(-1e-3, 2e-4));
        assert!(parse_complex("abc").is_err());
    }
}
