//! `varlab`: run variational experiments from config files, or evaluate a
//! single operation and print it as JSON.

mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use varlab_core::lab::config::{EnsembleGenerator, ExperimentConfig, ExperimentKind};
use varlab_core::lab::families::is_cyclic_shift;
use varlab_core::lab::identities::{identity_batch, IDENTITY_TOLERANCE};
use varlab_core::lab::Lab;
use varlab_core::operators::Operator;
use varlab_core::variation::{jump_count, vq_norm, ScalarSequence};
use varlab_core::weights::{ap_characteristic, discrete_hilbert, FiniteSequence, Weight, DEFAULT_MAX_LEN};
use varlab_core::{Execution, VarlabError};

#[derive(Parser)]
#[command(name = "varlab", version, about = "Variational inequalities for ergodic averages and semigroups, measured")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config describes and write report.csv, report.json and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the ensemble seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// q-variation norm of a sequence, with a maximizing subsequence.
    Variation {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
        #[arg(long)]
        q: f64,
        /// Index positions; defaults to 0, 1, 2, ...
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        indices: Option<Vec<f64>>,
    },
    /// Number of λ-jumps of a sequence, with a maximal set of pairs.
    Jump {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        indices: Option<Vec<f64>>,
    },
    /// Ensemble estimate of a variational constant.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Experiment kind; chosen from the operator when omitted.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 3.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        sigma_dim: usize,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        allow_q_override: bool,
    },
    /// Convergence rates of averages and powers to the mean projection.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    /// Decomposition and doubling identities over a seeded batch; exits 1 if a residual exceeds 1e-10.
    IdentityCheck {
        #[arg(long)]
        operator: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 2)]
        m_max: usize,
    },
    /// Maximal-norm ratios with r = 1 and r = 2 as the Σ dimension grows.
    ProbeEll1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        sigma_dims: Vec<usize>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// A_p characteristic of a weight, optionally with its discrete Hilbert transform.
    Weights {
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Index of the first value.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        offset: i64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        /// Also print H w on the support widened by this margin.
        #[arg(long)]
        hilbert_margin: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in operator such as `lazy_walk(32)`, or `kernel:PATH` / `generator:PATH`.
    #[arg(long)]
    operator: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(long)]
    count: Option<usize>,
}

impl Common {
    fn config(&self, kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, self.operator.clone());
        if let Some(s) = self.seed {
            cfg.ensemble.seed = s;
        }
        if let Some(c) = self.count {
            cfg.ensemble.count = c;
        }
        cfg
    }
}

fn default_kind(op: &Operator) -> ExperimentKind {
    match op {
        Operator::Kernel(t) if is_cyclic_shift(t) => ExperimentKind::VariationalZ,
        Operator::Kernel(_) => ExperimentKind::VariationalErgodic,
        Operator::Generator(_) => ExperimentKind::VariationalSemigroupContinuous,
    }
}

fn sequence(values: Vec<f64>, indices: Option<Vec<f64>>) -> Result<ScalarSequence, VarlabError> {
    match indices {
        Some(ix) => ScalarSequence::new(ix, values),
        None => ScalarSequence::from_values(values),
    }
}

fn print(value: serde_json::Value) {
    // A closed pipe (`varlab ... | head`) is not an error.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&value).expect("json"));
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("VARLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| VarlabError::invalid(format!("VARLAB_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    configure_threads()?;
    let lab = Lab::new(Execution::Parallel);
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.ensemble.seed = s;
            }
            manifest::run(&lab, &cfg, &config, &out)?;
        }
        Command::Variation { values, q, indices } => {
            let r = vq_norm(&sequence(values, indices)?, q)?;
            print(json!({ "q": q, "norm": r.norm, "witness": r.witness }));
        }
        Command::Jump { values, lambda, indices } => {
            let r = jump_count(&sequence(values, indices)?, lambda)?;
            print(json!({ "lambda": lambda, "count": r.count, "pairs": r.pairs }));
        }
        Command::Estimate {
            common,
            kind,
            p,
            q,
            r,
            m,
            sigma_dim,
            n_max,
            allow_q_override,
        } => {
            let kind = match kind {
                Some(k) => serde_json::from_value(json!(k))
                    .map_err(|_| VarlabError::Config(format!("unknown experiment kind {k:?}")))?,
                None => default_kind(&common.config(ExperimentKind::Maximal).resolve_operator()?),
            };
            let mut cfg = common.config(kind);
            cfg.params.p = p;
            cfg.params.q = q;
            cfg.params.r = r;
            cfg.params.m = m;
            cfg.params.allow_q_override = allow_q_override;
            cfg.space.sigma_dim = sigma_dim;
            if let Some(n) = n_max {
                cfg.grid.n_max = n;
            }
            let report = lab.run(&cfg)?;
            print(json!({ "kind": report.kind, "family": report.family, "flags": report.flags, "summary": report.summary, "details": report.details }));
        }
        Command::Convergence { common } => {
            let mut cfg = common.config(ExperimentKind::Convergence);
            if common.count.is_none() {
                cfg.ensemble.count = 4;
            }
            let report = lab.run(&cfg)?;
            print(json!({ "flags": report.flags, "summary": report.summary, "details": report.details }));
        }
        Command::IdentityCheck {
            operator,
            seed,
            count,
            n_max,
            m_max,
        } => {
            let op = ExperimentConfig::new(ExperimentKind::Maximal, operator).resolve_operator()?;
            let batch = identity_batch(&op, seed, count, n_max, m_max, lab.execution)?;
            let passed = batch.passes(IDENTITY_TOLERANCE);
            print(json!({
                "seed": seed,
                "instances": batch.instances.len(),
                "max_decomposition_residual": batch.max_decomposition_residual,
                "max_doubling_residual": batch.max_doubling_residual,
                "tolerance": IDENTITY_TOLERANCE,
                "passed": passed,
            }));
            if !passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::ProbeEll1 {
            common,
            p,
            sigma_dims,
            n_max,
        } => {
            let mut cfg = common.config(ExperimentKind::Ell1Probe);
            cfg.params.p = p;
            cfg.params.r = 1.0;
            cfg.probe.sigma_dims = sigma_dims;
            cfg.ensemble.generators = vec![EnsembleGenerator::Spikes];
            if let Some(n) = n_max {
                cfg.grid.n_max = n;
            }
            let report = lab.run(&cfg)?;
            print(json!({ "flags": report.flags, "summary": report.summary, "details": report.details }));
        }
        Command::Weights {
            values,
            offset,
            p,
            max_len,
            hilbert_margin,
        } => {
            let w = Weight::new(offset, values.clone())?;
            let c = ap_characteristic(&w, p, max_len, lab.execution)?;
            let hilbert = hilbert_margin.map(|margin| discrete_hilbert(&FiniteSequence::new(offset, values), margin));
            print(json!({ "characteristic": c, "hilbert": hilbert }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<VarlabError>() {
        Some(e) if e.is_certification_failure() => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("varlab: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
