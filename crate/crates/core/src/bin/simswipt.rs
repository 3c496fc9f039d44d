use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use simswipt::drl::env::SwiptEnv;
use simswipt::drl::train::{train, Strategy};
use simswipt::harness::config::{ExperimentConfig, ResourcePolicy};
use simswipt::harness::report::{write_curve, write_passivity, write_sca_trace};
use simswipt::harness::sweep::{phases, run_sweep, write_sweep_csv, Axis, Policy};
use simswipt::harness::validate::{self, Check};
use simswipt::jappa::sca_loop;
use simswipt::performance::{evaluate, Coefficients};

#[derive(Parser)]
#[command(name = "simswipt", version, about = "SIM-assisted cell-free SWIPT simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true, env = "SIMSWIPT_SEED")]
    seed: Option<u64>,
    /// Output directory for CSV artifacts
    #[arg(long, global = true, env = "SIMSWIPT_OUT", default_value = "out")]
    out: PathBuf,
    /// Monte Carlo trials (overrides the config)
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Policy, e.g. RAPEPA-HPS, JAPPA-EQPS, CTDE, CTCE
    #[arg(long, global = true)]
    policy: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the acceptance checks
    Validate,
    /// Sweep one axis and write per-cell means
    Sweep {
        /// m, s, l, t_sim, se_min or kappa
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Run the SCA allocator on one realization
    Jappa {
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Train CTDE or CTCE agents and save the actors
    Train {
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Spectral norms of the inter-layer matrix
    PassivityTable,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl<E: std::fmt::Display> From<E> for Failure
where
    E: Into<simswipt::Error>,
{
    fn from(e: E) -> Self {
        Failure::Run(e.to_string())
    }
}

fn load(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) if !p.exists() => return Err(Failure::Usage(format!("config file {} not found", p.display()))),
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    cfg.check().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn policy(c: &Common, cfg: &ExperimentConfig) -> Result<Policy, Failure> {
    match &c.policy {
        Some(p) => Policy::parse(p).ok_or_else(|| Failure::Usage(format!("unknown policy {p}"))),
        None => Ok(Policy { phase: cfg.phase, resource: cfg.resource }),
    }
}

fn save(out: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Run(e.to_string()))?;
    let p = out.join(name);
    fs::write(&p, bytes).map_err(|e| Failure::Run(e.to_string()))?;
    Ok(p)
}

fn summary(cmd: &str, cfg: &ExperimentConfig, fields: &[(&str, String)]) {
    let mut s = format!("SUMMARY command={cmd} config_hash={} seed={}", cfg.hash(), cfg.seed);
    for (k, v) in fields {
        s.push_str(&format!(" {k}={v}"));
    }
    println!("{s}");
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let c = &cli.common;
    let cfg = load(c)?;
    let hash = cfg.hash();
    save(&c.out, "config.txt", cfg.render().as_bytes())?;
    match cli.cmd {
        Cmd::Validate => {
            let checks = validate::run_all(&cfg, |k: &Check| println!("{}", k.line()))?;
            for k in &checks {
                for a in &k.artifacts {
                    save(&c.out, &a.name, &a.bytes)?;
                }
            }
            let passed = checks.iter().filter(|k| k.pass).count();
            summary("validate", &cfg, &[("passed", passed.to_string()), ("total", checks.len().to_string())]);
            Ok(passed == checks.len())
        }
        Cmd::Sweep { axis, values } => {
            let ax = Axis::parse(&axis).ok_or_else(|| Failure::Usage(format!("unknown axis {axis}")))?;
            if values.is_empty() {
                return Err(Failure::Usage("--values needs at least one value".into()));
            }
            let pol = policy(c, &cfg)?;
            let rows = run_sweep(&cfg, ax, &values, &[pol])?;
            let mut bytes = Vec::new();
            write_sweep_csv(&mut bytes, &hash, &rows)?;
            let p = save(&c.out, "sweep.csv", &bytes)?;
            let failures: usize = rows.iter().map(|r| r.failures).sum();
            summary("sweep", &cfg, &[("policy", pol.name()), ("rows", rows.len().to_string()), ("failures", failures.to_string()), ("csv", p.display().to_string())]);
            Ok(true)
        }
        Cmd::Jappa { realization } => {
            let pol = policy(c, &cfg)?;
            let net = cfg.network(realization)?;
            let st = net.state(&phases(&cfg, &net, pol.phase, realization)?)?;
            let al = net.alphas(&st, cfg.alpha)?;
            let co = Coefficients::new(&net, &st, &al)?;
            let res = sca_loop(&co, &cfg.sca)?;
            let rep = evaluate(&co, &res.decision);
            let mut bytes = Vec::new();
            write_sca_trace(&mut bytes, &hash, &format!("r{realization}"), &res.trace)?;
            let p = save(&c.out, "sca_trace.csv", &bytes)?;
            let min_se = rep.se.iter().cloned().fold(f64::INFINITY, f64::min);
            summary("jappa", &cfg, &[
                ("iterations", res.trace.len().to_string()),
                ("converged", res.converged.to_string()),
                ("min_se", format!("{min_se:.6}")),
                ("sum_he", format!("{:.6e}", rep.sum_he)),
                ("feasible", rep.feasible().to_string()),
                ("csv", p.display().to_string()),
            ]);
            Ok(true)
        }
        Cmd::Train { realization } => {
            let strategy = match policy(c, &cfg)?.resource {
                ResourcePolicy::Ctce => Strategy::Ctce,
                ResourcePolicy::Ctde => Strategy::Ctde,
                other => return Err(Failure::Usage(format!("train needs CTDE or CTCE, got {}", other.name()))),
            };
            let mut env = SwiptEnv::new(cfg.network(realization)?, cfg.env.clone())?;
            let res = train(&mut env, strategy, &cfg.train)?;
            let mut bytes = Vec::new();
            write_curve(&mut bytes, &hash, strategy.name(), &res.curve)?;
            let p = save(&c.out, "learning_curve.csv", &bytes)?;
            for (i, a) in res.actors.iter().enumerate() {
                let mut m = Vec::new();
                a.write_to(&mut m)?;
                save(&c.out, &format!("actor{i}.mlp"), &m)?;
            }
            summary("train", &cfg, &[
                ("strategy", strategy.name().into()),
                ("tail_reward", format!("{:.6}", res.tail_mean(0.1))),
                ("actors", res.actors.len().to_string()),
                ("csv", p.display().to_string()),
            ]);
            Ok(true)
        }
        Cmd::PassivityTable => {
            let rows = validate::passivity_table()?;
            for r in &rows {
                println!("S={:>2} L={} T={:>4}λ norm={:.4} {}", r.s, r.l, r.t_sim, r.norm, if r.admissible() { "passive" } else { "active" });
            }
            let mut bytes = Vec::new();
            write_passivity(&mut bytes, &hash, &rows)?;
            let p = save(&c.out, "passivity.csv", &bytes)?;
            summary("passivity-table", &cfg, &[("rows", rows.len().to_string()), ("csv", p.display().to_string())]);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
