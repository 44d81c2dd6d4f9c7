use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fedref::config::{parse_config, parse_scenario, ExperimentConfig};
use fedref::output::{emit_outputs, line_chart, Series};
use fedref::partition::PartitionKind;
use fedref::runner::{run_experiment, RunSummary};
use fedref::udp::verify_ordering;

/// Overrides `output_dir` from the config file.
const OUTPUT_DIR_ENV: &str = "FEDREF_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "fedref", version, about = "Federated-learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, summary.json and charts.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Evaluate a drift-probability scenario and print the ordering report as JSON.
    Udp {
        scenario: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-run an experiment for each value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn report(summary: &RunSummary, dir: &Path) {
    let z = &summary.zeta[&summary.config.psi_metric];
    println!(
        "{} rounds in {:.2}s -> {} (final {:?}, zeta_signed[{}] = {:.4})",
        summary.rounds.len(),
        summary.wall_clock_seconds,
        dir.display(),
        summary.final_metrics,
        summary.config.psi_metric,
        z.zeta_signed,
    );
}

/// Set one named parameter on a config.
fn apply_param(cfg: &mut ExperimentConfig, param: &str, value: &str) -> Result<()> {
    let float = || {
        value
            .parse::<f64>()
            .with_context(|| format!("`{value}` is not a number"))
    };
    let int = || {
        value
            .parse::<usize>()
            .with_context(|| format!("`{value}` is not an integer"))
    };
    match param {
        "rho" | "lambda_g" | "lambda_ref_top" | "lambda_ref_0" | "server_eta" => {
            let Some(f) = cfg.fedref.as_mut() else {
                bail!("--param {param} needs strategy = \"fedref\"");
            };
            match param {
                "rho" => f.rho = int()?,
                "lambda_g" => f.lambda_g = float()?,
                "lambda_ref_top" => f.lambda_ref_top = float()?,
                "lambda_ref_0" => f.lambda_ref_0 = float()?,
                _ => f.server_eta = float()?,
            }
        }
        "mu" => cfg.local.proximal_mu = float()?,
        "learning_rate" => cfg.local.learning_rate = float()?,
        "epochs" => cfg.local.epochs = int()?,
        "rounds" => cfg.rounds = int()?,
        "global_seed" => cfg.global_seed = value.parse().context("seed must be an integer")?,
        "alpha" => match &mut cfg.partition {
            PartitionKind::Dirichlet { alpha } => *alpha = float()?,
            _ => bail!("--param alpha needs a dirichlet partition"),
        },
        other => bail!(
            "unsupported sweep parameter `{other}` (rho, lambda_g, lambda_ref_0, lambda_ref_top, \
             server_eta, mu, learning_rate, epochs, rounds, global_seed, alpha)"
        ),
    }
    cfg.validate()?;
    Ok(())
}

fn sweep(config: &Path, param: &str, values: &[String], out: Option<PathBuf>) -> Result<()> {
    if values.is_empty() {
        bail!("--values must list at least one value");
    }
    let base = load_config(config)?;
    let root = output_dir(&base, out);
    let mut runs = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        apply_param(&mut cfg, param, v)?;
        let dir = root.join(format!("{param}={v}"));
        let summary = run_experiment(&cfg)?;
        emit_outputs(&summary, &dir)?;
        report(&summary, &dir);
        runs.push((v.clone(), summary));
    }

    let metrics: Vec<String> = runs[0].1.final_metrics.keys().cloned().collect();
    let mut table = param.to_string();
    for m in &metrics {
        table.push_str(&format!(",final_{m},zeta_signed_{m},zeta_abs_{m}"));
    }
    table.push_str(",udp_p\n");
    for (v, s) in &runs {
        table.push_str(v);
        for m in &metrics {
            let z = &s.zeta[m];
            table.push_str(&format!(
                ",{},{},{}",
                s.final_metrics[m], z.zeta_signed, z.zeta_abs
            ));
        }
        let udp = s.udp.map(|u| u.p.to_string()).unwrap_or_default();
        table.push_str(&format!(",{udp}\n"));
    }
    std::fs::create_dir_all(&root)?;
    std::fs::write(root.join("sweep.csv"), table)?;

    for m in &metrics {
        let names: Vec<String> = runs.iter().map(|(v, _)| format!("{param}={v}")).collect();
        let series: Vec<Series> = runs
            .iter()
            .zip(&names)
            .map(|((_, s), name)| Series {
                name,
                points: s
                    .rounds
                    .iter()
                    .map(|r| (r.round as f64, r.eval[m]))
                    .collect(),
            })
            .collect();
        std::fs::write(
            root.join(format!("sweep_{m}.svg")),
            line_chart(m, "round", m, &series),
        )?;
    }
    println!("sweep table -> {}", root.join("sweep.csv").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            output_dir: out,
        } => {
            let cfg = load_config(&config)?;
            let dir = output_dir(&cfg, out);
            let summary = run_experiment(&cfg)?;
            emit_outputs(&summary, &dir)?;
            report(&summary, &dir);
        }
        Command::Udp { scenario, output } => {
            let text = std::fs::read_to_string(&scenario)
                .with_context(|| format!("reading {}", scenario.display()))?;
            let report = verify_ordering(&parse_scenario(&text)?)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(path) = output {
                std::fs::write(&path, &json)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{json}");
        }
        Command::Sweep {
            config,
            param,
            values,
            output_dir: out,
        } => sweep(&config, &param, &values, out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
