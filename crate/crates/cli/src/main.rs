use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use numrm::guarantees::{check_guarantee, shortest_vs_detour, GuaranteeParams, Scenario, Variant, VerdictKind};
use numrm::harness::{
    aggregate, aggregate_path, aggregate_rows, build_machines, matrix_rows, median_steps_to, run_experiment,
    run_matrix, write_aggregate, write_runs, MatrixSpec, RmConstants, RmVariant, RunConfig,
};
use numrm::oracle::{bfs_task_length, optimal_score_constants};
use numrm::{generate_map, GridMap, ProductModel, Setup, Task};

#[derive(Parser)]
#[command(name = "numrm", version, about = "Reward machines with numeric features on grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Reward constants shared by the machine-building subcommands.
#[derive(clap::Args)]
struct RmArgs {
    /// Final reward of the Boolean and numeric-Boolean machines.
    #[arg(long = "R", default_value_t = 1000.0)]
    big_r: f64,
    /// Progress reward of the numeric-Boolean machine.
    #[arg(long, default_value_t = 0.1)]
    r: f64,
    /// Per-leg arrival rewards of the numeric machine, comma separated.
    #[arg(long, value_delimiter = ',')]
    terminal_rewards: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
}

impl RmArgs {
    fn constants(&self) -> RmConstants {
        RmConstants { big_r: self.big_r, r: self.r, terminal_rewards: self.terminal_rewards.clone() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random maps as text files.
    Genmaps {
        #[arg(long)]
        setup: Setup,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Seed of the first map; later maps use the following seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Train every seed of a config and write per-seed and aggregate CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortest task length and the value-iteration optimum for a map.
    Oracle {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long, value_parser = parse_variant)]
        rm: RmVariant,
        #[command(flatten)]
        consts: RmArgs,
        #[arg(long, default_value_t = 1000)]
        max_steps: u64,
    },
    /// Whether return maximization implies shortest paths for a reward scheme.
    CheckGuarantee {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        scenario: Scenario,
        #[arg(long = "R", default_value_t = 1.0)]
        big_r: f64,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Shortest-path length used for the printed return comparison.
        #[arg(long, default_value_t = 10)]
        t_star: u32,
        /// Back-and-forth detours in the compared trajectory.
        #[arg(long, default_value_t = 1)]
        detours: u32,
    },
    /// Print the reward machine of a task.
    ExportRm {
        #[arg(long)]
        task: Task,
        #[arg(long, value_parser = parse_variant)]
        rm: RmVariant,
        #[arg(long, value_enum, default_value = "dot")]
        format: Format,
        #[command(flatten)]
        consts: RmArgs,
    },
    /// Median and quartiles over seeds of one or more run CSVs.
    Aggregate {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the method × task × map matrix and report steps to a 0.95 score.
    Matrix {
        /// 41×41 maps, ten per setup, instead of one 17×17 map per setup.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        outdir: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<RmVariant, String> {
    s.parse().map_err(|e: numrm::HarnessError| e.to_string())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Genmaps { setup, size, count, seed, outdir } => {
            fs::create_dir_all(&outdir).with_context(|| format!("creating {}", outdir.display()))?;
            for s in seed..seed + count {
                let map = generate_map(&setup, size, s)?;
                let path = outdir.join(format!("{setup}-s{size}-{s}.txt"));
                fs::write(&path, map.to_text()).with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let Some(out) = out.or_else(|| cfg.output.clone()) else {
                bail!("no output path: pass --out or set `output` in {}", config.display());
            };
            let logs = run_experiment(&cfg, &out)?;
            for log in &logs {
                let p = log.final_point();
                println!(
                    "{} seed {}: final score {:.4}, episode length {}, steps to 0.95 {}",
                    log.method,
                    log.seed,
                    p.score_norm,
                    p.episode_len,
                    log.steps_to(0.95).map_or("never".to_string(), |s| s.to_string())
                );
            }
            println!("wrote {} and {}", out.display(), aggregate_path(&out).display());
        }
        Command::Oracle { map, task, rm, consts, max_steps } => {
            let text = fs::read_to_string(&map).with_context(|| format!("reading {}", map.display()))?;
            let grid = GridMap::parse(&text)?;
            let machines = build_machines(rm, &task, &consts.constants(), consts.gamma)?;
            let model = ProductModel::build(&grid, &machines.eval)?;
            let opt = optimal_score_constants(&model, consts.gamma, max_steps)?;
            println!("bfs_task_length {}", bfs_task_length(&grid, &task)?);
            println!("optimal_episode_len {}", opt.episode_len);
            println!("optimal_completed {}", opt.completed);
            println!("optimal_arps {}", opt.arps);
            println!("optimal_discounted_return {}", opt.discounted_return);
        }
        Command::CheckGuarantee { variant, scenario, big_r, r, gamma, t_star, detours } => {
            if !(gamma > 0.0 && gamma < 1.0) {
                bail!("--gamma must lie in (0, 1)");
            }
            if t_star == 0 {
                bail!("--t-star must be at least 1");
            }
            let v = check_guarantee(variant, scenario, big_r, r, gamma);
            let verdict = match v.kind {
                VerdictKind::GuaranteedShortest => "guaranteed shortest",
                VerdictKind::NotGuaranteed => "not guaranteed",
            };
            println!("{variant} / {scenario}: {verdict} ({})", v.note);
            if let Some(t) = v.threshold {
                println!("threshold r < {t}");
            }
            let p = GuaranteeParams { big_r, r, gamma, t_star, n: detours };
            if let Some((short, detour)) = shortest_vs_detour(variant, scenario, &p) {
                println!("return shortest (T={t_star}) {short}");
                println!("return with {detours} detour(s) (T={}) {detour}", t_star + 2 * detours);
            }
        }
        Command::ExportRm { task, rm, format, consts } => {
            let machines = build_machines(rm, &task, &consts.constants(), consts.gamma)?;
            match format {
                Format::Dot => print!("{}", machines.train.to_dot()),
                Format::Json => println!("{}", machines.train.to_json()),
            }
        }
        Command::Aggregate { inputs, out } => {
            let rows = aggregate(&inputs)?;
            write_aggregate(&out, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Matrix { full_scale, outdir } => {
            let spec = if full_scale { MatrixSpec::full_scale() } else { MatrixSpec::desk_scale() };
            let results = run_matrix(&spec)?;
            let rows = matrix_rows(&results);
            let runs = outdir.join("runs.csv");
            write_runs(&runs, &rows)?;
            write_aggregate(&aggregate_path(&runs), &aggregate_rows(&rows)?)?;
            println!("{:<14} {:<8} {:<16} {:>14}", "method", "task", "map", "steps to 0.95");
            for (cfg, logs) in &results {
                println!(
                    "{:<14} {:<8} {:<16} {:>14}",
                    cfg.method().to_string(),
                    cfg.task,
                    logs[0].map_id,
                    median_steps_to(logs, 0.95)
                );
            }
            println!("wrote {} and {}", runs.display(), aggregate_path(&runs).display());
        }
    }
    Ok(())
}
