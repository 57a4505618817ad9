use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptnav::commands::{self, Sweep};
use adaptnav::config::RunConfig;
use adaptnav::report::{comparison_table, RunReport};
use adaptnav::{envfile, scanfile};
use adaptnav::{write_file, AppError, Result};
use adaptnav_core::simenv::{Corruption, EnvParams};
use adaptnav_core::Seed;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptnav", version, about = "Input-adaptive panorama navigation benchmarks")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Default directory for relative output paths.
    #[arg(long, global = true, env = "ADAPTNAV_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run config; keys missing from it come from the preset.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `adaptive` or `baseline`.
    #[arg(long, default_value = "adaptive")]
    preset: String,
    /// Dotted-key override, e.g. `--set cache.enabled=false`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated suite seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    /// Environment file; every seed runs in it.
    #[arg(long)]
    env: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(k) = self.k {
            overrides.push(format!("k={k}"));
        }
        if let Some(seeds) = &self.seeds {
            let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
            overrides.push(format!("suite.seeds=[{}]", list.join(",")));
        }
        if let Some(n) = self.episodes {
            overrides.push(format!("suite.episodes={n}"));
        }
        RunConfig::load(self.config.as_deref(), &self.preset, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment file.
    GenEnv {
        /// TOML file of generator parameters.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        branching: Option<usize>,
        #[arg(long)]
        temporal_overlap: Option<f64>,
        #[arg(long)]
        spatial_smoothness: Option<f64>,
        #[arg(long, short, default_value = "env.json")]
        output: PathBuf,
        /// Also write every node's occupancy scan to this file.
        #[arg(long)]
        scans: Option<PathBuf>,
    },
    /// Run an episode suite and write a JSON report.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short, default_value = "report.json")]
        output: PathBuf,
    },
    /// Sweep one parameter (k, a, sim or rho) and write an aligned CSV.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// e.g. `k=1,2,3,4,5,6` or `a=0,0.0009,0.0022`.
        #[arg(long)]
        sweep: String,
        #[arg(long, short, default_value = "ablation.csv")]
        output: PathBuf,
    },
    /// Clean, corrupted and median-filtered runs of one config.
    CorruptSuite {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated kinds (default: all).
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<String>>,
        #[arg(long, default_value_t = 3)]
        severity: u8,
        #[arg(long, default_value_t = 5)]
        denoise_kernel: usize,
        #[arg(long, short, default_value = "corruption.csv")]
        output: PathBuf,
    },
    /// Consecutive-layer similarity of the encoder, averaged over views.
    Saturation {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, short, default_value = "saturation.json")]
        output: PathBuf,
    },
    /// Summarize reports; GFLOPs are compared against the first one.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also score the scan subgoal detector on this environment file.
        #[arg(long)]
        subgoals: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.record() });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(AppError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Usage(e.to_string()))?;
    }
    let out_dir = cli.out_dir;
    let place = |p: &Path, cfg_dir: Option<PathBuf>| -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        match cfg_dir.or_else(|| out_dir.clone()) {
            Some(d) => d.join(p),
            None => p.to_path_buf(),
        }
    };
    match cli.command {
        Command::GenEnv {
            config,
            nodes,
            seed,
            branching,
            temporal_overlap,
            spatial_smoothness,
            output,
            scans,
        } => {
            let mut params = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| AppError::io(&p, e))?;
                    toml::from_str::<EnvParams>(&text).map_err(|e| AppError::Config(e.message().to_string()))?
                }
                None => EnvParams::default(),
            };
            params.nodes = nodes.unwrap_or(params.nodes);
            params.seed = seed.map_or(params.seed, Seed);
            params.branching = branching.unwrap_or(params.branching);
            params.temporal_overlap = temporal_overlap.unwrap_or(params.temporal_overlap);
            params.spatial_smoothness = spatial_smoothness.unwrap_or(params.spatial_smoothness);
            let path = place(&output, None);
            let (env, digest) = commands::gen_env(&params, &path)?;
            println!(
                "{}: {} nodes, {} edges, sha256 {digest}",
                path.display(),
                env.node_count(),
                env.edges().len()
            );
            if let Some(p) = scans {
                let p = place(&p, None);
                scanfile::write(&p, &scanfile::env_scans(&env)?)?;
                println!("{}: {} scans", p.display(), env.node_count());
            }
        }
        Command::Run { cfg, output } => {
            let config = cfg.load()?;
            let report = commands::run(&config, cfg.env.as_deref())?;
            let path = place(&output, config.output.dir.clone());
            write_file(&path, report.to_json().as_bytes())?;
            print!(
                "{}",
                comparison_table(&[(path.display().to_string(), report)]).to_aligned_csv()
            );
        }
        Command::Ablate { cfg, sweep, output } => {
            let sweep = Sweep::parse(&sweep)?;
            let config = cfg.load()?;
            let table = commands::ablate(&config, &sweep, cfg.env.as_deref())?;
            let text = table.to_aligned_csv();
            write_file(&place(&output, config.output.dir.clone()), text.as_bytes())?;
            print!("{text}");
        }
        Command::CorruptSuite {
            cfg,
            kinds,
            severity,
            denoise_kernel,
            output,
        } => {
            let config = cfg.load()?;
            let kinds = match kinds {
                Some(names) => names
                    .iter()
                    .map(|n| n.parse::<Corruption>())
                    .collect::<adaptnav_core::Result<Vec<_>>>()?,
                None => Corruption::ALL.to_vec(),
            };
            let table = commands::corrupt_suite(&config, &kinds, severity, denoise_kernel, cfg.env.as_deref())?;
            let text = table.to_aligned_csv();
            write_file(&place(&output, config.output.dir.clone()), text.as_bytes())?;
            print!("{text}");
        }
        Command::Saturation { cfg, samples, output } => {
            let config = cfg.load()?;
            let curve = commands::saturation(&config, samples)?;
            let json = serde_json::to_string_pretty(&curve).expect("curve serializes") + "\n";
            write_file(&place(&output, config.output.dir.clone()), json.as_bytes())?;
            print!("{}", curve.table().to_aligned_csv());
        }
        Command::Report { reports, subgoals } => {
            let mut loaded = Vec::new();
            for p in &reports {
                let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
                let r: RunReport = serde_json::from_str(&text).map_err(|e| AppError::Format {
                    path: p.clone(),
                    message: e.to_string(),
                })?;
                loaded.push((p.display().to_string(), r));
            }
            print!("{}", comparison_table(&loaded).to_aligned_csv());
            if let Some(env_path) = subgoals {
                let (env, _) = envfile::read(&env_path)?;
                let cfg = &loaded[0].1.config;
                let eval = commands::evaluate_subgoals(cfg, &env, cfg.suite.seeds[0])?;
                println!("{}", serde_json::to_string(&eval).expect("evaluation serializes"));
            }
        }
    }
    Ok(())
}
