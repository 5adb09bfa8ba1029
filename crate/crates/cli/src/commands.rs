use std::fs;
use std::path::{Path, PathBuf};

use addfit_core::backfit::BackfitOptions;
use addfit_core::simlab::{render_table, run_comparison, simulation_fit_config, Centering, Contamination, SimConfig};
use addfit_core::{backfit_norm_diagnostic, fit_panel, FitConfig, GridPolicy, KernelFamily, Method, SmootherPlan};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::io::{read_panel_file, write_table, InputError};
use crate::manifest::RunManifest;

/// Share of failed replications above which `simulate` reports a degraded run.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(
    name = "addfit",
    version,
    about = "Additive component estimation for replicated panels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo comparison of estimators on the synthetic design.
    Simulate(SimulateArgs),
    /// Fit a panel read from CSV.
    Fit(FitArgs),
    /// Backfitting uniqueness diagnostic for every pair of replicates.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringArg {
    Reference,
    Exact,
}

#[derive(Debug, Args, Serialize)]
pub struct SmoothingArgs {
    /// Kernel family: epanechnikov, quartic or triangular.
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: KernelFamily,
    /// Fixed bandwidth for all methods and components.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// JSON file with a full fit configuration; the flags above override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Iteration limit for backfitting.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl SmoothingArgs {
    fn apply(&self, base: FitConfig) -> anyhow::Result<FitConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => base,
        };
        cfg.kernel = self.kernel;
        if let Some(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                bail!("--bandwidth must be positive, got {h}");
            }
            cfg.bandwidth = Some(h);
        }
        if let Some(n) = self.max_iter {
            cfg.backfit = BackfitOptions {
                max_iter: n,
                ..cfg.backfit
            };
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of units.
    #[arg(long = "G", default_value_t = 3000)]
    pub units: usize,
    /// Number of replicates.
    #[arg(long = "J", default_value_t = 3)]
    pub replicates: usize,
    /// Correlation exponent(s), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub gamma: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = SimConfig::default().seed)]
    pub seed: u64,
    /// Estimators to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "integration,backfit")]
    pub methods: Vec<Method>,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value = "reference")]
    pub centering: CenteringArg,
    /// Share of responses shifted by `--shift`.
    #[arg(long)]
    pub contamination: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    pub shift: f64,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// CSV with header x1..xJ,y1..yJ.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "integration")]
    pub method: Method,
    /// Number of grid points for the derivative-based methods.
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,
    /// Lower and upper pooled-covariate quantiles spanned by the grid.
    #[arg(long, default_value_t = 0.02)]
    pub grid_lower: f64,
    #[arg(long, default_value_t = 0.98)]
    pub grid_upper: f64,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Units used for the dense norm computation.
    #[arg(long, default_value_t = addfit_core::smoother::DEFAULT_DIAGNOSTIC_SUBSAMPLE)]
    pub subsample: usize,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    /// Optional output directory for a JSON result.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Results were written but some fits failed or did not converge.
    Degraded,
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Fit(args) => fit(&args),
        Command::Diagnose(args) => diagnose(&args),
    }
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn names(dir: &Path, files: &[String]) -> Vec<String> {
    files.iter().map(|f| dir.join(f).display().to_string()).collect()
}

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<Outcome> {
    if args.gamma.is_empty() {
        bail!("--gamma needs at least one value");
    }
    if args.methods.is_empty() {
        bail!("--methods needs at least one method");
    }
    let configs: Vec<SimConfig> = args
        .gamma
        .iter()
        .map(|&gamma| SimConfig {
            units: args.units,
            replicates: args.replicates,
            gamma,
            perturbation_scale: None,
            sigma_eps: args.sigma,
            seed: args.seed,
            reps: args.reps,
            centering: match args.centering {
                CenteringArg::Reference => Centering::Reference,
                CenteringArg::Exact => Centering::Exact,
            },
            contamination: args.contamination.map(|fraction| Contamination {
                fraction,
                shift: args.shift,
            }),
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let fit_cfg = args.smoothing.apply(simulation_fit_config())?;
    let reports = configs
        .iter()
        .map(|c| run_comparison(c, &args.methods, &fit_cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let mut manifest = RunManifest::new("simulate", serde_json::json!({ "args": args, "fit": fit_cfg }));
    manifest.config_path = args.smoothing.config.as_ref().map(|p| p.display().to_string());
    manifest.seed = Some(args.seed);
    let files = ["report.json".to_string(), "table.txt".to_string()];
    manifest.outputs = names(&args.out, &files);
    let mut degraded = false;
    for r in &reports {
        for m in &r.methods {
            if m.failures as f64 > MAX_FAILURE_SHARE * r.config.reps as f64 {
                degraded = true;
            }
            if m.failures > 0 {
                manifest.flags.push(format!(
                    "gamma={} {}: {} failed replications",
                    r.config.gamma, m.method, m.failures
                ));
            }
            if m.nonconverged > 0 {
                manifest.flags.push(format!(
                    "gamma={} {}: {} non-converged replications",
                    r.config.gamma, m.method, m.nonconverged
                ));
            }
        }
    }

    prepare_out(&args.out)?;
    let hash = manifest.hash();
    write_json(
        &args.out.join("report.json"),
        &serde_json::json!({ "manifest": hash, "reports": reports }),
    )?;
    let table = render_table(&reports);
    fs::write(args.out.join("table.txt"), format!("# manifest={hash}\n{table}"))?;
    manifest.write(&args.out.join("manifest.json"))?;
    print!("{table}");
    Ok(if degraded { Outcome::Degraded } else { Outcome::Ok })
}

#[derive(Debug, Serialize)]
struct PairSd {
    pair: [usize; 2],
    sd: f64,
}

#[derive(Debug, Serialize)]
struct FitSummary {
    manifest: String,
    method: Method,
    units: usize,
    replicates: usize,
    bandwidths: Vec<f64>,
    sigma_hat: f64,
    residual_sd_by_pair: Vec<PairSd>,
    extrapolated_points: usize,
    nonconverged_pairs: usize,
    irls_capped_points: usize,
}

fn load(path: &Path) -> anyhow::Result<addfit_core::PanelData> {
    read_panel_file(path).map_err(|e: InputError| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn fit(args: &FitArgs) -> anyhow::Result<Outcome> {
    let panel = load(&args.input)?;
    let base = FitConfig {
        grid: GridPolicy::Percentile {
            lower: args.grid_lower,
            upper: args.grid_upper,
            points: args.grid_points,
        },
        ..FitConfig::default()
    };
    let cfg = args.smoothing.apply(base)?;
    let result = fit_panel(&panel, args.method, &cfg)?;
    let j = panel.replicates();

    let mut manifest = RunManifest::new("fit", serde_json::json!({ "args": args, "fit": cfg }));
    manifest.config_path = args.smoothing.config.as_ref().map(|p| p.display().to_string());
    let mut files: Vec<String> = (1..=j).map(|k| format!("curve_m{k}.csv")).collect();
    files.extend(["alpha.csv", "residuals.csv", "summary.json"].map(String::from));
    manifest.outputs = names(&args.out, &files);
    if result.nonconverged > 0 {
        manifest
            .flags
            .push(format!("{} backfitting pairs did not converge", result.nonconverged));
    }
    if result.irls_capped > 0 {
        manifest
            .flags
            .push(format!("{} robust grid points hit the IRLS limit", result.irls_capped));
    }
    let hash = manifest.hash();

    prepare_out(&args.out)?;
    for (k, c) in result.components.iter().enumerate() {
        let rows: Vec<Vec<f64>> = c
            .grid
            .iter()
            .zip(&c.values)
            .zip(&c.derivative)
            .map(|((&x, &m), &d)| vec![x, m, d])
            .collect();
        write_table(&args.out.join(&files[k]), &hash, &["x", "m_hat", "m_hat_prime"], &rows)?;
    }
    let alpha_rows: Vec<Vec<f64>> = result.effects.alpha.iter().map(|&a| vec![a]).collect();
    write_table(&args.out.join("alpha.csv"), &hash, &["alpha_hat"], &alpha_rows)?;
    let res_header: Vec<String> = (1..=j).map(|k| format!("r{k}")).collect();
    let res_rows: Vec<Vec<f64>> = (0..panel.units())
        .map(|g| result.residuals.iter().map(|r| r[g]).collect())
        .collect();
    write_table(&args.out.join("residuals.csv"), &hash, &res_header, &res_rows)?;
    let summary = FitSummary {
        manifest: hash.clone(),
        method: args.method,
        units: panel.units(),
        replicates: j,
        bandwidths: result.bandwidths.clone(),
        sigma_hat: result.sigma_hat(),
        residual_sd_by_pair: result
            .pair_residual_sd()
            .into_iter()
            .map(|(a, b, sd)| PairSd {
                pair: [a + 1, b + 1],
                sd,
            })
            .collect(),
        extrapolated_points: result.effects.extrapolated,
        nonconverged_pairs: result.nonconverged,
        irls_capped_points: result.irls_capped,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    manifest.write(&args.out.join("manifest.json"))?;
    println!("method {}: sigma_hat {:.6}", args.method, summary.sigma_hat);
    for p in &summary.residual_sd_by_pair {
        println!("  residual sd, replicates {} and {}: {:.6}", p.pair[0], p.pair[1], p.sd);
    }
    Ok(if result.converged() {
        Outcome::Ok
    } else {
        Outcome::Degraded
    })
}

#[derive(Debug, Serialize)]
struct PairDiagnostic {
    pair: [usize; 2],
    norm: Option<f64>,
    singular: bool,
    holds: bool,
}

pub fn diagnose(args: &DiagnoseArgs) -> anyhow::Result<Outcome> {
    let panel = load(&args.input)?;
    let cfg = args.smoothing.apply(FitConfig::default())?;
    let kernels = cfg.backfit_kernels(&panel)?;
    let plans = (0..panel.replicates())
        .map(|j| SmootherPlan::new(panel.x(j).to_vec(), kernels[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for a in 0..plans.len() {
        for b in a + 1..plans.len() {
            let d = backfit_norm_diagnostic(&plans[a], &plans[b], args.subsample)?;
            rows.push(PairDiagnostic {
                pair: [a + 1, b + 1],
                norm: d.norm.is_finite().then_some(d.norm),
                singular: d.singular,
                holds: d.holds(),
            });
        }
    }
    for r in &rows {
        let norm = r.norm.map_or_else(|| "singular".to_string(), |n| format!("{n:.6}"));
        println!(
            "replicates {} and {}: norm {norm} ({})",
            r.pair[0],
            r.pair[1],
            if r.holds { "condition holds" } else { "condition fails" }
        );
    }
    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new("diagnose", serde_json::json!({ "args": args }));
        manifest.config_path = args.smoothing.config.as_ref().map(|p| p.display().to_string());
        manifest.outputs = names(out, &["diagnostic.json".to_string()]);
        let hash = manifest.hash();
        prepare_out(out)?;
        write_json(
            &out.join("diagnostic.json"),
            &serde_json::json!({ "manifest": hash, "pairs": rows }),
        )?;
        manifest.write(&out.join("manifest.json"))?;
    }
    Ok(if rows.iter().all(|r| r.holds) {
        Outcome::Ok
    } else {
        Outcome::Degraded
    })
}
