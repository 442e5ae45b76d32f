//! Command-line front end of the `pdmp-fv` solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pdmp_fv::{audit_hypotheses, build_tcp_model, TcpVariant};

use config::{McSection, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "pdmp-fv",
    version,
    about = "Finite-volume densities of TCP window-size processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scheme and write densities, measures and a report.
    Run(RunArgs),
    /// Check the model hypotheses numerically.
    Audit(AuditArgs),
    /// Weak residual of the bump test function under refinement.
    Refine(RefineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Figure1,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// tcp-i, tcp-f or tcp-fj.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "x-max")]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Time horizon.
    #[arg(long = "T", allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
    /// fixed-point or direct.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Monte-Carlo particles for the oracle comparison.
    #[arg(long)]
    pub particles: Option<u64>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
    /// Also write the atoms of mu_D and sigma_D.
    #[arg(long)]
    pub export_measures: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, default_value = "tcp-fj")]
    pub model: String,
    #[arg(long = "x-max")]
    pub x_max: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Comma-separated levels `h = tau = dt`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05])]
    pub levels: Vec<f64>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let variant: TcpVariant = self.model.as_deref().unwrap_or("tcp-fj").parse()?;
                RunConfig::for_model(variant)
            }
        };
        if let Some(m) = &self.model {
            config.model.name = m.clone();
        }
        if self.x_max.is_some() {
            config.model.x_max = self.x_max;
        }
        if self.p.is_some() {
            config.model.p = self.p;
        }
        if let Some(h) = self.h {
            config.mesh.h = Some(h);
            config.mesh.edges = None;
        }
        if let Some(tau) = self.tau {
            config.scheme.tau = tau;
        }
        if let Some(dt) = self.dt {
            config.scheme.dt = dt;
        }
        if let Some(t) = self.horizon {
            config.horizon = t;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(method) = &self.method {
            config.scheme.method = method.clone();
        }
        Ok(config)
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = self.overrides.resolve()?;
        if let Some(particles) = self.particles {
            config.mc = Some(McSection { particles });
        }
        if let Some(s) = &self.snapshots {
            config.snapshots = s.clone();
        }
        config.export_measures |= self.export_measures;
        config.validate()?;
        Ok(config)
    }
}

fn exit_for(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

pub fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            match args.preset {
                Some(Preset::Figure1) => {
                    let reports = run::execute_figure1(&config)?;
                    let mut passed = true;
                    for (label, report) in &reports {
                        println!("{label}: {}", if report.passed() { "ok" } else { "fail" });
                        for v in &report.violations {
                            log::error!("{label}: {v}");
                        }
                        passed &= report.passed();
                    }
                    Ok(exit_for(passed))
                }
                None => {
                    let report = run::execute(&config)?;
                    print!("{}", report.render());
                    for v in &report.violations {
                        log::error!("{v}");
                    }
                    Ok(exit_for(report.passed()))
                }
            }
        }
        Command::Audit(args) => {
            let variant: TcpVariant = args.model.parse()?;
            let x_max = args.x_max.unwrap_or(match variant {
                TcpVariant::Infinite => 6.0,
                _ => 2.0,
            });
            // The last-cell width only matters for TCP-F; a tenth of the
            // window is the default mesh.
            let model = build_tcp_model(variant, x_max, args.p, 0.1 * x_max)?;
            let r = audit_hypotheses(&model, args.samples, args.seed)?;
            print!("{}", render_audit(&r));
            Ok(exit_for(r.rate_bound_respected()))
        }
        Command::Refine(args) => {
            let config = args.overrides.resolve()?;
            if args.levels.is_empty() {
                bail!("need at least one refinement level");
            }
            let rows = run::refine(&config, &args.levels)?;
            println!("h,tau,dt,residual");
            for (h, r) in &rows {
                println!("{h},{h},{h},{r:.16e}");
            }
            let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
            println!("strictly_decreasing: {decreasing}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub fn render_audit(r: &pdmp_fv::HypothesisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "samples: {}", r.samples);
    let _ = writeln!(out, "seed: {}", r.seed);
    let _ = writeln!(out, "lipschitz_flow: {:.16e}", r.lipschitz_flow_estimate);
    let _ = writeln!(out, "lipschitz_alpha: {:.16e}", r.lipschitz_alpha_estimate);
    let _ = writeln!(out, "identity_defect: {:.16e}", r.identity_defect);
    let _ = writeln!(out, "semigroup_defect: {:.16e}", r.semigroup_defect);
    let _ = writeln!(out, "cocycle_defect: {:.16e}", r.cocycle_defect);
    let _ = writeln!(out, "max_sampled_rate: {:.16e}", r.max_sampled_rate);
    let _ = writeln!(out, "rate_bound: {:.16e}", r.rate_bound);
    for (radius, value) in &r.tail_interior {
        let _ = writeln!(out, "tail_interior[{radius}]: {value:.16e}");
    }
    for (radius, value) in &r.tail_boundary {
        let _ = writeln!(out, "tail_boundary[{radius}]: {value:.16e}");
    }
    for (b, value) in &r.boundary_exponential {
        let _ = writeln!(out, "boundary_exponential[{b}]: {value:.16e}");
    }
    let _ = writeln!(out, "exponential_boundary_condition: {}", r.satisfied_h5c);
    if let Some((a0, b0)) = r.h5c_certificate {
        let _ = writeln!(out, "certificate_a0: {a0:.16e}");
        let _ = writeln!(out, "certificate_b0: {b0:.16e}");
    }
    let _ = writeln!(out, "truncation_leak: {:.16e}", r.truncation_leak);
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
