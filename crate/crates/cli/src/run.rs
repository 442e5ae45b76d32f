//! One run: coefficients, transient solve, diagnostics, optional Monte-Carlo
//! comparison, and the files written for it.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use pdmp_fv::measures::residual_terms;
use pdmp_fv::oracle::write_hit_series_csv;
use pdmp_fv::{
    compute_coefficients, estimate_density, estimate_sigma_mass, run_transient, verify_balance,
    DensityState, McConfig, Mesh1D, TestFunction,
};

use crate::config::RunConfig;

pub const BALANCE_TOLERANCE: f64 = 1e-13;
pub const MASS_TOLERANCE: f64 = 1e-9;

/// `key: value` lines of `report.txt`, plus the invariant violations found.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
    pub violations: Vec<String>,
}

impl Report {
    fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn put_f64(&mut self, key: &str, value: f64) {
        self.put(key, format!("{value:.16e}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}: {v}");
        }
        let _ = writeln!(out, "violations: {}", self.violations.len());
        for v in &self.violations {
            let _ = writeln!(out, "violation: {v}");
        }
        let _ = writeln!(out, "status: {}", if self.passed() { "ok" } else { "fail" });
        out
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_density(
    out: &mut impl Write,
    mesh: &Mesh1D,
    states: &[&DensityState],
    dt: f64,
) -> Result<()> {
    writeln!(out, "t,cell_center,density")?;
    let centers = mesh.centers();
    for state in states {
        let t = state.n as f64 * dt;
        for (c, p) in centers.iter().zip(&state.p) {
            writeln!(out, "{t:.16e},{c:.16e},{p:.16e}")?;
        }
    }
    Ok(())
}

/// Runs `config` and writes its artifacts into `config.output_dir`.
pub fn execute(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let (model, mesh) = config.build()?;
    let params = config.scheme_params()?;
    let mut report = Report::default();
    report.put("model", model.name());
    report.put_f64("x_max", config.x_max()?);
    report.put_f64("h", mesh.h());
    report.put("cells", mesh.num_cells());
    report.put_f64("tau", params.tau);
    report.put_f64("dt", params.dt);
    report.put_f64("horizon", config.horizon);
    report.put("method", params.method);
    report.put("seed", config.seed);

    let coeffs = compute_coefficients(&model, &mesh, params.tau, config.quadrature_spec()?)?;
    let balance = verify_balance(&coeffs, &mesh);
    let max_volume = mesh.volumes().into_iter().fold(0.0, f64::max);
    report.put_f64("balance_max_violation", balance.max_violation);
    if balance.max_violation > BALANCE_TOLERANCE * max_volume {
        report.violations.push(format!(
            "balance identity off by {:e} in cell {:?}",
            balance.max_violation, balance.worst_cell
        ));
    }
    if !coeffs.is_nonnegative() {
        report.violations.push("negative coefficient".into());
    }
    let lost_rate: f64 = (0..coeffs.num_cells()).map(|k| coeffs.leak(k)).sum();
    report.put_f64("truncation_leak_rate", lost_rate);

    let run = run_transient(
        &model,
        &mesh,
        &coeffs,
        &params,
        config.horizon,
        &config.snapshots,
    )?;
    let d = &run.diagnostics;
    report.put("steps", d.steps);
    report.put_f64("min_density", d.min_density);
    report.put_f64("max_mass_defect", d.max_mass_defect);
    report.put_f64("final_mass", run.final_state.mass);
    report.put_f64("lost_mass", run.final_state.lost_mass);
    report.put("fixed_point_iterations", d.fixed_point_iterations);
    report.put(
        "max_fixed_point_iterations_per_step",
        d.max_fixed_point_iterations,
    );
    report.put("non_monotone_steps", d.non_monotone_steps);
    if d.min_density < 0.0 {
        report
            .violations
            .push(format!("negative density {:e}", d.min_density));
    }
    if d.max_mass_defect > MASS_TOLERANCE {
        report
            .violations
            .push(format!("mass defect {:e}", d.max_mass_defect));
    }
    if d.non_monotone_steps > 0 {
        report.violations.push(format!(
            "{} steps with increasing fixed-point increments",
            d.non_monotone_steps
        ));
    }

    let mut states: Vec<&DensityState> = run.snapshots.iter().collect();
    states.push(&run.final_state);
    states.sort_by_key(|s| s.n);
    states.dedup_by_key(|s| s.n);
    let mut out = create(dir, "density.csv")?;
    write_density(&mut out, &mesh, &states, params.dt)?;
    out.flush()?;

    let mut out = create(dir, "sigma.csv")?;
    writeln!(out, "t,sigma_mass")?;
    for (t, m) in run.measures.sigma_mass_series() {
        writeln!(out, "{t:.16e},{m:.16e}")?;
    }
    out.flush()?;
    let sigma_total: f64 = run.measures.sigma_mass_series().iter().map(|s| s.1).sum();
    report.put_f64("sigma_total_mass", sigma_total);

    if config.export_measures {
        let mut out = create(dir, "mu_atoms.csv")?;
        run.measures.write_mu_csv(&mut out)?;
        out.flush()?;
        let mut out = create(dir, "sigma_atoms.csv")?;
        run.measures.write_sigma_csv(&mut out)?;
        out.flush()?;
    }

    let x_max = config.x_max()?;
    let functions = [
        ("bump", TestFunction::standard_bump(x_max)),
        (
            "state_constant",
            TestFunction::constant_in_state(1.0, 0.2 * config.horizon, 0.8 * config.horizon),
        ),
    ];
    let mut out = create(dir, "residual.csv")?;
    writeln!(
        out,
        "test_function,residual,final_term,initial_term,flow_term,jump_term,boundary_term"
    )?;
    for (name, g) in &functions {
        let t = residual_terms(&run.measures, &run.final_state, &model, g, config.horizon);
        writeln!(
            out,
            "{name},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t.residual(),
            t.final_term,
            t.initial_term,
            t.flow_term,
            t.jump_term,
            t.boundary_term
        )?;
        report.put_f64(&format!("residual_{name}"), t.residual());
    }
    out.flush()?;

    if let Some(mc) = &config.mc {
        let mc_config = McConfig::new(mc.particles, config.horizon, config.seed, mesh.clone());
        let hist = estimate_density(&model, &mc_config)?;
        let mut out = create(dir, "mc_histogram.csv")?;
        hist.write_csv(&mesh, &mut out)?;
        out.flush()?;
        let series = estimate_sigma_mass(&model, &mc_config, params.dt)?;
        let mut out = create(dir, "mc_hits.csv")?;
        write_hit_series_csv(&series, &mut out)?;
        out.flush()?;
        let mut out = create(dir, "comparison.csv")?;
        writeln!(out, "cell_center,fv_density,mc_density")?;
        for ((c, fv), mc) in mesh
            .centers()
            .iter()
            .zip(&run.final_state.p)
            .zip(&hist.density)
        {
            writeln!(out, "{c:.16e},{fv:.16e},{mc:.16e}")?;
        }
        out.flush()?;
        report.put("mc_particles", mc.particles);
        report.put_f64(
            "mc_l1_distance",
            hist.l1_distance(&run.final_state.p, &mesh),
        );
        report.put("mc_boundary_hits", hist.boundary_hits);
        report.put("mc_outside", hist.outside);
        if hist.outside > 0 {
            report
                .violations
                .push(format!("{} particles left the domain", hist.outside));
        }
    }

    fs::write(dir.join("report.txt"), report.render())
        .with_context(|| format!("cannot write report in {}", dir.display()))?;
    Ok(report)
}

/// The four parameter sets `(h, tau, dt)` of the figure-1 study.
pub const FIGURE1_SETS: [(f64, f64, f64); 4] = [
    (0.2, 0.2, 0.2),
    (0.1, 0.1, 0.1),
    (0.01, 0.01, 0.01),
    (0.01, 0.005, 0.01),
];

pub fn figure1_label(h: f64, tau: f64, dt: f64) -> String {
    format!("h{h}_tau{tau}_dt{dt}")
}

/// Runs the four figure-1 parameter sets concurrently, each in its own
/// subdirectory of `base.output_dir`.
pub fn execute_figure1(base: &RunConfig) -> Result<Vec<(String, Report)>> {
    let configs: Vec<(String, RunConfig)> = FIGURE1_SETS
        .iter()
        .map(|&(h, tau, dt)| {
            let label = figure1_label(h, tau, dt);
            let mut c = base.clone();
            c.mesh.h = Some(h);
            c.mesh.edges = None;
            c.scheme.tau = tau;
            c.scheme.dt = dt;
            c.output_dir = base.output_dir.join(&label);
            (label, c)
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(label, c)| (label.clone(), scope.spawn(move || execute(c))))
            .collect();
        handles
            .into_iter()
            .map(|(label, h)| {
                let report = h
                    .join()
                    .map_err(|_| anyhow::anyhow!("run {label} panicked"))?
                    .with_context(|| format!("run {label}"))?;
                Ok((label, report))
            })
            .collect()
    })
}

/// Weak residual of the standard bump at each refinement level
/// `h = tau = dt`.
pub fn refine(config: &RunConfig, levels: &[f64]) -> Result<Vec<(f64, f64)>> {
    let x_max = config.x_max()?;
    let g = TestFunction::standard_bump(x_max);
    levels
        .iter()
        .map(|&h| {
            let mut c = config.clone();
            c.mesh.h = Some(h);
            c.mesh.edges = None;
            c.scheme.tau = h;
            c.scheme.dt = h;
            c.validate()?;
            let (model, mesh) = c.build()?;
            let params = c.scheme_params()?;
            let coeffs = compute_coefficients(&model, &mesh, h, c.quadrature_spec()?)?;
            let run = run_transient(&model, &mesh, &coeffs, &params, c.horizon, &[])?;
            let t = residual_terms(&run.measures, &run.final_state, &model, &g, c.horizon);
            Ok((h, t.residual()))
        })
        .collect()
}
