//! Time-implicit finite-volume scheme.
//!
//! One step solves, for every cell `K`,
//!
//! ```text
//! (|K| + dt * out_K) p_{n+1}^K - dt * sum_L p_{n+1}^L (v_LK + lambda_LK + q_LK) = |K| p_n^K
//! ```
//!
//! where `out_K = sum_L (v_KL + lambda_KL + q_KL) + leak_K` is the total
//! outgoing rate of cell `K`. Given the balance `tau (sum_L v_KL + q_K) = |K|`
//! and `lambda_K = sum_L lambda_KL`, this is `(1 + dt/tau)|K| + dt lambda_K`;
//! using the assembled outflow keeps mass conservation at the rounding level
//! even when `dt` is huge.

mod lu;

pub use lu::SignedLu;

use std::fmt;
use std::str::FromStr;

use sprs::CsMat;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasures;
use crate::mesh::Mesh1D;
use crate::model::PdmpModel;

pub const DEFAULT_FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_FIXED_POINT_ITERATIONS: usize = 1_000_000;
/// Negative values down to this are treated as roundoff and clamped.
pub const NEGATIVE_CLAMP: f64 = -1e-13;
/// Below this time step `run_stationary` warns that it is not in the
/// large-step regime.
pub const STATIONARY_DT_THRESHOLD: f64 = 1e3;
pub const STATIONARY_TOLERANCE: f64 = 1e-10;
pub const MAX_STATIONARY_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    FixedPoint,
    DirectFactorization,
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMethod::FixedPoint => "fixed-point",
            SolverMethod::DirectFactorization => "direct",
        })
    }
}

impl FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-point" | "fixed_point" | "fixedpoint" => Ok(SolverMethod::FixedPoint),
            "direct" | "direct-factorization" | "lu" => Ok(SolverMethod::DirectFactorization),
            other => Err(Error::InvalidParameter {
                name: "method",
                reason: format!("unknown solver method `{other}` (expected fixed-point or direct)"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub dt: f64,
    pub tau: f64,
    pub fixed_point_tolerance: f64,
    pub max_fixed_point_iterations: usize,
    pub method: SolverMethod,
    /// Log one progress line every this many steps (0 disables).
    pub log_every: usize,
}

impl SchemeParams {
    pub fn new(dt: f64, tau: f64, method: SolverMethod) -> Self {
        SchemeParams {
            dt,
            tau,
            fixed_point_tolerance: DEFAULT_FIXED_POINT_TOLERANCE,
            max_fixed_point_iterations: DEFAULT_MAX_FIXED_POINT_ITERATIONS,
            method,
            log_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("dt", self.dt), ("tau", self.tau)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {value}"),
                });
            }
        }
        if !(self.fixed_point_tolerance > 0.0) || self.max_fixed_point_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "fixed_point_tolerance",
                reason: "tolerance and iteration budget must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Cell densities `p_n^K` at time index `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub p: Vec<f64>,
    pub n: usize,
    pub time: f64,
    /// `sum_K |K| p^K`.
    pub mass: f64,
    /// Cumulative mass that left the truncated domain.
    pub lost_mass: f64,
}

impl DensityState {
    pub fn new(p: Vec<f64>, volumes: &[f64]) -> Self {
        let mass = weighted_mass(&p, volumes);
        DensityState {
            p,
            n: 0,
            time: 0.0,
            mass,
            lost_mass: 0.0,
        }
    }

    pub fn min_density(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `|mass + lost - 1|`.
    pub fn mass_defect(&self) -> f64 {
        (self.mass + self.lost_mass - 1.0).abs()
    }
}

pub fn weighted_mass(p: &[f64], volumes: &[f64]) -> f64 {
    p.iter().zip(volumes).map(|(p, v)| p * v).sum()
}

/// `sum_K |K| |a^K - b^K|`.
pub fn weighted_l1(a: &[f64], b: &[f64], volumes: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(volumes)
        .map(|((a, b), v)| v * (a - b).abs())
        .sum()
}

/// `p_0^K = rho_ini(K) / |K|`.
pub fn init_density(model: &PdmpModel, mesh: &Mesh1D) -> Result<DensityState> {
    let dist = model.initial_law().distribute(mesh);
    if dist.outside() > 1e-12 {
        return Err(Error::InitialMassOutside {
            escaping: dist.outside(),
        });
    }
    let volumes = mesh.volumes();
    let mut p = vec![0.0; mesh.num_cells()];
    for (k, m) in dist.cells {
        p[k] += m / volumes[k];
    }
    Ok(DensityState::new(p, &volumes))
}

/// Trace of one fixed-point solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    pub iterations: usize,
    /// `u_k = sum_L dt * out_L |p_(k) - p_(k-1)|` for `k = 1, 2, ...`.
    pub increments: Vec<f64>,
    /// Size of `u_k` attributable to rounding of the final iterate.
    pub rounding_floor: f64,
}

impl FixedPointTrace {
    pub fn is_nonincreasing(&self) -> bool {
        self.increments.windows(2).all(|w| w[1] <= w[0])
    }

    /// Nonincreasing except for changes below the rounding floor.
    pub fn is_nonincreasing_above_rounding(&self) -> bool {
        self.increments
            .windows(2)
            .all(|w| w[1] <= w[0] || w[1] - w[0] <= self.rounding_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: DensityState,
    pub trace: Option<FixedPointTrace>,
}

/// Implicit stepper for one coefficient set and time step. The direct method
/// factorizes once here and reuses the factors for every step.
pub struct ImplicitSolver<'a> {
    coeffs: &'a CoefficientSet,
    params: SchemeParams,
    /// Row `K`: incoming transfers `T_KL = v_LK + lambda_LK + q_LK`.
    incoming: CsMat<f64>,
    diag: Vec<f64>,
    out_weights: Vec<f64>,
    leak: Vec<f64>,
    lu: Option<SignedLu>,
}

impl<'a> ImplicitSolver<'a> {
    pub fn new(coeffs: &'a CoefficientSet, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        if (params.tau - coeffs.tau()).abs() > 1e-12 * coeffs.tau() {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!(
                    "scheme tau {} differs from the coefficient tau {}",
                    params.tau,
                    coeffs.tau()
                ),
            });
        }
        let dt = params.dt;
        let n = coeffs.num_cells();
        let outgoing = coeffs.transfers();
        let leak: Vec<f64> = (0..n).map(|k| coeffs.leak(k)).collect();
        let out_weights: Vec<f64> = outgoing
            .outer_iterator()
            .enumerate()
            .map(|(k, row)| dt * (row.data().iter().sum::<f64>() + leak[k]))
            .collect();
        let diag = coeffs
            .volumes()
            .iter()
            .zip(&out_weights)
            .map(|(v, w)| v + w)
            .collect();
        let incoming = outgoing.transpose_view().to_csr();
        let lu = match params.method {
            SolverMethod::DirectFactorization => {
                let scaled = outgoing.map(|x| dt * x);
                let sums: Vec<f64> = coeffs
                    .volumes()
                    .iter()
                    .zip(&leak)
                    .map(|(v, l)| v + dt * l)
                    .collect();
                let lu = SignedLu::factor(&scaled, &sums)?;
                log::debug!(
                    "factorized {n} cells with {} off-diagonal entries",
                    lu.fill()
                );
                Some(lu)
            }
            SolverMethod::FixedPoint => None,
        };
        Ok(ImplicitSolver {
            coeffs,
            params,
            incoming,
            diag,
            out_weights,
            leak,
            lu,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        self.coeffs
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &DensityState) -> Result<StepOutcome> {
        let volumes = self.coeffs.volumes();
        if state.p.len() != volumes.len() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} cells, coefficients {}",
                state.p.len(),
                volumes.len()
            )));
        }
        let (mut p, trace) = match &self.lu {
            Some(lu) => {
                let rhs: Vec<f64> = state.p.iter().zip(volumes).map(|(p, v)| p * v).collect();
                (lu.solve(&rhs), None)
            }
            None => {
                let (p, trace) = self.fixed_point(&state.p)?;
                (p, Some(trace))
            }
        };
        clamp_roundoff(&mut p, volumes)?;
        let lost: f64 = p.iter().zip(&self.leak).map(|(p, l)| p * l).sum::<f64>() * self.params.dt;
        let mass = weighted_mass(&p, volumes);
        Ok(StepOutcome {
            state: DensityState {
                p,
                n: state.n + 1,
                time: (state.n + 1) as f64 * self.params.dt,
                mass,
                lost_mass: state.lost_mass + lost,
            },
            trace,
        })
    }

    /// Jacobi-type iteration started from `p_n`:
    /// `D_K p_(k+1)^K = dt sum_L T_KL p_(k)^L + |K| p_n^K`.
    pub fn fixed_point(&self, previous: &[f64]) -> Result<(Vec<f64>, FixedPointTrace)> {
        let dt = self.params.dt;
        let volumes = self.coeffs.volumes();
        let rhs: Vec<f64> = previous.iter().zip(volumes).map(|(p, v)| p * v).collect();
        let mut current = previous.to_vec();
        let mut next = vec![0.0; current.len()];
        let mut increments = Vec::new();
        for iteration in 1..=self.params.max_fixed_point_iterations {
            let mut u = 0.0;
            for (k, row) in self.incoming.outer_iterator().enumerate() {
                let inflow: f64 = row.iter().map(|(l, &t)| t * current[l]).sum();
                let value = (dt * inflow + rhs[k]) / self.diag[k];
                u += self.out_weights[k] * (value - current[k]).abs();
                next[k] = value;
            }
            std::mem::swap(&mut current, &mut next);
            increments.push(u);
            if u < self.params.fixed_point_tolerance {
                let weighted: f64 = current
                    .iter()
                    .zip(&self.out_weights)
                    .map(|(p, w)| p.abs() * w)
                    .sum();
                return Ok((
                    current,
                    FixedPointTrace {
                        iterations: iteration,
                        increments,
                        rounding_floor: 4.0 * f64::EPSILON * weighted,
                    },
                ));
            }
        }
        Err(Error::FixedPointBudget {
            iterations: self.params.max_fixed_point_iterations,
            tolerance: self.params.fixed_point_tolerance,
            last: increments.last().copied().unwrap_or(f64::NAN),
        })
    }
}

fn clamp_roundoff(p: &mut [f64], volumes: &[f64]) -> Result<()> {
    let Some((cell, &value)) = p.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) else {
        return Ok(());
    };
    if value >= 0.0 {
        return Ok(());
    }
    if value < NEGATIVE_CLAMP || value.is_nan() {
        return Err(Error::NegativeDensity { cell, value });
    }
    let before = weighted_mass(p, volumes);
    for x in p.iter_mut() {
        *x = x.max(0.0);
    }
    let after = weighted_mass(p, volumes);
    if after > 0.0 {
        let scale = before / after;
        for x in p.iter_mut() {
            *x *= scale;
        }
    }
    Ok(())
}

/// One implicit step (factorizing afresh for the direct method).
pub fn step_implicit(
    state: &DensityState,
    coeffs: &CoefficientSet,
    params: &SchemeParams,
) -> Result<DensityState> {
    Ok(ImplicitSolver::new(coeffs, *params)?.step(state)?.state)
}

/// Fixed-point solve of one step with right-hand side `|K| rhs^K`.
pub fn fixed_point_solve(
    rhs: &DensityState,
    coeffs: &CoefficientSet,
    params: &SchemeParams,
) -> Result<(DensityState, FixedPointTrace)> {
    let params = SchemeParams {
        method: SolverMethod::FixedPoint,
        ..*params
    };
    if rhs.p.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter {
            name: "rhs",
            reason: "fixed-point right-hand side must be nonnegative".into(),
        });
    }
    let outcome = ImplicitSolver::new(coeffs, params)?.step(rhs)?;
    Ok((outcome.state, outcome.trace.expect("fixed-point trace")))
}

/// Per-run invariant tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub min_density: f64,
    pub max_mass_defect: f64,
    pub fixed_point_iterations: usize,
    pub max_fixed_point_iterations: usize,
    /// Steps whose increment sequence `u_k` increased by more than rounding.
    pub non_monotone_steps: usize,
}

impl RunDiagnostics {
    fn new(initial: &DensityState) -> Self {
        RunDiagnostics {
            steps: 0,
            min_density: initial.min_density(),
            max_mass_defect: initial.mass_defect(),
            fixed_point_iterations: 0,
            max_fixed_point_iterations: 0,
            non_monotone_steps: 0,
        }
    }

    fn record(&mut self, outcome: &StepOutcome) {
        self.steps += 1;
        self.min_density = self.min_density.min(outcome.state.min_density());
        self.max_mass_defect = self.max_mass_defect.max(outcome.state.mass_defect());
        if let Some(trace) = &outcome.trace {
            self.fixed_point_iterations += trace.iterations;
            self.max_fixed_point_iterations = self.max_fixed_point_iterations.max(trace.iterations);
            if !trace.is_nonincreasing_above_rounding() {
                self.non_monotone_steps += 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transient {
    pub initial: DensityState,
    /// States at the requested snapshot times, in request order.
    pub snapshots: Vec<DensityState>,
    pub final_state: DensityState,
    pub measures: DiscreteMeasures,
    pub diagnostics: RunDiagnostics,
}

/// Number of steps of size `dt` covering `[0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    let ratio = horizon / dt;
    (ratio - 1e-9 * ratio.max(1.0)).ceil().max(0.0) as usize
}

/// Runs the scheme from `rho_ini` up to `horizon`, recording the discrete
/// measures and the states at the requested `snapshots` times.
pub fn run_transient(
    model: &PdmpModel,
    mesh: &Mesh1D,
    coeffs: &CoefficientSet,
    params: &SchemeParams,
    horizon: f64,
    snapshots: &[f64],
) -> Result<Transient> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be a finite nonnegative time, got {horizon}"),
        });
    }
    let solver = ImplicitSolver::new(coeffs, *params)?;
    let initial = init_density(model, mesh)?;
    let steps = step_count(horizon, params.dt);
    let targets: Vec<usize> = snapshots
        .iter()
        .map(|&t| ((t / params.dt).round().max(0.0) as usize).min(steps))
        .collect();
    let mut taken: Vec<Option<DensityState>> = targets
        .iter()
        .map(|&n| (n == 0).then(|| initial.clone()))
        .collect();

    let mut measures = DiscreteMeasures::new(mesh, coeffs, params.dt);
    let mut diagnostics = RunDiagnostics::new(&initial);
    let mut state = initial.clone();
    for _ in 0..steps {
        let outcome = solver.step(&state)?;
        diagnostics.record(&outcome);
        state = outcome.state;
        measures.push(state.p.clone());
        for (slot, &n) in taken.iter_mut().zip(&targets) {
            if n == state.n {
                *slot = Some(state.clone());
            }
        }
        if params.log_every > 0 && state.n % params.log_every == 0 {
            log::info!(
                "step {}/{} t={:.4} mass={:.15} lost={:e}",
                state.n,
                steps,
                state.time,
                state.mass,
                state.lost_mass
            );
        }
    }
    Ok(Transient {
        initial,
        snapshots: taken
            .into_iter()
            .map(|s| s.expect("snapshot recorded"))
            .collect(),
        final_state: state,
        measures,
        diagnostics,
    })
}

#[derive(Debug, Clone)]
pub struct Stationary {
    pub state: DensityState,
    pub steps: usize,
    pub last_change: f64,
}

/// Iterates large implicit steps from `rho_ini` until successive densities
/// differ by less than `1e-10` in weighted L1.
pub fn run_stationary(
    model: &PdmpModel,
    mesh: &Mesh1D,
    coeffs: &CoefficientSet,
    params: &SchemeParams,
) -> Result<Stationary> {
    if params.dt < STATIONARY_DT_THRESHOLD {
        log::warn!(
            "stationary run with dt = {} below the large-step threshold {}",
            params.dt,
            STATIONARY_DT_THRESHOLD
        );
    }
    let solver = ImplicitSolver::new(coeffs, *params)?;
    let mut state = init_density(model, mesh)?;
    let mut last_change = f64::INFINITY;
    for step in 1..=MAX_STATIONARY_STEPS {
        let next = solver.step(&state)?.state;
        last_change = weighted_l1(&next.p, &state.p, coeffs.volumes());
        state = next;
        if last_change < STATIONARY_TOLERANCE {
            return Ok(Stationary {
                state,
                steps: step,
                last_change,
            });
        }
    }
    Err(Error::StationaryNotConverged {
        steps: MAX_STATIONARY_STEPS,
        last: last_change,
    })
}
