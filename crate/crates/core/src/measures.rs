//! Discrete occupation measures `mu_D`, boundary measures `sigma_D`, and the
//! weak residual of the Kolmogorov equation evaluated against them.
//!
//! Step `n` contributes `dt |K| p_{n+1}^K` spread over cell `K` at time
//! `n dt`, so the residual carries a first order time-quadrature error.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::model::PdmpModel;
use crate::solver::DensityState;

/// Default step for the flow derivative, clamped to `alpha(x) / 2`.
pub const DEFAULT_FLOW_EPSILON: f64 = 1e-4;

/// Bounded test function `g(x, t)` vanishing for `t >= support_end`.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    support_end: f64,
    smoothness: &'static str,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("support_end", &self.support_end)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        support_end: f64,
        smoothness: &'static str,
    ) -> Self {
        TestFunction {
            f: Arc::new(f),
            support_end,
            smoothness,
        }
    }

    pub fn zero() -> Self {
        TestFunction::new(|_, _| 0.0, 0.0, "zero")
    }

    /// `c * cutoff(t)`, constant in the state.
    pub fn constant_in_state(c: f64, flat_until: f64, support_end: f64) -> Self {
        TestFunction::new(
            move |_, t| c * time_cutoff(t, flat_until, support_end),
            support_end,
            "smooth",
        )
    }

    /// Smooth bump of half-width `radius` around `center`, times the time
    /// cutoff equal to 1 up to `flat_until` and 0 from `support_end` on.
    pub fn bump(center: f64, radius: f64, flat_until: f64, support_end: f64) -> Self {
        TestFunction::new(
            move |x, t| bump(x, center, radius) * time_cutoff(t, flat_until, support_end),
            support_end,
            "smooth",
        )
    }

    /// The bump used for refinement studies on a domain `[0, x_max)`.
    pub fn standard_bump(x_max: f64) -> Self {
        TestFunction::bump(0.4 * x_max, 0.5 * x_max, 1.0, 3.0)
    }

    pub fn evaluate(&self, x: f64, t: f64) -> f64 {
        if t >= self.support_end {
            0.0
        } else {
            (self.f)(x, t)
        }
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    pub fn smoothness(&self) -> &'static str {
        self.smoothness
    }
}

/// `exp(1 - 1/(1 - r^2))` for `r = (x - center)/radius` inside the support.
pub fn bump(x: f64, center: f64, radius: f64) -> f64 {
    let r = (x - center) / radius;
    let s = 1.0 - r * r;
    if s <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / s).exp()
    }
}

fn smooth_step_part(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Smooth nonincreasing cutoff: 1 for `t <= start`, 0 for `t >= end`.
pub fn time_cutoff(t: f64, start: f64, end: f64) -> f64 {
    if t <= start {
        return 1.0;
    }
    if t >= end {
        return 0.0;
    }
    let s = (t - start) / (end - start);
    let a = smooth_step_part(1.0 - s);
    let b = smooth_step_part(s);
    a / (a + b)
}

/// Derivative of `g` along the flow at `(x, t)`, from forward differences
/// with steps `epsilon` and `epsilon / 2` combined by Richardson
/// extrapolation.
pub fn flow_derivative(
    g: &TestFunction,
    model: &PdmpModel,
    x: f64,
    t: f64,
    epsilon: f64,
) -> Result<f64> {
    let alpha = model.alpha(x);
    if !(epsilon > 0.0) || epsilon >= alpha {
        return Err(Error::StepBeyondBoundary { epsilon, alpha });
    }
    Ok(richardson(g, model, x, t, epsilon))
}

fn richardson(g: &TestFunction, model: &PdmpModel, x: f64, t: f64, epsilon: f64) -> f64 {
    let g0 = g.evaluate(x, t);
    let diff = |e: f64| (g.evaluate(model.flow(x, e), t + e) - g0) / e;
    2.0 * diff(0.5 * epsilon) - diff(epsilon)
}

fn clamped_flow_derivative(g: &TestFunction, model: &PdmpModel, x: f64, t: f64) -> f64 {
    let alpha = model.alpha(x);
    let epsilon = if alpha > 0.0 {
        DEFAULT_FLOW_EPSILON.min(0.5 * alpha)
    } else {
        // On the boundary itself the flow is stopped.
        DEFAULT_FLOW_EPSILON
    };
    richardson(g, model, x, t, epsilon)
}

/// `mu_D` and `sigma_D` of one transient run.
#[derive(Debug, Clone)]
pub struct DiscreteMeasures {
    dt: f64,
    tau: f64,
    mesh: Mesh1D,
    volumes: Vec<f64>,
    /// Quadrature nodes and common weight per cell.
    nodes: Vec<(Vec<f64>, f64)>,
    /// Boundary images per cell as `(weight, image)`, merged by image.
    boundary: Vec<Vec<(f64, f64)>>,
    densities: Vec<Vec<f64>>,
}

impl DiscreteMeasures {
    pub fn new(mesh: &Mesh1D, coeffs: &CoefficientSet, dt: f64) -> Self {
        let quad = coeffs.quadrature();
        let nodes = (0..mesh.num_cells())
            .map(|k| {
                let (a, b) = mesh.cell(k);
                quad.nodes(a, b, k)
            })
            .collect();
        let boundary = (0..mesh.num_cells())
            .map(|k| {
                let mut merged: Vec<(f64, f64)> = Vec::new();
                for &(w, image) in coeffs.boundary_images(k) {
                    match merged
                        .iter_mut()
                        .find(|(_, y)| y.to_bits() == image.to_bits())
                    {
                        Some(slot) => slot.0 += w,
                        None => merged.push((w, image)),
                    }
                }
                merged
            })
            .collect();
        DiscreteMeasures {
            dt,
            tau: coeffs.tau(),
            mesh: mesh.clone(),
            volumes: mesh.volumes(),
            nodes,
            boundary,
            densities: Vec::new(),
        }
    }

    /// Records `p_{n+1}` for the next step `n`.
    pub fn push(&mut self, p: Vec<f64>) {
        debug_assert_eq!(p.len(), self.volumes.len());
        self.densities.push(p);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.densities.len()
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    /// Density `p_{n+1}` attached to step `n`.
    pub fn density(&self, n: usize) -> &[f64] {
        &self.densities[n]
    }

    fn step_time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// `int_K f(x) dx` with the cell quadrature.
    fn cell_integral(&self, k: usize, f: impl Fn(f64) -> f64) -> f64 {
        let (points, w) = &self.nodes[k];
        w * points.iter().map(|&x| f(x)).sum::<f64>()
    }

    /// `int f d mu_D = sum_n dt sum_K p_{n+1}^K int_K f(x, n dt) dx`.
    pub fn integrate_mu(&self, f: &TestFunction) -> f64 {
        self.mu_with(|x, t| f.evaluate(x, t))
    }

    fn mu_with(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
        let per_step: Vec<f64> = (0..self.steps())
            .into_par_iter()
            .map(|n| {
                let t = self.step_time(n);
                let p = &self.densities[n];
                p.iter()
                    .enumerate()
                    .filter(|(_, &pk)| pk != 0.0)
                    .map(|(k, &pk)| pk * self.cell_integral(k, |x| f(x, t)))
                    .sum::<f64>()
            })
            .collect();
        self.dt * per_step.iter().sum::<f64>()
    }

    /// `int f d sigma_D = sum_n dt sum_K p_{n+1}^K (1/tau) sum_images w f(image, n dt)`.
    pub fn integrate_sigma(&self, f: &TestFunction) -> f64 {
        self.sigma_with(|y, t| f.evaluate(y, t))
    }

    fn sigma_with(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
        let per_step: Vec<f64> = (0..self.steps())
            .into_par_iter()
            .map(|n| {
                let t = self.step_time(n);
                let p = &self.densities[n];
                let mut cache: HashMap<u64, f64> = HashMap::new();
                let mut total = 0.0;
                for (k, images) in self.boundary.iter().enumerate() {
                    if images.is_empty() || p[k] == 0.0 {
                        continue;
                    }
                    let mut cell = 0.0;
                    for &(w, y) in images {
                        let value = *cache.entry(y.to_bits()).or_insert_with(|| f(y, t));
                        cell += w * value;
                    }
                    total += p[k] * cell;
                }
                total
            })
            .collect();
        self.dt / self.tau * per_step.iter().sum::<f64>()
    }

    /// `(n dt, sigma_D mass of step n)` for every step.
    pub fn sigma_mass_series(&self) -> Vec<(f64, f64)> {
        let per_cell: Vec<f64> = self
            .boundary
            .iter()
            .map(|images| images.iter().map(|(w, _)| w).sum::<f64>() / self.tau)
            .collect();
        self.densities
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let mass: f64 = p.iter().zip(&per_cell).map(|(p, q)| p * q).sum();
                (self.step_time(n), self.dt * mass)
            })
            .collect()
    }

    /// `mu_D` atoms as CSV lines `t,x,weight` (cell centers).
    pub fn write_mu_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,weight")?;
        let centers = self.mesh.centers();
        for (n, p) in self.densities.iter().enumerate() {
            let t = self.step_time(n);
            for k in 0..p.len() {
                let weight = self.dt * self.volumes[k] * p[k];
                writeln!(out, "{:.16e},{:.16e},{:.16e}", t, centers[k], weight)?;
            }
        }
        Ok(())
    }

    /// `sigma_D` atoms as CSV lines `t,x,weight`, merged by image per step.
    pub fn write_sigma_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,weight")?;
        for (n, p) in self.densities.iter().enumerate() {
            let t = self.step_time(n);
            let mut atoms: Vec<(f64, f64)> = Vec::new();
            for (k, images) in self.boundary.iter().enumerate() {
                for &(w, y) in images {
                    let weight = self.dt * p[k] * w / self.tau;
                    match atoms.iter_mut().find(|(x, _)| x.to_bits() == y.to_bits()) {
                        Some(slot) => slot.1 += weight,
                        None => atoms.push((y, weight)),
                    }
                }
            }
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (y, weight) in atoms {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", t, y, weight)?;
            }
        }
        Ok(())
    }
}

/// Terms of the weak Kolmogorov equation for one test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTerms {
    pub final_term: f64,
    pub initial_term: f64,
    pub flow_term: f64,
    pub jump_term: f64,
    pub boundary_term: f64,
}

impl ResidualTerms {
    pub fn residual(&self) -> f64 {
        (self.final_term - self.initial_term - self.flow_term - self.jump_term - self.boundary_term)
            .abs()
    }
}

/// All terms of the weak residual; see [`kolmogorov_residual`].
pub fn residual_terms(
    measures: &DiscreteMeasures,
    final_density: &DensityState,
    model: &PdmpModel,
    g: &TestFunction,
    horizon: f64,
) -> ResidualTerms {
    let final_term: f64 = final_density
        .p
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(k, &p)| p * measures.cell_integral(k, |x| g.evaluate(x, horizon)))
        .sum();
    let initial_term = model.initial_law().integrate(|x| g.evaluate(x, 0.0));
    let flow_term = measures.mu_with(|x, t| {
        if t >= g.support_end() {
            0.0
        } else {
            clamped_flow_derivative(g, model, x, t)
        }
    });
    let jump_term = measures.mu_with(|x, t| {
        let rate = model.rate(x);
        if rate == 0.0 || t >= g.support_end() {
            return 0.0;
        }
        let moved = model.interior_kernel().integrate(x, |y| g.evaluate(y, t));
        rate * (moved - g.evaluate(x, t))
    });
    let boundary_term = measures.sigma_with(|y, t| {
        if t >= g.support_end() {
            return 0.0;
        }
        model.boundary_kernel().integrate(y, |z| g.evaluate(z, t)) - g.evaluate(y, t)
    });
    ResidualTerms {
        final_term,
        initial_term,
        flow_term,
        jump_term,
        boundary_term,
    }
}

/// `|int g(.,T) rho_T - int g(.,0) rho_ini - int d_phi g dmu_D
///   - int lambda (Qg - g) dmu_D - int (qg - g) dsigma_D|`
/// with `rho_T` the piecewise constant `final_density`.
pub fn kolmogorov_residual(
    measures: &DiscreteMeasures,
    final_density: &DensityState,
    model: &PdmpModel,
    g: &TestFunction,
    horizon: f64,
) -> f64 {
    residual_terms(measures, final_density, model, g, horizon).residual()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{compute_coefficients, QuadratureSpec};
    use crate::model::{build_tcp_model, DomainSpec, TcpVariant};
    use crate::solver::{run_transient, SchemeParams, SolverMethod};

    fn translation() -> PdmpModel {
        let domain = DomainSpec::new(0.0, 10.0, 0.0).unwrap();
        PdmpModel::builder("translation", domain)
            .flow(|x, t| x + t)
            .hitting_time(crate::model::HittingTime::new(|x| 10.0 - x))
            .rate(|_| 0.0, 1.0)
            .boundary_kernel(crate::model::MixtureKernel::fixed_dirac(0.0))
            .initial_law(crate::model::InitialLaw::dirac(0.0))
            .build()
            .unwrap()
    }

    #[test]
    fn flow_derivative_of_simple_functions() {
        let m = translation();
        let gx = TestFunction::new(|x, _| x, 100.0, "linear");
        let gt = TestFunction::new(|_, t| t, 100.0, "linear");
        let gxt = TestFunction::new(|x, t| x * t, 100.0, "bilinear");
        assert!((flow_derivative(&gx, &m, 1.0, 2.0, 1e-3).unwrap() - 1.0).abs() < 1e-6);
        assert!((flow_derivative(&gt, &m, 1.0, 2.0, 1e-3).unwrap() - 1.0).abs() < 1e-10);
        assert!((flow_derivative(&gxt, &m, 1.0, 2.0, 1e-3).unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn flow_derivative_rejects_large_step() {
        let m = translation();
        let g = TestFunction::zero();
        assert!(matches!(
            flow_derivative(&g, &m, 9.5, 0.0, 0.5),
            Err(Error::StepBeyondBoundary { .. })
        ));
    }

    #[test]
    fn cutoff_is_smooth_step() {
        assert_eq!(time_cutoff(0.5, 1.0, 3.0), 1.0);
        assert_eq!(time_cutoff(3.0, 1.0, 3.0), 0.0);
        assert!((time_cutoff(2.0, 1.0, 3.0) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=200 {
            let v = time_cutoff(1.0 + i as f64 * 0.01, 1.0, 3.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn bump_vanishes_outside() {
        assert_eq!(bump(2.0, 1.0, 1.0), 0.0);
        assert_eq!(bump(1.0, 1.0, 1.0), 1.0);
        assert!(bump(1.5, 1.0, 1.0) > 0.0);
    }

    fn run(h: f64) -> (PdmpModel, crate::solver::Transient) {
        let model = build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 0.5, h).unwrap();
        let mesh = Mesh1D::uniform(model.domain(), h).unwrap();
        let coeffs = compute_coefficients(&model, &mesh, h, QuadratureSpec::midpoint(16)).unwrap();
        let params = SchemeParams::new(h, h, SolverMethod::DirectFactorization);
        let run = run_transient(&model, &mesh, &coeffs, &params, 4.0, &[]).unwrap();
        (model, run)
    }

    #[test]
    fn unit_function_integrates_to_horizon() {
        let (_, run) = run(0.2);
        let one = TestFunction::new(|_, _| 1.0, f64::INFINITY, "constant");
        assert!((run.measures.integrate_mu(&one) - 4.0).abs() < 1e-8);
        assert_eq!(run.measures.integrate_mu(&TestFunction::zero()), 0.0);
        assert_eq!(run.measures.integrate_sigma(&TestFunction::zero()), 0.0);
    }

    #[test]
    fn sigma_sees_only_the_boundary_point() {
        let (_, run) = run(0.2);
        let at_x = TestFunction::new(
            |x, _| if x == 2.0 { 1.0 } else { 0.0 },
            f64::INFINITY,
            "indicator",
        );
        let one = TestFunction::new(|_, _| 1.0, f64::INFINITY, "constant");
        let a = run.measures.integrate_sigma(&at_x);
        let b = run.measures.integrate_sigma(&one);
        assert!(b > 0.0);
        assert!((a - b).abs() <= 1e-12 * b);
        let series: f64 = run.measures.sigma_mass_series().iter().map(|s| s.1).sum();
        assert!((series - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn zero_test_function_has_zero_residual() {
        let (model, run) = run(0.2);
        let r = kolmogorov_residual(
            &run.measures,
            &run.final_state,
            &model,
            &TestFunction::zero(),
            4.0,
        );
        assert_eq!(r, 0.0);
    }

    #[test]
    fn state_constant_function_has_tiny_residual() {
        let (model, run) = run(0.1);
        let g = TestFunction::constant_in_state(1.5, 0.2, 3.8);
        let r = kolmogorov_residual(&run.measures, &run.final_state, &model, &g, 4.0);
        assert!(r <= 1e-6, "residual {r}");
    }

    #[test]
    fn integrators_are_linear() {
        let (_, run) = run(0.2);
        let f = TestFunction::bump(1.0, 0.7, 1.0, 3.0);
        let g = TestFunction::new(|x, t| x * (-t).exp(), f64::INFINITY, "smooth");
        let (a, b) = (0.7, -2.3);
        let (f2, g2) = (f.clone(), g.clone());
        let h = TestFunction::new(
            move |x, t| a * f2.evaluate(x, t) + b * g2.evaluate(x, t),
            f64::INFINITY,
            "smooth",
        );
        let m = &run.measures;
        assert!(
            (m.integrate_mu(&h) - a * m.integrate_mu(&f) - b * m.integrate_mu(&g)).abs() < 1e-10
        );
        assert!(
            (m.integrate_sigma(&h) - a * m.integrate_sigma(&f) - b * m.integrate_sigma(&g)).abs()
                < 1e-10
        );
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let (_, run) = run(0.2);
        let mut mu = Vec::new();
        run.measures.write_mu_csv(&mut mu).unwrap();
        let text = String::from_utf8(mu).unwrap();
        assert_eq!(text.lines().next(), Some("t,x,weight"));
        assert_eq!(text.lines().count(), 1 + 20 * 10);
        let mut sigma = Vec::new();
        run.measures.write_sigma_csv(&mut sigma).unwrap();
        let text = String::from_utf8(sigma).unwrap();
        assert_eq!(text.lines().count(), 1 + 20);
    }
}
