//! Piecewise deterministic Markov processes with a forcing boundary, described
//! as data: flow, hitting time, jump rate, interior and boundary kernels, and
//! initial law.

mod audit;
mod kernel;
mod tcp;

use std::fmt;
use std::sync::Arc;

pub use audit::{audit_hypotheses, HypothesisReport};
pub use kernel::{
    Atom, CellDistribution, DensityPart, InitialLaw, MixtureKernel, StateFn, StatePairFn,
    KERNEL_QUADRATURE_TOLERANCE,
};
pub use tcp::{build_tcp_model, tcp_domain, TcpVariant};

use crate::error::{Error, Result};

/// Hitting times beyond this many time units are reported as the horizon.
pub const DEFAULT_HITTING_HORIZON: f64 = 1e6;

/// State space `F = (lower, upper)`, computed on `[truncation_lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub dimension: usize,
    pub lower: f64,
    pub upper: f64,
    pub truncation_lower: f64,
}

impl DomainSpec {
    pub fn new(lower: f64, upper: f64, truncation_lower: f64) -> Result<Self> {
        Self::with_dimension(1, lower, upper, truncation_lower)
    }

    pub fn with_dimension(
        dimension: usize,
        lower: f64,
        upper: f64,
        truncation_lower: f64,
    ) -> Result<Self> {
        if dimension != 1 {
            return Err(Error::UnsupportedDimension(dimension));
        }
        if !truncation_lower.is_finite() || !upper.is_finite() || !(truncation_lower < upper) {
            return Err(Error::InvalidDomain {
                lower: truncation_lower,
                upper,
            });
        }
        if lower > truncation_lower {
            return Err(Error::InvalidDomain {
                lower: truncation_lower,
                upper,
            });
        }
        Ok(DomainSpec {
            dimension,
            lower,
            upper,
            truncation_lower,
        })
    }

    /// Width of the computational interval.
    pub fn width(&self) -> f64 {
        self.upper - self.truncation_lower
    }

    /// Membership in the open state space `F`.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// Deterministic motion `phi(x, t)`.
#[derive(Clone)]
pub struct FlowMap(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl FlowMap {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        FlowMap(Arc::new(f))
    }

    pub fn evaluate(&self, x: f64, t: f64) -> f64 {
        (self.0)(x, t)
    }
}

/// First time the flow from `x` enters `G`, capped at a horizon for flows
/// that never leave `F`.
#[derive(Clone)]
pub struct HittingTime {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    horizon: f64,
}

impl HittingTime {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        HittingTime {
            f: Arc::new(f),
            horizon: DEFAULT_HITTING_HORIZON,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let a = (self.f)(x);
        if a.is_nan() || a > self.horizon {
            self.horizon
        } else {
            a.max(0.0)
        }
    }

    /// True when `evaluate(x)` is the horizon sentinel rather than a hit.
    pub fn is_sentinel(&self, value: f64) -> bool {
        value >= self.horizon
    }
}

/// The sextuple `(phi, alpha, lambda, Q, q, rho_ini)` with its domain.
#[derive(Clone)]
pub struct PdmpModel {
    name: String,
    domain: DomainSpec,
    flow: FlowMap,
    alpha: HittingTime,
    rate: StateFn,
    rate_bound: f64,
    interior_kernel: MixtureKernel,
    boundary_kernel: MixtureKernel,
    initial_law: InitialLaw,
}

impl fmt::Debug for PdmpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdmpModel")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("rate_bound", &self.rate_bound)
            .finish_non_exhaustive()
    }
}

impl PdmpModel {
    pub fn builder(name: impl Into<String>, domain: DomainSpec) -> PdmpModelBuilder {
        PdmpModelBuilder {
            name: name.into(),
            domain,
            flow: None,
            alpha: None,
            rate: None,
            rate_bound: None,
            interior_kernel: None,
            boundary_kernel: None,
            initial_law: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn flow(&self, x: f64, t: f64) -> f64 {
        self.flow.evaluate(x, t)
    }

    pub fn flow_map(&self) -> &FlowMap {
        &self.flow
    }

    pub fn alpha(&self, x: f64) -> f64 {
        self.alpha.evaluate(x)
    }

    pub fn hitting_time(&self) -> &HittingTime {
        &self.alpha
    }

    pub fn rate(&self, x: f64) -> f64 {
        (self.rate)(x)
    }

    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    pub fn interior_kernel(&self) -> &MixtureKernel {
        &self.interior_kernel
    }

    pub fn boundary_kernel(&self) -> &MixtureKernel {
        &self.boundary_kernel
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial_law
    }

    /// `phi(x, alpha(x))`, the point of the active boundary reached from `x`.
    pub fn boundary_image(&self, x: f64) -> f64 {
        self.flow(x, self.alpha(x))
    }
}

pub struct PdmpModelBuilder {
    name: String,
    domain: DomainSpec,
    flow: Option<FlowMap>,
    alpha: Option<HittingTime>,
    rate: Option<StateFn>,
    rate_bound: Option<f64>,
    interior_kernel: Option<MixtureKernel>,
    boundary_kernel: Option<MixtureKernel>,
    initial_law: Option<InitialLaw>,
}

impl PdmpModelBuilder {
    pub fn flow(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.flow = Some(FlowMap::new(f));
        self
    }

    pub fn hitting_time(mut self, alpha: HittingTime) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn rate(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static, bound: f64) -> Self {
        self.rate = Some(Arc::new(f));
        self.rate_bound = Some(bound);
        self
    }

    pub fn interior_kernel(mut self, k: MixtureKernel) -> Self {
        self.interior_kernel = Some(k);
        self
    }

    pub fn boundary_kernel(mut self, k: MixtureKernel) -> Self {
        self.boundary_kernel = Some(k);
        self
    }

    pub fn initial_law(mut self, law: InitialLaw) -> Self {
        self.initial_law = Some(law);
        self
    }

    pub fn build(self) -> Result<PdmpModel> {
        fn missing(name: &'static str) -> Error {
            Error::InvalidParameter {
                name,
                reason: "not set".into(),
            }
        }
        let rate_bound = self.rate_bound.ok_or_else(|| missing("rate"))?;
        if !(rate_bound > 0.0) || !rate_bound.is_finite() {
            return Err(Error::InvalidParameter {
                name: "rate_bound",
                reason: format!("must be a positive finite bound, got {rate_bound}"),
            });
        }
        let initial_law = self.initial_law.ok_or_else(|| missing("initial_law"))?;
        let m = initial_law.total_mass();
        if (m - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "initial_law",
                reason: format!("total mass {m} is not 1"),
            });
        }
        Ok(PdmpModel {
            name: self.name,
            domain: self.domain,
            flow: self.flow.ok_or_else(|| missing("flow"))?,
            alpha: self.alpha.ok_or_else(|| missing("hitting_time"))?,
            rate: self.rate.ok_or_else(|| missing("rate"))?,
            rate_bound,
            interior_kernel: self
                .interior_kernel
                .unwrap_or_else(|| MixtureKernel::dirac(|x| x)),
            boundary_kernel: self
                .boundary_kernel
                .ok_or_else(|| missing("boundary_kernel"))?,
            initial_law,
        })
    }
}
