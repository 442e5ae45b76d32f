//! Sampled numerical audit of the structural hypotheses on a model.
//!
//! Lipschitz constants are estimated by the largest difference quotient seen
//! over the sampled pairs, so they are lower bounds. The exponential boundary
//! condition is scanned over a geometric grid of rates `B`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PdmpModel;
use crate::error::{Error, Result};

/// Exponents `k` of the rate grid `B = 2^k`.
const RATE_EXPONENTS: std::ops::RangeInclusive<i32> = -4..=10;
const TAIL_RADII: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
/// Preferred margin when choosing the certificate `(a0, B0)`.
const TARGET_BOUNDARY_VALUE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub samples: usize,
    pub seed: u64,
    /// Largest `|phi(x,t) - phi(y,s)| / (|x-y| + |t-s|)` over sampled pairs.
    pub lipschitz_flow_estimate: f64,
    pub lipschitz_alpha_estimate: f64,
    /// Largest `|phi(x, 0) - x|`.
    pub identity_defect: f64,
    /// Largest `|phi(phi(x,t),s) - phi(x,t+s)|` with `t + s < alpha(x)`.
    pub semigroup_defect: f64,
    /// Largest `|alpha(phi(x,t)) - (alpha(x) - t)|` with `0 < t < alpha(x)`.
    pub cocycle_defect: f64,
    pub max_sampled_rate: f64,
    pub rate_bound: f64,
    /// `(r, f_Q(r))` for the interior kernel.
    pub tail_interior: Vec<(f64, f64)>,
    /// `(r, f_q(r))` for the boundary kernel.
    pub tail_boundary: Vec<(f64, f64)>,
    /// `(B, sup_x int exp(-B alpha(y)) q(x, dy))` over sampled boundary points.
    pub boundary_exponential: Vec<(f64, f64)>,
    pub satisfied_h5c: bool,
    /// `(a0, B0)` such that the boundary supremum at `B0` is `1 - a0`.
    pub h5c_certificate: Option<(f64, f64)>,
    /// Largest kernel or initial mass found below the truncation bound.
    pub truncation_leak: f64,
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    pub fn rate_bound_respected(&self) -> bool {
        self.max_sampled_rate <= self.rate_bound
    }

    /// Value of the boundary supremum at the grid rate `b`, if sampled.
    pub fn boundary_value_at(&self, b: f64) -> Option<f64> {
        self.boundary_exponential
            .iter()
            .find(|(rate, _)| *rate == b)
            .map(|&(_, v)| v)
    }
}

/// Audits `model` with `samples` random states drawn from a generator seeded
/// by `seed`. Pure in `(model, samples, seed)`.
pub fn audit_hypotheses(model: &PdmpModel, samples: usize, seed: u64) -> Result<HypothesisReport> {
    if samples < 100 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("at least 100 samples are needed, got {samples}"),
        });
    }
    let domain = *model.domain();
    let lo = domain.truncation_lower;
    let hi = domain.upper;
    let width = domain.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();

    let states: Vec<f64> = (0..samples).map(|_| rng.random_range(lo..hi)).collect();

    let mut lip_flow = 0.0f64;
    let mut lip_alpha = 0.0f64;
    let mut identity = 0.0f64;
    let mut semigroup = 0.0f64;
    let mut cocycle = 0.0f64;
    let mut max_rate = 0.0f64;
    let perturbation = 1e-3 * width;

    for &x in &states {
        identity = identity.max((model.flow(x, 0.0) - x).abs());
        max_rate = max_rate.max(model.rate(x));

        let t = rng.random_range(0.0..width);
        let y = (x + rng.random_range(-perturbation..perturbation)).clamp(lo, hi);
        let s = (t + rng.random_range(-perturbation..perturbation)).max(0.0);
        let dist = (x - y).abs() + (t - s).abs();
        if dist > 0.0 {
            lip_flow = lip_flow.max((model.flow(x, t) - model.flow(y, s)).abs() / dist);
        }
        if x != y {
            lip_alpha = lip_alpha.max((model.alpha(x) - model.alpha(y)).abs() / (x - y).abs());
        }
        // far pairs as well, since the perturbed ones only probe local slopes
        let z: f64 = rng.random_range(lo..hi);
        if z != x {
            lip_alpha = lip_alpha.max((model.alpha(x) - model.alpha(z)).abs() / (x - z).abs());
        }

        let a = model.alpha(x);
        if a > 0.0 && !model.hitting_time().is_sentinel(a) {
            let t1 = rng.random_range(0.0..1.0) * a;
            let s1 = rng.random_range(0.0..1.0) * (a - t1) * 0.999;
            if t1 + s1 < a {
                semigroup = semigroup
                    .max((model.flow(model.flow(x, t1), s1) - model.flow(x, t1 + s1)).abs());
            }
            let t2 = rng.random_range(0.0..1.0) * a;
            if t2 > 0.0 && t2 < a {
                cocycle = cocycle.max((model.alpha(model.flow(x, t2)) - (a - t2)).abs());
            }
        }
    }

    if max_rate > model.rate_bound() {
        warnings.push(format!(
            "sampled rate {max_rate} exceeds the declared bound {}",
            model.rate_bound()
        ));
    }

    let mut images: Vec<f64> = states
        .iter()
        .filter(|&&x| !model.hitting_time().is_sentinel(model.alpha(x)))
        .map(|&x| model.boundary_image(x))
        .collect();
    images.sort_by(f64::total_cmp);
    images.dedup();

    let tail = |kernel: &super::MixtureKernel, sources: &[f64], r: f64| -> f64 {
        sources
            .iter()
            .map(|&x| {
                let reach = x.abs() + r;
                let upper = kernel
                    .mass_on_interval(x, reach, f64::INFINITY)
                    .unwrap_or(0.0);
                let lower = kernel
                    .mass_on_interval(x, f64::NEG_INFINITY, -reach)
                    .unwrap_or(0.0);
                upper + lower
            })
            .fold(0.0, f64::max)
    };
    let tail_interior = TAIL_RADII
        .iter()
        .map(|&r| (r, tail(model.interior_kernel(), &states, r)))
        .collect();
    let tail_boundary = TAIL_RADII
        .iter()
        .map(|&r| (r, tail(model.boundary_kernel(), &images, r)))
        .collect();

    let boundary_exponential: Vec<(f64, f64)> = RATE_EXPONENTS
        .map(|k| {
            let b = 2f64.powi(k);
            let sup = images
                .iter()
                .map(|&z| {
                    model
                        .boundary_kernel()
                        .integrate(z, |y| (-b * model.alpha(y)).exp())
                })
                .fold(0.0, f64::max);
            (b, sup)
        })
        .collect();

    let certificate = boundary_exponential
        .iter()
        .find(|(_, v)| *v <= TARGET_BOUNDARY_VALUE)
        .or_else(|| boundary_exponential.iter().find(|(_, v)| *v < 1.0))
        .map(|&(b, v)| (1.0 - v, b));
    if images.is_empty() {
        warnings.push("no sampled state reaches the boundary".into());
    }
    if certificate.is_none() {
        warnings.push("exponential boundary condition not certified on the rate grid".into());
    }

    let mut leak = model
        .initial_law()
        .kernel()
        .mass_on_interval(0.0, f64::NEG_INFINITY, lo)
        .unwrap_or(0.0);
    for &x in &states {
        let m = model
            .interior_kernel()
            .mass_on_interval(x, f64::NEG_INFINITY, lo)
            .unwrap_or(0.0);
        leak = leak.max(m);
    }
    for &z in &images {
        let m = model
            .boundary_kernel()
            .mass_on_interval(z, f64::NEG_INFINITY, lo)
            .unwrap_or(0.0);
        leak = leak.max(m);
    }
    if leak > 0.0 {
        warnings.push(format!(
            "kernels put mass up to {leak:e} below the truncation bound {lo}"
        ));
    }

    Ok(HypothesisReport {
        samples,
        seed,
        lipschitz_flow_estimate: lip_flow,
        lipschitz_alpha_estimate: lip_alpha,
        identity_defect: identity,
        semigroup_defect: semigroup,
        cocycle_defect: cocycle,
        max_sampled_rate: max_rate,
        rate_bound: model.rate_bound(),
        tail_interior,
        tail_boundary,
        boundary_exponential,
        satisfied_h5c: certificate.is_some(),
        h5c_certificate: certificate,
        truncation_leak: leak,
        warnings,
    })
}
