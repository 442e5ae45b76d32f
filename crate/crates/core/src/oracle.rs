//! Monte-Carlo simulation of the process itself: thinning for the jump rate,
//! deterministic boundary hits. Used as an independent reference for the
//! finite-volume densities.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Location, Mesh1D};
use crate::model::PdmpModel;

/// A thinning candidate within this of the boundary time loses to the
/// boundary.
pub const TIE_WINDOW: f64 = 1e-14;

const PARTICLES_PER_TASK: u64 = 4096;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub particles: u64,
    pub horizon: f64,
    pub seed: u64,
    pub histogram_mesh: Mesh1D,
}

impl McConfig {
    pub fn new(particles: u64, horizon: f64, seed: u64, histogram_mesh: Mesh1D) -> Self {
        McConfig {
            particles,
            horizon,
            seed,
            histogram_mesh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: "need at least one particle".into(),
            });
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be finite and nonnegative, got {}", self.horizon),
            });
        }
        if self.histogram_mesh.is_empty() {
            return Err(Error::InvalidMesh("histogram mesh has no cells".into()));
        }
        Ok(())
    }

    /// Independent stream of particle `i`.
    pub fn particle_rng(&self, i: u64) -> ChaCha8Rng {
        particle_rng(self.seed, i)
    }
}

pub fn particle_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Accepted stochastic jump.
    Jump,
    /// Boundary reached and kernel `q` applied.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Pre-jump position (on the boundary for `Boundary`).
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOutcome {
    pub state: f64,
    pub boundary_hits: u64,
    pub jumps: u64,
}

/// Simulates one trajectory on `[0, horizon]`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    model: &PdmpModel,
    horizon: f64,
    rng: &mut R,
) -> TrajectoryOutcome {
    simulate_trajectory_with(model, horizon, rng, |_| {})
}

/// Like [`simulate_trajectory`], reporting every event to `on_event`.
pub fn simulate_trajectory_with<R: Rng + ?Sized>(
    model: &PdmpModel,
    horizon: f64,
    rng: &mut R,
    mut on_event: impl FnMut(Event),
) -> TrajectoryOutcome {
    let bound = model.rate_bound();
    let candidates = Exp::new(bound).expect("rate bound is positive");
    // Positions are recomputed from the last jump target so that rejected
    // candidates do not accumulate rounding along the flow.
    let mut anchor = model.initial_law().sample(rng);
    let mut anchor_alpha = model.alpha(anchor);
    let mut since = 0.0;
    let mut t = 0.0;
    let mut outcome = TrajectoryOutcome {
        state: anchor,
        boundary_hits: 0,
        jumps: 0,
    };
    let x = loop {
        let alpha = anchor_alpha - since;
        let s: f64 = candidates.sample(rng);
        let remaining = horizon - t;
        let boundary_first = alpha <= s + TIE_WINDOW;
        let wait = if boundary_first { alpha.max(0.0) } else { s };
        if wait > remaining {
            break model.flow(anchor, since + remaining);
        }
        t += wait;
        since += wait;
        let y = model.flow(anchor, since);
        let target = if boundary_first {
            outcome.boundary_hits += 1;
            Some((EventKind::Boundary, model.boundary_kernel().sample(y, rng)))
        } else if rng.random::<f64>() * bound < model.rate(y) {
            outcome.jumps += 1;
            Some((EventKind::Jump, model.interior_kernel().sample(y, rng)))
        } else {
            None
        };
        if let Some((kind, to)) = target {
            on_event(Event {
                time: t,
                kind,
                from: y,
                to,
            });
            anchor = to;
            anchor_alpha = model.alpha(to);
            since = 0.0;
        }
    };
    outcome.state = x;
    outcome
}

/// Final-state histogram over `histogram_mesh`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub particles: u64,
    pub counts: Vec<u64>,
    /// `count / (particles |K|)`.
    pub density: Vec<f64>,
    pub boundary_hits: u64,
    /// Particles whose final state is outside the mesh.
    pub outside: u64,
}

impl Histogram {
    /// `sum_K |K| |density^K - p^K|`.
    pub fn l1_distance(&self, p: &[f64], mesh: &Mesh1D) -> f64 {
        crate::solver::weighted_l1(&self.density, p, &mesh.volumes())
    }

    /// `centers,density,count` CSV.
    pub fn write_csv<W: Write>(&self, mesh: &Mesh1D, mut out: W) -> io::Result<()> {
        writeln!(out, "cell_center,density,count")?;
        for (k, c) in mesh.centers().iter().enumerate() {
            writeln!(
                out,
                "{:.16e},{:.16e},{}",
                c, self.density[k], self.counts[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Tally {
    counts: Vec<u64>,
    hits: u64,
    outside: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.hits += other.hits;
        self.outside += other.outside;
        self
    }
}

fn batches(particles: u64) -> impl ParallelIterator<Item = std::ops::Range<u64>> {
    let tasks = particles.div_ceil(PARTICLES_PER_TASK);
    (0..tasks).into_par_iter().map(move |b| {
        let start = b * PARTICLES_PER_TASK;
        start..(start + PARTICLES_PER_TASK).min(particles)
    })
}

/// Runs `config.particles` independent trajectories in parallel. Particle `i`
/// uses stream `i` of the seed, so the result does not depend on scheduling.
pub fn estimate_density(model: &PdmpModel, config: &McConfig) -> Result<Histogram> {
    config.validate()?;
    let mesh = &config.histogram_mesh;
    let n = mesh.num_cells();
    let empty = Tally {
        counts: vec![0; n],
        hits: 0,
        outside: 0,
    };
    let tally = batches(config.particles)
        .map(|range| {
            let mut tally = empty.clone();
            for i in range {
                let mut rng = config.particle_rng(i);
                let out = simulate_trajectory(model, config.horizon, &mut rng);
                tally.hits += out.boundary_hits;
                match mesh.locate(out.state) {
                    Location::Cell(k) => tally.counts[k] += 1,
                    _ => tally.outside += 1,
                }
            }
            tally
        })
        .reduce(|| empty.clone(), Tally::merge);
    let volumes = mesh.volumes();
    let total = config.particles as f64;
    let density = tally
        .counts
        .iter()
        .zip(&volumes)
        .map(|(&c, v)| c as f64 / (total * v))
        .collect();
    if tally.outside > 0 {
        log::warn!(
            "{} particles ended outside the histogram mesh",
            tally.outside
        );
    }
    Ok(Histogram {
        particles: config.particles,
        counts: tally.counts,
        density,
        boundary_hits: tally.hits,
        outside: tally.outside,
    })
}

/// Boundary hits per particle binned into `[j w, (j+1) w)`, as
/// `(j w, hits / particles)`.
pub fn estimate_sigma_mass(
    model: &PdmpModel,
    config: &McConfig,
    bin_width: f64,
) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidParameter {
            name: "bin_width",
            reason: format!("must be positive, got {bin_width}"),
        });
    }
    let bins = ((config.horizon / bin_width).ceil() as usize).max(1);
    let zero = vec![0u64; bins];
    let counts = batches(config.particles)
        .map(|range| {
            let mut counts = zero.clone();
            for i in range {
                let mut rng = config.particle_rng(i);
                simulate_trajectory_with(model, config.horizon, &mut rng, |e| {
                    if e.kind == EventKind::Boundary {
                        let j = ((e.time / bin_width) as usize).min(bins - 1);
                        counts[j] += 1;
                    }
                });
            }
            counts
        })
        .reduce(
            || zero.clone(),
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let total = config.particles as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(j, c)| (j as f64 * bin_width, c as f64 / total))
        .collect())
}

/// `t_bin,hits_per_particle` CSV.
pub fn write_hit_series_csv<W: Write>(series: &[(f64, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "t_bin,hits_per_particle")?;
    for (t, h) in series {
        writeln!(out, "{:.16e},{:.16e}", t, h)?;
    }
    Ok(())
}

/// Kolmogorov-Smirnov statistic `sup |F_n - F|` of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS statistic at level
/// `significance`.
pub fn ks_critical_value(n: usize, significance: f64) -> f64 {
    (-(0.5 * significance).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
