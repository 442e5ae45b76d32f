//! Finite-volume coefficients: flow transfers `v_KL`, jump transfers
//! `lambda_KL` and `lambda_K`, boundary exits `q_K` and their redistribution
//! `q_KL`.
//!
//! Each cell carries one quadrature point set. A point `x` of weight `w`
//! either survives the window `tau` inside `F` and contributes `w / tau` to
//! `v_K,L(x)`, or reaches the boundary first and contributes `w / tau` to
//! `q_K`. Since every point lands in exactly one of the two, the balance
//! `tau (sum_L v_KL + q_K) = |K|` holds up to summation roundoff.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sprs::CsMat;

use crate::error::{Error, Result};
use crate::mesh::{Location, Mesh1D};
use crate::model::{CellDistribution, PdmpModel};

/// Entries below this are dropped after assembly (and booked as lost mass).
pub const DROP_THRESHOLD: f64 = 1e-15;

pub const DEFAULT_POINTS_PER_CELL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    MidpointComposite,
    FixedSeedUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub points_per_cell: usize,
    pub rule: QuadratureRule,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            points_per_cell: DEFAULT_POINTS_PER_CELL,
            rule: QuadratureRule::MidpointComposite,
            seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn midpoint(points_per_cell: usize) -> Self {
        QuadratureSpec {
            points_per_cell,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_cell == 0 {
            return Err(Error::InvalidParameter {
                name: "points_per_cell",
                reason: "at least one quadrature point per cell is needed".into(),
            });
        }
        Ok(())
    }

    /// Points of cell `[a, b)` and their common weight `(b - a) / M`.
    pub fn nodes(&self, a: f64, b: f64, cell: usize) -> (Vec<f64>, f64) {
        let m = self.points_per_cell;
        let w = (b - a) / m as f64;
        let points = match self.rule {
            QuadratureRule::MidpointComposite => (0..m).map(|j| a + (j as f64 + 0.5) * w).collect(),
            QuadratureRule::FixedSeedUniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(cell as u64);
                (0..m).map(|_| rng.random_range(a..b)).collect()
            }
        };
        (points, w)
    }
}

/// Immutable coefficient set for one `(model, mesh, tau, quadrature)`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    tau: f64,
    volumes: Vec<f64>,
    v: CsMat<f64>,
    lambda_mat: CsMat<f64>,
    lambda_vec: Vec<f64>,
    q_vec: Vec<f64>,
    q_mat: CsMat<f64>,
    lost_flow: Vec<f64>,
    lost_jump: Vec<f64>,
    lost_boundary: Vec<f64>,
    boundary_images: Vec<Vec<(f64, f64)>>,
    quadrature: QuadratureSpec,
}

#[derive(Default)]
struct CellRow {
    v: Vec<(usize, f64)>,
    lambda: Vec<(usize, f64)>,
    q: Vec<(usize, f64)>,
    lambda_total: f64,
    q_total: f64,
    lost_flow: f64,
    lost_jump: f64,
    lost_boundary: f64,
    boundary: Vec<(f64, f64)>,
}

fn assemble_cell(
    model: &PdmpModel,
    mesh: &Mesh1D,
    tau: f64,
    quad: &QuadratureSpec,
    cell: usize,
) -> CellRow {
    let (a, b) = mesh.cell(cell);
    let (points, w) = quad.nodes(a, b, cell);
    let unit = w / tau;

    let mut flow_counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut exit_count = 0u64;
    let mut lost_count = 0u64;
    let mut lambda: BTreeMap<usize, f64> = BTreeMap::new();
    let mut q: BTreeMap<usize, f64> = BTreeMap::new();
    let mut row = CellRow::default();
    let mut kernel_cache: HashMap<u64, CellDistribution> = HashMap::new();

    for &x in &points {
        let alpha = model.alpha(x);
        if alpha > tau {
            match mesh.locate(model.flow(x, tau)) {
                Location::Cell(l) => *flow_counts.entry(l).or_default() += 1,
                _ => lost_count += 1,
            }
        } else {
            exit_count += 1;
            let image = model.flow(x, alpha);
            row.boundary.push((w, image));
            let dist = kernel_cache
                .entry(image.to_bits())
                .or_insert_with(|| model.boundary_kernel().distribute(image, mesh));
            for &(l, m) in &dist.cells {
                *q.entry(l).or_default() += unit * m;
            }
            row.lost_boundary += unit * dist.outside();
        }

        let rate = model.rate(x);
        if rate > 0.0 {
            let weight = w * rate;
            row.lambda_total += weight;
            let dist = model.interior_kernel().distribute(x, mesh);
            for &(l, m) in &dist.cells {
                *lambda.entry(l).or_default() += weight * m;
            }
            row.lost_jump += weight * dist.outside();
        }
    }

    row.q_total = exit_count as f64 * unit;
    row.lost_flow = lost_count as f64 * unit;
    row.v = flow_counts
        .into_iter()
        .map(|(l, c)| (l, c as f64 * unit))
        .collect();
    row.lambda = lambda.into_iter().collect();
    row.q = q.into_iter().collect();

    // Drop negligible entries, keeping their mass on the books.
    let (kept, dropped) = drop_small(std::mem::take(&mut row.v));
    row.v = kept;
    row.lost_flow += dropped;
    let (kept, dropped) = drop_small(std::mem::take(&mut row.lambda));
    row.lambda = kept;
    row.lost_jump += dropped;
    let (kept, dropped) = drop_small(std::mem::take(&mut row.q));
    row.q = kept;
    row.lost_boundary += dropped;
    row
}

fn drop_small(entries: Vec<(usize, f64)>) -> (Vec<(usize, f64)>, f64) {
    let mut dropped = 0.0;
    let kept = entries
        .into_iter()
        .filter(|&(_, v)| {
            if v.abs() < DROP_THRESHOLD {
                dropped += v;
                false
            } else {
                true
            }
        })
        .collect();
    (kept, dropped)
}

fn csr_from_rows(n: usize, rows: impl Iterator<Item = Vec<(usize, f64)>>) -> CsMat<f64> {
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    indptr.push(0);
    for row in rows {
        for (c, v) in row {
            indices.push(c);
            data.push(v);
        }
        indptr.push(indices.len());
    }
    CsMat::new((n, n), indptr, indices, data)
}

fn row_sums(m: &CsMat<f64>) -> Vec<f64> {
    m.outer_iterator().map(|r| r.data().iter().sum()).collect()
}

/// Computes all coefficients of the scheme for time window `tau`.
pub fn compute_coefficients(
    model: &PdmpModel,
    mesh: &Mesh1D,
    tau: f64,
    quad: QuadratureSpec,
) -> Result<CoefficientSet> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be positive, got {tau}"),
        });
    }
    quad.validate()?;
    let n = mesh.num_cells();
    let rows: Vec<CellRow> = (0..n)
        .into_par_iter()
        .map(|k| assemble_cell(model, mesh, tau, &quad, k))
        .collect();

    let set = CoefficientSet {
        tau,
        volumes: mesh.volumes(),
        v: csr_from_rows(n, rows.iter().map(|r| r.v.clone())),
        lambda_mat: csr_from_rows(n, rows.iter().map(|r| r.lambda.clone())),
        lambda_vec: rows.iter().map(|r| r.lambda_total).collect(),
        q_vec: rows.iter().map(|r| r.q_total).collect(),
        q_mat: csr_from_rows(n, rows.iter().map(|r| r.q.clone())),
        lost_flow: rows.iter().map(|r| r.lost_flow).collect(),
        lost_jump: rows.iter().map(|r| r.lost_jump).collect(),
        lost_boundary: rows.iter().map(|r| r.lost_boundary).collect(),
        boundary_images: rows.into_iter().map(|r| r.boundary).collect(),
        quadrature: quad,
    };
    let lost: f64 = set
        .lost_flow
        .iter()
        .chain(&set.lost_jump)
        .chain(&set.lost_boundary)
        .sum();
    if lost > 0.0 {
        log::warn!("coefficients send {lost:e} (per unit time) outside the truncated domain");
    }
    Ok(set)
}

impl CoefficientSet {
    /// Assembles a coefficient set from explicit parts. Mass that `lambda_vec`
    /// or `q_vec` carry beyond the row sums of their matrices is treated as
    /// leaving the domain.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        tau: f64,
        volumes: Vec<f64>,
        v: CsMat<f64>,
        lambda_mat: CsMat<f64>,
        lambda_vec: Vec<f64>,
        q_vec: Vec<f64>,
        q_mat: CsMat<f64>,
        lost_flow: Vec<f64>,
    ) -> Result<Self> {
        let n = volumes.len();
        let shapes_ok = [&v, &lambda_mat, &q_mat]
            .iter()
            .all(|m| m.shape() == (n, n) && m.is_csr())
            && lambda_vec.len() == n
            && q_vec.len() == n
            && lost_flow.len() == n;
        if !shapes_ok {
            return Err(Error::DimensionMismatch(format!(
                "coefficient parts do not match {n} cells"
            )));
        }
        let negative = [&v, &lambda_mat, &q_mat]
            .iter()
            .any(|m| m.data().iter().any(|&x| x < 0.0))
            || lambda_vec
                .iter()
                .chain(&q_vec)
                .chain(&lost_flow)
                .any(|&x| x < 0.0);
        if negative {
            return Err(Error::InvalidParameter {
                name: "coefficients",
                reason: "entries must be nonnegative".into(),
            });
        }
        let lost_jump = lambda_vec
            .iter()
            .zip(row_sums(&lambda_mat))
            .map(|(t, s)| (t - s).max(0.0))
            .collect();
        let lost_boundary = q_vec
            .iter()
            .zip(row_sums(&q_mat))
            .map(|(t, s)| (t - s).max(0.0))
            .collect();
        Ok(CoefficientSet {
            tau,
            v,
            lambda_mat,
            lambda_vec,
            q_vec,
            q_mat,
            lost_flow,
            lost_jump,
            lost_boundary,
            boundary_images: vec![Vec::new(); n],
            quadrature: QuadratureSpec::default(),
            volumes,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn num_cells(&self) -> usize {
        self.volumes.len()
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn v(&self) -> &CsMat<f64> {
        &self.v
    }

    pub fn lambda_mat(&self) -> &CsMat<f64> {
        &self.lambda_mat
    }

    pub fn lambda_vec(&self) -> &[f64] {
        &self.lambda_vec
    }

    pub fn q_vec(&self) -> &[f64] {
        &self.q_vec
    }

    pub fn q_mat(&self) -> &CsMat<f64> {
        &self.q_mat
    }

    pub fn lost_flow(&self) -> &[f64] {
        &self.lost_flow
    }

    pub fn lost_jump(&self) -> &[f64] {
        &self.lost_jump
    }

    pub fn lost_boundary(&self) -> &[f64] {
        &self.lost_boundary
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    /// `(w, phi(x, alpha(x)))` for each quadrature point of cell `k` that
    /// reaches the boundary within `tau`.
    pub fn boundary_images(&self, k: usize) -> &[(f64, f64)] {
        &self.boundary_images[k]
    }

    /// Per-unit-time mass leaving the truncated domain from cell `k`.
    pub fn leak(&self, k: usize) -> f64 {
        self.lost_flow[k] + self.lost_jump[k] + self.lost_boundary[k]
    }

    /// Outgoing transfers `v_KL + lambda_KL + q_KL` (row `K`, column `L`).
    pub fn transfers(&self) -> CsMat<f64> {
        &(&self.v + &self.lambda_mat) + &self.q_mat
    }

    pub fn is_nonnegative(&self) -> bool {
        [&self.v, &self.lambda_mat, &self.q_mat]
            .iter()
            .all(|m| m.data().iter().all(|&x| x >= 0.0))
            && self
                .lambda_vec
                .iter()
                .chain(&self.q_vec)
                .chain(&self.lost_flow)
                .chain(&self.lost_jump)
                .chain(&self.lost_boundary)
                .all(|&x| x >= 0.0)
    }

    /// Largest `|lambda_K - sum_L lambda_KL - lost_K|`.
    pub fn lambda_consistency(&self) -> f64 {
        row_sums(&self.lambda_mat)
            .iter()
            .enumerate()
            .map(|(k, s)| (self.lambda_vec[k] - s - self.lost_jump[k]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `sum_L q_KL - q_K` (positive means the kernel created mass).
    pub fn boundary_excess(&self) -> f64 {
        row_sums(&self.q_mat)
            .iter()
            .zip(&self.q_vec)
            .map(|(s, q)| s - q)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    /// Writes the flow, jump and boundary matrices as `matrix row col value`
    /// lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# matrix row col value")?;
        for (name, m) in [
            ("v", &self.v),
            ("lambda", &self.lambda_mat),
            ("q", &self.q_mat),
        ] {
            for (value, (r, c)) in m.iter() {
                writeln!(out, "{name} {r} {c} {value:.16e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    /// `max_K |tau (sum_L v_KL + q_K + lost_K) - |K||`.
    pub max_violation: f64,
    pub worst_cell: Option<usize>,
}

/// Checks the flow/boundary balance of every cell against the mesh volumes.
/// Flow leaving the truncated domain counts as outgoing flux.
pub fn verify_balance(coeffs: &CoefficientSet, mesh: &Mesh1D) -> BalanceReport {
    let tau = coeffs.tau;
    let mut report = BalanceReport {
        max_violation: 0.0,
        worst_cell: None,
    };
    for (k, row) in coeffs.v.outer_iterator().enumerate() {
        let out: f64 = row.data().iter().sum::<f64>() + coeffs.q_vec[k] + coeffs.lost_flow[k];
        let violation = (tau * out - mesh.volume(k)).abs();
        if report.worst_cell.is_none() || violation > report.max_violation {
            report.max_violation = violation;
            report.worst_cell = Some(k);
        }
    }
    report
}
