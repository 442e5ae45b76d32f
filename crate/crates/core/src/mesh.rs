//! Admissible partitions of the truncated state space into half-open cells.

use crate::error::{Error, Result};
use crate::model::DomainSpec;

/// Relative slack under which `h` is considered to divide the domain width.
const DIVISIBILITY_TOLERANCE: f64 = 1e-9;

/// Result of locating a point in a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Cell(usize),
    Below,
    Above,
}

impl Location {
    pub fn cell(self) -> Option<usize> {
        match self {
            Location::Cell(i) => Some(i),
            _ => None,
        }
    }
}

/// Cells `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    edges: Vec<f64>,
}

impl Mesh1D {
    /// Uniform cells of width `h` on `[truncation_lower, upper)`. When `h`
    /// does not divide the width the last cell is shortened.
    pub fn uniform(domain: &DomainSpec, h: f64) -> Result<Self> {
        let width = domain.width();
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidMesh(format!(
                "cell width must be positive, got {h}"
            )));
        }
        if h >= width {
            return Err(Error::InvalidMesh(format!(
                "cell width {h} must be smaller than the domain width {width}"
            )));
        }
        let ratio = width / h;
        let rounded = ratio.round();
        let cells = if (rounded - ratio).abs() <= DIVISIBILITY_TOLERANCE * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        };
        let lo = domain.truncation_lower;
        let mut edges: Vec<f64> = (0..cells).map(|i| lo + i as f64 * h).collect();
        edges.push(domain.upper);
        Self::from_edges(edges)
    }

    /// Mesh from an explicit strictly increasing edge list. A single edge
    /// gives the empty mesh.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidMesh("edge list is empty".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidMesh("edges must be finite".into()));
        }
        if let Some(w) = edges.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMesh(format!(
                "edges must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Mesh1D { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_cells(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.num_cells() == 0
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn upper(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn volume(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.num_cells()).map(|i| self.center(i)).collect()
    }

    /// Largest cell diameter.
    pub fn h(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index `i` with `edges[i] <= x < edges[i+1]`, by binary search.
    pub fn locate(&self, x: f64) -> Location {
        if x < self.lower() {
            return Location::Below;
        }
        if !(x < self.upper()) {
            return Location::Above;
        }
        let i = self.edges.partition_point(|&e| e <= x) - 1;
        Location::Cell(i)
    }

    /// First cell whose right edge lies beyond `x`.
    pub(crate) fn cell_index_at_or_after(&self, x: f64) -> usize {
        match self.locate(x) {
            Location::Cell(i) => i,
            Location::Below => 0,
            Location::Above => self.num_cells(),
        }
    }
}
