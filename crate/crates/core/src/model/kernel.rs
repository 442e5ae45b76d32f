//! Transition kernels made of finitely many state-dependent atoms plus an
//! optional absolutely continuous part.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mesh::{Location, Mesh1D};
use crate::quadrature::adaptive_simpson;

pub type StateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type StatePairFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SupportFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Relative tolerance for quadrature of density parts without a closed form.
pub const KERNEL_QUADRATURE_TOLERANCE: f64 = 1e-10;

/// A point mass at `location(x)` carrying `weight(x)`.
#[derive(Clone)]
pub struct Atom {
    location: StateFn,
    weight: StateFn,
}

impl Atom {
    pub fn new(
        location: impl Fn(f64) -> f64 + Send + Sync + 'static,
        weight: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Atom {
            location: Arc::new(location),
            weight: Arc::new(weight),
        }
    }

    pub fn location(&self, source: f64) -> f64 {
        (self.location)(source)
    }

    pub fn weight(&self, source: f64) -> f64 {
        (self.weight)(source)
    }
}

/// Absolutely continuous part `density(x, y) dy` of total mass `mass(x)`,
/// supported on `support(x)`.
///
/// `cdf(x, y)` (mass of `(-inf, y)`) and `quantile(x, u)` (inverse of the
/// normalized cdf) are optional closed forms; quadrature and bisection are
/// used otherwise.
#[derive(Clone)]
pub struct DensityPart {
    density: StatePairFn,
    mass: StateFn,
    support: SupportFn,
    cdf: Option<StatePairFn>,
    quantile: Option<StatePairFn>,
}

impl DensityPart {
    pub fn new(
        density: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        mass: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        DensityPart {
            density: Arc::new(density),
            mass: Arc::new(mass),
            support: Arc::new(support),
            cdf: None,
            quantile: None,
        }
    }

    pub fn with_cdf(mut self, cdf: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.cdf = Some(Arc::new(cdf));
        self
    }

    pub fn with_quantile(
        mut self,
        quantile: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.quantile = Some(Arc::new(quantile));
        self
    }

    /// Source-independent uniform law on `(lo, hi)` carrying `mass`.
    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Self {
        let height = mass / (hi - lo);
        DensityPart::new(
            move |_, y| if y > lo && y < hi { height } else { 0.0 },
            move |_| mass,
            move |_| (lo, hi),
        )
        .with_cdf(move |_, y| mass * ((y - lo) / (hi - lo)).clamp(0.0, 1.0))
        .with_quantile(move |_, u| lo + u * (hi - lo))
    }

    pub fn density(&self, source: f64, target: f64) -> f64 {
        (self.density)(source, target)
    }

    pub fn mass(&self, source: f64) -> f64 {
        (self.mass)(source)
    }

    pub fn support(&self, source: f64) -> (f64, f64) {
        (self.support)(source)
    }

    pub fn has_closed_form(&self) -> bool {
        self.cdf.is_some()
    }

    fn mass_between(&self, source: f64, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support(source);
        let a = a.max(lo);
        let b = b.min(hi);
        if !(b > a) {
            return 0.0;
        }
        match &self.cdf {
            Some(cdf) => (cdf(source, b) - cdf(source, a)).max(0.0),
            None => adaptive_simpson(
                |y| self.density(source, y),
                a,
                b,
                KERNEL_QUADRATURE_TOLERANCE,
            ),
        }
    }

    fn integrate<F: Fn(f64) -> f64>(&self, source: f64, f: F) -> f64 {
        let (lo, hi) = self.support(source);
        adaptive_simpson(
            |y| self.density(source, y) * f(y),
            lo,
            hi,
            KERNEL_QUADRATURE_TOLERANCE,
        )
    }

    fn sample_unit(&self, source: f64, u: f64) -> f64 {
        if let Some(q) = &self.quantile {
            return q(source, u);
        }
        let (lo, hi) = self.support(source);
        let total = self.mass_between(source, lo, hi);
        let target = u * total;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.mass_between(source, lo, m) < target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-14 * (1.0 + m.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }
}

/// Mass a kernel puts on each mesh cell for one source point, plus what
/// escapes the mesh on either side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellDistribution {
    pub cells: Vec<(usize, f64)>,
    pub below: f64,
    pub above: f64,
}

impl CellDistribution {
    pub fn outside(&self) -> f64 {
        self.below + self.above
    }
}

/// `K(x, dy) = sum_i w_i(x) delta_{l_i(x)}(dy) + h(x, y) dy`.
#[derive(Clone, Default)]
pub struct MixtureKernel {
    atoms: Vec<Atom>,
    density: Option<DensityPart>,
}

impl fmt::Debug for MixtureKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixtureKernel")
            .field("atoms", &self.atoms.len())
            .field("density_part", &self.density.is_some())
            .finish()
    }
}

impl MixtureKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unit point mass at `location(x)`.
    pub fn dirac(location: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new().with_atom(Atom::new(location, |_| 1.0))
    }

    /// Unit point mass at a fixed point, whatever the source.
    pub fn fixed_dirac(point: f64) -> Self {
        Self::dirac(move |_| point)
    }

    pub fn with_atom(mut self, atom: Atom) -> Self {
        self.atoms.push(atom);
        self
    }

    pub fn with_density(mut self, part: DensityPart) -> Self {
        self.density = Some(part);
        self
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density_part(&self) -> Option<&DensityPart> {
        self.density.as_ref()
    }

    pub fn total_mass(&self, source: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight(source)).sum();
        atoms + self.density.as_ref().map_or(0.0, |d| d.mass(source))
    }

    /// `K(source, [a, b))`. Atoms are counted exactly; the density part uses
    /// its closed-form cdf when present and adaptive quadrature otherwise.
    pub fn mass_on_interval(&self, source: f64, a: f64, b: f64) -> Result<f64> {
        if a.is_nan() || b.is_nan() || !(a < b) {
            return Err(Error::MalformedInterval { a, b });
        }
        let mut mass = 0.0;
        for atom in &self.atoms {
            let y = atom.location(source);
            if y >= a && y < b {
                mass += atom.weight(source);
            }
        }
        if let Some(d) = &self.density {
            mass += d.mass_between(source, a, b);
        }
        Ok(mass)
    }

    /// `int f(y) K(source, dy)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, source: f64, f: F) -> f64 {
        let mut total = 0.0;
        for atom in &self.atoms {
            total += atom.weight(source) * f(atom.location(source));
        }
        if let Some(d) = &self.density {
            total += d.integrate(source, &f);
        }
        total
    }

    /// Splits `K(source, .)` over the cells of `mesh`.
    pub fn distribute(&self, source: f64, mesh: &Mesh1D) -> CellDistribution {
        let mut out = CellDistribution::default();
        for atom in &self.atoms {
            let w = atom.weight(source);
            if w == 0.0 {
                continue;
            }
            match mesh.locate(atom.location(source)) {
                Location::Cell(i) => out.cells.push((i, w)),
                Location::Below => out.below += w,
                Location::Above => out.above += w,
            }
        }
        if let Some(d) = &self.density {
            let (lo, hi) = d.support(source);
            let (left, right) = (mesh.lower(), mesh.upper());
            if lo < left {
                out.below += d.mass_between(source, lo, left);
            }
            if hi > right {
                out.above += d.mass_between(source, right, hi);
            }
            if hi > left && lo < right {
                let first = mesh.cell_index_at_or_after(lo.max(left));
                for i in first..mesh.num_cells() {
                    let (a, b) = mesh.cell(i);
                    if a >= hi {
                        break;
                    }
                    let m = d.mass_between(source, a, b);
                    if m != 0.0 {
                        out.cells.push((i, m));
                    }
                }
            }
        }
        out.cells.sort_by_key(|&(i, _)| i);
        out.cells.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        out
    }

    /// Draws one target point from `K(source, .)`, which must be a probability.
    pub fn sample<R: Rng + ?Sized>(&self, source: f64, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random();
        for atom in &self.atoms {
            let w = atom.weight(source);
            if u < w {
                return atom.location(source);
            }
            u -= w;
        }
        match &self.density {
            Some(d) => {
                let m = d.mass(source);
                let v = if m > 0.0 {
                    (u / m).clamp(0.0, 1.0 - f64::EPSILON)
                } else {
                    0.5
                };
                d.sample_unit(source, v)
            }
            // Roundoff in the atom weights: fall back to the last atom.
            None => self
                .atoms
                .last()
                .map(|a| a.location(source))
                .unwrap_or(source),
        }
    }
}

/// The initial law: a kernel whose source is irrelevant.
#[derive(Clone, Debug)]
pub struct InitialLaw(MixtureKernel);

const NO_SOURCE: f64 = 0.0;

impl InitialLaw {
    pub fn new(kernel: MixtureKernel) -> Self {
        InitialLaw(kernel)
    }

    pub fn dirac(point: f64) -> Self {
        InitialLaw(MixtureKernel::fixed_dirac(point))
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        InitialLaw(MixtureKernel::new().with_density(DensityPart::uniform(lo, hi, 1.0)))
    }

    pub fn kernel(&self) -> &MixtureKernel {
        &self.0
    }

    pub fn total_mass(&self) -> f64 {
        self.0.total_mass(NO_SOURCE)
    }

    pub fn mass_on_interval(&self, a: f64, b: f64) -> Result<f64> {
        self.0.mass_on_interval(NO_SOURCE, a, b)
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.0.integrate(NO_SOURCE, f)
    }

    pub fn distribute(&self, mesh: &Mesh1D) -> CellDistribution {
        self.0.distribute(NO_SOURCE, mesh)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.0.sample(NO_SOURCE, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fj_boundary(x_max: f64, p: f64) -> MixtureKernel {
        MixtureKernel::new()
            .with_atom(Atom::new(move |_| x_max / 2.0, move |_| p))
            .with_density(DensityPart::uniform(0.0, x_max, 1.0 - p))
    }

    #[test]
    fn atom_inside_interval_counts_fully() {
        let q = MixtureKernel::dirac(|x| x / 2.0);
        assert_eq!(q.mass_on_interval(1.0, 0.4, 0.6).unwrap(), 1.0);
        assert_eq!(q.mass_on_interval(1.0, 0.6, 0.9).unwrap(), 0.0);
        // half-open: the right end is excluded
        assert_eq!(q.mass_on_interval(1.0, 0.4, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn mixture_interval_masses() {
        let q = fj_boundary(2.0, 0.5);
        assert!((q.mass_on_interval(2.0, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((q.mass_on_interval(2.0, 0.0, 0.5).unwrap() - 0.125).abs() < 1e-15);
        assert!((q.mass_on_interval(2.0, 0.9, 1.1).unwrap() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn malformed_intervals_are_rejected() {
        let q = MixtureKernel::fixed_dirac(0.0);
        assert!(matches!(
            q.mass_on_interval(0.0, 1.0, 1.0),
            Err(Error::MalformedInterval { .. })
        ));
        assert!(q.mass_on_interval(0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let closed = DensityPart::uniform(0.0, 2.0, 0.5);
        let numeric = DensityPart::new(
            |_, y| if y > 0.0 && y < 2.0 { 0.25 } else { 0.0 },
            |_| 0.5,
            |_| (0.0, 2.0),
        );
        for &(a, b) in &[(0.0, 0.5), (0.3, 1.7), (-1.0, 0.2)] {
            let c = closed.mass_between(0.0, a, b);
            let n = numeric.mass_between(0.0, a, b);
            assert!((c - n).abs() < 1e-12, "{a} {b}: {c} vs {n}");
        }
    }

    #[test]
    fn distribution_sums_to_one() {
        let domain = DomainSpec::new(f64::NEG_INFINITY, 2.0, 0.0).unwrap();
        let mesh = Mesh1D::uniform(&domain, 0.3).unwrap();
        let q = fj_boundary(2.0, 0.5);
        let dist = q.distribute(2.0, &mesh);
        let total: f64 = dist.cells.iter().map(|c| c.1).sum();
        assert!((total + dist.outside() - 1.0).abs() < 1e-14);
        assert_eq!(dist.outside(), 0.0);
    }

    #[test]
    fn sampling_follows_weights() {
        let q = fj_boundary(2.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut at_atom = 0;
        let mut below_half = 0;
        for _ in 0..n {
            let y = q.sample(2.0, &mut rng);
            assert!((0.0..2.0).contains(&y));
            if y == 1.0 {
                at_atom += 1;
            } else if y < 0.5 {
                below_half += 1;
            }
        }
        let f_atom = at_atom as f64 / n as f64;
        let f_low = below_half as f64 / n as f64;
        assert!((f_atom - 0.5).abs() < 0.01);
        assert!((f_low - 0.125).abs() < 0.01);
    }

    #[test]
    fn bisection_sampler_without_quantile() {
        let part = DensityPart::new(|_, y| 2.0 * y, |_| 1.0, |_| (0.0, 1.0));
        let k = MixtureKernel::new().with_density(part);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| k.sample(0.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01, "{mean}");
    }
}
