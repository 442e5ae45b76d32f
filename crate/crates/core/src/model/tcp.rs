//! TCP window-size processes: unit drift up to a maximal window `X`, halving
//! jumps at rate `x+`, and three behaviors at `X`.

use std::fmt;
use std::str::FromStr;

use super::{Atom, DensityPart, DomainSpec, HittingTime, InitialLaw, MixtureKernel, PdmpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TcpVariant {
    /// Unbounded window, truncated at a large `X` that the mass never reaches.
    Infinite,
    /// Finite window with no jump at `X`: mass piles up against the boundary.
    Finite,
    /// Finite window with a forced jump at `X`.
    FiniteWithJump,
}

impl TcpVariant {
    pub const ALL: [TcpVariant; 3] = [
        TcpVariant::Infinite,
        TcpVariant::Finite,
        TcpVariant::FiniteWithJump,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TcpVariant::Infinite => "tcp-i",
            TcpVariant::Finite => "tcp-f",
            TcpVariant::FiniteWithJump => "tcp-fj",
        }
    }
}

impl fmt::Display for TcpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TcpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tcp-i" => Ok(TcpVariant::Infinite),
            "tcp-f" => Ok(TcpVariant::Finite),
            "tcp-fj" => Ok(TcpVariant::FiniteWithJump),
            other => Err(Error::InvalidParameter {
                name: "model",
                reason: format!("unknown model `{other}` (expected tcp-i, tcp-f or tcp-fj)"),
            }),
        }
    }
}

/// `F = (-inf, X)`, computed on `[0, X)`.
pub fn tcp_domain(x_max: f64) -> Result<DomainSpec> {
    DomainSpec::new(f64::NEG_INFINITY, x_max, 0.0)
}

/// Builds a TCP window-size model with maximal window `x_max`.
///
/// `p` is the probability of the jump to `X/2` at the boundary (TCP-FJ only).
/// `last_cell_width` is the width of the last mesh cell: TCP-F sends the
/// process hitting `X` back to the center of that cell, so the atom at `X`
/// shows up as last-cell mass. It is ignored by the other variants.
pub fn build_tcp_model(
    variant: TcpVariant,
    x_max: f64,
    p: f64,
    last_cell_width: f64,
) -> Result<PdmpModel> {
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "x_max",
            reason: format!("must be positive, got {x_max}"),
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("must lie in [0, 1], got {p}"),
        });
    }
    let boundary_kernel = match variant {
        TcpVariant::Infinite => MixtureKernel::fixed_dirac(x_max / 2.0),
        TcpVariant::Finite => {
            if !(last_cell_width > 0.0 && last_cell_width <= x_max) {
                return Err(Error::InvalidParameter {
                    name: "last_cell_width",
                    reason: format!("must lie in (0, X], got {last_cell_width}"),
                });
            }
            MixtureKernel::fixed_dirac(x_max - 0.5 * last_cell_width)
        }
        TcpVariant::FiniteWithJump => MixtureKernel::new()
            .with_atom(Atom::new(move |_| x_max / 2.0, move |_| p))
            .with_density(DensityPart::uniform(0.0, x_max, 1.0 - p)),
    };
    PdmpModel::builder(variant.label(), tcp_domain(x_max)?)
        .flow(move |x, t| if t >= x_max - x { x_max } else { x + t })
        .hitting_time(HittingTime::new(move |x| (x_max - x).max(0.0)))
        .rate(|x| x.max(0.0), x_max)
        .interior_kernel(MixtureKernel::dirac(|x| 0.5 * x))
        .boundary_kernel(boundary_kernel)
        .initial_law(InitialLaw::dirac(0.0))
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels() {
        for v in TcpVariant::ALL {
            assert_eq!(v.label().parse::<TcpVariant>().unwrap(), v);
        }
        assert_eq!(
            "TCP-FJ".parse::<TcpVariant>().unwrap(),
            TcpVariant::FiniteWithJump
        );
        assert!("tcp-x".parse::<TcpVariant>().is_err());
    }

    #[test]
    fn flow_caps_at_window() {
        let m = build_tcp_model(TcpVariant::Finite, 2.0, 0.0, 0.1).unwrap();
        assert_eq!(m.flow(1.5, 1.0), 2.0);
        assert_eq!(m.flow(1.5, 0.25), 1.75);
        assert_eq!(m.boundary_image(0.3), 2.0);
    }

    #[test]
    fn hitting_time_is_distance_to_window() {
        let m = build_tcp_model(TcpVariant::Infinite, 6.0, 0.0, 0.01).unwrap();
        assert_eq!(m.alpha(3.0), 3.0);
        assert_eq!(m.alpha(7.0), 0.0);
        assert!(m.alpha(5.999) > 0.0);
    }

    #[test]
    fn rate_and_interior_kernel() {
        let m = build_tcp_model(TcpVariant::Infinite, 6.0, 0.0, 0.01).unwrap();
        assert_eq!(m.rate(-1.0), 0.0);
        assert_eq!(m.rate(2.5), 2.5);
        assert_eq!(m.rate_bound(), 6.0);
        assert_eq!(
            m.interior_kernel().mass_on_interval(1.0, 0.4, 0.6).unwrap(),
            1.0
        );
    }

    #[test]
    fn boundary_kernels_per_variant() {
        let fj = build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 0.5, 0.1).unwrap();
        let q = fj.boundary_kernel();
        assert!((q.mass_on_interval(2.0, 0.9, 1.1).unwrap() - 0.55).abs() < 1e-15);
        assert!((q.total_mass(2.0) - 1.0).abs() < 1e-15);

        let f = build_tcp_model(TcpVariant::Finite, 2.0, 0.5, 0.2).unwrap();
        assert_eq!(
            f.boundary_kernel().mass_on_interval(2.0, 1.8, 2.0).unwrap(),
            1.0
        );
        assert_eq!(f.boundary_kernel().atoms()[0].location(2.0), 1.9);
    }

    #[test]
    fn invalid_parameters() {
        assert!(build_tcp_model(TcpVariant::Infinite, 0.0, 0.5, 0.1).is_err());
        assert!(build_tcp_model(TcpVariant::Infinite, -1.0, 0.5, 0.1).is_err());
        assert!(build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 1.5, 0.1).is_err());
        assert!(build_tcp_model(TcpVariant::FiniteWithJump, 2.0, -0.1, 0.1).is_err());
        assert!(build_tcp_model(TcpVariant::Finite, 2.0, 0.5, 0.0).is_err());
    }
}
