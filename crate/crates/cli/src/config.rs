//! Run configuration: a TOML file with nested sections, overridable from
//! the command line.
//!
//! ```toml
//! seed = 2014
//! horizon = 10.0
//! output_dir = "out"
//! snapshots = [1.0, 5.0]
//!
//! [model]
//! name = "tcp-fj"
//! x_max = 2.0
//! p = 0.5
//!
//! [mesh]
//! h = 0.1            # or: edges = [0.0, 0.5, 2.0]
//!
//! [scheme]
//! tau = 0.1
//! dt = 0.1
//! method = "direct"  # or "fixed-point"
//!
//! [quadrature]
//! points_per_cell = 64
//! rule = "midpoint"  # or "uniform" with `seed`
//!
//! [mc]
//! particles = 1000000
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdmp_fv::solver::{DEFAULT_FIXED_POINT_TOLERANCE, DEFAULT_MAX_FIXED_POINT_ITERATIONS};
use pdmp_fv::{
    build_tcp_model, Mesh1D, PdmpModel, QuadratureRule, QuadratureSpec, SchemeParams, SolverMethod,
    TcpVariant,
};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    pub model: ModelConfig,
    pub mesh: MeshConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub mc: Option<McSection>,
    /// Also write the atoms of the discrete measures.
    #[serde(default)]
    pub export_measures: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub x_max: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub h: Option<f64>,
    pub edges: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub tau: f64,
    pub dt: f64,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_tolerance")]
    pub fixed_point_tolerance: f64,
    #[serde(default = "default_iterations")]
    pub max_fixed_point_iterations: usize,
    #[serde(default)]
    pub log_every: usize,
}

fn default_method() -> String {
    "direct".into()
}

fn default_tolerance() -> f64 {
    DEFAULT_FIXED_POINT_TOLERANCE
}

fn default_iterations() -> usize {
    DEFAULT_MAX_FIXED_POINT_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub points_per_cell: usize,
    pub rule: String,
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let spec = QuadratureSpec::default();
        QuadratureConfig {
            points_per_cell: spec.points_per_cell,
            rule: "midpoint".into(),
            seed: spec.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub particles: u64,
}

impl RunConfig {
    /// Defaults for the TCP models: `X = 6` for TCP-I, `X = 2` otherwise,
    /// `p = 0.5`, `h = tau = dt = 0.1`, `T = 10`.
    pub fn for_model(variant: TcpVariant) -> Self {
        RunConfig {
            seed: 2014,
            horizon: 10.0,
            output_dir: default_output_dir(),
            snapshots: Vec::new(),
            model: ModelConfig {
                name: variant.label().into(),
                x_max: None,
                p: None,
            },
            mesh: MeshConfig {
                h: Some(0.1),
                edges: None,
            },
            scheme: SchemeConfig {
                tau: 0.1,
                dt: 0.1,
                method: default_method(),
                fixed_point_tolerance: default_tolerance(),
                max_fixed_point_iterations: default_iterations(),
                log_every: 0,
            },
            quadrature: QuadratureConfig::default(),
            mc: None,
            export_measures: false,
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).with_context(|| format!("invalid config {}", origin.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, path)
    }

    pub fn variant(&self) -> Result<TcpVariant> {
        self.model
            .name
            .parse()
            .with_context(|| "field `model.name`".to_string())
    }

    pub fn x_max(&self) -> Result<f64> {
        Ok(self.model.x_max.unwrap_or(match self.variant()? {
            TcpVariant::Infinite => 6.0,
            _ => 2.0,
        }))
    }

    pub fn method(&self) -> Result<SolverMethod> {
        self.scheme
            .method
            .parse()
            .with_context(|| "field `scheme.method`".to_string())
    }

    pub fn validate(&self) -> Result<()> {
        positive("horizon", self.horizon)?;
        positive("scheme.tau", self.scheme.tau)?;
        positive("scheme.dt", self.scheme.dt)?;
        positive(
            "scheme.fixed_point_tolerance",
            self.scheme.fixed_point_tolerance,
        )?;
        if self.scheme.max_fixed_point_iterations == 0 {
            bail!("field `scheme.max_fixed_point_iterations`: must be at least 1");
        }
        self.variant()?;
        self.method()?;
        positive("model.x_max", self.x_max()?)?;
        if let Some(p) = self.model.p {
            if !(0.0..=1.0).contains(&p) {
                bail!("field `model.p`: must lie in [0, 1], got {p}");
            }
        }
        match (&self.mesh.h, &self.mesh.edges) {
            (Some(h), None) => positive("mesh.h", *h)?,
            (None, Some(edges)) if edges.len() >= 2 => {}
            (None, Some(_)) => bail!("field `mesh.edges`: need at least two edges"),
            (Some(_), Some(_)) => bail!("section `mesh`: give either `h` or `edges`, not both"),
            (None, None) => bail!("section `mesh`: missing `h` or `edges`"),
        }
        for &t in &self.snapshots {
            if !(t >= 0.0 && t <= self.horizon) {
                bail!("field `snapshots`: {t} is outside [0, horizon]");
            }
        }
        if self.quadrature.points_per_cell == 0 {
            bail!("field `quadrature.points_per_cell`: must be at least 1");
        }
        self.quadrature_rule()?;
        if let Some(mc) = &self.mc {
            if mc.particles == 0 {
                bail!("field `mc.particles`: must be at least 1");
            }
        }
        Ok(())
    }

    fn quadrature_rule(&self) -> Result<QuadratureRule> {
        match self.quadrature.rule.as_str() {
            "midpoint" => Ok(QuadratureRule::MidpointComposite),
            "uniform" => Ok(QuadratureRule::FixedSeedUniform),
            other => bail!("field `quadrature.rule`: unknown rule `{other}` (midpoint or uniform)"),
        }
    }

    pub fn quadrature_spec(&self) -> Result<QuadratureSpec> {
        Ok(QuadratureSpec {
            points_per_cell: self.quadrature.points_per_cell,
            rule: self.quadrature_rule()?,
            seed: self.quadrature.seed,
        })
    }

    pub fn scheme_params(&self) -> Result<SchemeParams> {
        let mut params = SchemeParams::new(self.scheme.dt, self.scheme.tau, self.method()?);
        params.fixed_point_tolerance = self.scheme.fixed_point_tolerance;
        params.max_fixed_point_iterations = self.scheme.max_fixed_point_iterations;
        params.log_every = self.scheme.log_every;
        Ok(params)
    }

    /// Builds the model and its mesh. TCP-F sends boundary mass to the center
    /// of the last mesh cell, so the two are built together.
    pub fn build(&self) -> Result<(PdmpModel, Mesh1D)> {
        let variant = self.variant()?;
        let x_max = self.x_max()?;
        let p = self.model.p.unwrap_or(0.5);
        let domain = pdmp_fv::model::tcp_domain(x_max)?;
        let mesh = match (&self.mesh.h, &self.mesh.edges) {
            (Some(h), _) => Mesh1D::uniform(&domain, *h).context("field `mesh.h`")?,
            (None, Some(edges)) => {
                let mesh = Mesh1D::from_edges(edges.clone()).context("field `mesh.edges`")?;
                if mesh.lower() != domain.truncation_lower || mesh.upper() != domain.upper {
                    bail!(
                        "field `mesh.edges`: must span [{}, {}]",
                        domain.truncation_lower,
                        domain.upper
                    );
                }
                mesh
            }
            (None, None) => bail!("section `mesh`: missing `h` or `edges`"),
        };
        let last = mesh.volume(mesh.num_cells() - 1);
        let model = build_tcp_model(variant, x_max, p, last)?;
        Ok((model, mesh))
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        bail!("field `{field}`: must be positive, got {value}")
    }
}
