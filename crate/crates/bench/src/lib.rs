//! Shared fixtures for the benchmarks.

use pdmp_fv::{
    build_tcp_model, compute_coefficients, CoefficientSet, Mesh1D, PdmpModel, QuadratureSpec,
    TcpVariant,
};

pub fn tcp_fj(h: f64) -> (PdmpModel, Mesh1D) {
    let model = build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 0.5, h).unwrap();
    let mesh = Mesh1D::uniform(model.domain(), h).unwrap();
    (model, mesh)
}

pub fn coefficients(h: f64) -> (PdmpModel, Mesh1D, CoefficientSet) {
    let (model, mesh) = tcp_fj(h);
    let coeffs = compute_coefficients(&model, &mesh, h, QuadratureSpec::default()).unwrap();
    (model, mesh, coeffs)
}
