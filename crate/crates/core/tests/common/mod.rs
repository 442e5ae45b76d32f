#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pdmp_fv::{
    build_tcp_model, compute_coefficients, CoefficientSet, Mesh1D, PdmpModel, QuadratureSpec,
    TcpVariant,
};

pub const X_SMALL: f64 = 2.0;
pub const X_LARGE: f64 = 6.0;
pub const P: f64 = 0.5;

pub fn x_max(variant: TcpVariant) -> f64 {
    match variant {
        TcpVariant::Infinite => X_LARGE,
        _ => X_SMALL,
    }
}

pub struct Setup {
    pub model: PdmpModel,
    pub mesh: Mesh1D,
    pub coeffs: CoefficientSet,
}

pub fn setup(variant: TcpVariant, h: f64, tau: f64) -> Setup {
    let model = build_tcp_model(variant, x_max(variant), P, h).unwrap();
    let mesh = Mesh1D::uniform(model.domain(), h).unwrap();
    let coeffs = compute_coefficients(&model, &mesh, tau, QuadratureSpec::default()).unwrap();
    Setup {
        model,
        mesh,
        coeffs,
    }
}

/// Dense matrix of one implicit step with the diagonal written as
/// `(1 + dt/tau)|K| + dt lambda_K`.
pub fn dense_system(coeffs: &CoefficientSet, dt: f64) -> DMatrix<f64> {
    let n = coeffs.num_cells();
    let tau = coeffs.tau();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        a[(k, k)] = (1.0 + dt / tau) * coeffs.volumes()[k] + dt * coeffs.lambda_vec()[k];
    }
    for m in [coeffs.v(), coeffs.lambda_mat(), coeffs.q_mat()] {
        for (value, (from, to)) in m.iter() {
            a[(to, from)] -= dt * value;
        }
    }
    a
}

pub fn dense_step(a: &DMatrix<f64>, p: &[f64], volumes: &[f64]) -> Vec<f64> {
    let rhs = DVector::from_iterator(p.len(), p.iter().zip(volumes).map(|(p, v)| p * v));
    a.clone()
        .lu()
        .solve(&rhs)
        .unwrap()
        .iter()
        .copied()
        .collect()
}
