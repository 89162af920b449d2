//! Planar vectors, angle wrapping, the shared double-integrator matrices and a
//! few small symmetric-matrix helpers used by every filter.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix4, Matrix4x2, SMatrix, Vector2, Vector4};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec4 = Vector4<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat4 = Matrix4<f64>;

/// Diagonal floor added when a symmetric solve fails.
pub const CONDITIONING_FLOOR: f64 = 1e-12;

pub fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

/// Wraps an angle to (−π, π].
pub fn wrap_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Wraps an angle to [0, 2π).
pub fn wrap_two_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// State transition `[[I, dt I], [0, I]]` of the planar double integrator.
pub fn transition(dt: f64) -> Mat4 {
    let mut a = Mat4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

/// Input matrix `[0; dt I]` of the planar double integrator.
pub fn input_matrix(dt: f64) -> Matrix4x2<f64> {
    let mut b = Matrix4x2::zeros();
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    b
}

pub fn position(x: &Vec4) -> Vec2 {
    Vec2::new(x[0], x[1])
}

pub fn velocity(x: &Vec4) -> Vec2 {
    Vec2::new(x[2], x[3])
}

pub fn stack(p: Vec2, v: Vec2) -> Vec4 {
    Vec4::new(p.x, p.y, v.x, v.y)
}

pub fn is_finite2(v: &Vec2) -> bool {
    v.x.is_finite() && v.y.is_finite()
}

pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix via Cholesky. On failure the
/// diagonal is lifted by [`CONDITIONING_FLOOR`] once before giving up.
pub fn spd_inverse<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    let sym = symmetrize(m);
    if let Some(ch) = sym.cholesky() {
        return Ok(symmetrize(&ch.inverse()));
    }
    let lifted = sym + SMatrix::<f64, D, D>::identity() * CONDITIONING_FLOOR;
    lifted
        .cholesky()
        .map(|ch| symmetrize(&ch.inverse()))
        .ok_or_else(|| Error::NumericalFailure(format!("matrix not positive definite: {sym}")))
}

pub fn diag4(d: [f64; 4]) -> Mat4 {
    Mat4::from_diagonal(&Vec4::from(d))
}

pub fn diag2(d: [f64; 2]) -> Mat2 {
    Mat2::from_diagonal(&Vec2::from(d))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<const D: usize>(m: &SMatrix<f64, D, D>) -> f64
where
    nalgebra::Const<D>: nalgebra::DimSub<nalgebra::Const<1>>,
    nalgebra::DefaultAllocator:
        nalgebra::allocator::Allocator<nalgebra::DimDiff<nalgebra::Const<D>, nalgebra::Const<1>>>,
{
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    (m - m.transpose()).abs().max()
}
