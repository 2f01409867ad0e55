//! Stance force solver: distributes a body wrench over the feet in contact by
//! damped least squares, `x = Aᵀ (A Aᵀ + λ² I)⁻¹ b`.
//!
//! `A` is 6 × 3n: the top block stacks identities (force balance) and the
//! bottom block stacks the cross-product matrices of the foot positions
//! relative to the centre of mass (moment balance). Friction cones are not
//! enforced.

use crate::model::GRAVITY;
use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};
use thiserror::Error;

/// Default damping, newton scale.
pub const DEFAULT_DAMPING_LAMBDA: f64 = 0.01;

/// Relative eigenvalue floor below which the normal matrix counts as singular.
const NORMAL_MATRIX_RCOND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StanceError {
    #[error("no feet in stance")]
    NoStance,
    #[error("damping lambda {0} must be finite and >= 0")]
    InvalidDamping(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StanceProblem {
    /// Stance foot positions (body frame, m).
    pub foot_positions: Vec<Vector3<f64>>,
    /// Point about which moments balance (body frame).
    pub com: Vector3<f64>,
    /// Wrench `(force, moment)` the feet must supply to the body.
    pub body_wrench: Vector6<f64>,
    pub damping_lambda: f64,
}

impl StanceProblem {
    /// Quasi-static support of `mass` against gravity with the CoM at the body origin.
    pub fn quasi_static(foot_positions: Vec<Vector3<f64>>, mass: f64, damping_lambda: f64) -> Self {
        StanceProblem {
            foot_positions,
            com: Vector3::zeros(),
            body_wrench: Vector6::new(0.0, 0.0, mass * GRAVITY, 0.0, 0.0, 0.0),
            damping_lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StanceSolution {
    /// Ground reaction on each foot, same order as the problem's feet.
    pub forces: Vec<Vector3<f64>>,
    /// ‖A x − b‖.
    pub residual: f64,
    /// Horizontal force magnitude per foot, for diagnostics.
    pub tangential: Vec<f64>,
    /// Set when the normal matrix was singular and the SVD pseudo-inverse was used.
    pub used_pseudo_inverse: bool,
}

fn skew(v: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    v.cross_matrix()
}

/// Wrench map from stacked foot forces to `(Σ f, Σ r × f)`.
pub fn stance_matrix(foot_positions: &[Vector3<f64>], com: &Vector3<f64>) -> DMatrix<f64> {
    let n = foot_positions.len();
    let mut a = DMatrix::zeros(6, 3 * n);
    for (i, p) in foot_positions.iter().enumerate() {
        a.fixed_view_mut::<3, 3>(0, 3 * i).fill_with_identity();
        a.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&skew(&(p - com)));
    }
    a
}

pub fn solve_stance_forces(problem: &StanceProblem) -> Result<StanceSolution, StanceError> {
    let n = problem.foot_positions.len();
    if n == 0 {
        return Err(StanceError::NoStance);
    }
    let lambda = problem.damping_lambda;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(StanceError::InvalidDamping(lambda));
    }
    let a = stance_matrix(&problem.foot_positions, &problem.com);
    let b = DVector::from_column_slice(problem.body_wrench.as_slice());

    let aat = &a * a.transpose();
    let normal: Matrix6<f64> = aat.fixed_view::<6, 6>(0, 0) + Matrix6::identity() * (lambda * lambda);
    let eig = normal.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let well_posed = lo > NORMAL_MATRIX_RCOND * hi;

    let (x, used_pseudo_inverse) = match (well_posed, normal.cholesky()) {
        (true, Some(chol)) => {
            let y = chol.solve(&problem.body_wrench);
            (a.transpose() * DVector::from_column_slice(y.as_slice()), false)
        }
        _ => {
            log::warn!("stance normal matrix singular with {n} feet (λ = {lambda}); using pseudo-inverse");
            let pinv = a.clone().pseudo_inverse(1e-12).expect("nonnegative epsilon");
            (pinv * &b, true)
        }
    };

    let residual = (&a * &x - &b).norm();
    let forces: Vec<Vector3<f64>> = (0..n).map(|i| Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect();
    let tangential = forces.iter().map(|f| f.xy().norm()).collect();
    Ok(StanceSolution {
        forces,
        residual,
        tangential,
        used_pseudo_inverse,
    })
}
