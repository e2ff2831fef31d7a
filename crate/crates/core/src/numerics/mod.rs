//! Special functions, symmetric matrix algebra, quadrature and root finding.

mod linalg;
mod quadrature;
mod roots;
mod special;

pub use linalg::{cholesky_solve, SpdMatrix, SymmetricEigen};
pub use quadrature::{integrate_1d, integrate_2d_tailbox, integrate_tail_1d, QuadratureRule};
pub use roots::{bisect_decreasing, brent};
pub use special::{
    chi_square_cdf, chi_square_quantile, ln_gamma, normal_cdf, normal_pdf, normal_sf,
    regularized_beta, regularized_gamma_p, regularized_gamma_q, std_normal_quantile,
    student_t_cdf, student_t_pdf, student_t_quantile, student_t_sf,
};
