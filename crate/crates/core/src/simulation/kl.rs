use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Correlation values on both axes of the divergence table.
pub const KL_GRID: [f64; 19] = [
    -0.95, -0.85, -0.75, -0.65, -0.55, -0.45, -0.35, -0.25, -0.15, 0.05, 0.15, 0.25, 0.35, 0.45,
    0.55, 0.65, 0.75, 0.85, 0.95,
];

/// KL divergence from a standard bivariate normal with correlation `rho_m`
/// to one with correlation `rho_u`.
pub fn kl_bivariate_normal<F: Scalar>(rho_m: F, rho_u: F) -> Result<F> {
    if !(rho_m.abs() < F::one() && rho_u.abs() < F::one()) {
        return Err(Error::Config(
            "correlations must lie strictly inside (-1, 1)".into(),
        ));
    }
    let one = F::one();
    let ru2 = one - rho_u * rho_u;
    let kl = (one - rho_m * rho_u) / ru2 - F::lit(0.5) * ((one - rho_m * rho_m) / ru2).ln() - one;
    Ok(kl.max(F::zero()))
}

/// Divergences over `KL_GRID × KL_GRID`, rows indexed by `rho_m`.
pub fn kl_table() -> Vec<Vec<f64>> {
    KL_GRID
        .iter()
        .map(|&m| {
            KL_GRID
                .iter()
                .map(|&u| kl_bivariate_normal(m, u).expect("grid inside (-1, 1)"))
                .collect()
        })
        .collect()
}
