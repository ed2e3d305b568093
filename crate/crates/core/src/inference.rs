//! Multiple-imputation pooling of per-linkage estimates.

use serde::Serialize;

use crate::error::{Error, PairClass, Result};
use crate::model::LinkageState;
use crate::regression::{chol_solve, cholesky, SuffStats};
use crate::scalar::Scalar;
use crate::special::student_t_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MiFlag {
    /// All estimates were equal; the interval uses the within variance alone
    /// and the degrees of freedom are infinite.
    ZeroBetweenVariance,
    /// Within variance was zero while estimates differed; ν was set to M − 1.
    ZeroWithinVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate<F> {
    pub estimate: F,
    pub within: F,
    pub between: F,
    pub total: F,
    /// Degrees of freedom; infinite when the between variance is zero.
    pub df: F,
    pub m: usize,
    pub level: F,
    pub lo: F,
    pub hi: F,
    pub flags: Vec<MiFlag>,
}

/// Pools `(estimate, sampling variance)` pairs from `M ≥ 2` imputations.
///
/// The inputs are sorted before summation so the result does not depend on
/// their order.
pub fn combine_mi<F: Scalar>(estimates: &[(F, F)], level: F) -> Result<MiEstimate<F>> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: m,
        });
    }
    if !(level > F::zero() && level < F::one()) {
        return Err(Error::Config("confidence level must lie in (0, 1)".into()));
    }
    if estimates
        .iter()
        .any(|(b, u)| !b.is_finite() || !(*u >= F::zero()))
    {
        return Err(Error::Degenerate(
            "estimates must be finite with nonnegative variance".into(),
        ));
    }
    let mut sorted = estimates.to_vec();
    sorted.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let mf = F::from_count(m);
    let estimate = sorted.iter().map(|e| e.0).sum::<F>() / mf;
    let within = sorted.iter().map(|e| e.1).sum::<F>() / mf;
    let between = sorted.iter().map(|e| (e.0 - estimate).powi(2)).sum::<F>() / (mf - F::one());
    let total = within + (mf + F::one()) * between / mf;
    let mut flags = Vec::new();
    let df = if between == F::zero() {
        flags.push(MiFlag::ZeroBetweenVariance);
        F::infinity()
    } else if within == F::zero() {
        flags.push(MiFlag::ZeroWithinVariance);
        mf - F::one()
    } else {
        let r = (mf + F::one()) * between / (mf * within);
        (mf - F::one()) * (F::one() + F::one() / r).powi(2)
    };
    let q = student_t_quantile((F::one() + level) * F::lit(0.5), df);
    let half = q * total.sqrt();
    Ok(MiEstimate {
        estimate,
        within,
        between,
        total,
        df,
        m,
        level,
        lo: estimate - half,
        hi: estimate + half,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate<F> {
    pub rho: F,
    /// Sampling variance on the Fisher z scale, `1 / (n − 3)`.
    pub z_variance: F,
    pub n: usize,
    /// `|ρ̂| = 1`, so the z transform is infinite.
    pub perfect: bool,
}

/// Pearson correlation between the outcome and one covariate over linked pairs.
pub fn correlation_per_sample<F: Scalar>(
    x_a: &[F],
    x_b_column: &[F],
    state: &LinkageState,
) -> Result<CorrelationEstimate<F>> {
    let n = state.n_m();
    if n < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            found: n,
        });
    }
    let nf = F::from_count(n);
    let (mut sa, mut sb) = (F::zero(), F::zero());
    for (i, j) in state.pairs() {
        sa = sa + x_a[i];
        sb = sb + x_b_column[j];
    }
    let (ma, mb) = (sa / nf, sb / nf);
    let (mut saa, mut sbb, mut sab) = (F::zero(), F::zero(), F::zero());
    for (i, j) in state.pairs() {
        let (da, db) = (x_a[i] - ma, x_b_column[j] - mb);
        saa = saa + da * da;
        sbb = sbb + db * db;
        sab = sab + da * db;
    }
    if saa == F::zero() || sbb == F::zero() {
        return Err(Error::Degenerate("zero variance among linked pairs".into()));
    }
    let rho = (sab / (saa * sbb).sqrt()).max(-F::one()).min(F::one());
    let perfect = (F::one() - rho.abs()) <= F::epsilon() * F::lit(4.0);
    Ok(CorrelationEstimate {
        rho,
        z_variance: F::one() / F::from_count(n - 3),
        n,
        perfect,
    })
}

fn fisher_z<F: Scalar>(rho: F) -> F {
    let cap = F::one() - F::epsilon();
    rho.max(-cap).min(cap).atanh()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledCorrelation<F> {
    /// Pooling result on the Fisher z scale.
    pub z: MiEstimate<F>,
    pub estimate: F,
    pub lo: F,
    pub hi: F,
}

/// Pools per-imputation correlations on the z scale and back-transforms.
pub fn pool_correlations<F: Scalar>(
    samples: &[CorrelationEstimate<F>],
    level: F,
) -> Result<PooledCorrelation<F>> {
    let zs: Vec<(F, F)> = samples
        .iter()
        .map(|s| (fisher_z(s.rho), s.z_variance))
        .collect();
    let z = combine_mi(&zs, level)?;
    Ok(PooledCorrelation {
        estimate: z.estimate.tanh(),
        lo: z.lo.tanh(),
        hi: z.hi.tanh(),
        z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsEstimate<F> {
    /// Intercept first.
    pub coefficients: Vec<F>,
    /// Classical sampling variances, aligned with `coefficients`.
    pub variances: Vec<F>,
    pub n: usize,
}

impl<F: Scalar> OlsEstimate<F> {
    pub fn slopes(&self) -> &[F] {
        &self.coefficients[1..]
    }

    pub fn slope_variances(&self) -> &[F] {
        &self.variances[1..]
    }
}

/// OLS of the outcome on `q` covariates over linked pairs.
pub fn regress_per_sample<F: Scalar>(
    x_a: &[F],
    x_b: &[F],
    q: usize,
    state: &LinkageState,
) -> Result<OlsEstimate<F>> {
    let n = state.n_m();
    if n <= q + 1 {
        return Err(Error::InsufficientSamples {
            needed: q + 2,
            found: n,
        });
    }
    let d = q + 1;
    let mut stats = SuffStats::zero(d);
    for (i, j) in state.pairs() {
        stats.add(x_a[i], &x_b[j * q..(j + 1) * q]);
    }
    let l = cholesky(&stats.zz, d).ok_or_else(|| Error::DegeneratePosterior {
        class: PairClass::Match,
        n,
        reason: "design matrix is rank deficient".into(),
    })?;
    let beta = chol_solve(&l, d, &stats.zy);
    let rss: F = state
        .pairs()
        .map(|(i, j)| {
            let x = &x_b[j * q..(j + 1) * q];
            let fit = beta[0] + beta[1..].iter().zip(x).map(|(b, v)| *b * *v).sum::<F>();
            (x_a[i] - fit).powi(2)
        })
        .sum();
    let s2 = rss / F::from_count(n - d);
    let variances = (0..d)
        .map(|c| {
            let mut e = vec![F::zero(); d];
            e[c] = F::one();
            s2 * chol_solve(&l, d, &e)[c]
        })
        .collect();
    Ok(OlsEstimate {
        coefficients: beta,
        variances,
        n,
    })
}
