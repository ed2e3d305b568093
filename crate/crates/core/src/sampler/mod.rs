//! Data-augmentation sampler over the linkage and the model parameters.

mod mh;
mod multinomial;
mod pools;
mod scorer;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

pub use mh::{add_log_ratio, MoveStats};
pub use multinomial::choice_probabilities;
pub use scorer::Scorer;

use crate::comparison::{BlockIndex, ComparisonTable};
use crate::error::{Error, PairClass, Result};
use crate::model::{LinkageState, MixtureParams, PriorConfig};
use crate::regression::{
    initial_params, sample_match_arm, sample_nonmatch_arm, RegressionData, RegressionParams,
    RegressionVariant,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    #[serde(alias = "mh")]
    MetropolisHastings,
    #[serde(alias = "multinomial")]
    AdaptiveMultinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Brl,
    Brlvof,
    BrlvofInd,
}

impl Method {
    pub fn variant(self) -> Option<RegressionVariant> {
        match self {
            Method::Brl => None,
            Method::Brlvof => Some(RegressionVariant::Brlvof),
            Method::BrlvofInd => Some(RegressionVariant::BrlvofInd),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Brl => "brl",
            Method::Brlvof => "brlvof",
            Method::BrlvofInd => "brlvof_ind",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "brl" => Ok(Method::Brl),
            "brlvof" => Ok(Method::Brlvof),
            "brlvof_ind" | "brlvof-ind" => Ok(Method::BrlvofInd),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    Empty,
    /// A uniformly random maximal one-to-one linkage within each block.
    Random,
    /// Pairs agreeing at the top level on every field, linked greedily in
    /// pair order.
    #[default]
    Agreement,
    Given(Vec<(usize, usize)>),
}

pub fn agreement_linkage(table: &ComparisonTable) -> LinkageState {
    let top: Vec<u8> = table.levels().iter().map(|&l| l as u8).collect();
    let mut state = LinkageState::empty(table.n_a(), table.n_b());
    for block in &table.blocks().blocks {
        let nb = block.b.len();
        for (pa, &i) in block.a.iter().enumerate() {
            for (pb, &j) in block.b.iter().enumerate() {
                let (i, j) = (i as usize, j as usize);
                if table.gamma(block.pair_offset + pa * nb + pb) == top.as_slice()
                    && state.partner_of_a(i).is_none()
                    && state.partner_of_b(j).is_none()
                {
                    state.link(i, j).expect("both records are free");
                }
            }
        }
    }
    state
}

/// Pairs the records of every block along a random permutation of its file-B side.
pub fn random_linkage<R: Rng + ?Sized>(blocks: &BlockIndex, rng: &mut R) -> LinkageState {
    let mut state = LinkageState::empty(blocks.n_a(), blocks.n_b());
    for block in &blocks.blocks {
        let mut b = block.b.clone();
        b.shuffle(rng);
        for (&i, &j) in block.a.iter().zip(&b) {
            state
                .link(i as usize, j as usize)
                .expect("records of a block are linked at most once");
        }
    }
    state
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub kernel: Kernel,
    pub method: Method,
    pub seed: u64,
    pub initial: InitialState,
    /// Leading iterations whose linkage step ignores the regression terms.
    /// Must not exceed `burn_in`.
    pub warmup: usize,
    /// Re-check every constraint after each individual move.
    pub validate_each_move: bool,
}

pub const DEFAULT_WARMUP: usize = 0;

impl ChainConfig {
    pub fn new(
        iterations: usize,
        burn_in: usize,
        kernel: Kernel,
        method: Method,
        seed: u64,
    ) -> Self {
        Self {
            iterations,
            burn_in,
            thin: 1,
            kernel,
            method,
            seed,
            initial: InitialState::default(),
            warmup: DEFAULT_WARMUP,
            validate_each_move: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.warmup > self.burn_in {
            return Err(Error::Config(format!(
                "warm-up {} must not exceed burn-in {}",
                self.warmup, self.burn_in
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Global quantities entering the linkage prior ratios.
#[derive(Debug, Clone, Copy)]
pub struct LinkPrior<F> {
    pub n_a: usize,
    pub n_b: usize,
    pub alpha_pi: F,
    pub beta_pi: F,
}

impl<F: Scalar> LinkPrior<F> {
    pub fn new(n_a: usize, n_b: usize, prior: &PriorConfig<F>) -> Self {
        Self {
            n_a,
            n_b,
            alpha_pi: prior.alpha_pi,
            beta_pi: prior.beta_pi,
        }
    }
}

/// `log p(C ∪ {link}) − log p(C)` for a linkage with `n_m` links.
pub fn log_prior_add_ratio<F: Scalar>(n_m: usize, p: &LinkPrior<F>) -> F {
    let (lo, hi) = (p.n_a.min(p.n_b), p.n_a.max(p.n_b));
    let n = F::from_count(n_m);
    (n + p.alpha_pi).ln()
        - F::from_count(hi - n_m).ln()
        - (F::from_count(lo) - n - F::one() + p.beta_pi).ln()
}

/// Everything the chain conditions on.
#[derive(Debug, Clone, Copy)]
pub struct ChainData<'a, F> {
    pub table: &'a ComparisonTable,
    pub regression: Option<&'a RegressionData<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSample<F> {
    pub iteration: usize,
    /// Linked `(file-A index, file-B index)` pairs, sorted by the file-A index.
    pub links: Vec<(u32, u32)>,
    pub theta: MixtureParams<F>,
    pub regression: Option<RegressionParams<F>>,
}

impl<F> PosteriorSample<F> {
    pub fn n_m(&self) -> usize {
        self.links.len()
    }

    pub fn state(&self, n_a: usize, n_b: usize) -> LinkageState {
        let pairs: Vec<(usize, usize)> = self
            .links
            .iter()
            .map(|&(i, j)| (i as usize, j as usize))
            .collect();
        LinkageState::from_pairs(n_a, n_b, &pairs).expect("sample holds a valid linkage")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainOutput<F> {
    pub samples: Vec<PosteriorSample<F>>,
    pub parameter_names: Vec<String>,
    /// One row per emitted sample, aligned with `parameter_names`.
    pub trace: Vec<Vec<f64>>,
    pub moves: MoveStats,
    /// Iterations in which the match regression arm kept its previous value
    /// because too few pairs were linked.
    pub regression_holds: usize,
}

impl<F> ChainOutput<F> {
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.parameter_names.iter().position(|n| n == name)?;
        Some(self.trace.iter().map(|r| r[k]).collect())
    }
}

fn draw_dirichlet<F: Scalar, R: Rng + ?Sized>(alpha: &[F], out: &mut [F], rng: &mut R) {
    let mut sum = 0.0;
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|a| {
            let g = Gamma::new(a.to_f64_lossy(), 1.0)
                .expect("positive Dirichlet parameter")
                .sample(rng);
            sum += g;
            g
        })
        .collect();
    if !(sum > 0.0) {
        draws.iter_mut().for_each(|x| *x = 1.0);
        sum = draws.len() as f64;
    }
    for (o, x) in out.iter_mut().zip(draws) {
        *o = F::lit(x / sum).max(F::prob_floor());
    }
}

/// Level counts over linked pairs, flattened like the table's level totals.
pub fn match_level_counts(table: &ComparisonTable, state: &LinkageState) -> Vec<u64> {
    let mut counts = vec![0u64; table.total_levels()];
    for (i, j) in state.pairs() {
        let p = table
            .pair_index(i, j)
            .expect("linked pairs lie within a block");
        for (k, &l) in table.gamma(p).iter().enumerate() {
            counts[table.level_offset(k) + l as usize - 1] += 1;
        }
    }
    counts
}

/// Conjugate Dirichlet draw of both mixture components given the linkage.
pub fn update_theta<F: Scalar, R: Rng + ?Sized>(
    table: &ComparisonTable,
    state: &LinkageState,
    prior: &PriorConfig<F>,
    rng: &mut R,
) -> MixtureParams<F> {
    let m = match_level_counts(table, state);
    let totals = table.level_totals();
    let post_m: Vec<F> = prior
        .alpha_m
        .iter()
        .zip(&m)
        .map(|(a, &c)| *a + F::lit(c as f64))
        .collect();
    let post_u: Vec<F> = prior
        .alpha_u
        .iter()
        .zip(totals.iter().zip(&m))
        .map(|(a, (&t, &c))| *a + F::lit((t - c) as f64))
        .collect();
    let levels = table.levels().to_vec();
    let mut theta_m = vec![F::zero(); post_m.len()];
    let mut theta_u = vec![F::zero(); post_u.len()];
    for k in 0..levels.len() {
        let r = table.level_offset(k)..table.level_offset(k + 1);
        draw_dirichlet(&post_m[r.clone()], &mut theta_m[r.clone()], rng);
        draw_dirichlet(&post_u[r.clone()], &mut theta_u[r], rng);
    }
    MixtureParams {
        levels,
        theta_m,
        theta_u,
    }
}

/// One Metropolis-Hastings sweep over file A under fixed parameters.
pub fn mh_sweep<F: Scalar, R: Rng + ?Sized>(
    state: &mut LinkageState,
    table: &ComparisonTable,
    theta: &MixtureParams<F>,
    regression: Option<(&RegressionData<F>, &RegressionParams<F>)>,
    prior: &PriorConfig<F>,
    rng: &mut R,
) -> Result<MoveStats> {
    let scorer = Scorer::new(table, theta, regression);
    let mut pools = pools::Pools::build(table.blocks(), state);
    let lp = LinkPrior::new(table.n_a(), table.n_b(), prior);
    mh::sweep(state, table, &scorer, &lp, &mut pools, rng, true)
}

/// One full-conditional sweep over file A under fixed parameters.
pub fn multinomial_sweep<F: Scalar, R: Rng + ?Sized>(
    state: &mut LinkageState,
    table: &ComparisonTable,
    theta: &MixtureParams<F>,
    regression: Option<(&RegressionData<F>, &RegressionParams<F>)>,
    prior: &PriorConfig<F>,
    rng: &mut R,
) -> Result<MoveStats> {
    let weights = Scorer::new(table, theta, regression).all_pairs();
    let mut pools = pools::Pools::build(table.blocks(), state);
    let lp = LinkPrior::new(table.n_a(), table.n_b(), prior);
    multinomial::sweep(state, table, &weights, &lp, &mut pools, rng, true)
}

fn parameter_names(levels: &[usize], q: Option<(usize, RegressionVariant)>) -> Vec<String> {
    let mut names = vec!["n_m".to_string()];
    for class in ["m", "u"] {
        for (k, &l) in levels.iter().enumerate() {
            for lev in 1..=l {
                names.push(format!("theta_{class}[{k}][{lev}]"));
            }
        }
    }
    if let Some((q, variant)) = q {
        for c in 0..=q {
            names.push(format!("beta_m[{c}]"));
        }
        names.push("sigma2_m".into());
        let nu = match variant {
            RegressionVariant::Brlvof => q + 1,
            RegressionVariant::BrlvofInd => 1,
        };
        for c in 0..nu {
            names.push(format!("beta_u[{c}]"));
        }
        names.push("sigma2_u".into());
    }
    names
}

fn trace_row<F: Scalar>(
    n_m: usize,
    theta: &MixtureParams<F>,
    reg: Option<&RegressionParams<F>>,
) -> Vec<f64> {
    let mut row = vec![n_m as f64];
    row.extend(
        theta
            .theta_m
            .iter()
            .chain(&theta.theta_u)
            .map(|x| x.to_f64_lossy()),
    );
    if let Some(r) = reg {
        row.extend(r.beta_m.iter().map(|x| x.to_f64_lossy()));
        row.push(r.sigma2_m.to_f64_lossy());
        row.extend(r.beta_u.iter().map(|x| x.to_f64_lossy()));
        row.push(r.sigma2_u.to_f64_lossy());
    }
    row
}

/// Runs one chain, alternating the mixture draw, the regression draw (when the
/// method uses exclusive variables) and a linkage sweep.
pub fn run_chain<F: Scalar>(
    config: &ChainConfig,
    data: ChainData<'_, F>,
    prior: &PriorConfig<F>,
) -> Result<ChainOutput<F>> {
    config.validate()?;
    prior.validate()?;
    let table = data.table;
    if prior.levels != table.levels() {
        return Err(Error::Config(
            "prior levels do not match the comparison fields".into(),
        ));
    }
    let variant = config.method.variant();
    let reg_data = match (variant, data.regression) {
        (Some(_), Some(d)) => {
            if d.n_a() != table.n_a() || d.x.len() != table.n_b() * d.q {
                return Err(Error::Dimension {
                    expected: table.n_a(),
                    found: d.n_a(),
                });
            }
            Some(d)
        }
        (Some(_), None) => {
            return Err(Error::Config(format!(
                "method {} needs exclusive variables",
                config.method.name()
            )))
        }
        (None, _) => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = match &config.initial {
        InitialState::Empty => LinkageState::empty(table.n_a(), table.n_b()),
        InitialState::Random => random_linkage(table.blocks(), &mut rng),
        InitialState::Agreement => agreement_linkage(table),
        InitialState::Given(pairs) => LinkageState::from_pairs(table.n_a(), table.n_b(), pairs)?,
    };
    state.validate(Some(table.blocks()))?;

    let mut reg_params = match (variant, reg_data) {
        (Some(v), Some(d)) => {
            let mut p = initial_params(d, table.blocks(), v)?;
            if v == RegressionVariant::BrlvofInd {
                let fit = initial_params(d, table.blocks(), RegressionVariant::Brlvof)?;
                p.beta_m = fit.beta_m;
                p.sigma2_m = fit.sigma2_m;
            }
            Some(p)
        }
        _ => None,
    };
    let total_stats = reg_data.map(|d| d.total_stats(table.blocks()));
    let names = parameter_names(table.levels(), variant.zip(reg_data).map(|(v, d)| (d.q, v)));
    let lp = LinkPrior::new(table.n_a(), table.n_b(), prior);
    let mut pools = pools::Pools::build(table.blocks(), &state);

    let mut out = ChainOutput {
        samples: Vec::with_capacity(config.n_samples()),
        parameter_names: names,
        trace: Vec::with_capacity(config.n_samples()),
        moves: MoveStats::default(),
        regression_holds: 0,
    };

    for t in 1..=config.iterations {
        let theta = update_theta(table, &state, prior, &mut rng);

        if let (Some(v), Some(d), Some(p), Some(total)) =
            (variant, reg_data, reg_params.as_mut(), total_stats.as_ref())
        {
            let m = d.match_stats(&state);
            match sample_match_arm(d, &state, &m, &mut rng) {
                Ok((beta, s2)) => {
                    p.beta_m = beta;
                    p.sigma2_m = s2;
                }
                Err(Error::DegeneratePosterior {
                    class: PairClass::Match,
                    ..
                }) => out.regression_holds += 1,
                Err(e) => return Err(e),
            }
            let (beta_u, s2u) = sample_nonmatch_arm(&total.minus(&m), v, &mut rng)?;
            p.beta_u = beta_u;
            p.sigma2_u = s2u;
        }

        let reg = reg_data
            .zip(reg_params.as_ref())
            .filter(|_| t > config.warmup);
        let scorer = Scorer::new(table, &theta, reg);
        let stats = match config.kernel {
            Kernel::MetropolisHastings => mh::sweep(
                &mut state,
                table,
                &scorer,
                &lp,
                &mut pools,
                &mut rng,
                config.validate_each_move,
            )?,
            Kernel::AdaptiveMultinomial => {
                let weights = scorer.all_pairs();
                multinomial::sweep(
                    &mut state,
                    table,
                    &weights,
                    &lp,
                    &mut pools,
                    &mut rng,
                    config.validate_each_move,
                )?
            }
        };
        out.moves.merge(&stats);

        if t > config.burn_in && (t - config.burn_in).is_multiple_of(config.thin) {
            out.trace
                .push(trace_row(state.n_m(), &theta, reg_params.as_ref()));
            out.samples.push(PosteriorSample {
                iteration: t,
                links: state.pairs().map(|(i, j)| (i as u32, j as u32)).collect(),
                theta,
                regression: reg_params.clone(),
            });
        }
    }
    Ok(out)
}
