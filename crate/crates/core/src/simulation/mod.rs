//! Synthetic linked files, linkage metrics and the simulation harness.

mod blocked;
mod kl;
mod runner;

pub use blocked::{generate_blocked_scenario, BlockedScenario, BLOCKED_BETA_M, BLOCKED_DELTA_U};
pub use kl::{kl_bivariate_normal, kl_table, KL_GRID};
pub use runner::{
    run_blocked, run_factorial, run_replication, MethodOutcome, ResultRow, SimulationChain,
};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::comparison::{days_in_month, FieldKind, FieldSpec, FieldValue, RecordFile, Ymd};
use crate::error::{Error, Result};
use crate::model::LinkageState;
use crate::regression::RegressionData;

/// Support sizes of the three ZIP digits.
pub const ZIP_SUPPORT: [u8; 3] = [3, 4, 5];
pub const REFERENCE_YEAR: i32 = 2010;
pub const AGE_MEAN: f64 = 50.0;
pub const AGE_SD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelForm {
    Linear,
    LinearWithW,
    Nonlinear,
}

impl ModelForm {
    pub fn name(self) -> &'static str {
        match self {
            ModelForm::Linear => "linear",
            ModelForm::LinearWithW => "linear_with_w",
            ModelForm::Nonlinear => "nonlinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationFactors {
    pub n_a: usize,
    pub n_b: usize,
    pub n_m: usize,
    pub p: usize,
    pub sigma: f64,
    pub beta_m: f64,
    pub beta_u: f64,
    pub epsilon: f64,
    pub model: ModelForm,
}

impl Default for SimulationFactors {
    fn default() -> Self {
        Self {
            n_a: 500,
            n_b: 1000,
            n_m: 300,
            p: 1,
            sigma: 0.1,
            beta_m: 1.0,
            beta_u: 0.05,
            epsilon: 0.0,
            model: ModelForm::Linear,
        }
    }
}

impl SimulationFactors {
    pub fn validate(&self) -> Result<()> {
        if self.n_m > self.n_a.min(self.n_b) {
            return Err(Error::Config(format!(
                "n_m = {} exceeds min(n_a, n_b) = {}",
                self.n_m,
                self.n_a.min(self.n_b)
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.p == 0 {
            return Err(Error::Config("P must be at least 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        Ok(())
    }

    /// Correlation between the outcome and the first covariate among true
    /// matches implied by the generating model.
    pub fn generating_rho(&self) -> f64 {
        generating_rho(self.model, self.p, self.beta_m, self.sigma)
    }
}

/// Population correlation of `X_A` and `X_B1` among matches, for covariates
/// drawn from `N(1, 4)`.
pub fn generating_rho(model: ModelForm, p: usize, beta: f64, sigma: f64) -> f64 {
    let p = p as f64;
    match model {
        ModelForm::Linear => 2.0 * beta / (4.0 * p * beta * beta + sigma * sigma).sqrt(),
        ModelForm::LinearWithW => {
            2.0 * beta / (4.0 * p * beta * beta + sigma * sigma + 0.04).sqrt()
        }
        ModelForm::Nonlinear => {
            let per = 4.0 * beta * beta + 1.6 * beta + 0.48;
            (4.0 * beta + 0.8) / (4.0 * (p * per + sigma * sigma)).sqrt()
        }
    }
}

/// The generating match set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageTruth {
    pub pairs: Vec<(usize, usize)>,
    partner: Vec<Option<usize>>,
}

impl LinkageTruth {
    pub fn new(n_a: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut partner = vec![None; n_a];
        let mut seen_b = std::collections::HashSet::new();
        for &(i, j) in &pairs {
            if partner[i].replace(j).is_some() || !seen_b.insert(j) {
                return Err(Error::Invariant("truth is not one-to-one".into()));
            }
        }
        Ok(Self { pairs, partner })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_match(&self, i: usize, j: usize) -> bool {
        self.partner[i] == Some(j)
    }

    pub fn partner_of_a(&self, i: usize) -> Option<usize> {
        self.partner[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub n_m: usize,
}

pub fn metrics_from_pairs(
    pairs: impl IntoIterator<Item = (usize, usize)>,
    truth: &LinkageTruth,
) -> LinkMetrics {
    let mut n = 0;
    let mut correct = 0;
    for (i, j) in pairs {
        n += 1;
        if truth.is_match(i, j) {
            correct += 1;
        }
    }
    let tpr = if truth.is_empty() {
        0.0
    } else {
        correct as f64 / truth.len() as f64
    };
    let ppv = if n == 0 {
        0.0
    } else {
        correct as f64 / n as f64
    };
    let f1 = if tpr + ppv > 0.0 {
        2.0 * tpr * ppv / (tpr + ppv)
    } else {
        0.0
    };
    LinkMetrics {
        tpr,
        ppv,
        f1,
        n_m: n,
    }
}

/// TPR, PPV and F1 of an estimated linkage; PPV and F1 are 0 without links.
pub fn compute_metrics(estimated: &LinkageState, truth: &LinkageTruth) -> LinkMetrics {
    metrics_from_pairs(estimated.pairs(), truth)
}

/// Linking values of one simulated individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Person {
    pub female: bool,
    pub zip: [u8; 3],
    pub dob: Ymd,
}

impl Person {
    fn zip_string(&self) -> String {
        self.zip.iter().map(|d| char::from(b'0' + d)).collect()
    }
}

fn draw_birth_year<R: Rng + ?Sized>(rng: &mut R) -> i32 {
    let age = Normal::new(AGE_MEAN, AGE_SD).expect("valid").sample(rng);
    (REFERENCE_YEAR as f64 - age).floor() as i32
}

fn date_from_ordinal(year: i32, ordinal: u32) -> Ymd {
    let d = chrono::NaiveDate::from_yo_opt(year, ordinal).expect("ordinal within year");
    use chrono::Datelike;
    Ymd::new(d.year(), d.month() as u8, d.day() as u8).expect("valid date")
}

pub fn draw_person<R: Rng + ?Sized>(rng: &mut R) -> Person {
    let female = rng.random_bool(0.5);
    let zip = [
        rng.random_range(0..ZIP_SUPPORT[0]),
        rng.random_range(0..ZIP_SUPPORT[1]),
        rng.random_range(0..ZIP_SUPPORT[2]),
    ];
    let year = draw_birth_year(rng);
    let len = if crate::comparison::is_leap_year(year) {
        366
    } else {
        365
    };
    let dob = date_from_ordinal(year, rng.random_range(1..=len));
    Person { female, zip, dob }
}

/// Resamples each ZIP digit and each DOB component with probability `ε / 3`.
/// Gender is never changed. A day that no longer exists in its month is clamped.
pub fn inject_errors<R: Rng + ?Sized>(person: &Person, epsilon: f64, rng: &mut R) -> Person {
    let p = (epsilon / 3.0).clamp(0.0, 1.0);
    let mut out = *person;
    if p == 0.0 {
        return out;
    }
    for (d, &support) in out.zip.iter_mut().zip(&ZIP_SUPPORT) {
        if rng.random_bool(p) {
            *d = rng.random_range(0..support);
        }
    }
    let Ymd {
        mut year,
        mut month,
        mut day,
    } = out.dob;
    if rng.random_bool(p) {
        day = rng.random_range(1..=days_in_month(year, month));
    }
    if rng.random_bool(p) {
        month = rng.random_range(1..=12);
    }
    if rng.random_bool(p) {
        year = draw_birth_year(rng);
    }
    day = day.min(days_in_month(year, month));
    out.dob = Ymd::new(year, month, day).expect("clamped date is valid");
    out
}

/// Gender, three-digit ZIP with prefix agreement, and date of birth.
pub fn simulation_fields() -> Vec<FieldSpec> {
    vec![
        FieldSpec::new("gender", FieldKind::ExactCategorical),
        FieldSpec::new("zip", FieldKind::DigitPrefix { digits: 3 }),
        FieldSpec::new("dob", FieldKind::DateYmd),
    ]
}

pub(crate) fn record_file(
    name: &str,
    prefix: &str,
    people: &[Person],
    exclusive_names: Vec<String>,
    exclusive: Vec<f64>,
    block_keys: Option<Vec<String>>,
) -> RecordFile {
    let mut linking = Vec::with_capacity(people.len() * 3);
    for p in people {
        linking.push(FieldValue::Text(if p.female { "F" } else { "M" }.into()));
        linking.push(FieldValue::Text(p.zip_string()));
        linking.push(FieldValue::Date(p.dob));
    }
    RecordFile {
        name: name.into(),
        ids: (0..people.len()).map(|k| format!("{prefix}{k}")).collect(),
        field_names: simulation_fields().into_iter().map(|f| f.name).collect(),
        linking,
        exclusive_names,
        exclusive,
        block_keys,
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub file_a: RecordFile,
    pub file_b: RecordFile,
    pub truth: LinkageTruth,
    /// Outcome per file-A record.
    pub x_a: Vec<f64>,
    /// Row-major covariates, `p` per file-B record.
    pub x_b: Vec<f64>,
    pub p: usize,
}

impl SimulatedData {
    pub fn regression_data(&self) -> RegressionData<f64> {
        RegressionData::new(self.x_a.clone(), self.x_b.clone(), self.p)
            .expect("consistent simulated dimensions")
    }

    /// First covariate of every file-B record.
    pub fn x_b1(&self) -> Vec<f64> {
        self.x_b.chunks(self.p).map(|r| r[0]).collect()
    }
}

fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x_b{k}")).collect()
}

/// Draws both files and the true links.
///
/// Matched file-B records copy the file-A linking values before errors are
/// injected. An unmatched file-A record borrows the covariates of a randomly
/// chosen unmatched file-B record for its nonmatch mean.
pub fn generate_files<R: Rng + ?Sized>(
    factors: &SimulationFactors,
    rng: &mut R,
) -> Result<SimulatedData> {
    factors.validate()?;
    let SimulationFactors {
        n_a, n_b, n_m, p, ..
    } = *factors;
    let mut perm_a: Vec<usize> = (0..n_a).collect();
    let mut perm_b: Vec<usize> = (0..n_b).collect();
    perm_a.shuffle(rng);
    perm_b.shuffle(rng);
    let pairs: Vec<(usize, usize)> = (0..n_m).map(|k| (perm_a[k], perm_b[k])).collect();
    let truth = LinkageTruth::new(n_a, pairs)?;

    let people_a: Vec<Person> = (0..n_a).map(|_| draw_person(rng)).collect();
    let mut people_b: Vec<Person> = (0..n_b).map(|_| draw_person(rng)).collect();
    for &(i, j) in &truth.pairs {
        people_b[j] = people_a[i];
    }
    for person in people_b.iter_mut() {
        *person = inject_errors(person, factors.epsilon, rng);
    }

    let cov = Normal::new(1.0, 2.0).expect("valid");
    let noise = Normal::new(0.0, factors.sigma).expect("valid");
    let x_b: Vec<f64> = (0..n_b * p).map(|_| cov.sample(rng)).collect();
    let unmatched_b: Vec<usize> = perm_b[n_m..].to_vec();
    let mut x_a = vec![0.0; n_a];
    for (i, slot) in x_a.iter_mut().enumerate() {
        let (j, intercept, slope, quad) = match truth.partner_of_a(i) {
            Some(j) => (j, 10.0, factors.beta_m, 0.1),
            None => {
                let j = if unmatched_b.is_empty() {
                    rng.random_range(0..n_b)
                } else {
                    unmatched_b[rng.random_range(0..unmatched_b.len())]
                };
                (j, 5.0, factors.beta_u, 0.03)
            }
        };
        let xb = &x_b[j * p..(j + 1) * p];
        let mut mean = intercept + slope * xb.iter().sum::<f64>();
        match factors.model {
            ModelForm::Linear => {}
            ModelForm::LinearWithW => {
                let w = cov.sample(rng);
                mean += 0.1 * w;
            }
            ModelForm::Nonlinear => mean += quad * xb.iter().map(|v| v * v).sum::<f64>(),
        }
        *slot = mean + noise.sample(rng);
    }

    let file_a = record_file("A", "a", &people_a, vec!["x_a".into()], x_a.clone(), None);
    let file_b = record_file("B", "b", &people_b, covariate_names(p), x_b.clone(), None);
    Ok(SimulatedData {
        file_a,
        file_b,
        truth,
        x_a,
        x_b,
        p,
    })
}

/// SplitMix64 finalizer, used to derive independent seeds from a root seed.
pub fn mix_seed(root: u64, parts: &[u64]) -> u64 {
    let mut z = root;
    for &p in parts {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
