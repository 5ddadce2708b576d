//! Synthetic processes with planted lagged and contemporaneous structure.
//!
//! Randomness comes from ChaCha20 (`rand_chacha` 0.9) seeded with
//! `seed_from_u64`, and Gaussian draws from `rand_distr::StandardNormal`.
//! Both are fixed algorithms, so a `(spec, seed)` pair yields the same table
//! on every platform.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::table::{Column, IndexKind, TableError, TimeSeriesTable};
use crate::var::stability_of;

/// Steps simulated and discarded before the first kept row.
pub const BURN_IN: usize = 500;

/// Name of the generator recorded alongside generated data.
pub const GENERATOR: &str = "chacha20/rand_chacha-0.9+standard_normal/rand_distr-0.5";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub source: String,
    pub lag: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<Term>,
    pub noise_sd: f64,
}

/// A shared latent N(0, 1) draw, scaled by `mix`, added to both variables at
/// the same time index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContemporaneousLink {
    pub a: String,
    pub b: String,
    pub mix: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub variables: Vec<String>,
    /// One equation per variable, in the same order.
    pub equations: Vec<Equation>,
    #[serde(default)]
    pub contemporaneous_links: Vec<ContemporaneousLink>,
    pub t: usize,
    pub seed: u64,
    /// Replaces the burn-in: the first `max_lag` rows, one `Vec` per row.
    #[serde(default)]
    pub initial: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("{0} equations for {1} variables")]
    EquationCount(usize, usize),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("lag must be at least 1 (variable `{0}`)")]
    ZeroLag(String),
    #[error("noise standard deviation for `{0}` must be finite and non-negative")]
    BadNoise(String),
    #[error("non-finite coefficient for `{0}`")]
    NonFinite(String),
    #[error("process is unstable (spectral radius {0})")]
    Unstable(f64),
    #[error("initial block must have {rows} rows of {cols} values")]
    BadInitial { rows: usize, cols: usize },
    #[error("series length must be positive")]
    Empty,
    #[error(transparent)]
    Table(#[from] TableError),
}

impl ProcessSpec {
    pub fn max_lag(&self) -> usize {
        self.equations
            .iter()
            .flat_map(|e| e.terms.iter().map(|t| t.lag))
            .max()
            .unwrap_or(0)
    }

    fn position(&self, name: &str) -> Result<usize, SynthError> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| SynthError::UnknownVariable(name.into()))
    }

    /// Lag coefficient matrices `A_1..A_p`, rows are targets.
    pub fn coefficient_matrices(&self) -> Result<Vec<Matrix>, SynthError> {
        let k = self.variables.len();
        let mut mats = vec![Matrix::zeros(k, k); self.max_lag()];
        for (target, eq) in self.equations.iter().enumerate() {
            for term in &eq.terms {
                let source = self.position(&term.source)?;
                mats[term.lag - 1][(target, source)] += term.coefficient;
            }
        }
        Ok(mats)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let k = self.variables.len();
        if self.equations.len() != k {
            return Err(SynthError::EquationCount(self.equations.len(), k));
        }
        if self.t == 0 {
            return Err(SynthError::Empty);
        }
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.as_str()) {
                return Err(SynthError::DuplicateVariable(v.clone()));
            }
        }
        for (name, eq) in self.variables.iter().zip(&self.equations) {
            if !(eq.noise_sd >= 0.0 && eq.noise_sd.is_finite()) {
                return Err(SynthError::BadNoise(name.clone()));
            }
            if !eq.intercept.is_finite() {
                return Err(SynthError::NonFinite(name.clone()));
            }
            for term in &eq.terms {
                self.position(&term.source)?;
                if term.lag == 0 {
                    return Err(SynthError::ZeroLag(name.clone()));
                }
                if !term.coefficient.is_finite() {
                    return Err(SynthError::NonFinite(name.clone()));
                }
            }
        }
        for link in &self.contemporaneous_links {
            self.position(&link.a)?;
            self.position(&link.b)?;
            if !link.mix.is_finite() {
                return Err(SynthError::NonFinite(link.a.clone()));
            }
        }
        if let Some(init) = &self.initial {
            let rows = self.max_lag().max(1);
            if init.len() != rows || init.iter().any(|r| r.len() != k) || rows > self.t {
                return Err(SynthError::BadInitial { rows, cols: k });
            }
        }
        let mats = self.coefficient_matrices()?;
        if !mats.is_empty() {
            let s = stability_of(&mats);
            if !s.stable {
                return Err(SynthError::Unstable(s.spectral_radius));
            }
        }
        Ok(())
    }
}

/// Simulates `spec`, returning a tick-indexed table with `spec.t` rows.
pub fn generate(spec: &ProcessSpec) -> Result<TimeSeriesTable, SynthError> {
    spec.validate()?;
    let k = spec.variables.len();
    let p = spec.max_lag();
    let mats = spec.coefficient_matrices()?;
    let links: Vec<(usize, usize, f64)> = spec
        .contemporaneous_links
        .iter()
        .map(|l| Ok((spec.position(&l.a)?, spec.position(&l.b)?, l.mix)))
        .collect::<Result<_, SynthError>>()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    let (mut history, skip) = match &spec.initial {
        Some(init) => (init.clone(), 0),
        None => {
            let start: Vec<Vec<f64>> = (0..p.max(1))
                .map(|_| spec.equations.iter().map(|e| e.intercept).collect())
                .collect();
            (start, BURN_IN + p.max(1))
        }
    };
    let total = skip + spec.t;
    history.reserve(total.saturating_sub(history.len()));
    while history.len() < total {
        let now = history.len();
        let mut row: Vec<f64> = spec.equations.iter().map(|e| e.intercept).collect();
        for (lag, a) in mats.iter().enumerate() {
            let past = &history[now - lag - 1];
            for (i, r) in row.iter_mut().enumerate() {
                *r += (0..k).map(|j| a[(i, j)] * past[j]).sum::<f64>();
            }
        }
        for (r, e) in row.iter_mut().zip(&spec.equations) {
            let z: f64 = rng.sample(StandardNormal);
            *r += e.noise_sd * z;
        }
        for &(a, b, mix) in &links {
            let z: f64 = rng.sample(StandardNormal);
            row[a] += mix * z;
            row[b] += mix * z;
        }
        history.push(row);
    }

    let kept = &history[skip..];
    let columns = spec
        .variables
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let values: Vec<f64> = kept.iter().map(|r| r[j]).collect();
            Column::dense(name.clone(), &values)
        })
        .collect();
    Ok(TimeSeriesTable::new(
        "synth",
        IndexKind::Tick,
        (0..spec.t as i64).collect(),
        columns,
    )?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedKind {
    Causal,
    Correlation,
}

/// An edge the generator put into the data.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub kind: PlantedKind,
    pub a: String,
    pub b: String,
    /// Lag of a causal edge; 0 for correlation edges.
    pub lag: usize,
}

/// Ground truth implied by `spec`: one causal edge per nonzero term and one
/// correlation edge per contemporaneous link.
pub fn planted_edges(spec: &ProcessSpec) -> Vec<PlantedEdge> {
    let mut out = BTreeSet::new();
    for (target, eq) in spec.variables.iter().zip(&spec.equations) {
        for t in &eq.terms {
            if t.coefficient != 0.0 {
                out.insert(PlantedEdge {
                    kind: PlantedKind::Causal,
                    a: t.source.clone(),
                    b: target.clone(),
                    lag: t.lag,
                });
            }
        }
    }
    for l in &spec.contemporaneous_links {
        if l.mix != 0.0 {
            let (a, b) = if l.a <= l.b {
                (&l.a, &l.b)
            } else {
                (&l.b, &l.a)
            };
            out.insert(PlantedEdge {
                kind: PlantedKind::Correlation,
                a: a.clone(),
                b: b.clone(),
                lag: 0,
            });
        }
    }
    out.into_iter().collect()
}

/// Names accepted by `builtin_spec`.
pub const BUILTIN_SPECS: [&str; 1] = ["electrostatic"];

pub fn builtin_spec(name: &str, seed: u64) -> Option<ProcessSpec> {
    match name {
        "electrostatic" => Some(electrostatic_spec(seed)),
        _ => None,
    }
}

/// Electrostatic particle-transfer analog.
///
/// Machine settings are independent noise around their set points. Quality
/// depends on its own previous value, on plate distance two steps back and on
/// field strength and frequency one step back. Funnel width shares a
/// same-step disturbance with quality. Belt speed is unrelated to everything.
pub fn electrostatic_spec(seed: u64) -> ProcessSpec {
    let driver = |intercept: f64, noise_sd: f64| Equation {
        intercept,
        terms: Vec::new(),
        noise_sd,
    };
    let term = |source: &str, lag: usize, coefficient: f64| Term {
        source: source.into(),
        lag,
        coefficient,
    };
    ProcessSpec {
        variables: [
            "plate_distance",
            "field_strength",
            "field_frequency",
            "funnel_width",
            "belt_speed",
            "quality",
        ]
        .iter()
        .map(|s| String::from(*s))
        .collect(),
        equations: vec![
            driver(12.0, 0.5),
            driver(4.0, 0.3),
            driver(50.0, 2.0),
            driver(30.0, 1.0),
            driver(1.5, 0.1),
            Equation {
                intercept: 10.0,
                terms: vec![
                    term("quality", 1, 0.4),
                    term("plate_distance", 2, -0.8),
                    term("field_strength", 1, 1.5),
                    term("field_frequency", 1, 0.1),
                ],
                noise_sd: 0.5,
            },
        ],
        contemporaneous_links: vec![ContemporaneousLink {
            a: "funnel_width".into(),
            b: "quality".into(),
            mix: 0.8,
        }],
        t: 2000,
        seed,
        initial: None,
    }
}

/// Theoretical stationary mean of each variable.
pub fn stationary_mean(spec: &ProcessSpec) -> Result<BTreeMap<String, f64>, SynthError> {
    // (I - sum A_l) mu = c, solved by fixed-point iteration, which converges
    // for stable processes.
    let mats = spec.coefficient_matrices()?;
    let k = spec.variables.len();
    let c: Vec<f64> = spec.equations.iter().map(|e| e.intercept).collect();
    let mut mu = c.clone();
    for _ in 0..100_000 {
        let mut next = c.clone();
        for a in &mats {
            for (i, n) in next.iter_mut().enumerate() {
                *n += (0..k).map(|j| a[(i, j)] * mu[j]).sum::<f64>();
            }
        }
        let delta = next
            .iter()
            .zip(&mu)
            .map(|(x, y)| libm::fabs(x - y))
            .fold(0.0, f64::max);
        mu = next;
        if delta < 1e-14 {
            break;
        }
    }
    Ok(spec.variables.iter().cloned().zip(mu).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar1(coef: f64, noise: f64) -> ProcessSpec {
        ProcessSpec {
            variables: vec!["x".into()],
            equations: vec![Equation {
                intercept: 0.0,
                terms: vec![Term {
                    source: "x".into(),
                    lag: 1,
                    coefficient: coef,
                }],
                noise_sd: noise,
            }],
            contemporaneous_links: vec![],
            t: 10,
            seed: 1,
            initial: None,
        }
    }

    #[test]
    fn geometric_decay_from_override() {
        let mut spec = ar1(0.5, 0.0);
        spec.initial = Some(vec![vec![1.0]]);
        let x = generate(&spec).unwrap().numeric_column("x").unwrap();
        for (t, v) in x.iter().enumerate() {
            assert_eq!(*v, 0.5f64.powi(t as i32));
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&electrostatic_spec(3)).unwrap();
        let b = generate(&electrostatic_spec(3)).unwrap();
        let c = generate(&electrostatic_spec(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 2000);
        assert_eq!(a.width(), 6);
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(
            generate(&ar1(1.0, 1.0)),
            Err(SynthError::Unstable(_))
        ));
        let mut s = ar1(0.5, 1.0);
        s.equations[0].terms[0].lag = 0;
        assert_eq!(s.validate(), Err(SynthError::ZeroLag("x".into())));
    }

    #[test]
    fn electrostatic_is_stable_with_expected_truth() {
        let spec = electrostatic_spec(0);
        spec.validate().unwrap();
        let truth = planted_edges(&spec);
        let causal: Vec<_> = truth
            .iter()
            .filter(|e| e.kind == PlantedKind::Causal)
            .map(|e| (e.a.as_str(), e.lag))
            .collect();
        assert_eq!(
            causal,
            vec![
                ("field_frequency", 1),
                ("field_strength", 1),
                ("plate_distance", 2),
                ("quality", 1)
            ]
        );
        assert!(truth
            .iter()
            .all(|e| e.a != "belt_speed" && e.b != "belt_speed"));
        let mu = stationary_mean(&spec).unwrap();
        // 10 + 1.5*4 + 0.1*50 - 0.8*12 = 11.4, divided by 1 - 0.4
        assert!((mu["quality"] - 19.0).abs() < 1e-9);
    }
}
