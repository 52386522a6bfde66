//! Greedy prototype selection over the tree-distance space.
//!
//! Every algorithm minimizes the same objective
//!
//! ```text
//! f(P) = Σ_i min_{j ∈ P} ( d(x_i, x_j) + β · fi(x_i, x_j) )
//! ```
//!
//! where `fi` sums the similarity weights of the two instances' preprocessed
//! attributions. With `β = 0` this is the plain k-medoid cost.
//!
//! * [`Algorithm::Gkm`] picks `k_per_class` medoids inside each predicted
//!   class, using only that class's instances for both terms.
//! * [`Algorithm::Sma`] adds the candidate with the largest objective
//!   decrease over all instances, `m_total` times.
//! * [`Algorithm::Apete`] runs the same loop as SM-A but stops once the best
//!   relative improvement falls under `apete_threshold`, never before every
//!   predicted class has a prototype.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alike::{preprocess_scores, AlikeConfig, SimilarityOperator};
use crate::attribution::AttributionMatrix;
use crate::error::{Error, Result};
use crate::proximity::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gkm,
    Sma,
    Apete,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gkm => "gkm",
            Algorithm::Sma => "sma",
            Algorithm::Apete => "apete",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gkm" => Ok(Algorithm::Gkm),
            "sma" => Ok(Algorithm::Sma),
            "apete" => Ok(Algorithm::Apete),
            other => Err(Error::InvalidParams(format!("unknown algorithm `{other}`"))),
        }
    }
}

pub const DEFAULT_APETE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub algorithm: Algorithm,
    pub beta: f64,
    pub alike: AlikeConfig,
    pub k_per_class: usize,
    pub m_total: usize,
    pub apete_threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Gkm,
            beta: 0.0,
            alike: AlikeConfig::default(),
            k_per_class: 3,
            m_total: 10,
            apete_threshold: DEFAULT_APETE_THRESHOLD,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        match self.algorithm {
            Algorithm::Gkm if self.k_per_class == 0 => {
                Err(Error::InvalidParams("k_per_class must be positive".into()))
            }
            Algorithm::Sma if self.m_total == 0 => {
                Err(Error::InvalidParams("m_total must be positive".into()))
            }
            Algorithm::Apete if !(self.apete_threshold > 0.0 && self.apete_threshold < 1.0) => {
                Err(Error::InvalidParams(format!(
                    "apete_threshold must lie in (0,1), got {}",
                    self.apete_threshold
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Source of pairwise `fi` values.
pub trait FiSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fi(&self, i: usize, j: usize) -> f64;
}

/// `Σ_l (x̂_l ∘ p̂_l)`.
pub fn fi_term(x_hat: &[f64], p_hat: &[f64], operator: SimilarityOperator) -> Result<f64> {
    if x_hat.len() != p_hat.len() {
        return Err(Error::LengthMismatch {
            left: x_hat.len(),
            right: p_hat.len(),
        });
    }
    Ok(fi_unchecked(x_hat, p_hat, operator))
}

#[inline]
fn fi_unchecked(x_hat: &[f64], p_hat: &[f64], operator: SimilarityOperator) -> f64 {
    x_hat
        .iter()
        .zip(p_hat)
        .map(|(&x, &p)| operator.apply(x, p))
        .sum()
}

/// Preprocessed scores φ̂ for every row of an attribution matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n_features: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_attributions(attr: &AttributionMatrix, cfg: &AlikeConfig) -> Self {
        let data = attr.rows().flat_map(|row| preprocess_scores(row, cfg)).collect();
        Self {
            n_features: attr.n_features(),
            data,
        }
    }

    /// Wraps already-preprocessed rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::LengthMismatch {
                left: n_features,
                right: bad.len(),
            });
        }
        Ok(Self {
            n_features,
            data: rows.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_features).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }
}

/// Dense precomputed `fi` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiMatrix {
    n: usize,
    data: Vec<f64>,
}

impl FiMatrix {
    pub fn from_scores(scores: &ScoreMatrix, operator: SimilarityOperator) -> Self {
        let n = scores.n_rows();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = fi_unchecked(scores.row(i), scores.row(j), operator);
                }
            });
        Self { n, data }
    }

    /// All-zero matrix, for callers that never use the fi term.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

impl FiSource for FiMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn fi(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// Computes `fi` on demand from the stored φ̂ rows.
#[derive(Debug, Clone)]
pub struct LazyFi<'a> {
    pub scores: &'a ScoreMatrix,
    pub operator: SimilarityOperator,
}

impl FiSource for LazyFi<'_> {
    fn len(&self) -> usize {
        self.scores.n_rows()
    }

    fn fi(&self, i: usize, j: usize) -> f64 {
        fi_unchecked(self.scores.row(i), self.scores.row(j), self.operator)
    }
}

/// Everything the greedy algorithms read: distances, fi values, β and the
/// black box's predicted label for every training instance.
pub struct SelectionProblem<'a, F: FiSource> {
    dist: &'a DistanceMatrix,
    fi: &'a F,
    beta: f64,
    predicted: &'a [usize],
}

impl<'a, F: FiSource> SelectionProblem<'a, F> {
    pub fn new(dist: &'a DistanceMatrix, fi: &'a F, beta: f64, predicted: &'a [usize]) -> Result<Self> {
        if fi.len() != dist.len() {
            return Err(Error::LengthMismatch {
                left: dist.len(),
                right: fi.len(),
            });
        }
        if predicted.len() != dist.len() {
            return Err(Error::LengthMismatch {
                left: dist.len(),
                right: predicted.len(),
            });
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        Ok(Self {
            dist,
            fi,
            beta,
            predicted,
        })
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn predicted(&self) -> &[usize] {
        self.predicted
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j) + self.beta * self.fi.fi(i, j)
    }

    pub fn assignment_cost(&self, i: usize, j: usize) -> Result<f64> {
        assignment_cost(i, j, self.dist, self.fi, self.beta)
    }

    pub fn objective(&self, prototypes: &[usize]) -> Result<f64> {
        objective(prototypes, self.dist, self.fi, self.beta)
    }

    /// Distinct predicted classes, ascending.
    fn classes(&self) -> Vec<usize> {
        let mut classes = self.predicted.to_vec();
        classes.sort_unstable();
        classes.dedup();
        classes
    }
}

/// `d(i, j) + β · fi(i, j)`.
pub fn assignment_cost<F: FiSource + ?Sized>(
    i: usize,
    j: usize,
    dist: &DistanceMatrix,
    fi: &F,
    beta: f64,
) -> Result<f64> {
    let n = dist.len().min(fi.len());
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
    }
    Ok(dist.get(i, j) + beta * fi.fi(i, j))
}

/// Sum over all instances of the cheapest assignment to a prototype.
pub fn objective<F: FiSource + ?Sized>(
    prototypes: &[usize],
    dist: &DistanceMatrix,
    fi: &F,
    beta: f64,
) -> Result<f64> {
    if prototypes.is_empty() {
        return Err(Error::EmptyPrototypeSet);
    }
    let n = dist.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut best = f64::INFINITY;
        for &j in prototypes {
            best = best.min(assignment_cost(i, j, dist, fi, beta)?);
        }
        total += best;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrototypeSet {
    /// Training-row indices in selection order.
    pub indices: Vec<usize>,
    /// Black-box label of each prototype.
    pub labels: Vec<usize>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub prototypes: PrototypeSet,
    /// Full objective (over all instances) after each addition.
    pub objective_trace: Vec<f64>,
}

/// Incremental objective over a fixed member set: `best[k]` is the cheapest
/// assignment of `members[k]` to the prototypes chosen so far.
struct Greedy<'p, 'a, F: FiSource> {
    problem: &'p SelectionProblem<'a, F>,
    members: Vec<usize>,
    best: Vec<f64>,
    chosen: Vec<bool>,
    objective: f64,
}

impl<'p, 'a, F: FiSource> Greedy<'p, 'a, F> {
    fn new(problem: &'p SelectionProblem<'a, F>, members: Vec<usize>) -> Self {
        let m = members.len();
        Self {
            problem,
            members,
            best: vec![f64::INFINITY; m],
            chosen: vec![false; problem.len()],
            objective: f64::INFINITY,
        }
    }

    fn objective_with(&self, candidate: usize) -> f64 {
        self.members
            .iter()
            .zip(&self.best)
            .map(|(&i, &b)| b.min(self.problem.cost(i, candidate)))
            .sum()
    }

    /// Unchosen candidate with the smallest resulting objective, ties to the
    /// lowest index.
    fn best_candidate(&self, candidates: &[usize]) -> Option<(usize, f64)> {
        let scored: Vec<(usize, f64)> = candidates
            .par_iter()
            .filter(|&&c| !self.chosen[c])
            .map(|&c| (c, self.objective_with(c)))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (c, f) in scored {
            match best {
                Some((bc, bf)) if f > bf || (f == bf && c > bc) => {}
                _ => best = Some((c, f)),
            }
        }
        best
    }

    fn commit(&mut self, candidate: usize) {
        self.chosen[candidate] = true;
        for (b, &i) in self.best.iter_mut().zip(&self.members) {
            *b = b.min(self.problem.cost(i, candidate));
        }
        self.objective = self.best.iter().sum();
    }
}

/// Runs the configured algorithm.
pub fn select<F: FiSource>(problem: &SelectionProblem<'_, F>, cfg: &SelectionConfig) -> Result<Selection> {
    cfg.validate()?;
    match cfg.algorithm {
        Algorithm::Gkm => select_gkm(problem, cfg.k_per_class),
        Algorithm::Sma => select_sma(problem, cfg.m_total),
        Algorithm::Apete => select_apete(problem, cfg.apete_threshold),
    }
}

fn finish<F: FiSource>(problem: &SelectionProblem<'_, F>, indices: Vec<usize>, trace: Vec<f64>) -> Selection {
    let labels = indices.iter().map(|&i| problem.predicted[i]).collect();
    Selection {
        prototypes: PrototypeSet { indices, labels },
        objective_trace: trace,
    }
}

/// `k_per_class` greedy medoids inside each predicted class.
pub fn select_gkm<F: FiSource>(problem: &SelectionProblem<'_, F>, k_per_class: usize) -> Result<Selection> {
    if problem.is_empty() {
        return Err(Error::EmptyInput("no training instances".into()));
    }
    if k_per_class == 0 {
        return Err(Error::InvalidParams("k_per_class must be positive".into()));
    }
    let classes = problem.classes();
    let groups: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..problem.len()).filter(|&i| problem.predicted[i] == c).collect())
        .collect();
    for (&class, members) in classes.iter().zip(&groups) {
        if members.len() < k_per_class {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                required: k_per_class,
            });
        }
    }

    let mut global = Greedy::new(problem, (0..problem.len()).collect());
    let mut indices = Vec::new();
    let mut trace = Vec::new();
    for members in groups {
        let mut local = Greedy::new(problem, members.clone());
        for _ in 0..k_per_class {
            let (c, _) = local
                .best_candidate(&members)
                .expect("class has at least k_per_class members");
            local.commit(c);
            global.commit(c);
            indices.push(c);
            trace.push(global.objective);
        }
    }
    Ok(finish(problem, indices, trace))
}

/// `m_total` greedy additions over all instances jointly.
pub fn select_sma<F: FiSource>(problem: &SelectionProblem<'_, F>, m_total: usize) -> Result<Selection> {
    if m_total == 0 {
        return Err(Error::InvalidParams("m_total must be positive".into()));
    }
    if m_total > problem.len() {
        return Err(Error::MTooLarge {
            requested: m_total,
            available: problem.len(),
        });
    }
    let all: Vec<usize> = (0..problem.len()).collect();
    let mut greedy = Greedy::new(problem, all.clone());
    let mut indices = Vec::with_capacity(m_total);
    let mut trace = Vec::with_capacity(m_total);
    for _ in 0..m_total {
        let (c, _) = greedy.best_candidate(&all).expect("m_total <= n");
        greedy.commit(c);
        indices.push(c);
        trace.push(greedy.objective);
    }
    Ok(finish(problem, indices, trace))
}

/// SM-A's loop with an automatic stop. Additions are unconditional until
/// every predicted class owns a prototype. After that, the best candidate is
/// added only if it lowers the objective and its relative improvement
/// `(f_prev − f_new) / |f_prev|` is at least `threshold`.
pub fn select_apete<F: FiSource>(problem: &SelectionProblem<'_, F>, threshold: f64) -> Result<Selection> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParams(format!(
            "apete_threshold must lie in (0,1), got {threshold}"
        )));
    }
    if problem.is_empty() {
        return Err(Error::EmptyInput("no training instances".into()));
    }
    let classes = problem.classes();
    let mut covered = vec![false; classes.len()];
    let class_slot = |label: usize| classes.binary_search(&label).expect("label is a predicted class");

    let all: Vec<usize> = (0..problem.len()).collect();
    let mut greedy = Greedy::new(problem, all.clone());
    let mut indices = Vec::new();
    let mut trace = Vec::new();
    while let Some((c, f_new)) = greedy.best_candidate(&all) {
        if covered.iter().all(|&c| c) {
            let f_prev = greedy.objective;
            let improvement = f_prev - f_new;
            if improvement <= 0.0 {
                break;
            }
            if f_prev != 0.0 && improvement / f_prev.abs() < threshold {
                break;
            }
        }
        greedy.commit(c);
        covered[class_slot(problem.predicted[c])] = true;
        indices.push(c);
        trace.push(greedy.objective);
    }
    Ok(finish(problem, indices, trace))
}

/// Builds the fi structure from raw attributions and runs the configured
/// algorithm. Attributions are only read when β > 0.
pub fn select_from_attributions(
    dist: &DistanceMatrix,
    attributions: Option<&AttributionMatrix>,
    predicted: &[usize],
    cfg: &SelectionConfig,
) -> Result<Selection> {
    cfg.validate()?;
    let fi = if cfg.beta == 0.0 {
        FiMatrix::zeros(dist.len())
    } else {
        let attributions = attributions
            .ok_or_else(|| Error::InvalidParams("beta > 0 needs attributions".into()))?;
        if attributions.n_rows() != dist.len() {
            return Err(Error::LengthMismatch {
                left: dist.len(),
                right: attributions.n_rows(),
            });
        }
        let scores = ScoreMatrix::from_attributions(attributions, &cfg.alike);
        FiMatrix::from_scores(&scores, cfg.alike.operator)
    };
    let problem = SelectionProblem::new(dist, &fi, cfg.beta, predicted)?;
    select(&problem, cfg)
}
