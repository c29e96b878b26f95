//! Maximum-likelihood estimation of link-utility coefficients from observed
//! state sequences, for either model.
//!
//! Identical sequences are grouped, so the log-likelihood is a short weighted
//! sum evaluated in a fixed order. This keeps it bitwise independent of the
//! observation order and far less noisy under finite differences than a sum
//! over thousands of individual terms.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ObservationRecord;
use crate::logsum::log_sum_exp;
use crate::network::{origin_states, transition_prob, State, StdNetwork, SupportPointSet};
use crate::nonrecursive::{log_logit, NonRecursiveModel};
use crate::policy::{contains, enumerate_policies, StateSequence, DEFAULT_POLICY_CAP};
use crate::recursive::{
    cumulative, draw, sequence_log_likelihood, solve_value_functions_from, Aggregation,
    RecursiveSampler, ValueFunction,
};
use crate::state_space::StateSpace;
use crate::utility::{dot, Attribute, LinkUtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Recursive,
    NonRecursive,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Recursive => "recursive",
            Model::NonRecursive => "nonrecursive",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(Model::Recursive),
            "nonrecursive" | "non-recursive" => Ok(Model::NonRecursive),
            other => Err(Error::Validation(format!("unknown model {other:?}"))),
        }
    }
}

/// One observed state sequence per traveler.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    observations: Vec<StateSequence>,
}

impl ObservationSet {
    pub fn new(
        observations: Vec<StateSequence>,
        network: &StdNetwork,
        spp: &SupportPointSet,
    ) -> Result<Self> {
        for (i, seq) in observations.iter().enumerate() {
            seq.validate(network, spp)
                .map_err(|e| Error::Validation(format!("observation {i}: {e}")))?;
        }
        Ok(Self { observations })
    }

    pub fn from_records(
        records: &[ObservationRecord],
        network: &StdNetwork,
        spp: &SupportPointSet,
    ) -> Result<Self> {
        let observations = records
            .iter()
            .map(|r| r.to_sequence(network, spp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { observations })
    }

    pub fn observations(&self) -> &[StateSequence] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Group {
    seq: StateSequence,
    count: f64,
    first_index: usize,
    // Non-recursive only: choice set index, ln Pr(EV_I | EV_0), containing policies.
    containing: Option<(usize, f64, Vec<usize>)>,
}

#[derive(Debug, Clone)]
struct CachedChoiceSet {
    expected_attributes: Vec<Vec<f64>>,
}

type ValueCache = Mutex<HashMap<Vec<u64>, Arc<ValueFunction>>>;

/// Log-likelihood of an observation set as a function of the coefficients,
/// with the coefficient-independent work done once.
///
/// The recursive model keeps the reachable state space and re-solves the value
/// functions for each coefficient vector. The non-recursive model keeps each
/// choice set's expected attribute vectors, so policy utilities are a dot product.
pub struct LikelihoodEvaluator {
    model: Model,
    mu: f64,
    dimension: usize,
    groups: Vec<Group>,
    space: Option<Arc<StateSpace>>,
    choice_sets: Vec<CachedChoiceSet>,
    value_cache: Option<ValueCache>,
}

impl LikelihoodEvaluator {
    pub fn new(
        model: Model,
        network: &StdNetwork,
        spp: &SupportPointSet,
        observations: &ObservationSet,
        attributes: &[Attribute],
        mu: f64,
    ) -> Result<Self> {
        LinkUtilitySpec::new(vec![0.0; attributes.len()], attributes.to_vec(), mu)?;
        let mut grouped: BTreeMap<&StateSequence, (f64, usize)> = BTreeMap::new();
        for (i, seq) in observations.observations().iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::InvalidSequence {
                    step: 0,
                    reason: format!("observation {i} is empty"),
                });
            }
            grouped.entry(seq).or_insert((0.0, i)).0 += 1.0;
        }
        let mut groups: Vec<Group> = grouped
            .into_iter()
            .map(|(seq, (count, first_index))| Group {
                seq: seq.clone(),
                count,
                first_index,
                containing: None,
            })
            .collect();

        let mut initials: Vec<State> = groups.iter().map(|g| g.seq.states()[0].clone()).collect();
        initials.sort();
        initials.dedup();

        let mut space = None;
        let mut choice_sets = Vec::new();
        match model {
            Model::Recursive => {
                space = Some(Arc::new(StateSpace::build(
                    network, spp, &initials, attributes,
                )?));
            }
            Model::NonRecursive => {
                for initial in &initials {
                    let cs = enumerate_policies(network, spp, initial, DEFAULT_POLICY_CAP)?;
                    let expected_attributes = cs
                        .policies()
                        .iter()
                        .map(|g| g.expected_attributes(network, spp, attributes))
                        .collect::<Result<Vec<_>>>()?;
                    for group in groups.iter_mut().filter(|g| &g.seq.states()[0] == initial) {
                        let states = group.seq.states();
                        let ln_pr =
                            transition_prob(spp, &states[states.len() - 1].ev, &states[0].ev).ln();
                        let policies = cs
                            .policies()
                            .iter()
                            .enumerate()
                            .filter(|(_, g)| contains(g, &group.seq))
                            .map(|(i, _)| i)
                            .collect();
                        group.containing = Some((choice_sets.len(), ln_pr, policies));
                    }
                    choice_sets.push(CachedChoiceSet {
                        expected_attributes,
                    });
                }
            }
        }
        Ok(Self {
            model,
            mu,
            dimension: attributes.len(),
            groups,
            space,
            choice_sets,
            value_cache: None,
        })
    }

    /// Memoizes solved value functions per coefficient vector.
    pub fn with_value_cache(mut self) -> Self {
        self.value_cache = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn distinct_sequences(&self) -> usize {
        self.groups.len()
    }

    fn value_function(&self, space: &Arc<StateSpace>, beta: &[f64]) -> Arc<ValueFunction> {
        let solve = || {
            Arc::new(ValueFunction::solve(
                space.clone(),
                beta,
                Aggregation::LogSum { mu: self.mu },
            ))
        };
        match &self.value_cache {
            None => solve(),
            Some(cache) => {
                let key: Vec<u64> = beta.iter().map(|b| b.to_bits()).collect();
                let mut map = cache.lock().expect("value cache poisoned");
                map.entry(key).or_insert_with(solve).clone()
            }
        }
    }

    /// `Σ_n ln P(σ_n)` at coefficients `beta`.
    pub fn log_likelihood(&self, beta: &[f64]) -> Result<f64> {
        if beta.len() != self.dimension {
            return Err(Error::Utility(format!(
                "{} coefficients for {} attributes",
                beta.len(),
                self.dimension
            )));
        }
        let terms = match self.model {
            Model::Recursive => self.recursive_terms(beta)?,
            Model::NonRecursive => self.nonrecursive_terms(beta),
        };
        let mut total = 0.0;
        for (group, ln_p) in self.groups.iter().zip(terms) {
            if ln_p == f64::NEG_INFINITY {
                return Err(Error::ZeroLikelihood {
                    index: group.first_index,
                    model: self.model.name(),
                });
            }
            if !ln_p.is_finite() {
                return Err(Error::NonFinite {
                    index: group.first_index,
                });
            }
            total += group.count * ln_p;
        }
        Ok(total)
    }

    fn recursive_terms(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let Some(space) = &self.space else {
            return Ok(Vec::new());
        };
        let vf = self.value_function(space, beta);
        self.groups
            .iter()
            .map(|g| sequence_log_likelihood(&vf, &g.seq))
            .collect()
    }

    fn nonrecursive_terms(&self, beta: &[f64]) -> Vec<f64> {
        let log_probs: Vec<Vec<f64>> = self
            .choice_sets
            .iter()
            .map(|cs| {
                let utilities: Vec<f64> = cs
                    .expected_attributes
                    .iter()
                    .map(|x| dot(beta, x))
                    .collect();
                log_logit(&utilities, self.mu)
            })
            .collect();
        self.groups
            .iter()
            .map(|g| {
                let (cs, ln_pr, policies) = g.containing.as_ref().expect("choice set assigned");
                let selected: Vec<f64> = policies.iter().map(|&i| log_probs[*cs][i]).collect();
                ln_pr + log_sum_exp(&selected)
            })
            .collect()
    }
}

/// Log-likelihood of `observations` under `model` with the coefficients,
/// attributes and scale of `utility`. Empty observation sets give 0.
pub fn log_likelihood(
    model: Model,
    network: &StdNetwork,
    spp: &SupportPointSet,
    observations: &ObservationSet,
    utility: &LinkUtilitySpec,
) -> Result<f64> {
    LikelihoodEvaluator::new(
        model,
        network,
        spp,
        observations,
        utility.attributes(),
        utility.mu(),
    )?
    .log_likelihood(utility.beta())
}

/// Central-difference gradient with per-coordinate step `relative_step · max(1, |x_i|)`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], relative_step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = relative_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

fn finite_difference_hessian<F>(f: &F, x: &[f64], relative_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| relative_step * v.abs().max(1.0)).collect();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    for i in 0..n {
        for j in i..n {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe.copy_from_slice(x);
                probe[i] += si * h[i];
                probe[j] += sj * h[j];
                f(&probe)
            };
            let value = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = value;
            hess[(j, i)] = value;
        }
    }
    Ok(hess)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the gradient's infinity norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative central-difference step for gradients.
    pub relative_step: f64,
    /// Relative step for the standard-error Hessian.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
            relative_step: 1e-6,
            hessian_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub model: Model,
    pub beta_hat: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub std_errors: Option<Vec<f64>>,
    pub observations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes the log-likelihood over the coefficients of `start` (its
/// attributes and scale are held fixed) with BFGS on finite-difference gradients.
///
/// Non-convergence is reported through `converged = false`, with the best
/// iterate returned.
pub fn fit(
    model: Model,
    network: &StdNetwork,
    spp: &SupportPointSet,
    observations: &ObservationSet,
    start: &LinkUtilitySpec,
    options: &FitOptions,
) -> Result<EstimationResult> {
    let evaluator = LikelihoodEvaluator::new(
        model,
        network,
        spp,
        observations,
        start.attributes(),
        start.mu(),
    )?;
    fit_with(&evaluator, start.beta(), options)
}

pub fn fit_with(
    evaluator: &LikelihoodEvaluator,
    beta0: &[f64],
    options: &FitOptions,
) -> Result<EstimationResult> {
    let n = beta0.len();
    let objective = |b: &[f64]| evaluator.log_likelihood(b).map(|ll| -ll);
    // Steps into regions where an observation becomes impossible are rejected
    // by the line search rather than aborting the fit.
    let trial = |b: &[f64]| match objective(b) {
        Ok(v) => Ok(v),
        Err(Error::ZeroLikelihood { .. }) | Err(Error::NonFinite { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    };

    let mut x = beta0.to_vec();
    let mut fx = objective(&x)?;
    let mut g = finite_difference_gradient(objective, &x, options.relative_step)?;
    let identity_scale = |g: &[f64]| 1.0 / inf_norm(g).max(1.0);
    let mut h_inv = DMatrix::<f64>::identity(n, n) * identity_scale(&g);
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < options.tolerance;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let grad = nalgebra::DVector::from_column_slice(&g);
        let mut dir = -(&h_inv * &grad);
        if dir.dot(&grad) >= 0.0 {
            h_inv = DMatrix::identity(n, n) * identity_scale(&g);
            dir = -(&h_inv * &grad);
        }
        let slope = dir.dot(&grad);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = x
                .iter()
                .zip(dir.iter())
                .map(|(a, d)| a + step * d)
                .collect();
            let fc = trial(&candidate)?;
            if fc <= fx + 1e-4 * step * slope {
                accepted = Some((candidate, fc, None));
                break;
            }
            // Near the optimum the decrease drops below the rounding noise of
            // the objective; accept the step if it reduces the gradient instead.
            if fc.is_finite() && fc - fx <= 1e-12 * fx.abs().max(1.0) {
                let gc = finite_difference_gradient(objective, &candidate, options.relative_step)?;
                if inf_norm(&gc) < inf_norm(&g) {
                    accepted = Some((candidate, fc, Some(gc)));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let g_new = match g_new {
            Some(gc) => gc,
            None => finite_difference_gradient(objective, &x_new, options.relative_step)?,
        };

        let s = nalgebra::DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = nalgebra::DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            h_inv = left * &h_inv * right + rho * &s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        converged = inf_norm(&g) < options.tolerance;
    }

    let hessian = finite_difference_hessian(&objective, &x, options.hessian_step)?;
    let std_errors = hessian.try_inverse().and_then(|cov| {
        let se: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
        se.iter()
            .all(|v| v.is_finite() && *v > 0.0)
            .then(|| se.into_iter().map(f64::sqrt).collect())
    });

    Ok(EstimationResult {
        model: evaluator.model(),
        beta_hat: x,
        log_likelihood: -fx,
        iterations,
        converged,
        gradient_norm: inf_norm(&g),
        std_errors,
        observations: evaluator.groups.iter().map(|g| g.count as usize).sum(),
    })
}

/// Draws `count` trajectories from `model`. Each starts at an origin state
/// drawn by its probability; the whole draw is reproducible from `seed`.
pub fn simulate(
    model: Model,
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
    count: usize,
    seed: u64,
    policy_cap: usize,
) -> Result<Vec<StateSequence>> {
    let roots = origin_states(network, spp);
    let root_cdf = cumulative(&roots.iter().map(|s| spp.mass(&s.ev)).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        Model::Recursive => {
            let vf = solve_value_functions_from(network, spp, utility, &roots)?;
            let sampler = RecursiveSampler::new(&vf);
            (0..count)
                .map(|_| {
                    let root = &roots[draw(&root_cdf, &mut rng)];
                    sampler.sample(root, &mut rng)
                })
                .collect()
        }
        Model::NonRecursive => {
            let models = roots
                .iter()
                .map(|root| {
                    let cs = enumerate_policies(network, spp, root, policy_cap)?;
                    NonRecursiveModel::new(cs, network, spp, utility)
                })
                .collect::<Result<Vec<_>>>()?;
            let samplers: Vec<_> = models.iter().map(|m| m.sampler(network, spp)).collect();
            (0..count)
                .map(|_| {
                    let root = draw(&root_cdf, &mut rng);
                    samplers[root].sample(&mut rng).map(|(_, seq)| seq)
                })
                .collect()
        }
    }
}
