//! Simulated-annealing generation of 2-D sparse subarray candidates
//! minimizing the pairwise inverse-distance coupling cost
//! `k_o = sum_{i<j} 1 / ||m_i - m_j||`, optionally under a hard
//! aperture bound `||m_i - m_j|| <= B` on every pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::selection::SubarrayLabel;

/// Annealing schedule and constraint parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaConfig {
    /// Temperature levels.
    pub iterations: usize,
    /// Starting temperature; `None` uses the initial state's cost.
    pub initial_temperature: Option<f64>,
    /// Geometric cooling factor per level, in (0, 1).
    pub cooling_factor: f64,
    pub moves_per_temperature: usize,
    /// Max pairwise distance bound B in meters; `None` is unbounded.
    pub distance_bound: Option<f64>,
    pub seed: u64,
    /// Attempt budget for finding a feasible initial state under B.
    pub feasibility_attempts: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            iterations: 200,
            initial_temperature: None,
            cooling_factor: 0.95,
            moves_per_temperature: 50,
            distance_bound: None,
            seed: 0,
            feasibility_attempts: 10_000,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(Error::Validation(format!(
                "cooling_factor {} outside (0, 1)",
                self.cooling_factor
            )));
        }
        if let Some(b) = self.distance_bound {
            if b <= 0.0 {
                return Err(Error::Validation("distance_bound must be positive".into()));
            }
        }
        if self.moves_per_temperature == 0 {
            return Err(Error::Validation("moves_per_temperature must be >= 1".into()));
        }
        Ok(())
    }
}

/// Distinct SA-generated labels on a parent grid with their costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<T: Scalar = f64> {
    pub labels: Vec<SubarrayLabel>,
    pub parent: ArrayGeometry<T>,
    pub costs: Vec<f64>,
}

impl<T: Scalar> CandidateSet<T> {
    /// CSV export: `candidate_id,indices,k_o`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("candidate_id,indices,k_o\n");
        for (i, (label, cost)) in self.labels.iter().zip(&self.costs).enumerate() {
            s.push_str(&format!("{i},{},{cost}\n", label.to_compact()));
        }
        s
    }
}

/// Inverse-distance coupling cost over all sensor pairs.
pub fn coupling_cost<T: Scalar>(g_sub: &ArrayGeometry<T>) -> Result<f64> {
    cost_of_positions(g_sub.positions())
}

fn cost_of_positions<T: Scalar>(pos: &[[T; 3]]) -> Result<f64> {
    let mut acc = 0.0f64;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let dx = (pos[i][0] - pos[j][0]).as_f64();
            let dy = (pos[i][1] - pos[j][1]).as_f64();
            let dz = (pos[i][2] - pos[j][2]).as_f64();
            let d = (dx * dx + dy * dy + dz * dz).sqrt();
            if d <= 0.0 {
                return Err(Error::CoincidentSensors(i, j));
            }
            acc += 1.0 / d;
        }
    }
    Ok(acc)
}

fn max_pair_distance<T: Scalar>(parent: &ArrayGeometry<T>, sel: &[usize]) -> f64 {
    let pos = parent.positions();
    let mut worst = 0.0f64;
    for (a, &i) in sel.iter().enumerate() {
        for &j in &sel[a + 1..] {
            let dx = (pos[i][0] - pos[j][0]).as_f64();
            let dy = (pos[i][1] - pos[j][1]).as_f64();
            let dz = (pos[i][2] - pos[j][2]).as_f64();
            worst = worst.max((dx * dx + dy * dy + dz * dz).sqrt());
        }
    }
    worst
}

fn feasible<T: Scalar>(parent: &ArrayGeometry<T>, sel: &[usize], bound: Option<f64>) -> bool {
    match bound {
        None => true,
        Some(b) => max_pair_distance(parent, sel) <= b,
    }
}

fn cost_of_selection<T: Scalar>(parent: &ArrayGeometry<T>, sel: &[usize]) -> Result<f64> {
    let pos: Vec<[T; 3]> = sel.iter().map(|&i| parent.positions()[i]).collect();
    cost_of_positions(&pos)
}

/// One annealing run. Swap moves (one selected index for one
/// unselected, both uniform) with Metropolis acceptance
/// `exp(-delta / temperature)`; moves violating the distance bound are
/// rejected outright. Returns the best state ever visited.
pub fn sa_optimize<T: Scalar>(
    parent: &ArrayGeometry<T>,
    k: usize,
    cfg: &SaConfig,
) -> Result<(SubarrayLabel, f64)> {
    cfg.validate()?;
    let m = parent.len();
    if k > m {
        return Err(Error::SubarrayTooLarge { k, m });
    }
    if cfg.feasibility_attempts == 0 {
        return Err(Error::Validation("feasibility_attempts must be >= 1".into()));
    }
    let mut stream = Stream::derived(cfg.seed, "sa", &[]);

    // Feasible initial state by rejection.
    let mut current: Option<Vec<usize>> = None;
    for _ in 0..cfg.feasibility_attempts {
        let cand = stream.subset(m, k);
        if feasible(parent, &cand, cfg.distance_bound) {
            current = Some(cand);
            break;
        }
    }
    let mut current = current.ok_or(Error::InfeasibleBound {
        attempts: cfg.feasibility_attempts,
        bound: cfg.distance_bound.unwrap_or(f64::INFINITY),
    })?;

    if k == m {
        let cost = cost_of_selection(parent, &current)?;
        return Ok((SubarrayLabel::new(current, m)?, cost));
    }

    let mut current_cost = cost_of_selection(parent, &current)?;
    let mut best = current.clone();
    let mut best_cost = current_cost;

    let mut temperature = cfg.initial_temperature.unwrap_or(current_cost).max(1e-12);
    let mut unselected: Vec<usize> = (0..m).filter(|i| !current.contains(i)).collect();

    for _level in 0..cfg.iterations {
        for _ in 0..cfg.moves_per_temperature {
            let si = stream.below(k);
            let ui = stream.below(unselected.len());
            let mut proposal = current.clone();
            proposal[si] = unselected[ui];
            proposal.sort_unstable();
            if !feasible(parent, &proposal, cfg.distance_bound) {
                continue;
            }
            let proposal_cost = cost_of_selection(parent, &proposal)?;
            let delta = proposal_cost - current_cost;
            if metropolis_accept(delta, temperature, &mut stream) {
                let removed = current[si];
                current = proposal;
                unselected[ui] = removed;
                current_cost = proposal_cost;
                if current_cost < best_cost {
                    best_cost = current_cost;
                    best = current.clone();
                }
            }
        }
        temperature *= cfg.cooling_factor;
    }

    Ok((SubarrayLabel::new(best, m)?, best_cost))
}

/// Metropolis rule: downhill always, uphill with `exp(-delta/T)`.
fn metropolis_accept(delta: f64, temperature: f64, stream: &mut Stream) -> bool {
    delta <= 0.0 || stream.uniform() < (-delta / temperature).exp()
}

/// `count` distinct labels from independent restarts (streams derived
/// per restart); duplicate results re-run with a perturbed seed up to
/// an attempt cap.
pub fn generate_candidates<T: Scalar>(
    parent: &ArrayGeometry<T>,
    k: usize,
    count: usize,
    cfg: &SaConfig,
) -> Result<CandidateSet<T>> {
    if count == 0 {
        return Err(Error::Validation("candidate count must be >= 1".into()));
    }
    let cap = count.saturating_mul(20);
    let mut labels: Vec<SubarrayLabel> = Vec::with_capacity(count);
    let mut costs: Vec<f64> = Vec::with_capacity(count);
    let mut attempt = 0usize;

    while labels.len() < count {
        if attempt >= cap {
            return Err(Error::AttemptsExhausted {
                attempts: attempt,
                context: format!("only {} distinct SA candidates found", labels.len()),
            });
        }
        // Run a batch of restarts in parallel, then merge in order so
        // the result is independent of worker count.
        let batch = (count - labels.len()).min(16);
        let run_cfgs: Vec<SaConfig> = (0..batch)
            .map(|i| SaConfig {
                seed: crate::rng::derive_seed(cfg.seed, "sa-restart", &[(attempt + i) as u64]),
                ..cfg.clone()
            })
            .collect();
        let results: Vec<Result<(SubarrayLabel, f64)>> = run_cfgs
            .par_iter()
            .map(|c| sa_optimize(parent, k, c))
            .collect();
        for r in results {
            let (label, cost) = r?;
            if labels.len() < count && !labels.contains(&label) {
                labels.push(label);
                costs.push(cost);
            }
        }
        attempt += batch;
    }

    Ok(CandidateSet {
        labels,
        costs,
        parent: parent.clone(),
    })
}
