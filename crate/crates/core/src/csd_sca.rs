//! Decentralized stochastic successive convex approximation.
//!
//! Every station is an agent holding its own precoders plus a private copy
//! of every surface configuration. Each iteration the agents draw a fresh
//! noisy channel sample, solve their strongly concave surrogates, take a
//! damped step, average surface copies with their neighbors and refresh the
//! tracked gradients.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitance::{
    candidate_capacitance, dykstra_project, grad_capacitance, response_sensitivity, DYKSTRA_TOL,
};
use crate::channel::{agent_sample, effective_channels, generate_channels, ChannelSet, Dims};
use crate::config::{Cooperation, Scenario, ScheduleSection};
use crate::consensus::{
    adaptive_adjacency, channel_gains, disagreement, metropolis_weights, mix, static_adjacency,
    Topology,
};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, RMat};
use crate::lsap::project_permutation;
use crate::permutation::{best_response_permutation, grad_permutation, permutation_cost};
use crate::physics::{
    Architecture, BdrisState, CapacitanceMatrix, CircuitParams, GroupStructure, PermutationMatrix,
    SurfaceConfig, SurfaceResponse,
};
use crate::precoder::{bisection_power, grad_rate_w, pricing_w, PrecoderTerm, PrecoderWeights, Surrogate};
use crate::rate::{sum_rate, EffectiveChannels, PrecoderSet, RateSnapshot};
use crate::rng::{child_seed, complex_normal, substream, tag};
use crate::tracking::{tracker_update, Tracker};

/// Relative slack allowed on the power budget by the feasibility audit.
const POWER_SLACK: f64 = 1e-9;

/// One channel realization together with everything the optimizer needs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dims: Dims,
    pub groups: GroupStructure,
    pub architecture: Architecture,
    pub mode: Cooperation,
    pub topology: Topology,
    pub circuit: CircuitParams,
    pub freqs: Vec<f64>,
    pub p_max_w: f64,
    pub csi_error_delta: f64,
    pub tau: f64,
    pub schedule: ScheduleSection,
    /// Seed of every random draw made during the run.
    pub seed: u64,
    pub channels: ChannelSet,
}

impl Problem {
    /// Realization `index` of a scenario: user drop, fading and run seed
    /// all derive from `(scenario.seed, index)`.
    pub fn from_scenario(scenario: &Scenario, index: usize) -> Result<Self> {
        scenario.validate()?;
        let seed = child_seed(scenario.seed, &[tag::REALIZATION, index as u64]);
        let dims = scenario.dims();
        let geometry = scenario.layout().place(dims.users, seed)?;
        let channels = generate_channels(
            &geometry,
            &scenario.pathloss_model(),
            &dims,
            scenario.noise_w(),
            seed,
        )?;
        Self::with_channels(scenario, channels, seed)
    }

    /// Uses externally supplied true channels.
    pub fn with_channels(scenario: &Scenario, channels: ChannelSet, seed: u64) -> Result<Self> {
        scenario.validate()?;
        Ok(Problem {
            dims: scenario.dims(),
            groups: scenario.group_structure()?,
            architecture: scenario.architecture,
            mode: scenario.mode,
            topology: scenario.network.topology,
            circuit: scenario.circuit.to_params(),
            freqs: scenario.frequencies(),
            p_max_w: scenario.p_max_w(),
            csi_error_delta: scenario.system.csi_error_delta,
            tau: scenario.tau(),
            schedule: scenario.schedule.clone(),
            seed,
            channels,
        })
    }

    fn optimizes_permutation(&self) -> bool {
        self.architecture.optimizes_permutation()
    }
}

/// Local variables of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Own precoders `[u][k]`.
    pub precoders: Vec<Vec<CMat>>,
    /// Private copy of every surface.
    pub surfaces: BdrisState,
    /// Mixed, not yet projected, grouping matrices (one per surface); empty
    /// when the grouping is fixed.
    pub relaxed_perms: Vec<RMat>,
}

impl AgentState {
    fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.surfaces {
            for cap in &s.caps {
                out.extend(cap.to_dense_pf().iter().copied());
            }
        }
        for q in &self.relaxed_perms {
            out.extend(q.iter().copied());
        }
        out
    }
}

pub fn precoder_set(agents: &[AgentState]) -> PrecoderSet {
    PrecoderSet {
        w: agents.iter().map(|a| a.precoders.clone()).collect(),
    }
}

/// Network-average surface configuration: mean capacitances (feasible by
/// convexity) and the permutation closest to the mean grouping.
pub fn consensus_config(agents: &[AgentState]) -> Result<BdrisState> {
    let n = agents.len() as f64;
    let surfaces = agents[0].surfaces.len();
    (0..surfaces)
        .map(|r| {
            let caps = (0..agents[0].surfaces[r].caps.len())
                .map(|g| {
                    let mut acc = agents[0].surfaces[r].caps[g].to_dense_pf() * 0.0;
                    for a in agents {
                        acc += a.surfaces[r].caps[g].to_dense_pf();
                    }
                    CapacitanceMatrix::from_upper(&(acc / n))
                })
                .collect();
            let mut q = agents[0].surfaces[r].perm.to_dense() * 0.0;
            for a in agents {
                q += a.surfaces[r].perm.to_dense();
            }
            let perm = project_permutation(&(q / n))?;
            Ok(SurfaceConfig { caps, perm })
        })
        .collect()
}

/// Sum rate on the true channels when every station sees `state`.
pub fn true_sum_rate(problem: &Problem, precoders: &PrecoderSet, state: &BdrisState) -> Result<f64> {
    let responses = state
        .iter()
        .map(|s| s.response(&problem.freqs, &problem.circuit))
        .collect::<Result<Vec<_>>>()?;
    let refs = vec![&responses[..]; problem.dims.stations];
    let eff = effective_channels(&problem.channels, &refs)?;
    sum_rate(&eff, precoders, &problem.channels.noise_var)
}

/// `||x - 1 (x) mean(x)||` over the stacked capacitances (pF) and relaxed
/// grouping matrices of all agents.
pub fn consensus_error(agents: &[AgentState]) -> f64 {
    disagreement(&agents.iter().map(AgentState::stacked).collect::<Vec<_>>())
}

/// Relative-change stopping rule; a zero rate only stops on an exact tie.
pub fn has_converged(previous: f64, current: f64, epsilon: f64) -> bool {
    if !(previous.is_finite() && current.is_finite()) {
        return false;
    }
    let change = (current - previous).abs();
    if current == 0.0 {
        return change == 0.0;
    }
    change / current.abs() <= epsilon
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub gradients_s: f64,
    pub best_response_s: f64,
    pub consensus_s: f64,
}

/// Feasibility of one logged iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `max_b P_b / P_max`.
    pub max_power_ratio: f64,
    pub capacitances_in_box: bool,
    pub capacitances_symmetric: bool,
}

impl Feasibility {
    pub fn ok(&self) -> bool {
        self.max_power_ratio <= 1.0 + POWER_SLACK
            && self.capacitances_in_box
            && self.capacitances_symmetric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    /// True-channel sum rate at the consensus configuration (bit/s/Hz).
    pub sum_rate: f64,
    pub consensus_error: f64,
    pub alpha: f64,
    pub rho: f64,
    pub feasibility: Feasibility,
    pub timing: PhaseTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    pub agents: Vec<AgentState>,
}

impl RunTrace {
    pub fn final_sum_rate(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.sum_rate)
    }
}

/// What the observer sees after each logged iterate.
pub struct IterationView<'a> {
    pub t: usize,
    pub agents: &'a [AgentState],
    pub row: &'a TraceRow,
    /// Mixing matrix used to produce this iterate (identity at `t = 0`).
    pub weights: &'a RMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop at the relative-change rule; otherwise run all iterations.
    pub early_stop: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { early_stop: true }
    }
}

/// One agent's view of the network at the current iterate.
struct LocalView {
    eff: EffectiveChannels,
    snap: RateSnapshot,
    grad_w: Vec<Vec<CMat>>,
    pricing_w: Vec<Vec<CMat>>,
    /// Flattened `[r][g]`.
    grad_caps: Vec<RMat>,
    /// `[r]`; empty when the grouping is fixed.
    grad_perms: Vec<RMat>,
}

fn local_view(
    problem: &Problem,
    agent: &AgentState,
    b: usize,
    sample: &ChannelSet,
    precoders: &PrecoderSet,
) -> Result<LocalView> {
    let dims = &problem.dims;
    let responses: Vec<SurfaceResponse> = agent
        .surfaces
        .iter()
        .map(|s| s.response(&problem.freqs, &problem.circuit))
        .collect::<Result<_>>()?;
    let refs = vec![&responses[..]; dims.stations];
    let eff = effective_channels(sample, &refs)?;
    let snap = RateSnapshot::new(&eff, precoders, &sample.noise_var)?;
    let per_uk = |f: &dyn Fn(usize, usize) -> CMat| -> Vec<Vec<CMat>> {
        (0..dims.users)
            .map(|u| (0..dims.subcarriers).map(|k| f(u, k)).collect())
            .collect()
    };
    let grad_w = per_uk(&|u, k| grad_rate_w(&eff, &snap, b, u, k));
    let pricing_w = if problem.mode.is_cooperative() {
        per_uk(&|u, k| pricing_w(&eff, &snap, b, u, k))
    } else {
        per_uk(&|_, _| CMat::zeros(dims.tx_antennas, dims.streams))
    };
    let mut grad_caps = Vec::new();
    let mut grad_perms = Vec::new();
    for (r, surface) in agent.surfaces.iter().enumerate() {
        let sens: Vec<CMat> = (0..dims.subcarriers)
            .map(|k| response_sensitivity(sample, &snap, precoders, b, r, k))
            .collect();
        grad_caps.extend(grad_capacitance(
            &sens,
            surface,
            &problem.groups,
            &problem.freqs,
            &problem.circuit,
        )?);
        if problem.optimizes_permutation() {
            grad_perms.push(grad_permutation(
                &sens,
                &responses[r].blocks,
                &surface.perm.to_dense(),
            )?);
        }
    }
    Ok(LocalView {
        eff,
        snap,
        grad_w,
        pricing_w,
        grad_caps,
        grad_perms,
    })
}

fn local_views(problem: &Problem, agents: &[AgentState], t: usize) -> Result<Vec<LocalView>> {
    let precoders = precoder_set(agents);
    (0..agents.len())
        .into_par_iter()
        .map(|b| {
            let sample = agent_sample(&problem.channels, problem.csi_error_delta, problem.seed, b, t);
            local_view(problem, &agents[b], b, &sample, &precoders)
        })
        .collect()
}

fn initial_agents(problem: &Problem) -> Vec<AgentState> {
    let dims = &problem.dims;
    let (c_min, c_max) = (problem.circuit.c_min_pf(), problem.circuit.c_max_pf());
    let mid = 0.5 * (c_min + c_max);
    let spread = 0.1 * (c_max - c_min);
    (0..dims.stations)
        .map(|b| {
            let mut rng = substream(problem.seed, &[tag::INIT_PRECODER, b as u64]);
            let mut precoders: Vec<Vec<CMat>> = (0..dims.users)
                .map(|_| {
                    (0..dims.subcarriers)
                        .map(|_| {
                            CMat::from_fn(dims.tx_antennas, dims.streams, |_, _| {
                                complex_normal(&mut rng, 1.0)
                            })
                        })
                        .collect()
                })
                .collect();
            let power: f64 = precoders.iter().flatten().map(|w| w.norm_squared()).sum();
            let scale = c((problem.p_max_w / power).sqrt(), 0.0);
            precoders.iter_mut().flatten().for_each(|w| *w *= scale);

            let mut cap_rng = substream(problem.seed, &[tag::INIT_CAPACITANCE, b as u64]);
            let mut perm_rng = substream(problem.seed, &[tag::INIT_PERMUTATION, b as u64]);
            let n = problem.groups.m_per_group();
            let surfaces: Vec<SurfaceConfig> = (0..dims.surfaces)
                .map(|_| {
                    let caps = (0..problem.groups.n_groups())
                        .map(|_| {
                            let mut cap = CapacitanceMatrix::filled(n, mid);
                            for i in 0..n {
                                for j in i..n {
                                    cap.set(i, j, mid + spread * cap_rng.random_range(-1.0..=1.0));
                                }
                            }
                            cap
                        })
                        .collect();
                    let perm = if problem.optimizes_permutation() {
                        let mut a: Vec<usize> = (0..dims.elements).collect();
                        a.shuffle(&mut perm_rng);
                        PermutationMatrix::from_assignment(a).expect("shuffled identity")
                    } else {
                        PermutationMatrix::identity(dims.elements)
                    };
                    SurfaceConfig { caps, perm }
                })
                .collect();
            let relaxed_perms = if problem.optimizes_permutation() {
                surfaces.iter().map(|s| s.perm.to_dense()).collect()
            } else {
                Vec::new()
            };
            AgentState {
                precoders,
                surfaces,
                relaxed_perms,
            }
        })
        .collect()
}

/// Solution of one agent's surrogate sub-problems.
struct BestResponse {
    precoders: Vec<CMat>,
    caps: Vec<RMat>,
    perms: Vec<PermutationMatrix>,
}

fn best_response(
    problem: &Problem,
    agent: &AgentState,
    b: usize,
    view: &LocalView,
    w_accum: &[Vec<CMat>],
    cap_tracker: &Tracker,
    perm_tracker: Option<&Tracker>,
    rho: f64,
) -> Result<BestResponse> {
    let dims = &problem.dims;
    let tau = problem.tau;
    let weights = PrecoderWeights { rho, tau };
    let mut terms = Vec::with_capacity(dims.users * dims.subcarriers);
    for u in 0..dims.users {
        for k in 0..dims.subcarriers {
            let surrogate = Surrogate::new(&view.snap.links[u][k], &view.eff[b][u][k], &agent.precoders[u][k]);
            terms.push(PrecoderTerm::new(
                surrogate,
                view.pricing_w[u][k].clone(),
                w_accum[u][k].clone(),
                weights,
            ));
        }
    }
    let (_, precoders) = bisection_power(&terms, problem.p_max_w)?;

    let (c_min, c_max) = (problem.circuit.c_min_pf(), problem.circuit.c_max_pf());
    let current: Vec<RMat> = agent
        .surfaces
        .iter()
        .flat_map(|s| s.caps.iter().map(CapacitanceMatrix::to_dense_pf))
        .collect();
    let caps = current
        .iter()
        .enumerate()
        .map(|(i, cur)| {
            let cand = candidate_capacitance(
                cur,
                &cap_tracker.last_grad()[i],
                &cap_tracker.pricing[i],
                &cap_tracker.accum[i],
                rho,
                tau,
            );
            Ok(dykstra_project(&cand, c_min, c_max, DYKSTRA_TOL)?.to_dense_pf())
        })
        .collect::<Result<Vec<_>>>()?;

    let perms = match perm_tracker {
        Some(tr) => agent
            .surfaces
            .iter()
            .enumerate()
            .map(|(r, s)| {
                let cost = permutation_cost(
                    &s.perm.to_dense(),
                    &tr.last_grad()[r],
                    &tr.pricing[r],
                    &tr.accum[r],
                    rho,
                    tau,
                );
                best_response_permutation(&cost)
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(BestResponse { precoders, caps, perms })
}

fn mixing_weights(problem: &Problem, views: &[LocalView], t: usize) -> Result<RMat> {
    let stations = problem.dims.stations;
    let adj = match problem.topology {
        Topology::Adaptive => {
            let mut gains = RMat::zeros(stations, problem.dims.users);
            for (b, v) in views.iter().enumerate() {
                gains.set_row(b, &channel_gains(&v.eff).row(b));
            }
            let mut rng = substream(problem.seed, &[tag::ADAPTIVE_GRAPH, t as u64]);
            adaptive_adjacency(&gains, &mut rng)?
        }
        other => static_adjacency(other, stations),
    };
    metropolis_weights(&adj)
}

fn accumulate_w(accum: &mut [Vec<Vec<CMat>>], views: &[LocalView], rho: f64) {
    for (acc, v) in accum.iter_mut().zip(views) {
        for (u, row) in acc.iter_mut().enumerate() {
            for (k, d) in row.iter_mut().enumerate() {
                *d = d.scale(1.0 - rho) + (&v.grad_w[u][k] + &v.pricing_w[u][k]).scale(rho);
            }
        }
    }
}

fn audit(problem: &Problem, agents: &[AgentState]) -> Feasibility {
    let (c_min, c_max) = (problem.circuit.c_min_pf(), problem.circuit.c_max_pf());
    let max_power_ratio = agents
        .iter()
        .map(|a| a.precoders.iter().flatten().map(|w| w.norm_squared()).sum::<f64>() / problem.p_max_w)
        .fold(0.0, f64::max);
    let caps = || agents.iter().flat_map(|a| a.surfaces.iter().flat_map(|s| s.caps.iter()));
    Feasibility {
        max_power_ratio,
        capacitances_in_box: caps().all(|cap| cap.in_box(c_min, c_max)),
        capacitances_symmetric: caps().all(|cap| {
            let d = cap.to_dense_pf();
            d == d.transpose()
        }),
    }
}

fn log_row(problem: &Problem, agents: &[AgentState], t: usize, timing: PhaseTimes) -> Result<TraceRow> {
    let state = consensus_config(agents)?;
    let rate = true_sum_rate(problem, &precoder_set(agents), &state)?;
    if !rate.is_finite() {
        return Err(Error::NonFinite("sum rate"));
    }
    let (alpha, rho) = problem.schedule.step_sizes(t);
    Ok(TraceRow {
        t,
        sum_rate: rate,
        consensus_error: consensus_error(agents),
        alpha,
        rho,
        feasibility: audit(problem, agents),
        timing,
    })
}

pub fn run(problem: &Problem, options: RunOptions) -> Result<RunTrace> {
    run_observed(problem, options, |_| {})
}

/// Runs the optimizer, calling `observer` after every logged iterate.
pub fn run_observed(
    problem: &Problem,
    options: RunOptions,
    mut observer: impl FnMut(&IterationView<'_>),
) -> Result<RunTrace> {
    let stations = problem.dims.stations;
    let coop = problem.mode.is_cooperative();
    let mut agents = initial_agents(problem);

    let started = Instant::now();
    let mut views = local_views(problem, &agents, 0).map_err(|e| e.at_iteration(0))?;
    let mut cap_trackers: Vec<Tracker> = views
        .iter()
        .map(|v| Tracker::new(v.grad_caps.clone(), stations, coop))
        .collect();
    let mut perm_trackers: Vec<Tracker> = if problem.optimizes_permutation() {
        views
            .iter()
            .map(|v| Tracker::new(v.grad_perms.clone(), stations, coop))
            .collect()
    } else {
        Vec::new()
    };
    let mut w_accum: Vec<Vec<Vec<CMat>>> = views
        .iter()
        .map(|v| {
            v.grad_w
                .iter()
                .zip(&v.pricing_w)
                .map(|(g, p)| g.iter().zip(p).map(|(g, p)| g + p).collect())
                .collect()
        })
        .collect();
    let timing = PhaseTimes {
        gradients_s: started.elapsed().as_secs_f64(),
        ..PhaseTimes::default()
    };

    let mut rows = vec![log_row(problem, &agents, 0, timing).map_err(|e| e.at_iteration(0))?];
    let identity = RMat::identity(stations, stations);
    observer(&IterationView {
        t: 0,
        agents: &agents,
        row: &rows[0],
        weights: &identity,
    });

    let mut converged = false;
    for t in 0..problem.schedule.max_iterations {
        let mut step = || -> Result<(RMat, PhaseTimes)> {
            let (alpha, rho) = problem.schedule.step_sizes(t);
            let mut timing = PhaseTimes::default();

            let clock = Instant::now();
            let responses = (0..stations)
                .into_par_iter()
                .map(|b| {
                    best_response(
                        problem,
                        &agents[b],
                        b,
                        &views[b],
                        &w_accum[b],
                        &cap_trackers[b],
                        perm_trackers.get(b),
                        rho,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            timing.best_response_s = clock.elapsed().as_secs_f64();

            let clock = Instant::now();
            let weights = mixing_weights(problem, &views, t)?;
            let mut damped_caps = Vec::with_capacity(stations);
            let mut damped_perms = Vec::with_capacity(stations);
            for (agent, br) in agents.iter_mut().zip(&responses) {
                let mut flat = agent.precoders.iter_mut().flatten();
                for w_hat in &br.precoders {
                    let w = flat.next().expect("one precoder per term");
                    *w = w.scale(1.0 - alpha) + w_hat.scale(alpha);
                }
                let caps: Vec<RMat> = agent
                    .surfaces
                    .iter()
                    .flat_map(|s| s.caps.iter())
                    .zip(&br.caps)
                    .map(|(cur, hat)| cur.to_dense_pf() * (1.0 - alpha) + hat * alpha)
                    .collect();
                damped_caps.push(caps);
                let perms: Vec<RMat> = agent
                    .surfaces
                    .iter()
                    .zip(&br.perms)
                    .map(|(s, hat)| s.perm.to_dense() * (1.0 - alpha) + hat.to_dense() * alpha)
                    .collect();
                damped_perms.push(perms);
            }
            let mixed_caps = mix(&damped_caps, &weights);
            let mixed_perms = mix(&damped_perms, &weights);
            let (c_min, c_max) = (problem.circuit.c_min_pf(), problem.circuit.c_max_pf());
            let per_surface = problem.groups.n_groups();
            for (b, agent) in agents.iter_mut().enumerate() {
                for (r, surface) in agent.surfaces.iter_mut().enumerate() {
                    for (g, cap) in surface.caps.iter_mut().enumerate() {
                        let m = mixed_caps[b][r * per_surface + g].map(|x| x.clamp(c_min, c_max));
                        *cap = CapacitanceMatrix::from_upper(&m);
                    }
                    if problem.optimizes_permutation() {
                        surface.perm = project_permutation(&mixed_perms[b][r])?;
                    }
                }
                if problem.optimizes_permutation() {
                    agent.relaxed_perms = mixed_perms[b].clone();
                }
            }
            timing.consensus_s = clock.elapsed().as_secs_f64();

            let clock = Instant::now();
            views = local_views(problem, &agents, t + 1)?;
            let (_, rho_next) = problem.schedule.step_sizes(t + 1);
            tracker_update(
                &mut cap_trackers,
                views.iter().map(|v| v.grad_caps.clone()).collect(),
                &weights,
                rho_next,
            );
            if problem.optimizes_permutation() {
                tracker_update(
                    &mut perm_trackers,
                    views.iter().map(|v| v.grad_perms.clone()).collect(),
                    &weights,
                    rho_next,
                );
            }
            accumulate_w(&mut w_accum, &views, rho_next);
            timing.gradients_s = clock.elapsed().as_secs_f64();
            Ok((weights, timing))
        };
        let (weights, timing) = step().map_err(|e| e.at_iteration(t))?;

        let row = log_row(problem, &agents, t + 1, timing).map_err(|e| e.at_iteration(t + 1))?;
        let previous = rows.last().expect("row 0 is logged").sum_rate;
        let done = has_converged(previous, row.sum_rate, problem.schedule.epsilon);
        rows.push(row);
        observer(&IterationView {
            t: t + 1,
            agents: &agents,
            row: rows.last().expect("just pushed"),
            weights: &weights,
        });
        if done {
            converged = true;
            if options.early_stop {
                break;
            }
        }
    }
    Ok(RunTrace {
        rows,
        converged,
        agents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::max_asymmetry;

    fn desk(arch: Architecture, mode: Cooperation) -> Scenario {
        let mut s = Scenario::desk();
        s.architecture = arch;
        s.mode = mode;
        s.schedule.max_iterations = 12;
        s
    }

    #[test]
    fn convergence_rule() {
        assert!(has_converged(100.0, 100.05, 1e-3));
        assert!(!has_converged(100.0, 101.0, 1e-3));
        assert!(has_converged(0.0, 0.0, 1e-3));
        assert!(!has_converged(1.0, 0.0, 1e-3));
        assert!(!has_converged(f64::NAN, 1.0, 1e-3));
    }

    #[test]
    fn iterates_stay_feasible_for_every_architecture() {
        for arch in Architecture::ALL {
            let problem = Problem::from_scenario(&desk(arch, Cooperation::Coop), 0).unwrap();
            let mut seen = 0;
            let trace = run_observed(&problem, RunOptions { early_stop: false }, |view| {
                seen += 1;
                assert!(view.row.feasibility.ok(), "{arch}: {:?}", view.row.feasibility);
                for a in view.agents {
                    for s in &a.surfaces {
                        for cap in &s.caps {
                            assert_eq!(max_asymmetry(&cap.to_dense_pf()), 0.0);
                        }
                        if !arch.optimizes_permutation() {
                            assert_eq!(s.perm, PermutationMatrix::identity(8));
                        }
                    }
                }
            })
            .unwrap();
            assert_eq!(seen, trace.rows.len());
            assert_eq!(trace.rows.len(), 13);
        }
    }

    #[test]
    fn logged_rate_matches_recomputation() {
        let problem = Problem::from_scenario(&desk(Architecture::DynamicGroupConnected, Cooperation::Coop), 1).unwrap();
        run_observed(&problem, RunOptions::default(), |view| {
            let state = consensus_config(view.agents).unwrap();
            let r = true_sum_rate(&problem, &precoder_set(view.agents), &state).unwrap();
            assert!((r - view.row.sum_rate).abs() <= 1e-9 * r.abs().max(1.0));
        })
        .unwrap();
    }

    #[test]
    fn runs_are_deterministic() {
        let problem = Problem::from_scenario(&desk(Architecture::GroupConnected, Cooperation::PiZero), 2).unwrap();
        let a = run(&problem, RunOptions::default()).unwrap();
        let b = run(&problem, RunOptions::default()).unwrap();
        let strip = |t: &RunTrace| t.rows.iter().map(|r| (r.sum_rate, r.consensus_error)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.agents, b.agents);
    }

    #[test]
    fn complete_graph_reaches_agreement_in_one_mix() {
        let problem = Problem::from_scenario(&desk(Architecture::DynamicGroupConnected, Cooperation::Coop), 3).unwrap();
        let trace = run(&problem, RunOptions { early_stop: false }).unwrap();
        assert!(trace.rows[0].consensus_error > 0.0);
        assert!(trace.rows[1..].iter().all(|r| r.consensus_error < 1e-9));
    }

    #[test]
    fn single_agent_matches_network_of_one() {
        let mut s = desk(Architecture::FullyConnected, Cooperation::Coop);
        s.system.stations = 1;
        let problem = Problem::from_scenario(&s, 0).unwrap();
        let trace = run(&problem, RunOptions::default()).unwrap();
        assert!(trace.rows.iter().all(|r| r.consensus_error == 0.0));
        assert!(trace.final_sum_rate() > 0.0);
    }
}
