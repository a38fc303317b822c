//! Monte Carlo simulation of a policy in the generative network model.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{Action, MdpContext, MdpModel, State};
use crate::model::{Demand, Network, Route};
use crate::solver::Policy;
use crate::stochastics::{greedy_wait, GridSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkSampling {
    /// Draw the travel time once on entering the link.
    #[default]
    SingleDraw,
    /// Draw arrival at every tick from the hazard probabilities.
    TickByTick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub gamma: f64,
    pub max_steps: usize,
    pub link_sampling: LinkSampling,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            gamma: 0.99,
            max_steps: 10_000,
            link_sampling: LinkSampling::SingleDraw,
        }
    }
}

/// Source of the random quantities of an episode.
pub trait Realizer {
    /// Ticks beyond the link's minimum travel time.
    fn travel_offset(&mut self, link: usize) -> u32;
    fn arrives(&mut self, hazard: f64) -> bool;
    fn queue_length(&mut self, node: usize) -> u32;
    /// Charge steps of one aircraft ahead in the queue.
    fn charge_steps(&mut self) -> u32;
}

/// Cached samplers for every distribution of a network.
#[derive(Debug, Clone)]
pub struct Samplers {
    travel: Vec<GridSampler>,
    queue: Vec<GridSampler>,
    charge: GridSampler,
}

impl Samplers {
    pub fn new(network: &Network) -> Self {
        Samplers {
            travel: network
                .links()
                .iter()
                .map(|l| GridSampler::new(0, &l.travel_pmf))
                .collect(),
            queue: network.nodes().iter().map(GridSampler::queue).collect(),
            charge: GridSampler::charge(network.charge_dist()),
        }
    }
}

pub struct Sampled<'a, R> {
    pub samplers: &'a Samplers,
    pub rng: R,
}

impl<R: Rng> Realizer for Sampled<'_, R> {
    fn travel_offset(&mut self, link: usize) -> u32 {
        self.samplers.travel[link].sample(&mut self.rng)
    }

    fn arrives(&mut self, hazard: f64) -> bool {
        hazard >= 1.0 || self.rng.random::<f64>() < hazard
    }

    fn queue_length(&mut self, node: usize) -> u32 {
        self.samplers.queue[node].sample(&mut self.rng)
    }

    fn charge_steps(&mut self) -> u32 {
        self.samplers.charge.sample(&mut self.rng)
    }
}

/// The largest travel time, queue and charge duration with positive
/// probability, every time.
pub struct WorstCase<'a> {
    pub network: &'a Network,
}

impl Realizer for WorstCase<'_> {
    fn travel_offset(&mut self, link: usize) -> u32 {
        self.network.link(link).worst_offset()
    }

    fn arrives(&mut self, hazard: f64) -> bool {
        hazard >= 1.0
    }

    fn queue_length(&mut self, node: usize) -> u32 {
        self.network.node(node).worst_queue()
    }

    fn charge_steps(&mut self) -> u32 {
        self.network.charge_dist().worst_index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeOutcome {
    Arrived,
    Exhausted,
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub elapsed_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: State,
    pub outcome: EpisodeOutcome,
    pub total_time: f64,
    /// Includes the discounted penalty stream of an exhaustion sink.
    pub discounted_return: f64,
}

impl Trajectory {
    /// `step, state_descr, action_descr, reward, elapsed_min`.
    pub fn write_csv<W: Write>(&self, network: &Network, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "state_descr", "action_descr", "reward", "elapsed_min"])?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.state.describe(network),
                s.action.describe(network),
                s.reward.to_string(),
                format!("{:.12}", s.elapsed_min),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs a policy of `model` in the generative model behind it.
pub struct Simulator<'a> {
    ctx: MdpContext<'a>,
    model: &'a MdpModel,
    policy: &'a Policy,
    samplers: Samplers,
    pub config: RolloutConfig,
}

struct Next {
    state: State,
    reward: f64,
    elapsed: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        network: &'a Network,
        demand: Demand,
        model: &'a MdpModel,
        policy: &'a Policy,
        config: RolloutConfig,
    ) -> Result<Self> {
        Ok(Simulator {
            ctx: MdpContext::new(network, demand)?,
            model,
            policy,
            samplers: Samplers::new(network),
            config,
        })
    }

    pub fn network(&self) -> &'a Network {
        self.ctx.network
    }

    fn action(&self, state: State) -> Result<Action> {
        self.model
            .index_of(&state)
            .and_then(|s| self.policy.get(s))
            .ok_or_else(|| Error::PolicyUndefined(state.describe(self.ctx.network)))
    }

    fn hover(&self, node: usize, battery: u32, real: &mut dyn Realizer) -> Next {
        let net = self.ctx.network;
        let r = net.rewards();
        let dt = net.delta_t();
        let spots = net.node(node).capacity;
        let wait = if battery == 0 || spots == 0 {
            None
        } else {
            let q = real.queue_length(node);
            let durations: Vec<u32> = (0..q).map(|_| real.charge_steps()).collect();
            Some(if q < spots {
                0
            } else {
                greedy_wait(spots, &durations) * net.battery().charge_step_time
            })
        };
        match wait {
            Some(k) if k < battery => Next {
                state: State::Charging {
                    node,
                    battery: battery - k,
                },
                reward: r.r_t * k as f64,
                elapsed: k as f64 * dt,
            },
            _ => Next {
                state: State::Queue { node, battery: 0 },
                reward: r.r_d,
                elapsed: battery as f64 * dt,
            },
        }
    }

    fn depart(&self, link: usize, battery: u32, real: &mut dyn Realizer, offset: &mut u32) -> Next {
        let net = self.ctx.network;
        if self.config.link_sampling == LinkSampling::SingleDraw {
            *offset = real.travel_offset(link);
        }
        let after = battery.saturating_sub(net.link(link).x_lower);
        Next {
            state: State::LinkTravel {
                link,
                tick: 0,
                battery: after,
            },
            reward: net.rewards().r_t * (battery - after) as f64,
            elapsed: (battery - after) as f64 * net.delta_t(),
        }
    }

    fn step(&self, state: State, action: Action, real: &mut dyn Realizer, offset: &mut u32) -> Next {
        let net = self.ctx.network;
        let r = net.rewards();
        match (state, action) {
            (State::Queue { node, battery }, _) => self.hover(node, battery, real),
            (State::Charging { .. }, Action::Default) => Next {
                state: State::Target,
                reward: r.r_a,
                elapsed: 0.0,
            },
            (State::Charging { node, battery }, Action::Charge) => Next {
                state: State::Charging {
                    node,
                    battery: battery + 1,
                },
                reward: r.r_b(net.battery()),
                elapsed: net.battery().minutes_per_index(net.delta_t()),
            },
            (State::Charging { battery, .. } | State::Decision { battery, .. }, Action::ChooseLink(e)) => {
                self.depart(e, battery, real, offset)
            }
            (State::LinkTravel { link, tick, battery }, _) => {
                let arrived = match self.config.link_sampling {
                    LinkSampling::SingleDraw => tick >= *offset,
                    LinkSampling::TickByTick => real.arrives(self.ctx.hazards[link][tick as usize]),
                };
                if arrived {
                    Next {
                        state: State::Decision { link, battery },
                        reward: 0.0,
                        elapsed: 0.0,
                    }
                } else {
                    Next {
                        state: State::LinkTravel {
                            link,
                            tick: tick + 1,
                            battery: battery - 1,
                        },
                        reward: r.r_t,
                        elapsed: net.delta_t(),
                    }
                }
            }
            (State::Decision { link, battery }, Action::Charge) => {
                let node = net.link(link).head;
                if battery < net.battery().capacity {
                    Next {
                        state: State::Queue { node, battery },
                        reward: 0.0,
                        elapsed: 0.0,
                    }
                } else {
                    self.hover(node, battery, real)
                }
            }
            _ => Next {
                state,
                reward: 0.0,
                elapsed: 0.0,
            },
        }
    }

    /// One episode from the model's initial state.
    pub fn run(&self, real: &mut dyn Realizer) -> Result<Trajectory> {
        let g = self.config.gamma;
        let mut state = self.model.states[self.model.initial];
        let mut steps = Vec::new();
        let mut total_time = 0.0;
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut offset = 0;
        let outcome = loop {
            if state == State::Target {
                break EpisodeOutcome::Arrived;
            }
            if state.is_exhausted() {
                ret += discount * self.ctx.network.rewards().r_d / (1.0 - g);
                break EpisodeOutcome::Exhausted;
            }
            if steps.len() >= self.config.max_steps {
                break EpisodeOutcome::Truncated;
            }
            let action = self.action(state)?;
            let next = self.step(state, action, real, &mut offset);
            ret += discount * next.reward;
            discount *= g;
            total_time += next.elapsed;
            steps.push(Step {
                state,
                action,
                reward: next.reward,
                elapsed_min: next.elapsed,
            });
            state = next.state;
        };
        Ok(Trajectory {
            steps,
            final_state: state,
            outcome,
            total_time,
            discounted_return: ret,
        })
    }

    /// A sampled episode; episode `i` of seed `s` always draws the same
    /// stream.
    pub fn sample_episode(&self, seed: u64, episode: u64) -> Result<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode);
        self.run(&mut Sampled {
            samplers: &self.samplers,
            rng,
        })
    }

    pub fn worst_case(&self) -> Result<Trajectory> {
        self.run(&mut WorstCase {
            network: self.ctx.network,
        })
    }

    pub fn estimate(&self, episodes: u64, seed: u64) -> Result<RolloutStats> {
        let results: Vec<Trajectory> = (0..episodes)
            .into_par_iter()
            .map(|i| self.sample_episode(seed, i))
            .collect::<Result<_>>()?;
        Ok(RolloutStats::from_trajectories(&results))
    }
}

/// Simulates one sampled episode of `policy`.
pub fn simulate_episode(
    network: &Network,
    demand: Demand,
    model: &MdpModel,
    policy: &Policy,
    seed: u64,
    max_steps: usize,
) -> Result<Trajectory> {
    let config = RolloutConfig {
        max_steps,
        ..RolloutConfig::default()
    };
    Simulator::new(network, demand, model, policy, config)?.sample_episode(seed, 0)
}

pub fn estimate(
    network: &Network,
    demand: Demand,
    model: &MdpModel,
    policy: &Policy,
    episodes: u64,
    seed: u64,
    config: RolloutConfig,
) -> Result<RolloutStats> {
    Simulator::new(network, demand, model, policy, config)?.estimate(episodes, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStats {
    pub episodes: u64,
    pub mean_total_time: f64,
    pub time_std_error: f64,
    pub exhaustion_rate: f64,
    pub exhaustion_std_error: f64,
    pub truncated: u64,
    pub mean_discounted_return: f64,
    pub return_std_error: f64,
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let Some(x0) = xs.clone().next() else {
        return (f64::NAN, f64::NAN);
    };
    // shifted by the first sample so constant data has exactly zero spread
    let (s1, s2) = xs.fold((0.0, 0.0), |(a, b), x| (a + (x - x0), b + (x - x0) * (x - x0)));
    let mean = x0 + s1 / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

impl RolloutStats {
    pub fn from_trajectories(ts: &[Trajectory]) -> Self {
        let (mean_total_time, time_std_error) = mean_and_se(ts.iter().map(|t| t.total_time));
        let (mean_discounted_return, return_std_error) =
            mean_and_se(ts.iter().map(|t| t.discounted_return));
        let (exhaustion_rate, exhaustion_std_error) = mean_and_se(
            ts.iter()
                .map(|t| f64::from(u8::from(t.outcome == EpisodeOutcome::Exhausted))),
        );
        RolloutStats {
            episodes: ts.len() as u64,
            mean_total_time,
            time_std_error,
            exhaustion_rate,
            exhaustion_std_error,
            truncated: ts
                .iter()
                .filter(|t| t.outcome == EpisodeOutcome::Truncated)
                .count() as u64,
            mean_discounted_return,
            return_std_error,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "episodes",
            "mean_total_time",
            "time_std_error",
            "exhaustion_rate",
            "exhaustion_std_error",
            "truncated",
            "mean_discounted_return",
            "return_std_error",
        ])?;
        w.write_record([
            self.episodes.to_string(),
            format!("{:.12e}", self.mean_total_time),
            format!("{:.12e}", self.time_std_error),
            format!("{:.12e}", self.exhaustion_rate),
            format!("{:.12e}", self.exhaustion_std_error),
            self.truncated.to_string(),
            format!("{:.12e}", self.mean_discounted_return),
            format!("{:.12e}", self.return_std_error),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// A landing along a traced route.
#[derive(Debug, Clone, PartialEq)]
pub struct Landing {
    pub node: usize,
    /// Battery index on arriving over the node.
    pub arrival_battery: u32,
    pub wait_ticks: u32,
    /// Battery index on leaving; `None` at the destination.
    pub departure_battery: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedRoute {
    pub route: Route,
    pub landings: Vec<Landing>,
}

impl TracedRoute {
    pub fn lands_at(&self, node: usize) -> bool {
        self.landings.iter().any(|l| l.node == node)
    }

    pub fn describe(&self, network: &Network) -> String {
        let full = network.battery().capacity;
        let mut out = self.route.describe(network);
        for l in &self.landings {
            let leave = match l.departure_battery {
                Some(b) if b == full => "full".to_string(),
                Some(b) => format!("{} min", network.ticks_to_minutes(b)),
                None => "arrived".into(),
            };
            out.push_str(&format!(
                "\n  land {} with {} min, wait {} min, leave {}",
                network.node(l.node).id,
                network.ticks_to_minutes(l.arrival_battery),
                network.ticks_to_minutes(l.wait_ticks),
                leave
            ));
        }
        out
    }
}

/// Links flown and landings made by an arrived trajectory.
pub fn trace_route(trajectory: &Trajectory, network: &Network) -> Result<TracedRoute> {
    if trajectory.outcome != EpisodeOutcome::Arrived {
        return Err(Error::NotArrived);
    }
    let mut links = Vec::new();
    let mut landings: Vec<Landing> = Vec::new();
    let mut states = trajectory.steps.iter().map(|s| s.state).collect::<Vec<_>>();
    states.push(trajectory.final_state);
    for (i, step) in trajectory.steps.iter().enumerate() {
        let next = states[i + 1];
        match (step.state, step.action) {
            (_, Action::ChooseLink(e)) => {
                if let (Some(last), State::Charging { battery, .. }) = (landings.last_mut(), step.state) {
                    last.departure_battery = Some(battery);
                }
                links.push(e);
            }
            (State::Decision { link, battery }, Action::Charge) => landings.push(Landing {
                node: network.link(link).head,
                arrival_battery: battery,
                wait_ticks: 0,
                departure_battery: None,
            }),
            (State::Queue { battery, .. }, _) => {
                if let (Some(last), State::Charging { battery: after, .. }) = (landings.last_mut(), next) {
                    last.wait_ticks = battery - after;
                }
            }
            _ => {}
        }
        // a full-battery landing skips the queue state
        if let (State::Decision { battery, .. }, Action::Charge, State::Charging { battery: after, .. }) =
            (step.state, step.action, next)
        {
            if let Some(last) = landings.last_mut() {
                last.wait_ticks = battery - after;
            }
        }
    }
    Ok(TracedRoute {
        route: Route::new(links, network)?,
        landings,
    })
}
