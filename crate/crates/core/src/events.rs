//! Poisson event generation.
//!
//! Two independent homogeneous Poisson processes drive a run: gradient spikes
//! at global rate `n` (one per node per unit time) and communication spikes at
//! global rate `λ*`. Gradient spikes land on a uniformly drawn node,
//! communication spikes on an edge of the graph active at the spike time,
//! drawn proportionally to its weight (uniformly for unit weights).

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use crate::graph::TimeVaryingTopology;
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    GradientSpike { node: usize },
    CommSpike { i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    pub fn is_gradient(&self) -> bool {
        matches!(self.kind, EventKind::GradientSpike { .. })
    }
}

/// Arrival times of a homogeneous Poisson process on `[0, t_max]`.
pub struct PoissonClock<R> {
    exp: Option<Exp<f64>>,
    t: f64,
    t_max: f64,
    rng: R,
}

impl<R: Rng> PoissonClock<R> {
    /// A zero rate yields an empty clock.
    pub fn new(rate: f64, t_max: f64, rng: R) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::param(format!("Poisson rate must be >= 0, got {rate}")));
        }
        let exp = if rate > 0.0 {
            Some(Exp::new(rate).map_err(|e| Error::param(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            exp,
            t: 0.0,
            t_max,
            rng,
        })
    }
}

impl<R: Rng> Iterator for PoissonClock<R> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let exp = self.exp.as_ref()?;
        self.t += exp.sample(&mut self.rng);
        if self.t <= self.t_max {
            Some(self.t)
        } else {
            self.exp = None;
            None
        }
    }
}

pub fn sample_poisson_stream<R: Rng>(rate: f64, t_max: f64, rng: R) -> Result<Vec<f64>> {
    if rate <= 0.0 {
        return Err(Error::param(format!("Poisson rate must be > 0, got {rate}")));
    }
    Ok(PoissonClock::new(rate, t_max, rng)?.collect())
}

/// Lazily merged event stream; collecting it yields the same events as
/// [`build_schedule`] with the same arguments.
pub struct EventStream<'a> {
    topo: &'a TimeVaryingTopology,
    n: usize,
    grad_clock: PoissonClock<ChaCha8Rng>,
    comm_clock: PoissonClock<ChaCha8Rng>,
    grad_loc: ChaCha8Rng,
    comm_loc: ChaCha8Rng,
    edge_pickers: Vec<Option<WeightedIndex<f64>>>,
    next_grad: Option<f64>,
    next_comm: Option<f64>,
}

impl<'a> EventStream<'a> {
    /// `comm_rate = 0` disables communication (single-node runs).
    pub fn new(topo: &'a TimeVaryingTopology, comm_rate: f64, t_max: f64, seed: u64) -> Result<Self> {
        let n = topo.n();
        let mut grad_clock = PoissonClock::new(n as f64, t_max, rng::stream(seed, Stream::GradientClock))?;
        let mut comm_clock = PoissonClock::new(comm_rate, t_max, rng::stream(seed, Stream::GossipClock))?;
        let edge_pickers = topo
            .graphs()
            .iter()
            .map(|g| WeightedIndex::new(g.edges().iter().map(|e| e.weight)).ok())
            .collect();
        let next_grad = grad_clock.next();
        let next_comm = comm_clock.next();
        Ok(Self {
            topo,
            n,
            grad_clock,
            comm_clock,
            grad_loc: rng::stream(seed, Stream::GradientLocation),
            comm_loc: rng::stream(seed, Stream::GossipLocation),
            edge_pickers,
            next_grad,
            next_comm,
        })
    }
}

impl Iterator for EventStream<'_> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        // Exact ties have probability zero; the gradient spike goes first.
        let take_grad = match (self.next_grad, self.next_comm) {
            (None, None) => return None,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(g), Some(c)) => g <= c,
        };
        if take_grad {
            let time = self.next_grad.take()?;
            self.next_grad = self.grad_clock.next();
            let node = self.grad_loc.random_range(0..self.n);
            Some(Event {
                time,
                kind: EventKind::GradientSpike { node },
            })
        } else {
            let time = self.next_comm.take()?;
            self.next_comm = self.comm_clock.next();
            let idx = self.topo.index_at(time);
            let picker = self.edge_pickers[idx]
                .as_ref()
                .expect("connected graphs have a positive-weight edge");
            let e = self.topo.graphs()[idx].edges()[picker.sample(&mut self.comm_loc)];
            Some(Event {
                time,
                kind: EventKind::CommSpike { i: e.i, j: e.j },
            })
        }
    }
}

/// Pre-generated, time-sorted event list.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSchedule {
    pub events: Vec<Event>,
    pub t_max: f64,
    pub seed: u64,
}

impl EventSchedule {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn gradient_count(&self) -> usize {
        self.events.iter().filter(|e| e.is_gradient()).count()
    }

    pub fn comm_count(&self) -> usize {
        self.len() - self.gradient_count()
    }

    /// `time,kind,loc_a,loc_b` with `loc_b = -1` for gradient spikes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,kind,loc_a,loc_b\n");
        for e in &self.events {
            let _ = match e.kind {
                EventKind::GradientSpike { node } => writeln!(s, "{},grad,{},-1", e.time, node),
                EventKind::CommSpike { i, j } => writeln!(s, "{},comm,{},{}", e.time, i, j),
            };
        }
        s
    }
}

pub fn build_schedule(
    n: usize,
    lambda_star: f64,
    topo: &TimeVaryingTopology,
    t_max: f64,
    seed: u64,
) -> Result<EventSchedule> {
    if n < 2 {
        return Err(Error::param(format!("schedule needs n >= 2, got {n}")));
    }
    if n != topo.n() {
        return Err(Error::param(format!("n={n} does not match topology n={}", topo.n())));
    }
    if lambda_star.is_nan() || lambda_star <= 0.0 {
        return Err(Error::param(format!("λ* must be > 0, got {lambda_star}")));
    }
    let events = EventStream::new(topo, lambda_star, t_max, seed)?.collect();
    Ok(EventSchedule { events, t_max, seed })
}
