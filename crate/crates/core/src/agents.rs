//! Message-passing execution: every node is an agent that, once per
//! synchronous round, publishes its current value to its neighbors and then
//! updates using only what it received.
//!
//! A round is one evaluation of the diffusion term, so plugging a
//! [`SyncNetwork`] into the integrator reproduces the matrix-mode
//! recurrence step for step. Agents may run concurrently within a round;
//! each writes only its own slot and reads only the previous round's
//! published values, so the output does not depend on scheduling.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;

use crate::consensus::Diffusion;
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Link {
    peer: usize,
    weight: f64,
}

/// One node's view of the network: its neighbors and link weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    id: usize,
    links: Vec<Link>,
}

impl Agent {
    pub fn id(&self) -> usize {
        self.id
    }

    /// `sum_j w_ij (x_j - x_i)` from the agent's own value and its inbox.
    fn diffuse(&self, own: f64, inbox: &[f64]) -> f64 {
        self.links.iter().zip(inbox).map(|(l, &x)| l.weight * (x - own)).sum()
    }
}

/// Agents on a graph, advanced in lock-step rounds.
#[derive(Debug)]
pub struct SyncNetwork {
    agents: Vec<Agent>,
    bound: f64,
    rounds: AtomicU64,
    messages: AtomicU64,
}

impl SyncNetwork {
    /// `weights[k]` belongs to `g.edges()[k]`.
    pub fn new(g: &Graph, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), g.edge_count(), "one weight per edge");
        let agents: Vec<Agent> = (0..g.node_count())
            .map(|id| Agent {
                id,
                links: g.neighbors(id).iter().map(|nb| Link { peer: nb.node, weight: weights[nb.edge] }).collect(),
            })
            .collect();
        // max over agents of twice the weighted degree, i.e. ||L||_inf
        let bound = agents
            .iter()
            .map(|a| 2.0 * a.links.iter().map(|l| l.weight.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        SyncNetwork { agents, bound, rounds: AtomicU64::new(0), messages: AtomicU64::new(0) }
    }

    pub fn unweighted(g: &Graph) -> Self {
        Self::new(g, &vec![1.0; g.edge_count()])
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    /// Rounds executed so far.
    pub fn rounds(&self) -> u64 {
        self.rounds.load(Ordering::Relaxed)
    }

    /// Point-to-point messages delivered so far.
    pub fn messages(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }

    /// One synchronous round. `published` holds every agent's broadcast
    /// value; after the barrier each agent reads its neighbors' entries.
    pub fn round(&self, published: &[f64], out: &mut [f64]) {
        let step = |agent: &Agent| -> f64 {
            let inbox: Vec<f64> = agent.links.iter().map(|l| published[l.peer]).collect();
            agent.diffuse(published[agent.id], &inbox)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_iter_mut().zip(self.agents.par_iter()).for_each(|(slot, agent)| *slot = step(agent));
        }
        #[cfg(not(feature = "parallel"))]
        for (slot, agent) in out.iter_mut().zip(&self.agents) {
            *slot = step(agent);
        }
        self.rounds.fetch_add(1, Ordering::Relaxed);
        let sent: usize = self.agents.iter().map(|a| a.links.len()).sum();
        self.messages.fetch_add(sent as u64, Ordering::Relaxed);
    }

    /// Same as [`SyncNetwork::round`] but always on the calling thread.
    pub fn round_sequential(&self, published: &[f64], out: &mut [f64]) {
        for (slot, agent) in out.iter_mut().zip(&self.agents) {
            let inbox: Vec<f64> = agent.links.iter().map(|l| published[l.peer]).collect();
            *slot = agent.diffuse(published[agent.id], &inbox);
        }
        self.rounds.fetch_add(1, Ordering::Relaxed);
    }
}

impl Diffusion for SyncNetwork {
    fn dim(&self) -> usize {
        self.agents.len()
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.round(x.as_slice(), out.as_mut_slice());
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{run_diffusion, ConsensusOptions, DenseDiffusion};
    use crate::graph::{inf_norm, laplacian_from_aligned};

    fn sec4() -> Graph {
        Graph::from_one_based(6, &[(1, 2), (2, 3), (3, 4), (1, 5), (3, 5), (4, 5), (4, 6)]).unwrap()
    }

    #[test]
    fn round_matches_dense_product() {
        let g = sec4();
        let w = [0.05, 0.0625, 0.0357, 0.0833, 0.0417, 0.03125, 0.0357];
        let net = SyncNetwork::new(&g, &w);
        let dense = DenseDiffusion::new(laplacian_from_aligned(&g, &w));
        assert!((net.norm_bound() - inf_norm(dense.laplacian())).abs() < 1e-15);
        let x = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.25, 7.0, -1.0]);
        let mut a = DVector::zeros(6);
        let mut b = DVector::zeros(6);
        net.apply(&x, &mut a);
        dense.apply(&x, &mut b);
        assert!((a - b).amax() < 1e-15);
        assert_eq!(net.rounds(), 1);
        assert_eq!(net.messages(), 14);
    }

    #[test]
    fn parallel_and_sequential_rounds_agree_bitwise() {
        let g = sec4();
        let net = SyncNetwork::unweighted(&g);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut a = [0.0; 6];
        let mut b = [0.0; 6];
        net.round(&x, &mut a);
        net.round_sequential(&x, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn message_consensus_matches_matrix_consensus() {
        let g = sec4();
        let x0 = DVector::from_vec(vec![5.0, 15.0, 20.0, 30.0, 2.0, 20.0]);
        let opts = ConsensusOptions::default();
        let msg = run_diffusion(&SyncNetwork::unweighted(&g), None, x0.clone(), &opts).unwrap();
        let mat = run_diffusion(&DenseDiffusion::new(crate::graph::unweighted_laplacian(&g)), None, x0, &opts).unwrap();
        assert_eq!(msg.steps, mat.steps);
        assert!((msg.state - mat.state).amax() < 1e-12);
    }
}
