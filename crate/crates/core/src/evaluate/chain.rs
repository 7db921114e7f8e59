use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::Result;
use crate::linalg;
use crate::model::PomdpModel;
use crate::strategy::FiniteStateController;

/// Finite Markov reward chain restricted to the states reachable from its
/// initial distribution.
#[derive(Debug, Clone)]
pub(crate) struct MarkovChain {
    pub trans: Vec<Vec<(usize, f64)>>,
    pub reward: Vec<f64>,
    pub init: Vec<f64>,
}

const SOLVE_TOL: f64 = 1e-10;

impl MarkovChain {
    /// Breadth-first construction from initial keys and a step function
    /// returning the reward and the successor distribution of a key.
    pub fn explore<K, F>(starts: Vec<(K, f64)>, mut step: F) -> Self
    where
        K: Hash + Eq + Clone,
        F: FnMut(&K) -> (f64, Vec<(K, f64)>),
    {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut keys: Vec<K> = Vec::new();
        let mut init = Vec::new();
        let intern = |k: K, index: &mut HashMap<K, usize>, keys: &mut Vec<K>| -> usize {
            *index.entry(k.clone()).or_insert_with(|| {
                keys.push(k);
                keys.len() - 1
            })
        };
        for (k, p) in starts {
            if p > 0.0 {
                let i = intern(k, &mut index, &mut keys);
                if init.len() <= i {
                    init.resize(i + 1, 0.0);
                }
                init[i] += p;
            }
        }
        let mut trans = Vec::new();
        let mut reward = Vec::new();
        let mut next = 0;
        while next < keys.len() {
            let (r, succ) = step(&keys[next]);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(succ.len());
            for (k, p) in succ {
                if p > 0.0 {
                    let j = intern(k, &mut index, &mut keys);
                    match row.iter_mut().find(|(c, _)| *c == j) {
                        Some(e) => e.1 += p,
                        None => row.push((j, p)),
                    }
                }
            }
            trans.push(row);
            reward.push(r);
            next += 1;
        }
        init.resize(keys.len(), 0.0);
        MarkovChain {
            trans,
            reward,
            init,
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn expect(&self, v: &[f64]) -> f64 {
        self.init.iter().zip(v).map(|(p, x)| p * x).sum()
    }

    /// Solves `v = β·r + γ·P·v`.
    pub fn discounted(&self, beta: f64, gamma: f64) -> Result<Vec<f64>> {
        let n = self.len();
        if self.reward.iter().all(|r| *r == 0.0) {
            return Ok(vec![0.0; n]);
        }
        let mut a = DMatrix::identity(n, n);
        for (i, row) in self.trans.iter().enumerate() {
            for &(j, p) in row {
                a[(i, j)] -= gamma * p;
            }
        }
        let b = DMatrix::from_iterator(n, 1, self.reward.iter().map(|r| beta * r));
        let x = linalg::solve(&a, &b, SOLVE_TOL)?;
        Ok(x.iter().copied().collect())
    }

    /// Expected Cesàro-limit payoff from every state: class gains on closed
    /// communicating classes, absorption-weighted on transient states.
    pub fn average(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut graph = DiGraph::<(), ()>::with_capacity(n, 0);
        let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
        for (i, row) in self.trans.iter().enumerate() {
            for &(j, _) in row {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
        let mut class = vec![usize::MAX; n];
        let sccs = tarjan_scc(&graph);
        for (c, comp) in sccs.iter().enumerate() {
            for v in comp {
                class[v.index()] = c;
            }
        }
        let mut gain = vec![f64::NAN; n];
        let mut recurrent = vec![false; n];
        for (c, comp) in sccs.iter().enumerate() {
            let members: Vec<usize> = comp.iter().map(|v| v.index()).collect();
            let closed = members
                .iter()
                .all(|&i| self.trans[i].iter().all(|&(j, _)| class[j] == c));
            if !closed {
                continue;
            }
            let local: HashMap<usize, usize> =
                members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let m = members.len();
            let mut p = DMatrix::zeros(m, m);
            for (k, &i) in members.iter().enumerate() {
                for &(j, q) in &self.trans[i] {
                    p[(k, local[&j])] += q;
                }
            }
            let pi = linalg::stationary(&p)?;
            let g: f64 = pi.iter().zip(&members).map(|(w, &i)| w * self.reward[i]).sum();
            for &i in &members {
                gain[i] = g;
                recurrent[i] = true;
            }
        }
        let transient: Vec<usize> = (0..n).filter(|&i| !recurrent[i]).collect();
        if !transient.is_empty() {
            let local: HashMap<usize, usize> =
                transient.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let t = transient.len();
            let mut a = DMatrix::identity(t, t);
            let mut b = DMatrix::zeros(t, 1);
            for (k, &i) in transient.iter().enumerate() {
                for &(j, q) in &self.trans[i] {
                    match local.get(&j) {
                        Some(&l) => a[(k, l)] -= q,
                        None => b[(k, 0)] += q * gain[j],
                    }
                }
            }
            let x = linalg::solve(&a, &b, SOLVE_TOL)?;
            for (k, &i) in transient.iter().enumerate() {
                gain[i] = x[(k, 0)];
            }
        }
        Ok(gain)
    }
}

/// Chain on `Ω × Q` induced by a controller on model `m` (already at the
/// desired stage duration), with rewards `Σ_a π(a|q)·(g(ω,a) − shift)`.
pub(crate) fn controller_chain(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    shift: f64,
) -> MarkovChain {
    let nq = fsc.n_memory();
    let mut starts = Vec::new();
    for (w, &p) in m.init().iter().enumerate() {
        if p > 0.0 {
            for (q, &pq) in fsc.init_row(m.signal_of(w)).iter().enumerate() {
                starts.push(((w, q), p * pq));
            }
        }
    }
    let ns = m.n_states();
    MarkovChain::explore(starts, |&(w, q)| {
        let mut r = 0.0;
        let mut dense = vec![0.0; ns * nq];
        for (a, &pa) in fsc.action_row(q).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            r += pa * (m.payoff(w, a) - shift);
            for (w2, &p) in m.transition_row(w, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let upd = fsc.update_row(q, a, m.signal_of(w2));
                for (q2, &u) in upd.iter().enumerate() {
                    dense[w2 * nq + q2] += pa * p * u;
                }
            }
        }
        let succ = dense
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, &p)| ((i / nq, i % nq), p))
            .collect();
        (r, succ)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(trans: Vec<Vec<(usize, f64)>>, reward: Vec<f64>, init: Vec<f64>) -> MarkovChain {
        MarkovChain {
            trans,
            reward,
            init,
        }
    }

    #[test]
    fn cycle_has_half_gain() {
        let c = chain(vec![vec![(1, 1.0)], vec![(0, 1.0)]], vec![1.0, 0.0], vec![1.0, 0.0]);
        let g = c.average().unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absorption_weights_class_gains() {
        // 0 -> 1 (gain 1) or 2 (gain 0) with equal probability
        let c = chain(
            vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]],
            vec![7.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
        );
        let g = c.average().unwrap();
        assert!((g[0] - 0.5).abs() < 1e-14);
        assert_eq!(c.expect(&g), g[0]);
    }

    #[test]
    fn discounted_geometric_sum() {
        // reward 1 once, then 0 forever: value = β
        let c = chain(vec![vec![(1, 1.0)], vec![(1, 1.0)]], vec![1.0, 0.0], vec![1.0, 0.0]);
        let v = c.discounted(0.5, 0.5).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn explore_keeps_only_reachable() {
        let c = MarkovChain::explore(vec![(0u32, 1.0)], |&k| (k as f64, vec![((k + 1) % 3, 1.0)]));
        assert_eq!(c.len(), 3);
        let c = MarkovChain::explore(vec![(5u32, 1.0)], |&k| (k as f64, vec![(k, 1.0)]));
        assert_eq!(c.len(), 1);
    }
}
