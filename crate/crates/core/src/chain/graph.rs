use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Directed graph as out-neighbor lists. Targets are sorted and distinct, and
/// every node has at least one out-edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    out: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(mut out: Vec<Vec<usize>>) -> Result<Self> {
        let n = out.len();
        if n == 0 {
            return Err(Error::Construction("graph has no nodes".into()));
        }
        for (r, targets) in out.iter_mut().enumerate() {
            targets.sort_unstable();
            targets.dedup();
            if targets.is_empty() {
                return Err(Error::Construction(format!("node {r} has out-degree 0")));
            }
            if let Some(&t) = targets.iter().find(|&&t| t >= n) {
                return Err(Error::Construction(format!("node {r} links to missing node {t}")));
            }
        }
        Ok(Adjacency { out })
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn targets(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out[node].len()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for t in self.out.iter().flatten() {
            deg[*t] += 1;
        }
        deg
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }
}

/// Directed configuration model with power-law degrees `P(d) ∝ d^-exponent`
/// on `[min_degree, n-1]`.
///
/// In- and out-degree sequences are drawn independently. The smaller stub
/// total is topped up by duplicating randomly chosen stubs, stubs are matched
/// uniformly, self-loops are rewired by swapping partners and parallel edges
/// are collapsed.
pub fn gen_config_model(n: usize, exponent: f64, min_degree: usize, seed: u64) -> Result<Adjacency> {
    if n < 10 {
        return Err(invalid(format!("config model needs n >= 10, got {n}")));
    }
    if !(exponent > 1.0) {
        return Err(invalid(format!("exponent {exponent} must exceed 1")));
    }
    if min_degree < 1 || min_degree > n - 1 {
        return Err(invalid(format!("min_degree {min_degree} outside [1, {}]", n - 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degrees: Vec<usize> = (min_degree..n).collect();
    let law = WeightedIndex::new(degrees.iter().map(|&d| (d as f64).powf(-exponent)))
        .map_err(|e| Error::Construction(e.to_string()))?;

    let mut out_deg: Vec<usize> = (0..n).map(|_| degrees[law.sample(&mut rng)]).collect();
    let mut in_deg: Vec<usize> = (0..n).map(|_| degrees[law.sample(&mut rng)]).collect();
    let (sum_out, sum_in) = (out_deg.iter().sum::<usize>(), in_deg.iter().sum::<usize>());
    let (short, gap) = if sum_out < sum_in {
        (&mut out_deg, sum_in - sum_out)
    } else {
        (&mut in_deg, sum_out - sum_in)
    };
    // Duplicating random existing stubs scales degrees multiplicatively,
    // which keeps the power-law shape; spreading the gap uniformly would not.
    let base = stubs(short);
    for _ in 0..gap {
        short[base[rng.random_range(0..base.len())]] += 1;
    }

    let sources: Vec<usize> = stubs(&out_deg);
    let mut sinks: Vec<usize> = stubs(&in_deg);
    sinks.shuffle(&mut rng);

    let m = sources.len();
    for p in 0..m {
        if sources[p] != sinks[p] {
            continue;
        }
        // swap with a partner so that neither pair becomes a self-loop
        for _ in 0..64 {
            let q = rng.random_range(0..m);
            if sources[p] != sinks[q] && sources[q] != sinks[p] {
                sinks.swap(p, q);
                break;
            }
        }
    }

    let mut out = vec![Vec::new(); n];
    for (&s, &t) in sources.iter().zip(&sinks) {
        if s != t {
            out[s].push(t);
        }
    }
    for (s, targets) in out.iter_mut().enumerate() {
        if targets.is_empty() {
            let mut t = rng.random_range(0..n - 1);
            if t >= s {
                t += 1;
            }
            targets.push(t);
        }
    }
    Adjacency::new(out)
}

fn stubs(deg: &[usize]) -> Vec<usize> {
    deg.iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
        .collect()
}
