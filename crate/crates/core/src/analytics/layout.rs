//! Simplified force-directed embedding of a distance matrix.
//!
//! Every pair is an edge with weight `1 / (eps + d)` where `d` is the distance
//! scaled by the largest finite entry. Attraction is linear in the layout
//! distance and the weight; repulsion is `kr * (deg_i + 1) * (deg_j + 1) / (n * dist)`.
//! Updates are synchronous with a
//! linearly decaying step, so the result depends only on the matrix, the
//! initial positions and the iteration count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub iterations: usize,
    pub epsilon: f64,
    pub repulsion: f64,
    /// Initial step size; decays linearly to zero.
    pub step: f64,
    /// Upper bound on a node's displacement per iteration.
    pub max_move: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { iterations: 500, epsilon: 0.05, repulsion: 0.05, step: 0.05, max_move: 0.5 }
    }
}

/// Finite weights from a matrix; infinite entries are clamped to the largest
/// finite distance before scaling.
fn weights(m: &DistanceMatrix, eps: f64) -> Vec<f64> {
    let max = m.max_finite().filter(|&v| v > 0.0).unwrap_or(1.0);
    m.values.iter().map(|&d| 1.0 / (eps + d.min(max) / max)).collect()
}

/// Layout with positions seeded uniformly in the unit square.
pub fn force_layout(m: &DistanceMatrix, seed: u64, config: &LayoutConfig) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<[f64; 2]> = (0..m.n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    force_layout_from(m, init, config)
}

/// Layout starting from explicit positions.
pub fn force_layout_from(m: &DistanceMatrix, mut pos: Vec<[f64; 2]>, config: &LayoutConfig) -> Vec<[f64; 2]> {
    let n = m.n;
    assert_eq!(pos.len(), n, "one initial position per item");
    if n < 2 {
        return pos;
    }
    let w = weights(m, config.epsilon);
    // Complete graph: deg + 1 = n for every node.
    let deg1 = n as f64;
    let kr = config.repulsion * deg1 * deg1 / n as f64;
    let mut force = vec![[0.0f64; 2]; n];
    for it in 0..config.iterations {
        let step = config.step * (1.0 - it as f64 / config.iterations as f64);
        for f in force.iter_mut() {
            *f = [0.0, 0.0];
        }
        for i in 0..n {
            for j in i + 1..n {
                let dx = pos[i][0] - pos[j][0];
                let dy = pos[i][1] - pos[j][1];
                let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                // Positive pushes i away from j.
                let mag = kr / dist - w[i * n + j] * dist;
                let (fx, fy) = (mag * dx / dist, mag * dy / dist);
                force[i][0] += fx;
                force[i][1] += fy;
                force[j][0] -= fx;
                force[j][1] -= fy;
            }
        }
        for (p, f) in pos.iter_mut().zip(&force) {
            let (mut mx, mut my) = (step * f[0], step * f[1]);
            let len = (mx * mx + my * my).sqrt();
            if len > config.max_move {
                mx *= config.max_move / len;
                my *= config.max_move / len;
            }
            p[0] += mx;
            p[1] += my;
        }
    }
    pos
}
