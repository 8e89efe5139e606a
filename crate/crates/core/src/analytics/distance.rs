//! Pairwise distances between recordings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::InstrumentationProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ProfileEuclidean,
    DtwItakura,
}

/// Euclidean distance between the 4-d profile vectors.
pub fn profile_distance(a: &InstrumentationProfile, b: &InstrumentationProfile) -> f64 {
    a.as_array().iter().zip(b.as_array()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn manhattan(a: &[u8; 3], b: &[u8; 3]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u32).sum()
}

/// Whether 0-based cell `(i, j)` of an `n x m` grid lies inside the Itakura
/// parallelogram (local slopes between 1/2 and 2 from both corners).
pub(crate) fn itakura_allows(i: usize, j: usize, n: usize, m: usize) -> bool {
    let (i1, j1) = (i + 1, j + 1);
    let (ri, rj) = (n - i, m - j);
    j1 <= 2 * i1 && i1 <= 2 * j1 && rj <= 2 * ri && ri <= 2 * rj
}

/// DTW cost between two 1 Hz instrumentation sequences.
///
/// Steps (1,0), (0,1), (1,1) under the Itakura mask, Manhattan local cost.
/// Among paths with minimal summed cost the shortest is taken, and the sum is
/// divided by its length (number of cells). Infeasible pairs give +infinity.
pub fn dtw_distance(a: &[[u8; 3]], b: &[[u8; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("DTW needs non-empty sequences".into()));
    }
    let (n, m) = (a.len(), b.len());
    // (summed cost, path length); u32::MAX marks unreachable cells.
    const UNREACHABLE: (u32, u32) = (u32::MAX, u32::MAX);
    let mut prev = vec![UNREACHABLE; m];
    let mut cur = vec![UNREACHABLE; m];
    for i in 0..n {
        for j in 0..m {
            cur[j] = UNREACHABLE;
            if !itakura_allows(i, j, n, m) {
                continue;
            }
            let best = if i == 0 && j == 0 {
                (0, 0)
            } else {
                let mut best = UNREACHABLE;
                if i > 0 {
                    best = best.min(prev[j]);
                    if j > 0 {
                        best = best.min(prev[j - 1]);
                    }
                }
                if j > 0 {
                    best = best.min(cur[j - 1]);
                }
                best
            };
            if best != UNREACHABLE {
                cur[j] = (best.0 + manhattan(&a[i], &b[j]), best.1 + 1);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let end = prev[m - 1];
    Ok(if end == UNREACHABLE { f64::INFINITY } else { end.0 as f64 / end.1 as f64 })
}

/// Symmetric distance matrix with a zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    pub metric: Metric,
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Number of unordered pairs with infinite distance.
    pub fn infeasible_pairs(&self) -> usize {
        (0..self.n).flat_map(|i| (i + 1..self.n).map(move |j| (i, j))).filter(|&(i, j)| self.get(i, j).is_infinite()).count()
    }

    /// Largest finite off-diagonal entry, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    /// CSV with an `id` column followed by one column per item; infinity is written as `inf`.
    pub fn write_csv(&self, writer: impl std::io::Write, ids: &[&str]) -> Result<()> {
        if ids.len() != self.n {
            return Err(Error::ShapeMismatch { expected: format!("{} ids", self.n), actual: format!("{}", ids.len()) });
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id"];
        header.extend_from_slice(ids);
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut row = vec![ids[i].to_string()];
            row.extend((0..self.n).map(|j| {
                let v = self.get(i, j);
                if v.is_infinite() { "inf".to_string() } else { v.to_string() }
            }));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fill the upper triangle with `f` in parallel and mirror it.
pub fn distance_matrix<T: Sync>(
    items: &[T],
    metric: Metric,
    f: impl Fn(&T, &T) -> f64 + Sync,
) -> DistanceMatrix {
    let n = items.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let upper: Vec<f64> = pairs.par_iter().map(|&(i, j)| f(&items[i], &items[j])).collect();
    let mut values = vec![0.0; n * n];
    for (&(i, j), &d) in pairs.iter().zip(&upper) {
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    DistanceMatrix { n, metric, values }
}

pub fn profile_matrix(profiles: &[InstrumentationProfile]) -> DistanceMatrix {
    distance_matrix(profiles, Metric::ProfileEuclidean, profile_distance)
}

pub fn dtw_matrix(sequences: &[Vec<[u8; 3]>]) -> Result<DistanceMatrix> {
    if sequences.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("DTW needs non-empty sequences".into()));
    }
    Ok(distance_matrix(sequences, Metric::DtwItakura, |a, b| {
        dtw_distance(a, b).expect("non-empty inputs checked")
    }))
}
