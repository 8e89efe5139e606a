//! Corpus statistics, thresholded retrieval and style retrieval by rank.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::segmenter::InstrumentationProfile;

/// Decision-weighted mean of per-recording profiles. Zero total weight gives a zero profile.
pub fn global_stats(items: &[(InstrumentationProfile, usize)]) -> InstrumentationProfile {
    let total: usize = items.iter().map(|(_, w)| w).sum();
    if total == 0 {
        return InstrumentationProfile::default();
    }
    let mut acc = [0.0; 4];
    for (p, w) in items {
        for (a, v) in acc.iter_mut().zip(p.as_array()) {
            *a += v * *w as f64;
        }
    }
    let f = |v: f64| v / total as f64;
    InstrumentationProfile { pct_vocal: f(acc[0]), pct_picked: f(acc[1]), pct_strummed: f(acc[2]), pct_palmas: f(acc[3]) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    /// Keep recordings with at least `threshold` vocal fraction.
    Acappella,
    /// Keep recordings with at most `threshold` vocal fraction.
    Instrumental,
}

impl RetrievalMode {
    fn accepts(self, pct_vocal: f64, threshold: f64) -> bool {
        match self {
            RetrievalMode::Acappella => pct_vocal >= threshold,
            RetrievalMode::Instrumental => pct_vocal <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSet {
    /// Indices into the input, ascending.
    pub indices: Vec<usize>,
    pub true_hits: Option<usize>,
    /// None without labels or when nothing is retrieved.
    pub precision: Option<f64>,
}

pub fn threshold_retrieval(
    profiles: &[InstrumentationProfile],
    labels: Option<&[bool]>,
    mode: RetrievalMode,
    threshold: f64,
) -> Result<RetrievedSet> {
    if let Some(l) = labels {
        if l.len() != profiles.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", profiles.len()),
                actual: format!("{}", l.len()),
            });
        }
    }
    let indices: Vec<usize> =
        (0..profiles.len()).filter(|&i| mode.accepts(profiles[i].pct_vocal, threshold)).collect();
    let true_hits = labels.map(|l| indices.iter().filter(|&&i| l[i]).count());
    let precision = match true_hits {
        Some(h) if !indices.is_empty() => Some(h as f64 / indices.len() as f64),
        _ => None,
    };
    Ok(RetrievedSet { indices, true_hits, precision })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: Option<f64>,
    pub count: usize,
}

/// Precision and retrieval count at each threshold.
pub fn precision_curve(
    profiles: &[InstrumentationProfile],
    labels: &[bool],
    mode: RetrievalMode,
    thresholds: &[f64],
) -> Result<Vec<CurvePoint>> {
    thresholds
        .iter()
        .map(|&t| {
            let set = threshold_retrieval(profiles, Some(labels), mode, t)?;
            Ok(CurvePoint { threshold: t, precision: set.precision, count: set.indices.len() })
        })
        .collect()
}

/// Mean of `1 / rank`, with `None` (no match) contributing 0.
pub fn mean_reciprocal_rank(ranks: &[Option<usize>]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / ranks.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrrOptions {
    /// Only the `k` nearest neighbours are inspected; `None` ranks the whole corpus.
    pub top_k: Option<usize>,
}

impl Default for MrrOptions {
    fn default() -> Self {
        Self { top_k: Some(10) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleMrr {
    /// Query indices of this style, ascending.
    pub queries: Vec<usize>,
    /// First-match rank per query (1-based), `None` when no match was found.
    pub ranks: Vec<Option<usize>>,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub per_style: BTreeMap<String, StyleMrr>,
}

impl RetrievalResult {
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["style", "queries", "mrr"])?;
        for (style, s) in &self.per_style {
            w.write_record([style.as_str(), &s.queries.len().to_string(), &s.mrr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rank-based style retrieval. Neighbours are ordered by distance, then by
/// index; the query itself is excluded.
pub fn mrr_retrieval(m: &DistanceMatrix, styles: &[&str], options: MrrOptions) -> Result<RetrievalResult> {
    if styles.len() != m.n {
        return Err(Error::ShapeMismatch { expected: format!("{} labels", m.n), actual: format!("{}", styles.len()) });
    }
    if let Some(i) = styles.iter().position(|s| s.trim().is_empty()) {
        return Err(Error::Metadata(format!("item {i} has no style label")));
    }
    let k = options.top_k.unwrap_or(m.n - 1);
    if k == 0 || m.n <= k {
        return Err(Error::InvalidArgument(format!("need more than {k} items, got {}", m.n)));
    }
    let mut per_style: BTreeMap<String, StyleMrr> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::with_capacity(m.n);
    for q in 0..m.n {
        order.clear();
        order.extend((0..m.n).filter(|&j| j != q));
        order.sort_by(|&a, &b| m.get(q, a).total_cmp(&m.get(q, b)).then(a.cmp(&b)));
        let style = styles[q].trim();
        let rank = order[..k].iter().position(|&j| styles[j].trim() == style).map(|p| p + 1);
        let entry = per_style
            .entry(style.to_string())
            .or_insert_with(|| StyleMrr { queries: vec![], ranks: vec![], mrr: 0.0 });
        entry.queries.push(q);
        entry.ranks.push(rank);
    }
    for s in per_style.values_mut() {
        s.mrr = mean_reciprocal_rank(&s.ranks);
    }
    Ok(RetrievalResult { per_style })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Metric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vocal(p: f64) -> InstrumentationProfile {
        InstrumentationProfile { pct_vocal: p, pct_picked: 1.0 - p, ..Default::default() }
    }

    #[test]
    fn global_stats_examples() {
        let a = vocal(0.4);
        assert_eq!(global_stats(&[(a, 10)]), a);
        let g = global_stats(&[(vocal(0.4), 100), (vocal(0.6), 100)]);
        assert!((g.pct_vocal - 0.5).abs() < 1e-15);
    }

    #[test]
    fn thresholds() {
        let ps = vec![vocal(0.95); 3];
        let set = threshold_retrieval(&ps, Some(&[true; 3]), RetrievalMode::Acappella, 0.91).unwrap();
        assert_eq!(set.indices, [0, 1, 2]);
        assert_eq!(set.precision, Some(1.0));
        let none = threshold_retrieval(&ps, Some(&[true; 3]), RetrievalMode::Acappella, 1.01).unwrap();
        assert!(none.indices.is_empty() && none.precision.is_none());
        let inst = threshold_retrieval(&[vocal(0.1), vocal(0.2)], None, RetrievalMode::Instrumental, 0.14).unwrap();
        assert_eq!(inst.indices, [0]);
        assert!(inst.precision.is_none());
    }

    #[test]
    fn hand_computed_precision() {
        // Two true a cappella takes, one borderline fake at 0.85, one accompanied take.
        let ps = [vocal(0.97), vocal(0.92), vocal(0.85), vocal(0.3)];
        let labels = [true, true, false, false];
        let curve = precision_curve(&ps, &labels, RetrievalMode::Acappella, &[0.95, 0.9, 0.8, 0.2]).unwrap();
        let got: Vec<(Option<f64>, usize)> = curve.iter().map(|c| (c.precision, c.count)).collect();
        assert_eq!(got, vec![(Some(1.0), 1), (Some(1.0), 2), (Some(2.0 / 3.0), 3), (Some(0.5), 4)]);
    }

    #[test]
    fn mrr_hand_case() {
        let mrr = mean_reciprocal_rank(&[Some(1), Some(2), Some(4)]);
        assert!((mrr - 0.5833333333).abs() < 1e-9);
        assert_eq!(mean_reciprocal_rank(&[Some(1), Some(1)]), 1.0);
        assert_eq!(mean_reciprocal_rank(&[None, Some(1)]), 0.5);
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DistanceMatrix {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = rng.gen_range(0..50) as f64;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix { n, metric: Metric::ProfileEuclidean, values }
    }

    #[test]
    fn planted_ranks() {
        // Items 0 and 1 ("a") are mutual nearest neighbours. Query 2 ("b") sees
        // both "a" items first (tied, index order) and its partner at rank 3.
        let d = |i: usize, j: usize| -> f64 {
            match (i.min(j), i.max(j)) {
                (0, 1) => 1.0,
                (2, 3) => 3.0,
                (0, 2) | (1, 2) => 2.0,
                _ => 5.0,
            }
        };
        let n = 4;
        let values = (0..n * n).map(|x| if x / n == x % n { 0.0 } else { d(x / n, x % n) }).collect();
        let m = DistanceMatrix { n, metric: Metric::ProfileEuclidean, values };
        let r = mrr_retrieval(&m, &["a", "a", "b", "b"], MrrOptions { top_k: None }).unwrap();
        assert_eq!(r.per_style["a"].ranks, vec![Some(1), Some(1)]);
        assert_eq!(r.per_style["b"].ranks, vec![Some(3), Some(1)]);
        let top1 = mrr_retrieval(&m, &["a", "a", "b", "b"], MrrOptions { top_k: Some(1) }).unwrap();
        assert_eq!(top1.per_style["b"].ranks, vec![None, Some(1)]);
        assert_eq!(top1.per_style["b"].mrr, 0.5);
    }

    /// Rank of the first same-style item, counted as one plus the number of
    /// items that beat it (strictly closer, or equally close with a lower index).
    fn naive_rank(m: &DistanceMatrix, styles: &[&str], q: usize, k: usize) -> Option<usize> {
        let beats = |a: usize, b: usize| {
            let (da, db) = (m.get(q, a), m.get(q, b));
            da < db || (da == db && a < b)
        };
        (0..m.n)
            .filter(|&j| j != q && styles[j] == styles[q])
            .map(|j| 1 + (0..m.n).filter(|&o| o != q && o != j && beats(o, j)).count())
            .min()
            .filter(|&r| r <= k)
    }

    #[test]
    fn matches_naive_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_matrix(20, &mut rng);
            let owned: Vec<String> = (0..20).map(|_| format!("s{}", rng.gen_range(0..5))).collect();
            let styles: Vec<&str> = owned.iter().map(String::as_str).collect();
            for k in [3, 10, 19] {
                let r = mrr_retrieval(&m, &styles, MrrOptions { top_k: Some(k) }).unwrap();
                for s in r.per_style.values() {
                    for (&q, &rank) in s.queries.iter().zip(&s.ranks) {
                        assert_eq!(rank, naive_rank(&m, &styles, q, k));
                    }
                    let want = s.ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>()
                        / s.ranks.len() as f64;
                    assert!((s.mrr - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn acappella_sets_nest_as_threshold_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps: Vec<_> = (0..50).map(|_| vocal(rng.gen())).collect();
        let mut prev: Vec<usize> = vec![];
        for t in [0.99, 0.95, 0.9, 0.8, 0.5, 0.0] {
            let set = threshold_retrieval(&ps, None, RetrievalMode::Acappella, t).unwrap();
            assert!(prev.iter().all(|i| set.indices.contains(i)));
            prev = set.indices;
        }
        assert_eq!(prev.len(), 50);
    }

    #[test]
    fn rejects_unlabeled_and_small_inputs() {
        let m = random_matrix(5, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(mrr_retrieval(&m, &["a", "", "a", "b", "b"], MrrOptions { top_k: Some(2) }).is_err());
        assert!(mrr_retrieval(&m, &["a"; 5], MrrOptions::default()).is_err());
    }

    #[test]
    fn monotone_transform_keeps_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(20, &mut rng);
        let styles: Vec<String> = (0..20).map(|_| format!("s{}", rng.gen_range(0..4))).collect();
        let styles: Vec<&str> = styles.iter().map(String::as_str).collect();
        let mut t = m.clone();
        t.values.iter_mut().for_each(|v| *v = (*v + 1.0).ln() * 3.0);
        assert_eq!(
            mrr_retrieval(&m, &styles, MrrOptions::default()).unwrap(),
            mrr_retrieval(&t, &styles, MrrOptions::default()).unwrap()
        );
    }
}
