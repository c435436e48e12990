//! Bidirectional nearest-neighbor matching in feature space with ratio-test
//! weighting and per-direction top-k selection.
//!
//! Distances are cosine distances on unit vectors, `D(a, b) = 1 - <a, b>`,
//! clamped at 0. Search is exhaustive. Ties are resolved by lowest index,
//! both for the nearest neighbor and at the top-k cutoff.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::descriptor::FeaturePointCloud;
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_TOP_K: usize = 400;
const RATIO_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Query in P, match in Q.
    PToQ,
    /// Query in Q, match in P.
    QToP,
}

impl Direction {
    pub fn tag(&self) -> &'static str {
        match self {
            Direction::PToQ => "pq",
            Direction::QToP => "qp",
        }
    }
}

/// How a match is scored before top-k selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WeightMode {
    /// `1 - D1 / D2`.
    #[default]
    RatioTest,
    /// `1 - D1`, clamped to `[0, 1]`; ablates the ratio test.
    FeatureDistance,
}

/// One weighted match. `source` is always the P-side position and `target`
/// the Q-side position, whichever cloud issued the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: Vector3<f64>,
    pub target: Vector3<f64>,
    pub weight: f64,
    pub direction: Direction,
    pub p_index: usize,
    pub q_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub entries: Vec<Correspondence>,
    /// Entries missing from the requested `k / 2` per direction, `[P→Q, Q→P]`.
    pub shortfall: [usize; 2],
}

impl CorrespondenceSet {
    pub fn from_entries(entries: Vec<Correspondence>) -> Self {
        Self {
            entries,
            shortfall: [0, 0],
        }
    }

    /// Uniform-direction set built from `(source, target, weight)` triples.
    pub fn from_triples(triples: &[(Vector3<f64>, Vector3<f64>, f64)]) -> Self {
        Self::from_entries(
            triples
                .iter()
                .enumerate()
                .map(|(i, (p, q, w))| Correspondence {
                    source: *p,
                    target: *q,
                    weight: *w,
                    direction: Direction::PToQ,
                    p_index: i,
                    q_index: i,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.weight).collect()
    }
    pub fn with_weights(&self, weights: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, w) in out.entries.iter_mut().zip(weights) {
            c.weight = *w;
        }
        out
    }
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self::from_entries(indices.iter().map(|i| self.entries[*i]).collect())
    }

    /// Debug dump, one line per entry: `px py pz qx qy qz w dir`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.entries {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {}",
                c.source.x,
                c.source.y,
                c.source.z,
                c.target.x,
                c.target.y,
                c.target.z,
                c.weight,
                c.direction.tag()
            );
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::save(path, e))
    }
}

/// Nearest and second-nearest targets for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestPair {
    pub nearest: usize,
    pub d1: f64,
    pub second: usize,
    pub d2: f64,
}

pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        dot += f64::from(*x) * f64::from(*y);
    }
    (1.0 - dot).max(0.0)
}

pub fn ratio_weight(d1: f64, d2: f64) -> f64 {
    if d2 < RATIO_EPS {
        return 0.0;
    }
    (1.0 - d1 / d2).clamp(0.0, 1.0)
}

fn score(pair: &NearestPair, mode: WeightMode) -> f64 {
    match mode {
        WeightMode::RatioTest => ratio_weight(pair.d1, pair.d2),
        WeightMode::FeatureDistance => (1.0 - pair.d1).clamp(0.0, 1.0),
    }
}

const QUERY_BLOCK: usize = 4;
const TARGET_GROUP: usize = 4;

/// Valid targets with features packed in groups of four, `[group][dim][4]`,
/// as f64. A 4x4 tile of queries and targets accumulates in registers. Each
/// dot product still sums over dimensions in order, exactly as
/// [`cosine_distance`] does.
struct TargetIndex {
    indices: Vec<usize>,
    packed: Vec<f64>,
    dim: usize,
}

impl TargetIndex {
    fn new(cloud: &FeaturePointCloud) -> Result<Self> {
        let indices = cloud.valid_indices();
        if indices.len() < 2 {
            return Err(Error::InsufficientPoints {
                needed: 2,
                found: indices.len(),
            });
        }
        let dim = cloud.dim();
        let groups = indices.len().div_ceil(TARGET_GROUP);
        let mut packed = vec![0.0; groups * dim * TARGET_GROUP];
        for (slot, i) in indices.iter().enumerate() {
            let (g, lane) = (slot / TARGET_GROUP, slot % TARGET_GROUP);
            for (k, x) in cloud.feature(*i).iter().enumerate() {
                packed[(g * dim + k) * TARGET_GROUP + lane] = f64::from(*x);
            }
        }
        Ok(Self {
            indices,
            packed,
            dim,
        })
    }

    fn search(&self, query: &[f32]) -> NearestPair {
        let dots = self.accumulate(&[query]);
        self.nearest_two(&dots[0])
    }

    /// Dot products of up to `QUERY_BLOCK` queries with every target.
    fn accumulate(&self, queries: &[&[f32]]) -> Vec<Vec<f64>> {
        let n = self.indices.len();
        let dim = self.dim;
        let mut q = vec![[0.0f64; QUERY_BLOCK]; dim];
        for (b, query) in queries.iter().enumerate() {
            for k in 0..dim {
                q[k][b] = f64::from(query[k]);
            }
        }
        let mut dots = vec![vec![0.0; n]; queries.len()];
        for (g, group) in self.packed.chunks_exact(dim * TARGET_GROUP).enumerate() {
            let mut acc = [[0.0f64; TARGET_GROUP]; QUERY_BLOCK];
            for (qk, t) in q.iter().zip(group.chunks_exact(TARGET_GROUP)) {
                for b in 0..QUERY_BLOCK {
                    for lane in 0..TARGET_GROUP {
                        acc[b][lane] += qk[b] * t[lane];
                    }
                }
            }
            let start = g * TARGET_GROUP;
            let end = (start + TARGET_GROUP).min(n);
            for (b, d) in dots.iter_mut().enumerate() {
                d[start..end].copy_from_slice(&acc[b][..end - start]);
            }
        }
        dots
    }

    fn nearest_two(&self, dots: &[f64]) -> NearestPair {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second = (usize::MAX, f64::INFINITY);
        for (slot, dot) in dots.iter().enumerate() {
            let d = (1.0 - dot).max(0.0);
            if d < best.1 {
                second = best;
                best = (slot, d);
            } else if d < second.1 {
                second = (slot, d);
            }
        }
        NearestPair {
            nearest: self.indices[best.0],
            d1: best.1,
            second: self.indices[second.0],
            d2: second.1,
        }
    }
}

/// Exhaustive two-nearest-neighbor search of one query feature among the
/// valid points of `target`.
pub fn two_nearest_one(query: &[f32], target: &FeaturePointCloud) -> Result<NearestPair> {
    if query.len() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} features, target cloud {}",
            query.len(),
            target.dim()
        )));
    }
    Ok(TargetIndex::new(target)?.search(query))
}

/// Two-nearest search for every point of `query`; `None` for invalid queries.
pub fn two_nearest(
    query: &FeaturePointCloud,
    target: &FeaturePointCloud,
) -> Result<Vec<Option<NearestPair>>> {
    if query.dim() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dims differ: {} vs {}",
            query.dim(),
            target.dim()
        )));
    }
    let index = TargetIndex::new(target)?;
    let blocks = par::map_range(query.len().div_ceil(QUERY_BLOCK), |b| {
        let members: Vec<usize> = (b * QUERY_BLOCK..((b + 1) * QUERY_BLOCK).min(query.len()))
            .filter(|i| query.valid[*i])
            .collect();
        let features: Vec<&[f32]> = members.iter().map(|i| query.feature(*i)).collect();
        let dots = index.accumulate(&features);
        let mut out = vec![None; (b * QUERY_BLOCK..((b + 1) * QUERY_BLOCK).min(query.len())).len()];
        for (i, d) in members.iter().zip(&dots) {
            out[i - b * QUERY_BLOCK] = Some(index.nearest_two(d));
        }
        out
    });
    Ok(blocks.into_iter().flatten().collect())
}

/// Matches in both directions, computed once and reusable across weight
/// modes and values of k.
#[derive(Debug, Clone)]
pub struct BidirectionalMatches {
    pub p_to_q: Vec<Option<NearestPair>>,
    pub q_to_p: Vec<Option<NearestPair>>,
}

pub fn match_both(p: &FeaturePointCloud, q: &FeaturePointCloud) -> Result<BidirectionalMatches> {
    for cloud in [p, q] {
        let found = cloud.valid_count();
        if found < 2 {
            return Err(Error::InsufficientPoints { needed: 2, found });
        }
    }
    Ok(BidirectionalMatches {
        p_to_q: two_nearest(p, q)?,
        q_to_p: two_nearest(q, p)?,
    })
}

fn top_half(
    matches: &[Option<NearestPair>],
    half: usize,
    mode: WeightMode,
) -> Vec<(usize, usize, f64)> {
    let mut candidates: Vec<(usize, usize, f64)> = matches
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (i, m.nearest, score(&m, mode))))
        .collect();
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    candidates.truncate(half);
    candidates
}

/// Selects the `k / 2` best-weighted matches from each direction.
pub fn select_top_k(
    p: &FeaturePointCloud,
    q: &FeaturePointCloud,
    matches: &BidirectionalMatches,
    k: usize,
    mode: WeightMode,
) -> Result<CorrespondenceSet> {
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::Config(format!("k must be a positive even number, got {k}")));
    }
    let half = k / 2;
    let pq = top_half(&matches.p_to_q, half, mode);
    let qp = top_half(&matches.q_to_p, half, mode);
    if pq.is_empty() && qp.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let shortfall = [half - pq.len(), half - qp.len()];
    let mut entries = Vec::with_capacity(pq.len() + qp.len());
    for (pi, qi, w) in pq {
        entries.push(Correspondence {
            source: p.positions[pi],
            target: q.positions[qi],
            weight: w,
            direction: Direction::PToQ,
            p_index: pi,
            q_index: qi,
        });
    }
    for (qi, pi, w) in qp {
        entries.push(Correspondence {
            source: p.positions[pi],
            target: q.positions[qi],
            weight: w,
            direction: Direction::QToP,
            p_index: pi,
            q_index: qi,
        });
    }
    if shortfall != [0, 0] {
        log::warn!("correspondence shortfall: {shortfall:?} below k/2 = {half}");
    }
    Ok(CorrespondenceSet { entries, shortfall })
}

pub fn extract_correspondences(
    p: &FeaturePointCloud,
    q: &FeaturePointCloud,
    k: usize,
    mode: WeightMode,
) -> Result<CorrespondenceSet> {
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::Config(format!("k must be a positive even number, got {k}")));
    }
    let matches = match_both(p, q)?;
    select_top_k(p, q, &matches, k, mode)
}
