//! Topic analytics over a trained model: marginal topic distribution, term
//! saliency and relevance rankings, pairwise topic distances and the 2-D
//! projection used by the report figures.
//!
//! Definitions: with p(k) = n_k / N and p(w) = Σ_k p(k)·φ_kw,
//!   saliency(w)    = p(w) · Σ_k p(k|w) · ln(p(k|w) / p(k))
//!   relevance(w,k) = λ·ln φ_kw + (1−λ)·ln(φ_kw / p(w))
//! Topic distances are Jensen–Shannon divergences with base-2 logs (range
//! `[0,1]`); the projection is classical multidimensional scaling
//! (double-center the squared distances, take the top two eigenpairs).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cve::TopicLabel;
use crate::lda::LdaModel;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("lambda must lie in [0,1], got {0}")]
    BadLambda(f64),
    #[error("distance matrix must be square and symmetric with a zero diagonal")]
    BadDistanceMatrix,
    #[error("marginals length {marginals} disagrees with matrix size {matrix}")]
    ShapeMismatch { marginals: usize, matrix: usize },
}

/// p(k) = n_k / total tokens.
pub fn marginal_topic_distribution(model: &LdaModel) -> Vec<f64> {
    let total = model.total_tokens() as f64;
    model.n_k.iter().map(|&n| n as f64 / total).collect()
}

/// Marginals as percentages with one decimal place. Largest-remainder
/// rounding keeps the reported shares summing to exactly 100.0 (independent
/// rounding can drift by K·0.05).
pub fn token_shares_percent(model: &LdaModel) -> Vec<f64> {
    let marginal = marginal_topic_distribution(model);
    let tenths: Vec<f64> = marginal.iter().map(|p| p * 1000.0).collect();
    let mut floors: Vec<u64> = tenths.iter().map(|&t| t.floor() as u64).collect();
    let assigned: u64 = floors.iter().sum();
    let mut order: Vec<usize> = (0..tenths.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = tenths[a] - tenths[a].floor();
        let fb = tenths[b] - tenths[b].floor();
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    for &idx in order.iter().take(1000usize.saturating_sub(assigned as usize)) {
        floors[idx] += 1;
    }
    floors.into_iter().map(|t| t as f64 / 10.0).collect()
}

/// Saliency score per term, indexed by token id. Scores are non-negative;
/// the sum over topics is a KL divergence of p(k|w) from p(k).
pub fn saliency(model: &LdaModel) -> Vec<f64> {
    let p_topic = marginal_topic_distribution(model);
    let k = model.num_topics();
    let v = model.vocab_size;
    let mut scores = vec![0.0f64; v];
    for (w, score) in scores.iter_mut().enumerate() {
        let p_word: f64 = (0..k).map(|t| p_topic[t] * model.phi[t][w]).sum();
        if p_word <= 0.0 {
            continue;
        }
        let mut distinctiveness = 0.0;
        for (t, &p_t) in p_topic.iter().enumerate() {
            let p_topic_given_word = p_t * model.phi[t][w] / p_word;
            if p_topic_given_word > 0.0 && p_t > 0.0 {
                distinctiveness += p_topic_given_word * (p_topic_given_word / p_t).ln();
            }
        }
        *score = (p_word * distinctiveness).max(0.0);
    }
    scores
}

/// Token ids ranked by descending saliency, ties by ascending id, cut to
/// `top_n`.
pub fn top_salient_terms(model: &LdaModel, top_n: usize) -> Vec<(u32, f64)> {
    let scores = saliency(model);
    let mut ranked: Vec<(u32, f64)> =
        scores.into_iter().enumerate().map(|(w, s)| (w as u32, s)).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    ranked
}

/// Per-topic relevance rankings at a given λ: descending score, ties by
/// ascending token id.
pub fn relevance(model: &LdaModel, lambda: f64) -> Result<Vec<Vec<(u32, f64)>>, AnalyticsError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(AnalyticsError::BadLambda(lambda));
    }
    let p_topic = marginal_topic_distribution(model);
    let k = model.num_topics();
    let v = model.vocab_size;
    let p_word: Vec<f64> = (0..v)
        .map(|w| (0..k).map(|t| p_topic[t] * model.phi[t][w]).sum())
        .collect();
    let mut out = Vec::with_capacity(k);
    for t in 0..k {
        let mut ranked: Vec<(u32, f64)> = (0..v)
            .map(|w| {
                let phi = model.phi[t][w];
                let score = lambda * phi.ln() + (1.0 - lambda) * (phi / p_word[w]).ln();
                (w as u32, score)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
        out.push(ranked);
    }
    Ok(out)
}

/// Jensen–Shannon divergence with base-2 logs; 0 for identical distributions,
/// 1 for disjoint supports. The two KL halves accumulate separately so the
/// result is bit-for-bit symmetric in its arguments.
pub fn jensen_shannon_base2(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            kl_p += a * (a / m).log2();
        }
        if b > 0.0 {
            kl_q += b * (b / m).log2();
        }
    }
    (0.5 * kl_p + 0.5 * kl_q).clamp(0.0, 1.0)
}

/// K×K matrix of pairwise base-2 JSD between φ rows: symmetric, zero
/// diagonal, entries in `[0,1]`.
#[allow(clippy::needless_range_loop)]
pub fn topic_distance_matrix(model: &LdaModel) -> Vec<Vec<f64>> {
    let k = model.num_topics();
    let mut matrix = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = jensen_shannon_base2(&model.phi[i], &model.phi[j]);
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    matrix
}

/// One topic in the 2-D projection; the radius carries the marginal p(k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedTopic {
    pub topic: usize,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<ProjectedTopic>,
    pub warning: Option<String>,
}

/// Classical multidimensional scaling of a distance matrix: double-center the
/// squared distances, take the top two eigenpairs. Coordinates are centered
/// at the origin; radii are the marginals.
pub fn project_topics(
    dist: &[Vec<f64>],
    marginals: &[f64],
) -> Result<Projection, AnalyticsError> {
    let k = dist.len();
    if marginals.len() != k {
        return Err(AnalyticsError::ShapeMismatch { marginals: marginals.len(), matrix: k });
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != k || dist[i][i] != 0.0 {
            return Err(AnalyticsError::BadDistanceMatrix);
        }
        for (j, &value) in row.iter().enumerate() {
            if (value - dist[j][i]).abs() > 1e-9 {
                return Err(AnalyticsError::BadDistanceMatrix);
            }
        }
    }

    if k < 2 {
        let points = (0..k)
            .map(|topic| ProjectedTopic { topic, x: 0.0, y: 0.0, radius: marginals[topic] })
            .collect();
        return Ok(Projection {
            points,
            warning: Some("fewer than two topics: projection degenerates to a point".into()),
        });
    }

    // B = -1/2 · J · D² · J with J = I - 11ᵀ/K.
    let mut squared = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            squared[i][j] = dist[i][j] * dist[i][j];
        }
    }
    let row_means: Vec<f64> = squared.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let grand_mean: f64 = row_means.iter().sum::<f64>() / k as f64;
    let mut b = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            b[i][j] = -0.5 * (squared[i][j] - row_means[i] - row_means[j] + grand_mean);
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(&b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| {
        eigenvalues[c].partial_cmp(&eigenvalues[a]).expect("finite eigenvalues")
    });

    let mut coords = vec![[0.0f64; 2]; k];
    for (axis, &e) in order.iter().take(2).enumerate() {
        if eigenvalues[e] <= 0.0 {
            continue;
        }
        let scale = eigenvalues[e].sqrt();
        let mut column: Vec<f64> = (0..k).map(|i| eigenvectors[i][e]).collect();
        // Deterministic sign: the largest-magnitude component is positive.
        let dominant = column
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, c)| {
                a.abs().partial_cmp(&c.abs()).expect("finite").then(std::cmp::Ordering::Greater)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if column[dominant] < 0.0 {
            for value in &mut column {
                *value = -*value;
            }
        }
        for i in 0..k {
            coords[i][axis] = column[i] * scale;
        }
    }

    let points = (0..k)
        .map(|topic| ProjectedTopic {
            topic,
            x: coords[topic][0],
            y: coords[topic][1],
            radius: marginals[topic],
        })
        .collect();
    Ok(Projection { points, warning: None })
}

/// Cyclic Jacobi eigendecomposition for small symmetric matrices. Returns
/// (eigenvalues, column eigenvectors).
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0f64; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

/// Topic → label assignment maximizing doc-level agreement between the
/// argmax of θ and the manual labels, found by exact optimization over
/// one-to-one assignments on the K×4 contingency table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAlignment {
    pub mapping: BTreeMap<usize, TopicLabel>,
    pub contingency: Vec<Vec<u64>>,
    pub agreement: u64,
    pub warning: Option<String>,
}

pub fn align_topics_to_labels(
    model: &LdaModel,
    labels: &BTreeMap<String, TopicLabel>,
) -> TopicAlignment {
    let k = model.num_topics();
    let label_count = TopicLabel::ALL.len();
    let mut contingency = vec![vec![0u64; label_count]; k];
    for (d, doc_id) in model.doc_ids.iter().enumerate() {
        let Some(label) = labels.get(doc_id) else { continue };
        let label_idx =
            TopicLabel::ALL.iter().position(|l| l == label).expect("label in enum");
        // argmax of θ, lowest topic on ties
        let mut best = 0usize;
        for t in 1..k {
            if model.theta[d][t] > model.theta[d][best] {
                best = t;
            }
        }
        contingency[best][label_idx] += 1;
    }

    let (mapping_vec, agreement) = best_assignment(&contingency);
    let mapping: BTreeMap<usize, TopicLabel> = mapping_vec
        .into_iter()
        .map(|(topic, label_idx)| (topic, TopicLabel::ALL[label_idx]))
        .collect();
    let warning = if k != label_count {
        Some(format!(
            "{k} topics vs {label_count} labels: only {} topics mapped",
            mapping.len()
        ))
    } else {
        None
    };
    TopicAlignment { mapping, contingency, agreement, warning }
}

/// Exact maximum-agreement one-to-one assignment over a K×L table via
/// label-subset dynamic programming (L ≤ 16). Among maxima, topics are
/// assigned greedily from the lowest topic id, labels in enum order.
fn best_assignment(contingency: &[Vec<u64>]) -> (Vec<(usize, usize)>, u64) {
    let k = contingency.len();
    if k == 0 {
        return (Vec::new(), 0);
    }
    let l = contingency[0].len();
    assert!(l <= 16, "label side of the table must stay small");
    let want = k.min(l);
    let full: u32 = (1u32 << l) - 1;

    // The number of labels already assigned is l − popcount(mask), so the
    // state is fully (t, mask). None marks infeasible states (too few topics
    // left to place the required number of labels).
    fn solve(
        t: usize,
        mask: u32,
        want: usize,
        l: usize,
        contingency: &[Vec<u64>],
        memo: &mut [BTreeMap<u32, u64>],
    ) -> Option<u64> {
        let k = contingency.len();
        let assigned = l - mask.count_ones() as usize;
        let needed = want - assigned;
        if needed > k - t {
            return None;
        }
        if t == k {
            return Some(0);
        }
        if let Some(&cached) = memo[t].get(&mask) {
            return Some(cached);
        }
        let mut best: Option<u64> = None;
        if let Some(rest) = solve(t + 1, mask, want, l, contingency, memo) {
            best = Some(rest);
        }
        if assigned < want {
            for label in 0..l {
                let bit = 1u32 << label;
                if mask & bit == 0 {
                    continue;
                }
                if let Some(rest) = solve(t + 1, mask & !bit, want, l, contingency, memo) {
                    let total = rest + contingency[t][label];
                    if best.is_none_or(|b| total > b) {
                        best = Some(total);
                    }
                }
            }
        }
        let best = best.expect("some branch is feasible below the need threshold");
        memo[t].insert(mask, best);
        Some(best)
    }

    let mut memo: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); k + 1];
    let total =
        solve(0, full, want, l, contingency, &mut memo).expect("assignment always feasible");

    let mut mapping = Vec::new();
    let mut mask = full;
    let mut assigned = 0usize;
    for t in 0..k {
        if assigned == want {
            break;
        }
        let target = solve(t, mask, want, l, contingency, &mut memo).expect("reachable state");
        let mut placed = false;
        for label in 0..l {
            let bit = 1u32 << label;
            if mask & bit == 0 {
                continue;
            }
            let rest = solve(t + 1, mask & !bit, want, l, contingency, &mut memo);
            if rest.map(|r| r + contingency[t][label]) == Some(target) {
                mapping.push((t, label));
                mask &= !bit;
                assigned += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            debug_assert_eq!(
                solve(t + 1, mask, want, l, contingency, &mut memo),
                Some(target),
                "skipping topic {t} must preserve the optimum"
            );
        }
    }
    (mapping, total)
}
