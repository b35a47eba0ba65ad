use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::GatParams;
use crate::corpus::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Unnormalised importance of node `j` to node `i` under one head:
/// `LeakyReLU(aᵀ [M h_i ‖ M h_j])`.
pub fn attention_logit(
    h_i: ArrayView1<f64>,
    h_j: ArrayView1<f64>,
    transform: ArrayView2<f64>,
    attention: ArrayView1<f64>,
    leaky_slope: f64,
) -> f64 {
    let d = transform.nrows();
    let wi = transform.dot(&h_i);
    let wj = transform.dot(&h_j);
    let pre = attention.slice(s![..d]).dot(&wi) + attention.slice(s![d..]).dot(&wj);
    leaky_relu(pre, leaky_slope)
}

/// Softmax over one neighborhood, shifted by the row maximum.
pub fn normalize_attention(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one head, kept for the backward pass.
pub(crate) struct HeadCache {
    /// `M h_j` for every source node, `n_src × head_dim`.
    pub wh: Array2<f64>,
    /// Pre-activation attention scores, one per target edge.
    pub pre: Vec<f64>,
    /// Normalised attention, one per target edge.
    pub alpha: Vec<f64>,
    /// Aggregated neighborhood before the activation, `n_tgt × head_dim`.
    pub agg: Array2<f64>,
}

/// Forward pass restricted to a set of target nodes.
pub(crate) struct Pass {
    pub targets: Vec<usize>,
    /// Nodes whose embeddings are needed: targets and their neighbors.
    pub sources: Vec<usize>,
    /// Local source index of each target.
    pub target_src: Vec<usize>,
    /// CSR over targets: edges of target `t` are `edge_offsets[t]..edge_offsets[t+1]`.
    pub edge_offsets: Vec<usize>,
    /// Local source index of each edge's neighbor.
    pub edge_src: Vec<usize>,
    pub heads: Vec<HeadCache>,
    /// Concatenated head outputs, `n_tgt × d_total`.
    pub z: Array2<f64>,
    /// Probability of NonNegative per target.
    pub p: Vec<f64>,
}

impl Pass {
    pub(crate) fn run(
        graph: &Graph,
        h: &EmbeddingMatrix,
        params: &GatParams,
        targets: &[usize],
    ) -> Result<Self> {
        if graph.n() != h.n() {
            return Err(Error::Shape(format!(
                "graph has {} nodes but embeddings have {} rows",
                graph.n(),
                h.n()
            )));
        }
        params.check_input(h.d())?;
        let n = graph.n();
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::Invalid(format!("node {bad} outside 0..{n}")));
        }

        // Local numbering of every node the targets depend on.
        let all = targets.len() == n && targets.iter().enumerate().all(|(i, &t)| i == t);
        let (sources, local) = if all {
            ((0..n).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>())
        } else {
            let mut local = vec![usize::MAX; n];
            let mut sources = Vec::new();
            for &t in targets {
                for &j in std::iter::once(&t).chain(graph.neighbors(t)) {
                    if local[j] == usize::MAX {
                        local[j] = 0;
                        sources.push(j);
                    }
                }
            }
            sources.sort_unstable();
            for (k, &j) in sources.iter().enumerate() {
                local[j] = k;
            }
            (sources, local)
        };

        let target_src: Vec<usize> = targets.iter().map(|&t| local[t]).collect();
        let mut edge_offsets = Vec::with_capacity(targets.len() + 1);
        let mut edge_src = Vec::new();
        edge_offsets.push(0);
        for &t in targets {
            let nb = graph.neighbors(t);
            if nb.is_empty() {
                return Err(Error::Invalid(format!(
                    "node {t} has an empty neighborhood; build the graph with self-loops"
                )));
            }
            edge_src.extend(nb.iter().map(|&j| local[j]));
            edge_offsets.push(edge_src.len());
        }

        let h_src = if all {
            None
        } else {
            Some(h.values().select(Axis(0), &sources))
        };
        let h_src_view = h_src.as_ref().map_or_else(|| h.values().view(), |a| a.view());

        let head_dim = params.head_dim();
        let n_tgt = targets.len();
        let mut z = Array2::zeros((n_tgt, params.d_total()));
        let mut heads = Vec::with_capacity(params.num_heads());
        for (k, hp) in params.heads.iter().enumerate() {
            let wh = h_src_view.dot(&hp.transform.t());
            let a_self = hp.attention.slice(s![..head_dim]);
            let a_nb = hp.attention.slice(s![head_dim..]);
            let nb_score: Vec<f64> = wh.outer_iter().map(|row| a_nb.dot(&row)).collect();

            let mut pre = vec![0.0; edge_src.len()];
            let mut alpha = vec![0.0; edge_src.len()];
            let mut agg = Array2::zeros((n_tgt, head_dim));
            for t in 0..n_tgt {
                let self_score = a_self.dot(&wh.row(target_src[t]));
                let range = edge_offsets[t]..edge_offsets[t + 1];
                for e in range.clone() {
                    pre[e] = self_score + nb_score[edge_src[e]];
                    alpha[e] = leaky_relu(pre[e], params.leaky_slope);
                }
                softmax_in_place(&mut alpha[range.clone()]);
                let mut out = agg.row_mut(t);
                for e in range {
                    out.scaled_add(alpha[e], &wh.row(edge_src[e]));
                }
            }
            let act = params.activation;
            z.slice_mut(s![.., k * head_dim..(k + 1) * head_dim])
                .assign(&agg.mapv(|x| act.apply(x)));
            heads.push(HeadCache {
                wh,
                pre,
                alpha,
                agg,
            });
        }

        let d_total = params.d_total();
        let w = params.classifier.slice(s![.., ..d_total]);
        let bias = params.classifier.column(d_total);
        let logits = z.dot(&w.t());
        let p = logits
            .outer_iter()
            .map(|l| logistic((l[1] + bias[1]) - (l[0] + bias[0])))
            .collect();

        Ok(Self {
            targets: targets.to_vec(),
            sources,
            target_src,
            edge_offsets,
            edge_src,
            heads,
            z,
            p,
        })
    }
}

/// Node representations and probabilities for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Concatenated head outputs, `n × (K·head_dim)`.
    pub z: Array2<f64>,
    /// Probability of NonNegative.
    pub p: Vec<f64>,
}

pub fn forward(graph: &Graph, h: &EmbeddingMatrix, params: &GatParams) -> Result<ForwardOutput> {
    let targets: Vec<usize> = (0..graph.n()).collect();
    let pass = Pass::run(graph, h, params, &targets)?;
    Ok(ForwardOutput {
        z: pass.z,
        p: pass.p,
    })
}

/// Nodes per chunk in [`predict`]; bounds the memory of one forward pass.
const PREDICT_CHUNK: usize = 8192;

/// Probability of NonNegative for every node.
pub fn predict(graph: &Graph, h: &EmbeddingMatrix, params: &GatParams) -> Result<Vec<f64>> {
    let n = graph.n();
    if n <= PREDICT_CHUNK {
        return Ok(forward(graph, h, params)?.p);
    }
    let mut p = Vec::with_capacity(n);
    let ids: Vec<usize> = (0..n).collect();
    for chunk in ids.chunks(PREDICT_CHUNK) {
        p.extend(Pass::run(graph, h, params, chunk)?.p);
    }
    Ok(p)
}

/// Attention coefficients of every head, laid out like [`Graph::targets`].
pub fn attention_weights(
    graph: &Graph,
    h: &EmbeddingMatrix,
    params: &GatParams,
) -> Result<Vec<Vec<f64>>> {
    let targets: Vec<usize> = (0..graph.n()).collect();
    let pass = Pass::run(graph, h, params, &targets)?;
    Ok(pass.heads.into_iter().map(|c| c.alpha).collect())
}
