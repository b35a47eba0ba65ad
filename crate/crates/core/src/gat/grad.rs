use ndarray::{s, Array2, Axis};

use super::forward::Pass;
use super::{GatConfig, GatParams};
use crate::corpus::{EmbeddingMatrix, SentimentLabel};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs.
pub const LOSS_EPSILON: f64 = 1e-12;

/// Class-weighted cross-entropy over the labeled nodes plus `λ‖Θ‖²`.
///
/// `p[i]` is the predicted probability of NonNegative for the node labeled
/// `labels[i]`. Negative examples carry weight `r`, and the data term is
/// normalised by the total weight `|NonNegative| + r·|Negative|`.
pub fn loss(
    p: &[f64],
    labels: &[SentimentLabel],
    params: &GatParams,
    r: f64,
    lambda: f64,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Invalid("loss needs at least one labeled node".into()));
    }
    if p.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            p.len(),
            labels.len()
        )));
    }
    Ok(data_loss(p, labels, r) + lambda * params.squared_norm())
}

fn data_loss(p: &[f64], labels: &[SentimentLabel], r: f64) -> f64 {
    let mut total_weight = 0.0;
    let mut sum = 0.0;
    for (&pi, &y) in p.iter().zip(labels) {
        let pi = pi.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
        match y {
            SentimentLabel::NonNegative => {
                total_weight += 1.0;
                sum += pi.ln();
            }
            SentimentLabel::Negative => {
                total_weight += r;
                sum += r * (1.0 - pi).ln();
            }
        }
    }
    -sum / total_weight
}

/// Loss and its exact gradient with respect to every parameter.
///
/// Only the labeled nodes and their neighborhoods are evaluated; unlabeled
/// nodes enter through the attention over those neighborhoods.
pub fn gradients(
    graph: &Graph,
    h: &EmbeddingMatrix,
    params: &GatParams,
    labels: &[(usize, SentimentLabel)],
    config: &GatConfig,
) -> Result<(f64, GatParams)> {
    if labels.is_empty() {
        return Err(Error::Invalid("no labeled nodes".into()));
    }
    let targets: Vec<usize> = labels.iter().map(|&(i, _)| i).collect();
    let ys: Vec<SentimentLabel> = labels.iter().map(|&(_, y)| y).collect();
    let pass = Pass::run(graph, h, params, &targets)?;

    let r = config.class_weight;
    let lambda = config.lambda;
    let value = data_loss(&pass.p, &ys, r) + lambda * params.squared_norm();

    let total_weight: f64 = ys
        .iter()
        .map(|y| if y.is_negative() { r } else { 1.0 })
        .sum();

    // d loss / d (logit_NonNegative − logit_Negative), per target.
    let dlogit: Vec<f64> = pass
        .p
        .iter()
        .zip(&ys)
        .map(|(&p, y)| {
            let (w, target) = if y.is_negative() { (r, 0.0) } else { (1.0, 1.0) };
            w * (p - target) / total_weight
        })
        .collect();

    let mut grad = GatParams::zeros(
        params.num_heads(),
        params.d_in(),
        params.head_dim(),
        params.leaky_slope,
        params.activation,
    );
    let d_total = params.d_total();
    let head_dim = params.head_dim();

    // Classifier: logits = W z + b, and the loss sees only logit1 − logit0.
    let mut dz = Array2::<f64>::zeros(pass.z.dim());
    {
        let w = params.classifier.slice(s![.., ..d_total]);
        let wdiff = &w.row(1) - &w.row(0);
        for (t, &g) in dlogit.iter().enumerate() {
            let z = pass.z.row(t);
            for (c, sign) in [(0usize, -1.0), (1, 1.0)] {
                let mut row = grad.classifier.row_mut(c);
                row.slice_mut(s![..d_total]).scaled_add(sign * g, &z);
                row[d_total] += sign * g;
            }
            dz.row_mut(t).scaled_add(g, &wdiff);
        }
    }

    let h_src = h.values().select(Axis(0), &pass.sources);
    let slope = params.leaky_slope;
    for (k, (hp, cache)) in params.heads.iter().zip(&pass.heads).enumerate() {
        let a_self = hp.attention.slice(s![..head_dim]);
        let a_nb = hp.attention.slice(s![head_dim..]);
        let mut dwh = Array2::<f64>::zeros(cache.wh.dim());
        let mut da_self = ndarray::Array1::<f64>::zeros(head_dim);
        let mut da_nb = ndarray::Array1::<f64>::zeros(head_dim);

        let dz_k = dz.slice(s![.., k * head_dim..(k + 1) * head_dim]);
        let act = params.activation;
        let dagg = ndarray::Zip::from(&dz_k)
            .and(&cache.agg)
            .map_collect(|&g, &x| g * act.derivative(x));

        let mut dalpha = Vec::new();
        for t in 0..pass.targets.len() {
            let range = pass.edge_offsets[t]..pass.edge_offsets[t + 1];
            let g = dagg.row(t);
            dalpha.clear();
            let mut weighted = 0.0;
            for e in range.clone() {
                let j = pass.edge_src[e];
                let da = g.dot(&cache.wh.row(j));
                weighted += cache.alpha[e] * da;
                dalpha.push(da);
                dwh.row_mut(j).scaled_add(cache.alpha[e], &g);
            }
            let i = pass.target_src[t];
            let mut dself_score = 0.0;
            for (off, e) in range.enumerate() {
                let de = cache.alpha[e] * (dalpha[off] - weighted);
                let dpre = if cache.pre[e] > 0.0 { de } else { slope * de };
                if dpre == 0.0 {
                    continue;
                }
                let j = pass.edge_src[e];
                dself_score += dpre;
                da_nb.scaled_add(dpre, &cache.wh.row(j));
                dwh.row_mut(j).scaled_add(dpre, &a_nb);
            }
            if dself_score != 0.0 {
                da_self.scaled_add(dself_score, &cache.wh.row(i));
                dwh.row_mut(i).scaled_add(dself_score, &a_self);
            }
        }

        let gh = &mut grad.heads[k];
        gh.transform = dwh.t().dot(&h_src);
        gh.attention.slice_mut(s![..head_dim]).assign(&da_self);
        gh.attention.slice_mut(s![head_dim..]).assign(&da_nb);
    }

    if lambda != 0.0 {
        let mut flat = grad.to_flat();
        for (g, p) in flat.iter_mut().zip(params.to_flat()) {
            *g += 2.0 * lambda * p;
        }
        grad.assign_flat(&flat);
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::Activation;
    use crate::graph::GraphOptions;
    use crate::rng::SplitMix64;

    fn params_with_norm(sq: f64) -> GatParams {
        let mut p = GatParams::zeros(1, 1, 1, 0.2, Activation::Elu);
        p.classifier[[0, 0]] = sq.sqrt();
        p
    }

    #[test]
    fn loss_examples() {
        let zero = params_with_norm(0.0);
        let perfect = loss(
            &[1.0, 0.0],
            &[SentimentLabel::NonNegative, SentimentLabel::Negative],
            &zero,
            2.0,
            0.0,
        )
        .unwrap();
        assert!(perfect.abs() < 1e-11);

        let half = loss(&[0.5], &[SentimentLabel::NonNegative], &zero, 2.0, 0.0).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);

        let ten = params_with_norm(10.0);
        let pen = loss(&[1.0], &[SentimentLabel::NonNegative], &ten, 2.0, 0.08).unwrap();
        assert!((pen - 0.8).abs() < 1e-11);

        assert!(loss(&[], &[], &zero, 2.0, 0.0).is_err());
    }

    #[test]
    fn weighted_normalisation() {
        // One of each class at P = 0.5: (log 2 + 2 log 2) / 3 = log 2.
        let zero = params_with_norm(0.0);
        let l = loss(
            &[0.5, 0.5],
            &[SentimentLabel::NonNegative, SentimentLabel::Negative],
            &zero,
            2.0,
            0.0,
        )
        .unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        // With P = 0.8 for both: −(ln 0.8 + 2 ln 0.2) / 3.
        let l = loss(
            &[0.8, 0.8],
            &[SentimentLabel::NonNegative, SentimentLabel::Negative],
            &zero,
            2.0,
            0.0,
        )
        .unwrap();
        assert!((l + (0.8f64.ln() + 2.0 * 0.2f64.ln()) / 3.0).abs() < 1e-15);
    }

    fn tiny_instance(seed: u64) -> (Graph, EmbeddingMatrix, GatParams, Vec<(usize, SentimentLabel)>, GatConfig) {
        let mut rng = SplitMix64::new(seed);
        let n = 4;
        let edges = vec![(0, 1), (1, 2), (3, 2)];
        let g = Graph::build(&edges, n, GraphOptions::default()).unwrap();
        let h = EmbeddingMatrix::new(ndarray::Array2::from_shape_fn((n, 3), |_| rng.unit() * 2.0 - 1.0)).unwrap();
        let cfg = GatConfig {
            heads: 2,
            head_dim: Some(2),
            lambda: 0.05,
            seed,
            ..GatConfig::default()
        };
        let p = GatParams::init(3, &cfg);
        let labels = vec![(0, SentimentLabel::Negative), (2, SentimentLabel::NonNegative), (3, SentimentLabel::Negative)];
        (g, h, p, labels, cfg)
    }

    #[test]
    fn gradient_value_matches_loss() {
        let (g, h, p, labels, cfg) = tiny_instance(5);
        let (value, _) = gradients(&g, &h, &p, &labels, &cfg).unwrap();
        let probs = crate::gat::predict(&g, &h, &p).unwrap();
        let sel: Vec<f64> = labels.iter().map(|&(i, _)| probs[i]).collect();
        let ys: Vec<_> = labels.iter().map(|&(_, y)| y).collect();
        let direct = loss(&sel, &ys, &p, cfg.class_weight, cfg.lambda).unwrap();
        assert!((value - direct).abs() < 1e-13);
    }

    #[test]
    fn penalty_only_gradient() {
        // With a zero classifier the data term has zero gradient everywhere
        // except the classifier itself, which sees (p − y) terms. Check the
        // transform/attention blocks equal 2λΘ exactly.
        let (g, h, mut p, labels, cfg) = tiny_instance(8);
        p.classifier.fill(0.0);
        let (_, grad) = gradients(&g, &h, &p, &labels, &cfg).unwrap();
        for (gh, ph) in grad.heads.iter().zip(&p.heads) {
            for (a, b) in gh.transform.iter().zip(ph.transform.iter()) {
                assert!((a - 2.0 * cfg.lambda * b).abs() < 1e-15);
            }
            for (a, b) in gh.attention.iter().zip(ph.attention.iter()) {
                assert!((a - 2.0 * cfg.lambda * b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn class_weight_scales_negative_contribution() {
        // Undo the normaliser: W(r)·∇L(r) = G_nonneg + r·G_neg, where the two
        // unit contributions come from single-class evaluations at r = 1.
        let (g, h, p, _, cfg) = tiny_instance(12);
        let nonneg = vec![(2, SentimentLabel::NonNegative), (3, SentimentLabel::NonNegative)];
        let neg = vec![(0, SentimentLabel::Negative)];
        let mixed: Vec<_> = nonneg.iter().chain(&neg).copied().collect();
        let unit = GatConfig { lambda: 0.0, class_weight: 1.0, ..cfg };
        let flat = |labels: &[(usize, SentimentLabel)], c: &GatConfig| {
            gradients(&g, &h, &p, labels, c).unwrap().1.to_flat()
        };
        let g_nonneg: Vec<f64> = flat(&nonneg, &unit).iter().map(|v| v * 2.0).collect();
        let g_neg = flat(&neg, &unit);
        for r in [1.0, 2.0, 3.5] {
            let c = GatConfig { class_weight: r, ..unit.clone() };
            let total = 2.0 + r;
            for ((m, a), b) in flat(&mixed, &c).iter().zip(&g_nonneg).zip(&g_neg) {
                assert!((m * total - (a + r * b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_never_lowers_the_loss() {
        let (g, h, p, labels, cfg) = tiny_instance(3);
        let mut last = f64::NEG_INFINITY;
        for lambda in [0.0, 0.01, 0.08, 1.0, 10.0] {
            let c = GatConfig { lambda, ..cfg.clone() };
            let (v, _) = gradients(&g, &h, &p, &labels, &c).unwrap();
            assert!(v >= last);
            last = v;
        }
    }
}
