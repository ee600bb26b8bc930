//! Content loss, Gram matrices, style loss and the weighted total, each with
//! its exact gradient with respect to the feature maps.
//!
//! For a layer with `N` feature maps of `M` positions each, features are
//! handled as an N×M matrix `F`:
//!
//! * content: `½ Σ (P − F)²`, gradient `F − P`
//! * Gram: `G = F Fᵀ`
//! * style at one layer: `Σ (A − G)² / (4 N² M²)`, gradient `(G − A) F / (N² M²)`
//! * total: `α · content + β · Σ_l w_l E_l`

use std::collections::BTreeMap;

use crate::convnet::FeatureSet;
use crate::error::{Error, Result};
use crate::tensor::{gemm_aat, Tensor};

/// A layer's activations flattened to N channels × M positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Tensor);

impl FeatureMatrix {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::mismatch("feature_matrix", t.shape(), &[0, 0]));
        }
        Ok(Self(t))
    }

    /// Flattens a (C, H, W) feature map into C × (H·W).
    pub fn from_feature_map(map: &Tensor) -> Result<Self> {
        match *map.shape() {
            [c, h, w] => Ok(Self(map.clone().reshape(&[c, h * w])?)),
            _ => Err(Error::mismatch("feature_matrix", map.shape(), &[0, 0, 0])),
        }
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn positions(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// `F Fᵀ` for some feature matrix `F`; symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Tensor);

impl GramMatrix {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.shape()[0]
    }

    /// Wraps an arbitrary square matrix as a style target.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        match *t.shape() {
            [a, b] if a == b => Ok(Self(t)),
            _ => Err(Error::mismatch("gram_matrix", t.shape(), &[0, 0])),
        }
    }
}

/// Gram matrix `F Fᵀ`, made exactly symmetric by mirroring the upper
/// triangle.
pub fn gram(f: &FeatureMatrix) -> GramMatrix {
    let (n, m) = (f.channels(), f.positions());
    let mut g = vec![0.0; n * n];
    gemm_aat(n, m, f.0.data(), &mut g);
    for i in 0..n {
        for j in i + 1..n {
            g[j * n + i] = g[i * n + j];
        }
    }
    GramMatrix(Tensor::from_vec(&[n, n], g).expect("square"))
}

/// `½ Σ (P − F)²` and its gradient `F − P`.
pub fn content_loss_grad(p: &FeatureMatrix, f: &FeatureMatrix) -> Result<(f64, FeatureMatrix)> {
    if p.0.shape() != f.0.shape() {
        return Err(Error::mismatch("content_loss", p.0.shape(), f.0.shape()));
    }
    let diff = f.0.sub(&p.0)?;
    Ok((0.5 * diff.sum_squares(), FeatureMatrix(diff)))
}

/// Style loss at one layer against target Gram `a`, with its gradient.
pub fn style_layer_loss_grad(a: &GramMatrix, f: &FeatureMatrix) -> Result<(f64, FeatureMatrix)> {
    let (n, m) = (f.channels(), f.positions());
    if a.0.shape() != [n, n] {
        return Err(Error::mismatch("style_loss", a.0.shape(), f.0.shape()));
    }
    let g = gram(f);
    let diff = g.0.sub(&a.0)?;
    let nm2 = ((n * n) as f64) * ((m * m) as f64);
    let loss = diff.sum_squares() / (4.0 * nm2);
    let grad = diff.matmul(&f.0)?.scale(1.0 / nm2);
    Ok((loss, FeatureMatrix(grad)))
}

/// `Σ_l w_l E_l`, summed in lexical layer order.
pub fn total_style_loss(
    per_layer: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<f64> {
    if !per_layer.keys().eq(weights.keys()) {
        return Err(Error::Config(format!(
            "style layers {:?} do not match weighted layers {:?}",
            per_layer.keys().collect::<Vec<_>>(),
            weights.keys().collect::<Vec<_>>()
        )));
    }
    Ok(per_layer.iter().map(|(k, e)| weights[k] * e).sum())
}

/// Content weight α, style weight β and the per-layer style weights w_l.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub layer_weights: BTreeMap<String, f64>,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, layer_weights: BTreeMap<String, f64>) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(alpha) || !ok(beta) || alpha + beta <= 0.0 {
            return Err(Error::Config(format!(
                "need alpha, beta >= 0 with alpha + beta > 0 (got {alpha}, {beta})"
            )));
        }
        if let Some((k, v)) = layer_weights.iter().find(|(_, &v)| !ok(v)) {
            return Err(Error::Config(format!("layer weight {k} = {v} must be >= 0")));
        }
        Ok(Self {
            alpha,
            beta,
            layer_weights,
        })
    }

    /// Equal weights summing to one over `layers`.
    pub fn uniform(alpha: f64, beta: f64, layers: &[&str]) -> Result<Self> {
        let w = 1.0 / layers.len() as f64;
        Self::new(alpha, beta, layers.iter().map(|l| (l.to_string(), w)).collect())
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }
}

/// Frozen content features and style Grams computed from the input images.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTargets {
    pub content_layer: String,
    pub content_target: FeatureMatrix,
    pub style_targets: BTreeMap<String, GramMatrix>,
}

impl LossTargets {
    /// Layers that must be captured to evaluate the loss.
    pub fn layers(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.style_targets.keys().map(String::as_str).collect();
        if !v.contains(&self.content_layer.as_str()) {
            v.push(&self.content_layer);
        }
        v
    }
}

/// One evaluation of the total loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub loss: f64,
    pub content: f64,
    pub style: f64,
    /// ∂loss/∂features, shaped like the captured feature maps.
    pub feature_grads: FeatureSet,
}

fn feature_matrix(features: &FeatureSet, name: &str) -> Result<(FeatureMatrix, Vec<usize>)> {
    let map = features
        .get(name)
        .ok_or_else(|| Error::Capture(name.to_string()))?;
    Ok((FeatureMatrix::from_feature_map(map)?, map.shape().to_vec()))
}

/// `α · content + β · Σ w_l E_l` with gradients for every involved layer.
pub fn total_loss_grad(
    targets: &LossTargets,
    features_x: &FeatureSet,
    weights: &LossWeights,
) -> Result<LossEvaluation> {
    if !targets.style_targets.keys().eq(weights.layer_weights.keys()) {
        return Err(Error::Config(format!(
            "style targets {:?} do not match weighted layers {:?}",
            targets.style_targets.keys().collect::<Vec<_>>(),
            weights.layer_weights.keys().collect::<Vec<_>>()
        )));
    }
    let mut grads = FeatureSet::new();

    let (f, shape) = feature_matrix(features_x, &targets.content_layer)?;
    let (content, g) = content_loss_grad(&targets.content_target, &f)?;
    grads.accumulate(&targets.content_layer, weights.alpha, &g.0.reshape(&shape)?)?;

    let mut per_layer = BTreeMap::new();
    for (name, a) in &targets.style_targets {
        let (f, shape) = feature_matrix(features_x, name)?;
        let (e, g) = style_layer_loss_grad(a, &f)?;
        per_layer.insert(name.clone(), e);
        grads.accumulate(name, weights.beta * weights.layer_weights[name], &g.0.reshape(&shape)?)?;
    }
    let style = total_style_loss(&per_layer, &weights.layer_weights)?;
    Ok(LossEvaluation {
        loss: weights.alpha * content + weights.beta * style,
        content,
        style,
        feature_grads: grads,
    })
}
