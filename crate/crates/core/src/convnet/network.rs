use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{conv2d, conv2d_backward_input, pool2, pool2_backward, relu, relu_backward};
use super::topology::{LayerKind, NetworkTopology};
use super::weights::{ConvParams, WeightStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Captured activations keyed by layer name, each (channels, height, width).
///
/// Iteration order is the lexical order of layer names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    maps: BTreeMap<String, Tensor>,
}

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.maps.insert(name.to_string(), t);
    }

    /// Adds `scale * t` into the entry for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, scale: f64, t: &Tensor) -> Result<()> {
        match self.maps.get_mut(name) {
            Some(existing) => existing.add_scaled(scale, t),
            None => {
                self.maps.insert(name.to_string(), t.scale(scale));
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.maps.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.maps.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.maps.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.maps.keys().map(String::as_str)
    }
}

/// A topology together with its frozen parameters.
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: NetworkTopology,
    pub weights: WeightStore,
}

impl Network {
    pub fn new(topology: NetworkTopology, weights: WeightStore) -> Result<Self> {
        weights.validate(&topology)?;
        Ok(Self { topology, weights })
    }

    /// Network with He-style Gaussian weights and small biases, for tests
    /// and desk-scale runs where pretrained weights are unavailable.
    pub fn random(topology: NetworkTopology, seed: u64) -> Self {
        let weights = random_weights(&topology, seed);
        Self { topology, weights }
    }

    pub fn forward_collect(&self, x: &Tensor, capture: &[&str]) -> Result<(FeatureSet, Tape<'_>)> {
        forward_collect(x, &self.topology, &self.weights, capture)
    }
}

pub fn random_weights(topology: &NetworkTopology, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (name, c_in, c_out) in topology.conv_layers() {
        let std = (2.0 / (9 * c_in) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let w: Vec<f64> = (0..c_out * c_in * 9).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..c_out).map(|_| 0.01 * normal.sample(&mut rng)).collect();
        store.insert(
            name,
            ConvParams {
                weights: Tensor::from_vec(&[c_out, c_in, 3, 3], w).expect("shape"),
                bias: Tensor::from_vec(&[c_out], b).expect("shape"),
            },
        );
    }
    store
}

/// Forward intermediates retained for [`backprop_to_input`].
#[derive(Debug)]
pub struct Tape<'n> {
    topology: &'n NetworkTopology,
    weights: &'n WeightStore,
    input_shape: Vec<usize>,
    /// `inputs[i]` is the tensor layer `i` consumed.
    inputs: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
    captures: BTreeMap<String, usize>,
}

impl Tape<'_> {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn captured(&self) -> impl Iterator<Item = &str> {
        self.captures.keys().map(String::as_str)
    }

    /// Number of layers that were evaluated.
    pub fn depth(&self) -> usize {
        self.inputs.len()
    }
}

/// Runs `x` through the network up to the deepest requested capture and
/// records the post-activation output of every captured layer.
pub fn forward_collect<'n>(
    x: &Tensor,
    topology: &'n NetworkTopology,
    weights: &'n WeightStore,
    capture: &[&str],
) -> Result<(FeatureSet, Tape<'n>)> {
    match *x.shape() {
        [c, _, _] if c == topology.in_channels() => {}
        _ => {
            return Err(Error::mismatch(
                "forward_collect",
                x.shape(),
                &[topology.in_channels(), 0, 0],
            ))
        }
    }
    let mut captures = BTreeMap::new();
    for &name in capture {
        captures.insert(name.to_string(), topology.capture_index(name)?);
    }
    let at: BTreeSet<usize> = captures.values().copied().collect();
    let depth = at.last().map_or(0, |&i| i + 1);

    let mut inputs = Vec::with_capacity(depth);
    let mut argmax = Vec::with_capacity(depth);
    let mut features = FeatureSet::new();
    let mut current = x.clone();
    for (i, layer) in topology.layers()[..depth].iter().enumerate() {
        let (next, idx) = match layer.kind {
            LayerKind::Conv { .. } => {
                let p = weights
                    .get(&layer.name)
                    .ok_or_else(|| Error::Topology(format!("missing layer `{}`", layer.name)))?;
                (conv2d(&current, &p.weights, &p.bias)?, None)
            }
            LayerKind::Relu => (relu(&current), None),
            LayerKind::Pool(mode) => {
                let out = pool2(&current, mode)?;
                (out.output, out.argmax)
            }
        };
        inputs.push(std::mem::replace(&mut current, next));
        argmax.push(idx);
        if at.contains(&i) {
            for (name, _) in captures.iter().filter(|(_, &j)| j == i) {
                features.insert(name, current.clone());
            }
        }
    }
    let tape = Tape {
        topology,
        weights,
        input_shape: x.shape().to_vec(),
        inputs,
        argmax,
        captures,
    };
    Ok((features, tape))
}

/// Chains per-layer feature gradients back to the input pixels.
///
/// Returns `Σ_l J_lᵀ g_l` where `J_l` is the Jacobian of captured layer
/// `l` with respect to the input.
pub fn backprop_to_input(tape: &Tape<'_>, feature_grads: &FeatureSet) -> Result<Tensor> {
    let mut pending: BTreeMap<usize, Tensor> = BTreeMap::new();
    for (name, g) in feature_grads.iter() {
        let &i = tape
            .captures
            .get(name)
            .ok_or_else(|| Error::Capture(name.to_string()))?;
        let expected = tape
            .inputs
            .get(i + 1)
            .map(|t| t.shape().to_vec())
            .unwrap_or_else(|| {
                let s = tape.input_shape.as_slice();
                tape.topology.shape_after(i, s[1], s[2]).to_vec()
            });
        if g.shape() != expected.as_slice() {
            return Err(Error::mismatch("backprop_to_input", g.shape(), &expected));
        }
        match pending.get_mut(&i) {
            Some(acc) => acc.add_scaled(1.0, g)?,
            None => {
                pending.insert(i, g.clone());
            }
        }
    }

    let mut grad: Option<Tensor> = None;
    for i in (0..tape.depth()).rev() {
        if let Some(g) = pending.remove(&i) {
            match grad.as_mut() {
                Some(acc) => acc.add_scaled(1.0, &g)?,
                None => grad = Some(g),
            }
        }
        let Some(g) = grad.take() else { continue };
        let layer = &tape.topology.layers()[i];
        let input = &tape.inputs[i];
        grad = Some(match layer.kind {
            LayerKind::Conv { .. } => {
                let p = tape.weights.get(&layer.name).expect("checked during forward");
                conv2d_backward_input(&g, &p.weights)?
            }
            LayerKind::Relu => relu_backward(&g, input)?,
            LayerKind::Pool(mode) => {
                pool2_backward(&g, input.shape(), mode, tape.argmax[i].as_deref())?
            }
        });
    }
    match grad {
        Some(g) => Ok(g),
        None => Tensor::zeros(&tape.input_shape),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::topology::{LayerSpec, PoolMode};

    fn mini(pool: PoolMode) -> Network {
        let topo = NetworkTopology::new(
            3,
            vec![
                LayerSpec::conv("conv1_1", 3, 4),
                LayerSpec::relu("relu1_1"),
                LayerSpec::pool("pool1", pool),
                LayerSpec::conv("conv2_1", 4, 5),
                LayerSpec::relu("relu2_1"),
            ],
        )
        .unwrap();
        Network::random(topo, 3)
    }

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| n.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn capture_shapes_follow_pools() {
        let net = mini(PoolMode::Avg);
        let x = noise(&[3, 9, 7], 1);
        let (f, tape) = net.forward_collect(&x, &["conv1_1", "conv2_1"]).unwrap();
        assert_eq!(f.get("conv1_1").unwrap().shape(), &[4, 9, 7]);
        assert_eq!(f.get("conv2_1").unwrap().shape(), &[5, 5, 4]);
        assert_eq!(tape.depth(), 5);
        assert!(f.get("conv1_1").unwrap().data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn empty_capture() {
        let net = mini(PoolMode::Max);
        let x = noise(&[3, 8, 8], 2);
        let (f, tape) = net.forward_collect(&x, &[]).unwrap();
        assert!(f.is_empty());
        let g = backprop_to_input(&tape, &FeatureSet::new()).unwrap();
        assert_eq!(g, Tensor::zeros(&[3, 8, 8]).unwrap());
    }

    #[test]
    fn unknown_capture() {
        let net = mini(PoolMode::Max);
        let x = noise(&[3, 8, 8], 2);
        assert!(matches!(
            net.forward_collect(&x, &["conv9_9"]),
            Err(Error::Capture(_))
        ));
    }

    #[test]
    fn zero_grads_give_zero() {
        let net = mini(PoolMode::Max);
        let x = noise(&[3, 8, 8], 4);
        let (f, tape) = net.forward_collect(&x, &["conv2_1"]).unwrap();
        let mut g = FeatureSet::new();
        g.insert("conv2_1", Tensor::zeros(f.get("conv2_1").unwrap().shape()).unwrap());
        let back = backprop_to_input(&tape, &g).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_shape_mismatch() {
        let net = mini(PoolMode::Max);
        let x = noise(&[3, 8, 8], 4);
        let (_, tape) = net.forward_collect(&x, &["conv2_1"]).unwrap();
        let mut g = FeatureSet::new();
        g.insert("conv2_1", Tensor::zeros(&[5, 8, 8]).unwrap());
        assert!(matches!(
            backprop_to_input(&tape, &g),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut g = FeatureSet::new();
        g.insert("conv1_1", Tensor::zeros(&[4, 8, 8]).unwrap());
        assert!(matches!(backprop_to_input(&tape, &g), Err(Error::Capture(_))));
    }

    #[test]
    fn identity_conv_passes_gradient_through() {
        let topo = NetworkTopology::new(1, vec![LayerSpec::conv("id", 1, 1)]).unwrap();
        let mut k = Tensor::zeros(&[1, 1, 3, 3]).unwrap();
        k.data_mut()[4] = 1.0;
        let mut store = WeightStore::new();
        store.insert(
            "id",
            ConvParams {
                weights: k,
                bias: Tensor::zeros(&[1]).unwrap(),
            },
        );
        let net = Network::new(topo, store).unwrap();
        let x = noise(&[1, 5, 6], 9);
        let (_, tape) = net.forward_collect(&x, &["id"]).unwrap();
        let g = noise(&[1, 5, 6], 10);
        let mut fg = FeatureSet::new();
        fg.insert("id", g.clone());
        assert_eq!(backprop_to_input(&tape, &fg).unwrap(), g);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = mini(PoolMode::Avg);
        let x = noise(&[3, 16, 16], 5);
        let (a, _) = net.forward_collect(&x, &["conv2_1"]).unwrap();
        let (b, _) = net.forward_collect(&x, &["conv2_1"]).unwrap();
        assert_eq!(a, b);
    }
}
