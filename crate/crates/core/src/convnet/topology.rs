use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PoolMode {
    Max,
    #[default]
    Avg,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Max => "max",
            PoolMode::Avg => "avg",
        })
    }
}

impl FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolMode::Max),
            "avg" => Ok(PoolMode::Avg),
            other => Err(Error::Config(format!("unknown pooling mode `{other}`"))),
        }
    }
}

/// What a layer computes. Convolutions are always 3×3, stride 1, pad 1;
/// pools are always 2×2, stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    Pool(PoolMode),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn conv(name: &str, in_channels: usize, out_channels: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Conv {
                in_channels,
                out_channels,
            },
        }
    }

    pub fn relu(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Relu,
        }
    }

    pub fn pool(name: &str, mode: PoolMode) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Pool(mode),
        }
    }
}

/// An ordered chain of layers operating on a (channels, height, width)
/// tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    layers: Vec<LayerSpec>,
    in_channels: usize,
}

/// Channel widths of the VGG-19 convolutional trunk, block by block.
const VGG19_BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 4), (512, 4), (512, 4)];

impl NetworkTopology {
    /// Validates names and channel chaining.
    pub fn new(in_channels: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut channels = in_channels;
        for (i, layer) in layers.iter().enumerate() {
            if layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(Error::Config(format!("duplicate layer name `{}`", layer.name)));
            }
            if let LayerKind::Conv {
                in_channels,
                out_channels,
            } = layer.kind
            {
                if in_channels != channels || out_channels == 0 {
                    return Err(Error::Config(format!(
                        "layer `{}` expects {in_channels} input channels but receives {channels}",
                        layer.name
                    )));
                }
                channels = out_channels;
            }
        }
        Ok(Self {
            layers,
            in_channels,
        })
    }

    /// The VGG-19 convolutional trunk: 16 convolutions, each followed by a
    /// relu, with a pool closing each of the five blocks. Fully connected
    /// layers are not part of it.
    pub fn vgg19(pool: PoolMode) -> Self {
        let mut layers = Vec::with_capacity(37);
        let mut channels = 3;
        for (b, &(width, depth)) in VGG19_BLOCKS.iter().enumerate() {
            for i in 1..=depth {
                layers.push(LayerSpec::conv(&format!("conv{}_{i}", b + 1), channels, width));
                layers.push(LayerSpec::relu(&format!("relu{}_{i}", b + 1)));
                channels = width;
            }
            layers.push(LayerSpec::pool(&format!("pool{}", b + 1), pool));
        }
        Self::new(3, layers).expect("vgg19 topology is well formed")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.layers.iter().filter_map(|l| match l.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
            } => Some((l.name.as_str(), in_channels, out_channels)),
            _ => None,
        })
    }

    /// Index of the layer whose output is captured under `name`.
    ///
    /// A convolution immediately followed by a relu is captured after the
    /// relu; any other layer is captured at its own output.
    pub fn capture_index(&self, name: &str) -> Result<usize> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::Capture(name.to_string()))?;
        let followed_by_relu = matches!(self.layers[i].kind, LayerKind::Conv { .. })
            && matches!(self.layers.get(i + 1).map(|l| l.kind), Some(LayerKind::Relu));
        Ok(if followed_by_relu { i + 1 } else { i })
    }

    /// Output shape after running layers `0..=index` on a (C, H, W) input.
    pub fn shape_after(&self, index: usize, height: usize, width: usize) -> [usize; 3] {
        let mut shape = [self.in_channels, height, width];
        for layer in &self.layers[..=index] {
            match layer.kind {
                LayerKind::Conv { out_channels, .. } => shape[0] = out_channels,
                LayerKind::Relu => {}
                LayerKind::Pool(_) => {
                    shape[1] = shape[1].div_ceil(2);
                    shape[2] = shape[2].div_ceil(2);
                }
            }
        }
        shape
    }

    /// Copy of the topology with every pool switched to `mode`.
    pub fn with_pooling(&self, mode: PoolMode) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Pool(_) => LayerSpec::pool(&l.name, mode),
                _ => l.clone(),
            })
            .collect();
        Self {
            layers,
            in_channels: self.in_channels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg19_channel_chain() {
        let t = NetworkTopology::vgg19(PoolMode::Avg);
        let convs: Vec<_> = t.conv_layers().collect();
        assert_eq!(convs.len(), 16);
        let outs: Vec<usize> = convs.iter().map(|c| c.2).collect();
        assert_eq!(
            outs,
            [64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 512, 512, 512, 512, 512, 512]
        );
        assert_eq!(convs[0], ("conv1_1", 3, 64));
        assert_eq!(convs[15].0, "conv5_4");
        let pools = t
            .layers()
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Pool(_)))
            .count();
        assert_eq!(pools, 5);
    }

    #[test]
    fn capture_points_are_post_relu() {
        let t = NetworkTopology::vgg19(PoolMode::Avg);
        let i = t.capture_index("conv4_2").unwrap();
        assert_eq!(t.layers()[i].name, "relu4_2");
        assert_eq!(t.layers()[t.capture_index("pool1").unwrap()].name, "pool1");
        assert!(matches!(t.capture_index("fc7"), Err(Error::Capture(_))));
    }

    #[test]
    fn pooling_schedule_extents() {
        let t = NetworkTopology::vgg19(PoolMode::Max);
        let i = t.capture_index("conv4_2").unwrap();
        assert_eq!(t.shape_after(i, 224, 224), [512, 28, 28]);
        let i = t.capture_index("conv5_1").unwrap();
        assert_eq!(t.shape_after(i, 37, 50), [512, 3, 4]);
    }

    #[test]
    fn rejects_broken_chain() {
        let err = NetworkTopology::new(
            3,
            vec![LayerSpec::conv("a", 3, 4), LayerSpec::conv("b", 5, 4)],
        );
        assert!(err.is_err());
        let dup = NetworkTopology::new(3, vec![LayerSpec::relu("a"), LayerSpec::relu("a")]);
        assert!(dup.is_err());
    }
}
