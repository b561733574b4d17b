//! Network description: layer vocabulary, JSON schema and shape inference.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Maxpool,
    Avgpool,
    Fc,
}

impl LayerKind {
    pub fn is_spatial(self) -> bool {
        !matches!(self, LayerKind::Fc)
    }

    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::Fc)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::Maxpool => "maxpool",
            LayerKind::Avgpool => "avgpool",
            LayerKind::Fc => "fc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    None,
    Relu,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default = "one")]
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, padding: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding,
            out_channels: Some(out_channels),
            activation: Activation::None,
        }
    }

    pub fn depthwise(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::DepthwiseConv,
            kernel,
            stride,
            padding,
            out_channels: None,
            activation: Activation::None,
        }
    }

    pub fn maxpool(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Maxpool,
            kernel,
            stride,
            padding,
            out_channels: None,
            activation: Activation::None,
        }
    }

    pub fn avgpool(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Avgpool,
            ..Self::maxpool(kernel, stride, padding)
        }
    }

    pub fn fc(out_features: usize) -> Self {
        Self {
            kind: LayerKind::Fc,
            kernel: 1,
            stride: 1,
            padding: 0,
            out_channels: Some(out_features),
            activation: Activation::None,
        }
    }

    pub fn relu(mut self) -> Self {
        self.activation = Activation::Relu;
        self
    }
}

/// Shape of one feature map in HWC element counts. Fc outputs are `1x1xC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMapShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FeatureMapShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn elements(&self) -> usize {
        self.height * self.width * self.channels
    }
}

impl fmt::Display for FeatureMapShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Static model under analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_shape: FeatureMapShape,
    pub layers: Vec<LayerSpec>,
    /// (rows, cols) of the patch grid.
    pub patch_grid: (usize, usize),
    /// Number of leading layers executed per patch.
    pub patch_depth: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFile {
    height: usize,
    width: usize,
    channels: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchFile {
    grid: [usize; 2],
    depth: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    input: InputFile,
    layers: Vec<LayerSpec>,
    patch: PatchFile,
}

impl NetworkSpec {
    /// Parses and validates a network description.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let net = NetworkSpec {
            name: file.name,
            input_shape: FeatureMapShape::new(
                file.input.height,
                file.input.width,
                file.input.channels,
            ),
            layers: file.layers,
            patch_grid: (file.patch.grid[0], file.patch.grid[1]),
            patch_depth: file.patch.depth,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            name: self.name.clone(),
            input: InputFile {
                height: self.input_shape.height,
                width: self.input_shape.width,
                channels: self.input_shape.channels,
            },
            layers: self.layers.clone(),
            patch: PatchFile {
                grid: [self.patch_grid.0, self.patch_grid.1],
                depth: self.patch_depth,
            },
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    /// Number of feature maps, `layers + 1`.
    pub fn map_count(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(msg));
        if self.layers.is_empty() {
            return bad("layers: must be nonempty".into());
        }
        if self.patch_grid.0 == 0 || self.patch_grid.1 == 0 {
            return bad("patch.grid: components must be >= 1".into());
        }
        if self.patch_depth > self.layers.len() {
            return bad(format!(
                "patch.depth: {} exceeds layer count {}",
                self.patch_depth,
                self.layers.len()
            ));
        }
        let mut seen_fc = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kernel == 0 {
                return bad(format!("layers[{i}].kernel: must be >= 1"));
            }
            if layer.stride == 0 {
                return bad(format!("layers[{i}].stride: must be >= 1"));
            }
            if layer.kind.is_spatial() && layer.padding >= layer.kernel {
                return bad(format!("layers[{i}].padding: must be smaller than the kernel"));
            }
            match layer.kind {
                LayerKind::Conv | LayerKind::Fc => match layer.out_channels {
                    None | Some(0) => {
                        return bad(format!(
                            "layers[{i}].out_channels: required and >= 1 for {}",
                            layer.kind
                        ))
                    }
                    Some(_) => {}
                },
                _ => {}
            }
            if layer.kind == LayerKind::Fc {
                seen_fc = true;
            } else if seen_fc {
                return bad(format!(
                    "layers[{i}].kind: spatial layer after fc; fc must be trailing"
                ));
            }
        }
        // Shape inference checks positivity and channel-preserving kinds.
        infer_shapes(self)?;
        Ok(())
    }
}

/// Output shape of every feature map: index 0 is the network input, index `j`
/// the output of layer `j`.
pub fn infer_shapes(net: &NetworkSpec) -> Result<Vec<FeatureMapShape>> {
    let check = |index: usize, s: FeatureMapShape| -> Result<FeatureMapShape> {
        if s.height == 0 || s.width == 0 || s.channels == 0 {
            Err(Error::NonPositiveShape {
                index,
                height: s.height as i64,
                width: s.width as i64,
                channels: s.channels as i64,
            })
        } else {
            Ok(s)
        }
    };
    let mut shapes = vec![check(0, net.input_shape)?];
    for (j, layer) in net.layers.iter().enumerate() {
        let prev = shapes[j];
        let next = match layer.kind {
            LayerKind::Fc => FeatureMapShape::new(1, 1, layer.out_channels.unwrap_or(0)),
            kind => {
                let spatial = |n: usize| {
                    (n as i64 + 2 * layer.padding as i64 - layer.kernel as i64)
                        .div_euclid(layer.stride as i64)
                        + 1
                };
                let (h, w) = (spatial(prev.height), spatial(prev.width));
                let c = match kind {
                    LayerKind::Conv => layer.out_channels.unwrap_or(0) as i64,
                    _ => {
                        if let Some(c) = layer.out_channels {
                            if c != prev.channels {
                                return Err(Error::InvalidNetwork(format!(
                                    "layers[{j}].out_channels: {kind} preserves channels ({} != {c})",
                                    prev.channels
                                )));
                            }
                        }
                        prev.channels as i64
                    }
                };
                if h <= 0 || w <= 0 || c <= 0 {
                    return Err(Error::NonPositiveShape {
                        index: j + 1,
                        height: h,
                        width: w,
                        channels: c,
                    });
                }
                FeatureMapShape::new(h as usize, w as usize, c as usize)
            }
        };
        shapes.push(check(j + 1, next)?);
    }
    Ok(shapes)
}
