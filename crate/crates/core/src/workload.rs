//! DNN workload descriptions: per-layer shapes, im2col GEMM dimensions, and
//! the built-in network descriptors used throughout the toolkit.
//!
//! A network is an ordered list of parametric layers (convolutions and
//! fully-connected layers, the latter modeled as 1x1 convolutions on a 1x1
//! feature map). Batch size is fixed at one image.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One parametric layer of a DNN.
///
/// Shortcut (residual-add projection) layers are modeled as 1x1 convolutions
/// flagged `is_sc_or_dw`; depthwise layers carry both `is_sc_or_dw` and
/// `is_depthwise` since the two cases drive different split heuristics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// 1-based layer id, contiguous within a network.
    pub index: usize,
    /// Input channels of the layer's input tensor.
    pub c_in: usize,
    /// Output channels; equals the filter count of the layer.
    pub c_out: usize,
    /// Spatial kernel size (1 for fully-connected layers).
    pub kernel: usize,
    pub stride: usize,
    /// Input feature-map spatial size (square maps assumed).
    pub fmap: usize,
    /// Spatial zero padding applied on each border.
    pub padding: usize,
    #[serde(default)]
    pub is_sc_or_dw: bool,
    #[serde(default)]
    pub is_depthwise: bool,
    #[serde(default)]
    pub is_first_or_last: bool,
}

/// A DNN workload: ordered layers plus a name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

/// GEMM dimensions of one layer after im2col lowering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmShape {
    /// Output spatial positions (H_out * W_out).
    pub rows: usize,
    /// Reduction length (c_in * d * d; d * d for depthwise).
    pub depth: usize,
    /// Output channels / filters.
    pub cols: usize,
}

impl GemmShape {
    /// Multiply-accumulate count of the lowered GEMM.
    pub fn macs(&self) -> u64 {
        self.rows as u64 * self.depth as u64 * self.cols as u64
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("descriptor parse error: {0}")]
    Parse(String),
    #[error("layer {index}: missing or invalid field `{field}`")]
    Field { index: usize, field: &'static str },
    #[error("layer {index}: {reason}")]
    Invariant { index: usize, reason: String },
    #[error("network `{0}` is empty")]
    Empty(String),
    #[error("unknown built-in network `{0}` (expected resnet18, mobilenetv2 or synthetic-small)")]
    UnknownBuiltin(String),
}

impl LayerSpec {
    /// Parameter count. Depthwise layers reduce over a single input channel
    /// per group, so their weights are c_out * d * d.
    pub fn n_params(&self) -> u64 {
        let cin = if self.is_depthwise { 1 } else { self.c_in as u64 };
        self.c_out as u64 * cin * (self.kernel as u64).pow(2)
    }

    /// Output feature-map spatial size for this layer.
    pub fn fmap_out(&self) -> usize {
        (self.fmap + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let dims: [(usize, &'static str); 5] = [
            (self.c_in, "c_in"),
            (self.c_out, "c_out"),
            (self.kernel, "kernel"),
            (self.stride, "stride"),
            (self.fmap, "fmap"),
        ];
        for (v, field) in dims {
            if v == 0 {
                return Err(WorkloadError::Field { index: self.index, field });
            }
        }
        if self.fmap + 2 * self.padding < self.kernel {
            return Err(WorkloadError::Invariant {
                index: self.index,
                reason: format!(
                    "kernel {} exceeds padded feature map {}",
                    self.kernel,
                    self.fmap + 2 * self.padding
                ),
            });
        }
        if self.is_depthwise && self.c_in != self.c_out {
            return Err(WorkloadError::Invariant {
                index: self.index,
                reason: "depthwise layer requires c_in == c_out".into(),
            });
        }
        Ok(())
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.layers.is_empty() {
            return Err(WorkloadError::Empty(self.name.clone()));
        }
        for (pos, layer) in self.layers.iter().enumerate() {
            if layer.index != pos + 1 {
                return Err(WorkloadError::Invariant {
                    index: layer.index,
                    reason: format!("layer indices must be contiguous from 1, found {} at position {}", layer.index, pos + 1),
                });
            }
            layer.validate()?;
        }
        // Channel compatibility between producer and consumer. Shortcut
        // layers tap an older activation, so pairs touching one are exempt.
        for pair in self.layers.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if !a.is_sc_or_dw && !b.is_sc_or_dw && b.c_in != a.c_out && b.fmap > 1 {
                return Err(WorkloadError::Invariant {
                    index: b.index,
                    reason: format!("c_in {} does not match previous c_out {}", b.c_in, a.c_out),
                });
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.n_params()).sum()
    }
}

/// Parse a network descriptor (TOML, one `[[layers]]` table per layer) and
/// validate it. See `configs/` in the repository for the documented schema.
pub fn load_network(descriptor_text: &str) -> Result<NetworkSpec, WorkloadError> {
    let net: NetworkSpec =
        toml::from_str(descriptor_text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
    net.validate()?;
    Ok(net)
}

/// Serialize a network back to descriptor text. Round-trips through
/// [`load_network`] to an identical value.
pub fn save_network(net: &NetworkSpec) -> String {
    toml::to_string_pretty(net).expect("network serialization cannot fail")
}

/// GEMM shape of a layer after im2col. Depthwise layers reduce per channel,
/// so their depth is d*d with one output column per channel.
pub fn im2col_dims(layer: &LayerSpec) -> GemmShape {
    let out = layer.fmap_out();
    let depth = if layer.is_depthwise {
        layer.kernel * layer.kernel
    } else {
        layer.c_in * layer.kernel * layer.kernel
    };
    GemmShape {
        rows: out * out,
        depth,
        cols: layer.c_out,
    }
}

/// Return an embedded network by name: `resnet18`, `mobilenetv2` or the
/// 4-layer `synthetic-small` fixture used by fast DSE tests.
pub fn builtin_network(name: &str) -> Result<NetworkSpec, WorkloadError> {
    let net = match name {
        "resnet18" => resnet18(),
        "mobilenetv2" => mobilenet_v2(),
        "synthetic-small" => synthetic_small(),
        other => return Err(WorkloadError::UnknownBuiltin(other.to_string())),
    };
    net.validate()?;
    Ok(net)
}

struct LayerBuilder {
    layers: Vec<LayerSpec>,
}

impl LayerBuilder {
    fn new() -> Self {
        Self { layers: Vec::new() }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, c_in: usize, c_out: usize, kernel: usize, stride: usize, fmap: usize, padding: usize) -> &mut LayerSpec {
        self.layers.push(LayerSpec {
            index: self.layers.len() + 1,
            c_in,
            c_out,
            kernel,
            stride,
            fmap,
            padding,
            is_sc_or_dw: false,
            is_depthwise: false,
            is_first_or_last: false,
        });
        self.layers.last_mut().unwrap()
    }

    fn shortcut(&mut self, c_in: usize, c_out: usize, stride: usize, fmap: usize) {
        self.conv(c_in, c_out, 1, stride, fmap, 0).is_sc_or_dw = true;
    }

    fn depthwise(&mut self, channels: usize, stride: usize, fmap: usize) {
        let l = self.conv(channels, channels, 3, stride, fmap, 1);
        l.is_sc_or_dw = true;
        l.is_depthwise = true;
    }

    fn fc(&mut self, c_in: usize, c_out: usize) {
        self.conv(c_in, c_out, 1, 1, 1, 0);
    }

    fn finish(mut self, name: &str) -> NetworkSpec {
        self.layers.first_mut().unwrap().is_first_or_last = true;
        self.layers.last_mut().unwrap().is_first_or_last = true;
        NetworkSpec {
            name: name.to_string(),
            layers: self.layers,
        }
    }
}

/// Standard ResNet-18 topology for 224x224 inputs: the stem convolution,
/// sixteen 3x3 convolutions in eight basic blocks, three 1x1 projection
/// shortcuts at the down-sampling blocks (layers 8, 13 and 18) and the final
/// classifier, 21 layers total.
fn resnet18() -> NetworkSpec {
    let mut b = LayerBuilder::new();
    b.conv(3, 64, 7, 2, 224, 3); // 1: stem, output 112 then pooled to 56
    for _ in 0..2 {
        b.conv(64, 64, 3, 1, 56, 1); // 2-5
        b.conv(64, 64, 3, 1, 56, 1);
    }
    b.conv(64, 128, 3, 2, 56, 1); // 6
    b.conv(128, 128, 3, 1, 28, 1); // 7
    b.shortcut(64, 128, 2, 56); // 8
    b.conv(128, 128, 3, 1, 28, 1); // 9
    b.conv(128, 128, 3, 1, 28, 1); // 10
    b.conv(128, 256, 3, 2, 28, 1); // 11
    b.conv(256, 256, 3, 1, 14, 1); // 12
    b.shortcut(128, 256, 2, 28); // 13
    b.conv(256, 256, 3, 1, 14, 1); // 14
    b.conv(256, 256, 3, 1, 14, 1); // 15
    b.conv(256, 512, 3, 2, 14, 1); // 16
    b.conv(512, 512, 3, 1, 7, 1); // 17
    b.shortcut(256, 512, 2, 14); // 18
    b.conv(512, 512, 3, 1, 7, 1); // 19
    b.conv(512, 512, 3, 1, 7, 1); // 20
    b.fc(512, 1000); // 21
    b.finish("resnet18")
}

/// Standard MobileNet-V2 topology for 224x224 inputs: stem, 17 inverted
/// residual blocks (the depthwise 3x3 of each block is flagged), the final
/// 1x1 expansion and the classifier, 53 layers total.
fn mobilenet_v2() -> NetworkSpec {
    let mut b = LayerBuilder::new();
    b.conv(3, 32, 3, 2, 224, 1); // stem, output 112

    // (expansion t, output channels, repeats, first stride)
    let blocks: [(usize, usize, usize, usize); 7] = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];
    let mut c_in = 32;
    let mut fmap = 112;
    for (t, c_out, n, first_stride) in blocks {
        for rep in 0..n {
            let stride = if rep == 0 { first_stride } else { 1 };
            let hidden = c_in * t;
            if t != 1 {
                b.conv(c_in, hidden, 1, 1, fmap, 0); // pointwise expand
            }
            b.depthwise(hidden, stride, fmap);
            fmap = (fmap + 2 - 3) / stride + 1;
            b.conv(hidden, c_out, 1, 1, fmap, 0); // pointwise project
            c_in = c_out;
        }
    }
    b.conv(320, 1280, 1, 1, 7, 0);
    b.fc(1280, 1000);
    b.finish("mobilenetv2")
}

/// Tiny 4-layer fixture (< 1e5 parameters) for fast exploration tests.
fn synthetic_small() -> NetworkSpec {
    let mut b = LayerBuilder::new();
    b.conv(3, 8, 3, 1, 16, 1);
    b.conv(8, 16, 3, 1, 16, 1);
    b.conv(16, 32, 3, 2, 16, 1);
    b.fc(32, 10);
    b.finish("synthetic-small")
}
