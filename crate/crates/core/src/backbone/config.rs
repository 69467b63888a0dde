use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub feature_maps: usize,
    pub kernel_size: usize,
}

/// Input-independent part of the CNN definition (what a config file sets).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnArchitecture {
    pub conv_layers: Vec<ConvLayer>,
    pub pool_size: usize,
    pub fc_layers: Vec<usize>,
    pub dropout_rate: f64,
    /// Group-norm groups for every conv layer; `None` uses `min(8, maps)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_norm_groups: Option<usize>,
}

impl CnnArchitecture {
    /// 3 conv layers x 32 maps, 2 hidden layers x 64 units.
    pub fn desk() -> Self {
        Self {
            conv_layers: vec![
                ConvLayer {
                    feature_maps: 32,
                    kernel_size: 5
                };
                3
            ],
            pool_size: 2,
            fc_layers: vec![64, 64],
            dropout_rate: 0.5,
            group_norm_groups: None,
        }
    }

    /// 3 conv layers x 256 maps, 2 hidden layers x 128 units.
    pub fn paper_scale() -> Self {
        Self {
            conv_layers: vec![
                ConvLayer {
                    feature_maps: 256,
                    kernel_size: 5
                };
                3
            ],
            fc_layers: vec![128, 128],
            ..Self::desk()
        }
    }
}

impl Default for CnnArchitecture {
    fn default() -> Self {
        Self::desk()
    }
}

/// Complete CNN definition including the input frame shape and class count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_length: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub architecture: CnnArchitecture,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ConvGeom {
    pub in_channels: usize,
    pub in_len: usize,
    pub maps: usize,
    pub kernel: usize,
    pub out_len: usize,
    pub groups: usize,
    pub pool: usize,
    pub pooled_len: usize,
    pub w: usize,
    pub b: usize,
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DenseGeom {
    pub input: usize,
    pub output: usize,
    pub w: usize,
    pub b: usize,
    pub relu: bool,
}

/// Name, shape and position of one parameter tensor inside the flat view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub convs: Vec<ConvGeom>,
    /// Hidden layers followed by the output layer.
    pub dense: Vec<DenseGeom>,
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl CnnConfig {
    pub fn new(
        architecture: CnnArchitecture,
        input_length: usize,
        input_channels: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let cfg = Self {
            input_length,
            input_channels,
            num_classes,
            architecture,
        };
        cfg.layout()?;
        Ok(cfg)
    }

    /// Canonical text form, stored in model files and compared on load.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Corrupt(format!("bad config descriptor: {e}")))?;
        cfg.layout()?;
        Ok(cfg)
    }

    pub fn param_count(&self) -> usize {
        self.layout().map(|l| l.total).unwrap_or(0)
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        self.layout().map(|l| l.tensors).unwrap_or_default()
    }

    pub(crate) fn layout(&self) -> Result<Layout> {
        let arch = &self.architecture;
        let bad = |msg: String| Err(Error::Config(format!("cnn: {msg}")));
        if self.input_length == 0 || self.input_channels == 0 {
            return bad("input shape must be nonzero".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need >= 2 classes, got {}", self.num_classes));
        }
        if arch.conv_layers.is_empty() || arch.fc_layers.is_empty() {
            return bad("need at least one conv layer and one fully-connected layer".into());
        }
        if arch.pool_size == 0 {
            return bad("pool_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&arch.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", arch.dropout_rate));
        }

        let mut tensors = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, shape: Vec<usize>| {
            let len = shape.iter().product();
            tensors.push(TensorSpec {
                name,
                shape,
                offset,
                len,
            });
            offset += len;
            offset - len
        };

        let mut convs = Vec::new();
        let (mut channels, mut len) = (self.input_channels, self.input_length);
        for (i, layer) in arch.conv_layers.iter().enumerate() {
            let (maps, kernel) = (layer.feature_maps, layer.kernel_size);
            if maps == 0 || kernel == 0 {
                return bad(format!("conv layer {i}: maps and kernel must be >= 1"));
            }
            if kernel > len {
                return bad(format!("conv layer {i}: kernel {kernel} exceeds temporal length {len}"));
            }
            let out_len = len - kernel + 1;
            let pooled_len = out_len / arch.pool_size;
            if pooled_len == 0 {
                return bad(format!(
                    "conv layer {i}: length {out_len} is shorter than the pool size {}",
                    arch.pool_size
                ));
            }
            let groups = arch.group_norm_groups.unwrap_or(maps.min(8));
            if groups == 0 || maps % groups != 0 {
                return bad(format!("conv layer {i}: {groups} groups do not divide {maps} maps"));
            }
            let w = push(format!("conv{i}.weight"), vec![maps, channels, kernel]);
            let b = push(format!("conv{i}.bias"), vec![maps]);
            let gamma = push(format!("norm{i}.scale"), vec![maps]);
            let beta = push(format!("norm{i}.shift"), vec![maps]);
            convs.push(ConvGeom {
                in_channels: channels,
                in_len: len,
                maps,
                kernel,
                out_len,
                groups,
                pool: arch.pool_size,
                pooled_len,
                w,
                b,
                gamma,
                beta,
            });
            channels = maps;
            len = pooled_len;
        }

        let mut dense = Vec::new();
        let mut input = channels * len;
        for (i, &width) in arch.fc_layers.iter().enumerate() {
            if width == 0 {
                return bad(format!("fc layer {i} has zero width"));
            }
            let w = push(format!("fc{i}.weight"), vec![width, input]);
            let b = push(format!("fc{i}.bias"), vec![width]);
            dense.push(DenseGeom {
                input,
                output: width,
                w,
                b,
                relu: true,
            });
            input = width;
        }
        let w = push("out.weight".into(), vec![self.num_classes, input]);
        let b = push("out.bias".into(), vec![self.num_classes]);
        dense.push(DenseGeom {
            input,
            output: self.num_classes,
            w,
            b,
            relu: false,
        });

        Ok(Layout {
            convs,
            dense,
            tensors,
            total: offset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_layout_for_forty_sample_frames() {
        let cfg = CnnConfig::new(CnnArchitecture::desk(), 40, 6, 5).unwrap();
        let layout = cfg.layout().unwrap();
        let lens: Vec<(usize, usize)> = layout.convs.iter().map(|c| (c.out_len, c.pooled_len)).collect();
        assert_eq!(lens, vec![(36, 18), (14, 7), (3, 1)]);
        assert_eq!(layout.dense[0].input, 32);
        let names: Vec<&str> = layout.tensors.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(&names[..4], &["conv0.weight", "conv0.bias", "norm0.scale", "norm0.shift"]);
        assert_eq!(names.last(), Some(&"out.bias"));
        let last = layout.tensors.last().unwrap();
        assert_eq!(last.offset + last.len, layout.total);
    }

    #[test]
    fn rejects_impossible_geometry() {
        assert!(CnnConfig::new(CnnArchitecture::desk(), 30, 6, 5).is_err());
        let mut arch = CnnArchitecture::desk();
        arch.group_norm_groups = Some(5);
        assert!(CnnConfig::new(arch, 40, 6, 5).is_err());
        let mut arch = CnnArchitecture::desk();
        arch.fc_layers.clear();
        assert!(CnnConfig::new(arch, 40, 6, 5).is_err());
        assert!(CnnConfig::new(CnnArchitecture::desk(), 40, 6, 1).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let cfg = CnnConfig::new(CnnArchitecture::paper_scale(), 30, 79, 18);
        // kernel 5 with pooling after every layer needs more than 30 samples
        assert!(cfg.is_err());
        let cfg = CnnConfig::new(CnnArchitecture::paper_scale(), 64, 79, 18).unwrap();
        assert_eq!(CnnConfig::from_descriptor(&cfg.descriptor()).unwrap(), cfg);
    }
}
