use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{ConvSpec, NodeId, NormSpec, ParamTensor, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::field::Image;

/// Shape of a residual encoder-decoder.
///
/// `widths[i]` is the channel count after down block `i`; the decoder mirrors
/// the encoder, so there are as many up blocks as down blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub stem_width: usize,
    pub widths: Vec<usize>,
    pub num_rbs: usize,
    pub kernel: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_size: 64,
            stem_width: 8,
            widths: vec![16, 32, 64],
            num_rbs: 1,
            kernel: 3,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// 4 down / 4 up / 2 residual blocks at 256x256.
    pub fn paper_parity() -> Self {
        NetworkConfig {
            input_size: 256,
            stem_width: 16,
            widths: vec![32, 64, 128, 256],
            num_rbs: 2,
            kernel: 3,
            seed: 0,
        }
    }

    pub fn num_drbs(&self) -> usize {
        self.widths.len()
    }

    pub fn num_urbs(&self) -> usize {
        self.widths.len()
    }

    pub fn bottleneck_size(&self) -> usize {
        self.input_size >> self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::param("widths", "at least one down block is required"));
        }
        if self.widths.len() >= usize::BITS as usize || self.input_size % (1usize << self.widths.len()) != 0 || self.bottleneck_size() == 0 {
            return Err(Error::param(
                "input_size",
                format!("{} is not divisible by 2^{}", self.input_size, self.widths.len()),
            ));
        }
        if self.stem_width == 0 || self.widths.contains(&0) {
            return Err(Error::param("widths", "channel counts must be positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::param("kernel", format!("{} is not odd", self.kernel)));
        }
        Ok(())
    }

    /// `key=value` lines, parsed back by [`NetworkConfig::parse`].
    pub fn to_text(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!(
            "input_size={}\nstem_width={}\nwidths={}\nnum_rbs={}\nkernel={}\nseed={}\n",
            self.input_size,
            self.stem_width,
            widths.join(","),
            self.num_rbs,
            self.kernel,
            self.seed
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = NetworkConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::CorruptCheckpoint(format!("config line `{line}`")))?;
            let bad = || Error::CorruptCheckpoint(format!("config value `{line}`"));
            match key {
                "input_size" => config.input_size = value.parse().map_err(|_| bad())?,
                "stem_width" => config.stem_width = value.parse().map_err(|_| bad())?,
                "widths" => {
                    config.widths = value
                        .split(',')
                        .map(|w| w.trim().parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
                "num_rbs" => config.num_rbs = value.parse().map_err(|_| bad())?,
                "kernel" => config.kernel = value.parse().map_err(|_| bad())?,
                "seed" => config.seed = value.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitRecord {
    pub scheme: String,
    pub seed: u64,
}

/// Trainable state of a network together with the config that shaped it.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub tensors: Vec<ParamTensor>,
    pub init: InitRecord,
}

impl NetworkParams {
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvNorm {
    pub conv: ConvSpec,
    pub norm: NormSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DownBlock {
    pub first: ConvNorm,
    pub second: ConvNorm,
    pub shortcut: ConvSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpBlock {
    pub first: ConvNorm,
    pub merge: ConvNorm,
    pub shortcut: ConvSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResBlock {
    pub first: ConvNorm,
    pub second: ConvNorm,
}

/// Layer graph with every layer bound to its parameter slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub stem: ConvNorm,
    pub down: Vec<DownBlock>,
    pub up: Vec<UpBlock>,
    pub tail: Vec<ResBlock>,
    pub head: ConvSpec,
}

struct Builder {
    tensors: Vec<ParamTensor>,
    kernel: usize,
}

impl Builder {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, with_bias: bool) -> ConvSpec {
        let weight = self.tensors.len();
        self.tensors.push(ParamTensor {
            name: format!("{name}.weight"),
            shape: vec![cout, cin, kernel, kernel],
            data: vec![0.0; cout * cin * kernel * kernel],
        });
        if with_bias {
            self.tensors.push(ParamTensor {
                name: format!("{name}.bias"),
                shape: vec![cout],
                data: vec![0.0; cout],
            });
        }
        ConvSpec {
            weight,
            bias: with_bias.then_some(weight + 1),
            cin,
            cout,
            kernel,
            stride,
        }
    }

    fn norm(&mut self, name: &str, channels: usize) -> NormSpec {
        let gamma = self.tensors.len();
        self.tensors.push(ParamTensor {
            name: format!("{name}.gamma"),
            shape: vec![channels],
            data: vec![1.0; channels],
        });
        self.tensors.push(ParamTensor {
            name: format!("{name}.beta"),
            shape: vec![channels],
            data: vec![0.0; channels],
        });
        NormSpec {
            gamma,
            beta: gamma + 1,
            channels,
        }
    }

    fn conv_norm(&mut self, name: &str, cin: usize, cout: usize, stride: usize) -> ConvNorm {
        let conv = self.conv(&format!("{name}.conv"), cin, cout, self.kernel, stride, false);
        let norm = self.norm(&format!("{name}.norm"), cout);
        ConvNorm { conv, norm }
    }
}

impl Architecture {
    fn layout(config: &NetworkConfig) -> Result<(Architecture, Vec<ParamTensor>)> {
        config.validate()?;
        let mut b = Builder {
            tensors: Vec::new(),
            kernel: config.kernel,
        };
        let stem = b.conv_norm("stem", 1, config.stem_width, 1);
        let mut levels = vec![config.stem_width];
        levels.extend_from_slice(&config.widths);

        let mut down = Vec::new();
        for (i, pair) in levels.windows(2).enumerate() {
            let (cin, cout) = (pair[0], pair[1]);
            let name = format!("drb{i}");
            down.push(DownBlock {
                first: b.conv_norm(&format!("{name}.a"), cin, cout, 2),
                second: b.conv_norm(&format!("{name}.b"), cout, cout, 1),
                shortcut: b.conv(&format!("{name}.skip"), cin, cout, 1, 2, true),
            });
        }

        let mut up = Vec::new();
        for i in (0..config.widths.len()).rev() {
            let (cin, cout) = (levels[i + 1], levels[i]);
            let name = format!("urb{i}");
            up.push(UpBlock {
                first: b.conv_norm(&format!("{name}.a"), cin, cout, 1),
                merge: b.conv_norm(&format!("{name}.b"), 2 * cout, cout, 1),
                shortcut: b.conv(&format!("{name}.skip"), cin, cout, 1, 1, true),
            });
        }

        let width = config.stem_width;
        let tail = (0..config.num_rbs)
            .map(|i| ResBlock {
                first: b.conv_norm(&format!("rb{i}.a"), width, width, 1),
                second: b.conv_norm(&format!("rb{i}.b"), width, width, 1),
            })
            .collect();
        let head = b.conv("head", width, 1, config.kernel, 1, true);
        Ok((Architecture { stem, down, up, tail, head }, b.tensors))
    }

    pub fn from_config(config: &NetworkConfig) -> Result<Self> {
        Ok(Self::layout(config)?.0)
    }

    fn conv_norm(tape: &mut Tape, layer: &ConvNorm, x: NodeId) -> Result<NodeId> {
        let y = tape.conv(layer.conv, x)?;
        tape.norm(layer.norm, y)
    }

    /// Records the forward pass on `tape` and returns the output node.
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let h = Self::conv_norm(tape, &self.stem, x)?;
        let mut h = tape.relu(h)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for block in &self.down {
            skips.push(h);
            let a = Self::conv_norm(tape, &block.first, h)?;
            let a = tape.relu(a)?;
            let a = Self::conv_norm(tape, &block.second, a)?;
            let s = tape.conv(block.shortcut, h)?;
            let sum = tape.add(a, s)?;
            h = tape.relu(sum)?;
        }
        for block in &self.up {
            let skip = skips.pop().expect("one skip per down block");
            let u = tape.upsample(h)?;
            let a = Self::conv_norm(tape, &block.first, u)?;
            let a = tape.relu(a)?;
            let cat = tape.concat(a, skip)?;
            let a = Self::conv_norm(tape, &block.merge, cat)?;
            let s = tape.conv(block.shortcut, u)?;
            let sum = tape.add(a, s)?;
            h = tape.relu(sum)?;
        }
        for block in &self.tail {
            let a = Self::conv_norm(tape, &block.first, h)?;
            let a = tape.relu(a)?;
            let a = Self::conv_norm(tape, &block.second, a)?;
            let sum = tape.add(a, h)?;
            h = tape.relu(sum)?;
        }
        tape.conv(self.head, h)
    }
}

/// Builds the layer graph and a He-normal initialization seeded by
/// `config.seed`. Biases and norm shifts start at zero, norm scales at one.
pub fn build_phenn(config: &NetworkConfig) -> Result<(NetworkParams, Architecture)> {
    let (arch, mut tensors) = Architecture::layout(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for t in tensors.iter_mut().filter(|t| t.name.ends_with(".weight")) {
        let fan_in: usize = t.shape[1..].iter().product();
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        for v in &mut t.data {
            *v = normal.sample(&mut rng);
        }
    }
    let params = NetworkParams {
        config: config.clone(),
        tensors,
        init: InitRecord {
            scheme: "he-normal".into(),
            seed: config.seed,
        },
    };
    Ok((params, arch))
}

/// Checks that `params` has exactly the tensors `config` implies.
pub fn check_params(params: &NetworkParams) -> Result<Architecture> {
    let (arch, expected) = Architecture::layout(&params.config)?;
    if expected.len() != params.tensors.len() {
        return Err(Error::ConfigMismatch(format!(
            "{} parameter tensors, config implies {}",
            params.tensors.len(),
            expected.len()
        )));
    }
    for (e, t) in expected.iter().zip(&params.tensors) {
        if e.name != t.name || e.shape != t.shape || t.data.len() != e.data.len() {
            return Err(Error::ConfigMismatch(format!("tensor `{}` {:?} vs expected `{}` {:?}", t.name, t.shape, e.name, e.shape)));
        }
    }
    if !params.is_finite() {
        return Err(Error::Degenerate("non-finite network parameters"));
    }
    Ok(arch)
}

/// Forward pass on a batch of single-channel inputs.
pub fn forward_batch(params: &NetworkParams, arch: &Architecture, input: Tensor) -> Result<Tensor> {
    let n = params.config.input_size;
    let [_, c, h, w] = input.shape();
    if c != 1 || h != n || w != n {
        return Err(Error::ShapeMismatch {
            context: "network input".into(),
            expected: vec![1, n, n],
            got: vec![c, h, w],
        });
    }
    let mut tape = Tape::new(&params.tensors);
    let x = tape.input(input)?;
    let y = arch.forward(&mut tape, x)?;
    Ok(tape.into_value(y))
}

/// Reconstructs a phase map from a preprocessed intensity.
pub fn infer(params: &NetworkParams, intensity: &Image) -> Result<Image> {
    let arch = check_params(params)?;
    infer_with(params, &arch, intensity)
}

pub fn infer_with(params: &NetworkParams, arch: &Architecture, intensity: &Image) -> Result<Image> {
    let out = forward_batch(params, arch, Tensor::from_image(intensity))?;
    out.to_image(0, 0)?.with_pitch(intensity.pitch())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkConfig {
        NetworkConfig {
            input_size: 16,
            stem_width: 2,
            widths: vec![3, 4],
            num_rbs: 1,
            kernel: 3,
            seed: 5,
        }
    }

    #[test]
    fn validation() {
        let mut c = NetworkConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.bottleneck_size(), 8);
        c.input_size = 60;
        assert!(c.validate().is_err());
        c.input_size = 64;
        c.kernel = 2;
        assert!(c.validate().is_err());
        c.kernel = 3;
        c.widths.clear();
        assert!(c.validate().is_err());
        assert!(NetworkConfig::paper_parity().validate().is_ok());
        assert_eq!(NetworkConfig::paper_parity().bottleneck_size(), 16);
    }

    #[test]
    fn config_text_round_trip() {
        let c = NetworkConfig::paper_parity();
        assert_eq!(NetworkConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let (a, _) = build_phenn(&small()).unwrap();
        let (b, _) = build_phenn(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 6;
        let (c, _) = build_phenn(&other).unwrap();
        assert_ne!(a.tensors, c.tensors);
    }

    #[test]
    fn bottleneck_is_eighth_of_input() {
        let config = NetworkConfig::default();
        let (params, arch) = build_phenn(&config).unwrap();
        let mut tape = Tape::new(&params.tensors);
        let x = tape.input(Tensor::zeros([1, 1, 64, 64])).unwrap();
        let mut h = tape.conv(arch.stem.conv, x).unwrap();
        for block in &arch.down {
            h = tape.conv(block.shortcut, h).unwrap();
        }
        assert_eq!(tape.value(h).shape(), [1, 64, 8, 8]);
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let (mut params, arch) = build_phenn(&small()).unwrap();
        for name in ["head.weight", "head.bias"] {
            params.get_mut(name).unwrap().data.fill(0.0);
        }
        let out = forward_batch(&params, &arch, Tensor::zeros([1, 1, 16, 16])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn infer_rejects_wrong_size() {
        let (params, _) = build_phenn(&small()).unwrap();
        let img = Image::zeros(32, 32, None).unwrap();
        assert!(matches!(infer(&params, &img), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn check_params_detects_foreign_layout() {
        let (mut params, _) = build_phenn(&small()).unwrap();
        assert!(check_params(&params).is_ok());
        params.config.input_size = 32;
        assert!(check_params(&params).is_ok());
        params.config.stem_width = 3;
        assert!(matches!(check_params(&params), Err(Error::ConfigMismatch(_))));
    }
}
