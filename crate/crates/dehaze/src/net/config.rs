//! Network configuration: field-level knobs, the named presets, and the
//! plain-text key-value config format.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::ActivationKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoreKind {
    /// Plain encoder-decoder trained with the reconstruction loss only.
    Segmentation,
    /// Adversarially trained generator with a discriminator.
    Generative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BottleneckKind {
    Plain,
    Spp,
    Csp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    None,
    Sam,
    Cam,
}

impl fmt::Display for CoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreKind::Segmentation => write!(f, "segmentation"),
            CoreKind::Generative => write!(f, "generative"),
        }
    }
}

impl fmt::Display for BottleneckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BottleneckKind::Plain => write!(f, "plain"),
            BottleneckKind::Spp => write!(f, "spp"),
            BottleneckKind::Csp => write!(f, "csp"),
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionKind::None => write!(f, "none"),
            AttentionKind::Sam => write!(f, "sam"),
            AttentionKind::Cam => write!(f, "cam"),
        }
    }
}

pub const LEAKY_SLOPE: f32 = 0.2;

/// Every architectural knob of the generator/discriminator pair.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub core: CoreKind,
    pub input_channels: usize,
    pub bottleneck: BottleneckKind,
    pub attention: AttentionKind,
    pub activation: ActivationKind,
    pub extra_convs_per_stage: usize,
    pub stage_kernel: usize,
    pub base_width: usize,
    pub depth: usize,
    /// Pyramid window sizes for the SPP bottleneck.
    pub spp_kernels: Vec<usize>,
    /// Feed the discriminator the candidate image together with the
    /// transmission channel (4-channel input) instead of the candidate alone.
    pub conditional_discriminator: bool,
}

impl Default for NetworkConfig {
    /// Full-scale EDN-GTM settings.
    fn default() -> Self {
        NetworkConfig {
            core: CoreKind::Generative,
            input_channels: 4,
            bottleneck: BottleneckKind::Spp,
            attention: AttentionKind::None,
            activation: ActivationKind::Swish,
            extra_convs_per_stage: 1,
            stage_kernel: 3,
            base_width: 64,
            depth: 4,
            spp_kernels: vec![5, 9, 13],
            conditional_discriminator: true,
        }
    }
}

impl NetworkConfig {
    /// Desk-scale variant: narrower, shallower, with pyramid windows small
    /// enough for the shrunken bottleneck extent.
    pub fn toy(mut self) -> Self {
        self.base_width = 16;
        self.depth = 3;
        self.spp_kernels = vec![3, 5];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 3 && self.input_channels != 4 {
            return Err(Error::Config(format!(
                "input_channels must be 3 or 4, got {}",
                self.input_channels
            )));
        }
        if self.depth < 2 {
            return Err(Error::Config(format!("depth must be ≥ 2, got {}", self.depth)));
        }
        if self.stage_kernel.is_multiple_of(2) || self.stage_kernel == 0 {
            return Err(Error::Config(format!(
                "stage_kernel must be odd ≥ 1, got {}",
                self.stage_kernel
            )));
        }
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be ≥ 1".into()));
        }
        if self.bottleneck == BottleneckKind::Spp {
            if self.spp_kernels.is_empty() {
                return Err(Error::Config("spp_kernels must not be empty".into()));
            }
            if let Some(&k) = self.spp_kernels.iter().find(|&&k| k % 2 == 0 || k == 0) {
                return Err(Error::Config(format!("spp kernels must be odd ≥ 1, got {k}")));
            }
        }
        self.activation.validate()?;
        Ok(())
    }
}

/// The six configurations reported in the results table, in table order.
pub const TABLE1_PRESETS: [&str; 6] = [
    "S-U-Net",
    "G-U-Net",
    "G-U-Net 4-C",
    "SPP G-U-Net 4-C (ReLU)",
    "SPP G-U-Net 4-C (Swish)",
    "EDN-GTM",
];

/// All twelve studied configurations, in study order.
pub const ALL_PRESETS: [&str; 12] = [
    "S-U-Net",
    "G-U-Net",
    "G-U-Net 4-C",
    "CSP G-U-Net 4-C",
    "SPP G-U-Net 4-C (ReLU)",
    "SPP G-U-Net 4-C SAM",
    "SPP G-U-Net 4-C CAM",
    "SPP G-U-Net 4-C (LeakyReLU)",
    "SPP G-U-Net 4-C (Swish)",
    "SPP G-U-Net 4-C (Mish)",
    "EDN-GTM",
    "EDN-GTM (k5)",
];

/// Full-scale configuration for a preset name.
pub fn preset(name: &str) -> Option<NetworkConfig> {
    let base = NetworkConfig {
        core: CoreKind::Generative,
        input_channels: 4,
        bottleneck: BottleneckKind::Spp,
        attention: AttentionKind::None,
        activation: ActivationKind::Relu,
        extra_convs_per_stage: 0,
        ..NetworkConfig::default()
    };
    let cfg = match name {
        "S-U-Net" => NetworkConfig {
            core: CoreKind::Segmentation,
            input_channels: 3,
            bottleneck: BottleneckKind::Plain,
            ..base
        },
        "G-U-Net" => NetworkConfig {
            input_channels: 3,
            bottleneck: BottleneckKind::Plain,
            ..base
        },
        "G-U-Net 4-C" => NetworkConfig { bottleneck: BottleneckKind::Plain, ..base },
        "CSP G-U-Net 4-C" => NetworkConfig { bottleneck: BottleneckKind::Csp, ..base },
        "SPP G-U-Net 4-C (ReLU)" => base,
        "SPP G-U-Net 4-C SAM" => NetworkConfig { attention: AttentionKind::Sam, ..base },
        "SPP G-U-Net 4-C CAM" => NetworkConfig { attention: AttentionKind::Cam, ..base },
        "SPP G-U-Net 4-C (LeakyReLU)" => NetworkConfig {
            activation: ActivationKind::LeakyRelu { slope: LEAKY_SLOPE },
            ..base
        },
        "SPP G-U-Net 4-C (Swish)" => NetworkConfig { activation: ActivationKind::Swish, ..base },
        "SPP G-U-Net 4-C (Mish)" => NetworkConfig { activation: ActivationKind::Mish, ..base },
        "EDN-GTM" => NetworkConfig {
            activation: ActivationKind::Swish,
            extra_convs_per_stage: 1,
            ..base
        },
        "EDN-GTM (k5)" => NetworkConfig {
            activation: ActivationKind::Swish,
            extra_convs_per_stage: 1,
            stage_kernel: 5,
            ..base
        },
        _ => return None,
    };
    Some(cfg)
}

/// Inverse of `preset`: matches on the architecture-identity fields (scale
/// knobs — width, depth, pyramid sizes, conditioning — do not change which
/// named design a config is).
pub fn preset_name(cfg: &NetworkConfig) -> Option<&'static str> {
    ALL_PRESETS.iter().copied().find(|name| {
        let p = preset(name).expect("all listed presets resolve");
        p.core == cfg.core
            && p.input_channels == cfg.input_channels
            && p.bottleneck == cfg.bottleneck
            && p.attention == cfg.attention
            && p.activation == cfg.activation
            && p.extra_convs_per_stage == cfg.extra_convs_per_stage
            && p.stage_kernel == cfg.stage_kernel
    })
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// Parse the plain-text key-value config format.
///
/// One `key = value` pair per line; `#` starts a comment; a `preset` key
/// loads a named preset first, and later keys override individual fields.
/// Unknown and duplicate keys are errors.
pub fn parse_config(text: &str) -> Result<NetworkConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if pairs.iter().any(|(prev, _)| *prev == k) {
            return Err(Error::Config(format!("duplicate key {k:?}")));
        }
        pairs.push((k, v));
    }

    let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
        Some((_, name)) => {
            preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?
        }
        None => NetworkConfig::default(),
    };
    // leaky_relu reads its slope from a separate key; apply activation last
    let mut leaky_slope = LEAKY_SLOPE;
    let mut activation: Option<String> = None;
    for (k, v) in &pairs {
        match k.as_str() {
            "preset" => {}
            "core" => {
                cfg.core = match v.as_str() {
                    "segmentation" => CoreKind::Segmentation,
                    "generative" => CoreKind::Generative,
                    _ => return Err(Error::Config(format!("core: unknown value {v:?}"))),
                }
            }
            "input_channels" => cfg.input_channels = parse_usize(k, v)?,
            "bottleneck" => {
                cfg.bottleneck = match v.as_str() {
                    "plain" => BottleneckKind::Plain,
                    "spp" => BottleneckKind::Spp,
                    "csp" => BottleneckKind::Csp,
                    _ => return Err(Error::Config(format!("bottleneck: unknown value {v:?}"))),
                }
            }
            "attention" => {
                cfg.attention = match v.as_str() {
                    "none" => AttentionKind::None,
                    "sam" => AttentionKind::Sam,
                    "cam" => AttentionKind::Cam,
                    _ => return Err(Error::Config(format!("attention: unknown value {v:?}"))),
                }
            }
            "activation" => activation = Some(v.clone()),
            "leaky_slope" => {
                leaky_slope = v
                    .parse()
                    .map_err(|_| Error::Config(format!("leaky_slope: expected a number, got {v:?}")))?
            }
            "extra_convs_per_stage" => cfg.extra_convs_per_stage = parse_usize(k, v)?,
            "stage_kernel" => cfg.stage_kernel = parse_usize(k, v)?,
            "base_width" => cfg.base_width = parse_usize(k, v)?,
            "depth" => cfg.depth = parse_usize(k, v)?,
            "spp_kernels" => {
                cfg.spp_kernels = v
                    .split(',')
                    .map(|p| parse_usize(k, p.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "conditional_discriminator" => cfg.conditional_discriminator = parse_bool(k, v)?,
            _ => return Err(Error::Config(format!("unknown key {k:?}"))),
        }
    }
    if let Some(act) = activation {
        cfg.activation = match act.as_str() {
            "relu" => ActivationKind::Relu,
            "leaky_relu" => ActivationKind::LeakyRelu { slope: leaky_slope },
            "swish" => ActivationKind::Swish,
            "mish" => ActivationKind::Mish,
            _ => return Err(Error::Config(format!("activation: unknown value {act:?}"))),
        };
    } else if let ActivationKind::LeakyRelu { slope } = &mut cfg.activation {
        *slope = leaky_slope;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical key-value serialization; `parse_config` inverts it.
pub fn config_to_string(cfg: &NetworkConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("core = {}\n", cfg.core));
    out.push_str(&format!("input_channels = {}\n", cfg.input_channels));
    out.push_str(&format!("bottleneck = {}\n", cfg.bottleneck));
    out.push_str(&format!("attention = {}\n", cfg.attention));
    out.push_str(&format!("activation = {}\n", cfg.activation));
    if let ActivationKind::LeakyRelu { slope } = cfg.activation {
        out.push_str(&format!("leaky_slope = {slope}\n"));
    }
    out.push_str(&format!("extra_convs_per_stage = {}\n", cfg.extra_convs_per_stage));
    out.push_str(&format!("stage_kernel = {}\n", cfg.stage_kernel));
    out.push_str(&format!("base_width = {}\n", cfg.base_width));
    out.push_str(&format!("depth = {}\n", cfg.depth));
    let kernels: Vec<String> = cfg.spp_kernels.iter().map(|k| k.to_string()).collect();
    out.push_str(&format!("spp_kernels = {}\n", kernels.join(", ")));
    out.push_str(&format!("conditional_discriminator = {}\n", cfg.conditional_discriminator));
    out
}
