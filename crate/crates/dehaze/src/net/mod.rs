//! Generator/discriminator construction for every studied configuration.

mod build;
mod config;

pub use build::{
    build_discriminator, build_generator, cam_block, composite_checks, csp_block,
    discriminator_channels, gradcheck_scale, sam_block, spp_block,
};
pub use config::{
    config_to_string, parse_config, preset, preset_name, AttentionKind, BottleneckKind, CoreKind,
    NetworkConfig, ALL_PRESETS, LEAKY_SLOPE, TABLE1_PRESETS,
};
