//! Graph construction for the generator and discriminator, plus the SPP,
//! CSP, and attention building blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AttentionKind, BottleneckKind, CoreKind, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{
    ActivationKind, Graph, GraphBuilder, GraphCheck, GradcheckOpts, NodeId, Shape, Tensor,
};

fn conv_act(
    gb: &mut GraphBuilder,
    x: NodeId,
    out_c: usize,
    k: usize,
    act: ActivationKind,
    name: &str,
) -> Result<NodeId> {
    let pad = (k - 1) / 2;
    let c = gb.conv2d(x, out_c, k, 1, pad, name)?;
    gb.activate(c, act)
}

/// One resolution stage: a width-changing conv followed by
/// `1 + extra_convs_per_stage` width-preserving convs, all activated.
fn stage_convs(
    gb: &mut GraphBuilder,
    mut x: NodeId,
    out_c: usize,
    cfg: &NetworkConfig,
    prefix: &str,
) -> Result<NodeId> {
    for i in 0..2 + cfg.extra_convs_per_stage {
        x = conv_act(gb, x, out_c, cfg.stage_kernel, cfg.activation, &format!("{prefix}.conv{i}"))?;
    }
    Ok(x)
}

/// Pyramid pooling concat: `[x, maxpool(x,k,1,(k−1)/2) for k in kernels]`.
///
/// Windows clip to the feature map (padding cells never win), so kernels
/// larger than the bottleneck extent stay well-defined instead of failing —
/// small training extents remain usable with full-scale pyramid settings.
/// Once a kernel reaches 2·extent−1 every window sees the whole map and the
/// branch becomes a global max pool.
pub(crate) fn spp_concat(
    gb: &mut GraphBuilder,
    x: NodeId,
    kernels: &[usize],
) -> Result<NodeId> {
    let mut out = x;
    for &k in kernels {
        if k % 2 == 0 || k == 0 {
            return Err(Error::Config(format!("spp kernel must be odd ≥ 1, got {k}")));
        }
        let pooled = gb.maxpool(x, k, 1, (k - 1) / 2)?;
        out = gb.concat(out, pooled)?;
    }
    Ok(out)
}

/// Spatial pyramid pooling: pooled pyramid concat fused back to the input
/// channel count by a 1×1 conv.
pub fn spp_block(
    gb: &mut GraphBuilder,
    x: NodeId,
    kernels: &[usize],
    prefix: &str,
) -> Result<NodeId> {
    let c = gb.shape(x).c;
    let cat = spp_concat(gb, x, kernels)?;
    gb.conv2d(cat, c, 1, 1, 0, &format!("{prefix}.fuse"))
}

/// Cross-stage partial block: half the channels pass through two activated
/// 3×3 convs, the other half bypasses untouched; a 1×1 conv fuses.
pub fn csp_block(
    gb: &mut GraphBuilder,
    x: NodeId,
    act: ActivationKind,
    prefix: &str,
) -> Result<NodeId> {
    let c = gb.shape(x).c;
    if !c.is_multiple_of(2) {
        return Err(Error::Config(format!("csp block needs an even channel count, got {c}")));
    }
    let half = c / 2;
    let processed = gb.slice(x, 0, half)?;
    let bypass = gb.slice(x, half, half)?;
    let p1 = conv_act(gb, processed, half, 3, act, &format!("{prefix}.conv0"))?;
    let p2 = conv_act(gb, p1, half, 3, act, &format!("{prefix}.conv1"))?;
    let cat = gb.concat(p2, bypass)?;
    gb.conv2d(cat, c, 1, 1, 0, &format!("{prefix}.fuse"))
}

/// Spatial attention: per-pixel channel mean and max → 7×7 conv to one map
/// → sigmoid → broadcast multiply.
pub fn sam_block(gb: &mut GraphBuilder, x: NodeId, prefix: &str) -> Result<NodeId> {
    let stats = gb.spatial_stats(x);
    let gate = gb.conv2d(stats, 1, 7, 1, 3, &format!("{prefix}.conv"))?;
    let gate = gb.activate(gate, ActivationKind::Sigmoid)?;
    gb.mul(x, gate)
}

/// Channel attention: global average and max pooling through a shared
/// two-layer dense bottleneck (reduction 4), summed → sigmoid → per-channel
/// scale.
pub fn cam_block(
    gb: &mut GraphBuilder,
    x: NodeId,
    act: ActivationKind,
    prefix: &str,
) -> Result<NodeId> {
    let c = gb.shape(x).c;
    let hidden = (c / 4).max(1);
    let (w1, b1) = gb.dense_params(&format!("{prefix}.fc1"), c, hidden);
    let (w2, b2) = gb.dense_params(&format!("{prefix}.fc2"), hidden, c);
    let mut branches = Vec::new();
    for pooled in [gb.global_avg_pool(x), gb.global_max_pool(x)] {
        let h1 = gb.dense_apply(pooled, w1, b1)?;
        let h1 = gb.activate(h1, act)?;
        branches.push(gb.dense_apply(h1, w2, b2)?);
    }
    let sum = gb.add(branches[0], branches[1])?;
    let gate = gb.activate(sum, ActivationKind::Sigmoid)?;
    gb.mul(x, gate)
}

fn check_divisibility(cfg: &NetworkConfig, height: usize, width: usize) -> Result<()> {
    let div = 1usize << cfg.depth;
    if !height.is_multiple_of(div) || !width.is_multiple_of(div) || height == 0 || width == 0 {
        return Err(Error::Config(format!(
            "input extent {height}x{width} must be divisible by 2^depth = {div}"
        )));
    }
    Ok(())
}

/// Shared encoder: `depth` stages of convs + 2×2 max pooling. Returns the
/// post-pool feature and the pre-pool skip features, shallowest first.
fn encoder(
    gb: &mut GraphBuilder,
    mut x: NodeId,
    cfg: &NetworkConfig,
    prefix: &str,
) -> Result<(NodeId, Vec<NodeId>)> {
    let mut skips = Vec::with_capacity(cfg.depth);
    for s in 0..cfg.depth {
        let width = cfg.base_width << s;
        x = stage_convs(gb, x, width, cfg, &format!("{prefix}.enc{s}"))?;
        skips.push(x);
        x = gb.maxpool(x, 2, 2, 0)?;
    }
    Ok((x, skips))
}

/// U-Net-style generator per the configuration. Output is `(n,3,h,w)` in
/// (0,1) via the sigmoid head.
pub fn build_generator(
    cfg: &NetworkConfig,
    height: usize,
    width: usize,
    rng: ChaCha8Rng,
) -> Result<Graph> {
    cfg.validate()?;
    check_divisibility(cfg, height, width)?;
    let mut gb = GraphBuilder::new(rng);
    let input = gb.input(cfg.input_channels, height, width)?;
    let (mut x, skips) = encoder(&mut gb, input, cfg, "g")?;

    let bott_width = cfg.base_width << cfg.depth;
    x = conv_act(&mut gb, x, bott_width, cfg.stage_kernel, cfg.activation, "g.bott.conv0")?;
    match cfg.bottleneck {
        BottleneckKind::Plain | BottleneckKind::Spp => {
            for i in 0..1 + cfg.extra_convs_per_stage {
                let name = format!("g.bott.conv{}", i + 1);
                x = conv_act(&mut gb, x, bott_width, cfg.stage_kernel, cfg.activation, &name)?;
            }
            if cfg.bottleneck == BottleneckKind::Spp {
                x = spp_block(&mut gb, x, &cfg.spp_kernels, "g.spp")?;
            }
        }
        BottleneckKind::Csp => {
            x = csp_block(&mut gb, x, cfg.activation, "g.csp")?;
        }
    }
    match cfg.attention {
        AttentionKind::None => {}
        AttentionKind::Sam => x = sam_block(&mut gb, x, "g.sam")?,
        AttentionKind::Cam => x = cam_block(&mut gb, x, cfg.activation, "g.cam")?,
    }

    for s in (0..cfg.depth).rev() {
        let width = cfg.base_width << s;
        x = gb.upsample2x(x);
        x = conv_act(&mut gb, x, width, cfg.stage_kernel, cfg.activation, &format!("g.dec{s}.up"))?;
        x = gb.concat(x, skips[s])?;
        x = stage_convs(&mut gb, x, width, cfg, &format!("g.dec{s}"))?;
    }
    let head = gb.conv2d(x, 3, 3, 1, 1, "g.head")?;
    let out = gb.activate(head, ActivationKind::Sigmoid)?;
    gb.finish(out)
}

/// Discriminator input channels: the candidate image, plus the transmission
/// channel when the generator is 4-channel and conditioning is on.
pub fn discriminator_channels(cfg: &NetworkConfig) -> usize {
    if cfg.input_channels == 4 && cfg.conditional_discriminator {
        4
    } else {
        3
    }
}

/// Generator-encoder discriminator: the same stage stack, then global
/// average pooling and a dense layer to one raw score per batch item.
pub fn build_discriminator(
    cfg: &NetworkConfig,
    height: usize,
    width: usize,
    rng: ChaCha8Rng,
) -> Result<Graph> {
    cfg.validate()?;
    if cfg.core != CoreKind::Generative {
        return Err(Error::Config(
            "a segmentation-core configuration trains without a discriminator".into(),
        ));
    }
    check_divisibility(cfg, height, width)?;
    let mut gb = GraphBuilder::new(rng);
    let input = gb.input(discriminator_channels(cfg), height, width)?;
    let (x, _skips) = encoder(&mut gb, input, cfg, "d")?;
    let pooled = gb.global_avg_pool(x);
    let score = gb.dense(pooled, 1, "d.head")?;
    gb.finish(score)
}

/// Scale knobs shrunk so a full network fits a 16×16 gradcheck input.
pub fn gradcheck_scale(cfg: &NetworkConfig) -> NetworkConfig {
    NetworkConfig { base_width: 4, depth: 2, spp_kernels: vec![3], ..cfg.clone() }
}

fn check_input(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(Shape::new(1, c, h, w), -0.8, 0.8, &mut rng)
}

/// Finite-difference checks for the composite blocks and both full
/// networks, run alongside the per-layer checks.
pub fn composite_checks() -> Result<Vec<GraphCheck>> {
    let opts = GradcheckOpts::nonlinear();
    let mut checks = Vec::new();

    let mut gb = GraphBuilder::new(ChaCha8Rng::seed_from_u64(101));
    let x = gb.input(4, 16, 16)?;
    let out = spp_block(&mut gb, x, &[3, 5], "spp")?;
    checks.push(GraphCheck {
        name: "spp_block_16".into(),
        graph: gb.finish(out)?,
        input: check_input(4, 16, 16, 201),
        opts,
    });

    let mut gb = GraphBuilder::new(ChaCha8Rng::seed_from_u64(102));
    let x = gb.input(4, 16, 16)?;
    let out = csp_block(&mut gb, x, ActivationKind::Swish, "csp")?;
    checks.push(GraphCheck {
        name: "csp_block_16".into(),
        graph: gb.finish(out)?,
        input: check_input(4, 16, 16, 202),
        opts,
    });

    let mut gb = GraphBuilder::new(ChaCha8Rng::seed_from_u64(103));
    let x = gb.input(4, 16, 16)?;
    let out = sam_block(&mut gb, x, "sam")?;
    checks.push(GraphCheck {
        name: "sam_block_16".into(),
        graph: gb.finish(out)?,
        input: check_input(4, 16, 16, 203),
        opts,
    });

    let mut gb = GraphBuilder::new(ChaCha8Rng::seed_from_u64(104));
    let x = gb.input(8, 8, 8)?;
    let out = cam_block(&mut gb, x, ActivationKind::Swish, "cam")?;
    checks.push(GraphCheck {
        name: "cam_block_16".into(),
        graph: gb.finish(out)?,
        input: check_input(8, 8, 8, 204),
        opts,
    });

    let cfg = gradcheck_scale(&super::config::preset("EDN-GTM").expect("preset exists"));
    checks.push(GraphCheck {
        name: "generator_16".into(),
        graph: build_generator(&cfg, 16, 16, ChaCha8Rng::seed_from_u64(105))?,
        input: check_input(cfg.input_channels, 16, 16, 205),
        opts,
    });
    checks.push(GraphCheck {
        name: "discriminator_16".into(),
        graph: build_discriminator(&cfg, 16, 16, ChaCha8Rng::seed_from_u64(106))?,
        input: check_input(discriminator_channels(&cfg), 16, 16, 206),
        opts,
    });
    Ok(checks)
}
