//! Mapping between the typed parameter tree and the flat named-tensor
//! container. Saving walks the tree emitting dotted names; loading
//! consumes the container, checking shapes and completeness.

use crate::blocks::{
    BackboneParams, CbamParams, CgfbParams, CmdbParams, ConvBlockParams, ConvBnParams,
    M2dbParams, M2dmParams, RmParams, SebParams, SemParams, SgfbParams, SmdbParams,
    CBAM_REDUCTION,
};
use crate::error::Result;
use crate::network::weights::{Loader, SSNetWeights};
use crate::network::{SSNetConfig, SSNetParams};
use crate::ssm::{BidirectionalParams, S6Params};
use crate::tensor::{BatchNormParams, Conv2DParams};

const BN_EPSILON: f32 = 1e-5;

fn save_conv(w: &mut SSNetWeights, prefix: &str, p: &Conv2DParams) {
    w.insert(format!("{prefix}.weight"), p.weights.clone());
    w.insert(format!("{prefix}.bias"), p.bias.clone());
}

#[allow(clippy::too_many_arguments)]
fn load_conv(
    l: &mut Loader,
    prefix: &str,
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<Conv2DParams> {
    let weights = l.take(&format!("{prefix}.weight"), &[out_c, in_c, k, k])?;
    let bias = l.take(&format!("{prefix}.bias"), &[out_c])?;
    Conv2DParams::new(weights, bias, stride, padding)
}

fn save_bn(w: &mut SSNetWeights, prefix: &str, p: &BatchNormParams) {
    w.insert(format!("{prefix}.gamma"), p.gamma.clone());
    w.insert(format!("{prefix}.beta"), p.beta.clone());
    w.insert(format!("{prefix}.mean"), p.running_mean.clone());
    w.insert(format!("{prefix}.var"), p.running_var.clone());
}

fn load_bn(l: &mut Loader, prefix: &str, c: usize) -> Result<BatchNormParams> {
    BatchNormParams::new(
        l.take(&format!("{prefix}.gamma"), &[c])?,
        l.take(&format!("{prefix}.beta"), &[c])?,
        l.take(&format!("{prefix}.mean"), &[c])?,
        l.take(&format!("{prefix}.var"), &[c])?,
        BN_EPSILON,
    )
}

fn save_cbam(w: &mut SSNetWeights, prefix: &str, p: &CbamParams) {
    w.insert(format!("{prefix}.mlp_w1"), p.mlp_w1.clone());
    w.insert(format!("{prefix}.mlp_w2"), p.mlp_w2.clone());
    save_conv(w, &format!("{prefix}.spatial"), &p.spatial);
}

fn load_cbam(l: &mut Loader, prefix: &str, c: usize) -> Result<CbamParams> {
    let hidden = c / CBAM_REDUCTION;
    Ok(CbamParams {
        mlp_w1: l.take(&format!("{prefix}.mlp_w1"), &[hidden, c])?,
        mlp_w2: l.take(&format!("{prefix}.mlp_w2"), &[c, hidden])?,
        spatial: load_conv(l, &format!("{prefix}.spatial"), 1, 2, 7, 1, 3)?,
    })
}

fn save_s6(w: &mut SSNetWeights, prefix: &str, p: &S6Params<f32>) {
    w.insert(format!("{prefix}.a_log"), p.a_log.clone());
    w.insert(format!("{prefix}.d_feed"), p.d_feed.clone());
    w.insert(format!("{prefix}.w_b"), p.w_b.clone());
    w.insert(format!("{prefix}.w_c"), p.w_c.clone());
    w.insert(format!("{prefix}.w_delta"), p.w_delta.clone());
    w.insert(format!("{prefix}.b_delta"), p.b_delta.clone());
}

fn load_s6(l: &mut Loader, prefix: &str, d: usize, n: usize) -> Result<S6Params<f32>> {
    S6Params::new(
        l.take(&format!("{prefix}.a_log"), &[d, n])?,
        l.take(&format!("{prefix}.d_feed"), &[d])?,
        l.take(&format!("{prefix}.w_b"), &[d, n])?,
        l.take(&format!("{prefix}.w_c"), &[d, n])?,
        l.take(&format!("{prefix}.w_delta"), &[d, d])?,
        l.take(&format!("{prefix}.b_delta"), &[d])?,
    )
}

fn save_bidi(w: &mut SSNetWeights, prefix: &str, p: &BidirectionalParams<f32>) {
    save_s6(w, &format!("{prefix}.fwd"), &p.fwd);
    save_s6(w, &format!("{prefix}.bwd"), &p.bwd);
}

fn load_bidi(l: &mut Loader, prefix: &str, d: usize, n: usize) -> Result<BidirectionalParams<f32>> {
    Ok(BidirectionalParams {
        fwd: load_s6(l, &format!("{prefix}.fwd"), d, n)?,
        bwd: load_s6(l, &format!("{prefix}.bwd"), d, n)?,
    })
}

fn save_sgfb(w: &mut SSNetWeights, prefix: &str, p: &SgfbParams) {
    save_conv(w, &format!("{prefix}.proj_in"), &p.proj_in);
    save_bidi(w, &format!("{prefix}.s6"), &p.ssm);
    save_conv(w, &format!("{prefix}.proj_out"), &p.proj_out);
}

fn load_sgfb(l: &mut Loader, prefix: &str, c: usize, n: usize) -> Result<SgfbParams> {
    Ok(SgfbParams {
        proj_in: load_conv(l, &format!("{prefix}.proj_in"), c, c, 1, 1, 0)?,
        ssm: load_bidi(l, &format!("{prefix}.s6"), c, n)?,
        proj_out: load_conv(l, &format!("{prefix}.proj_out"), c, 2 * c, 1, 1, 0)?,
    })
}

fn save_cgfb(w: &mut SSNetWeights, prefix: &str, p: &CgfbParams) {
    save_conv(w, &format!("{prefix}.proj_x"), &p.proj_x);
    save_conv(w, &format!("{prefix}.proj_y"), &p.proj_y);
    save_bidi(w, &format!("{prefix}.cms6"), &p.ssm);
    save_conv(w, &format!("{prefix}.proj_out"), &p.proj_out);
}

fn load_cgfb(l: &mut Loader, prefix: &str, c: usize, n: usize) -> Result<CgfbParams> {
    Ok(CgfbParams {
        proj_x: load_conv(l, &format!("{prefix}.proj_x"), c, c, 1, 1, 0)?,
        proj_y: load_conv(l, &format!("{prefix}.proj_y"), c, c, 1, 1, 0)?,
        ssm: load_bidi(l, &format!("{prefix}.cms6"), c, n)?,
        proj_out: load_conv(l, &format!("{prefix}.proj_out"), c, 2 * c, 1, 1, 0)?,
    })
}

fn save_cb(w: &mut SSNetWeights, prefix: &str, p: &ConvBlockParams) {
    save_conv(w, &format!("{prefix}.conv1"), &p.conv1);
    save_bn(w, &format!("{prefix}.bn1"), &p.bn1);
    save_conv(w, &format!("{prefix}.conv2"), &p.conv2);
    save_bn(w, &format!("{prefix}.bn2"), &p.bn2);
}

fn load_cb(l: &mut Loader, prefix: &str, c: usize) -> Result<ConvBlockParams> {
    Ok(ConvBlockParams {
        conv1: load_conv(l, &format!("{prefix}.conv1"), c, c, 3, 1, 1)?,
        bn1: load_bn(l, &format!("{prefix}.bn1"), c)?,
        conv2: load_conv(l, &format!("{prefix}.conv2"), c, c, 3, 1, 1)?,
        bn2: load_bn(l, &format!("{prefix}.bn2"), c)?,
    })
}

fn save_smdb(w: &mut SSNetWeights, prefix: &str, p: &SmdbParams) {
    save_bn(w, &format!("{prefix}.bn1"), &p.bn1);
    save_sgfb(w, &format!("{prefix}.sgfb"), &p.sgfb);
    save_cbam(w, &format!("{prefix}.cbam"), &p.cbam);
    save_bn(w, &format!("{prefix}.bn2"), &p.bn2);
    save_cb(w, &format!("{prefix}.cb"), &p.cb);
}

fn load_smdb(l: &mut Loader, prefix: &str, c: usize, n: usize) -> Result<SmdbParams> {
    Ok(SmdbParams {
        bn1: load_bn(l, &format!("{prefix}.bn1"), c)?,
        sgfb: load_sgfb(l, &format!("{prefix}.sgfb"), c, n)?,
        cbam: load_cbam(l, &format!("{prefix}.cbam"), c)?,
        bn2: load_bn(l, &format!("{prefix}.bn2"), c)?,
        cb: load_cb(l, &format!("{prefix}.cb"), c)?,
    })
}

fn save_cmdb(w: &mut SSNetWeights, prefix: &str, p: &CmdbParams) {
    save_bn(w, &format!("{prefix}.bn_x"), &p.bn_x);
    save_bn(w, &format!("{prefix}.bn_y"), &p.bn_y);
    save_cgfb(w, &format!("{prefix}.cgfb_x"), &p.cgfb_x);
    save_cgfb(w, &format!("{prefix}.cgfb_y"), &p.cgfb_y);
    save_cbam(w, &format!("{prefix}.cbam_x"), &p.cbam_x);
    save_cbam(w, &format!("{prefix}.cbam_y"), &p.cbam_y);
    save_conv(w, &format!("{prefix}.fuse"), &p.fuse);
    save_bn(w, &format!("{prefix}.bn_z"), &p.bn_z);
    save_cb(w, &format!("{prefix}.cb"), &p.cb);
}

fn load_cmdb(l: &mut Loader, prefix: &str, c: usize, n: usize) -> Result<CmdbParams> {
    Ok(CmdbParams {
        bn_x: load_bn(l, &format!("{prefix}.bn_x"), c)?,
        bn_y: load_bn(l, &format!("{prefix}.bn_y"), c)?,
        cgfb_x: load_cgfb(l, &format!("{prefix}.cgfb_x"), c, n)?,
        cgfb_y: load_cgfb(l, &format!("{prefix}.cgfb_y"), c, n)?,
        cbam_x: load_cbam(l, &format!("{prefix}.cbam_x"), c)?,
        cbam_y: load_cbam(l, &format!("{prefix}.cbam_y"), c)?,
        fuse: load_conv(l, &format!("{prefix}.fuse"), c, 2 * c, 1, 1, 0)?,
        bn_z: load_bn(l, &format!("{prefix}.bn_z"), c)?,
        cb: load_cb(l, &format!("{prefix}.cb"), c)?,
    })
}

fn save_sem(w: &mut SSNetWeights, prefix: &str, p: &SemParams) {
    for (i, seb) in p.sebs.iter().enumerate() {
        for (j, cbam) in seb.cbams.iter().enumerate() {
            save_cbam(w, &format!("{prefix}.seb{}.cbam{}", i + 1, j + 1), cbam);
        }
    }
}

fn load_sem(l: &mut Loader, prefix: &str, c: usize) -> Result<SemParams> {
    let mut sebs = Vec::with_capacity(4);
    for i in 0..4 {
        let mut cbams = Vec::with_capacity(3);
        for j in 0..3 {
            cbams.push(load_cbam(l, &format!("{prefix}.seb{}.cbam{}", i + 1, j + 1), c)?);
        }
        sebs.push(SebParams { cbams });
    }
    Ok(SemParams { sebs })
}

fn save_m2dm(w: &mut SSNetWeights, prefix: &str, p: &M2dmParams) {
    for (i, block) in p.blocks.iter().enumerate() {
        let bp = format!("{prefix}.block{}", i + 1);
        save_cb(w, &format!("{bp}.cb_x"), &block.cb_x);
        save_cb(w, &format!("{bp}.cb_y"), &block.cb_y);
        save_smdb(w, &format!("{bp}.smdb_x"), &block.smdb_x);
        save_smdb(w, &format!("{bp}.smdb_y"), &block.smdb_y);
        save_cmdb(w, &format!("{bp}.cmdb"), &block.cmdb);
        save_smdb(w, &format!("{bp}.smdb_out"), &block.smdb_out);
    }
}

fn load_m2dm(l: &mut Loader, prefix: &str, d: usize, n: usize) -> Result<M2dmParams> {
    let mut blocks = Vec::with_capacity(4);
    for i in 0..4 {
        let bp = format!("{prefix}.block{}", i + 1);
        blocks.push(M2dbParams {
            cb_x: load_cb(l, &format!("{bp}.cb_x"), d)?,
            cb_y: load_cb(l, &format!("{bp}.cb_y"), d)?,
            smdb_x: load_smdb(l, &format!("{bp}.smdb_x"), d, n)?,
            smdb_y: load_smdb(l, &format!("{bp}.smdb_y"), d, n)?,
            cmdb: load_cmdb(l, &format!("{bp}.cmdb"), d, n)?,
            smdb_out: load_smdb(l, &format!("{bp}.smdb_out"), d, n)?,
        });
    }
    Ok(M2dmParams { blocks })
}

fn save_rm(w: &mut SSNetWeights, prefix: &str, p: &RmParams) {
    save_cb(w, &format!("{prefix}.cb1"), &p.cb1);
    save_cb(w, &format!("{prefix}.cb2"), &p.cb2);
    save_conv(w, &format!("{prefix}.head"), &p.head);
}

fn load_rm(l: &mut Loader, prefix: &str, d: usize) -> Result<RmParams> {
    Ok(RmParams {
        cb1: load_cb(l, &format!("{prefix}.cb1"), d)?,
        cb2: load_cb(l, &format!("{prefix}.cb2"), d)?,
        head: load_conv(l, &format!("{prefix}.head"), 1, d, 1, 1, 0)?,
    })
}

fn save_conv_bn(w: &mut SSNetWeights, prefix: &str, p: &ConvBnParams) {
    save_conv(w, &format!("{prefix}.conv"), &p.conv);
    save_bn(w, &format!("{prefix}.bn"), &p.bn);
}

#[allow(clippy::too_many_arguments)]
fn load_conv_bn(
    l: &mut Loader,
    prefix: &str,
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<ConvBnParams> {
    Ok(ConvBnParams {
        conv: load_conv(l, &format!("{prefix}.conv"), out_c, in_c, k, stride, padding)?,
        bn: load_bn(l, &format!("{prefix}.bn"), out_c)?,
    })
}

fn save_backbone(w: &mut SSNetWeights, prefix: &str, p: &BackboneParams) {
    save_conv_bn(w, &format!("{prefix}.stem1"), &p.stem1);
    save_conv_bn(w, &format!("{prefix}.stem2"), &p.stem2);
    for (i, stage) in p.stages.iter().enumerate() {
        save_conv_bn(w, &format!("{prefix}.stage{}", i + 1), stage);
    }
    for (i, proj) in p.projs.iter().enumerate() {
        save_conv(w, &format!("{prefix}.proj{}", i + 1), proj);
    }
}

fn load_backbone(l: &mut Loader, prefix: &str, base_c: usize, d: usize) -> Result<BackboneParams> {
    let widths = [base_c, 2 * base_c, 4 * base_c, 8 * base_c];
    let stem1 = load_conv_bn(l, &format!("{prefix}.stem1"), base_c, 3, 3, 2, 1)?;
    let stem2 = load_conv_bn(l, &format!("{prefix}.stem2"), base_c, base_c, 3, 2, 1)?;
    let mut stages = Vec::with_capacity(4);
    let mut prev = base_c;
    for (i, &width) in widths.iter().enumerate() {
        let stride = if i == 0 { 1 } else { 2 };
        stages.push(load_conv_bn(l, &format!("{prefix}.stage{}", i + 1), width, prev, 3, stride, 1)?);
        prev = width;
    }
    let mut projs = Vec::with_capacity(4);
    for (i, &width) in widths.iter().enumerate() {
        projs.push(load_conv(l, &format!("{prefix}.proj{}", i + 1), d, width, 1, 1, 0)?);
    }
    Ok(BackboneParams {
        stem1,
        stem2,
        stages,
        projs,
    })
}

/// Flattens the parameter tree into a named-tensor container.
pub(crate) fn params_to_weights(p: &SSNetParams) -> SSNetWeights {
    let mut w = SSNetWeights::new();
    save_backbone(&mut w, "rgb_backbone", &p.backbone_rgb);
    save_backbone(&mut w, "depth_backbone", &p.backbone_depth);
    save_sem(&mut w, "rgb_sem", &p.sem_rgb);
    save_sem(&mut w, "depth_sem", &p.sem_depth);
    save_m2dm(&mut w, "m2dm", &p.m2dm);
    save_rm(&mut w, "rm", &p.rm);
    w
}

/// Rebuilds the typed tree, verifying every tensor's shape, that no
/// tensor is missing, and that none is left over.
pub(crate) fn params_from_weights(cfg: &SSNetConfig, w: &SSNetWeights) -> Result<SSNetParams> {
    let (c, d, n) = (cfg.base_channels, cfg.decoder_dim, cfg.state_dim);
    let mut l = Loader::new(w.clone());
    let params = SSNetParams {
        backbone_rgb: load_backbone(&mut l, "rgb_backbone", c, d)?,
        backbone_depth: load_backbone(&mut l, "depth_backbone", c, d)?,
        sem_rgb: load_sem(&mut l, "rgb_sem", d)?,
        sem_depth: load_sem(&mut l, "depth_sem", d)?,
        m2dm: load_m2dm(&mut l, "m2dm", d, n)?,
        rm: load_rm(&mut l, "rm", d)?,
    };
    l.finish()?;
    Ok(params)
}
