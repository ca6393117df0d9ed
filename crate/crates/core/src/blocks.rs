//! Network building blocks: convolutional attention (CBAM), the
//! S6/CM-S6 global feature blocks (SGFB/CGFB), the decoder blocks
//! (SMDB/CMDB), saliency enhancement (SEB/SEM), the multi-modal
//! multi-scale decoder (M2DB/M2DM), the reconstruction module (RM), and
//! a small four-stage backbone.

use crate::error::{Error, Result};
use crate::priors::PriorSet;
use crate::ssm::{cm_s6_bidirectional, s6_bidirectional, BidirectionalParams, ScanBackend};
use crate::tensor::{
    batch_norm_inference, bilinear_resize, concat_channels, conv2d, global_avg_pool,
    global_max_pool, im2seq, seq2im, BatchNormParams, Conv2DParams, DenseArray,
};

/// CBAM channel-attention reduction ratio used throughout the network.
pub const CBAM_REDUCTION: usize = 4;

/// Convolutional block attention: a shared two-layer MLP over pooled
/// channel statistics gates the channels, then a 7x7 convolution over
/// the channel mean/max maps gates the positions.
#[derive(Clone, Debug)]
pub struct CbamParams {
    /// `[C/r, C]` first MLP layer (shared between avg and max paths).
    pub mlp_w1: DenseArray,
    /// `[C, C/r]` second MLP layer.
    pub mlp_w2: DenseArray,
    /// `[1, 2, 7, 7]` spatial-attention convolution, padding 3.
    pub spatial: Conv2DParams,
}

impl CbamParams {
    pub fn channels(&self) -> usize {
        self.mlp_w1.shape()[1]
    }

    fn validate(&self, op: &'static str, c: usize) -> Result<()> {
        if self.channels() != c {
            return Err(Error::AxisMismatch {
                op,
                axis: "channels",
                expected: self.channels(),
                got: c,
            });
        }
        if !c.is_multiple_of(CBAM_REDUCTION) {
            return Err(Error::InvalidParam {
                op,
                what: format!("reduction {CBAM_REDUCTION} does not divide channel count {c}"),
            });
        }
        Ok(())
    }
}

fn matvec(w: &DenseArray, v: &[f32]) -> Vec<f32> {
    let (m, k) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(k, v.len());
    (0..m)
        .map(|i| {
            w.data()[i * k..(i + 1) * k]
                .iter()
                .zip(v)
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect()
}

/// Multiplies every channel of `x` by a `[1,H,W]` spatial mask.
pub fn mul_spatial_mask(x: &DenseArray, mask: &DenseArray) -> Result<DenseArray> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if mask.shape() != [1, h, w] {
        return Err(Error::TensorShape {
            name: "mask".into(),
            expected: vec![1, h, w],
            got: mask.shape().to_vec(),
        });
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(c * plane);
    for ci in 0..c {
        for (v, m) in x.data()[ci * plane..(ci + 1) * plane]
            .iter()
            .zip(mask.data())
        {
            out.push(v * m);
        }
    }
    DenseArray::new(vec![c, h, w], out)
}

pub fn cbam_forward(x: &DenseArray, p: &CbamParams) -> Result<DenseArray> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    p.validate("cbam_forward", c)?;

    // channel attention
    let mlp = |v: &[f32]| -> Vec<f32> {
        let hidden: Vec<f32> = matvec(&p.mlp_w1, v).iter().map(|&h| h.max(0.0)).collect();
        matvec(&p.mlp_w2, &hidden)
    };
    let avg = mlp(global_avg_pool(x)?.data());
    let max = mlp(global_max_pool(x)?.data());
    let plane = h * w;
    let mut gated = Vec::with_capacity(c * plane);
    for ci in 0..c {
        let g = crate::tensor::sigmoid(avg[ci] + max[ci]);
        for &v in &x.data()[ci * plane..(ci + 1) * plane] {
            gated.push(v * g);
        }
    }
    let x1 = DenseArray::new(vec![c, h, w], gated)?;

    // spatial attention on the channel-refined map
    let mut stat = Vec::with_capacity(2 * plane);
    let inv_c = 1.0 / c as f32;
    for i in 0..plane {
        let mut s = 0.0;
        for ci in 0..c {
            s += x1.data()[ci * plane + i];
        }
        stat.push(s * inv_c);
    }
    for i in 0..plane {
        let mut m = f32::NEG_INFINITY;
        for ci in 0..c {
            m = m.max(x1.data()[ci * plane + i]);
        }
        stat.push(m);
    }
    let stat = DenseArray::new(vec![2, h, w], stat)?;
    let gate = conv2d(&stat, &p.spatial)?.sigmoid();
    mul_spatial_mask(&x1, &gate)
}

/// Self-modality global feature block: 1x1 projection, Im2Seq,
/// bidirectional S6, Seq2Im, and a 1x1 projection back from the
/// two-direction concat.
#[derive(Clone, Debug)]
pub struct SgfbParams {
    pub proj_in: Conv2DParams,
    pub ssm: BidirectionalParams<f32>,
    pub proj_out: Conv2DParams,
}

pub fn sgfb_forward(x: &DenseArray, p: &SgfbParams, backend: ScanBackend) -> Result<DenseArray> {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let t = conv2d(x, &p.proj_in)?;
    let seq = im2seq(&t)?;
    let out = s6_bidirectional(&seq, &p.ssm, backend)?;
    conv2d(&seq2im(&out, h, w)?, &p.proj_out)
}

/// Cross-modality global feature block: per-modality 1x1 projections,
/// then bidirectional CM-S6 with dynamics from `x` and scanned input `y`.
#[derive(Clone, Debug)]
pub struct CgfbParams {
    pub proj_x: Conv2DParams,
    pub proj_y: Conv2DParams,
    pub ssm: BidirectionalParams<f32>,
    pub proj_out: Conv2DParams,
}

pub fn cgfb_forward(
    x: &DenseArray,
    y: &DenseArray,
    p: &CgfbParams,
    backend: ScanBackend,
) -> Result<DenseArray> {
    if x.shape() != y.shape() {
        return Err(Error::TensorShape {
            name: "y".into(),
            expected: x.shape().to_vec(),
            got: y.shape().to_vec(),
        });
    }
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let px = conv2d(x, &p.proj_x)?;
    let py = conv2d(y, &p.proj_y)?;
    let sx = im2seq(&px)?;
    let sy = im2seq(&py)?;
    let out = cm_s6_bidirectional(&sx, &sy, &p.ssm, backend)?;
    conv2d(&seq2im(&out, h, w)?, &p.proj_out)
}

/// Two rounds of conv3x3 + BN + ReLU.
#[derive(Clone, Debug)]
pub struct ConvBlockParams {
    pub conv1: Conv2DParams,
    pub bn1: BatchNormParams,
    pub conv2: Conv2DParams,
    pub bn2: BatchNormParams,
}

pub fn conv_block_forward(x: &DenseArray, p: &ConvBlockParams) -> Result<DenseArray> {
    let t = batch_norm_inference(&conv2d(x, &p.conv1)?, &p.bn1)?.relu();
    Ok(batch_norm_inference(&conv2d(&t, &p.conv2)?, &p.bn2)?.relu())
}

/// Self-modality decoder block:
/// `u = x + CBAM(SGFB(BN(x)))`, `out = u + CB(BN(u))`.
#[derive(Clone, Debug)]
pub struct SmdbParams {
    pub bn1: BatchNormParams,
    pub sgfb: SgfbParams,
    pub cbam: CbamParams,
    pub bn2: BatchNormParams,
    pub cb: ConvBlockParams,
}

pub fn smdb_forward(x: &DenseArray, p: &SmdbParams, backend: ScanBackend) -> Result<DenseArray> {
    let global = cbam_forward(&sgfb_forward(&batch_norm_inference(x, &p.bn1)?, &p.sgfb, backend)?, &p.cbam)?;
    let u = x.add(&global)?;
    let local = conv_block_forward(&batch_norm_inference(&u, &p.bn2)?, &p.cb)?;
    u.add(&local)
}

/// Cross-modality decoder block. Each modality is refined by a CGFB
/// driven by the other modality, the refined pair is fused by a 1x1
/// convolution, and a convolutional residual follows.
#[derive(Clone, Debug)]
pub struct CmdbParams {
    pub bn_x: BatchNormParams,
    pub bn_y: BatchNormParams,
    pub cgfb_x: CgfbParams,
    pub cgfb_y: CgfbParams,
    pub cbam_x: CbamParams,
    pub cbam_y: CbamParams,
    pub fuse: Conv2DParams,
    pub bn_z: BatchNormParams,
    pub cb: ConvBlockParams,
}

pub fn cmdb_forward(
    x: &DenseArray,
    y: &DenseArray,
    p: &CmdbParams,
    backend: ScanBackend,
) -> Result<DenseArray> {
    let bx = batch_norm_inference(x, &p.bn_x)?;
    let by = batch_norm_inference(y, &p.bn_y)?;
    let x_ref = x.add(&cbam_forward(&cgfb_forward(&bx, &by, &p.cgfb_x, backend)?, &p.cbam_x)?)?;
    let y_ref = y.add(&cbam_forward(&cgfb_forward(&by, &bx, &p.cgfb_y, backend)?, &p.cbam_y)?)?;
    let z = conv2d(&concat_channels(&[&x_ref, &y_ref])?, &p.fuse)?;
    let local = conv_block_forward(&batch_norm_inference(&z, &p.bn_z)?, &p.cb)?;
    z.add(&local)
}

/// Saliency enhancement block: one CBAM per prior over the
/// prior-masked feature, aggregated with a residual connection.
#[derive(Clone, Debug)]
pub struct SebParams {
    pub cbams: Vec<CbamParams>,
}

pub fn seb_forward(f: &DenseArray, priors: &PriorSet, p: &SebParams) -> Result<DenseArray> {
    if p.cbams.len() != 3 {
        return Err(Error::InvalidParam {
            op: "seb_forward",
            what: format!("expected 3 CBAMs, got {}", p.cbams.len()),
        });
    }
    let (h, w) = (f.shape()[1], f.shape()[2]);
    let mut out = f.clone();
    for (prior, cbam) in [&priors.s1, &priors.s2, &priors.s3].iter().zip(&p.cbams) {
        let mask = bilinear_resize(prior, h, w)?;
        let gated = cbam_forward(&mul_spatial_mask(f, &mask)?, cbam)?;
        out = out.add(&gated)?;
    }
    Ok(out)
}

/// Saliency enhancement module: one SEB per scale.
#[derive(Clone, Debug)]
pub struct SemParams {
    pub sebs: Vec<SebParams>,
}

pub fn sem_forward(
    features: &[DenseArray],
    priors: &PriorSet,
    p: &SemParams,
) -> Result<Vec<DenseArray>> {
    if features.len() != p.sebs.len() {
        return Err(Error::InvalidParam {
            op: "sem_forward",
            what: format!("{} features for {} SEBs", features.len(), p.sebs.len()),
        });
    }
    features
        .iter()
        .zip(&p.sebs)
        .map(|(f, seb)| seb_forward(f, priors, seb))
        .collect()
}

/// Multi-modal multi-scale decoder block.
#[derive(Clone, Debug)]
pub struct M2dbParams {
    pub cb_x: ConvBlockParams,
    pub cb_y: ConvBlockParams,
    pub smdb_x: SmdbParams,
    pub smdb_y: SmdbParams,
    pub cmdb: CmdbParams,
    pub smdb_out: SmdbParams,
}

/// One decoder block: per-modality local context and self-modality
/// refinement, cross-modal fusion, an optional higher-scale injection
/// (resized to this scale), and a final self-modality refinement.
pub fn m2db_forward(
    fx: &DenseArray,
    fy: &DenseArray,
    fm_higher: Option<&DenseArray>,
    p: &M2dbParams,
    backend: ScanBackend,
) -> Result<DenseArray> {
    let a = smdb_forward(&conv_block_forward(fx, &p.cb_x)?, &p.smdb_x, backend)?;
    let b = smdb_forward(&conv_block_forward(fy, &p.cb_y)?, &p.smdb_y, backend)?;
    let mut c = cmdb_forward(&a, &b, &p.cmdb, backend)?;
    if let Some(higher) = fm_higher {
        let (h, w) = (c.shape()[1], c.shape()[2]);
        c = c.add(&bilinear_resize(higher, h, w)?)?;
    }
    smdb_forward(&c, &p.smdb_out, backend)
}

/// The full decoder: four M2DBs from the coarsest scale (s=4) down to
/// the finest (s=1). `blocks[i]` handles scale `s = i+1`.
#[derive(Clone, Debug)]
pub struct M2dmParams {
    pub blocks: Vec<M2dbParams>,
}

pub fn m2dm_forward(
    fx: &[DenseArray],
    fy: &[DenseArray],
    p: &M2dmParams,
    backend: ScanBackend,
) -> Result<DenseArray> {
    let scales = p.blocks.len();
    if fx.len() != scales || fy.len() != scales {
        return Err(Error::InvalidParam {
            op: "m2dm_forward",
            what: format!("{} / {} features for {scales} blocks", fx.len(), fy.len()),
        });
    }
    let mut fm = m2db_forward(&fx[scales - 1], &fy[scales - 1], None, &p.blocks[scales - 1], backend)?;
    for s in (0..scales - 1).rev() {
        fm = m2db_forward(&fx[s], &fy[s], Some(&fm), &p.blocks[s], backend)?;
    }
    Ok(fm)
}

/// Reconstruction module: CB, 2x upsample, CB, 2x upsample, 1x1 head,
/// sigmoid. Bridges the finest decoder scale (H/4) back to full
/// resolution.
#[derive(Clone, Debug)]
pub struct RmParams {
    pub cb1: ConvBlockParams,
    pub cb2: ConvBlockParams,
    pub head: Conv2DParams,
}

pub fn rm_forward(fm1: &DenseArray, p: &RmParams) -> Result<DenseArray> {
    Ok(rm_forward_traced(fm1, p)?.0)
}

/// Like [`rm_forward`] but also returns the head's input feature, which
/// the trainability smoke test differentiates through.
pub fn rm_forward_traced(fm1: &DenseArray, p: &RmParams) -> Result<(DenseArray, DenseArray)> {
    let (h, w) = (fm1.shape()[1], fm1.shape()[2]);
    let t = conv_block_forward(fm1, &p.cb1)?;
    let t = bilinear_resize(&t, 2 * h, 2 * w)?;
    let t = conv_block_forward(&t, &p.cb2)?;
    let t = bilinear_resize(&t, 4 * h, 4 * w)?;
    let p_map = conv2d(&t, &p.head)?.sigmoid();
    Ok((p_map, t))
}

/// One conv + BN + ReLU unit of the backbone.
#[derive(Clone, Debug)]
pub struct ConvBnParams {
    pub conv: Conv2DParams,
    pub bn: BatchNormParams,
}

fn conv_bn_relu(x: &DenseArray, p: &ConvBnParams) -> Result<DenseArray> {
    Ok(batch_norm_inference(&conv2d(x, &p.conv)?, &p.bn)?.relu())
}

/// Desk-scale feature extraction backbone: a stride-4 stem followed by
/// four stages producing scales H/4, H/8, H/16, H/32 with channel
/// widths C, 2C, 4C, 8C, each projected to the decoder width by a 1x1
/// convolution.
#[derive(Clone, Debug)]
pub struct BackboneParams {
    pub stem1: ConvBnParams,
    pub stem2: ConvBnParams,
    pub stages: Vec<ConvBnParams>,
    pub projs: Vec<Conv2DParams>,
}

pub fn backbone_forward(img: &DenseArray, p: &BackboneParams) -> Result<Vec<DenseArray>> {
    if img.shape()[0] != 3 {
        return Err(Error::AxisMismatch {
            op: "backbone_forward",
            axis: "channels",
            expected: 3,
            got: img.shape()[0],
        });
    }
    let mut t = conv_bn_relu(img, &p.stem1)?;
    t = conv_bn_relu(&t, &p.stem2)?;
    let mut scales = Vec::with_capacity(p.stages.len());
    for (stage, proj) in p.stages.iter().zip(&p.projs) {
        t = conv_bn_relu(&t, stage)?;
        scales.push(conv2d(&t, proj)?);
    }
    Ok(scales)
}
