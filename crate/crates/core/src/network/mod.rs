//! Full network assembly, weight initialization/serialization, and the
//! hybrid training loss.

pub mod init;
mod loss;
mod weights;
mod wire;

pub use loss::{gradcheck_loss, hybrid_loss, HybridLoss, BCE_CLAMP};
pub use weights::{SSNetWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{
    backbone_forward, m2dm_forward, rm_forward_traced, sem_forward, BackboneParams, M2dmParams,
    RmParams, SemParams, CBAM_REDUCTION,
};
use crate::error::{Error, Result};
use crate::priors::compute_priors;
use crate::ssm::ScanBackend;
use crate::tensor::{concat_channels, DenseArray};

/// Architecture hyperparameters. Height and width must be multiples of
/// 32 (the deepest backbone stride); the decoder width must be a
/// multiple of the CBAM reduction ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SSNetConfig {
    pub height: usize,
    pub width: usize,
    /// Backbone base channel count.
    pub base_channels: usize,
    /// Decoder feature width shared across scales.
    pub decoder_dim: usize,
    /// S6/CM-S6 state dimension.
    pub state_dim: usize,
    pub seed: u64,
}

impl SSNetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: String| Error::InvalidParam {
            op: "SSNetConfig",
            what,
        };
        if self.height == 0 || !self.height.is_multiple_of(32) || self.width == 0 || !self.width.is_multiple_of(32) {
            return Err(fail(format!(
                "height/width must be positive multiples of 32, got {}x{}",
                self.height, self.width
            )));
        }
        if self.base_channels == 0 || self.decoder_dim == 0 || self.state_dim == 0 {
            return Err(fail("all dimensions must be >= 1".into()));
        }
        if !self.decoder_dim.is_multiple_of(CBAM_REDUCTION) {
            return Err(fail(format!(
                "decoder_dim {} must be a multiple of the CBAM reduction {CBAM_REDUCTION}",
                self.decoder_dim
            )));
        }
        Ok(())
    }
}

/// Typed parameter tree of the whole network.
#[derive(Clone, Debug)]
pub struct SSNetParams {
    pub backbone_rgb: BackboneParams,
    pub backbone_depth: BackboneParams,
    pub sem_rgb: SemParams,
    pub sem_depth: SemParams,
    pub m2dm: M2dmParams,
    pub rm: RmParams,
}

/// Draws a full set of weights from the config's dimensions and the
/// given seed. The generator is ChaCha8 and tensors are drawn in a
/// fixed order (RGB backbone, depth backbone, RGB SEM, depth SEM,
/// decoder, reconstruction), so a seed pins every value.
pub fn init_weights(cfg: &SSNetConfig, seed: u64) -> Result<SSNetWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, d, n) = (cfg.base_channels, cfg.decoder_dim, cfg.state_dim);
    let params = SSNetParams {
        backbone_rgb: init::init_backbone(&mut rng, c, d),
        backbone_depth: init::init_backbone(&mut rng, c, d),
        sem_rgb: init::init_sem(&mut rng, d),
        sem_depth: init::init_sem(&mut rng, d),
        m2dm: init::init_m2dm(&mut rng, d, n),
        rm: init::init_rm(&mut rng, d),
    };
    Ok(wire::params_to_weights(&params))
}

/// The assembled network, ready for forward passes.
pub struct SSNet {
    cfg: SSNetConfig,
    params: SSNetParams,
    backend: ScanBackend,
}

impl SSNet {
    /// Builds the network from a weight container, verifying complete
    /// coverage of the architecture implied by the config.
    pub fn from_weights(cfg: SSNetConfig, weights: &SSNetWeights) -> Result<Self> {
        cfg.validate()?;
        let params = wire::params_from_weights(&cfg, weights)?;
        Ok(Self {
            cfg,
            params,
            backend: ScanBackend::default(),
        })
    }

    pub fn with_backend(mut self, backend: ScanBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn config(&self) -> &SSNetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &SSNetParams {
        &self.params
    }

    /// Flattens the current parameters back into a container.
    pub fn to_weights(&self) -> SSNetWeights {
        wire::params_to_weights(&self.params)
    }

    /// Replaces the reconstruction head; used by the trainability
    /// smoke test to apply a gradient step.
    pub fn set_rm_head(&mut self, head: crate::tensor::Conv2DParams) {
        self.params.rm.head = head;
    }

    /// Full forward pass: saliency priors, two backbones, two SEMs, the
    /// multi-scale decoder, and reconstruction. `i_x` is `[3,H,W]` RGB
    /// in [0,1]; `i_y` is the `[1,H,W]` contrast-enhanced depth map.
    pub fn forward(&self, i_x: &DenseArray, i_y: &DenseArray) -> Result<DenseArray> {
        Ok(self.forward_traced(i_x, i_y)?.0)
    }

    /// Forward pass that also returns the reconstruction head's input,
    /// for differentiating through the final convolution.
    pub fn forward_traced(
        &self,
        i_x: &DenseArray,
        i_y: &DenseArray,
    ) -> Result<(DenseArray, DenseArray)> {
        let (h, w) = (self.cfg.height, self.cfg.width);
        if i_x.shape() != [3, h, w] {
            return Err(Error::TensorShape {
                name: "i_x".into(),
                expected: vec![3, h, w],
                got: i_x.shape().to_vec(),
            }
            .in_stage("input"));
        }
        if i_y.shape() != [1, h, w] {
            return Err(Error::TensorShape {
                name: "i_y".into(),
                expected: vec![1, h, w],
                got: i_y.shape().to_vec(),
            }
            .in_stage("input"));
        }

        let priors = compute_priors(i_x, i_y).map_err(|e| e.in_stage("priors"))?;

        let depth3 =
            concat_channels(&[i_y, i_y, i_y]).map_err(|e| e.in_stage("backbone_depth"))?;
        let fx = backbone_forward(i_x, &self.params.backbone_rgb)
            .map_err(|e| e.in_stage("backbone_rgb"))?;
        let fy = backbone_forward(&depth3, &self.params.backbone_depth)
            .map_err(|e| e.in_stage("backbone_depth"))?;

        let fx = sem_forward(&fx, &priors, &self.params.sem_rgb)
            .map_err(|e| e.in_stage("sem_rgb"))?;
        let fy = sem_forward(&fy, &priors, &self.params.sem_depth)
            .map_err(|e| e.in_stage("sem_depth"))?;

        let fm1 = m2dm_forward(&fx, &fy, &self.params.m2dm, self.backend)
            .map_err(|e| e.in_stage("m2dm"))?;

        rm_forward_traced(&fm1, &self.params.rm).map_err(|e| e.in_stage("rm"))
    }
}

/// One-call forward from a weight container.
pub fn ssnet_forward(
    i_x: &DenseArray,
    i_y: &DenseArray,
    weights: &SSNetWeights,
    cfg: &SSNetConfig,
) -> Result<DenseArray> {
    SSNet::from_weights(*cfg, weights)?.forward(i_x, i_y)
}
