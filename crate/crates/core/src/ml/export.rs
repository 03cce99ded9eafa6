//! Compact little-endian binary model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset size  field
//!      0    4  magic "FTMM"
//!      4    2  u16 format version (1)
//!      6    1  u8 variant: 0 tree, 1 svr, 2 gp, 3 nn
//!      7    1  u8 target mode: 0 absolute, 1 correction
//!      8    1  u8 feature count (2: rtt_raw ns, mean_rssi dBm)
//!      9    3  reserved, zero
//!     12   16  f64 x2 feature means
//!     28   16  f64 x2 feature standard deviations
//!     44    8  f64 target mean
//!     52    8  f64 target standard deviation
//!     60    4  u32 payload length in bytes
//!     64    -  payload
//! ```
//!
//! The payload layouts are listed in `docs/model-format.md`.

use super::gp::GaussianProcess;
use super::kernel::{KernelKind, KernelParams};
use super::model::{Estimator, TargetMode, TrainedModel, Variant};
use super::nn::Mlp;
use super::normalize::{Normalizer, TargetScale};
use super::svr::Svr;
use super::tree::{RegressionTree, SplitRule, TreeNode};

pub const MAGIC: [u8; 4] = *b"FTMM";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;
pub const TREE_NODE_LEN: usize = 32;
const LEAF: u16 = 0xFFFF;
const FEATURES: u8 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown variant code {0}")]
    UnknownVariant(u8),
    #[error("model file truncated")]
    Truncated,
    #[error("malformed model file: {0}")]
    Malformed(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn zeros(&mut self, n: usize) {
        self.0.extend(std::iter::repeat_n(0u8, n));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self, elem: usize) -> Result<usize, FormatError> {
        let n = self.u32()? as usize;
        // reject counts the remaining bytes cannot hold before allocating
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(FormatError::Truncated);
        }
        Ok(n)
    }
}

pub fn export_compact(model: &TrainedModel) -> Vec<u8> {
    let mut p = Writer(Vec::new());
    match &model.estimator {
        Estimator::Tree(t) => {
            p.u32(t.min_leaf_size as u32);
            p.u32(t.nodes.len() as u32);
            for n in &t.nodes {
                match n.split {
                    Some(s) => {
                        p.u16(s.feature as u16);
                        p.u16(0);
                        p.u32(s.left);
                        p.u32(s.right);
                        p.u32(n.samples);
                        p.f64(s.threshold);
                    }
                    None => {
                        p.u16(LEAF);
                        p.u16(0);
                        p.u32(0);
                        p.u32(0);
                        p.u32(n.samples);
                        p.f64(0.0);
                    }
                }
                p.f64(n.value);
            }
        }
        Estimator::Svr(s) => {
            kernel_block(&mut p, &s.kernel);
            p.f64(s.bias);
            p.u32(s.support_vectors.len() as u32);
            p.u32(0);
            for (sv, c) in s.support_vectors.iter().zip(&s.coefficients) {
                p.f64(*c);
                p.f64(sv[0]);
                p.f64(sv[1]);
            }
        }
        Estimator::Gp(g) => {
            kernel_block(&mut p, &g.kernel);
            p.f64(g.jitter);
            p.u32(g.inputs.len() as u32);
            p.u32(0);
            for (x, w) in g.inputs.iter().zip(&g.weights) {
                p.f64(*w);
                p.f64(x[0]);
                p.f64(x[1]);
            }
        }
        Estimator::Nn(m) => {
            p.u32(m.inputs as u32);
            p.u32(m.hidden as u32);
            for v in m.w1.iter().chain(&m.b1).chain(&m.w2) {
                p.f64(*v);
            }
            p.f64(m.b2);
        }
    }
    let payload = p.0;

    let mut w = Writer(Vec::with_capacity(HEADER_LEN + payload.len()));
    w.0.extend_from_slice(&MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(model.variant().code());
    w.u8(model.target_mode.code());
    w.u8(FEATURES);
    w.zeros(3);
    for v in model.normalizer.means.iter().chain(&model.normalizer.stds) {
        w.f64(*v);
    }
    w.f64(model.target.mean);
    w.f64(model.target.std);
    w.u32(payload.len() as u32);
    debug_assert_eq!(w.0.len(), HEADER_LEN);
    w.0.extend_from_slice(&payload);
    w.0
}

fn kernel_block(p: &mut Writer, k: &KernelParams) {
    p.u8(match k.kind {
        KernelKind::Gaussian => 0,
        KernelKind::Exponential => 1,
    });
    p.zeros(7);
    p.f64(k.sigma_f);
    p.f64(k.sigma_l);
    p.f64(k.noise_sigma);
}

fn read_kernel(r: &mut Reader) -> Result<KernelParams, FormatError> {
    let kind = match r.u8()? {
        0 => KernelKind::Gaussian,
        1 => KernelKind::Exponential,
        c => return Err(FormatError::Malformed(format!("unknown kernel code {c}"))),
    };
    r.take(7)?;
    Ok(KernelParams {
        kind,
        sigma_f: r.f64()?,
        sigma_l: r.f64()?,
        noise_sigma: r.f64()?,
    })
}

pub fn import_compact(bytes: &[u8]) -> Result<TrainedModel, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| FormatError::BadMagic)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let vcode = r.u8()?;
    let variant = Variant::from_code(vcode).ok_or(FormatError::UnknownVariant(vcode))?;
    let mcode = r.u8()?;
    let target_mode = TargetMode::from_code(mcode)
        .ok_or_else(|| FormatError::Malformed(format!("unknown target mode {mcode}")))?;
    let features = r.u8()?;
    if features != FEATURES {
        return Err(FormatError::Malformed(format!("expected 2 features, got {features}")));
    }
    r.take(3)?;
    let normalizer = Normalizer {
        means: [r.f64()?, r.f64()?],
        stds: [r.f64()?, r.f64()?],
    };
    let target = TargetScale {
        mean: r.f64()?,
        std: r.f64()?,
    };
    let len = r.u32()? as usize;
    if bytes.len() - HEADER_LEN != len {
        return Err(if bytes.len() - HEADER_LEN < len {
            FormatError::Truncated
        } else {
            FormatError::Malformed("trailing bytes after payload".into())
        });
    }

    let estimator = match variant {
        Variant::Tree => {
            let min_leaf_size = r.u32()? as usize;
            let count = r.count(TREE_NODE_LEN)?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let feature = r.u16()?;
                r.u16()?;
                let (left, right, samples) = (r.u32()?, r.u32()?, r.u32()?);
                let threshold = r.f64()?;
                let value = r.f64()?;
                let split = if feature == LEAF {
                    None
                } else {
                    if feature as u8 >= FEATURES || left as usize >= count || right as usize >= count {
                        return Err(FormatError::Malformed("tree node out of range".into()));
                    }
                    Some(SplitRule {
                        feature: feature as usize,
                        threshold,
                        left,
                        right,
                    })
                };
                nodes.push(TreeNode { split, value, samples });
            }
            if nodes.is_empty() {
                return Err(FormatError::Malformed("tree has no nodes".into()));
            }
            check_preorder(&nodes)?;
            Estimator::Tree(RegressionTree {
                nodes,
                min_leaf_size,
                n_features: FEATURES as usize,
            })
        }
        Variant::Svr => {
            let kernel = read_kernel(&mut r)?;
            let bias = r.f64()?;
            let n = r.count(24)?;
            r.u32()?;
            let mut support_vectors = Vec::with_capacity(n);
            let mut coefficients = Vec::with_capacity(n);
            for _ in 0..n {
                coefficients.push(r.f64()?);
                support_vectors.push(vec![r.f64()?, r.f64()?]);
            }
            Estimator::Svr(Svr {
                support_vectors,
                coefficients,
                bias,
                kernel,
            })
        }
        Variant::Gp => {
            let kernel = read_kernel(&mut r)?;
            let jitter = r.f64()?;
            let n = r.count(24)?;
            r.u32()?;
            let mut inputs = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for _ in 0..n {
                weights.push(r.f64()?);
                inputs.push(vec![r.f64()?, r.f64()?]);
            }
            Estimator::Gp(GaussianProcess {
                inputs,
                weights,
                kernel,
                jitter,
            })
        }
        Variant::Nn => {
            let inputs = r.u32()? as usize;
            let hidden = r.u32()? as usize;
            if inputs != FEATURES as usize || hidden == 0 {
                return Err(FormatError::Malformed("bad network shape".into()));
            }
            let need = (inputs * hidden + 2 * hidden + 1) * 8;
            if need != len - 8 {
                return Err(FormatError::Malformed("network payload size mismatch".into()));
            }
            let mut read = |k: usize| (0..k).map(|_| r.f64()).collect::<Result<Vec<_>, _>>();
            let w1 = read(inputs * hidden)?;
            let b1 = read(hidden)?;
            let w2 = read(hidden)?;
            let b2 = r.f64()?;
            Estimator::Nn(Mlp {
                inputs,
                hidden,
                w1,
                b1,
                w2,
                b2,
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(FormatError::Malformed("payload length does not match contents".into()));
    }
    Ok(TrainedModel {
        normalizer,
        target,
        target_mode,
        estimator,
        validation_loss: None,
    })
}

/// Children must point strictly forward so evaluation always terminates.
fn check_preorder(nodes: &[TreeNode]) -> Result<(), FormatError> {
    for (i, n) in nodes.iter().enumerate() {
        if let Some(s) = n.split {
            if s.left as usize <= i || s.right as usize <= i {
                return Err(FormatError::Malformed(format!("node {i} points backwards")));
            }
        }
    }
    Ok(())
}

pub fn write_compact(model: &TrainedModel, path: &std::path::Path) -> std::io::Result<()> {
    std::fs::write(path, export_compact(model))
}

pub fn read_compact(path: &std::path::Path) -> Result<TrainedModel, ReadModelError> {
    let bytes = std::fs::read(path)?;
    Ok(import_compact(&bytes)?)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}
