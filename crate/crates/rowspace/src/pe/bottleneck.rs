//! Tied bottleneck blocks and stage-level weight sharing.
//!
//! An identity bottleneck ties its two 1×1 convolutions to one stored
//! matrix: reduce applies `W`, expand applies the channel-transpose view
//! `Wᵀ` of the same storage (never a copy). A [`SharedStage`] goes further
//! and hands one `W` to every block of a ResNet stage, so the whole stage's
//! 1×1 pairs cost a single parameter tensor. Gradients from every role and
//! every block accumulate into that one buffer.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::nn::{bottleneck_core, BatchNorm2d, BottleneckParts};
use crate::ops;
use crate::param::{dedup_params, InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Identity bottleneck with tied 1×1 convolutions. Requires
/// `c_in == c_out`: the expand role is `Wᵀ`, which forces the output width
/// back to the input width.
pub struct TiedBottleneckBlock<T: Scalar> {
    w: Parameter<T>,
    g_conv: Parameter<T>,
    bn1: BatchNorm2d<T>,
    bn2: BatchNorm2d<T>,
    bn3: BatchNorm2d<T>,
}

impl<T: Scalar> TiedBottleneckBlock<T> {
    /// Private `W` and `G`; errors when the widths cannot tie.
    pub fn new(prefix: &str, c_in: usize, c_out: usize, c_mid: usize) -> Result<Self> {
        if c_in != c_out {
            return Err(Error::Build(format!(
                "block {prefix}: tying requires c_in == c_out, got {c_in} -> {c_out} \
                 (the Wᵀ expand lands back in the input width)"
            )));
        }
        let w = Parameter::new(
            format!("{prefix}.w"),
            vec![c_mid, c_in, 1, 1],
            InitKind::KaimingFanOut,
        );
        let g_conv = Parameter::new(
            format!("{prefix}.g.conv"),
            vec![c_mid, c_mid, 3, 3],
            InitKind::KaimingFanOut,
        );
        Ok(Self::from_shared(prefix, w, g_conv))
    }

    /// Block over an externally owned tied weight (and possibly a shared 3×3
    /// kernel); the norms are always private to the block.
    pub fn from_shared(prefix: &str, w: Parameter<T>, g_conv: Parameter<T>) -> Self {
        let c_mid = w.dims()[0];
        let c = w.dims()[1];
        TiedBottleneckBlock {
            w,
            g_conv,
            bn1: BatchNorm2d::new(&format!("{prefix}.bn1"), c_mid),
            bn2: BatchNorm2d::new(&format!("{prefix}.g.bn"), c_mid),
            bn3: BatchNorm2d::new(&format!("{prefix}.bn3"), c),
        }
    }

    pub fn w(&self) -> &Parameter<T> {
        &self.w
    }

    pub fn g_conv(&self) -> &Parameter<T> {
        &self.g_conv
    }

    pub fn norms(&self) -> [&BatchNorm2d<T>; 3] {
        [&self.bn1, &self.bn2, &self.bn3]
    }

    /// The expand role's kernel: a channel-transpose view of `w`'s storage.
    pub fn expand_kernel(&self) -> Tensor<T> {
        self.w
            .value()
            .permuted_view(&[1, 0, 2, 3])
            .expect("w is rank 4 by construction")
    }
}

impl<T: Scalar> Module<T> for TiedBottleneckBlock<T> {
    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let reduce = self.w.tracked();
        let expand = ops::permute(&reduce, &[1, 0, 2, 3])?;
        let g = self.g_conv.tracked();
        bottleneck_core(
            x,
            &BottleneckParts {
                reduce: &reduce,
                bn1: &self.bn1,
                g_conv: &g,
                bn2: &self.bn2,
                expand: &expand,
                bn3: &self.bn3,
                stride: 1,
                downsample: None,
            },
            mode,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut ps = vec![self.w.clone(), self.g_conv.clone()];
        ps.extend(self.bn1.parameters());
        ps.extend(self.bn2.parameters());
        ps.extend(self.bn3.parameters());
        ps
    }
}

/// First block of a tied stage: it still changes width and stride, but its
/// 1×1 projections are *views into the stage matrix* rather than private
/// weights — the reduction reads the leading `c_in` columns of `W`, the
/// expansion applies `Wᵀ` in full. The 3×3 kernel (which carries the
/// stride), the norms and the downsample projection stay private.
pub struct StageEntryBlock<T: Scalar> {
    w: Parameter<T>,
    c_in: usize,
    g_conv: Parameter<T>,
    bn1: BatchNorm2d<T>,
    bn2: BatchNorm2d<T>,
    bn3: BatchNorm2d<T>,
    ds_conv: Parameter<T>,
    ds_bn: BatchNorm2d<T>,
    stride: usize,
}

impl<T: Scalar> StageEntryBlock<T> {
    pub fn new(prefix: &str, w: Parameter<T>, c_in: usize, stride: usize) -> Result<Self> {
        let c_mid = w.dims()[0];
        let c_out = w.dims()[1];
        if c_in > c_out {
            return Err(Error::Build(format!(
                "block {prefix}: entry width {c_in} exceeds stage width {c_out}"
            )));
        }
        Ok(StageEntryBlock {
            w,
            c_in,
            g_conv: Parameter::new(
                format!("{prefix}.g.conv"),
                vec![c_mid, c_mid, 3, 3],
                InitKind::KaimingFanOut,
            ),
            bn1: BatchNorm2d::new(&format!("{prefix}.bn1"), c_mid),
            bn2: BatchNorm2d::new(&format!("{prefix}.g.bn"), c_mid),
            bn3: BatchNorm2d::new(&format!("{prefix}.bn3"), c_out),
            ds_conv: Parameter::new(
                format!("{prefix}.downsample.conv"),
                vec![c_out, c_in, 1, 1],
                InitKind::KaimingFanOut,
            ),
            ds_bn: BatchNorm2d::new(&format!("{prefix}.downsample.bn"), c_out),
            stride,
        })
    }

    pub fn g_conv(&self) -> &Parameter<T> {
        &self.g_conv
    }

    pub fn norms(&self) -> [&BatchNorm2d<T>; 3] {
        [&self.bn1, &self.bn2, &self.bn3]
    }

    pub fn downsample(&self) -> (&Parameter<T>, &BatchNorm2d<T>) {
        (&self.ds_conv, &self.ds_bn)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }
}

impl<T: Scalar> Module<T> for StageEntryBlock<T> {
    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let w = self.w.tracked();
        let reduce = ops::narrow(&w, 1, self.c_in)?;
        let expand = ops::permute(&w, &[1, 0, 2, 3])?;
        let g = self.g_conv.tracked();
        let ds = self.ds_conv.tracked();
        bottleneck_core(
            x,
            &BottleneckParts {
                reduce: &reduce,
                bn1: &self.bn1,
                g_conv: &g,
                bn2: &self.bn2,
                expand: &expand,
                bn3: &self.bn3,
                stride: self.stride,
                downsample: Some((&ds, &self.ds_bn)),
            },
            mode,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut ps = vec![self.w.clone(), self.g_conv.clone()];
        ps.extend(self.bn1.parameters());
        ps.extend(self.bn2.parameters());
        ps.extend(self.bn3.parameters());
        ps.push(self.ds_conv.clone());
        ps.extend(self.ds_bn.parameters());
        ps
    }
}

/// A ResNet stage whose blocks all reference one tied matrix `W` (and, when
/// built with `share_g`, one 3×3 kernel for the identity blocks). Private
/// per block: every norm, the entry block's 3×3 and downsample path.
pub struct SharedStage<T: Scalar> {
    w: Parameter<T>,
    entry: Option<StageEntryBlock<T>>,
    blocks: Vec<TiedBottleneckBlock<T>>,
}

impl<T: Scalar> SharedStage<T> {
    /// Stage of `n` identity blocks at constant width `c` (no entry block).
    pub fn identity_stage(
        prefix: &str,
        c: usize,
        c_mid: usize,
        n: usize,
        share_g: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Build(format!("stage {prefix}: needs n ≥ 1 blocks")));
        }
        let w = Parameter::new(
            format!("{prefix}.w"),
            vec![c_mid, c, 1, 1],
            InitKind::KaimingFanOut,
        );
        let shared_g = share_g.then(|| {
            Parameter::new(
                format!("{prefix}.g.conv"),
                vec![c_mid, c_mid, 3, 3],
                InitKind::KaimingFanOut,
            )
        });
        let blocks = (0..n)
            .map(|i| {
                let bp = format!("{prefix}.block{i}");
                let g = match &shared_g {
                    Some(g) => g.clone(),
                    None => Parameter::new(
                        format!("{bp}.g.conv"),
                        vec![c_mid, c_mid, 3, 3],
                        InitKind::KaimingFanOut,
                    ),
                };
                TiedBottleneckBlock::from_shared(&bp, w.clone(), g)
            })
            .collect();
        Ok(SharedStage {
            w,
            entry: None,
            blocks,
        })
    }

    /// Full ResNet stage: entry block changing `c_in → c_out` at `stride`,
    /// then `n − 1` identity blocks, all drawing on one stage matrix.
    pub fn with_entry(
        prefix: &str,
        c_in: usize,
        c_mid: usize,
        c_out: usize,
        n: usize,
        stride: usize,
        share_g: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Build(format!("stage {prefix}: needs n ≥ 1 blocks")));
        }
        let w = Parameter::new(
            format!("{prefix}.w"),
            vec![c_mid, c_out, 1, 1],
            InitKind::KaimingFanOut,
        );
        let entry = StageEntryBlock::new(&format!("{prefix}.block0"), w.clone(), c_in, stride)?;
        let shared_g = share_g.then(|| {
            Parameter::new(
                format!("{prefix}.g.conv"),
                vec![c_mid, c_mid, 3, 3],
                InitKind::KaimingFanOut,
            )
        });
        let blocks = (1..n)
            .map(|i| {
                let bp = format!("{prefix}.block{i}");
                let g = match &shared_g {
                    Some(g) => g.clone(),
                    None => Parameter::new(
                        format!("{bp}.g.conv"),
                        vec![c_mid, c_mid, 3, 3],
                        InitKind::KaimingFanOut,
                    ),
                };
                TiedBottleneckBlock::from_shared(&bp, w.clone(), g)
            })
            .collect();
        Ok(SharedStage {
            w,
            entry: Some(entry),
            blocks,
        })
    }

    pub fn w(&self) -> &Parameter<T> {
        &self.w
    }

    pub fn entry(&self) -> Option<&StageEntryBlock<T>> {
        self.entry.as_ref()
    }

    pub fn blocks(&self) -> &[TiedBottleneckBlock<T>] {
        &self.blocks
    }
}

impl<T: Scalar> Module<T> for SharedStage<T> {
    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut y = match &self.entry {
            Some(entry) => entry.forward(x, mode)?,
            None => x.clone(),
        };
        for block in &self.blocks {
            y = block.forward(&y, mode)?;
        }
        Ok(y)
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut ps = Vec::new();
        if let Some(entry) = &self.entry {
            ps.extend(entry.parameters());
        }
        for block in &self.blocks {
            ps.extend(block.parameters());
        }
        dedup_params(ps)
    }
}
