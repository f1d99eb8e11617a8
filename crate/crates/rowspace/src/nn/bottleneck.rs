//! ResNet bottleneck block: 1×1 reduce → 3×3 → 1×1 expand with a residual
//! shortcut (torchvision layout: stride on the 3×3, batch norm after every
//! conv, relu after the residual add).

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::nn::norm::BatchNorm2d;
use crate::ops;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One bottleneck pass over explicit kernel tensors. `reduce` and `expand`
/// are `[c_mid×c_in×1×1]` / `[c_out×c_mid×1×1]`; tied blocks pass views of a
/// single storage for both.
pub struct BottleneckParts<'a, T: Scalar> {
    pub reduce: &'a Tensor<T>,
    pub bn1: &'a BatchNorm2d<T>,
    pub g_conv: &'a Tensor<T>,
    pub bn2: &'a BatchNorm2d<T>,
    pub expand: &'a Tensor<T>,
    pub bn3: &'a BatchNorm2d<T>,
    pub stride: usize,
    pub downsample: Option<(&'a Tensor<T>, &'a BatchNorm2d<T>)>,
}

pub fn bottleneck_core<T: Scalar>(
    x: &Tensor<T>,
    parts: &BottleneckParts<'_, T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let y = ops::conv2d(x, parts.reduce, 1, 0)?;
    let y = parts.bn1.forward(&y, mode)?;
    let y = ops::relu(&y);
    let y = ops::conv2d(&y, parts.g_conv, parts.stride, 1)?;
    let y = parts.bn2.forward(&y, mode)?;
    let y = ops::relu(&y);
    let y = ops::conv2d(&y, parts.expand, 1, 0)?;
    let y = parts.bn3.forward(&y, mode)?;
    let shortcut = match parts.downsample {
        Some((w, bn)) => {
            let s = ops::conv2d(x, w, parts.stride, 0)?;
            bn.forward(&s, mode)?
        }
        None => x.clone(),
    };
    if y.dims() != shortcut.dims() {
        return Err(Error::shape(format!(
            "residual addition requires output dims {:?} == shortcut dims {:?} \
             (configure a downsample path for this block)",
            y.dims(),
            shortcut.dims()
        )));
    }
    Ok(ops::relu(&ops::add(&y, &shortcut)?))
}

/// Conventional (untied) bottleneck block.
pub struct BottleneckBlock<T: Scalar> {
    w_reduce: Parameter<T>,
    bn1: BatchNorm2d<T>,
    g_conv: Parameter<T>,
    bn2: BatchNorm2d<T>,
    w_expand: Parameter<T>,
    bn3: BatchNorm2d<T>,
    downsample: Option<(Parameter<T>, BatchNorm2d<T>)>,
    stride: usize,
}

impl<T: Scalar> BottleneckBlock<T> {
    /// `downsample` must be set whenever `stride != 1` or `c_in != c_out`.
    pub fn new(
        prefix: &str,
        c_in: usize,
        c_mid: usize,
        c_out: usize,
        stride: usize,
        downsample: bool,
    ) -> Result<Self> {
        if !downsample && (stride != 1 || c_in != c_out) {
            return Err(Error::Build(format!(
                "block {prefix}: identity shortcut needs stride 1 and c_in == c_out \
                 (got stride {stride}, {c_in} -> {c_out})"
            )));
        }
        let conv = |suffix: &str, dims: Vec<usize>| {
            Parameter::new(format!("{prefix}.{suffix}"), dims, InitKind::KaimingFanOut)
        };
        Ok(BottleneckBlock {
            w_reduce: conv("reduce", vec![c_mid, c_in, 1, 1]),
            bn1: BatchNorm2d::new(&format!("{prefix}.bn1"), c_mid),
            g_conv: conv("g.conv", vec![c_mid, c_mid, 3, 3]),
            bn2: BatchNorm2d::new(&format!("{prefix}.g.bn"), c_mid),
            w_expand: conv("expand", vec![c_out, c_mid, 1, 1]),
            bn3: BatchNorm2d::new(&format!("{prefix}.bn3"), c_out),
            downsample: downsample.then(|| {
                (
                    conv("downsample.conv", vec![c_out, c_in, 1, 1]),
                    BatchNorm2d::new(&format!("{prefix}.downsample.bn"), c_out),
                )
            }),
            stride,
        })
    }

    pub fn w_reduce(&self) -> &Parameter<T> {
        &self.w_reduce
    }

    pub fn w_expand(&self) -> &Parameter<T> {
        &self.w_expand
    }

    pub fn g_conv(&self) -> &Parameter<T> {
        &self.g_conv
    }

    pub fn norms(&self) -> [&BatchNorm2d<T>; 3] {
        [&self.bn1, &self.bn2, &self.bn3]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn has_downsample(&self) -> bool {
        self.downsample.is_some()
    }
}

impl<T: Scalar> Module<T> for BottleneckBlock<T> {
    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let reduce = self.w_reduce.tracked();
        let g = self.g_conv.tracked();
        let expand = self.w_expand.tracked();
        let ds_kernel = self.downsample.as_ref().map(|(w, _)| w.tracked());
        let downsample = self
            .downsample
            .as_ref()
            .zip(ds_kernel.as_ref())
            .map(|((_, bn), w)| (w, bn));
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
                downsample,
            },
            mode,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut ps = vec![self.w_reduce.clone()];
        ps.extend(self.bn1.parameters());
        ps.push(self.g_conv.clone());
        ps.extend(self.bn2.parameters());
        ps.push(self.w_expand.clone());
        ps.extend(self.bn3.parameters());
        if let Some((w, bn)) = &self.downsample {
            ps.push(w.clone());
            ps.extend(bn.parameters());
        }
        ps
    }
}
