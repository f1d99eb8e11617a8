//! ViT stem: non-overlapping patch convolution, class token, positional
//! embedding.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::ops;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct PatchEmbed<T: Scalar> {
    conv_w: Parameter<T>,
    conv_b: Parameter<T>,
    cls_token: Parameter<T>,
    pos_embed: Parameter<T>,
    patch: usize,
    image_size: usize,
    dim: usize,
}

impl<T: Scalar> PatchEmbed<T> {
    pub fn new(prefix: &str, image_size: usize, patch: usize, dim: usize) -> Result<Self> {
        if patch == 0 || image_size % patch != 0 {
            return Err(Error::Build(format!(
                "image size {image_size} not divisible by patch {patch}"
            )));
        }
        let tokens = (image_size / patch) * (image_size / patch) + 1;
        Ok(PatchEmbed {
            conv_w: Parameter::new(
                format!("{prefix}.conv.w"),
                vec![dim, 3, patch, patch],
                InitKind::KaimingFanOut,
            ),
            conv_b: Parameter::new(format!("{prefix}.conv.b"), vec![dim], InitKind::Zeros),
            cls_token: Parameter::new(
                format!("{prefix}.cls_token"),
                vec![1, dim],
                InitKind::TruncNormal { std: 0.02 },
            ),
            pos_embed: Parameter::new(
                format!("{prefix}.pos_embed"),
                vec![tokens, dim],
                InitKind::TruncNormal { std: 0.02 },
            ),
            patch,
            image_size,
            dim,
        })
    }

    /// Token count including the class token.
    pub fn tokens(&self) -> usize {
        self.pos_embed.dims()[0]
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn conv_w(&self) -> &Parameter<T> {
        &self.conv_w
    }
}

impl<T: Scalar> Module<T> for PatchEmbed<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        if x.rank() != 4 || x.dims()[1] != 3 {
            return Err(Error::shape(format!(
                "patch embed expects [N,3,H,W], got {:?}",
                x.dims()
            )));
        }
        let (n, h, w) = (x.dims()[0], x.dims()[2], x.dims()[3]);
        if h != self.image_size || w != self.image_size {
            return Err(Error::shape(format!(
                "input {h}x{w} does not match configured image size {}",
                self.image_size
            )));
        }
        // kernel == stride: each output pixel is one non-overlapping patch
        let y = ops::conv2d(x, &self.conv_w.tracked(), self.patch, 0)?;
        let side = h / self.patch;
        let y = ops::reshape(&y, vec![n, self.dim, side * side])?;
        let y = ops::permute(&y, &[0, 2, 1])?;
        let y = ops::add_broadcast(&y, &self.conv_b.tracked())?;
        let cls = ops::expand_leading(&self.cls_token.tracked(), n);
        let y = ops::concat_tokens(&cls, &y)?;
        ops::add_broadcast(&y, &self.pos_embed.tracked())
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        vec![
            self.conv_w.clone(),
            self.conv_b.clone(),
            self.cls_token.clone(),
            self.pos_embed.clone(),
        ]
    }
}
