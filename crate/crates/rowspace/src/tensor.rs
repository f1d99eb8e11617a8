//! Dense n-dimensional tensors with shared, view-capable storage.
//!
//! A `Tensor` is a shape, a stride vector and a reference-counted storage
//! buffer. Transpose and permute produce *views*: they share the storage of
//! their source, so a write through one is observable through the other.
//! That sharing is what makes a tied weight a single object used in two
//! roles rather than two copies.

use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tape::NodeId;

/// Dense row-major-logical tensor over shared storage.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    dims: Vec<usize>,
    strides: Vec<usize>,
    storage: Arc<RwLock<Vec<T>>>,
    node: Option<NodeId>,
}

fn contiguous_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from row-major data. Every extent must be ≥ 1 and
    /// their product must equal `data.len()`.
    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero extent in dims {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} imply {numel} elements but data has {}",
                data.len()
            )));
        }
        let strides = contiguous_strides(&dims);
        Ok(Tensor {
            dims,
            strides,
            storage: Arc::new(RwLock::new(data)),
            node: None,
        })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Self {
        let dims = dims.into();
        let numel: usize = dims.iter().product();
        Tensor::from_vec(dims, vec![T::ZERO; numel]).expect("zeros: consistent by construction")
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: T) -> Self {
        let dims = dims.into();
        let numel: usize = dims.iter().product();
        Tensor::from_vec(dims, vec![value; numel]).expect("full: consistent by construction")
    }

    /// A rank-1, single-element tensor (the shape `backward` expects of a loss).
    pub fn scalar(value: T) -> Self {
        Tensor::from_vec(vec![1], vec![value]).expect("scalar: consistent by construction")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    pub fn is_contiguous(&self) -> bool {
        self.strides == contiguous_strides(&self.dims)
    }

    /// Identity of the underlying storage buffer; equal ids mean shared storage.
    pub fn storage_id(&self) -> usize {
        Arc::as_ptr(&self.storage) as *const () as usize
    }

    pub(crate) fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub(crate) fn set_node(&mut self, node: NodeId) {
        self.node = Some(node);
    }

    /// Same storage, not attached to any tape node.
    pub fn detached(&self) -> Tensor<T> {
        Tensor {
            dims: self.dims.clone(),
            strides: self.strides.clone(),
            storage: Arc::clone(&self.storage),
            node: None,
        }
    }

    /// A deep copy with fresh storage (always contiguous).
    pub fn deep_clone(&self) -> Tensor<T> {
        Tensor::from_vec(self.dims.clone(), self.to_vec()).expect("deep_clone: shape preserved")
    }

    fn offset_of(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::Index(format!(
                "index rank {} does not match tensor rank {}",
                index.len(),
                self.dims.len()
            )));
        }
        let mut off = 0usize;
        for (axis, (&i, (&d, &s))) in index
            .iter()
            .zip(self.dims.iter().zip(self.strides.iter()))
            .enumerate()
        {
            if i >= d {
                return Err(Error::Index(format!(
                    "index {i} out of range for axis {axis} with extent {d}"
                )));
            }
            off += i * s;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        let off = self.offset_of(index)?;
        Ok(self.storage.read().unwrap()[off])
    }

    /// Writes through this tensor's layout into the shared storage; the write
    /// is visible through every view of the same storage.
    pub fn set(&self, index: &[usize], value: T) -> Result<()> {
        let off = self.offset_of(index)?;
        self.storage.write().unwrap()[off] = value;
        Ok(())
    }

    /// Single element of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor with dims {:?}",
                self.dims
            )));
        }
        Ok(self.storage.read().unwrap()[0])
    }

    /// Materializes the logical row-major contents.
    pub fn to_vec(&self) -> Vec<T> {
        let data = self.storage.read().unwrap();
        if self.is_contiguous() {
            return data.clone();
        }
        let numel = self.numel();
        let mut out = Vec::with_capacity(numel);
        let rank = self.dims.len();
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        for _ in 0..numel {
            out.push(data[off]);
            // advance the mixed-radix counter, keeping a running offset
            for axis in (0..rank).rev() {
                idx[axis] += 1;
                off += self.strides[axis];
                if idx[axis] < self.dims[axis] {
                    break;
                }
                off -= self.strides[axis] * self.dims[axis];
                idx[axis] = 0;
            }
        }
        out
    }

    /// Overwrites the storage contents (row-major order, contiguous tensors only).
    pub fn copy_from_slice(&self, values: &[T]) -> Result<()> {
        if !self.is_contiguous() {
            return Err(Error::Contract(
                "copy_from_slice on a non-contiguous view".into(),
            ));
        }
        let mut data = self.storage.write().unwrap();
        if data.len() != values.len() {
            return Err(Error::shape(format!(
                "copy_from_slice: {} values into storage of {}",
                values.len(),
                data.len()
            )));
        }
        data.copy_from_slice(values);
        Ok(())
    }

    /// Applies `f` to the raw storage buffer (row-major for contiguous tensors).
    pub fn with_storage_mut<R>(&self, f: impl FnOnce(&mut [T]) -> R) -> R {
        let mut data = self.storage.write().unwrap();
        f(&mut data)
    }

    pub fn with_storage<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        let data = self.storage.read().unwrap();
        f(&data)
    }

    /// 2-d transpose view: shares storage, swaps dims and strides.
    /// This is layout-only; `ops::transpose` is the tape-recorded version.
    pub fn transposed_view(&self) -> Result<Tensor<T>> {
        if self.rank() != 2 {
            return Err(Error::Rank(format!(
                "transpose expects rank 2, got rank {} (dims {:?})",
                self.rank(),
                self.dims
            )));
        }
        Ok(Tensor {
            dims: vec![self.dims[1], self.dims[0]],
            strides: vec![self.strides[1], self.strides[0]],
            storage: Arc::clone(&self.storage),
            node: None,
        })
    }

    /// Axis-permutation view (generalized transpose); shares storage.
    pub fn permuted_view(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let rank = self.rank();
        if axes.len() != rank {
            return Err(Error::Rank(format!(
                "permute axes {axes:?} do not match rank {rank}"
            )));
        }
        let mut seen = vec![false; rank];
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(Error::Index(format!("invalid permutation {axes:?}")));
            }
            seen[a] = true;
        }
        Ok(Tensor {
            dims: axes.iter().map(|&a| self.dims[a]).collect(),
            strides: axes.iter().map(|&a| self.strides[a]).collect(),
            storage: Arc::clone(&self.storage),
            node: None,
        })
    }

    /// View of the leading `len` entries along `axis`; shares storage.
    pub fn narrowed_view(&self, axis: usize, len: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::Index(format!(
                "narrow axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        if len == 0 || len > self.dims[axis] {
            return Err(Error::shape(format!(
                "narrow to {len} along axis {axis} with extent {}",
                self.dims[axis]
            )));
        }
        let mut dims = self.dims.clone();
        dims[axis] = len;
        Ok(Tensor {
            dims,
            strides: self.strides.clone(),
            storage: Arc::clone(&self.storage),
            node: None,
        })
    }

    /// Reshape view for contiguous tensors; `None` when a copy would be needed.
    pub fn reshaped_view(&self, dims: impl Into<Vec<usize>>) -> Option<Tensor<T>> {
        if !self.is_contiguous() {
            return None;
        }
        let dims = dims.into();
        if dims.iter().any(|&d| d == 0) || dims.iter().product::<usize>() != self.numel() {
            return None;
        }
        let strides = contiguous_strides(&dims);
        Some(Tensor {
            dims,
            strides,
            storage: Arc::clone(&self.storage),
            node: None,
        })
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor<{}> dims {:?}", T::DTYPE, self.dims)?;
        if self.numel() <= 16 {
            write!(f, " {:?}", self.to_vec())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_extents() {
        assert!(Tensor::<f32>::from_vec(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::from_vec(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn transpose_view_shares_storage() {
        let t = Tensor::<f64>::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = t.transposed_view().unwrap();
        assert_eq!(v.to_vec(), vec![1.0, 3.0, 2.0, 4.0]);
        // write through the view at (0, 1), read through the source at (1, 0)
        v.set(&[0, 1], 9.0).unwrap();
        assert_eq!(t.get(&[1, 0]).unwrap(), 9.0);
        assert_eq!(t.storage_id(), v.storage_id());
    }

    #[test]
    fn transpose_requires_rank_two() {
        let t = Tensor::<f32>::zeros(vec![2, 2, 2]);
        assert!(matches!(t.transposed_view(), Err(Error::Rank(_))));
    }

    #[test]
    fn strided_to_vec_matches_manual_gather() {
        let t = Tensor::<f64>::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = t.permuted_view(&[1, 0]).unwrap();
        assert_eq!(p.dims(), &[3, 2]);
        assert_eq!(p.to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let n = t.narrowed_view(1, 2).unwrap();
        assert_eq!(n.to_vec(), vec![1.0, 2.0, 4.0, 5.0]);
    }
}
