use crate::error::{Error, Result};
use crate::netgraph::{FeatureMapShape, Region};

/// Row-major `f32` tensor. Feature maps are rank 3 (height, width, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                what: "tensor payload",
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("tensor contains non-finite values".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
        }
    }

    pub(crate) fn from_map(shape: FeatureMapShape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.elements(), data.len());
        Self {
            dims: vec![shape.height, shape.width, shape.channels],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the tensor as a feature map; rank-1 tensors become `1x1xC`.
    pub fn map_shape(&self) -> Result<FeatureMapShape> {
        match self.dims.as_slice() {
            [h, w, c] => Ok(FeatureMapShape::new(*h, *w, *c)),
            [c] => Ok(FeatureMapShape::new(1, 1, *c)),
            other => Err(Error::ShapeMismatch {
                expected: vec![0, 0, 0],
                actual: other.to_vec(),
            }),
        }
    }

    /// Copies the spatial window `region` (all channels) out of a rank-3 map.
    pub fn extract(&self, region: Region) -> Result<Tensor> {
        let shape = self.map_shape()?;
        if !region.fits(&shape) {
            return Err(Error::RegionOutOfBounds {
                region: region.to_string(),
                depth: 0,
                height: shape.height,
                width: shape.width,
            });
        }
        let c = shape.channels;
        let mut out = Vec::with_capacity(region.area() * c);
        for r in region.row_start..region.row_end {
            let start = (r * shape.width + region.col_start) * c;
            let end = (r * shape.width + region.col_end) * c;
            out.extend_from_slice(&self.data[start..end]);
        }
        Ok(Tensor::from_map(region.shape(c), out))
    }

    /// Writes `patch` into the window `region` of this rank-3 map.
    pub fn paste(&mut self, region: Region, patch: &Tensor) -> Result<()> {
        let shape = self.map_shape()?;
        let c = shape.channels;
        if patch.map_shape()? != region.shape(c) || !region.fits(&shape) {
            return Err(Error::ShapeMismatch {
                expected: vec![region.height(), region.width(), c],
                actual: patch.dims.clone(),
            });
        }
        let row_len = region.width() * c;
        for (i, r) in (region.row_start..region.row_end).enumerate() {
            let dst = (r * shape.width + region.col_start) * c;
            self.data[dst..dst + row_len].copy_from_slice(&patch.data[i * row_len..(i + 1) * row_len]);
        }
        Ok(())
    }
}
