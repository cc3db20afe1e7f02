use rand::Rng;

use crate::autograd::Tensor;
use crate::domain::{encode_labels, QuadrupleSample};
use crate::error::{Error, Result};

/// Training samples pre-converted to planar tensors.
#[derive(Clone, Debug)]
pub struct TrainData {
    num_classes: usize,
    height: usize,
    width: usize,
    degraded: Vec<Tensor<f32>>,
    gt_image: Vec<Tensor<f32>>,
    degraded_seg: Vec<Tensor<f32>>,
    gt_seg: Vec<Tensor<f32>>,
    gt_labels: Vec<Vec<usize>>,
}

/// One sampled mini-batch in NCHW layout.
#[derive(Clone, Debug)]
pub struct Batch {
    pub degraded: Tensor<f32>,
    pub gt_image: Tensor<f32>,
    /// One-hot `S_d`.
    pub degraded_seg: Tensor<f32>,
    /// One-hot `S_gt`.
    pub gt_seg: Tensor<f32>,
    pub gt_labels: Vec<usize>,
}

impl TrainData {
    pub fn new(samples: &[QuadrupleSample], num_classes: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("no training samples".into()))?;
        let (height, width) = (first.gt_image.height(), first.gt_image.width());
        let mut d = Self {
            num_classes,
            height,
            width,
            degraded: Vec::with_capacity(samples.len()),
            gt_image: Vec::with_capacity(samples.len()),
            degraded_seg: Vec::with_capacity(samples.len()),
            gt_seg: Vec::with_capacity(samples.len()),
            gt_labels: Vec::with_capacity(samples.len()),
        };
        for s in samples {
            if (s.gt_image.height(), s.gt_image.width()) != (height, width) {
                return Err(Error::ShapeMismatch("training samples differ in size".into()));
            }
            if s.gt_seg.num_classes() != num_classes {
                return Err(Error::ClassMismatch(format!(
                    "sample has {} classes, expected {num_classes}",
                    s.gt_seg.num_classes()
                )));
            }
            d.degraded.push(s.degraded.to_chw());
            d.gt_image.push(s.gt_image.to_chw());
            d.degraded_seg.push(encode_labels(&s.degraded_seg, num_classes)?.to_chw());
            d.gt_seg.push(encode_labels(&s.gt_seg, num_classes)?.to_chw());
            d.gt_labels.push(s.gt_seg.indices());
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.degraded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degraded.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let pick = |v: &[Tensor<f32>]| {
            let mut shape = vec![indices.len()];
            shape.extend_from_slice(v[0].shape());
            let mut data = Vec::with_capacity(indices.len() * v[0].len());
            for &i in indices {
                data.extend_from_slice(v[i].data());
            }
            Tensor::new(shape, data)
        };
        Batch {
            degraded: pick(&self.degraded),
            gt_image: pick(&self.gt_image),
            degraded_seg: pick(&self.degraded_seg),
            gt_seg: pick(&self.gt_seg),
            gt_labels: indices.iter().flat_map(|&i| self.gt_labels[i].iter().copied()).collect(),
        }
    }

    /// Draw `n` indices uniformly with replacement.
    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> Batch {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.len())).collect();
        self.gather(&idx)
    }
}
