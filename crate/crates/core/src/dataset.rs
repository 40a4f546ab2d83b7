//! Segmentation samples and the on-disk dataset layout
//! (`img_%04d.pcten` / `lbl_%04d.pcten` pairs in one directory).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Label value for pixels that belong to no class.
pub const BACKGROUND: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<i32>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<i32>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::shape(format!(
                "{height}x{width} mask needs {} labels, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(LabelMask { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        match self.data.iter().find(|&&v| v != BACKGROUND && (v < 0 || v as usize >= class_count)) {
            Some(v) => Err(Error::Domain(format!(
                "label {v} outside [0, {class_count}) and not background"
            ))),
            None => Ok(()),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width], self.data.iter().map(|&v| v as f32).collect())
            .expect("mask shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 2 {
            return Err(Error::shape(format!("label tensor must be 2-D, got {s:?}")));
        }
        let data = t
            .data()
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && v >= BACKGROUND as f32 && v < i32::MAX as f32 {
                    Ok(v as i32)
                } else {
                    Err(Error::Domain(format!("label value {v} is not a class id")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        LabelMask::new(s[0], s[1], data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSample {
    /// `[channels, height, width]`.
    pub image: Tensor,
    pub label: LabelMask,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<SegmentationSample>,
}

impl Dataset {
    pub fn new(samples: Vec<SegmentationSample>) -> Self {
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        for s in &self.samples {
            s.label.validate(class_count)?;
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, s) in self.samples.iter().enumerate() {
            s.image.save(dir.join(format!("img_{i:04}.pcten")))?;
            s.label.to_tensor().save(dir.join(format!("lbl_{i:04}.pcten")))?;
        }
        Ok(())
    }

    /// Reads consecutive pairs starting at index 0 until an image is missing.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let mut samples = Vec::new();
        for i in 0.. {
            let img = dir.join(format!("img_{i:04}.pcten"));
            if !img.exists() {
                break;
            }
            let image = Tensor::load(&img)?;
            let label = LabelMask::from_tensor(&Tensor::load(dir.join(format!("lbl_{i:04}.pcten")))?)?;
            if image.shape().len() != 3 || image.shape()[1..] != [label.height, label.width] {
                return Err(Error::shape(format!(
                    "sample {i}: image {:?} does not match label {}x{}",
                    image.shape(),
                    label.height,
                    label.width
                )));
            }
            samples.push(SegmentationSample { image, label });
        }
        Ok(Dataset { samples })
    }
}
