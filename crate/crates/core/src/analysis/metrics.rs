use serde::Serialize;

use crate::dataset::{LabelMask, BACKGROUND};
use crate::error::{Error, Result};

/// Pixel counts accumulated over any number of mask pairs.
/// Background-labelled pixels are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    class_count: usize,
    correct: u64,
    foreground: u64,
    intersection: Vec<u64>,
    predicted: Vec<u64>,
    labelled: Vec<u64>,
}

impl Confusion {
    pub fn new(class_count: usize) -> Self {
        Confusion {
            class_count,
            correct: 0,
            foreground: 0,
            intersection: vec![0; class_count],
            predicted: vec![0; class_count],
            labelled: vec![0; class_count],
        }
    }

    pub fn add(&mut self, pred: &LabelMask, label: &LabelMask) -> Result<()> {
        if (pred.height(), pred.width()) != (label.height(), label.width()) {
            return Err(Error::shape(format!(
                "prediction {}x{} vs label {}x{}",
                pred.height(),
                pred.width(),
                label.height(),
                label.width()
            )));
        }
        label.validate(self.class_count)?;
        for (&p, &l) in pred.data().iter().zip(label.data()) {
            if l == BACKGROUND {
                continue;
            }
            self.foreground += 1;
            self.labelled[l as usize] += 1;
            if p >= 0 && (p as usize) < self.class_count {
                self.predicted[p as usize] += 1;
                if p == l {
                    self.correct += 1;
                    self.intersection[l as usize] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.correct += other.correct;
        self.foreground += other.foreground;
        for c in 0..self.class_count {
            self.intersection[c] += other.intersection[c];
            self.predicted[c] += other.predicted[c];
            self.labelled[c] += other.labelled[c];
        }
    }

    pub fn pixel_accuracy(&self) -> Result<f64> {
        if self.foreground == 0 {
            return Err(Error::EmptyForeground);
        }
        Ok(self.correct as f64 / self.foreground as f64)
    }

    /// `None` for classes absent from both prediction and label.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.class_count)
            .map(|c| {
                let union = self.predicted[c] + self.labelled[c] - self.intersection[c];
                (union > 0).then(|| self.intersection[c] as f64 / union as f64)
            })
            .collect()
    }

    pub fn report(&self) -> Result<MetricReport> {
        let per_class_iou = self.per_class_iou();
        let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        let miou = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        Ok(MetricReport { pixel_accuracy: self.pixel_accuracy()?, per_class_iou, miou, percent_of_fp32: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PercentOfFp32 {
    pub pixel_accuracy: f64,
    pub miou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub pixel_accuracy: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent_of_fp32: Option<PercentOfFp32>,
}

impl MetricReport {
    /// Attaches `100 * self / baseline` for both metrics.
    pub fn relative_to(mut self, baseline: &MetricReport) -> Self {
        let pct = |a: f64, b: f64| if b > 0.0 { 100.0 * a / b } else { 0.0 };
        self.percent_of_fp32 = Some(PercentOfFp32 {
            pixel_accuracy: pct(self.pixel_accuracy, baseline.pixel_accuracy),
            miou: pct(self.miou, baseline.miou),
        });
        self
    }
}

/// Correct predictions over non-background label pixels.
pub fn pixel_accuracy(pred: &LabelMask, label: &LabelMask) -> Result<f64> {
    let class_count = class_bound(pred, label);
    let mut c = Confusion::new(class_count);
    c.add(pred, label)?;
    c.pixel_accuracy()
}

pub fn mean_iou(pred: &LabelMask, label: &LabelMask, class_count: usize) -> Result<MetricReport> {
    let mut c = Confusion::new(class_count);
    c.add(pred, label)?;
    let mut r = c.report();
    if let Err(Error::EmptyForeground) = r {
        // mIoU is still defined; pixel accuracy has nothing to count.
        let per_class_iou = c.per_class_iou();
        r = Ok(MetricReport { pixel_accuracy: 0.0, per_class_iou, miou: 0.0, percent_of_fp32: None });
    }
    r
}

fn class_bound(pred: &LabelMask, label: &LabelMask) -> usize {
    pred.data().iter().chain(label.data()).map(|&v| v.max(0) as usize + 1).max().unwrap_or(1)
}
