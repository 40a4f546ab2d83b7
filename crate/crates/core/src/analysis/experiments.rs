use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{LayerKind, ModelGraph};
use crate::photocore::{Bypass, PhotocoreConfig, Placement, ScaleMode};

use super::eval::{evaluate_reference, evaluate_simulated};
use super::metrics::MetricReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub layer_index: usize,
    pub layer_kind: LayerKind,
    pub miou_fp32: f64,
    pub miou_quantized: f64,
    /// `miou_fp32 - miou_quantized`.
    pub metric_drop: f64,
}

/// Runs each eligible layer alone on the photocore, rows in layer order.
pub fn layer_sensitivity_scan(
    model: &ModelGraph,
    dataset: &Dataset,
    cfg: &PhotocoreConfig,
) -> Result<Vec<SensitivityRow>> {
    let eligible = model.eligible_layers();
    if eligible.is_empty() {
        return Err(Error::Model("model has no photocore-eligible layers".into()));
    }
    let fp32 = evaluate_reference(model, dataset)?.miou;
    eligible
        .into_iter()
        .map(|i| {
            let q = evaluate_simulated(model, dataset, cfg, Placement::Only(i))?.miou;
            Ok(SensitivityRow {
                layer_index: i,
                layer_kind: model.layers()[i].kind(),
                miou_fp32: fp32,
                miou_quantized: q,
                metric_drop: fp32 - q,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSetting {
    All,
    NoInputQ,
    NoWeightQ,
    NoOutputQ,
}

impl AblationSetting {
    pub const ORDER: [AblationSetting; 4] =
        [AblationSetting::All, AblationSetting::NoInputQ, AblationSetting::NoWeightQ, AblationSetting::NoOutputQ];

    pub fn bypass(self) -> Bypass {
        match self {
            AblationSetting::All => Bypass::None,
            AblationSetting::NoInputQ => Bypass::InputQ,
            AblationSetting::NoWeightQ => Bypass::WeightQ,
            AblationSetting::NoOutputQ => Bypass::OutputQ,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationSetting::All => "all",
            AblationSetting::NoInputQ => "no_input_q",
            AblationSetting::NoWeightQ => "no_weight_q",
            AblationSetting::NoOutputQ => "no_output_q",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub layer_index: usize,
    pub fp32: MetricReport,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Share of the all-quantization mIoU drop recovered by `setting`.
    /// `None` when quantization costs nothing.
    pub fn recovery(&self, setting: AblationSetting) -> Option<f64> {
        let miou = |s| self.rows.iter().find(|r| r.setting == s).map(|r| r.report.miou);
        let all = miou(AblationSetting::All)?;
        let drop = self.fp32.miou - all;
        let target = miou(setting)?;
        (drop > 0.0).then(|| (target - all) / drop)
    }
}

/// The target layer alone on the photocore under each single-stage bypass.
pub fn quantization_ablation(
    model: &ModelGraph,
    dataset: &Dataset,
    cfg: &PhotocoreConfig,
    layer_index: usize,
) -> Result<AblationTable> {
    if !model.eligible_layers().contains(&layer_index) {
        return Err(Error::Model(format!("layer {layer_index} cannot run on the photocore")));
    }
    let fp32 = evaluate_reference(model, dataset)?;
    let rows = AblationSetting::ORDER
        .iter()
        .map(|&setting| {
            let c = cfg.clone().with_bypass(setting.bypass());
            let report = evaluate_simulated(model, dataset, &c, Placement::Only(layer_index))?.relative_to(&fp32);
            Ok(AblationRow { setting, report })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable { layer_index, fp32, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbfpComparison {
    pub with_abfp: MetricReport,
    pub without_abfp: MetricReport,
}

/// Declared placement with per-vector scales versus one scale per tensor.
pub fn abfp_ablation(model: &ModelGraph, dataset: &Dataset, cfg: &PhotocoreConfig) -> Result<AbfpComparison> {
    let fp32 = evaluate_reference(model, dataset)?;
    let run = |mode| {
        let c = PhotocoreConfig { scale_mode: mode, ..cfg.clone() };
        Ok::<_, Error>(evaluate_simulated(model, dataset, &c, Placement::Declared)?.relative_to(&fp32))
    };
    Ok(AbfpComparison { with_abfp: run(ScaleMode::Abfp)?, without_abfp: run(ScaleMode::PerTensor)? })
}
