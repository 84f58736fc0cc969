use serde::{Deserialize, Serialize};

use super::StatsError;

pub const FAC2_MIN: f64 = 0.5;
pub const FB_MAX_ABS: f64 = 0.3;
pub const NMSE_MAX: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub station_id: String,
    /// Observed concentration Co.
    pub observed: f64,
    /// Predicted concentration Cp.
    pub predicted: f64,
}

impl PairedSample {
    pub fn new(station_id: impl Into<String>, observed: f64, predicted: f64) -> Self {
        PairedSample { station_id: station_id.into(), observed, predicted }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fac2: f64,
    pub fb: f64,
    pub nmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub fac2: f64,
    pub fb: f64,
    pub nmse: f64,
    pub n: usize,
    pub pass_fac2: bool,
    pub pass_fb: bool,
    pub pass_nmse: bool,
    pub accepted: bool,
}

/// FAC2, FB and NMSE over the pairs:
///
/// * FAC2 = share of pairs with 0.5 <= Cp/Co <= 2
/// * FB = (mean Co - mean Cp) / (0.5 (mean Co + mean Cp))
/// * NMSE = mean((Co - Cp)^2) / (mean Co * mean Cp)
///
/// Pairs are expected to have Co > 0 and Cp >= 0.
pub fn compute_metrics(pairs: &[PairedSample]) -> Result<Metrics, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(p) = pairs.iter().find(|p| !(p.observed > 0.0) || !(p.predicted >= 0.0) || !p.predicted.is_finite() || !p.observed.is_finite()) {
        return Err(StatsError::UndefinedMetric(format!(
            "pair for {} has Co={} Cp={}; need Co > 0 and Cp >= 0",
            p.station_id, p.observed, p.predicted
        )));
    }
    let n = pairs.len() as f64;
    let mean_o = pairs.iter().map(|p| p.observed).sum::<f64>() / n;
    let mean_p = pairs.iter().map(|p| p.predicted).sum::<f64>() / n;
    let denom = mean_o * mean_p;
    if denom == 0.0 {
        return Err(StatsError::UndefinedMetric("mean(Co) * mean(Cp) is zero".into()));
    }
    let within = pairs
        .iter()
        .filter(|p| {
            let r = p.predicted / p.observed;
            (0.5..=2.0).contains(&r)
        })
        .count();
    let mse = pairs.iter().map(|p| (p.observed - p.predicted).powi(2)).sum::<f64>() / n;
    Ok(Metrics {
        fac2: within as f64 / n,
        fb: (mean_o - mean_p) / (0.5 * (mean_o + mean_p)),
        nmse: mse / denom,
        n: pairs.len(),
    })
}

/// Applies the thresholds FAC2 >= 0.5, |FB| <= 0.3, NMSE <= 1.5 (all
/// inclusive); a model is accepted when at least two hold.
pub fn acceptance(m: Metrics) -> EvalResult {
    let pass_fac2 = m.fac2 >= FAC2_MIN;
    let pass_fb = m.fb.abs() <= FB_MAX_ABS;
    let pass_nmse = m.nmse <= NMSE_MAX;
    let passed = [pass_fac2, pass_fb, pass_nmse].into_iter().filter(|b| *b).count();
    EvalResult {
        fac2: m.fac2,
        fb: m.fb,
        nmse: m.nmse,
        n: m.n,
        pass_fac2,
        pass_fb,
        pass_nmse,
        accepted: passed >= 2,
    }
}

pub fn evaluate(pairs: &[PairedSample]) -> Result<EvalResult, StatsError> {
    compute_metrics(pairs).map(acceptance)
}
