use serde::{Deserialize, Serialize};

use crate::biomarker::{Biomarker, BiomarkerValues};
use crate::error::{Error, Result};
use crate::signal::CONSTANT_EPS;

/// Per-target standardization fitted on training values. Categorical targets
/// pass through unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub targets: Vec<Biomarker>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn fit_one(table: &[BiomarkerValues], t: Biomarker) -> Result<(f64, f64)> {
    if t.is_categorical() {
        return Ok((0.0, 1.0));
    }
    let v: Vec<f64> = table.iter().filter_map(|r| r.get(&t).copied()).collect();
    if v.len() < 2 {
        return Err(Error::InsufficientData(format!("{t}: {} values", v.len())));
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
    if s < CONSTANT_EPS * m.abs().max(1.0) {
        return Err(Error::InsufficientData(format!("{t}: zero variance")));
    }
    Ok((m, s))
}

/// Mean and population standard deviation over the present values of each
/// target.
pub fn fit_scaler(table: &[BiomarkerValues], targets: &[Biomarker]) -> Result<StandardScaler> {
    let (mean, std) = targets.iter().map(|&t| fit_one(table, t)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(StandardScaler {
        targets: targets.to_vec(),
        mean,
        std,
    })
}

/// The `candidates` that `table` can fit, in order, and the reasons the
/// others were dropped. A categorical target needs at least one value.
pub fn fittable_targets(table: &[BiomarkerValues], candidates: &[Biomarker]) -> (Vec<Biomarker>, Vec<Error>) {
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for &t in candidates {
        let present = table.iter().any(|r| r.contains_key(&t));
        let fitted = if present { fit_one(table, t) } else { Err(Error::InsufficientData(format!("{t}: no values"))) };
        match fitted {
            Ok(_) => keep.push(t),
            Err(e) => dropped.push(e),
        }
    }
    (keep, dropped)
}

impl StandardScaler {
    /// Identity scaling for the given targets.
    pub fn identity(targets: &[Biomarker]) -> Self {
        Self {
            targets: targets.to_vec(),
            mean: vec![0.0; targets.len()],
            std: vec![1.0; targets.len()],
        }
    }

    /// Scaled values in target order; missing targets map to `None`.
    pub fn transform(&self, values: &BiomarkerValues) -> Vec<Option<f64>> {
        self.targets
            .iter()
            .enumerate()
            .map(|(i, t)| values.get(t).map(|v| (v - self.mean[i]) / self.std[i]))
            .collect()
    }

    pub fn inverse(&self, scaled: &[f64]) -> BiomarkerValues {
        self.targets
            .iter()
            .enumerate()
            .map(|(i, t)| (*t, scaled[i] * self.std[i] + self.mean[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(t: Biomarker, v: &[f64]) -> Vec<BiomarkerValues> {
        v.iter().map(|x| BiomarkerValues::from([(t, *x)])).collect()
    }

    #[test]
    fn population_statistics() {
        let s = fit_scaler(&rows(Biomarker::Age, &[1.0, 3.0]), &[Biomarker::Age]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (2.0, 1.0));
        assert!(matches!(
            fit_scaler(&rows(Biomarker::Age, &[4.0, 4.0, 4.0]), &[Biomarker::Age]),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_scaler(&rows(Biomarker::Age, &[4.0]), &[Biomarker::Age]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn missing_values_are_skipped() {
        let mut t = rows(Biomarker::Age, &[10.0, 20.0]);
        t.push(BiomarkerValues::from([(Biomarker::Bmi, 22.0)]));
        let s = fit_scaler(&t, &[Biomarker::Age, Biomarker::Sex]).unwrap();
        assert_eq!(s.mean, vec![15.0, 0.0]);
        assert_eq!(s.transform(&t[2]), vec![None, None]);
    }

    #[test]
    fn unfittable_targets_are_reported() {
        let mut t = rows(Biomarker::Age, &[10.0, 20.0]);
        for r in &mut t {
            r.insert(Biomarker::RespiratoryRate, 18.0);
        }
        let (keep, dropped) = fittable_targets(&t, &[Biomarker::Sex, Biomarker::Age, Biomarker::RespiratoryRate, Biomarker::Bmi]);
        assert_eq!(keep, vec![Biomarker::Age]);
        assert_eq!(dropped.len(), 3);
        assert!(fit_scaler(&t, &keep).is_ok());
    }

    proptest! {
        #[test]
        fn inverse_undoes_transform(v in prop::collection::vec(-1e3f64..1e3, 2..20), x in -1e4f64..1e4) {
            prop_assume!(v.iter().any(|a| (a - v[0]).abs() > 1e-3));
            let s = fit_scaler(&rows(Biomarker::Age, &v), &[Biomarker::Age]).unwrap();
            let scaled = s.transform(&BiomarkerValues::from([(Biomarker::Age, x)]));
            let back = s.inverse(&[scaled[0].unwrap()])[&Biomarker::Age];
            prop_assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}
