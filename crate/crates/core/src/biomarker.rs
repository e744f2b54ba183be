//! Anthropometric and clinical targets recorded with each subject.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Biomarker {
    Weight,
    Height,
    Bmi,
    Age,
    Systolic,
    Diastolic,
    Saturation,
    Temperature,
    Hemoglobin,
    GlycatedHemoglobin,
    Cholesterol,
    RespiratoryRate,
    HeartRate,
    ArterialStiffness,
    Stress,
    /// 0 = female, 1 = male.
    Sex,
}

/// Cohort statistics: mean, std, min, max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Biomarker {
    pub const ALL: [Biomarker; 16] = [
        Biomarker::Weight,
        Biomarker::Height,
        Biomarker::Bmi,
        Biomarker::Age,
        Biomarker::Systolic,
        Biomarker::Diastolic,
        Biomarker::Saturation,
        Biomarker::Temperature,
        Biomarker::Hemoglobin,
        Biomarker::GlycatedHemoglobin,
        Biomarker::Cholesterol,
        Biomarker::RespiratoryRate,
        Biomarker::HeartRate,
        Biomarker::ArterialStiffness,
        Biomarker::Stress,
        Biomarker::Sex,
    ];

    /// Heads of the default model, in output order.
    pub const MODEL_DEFAULT: [Biomarker; 11] = [
        Biomarker::Systolic,
        Biomarker::Diastolic,
        Biomarker::GlycatedHemoglobin,
        Biomarker::Cholesterol,
        Biomarker::RespiratoryRate,
        Biomarker::ArterialStiffness,
        Biomarker::Age,
        Biomarker::Bmi,
        Biomarker::Stress,
        Biomarker::Saturation,
        Biomarker::Sex,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Biomarker::Weight => "weight",
            Biomarker::Height => "height",
            Biomarker::Bmi => "bmi",
            Biomarker::Age => "age",
            Biomarker::Systolic => "systolic",
            Biomarker::Diastolic => "diastolic",
            Biomarker::Saturation => "saturation",
            Biomarker::Temperature => "temperature",
            Biomarker::Hemoglobin => "hemoglobin",
            Biomarker::GlycatedHemoglobin => "glycated_hemoglobin",
            Biomarker::Cholesterol => "cholesterol",
            Biomarker::RespiratoryRate => "respiratory_rate",
            Biomarker::HeartRate => "heart_rate",
            Biomarker::ArterialStiffness => "arterial_stiffness",
            Biomarker::Stress => "stress",
            Biomarker::Sex => "sex",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Biomarker::Weight => "kg",
            Biomarker::Height => "cm",
            Biomarker::Bmi => "kg/m2",
            Biomarker::Age => "years",
            Biomarker::Systolic | Biomarker::Diastolic => "mmHg",
            Biomarker::Saturation | Biomarker::GlycatedHemoglobin => "%",
            Biomarker::Temperature => "C",
            Biomarker::Hemoglobin => "g/dL",
            Biomarker::Cholesterol => "mmol/L",
            Biomarker::RespiratoryRate => "rpm",
            Biomarker::HeartRate => "bpm",
            Biomarker::ArterialStiffness | Biomarker::Stress => "score",
            Biomarker::Sex => "class",
        }
    }

    pub fn is_categorical(self) -> bool {
        self == Biomarker::Sex
    }

    pub fn stats(self) -> CohortStats {
        let (mean, std, min, max) = match self {
            Biomarker::Weight => (65.92, 15.79, 43.00, 168.00),
            Biomarker::Height => (169.75, 8.87, 147.00, 201.00),
            Biomarker::Bmi => (22.73, 4.34, 15.39, 47.03),
            Biomarker::Age => (23.08, 10.90, 18.00, 83.00),
            Biomarker::Systolic => (122.45, 17.43, 80.00, 202.00),
            Biomarker::Diastolic => (73.79, 9.25, 50.00, 108.00),
            Biomarker::Saturation => (98.01, 1.29, 86.00, 99.00),
            Biomarker::Temperature => (36.56, 0.13, 36.00, 37.50),
            Biomarker::Hemoglobin => (13.59, 1.66, 8.10, 17.30),
            Biomarker::GlycatedHemoglobin => (5.52, 0.69, 3.40, 13.02),
            Biomarker::Cholesterol => (4.16, 0.83, 0.90, 8.00),
            Biomarker::RespiratoryRate => (18.05, 1.71, 15.00, 24.00),
            Biomarker::HeartRate => (91.93, 18.37, 49.00, 153.00),
            Biomarker::ArterialStiffness => (8.99, 3.04, 1.75, 34.02),
            Biomarker::Stress => (3.04, 1.46, 1.00, 7.52),
            Biomarker::Sex => (0.5, 0.5, 0.0, 1.0),
        };
        CohortStats { mean, std, min, max }
    }

    /// Plausible range: the cohort range widened by 20% of its span on each
    /// side.
    pub fn sanity_bounds(self) -> (f64, f64) {
        let s = self.stats();
        let pad = 0.2 * (s.max - s.min);
        if self.is_categorical() {
            (s.min, s.max)
        } else {
            (s.min - pad, s.max + pad)
        }
    }

    pub fn validate(self, value: f64) -> Result<()> {
        let (min, max) = self.sanity_bounds();
        let ok = value.is_finite()
            && value >= min
            && value <= max
            && (!self.is_categorical() || value == 0.0 || value == 1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::BiomarkerOutOfRange {
                name: self.key().to_string(),
                value,
                min,
                max,
            })
        }
    }
}

impl fmt::Display for Biomarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Biomarker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Biomarker::ALL
            .into_iter()
            .find(|b| b.key() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown biomarker {s:?}")))
    }
}

/// Known target values of one recording.
pub type BiomarkerValues = BTreeMap<Biomarker, f64>;
