use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::{
    compute_c_a, sigma_future, sigma_future_weighted, sigma_history, sigma_obs, HistoryMode,
    SigmaMethod,
};
use crate::error::{Error, Result};
use crate::pomdp::{Policy, TabularPomdp};

/// A coefficient that may be infinite; serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Coefficient(pub f64);

impl Coefficient {
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Coefficient {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Coefficient {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Coefficient;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Coefficient, E> {
                Ok(Coefficient(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Coefficient, E> {
                Ok(Coefficient(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Coefficient, E> {
                Ok(Coefficient(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Coefficient, E> {
                match v {
                    "inf" => Ok(Coefficient(f64::INFINITY)),
                    _ => Err(E::custom(format!("unexpected coefficient '{v}'"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Which sections of the report to compute.
#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub single: bool,
    pub multi: bool,
    pub weighted: bool,
    pub history: bool,
    /// Forces Monte Carlo estimation of `Σ_H` with this many samples.
    pub mc_samples: Option<usize>,
    pub seed: u64,
    pub cap: u64,
}

impl ReportOptions {
    pub fn all(cap: u64) -> Self {
        Self { single: true, multi: true, weighted: true, history: true, mc_samples: None, seed: 0, cap }
    }
}

/// Per-step coefficients. `c_h` covers steps `0..H-1`; the observation and
/// future coefficients cover every step. The `*_max` scalars are maxima over
/// steps `0..H-1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub c_a: Coefficient,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_h: Option<Vec<Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_h_method: Option<SigmaMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_o: Option<Vec<Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_f: Option<Vec<Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_f_weighted: Option<Vec<Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_h_max: Option<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_o_max: Option<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_f_max: Option<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_f_weighted_max: Option<Coefficient>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CoverageReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn max_over(values: &[Coefficient], steps: usize) -> Coefficient {
    Coefficient(values.iter().take(steps).map(|c| c.0).fold(0.0, f64::max))
}

pub fn coverage_report(model: &TabularPomdp, pi_b: &Policy, opts: &ReportOptions) -> Result<CoverageReport> {
    let h = model.horizon();
    let inner = h - 1;
    let mut report = CoverageReport {
        c_a: Coefficient(compute_c_a(model, pi_b, opts.cap)?),
        c_h: None,
        c_h_method: None,
        c_o: None,
        c_f: None,
        c_f_weighted: None,
        c_h_max: None,
        c_o_max: None,
        c_f_max: None,
        c_f_weighted_max: None,
        notes: Vec::new(),
    };

    if opts.history {
        let mode = match opts.mc_samples {
            Some(samples) => HistoryMode::MonteCarlo { samples, seed: opts.seed },
            None => HistoryMode::Exact { cap: opts.cap },
        };
        let mut values = Vec::with_capacity(inner);
        let mut method = None;
        for k in 0..inner {
            let s = sigma_history(model, pi_b, k, mode)?;
            method = Some(s.method);
            values.push(Coefficient(s.c_h));
        }
        report.c_h_max = Some(max_over(&values, inner));
        report.c_h = Some(values);
        report.c_h_method = method;
    }

    if opts.single {
        let values: Vec<Coefficient> = (0..h).map(|k| Coefficient(sigma_obs(model, k).coefficient)).collect();
        report.c_o_max = Some(max_over(&values, inner));
        report.c_o = Some(values);
    }

    let future_sections = opts.multi || opts.weighted;
    if future_sections && !pi_b.is_memoryless() {
        report.notes.push(
            "future-based coefficients skipped: behavior policy is history-dependent".to_string(),
        );
        return Ok(report);
    }
    if opts.multi {
        let values = (0..h)
            .map(|k| Ok(Coefficient(sigma_future(model, pi_b, k, opts.cap)?.coefficient)))
            .collect::<Result<Vec<_>>>()?;
        report.c_f_max = Some(max_over(&values, inner));
        report.c_f = Some(values);
    }
    if opts.weighted {
        let mut values = Vec::with_capacity(h);
        for k in 0..h {
            match sigma_future_weighted(model, pi_b, k, opts.cap) {
                Ok(r) => values.push(Coefficient(r.coefficient)),
                Err(e @ Error::DegeneratePrior { .. }) => {
                    report.notes.push(format!("weighted coefficients skipped: {e}"));
                    values.clear();
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !values.is_empty() {
            report.c_f_weighted_max = Some(max_over(&values, inner));
            report.c_f_weighted = Some(values);
        }
    }
    Ok(report)
}
