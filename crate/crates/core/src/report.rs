//! Experiment reports and their serialized forms.
//!
//! Floats are written with 17 significant digits. In JSON they appear as
//! strings so that no parser rounds them.

use std::collections::BTreeMap;
use std::fmt::Display;

use serde_json::{json, Map, Value};

use crate::tol;

/// One named inequality or equality together with both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Human-readable form, e.g. `TD(H2,H3) <= 1e-10`.
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    /// `lhs ≤ rhs + tol`.
    pub fn le(
        name: impl Into<String>,
        inequality: impl Into<String>,
        lhs: f64,
        rhs: f64,
        tol: f64,
    ) -> Self {
        Check {
            name: name.into(),
            inequality: inequality.into(),
            lhs,
            rhs,
            tol,
            passed: lhs <= rhs + tol,
        }
    }

    /// `|lhs − rhs| ≤ tol`.
    pub fn eq(
        name: impl Into<String>,
        inequality: impl Into<String>,
        lhs: f64,
        rhs: f64,
        tol: f64,
    ) -> Self {
        Check {
            name: name.into(),
            inequality: inequality.into(),
            lhs,
            rhs,
            tol,
            passed: (lhs - rhs).abs() <= tol,
        }
    }

    /// `lhs ≤ rhs + INEQUALITY_SLACK`.
    pub fn bound(
        name: impl Into<String>,
        inequality: impl Into<String>,
        lhs: f64,
        rhs: f64,
    ) -> Self {
        Check::le(name, inequality, lhs, rhs, tol::INEQUALITY_SLACK)
    }
}

/// Parameters, computed quantities, bound values and checks of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
    pub quantities: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Whether the quantities are sampled estimates rather than exact.
    pub estimate: bool,
    /// Wall-clock time; only serialized when set.
    pub duration_secs: Option<f64>,
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            version: crate::ARTIFACT_VERSION.to_string(),
            seed: None,
            params: BTreeMap::new(),
            quantities: BTreeMap::new(),
            bounds: BTreeMap::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            estimate: false,
            duration_secs: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn quantity(&mut self, key: &str, value: f64) -> &mut Self {
        self.quantities.insert(key.to_string(), value);
        self
    }

    pub fn bound(&mut self, key: &str, value: f64) -> &mut Self {
        self.bounds.insert(key.to_string(), value);
        self
    }

    pub fn check(&mut self, check: Check) -> &mut Self {
        self.checks.push(check);
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.quantities
            .get(key)
            .or_else(|| self.bounds.get(key))
            .copied()
    }

    pub fn to_json_value(&self) -> Value {
        let floats = |m: &BTreeMap<String, f64>| -> Value {
            Value::Object(
                m.iter()
                    .map(|(k, v)| (k.clone(), Value::String(fmt_f64(*v))))
                    .collect(),
            )
        };
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "inequality": c.inequality,
                    "lhs": fmt_f64(c.lhs),
                    "rhs": fmt_f64(c.rhs),
                    "tol": fmt_f64(c.tol),
                    "passed": c.passed,
                })
            })
            .collect();
        let mut obj = Map::new();
        obj.insert("experiment".into(), json!(self.experiment));
        obj.insert("version".into(), json!(self.version));
        obj.insert(
            "seed".into(),
            self.seed
                .map_or(Value::Null, |s| Value::String(s.to_string())),
        );
        obj.insert("params".into(), json!(self.params));
        obj.insert("quantities".into(), floats(&self.quantities));
        obj.insert("bounds".into(), floats(&self.bounds));
        obj.insert("checks".into(), Value::Array(checks));
        obj.insert("notes".into(), json!(self.notes));
        obj.insert("estimate".into(), json!(self.estimate));
        obj.insert("all_passed".into(), json!(self.all_passed()));
        if let Some(d) = self.duration_secs {
            obj.insert("duration_secs".into(), Value::String(fmt_f64(d)));
        }
        Value::Object(obj)
    }

    pub fn to_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&self.to_json_value()).expect("report is valid JSON");
        s.push('\n');
        s
    }

    /// Long-format CSV: `kind,name,value` for params, quantities, bounds and
    /// checks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,name,value\n");
        out += &format!("meta,experiment,{}\n", csv_field(&self.experiment));
        out += &format!("meta,version,{}\n", csv_field(&self.version));
        if let Some(s) = self.seed {
            out += &format!("meta,seed,{s}\n");
        }
        out += &format!("meta,estimate,{}\n", self.estimate);
        for (k, v) in &self.params {
            out += &format!("param,{},{}\n", csv_field(k), csv_field(v));
        }
        for (k, v) in &self.quantities {
            out += &format!("quantity,{},{}\n", csv_field(k), fmt_f64(*v));
        }
        for (k, v) in &self.bounds {
            out += &format!("bound,{},{}\n", csv_field(k), fmt_f64(*v));
        }
        for c in &self.checks {
            out += &format!(
                "check,{},{}\n",
                csv_field(&c.name),
                if c.passed { "pass" } else { "fail" }
            );
        }
        if let Some(d) = self.duration_secs {
            out += &format!("meta,duration_secs,{}\n", fmt_f64(d));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0).parse::<f64>().unwrap(), 1.0);
        let x = 1.0 / 7.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn checks_evaluate() {
        assert!(Check::le("a", "a", 1.0, 1.0, 0.0).passed);
        assert!(!Check::le("a", "a", 1.1, 1.0, 0.0).passed);
        assert!(Check::eq("b", "b", 1.0, 1.0 + 1e-12, 1e-10).passed);
        assert!(!Check::le("c", "c", f64::NAN, 1.0, 0.0).passed);
    }

    #[test]
    fn json_round_trip_strings() {
        let mut r = ExperimentReport::new("demo");
        r.param("lam", 2)
            .quantity("td", 0.25)
            .check(Check::bound("x", "x <= y", 0.1, 0.2));
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["quantities"]["td"], "2.5000000000000000e-1");
        assert_eq!(v["all_passed"], true);
        assert!(v.get("duration_secs").is_none());
        assert!(r.to_csv().contains("quantity,td,2.5000000000000000e-1"));
    }
}
