//! Machine-readable run reports and the human-readable table view.

use serde::Serialize;
use serde_json::Value;

/// One named check inside a run.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub tolerance: f64,
}

impl Check {
    pub fn against(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: (value - target).abs() <= tolerance,
            value,
            target: Some(target),
            tolerance,
        }
    }

    pub fn bound(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: value.abs() <= tolerance,
            value,
            target: None,
            tolerance,
        }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            pass,
            value: f64::from(u8::from(pass)),
            target: Some(1.0),
            tolerance: 0.0,
        }
    }
}

/// The deterministic part of a run: everything except the wall clock.
#[derive(Debug, Clone, Serialize)]
pub struct RunBody {
    pub version: &'static str,
    pub kind: String,
    pub config_digest: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub payload: Value,
}

/// A completed run: deterministic body plus timing.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub body: RunBody,
    pub wall_clock_ms: u128,
}

impl RunReport {
    pub fn new(body: RunBody, wall_clock_ms: u128) -> Self {
        Self {
            body,
            wall_clock_ms,
        }
    }

    /// The headline numeric value of the run (first check), for CSV rows.
    pub fn key_value(&self) -> f64 {
        self.body.checks.first().map(|c| c.value).unwrap_or(f64::NAN)
    }

    pub fn key_tolerance(&self) -> f64 {
        self.body
            .checks
            .first()
            .map(|c| c.tolerance)
            .unwrap_or(f64::NAN)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} [{}]  digest {}\n",
            self.body.kind,
            if self.body.pass { "PASS" } else { "FAIL" },
            self.body.config_digest
        ));
        for c in &self.body.checks {
            let target = c
                .target
                .map(|t| format!(" target {t:+.8}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "  {:<44} {}  value {:+.8e}{}  tol {:.1e}\n",
                c.name,
                if c.pass { "ok  " } else { "FAIL" },
                c.value,
                target,
                c.tolerance
            ));
        }
        out
    }
}
