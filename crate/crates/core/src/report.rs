//! Human-readable and machine-readable run reports.
//!
//! A [`Report`] is an ordered list of sections. [`Report::write`] emits
//! `summary.txt` and `report.json`; JSON object keys are sorted, so two runs
//! with the same inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    EmpiricalNorms, HurwitzCheck, LyapunovCertificate, PerformanceReport, WorstCase,
};
use crate::compare::ComparisonReport;
use crate::error::{Error, Result};
use crate::graph::SpectralData;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub lines: Vec<String>,
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub title: String,
    pub sections: Vec<Section>,
}

fn relative_gap(predicted: f64, measured: f64) -> f64 {
    if predicted == 0.0 {
        measured.abs()
    } else {
        (measured - predicted).abs() / predicted.abs()
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            sections: Vec::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        data: &impl Serialize,
        lines: Vec<String>,
    ) -> Result<()> {
        self.sections.push(Section {
            name: name.into(),
            lines,
            data: serde_json::to_value(data)?,
        });
        Ok(())
    }

    pub fn add_performance(
        &mut self,
        label: &str,
        predicted: &PerformanceReport,
        empirical: Option<&EmpiricalNorms>,
    ) -> Result<()> {
        let mut lines = vec![
            format!("a = {:e}, b = {:e}", predicted.a, predicted.b),
            format!("w'L+w                 = {:e}", predicted.quadratic_form),
            format!(
                "predicted ||w - w_ss||^2 = {:e}",
                predicted.freq_dev_norm_sq
            ),
            format!(
                "predicted ||delta||^2    = {:e}",
                predicted.occupancy_norm_sq
            ),
        ];
        let mut data = json!({ "predicted": predicted });
        if let Some(e) = empirical {
            let gf = relative_gap(predicted.freq_dev_norm_sq, e.freq_dev_norm_sq);
            let go = relative_gap(predicted.occupancy_norm_sq, e.occupancy_norm_sq);
            lines.push(format!(
                "simulated ||w - w_ss||^2 = {:e} (gap {:.2e})",
                e.freq_dev_norm_sq, gf
            ));
            lines.push(format!(
                "simulated ||delta||^2    = {:e} (gap {:.2e})",
                e.occupancy_norm_sq, go
            ));
            if e.insufficient_horizon {
                lines.push(format!(
                    "warning: tail estimate {:.2e} of the integral lies past the horizon",
                    e.tail_fraction
                ));
            }
            data["empirical"] = serde_json::to_value(e)?;
            data["relative_gap"] = json!({ "freq_dev_norm_sq": gf, "occupancy_norm_sq": go });
        }
        self.add(format!("performance {label}"), &data, lines)
    }

    pub fn add_comparison(&mut self, label: &str, r: &ComparisonReport) -> Result<()> {
        let mut lines = vec![
            format!(
                "window [{}, {}], {} samples",
                r.window.0, r.window.1, r.samples
            ),
            format!(
                "max occupancy deviation {} frames (limit {}): {}",
                r.max_occupancy_dev,
                r.thresholds.occupancy_frames,
                verdict(r.occupancy_ok)
            ),
            format!(
                "final relative frequency deviation {:.3e} (limit {:e}): {}",
                r.max_final_frequency_rel,
                r.thresholds.frequency_rel,
                verdict(r.frequency_ok)
            ),
            format!("max frequency deviation {:.3e}", r.max_frequency_dev),
        ];
        for d in r
            .occupancy
            .iter()
            .filter(|d| d.max_abs > r.thresholds.occupancy_frames)
        {
            lines.push(format!(
                "  {} off by {} at t = {}",
                d.label, d.max_abs, d.at_time
            ));
        }
        self.add(format!("comparison {label}"), r, lines)
    }

    pub fn add_lyapunov(
        &mut self,
        label: &str,
        h: &HurwitzCheck,
        c: &LyapunovCertificate,
        rel_tol: f64,
    ) -> Result<()> {
        let lines = vec![
            format!(
                "spectral abscissa {:e}: {}",
                h.spectral_abscissa,
                verdict(h.is_hurwitz)
            ),
            format!(
                "relative residuals X1 {:.2e}, X2 {:.2e}, X {:.2e}",
                c.relative1, c.relative2, c.relative_sum
            ),
            format!(
                "min eigenvalues X1 {:.3e}, X2 {:.3e}, X {:.3e}",
                c.min_eig_x1, c.min_eig_x2, c.min_eig_x
            ),
            format!(
                "certificate within {:e}: {}",
                rel_tol,
                verdict(c.within_tolerance(rel_tol))
            ),
        ];
        let data = json!({ "hurwitz": h, "certificate": c, "tolerance": rel_tol });
        self.add(format!("lyapunov {label}"), &data, lines)
    }

    pub fn add_worst_case(&mut self, label: &str, gamma: f64, w: &WorstCase) -> Result<()> {
        let omega: Vec<f64> = w.omega_u.iter().copied().collect();
        let mut lines = vec![
            format!("gamma = {gamma:e}, lambda2 = {:e}", w.lambda2),
            format!("max w'L+w = gamma^2/lambda2 = {:e}", w.attained),
            format!("maximizer: {omega:?}"),
        ];
        if w.degenerate {
            lines.push("lambda2 is repeated; the maximizer is one of many".into());
        }
        let data = json!({
            "gamma": gamma,
            "omega_u": omega,
            "attained": w.attained,
            "lambda2": w.lambda2,
            "degenerate": w.degenerate,
        });
        self.add(format!("worst case {label}"), &data, lines)
    }

    pub fn add_resistance(&mut self, label: &str, sd: &SpectralData) -> Result<()> {
        let r = sd.resistance_matrix();
        let n = sd.n();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| r[(i, j)]).collect())
            .collect();
        let mut lines = vec![format!(
            "n = {n}, lambda2 = {:e}",
            sd.algebraic_connectivity()
        )];
        let (mut best, mut worst) = ((0, 1, f64::INFINITY), (0, 1, 0.0));
        for i in 0..n {
            for j in i + 1..n {
                if r[(i, j)] < best.2 {
                    best = (i, j, r[(i, j)]);
                }
                if r[(i, j)] > worst.2 {
                    worst = (i, j, r[(i, j)]);
                }
            }
        }
        lines.push(format!("smallest R_{}{} = {}", best.0, best.1, best.2));
        lines.push(format!("largest  R_{}{} = {}", worst.0, worst.1, worst.2));
        for row in &rows {
            let mut s = String::from(" ");
            for x in row {
                let _ = write!(s, " {x:8.4}");
            }
            lines.push(s);
        }
        self.add(
            format!("resistance {label}"),
            &json!({ "resistance": rows }),
            lines,
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.title);
        for s in &self.sections {
            let _ = writeln!(out, "\n[{}]", s.name);
            for l in &s.lines {
                let _ = writeln!(out, "{l}");
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let sections: Vec<Value> = self
            .sections
            .iter()
            .map(|s| json!({ "name": s.name, "data": s.data }))
            .collect();
        json!({ "title": self.title, "sections": sections })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = dir.join("summary.txt");
        fs::write(&summary, self.to_text()).map_err(|e| Error::io(&summary, e))?;
        let json_path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::predicted_performance;
    use crate::graph::OrientedGraph;
    use crate::ode::Gains;
    use nalgebra::DVector;

    #[test]
    fn deterministic_output() {
        let sd = OrientedGraph::complete(3).unwrap().spectral_data().unwrap();
        let g = Gains::new(2.0, 0.5, 1.0).unwrap();
        let w = DVector::from_vec(vec![1.01, 1.0, 0.99]);
        let build = || {
            let mut r = Report::new("test");
            r.add_performance("k3", &predicted_performance(&sd, &g, &w).unwrap(), None)
                .unwrap();
            r.add_resistance("k3", &sd).unwrap();
            r
        };
        let dir = tempfile::tempdir().unwrap();
        build().write(dir.path()).unwrap();
        let first = fs::read(dir.path().join("report.json")).unwrap();
        build().write(dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("report.json")).unwrap());
        let text = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(text.contains("[performance k3]"));
        assert!(text.contains("smallest R_01"));
        let v: Value = serde_json::from_slice(&first).unwrap();
        let r01 = v["sections"][1]["data"]["resistance"][0][1]
            .as_f64()
            .unwrap();
        assert!((r01 - 2.0 / 3.0).abs() < 1e-14);
    }
}
