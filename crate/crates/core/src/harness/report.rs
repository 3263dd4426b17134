use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::DatasetTag;

/// The two enrollment conditions being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    /// Neutral-speech enrollment (TR1).
    #[serde(rename = "SYS1")]
    Sys1,
    /// Neutral speech plus laughter enrollment (TR2).
    #[serde(rename = "SYS2")]
    Sys2,
}

impl System {
    pub const ALL: [System; 2] = [System::Sys1, System::Sys2];

    pub fn as_str(self) -> &'static str {
        match self {
            System::Sys1 => "SYS1",
            System::Sys2 => "SYS2",
        }
    }

    /// Manifest dataset tag holding this system's enrollment utterances.
    pub fn enroll_dataset(self) -> DatasetTag {
        match self {
            System::Sys1 => DatasetTag::Dset1,
            System::Sys2 => DatasetTag::Dset2,
        }
    }

    pub fn enroll_set_name(self) -> &'static str {
        match self {
            System::Sys1 => "TR1",
            System::Sys2 => "TR2",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SYS1" | "TR1" => Ok(System::Sys1),
            "SYS2" | "TR2" => Ok(System::Sys2),
            _ => Err(Error::Config(format!("unknown system {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub test_set: DatasetTag,
    pub system: System,
    pub eer: f64,
    pub threshold: f64,
    pub target_trials: usize,
    pub nontarget_trials: usize,
    pub diagonal_dominance: f64,
    pub identification_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config_hash: String,
    pub cells: Vec<ReportCell>,
    pub runtime_s: f64,
    pub warnings: Vec<String>,
}

pub const REPORT_CSV_HEADER: &str =
    "test_set,content,system,eer,threshold,target_trials,nontarget_trials,diagonal_dominance,identification_rate";

impl ExperimentReport {
    pub fn cell(&self, test_set: DatasetTag, system: System) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.test_set == test_set && c.system == system)
    }

    pub fn eer(&self, test_set: DatasetTag, system: System) -> f64 {
        self.cell(test_set, system).map_or(f64::NAN, |c| c.eer)
    }

    pub fn dominance(&self, test_set: DatasetTag, system: System) -> f64 {
        self.cell(test_set, system).map_or(f64::NAN, |c| c.diagonal_dominance)
    }

    /// `(EER_sys1 - EER_sys2) / EER_sys1`; zero when both are zero.
    pub fn relative_improvement(&self, test_set: DatasetTag) -> f64 {
        let a = self.eer(test_set, System::Sys1);
        let b = self.eer(test_set, System::Sys2);
        if a == 0.0 {
            if b == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            (a - b) / a
        }
    }

    /// Deterministic machine-readable summary (no timing).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.test_set.test_set_name(),
                c.test_set.test_content(),
                c.system,
                c.eer,
                c.threshold,
                c.target_trials,
                c.nontarget_trials,
                c.diagonal_dominance,
                c.identification_rate
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Enrollment composition experiment\n\n");
        let _ = writeln!(out, "- seed: {}", self.seed);
        let _ = writeln!(out, "- config hash: `{}`", self.config_hash);
        let _ = writeln!(out, "- runtime: {:.1} s\n", self.runtime_s);
        out.push_str("## EER (%)\n\n");
        out.push_str("| Test set | Content | SYS1 | SYS2 | Rel. improvement (%) |\n");
        out.push_str("|---|---|---:|---:|---:|\n");
        for tag in DatasetTag::ALL {
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {:.2} | {:.1} |",
                tag.test_set_name(),
                tag.test_content(),
                100.0 * self.eer(tag, System::Sys1),
                100.0 * self.eer(tag, System::Sys2),
                100.0 * self.relative_improvement(tag)
            );
        }
        out.push_str("\n## Score matrix diagonal dominance\n\n");
        out.push_str("| Test set | SYS1 | SYS2 | SYS1 top-1 (%) | SYS2 top-1 (%) |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
        for tag in DatasetTag::ALL {
            let id = |s| self.cell(tag, s).map_or(f64::NAN, |c| 100.0 * c.identification_rate);
            let _ = writeln!(
                out,
                "| {} | {:.3} | {:.3} | {:.1} | {:.1} |",
                tag.test_set_name(),
                self.dominance(tag, System::Sys1),
                self.dominance(tag, System::Sys2),
                id(System::Sys1),
                id(System::Sys2)
            );
        }
        if !self.warnings.is_empty() {
            out.push_str("\n## Warnings\n\n");
            for w in &self.warnings {
                let _ = writeln!(out, "- {w}");
            }
        }
        out
    }
}
