use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::config::Defense;
use crate::error::Result;
use crate::nn::ModelKind;

/// One seed's outcome for one (model, defense, attack) row.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCell {
    pub seed: u64,
    /// Test accuracy on the clean graph.
    pub clean: f64,
    /// Target accuracy (targeted attacks) or test accuracy (otherwise) after
    /// the attack, with this row's defense.
    pub attacked: f64,
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: ModelKind,
    pub defense: Defense,
    /// `none`, `direct`, `influence` or `non-targeted`.
    pub attack: String,
    pub rate: Option<f64>,
    pub cells: Vec<SeedCell>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ReportRow {
    pub fn clean(&self) -> (f64, f64) {
        mean_std(&self.cells.iter().map(|c| c.clean).collect::<Vec<_>>())
    }

    pub fn attacked(&self) -> (f64, f64) {
        mean_std(&self.cells.iter().map(|c| c.attacked).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedFailure {
    pub seed: u64,
    pub rate: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub title: String,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<SeedFailure>,
    pub wall_time: Duration,
}

impl ExperimentReport {
    /// True when at least one seed aborted.
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn row(&self, defense: Defense, rate: Option<f64>) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.defense == defense && r.rate == rate)
    }

    pub fn defenses(&self) -> Vec<Defense> {
        let mut out: Vec<Defense> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.defense) {
                out.push(r.defense);
            }
        }
        out
    }

    /// Long format, one line per (row, seed).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,defense,attack,rate,seed,clean,attacked,run_dir\n");
        for r in &self.rows {
            for c in &r.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.model,
                    r.defense,
                    r.attack,
                    r.rate.map_or(String::new(), |x| x.to_string()),
                    c.seed,
                    c.clean,
                    c.attacked,
                    c.run_dir
                        .as_ref()
                        .map_or(String::new(), |p| p.display().to_string()),
                );
            }
        }
        for f in &self.failures {
            let _ = writeln!(
                s,
                "# failed seed {}{}: {}",
                f.seed,
                f.rate.map_or(String::new(), |r| format!(" at rate {r}")),
                f.message
            );
        }
        s
    }

    /// One line per (model, attack, rate): clean accuracy without defense,
    /// then post-attack accuracy per defense, as `mean ± std`.
    pub fn to_table(&self) -> String {
        let defenses = self.defenses();
        let mut header = vec![
            "model".to_string(),
            "attack".into(),
            "rate".into(),
            "No Attack".into(),
        ];
        header.extend(defenses.iter().map(|d| match d {
            Defense::None => "Attack".to_string(),
            other => other.to_string(),
        }));
        let mut lines = vec![header];
        let mut keys: Vec<(ModelKind, String, Option<f64>)> = Vec::new();
        for r in &self.rows {
            let k = (r.model, r.attack.clone(), r.rate);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let fmt = |(m, s): (f64, f64)| format!("{m:.3} ± {s:.3}");
        for (model, attack, rate) in keys {
            let rows: Vec<&ReportRow> = self
                .rows
                .iter()
                .filter(|r| r.model == model && r.attack == attack && r.rate == rate)
                .collect();
            let clean = rows
                .iter()
                .find(|r| r.defense == Defense::None)
                .or(rows.first())
                .map_or("-".into(), |r| fmt(r.clean()));
            let mut line = vec![
                model.to_string(),
                attack.clone(),
                rate.map_or("-".into(), |x| format!("{x:.2}")),
                clean,
            ];
            for d in &defenses {
                line.push(
                    rows.iter()
                        .find(|r| r.defense == *d)
                        .map_or("-".into(), |r| fmt(r.attacked())),
                );
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| {
                lines
                    .iter()
                    .map(|l| l[j].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = format!("{} [config {}]\n", self.title, self.config_hash);
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(s, "{}", cells.join("  ").trim_end());
        }
        for f in &self.failures {
            let _ = writeln!(s, "PARTIAL: seed {} failed: {}", f.seed, f.message);
        }
        let _ = writeln!(s, "wall time {:.1} s", self.wall_time.as_secs_f64());
        s
    }

    /// Writes `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("report.txt"), self.to_table())?;
        Ok(())
    }
}
