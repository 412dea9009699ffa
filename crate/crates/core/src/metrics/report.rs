//! Score aggregation keyed by (system, SNR), with the mean-of-means "Avg"
//! row convention and an aligned text rendering.

use std::collections::BTreeMap;

/// One per-utterance score tagged with its system and mixing SNR.
#[derive(Clone, Debug)]
pub struct ScoreRecord {
    pub system: String,
    pub snr_db: f64,
    pub utterance_id: String,
    pub score: f64,
}

/// Grouped per-utterance scores. Means are exact functions of the stored
/// scores: cells are sorted by utterance id before summing, so the report is
/// invariant to input order.
#[derive(Clone, Debug)]
pub struct EvalReport {
    systems: Vec<String>,
    snrs: Vec<f64>, // ascending
    cells: BTreeMap<(usize, usize), Vec<(String, f64)>>,
}

/// Groups records under the caller's column order. Systems with no scores
/// are omitted with a warning.
pub fn aggregate(records: &[ScoreRecord], system_order: &[String]) -> EvalReport {
    let mut systems = Vec::new();
    for sys in system_order {
        if records.iter().any(|r| &r.system == sys) {
            systems.push(sys.clone());
        } else {
            eprintln!("warning: no scores for system '{sys}', omitting");
        }
    }
    let mut snrs: Vec<f64> = Vec::new();
    for r in records {
        if !snrs.iter().any(|&s| s == r.snr_db) {
            snrs.push(r.snr_db);
        }
    }
    snrs.sort_by(|a, b| a.total_cmp(b));

    let mut cells: BTreeMap<(usize, usize), Vec<(String, f64)>> = BTreeMap::new();
    for r in records {
        let Some(si) = systems.iter().position(|s| s == &r.system) else { continue };
        let ni = snrs.iter().position(|&s| s == r.snr_db).expect("snr collected above");
        cells.entry((si, ni)).or_default().push((r.utterance_id.clone(), r.score));
    }
    for scores in cells.values_mut() {
        scores.sort_by(|a, b| a.0.cmp(&b.0));
    }
    EvalReport { systems, snrs, cells }
}

impl EvalReport {
    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn snr_levels(&self) -> &[f64] {
        &self.snrs
    }

    pub fn count(&self, system: &str, snr_db: f64) -> usize {
        self.cell(system, snr_db).map(|c| c.len()).unwrap_or(0)
    }

    pub fn mean(&self, system: &str, snr_db: f64) -> Option<f64> {
        let cell = self.cell(system, snr_db)?;
        if cell.is_empty() {
            return None;
        }
        Some(cell.iter().map(|(_, s)| s).sum::<f64>() / cell.len() as f64)
    }

    /// The "Avg" row: mean over SNR-level means.
    pub fn avg(&self, system: &str) -> Option<f64> {
        let means: Vec<f64> = self.snrs.iter().filter_map(|&s| self.mean(system, s)).collect();
        if means.is_empty() {
            None
        } else {
            Some(means.iter().sum::<f64>() / means.len() as f64)
        }
    }

    pub fn scores(&self, system: &str, snr_db: f64) -> &[(String, f64)] {
        self.cell(system, snr_db).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn cell(&self, system: &str, snr_db: f64) -> Option<&Vec<(String, f64)>> {
        let si = self.systems.iter().position(|s| s == system)?;
        let ni = self.snrs.iter().position(|&s| s == snr_db)?;
        self.cells.get(&(si, ni))
    }

    /// Per-utterance scores: system,snr_db,utterance,score.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("system,snr_db,utterance,score\n");
        for (si, sys) in self.systems.iter().enumerate() {
            for (ni, &snr) in self.snrs.iter().enumerate() {
                if let Some(cell) = self.cells.get(&(si, ni)) {
                    for (utt, score) in cell {
                        out.push_str(&format!("{sys},{snr},{utt},{score:.6}\n"));
                    }
                }
            }
        }
        out
    }

    /// Per-SNR means with the Avg row: snr_db followed by one column per
    /// system.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("snr_db");
        for sys in &self.systems {
            out.push(',');
            out.push_str(sys);
        }
        out.push('\n');
        for &snr in &self.snrs {
            out.push_str(&format!("{snr}"));
            for sys in &self.systems {
                match self.mean(sys, snr) {
                    Some(m) => out.push_str(&format!(",{m:.4}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out.push_str("Avg");
        for sys in &self.systems {
            match self.avg(sys) {
                Some(m) => out.push_str(&format!(",{m:.4}")),
                None => out.push(','),
            }
        }
        out.push('\n');
        out
    }

    /// Aligned text table, SNR rows ascending then the Avg row.
    pub fn render_table(&self, title: &str) -> String {
        let col = 14usize;
        let mut out = String::new();
        out.push_str(title);
        out.push('\n');
        out.push_str(&format!("{:>8}", "SNR"));
        for sys in &self.systems {
            out.push_str(&format!("{sys:>col$}"));
        }
        out.push('\n');
        for &snr in &self.snrs {
            out.push_str(&format!("{snr:>8}"));
            for sys in &self.systems {
                match self.mean(sys, snr) {
                    Some(m) => out.push_str(&format!("{m:>col$.4}")),
                    None => out.push_str(&format!("{:>col$}", "-")),
                }
            }
            out.push('\n');
        }
        out.push_str(&format!("{:>8}", "Avg"));
        for sys in &self.systems {
            match self.avg(sys) {
                Some(m) => out.push_str(&format!("{m:>col$.4}")),
                None => out.push_str(&format!("{:>col$}", "-")),
            }
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(system: &str, snr: f64, utt: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            system: system.into(),
            snr_db: snr,
            utterance_id: utt.into(),
            score,
        }
    }

    #[test]
    fn single_score_mean() {
        let report = aggregate(&[rec("noisy", 0.0, "u1", 0.8)], &["noisy".into()]);
        assert_eq!(report.mean("noisy", 0.0), Some(0.8));
        assert_eq!(report.count("noisy", 0.0), 1);
    }

    #[test]
    fn avg_row_is_mean_of_snr_means() {
        let records = vec![
            rec("sys", 0.0, "a", 0.5),
            rec("sys", 0.0, "b", 0.7),
            rec("sys", 5.0, "a", 0.8),
        ];
        let report = aggregate(&records, &["sys".into()]);
        assert_eq!(report.mean("sys", 0.0), Some(0.6));
        assert_eq!(report.mean("sys", 5.0), Some(0.8));
        assert!((report.avg("sys").unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn shuffled_input_gives_identical_report() {
        let records = vec![
            rec("a", 0.0, "u3", 0.31),
            rec("a", 0.0, "u1", 0.52),
            rec("a", 0.0, "u2", 0.47),
            rec("b", 5.0, "u1", 0.9),
        ];
        let mut shuffled = records.clone();
        shuffled.reverse();
        let order = vec!["a".to_string(), "b".to_string()];
        let r1 = aggregate(&records, &order);
        let r2 = aggregate(&shuffled, &order);
        assert_eq!(r1.summary_csv(), r2.summary_csv());
        assert_eq!(r1.scores_csv(), r2.scores_csv());
    }

    #[test]
    fn missing_system_is_omitted() {
        let report = aggregate(
            &[rec("present", 0.0, "u", 0.5)],
            &["present".into(), "absent".into()],
        );
        assert_eq!(report.systems(), &["present".to_string()]);
    }
}
