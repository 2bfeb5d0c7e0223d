use serde::{Deserialize, Serialize};

use crate::metrics::MetricReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub model: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

/// Generation results, one row per model in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn row(&self, model: &str) -> Option<&MetricReport> {
        self.rows.iter().find(|r| r.model == model).map(|r| &r.metrics)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<12} {:>7} {:>9} {:>8} {:>8} {:>8} {:>6}\n",
            "model", "BLEU-4", "sentBLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "n"
        );
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{:<12} {:>7.4} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>6}\n",
                r.model, m.bleu4, m.sentence_bleu4, m.rouge1_f1, m.rouge2_f1, m.rouge_l_f1, m.n_instances
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.rows.iter().map(|r| serde_json::to_string(r).unwrap_or_default() + "\n").collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub provider: String,
    pub k: usize,
    pub value: f64,
    pub evaluated: usize,
}

/// At-least-one-helpful@K per provider.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub ks: Vec<usize>,
    pub rows: Vec<SelectionRow>,
}

impl SelectionReport {
    pub fn value(&self, provider: &str, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.provider == provider && r.k == k).map(|r| r.value)
    }

    pub fn providers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.provider) {
                out.push(r.provider.clone());
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10}", "provider");
        for k in &self.ks {
            out.push_str(&format!(" {:>7}", format!("K={k}")));
        }
        out.push('\n');
        for p in self.providers() {
            out.push_str(&format!("{p:<10}"));
            for &k in &self.ks {
                match self.value(&p, k) {
                    Some(v) => out.push_str(&format!(" {v:>7.4}")),
                    None => out.push_str(&format!(" {:>7}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.rows.iter().map(|r| serde_json::to_string(r).unwrap_or_default() + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(b: f64) -> MetricReport {
        MetricReport { bleu4: b, sentence_bleu4: b, rouge1_f1: b, rouge2_f1: b, rouge_l_f1: b, n_instances: 3 }
    }

    #[test]
    fn aligned_text_and_jsonl() {
        let r = ExperimentReport {
            rows: vec![
                ExperimentRow { model: "concatenate".into(), metrics: m(0.1) },
                ExperimentRow { model: "copy".into(), metrics: m(0.25) },
            ],
        };
        let text = r.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(lines[2].starts_with("copy          0.2500"));
        let first: serde_json::Value = serde_json::from_str(r.to_jsonl().lines().next().unwrap()).unwrap();
        assert_eq!(first["model"], "concatenate");
        assert_eq!(first["rougeL_f1"], 0.1);
        assert_eq!(r.row("copy").unwrap().bleu4, 0.25);
    }

    #[test]
    fn selection_table() {
        let rows = vec![
            SelectionRow { provider: "tf".into(), k: 2, value: 0.5, evaluated: 4 },
            SelectionRow { provider: "tf".into(), k: 3, value: 0.75, evaluated: 4 },
        ];
        let r = SelectionReport { ks: vec![2, 3], rows };
        assert_eq!(r.to_text(), "provider       K=2     K=3\ntf          0.5000  0.7500\n");
        assert_eq!(r.value("tf", 3), Some(0.75));
    }
}
