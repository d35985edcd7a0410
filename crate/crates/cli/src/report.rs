use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// What `refexp eval` writes: overall metrics plus one entry per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub label: String,
    pub split_names: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub splits: BTreeMap<String, BTreeMap<String, f64>>,
}

const GENERATION_COLUMNS: [(&str, &str); 4] = [
    ("bleu1", "BLEU-1"),
    ("bleu2", "BLEU-2"),
    ("rouge_l", "ROUGE-L"),
    ("meteor", "METEOR"),
];

/// Left-aligned first column, right-aligned numbers.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width = vec![0; header.len()];
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |r: &[String]| {
        let cells: Vec<String> = r
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        cells.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn splits_of<'a>(reports: &[&'a EvalReport]) -> Vec<&'a str> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        for s in &r.split_names {
            if !names.contains(&s.as_str()) {
                names.push(s);
            }
        }
    }
    names
}

fn cell(r: &EvalReport, split: &str, metric: &str) -> String {
    r.splits
        .get(split)
        .and_then(|m| m.get(metric))
        .map(|v| format!("{v:.3}"))
        .unwrap_or_else(|| "-".into())
}

/// Text tables (comprehension accuracy, generation scores, duplicate rate)
/// and a long-format CSV `label,task,split,metric,value`.
pub fn render(reports: &[EvalReport]) -> (String, String) {
    let comp: Vec<&EvalReport> = reports.iter().filter(|r| r.task == "comprehension").collect();
    let gen: Vec<&EvalReport> = reports.iter().filter(|r| r.task == "generation").collect();
    let mut text = String::new();

    text.push_str("Comprehension accuracy\n");
    if comp.is_empty() {
        text.push_str("(no comprehension results)\n");
    } else {
        let splits = splits_of(&comp);
        let header: Vec<String> = std::iter::once("model".to_string()).chain(splits.iter().map(|s| s.to_string())).collect();
        let rows: Vec<Vec<String>> = comp
            .iter()
            .map(|r| std::iter::once(r.label.clone()).chain(splits.iter().map(|s| cell(r, s, "accuracy"))).collect())
            .collect();
        text.push_str(&table(&header, &rows));
    }

    text.push_str("\nGeneration\n");
    if gen.is_empty() {
        text.push_str("(no generation results)\n");
    } else {
        let splits = splits_of(&gen);
        let mut header = vec!["model".to_string()];
        for s in &splits {
            for (_, name) in GENERATION_COLUMNS {
                header.push(format!("{s} {name}"));
            }
        }
        let rows: Vec<Vec<String>> = gen
            .iter()
            .map(|r| {
                let mut row = vec![r.label.clone()];
                for s in &splits {
                    for (key, _) in GENERATION_COLUMNS {
                        row.push(cell(r, s, key));
                    }
                }
                row
            })
            .collect();
        text.push_str(&table(&header, &rows));
    }

    text.push_str("\nDuplicate rate\n");
    if gen.is_empty() {
        text.push_str("(no generation results)\n");
    } else {
        let splits = splits_of(&gen);
        let header: Vec<String> = std::iter::once("model".to_string()).chain(splits.iter().map(|s| s.to_string())).collect();
        let rows: Vec<Vec<String>> = gen
            .iter()
            .map(|r| std::iter::once(r.label.clone()).chain(splits.iter().map(|s| cell(r, s, "duplicate_rate"))).collect())
            .collect();
        text.push_str(&table(&header, &rows));
    }

    let mut csv = String::from("label,task,split,metric,value\n");
    for r in reports {
        for (m, v) in &r.metrics {
            csv.push_str(&format!("{},{},all,{m},{v:.6}\n", r.label, r.task));
        }
        for s in &r.split_names {
            if let Some(ms) = r.splits.get(s) {
                for (m, v) in ms {
                    csv.push_str(&format!("{},{},{s},{m},{v:.6}\n", r.label, r.task));
                }
            }
        }
    }
    (text, csv)
}
