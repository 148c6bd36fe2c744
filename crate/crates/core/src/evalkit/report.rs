use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pot::PotProgram;
use super::relaxed::relaxed_match;
use crate::error::{Error, Result};

/// One prediction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    #[serde(default)]
    pub question: String,
    pub ground_truth: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemVerdict {
    pub id: String,
    pub verdict_per_margin: Vec<bool>,
    /// Answer the PoT program produced, when it replaced the prediction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pot_answer: Option<f64>,
    /// Why a PoT prediction failed to run; the item then scores incorrect.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pot_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedReport {
    pub margins: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub correct: Vec<usize>,
    pub total: usize,
    pub items: Vec<ItemVerdict>,
}

impl RelaxedReport {
    pub fn accuracy_at(&self, margin: f64) -> Option<f64> {
        self.margins
            .iter()
            .position(|&m| m == margin)
            .map(|i| self.accuracies[i])
    }
}

fn check_margins(margins: &[f64]) -> Result<()> {
    if margins.is_empty() {
        return Err(Error::Config("at least one margin is required".into()));
    }
    if let Some(m) = margins.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
        return Err(Error::Config(format!("margin {m} outside (0, 1)")));
    }
    Ok(())
}

pub fn score_item(item: &QAItem, margins: &[f64], pot_mode: bool) -> ItemVerdict {
    let mut pot_answer = None;
    let mut pot_error = None;
    let mut pred = item.prediction.clone();
    if pot_mode {
        if let Ok(program) = PotProgram::parse(&item.prediction) {
            match program.eval() {
                Ok(v) => {
                    pot_answer = Some(v);
                    pred = format!("{v}");
                }
                Err(e) => pot_error = Some(e.to_string()),
            }
        }
    }
    let verdict_per_margin = margins
        .iter()
        .map(|&m| pot_error.is_none() && relaxed_match(&pred, &item.ground_truth, m))
        .collect();
    ItemVerdict {
        id: item.id.clone(),
        verdict_per_margin,
        pot_answer,
        pot_error,
    }
}

pub fn score_report(items: &[QAItem], margins: &[f64], pot_mode: bool) -> Result<RelaxedReport> {
    check_margins(margins)?;
    if items.is_empty() {
        return Err(Error::Usage("no items to score".into()));
    }
    let verdicts: Vec<ItemVerdict> = items
        .iter()
        .map(|i| score_item(i, margins, pot_mode))
        .collect();
    let correct: Vec<usize> = (0..margins.len())
        .map(|k| verdicts.iter().filter(|v| v.verdict_per_margin[k]).count())
        .collect();
    Ok(RelaxedReport {
        margins: margins.to_vec(),
        accuracies: correct
            .iter()
            .map(|&c| c as f64 / items.len() as f64)
            .collect(),
        correct,
        total: items.len(),
        items: verdicts,
    })
}

/// Read a JSON-lines prediction file. Blank lines are skipped.
pub fn load_predictions(path: &Path) -> Result<Vec<QAItem>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if item.ground_truth.trim().is_empty() {
            return Err(Error::Input(format!(
                "{}:{}: empty ground truth",
                path.display(),
                i + 1
            )));
        }
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::DEFAULT_MARGINS;

    fn item(id: &str, gt: &str, pred: &str) -> QAItem {
        QAItem {
            id: id.into(),
            question: String::new(),
            ground_truth: gt.into(),
            prediction: pred.into(),
        }
    }

    #[test]
    fn identity_predictions_score_one() {
        let items = vec![
            item("a", "12", "12"),
            item("b", "Blue", "Blue"),
            item("c", "(1, 2)", "(1, 2)"),
        ];
        let r = score_report(&items, &DEFAULT_MARGINS, false).unwrap();
        assert_eq!(r.accuracies, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn pot_errors_do_not_abort_the_run() {
        let items = vec![
            item("ok", "6", "a=[1,2,3]\nanswer=sum(a)"),
            item("div", "1", "answer=1/0"),
            item("undef", "1", "answer=q"),
            item("plain", "7", "7"),
        ];
        let r = score_report(&items, &DEFAULT_MARGINS, true).unwrap();
        assert_eq!(r.correct, [2, 2, 2]);
        assert!(r.items[1]
            .pot_error
            .as_deref()
            .unwrap()
            .contains("division by zero"));
        assert!(r.items[2]
            .pot_error
            .as_deref()
            .unwrap()
            .contains("undefined"));
        assert_eq!(r.items[0].pot_answer, Some(6.0));

        // Without PoT mode the program text is matched literally.
        let r = score_report(&items[..1], &DEFAULT_MARGINS, false).unwrap();
        assert_eq!(r.correct, [0, 0, 0]);
    }

    #[test]
    fn bad_margins_and_empty_input() {
        let items = vec![item("a", "1", "1")];
        assert!(matches!(
            score_report(&items, &[0.0], false),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            score_report(&items, &[1.0], false),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            score_report(&[], &DEFAULT_MARGINS, false),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn report_json_has_the_documented_fields() {
        let r = score_report(&[item("a", "1", "1")], &DEFAULT_MARGINS, false).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert!(v["margins"].is_array() && v["accuracies"].is_array());
        assert_eq!(
            v["items"][0]["verdict_per_margin"],
            serde_json::json!([true, true, true])
        );
    }
}
