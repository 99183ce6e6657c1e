use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    #[serde(rename = "f1_macro")]
    pub macro_f1: f64,
    #[serde(rename = "f1_micro")]
    pub micro_f1: f64,
}

/// Macro F1 over classes seen in either truth or predictions, and micro F1 over all frames.
pub fn f1_scores(preds: &[usize], truth: &[usize], n_classes: usize) -> Result<F1Scores> {
    if preds.len() != truth.len() {
        return Err(FgseError::Argument(format!(
            "{} predictions for {} ground-truth frames",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(FgseError::Argument("F1 of an empty label sequence".into()));
    }
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fnc = vec![0u64; n_classes];
    for (&p, &t) in preds.iter().zip(truth) {
        for (c, len) in [(p, n_classes), (t, n_classes)] {
            if c >= len {
                return Err(FgseError::Index {
                    what: "class",
                    index: c,
                    len,
                });
            }
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnc[t] += 1;
        }
    }
    let f1 = |tp: u64, fp: u64, fnc: u64| tp as f64 / (tp as f64 + 0.5 * (fp + fnc) as f64);
    let present: Vec<usize> = (0..n_classes).filter(|&c| tp[c] + fp[c] + fnc[c] > 0).collect();
    let macro_f1 = present.iter().map(|&c| f1(tp[c], fp[c], fnc[c])).sum::<f64>() / present.len() as f64;
    let micro_f1 = f1(tp.iter().sum(), fp.iter().sum(), fnc.iter().sum());
    Ok(F1Scores { macro_f1, micro_f1 })
}

/// Scores several label streams (e.g. both hands) pooled into one.
pub fn f1_pooled(preds: &[Vec<usize>], truth: &[Vec<usize>], n_classes: usize) -> Result<F1Scores> {
    if preds.len() != truth.len() {
        return Err(FgseError::Argument(format!(
            "{} predicted streams for {} label streams",
            preds.len(),
            truth.len()
        )));
    }
    f1_scores(&preds.concat(), &truth.concat(), n_classes)
}
