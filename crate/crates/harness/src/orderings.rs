//! Ordering checks between aggregated cells of a run report.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::{ModelSpec, RunReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingOutcome {
    pub name: String,
    pub test: String,
    pub better: ModelSpec,
    pub worse: ModelSpec,
    pub better_sc_inv: Option<f64>,
    pub worse_sc_inv: Option<f64>,
    pub better_rmse: Option<f64>,
    pub worse_rmse: Option<f64>,
    pub passed: bool,
    pub note: String,
}

/// Evaluates every ordering listed in the report's spec on median sc_inv and median rmse.
///
/// An ordering holds when `better` is strictly lower on both. Comparing a
/// model with itself is a tie and passes vacuously.
pub fn assert_orderings(report: &RunReport) -> Result<Vec<OrderingOutcome>> {
    report
        .spec
        .orderings
        .iter()
        .map(|o| {
            let find = |m: &ModelSpec| {
                report
                    .aggregate(m, &o.test)
                    .ok_or_else(|| HarnessError::IncompleteGrid(format!("{m} on {}", o.test)))
            };
            let (b, w) = (find(&o.better)?, find(&o.worse)?);
            let (bm, wm) = (b.median, w.median);
            let mut out = OrderingOutcome {
                name: o.name.clone(),
                test: o.test.clone(),
                better: o.better.clone(),
                worse: o.worse.clone(),
                better_sc_inv: bm.map(|m| m.sc_inv),
                worse_sc_inv: wm.map(|m| m.sc_inv),
                better_rmse: bm.map(|m| m.rmse),
                worse_rmse: wm.map(|m| m.rmse),
                passed: false,
                note: String::new(),
            };
            if o.better == o.worse {
                out.passed = true;
                out.note = "same model on both sides; tie".into();
                return Ok(out);
            }
            match (bm, wm) {
                (Some(bm), Some(wm)) => {
                    let sc = bm.sc_inv < wm.sc_inv;
                    let rmse = bm.rmse < wm.rmse;
                    out.passed = sc && rmse;
                    out.note = match (sc, rmse) {
                        (true, true) => "holds on sc_inv and rmse".into(),
                        (false, true) => "fails on sc_inv".into(),
                        (true, false) => "fails on rmse".into(),
                        (false, false) => "fails on sc_inv and rmse".into(),
                    };
                }
                _ => out.note = "every seed of one side diverged".into(),
            }
            Ok(out)
        })
        .collect()
}
