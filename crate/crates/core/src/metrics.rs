//! Depth evaluation metrics, computed in metric space and in `f64`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_inv: f64,
    pub l1_inv: f64,
    pub sc_inv: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

pub const METRIC_NAMES: [&str; 9] = [
    "abs_rel", "sq_rel", "rmse", "rmse_inv", "l1_inv", "sc_inv", "delta1", "delta2", "delta3",
];

impl MetricReport {
    pub fn values(&self) -> [f64; 9] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_inv,
            self.l1_inv,
            self.sc_inv,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    fn from_values(v: [f64; 9], n_valid: usize) -> Self {
        Self {
            abs_rel: v[0],
            sq_rel: v[1],
            rmse: v[2],
            rmse_inv: v[3],
            l1_inv: v[4],
            sc_inv: v[5],
            delta1: v[6],
            delta2: v[7],
            delta3: v[8],
            n_valid,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|&n| n == name).map(|i| self.values()[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metric report serializes")
    }
}

/// Metrics of `pred` against ground truth `gt` over the intersection of their masks.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap) -> Result<MetricReport> {
    if pred.values().shape() != gt.values().shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.values().shape(),
            gt.values().shape()
        )));
    }
    let mask = pred.mask().and(gt.mask())?;
    let pairs = pred
        .values()
        .data()
        .iter()
        .zip(gt.values().data())
        .zip(mask.bits())
        .filter(|(_, &m)| m)
        .map(|((&d, &g), _)| (d, g));
    evaluate_pairs(pairs)
}

/// Metrics over `(prediction, ground truth)` depth pairs.
pub fn evaluate_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<MetricReport> {
    let mut n = 0usize;
    let mut acc = [0.0f64; 9];
    let mut z_sum = 0.0;
    let mut z_sq = 0.0;
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for (d, g) in pairs {
        if !(d > 0.0 && g > 0.0 && d.is_finite() && g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth pair ({d}, {g}) must be positive and finite"
            )));
        }
        n += 1;
        let diff = d - g;
        acc[0] += diff.abs() / g;
        acc[1] += diff * diff / g;
        acc[2] += diff * diff;
        let inv = 1.0 / d - 1.0 / g;
        acc[3] += inv * inv;
        acc[4] += inv.abs();
        let z = d.ln() - g.ln();
        z_sum += z;
        z_sq += z * z;
        let ratio = (d / g).max(g / d);
        for (k, t) in thresholds.iter().enumerate() {
            if ratio < *t {
                acc[6 + k] += 1.0;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("no pixel valid in both maps".into()));
    }
    let nf = n as f64;
    let mut v = acc.map(|a| a / nf);
    v[2] = v[2].sqrt();
    v[3] = v[3].sqrt();
    let mz = z_sum / nf;
    v[5] = (z_sq / nf - mz * mz).max(0.0).sqrt();
    Ok(MetricReport::from_values(v, n))
}

fn aggregate(reports: &[MetricReport], f: impl Fn(&mut Vec<f64>) -> f64) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("aggregate of zero reports".into()));
    }
    let mut out = [0.0; 9];
    for (i, o) in out.iter_mut().enumerate() {
        let mut col: Vec<f64> = reports.iter().map(|r| r.values()[i]).collect();
        *o = f(&mut col);
    }
    Ok(MetricReport::from_values(out, reports.iter().map(|r| r.n_valid).sum()))
}

/// Field-wise arithmetic mean, summed in input order.
pub fn mean_report(reports: &[MetricReport]) -> Result<MetricReport> {
    aggregate(reports, |c| c.iter().sum::<f64>() / c.len() as f64)
}

/// Field-wise median; the mean of the two middle values for even counts.
pub fn median_report(reports: &[MetricReport]) -> Result<MetricReport> {
    aggregate(reports, |c| median(c))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Writes labelled reports as a CSV table, one row per report.
pub fn write_csv_table<W: Write>(out: W, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label"];
    header.extend(METRIC_NAMES);
    header.push("n_valid");
    w.write_record(&header).map_err(csv_err)?;
    for (label, r) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(r.values().iter().map(|v| format!("{v}")));
        rec.push(r.n_valid.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let r = evaluate_pairs([(1.0, 1.0), (2.0, 2.0), (5.0, 5.0)]).unwrap();
        for v in &r.values()[..6] {
            assert_eq!(*v, 0.0);
        }
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!(r.n_valid, 3);
    }

    #[test]
    fn single_pixel_example() {
        let r = evaluate_pairs([(1.2, 1.0)]).unwrap();
        assert!((r.abs_rel - 0.2).abs() < 1e-12);
        assert_eq!(r.delta1, 1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(evaluate_pairs(std::iter::empty()).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = evaluate_pairs([(1.2, 1.0)]).unwrap();
        let mut buf = Vec::new();
        write_csv_table(&mut buf, &[("a,b".to_string(), r)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("label,abs_rel,"));
        assert!(s.contains("\"a,b\""));
    }

    #[test]
    fn json_is_flat() {
        let r = evaluate_pairs([(1.2, 1.0)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v.as_object().unwrap().values().all(|x| x.is_number()));
    }
}
