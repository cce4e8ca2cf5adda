//! Audit rows and their CSV layout.
//!
//! The column order of [`COLUMNS`] is part of the file format (version
//! [`SCHEMA_VERSION`]); new columns are only ever appended behind flags.

use std::io::Write;
use std::path::Path;

use anyhow::Context;

use pacnr::analysis::{scan_dataset, DatasetScan};
use pacnr::bounds::{bound_report, BoundReport};
use pacnr::data::Dataset;
use pacnr::network::{forward, margin_of_logits, MlpParams};
use pacnr::trainer::margin_accuracy;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 25] = [
    "depth",
    "width",
    "m",
    "gamma_class",
    "delta",
    "B_layer_l2",
    "B_preact",
    "B_preact_5pc",
    "B_preact_median",
    "B_output",
    "B_jac_row_l2",
    "B_jac_spec",
    "sigma_star",
    "binding_constraint",
    "kl",
    "train_margin_loss",
    "test_error",
    "our_bound",
    "our_bound_5pc",
    "our_bound_median",
    "our_bound_loose",
    "neyshabur18",
    "bartlett17",
    "spectral_term",
    "warnings",
];

/// Appended with `--loose`.
pub const LOOSE_COLUMNS: [&str; 2] = ["B_jac_row_l2_loose", "sigma_star_loose"];

/// Appended with `--figure-mode`: bounds with the sample-size and log
/// factors dropped, for comparing growth across depth or width.
pub const FIGURE_COLUMNS: [&str; 4] = [
    "our_bound_fig",
    "our_bound_5pc_fig",
    "our_bound_median_fig",
    "our_bound_loose_fig",
];

/// The four B-terms whose maximum is compared against the spectral term in
/// depth sweeps.
pub const CORE_B_COLUMNS: [&str; 4] = ["B_layer_l2", "B_output", "B_jac_row_l2", "B_jac_spec"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RowOptions {
    pub loose: bool,
    pub figure_mode: bool,
}

impl RowOptions {
    pub fn header(self) -> Vec<&'static str> {
        let mut h = COLUMNS.to_vec();
        if self.loose {
            h.extend(LOOSE_COLUMNS);
        }
        if self.figure_mode {
            h.extend(FIGURE_COLUMNS);
        }
        h
    }
}

/// Floats as the shortest string that parses back to the same value, in
/// exponent notation outside `[1e-4, 1e15)`, with `inf` and `nan` spelled
/// out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Clone, Debug)]
pub struct Audit {
    pub report: BoundReport,
    pub test_error: Option<f64>,
    pub scan: DatasetScan,
}

impl Audit {
    pub fn values(&self, opts: RowOptions) -> Vec<String> {
        let r = &self.report;
        let f = fmt_f64;
        let mut v = vec![
            r.depth.to_string(),
            r.width.to_string(),
            r.m.to_string(),
            f(r.gamma_class),
            f(r.delta),
            f(r.b.layer_l2),
            f(r.b.preact),
            f(r.b.preact_5pc),
            f(r.b.preact_median),
            f(r.b.output),
            f(r.b.jac_row_l2),
            f(r.b.jac_spec),
            f(r.sigma_star),
            r.binding_constraint.clone(),
            f(r.kl),
            f(r.train_margin_loss),
            self.test_error.map(f).unwrap_or_default(),
            f(r.final_bound),
            f(r.final_bound_5pc),
            f(r.final_bound_median),
            f(r.final_bound_loose),
            f(r.baselines.neyshabur18),
            f(r.baselines.bartlett17),
            f(r.baselines.spectral_term),
            r.warnings.join("; "),
        ];
        if opts.loose {
            v.push(f(r.b.jac_row_l2_loose));
            v.push(f(r.sigma_star_loose));
        }
        if opts.figure_mode {
            let n = &r.normalized;
            v.extend([f(n.ours), f(n.ours_5pc), f(n.ours_median), f(n.ours_loose)]);
        }
        v
    }
}

/// Fraction of `data` not classified correctly; a tie counts as an error.
pub fn test_error(params: &MlpParams, data: &Dataset) -> CliResult<f64> {
    let mut wrong = 0usize;
    for e in &data.examples {
        let t = forward(params, &e.x)?;
        if margin_of_logits(t.logits(), e.y)? <= 0.0 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Scans the training set, evaluates every bound and, given a test split,
/// the test error.
pub fn audit(
    params: &MlpParams,
    train: &Dataset,
    test: Option<&Dataset>,
    gamma_class: f64,
    delta: f64,
) -> CliResult<Audit> {
    let scan = scan_dataset(params, &train.examples, gamma_class)?;
    let loss = 1.0 - margin_accuracy(params, &train.examples, gamma_class)?;
    let report = bound_report(params, &scan.bounds, loss, train.max_input_norm(), delta)?;
    let test_error = test.map(|t| test_error(params, t)).transpose()?;
    Ok(Audit {
        report,
        test_error,
        scan,
    })
}

pub fn write_rows<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let file = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_rows(file, header, rows)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::usage)
}

/// Per-input properties of the training set, one row per example.
pub fn write_archive(path: &Path, audit: &Audit, train: &Dataset) -> CliResult<()> {
    let per = &audit.scan.per_input;
    let Some(first) = per.first() else {
        return write_csv(path, &["index"], &[]);
    };
    let depth = first.depth();
    let mut header: Vec<String> = vec!["index".into(), "label".into(), "margin".into()];
    header.extend((0..depth).map(|d| format!("layer_l2[{d}]")));
    header.extend((1..depth).map(|d| format!("min_preact[{d}]")));
    let pairs: Vec<(usize, usize)> = first.jac_row_l2.pairs().collect();
    header.extend(pairs.iter().map(|(a, b)| format!("jac_row_l2[{a}->{b}]")));
    header.extend(pairs.iter().map(|(a, b)| format!("jac_spec[{a}->{b}]")));
    let rows: Vec<Vec<String>> = per
        .iter()
        .zip(&train.examples)
        .enumerate()
        .map(|(i, (p, e))| {
            let mut r = vec![i.to_string(), e.y.to_string(), fmt_f64(p.margin_value)];
            r.extend(p.layer_l2.iter().map(|&v| fmt_f64(v)));
            r.extend(p.min_preact.iter().map(|&v| fmt_f64(v)));
            r.extend(pairs.iter().map(|&(a, b)| fmt_f64(p.jac_row_l2.get(a, b))));
            r.extend(pairs.iter().map(|&(a, b)| fmt_f64(p.jac_spec.get(a, b))));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1e-300, 123456.789, -2.5e-9, 1.0 / 3.0, 3.5e-10, 2e22, -0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(3.5e-10), "3.5e-10");
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!("inf".parse::<f64>().unwrap(), f64::INFINITY);
    }

    #[test]
    fn header_extensions_append() {
        let h = RowOptions {
            loose: true,
            figure_mode: true,
        }
        .header();
        assert_eq!(&h[..25], &COLUMNS[..]);
        assert_eq!(h.len(), 31);
        assert_eq!(h[25], "B_jac_row_l2_loose");
        assert_eq!(h[27], "our_bound_fig");
    }

    #[test]
    fn csv_quotes_warnings_with_commas() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &["a", "warnings"], &[vec!["1".into(), "x, y".into()]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,warnings\n1,\"x, y\"\n");
    }
}
