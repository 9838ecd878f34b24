//! Per-case CSV and the summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::evaluate::ReportRow;
use crate::metrics::{bland_altman, paired_t_test, summarize_errors, Stats};

pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let csv_err = |source| CoreError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let csv_err = |source| CoreError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn stats_line(out: &mut String, label: &str, s: &Stats, outliers: bool) {
    let _ = write!(
        out,
        "{label:<22}{:>8.2}{:>8.2}{:>8.2}{:>8.2}",
        s.mean, s.std, s.median, s.max
    );
    if outliers {
        let _ = write!(out, "{:>6}", s.count_gt_10);
    }
    out.push('\n');
}

fn agreement(out: &mut String, name: &str, pred: &[f64], gt: &[f64]) {
    let _ = writeln!(out, "{name} (n={}):", pred.len());
    match (paired_t_test(pred, gt), bland_altman(pred, gt)) {
        (Ok(t), Ok(ba)) => {
            let _ = writeln!(out, "  paired t-test      t = {:.4}, p = {:.4}", t.t, t.p);
            let _ = writeln!(
                out,
                "  Bland-Altman       mean diff = {:.4}, sd = {:.4}, limits = [{:.4}, {:.4}]",
                ba.mean_diff, ba.sd_diff, ba.loa_low, ba.loa_high
            );
        }
        (Err(e), _) | (_, Err(e)) => {
            let _ = writeln!(out, "  n/a: {e}");
        }
    }
}

/// Detection error table per view, Dice per class, per-fold summary and
/// predicted-vs-reference agreement for area and attenuation.
pub fn summary_text(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(CoreError::Insufficient("report has no rows".into()));
    }
    let mut out = String::new();
    let _ = writeln!(out, "Slice detection (n={})", rows.len());
    let _ = writeln!(
        out,
        "{:<22}{:>8}{:>8}{:>8}{:>8}{:>6}",
        "", "mean", "std", "median", "max", ">10"
    );
    let mut views: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        views.entry(&r.view).or_default().push((r.err_mm, r.err_slices));
    }
    for (view, errs) in &views {
        let s = summarize_errors(errs)?;
        stats_line(&mut out, &format!("{view} error (mm)"), &s.mm, true);
        stats_line(&mut out, &format!("{view} error (slice)"), &s.slices, true);
    }

    let _ = writeln!(out, "\nSegmentation Dice");
    let _ = writeln!(
        out,
        "{:<22}{:>8}{:>8}{:>8}{:>8}",
        "", "mean", "std", "median", "min"
    );
    let cols: [(&str, fn(&ReportRow) -> f64); 4] = [
        ("erector spinae", |r| r.dice_es),
        ("psoas", |r| r.dice_psoas),
        ("rectus abdominis", |r| r.dice_ra),
        ("combined", |r| r.dice_combined),
    ];
    for (name, f) in cols {
        let v: Vec<f64> = rows.iter().map(f).collect();
        let s = Stats::of(&v)?;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            out,
            "{name:<22}{:>8.4}{:>8.4}{:>8.4}{:>8.4}",
            s.mean, s.std, s.median, min
        );
    }

    let mut folds: BTreeMap<usize, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        folds.entry(r.fold).or_default().push(r);
    }
    let _ = writeln!(out, "\nFolds");
    let _ = writeln!(
        out,
        "{:<8}{:>6}{:>16}{:>16}",
        "fold", "n", "median err mm", "mean dice"
    );
    for (fold, rs) in &folds {
        let e: Vec<f64> = rs.iter().map(|r| r.err_mm).collect();
        let d: Vec<f64> = rs.iter().map(|r| r.dice_combined).collect();
        let _ = writeln!(
            out,
            "{fold:<8}{:>6}{:>16.2}{:>16.4}",
            rs.len(),
            Stats::of(&e)?.median,
            Stats::of(&d)?.mean
        );
    }

    let _ = writeln!(out, "\nAgreement, predicted vs reference");
    let pa: Vec<f64> = rows.iter().map(|r| r.area_cm2).collect();
    let ga: Vec<f64> = rows.iter().map(|r| r.gt_area_cm2).collect();
    agreement(&mut out, "muscle area (cm2)", &pa, &ga);
    let (pm, gm): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((r.ma_hu?, r.gt_ma_hu?)))
        .unzip();
    agreement(&mut out, "muscle attenuation (HU)", &pm, &gm);
    Ok(out)
}
