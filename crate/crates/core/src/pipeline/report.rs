//! Deterministic text exports of an [`AnalysisReport`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use readpred_gam::{stars, write_curve_csv, write_term_table};
use sha2::{Digest, Sha256};

use super::{create, AnalysisReport, ComparisonRow, MeasureReport};
use crate::error::{IoContext, Result};
use crate::tsv::fmt_num;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_path(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

const COMPARISON_HEADER: &str = "label\tstep\tbase\textended\tdelta_deviance\tdelta_edf\tchi_square\tp_value\tsig\tdelta_r2_adj_pct\tdelta_gcv\tstatus";

fn write_comparisons<W: Write>(mut out: W, rows: &[ComparisonRow]) -> Result<()> {
    writeln!(out, "{COMPARISON_HEADER}")?;
    for r in rows {
        write!(out, "{}\t{}\t{}\t{}\t", r.label, r.step, r.base, r.extended)?;
        match &r.result {
            Ok(c) => writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\tok",
                fmt_num(c.delta_deviance),
                fmt_num(c.delta_edf),
                fmt_num(c.chi_square),
                c.p_value.map_or("NA".into(), fmt_num),
                c.p_value.map_or("", stars),
                fmt_num(c.delta_r2_adj_percent),
                fmt_num(c.delta_gcv),
            )?,
            Err(e) => writeln!(out, "NA\tNA\tNA\tNA\t\tNA\tNA\tfailed: {}", e.replace(['\t', '\n'], " "))?,
        }
    }
    Ok(())
}

fn write_fits<W: Write>(mut out: W, m: &MeasureReport) -> Result<()> {
    writeln!(out, "model\tstatus\tn\tdeviance\tedf\tgcv\tr2_adj\tdispersion\titerations\tcovariates")?;
    for (name, rec) in &m.fits.fits {
        let covs = rec.spec.covariates.join(",");
        match &rec.outcome {
            Ok(f) => writeln!(
                out,
                "{name}\tok\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{covs}",
                f.n(),
                fmt_num(f.deviance),
                fmt_num(f.edf),
                fmt_num(f.gcv),
                fmt_num(f.r2_adj),
                fmt_num(f.dispersion),
                f.iterations,
            )?,
            Err(e) => writeln!(
                out,
                "{name}\tfailed: {}\tNA\tNA\tNA\tNA\tNA\tNA\tNA\t{covs}",
                e.replace(['\t', '\n'], " ")
            )?,
        }
    }
    Ok(())
}

/// `key -> value` lines of the manifest that count rows.
pub fn manifest_counts(report: &AnalysisReport) -> BTreeMap<String, usize> {
    let mut c = BTreeMap::new();
    c.insert("rows.predictors".into(), report.predictor_rows);
    c.insert("rows.predictors_complete".into(), report.complete_rows);
    c.insert("rows.measures".into(), report.measure_rows);
    for m in &report.measures {
        let k = |s: &str| format!("filter.{}.{s}", m.measure.name());
        let f = &m.filter;
        c.insert(k("input"), f.input);
        c.insert(k("missing"), f.missing);
        c.insert(k("boundary"), f.boundary);
        c.insert(k("too_short"), f.too_short);
        c.insert(k("too_long"), f.too_long);
        c.insert(k("kept"), f.kept);
        c.insert(k("unmatched"), m.unmatched);
        c.insert(k("analysed"), m.data_rows);
        let failed = m.fits.fits.values().filter(|r| r.outcome.is_err()).count();
        c.insert(format!("fits.{}.total", m.measure.name()), m.fits.fits.len());
        c.insert(format!("fits.{}.failed", m.measure.name()), failed);
    }
    c
}

fn write_manifest<W: Write>(mut out: W, report: &AnalysisReport) -> Result<()> {
    writeln!(out, "tool = readpred")?;
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "seed = {}", report.seed)?;
    for (label, path) in &report.inputs {
        let name = path.file_name().map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        writeln!(out, "input.{label} = {name}")?;
        writeln!(out, "input.{label}.sha256 = {}", sha256_file(path)?)?;
    }
    for (k, v) in manifest_counts(report) {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}

/// Writes correlations, per-measure ladder, head-to-head, fit and term
/// tables, partial-effect curves and a manifest into `dir`.
pub fn emit_reports(report: &AnalysisReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_path(dir)?;
    let mut out = create(&dir.join("correlations.tsv"))?;
    writeln!(out, "a\tb\tn\tr")?;
    for c in &report.correlations {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            c.a,
            c.b,
            c.n,
            c.r.map_or("NA".into(), fmt_num)
        )?;
    }
    out.flush()?;

    let mut out = create(&dir.join("filter_log.tsv"))?;
    writeln!(out, "measure\tinput\tmissing\tboundary\ttoo_short\ttoo_long\tkept\tunmatched\tanalysed")?;
    for m in &report.measures {
        let f = &m.filter;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.measure.name(),
            f.input,
            f.missing,
            f.boundary,
            f.too_short,
            f.too_long,
            f.kept,
            m.unmatched,
            m.data_rows
        )?;
    }
    out.flush()?;

    for m in &report.measures {
        let name = m.measure.name();
        let mut out = create(&dir.join(format!("ladder_{name}.tsv")))?;
        write_comparisons(&mut out, &m.ladder)?;
        out.flush()?;
        let mut out = create(&dir.join(format!("head_to_head_{name}.tsv")))?;
        write_comparisons(&mut out, &m.head_to_head)?;
        out.flush()?;
        let mut out = create(&dir.join(format!("fits_{name}.tsv")))?;
        write_fits(&mut out, m)?;
        out.flush()?;
        let mut out = create(&dir.join(format!("terms_{name}.tsv")))?;
        write_term_table(&mut out, &m.terms)?;
        out.flush()?;
        for (term, points) in &m.curves {
            let mut out = create(&dir.join("curves").join(format!("{name}_{term}.csv")))?;
            write_curve_csv(&mut out, points)?;
            out.flush()?;
        }
    }

    let mut out = create(&dir.join("manifest.txt"))?;
    write_manifest(&mut out, report)?;
    out.flush()?;
    Ok(())
}
