use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureContext, ModelSpec};
use crate::graph::SocialGraph;
use crate::hawkes::{fit_precomputed, FitConfig, Kernel, Precomputed};
use crate::tsv;

use super::{bh_correct, bh_threshold, chi2_isf_1dof, lrt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub base: ModelSpec,
    pub added: Vec<Feature>,
    pub alpha: f64,
    pub kernel: Kernel,
    pub fit: FitConfig,
    /// Tie-strength percentile for the strong-tie feature.
    pub percentile: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            base: ModelSpec::baseline(),
            added: vec![Feature::StrongTie, Feature::Local],
            alpha: 0.05,
            kernel: Kernel::default(),
            fit: FitConfig::default(),
            percentile: 90.0,
        }
    }
}

/// One (word, added feature) test. Likelihood fields are `None` when the
/// word could not be fitted; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub word: String,
    pub feature: Feature,
    pub events: usize,
    pub ll_base: Option<f64>,
    pub ll_full: Option<f64>,
    pub lr_stat: Option<f64>,
    pub p: Option<f64>,
    pub bh_reject: bool,
    /// Negative LR beyond tolerance: the larger model fitted worse.
    pub flagged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub word: String,
    pub feature: Feature,
    pub events: usize,
    pub ll_gain: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub base: ModelSpec,
    pub alpha: f64,
    pub tests: usize,
    pub rejections: usize,
    /// Realized BH cut-off on p-values for this run.
    pub p_threshold: Option<f64>,
    /// The same cut-off expressed as a log-likelihood gain 𝓛_full − 𝓛_base.
    pub ll_gain_threshold: Option<f64>,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn plot_points(&self) -> Vec<PlotPoint> {
        self.rows
            .iter()
            .filter_map(|r| {
                Some(PlotPoint {
                    word: r.word.clone(),
                    feature: r.feature,
                    events: r.events,
                    ll_gain: r.ll_full? - r.ll_base?,
                    significant: r.bh_reject,
                })
            })
            .collect()
    }

    pub fn row(&self, word: &str, feature: Feature) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.word == word && r.feature == feature)
    }
}

fn word_rows(
    graph: &SocialGraph,
    cascade: &Cascade,
    opts: &CompareOptions,
    added: &[(Feature, ModelSpec)],
) -> Vec<CompareRow> {
    let failed = |msg: String| -> Vec<CompareRow> {
        added
            .iter()
            .map(|&(feature, _)| CompareRow {
                word: cascade.word.clone(),
                feature,
                events: cascade.len(),
                ll_base: None,
                ll_full: None,
                lr_stat: None,
                p: None,
                bh_reject: false,
                flagged: false,
                error: Some(msg.clone()),
            })
            .collect()
    };
    let prepared = FeatureContext::for_cascade(graph, cascade, opts.percentile)
        .and_then(|ctx| Precomputed::new(graph, &ctx, cascade, opts.kernel));
    let pre = match prepared {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let base = match fit_precomputed(&pre, opts.base, &opts.fit) {
        Ok(f) => f,
        Err(e) => return failed(e.to_string()),
    };
    added
        .iter()
        .map(|&(feature, spec)| {
            let mut row = CompareRow {
                word: cascade.word.clone(),
                feature,
                events: cascade.len(),
                ll_base: Some(base.loglik),
                ll_full: None,
                lr_stat: None,
                p: None,
                bh_reject: false,
                flagged: false,
                error: None,
            };
            match fit_precomputed(&pre, spec, &opts.fit).and_then(|full| {
                let t = lrt(&base, &full)?;
                Ok((full.loglik, t))
            }) {
                Ok((ll, t)) => {
                    row.ll_full = Some(ll);
                    row.lr_stat = Some(t.statistic);
                    row.p = Some(t.p);
                    row.flagged = t.flagged;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

/// Fits the base model and each one-feature extension for every word, then
/// applies BH jointly across all tests that produced a p-value.
pub fn compare_pipeline(cascades: &[Cascade], graph: &SocialGraph, opts: &CompareOptions) -> Result<CompareReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1), got {}",
            opts.alpha
        )));
    }
    let mut added = Vec::new();
    for &f in &opts.added {
        if opts.base.contains(f) {
            return Err(Error::InvalidArgument(format!("{f} is already in {}", opts.base)));
        }
        added.push((f, opts.base.with(f)));
    }
    let mut rows: Vec<CompareRow> = cascades
        .par_iter()
        .map(|c| word_rows(graph, c, opts, &added))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let tested: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].p.is_some()).collect();
    let pvalues: Vec<f64> = tested.iter().map(|&i| rows[i].p.unwrap_or(1.0)).collect();
    let decisions = bh_correct(&pvalues, opts.alpha);
    for (&i, &d) in tested.iter().zip(&decisions) {
        rows[i].bh_reject = d;
    }
    let p_threshold = bh_threshold(&pvalues, opts.alpha);
    Ok(CompareReport {
        base: opts.base,
        alpha: opts.alpha,
        tests: pvalues.len(),
        rejections: decisions.iter().filter(|&&d| d).count(),
        p_threshold,
        ll_gain_threshold: p_threshold.map(|p| chi2_isf_1dof(p) / 2.0),
        rows,
    })
}

pub fn write_compare_tsv<W: Write>(mut w: W, report: &CompareReport) -> Result<()> {
    writeln!(w, "word\tfeature\tN\tll_base\tll_full\tlr_stat\tp\tbh_reject")?;
    for r in &report.rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.word,
            r.feature,
            r.events,
            tsv::opt(r.ll_base),
            tsv::opt(r.ll_full),
            tsv::opt(r.lr_stat),
            tsv::opt(r.p),
            r.bh_reject
        )?;
    }
    Ok(())
}

/// Log-likelihood gain against event count, with the run's significance
/// threshold repeated on every row for plotting as a horizontal line.
pub fn write_plot_tsv<W: Write>(mut w: W, report: &CompareReport) -> Result<()> {
    writeln!(w, "word\tfeature\tN\tll_gain\tsignificant\tll_gain_threshold")?;
    for p in report.plot_points() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.word,
            p.feature,
            p.events,
            tsv::float(p.ll_gain),
            p.significant,
            tsv::opt(report.ll_gain_threshold)
        )?;
    }
    Ok(())
}
