//! Threshold sweeps, multi-run aggregation and certainty-delta statistics.

use crate::classifier::{index_keys, predict_with_certainty_keyed, CertaintyClassifier};
use crate::data::LabeledImageSet;
use crate::error::{GwinError, Result};
use crate::gwin::Transformer;
use crate::pipeline::{transform_and_relabel, InferenceConfig};
use crate::rejection::reject;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Mean and sample standard deviation (n - 1). A single value has std 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

/// One threshold of one run. Accuracies and deltas are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub tau: f32,
    pub n_test: usize,
    pub n_rejected: usize,
    pub pct_reject: f64,
    /// Forced prediction: the classifier's own label on the rejected items.
    pub bnn_acc_rejected: Option<f64>,
    pub bnn_gwin_acc_rejected: Option<f64>,
    pub rejected_acc_delta: Option<f64>,
    pub overall_acc_baseline: f64,
    pub overall_acc_gwin: f64,
    pub overall_acc_delta: f64,
    /// `None` when the baseline makes no errors.
    pub pct_error_delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub tau: f32,
    pub pct_reject: MeanStd,
    pub bnn_acc_rejected: Option<MeanStd>,
    pub bnn_gwin_acc_rejected: Option<MeanStd>,
    pub rejected_acc_delta: Option<MeanStd>,
    pub overall_acc_delta: MeanStd,
    pub pct_error_delta: Option<MeanStd>,
    pub n_runs: usize,
    /// Runs with at least one rejected example; the rejected-subset columns
    /// aggregate over these only.
    pub n_runs_with_rejections: usize,
}

fn pct(correct: usize, total: usize) -> f64 {
    100.0 * correct as f64 / total as f64
}

fn check_taus(taus: &[f32]) -> Result<()> {
    if taus.is_empty() {
        return Err(GwinError::InvalidConfig("no thresholds given".into()));
    }
    for &t in taus {
        if !(0.0..=1.0).contains(&t) {
            return Err(GwinError::OutOfRange { name: "tau", value: t });
        }
    }
    Ok(())
}

/// Every threshold for a single run on fixed models. Each example is
/// classified once and, if rejected at the largest threshold, transformed
/// once; smaller thresholds reuse those results, which is exactly what
/// per-threshold inference with the same seed would produce.
pub fn run_metrics<C, G>(
    clf: &C,
    generator: &G,
    test: &LabeledImageSet,
    taus: &[f32],
    mc_samples: usize,
    seed: u64,
    run: usize,
) -> Result<Vec<RunMetrics>>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    check_taus(taus)?;
    let n = test.len();
    let keys = index_keys(n);
    let cfg = InferenceConfig::new(0.0, mc_samples, seed);
    let initial = predict_with_certainty_keyed(clf, &test.images, &cfg.classifier_certainty(), &keys)?;
    let tau_max = taus.iter().copied().fold(0.0f32, f32::max);
    let mut candidates = Vec::new();
    for (i, p) in initial.iter().enumerate() {
        if !reject(p.certainty, p.label, tau_max)?.is_accepted() {
            candidates.push(i);
        }
    }
    let relabels = transform_and_relabel(clf, generator, &test.images, &keys, &candidates, &cfg)?;
    let mut relabel_of = vec![None; n];
    for (&i, p) in candidates.iter().zip(&relabels) {
        relabel_of[i] = Some(p.label);
    }

    let base_correct: usize = initial.iter().zip(&test.labels).filter(|(p, &y)| p.label == y).count();
    let overall_acc_baseline = pct(base_correct, n);
    taus.iter()
        .map(|&tau| {
            let (mut n_rej, mut rej_base, mut rej_gwin) = (0usize, 0usize, 0usize);
            for (i, p) in initial.iter().enumerate() {
                if reject(p.certainty, p.label, tau)?.is_accepted() {
                    continue;
                }
                let y = test.labels[i];
                let relabel = relabel_of[i].expect("rejected at a smaller tau implies rejected at the largest");
                n_rej += 1;
                rej_base += usize::from(p.label == y);
                rej_gwin += usize::from(relabel == y);
            }
            let gwin_correct = base_correct - rej_base + rej_gwin;
            let overall_acc_gwin = pct(gwin_correct, n);
            let (bnn, gwin) =
                if n_rej > 0 { (Some(pct(rej_base, n_rej)), Some(pct(rej_gwin, n_rej))) } else { (None, None) };
            let err_base = 100.0 - overall_acc_baseline;
            let err_gwin = 100.0 - overall_acc_gwin;
            Ok(RunMetrics {
                run,
                seed,
                tau,
                n_test: n,
                n_rejected: n_rej,
                pct_reject: pct(n_rej, n),
                bnn_acc_rejected: bnn,
                bnn_gwin_acc_rejected: gwin,
                rejected_acc_delta: bnn.zip(gwin).map(|(b, g)| g - b),
                overall_acc_baseline,
                overall_acc_gwin,
                overall_acc_delta: overall_acc_gwin - overall_acc_baseline,
                pct_error_delta: (base_correct < n).then(|| 100.0 * (err_gwin - err_base) / err_base),
            })
        })
        .collect()
}

/// Fixed-checkpoint sweep: one run per seed, re-seeding classifier sampling
/// and generator noise.
pub fn evaluate_sweep<C, G>(
    clf: &C,
    generator: &G,
    test: &LabeledImageSet,
    taus: &[f32],
    mc_samples: usize,
    seeds: &[u64],
) -> Result<(Vec<ThresholdRow>, Vec<RunMetrics>)>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    if seeds.is_empty() {
        return Err(GwinError::InvalidConfig("at least one run is required".into()));
    }
    let mut runs = Vec::new();
    for (r, &seed) in seeds.iter().enumerate() {
        log::info!("evaluation run {} of {} (seed {seed})", r + 1, seeds.len());
        runs.extend(run_metrics(clf, generator, test, taus, mc_samples, seed, r)?);
    }
    Ok((aggregate_rows(taus, &runs), runs))
}

/// Groups run metrics by threshold, in the order of `taus`.
pub fn aggregate_rows(taus: &[f32], runs: &[RunMetrics]) -> Vec<ThresholdRow> {
    taus.iter()
        .map(|&tau| {
            let at: Vec<&RunMetrics> = runs.iter().filter(|r| r.tau == tau).collect();
            let col = |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Option<MeanStd> {
                MeanStd::of(&at.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let zero = MeanStd { mean: 0.0, std: 0.0 };
            ThresholdRow {
                tau,
                pct_reject: col(&|r| Some(r.pct_reject)).unwrap_or(zero),
                bnn_acc_rejected: col(&|r| r.bnn_acc_rejected),
                bnn_gwin_acc_rejected: col(&|r| r.bnn_gwin_acc_rejected),
                rejected_acc_delta: col(&|r| r.rejected_acc_delta),
                overall_acc_delta: col(&|r| Some(r.overall_acc_delta)).unwrap_or(zero),
                pct_error_delta: col(&|r| r.pct_error_delta),
                n_runs: at.len(),
                n_runs_with_rejections: at.iter().filter(|r| r.n_rejected > 0).count(),
            }
        })
        .collect()
}

const COLUMNS: [&str; 7] = [
    "tau",
    "% reject",
    "BNN acc (rejected)",
    "BNN+GWIN acc (rejected)",
    "rejected acc delta",
    "overall acc delta",
    "% error delta",
];

fn cell(v: Option<MeanStd>) -> String {
    match v {
        Some(m) => format!("{:.2} ± {:.2}", m.mean, m.std),
        None => "-".into(),
    }
}

fn row_cells(r: &ThresholdRow) -> [String; 7] {
    [
        format!("{:.2}", r.tau),
        cell(Some(r.pct_reject)),
        cell(r.bnn_acc_rejected),
        cell(r.bnn_gwin_acc_rejected),
        cell(r.rejected_acc_delta),
        cell(Some(r.overall_acc_delta)),
        cell(r.pct_error_delta),
    ]
}

/// Fixed-width text table.
pub fn render_table(rows: &[ThresholdRow]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(row_cells).collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| body.iter().map(|r| r[c].chars().count()).chain([COLUMNS[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", padded.join(" | "));
    };
    line(&COLUMNS.map(String::from), &mut out);
    let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    for r in &body {
        line(r, &mut out);
    }
    out
}

/// CSV with separate mean and std columns; empty cells for missing values.
pub fn render_csv(rows: &[ThresholdRow]) -> String {
    let mut out = String::from(
        "tau,pct_reject,pct_reject_std,bnn_acc_rejected,bnn_acc_rejected_std,\
         bnn_gwin_acc_rejected,bnn_gwin_acc_rejected_std,rejected_acc_delta,rejected_acc_delta_std,\
         overall_acc_delta,overall_acc_delta_std,pct_error_delta,pct_error_delta_std,n_runs\n",
    );
    let pair = |v: Option<MeanStd>| match v {
        Some(m) => format!("{},{}", m.mean, m.std),
        None => ",".into(),
    };
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.tau,
            pair(Some(r.pct_reject)),
            pair(r.bnn_acc_rejected),
            pair(r.bnn_gwin_acc_rejected),
            pair(r.rejected_acc_delta),
            pair(Some(r.overall_acc_delta)),
            pair(r.pct_error_delta),
            r.n_runs
        );
    }
    out
}

/// Linear interpolation between order statistics: position `p * (n - 1)`
/// in the sorted list.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty list");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot summary with whiskers at the most extreme values inside
/// `[q1 - 1.5 IQR, q3 + 1.5 IQR]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || v.iter().copied().filter(|&x| x >= lo && x <= hi);
        Some(Self {
            n: v.len(),
            q1,
            median,
            q3,
            whisker_low: inside().next().unwrap_or(q1),
            whisker_high: inside().next_back().unwrap_or(q3),
            outliers: v.iter().copied().filter(|&x| x < lo || x > hi).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertaintyDeltaStats {
    pub tau: f32,
    pub seed: u64,
    pub stats: BoxStats,
    /// Share of rejected examples whose ground-truth certainty went up.
    pub fraction_increased: f64,
    pub deltas: Vec<f64>,
}

/// Change in the ground-truth class certainty caused by the transformation,
/// over the examples rejected at `tau`.
pub fn certainty_delta<C, G>(
    clf: &C,
    generator: &G,
    test: &LabeledImageSet,
    tau: f32,
    mc_samples: usize,
    seed: u64,
) -> Result<CertaintyDeltaStats>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    certainty_deltas(clf, generator, test, &[tau], mc_samples, seed)?.pop().ok_or(GwinError::EmptyRejectedSubset(tau))
}

/// [`certainty_delta`] for several thresholds from one classification pass and
/// one transformation of the examples rejected at the largest threshold.
/// Thresholds that reject nothing are left out.
pub fn certainty_deltas<C, G>(
    clf: &C,
    generator: &G,
    test: &LabeledImageSet,
    taus: &[f32],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<CertaintyDeltaStats>>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    check_taus(taus)?;
    let mut cfg = InferenceConfig::new(0.0, mc_samples, seed);
    cfg.certainty = cfg.certainty.retaining_draws();
    let metric = cfg.certainty.metric;
    let keys = index_keys(test.len());
    let initial = predict_with_certainty_keyed(clf, &test.images, &cfg.classifier_certainty(), &keys)?;
    let tau_max = taus.iter().copied().fold(0.0f32, f32::max);
    let mut candidates = Vec::new();
    for (i, p) in initial.iter().enumerate() {
        if !reject(p.certainty, p.label, tau_max)?.is_accepted() {
            candidates.push(i);
        }
    }
    let post = transform_and_relabel(clf, generator, &test.images, &keys, &candidates, &cfg)?;
    let mut out = Vec::new();
    for &tau in taus {
        let mut deltas = Vec::new();
        for (&i, after) in candidates.iter().zip(&post) {
            if reject(initial[i].certainty, initial[i].label, tau)?.is_accepted() {
                continue;
            }
            let y = test.labels[i] as usize;
            let before = initial[i].class_certainty(y, metric).expect("draws retained");
            deltas.push((after.class_certainty(y, metric).expect("draws retained") - before) as f64);
        }
        let Some(stats) = BoxStats::from_values(&deltas) else { continue };
        out.push(CertaintyDeltaStats {
            tau,
            seed,
            fraction_increased: deltas.iter().filter(|&&d| d > 0.0).count() as f64 / deltas.len() as f64,
            stats,
            deltas,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[7.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn five_value_box() {
        let s = BoxStats::from_values(&[0.9, -0.2, 0.3, 0.0, 0.1]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (0.0, 0.1, 0.3));
        assert_eq!((s.whisker_low, s.whisker_high), (-0.2, 0.3));
        assert_eq!(s.outliers, vec![0.9]);
    }
}
