//! Error metrics between two sampled fields and CSV output.

use std::io::Write;

use serde::Serialize;

use crate::error::{ensure, Result};
use crate::reconstruction::ReconImage;
use crate::verification::CheckReport;

/// Radius `|A^{-1} x|` below which the core region is taken.
pub const CORE_RADIUS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Over the grid mask (nodes with complete stencils inside the ellipsoid).
    pub rel_l2: f64,
    pub rel_linf: f64,
    /// Over every node defined in both fields.
    pub rel_l2_full: f64,
    pub rel_linf_full: f64,
    /// Over mask nodes with `|A^{-1} x| < CORE_RADIUS`; NaN without geometry.
    pub rel_l2_core: f64,
    pub nodes: usize,
}

#[derive(Default)]
struct Acc {
    diff_sq: f64,
    ref_sq: f64,
    diff_max: f64,
    ref_max: f64,
    count: usize,
}

impl Acc {
    fn add(&mut self, reference: f64, candidate: f64) {
        let d = candidate - reference;
        self.diff_sq += d * d;
        self.ref_sq += reference * reference;
        self.diff_max = self.diff_max.max(d.abs());
        self.ref_max = self.ref_max.max(reference.abs());
        self.count += 1;
    }

    fn ratio(num: f64, den: f64) -> f64 {
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    fn rel_l2(&self) -> f64 {
        Self::ratio(self.diff_sq.sqrt(), self.ref_sq.sqrt())
    }

    fn rel_linf(&self) -> f64 {
        Self::ratio(self.diff_max, self.ref_max)
    }
}

/// Relative errors of `candidate` against `reference`. Both images must
/// share the grid layout; the mask is taken from `reference`.
pub fn compare(
    reference: &ReconImage,
    candidate: &ReconImage,
    normalized_radius: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<Metrics> {
    let grid = &reference.grid;
    ensure!(
        grid.counts() == candidate.grid.counts()
            && grid.origin() == candidate.grid.origin()
            && grid.spacing() == candidate.grid.spacing(),
        Domain,
        "volumes have different grid layouts"
    );
    let (mut masked, mut full, mut core) = (Acc::default(), Acc::default(), Acc::default());
    let mut x = vec![0.0; grid.dim()];
    for i in 0..grid.len() {
        if !(reference.defined[i] && candidate.defined[i]) {
            continue;
        }
        let (r, c) = (reference.values[i], candidate.values[i]);
        full.add(r, c);
        if grid.mask()[i] {
            masked.add(r, c);
            if let Some(radius) = normalized_radius {
                grid.write_point(i, &mut x);
                if radius(&x) < CORE_RADIUS {
                    core.add(r, c);
                }
            }
        }
    }
    Ok(Metrics {
        rel_l2: masked.rel_l2(),
        rel_linf: masked.rel_linf(),
        rel_l2_full: full.rel_l2(),
        rel_linf_full: full.rel_linf(),
        rel_l2_core: if normalized_radius.is_some() {
            core.rel_l2()
        } else {
            f64::NAN
        },
        nodes: masked.count,
    })
}

/// `metric,value` rows.
pub fn write_metrics_csv<W: Write>(metrics: &Metrics, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    let rows = [
        ("rel_l2", metrics.rel_l2),
        ("rel_linf", metrics.rel_linf),
        ("rel_l2_full", metrics.rel_l2_full),
        ("rel_linf_full", metrics.rel_linf_full),
        ("rel_l2_core", metrics.rel_l2_core),
        ("nodes", metrics.nodes as f64),
    ];
    for (k, v) in rows {
        w.write_record([k.to_string(), format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// `name,params,error,tolerance,pass` rows.
pub fn write_reports_csv<W: Write>(reports: &[CheckReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "params", "error", "tolerance", "pass"])?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.params_string(),
            format!("{:?}", r.error),
            format!("{:?}", r.tolerance),
            r.passed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
