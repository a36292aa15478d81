//! Markdown summaries of sweep and cost results.

use std::fmt::Write;

use super::cost::CostSummary;
use super::sweep::SweepReport;

pub fn sweep_markdown(r: &SweepReport) -> String {
    let mut out = format!("## {} sweep (n_iter = {}, seed = {})\n\n", r.axis.label(), r.n_iter, r.seed);
    out.push_str("| value |");
    for s in &r.series {
        write!(out, " {} |", s.model).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(r.series.len()));
    out.push('\n');
    let n = r.series.first().map_or(0, |s| s.points.len());
    for p in 0..n {
        write!(out, "| {} |", r.series[0].points[p].label).unwrap();
        for s in &r.series {
            let pt = &s.points[p];
            write!(out, " {:.3} ± {:.3} |", pt.mean_acc, pt.std_acc).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn cost_markdown(c: &CostSummary) -> String {
    let r = &c.report;
    let b = &r.breakdown;
    let mut out = format!(
        "## Cost per decision ({} on {}, n_iter = {})\n\n| component | latency (ns) | energy (nJ) |\n|---|---|---|\n",
        r.kind, r.strategy, r.n_iter
    );
    for (name, p) in [("search", b.search), ("grng", b.grng), ("program", b.program), ("peripheral", b.peripheral)] {
        writeln!(out, "| {name} | {:.4e} | {:.4e} |", p.latency_ns, p.energy_nj).unwrap();
    }
    writeln!(
        out,
        "| **total** | {:.4e} | {:.4e} |\n\nwrites per decision: {}\n\n| baseline | speedup | energy ratio |\n|---|---|---|",
        r.latency_ns_per_decision, r.energy_nj_per_decision, r.write_count
    )
    .unwrap();
    for cmp in &c.comparisons {
        writeln!(out, "| {} | {:.3e} | {:.3e} |", cmp.baseline.label(), cmp.speedup, cmp.energy_ratio).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::cost::{estimate_cost, CostModel};
    use crate::experiments::sweep::{Axis, Series, SweepPoint};
    use crate::mapping::{map_node_wise, tests::depth2};
    use crate::tree::TreeKind;

    #[test]
    fn sweep_table_has_one_row_per_point() {
        let pt = |v: f64| SweepPoint {
            value: Some(v),
            label: v.to_string(),
            mean_acc: 0.5,
            std_acc: 0.01,
            trials: 2,
            accuracies: vec![0.49, 0.51],
        };
        let r = SweepReport {
            axis: Axis::InputNoise,
            n_iter: 10,
            seed: 1,
            series: vec![
                Series { model: "DT-2".into(), points: vec![pt(0.0), pt(0.1)] },
                Series { model: "BDT-2".into(), points: vec![pt(0.0), pt(0.1)] },
            ],
        };
        let md = sweep_markdown(&r);
        assert!(md.contains("| value | DT-2 | BDT-2 |"));
        assert_eq!(md.lines().filter(|l| l.starts_with("| 0")).count(), 2);
    }

    #[test]
    fn cost_table_lists_baselines() {
        let a = map_node_wise(&depth2()).unwrap();
        let c = CostSummary::new(estimate_cost(&a, TreeKind::Bdt, 100, &CostModel::default()).unwrap());
        let md = cost_markdown(&c);
        assert!(md.contains("CPU_BDT") && md.contains("GPU_BDT") && md.contains("**total**"));
    }
}
