//! Human-readable tables and summaries.

use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::Result;
use serde_json::json;

use quantmcu::bits::Bitwidth;
use quantmcu::netgraph::{mac_count, LayerKind, NetworkSpec, PatchSplit};
use quantmcu::pipeline::{Fidelity, QuantPlan, SimulationReport, SweepResult, Totals};
use quantmcu::vdpc::PatchLabel;

fn layer_label(net: &NetworkSpec, l: usize) -> String {
    let layer = &net.layers[l];
    match layer.kind {
        LayerKind::Fc => "fc".to_string(),
        kind => format!("{kind} k{} s{} p{}", layer.kernel, layer.stride, layer.padding),
    }
}

pub fn inspect_table(net: &NetworkSpec, split: &PatchSplit) -> Result<String> {
    let macs = mac_count(net, &split.shapes)?;
    let s = net.patch_depth;
    let mut out = String::new();
    writeln!(
        out,
        "network {}: input {}, grid {}x{}, patch depth {}",
        net.name, net.input_shape, net.patch_grid.0, net.patch_grid.1, s
    )?;
    writeln!(out, "{:>4}  {:<24} {:>12} {:>12}", "map", "produced by", "shape", "MACs")?;
    for (j, shape) in split.shapes.iter().enumerate() {
        let (label, m) = if j == 0 {
            ("input".to_string(), "-".to_string())
        } else {
            (layer_label(net, j - 1), macs[j - 1].to_string())
        };
        let stage = if j <= s { "*" } else { " " };
        writeln!(out, "{j:>3}{stage}  {label:<24} {:>12} {m:>12}", shape.to_string())?;
    }
    writeln!(out, "total MACs {}  (* = patch stage)", macs.iter().sum::<u64>())?;
    writeln!(out, "branches (region per map 0..={s}):")?;
    for b in &split.branches {
        let regions: Vec<String> = b.regions.iter().map(|r| r.to_string()).collect();
        writeln!(out, "  {}  {}", b.label(), regions.join(" "))?;
    }
    writeln!(out, "redundant elements per map: {:?}", split.overlap_per_depth)?;
    writeln!(out, "redundancy ratio {:.4}", split.redundancy_ratio())?;
    Ok(out)
}

pub fn inspect_json(net: &NetworkSpec, split: &PatchSplit) -> Result<String> {
    let macs = mac_count(net, &split.shapes)?;
    let v = json!({
        "network": net.name,
        "shapes": split.shapes,
        "macs": macs,
        "branches": split.branches,
        "overlap_per_depth": split.overlap_per_depth,
        "redundancy_ratio": split.redundancy_ratio(),
    });
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn factor(base: f64, value: f64) -> String {
    if value > 0.0 {
        format!("{:.2}x", base / value)
    } else {
        "n/a".to_string()
    }
}

fn fidelity_line(f: &Fidelity) -> String {
    let sqnr = f.sqnr_db.map_or("n/a".to_string(), |v| format!("{v:.2} dB"));
    match f.agreement {
        Some(a) => format!("SQNR {sqnr}, top-1 agreement {:.1}%", 100.0 * a),
        None => format!("SQNR {sqnr}"),
    }
}

fn totals_lines(out: &mut String, t: &Totals) {
    let _ = writeln!(
        out,
        "BitOPs: plan {:.4e}, patch-based 8-bit {:.4e} ({} reduction), layer-based 8-bit {:.4e} ({})",
        t.bitops_plan,
        t.bitops_patch8,
        factor(t.bitops_patch8, t.bitops_plan),
        t.bitops_layer_based,
        factor(t.bitops_layer_based, t.bitops_plan),
    );
    let _ = writeln!(
        out,
        "peak memory: plan {} B, patch-based 8-bit {} B ({} reduction)",
        t.peak_mem_plan,
        t.peak_mem_patch8,
        factor(t.peak_mem_patch8 as f64, t.peak_mem_plan as f64),
    );
}

pub fn plan_summary(plan: &QuantPlan) -> String {
    let mut out = String::new();
    let outliers = plan.branches.iter().filter(|b| b.class == PatchLabel::OutlierClass).count();
    let _ = writeln!(
        out,
        "network {}: {} branches, {} outlier-class, {} non-outlier-class",
        plan.network,
        plan.branches.len(),
        outliers,
        plan.branches.len() - outliers
    );
    for b in &plan.branches {
        let bits: Vec<String> = b.bits.iter().map(|x| x.to_string()).collect();
        let class = match b.class {
            PatchLabel::OutlierClass => "outlier",
            PatchLabel::NonOutlierClass => "non-outlier",
        };
        let _ = writeln!(out, "  ({},{}) {class:<12} bits [{}]", b.patch_id.0, b.patch_id.1, bits.join(","));
    }
    let post: Vec<String> = plan.post_stage_bits.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(out, "  post-stage         bits [{}]", post.join(","));

    let mut hist: BTreeMap<Bitwidth, usize> = BTreeMap::new();
    for &b in plan.branches.iter().flat_map(|b| &b.bits).chain(&plan.post_stage_bits) {
        *hist.entry(b).or_default() += 1;
    }
    let n: usize = hist.values().sum();
    let parts: Vec<String> = hist
        .iter()
        .rev()
        .map(|(b, c)| format!("{b}-bit {c} ({:.1}%)", 100.0 * *c as f64 / n.max(1) as f64))
        .collect();
    let _ = writeln!(out, "bitwidth histogram: {}", parts.join(", "));
    totals_lines(&mut out, &plan.totals);
    let _ = writeln!(out, "input redundancy ratio {:.4}", plan.totals.redundancy_ratio);
    let _ = writeln!(out, "fidelity: {}", fidelity_line(&plan.fidelity));
    if let Some(d) = &plan.dynamic {
        let _ = writeln!(
            out,
            "dynamic: outlier fraction {:.3}, mean BitOPs {:.4e} ({}), mean peak {:.0} B, {}",
            d.outlier_fraction,
            d.mean_bitops_plan,
            factor(plan.totals.bitops_patch8, d.mean_bitops_plan),
            d.mean_peak_mem_plan,
            fidelity_line(&d.fidelity)
        );
    }
    out
}

pub fn simulation_summary(r: &SimulationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "network {}: {} inputs", r.network, r.samples);
    totals_lines(&mut out, &r.totals);
    let _ = writeln!(out, "fidelity: {}", fidelity_line(&r.fidelity));
    if let Some(d) = &r.dynamic {
        let _ = writeln!(
            out,
            "dynamic: outlier fraction {:.3}, mean BitOPs {:.4e}, mean peak {:.0} B, {}",
            d.outlier_fraction,
            d.mean_bitops_plan,
            d.mean_peak_mem_plan,
            fidelity_line(&d.fidelity)
        );
    }
    out
}

pub fn sweep_table(r: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>12} {:>9} {:>10} {:>9} {:>10} {:>9}",
        r.param.name(),
        "BitOPs",
        "vs 8-bit",
        "peak B",
        "outliers",
        "SQNR dB",
        "top-1"
    );
    for row in &r.rows {
        if let Some(e) = &row.error {
            let _ = writeln!(out, "{:>8.3} {e}", row.value);
            continue;
        }
        let opt = |v: Option<f64>, prec: usize| v.map_or("n/a".to_string(), |x| format!("{x:.prec$}"));
        let _ = writeln!(
            out,
            "{:>8.3} {:>12.4e} {:>9} {:>10} {:>9} {:>10} {:>9}",
            row.value,
            row.bitops_plan.unwrap_or(f64::NAN),
            row.bitops_plan.map_or("n/a".to_string(), |b| factor(r.bitops_patch8, b)),
            row.peak_mem_plan.map_or("n/a".to_string(), |p| p.to_string()),
            opt(row.outlier_fraction, 3),
            opt(row.sqnr_db, 2),
            opt(row.agreement, 3),
        );
    }
    out
}
