//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use quantmcu::actstats::{histogram_entropy, GaussianFit, OutlierModel, OutlierRule, QuantRange};
use quantmcu::bits::Bitwidth;
use quantmcu::netgraph::{
    receptive_region, split_patches, FeatureMapShape, LayerSpec, MemoryModel, NetworkSpec, Region,
};
use quantmcu::pipeline::{sweep, Calibrated, PlanConfig, QuantPlan, SweepParam};
use quantmcu::refengine::{forward_fp, forward_patched, CalibrationSet, Tensor, WeightSet};
use quantmcu::synth::{reference_net, scenes, uniform_inputs, SceneConfig};
use quantmcu::vdpc::{classify_all, PatchLabel};
use quantmcu::vdqs::search_bitwidths;

const RF_NETS: usize = 200;
const RF_LIMIT: Duration = Duration::from_secs(30);
const ENTROPY_POOLS: usize = 100;
const ENTROPY_TOL: f64 = 1e-12;
const SEARCH_CASES: usize = 300;
const SEARCH_LIMIT: Duration = Duration::from_secs(60);
const REF_LIMIT: Duration = Duration::from_secs(60);
const BITOPS_RATIO_MAX: f64 = 0.75;
const PEAK_RATIO_MAX: f64 = 0.9;
const SQNR_SLACK_DB: f64 = 0.5;
const STITCH_INPUTS: usize = 20;
const REF_SEED: u64 = 42;
const REF_SAMPLES: usize = 32;
const LAMBDA_GRID: [f64; 7] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
const PHI_GRID: [f64; 6] = [0.0, 0.3, 0.6, 0.9, 0.96, 0.99];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn reference_ctx() -> Calibrated {
    let net = reference_net();
    let weights = WeightSet::synthetic(&net, REF_SEED).unwrap();
    let cal = scenes(net.input_shape, REF_SAMPLES, REF_SEED, SceneConfig::default());
    Calibrated::new(net, weights, cal, true, Some(REF_SEED)).unwrap()
}

fn random_layer(rng: &mut ChaCha8Rng) -> LayerSpec {
    let k = rng.random_range(1..=4);
    let s = rng.random_range(1..=3);
    let p = rng.random_range(0..k.min(3));
    match rng.random_range(0..4) {
        0 => LayerSpec::conv(k, s, p, rng.random_range(1..=3)),
        1 => LayerSpec::depthwise(k, s, p),
        2 => LayerSpec::maxpool(k, s, p),
        _ => LayerSpec::avgpool(k, s, p),
    }
}

/// A valid net of 1..=4 spatial layers with a random grid and split depth.
fn random_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    loop {
        let input = FeatureMapShape::new(rng.random_range(6..=20), rng.random_range(6..=20), rng.random_range(1..=2));
        let layers: Vec<LayerSpec> = (0..rng.random_range(1..=4)).map(|_| random_layer(rng)).collect();
        let mut net = NetworkSpec {
            name: "random".into(),
            input_shape: input,
            layers,
            patch_grid: (1, 1),
            patch_depth: 0,
        };
        if net.validate().is_err() {
            continue;
        }
        let shapes = oracle_shapes(&net);
        net.patch_depth = rng.random_range(0..=net.layers.len());
        let (h, w, _) = shapes[net.patch_depth];
        net.patch_grid = (rng.random_range(1..=3.min(h)), rng.random_range(1..=3.min(w)));
        if net.validate().is_ok() {
            return net;
        }
    }
}

fn to_box(r: Region) -> Boxed {
    (r.row_start, r.row_end, r.col_start, r.col_end)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    for case in 0..RF_NETS {
        let net = random_net(&mut rng);
        let shapes = oracle_shapes(&net);
        // receptive_region on a random box at a random depth
        let depth = rng.random_range(0..=net.layers.len());
        let (h, w, _) = shapes[depth];
        let r0 = rng.random_range(0..h);
        let r1 = rng.random_range(r0 + 1..=h);
        let c0 = rng.random_range(0..w);
        let c1 = rng.random_range(c0 + 1..=w);
        let got = receptive_region(&net, depth, Region::new(r0, r1, c0, c1)).unwrap();
        let want = marked_boxes(&net, depth, (r0, r1, c0, c1))[0];
        if to_box(got) != want {
            mismatches.push(format!("net {case}: receptive {:?} vs {:?}", to_box(got), want));
        }
        // split_patches regions and overlap
        let split = split_patches(&net, false).unwrap();
        let s = net.patch_depth;
        let (sh, sw, _) = shapes[s];
        let tiles = oracle_tiles(sh, sw, net.patch_grid.0, net.patch_grid.1);
        let per_tile: Vec<Vec<Boxed>> = tiles.iter().map(|&t| marked_boxes(&net, s, t)).collect();
        if split.branches.len() != tiles.len() {
            mismatches.push(format!("net {case}: {} branches vs {}", split.branches.len(), tiles.len()));
            continue;
        }
        for (b, boxes) in split.branches.iter().zip(&per_tile) {
            let got: Vec<Boxed> = b.regions.iter().map(|r| to_box(*r)).collect();
            if &got != boxes {
                mismatches.push(format!("net {case}: branch {:?} regions differ", b.patch_id));
            }
        }
        for d in 0..=s {
            let (h, w, c) = shapes[d];
            let boxes: Vec<Boxed> = per_tile.iter().map(|bx| bx[d]).collect();
            let total: usize = boxes.iter().map(|b| (b.1 - b.0) * (b.3 - b.2)).sum();
            let overlap = ((total - union_count(&boxes, h, w)) * c) as u64;
            if split.overlap_per_depth[d] != overlap {
                mismatches.push(format!("net {case}: overlap at depth {d} {} vs {overlap}", split.overlap_per_depth[d]));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches.is_empty() && elapsed < RF_LIMIT,
        format!(
            "{RF_NETS} random nets, {} mismatches{}, {:.2}s (limit {}s)",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default(),
            elapsed.as_secs_f64(),
            RF_LIMIT.as_secs()
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..ENTROPY_POOLS {
        let n = rng.random_range(1..2000);
        let k = rng.random_range(1..=300);
        let lo = rng.random_range(-5.0..0.0);
        let hi = lo + rng.random_range(0.1..10.0);
        // include values outside the range to exercise edge bins
        let pool: Vec<f32> = (0..n).map(|_| rng.random_range(lo - 1.0..hi + 1.0) as f32).collect();
        let range = QuantRange::new(lo, hi).unwrap();
        let got = histogram_entropy(&pool, k, range).unwrap().entropy_bits;
        worst = worst.max((got - entropy_direct(&pool, k, lo, hi)).abs());
    }
    let range = QuantRange::new(0.0, 1.0).unwrap();
    let constant = histogram_entropy(&[0.25f32; 57], 256, range).unwrap().entropy_bits;
    let mut exact_max = true;
    for k in [2usize, 4, 16, 64, 256] {
        let centers: Vec<f32> = (0..k).map(|j| ((j as f64 + 0.5) / k as f64) as f32).collect();
        let h = histogram_entropy(&centers, k, range).unwrap().entropy_bits;
        exact_max &= h == (k as f64).log2();
    }
    verdict(
        worst <= ENTROPY_TOL && constant == 0.0 && exact_max,
        format!(
            "{ENTROPY_POOLS} pools, max |dH| = {worst:.3e} (tol {ENTROPY_TOL:e}); H(constant) = {constant}; H(uniform) == log2 k exactly: {exact_max}"
        ),
    )
}

fn criterion_3(ctx: &Calibrated) -> Verdict {
    let mut cells = 0usize;
    let mut bad = 0usize;
    for lambda in [0.0, 1.0] {
        let mut cfg = PlanConfig::default();
        cfg.search.lambda = lambda;
        let plan = ctx.plan(&cfg).unwrap();
        let tables = plan
            .branches
            .iter()
            .filter_map(|b| b.score_table.as_ref())
            .chain(plan.post_stage.score_table.as_ref());
        for t in tables {
            for c in t.maps.iter().flat_map(|m| &m.cells) {
                cells += 1;
                let want = if lambda == 0.0 { c.phi } else { -c.omega };
                if c.score != want {
                    bad += 1;
                }
            }
        }
    }
    verdict(
        bad == 0 && cells > 0,
        format!("{cells} cells checked at lambda 0 and 1, {bad} not exactly equal"),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cands = [Bitwidth::Eight, Bitwidth::Four, Bitwidth::Two];
    let mut problems = Vec::new();
    let mut infeasible = 0usize;
    for case in 0..SEARCH_CASES {
        let maps = rng.random_range(1..=5);
        let elements: Vec<u64> = (0..maps).map(|_| rng.random_range(1..=2000)).collect();
        let rankings: Vec<Vec<Bitwidth>> = (0..maps)
            .map(|_| {
                let mut r = cands.to_vec();
                for i in (1..r.len()).rev() {
                    r.swap(i, rng.random_range(0..=i));
                }
                r
            })
            .collect();
        let max_pair = elements.windows(2).map(|w| w[0] + w[1]).max().unwrap_or(elements[0]);
        let limit = rng.random_range(0..=max_pair + max_pair / 4);
        let feasible = exhaustive_feasible(&elements, &[8, 4, 2], limit);
        match search_bitwidths(&rankings, &elements, MemoryModel::limited(limit)) {
            Ok(out) => {
                let bits: Vec<u32> = out.bits.iter().map(|b| b.bits()).collect();
                let ok = (0..maps - 1)
                    .all(|i| bytes_of(elements[i], bits[i]) + bytes_of(elements[i + 1], bits[i + 1]) <= limit);
                if !ok {
                    problems.push(format!("case {case}: result violates the limit"));
                }
                if !feasible && maps > 1 {
                    problems.push(format!("case {case}: oracle says infeasible"));
                }
                if out.demotions > maps * (cands.len() - 1) {
                    problems.push(format!("case {case}: {} demotions", out.demotions));
                }
            }
            Err(quantmcu::Error::Infeasible { .. }) => {
                infeasible += 1;
                if feasible {
                    problems.push(format!("case {case}: infeasible but oracle found an assignment"));
                }
            }
            Err(e) => problems.push(format!("case {case}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    verdict(
        problems.is_empty() && elapsed < SEARCH_LIMIT,
        format!(
            "{SEARCH_CASES} branches ({infeasible} infeasible), {} problems{}, {:.2}s (limit {}s)",
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default(),
            elapsed.as_secs_f64(),
            SEARCH_LIMIT.as_secs()
        ),
    )
}

/// 12x12 single-channel input, 2x2 grid over one 3x3 conv: branch regions
/// overlap by one pixel, so spikes go to pixels only one branch reads.
fn crafted_case() -> (NetworkSpec, CalibrationSet, Vec<(usize, usize)>) {
    let net = NetworkSpec {
        name: "crafted".into(),
        input_shape: FeatureMapShape::new(12, 12, 1),
        layers: vec![LayerSpec::conv(3, 1, 1, 2).relu(), LayerSpec::avgpool(12, 12, 0), LayerSpec::fc(3)],
        patch_grid: (2, 2),
        patch_depth: 1,
    };
    let intended = vec![(0, 1), (1, 1)];
    let samples = (0..4)
        .map(|n| {
            // background alternates +-1, well inside the threshold
            let mut data: Vec<f32> = (0..144).map(|i| if (i + n) % 2 == 0 { 1.0 } else { -1.0 }).collect();
            // sigma is about 1.7, so 12 lies beyond 2.54 sigma at phi = 0.96
            data[2 * 12 + 10] = 12.0; // row 2, col 10 -> only branch (0,1)
            data[9 * 12 + 9] = -12.0; // row 9, col 9 -> only branch (1,1)
            Tensor::new(vec![12, 12, 1], data).unwrap()
        })
        .collect();
    (net, CalibrationSet::new(samples), intended)
}

fn criterion_5() -> Verdict {
    let (net, cal, intended) = crafted_case();
    let phi = 0.96;
    let weights = WeightSet::synthetic(&net, 5).unwrap();
    let ctx = Calibrated::new(net.clone(), weights, cal.clone(), true, Some(5)).unwrap();
    let (mean, std) = mean_std(&cal.samples.iter().flat_map(|s| s.data().to_vec()).collect::<Vec<_>>());
    let om = OutlierModel::new(
        GaussianFit {
            mu: ctx.fit.mu,
            sigma: ctx.fit.sigma,
            sample_count: ctx.fit.sample_count,
        },
        phi,
        OutlierRule::NormalizedDensity,
    )
    .unwrap();
    let classes = classify_all(&ctx.split, &ctx.pools, &om).unwrap();

    // brute force: every value of every branch's input box, every sample
    let tiles = oracle_tiles(12, 12, 2, 2);
    let mut brute = Vec::new();
    for (t, tile) in tiles.iter().enumerate() {
        let region = marked_boxes(&net, 1, *tile)[0];
        let hits = cal
            .samples
            .iter()
            .filter(|s| {
                (region.0..region.1)
                    .flat_map(|r| (region.2..region.3).map(move |c| (r, c)))
                    .any(|(r, c)| is_tail_value(s.data()[r * 12 + c] as f64, mean, std, phi))
            })
            .count();
        if 2 * hits >= cal.len() && hits > 0 {
            brute.push((t / 2, t % 2));
        }
    }
    let got: Vec<(usize, usize)> = classes
        .classes
        .iter()
        .filter(|c| c.label == PatchLabel::OutlierClass)
        .map(|c| c.patch_id)
        .collect();

    let plan = ctx.plan(&PlanConfig { phi, ..Default::default() }).unwrap();
    let reloaded = QuantPlan::from_json(&plan.to_json().unwrap()).unwrap();
    let fixed_ok = reloaded
        .branches
        .iter()
        .filter(|b| b.class == PatchLabel::OutlierClass)
        .all(|b| b.bits.iter().all(|&x| x == Bitwidth::Eight));
    let plan_outliers: Vec<(usize, usize)> = reloaded
        .branches
        .iter()
        .filter(|b| b.class == PatchLabel::OutlierClass)
        .map(|b| b.patch_id)
        .collect();
    verdict(
        got == intended && brute == intended && plan_outliers == intended && fixed_ok,
        format!(
            "outlier-class {got:?}, brute force {brute:?}, intended {intended:?}; outlier branches all-8 in plan: {fixed_ok}"
        ),
    )
}

fn criterion_6(ctx: &Calibrated, build_time: Duration) -> Verdict {
    let start = Instant::now();
    let plan = ctx.plan(&PlanConfig::default()).unwrap();
    let elapsed = build_time + start.elapsed();
    let t = &plan.totals;
    let (rb, rm) = (t.bitops_ratio(), t.peak_mem_ratio());
    verdict(
        rb <= BITOPS_RATIO_MAX && rm <= PEAK_RATIO_MAX && elapsed < REF_LIMIT,
        format!(
            "BitOPs plan/patch8 = {rb:.4} (max {BITOPS_RATIO_MAX}, {:.2}x reduction), peak mem plan/patch8 = {rm:.4} (max {PEAK_RATIO_MAX}), {:.2}s (limit {}s)",
            1.0 / rb,
            elapsed.as_secs_f64(),
            REF_LIMIT.as_secs()
        ),
    )
}

fn criterion_7(ctx: &Calibrated) -> Verdict {
    let r = sweep(ctx, SweepParam::Lambda, &LAMBDA_GRID, &PlanConfig::default()).unwrap();
    let bitops: Vec<f64> = r.rows.iter().map(|row| row.bitops_plan.unwrap()).collect();
    let sqnr: Vec<f64> = r.rows.iter().map(|row| row.sqnr_db.unwrap()).collect();
    let bitops_ok = bitops.windows(2).all(|w| w[1] >= w[0]);
    let sqnr_ok = sqnr.windows(2).all(|w| w[1] >= w[0] - SQNR_SLACK_DB);
    verdict(
        bitops_ok && sqnr_ok,
        format!(
            "lambda {LAMBDA_GRID:?}: BitOPs (M) {:?}, SQNR dB {:?} (slack {SQNR_SLACK_DB})",
            bitops.iter().map(|b| (b / 1e6 * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            sqnr.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

fn criterion_8(ctx: &Calibrated) -> Verdict {
    let r = sweep(ctx, SweepParam::Phi, &PHI_GRID, &PlanConfig::default()).unwrap();
    let frac: Vec<f64> = r.rows.iter().map(|row| row.outlier_fraction.unwrap()).collect();
    let sqnr: Vec<f64> = r.rows.iter().map(|row| row.sqnr_db.unwrap()).collect();
    let frac_ok = frac.windows(2).all(|w| w[1] <= w[0]);
    // knee: first grid value whose outlier fraction falls below the phi = 0 value
    let knee = frac.iter().position(|&f| f < frac[0]).unwrap_or(frac.len() - 1);
    let sqnr_ok = sqnr[knee..].windows(2).all(|w| w[1] <= w[0] + SQNR_SLACK_DB);
    let at = |phi: f64| sqnr[PHI_GRID.iter().position(|&p| p == phi).unwrap()];
    let end_ok = at(0.99) <= at(0.6);
    verdict(
        frac_ok && sqnr_ok && end_ok,
        format!(
            "phi {PHI_GRID:?}: outlier fraction {frac:?}, SQNR dB {:?}, knee at phi {} (slack {SQNR_SLACK_DB}); SQNR(0.99) <= SQNR(0.6): {end_ok}",
            sqnr.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            PHI_GRID[knee]
        ),
    )
}

fn criterion_9() -> Verdict {
    let mut nets = vec![reference_net()];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    while nets.len() < 4 {
        let mut n = random_net(&mut rng);
        if n.patch_depth < n.layers.len() {
            n.layers.push(LayerSpec::fc(4));
            if n.validate().is_ok() {
                nets.push(n);
            }
        }
    }
    let mut compared = 0usize;
    let mut differing = 0usize;
    for (i, net) in nets.iter().enumerate() {
        let weights = WeightSet::synthetic(net, 90 + i as u64).unwrap();
        let split = split_patches(net, false).unwrap();
        let s = net.patch_depth;
        let full = vec![vec![Bitwidth::Full; s + 1]; split.branches.len()];
        let post = vec![Bitwidth::Full; net.layers.len() - s];
        for x in uniform_inputs(net.input_shape, STITCH_INPUTS, 900 + i as u64) {
            let layered = forward_fp(net, &weights, &x).unwrap();
            let patched = forward_patched(net, &split, &weights, &x, &full, &post, &[]).unwrap();
            for (a, b) in layered[s..].iter().zip(&patched) {
                compared += 1;
                let same = a.dims() == b.dims()
                    && a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
                if !same {
                    differing += 1;
                }
            }
        }
    }
    verdict(
        differing == 0 && compared > 0,
        format!(
            "{} nets x {STITCH_INPUTS} inputs, {compared} maps compared bitwise, {differing} differ",
            nets.len()
        ),
    )
}

fn criterion_10() -> Verdict {
    let run = || {
        let ctx = reference_ctx();
        ctx.plan(&PlanConfig {
            dynamic: true,
            ..Default::default()
        })
        .unwrap()
    };
    let (a, b) = (run(), run());
    let (ja, jb) = (a.to_json().unwrap(), b.to_json().unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    a.save(&path).unwrap();
    let loaded = QuantPlan::load(&path).unwrap();
    let on_disk = std::fs::read_to_string(&path).unwrap();
    verdict(
        ja == jb && loaded.totals == a.totals && loaded == a && on_disk == ja,
        format!(
            "reports byte-identical: {}; reloaded totals identical: {}; full plan identical: {}",
            ja == jb,
            loaded.totals == a.totals,
            loaded == a
        ),
    )
}

fn main() {
    let build = Instant::now();
    let ctx = reference_ctx();
    let build_time = build.elapsed();
    let results = [
        ("1 receptive-field/overlap oracle", criterion_1()),
        ("2 entropy oracle", criterion_2()),
        ("3 score boundary laws", criterion_3(&ctx)),
        ("4 search vs exhaustive oracle", criterion_4()),
        ("5 patch classification", criterion_5()),
        ("6 reference-net computation and memory", criterion_6(&ctx, build_time)),
        ("7 lambda sweep trend", criterion_7(&ctx)),
        ("8 phi sweep trend", criterion_8(&ctx)),
        ("9 patch-stitching exactness", criterion_9()),
        ("10 determinism and round-trip", criterion_10()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("criterion {name}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
