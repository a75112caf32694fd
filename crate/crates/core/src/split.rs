//! Optimal per-layer workload split between the LUT-core and DSP-core.
//!
//! The split is static and filter-granular: a layer with `c_out` filters has
//! `c_out + 1` candidate ratios `k / c_out`, and the best one minimizes
//! `max(L_LUT, L_DSP)`. Candidates are swept exhaustively; each evaluation
//! is one pair of fast program simulations, so at desk scale correctness
//! beats a cleverer crossing-point search.

use crate::quantize::QuantScheme;
use crate::sched::{layer_latency_split, ArchConfig, LayerLatency, SchedError, SimTunables};
use crate::workload::{im2col_dims, NetworkSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The chosen ratio and resulting latency for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSplit {
    pub layer_index: usize,
    /// Filter_LUT / Filter_all, an exact multiple of 1/c_out.
    pub ratio: f64,
    /// Filters assigned to the LUT-core.
    pub lut_filters: usize,
    pub c_out: usize,
    pub cycles: u64,
    /// True when the depthwise rule pinned this layer to the DSP-core.
    pub forced_dsp: bool,
}

/// Per-layer split decisions for a whole network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub layers: Vec<LayerSplit>,
    /// Sum of the per-layer latencies under the plan.
    pub total_cycles: u64,
}

/// Latency of every candidate LUT share `k = 0..=c_out` for one layer.
/// This is also the oracle the optimality tests sweep.
pub fn ratio_scan(
    shape: &crate::workload::GemmShape,
    cfg: &ArchConfig,
    scheme: &QuantScheme,
    tunables: &SimTunables,
) -> Result<Vec<LayerLatency>, SchedError> {
    (0..=shape.cols)
        .map(|k| layer_latency_split(shape, cfg, scheme, k, tunables))
        .collect()
}

/// Best LUT-core share for one layer: the argmin of `max(L_LUT, L_DSP)`
/// over all `c_out + 1` candidates, ties broken toward the larger share.
/// Layers whose activations exceed the DSP datapath run fully on the
/// LUT-core.
pub fn optimal_ratio(
    shape: &crate::workload::GemmShape,
    cfg: &ArchConfig,
    scheme: &QuantScheme,
    tunables: &SimTunables,
) -> Result<(usize, u64), SchedError> {
    if scheme.b_a > 4 {
        let lat = layer_latency_split(shape, cfg, scheme, shape.cols, tunables)?;
        return Ok((shape.cols, lat.cycles));
    }
    let scan = ratio_scan(shape, cfg, scheme, tunables)?;
    let mut best_k = 0;
    let mut best = scan[0].cycles;
    for (k, lat) in scan.iter().enumerate().skip(1) {
        if lat.cycles <= best {
            best = lat.cycles;
            best_k = k;
        }
    }
    Ok((best_k, best))
}

/// Split every layer of a network. Depthwise layers additionally compare
/// the swept optimum against the forced all-DSP split and keep the faster
/// of the two (ties go to the DSP-core).
pub fn plan_network(
    net: &NetworkSpec,
    cfg: &ArchConfig,
    tunables: &SimTunables,
) -> Result<SplitPlan, SchedError> {
    let layers: Result<Vec<LayerSplit>, SchedError> = net
        .layers
        .par_iter()
        .map(|layer| {
            let shape = im2col_dims(layer);
            let scheme = cfg.scheme(layer.index)?;
            let (mut k, mut cycles) = optimal_ratio(&shape, cfg, scheme, tunables)?;
            let mut forced_dsp = false;
            if layer.is_depthwise && scheme.b_a <= 4 {
                let all_dsp = layer_latency_split(&shape, cfg, scheme, 0, tunables)?;
                if all_dsp.cycles <= cycles {
                    k = 0;
                    cycles = all_dsp.cycles;
                    forced_dsp = true;
                }
            }
            Ok(LayerSplit {
                layer_index: layer.index,
                ratio: k as f64 / shape.cols as f64,
                lut_filters: k,
                c_out: shape.cols,
                cycles,
                forced_dsp,
            })
        })
        .collect();
    let layers = layers?;
    let total_cycles = layers.iter().map(|l| l.cycles).sum();
    Ok(SplitPlan { layers, total_cycles })
}

/// Write a plan's ratios into a configuration, so simulation and reporting
/// run under the planned split.
pub fn apply_plan(cfg: &mut ArchConfig, plan: &SplitPlan) {
    for l in &plan.layers {
        if let Some(r) = cfg.ratios.get_mut(l.layer_index - 1) {
            *r = l.ratio;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cores::{DspCoreGeometry, LutCoreGeometry};
    use crate::sched::network_latency;
    use crate::workload::{builtin_network, GemmShape};

    fn cfg(layers: usize) -> ArchConfig {
        ArchConfig::uniform(
            "XC7Z045",
            LutCoreGeometry::new(8, 16, 128, 4096),
            DspCoreGeometry::new(16, 4096, 2048),
            layers,
            4,
            4,
            0.5,
        )
    }

    #[test]
    fn optimum_beats_full_sweep() {
        let c = cfg(1);
        let shape = GemmShape { rows: 64, depth: 72, cols: 24 };
        let scheme = QuantScheme::new(1, 3, 6);
        let t = SimTunables::default();
        let (k_star, best) = optimal_ratio(&shape, &c, &scheme, &t).unwrap();
        let scan = ratio_scan(&shape, &c, &scheme, &t).unwrap();
        for (k, lat) in scan.iter().enumerate() {
            assert!(best <= lat.cycles, "k*={k_star} beaten by k={k}");
        }
        assert_eq!(best, scan[k_star].cycles);
    }

    #[test]
    fn ties_break_toward_larger_share() {
        // Whatever the landscape, no k above the winner may match it.
        let c = cfg(1);
        let shape = GemmShape { rows: 4, depth: 8, cols: 6 };
        let scheme = QuantScheme::new(1, 2, 2);
        let t = SimTunables::default();
        let (k_star, best) = optimal_ratio(&shape, &c, &scheme, &t).unwrap();
        let scan = ratio_scan(&shape, &c, &scheme, &t).unwrap();
        for k in (k_star + 1)..scan.len() {
            assert!(scan[k].cycles > best, "tie at larger k={k} not taken");
        }
    }

    #[test]
    fn hostile_lut_pushes_ratio_down() {
        // Wide weights on a tiny DPU array make the LUT-core slow, so the
        // optimum sits well below an even split.
        let c = ArchConfig::uniform(
            "XC7Z045",
            LutCoreGeometry::new(1, 1, 64, 4096),
            DspCoreGeometry::new(16, 4096, 2048),
            1,
            4,
            8,
            0.5,
        );
        let shape = GemmShape { rows: 196, depth: 256, cols: 64 };
        let scheme = QuantScheme::new(1, 4, 8);
        let t = SimTunables::default();
        let (k_star, _) = optimal_ratio(&shape, &c, &scheme, &t).unwrap();
        assert!((k_star as f64) < 0.5 * shape.cols as f64, "k*={k_star}");
    }

    #[test]
    fn five_candidate_hand_enumeration() {
        // c_out = 4: five candidates, argmin hand-checked against the scan.
        let c = cfg(1);
        let shape = GemmShape { rows: 16, depth: 36, cols: 4 };
        let scheme = QuantScheme::new(1, 3, 4);
        let t = SimTunables::default();
        let scan = ratio_scan(&shape, &c, &scheme, &t).unwrap();
        assert_eq!(scan.len(), 5);
        let mut hand_best = (0usize, u64::MAX);
        for (k, lat) in scan.iter().enumerate() {
            if lat.cycles <= hand_best.1 {
                hand_best = (k, lat.cycles);
            }
        }
        let (k_star, best) = optimal_ratio(&shape, &c, &scheme, &t).unwrap();
        assert_eq!((k_star, best), hand_best);
    }

    #[test]
    fn scan_sides_are_monotone_staircases() {
        let c = cfg(1);
        let shape = GemmShape { rows: 49, depth: 128, cols: 32 };
        let scheme = QuantScheme::new(1, 3, 5);
        let t = SimTunables::default();
        let scan = ratio_scan(&shape, &c, &scheme, &t).unwrap();
        for pair in scan.windows(2) {
            assert!(pair[1].lut.total >= pair[0].lut.total, "LUT side must not shrink with k");
            assert!(pair[1].dsp.total <= pair[0].dsp.total, "DSP side must not grow with k");
        }
    }

    #[test]
    fn one_layer_plan_matches_optimal_ratio() {
        let mut net = builtin_network("synthetic-small").unwrap();
        net.layers.truncate(2);
        net.layers[1].is_first_or_last = false;
        let c = cfg(2);
        let t = SimTunables::default();
        let plan = plan_network(&net, &c, &t).unwrap();
        assert_eq!(plan.layers.len(), 2);
        let shape = im2col_dims(&net.layers[1]);
        let (k, cycles) = optimal_ratio(&shape, &c, c.scheme(2).unwrap(), &t).unwrap();
        assert_eq!(plan.layers[1].lut_filters, k);
        assert_eq!(plan.layers[1].cycles, cycles);
    }

    #[test]
    fn depthwise_forced_to_dsp_under_hostile_lut() {
        let net = builtin_network("mobilenetv2").unwrap();
        // Keep runtime modest: plan the first bottleneck stack only.
        let mut small = net.clone();
        small.layers.truncate(10);
        small.layers[9].is_first_or_last = false;
        let hostile = ArchConfig::uniform(
            "XC7Z045",
            LutCoreGeometry::new(1, 1, 64, 4096),
            DspCoreGeometry::new(16, 8192, 2048),
            small.layers.len(),
            4,
            8,
            0.5,
        );
        let t = SimTunables::default();
        let plan = plan_network(&small, &hostile, &t).unwrap();
        for (layer, split) in small.layers.iter().zip(&plan.layers) {
            if layer.is_depthwise {
                assert_eq!(split.lut_filters, 0, "depthwise layer {}", layer.index);
            }
        }
    }

    #[test]
    fn plan_total_consistent_with_network_latency() {
        let net = builtin_network("synthetic-small").unwrap();
        let mut c = cfg(net.layers.len());
        let t = SimTunables::default();
        let plan = plan_network(&net, &c, &t).unwrap();
        apply_plan(&mut c, &plan);
        let total = network_latency(&net, &c, &t).unwrap();
        assert_eq!(plan.total_cycles, total.cycles);
    }
}
