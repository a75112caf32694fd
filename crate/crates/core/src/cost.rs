//! Analytic resource models for the two cores and feasibility checking
//! against an FPGA device database.
//!
//! BRAMs are modeled as 1024-deep x 36-bit units of which 32 bits are used.
//! The DSP-core consumes every DSP slice on the device by construction, a
//! LUT constant for its instruction generator and control, and BRAM for its
//! buffers; the LUT-core cost follows the fitted model of its backbone GEMM
//! kernel.

use crate::cores::{DspCoreGeometry, LutCoreGeometry};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// LUTs charged for the DSP-core instruction generator and control logic.
pub const DSP_CORE_LUT_CONSTANT: u64 = 1000;

/// Fitted LUT-cost coefficients of the bit-serial GEMM kernel.
pub const LUT_COST_A: f64 = 1.17;
pub const LUT_COST_B: f64 = 120.1;
pub const LUT_COST_C: f64 = 44.1;
pub const LUT_COST_D: f64 = 718.0;

/// One FPGA device: name plus the three resource totals the models consume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub dsp_total: u64,
    pub lut_total: u64,
    pub bram36_total: u64,
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device database parse error: {0}")]
    Parse(String),
    #[error("unknown device `{0}`")]
    Unknown(String),
    #[error("device `{0}` has a zero resource total")]
    ZeroResource(String),
}

/// Parsed device database, ordered as listed in the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceDb {
    pub devices: Vec<DeviceProfile>,
}

impl DeviceDb {
    /// The two devices the search ranges are calibrated for. DSP counts per
    /// the reference boards; LUT/BRAM totals from the vendor part tables.
    pub fn builtin() -> Self {
        Self {
            devices: vec![
                DeviceProfile {
                    name: "XC7Z020".into(),
                    dsp_total: 220,
                    lut_total: 53_200,
                    bram36_total: 140,
                },
                DeviceProfile {
                    name: "XC7Z045".into(),
                    dsp_total: 900,
                    lut_total: 218_600,
                    bram36_total: 545,
                },
            ],
        }
    }

    pub fn parse(text: &str) -> Result<Self, DeviceError> {
        let db: DeviceDb = toml::from_str(text).map_err(|e| DeviceError::Parse(e.to_string()))?;
        for d in &db.devices {
            if d.dsp_total == 0 || d.lut_total == 0 || d.bram36_total == 0 {
                return Err(DeviceError::ZeroResource(d.name.clone()));
            }
        }
        Ok(db)
    }

    pub fn to_text(&self) -> String {
        toml::to_string_pretty(self).expect("device db serialization cannot fail")
    }

    pub fn get(&self, name: &str) -> Result<&DeviceProfile, DeviceError> {
        self.devices
            .iter()
            .find(|d| d.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| DeviceError::Unknown(name.to_string()))
    }
}

/// Resource usage of one configuration against one device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub device: String,
    pub lut_used: u64,
    pub bram_used: u64,
    pub dsp_used: u64,
    pub feasible: bool,
    /// total - used per resource; negative when over budget.
    pub lut_margin: i64,
    pub bram_margin: i64,
    pub dsp_margin: i64,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// BRAM count of the DSP-core buffers:
/// ceil(rows*4/32) * (16*ceil(d_a/1024) + 8*ceil(d_w/1024)).
pub fn bram_dsp_core(g: &DspCoreGeometry) -> u64 {
    let width_units = ceil_div(g.n_reg_row_a as u64 * 4, 32);
    let act = g.n_reg_col_a as u64 * ceil_div(g.d_dbuf_a as u64, 1024);
    let weight = (g.n_reg_col_w as u64 / 2) * ceil_div(g.d_dbuf_w as u64, 1024);
    width_units * (act + weight)
}

/// LUT count of the bit-serial core, ceiled to an integer:
/// M*N*(1.17*K + 120.1 + 44.1) + 718.
pub fn lut_lut_core(m: usize, k: usize, n: usize) -> u64 {
    let raw = m as f64 * n as f64 * (LUT_COST_A * k as f64 + LUT_COST_B + LUT_COST_C) + LUT_COST_D;
    raw.ceil() as u64
}

/// BRAM count of the LUT-core buffers:
/// ceil(K/32) * (M*ceil(d_a/1024) + N*ceil(d_w/1024)).
pub fn bram_lut_core(g: &LutCoreGeometry) -> u64 {
    ceil_div(g.k as u64, 32)
        * (g.m as u64 * ceil_div(g.d_lbuf_a as u64, 1024)
            + g.n as u64 * ceil_div(g.d_lbuf_w as u64, 1024))
}

/// Total resource check of a configuration against a device. DSPs are
/// always fully utilized; LUTs add the DSP-core control constant on top of
/// the LUT-core model; BRAM sums both cores' buffers.
pub fn check_fit(lut: &LutCoreGeometry, dsp: &DspCoreGeometry, dev: &DeviceProfile) -> ResourceReport {
    let lut_used = lut_lut_core(lut.m, lut.k, lut.n) + DSP_CORE_LUT_CONSTANT;
    let bram_used = bram_lut_core(lut) + bram_dsp_core(dsp);
    let dsp_used = dev.dsp_total;
    let lut_margin = dev.lut_total as i64 - lut_used as i64;
    let bram_margin = dev.bram36_total as i64 - bram_used as i64;
    let dsp_margin = dev.dsp_total as i64 - dsp_used as i64;
    ResourceReport {
        device: dev.name.clone(),
        lut_used,
        bram_used,
        dsp_used,
        feasible: lut_margin >= 0 && bram_margin >= 0 && dsp_margin >= 0,
        lut_margin,
        bram_margin,
        dsp_margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bram_dsp_fixtures() {
        assert_eq!(bram_dsp_core(&DspCoreGeometry::new(16, 1024, 1024)), 48);
        assert_eq!(bram_dsp_core(&DspCoreGeometry::new(8, 1024, 1024)), 24);
        assert_eq!(bram_dsp_core(&DspCoreGeometry::new(16, 2048, 1024)), 80);
    }

    #[test]
    fn lut_core_fixtures() {
        assert_eq!(lut_lut_core(8, 128, 16), 40_905);
        assert_eq!(lut_lut_core(14, 512, 14), 150_314);
        assert_eq!(lut_lut_core(1, 64, 1), 958);
    }

    #[test]
    fn bram_lut_fixtures() {
        assert_eq!(bram_lut_core(&LutCoreGeometry::new(8, 16, 128, 1024)), 96);
        assert_eq!(bram_lut_core(&LutCoreGeometry::new(26, 8, 64, 1024)), 68);
        assert_eq!(bram_lut_core(&LutCoreGeometry::new(1, 1, 64, 1024)), 4);
    }

    #[test]
    fn dsp_fully_utilized() {
        let db = DeviceDb::builtin();
        let dev = db.get("XC7Z020").unwrap();
        let report = check_fit(
            &LutCoreGeometry::new(2, 2, 64, 1024),
            &DspCoreGeometry::new(4, 1024, 1024),
            dev,
        );
        assert_eq!(report.dsp_used, 220);
        assert_eq!(report.dsp_margin, 0);
    }

    #[test]
    fn tiny_config_fits_7z045() {
        let db = DeviceDb::builtin();
        let dev = db.get("XC7Z045").unwrap();
        let report = check_fit(
            &LutCoreGeometry::new(2, 2, 64, 1024),
            &DspCoreGeometry::new(4, 1024, 1024),
            dev,
        );
        assert!(report.feasible);
        assert!(report.lut_margin > 0 && report.bram_margin > 0);
    }

    #[test]
    fn oversized_config_infeasible_on_7z020() {
        let db = DeviceDb::builtin();
        let dev = db.get("XC7Z020").unwrap();
        let report = check_fit(
            &LutCoreGeometry::new(50, 50, 256, 1024),
            &DspCoreGeometry::new(16, 1024, 1024),
            dev,
        );
        assert!(report.lut_used > 53_200);
        assert!(!report.feasible);
        assert!(report.lut_margin < 0);
    }

    #[test]
    fn costs_monotone_in_each_argument() {
        for (m, k, n) in [(1usize, 64usize, 1usize), (4, 128, 8), (20, 192, 30)] {
            assert!(lut_lut_core(m + 1, k, n) >= lut_lut_core(m, k, n));
            assert!(lut_lut_core(m, k + 64, n) >= lut_lut_core(m, k, n));
            assert!(lut_lut_core(m, k, n + 1) >= lut_lut_core(m, k, n));
        }
        for rows in [1usize, 7, 16, 33] {
            for depth in [1usize, 1024, 5000] {
                let base = bram_dsp_core(&DspCoreGeometry::new(rows, depth, depth));
                assert!(bram_dsp_core(&DspCoreGeometry::new(rows + 1, depth, depth)) >= base);
                assert!(bram_dsp_core(&DspCoreGeometry::new(rows, depth + 1, depth)) >= base);
                assert!(bram_dsp_core(&DspCoreGeometry::new(rows, depth, depth + 1)) >= base);
                let lbase = bram_lut_core(&LutCoreGeometry::new(rows, rows, 64, depth));
                assert!(bram_lut_core(&LutCoreGeometry::new(rows + 1, rows, 64, depth)) >= lbase);
                assert!(bram_lut_core(&LutCoreGeometry::new(rows, rows, 128, depth)) >= lbase);
                assert!(bram_lut_core(&LutCoreGeometry::new(rows, rows, 64, depth + 1024)) >= lbase);
            }
        }
    }

    #[test]
    fn costs_constant_within_depth_buckets() {
        // Depth intervals (k*1024, (k+1)*1024] share one BRAM figure.
        for bucket in 1..4usize {
            let lo = bucket * 1024 - 1023;
            let hi = bucket * 1024;
            let at = |d: usize| bram_dsp_core(&DspCoreGeometry::new(16, d, 1024));
            assert_eq!(at(lo), at(hi));
            let lt = |d: usize| bram_lut_core(&LutCoreGeometry::new(8, 16, 128, d));
            assert_eq!(lt(lo), lt(hi));
        }
    }

    #[test]
    fn feasibility_monotone_under_shrinking_knobs() {
        let db = DeviceDb::builtin();
        let dev = db.get("XC7Z045").unwrap();
        let big = check_fit(
            &LutCoreGeometry::new(8, 16, 128, 2048),
            &DspCoreGeometry::new(16, 2048, 1024),
            dev,
        );
        assert!(big.feasible);
        // Component-wise smaller knobs must stay feasible.
        let small = check_fit(
            &LutCoreGeometry::new(4, 8, 64, 1024),
            &DspCoreGeometry::new(8, 1024, 1024),
            dev,
        );
        assert!(small.feasible);
        assert!(small.lut_used <= big.lut_used && small.bram_used <= big.bram_used);
    }

    #[test]
    fn device_db_round_trip_and_lookup() {
        let db = DeviceDb::builtin();
        let text = db.to_text();
        let parsed = DeviceDb::parse(&text).unwrap();
        assert_eq!(parsed.devices, db.devices);
        assert!(db.get("xc7z045").is_ok());
        assert!(matches!(db.get("XC9999"), Err(DeviceError::Unknown(_))));
    }
}
