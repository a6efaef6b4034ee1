//! Analytical models: computational throughput, full-system energy per
//! operation, and fanout optical geometry.

use serde::{Deserialize, Serialize};

/// Sustained throughput in operations/second for N inputs, M fanout copies,
/// and clock rate R; the factor 2 counts each multiply and accumulate.
pub fn throughput(n_inputs: f64, n_fanout: f64, clock_rate: f64) -> f64 {
    2.0 * n_inputs * n_fanout * clock_rate
}

/// Electrical parameters of the peripheral chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Electrical power for laser generation per VCSEL, watts.
    pub laser_power_per_vcsel: f64,
    /// Energy per DAC conversion, joules.
    pub dac_energy: f64,
    /// Static power per SLM weighting pixel, watts.
    pub slm_power_per_pixel: f64,
    /// Energy per TIA amplification, joules.
    pub tia_energy: f64,
    /// Energy per ADC conversion, joules.
    pub adc_energy: f64,
    /// Energy per digital nonlinearity evaluation, joules.
    pub nonlinearity_energy: f64,
}

impl EnergyParams {
    /// Demonstrated system: threshold-biased VCSELs (~400 uW electrical),
    /// 0.5 pJ DAC, 3 uW per SLM pixel, 180 fJ TIA, 0.8 pJ ADC, 1 pJ
    /// nonlinearity.
    pub fn current_system() -> Self {
        Self {
            laser_power_per_vcsel: 400e-6,
            dac_energy: 0.5e-12,
            slm_power_per_pixel: 3e-6,
            tia_energy: 180e-15,
            adc_energy: 0.8e-12,
            nonlinearity_energy: 1e-12,
        }
    }

    /// Near-term projection: 5 mW per VCSEL (1 mW optical at 25% wall-plug),
    /// faster 2 pJ ADC and 170 fJ TIA.
    pub fn near_term() -> Self {
        Self {
            laser_power_per_vcsel: 5e-3,
            dac_energy: 0.5e-12,
            slm_power_per_pixel: 3e-6,
            tia_energy: 170e-15,
            adc_energy: 2e-12,
            nonlinearity_energy: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<(), crate::error::Error> {
        for (name, v) in [
            ("laser_power_per_vcsel", self.laser_power_per_vcsel),
            ("dac_energy", self.dac_energy),
            ("slm_power_per_pixel", self.slm_power_per_pixel),
            ("tia_energy", self.tia_energy),
            ("adc_energy", self.adc_energy),
            ("nonlinearity_energy", self.nonlinearity_energy),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(crate::error::Error::Config(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Joules per operation contributed by each component, and the total.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyBreakdown {
    pub laser: f64,
    pub dac: f64,
    pub slm: f64,
    pub tia: f64,
    pub adc: f64,
    pub nonlinearity: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("laser", self.laser),
            ("dac", self.dac),
            ("slm", self.slm),
            ("tia", self.tia),
            ("adc", self.adc),
            ("nonlinearity", self.nonlinearity),
        ]
    }
}

/// Full-system energy per operation: the cycle power
/// `N*(P_laser + E_DAC*R) + N*M*P_SLM + M*(E_TIA + E_ADC + E_NL)*R`
/// divided by the `2*N*M*R` operations running concurrently.
pub fn energy_per_op(params: &EnergyParams, n_inputs: f64, n_fanout: f64, clock_rate: f64) -> EnergyBreakdown {
    let ops = throughput(n_inputs, n_fanout, clock_rate);
    let laser = n_inputs * params.laser_power_per_vcsel / ops;
    let dac = n_inputs * params.dac_energy * clock_rate / ops;
    let slm = n_inputs * n_fanout * params.slm_power_per_pixel / ops;
    let tia = n_fanout * params.tia_energy * clock_rate / ops;
    let adc = n_fanout * params.adc_energy * clock_rate / ops;
    let nonlinearity = n_fanout * params.nonlinearity_energy * clock_rate / ops;
    EnergyBreakdown {
        laser,
        dac,
        slm,
        tia,
        adc,
        nonlinearity,
        total: laser + dac + slm + tia + adc + nonlinearity,
    }
}

/// Optics of the fanout stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Focal length of the focusing lens, meters.
    pub focal_length: f64,
    /// Diffraction angle per fanout order, radians.
    pub diffraction_angle_per_order: f64,
    /// Center-to-center source pitch, meters.
    pub source_pitch: f64,
    /// Focused spot diameter at the weighting plane, meters.
    pub spot_diameter: f64,
}

/// Spot layout at the weighting/detector plane.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FanoutGeometry {
    /// Center-to-center spacing of adjacent fanout copies, meters.
    pub spot_spacing: f64,
    /// Extent of the full replica array along one axis, meters.
    pub array_extent: f64,
    /// spacing / spot diameter; below 3 neighboring copies start to overlap.
    pub crosstalk_margin: f64,
    pub crosstalk_warning: bool,
}

/// Margin under which adjacent copies are flagged as crosstalk-prone.
pub const CROSSTALK_MARGIN_THRESHOLD: f64 = 3.0;

pub fn fanout_geometry(params: &GeometryParams, copies_per_axis: usize) -> FanoutGeometry {
    let spot_spacing = params.focal_length * params.diffraction_angle_per_order.tan();
    let array_extent = spot_spacing * (copies_per_axis.saturating_sub(1)) as f64;
    let crosstalk_margin = if params.spot_diameter > 0.0 {
        spot_spacing / params.spot_diameter
    } else {
        0.0
    };
    FanoutGeometry {
        spot_spacing,
        array_extent,
        crosstalk_margin,
        crosstalk_warning: crosstalk_margin < CROSSTALK_MARGIN_THRESHOLD,
    }
}

pub fn degrees_to_radians(deg: f64) -> f64 {
    deg * std::f64::consts::PI / 180.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_reference_points() {
        assert_eq!(throughput(25.0, 9.0, 1e8), 4.5e10);
        assert_eq!(throughput(1024.0, 1024.0, 25e9), 5.24288e16);
        assert_eq!(throughput(1.0, 1.0, 1.0), 2.0);
    }

    #[test]
    fn throughput_is_multiplicative_in_each_argument() {
        let base = throughput(7.0, 11.0, 3e6);
        assert_eq!(throughput(14.0, 11.0, 3e6), 2.0 * base);
        assert_eq!(throughput(7.0, 33.0, 3e6), 3.0 * base);
        assert_eq!(throughput(7.0, 11.0, 6e6), 2.0 * base);
    }

    #[test]
    fn current_system_energy_breakdown() {
        let b = energy_per_op(&EnergyParams::current_system(), 9.0, 9.0, 1e8);
        let fj = 1e-15;
        assert!((b.laser - 222.222 * fj).abs() < 0.01 * fj);
        assert!((b.dac - 27.7778 * fj).abs() < 0.01 * fj);
        assert!((b.slm - 15.0 * fj).abs() < 0.01 * fj);
        assert!((b.tia - 10.0 * fj).abs() < 0.01 * fj);
        assert!((b.adc - 44.4444 * fj).abs() < 0.01 * fj);
        assert!((b.nonlinearity - 55.5556 * fj).abs() < 0.01 * fj);
        assert!((b.total - 375.0 * fj).abs() < 0.01 * fj);
    }

    #[test]
    fn near_term_energy_breakdown() {
        let b = energy_per_op(&EnergyParams::near_term(), 1000.0, 1000.0, 25e9);
        let fj = 1e-15;
        assert!((b.laser - 0.1 * fj).abs() < 0.001 * fj);
        assert!((b.dac - 0.25 * fj).abs() < 0.001 * fj);
        assert!((b.slm - 0.06 * fj).abs() < 0.001 * fj);
        assert!((b.tia - 0.085 * fj).abs() < 0.001 * fj);
        assert!((b.adc - 1.0 * fj).abs() < 0.001 * fj);
        assert!((b.nonlinearity - 0.5 * fj).abs() < 0.001 * fj);
        assert!((b.total - 1.995 * fj).abs() < 0.001 * fj);
    }

    #[test]
    fn zero_params_cost_nothing() {
        let zero = EnergyParams {
            laser_power_per_vcsel: 0.0,
            dac_energy: 0.0,
            slm_power_per_pixel: 0.0,
            tia_energy: 0.0,
            adc_energy: 0.0,
            nonlinearity_energy: 0.0,
        };
        assert_eq!(energy_per_op(&zero, 9.0, 9.0, 1e8).total, 0.0);
    }

    #[test]
    fn row_scaling_with_channel_counts() {
        // Laser amortizes over M, readout rows over N; scaling both by c
        // shrinks those rows by c while DAC stays tied to M and SLM to R.
        let p = EnergyParams::current_system();
        for c in [2.0, 4.0] {
            let base = energy_per_op(&p, 9.0, 9.0, 1e8);
            let scaled = energy_per_op(&p, 9.0 * c, 9.0 * c, 1e8);
            assert!((scaled.laser - base.laser / c).abs() < 1e-30);
            assert!((scaled.tia - base.tia / c).abs() < 1e-30);
            assert!((scaled.adc - base.adc / c).abs() < 1e-30);
            assert!((scaled.nonlinearity - base.nonlinearity / c).abs() < 1e-30);
            assert!((scaled.dac - base.dac / c).abs() < 1e-30);
            assert!((scaled.slm - base.slm).abs() < 1e-30);
        }
    }

    #[test]
    fn static_rows_vanish_at_high_clock_rates() {
        let p = EnergyParams::current_system();
        let n = 9.0;
        let m = 9.0;
        let b = energy_per_op(&p, n, m, 1e20);
        let limit = p.dac_energy / (2.0 * m)
            + (p.tia_energy + p.adc_energy + p.nonlinearity_energy) / (2.0 * n);
        assert!(b.laser < 1e-24);
        assert!(b.slm < 1e-24);
        assert!((b.total / limit - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fanout_spacing_reference_points() {
        let g = GeometryParams {
            focal_length: 36.7e-3,
            diffraction_angle_per_order: degrees_to_radians(1.0),
            source_pitch: 20e-6,
            spot_diameter: 100e-6,
        };
        let f = fanout_geometry(&g, 32);
        assert!((f.spot_spacing - 640.6e-6).abs() < 1e-6);
        assert!((f.array_extent - 31.0 * f.spot_spacing).abs() < 1e-12);
        assert!(!f.crosstalk_warning);

        let g = GeometryParams {
            focal_length: 400e-3,
            diffraction_angle_per_order: degrees_to_radians(0.26),
            source_pitch: 80e-6,
            spot_diameter: 19.7e-6,
        };
        let f = fanout_geometry(&g, 3);
        assert!((f.spot_spacing - 1.8152e-3).abs() < 20e-6);
    }

    #[test]
    fn degenerate_angle_warns() {
        let g = GeometryParams {
            focal_length: 36.7e-3,
            diffraction_angle_per_order: 0.0,
            source_pitch: 20e-6,
            spot_diameter: 100e-6,
        };
        let f = fanout_geometry(&g, 32);
        assert_eq!(f.spot_spacing, 0.0);
        assert_eq!(f.crosstalk_margin, 0.0);
        assert!(f.crosstalk_warning);
    }
}
