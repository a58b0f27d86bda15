//! Synthetic axial heating model standing in for the field solver.
//!
//! The preform is reduced to 32 cells along its axis. Each slab stack focuses
//! a Gaussian power lobe onto the axis; the lobe centre moves monotonically
//! with the slab's distance from the preform, and the overall coupling falls
//! off as the mean slab position leaves a sweet spot. Temperatures follow
//!
//! ```text
//! rho * m * dh/dt = Q(z) + k * d2T/dz2 - h_vol * (T - T_amb)
//! ```
//!
//! where `h(T)` is the specific enthalpy of a piecewise-linear `cp(T)` curve
//! and `m` is the linear-mass factor of the geometry. Stepping the enthalpy
//! explicitly (instead of `T`) conserves deposited energy exactly when
//! conduction and losses are switched off.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowSource};
use crate::doe::{lhs_sample, ParameterSpace};
use crate::error::{Error, Result};
use crate::N_POINTS;

/// Piecewise-linear heat capacity `cp(T)` in J/kg°C, clamped outside the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct HeatCapacityCurve {
    label: String,
    temps: Vec<f64>,
    cps: Vec<f64>,
    /// Specific enthalpy at each knot relative to the first knot.
    knot_enthalpy: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurve {
    label: String,
    temps: Vec<f64>,
    cps: Vec<f64>,
}

impl TryFrom<RawCurve> for HeatCapacityCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        HeatCapacityCurve::new(raw.label, raw.temps, raw.cps)
    }
}

impl From<HeatCapacityCurve> for RawCurve {
    fn from(c: HeatCapacityCurve) -> Self {
        RawCurve {
            label: c.label,
            temps: c.temps,
            cps: c.cps,
        }
    }
}

impl HeatCapacityCurve {
    pub fn new(label: impl Into<String>, temps: Vec<f64>, cps: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if temps.len() != cps.len() || temps.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "heat capacity curve `{label}` needs equal-length arrays with at least 2 knots (got {} temps, {} cps)",
                temps.len(),
                cps.len()
            )));
        }
        if temps.iter().chain(&cps).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("heat capacity curve `{label}` has non-finite knots")));
        }
        if temps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "heat capacity curve `{label}` temperatures must be strictly increasing"
            )));
        }
        if cps.iter().any(|&c| c <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "heat capacity curve `{label}` must be strictly positive"
            )));
        }
        let mut knot_enthalpy = Vec::with_capacity(temps.len());
        knot_enthalpy.push(0.0);
        for k in 1..temps.len() {
            let seg = 0.5 * (cps[k - 1] + cps[k]) * (temps[k] - temps[k - 1]);
            knot_enthalpy.push(knot_enthalpy[k - 1] + seg);
        }
        Ok(Self {
            label,
            temps,
            cps,
            knot_enthalpy,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn cps(&self) -> &[f64] {
        &self.cps
    }

    pub fn cp_min(&self) -> f64 {
        self.cps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation between knots, clamped to the end values.
    pub fn interp_cp(&self, t: f64) -> f64 {
        let last = self.temps.len() - 1;
        if t <= self.temps[0] {
            return self.cps[0];
        }
        if t >= self.temps[last] {
            return self.cps[last];
        }
        let k = self.segment(t);
        let (t0, t1) = (self.temps[k], self.temps[k + 1]);
        let (c0, c1) = (self.cps[k], self.cps[k + 1]);
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }

    /// Index `k` with `temps[k] <= t < temps[k+1]`; `t` must be inside the knot range.
    fn segment(&self, t: f64) -> usize {
        let idx = self.temps.partition_point(|&x| x <= t);
        idx.saturating_sub(1).min(self.temps.len() - 2)
    }

    /// `∫ cp dT` from the first knot to `t`, in J/kg (negative below the first knot).
    pub fn enthalpy(&self, t: f64) -> f64 {
        let last = self.temps.len() - 1;
        if t <= self.temps[0] {
            return self.cps[0] * (t - self.temps[0]);
        }
        if t >= self.temps[last] {
            return self.knot_enthalpy[last] + self.cps[last] * (t - self.temps[last]);
        }
        let k = self.segment(t);
        let x = t - self.temps[k];
        let slope = (self.cps[k + 1] - self.cps[k]) / (self.temps[k + 1] - self.temps[k]);
        self.knot_enthalpy[k] + self.cps[k] * x + 0.5 * slope * x * x
    }

    /// Inverse of [`enthalpy`](Self::enthalpy).
    pub fn temperature_at(&self, h: f64) -> f64 {
        let last = self.temps.len() - 1;
        if h <= 0.0 {
            return self.temps[0] + h / self.cps[0];
        }
        if h >= self.knot_enthalpy[last] {
            return self.temps[last] + (h - self.knot_enthalpy[last]) / self.cps[last];
        }
        let k = self.knot_enthalpy.partition_point(|&e| e <= h).saturating_sub(1).min(last - 1);
        let r = h - self.knot_enthalpy[k];
        let c0 = self.cps[k];
        let slope = (self.cps[k + 1] - c0) / (self.temps[k + 1] - self.temps[k]);
        // Root of 0.5*slope*x^2 + c0*x - r = 0 in the cancellation-free form.
        let x = 2.0 * r / (c0 + (c0 * c0 + 2.0 * slope * r).sqrt());
        self.temps[k] + x
    }

    /// True if `self.cp(T) >= other.cp(T)` at every knot of either curve,
    /// which for piecewise-linear curves means everywhere.
    pub fn dominates(&self, other: &HeatCapacityCurve) -> bool {
        self.temps
            .iter()
            .chain(other.temps())
            .all(|&t| self.interp_cp(t) >= other.interp_cp(t))
    }
}

/// Preform dimensions: lengths in mm, weight in g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreformGeometry {
    pub label: String,
    pub length: f64,
    pub wall_thickness: f64,
    pub weight: f64,
    pub neck_length: f64,
}

impl PreformGeometry {
    pub fn new(label: impl Into<String>, length: f64, wall_thickness: f64, weight: f64, neck_length: f64) -> Result<Self> {
        let g = Self {
            label: label.into(),
            length,
            wall_thickness,
            weight,
            neck_length,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.length, self.wall_thickness, self.weight, self.neck_length];
        if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "geometry `{}`: all dimensions must be positive and finite",
                self.label
            )));
        }
        if self.neck_length >= self.length {
            return Err(Error::InvalidArgument(format!(
                "geometry `{}`: neck length {} must be shorter than length {}",
                self.label, self.neck_length, self.length
            )));
        }
        Ok(())
    }

    /// Axial cell size in metres.
    pub fn cell_size_m(&self) -> f64 {
        self.length / N_POINTS as f64 * 1e-3
    }

    /// Axial position (mm from the neck end) of every prediction point.
    pub fn node_positions(&self) -> [f64; N_POINTS] {
        let dz = self.length / N_POINTS as f64;
        std::array::from_fn(|i| (i as f64 + 0.5) * dz)
    }
}

/// Distances (mm) of each slab stack from the preform along the x-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabConfig {
    pub positions: Vec<f64>,
}

impl SlabConfig {
    pub fn new(positions: Vec<f64>) -> Self {
        Self { positions }
    }

    fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }
}

/// Final surface temperatures (°C) ordered from neck to tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureField(pub [f64; N_POINTS]);

impl TemperatureField {
    pub fn values(&self) -> &[f64; N_POINTS] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Constants of the slab-to-axis power coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Coupling {
    /// Source scale: W/m³ of peak lobe power per W of input power.
    pub power_density_per_watt: f64,
    /// Largest admissible slab distance (mm).
    pub slab_max: f64,
    /// Focal centre at `length * (focal_start + focal_span * s / slab_max)`.
    pub focal_start: f64,
    pub focal_span: f64,
    /// Lobe full width at half maximum as a fraction of the preform length.
    pub lobe_fwhm_fraction: f64,
    /// Coupling efficiency `1 / (1 + ((mean_s - centre) / width)^2)`.
    pub efficiency_center: f64,
    pub efficiency_width: f64,
    /// Absorption scales with `wall_thickness / reference_wall_thickness`.
    pub reference_wall_thickness: f64,
    /// Thermal mass scales with `(weight / length) / reference_linear_mass` (g/mm).
    pub reference_linear_mass: f64,
}

impl Default for Coupling {
    fn default() -> Self {
        Self {
            power_density_per_watt: 4000.0,
            slab_max: 112.5,
            focal_start: 0.2,
            focal_span: 0.6,
            lobe_fwhm_fraction: 0.125,
            efficiency_center: 60.0,
            efficiency_width: 30.0,
            reference_wall_thickness: 3.0,
            reference_linear_mass: 0.24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// °C
    pub ambient_temp: f64,
    /// W
    pub input_power: f64,
    /// s
    pub heating_time: f64,
    /// s
    pub time_step: f64,
    /// W/m°C
    pub conduction_coeff: f64,
    /// W/m²°C, applied over the outer wall surface.
    pub convection_coeff: f64,
    /// kg/m³
    pub density: f64,
    pub coupling: Coupling,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ambient_temp: 25.0,
            input_power: 1000.0,
            heating_time: 30.0,
            time_step: 0.1,
            conduction_coeff: 0.24,
            convection_coeff: 10.0,
            density: 1380.0,
            coupling: Coupling::default(),
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("heating_time", self.heating_time),
            ("time_step", self.time_step),
            ("density", self.density),
            ("slab_max", self.coupling.slab_max),
            ("lobe_fwhm_fraction", self.coupling.lobe_fwhm_fraction),
            ("efficiency_width", self.coupling.efficiency_width),
            ("reference_wall_thickness", self.coupling.reference_wall_thickness),
            ("reference_linear_mass", self.coupling.reference_linear_mass),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("sim config: {name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("input_power", self.input_power),
            ("conduction_coeff", self.conduction_coeff),
            ("convection_coeff", self.convection_coeff),
            ("power_density_per_watt", self.coupling.power_density_per_watt),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("sim config: {name} must be non-negative, got {v}")));
            }
        }
        if !self.ambient_temp.is_finite() {
            return Err(Error::InvalidArgument("sim config: ambient_temp must be finite".into()));
        }
        Ok(())
    }

    /// Volumetric density (kg/m³) scaled by the geometry's linear mass.
    fn effective_density(&self, geometry: &PreformGeometry) -> f64 {
        let linear_mass = geometry.weight / geometry.length;
        self.density * linear_mass / self.coupling.reference_linear_mass
    }

    /// Volumetric surface-loss coefficient (W/m³°C) for a thin wall.
    fn volumetric_loss(&self, geometry: &PreformGeometry) -> f64 {
        self.convection_coeff / (geometry.wall_thickness * 1e-3)
    }

    /// Largest explicit time step for the given material and geometry:
    /// `rho_eff * cp_min / (2.5 k / dz^2 + h_vol)`, which reduces to
    /// `0.4 rho cp_min dz^2 / k` without losses.
    pub fn max_stable_step(&self, material: &HeatCapacityCurve, geometry: &PreformGeometry) -> f64 {
        let dz = geometry.cell_size_m();
        let stiffness = 2.5 * self.conduction_coeff / (dz * dz) + self.volumetric_loss(geometry);
        if stiffness == 0.0 {
            return f64::INFINITY;
        }
        self.effective_density(geometry) * material.cp_min() / stiffness
    }

    fn steps(&self) -> (usize, f64) {
        let n = (self.heating_time / self.time_step).round().max(1.0) as usize;
        (n, self.heating_time / n as f64)
    }
}

/// Volumetric power (W/m³) deposited at each of the 32 axial nodes.
pub fn power_profile(slabs: &SlabConfig, geometry: &PreformGeometry, config: &SimConfig) -> Result<[f64; N_POINTS]> {
    config.validate()?;
    geometry.validate()?;
    let c = &config.coupling;
    if slabs.positions.is_empty() {
        return Err(Error::InvalidArgument("at least one slab position required".into()));
    }
    for &p in &slabs.positions {
        if !(p > 0.0 && p <= c.slab_max) {
            return Err(Error::SlabOutOfBounds {
                position: p,
                max: c.slab_max,
            });
        }
    }
    let length = geometry.length;
    let sigma = c.lobe_fwhm_fraction * length / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let centers: Vec<f64> = slabs
        .positions
        .iter()
        .map(|&s| length * (c.focal_start + c.focal_span * s / c.slab_max))
        .collect();
    let offset = (slabs.mean() - c.efficiency_center) / c.efficiency_width;
    let efficiency = 1.0 / (1.0 + offset * offset);
    let absorption = geometry.wall_thickness / c.reference_wall_thickness;
    let amplitude = config.input_power * c.power_density_per_watt * efficiency * absorption;

    let nodes = geometry.node_positions();
    Ok(std::array::from_fn(|i| {
        let lobes: f64 = centers
            .iter()
            .map(|&ctr| {
                let d = nodes[i] - ctr;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        amplitude * lobes
    }))
}

/// Integrates the axial heating model and returns the final temperature field.
pub fn simulate(
    slabs: &SlabConfig,
    material: &HeatCapacityCurve,
    geometry: &PreformGeometry,
    config: &SimConfig,
) -> Result<TemperatureField> {
    let source = power_profile(slabs, geometry, config)?;
    let (n_steps, dt) = config.steps();
    let max_dt = config.max_stable_step(material, geometry);
    if dt > max_dt {
        return Err(Error::Unstable { dt, max_dt });
    }

    let ambient = config.ambient_temp;
    let dz = geometry.cell_size_m();
    let conductance = config.conduction_coeff / (dz * dz);
    let loss = config.volumetric_loss(geometry);
    let rate = dt / config.effective_density(geometry);

    let mut temps = [ambient; N_POINTS];
    let mut enthalpy = [material.enthalpy(ambient); N_POINTS];
    let mut flux = [0.0; N_POINTS];
    for _ in 0..n_steps {
        for i in 0..N_POINTS {
            let left = temps[i.saturating_sub(1)];
            let right = temps[(i + 1).min(N_POINTS - 1)];
            let laplacian = left - 2.0 * temps[i] + right;
            flux[i] = source[i] + conductance * laplacian - loss * (temps[i] - ambient);
        }
        for i in 0..N_POINTS {
            let dh = rate * flux[i];
            if dh != 0.0 {
                enthalpy[i] += dh;
                // clamp absorbs rounding in the enthalpy inverse near ambient
                temps[i] = material.temperature_at(enthalpy[i]).max(ambient);
            }
        }
    }
    Ok(TemperatureField(temps))
}

/// Draws an LHS design over `space` and simulates every point. Input columns
/// are the design dimensions followed by the variant descriptor features;
/// rows keep design order regardless of how they were scheduled.
pub fn generate_dataset(
    space: &ParameterSpace,
    variant: &crate::pipeline::Variant,
    n: usize,
    seed: u64,
    config: &SimConfig,
) -> Result<Dataset> {
    let design = lhs_sample(space, n, seed)?;
    let fields: Vec<TemperatureField> = design
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| simulate(&SlabConfig::new(row.to_vec()), &variant.material, &variant.geometry, config))
        .collect::<Result<_>>()?;

    let descriptor = variant.descriptor();
    let mut names = space.names();
    names.extend(descriptor.feature_names());
    let inputs: Vec<Vec<f64>> = design
        .rows()
        .map(|row| {
            let mut r = row.to_vec();
            r.extend(descriptor.values());
            r
        })
        .collect();
    let targets: Vec<[f64; N_POINTS]> = fields.into_iter().map(|f| f.0).collect();
    Dataset::new(names, inputs, targets, vec![RowSource::Simulated; n])
}

/// Built-in material and geometry definitions.
pub mod presets {
    use super::{HeatCapacityCurve, PreformGeometry};

    /// Shared temperature knots (°C) of the heat capacity presets.
    pub const CP_TEMPS: [f64; 5] = [80.0, 100.0, 120.0, 150.0, 250.0];
    pub const LOW_CP: [f64; 5] = [1000.0, 1050.0, 1100.0, 1350.0, 1450.0];
    pub const MID_CP: [f64; 5] = [1100.0, 1150.0, 1200.0, 1500.0, 1600.0];
    pub const HIGH_CP: [f64; 5] = [1250.0, 1300.0, 1650.0, 1750.0, 1800.0];

    pub const MATERIAL_NAMES: [&str; 4] = ["low_cp", "mid_cp", "high_cp", "unseen_cp"];
    pub const GEOMETRY_NAMES: [&str; 4] = ["small", "medium", "large", "unseen_geometry"];

    fn curve(label: &str, cps: [f64; 5]) -> HeatCapacityCurve {
        HeatCapacityCurve::new(label, CP_TEMPS.to_vec(), cps.to_vec()).expect("preset curve is valid")
    }

    /// Held-out material: knot-wise mean of the mid and high curves.
    pub fn unseen_cp_values() -> [f64; 5] {
        std::array::from_fn(|i| 0.5 * (MID_CP[i] + HIGH_CP[i]))
    }

    pub fn material(name: &str) -> Option<HeatCapacityCurve> {
        match name {
            "low_cp" => Some(curve(name, LOW_CP)),
            "mid_cp" => Some(curve(name, MID_CP)),
            "high_cp" => Some(curve(name, HIGH_CP)),
            "unseen_cp" => Some(curve(name, unseen_cp_values())),
            _ => None,
        }
    }

    pub fn geometry(name: &str) -> Option<PreformGeometry> {
        let (l, wt, w, neck) = match name {
            "small" => (80.0, 2.5, 18.0, 18.0),
            "medium" => (100.0, 3.0, 24.0, 21.0),
            "large" => (120.0, 3.5, 32.0, 21.0),
            "unseen_geometry" => (110.0, 3.2, 28.0, 21.0),
            _ => return None,
        };
        Some(PreformGeometry::new(name, l, wt, w, neck).expect("preset geometry is valid"))
    }
}
