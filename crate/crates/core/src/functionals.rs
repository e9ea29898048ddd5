//! Entropy and free-energy functionals.
//!
//! Units: Boltzmann constant and particle mass are 1 unless stated, and the
//! integrand convention `0 log 0 = 0` applies everywhere a density can
//! vanish. Velocity-space functionals work in 1 to 3 velocity dimensions;
//! the equilibrium comparison forms (`s_gas_equilibrium`,
//! `maxwellian_entropy_offset`) use the three-dimensional exponents.

use crate::error::{Error, Result};
use crate::fields::{integrate, ScalarField, SigmaModel};
use crate::interp::MonotoneCubic;
use statrs::function::gamma::ln_gamma;

/// Local-equilibrium thermodynamics: entropy density `s(e)` per unit volume
/// with `1/T = ds/de`. Concave `s` and positive increasing `T` are required.
#[derive(Debug, Clone, PartialEq)]
pub enum ThermoModel {
    /// `s(e) = c log e`, so `T = e / c`. The monatomic ideal gas is `c = 3/2`.
    IdealGas { heat_capacity: f64 },
    Tabulated(EntropyTable),
}

/// Tabulated concave entropy density on a bounded energy range.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTable {
    curve: MonotoneCubic,
}

impl EntropyTable {
    /// `points` are `(e, s(e))` pairs with strictly increasing `e`, strictly
    /// increasing `s`, and strictly decreasing secant slopes (concavity).
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        for k in 1..ys.len() {
            if ys[k] <= ys[k - 1] {
                return Err(Error::Invalid(format!(
                    "entropy table not strictly increasing at knot {k}"
                )));
            }
        }
        let mut prev_slope = f64::INFINITY;
        for k in 1..xs.len() {
            let slope = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
            if slope >= prev_slope {
                return Err(Error::Invalid(format!(
                    "entropy table not concave at knot {k}"
                )));
            }
            prev_slope = slope;
        }
        let curve = MonotoneCubic::new(xs.clone(), ys)?;
        // The interpolant of monotone concave data is monotone, but its
        // derivative can still wiggle; temperature must be increasing, so
        // check the sampled derivative.
        let mut prev = f64::INFINITY;
        for seg in 0..xs.len() - 1 {
            for j in 0..8 {
                let x = xs[seg] + (xs[seg + 1] - xs[seg]) * j as f64 / 8.0;
                let d = curve.deriv(x)?;
                if !(d > 0.0) {
                    return Err(Error::Invalid(format!(
                        "entropy slope not positive at e = {x}"
                    )));
                }
                if d > prev * (1.0 + 1e-9) {
                    return Err(Error::Invalid(format!(
                        "interpolated entropy slope not decreasing at e = {x}"
                    )));
                }
                prev = d;
            }
        }
        Ok(Self { curve })
    }
}

impl ThermoModel {
    pub fn ideal_monatomic() -> Self {
        ThermoModel::IdealGas { heat_capacity: 1.5 }
    }

    pub fn ideal_gas(heat_capacity: f64) -> Result<Self> {
        if !(heat_capacity > 0.0) || !heat_capacity.is_finite() {
            return Err(Error::NonPositive {
                quantity: "heat capacity",
                value: heat_capacity,
            });
        }
        Ok(ThermoModel::IdealGas { heat_capacity })
    }

    /// Admissible energy-density range `[lo, hi]`.
    pub fn working_range(&self) -> (f64, f64) {
        match self {
            ThermoModel::IdealGas { .. } => (0.0, f64::INFINITY),
            ThermoModel::Tabulated(t) => t.curve.domain(),
        }
    }

    fn check_energy(&self, e: f64) -> Result<()> {
        let (lo, hi) = self.working_range();
        let ok = match self {
            // e = 0 has s = -inf for the ideal gas; treat it as out of range.
            ThermoModel::IdealGas { .. } => e > lo && e.is_finite(),
            ThermoModel::Tabulated(_) => e >= lo && e <= hi,
        };
        if !ok {
            return Err(Error::OutOfRange {
                quantity: "energy density",
                value: e,
                lo,
                hi,
            });
        }
        Ok(())
    }

    pub fn entropy_density(&self, e: f64) -> Result<f64> {
        self.check_energy(e)?;
        match self {
            ThermoModel::IdealGas { heat_capacity } => Ok(heat_capacity * e.ln()),
            ThermoModel::Tabulated(t) => t.curve.eval(e),
        }
    }

    /// `ds/de = 1/T`.
    pub fn entropy_slope(&self, e: f64) -> Result<f64> {
        self.check_energy(e)?;
        match self {
            ThermoModel::IdealGas { heat_capacity } => Ok(heat_capacity / e),
            ThermoModel::Tabulated(t) => t.curve.deriv(e),
        }
    }

    pub fn temperature(&self, e: f64) -> Result<f64> {
        match self {
            // Direct ratio, not 1/slope: e / c is exact when c = 1, which the
            // cross-solver identity tests rely on.
            ThermoModel::IdealGas { heat_capacity } => {
                self.check_energy(e)?;
                Ok(e / heat_capacity)
            }
            ThermoModel::Tabulated(_) => Ok(1.0 / self.entropy_slope(e)?),
        }
    }

    /// `dT/de`, used for diffusive stability bounds.
    pub fn temperature_slope(&self, e: f64) -> Result<f64> {
        match self {
            ThermoModel::IdealGas { heat_capacity } => {
                self.check_energy(e)?;
                Ok(1.0 / heat_capacity)
            }
            ThermoModel::Tabulated(t) => {
                let (lo, hi) = t.curve.domain();
                let d = 1e-6 * (hi - lo);
                let a = (e - d).max(lo);
                let b = (e + d).min(hi);
                Ok((self.temperature(b)? - self.temperature(a)?) / (b - a))
            }
        }
    }

    /// Invert `T(e)`; bisection on the decreasing slope for tables.
    pub fn energy_from_temperature(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonPositive {
                quantity: "temperature",
                value: t,
            });
        }
        match self {
            ThermoModel::IdealGas { heat_capacity } => Ok(heat_capacity * t),
            ThermoModel::Tabulated(tab) => {
                let (lo, hi) = tab.curve.domain();
                let target = 1.0 / t;
                let (s_lo, s_hi) = (tab.curve.deriv(lo)?, tab.curve.deriv(hi)?);
                if !(target <= s_lo && target >= s_hi) {
                    return Err(Error::OutOfRange {
                        quantity: "temperature",
                        value: t,
                        lo: 1.0 / s_lo,
                        hi: 1.0 / s_hi,
                    });
                }
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if tab.curve.deriv(m)? > target {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                Ok(0.5 * (a + b))
            }
        }
    }
}

/// Finite velocity-space quadrature: nodes with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    dim: usize,
    /// Node coordinates, flattened with stride `dim`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl VelocityGrid {
    /// Uniform Cartesian grid of `per_axis` cell-centered nodes per axis on
    /// `[-v_max, v_max]^dim`, with the product cell volume as weight.
    pub fn uniform(dim: usize, per_axis: usize, v_max: f64) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::Invalid(format!(
                "velocity dimension must be 1..=3, got {dim}"
            )));
        }
        if per_axis < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 velocity nodes per axis, got {per_axis}"
            )));
        }
        if !(v_max > 0.0) {
            return Err(Error::NonPositive {
                quantity: "velocity half-width",
                value: v_max,
            });
        }
        let h = 2.0 * v_max / per_axis as f64;
        let axis: Vec<f64> = (0..per_axis)
            .map(|k| -v_max + (k as f64 + 0.5) * h)
            .collect();
        let count = per_axis.pow(dim as u32);
        let mut nodes = Vec::with_capacity(count * dim);
        for i in 0..count {
            let mut rem = i;
            for _ in 0..dim {
                nodes.push(axis[rem % per_axis]);
                rem /= per_axis;
            }
        }
        let w = h.powi(dim as i32);
        Ok(Self {
            dim,
            nodes,
            weights: vec![w; count],
        })
    }

    /// Default quadrature for states near temperature `t`: 32 nodes per axis
    /// spanning six thermal velocities.
    pub fn thermal(dim: usize, temperature: f64, mass: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::NonPositive {
                quantity: "temperature",
                value: temperature,
            });
        }
        if !(mass > 0.0) {
            return Err(Error::NonPositive {
                quantity: "mass",
                value: mass,
            });
        }
        Self::uniform(dim, 32, 6.0 * (temperature / mass).sqrt())
    }

    /// Arbitrary nodes (flattened, stride `dim`) with per-node weights.
    pub fn from_nodes(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::Invalid(format!(
                "velocity dimension must be 1..=3, got {dim}"
            )));
        }
        if nodes.len() != weights.len() * dim || weights.is_empty() {
            return Err(Error::Invalid(format!(
                "{} node coordinates do not match {} weights in {dim}D",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::NegativeValue {
                quantity: "velocity weight",
                index: i,
                value: weights[i],
            });
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite velocity node".into()));
        }
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            nodes[a * dim..(a + 1) * dim]
                .partial_cmp(&nodes[b * dim..(b + 1) * dim])
                .unwrap()
        });
        for pair in order.windows(2) {
            if nodes[pair[0] * dim..(pair[0] + 1) * dim]
                == nodes[pair[1] * dim..(pair[1] + 1) * dim]
            {
                return Err(Error::Invalid(format!(
                    "duplicate velocity node at index {}",
                    pair[1]
                )));
            }
        }
        Ok(Self { dim, nodes, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn speed_squared(&self, i: usize) -> f64 {
        self.node(i).iter().map(|v| v * v).sum()
    }
}

/// Where a distribution lives in position space: a featureless box of given
/// volume, or a spatial grid with one velocity distribution per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialSupport {
    Uniform { volume: f64 },
    Gridded(crate::fields::Grid),
}

/// One-particle distribution `f(x, v)` on a velocity quadrature, constant per
/// spatial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    vgrid: VelocityGrid,
    support: SpatialSupport,
    /// Cell-major: `values[cell * nv + node]`.
    values: Vec<f64>,
}

/// Velocity moments: particle number, momentum vector, kinetic energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub particles: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
}

impl DistributionField {
    pub fn new(vgrid: VelocityGrid, support: SpatialSupport, values: Vec<f64>) -> Result<Self> {
        let cells = match &support {
            SpatialSupport::Uniform { volume } => {
                if !(*volume > 0.0) || !volume.is_finite() {
                    return Err(Error::NonPositive {
                        quantity: "spatial volume",
                        value: *volume,
                    });
                }
                1
            }
            SpatialSupport::Gridded(g) => g.cell_count(),
        };
        if values.len() != cells * vgrid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells x {} velocity nodes",
                values.len(),
                cells,
                vgrid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite distribution value at entry {i}"
            )));
        }
        Ok(Self {
            vgrid,
            support,
            values,
        })
    }

    /// Spatially uniform distribution in a box of volume `volume`.
    pub fn uniform_box(vgrid: VelocityGrid, volume: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(vgrid, SpatialSupport::Uniform { volume }, values)
    }

    pub fn vgrid(&self) -> &VelocityGrid {
        &self.vgrid
    }

    pub fn support(&self) -> &SpatialSupport {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> usize {
        match &self.support {
            SpatialSupport::Uniform { .. } => 1,
            SpatialSupport::Gridded(g) => g.cell_count(),
        }
    }

    pub fn cell_volume(&self) -> f64 {
        match &self.support {
            SpatialSupport::Uniform { volume } => *volume,
            SpatialSupport::Gridded(g) => g.cell_volume(),
        }
    }

    pub fn cell_values(&self, cell: usize) -> &[f64] {
        let nv = self.vgrid.len();
        &self.values[cell * nv..(cell + 1) * nv]
    }

    /// Number density `n(x)` of one spatial cell.
    pub fn number_density(&self, cell: usize) -> f64 {
        self.cell_values(cell)
            .iter()
            .enumerate()
            .map(|(i, f)| self.vgrid.weight(i) * f)
            .sum()
    }

    /// Total particle number, momentum, and kinetic energy for particle mass
    /// `mass`.
    pub fn moments(&self, mass: f64) -> Moments {
        let d = self.vgrid.dim();
        let vol = self.cell_volume();
        let mut particles = 0.0;
        let mut momentum = vec![0.0; d];
        let mut energy = 0.0;
        for cell in 0..self.cells() {
            let fv = self.cell_values(cell);
            for (i, &f) in fv.iter().enumerate() {
                let wf = self.vgrid.weight(i) * f * vol;
                particles += wf;
                let v = self.vgrid.node(i);
                for a in 0..d {
                    momentum[a] += mass * wf * v[a];
                }
                energy += 0.5 * mass * wf * self.vgrid.speed_squared(i);
            }
        }
        Moments {
            particles,
            momentum,
            energy,
        }
    }
}

/// Occupancy macrostate: particle counts per phase-space cell together with
/// the cell volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMacrostate {
    counts: Vec<u64>,
    volumes: Vec<f64>,
}

impl OccupancyMacrostate {
    pub fn new(counts: Vec<u64>, volumes: Vec<f64>) -> Result<Self> {
        if counts.len() != volumes.len() || counts.is_empty() {
            return Err(Error::Invalid(format!(
                "{} counts for {} cell volumes",
                counts.len(),
                volumes.len()
            )));
        }
        if let Some(i) = volumes.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NegativeValue {
                quantity: "cell volume",
                index: i,
                value: volumes[i],
            });
        }
        Ok(Self { counts, volumes })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Exact log phase volume of the macrostate,
/// `sum_a [N_a log |D_a| - log(N_a!)]`, via the log-gamma function.
pub fn log_phase_volume_exact(state: &OccupancyMacrostate) -> f64 {
    state
        .counts
        .iter()
        .zip(&state.volumes)
        .map(|(&n, &vol)| n as f64 * vol.ln() - ln_gamma(n as f64 + 1.0))
        .sum()
}

/// Stirling form of the log phase volume,
/// `-sum_a (N_a/|D_a|) log(N_a/|D_a|) |D_a| + N`; empty cells contribute 0.
pub fn entropy_stirling(state: &OccupancyMacrostate) -> f64 {
    let bulk: f64 = state
        .counts
        .iter()
        .zip(&state.volumes)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &vol)| {
            let n = n as f64;
            n * (vol.ln() - n.ln())
        })
        .sum();
    bulk + state.total_count() as f64
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Kinetic entropy `-integral f log f dx dv` over the discrete quadrature.
pub fn s_gas(f: &DistributionField) -> Result<f64> {
    let vol = f.cell_volume();
    let mut total = 0.0;
    for cell in 0..f.cells() {
        for (i, &fi) in f.cell_values(cell).iter().enumerate() {
            if fi < 0.0 {
                return Err(Error::NegativeValue {
                    quantity: "distribution",
                    index: cell * f.vgrid().len() + i,
                    value: fi,
                });
            }
            total -= f.vgrid().weight(i) * xlogx(fi) * vol;
        }
    }
    Ok(total)
}

/// Spatially uniform Maxwellian with the given total particle number,
/// box volume, and kinetic energy; the temperature follows from
/// equipartition, `kT = 2E/(d N)`.
///
/// Errors with `GridTooNarrow` when the quadrature loses more than 1e-6 of
/// the mass, so callers can widen the grid instead of silently renormalizing.
pub fn maxwellian(
    n_total: f64,
    volume: f64,
    energy: f64,
    mass: f64,
    vgrid: &VelocityGrid,
) -> Result<DistributionField> {
    for (q, v) in [
        ("particle number", n_total),
        ("volume", volume),
        ("energy", energy),
        ("mass", mass),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { quantity: q, value: v });
        }
    }
    let d = vgrid.dim() as f64;
    let t = 2.0 * energy / (d * n_total);
    let prefactor = (n_total / volume) * (2.0 * std::f64::consts::PI * t / mass).powf(-0.5 * d);
    let values: Vec<f64> = (0..vgrid.len())
        .map(|i| prefactor * (-0.5 * mass * vgrid.speed_squared(i) / t).exp())
        .collect();
    let f = DistributionField::uniform_box(vgrid.clone(), volume, values)?;
    let got = f.moments(mass).particles;
    let deficit = (n_total - got).abs() / n_total;
    if deficit > 1e-6 {
        return Err(Error::GridTooNarrow { deficit });
    }
    Ok(f)
}

/// Equilibrium entropy of `N` particles in volume `V` at temperature `T`
/// (three-dimensional velocity space, additive constant dropped):
/// `N [ (3/2) log T - log(N/V) ]`.
pub fn s_gas_equilibrium(n_total: f64, volume: f64, temperature: f64) -> Result<f64> {
    for (q, v) in [
        ("particle number", n_total),
        ("volume", volume),
        ("temperature", temperature),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { quantity: q, value: v });
        }
    }
    Ok(n_total * (1.5 * temperature.ln() - (n_total / volume).ln()))
}

/// The constant separating `s_gas` of a Maxwellian from `s_gas_equilibrium`
/// at its temperature: `N [ (3/2) log(2 pi / m) + 3/2 ]`.
pub fn maxwellian_entropy_offset(n_total: f64, mass: f64) -> f64 {
    n_total * (1.5 * (2.0 * std::f64::consts::PI / mass).ln() + 1.5)
}

/// Momentum-space entropy `-integral f log(f / n(x)) dx dv`: the part of
/// `s_gas` that ignores spatial density variation.
pub fn s_momentum(f: &DistributionField) -> Result<f64> {
    let vol = f.cell_volume();
    let nv = f.vgrid().len();
    let mut total = 0.0;
    for cell in 0..f.cells() {
        let n = f.number_density(cell);
        let fv = f.cell_values(cell);
        if n == 0.0 {
            if let Some(i) = fv.iter().position(|&v| v != 0.0) {
                return Err(Error::Invalid(format!(
                    "cell {cell} has zero density but f > 0 at node {i}"
                )));
            }
            continue;
        }
        for (i, &fi) in fv.iter().enumerate() {
            if fi < 0.0 {
                return Err(Error::NegativeValue {
                    quantity: "distribution",
                    index: cell * nv + i,
                    value: fi,
                });
            }
            if fi > 0.0 {
                total -= f.vgrid().weight(i) * fi * (fi / n).ln() * vol;
            }
        }
    }
    Ok(total)
}

/// Local-equilibrium entropy `integral s(e(x)) dx`.
pub fn s_local_equilibrium(energy: &ScalarField, thermo: &ThermoModel) -> Result<f64> {
    let s = energy
        .values()
        .iter()
        .map(|&e| thermo.entropy_density(e))
        .collect::<Result<Vec<f64>>>()?;
    Ok(s.iter().sum::<f64>() * energy.grid().cell_volume())
}

/// Single-bath free energy `(E - T_bath S_le) / T_bath` of an energy-density
/// profile; the Lyapunov functional of relaxation against one reservoir.
pub fn free_energy_canonical(
    energy: &ScalarField,
    thermo: &ThermoModel,
    t_bath: f64,
) -> Result<f64> {
    if !(t_bath > 0.0) || !t_bath.is_finite() {
        return Err(Error::NonPositive {
            quantity: "bath temperature",
            value: t_bath,
        });
    }
    let e_total = integrate(energy);
    let s_total = s_local_equilibrium(energy, thermo)?;
    Ok(e_total / t_bath - s_total)
}

mod quad {
    use crate::error::Result;

    fn simpson(h: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }

    fn recurse(
        f: &impl Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = simpson(m - a, fa, flm, fm);
        let right = simpson(b - m, fm, frm, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }

    /// Adaptive Simpson quadrature with Richardson correction; `a > b` yields
    /// the signed integral.
    pub fn adaptive_simpson(
        f: impl Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        tol: f64,
    ) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let fa = f(a)?;
        let fb = f(b)?;
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        let whole = simpson(b - a, fa, fm, fb);
        recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
    }
}

/// Large-deviation increment `F_u(v) = integral_u^v log(sigma(z)/sigma(u)) dz`.
///
/// Power-law sigma has the closed form `p (v log(v/u) - v + u)`; other models
/// are integrated adaptively. The increment is nonnegative, vanishes only at
/// `v = u`, and is convex in `v`.
pub fn ldf_increment(u: f64, v: f64, sigma: &SigmaModel) -> Result<f64> {
    let (lo, hi) = sigma.working_interval();
    for (q, z) in [("reference density", u), ("target density", v)] {
        if !(z > 0.0 && z >= lo && z <= hi) {
            return Err(Error::OutOfRange {
                quantity: q,
                value: z,
                lo: lo.max(f64::MIN_POSITIVE),
                hi,
            });
        }
    }
    let su = sigma.value(u)?;
    if !(su > 0.0) {
        return Err(Error::NonPositive {
            quantity: "sigma at reference density",
            value: su,
        });
    }
    let cramer = |p: f64| p * (v * (v / u).ln() - v + u);
    match sigma {
        SigmaModel::Identity => Ok(cramer(1.0)),
        SigmaModel::Power { exponent } => Ok(cramer(*exponent)),
        _ => {
            let log_su = su.ln();
            let integrand = |z: f64| Ok(sigma.value(z)?.ln() - log_su);
            let scale = (v - u).abs().max(1e-3);
            quad::adaptive_simpson(integrand, u, v, 1e-13 * scale)
        }
    }
}

/// Profile large-deviation functional
/// `integral F_{rho_bar(x)}(rho(x)) dx` for a density profile against a
/// stationary reference.
pub fn ldf_zrp(rho: &ScalarField, rho_bar: &ScalarField, sigma: &SigmaModel) -> Result<f64> {
    rho.same_grid(rho_bar)?;
    let vol = rho.grid().cell_volume();
    let mut total = 0.0;
    for (&v, &u) in rho.values().iter().zip(rho_bar.values()) {
        total += ldf_increment(u, v, sigma)? * vol;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use proptest::prelude::*;

    const LN_2PI: f64 = 1.8378770664093453;

    #[test]
    fn ideal_gas_thermodynamics() {
        let th = ThermoModel::ideal_monatomic();
        assert!((th.entropy_density(1.0).unwrap() - 0.0).abs() < 1e-15);
        assert!((th.temperature(2.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((th.energy_from_temperature(4.0 / 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(th.entropy_density(0.0).is_err());
        assert!(th.entropy_density(-1.0).is_err());
    }

    #[test]
    fn tabulated_entropy_matches_sampled_ideal_gas() {
        let pts: Vec<(f64, f64)> = (0..400)
            .map(|k| {
                let e = 0.5 + 3.5 * k as f64 / 399.0;
                (e, 1.5 * e.ln())
            })
            .collect();
        let th = ThermoModel::Tabulated(EntropyTable::new(&pts).unwrap());
        let ideal = ThermoModel::ideal_monatomic();
        // The interpolated slope is second-order accurate in the knot
        // spacing, which bounds the temperature at about 1e-5 here; the
        // roundtrip through the inverse of the same curve is much tighter.
        for &e in &[0.6, 1.0, 1.7, 2.9, 3.9] {
            let t_tab = th.temperature(e).unwrap();
            let t_id = ideal.temperature(e).unwrap();
            assert!((t_tab - t_id).abs() < 1e-4 * t_id, "T({e}): {t_tab} vs {t_id}");
            let back = th.energy_from_temperature(t_tab).unwrap();
            assert!((back - e).abs() < 1e-8 * e);
        }
    }

    #[test]
    fn entropy_table_rejects_bad_shapes() {
        // Not concave (convex data).
        let convex: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, (k as f64).powi(2))).collect();
        assert!(EntropyTable::new(&convex).is_err());
        // Not increasing.
        let dec: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, -(k as f64).ln())).collect();
        assert!(EntropyTable::new(&dec).is_err());
    }

    // Frozen phase-volume oracles (log-gamma arithmetic done independently):
    //   counts [2], volumes [1]:      -log 2!            = -0.693147180559945
    //   counts [1], volumes [e]:      1 - log 1!         =  1.0
    //   counts [3,1], volumes [2,.5]: 3 log 2 - log 6 + log .5 = -0.405465108108165
    #[test]
    fn log_phase_volume_oracles() {
        let cases: Vec<(Vec<u64>, Vec<f64>, f64)> = vec![
            (vec![2], vec![1.0], -0.693147180559945),
            (vec![1], vec![std::f64::consts::E], 1.0),
            (vec![3, 1], vec![2.0, 0.5], -0.405465108108165),
        ];
        for (counts, vols, want) in cases {
            let m = OccupancyMacrostate::new(counts, vols).unwrap();
            let got = log_phase_volume_exact(&m);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn entropy_stirling_single_cell_oracle() {
        // One cell, N = 1, |D| = e: -(1/e) log(1/e) e + 1 = 2.
        let m = OccupancyMacrostate::new(vec![1], vec![std::f64::consts::E]).unwrap();
        assert!((entropy_stirling(&m) - 2.0).abs() < 1e-14);
        // Empty cells contribute nothing.
        let m2 =
            OccupancyMacrostate::new(vec![1, 0], vec![std::f64::consts::E, 3.0]).unwrap();
        assert!((entropy_stirling(&m2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn stirling_error_shrinks_with_count() {
        // Relative error of the Stirling form against the exact log phase
        // volume drops monotonically over N = 1e2, 1e4, 1e6.
        let mut prev = f64::INFINITY;
        for &n in &[100u64, 10_000, 1_000_000] {
            let m = OccupancyMacrostate::new(vec![n; 4], vec![1.0, 2.0, 0.7, 1.3]).unwrap();
            let exact = log_phase_volume_exact(&m);
            let rel = (entropy_stirling(&m) - exact).abs() / exact.abs();
            assert!(rel < prev, "relative error not decreasing at N = {n}");
            prev = rel;
        }
        assert!(prev < 1e-5, "relative error {prev} at N = 1e6");
    }

    proptest! {
        // Stirling envelope: the gap to the exact value is below
        // sum_a log(N_a + 1) once every count is >= 5 (below that the
        // sqrt(2 pi N) factor alone exceeds the envelope).
        #[test]
        fn stirling_bound_holds(counts in proptest::collection::vec(5u64..1_000_000, 1..6),
                                seed in 0u64..1000) {
            let vols: Vec<f64> = (0..counts.len())
                .map(|k| 0.5 + ((seed + k as u64 * 7919) % 100) as f64 * 0.05)
                .collect();
            let m = OccupancyMacrostate::new(counts.clone(), vols).unwrap();
            let gap = (entropy_stirling(&m) - log_phase_volume_exact(&m)).abs();
            let bound: f64 = counts.iter().map(|&n| (n as f64 + 1.0).ln()).sum();
            prop_assert!(gap <= bound, "gap {gap} exceeds bound {bound}");
        }
    }

    #[test]
    fn velocity_grid_construction() {
        let g = VelocityGrid::uniform(1, 4, 2.0).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g.node(0)[0] + 1.5).abs() < 1e-15);
        assert!((g.weight(0) - 1.0).abs() < 1e-15);
        let g3 = VelocityGrid::uniform(3, 5, 1.0).unwrap();
        assert_eq!(g3.len(), 125);
        let w_total: f64 = (0..g3.len()).map(|i| g3.weight(i)).sum();
        assert!((w_total - 8.0).abs() < 1e-12, "total weight {w_total}");
        assert!(VelocityGrid::uniform(4, 4, 1.0).is_err());
        assert!(VelocityGrid::from_nodes(1, vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    // Continuum entropy of the unit Maxwellian (N = V = T = m = 1, 3D):
    //   (3/2) log(2 pi) + 3/2 = 4.256815599614018
    #[test]
    fn maxwellian_entropy_oracle_3d() {
        let vg = VelocityGrid::uniform(3, 24, 6.0).unwrap();
        let f = maxwellian(1.0, 1.0, 1.5, 1.0, &vg).unwrap();
        let want = 1.5 * LN_2PI + 1.5;
        let got = s_gas(&f).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        let m = f.moments(1.0);
        assert!((m.particles - 1.0).abs() < 1e-7);
        assert!((m.energy - 1.5).abs() < 1e-6);
        assert!(m.momentum.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn maxwellian_entropy_oracle_1d() {
        // 1D unit Maxwellian: (1/2) log(2 pi) + 1/2 = 1.4189385332046727.
        // Half-width 8 keeps the tail truncation below the tolerance.
        let vg = VelocityGrid::uniform(1, 96, 8.0).unwrap();
        let f = maxwellian(1.0, 1.0, 0.5, 1.0, &vg).unwrap();
        let got = s_gas(&f).unwrap();
        assert!((got - 1.4189385332046727).abs() < 1e-9, "{got}");
    }

    #[test]
    fn maxwellian_rejects_narrow_grid() {
        let vg = VelocityGrid::uniform(1, 16, 1.5).unwrap();
        match maxwellian(1.0, 1.0, 0.5, 1.0, &vg) {
            Err(Error::GridTooNarrow { deficit }) => assert!(deficit > 1e-6),
            other => panic!("expected GridTooNarrow, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_entropy_gap_is_temperature_independent() {
        // s_gas(maxwellian) - s_gas_equilibrium(N, V, T) must not depend on
        // T; it equals N (1.5 log(2 pi / m) + 1.5). N = 2, m = 1 freezes to
        // 2 * 4.256815599614018 = 8.513631199228036.
        let n = 2.0;
        let volume = 3.0;
        let mut gaps = Vec::new();
        for &t in &[0.7f64, 1.0, 1.9] {
            let e = 1.5 * n * t;
            let vg = VelocityGrid::uniform(3, 28, 6.0 * t.sqrt()).unwrap();
            let f = maxwellian(n, volume, e, 1.0, &vg).unwrap();
            let gap = s_gas(&f).unwrap() - s_gas_equilibrium(n, volume, t).unwrap();
            gaps.push(gap);
        }
        for g in &gaps {
            assert!((g - 8.513631199228036).abs() < 1e-5, "gap {g}");
            assert!(
                (g - maxwellian_entropy_offset(n, 1.0)).abs() < 1e-5,
                "offset helper disagrees: {g}"
            );
        }
        assert!((gaps[0] - gaps[2]).abs() < 1e-6);
    }

    #[test]
    fn momentum_entropy_identities() {
        // Separable f(x, v) = n(x) g(v) with sum w g = 1:
        // s_momentum = (integral n dx) * (-sum w g log g).
        let grid = Grid::new(&[4], &[0.3]).unwrap();
        let vg = VelocityGrid::uniform(1, 16, 4.0).unwrap();
        let n_vals = [0.5, 2.0, 1.0, 0.25];
        let mut g: Vec<f64> = (0..vg.len())
            .map(|i| (-vg.speed_squared(i)).exp() + 0.01)
            .collect();
        let z: f64 = g.iter().enumerate().map(|(i, v)| vg.weight(i) * v).sum();
        g.iter_mut().for_each(|v| *v /= z);

        let mut values = Vec::new();
        for &n in &n_vals {
            values.extend(g.iter().map(|&gv| n * gv));
        }
        let f = DistributionField::new(vg.clone(), SpatialSupport::Gridded(grid.clone()), values)
            .unwrap();

        let n_int: f64 = n_vals.iter().sum::<f64>() * 0.3;
        let g_entropy: f64 = -g
            .iter()
            .enumerate()
            .map(|(i, &gv)| vg.weight(i) * gv * gv.ln())
            .sum::<f64>();
        let want = n_int * g_entropy;
        let got = s_momentum(&f).unwrap();
        assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "{got} vs {want}");

        // General identity: s_momentum(f) - s_gas(f) = integral n log n dx.
        let n_log_n: f64 = n_vals.iter().map(|&n| n * n.ln() * 0.3).sum();
        let s = s_gas(&f).unwrap();
        let sm = s_momentum(&f).unwrap();
        assert!(((sm - s) - n_log_n).abs() < 1e-12);
    }

    #[test]
    fn local_equilibrium_entropy_and_free_energy() {
        let grid = Grid::line(5, 2.0).unwrap();
        let th = ThermoModel::ideal_monatomic();
        let e = ScalarField::constant(grid.clone(), 2.0).unwrap();
        let want = 2.0 * 1.5 * 2.0f64.ln();
        assert!((s_local_equilibrium(&e, &th).unwrap() - want).abs() < 1e-12);

        // F is minimized over uniform profiles by e* = e(T_bath).
        let t_bath = 1.3;
        let e_star = th.energy_from_temperature(t_bath).unwrap();
        let f_star =
            free_energy_canonical(&ScalarField::constant(grid.clone(), e_star).unwrap(), &th, t_bath)
                .unwrap();
        for &de in &[-0.5, -0.1, 0.1, 0.5] {
            let f = free_energy_canonical(
                &ScalarField::constant(grid.clone(), e_star + de).unwrap(),
                &th,
                t_bath,
            )
            .unwrap();
            assert!(f > f_star, "F({de}) = {f} not above minimum {f_star}");
        }
    }

    // Frozen rate-function oracles:
    //   identity, (u, v) = (1, 2):    2 log 2 - 1        = 0.3862943611198906
    //   identity, (1, 1/2):           0.5 log 0.5 + 0.5  = 0.1534264097200273
    //   z^2,      (1, 2):             2 (2 log 2 - 1)    = 0.7725887222397811
    //   z/(1+z),  (1, 2):             0.1698990367953973
    #[test]
    fn ldf_increment_oracles() {
        let id = SigmaModel::Identity;
        assert!((ldf_increment(1.0, 2.0, &id).unwrap() - 0.3862943611198906).abs() < 1e-14);
        assert!((ldf_increment(1.0, 0.5, &id).unwrap() - 0.1534264097200273).abs() < 1e-14);
        assert!((ldf_increment(1.0, std::f64::consts::E, &id).unwrap() - 1.0).abs() < 1e-14);

        let p2 = SigmaModel::power(2.0).unwrap();
        assert!((ldf_increment(1.0, 2.0, &p2).unwrap() - 0.7725887222397811).abs() < 1e-13);

        let sat = SigmaModel::Saturating;
        let got = ldf_increment(1.0, 2.0, &sat).unwrap();
        assert!((got - 0.1698990367953973).abs() < 1e-11, "{got}");
    }

    #[test]
    fn ldf_quadrature_matches_closed_form_on_tabulated_power_law() {
        // A tabulated copy of z^2 exercises the quadrature path; the closed
        // form of the Power variant is the oracle.
        let pts: Vec<(f64, f64)> = (0..600)
            .map(|k| {
                let z = 0.2 + 2.6 * k as f64 / 599.0;
                (z, z * z)
            })
            .collect();
        let table = SigmaModel::Table(crate::fields::SigmaTable::new(&pts).unwrap());
        let p2 = SigmaModel::power(2.0).unwrap();
        for (u, v) in [(1.0, 2.0), (0.5, 2.5), (1.5, 0.4), (2.0, 2.0)] {
            let got = ldf_increment(u, v, &table).unwrap();
            let want = ldf_increment(u, v, &p2).unwrap();
            assert!(
                (got - want).abs() < 2e-8 * (1.0 + want.abs()),
                "({u}, {v}): {got} vs {want}"
            );
        }
    }

    proptest! {
        #[test]
        fn ldf_increment_is_nonnegative_and_convex(
            u in 0.2f64..3.0,
            v in 0.2f64..3.0,
            dv in 0.01f64..0.3,
            exp_choice in 0usize..3,
        ) {
            let sigma = match exp_choice {
                0 => SigmaModel::Identity,
                1 => SigmaModel::power(2.0).unwrap(),
                _ => SigmaModel::Saturating,
            };
            let f = ldf_increment(u, v, &sigma).unwrap();
            prop_assert!(f >= 0.0);
            let at_u = ldf_increment(u, u, &sigma).unwrap();
            prop_assert!(at_u.abs() < 1e-12);
            // Midpoint convexity in v.
            let f_lo = ldf_increment(u, v - dv * 0.5, &sigma);
            let f_hi = ldf_increment(u, v + dv * 0.5, &sigma);
            if let (Ok(lo), Ok(hi)) = (f_lo, f_hi) {
                prop_assert!(f <= 0.5 * (lo + hi) + 1e-12);
            }
            // Derivative in v is log(sigma(v)/sigma(u)).
            let h = 1e-6 * (1.0 + v.abs());
            if v - h > 0.0 {
                let fd = (ldf_increment(u, v + h, &sigma).unwrap()
                    - ldf_increment(u, v - h, &sigma).unwrap())
                    / (2.0 * h);
                let want = (sigma.value(v).unwrap() / sigma.value(u).unwrap()).ln();
                prop_assert!((fd - want).abs() < 1e-4 * (1.0 + want.abs()),
                    "derivative {fd} vs {want}");
            }
        }
    }

    #[test]
    fn ldf_zrp_uniform_profile_oracle() {
        // Unit interval, rho_bar = 1, rho = e, identity sigma: the increment
        // is exactly 1 per unit volume.
        let grid = Grid::line(10, 1.0).unwrap();
        let rho = ScalarField::constant(grid.clone(), std::f64::consts::E).unwrap();
        let rho_bar = ScalarField::constant(grid, 1.0).unwrap();
        let got = ldf_zrp(&rho, &rho_bar, &SigmaModel::Identity).unwrap();
        assert!((got - 1.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn ldf_rejects_out_of_range_densities() {
        let id = SigmaModel::Identity;
        assert!(ldf_increment(0.0, 1.0, &id).is_err());
        assert!(ldf_increment(1.0, -0.5, &id).is_err());
        assert!(ldf_increment(1.0, 0.0, &id).is_err());
    }
}
