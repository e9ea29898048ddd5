//! Deterministic macroscopic evolution and its monotonicity diagnostics.
//!
//! Two explicit finite-volume solvers share one conservative flux kernel:
//! Fourier heat flow `de/dt = div(kappa(T) grad T)` (closed or coupled to
//! Dirichlet reservoirs) and boundary-driven nonlinear diffusion
//! `d(rho)/dt = lap(sigma(rho)) - E . grad(sigma(rho))`. The audits evaluate
//! the paired Lyapunov functionals along recorded traces and compare their
//! increments against exact discrete dissipation identities:
//!
//! * entropy balance: `dS/dt = boundary flux + production` holds exactly for
//!   the semi-discrete scheme, with cellwise-nonnegative production;
//! * free energy against one bath at temperature `T`: `dF/dt = -production`;
//! * density LDF against the stationary profile: `dF/dt = -integral
//!   sigma(rho_bar) |grad h|^2 / h dx` with `h = sigma(rho)/sigma(rho_bar)`,
//!   for both the plain and the drift equation (boundary terms cancel because
//!   `h = 1` on Dirichlet faces).
//!
//! Time stepping is explicit Euler under the diffusive bound
//! `dt <= 0.4 dx^2 / (2 d max sigma')`, which also keeps the discrete
//! functional increments single-signed.

use crate::error::{Error, Result};
use crate::fields::{
    boundary_fluxes, directional_gradient, flux_divergence, grad_sq_weighted,
    weighted_gradient_form, BoundaryCondition, FaceCondition, Grid, ScalarField, SigmaModel,
};
use crate::functionals::{free_energy_canonical, ldf_zrp, ThermoModel};

/// Safety factor applied to the explicit diffusive stability limit.
pub const CFL_SAFETY: f64 = 0.4;

/// Heat conductivity `kappa(T)`, nonnegative on `T > 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaModel {
    Constant(f64),
    /// `kappa(T) = coefficient * T`.
    Proportional(f64),
}

impl KappaModel {
    fn check(&self) -> Result<()> {
        let c = match self {
            KappaModel::Constant(c) | KappaModel::Proportional(c) => *c,
        };
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonPositive {
                quantity: "conductivity coefficient",
                value: c,
            });
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            KappaModel::Constant(c) => *c,
            KappaModel::Proportional(c) => c * t,
        }
    }
}

/// Fourier heat flow on a grid: local-equilibrium thermodynamics, a
/// conductivity, and temperature boundary conditions (ZeroFlux everywhere =
/// closed system; uniform Dirichlet = single bath).
#[derive(Debug, Clone)]
pub struct HeatProblem {
    grid: Grid,
    thermo: ThermoModel,
    kappa: KappaModel,
    bc: BoundaryCondition,
}

impl HeatProblem {
    pub fn new(
        grid: Grid,
        thermo: ThermoModel,
        kappa: KappaModel,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        kappa.check()?;
        bc.check_grid(&grid)?;
        // Every bath temperature must be positive and representable in the
        // thermo model.
        for face in bc.faces() {
            if let FaceCondition::Dirichlet(vals) = face {
                for &t in vals {
                    if !(t > 0.0) {
                        return Err(Error::NonPositive {
                            quantity: "bath temperature",
                            value: t,
                        });
                    }
                    thermo.energy_from_temperature(t)?;
                }
            }
        }
        Ok(Self {
            grid,
            thermo,
            kappa,
            bc,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn thermo(&self) -> &ThermoModel {
        &self.thermo
    }

    pub fn kappa(&self) -> &KappaModel {
        &self.kappa
    }

    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }

    /// The single reservoir temperature, when every Dirichlet value agrees.
    pub fn bath_temperature(&self) -> Result<f64> {
        let mut t_bath = None;
        for face in self.bc.faces() {
            if let FaceCondition::Dirichlet(vals) = face {
                for &t in vals {
                    match t_bath {
                        None => t_bath = Some(t),
                        Some(prev) if prev == t => {}
                        Some(prev) => {
                            return Err(Error::Invalid(format!(
                                "multiple bath temperatures ({prev} and {t}); \
                                 the free-energy audit needs a single reservoir"
                            )))
                        }
                    }
                }
            }
        }
        t_bath.ok_or_else(|| Error::Invalid("no Dirichlet face, so no bath".into()))
    }

    fn temperature_field(&self, energy: &ScalarField) -> Result<ScalarField> {
        check_state_grid(&self.grid, energy)?;
        let t = energy
            .values()
            .iter()
            .map(|&e| self.thermo.temperature(e))
            .collect::<Result<Vec<f64>>>()?;
        ScalarField::new(self.grid.clone(), t)
    }
}

/// Boundary-driven nonlinear diffusion `d(rho)/dt = lap(sigma(rho))`, with an
/// optional constant drift field subtracting `E . grad(sigma(rho))`. Dirichlet
/// data are densities; internally ghosts live in sigma space so the discrete
/// stationary state solves a linear system exactly.
#[derive(Debug, Clone)]
pub struct ZrpPdeProblem {
    grid: Grid,
    sigma: SigmaModel,
    bc: BoundaryCondition,
    sigma_bc: BoundaryCondition,
    drift: Option<Vec<f64>>,
}

impl ZrpPdeProblem {
    pub fn new(
        grid: Grid,
        sigma: SigmaModel,
        bc: BoundaryCondition,
        drift: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(e) = &drift {
            if e.len() != grid.dim() {
                return Err(Error::GridMismatch(format!(
                    "drift has {} components on a {}D grid",
                    e.len(),
                    grid.dim()
                )));
            }
            if e.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid("non-finite drift component".into()));
            }
        }
        bc.check_grid(&grid)?;
        for face in bc.faces() {
            if let FaceCondition::Dirichlet(vals) = face {
                for &r in vals {
                    if !(r > 0.0) {
                        return Err(Error::NonPositive {
                            quantity: "boundary density",
                            value: r,
                        });
                    }
                }
            }
        }
        let sigma_bc = bc.map_dirichlet(|r| sigma.value(r))?;
        Ok(Self {
            grid,
            sigma,
            bc,
            sigma_bc,
            drift,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sigma(&self) -> &SigmaModel {
        &self.sigma
    }

    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn drift(&self) -> Option<&[f64]> {
        self.drift.as_deref()
    }

    fn sigma_field(&self, rho: &ScalarField) -> Result<ScalarField> {
        check_state_grid(&self.grid, rho)?;
        let phi = rho
            .values()
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                if !(r > 0.0) {
                    return Err(Error::NegativeValue {
                        quantity: "density",
                        index: i,
                        value: r,
                    });
                }
                self.sigma.value(r)
            })
            .collect::<Result<Vec<f64>>>()?;
        ScalarField::new(self.grid.clone(), phi)
    }
}

/// One recorded state of an evolution.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: ScalarField,
}

/// Time-ordered sequence of snapshots on one grid.
#[derive(Debug, Clone, Default)]
pub struct EvolutionTrace {
    snapshots: Vec<Snapshot>,
}

impl EvolutionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, snap: Snapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snap.time <= last.time {
                return Err(Error::Invalid(format!(
                    "snapshot time {} does not increase past {}",
                    snap.time, last.time
                )));
            }
            last.field.same_grid(&snap.field)?;
        }
        self.snapshots.push(snap);
        Ok(())
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

fn check_state_grid(grid: &Grid, state: &ScalarField) -> Result<()> {
    if state.grid() != grid {
        return Err(Error::GridMismatch(
            "state grid differs from the problem grid".into(),
        ));
    }
    Ok(())
}

fn check_dt(dt: f64, bound: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonPositive {
            quantity: "time step",
            value: dt,
        });
    }
    // Tolerate roundoff when callers pass exactly the published bound.
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::TimeStepTooLarge { dt, bound });
    }
    Ok(())
}

fn diffusive_dt_bound(grid: &Grid, max_diffusivity: f64) -> f64 {
    let inv_h2: f64 = grid.spacing().iter().map(|h| 1.0 / (h * h)).sum();
    CFL_SAFETY / (2.0 * max_diffusivity * inv_h2)
}

/// Largest accepted explicit step for the heat problem at this state:
/// `0.4 dx^2 / (2 d max[kappa(T) dT/de])`.
pub fn stable_dt_heat(p: &HeatProblem, energy: &ScalarField) -> Result<f64> {
    check_state_grid(&p.grid, energy)?;
    let mut max_d = 0.0f64;
    for &e in energy.values() {
        let t = p.thermo.temperature(e)?;
        max_d = max_d.max(p.kappa.value(t) * p.thermo.temperature_slope(e)?);
    }
    for face in p.bc.faces() {
        if let FaceCondition::Dirichlet(vals) = face {
            for &t in vals {
                let e = p.thermo.energy_from_temperature(t)?;
                max_d = max_d.max(p.kappa.value(t) * p.thermo.temperature_slope(e)?);
            }
        }
    }
    if !(max_d > 0.0) {
        return Err(Error::NonPositive {
            quantity: "diffusivity",
            value: max_d,
        });
    }
    Ok(diffusive_dt_bound(&p.grid, max_d))
}

/// Largest accepted explicit step for the density problem at this state:
/// `0.4 dx^2 / (2 d max sigma')` over the cell values and boundary data.
pub fn stable_dt_zrp(p: &ZrpPdeProblem, rho: &ScalarField) -> Result<f64> {
    check_state_grid(&p.grid, rho)?;
    let mut max_d = 0.0f64;
    for &r in rho.values() {
        max_d = max_d.max(p.sigma.derivative(r)?);
    }
    for face in p.bc.faces() {
        if let FaceCondition::Dirichlet(vals) = face {
            for &r in vals {
                max_d = max_d.max(p.sigma.derivative(r)?);
            }
        }
    }
    if !(max_d > 0.0) {
        return Err(Error::NonPositive {
            quantity: "diffusivity",
            value: max_d,
        });
    }
    Ok(diffusive_dt_bound(&p.grid, max_d))
}

/// One explicit Euler step of `de/dt = div(kappa(T) grad T)`.
///
/// The face conductivity is `kappa` at the arithmetic-midpoint temperature;
/// at a Dirichlet face the ghost construction makes that midpoint the bath
/// temperature itself. With ZeroFlux everywhere, `integrate(e)` is conserved
/// exactly up to roundoff.
pub fn step_heat(p: &HeatProblem, energy: &ScalarField, dt: f64) -> Result<ScalarField> {
    check_dt(dt, stable_dt_heat(p, energy)?)?;
    let t_field = p.temperature_field(energy)?;
    let kappa = &p.kappa;
    let rate = flux_divergence(&t_field, &p.bc, |_, a, b| kappa.value(0.5 * (a + b)))?;
    let next: Vec<f64> = energy
        .values()
        .iter()
        .zip(rate.values())
        .map(|(&e, &r)| e + dt * r)
        .collect();
    for (i, &e) in next.iter().enumerate() {
        if p.thermo.entropy_slope(e).is_err() {
            return Err(Error::PositivityLoss { cell: i, value: e });
        }
    }
    ScalarField::new(p.grid.clone(), next)
}

/// The three terms of the discrete entropy balance at one instant:
/// `total = boundary_flux + production` holds exactly for the semi-discrete
/// scheme, and `production >= 0` link by link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBalance {
    /// `dS_le/dt` of the semi-discrete evolution.
    pub total: f64,
    /// Entropy inflow through Dirichlet faces, `-sum J_out A / T_face`.
    pub boundary_flux: f64,
    /// Bulk link production plus Dirichlet half-link production.
    pub production: f64,
}

/// Entropy balance of the heat problem at the given energy profile.
pub fn entropy_balance(p: &HeatProblem, energy: &ScalarField) -> Result<EntropyBalance> {
    let t_field = p.temperature_field(energy)?;
    if let Some(i) = t_field.values().iter().position(|&t| !(t > 0.0)) {
        return Err(Error::NonPositive {
            quantity: "temperature",
            value: t_field.values()[i],
        });
    }
    let kappa = &p.kappa;
    let weight = |_axis: usize, a: f64, b: f64| kappa.value(0.5 * (a + b));
    let vol = p.grid.cell_volume();

    // dS/dt computed directly from the stepper's right-hand side.
    let rate = flux_divergence(&t_field, &p.bc, weight)?;
    let slopes = energy
        .values()
        .iter()
        .map(|&e| p.thermo.entropy_slope(e))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = slopes
        .iter()
        .zip(rate.values())
        .map(|(&g, &r)| g * r * vol)
        .sum();

    // Interior production: -sum w (dT)(d(1/T))/h^2 vol over links.
    let slope_field = ScalarField::new(p.grid.clone(), slopes.clone())?;
    let interior = -weighted_gradient_form(&t_field, &slope_field, weight)?;

    // Dirichlet half-links: J_out A (1/T_face - 1/T_cell); the same split
    // gives the boundary entropy inflow -J_out A / T_face.
    let mut boundary_production = 0.0;
    let mut boundary_flux = 0.0;
    for face in boundary_fluxes(&t_field, &p.bc, weight)? {
        let area = vol / p.grid.spacing()[face.axis];
        for ((&cell, &j_out), &t_face) in face
            .cells
            .iter()
            .zip(&face.outward)
            .zip(&face.face_value)
        {
            if j_out == 0.0 {
                continue;
            }
            let g_face = 1.0 / t_face;
            boundary_production += j_out * area * (g_face - slopes[cell]);
            boundary_flux -= j_out * area * g_face;
        }
    }

    Ok(EntropyBalance {
        total,
        boundary_flux,
        production: interior + boundary_production,
    })
}

/// One explicit Euler step of `d(rho)/dt = lap(sigma(rho)) - E.grad(sigma(rho))`.
pub fn step_zrp_pde(p: &ZrpPdeProblem, rho: &ScalarField, dt: f64) -> Result<ScalarField> {
    check_dt(dt, stable_dt_zrp(p, rho)?)?;
    let phi = p.sigma_field(rho)?;
    let mut rate = flux_divergence(&phi, &p.sigma_bc, |_, _, _| 1.0)?;
    if let Some(e) = &p.drift {
        let advect = directional_gradient(&phi, &p.sigma_bc, e)?;
        for (r, a) in rate.values_mut().iter_mut().zip(advect.values()) {
            *r -= a;
        }
    }
    let next: Vec<f64> = rho
        .values()
        .iter()
        .zip(rate.values())
        .map(|(&r, &dr)| r + dt * dr)
        .collect();
    let (lo, hi) = p.sigma.working_interval();
    for (i, &r) in next.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::PositivityLoss { cell: i, value: r });
        }
        if r < lo || r > hi {
            return Err(Error::OutOfRange {
                quantity: "density",
                value: r,
                lo,
                hi,
            });
        }
    }
    ScalarField::new(p.grid.clone(), next)
}

/// Thomas algorithm for a tridiagonal system; diagonals indexed by row.
fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Invalid("singular tridiagonal system".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Invalid("singular tridiagonal system".into()));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

/// Stationary profile of the density problem: solves the linear problem for
/// `sigma(rho_bar)` with the stepper's own stencil and ghost convention, then
/// inverts sigma. The result is the exact discrete fixed point of
/// `step_zrp_pde`. 1D only; at least one Dirichlet face is required (pure
/// ZeroFlux leaves a one-parameter family).
pub fn stationary_profile(p: &ZrpPdeProblem) -> Result<ScalarField> {
    if p.grid.dim() != 1 {
        return Err(Error::Unsupported(
            "stationary profiles are solved in 1D only".into(),
        ));
    }
    if !p.bc.has_dirichlet_face() {
        return Err(Error::Invalid(
            "stationary profile needs at least one Dirichlet face".into(),
        ));
    }
    let n = p.grid.extents()[0];
    let h = p.grid.spacing()[0];
    let inv_h2 = 1.0 / (h * h);
    let e_drift = p.drift.as_ref().map_or(0.0, |e| e[0]);
    let adv = e_drift / (2.0 * h);

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    for i in 0..n {
        if i > 0 {
            lower[i] = inv_h2 + adv;
        }
        if i + 1 < n {
            upper[i] = inv_h2 - adv;
        }
        diag[i] = -2.0 * inv_h2;
    }
    // Boundary rows: substitute the ghost for the missing neighbor. The
    // Dirichlet ghost is 2 w_face - s_cell in sigma space.
    match p.sigma_bc.face(0, false) {
        FaceCondition::Dirichlet(vals) => {
            let w = vals[0];
            diag[0] += -(inv_h2 + adv);
            rhs[0] -= 2.0 * w * (inv_h2 + adv);
        }
        FaceCondition::ZeroFlux => diag[0] += inv_h2 + adv,
    }
    match p.sigma_bc.face(0, true) {
        FaceCondition::Dirichlet(vals) => {
            let w = vals[0];
            diag[n - 1] += -(inv_h2 - adv);
            rhs[n - 1] -= 2.0 * w * (inv_h2 - adv);
        }
        FaceCondition::ZeroFlux => diag[n - 1] += inv_h2 - adv,
    }

    let sigma_bar = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let rho_bar = sigma_bar
        .iter()
        .map(|&s| p.sigma.inverse(s))
        .collect::<Result<Vec<f64>>>()?;
    ScalarField::new(p.grid.clone(), rho_bar)
}

/// Monotonicity classification of a functional along a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// All values indistinguishable from a fixed point.
    Stationary,
    /// Every increment negative (up to roundoff slack), net change negative.
    Decreasing,
    NotMonotone,
}

fn classify(values: &[f64]) -> Verdict {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-12 * scale;
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if increments.iter().all(|d| d.abs() <= zero_tol) {
        return Verdict::Stationary;
    }
    let net = values.last().unwrap() - values.first().unwrap();
    if increments.iter().all(|&d| d <= zero_tol) && net < -zero_tol {
        return Verdict::Decreasing;
    }
    Verdict::NotMonotone
}

/// Lyapunov audit of a density-problem trace.
#[derive(Debug, Clone)]
pub struct LyapunovReport {
    /// LDF value at each snapshot.
    pub free_energies: Vec<f64>,
    /// Dissipation rate at each interval midpoint state (nonpositive).
    pub dissipation: Vec<f64>,
    /// `|dF/dt - dissipation|` per interval.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub min_increment: f64,
    pub max_increment: f64,
    pub verdict: Verdict,
}

/// Quadrature of `-integral sigma(rho_bar) |grad h|^2 / h dx` at the state
/// `rho`, including the Dirichlet half-links (one-sided gradient from the
/// face where `h = 1`, over half a cell volume).
fn dissipation_rate(
    p: &ZrpPdeProblem,
    rho: &ScalarField,
    sigma_bar: &[f64],
) -> Result<f64> {
    let phi = p.sigma_field(rho)?;
    let h_vals: Vec<f64> = phi
        .values()
        .iter()
        .zip(sigma_bar)
        .map(|(&s, &sb)| s / sb)
        .collect();
    let weight_vals: Vec<f64> = sigma_bar
        .iter()
        .zip(&h_vals)
        .map(|(&sb, &h)| sb / h)
        .collect();
    let h_field = ScalarField::new(p.grid.clone(), h_vals.clone())?;
    let weight = ScalarField::new(p.grid.clone(), weight_vals.clone())?;
    let mut total = grad_sq_weighted(&h_field, &weight)?;

    let vol = p.grid.cell_volume();
    for axis in 0..p.grid.dim() {
        let spacing = p.grid.spacing()[axis];
        for high in [false, true] {
            if let FaceCondition::Dirichlet(vals) = p.sigma_bc.face(axis, high) {
                let cells = p.grid.face_cells(axis, high);
                for (slot, &cell) in cells.iter().enumerate() {
                    let w_face = vals[slot];
                    let g = (h_vals[cell] - 1.0) / (0.5 * spacing);
                    total += 0.5 * (w_face + weight_vals[cell]) * g * g * (0.5 * vol);
                }
            }
        }
    }
    Ok(-total)
}

/// Evaluate the LDF `F(rho_t)` along a trace and check its decrease against
/// the dissipation identity. The stationary profile is recomputed from the
/// problem; the trace must have at least two snapshots.
pub fn lyapunov_audit(p: &ZrpPdeProblem, trace: &EvolutionTrace) -> Result<LyapunovReport> {
    if trace.len() < 2 {
        return Err(Error::Invalid(
            "lyapunov audit needs at least two snapshots".into(),
        ));
    }
    let rho_bar = stationary_profile(p)?;
    trace.snapshots()[0].field.same_grid(&rho_bar)?;
    let sigma_bar = rho_bar
        .values()
        .iter()
        .map(|&r| p.sigma.value(r))
        .collect::<Result<Vec<f64>>>()?;

    let free_energies = trace
        .snapshots()
        .iter()
        .map(|s| ldf_zrp(&s.field, &rho_bar, &p.sigma))
        .collect::<Result<Vec<f64>>>()?;

    let mut dissipation = Vec::with_capacity(trace.len() - 1);
    let mut residuals = Vec::with_capacity(trace.len() - 1);
    for (k, pair) in trace.snapshots().windows(2).enumerate() {
        let dt = pair[1].time - pair[0].time;
        let mid_vals: Vec<f64> = pair[0]
            .field
            .values()
            .iter()
            .zip(pair[1].field.values())
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect();
        let mid = ScalarField::new(p.grid.clone(), mid_vals)?;
        let d = dissipation_rate(p, &mid, &sigma_bar)?;
        let df_dt = (free_energies[k + 1] - free_energies[k]) / dt;
        dissipation.push(d);
        residuals.push((df_dt - d).abs());
    }

    let max_residual = residuals.iter().fold(0.0f64, |m, &r| m.max(r));
    let increments: Vec<f64> = free_energies.windows(2).map(|w| w[1] - w[0]).collect();
    let min_increment = increments.iter().fold(f64::INFINITY, |m, &d| m.min(d));
    let max_increment = increments.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d));
    let verdict = classify(&free_energies);

    Ok(LyapunovReport {
        free_energies,
        dissipation,
        residuals,
        max_residual,
        min_increment,
        max_increment,
        verdict,
    })
}

/// Free-energy audit of a heat trace against a single bath.
#[derive(Debug, Clone)]
pub struct BathReport {
    pub bath_temperature: f64,
    pub free_energies: Vec<f64>,
    /// Trapezoid-averaged entropy production per interval (nonnegative).
    pub productions: Vec<f64>,
    /// `|dF/dt + production|` per interval.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub min_increment: f64,
    pub max_increment: f64,
    pub verdict: Verdict,
}

/// Evaluate `F = (E - T S_le)/T` along a heat trace coupled to one bath and
/// check `dF/dt = -production`.
pub fn bath_relaxation_audit(p: &HeatProblem, trace: &EvolutionTrace) -> Result<BathReport> {
    if trace.len() < 2 {
        return Err(Error::Invalid(
            "bath audit needs at least two snapshots".into(),
        ));
    }
    let t_bath = p.bath_temperature()?;
    let free_energies = trace
        .snapshots()
        .iter()
        .map(|s| free_energy_canonical(&s.field, &p.thermo, t_bath))
        .collect::<Result<Vec<f64>>>()?;
    let instant_production = trace
        .snapshots()
        .iter()
        .map(|s| entropy_balance(p, &s.field).map(|b| b.production))
        .collect::<Result<Vec<f64>>>()?;

    let mut productions = Vec::with_capacity(trace.len() - 1);
    let mut residuals = Vec::with_capacity(trace.len() - 1);
    for (k, pair) in trace.snapshots().windows(2).enumerate() {
        let dt = pair[1].time - pair[0].time;
        let prod = 0.5 * (instant_production[k] + instant_production[k + 1]);
        let df_dt = (free_energies[k + 1] - free_energies[k]) / dt;
        productions.push(prod);
        residuals.push((df_dt + prod).abs());
    }

    let max_residual = residuals.iter().fold(0.0f64, |m, &r| m.max(r));
    let increments: Vec<f64> = free_energies.windows(2).map(|w| w[1] - w[0]).collect();
    let min_increment = increments.iter().fold(f64::INFINITY, |m, &d| m.min(d));
    let max_increment = increments.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d));
    let verdict = classify(&free_energies);

    Ok(BathReport {
        bath_temperature: t_bath,
        free_energies,
        productions,
        residuals,
        max_residual,
        min_increment,
        max_increment,
        verdict,
    })
}

/// Run `steps` heat steps, recording every `record_every`-th state (plus the
/// initial and final ones).
pub fn evolve_heat(
    p: &HeatProblem,
    initial: ScalarField,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<EvolutionTrace> {
    if record_every == 0 {
        return Err(Error::Invalid("record_every must be at least 1".into()));
    }
    let mut trace = EvolutionTrace::new();
    let mut state = initial;
    trace.push(Snapshot {
        time: 0.0,
        field: state.clone(),
    })?;
    for k in 0..steps {
        state = step_heat(p, &state, dt)?;
        if (k + 1) % record_every == 0 || k + 1 == steps {
            trace.push(Snapshot {
                time: (k + 1) as f64 * dt,
                field: state.clone(),
            })?;
        }
    }
    Ok(trace)
}

/// Run `steps` density steps, recording every `record_every`-th state (plus
/// the initial and final ones).
pub fn evolve_zrp_pde(
    p: &ZrpPdeProblem,
    initial: ScalarField,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<EvolutionTrace> {
    if record_every == 0 {
        return Err(Error::Invalid("record_every must be at least 1".into()));
    }
    let mut trace = EvolutionTrace::new();
    let mut state = initial;
    trace.push(Snapshot {
        time: 0.0,
        field: state.clone(),
    })?;
    for k in 0..steps {
        state = step_zrp_pde(p, &state, dt)?;
        if (k + 1) % record_every == 0 || k + 1 == steps {
            trace.push(Snapshot {
                time: (k + 1) as f64 * dt,
                field: state.clone(),
            })?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::integrate;
    use crate::functionals::s_local_equilibrium;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EXACT_TOL: f64 = 1e-12;

    fn ideal_unit() -> ThermoModel {
        ThermoModel::IdealGas { heat_capacity: 1.0 }
    }

    fn random_positive_field(grid: &Grid, seed: u64, lo: f64, hi: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.cell_count())
            .map(|_| rng.random_range(lo..hi))
            .collect();
        ScalarField::new(grid.clone(), values).unwrap()
    }

    /// Random superposition of the three slowest modes, kept inside
    /// `[lo, hi]`: smooth at the grid scale, so time-discretization error is
    /// resolved from the first step on.
    fn smooth_positive_field(grid: &Grid, seed: u64, lo: f64, hi: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mid = 0.5 * (lo + hi);
        let amp = 0.4 * (hi - lo) / 3.0;
        let coeffs: Vec<f64> = (0..3).map(|_| rng.random_range(-amp..amp)).collect();
        let length: f64 = grid
            .extents()
            .iter()
            .zip(grid.spacing())
            .map(|(&n, &h)| n as f64 * h)
            .product();
        ScalarField::from_fn(grid.clone(), |x| {
            let s = x[0] / length;
            mid + coeffs
                .iter()
                .enumerate()
                .map(|(m, c)| c * (std::f64::consts::PI * (m + 1) as f64 * s).sin())
                .sum::<f64>()
        })
        .unwrap()
    }

    #[test]
    fn heat_step_three_cell_oracle() {
        // kappa = 1, T = e: one Euler step of the closed three-cell system
        // e = (1, 4, 13) adds dt * (3, 6, -9).
        let grid = Grid::line(3, 3.0).unwrap();
        let p = HeatProblem::new(
            grid.clone(),
            ideal_unit(),
            KappaModel::Constant(1.0),
            BoundaryCondition::zero_flux(&grid).unwrap(),
        )
        .unwrap();
        let e = ScalarField::new(grid, vec![1.0, 4.0, 13.0]).unwrap();
        let next = step_heat(&p, &e, 0.1).unwrap();
        for (got, want) in next.values().iter().zip([1.3, 4.6, 12.1]) {
            assert!((got - want).abs() < EXACT_TOL, "{got} vs {want}");
        }
    }

    #[test]
    fn heat_uniform_state_is_stationary() {
        let grid = Grid::line(6, 1.0).unwrap();
        let p = HeatProblem::new(
            grid.clone(),
            ThermoModel::ideal_monatomic(),
            KappaModel::Proportional(0.7),
            BoundaryCondition::dirichlet_1d(&grid, 2.0, 2.0).unwrap(),
        )
        .unwrap();
        let e = ScalarField::constant(grid, 3.0).unwrap(); // T = 2 everywhere
        let dt = stable_dt_heat(&p, &e).unwrap();
        let next = step_heat(&p, &e, dt).unwrap();
        for (a, b) in next.values().iter().zip(e.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn heat_conserves_energy_when_closed() {
        for seed in 0..5 {
            let grid = Grid::line(16, 2.0).unwrap();
            let p = HeatProblem::new(
                grid.clone(),
                ThermoModel::ideal_monatomic(),
                KappaModel::Proportional(1.0),
                BoundaryCondition::zero_flux(&grid).unwrap(),
            )
            .unwrap();
            let mut e = random_positive_field(&grid, seed, 0.5, 3.0);
            let e0 = integrate(&e);
            for _ in 0..50 {
                let dt = stable_dt_heat(&p, &e).unwrap();
                e = step_heat(&p, &e, dt).unwrap();
            }
            let drift = (integrate(&e) - e0).abs() / e0;
            assert!(drift < 1e-12, "energy drift {drift}");
        }
    }

    #[test]
    fn heat_two_block_equilibrates_and_entropy_grows() {
        let grid = Grid::line(16, 1.0).unwrap();
        let thermo = ThermoModel::ideal_monatomic();
        let p = HeatProblem::new(
            grid.clone(),
            thermo.clone(),
            KappaModel::Constant(1.0),
            BoundaryCondition::zero_flux(&grid).unwrap(),
        )
        .unwrap();
        let mut e = ScalarField::from_fn(grid.clone(), |x| if x[0] < 0.5 { 3.0 } else { 1.0 })
            .unwrap();
        let mut s_prev = s_local_equilibrium(&e, &thermo).unwrap();
        for _ in 0..4000 {
            let dt = stable_dt_heat(&p, &e).unwrap();
            e = step_heat(&p, &e, dt).unwrap();
            let s = s_local_equilibrium(&e, &thermo).unwrap();
            assert!(s >= s_prev - 1e-13, "entropy dropped: {s} < {s_prev}");
            s_prev = s;
        }
        let half: f64 = e.values()[..8].iter().sum();
        let other: f64 = e.values()[8..].iter().sum();
        assert!(
            (half - other).abs() < 1e-6,
            "halves did not equilibrate: {half} vs {other}"
        );
    }

    #[test]
    fn heat_dirichlet_relaxes_to_linear_temperature() {
        // Constant kappa: the stationary temperature interpolates the bath
        // values linearly across the domain.
        let grid = Grid::line(8, 1.0).unwrap();
        let thermo = ThermoModel::ideal_monatomic();
        let p = HeatProblem::new(
            grid.clone(),
            thermo.clone(),
            KappaModel::Constant(1.0),
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 2.0).unwrap(),
        )
        .unwrap();
        let mut e = ScalarField::constant(grid.clone(), 1.5).unwrap();
        for _ in 0..4000 {
            let dt = stable_dt_heat(&p, &e).unwrap();
            e = step_heat(&p, &e, dt).unwrap();
        }
        for (i, &ei) in e.values().iter().enumerate() {
            let x = grid.cell_center(i)[0];
            let t = thermo.temperature(ei).unwrap();
            assert!((t - (1.0 + x)).abs() < 1e-7, "T({x}) = {t}");
        }
    }

    #[test]
    fn heat_step_rejects_large_dt_and_bad_state() {
        let grid = Grid::line(4, 1.0).unwrap();
        let p = HeatProblem::new(
            grid.clone(),
            ideal_unit(),
            KappaModel::Constant(1.0),
            BoundaryCondition::zero_flux(&grid).unwrap(),
        )
        .unwrap();
        let e = ScalarField::constant(grid.clone(), 1.0).unwrap();
        let bound = stable_dt_heat(&p, &e).unwrap();
        match step_heat(&p, &e, 2.0 * bound) {
            Err(Error::TimeStepTooLarge { .. }) => {}
            other => panic!("expected TimeStepTooLarge, got {other:?}"),
        }
        let bad = ScalarField::new(grid, vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        assert!(step_heat(&p, &bad, 0.5 * bound).is_err());
    }

    #[test]
    fn entropy_balance_uniform_is_zero() {
        let grid = Grid::line(5, 1.0).unwrap();
        let p = HeatProblem::new(
            grid.clone(),
            ThermoModel::ideal_monatomic(),
            KappaModel::Constant(2.0),
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let e = ScalarField::constant(grid, 1.5).unwrap(); // T = 1 matches baths
        let b = entropy_balance(&p, &e).unwrap();
        assert_eq!(b.total, 0.0);
        assert_eq!(b.boundary_flux, 0.0);
        assert_eq!(b.production, 0.0);
    }

    #[test]
    fn entropy_balance_identity_holds_and_production_is_nonnegative() {
        // total = boundary_flux + production exactly, for closed, single-bath,
        // and two-bath conditions, in 1D and 2D, both kappa models.
        let grids = [Grid::line(12, 1.0).unwrap(), Grid::new(&[5, 4], &[0.2, 0.3]).unwrap()];
        for (gi, grid) in grids.iter().enumerate() {
            let bcs = vec![
                BoundaryCondition::zero_flux(grid).unwrap(),
                BoundaryCondition::uniform_dirichlet(grid, 1.3).unwrap(),
            ];
            for (bi, bc) in bcs.into_iter().enumerate() {
                for (ki, kappa) in [KappaModel::Constant(1.0), KappaModel::Proportional(0.8)]
                    .into_iter()
                    .enumerate()
                {
                    let p = HeatProblem::new(
                        grid.clone(),
                        ThermoModel::ideal_monatomic(),
                        kappa,
                        bc.clone(),
                    )
                    .unwrap();
                    let e = random_positive_field(grid, (gi * 10 + bi * 3 + ki) as u64, 0.8, 4.0);
                    let b = entropy_balance(&p, &e).unwrap();
                    let scale = b.total.abs().max(b.production.abs()).max(1.0);
                    assert!(
                        (b.total - b.boundary_flux - b.production).abs() < 1e-12 * scale,
                        "balance identity broken: {b:?}"
                    );
                    assert!(b.production >= 0.0, "negative production: {b:?}");
                    if bi == 0 {
                        assert_eq!(b.boundary_flux, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn bath_entropy_flux_matches_energy_flow() {
        // With a single bath, boundary_flux = (dE/dt) / T_bath exactly; dE/dt
        // is read off an Euler step because E is linear in the state.
        let grid = Grid::line(9, 1.0).unwrap();
        let t_bath = 1.7;
        let p = HeatProblem::new(
            grid.clone(),
            ThermoModel::ideal_monatomic(),
            KappaModel::Proportional(1.0),
            BoundaryCondition::dirichlet_1d(&grid, t_bath, t_bath).unwrap(),
        )
        .unwrap();
        let e = random_positive_field(&grid, 7, 1.0, 3.0);
        let b = entropy_balance(&p, &e).unwrap();
        let dt = stable_dt_heat(&p, &e).unwrap();
        let de_dt = (integrate(&step_heat(&p, &e, dt).unwrap()) - integrate(&e)) / dt;
        assert!(
            (b.boundary_flux - de_dt / t_bath).abs() < 1e-10 * (1.0 + de_dt.abs()),
            "flux {} vs dE/dt / T {}",
            b.boundary_flux,
            de_dt / t_bath
        );
    }

    #[test]
    fn bath_audit_free_energy_decreases() {
        let grid = Grid::line(24, 1.0).unwrap();
        let p = HeatProblem::new(
            grid.clone(),
            ThermoModel::ideal_monatomic(),
            KappaModel::Constant(1.0),
            BoundaryCondition::dirichlet_1d(&grid, 1.5, 1.5).unwrap(),
        )
        .unwrap();
        // A state rough at the grid scale: monotone decrease must hold from
        // the first step even though the trapezoid production average is not
        // yet resolved there.
        let e0 = random_positive_field(&grid, 11, 1.0, 4.0);
        let dt = stable_dt_heat(&p, &e0).unwrap();
        let trace = evolve_heat(&p, e0, dt, 400, 1).unwrap();
        let report = bath_relaxation_audit(&p, &trace).unwrap();
        assert_eq!(report.verdict, Verdict::Decreasing, "report: {report:?}");
        assert!(report.max_increment < 0.0);
        assert!(report.productions.iter().all(|&p| p >= 0.0));

        // On smooth, boundary-compatible states the identity
        // dF/dt = -production holds up to the Euler step error, which the
        // stability bound ties to the cell size: doubling the resolution
        // must shrink the residual about fourfold. A warm-up leg first lets
        // the wall layer from the initial data relax away at every
        // resolution before the audited window starts.
        let run = |cells: usize| -> f64 {
            let grid = Grid::line(cells, 1.0).unwrap();
            let p = HeatProblem::new(
                grid.clone(),
                ThermoModel::ideal_monatomic(),
                KappaModel::Constant(1.0),
                BoundaryCondition::dirichlet_1d(&grid, 1.5, 1.5).unwrap(),
            )
            .unwrap();
            let e0 = smooth_positive_field(&grid, 12, 1.0, 4.0);
            let dt = stable_dt_heat(&p, &e0).unwrap();
            let warm_steps = (0.01 / dt).ceil() as usize;
            let warm = evolve_heat(&p, e0, dt, warm_steps, warm_steps).unwrap();
            let start = warm.last().unwrap().field.clone();
            let steps = (0.01 / dt).ceil() as usize;
            let trace = evolve_heat(&p, start, dt, steps, 1).unwrap();
            let report = bath_relaxation_audit(&p, &trace).unwrap();
            assert_eq!(report.verdict, Verdict::Decreasing);
            report.max_residual
        };
        let coarse = run(24);
        let fine = run(48);
        assert!(
            fine < coarse / 3.0,
            "residuals {coarse} -> {fine} did not shrink with resolution"
        );
    }

    #[test]
    fn bath_audit_uniform_at_bath_temperature_is_stationary() {
        let grid = Grid::line(6, 1.0).unwrap();
        let thermo = ThermoModel::ideal_monatomic();
        let p = HeatProblem::new(
            grid.clone(),
            thermo.clone(),
            KappaModel::Constant(1.0),
            BoundaryCondition::dirichlet_1d(&grid, 1.5, 1.5).unwrap(),
        )
        .unwrap();
        let e0 = ScalarField::constant(grid, thermo.energy_from_temperature(1.5).unwrap())
            .unwrap();
        let dt = stable_dt_heat(&p, &e0).unwrap();
        let trace = evolve_heat(&p, e0, dt, 5, 1).unwrap();
        let report = bath_relaxation_audit(&p, &trace).unwrap();
        assert_eq!(report.verdict, Verdict::Stationary);
    }

    #[test]
    fn zrp_step_matches_heat_step_bitwise() {
        // sigma = identity against kappa = 1 with T = e: the two steppers
        // share the flux kernel, so the states stay bit-identical.
        let grid = Grid::line(17, 1.0).unwrap();
        let heat = HeatProblem::new(
            grid.clone(),
            ideal_unit(),
            KappaModel::Constant(1.0),
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 2.0).unwrap(),
        )
        .unwrap();
        let zrp = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Identity,
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 2.0).unwrap(),
            None,
        )
        .unwrap();
        let mut a = random_positive_field(&grid, 3, 0.5, 2.5);
        let mut b = a.clone();
        let dt_a = stable_dt_heat(&heat, &a).unwrap();
        let dt_b = stable_dt_zrp(&zrp, &b).unwrap();
        assert_eq!(dt_a.to_bits(), dt_b.to_bits());
        for _ in 0..10 {
            a = step_heat(&heat, &a, dt_a).unwrap();
            b = step_zrp_pde(&zrp, &b, dt_b).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn zrp_stationary_profile_is_a_fixed_point() {
        let grid = Grid::line(16, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::power(2.0).unwrap(),
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 2.0).unwrap(),
            None,
        )
        .unwrap();
        let rho_bar = stationary_profile(&p).unwrap();
        // sigma(rho_bar) interpolates the face values of sigma linearly.
        for (i, &r) in rho_bar.values().iter().enumerate() {
            let x = grid.cell_center(i)[0];
            let want = (1.0 + 3.0 * x).sqrt();
            assert!((r - want).abs() < 1e-12, "rho_bar({x}) = {r} vs {want}");
        }
        let dt = stable_dt_zrp(&p, &rho_bar).unwrap();
        let next = step_zrp_pde(&p, &rho_bar, dt).unwrap();
        for (a, b) in next.values().iter().zip(rho_bar.values()) {
            assert!((a - b).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn zrp_stationary_profile_constant_when_boundaries_match() {
        let grid = Grid::line(7, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Saturating,
            BoundaryCondition::dirichlet_1d(&grid, 0.8, 0.8).unwrap(),
            None,
        )
        .unwrap();
        let rho_bar = stationary_profile(&p).unwrap();
        for &r in rho_bar.values() {
            assert!((r - 0.8).abs() < 1e-13);
        }
    }

    #[test]
    fn zrp_stationary_profile_with_drift_matches_closed_form() {
        // With sigma = identity and constant drift E, the discrete stationary
        // state is A + B r^i with r = (1 + E h/2)/(1 - E h/2), pinned so the
        // face midpoints hit the boundary data.
        let n = 20;
        let grid = Grid::line(n, 1.0).unwrap();
        let e_drift = 1.0;
        let h = grid.spacing()[0];
        let (w_l, w_r) = (1.0, 2.0);
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Identity,
            BoundaryCondition::dirichlet_1d(&grid, w_l, w_r).unwrap(),
            Some(vec![e_drift]),
        )
        .unwrap();
        let rho_bar = stationary_profile(&p).unwrap();

        let r = (1.0 + e_drift * h / 2.0) / (1.0 - e_drift * h / 2.0);
        // Face conditions: w_l = A + B (r+1)/(2r), w_r = A + B r^{n-1}(1+r)/2.
        let c_l = (r + 1.0) / (2.0 * r);
        let c_r = r.powi(n as i32 - 1) * (1.0 + r) / 2.0;
        let b_coef = (w_r - w_l) / (c_r - c_l);
        let a_coef = w_l - b_coef * c_l;
        for (i, &got) in rho_bar.values().iter().enumerate() {
            let want = a_coef + b_coef * r.powi(i as i32);
            assert!((got - want).abs() < 1e-10, "cell {i}: {got} vs {want}");
        }
        // And it is a fixed point of the stepper.
        let dt = stable_dt_zrp(&p, &rho_bar).unwrap();
        let next = step_zrp_pde(&p, &rho_bar, dt).unwrap();
        for (a, b) in next.values().iter().zip(rho_bar.values()) {
            assert!((a - b).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn zrp_relaxes_to_stationary_profile() {
        let grid = Grid::line(12, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::power(2.0).unwrap(),
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 2.0).unwrap(),
            None,
        )
        .unwrap();
        let rho_bar = stationary_profile(&p).unwrap();
        let mut rho = rho_bar
            .map(|r| r * 1.25)
            .unwrap();
        for _ in 0..6000 {
            let dt = stable_dt_zrp(&p, &rho).unwrap();
            rho = step_zrp_pde(&p, &rho, dt).unwrap();
        }
        for (a, b) in rho.values().iter().zip(rho_bar.values()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zrp_step_rejects_instability_and_nonpositive_state() {
        let grid = Grid::line(5, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Identity,
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 1.0).unwrap(),
            None,
        )
        .unwrap();
        let rho = ScalarField::constant(grid.clone(), 1.0).unwrap();
        let bound = stable_dt_zrp(&p, &rho).unwrap();
        match step_zrp_pde(&p, &rho, 1.5 * bound) {
            Err(Error::TimeStepTooLarge { .. }) => {}
            other => panic!("expected TimeStepTooLarge, got {other:?}"),
        }
        let bad = ScalarField::new(grid, vec![1.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(step_zrp_pde(&p, &bad, 0.5 * bound).is_err());
    }

    #[test]
    fn stationary_profile_rejects_unsupported_setups() {
        let grid2 = Grid::new(&[4, 4], &[0.25, 0.25]).unwrap();
        let p2 = ZrpPdeProblem::new(
            grid2.clone(),
            SigmaModel::Identity,
            BoundaryCondition::uniform_dirichlet(&grid2, 1.0).unwrap(),
            None,
        )
        .unwrap();
        assert!(matches!(stationary_profile(&p2), Err(Error::Unsupported(_))));

        let grid1 = Grid::line(5, 1.0).unwrap();
        let closed = ZrpPdeProblem::new(
            grid1.clone(),
            SigmaModel::Identity,
            BoundaryCondition::zero_flux(&grid1).unwrap(),
            None,
        )
        .unwrap();
        assert!(stationary_profile(&closed).is_err());
    }

    #[test]
    fn lyapunov_audit_stationary_trace() {
        let grid = Grid::line(10, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Saturating,
            BoundaryCondition::dirichlet_1d(&grid, 0.5, 1.5).unwrap(),
            None,
        )
        .unwrap();
        let rho_bar = stationary_profile(&p).unwrap();
        let dt = stable_dt_zrp(&p, &rho_bar).unwrap();
        let trace = evolve_zrp_pde(&p, rho_bar, dt, 3, 1).unwrap();
        let report = lyapunov_audit(&p, &trace).unwrap();
        assert_eq!(report.verdict, Verdict::Stationary, "{report:?}");
        assert!(report.free_energies.iter().all(|f| f.abs() < 1e-12));
        assert!(report.dissipation.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn lyapunov_audit_decreasing_with_small_residual() {
        // sigma = identity, flat stationary profile, sine perturbation: F
        // decreases strictly and the dissipation identity holds to 1e-4 at
        // dx = 1/200.
        let n = 200;
        let grid = Grid::line(n, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Identity,
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 1.0).unwrap(),
            None,
        )
        .unwrap();
        let rho0 = ScalarField::from_fn(grid, |x| {
            1.0 + 0.5 * (std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let dt = stable_dt_zrp(&p, &rho0).unwrap();
        let trace = evolve_zrp_pde(&p, rho0, dt, 200, 1).unwrap();
        let report = lyapunov_audit(&p, &trace).unwrap();
        assert_eq!(report.verdict, Verdict::Decreasing, "{report:?}");
        assert!(report.max_increment < 0.0);
        assert!(report.dissipation.iter().all(|&d| d <= 0.0));
        assert!(
            report.max_residual < 1e-4,
            "residual {}",
            report.max_residual
        );
    }

    #[test]
    fn lyapunov_residual_shrinks_with_resolution() {
        // Halving dx (with dt tied to dx^2) should cut the dissipation
        // residual by roughly 4; require at least 3.
        let run = |n: usize| {
            let grid = Grid::line(n, 1.0).unwrap();
            let p = ZrpPdeProblem::new(
                grid.clone(),
                SigmaModel::power(2.0).unwrap(),
                BoundaryCondition::dirichlet_1d(&grid, 1.0, 2.0).unwrap(),
                None,
            )
            .unwrap();
            let rho0 = ScalarField::from_fn(grid.clone(), |x| {
                let base = (1.0 + 3.0 * x[0]).sqrt();
                base * (1.0 + 0.2 * (2.0 * std::f64::consts::PI * x[0]).sin())
            })
            .unwrap();
            let dt = stable_dt_zrp(&p, &rho0).unwrap();
            let t_end = 1e-3;
            let steps = (t_end / dt).ceil() as usize;
            let trace = evolve_zrp_pde(&p, rho0, dt, steps, 1).unwrap();
            lyapunov_audit(&p, &trace).unwrap().max_residual
        };
        let coarse = run(50);
        let fine = run(100);
        assert!(
            coarse / fine >= 3.0,
            "residual ratio {} (coarse {coarse}, fine {fine})",
            coarse / fine
        );
    }

    #[test]
    fn evolve_records_requested_snapshots() {
        let grid = Grid::line(4, 1.0).unwrap();
        let p = ZrpPdeProblem::new(
            grid.clone(),
            SigmaModel::Identity,
            BoundaryCondition::dirichlet_1d(&grid, 1.0, 1.0).unwrap(),
            None,
        )
        .unwrap();
        let rho0 = ScalarField::constant(grid, 1.0).unwrap();
        let dt = 1e-3;
        let trace = evolve_zrp_pde(&p, rho0, dt, 25, 10).unwrap();
        let times: Vec<f64> = trace.snapshots().iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 4);
        assert!((times[1] - 10.0 * dt).abs() < 1e-15);
        assert!((times[3] - 25.0 * dt).abs() < 1e-15);
    }
}
