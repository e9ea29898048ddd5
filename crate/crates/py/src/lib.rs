//! Python bindings for the library: grids and fields, the thermodynamic
//! and mobility models, heat and density transport with their audits, the
//! discrete-velocity BGK gas, and the zero-range process.
//!
//! Each class wraps the corresponding native type and methods return plain
//! Python data (floats, lists, dicts), so results feed straight into numpy
//! or matplotlib without conversion helpers. Errors raised by the native
//! layer surface as `ValueError` with the original message.

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use entrolab::error::Error as CoreError;
use entrolab::fields as cf;
use entrolab::functionals as cfn;
use entrolab::kinetic as ck;
use entrolab::transport as ct;
use entrolab::zrp as cz;

fn err(e: CoreError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn verdict_name(v: ct::Verdict) -> &'static str {
    match v {
        ct::Verdict::Stationary => "stationary",
        ct::Verdict::Decreasing => "decreasing",
        ct::Verdict::NotMonotone => "not-monotone",
    }
}

/// Regular cell-centered grid.
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: cf::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(extents: Vec<usize>, spacing: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: cf::Grid::new(&extents, &spacing).map_err(err)?,
        })
    }

    /// 1D grid of `cells` cells spanning `[0, length]`.
    #[staticmethod]
    fn line(cells: usize, length: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cf::Grid::line(cells, length).map_err(err)?,
        })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn extents(&self) -> Vec<usize> {
        self.inner.extents().to_vec()
    }

    fn spacing(&self) -> Vec<f64> {
        self.inner.spacing().to_vec()
    }

    fn cell_count(&self) -> usize {
        self.inner.cell_count()
    }

    fn cell_volume(&self) -> f64 {
        self.inner.cell_volume()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(extents={:?}, spacing={:?})",
            self.inner.extents(),
            self.inner.spacing()
        )
    }
}

/// One value per grid cell.
#[pyclass(name = "ScalarField", frozen, from_py_object)]
#[derive(Clone)]
struct PyScalarField {
    inner: cf::ScalarField,
}

#[pymethods]
impl PyScalarField {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: cf::ScalarField::new(grid.inner.clone(), values).map_err(err)?,
        })
    }

    #[staticmethod]
    fn constant(grid: &PyGrid, value: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cf::ScalarField::constant(grid.inner.clone(), value).map_err(err)?,
        })
    }

    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid().clone(),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Volume integral of the field.
    fn integrate(&self) -> f64 {
        cf::integrate(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("ScalarField(cells={})", self.inner.len())
    }
}

/// Concave entropy density `s(e)` with its derived temperature relations.
#[pyclass(name = "ThermoModel", frozen)]
struct PyThermoModel {
    inner: cfn::ThermoModel,
}

#[pymethods]
impl PyThermoModel {
    /// `s(e) = (3/2) log e`.
    #[staticmethod]
    fn ideal_monatomic() -> Self {
        Self {
            inner: cfn::ThermoModel::ideal_monatomic(),
        }
    }

    /// `s(e) = c log e` with heat capacity `c`.
    #[staticmethod]
    fn ideal_gas(heat_capacity: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cfn::ThermoModel::ideal_gas(heat_capacity).map_err(err)?,
        })
    }

    /// Interpolate `(e, s)` sample points into a tabulated model.
    #[staticmethod]
    fn tabulated(points: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: cfn::ThermoModel::Tabulated(cfn::EntropyTable::new(&points).map_err(err)?),
        })
    }

    fn entropy_density(&self, e: f64) -> PyResult<f64> {
        self.inner.entropy_density(e).map_err(err)
    }

    fn entropy_slope(&self, e: f64) -> PyResult<f64> {
        self.inner.entropy_slope(e).map_err(err)
    }

    fn temperature(&self, e: f64) -> PyResult<f64> {
        self.inner.temperature(e).map_err(err)
    }

    fn temperature_slope(&self, e: f64) -> PyResult<f64> {
        self.inner.temperature_slope(e).map_err(err)
    }

    fn energy_from_temperature(&self, t: f64) -> PyResult<f64> {
        self.inner.energy_from_temperature(t).map_err(err)
    }

    fn working_range(&self) -> (f64, f64) {
        self.inner.working_range()
    }
}

/// Thermal conductivity as a function of temperature.
#[pyclass(name = "KappaModel", frozen)]
struct PyKappaModel {
    inner: ct::KappaModel,
}

#[pymethods]
impl PyKappaModel {
    #[staticmethod]
    fn constant(coefficient: f64) -> Self {
        Self {
            inner: ct::KappaModel::Constant(coefficient),
        }
    }

    /// `kappa(T) = coefficient * T`.
    #[staticmethod]
    fn proportional(coefficient: f64) -> Self {
        Self {
            inner: ct::KappaModel::Proportional(coefficient),
        }
    }

    fn value(&self, t: f64) -> f64 {
        self.inner.value(t)
    }
}

/// Mobility `sigma(rho)` of the density equation.
#[pyclass(name = "SigmaModel", frozen)]
struct PySigmaModel {
    inner: cf::SigmaModel,
}

#[pymethods]
impl PySigmaModel {
    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: cf::SigmaModel::Identity,
        }
    }

    #[staticmethod]
    fn power(exponent: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cf::SigmaModel::power(exponent).map_err(err)?,
        })
    }

    /// `sigma(z) = z / (1 + z)`.
    #[staticmethod]
    fn saturating() -> Self {
        Self {
            inner: cf::SigmaModel::Saturating,
        }
    }

    /// Interpolate `(rho, sigma)` sample points into a tabulated model.
    #[staticmethod]
    fn table(points: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: cf::SigmaModel::Table(cf::SigmaTable::new(&points).map_err(err)?),
        })
    }

    /// Tabulate the mobility induced by the jump rates of a zero-range
    /// model, truncating site occupations at `n_max`.
    #[staticmethod]
    fn from_rates(model: &PyZrpModel, n_max: usize) -> PyResult<Self> {
        Ok(Self {
            inner: cz::sigma_from_rates(&model.inner, n_max).map_err(err)?,
        })
    }

    fn value(&self, rho: f64) -> PyResult<f64> {
        self.inner.value(rho).map_err(err)
    }

    fn derivative(&self, rho: f64) -> PyResult<f64> {
        self.inner.derivative(rho).map_err(err)
    }

    fn inverse(&self, w: f64) -> PyResult<f64> {
        self.inner.inverse(w).map_err(err)
    }

    fn working_interval(&self) -> (f64, f64) {
        self.inner.working_interval()
    }
}

/// Per-face boundary data: zero-flux or Dirichlet values.
#[pyclass(name = "BoundaryCondition", frozen)]
struct PyBoundaryCondition {
    inner: cf::BoundaryCondition,
}

#[pymethods]
impl PyBoundaryCondition {
    #[staticmethod]
    fn zero_flux(grid: &PyGrid) -> PyResult<Self> {
        Ok(Self {
            inner: cf::BoundaryCondition::zero_flux(&grid.inner).map_err(err)?,
        })
    }

    #[staticmethod]
    fn uniform_dirichlet(grid: &PyGrid, value: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cf::BoundaryCondition::uniform_dirichlet(&grid.inner, value).map_err(err)?,
        })
    }

    #[staticmethod]
    fn dirichlet_1d(grid: &PyGrid, left: f64, right: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cf::BoundaryCondition::dirichlet_1d(&grid.inner, left, right).map_err(err)?,
        })
    }

    fn is_dirichlet_everywhere(&self) -> bool {
        self.inner.is_dirichlet_everywhere()
    }

    fn has_dirichlet_face(&self) -> bool {
        self.inner.has_dirichlet_face()
    }
}

/// Recorded states of an evolution, with strictly increasing times.
#[pyclass(name = "EvolutionTrace", frozen)]
struct PyTrace {
    inner: ct::EvolutionTrace,
}

#[pymethods]
impl PyTrace {
    #[new]
    fn new(snapshots: Vec<(f64, PyScalarField)>) -> PyResult<Self> {
        let mut inner = ct::EvolutionTrace::new();
        for (time, field) in snapshots {
            inner
                .push(ct::Snapshot {
                    time,
                    field: field.inner,
                })
                .map_err(err)?;
        }
        Ok(Self { inner })
    }

    fn times(&self) -> Vec<f64> {
        self.inner.snapshots().iter().map(|s| s.time).collect()
    }

    /// Field values of every snapshot, one list per time.
    fn profiles(&self) -> Vec<Vec<f64>> {
        self.inner
            .snapshots()
            .iter()
            .map(|s| s.field.values().to_vec())
            .collect()
    }

    fn field(&self, k: usize) -> PyResult<PyScalarField> {
        let snap = self
            .inner
            .snapshots()
            .get(k)
            .ok_or_else(|| PyIndexError::new_err(format!("snapshot {k} of {}", self.inner.len())))?;
        Ok(PyScalarField {
            inner: snap.field.clone(),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Energy-density diffusion `de/dt = div(kappa(T) grad T)`.
#[pyclass(name = "HeatProblem", frozen)]
struct PyHeatProblem {
    inner: ct::HeatProblem,
}

#[pymethods]
impl PyHeatProblem {
    #[new]
    fn new(
        grid: &PyGrid,
        thermo: &PyThermoModel,
        kappa: &PyKappaModel,
        bc: &PyBoundaryCondition,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: ct::HeatProblem::new(
                grid.inner.clone(),
                thermo.inner.clone(),
                kappa.inner.clone(),
                bc.inner.clone(),
            )
            .map_err(err)?,
        })
    }

    /// Common temperature of all Dirichlet faces.
    fn bath_temperature(&self) -> PyResult<f64> {
        self.inner.bath_temperature().map_err(err)
    }

    fn stable_dt(&self, energy: &PyScalarField) -> PyResult<f64> {
        ct::stable_dt_heat(&self.inner, &energy.inner).map_err(err)
    }

    fn step(&self, energy: &PyScalarField, dt: f64) -> PyResult<PyScalarField> {
        Ok(PyScalarField {
            inner: ct::step_heat(&self.inner, &energy.inner, dt).map_err(err)?,
        })
    }

    #[pyo3(signature = (initial, dt, steps, record_every = 1))]
    fn evolve(
        &self,
        initial: &PyScalarField,
        dt: f64,
        steps: usize,
        record_every: usize,
    ) -> PyResult<PyTrace> {
        Ok(PyTrace {
            inner: ct::evolve_heat(&self.inner, initial.inner.clone(), dt, steps, record_every)
                .map_err(err)?,
        })
    }

    /// Split `dS_le/dt` into boundary flux and nonnegative production.
    fn entropy_balance<'py>(
        &self,
        py: Python<'py>,
        energy: &PyScalarField,
    ) -> PyResult<Bound<'py, PyDict>> {
        let b = ct::entropy_balance(&self.inner, &energy.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("total", b.total)?;
        d.set_item("boundary_flux", b.boundary_flux)?;
        d.set_item("production", b.production)?;
        Ok(d)
    }

    /// Check `dF/dt = -production` for the canonical free energy along a
    /// trace coupled to a single bath.
    fn bath_audit<'py>(&self, py: Python<'py>, trace: &PyTrace) -> PyResult<Bound<'py, PyDict>> {
        let r = ct::bath_relaxation_audit(&self.inner, &trace.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("bath_temperature", r.bath_temperature)?;
        d.set_item("free_energies", r.free_energies)?;
        d.set_item("productions", r.productions)?;
        d.set_item("residuals", r.residuals)?;
        d.set_item("max_residual", r.max_residual)?;
        d.set_item("min_increment", r.min_increment)?;
        d.set_item("max_increment", r.max_increment)?;
        d.set_item("verdict", verdict_name(r.verdict))?;
        Ok(d)
    }
}

/// Density diffusion `drho/dt = Lap sigma(rho)`, optionally with a drift
/// tilt on the mobility flux.
#[pyclass(name = "ZrpPdeProblem", frozen)]
struct PyZrpPdeProblem {
    inner: ct::ZrpPdeProblem,
}

#[pymethods]
impl PyZrpPdeProblem {
    #[new]
    #[pyo3(signature = (grid, sigma, bc, drift = None))]
    fn new(
        grid: &PyGrid,
        sigma: &PySigmaModel,
        bc: &PyBoundaryCondition,
        drift: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: ct::ZrpPdeProblem::new(
                grid.inner.clone(),
                sigma.inner.clone(),
                bc.inner.clone(),
                drift,
            )
            .map_err(err)?,
        })
    }

    fn stable_dt(&self, rho: &PyScalarField) -> PyResult<f64> {
        ct::stable_dt_zrp(&self.inner, &rho.inner).map_err(err)
    }

    fn step(&self, rho: &PyScalarField, dt: f64) -> PyResult<PyScalarField> {
        Ok(PyScalarField {
            inner: ct::step_zrp_pde(&self.inner, &rho.inner, dt).map_err(err)?,
        })
    }

    #[pyo3(signature = (initial, dt, steps, record_every = 1))]
    fn evolve(
        &self,
        initial: &PyScalarField,
        dt: f64,
        steps: usize,
        record_every: usize,
    ) -> PyResult<PyTrace> {
        Ok(PyTrace {
            inner: ct::evolve_zrp_pde(&self.inner, initial.inner.clone(), dt, steps, record_every)
                .map_err(err)?,
        })
    }

    /// Stationary profile selected by the Dirichlet data.
    fn stationary_profile(&self) -> PyResult<PyScalarField> {
        Ok(PyScalarField {
            inner: ct::stationary_profile(&self.inner).map_err(err)?,
        })
    }

    /// Check `dF/dt = dissipation` for the profile rate functional along
    /// a trace.
    fn lyapunov_audit<'py>(
        &self,
        py: Python<'py>,
        trace: &PyTrace,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = ct::lyapunov_audit(&self.inner, &trace.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("free_energies", r.free_energies)?;
        d.set_item("dissipation", r.dissipation)?;
        d.set_item("residuals", r.residuals)?;
        d.set_item("max_residual", r.max_residual)?;
        d.set_item("min_increment", r.min_increment)?;
        d.set_item("max_increment", r.max_increment)?;
        d.set_item("verdict", verdict_name(r.verdict))?;
        Ok(d)
    }
}

/// Quadrature nodes and weights in velocity space.
#[pyclass(name = "VelocityGrid", frozen)]
struct PyVelocityGrid {
    inner: cfn::VelocityGrid,
}

#[pymethods]
impl PyVelocityGrid {
    /// Uniform tensor grid with `per_axis` nodes per axis on
    /// `[-v_max, v_max]^dim`.
    #[staticmethod]
    fn uniform(dim: usize, per_axis: usize, v_max: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cfn::VelocityGrid::uniform(dim, per_axis, v_max).map_err(err)?,
        })
    }

    /// Uniform grid sized to resolve a Maxwellian at the given temperature.
    #[staticmethod]
    fn thermal(dim: usize, temperature: f64, mass: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cfn::VelocityGrid::thermal(dim, temperature, mass).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_nodes(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: cfn::VelocityGrid::from_nodes(dim, nodes, weights).map_err(err)?,
        })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn node(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.len() {
            return Err(PyIndexError::new_err(format!(
                "node {i} of {}",
                self.inner.len()
            )));
        }
        Ok(self.inner.node(i).to_vec())
    }

    fn weight(&self, i: usize) -> PyResult<f64> {
        if i >= self.inner.len() {
            return Err(PyIndexError::new_err(format!(
                "node {i} of {}",
                self.inner.len()
            )));
        }
        Ok(self.inner.weight(i))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Spatially uniform gas state: one density per velocity node.
#[pyclass(name = "KineticState", frozen, from_py_object)]
#[derive(Clone)]
struct PyKineticState {
    inner: ck::KineticState,
}

#[pymethods]
impl PyKineticState {
    #[new]
    fn new(vgrid: &PyVelocityGrid, mass: f64, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: ck::KineticState::new(vgrid.inner.clone(), mass, values).map_err(err)?,
        })
    }

    /// Discrete Maxwellian whose quadrature moments match the targets.
    #[staticmethod]
    fn equilibrium(
        vgrid: &PyVelocityGrid,
        mass: f64,
        particles: f64,
        momentum: Vec<f64>,
        energy: f64,
    ) -> PyResult<Self> {
        let target = cfn::Moments {
            particles,
            momentum,
            energy,
        };
        Ok(Self {
            inner: ck::equilibrium_state(&vgrid.inner, mass, &target).map_err(err)?,
        })
    }

    fn vgrid(&self) -> PyVelocityGrid {
        PyVelocityGrid {
            inner: self.inner.vgrid().clone(),
        }
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn moments<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner.moments();
        let d = PyDict::new(py);
        d.set_item("particles", m.particles)?;
        d.set_item("momentum", m.momentum)?;
        d.set_item("energy", m.energy)?;
        Ok(d)
    }

    /// Gibbs entropy `-sum w f log f` over the velocity nodes.
    fn entropy(&self) -> f64 {
        self.inner.entropy()
    }
}

/// One BGK relaxation step `f + dt/tau (M[f] - f)`.
#[pyfunction]
fn step_bgk(state: &PyKineticState, tau: f64, dt: f64) -> PyResult<PyKineticState> {
    Ok(PyKineticState {
        inner: ck::step_bgk(&state.inner, tau, dt).map_err(err)?,
    })
}

/// Entropy increments and conservation drifts of a list of states.
#[pyfunction]
fn h_theorem_audit<'py>(py: Python<'py>, states: Vec<PyKineticState>) -> PyResult<Bound<'py, PyDict>> {
    let native: Vec<ck::KineticState> = states.into_iter().map(|s| s.inner).collect();
    let r = ck::h_theorem_audit(&native).map_err(err)?;
    let drift = PyDict::new(py);
    drift.set_item("particles", r.drift.particles)?;
    drift.set_item("momentum", r.drift.momentum)?;
    drift.set_item("energy", r.drift.energy)?;
    let d = PyDict::new(py);
    d.set_item("entropies", r.entropies)?;
    d.set_item("increments", r.increments)?;
    d.set_item("min_increment", r.min_increment)?;
    d.set_item("max_increment", r.max_increment)?;
    d.set_item("drift", drift)?;
    d.set_item("monotone", r.monotone)?;
    Ok(d)
}

/// Jump rate `g(n)` out of a site holding `n` particles.
#[pyclass(name = "RateFunction", frozen)]
struct PyRateFunction {
    inner: cz::RateFunction,
}

#[pymethods]
impl PyRateFunction {
    /// `g(n) = n`.
    #[staticmethod]
    fn linear() -> Self {
        Self {
            inner: cz::RateFunction::Linear,
        }
    }

    /// `g(n) = 1` for `n >= 1`.
    #[staticmethod]
    fn constant() -> Self {
        Self {
            inner: cz::RateFunction::Constant,
        }
    }

    /// `g(n) = values[n - 1]`, extended by the last entry.
    #[staticmethod]
    fn table(values: Vec<f64>) -> Self {
        Self {
            inner: cz::RateFunction::Table(values),
        }
    }

    fn value(&self, n: u64) -> f64 {
        self.inner.value(n)
    }
}

/// Open zero-range chain with reservoir fugacities at both ends.
#[pyclass(name = "ZrpModel", frozen)]
struct PyZrpModel {
    inner: cz::ZrpModel,
}

#[pymethods]
impl PyZrpModel {
    #[new]
    fn new(sites: usize, rate: &PyRateFunction, z_left: f64, z_right: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cz::ZrpModel::new(sites, rate.inner.clone(), z_left, z_right).map_err(err)?,
        })
    }

    fn sites(&self) -> usize {
        self.inner.sites()
    }

    fn rate(&self) -> PyRateFunction {
        PyRateFunction {
            inner: self.inner.rate().clone(),
        }
    }

    fn z_left(&self) -> f64 {
        self.inner.z_left()
    }

    fn z_right(&self) -> f64 {
        self.inner.z_right()
    }
}

/// Occupation numbers and the elapsed time of a chain configuration.
#[pyclass(name = "ZrpState", frozen)]
struct PyZrpState {
    inner: cz::ZrpState,
}

#[pymethods]
impl PyZrpState {
    #[new]
    fn new(occupations: Vec<u64>, time: f64) -> Self {
        Self {
            inner: cz::ZrpState { occupations, time },
        }
    }

    #[staticmethod]
    fn empty(sites: usize) -> Self {
        Self {
            inner: cz::ZrpState::empty(sites),
        }
    }

    fn occupations(&self) -> Vec<u64> {
        self.inner.occupations.clone()
    }

    fn time(&self) -> f64 {
        self.inner.time
    }

    fn total_particles(&self) -> u64 {
        self.inner.total_particles()
    }

    fn __repr__(&self) -> String {
        format!(
            "ZrpState(occupations={:?}, time={})",
            self.inner.occupations, self.inner.time
        )
    }
}

/// Deterministic random generator, seeded explicitly.
#[pyclass(name = "Rng")]
struct PyRng {
    inner: ChaCha8Rng,
}

#[pymethods]
impl PyRng {
    #[new]
    fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Grand-canonical distribution of one site at a fixed fugacity.
#[pyclass(name = "SingleSiteMeasure", frozen)]
struct PySingleSiteMeasure {
    inner: cz::SingleSiteMeasure,
}

#[pymethods]
impl PySingleSiteMeasure {
    #[new]
    #[pyo3(signature = (rate, fugacity, cap = 10_000))]
    fn new(rate: &PyRateFunction, fugacity: f64, cap: usize) -> PyResult<Self> {
        Ok(Self {
            inner: cz::SingleSiteMeasure::new(&rate.inner, fugacity, cap).map_err(err)?,
        })
    }

    fn fugacity(&self) -> f64 {
        self.inner.fugacity()
    }

    fn partition(&self) -> f64 {
        self.inner.partition()
    }

    fn cap(&self) -> usize {
        self.inner.cap()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities().to_vec()
    }

    fn density(&self) -> f64 {
        self.inner.density()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn sample(&self, mut rng: PyRefMut<'_, PyRng>) -> u64 {
        self.inner.sample(&mut rng.inner)
    }
}

/// Advance the chain by one exponential-clock event.
#[pyfunction]
fn gillespie_step(
    model: &PyZrpModel,
    state: &PyZrpState,
    mut rng: PyRefMut<'_, PyRng>,
) -> PyZrpState {
    PyZrpState {
        inner: cz::gillespie_step(&model.inner, &state.inner, &mut rng.inner),
    }
}

/// Sample the nonequilibrium steady state: discard `burn_in` time, then
/// record `samples` states separated by `thin`.
#[pyfunction]
fn sample_ness(
    model: &PyZrpModel,
    burn_in: f64,
    samples: usize,
    thin: f64,
    mut rng: PyRefMut<'_, PyRng>,
) -> PyResult<Vec<PyZrpState>> {
    let states = cz::sample_ness(&model.inner, burn_in, samples, thin, &mut rng.inner)
        .map_err(err)?;
    Ok(states.into_iter().map(|inner| PyZrpState { inner }).collect())
}

/// Fugacity at each site of the steady state, linear between reservoirs.
#[pyfunction]
fn ness_fugacity_profile(model: &PyZrpModel) -> Vec<f64> {
    cz::ness_fugacity_profile(&model.inner)
}

/// Steady-state probability rate of observing a coarse density profile,
/// estimated from the product measure (plus an optional sampling check).
#[pyfunction]
fn ldf_empirical(
    model: &PyZrpModel,
    coarse_cells: usize,
    targets: Vec<f64>,
    samples: usize,
    mut rng: PyRefMut<'_, PyRng>,
) -> PyResult<f64> {
    cz::ldf_empirical(&model.inner, coarse_cells, &targets, samples, &mut rng.inner).map_err(err)
}

/// Mean and batch-mean standard error of a correlated series.
#[pyfunction]
fn batch_mean_se(series: Vec<f64>, batches: usize) -> PyResult<(f64, f64)> {
    cz::batch_mean_se(&series, batches).map_err(err)
}

/// Chi-square statistic, degrees of freedom, and p-value of observed
/// occupation counts against a discrete distribution.
#[pyfunction]
fn chi_square_goodness(observed: Vec<u64>, probabilities: Vec<f64>) -> PyResult<(f64, usize, f64)> {
    cz::chi_square_goodness(&observed, &probabilities).map_err(err)
}

/// Local-equilibrium entropy `integral s(e(x)) dx`.
#[pyfunction]
fn s_local_equilibrium(energy: &PyScalarField, thermo: &PyThermoModel) -> PyResult<f64> {
    cfn::s_local_equilibrium(&energy.inner, &thermo.inner).map_err(err)
}

/// Single-bath free energy `E / T_bath - S_le`.
#[pyfunction]
fn free_energy_canonical(
    energy: &PyScalarField,
    thermo: &PyThermoModel,
    t_bath: f64,
) -> PyResult<f64> {
    cfn::free_energy_canonical(&energy.inner, &thermo.inner, t_bath).map_err(err)
}

/// Rate-function increment `F_u(v) = integral_u^v log(sigma(z)/sigma(u)) dz`.
#[pyfunction]
fn ldf_increment(reference: f64, target: f64, sigma: &PySigmaModel) -> PyResult<f64> {
    cfn::ldf_increment(reference, target, &sigma.inner).map_err(err)
}

/// Profile rate functional `integral F_{rho_bar(x)}(rho(x)) dx`.
#[pyfunction]
fn ldf_zrp(rho: &PyScalarField, rho_bar: &PyScalarField, sigma: &PySigmaModel) -> PyResult<f64> {
    cfn::ldf_zrp(&rho.inner, &rho_bar.inner, &sigma.inner).map_err(err)
}

/// Gradient-flow structure of dissipative transport: fields and models,
/// heat and density evolution with entropy and free-energy audits, the
/// BGK gas, and the zero-range process.
#[pymodule]
fn entrolab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyScalarField>()?;
    m.add_class::<PyThermoModel>()?;
    m.add_class::<PyKappaModel>()?;
    m.add_class::<PySigmaModel>()?;
    m.add_class::<PyBoundaryCondition>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyHeatProblem>()?;
    m.add_class::<PyZrpPdeProblem>()?;
    m.add_class::<PyVelocityGrid>()?;
    m.add_class::<PyKineticState>()?;
    m.add_class::<PyRateFunction>()?;
    m.add_class::<PyZrpModel>()?;
    m.add_class::<PyZrpState>()?;
    m.add_class::<PyRng>()?;
    m.add_class::<PySingleSiteMeasure>()?;
    m.add_function(wrap_pyfunction!(step_bgk, m)?)?;
    m.add_function(wrap_pyfunction!(h_theorem_audit, m)?)?;
    m.add_function(wrap_pyfunction!(gillespie_step, m)?)?;
    m.add_function(wrap_pyfunction!(sample_ness, m)?)?;
    m.add_function(wrap_pyfunction!(ness_fugacity_profile, m)?)?;
    m.add_function(wrap_pyfunction!(ldf_empirical, m)?)?;
    m.add_function(wrap_pyfunction!(batch_mean_se, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_goodness, m)?)?;
    m.add_function(wrap_pyfunction!(s_local_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy_canonical, m)?)?;
    m.add_function(wrap_pyfunction!(ldf_increment, m)?)?;
    m.add_function(wrap_pyfunction!(ldf_zrp, m)?)?;
    m.add("H_THEOREM_SLACK", ck::H_THEOREM_SLACK)?;
    Ok(())
}
