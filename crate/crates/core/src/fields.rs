//! Cell-centered grids, scalar fields, boundary conditions, and the discrete
//! operators the transport solvers are built on.
//!
//! Conventions: cells are centered at `(i + 1/2) * dx`, the domain boundary
//! sits on cell faces, and boundary conditions are imposed through ghost
//! cells. A Dirichlet face value `b` yields the linear-extrapolation ghost
//! `2 b - c` for adjacent cell value `c`; a zero-flux face mirrors the cell
//! (`ghost = c`), which makes the face flux vanish identically rather than
//! merely to truncation error.

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Uniform cell-centered rectangular grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    /// At least 3 cells per axis so every axis has an interior cell.
    pub const MIN_EXTENT: usize = 3;

    pub fn new(extents: &[usize], spacing: &[f64]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        if extents.len() != spacing.len() {
            return Err(Error::InvalidGrid(format!(
                "{} extents but {} spacings",
                extents.len(),
                spacing.len()
            )));
        }
        for (a, &n) in extents.iter().enumerate() {
            if n < Self::MIN_EXTENT {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has {n} cells, need at least {}",
                    Self::MIN_EXTENT
                )));
            }
        }
        for (a, &h) in spacing.iter().enumerate() {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} spacing {h} not positive")));
            }
        }
        Ok(Self {
            extents: extents.to_vec(),
            spacing: spacing.to_vec(),
        })
    }

    /// 1D grid over `[0, length]` with `cells` cells.
    pub fn line(cells: usize, length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::NonPositive {
                quantity: "grid length",
                value: length,
            });
        }
        Self::new(&[cells], &[length / cells as f64])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn cell_count(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Area of a single cell face orthogonal to `axis` (1 in 1D).
    pub fn face_cell_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing[axis]
    }

    /// Linear index stride between neighbours along `axis` (axis 0 is fastest).
    pub(crate) fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            _ => self.extents[0],
        }
    }

    /// Number of boundary cells on a face orthogonal to `axis`.
    pub fn face_cell_count(&self, axis: usize) -> usize {
        self.cell_count() / self.extents[axis]
    }

    /// Center coordinates of cell `idx` (unused axes are zero).
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        let nx = self.extents[0];
        let ix = idx % nx;
        out[0] = (ix as f64 + 0.5) * self.spacing[0];
        if self.dim() == 2 {
            let iy = idx / nx;
            out[1] = (iy as f64 + 0.5) * self.spacing[1];
        }
        out
    }

    /// Linear indices of the boundary cells on face (`axis`, `high`), in a
    /// fixed order (the transverse index increases).
    pub(crate) fn face_cells(&self, axis: usize, high: bool) -> Vec<usize> {
        let stride = self.stride(axis);
        let n_axis = self.extents[axis];
        let first = if high { (n_axis - 1) * stride } else { 0 };
        match self.dim() {
            1 => vec![first],
            _ => {
                let other = 1 - axis;
                let other_stride = self.stride(other);
                (0..self.extents[other])
                    .map(|k| first + k * other_stride)
                    .collect()
            }
        }
    }
}

/// Scalar field of one value per grid cell, stored row-major (axis 0 fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite field value at cell {idx}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        let n = grid.cell_count();
        Self::new(grid, vec![value; n])
    }

    /// Build from a function of the cell-center coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..grid.cell_count())
            .map(|i| {
                let c = grid.cell_center(i);
                f(&c[..grid.dim()])
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Apply `f` cellwise, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                "fields live on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// Condition on one boundary face.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceCondition {
    /// Fixed face values, one per boundary cell of the face.
    Dirichlet(Vec<f64>),
    /// Mirror ghost; the face flux vanishes identically.
    ZeroFlux,
}

/// One condition per face, indexed by `2 * axis + high`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    faces: Vec<FaceCondition>,
}

impl BoundaryCondition {
    pub fn new(grid: &Grid, faces: Vec<FaceCondition>) -> Result<Self> {
        if faces.len() != 2 * grid.dim() {
            return Err(Error::BoundaryMismatch(format!(
                "{} face conditions for {} faces",
                faces.len(),
                2 * grid.dim()
            )));
        }
        for (k, fc) in faces.iter().enumerate() {
            if let FaceCondition::Dirichlet(vals) = fc {
                let want = grid.face_cell_count(k / 2);
                if vals.len() != want {
                    return Err(Error::BoundaryMismatch(format!(
                        "face {k} carries {} values, expected {want}",
                        vals.len()
                    )));
                }
                if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "non-finite Dirichlet value at face {k}, entry {i}"
                    )));
                }
            }
        }
        Ok(Self { faces })
    }

    /// Dirichlet with a single value per face of a 1D grid.
    pub fn dirichlet_1d(grid: &Grid, left: f64, right: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::BoundaryMismatch("dirichlet_1d needs a 1D grid".into()));
        }
        Self::new(
            grid,
            vec![
                FaceCondition::Dirichlet(vec![left]),
                FaceCondition::Dirichlet(vec![right]),
            ],
        )
    }

    /// The same Dirichlet value on every face.
    pub fn uniform_dirichlet(grid: &Grid, value: f64) -> Result<Self> {
        let faces = (0..2 * grid.dim())
            .map(|k| FaceCondition::Dirichlet(vec![value; grid.face_cell_count(k / 2)]))
            .collect();
        Self::new(grid, faces)
    }

    pub fn zero_flux(grid: &Grid) -> Result<Self> {
        Self::new(grid, vec![FaceCondition::ZeroFlux; 2 * grid.dim()])
    }

    pub fn face(&self, axis: usize, high: bool) -> &FaceCondition {
        &self.faces[2 * axis + usize::from(high)]
    }

    pub fn faces(&self) -> &[FaceCondition] {
        &self.faces
    }

    pub fn is_dirichlet_everywhere(&self) -> bool {
        self.faces
            .iter()
            .all(|f| matches!(f, FaceCondition::Dirichlet(_)))
    }

    pub fn has_dirichlet_face(&self) -> bool {
        self.faces
            .iter()
            .any(|f| matches!(f, FaceCondition::Dirichlet(_)))
    }

    /// Transform all Dirichlet values (e.g. to express a condition on a
    /// derived variable such as `sigma(rho)`).
    pub fn map_dirichlet(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let faces = self
            .faces
            .iter()
            .map(|fc| match fc {
                FaceCondition::ZeroFlux => Ok(FaceCondition::ZeroFlux),
                FaceCondition::Dirichlet(vals) => Ok(FaceCondition::Dirichlet(
                    vals.iter().map(|&v| f(v)).collect::<Result<Vec<f64>>>()?,
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { faces })
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.faces.len() != 2 * grid.dim() {
            return Err(Error::BoundaryMismatch(format!(
                "{} face conditions for {} faces",
                self.faces.len(),
                2 * grid.dim()
            )));
        }
        for (k, fc) in self.faces.iter().enumerate() {
            if let FaceCondition::Dirichlet(vals) = fc {
                if vals.len() != grid.face_cell_count(k / 2) {
                    return Err(Error::BoundaryMismatch(format!(
                        "face {k} carries {} values, expected {}",
                        vals.len(),
                        grid.face_cell_count(k / 2)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn ghost_value(condition: &FaceCondition, face_slot: usize, cell_value: f64) -> f64 {
    match condition {
        FaceCondition::Dirichlet(vals) => 2.0 * vals[face_slot] - cell_value,
        FaceCondition::ZeroFlux => cell_value,
    }
}

/// Divergence of `w * grad(phi)` per cell, with `w` evaluated per face from
/// the two adjacent values (ghosts included). This is the single conservative
/// kernel behind `laplacian`, the heat stepper, and the density stepper.
pub(crate) fn flux_divergence(
    phi: &ScalarField,
    bc: &BoundaryCondition,
    face_weight: impl Fn(usize, f64, f64) -> f64,
) -> Result<ScalarField> {
    let grid = phi.grid();
    bc.check_grid(grid)?;
    let v = phi.values();
    let mut out = vec![0.0; v.len()];

    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let inv_h2 = 1.0 / (h * h);
        let stride = grid.stride(axis);
        let n_axis = grid.extents()[axis];
        let lanes = grid.face_cell_count(axis);
        let lane_stride = if grid.dim() == 1 { 1 } else { grid.stride(1 - axis) };

        for lane in 0..lanes {
            let base = lane * lane_stride;
            // Interior links along this lane.
            for k in 0..n_axis - 1 {
                let c = base + k * stride;
                let n = c + stride;
                let flux = face_weight(axis, v[c], v[n]) * (v[n] - v[c]) * inv_h2;
                out[c] += flux;
                out[n] -= flux;
            }
            // Boundary faces.
            let low_cell = base;
            let g = ghost_value(bc.face(axis, false), lane, v[low_cell]);
            out[low_cell] += face_weight(axis, g, v[low_cell]) * (g - v[low_cell]) * inv_h2;

            let high_cell = base + (n_axis - 1) * stride;
            let g = ghost_value(bc.face(axis, true), lane, v[high_cell]);
            out[high_cell] += face_weight(axis, g, v[high_cell]) * (g - v[high_cell]) * inv_h2;
        }
    }

    ScalarField::new(grid.clone(), out)
}

/// Centered first-derivative contraction `sum_a e_a d(phi)/dx_a` with ghost
/// closure, used for constant-drift advection terms.
pub(crate) fn directional_gradient(
    phi: &ScalarField,
    bc: &BoundaryCondition,
    direction: &[f64],
) -> Result<ScalarField> {
    let grid = phi.grid();
    bc.check_grid(grid)?;
    if direction.len() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "direction has {} components on a {}D grid",
            direction.len(),
            grid.dim()
        )));
    }
    let v = phi.values();
    let mut out = vec![0.0; v.len()];

    for axis in 0..grid.dim() {
        let e = direction[axis];
        if e == 0.0 {
            continue;
        }
        let h = grid.spacing()[axis];
        let stride = grid.stride(axis);
        let n_axis = grid.extents()[axis];
        let lanes = grid.face_cell_count(axis);
        let lane_stride = if grid.dim() == 1 { 1 } else { grid.stride(1 - axis) };

        for lane in 0..lanes {
            let base = lane * lane_stride;
            for k in 0..n_axis {
                let c = base + k * stride;
                let lo = if k == 0 {
                    ghost_value(bc.face(axis, false), lane, v[c])
                } else {
                    v[c - stride]
                };
                let hi = if k == n_axis - 1 {
                    ghost_value(bc.face(axis, true), lane, v[c])
                } else {
                    v[c + stride]
                };
                out[c] += e * (hi - lo) / (2.0 * h);
            }
        }
    }

    ScalarField::new(grid.clone(), out)
}

/// Per-cell outward flux of `-w * grad(phi)` through one boundary face,
/// together with the face value of `phi` (the Dirichlet datum, or the cell
/// value on a zero-flux face where the flux is exactly zero).
#[derive(Debug, Clone)]
pub(crate) struct FaceFlux {
    pub axis: usize,
    pub cells: Vec<usize>,
    pub outward: Vec<f64>,
    pub face_value: Vec<f64>,
}

pub(crate) fn boundary_fluxes(
    phi: &ScalarField,
    bc: &BoundaryCondition,
    face_weight: impl Fn(usize, f64, f64) -> f64,
) -> Result<Vec<FaceFlux>> {
    let grid = phi.grid();
    bc.check_grid(grid)?;
    let v = phi.values();
    let mut out = Vec::with_capacity(2 * grid.dim());

    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        for high in [false, true] {
            let cond = bc.face(axis, high);
            let cells = grid.face_cells(axis, high);
            let mut outward = Vec::with_capacity(cells.len());
            let mut face_value = Vec::with_capacity(cells.len());
            for (slot, &c) in cells.iter().enumerate() {
                match cond {
                    FaceCondition::ZeroFlux => {
                        outward.push(0.0);
                        face_value.push(v[c]);
                    }
                    FaceCondition::Dirichlet(vals) => {
                        let g = 2.0 * vals[slot] - v[c];
                        let w = face_weight(axis, g, v[c]);
                        // The ghost always sits on the outward side, so the
                        // outward flux is -w * (ghost - cell)/h on either face.
                        outward.push(-w * (g - v[c]) / h);
                        face_value.push(vals[slot]);
                    }
                }
            }
            out.push(FaceFlux {
                axis,
                cells,
                outward,
                face_value,
            });
        }
    }
    Ok(out)
}

/// Second-order Laplacian with ghost-cell boundary closure.
pub fn laplacian(field: &ScalarField, bc: &BoundaryCondition) -> Result<ScalarField> {
    flux_divergence(field, bc, |_, _, _| 1.0)
}

/// Midpoint-flux quadrature of `integral w |grad f|^2 dx` over interior
/// links: each link contributes the squared link gradient weighted by the
/// arithmetic mean of the adjacent weights.
pub fn grad_sq_weighted(field: &ScalarField, weight: &ScalarField) -> Result<f64> {
    field.same_grid(weight)?;
    if let Some(i) = weight.values().iter().position(|&w| w < 0.0) {
        return Err(Error::NegativeValue {
            quantity: "gradient weight",
            index: i,
            value: weight.values()[i],
        });
    }
    let grid = field.grid();
    let v = field.values();
    let w = weight.values();
    let vol = grid.cell_volume();
    let mut total = 0.0;

    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let stride = grid.stride(axis);
        let n_axis = grid.extents()[axis];
        let lanes = grid.face_cell_count(axis);
        let lane_stride = if grid.dim() == 1 { 1 } else { grid.stride(1 - axis) };
        for lane in 0..lanes {
            let base = lane * lane_stride;
            for k in 0..n_axis - 1 {
                let c = base + k * stride;
                let n = c + stride;
                let g = (v[n] - v[c]) / h;
                total += 0.5 * (w[c] + w[n]) * g * g * vol;
            }
        }
    }
    Ok(total)
}

/// Interior-link bilinear form `sum links (df)(dg)/h^2 * vol`; the discrete
/// counterpart of `integral grad f . grad g dx` that pairs with `laplacian`
/// under summation by parts.
pub fn gradient_form(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.same_grid(g)?;
    let grid = f.grid();
    let fv = f.values();
    let gv = g.values();
    let vol = grid.cell_volume();
    let mut total = 0.0;

    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let inv_h2 = 1.0 / (h * h);
        let stride = grid.stride(axis);
        let n_axis = grid.extents()[axis];
        let lanes = grid.face_cell_count(axis);
        let lane_stride = if grid.dim() == 1 { 1 } else { grid.stride(1 - axis) };
        for lane in 0..lanes {
            let base = lane * lane_stride;
            for k in 0..n_axis - 1 {
                let c = base + k * stride;
                let n = c + stride;
                total += (fv[n] - fv[c]) * (gv[n] - gv[c]) * inv_h2 * vol;
            }
        }
    }
    Ok(total)
}

/// Interior-link bilinear form with a per-face weight derived from the two
/// adjacent `f` values: `sum links w(axis, f_c, f_n) (df)(dg)/h^2 * vol`.
/// Pairs with `flux_divergence` under summation by parts when given the same
/// weight closure.
pub(crate) fn weighted_gradient_form(
    f: &ScalarField,
    g: &ScalarField,
    face_weight: impl Fn(usize, f64, f64) -> f64,
) -> Result<f64> {
    f.same_grid(g)?;
    let grid = f.grid();
    let fv = f.values();
    let gv = g.values();
    let vol = grid.cell_volume();
    let mut total = 0.0;

    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let inv_h2 = 1.0 / (h * h);
        let stride = grid.stride(axis);
        let n_axis = grid.extents()[axis];
        let lanes = grid.face_cell_count(axis);
        let lane_stride = if grid.dim() == 1 { 1 } else { grid.stride(1 - axis) };
        for lane in 0..lanes {
            let base = lane * lane_stride;
            for k in 0..n_axis - 1 {
                let c = base + k * stride;
                let n = c + stride;
                total += face_weight(axis, fv[c], fv[n])
                    * (fv[n] - fv[c])
                    * (gv[n] - gv[c])
                    * inv_h2
                    * vol;
            }
        }
    }
    Ok(total)
}

/// Cell-volume-weighted sum, i.e. the midpoint quadrature of `integral f dx`.
pub fn integrate(field: &ScalarField) -> f64 {
    let vol = field.grid().cell_volume();
    field.values().iter().sum::<f64>() * vol
}

/// Monotone constitutive function `w = sigma(z)` with derivative and inverse.
///
/// `Identity` is kept distinct from `Power { exponent: 1.0 }` so that solvers
/// parameterized by sigma reproduce plain diffusion bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaModel {
    Identity,
    Power { exponent: f64 },
    /// `sigma(z) = z / (1 + z)`, the saturating law of constant-rate exclusion.
    Saturating,
    Table(SigmaTable),
}

/// Tabulated monotone sigma on a bounded working interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    curve: MonotoneCubic,
}

impl SigmaTable {
    /// `points` are `(z, sigma(z))` pairs, strictly increasing in both
    /// coordinates.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        for k in 1..ys.len() {
            if ys[k] <= ys[k - 1] {
                return Err(Error::Invalid(format!(
                    "sigma table not strictly increasing at knot {k}"
                )));
            }
        }
        Ok(Self {
            curve: MonotoneCubic::new(xs, ys)?,
        })
    }
}

impl SigmaModel {
    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(Error::NonPositive {
                quantity: "sigma exponent",
                value: exponent,
            });
        }
        Ok(SigmaModel::Power { exponent })
    }

    /// Working interval `[lo, hi]` of admissible arguments.
    pub fn working_interval(&self) -> (f64, f64) {
        match self {
            SigmaModel::Identity | SigmaModel::Power { .. } | SigmaModel::Saturating => {
                (0.0, f64::INFINITY)
            }
            SigmaModel::Table(t) => t.curve.domain(),
        }
    }

    fn check_arg(&self, z: f64) -> Result<()> {
        let (lo, hi) = self.working_interval();
        if !(z >= lo && z <= hi) || !z.is_finite() {
            return Err(Error::OutOfRange {
                quantity: "sigma argument",
                value: z,
                lo,
                hi,
            });
        }
        Ok(())
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        self.check_arg(z)?;
        Ok(match self {
            SigmaModel::Identity => z,
            SigmaModel::Power { exponent } => z.powf(*exponent),
            SigmaModel::Saturating => z / (1.0 + z),
            SigmaModel::Table(t) => t.curve.eval(z)?,
        })
    }

    pub fn derivative(&self, z: f64) -> Result<f64> {
        self.check_arg(z)?;
        Ok(match self {
            SigmaModel::Identity => 1.0,
            SigmaModel::Power { exponent } => exponent * z.powf(exponent - 1.0),
            SigmaModel::Saturating => {
                let d = 1.0 + z;
                1.0 / (d * d)
            }
            SigmaModel::Table(t) => t.curve.deriv(z)?,
        })
    }

    /// Inverse of `value`; round-trips to 1e-10 relative across the working
    /// interval (the tabulated branch solves the interpolant itself, so the
    /// pair is consistent by construction).
    pub fn inverse(&self, w: f64) -> Result<f64> {
        match self {
            SigmaModel::Identity => {
                self.check_arg(w)?;
                Ok(w)
            }
            SigmaModel::Power { exponent } => {
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::OutOfRange {
                        quantity: "sigma inverse argument",
                        value: w,
                        lo: 0.0,
                        hi: f64::INFINITY,
                    });
                }
                Ok(w.powf(1.0 / exponent))
            }
            SigmaModel::Saturating => {
                if !(w >= 0.0 && w < 1.0) {
                    return Err(Error::OutOfRange {
                        quantity: "sigma inverse argument",
                        value: w,
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
                Ok(w / (1.0 - w))
            }
            SigmaModel::Table(t) => t.curve.invert_increasing(w),
        }
    }
}
