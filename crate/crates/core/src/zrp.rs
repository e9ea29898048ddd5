//! Boundary-driven zero-range process: event-driven simulation, exact
//! product-form steady state, and an exact large-deviation estimator.
//!
//! Rate convention: an occupied site fires at total rate `g(n)` and sends the
//! particle left or right with a fair coin; jumps past the first or last site
//! are absorbed by the reservoirs, which inject at rate `z/2` per boundary.
//! With these rates the single-site equilibrium fugacity equals the reservoir
//! fugacity `z` (the L = 1 chain is a birth-death process with birth rate `z`
//! and death rate `g(n)`), and the driven steady state is the product of
//! single-site measures whose fugacities interpolate linearly between the
//! reservoirs.
//!
//! The large-deviation estimator never samples rare events: per coarse cell it
//! convolves the exact truncated single-site distributions to get the window
//! probability, then removes the local-limit prefactor `sqrt(2 pi Var)` of the
//! tilted sum so the estimate approaches the rate function at O(1/K) instead
//! of O(log K / K). Sampling is reserved for cross-checking typical windows.

use crate::error::{Error, Result};
use crate::fields::{SigmaModel, SigmaTable};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Relative mass allowed beyond the adaptive occupation cap.
pub const TAIL_TOL: f64 = 1e-14;

/// Hard ceiling on the adaptive occupation cap.
const MEASURE_CAP: usize = 100_000;

/// Jump rate `g(n)` out of a site holding `n` particles; `g(0) = 0` always.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    /// `g(n) = n`: independent particles, Poisson marginals.
    Linear,
    /// `g(n) = 1` for `n >= 1`: geometric marginals, fugacity below 1.
    Constant,
    /// `g(n) = table[n - 1]`, extended by its last entry beyond the table.
    Table(Vec<f64>),
}

impl RateFunction {
    fn check(&self) -> Result<()> {
        if let RateFunction::Table(values) = self {
            if values.is_empty() {
                return Err(Error::Invalid("rate table is empty".into()));
            }
            for (i, &g) in values.iter().enumerate() {
                if !(g > 0.0) || !g.is_finite() {
                    return Err(Error::NegativeValue {
                        quantity: "jump rate",
                        index: i,
                        value: g,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            RateFunction::Linear => n as f64,
            RateFunction::Constant => 1.0,
            RateFunction::Table(values) => values[(n as usize).min(values.len()) - 1],
        }
    }

    /// Upper bound on `z / g(k)` over all `k > n`, used to bound the
    /// partition-function tail by a geometric series.
    fn tail_ratio_bound(&self, z: f64, n: u64) -> f64 {
        match self {
            RateFunction::Linear => z / (n + 1) as f64,
            RateFunction::Constant => z,
            RateFunction::Table(values) => {
                let start = (n as usize).min(values.len() - 1);
                let min_g = values[start..]
                    .iter()
                    .fold(f64::INFINITY, |m, &g| m.min(g));
                z / min_g
            }
        }
    }
}

/// Boundary-driven zero-range process on a 1D chain of `sites` bulk sites.
#[derive(Debug, Clone, PartialEq)]
pub struct ZrpModel {
    sites: usize,
    rate: RateFunction,
    z_left: f64,
    z_right: f64,
}

impl ZrpModel {
    pub fn new(sites: usize, rate: RateFunction, z_left: f64, z_right: f64) -> Result<Self> {
        if sites == 0 {
            return Err(Error::Invalid("need at least one bulk site".into()));
        }
        rate.check()?;
        for (name, z) in [("left fugacity", z_left), ("right fugacity", z_right)] {
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::NonPositive {
                    quantity: name,
                    value: z,
                });
            }
        }
        // The partition function must converge at the larger reservoir
        // fugacity, otherwise no stationary measure exists.
        SingleSiteMeasure::new(&rate, z_left.max(z_right), MEASURE_CAP)?;
        Ok(Self {
            sites,
            rate,
            z_left,
            z_right,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn z_left(&self) -> f64 {
        self.z_left
    }

    pub fn z_right(&self) -> f64 {
        self.z_right
    }
}

/// Microscopic configuration: occupation numbers and the elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct ZrpState {
    pub occupations: Vec<u64>,
    pub time: f64,
}

impl ZrpState {
    pub fn empty(sites: usize) -> Self {
        Self {
            occupations: vec![0; sites],
            time: 0.0,
        }
    }

    pub fn total_particles(&self) -> u64 {
        self.occupations.iter().sum()
    }
}

/// Grand-canonical measure of one site: `p(n) = z^n / (Z prod_{k<=n} g(k))`,
/// truncated where the remaining mass is below `TAIL_TOL` of the total.
#[derive(Debug, Clone)]
pub struct SingleSiteMeasure {
    fugacity: f64,
    partition: f64,
    probabilities: Vec<f64>,
}

impl SingleSiteMeasure {
    pub fn new(rate: &RateFunction, fugacity: f64, cap: usize) -> Result<Self> {
        if !(fugacity > 0.0) || !fugacity.is_finite() {
            return Err(Error::NonPositive {
                quantity: "fugacity",
                value: fugacity,
            });
        }
        rate.check()?;
        let mut weights = vec![1.0];
        let mut partition = 1.0;
        let mut n = 0u64;
        loop {
            n += 1;
            if n as usize > cap {
                return Err(Error::DivergentPartition { fugacity });
            }
            let w = weights[n as usize - 1] * fugacity / rate.value(n);
            if !w.is_finite() {
                return Err(Error::DivergentPartition { fugacity });
            }
            weights.push(w);
            partition += w;
            let ratio = rate.tail_ratio_bound(fugacity, n);
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < TAIL_TOL * partition {
                break;
            }
        }
        let probabilities = weights.iter().map(|w| w / partition).collect();
        Ok(Self {
            fugacity,
            partition,
            probabilities,
        })
    }

    pub fn fugacity(&self) -> f64 {
        self.fugacity
    }

    pub fn partition(&self) -> f64 {
        self.partition
    }

    /// Largest occupation carried by the truncation.
    pub fn cap(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Mean occupation `rho(z) = z Z'(z) / Z(z)`.
    pub fn density(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.density();
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean) * (n as f64 - mean) * p)
            .sum()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return n as u64;
            }
        }
        self.cap() as u64
    }
}

/// Constitutive map of the hydrodynamic limit: tabulates the mean occupation
/// against the fugacity over the model's working range and inverts it, so
/// `sigma(rho)` is the fugacity sustaining density `rho`.
///
/// `n_max` caps the occupation truncation during tabulation; the upper end of
/// the fugacity range backs off toward the reservoir value if the partition
/// function cannot be resolved below the cap.
pub fn sigma_from_rates(model: &ZrpModel, n_max: usize) -> Result<SigmaModel> {
    let z_boundary = model.z_left.max(model.z_right);
    let z_lo = model.z_left.min(model.z_right) / 64.0;
    let mut z_hi = 3.0 * z_boundary;
    loop {
        match SingleSiteMeasure::new(&model.rate, z_hi, n_max) {
            Ok(_) => break,
            Err(err) => {
                let excess = z_hi - z_boundary;
                if excess < 0.05 * z_boundary {
                    return Err(err);
                }
                z_hi = z_boundary + 0.7 * excess;
            }
        }
    }

    const KNOTS: usize = 512;
    let ratio = (z_hi / z_lo).powf(1.0 / (KNOTS - 1) as f64);
    let mut points = Vec::with_capacity(KNOTS);
    let mut prev_density = f64::NEG_INFINITY;
    for k in 0..KNOTS {
        let z = z_lo * ratio.powi(k as i32);
        let density = SingleSiteMeasure::new(&model.rate, z, n_max)?.density();
        if density <= prev_density {
            return Err(Error::Invalid(format!(
                "density tabulation is not strictly increasing near fugacity \
                 {z}; raise the occupation cap"
            )));
        }
        prev_density = density;
        points.push((density, z));
    }
    Ok(SigmaModel::Table(SigmaTable::new(&points)?))
}

/// Site fugacities of the driven steady state: the discrete harmonic profile
/// `z_i = z_left + (z_right - z_left) i / (L + 1)` for `i = 1..=L`.
pub fn ness_fugacity_profile(model: &ZrpModel) -> Vec<f64> {
    let l = model.sites;
    (1..=l)
        .map(|i| model.z_left + (model.z_right - model.z_left) * i as f64 / (l + 1) as f64)
        .collect()
}

/// One exact continuous-time event: exponential waiting time at the total
/// rate, then injection or a fair-coin jump chosen in a fixed scan order.
pub fn gillespie_step(model: &ZrpModel, state: &ZrpState, rng: &mut impl Rng) -> ZrpState {
    let l = model.sites;
    debug_assert_eq!(state.occupations.len(), l);
    let half_left = 0.5 * model.z_left;
    let half_right = 0.5 * model.z_right;
    let mut total = half_left + half_right;
    for &n in &state.occupations {
        total += model.rate.value(n);
    }

    let mut next = state.clone();
    let u: f64 = rng.random();
    next.time += -(1.0 - u).ln() / total;

    let mut x = rng.random::<f64>() * total;
    if x < half_left {
        next.occupations[0] += 1;
        return next;
    }
    x -= half_left;
    if x < half_right {
        next.occupations[l - 1] += 1;
        return next;
    }
    x -= half_right;
    for i in 0..l {
        let g = model.rate.value(state.occupations[i]);
        if x < g {
            next.occupations[i] -= 1;
            if x < 0.5 * g {
                if i > 0 {
                    next.occupations[i - 1] += 1;
                }
            } else if i + 1 < l {
                next.occupations[i + 1] += 1;
            }
            return next;
        }
        x -= g;
    }
    // Rounding pushed the pick past the last event; fall back to the always
    // available injection.
    next.occupations[l - 1] += 1;
    next
}

/// Thinned stationary samples: relax from the empty configuration until
/// `burn_in`, then record the live configuration every `thin` time units.
/// The recorded `time` is the observation time, not an event time.
pub fn sample_ness(
    model: &ZrpModel,
    burn_in: f64,
    samples: usize,
    thin: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ZrpState>> {
    if !(burn_in > 0.0) || !burn_in.is_finite() {
        return Err(Error::NonPositive {
            quantity: "burn-in time",
            value: burn_in,
        });
    }
    if !(thin > 0.0) || !thin.is_finite() {
        return Err(Error::NonPositive {
            quantity: "thinning interval",
            value: thin,
        });
    }
    if samples == 0 {
        return Err(Error::Invalid("requested zero samples".into()));
    }
    let mut current = ZrpState::empty(model.sites);
    let mut out = Vec::with_capacity(samples);
    let mut next_record = burn_in;
    while out.len() < samples {
        let next = gillespie_step(model, &current, rng);
        while out.len() < samples && next.time > next_record {
            out.push(ZrpState {
                occupations: current.occupations.clone(),
                time: next_record,
            });
            next_record += thin;
        }
        current = next;
    }
    Ok(out)
}

/// Distribution of the cell sum, exact up to `max_sum`: convolution of the
/// truncated single-site distributions. Entries at or below `max_sum` are
/// unaffected by the truncation of larger sums.
fn convolve_cell(measures: &[SingleSiteMeasure], max_sum: usize) -> Vec<f64> {
    let mut dist = vec![1.0];
    for m in measures {
        let p = m.probabilities();
        let len = (dist.len() + p.len() - 1).min(max_sum + 1);
        let mut out = vec![0.0; len];
        for (s, &ds) in dist.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            for (n, &pn) in p.iter().enumerate() {
                if s + n >= len {
                    break;
                }
                out[s + n] += ds * pn;
            }
        }
        dist = out;
    }
    dist
}

/// Sum of tilted means and variances at site fugacities `z_i e^theta`, or
/// `None` where the tilted partition function diverges.
fn tilted_cell_moments(
    rate: &RateFunction,
    fugacities: &[f64],
    theta: f64,
) -> Option<(f64, f64)> {
    let boost = theta.exp();
    let mut mean = 0.0;
    let mut var = 0.0;
    for &z in fugacities {
        match SingleSiteMeasure::new(rate, z * boost, MEASURE_CAP) {
            Ok(m) => {
                mean += m.density();
                var += m.variance();
            }
            Err(_) => return None,
        }
    }
    Some((mean, var))
}

/// Variance of the cell sum under the exponential tilt that centers it on
/// `target_sum`; the tilted mean is monotone in the tilt, so bisection works.
fn tilted_variance_at(
    rate: &RateFunction,
    fugacities: &[f64],
    target_sum: f64,
) -> Result<f64> {
    let tol = 1e-11 * target_sum.max(1.0);
    let mut lo = 0.0;
    loop {
        match tilted_cell_moments(rate, fugacities, lo) {
            Some((mean, var)) if (mean - target_sum).abs() <= tol => return Ok(var),
            Some((mean, _)) if mean < target_sum => break,
            _ => lo -= 1.0,
        }
        if lo < -700.0 {
            return Err(Error::UnreachableTarget(format!(
                "cell sum {target_sum} below every attainable tilted mean"
            )));
        }
    }
    let mut hi = lo;
    let mut step = 0.5;
    loop {
        match tilted_cell_moments(rate, fugacities, hi + step) {
            Some((mean, var)) => {
                hi += step;
                if (mean - target_sum).abs() <= tol {
                    return Ok(var);
                }
                if mean > target_sum {
                    break;
                }
            }
            None => {
                step *= 0.5;
                if step < 1e-12 {
                    return Err(Error::UnreachableTarget(format!(
                        "cell sum {target_sum} beyond the radius of convergence"
                    )));
                }
            }
        }
        if hi > 700.0 {
            return Err(Error::UnreachableTarget(format!(
                "cell sum {target_sum} not attained by any finite tilt"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match tilted_cell_moments(rate, fugacities, mid) {
            Some((mean, var)) => {
                if (mean - target_sum).abs() <= tol {
                    return Ok(var);
                }
                if mean < target_sum {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            None => hi = mid,
        }
    }
    match tilted_cell_moments(rate, fugacities, lo) {
        Some((_, var)) => Ok(var),
        None => Err(Error::UnreachableTarget(format!(
            "tilt for cell sum {target_sum} did not converge"
        ))),
    }
}

/// Large-deviation rate of observing the coarse-grained density profile,
/// per site: the exact window probability `P(|S_c - K v_c| <= 1/2)` of each
/// coarse cell under the product steady state, with the local-limit prefactor
/// `sqrt(2 pi Var)` of the tilted cell sum removed, summed over cells and
/// divided by the cell size `K`.
///
/// When `samples > 0`, that many independent product-measure configurations
/// are drawn and the empirical window frequency is required to agree with the
/// exact probability wherever the window is likely enough to sample.
pub fn ldf_empirical(
    model: &ZrpModel,
    coarse_cells: usize,
    target_profile: &[f64],
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let l = model.sites;
    if coarse_cells == 0 || l % coarse_cells != 0 {
        return Err(Error::Invalid(format!(
            "{coarse_cells} coarse cells do not divide {l} sites"
        )));
    }
    if target_profile.len() != coarse_cells {
        return Err(Error::GridMismatch(format!(
            "{} targets for {coarse_cells} coarse cells",
            target_profile.len()
        )));
    }
    for &v in target_profile {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive {
                quantity: "target density",
                value: v,
            });
        }
    }
    let k = l / coarse_cells;
    let fugacities = ness_fugacity_profile(model);

    let mut rate_sum = 0.0;
    let mut log_p_joint = 0.0;
    let mut cell_measures = Vec::with_capacity(coarse_cells);
    let mut windows = Vec::with_capacity(coarse_cells);
    for c in 0..coarse_cells {
        let cell_z = &fugacities[c * k..(c + 1) * k];
        let measures: Vec<SingleSiteMeasure> = cell_z
            .iter()
            .map(|&z| SingleSiteMeasure::new(&model.rate, z, MEASURE_CAP))
            .collect::<Result<_>>()?;

        let kv = k as f64 * target_profile[c];
        let s_lo = ((kv - 0.5) - 1e-9).ceil().max(0.0) as usize;
        let s_hi = ((kv + 0.5) + 1e-9).floor() as usize;
        let dist = convolve_cell(&measures, s_hi);
        let window_p: f64 = (s_lo..=s_hi).map(|s| dist.get(s).copied().unwrap_or(0.0)).sum();
        if !(window_p > 1e-290) {
            return Err(Error::UnreachableTarget(format!(
                "coarse cell {c}: window around sum {kv} has probability \
                 {window_p} under the truncated product measure"
            )));
        }
        let var = tilted_variance_at(&model.rate, cell_z, kv)?;
        rate_sum += -window_p.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        log_p_joint += window_p.ln();
        cell_measures.push(measures);
        windows.push((s_lo, s_hi));
    }

    if samples > 0 {
        let mut hits = 0usize;
        for _ in 0..samples {
            let mut inside = true;
            for (measures, &(s_lo, s_hi)) in cell_measures.iter().zip(&windows) {
                let s: u64 = measures.iter().map(|m| m.sample(rng)).sum();
                if (s as usize) < s_lo || (s as usize) > s_hi {
                    inside = false;
                    break;
                }
            }
            if inside {
                hits += 1;
            }
        }
        let expected = samples as f64 * log_p_joint.exp();
        if expected >= 25.0 && (hits as f64 - expected).abs() > 10.0 * expected.sqrt() + 5.0 {
            return Err(Error::Invalid(format!(
                "window sampling cross-check failed: {hits} hits vs {expected:.1} \
                 expected over {samples} draws"
            )));
        }
    }
    Ok(rate_sum / k as f64)
}

/// Mean and standard error of a stationary series by non-overlapping batch
/// means, which absorbs autocorrelation into the between-batch variance.
pub fn batch_mean_se(series: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || series.len() < 2 * batches {
        return Err(Error::Invalid(format!(
            "{} points cannot fill {batches} batches",
            series.len()
        )));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (batches - 1) as f64;
    Ok((grand, (var / batches as f64).sqrt()))
}

/// Chi-square goodness of fit of an occupation histogram against reference
/// probabilities. Adjacent occupation values are pooled until each bin
/// carries expected count at least 5; returns (statistic, degrees of freedom,
/// p-value).
pub fn chi_square_goodness(observed: &[u64], probabilities: &[f64]) -> Result<(f64, usize, f64)> {
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Invalid("empty histogram".into()));
    }
    let t = total as f64;
    let len = observed.len().max(probabilities.len());
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut obs_acc = 0.0;
    let mut exp_acc = 0.0;
    for i in 0..len {
        obs_acc += observed.get(i).copied().unwrap_or(0) as f64;
        exp_acc += probabilities.get(i).copied().unwrap_or(0.0) * t;
        if exp_acc >= 5.0 {
            bins.push((obs_acc, exp_acc));
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    if obs_acc > 0.0 || exp_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs_acc;
                last.1 += exp_acc;
            }
            None => {
                return Err(Error::Invalid(
                    "not enough expected mass for a chi-square layout".into(),
                ))
            }
        }
    }
    if bins.len() < 2 {
        return Err(Error::Invalid(
            "fewer than two chi-square bins after pooling".into(),
        ));
    }
    let stat: f64 = bins
        .iter()
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64)
        .map_err(|e| Error::Invalid(format!("chi-square setup: {e}")))?;
    Ok((stat, dof, 1.0 - chi.cdf(stat)))
}
