//! Shared stochastic drivers: Wiener increments on a uniform grid, the marked
//! Poisson event stream, and integration against the intensity measure.
//!
//! Every sampler is a pure function of its seed and structural arguments.
//! Each kind of draw uses its own ChaCha stream so that, for one seed, the
//! Wiener path and the jump stream are independent and individually
//! reproducible.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

const WIENER_STREAM: u64 = 0;
const JUMP_STREAM: u64 = 1;
// Refinement streams are offset by the coarse step count so that successive
// refinements of one path draw independent bridge noise.
const REFINE_STREAM_BASE: u64 = 1 << 32;

/// Number of Gauss-Legendre nodes used for uniform mark laws. Exact for
/// polynomial integrands up to degree 31.
pub const GAUSS_LEGENDRE_NODES: usize = 16;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of the `index`-th path under a master seed (counter offset).
pub fn path_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index)
}

/// Uniform grid `t_j = j * T / N`, `j = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidDimension("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of node `j`; `node(N)` is exactly the horizon.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.steps);
        if j == self.steps {
            self.horizon
        } else {
            self.horizon * j as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|j| self.node(j))
    }

    /// Index `j` of the step `(t_j, t_{j+1}]` that contains `tau`.
    pub fn step_containing(&self, tau: f64) -> usize {
        let last = self.steps - 1;
        let guess = (tau / self.dt()).ceil();
        let mut j = if guess <= 1.0 {
            0
        } else {
            ((guess as usize) - 1).min(last)
        };
        while j > 0 && tau <= self.node(j) {
            j -= 1;
        }
        while j < last && tau > self.node(j + 1) {
            j += 1;
        }
        j
    }

    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.steps * factor)
    }
}

/// Increments of an `m`-dimensional Wiener process over a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    dim: usize,
    // row-major: increments[j * dim + k]
    increments: Vec<f64>,
}

impl WienerPath {
    /// Wraps explicit increments (row-major, `N x m`).
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("Wiener dimension must be >= 1".into()));
        }
        if increments.len() != grid.steps() * dim {
            return Err(Error::InvalidDimension(format!(
                "expected {} increments, got {}",
                grid.steps() * dim,
                increments.len()
            )));
        }
        if let Some(bad) = increments.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite Wiener increment at index {bad}"
            )));
        }
        Ok(Self {
            grid,
            dim,
            increments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Increments `dW_k` over step `j`.
    pub fn step(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    pub fn increment(&self, j: usize, k: usize) -> f64 {
        self.increments[j * self.dim + k]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(t_j)`, the cumulative sum of the first `j` increments.
    pub fn value_at(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for i in 0..j {
            for (wk, dw) in w.iter_mut().zip(self.step(i)) {
                *wk += dw;
            }
        }
        w
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.value_at(self.grid.steps())
    }
}

/// Draws `N x m` independent `N(0, dt)` increments.
pub fn sample_wiener(grid: TimeGrid, m: usize, seed: u64) -> Result<WienerPath> {
    if m == 0 {
        return Err(Error::InvalidDimension("Wiener dimension must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, WIENER_STREAM);
    let sd = grid.dt().sqrt();
    let increments = (0..grid.steps() * m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(WienerPath {
        grid,
        dim: m,
        increments,
    })
}

/// Refines a path by `factor`, filling each coarse step with a Brownian bridge
/// conditioned on the coarse increment. Block sums are preserved.
pub fn refine(path: &WienerPath, factor: usize, seed: u64) -> Result<WienerPath> {
    if factor < 2 {
        return Err(Error::InvalidArgument(format!(
            "refinement factor must be >= 2, got {factor}"
        )));
    }
    let coarse = path.grid();
    let grid = coarse.refined(factor)?;
    let m = path.dim();
    let fine_dt = grid.dt();
    let mut rng = stream_rng(seed, REFINE_STREAM_BASE + coarse.steps() as u64);
    let mut increments = vec![0.0; grid.steps() * m];

    for j in 0..coarse.steps() {
        for k in 0..m {
            let mut remaining = path.increment(j, k);
            for i in 0..factor - 1 {
                let left = (factor - i) as f64;
                // X | remaining ~ N(remaining / left, dt (1 - 1/left))
                let mean = remaining / left;
                let sd = (fine_dt * (1.0 - 1.0 / left)).sqrt();
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = mean + sd * z;
                increments[(j * factor + i) * m + k] = x;
                remaining -= x;
            }
            increments[(j * factor + factor - 1) * m + k] = remaining;
        }
    }
    Ok(WienerPath {
        grid,
        dim: m,
        increments,
    })
}

/// Law `mu` of the jump marks.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkDistribution {
    PointMass(f64),
    Uniform { low: f64, high: f64 },
    /// Finite support; weights are normalized by [`IntensitySpec::new`].
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl MarkDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarkDistribution::PointMass(g) => *g,
            MarkDistribution::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + (high - low) * u
            }
            MarkDistribution::Discrete { values, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
        }
    }

    /// Representative marks covering the support, used as derivative probes.
    pub fn support_probes(&self) -> Vec<f64> {
        match self {
            MarkDistribution::PointMass(g) => vec![*g],
            MarkDistribution::Uniform { low, high } => vec![*low, 0.5 * (low + high), *high],
            MarkDistribution::Discrete { values, .. } => values.clone(),
        }
    }

    pub fn contains(&self, mark: f64) -> bool {
        match self {
            MarkDistribution::PointMass(g) => mark == *g,
            MarkDistribution::Uniform { low, high } => *low <= mark && mark <= *high,
            MarkDistribution::Discrete { values, .. } => values.contains(&mark),
        }
    }
}

/// Finite intensity measure `Pi(dγ) = rate * mu(dγ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySpec {
    rate: f64,
    marks: MarkDistribution,
}

impl IntensitySpec {
    pub fn new(rate: f64, marks: MarkDistribution) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "jump rate must be finite and >= 0, got {rate}"
            )));
        }
        let marks = match marks {
            MarkDistribution::PointMass(g) if !g.is_finite() => {
                return Err(Error::InvalidArgument("point-mass mark must be finite".into()))
            }
            MarkDistribution::Uniform { low, high }
                if !(low.is_finite() && high.is_finite() && low < high) =>
            {
                return Err(Error::InvalidArgument(format!(
                    "uniform marks need finite low < high, got ({low}, {high})"
                )))
            }
            MarkDistribution::Discrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::InvalidArgument(
                        "discrete marks need matching non-empty values and weights".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite())
                    || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                {
                    return Err(Error::InvalidArgument(
                        "discrete marks need finite values and non-negative weights".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidArgument("discrete weights sum to zero".into()));
                }
                MarkDistribution::Discrete {
                    values,
                    weights: weights.into_iter().map(|w| w / total).collect(),
                }
            }
            other => other,
        };
        Ok(Self { rate, marks })
    }

    pub fn none() -> Self {
        Self {
            rate: 0.0,
            marks: MarkDistribution::PointMass(0.0),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn marks(&self) -> &MarkDistribution {
        &self.marks
    }

    /// `∫ h(γ) Pi(dγ) = rate * E_mu[h]`.
    pub fn integrate<H>(&self, mut h: H) -> Result<f64>
    where
        H: FnMut(f64) -> f64,
    {
        let mut out = [0.0];
        self.integrate_into(&mut out, |g, v| v[0] = h(g))?;
        Ok(out[0])
    }

    /// Component-wise `∫ h(γ) Pi(dγ)` for a vector-valued integrand writing
    /// into its second argument; the result lands in `out`.
    pub fn integrate_into<H>(&self, out: &mut [f64], mut h: H) -> Result<()>
    where
        H: FnMut(f64, &mut [f64]),
    {
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut eval = |g: f64, weight: f64, out: &mut [f64]| -> Result<()> {
            h(g, &mut buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integrability { mark: g });
            }
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += weight * v;
            }
            Ok(())
        };
        match &self.marks {
            MarkDistribution::PointMass(g) => eval(*g, 1.0, out)?,
            MarkDistribution::Uniform { low, high } => {
                let mid = 0.5 * (low + high);
                let half = 0.5 * (high - low);
                // E_mu[h] = (1/2) ∫_{-1}^{1} h(mid + half s) ds
                for (s, w) in gauss_legendre() {
                    eval(mid + half * s, 0.5 * w, out)?;
                }
            }
            MarkDistribution::Discrete { values, weights } => {
                for (v, w) in values.iter().zip(weights) {
                    eval(*v, *w, out)?;
                }
            }
        }
        out.iter_mut().for_each(|o| *o *= self.rate);
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_LEGENDRE_NODES;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            // Chebyshev-type initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// Realization of the Poisson random measure on `(0, T] x marks`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedJumpStream {
    horizon: f64,
    events: Vec<JumpEvent>,
}

impl MarkedJumpStream {
    pub fn empty(horizon: f64) -> Self {
        Self {
            horizon,
            events: Vec::new(),
        }
    }

    /// Builds a stream from explicit events, which must be strictly increasing
    /// in time and lie in `(0, horizon]`.
    pub fn from_events(horizon: f64, events: Vec<JumpEvent>) -> Result<Self> {
        let mut prev = 0.0;
        for e in &events {
            if !(e.time > prev && e.time <= horizon && e.mark.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "jump event at t={} out of order or outside (0, {horizon}]",
                    e.time
                )));
            }
            prev = e.time;
        }
        Ok(Self { horizon, events })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Samples the marked event stream on `(0, T]`: Poisson(rate*T) events at
/// i.i.d. uniform times, i.i.d. marks.
pub fn sample_jumps(intensity: &IntensitySpec, horizon: f64, seed: u64) -> Result<MarkedJumpStream> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mean = intensity.rate() * horizon;
    if mean == 0.0 {
        return Ok(MarkedJumpStream::empty(horizon));
    }
    let mut rng = stream_rng(seed, JUMP_STREAM);
    let poisson = Poisson::new(mean)
        .map_err(|e| Error::InvalidArgument(format!("Poisson mean {mean}: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;

    // 1 - u with u in [0, 1) lands in (0, 1].
    let draw = |rng: &mut ChaCha8Rng| horizon * (1.0 - rng.random::<f64>());
    let mut times: Vec<f64> = (0..count).map(|_| draw(&mut rng)).collect();
    times.sort_by(f64::total_cmp);
    while let Some(i) = (1..times.len()).find(|&i| times[i] == times[i - 1]) {
        times[i] = draw(&mut rng);
        times.sort_by(f64::total_cmp);
    }

    let events = times
        .into_iter()
        .map(|time| JumpEvent {
            time,
            mark: intensity.marks().sample(&mut rng),
        })
        .collect();
    Ok(MarkedJumpStream { horizon, events })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_hit_endpoints() {
        let g = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3), 0.7);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(matches!(TimeGrid::new(1.0, 0), Err(Error::InvalidDimension(_))));
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn step_containing_uses_half_open_intervals() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.step_containing(0.25), 0);
        assert_eq!(g.step_containing(0.250001), 1);
        assert_eq!(g.step_containing(1e-300), 0);
        assert_eq!(g.step_containing(1.0), 3);
        assert_eq!(g.step_containing(0.5), 1);
    }

    #[test]
    fn wiener_is_deterministic() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let a = sample_wiener(g, 2, 11).unwrap();
        let b = sample_wiener(g, 2, 11).unwrap();
        assert_eq!(a.increments().len(), 4);
        assert_eq!(a, b);
        assert_ne!(a, sample_wiener(g, 2, 12).unwrap());
        assert_eq!(a.value_at(0), vec![0.0, 0.0]);
    }

    #[test]
    fn wiener_rejects_zero_dimension() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(matches!(sample_wiener(g, 0, 1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn zero_rate_gives_empty_stream() {
        let spec = IntensitySpec::new(0.0, MarkDistribution::Uniform { low: 0.0, high: 1.0 }).unwrap();
        assert!(sample_jumps(&spec, 3.0, 5).unwrap().is_empty());
    }

    #[test]
    fn jumps_reject_bad_horizon() {
        assert!(sample_jumps(&IntensitySpec::none(), 0.0, 1).is_err());
    }

    #[test]
    fn integrate_closed_forms() {
        let u = IntensitySpec::new(2.0, MarkDistribution::Uniform { low: 0.0, high: 1.0 }).unwrap();
        assert!((u.integrate(|g| g).unwrap() - 1.0).abs() < 1e-15);
        assert!((u.integrate(|_| 1.0).unwrap() - 2.0).abs() < 1e-15);
        let u3 = IntensitySpec::new(3.0, MarkDistribution::Uniform { low: 0.0, high: 1.0 }).unwrap();
        assert!((u3.integrate(|g| g * g).unwrap() - 1.0).abs() < 1e-12);

        let p = IntensitySpec::new(1.5, MarkDistribution::PointMass(2.0)).unwrap();
        assert_eq!(p.integrate(|g| g * g).unwrap(), 6.0);

        let d = IntensitySpec::new(
            4.0,
            MarkDistribution::Discrete {
                values: vec![-1.0, 3.0],
                weights: vec![3.0, 1.0],
            },
        )
        .unwrap();
        assert_eq!(d.integrate(|_| 1.0).unwrap(), 4.0);
        assert!((d.integrate(|g| g).unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_flags_non_finite_integrand() {
        let u = IntensitySpec::new(1.0, MarkDistribution::Uniform { low: -1.0, high: 1.0 }).unwrap();
        assert!(matches!(
            u.integrate(|g| 1.0 / (g - g)),
            Err(Error::Integrability { .. })
        ));
    }

    #[test]
    fn gauss_legendre_is_polynomially_exact() {
        // ∫_{-1}^{1} s^30 ds = 2/31
        let sum: f64 = gauss_legendre().iter().map(|(s, w)| w * s.powi(30)).sum();
        assert!((sum - 2.0 / 31.0).abs() < 1e-14);
        let total: f64 = gauss_legendre().iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn refine_preserves_block_sums() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let w = sample_wiener(g, 2, 3).unwrap();
        let fine = refine(&w, 2, 3).unwrap();
        assert_eq!(fine.grid().steps(), 16);
        for j in 0..8 {
            for k in 0..2 {
                let s = fine.increment(2 * j, k) + fine.increment(2 * j + 1, k);
                assert!((s - w.increment(j, k)).abs() <= 1e-15);
            }
        }
        assert!(matches!(refine(&w, 1, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn from_events_rejects_unsorted() {
        let e = |time, mark| JumpEvent { time, mark };
        assert!(MarkedJumpStream::from_events(1.0, vec![e(0.5, 1.0), e(0.4, 1.0)]).is_err());
        assert!(MarkedJumpStream::from_events(1.0, vec![e(0.0, 1.0)]).is_err());
        assert!(MarkedJumpStream::from_events(1.0, vec![e(1.5, 1.0)]).is_err());
        assert!(MarkedJumpStream::from_events(1.0, vec![e(0.2, 1.0), e(1.0, 2.0)]).is_ok());
    }
}
