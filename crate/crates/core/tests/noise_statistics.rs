//! Monte Carlo checks of the noise generators against closed-form moments,
//! at 10⁴ samples and a three-standard-error band.

use itowentzell::noise::{
    refine, sample_jumps, sample_wiener, IntensitySpec, MarkDistribution, TimeGrid, WienerPath,
};
use proptest::prelude::*;

const SAMPLES: u64 = 10_000;

struct Moments {
    mean: f64,
    var: f64,
    n: f64,
}

fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Moments { mean, var, n }
}

/// Standard error of the sample variance for a law with the given
/// variance and fourth central moment.
fn var_standard_error(var: f64, mu4: f64, n: f64) -> f64 {
    ((mu4 - var * var * (n - 3.0) / (n - 1.0)) / n).sqrt()
}

fn within_three_se(estimate: f64, truth: f64, se: f64) -> bool {
    (estimate - truth).abs() <= 3.0 * se
}

#[test]
fn terminal_wiener_value_has_unit_variance() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let w: Vec<f64> = (0..SAMPLES)
        .map(|s| sample_wiener(grid, 1, s).unwrap().terminal()[0])
        .collect();
    let m = moments(&w);
    let se_var = var_standard_error(1.0, 3.0, m.n);
    assert!(within_three_se(m.var, 1.0, se_var), "var {} se {se_var}", m.var);
    assert!(within_three_se(m.mean, 0.0, (1.0 / m.n).sqrt()), "mean {}", m.mean);
}

#[test]
fn single_increments_have_variance_dt_per_component() {
    let grid = TimeGrid::new(2.0, 8).unwrap();
    let dt = grid.dt();
    for k in 0..3 {
        let xs: Vec<f64> = (0..SAMPLES)
            .map(|s| sample_wiener(grid, 3, s).unwrap().increment(5, k))
            .collect();
        let m = moments(&xs);
        let se = var_standard_error(dt, 3.0 * dt * dt, m.n);
        assert!(within_three_se(m.var, dt, se), "k={k}: var {} vs {dt}", m.var);
        assert!(within_three_se(m.mean, 0.0, (dt / m.n).sqrt()));
    }
}

#[test]
fn poisson_counts_match_rate() {
    let pi = IntensitySpec::new(5.0, MarkDistribution::PointMass(1.0)).unwrap();
    let counts: Vec<f64> = (0..SAMPLES)
        .map(|s| sample_jumps(&pi, 2.0, s).unwrap().len() as f64)
        .collect();
    let m = moments(&counts);
    assert!(within_three_se(m.mean, 10.0, (10.0 / m.n).sqrt()), "mean {}", m.mean);
    // Poisson(μ): variance μ, fourth central moment μ(1 + 3μ)
    let se = var_standard_error(10.0, 10.0 * 31.0, m.n);
    assert!(within_three_se(m.var, 10.0, se), "var {}", m.var);
}

#[test]
fn event_times_are_uniform_on_horizon() {
    let pi = IntensitySpec::new(3.0, MarkDistribution::PointMass(0.0)).unwrap();
    let mut times = Vec::new();
    for s in 0..SAMPLES / 3 {
        let stream = sample_jumps(&pi, 2.0, s).unwrap();
        for w in stream.events().windows(2) {
            assert!(w[0].time < w[1].time);
        }
        times.extend(stream.events().iter().map(|e| e.time));
    }
    assert!(times.iter().all(|&t| t > 0.0 && t <= 2.0));
    let m = moments(&times);
    // Uniform(0, 2): mean 1, variance 1/3
    assert!(within_three_se(m.mean, 1.0, (1.0 / 3.0 / m.n).sqrt()), "mean {}", m.mean);
}

#[test]
fn uniform_mark_moments() {
    let pi = IntensitySpec::new(4.0, MarkDistribution::Uniform { low: -0.5, high: 1.5 }).unwrap();
    let mut marks = Vec::new();
    let mut s = 0;
    while marks.len() < SAMPLES as usize {
        marks.extend(sample_jumps(&pi, 1.0, s).unwrap().events().iter().map(|e| e.mark));
        s += 1;
    }
    marks.truncate(SAMPLES as usize);
    assert!(marks.iter().all(|&g| (-0.5..=1.5).contains(&g)));
    let m = moments(&marks);
    // Uniform on an interval of width 2: variance 1/3, fourth central moment 1/5
    let var = 1.0 / 3.0;
    assert!(within_three_se(m.mean, 0.5, (var / m.n).sqrt()), "mean {}", m.mean);
    let se = var_standard_error(var, 0.2, m.n);
    assert!(within_three_se(m.var, var, se), "var {}", m.var);
}

#[test]
fn discrete_mark_frequencies() {
    let pi = IntensitySpec::new(
        6.0,
        MarkDistribution::Discrete {
            values: vec![-1.0, 0.5, 2.0],
            weights: vec![1.0, 2.0, 1.0],
        },
    )
    .unwrap();
    let mut marks = Vec::new();
    let mut s = 0;
    while marks.len() < SAMPLES as usize {
        marks.extend(sample_jumps(&pi, 1.0, s).unwrap().events().iter().map(|e| e.mark));
        s += 1;
    }
    marks.truncate(SAMPLES as usize);
    let n = marks.len() as f64;
    for (value, p) in [(-1.0, 0.25), (0.5, 0.5), (2.0, 0.25)] {
        let freq = marks.iter().filter(|&&g| g == value).count() as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!(within_three_se(freq, p, se), "mark {value}: {freq} vs {p}");
    }
}

#[test]
fn bridge_fill_in_has_conditional_variance() {
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let (dt_c, factor) = (grid.dt(), 4usize);
    let dt_f = dt_c / factor as f64;
    let target = dt_f * (1.0 - dt_f / dt_c);
    // the fine increment minus its conditional mean is independent of the
    // coarse increment and carries exactly the bridge variance
    let xs: Vec<f64> = (0..SAMPLES)
        .map(|s| {
            let coarse = sample_wiener(grid, 1, s).unwrap();
            let fine = refine(&coarse, factor, s).unwrap();
            fine.increment(4 * 2 + 1, 0) - coarse.increment(2, 0) / factor as f64
        })
        .collect();
    let m = moments(&xs);
    let se = var_standard_error(target, 3.0 * target * target, m.n);
    assert!(within_three_se(m.var, target, se), "var {} vs {target}", m.var);
    assert!(within_three_se(m.mean, 0.0, (target / m.n).sqrt()));
}

fn block_sum_error(coarse: &WienerPath, fine: &WienerPath, factor: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..coarse.grid().steps() {
        for k in 0..coarse.dim() {
            let sum: f64 = (0..factor).map(|r| fine.increment(j * factor + r, k)).sum();
            worst = worst.max((sum - coarse.increment(j, k)).abs());
        }
    }
    worst
}

#[test]
fn refinement_preserves_terminal_value() {
    let coarse = sample_wiener(TimeGrid::new(3.0, 16).unwrap(), 2, 11).unwrap();
    let fine = refine(&refine(&coarse, 2, 1).unwrap(), 8, 2).unwrap();
    assert_eq!(fine.grid().steps(), 256);
    for (a, b) in coarse.terminal().iter().zip(fine.terminal()) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(block_sum_error(&coarse, &fine, 16) < 1e-15);
}

proptest! {
    #[test]
    fn refine_block_sums_are_exact(
        steps in 1usize..40,
        m in 1usize..4,
        factor in 2usize..9,
        horizon in 0.01f64..10.0,
        seed in any::<u64>(),
        refine_seed in any::<u64>(),
    ) {
        let coarse = sample_wiener(TimeGrid::new(horizon, steps).unwrap(), m, seed).unwrap();
        let fine = refine(&coarse, factor, refine_seed).unwrap();
        prop_assert_eq!(fine.grid().steps(), steps * factor);
        prop_assert_eq!(fine.dim(), m);
        // block sums carry the coarse increment up to the rounding of a
        // `factor`-term sum of O(sqrt(dt)) numbers
        let scale = coarse.increments().iter().fold(1.0f64, |s, v| s.max(v.abs()));
        prop_assert!(block_sum_error(&coarse, &fine, factor) <= 1e-15 * scale.max(1.0) * factor as f64);
    }

    #[test]
    fn sampled_streams_are_valid(rate in 0.0f64..20.0, horizon in 0.1f64..5.0, seed in any::<u64>()) {
        let pi = IntensitySpec::new(rate, MarkDistribution::Uniform { low: -1.0, high: 2.0 }).unwrap();
        let s = sample_jumps(&pi, horizon, seed).unwrap();
        prop_assert_eq!(&s, &sample_jumps(&pi, horizon, seed).unwrap());
        for w in s.events().windows(2) {
            prop_assert!(w[0].time < w[1].time);
        }
        for e in s.events() {
            prop_assert!(e.time > 0.0 && e.time <= horizon);
            prop_assert!(pi.marks().contains(e.mark));
        }
    }
}
