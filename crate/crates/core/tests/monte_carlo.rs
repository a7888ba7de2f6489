//! Monte Carlo checks that need many replicates; each runs in seconds with
//! the optimized test profile.

use mstat_core::first_order::{first_order_test, hessian_process, FirstOrderConfig};
use mstat_core::frechet::{frechet_mean, FrechetConfig};
use mstat_core::geometry::{hessian, parallel_transport, TangentVector};
use mstat_core::par::map_indexed;
use mstat_core::second_order::{detrend, second_order_test, SecondOrderConfig};
use mstat_core::simulate::{simulate, simulate_local_alternative, FourierCurve, Model, SimSpec};
use mstat_core::{Execution, OrthonormalBasis};
use nalgebra::DMatrix;

#[test]
fn hessian_process_matches_population_average() {
    let sample = simulate(&SimSpec::new(Model::M1, 0.0, 500, 1)).unwrap();
    let (mu_hat, _) = frechet_mean(&sample, &FrechetConfig::default()).unwrap();
    let basis = OrthonormalBasis::standard(&mu_hat).unwrap();
    let h_t = hessian_process(&sample, &mu_hat, &basis).unwrap().pop().unwrap().matrix;

    // 200 fresh series of length 500: 10^5 draws over the same time profile
    let mu = Model::M1.base_point();
    let base = OrthonormalBasis::standard(&mu).unwrap();
    let parts = map_indexed(200, Execution::Parallel, |r| {
        let s = simulate(&SimSpec::new(Model::M1, 0.0, 500, 1000 + r as u64)).unwrap();
        let mut acc = DMatrix::zeros(6, 6);
        for x in s.points() {
            acc += hessian(&mu, x, &base).unwrap().matrix;
        }
        acc
    });
    let population = parts.iter().fold(DMatrix::zeros(6, 6), |a, b| a + b) / 100_000.0;

    // the two operators live at μ̂ and μ; compare in a common frame
    let moved = base.transported(&mu_hat).unwrap();
    let q = DMatrix::from_fn(6, 6, |i, j| {
        basis.coords(&moved.vector(j)).unwrap()[i]
    });
    let population_at_hat = &q * population * q.transpose();
    let gap = (&h_t - population_at_hat).svd(false, false).singular_values.max();
    assert!(gap <= 0.1, "operator-norm gap {gap}");
}

fn detrend_rms(seed: u64, bandwidth: usize) -> f64 {
    let s = simulate(&SimSpec::new(Model::M3Sphere, 0.0, 512, seed)).unwrap();
    let (mu_hat, _) = frechet_mean(&s, &FrechetConfig::default()).unwrap();
    let plain_basis = OrthonormalBasis::standard(&mu_hat).unwrap();
    let plain = s.log_coords(&plain_basis, Execution::Parallel).unwrap();
    let (coords, base) = detrend(&s, bandwidth).unwrap();
    let base_basis = OrthonormalBasis::standard(&base).unwrap();
    let mut sq = 0.0;
    for (i, c) in coords.column_iter().enumerate() {
        let v = TangentVector::new(&base, base_basis.ambient_of_coords(&c.into_owned())).unwrap();
        let at_hat = parallel_transport(&v, &base, &mu_hat).unwrap();
        let diff = plain_basis.coords(&at_hat).unwrap() - plain.column(i);
        sq += diff.norm_squared();
    }
    (sq / 512.0).sqrt()
}

#[test]
fn detrending_a_constant_mean_changes_little() {
    // the gap is the window-mean noise, about 1.2/sqrt(bandwidth) here, so a
    // constant mean is checked with a wide window
    for seed in 1..=5 {
        let rms = detrend_rms(seed, 256);
        assert!(rms <= 0.1, "seed {seed}: rms {rms}");
    }
}

fn mean_z(t: usize, reps: usize) -> (f64, f64) {
    let zs = map_indexed(reps, Execution::Parallel, |r| {
        let s = simulate(&SimSpec::new(Model::M3Sphere, 0.0, t, 50_000 + r as u64)).unwrap();
        let mut cfg = SecondOrderConfig::new(t / 8);
        cfg.exec = Execution::Sequential;
        second_order_test(&s, &cfg).unwrap().z
    });
    let n = reps as f64;
    let mean = zs.iter().sum::<f64>() / n;
    let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn null_z_bias_shrinks_with_length() {
    let (m256, se256) = mean_z(256, 500);
    let (m1024, se1024) = mean_z(1024, 500);
    assert!(m1024.abs() < m256.abs() + 0.1, "{m256} ± {se256} vs {m1024} ± {se1024}");
    // small either way: well inside one standard deviation of N(0, 1)
    assert!(m256.abs() < 0.5 && m1024.abs() < 0.5);
}

fn local_power(t: usize, rate: f64, reps: usize) -> f64 {
    let b = FourierCurve::single_cosine(6, 0, 1, 4.0);
    let rejections = map_indexed(reps, Execution::Parallel, |r| {
        let spec = SimSpec::new(Model::M1, 0.0, t, 80_000 + r as u64);
        let s = simulate_local_alternative(&spec, &b, rate).unwrap();
        let cfg = FirstOrderConfig {
            bootstrap_b: 500,
            seed: r as u64,
            exec: Execution::Sequential,
            ..Default::default()
        };
        first_order_test(&s, &cfg).unwrap().reject
    });
    rejections.iter().filter(|&&x| x).count() as f64 / reps as f64
}

#[test]
fn fixed_alternative_is_detected() {
    // τ(T) = 0.5 held fixed: rate = 0.5·√T
    let t = 1000;
    let power = local_power(t, 0.5 * (t as f64).sqrt(), 200);
    assert!(power >= 0.9, "power {power}");
}

#[test]
fn root_t_alternative_has_nontrivial_power() {
    let power = local_power(500, 1.0, 500);
    assert!(power > 0.08 && power < 0.97, "power {power}");
}
