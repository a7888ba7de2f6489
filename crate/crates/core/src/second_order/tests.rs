use super::*;
use crate::geometry::{exp_map, Manifold};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_coords(d: usize, t: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, t, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn euclidean(coords: &DMatrix<f64>) -> ManifoldSeries {
    let rows = coords.column_iter().map(|c| c.into_owned()).collect();
    ManifoldSeries::from_coords(Manifold::euclidean(coords.nrows()), rows).unwrap()
}

fn sphere_series(t: usize, seed: u64) -> (ManifoldSeries, Point) {
    let m = Manifold::sphere(3);
    let pole = m.point(DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0])).unwrap();
    let b = OrthonormalBasis::standard(&pole).unwrap();
    let c = gaussian_coords(3, t, seed) * 0.3;
    let pts = c
        .column_iter()
        .map(|v| exp_map(&pole, &b.vector_from_coords(&v.into_owned())).unwrap())
        .collect();
    let s = ManifoldSeries::new(m, pts).unwrap();
    let (mu, _) = frechet_mean(&s, &FrechetConfig::default()).unwrap();
    (s, mu)
}

fn rotation(d: usize, seed: u64) -> DMatrix<f64> {
    gaussian_coords(d, d, seed).qr().q()
}

/// Direct evaluation with explicit periodogram matrices and `tr(AB*)`.
fn literal_terms(coords: &DMatrix<f64>, n: usize) -> (f64, f64, f64, f64) {
    let d = coords.nrows();
    let t = coords.ncols();
    let m = t / n;
    let dft = |j: usize, k: usize| -> DVector<Complex<f64>> {
        let w = 2.0 * PI * k as f64 / n as f64;
        let mut acc = DVector::from_element(d, Complex::new(0.0, 0.0));
        for h in 0..n {
            let e = Complex::new(0.0, -(h as f64) * w).exp();
            acc += coords.column(j * n + h).map(|x| Complex::new(x, 0.0)) * e;
        }
        acc.unscale((2.0 * PI * n as f64).sqrt())
    };
    let per = |j, k| {
        let v = dft(j, k);
        &v * v.adjoint()
    };
    let hs = |a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>| (a * b.adjoint()).trace().re;
    let (mut lag, mut w, mut avg, mut sig) = (0.0, 0.0, 0.0, 0.0);
    for k in 1..=n / 2 {
        let mut mean_k = DMatrix::from_element(d, d, Complex::new(0.0, 0.0));
        let mut cross = 0.0;
        for j in 0..m {
            let (a, b) = (per(j, k), per(j, k - 1));
            lag += hs(&a, &b);
            w += a.trace().re * b.trace().re;
            cross += hs(&b, &a);
            mean_k += a;
        }
        mean_k /= Complex::new(m as f64, 0.0);
        avg += hs(&mean_k, &mean_k);
        sig += (cross / m as f64).powi(2);
    }
    let tf = t as f64;
    (
        4.0 * PI / tf * lag,
        4.0 * PI / (m as f64 * tf) * w,
        4.0 * PI / n as f64 * avg,
        16.0 * PI * PI / n as f64 * sig,
    )
}

#[test]
fn zero_frequency_dft_is_scaled_sum() {
    let (s, mu) = sphere_series(40, 1);
    let basis = OrthonormalBasis::standard(&mu).unwrap();
    let lp = local_periodogram(&s, &mu, &basis, 0.0, 0.5, 8).unwrap();
    let coords = s.log_coords(&basis, Execution::Sequential).unwrap();
    // ⌊0.5·40⌋ = 20 → window 17..=24
    let mut sum = DVector::zeros(3);
    for i in 16..24 {
        sum += coords.column(i);
    }
    sum /= (2.0 * PI * 8.0).sqrt();
    for (z, x) in lp.j.iter().zip(sum.iter()) {
        assert_relative_eq!(z.re, *x, epsilon = 1e-14);
        assert_eq!(z.im, 0.0);
    }
}

#[test]
fn constant_series_has_zero_periodogram() {
    let (s, _) = sphere_series(1, 2);
    let p = s.points()[0].clone();
    let c = ManifoldSeries::new(s.manifold(), vec![p.clone(); 32]).unwrap();
    let basis = OrthonormalBasis::standard(&p).unwrap();
    let lp = local_periodogram(&c, &p, &basis, 1.0, 0.5, 8).unwrap();
    assert_eq!(lp.norm_sqr(), 0.0);
    assert!(lp.matrix().iter().all(|z| z.norm() == 0.0));
    let (terms, per) = v2_statistic(&c, &p, &basis, &SecondOrderConfig::new(8)).unwrap();
    assert_eq!(terms.v2, 0.0);
    assert_eq!(terms.w, 0.0);
    assert_eq!(sigma2_estimator(&per).unwrap_err().code(), "degenerate");
    assert_eq!(second_order_test(&c, &SecondOrderConfig::new(8)).unwrap_err().code(), "degenerate");
}

#[test]
fn parseval_identity() {
    let (s, mu) = sphere_series(64, 3);
    let basis = OrthonormalBasis::standard(&mu).unwrap();
    let n = 16;
    let energy: f64 = (0..n)
        .map(|k| {
            local_periodogram(&s, &mu, &basis, fourier_frequency(k, n), 0.25, n)
                .unwrap()
                .norm_sqr()
        })
        .sum();
    let coords = s.log_coords(&basis, Execution::Sequential).unwrap();
    // ⌊0.25·64⌋ = 16 → window 9..=24
    let direct: f64 = (8..24).map(|i| coords.column(i).norm_squared()).sum::<f64>() / (2.0 * PI);
    assert_relative_eq!(energy, direct, epsilon = 1e-9);
}

#[test]
fn periodogram_is_hermitian_rank_one() {
    let (s, mu) = sphere_series(32, 4);
    let basis = OrthonormalBasis::standard(&mu).unwrap();
    let lp = local_periodogram(&s, &mu, &basis, 0.7, 0.5, 8).unwrap();
    let i = lp.matrix();
    assert_relative_eq!((&i - i.adjoint()).norm(), 0.0, epsilon = 1e-15);
    assert_relative_eq!(i.trace().re, lp.norm_sqr(), epsilon = 1e-10);
    let sv = i.singular_values();
    assert!(sv[1] <= 1e-12 * sv[0].max(1.0));
    let e = i.map(|z| z.re).symmetric_eigen().eigenvalues;
    assert!(e.iter().all(|&x| x >= -1e-12));
}

#[test]
fn window_errors_and_boundary_shift() {
    let (s, mu) = sphere_series(32, 5);
    let basis = OrthonormalBasis::standard(&mu).unwrap();
    // ⌊0.9·32⌋ = 28 → window 25..=32 is fine, 0.95 runs past the end
    assert!(local_periodogram(&s, &mu, &basis, 0.0, 0.9, 8).is_ok());
    let err = local_periodogram(&s, &mu, &basis, 0.0, 0.95, 8).unwrap_err();
    assert!(err.to_string().contains("window"));
    // ⌊tT⌋ = n/2 − 1 would start at index 0
    let shifted = local_periodogram(&s, &mu, &basis, 0.0, 3.0 / 32.0, 8).unwrap();
    let first = local_periodogram(&s, &mu, &basis, 0.0, 4.0 / 32.0, 8).unwrap();
    assert_eq!(shifted.j, first.j);
    assert!(local_periodogram(&s, &mu, &basis, 0.0, 0.5, 7).is_err());
}

#[test]
fn block_layouts() {
    assert_eq!(block_layout(32, 8, None).unwrap(), (vec![0, 8, 16, 24], 0, false));
    assert_eq!(block_layout(37, 8, None).unwrap(), (vec![0, 8, 16, 24], 5, false));
    assert_eq!(block_layout(32, 8, Some(&[1, 9, 17, 25])).unwrap(), (vec![0, 8, 16, 24], 0, false));
    let (starts, dropped, non_tiling) = block_layout(37, 8, Some(&[1, 8, 15, 22, 30])).unwrap();
    assert_eq!(starts, vec![0, 7, 14, 21, 29]);
    assert_eq!(dropped, 0);
    assert!(non_tiling);
    assert!(block_layout(37, 8, Some(&[31])).is_err());
    assert!(block_layout(37, 8, Some(&[0])).is_err());
    assert!(block_layout(37, 9, None).is_err());
    assert!(block_layout(6, 8, None).is_err());
}

#[test]
fn engine_matches_literal_formulas() {
    for (d, t, n) in [(1, 64, 8), (3, 96, 12), (6, 80, 16)] {
        let c = gaussian_coords(d, t, d as u64);
        let (starts, _, _) = block_layout(t, n, None).unwrap();
        let p = periodograms_from_coords(&c, n, &starts, Execution::Sequential);
        let terms = v2_from_periodograms(&p);
        let (lag, w, avg, sig) = literal_terms(&c, n);
        assert_relative_eq!(terms.lag_term, lag, max_relative = 1e-10);
        assert_relative_eq!(terms.w, w, max_relative = 1e-10);
        assert_relative_eq!(terms.average_term, avg, max_relative = 1e-10);
        assert_relative_eq!(terms.v2, lag + w - avg, epsilon = 1e-10);
        assert_relative_eq!(sigma2_estimator(&p).unwrap(), sig, max_relative = 1e-10);
    }
}

#[test]
fn null_mean_of_v2_is_zero() {
    // i.i.d. N(0,1), T = 1024, n = 8
    let reps = 200;
    let v: Vec<f64> = (0..reps)
        .map(|r| {
            let s = euclidean(&gaussian_coords(1, 1024, 1000 + r));
            let (mu, _) = frechet_mean(&s, &FrechetConfig::default()).unwrap();
            let basis = OrthonormalBasis::standard(&mu).unwrap();
            v2_statistic(&s, &mu, &basis, &SecondOrderConfig::new(8)).unwrap().0.v2
        })
        .collect();
    let mean = v.iter().sum::<f64>() / reps as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let se = sd / (reps as f64).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean {mean:e}, se {se:e}");
}

#[test]
fn null_variance_estimate() {
    let c = gaussian_coords(1, 4096, 77);
    let (starts, _, _) = block_layout(4096, 16, None).unwrap();
    let p = periodograms_from_coords(&c, 16, &starts, Execution::Sequential);
    let s2 = sigma2_estimator(&p).unwrap();
    let target = 1.0 / (2.0 * PI * PI);
    assert!((s2 / target - 1.0).abs() < 0.25, "σ̂² = {s2}");
}

#[test]
fn sigma2_scales_with_eighth_power() {
    let c = gaussian_coords(2, 128, 8);
    let (starts, _, _) = block_layout(128, 16, None).unwrap();
    let s1 = sigma2_estimator(&periodograms_from_coords(&c, 16, &starts, Execution::Sequential)).unwrap();
    let s2 = sigma2_estimator(&periodograms_from_coords(&(&c * 1.7), 16, &starts, Execution::Sequential)).unwrap();
    assert_relative_eq!(s2 / s1, 1.7f64.powi(8), max_relative = 1e-10);
}

#[test]
fn statistics_are_basis_invariant() {
    let (s, mu) = sphere_series(128, 9);
    let basis = OrthonormalBasis::standard(&mu).unwrap();
    let rotated = basis.rotated(&rotation(3, 10)).unwrap();
    let cfg = SecondOrderConfig::new(16);
    let (t1, p1) = v2_statistic(&s, &mu, &basis, &cfg).unwrap();
    let (t2, p2) = v2_statistic(&s, &mu, &rotated, &cfg).unwrap();
    assert_relative_eq!(t1.v2, t2.v2, epsilon = 1e-10);
    assert_relative_eq!(t1.w, t2.w, epsilon = 1e-10);
    assert_relative_eq!(sigma2_estimator(&p1).unwrap(), sigma2_estimator(&p2).unwrap(), epsilon = 1e-10);
}

#[test]
fn report_is_consistent() {
    let s = euclidean(&gaussian_coords(2, 256, 11));
    let r = second_order_test(&s, &SecondOrderConfig::new(32)).unwrap();
    assert_eq!(r.m, 8);
    assert!((0.0..=1.0).contains(&r.p_value));
    assert!(r.sigma2_hat > 0.0 && r.w_hat >= 0.0);
    assert_relative_eq!(r.z, 16.0 * r.v2_hat / r.sigma2_hat.sqrt(), epsilon = 1e-12);
    assert_relative_eq!(r.p_value, 1.0 - Normal::standard().cdf(r.z), epsilon = 1e-12);
    assert_eq!(r.reject, r.p_value <= 0.05);
    assert!(r.warnings.is_empty());
    let again = second_order_test(&s, &SecondOrderConfig::new(32)).unwrap();
    assert_eq!(r, again);
}

#[test]
fn sequential_and_parallel_agree() {
    let (s, _) = sphere_series(256, 12);
    let mut cfg = SecondOrderConfig::new(32);
    let a = second_order_test(&s, &cfg).unwrap();
    cfg.exec = Execution::Sequential;
    assert_eq!(a, second_order_test(&s, &cfg).unwrap());
}

#[test]
fn dropped_tail_and_overlap_are_reported() {
    let s = euclidean(&gaussian_coords(1, 37, 13));
    let r = second_order_test(&s, &SecondOrderConfig::new(8)).unwrap();
    assert_eq!((r.m, r.dropped, r.non_tiling), (4, 5, false));
    assert!(r.warnings.iter().any(|w| w.contains("dropped")));
    let mut cfg = SecondOrderConfig::new(8);
    cfg.block_starts = Some(vec![1, 8, 15, 22, 30]);
    let r = second_order_test(&s, &cfg).unwrap();
    assert_eq!((r.m, r.non_tiling), (5, true));
}

#[test]
fn detrend_removes_linear_trend() {
    let t = 400;
    let noise = gaussian_coords(1, t, 14);
    let c = DMatrix::from_fn(1, t, |_, i| (i + 1) as f64 / t as f64 + noise[(0, i)]);
    let (d, _) = detrend(&euclidean(&c), 80).unwrap();
    let mean = d.row(0).sum() / t as f64;
    assert!(mean.abs() < 2.0 / (t as f64).sqrt(), "mean {mean}");
}

#[test]
fn detrend_of_pure_geodesic_is_zero() {
    let m = Manifold::sphere(2);
    let t = 100;
    let pts = (1..=t)
        .map(|i| {
            let a = 1.2 * i as f64 / t as f64;
            m.point(DVector::from_row_slice(&[a.sin(), 0.0, a.cos()])).unwrap()
        })
        .collect();
    let s = ManifoldSeries::new(m, pts).unwrap();
    let (d, base) = detrend(&s, 20).unwrap();
    let rms = (d.norm_squared() / d.len() as f64).sqrt();
    assert!(rms <= 1e-3, "rms {rms}");
    assert_relative_eq!(base.coords(), s.points()[0].coords(), epsilon = 1e-14);
}

#[test]
fn detrend_rejects_tiny_bandwidth() {
    let s = euclidean(&gaussian_coords(1, 20, 1));
    assert_eq!(detrend(&s, 1).unwrap_err().code(), "invalid_input");
}

#[test]
fn detrend_serializes_with_tag() {
    let j = serde_json::to_string(&Detrend::BlockFrechet { bandwidth: Some(7) }).unwrap();
    assert_eq!(j, r#"{"kind":"block-frechet","bandwidth":7}"#);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn w_is_nonnegative_and_reversal_invariant(seed in 0u64..100_000, d in 1usize..4, half_n in 1usize..6, m in 1usize..6) {
        let n = 2 * half_n;
        let c = gaussian_coords(d, n * m, seed);
        let mut rev = c.clone();
        for i in 0..n * m {
            rev.set_column(i, &c.column(n * m - 1 - i));
        }
        let (starts, _, _) = block_layout(n * m, n, None).unwrap();
        let a = v2_from_periodograms(&periodograms_from_coords(&c, n, &starts, Execution::Sequential));
        let b = v2_from_periodograms(&periodograms_from_coords(&rev, n, &starts, Execution::Sequential));
        prop_assert!(a.w >= 0.0);
        prop_assert!((a.w - b.w).abs() <= 1e-9 * a.w.max(1.0));
    }

    #[test]
    fn trace_equals_squared_norm(seed in 0u64..100_000, k in 0usize..8) {
        let c = gaussian_coords(3, 16, seed);
        let p = periodograms_from_coords(&c, 16, &[0], Execution::Sequential);
        let lp = p.get(0, k, 16);
        prop_assert!((lp.matrix().trace().re - lp.norm_sqr()).abs() < 1e-10);
    }
}
