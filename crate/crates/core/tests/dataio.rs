use contrastad::dataio::{
    fit_normalizer, generate_synthetic, make_windows, spread_segments, Normalization,
};
use contrastad::diffcore::Tensor;
use proptest::prelude::*;

/// Values of feature `j` inside the labelled steps, standardized by the
/// mean and standard deviation of the same feature outside them.
fn standardized_inside(test: &Tensor, labels: &[u8], j: usize) -> Vec<f64> {
    let outside: Vec<f64> = (0..labels.len()).filter(|&t| labels[t] == 0).map(|t| test.at2(t, j)).collect();
    let m = outside.iter().sum::<f64>() / outside.len() as f64;
    let sd = (outside.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / outside.len() as f64).sqrt();
    (0..labels.len()).filter(|&t| labels[t] == 1).map(|t| (test.at2(t, j) - m) / sd).collect()
}

#[test]
fn synthetic_anomalies_preserve_marginals_across_seeds() {
    let (n, len) = (8, 4000);
    let segments = spread_segments(len, 3, 50);
    let mut pooled = vec![Vec::new(); n];
    for seed in 0..10 {
        let ds = generate_synthetic(n, len, &segments, seed).unwrap();
        let labels = ds.test_labels.as_ref().unwrap();
        for (j, p) in pooled.iter_mut().enumerate() {
            p.extend(standardized_inside(&ds.test, labels, j));
        }
    }
    for (j, z) in pooled.iter().enumerate() {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / z.len() as f64;
        println!("feature {j}: standardized mean {mean:+.4}, variance ratio {var:.4}");
        assert!(mean.abs() < 0.2, "feature {j} mean shift {mean}");
        assert!((var - 1.0).abs() < 0.2, "feature {j} variance ratio {var}");
    }
}

proptest! {
    #[test]
    fn stride_one_windows_reassemble_the_series(t in 3usize..40, n in 1usize..4, w in 2usize..10, seed in 0u64..1000) {
        prop_assume!(t > w);
        let data: Vec<f64> = (0..t * n).map(|k| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 7.0).collect();
        let series = Tensor::matrix(t, n, data).unwrap();
        let wins = make_windows(&series, w, 1).unwrap();
        prop_assert_eq!(wins.len(), t - w);
        let mut rebuilt = vec![0.0; t * n];
        for (k, win) in wins.iter().enumerate() {
            for j in 0..n {
                for c in 0..w {
                    if k == 0 || c == w - 1 {
                        rebuilt[(win.start + c) * n + j] = win.values.at2(j, c);
                    }
                }
                rebuilt[win.target_index() * n + j] = win.target[j];
            }
        }
        prop_assert_eq!(rebuilt.as_slice(), series.data());
    }

    #[test]
    fn min_max_maps_extremes_to_unit_interval(vals in proptest::collection::vec(-1e3f64..1e3, 6..30), a in 0.1f64..10.0) {
        let t = vals.len() / 2;
        let series = Tensor::matrix(t, 2, vals[..2 * t].to_vec()).unwrap();
        let scaled = series.map(|v| a * v);
        for m in [&series, &scaled] {
            let stats = fit_normalizer(m, Normalization::MinMax).unwrap();
            let out = stats.apply(m).unwrap();
            for j in 0..2 {
                let col: Vec<f64> = (0..t).map(|i| out.at2(i, j)).collect();
                let hi = col.iter().cloned().fold(f64::MIN, f64::max);
                let lo = col.iter().cloned().fold(f64::MAX, f64::min);
                if stats.scale[j] > 0.0 {
                    prop_assert_eq!(lo, 0.0);
                    prop_assert!((hi - 1.0).abs() < 1e-12);
                } else {
                    prop_assert!(col.iter().all(|&v| v == 0.0));
                }
            }
        }
        // Scaling the input by a positive constant leaves the normalized output unchanged.
        let a_out = fit_normalizer(&series, Normalization::MinMax).unwrap().apply(&series).unwrap();
        let b_out = fit_normalizer(&scaled, Normalization::MinMax).unwrap().apply(&scaled).unwrap();
        for (x, y) in a_out.data().iter().zip(b_out.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
