use tenkf::oracle::{bayes_posterior, enkf_limit_pdf, normal_pdf, tenkf_limit_pdf, BimodalToy};

const POINTS: usize = 2048;

#[test]
fn enkf_limit_has_the_moments_of_the_linear_shift() {
    let toy = BimodalToy::default();
    let k = toy.gain();
    let joint = toy.joint(POINTS).unwrap();
    let pdf = enkf_limit_pdf(&joint, k, toy.y_star).unwrap();
    // X + K(y* − Y) = (1 − K)X − Kε + Ky*, with E[X] = 0.
    let mean = k * toy.y_star;
    let var = (1.0 - k).powi(2) * toy.var_x() + k * k * toy.noise_var;
    assert!((pdf.integral() - 1.0).abs() < 1e-6);
    assert!((pdf.mean() - mean).abs() < 1e-4, "{} vs {mean}", pdf.mean());
    assert!((pdf.variance() - var).abs() < 1e-3, "{} vs {var}", pdf.variance());
}

#[test]
fn bayes_posterior_is_the_reweighted_mixture() {
    let toy = BimodalToy::default();
    let (c, v, r, y) = (toy.center, toy.mode_var, toy.noise_var, toy.y_star);
    let joint = toy.joint(POINTS).unwrap();
    let pdf = bayes_posterior(&joint, y).unwrap();
    let gain = v / (v + r);
    let post_var = v * r / (v + r);
    let modes: Vec<(f64, f64)> = [-c, c]
        .iter()
        .map(|&m| (normal_pdf(y, m, v + r), m + gain * (y - m)))
        .collect();
    let total: f64 = modes.iter().map(|m| m.0).sum();
    let mean: f64 = modes.iter().map(|(w, m)| w / total * m).sum();
    let second: f64 = modes.iter().map(|(w, m)| w / total * (post_var + m * m)).sum();
    assert!((pdf.mean() - mean).abs() < 1e-4, "{} vs {mean}", pdf.mean());
    assert!((pdf.variance() - (second - mean * mean)).abs() < 1e-3);
    for x in [-2.0, 0.0, 1.0, 1.7, 2.5] {
        let exact: f64 = modes.iter().map(|(w, m)| w / total * normal_pdf(x, *m, post_var)).sum();
        assert!((pdf.pdf(x) - exact).abs() < 1e-3 * exact.max(1e-3), "x = {x}");
    }
}

#[test]
fn trimmed_limit_moves_from_enkf_to_bayes() {
    let toy = BimodalToy::default();
    let joint = toy.joint(POINTS).unwrap();
    let bayes = bayes_posterior(&joint, toy.y_star).unwrap().mean();
    let enkf = enkf_limit_pdf(&joint, toy.gain(), toy.y_star).unwrap().mean();
    let gaps: Vec<f64> = [100.0, 1.0, 0.1, 0.01]
        .iter()
        .map(|&l| {
            let m = tenkf_limit_pdf(&joint, toy.gain(), toy.y_star, l).unwrap().mean();
            (m - bayes).abs()
        })
        .collect();
    assert!((gaps[0] - (enkf - bayes).abs()).abs() < 0.05);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 0.02);
}
