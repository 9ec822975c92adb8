/// Weighted isotonic (nondecreasing) least-squares fit by pool adjacent
/// violators. Block values are stored as sums so pooled means are computed
/// once, as `sum / weight`.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "values and weights differ in length");
    // (weighted sum, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v * w, w, 1));
        while blocks.len() > 1 {
            let (s1, w1, _) = blocks[blocks.len() - 1];
            let (s0, w0, _) = blocks[blocks.len() - 2];
            if s0 / w0 <= s1 / w1 {
                break;
            }
            let (s, w, c) = blocks.pop().unwrap();
            let last = blocks.last_mut().unwrap();
            last.0 += s;
            last.1 += w;
            last.2 += c;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, w, c) in blocks {
        out.extend(std::iter::repeat_n(s / w, c));
    }
    out
}
