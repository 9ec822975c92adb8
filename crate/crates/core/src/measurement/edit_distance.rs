/// Unit of comparison for edit distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Granularity {
    /// Whitespace-separated words.
    #[default]
    Token,
    Char,
}

/// Levenshtein distance between two sequences, two-row DP.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn normalized<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / n as f64
}

/// Word-level normalized distance: edits over the longer length, 0 for two
/// empty texts.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    normalized_edit_distance_with(a, b, Granularity::Token)
}

pub fn normalized_edit_distance_with(a: &str, b: &str, granularity: Granularity) -> f64 {
    match granularity {
        Granularity::Token => {
            let ta: Vec<&str> = a.split_whitespace().collect();
            let tb: Vec<&str> = b.split_whitespace().collect();
            normalized(&ta, &tb)
        }
        Granularity::Char => {
            let ca: Vec<char> = a.chars().collect();
            let cb: Vec<char> = b.chars().collect();
            normalized(&ca, &cb)
        }
    }
}

/// Smallest distance to any other proposal by the same worker; 1 when there
/// is nothing to compare against.
pub fn min_worker_edit_distance<S: AsRef<str>>(
    proposal: &str,
    other_proposals: &[S],
    granularity: Granularity,
) -> f64 {
    other_proposals
        .iter()
        .map(|p| normalized_edit_distance_with(proposal, p.as_ref(), granularity))
        .fold(1.0, f64::min)
}
