/// Edit distance over Unicode scalar values (insertions, deletions and
/// substitutions each cost 1).
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; two empty strings score 1.
pub fn levenshtein_accuracy(extracted: &str, truth: &str) -> f64 {
    let longest = extracted.chars().count().max(truth.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_distance(extracted, truth) as f64 / longest as f64
}
