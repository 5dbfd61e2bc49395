//! Text canonicalization, token F1 and edit-distance similarity.

use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes, lowercases and trims.
pub fn canonicalize(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase().trim().to_string()
}

/// Whitespace tokens of the canonical form.
pub fn tokens(s: &str) -> Vec<String> {
    canonicalize(s)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Token-level F1 over multisets.
///
/// Both empty gives 1.0, exactly one empty gives 0.0.
pub fn token_f1(pred: &str, gt: &str) -> f64 {
    let p = tokens(pred);
    let g = tokens(gt);
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// `1 - dist / max(len)` on canonical forms; two empty strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a = canonicalize(a);
    let b = canonicalize(b);
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}
