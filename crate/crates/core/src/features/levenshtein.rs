/// Levenshtein distance over Unicode scalar values with unit insert,
/// delete and substitute costs.
///
/// Uses a single rolling row, so memory is `O(min(|a|, |b|))`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (long, short) = if a.len() >= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }

    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, &lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let up = row[j + 1];
            let cost = usize::from(lc != sc);
            row[j + 1] = (up + 1).min(row[j] + 1).min(diag + cost);
            diag = up;
        }
    }
    row[short.len()]
}
