//! Longest previous factor via suffix array and LCP.

/// Suffix array by prefix doubling.
pub fn suffix_array(s: &[u32]) -> Vec<usize> {
    let n = s.len();
    let mut sa: Vec<usize> = (0..n).collect();
    if n == 0 {
        return sa;
    }
    sa.sort_unstable_by_key(|&i| s[i]);
    let mut rank = vec![0u64; n];
    for w in 1..n {
        rank[sa[w]] = rank[sa[w - 1]] + u64::from(s[sa[w]] != s[sa[w - 1]]);
    }
    let mut k = 1;
    let mut next = vec![0u64; n];
    while rank[sa[n - 1]] + 1 < n as u64 {
        let key = |i: usize| (rank[i] << 32) | if i + k < n { rank[i + k] + 1 } else { 0 };
        sa.sort_unstable_by_key(|&i| key(i));
        next[sa[0]] = 0;
        for w in 1..n {
            next[sa[w]] = next[sa[w - 1]] + u64::from(key(sa[w]) != key(sa[w - 1]));
        }
        std::mem::swap(&mut rank, &mut next);
        k *= 2;
    }
    sa
}

/// `lcp[r]` = longest common prefix of the suffixes at ranks `r - 1` and `r`
/// (Kasai et al.); `lcp[0] = 0`.
pub fn lcp_array(s: &[u32], sa: &[usize]) -> Vec<usize> {
    let n = s.len();
    let mut rank = vec![0usize; n];
    for (r, &i) in sa.iter().enumerate() {
        rank[i] = r;
    }
    let mut lcp = vec![0usize; n];
    let mut h = 0usize;
    for i in 0..n {
        if rank[i] == 0 {
            h = 0;
            continue;
        }
        let j = sa[rank[i] - 1];
        while i + h < n && j + h < n && s[i + h] == s[j + h] {
            h += 1;
        }
        lcp[rank[i]] = h;
        h = h.saturating_sub(1);
    }
    lcp
}

/// `lpf[i]` = length of the longest prefix of `s[i..]` that also starts at
/// some `j < i` (overlap allowed).
///
/// The best earlier suffix is the nearest one in rank order on either side
/// with a smaller text position; both are found with one stack pass.
pub fn longest_previous_factor(s: &[u32]) -> Vec<usize> {
    let n = s.len();
    let sa = suffix_array(s);
    let lcp = lcp_array(s, &sa);
    let mut best = vec![0usize; n];
    // (rank, lcp with the element below it)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for r in 0..n {
        let mut h = lcp[r];
        while let Some(&(top, link)) = stack.last() {
            if sa[top] < sa[r] {
                break;
            }
            // r is the next smaller position after `top` in rank order
            best[sa[top]] = best[sa[top]].max(h);
            h = h.min(link);
            stack.pop();
        }
        if stack.is_empty() {
            h = 0;
        }
        best[sa[r]] = best[sa[r]].max(h);
        stack.push((r, h));
    }
    best
}

#[cfg(test)]
pub(crate) fn brute_force_lpf(s: &[u32]) -> Vec<usize> {
    (0..s.len())
        .map(|i| {
            (0..i)
                .map(|j| {
                    s[j..]
                        .iter()
                        .zip(&s[i..])
                        .take_while(|(a, b)| a == b)
                        .count()
                })
                .max()
                .unwrap_or(0)
        })
        .collect()
}
