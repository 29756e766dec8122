use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RRConfig {
    pub window_words: usize,
    pub window_stride: usize,
    pub max_n: usize,
    pub shuffles: usize,
    pub rng_seed: u64,
}

impl Default for RRConfig {
    fn default() -> Self {
        Self {
            window_words: 1000,
            window_stride: 1000,
            max_n: 4,
            shuffles: 5,
            rng_seed: 0,
        }
    }
}

impl RRConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_n == 0 || self.window_words < self.max_n {
            return Err(Error::InvalidConfig(format!(
                "window_words ({}) must be >= max_n ({}) >= 1",
                self.window_words, self.max_n
            )));
        }
        if self.shuffles == 0 || self.window_stride == 0 {
            return Err(Error::InvalidConfig("shuffles and window_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Repetition rate (x100) of a collection of texts.
///
/// For every seeded shuffle of the text order, the token streams are
/// concatenated and cut into windows of `window_words` tokens advancing by
/// `window_stride`; a trailing partial window is kept when it still holds at
/// least `max_n` tokens, and a stream shorter than one window is used whole.
/// Per window and order n, `r_n` is the share of n-gram types seen at least
/// twice. The `r_n` are averaged over windows, combined by geometric mean
/// over n = 1..=max_n, and scaled by 100. The result is the mean over
/// shuffles.
///
/// Orders for which no window holds a single n-gram (only possible for
/// streams shorter than `max_n`) are left out of the geometric mean.
pub fn repetition_rate<S: AsRef<str>>(
    texts: &[S],
    cfg: &RRConfig,
    policy: &NormalizationPolicy,
) -> Result<f64> {
    cfg.validate()?;
    let docs: Vec<Vec<String>> = texts.iter().map(|t| policy.tokens(t.as_ref())).collect();
    if docs.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus);
    }

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut total = 0.0;
    for shuffle in 0..cfg.shuffles {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(shuffle as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let stream: Vec<&str> = order
            .iter()
            .flat_map(|&i| docs[i].iter().map(String::as_str))
            .collect();
        total += stream_rate(&stream, cfg);
    }
    Ok(total / cfg.shuffles as f64)
}

/// Repetition rate of one already-ordered token stream.
pub fn stream_rate(stream: &[&str], cfg: &RRConfig) -> f64 {
    let windows = windows(stream.len(), cfg);
    let mut sums = vec![0.0f64; cfg.max_n];
    let mut counts = vec![0usize; cfg.max_n];
    for (start, end) in windows {
        let window = &stream[start..end];
        for n in 1..=cfg.max_n {
            if let Some(r) = non_singleton_ratio(window, n) {
                sums[n - 1] += r;
                counts[n - 1] += 1;
            }
        }
    }
    let mut product = 1.0f64;
    let mut orders = 0;
    for n in 0..cfg.max_n {
        if counts[n] > 0 {
            product *= sums[n] / counts[n] as f64;
            orders += 1;
        }
    }
    product.powf(1.0 / orders as f64) * 100.0
}

/// Window boundaries `[start, end)` over a stream of `len` tokens.
pub fn windows(len: usize, cfg: &RRConfig) -> Vec<(usize, usize)> {
    if len <= cfg.window_words {
        return vec![(0, len)];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + cfg.window_words).min(len);
        if end - start == cfg.window_words || end - start >= cfg.max_n {
            out.push((start, end));
        }
        if end == len {
            break;
        }
        start += cfg.window_stride;
    }
    out
}

fn non_singleton_ratio(window: &[&str], n: usize) -> Option<f64> {
    if window.len() < n {
        return None;
    }
    let mut counts: HashMap<&[&str], u32> = HashMap::new();
    for gram in window.windows(n) {
        *counts.entry(gram).or_default() += 1;
    }
    let repeated = counts.values().filter(|&&c| c >= 2).count();
    Some(repeated as f64 / counts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> NormalizationPolicy {
        NormalizationPolicy::default()
    }

    #[test]
    fn repeated_token_is_100() {
        let text = vec!["spam"; 1000].join(" ");
        let rr = repetition_rate(&[text], &RRConfig::default(), &policy()).unwrap();
        assert_eq!(rr, 100.0);
    }

    #[test]
    fn distinct_tokens_are_0() {
        let text: Vec<String> = (0..1000).map(|i| format!("w{i}")).collect();
        let rr = repetition_rate(&[text.join(" ")], &RRConfig::default(), &policy()).unwrap();
        assert_eq!(rr, 0.0);
    }

    #[test]
    fn empty_corpus_errors() {
        let empty: [&str; 2] = ["", "  "];
        assert!(matches!(
            repetition_rate(&empty, &RRConfig::default(), &policy()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = RRConfig { window_words: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = RRConfig { shuffles: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn window_layout() {
        let cfg = RRConfig::default();
        assert_eq!(windows(500, &cfg), vec![(0, 500)]);
        assert_eq!(windows(2003, &cfg), vec![(0, 1000), (1000, 2000)]);
        assert_eq!(windows(2004, &cfg), vec![(0, 1000), (1000, 2000), (2000, 2004)]);
        let overlapping = RRConfig { window_stride: 500, ..cfg };
        assert_eq!(
            windows(2000, &overlapping),
            vec![(0, 1000), (500, 1500), (1000, 2000)]
        );
    }

    #[test]
    fn short_stream_uses_available_orders() {
        // "a a": unigram ratio 1, bigram ratio 0 -> geometric mean over n=1,2 is 0.
        assert_eq!(stream_rate(&["a", "a"], &RRConfig::default()), 0.0);
        assert_eq!(stream_rate(&["a"], &RRConfig::default()), 0.0);
    }

    #[test]
    fn shuffle_reorders_documents_deterministically() {
        let docs: Vec<String> = (0..30).map(|i| format!("doc {i} says hello world {}", i % 3)).collect();
        let cfg = RRConfig { window_words: 20, window_stride: 20, shuffles: 1, ..Default::default() };
        let a = repetition_rate(&docs, &cfg, &policy()).unwrap();
        let b = repetition_rate(&docs, &cfg, &policy()).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=100.0).contains(&a));
    }
}
