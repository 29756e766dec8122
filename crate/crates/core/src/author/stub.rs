//! Deterministic offline author: an order-2 word chain over a fixture bank.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GenerationRequest;
use crate::corpus::{parse_stream, MarkerFormat};
use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

const DEFAULT_BANK: &str = include_str!("../../fixtures/bank.txt");
const TRUNCATION_PROB: f64 = 0.25;
const MAX_CN_WORDS: usize = 60;

type State = (String, String);

/// HS and CN texts the stub draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureBank {
    pub hate_speech: Vec<String>,
    pub counter_narratives: Vec<String>,
}

impl FixtureBank {
    /// Reads complete marker blocks; distinct HS texts are kept once.
    pub fn from_marker_text(text: &str, fmt: &MarkerFormat) -> Result<Self> {
        let parsed = parse_stream(text, fmt);
        let mut bank = Self {
            hate_speech: Vec::new(),
            counter_narratives: Vec::new(),
        };
        for (hs, cn) in parsed.pairs() {
            if !bank.hate_speech.iter().any(|h| h == hs) {
                bank.hate_speech.push(hs.to_owned());
            }
            bank.counter_narratives.push(cn.to_owned());
        }
        if bank.counter_narratives.is_empty() {
            return Err(Error::EmptyFixtureBank);
        }
        Ok(bank)
    }

    pub fn builtin() -> Self {
        Self::from_marker_text(DEFAULT_BANK, &MarkerFormat::default()).expect("bundled bank parses")
    }
}

/// Word chain keyed on the two previous words; `None` marks end of text.
#[derive(Debug, Clone)]
pub struct StubAuthor {
    bank: FixtureBank,
    starts: Vec<State>,
    chain: HashMap<State, Vec<Option<String>>>,
    pub fmt: MarkerFormat,
}

impl StubAuthor {
    pub fn new(bank: FixtureBank, fmt: MarkerFormat) -> Result<Self> {
        if bank.counter_narratives.is_empty() || bank.hate_speech.is_empty() {
            return Err(Error::EmptyFixtureBank);
        }
        let mut starts = Vec::new();
        let mut chain: HashMap<State, Vec<Option<String>>> = HashMap::new();
        for cn in &bank.counter_narratives {
            let words: Vec<&str> = cn.split_whitespace().collect();
            if words.len() < 2 {
                continue;
            }
            starts.push((words[0].to_owned(), words[1].to_owned()));
            for w in words.windows(3) {
                chain
                    .entry((w[0].to_owned(), w[1].to_owned()))
                    .or_default()
                    .push(Some(w[2].to_owned()));
            }
            let n = words.len();
            chain
                .entry((words[n - 2].to_owned(), words[n - 1].to_owned()))
                .or_default()
                .push(None);
        }
        if starts.is_empty() {
            return Err(Error::EmptyFixtureBank);
        }
        Ok(Self {
            bank,
            starts,
            chain,
            fmt,
        })
    }

    pub fn builtin() -> Self {
        Self::new(FixtureBank::builtin(), MarkerFormat::default()).expect("bundled bank is usable")
    }

    pub fn bank(&self) -> &FixtureBank {
        &self.bank
    }

    fn walk(&self, rng: &mut ChaCha8Rng, max_words: usize) -> String {
        let (a, b) = self.starts.choose(rng).expect("non-empty").clone();
        let mut words = vec![a, b];
        while words.len() < max_words {
            let key = (words[words.len() - 2].clone(), words[words.len() - 1].clone());
            match self.chain.get(&key).and_then(|next| next.choose(rng)) {
                Some(Some(w)) => words.push(w.clone()),
                _ => break,
            }
        }
        words.join(" ")
    }

    /// A CN that differs from `hs` after normalization.
    fn cn_for(&self, hs: &str, rng: &mut ChaCha8Rng, max_words: usize) -> String {
        let policy = NormalizationPolicy::default();
        let hs = policy.normalize(hs);
        loop {
            let cn = self.walk(rng, max_words);
            if policy.normalize(&cn) != hs {
                return cn;
            }
        }
    }

    /// Continuation text for `req`: a leading CN block answering the prompt,
    /// `n_samples - 1` further HS-CN blocks, and sometimes a truncated tail.
    pub fn generate(&self, req: &GenerationRequest, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_words = req.max_new_tokens.clamp(2, MAX_CN_WORDS);
        let prompt_hs = req.condition_hs(&self.fmt).unwrap_or_default();
        let f = &self.fmt;
        let mut out = Vec::new();
        let cn = self.cn_for(prompt_hs, &mut rng, max_words);
        out.push(format!("{} {cn} {}", f.cn_start, f.cn_end));
        for _ in 1..req.n_samples.max(1) {
            let hs = self.bank.hate_speech.choose(&mut rng).expect("non-empty").clone();
            let cn = self.cn_for(&hs, &mut rng, max_words);
            out.push(format!("{} {hs} {} {} {cn} {}", f.hs_start, f.hs_end, f.cn_start, f.cn_end));
        }
        if rng.random_bool(TRUNCATION_PROB) {
            let hs = self.bank.hate_speech.choose(&mut rng).expect("non-empty");
            let partial = self.walk(&mut rng, 4);
            out.push(format!("{} {hs} {} {} {partial}", f.hs_start, f.hs_end, f.cn_start));
        }
        out.join(" ")
    }
}

/// One-shot stub generation with the bundled fixture bank.
pub fn stub_generate(req: &GenerationRequest, seed: u64) -> String {
    StubAuthor::builtin().generate(req, seed)
}
