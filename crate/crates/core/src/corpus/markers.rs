use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::HsCnPair;
use crate::error::{Error, Result};

/// Surface forms of the four role tokens that delimit a pair in generator
/// input and output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerFormat {
    pub hs_start: String,
    pub hs_end: String,
    pub cn_start: String,
    pub cn_end: String,
}

impl Default for MarkerFormat {
    fn default() -> Self {
        Self {
            hs_start: "<|HS|>".into(),
            hs_end: "<|endHS|>".into(),
            cn_start: "<|CN|>".into(),
            cn_end: "<|endCN|>".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    HsStart,
    HsEnd,
    CnStart,
    CnEnd,
}

impl MarkerFormat {
    fn all(&self) -> [(&str, Marker); 4] {
        [
            (&self.hs_start, Marker::HsStart),
            (&self.hs_end, Marker::HsEnd),
            (&self.cn_start, Marker::CnStart),
            (&self.cn_end, Marker::CnEnd),
        ]
    }

    /// Markers must be non-empty, whitespace-free, and none may contain
    /// another (otherwise scanning would be ambiguous).
    pub fn validate(&self) -> Result<()> {
        let all = self.all();
        for (i, (a, _)) in all.iter().enumerate() {
            if a.is_empty() || a.chars().any(char::is_whitespace) {
                return Err(Error::InvalidMarkers(format!(
                    "marker {a:?} is empty or contains whitespace"
                )));
            }
            for (b, _) in all.iter().skip(i + 1) {
                if a.contains(b) || b.contains(a) {
                    return Err(Error::InvalidMarkers(format!(
                        "markers {a:?} and {b:?} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_text(&self, field: &'static str, text: &str) -> Result<()> {
        if text.trim().is_empty() {
            return Err(Error::EmptyField(field));
        }
        for (m, _) in self.all() {
            if text.contains(m) {
                return Err(Error::MarkerCollision { marker: m.to_owned() });
            }
        }
        Ok(())
    }

    pub fn serialize_texts(&self, hs: &str, cn: &str) -> Result<String> {
        self.check_text("hate_speech", hs)?;
        self.check_text("counter_narrative", cn)?;
        Ok(format!(
            "{} {} {} {} {} {}",
            self.hs_start,
            hs.trim(),
            self.hs_end,
            self.cn_start,
            cn.trim(),
            self.cn_end
        ))
    }

    /// The conditioning prompt for a single hate-speech text.
    pub fn serialize_condition(&self, hs: &str) -> Result<String> {
        self.check_text("hate_speech", hs)?;
        Ok(format!("{} {} {}", self.hs_start, hs.trim(), self.hs_end))
    }

    pub fn serialize_corpus<'a>(&self, pairs: impl IntoIterator<Item = &'a HsCnPair>) -> Result<String> {
        let lines = pairs
            .into_iter()
            .map(|p| serialize_pair(p, self))
            .collect::<Result<Vec<_>>>()?;
        Ok(lines.join("\n"))
    }

    fn next_marker(&self, raw: &str, from: usize) -> Option<(usize, usize, Marker)> {
        self.all()
            .into_iter()
            .filter_map(|(m, kind)| raw[from..].find(m).map(|at| (from + at, m.len(), kind)))
            .min_by_key(|&(at, len, _)| (at, std::cmp::Reverse(len)))
    }
}

pub fn serialize_pair(pair: &HsCnPair, fmt: &MarkerFormat) -> Result<String> {
    fmt.serialize_texts(&pair.hate_speech, &pair.counter_narrative)
}

/// One well-formed block. `hs` is `None` for a leading CN-only block, which
/// is what a generator conditioned on an HS emits first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub hs: Option<String>,
    pub cn: String,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentReason {
    /// Input ended inside an open block.
    Truncated,
    /// Markers out of order, or an empty field.
    Malformed,
    /// Text outside any block.
    StrayText,
    /// A CN block with no HS after the leading position.
    OrphanCn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub offset: usize,
    pub text: String,
    pub reason: FragmentReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedStream {
    pub blocks: Vec<Block>,
    pub fragments: Vec<Fragment>,
}

impl ParsedStream {
    /// Complete HS-CN blocks only.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.blocks
            .iter()
            .filter_map(|b| b.hs.as_deref().map(|hs| (hs, b.cn.as_str())))
    }

    pub fn leading_cn(&self) -> Option<&str> {
        self.blocks
            .first()
            .filter(|b| b.hs.is_none())
            .map(|b| b.cn.as_str())
    }
}

#[derive(Debug)]
enum Token<'a> {
    Text(usize, &'a str),
    Marker(usize, usize, Marker),
}

impl Token<'_> {
    fn start(&self) -> usize {
        match *self {
            Token::Text(at, _) | Token::Marker(at, _, _) => at,
        }
    }
}

fn tokenize<'a>(raw: &'a str, fmt: &MarkerFormat) -> Vec<Token<'a>> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        match fmt.next_marker(raw, pos) {
            Some((at, len, kind)) => {
                if !raw[pos..at].trim().is_empty() {
                    tokens.push(Token::Text(pos, &raw[pos..at]));
                }
                tokens.push(Token::Marker(at, len, kind));
                pos = at + len;
            }
            None => {
                if !raw[pos..].trim().is_empty() {
                    tokens.push(Token::Text(pos, &raw[pos..]));
                }
                pos = raw.len();
            }
        }
    }
    tokens
}

#[derive(Debug)]
enum State<'a> {
    Idle,
    /// Text seen before any marker; a following cn_end makes it a leading CN.
    LeadingText { start: usize, text: &'a str },
    HsOpen { start: usize },
    HsText { start: usize, hs: &'a str },
    HsClosed { start: usize, hs: &'a str },
    CnOpen { start: usize, hs: Option<&'a str> },
    CnText { start: usize, hs: Option<&'a str>, cn: &'a str },
}

impl State<'_> {
    fn start(&self) -> Option<usize> {
        match *self {
            State::Idle => None,
            State::LeadingText { start, .. }
            | State::HsOpen { start }
            | State::HsText { start, .. }
            | State::HsClosed { start, .. }
            | State::CnOpen { start, .. }
            | State::CnText { start, .. } => Some(start),
        }
    }
}

/// Extracts every maximal well-formed block in order. Never fails: anything
/// that does not fit the grammar is reported in `fragments`.
pub fn parse_stream(raw: &str, fmt: &MarkerFormat) -> ParsedStream {
    let mut out = ParsedStream::default();
    let mut state = State::Idle;
    let tokens = tokenize(raw, fmt);
    let mut i = 0;

    let fragment = |out: &mut ParsedStream, start: usize, end: usize, reason| {
        out.fragments.push(Fragment {
            offset: start,
            text: raw[start..end].to_owned(),
            reason,
        });
    };

    while i < tokens.len() {
        let tok = &tokens[i];
        let first_token = i == 0;
        // `None` consumes the token, `Some(reason)` aborts the current block
        // and re-examines the token from Idle.
        let mut abort = None;
        let mut retry = false;
        state = match (std::mem::replace(&mut state, State::Idle), tok) {
            (State::Idle, Token::Marker(at, _, Marker::HsStart)) => State::HsOpen { start: *at },
            (State::Idle, Token::Marker(at, _, Marker::CnStart)) => State::CnOpen { start: *at, hs: None },
            (State::Idle, Token::Text(at, text)) if first_token => State::LeadingText { start: *at, text },
            (State::Idle, Token::Text(at, text)) => {
                fragment(&mut out, *at, at + text.len(), FragmentReason::StrayText);
                State::Idle
            }
            (State::Idle, Token::Marker(at, len, _)) => {
                fragment(&mut out, *at, at + len, FragmentReason::Malformed);
                State::Idle
            }

            (State::LeadingText { start, text }, Token::Marker(at, len, Marker::CnEnd)) => {
                out.blocks.push(Block {
                    hs: None,
                    cn: text.trim().to_owned(),
                    span: start..at + len,
                });
                State::Idle
            }
            (State::LeadingText { start, text }, _) => {
                fragment(&mut out, start, start + text.len(), FragmentReason::StrayText);
                retry = true;
                State::Idle
            }

            (State::HsOpen { start }, Token::Text(_, text)) => State::HsText { start, hs: text },
            (State::HsText { start, hs }, Token::Marker(_, _, Marker::HsEnd)) => State::HsClosed { start, hs },
            (State::HsClosed { start, hs }, Token::Marker(_, _, Marker::CnStart)) => {
                State::CnOpen { start, hs: Some(hs) }
            }
            (State::CnOpen { start, hs }, Token::Text(_, text)) => State::CnText { start, hs, cn: text },
            (State::CnText { start, hs, cn }, Token::Marker(at, len, Marker::CnEnd)) => {
                let leading = out.blocks.is_empty() && out.fragments.is_empty();
                if hs.is_none() && !leading {
                    fragment(&mut out, start, at + len, FragmentReason::OrphanCn);
                } else {
                    out.blocks.push(Block {
                        hs: hs.map(|h| h.trim().to_owned()),
                        cn: cn.trim().to_owned(),
                        span: start..at + len,
                    });
                }
                State::Idle
            }
            (open, _) => {
                abort = Some((open.start().unwrap_or(tok.start()), FragmentReason::Malformed));
                State::Idle
            }
        };

        if retry {
            continue;
        }
        if let Some((start, reason)) = abort {
            match tok {
                // Restart at a start marker; anything else is swallowed into
                // the malformed fragment.
                Token::Marker(at, _, Marker::HsStart | Marker::CnStart) => {
                    fragment(&mut out, start, *at, reason);
                    continue;
                }
                Token::Marker(at, len, _) => fragment(&mut out, start, at + len, reason),
                Token::Text(at, text) => fragment(&mut out, start, at + text.len(), reason),
            }
        }
        i += 1;
    }

    if let Some(start) = state.start() {
        let reason = match state {
            State::LeadingText { .. } => FragmentReason::StrayText,
            _ => FragmentReason::Truncated,
        };
        fragment(&mut out, start, raw.len(), reason);
    }
    out
}
