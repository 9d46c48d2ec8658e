//! Grammar-error metric over token streams and the sanitizer that removes
//! every counted error.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::song_model::DEFAULT_TEMPO;
use crate::tokenizer::{SingletonKind, Token, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "class", content = "kind")]
pub enum ErrorClass {
    DuplicateSingleton(SingletonKind),
    AdjacentRepeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ErrorPosition {
    pub index: usize,
    #[serde(flatten)]
    pub class: ErrorClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorReport {
    pub duplicate_singletons: BTreeMap<SingletonKind, usize>,
    pub adjacent_repeat_count: usize,
    pub total_errors: usize,
    pub positions: Vec<ErrorPosition>,
}

impl Default for ErrorReport {
    fn default() -> Self {
        ErrorReport {
            duplicate_singletons: SingletonKind::ALL.iter().map(|&k| (k, 0)).collect(),
            adjacent_repeat_count: 0,
            total_errors: 0,
            positions: Vec::new(),
        }
    }
}

impl ErrorReport {
    pub fn duplicate_count(&self, kind: SingletonKind) -> usize {
        self.duplicate_singletons.get(&kind).copied().unwrap_or(0)
    }

    /// Adds another report's counts. Positions are not carried over since
    /// they index a different stream.
    pub fn absorb(&mut self, other: &ErrorReport) {
        for (k, n) in &other.duplicate_singletons {
            *self.duplicate_singletons.entry(*k).or_default() += n;
        }
        self.adjacent_repeat_count += other.adjacent_repeat_count;
        self.total_errors += other.total_errors;
    }

    /// `total=3 artist=0 downtune=1 tempo=0 start=0 end=1 adjacent=1`
    pub fn summary_line(&self) -> String {
        let mut s = format!("total={}", self.total_errors);
        for k in SingletonKind::ALL {
            s += &format!(" {}={}", k.name(), self.duplicate_count(k));
        }
        s + &format!(" adjacent={}", self.adjacent_repeat_count)
    }
}

/// Counts repeated singleton tokens (every occurrence after the first) and
/// adjacent identical tokens (a run of n counts n-1). A token that is both a
/// repeated singleton and equal to its predecessor counts once, as a
/// repeated singleton.
pub fn count_errors(tokens: &TokenSeq) -> ErrorReport {
    let mut report = ErrorReport::default();
    let mut seen = [false; 5];
    for (index, token) in tokens.tokens.iter().enumerate() {
        let class = match token.singleton_kind() {
            Some(kind) if std::mem::replace(&mut seen[kind as usize], true) => {
                *report.duplicate_singletons.entry(kind).or_default() += 1;
                Some(ErrorClass::DuplicateSingleton(kind))
            }
            _ if index > 0 && tokens.tokens[index - 1] == *token => {
                report.adjacent_repeat_count += 1;
                Some(ErrorClass::AdjacentRepeat)
            }
            _ => None,
        };
        if let Some(class) = class {
            report.total_errors += 1;
            report.positions.push(ErrorPosition { index, class });
        }
    }
    report
}

/// Repairs a stream so that it has no counted errors and decodes cleanly:
/// repeated singletons and every `end` are dropped, adjacent waits are
/// summed, adjacent identical tokens keep their first copy, missing header
/// tokens are prepended and a single `end` is appended.
pub fn sanitize(tokens: &TokenSeq) -> TokenSeq {
    let mut seen = [false; 5];
    let mut body: Vec<Token> = Vec::with_capacity(tokens.len() + 5);
    for token in &tokens.tokens {
        if let Some(kind) = token.singleton_kind() {
            if kind == SingletonKind::End || std::mem::replace(&mut seen[kind as usize], true) {
                continue;
            }
        }
        match (body.last_mut(), token) {
            (Some(Token::Wait(a)), Token::Wait(b)) => *a = a.saturating_add(*b),
            (Some(last), t) if last == t => {}
            _ => body.push(token.clone()),
        }
    }
    let defaults = [
        (SingletonKind::Artist, Token::Artist("unknown".into())),
        (SingletonKind::Downtune, Token::Downtune(0)),
        (SingletonKind::Tempo, Token::Tempo(DEFAULT_TEMPO)),
        (SingletonKind::Start, Token::Start),
    ];
    let mut out: Vec<Token> =
        defaults.into_iter().filter(|(k, _)| !seen[*k as usize]).map(|(_, t)| t).collect();
    out.extend(body);
    out.push(Token::End);
    TokenSeq::new(out)
}
