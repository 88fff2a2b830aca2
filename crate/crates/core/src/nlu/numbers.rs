//! Number normalization: folds multiplier words into digits, strips currency
//! markers and digit-group separators, and records where each number sits in
//! the converted text.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub original: String,
    pub converted: String,
    #[serde(serialize_with = "serialize_numbers")]
    pub digits: Vec<f64>,
    /// Char offset of the first character of each number in `converted`.
    pub start_pos: Vec<usize>,
    /// Char offset of the last character (inclusive) of each number.
    pub end_pos: Vec<usize>,
}

impl NormalizationResult {
    /// The converted text of number `i`.
    pub fn span(&self, i: usize) -> String {
        self.converted.chars().skip(self.start_pos[i]).take(self.end_pos[i] + 1 - self.start_pos[i]).collect()
    }
}

pub(crate) fn serialize_numbers<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.fract() == 0.0 && x.abs() < 9.0e15 {
            seq.serialize_element(&(*x as i64))?;
        } else {
            seq.serialize_element(x)?;
        }
    }
    seq.end()
}

const CURRENCY_PREFIXES: [&str; 4] = ["US$", "R$", "USD", "$"];

fn multiplier(word: &str) -> Option<f64> {
    match word.to_lowercase().as_str() {
        "thousand" | "thousands" => Some(1e3),
        "million" | "millions" => Some(1e6),
        _ => None,
    }
}

fn number_word(word: &str) -> Option<f64> {
    const WORDS: [&str; 21] = [
        "zero",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "seven",
        "eight",
        "nine",
        "ten",
        "eleven",
        "twelve",
        "thirteen",
        "fourteen",
        "fifteen",
        "sixteen",
        "seventeen",
        "eighteen",
        "nineteen",
        "twenty",
    ];
    const TENS: [(&str, f64); 7] = [
        ("thirty", 30.0),
        ("forty", 40.0),
        ("fifty", 50.0),
        ("sixty", 60.0),
        ("seventy", 70.0),
        ("eighty", 80.0),
        ("ninety", 90.0),
    ];
    let w = word.to_lowercase();
    if let Some(i) = WORDS.iter().position(|x| *x == w) {
        return Some(i as f64);
    }
    TENS.iter().find(|(x, _)| *x == w).map(|(_, v)| *v)
}

fn is_unit_word(word: &str) -> bool {
    let w = word.to_lowercase();
    ["day", "days", "month", "months", "year", "years"].contains(&w.as_str())
}

/// Parses "35,000", "10.000", "12,5", "50,0000". A single trailing group of
/// one or two digits after a separator is a decimal part; every other
/// separator is a digit-group separator.
fn parse_numeral(core: &str) -> Option<f64> {
    static NUMERAL: OnceLock<Regex> = OnceLock::new();
    let re = NUMERAL.get_or_init(|| Regex::new(r"^\d+(?:[.,]\d+)*$").unwrap());
    if !re.is_match(core) {
        return None;
    }
    let groups: Vec<&str> = core.split([',', '.']).collect();
    if groups.len() > 1 {
        let last = groups[groups.len() - 1];
        if last.len() <= 2 {
            let int: String = groups[..groups.len() - 1].concat();
            return format!("{int}.{last}").parse().ok();
        }
    }
    groups.concat().parse().ok()
}

fn format_digits(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

struct Token<'a> {
    start: usize,
    end: usize,
    text: &'a str,
}

/// Splits a whitespace token into (prefix punctuation/currency, core, suffix punctuation).
fn split_affixes(tok: &str) -> (&str, &str, &str) {
    let mut start = 0;
    for p in CURRENCY_PREFIXES {
        if tok.len() > p.len() && tok.get(..p.len()).is_some_and(|h| h.eq_ignore_ascii_case(p)) {
            let rest = &tok[p.len()..];
            if rest.starts_with(|c: char| c.is_ascii_digit()) {
                start = p.len();
                break;
            }
        }
    }
    let body = &tok[start..];
    let trimmed = body.trim_end_matches(|c: char| !c.is_alphanumeric());
    let suffix = &body[trimmed.len()..];
    (&tok[..start], trimmed, suffix)
}

pub fn normalize_numbers(text: &str) -> NormalizationResult {
    static WS: OnceLock<Regex> = OnceLock::new();
    let ws = WS.get_or_init(|| Regex::new(r"\S+").unwrap());
    let tokens: Vec<Token> =
        ws.find_iter(text).map(|m| Token { start: m.start(), end: m.end(), text: m.as_str() }).collect();

    let mut converted = String::with_capacity(text.len());
    let mut digits = Vec::new();
    let mut start_pos = Vec::new();
    let mut end_pos = Vec::new();
    let mut cursor = 0;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        converted.push_str(&text[cursor..tok.start]);
        cursor = tok.end;

        let (prefix, core, suffix) = split_affixes(tok.text);
        let next_core = tokens.get(i + 1).map(|t| split_affixes(t.text).1);
        let mut value = parse_numeral(core);
        if value.is_none() && prefix.is_empty() {
            if let Some(v) = number_word(core) {
                if next_core.is_some_and(|n| is_unit_word(n) || multiplier(n).is_some()) {
                    value = Some(v);
                }
            }
        }
        let Some(mut v) = value else {
            converted.push_str(tok.text);
            i += 1;
            continue;
        };

        let mut suffix = suffix;
        // "10 thousands" folds into one number when the number token has no
        // trailing punctuation of its own.
        while suffix.is_empty() {
            let Some(next) = tokens.get(i + 1) else { break };
            let (np, ncore, nsuffix) = split_affixes(next.text);
            match multiplier(ncore) {
                Some(m) if np.is_empty() => {
                    v *= m;
                    suffix = nsuffix;
                    cursor = next.end;
                    i += 1;
                }
                _ => break,
            }
        }

        let rendered = format_digits(v);
        let start = converted.chars().count();
        converted.push_str(&rendered);
        start_pos.push(start);
        end_pos.push(start + rendered.chars().count() - 1);
        digits.push(v);
        converted.push_str(suffix);
        i += 1;
    }
    converted.push_str(&text[cursor..]);

    NormalizationResult { original: text.to_string(), converted, digits, start_pos, end_pos }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn folds_thousands_with_inclusive_offsets() {
        let r = normalize_numbers("I would like to invest 10 thousands in 40 months");
        assert_eq!(r.converted, "I would like to invest 10000 in 40 months");
        assert_eq!(r.digits, vec![10000.0, 40.0]);
        assert_eq!(r.start_pos, vec![23, 32]);
        assert_eq!(r.end_pos, vec![27, 33]);
    }

    #[test]
    fn no_numbers_leaves_text_alone() {
        let r = normalize_numbers("hello there");
        assert_eq!(r.converted, "hello there");
        assert!(r.digits.is_empty() && r.start_pos.is_empty() && r.end_pos.is_empty());
    }

    #[test]
    fn currency_and_separators() {
        let r = normalize_numbers("R$ 35,000 for 2 years");
        assert_eq!(r.digits, vec![35000.0, 2.0]);
        assert_eq!(r.converted, "R$ 35000 for 2 years");
        let r = normalize_numbers("what if i invest R$10,000 in 5 years?");
        assert_eq!(r.converted, "what if i invest 10000 in 5 years?");
        let r = normalize_numbers("I have $30,000 USD");
        assert_eq!(r.converted, "I have 30000 USD");
    }

    #[test]
    fn decimal_comma_and_odd_grouping() {
        assert_eq!(normalize_numbers("12,5 thousand").digits, vec![12500.0]);
        assert_eq!(normalize_numbers("and 50,0000?").converted, "and 500000?");
    }

    #[test]
    fn number_words_only_before_units_or_multipliers() {
        let r = normalize_numbers("i would like to invest R$ 50 in six months");
        assert_eq!(r.converted, "i would like to invest R$ 50 in 6 months");
        assert_eq!(r.digits, vec![50.0, 6.0]);
        let r = normalize_numbers("one would have it");
        assert_eq!(r.converted, "one would have it");
    }

    #[test]
    fn multiplier_after_punctuation_is_not_folded() {
        let r = normalize_numbers("10, thousands of people");
        assert_eq!(r.digits, vec![10.0]);
    }

    proptest! {
        #[test]
        fn idempotent_and_offsets_hold(
            words in proptest::collection::vec(
                prop_oneof![
                    Just("invest".to_string()),
                    Just("thousands".to_string()),
                    Just("million".to_string()),
                    Just("months".to_string()),
                    Just("six".to_string()),
                    Just("R$".to_string()),
                    Just("in".to_string()),
                    "[0-9]{1,3}(,[0-9]{3})?",
                    "R\\$[0-9]{1,5}",
                    "[a-z]{1,6}\\??",
                ],
                0..10,
            )
        ) {
            let text = words.join(" ");
            let once = normalize_numbers(&text);
            let twice = normalize_numbers(&once.converted);
            prop_assert_eq!(&twice.converted, &once.converted);
            prop_assert_eq!(&twice.digits, &once.digits);
            prop_assert_eq!(once.digits.len(), once.start_pos.len());
            prop_assert_eq!(once.digits.len(), once.end_pos.len());
            for i in 0..once.digits.len() {
                let span: f64 = once.span(i).parse().unwrap();
                prop_assert_eq!(span, once.digits[i]);
            }
        }
    }
}
