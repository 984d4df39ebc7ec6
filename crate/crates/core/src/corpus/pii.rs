//! Removal of phone numbers, e-mail addresses and Indian vehicle plates.
//!
//! Street addresses are not scrubbed: no pattern is reliable enough across
//! the five scripts the tiplines receive.

use std::sync::LazyLock;

use regex::Regex;

pub const PHONE_TOKEN: &str = "<PHONE>";
pub const EMAIL_TOKEN: &str = "<EMAIL>";
pub const PLATE_TOKEN: &str = "<PLATE>";

static EMAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").unwrap()
});

// two letters (state), two digits (district), 1-3 letters (series), 1-4 digits
static PLATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b[A-Z]{2}[ \-]?[0-9]{2}[ \-]?[A-Z]{1,3}[ \-]?[0-9]{1,4}\b").unwrap()
});

// seven or more ASCII digits, optionally separated by '+', '-', ' ' or parentheses
static PHONE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\+?\(?[0-9](?:[ \-()+]*[0-9]){6,}\)?").unwrap());

/// Replaces PII-like substrings with fixed placeholder tokens. All other
/// text is left byte-identical.
pub fn scrub_pii(text: &str) -> String {
    let out = EMAIL.replace_all(text, EMAIL_TOKEN);
    let out = PLATE.replace_all(&out, PLATE_TOKEN);
    let out = PHONE.replace_all(&out, balanced_phone);
    out.into_owned()
}

// A phone match may swallow an opening parenthesis without its partner (or
// the reverse); keep the unmatched one so surrounding text is not altered.
fn balanced_phone(caps: &regex::Captures<'_>) -> String {
    let m = caps.get(0).unwrap().as_str();
    let opens = m.matches('(').count();
    let closes = m.matches(')').count();
    let mut s = String::new();
    if m.starts_with('(') && opens > closes {
        s.push('(');
    }
    s.push_str(PHONE_TOKEN);
    if m.ends_with(')') && closes > opens {
        s.push(')');
    }
    s
}

/// Collapses whitespace runs to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
