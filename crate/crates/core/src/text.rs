//! The shared tokenizer: lowercase, split on anything that is not
//! alphanumeric, drop empty pieces.

use alloc::string::String;
use alloc::vec::Vec;

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Adjacent token pairs of one utterance, joined as `first_second`.
pub fn bigrams(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    tokens
        .windows(2)
        .map(|w| {
            let mut s = String::with_capacity(w[0].len() + w[1].len() + 1);
            s.push_str(&w[0]);
            s.push('_');
            s.push_str(&w[1]);
            s
        })
        .collect()
}
