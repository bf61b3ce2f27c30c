use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Switches for [`normalize_text`]. Both are off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub lowercase: bool,
    pub strip_diacritics: bool,
}

impl NormalizeOptions {
    /// Case-folded and accent-free, as used for dialect matching.
    pub const MATCHING: NormalizeOptions = NormalizeOptions { lowercase: true, strip_diacritics: true };
}

/// NFC composition, trimmed, with internal whitespace runs collapsed to one space.
pub fn normalize_text(text: &str) -> String {
    normalize_with(text, NormalizeOptions::default())
}

pub fn normalize_with(text: &str, opts: NormalizeOptions) -> String {
    let lowered;
    let text = if opts.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let composed: String = if opts.strip_diacritics {
        text.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect()
    } else {
        text.nfc().collect()
    };
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}
