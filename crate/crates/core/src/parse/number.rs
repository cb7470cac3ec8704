//! Locale-tolerant number recognition for model output.

/// A numeric token found in free text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumberToken {
    pub value: f64,
    pub start: usize,
    pub end: usize,
    /// Token had a decimal separator.
    pub decimal: bool,
    /// Token was immediately followed by a percent sign.
    pub percent: bool,
}

fn normalise(text: &str) -> Option<f64> {
    let dots = text.matches('.').count();
    let commas = text.matches(',').count();
    let cleaned = match (dots, commas) {
        (0, 0) => text.to_owned(),
        (_, 0) if dots == 1 => text.to_owned(),
        (0, 1) => {
            let (int, frac) = text.split_once(',').expect("one comma");
            if frac.len() == 3 && int.trim_start_matches('-') != "0" && !int.is_empty() {
                format!("{int}{frac}")
            } else {
                format!("{int}.{frac}")
            }
        }
        (_, 0) => text.replace('.', ""),
        (0, _) => text.replace(',', ""),
        _ => {
            let last_dot = text.rfind('.').expect("has dot");
            let last_comma = text.rfind(',').expect("has comma");
            if last_comma > last_dot {
                text.replace('.', "").replace(',', ".")
            } else {
                text.replace(',', "")
            }
        }
    };
    cleaned.parse().ok()
}

/// Every number in `text`, accepting `0.72`, `0,72`, `1.234,5` and `1,234.5`.
pub fn scan_numbers(text: &str) -> Vec<NumberToken> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let starts_digit = bytes[i].is_ascii_digit();
        let prev_is_word = i > 0 && (bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
        if !starts_digit || prev_is_word {
            i += 1;
            continue;
        }
        let mut start = i;
        if i > 0 && bytes[i - 1] == b'-' && (i < 2 || !bytes[i - 2].is_ascii_alphanumeric()) {
            start = i - 1;
        }
        let mut end = i;
        let mut seps = 0;
        while end < bytes.len() {
            let c = bytes[end];
            if c.is_ascii_digit() {
                end += 1;
            } else if (c == b'.' || c == b',') && end + 1 < bytes.len() && bytes[end + 1].is_ascii_digit() {
                seps += 1;
                end += 1;
            } else {
                break;
            }
        }
        // trailing letters glued to digits make it an identifier (e.g. "3Q24"), not a number
        let glued = end < bytes.len() && bytes[end].is_ascii_alphabetic() && !matches!(bytes[end], b'x' | b'X');
        if !glued {
            let raw = &text[start..end];
            if let Some(value) = normalise(raw) {
                let percent = text[end..].trim_start().starts_with('%');
                out.push(NumberToken { value, start, end, decimal: seps > 0, percent });
            }
        }
        i = end.max(i + 1);
    }
    out
}

/// First number in a table cell (`"14.2x"`, `"8,3 %"`, `"€1.2bn"`).
pub fn parse_cell_number(cell: &str) -> Option<f64> {
    scan_numbers(cell).first().map(|t| t.value)
}
