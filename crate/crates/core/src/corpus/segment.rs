use std::ops::Range;

/// Tokens that end in a period without ending a sentence. Matching is
/// case-sensitive; lowercase forms are listed where they occur in prose.
pub const ABBREVIATIONS: &[&str] = &[
    "Mr", "Mrs", "Ms", "Dr", "Prof", "Sr", "Jr", "St", "Mt", "Ft", "Gen", "Col", "Lt", "Capt",
    "Sgt", "Gov", "Sen", "Rep", "Rev", "Hon", "Pres", "Messrs", "vs", "etc", "e.g", "i.e", "cf",
    "al", "approx", "ca", "No", "Nos", "Vol", "vol", "Fig", "fig", "pp", "Inc", "Ltd", "Co",
    "Corp", "Bros", "Jan", "Feb", "Mar", "Apr", "Jun", "Jul", "Aug", "Sep", "Sept", "Oct", "Nov",
    "Dec", "U.S", "U.K", "U.N", "U.S.A", "E.U", "Ph.D", "M.D", "B.A", "M.A", "B.S", "M.S", "a.m",
    "p.m", "Ave", "Blvd", "Rd", "Dept", "Univ", "Est", "Op",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '(' | '[' | '"' | '\'' | '\u{201c}' | '\u{2018}')
}

/// Whether the word ending right before a period at `dot` suppresses a break.
fn is_abbreviation(line: &str, dot: usize) -> bool {
    let head = &line[..dot];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let token = head[start..].trim_start_matches(is_opener);
    if token.is_empty() {
        return false;
    }
    let mut chars = token.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        // Initials such as "J. R. R. Tolkien".
        return c.is_uppercase();
    }
    ABBREVIATIONS.contains(&token)
}

/// Split one newline-free line into trimmed sentence ranges (offsets into `line`).
fn split_line(line: &str, out: &mut Vec<Range<usize>>, base: usize) {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() && !c.is_whitespace() {
            start = Some(pos);
        }
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminal(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map(|&(p, _)| p).unwrap_or(line.len());
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let breaks = if k == chars.len() {
            true
        } else if k == j {
            false
        } else {
            let next = chars[k].1;
            let single_period = c == '.' && j == i + 1;
            (next.is_uppercase() || is_opener(next)) && !(single_period && is_abbreviation(line, pos))
        };
        if breaks {
            if let Some(s) = start.take() {
                out.push(base + s..base + end);
            }
            i = k;
        } else {
            i = j;
        }
    }
    if let Some(s) = start {
        let trimmed = line[s..].trim_end();
        if !trimmed.is_empty() {
            out.push(base + s..base + s + trimmed.len());
        }
    }
}

/// Byte ranges of the sentences in `text`, in order, each trimmed of whitespace.
pub fn segment_spans(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split('\n') {
        split_line(line, &mut out, offset);
        offset += line.len() + 1;
    }
    out
}

/// Rule-based sentence splitter: terminal punctuation followed by whitespace
/// and an uppercase or opening character, minus a stop-list of abbreviations
/// and single-letter initials. Newlines always separate sentences.
pub fn segment_sentences(text: &str) -> Vec<String> {
    segment_spans(text)
        .into_iter()
        .map(|r| text[r].to_string())
        .collect()
}
