/// Contraction suffixes kept as single tokens after an apostrophe.
const CLITICS: &[&str] = &["s", "ll", "re", "ve", "d", "m"];

/// Lowercased `.`-terminated words that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "mr.", "mrs.", "ms.", "dr.", "prof.", "vs.", "jr.", "sr.", "st.", "a.m.",
    "p.m.", "approx.", "no.", "inc.", "cf.", "fig.", "dept.", "ext.",
];

/// Splits text into lowercased word, number, clitic and punctuation tokens.
///
/// Rules, applied to each whitespace-separated chunk:
/// - runs of alphanumeric characters form one token;
/// - an apostrophe followed by one of `s ll re ve d m` (and then a
///   non-alphanumeric or the chunk end) forms a clitic token such as `'ll`;
/// - `n't` is split off the word it ends (`don't` → `do n't`);
/// - every other character is its own token.
///
/// Typographic apostrophes are folded to `'`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk
            .chars()
            .flat_map(char::to_lowercase)
            .map(|c| if c == '\u{2019}' { '\'' } else { c })
            .collect();
        tokenize_chunk(&chars, &mut out);
    }
    out
}

fn tokenize_chunk(chars: &[char], out: &mut Vec<String>) {
    let n = chars.len();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_alphanumeric() {
            let mut j = i;
            while j < n && chars[j].is_alphanumeric() {
                j += 1;
            }
            let negated = chars[j - 1] == 'n'
                && j + 1 < n
                && chars[j] == '\''
                && chars[j + 1] == 't'
                && (j + 2 == n || !chars[j + 2].is_alphanumeric());
            if negated {
                if j - 1 > i {
                    out.push(chars[i..j - 1].iter().collect());
                }
                out.push("n't".to_string());
                i = j + 2;
            } else {
                out.push(chars[i..j].iter().collect());
                i = j;
            }
        } else if c == '\'' {
            let mut j = i + 1;
            while j < n && chars[j].is_alphabetic() {
                j += 1;
            }
            let suffix: String = chars[i + 1..j].iter().collect();
            let at_boundary = j == n || !chars[j].is_alphanumeric();
            if at_boundary && CLITICS.contains(&suffix.as_str()) {
                out.push(format!("'{suffix}"));
                i = j;
            } else {
                out.push("'".to_string());
                i += 1;
            }
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// Splits an email body into sentences.
///
/// A sentence ends at a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) that is followed by whitespace or the end of the text, unless
/// the word carrying the `.` is a known abbreviation. A blank line always
/// ends a sentence. Sentences are trimmed and empty ones dropped.
pub fn split_sentences(body: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    for paragraph in paragraphs(body) {
        let chars: Vec<char> = paragraph.chars().collect();
        let n = chars.len();
        let mut start = 0;
        let mut i = 0;
        while i < n {
            if !matches!(chars[i], '.' | '!' | '?') {
                i += 1;
                continue;
            }
            let term_start = i;
            while i < n && matches!(chars[i], '.' | '!' | '?') {
                i += 1;
            }
            while i < n && is_closer(chars[i]) {
                i += 1;
            }
            if i < n && !chars[i].is_whitespace() {
                continue;
            }
            if chars[term_start] == '.' && i - term_start == 1 && is_abbreviation(&chars[start..i]) {
                continue;
            }
            push_trimmed(&mut sentences, &chars[start..i]);
            start = i;
        }
        push_trimmed(&mut sentences, &chars[start..]);
    }
    sentences
}

fn paragraphs(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                out.push(std::mem::take(&mut current));
            }
            current.clear();
        } else {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(line);
        }
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

fn is_abbreviation(span: &[char]) -> bool {
    let word_start = span
        .iter()
        .rposition(|c| c.is_whitespace())
        .map_or(0, |p| p + 1);
    let word: String = span[word_start..]
        .iter()
        .skip_while(|c| matches!(c, '(' | '"' | '\'' | '['))
        .flat_map(|c| c.to_lowercase())
        .collect();
    ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed(out: &mut Vec<String>, span: &[char]) {
    let s: String = span.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
