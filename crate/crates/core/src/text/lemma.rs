//! Rule-based lemmatizer and the embedded stopword list.
//!
//! Both tables are part of the selection stage's observable behaviour:
//! editing them changes which sentences are selected.

/// English function words, plus the clitic tokens the tokenizer emits.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either",
    "else", "ever", "few", "for", "from", "further", "had", "has", "have", "having", "he", "her",
    "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it",
    "its", "itself", "just", "let", "may", "me", "might", "more", "most", "must", "my", "myself",
    "neither", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "ought",
    "our", "ours", "ourselves", "out", "over", "own", "same", "shall", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there",
    "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "upon", "us",
    "very", "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who",
    "whom", "whose", "why", "will", "with", "within", "would", "yet", "you", "your", "yours",
    "yourself", "yourselves", "'s", "'ll", "'re", "'ve", "'d", "'m", "n't", "s", "t", "d", "ll",
    "m", "re", "ve",
];

/// Irregular forms mapped to their lemma. Every value is a fixed point of
/// the suffix rules.
pub const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"),
    ("are", "be"),
    ("began", "begin"),
    ("begun", "begin"),
    ("being", "be"),
    ("been", "be"),
    ("bought", "buy"),
    ("brought", "bring"),
    ("built", "build"),
    ("children", "child"),
    ("did", "do"),
    ("does", "do"),
    ("doing", "do"),
    ("done", "do"),
    ("felt", "feel"),
    ("found", "find"),
    ("gave", "give"),
    ("given", "give"),
    ("going", "go"),
    ("gone", "go"),
    ("got", "get"),
    ("gotten", "get"),
    ("had", "have"),
    ("has", "have"),
    ("having", "have"),
    ("held", "hold"),
    ("is", "be"),
    ("kept", "keep"),
    ("knew", "know"),
    ("known", "know"),
    ("led", "lead"),
    ("left", "leave"),
    ("made", "make"),
    ("men", "man"),
    ("met", "meet"),
    ("paid", "pay"),
    ("people", "person"),
    ("ran", "run"),
    ("said", "say"),
    ("saw", "see"),
    ("seen", "see"),
    ("sent", "send"),
    ("spent", "spend"),
    ("taken", "take"),
    ("thought", "think"),
    ("told", "tell"),
    ("took", "take"),
    ("used", "use"),
    ("uses", "use"),
    ("using", "use"),
    ("was", "be"),
    ("went", "go"),
    ("were", "be"),
    ("women", "woman"),
    ("wrote", "write"),
    ("written", "write"),
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// True for tokens made only of punctuation or symbols.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

fn irregular(word: &str) -> Option<&'static str> {
    IRREGULAR.iter().find(|(k, _)| *k == word).map(|(_, v)| *v)
}

/// Reduces an inflected token to its lemma.
///
/// The single-step rules strip plural `-s`/`-es`/`-ies`, and `-ing`/`-ed`
/// with Porter-style repairs (undoubling, `e` restoration). The lemma is the
/// fixed point of repeatedly applying them, so the function is idempotent.
/// Every step shortens the word or maps it to an irregular lemma, which
/// bounds the iteration.
pub fn lemmatize(token: &str) -> String {
    let mut current: Vec<char> = token.chars().collect();
    for _ in 0..=current.len() + 1 {
        let next = step(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current.into_iter().collect()
}

fn step(w: &[char]) -> Vec<char> {
    let s: String = w.iter().collect();
    if let Some(l) = irregular(&s) {
        return l.chars().collect();
    }
    let n = w.len();
    if n <= 3 || !w.iter().all(|c| c.is_alphabetic()) {
        return w.to_vec();
    }
    if s.ends_with("ies") {
        let mut stem = w[..n - 3].to_vec();
        if n > 4 {
            stem.push('y');
        } else {
            stem.extend(['i', 'e']);
        }
        return stem;
    }
    if s.ends_with("sses") {
        return w[..n - 2].to_vec();
    }
    if s.ends_with("es") {
        let stem = &w[..n - 2];
        let st: String = stem.iter().collect();
        if ["x", "z", "ch", "sh", "ss"].iter().any(|e| st.ends_with(e)) {
            return stem.to_vec();
        }
        return w[..n - 1].to_vec();
    }
    if s.ends_with('s') && !s.ends_with("ss") && !s.ends_with("us") && !s.ends_with("is") {
        return w[..n - 1].to_vec();
    }
    if s.ends_with("eed") {
        let stem = &w[..n - 3];
        if measure(stem) > 0 {
            return w[..n - 1].to_vec();
        }
        return w.to_vec();
    }
    for suffix_len in [3usize, 2] {
        let suffix = if suffix_len == 3 { "ing" } else { "ed" };
        if s.ends_with(suffix) {
            let stem = &w[..n - suffix_len];
            if stem.len() >= 2 && has_vowel(stem) {
                return repair(stem);
            }
            return w.to_vec();
        }
    }
    w.to_vec()
}

fn repair(stem: &[char]) -> Vec<char> {
    let s: String = stem.iter().collect();
    let n = stem.len();
    if ["at", "bl", "iz", "ul"].iter().any(|e| s.ends_with(e)) {
        let mut out = stem.to_vec();
        out.push('e');
        return out;
    }
    if n >= 2 && stem[n - 1] == stem[n - 2] && is_consonant(stem, n - 1) && !matches!(stem[n - 1], 'l' | 's' | 'z') {
        return stem[..n - 1].to_vec();
    }
    if measure(stem) == 1 && ends_cvc(stem) {
        let mut out = stem.to_vec();
        out.push('e');
        return out;
    }
    stem.to_vec()
}

fn is_consonant(w: &[char], i: usize) -> bool {
    match w[i] {
        'a' | 'e' | 'i' | 'o' | 'u' => false,
        'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

fn has_vowel(w: &[char]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

/// Porter measure: the number of vowel-consonant sequences.
fn measure(w: &[char]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..w.len() {
        let vowel = !is_consonant(w, i);
        if prev_vowel && !vowel {
            m += 1;
        }
        prev_vowel = vowel;
    }
    m
}

fn ends_cvc(w: &[char]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], 'w' | 'x' | 'y')
}
