//! Tokenization, sentence splitting, lemmatization, stopwords and
//! vocabularies shared by every stage.

mod lemma;
mod tokenize;
mod vocab;

use thiserror::Error;

pub use lemma::{is_punctuation, is_stopword, lemmatize, IRREGULAR, STOPWORDS};
pub use tokenize::{split_sentences, tokenize};
pub use vocab::*;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("token id {id} outside vocabulary of {len}")]
    IdOutOfRange { id: usize, len: usize },
    #[error("vocabulary line {line}: {msg}")]
    VocabFormat { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lemmas of the non-stopword, non-punctuation tokens of `tokens`, in order.
pub fn content_lemmas<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_punctuation(t) && !is_stopword(t))
        .map(lemmatize)
        .filter(|l| !is_stopword(l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn content_lemmas_drop_function_words() {
        let toks = tokenize("I will send the databases to Bob.");
        assert_eq!(content_lemmas(&toks), vec!["send", "database", "bob"]);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn lemmatize_is_idempotent(s in "[a-z]{1,14}") {
            let once = lemmatize(&s);
            prop_assert_eq!(lemmatize(&once), once);
        }

        #[test]
        fn min_count_one_keeps_everything(words in prop::collection::vec("[a-e]{1,3}", 0..30)) {
            let v = Vocabulary::build([words.clone()], 1);
            for w in &words {
                prop_assert!(v.contains(w));
            }
        }

        #[test]
        fn decode_encode_identity(ids in prop::collection::vec(0usize..12, 0..20)) {
            let words: Vec<String> = "a b c a b c".split(' ').map(String::from).collect();
            let v = Vocabulary::build([words], 1);
            let toks = v.decode(&ids).unwrap();
            prop_assert_eq!(v.encode(&toks).ids, ids);
        }
    }

    #[test]
    fn lemmatize_fuzz_10k() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10_000);
        for _ in 0..10_000 {
            let len = rng.gen_range(1..16);
            let s: String = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.9) {
                        rng.gen_range(b'a'..=b'z') as char
                    } else {
                        ['s', 'e', 'd', 'i', 'n', 'g', '\'', '1'][rng.gen_range(0..8)]
                    }
                })
                .collect();
            let once = lemmatize(&s);
            assert_eq!(lemmatize(&once), once, "{s}");
        }
    }
}
