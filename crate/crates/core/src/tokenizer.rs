//! SQL lexing, vocabulary construction and fixed-length encoding.
//!
//! The lexer is deliberately shallow: it knows nothing about SQL grammar,
//! only how to split text into identifier runs, literals, operators and
//! punctuation. Text outside string literals is lowercased. By default
//! string and numeric literals are folded to the placeholder tokens
//! [`STR_TOKEN`] and [`NUM_TOKEN`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of every encoded statement.
pub const SEQ_LEN: usize = 172;

pub const STR_TOKEN: &str = "<str>";
pub const NUM_TOKEN: &str = "<num>";
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const VOCAB_FORMAT_VERSION: u64 = 1;

const TWO_CHAR_OPERATORS: [&str; 5] = [">=", "<=", "<>", "!=", "||"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const PAD: TokenId = TokenId(0);
    pub const UNK: TokenId = TokenId(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexOptions {
    /// Replace string literals by `<str>` and numbers by `<num>`.
    pub fold_literals: bool,
}

impl Default for LexOptions {
    fn default() -> Self {
        Self { fold_literals: true }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '$' | '#')
}

/// Lexes with default options (literal folding on).
pub fn lex(sql: &str) -> Result<Vec<String>> {
    lex_with(sql, LexOptions::default())
}

pub fn lex_with(sql: &str, opts: LexOptions) -> Result<Vec<String>> {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let at = |i: usize| chars.get(i).map(|&(_, c)| c);

    while i < chars.len() {
        let (offset, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && at(i + 1) == Some('-') {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
        } else if c == '/' && at(i + 1) == Some('*') {
            i += 2;
            while i < chars.len() && !(chars[i].1 == '*' && at(i + 1) == Some('/')) {
                i += 1;
            }
            i = (i + 2).min(chars.len());
        } else if c == '\'' || c == '"' {
            // Quote characters are escaped by doubling.
            let start = i;
            i += 1;
            loop {
                match at(i) {
                    None => {
                        return Err(Error::Lex {
                            offset,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(q) if q == c && at(i + 1) == Some(c) => i += 2,
                    Some(q) if q == c => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            if opts.fold_literals {
                tokens.push(STR_TOKEN.to_string());
            } else {
                tokens.push(chars[start..i].iter().map(|&(_, c)| c).collect());
            }
        } else if c.is_ascii_digit() || (c == '.' && at(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while at(i).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
            }
            let fraction = at(i) == Some('.') && at(i + 1).is_some_and(|d| d.is_ascii_digit());
            if fraction {
                i += 1;
                while at(i).is_some_and(|d| d.is_ascii_digit()) {
                    i += 1;
                }
            }
            if matches!(at(i), Some('e' | 'E')) {
                let sign = usize::from(matches!(at(i + 1), Some('+' | '-')));
                if at(i + 1 + sign).is_some_and(|d| d.is_ascii_digit()) {
                    i += 1 + sign;
                    while at(i).is_some_and(|d| d.is_ascii_digit()) {
                        i += 1;
                    }
                }
            }
            // A digit run glued to letters ("1st", "2nd") is one identifier.
            if at(i).is_some_and(is_word_char) && chars[start..i].iter().all(|&(_, d)| d.is_ascii_digit()) {
                while at(i).is_some_and(is_word_char) {
                    i += 1;
                }
                tokens.push(chars[start..i].iter().map(|&(_, c)| c.to_ascii_lowercase()).collect());
            } else if opts.fold_literals {
                tokens.push(NUM_TOKEN.to_string());
            } else {
                tokens.push(chars[start..i].iter().map(|&(_, c)| c.to_ascii_lowercase()).collect());
            }
        } else if is_word_char(c) {
            let start = i;
            while at(i).is_some_and(is_word_char) {
                i += 1;
            }
            tokens.push(chars[start..i].iter().map(|&(_, c)| c.to_ascii_lowercase()).collect());
        } else {
            if let Some(next) = at(i + 1) {
                let pair: String = [c, next].iter().collect();
                if TWO_CHAR_OPERATORS.contains(&pair.as_str()) {
                    tokens.push(pair);
                    i += 2;
                    continue;
                }
            }
            tokens.push(c.to_lowercase().collect());
            i += 1;
        }
    }
    Ok(tokens)
}

/// Bidirectional token/id map. Ids 0 and 1 are always `<pad>` and `<unk>`;
/// corpus tokens take the contiguous ids from 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format_version: u64,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from the tokens that take ids 2, 3, ... in order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut token_to_id = HashMap::new();
        token_to_id.insert(PAD_TOKEN.to_string(), TokenId::PAD);
        token_to_id.insert(UNK_TOKEN.to_string(), TokenId::UNK);
        for tok in tokens {
            let tok = tok.into();
            let id = TokenId(id_to_token.len() as u32);
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary token {tok:?}")));
            }
            id_to_token.push(tok);
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id.index()).map(String::as_str)
    }

    /// Corpus tokens in id order, starting at id 2.
    pub fn corpus_tokens(&self) -> &[String] {
        &self.id_to_token[2..]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VocabFile {
            format_version: VOCAB_FORMAT_VERSION,
            tokens: self.corpus_tokens().to_vec(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        if file.format_version != VOCAB_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: file.format_version,
                supported: VOCAB_FORMAT_VERSION,
            });
        }
        Self::from_tokens(file.tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Counts tokens over the corpus and assigns ids by descending frequency,
/// breaking ties lexicographically. Tokens seen fewer than `min_count`
/// times are left out and will encode as `<unk>`.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    if min_count == 0 {
        return Err(Error::Parameter("min_count must be positive".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in corpus.iter().flatten() {
        let tok = tok.as_ref();
        if tok != PAD_TOKEN && tok != UNK_TOKEN {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}

/// A statement as exactly `len` token ids with PAD only at the tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedStatement {
    ids: Vec<TokenId>,
}

impl EncodedStatement {
    /// Validates the trailing-PAD invariant. The length is whatever `ids` holds.
    pub fn from_ids(ids: Vec<TokenId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Input("encoded statement cannot be empty".into()));
        }
        if let Some(first_pad) = ids.iter().position(|&t| t == TokenId::PAD) {
            if ids[first_pad..].iter().any(|&t| t != TokenId::PAD) {
                return Err(Error::Input("PAD before a non-PAD token".into()));
            }
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-PAD positions.
    pub fn content_len(&self) -> usize {
        self.ids.iter().take_while(|&&t| t != TokenId::PAD).count()
    }
}

/// Encodes to the standard [`SEQ_LEN`] positions.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> EncodedStatement {
    encode_to_len(tokens, vocab, SEQ_LEN)
}

/// Maps tokens to ids (unknowns to `<unk>`), keeps the first `len`, and
/// right-pads with `<pad>`.
pub fn encode_to_len<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, len: usize) -> EncodedStatement {
    let mut ids: Vec<TokenId> = tokens
        .iter()
        .take(len)
        .map(|t| match vocab.id(t.as_ref()) {
            // A literal "<pad>" token in the input must not create an interior PAD.
            Some(TokenId::PAD) | None => TokenId::UNK,
            Some(id) => id,
        })
        .collect();
    ids.resize(len, TokenId::PAD);
    EncodedStatement { ids }
}

/// Inverse of [`encode`] for in-vocabulary tokens; PAD positions are dropped.
pub fn decode(statement: &EncodedStatement, vocab: &Vocabulary) -> Vec<String> {
    statement
        .ids()
        .iter()
        .filter(|&&t| t != TokenId::PAD)
        .map(|&t| vocab.token(t).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lex_select_list() {
        let got = lex("SELECT id, first_name,last_name FROM person p").unwrap();
        assert_eq!(
            got,
            toks(&["select", "id", ",", "first_name", ",", "last_name", "from", "person", "p"])
        );
    }

    #[test]
    fn lex_empty() {
        assert!(lex("").unwrap().is_empty());
        assert!(lex("   \n\t").unwrap().is_empty());
    }

    #[test]
    fn lex_operator_and_number() {
        assert_eq!(lex("WHERE x >= 10").unwrap(), toks(&["where", "x", ">=", "<num>"]));
        assert_eq!(
            lex("a<>b!=c||d<=e").unwrap(),
            toks(&["a", "<>", "b", "!=", "c", "||", "d", "<=", "e"])
        );
        assert_eq!(lex("x = 3.14e-2").unwrap(), toks(&["x", "=", "<num>"]));
        assert_eq!(lex("x=.5").unwrap(), toks(&["x", "=", "<num>"]));
    }

    #[test]
    fn lex_strings_and_comments() {
        let sql = "SELECT * -- all columns\nFROM t /* the table */ WHERE name = 'O''Brien' AND c = \"X\"";
        assert_eq!(
            lex(sql).unwrap(),
            toks(&["select", "*", "from", "t", "where", "name", "=", "<str>", "and", "c", "=", "<str>"])
        );
        let raw = lex_with("WHERE name = 'Intro To CS' AND n = 12", LexOptions { fold_literals: false }).unwrap();
        assert_eq!(raw, toks(&["where", "name", "=", "'Intro To CS'", "and", "n", "=", "12"]));
    }

    #[test]
    fn lex_unterminated_string_reports_offset() {
        match lex("SELECT 'abc") {
            Err(Error::Lex { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lex_qualified_names_and_subquery() {
        let got = lex("WHERE p.year_born = (SELECT MIN(p1.year_born) FROM person p1);").unwrap();
        assert_eq!(
            got,
            toks(&[
                "where", "p", ".", "year_born", "=", "(", "select", "min", "(", "p1", ".", "year_born", ")", "from",
                "person", "p1", ")", ";"
            ])
        );
    }

    #[test]
    fn vocab_examples() {
        let v = build_vocab(&[toks(&["a", "b", "a"])], 1).unwrap();
        assert_eq!(v.id("<pad>"), Some(TokenId(0)));
        assert_eq!(v.id("<unk>"), Some(TokenId(1)));
        assert_eq!(v.id("a"), Some(TokenId(2)));
        assert_eq!(v.id("b"), Some(TokenId(3)));
        assert_eq!(v.len(), 4);

        let v = build_vocab(&[toks(&["a"]), toks(&["a"])], 3).unwrap();
        assert_eq!(v.len(), 2);

        let v = build_vocab(&[toks(&["y", "x"])], 1).unwrap();
        assert_eq!(v.id("x"), Some(TokenId(2)));
        assert_eq!(v.id("y"), Some(TokenId(3)));

        assert!(build_vocab::<String>(&[], 1).is_err());
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = build_vocab(&[toks(&["select", "from", "select"])], 1).unwrap();
        let json = v.to_json();
        assert_eq!(json, r#"{"format_version":1,"tokens":["select","from"]}"#);
        assert_eq!(Vocabulary::from_json(&json).unwrap(), v);
        assert!(matches!(
            Vocabulary::from_json(r#"{"format_version":2,"tokens":[]}"#),
            Err(Error::UnsupportedVersion { .. })
        ));
        assert!(Vocabulary::from_json(r#"{"format_version":1,"tokens":["a","a"]}"#).is_err());
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::from_tokens(["a"]).unwrap();
        let e = encode::<String>(&[], &v);
        assert_eq!(e.len(), SEQ_LEN);
        assert!(e.ids().iter().all(|&t| t == TokenId::PAD));

        let long: Vec<String> = (0..200).map(|_| "a".to_string()).collect();
        let e = encode(&long, &v);
        assert_eq!(e.len(), SEQ_LEN);
        assert!(e.ids().iter().all(|&t| t == TokenId(2)));

        let e = encode(&toks(&["a", "zzz"]), &v);
        assert_eq!(&e.ids()[..3], &[TokenId(2), TokenId(1), TokenId(0)]);
        assert!(e.ids()[2..].iter().all(|&t| t == TokenId::PAD));
    }

    #[test]
    fn encoded_statement_rejects_interior_pad() {
        assert!(EncodedStatement::from_ids(vec![TokenId(2), TokenId(0), TokenId(3)]).is_err());
        assert!(EncodedStatement::from_ids(vec![TokenId(2), TokenId(0), TokenId(0)]).is_ok());
    }

    proptest! {
        #[test]
        fn encode_length_is_fixed(words in proptest::collection::vec("[a-z<>]{1,6}", 0..400)) {
            let v = build_vocab(&[words.clone(), vec!["x".to_string()]], 1).unwrap();
            let e = encode(&words, &v);
            prop_assert_eq!(e.len(), SEQ_LEN);
            prop_assert!(EncodedStatement::from_ids(e.ids().to_vec()).is_ok());
        }

        #[test]
        fn decode_inverts_encode(words in proptest::collection::vec("[a-z_]{1,8}", 0..=SEQ_LEN)) {
            let v = build_vocab(&[words.clone(), vec!["x".to_string()]], 1).unwrap();
            prop_assert_eq!(decode(&encode(&words, &v), &v), words);
        }

        #[test]
        fn relexing_joined_output_is_stable(words in proptest::collection::vec("[a-zA-Z_][a-zA-Z0-9_]{0,8}", 0..20)) {
            let once = lex(&words.join(" ")).unwrap();
            let twice = lex(&once.join(" ")).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
