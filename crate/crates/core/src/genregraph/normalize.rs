//! Tag normalization: case folding, splitting on non-alphanumeric runs and
//! prefix-tree decomposition of concatenated genre words.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::text::fold_case;

/// `word<TAB>lemma` table. Words missing from the table are their own lemma.
#[derive(Debug, Clone, Default)]
pub struct LemmaTable {
    map: HashMap<String, String>,
}

impl LemmaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (word, lemma) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected `word<TAB>lemma`"))?;
            if word.is_empty() || lemma.is_empty() || lemma.contains('\t') {
                return Err(Error::parse(i + 1, "expected `word<TAB>lemma`"));
            }
            map.insert(fold_case(word), fold_case(lemma));
        }
        Ok(LemmaTable { map })
    }

    pub fn insert(&mut self, word: &str, lemma: &str) {
        self.map.insert(fold_case(word), fold_case(lemma));
    }

    pub fn lemma<'a>(&'a self, word: &'a str) -> &'a str {
        self.map.get(word).map_or(word, String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<char, usize>,
    terminal: bool,
}

/// Words used to split concatenated tokens, held in a character trie.
#[derive(Debug, Clone)]
pub struct SplitVocabulary {
    words: HashSet<String>,
    trie: Vec<TrieNode>,
}

impl Default for SplitVocabulary {
    fn default() -> Self {
        SplitVocabulary {
            words: HashSet::new(),
            trie: vec![TrieNode::default()],
        }
    }
}

impl SplitVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str) {
        if word.is_empty() || !self.words.insert(word.to_owned()) {
            return;
        }
        let mut node = 0;
        for ch in word.chars() {
            node = match self.trie[node].children.get(&ch) {
                Some(&next) => next,
                None => {
                    self.trie.push(TrieNode::default());
                    let next = self.trie.len() - 1;
                    self.trie[node].children.insert(ch, next);
                    next
                }
            };
        }
        self.trie[node].terminal = true;
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Byte lengths of every vocabulary word that is a prefix of `s`,
    /// longest first.
    fn prefix_lengths(&self, s: &str) -> Vec<usize> {
        let mut out = Vec::new();
        let mut node = 0;
        for (offset, ch) in s.char_indices() {
            match self.trie[node].children.get(&ch) {
                Some(&next) => node = next,
                None => break,
            }
            if self.trie[node].terminal {
                out.push(offset + ch.len_utf8());
            }
        }
        out.reverse();
        out
    }

    /// Splits `token` into vocabulary words, preferring the longest first
    /// word at every step and backtracking when the remainder cannot be
    /// covered. Returns `None` when no full decomposition exists.
    pub fn decompose(&self, token: &str) -> Option<Vec<String>> {
        let mut dead = HashSet::new();
        let mut parts = Vec::new();
        if self.cover(token, 0, &mut dead, &mut parts) {
            Some(parts.into_iter().map(str::to_owned).collect())
        } else {
            None
        }
    }

    fn cover<'a>(
        &self,
        token: &'a str,
        start: usize,
        dead: &mut HashSet<usize>,
        parts: &mut Vec<&'a str>,
    ) -> bool {
        if start == token.len() {
            return true;
        }
        if dead.contains(&start) {
            return false;
        }
        for len in self.prefix_lengths(&token[start..]) {
            parts.push(&token[start..start + len]);
            if self.cover(token, start + len, dead, parts) {
                return true;
            }
            parts.pop();
        }
        dead.insert(start);
        false
    }
}

/// Case-folds `raw` and splits it on every maximal run of non-alphanumeric
/// characters.
pub fn split_tokens(raw: &str) -> Vec<String> {
    fold_case(raw)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Normalizes a raw tag into graph tokens.
///
/// Tokens that are vocabulary words stay whole. Other tokens are split into
/// vocabulary words when a full decomposition exists, and kept whole
/// otherwise.
pub fn normalize_tag(raw: &str, vocabulary: &SplitVocabulary) -> Result<Vec<String>> {
    let tokens = split_tokens(raw);
    if tokens.is_empty() {
        return Err(Error::EmptyTag(raw.to_owned()));
    }
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        if vocabulary.contains(&token) {
            out.push(token);
        } else if let Some(parts) = vocabulary.decompose(&token) {
            out.extend(parts);
        } else {
            out.push(token);
        }
    }
    Ok(out)
}

/// True when `token` is already in normalized form.
pub fn is_normalized_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(char::is_alphanumeric) && fold_case(token) == token
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> SplitVocabulary {
        let mut v = SplitVocabulary::new();
        for w in words {
            v.insert(w);
        }
        v
    }

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn splits_on_punctuation() {
        for v in [vocab(&[]), vocab(&["drum", "bass", "n"]), vocab(&["rock"])] {
            assert_eq!(
                normalize_tag("drum'n'bass", &v).unwrap(),
                toks(&["drum", "n", "bass"])
            );
        }
        assert_eq!(
            normalize_tag("Rock_alternatif", &vocab(&[])).unwrap(),
            toks(&["rock", "alternatif"])
        );
    }

    #[test]
    fn prefix_split() {
        assert_eq!(
            normalize_tag("sludgemetal", &vocab(&["sludge", "metal"])).unwrap(),
            toks(&["sludge", "metal"])
        );
        assert_eq!(
            normalize_tag("sludgemetal", &vocab(&["sludge", "metal", "sludgemetal"])).unwrap(),
            toks(&["sludgemetal"])
        );
        assert_eq!(
            normalize_tag("IndieRock", &vocab(&["indie", "rock"])).unwrap(),
            toks(&["indie", "rock"])
        );
    }

    #[test]
    fn no_full_decomposition_keeps_token() {
        assert_eq!(
            normalize_tag("sludgecore", &vocab(&["sludge", "metal"])).unwrap(),
            toks(&["sludgecore"])
        );
    }

    #[test]
    fn backtracks_past_greedy_dead_end() {
        // longest first word "posth" leaves "ardcore"
        let v = vocab(&["post", "posth", "hardcore"]);
        assert_eq!(
            normalize_tag("posthardcore", &v).unwrap(),
            toks(&["post", "hardcore"])
        );
    }

    #[test]
    fn prefers_longest_first_word() {
        let v = vocab(&["elect", "electro", "ropop", "pop"]);
        assert_eq!(
            normalize_tag("electropop", &v).unwrap(),
            toks(&["electro", "pop"])
        );
    }

    #[test]
    fn accents_are_alphanumeric() {
        assert_eq!(
            normalize_tag("Balada_romántica", &vocab(&[])).unwrap(),
            toks(&["balada", "romántica"])
        );
        assert_eq!(
            normalize_tag("Rock_psychédélique", &vocab(&[])).unwrap(),
            toks(&["rock", "psychédélique"])
        );
    }

    #[test]
    fn empty_tags_rejected() {
        assert!(matches!(
            normalize_tag("---", &vocab(&[])),
            Err(Error::EmptyTag(_))
        ));
        assert!(normalize_tag("", &vocab(&[])).is_err());
    }

    #[test]
    fn lemma_table() {
        let t = LemmaTable::load("Northern\tnorth\nchildren\tchild\n\n".as_bytes()).unwrap();
        assert_eq!(t.lemma("northern"), "north");
        assert_eq!(t.lemma("jazz"), "jazz");
        assert!(LemmaTable::load("nolemma\n".as_bytes()).is_err());
    }

    #[test]
    fn pathological_input_terminates() {
        let v = vocab(&["a", "aa", "aaa"]);
        let token = format!("{}b", "a".repeat(200));
        assert_eq!(v.decompose(&token), None);
    }
}
