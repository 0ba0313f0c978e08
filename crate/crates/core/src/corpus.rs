//! Corpus ingestion, normalization, sentence segmentation and coarse POS tagging.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

const BUNDLED_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");
const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub source: String,
}

impl Document {
    /// Builds a document from raw text, normalizing it on the way in.
    pub fn new(doc_id: impl Into<String>, text: &str, source: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: normalize(text),
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub stmt_id: String,
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    /// Byte offsets into the owning document's normalized text.
    pub char_span: (usize, usize),
    pub source: String,
}

impl Statement {
    /// A free-standing statement, as if it were the only sentence of a document.
    pub fn standalone(stmt_id: impl Into<String>, text: &str) -> Self {
        let text = normalize(text);
        let stmt_id = stmt_id.into();
        Statement {
            doc_id: stmt_id.clone(),
            stmt_id,
            index: 0,
            char_span: (0, text.len()),
            text,
            source: String::new(),
        }
    }

    pub fn sort_key(&self) -> (&str, usize) {
        (&self.doc_id, self.char_span.0)
    }
}

/// NFC, control characters dropped, whitespace runs collapsed to one space,
/// and the ends trimmed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc() {
        if c.is_whitespace() {
            pending_space = true;
        } else if c.is_control() {
            continue;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    out
}

/// Rule-based sentence splitter: a sentence ends at a run of `.?!` (plus any
/// closing quotes or brackets) that is followed by whitespace and then an
/// uppercase letter or an opening quote. A lone period after a known
/// abbreviation or a single-letter initial does not end a sentence.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(
            BUNDLED_ABBREVIATIONS
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201D}' | '\u{2019}' | ')' | ']')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201C}' | '\u{2018}' | '(' | '[')
}

impl Segmenter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Segmenter {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn segment(&self, doc: &Document) -> Vec<Statement> {
        self.spans(&doc.text)
            .into_iter()
            .enumerate()
            .map(|(index, (start, end))| Statement {
                stmt_id: format!("{}#{}", doc.doc_id, index),
                doc_id: doc.doc_id.clone(),
                index,
                text: doc.text[start..end].to_string(),
                char_span: (start, end),
                source: doc.source.clone(),
            })
            .collect()
    }

    /// Sentence spans over already normalized text.
    pub fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut i = 0;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let sentence_start = *start.get_or_insert(pos);
            if !is_terminal(c) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < chars.len() && is_terminal(chars[j].1) {
                j += 1;
            }
            while j < chars.len() && is_closer(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let at_end = j == chars.len();
            let boundary = at_end
                || (chars[j].1.is_whitespace()
                    && chars
                        .get(j + 1)
                        .is_some_and(|&(_, n)| n.is_uppercase() || is_opener(n))
                    && !self.is_abbreviation(text, sentence_start, pos, j - i));
            if boundary {
                spans.push((sentence_start, end));
                start = None;
            }
            i = j.max(i + 1);
        }
        if let Some(s) = start {
            spans.push((s, text.trim_end().len()));
        }
        spans
    }

    fn is_abbreviation(&self, text: &str, sentence_start: usize, dot: usize, run: usize) -> bool {
        if run != 1 || !text[dot..].starts_with('.') {
            return false;
        }
        let word_start = text[sentence_start..dot]
            .rfind(char::is_whitespace)
            .map_or(sentence_start, |p| sentence_start + p + 1);
        let word = &text[word_start..=dot];
        let stem = &word[..word.len() - 1];
        let initial = stem.chars().count() == 1 && stem.chars().all(char::is_alphabetic);
        initial || self.abbreviations.contains(&word.to_lowercase())
    }
}

pub fn segment_sentences(doc: &Document) -> Vec<Statement> {
    Segmenter::default().segment(doc)
}

/// Segments every document; the output is ordered by `(doc_id, span start)`
/// whatever the scheduling.
pub fn segment_corpus(docs: &[Document], segmenter: &Segmenter) -> Vec<Statement> {
    let mut out: Vec<Statement> = docs
        .par_iter()
        .flat_map_iter(|d| segmenter.segment(d))
        .collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One document per file.
    #[default]
    Text,
    /// Line-delimited `{"id", "text"}` records.
    Jsonl,
}

/// Optional document filters applied before segmentation. Both are off by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prefilter {
    #[serde(default)]
    pub max_chars: Option<usize>,
    #[serde(default)]
    pub dedupe: bool,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
}

pub fn load_corpus(path: &Path, format: CorpusFormat, source: &str) -> Result<Vec<Document>> {
    let origin = path.display().to_string();
    let raw = std::fs::read(path).map_err(|e| Error::io(&origin, e))?;
    let text = String::from_utf8(raw).map_err(|e| Error::Parse {
        location: origin.clone(),
        message: format!("not valid UTF-8: {e}"),
    })?;
    let docs = match format {
        CorpusFormat::Text => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| origin.clone());
            vec![Document::new(stem, &text, source)]
        }
        CorpusFormat::Jsonl => crate::jsonl::parse_lines::<RawRecord>(&text, &origin)?
            .into_iter()
            .map(|r| Document::new(r.id, &r.text, source))
            .collect(),
    };
    Ok(docs.into_iter().filter(|d| !d.text.is_empty()).collect())
}

/// Sorts documents by id, rejects duplicate ids and applies the prefilter.
pub fn prepare_documents(mut docs: Vec<Document>, filter: &Prefilter) -> Result<Vec<Document>> {
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
        return Err(Error::Config(format!("duplicate document id {:?}", w[0].doc_id)));
    }
    let mut seen = HashSet::new();
    docs.retain(|d| {
        filter.max_chars.is_none_or(|cap| d.text.chars().count() <= cap)
            && (!filter.dedupe || seen.insert(d.text.clone()))
    });
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub pos: Pos,
    pub index: usize,
    /// Byte offsets into the tagged text.
    pub start: usize,
    pub end: usize,
}

/// Splits text into word tokens (letters and digits, with inner apostrophes
/// and hyphens) and single-character punctuation tokens.
pub fn tokenize(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |k: usize| chars.get(k).map_or(text.len(), |&(p, _)| p);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let d = chars[j].1;
                let joiner = matches!(d, '\'' | '\u{2019}' | '-')
                    && chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
                if d.is_alphanumeric() || joiner {
                    j += 1;
                } else {
                    break;
                }
            }
            spans.push((chars[i].0, end_of(j)));
            i = j;
        } else {
            spans.push((chars[i].0, end_of(i + 1)));
            i += 1;
        }
    }
    spans
}

pub trait Tagger: Send + Sync {
    fn tag(&self, text: &str) -> Result<Vec<TaggedToken>>;

    /// Identifies the tagging data; tags are a pure function of text and version.
    fn version(&self) -> String;
}

pub fn tag_tokens(text: &str, tagger: &dyn Tagger) -> Result<Vec<TaggedToken>> {
    tagger.tag(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub pos: Pos,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

/// Word list shared by the lexicon tagger and the lexicon mask-filler.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: HashMap<String, LexiconEntry>,
    version: String,
}

const VERB_SUFFIXES: [&str; 6] = ["ed", "ing", "ize", "ise", "ify", "izes"];

impl Lexicon {
    pub fn bundled() -> Self {
        Lexicon::parse(BUNDLED_LEXICON, "bundled lexicon").expect("bundled lexicon parses")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let rows: Vec<LexiconEntry> = crate::jsonl::parse_lines(text, origin)?;
        let version = hex_prefix(&Sha256::digest(text.as_bytes()));
        let entries = rows
            .into_iter()
            .map(|e| (e.word.to_lowercase(), e))
            .collect();
        Ok(Lexicon { entries, version })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&origin, e))?;
        Lexicon::parse(&text, &origin)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    /// Coarse tag of a single token, out of context.
    pub fn pos_of(&self, token: &str) -> Pos {
        let lower = token.to_lowercase();
        if let Some(e) = self.entries.get(&lower) {
            return e.pos;
        }
        let base = lower
            .strip_suffix("'s")
            .or_else(|| lower.strip_suffix("\u{2019}s"))
            .unwrap_or(&lower);
        if let Some(e) = self.entries.get(base) {
            return e.pos;
        }
        if !base.chars().all(char::is_alphabetic) {
            return Pos::Other;
        }
        let verbal = base.chars().count() >= 5 && VERB_SUFFIXES.iter().any(|s| base.ends_with(s));
        if verbal {
            Pos::Verb
        } else {
            Pos::Other
        }
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: std::sync::Arc<Lexicon>,
}

impl LexiconTagger {
    pub fn new(lexicon: std::sync::Arc<Lexicon>) -> Self {
        LexiconTagger { lexicon }
    }

    pub fn bundled() -> Self {
        LexiconTagger::new(std::sync::Arc::new(Lexicon::bundled()))
    }
}

impl Tagger for LexiconTagger {
    fn tag(&self, text: &str) -> Result<Vec<TaggedToken>> {
        if text.trim().is_empty() {
            return Err(Error::contract("cannot tag empty text"));
        }
        Ok(tokenize(text)
            .into_iter()
            .enumerate()
            .map(|(index, (start, end))| {
                let surface = &text[start..end];
                TaggedToken {
                    surface: surface.to_string(),
                    pos: self.lexicon.pos_of(surface),
                    index,
                    start,
                    end,
                }
            })
            .collect())
    }

    fn version(&self) -> String {
        format!("lexicon:{}", self.lexicon.version())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(doc: &str) -> Vec<String> {
        segment_sentences(&Document::new("d", doc, "test"))
            .into_iter()
            .map(|s| s.text)
            .collect()
    }

    #[test]
    fn splits_table_sentences() {
        assert_eq!(
            texts("Pears will rot if not refrigerated. A drum makes noise only if you beat it."),
            vec![
                "Pears will rot if not refrigerated.",
                "A drum makes noise only if you beat it."
            ]
        );
    }

    #[test]
    fn empty_document_has_no_statements() {
        assert!(texts("").is_empty());
        assert!(texts("   \n\t ").is_empty());
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            texts("Dr. Smith ran. He stopped."),
            vec!["Dr. Smith ran.", "He stopped."]
        );
        assert_eq!(texts("J. Smith ran. He stopped.").len(), 2);
    }

    #[test]
    fn question_and_quotes() {
        assert_eq!(
            texts("Is it cold? \"Yes,\" she said. Fine!"),
            vec!["Is it cold?", "\"Yes,\" she said.", "Fine!"]
        );
        // lowercase continuation is not a boundary
        assert_eq!(texts("It costs 3.5 dollars. ok then.").len(), 1);
    }

    #[test]
    fn spans_slice_document() {
        let doc = Document::new("d", "One here.  Two  there!\nThree", "s");
        let stmts = segment_sentences(&doc);
        assert_eq!(stmts.len(), 3);
        for s in &stmts {
            assert_eq!(&doc.text[s.char_span.0..s.char_span.1], s.text);
        }
        assert_eq!(stmts[1].stmt_id, "d#1");
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  a\u{0007}b \t\n c  "), "ab c");
        assert_eq!(normalize("e\u{0301}"), "\u{e9}");
    }

    #[test]
    fn lexicon_tags() {
        let tagger = LexiconTagger::bundled();
        let tags: Vec<(String, Pos)> = tagger
            .tag("Dogs are pets")
            .unwrap()
            .into_iter()
            .map(|t| (t.surface, t.pos))
            .collect();
        assert_eq!(
            tags,
            vec![
                ("Dogs".into(), Pos::Noun),
                ("are".into(), Pos::Verb),
                ("pets".into(), Pos::Noun)
            ]
        );
        assert_eq!(tagger.tag("refrigerated").unwrap()[0].pos, Pos::Verb);
        assert!(matches!(tagger.tag(""), Err(Error::Contract(_))));
    }

    #[test]
    fn verb_suffix_heuristic() {
        let lex = Lexicon::bundled();
        assert_eq!(lex.pos_of("sprinkled"), Pos::Verb);
        assert_eq!(lex.pos_of("zorbing"), Pos::Verb);
        assert_eq!(lex.pos_of("zed"), Pos::Other);
        assert_eq!(lex.pos_of("42"), Pos::Other);
        assert_eq!(lex.pos_of("Alice's"), Pos::Other);
        assert_eq!(lex.pos_of("dog's"), Pos::Noun);
    }

    #[test]
    fn tokenizer_keeps_contractions() {
        let text = "Alice's light-weight box, isn't it?";
        let toks: Vec<&str> = tokenize(text).into_iter().map(|(s, e)| &text[s..e]).collect();
        assert_eq!(toks, vec!["Alice's", "light-weight", "box", ",", "isn't", "it", "?"]);
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let docs = vec![Document::new("a", "x", "s"), Document::new("a", "y", "s")];
        assert!(prepare_documents(docs, &Prefilter::default()).is_err());
    }

    #[test]
    fn prefilter_caps_and_dedupes() {
        let docs = vec![
            Document::new("a", "Same text.", "s"),
            Document::new("b", "Same text.", "s"),
            Document::new("c", "A much longer text than the cap.", "s"),
        ];
        let kept = prepare_documents(
            docs,
            &Prefilter {
                max_chars: Some(12),
                dedupe: true,
            },
        )
        .unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].doc_id, "a");
    }
}
