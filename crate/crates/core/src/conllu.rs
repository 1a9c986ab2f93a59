//! CONLL-U reading and writing.
//!
//! Only syntactic word rows become [`Token`]s: multiword ranges (`3-4`) and
//! empty nodes (`3.1`) are skipped. Sentences that violate the structural
//! rules (consecutive ids, resolvable heads, a single acyclic root) are
//! dropped from the [`Treebank`] and reported as [`ParseWarning`]s instead
//! of failing the whole file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Morphological features of a token, category name to value.
pub type Features = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("malformed FEATS column {column:?}: {reason}")]
    MalformedFeatures { column: String, reason: &'static str },
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: input is not valid UTF-8")]
    Encoding { line: usize },
    #[error("head cycle through tokens {members:?}")]
    HeadCycle { members: Vec<u32> },
    #[error("no token with id {0}")]
    UnknownToken(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: Option<String>,
    pub feats: Features,
    /// 0 marks the sentence root.
    pub head: u32,
    pub deprel: String,
    /// Raw DEPS column, kept verbatim for writing.
    pub deps: String,
    /// Raw MISC column.
    pub misc: String,
}

impl Token {
    /// `false` when MISC carries `SpaceAfter=No`.
    pub fn space_after(&self) -> bool {
        !self.misc.split('|').any(|item| item == "SpaceAfter=No")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn token(&self, id: u32) -> Option<&Token> {
        if id == 0 {
            return None;
        }
        self.tokens.get(id as usize - 1).filter(|t| t.id == id)
    }

    /// Token forms joined by single spaces.
    pub fn tokenized_text(&self) -> String {
        let forms: Vec<&str> = self.tokens.iter().map(|t| t.form.as_str()).collect();
        forms.join(" ")
    }

    /// Surface text rebuilt from forms, honoring `SpaceAfter=No`.
    pub fn detokenized_text(&self) -> String {
        let mut out = String::new();
        for (i, token) in self.tokens.iter().enumerate() {
            out.push_str(&token.form);
            if i + 1 < self.tokens.len() && token.space_after() {
                out.push(' ');
            }
        }
        out
    }

    pub fn roots(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.head == 0)
    }

    /// Depth of every token, indexed by `id - 1`.
    pub fn depths(&self) -> Result<Vec<usize>, ConlluError> {
        let mut depths: Vec<Option<usize>> = vec![None; self.tokens.len()];
        for token in &self.tokens {
            if depths[token.id as usize - 1].is_some() {
                continue;
            }
            // Walk up until a token with known depth or the root.
            let mut chain = Vec::new();
            let mut current = token.id;
            let base = loop {
                if current == 0 {
                    break None;
                }
                let idx = current as usize - 1;
                if let Some(d) = depths[idx] {
                    break Some(d);
                }
                if let Some(pos) = chain.iter().position(|&c| c == current) {
                    let mut members: Vec<u32> = chain[pos..].to_vec();
                    members.sort_unstable();
                    return Err(ConlluError::HeadCycle { members });
                }
                chain.push(current);
                current = self
                    .token(current)
                    .ok_or(ConlluError::UnknownToken(current))?
                    .head;
            };
            // chain[last] hangs off the root (base None) or off a known token.
            let start = base.map_or(0, |d| d + 1);
            for (offset, &id) in chain.iter().rev().enumerate() {
                depths[id as usize - 1] = Some(start + offset);
            }
        }
        Ok(depths.into_iter().map(|d| d.unwrap_or(0)).collect())
    }

    fn check(&self) -> Result<(), String> {
        if self.tokens.is_empty() {
            return Err("sentence has no word tokens".into());
        }
        let n = self.tokens.len() as u32;
        for (i, token) in self.tokens.iter().enumerate() {
            let expected = i as u32 + 1;
            if token.id != expected {
                return Err(format!(
                    "token ids are not consecutive: expected {expected}, found {}",
                    token.id
                ));
            }
            if token.head > n {
                return Err(format!(
                    "token {} has dangling head {}",
                    token.id, token.head
                ));
            }
            if token.head == token.id {
                return Err(format!("token {} is its own head", token.id));
            }
        }
        match self.roots().count() {
            0 => return Err("sentence has no root".into()),
            1 => {}
            k => return Err(format!("sentence has {k} roots")),
        }
        self.depths().map(|_| ()).map_err(|e| e.to_string())
    }
}

/// Number of head hops from token `id` to the root; the root has depth 0.
pub fn token_depth(sentence: &Sentence, id: u32) -> Result<usize, ConlluError> {
    let mut seen = Vec::new();
    let mut current = sentence.token(id).ok_or(ConlluError::UnknownToken(id))?;
    while current.head != 0 {
        if let Some(pos) = seen.iter().position(|&s| s == current.id) {
            let mut members: Vec<u32> = seen[pos..].to_vec();
            members.sort_unstable();
            return Err(ConlluError::HeadCycle { members });
        }
        seen.push(current.id);
        current = sentence
            .token(current.head)
            .ok_or(ConlluError::UnknownToken(current.head))?;
    }
    Ok(seen.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclaredSplit {
    Train,
    Dev,
    Test,
    None,
}

impl DeclaredSplit {
    /// `-train`, `-dev` and `-test` file-stem suffixes, as in UD releases.
    pub fn from_path(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if stem.ends_with("-train") {
            DeclaredSplit::Train
        } else if stem.ends_with("-dev") {
            DeclaredSplit::Dev
        } else if stem.ends_with("-test") {
            DeclaredSplit::Test
        } else {
            DeclaredSplit::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// Line on which the offending sentence starts.
    pub line: usize,
    pub sent_id: Option<String>,
    pub reason: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sent_id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.reason),
            None => write!(f, "line {}: {}", self.line, self.reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Treebank {
    pub language_code: String,
    pub source_path: String,
    pub sentences: Vec<Sentence>,
    pub declared_split: DeclaredSplit,
    pub warnings: Vec<ParseWarning>,
}

/// Parses a FEATS column. `_` is the empty map.
pub fn parse_feats(raw: &str) -> Result<Features, ConlluError> {
    let mut feats = Features::new();
    if raw == "_" {
        return Ok(feats);
    }
    let malformed = |reason| ConlluError::MalformedFeatures {
        column: raw.to_string(),
        reason,
    };
    for item in raw.split('|') {
        let (key, value) = item.split_once('=').ok_or_else(|| malformed("item without '='"))?;
        if key.is_empty() {
            return Err(malformed("empty category name"));
        }
        if value.is_empty() {
            return Err(malformed("empty category value"));
        }
        if value.contains('=') {
            return Err(malformed("value contains '='"));
        }
        feats.insert(key.to_string(), value.to_string());
    }
    Ok(feats)
}

/// Inverse of [`parse_feats`].
pub fn format_feats(feats: &Features) -> String {
    if feats.is_empty() {
        return "_".to_string();
    }
    let items: Vec<String> = feats.iter().map(|(k, v)| format!("{k}={v}")).collect();
    items.join("|")
}

#[derive(Default)]
struct PendingSentence {
    start_line: usize,
    sent_id: Option<String>,
    text: Option<String>,
    tokens: Vec<Token>,
    error: Option<String>,
    rows: usize,
}

enum Row {
    Word(Token),
    Skipped,
}

fn parse_row(line: &str, line_no: usize) -> Result<Result<Row, String>, ConlluError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(ConlluError::ColumnCount {
            line: line_no,
            found: cols.len(),
        });
    }
    if cols[0].contains('-') || cols[0].contains('.') {
        return Ok(Ok(Row::Skipped));
    }
    let id = match cols[0].parse::<u32>() {
        Ok(id) if id >= 1 => id,
        _ => return Ok(Err(format!("line {line_no}: invalid token id {:?}", cols[0]))),
    };
    let head = match cols[6].parse::<u32>() {
        Ok(h) => h,
        Err(_) => return Ok(Err(format!("line {line_no}: invalid head {:?}", cols[6]))),
    };
    let feats = match parse_feats(cols[5]) {
        Ok(f) => f,
        Err(e) => return Ok(Err(format!("line {line_no}: {e}"))),
    };
    Ok(Ok(Row::Word(Token {
        id,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        xpos: (cols[4] != "_").then(|| cols[4].to_string()),
        feats,
        head,
        deprel: cols[7].to_string(),
        deps: cols[8].to_string(),
        misc: cols[9].to_string(),
    })))
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.trim_start_matches('#').trim_start();
    let rest = rest.strip_prefix(key)?;
    let rest = rest.trim_start().strip_prefix('=')?;
    Some(rest.trim())
}

/// Parses a CONLL-U stream into a treebank with no source path and no
/// declared split.
pub fn parse_document<R: BufRead>(mut input: R, language_code: &str) -> Result<Treebank, ConlluError> {
    let mut sentences = Vec::new();
    let mut warnings = Vec::new();
    let mut pending = PendingSentence::default();
    let mut line_no = 0usize;
    let mut buf = String::new();

    let finish = |pending: PendingSentence,
                      sentences: &mut Vec<Sentence>,
                      warnings: &mut Vec<ParseWarning>| {
        if pending.rows == 0 && pending.tokens.is_empty() && pending.error.is_none() {
            // Comment-only block (e.g. `# newdoc`), nothing to emit.
            return;
        }
        let ordinal = sentences.len() + warnings.len() + 1;
        let sentence = Sentence {
            sent_id: pending
                .sent_id
                .clone()
                .unwrap_or_else(|| format!("{language_code}-s{ordinal}")),
            text: String::new(),
            tokens: pending.tokens,
        };
        let verdict = match pending.error {
            Some(e) => Err(e),
            None => sentence.check(),
        };
        match verdict {
            Ok(()) => {
                let text = pending
                    .text
                    .unwrap_or_else(|| sentence.detokenized_text());
                sentences.push(Sentence { text, ..sentence });
            }
            Err(reason) => warnings.push(ParseWarning {
                line: pending.start_line,
                sent_id: pending.sent_id,
                reason,
            }),
        }
    };

    loop {
        buf.clear();
        let read = match input.read_line(&mut buf) {
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                return Err(ConlluError::Encoding { line: line_no + 1 })
            }
            Err(e) => return Err(e.into()),
        };
        if read == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            let done = std::mem::take(&mut pending);
            finish(done, &mut sentences, &mut warnings);
            continue;
        }
        if pending.start_line == 0 {
            pending.start_line = line_no;
        }
        if line.starts_with('#') {
            if let Some(v) = comment_value(line, "sent_id") {
                pending.sent_id = Some(v.to_string());
            } else if let Some(v) = comment_value(line, "text") {
                pending.text = Some(v.to_string());
            }
            continue;
        }
        pending.rows += 1;
        match parse_row(line, line_no)? {
            Ok(Row::Word(token)) => pending.tokens.push(token),
            Ok(Row::Skipped) => {}
            Err(reason) => {
                pending.error.get_or_insert(reason);
            }
        }
    }
    finish(pending, &mut sentences, &mut warnings);

    Ok(Treebank {
        language_code: language_code.to_string(),
        source_path: String::new(),
        sentences,
        declared_split: DeclaredSplit::None,
        warnings,
    })
}

/// UD file names start with the language code: `en_ewt-ud-train.conllu`.
pub fn infer_language_code(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let end = name.find(['_', '-', '.']).unwrap_or(name.len());
    name[..end].to_string()
}

/// Reads a treebank file, inferring the language code and declared split
/// from its name unless `language_code` is given.
pub fn read_treebank(path: &Path, language_code: Option<&str>) -> Result<Treebank, ConlluError> {
    let file = File::open(path)?;
    let code = language_code
        .map(str::to_string)
        .unwrap_or_else(|| infer_language_code(path));
    let mut treebank = parse_document(BufReader::new(file), &code)?;
    treebank.source_path = path.display().to_string();
    treebank.declared_split = DeclaredSplit::from_path(path);
    Ok(treebank)
}

/// Writes sentences back as CONLL-U with `sent_id` and `text` comments.
pub fn write_conllu<W: Write>(sentences: &[Sentence], mut sink: W) -> io::Result<()> {
    for sentence in sentences {
        writeln!(sink, "# sent_id = {}", sentence.sent_id)?;
        writeln!(sink, "# text = {}", sentence.text)?;
        for t in &sentence.tokens {
            writeln!(
                sink,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id,
                t.form,
                t.lemma,
                t.upos,
                t.xpos.as_deref().unwrap_or("_"),
                format_feats(&t.feats),
                t.head,
                t.deprel,
                t.deps,
                t.misc
            )?;
        }
        writeln!(sink)?;
    }
    Ok(())
}
