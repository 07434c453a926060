//! Paraphrase groups and the deterministic paraphrase strategies.
//!
//! Captions follow the template `prefix? article attribute1 attribute2 head`,
//! e.g. `A photo of a young female academic`. Three strategies build groups
//! of paraphrased queries from them:
//!
//! * `P1`: free rewrites produced by an external generator and ingested from a
//!   JSON Lines manifest (`o`, `c1`, `c2`).
//! * `P2`: the four admissible prefixes (`p1`, `p2`, `p3`, `np`).
//! * `P3`: attribute substitution through a synonym lexicon (`o`, `a1`, `a2`,
//!   `a12`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    P1,
    P2,
    P3,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::P1, Strategy::P2, Strategy::P3];

    /// Full label set of a group built with this strategy, in canonical order.
    pub fn labels(self) -> &'static [VariantLabel] {
        use VariantLabel::*;
        match self {
            Strategy::P1 => &[O, C1, C2],
            Strategy::P2 => &[P1, P2, P3, Np],
            Strategy::P3 => &[O, A1, A2, A12],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::P1 => "P1",
            Strategy::P2 => "P2",
            Strategy::P3 => "P3",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(Strategy::P1),
            "P2" => Ok(Strategy::P2),
            "P3" => Ok(Strategy::P3),
            _ => Err(format!("unknown strategy {s:?}, expected p1, p2 or p3")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantLabel {
    O,
    C1,
    C2,
    P1,
    P2,
    P3,
    Np,
    A1,
    A2,
    A12,
}

impl VariantLabel {
    pub const ALL: [VariantLabel; 10] = [
        VariantLabel::O,
        VariantLabel::C1,
        VariantLabel::C2,
        VariantLabel::P1,
        VariantLabel::P2,
        VariantLabel::P3,
        VariantLabel::Np,
        VariantLabel::A1,
        VariantLabel::A2,
        VariantLabel::A12,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantLabel::O => "o",
            VariantLabel::C1 => "c1",
            VariantLabel::C2 => "c2",
            VariantLabel::P1 => "p1",
            VariantLabel::P2 => "p2",
            VariantLabel::P3 => "p3",
            VariantLabel::Np => "np",
            VariantLabel::A1 => "a1",
            VariantLabel::A2 => "a2",
            VariantLabel::A12 => "a12",
        }
    }
}

impl fmt::Display for VariantLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown variant label {s:?}"))
    }
}

impl Serialize for VariantLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for VariantLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Demographic attribute of the caption a group was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Female,
    Male,
    Unspecified,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Female => "female",
            Stratum::Male => "male",
            Stratum::Unspecified => "unspecified",
        }
    }

    /// Infers the stratum from caption attributes. Terms from both sides, or
    /// from neither, give `Unspecified`.
    pub fn infer<'a>(terms: impl IntoIterator<Item = &'a str>) -> Stratum {
        const FEMALE: &[&str] = &["female", "woman", "women", "girl", "lady", "feminine"];
        const MALE: &[&str] = &["male", "man", "men", "boy", "gentleman", "masculine"];
        let (mut female, mut male) = (false, false);
        for term in terms {
            let t = term.to_lowercase();
            female |= FEMALE.contains(&t.as_str());
            male |= MALE.contains(&t.as_str());
        }
        match (female, male) {
            (true, false) => Stratum::Female,
            (false, true) => Stratum::Male,
            _ => Stratum::Unspecified,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stratum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "female" => Ok(Stratum::Female),
            "male" => Ok(Stratum::Male),
            "unspecified" => Ok(Stratum::Unspecified),
            _ => Err(format!("unknown stratum {s:?}")),
        }
    }
}

/// The four caption prefixes, in `p1`, `p2`, `p3`, `np` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prefix {
    ImageOf,
    PictureOf,
    PhotoOf,
    None,
}

impl Prefix {
    pub const ALL: [Prefix; 4] = [
        Prefix::ImageOf,
        Prefix::PictureOf,
        Prefix::PhotoOf,
        Prefix::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Prefix::ImageOf => "an image of",
            Prefix::PictureOf => "a picture of",
            Prefix::PhotoOf => "a photo of",
            Prefix::None => "",
        }
    }

    fn label(self) -> VariantLabel {
        match self {
            Prefix::ImageOf => VariantLabel::P1,
            Prefix::PictureOf => VariantLabel::P2,
            Prefix::PhotoOf => VariantLabel::P3,
            Prefix::None => VariantLabel::Np,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse caption {caption:?}: {message} (bytes {}..{})", span.start, span.end)]
pub struct CaptionParseError {
    pub caption: String,
    pub message: String,
    /// Byte span of the offending token(s) within the caption.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionStructure {
    pub raw: String,
    pub prefix: Prefix,
    /// Article as written, lowercased.
    pub article: String,
    pub attribute1: String,
    pub attribute2: String,
    pub head: String,
}

/// Picks "a" or "an" for the following word by its initial letter.
pub fn article_for(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn tokens_with_spans(s: &str) -> Vec<(&str, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(st)) => {
                out.push((&s[st..i], st..i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push((&s[st..], st..s.len()));
    }
    out
}

pub fn parse_caption(raw: &str) -> Result<CaptionStructure, CaptionParseError> {
    let tokens = tokens_with_spans(raw);
    let fail = |message: &str, span: Range<usize>| CaptionParseError {
        caption: raw.to_string(),
        message: message.to_string(),
        span,
    };
    if tokens.is_empty() {
        return Err(fail("empty caption", 0..raw.len()));
    }

    let mut prefix = Prefix::None;
    for candidate in [Prefix::ImageOf, Prefix::PictureOf, Prefix::PhotoOf] {
        let words: Vec<&str> = candidate.as_str().split(' ').collect();
        if tokens.len() >= words.len()
            && tokens
                .iter()
                .zip(&words)
                .all(|((t, _), w)| t.eq_ignore_ascii_case(w))
        {
            prefix = candidate;
            break;
        }
    }
    let rest = match prefix {
        Prefix::None => &tokens[..],
        p => &tokens[p.as_str().split(' ').count()..],
    };

    let Some((article, article_span)) = rest.first() else {
        return Err(fail("missing article after prefix", raw.len()..raw.len()));
    };
    let article = article.to_ascii_lowercase();
    if article != "a" && article != "an" {
        return Err(fail(
            "expected article \"a\" or \"an\"",
            article_span.clone(),
        ));
    }
    if rest.len() < 4 {
        let span = rest[0].1.start..raw.len();
        return Err(fail(
            "expected two attributes and a head noun after the article",
            span,
        ));
    }
    let head = rest[3..]
        .iter()
        .map(|(t, _)| *t)
        .collect::<Vec<_>>()
        .join(" ");
    Ok(CaptionStructure {
        raw: raw.to_string(),
        prefix,
        article,
        attribute1: rest[1].0.to_string(),
        attribute2: rest[2].0.to_string(),
        head,
    })
}

impl CaptionStructure {
    /// Joins the parsed parts back together using the article as written.
    pub fn reassemble(&self) -> String {
        self.join(
            self.prefix,
            &self.article,
            &self.attribute1,
            &self.attribute2,
        )
    }

    /// Renders with `prefix` and a recomputed article.
    pub fn render_with_prefix(&self, prefix: Prefix) -> String {
        self.join(
            prefix,
            article_for(&self.attribute1),
            &self.attribute1,
            &self.attribute2,
        )
    }

    /// Renders with both attributes replaced and a recomputed article.
    pub fn render_with_attributes(&self, attribute1: &str, attribute2: &str) -> String {
        self.join(self.prefix, article_for(attribute1), attribute1, attribute2)
    }

    pub fn render(&self) -> String {
        self.render_with_prefix(self.prefix)
    }

    fn join(&self, prefix: Prefix, article: &str, a1: &str, a2: &str) -> String {
        let body = format!("{article} {a1} {a2} {}", self.head);
        match prefix {
            Prefix::None => body,
            p => format!("{} {body}", p.as_str()),
        }
    }

    pub fn stratum(&self) -> Stratum {
        Stratum::infer([self.attribute1.as_str(), self.attribute2.as_str()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("group {0:?} has fewer than two members")]
    TooFewMembers(String),
    #[error("group {group_id:?} repeats variant label {label}")]
    DuplicateLabel {
        group_id: String,
        label: VariantLabel,
    },
    #[error("group {group_id:?}: label {label} is not valid for strategy {strategy}")]
    LabelNotInStrategy {
        group_id: String,
        label: VariantLabel,
        strategy: Strategy,
    },
    #[error("group {group_id:?}: variants {first} and {second} are the same caption {caption:?}")]
    DuplicateCaption {
        group_id: String,
        first: VariantLabel,
        second: VariantLabel,
        caption: String,
    },
}

/// One original query plus its paraphrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParaphraseGroup {
    group_id: String,
    strategy: Strategy,
    members: Vec<(VariantLabel, String)>,
    stratum: Stratum,
}

impl ParaphraseGroup {
    pub fn new(
        group_id: impl Into<String>,
        strategy: Strategy,
        members: Vec<(VariantLabel, String)>,
        stratum: Stratum,
    ) -> Result<Self, GroupError> {
        let group_id = group_id.into();
        if members.len() < 2 {
            return Err(GroupError::TooFewMembers(group_id));
        }
        let allowed = strategy.labels();
        for (i, (label, caption)) in members.iter().enumerate() {
            if !allowed.contains(label) {
                return Err(GroupError::LabelNotInStrategy {
                    group_id,
                    label: *label,
                    strategy,
                });
            }
            for (other, other_caption) in &members[..i] {
                if other == label {
                    return Err(GroupError::DuplicateLabel {
                        group_id,
                        label: *label,
                    });
                }
                if other_caption == caption {
                    return Err(GroupError::DuplicateCaption {
                        group_id,
                        first: *other,
                        second: *label,
                        caption: caption.clone(),
                    });
                }
            }
        }
        Ok(Self {
            group_id,
            strategy,
            members,
            stratum,
        })
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn stratum(&self) -> Stratum {
        self.stratum
    }

    pub fn members(&self) -> &[(VariantLabel, String)] {
        &self.members
    }

    /// Number of queries in the group.
    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn caption(&self, label: VariantLabel) -> Option<&str> {
        self.members
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, c)| c.as_str())
    }

    /// Key under which the embedding of `label` is stored in a query bundle.
    pub fn query_key(&self, label: VariantLabel) -> String {
        query_key(&self.group_id, label)
    }
}

pub fn query_key(group_id: &str, label: VariantLabel) -> String {
    format!("{group_id}/{label}")
}

/// Builds the four prefix variants of a caption.
pub fn prefix_variants(cs: &CaptionStructure, group_id: impl Into<String>) -> ParaphraseGroup {
    let members = Prefix::ALL
        .into_iter()
        .map(|p| (p.label(), cs.render_with_prefix(p)))
        .collect();
    ParaphraseGroup::new(group_id, Strategy::P2, members, cs.stratum())
        .expect("prefix variants differ in their prefix")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("lexicon maps {0:?} to itself")]
    SelfMapping(String),
    #[error("lexicon term {0:?} appears more than once (case-insensitive)")]
    DuplicateTerm(String),
    #[error("lexicon has no synonym for attribute {0:?}")]
    MissingEntry(String),
    #[error("lexicon is not invertible: {0:?} is the synonym of several terms")]
    NotInvertible(String),
    #[error("invalid lexicon JSON: {0}")]
    Json(String),
    #[error("cannot read lexicon {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Frozen map from attribute term to exactly one synonym. Keys and values
/// are stored lowercase; lookups are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, String>,
}

impl SynonymLexicon {
    pub fn new<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self, LexiconError>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut entries = BTreeMap::new();
        for (term, synonym) in pairs {
            let term = term.as_ref().trim().to_lowercase();
            let synonym = synonym.as_ref().trim().to_lowercase();
            if term == synonym {
                return Err(LexiconError::SelfMapping(term));
            }
            if entries.insert(term.clone(), synonym).is_some() {
                return Err(LexiconError::DuplicateTerm(term));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let map: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| LexiconError::Json(e.to_string()))?;
        let mut pairs = Vec::with_capacity(map.len());
        for (k, v) in map {
            let Value::String(v) = v else {
                return Err(LexiconError::Json(format!(
                    "synonym of {k:?} is not a string"
                )));
            };
            pairs.push((k, v));
        }
        Self::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("string map serializes")
    }

    pub fn lookup(&self, term: &str) -> Option<&str> {
        self.entries.get(&term.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn inverse(&self) -> Result<Self, LexiconError> {
        let mut entries = BTreeMap::new();
        for (term, synonym) in &self.entries {
            if entries.insert(synonym.clone(), term.clone()).is_some() {
                return Err(LexiconError::NotInvertible(synonym.clone()));
            }
        }
        Ok(Self { entries })
    }
}

/// Returns `cs` with both attributes passed through the lexicon.
pub fn substitute_attributes(
    cs: &CaptionStructure,
    lex: &SynonymLexicon,
) -> Result<CaptionStructure, LexiconError> {
    let a1 = lex
        .lookup(&cs.attribute1)
        .ok_or_else(|| LexiconError::MissingEntry(cs.attribute1.clone()))?;
    let a2 = lex
        .lookup(&cs.attribute2)
        .ok_or_else(|| LexiconError::MissingEntry(cs.attribute2.clone()))?;
    let article = article_for(a1).to_string();
    Ok(CaptionStructure {
        raw: cs.render_with_attributes(a1, a2),
        prefix: cs.prefix,
        article,
        attribute1: a1.to_string(),
        attribute2: a2.to_string(),
        head: cs.head.clone(),
    })
}

/// Builds the attribute-substitution group `o`, `a1`, `a2`, `a12`.
pub fn attribute_variants(
    cs: &CaptionStructure,
    lex: &SynonymLexicon,
    group_id: impl Into<String>,
) -> Result<ParaphraseGroup, AttributeVariantError> {
    let a1 = lex
        .lookup(&cs.attribute1)
        .ok_or_else(|| LexiconError::MissingEntry(cs.attribute1.clone()))?;
    let a2 = lex
        .lookup(&cs.attribute2)
        .ok_or_else(|| LexiconError::MissingEntry(cs.attribute2.clone()))?;
    let members = vec![
        (VariantLabel::O, cs.render()),
        (
            VariantLabel::A1,
            cs.render_with_attributes(a1, &cs.attribute2),
        ),
        (
            VariantLabel::A2,
            cs.render_with_attributes(&cs.attribute1, a2),
        ),
        (VariantLabel::A12, cs.render_with_attributes(a1, a2)),
    ];
    Ok(ParaphraseGroup::new(
        group_id,
        Strategy::P3,
        members,
        cs.stratum(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttributeVariantError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
    #[error("line {line}: duplicate group_id {group_id:?}")]
    DuplicateGroup { line: usize, group_id: String },
    #[error("group {group_id:?} is missing variant {label}")]
    MissingVariant {
        group_id: String,
        label: VariantLabel,
    },
    #[error("group {group_id:?} has strategy {found}, expected {expected}")]
    WrongStrategy {
        group_id: String,
        expected: Strategy,
        found: Strategy,
    },
    #[error("line {line}: {source}")]
    Group {
        line: usize,
        #[source]
        source: GroupError,
    },
}

/// Parses a JSON Lines manifest. Each non-blank line holds `group_id`,
/// `stratum`, an optional `strategy`, and one key per variant label. A
/// missing `strategy` is inferred from the variant keys.
pub fn parse_manifest(text: &str) -> Result<Vec<ParaphraseGroup>, ManifestError> {
    let mut groups = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> =
            serde_json::from_str(raw_line).map_err(|e| ManifestError::Json {
                line,
                message: e.to_string(),
            })?;
        let group = group_from_object(line, obj)?;
        if !seen.insert(group.group_id.clone()) {
            return Err(ManifestError::DuplicateGroup {
                line,
                group_id: group.group_id,
            });
        }
        groups.push(group);
    }
    Ok(groups)
}

fn group_from_object(
    line: usize,
    obj: Map<String, Value>,
) -> Result<ParaphraseGroup, ManifestError> {
    let field = |message: String| ManifestError::Field { line, message };
    let mut group_id = None;
    let mut stratum = None;
    let mut strategy = None;
    let mut variants = BTreeMap::new();
    for (key, value) in obj {
        let Value::String(text) = value else {
            return Err(field(format!("field {key:?} must be a string")));
        };
        match key.as_str() {
            "group_id" => group_id = Some(text),
            "stratum" => stratum = Some(text.parse::<Stratum>().map_err(field)?),
            "strategy" => strategy = Some(text.parse::<Strategy>().map_err(field)?),
            other => {
                let label = other
                    .parse::<VariantLabel>()
                    .map_err(|_| field(format!("unknown field {other:?}")))?;
                variants.insert(label, text);
            }
        }
    }
    let group_id = group_id.ok_or_else(|| field("missing group_id".into()))?;
    let stratum = stratum.ok_or_else(|| field("missing stratum".into()))?;
    let strategy = match strategy {
        Some(s) => s,
        None => infer_strategy(variants.keys().copied())
            .ok_or_else(|| field(format!("cannot infer strategy of group {group_id:?}")))?,
    };
    let mut members = Vec::with_capacity(strategy.labels().len());
    for &label in strategy.labels() {
        let caption = variants
            .remove(&label)
            .ok_or_else(|| ManifestError::MissingVariant {
                group_id: group_id.clone(),
                label,
            })?;
        members.push((label, caption));
    }
    if let Some(label) = variants.keys().next() {
        return Err(field(format!(
            "variant {label} is not valid for strategy {strategy}"
        )));
    }
    ParaphraseGroup::new(group_id, strategy, members, stratum)
        .map_err(|source| ManifestError::Group { line, source })
}

fn infer_strategy(labels: impl Iterator<Item = VariantLabel>) -> Option<Strategy> {
    use VariantLabel::*;
    let mut found = None;
    for label in labels {
        let s = match label {
            C1 | C2 => Strategy::P1,
            P1 | P2 | P3 | Np => Strategy::P2,
            A1 | A2 | A12 => Strategy::P3,
            O => continue,
        };
        match found {
            None => found = Some(s),
            Some(prev) if prev != s => return None,
            _ => {}
        }
    }
    found
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ParaphraseGroup>, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text)
}

/// Loads a manifest of LLM rewrites; every group must be `P1`.
pub fn load_p1_manifest(path: impl AsRef<Path>) -> Result<Vec<ParaphraseGroup>, ManifestError> {
    let groups = load_manifest(path)?;
    for g in &groups {
        if g.strategy != Strategy::P1 {
            return Err(ManifestError::WrongStrategy {
                group_id: g.group_id.clone(),
                expected: Strategy::P1,
                found: g.strategy,
            });
        }
    }
    Ok(groups)
}

/// One manifest line. `P1` lines omit the `strategy` key so they match the
/// plain `{"group_id", "stratum", "o", "c1", "c2"}` layout.
pub fn manifest_line(group: &ParaphraseGroup) -> String {
    let mut obj = Map::new();
    obj.insert("group_id".into(), Value::String(group.group_id.clone()));
    obj.insert(
        "stratum".into(),
        Value::String(group.stratum.as_str().into()),
    );
    if group.strategy != Strategy::P1 {
        obj.insert(
            "strategy".into(),
            Value::String(group.strategy.as_str().into()),
        );
    }
    for (label, caption) in &group.members {
        obj.insert(label.as_str().into(), Value::String(caption.clone()));
    }
    Value::Object(obj).to_string()
}

pub fn write_manifest(groups: &[ParaphraseGroup], path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = Vec::new();
    for g in groups {
        out.write_all(manifest_line(g).as_bytes())?;
        out.push(b'\n');
    }
    fs::write(path, out)
}
