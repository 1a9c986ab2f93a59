//! Conversion of parsed treebanks into SentEval-style probing tasks.
//!
//! For every morphological category found in a language's treebanks, each
//! sentence contributes at most one example: the value carried by the token
//! closest to the root (ties go to the smallest token id). Categories that
//! end up with fewer than two usable classes are dropped.

mod manifest;
mod senteval;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{DeclaredSplit, Sentence, Treebank};

pub use manifest::{ManifestTask, SourceSummary, SplitMode, TaskManifest, CONVERTER_VERSION};
pub use senteval::{read_senteval, write_senteval};
pub use split::{stratified_split, SplitSpec};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("split ratios {0:?} must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("treebanks mix language codes {0:?}")]
    MixedLanguages(Vec<String>),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("invalid task {task}: {reason}")]
    Invalid { task: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Tr,
    Va,
    Te,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Tr, Subset::Va, Subset::Te];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Tr => "tr",
            Subset::Va => "va",
            Subset::Te => "te",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Subset::Tr => 0,
            Subset::Va => 1,
            Subset::Te => 2,
        }
    }

    fn from_declared(split: DeclaredSplit) -> Option<Subset> {
        match split {
            DeclaredSplit::Train => Some(Subset::Tr),
            DeclaredSplit::Dev => Some(Subset::Va),
            DeclaredSplit::Test => Some(Subset::Te),
            DeclaredSplit::None => None,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tr" => Ok(Subset::Tr),
            "va" => Ok(Subset::Va),
            "te" => Ok(Subset::Te),
            other => Err(format!("unknown subset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub subset: Subset,
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbingTask {
    pub language_code: String,
    pub category: String,
    pub entries: Vec<TaskEntry>,
    pub class_set: BTreeSet<String>,
}

impl ProbingTask {
    /// `language_category`, also the stem of the task file.
    pub fn id(&self) -> String {
        format!("{}_{}", self.language_code, self.category)
    }

    pub fn subset(&self, subset: Subset) -> impl Iterator<Item = &TaskEntry> {
        self.entries.iter().filter(move |e| e.subset == subset)
    }

    /// Label counts per subset.
    pub fn counts(&self) -> BTreeMap<Subset, BTreeMap<String, usize>> {
        let mut out: BTreeMap<Subset, BTreeMap<String, usize>> = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.subset).or_default().entry(e.label.clone()).or_default() += 1;
        }
        out
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let invalid = |reason: String| TaskError::Invalid {
            task: self.id(),
            reason,
        };
        if self.class_set.len() < 2 {
            return Err(invalid(format!("{} class(es), need at least 2", self.class_set.len())));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !self.class_set.contains(&e.label) {
                return Err(invalid(format!("label {:?} outside the class set", e.label)));
            }
            if !seen.insert((e.subset, e.text.as_str())) {
                return Err(invalid(format!("duplicate {} entry {:?}", e.subset, e.text)));
            }
        }
        for s in Subset::ALL {
            if self.subset(s).next().is_none() {
                return Err(invalid(format!("subset {s} is empty")));
            }
        }
        Ok(())
    }
}

/// Union of FEATS category names over all tokens.
pub fn discover_categories(treebank: &Treebank) -> BTreeSet<String> {
    treebank
        .sentences
        .iter()
        .flat_map(|s| s.tokens.iter())
        .flat_map(|t| t.feats.keys().cloned())
        .collect()
}

fn select_with_depths(sentence: &Sentence, depths: &[usize], category: &str) -> Option<(u32, String)> {
    sentence
        .tokens
        .iter()
        .filter_map(|t| t.feats.get(category).map(|v| (depths[t.id as usize - 1], t.id, v)))
        .min_by_key(|&(depth, id, _)| (depth, id))
        .map(|(_, id, v)| (id, v.clone()))
}

/// Picks the token carrying `category` that is closest to the root,
/// smallest id first among equals.
pub fn select_target(sentence: &Sentence, category: &str) -> Option<(u32, String)> {
    let depths = sentence.depths().ok()?;
    select_with_depths(sentence, &depths, category)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// Fewer than two classes survive the class-size threshold.
    SingleClass { classes: Vec<String> },
    /// Some subset would receive no example.
    InfeasibleSplit { empty: Vec<Subset> },
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::SingleClass { classes } => {
                write!(f, "fewer than two usable classes ({})", classes.join(", "))
            }
            DropReason::InfeasibleSplit { empty } => {
                let names: Vec<&str> = empty.iter().map(|s| s.as_str()).collect();
                write!(f, "split leaves subset(s) {} empty", names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCategory {
    pub category: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default)]
pub struct TaskBuild {
    pub tasks: Vec<ProbingTask>,
    pub dropped: Vec<DroppedCategory>,
    pub warnings: Vec<String>,
    pub split_mode: Option<SplitMode>,
}

/// Builds one task per surviving category of a single language.
pub fn build_tasks(
    treebanks: &[Treebank],
    split: &SplitSpec,
    min_class_count: usize,
) -> Result<TaskBuild, TaskError> {
    split.validate()?;
    let codes: BTreeSet<&str> = treebanks.iter().map(|t| t.language_code.as_str()).collect();
    if codes.len() > 1 {
        return Err(TaskError::MixedLanguages(codes.into_iter().map(String::from).collect()));
    }
    let Some(language) = codes.into_iter().next() else {
        return Ok(TaskBuild::default());
    };

    let mut build = TaskBuild::default();
    let declared: BTreeSet<DeclaredSplit> = treebanks.iter().map(|t| t.declared_split).collect();
    let fully_declared = !declared.contains(&DeclaredSplit::None)
        && [DeclaredSplit::Train, DeclaredSplit::Dev, DeclaredSplit::Test]
            .iter()
            .all(|d| declared.contains(d));
    let use_declared = split.respect_declared_split && fully_declared;
    if split.respect_declared_split && !fully_declared && declared.iter().any(|d| *d != DeclaredSplit::None) {
        build.warnings.push(format!(
            "{language}: declared splits do not cover train/dev/test; applying a stratified split"
        ));
    }
    let mode = if use_declared {
        SplitMode::Declared
    } else {
        SplitMode::Stratified
    };
    build.split_mode = Some(mode);

    // Depths once per sentence, shared by all categories.
    let sentences: Vec<(Option<Subset>, &Sentence, Vec<usize>)> = treebanks
        .iter()
        .flat_map(|tb| {
            let subset = if use_declared {
                Subset::from_declared(tb.declared_split)
            } else {
                None
            };
            tb.sentences.iter().filter_map(move |s| s.depths().ok().map(|d| (subset, s, d)))
        })
        .collect();

    let categories: BTreeSet<String> = treebanks.iter().flat_map(discover_categories).collect();
    for category in categories {
        let mut seen = HashSet::new();
        let mut candidates: Vec<(Option<Subset>, String, String)> = Vec::new();
        for (subset, sentence, depths) in &sentences {
            let Some((_, label)) = select_with_depths(sentence, depths, &category) else {
                continue;
            };
            let text = sentence.tokenized_text();
            if seen.insert((*subset, text.clone())) {
                candidates.push((*subset, label, text));
            }
        }

        let mut class_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, label, _) in &candidates {
            *class_counts.entry(label.as_str()).or_default() += 1;
        }
        let class_set: BTreeSet<String> = class_counts
            .iter()
            .filter(|(_, &n)| n >= min_class_count)
            .map(|(l, _)| l.to_string())
            .collect();
        if class_set.len() < 2 {
            build.dropped.push(DroppedCategory {
                category,
                reason: DropReason::SingleClass {
                    classes: class_counts.keys().map(|s| s.to_string()).collect(),
                },
            });
            continue;
        }
        candidates.retain(|(_, label, _)| class_set.contains(label));

        let subsets: Vec<Subset> = match mode {
            SplitMode::Declared => candidates.iter().map(|(s, _, _)| s.expect("declared")).collect(),
            SplitMode::Stratified => {
                let labels: Vec<&str> = candidates.iter().map(|(_, l, _)| l.as_str()).collect();
                stratified_split(&labels, &split.ratios, split.seed)
            }
        };
        let mut entries: Vec<TaskEntry> = candidates
            .into_iter()
            .zip(subsets)
            .map(|((_, label, text), subset)| TaskEntry { subset, label, text })
            .collect();
        entries.sort_by_key(|e| e.subset);

        let empty: Vec<Subset> = Subset::ALL
            .into_iter()
            .filter(|s| !entries.iter().any(|e| e.subset == *s))
            .collect();
        if !empty.is_empty() {
            let reason = DropReason::InfeasibleSplit { empty };
            build.warnings.push(format!("{language}/{category}: dropped, {reason}"));
            build.dropped.push(DroppedCategory { category, reason });
            continue;
        }
        build.tasks.push(ProbingTask {
            language_code: language.to_string(),
            category,
            entries,
            class_set,
        });
    }
    Ok(build)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{parse_document, Features, Token};

    const STOPPED: &str = "# text = That too was stopped.
1\tThat\tthat\tPRON\tDT\tNumber=Sing|PronType=Dem\t4\tnsubj:pass\t4:nsubj:pass\t_
2\ttoo\ttoo\tADV\tRB\t_\t4\tadvmod\t4:advmod\t_
3\twas\tbe\tAUX\tVBD\tMood=Ind|Number=Sing|Person=3|Tense=Past|VerbForm=Fin\t4\taux:pass\t4:aux:pass\t_
4\tstopped\tstop\tVERB\tVBN\tTense=Past|VerbForm=Part|Voice=Pass\t0\troot\t0:root\tSpaceAfter=No
5\t.\t.\tPUNCT\t.\t_\t4\tpunct\t4:punct\t_
";

    fn stopped() -> Treebank {
        parse_document(STOPPED.as_bytes(), "en").unwrap()
    }

    fn token(id: u32, head: u32, feats: &[(&str, &str)]) -> Token {
        Token {
            id,
            form: format!("w{id}"),
            lemma: format!("w{id}"),
            upos: "X".into(),
            xpos: None,
            feats: feats.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Features>(),
            head,
            deprel: "dep".into(),
            deps: "_".into(),
            misc: "_".into(),
        }
    }

    fn sentence(text: &str, tokens: Vec<Token>) -> Sentence {
        Sentence {
            sent_id: text.into(),
            text: text.into(),
            tokens,
        }
    }

    fn treebank(sentences: Vec<Sentence>) -> Treebank {
        Treebank {
            language_code: "xx".into(),
            source_path: String::new(),
            sentences,
            declared_split: DeclaredSplit::None,
            warnings: vec![],
        }
    }

    #[test]
    fn categories_of_stopped_sentence() {
        let cats = discover_categories(&stopped());
        let expected: BTreeSet<String> = ["PronType", "Number", "Mood", "Person", "Tense", "VerbForm", "Voice"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(cats, expected);
    }

    #[test]
    fn categories_union_and_empty() {
        let s1 = sentence("a", vec![token(1, 0, &[("A", "x")])]);
        let s2 = sentence("b", vec![token(1, 0, &[("A", "y"), ("B", "z")])]);
        let cats = discover_categories(&treebank(vec![s1, s2]));
        assert_eq!(cats.into_iter().collect::<Vec<_>>(), vec!["A", "B"]);
        let bare = treebank(vec![sentence("c", vec![token(1, 0, &[])])]);
        assert!(discover_categories(&bare).is_empty());
    }

    #[test]
    fn target_selection() {
        let s = &stopped().sentences[0];
        assert_eq!(select_target(s, "Tense"), Some((4, "Past".into())));
        assert_eq!(select_target(s, "Number"), Some((1, "Sing".into())));
        assert_eq!(select_target(s, "Definite"), None);
    }

    #[test]
    fn equal_depth_tie_takes_smallest_id() {
        // root 3; tokens 2 and 5 both at depth 1 carry Number.
        let s = sentence(
            "tie",
            vec![
                token(1, 2, &[("Number", "Plur")]),
                token(2, 3, &[("Number", "Sing")]),
                token(3, 0, &[]),
                token(4, 5, &[]),
                token(5, 3, &[("Number", "Plur")]),
            ],
        );
        assert_eq!(select_target(&s, "Number"), Some((2, "Sing".into())));
        // Exhaustive check: among all carriers, the pick has minimal (depth, id).
        let depths = s.depths().unwrap();
        let best = s
            .tokens
            .iter()
            .filter(|t| t.feats.contains_key("Number"))
            .map(|t| (depths[t.id as usize - 1], t.id))
            .min()
            .unwrap();
        assert_eq!(best, (1, 2));
    }

    #[test]
    fn single_sentence_yields_nothing() {
        let build = build_tasks(&[stopped()], &SplitSpec::default(), 1).unwrap();
        assert!(build.tasks.is_empty());
        assert_eq!(build.dropped.len(), 7);
    }

    fn tense_fixture(past: usize, pres: usize) -> Treebank {
        let sentences = (0..past + pres)
            .map(|i| {
                let value = if i < past { "Past" } else { "Pres" };
                let mut s = sentence(&format!("s{i}"), vec![token(1, 0, &[("Tense", value)])]);
                s.tokens[0].form = format!("word{i}");
                s
            })
            .collect();
        treebank(sentences)
    }

    #[test]
    fn hundred_sentence_stratified_counts() {
        let build = build_tasks(&[tense_fixture(60, 40)], &SplitSpec::default(), 3).unwrap();
        assert_eq!(build.tasks.len(), 1);
        let task = &build.tasks[0];
        task.validate().unwrap();
        let counts = task.counts();
        let get = |s: Subset, l: &str| counts[&s][l];
        assert_eq!((get(Subset::Tr, "Past"), get(Subset::Tr, "Pres")), (48, 32));
        assert_eq!((get(Subset::Va, "Past"), get(Subset::Va, "Pres")), (6, 4));
        assert_eq!((get(Subset::Te, "Past"), get(Subset::Te, "Pres")), (6, 4));
    }

    #[test]
    fn rare_classes_are_removed() {
        let mut tb = tense_fixture(30, 30);
        let mut odd = sentence("odd", vec![token(1, 0, &[("Tense", "Fut")])]);
        odd.tokens[0].form = "will".into();
        tb.sentences.push(odd);
        let build = build_tasks(&[tb], &SplitSpec::default(), 3).unwrap();
        let task = &build.tasks[0];
        assert_eq!(task.class_set.iter().collect::<Vec<_>>(), vec!["Past", "Pres"]);
        assert!(task.entries.iter().all(|e| e.label != "Fut"));
    }

    #[test]
    fn duplicate_sentences_collapse() {
        let mut tb = tense_fixture(20, 20);
        let dup = tb.sentences[0].clone();
        tb.sentences.push(dup);
        let build = build_tasks(&[tb], &SplitSpec::default(), 3).unwrap();
        assert_eq!(build.tasks[0].entries.len(), 40);
        build.tasks[0].validate().unwrap();
    }

    #[test]
    fn infeasible_split_is_dropped_with_warning() {
        // One example per class: both go to tr, va and te stay empty.
        let build = build_tasks(&[tense_fixture(1, 1)], &SplitSpec::default(), 1).unwrap();
        assert!(build.tasks.is_empty());
        assert!(matches!(
            build.dropped[0].reason,
            DropReason::InfeasibleSplit { .. }
        ));
        assert_eq!(build.warnings.len(), 1);
    }

    #[test]
    fn mixed_languages_rejected() {
        let mut other = stopped();
        other.language_code = "de".into();
        assert!(matches!(
            build_tasks(&[stopped(), other], &SplitSpec::default(), 1),
            Err(TaskError::MixedLanguages(_))
        ));
    }

    #[test]
    fn declared_splits_are_kept() {
        let mut parts = Vec::new();
        for (split, offset) in [
            (DeclaredSplit::Train, 0),
            (DeclaredSplit::Dev, 100),
            (DeclaredSplit::Test, 200),
        ] {
            let mut tb = tense_fixture(5, 5);
            for s in &mut tb.sentences {
                s.tokens[0].form = format!("{}-{offset}", s.tokens[0].form);
            }
            tb.declared_split = split;
            parts.push(tb);
        }
        let a = build_tasks(&parts, &SplitSpec { seed: 1, ..Default::default() }, 3).unwrap();
        let b = build_tasks(&parts, &SplitSpec { seed: 2, ..Default::default() }, 3).unwrap();
        assert_eq!(a.split_mode, Some(SplitMode::Declared));
        assert_eq!(a.tasks, b.tasks);
        for e in &a.tasks[0].entries {
            let expected = if e.text.ends_with("-0") {
                Subset::Tr
            } else if e.text.ends_with("-100") {
                Subset::Va
            } else {
                Subset::Te
            };
            assert_eq!(e.subset, expected);
        }
        // Opting out re-splits by seed.
        let c = build_tasks(
            &parts,
            &SplitSpec {
                respect_declared_split: false,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert_eq!(c.split_mode, Some(SplitMode::Stratified));
    }

    #[test]
    fn partial_declared_split_falls_back() {
        let mut train = tense_fixture(20, 20);
        train.declared_split = DeclaredSplit::Train;
        let build = build_tasks(&[train], &SplitSpec::default(), 3).unwrap();
        assert_eq!(build.split_mode, Some(SplitMode::Stratified));
        assert_eq!(build.warnings.len(), 1);
        assert_eq!(build.tasks.len(), 1);
    }
}
