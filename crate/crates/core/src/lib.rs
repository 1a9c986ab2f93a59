//! Multilingual morphological probing: CONLL-U treebanks in, probing tasks,
//! layer-wise probe scores and curve-similarity analytics out.

pub mod analytics;
pub mod conllu;
pub mod embedding;
pub mod probe;
pub mod tasks;
