//! Parallel examples and their JSONL representation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthlang::{generate_sentences, Analysis, Language, WordSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelExample {
    pub src: String,
    pub tgt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_analysis: Option<Vec<Analysis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_analysis: Option<Vec<Analysis>>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl ParallelExample {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>) -> Self {
        ParallelExample { src: src.into(), tgt: tgt.into(), src_analysis: None, tgt_analysis: None, tags: Vec::new() }
    }

    pub fn tagged(mut self, tag: &str) -> Self {
        self.tags.push(tag.to_string());
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Swap source and target sides.
    pub fn reversed(&self) -> Self {
        ParallelExample {
            src: self.tgt.clone(),
            tgt: self.src.clone(),
            src_analysis: self.tgt_analysis.clone(),
            tgt_analysis: self.src_analysis.clone(),
            tags: self.tags.clone(),
        }
    }

    /// Check that stored analyses re-synthesize to the surface strings.
    pub fn validate(&self, lang: &Language) -> Result<()> {
        for (text, analysis) in [(&self.src, &self.src_analysis), (&self.tgt, &self.tgt_analysis)] {
            let Some(analysis) = analysis else { continue };
            let words: Vec<&str> = text.split_whitespace().collect();
            if words.len() != analysis.len() {
                return Err(Error::Data(format!("analysis length mismatch for '{text}'")));
            }
            for (w, a) in words.iter().zip(analysis) {
                let surface = match a {
                    Analysis::Word(t) => lang
                        .synthesize(t.stem_id, &t.affix_ids)?
                        .ok_or_else(|| Error::Data(format!("analysis of '{w}' is incompatible")))?,
                    Analysis::Unanalyzed { surface } => surface.clone(),
                };
                if surface != *w {
                    return Err(Error::Data(format!("analysis synthesizes '{surface}', text has '{w}'")));
                }
            }
        }
        Ok(())
    }
}

/// Toy-language sentences (source) paired with English renderings (target),
/// with source analyses attached.
pub fn generate_parallel_corpus(lang: &Language, n: usize, seed: u64) -> Result<Vec<ParallelExample>> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    let sentences = generate_sentences(lang.grammar(), n, seed)?;
    sentences
        .iter()
        .map(|s| {
            let analysis = s
                .toy
                .iter()
                .map(|w| match w {
                    WordSpec::Word { stem, affixes } => lang
                        .token(*stem, affixes)?
                        .map(Analysis::Word)
                        .ok_or_else(|| Error::Data("generated an incompatible word".into())),
                    WordSpec::Name(name) => Ok(Analysis::Unanalyzed { surface: name.clone() }),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ParallelExample {
                src: s.toy_text(lang.grammar())?,
                tgt: s.english_text(),
                src_analysis: Some(analysis),
                tgt_analysis: None,
                tags: Vec::new(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlang::{NOUN, VERB};
    use std::sync::OnceLock;

    fn toy() -> &'static Language {
        static L: OnceLock<Language> = OnceLock::new();
        L.get_or_init(|| Language::toy(11).unwrap())
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_parallel_corpus(toy(), 200, 7).unwrap();
        let b = generate_parallel_corpus(toy(), 200, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for ex in &a {
            ex.validate(toy()).unwrap();
        }
        assert!(generate_parallel_corpus(toy(), 0, 7).is_err());
    }

    /// Rebuild each English target from the source alone: analyze the toy
    /// words, gloss them, and move the verb in front of the object.
    #[test]
    fn targets_follow_from_lexicon_and_reordering() {
        let lang = toy();
        let g = lang.grammar();
        for ex in generate_parallel_corpus(lang, 500, 3).unwrap() {
            let words: Vec<Vec<String>> = ex
                .src
                .split_whitespace()
                .map(|w| match lang.analyze(w) {
                    Analysis::Word(t) => g.gloss_word(t.stem_id, &t.affix_ids).unwrap(),
                    Analysis::Unanalyzed { surface } => vec![surface],
                })
                .collect();
            let groups: Vec<Option<usize>> = ex
                .src
                .split_whitespace()
                .map(|w| match lang.analyze(w) {
                    Analysis::Word(t) => Some(g.stems[t.stem_id].group),
                    _ => None,
                })
                .collect();
            let v = groups.iter().position(|&gr| gr == Some(VERB)).unwrap();
            let mut order: Vec<usize> = vec![0, v];
            order.extend(1..v);
            order.extend(v + 1..words.len());
            let rebuilt: Vec<String> = order.iter().flat_map(|&i| words[i].clone()).collect();
            assert_eq!(rebuilt.join(" "), ex.tgt);
            assert!(v <= 2 && groups[..v].iter().all(|gr| gr.is_none() || *gr == Some(NOUN)));
        }
    }

    #[test]
    fn names_appear_on_both_sides() {
        let corpus = generate_parallel_corpus(toy(), 300, 5).unwrap();
        let mut seen = 0;
        for ex in &corpus {
            for name in &toy().grammar().names {
                if ex.src.split_whitespace().any(|w| w == name) {
                    assert!(ex.tgt.split_whitespace().any(|w| w == name));
                    seen += 1;
                }
            }
        }
        assert!(seen > 30);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let corpus = generate_parallel_corpus(toy(), 20, 1).unwrap();
        write_jsonl(&p, &corpus).unwrap();
        let back: Vec<ParallelExample> = read_jsonl(&p).unwrap();
        assert_eq!(back, corpus);
    }
}
