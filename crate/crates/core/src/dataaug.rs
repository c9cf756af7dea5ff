//! Data-centric augmentations: copy pairs, spelled numbers, code-switched
//! terms and lexical (dictionary) data.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ParallelExample;
use crate::error::{Error, Result};
use crate::synthlang::{generate::toy_name, Analysis, Grammar, Language, StemKind};

pub const MAX_NUMBER: u64 = 999_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopyCategory {
    Name,
    Number,
    Location,
}

impl CopyCategory {
    pub fn tag(self) -> &'static str {
        match self {
            CopyCategory::Name => "name",
            CopyCategory::Number => "number",
            CopyCategory::Location => "location",
        }
    }
}

/// Text that stays the same on both sides of a translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyPair {
    pub text: String,
    pub category: CopyCategory,
}

impl CopyPair {
    pub fn to_example(&self) -> ParallelExample {
        ParallelExample::new(self.text.clone(), self.text.clone())
            .tagged("copy")
            .tagged(self.category.tag())
    }
}

/// Generate a lexicon of untranslatable terms: capitalized names, place names
/// and digit strings. Entries in `exclude` are never produced.
pub fn generate_copy_lexicon(
    names: usize,
    locations: usize,
    numbers: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Vec<(String, CopyCategory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = exclude.clone();
    let mut out = Vec::with_capacity(names + locations + numbers);
    let place_suffixes = ["ville", "ton", "burg", "stad"];
    for (count, cat) in [(names, CopyCategory::Name), (locations, CopyCategory::Location), (numbers, CopyCategory::Number)] {
        let mut made = 0;
        let mut tries = 0usize;
        while made < count && tries < 100 * count + 1000 {
            tries += 1;
            let text = match cat {
                CopyCategory::Name => toy_name(&mut rng),
                CopyCategory::Location => {
                    format!("{}{}", toy_name(&mut rng), place_suffixes.choose(&mut rng).expect("non-empty"))
                }
                CopyCategory::Number => {
                    let digits = rng.gen_range(1..=6u32);
                    rng.gen_range(0..10u64.pow(digits)).to_string()
                }
            };
            if seen.insert(text.clone()) {
                out.push((text, cat));
                made += 1;
            }
        }
    }
    out
}

/// Deterministic sample of `n` copy pairs. Each lexicon entry is used once
/// before any is repeated.
pub fn gen_copy_pairs(lexicon: &[(String, CopyCategory)], n: usize, seed: u64) -> Result<Vec<CopyPair>> {
    if lexicon.is_empty() {
        return Err(Error::Data("copy lexicon is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::new();
    while out.len() < n {
        if order.is_empty() {
            order = (0..lexicon.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let (text, category) = &lexicon[order.pop().expect("non-empty")];
        out.push(CopyPair { text: text.clone(), category: *category });
    }
    Ok(out)
}

/// Read a CSV of `term,translation` rows (a header row is allowed if it reads
/// `term,translation`). Single-column rows are treated as copy terms.
pub fn load_term_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let term = rec.get(0).unwrap_or("").trim();
        let translation = rec.get(1).map(str::trim).unwrap_or(term);
        if i == 0 && term == "term" {
            continue;
        }
        if term.is_empty() {
            return Err(Error::Data(format!("{}: row {} has an empty term", path.display(), i + 1)));
        }
        out.push((term.to_string(), translation.to_string()));
    }
    Ok(out)
}

pub fn write_term_csv(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["term", "translation"])?;
    for (a, b) in rows {
        w.write_record([a, b])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum NumberLanguage<'a> {
    English,
    Toy(&'a Grammar),
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];
const SCALES: [(u64, &str); 3] = [(1_000_000_000, "billion"), (1_000_000, "million"), (1_000, "thousand")];

fn english_below_thousand(n: u64, out: &mut Vec<String>) {
    let (h, rest) = (n / 100, n % 100);
    if h > 0 {
        out.push(ONES[h as usize].to_string());
        out.push("hundred".to_string());
    }
    if rest == 0 {
        return;
    }
    if rest < 20 {
        out.push(ONES[rest as usize].to_string());
    } else if rest % 10 == 0 {
        out.push(TENS[(rest / 10) as usize].to_string());
    } else {
        out.push(format!("{}-{}", TENS[(rest / 10) as usize], ONES[(rest % 10) as usize]));
    }
}

/// Spell an integer in `[0, 999 billion]`.
pub fn spell_number(value: u64, language: NumberLanguage) -> Result<String> {
    if value > MAX_NUMBER {
        return Err(Error::Data(format!("{value} is outside the spellable range 0..={MAX_NUMBER}")));
    }
    match language {
        NumberLanguage::English => {
            if value == 0 {
                return Ok("zero".to_string());
            }
            let mut out = Vec::new();
            let mut rest = value;
            for (scale, word) in SCALES {
                if rest >= scale {
                    english_below_thousand(rest / scale, &mut out);
                    out.push(word.to_string());
                    rest %= scale;
                }
            }
            english_below_thousand(rest, &mut out);
            Ok(out.join(" "))
        }
        NumberLanguage::Toy(grammar) => {
            let t = &grammar.numerals;
            let word = |id: usize| grammar.stem(id).map(|s| s.surface.clone());
            if value == 0 {
                return word(t.digits[0]);
            }
            let digits: Vec<u64> = value.to_string().bytes().map(|b| (b - b'0') as u64).collect();
            let mut out = Vec::new();
            for (i, &d) in digits.iter().enumerate() {
                let power = digits.len() - 1 - i;
                if d == 0 {
                    continue;
                }
                out.push(word(t.digits[d as usize])?);
                if power > 0 {
                    out.push(word(t.powers[power - 1])?);
                }
            }
            Ok(out.join(" "))
        }
    }
}

/// Spelled-number pairs (toy source, English target) tagged "number".
/// Values are drawn with a uniformly random digit count so that small and
/// large magnitudes are both covered.
pub fn number_pairs(grammar: &Grammar, n: usize, seed: u64) -> Result<Vec<ParallelExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let digits = rng.gen_range(1..=12u32);
            let hi = if digits == 12 { MAX_NUMBER + 1 } else { 10u64.pow(digits) };
            let lo = if digits == 1 { 0 } else { 10u64.pow(digits - 1) };
            let v = rng.gen_range(lo..hi);
            Ok(ParallelExample::new(
                spell_number(v, NumberLanguage::Toy(grammar))?,
                spell_number(v, NumberLanguage::English)?,
            )
            .tagged("number"))
        })
        .collect()
}

/// A table of foreign terms for toy-language nouns: each foreign word maps to
/// the English gloss of one noun stem. Foreign words use letters the toy
/// language never does, so they are always out of grammar.
pub fn generate_foreign_terms(lang: &Language, n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nouns: Vec<&str> = lang
        .grammar()
        .stems
        .iter()
        .filter(|s| s.group == crate::synthlang::NOUN && s.kind == StemKind::Content)
        .map(|s| s.gloss.as_str())
        .collect();
    nouns.shuffle(&mut rng);
    let letters: Vec<char> = "cfhjlwxy".chars().collect();
    let vowels: Vec<char> = "aeiou".chars().collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for gloss in nouns.into_iter().take(n) {
        loop {
            let len = rng.gen_range(2..=3);
            let w: String = (0..len)
                .flat_map(|_| [*letters.choose(&mut rng).expect("non-empty"), *vowels.choose(&mut rng).expect("non-empty")])
                .collect();
            if seen.insert(w.clone()) {
                out.push((w, gloss.to_string()));
                break;
            }
        }
    }
    out
}

/// Append one pair per foreign term, then substitute foreign terms into
/// `round(rate * eligible)` randomly chosen eligible source sentences (those
/// containing a word whose stem gloss is a table translation). Substituted
/// sentences are appended as new examples with the target unchanged.
pub fn inject_codeswitch(
    corpus: &[ParallelExample],
    lang: &Language,
    table: &[(String, String)],
    rate: f64,
    seed: u64,
) -> Result<Vec<ParallelExample>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("code-switch rate must be in [0, 1], got {rate}")));
    }
    let mut out = corpus.to_vec();
    for (term, translation) in table {
        out.push(ParallelExample::new(term.clone(), translation.clone()).tagged("codeswitch"));
    }
    let foreign_for = |gloss: &str| table.iter().find(|(_, t)| t == gloss).map(|(f, _)| f.clone());
    let mut eligible = Vec::new();
    for (i, ex) in corpus.iter().enumerate() {
        let words: Vec<&str> = ex.src.split_whitespace().collect();
        let hit = words.iter().enumerate().find_map(|(wi, w)| match lang.analyze(w) {
            Analysis::Word(t) => foreign_for(&lang.grammar().stems[t.stem_id].gloss).map(|f| (wi, f)),
            Analysis::Unanalyzed { .. } => None,
        });
        if let Some(h) = hit {
            eligible.push((i, h));
        }
    }
    let take = (rate * eligible.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut chosen: Vec<_> = eligible.into_iter().take(take).collect();
    chosen.sort_by_key(|c| c.0);
    for (i, (wi, foreign)) in chosen {
        let ex = &corpus[i];
        let mut words: Vec<String> = ex.src.split_whitespace().map(String::from).collect();
        words[wi] = foreign;
        let mut new = ParallelExample::new(words.join(" "), ex.tgt.clone());
        new.tags = ex.tags.clone();
        new.tags.push("codeswitch".into());
        out.push(new);
    }
    Ok(out)
}

/// Dictionary entries (word, gloss) for every content stem of the grammar.
pub fn lexical_entries(grammar: &Grammar) -> Vec<(String, String)> {
    grammar
        .stems
        .iter()
        .filter(|s| s.kind == StemKind::Content)
        .map(|s| (s.surface.clone(), s.gloss.clone()))
        .collect()
}

/// Append one example per unique dictionary entry, tagged "lexical".
pub fn merge_lexical_data(main: &[ParallelExample], entries: &[(String, String)]) -> Vec<ParallelExample> {
    let mut out = main.to_vec();
    let mut seen = HashSet::new();
    for (word, synset) in entries {
        if seen.insert((word.as_str(), synset.as_str())) {
            out.push(ParallelExample::new(word.clone(), synset.clone()).tagged("lexical"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_parallel_corpus;
    use std::sync::OnceLock;

    fn toy() -> &'static Language {
        static L: OnceLock<Language> = OnceLock::new();
        L.get_or_init(|| Language::toy(11).unwrap())
    }

    /// Independent spelling oracle: recursive, works on the whole value.
    fn oracle(n: u64) -> String {
        let small = |n: u64| -> String {
            let ones = ["", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
            let teens = ["ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"];
            let tens = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];
            let mut parts = vec![];
            if n >= 100 {
                parts.push(format!("{} hundred", ones[(n / 100) as usize]));
            }
            let r = n % 100;
            if (10..20).contains(&r) {
                parts.push(teens[(r - 10) as usize].to_string());
            } else if r >= 20 {
                let t = tens[(r / 10) as usize];
                parts.push(if r % 10 == 0 { t.to_string() } else { format!("{t}-{}", ones[(r % 10) as usize]) });
            } else if r > 0 {
                parts.push(ones[r as usize].to_string());
            }
            parts.join(" ")
        };
        if n == 0 {
            return "zero".into();
        }
        let mut parts = vec![];
        for (div, name) in [(1_000_000_000u64, " billion"), (1_000_000, " million"), (1_000, " thousand"), (1, "")] {
            let chunk = (n / div) % 1000;
            if chunk > 0 {
                parts.push(format!("{}{}", small(chunk), name));
            }
        }
        parts.join(" ")
    }

    #[test]
    fn english_examples() {
        let e = NumberLanguage::English;
        assert_eq!(spell_number(0, e).unwrap(), "zero");
        assert_eq!(spell_number(42, e).unwrap(), "forty-two");
        assert_eq!(spell_number(1_000_000_000, e).unwrap(), "one billion");
        assert_eq!(spell_number(42, e).unwrap(), oracle(42));
        assert_eq!(spell_number(1_000_000_000, e).unwrap(), oracle(1_000_000_000));
        assert_eq!(spell_number(MAX_NUMBER, e).unwrap(), "nine hundred ninety-nine billion");
        assert!(spell_number(MAX_NUMBER + 1, e).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5000 {
            let v = rng.gen_range(0..=MAX_NUMBER);
            assert_eq!(spell_number(v, e).unwrap(), oracle(v));
        }
    }

    #[test]
    fn injective_up_to_a_million() {
        let g = toy().grammar();
        for lang in [NumberLanguage::English, NumberLanguage::Toy(g)] {
            let mut seen = HashSet::with_capacity(1_000_001);
            for v in 0..=1_000_000u64 {
                assert!(seen.insert(spell_number(v, lang).unwrap()), "collision at {v}");
            }
        }
    }

    #[test]
    fn toy_numbers_are_grammar_words() {
        let l = toy();
        let s = spell_number(2_000_000_305, NumberLanguage::Toy(l.grammar())).unwrap();
        assert_eq!(s.split_whitespace().count(), 5);
        for w in s.split_whitespace() {
            assert!(matches!(l.analyze(w), Analysis::Word(_)));
        }
    }

    #[test]
    fn copy_pairs() {
        let lex = vec![("Mukamana".to_string(), CopyCategory::Name), ("2024".to_string(), CopyCategory::Number)];
        let pairs = gen_copy_pairs(&lex, 4, 1).unwrap();
        assert_eq!(pairs.len(), 4);
        for p in &pairs {
            let ex = p.to_example();
            assert_eq!(ex.src, ex.tgt);
        }
        assert!(gen_copy_pairs(&[], 3, 1).is_err());
        let big = generate_copy_lexicon(50, 10, 10, 3, &HashSet::new());
        assert_eq!(big.len(), 70);
        let a = gen_copy_pairs(&big, 30, 1).unwrap();
        assert_eq!(a, gen_copy_pairs(&big, 30, 1).unwrap());
        assert_ne!(a, gen_copy_pairs(&big, 30, 2).unwrap());
        let exclude: HashSet<String> = big.iter().map(|(t, _)| t.clone()).collect();
        let other = generate_copy_lexicon(50, 0, 0, 3, &exclude);
        assert!(other.iter().all(|(t, _)| !exclude.contains(t)));
    }

    #[test]
    fn codeswitch_counts() {
        let lang = toy();
        let corpus = generate_parallel_corpus(lang, 300, 2).unwrap();
        let table = generate_foreign_terms(lang, 10, 1);
        let zero = inject_codeswitch(&corpus, lang, &table, 0.0, 1).unwrap();
        assert_eq!(zero.len(), corpus.len() + table.len());
        assert_eq!(&zero[..corpus.len()], &corpus[..]);
        let eligible = corpus
            .iter()
            .filter(|ex| {
                ex.src.split_whitespace().any(|w| match lang.analyze(w) {
                    Analysis::Word(t) => table.iter().any(|(_, g)| *g == lang.grammar().stems[t.stem_id].gloss),
                    _ => false,
                })
            })
            .count();
        assert!(eligible > 0);
        let half = inject_codeswitch(&corpus, lang, &table, 0.5, 1).unwrap();
        assert_eq!(half.len(), corpus.len() + table.len() + (0.5 * eligible as f64).round() as usize);
        assert!(half.iter().filter(|e| e.has_tag("codeswitch")).count() > table.len());
        // A one-sentence corpus with a single eligible slot always switches at rate 1.
        let one = vec![half.iter().find(|e| e.has_tag("codeswitch") && e.src.contains(' ')).unwrap().clone()];
        let orig_idx = corpus.iter().position(|c| c.tgt == one[0].tgt).unwrap();
        let single = inject_codeswitch(&corpus[orig_idx..=orig_idx], lang, &table, 1.0, 9).unwrap();
        assert_eq!(single.len(), 1 + table.len() + 1);
        assert_ne!(single.last().unwrap().src, corpus[orig_idx].src);
        assert!(inject_codeswitch(&corpus, lang, &table, 1.5, 1).is_err());
    }

    #[test]
    fn lexical_merge() {
        let main = vec![ParallelExample::new("a", "b")];
        assert_eq!(merge_lexical_data(&main, &[]), main);
        let entries = vec![("x".to_string(), "y".to_string()), ("x".to_string(), "y".to_string()), ("z".to_string(), "w".to_string())];
        let out = merge_lexical_data(&main, &entries);
        assert_eq!(out.len(), main.len() + 2);
        assert!(out[1].has_tag("lexical"));
    }

    #[test]
    fn term_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![("wexo".to_string(), "house".to_string())];
        write_term_csv(&p, &rows).unwrap();
        assert_eq!(load_term_csv(&p).unwrap(), rows);
    }
}
