//! Finite context-free grammar: parsing of rule files, random generation
//! with bound slots, recognition with slot recovery, and exact counting.

use crate::error::{Error, Result};
use rand::seq::IndexedRandom;
use rand::Rng;
use std::collections::{BTreeMap, HashMap, HashSet};

pub const DESK_GRAMMAR: &str = include_str!("../../data/desk.grammar");

/// Nonterminals whose chosen word is recorded during parsing and can be
/// pinned during generation.
pub const SLOTS: [&str; 3] = ["OBJ", "OBJ2", "DIR"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
}

pub type Bindings = BTreeMap<String, String>;

fn is_nonterminal(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_ascii_uppercase())
        && tok.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
        && tok != "_"
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    rules: BTreeMap<String, Vec<Vec<Symbol>>>,
}

impl Grammar {
    /// `NONTERM -> alt | alt` per line; `_` denotes the empty string.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules: BTreeMap<String, Vec<Vec<Symbol>>> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = line
                .split_once("->")
                .ok_or_else(|| Error::Grammar(format!("line {}: missing `->`", n + 1)))?;
            let lhs = lhs.trim();
            if !is_nonterminal(lhs) {
                return Err(Error::Grammar(format!("line {}: `{lhs}` is not a nonterminal", n + 1)));
            }
            let alts = rules.entry(lhs.to_string()).or_default();
            for alt in rhs.split('|') {
                let syms = alt
                    .split_whitespace()
                    .filter(|t| *t != "_")
                    .map(|t| {
                        if is_nonterminal(t) {
                            Symbol::Nonterminal(t.to_string())
                        } else {
                            Symbol::Terminal(t.to_string())
                        }
                    })
                    .collect();
                alts.push(syms);
            }
        }
        let g = Grammar { rules };
        g.check_finite()?;
        Ok(g)
    }

    /// Parses `text` and defines any missing slot from the vocabulary:
    /// `OBJ`/`OBJ2` as the object words, `DIR` as the four compass words.
    /// Every terminal must be a vocabulary word.
    pub fn with_vocabulary(text: &str, vocab: &super::Vocabulary) -> Result<Self> {
        let mut g = Self::parse(text)?;
        let objects: Vec<Vec<Symbol>> = vocab
            .words_in(super::WordCategory::Object)
            .into_iter()
            .map(|w| vec![Symbol::Terminal(w.to_string())])
            .collect();
        for slot in ["OBJ", "OBJ2"] {
            g.rules.entry(slot.to_string()).or_insert_with(|| objects.clone());
        }
        g.rules.entry("DIR".to_string()).or_insert_with(|| {
            super::Direction::ALL
                .iter()
                .map(|d| vec![Symbol::Terminal(d.word().to_string())])
                .collect()
        });
        for alts in g.rules.values() {
            for sym in alts.iter().flatten() {
                if let Symbol::Terminal(t) = sym {
                    vocab.id(t)?;
                }
            }
        }
        g.check_finite()?;
        Ok(g)
    }

    pub fn desk(vocab: &super::Vocabulary) -> Self {
        Self::with_vocabulary(DESK_GRAMMAR, vocab).expect("bundled grammar parses")
    }

    pub fn has(&self, nonterminal: &str) -> bool {
        self.rules.contains_key(nonterminal)
    }

    pub fn alternatives(&self, nonterminal: &str) -> Result<&[Vec<Symbol>]> {
        self.rules
            .get(nonterminal)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Grammar(format!("undefined nonterminal `{nonterminal}`")))
    }

    /// Nonterminals not referenced by any rule body.
    pub fn roots(&self) -> Vec<&str> {
        let used: HashSet<&str> = self
            .rules
            .values()
            .flatten()
            .flatten()
            .filter_map(|s| match s {
                Symbol::Nonterminal(n) => Some(n.as_str()),
                Symbol::Terminal(_) => None,
            })
            .collect();
        self.rules
            .keys()
            .map(String::as_str)
            .filter(|k| !used.contains(k) && !SLOTS.contains(k))
            .collect()
    }

    fn check_finite(&self) -> Result<()> {
        // 0 unvisited, 1 on stack, 2 done
        fn visit<'a>(g: &'a Grammar, n: &'a str, mark: &mut HashMap<&'a str, u8>) -> Result<()> {
            match mark.get(n) {
                Some(2) => return Ok(()),
                Some(1) => return Err(Error::Grammar(format!("recursive production through `{n}`"))),
                _ => {}
            }
            mark.insert(n, 1);
            if let Some(alts) = g.rules.get(n) {
                for sym in alts.iter().flatten() {
                    if let Symbol::Nonterminal(m) = sym {
                        visit(g, m, mark)?;
                    }
                }
            }
            mark.insert(n, 2);
            Ok(())
        }
        let mut mark = HashMap::new();
        for n in self.rules.keys() {
            visit(self, n, &mut mark)?;
        }
        Ok(())
    }

    /// Random derivation from `root`; alternatives are uniform at every
    /// nonterminal, and bound slots emit their bound word.
    pub fn generate<R: Rng + ?Sized>(&self, root: &str, bindings: &Bindings, rng: &mut R) -> Result<Vec<String>> {
        let mut out = Vec::new();
        self.expand(root, bindings, rng, &mut out)?;
        Ok(out)
    }

    fn expand<R: Rng + ?Sized>(&self, n: &str, bindings: &Bindings, rng: &mut R, out: &mut Vec<String>) -> Result<()> {
        if let Some(word) = bindings.get(n) {
            out.push(word.clone());
            return Ok(());
        }
        let alts = self.alternatives(n)?;
        let alt = alts
            .choose(rng)
            .ok_or_else(|| Error::Grammar(format!("`{n}` has no alternatives")))?;
        for sym in alt {
            match sym {
                Symbol::Terminal(t) => out.push(t.clone()),
                Symbol::Nonterminal(m) => self.expand(m, bindings, rng, out)?,
            }
        }
        Ok(())
    }

    /// All ways `root` derives exactly `tokens`, as slot bindings
    /// (deduplicated).
    pub fn recognize(&self, root: &str, tokens: &[String]) -> Result<Vec<Bindings>> {
        self.alternatives(root)?;
        let mut memo = HashMap::new();
        let mut found: Vec<Bindings> = self
            .derive(root, 0, tokens, &mut memo)
            .into_iter()
            .filter(|(end, _)| *end == tokens.len())
            .map(|(_, b)| b)
            .collect();
        found.sort();
        found.dedup();
        Ok(found)
    }

    fn derive(
        &self,
        n: &str,
        start: usize,
        tokens: &[String],
        memo: &mut HashMap<(String, usize), Vec<(usize, Bindings)>>,
    ) -> Vec<(usize, Bindings)> {
        if let Some(hit) = memo.get(&(n.to_string(), start)) {
            return hit.clone();
        }
        let mut results = Vec::new();
        for alt in self.rules.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let mut partial: Vec<(usize, Bindings)> = vec![(start, Bindings::new())];
            for sym in alt {
                let mut next = Vec::new();
                for (pos, b) in &partial {
                    match sym {
                        Symbol::Terminal(t) => {
                            if tokens.get(*pos) == Some(t) {
                                next.push((pos + 1, b.clone()));
                            }
                        }
                        Symbol::Nonterminal(m) => {
                            for (end, sub) in self.derive(m, *pos, tokens, memo) {
                                if let Some(merged) = merge(b, &sub) {
                                    next.push((end, merged));
                                }
                            }
                        }
                    }
                }
                partial = next;
                if partial.is_empty() {
                    break;
                }
            }
            results.extend(partial);
        }
        if SLOTS.contains(&n) {
            for (end, b) in &mut results {
                if *end == start + 1 {
                    b.insert(n.to_string(), tokens[start].clone());
                }
            }
        }
        results.sort();
        results.dedup();
        memo.insert((n.to_string(), start), results.clone());
        results
    }

    /// Number of derivation trees under `root` (equals the sentence count
    /// when the grammar is unambiguous).
    pub fn count_derivations(&self, root: &str) -> Result<u128> {
        let mut memo = HashMap::new();
        self.count_inner(root, &mut memo)
    }

    fn count_inner(&self, n: &str, memo: &mut HashMap<String, u128>) -> Result<u128> {
        if let Some(c) = memo.get(n) {
            return Ok(*c);
        }
        let mut total = 0u128;
        for alt in self.alternatives(n)? {
            let mut prod = 1u128;
            for sym in alt {
                if let Symbol::Nonterminal(m) = sym {
                    prod *= self.count_inner(m, memo)?;
                }
            }
            total += prod;
        }
        memo.insert(n.to_string(), total);
        Ok(total)
    }

    /// Distinct token sequences derivable from `root`.
    pub fn sentences(&self, root: &str) -> Result<Vec<Vec<String>>> {
        let mut memo = HashMap::new();
        let mut out: Vec<Vec<String>> = self.sentences_inner(root, &mut memo)?.iter().cloned().collect();
        out.sort();
        Ok(out)
    }

    fn sentences_inner<'a>(
        &self,
        n: &str,
        memo: &'a mut HashMap<String, HashSet<Vec<String>>>,
    ) -> Result<&'a HashSet<Vec<String>>> {
        if !memo.contains_key(n) {
            let mut set = HashSet::new();
            for alt in self.alternatives(n)? {
                let mut acc: Vec<Vec<String>> = vec![Vec::new()];
                for sym in alt {
                    let parts: Vec<Vec<String>> = match sym {
                        Symbol::Terminal(t) => vec![vec![t.clone()]],
                        Symbol::Nonterminal(m) => self.sentences_inner(m, memo)?.iter().cloned().collect(),
                    };
                    acc = acc
                        .iter()
                        .flat_map(|prefix| {
                            parts.iter().map(move |p| {
                                let mut s = prefix.clone();
                                s.extend(p.iter().cloned());
                                s
                            })
                        })
                        .collect();
                }
                set.extend(acc);
            }
            memo.insert(n.to_string(), set);
        }
        Ok(&memo[n])
    }

    /// `(min, max)` sentence length derivable from `root`.
    pub fn length_range(&self, root: &str) -> Result<(usize, usize)> {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for alt in self.alternatives(root)? {
            let (mut a, mut b) = (0, 0);
            for sym in alt {
                match sym {
                    Symbol::Terminal(_) => {
                        a += 1;
                        b += 1;
                    }
                    Symbol::Nonterminal(m) => {
                        let (x, y) = self.length_range(m)?;
                        a += x;
                        b += y;
                    }
                }
            }
            lo = lo.min(a);
            hi = hi.max(b);
        }
        Ok((lo, hi))
    }
}

fn merge(a: &Bindings, b: &Bindings) -> Option<Bindings> {
    let mut out = a.clone();
    for (k, v) in b {
        match out.get(k) {
            Some(w) if w != v => return None,
            _ => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    Some(out)
}

/// Distinct sentences over all roots.
pub fn grammar_enumerate(grammar: &Grammar) -> Result<usize> {
    let mut all: HashSet<Vec<String>> = HashSet::new();
    for root in grammar.roots() {
        all.extend(grammar.sentences(root)?);
    }
    Ok(all.len())
}
