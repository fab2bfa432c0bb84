//! Transform fingerprints for pairs of commands.

use crate::agent::Agent;
use crate::error::{Error, Result};
use crate::grounding::fingerprint::{write_csv, write_grayscale_ppm};
use crate::grounding::{encode_bow, transform_fingerprint, ReferenceMean};
use crate::teacher::{Bindings, Direction, Teacher, WordCategory};
use crate::tensor::{ParameterSet, Tensor};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Box-filter width used for every exported fingerprint.
pub const FINGERPRINT_KERNEL: usize = 7;

#[derive(Debug, Clone)]
pub struct PairFingerprints {
    pub a: Vec<String>,
    pub b: Vec<String>,
    /// One `[D, D+1]` matrix per transformation step.
    pub fa: Vec<Tensor>,
    pub fb: Vec<Tensor>,
}

/// One pair per line, the two sentences separated by `|`; `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((a, b)) = line.split_once('|') else {
            return Err(Error::Config(format!("pairs line {}: expected `sentence | sentence`", n + 1)));
        };
        let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let (a, b) = (words(a), words(b));
        if a.is_empty() || b.is_empty() {
            return Err(Error::Config(format!("pairs line {}: empty sentence", n + 1)));
        }
        out.push((a, b));
    }
    Ok(out)
}

/// `n` grammar samples with random slot fillers (token ids).
pub fn reference_commands(teacher: &Teacher, n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = teacher.vocab.words_in(WordCategory::Object);
    let dirs = [Direction::Front, Direction::Behind, Direction::Left, Direction::Right].map(Direction::word);
    let roots = teacher.grammar.roots();
    (0..n)
        .map(|_| {
            let root = roots.choose(&mut rng).expect("grammar has roots");
            let two: Vec<&&str> = objects.choose_multiple(&mut rng, 2).collect();
            let mut b = Bindings::new();
            b.insert("OBJ".into(), two[0].to_string());
            b.insert("OBJ2".into(), two[1].to_string());
            b.insert("DIR".into(), dirs.choose(&mut rng).unwrap().to_string());
            let words = teacher.grammar.generate(root, &b, &mut rng)?;
            teacher.vocab.encode(&words)
        })
        .collect()
}

pub fn analyze_transforms(
    agent: &Agent,
    params: &ParameterSet,
    teacher: &Teacher,
    pairs: &[(Vec<String>, Vec<String>)],
    references: &[Vec<usize>],
) -> Result<Vec<PairFingerprints>> {
    let fusion = agent.fusion();
    if fusion.kind().gft_steps().is_none() {
        return Err(Error::Config(format!("{} does not generate transforms", fusion.kind().name())));
    }
    let table = params.value(agent.word_table());
    let stack = |tokens: &[usize]| fusion.transforms(params, &encode_bow(tokens, table)?);
    let refs = references.iter().map(|r| stack(r)).collect::<Result<Vec<_>>>()?;
    let mean = ReferenceMean::from_stacks(&refs)?;
    pairs
        .iter()
        .map(|(a, b)| {
            let fp = |words: &[String]| -> Result<Vec<Tensor>> {
                transform_fingerprint(&stack(&teacher.vocab.encode(words)?)?, &mean, FINGERPRINT_KERNEL)
            };
            Ok(PairFingerprints {
                fa: fp(a)?,
                fb: fp(b)?,
                a: a.clone(),
                b: b.clone(),
            })
        })
        .collect()
}

/// `pair{i}_{a|b}_t{j}.csv/.ppm` plus an index of the sentences.
pub fn export_fingerprints(dir: &Path, results: &[PairFingerprints]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut index = String::new();
    for (i, p) in results.iter().enumerate() {
        index += &format!("pair{i}\t{}\t{}\n", p.a.join(" "), p.b.join(" "));
        for (side, fps) in [("a", &p.fa), ("b", &p.fb)] {
            for (j, m) in fps.iter().enumerate() {
                let stem = format!("pair{i}_{side}_t{}", j + 1);
                write_csv(m, &dir.join(format!("{stem}.csv")))?;
                write_grayscale_ppm(m, &dir.join(format!("{stem}.ppm")), 4)?;
            }
        }
    }
    std::fs::write(dir.join("pairs.tsv"), index)?;
    Ok(())
}
