//! Lexical-phonetic language distances (LDN/LDND) over 40-concept word
//! lists, classical MDS embedding, and distance/accuracy correlation.
//!
//! LDN between two languages is the mean, over shared concepts, of the
//! minimum normalized Levenshtein distance across the synonym
//! cross-product. LDND divides that by the mean distance over
//! different-concept word pairs, correcting for chance symbol overlap.
//! Both use only concepts attested in both lists.

use std::collections::BTreeMap;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::numcore::jacobi_eigh;
use crate::{Error, Result};

pub const CONCEPT_COUNT: u8 = 40;

/// Ordered transcription replacement rules (digraphs and modifiers to
/// single symbols, or deletion).
#[derive(Clone, Debug)]
pub struct NormalizeTable {
    rules: Vec<(String, String)>,
}

impl NormalizeTable {
    /// The embedded default: strip ASJP modifier marks and spaces.
    pub fn default_asjp() -> Self {
        Self::from_lines(include_str!("../config/asjp_normalize.tsv"))
            .expect("embedded table is valid")
    }

    pub fn identity() -> Self {
        NormalizeTable { rules: Vec::new() }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lines(&std::fs::read_to_string(path)?)
    }

    fn from_lines(text: &str) -> Result<Self> {
        // \s, \t and \\ escapes keep whitespace symbols visible in the file.
        fn unescape(s: &str) -> String {
            s.replace("\\s", " ").replace("\\t", "\t").replace("\\\\", "\\")
        }
        let mut rules = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let from = unescape(parts.next().unwrap_or_default());
            let to = unescape(parts.next().unwrap_or_default());
            if from.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "empty FROM side in normalization rule".into(),
                });
            }
            rules.push((from, to));
        }
        Ok(NormalizeTable { rules })
    }

    pub fn apply(&self, s: &str) -> String {
        let mut out = s.to_string();
        for (from, to) in &self.rules {
            out = out.replace(from, to);
        }
        out
    }
}

/// ASJP-style word list: concept id (1..=40) to attested transcriptions.
#[derive(Clone, Debug, PartialEq)]
pub struct WordList {
    pub language: String,
    entries: BTreeMap<u8, Vec<String>>,
}

impl WordList {
    pub fn new(language: impl Into<String>, entries: BTreeMap<u8, Vec<String>>) -> Result<Self> {
        for (&concept, words) in &entries {
            if concept == 0 || concept > CONCEPT_COUNT {
                return Err(Error::invalid(format!(
                    "concept id {concept} outside 1..={CONCEPT_COUNT}"
                )));
            }
            if words.is_empty() || words.iter().any(|w| w.is_empty()) {
                return Err(Error::invalid(format!(
                    "concept {concept} carries an empty transcription"
                )));
            }
        }
        Ok(WordList { language: language.into(), entries })
    }

    pub fn entries(&self) -> &BTreeMap<u8, Vec<String>> {
        &self.entries
    }

    /// Copy with every transcription passed through the table.
    pub fn normalized(&self, table: &NormalizeTable) -> Result<WordList> {
        let mut entries = BTreeMap::new();
        for (&concept, words) in &self.entries {
            let normalized: Vec<String> = words
                .iter()
                .map(|w| table.apply(w))
                .filter(|w| !w.is_empty())
                .collect();
            if !normalized.is_empty() {
                entries.insert(concept, normalized);
            }
        }
        WordList::new(self.language.clone(), entries)
    }
}

/// Parse word lists from tab-separated text: language, concept-id,
/// transcription (one row per synonym). Languages keep first-appearance
/// order.
pub fn parse_wordlists(text: &str) -> Result<Vec<WordList>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_lang: BTreeMap<String, BTreeMap<u8, Vec<String>>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let concept: u8 = cols[1].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("bad concept id `{}`", cols[1]),
        })?;
        if concept == 0 || concept > CONCEPT_COUNT {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("concept id {concept} outside 1..={CONCEPT_COUNT}"),
            });
        }
        let lang = cols[0].to_string();
        if !by_lang.contains_key(&lang) {
            order.push(lang.clone());
        }
        by_lang.entry(lang).or_default().entry(concept).or_default().push(cols[2].to_string());
    }
    order
        .into_iter()
        .map(|lang| {
            let entries = by_lang.remove(&lang).expect("collected above");
            WordList::new(lang, entries)
        })
        .collect()
}

/// Serialize word lists back to the three-column format.
pub fn wordlists_to_tsv(lists: &[WordList]) -> String {
    let mut out = String::new();
    for list in lists {
        for (&concept, words) in list.entries() {
            for w in words {
                out.push_str(&format!("{}\t{}\t{}\n", list.language, concept, w));
            }
        }
    }
    out
}

/// Unit-cost edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length; in [0, 1].
pub fn levenshtein_norm(a: &str, b: &str) -> Result<f64> {
    let la = a.chars().count();
    let lb = b.chars().count();
    if la == 0 && lb == 0 {
        return Err(Error::EmptyInput("levenshtein_norm of two empty strings".into()));
    }
    Ok(levenshtein(a, b) as f64 / la.max(lb) as f64)
}

fn shared_concepts(a: &WordList, b: &WordList) -> Vec<u8> {
    a.entries().keys().filter(|c| b.entries().contains_key(c)).copied().collect()
}

/// Sum in ascending value order, so symmetric pair enumerations sum to
/// bit-identical results.
fn sorted_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(|x, y| x.partial_cmp(y).expect("distances are never NaN"));
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean over shared concepts of the minimum normalized distance across
/// the synonym cross-product.
pub fn ldn(a: &WordList, b: &WordList) -> Result<f64> {
    let shared = shared_concepts(a, b);
    if shared.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no shared concepts between {} and {}",
            a.language, b.language
        )));
    }
    let mut per_concept = Vec::with_capacity(shared.len());
    for c in shared {
        let mut min = f64::INFINITY;
        for wa in &a.entries()[&c] {
            for wb in &b.entries()[&c] {
                min = min.min(levenshtein_norm(wa, wb)?);
            }
        }
        per_concept.push(min);
    }
    Ok(sorted_mean(per_concept))
}

/// Divergence-corrected LDN: divided by the mean distance over word
/// pairs whose concepts differ (both concepts shared by both lists).
pub fn ldnd(a: &WordList, b: &WordList) -> Result<f64> {
    let shared = shared_concepts(a, b);
    if shared.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "ldnd needs at least 2 shared concepts between {} and {}",
            a.language, b.language
        )));
    }
    let numerator = ldn(a, b)?;
    let mut cross = Vec::new();
    for &ca in &shared {
        for &cb in &shared {
            if ca == cb {
                continue;
            }
            for wa in &a.entries()[&ca] {
                for wb in &b.entries()[&cb] {
                    cross.push(levenshtein_norm(wa, wb)?);
                }
            }
        }
    }
    let denominator = sorted_mean(cross);
    if denominator == 0.0 {
        return Err(Error::invalid(
            "chance-correction denominator is zero (degenerate identical word lists)",
        ));
    }
    Ok(numerator / denominator)
}

/// Symmetric pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub languages: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(languages: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = languages.len();
        if values.len() != n * n {
            return Err(Error::shape(format!("{} values for {n} languages", values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let d = values[i * n + j];
                if d < 0.0 {
                    return Err(Error::invalid(format!("negative distance at ({i},{j})")));
                }
                if (d - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { languages, values })
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("language");
        for l in &self.languages {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.languages.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.len() {
                out.push_str(&format!("\t{:.6}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise LDND over word lists.
pub fn ldnd_matrix(lists: &[WordList]) -> Result<DistanceMatrix> {
    use rayon::prelude::*;
    let n = lists.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two word lists".into()));
    }
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let distances: Vec<Result<f64>> =
        pairs.par_iter().map(|&(i, j)| ldnd(&lists[i], &lists[j])).collect();
    let mut values = vec![0.0; n * n];
    for ((i, j), d) in pairs.into_iter().zip(distances) {
        let d = d?;
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    DistanceMatrix::new(lists.iter().map(|l| l.language.clone()).collect(), values)
}

/// Classical (Torgerson) MDS: double-center the squared distances, take
/// the top eigenpairs, scale eigenvectors by sqrt(eigenvalue).
/// Non-positive eigenvalues contribute zero columns. Each output column
/// is sign-fixed so the first language's coordinate is non-negative.
pub fn classical_mds(d: &DistanceMatrix, dims: usize) -> Result<Vec<Vec<f64>>> {
    let n = d.len();
    if dims == 0 || dims > n.saturating_sub(1) {
        return Err(Error::invalid(format!(
            "dims {dims} must lie in 1..={} for {n} points",
            n.saturating_sub(1)
        )));
    }
    // B = -1/2 J D^2 J via b_ij = -1/2 (d2_ij - rm_i - rm_j + gm).
    let mut sq = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = d.get(i, j);
            sq[i * n + j] = v * v;
        }
    }
    let row_mean: Vec<f64> =
        (0..n).map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = -0.5 * (sq[i * n + j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let (values, vectors) = jacobi_eigh(n, &b)?;
    let mut coords = vec![vec![0.0f64; dims]; n];
    for k in 0..dims {
        if values[k] <= 0.0 {
            continue; // leave the zero column
        }
        let scale = values[k].sqrt();
        for (i, row) in coords.iter_mut().enumerate() {
            row[k] = vectors[i * n + k] * scale;
        }
        if coords[0][k] < 0.0 {
            for row in coords.iter_mut() {
                row[k] = -row[k];
            }
        }
    }
    Ok(coords)
}

/// Sample Pearson correlation with a two-sided p-value: the exact
/// permutation distribution for n <= 8, a t-approximation above.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::invalid("pearson_r needs equal-length inputs with n >= 3"));
    }
    let r = pearson_only(x, y)?;
    let p = if n <= 8 {
        permutation_p(x, y, r)?
    } else if (1.0 - r * r) < 1e-15 {
        0.0
    } else {
        let t = r.abs() * ((n - 2) as f64 / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 2) as f64)
            .map_err(|e| Error::invalid(format!("t-distribution: {e}")))?;
        2.0 * (1.0 - dist.cdf(t))
    };
    Ok((r, p))
}

fn pearson_only(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson_r with zero variance"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Exact two-sided permutation p-value: the fraction of permutations of
/// y whose |r| reaches |r_observed|.
fn permutation_p(x: &[f64], y: &[f64], r_obs: f64) -> Result<f64> {
    let n = y.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut consider = |perm: &[usize]| -> Result<()> {
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let r = pearson_only(x, &yp)?;
        total += 1;
        if r.abs() >= r_obs.abs() - 1e-12 {
            extreme += 1;
        }
        Ok(())
    };
    // Heap's algorithm, iterative.
    consider(&perm)?;
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            consider(&perm)?;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}
