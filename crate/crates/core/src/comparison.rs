//! Ordinal comparison vectors between record pairs.
//!
//! Every field is compared on an ordinal scale `1..=L_k`, where 1 is complete
//! disagreement and `L_k` complete agreement. Pairs are materialized block by
//! block; with no blocking key the whole cross product forms a single block.
//! The table is pair-major: the `K` levels of one pair are contiguous.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldKind {
    /// Exact agreement on a categorical value; two levels.
    #[serde(alias = "exact", alias = "exact_categorical")]
    ExactCategorical,
    /// Agreement on a growing prefix of the first `digits` characters.
    #[serde(alias = "digit_prefix")]
    DigitPrefix { digits: usize },
    /// Year, then month, then day agreement.
    #[serde(alias = "date_ymd", alias = "date")]
    DateYmd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// Number of agreement levels `L_k`.
    pub fn levels(&self) -> usize {
        match self.kind {
            FieldKind::ExactCategorical => 2,
            FieldKind::DigitPrefix { digits } => digits + 1,
            FieldKind::DateYmd => 4,
        }
    }

    fn validate(&self) -> Result<()> {
        if let FieldKind::DigitPrefix { digits } = self.kind {
            if digits == 0 || digits > 254 {
                return Err(Error::Config(format!(
                    "field `{}`: digit-prefix needs 1..=254 digits",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Calendar date with validated components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ymd {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl Ymd {
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Self { year, month, day })
    }

    /// Parses ISO `YYYY-MM-DD`.
    pub fn parse(s: &str) -> Option<Self> {
        let d = chrono::NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()?;
        use chrono::Datelike;
        Self::new(d.year(), d.month() as u8, d.day() as u8)
    }
}

impl std::fmt::Display for Ymd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldValue {
    Missing,
    Text(String),
    Date(Ymd),
}

impl FieldValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FieldValue::Missing)
    }

    fn render(&self) -> String {
        match self {
            FieldValue::Missing => String::new(),
            FieldValue::Text(s) => s.clone(),
            FieldValue::Date(d) => d.to_string(),
        }
    }
}

/// Level 2 for equal strings, 1 otherwise. Case-sensitive.
pub fn exact_agreement_level(a: &str, b: &str) -> u8 {
    if a == b {
        2
    } else {
        1
    }
}

/// `1 + length of the common prefix over the first `digits` characters`.
///
/// Returns `None` when either string is shorter than `digits`.
pub fn digit_prefix_level(a: &str, b: &str, digits: usize) -> Option<u8> {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    if a.len() < digits || b.len() < digits {
        return None;
    }
    let common = a[..digits]
        .iter()
        .zip(&b[..digits])
        .take_while(|(x, y)| x == y)
        .count();
    Some(1 + common as u8)
}

pub fn date_ymd_level(a: Ymd, b: Ymd) -> u8 {
    if a.year != b.year {
        1
    } else if a.month != b.month {
        2
    } else if a.day != b.day {
        3
    } else {
        4
    }
}

fn field_level(spec: &FieldSpec, a: &FieldValue, b: &FieldValue) -> u8 {
    match (a, b) {
        (FieldValue::Missing, _) | (_, FieldValue::Missing) => 1,
        (FieldValue::Text(x), FieldValue::Text(y)) => match spec.kind {
            FieldKind::ExactCategorical => exact_agreement_level(x, y),
            // lengths are checked when the record file is built
            FieldKind::DigitPrefix { digits } => digit_prefix_level(x, y, digits).unwrap_or(1),
            FieldKind::DateYmd => 1,
        },
        (FieldValue::Date(x), FieldValue::Date(y)) => date_ymd_level(*x, *y),
        _ => 1,
    }
}

/// One data file: ids, linking values, exclusive numeric variables and an
/// optional blocking key per record.
#[derive(Debug, Clone)]
pub struct RecordFile {
    pub name: String,
    pub ids: Vec<String>,
    pub field_names: Vec<String>,
    /// Record-major linking values, `field_names.len()` per record.
    pub linking: Vec<FieldValue>,
    pub exclusive_names: Vec<String>,
    /// Record-major exclusive variables, `exclusive_names.len()` per record.
    pub exclusive: Vec<f64>,
    pub block_keys: Option<Vec<String>>,
}

impl RecordFile {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn value(&self, record: usize, field: usize) -> &FieldValue {
        &self.linking[record * self.n_fields() + field]
    }

    pub fn exclusive_row(&self, record: usize) -> &[f64] {
        let w = self.exclusive_names.len();
        &self.exclusive[record * w..(record + 1) * w]
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.field_names.iter().position(|f| f == name)
    }

    pub fn exclusive_index(&self, name: &str) -> Option<usize> {
        self.exclusive_names.iter().position(|f| f == name)
    }

    /// Checks id uniqueness and per-kind value constraints.
    pub fn validate(&self, specs: &[FieldSpec]) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    file: self.name.clone(),
                    id: id.clone(),
                });
            }
        }
        if self.linking.len() != self.ids.len() * self.n_fields() {
            return Err(Error::Schema(format!(
                "{}: linking values do not match record count",
                self.name
            )));
        }
        if self.exclusive.len() != self.ids.len() * self.exclusive_names.len() {
            return Err(Error::Schema(format!(
                "{}: exclusive values do not match record count",
                self.name
            )));
        }
        if let Some(keys) = &self.block_keys {
            if keys.len() != self.ids.len() {
                return Err(Error::Schema(format!(
                    "{}: block keys do not match record count",
                    self.name
                )));
            }
        }
        for spec in specs {
            let k = self
                .field_index(&spec.name)
                .ok_or_else(|| Error::MissingColumn {
                    file: self.name.clone(),
                    column: spec.name.clone(),
                })?;
            for (r, id) in self.ids.iter().enumerate() {
                match (spec.kind, self.value(r, k)) {
                    (_, FieldValue::Missing) => {}
                    (FieldKind::DigitPrefix { digits }, FieldValue::Text(s)) => {
                        if s.len() < digits || !s.bytes().all(|c| c.is_ascii_digit()) {
                            return Err(Error::Input {
                                record: id.clone(),
                                message: format!(
                                    "field `{}` needs at least {digits} digits, got `{s}`",
                                    spec.name
                                ),
                            });
                        }
                    }
                    (FieldKind::DateYmd, FieldValue::Date(_)) => {}
                    (FieldKind::ExactCategorical, FieldValue::Text(_)) => {}
                    (_, v) => {
                        return Err(Error::Input {
                            record: id.clone(),
                            message: format!(
                                "field `{}` has a value of the wrong kind: `{}`",
                                spec.name,
                                v.render()
                            ),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads a CSV file with a header row and a required `id` column.
    pub fn read_csv(
        path: &Path,
        specs: &[FieldSpec],
        exclusive: &[String],
        block_column: Option<&str>,
    ) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::from_reader(
            file,
            &path.display().to_string(),
            specs,
            exclusive,
            block_column,
        )
    }

    pub fn from_reader<R: std::io::Read>(
        reader: R,
        name: &str,
        specs: &[FieldSpec],
        exclusive: &[String],
        block_column: Option<&str>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |c: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::MissingColumn {
                    file: name.to_string(),
                    column: c.to_string(),
                })
        };
        let id_col = col("id")?;
        let field_cols = specs
            .iter()
            .map(|s| col(&s.name))
            .collect::<Result<Vec<_>>>()?;
        let excl_cols = exclusive
            .iter()
            .map(|s| col(s))
            .collect::<Result<Vec<_>>>()?;
        let block_col = block_column.map(col).transpose()?;

        let mut out = RecordFile {
            name: name.to_string(),
            ids: Vec::new(),
            field_names: specs.iter().map(|s| s.name.clone()).collect(),
            linking: Vec::new(),
            exclusive_names: exclusive.to_vec(),
            exclusive: Vec::new(),
            block_keys: block_col.map(|_| Vec::new()),
        };
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let parse_err = |message: String| Error::Parse {
                file: name.to_string(),
                line,
                message,
            };
            let id = row.get(id_col).unwrap_or("").to_string();
            if id.is_empty() {
                return Err(parse_err("empty id".into()));
            }
            for (spec, &c) in specs.iter().zip(&field_cols) {
                let raw = row.get(c).unwrap_or("");
                let v = if raw.is_empty() {
                    FieldValue::Missing
                } else if spec.kind == FieldKind::DateYmd {
                    FieldValue::Date(Ymd::parse(raw).ok_or_else(|| {
                        parse_err(format!("invalid date `{raw}` in column `{}`", spec.name))
                    })?)
                } else {
                    FieldValue::Text(raw.to_string())
                };
                out.linking.push(v);
            }
            for (cname, &c) in exclusive.iter().zip(&excl_cols) {
                let raw = row.get(c).unwrap_or("");
                let v: f64 = raw
                    .parse()
                    .map_err(|_| parse_err(format!("column `{cname}`: `{raw}` is not a number")))?;
                out.exclusive.push(v);
            }
            if let (Some(c), Some(keys)) = (block_col, out.block_keys.as_mut()) {
                keys.push(row.get(c).unwrap_or("").to_string());
            }
            out.ids.push(id);
        }
        out.validate(specs)?;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub key: String,
    /// Global indices of the file-A records in this block.
    pub a: Vec<u32>,
    /// Global indices of the file-B records in this block.
    pub b: Vec<u32>,
    /// Index of the block's first pair in the comparison table.
    pub pair_offset: usize,
}

impl Block {
    pub fn n_pairs(&self) -> usize {
        self.a.len() * self.b.len()
    }
}

/// Partition of both files into blocks. Records whose key appears in only one
/// file belong to a block with no pairs.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    pub blocks: Vec<Block>,
    a_pos: Vec<(u32, u32)>,
    b_pos: Vec<(u32, u32)>,
    blocked: bool,
}

impl BlockIndex {
    /// Single block holding every record.
    pub fn unblocked(n_a: usize, n_b: usize) -> Self {
        let block = Block {
            key: String::new(),
            a: (0..n_a as u32).collect(),
            b: (0..n_b as u32).collect(),
            pair_offset: 0,
        };
        Self {
            blocks: vec![block],
            a_pos: (0..n_a as u32).map(|i| (0, i)).collect(),
            b_pos: (0..n_b as u32).map(|j| (0, j)).collect(),
            blocked: false,
        }
    }

    /// Blocks ordered by key.
    pub fn from_keys(keys_a: &[String], keys_b: &[String]) -> Self {
        let mut map: BTreeMap<&str, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
        for (i, k) in keys_a.iter().enumerate() {
            map.entry(k.as_str()).or_default().0.push(i as u32);
        }
        for (j, k) in keys_b.iter().enumerate() {
            map.entry(k.as_str()).or_default().1.push(j as u32);
        }
        let mut a_pos = vec![(0, 0); keys_a.len()];
        let mut b_pos = vec![(0, 0); keys_b.len()];
        let mut blocks = Vec::with_capacity(map.len());
        let mut offset = 0;
        for (s, (key, (a, b))) in map.into_iter().enumerate() {
            for (p, &i) in a.iter().enumerate() {
                a_pos[i as usize] = (s as u32, p as u32);
            }
            for (p, &j) in b.iter().enumerate() {
                b_pos[j as usize] = (s as u32, p as u32);
            }
            let block = Block {
                key: key.to_string(),
                a,
                b,
                pair_offset: offset,
            };
            offset += block.n_pairs();
            blocks.push(block);
        }
        Self {
            blocks,
            a_pos,
            b_pos,
            blocked: true,
        }
    }

    pub fn is_blocked(&self) -> bool {
        self.blocked
    }

    pub fn n_a(&self) -> usize {
        self.a_pos.len()
    }

    pub fn n_b(&self) -> usize {
        self.b_pos.len()
    }

    /// Block id and position within the block of file-A record `i`.
    pub fn a_position(&self, i: usize) -> (usize, usize) {
        let (s, p) = self.a_pos[i];
        (s as usize, p as usize)
    }

    pub fn b_position(&self, j: usize) -> (usize, usize) {
        let (s, p) = self.b_pos[j];
        (s as usize, p as usize)
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.a_pos[i].0 == self.b_pos[j].0
    }

    pub fn n_pairs(&self) -> usize {
        self.blocks.iter().map(Block::n_pairs).sum()
    }

    /// Table index of pair `(i, j)`, or `None` when the records are in different blocks.
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let (sa, pa) = self.a_pos[i];
        let (sb, pb) = self.b_pos[j];
        if sa != sb {
            return None;
        }
        let block = &self.blocks[sa as usize];
        Some(block.pair_offset + pa as usize * block.b.len() + pb as usize)
    }
}

/// Materialized comparison vectors.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    n_a: usize,
    n_b: usize,
    levels: Vec<usize>,
    level_offsets: Vec<usize>,
    /// Pair-major levels in `1..=L_k`.
    gamma: Vec<u8>,
    /// Mixed-radix index of each pair's full comparison vector.
    pattern: Vec<u32>,
    n_patterns: usize,
    blocks: BlockIndex,
    level_totals: Vec<u64>,
    missing_pairs: Vec<u64>,
}

impl ComparisonTable {
    /// Builds the table from raw level vectors (pair-major), mainly for tests
    /// and callers that compute agreement themselves.
    pub fn from_levels(levels: Vec<usize>, blocks: BlockIndex, gamma: Vec<u8>) -> Result<Self> {
        let k = levels.len();
        if gamma.len() != blocks.n_pairs() * k {
            return Err(Error::Dimension {
                expected: blocks.n_pairs() * k,
                found: gamma.len(),
            });
        }
        for (p, g) in gamma.chunks(k.max(1)).enumerate() {
            for (f, (&l, &max)) in g.iter().zip(&levels).enumerate() {
                if l == 0 || l as usize > max {
                    return Err(Error::Invariant(format!(
                        "pair {p} field {f}: level {l} outside 1..={max}"
                    )));
                }
            }
        }
        let missing = vec![0; k];
        Self::assemble(levels, blocks, gamma, missing)
    }

    fn assemble(
        levels: Vec<usize>,
        blocks: BlockIndex,
        gamma: Vec<u8>,
        missing_pairs: Vec<u64>,
    ) -> Result<Self> {
        let k = levels.len();
        let mut level_offsets = Vec::with_capacity(k + 1);
        let mut acc = 0;
        for &l in &levels {
            level_offsets.push(acc);
            acc += l;
        }
        level_offsets.push(acc);
        let n_patterns = levels
            .iter()
            .try_fold(1u64, |p, &l| p.checked_mul(l as u64))
            .filter(|&p| p <= u32::MAX as u64)
            .ok_or_else(|| Error::Config("too many distinct comparison patterns".into()))?
            as usize;

        let n_pairs = blocks.n_pairs();
        let mut pattern = vec![0u32; n_pairs];
        if k > 0 {
            pattern
                .par_iter_mut()
                .zip(gamma.par_chunks(k))
                .for_each(|(p, g)| {
                    let mut idx = 0u32;
                    for (&l, &radix) in g.iter().zip(&levels) {
                        idx = idx * radix as u32 + (l as u32 - 1);
                    }
                    *p = idx;
                });
        }
        let total_levels = acc;
        let level_totals = if k == 0 {
            vec![0; total_levels]
        } else {
            gamma
                .par_chunks(k * 4096)
                .map(|chunk| {
                    let mut c = vec![0u64; total_levels];
                    for g in chunk.chunks(k) {
                        for (f, &l) in g.iter().enumerate() {
                            c[level_offsets[f] + l as usize - 1] += 1;
                        }
                    }
                    c
                })
                .reduce(
                    || vec![0u64; total_levels],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                )
        };
        Ok(Self {
            n_a: blocks.n_a(),
            n_b: blocks.n_b(),
            levels,
            level_offsets,
            gamma,
            pattern,
            n_patterns,
            blocks,
            level_totals,
            missing_pairs,
        })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_fields(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Offset of field `k`'s first level in a flattened per-level vector.
    pub fn level_offset(&self, k: usize) -> usize {
        self.level_offsets[k]
    }

    pub fn total_levels(&self) -> usize {
        *self.level_offsets.last().unwrap_or(&0)
    }

    pub fn n_pairs(&self) -> usize {
        self.pattern.len()
    }

    pub fn n_patterns(&self) -> usize {
        self.n_patterns
    }

    pub fn blocks(&self) -> &BlockIndex {
        &self.blocks
    }

    pub fn gamma(&self, pair: usize) -> &[u8] {
        let k = self.levels.len();
        &self.gamma[pair * k..(pair + 1) * k]
    }

    pub fn pattern(&self, pair: usize) -> u32 {
        self.pattern[pair]
    }

    pub fn patterns(&self) -> &[u32] {
        &self.pattern
    }

    /// Comparison vector for pattern index `p`.
    pub fn pattern_levels(&self, mut p: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.levels.len()];
        for (slot, &radix) in out.iter_mut().zip(&self.levels).rev() {
            *slot = (p % radix) as u8 + 1;
            p /= radix;
        }
        out
    }

    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        self.blocks.pair_index(i, j)
    }

    /// Count of materialized pairs at each (field, level), flattened.
    pub fn level_totals(&self) -> &[u64] {
        &self.level_totals
    }

    /// Per field, the number of pairs compared with a missing value on either side.
    pub fn missing_pairs(&self) -> &[u64] {
        &self.missing_pairs
    }
}

/// Compares every within-block pair of `file_a` × `file_b`.
///
/// Blocking is active when both files carry block keys.
pub fn build_comparison_table(
    file_a: &RecordFile,
    file_b: &RecordFile,
    specs: &[FieldSpec],
) -> Result<ComparisonTable> {
    if specs.is_empty() {
        return Err(Error::Config("no linking fields declared".into()));
    }
    for s in specs {
        s.validate()?;
    }
    file_a.validate(specs)?;
    file_b.validate(specs)?;
    let cols_a: Vec<usize> = specs
        .iter()
        .map(|s| file_a.field_index(&s.name).expect("validated"))
        .collect();
    let cols_b: Vec<usize> = specs
        .iter()
        .map(|s| file_b.field_index(&s.name).expect("validated"))
        .collect();
    let blocks = match (&file_a.block_keys, &file_b.block_keys) {
        (Some(ka), Some(kb)) => BlockIndex::from_keys(ka, kb),
        (None, None) => BlockIndex::unblocked(file_a.len(), file_b.len()),
        _ => {
            return Err(Error::Schema(
                "block keys must be given for both files or neither".into(),
            ))
        }
    };
    let k = specs.len();
    let mut gamma = vec![0u8; blocks.n_pairs() * k];
    let mut missing = vec![0u64; k];
    for block in &blocks.blocks {
        let nb = block.b.len();
        if nb == 0 || block.a.is_empty() {
            continue;
        }
        let slice = &mut gamma[block.pair_offset * k..(block.pair_offset + block.n_pairs()) * k];
        let block_missing = slice
            .par_chunks_mut(nb * k)
            .zip(block.a.par_iter())
            .map(|(row, &i)| {
                let mut miss = vec![0u64; k];
                for (g, &j) in row.chunks_mut(k).zip(&block.b) {
                    for f in 0..k {
                        let va = file_a.value(i as usize, cols_a[f]);
                        let vb = file_b.value(j as usize, cols_b[f]);
                        if va.is_missing() || vb.is_missing() {
                            miss[f] += 1;
                        }
                        g[f] = field_level(&specs[f], va, vb);
                    }
                }
                miss
            })
            .reduce(
                || vec![0u64; k],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        missing
            .iter_mut()
            .zip(block_missing)
            .for_each(|(x, y)| *x += y);
    }
    let levels = specs.iter().map(FieldSpec::levels).collect();
    ComparisonTable::assemble(levels, blocks, gamma, missing)
}
