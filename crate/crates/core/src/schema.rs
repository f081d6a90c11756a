//! Latent partitions: named feature blocks, per-user interest sets, and the
//! exchange / selection / completion operations on latent codes.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub width: usize,
}

/// Partition of the latent vector into named blocks, plus the blocks each
/// user is interested in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct LatentSchema {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    interest_sets: Vec<InterestSet>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    blocks: Vec<Block>,
    #[serde(default)]
    interest_sets: Vec<Vec<usize>>,
}

impl TryFrom<RawSchema> for LatentSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        let mut schema = LatentSchema::new(raw.blocks)?;
        for set in raw.interest_sets {
            schema.add_user(&set)?;
        }
        Ok(schema)
    }
}

impl From<LatentSchema> for RawSchema {
    fn from(s: LatentSchema) -> Self {
        Self {
            interest_sets: s.interest_sets.iter().map(|i| i.blocks().to_vec()).collect(),
            blocks: s.blocks,
        }
    }
}

impl LatentSchema {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(invalid("blocks", "schema needs at least one block"));
        }
        if blocks.len() > 64 {
            return Err(invalid("blocks", "at most 64 blocks fit the interest bitmap"));
        }
        let mut seen = HashSet::new();
        for b in &blocks {
            if b.width == 0 {
                return Err(invalid("blocks", format!("block {:?} has zero width", b.name)));
            }
            if !seen.insert(b.name.as_str()) {
                return Err(invalid("blocks", format!("duplicate block name {:?}", b.name)));
            }
        }
        let offsets = blocks
            .iter()
            .scan(0, |acc, b| {
                let start = *acc;
                *acc += b.width;
                Some(start)
            })
            .collect();
        Ok(Self {
            blocks,
            offsets,
            interest_sets: Vec::new(),
        })
    }

    /// `count` blocks of equal width named `f0, f1, ...`.
    pub fn uniform(count: usize, width: usize) -> Result<Self> {
        Self::new(
            (0..count)
                .map(|i| Block {
                    name: format!("f{i}"),
                    width,
                })
                .collect(),
        )
    }

    pub fn with_users(mut self, sets: &[&[usize]]) -> Result<Self> {
        for s in sets {
            self.add_user(s)?;
        }
        Ok(self)
    }

    /// Registers a user and returns its index.
    pub fn add_user(&mut self, blocks: &[usize]) -> Result<usize> {
        let set = InterestSet::new(blocks, self.num_blocks())?;
        self.interest_sets.push(set);
        Ok(self.interest_sets.len() - 1)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_width(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.blocks.last().map_or(0, |b| b.width)
    }

    pub fn block_range(&self, index: usize) -> Result<std::ops::Range<usize>> {
        let b = self.blocks.get(index).ok_or(Error::BlockOutOfRange {
            index,
            blocks: self.blocks.len(),
        })?;
        let start = self.offsets[index];
        Ok(start..start + b.width)
    }

    pub fn interest_sets(&self) -> &[InterestSet] {
        &self.interest_sets
    }

    pub fn interest(&self, user: usize) -> Option<&InterestSet> {
        self.interest_sets.get(user)
    }

    /// Width of the blocks in `set`.
    pub fn selected_width(&self, set: &InterestSet) -> usize {
        set.blocks().iter().map(|&b| self.blocks[b].width).sum()
    }
}

/// Nonempty, sorted, duplicate-free set of block indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterestSet(Vec<usize>);

impl InterestSet {
    pub fn new(blocks: &[usize], num_blocks: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(invalid("interest set", "must name at least one block"));
        }
        let mut v = blocks.to_vec();
        v.sort_unstable();
        v.dedup();
        if let Some(&bad) = v.iter().find(|&&b| b >= num_blocks) {
            return Err(Error::BlockOutOfRange {
                index: bad,
                blocks: num_blocks,
            });
        }
        Ok(Self(v))
    }

    pub fn all(num_blocks: usize) -> Self {
        Self((0..num_blocks).collect())
    }

    pub fn from_bitmap(bitmap: u64, num_blocks: usize) -> Result<Self> {
        if num_blocks < 64 && bitmap >> num_blocks != 0 {
            return Err(invalid(
                "interest bitmap",
                format!("{bitmap:#b} names blocks beyond the {num_blocks} in the schema"),
            ));
        }
        let blocks: Vec<usize> = (0..64).filter(|b| bitmap & (1 << b) != 0).collect();
        Self::new(&blocks, num_blocks)
    }

    pub fn bitmap(&self) -> u64 {
        self.0.iter().fold(0, |m, &b| m | (1u64 << b))
    }

    pub fn blocks(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, block: usize) -> bool {
        self.0.binary_search(&block).is_ok()
    }
}

/// A latent vector tied to the schema that partitions it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    schema: Arc<LatentSchema>,
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(schema: Arc<LatentSchema>, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.total_width() {
            return Err(Error::ShapeMismatch {
                what: "latent code",
                expected: schema.total_width(),
                actual: values.len(),
            });
        }
        Ok(Self { schema, values })
    }

    pub fn schema(&self) -> &Arc<LatentSchema> {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn block(&self, index: usize) -> Result<&[f64]> {
        Ok(&self.values[self.schema.block_range(index)?])
    }

    fn same_schema(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.schema, &other.schema) || self.schema.blocks == other.schema.blocks
    }
}

/// Swaps block `block` between two codes.
pub fn exchange(a: &LatentCode, b: &LatentCode, block: usize) -> Result<(LatentCode, LatentCode)> {
    if !a.same_schema(b) {
        return Err(Error::SchemaMismatch);
    }
    let range = a.schema.block_range(block)?;
    let mut za = a.clone();
    let mut zb = b.clone();
    exchange_slices(&mut za.values, &mut zb.values, range);
    Ok((za, zb))
}

/// In-place block swap on raw latent slices.
pub fn exchange_slices(a: &mut [f64], b: &mut [f64], range: std::ops::Range<usize>) {
    a[range.clone()].swap_with_slice(&mut b[range]);
}

/// Concatenation of the blocks in `interest`, in block order.
pub fn select(code: &LatentCode, interest: &InterestSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(code.schema.selected_width(interest));
    for &b in interest.blocks() {
        out.extend_from_slice(code.block(b)?);
    }
    Ok(out)
}

/// Rebuilds a full code from selected blocks, filling the rest from `donor`.
pub fn complete(selected: &[f64], interest: &InterestSet, donor: &LatentCode) -> Result<LatentCode> {
    let schema = &donor.schema;
    let expected = schema.selected_width(interest);
    if selected.len() != expected {
        return Err(Error::ShapeMismatch {
            what: "selected features",
            expected,
            actual: selected.len(),
        });
    }
    let mut values = donor.values.clone();
    let mut cursor = 0;
    for &b in interest.blocks() {
        let range = schema.block_range(b)?;
        let w = range.len();
        values[range].copy_from_slice(&selected[cursor..cursor + w]);
        cursor += w;
    }
    LatentCode::new(schema.clone(), values)
}

/// Keeps the blocks in `interest` from `received`, takes the rest from the
/// knowledge-base `donor`.
pub fn select_and_complete(
    received: &LatentCode,
    interest: &InterestSet,
    donor: &LatentCode,
) -> Result<LatentCode> {
    if !received.same_schema(donor) {
        return Err(Error::SchemaMismatch);
    }
    complete(&select(received, interest)?, interest, donor)
}
