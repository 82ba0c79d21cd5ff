//! Static data-center description and the per-slot cost functions.
//!
//! A configuration lists server blocks (count, type, per-server rate, which job
//! classes they may serve), job classes with their QoS weights, and a price
//! schedule for idle energy and on/off switching. Slot indices are 0-based;
//! prices for slots beyond the schedule repeat the last row.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-server energy curve of one block. The idle cost of `x` servers during
/// slot `t` is `E(t, b) * shape(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyShape {
    /// `shape(x) = x`.
    Linear,
    /// `shape(x) = table[x]`, convex in `x`.
    Tabulated(Vec<f64>),
}

impl EnergyShape {
    #[inline]
    pub fn eval(&self, x: u32) -> f64 {
        match self {
            EnergyShape::Linear => x as f64,
            EnergyShape::Tabulated(t) => t[x as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub servers: u32,
    pub server_type: usize,
    /// Jobs per slot one server can process.
    pub rate: f64,
    /// `serves[j]` is true when the block may receive class-`j` jobs.
    pub serves: Vec<bool>,
    pub energy_shape: EnergyShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobClass {
    pub name: String,
    /// Money per job per unit of response time.
    pub qos_weight: f64,
}

/// Time-indexed prices. Each table is indexed `[slot][block]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSchedule {
    energy: Vec<Vec<f64>>,
    switch_on: Vec<Vec<f64>>,
    switch_off: Vec<Vec<f64>>,
}

fn check_table(name: &str, table: &[Vec<f64>], blocks: usize) -> Result<()> {
    if table.is_empty() {
        return Err(Error::validation(format!("price table {name} has no rows")));
    }
    for (t, row) in table.iter().enumerate() {
        if row.len() != blocks {
            return Err(Error::validation(format!(
                "price table {name} row {t} has {} entries, expected {blocks}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::validation(format!(
                "price table {name} row {t} holds invalid price {v}"
            )));
        }
    }
    Ok(())
}

impl PriceSchedule {
    pub fn new(
        energy: Vec<Vec<f64>>,
        switch_on: Vec<Vec<f64>>,
        switch_off: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let blocks = energy.first().map_or(0, Vec::len);
        check_table("E", &energy, blocks)?;
        check_table("c_plus", &switch_on, blocks)?;
        check_table("c_minus", &switch_off, blocks)?;
        Ok(PriceSchedule {
            energy,
            switch_on,
            switch_off,
        })
    }

    /// Same prices for every block and slot.
    pub fn constant(blocks: usize, energy: f64, switch_on: f64, switch_off: f64) -> Self {
        PriceSchedule::new(
            vec![vec![energy; blocks]],
            vec![vec![switch_on; blocks]],
            vec![vec![switch_off; blocks]],
        )
        .expect("constant prices must be nonnegative and finite")
    }

    /// Number of slots the schedule defines explicitly.
    pub fn horizon(&self) -> usize {
        self.energy
            .len()
            .max(self.switch_on.len())
            .max(self.switch_off.len())
    }

    pub fn num_blocks(&self) -> usize {
        self.energy[0].len()
    }

    #[inline]
    fn at(table: &[Vec<f64>], t: usize, b: usize) -> f64 {
        table[t.min(table.len() - 1)][b]
    }

    #[inline]
    pub fn energy(&self, t: usize, b: usize) -> f64 {
        Self::at(&self.energy, t, b)
    }

    #[inline]
    pub fn switch_on(&self, t: usize, b: usize) -> f64 {
        Self::at(&self.switch_on, t, b)
    }

    #[inline]
    pub fn switch_off(&self, t: usize, b: usize) -> f64 {
        Self::at(&self.switch_off, t, b)
    }

    pub fn energy_table(&self) -> &[Vec<f64>] {
        &self.energy
    }

    pub fn switch_on_table(&self) -> &[Vec<f64>] {
        &self.switch_on
    }

    pub fn switch_off_table(&self) -> &[Vec<f64>] {
        &self.switch_off
    }

    pub fn is_stationary(&self) -> bool {
        let same = |t: &[Vec<f64>]| t.iter().all(|r| r == &t[0]);
        same(&self.energy) && same(&self.switch_on) && same(&self.switch_off)
    }

    /// Restrict to a subset of blocks, in the given order.
    pub fn select_blocks(&self, blocks: &[usize]) -> PriceSchedule {
        let pick = |table: &[Vec<f64>]| -> Vec<Vec<f64>> {
            table
                .iter()
                .map(|row| blocks.iter().map(|&b| row[b]).collect())
                .collect()
        };
        PriceSchedule {
            energy: pick(&self.energy),
            switch_on: pick(&self.switch_on),
            switch_off: pick(&self.switch_off),
        }
    }
}

/// Blocks and classes coupled through the serve mask. QoS costs of distinct
/// components never interact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub blocks: Vec<usize>,
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataCenterConfig {
    pub blocks: Vec<Block>,
    pub classes: Vec<JobClass>,
    pub prices: PriceSchedule,
}

impl DataCenterConfig {
    pub fn new(blocks: Vec<Block>, classes: Vec<JobClass>, prices: PriceSchedule) -> Result<Self> {
        let cfg = DataCenterConfig {
            blocks,
            classes,
            prices,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_types(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.server_type)
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn caps(&self) -> Vec<u32> {
        self.blocks.iter().map(|b| b.servers).collect()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.caps())
    }

    pub fn total_servers(&self) -> u64 {
        self.blocks.iter().map(|b| b.servers as u64).sum()
    }

    pub fn qos_weights(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.qos_weight).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let nb = self.blocks.len();
        let nj = self.classes.len();
        if nb == 0 {
            return Err(Error::validation("configuration has no server blocks"));
        }
        if self.prices.num_blocks() != nb {
            return Err(Error::validation(format!(
                "price schedule covers {} blocks, configuration has {nb}",
                self.prices.num_blocks()
            )));
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            if blk.servers == 0 {
                return Err(Error::validation(format!("block {b} has no servers")));
            }
            if !(blk.rate.is_finite() && blk.rate > 0.0) {
                return Err(Error::validation(format!(
                    "block {b} has non-positive processing rate {}",
                    blk.rate
                )));
            }
            if blk.serves.len() != nj {
                return Err(Error::validation(format!(
                    "serve mask row of block {b} has {} entries, expected {nj}",
                    blk.serves.len()
                )));
            }
            if let EnergyShape::Tabulated(t) = &blk.energy_shape {
                if t.len() != blk.servers as usize + 1 {
                    return Err(Error::validation(format!(
                        "energy table of block {b} has {} entries, expected {}",
                        t.len(),
                        blk.servers + 1
                    )));
                }
                if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::validation(format!(
                        "energy table of block {b} holds a negative or non-finite value"
                    )));
                }
                let scale = t.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for w in t.windows(3) {
                    if w[0] + w[2] - 2.0 * w[1] < -1e-12 * scale {
                        return Err(Error::validation(format!(
                            "energy table of block {b} is not convex"
                        )));
                    }
                }
            }
        }
        for (j, c) in self.classes.iter().enumerate() {
            if !(c.qos_weight.is_finite() && c.qos_weight >= 0.0) {
                return Err(Error::validation(format!(
                    "class {j} has invalid QoS weight {}",
                    c.qos_weight
                )));
            }
            if !self.blocks.iter().any(|b| b.serves[j]) {
                return Err(Error::validation(format!(
                    "class {j} ({}) cannot be served by any block",
                    c.name
                )));
            }
        }
        let types = self.num_types();
        if types > nb {
            return Err(Error::validation(format!(
                "{types} server types exceed {nb} blocks"
            )));
        }
        for i in 0..types {
            let members: Vec<&Block> = self.blocks.iter().filter(|b| b.server_type == i).collect();
            let Some(first) = members.first() else {
                return Err(Error::validation(format!(
                    "server type {i} has no blocks (type indices must be contiguous)"
                )));
            };
            if members
                .iter()
                .any(|b| b.rate != first.rate || b.serves != first.serves)
            {
                return Err(Error::validation(format!(
                    "blocks of server type {i} differ in rate or serve mask"
                )));
            }
        }
        Ok(())
    }

    /// Connected components of the block/class bipartite serve graph, ordered
    /// by smallest block index.
    pub fn components(&self) -> Vec<Component> {
        let nb = self.blocks.len();
        let mut label = vec![usize::MAX; nb];
        let mut out = Vec::new();
        for start in 0..nb {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            label[start] = id;
            let mut blocks = Vec::new();
            let mut classes = Vec::new();
            while let Some(b) = stack.pop() {
                blocks.push(b);
                for j in 0..self.classes.len() {
                    if !self.blocks[b].serves[j] {
                        continue;
                    }
                    if !classes.contains(&j) {
                        classes.push(j);
                    }
                    for (b2, blk2) in self.blocks.iter().enumerate() {
                        if blk2.serves[j] && label[b2] == usize::MAX {
                            label[b2] = id;
                            stack.push(b2);
                        }
                    }
                }
            }
            blocks.sort_unstable();
            classes.sort_unstable();
            out.push(Component { blocks, classes });
        }
        out
    }

    /// Restrict to a subset of blocks. All classes are kept (so arrival-rate
    /// vectors keep their meaning); classes the subset cannot serve get a zero
    /// QoS weight and are never routed, which is only meaningful when
    /// `blocks` is a union of serve-mask components.
    pub fn select_blocks(&self, blocks: &[usize]) -> DataCenterConfig {
        let sub_blocks: Vec<Block> = blocks.iter().map(|&b| self.blocks[b].clone()).collect();
        let classes = self
            .classes
            .iter()
            .enumerate()
            .map(|(j, c)| JobClass {
                name: c.name.clone(),
                qos_weight: if sub_blocks.iter().any(|b| b.serves[j]) {
                    c.qos_weight
                } else {
                    0.0
                },
            })
            .collect();
        // renumber types densely
        let mut type_map: BTreeMap<usize, usize> = BTreeMap::new();
        let sub_blocks = sub_blocks
            .into_iter()
            .map(|mut b| {
                let n = type_map.len();
                b.server_type = *type_map.entry(b.server_type).or_insert(n);
                b
            })
            .collect();
        DataCenterConfig {
            blocks: sub_blocks,
            classes,
            prices: self.prices.select_blocks(blocks),
        }
    }

    /// Idle-energy cost without bounds checks.
    #[inline]
    pub fn energy_unchecked(&self, t: usize, x: &[u32]) -> f64 {
        self.blocks
            .iter()
            .zip(x)
            .enumerate()
            .map(|(b, (blk, &xb))| self.prices.energy(t, b) * blk.energy_shape.eval(xb))
            .sum()
    }

    /// Switching cost without bounds checks.
    #[inline]
    pub fn switching_unchecked(&self, t: usize, x: &[u32], a: &[u32]) -> f64 {
        let mut total = 0.0;
        for b in 0..x.len() {
            if a[b] > x[b] {
                total += self.prices.switch_on(t, b) * (a[b] - x[b]) as f64;
            } else if x[b] > a[b] {
                total += self.prices.switch_off(t, b) * (x[b] - a[b]) as f64;
            }
        }
        total
    }
}

/// A vector in `{-1, +1}^B` selecting, per block, whether the switch-on
/// (`+1`) or switch-off (`-1`) price is active.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orthant(Vec<i8>);

impl Orthant {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::domain(format!(
                "orthant index {signs:?} has entries outside {{-1, +1}}"
            )));
        }
        Ok(Orthant(signs))
    }

    /// Orthant number `id` in `0..2^B`; bit `B-1-b` set means `k_b = +1`, so
    /// ids increase in lexicographic order of the sign vectors.
    pub fn from_id(id: usize, dims: usize) -> Self {
        Orthant(
            (0..dims)
                .map(|b| if id >> (dims - 1 - b) & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn id(&self) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, &s| (acc << 1) | usize::from(s > 0))
    }

    pub fn all(dims: usize) -> impl Iterator<Item = Orthant> {
        (0..1usize << dims).map(move |id| Orthant::from_id(id, dims))
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// True when `k_b * (a_b - x_b) >= 0` for every coordinate.
    pub fn contains_move(&self, x: &[u32], a: &[u32]) -> bool {
        self.0
            .iter()
            .zip(x.iter().zip(a))
            .all(|(&k, (&xb, &ab))| k as i64 * (ab as i64 - xb as i64) >= 0)
    }
}

/// `(x, lambda, theta)`: servers on per block, arrival rates per class, mode.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: Vec<u32>,
    pub lambda: Vec<f64>,
    pub theta: usize,
}

/// Servers on per block for the next slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action(pub Vec<u32>);

/// `sum_b e_b(t, x_b)`.
pub fn energy_idle_cost(t: usize, x: &[u32], cfg: &DataCenterConfig) -> Result<f64> {
    cfg.grid().check(x)?;
    Ok(cfg.energy_unchecked(t, x))
}

/// `sum_b c+_b(t) |a_b - x_b|_+ + c-_b(t) |x_b - a_b|_+`.
pub fn switching_cost(t: usize, x: &[u32], a: &Action, cfg: &DataCenterConfig) -> Result<f64> {
    let grid = cfg.grid();
    grid.check(x)?;
    grid.check(&a.0)?;
    Ok(cfg.switching_unchecked(t, x, &a.0))
}

/// Switching cost with the orthant `k` fixing which price applies per block.
/// Equals [`switching_cost`] when `k` matches the sign pattern of `a - x`
/// and is smaller otherwise.
pub fn signed_switch_form(
    t: usize,
    k: &Orthant,
    x: &[u32],
    a: &Action,
    cfg: &DataCenterConfig,
) -> Result<f64> {
    let grid = cfg.grid();
    grid.check(x)?;
    grid.check(&a.0)?;
    if k.dims() != cfg.num_blocks() {
        return Err(Error::domain(format!(
            "orthant index has {} entries, expected {}",
            k.dims(),
            cfg.num_blocks()
        )));
    }
    Ok(signed_switch_unchecked(t, k.signs(), x, &a.0, cfg))
}

#[inline]
pub(crate) fn signed_switch_unchecked(
    t: usize,
    k: &[i8],
    x: &[u32],
    a: &[u32],
    cfg: &DataCenterConfig,
) -> f64 {
    let mut total = 0.0;
    for b in 0..x.len() {
        let d = a[b] as f64 - x[b] as f64;
        if k[b] > 0 {
            total += cfg.prices.switch_on(t, b) * d;
        } else {
            total -= cfg.prices.switch_off(t, b) * d;
        }
    }
    total
}

/// `c_QoS(x, lambda) + c^E_t(x, a)`. The cost does not depend on the mode.
pub fn stage_cost(
    t: usize,
    s: &State,
    a: &Action,
    qos: &dyn Fn(&[u32], &[f64]) -> f64,
    cfg: &DataCenterConfig,
) -> Result<f64> {
    let switch = switching_cost(t, &s.x, a, cfg)?;
    Ok(qos(&s.x, &s.lambda) + cfg.energy_unchecked(t, &s.x) + switch)
}

// ---------------------------------------------------------------------------
// Configuration file

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlocksSection {
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[serde(rename = "I", default, skip_serializing_if = "Option::is_none")]
    types: Option<usize>,
    #[serde(rename = "M")]
    servers: Vec<u32>,
    block_type: Vec<usize>,
    r: Vec<f64>,
    serve_mask: Vec<Vec<bool>>,
    /// Per-block convex idle-energy shape; an empty row means linear.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    energy_table: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassesSection {
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    names: Vec<String>,
    #[serde(rename = "C")]
    qos_weight: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PricesSection {
    #[serde(rename = "E")]
    energy: Vec<Vec<f64>>,
    c_plus: Vec<Vec<f64>>,
    c_minus: Vec<Vec<f64>>,
}

/// `[modes]` section: optional pointer to a mode-model file plus the mode
/// count used when estimating one from a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    blocks: BlocksSection,
    classes: ClassesSection,
    prices: PricesSection,
    #[serde(default)]
    modes: ModesSection,
}

/// A configuration together with its `[modes]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub config: DataCenterConfig,
    pub modes: ModesSection,
}

impl ConfigDocument {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let nb = file.blocks.servers.len();
        let nj = file.classes.names.len();
        if file.blocks.count.is_some_and(|c| c != nb) {
            return Err(Error::validation(format!(
                "[blocks] B = {} but M lists {nb} blocks",
                file.blocks.count.unwrap_or_default()
            )));
        }
        if file.classes.count.is_some_and(|c| c != nj) {
            return Err(Error::validation(format!(
                "[classes] J = {} but names lists {nj} classes",
                file.classes.count.unwrap_or_default()
            )));
        }
        for (name, len) in [
            ("block_type", file.blocks.block_type.len()),
            ("r", file.blocks.r.len()),
            ("serve_mask", file.blocks.serve_mask.len()),
        ] {
            if len != nb {
                return Err(Error::validation(format!(
                    "[blocks] {name} has {len} entries, expected {nb}"
                )));
            }
        }
        if file.classes.qos_weight.len() != nj {
            return Err(Error::validation(format!(
                "[classes] C has {} entries, expected {nj}",
                file.classes.qos_weight.len()
            )));
        }
        if !file.blocks.energy_table.is_empty() && file.blocks.energy_table.len() != nb {
            return Err(Error::validation(format!(
                "[blocks] energy_table has {} rows, expected {nb}",
                file.blocks.energy_table.len()
            )));
        }
        let blocks = (0..nb)
            .map(|b| Block {
                servers: file.blocks.servers[b],
                server_type: file.blocks.block_type[b],
                rate: file.blocks.r[b],
                serves: file.blocks.serve_mask[b].clone(),
                energy_shape: match file.blocks.energy_table.get(b) {
                    Some(t) if !t.is_empty() => EnergyShape::Tabulated(t.clone()),
                    _ => EnergyShape::Linear,
                },
            })
            .collect();
        let classes = file
            .classes
            .names
            .iter()
            .zip(&file.classes.qos_weight)
            .map(|(n, &w)| JobClass {
                name: n.clone(),
                qos_weight: w,
            })
            .collect();
        let prices = PriceSchedule::new(
            file.prices.energy,
            file.prices.c_plus,
            file.prices.c_minus,
        )?;
        let config = DataCenterConfig::new(blocks, classes, prices)?;
        if file.blocks.types.is_some_and(|i| i != config.num_types()) {
            return Err(Error::validation(format!(
                "[blocks] I = {} but block_type uses {} types",
                file.blocks.types.unwrap_or_default(),
                config.num_types()
            )));
        }
        Ok(ConfigDocument {
            config,
            modes: file.modes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        let cfg = &self.config;
        let linear = cfg
            .blocks
            .iter()
            .all(|b| b.energy_shape == EnergyShape::Linear);
        let file = ConfigFile {
            blocks: BlocksSection {
                count: Some(cfg.num_blocks()),
                types: Some(cfg.num_types()),
                servers: cfg.caps(),
                block_type: cfg.blocks.iter().map(|b| b.server_type).collect(),
                r: cfg.blocks.iter().map(|b| b.rate).collect(),
                serve_mask: cfg.blocks.iter().map(|b| b.serves.clone()).collect(),
                energy_table: if linear {
                    Vec::new()
                } else {
                    cfg.blocks
                        .iter()
                        .map(|b| match &b.energy_shape {
                            EnergyShape::Linear => Vec::new(),
                            EnergyShape::Tabulated(t) => t.clone(),
                        })
                        .collect()
                },
            },
            classes: ClassesSection {
                count: Some(cfg.num_classes()),
                names: cfg.classes.iter().map(|c| c.name.clone()).collect(),
                qos_weight: cfg.qos_weights(),
            },
            prices: PricesSection {
                energy: cfg.prices.energy_table().to_vec(),
                c_plus: cfg.prices.switch_on_table().to_vec(),
                c_minus: cfg.prices.switch_off_table().to_vec(),
            },
            modes: self.modes.clone(),
        };
        toml::to_string(&file).expect("configuration serializes to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with(prices: PriceSchedule, servers: Vec<u32>) -> DataCenterConfig {
        let blocks = servers
            .iter()
            .enumerate()
            .map(|(b, &m)| Block {
                servers: m,
                server_type: b,
                rate: 1.0,
                serves: vec![true],
                energy_shape: EnergyShape::Linear,
            })
            .collect();
        DataCenterConfig::new(
            blocks,
            vec![JobClass {
                name: "c".into(),
                qos_weight: 1.0,
            }],
            prices,
        )
        .unwrap()
    }

    #[test]
    fn energy_of_reference_fleet() {
        let cfg = cfg_with(PriceSchedule::constant(4, 10.0, 3.0, 3.0), vec![30, 50, 6, 3]);
        assert_eq!(energy_idle_cost(0, &[30, 50, 6, 3], &cfg).unwrap(), 890.0);
        assert_eq!(energy_idle_cost(5, &[0, 0, 0, 0], &cfg).unwrap(), 0.0);
        assert!(energy_idle_cost(0, &[31, 0, 0, 0], &cfg).is_err());
    }

    #[test]
    fn energy_with_per_block_prices() {
        let prices =
            PriceSchedule::new(vec![vec![2.0, 5.0]], vec![vec![0.0; 2]], vec![vec![0.0; 2]]).unwrap();
        let cfg = cfg_with(prices, vec![1, 1]);
        assert_eq!(energy_idle_cost(0, &[1, 1], &cfg).unwrap(), 7.0);
    }

    #[test]
    fn switching_examples() {
        let cfg = cfg_with(PriceSchedule::constant(2, 0.0, 3.0, 3.0), vec![5, 5]);
        assert_eq!(switching_cost(0, &[2, 2], &Action(vec![3, 1]), &cfg).unwrap(), 6.0);
        assert_eq!(switching_cost(0, &[2, 2], &Action(vec![2, 2]), &cfg).unwrap(), 0.0);
        let prices = PriceSchedule::new(
            vec![vec![0.0, 0.0]],
            vec![vec![1.0, 0.0]],
            vec![vec![0.0, 4.0]],
        )
        .unwrap();
        let cfg = cfg_with(prices, vec![5, 5]);
        assert_eq!(switching_cost(0, &[0, 5], &Action(vec![3, 2]), &cfg).unwrap(), 15.0);
    }

    #[test]
    fn signed_form_examples() {
        let cfg = cfg_with(PriceSchedule::constant(1, 0.0, 3.0, 3.0), vec![5]);
        let a = Action(vec![3]);
        let down = Orthant::new(vec![-1]).unwrap();
        let up = Orthant::new(vec![1]).unwrap();
        assert_eq!(signed_switch_form(0, &down, &[2], &a, &cfg).unwrap(), -3.0);
        assert_eq!(signed_switch_form(0, &up, &[2], &a, &cfg).unwrap(), 3.0);
        for k in [&down, &up] {
            assert_eq!(signed_switch_form(0, k, &[2], &Action(vec![2]), &cfg).unwrap(), 0.0);
        }
        assert!(Orthant::new(vec![0]).is_err());
        assert!(signed_switch_form(0, &Orthant::new(vec![1, 1]).unwrap(), &[2], &a, &cfg).is_err());
    }

    #[test]
    fn prices_clamp_past_horizon() {
        let prices = PriceSchedule::new(
            vec![vec![1.0], vec![2.0]],
            vec![vec![0.0]],
            vec![vec![0.0]],
        )
        .unwrap();
        assert_eq!(prices.horizon(), 2);
        assert_eq!(prices.energy(1, 0), 2.0);
        assert_eq!(prices.energy(40, 0), 2.0);
        assert!(!prices.is_stationary());
        assert!(PriceSchedule::new(vec![vec![-1.0]], vec![vec![0.0]], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn orthant_ids_are_lexicographic() {
        let all: Vec<_> = Orthant::all(3).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].signs(), &[-1, -1, -1]);
        assert_eq!(all[7].signs(), &[1, 1, 1]);
        for (i, k) in all.iter().enumerate() {
            assert_eq!(k.id(), i);
        }
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let prices = PriceSchedule::constant(1, 1.0, 1.0, 1.0);
        let blk = Block {
            servers: 2,
            server_type: 0,
            rate: 1.0,
            serves: vec![false],
            energy_shape: EnergyShape::Linear,
        };
        let class = JobClass {
            name: "c".into(),
            qos_weight: 1.0,
        };
        assert!(DataCenterConfig::new(vec![blk.clone()], vec![class.clone()], prices.clone()).is_err());
        let concave = Block {
            serves: vec![true],
            energy_shape: EnergyShape::Tabulated(vec![0.0, 2.0, 3.0]),
            ..blk.clone()
        };
        assert!(DataCenterConfig::new(vec![concave], vec![class.clone()], prices.clone()).is_err());
        let a = Block {
            serves: vec![true],
            ..blk.clone()
        };
        let b = Block {
            rate: 2.0,
            ..a.clone()
        };
        let err = DataCenterConfig::new(
            vec![a, b],
            vec![class],
            PriceSchedule::constant(2, 1.0, 1.0, 1.0),
        );
        assert!(err.is_err());
    }

    #[test]
    fn components_follow_serve_mask() {
        let mk = |serves: Vec<bool>, ty| Block {
            servers: 1,
            server_type: ty,
            rate: 1.0,
            serves,
            energy_shape: EnergyShape::Linear,
        };
        let cfg = DataCenterConfig::new(
            vec![
                mk(vec![true, false, false], 0),
                mk(vec![false, false, true], 1),
                mk(vec![true, true, false], 2),
            ],
            (0..3)
                .map(|j| JobClass {
                    name: format!("c{j}"),
                    qos_weight: 1.0,
                })
                .collect(),
            PriceSchedule::constant(3, 1.0, 1.0, 1.0),
        )
        .unwrap();
        let comps = cfg.components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].blocks, vec![0, 2]);
        assert_eq!(comps[0].classes, vec![0, 1]);
        assert_eq!(comps[1].blocks, vec![1]);
        assert_eq!(comps[1].classes, vec![2]);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = cfg_with(PriceSchedule::constant(2, 10.0, 3.0, 3.0), vec![3, 4]);
        let doc = ConfigDocument {
            config: cfg,
            modes: ModesSection {
                count: Some(3),
                model: None,
            },
        };
        let text = doc.to_toml();
        let back = ConfigDocument::parse(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn toml_parse_errors_carry_line() {
        let text = "[blocks]\nM = [1]\nblock_type = [0]\nr = [1.0]\nserve_mask = [[true]]\nbogus = 3\n";
        match ConfigDocument::parse(text, Path::new("c.toml")) {
            Err(Error::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
