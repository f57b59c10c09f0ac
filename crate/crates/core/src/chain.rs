//! Compact weighted chains.
//!
//! A compact chain stores each uniquely visited state once, together with the
//! number of consecutive Markov steps the chain stayed there. The verbose
//! (Markov) chain is recovered by repeating every row `weight` times.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{ByteReader, ByteWriter};
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRow {
    /// Contributing worker, 1-based.
    pub process_id: u32,
    /// Delayed-rejection stage at which the state was accepted.
    pub dr_stage: u32,
    pub mean_acceptance_rate: f64,
    /// Adaptation measure recorded with this row, 0 when none.
    pub adaptation_measure: f64,
    /// Running burn-in estimate, as a verbose index.
    pub burnin_location: u64,
    pub weight: u64,
    pub log_func: f64,
    pub state: Vec<f64>,
}

impl ChainRow {
    /// A row with default running columns.
    pub fn new(state: Vec<f64>, log_func: f64, weight: u64) -> Self {
        Self {
            process_id: 1,
            dr_stage: 0,
            mean_acceptance_rate: 1.0,
            adaptation_measure: 0.0,
            burnin_location: 0,
            weight,
            log_func,
            state,
        }
    }

    pub fn encode(&self, w: &mut ByteWriter) {
        w.u32(self.process_id);
        w.u32(self.dr_stage);
        w.f64(self.mean_acceptance_rate);
        w.f64(self.adaptation_measure);
        w.u64(self.burnin_location);
        w.u64(self.weight);
        w.f64(self.log_func);
        w.f64s(&self.state);
    }

    pub fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        Ok(Self {
            process_id: r.u32()?,
            dr_stage: r.u32()?,
            mean_acceptance_rate: r.f64()?,
            adaptation_measure: r.f64()?,
            burnin_location: r.u64()?,
            weight: r.u64()?,
            log_func: r.f64()?,
            state: r.f64s()?,
        })
    }
}

pub fn default_variable_names(dimension: usize) -> Vec<String> {
    (1..=dimension).map(|i| format!("SampleVariable{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactChain {
    dimension: usize,
    rows: Vec<ChainRow>,
    variable_names: Vec<String>,
}

impl CompactChain {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, rows: Vec::new(), variable_names: default_variable_names(dimension) }
    }

    pub fn with_variable_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: names.len() });
        }
        self.variable_names = names;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> &[ChainRow] {
        &self.rows
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&ChainRow> {
        self.rows.last()
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut ChainRow> {
        self.rows.last_mut()
    }

    pub fn verbose_len(&self) -> u64 {
        self.rows.iter().map(|r| r.weight).sum()
    }

    /// Appends `row`, or folds it into the last row when the states are
    /// bitwise equal. Returns whether a new row was appended.
    pub fn append_or_increment(&mut self, row: ChainRow) -> Result<bool> {
        if row.state.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: row.state.len() });
        }
        if let Some(last) = self.rows.last_mut() {
            let same = last.state.iter().zip(&row.state).all(|(a, b)| a.to_bits() == b.to_bits());
            if same {
                last.weight += row.weight;
                last.mean_acceptance_rate = row.mean_acceptance_rate;
                last.burnin_location = row.burnin_location;
                return Ok(false);
            }
        }
        self.rows.push(row);
        Ok(true)
    }

    /// Pushes a row without merging; used when reloading chain files.
    pub fn push_unchecked(&mut self, row: ChainRow) -> Result<()> {
        if row.state.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: row.state.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Iterates the verbose chain as `(log_func, state)` pairs.
    pub fn verbose_iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.rows
            .iter()
            .flat_map(|r| core::iter::repeat((r.log_func, r.state.as_slice())).take(r.weight as usize))
    }

    pub fn to_verbose(&self) -> Vec<(f64, Vec<f64>)> {
        self.verbose_iter().map(|(l, s)| (l, s.to_vec())).collect()
    }

    /// Rebuilds a compact chain from a verbose sequence.
    pub fn from_verbose<'a, I>(dimension: usize, verbose: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, &'a [f64])>,
    {
        let mut chain = Self::new(dimension);
        for (l, s) in verbose {
            chain.append_or_increment(ChainRow::new(s.to_vec(), l, 1))?;
        }
        Ok(chain)
    }

    /// Weighted moments over verbose indices `>= from`.
    pub fn chain_stats(&self, from: u64) -> Result<ChainStats> {
        let mut moments = WeightedMoments::new(self.dimension);
        let mut offset = 0u64;
        let mut rows_in_range = 0u64;
        for r in &self.rows {
            let end = offset + r.weight;
            if end > from {
                let w = end - from.max(offset);
                moments.add(&r.state, w as f64);
                rows_in_range += 1;
            }
            offset = end;
        }
        if moments.total_weight() == 0.0 {
            return Err(Error::EmptyRange);
        }
        Ok(ChainStats {
            mean: moments.mean().to_vec(),
            covariance: moments.covariance(),
            acceptance_rate: rows_in_range as f64 / moments.total_weight(),
        })
    }

    /// Verbose length over compact length.
    pub fn compression_factor(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.verbose_len() as f64 / self.rows.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub mean: Vec<f64>,
    /// Population-normalized (divided by total weight).
    pub covariance: Matrix,
    pub acceptance_rate: f64,
}

/// Streaming weighted mean and co-moment accumulator (West's algorithm).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    total: f64,
    mean: Vec<f64>,
    comoment: Matrix,
}

impl WeightedMoments {
    pub fn new(dimension: usize) -> Self {
        Self { total: 0.0, mean: vec![0.0; dimension], comoment: Matrix::zeros(dimension) }
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn add(&mut self, x: &[f64], weight: f64) {
        let d = self.mean.len();
        self.total += weight;
        let ratio = weight / self.total;
        let mut before = [0.0f64; 16];
        let mut after = [0.0f64; 16];
        if d > before.len() {
            let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
            for i in 0..d {
                self.mean[i] += ratio * delta[i];
            }
            let delta2: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
            self.rank_one(&delta, &delta2, weight);
            return;
        }
        for i in 0..d {
            before[i] = x[i] - self.mean[i];
            self.mean[i] += ratio * before[i];
            after[i] = x[i] - self.mean[i];
        }
        self.rank_one(&before[..d], &after[..d], weight);
    }

    fn rank_one(&mut self, before: &[f64], after: &[f64], weight: f64) {
        let d = before.len();
        for i in 0..d {
            for j in 0..=i {
                let v = self.comoment[(i, j)] + weight * before[i] * after[j];
                self.comoment[(i, j)] = v;
                self.comoment[(j, i)] = v;
            }
        }
    }

    /// Population covariance; zero matrix when empty.
    pub fn covariance(&self) -> Matrix {
        if self.total == 0.0 {
            return Matrix::zeros(self.mean.len());
        }
        self.comoment.scaled(1.0 / self.total)
    }

    pub fn encode(&self, w: &mut ByteWriter) {
        w.f64(self.total);
        w.f64s(&self.mean);
        w.f64s(self.comoment.as_slice());
    }

    pub fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let total = r.f64()?;
        let mean = r.f64s()?;
        let comoment =
            Matrix::from_row_major(mean.len(), r.f64s()?).map_err(|_| Error::Decode("moment matrix"))?;
        Ok(Self { total, mean, comoment })
    }
}
