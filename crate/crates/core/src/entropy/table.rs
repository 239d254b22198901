//! Per-channel PMF lookup tables and the symbol coder built on them.

use serde::{Deserialize, Serialize};

use super::prior::FactorizedPrior;
use super::range::{RangeDecoder, RangeEncoder, FREQ_TOTAL};
use super::TABLE_PROB_FLOOR;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTable {
    /// Smallest and largest codable integer.
    pub low: i64,
    pub high: i64,
    /// Probabilities after flooring and renormalization.
    pub probs: Vec<f64>,
    /// Quantized frequencies summing to 2^16, each ≥ 1.
    pub freqs: Vec<u32>,
    #[serde(skip)]
    cum: Vec<u32>,
}

impl ChannelTable {
    /// Builds a table from probabilities over `[low, low + probs.len())`.
    pub fn from_probs(low: i64, probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        if n == 0 || n > FREQ_TOTAL as usize {
            return Err(Error::Model(format!("table width {n} outside [1, 65536]")));
        }
        let floored: Vec<f64> = probs.iter().map(|&p| p.max(TABLE_PROB_FLOOR)).collect();
        let z: f64 = floored.iter().sum();
        let probs: Vec<f64> = floored.iter().map(|p| p / z).collect();
        let freqs = quantize_freqs(&probs);
        Ok(Self::assemble(low, low + n as i64 - 1, probs, freqs))
    }

    fn assemble(low: i64, high: i64, probs: Vec<f64>, freqs: Vec<u32>) -> Self {
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0;
        cum.push(0);
        for &f in &freqs {
            acc += f;
            cum.push(acc);
        }
        Self {
            low,
            high,
            probs,
            freqs,
            cum,
        }
    }

    /// Restores the cumulative table after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        if self.freqs.len() as i64 != self.high - self.low + 1 || self.freqs.iter().any(|&f| f == 0) {
            return Err(Error::Format("inconsistent entropy table".into()));
        }
        if self.freqs.iter().map(|&f| f as u64).sum::<u64>() != FREQ_TOTAL as u64 {
            return Err(Error::Format("entropy table frequencies do not sum to 2^16".into()));
        }
        Ok(Self::assemble(self.low, self.high, self.probs, self.freqs))
    }

    pub fn width(&self) -> usize {
        self.freqs.len()
    }

    pub fn clamp(&self, v: i64) -> i64 {
        v.clamp(self.low, self.high)
    }

    pub fn prob(&self, v: i64) -> f64 {
        self.probs[(v - self.low) as usize]
    }

    fn encode(&self, enc: &mut RangeEncoder, v: i64) {
        let j = (v - self.low) as usize;
        enc.encode(self.cum[j], self.freqs[j]);
    }

    fn decode(&self, dec: &mut RangeDecoder<'_>) -> Result<i64> {
        let t = dec.target()?;
        // Last j with cum[j] <= t.
        let j = self.cum.partition_point(|&c| c <= t) - 1;
        if j >= self.freqs.len() {
            return Err(Error::CorruptStream("range decoder target beyond table".into()));
        }
        dec.consume(self.cum[j], self.freqs[j])?;
        Ok(self.low + j as i64)
    }
}

/// Rounds probabilities to integer frequencies with total 2^16, each ≥ 1;
/// the rounding residue is absorbed by the largest entries, lowest index
/// first.
fn quantize_freqs(probs: &[f64]) -> Vec<u32> {
    let total = FREQ_TOTAL as i64;
    let mut f: Vec<i64> = probs.iter().map(|&p| ((p * total as f64).round() as i64).max(1)).collect();
    let mut diff = total - f.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[b].cmp(&f[a]).then(a.cmp(&b)));
    while diff != 0 {
        let mut moved = false;
        for &i in &order {
            if diff > 0 {
                f[i] += 1;
                diff -= 1;
                moved = true;
            } else if diff < 0 && f[i] > 1 {
                f[i] -= 1;
                diff += 1;
                moved = true;
            }
            if diff == 0 {
                break;
            }
        }
        assert!(moved, "cannot fit frequencies into 2^16");
    }
    f.into_iter().map(|v| v as u32).collect()
}

/// One table per latent channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTable {
    pub channels: Vec<ChannelTable>,
}

/// Result of coding one symbol array.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedSymbols {
    pub bytes: Vec<u8>,
    /// Number of symbols that fell outside the table support and were
    /// clamped to the nearest edge.
    pub clamped: usize,
}

impl EntropyTable {
    /// Support per channel is the observed integer range widened by 2 on
    /// each side; mass beyond it is folded into the edge entries. `latents`
    /// is channel-interleaved (element `i` belongs to channel `i % V`).
    pub fn build(model: &FactorizedPrior, latents: &[i64]) -> Result<Self> {
        let v = model.channels;
        if latents.len() < v {
            return Err(Error::Statistics("no latents to establish table support".into()));
        }
        let channels = (0..v)
            .map(|c| {
                let vals = latents.iter().skip(c).step_by(v);
                let lo = vals.clone().min().unwrap() - 2;
                let hi = vals.max().unwrap() + 2;
                let mut probs: Vec<f64> = (lo..=hi).map(|k| model.pmf(c, k as f64)).collect();
                let n = probs.len();
                probs[0] = model.cdf(c, lo as f64 + 0.5);
                probs[n - 1] = 1.0 - model.cdf(c, hi as f64 - 0.5);
                if n == 1 {
                    probs[0] = 1.0;
                }
                ChannelTable::from_probs(lo, &probs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels })
    }

    pub fn rebuild(self) -> Result<Self> {
        Ok(Self {
            channels: self.channels.into_iter().map(ChannelTable::rebuild).collect::<Result<_>>()?,
        })
    }

    /// `−Σ log2 C[c, s]` for channel-interleaved symbols (after clamping).
    pub fn ideal_bits(&self, symbols: &[i64]) -> f64 {
        let v = self.channels.len();
        symbols
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let t = &self.channels[i % v];
                -t.prob(t.clamp(s)).log2()
            })
            .sum()
    }

    pub fn encode(&self, symbols: &[i64]) -> CodedSymbols {
        let v = self.channels.len();
        let mut enc = RangeEncoder::new();
        let mut clamped = 0;
        for (i, &s) in symbols.iter().enumerate() {
            let t = &self.channels[i % v];
            let c = t.clamp(s);
            if c != s {
                clamped += 1;
            }
            t.encode(&mut enc, c);
        }
        if clamped > 0 {
            log::warn!("{clamped} latent symbols outside the table support were clamped");
        }
        CodedSymbols {
            bytes: enc.finish(),
            clamped,
        }
    }

    pub fn decode(&self, bytes: &[u8], count: usize) -> Result<Vec<i64>> {
        let v = self.channels.len();
        let mut dec = RangeDecoder::new(bytes);
        (0..count).map(|i| self.channels[i % v].decode(&mut dec)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frequency_quantization() {
        let f = quantize_freqs(&[0.5, 0.25, 0.25]);
        assert_eq!(f, vec![32768, 16384, 16384]);
        let f = quantize_freqs(&[1e-9, 1.0 - 2e-9, 1e-9]);
        assert_eq!(f, vec![1, 65534, 1]);
        let t = ChannelTable::from_probs(-1, &[0.2, 0.3, 0.5]).unwrap();
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t.freqs.iter().sum::<u32>(), 65536);
    }

    #[test]
    fn single_symbol_alphabet_costs_nothing() {
        let table = EntropyTable {
            channels: vec![ChannelTable::from_probs(3, &[1.0]).unwrap()],
        };
        let symbols = vec![3i64; 100_000];
        let coded = table.encode(&symbols);
        assert!(coded.bytes.len() * 8 <= 40);
        assert_eq!(table.decode(&coded.bytes, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn out_of_support_symbols_are_clamped() {
        let table = EntropyTable {
            channels: vec![ChannelTable::from_probs(0, &[0.25; 4]).unwrap()],
        };
        let coded = table.encode(&[-5, 1, 9]);
        assert_eq!(coded.clamped, 2);
        assert_eq!(table.decode(&coded.bytes, 3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn uniform_256_ary_length() {
        let table = EntropyTable {
            channels: vec![ChannelTable::from_probs(0, &[1.0 / 256.0; 256]).unwrap()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let symbols: Vec<i64> = (0..1_000_000).map(|_| rng.gen_range(0..256)).collect();
        let coded = table.encode(&symbols);
        let bits = coded.bytes.len() * 8;
        assert!((8_000_000..=8_000_200).contains(&bits), "{bits}");
        assert_eq!(table.decode(&coded.bytes, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn two_channel_interleaving() {
        let table = EntropyTable {
            channels: vec![
                ChannelTable::from_probs(-2, &[0.1, 0.2, 0.4, 0.2, 0.1]).unwrap(),
                ChannelTable::from_probs(10, &[0.9, 0.1]).unwrap(),
            ],
        };
        let symbols = vec![0, 10, -2, 11, 2, 10, 1, 10];
        let coded = table.encode(&symbols);
        assert_eq!(table.decode(&coded.bytes, symbols.len()).unwrap(), symbols);
        let json = serde_json::to_string(&table).unwrap();
        let back: EntropyTable = serde_json::from_str(&json).unwrap();
        let back = back.rebuild().unwrap();
        assert_eq!(back.decode(&coded.bytes, symbols.len()).unwrap(), symbols);
    }
}
