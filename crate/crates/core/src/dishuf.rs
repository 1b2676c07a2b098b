// SPDX-License-Identifier: Apache-2.0

//! Distributed shuffling: every agent ends up with a perturbation
//! `Delta_i = sum_j a_ij a_ji (theta_j - theta_i)` (noisy data) computed
//! through Paillier ciphertexts, so that the perturbations cancel exactly
//! across the network while no agent sees a neighbour's data in the clear.
//!
//! All protocol arithmetic runs on scaled integers (`value * 2^frac_bits`), so
//! the cancellation is exact before any decoding.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::graph::Network;
use crate::paillier::{Ciphertext, FixedPointCodec, PaillierError, PaillierKeypair, PublicKey};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiShufError {
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("agent {agent}: scaled difference needs {needed_bits} bits, key offers {available_bits}; raise the key size or lower a_bar")]
    Overflow {
        agent: usize,
        needed_bits: u64,
        available_bits: u64,
    },
    #[error("expected {expected} data vectors, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("data vectors disagree in length")]
    Ragged,
    #[error("a_bar must be at least 10, got {0}")]
    ScalarBound(u64),
    #[error("missing scalar for directed edge {0} -> {1}")]
    MissingScalar(usize, usize),
}

/// Directed-edge multipliers `a_{i -> j}`.
pub type EdgeScalars = BTreeMap<(usize, usize), u64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiShufParams {
    pub a_bar: u64,
    pub key_bits: u64,
    pub frac_bits: u32,
    pub record_transcript: bool,
}

impl Default for DiShufParams {
    fn default() -> Self {
        Self {
            a_bar: 100,
            key_bits: crate::paillier::DEFAULT_KEY_BITS,
            frac_bits: crate::paillier::DEFAULT_FRAC_BITS,
            record_transcript: false,
        }
    }
}

/// Smallest integer at least `a_bar / sqrt(2)`.
pub fn scalar_floor(a_bar: u64) -> u64 {
    let mut lo = (a_bar as f64 / std::f64::consts::SQRT_2).floor() as u64;
    while 2 * (lo as u128) * (lo as u128) < (a_bar as u128) * (a_bar as u128) {
        lo += 1;
    }
    while lo > 0 && 2 * ((lo - 1) as u128) * ((lo - 1) as u128) >= (a_bar as u128) * (a_bar as u128) {
        lo -= 1;
    }
    lo
}

/// Uniform `a_{i -> j}` and `a_{j -> i}` on `[ceil(a_bar / sqrt 2), a_bar]`
/// for every edge, in sorted edge order.
pub fn sample_scalars<R: Rng + ?Sized>(net: &Network, a_bar: u64, rng: &mut R) -> EdgeScalars {
    let lo = scalar_floor(a_bar);
    let mut out = EdgeScalars::new();
    for &(i, j, _) in net.edges() {
        out.insert((i, j), rng.random_range(lo..=a_bar));
        out.insert((j, i), rng.random_range(lo..=a_bar));
    }
    out
}

/// `round(z * e^{ln_sigma} * 2^frac_bits)` for standard-normal `z`, valid far
/// beyond the `f64` range of `e^{ln_sigma}`.
pub fn scaled_gaussian(z: f64, ln_sigma: f64, frac_bits: u32) -> BigInt {
    let log2 = ln_sigma / std::f64::consts::LN_2 + frac_bits as f64;
    if log2 < 900.0 {
        return BigInt::from_f64((z * log2.exp2()).round()).unwrap_or_default();
    }
    let whole = log2.floor();
    let mantissa = z * (log2 - whole).exp2() * 2f64.powi(60);
    BigInt::from_f64(mantissa.round()).unwrap_or_default() << (whole as usize - 60)
}

/// What one agent observed, for the privacy audit.
#[derive(Clone, Debug, PartialEq)]
pub enum TranscriptEntry {
    /// Public key received from a neighbour.
    Key { from: usize, key_id: u64 },
    /// A neighbour's encrypted negated data, under the neighbour's key.
    Ciphertexts { from: usize, key_id: u64, digests: Vec<[u8; 32]> },
    /// Scaled encrypted differences sent back under this agent's key.
    Scaled { from: usize, key_id: u64, digests: Vec<[u8; 32]> },
    /// Decryption of a `Scaled` entry: `a_{from -> self} (theta_from - theta_self)`.
    Decrypted { from: usize, scaled_values: Vec<BigInt> },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgentTranscript {
    pub own_key_id: u64,
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Clone, Debug)]
pub struct DiShufOutput {
    frac_bits: u32,
    noisy: Vec<Vec<BigInt>>,
    deltas: Vec<Vec<BigInt>>,
    scalars: EdgeScalars,
    transcripts: Option<Vec<AgentTranscript>>,
}

impl DiShufOutput {
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn n(&self) -> usize {
        self.deltas.len()
    }

    /// `Delta_i` as scaled integers.
    pub fn delta_scaled(&self, i: usize) -> &[BigInt] {
        &self.deltas[i]
    }

    pub fn delta<T: Scalar>(&self, i: usize) -> Vec<T> {
        self.deltas[i]
            .iter()
            .map(|v| T::from_scaled_int(v, self.frac_bits))
            .collect()
    }

    pub fn delta_exact(&self, i: usize) -> Vec<BigRational> {
        self.delta(i)
    }

    /// Quantized noisy data `theta_i + eta_i` as scaled integers.
    pub fn noisy_scaled(&self, i: usize) -> &[BigInt] {
        &self.noisy[i]
    }

    pub fn noisy_exact(&self, i: usize) -> Vec<BigRational> {
        self.noisy[i]
            .iter()
            .map(|v| BigRational::new(v.clone(), BigInt::one() << self.frac_bits))
            .collect()
    }

    pub fn scalars(&self) -> &EdgeScalars {
        &self.scalars
    }

    pub fn transcripts(&self) -> Option<&[AgentTranscript]> {
        self.transcripts.as_deref()
    }

    /// Entrywise `sum_i Delta_i` in the scaled-integer domain.
    pub fn sum_scaled(&self) -> Vec<BigInt> {
        let dim = self.deltas.first().map_or(0, Vec::len);
        (0..dim)
            .map(|k| self.deltas.iter().map(|d| &d[k]).sum())
            .collect()
    }

    /// Human-readable transcript dump.
    pub fn dump_transcripts(&self) -> String {
        let mut out = String::new();
        let Some(ts) = &self.transcripts else {
            return out;
        };
        for (i, t) in ts.iter().enumerate() {
            let _ = writeln!(out, "agent {i} own_key={:016x}", t.own_key_id);
            for e in &t.entries {
                let _ = match e {
                    TranscriptEntry::Key { from, key_id } => writeln!(out, "  key from={from} id={key_id:016x}"),
                    TranscriptEntry::Ciphertexts { from, key_id, digests } => {
                        writeln!(out, "  ciphertexts from={from} key={key_id:016x} sha256={}", hex_list(digests))
                    }
                    TranscriptEntry::Scaled { from, key_id, digests } => {
                        writeln!(out, "  scaled from={from} key={key_id:016x} sha256={}", hex_list(digests))
                    }
                    TranscriptEntry::Decrypted { from, scaled_values } => {
                        let vals: Vec<String> = scaled_values
                            .iter()
                            .map(|v| format!("{:e}", f64::from_scaled_int(v, self.frac_bits)))
                            .collect();
                        writeln!(out, "  decrypted from={from} values={}", vals.join(","))
                    }
                };
            }
        }
        out
    }
}

fn hex_list(digests: &[[u8; 32]]) -> String {
    digests
        .iter()
        .map(|d| d[..8].iter().map(|b| format!("{b:02x}")).collect::<String>())
        .collect::<Vec<_>>()
        .join(",")
}

/// Full protocol on real data: draws `eta_i ~ N(0, sigma^2)` per entry
/// (`ln_sigma_eta == None` disables it), the edge scalars, one keypair per
/// agent, and runs the encrypted exchange.
pub fn run_dishuf<R: Rng + ?Sized>(
    net: &Network,
    thetas: &[Vec<f64>],
    ln_sigma_eta: Option<f64>,
    params: &DiShufParams,
    rng: &mut R,
) -> Result<DiShufOutput, DiShufError> {
    if params.a_bar < 10 {
        return Err(DiShufError::ScalarBound(params.a_bar));
    }
    check_shape(net, thetas)?;
    let probe = FixedPointCodec::new(BigUint::one() << 4096u32, params.frac_bits);
    let mut noisy = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let row = theta
            .iter()
            .map(|&x| {
                let base = probe.quantize(x)?;
                Ok(match ln_sigma_eta {
                    Some(ls) => base + scaled_gaussian(rng.sample(StandardNormal), ls, params.frac_bits),
                    None => base,
                })
            })
            .collect::<Result<Vec<_>, PaillierError>>()?;
        noisy.push(row);
    }
    let scalars = sample_scalars(net, params.a_bar, rng);
    run_dishuf_scaled(net, noisy, scalars, params, rng)
}

fn check_shape<T>(net: &Network, data: &[Vec<T>]) -> Result<(), DiShufError> {
    if data.len() != net.n() {
        return Err(DiShufError::AgentCount {
            expected: net.n(),
            got: data.len(),
        });
    }
    if data.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(DiShufError::Ragged);
    }
    Ok(())
}

/// Protocol on given noisy data and scalars (both supplied by the caller).
pub fn run_dishuf_with_scalars<R: Rng + ?Sized>(
    net: &Network,
    theta_bars: &[Vec<f64>],
    scalars: EdgeScalars,
    params: &DiShufParams,
    rng: &mut R,
) -> Result<DiShufOutput, DiShufError> {
    check_shape(net, theta_bars)?;
    let probe = FixedPointCodec::new(BigUint::one() << 4096u32, params.frac_bits);
    let noisy = theta_bars
        .iter()
        .map(|row| row.iter().map(|&x| probe.quantize(x)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    run_dishuf_scaled(net, noisy, scalars, params, rng)
}

struct Agent {
    keys: PaillierKeypair,
    codec: FixedPointCodec,
}

fn encrypt_vec<R: Rng + ?Sized>(
    pk: &PublicKey,
    codec: &FixedPointCodec,
    values: impl Iterator<Item = BigInt>,
    rng: &mut R,
) -> Result<Vec<Ciphertext>, PaillierError> {
    values.map(|v| pk.encrypt(&codec.encode_int(&v)?, rng)).collect()
}

fn run_dishuf_scaled<R: Rng + ?Sized>(
    net: &Network,
    noisy: Vec<Vec<BigInt>>,
    scalars: EdgeScalars,
    params: &DiShufParams,
    rng: &mut R,
) -> Result<DiShufOutput, DiShufError> {
    let n = net.n();
    let dim = noisy.first().map_or(0, Vec::len);
    for &(i, j, _) in net.edges() {
        for key in [(i, j), (j, i)] {
            if !scalars.contains_key(&key) {
                return Err(DiShufError::MissingScalar(key.0, key.1));
            }
        }
    }
    // Step 1: one keypair per agent.
    let agents: Vec<Agent> = (0..n)
        .map(|_| {
            let keys = PaillierKeypair::generate(params.key_bits, rng)?;
            let codec = FixedPointCodec::for_key(keys.public(), params.frac_bits);
            Ok(Agent { keys, codec })
        })
        .collect::<Result<_, PaillierError>>()?;
    for (i, (a, row)) in agents.iter().zip(&noisy).enumerate() {
        if let Some(v) = row.iter().find(|v| v.magnitude() > a.codec.limit()) {
            return Err(DiShufError::Overflow {
                agent: i,
                needed_bits: v.magnitude().bits() + 2,
                available_bits: a.keys.public().bits(),
            });
        }
    }
    let mut transcripts = params.record_transcript.then(|| {
        agents
            .iter()
            .map(|a| AgentTranscript {
                own_key_id: a.keys.public().id(),
                entries: Vec::new(),
            })
            .collect::<Vec<_>>()
    });
    // Step 2: E_i(-theta_i) under i's own key, broadcast with the public key.
    let neg_own: Vec<Vec<Ciphertext>> = agents
        .iter()
        .zip(&noisy)
        .map(|(a, row)| encrypt_vec(a.keys.public(), &a.codec, row.iter().map(|v| -v), rng))
        .collect::<Result<_, _>>()?;
    if let Some(ts) = transcripts.as_mut() {
        for i in 0..n {
            for &(j, _) in net.neighbors(i) {
                let pk = agents[j].keys.public();
                ts[i].entries.push(TranscriptEntry::Key { from: j, key_id: pk.id() });
                ts[i].entries.push(TranscriptEntry::Ciphertexts {
                    from: j,
                    key_id: pk.id(),
                    digests: neg_own[j].iter().map(Ciphertext::digest).collect(),
                });
            }
        }
    }
    let mut deltas = vec![vec![BigInt::zero(); dim]; n];
    // Steps 3-6, edge by edge in sorted order, both directions.
    for &(u, v, _) in net.edges() {
        for (i, j) in [(u, v), (v, u)] {
            // Agent i builds c_ij = E_j(theta_i) E_j(-theta_j), scales by a_{i->j}.
            let pk_j = agents[j].keys.public();
            let codec_j = &agents[j].codec;
            let a_ij = scalars[&(i, j)];
            let a_ji = scalars[&(j, i)];
            let a_ij_big = BigUint::from(a_ij);
            let mut scaled_ct = Vec::with_capacity(dim);
            for k in 0..dim {
                // Shadow check: the decrypted value must stay inside the codec range.
                let shadow = (&noisy[i][k] - &noisy[j][k]) * BigInt::from(a_ij);
                if shadow.magnitude() > codec_j.limit() {
                    return Err(DiShufError::Overflow {
                        agent: j,
                        needed_bits: shadow.magnitude().bits() + 2,
                        available_bits: pk_j.bits(),
                    });
                }
                let own = pk_j.encrypt(&codec_j.encode_int(&noisy[i][k])?, rng)?;
                let c = pk_j.hom_add(&own, &neg_own[j][k])?;
                scaled_ct.push(pk_j.hom_scale(&c, &a_ij_big)?);
            }
            // Agent j decrypts a_{i->j}(theta_i - theta_j) and multiplies by a_{j->i}.
            let decrypted: Vec<BigInt> = scaled_ct
                .iter()
                .map(|c| Ok(codec_j.decode_int(&agents[j].keys.decrypt(c)?)))
                .collect::<Result<_, PaillierError>>()?;
            for (acc, d) in deltas[j].iter_mut().zip(&decrypted) {
                *acc += d * BigInt::from(a_ji);
            }
            if let Some(ts) = transcripts.as_mut() {
                ts[j].entries.push(TranscriptEntry::Scaled {
                    from: i,
                    key_id: pk_j.id(),
                    digests: scaled_ct.iter().map(Ciphertext::digest).collect(),
                });
                ts[j].entries.push(TranscriptEntry::Decrypted {
                    from: i,
                    scaled_values: decrypted,
                });
            }
        }
    }
    Ok(DiShufOutput {
        frac_bits: params.frac_bits,
        noisy,
        deltas,
        scalars,
        transcripts,
    })
}

/// Reference computation `Delta_i = sum_j a_ij a_ji (theta_j - theta_i)`.
pub fn plaintext_dishuf_oracle<T: Scalar>(net: &Network, theta_bars: &[Vec<T>], scalars: &EdgeScalars) -> Vec<Vec<T>> {
    let dim = theta_bars.first().map_or(0, Vec::len);
    let mut out = vec![vec![T::zero(); dim]; net.n()];
    for &(i, j, _) in net.edges() {
        let w = T::from_f64((scalars[&(i, j)] * scalars[&(j, i)]) as f64);
        for k in 0..dim {
            let contrib = w.clone() * (theta_bars[j][k].clone() - theta_bars[i][k].clone());
            out[i][k] = out[i][k].clone() + contrib.clone();
            out[j][k] = out[j][k].clone() - contrib;
        }
    }
    out
}

/// Checks that no agent's view contains a neighbour's data in the clear and
/// that every ciphertext it holds is under a key it is supposed to hold.
pub fn audit_transcripts(net: &Network, out: &DiShufOutput) -> Result<(), String> {
    let ts = out.transcripts().ok_or("no transcript was recorded")?;
    for (i, t) in ts.iter().enumerate() {
        let neighbours: Vec<usize> = net.neighbors(i).iter().map(|&(j, _)| j).collect();
        for e in &t.entries {
            match e {
                TranscriptEntry::Key { from, key_id } | TranscriptEntry::Ciphertexts { from, key_id, .. } => {
                    if !neighbours.contains(from) {
                        return Err(format!("agent {i} heard from non-neighbour {from}"));
                    }
                    if *key_id == t.own_key_id {
                        return Err(format!("agent {i} holds a neighbour ciphertext under its own key"));
                    }
                }
                TranscriptEntry::Scaled { key_id, .. } => {
                    if *key_id != t.own_key_id {
                        return Err(format!("agent {i} received scaled ciphertexts under a foreign key"));
                    }
                }
                TranscriptEntry::Decrypted { from, scaled_values } => {
                    let raw = out.noisy_scaled(*from);
                    if scaled_values.iter().zip(raw).any(|(v, r)| v == r && !r.is_zero()) {
                        return Err(format!("agent {i} decrypted raw data of agent {from}"));
                    }
                    // Must equal a_{from -> i} (theta_from - theta_i) for the hidden scalar.
                    let a = BigInt::from(out.scalars()[&(*from, i)]);
                    let mine = out.noisy_scaled(i);
                    let consistent = scaled_values
                        .iter()
                        .zip(raw.iter().zip(mine))
                        .all(|(v, (r, m))| *v == (r - m) * &a);
                    if !consistent {
                        return Err(format!("agent {i} decryption from {from} is not a scaled difference"));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Largest `|v|` over all scaled differences an agent will decrypt, in bits.
pub fn required_key_bits(noisy_bits: u64, a_bar: u64) -> u64 {
    noisy_bits + 1 + (64 - a_bar.leading_zeros() as u64) + 3
}

/// Smallest key size (a multiple of 256) that can carry noise of scale
/// `e^{ln_sigma}` through the protocol with a `z`-sigma margin.
pub fn key_bits_for(ln_sigma: f64, data_bound: f64, a_bar: u64, frac_bits: u32, z: f64) -> u64 {
    let mag = (ln_sigma + z.ln()).max(data_bound.max(1.0).ln()) / std::f64::consts::LN_2 + 1.0;
    let bits = required_key_bits(mag.ceil() as u64 + frac_bits as u64, a_bar);
    bits.div_ceil(256).max(1) * 256
}

impl DiShufOutput {
    /// Sign-aware check that no scaled value was wrapped.
    pub fn max_delta_bits(&self) -> u64 {
        self.deltas
            .iter()
            .flatten()
            .map(|v| if v.sign() == Sign::NoSign { 0 } else { v.abs().bits() })
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params() -> DiShufParams {
        DiShufParams {
            key_bits: 256,
            ..DiShufParams::default()
        }
    }

    #[test]
    fn floor_of_scalar_range() {
        assert_eq!(scalar_floor(100), 71);
        assert_eq!(scalar_floor(10), 8);
        assert_eq!(scalar_floor(2), 2);
        for a in 10..2000u64 {
            let lo = scalar_floor(a);
            assert!(2 * lo * lo >= a * a && 2 * (lo - 1) * (lo - 1) < a * a);
        }
    }

    #[test]
    fn unit_scalars_on_triangle() {
        let net = build_cycle(3, 0.3).unwrap();
        let scalars: EdgeScalars = [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)]
            .into_iter()
            .map(|k| (k, 1))
            .collect();
        let data = vec![vec![1.0], vec![2.0], vec![4.0]];
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let out = run_dishuf_with_scalars(&net, &data, scalars.clone(), &params(), &mut rng).unwrap();
        let got: Vec<f64> = (0..3).map(|i| out.delta::<f64>(i)[0]).collect();
        assert_eq!(got, vec![4.0, 1.0, -5.0]);
        let oracle = plaintext_dishuf_oracle(&net, &data, &scalars);
        assert_eq!(oracle, vec![vec![4.0], vec![1.0], vec![-5.0]]);
    }

    #[test]
    fn equal_data_gives_zero() {
        let net = build_cycle(3, 0.3).unwrap();
        let data = vec![vec![0.7, -2.0]; 3];
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let scalars = sample_scalars(&net, 100, &mut rng);
        let out = run_dishuf_with_scalars(&net, &data, scalars, &params(), &mut rng).unwrap();
        for i in 0..3 {
            assert!(out.delta_scaled(i).iter().all(Zero::is_zero));
        }
    }

    #[test]
    fn single_edge_contributions_are_opposite() {
        let net = build_cycle(4, 0.2).unwrap();
        let data: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 1.25, -(i as f64)]).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let scalars = sample_scalars(&net, 100, &mut rng);
        for &(i, j, _) in net.edges() {
            // Scalars that zero out every other edge are not allowed, so isolate
            // one edge through the oracle's linearity instead.
            let w = (scalars[&(i, j)] * scalars[&(j, i)]) as f64;
            let mut only: EdgeScalars = EdgeScalars::new();
            only.insert((i, j), scalars[&(i, j)]);
            only.insert((j, i), scalars[&(j, i)]);
            let mut sub = EdgeScalars::new();
            for (&k, &v) in &scalars {
                sub.insert(k, v);
            }
            let full = plaintext_dishuf_oracle(&net, &data, &sub);
            let mut trimmed = sub.clone();
            trimmed.insert((i, j), 0);
            let without = plaintext_dishuf_oracle(&net, &data, &trimmed);
            for k in 0..2 {
                let gain_i = full[i][k] - without[i][k];
                let gain_j = full[j][k] - without[j][k];
                assert_eq!(gain_i, w * (data[j][k] - data[i][k]));
                assert_eq!(gain_j, -gain_i);
            }
        }
        let out = run_dishuf_with_scalars(&net, &data, scalars.clone(), &params(), &mut rng).unwrap();
        let oracle = plaintext_dishuf_oracle(&net, &data, &scalars);
        for i in 0..4 {
            assert_eq!(out.delta::<f64>(i), oracle[i]);
        }
    }

    #[test]
    fn zero_sum_and_oracle_agreement_with_noise() {
        let net = build_cycle(5, 0.3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let data: Vec<Vec<f64>> = (0..5).map(|_| (0..9).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let out = run_dishuf(&net, &data, Some(20.0), &params(), &mut rng).unwrap();
        assert!(out.sum_scaled().iter().all(Zero::is_zero));
        let noisy: Vec<Vec<BigRational>> = (0..5).map(|i| out.noisy_exact(i)).collect();
        let oracle = plaintext_dishuf_oracle(&net, &noisy, out.scalars());
        for i in 0..5 {
            assert_eq!(out.delta_exact(i), oracle[i]);
        }
        for &(i, j, _) in net.edges() {
            for (a, b) in [(i, j), (j, i)] {
                let s = out.scalars()[&(a, b)];
                assert!((71..=100).contains(&s));
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let net = build_cycle(4, 0.3).unwrap();
        let data = vec![vec![1.0, 2.0]; 4];
        let a = run_dishuf(&net, &data, Some(5.0), &params(), &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = run_dishuf(&net, &data, Some(5.0), &params(), &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        for i in 0..4 {
            assert_eq!(a.delta_scaled(i), b.delta_scaled(i));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let net = build_cycle(3, 0.3).unwrap();
        let data = vec![vec![0.0]; 3];
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let r = run_dishuf(&net, &data, Some(200.0), &params(), &mut rng);
        assert!(matches!(r, Err(DiShufError::Overflow { .. })), "{r:?}");
    }

    #[test]
    fn transcript_audit_passes_and_catches_leaks() {
        let net = build_cycle(4, 0.3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let data: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0]).collect();
        let p = DiShufParams {
            record_transcript: true,
            ..params()
        };
        let mut out = run_dishuf(&net, &data, Some(3.0), &p, &mut rng).unwrap();
        audit_transcripts(&net, &out).unwrap();
        assert!(out.dump_transcripts().contains("decrypted from="));
        // Plant a raw neighbour vector in agent 0's view.
        let leaked = out.noisy_scaled(1).to_vec();
        out.transcripts.as_mut().unwrap()[0].entries.push(TranscriptEntry::Decrypted {
            from: 1,
            scaled_values: leaked,
        });
        assert!(audit_transcripts(&net, &out).is_err());
    }

    #[test]
    fn huge_noise_scale_stays_exact() {
        let z = 0.75;
        let v = scaled_gaussian(z, 700.0 * std::f64::consts::LN_2 * 2.0, 40);
        // 0.75 * 2^1400 * 2^40 = 3 * 2^1438
        let want = BigInt::from(3) << 1438usize;
        let rel = BigRational::new(v - &want, want.clone());
        assert!(rel.abs() < BigRational::new(1.into(), (BigInt::one() << 50usize).into()));
        assert_eq!(scaled_gaussian(-1.5, 0.0, 4), BigInt::from(-24));
    }
}
