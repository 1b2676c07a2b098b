// SPDX-License-Identifier: Apache-2.0

//! Paillier encryption with generator `N + 1`, CRT decryption and a signed
//! fixed-point codec.
//!
//! Simulation grade only: no constant-time arithmetic, no padding, no key
//! management.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_KEY_BITS: u64 = 256;
pub const DEFAULT_KEY_BITS: u64 = 1024;
pub const DEFAULT_FRAC_BITS: u32 = 40;
const MILLER_RABIN_ROUNDS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaillierError {
    #[error("key size {0} bits is below the {MIN_KEY_BITS}-bit floor")]
    KeyTooSmall(u64),
    #[error("plaintext is not in [0, N)")]
    PlaintextRange,
    #[error("ciphertexts or keys belong to different moduli")]
    KeyMismatch,
    #[error("value needs {needed_bits} bits but the codec headroom is {available_bits} bits")]
    Overflow { needed_bits: u64, available_bits: u64 },
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103,
    107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211,
    223, 227, 229, 233, 239, 241, 251,
];

/// Uniform integer in `[0, 2^bits)`.
pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let bytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    let excess = bytes as u64 * 8 - bits;
    if excess > 0 {
        buf[bytes - 1] &= 0xff >> excess;
    }
    BigUint::from_bytes_le(&buf)
}

/// Uniform integer in `[lo, hi)`.
pub fn random_below<R: Rng + ?Sized>(rng: &mut R, lo: &BigUint, hi: &BigUint) -> BigUint {
    let span = hi - lo;
    let bits = span.bits();
    loop {
        let v = random_bits(rng, bits);
        if v < span {
            return lo + v;
        }
    }
}

pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    if n.is_even() {
        return *n == two;
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().expect("n > 1");
    let d = &n1 >> s;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = random_below(rng, &two, &n1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime of exactly `bits` bits with the top two bits set.
pub fn random_prime<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    loop {
        let mut c = random_bits(rng, bits);
        c.set_bit(bits - 1, true);
        c.set_bit(bits - 2, true);
        c.set_bit(0, true);
        if is_probable_prime(&c, rng) {
            return c;
        }
    }
}

fn fingerprint(n: &BigUint) -> u64 {
    let digest = Sha256::digest(n.to_bytes_le());
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_sq: BigUint,
    id: u64,
}

impl PublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_sq(&self) -> &BigUint {
        &self.n_sq
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Short hash of the modulus; ciphertexts carry it.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext, PaillierError> {
        if *m >= self.n {
            return Err(PaillierError::PlaintextRange);
        }
        let r = loop {
            let r = random_below(rng, &BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        // (N + 1)^m = 1 + m N (mod N^2)
        let gm = (BigUint::one() + m * &self.n) % &self.n_sq;
        let value = gm * r.modpow(&self.n, &self.n_sq) % &self.n_sq;
        Ok(Ciphertext { value, key: self.id })
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key == self.id {
            Ok(())
        } else {
            Err(PaillierError::KeyMismatch)
        }
    }

    /// Plaintexts add.
    pub fn hom_add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        Ok(Ciphertext {
            value: &a.value * &b.value % &self.n_sq,
            key: self.id,
        })
    }

    /// Plaintext multiplied by `k`.
    pub fn hom_scale(&self, c: &Ciphertext, k: &BigUint) -> Result<Ciphertext, PaillierError> {
        self.check(c)?;
        Ok(Ciphertext {
            value: c.value.modpow(k, &self.n_sq),
            key: self.id,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PrivateKey {
    public: PublicKey,
    p: BigUint,
    q: BigUint,
    p_sq: BigUint,
    q_sq: BigUint,
    hp: BigUint,
    hq: BigUint,
    /// `p^{-1} mod q` for recombination.
    p_inv_q: BigUint,
}

fn l_function(x: &BigUint, p: &BigUint) -> BigUint {
    (x - 1u32) / p
}

fn h_factor(p: &BigUint, p_sq: &BigUint, n: &BigUint) -> BigUint {
    let g = n + 1u32;
    let pm1 = p - 1u32;
    l_function(&g.modpow(&pm1, p_sq), p)
        .modinv(p)
        .expect("h is invertible for distinct primes")
}

impl PrivateKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.public.check(c)?;
        let mp = l_function(&c.value.modpow(&(&self.p - 1u32), &self.p_sq), &self.p) * &self.hp % &self.p;
        let mq = l_function(&c.value.modpow(&(&self.q - 1u32), &self.q_sq), &self.q) * &self.hq % &self.q;
        // m = mp + p * ((mq - mp) p^{-1} mod q)
        let diff = (&mq + &self.q - &mp % &self.q) % &self.q;
        Ok(&mp + &self.p * (diff * &self.p_inv_q % &self.q))
    }
}

#[derive(Clone, Debug)]
pub struct PaillierKeypair {
    secret: PrivateKey,
}

impl PaillierKeypair {
    pub fn generate<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<Self, PaillierError> {
        if bits < MIN_KEY_BITS {
            return Err(PaillierError::KeyTooSmall(bits));
        }
        let half = bits.div_ceil(2);
        loop {
            let p = random_prime(rng, half);
            let q = random_prime(rng, half);
            if p == q {
                continue;
            }
            let n = &p * &q;
            let phi = (&p - 1u32) * (&q - 1u32);
            if !n.gcd(&phi).is_one() || n.bits() < bits {
                continue;
            }
            let p_sq = &p * &p;
            let q_sq = &q * &q;
            let hp = h_factor(&p, &p_sq, &n);
            let hq = h_factor(&q, &q_sq, &n);
            let p_inv_q = (&p % &q).modinv(&q).expect("distinct primes");
            let public = PublicKey {
                n_sq: &n * &n,
                id: fingerprint(&n),
                n,
            };
            return Ok(Self {
                secret: PrivateKey {
                    public,
                    p,
                    q,
                    p_sq,
                    q_sq,
                    hp,
                    hq,
                    p_inv_q,
                },
            });
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.secret.public
    }

    pub fn secret(&self) -> &PrivateKey {
        &self.secret
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext, PaillierError> {
        self.public().encrypt(m, rng)
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.secret.decrypt(c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key: u64,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> u64 {
        self.key
    }

    /// SHA-256 of the ciphertext value, for transcripts.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.value.to_bytes_le()).into()
    }
}

/// Signed fixed-point values `v / 2^frac_bits` stored modulo `N`; negatives
/// map to `N - |v|`. Representable magnitudes stop at `N / 4` so sums and
/// integer multiples keep a sign margin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPointCodec {
    frac_bits: u32,
    modulus: BigUint,
    half: BigUint,
    limit: BigUint,
}

impl FixedPointCodec {
    pub fn new(modulus: BigUint, frac_bits: u32) -> Self {
        Self {
            frac_bits,
            half: &modulus >> 1,
            limit: &modulus >> 2,
            modulus,
        }
    }

    pub fn for_key(pk: &PublicKey, frac_bits: u32) -> Self {
        Self::new(pk.modulus().clone(), frac_bits)
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// Largest representable magnitude, as a scaled integer.
    pub fn limit(&self) -> &BigUint {
        &self.limit
    }

    /// Round-to-nearest scaled integer of `x`.
    pub fn quantize(&self, x: f64) -> Result<BigInt, PaillierError> {
        if !x.is_finite() {
            return Err(PaillierError::NonFinite(x));
        }
        let scaled = x * 2f64.powi(self.frac_bits as i32);
        Ok(if scaled.is_finite() {
            // Scaling by a power of two is exact; round() is half-away-from-zero.
            BigInt::from_f64(scaled.round()).expect("finite")
        } else {
            BigInt::from_f64(x).expect("finite") << self.frac_bits
        })
    }

    /// Encodes an already-scaled signed integer.
    pub fn encode_int(&self, v: &BigInt) -> Result<BigUint, PaillierError> {
        let mag = v.magnitude();
        if *mag > self.limit {
            return Err(PaillierError::Overflow {
                needed_bits: mag.bits() + 2,
                available_bits: self.modulus.bits(),
            });
        }
        Ok(match v.sign() {
            Sign::Minus => &self.modulus - mag,
            _ => mag.clone(),
        })
    }

    pub fn encode(&self, x: f64) -> Result<BigUint, PaillierError> {
        self.encode_int(&self.quantize(x)?)
    }

    /// Signed scaled integer; residues above `N / 2` are negative.
    pub fn decode_int(&self, u: &BigUint) -> BigInt {
        let u = u % &self.modulus;
        if u > self.half {
            -BigInt::from_biguint(Sign::Plus, &self.modulus - u)
        } else {
            BigInt::from_biguint(Sign::Plus, u)
        }
    }

    pub fn decode_exact(&self, u: &BigUint) -> BigRational {
        BigRational::new(self.decode_int(u), BigInt::one() << self.frac_bits)
    }

    pub fn decode(&self, u: &BigUint) -> f64 {
        <f64 as crate::scalar::Scalar>::from_scaled_int(&self.decode_int(u), self.frac_bits)
    }
}

/// Outcome of [`selftest`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelftestReport {
    pub pairs_checked: usize,
    pub round_trips: usize,
    pub failures: Vec<String>,
}

/// Exhaustive homomorphism check on `[0, 50]^2` with a small key, then random
/// round trips at `bits`.
pub fn selftest<R: Rng + ?Sized>(bits: u64, round_trips: usize, rng: &mut R) -> Result<SelftestReport, PaillierError> {
    let mut failures = Vec::new();
    let small = PaillierKeypair::generate(MIN_KEY_BITS, rng)?;
    let pk = small.public();
    let enc: Vec<Ciphertext> = (0u32..=50)
        .map(|v| small.encrypt(&BigUint::from(v), rng))
        .collect::<Result<_, _>>()?;
    let mut pairs = 0;
    for a in 0u32..=50 {
        for b in 0u32..=50 {
            pairs += 1;
            let sum = small.decrypt(&pk.hom_add(&enc[a as usize], &enc[b as usize])?)?;
            if sum != BigUint::from(a + b) {
                failures.push(format!("add {a} + {b}"));
            }
            let prod = small.decrypt(&pk.hom_scale(&enc[a as usize], &BigUint::from(b))?)?;
            if prod != BigUint::from(a * b) {
                failures.push(format!("scale {a} * {b}"));
            }
        }
    }
    let big = PaillierKeypair::generate(bits, rng)?;
    let n = big.public().modulus().clone();
    for edge in [BigUint::zero(), BigUint::one(), &n - 1u32] {
        if big.decrypt(&big.encrypt(&edge, rng)?)? != edge {
            failures.push(format!("round trip {edge}"));
        }
    }
    for k in 0..round_trips {
        let m = random_below(rng, &BigUint::zero(), &n);
        if big.decrypt(&big.encrypt(&m, rng)?)? != m {
            failures.push(format!("random round trip #{k}"));
        }
    }
    Ok(SelftestReport {
        pairs_checked: pairs,
        round_trips: round_trips + 3,
        failures,
    })
}

/// Number of bits of `x` needed as a scaled integer magnitude.
pub fn scaled_bits(x: f64, frac_bits: u32) -> u64 {
    if x == 0.0 {
        return 0;
    }
    let e = x.abs().log2().ceil();
    (e + frac_bits as f64).max(0.0).to_u64().unwrap_or(u64::MAX)
}
