//! GF(2^6) arithmetic and the binary primitive BCH(63,10) code that expands
//! the per-generation random sequence into the embedded payload.
//!
//! Bit sequences are stored as integers with the *first* sequence bit in the
//! most significant used position. For codewords, sequence bit `i` (0-based)
//! is the coefficient of `x^(62-i)` of the code polynomial, so the `u64`
//! value is the code polynomial itself. Encoding is systematic: the 10 info
//! bits are the first 10 codeword bits (coefficients `x^62..x^53`).

use std::fmt;
use std::ops::{Add, Mul};
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Primitive polynomial x^6 + x + 1.
pub const PRIMITIVE_POLY: u8 = 0b100_0011;
/// Multiplicative order of the primitive element.
pub const FIELD_ORDER: usize = 63;

pub const CODE_LENGTH: usize = 63;
pub const INFO_LENGTH: usize = 10;
pub const PARITY_LENGTH: usize = CODE_LENGTH - INFO_LENGTH;
pub const CORRECTABLE: usize = 13;

const CODEWORD_MASK: u64 = (1 << CODE_LENGTH) - 1;
const INFO_MASK: u16 = (1 << INFO_LENGTH) - 1;

struct Tables {
    exp: [u8; 2 * FIELD_ORDER],
    log: [u8; 64],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 2 * FIELD_ORDER];
    let mut log = [0u8; 64];
    let mut x: u8 = 1;
    let mut i = 0;
    while i < FIELD_ORDER {
        exp[i] = x;
        exp[i + FIELD_ORDER] = x;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0b100_0000 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

/// An element of GF(2^6), a polynomial over GF(2) reduced modulo x^6 + x + 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FieldElement(u8);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    pub fn new(value: u8) -> Result<Self> {
        if value < 64 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!(
                "field element {value} outside GF(64)"
            )))
        }
    }

    /// alpha^power, the primitive element raised to `power` (mod 63).
    pub fn alpha_pow(power: usize) -> Self {
        Self(TABLES.exp[power % FIELD_ORDER])
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Discrete logarithm base alpha; `None` for zero.
    pub fn log(self) -> Option<usize> {
        (self.0 != 0).then(|| TABLES.log[self.0 as usize] as usize)
    }

    pub fn inverse(self) -> Option<Self> {
        self.log()
            .map(|l| Self(TABLES.exp[(FIELD_ORDER - l) % FIELD_ORDER]))
    }

    pub fn pow(self, e: usize) -> Self {
        match self.log() {
            None if e == 0 => Self::ONE,
            None => Self::ZERO,
            Some(l) => Self(TABLES.exp[(l * e) % FIELD_ORDER]),
        }
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF64({:#04x})", self.0)
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = Self;
    // product via addition of discrete logs
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Self) -> Self {
        match (self.log(), rhs.log()) {
            (Some(a), Some(b)) => Self(TABLES.exp[a + b]),
            _ => Self::ZERO,
        }
    }
}

/// The 10-bit random sequence R.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct InfoWord(u16);

impl InfoWord {
    pub const ZERO: Self = Self(0);

    pub fn from_u16(value: u16) -> Result<Self> {
        if value <= INFO_MASK {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!(
                "info word {value:#x} exceeds {INFO_LENGTH} bits"
            )))
        }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        Ok(Self(pack_bits(bits, INFO_LENGTH)? as u16))
    }

    pub fn value(self) -> u16 {
        self.0
    }

    /// Bit `i` of the sequence (0-based, MSB first).
    pub fn bit(self, i: usize) -> u8 {
        assert!(i < INFO_LENGTH);
        ((self.0 >> (INFO_LENGTH - 1 - i)) & 1) as u8
    }

    pub fn bits(self) -> Vec<u8> {
        (0..INFO_LENGTH).map(|i| self.bit(i)).collect()
    }

    /// Canonical 2-byte big-endian form used in seed derivation.
    pub fn to_be_bytes(self) -> [u8; 2] {
        self.0.to_be_bytes()
    }

    pub fn to_hex(self) -> String {
        format!("{:03x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let v = u16::from_str_radix(s, 16)
            .map_err(|e| Error::InvalidInput(format!("bad info word hex {s:?}: {e}")))?;
        if s.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "info word hex must be 3 chars, got {s:?}"
            )));
        }
        Self::from_u16(v)
    }
}

impl std::ops::BitXor for InfoWord {
    type Output = Self;
    fn bitxor(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl fmt::Debug for InfoWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InfoWord({})", self.to_hex())
    }
}

/// A 63-bit word: either a valid BCH codeword (the payload P) or a received
/// word produced by majority voting.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Codeword(u64);

impl Codeword {
    pub fn from_u64(value: u64) -> Result<Self> {
        if value & !CODEWORD_MASK == 0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!(
                "word {value:#x} exceeds {CODE_LENGTH} bits"
            )))
        }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        Ok(Self(pack_bits(bits, CODE_LENGTH)?))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Bit `i` of the sequence (0-based, MSB first); this is payload bit P_{i+1}.
    pub fn bit(self, i: usize) -> u8 {
        assert!(i < CODE_LENGTH);
        ((self.0 >> (CODE_LENGTH - 1 - i)) & 1) as u8
    }

    pub fn bits(self) -> Vec<u8> {
        (0..CODE_LENGTH).map(|i| self.bit(i)).collect()
    }

    pub fn flip(self, i: usize) -> Self {
        assert!(i < CODE_LENGTH);
        Self(self.0 ^ (1 << (CODE_LENGTH - 1 - i)))
    }

    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }

    pub fn distance(self, other: Self) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 16 {
            return Err(Error::InvalidInput(format!(
                "codeword hex must be 16 chars, got {s:?}"
            )));
        }
        let v = u64::from_str_radix(s, 16)
            .map_err(|e| Error::InvalidInput(format!("bad codeword hex {s:?}: {e}")))?;
        Self::from_u64(v)
    }
}

impl std::ops::BitXor for Codeword {
    type Output = Self;
    fn bitxor(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl fmt::Debug for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Codeword({})", self.to_hex())
    }
}

macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }
        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$ty>::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}
hex_serde!(InfoWord);
hex_serde!(Codeword);

fn pack_bits(bits: &[u8], expected: usize) -> Result<u64> {
    if bits.len() != expected {
        return Err(Error::Shape {
            what: "bit sequence",
            expected,
            actual: bits.len(),
        });
    }
    bits.iter().try_fold(0u64, |acc, &b| match b {
        0 | 1 => Ok((acc << 1) | b as u64),
        other => Err(Error::InvalidInput(format!("bit value {other} is not 0/1"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeStatus {
    Corrected,
    Uncorrectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub status: DecodeStatus,
    pub info: Option<InfoWord>,
    pub errors_corrected: usize,
}

impl DecodeOutcome {
    fn uncorrectable() -> Self {
        Self {
            status: DecodeStatus::Uncorrectable,
            info: None,
            errors_corrected: 0,
        }
    }
}

/// The fixed binary primitive BCH(63,10) code with designed distance 27.
#[derive(Debug, Clone)]
pub struct BchCode {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    /// Minimum distance, established by enumerating the codebook.
    pub d_min: usize,
    /// Generator polynomial over GF(2); bit j is the coefficient of x^j.
    pub generator: u64,
    /// x^(53+i) mod g(x), for the table-driven systematic encoder.
    parity_rows: [u64; INFO_LENGTH],
}

/// Builds the code. Construction is deterministic; prefer [`BchCode::standard`]
/// to share one instance.
pub fn build_code() -> BchCode {
    let generator = generator_polynomial(2 * CORRECTABLE);
    let mut parity_rows = [0u64; INFO_LENGTH];
    for (i, row) in parity_rows.iter_mut().enumerate() {
        *row = gf2_rem(1u64 << (PARITY_LENGTH + i), generator);
    }
    let mut code = BchCode {
        n: CODE_LENGTH,
        k: INFO_LENGTH,
        t: CORRECTABLE,
        d_min: 0,
        generator,
        parity_rows,
    };
    code.d_min = code.enumerate_min_weight() as usize;
    code
}

fn degree(p: u64) -> Option<usize> {
    (p != 0).then(|| 63 - p.leading_zeros() as usize)
}

/// Remainder of `a` divided by `b` over GF(2).
fn gf2_rem(mut a: u64, b: u64) -> u64 {
    let db = degree(b).expect("division by zero polynomial");
    while let Some(da) = degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

fn gf2_mul(a: u64, b: u64) -> u64 {
    let mut out = 0u64;
    let mut b = b;
    let mut shift = 0;
    while b != 0 {
        if b & 1 == 1 {
            out ^= a << shift;
        }
        b >>= 1;
        shift += 1;
    }
    out
}

/// Minimal polynomial of alpha^j: product of (x - alpha^c) over the
/// cyclotomic coset of j. Coefficients land in GF(2).
fn minimal_polynomial(j: usize) -> u64 {
    let mut coset = vec![j % FIELD_ORDER];
    let mut c = (2 * j) % FIELD_ORDER;
    while c != coset[0] {
        coset.push(c);
        c = (2 * c) % FIELD_ORDER;
    }
    // coefficients over GF(64), lowest degree first
    let mut poly = vec![FieldElement::ONE];
    for &e in &coset {
        let root = FieldElement::alpha_pow(e);
        let mut next = vec![FieldElement::ZERO; poly.len() + 1];
        for (d, &coef) in poly.iter().enumerate() {
            next[d + 1] = next[d + 1] + coef;
            next[d] = next[d] + coef * root;
        }
        poly = next;
    }
    poly.iter().enumerate().fold(0u64, |acc, (d, coef)| {
        debug_assert!(coef.value() <= 1, "minimal polynomial not binary");
        acc | ((coef.value() as u64) << d)
    })
}

/// lcm of the minimal polynomials of alpha^1 .. alpha^roots.
fn generator_polynomial(roots: usize) -> u64 {
    let mut seen: Vec<u64> = Vec::new();
    let mut g = 1u64;
    for j in 1..=roots {
        let m = minimal_polynomial(j);
        if !seen.contains(&m) {
            seen.push(m);
            g = gf2_mul(g, m);
        }
    }
    g
}

impl BchCode {
    /// Process-wide shared instance.
    pub fn standard() -> &'static BchCode {
        static CODE: OnceLock<BchCode> = OnceLock::new();
        CODE.get_or_init(build_code)
    }

    pub fn generator_degree(&self) -> usize {
        degree(self.generator).unwrap_or(0)
    }

    pub fn encode(&self, info: InfoWord) -> Codeword {
        let m = info.value() as u64;
        let mut parity = 0u64;
        for (i, row) in self.parity_rows.iter().enumerate() {
            if (m >> i) & 1 == 1 {
                parity ^= row;
            }
        }
        Codeword((m << PARITY_LENGTH) | parity)
    }

    /// Encodes from an explicit bit slice, checking its length.
    pub fn encode_bits(&self, bits: &[u8]) -> Result<Codeword> {
        Ok(self.encode(InfoWord::from_bits(bits)?))
    }

    /// Info bits of a systematic codeword. Does not check validity.
    pub fn extract_info(&self, word: Codeword) -> InfoWord {
        InfoWord((word.0 >> PARITY_LENGTH) as u16)
    }

    /// Syndromes S_1..S_2t, S_j = r(alpha^j).
    pub fn syndromes(&self, word: Codeword) -> [FieldElement; 2 * CORRECTABLE] {
        let mut s = [FieldElement::ZERO; 2 * CORRECTABLE];
        let mut bits = word.0;
        while bits != 0 {
            let pos = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            for (j, sj) in s.iter_mut().enumerate() {
                *sj = *sj + FieldElement::alpha_pow(pos * (j + 1));
            }
        }
        s
    }

    pub fn is_codeword(&self, word: Codeword) -> bool {
        gf2_rem(word.0, self.generator) == 0
    }

    /// Syndrome decoding with Berlekamp-Massey and a Chien search. Words
    /// farther than t from every codeword come back `Uncorrectable`.
    pub fn decode(&self, received: Codeword) -> DecodeOutcome {
        let syn = self.syndromes(received);
        if syn.iter().all(|s| s.is_zero()) {
            return DecodeOutcome {
                status: DecodeStatus::Corrected,
                info: Some(self.extract_info(received)),
                errors_corrected: 0,
            };
        }
        let locator = berlekamp_massey(&syn);
        let nu = locator.len() - 1;
        if nu > self.t {
            return DecodeOutcome::uncorrectable();
        }
        // Chien search: position p is in error iff Lambda(alpha^-p) = 0.
        let mut corrected = received.0;
        let mut found = 0;
        for p in 0..CODE_LENGTH {
            let x_inv = FieldElement::alpha_pow(FIELD_ORDER - p);
            let mut acc = FieldElement::ZERO;
            let mut xp = FieldElement::ONE;
            for &c in &locator {
                acc = acc + c * xp;
                xp = xp * x_inv;
            }
            if acc.is_zero() {
                corrected ^= 1 << p;
                found += 1;
            }
        }
        if found != nu || !self.is_codeword(Codeword(corrected)) {
            return DecodeOutcome::uncorrectable();
        }
        DecodeOutcome {
            status: DecodeStatus::Corrected,
            info: Some(self.extract_info(Codeword(corrected))),
            errors_corrected: found,
        }
    }

    /// Exhaustive maximum-likelihood decoding over all 1024 codewords.
    /// Ties resolve to the smallest info word.
    pub fn nearest_codeword(&self, word: Codeword) -> (InfoWord, u32) {
        (0..=INFO_MASK)
            .map(|m| {
                let info = InfoWord(m);
                (info, self.encode(info).distance(word))
            })
            .min_by_key(|&(info, d)| (d, info))
            .expect("non-empty codebook")
    }

    fn enumerate_min_weight(&self) -> u32 {
        (1..=INFO_MASK)
            .map(|m| self.encode(InfoWord(m)).weight())
            .min()
            .expect("non-empty codebook")
    }
}

/// Berlekamp-Massey over GF(64). Returns the error-locator polynomial,
/// lowest degree first, trimmed so the last coefficient is nonzero.
fn berlekamp_massey(syn: &[FieldElement]) -> Vec<FieldElement> {
    let n = syn.len();
    let mut lambda = vec![FieldElement::ZERO; n + 1];
    let mut prev = vec![FieldElement::ZERO; n + 1];
    lambda[0] = FieldElement::ONE;
    prev[0] = FieldElement::ONE;
    let mut l = 0usize;
    let mut m = 1usize;
    let mut b = FieldElement::ONE;
    for r in 0..n {
        let mut d = syn[r];
        for i in 1..=l {
            d = d + lambda[i] * syn[r - i];
        }
        if d.is_zero() {
            m += 1;
            continue;
        }
        let coef = d * b.inverse().expect("b is nonzero");
        let saved = lambda.clone();
        for i in 0..=(n - m) {
            lambda[i + m] = lambda[i + m] + coef * prev[i];
        }
        if 2 * l <= r {
            l = r + 1 - l;
            prev = saved;
            b = d;
            m = 1;
        } else {
            m += 1;
        }
    }
    let deg = lambda.iter().rposition(|c| !c.is_zero()).unwrap_or(0);
    lambda.truncate(deg.max(l) + 1);
    // keep l+1 coefficients even when the top one vanished, so the root
    // count check in decode() rejects the word
    lambda
}
