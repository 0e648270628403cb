//! Arithmetic in the prime-order subgroup of a safe-prime modulus.
//!
//! Every value that crosses the wire is an element of the order-`q` subgroup
//! of quadratic residues modulo `p = 2q + 1`. Exponentiation with secret
//! exponents runs in time that depends only on the bit length of `q`.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use crypto_bigint::modular::{MontyForm, MontyParams};
use crypto_bigint::{NonZero, Odd, U2048};
use rand::RngCore;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use subtle::{ConditionallySelectable, ConstantTimeEq};
use thiserror::Error;

use crate::credentials::GroupSecret;

/// Fixed-precision integer backing all group arithmetic. Moduli up to 2048
/// bits are supported.
pub type Natural = U2048;

const MAX_BYTES: usize = Natural::BYTES;

/// Miller-Rabin rounds applied to both `p` and `q` when parameters are loaded.
pub const PRIMALITY_ROUNDS: usize = 64;

/// Upper bound on re-hashing attempts in [`derive_generator`].
pub const GENERATOR_RETRY_LIMIT: u8 = 255;

const GENERATOR_LABEL: &[u8] = b"ph-gen";

const COMB_WINDOW_BITS: u32 = 4;
const COMB_ENTRIES: usize = 1 << COMB_WINDOW_BITS;

/// Recurring bases tracked by [`GroupParams::fixed_base_pow`].
const BASE_CACHE_SLOTS: usize = 16;
/// Uses of a base before a table is built for it. A table costs about four
/// plain exponentiations, so one-off bases never get one.
const BASE_CACHE_PROMOTE: u32 = 2;

/// 2048-bit MODP group (IKE group 14). Generator 2.
const MODP_2048_P: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74",
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437",
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05",
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB",
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718",
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("element encoding is {got} bytes, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("element outside [2, p-2]")]
    Range,
    #[error("element is not in the order-q subgroup")]
    Subgroup,
    #[error("exponent outside [1, q-1]")]
    ExponentRange,
    #[error("invalid group parameters: {0}")]
    Params(String),
    #[error("generator derivation failed after {GENERATOR_RETRY_LIMIT} attempts")]
    GeneratorDerivation,
}

/// Public parameters: safe prime `p`, subgroup order `q = (p-1)/2` and a
/// generator `g` of the order-`q` subgroup.
pub struct GroupParams {
    modulus: Odd<Natural>,
    order: Natural,
    generator: Natural,
    monty: MontyParams<{ Natural::LIMBS }>,
    order_monty: MontyParams<{ Natural::LIMBS }>,
    order_bits: u32,
    element_width: usize,
    comb: OnceLock<CombTable>,
    bases: Mutex<Vec<CachedBase>>,
}

struct CachedBase {
    base: Natural,
    uses: u32,
    table: Option<Arc<CombTable>>,
}

impl GroupParams {
    /// Validates and assembles group parameters.
    ///
    /// Both `p` and `q` go through [`PRIMALITY_ROUNDS`] rounds of
    /// Miller-Rabin. `g` must satisfy `g != 1` and `g^q = 1 (mod p)`.
    pub fn new(p: Natural, q: Natural, g: Natural) -> Result<Self, GroupError> {
        let modulus = Option::<Odd<Natural>>::from(Odd::new(p))
            .ok_or_else(|| GroupError::Params("modulus must be odd".into()))?;
        if p.bits() < 5 {
            return Err(GroupError::Params("modulus too small".into()));
        }
        if q.bits() >= Natural::BITS || q.shl_vartime(1).wrapping_add(&Natural::ONE) != p {
            return Err(GroupError::Params("modulus is not 2q + 1".into()));
        }
        let mut rng = rand::thread_rng();
        if !is_probable_prime(&q, PRIMALITY_ROUNDS, &mut rng) {
            return Err(GroupError::Params("subgroup order q is not prime".into()));
        }
        if !is_probable_prime(&p, PRIMALITY_ROUNDS, &mut rng) {
            return Err(GroupError::Params("modulus p is not prime".into()));
        }
        let monty = MontyParams::new_vartime(modulus);
        let order_monty = MontyParams::new_vartime(Odd::new(q).expect("q is an odd prime"));
        if g <= Natural::ONE || g >= p {
            return Err(GroupError::Params("generator outside [2, p-1]".into()));
        }
        let check = MontyForm::new(&g, monty).pow_bounded_exp(&q, q.bits());
        if check.retrieve() != Natural::ONE {
            return Err(GroupError::Params("generator does not have order q".into()));
        }
        Ok(Self {
            modulus,
            order: q,
            generator: g,
            monty,
            order_monty,
            order_bits: q.bits(),
            element_width: p.bits().div_ceil(8) as usize,
            comb: OnceLock::new(),
            bases: Mutex::new(Vec::new()),
        })
    }

    /// Parses hex-encoded `p`, `q`, `g`.
    pub fn from_hex(p: &str, q: &str, g: &str) -> Result<Self, GroupError> {
        Self::new(parse_hex(p, "p")?, parse_hex(q, "q")?, parse_hex(g, "g")?)
    }

    /// Loads parameters from a TOML file with string keys `p`, `q`, `g`
    /// holding hex values.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GroupError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            GroupError::Params(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::parse_config(&text)
    }

    pub fn parse_config(text: &str) -> Result<Self, GroupError> {
        #[derive(Deserialize)]
        struct File {
            p: String,
            q: String,
            g: String,
        }
        let file: File =
            toml::from_str(text).map_err(|e| GroupError::Params(format!("bad group file: {e}")))?;
        Self::from_hex(&file.p, &file.q, &file.g)
    }

    /// Renders parameters in the format accepted by [`GroupParams::parse_config`].
    pub fn to_config(&self) -> String {
        format!(
            "p = \"{}\"\nq = \"{}\"\ng = \"{}\"\n",
            self.hex(self.modulus()),
            self.hex(&self.order),
            self.hex(&self.generator)
        )
    }

    /// The 2048-bit IKE MODP group with `g = 2`, validated once per process.
    pub fn modp2048() -> Arc<Self> {
        static GROUP: OnceLock<Arc<GroupParams>> = OnceLock::new();
        GROUP
            .get_or_init(|| {
                let p = parse_hex(MODP_2048_P, "p").expect("constant");
                let q = p.shr_vartime(1);
                Arc::new(Self::new(p, q, Natural::from_u8(2)).expect("IKE group 14 is valid"))
            })
            .clone()
    }

    /// Toy group `p = 23, q = 11, g = 2`. Only useful for distribution tests.
    pub fn test_group() -> Arc<Self> {
        static GROUP: OnceLock<Arc<GroupParams>> = OnceLock::new();
        GROUP
            .get_or_init(|| {
                Arc::new(
                    Self::new(
                        Natural::from_u8(23),
                        Natural::from_u8(11),
                        Natural::from_u8(2),
                    )
                    .expect("toy group is valid"),
                )
            })
            .clone()
    }

    pub fn modulus(&self) -> &Natural {
        self.modulus.as_ref()
    }

    pub fn order(&self) -> &Natural {
        &self.order
    }

    pub fn order_bits(&self) -> u32 {
        self.order_bits
    }

    /// Fixed big-endian encoding width of an element, `ceil(bitlen(p) / 8)`.
    pub fn element_width(&self) -> usize {
        self.element_width
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.generator)
    }

    /// Encodes `value` big-endian, left-padded to [`Self::element_width`].
    pub fn encode(&self, value: &Natural) -> Vec<u8> {
        let bytes = value.to_be_bytes();
        bytes[MAX_BYTES - self.element_width..].to_vec()
    }

    fn hex(&self, value: &Natural) -> String {
        hex::encode_upper(self.encode(value))
    }

    /// `g^e` through the precomputed comb; constant time in `e`.
    pub fn generator_pow(&self, e: &Exponent) -> GroupElement {
        let comb = self.comb.get_or_init(|| CombTable::build(self, &self.generator));
        GroupElement(comb.pow(self, &e.0))
    }

    /// `base^e` for a base that recurs across sessions, such as a secret
    /// generator. After a base has been seen a few times a comb table is
    /// kept for it. Same result as [`mod_exp`].
    pub fn fixed_base_pow(&self, base: &GroupElement, e: &Exponent) -> GroupElement {
        if let Some(table) = self.cached_table(&base.0) {
            return GroupElement(table.pow(self, &e.0));
        }
        GroupElement(self.pow_ct(&base.0, &e.0))
    }

    fn cached_table(&self, base: &Natural) -> Option<Arc<CombTable>> {
        let mut cache = self.bases.lock().unwrap_or_else(|e| e.into_inner());
        let mut hit = None;
        for (i, entry) in cache.iter().enumerate() {
            if bool::from(entry.base.ct_eq(base)) {
                hit = Some(i);
            }
        }
        let i = match hit {
            Some(i) => i,
            None => {
                if cache.len() == BASE_CACHE_SLOTS {
                    cache.remove(0);
                }
                cache.push(CachedBase {
                    base: *base,
                    uses: 0,
                    table: None,
                });
                cache.len() - 1
            }
        };
        // Most recently used last, so eviction drops the stalest.
        let mut entry = cache.remove(i);
        entry.uses = entry.uses.saturating_add(1);
        if entry.table.is_none() && entry.uses >= BASE_CACHE_PROMOTE {
            entry.table = Some(Arc::new(CombTable::build(self, base)));
        }
        let table = entry.table.clone();
        cache.push(entry);
        table
    }

    /// A uniformly random element of the subgroup other than 1.
    pub fn random_element(&self, rng: &mut (impl RngCore + ?Sized)) -> GroupElement {
        let r = random_exponent(rng, self);
        self.generator_pow(&r)
    }

    /// Raw constant-time modular power; `exponent` must be below `2^order_bits`.
    pub(crate) fn pow_ct(&self, base: &Natural, exponent: &Natural) -> Natural {
        MontyForm::new(base, self.monty)
            .pow_bounded_exp(exponent, self.order_bits)
            .retrieve()
    }

    pub(crate) fn square(&self, value: &Natural) -> Natural {
        MontyForm::new(value, self.monty).square().retrieve()
    }

    /// Euler's criterion: for a safe prime, `v^q = 1` exactly when the
    /// Jacobi symbol `(v | p)` is 1.
    pub(crate) fn in_subgroup(&self, value: &Natural) -> bool {
        jacobi(value, self.modulus()) == 1
    }
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("bits", &self.modulus().bits())
            .field("element_width", &self.element_width)
            .finish()
    }
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.modulus == other.modulus && self.generator == other.generator
    }
}

impl Eq for GroupParams {}

fn parse_hex(text: &str, what: &str) -> Result<Natural, GroupError> {
    let trimmed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let trimmed = trimmed.trim_start_matches("0x");
    let padded = if trimmed.len() % 2 == 1 {
        format!("0{trimmed}")
    } else {
        trimmed.to_string()
    };
    let bytes =
        hex::decode(&padded).map_err(|e| GroupError::Params(format!("{what}: bad hex: {e}")))?;
    natural_from_be(&bytes).ok_or_else(|| GroupError::Params(format!("{what}: exceeds 2048 bits")))
}

pub(crate) fn natural_from_be(bytes: &[u8]) -> Option<Natural> {
    let significant = bytes.iter().position(|&b| b != 0).unwrap_or(bytes.len());
    let bytes = &bytes[significant..];
    if bytes.len() > MAX_BYTES {
        return None;
    }
    let mut buf = [0u8; MAX_BYTES];
    buf[MAX_BYTES - bytes.len()..].copy_from_slice(bytes);
    Some(Natural::from_be_slice(&buf))
}

/// Member of the order-`q` subgroup, stored in canonical (non-Montgomery) form.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElement(Natural);

impl GroupElement {
    /// Accepts any `value` in `[1, p-1]` that lies in the order-`q` subgroup,
    /// including the identity. Wire input goes through [`validate_element`].
    pub fn new(value: Natural, params: &GroupParams) -> Result<Self, GroupError> {
        if value == Natural::ZERO || value >= *params.modulus() {
            return Err(GroupError::Range);
        }
        if !params.in_subgroup(&value) {
            return Err(GroupError::Subgroup);
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> &Natural {
        &self.0
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        params.encode(&self.0)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Natural::ONE
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = self.0.to_be_bytes();
        let start = bytes.iter().position(|&b| b != 0).unwrap_or(MAX_BYTES - 1);
        write!(f, "GroupElement(0x{})", hex::encode(&bytes[start..]))
    }
}

/// Secret exponent in `[1, q-1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Exponent(Natural);

impl Exponent {
    pub fn new(value: Natural, params: &GroupParams) -> Result<Self, GroupError> {
        if value == Natural::ZERO || value >= *params.order() {
            return Err(GroupError::ExponentRange);
        }
        Ok(Self(value))
    }

    pub fn from_u64(value: u64, params: &GroupParams) -> Result<Self, GroupError> {
        Self::new(Natural::from_u64(value), params)
    }

    pub fn value(&self) -> &Natural {
        &self.0
    }

    /// Big-endian encoding at the width of `q`.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let width = params.order_bits().div_ceil(8) as usize;
        self.0.to_be_bytes()[MAX_BYTES - width..].to_vec()
    }

    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self, GroupError> {
        let value = natural_from_be(bytes).ok_or(GroupError::ExponentRange)?;
        Self::new(value, params)
    }

    /// `self * other mod q`. Never zero, since `q` is prime.
    pub fn mul(&self, other: &Exponent, params: &GroupParams) -> Exponent {
        let a = MontyForm::new(&self.0, params.order_monty);
        let b = MontyForm::new(&other.0, params.order_monty);
        Exponent((a * b).retrieve())
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Exponent(..)")
    }
}

/// `base^e mod p`. Runtime depends only on the bit length of `q`.
pub fn mod_exp(base: &GroupElement, e: &Exponent, params: &GroupParams) -> GroupElement {
    GroupElement(params.pow_ct(&base.0, &e.0))
}

/// Maps a group secret to a subgroup element by hashing into `Z_p` and
/// squaring.
///
/// The candidate for attempt `c` is the first `element_width` bytes of
/// `SHA-256("ph-gen" || c || i || secret)` for block counters `i = 0, 1, ..`
/// (`c` one byte, `i` four bytes big-endian), reduced mod `p`. Squares equal
/// to 0 or 1 are discarded and the next attempt is made.
pub fn derive_generator(
    secret: &GroupSecret,
    params: &GroupParams,
) -> Result<GroupElement, GroupError> {
    let modulus = NonZero::new(*params.modulus()).expect("modulus is odd");
    for attempt in 0..GENERATOR_RETRY_LIMIT {
        let expanded = expand_secret(attempt, secret.bytes(), params.element_width());
        let t = natural_from_be(&expanded)
            .expect("expansion is element_width bytes")
            .rem_vartime(&modulus);
        if let Some(element) = square_into_subgroup(&t, params) {
            return Ok(element);
        }
    }
    Err(GroupError::GeneratorDerivation)
}

fn expand_secret(attempt: u8, secret: &[u8], width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(width + 32);
    let mut block: u32 = 0;
    while out.len() < width {
        let mut h = Sha256::new();
        h.update(GENERATOR_LABEL);
        h.update([attempt]);
        h.update(block.to_be_bytes());
        h.update(secret);
        out.extend_from_slice(&h.finalize());
        block += 1;
    }
    out.truncate(width);
    out
}

/// `t^2 mod p`, or `None` when the square is 0 or 1.
fn square_into_subgroup(t: &Natural, params: &GroupParams) -> Option<GroupElement> {
    let sq = params.square(t);
    if sq == Natural::ZERO || sq == Natural::ONE {
        None
    } else {
        Some(GroupElement(sq))
    }
}

/// Decodes a wire element and checks `2 <= v <= p-2` and `v^q = 1`.
pub fn validate_element(raw: &[u8], params: &GroupParams) -> Result<GroupElement, GroupError> {
    if raw.len() != params.element_width() {
        return Err(GroupError::Length {
            expected: params.element_width(),
            got: raw.len(),
        });
    }
    let value = natural_from_be(raw).ok_or(GroupError::Range)?;
    let upper = params.modulus().wrapping_sub(&Natural::ONE);
    if value <= Natural::ONE || value >= upper {
        return Err(GroupError::Range);
    }
    if !params.in_subgroup(&value) {
        return Err(GroupError::Subgroup);
    }
    Ok(GroupElement(value))
}

/// Uniform exponent in `[1, q-1]` by rejection sampling on `bitlen(q)` bits.
pub fn random_exponent(rng: &mut (impl RngCore + ?Sized), params: &GroupParams) -> Exponent {
    let bits = params.order_bits();
    let width = bits.div_ceil(8) as usize;
    let top_mask = match bits % 8 {
        0 => 0xff,
        r => (1u8 << r) - 1,
    };
    let mut buf = vec![0u8; width];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= top_mask;
        let candidate = natural_from_be(&buf).expect("width bounded by q");
        if candidate != Natural::ZERO && candidate < *params.order() {
            return Exponent(candidate);
        }
    }
}

/// Fixed-base comb: entry `[w][j]` holds `base^(j * 16^w)` in Montgomery
/// form.
struct CombTable {
    windows: Vec<[Natural; COMB_ENTRIES]>,
}

impl CombTable {
    fn build(params: &GroupParams, base: &Natural) -> Self {
        let count = params.order_bits.div_ceil(COMB_WINDOW_BITS) as usize;
        let mut windows = Vec::with_capacity(count);
        let mut base = MontyForm::new(base, params.monty);
        for _ in 0..count {
            let mut row = [Natural::ZERO; COMB_ENTRIES];
            let mut acc = MontyForm::one(params.monty);
            for slot in row.iter_mut() {
                *slot = acc.to_montgomery();
                acc *= base;
            }
            windows.push(row);
            for _ in 0..COMB_WINDOW_BITS {
                base = base.square();
            }
        }
        Self { windows }
    }

    fn pow(&self, params: &GroupParams, exponent: &Natural) -> Natural {
        let words = exponent.as_words();
        let word_bits = crypto_bigint::Word::BITS;
        let mut acc = MontyForm::one(params.monty);
        for (w, row) in self.windows.iter().enumerate() {
            let bit = w as u32 * COMB_WINDOW_BITS;
            let nibble = (words[(bit / word_bits) as usize] >> (bit % word_bits)) as u32
                & (COMB_ENTRIES as u32 - 1);
            let mut selected = row[0];
            for (j, entry) in row.iter().enumerate().skip(1) {
                let choice = nibble.ct_eq(&(j as u32));
                selected = Natural::conditional_select(&selected, entry, choice);
            }
            acc *= MontyForm::from_montgomery(selected, params.monty);
        }
        acc.retrieve()
    }
}

/// Jacobi symbol `(a | n)` for odd `n`, binary algorithm. Variable time;
/// only used on public values.
fn jacobi(a: &Natural, n: &Natural) -> i8 {
    let modulus = NonZero::new(*n).expect("odd modulus");
    let mut a = a.rem_vartime(&modulus);
    let mut n = *n;
    let mut sign = 1i8;
    while a != Natural::ZERO {
        let tz = a.trailing_zeros();
        a = a.shr_vartime(tz);
        let n_mod_8 = n.as_words()[0] & 7;
        if tz % 2 == 1 && (n_mod_8 == 3 || n_mod_8 == 5) {
            sign = -sign;
        }
        if a < n {
            std::mem::swap(&mut a, &mut n);
            if a.as_words()[0] & 3 == 3 && n.as_words()[0] & 3 == 3 {
                sign = -sign;
            }
        }
        a = a.wrapping_sub(&n);
    }
    if n == Natural::ONE {
        sign
    } else {
        0
    }
}

/// Miller-Rabin with random bases, preceded by trial division.
fn is_probable_prime(n: &Natural, rounds: usize, rng: &mut impl RngCore) -> bool {
    const SMALL_PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
    if *n < Natural::from_u8(2) {
        return false;
    }
    for &sp in &SMALL_PRIMES {
        let sp_n = Natural::from_u64(sp);
        if *n == sp_n {
            return true;
        }
        let rem = n.rem_vartime(&NonZero::new(sp_n).expect("nonzero"));
        if rem == Natural::ZERO {
            return false;
        }
    }
    let modulus = Option::<Odd<Natural>>::from(Odd::new(*n)).expect("odd after trial division");
    let params = MontyParams::new_vartime(modulus);
    let n_minus_one = n.wrapping_sub(&Natural::ONE);
    let s = n_minus_one.trailing_zeros();
    let d = n_minus_one.shr_vartime(s);
    let one = MontyForm::one(params);
    let minus_one = MontyForm::new(&n_minus_one, params);
    // Bases are drawn from [2, n-2].
    let span = NonZero::new(n.wrapping_sub(&Natural::from_u8(3))).expect("n > 47");
    let byte_len = n.bits().div_ceil(8) as usize;
    let mut buf = vec![0u8; byte_len + 8];
    'rounds: for _ in 0..rounds {
        rng.fill_bytes(&mut buf);
        let wide = natural_from_be(&buf[..buf.len().min(MAX_BYTES)]).expect("bounded");
        let base = wide
            .rem_vartime(&span)
            .wrapping_add(&Natural::from_u8(2));
        let mut x = MontyForm::new(&base, params).pow_bounded_exp(&d, d.bits().max(1));
        if x == one || x == minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.square();
            if x == minus_one {
                continue 'rounds;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}
