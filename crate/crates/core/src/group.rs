//! Prime-order arithmetic shared by the extraction signatures and the account
//! keys: the multiplicative group of integers modulo a prime `p` with a
//! generator `g` of the full group.

use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_prime::nt_funcs::{factorize64, is_prime};
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("modulus is not prime")]
    NotPrime,
    #[error("generator must satisfy 1 < g < p")]
    GeneratorOutOfRange,
    #[error("g does not generate the full group (g^((p-1)/{0}) = 1)")]
    NotGenerator(BigUint),
    #[error("cannot factor p-1 to certify the generator (use a safe prime)")]
    UncertifiedGenerator,
    #[error("exponent outside [1, p-2]")]
    ExponentOutOfRange,
}

/// Safe prime p = 2q + 1 just below 2^64, generator 2.
const TEST_P: u64 = 0xffff_ffff_ffff_fa43;
const TEST_G: u64 = 2;

/// 2048-bit MODP prime (RFC 3526 group 14). The RFC generator 2 only spans
/// the order-q subgroup, so the smallest full-group generator is used.
const PRODUCTION_P_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437\
4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05\
98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718\
3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";
const PRODUCTION_G: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupProfile {
    /// 64-bit safe prime: fast enough for exhaustive property tests.
    Test,
    /// 2048-bit safe prime for realistic runs.
    Production,
}

impl GroupProfile {
    pub fn params(self) -> &'static GroupParams {
        static TEST: OnceLock<GroupParams> = OnceLock::new();
        static PRODUCTION: OnceLock<GroupParams> = OnceLock::new();
        match self {
            GroupProfile::Test => TEST.get_or_init(|| {
                GroupParams::new(BigUint::from(TEST_P), BigUint::from(TEST_G))
                    .expect("test profile is valid")
            }),
            GroupProfile::Production => PRODUCTION.get_or_init(|| {
                let p = BigUint::parse_bytes(PRODUCTION_P_HEX.as_bytes(), 16).unwrap();
                GroupParams::new(p, BigUint::from(PRODUCTION_G))
                    .expect("production profile is valid")
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupProfile::Test => "test",
            GroupProfile::Production => "production",
        }
    }
}

impl std::str::FromStr for GroupProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(GroupProfile::Test),
            "production" => Ok(GroupProfile::Production),
            other => Err(format!(
                "unknown group profile `{other}` (expected test|production)"
            )),
        }
    }
}

/// Public group description `{p, g}`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    g: BigUint,
    order: BigUint,
    /// `p` when it fits a machine word, enabling native arithmetic.
    p64: Option<u64>,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "GroupParams {{ p: {} bits, g: {} }}",
            self.p.bits(),
            self.g
        )
    }
}

impl GroupParams {
    /// Validates primality of `p` and that `g` generates all of Z*_p.
    pub fn new(p: BigUint, g: BigUint) -> Result<Self, ParamError> {
        if p < BigUint::from(5u8) || !is_prime(&p, None).probably() {
            return Err(ParamError::NotPrime);
        }
        if g <= BigUint::one() || g >= p {
            return Err(ParamError::GeneratorOutOfRange);
        }
        let order = &p - 1u32;
        for q in prime_factors_of_order(&order)? {
            if g.modpow(&(&order / &q), &p).is_one() {
                return Err(ParamError::NotGenerator(q));
            }
        }
        let p64 = p.to_u64();
        Ok(GroupParams { p, g, order, p64 })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    /// `p - 1`, the order of the group and the modulus for exponents.
    pub fn order(&self) -> &BigUint {
        &self.order
    }

    /// Width of `p` in bytes.
    pub fn byte_len(&self) -> usize {
        self.p.bits().div_ceil(8) as usize
    }

    pub fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        match (self.p64, (base % &self.p).to_u64()) {
            (Some(p), Some(b)) => BigUint::from(pow_u64(b, exp, p)),
            _ => base.modpow(exp, &self.p),
        }
    }

    pub fn gen_pow(&self, exp: &BigUint) -> BigUint {
        self.pow(&self.g, exp)
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }

    /// Uniform exponent in `[1, p-2]`.
    pub fn random_exponent<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.order)
    }

    /// `true` for elements of Z*_p.
    pub fn is_unit(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p
    }

    /// SHA-256 of `bytes` read big-endian and reduced into Z_p.
    pub fn hash_to_zp(&self, bytes: &[u8]) -> BigUint {
        BigUint::from_bytes_be(&Sha256::digest(bytes)) % &self.p
    }
}

fn prime_factors_of_order(order: &BigUint) -> Result<Vec<BigUint>, ParamError> {
    if let Some(small) = order.to_u64() {
        return Ok(factorize64(small).into_keys().map(BigUint::from).collect());
    }
    // Large moduli must be safe primes: p - 1 = 2q.
    let (q, rem) = order.div_rem(&BigUint::from(2u8));
    if rem.is_zero() && is_prime(&q, None).probably() {
        Ok(vec![BigUint::from(2u8), q])
    } else {
        Err(ParamError::UncertifiedGenerator)
    }
}

/// `x mod m` for a signed intermediate, mapped into `[0, m)`.
fn mul_u64(a: u64, b: u64, p: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(p)) as u64
}

/// `base^exp mod p` for `base < p < 2^64`.
fn pow_u64(base: u64, exp: &BigUint, p: u64) -> u64 {
    let bits = exp.bits();
    let mut acc = 1 % p;
    for i in (0..bits).rev() {
        acc = mul_u64(acc, acc, p);
        if exp.bit(i) {
            acc = mul_u64(acc, base, p);
        }
    }
    acc
}

pub fn mod_sub(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    let a = a % m;
    let b = b % m;
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

/// Inverse of `a` modulo `m`, when `gcd(a, m) = 1`.
pub fn mod_inv(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    (a % m).modinv(m)
}

pub fn gcd(a: &BigUint, b: &BigUint) -> BigUint {
    a.gcd(b)
}
