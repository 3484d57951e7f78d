//! Private-key recovery from a single full signature.
//!
//! All seven components share the nonce `k`, so for two positions
//! `k·(δ_i - δ_j) ≡ h_i - h_j (mod p-1)`. When `δ_i - δ_j` is invertible this
//! yields `k`, and then `a·r ≡ h_i - k·δ_i (mod p-1)` yields `a`.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use super::{hash_submessage, CesPublicKey, FullSignature, PARTS};
use crate::group::{gcd, mod_inv, mod_sub};

/// Largest `gcd(r, p-1)` for which every solution of `a·r ≡ c` is tried.
const MAX_CANDIDATES: u64 = 1 << 16;

/// Recovers the signer's private exponent from the public record and its
/// full signature, or `None` if no pair of components has an invertible
/// difference.
pub fn recover_private_exponent<M: AsRef<[u8]>>(
    pk: &CesPublicKey,
    m: &[M],
    sig: &FullSignature,
) -> Option<BigUint> {
    if m.len() != PARTS {
        return None;
    }
    let params = &pk.params;
    let n = params.order();
    let digests: Vec<BigUint> = (1u8..)
        .zip(m)
        .map(|(i, m_i)| hash_submessage(params, m_i.as_ref(), sig.ceas, &sig.tag, i))
        .collect::<Result<_, _>>()
        .ok()?;

    for i in 0..PARTS {
        for j in i + 1..PARTS {
            let diff = mod_sub(&sig.deltas[i], &sig.deltas[j], n);
            let Some(diff_inv) = mod_inv(&diff, n) else {
                continue;
            };
            let k = (mod_sub(&digests[i], &digests[j], n) * diff_inv) % n;
            if params.gen_pow(&k) != sig.r {
                continue;
            }
            let c = mod_sub(&digests[i], &((&k * &sig.deltas[i]) % n), n);
            if let Some(a) = solve_linear(&sig.r, &c, n, |a| params.gen_pow(a) == pk.v) {
                return Some(a);
            }
        }
    }
    None
}

/// Solutions of `x·r ≡ c (mod n)`, filtered by `accept`.
fn solve_linear(
    r: &BigUint,
    c: &BigUint,
    n: &BigUint,
    accept: impl Fn(&BigUint) -> bool,
) -> Option<BigUint> {
    let d = gcd(r, n);
    if !(c % &d).is_zero() {
        return None;
    }
    let count = d.to_u64().filter(|&d| d <= MAX_CANDIDATES)?;
    let n_d = n / &d;
    let base = if n_d.is_one() {
        BigUint::zero()
    } else {
        ((c / &d) * mod_inv(&(r / &d), &n_d)?) % &n_d
    };
    (0..count)
        .map(|t| &base + &n_d * t)
        .find(|x| !x.is_zero() && accept(x))
        .map(|x| x.mod_floor(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ces::{keygen_with_exponent, sign_with_nonces, Ceas, CesTag};
    use crate::group::GroupParams;

    #[test]
    fn recovers_small_key() {
        let params = GroupParams::new(BigUint::from(23u8), BigUint::from(5u8)).unwrap();
        let m: Vec<&[u8]> = vec![b"a", b"b", b"c", b"d", b"e", b"f", b"g"];
        let ceas = Ceas::from_indices([2, 3, 5]).unwrap();
        for a in 1u32..22 {
            let sk = keygen_with_exponent(&params, a.into()).unwrap();
            for k in [1u32, 3, 5, 7, 9, 13, 15, 17, 19, 21] {
                let sig = sign_with_nonces(&sk, &m, ceas, CesTag::from_bytes([0; 10]), || k.into())
                    .unwrap();
                if let Some(found) = recover_private_exponent(sk.public(), &m, &sig) {
                    assert_eq!(params.gen_pow(&found), sk.public().v, "a={a} k={k}");
                }
            }
        }
    }

    #[test]
    fn linear_solver_handles_shared_factor() {
        // 4x ≡ 6 (mod 22) has solutions 7 and 18.
        let n = BigUint::from(22u8);
        let sols: Vec<_> = [7u8, 18]
            .iter()
            .map(|&want| solve_linear(&4u8.into(), &6u8.into(), &n, |x| x == &BigUint::from(want)))
            .collect();
        assert_eq!(sols, vec![Some(7u8.into()), Some(18u8.into())]);
        assert_eq!(solve_linear(&4u8.into(), &5u8.into(), &n, |_| true), None);
    }
}
