use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

const SMALL_PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Miller-Rabin with the first twelve prime bases, which is deterministic for
/// every candidate below 3.3e24. Larger candidates get `extra_rounds`
/// additional random bases drawn from a fixed internal sequence.
pub fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd = &n_minus_one >> shift;

    let witness = |a: &BigUint| -> bool {
        let mut x = a.modpow(&odd, n);
        if x.is_one() || x == n_minus_one {
            return false;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                return false;
            }
        }
        true
    };

    if SMALL_PRIMES.iter().any(|&a| witness(&BigUint::from(a))) {
        return false;
    }
    if n.bits() > 80 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(n.bits());
        for _ in 0..32 {
            let a = rng.gen_biguint_range(&two, &n_minus_one);
            if witness(&a) {
                return false;
            }
        }
    }
    true
}

/// Samples a prime with exactly `bits` bits and the top two bits set, so the
/// product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R, accept: impl Fn(&BigUint) -> bool) -> BigUint {
    assert!(bits >= 3, "prime size below three bits");
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate) && accept(&candidate) {
            return candidate;
        }
    }
}

/// Full factorisation by trial division for small inputs, Pollard-Brent rho
/// otherwise. Returns prime factors with multiplicity, ascending.
pub fn factorize(n: &BigUint) -> Vec<BigUint> {
    let mut out = Vec::new();
    let mut rest = n.clone();
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        while !rest.is_zero() && (&rest % &p).is_zero() {
            out.push(p.clone());
            rest /= &p;
        }
    }
    let mut stack = vec![rest];
    while let Some(m) = stack.pop() {
        if m.is_one() || m.is_zero() {
            continue;
        }
        if is_probable_prime(&m) {
            out.push(m);
            continue;
        }
        let d = rho(&m);
        stack.push(&m / &d);
        stack.push(d);
    }
    out.sort();
    out
}

fn rho(n: &BigUint) -> BigUint {
    let mut c = BigUint::one();
    loop {
        let f = |x: &BigUint| (x * x + &c) % n;
        let mut x = BigUint::from(2u32);
        let mut y = x.clone();
        let mut d = BigUint::one();
        while d.is_one() {
            x = f(&x);
            y = f(&f(&y));
            let diff = if x > y { &x - &y } else { &y - &x };
            d = diff.gcd(n);
        }
        if &d != n {
            return d;
        }
        c += 1u32;
    }
}
