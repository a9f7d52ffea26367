use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use super::AuditError;
use crate::blindsig::{factorize, full_domain_hash, PublicKey};
use crate::codec::{self, hex_int};
use crate::credentials::Serial;
use crate::transcript::{kind, TranscriptEvent};

/// Largest modulus for which every unit is enumerated.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMode {
    /// Try every unit `r` as a blinding witness.
    Exhaustive,
    /// Decide whether `b / m` is an e-th power residue from the factorisation.
    Algebraic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IssuanceRow {
    pub node: String,
    pub seq: u64,
    pub timestamp: u64,
    #[serde(with = "hex_int")]
    pub blinded_value: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PresentationColumn {
    pub node: String,
    pub seq: u64,
    pub timestamp: u64,
    pub serial: Serial,
    #[serde(with = "hex_int")]
    pub message: BigUint,
}

/// `cells[i][j]` is true when some unit `r` satisfies `b_i = m_j * r^e mod n`,
/// i.e. issuance `i` could have produced presentation `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConsistencyMatrix {
    pub attribute_id: String,
    pub mode: MatrixMode,
    pub rows: Vec<IssuanceRow>,
    pub cols: Vec<PresentationColumn>,
    pub cells: Vec<Vec<bool>>,
    /// Number of witnesses per cell; only available in exhaustive mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_counts: Option<Vec<Vec<u64>>>,
}

impl ConsistencyMatrix {
    pub fn is_all_true(&self) -> bool {
        self.cells.iter().flatten().all(|&c| c)
    }
}

/// Builds the matrix for one attribute key from issuance events and accepted
/// presentation events. Events for other attributes are ignored.
pub fn consistency_matrix(
    issuer_events: &[TranscriptEvent],
    rp_events: &[TranscriptEvent],
    key: &PublicKey,
    mode: MatrixMode,
) -> Result<ConsistencyMatrix, AuditError> {
    let attribute = key.attribute_id();
    let rows = issuer_events
        .iter()
        .filter(|e| e.kind == kind::ISSUANCE && e.field("attribute_id") == Some(attribute))
        .map(|e| {
            let b = e.field("blinded_value").ok_or_else(|| AuditError::bad_event(e, "missing blinded_value"))?;
            Ok(IssuanceRow {
                node: e.node.clone(),
                seq: e.seq,
                timestamp: e.timestamp,
                blinded_value: codec::int_from_hex(b).map_err(|err| AuditError::bad_event(e, err))?,
            })
        })
        .collect::<Result<Vec<_>, AuditError>>()?;
    let cols = rp_events
        .iter()
        .filter(|e| {
            e.kind == kind::PRESENTATION && e.field("attribute_id") == Some(attribute) && e.field("outcome") == Some("accept")
        })
        .map(|e| {
            let text = e.field("serial").ok_or_else(|| AuditError::bad_event(e, "missing serial"))?;
            let serial = Serial::from_hex(text).map_err(|err| AuditError::bad_event(e, err))?;
            let message = full_domain_hash(serial.as_bytes(), key)?.value().clone();
            Ok(PresentationColumn {
                node: e.node.clone(),
                seq: e.seq,
                timestamp: e.timestamp,
                serial,
                message,
            })
        })
        .collect::<Result<Vec<_>, AuditError>>()?;

    let (cells, witness_counts) = match mode {
        MatrixMode::Exhaustive => {
            let table = PowerTable::build(key)?;
            let counts: Vec<Vec<u64>> = rows
                .iter()
                .map(|row| cols.iter().map(|col| table.witnesses(&row.blinded_value, &col.message)).collect())
                .collect();
            let cells = counts.iter().map(|r| r.iter().map(|&c| c > 0).collect()).collect();
            (cells, Some(counts))
        }
        MatrixMode::Algebraic => {
            let residue = ResidueTest::new(key)?;
            let cells = rows
                .iter()
                .map(|row| cols.iter().map(|col| residue.solvable(&row.blinded_value, &col.message)).collect())
                .collect();
            (cells, None)
        }
    };
    Ok(ConsistencyMatrix {
        attribute_id: attribute.to_owned(),
        mode,
        rows,
        cols,
        cells,
        witness_counts,
    })
}

/// Every unit `r` for which `m * r^e = b (mod n)`, by enumeration.
pub fn blinding_witnesses(blinded: &BigUint, message: &BigUint, key: &PublicKey) -> Result<Vec<u64>, AuditError> {
    let table = PowerTable::build(key)?;
    let Some(target) = table.quotient(blinded, message) else {
        return Ok(Vec::new());
    };
    Ok(table.roots.get(&target).cloned().unwrap_or_default())
}

/// `r^e mod n` for every unit `r`, inverted into a map from power to roots.
struct PowerTable {
    n: u64,
    roots: HashMap<u64, Vec<u64>>,
}

impl PowerTable {
    fn build(key: &PublicKey) -> Result<Self, AuditError> {
        let n = key
            .modulus()
            .to_u64()
            .filter(|&n| n <= EXHAUSTIVE_LIMIT)
            .ok_or_else(|| AuditError::ModulusTooLargeForExhaustive(key.modulus().clone()))?;
        let e = key.exponent();
        let mut roots: HashMap<u64, Vec<u64>> = HashMap::new();
        for r in 1..n {
            if r.gcd(&n) == 1 {
                let power = BigUint::from(r).modpow(e, key.modulus()).to_u64().expect("below n");
                roots.entry(power).or_default().push(r);
            }
        }
        Ok(Self { n, roots })
    }

    /// `b * m^-1 mod n`, or `None` when either is not a unit.
    fn quotient(&self, b: &BigUint, m: &BigUint) -> Option<u64> {
        let n = BigUint::from(self.n);
        if !b.gcd(&n).is_one() {
            return None;
        }
        let m_inv = m.modinv(&n)?;
        (b * m_inv % &n).to_u64()
    }

    fn witnesses(&self, b: &BigUint, m: &BigUint) -> u64 {
        self.quotient(b, m)
            .and_then(|t| self.roots.get(&t))
            .map_or(0, |roots| roots.len() as u64)
    }
}

/// Power-residue test over the prime factors of a square-free modulus: `c` is
/// an e-th power mod `p` iff `c^((p-1)/gcd(e, p-1)) = 1 (mod p)`.
struct ResidueTest {
    n: BigUint,
    checks: Vec<(BigUint, BigUint)>,
}

impl ResidueTest {
    fn new(key: &PublicKey) -> Result<Self, AuditError> {
        let factors = factorize(key.modulus());
        if factors.windows(2).any(|w| w[0] == w[1]) {
            return Err(AuditError::NotSquareFree(key.modulus().clone()));
        }
        let checks = factors
            .into_iter()
            .map(|p| {
                let p_minus_one = &p - 1u32;
                let g = key.exponent().gcd(&p_minus_one);
                (p, p_minus_one / g)
            })
            .collect();
        Ok(Self {
            n: key.modulus().clone(),
            checks,
        })
    }

    fn solvable(&self, b: &BigUint, m: &BigUint) -> bool {
        if !b.gcd(&self.n).is_one() {
            return false;
        }
        let Some(m_inv) = m.modinv(&self.n) else {
            return false;
        };
        let c = b * m_inv % &self.n;
        self.checks.iter().all(|(p, exp)| (&c % p).modpow(exp, p).is_one())
    }
}

/// Size of each presentation's anonymity set: the number of issuances
/// consistent with it.
pub fn anonymity_set_sizes(matrix: &ConsistencyMatrix) -> Vec<usize> {
    (0..matrix.cols.len())
        .map(|j| matrix.cells.iter().filter(|row| row[j]).count())
        .collect()
}

/// Presentations whose consistent issuances include exactly one that happened
/// earlier in time. Such presentations are linkable by timing alone, which the
/// cryptography does not protect against.
pub fn timing_unique_candidates(matrix: &ConsistencyMatrix) -> usize {
    matrix
        .cols
        .iter()
        .enumerate()
        .filter(|(j, col)| {
            matrix
                .rows
                .iter()
                .zip(&matrix.cells)
                .filter(|(row, cells)| cells[*j] && row.timestamp < col.timestamp)
                .count()
                == 1
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blindsig::keygen;
    use crate::transcript::Transcript;
    use proptest::prelude::*;
    use serde_json::json;

    fn toy() -> PublicKey {
        keygen(&BigUint::from(5u32), &BigUint::from(11u32), &BigUint::from(3u32), "t")
            .unwrap()
            .public()
            .clone()
    }

    fn units(n: u64) -> Vec<u64> {
        (1..n).filter(|x| num_integer::gcd(*x, n) == 1).collect()
    }

    /// Brute-force oracle: witnesses found by direct modular arithmetic in u64.
    fn oracle_witnesses(b: u64, m: u64, n: u64, e: u32) -> Vec<u64> {
        units(n)
            .into_iter()
            .filter(|&r| {
                let mut p = 1u64;
                for _ in 0..e {
                    p = p * r % n;
                }
                m * p % n == b
            })
            .collect()
    }

    #[test]
    fn single_witness_for_toy_cell() {
        assert_eq!(oracle_witnesses(9, 8, 55, 3), vec![2]);
        assert_eq!(
            blinding_witnesses(&BigUint::from(9u32), &BigUint::from(8u32), &toy()).unwrap(),
            vec![2]
        );
    }

    #[test]
    fn every_unit_pair_has_one_witness() {
        let key = toy();
        for m in units(55) {
            for b in units(55) {
                let w = blinding_witnesses(&BigUint::from(b), &BigUint::from(m), &key).unwrap();
                assert_eq!(w, oracle_witnesses(b, m, 55, 3));
                assert_eq!(w.len(), 1);
            }
        }
    }

    #[test]
    fn exhaustive_limit() {
        let big = PublicKey::new(BigUint::from(EXHAUSTIVE_LIMIT + 3), BigUint::from(3u32), "x").unwrap();
        assert!(matches!(
            consistency_matrix(&[], &[], &big, MatrixMode::Exhaustive),
            Err(AuditError::ModulusTooLargeForExhaustive(_))
        ));
    }

    fn events(key: &PublicKey, issuances: &[u64], serials: &[[u8; 32]]) -> (Vec<TranscriptEvent>, Vec<TranscriptEvent>) {
        let mut issuer = Transcript::new("tax");
        for (t, b) in issuances.iter().enumerate() {
            issuer.append(
                t as u64,
                kind::ISSUANCE,
                [
                    ("attribute_id", json!(key.attribute_id())),
                    ("blinded_value", json!(format!("{b:x}"))),
                ],
            );
        }
        let mut rp = Transcript::new("rp");
        for (t, s) in serials.iter().enumerate() {
            rp.append(
                100 + t as u64,
                kind::PRESENTATION,
                [
                    ("attribute_id", json!(key.attribute_id())),
                    ("serial", json!(hex::encode(s))),
                    ("outcome", json!("accept")),
                ],
            );
        }
        (issuer.events().to_vec(), rp.events().to_vec())
    }

    #[test]
    fn small_matrices() {
        let key = toy();
        let (iss, pres) = events(&key, &[9], &[[0; 32]]);
        let m = consistency_matrix(&iss, &pres, &key, MatrixMode::Exhaustive).unwrap();
        assert_eq!(m.cells, vec![vec![true]]);
        assert_eq!(anonymity_set_sizes(&m), vec![1]);

        let (iss, pres) = events(&key, &[9, 2, 31], &[[0; 32], [1; 32], [2; 32]]);
        let m = consistency_matrix(&iss, &pres, &key, MatrixMode::Exhaustive).unwrap();
        assert!(m.is_all_true());
        assert_eq!(anonymity_set_sizes(&m), vec![3, 3, 3]);
        assert_eq!(m.witness_counts.as_ref().unwrap(), &vec![vec![1; 3]; 3]);
        assert_eq!(consistency_matrix(&iss, &pres, &key, MatrixMode::Algebraic).unwrap().cells, m.cells);
        // All issuances precede all presentations, so timing does not single any out.
        assert_eq!(timing_unique_candidates(&m), 0);
    }

    #[test]
    fn empty_matrix() {
        let m = consistency_matrix(&[], &[], &toy(), MatrixMode::Exhaustive).unwrap();
        assert!(anonymity_set_sizes(&m).is_empty());
    }

    #[test]
    fn modes_agree_when_exponent_shares_factor_with_lambda() {
        // e = 5 divides lambda(55) = 20: only a fifth of the units are 5th powers.
        let key = PublicKey::new(BigUint::from(55u32), BigUint::from(5u32), "t").unwrap();
        let table = PowerTable::build(&key).unwrap();
        let residue = ResidueTest::new(&key).unwrap();
        let mut solvable = 0;
        for m in units(55) {
            for b in units(55) {
                let (bb, mm) = (BigUint::from(b), BigUint::from(m));
                let exhaustive = table.witnesses(&bb, &mm);
                assert_eq!(exhaustive as usize, oracle_witnesses(b, m, 55, 5).len());
                assert_eq!(exhaustive > 0, residue.solvable(&bb, &mm), "b={b} m={m}");
                solvable += usize::from(exhaustive > 0);
            }
        }
        assert_eq!(solvable, 40 * 40 / 5);
    }

    proptest! {
        #[test]
        fn modes_agree_on_random_semiprimes(
            pi in 0usize..10, qi in 0usize..10, e in prop::sample::select(vec![3u64, 5, 7, 9, 11, 13]),
            b in 1u64..10_000, m in 1u64..10_000,
        ) {
            const PRIMES: [u64; 10] = [7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
            prop_assume!(pi != qi);
            let n = PRIMES[pi] * PRIMES[qi];
            let key = PublicKey::new(BigUint::from(n), BigUint::from(e), "t").unwrap();
            let (b, m) = (BigUint::from(b % n), BigUint::from(m % n));
            let table = PowerTable::build(&key).unwrap();
            let residue = ResidueTest::new(&key).unwrap();
            prop_assert_eq!(table.witnesses(&b, &m) > 0, residue.solvable(&b, &m));
        }
    }
}
