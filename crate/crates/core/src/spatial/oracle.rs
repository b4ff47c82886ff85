use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use super::DiagRelation;

pub const MAX_ORACLE_ENTITIES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("brute-force oracle refuses {0} entities (limit {MAX_ORACLE_ENTITIES})")]
pub struct OracleRefused(pub usize);

/// All orderings of `0..n` (Heap's algorithm).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Brute-force satisfiability: tries every row ordering against every column
/// ordering of the entities and checks each relation's two strict inequalities.
pub fn satisfiability_oracle(relations: &[DiagRelation]) -> Result<bool, OracleRefused> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for r in relations {
        for name in [r.subject.as_str(), r.object.as_str()] {
            let next = ids.len();
            ids.entry(name).or_insert(next);
        }
    }
    let n = ids.len();
    if n > MAX_ORACLE_ENTITIES {
        return Err(OracleRefused(n));
    }
    // (subject, object, subject-north, subject-west)
    let cons: Vec<(usize, usize, bool, bool)> = relations
        .iter()
        .map(|r| {
            let (north, west) = r.dir.axes();
            (ids[r.subject.as_str()], ids[r.object.as_str()], north, west)
        })
        .collect();
    let perms = permutations(n);
    for rows in &perms {
        let rows_ok = cons.iter().all(|&(s, o, north, _)| {
            if north { rows[s] < rows[o] } else { rows[o] < rows[s] }
        });
        if !rows_ok {
            continue;
        }
        for cols in &perms {
            let all_ok = cons.iter().all(|&(s, o, north, west)| {
                let row_ok = if north { rows[s] < rows[o] } else { rows[o] < rows[s] };
                let col_ok = if west { cols[s] < cols[o] } else { cols[o] < cols[s] };
                row_ok && col_ok
            });
            if all_ok {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
