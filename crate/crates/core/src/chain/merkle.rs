//! Binary SHA-256 Merkle root over a block's transactions.
//!
//! Leaves are `SHA-256(data)`, parents `SHA-256(left || right)`. A level with
//! an odd number of nodes has its last node paired with itself.

use sha2::{Digest, Sha256};

use crate::{Error, Result, Stage};

pub type Hash32 = [u8; 32];

pub fn sha256(data: &[u8]) -> Hash32 {
    Sha256::digest(data).into()
}

fn hash_pair(left: &Hash32, right: &Hash32) -> Hash32 {
    let mut hasher = Sha256::new();
    hasher.update(left);
    hasher.update(right);
    hasher.finalize().into()
}

pub fn merkle_root<T: AsRef<[u8]>>(leaves: &[T]) -> Result<Hash32> {
    if leaves.is_empty() {
        return Err(Error::domain(Stage::Chain, "merkle root of zero leaves"));
    }
    let mut level: Vec<Hash32> = leaves.iter().map(|leaf| sha256(leaf.as_ref())).collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| hash_pair(&pair[0], pair.get(1).unwrap_or(&pair[0])))
            .collect();
    }
    Ok(level[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Recursive reference: pad the leaf-hash list to the next level's even
    /// size at every step, exactly as written in the definition.
    fn reference_root(hashes: Vec<Hash32>) -> Hash32 {
        if hashes.len() == 1 {
            return hashes[0];
        }
        let mut padded = hashes;
        if padded.len() % 2 == 1 {
            padded.push(*padded.last().unwrap());
        }
        let mut next = Vec::new();
        for i in (0..padded.len()).step_by(2) {
            let mut cat = padded[i].to_vec();
            cat.extend_from_slice(&padded[i + 1]);
            next.push(sha256(&cat));
        }
        reference_root(next)
    }

    #[test]
    fn single_leaf_is_its_hash() {
        assert_eq!(merkle_root(&[b"d"]).unwrap(), sha256(b"d"));
    }

    #[test]
    fn two_leaves() {
        let mut cat = sha256(b"d1").to_vec();
        cat.extend_from_slice(&sha256(b"d2"));
        assert_eq!(merkle_root(&[b"d1", b"d2"]).unwrap(), sha256(&cat));
    }

    #[test]
    fn three_leaves_duplicate_the_last() {
        let h: Vec<Hash32> = [b"a", b"b", b"c"].iter().map(|d| sha256(*d)).collect();
        let four = vec![h[0], h[1], h[2], h[2]];
        assert_eq!(merkle_root(&[b"a", b"b", b"c"]).unwrap(), reference_root(four));
    }

    #[test]
    fn matches_reference_for_many_sizes() {
        for n in 1..40usize {
            let leaves: Vec<Vec<u8>> = (0..n).map(|i| format!("tx-{i}").into_bytes()).collect();
            let expected = reference_root(leaves.iter().map(|l| sha256(l)).collect());
            assert_eq!(merkle_root(&leaves).unwrap(), expected, "n = {n}");
        }
    }

    #[test]
    fn empty_is_an_error() {
        let none: [&[u8]; 0] = [];
        assert!(matches!(merkle_root(&none), Err(Error::Domain { .. })));
    }

    #[test]
    fn known_sha256_vector() {
        assert_eq!(
            hex::encode(sha256(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
