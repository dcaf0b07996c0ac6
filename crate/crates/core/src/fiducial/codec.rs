//! 6×6 square fiducial codec.
//!
//! The outer ring of cells is black. The inner 4×4 payload carries 16 bits,
//! row-major with bit 15 at the top-left cell; a set bit is a white cell.
//! Eight payload cells ([`DATA_CELLS`]) carry the id, the other eight are
//! parity.
//!
//! Codewords are drawn from the second-order Reed-Muller code RM(2,4) with
//! cell `(r, c)` labelled by the bits of `r` and `c`. That code has minimum
//! distance 4, and a quarter turn `(r, c) ↦ (c, 3 − r)` is affine in those
//! bits, so every rotation of a codeword is again a codeword. Picking one
//! word per id from distinct rotation orbits (seeded shuffle, bipartite
//! matching) therefore keeps all codewords at least [`MIN_DISTANCE`] apart
//! under any relative rotation.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const GRID: usize = 6;
pub const MIN_DISTANCE: u32 = 4;
pub const DICTIONARY_SEED: u64 = 0x5EED_CAB5;
pub const DICTIONARY_SIZE: usize = 256;
/// Payload cells holding the id bits, most significant first.
pub const DATA_CELLS: [(usize, usize); 8] = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (2, 0), (3, 0), (1, 1)];

/// Rotates a 4×4 payload a quarter turn clockwise.
pub fn rotate_payload(code: u16) -> u16 {
    let mut out = 0u16;
    for r in 0..4 {
        for c in 0..4 {
            if payload_bit(code, r, c) {
                // Cell (r, c) moves to (c, 3 − r).
                out |= 1 << (15 - (c * 4 + (3 - r)));
            }
        }
    }
    out
}

pub fn payload_bit(code: u16, row: usize, col: usize) -> bool {
    code >> (15 - (row * 4 + col)) & 1 == 1
}

fn rotations(code: u16) -> [u16; 4] {
    let r1 = rotate_payload(code);
    let r2 = rotate_payload(r1);
    [code, r1, r2, rotate_payload(r2)]
}

/// Immutable set of codewords indexed by marker id.
#[derive(Debug, Clone)]
pub struct Dictionary {
    codes: Vec<u16>,
    // Every quarter turn of every codeword -> (id, turns).
    lookup: HashMap<u16, (u16, u8)>,
}

/// Result of decoding a sampled payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoded {
    pub id: u16,
    /// Clockwise quarter turns that take the stored codeword to the sampled one.
    pub turns: u8,
    pub bit_errors: u32,
}

impl Dictionary {
    /// Validates separation exhaustively before accepting the codes.
    pub fn new(codes: Vec<u16>) -> Result<Self> {
        if codes.is_empty() || codes.len() > 1 << 16 {
            return Err(Error::Dictionary(format!("{} codes", codes.len())));
        }
        let d = min_rotational_distance(&codes);
        if d < MIN_DISTANCE {
            return Err(Error::Dictionary(format!(
                "minimum rotational Hamming distance {d} < {MIN_DISTANCE}"
            )));
        }
        let mut lookup = HashMap::with_capacity(codes.len() * 4);
        for (id, &c) in codes.iter().enumerate() {
            for (t, r) in rotations(c).into_iter().enumerate() {
                lookup.insert(r, (id as u16, t as u8));
            }
        }
        Ok(Dictionary { codes, lookup })
    }

    /// The 256-entry dictionary used throughout the crate.
    pub fn standard() -> &'static Dictionary {
        static DICT: OnceLock<Dictionary> = OnceLock::new();
        DICT.get_or_init(|| {
            Dictionary::new(generate_codes(DICTIONARY_SEED, DICTIONARY_SIZE).expect("standard dictionary search succeeds"))
                .expect("generated codes are separated")
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, id: u16) -> Option<u16> {
        self.codes.get(id as usize).copied()
    }

    /// 6×6 cell grid of a marker, row-major, `true` = white.
    pub fn grid(&self, id: u16) -> Option<[[bool; GRID]; GRID]> {
        let code = self.code(id)?;
        let mut g = [[false; GRID]; GRID];
        for r in 0..4 {
            for c in 0..4 {
                g[r + 1][c + 1] = payload_bit(code, r, c);
            }
        }
        Some(g)
    }

    /// Exact match first, then single-bit correction.
    pub fn decode(&self, sampled: u16) -> Option<Decoded> {
        if let Some(&(id, turns)) = self.lookup.get(&sampled) {
            return Some(Decoded { id, turns, bit_errors: 0 });
        }
        (0..16).find_map(|b| {
            self.lookup.get(&(sampled ^ (1 << b))).map(|&(id, turns)| Decoded { id, turns, bit_errors: 1 })
        })
    }
}

/// Smallest Hamming distance between codewords under all relative quarter
/// turns, including a codeword against its own non-trivial turns.
pub fn min_rotational_distance(codes: &[u16]) -> u32 {
    let mut best = u32::MAX;
    for (i, &a) in codes.iter().enumerate() {
        let ra = rotations(a);
        for r in &ra[1..] {
            best = best.min((a ^ r).count_ones());
        }
        for &b in &codes[i + 1..] {
            for r in rotations(b) {
                best = best.min((a ^ r).count_ones());
            }
        }
    }
    best
}

/// The 2048 words of RM(2,4) on the payload grid.
pub fn reed_muller_2_4() -> Vec<u16> {
    let var = |k: usize, i: usize| -> bool {
        let (r, c) = (k / 4, k % 4);
        [r >> 1 & 1, r & 1, c >> 1 & 1, c & 1][i] == 1
    };
    let mut monomials: Vec<Vec<usize>> = vec![vec![]];
    monomials.extend((0..4).map(|i| vec![i]));
    for i in 0..4 {
        for j in i + 1..4 {
            monomials.push(vec![i, j]);
        }
    }
    let mut words = vec![0u16];
    for m in monomials {
        let g = (0..16).filter(|&k| m.iter().all(|&i| var(k, i))).fold(0u16, |w, k| w | 1 << (15 - k));
        let more: Vec<u16> = words.iter().map(|w| w ^ g).collect();
        words.extend(more);
    }
    words
}

/// Id carried by a payload's data cells.
pub fn data_bits(code: u16) -> u16 {
    DATA_CELLS.iter().fold(0, |acc, &(r, c)| acc << 1 | payload_bit(code, r, c) as u16)
}

/// One codeword per id `0..count`: candidates are RM(2,4) words whose data
/// cells spell the id and whose rotation orbit has four distinct members,
/// visited in a seeded shuffled order; ids are matched to distinct orbits
/// with augmenting paths.
pub fn generate_codes(seed: u64, count: usize) -> Result<Vec<u16>> {
    if count > 256 {
        return Err(Error::Dictionary("at most 256 ids fit in 8 data bits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_id: Vec<Vec<u16>> = vec![Vec::new(); 256];
    for w in reed_muller_2_4() {
        let r = rotations(w);
        if r[2] != w {
            by_id[data_bits(w) as usize].push(w);
        }
    }
    for c in by_id.iter_mut() {
        c.shuffle(&mut rng);
    }
    let orbit = |w: u16| *rotations(w).iter().min().expect("four rotations");
    // orbit -> (id, word)
    let mut owner: HashMap<u16, (usize, u16)> = HashMap::new();
    fn augment(
        id: usize,
        by_id: &[Vec<u16>],
        owner: &mut HashMap<u16, (usize, u16)>,
        seen: &mut Vec<u16>,
        orbit: &dyn Fn(u16) -> u16,
    ) -> bool {
        for &w in &by_id[id] {
            let o = orbit(w);
            if seen.contains(&o) {
                continue;
            }
            seen.push(o);
            let free = match owner.get(&o) {
                None => true,
                Some(&(other, _)) => augment(other, by_id, owner, seen, orbit),
            };
            if free {
                owner.insert(o, (id, w));
                return true;
            }
        }
        false
    }
    for id in 0..count {
        if !augment(id, &by_id, &mut owner, &mut Vec::new(), &orbit) {
            return Err(Error::Dictionary(format!("no free codeword orbit for id {id}")));
        }
    }
    let mut codes = vec![0u16; count];
    for (id, w) in owner.into_values() {
        codes[id] = w;
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_has_order_four() {
        for code in [0x8000u16, 0x1234, 0xBEEF, 0x0001] {
            assert_ne!(rotate_payload(code), code);
            let r = rotations(code);
            assert_eq!(rotate_payload(r[3]), code);
        }
        // Top-left moves to top-right under a clockwise turn.
        assert_eq!(rotate_payload(0x8000), 0x1000);
    }

    #[test]
    fn standard_dictionary_is_separated() {
        let d = Dictionary::standard();
        assert_eq!(d.len(), 256);
        let codes: Vec<u16> = (0..256).map(|i| d.code(i).unwrap()).collect();
        assert!(min_rotational_distance(&codes) >= MIN_DISTANCE);
        for (id, c) in codes.iter().enumerate() {
            assert_eq!(data_bits(*c), id as u16, "data cells carry the id");
        }
        assert_eq!(codes, generate_codes(DICTIONARY_SEED, DICTIONARY_SIZE).unwrap());
    }

    #[test]
    fn round_trip_all_ids_all_turns() {
        let d = Dictionary::standard();
        for id in 0..256u16 {
            let mut c = d.code(id).unwrap();
            for t in 0..4u8 {
                assert_eq!(d.decode(c), Some(Decoded { id, turns: t, bit_errors: 0 }));
                c = rotate_payload(c);
            }
        }
    }

    #[test]
    fn single_bit_errors_are_corrected() {
        let d = Dictionary::standard();
        for id in (0..256u16).step_by(7) {
            let c = d.code(id).unwrap();
            for b in 0..16 {
                let got = d.decode(c ^ (1 << b)).unwrap();
                assert_eq!((got.id, got.turns, got.bit_errors), (id, 0, 1));
            }
        }
    }

    #[test]
    fn malformed_dictionary_rejected() {
        assert!(Dictionary::new(vec![]).is_err());
        assert!(Dictionary::new(vec![0x1234, 0x1235]).is_err());
        // Rotationally symmetric payload cannot give an orientation.
        assert!(Dictionary::new(vec![0xFFFF]).is_err());
        assert!(generate_codes(1, 300).is_err());
    }

    #[test]
    fn reed_muller_code_is_closed_under_rotation() {
        let words = reed_muller_2_4();
        assert_eq!(words.len(), 2048);
        let set: std::collections::HashSet<u16> = words.iter().copied().collect();
        assert_eq!(set.len(), 2048);
        for &w in &words {
            assert!(set.contains(&rotate_payload(w)));
            if w != 0 {
                assert!(w.count_ones() >= MIN_DISTANCE);
            }
        }
    }

    #[test]
    fn grid_has_black_border() {
        let g = Dictionary::standard().grid(42).unwrap();
        for k in 0..GRID {
            assert!(!g[0][k] && !g[GRID - 1][k] && !g[k][0] && !g[k][GRID - 1]);
        }
        assert!(Dictionary::standard().grid(300).is_none());
    }

    proptest::proptest! {
        #[test]
        fn any_turn_with_one_flip_decodes(id in 0u16..256, turns in 0u8..4, flip in proptest::option::of(0u32..16)) {
            let dict = Dictionary::standard();
            let mut code = dict.code(id).unwrap();
            for _ in 0..turns {
                code = rotate_payload(code);
            }
            let sampled = flip.map_or(code, |b| code ^ (1 << b));
            let d = dict.decode(sampled).unwrap();
            proptest::prop_assert_eq!((d.id, d.turns, d.bit_errors), (id, turns, flip.is_some() as u32));
        }
    }
}
