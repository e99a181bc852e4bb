//! AES block cipher (128/192/256-bit keys) plus a deterministic field
//! codec for sensitive columns (ID numbers, phone numbers).
//!
//! Rounds follow the standard structure: an initial round-key addition,
//! N-1 full rounds of SubBytes/ShiftRows/MixColumns/AddRoundKey, and a
//! final round without MixColumns, with the Rijndael key schedule.
//!
//! The field codec is deterministic electronic-codebook over PKCS#7-padded
//! blocks so equal plaintexts yield equal ciphertexts, which is what makes
//! equality lookups on encrypted columns work. That property is the point;
//! it is NOT semantically secure for general-purpose encryption.

use thiserror::Error;

/// S-box: affine transform of the GF(2^8) multiplicative inverse. The
/// table is frozen here; `sbox_derivation_matches_table` regenerates it
/// from the field arithmetic.
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const INV_SBOX: [u8; 256] = [
    0x52, 0x09, 0x6a, 0xd5, 0x30, 0x36, 0xa5, 0x38, 0xbf, 0x40, 0xa3, 0x9e, 0x81, 0xf3, 0xd7, 0xfb,
    0x7c, 0xe3, 0x39, 0x82, 0x9b, 0x2f, 0xff, 0x87, 0x34, 0x8e, 0x43, 0x44, 0xc4, 0xde, 0xe9, 0xcb,
    0x54, 0x7b, 0x94, 0x32, 0xa6, 0xc2, 0x23, 0x3d, 0xee, 0x4c, 0x95, 0x0b, 0x42, 0xfa, 0xc3, 0x4e,
    0x08, 0x2e, 0xa1, 0x66, 0x28, 0xd9, 0x24, 0xb2, 0x76, 0x5b, 0xa2, 0x49, 0x6d, 0x8b, 0xd1, 0x25,
    0x72, 0xf8, 0xf6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xd4, 0xa4, 0x5c, 0xcc, 0x5d, 0x65, 0xb6, 0x92,
    0x6c, 0x70, 0x48, 0x50, 0xfd, 0xed, 0xb9, 0xda, 0x5e, 0x15, 0x46, 0x57, 0xa7, 0x8d, 0x9d, 0x84,
    0x90, 0xd8, 0xab, 0x00, 0x8c, 0xbc, 0xd3, 0x0a, 0xf7, 0xe4, 0x58, 0x05, 0xb8, 0xb3, 0x45, 0x06,
    0xd0, 0x2c, 0x1e, 0x8f, 0xca, 0x3f, 0x0f, 0x02, 0xc1, 0xaf, 0xbd, 0x03, 0x01, 0x13, 0x8a, 0x6b,
    0x3a, 0x91, 0x11, 0x41, 0x4f, 0x67, 0xdc, 0xea, 0x97, 0xf2, 0xcf, 0xce, 0xf0, 0xb4, 0xe6, 0x73,
    0x96, 0xac, 0x74, 0x22, 0xe7, 0xad, 0x35, 0x85, 0xe2, 0xf9, 0x37, 0xe8, 0x1c, 0x75, 0xdf, 0x6e,
    0x47, 0xf1, 0x1a, 0x71, 0x1d, 0x29, 0xc5, 0x89, 0x6f, 0xb7, 0x62, 0x0e, 0xaa, 0x18, 0xbe, 0x1b,
    0xfc, 0x56, 0x3e, 0x4b, 0xc6, 0xd2, 0x79, 0x20, 0x9a, 0xdb, 0xc0, 0xfe, 0x78, 0xcd, 0x5a, 0xf4,
    0x1f, 0xdd, 0xa8, 0x33, 0x88, 0x07, 0xc7, 0x31, 0xb1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xec, 0x5f,
    0x60, 0x51, 0x7f, 0xa9, 0x19, 0xb5, 0x4a, 0x0d, 0x2d, 0xe5, 0x7a, 0x9f, 0x93, 0xc9, 0x9c, 0xef,
    0xa0, 0xe0, 0x3b, 0x4d, 0xae, 0x2a, 0xf5, 0xb0, 0xc8, 0xeb, 0xbb, 0x3c, 0x83, 0x53, 0x99, 0x61,
    0x17, 0x2b, 0x04, 0x7e, 0xba, 0x77, 0xd6, 0x26, 0xe1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0c, 0x7d,
];

pub const BLOCK_LEN: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum AesError {
    #[error("key must be 16, 24 or 32 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("block must be exactly 16 bytes, got {0}")]
    BadBlockLength(usize),
    #[error("plaintext must be non-empty")]
    EmptyPlaintext,
    #[error("ciphertext length {0} is not a positive multiple of 16")]
    BadCiphertextLength(usize),
    #[error("invalid hexadecimal encoding")]
    BadHex,
    #[error("bad padding (wrong key or corrupted ciphertext)")]
    BadPadding,
    #[error("decrypted bytes are not valid UTF-8")]
    NotUtf8,
}

/// Expanded round keys: N+1 keys of 16 bytes, N = 10/12/14 by key length.
#[derive(Debug)]
pub struct KeySchedule {
    round_keys: Vec<[u8; 16]>,
}

impl KeySchedule {
    pub fn new(cipher_key: &[u8]) -> Result<Self, AesError> {
        let nk = match cipher_key.len() {
            16 => 4,
            24 => 6,
            32 => 8,
            other => return Err(AesError::BadKeyLength(other)),
        };
        let rounds = nk + 6;
        let total_words = 4 * (rounds + 1);

        let mut words: Vec<[u8; 4]> = Vec::with_capacity(total_words);
        for chunk in cipher_key.chunks_exact(4) {
            words.push(chunk.try_into().unwrap());
        }
        let mut rcon: u8 = 0x01;
        for i in nk..total_words {
            let mut temp = words[i - 1];
            if i % nk == 0 {
                temp.rotate_left(1);
                for b in &mut temp {
                    *b = SBOX[*b as usize];
                }
                temp[0] ^= rcon;
                rcon = gf_mul(rcon, 0x02);
            } else if nk > 6 && i % nk == 4 {
                for b in &mut temp {
                    *b = SBOX[*b as usize];
                }
            }
            let prev = words[i - nk];
            for j in 0..4 {
                temp[j] ^= prev[j];
            }
            words.push(temp);
        }

        let round_keys = words
            .chunks_exact(4)
            .map(|ws| {
                let mut rk = [0u8; 16];
                for (c, w) in ws.iter().enumerate() {
                    rk[c * 4..c * 4 + 4].copy_from_slice(w);
                }
                rk
            })
            .collect();
        Ok(Self { round_keys })
    }

    /// Round count N (the schedule holds N+1 keys).
    pub fn rounds(&self) -> usize {
        self.round_keys.len() - 1
    }
}

/// GF(2^8) multiplication modulo x^8 + x^4 + x^3 + x + 1.
fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let high = a & 0x80;
        a <<= 1;
        if high != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    acc
}

// State is a 4x4 byte matrix stored column-major: element (row, col) at
// index col*4 + row, matching the standard's input byte order.

fn sub_bytes(state: &mut [u8; 16]) {
    for b in state.iter_mut() {
        *b = SBOX[*b as usize];
    }
}

fn inv_sub_bytes(state: &mut [u8; 16]) {
    for b in state.iter_mut() {
        *b = INV_SBOX[*b as usize];
    }
}

fn shift_rows(state: &mut [u8; 16]) {
    let old = *state;
    for row in 1..4 {
        for col in 0..4 {
            state[col * 4 + row] = old[((col + row) % 4) * 4 + row];
        }
    }
}

fn inv_shift_rows(state: &mut [u8; 16]) {
    let old = *state;
    for row in 1..4 {
        for col in 0..4 {
            state[((col + row) % 4) * 4 + row] = old[col * 4 + row];
        }
    }
}

/// Forward column mix: multiply each column by [02 03 01 01; 01 02 03 01;
/// 01 01 02 03; 03 01 01 02] over GF(2^8).
pub fn mix_column(col: [u8; 4]) -> [u8; 4] {
    let [a, b, c, d] = col;
    [
        gf_mul(a, 2) ^ gf_mul(b, 3) ^ c ^ d,
        a ^ gf_mul(b, 2) ^ gf_mul(c, 3) ^ d,
        a ^ b ^ gf_mul(c, 2) ^ gf_mul(d, 3),
        gf_mul(a, 3) ^ b ^ c ^ gf_mul(d, 2),
    ]
}

pub fn inv_mix_column(col: [u8; 4]) -> [u8; 4] {
    let [a, b, c, d] = col;
    [
        gf_mul(a, 0x0e) ^ gf_mul(b, 0x0b) ^ gf_mul(c, 0x0d) ^ gf_mul(d, 0x09),
        gf_mul(a, 0x09) ^ gf_mul(b, 0x0e) ^ gf_mul(c, 0x0b) ^ gf_mul(d, 0x0d),
        gf_mul(a, 0x0d) ^ gf_mul(b, 0x09) ^ gf_mul(c, 0x0e) ^ gf_mul(d, 0x0b),
        gf_mul(a, 0x0b) ^ gf_mul(b, 0x0d) ^ gf_mul(c, 0x09) ^ gf_mul(d, 0x0e),
    ]
}

fn mix_columns(state: &mut [u8; 16]) {
    for col in 0..4 {
        let c: [u8; 4] = state[col * 4..col * 4 + 4].try_into().unwrap();
        state[col * 4..col * 4 + 4].copy_from_slice(&mix_column(c));
    }
}

fn inv_mix_columns(state: &mut [u8; 16]) {
    for col in 0..4 {
        let c: [u8; 4] = state[col * 4..col * 4 + 4].try_into().unwrap();
        state[col * 4..col * 4 + 4].copy_from_slice(&inv_mix_column(c));
    }
}

fn add_round_key(state: &mut [u8; 16], rk: &[u8; 16]) {
    for (s, k) in state.iter_mut().zip(rk) {
        *s ^= k;
    }
}

pub fn encrypt_block(block: &[u8], ks: &KeySchedule) -> Result<[u8; 16], AesError> {
    let mut state: [u8; 16] =
        block.try_into().map_err(|_| AesError::BadBlockLength(block.len()))?;
    let n = ks.rounds();
    add_round_key(&mut state, &ks.round_keys[0]);
    for round in 1..n {
        sub_bytes(&mut state);
        shift_rows(&mut state);
        mix_columns(&mut state);
        add_round_key(&mut state, &ks.round_keys[round]);
    }
    sub_bytes(&mut state);
    shift_rows(&mut state);
    add_round_key(&mut state, &ks.round_keys[n]);
    Ok(state)
}

pub fn decrypt_block(block: &[u8], ks: &KeySchedule) -> Result<[u8; 16], AesError> {
    let mut state: [u8; 16] =
        block.try_into().map_err(|_| AesError::BadBlockLength(block.len()))?;
    let n = ks.rounds();
    add_round_key(&mut state, &ks.round_keys[n]);
    inv_shift_rows(&mut state);
    inv_sub_bytes(&mut state);
    for round in (1..n).rev() {
        add_round_key(&mut state, &ks.round_keys[round]);
        inv_mix_columns(&mut state);
        inv_shift_rows(&mut state);
        inv_sub_bytes(&mut state);
    }
    add_round_key(&mut state, &ks.round_keys[0]);
    Ok(state)
}

/// Ciphertext of a field-level encryption; hex-encoded in stored rows and
/// API payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedField {
    ciphertext: Vec<u8>,
}

impl EncryptedField {
    pub fn from_hex(text: &str) -> Result<Self, AesError> {
        let ciphertext = hex::decode(text).map_err(|_| AesError::BadHex)?;
        if ciphertext.is_empty() || ciphertext.len() % BLOCK_LEN != 0 {
            return Err(AesError::BadCiphertextLength(ciphertext.len()));
        }
        Ok(Self { ciphertext })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.ciphertext)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.ciphertext
    }
}

/// Deterministic field codec bound to one key schedule.
pub struct FieldCodec {
    ks: KeySchedule,
}

impl FieldCodec {
    pub fn new(key: &[u8]) -> Result<Self, AesError> {
        Ok(Self { ks: KeySchedule::new(key)? })
    }

    /// Encrypts a field deterministically: PKCS#7 padding to a 16-byte
    /// multiple (a full extra block when already aligned), ECB over the
    /// padded blocks.
    pub fn encode_field(&self, plaintext: &str) -> Result<EncryptedField, AesError> {
        if plaintext.is_empty() {
            return Err(AesError::EmptyPlaintext);
        }
        let data = plaintext.as_bytes();
        let pad = BLOCK_LEN - data.len() % BLOCK_LEN;
        let mut padded = Vec::with_capacity(data.len() + pad);
        padded.extend_from_slice(data);
        padded.extend(std::iter::repeat_n(pad as u8, pad));

        let mut ciphertext = Vec::with_capacity(padded.len());
        for block in padded.chunks_exact(BLOCK_LEN) {
            ciphertext.extend_from_slice(&encrypt_block(block, &self.ks)?);
        }
        Ok(EncryptedField { ciphertext })
    }

    /// Inverse of `encode_field`; bad padding signals a wrong key or a
    /// corrupted ciphertext.
    pub fn decode_field(&self, field: &EncryptedField) -> Result<String, AesError> {
        if field.ciphertext.is_empty() || field.ciphertext.len() % BLOCK_LEN != 0 {
            return Err(AesError::BadCiphertextLength(field.ciphertext.len()));
        }
        let mut padded = Vec::with_capacity(field.ciphertext.len());
        for block in field.ciphertext.chunks_exact(BLOCK_LEN) {
            padded.extend_from_slice(&decrypt_block(block, &self.ks)?);
        }
        let pad = *padded.last().unwrap() as usize;
        if pad == 0 || pad > BLOCK_LEN || pad > padded.len() {
            return Err(AesError::BadPadding);
        }
        if padded[padded.len() - pad..].iter().any(|&b| b as usize != pad) {
            return Err(AesError::BadPadding);
        }
        padded.truncate(padded.len() - pad);
        String::from_utf8(padded).map_err(|_| AesError::NotUtf8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn vector_key(len: usize) -> Vec<u8> {
        (0..len as u8).collect()
    }

    const VECTOR_PLAINTEXT: [u8; 16] = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee,
        0xff,
    ];

    #[test]
    fn standard_vector_128() {
        let ks = KeySchedule::new(&vector_key(16)).unwrap();
        assert_eq!(ks.rounds(), 10);
        let ct = encrypt_block(&VECTOR_PLAINTEXT, &ks).unwrap();
        assert_eq!(hex::encode(ct), "69c4e0d86a7b0430d8cdb78070b4c55a");
        assert_eq!(decrypt_block(&ct, &ks).unwrap(), VECTOR_PLAINTEXT);
    }

    #[test]
    fn standard_vector_192() {
        let ks = KeySchedule::new(&vector_key(24)).unwrap();
        assert_eq!(ks.rounds(), 12);
        let ct = encrypt_block(&VECTOR_PLAINTEXT, &ks).unwrap();
        assert_eq!(hex::encode(ct), "dda97ca4864cdfe06eaf70a0ec0d7191");
    }

    #[test]
    fn standard_vector_256() {
        let ks = KeySchedule::new(&vector_key(32)).unwrap();
        assert_eq!(ks.rounds(), 14);
        let ct = encrypt_block(&VECTOR_PLAINTEXT, &ks).unwrap();
        assert_eq!(hex::encode(ct), "8ea2b7ca516745bfeafc49904b496089");
    }

    #[test]
    fn bad_key_and_block_lengths() {
        assert_eq!(KeySchedule::new(&[0u8; 15]).unwrap_err(), AesError::BadKeyLength(15));
        let ks = KeySchedule::new(&vector_key(16)).unwrap();
        assert_eq!(encrypt_block(&[0u8; 15], &ks).unwrap_err(), AesError::BadBlockLength(15));
        assert_eq!(decrypt_block(&[0u8; 17], &ks).unwrap_err(), AesError::BadBlockLength(17));
    }

    #[test]
    fn sbox_lookup_of_zero() {
        assert_eq!(SBOX[0x00], 0x63);
    }

    /// Regenerates the S-box from the GF(2^8) inverse plus the affine map
    /// and compares against the frozen table.
    #[test]
    fn sbox_derivation_matches_table() {
        let mut inverse = [0u8; 256];
        for x in 1..=255u8 {
            for y in 1..=255u8 {
                if gf_mul(x, y) == 1 {
                    inverse[x as usize] = y;
                    break;
                }
            }
        }
        for x in 0..256usize {
            let b = inverse[x];
            let affine = b
                ^ b.rotate_left(1)
                ^ b.rotate_left(2)
                ^ b.rotate_left(3)
                ^ b.rotate_left(4)
                ^ 0x63;
            assert_eq!(SBOX[x], affine, "S-box mismatch at {x:#04x}");
        }
        for (i, &v) in SBOX.iter().enumerate() {
            assert_eq!(INV_SBOX[v as usize], i as u8);
        }
    }

    #[test]
    fn roundtrip_random_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let ks = KeySchedule::new(&vector_key(16)).unwrap();
        for _ in 0..1000 {
            let mut block = [0u8; 16];
            rng.fill_bytes(&mut block);
            let ct = encrypt_block(&block, &ks).unwrap();
            assert_eq!(decrypt_block(&ct, &ks).unwrap(), block);
        }
    }

    #[test]
    fn zero_block_roundtrip() {
        let ks = KeySchedule::new(&vector_key(32)).unwrap();
        let ct = encrypt_block(&[0u8; 16], &ks).unwrap();
        assert_eq!(decrypt_block(&ct, &ks).unwrap(), [0u8; 16]);
    }

    #[test]
    fn mix_columns_inverse_exhaustive_single_byte() {
        for b in 0..=255u8 {
            let col = [b, 0, 0, 0];
            assert_eq!(inv_mix_column(mix_column(col)), col);
        }
    }

    #[test]
    fn mix_columns_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let a: [u8; 4] = rng.random();
            let b: [u8; 4] = rng.random();
            let xor = [a[0] ^ b[0], a[1] ^ b[1], a[2] ^ b[2], a[3] ^ b[3]];
            let ma = mix_column(a);
            let mb = mix_column(b);
            let expect = [ma[0] ^ mb[0], ma[1] ^ mb[1], ma[2] ^ mb[2], ma[3] ^ mb[3]];
            assert_eq!(mix_column(xor), expect);
        }
    }

    #[test]
    fn add_round_key_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut state: [u8; 16] = rng.random();
            let original = state;
            let key: [u8; 16] = rng.random();
            add_round_key(&mut state, &key);
            add_round_key(&mut state, &key);
            assert_eq!(state, original);
        }
    }

    #[test]
    fn field_codec_is_deterministic() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        let a = codec.encode_field("370102199902031234").unwrap();
        let b = codec.encode_field("370102199902031234").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn field_codec_roundtrips_id_numbers() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let len = rng.random_range(1..=24);
            let id: String = (0..len).map(|_| char::from(b'0' + rng.random_range(0..10))).collect();
            let field = codec.encode_field(&id).unwrap();
            assert_eq!(codec.decode_field(&field).unwrap(), id);
        }
    }

    #[test]
    fn aligned_plaintext_gets_full_padding_block() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        let field = codec.encode_field("0123456789abcdef").unwrap();
        assert_eq!(field.as_bytes().len(), 32);
    }

    #[test]
    fn empty_plaintext_rejected() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        assert_eq!(codec.encode_field("").unwrap_err(), AesError::EmptyPlaintext);
    }

    #[test]
    fn hex_encoding_roundtrip() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        let field = codec.encode_field("13800138000").unwrap();
        let hex_text = field.to_hex();
        assert!(hex_text.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(EncryptedField::from_hex(&hex_text).unwrap(), field);
        assert!(EncryptedField::from_hex("zz").is_err());
        assert!(matches!(
            EncryptedField::from_hex("ab"),
            Err(AesError::BadCiphertextLength(1))
        ));
    }

    #[test]
    fn tampered_last_byte_detected_with_high_probability() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xbad);
        let mut detected = 0u32;
        for i in 0..1000 {
            let field = codec.encode_field(&format!("passenger-{i}")).unwrap();
            let mut bytes = field.as_bytes().to_vec();
            let last = bytes.len() - 1;
            let flip: u8 = rng.random_range(1..=255);
            bytes[last] ^= flip;
            let tampered = EncryptedField::from_hex(&hex::encode(bytes)).unwrap();
            if codec.decode_field(&tampered).is_err() {
                detected += 1;
            }
        }
        assert!(detected >= 900, "only {detected}/1000 tamperings detected");
    }

    #[test]
    fn wrong_key_fails_or_garbles() {
        let codec = FieldCodec::new(&vector_key(16)).unwrap();
        let other = FieldCodec::new(&[0xaa; 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
        for _ in 0..200 {
            let len = rng.random_range(1..=30);
            let text: String =
                (0..len).map(|_| char::from(rng.random_range(b'a'..=b'z'))).collect();
            let field = codec.encode_field(&text).unwrap();
            match other.decode_field(&field) {
                Err(_) => {}
                Ok(decoded) => assert_ne!(decoded, text),
            }
        }
    }
}
