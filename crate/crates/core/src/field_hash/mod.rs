//! GF(256) arithmetic, polynomial algebra, seeded irreducible moduli and the
//! generalized division hash used for signing.

pub mod field;
pub mod hash;
pub mod poly;

pub use field::{field_mul, Gf256};
pub use hash::{derive_modulus, hash_document, Digest, DivisionHasher, HashSeed};
pub use poly::{is_irreducible, poly_mod, FieldPolynomial};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldHashError {
    #[error("modulus is the zero polynomial")]
    ZeroModulus,
    #[error("polynomial is not monic")]
    NotMonic,
    #[error("polynomial is constant")]
    ConstantPolynomial,
    #[error("digest length {0} bits is not a positive multiple of 8")]
    DigestLength(usize),
    #[error("cannot hash an empty message")]
    EmptyMessage,
}
