use argon2::password_hash::rand_core::OsRng;
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use fieldlab_core::ids::fresh_id;
use sha2::{Digest, Sha256};

pub const MIN_CREDENTIAL_LEN: usize = 8;

/// Argon2id cost. `Fast` exists for tests and must not be used in production.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HashCost {
    #[default]
    Standard,
    Fast,
}

fn hasher(cost: HashCost) -> Argon2<'static> {
    let params = match cost {
        HashCost::Standard => Params::default(),
        HashCost::Fast => Params::new(64, 1, 1, None).expect("valid argon2 params"),
    };
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
}

/// Salted argon2id hash in PHC string form.
pub fn hash_credential(credential: &str, cost: HashCost) -> String {
    let salt = SaltString::generate(&mut OsRng);
    hasher(cost)
        .hash_password(credential.as_bytes(), &salt)
        .expect("argon2 hashing")
        .to_string()
}

pub fn verify_credential(credential: &str, phc: &str) -> bool {
    // Parameters travel inside the PHC string, so any cost verifies.
    PasswordHash::new(phc)
        .map(|hash| Argon2::default().verify_password(credential.as_bytes(), &hash).is_ok())
        .unwrap_or(false)
}

/// A bearer token: two v4 UUIDs, 244 random bits.
pub fn new_token() -> String {
    format!("{}{}", fresh_id(), fresh_id())
}

/// What the store keeps instead of the token itself.
pub fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

/// Deliberately loose: one `@`, something on both sides, a dot in the
/// domain, no whitespace.
pub fn is_plausible_email(email: &str) -> bool {
    let email = email.trim();
    match email.split_once('@') {
        Some((local, domain)) => {
            !local.is_empty()
                && !domain.contains('@')
                && domain.contains('.')
                && !domain.starts_with('.')
                && !domain.ends_with('.')
                && !email.chars().any(char::is_whitespace)
        }
        None => false,
    }
}
