use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Backtrace frames that contribute to the stack digest.
pub const STACK_DIGEST_FRAMES: usize = 8;

/// Identity of a crash; two reports are the same crash iff all fields match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashSignature {
    pub exception_kind: String,
    pub location: String,
    pub stack_digest: String,
}

/// Hashes the top frames of a backtrace. Frames are trimmed and length
/// prefixed so that frame boundaries matter.
pub fn crash_signature<S: AsRef<str>>(exception_kind: &str, location: &str, backtrace: &[S]) -> CrashSignature {
    let mut hasher = Sha256::new();
    for frame in backtrace.iter().take(STACK_DIGEST_FRAMES) {
        let frame = frame.as_ref().trim();
        hasher.update((frame.len() as u64).to_le_bytes());
        hasher.update(frame.as_bytes());
    }
    CrashSignature {
        exception_kind: exception_kind.to_string(),
        location: location.to_string(),
        stack_digest: hex::encode(hasher.finalize()),
    }
}
