//! Seed derivation so every random stream hangs off one root seed.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent seed for stream `stream` of root seed `root`.
pub fn derive(root: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(root) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub const STREAM_INIT: u64 = 1;
pub const STREAM_PAIRS: u64 = 2;
pub const STREAM_CORPUS: u64 = 3;
/// Epoch `e` shuffles with `derive(root, STREAM_EPOCH_BASE + e)`.
pub const STREAM_EPOCH_BASE: u64 = 1 << 32;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(derive(1, 0), derive(1, 1));
        assert_ne!(derive(1, 0), derive(2, 0));
        assert_eq!(derive(7, 3), derive(7, 3));
    }
}
