//! Everything that crosses the channel: range coder, caption compressor and
//! the `GSC1` container.

pub mod caption;
pub mod container;
pub mod range_coder;

pub use caption::{decode_caption, encode_caption};
pub use container::{
    bpp, decode_payload, digest_hex, encode_payload, pack, unpack, GscHeader, ModelRegistry, Unpacked,
    STREAM_MAGIC, STREAM_VERSION,
};
pub use range_coder::{rc_decode, rc_encode, CdfTable, RangeDecoder, RangeEncoder};
