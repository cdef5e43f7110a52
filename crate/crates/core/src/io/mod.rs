//! File formats: 16-bit PCM WAV, the `.apna` array container and dataset manifests.

mod array;
mod manifest;
mod wav;

pub use array::{read_array, write_array, Array, ArrayData, Dtype, ARRAY_MAGIC};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use wav::{read_wav, write_wav};
