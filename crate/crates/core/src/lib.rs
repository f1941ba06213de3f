//! Covert micro-protocol engine for digitized voice streams.
//!
//! The crate layers a small control protocol and payload transfer inside the
//! codes of ordinary voice codecs (G.711 u-law and 4-bit DVI ADPCM) carried
//! over RTP-style packets:
//!
//! - [`audio`] reads and writes PCM WAV clips.
//! - [`codec`] converts between PCM and the two carrier code streams.
//! - [`bits`] is the MSB-first bit buffer the protocol layers share.
//! - [`stego`] hides and recovers raw bits inside code streams.
//! - [`header`] defines the fixed-layout message headers.
//! - [`chunks`] defines the chunked header encoding and its segmentation.
//! - [`transport`] packetizes code streams and simulates lossy delivery.
//! - [`engine`] runs the sender/receiver state machines end to end.
//! - [`scenario`] scripts full conversations over the simulated channel.
//! - [`live`] drives a real UDP socket pair.
//! - [`metrics`] scores carrier degradation (MSE/SNR/PSNR, optional MOS).
//! - [`synth`] generates deterministic voice-like test covers.

pub mod audio;
pub mod bits;
pub mod chunks;
pub mod codec;
pub mod engine;
pub mod error;
pub mod header;
pub mod live;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod stego;
pub mod synth;
pub mod transport;

pub use audio::PcmClip;
pub use bits::{BitReader, BitString};
pub use codec::{CodecId, EncodedStream};
pub use engine::{
    EngineAction, EngineStats, Outgoing, PacketKind, Role, SeqUnwrap, SessionConfig,
    SessionEngine,
};
pub use error::{Error, Result};
pub use header::{Format, HeaderDesign};
pub use live::{receive_payload, send_payload, LiveOptions, ReceiveOutcome, SendOutcome};
pub use rng::{OffsetSchedule, SplitMix64};
pub use scenario::{run_scenario, ScenarioConfig, TranscriptReport};
pub use stego::{EmbedAlgorithm, Placement, PlacementMode};
pub use synth::{cover_stream, voice_like};
