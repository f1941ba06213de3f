//! `undertone` — a covert low-rate data channel inside digitized voice.
//!
//! The binary fronts the library with five commands:
//!
//! - `send` / `recv`: live UDP endpoints that stream a voice call and hide a
//!   payload transfer inside it;
//! - `simulate`: scripted conversations over an in-process lossy channel,
//!   swept across header designs, codecs, and embedding algorithms;
//! - `capacity`: what one packet and one second can carry under a setup;
//! - `analyze`: sample-level quality metrics for a cover/stego WAV pair.
//!
//! Settings resolve in three layers: built-in defaults, the optional
//! `--config` TOML file, then command-line flags. Exit codes: 0 success,
//! 2 configuration error, 3 capacity shortfall, 4 transport or protocol
//! failure.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand, ValueEnum};
use undertone::stego::{EmbedAlgorithm, PlacementMode};
use undertone::{CodecId, Error, HeaderDesign, Result};

use crate::settings::{read_config_file, Overrides, Settings};

#[derive(Parser)]
#[command(
    name = "undertone",
    version,
    about = "Hides a low-rate data channel inside digitized voice calls",
    after_help = "Settings resolve in three layers: flags override the --config file, \
                  which overrides the defaults (ulaw, lsb1, static headers, fixed \
                  placement at offset 0, 160-code frames, acknowledge every segment)."
)]
struct Cli {
    /// TOML settings file; keys mirror the long flags (ack_every, pesq_tool).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Voice codec carrying the hidden channel.
    #[arg(long, global = true, value_enum)]
    codec: Option<CodecArg>,

    /// Embedding algorithm (which carrier bit planes hide data).
    #[arg(long, global = true, value_enum)]
    alg: Option<AlgArg>,

    /// Header design: fixed-layout (static) or chunked (dynamic).
    #[arg(long, global = true, value_enum)]
    header: Option<HeaderArg>,

    /// Where hidden bits sit in each frame: a fixed offset, or an offset
    /// chained packet-to-packet from the shared seed.
    #[arg(long, global = true, value_enum)]
    embedding: Option<EmbeddingArg>,

    /// Embed offset in codes (initial offset under chained embedding).
    #[arg(long, global = true, value_name = "CODES")]
    offset: Option<usize>,

    /// Cover codes per packet.
    #[arg(long, global = true, value_name = "CODES")]
    frame: Option<usize>,

    /// Drop probability for this endpoint's outgoing packets (0.0 to <1).
    #[arg(long, global = true, value_name = "P")]
    loss: Option<f64>,

    /// Adjacent-swap probability for outgoing packets (0.0 to <1).
    #[arg(long, global = true, value_name = "P")]
    reorder: Option<f64>,

    /// Shared seed: filler bits, chained offsets, loss draws, synth voice.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Acknowledge every n-th newly filled data segment.
    #[arg(long, global = true, value_name = "N")]
    ack_every: Option<usize>,

    /// Cover WAV: the voice this endpoint streams (send/recv/simulate), or
    /// the unmodified reference (analyze). Synthesized when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    input: Option<PathBuf>,

    /// Payload file: what send transmits, where recv writes what it heard.
    #[arg(long, global = true, value_name = "PATH")]
    payload: Option<PathBuf>,

    /// Remote endpoint address.
    #[arg(long, global = true, value_name = "HOST:PORT")]
    peer: Option<String>,

    /// Also write the command's CSV output here.
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,

    /// External speech-quality scorer, invoked as `tool ref.wav degraded.wav`;
    /// the last number on its first output line is taken as the score.
    #[arg(long, global = true, value_name = "PATH")]
    pesq_tool: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmit a payload file covertly inside a voice call to --peer.
    Send {
        /// Local bind address (defaults to an ephemeral port).
        #[arg(long, value_name = "HOST:PORT")]
        listen: Option<String>,
    },
    /// Answer a call: extract the payload and keep the heard audio.
    Recv {
        /// Local bind address the sender targets.
        #[arg(long, value_name = "HOST:PORT")]
        listen: String,
        /// Where to write the reassembled call audio.
        #[arg(long, value_name = "PATH", default_value = "received.wav")]
        wav_out: PathBuf,
    },
    /// Sweep scripted conversations in-process and emit a quality CSV.
    Simulate {
        /// Traffic pattern: 1 idle filler, 2 repeated small transfers,
        /// 3 one maximum-size transfer.
        #[arg(long, default_value_t = 1)]
        scenario: u8,
    },
    /// Print per-packet and per-second capacity for the chosen settings.
    Capacity,
    /// Compare a cover/stego WAV pair and emit one metrics row.
    Analyze {
        /// The modified WAV to compare against --input.
        #[arg(long, value_name = "PATH")]
        stego: PathBuf,
        /// Hidden payload bits, if known, for the hidden-rate column.
        #[arg(long, value_name = "N", default_value_t = 0)]
        hidden_bits: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    /// 8-bit companded telephone audio at 8 kHz.
    Ulaw,
    /// 4-bit adaptive-differential audio at 11.025 kHz.
    Dvi,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    /// One hidden bit per code, in the lowest bit.
    Lsb1,
    /// Two hidden bits per code, in the lowest two bits.
    Lsb2,
    /// One hidden bit per code, in the top bit.
    Msb,
    /// One hidden bit per code, in bit 5 (8-bit carriers only).
    Lsb6,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeaderArg {
    Static,
    Dynamic,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Fixed,
    Chained,
}

impl Cli {
    /// The flag layer, applied on top of the config file.
    fn overrides(&self) -> Overrides {
        Overrides {
            codec: self.codec.map(|c| match c {
                CodecArg::Ulaw => CodecId::Ulaw,
                CodecArg::Dvi => CodecId::Dvi,
            }),
            alg: self.alg.map(|a| match a {
                AlgArg::Lsb1 => EmbedAlgorithm::Lsb1,
                AlgArg::Lsb2 => EmbedAlgorithm::Lsb2,
                AlgArg::Msb => EmbedAlgorithm::Msb,
                AlgArg::Lsb6 => EmbedAlgorithm::Lsb6,
            }),
            header: self.header.map(|h| match h {
                HeaderArg::Static => HeaderDesign::Static,
                HeaderArg::Dynamic => HeaderDesign::Dynamic,
            }),
            embedding: self.embedding.map(|e| match e {
                EmbeddingArg::Fixed => PlacementMode::Fixed,
                EmbeddingArg::Chained => PlacementMode::Chained,
            }),
            offset: self.offset,
            frame: self.frame,
            loss: self.loss,
            reorder: self.reorder,
            seed: self.seed,
            ack_every: self.ack_every,
            peer: self.peer.clone(),
            input: self.input.clone(),
            payload: self.payload.clone(),
            report: self.report.clone(),
            pesq_tool: self.pesq_tool.clone(),
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        settings.apply(&read_config_file(path)?);
    }
    settings.apply(&cli.overrides());

    match &cli.command {
        Command::Send { listen } => commands::send(&settings, listen.as_deref()),
        Command::Recv { listen, wav_out } => commands::recv(&settings, listen, Some(wav_out)),
        Command::Simulate { scenario } => commands::simulate(&settings, *scenario),
        Command::Capacity => commands::capacity(&settings),
        Command::Analyze { stego, hidden_bits } => {
            commands::analyze(&settings, stego, *hidden_bits)
        }
    }
}

/// Error classes map to the documented exit codes: 2 for configuration
/// problems, 3 for capacity shortfalls, 4 for transport and protocol
/// failures.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Capacity { .. } | Error::Segmentation { .. } => 3,
        Error::Io(_)
        | Error::Protocol(_)
        | Error::ChannelClosed
        | Error::StreamConfusion { .. }
        | Error::Truncated { .. } => 4,
        Error::Format(_) | Error::Unsupported(_) | Error::Argument(_) | Error::Encoding { .. } => {
            2
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        process::exit(exit_code(&err));
    }
}
