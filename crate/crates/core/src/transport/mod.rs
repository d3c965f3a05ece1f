//! Message transport: descriptor-driven split/assemble, go-back-N reliable
//! delivery, and CPU versus FPGA endpoint cost models.

mod descriptor;
mod endpoint;
mod gbn;
mod message;

pub use descriptor::{Landing, MemLoc, MessageDescriptor};
pub use endpoint::{Direction, Endpoint, EndpointKind, EndpointModel};
pub use gbn::{Delivered, GbnChannel, GbnConfig, GbnEvent, GbnStats};
pub use message::{
    assemble, content_seed, range_digest, split, Message, Packet, PacketKind, Reassembler,
};
