//! NVMe queue pairs, SSD controllers and the two control-plane drivers.

mod command;
mod queue;
mod resources;
mod ssd;
mod system;

pub use command::{Completion, NvmeCommand, Opcode, BLOCK_BYTES};
pub use queue::{CompletionQueue, QueueFull, QueueLocation, Ring, SubmissionQueue};
pub use resources::{FpgaResourceModel, FpgaResources};
pub use ssd::{Pacer, SsdController, SsdModel, Started};
pub use system::{CmdRecord, DriverKind, NvmeConfig, NvmeEvent, NvmeSystem, Workload};
