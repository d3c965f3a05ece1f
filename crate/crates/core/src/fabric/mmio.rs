use std::collections::HashMap;

use crate::error::{Result, SimError};
use crate::sim::ComponentId;

/// Device registers exposed over PCIe MMIO.
///
/// Registers must be declared before use; reads of a declared register that
/// was never written return its reset value `0`.
#[derive(Debug, Clone, Default)]
pub struct MmioRegisterFile {
    registers: HashMap<u64, u64>,
    doorbells: HashMap<u64, ComponentId>,
    rings: HashMap<u64, u64>,
}

impl MmioRegisterFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define(&mut self, addr: u64) {
        self.registers.entry(addr).or_insert(0);
    }

    /// Declares a doorbell: each write notifies `handler` exactly once.
    pub fn define_doorbell(&mut self, addr: u64, handler: ComponentId) {
        self.define(addr);
        self.doorbells.insert(addr, handler);
    }

    pub fn is_mapped(&self, addr: u64) -> bool {
        self.registers.contains_key(&addr)
    }

    pub fn check(&self, addr: u64) -> Result<()> {
        if self.is_mapped(addr) {
            Ok(())
        } else {
            Err(SimError::UnmappedRegister(addr))
        }
    }

    pub fn doorbell_handler(&self, addr: u64) -> Option<ComponentId> {
        self.doorbells.get(&addr).copied()
    }

    pub fn read(&self, addr: u64) -> Result<u64> {
        self.registers
            .get(&addr)
            .copied()
            .ok_or(SimError::UnmappedRegister(addr))
    }

    /// Applies a delivered write. Returns the doorbell handler, if any.
    pub fn write(&mut self, addr: u64, value: u64) -> Result<Option<ComponentId>> {
        let slot = self
            .registers
            .get_mut(&addr)
            .ok_or(SimError::UnmappedRegister(addr))?;
        *slot = value;
        let handler = self.doorbells.get(&addr).copied();
        if handler.is_some() {
            *self.rings.entry(addr).or_default() += 1;
        }
        Ok(handler)
    }

    /// Number of writes delivered to a doorbell register.
    pub fn rings(&self, addr: u64) -> u64 {
        self.rings.get(&addr).copied().unwrap_or(0)
    }
}
