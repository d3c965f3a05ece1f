use std::collections::BTreeMap;

use crate::error::{Result, SimError};

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce5_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Content seed of a synthetic message.
pub fn content_seed(flow_id: u32, msg_seq: u64) -> u64 {
    mix64(((flow_id as u64) << 40) ^ msg_seq)
}

/// Digest of bytes `[offset, offset + len)` of a synthetic message.
///
/// Byte `i` is drawn from a hash of `(seed, i / 8)`; each byte contributes
/// `(byte + 1) * odd(i)` to a wrapping sum, so digests of disjoint ranges add
/// up to the digest of their union and any lost, duplicated or shifted range
/// changes the total.
pub fn range_digest(seed: u64, offset: u64, len: u64) -> u64 {
    let mut acc = 0u64;
    let mut word_idx = u64::MAX;
    let mut word = 0u64;
    for i in offset..offset + len {
        if i >> 3 != word_idx {
            word_idx = i >> 3;
            word = mix64(seed ^ word_idx.wrapping_mul(0xd605_bbb5_8c8a_bb2b));
        }
        let byte = (word >> ((i & 7) * 8)) & 0xff;
        let weight = i.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        acc = acc.wrapping_add((byte + 1).wrapping_mul(weight));
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub flow_id: u32,
    pub msg_seq: u64,
    pub length_bytes: u64,
    pub digest: u64,
}

impl Message {
    pub fn synthetic(flow_id: u32, msg_seq: u64, length_bytes: u64) -> Result<Self> {
        if length_bytes == 0 {
            return Err(SimError::Precondition("message length must be >= 1".into()));
        }
        Ok(Message {
            flow_id,
            msg_seq,
            length_bytes,
            digest: range_digest(content_seed(flow_id, msg_seq), 0, length_bytes),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Data,
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow_id: u32,
    pub msg_seq: u64,
    /// Index within the message.
    pub pkt_seq: u32,
    /// Flow-wide transport sequence number, assigned by the sender.
    pub seq: u64,
    pub offset: u64,
    pub payload_bytes: u64,
    pub is_last: bool,
    pub kind: PacketKind,
    /// Digest of this packet's byte range.
    pub digest: u64,
}

/// Splits `msg` into `ceil(len / mtu)` data packets.
pub fn split(msg: &Message, mtu: u64) -> Result<Vec<Packet>> {
    if mtu == 0 {
        return Err(SimError::Config("mtu must be >= 1".into()));
    }
    let seed = content_seed(msg.flow_id, msg.msg_seq);
    let n = msg.length_bytes.div_ceil(mtu);
    Ok((0..n)
        .map(|k| {
            let offset = k * mtu;
            let payload_bytes = mtu.min(msg.length_bytes - offset);
            Packet {
                flow_id: msg.flow_id,
                msg_seq: msg.msg_seq,
                pkt_seq: k as u32,
                seq: 0,
                offset,
                payload_bytes,
                is_last: k + 1 == n,
                kind: PacketKind::Data,
                digest: range_digest(seed, offset, payload_bytes),
            }
        })
        .collect())
}

/// Collects one message's packets in any order.
#[derive(Debug, Clone, Default)]
pub struct Reassembler {
    parts: BTreeMap<(u32, u64), BTreeMap<u32, Packet>>,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a packet; duplicates are ignored. Returns the message once a
    /// gap-free run `0..=last` is present.
    pub fn push(&mut self, p: Packet) -> Option<Message> {
        let key = (p.flow_id, p.msg_seq);
        let parts = self.parts.entry(key).or_default();
        parts.entry(p.pkt_seq).or_insert(p);
        let (&last_idx, last) = parts.last_key_value()?;
        if !last.is_last || parts.len() as u64 != last_idx as u64 + 1 {
            return None;
        }
        let parts = self.parts.remove(&key)?;
        let (length_bytes, digest) = parts.values().fold((0u64, 0u64), |(l, d), p| {
            (l + p.payload_bytes, d.wrapping_add(p.digest))
        });
        Some(Message {
            flow_id: key.0,
            msg_seq: key.1,
            length_bytes,
            digest,
        })
    }

    pub fn pending(&self) -> usize {
        self.parts.len()
    }
}

/// One-shot assembly of a packet set; `None` while incomplete.
pub fn assemble(packets: &[Packet]) -> Option<Message> {
    let mut r = Reassembler::new();
    packets.iter().find_map(|p| r.push(*p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_lengths() {
        let m = Message::synthetic(1, 0, 10_240).unwrap();
        let ps = split(&m, 4096).unwrap();
        let lens: Vec<u64> = ps.iter().map(|p| p.payload_bytes).collect();
        assert_eq!(lens, vec![4096, 4096, 2048]);
        assert_eq!(ps.iter().filter(|p| p.is_last).count(), 1);
        assert!(ps[2].is_last);
    }

    #[test]
    fn small_message_single_packet() {
        let m = Message::synthetic(1, 0, 100).unwrap();
        let ps = split(&m, 4096).unwrap();
        assert_eq!(ps.len(), 1);
        assert!(ps[0].is_last);
        assert!(split(&m, 0).is_err());
        assert!(Message::synthetic(1, 0, 0).is_err());
    }

    #[test]
    fn in_order_and_reverse_assembly() {
        let m = Message::synthetic(3, 9, 50_000).unwrap();
        let mut ps = split(&m, 1500).unwrap();
        assert_eq!(assemble(&ps), Some(m));
        ps.reverse();
        assert_eq!(assemble(&ps), Some(m));
    }

    #[test]
    fn gaps_wait_and_duplicates_are_ignored() {
        let m = Message::synthetic(0, 1, 9000).unwrap();
        let ps = split(&m, 4096).unwrap();
        let mut r = Reassembler::new();
        assert_eq!(r.push(ps[0]), None);
        assert_eq!(r.push(ps[2]), None);
        assert_eq!(r.push(ps[0]), None);
        assert_eq!(r.push(ps[1]), Some(m));
        assert_eq!(r.pending(), 0);
    }

    #[test]
    fn digest_detects_missing_bytes() {
        let seed = content_seed(0, 0);
        let whole = range_digest(seed, 0, 1000);
        assert_eq!(
            whole,
            range_digest(seed, 0, 400).wrapping_add(range_digest(seed, 400, 600))
        );
        assert_ne!(whole, range_digest(seed, 0, 999));
        assert_ne!(whole, range_digest(seed, 1, 1000));
    }
}
