use std::collections::HashMap;

use super::{
    block_length, pass_permutation, verification_bits, CascadeError, CascadeMessage, ReconciliationConfig,
    ReconciliationResult, Sender, Tag, TagKey, Transcript, RESIDUAL_FLOOR,
};
use crate::bits::BitString;

/// The responder side as seen by the corrector.
pub trait ParityChannel {
    fn parities(&mut self, round: u32, pass: u32, ranges: &[(u32, u32)]) -> Result<Vec<bool>, CascadeError>;
    /// Publishes the corrector's tag and returns the responder's.
    fn exchange_tag(&mut self, tag: Tag) -> Result<Tag, CascadeError>;
}

/// Answers parity queries over an unchanged key.
pub struct CascadeResponder {
    key: BitString,
    cfg: ReconciliationConfig,
    perms: HashMap<(u32, u32), Vec<u32>>,
    current_round: Option<u32>,
    parity_bits: u64,
    tag_bits: u64,
    verified: Option<bool>,
}

impl CascadeResponder {
    pub fn new(key: BitString, cfg: ReconciliationConfig) -> Result<Self, CascadeError> {
        cfg.validate()?;
        Ok(Self { key, cfg, perms: HashMap::new(), current_round: None, parity_bits: 0, tag_bits: 0, verified: None })
    }

    pub fn key_len(&self) -> usize {
        self.key.len()
    }

    /// Handles one corrector message and produces the reply.
    pub fn handle(&mut self, msg: &CascadeMessage) -> Result<CascadeMessage, CascadeError> {
        match msg {
            CascadeMessage::ParityRequest { round, pass, ranges } => {
                let parities = self.answer(*round, *pass, ranges)?;
                Ok(CascadeMessage::ParityAnswer { parities })
            }
            CascadeMessage::TagExchange { tag } => {
                if self.verified.is_some() {
                    return Err(CascadeError::Protocol("second tag exchange".into()));
                }
                let bits = verification_bits(self.cfg.eps_cor)?;
                if tag.bits != bits {
                    return Err(CascadeError::Protocol(format!("tag of {} bits, expected {bits}", tag.bits)));
                }
                let own = TagKey::from_seed(self.cfg.seed).tag(&self.key, bits);
                self.tag_bits = bits as u64;
                self.verified = Some(own == *tag);
                Ok(CascadeMessage::TagExchange { tag: own })
            }
            CascadeMessage::ParityAnswer { .. } => Err(CascadeError::Protocol("unexpected parity answer".into())),
        }
    }

    fn answer(&mut self, round: u32, pass: u32, ranges: &[(u32, u32)]) -> Result<Vec<bool>, CascadeError> {
        let n = self.key.len();
        if round as usize >= self.cfg.rounds(n) || pass >= self.cfg.passes {
            return Err(CascadeError::Protocol(format!("no round {round} pass {pass}")));
        }
        if self.current_round != Some(round) {
            self.perms.clear();
            self.current_round = Some(round);
        }
        let (start, end) = self.cfg.round_range(n, round as usize);
        let len = end - start;
        let seed = self.cfg.seed;
        let perm = self.perms.entry((round, pass)).or_insert_with(|| pass_permutation(seed, round, pass, len));
        let mut out = Vec::with_capacity(ranges.len());
        for &(a, b) in ranges {
            if a >= b || b as usize > len {
                return Err(CascadeError::Protocol(format!("bad range {a}..{b} in round of {len}")));
            }
            let p = perm[a as usize..b as usize].iter().fold(false, |acc, &j| acc ^ self.key.get(start + j as usize));
            out.push(p);
        }
        self.parity_bits += out.len() as u64;
        Ok(out)
    }

    pub fn finish(self) -> ReconciliationResult {
        let rounds_used = self.cfg.rounds(self.key.len());
        ReconciliationResult {
            leakage_bits: self.parity_bits + self.tag_bits,
            parity_bits: self.parity_bits,
            verified: self.verified.unwrap_or(false),
            rounds_used,
            corrected_key: self.key,
            flipped: Vec::new(),
        }
    }
}

/// In-process channel that optionally records the message flow.
pub struct LocalChannel<'a> {
    responder: &'a mut CascadeResponder,
    transcript: Option<Transcript>,
}

impl<'a> LocalChannel<'a> {
    pub fn new(responder: &'a mut CascadeResponder) -> Self {
        Self { responder, transcript: None }
    }

    pub fn recording(responder: &'a mut CascadeResponder) -> Self {
        Self { responder, transcript: Some(Vec::new()) }
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript.unwrap_or_default()
    }

    fn exchange(&mut self, msg: CascadeMessage) -> Result<CascadeMessage, CascadeError> {
        let reply = self.responder.handle(&msg)?;
        if let Some(t) = self.transcript.as_mut() {
            t.push((Sender::Corrector, msg));
            t.push((Sender::Responder, reply.clone()));
        }
        Ok(reply)
    }
}

impl ParityChannel for LocalChannel<'_> {
    fn parities(&mut self, round: u32, pass: u32, ranges: &[(u32, u32)]) -> Result<Vec<bool>, CascadeError> {
        let msg = CascadeMessage::ParityRequest { round, pass, ranges: ranges.to_vec() };
        match self.exchange(msg)? {
            CascadeMessage::ParityAnswer { parities } => Ok(parities),
            other => Err(CascadeError::Protocol(format!("expected parity answer, got {other:?}"))),
        }
    }

    fn exchange_tag(&mut self, tag: Tag) -> Result<Tag, CascadeError> {
        match self.exchange(CascadeMessage::TagExchange { tag })? {
            CascadeMessage::TagExchange { tag } => Ok(tag),
            other => Err(CascadeError::Protocol(format!("expected tag, got {other:?}"))),
        }
    }
}

struct PassState {
    perm: Vec<u32>,
    inv: Vec<u32>,
    block: usize,
    own: Vec<bool>,
    peer: Vec<bool>,
    /// Blocks that may have odd error parity; stale entries are filtered lazily.
    pending: Vec<u32>,
}

impl PassState {
    fn block_of(&self, i: usize) -> usize {
        self.inv[i] as usize / self.block
    }

    fn range(&self, b: usize) -> (u32, u32) {
        let len = self.perm.len();
        ((b * self.block) as u32, ((b + 1) * self.block).min(len) as u32)
    }
}

/// Round-local working state of the corrector.
struct Round<'c, C: ParityChannel> {
    index: u32,
    bits: Vec<bool>,
    passes: Vec<PassState>,
    /// Responder parities already disclosed, keyed by (pass, start, end).
    known: HashMap<(u32, u32, u32), bool>,
    channel: &'c mut C,
    parity_bits: u64,
    flipped: Vec<usize>,
}

struct Search {
    start: u32,
    end: u32,
    peer: bool,
}

impl<C: ParityChannel> Round<'_, C> {
    fn own_parity(&self, pass: usize, start: u32, end: u32) -> bool {
        let perm = &self.passes[pass].perm;
        perm[start as usize..end as usize].iter().fold(false, |acc, &j| acc ^ self.bits[j as usize])
    }

    fn ask(&mut self, pass: u32, ranges: Vec<(u32, u32)>) -> Result<(), CascadeError> {
        if ranges.is_empty() {
            return Ok(());
        }
        let answers = self.channel.parities(self.index, pass, &ranges)?;
        if answers.len() != ranges.len() {
            return Err(CascadeError::Protocol(format!("{} parities for {} ranges", answers.len(), ranges.len())));
        }
        self.parity_bits += answers.len() as u64;
        for ((a, b), p) in ranges.into_iter().zip(answers) {
            self.known.insert((pass, a, b), p);
        }
        Ok(())
    }

    fn open_pass(&mut self, pass: u32, block: usize, seed: u64) -> Result<(), CascadeError> {
        let len = self.bits.len();
        let perm = pass_permutation(seed, self.index, pass, len);
        let mut inv = vec![0u32; len];
        for (j, &i) in perm.iter().enumerate() {
            inv[i as usize] = j as u32;
        }
        let blocks = len.div_ceil(block);
        self.passes.push(PassState { perm, inv, block, own: Vec::new(), peer: Vec::new(), pending: Vec::new() });
        let p = pass as usize;
        let ranges: Vec<(u32, u32)> = (0..blocks).map(|b| self.passes[p].range(b)).collect();
        self.ask(pass, ranges.clone())?;
        let own: Vec<bool> = ranges.iter().map(|&(a, b)| self.own_parity(p, a, b)).collect();
        let peer: Vec<bool> = ranges.iter().map(|&(a, b)| self.known[&(pass, a, b)]).collect();
        let st = &mut self.passes[p];
        st.pending = (0..blocks as u32).filter(|&b| own[b as usize] != peer[b as usize]).collect();
        st.own = own;
        st.peer = peer;
        Ok(())
    }

    /// Locates one error in each of the given odd blocks of one pass, all
    /// blocks advancing one bisection level per exchange.
    fn bisect(&mut self, pass: usize, blocks: &[u32]) -> Result<Vec<usize>, CascadeError> {
        let q = pass as u32;
        let mut active: Vec<Search> = blocks
            .iter()
            .map(|&b| {
                let (start, end) = self.passes[pass].range(b as usize);
                Search { start, end, peer: self.passes[pass].peer[b as usize] }
            })
            .collect();
        loop {
            let need: Vec<(u32, u32)> = active
                .iter()
                .filter(|s| s.end - s.start > 1)
                .map(|s| (s.start, s.start + (s.end - s.start) / 2))
                .filter(|&(a, m)| !self.known.contains_key(&(q, a, m)))
                .collect();
            if active.iter().all(|s| s.end - s.start == 1) {
                break;
            }
            self.ask(q, need)?;
            for i in 0..active.len() {
                let Search { start, end, peer } = active[i];
                if end - start == 1 {
                    continue;
                }
                let mid = start + (end - start) / 2;
                let left_peer = self.known[&(q, start, mid)];
                if self.own_parity(pass, start, mid) != left_peer {
                    active[i] = Search { start, end: mid, peer: left_peer };
                } else {
                    let right_peer = peer ^ left_peer;
                    self.known.entry((q, mid, end)).or_insert(right_peer);
                    active[i] = Search { start: mid, end, peer: right_peer };
                }
            }
        }
        Ok(active.iter().map(|s| self.passes[pass].perm[s.start as usize] as usize).collect())
    }

    fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
        self.flipped.push(i);
        for st in self.passes.iter_mut() {
            let b = st.block_of(i);
            st.own[b] = !st.own[b];
            st.pending.push(b as u32);
        }
    }

    /// Corrects odd blocks until every opened pass is parity-consistent,
    /// always serving the earliest pass first. Returns the number of flips.
    fn settle(&mut self) -> Result<usize, CascadeError> {
        let mut flips = 0;
        loop {
            let mut next = None;
            for (p, st) in self.passes.iter_mut().enumerate() {
                let mut odd: Vec<u32> = st.pending.drain(..).filter(|&b| st.own[b as usize] != st.peer[b as usize]).collect();
                odd.sort_unstable();
                odd.dedup();
                if !odd.is_empty() {
                    next = Some((p, odd));
                    break;
                }
            }
            let Some((p, odd)) = next else { return Ok(flips) };
            for i in self.bisect(p, &odd)? {
                self.flip(i);
                flips += 1;
            }
        }
    }
}

/// Drives reconciliation and flips its own key to match the responder's.
pub struct CascadeCorrector {
    key: BitString,
    cfg: ReconciliationConfig,
}

impl CascadeCorrector {
    pub fn new(key: BitString, cfg: ReconciliationConfig) -> Result<Self, CascadeError> {
        cfg.validate()?;
        Ok(Self { key, cfg })
    }

    pub fn run<C: ParityChannel>(self, channel: &mut C) -> Result<ReconciliationResult, CascadeError> {
        let n = self.key.len();
        let rounds = self.cfg.rounds(n);
        let mut corrected = BitString::default();
        let mut parity_bits = 0u64;
        let mut flipped = Vec::new();
        for r in 0..rounds {
            let (start, end) = self.cfg.round_range(n, r);
            let len = end - start;
            let mut round = Round {
                index: r as u32,
                bits: (start..end).map(|i| self.key.get(i)).collect(),
                passes: Vec::new(),
                known: HashMap::new(),
                channel: &mut *channel,
                parity_bits: 0,
                flipped: Vec::new(),
            };
            let mut block = block_length(self.cfg.qber_estimate, len)?.min(len);
            for pass in 0..self.cfg.passes {
                if pass == 1 {
                    let residual = (round.flipped.len() as f64 / len as f64).max(RESIDUAL_FLOOR);
                    block = (2 * block).max(block_length(residual.min(0.5), len)?);
                } else if pass > 1 {
                    block *= 2;
                }
                block = block.min(len);
                round.open_pass(pass, block, self.cfg.seed)?;
                round.settle()?;
            }
            parity_bits += round.parity_bits;
            flipped.extend(round.flipped.iter().map(|&i| start + i));
            corrected.extend_from(&BitString::from_bools(round.bits));
        }
        let bits = verification_bits(self.cfg.eps_cor)?;
        let own = TagKey::from_seed(self.cfg.seed).tag(&corrected, bits);
        let peer = channel.exchange_tag(own)?;
        flipped.sort_unstable();
        Ok(ReconciliationResult {
            corrected_key: corrected,
            leakage_bits: parity_bits + bits as u64,
            parity_bits,
            verified: own == peer,
            rounds_used: rounds,
            flipped,
        })
    }
}
