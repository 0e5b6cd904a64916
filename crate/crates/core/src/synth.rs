//! Seeded synthetic transaction generator with planted mixing services.
//!
//! Mixer addresses run repeated cycles: one deposit from a user, then a
//! batched payout that spends every deposit of the batch together and
//! splits the total across fresh destinations. Users, exchanges, miners and
//! payment forwarders provide the background traffic.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::config::{parse_key_values, parse_value};
use crate::error::{Error, Result};
use crate::ingest::{LabelSet, TxRecord};
use crate::rng::{derive_seed, seeded, Rng};

const COIN: u64 = 100_000_000;
const HOUR: u64 = 3600;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_mixer_addresses: usize,
    pub n_mixer_services: usize,
    pub n_user_addresses: usize,
    pub n_exchange_addresses: usize,
    pub n_exchanges: usize,
    pub n_forwarders: usize,
    /// Payment processors batch customer payments like mixers but pay a
    /// small pool of merchants.
    pub n_processor_addresses: usize,
    pub n_processor_services: usize,
    pub n_miners: usize,
    pub n_transactions: usize,
    pub mean_gap_secs: u64,
    /// Upper bound on the time between a mixer deposit and its payout.
    pub max_cycle_secs: u64,
    pub min_cycle_secs: u64,
    pub mixer_cooldown_secs: u64,
    pub batch_min: usize,
    pub batch_max: usize,
    pub fanout_min: usize,
    pub fanout_max: usize,
    pub zero_balance: bool,
    pub deposit_rate: f64,
    pub exchange_withdraw_rate: f64,
    pub exchange_deposit_rate: f64,
    pub forward_rate: f64,
    pub processor_rate: f64,
    pub processor_merchant_prob: f64,
    pub coinbase_rate: f64,
    pub multi_input_prob: f64,
    pub change_address_prob: f64,
    pub address_reuse_prob: f64,
    /// Chance that a payout output goes back to an earlier depositor.
    pub mixer_reuse_prob: f64,
    pub withheld_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_mixer_addresses: 1000,
            n_mixer_services: 5,
            n_user_addresses: 20_000,
            n_exchange_addresses: 40,
            n_exchanges: 8,
            n_forwarders: 30,
            n_processor_addresses: 150,
            n_processor_services: 3,
            n_miners: 20,
            n_transactions: 100_000,
            mean_gap_secs: 20,
            max_cycle_secs: 3 * HOUR,
            min_cycle_secs: 20 * 60,
            mixer_cooldown_secs: 4 * HOUR,
            batch_min: 2,
            batch_max: 8,
            fanout_min: 2,
            fanout_max: 6,
            zero_balance: true,
            deposit_rate: 0.06,
            exchange_withdraw_rate: 0.08,
            exchange_deposit_rate: 0.12,
            forward_rate: 0.03,
            processor_rate: 0.05,
            processor_merchant_prob: 0.7,
            coinbase_rate: 0.01,
            multi_input_prob: 0.2,
            change_address_prob: 0.6,
            address_reuse_prob: 0.5,
            mixer_reuse_prob: 0.1,
            withheld_fraction: 0.2,
            seed: 1,
        }
    }
}

impl SynthConfig {
    /// A configuration small enough for unit tests.
    pub fn small(seed: u64) -> Self {
        SynthConfig {
            n_mixer_addresses: 30,
            n_mixer_services: 2,
            n_user_addresses: 600,
            n_exchange_addresses: 6,
            n_exchanges: 2,
            n_forwarders: 4,
            n_processor_addresses: 15,
            n_processor_services: 1,
            n_miners: 3,
            n_transactions: 4000,
            seed,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("n_mixer_addresses", self.n_mixer_addresses),
            ("n_mixer_services", self.n_mixer_services),
            ("n_user_addresses", self.n_user_addresses),
            ("n_exchange_addresses", self.n_exchange_addresses),
            ("n_exchanges", self.n_exchanges),
            ("n_forwarders", self.n_forwarders),
            ("n_miners", self.n_miners),
            ("n_transactions", self.n_transactions),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("deposit_rate", self.deposit_rate),
            ("exchange_withdraw_rate", self.exchange_withdraw_rate),
            ("exchange_deposit_rate", self.exchange_deposit_rate),
            ("forward_rate", self.forward_rate),
            ("processor_rate", self.processor_rate),
            ("processor_merchant_prob", self.processor_merchant_prob),
            ("coinbase_rate", self.coinbase_rate),
            ("multi_input_prob", self.multi_input_prob),
            ("change_address_prob", self.change_address_prob),
            ("address_reuse_prob", self.address_reuse_prob),
            ("mixer_reuse_prob", self.mixer_reuse_prob),
            ("withheld_fraction", self.withheld_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0,1], got {v}"));
            }
        }
        let rates = self.deposit_rate
            + self.exchange_withdraw_rate
            + self.exchange_deposit_rate
            + self.forward_rate
            + self.processor_rate
            + self.coinbase_rate;
        if rates > 1.0 {
            return bad(format!("activity rates sum to {rates} > 1"));
        }
        if self.withheld_fraction >= 1.0 {
            return bad("withheld_fraction must be below 1".into());
        }
        if self.n_mixer_services > self.n_mixer_addresses {
            return bad("more mixer services than mixer addresses".into());
        }
        if self.n_processor_services > self.n_processor_addresses
            || (self.n_processor_services == 0) != (self.n_processor_addresses == 0)
        {
            return bad("processor services and addresses must both be zero or services <= addresses".into());
        }
        if self.n_exchanges > self.n_exchange_addresses {
            return bad("more exchanges than exchange addresses".into());
        }
        if self.batch_min == 0 || self.batch_min > self.batch_max {
            return bad("need 1 <= batch_min <= batch_max".into());
        }
        if self.fanout_min < 2 || self.fanout_min > self.fanout_max {
            return bad("need 2 <= fanout_min <= fanout_max".into());
        }
        if self.mean_gap_secs == 0 {
            return bad("mean_gap_secs must be positive".into());
        }
        if self.min_cycle_secs == 0 || self.min_cycle_secs >= self.max_cycle_secs {
            return bad("need 0 < min_cycle_secs < max_cycle_secs".into());
        }
        let slack = self.payout_slack();
        if self.min_cycle_secs + slack >= self.max_cycle_secs {
            return bad("cycle bounds too tight for the number of services".into());
        }
        // every mixer needs a deposit and a payout share
        if self.n_transactions < 4 * self.n_mixer_addresses {
            return bad(format!(
                "{} transactions cannot host cycles for {} mixer addresses",
                self.n_transactions, self.n_mixer_addresses
            ));
        }
        Ok(())
    }

    fn n_services(&self) -> usize {
        self.n_mixer_services + self.n_processor_services
    }

    /// A payout may wait for every other service's payout plus a gap each.
    fn payout_slack(&self) -> u64 {
        (self.n_services() as u64 + 1) * (2 * self.mean_gap_secs)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = SynthConfig::default();
        for (k, v) in parse_key_values(text)? {
            macro_rules! set {
                ($field:ident) => {
                    c.$field = parse_value(&k, &v)?
                };
            }
            match k.as_str() {
                "n_mixer_addresses" => set!(n_mixer_addresses),
                "n_mixer_services" => set!(n_mixer_services),
                "n_user_addresses" => set!(n_user_addresses),
                "n_exchange_addresses" => set!(n_exchange_addresses),
                "n_exchanges" => set!(n_exchanges),
                "n_forwarders" => set!(n_forwarders),
                "n_processor_addresses" => set!(n_processor_addresses),
                "n_processor_services" => set!(n_processor_services),
                "n_miners" => set!(n_miners),
                "n_transactions" => set!(n_transactions),
                "mean_gap_secs" => set!(mean_gap_secs),
                "max_cycle_secs" => set!(max_cycle_secs),
                "min_cycle_secs" => set!(min_cycle_secs),
                "mixer_cooldown_secs" => set!(mixer_cooldown_secs),
                "batch_min" => set!(batch_min),
                "batch_max" => set!(batch_max),
                "fanout_min" => set!(fanout_min),
                "fanout_max" => set!(fanout_max),
                "zero_balance" => set!(zero_balance),
                "deposit_rate" => set!(deposit_rate),
                "exchange_withdraw_rate" => set!(exchange_withdraw_rate),
                "exchange_deposit_rate" => set!(exchange_deposit_rate),
                "forward_rate" => set!(forward_rate),
                "processor_rate" => set!(processor_rate),
                "processor_merchant_prob" => set!(processor_merchant_prob),
                "coinbase_rate" => set!(coinbase_rate),
                "multi_input_prob" => set!(multi_input_prob),
                "change_address_prob" => set!(change_address_prob),
                "address_reuse_prob" => set!(address_reuse_prob),
                "mixer_reuse_prob" => set!(mixer_reuse_prob),
                "withheld_fraction" => set!(withheld_fraction),
                "seed" => set!(seed),
                _ => return Err(Error::Config(format!("unknown synth key {k:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Generator output. `labels` holds the labeled mixers; `mixers` holds all
/// of them, including the withheld ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub records: Vec<TxRecord>,
    pub labels: LabelSet,
    pub mixers: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    User,
    Exchange,
    Forwarder,
    Mixer,
}

type AddrId = usize;
type WalletId = usize;

#[derive(Debug)]
struct Address {
    name: String,
    balance: u64,
}

#[derive(Debug)]
struct Wallet {
    role: Role,
    addresses: Vec<AddrId>,
}

#[derive(Debug)]
struct Slot {
    addr: AddrId,
    service: usize,
    available_at: u64,
    counterparties: BTreeSet<AddrId>,
}

#[derive(Debug)]
struct Batch {
    /// (mixer slot, deposited amount)
    members: Vec<(usize, u64)>,
    opened: u64,
    target: usize,
    deadline: u64,
}

#[derive(Debug)]
struct Forward {
    due: u64,
    addr: AddrId,
    merchant: AddrId,
}

/// 64-bit bijective mixer so counters map to distinct opaque names.
fn scramble(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct World {
    cfg: SynthConfig,
    rng: Rng,
    addrs: Vec<Address>,
    wallets: Vec<Wallet>,
    users: Vec<WalletId>,
    exchanges: Vec<WalletId>,
    miners: Vec<WalletId>,
    forwarders: Vec<(AddrId, Vec<AddrId>)>,
    slots: Vec<Slot>,
    /// Merchant pools of processor services, indexed from the first
    /// processor service.
    merchants: Vec<Vec<AddrId>>,
    idle: Vec<VecDeque<usize>>,
    batches: Vec<Option<Batch>>,
    forwards: Vec<Forward>,
    records: Vec<TxRecord>,
    t: u64,
    name_key: u64,
    tx_key: u64,
}

impl World {
    fn new(cfg: SynthConfig) -> Self {
        let seed = cfg.seed;
        let mut w = World {
            rng: seeded(derive_seed(seed, 0)),
            addrs: Vec::new(),
            wallets: Vec::new(),
            users: Vec::new(),
            exchanges: Vec::new(),
            miners: Vec::new(),
            forwarders: Vec::new(),
            slots: Vec::new(),
            merchants: Vec::new(),
            idle: vec![VecDeque::new(); cfg.n_services()],
            batches: (0..cfg.n_services()).map(|_| None).collect(),
            forwards: Vec::new(),
            records: Vec::with_capacity(cfg.n_transactions),
            t: 1_400_000_000,
            name_key: derive_seed(seed, 1),
            tx_key: derive_seed(seed, 2),
            cfg,
        };
        for _ in 0..w.cfg.n_user_addresses {
            let id = w.new_wallet(Role::User);
            w.users.push(id);
        }
        for _ in 0..w.cfg.n_miners {
            let id = w.new_wallet(Role::User);
            w.miners.push(id);
        }
        for e in 0..w.cfg.n_exchanges {
            let id = w.new_wallet(Role::Exchange);
            w.exchanges.push(id);
            // the remaining addresses are spread round-robin
            let _ = e;
        }
        for i in w.cfg.n_exchanges..w.cfg.n_exchange_addresses {
            let wallet = w.exchanges[i % w.cfg.n_exchanges];
            w.new_address(wallet);
        }
        for _ in 0..w.cfg.n_forwarders {
            let wallet = w.new_wallet(Role::Forwarder);
            let addr = w.wallets[wallet].addresses[0];
            let n_merchants = w.rng.gen_range(1..=3);
            let merchants = (0..n_merchants)
                .map(|_| {
                    let u = w.users[w.rng.gen_range(0..w.users.len())];
                    w.new_address(u)
                })
                .collect();
            w.forwarders.push((addr, merchants));
        }
        for i in 0..w.cfg.n_mixer_addresses {
            let wallet = w.new_wallet(Role::Mixer);
            let service = i % w.cfg.n_mixer_services;
            w.add_slot(wallet, service);
        }
        for i in 0..w.cfg.n_processor_addresses {
            let wallet = w.new_wallet(Role::User);
            let service = w.cfg.n_mixer_services + i % w.cfg.n_processor_services;
            w.add_slot(wallet, service);
        }
        for _ in 0..w.cfg.n_processor_services {
            let pool = (0..5)
                .map(|_| {
                    let u = w.users[w.rng.gen_range(0..w.users.len())];
                    w.new_address(u)
                })
                .collect();
            w.merchants.push(pool);
        }
        w
    }

    fn add_slot(&mut self, wallet: WalletId, service: usize) {
        self.idle[service].push_back(self.slots.len());
        self.slots.push(Slot {
            addr: self.wallets[wallet].addresses[0],
            service,
            available_at: 0,
            counterparties: BTreeSet::new(),
        });
    }

    fn is_mixer_service(&self, service: usize) -> bool {
        service < self.cfg.n_mixer_services
    }

    fn new_address(&mut self, wallet: WalletId) -> AddrId {
        let id = self.addrs.len();
        let name = format!("1{:016x}", scramble(id as u64 ^ self.name_key));
        self.addrs.push(Address { name, balance: 0 });
        self.wallets[wallet].addresses.push(id);
        id
    }

    fn new_wallet(&mut self, role: Role) -> WalletId {
        let id = self.wallets.len();
        self.wallets.push(Wallet {
            role,
            addresses: Vec::new(),
        });
        self.new_address(id);
        id
    }

    fn tick(&mut self) {
        let g = self.cfg.mean_gap_secs;
        self.t += self.rng.gen_range(1..=2 * g - 1);
    }

    fn emit(&mut self, inputs: Vec<(AddrId, u64)>, outputs: Vec<(AddrId, u64)>) {
        for &(a, v) in &inputs {
            self.addrs[a].balance -= v;
        }
        for &(a, v) in &outputs {
            self.addrs[a].balance += v;
        }
        let merge = |side: Vec<(AddrId, u64)>, addrs: &[Address]| {
            let mut m: Vec<(AddrId, u64)> = Vec::with_capacity(side.len());
            for (a, v) in side {
                match m.iter_mut().find(|(b, _)| *b == a) {
                    Some(slot) => slot.1 += v,
                    None => m.push((a, v)),
                }
            }
            m.into_iter().map(|(a, v)| (addrs[a].name.clone(), v)).collect()
        };
        let n = self.records.len() as u64;
        self.records.push(TxRecord {
            tx_id: format!("{:016x}", scramble(n ^ self.tx_key)),
            timestamp: self.t,
            inputs: merge(inputs, &self.addrs),
            outputs: merge(outputs, &self.addrs),
        });
    }

    fn funded(&self, wallet: WalletId) -> Vec<AddrId> {
        self.wallets[wallet]
            .addresses
            .iter()
            .copied()
            .filter(|&a| self.addrs[a].balance > 0)
            .collect()
    }

    /// Picks spending inputs (whole balances) from a random funded user.
    fn pick_spender(&mut self, avoid: Option<&BTreeSet<AddrId>>) -> Option<(WalletId, Vec<(AddrId, u64)>)> {
        for _ in 0..16 {
            let pool = if self.rng.gen_bool(0.05) {
                &self.miners
            } else {
                &self.users
            };
            let wallet = pool[self.rng.gen_range(0..pool.len())];
            let mut funded = self.funded(wallet);
            if let Some(avoid) = avoid {
                funded.retain(|a| !avoid.contains(a));
            }
            if funded.is_empty() {
                continue;
            }
            funded.shuffle(&mut self.rng);
            let k = if funded.len() > 1 && self.rng.gen_bool(self.cfg.multi_input_prob) {
                self.rng.gen_range(2..=funded.len().min(3))
            } else {
                1
            };
            let inputs = funded[..k].iter().map(|&a| (a, self.addrs[a].balance)).collect();
            return Some((wallet, inputs));
        }
        None
    }

    fn user_recipient(&mut self, exclude: WalletId) -> AddrId {
        let mut wallet = self.users[self.rng.gen_range(0..self.users.len())];
        if wallet == exclude {
            wallet = self.users[(wallet + 1) % self.users.len()];
        }
        if self.rng.gen_bool(self.cfg.address_reuse_prob) {
            let a = &self.wallets[wallet].addresses;
            a[self.rng.gen_range(0..a.len())]
        } else {
            self.new_address(wallet)
        }
    }

    fn change_address(&mut self, wallet: WalletId, first_input: AddrId) -> AddrId {
        if self.rng.gen_bool(self.cfg.change_address_prob) {
            self.new_address(wallet)
        } else {
            first_input
        }
    }

    /// Splits `total` into a paid part and change, returning (pay, change).
    fn split_amount(&mut self, total: u64) -> (u64, u64) {
        if total < 2 {
            return (total, 0);
        }
        let pay = self.rng.gen_range(total / 10..=total * 9 / 10).max(1);
        (pay, total - pay)
    }

    fn coinbase(&mut self) {
        let wallet = if self.rng.gen_bool(0.3) {
            self.exchanges[self.rng.gen_range(0..self.exchanges.len())]
        } else {
            self.miners[self.rng.gen_range(0..self.miners.len())]
        };
        let a = &self.wallets[wallet].addresses;
        let addr = a[self.rng.gen_range(0..a.len())];
        let amount = if self.wallets[wallet].role == Role::Exchange {
            self.rng.gen_range(500..=2000) * COIN
        } else {
            25 * COIN
        };
        self.emit(Vec::new(), vec![(addr, amount)]);
    }

    fn user_payment(&mut self, to: Option<AddrId>) -> bool {
        let Some((wallet, inputs)) = self.pick_spender(None) else {
            return false;
        };
        let total: u64 = inputs.iter().map(|x| x.1).sum();
        let (pay, change) = self.split_amount(total);
        let dest = match to {
            Some(a) => a,
            None => self.user_recipient(wallet),
        };
        let mut outputs = vec![(dest, pay)];
        if change > 0 {
            let c = self.change_address(wallet, inputs[0].0);
            outputs.push((c, change));
        }
        self.emit(inputs, outputs);
        true
    }

    fn exchange_deposit(&mut self) -> bool {
        let ex = self.exchanges[self.rng.gen_range(0..self.exchanges.len())];
        let a = &self.wallets[ex].addresses;
        let addr = a[self.rng.gen_range(0..a.len())];
        self.user_payment(Some(addr))
    }

    fn exchange_withdraw(&mut self) -> bool {
        let ex = self.exchanges[self.rng.gen_range(0..self.exchanges.len())];
        let mut funded = self.funded(ex);
        if funded.is_empty() {
            return false;
        }
        funded.shuffle(&mut self.rng);
        let k = self.rng.gen_range(1..=funded.len().min(3));
        let inputs: Vec<(AddrId, u64)> = funded[..k].iter().map(|&a| (a, self.addrs[a].balance)).collect();
        let total: u64 = inputs.iter().map(|x| x.1).sum();
        let n_out = self.rng.gen_range(3..=12);
        let mut outputs = Vec::with_capacity(n_out + 1);
        let mut left = total;
        for _ in 0..n_out {
            let cap = (left / 4).min(5 * COIN);
            if cap < 1_000 {
                break;
            }
            let v = self.rng.gen_range(cap / 100..=cap).max(1);
            let dest = self.user_recipient(usize::MAX);
            outputs.push((dest, v));
            left -= v;
        }
        if outputs.is_empty() {
            return false;
        }
        if left > 0 {
            let a = &self.wallets[ex].addresses;
            let back = a[self.rng.gen_range(0..a.len())];
            outputs.push((back, left));
        }
        self.emit(inputs, outputs);
        true
    }

    fn forward_receive(&mut self) -> bool {
        let f = self.rng.gen_range(0..self.forwarders.len());
        let (addr, merchants) = self.forwarders[f].clone();
        if !self.user_payment(Some(addr)) {
            return false;
        }
        if !self.forwards.iter().any(|x| x.addr == addr) {
            let lo = self.cfg.min_cycle_secs;
            let due = self.t + self.rng.gen_range(lo..=self.cfg.max_cycle_secs - lo);
            let merchant = merchants[self.rng.gen_range(0..merchants.len())];
            self.forwards.push(Forward { due, addr, merchant });
        }
        true
    }

    fn run_forward(&mut self, idx: usize) {
        let f = self.forwards.remove(idx);
        let bal = self.addrs[f.addr].balance;
        if bal > 0 {
            self.emit(vec![(f.addr, bal)], vec![(f.merchant, bal)]);
        }
    }

    /// A user pays into the next idle address of `service`, joining (or
    /// opening) the service's current batch.
    fn service_deposit(&mut self, service: usize) -> bool {
        let Some(&slot) = self.idle[service].front() else {
            return false;
        };
        if self.slots[slot].available_at > self.t {
            return false;
        }
        let mixer = self.is_mixer_service(service);
        let avoid = if mixer {
            Some(self.slots[slot].counterparties.clone())
        } else {
            None
        };
        let Some((wallet, inputs)) = self.pick_spender(avoid.as_ref()) else {
            return false;
        };
        self.idle[service].pop_front();
        let total: u64 = inputs.iter().map(|x| x.1).sum();
        let (pay, change) = self.split_amount(total);
        let mixer_addr = self.slots[slot].addr;
        let mut outputs = vec![(mixer_addr, pay)];
        if change > 0 {
            let c = self.change_address(wallet, inputs[0].0);
            outputs.push((c, change));
        }
        for &(a, _) in &inputs {
            self.slots[slot].counterparties.insert(a);
        }
        self.emit(inputs, outputs);

        if self.batches[service].is_none() {
            let target = self.rng.gen_range(self.cfg.batch_min..=self.cfg.batch_max);
            let latest = self.cfg.max_cycle_secs - self.cfg.payout_slack();
            let wait = self.rng.gen_range(self.cfg.min_cycle_secs..=latest);
            self.batches[service] = Some(Batch {
                members: Vec::new(),
                opened: self.t,
                target,
                deadline: self.t + wait,
            });
        }
        let batch = self.batches[service].as_mut().expect("batch opened above");
        batch.members.push((slot, pay));
        if batch.members.len() >= batch.target {
            // a full batch pays out soon, not immediately
            let soon = self.t + self.rng.gen_range(10 * 60..=30 * 60);
            batch.deadline = batch.deadline.min(soon);
        }
        true
    }

    fn payout(&mut self, service: usize) -> Result<()> {
        let batch = self.batches[service].take().expect("due batch exists");
        if self.t - batch.opened > self.cfg.max_cycle_secs {
            return Err(Error::invalid("service payout exceeded the cycle bound"));
        }
        let mixer = self.is_mixer_service(service);
        let mut inputs = Vec::with_capacity(batch.members.len());
        for &(slot, amount) in &batch.members {
            let spend = if self.cfg.zero_balance || !mixer {
                amount
            } else {
                (amount as f64 * self.rng.gen_range(0.9..0.99)).max(1.0) as u64
            };
            inputs.push((self.slots[slot].addr, spend));
        }
        let total: u64 = inputs.iter().map(|x| x.1).sum();
        let n_out = if mixer {
            self.rng.gen_range(self.cfg.fanout_min..=self.cfg.fanout_max)
        } else {
            self.rng.gen_range(1..=3)
        };
        let n_out = n_out.min(total as usize).max(1);
        // random cut points give a fan-out summing exactly to the total
        let mut cuts: BTreeSet<u64> = BTreeSet::new();
        while cuts.len() + 1 < n_out {
            cuts.insert(self.rng.gen_range(1..total));
        }
        let mut bounds: Vec<u64> = vec![0];
        bounds.extend(cuts);
        bounds.push(total);
        let mut previous: Vec<AddrId> = Vec::new();
        if mixer && self.cfg.mixer_reuse_prob > 0.0 {
            for &(slot, _) in &batch.members {
                previous.extend(self.slots[slot].counterparties.iter().copied());
            }
        }
        let mut outputs = Vec::with_capacity(n_out);
        for w in bounds.windows(2) {
            let dest = if !mixer && self.rng.gen_bool(self.cfg.processor_merchant_prob) {
                let pool = &self.merchants[service - self.cfg.n_mixer_services];
                pool[self.rng.gen_range(0..pool.len())]
            } else if !previous.is_empty() && self.rng.gen_bool(self.cfg.mixer_reuse_prob) {
                previous[self.rng.gen_range(0..previous.len())]
            } else {
                let u = self.users[self.rng.gen_range(0..self.users.len())];
                self.new_address(u)
            };
            outputs.push((dest, w[1] - w[0]));
        }
        for &(slot, _) in &batch.members {
            let s = &mut self.slots[slot];
            for &(d, _) in &outputs {
                s.counterparties.insert(d);
            }
            let cool = self.cfg.mixer_cooldown_secs;
            s.available_at = self.t + self.rng.gen_range(cool..=2 * cool);
            let service = s.service;
            self.idle[service].push_back(slot);
        }
        self.emit(inputs, outputs);
        Ok(())
    }

    /// Emits one transaction. Due payouts and forwards take precedence.
    fn step(&mut self, remaining: usize) -> Result<()> {
        self.tick();
        let open: usize = self.batches.iter().filter(|b| b.is_some()).count();
        let due_batch = (0..self.batches.len()).find(|&s| {
            self.batches[s]
                .as_ref()
                .is_some_and(|b| b.deadline <= self.t || remaining <= open)
        });
        if let Some(s) = due_batch {
            return self.payout(s);
        }
        if let Some(i) = self.forwards.iter().position(|f| f.due <= self.t) {
            self.run_forward(i);
            if self.records.len() + remaining > self.cfg.n_transactions {
                return Ok(());
            }
        }
        let closing = remaining <= 2 * self.cfg.n_services();
        loop {
            let c = &self.cfg;
            let r: f64 = self.rng.gen();
            let mut acc = c.coinbase_rate;
            let done = if r < acc {
                self.coinbase();
                true
            } else if r < {
                acc += c.deposit_rate;
                acc
            } {
                let service = self.rng.gen_range(0..self.cfg.n_mixer_services);
                !closing && self.service_deposit(service)
            } else if r < {
                acc += c.exchange_withdraw_rate;
                acc
            } {
                self.exchange_withdraw()
            } else if r < {
                acc += c.exchange_deposit_rate;
                acc
            } {
                self.exchange_deposit()
            } else if r < {
                acc += c.forward_rate;
                acc
            } {
                self.forward_receive()
            } else if r < {
                acc += c.processor_rate;
                acc
            } {
                let n = self.cfg.n_processor_services;
                n > 0 && !closing && {
                    let service = self.cfg.n_mixer_services + self.rng.gen_range(0..n);
                    self.service_deposit(service)
                }
            } else {
                self.user_payment(None)
            };
            if done {
                return Ok(());
            }
            // nothing feasible; funding the economy always is
            if self.rng.gen_bool(0.2) {
                self.coinbase();
                return Ok(());
            }
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut w = World::new(config.clone());
    // seed exchanges so withdrawals can fund users from the start
    for e in 0..w.exchanges.len() {
        let addr = w.wallets[w.exchanges[e]].addresses[0];
        w.tick();
        w.emit(Vec::new(), vec![(addr, 10_000 * COIN)]);
    }
    while w.records.len() < config.n_transactions {
        let remaining = config.n_transactions - w.records.len();
        w.step(remaining)?;
    }
    while let Some(s) = (0..w.batches.len()).find(|&s| w.batches[s].is_some()) {
        w.tick();
        w.payout(s)?;
    }
    let n_mixers = config.n_mixer_addresses;
    if w.slots[..n_mixers].iter().any(|s| s.counterparties.is_empty()) {
        return Err(Error::Config(
            "too few transactions for every mixer address to complete a cycle".into(),
        ));
    }

    let mut names: Vec<String> = w.slots[..n_mixers]
        .iter()
        .map(|s| w.addrs[s.addr].name.clone())
        .collect();
    let mixers: BTreeSet<String> = names.iter().cloned().collect();
    let mut label_rng = seeded(derive_seed(config.seed, 3));
    names.sort();
    names.shuffle(&mut label_rng);
    let withheld = (config.withheld_fraction * names.len() as f64).floor() as usize;
    let labels = LabelSet {
        positives: names[withheld..].iter().cloned().collect(),
    };
    Ok(SynthDataset {
        records: w.records,
        labels,
        mixers,
    })
}
