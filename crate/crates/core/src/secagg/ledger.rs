//! Byte accounting for every message a protocol run exchanges.

/// Wire cost of one key-agreement exchange with a single neighbor.
pub const SEED_EXCHANGE_BYTES: u64 = 32;
/// Bytes per encoded ring element or broadcast float.
pub const ELEMENT_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Traffic {
    /// Pairwise seed agreement between neighboring clients.
    KeyExchange,
    /// Masked client vectors sent to the server.
    MaskedPayload,
    /// Server to clients.
    Broadcast,
}

impl Traffic {
    fn slot(self) -> usize {
        match self {
            Traffic::KeyExchange => 0,
            Traffic::MaskedPayload => 1,
            Traffic::Broadcast => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartyCounters {
    sent: [u64; 3],
    received: [u64; 3],
}

impl PartyCounters {
    pub fn sent(&self, traffic: Traffic) -> u64 {
        self.sent[traffic.slot()]
    }

    pub fn received(&self, traffic: Traffic) -> u64 {
        self.received[traffic.slot()]
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn total_received(&self) -> u64 {
        self.received.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.total_sent() + self.total_received()
    }
}

/// One logical transfer step: a SecAgg round or a broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub label: String,
    pub traffic: Traffic,
    /// Elements per message.
    pub message_len: usize,
    pub messages: usize,
    pub round_id: Option<u64>,
}

/// Which protocol produced a ledger, used to check cost-model parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunShape {
    pub variant: String,
    pub n_clients: usize,
    pub n_items: usize,
    pub iterations: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    server: PartyCounters,
    clients: Vec<PartyCounters>,
    records: Vec<TransferRecord>,
    shape: Option<RunShape>,
}

impl CommLedger {
    pub fn new(n_clients: usize) -> Self {
        Self {
            clients: vec![PartyCounters::default(); n_clients],
            ..Self::default()
        }
    }

    pub fn server(&self) -> &PartyCounters {
        &self.server
    }

    pub fn client(&self, u: usize) -> &PartyCounters {
        &self.clients[u]
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn records(&self) -> &[TransferRecord] {
        &self.records
    }

    pub fn shape(&self) -> Option<&RunShape> {
        self.shape.as_ref()
    }

    pub fn set_shape(&mut self, shape: RunShape) {
        self.shape = Some(shape);
    }

    /// Number of SecAgg rounds recorded.
    pub fn secagg_rounds(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.traffic == Traffic::MaskedPayload)
            .count()
    }

    /// Longest single message, in elements, across all traffic.
    pub fn max_message_len(&self) -> usize {
        self.records.iter().map(|r| r.message_len).max().unwrap_or(0)
    }

    pub fn mean_client_sent(&self, traffic: Option<Traffic>) -> f64 {
        self.mean_over_clients(|c| traffic.map_or(c.total_sent(), |t| c.sent(t)))
    }

    pub fn mean_client_total(&self) -> f64 {
        self.mean_over_clients(PartyCounters::total)
    }

    fn mean_over_clients(&self, f: impl Fn(&PartyCounters) -> u64) -> f64 {
        if self.clients.is_empty() {
            return 0.0;
        }
        self.clients.iter().map(f).sum::<u64>() as f64 / self.clients.len() as f64
    }

    pub fn total_client_sent(&self, traffic: Traffic) -> u64 {
        self.clients.iter().map(|c| c.sent(traffic)).sum()
    }

    pub(crate) fn charge_key_exchange(&mut self, round_id: u64, degree: usize) {
        let bytes = degree as u64 * SEED_EXCHANGE_BYTES;
        for c in &mut self.clients {
            c.sent[Traffic::KeyExchange.slot()] += bytes;
            c.received[Traffic::KeyExchange.slot()] += bytes;
        }
        self.records.push(TransferRecord {
            label: "key-exchange".into(),
            traffic: Traffic::KeyExchange,
            message_len: 0,
            messages: self.clients.len() * degree,
            round_id: Some(round_id),
        });
    }

    pub(crate) fn charge_payloads(&mut self, label: &str, round_id: u64, senders: &[usize], message_len: usize, wire_bytes: u64) {
        let slot = Traffic::MaskedPayload.slot();
        for &u in senders {
            self.clients[u].sent[slot] += wire_bytes;
            self.server.received[slot] += wire_bytes;
        }
        self.records.push(TransferRecord {
            label: label.into(),
            traffic: Traffic::MaskedPayload,
            message_len,
            messages: senders.len(),
            round_id: Some(round_id),
        });
    }

    /// Server sends `elements` floats to every client.
    pub fn charge_broadcast(&mut self, label: &str, elements: usize) {
        let bytes = elements as u64 * ELEMENT_BYTES;
        let slot = Traffic::Broadcast.slot();
        for c in &mut self.clients {
            c.received[slot] += bytes;
            self.server.sent[slot] += bytes;
        }
        self.records.push(TransferRecord {
            label: label.into(),
            traffic: Traffic::Broadcast,
            message_len: elements,
            messages: self.clients.len(),
            round_id: None,
        });
    }
}
