//! Credit-ranked delegated consensus.
//!
//! Nodes are ranked by credit (score descending, id ascending). The top 30
//! produce blocks round-robin in 10 s slots and the next 20 audit each
//! candidate; a block commits once `⌈0.51·20⌉ = 11` auditors approve.
//! Credits move at each slot close and the election reruns every 300 s
//! cycle, excluding nodes whose score fell below the threshold.

mod audit;
mod credit;
mod driver;
mod faults;

pub use audit::{audit, judge, open_reply, tally, AuditReply, ReplyError, TallyOutcome};
pub use credit::{
    cycle_readjust, elect, update_credits, ConsensusError, CreditConfig, CreditEvent, CreditTable,
    ElectionConfig,
};
pub use driver::{Consortium, ConsortiumConfig, NodeSetup, ReplicaView, GATEWAY};
pub use faults::{Fault, FaultParseError, FaultScript};
