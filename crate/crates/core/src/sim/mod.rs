//! Static-topology lookup simulation.

pub mod campaign;
pub mod lookup;
pub mod oracle;
pub mod topology;

pub use campaign::{run_campaign, CampaignConfig, Estimate, SimStats};
pub use lookup::{lookup, LookupTrace, Router, Routing};
pub use topology::{bucket_regions, BucketRegion, Topology};
pub use oracle::{kernel_exhaustive, kernel_oracle, KernelCase, OracleEstimate};
