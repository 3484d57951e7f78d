pub mod account;
pub mod ces;
pub mod cloud;
pub mod codec;
pub mod consensus;
pub mod contract;
pub mod emr;
pub mod group;
pub mod hash;
pub mod ledger;
pub mod sim;
pub mod sym;
