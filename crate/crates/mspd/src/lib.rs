//! File formats, the `mspd` command-line tool and its self-test suite, on
//! top of the `mspd-core` computation crate.

pub mod cli;
pub mod io;
pub mod selftest;
