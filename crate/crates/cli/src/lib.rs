//! Library surface of the `pvar` command-line tool: filesystem ingestion
//! and report writers shared by the binary and its tests.

pub mod io;
