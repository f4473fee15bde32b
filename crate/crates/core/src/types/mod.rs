//! Shared data types: systems, partitions, bounded signals and trajectories.

mod partition;
mod signal;
mod system;
mod trajectory;

pub use partition::{lower_diameter, make_partition, upper_diameter, Partition, PartitionKind};
pub use signal::Signal;
pub use system::{ControlAffineSystem, FullyNonlinearSystem, InputMatrix};
pub use trajectory::{csv_header, fmt17, read_csv, CsvRow, DomainExit, Status, Trajectory};

/// Default escape radius used to declare finite-time blow-up.
pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e9;
