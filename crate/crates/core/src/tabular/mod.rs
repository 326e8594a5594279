//! Exact finite-MDP analysis: value iteration, occupancy measures,
//! concentrability coefficients and abstraction checks.

pub mod abstraction;
pub mod mdp;
pub mod motivation;
pub mod occupancy;
pub mod sweep;

pub use abstraction::{aggregate, aggregate_partition, aggregated_concentrability, AbstractionMap, AggregatedTable, Level, Partition};
pub use mdp::{greedy_action, greedy_path_length, value_iteration, FiniteMDP, GridLayout, Solution};
pub use motivation::{
    coarsest_map, displacement_map, first_room_mask, four_rooms, gamma_low, identity_map, kappa_le, option_counts, verify_motivation_box, Behaviour,
    Checks, Hierarchy, MotivationReport, Oracle,
};
pub use occupancy::{
    concentrability, concentrability_flat, monte_carlo_occupancy, occupancy, occupancy_from, series_occupancy, uniform_init, Kappa,
    OccupancyTable, Policy, Witness,
};
pub use sweep::{records_csv, records_jsonl, standard_maps, sweep, Family, InstanceRecord, MapResult};
