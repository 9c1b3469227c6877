//! MOTChallenge text formats, feature sidecars, and synthetic scenarios.

mod mot;
mod scenario;

pub use mot::{
    detections_from_parsed, parse_features, parse_mot, write_features, write_mot_detections,
    write_mot_ground_truth, write_mot_results, MotRow, ParsedMot, Rejection,
};
pub use scenario::{generate_scenario, FeatureMode, ObjectSpec, Scenario, ScenarioSpec};
