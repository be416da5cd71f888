//! Synthetic respondents: LLM-answered questionnaires and the datasets derived
//! from them.

mod derive;
mod generate;
mod prompt;
mod report;
pub mod transport;

pub use derive::{
    combine_vertices, gpt_means, matrix_to_vertices, means_to_matrix, party_vertices, sample_dirichlet, sample_gpt_voters,
    vertices_to_matrix, PartyVertex, VoterSynthesisConfig,
};
pub use generate::{
    generate_dataset, matrix_to_samples, parse_row_id, samples_to_matrix, GeneratedDataset, LlmConfig, SyntheticSample,
    DEFAULT_REPS_PER_TEMPERATURE, DEFAULT_TEMPERATURES,
};
pub use prompt::{build_prompts, parse_llm_reply};
pub use report::{temperature_report, TemperatureRow};
pub use transport::{
    read_fixtures, write_fixtures, FixtureRecord, HttpTransport, MockTransport, ReplayTransport, Transport, TransportError,
};
