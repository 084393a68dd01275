#pragma once

// Subcommand bodies and run-directory artifacts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atbptt/bench.hpp"
#include "atbptt/config.hpp"
#include "atbptt/oracle.hpp"

namespace atbptt::cli {

struct Splits {
  data::LabeledDataset train, val, test;
  std::optional<distill::ZcaTransform> zca;
};

// Loads or generates the data, splits it with substream(seed, "data") and
// applies ZCA (fit on train) when enabled.
Splits load_data(const ExperimentConfig& cfg);

// Fills the model input shape and class count from the data.
ExperimentConfig resolve(ExperimentConfig cfg, const data::LabeledDataset& train);

// --out, then $ATBPTT_OUT_ROOT, then [run] out.
std::filesystem::path output_root(const ExperimentConfig& cfg, const std::optional<std::string>& out_flag);

// Sidecar: "ATBS", u32 version, u64 classes, ipc, rank, dims..., image and
// label doubles (little-endian), then the FNV-1a hash of every prior byte.
void write_sidecar(const std::filesystem::path& path, const SyntheticDataset& S);
SyntheticDataset read_sidecar(const std::filesystem::path& path);

// Binary PGM grid: one row per class, one column per image, each image
// min-max scaled. Flat samples are laid out on the smallest square.
void write_pgm(const std::filesystem::path& path, const SyntheticDataset& S);

std::string epochs_csv(const std::vector<distill::RunRecord>& records);

struct DistillOutcome {
  std::filesystem::path dir;
  distill::RunReport report;
};

// Writes config.ini, epochs.csv, report.json, distilled.bin and distilled.pgm
// into <root>/<run id>.
DistillOutcome cmd_distill(const ExperimentConfig& cfg, const std::filesystem::path& root);

// Re-evaluates a sidecar with the config's eval protocol; writes eval.json
// next to the sidecar.
distill::EvalResult cmd_eval(const std::filesystem::path& sidecar, const ExperimentConfig& cfg);

// Always writes verify.json into `dir`, pass or fail.
oracle::VerifyReport cmd_verify(oracle::Level level, std::uint64_t seed, std::optional<double> tolerance,
                                const std::filesystem::path& dir);

// Writes bench.csv into `dir`.
std::vector<bench::BenchRow> cmd_bench(const ExperimentConfig& cfg, const std::filesystem::path& dir);

}  // namespace atbptt::cli
