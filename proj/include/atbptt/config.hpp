#pragma once

// Experiment configuration: a flat typed key = value file with [section]
// headers. Every key of every module appears in the resolved form.

#include <cstdint>
#include <string>
#include <vector>

#include "atbptt/distill.hpp"

namespace atbptt::cli {

enum class DataSource { kBlobs, kIdx, kCsv };

struct DataConfig {
  DataSource source = DataSource::kBlobs;
  std::size_t classes = 3;
  std::size_t per_class = 900;
  std::size_t dim = 16;
  std::size_t image_side = 0;
  double separation = 4.0;
  double stddev = 1.0;
  std::string images;  // idx image file or csv table
  std::string labels;  // idx label file
  double train_fraction = 0.5556;
  double val_fraction = 0.1111;
  double test_fraction = 0.3333;
  bool zca = false;
  double zca_lambda = 0.1;
};

struct BenchConfig {
  std::vector<std::size_t> sizes{200, 1000};
  std::size_t window = 20;
  std::size_t k = 32;
  std::size_t rows = 8;
  double alpha = 0.01;
};

struct ExperimentConfig {
  ExperimentConfig();

  std::string run_id = "run";
  std::string out_dir = "runs";
  DataConfig data;
  // outer.seed is the master seed; outer.spec.input/classes come from the data.
  distill::OuterConfig outer;
  BenchConfig bench;
};

// Throws ConfigError naming `origin:line` for syntax errors, unknown
// sections or keys, and malformed values.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);

// Every key with its resolved value; parse_config(to_ini(c)) == c.
std::string to_ini(const ExperimentConfig& cfg);

// Cross-field checks (fractions, model against data) on top of the module
// validators.
void validate(const ExperimentConfig& cfg);

std::string to_string(DataSource s);
DataSource parse_data_source(const std::string& s);

}  // namespace atbptt::cli
