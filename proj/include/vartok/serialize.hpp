#pragma once

// File formats for every pipeline artifact. Text formats carry floats with
// 17 significant digits so values reload bit-exactly; the model checkpoint
// and pipeline config are JSON. Readers validate structure and throw
// std::runtime_error with the offending path or line.

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vartok/harness.hpp"
#include "vartok/harq.hpp"
#include "vartok/training.hpp"

namespace vartok::serialize {

// Canonical artifact names inside a data directory.
namespace files {
inline constexpr const char* config = "config.json";
inline constexpr const char* catalog = "catalog.tsv";
inline constexpr const char* sessions = "sessions.tsv";
inline constexpr const char* eval_sessions = "eval_sessions.tsv";
inline constexpr const char* lengths = "lengths.tsv";
inline constexpr const char* checkpoint = "model.json";
inline constexpr const char* loss_curve = "loss.csv";
inline constexpr const char* id_table = "ids.tsv";
inline constexpr const char* outcomes = "decode.tsv";
inline constexpr const char* report_csv = "report.csv";
inline constexpr const char* report_text = "report.txt";
}  // namespace files

// Shortest text that parses back to the same double (17 significant digits).
std::string format_double(double value);
// Strict full-token parse; throws std::runtime_error on trailing garbage.
double parse_double(const std::string& text);

void write_catalog(const std::string& path, const harness::ItemCatalog& catalog);
harness::ItemCatalog read_catalog(const std::string& path);

void write_sessions(const std::string& path, const std::vector<harness::Session>& sessions);
std::vector<harness::Session> read_sessions(const std::string& path);

void write_lengths(const std::string& path, const std::vector<int>& lengths, int max_len);
// Returns (lengths, max_len).
std::pair<std::vector<int>, int> read_lengths(const std::string& path);

void write_checkpoint(const std::string& path, const harq::HarqModel& model);
harq::HarqModel read_checkpoint(const std::string& path);

void write_loss_curve(const std::string& path,
                      const std::vector<training::LossBreakdown>& curve);
std::vector<training::LossBreakdown> read_loss_curve(const std::string& path);

void write_outcomes(const std::string& path,
                    const std::vector<harness::DecodeOutcome>& outcomes);
std::vector<harness::DecodeOutcome> read_outcomes(const std::string& path);

// Scalar report fields as key,value rows. The loss curve lives in its own
// CSV and is not round-tripped here.
void write_report_csv(const std::string& path, const harness::ExperimentReport& report);
harness::ExperimentReport read_report_csv(const std::string& path);

// Human-readable summary of the same report.
void write_report_summary(const std::string& path, const harness::ExperimentReport& report);

nlohmann::json config_to_json(const harness::PipelineConfig& config);
harness::PipelineConfig config_from_json(const nlohmann::json& j);
void write_config(const std::string& path, const harness::PipelineConfig& config);
harness::PipelineConfig read_config(const std::string& path);

}  // namespace vartok::serialize
