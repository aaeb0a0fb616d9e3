#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli/run_config.hpp"
#include "iclopt/evaluation.hpp"
#include "iclopt/gateway.hpp"

namespace iclopt::cli {

enum class CellStatus { kOk, kFailed };

/// One (instruction, examples) evaluation. For tuned rows `tuning` names the
/// demonstrations used while tuning; it is unset for untuned rows.
struct MatrixCell {
  std::string instruction;             // simple | expert
  std::optional<PolicyKind> tuning;
  PolicyKind testing = PolicyKind::kZeroShot;
  CellStatus status = CellStatus::kOk;
  Metrics mean;
  Metrics stddev;
  std::string error;
};

struct TuningRun {
  std::string instruction;
  PolicyKind tuning = PolicyKind::kZeroShot;
  CellStatus status = CellStatus::kOk;
  double initial_train_f1 = 0.0;
  double final_train_f1 = 0.0;
  std::size_t accepted = 0;
  std::string final_instruction;
  std::string error;
};

struct MatrixResult {
  nlohmann::ordered_json metadata;
  std::vector<MatrixCell> untuned;  // few-shot table
  std::vector<TuningRun> tuning;
  std::vector<MatrixCell> tuned;    // automatic prompt design table

  bool any_failed() const;
};

/// Runs every configured cell sequentially. A failing cell is recorded and
/// the run continues. When `tuned_dir` is set, each tuning run's artifacts
/// are written below it.
MatrixResult run_matrix(const RunConfig& config, Gateway& gateway, const Corpus& train, const Corpus& test,
                        const std::optional<std::filesystem::path>& tuned_dir = std::nullopt);

nlohmann::ordered_json to_json(const MatrixResult& result);
MatrixResult matrix_from_json(const nlohmann::json& j);

/// Few-shot table: one row per example strategy, one column group per
/// instruction.
std::string render_untuned_markdown(const MatrixResult& result);
/// Automatic prompt design table: a "(no tuning, zero-shot)" baseline row,
/// then one row per (tuning demos, testing demos).
std::string render_tuned_markdown(const MatrixResult& result);
/// Long format, one line per cell.
std::string render_untuned_csv(const MatrixResult& result);
std::string render_tuned_csv(const MatrixResult& result);

}  // namespace iclopt::cli
