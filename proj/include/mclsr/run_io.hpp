#pragma once

#include "mclsr/evaluator.hpp"
#include "mclsr/trainer.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mclsr {

/// Parses a flat `key = value` config file; '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& path);

/// Shortest round-trippable decimal form of a double.
std::string format_real(Real v);

/// `epoch,loss_p,loss_il,loss_fl,val_recall50` rows; recall stays a fraction.
void write_history_csv(const std::string& path, std::span<const EpochStats> history);

/// `metric,cutoff,value` rows with values scaled x100, matching the usual
/// percentage convention of published tables.
void write_metrics_csv(const std::string& path, const MetricsReport& report);

std::uint64_t fnv1a_file_digest(const std::string& path);

/// Refuses to reuse a directory that already contains a manifest unless
/// `force`; creates the directory (and parents) otherwise.
void prepare_run_dir(const std::string& dir, bool force);

/// Reproducibility manifest: command, config, version string, input digests.
void write_manifest(const std::string& dir, const std::string& command,
                    const std::map<std::string, std::string>& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::map<std::string, std::string>& extra = {});

}  // namespace mclsr
