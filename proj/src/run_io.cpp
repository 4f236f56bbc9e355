#include "mclsr/run_io.hpp"

#include "mclsr/errors.hpp"
#include "mclsr/version.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mclsr {

namespace {

std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t");
  return s.substr(lo, hi - lo + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected `key = value`");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty config key");
    values[key] = value;
  }
  return values;
}

std::string format_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_history_csv(const std::string& path, std::span<const EpochStats> history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,loss_p,loss_il,loss_fl,val_recall50\n";
  for (const EpochStats& e : history)
    out << e.epoch << ',' << format_real(e.loss_p) << ',' << format_real(e.loss_il) << ','
        << format_real(e.loss_fl) << ',' << format_real(e.val_recall50) << '\n';
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "metric,cutoff,value\n";
  for (std::size_t i = 0; i < report.cutoffs.size(); ++i) {
    out << "recall," << report.cutoffs[i] << ',' << format_real(100.0 * report.recall[i]) << '\n';
    out << "ndcg," << report.cutoffs[i] << ',' << format_real(100.0 * report.ndcg[i]) << '\n';
    out << "hit," << report.cutoffs[i] << ',' << format_real(100.0 * report.hit[i]) << '\n';
  }
}

std::uint64_t fnv1a_file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void prepare_run_dir(const std::string& dir, bool force) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::path(dir) / "run.json";
  if (fs::exists(manifest) && !force)
    throw IoError("run directory already used: " + dir + " (pass --force to overwrite)");
  fs::create_directories(dir);
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::map<std::string, std::string>& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::map<std::string, std::string>& extra) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config"] = config;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, path] : inputs) {
    char digest[32];
    std::snprintf(digest, sizeof(digest), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a_file_digest(path)));
    in[name] = nlohmann::json{{"path", path}, {"digest", digest}};
  }
  j["inputs"] = in;
  for (const auto& [key, value] : extra) j[key] = value;
  std::ofstream out(dir + "/run.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << j.dump(2) << '\n';
}

}  // namespace mclsr
