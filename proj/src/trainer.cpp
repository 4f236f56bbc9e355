#include "mclsr/trainer.hpp"

#include "mclsr/errors.hpp"
#include "mclsr/graphs.hpp"
#include "mclsr/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mclsr {

namespace {

constexpr Real kAdamBeta1 = 0.9;
constexpr Real kAdamBeta2 = 0.999;
constexpr Real kAdamEps = 1e-8;

std::string format_value(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Real parse_real(const std::string& s) {
  std::size_t pos = 0;
  const Real v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

long parse_long(const std::string& s) {
  std::size_t pos = 0;
  const long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument(s);
}

}  // namespace

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoGraph: return "no-graph";
    case Ablation::NoCl: return "no-cl";
    case Ablation::NoFeatureCl: return "no-feature-cl";
    case Ablation::NoInterestCl: return "no-interest-cl";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "no-graph") return Ablation::NoGraph;
  if (s == "no-cl") return Ablation::NoCl;
  if (s == "no-feature-cl") return Ablation::NoFeatureCl;
  if (s == "no-interest-cl") return Ablation::NoInterestCl;
  throw ConfigError("unknown ablation '" + s +
                    "' (expected full|no-graph|no-cl|no-feature-cl|no-interest-cl)");
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ParamError("config: lr must be positive");
  if (batch < 1) throw ParamError("config: batch must be >= 1");
  if (dim < 1) throw ParamError("config: dim must be >= 1");
  if (layers < 0) throw ParamError("config: layers must be >= 0");
  if (tau <= 0.0) throw ParamError("config: tau must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw ParamError("config: alpha must be in [0,1]");
  if (negatives < 0) throw ParamError("config: negatives must be >= 0");
  if (topk_neighbors < 1) throw ParamError("config: topk_neighbors must be >= 1");
  if (max_epochs < 1) throw ParamError("config: max_epochs must be >= 1");
  if (patience < 1) throw ParamError("config: patience must be >= 1");
}

Hyper TrainConfig::hyper() const {
  Hyper h;
  h.alpha = alpha;
  h.beta = beta;
  h.gamma = gamma;
  h.tau = tau;
  h.negatives = negatives;
  h.layers = layers;
  h.attend_positioned = attend_positioned;
  switch (ablation) {
    case Ablation::Full: break;
    case Ablation::NoGraph: h.layers = 0; break;
    case Ablation::NoCl: h.beta = 0.0; h.gamma = 0.0; break;
    case Ablation::NoFeatureCl: h.gamma = 0.0; break;
    case Ablation::NoInterestCl: h.beta = 0.0; break;
  }
  return h;
}

std::map<std::string, std::string> config_to_map(const TrainConfig& c) {
  std::map<std::string, std::string> m;
  m["lr"] = format_value(c.lr);
  m["batch"] = std::to_string(c.batch);
  m["dim"] = std::to_string(c.dim);
  m["layers"] = std::to_string(c.layers);
  m["tau"] = format_value(c.tau);
  m["alpha"] = format_value(c.alpha);
  m["beta"] = format_value(c.beta);
  m["gamma"] = format_value(c.gamma);
  m["negatives"] = std::to_string(c.negatives);
  m["topk_neighbors"] = std::to_string(c.topk_neighbors);
  m["max_epochs"] = std::to_string(c.max_epochs);
  m["patience"] = std::to_string(c.patience);
  m["seed"] = std::to_string(c.seed);
  m["ablation"] = to_string(c.ablation);
  m["attend_positioned"] = c.attend_positioned ? "true" : "false";
  m["allow_repeats"] = c.allow_repeats ? "true" : "false";
  m["keep_co_diagonal"] = c.keep_co_diagonal ? "true" : "false";
  return m;
}

TrainConfig config_from_map(const std::map<std::string, std::string>& values, TrainConfig base) {
  const std::map<std::string, std::string> defaults = config_to_map(TrainConfig{});
  for (const auto& [key, value] : values) {
    const auto it = defaults.find(key);
    if (it == defaults.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      if (key == "lr") base.lr = parse_real(value);
      else if (key == "batch") base.batch = static_cast<int>(parse_long(value));
      else if (key == "dim") base.dim = static_cast<int>(parse_long(value));
      else if (key == "layers") base.layers = static_cast<int>(parse_long(value));
      else if (key == "tau") base.tau = parse_real(value);
      else if (key == "alpha") base.alpha = parse_real(value);
      else if (key == "beta") base.beta = parse_real(value);
      else if (key == "gamma") base.gamma = parse_real(value);
      else if (key == "negatives") base.negatives = static_cast<int>(parse_long(value));
      else if (key == "topk_neighbors") base.topk_neighbors = static_cast<int>(parse_long(value));
      else if (key == "max_epochs") base.max_epochs = static_cast<int>(parse_long(value));
      else if (key == "patience") base.patience = static_cast<int>(parse_long(value));
      else if (key == "seed") base.seed = parse_u64(value);
      else if (key == "ablation") base.ablation = ablation_from_string(value);
      else if (key == "attend_positioned") base.attend_positioned = parse_bool(value);
      else if (key == "allow_repeats") base.allow_repeats = parse_bool(value);
      else if (key == "keep_co_diagonal") base.keep_co_diagonal = parse_bool(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("invalid value '" + value + "' for config key '" + key +
                        "' (default " + it->second + ")");
    }
  }
  return base;
}

OptimizerState OptimizerState::zeros(Eigen::Index users, Eigen::Index items, Eigen::Index dim) {
  OptimizerState st;
  st.first_moment = ModelParams::zeros(users, items, dim);
  st.second_moment = ModelParams::zeros(users, items, dim);
  st.step = 0;
  return st;
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, Real lr) {
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
  state.step += 1;
  const Real bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<Real>(state.step));
  const Real bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<Real>(state.step));
  const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = (kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * g.array().square()).matrix();
    p.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + kAdamEps);
  };
  update(params.user_emb, grads.user_emb, state.first_moment.user_emb,
         state.second_moment.user_emb);
  update(params.item_emb, grads.item_emb, state.first_moment.item_emb,
         state.second_moment.item_emb);
  update(params.pos_emb, grads.pos_emb, state.first_moment.pos_emb, state.second_moment.pos_emb);
  update(params.attn_hidden, grads.attn_hidden, state.first_moment.attn_hidden,
         state.second_moment.attn_hidden);
  update(params.attn_score, grads.attn_score, state.first_moment.attn_score,
         state.second_moment.attn_score);
  update(params.query_transform, grads.query_transform, state.first_moment.query_transform,
         state.second_moment.query_transform);
  for (auto member :
       {&ProjectionHead::w_in, &ProjectionHead::w_out}) {
    update(params.interest_head.*member, grads.interest_head.*member,
           state.first_moment.interest_head.*member, state.second_moment.interest_head.*member);
    update(params.feature_head.*member, grads.feature_head.*member,
           state.first_moment.feature_head.*member, state.second_moment.feature_head.*member);
  }
  for (auto member : {&ProjectionHead::b_in, &ProjectionHead::b_out}) {
    update(params.interest_head.*member, grads.interest_head.*member,
           state.first_moment.interest_head.*member, state.second_moment.interest_head.*member);
    update(params.feature_head.*member, grads.feature_head.*member,
           state.first_moment.feature_head.*member, state.second_moment.feature_head.*member);
  }
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, const EpochCallback& on_epoch,
                  const Checkpoint* resume) {
  config.validate();
  const auto train_users = corpus.users_in(Split::Train);
  const auto val_users = corpus.users_in(Split::Val);
  if (train_users.empty() || val_users.empty())
    throw ParamError("train: corpus needs non-empty train and val splits");
  if (resume != nullptr && resume->config.dim != config.dim)
    throw CheckpointError("resume checkpoint dim does not match config");

  const Graphs graphs = build_graphs(corpus, config.topk_neighbors, config.keep_co_diagonal);
  const std::vector<TrainSample> samples = make_train_samples(corpus);
  const EvalSet val_cases = make_eval_cases(corpus, Split::Val);
  const Hyper hyper = config.hyper();

  ModelParams params = [&] {
    if (resume != nullptr) return resume->params;
    Rng init_rng = substream(config.seed, "init");
    return ModelParams::init(corpus.num_users(), corpus.num_items(), config.dim, init_rng);
  }();
  OptimizerState opt = resume != nullptr
                           ? resume->opt
                           : OptimizerState::zeros(corpus.num_users(), corpus.num_items(),
                                                   config.dim);

  TrainResult result;
  result.best_params = params;
  Real best_val = resume != nullptr ? resume->best_val
                                    : -std::numeric_limits<Real>::infinity();
  int since_improvement = resume != nullptr ? resume->epochs_since_improvement : 0;
  const int start_epoch = resume != nullptr ? resume->next_epoch : 0;

  std::vector<std::size_t> order(samples.size());
  const std::vector<int> val_cutoff{50};
  for (int epoch = start_epoch; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = substream(config.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    Real sum_p = 0.0, sum_il = 0.0, sum_fl = 0.0;
    std::vector<TrainSample> batch;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(samples[order[i]]);
      const std::uint64_t neg_seed =
          substream(config.seed, "negatives", static_cast<std::uint64_t>(epoch), batch_index)
              .next();
      const LossBundle bundle = joint_loss_and_grads(params, batch, graphs, hyper, neg_seed);
      adam_step(params, bundle.grads, opt, config.lr);
      sum_p += bundle.prediction;
      sum_il += bundle.interest_contrast;
      sum_fl += bundle.feature_contrast;
    }

    const MetricsReport report =
        evaluate(params, val_cases, val_cutoff, config.allow_repeats, config.attend_positioned);
    EpochStats stats;
    stats.epoch = epoch;
    const Real n = static_cast<Real>(samples.size());
    stats.loss_p = sum_p / n;
    stats.loss_il = sum_il / n;
    stats.loss_fl = sum_fl / n;
    stats.val_recall50 = report.recall_at_cutoff(50);
    result.history.push_back(stats);

    if (stats.val_recall50 > best_val) {
      best_val = stats.val_recall50;
      result.best_params = params;
      result.best_epoch = epoch;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (on_epoch) {
      on_epoch(TrainSnapshot{stats, params, opt, epoch + 1, best_val, since_improvement});
    }
    if (since_improvement >= config.patience) break;
  }
  result.best_val = best_val;
  if (!params.all_finite()) throw NumericError("train: parameters became non-finite");
  return result;
}

// --- checkpoint io ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'C', 'L', 'S', 'R', 'C', 'K', '1'};

void write_bytes(std::ostream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

template <class T>
void write_pod(std::ostream& out, T value) {
  write_bytes(out, &value, sizeof(value));
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  write_bytes(out, s.data(), s.size());
}

void read_bytes(std::istream& in, void* data, std::size_t size) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (!in) throw CheckpointError("checkpoint truncated");
}

template <class T>
T read_pod(std::istream& in) {
  T value;
  read_bytes(in, &value, sizeof(value));
  return value;
}

std::string read_string(std::istream& in) {
  const auto size = read_pod<std::uint64_t>(in);
  if (size > (1ULL << 30)) throw CheckpointError("checkpoint string too large");
  std::string s(size, '\0');
  read_bytes(in, s.data(), size);
  return s;
}

void write_tensor(std::ostream& out, const std::string& name, const Mat& m) {
  write_string(out, name);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  write_bytes(out, m.data(), sizeof(Real) * static_cast<std::size_t>(m.size()));
}

void write_tensor(std::ostream& out, const std::string& name, const Vec& v) {
  write_string(out, name);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  write_pod<std::uint64_t>(out, 1);
  write_bytes(out, v.data(), sizeof(Real) * static_cast<std::size_t>(v.size()));
}

void read_tensor(std::istream& in, const std::string& expected_name, Mat& m) {
  const std::string name = read_string(in);
  if (name != expected_name)
    throw CheckpointError("checkpoint tensor order mismatch: expected '" + expected_name +
                          "', found '" + name + "'");
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  read_bytes(in, m.data(), sizeof(Real) * static_cast<std::size_t>(m.size()));
}

void read_tensor(std::istream& in, const std::string& expected_name, Vec& v) {
  const std::string name = read_string(in);
  if (name != expected_name)
    throw CheckpointError("checkpoint tensor order mismatch: expected '" + expected_name +
                          "', found '" + name + "'");
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  if (cols != 1) throw CheckpointError("checkpoint tensor '" + expected_name + "' is not a vector");
  v.resize(static_cast<Eigen::Index>(rows));
  read_bytes(in, v.data(), sizeof(Real) * static_cast<std::size_t>(v.size()));
}

void write_params(std::ostream& out, const std::string& prefix, const ModelParams& p) {
  for_each_tensor(p, [&](const char* name, const auto& t) {
    write_tensor(out, prefix + name, t);
  });
}

void read_params(std::istream& in, const std::string& prefix, ModelParams& p) {
  for_each_tensor(p, [&](const char* name, auto& t) { read_tensor(in, prefix + name, t); });
}

void check_shapes(const ModelParams& p, const TrainConfig& config) {
  const Eigen::Index d = config.dim;
  const bool ok = p.item_emb.cols() == d && p.user_emb.cols() == d &&
                  p.pos_emb.rows() == kMaxPrefixLen && p.pos_emb.cols() == d &&
                  p.attn_hidden.rows() == 4 * d && p.attn_hidden.cols() == d &&
                  p.attn_score.size() == 4 * d && p.query_transform.rows() == d &&
                  p.query_transform.cols() == d;
  if (!ok) throw CheckpointError("checkpoint tensor shapes incompatible with dim " +
                                 std::to_string(config.dim));
}

std::string serialize_config(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& [key, value] : config_to_map(config)) out << key << " = " << value << '\n';
  return out.str();
}

TrainConfig deserialize_config(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("bad config line in checkpoint");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    values[key] = value;
  }
  return config_from_map(values);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  write_bytes(out, kMagic, sizeof(kMagic));
  write_string(out, serialize_config(checkpoint.config));
  write_pod<std::int32_t>(out, checkpoint.next_epoch);
  write_pod<Real>(out, checkpoint.best_val);
  write_pod<std::int32_t>(out, checkpoint.epochs_since_improvement);
  write_pod<std::int64_t>(out, checkpoint.opt.step);
  write_params(out, "", checkpoint.params);
  write_params(out, "m.", checkpoint.opt.first_moment);
  write_params(out, "v.", checkpoint.opt.second_moment);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint for reading: " + path);
  char magic[sizeof(kMagic)];
  read_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  Checkpoint ckpt;
  ckpt.config = deserialize_config(read_string(in));
  ckpt.next_epoch = read_pod<std::int32_t>(in);
  ckpt.best_val = read_pod<Real>(in);
  ckpt.epochs_since_improvement = read_pod<std::int32_t>(in);
  const std::int64_t step = read_pod<std::int64_t>(in);
  read_params(in, "", ckpt.params);
  check_shapes(ckpt.params, ckpt.config);
  ckpt.opt = OptimizerState::zeros(ckpt.params.num_users(), ckpt.params.num_items(),
                                   ckpt.params.dim());
  ckpt.opt.step = step;
  read_params(in, "m.", ckpt.opt.first_moment);
  read_params(in, "v.", ckpt.opt.second_moment);
  return ckpt;
}

}  // namespace mclsr
