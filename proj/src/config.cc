#include "gss/config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace gss {
namespace {

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error("config_parse", "bad value '" + text + "' for " + key);
  }
  return value;
}

// Shortest form that parses back to the same value.
template <typename T>
std::string Format(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Binding {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
Binding Number(const std::string& key, T& field) {
  return {key, [&field] { return Format(field); },
          [&field, key](const std::string& v) { field = ParseNumber<T>(key, v); }};
}

std::vector<Binding> Bindings(ConfigBundle& b) {
  ExperimentConfig& e = b.experiment;
  if (!e.stage1.ft) e.stage1.ft = FtConfig{};
  if (!e.stage1.tf) e.stage1.tf = TfConfig{};
  FtConfig& ft = *e.stage1.ft;
  TfConfig& tf = *e.stage1.tf;
  WindowTrainOptions& aux = e.stage2.auxiliary;
  PredictorOptions& pred = e.stage2.predictor;
  return {
      Number("seed", e.seed),
      Number("data.width", e.data.width),
      Number("data.height", e.data.height),
      Number("data.classes", e.data.num_classes),
      Number("data.train", e.data.train_count),
      Number("data.test", e.data.test_count),
      Number("data.min_shapes", e.data.min_shapes),
      Number("data.max_shapes", e.data.max_shapes),
      Number("data.noise_sigma", e.data.noise_sigma),
      Number("data.unlabeled_fraction", e.data.unlabeled_fraction),
      {"stage1.variant", [&e] { return VariantName(e.stage1.variant); },
       [&e](const std::string& v) { e.stage1.variant = ParseVariant(v); }},
      {"stage1.decode", [&e] { return DecodeRuleName(e.stage1.linear_rule); },
       [&e](const std::string& v) { e.stage1.linear_rule = ParseDecodeRule(v); }},
      Number("stage1.holdout", e.stage1_holdout),
      Number("vq.patch", e.stage1.vq.patch),
      Number("vq.vocab", e.stage1.vq.vocab),
      Number("vq.max_iters", e.stage1.vq.max_iters),
      Number("vq.tol", e.stage1.vq.tol),
      Number("ft.window", ft.window),
      Number("ft.epochs", ft.epochs),
      Number("ft.lr", ft.learning_rate),
      Number("ft.batch", ft.batch_size),
      Number("ft.max_pixels", ft.max_pixels),
      Number("ft.noise_sigma", ft.noise_sigma),
      Number("tf.steps", tf.steps),
      Number("tf.lr", tf.learning_rate),
      Number("tf.gumbel", tf.gumbel_scale),
      Number("tf.bound_ratio", tf.bound_ratio),
      Number("tf.batch_maps", tf.batch_maps),
      {"tf.estimator",
       [&tf] { return tf.estimator.kind == QuantizerGradient::Kind::kSoft ? "soft" : "identity"; },
       [&tf](const std::string& v) {
         if (v == "soft") {
           tf.estimator.kind = QuantizerGradient::Kind::kSoft;
         } else if (v == "identity") {
           tf.estimator.kind = QuantizerGradient::Kind::kIdentity;
         } else {
           throw Error("config_parse", "unknown estimator '" + v + "'");
         }
       }},
      Number("tf.temperature", tf.estimator.temperature),
      Number("aux.window", aux.window),
      Number("aux.epochs", aux.epochs),
      Number("aux.lr", aux.learning_rate),
      Number("aux.batch", aux.batch_size),
      Number("aux.max_pixels", aux.max_pixels),
      Number("predictor.epochs", pred.epochs),
      Number("predictor.lr", pred.learning_rate),
      Number("predictor.batch", pred.batch_size),
      Number("predictor.momentum", pred.momentum),
      Number("predictor.weight_decay", pred.weight_decay),
      Number("predictor.hidden", pred.hidden),
      Number("predictor.hidden_units", pred.hidden_units),
      {"stage2.unlabeled", [&e] { return UnlabeledModeName(e.stage2.unlabeled); },
       [&e](const std::string& v) { e.stage2.unlabeled = ParseUnlabeledMode(v); }},
      Number("repro.table1_seeds", b.repro.table1_seeds),
      Number("repro.table3_seeds", b.repro.table3_seeds),
      Number("repro.table3_unlabeled", b.repro.table3_unlabeled),
  };
}

}  // namespace

KeyValues ParseKeyValues(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config_parse", "line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw Error("config_parse", "line " + std::to_string(number) + ": empty key or value");
    }
    out[key] = value;
  }
  return out;
}

KeyValues ReadKeyValueFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config_parse", "cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseKeyValues(buffer.str());
}

void ApplyConfig(ConfigBundle& bundle, const KeyValues& values) {
  std::vector<Binding> bindings = Bindings(bundle);
  for (const auto& [key, value] : values) {
    auto it = std::find_if(bindings.begin(), bindings.end(),
                           [&key](const Binding& b) { return b.key == key; });
    if (it == bindings.end()) throw Error("config_parse", "unknown key '" + key + "'");
    it->set(value);
  }
  const ExperimentConfig& e = bundle.experiment;
  if (e.stage1_holdout <= 0.0 || e.stage1_holdout >= 1.0) {
    throw Error("config_parse", "stage1.holdout must lie in (0, 1)");
  }
  if (e.stage1.vq.patch < 1 || e.stage1.vq.vocab < 1) {
    throw Error("config_parse", "vq.patch and vq.vocab must be positive");
  }
}

std::string DumpConfig(const ConfigBundle& bundle) {
  ConfigBundle copy = bundle;
  std::string out;
  for (const Binding& b : Bindings(copy)) out += b.key + " = " + b.get() + "\n";
  return out;
}

}  // namespace gss
