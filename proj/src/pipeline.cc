#include "gss/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gss/codec.h"
#include "gss/metrics.h"
#include "gss/vq.h"

namespace gss {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Junk mode: the sentinel becomes a regular class K of a K + 1 class map.
LabelMap WithJunkClass(const LabelMap& map) {
  LabelMap out(map.width, map.height, map.num_classes + 1);
  out.labels = map.labels;
  return out;
}

// 1 for cells without unlabeled pixels.
std::vector<uint8_t> FullyLabeledCells(const LabelMap& map, int patch) {
  const int gw = map.width / patch;
  const int gh = map.height / patch;
  std::vector<uint8_t> ok(static_cast<size_t>(gw) * gh, 1);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (map.at(x, y) == map.num_classes) ok[static_cast<size_t>(y / patch) * gw + x / patch] = 0;
    }
  }
  return ok;
}

nlohmann::ordered_json SweepEntry(const std::vector<double>& values) {
  nlohmann::ordered_json j;
  j["miou"] = values;
  j["median"] = Median(values);
  return j;
}

}  // namespace

InferResult Infer(const RgbImage& image, const TokenPredictor& predictor,
                  const Stage1Artifacts& artifacts) {
  if (predictor.patch != artifacts.codebook.patch || predictor.vocab != artifacts.codebook.vocab) {
    throw Error("shape_mismatch", "predictor does not match the stage I codebook");
  }
  InferResult out;
  out.tokens = PredictTokens(predictor, image);
  out.maskige = Detokenize(out.tokens, artifacts.codebook);
  out.labels = DecodeMaskige(out.maskige, artifacts);
  return out;
}

std::string UnlabeledModeName(UnlabeledMode mode) {
  return mode == UnlabeledMode::kAuxiliary ? "auxiliary" : "junk";
}

UnlabeledMode ParseUnlabeledMode(const std::string& name) {
  if (name == "auxiliary") return UnlabeledMode::kAuxiliary;
  if (name == "junk") return UnlabeledMode::kJunk;
  throw Error("config_parse", "unknown unlabeled mode '" + name + "'");
}

ExperimentConfig DefaultExperiment() {
  ExperimentConfig config;
  config.stage1.ft = FtConfig{};
  config.stage1.tf = TfConfig{};
  return config;
}

Dataset MakeDataset(const DataConfig& data, uint64_t seed) {
  SceneSpec spec = SceneSpec::Default(data.width, data.height, data.num_classes, data.noise_sigma,
                                      data.unlabeled_fraction, DeriveSeed(seed, "textures"));
  spec.min_shapes = data.min_shapes;
  spec.max_shapes = data.max_shapes;
  Rng train_rng(DeriveSeed(seed, "train_split"));
  Rng test_rng(DeriveSeed(seed, "test_split"));
  Dataset out;
  out.train = GenerateScenes(spec, data.train_count, train_rng);
  out.test = GenerateScenes(spec, data.test_count, test_rng);
  return out;
}

LabelMap DropJunkClass(const LabelMap& map) {
  LabelMap out(map.width, map.height, map.num_classes - 1);
  out.labels = map.labels;
  for (int& l : out.labels) l = std::min(l, out.num_classes);
  return out;
}

PreparedMaps PrepareTrainingMaps(std::span<const Sample> train, const ExperimentConfig& config) {
  if (train.empty()) throw Error("empty_split", "empty split: train");
  const int k = train.front().labels.num_classes;
  PreparedMaps out;
  bool any_unlabeled = false;
  for (const Sample& s : train) {
    out.maps.push_back(s.labels);
    any_unlabeled = any_unlabeled || std::count(s.labels.labels.begin(), s.labels.labels.end(), k) > 0;
  }
  if (config.stage2.unlabeled == UnlabeledMode::kJunk) {
    for (LabelMap& m : out.maps) m = WithJunkClass(m);
  } else if (any_unlabeled) {
    std::vector<RgbImage> images;
    for (const Sample& s : train) images.push_back(s.image);
    Rng rng(DeriveSeed(config.seed, "auxiliary"));
    out.head = TrainAuxiliary(images, out.maps, config.stage2.auxiliary, rng).model;
    for (size_t i = 0; i < out.maps.size(); ++i) {
      out.maps[i] = ComposeLabels(out.maps[i], PredictLabels(*out.head, images[i])).labels;
    }
  }
  return out;
}

Stage1Artifacts FitStage1(std::span<const LabelMap> maps, const ExperimentConfig& config) {
  if (maps.empty()) throw Error("empty_split", "empty split: train");
  Stage1Config s1 = config.stage1;
  s1.seed = DeriveSeed(config.seed, "stage1");
  if (maps.size() == 1) return RunStage1(maps, maps, s1);
  const size_t holdout = std::clamp<size_t>(
      static_cast<size_t>(std::llround(config.stage1_holdout * static_cast<double>(maps.size()))), 1,
      maps.size() - 1);
  return RunStage1(maps.first(maps.size() - holdout), maps.last(holdout), s1);
}

TrainedTokenPredictor FitStage2(std::span<const Sample> train, std::span<const LabelMap> maps,
                                const Stage1Artifacts& stage1, const ExperimentConfig& config) {
  std::vector<RgbImage> images;
  for (const Sample& s : train) images.push_back(s.image);
  Rng rng(DeriveSeed(config.seed, "stage2"));
  return TrainTokenPredictor(images, maps, stage1, config.stage2.predictor, rng);
}

RunReport EvaluateRun(const Dataset& data, const ExperimentConfig& config, RunArtifacts* artifacts) {
  if (data.train.empty()) throw Error("empty_split", "empty split: train");
  if (data.test.empty()) throw Error("empty_split", "empty split: test");
  const auto start = Clock::now();

  RunReport report;
  report.variant = VariantName(config.stage1.variant);
  report.unlabeled_mode = UnlabeledModeName(config.stage2.unlabeled);
  report.seed = config.seed;
  for (const char* name : {"auxiliary", "stage1", "stage2"}) {
    report.component_seeds[name] = DeriveSeed(config.seed, name);
  }

  auto phase = Clock::now();
  PreparedMaps prepared = PrepareTrainingMaps(data.train, config);
  report.timings["auxiliary"] = SecondsSince(phase);

  phase = Clock::now();
  Stage1Artifacts stage1 = FitStage1(prepared.maps, config);
  report.stage1_miou = stage1.report.miou;
  report.stage1_macc = stage1.report.macc;
  report.stage1_gradient_steps = stage1.gradient_steps;
  report.kmeans_monotone = NonIncreasing(stage1.quantize_report.objective);
  report.vocab = stage1.codebook.vocab;
  report.timings["stage1"] = SecondsSince(phase);

  phase = Clock::now();
  TrainedTokenPredictor predictor = FitStage2(data.train, prepared.maps, stage1, config);
  report.predictor_initial_loss = predictor.initial_loss;
  report.predictor_final_loss = predictor.final_loss();
  report.predictor_hidden = predictor.model.hidden;
  report.timings["stage2"] = SecondsSince(phase);

  phase = Clock::now();
  ScoreTestSplit(data.test, stage1, predictor.model, report);
  report.timings["inference"] = SecondsSince(phase);
  report.timings["total"] = SecondsSince(start);

  if (artifacts) {
    artifacts->stage1 = std::move(stage1);
    artifacts->auxiliary = std::move(prepared.head);
    artifacts->predictor = std::move(predictor.model);
  }
  return report;
}

void ScoreTestSplit(std::span<const Sample> test, const Stage1Artifacts& artifacts,
                    const TokenPredictor& predictor, RunReport& report) {
  if (test.empty()) throw Error("empty_split", "empty split: test");
  const int k = test.front().labels.num_classes;
  const bool junk = artifacts.palette.num_classes() == k + 1;
  if (!junk && artifacts.palette.num_classes() != k) {
    throw Error("class_count_mismatch", "artifacts and test maps disagree on K");
  }
  ConfusionMatrix confusion(k);
  long token_hits = 0;
  long token_cells = 0;
  const int patch = artifacts.codebook.patch;
  for (const Sample& s : test) {
    const InferResult r = Infer(s.image, predictor, artifacts);
    confusion.Add(junk ? DropJunkClass(r.labels) : r.labels, s.labels);

    const std::vector<uint8_t> ok = FullyLabeledCells(s.labels, patch);
    LabelMap filled = junk ? WithJunkClass(s.labels) : s.labels;
    if (!junk) {
      for (int& l : filled.labels) l = l == k ? 0 : l;
    }
    const std::vector<int> target = TokenTargets(filled, artifacts);
    for (size_t c = 0; c < ok.size(); ++c) {
      if (!ok[c]) continue;
      ++token_cells;
      token_hits += target[c] == r.tokens.tokens[c];
    }
  }
  report.miou = MeanIou(confusion);
  report.macc = MeanAccuracy(confusion);
  report.pixel_accuracy = PixelAccuracy(confusion);
  report.per_class_iou = PerClassIou(confusion);
  report.token_accuracy =
      token_cells > 0 ? static_cast<double>(token_hits) / static_cast<double>(token_cells) : 0.0;
}

nlohmann::ordered_json ToJson(const RunReport& report, bool with_timings) {
  nlohmann::ordered_json j;
  j["variant"] = report.variant;
  j["unlabeled_mode"] = report.unlabeled_mode;
  j["miou"] = report.miou;
  j["macc"] = report.macc;
  j["pixel_accuracy"] = report.pixel_accuracy;
  j["per_class_iou"] = report.per_class_iou;
  j["token_accuracy"] = report.token_accuracy;
  j["stage1_miou"] = report.stage1_miou;
  j["stage1_macc"] = report.stage1_macc;
  j["stage1_gradient_steps"] = report.stage1_gradient_steps;
  j["predictor_initial_loss"] = report.predictor_initial_loss;
  j["predictor_final_loss"] = report.predictor_final_loss;
  j["predictor_hidden"] = report.predictor_hidden;
  j["vocab"] = report.vocab;
  j["kmeans_monotone"] = report.kmeans_monotone;
  j["miou_averaging"] = "classes present in ground truth";
  j["seed"] = report.seed;
  j["component_seeds"] = report.component_seeds;
  if (with_timings) j["timings"] = report.timings;
  return j;
}

double Median(std::vector<double> values) {
  if (values.empty()) throw Error("empty_samples", "median of nothing");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

bool NonIncreasing(const std::vector<double>& values) {
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[i - 1]) return false;
  }
  return true;
}

nlohmann::ordered_json Repro(const ExperimentConfig& config, const ReproOptions& options) {
  nlohmann::ordered_json out;
  nlohmann::ordered_json timings;
  out["seed"] = config.seed;
  bool monotone = true;

  DataConfig clean = config.data;
  clean.unlabeled_fraction = 0.0;
  const Dataset dataset = MakeDataset(clean, DeriveSeed(config.seed, "dataset"));

  if (options.run_table1) {
    const auto start = Clock::now();
    std::vector<LabelMap> train;
    std::vector<LabelMap> test;
    for (const Sample& s : dataset.train) train.push_back(s.labels);
    for (const Sample& s : dataset.test) test.push_back(s.labels);
    nlohmann::ordered_json table;
    std::vector<uint64_t> seeds;
    std::map<std::string, std::vector<double>> miou;
    std::map<std::string, std::vector<long>> steps;
    const Variant variants[] = {Variant::kFF, Variant::kFFR, Variant::kFT};
    for (int i = 0; i < options.table1_seeds; ++i) {
      const uint64_t seed = DeriveSeed(config.seed, "table1/" + std::to_string(i));
      seeds.push_back(seed);
      for (Variant v : variants) {
        Stage1Config s1 = config.stage1;
        s1.variant = v;
        s1.seed = seed;
        if (!s1.ft) s1.ft = FtConfig{};
        const Stage1Artifacts art = RunStage1(train, test, s1);
        miou[VariantName(v)].push_back(art.report.miou);
        steps[VariantName(v)].push_back(art.gradient_steps);
        monotone = monotone && NonIncreasing(art.quantize_report.objective);
      }
    }
    table["seeds"] = seeds;
    for (Variant v : variants) {
      nlohmann::ordered_json entry = SweepEntry(miou[VariantName(v)]);
      entry["gradient_steps"] = steps[VariantName(v)];
      table[VariantName(v)] = entry;
    }
    const auto zero = [&](const char* name) {
      return std::all_of(steps[name].begin(), steps[name].end(), [](long s) { return s == 0; });
    };
    table["ff_above_ffr"] = Median(miou["FF"]) > Median(miou["FF-R"]);
    table["ft_at_least_ff"] = Median(miou["FT"]) >= Median(miou["FF"]);
    table["zero_training"] = zero("FF") && zero("FF-R");
    out["table1"] = table;
    timings["table1"] = SecondsSince(start);
  }

  if (options.run_table3) {
    const auto start = Clock::now();
    DataConfig partial = config.data;
    partial.unlabeled_fraction = options.table3_unlabeled;
    const Dataset ablation = MakeDataset(partial, DeriveSeed(config.seed, "dataset_unlabeled"));
    nlohmann::ordered_json table;
    std::vector<uint64_t> seeds;
    std::vector<double> aux, junk;
    for (int i = 0; i < options.table3_seeds; ++i) {
      ExperimentConfig run = config;
      run.seed = DeriveSeed(config.seed, "table3/" + std::to_string(i));
      seeds.push_back(run.seed);
      run.stage2.unlabeled = UnlabeledMode::kAuxiliary;
      const RunReport with_aux = EvaluateRun(ablation, run);
      run.stage2.unlabeled = UnlabeledMode::kJunk;
      const RunReport with_junk = EvaluateRun(ablation, run);
      aux.push_back(with_aux.miou);
      junk.push_back(with_junk.miou);
      monotone = monotone && with_aux.kmeans_monotone && with_junk.kmeans_monotone;
    }
    table["unlabeled_fraction"] = options.table3_unlabeled;
    table["seeds"] = seeds;
    table["auxiliary"] = SweepEntry(aux);
    table["junk"] = SweepEntry(junk);
    table["auxiliary_at_least_junk"] = Median(aux) >= Median(junk);
    out["table3"] = table;
    timings["table3"] = SecondsSince(start);
  }

  if (options.run_end_to_end) {
    const auto start = Clock::now();
    ExperimentConfig run = config;
    run.seed = DeriveSeed(config.seed, "end_to_end");
    const RunReport report = EvaluateRun(dataset, run);
    out["end_to_end"] = ToJson(report, false);
    monotone = monotone && report.kmeans_monotone;
    timings["end_to_end"] = report.timings;
    timings["end_to_end"]["wall"] = SecondsSince(start);

    // Per-pixel classifier on the same split with the auxiliary head's
    // architecture and options.
    const auto baseline_start = Clock::now();
    std::vector<RgbImage> images;
    std::vector<LabelMap> labels;
    for (const Sample& s : dataset.train) {
      images.push_back(s.image);
      labels.push_back(s.labels);
    }
    Rng rng(DeriveSeed(config.seed, "discriminative"));
    const TrainedWindowClassifier baseline =
        DiscriminativeBaseline(images, labels, config.stage2.auxiliary, rng);
    ConfusionMatrix confusion(dataset.test.front().labels.num_classes);
    for (const Sample& s : dataset.test) confusion.Add(PredictLabels(baseline.model, s.image), s.labels);
    nlohmann::ordered_json disc;
    disc["miou"] = MeanIou(confusion);
    disc["macc"] = MeanAccuracy(confusion);
    disc["miou_gap"] = report.miou - MeanIou(confusion);
    out["discriminative_baseline"] = disc;
    timings["discriminative_baseline"] = SecondsSince(baseline_start);
  }

  out["kmeans_monotone"] = monotone;
  out["timings"] = timings;
  return out;
}

}  // namespace gss
